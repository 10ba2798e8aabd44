//! Command-line front end.
//!
//! Exit status: 0 success, 1 usage error, 2 data or domain error, 3
//! numerical failure. Data goes to stdout or the named output file,
//! diagnostics to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::channel::{BankSet, ChannelConfig, ChannelVector};
use crate::decoder::{decode_point, DecodeParams, ModeEstimate};
use crate::error::{Error, ErrorKind, Result};
use crate::learner::{fit, predict_point, predict_with_floor, ChannelMap, TrainingSet, DEFAULT_RCOND};
use crate::testbed::{generate, read_csv, write_csv, SyntheticKind, SyntheticSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "chanrep", version, about = "Complex channel encoding, least-squares channel maps and multi-mode decoding")]
struct Cli {
    /// Suppress progress text on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode a point into a channel vector (JSON).
    Encode {
        #[command(flatten)]
        bank: BankArgs,
        /// Comma-separated coordinates, one per axis.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x: Vec<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Decode a channel vector (JSON) into modes.
    Decode {
        #[command(flatten)]
        bank: BankArgs,
        /// Channel vector JSON; stdin when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        decode: DecodeArgs,
    },
    /// Fit a channel map to a CSV dataset.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        ridge: f64,
        #[arg(long, default_value_t = DEFAULT_RCOND)]
        rcond: f64,
        #[command(flatten)]
        input: InBankArgs,
        #[command(flatten)]
        output: OutBankArgs,
    },
    /// Predict the output channel vector for one input point.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x: Vec<f64>,
        /// Print decoded modes per output axis instead of the raw vector.
        #[arg(long)]
        modes: bool,
        #[command(flatten)]
        decode: DecodeArgs,
    },
    /// Write a synthetic dataset as CSV.
    Demo {
        #[arg(long)]
        name: String,
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        input: InBankArgs,
        #[command(flatten)]
        output: OutBankArgs,
    },
    /// Score a model against a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Evaluate on a grid of this step across the data's input range,
        /// interpolating the true branches; default is the data points.
        #[arg(long)]
        grid: Option<f64>,
        /// Tolerance for counting a true value as recovered; default half the
        /// output spacing.
        #[arg(long)]
        match_tol: Option<f64>,
        #[command(flatten)]
        decode: DecodeArgs,
    },
    /// Emit decoded modes over a dense input grid as CSV.
    Plot {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// Output axis to plot (1-based).
        #[arg(long, default_value_t = 1)]
        axis: usize,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        decode: DecodeArgs,
    },
}

/// Bank parameters; each flag takes one value per axis, or a single value
/// shared by all axes.
#[derive(Debug, Args)]
struct BankArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    omega: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    spacing: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    count: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    overlap: Vec<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    origin: Vec<f64>,
}

#[derive(Debug, Args)]
struct InBankArgs {
    #[arg(id = "in_omega", long = "in-omega", value_delimiter = ',', required = true)]
    omega: Vec<f64>,
    #[arg(id = "in_spacing", long = "in-spacing", value_delimiter = ',', required = true)]
    spacing: Vec<f64>,
    #[arg(id = "in_count", long = "in-count", value_delimiter = ',', required = true)]
    count: Vec<usize>,
    #[arg(id = "in_overlap", long = "in-overlap", value_delimiter = ',', required = true)]
    overlap: Vec<usize>,
    #[arg(id = "in_origin", long = "in-origin", value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    origin: Vec<f64>,
}

#[derive(Debug, Args)]
struct OutBankArgs {
    #[arg(id = "out_omega", long = "out-omega", value_delimiter = ',', required = true)]
    omega: Vec<f64>,
    #[arg(id = "out_spacing", long = "out-spacing", value_delimiter = ',', required = true)]
    spacing: Vec<f64>,
    #[arg(id = "out_count", long = "out-count", value_delimiter = ',', required = true)]
    count: Vec<usize>,
    #[arg(id = "out_overlap", long = "out-overlap", value_delimiter = ',', required = true)]
    overlap: Vec<usize>,
    #[arg(id = "out_origin", long = "out-origin", value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    origin: Vec<f64>,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long)]
    coherence_min: Option<f64>,
    #[arg(long)]
    magnitude_floor: Option<f64>,
    #[arg(long)]
    merge_tol: Option<f64>,
    #[arg(long)]
    uniformity_min: Option<f64>,
}

impl DecodeArgs {
    fn params(&self) -> DecodeParams {
        let d = DecodeParams::default();
        DecodeParams {
            magnitude_floor: self.magnitude_floor.unwrap_or(d.magnitude_floor),
            coherence_min: self.coherence_min.unwrap_or(d.coherence_min),
            merge_tol: self.merge_tol.or(d.merge_tol),
            uniformity_min: self.uniformity_min.unwrap_or(d.uniformity_min),
        }
    }
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.into())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

struct Lists<'a> {
    omega: &'a [f64],
    spacing: &'a [f64],
    count: &'a [usize],
    overlap: &'a [usize],
    origin: &'a [f64],
}

fn pick<T: Copy>(list: &[T], axis: usize, name: &str, dim: usize) -> CliResult<T> {
    match list.len() {
        1 => Ok(list[0]),
        n if n == dim => Ok(list[axis]),
        n => Err(Failure::Usage(format!("--{name} has {n} values, expected 1 or {dim}"))),
    }
}

impl Lists<'_> {
    fn widest(&self) -> usize {
        [
            self.omega.len(),
            self.spacing.len(),
            self.count.len(),
            self.overlap.len(),
            self.origin.len(),
        ]
        .into_iter()
        .max()
        .unwrap_or(1)
    }

    fn banks(&self, prefix: &str, dim: usize) -> CliResult<BankSet> {
        let mut banks = Vec::with_capacity(dim);
        for axis in 0..dim {
            let cfg = ChannelConfig::new(
                pick(self.omega, axis, &format!("{prefix}omega"), dim)?,
                pick(self.spacing, axis, &format!("{prefix}spacing"), dim)?,
                pick(self.count, axis, &format!("{prefix}count"), dim)?,
                pick(self.overlap, axis, &format!("{prefix}overlap"), dim)?,
                pick(self.origin, axis, &format!("{prefix}origin"), dim)?,
            )
            .map_err(|e| e.on_axis(axis))?;
            banks.push(cfg);
        }
        Ok(BankSet::new(banks)?)
    }
}

impl BankArgs {
    fn lists(&self) -> Lists<'_> {
        Lists {
            omega: &self.omega,
            spacing: &self.spacing,
            count: &self.count,
            overlap: &self.overlap,
            origin: &self.origin,
        }
    }
}

impl InBankArgs {
    fn lists(&self) -> Lists<'_> {
        Lists {
            omega: &self.omega,
            spacing: &self.spacing,
            count: &self.count,
            overlap: &self.overlap,
            origin: &self.origin,
        }
    }
}

impl OutBankArgs {
    fn lists(&self) -> Lists<'_> {
        Lists {
            omega: &self.omega,
            spacing: &self.spacing,
            count: &self.count,
            overlap: &self.overlap,
            origin: &self.origin,
        }
    }
}

/// Runs the command line with the process's standard streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the command line against the given streams; `argv[0]` is the
/// program name.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            return match e.kind() {
                K::DisplayHelp | K::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    let mut progress = |msg: String| {
        if !cli.quiet {
            let _ = writeln!(err, "{msg}");
        }
    };
    match dispatch(&cli.command, out, &mut progress) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Run(e)) => {
            let _ = writeln!(err, "error: {e}");
            match e.kind() {
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Numerical => EXIT_NUMERICAL,
            }
        }
    }
}

fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => writeln!(out, "{text}")?,
    }
    Ok(())
}

fn read_data(path: &Path) -> CliResult<Vec<(Vec<f64>, Vec<f64>)>> {
    let pairs = read_csv(fs::File::open(path)?)?;
    if pairs.is_empty() {
        return Err(Error::EmptyTrainingSet.into());
    }
    Ok(pairs)
}

fn dispatch(cmd: &Command, out: &mut dyn Write, progress: &mut dyn FnMut(String)) -> CliResult<()> {
    match cmd {
        Command::Encode { bank, x, output } => {
            let banks = bank.lists().banks("", x.len())?;
            let v = banks.encode(x)?;
            emit(&v.to_json()?, output.as_deref(), out)
        }
        Command::Decode {
            bank,
            input,
            output,
            decode,
        } => {
            let lists = bank.lists();
            let banks = lists.banks("", lists.widest())?;
            let text = match input {
                Some(p) => fs::read_to_string(p)?,
                None => {
                    let mut s = String::new();
                    io::stdin().read_to_string(&mut s)?;
                    s
                }
            };
            let v = ChannelVector::from_json(&text)?;
            let modes = decode_point(&banks, &v, &decode.params())?;
            let json = if modes.len() == 1 {
                serde_json::to_string(&modes[0])
            } else {
                serde_json::to_string(&modes)
            }
            .map_err(Error::from)?;
            emit(&json, output.as_deref(), out)
        }
        Command::Fit {
            data,
            model,
            ridge,
            rcond,
            input,
            output,
        } => {
            let pairs = read_data(data)?;
            let (d, e) = (pairs[0].0.len(), pairs[0].1.len());
            let train = TrainingSet::new(input.lists().banks("in-", d)?, output.lists().banks("out-", e)?, pairs)?;
            let map = fit(&train, *ridge, *rcond)?;
            map.save(model)?;
            progress(format!(
                "fitted {}x{} map on {} pairs, wrote {}",
                map.matrix().nrows(),
                map.matrix().ncols(),
                train.len(),
                model.display()
            ));
            let report = serde_json::json!({ "residual": map.meta().residual });
            emit(&report.to_string(), None, out)
        }
        Command::Predict { model, x, modes, decode } => {
            let map = ChannelMap::load(model)?;
            let v = predict_point(&map, x)?;
            let text = if *modes {
                serde_json::to_string(&decode_point(map.output_banks(), &v, &decode.params())?)
                    .map_err(Error::from)?
            } else {
                v.to_json()?
            };
            emit(&text, None, out)
        }
        Command::Demo {
            name,
            samples,
            noise,
            seed,
            out: path,
            input,
            output,
        } => {
            let kind: SyntheticKind = name.parse()?;
            let (li, lo) = (input.lists(), output.lists());
            let spec = SyntheticSpec::new(kind, *samples, *noise, *seed);
            let set = generate(&spec, &li.banks("in-", li.widest())?, &lo.banks("out-", lo.widest())?)?;
            write_csv(set.pairs(), fs::File::create(path)?)?;
            progress(format!("wrote {} {} pairs to {}", set.len(), kind, path.display()));
            Ok(())
        }
        Command::Eval {
            model,
            data,
            grid,
            match_tol,
            decode,
        } => {
            let map = ChannelMap::load(model)?;
            let pairs = read_data(data)?;
            let report = evaluate(&map, &pairs, *grid, *match_tol, &decode.params())?;
            emit(&serde_json::to_string(&report).map_err(Error::from)?, None, out)
        }
        Command::Plot {
            model,
            data,
            points,
            axis,
            output,
            decode,
        } => {
            let map = ChannelMap::load(model)?;
            let pairs = read_data(data)?;
            let text = plot_csv(&map, &pairs, *points, *axis, &decode.params())?;
            match output {
                Some(p) => fs::write(p, text)?,
                None => write!(out, "{text}")?,
            }
            Ok(())
        }
    }
}

/// Summary printed by `eval`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    /// Number of evaluated input points.
    pub points: usize,
    /// Fraction of true output values matched by a decoded mode.
    pub mode_recall: f64,
    /// Per output axis, RMSE of matched modes for each branch, branches in
    /// ascending order of value.
    pub per_mode_rmse: Vec<Vec<Option<f64>>>,
    /// Mean over data pairs of `|u - C a|`.
    pub mean_residual: f64,
}

fn check_dims(map: &ChannelMap, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
    let (d, e) = (map.input_banks().dim(), map.output_banks().dim());
    for (x, y) in pairs {
        if x.len() != d || y.len() != e {
            return Err(Error::DimensionMismatch {
                expected: d + e,
                found: x.len() + y.len(),
            });
        }
    }
    Ok(())
}

// An input point with per-axis sorted true output values.
type Target = (Vec<f64>, Vec<Vec<f64>>);

// Groups pairs by exact input, in order of first appearance; each group
// holds per-axis sorted output values.
fn group_by_input(pairs: &[(Vec<f64>, Vec<f64>)]) -> Vec<Target> {
    let mut groups: Vec<Target> = Vec::new();
    for (x, y) in pairs {
        let idx = match groups.iter().position(|(gx, _)| gx == x) {
            Some(i) => i,
            None => {
                groups.push((x.clone(), vec![Vec::new(); y.len()]));
                groups.len() - 1
            }
        };
        for (axis, v) in y.iter().enumerate() {
            groups[idx].1[axis].push(*v);
        }
    }
    for (_, axes) in &mut groups {
        for vals in axes {
            vals.sort_by(f64::total_cmp);
        }
    }
    groups
}

fn grid_targets(groups: &[Target], step: f64) -> Result<Vec<Target>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidParam(format!("grid step must be > 0, got {step}")));
    }
    if groups[0].0.len() != 1 {
        return Err(Error::Format("grid evaluation needs a single input axis".into()));
    }
    let mut sorted: Vec<&Target> = groups.iter().collect();
    sorted.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
    let (lo, hi) = (sorted[0].0[0], sorted[sorted.len() - 1].0[0]);
    let mut targets = Vec::new();
    let mut i = 0usize;
    loop {
        let x = lo + i as f64 * step;
        if x > hi {
            break;
        }
        i += 1;
        let right = sorted.partition_point(|g| g.0[0] < x).min(sorted.len() - 1);
        let left = right.saturating_sub(1);
        let (a, b) = (sorted[left], sorted[right]);
        let same_shape = a.1.iter().zip(&b.1).all(|(va, vb)| va.len() == vb.len());
        let values = if left == right || !same_shape || b.0[0] == a.0[0] {
            let nearest = if (x - a.0[0]).abs() <= (b.0[0] - x).abs() { a } else { b };
            nearest.1.clone()
        } else {
            let w = (x - a.0[0]) / (b.0[0] - a.0[0]);
            a.1.iter()
                .zip(&b.1)
                .map(|(va, vb)| va.iter().zip(vb).map(|(p, q)| p + w * (q - p)).collect())
                .collect()
        };
        targets.push((vec![x], values));
    }
    Ok(targets)
}

// Greedy one-to-one assignment of true values to modes by distance.
fn assign(truth: &[f64], modes: &[ModeEstimate]) -> Vec<Option<f64>> {
    let mut candidates: Vec<(f64, usize, usize)> = truth
        .iter()
        .enumerate()
        .flat_map(|(j, t)| modes.iter().enumerate().map(move |(i, m)| ((m.value - t).abs(), j, i)))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut errors = vec![None; truth.len()];
    let mut used = vec![false; modes.len()];
    for (e, j, i) in candidates {
        if errors[j].is_none() && !used[i] {
            errors[j] = Some(e);
            used[i] = true;
        }
    }
    errors
}

/// Scores decoded predictions against the true output values of a dataset.
pub fn evaluate(
    map: &ChannelMap,
    pairs: &[(Vec<f64>, Vec<f64>)],
    grid: Option<f64>,
    match_tol: Option<f64>,
    params: &DecodeParams,
) -> Result<EvalReport> {
    check_dims(map, pairs)?;
    let groups = group_by_input(pairs);
    let targets = match grid {
        Some(step) => grid_targets(&groups, step)?,
        None => groups,
    };
    let out_banks = map.output_banks();
    let branches: Vec<usize> = (0..out_banks.dim())
        .map(|b| targets.iter().map(|t| t.1[b].len()).max().unwrap_or(0))
        .collect();
    let mut sq: Vec<Vec<(f64, usize)>> = branches.iter().map(|&n| vec![(0.0, 0); n]).collect();
    let (mut matched, mut total) = (0usize, 0usize);

    for (x, truth) in &targets {
        let modes = decode_point(out_banks, &predict_point(map, x)?, params)?;
        for (axis, (values, found)) in truth.iter().zip(&modes).enumerate() {
            let tol = match_tol.unwrap_or(out_banks.bank(axis).spacing() / 2.0);
            for (j, e) in assign(values, found).into_iter().enumerate() {
                total += 1;
                if let Some(e) = e {
                    sq[axis][j].0 += e * e;
                    sq[axis][j].1 += 1;
                    if e <= tol {
                        matched += 1;
                    }
                }
            }
        }
    }

    let mut residual_sum = 0.0;
    for (x, y) in pairs {
        let predicted = predict_with_floor(map, &map.input_banks().encode(x)?, 0.0)?;
        residual_sum += predicted.distance(&out_banks.encode(y)?)?;
    }

    Ok(EvalReport {
        points: targets.len(),
        mode_recall: if total == 0 { 0.0 } else { matched as f64 / total as f64 },
        per_mode_rmse: sq
            .into_iter()
            .map(|axis| {
                axis.into_iter()
                    .map(|(s, n)| (n > 0).then(|| (s / n as f64).sqrt()))
                    .collect()
            })
            .collect(),
        mean_residual: residual_sum / pairs.len() as f64,
    })
}

/// CSV `x,mode1,conf1,mode2,conf2,..` over `points` inputs spanning the
/// data's input range. Needs a single input axis.
pub fn plot_csv(
    map: &ChannelMap,
    pairs: &[(Vec<f64>, Vec<f64>)],
    points: usize,
    axis: usize,
    params: &DecodeParams,
) -> Result<String> {
    check_dims(map, pairs)?;
    if map.input_banks().dim() != 1 {
        return Err(Error::Format("plot needs a single input axis".into()));
    }
    if axis == 0 || axis > map.output_banks().dim() {
        return Err(Error::Format(format!(
            "output axis {axis} outside 1..={}",
            map.output_banks().dim()
        )));
    }
    if points < 2 {
        return Err(Error::InvalidParam("plot needs at least 2 points".into()));
    }
    let (lo, hi) = pairs
        .iter()
        .map(|p| p.0[0])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let mut rows = Vec::with_capacity(points);
    for i in 0..points {
        let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let mut modes = decode_point(map.output_banks(), &predict_point(map, &[x])?, params)?;
        rows.push((x, modes.swap_remove(axis - 1)));
    }
    let width = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
    let mut text = String::from("x");
    for j in 1..=width {
        text.push_str(&format!(",mode{j},conf{j}"));
    }
    text.push('\n');
    for (x, modes) in rows {
        text.push_str(&x.to_string());
        for j in 0..width {
            match modes.get(j) {
                Some(m) => text.push_str(&format!(",{},{}", m.value, m.confidence)),
                None => text.push_str(",,"),
            }
        }
        text.push('\n');
    }
    Ok(text)
}
