//! Synthetic aliased datasets and a brute-force decoding oracle.
//!
//! The generators place every input axis on the same diagonal parameter
//! `t in (0, 1)` and map each output axis onto a relation with one or two
//! branches. Inputs are exact; optional Gaussian noise goes on the outputs
//! only, so repeated inputs stay exactly repeated.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::{BankSet, ChannelConfig, ChannelVector};
use crate::decoder::ModeEstimate;
use crate::error::{Error, Result};
use crate::learner::TrainingSet;

/// Fraction of each bank's domain kept free at both ends.
const EDGE_MARGIN: f64 = 0.05;

/// An oracle peak must reach this fraction of the match a pure encoding
/// with the same peak magnitude would give.
pub const ORACLE_PEAK_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// `y = mid +- g(x)` with `g` a shifted square root.
    TwoBranch,
    /// `y = mid +- sqrt(r^2 - (x - cx)^2)`, scaled per axis.
    Circle,
    /// A smooth monotone function, no aliasing.
    SingleValued,
}

impl SyntheticKind {
    pub fn name(&self) -> &'static str {
        match self {
            SyntheticKind::TwoBranch => "two_branch",
            SyntheticKind::Circle => "circle",
            SyntheticKind::SingleValued => "single_valued",
        }
    }

    pub fn branches(&self) -> usize {
        match self {
            SyntheticKind::SingleValued => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_branch" => Ok(SyntheticKind::TwoBranch),
            "circle" => Ok(SyntheticKind::Circle),
            "single_valued" => Ok(SyntheticKind::SingleValued),
            other => Err(Error::Synthetic(format!("unknown dataset name {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub samples: usize,
    /// Standard deviation of the output noise, in output units.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, samples: usize, noise: f64, seed: u64) -> Self {
        SyntheticSpec {
            kind,
            samples,
            noise,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Synthetic("sample count must be at least 1".into()));
        }
        if !self.samples.is_multiple_of(self.kind.branches()) {
            return Err(Error::Synthetic(format!(
                "{} needs a sample count divisible by {}, got {}",
                self.kind,
                self.kind.branches(),
                self.samples
            )));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Synthetic(format!("noise must be >= 0, got {}", self.noise)));
        }
        Ok(())
    }
}

/// Where the generators put things inside the banks' domains.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLayout {
    /// Per input axis, the closed interval swept by `t in [0, 1]`.
    pub inputs: Vec<(f64, f64)>,
    /// Per output axis, `(center, radius)`.
    pub outputs: Vec<(f64, f64)>,
    out_domains: Vec<(f64, f64)>,
}

impl SyntheticLayout {
    pub fn new(banks_in: &BankSet, banks_out: &BankSet) -> Self {
        let inset = |cfg: &ChannelConfig| {
            let (lo, hi) = cfg.domain();
            let m = EDGE_MARGIN * (hi - lo);
            (lo + m, hi - m)
        };
        SyntheticLayout {
            inputs: banks_in.banks().iter().map(inset).collect(),
            outputs: banks_out
                .banks()
                .iter()
                .map(|cfg| {
                    let (a, b) = inset(cfg);
                    (0.5 * (a + b), 0.5 * (b - a))
                })
                .collect(),
            out_domains: banks_out.banks().iter().map(|c| c.domain()).collect(),
        }
    }

    pub fn input_point(&self, t: f64) -> Vec<f64> {
        self.inputs.iter().map(|&(a, b)| a + t * (b - a)).collect()
    }

    /// Noise-free outputs at parameter `t`, one vector per branch, upper
    /// branch first.
    pub fn branches(&self, kind: SyntheticKind, t: f64) -> Vec<Vec<f64>> {
        let axis = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { self.outputs.iter().map(|&(c, r)| f(c, r)).collect() };
        match kind {
            SyntheticKind::TwoBranch => {
                let g = 0.5 * (1.0 + 3.0 * t).sqrt();
                vec![axis(&|c, r| c + r * g), axis(&|c, r| c - r * g)]
            }
            SyntheticKind::Circle => {
                let s = 2.0 * t - 1.0;
                let h = (1.0 - s * s).max(0.0).sqrt();
                vec![axis(&|c, r| c + r * h), axis(&|c, r| c - r * h)]
            }
            SyntheticKind::SingleValued => {
                let h = (t + 0.1 * t * t) / 1.1;
                vec![axis(&|c, r| c - r + 2.0 * r * h)]
            }
        }
    }

    fn clamp_output(&self, axis: usize, y: f64) -> f64 {
        let (lo, hi) = self.out_domains[axis];
        y.clamp(lo, hi - 1e-12 * (hi - lo))
    }
}

fn check_separation(banks_out: &BankSet, layout: &SyntheticLayout, min_gap_factor: f64) -> Result<()> {
    for (axis, (cfg, &(_, r))) in banks_out.banks().iter().zip(&layout.outputs).enumerate() {
        let width = cfg.overlap() as f64 * cfg.spacing();
        if min_gap_factor * r <= width {
            return Err(Error::DomainTooNarrow(format!(
                "output axis {axis}: branch gap {} does not exceed one support width {width}",
                min_gap_factor * r
            )));
        }
    }
    Ok(())
}

fn generate_with(spec: &SyntheticSpec, banks_in: &BankSet, banks_out: &BankSet) -> Result<TrainingSet> {
    spec.validate()?;
    let layout = SyntheticLayout::new(banks_in, banks_out);
    match spec.kind {
        // narrowest gap between the branches: r for two_branch, 2r at the
        // circle's center
        SyntheticKind::TwoBranch => check_separation(banks_out, &layout, 1.0)?,
        SyntheticKind::Circle => check_separation(banks_out, &layout, 2.0)?,
        SyntheticKind::SingleValued => {}
    }
    let distinct = spec.samples / spec.kind.branches();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut pairs = Vec::with_capacity(spec.samples);
    for j in 0..distinct {
        let t = (j as f64 + 0.5) / distinct as f64;
        let x = layout.input_point(t);
        for branch in layout.branches(spec.kind, t) {
            let y = branch
                .into_iter()
                .enumerate()
                .map(|(axis, y)| {
                    if spec.noise > 0.0 {
                        layout.clamp_output(axis, y + spec.noise * normal.sample(&mut rng))
                    } else {
                        y
                    }
                })
                .collect();
            pairs.push((x.clone(), y));
        }
    }
    TrainingSet::new(banks_in.clone(), banks_out.clone(), pairs)
}

fn expect_kind(spec: &SyntheticSpec, kind: SyntheticKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::Synthetic(format!("spec names {}, expected {kind}", spec.kind)));
    }
    Ok(())
}

/// Each distinct input appears twice, once per branch.
pub fn gen_two_branch(spec: &SyntheticSpec, banks_in: &BankSet, banks_out: &BankSet) -> Result<TrainingSet> {
    expect_kind(spec, SyntheticKind::TwoBranch)?;
    generate_with(spec, banks_in, banks_out)
}

pub fn gen_circle(spec: &SyntheticSpec, banks_in: &BankSet, banks_out: &BankSet) -> Result<TrainingSet> {
    expect_kind(spec, SyntheticKind::Circle)?;
    generate_with(spec, banks_in, banks_out)
}

pub fn gen_single_valued(spec: &SyntheticSpec, banks_in: &BankSet, banks_out: &BankSet) -> Result<TrainingSet> {
    expect_kind(spec, SyntheticKind::SingleValued)?;
    generate_with(spec, banks_in, banks_out)
}

/// Dispatches on `spec.kind`.
pub fn generate(spec: &SyntheticSpec, banks_in: &BankSet, banks_out: &BankSet) -> Result<TrainingSet> {
    generate_with(spec, banks_in, banks_out)
}

/// Exhaustive-search decoder used to check [`crate::decoder::decode_modes`].
///
/// Scans the domain on a grid and scores each point by
/// `Re <enc(x), v>`. Local maxima that reach [`ORACLE_PEAK_FRACTION`] of
/// `overlap * max |v[k]|` over the point's active channels become modes.
/// No phase arithmetic is involved.
pub fn oracle_decode(cfg: &ChannelConfig, v: &ChannelVector, grid_step: f64) -> Result<Vec<ModeEstimate>> {
    if v.len() != cfg.count() {
        return Err(Error::LengthMismatch {
            expected: cfg.count(),
            found: v.len(),
        });
    }
    if !(grid_step > 0.0 && grid_step < cfg.spacing() / 4.0) {
        return Err(Error::InvalidParam(format!(
            "grid step must lie in (0, spacing/4), got {grid_step}"
        )));
    }
    let (lo, hi) = cfg.domain();
    let m = cfg.overlap() as f64;
    let points: Vec<f64> = (0..)
        .map(|i| lo + i as f64 * grid_step)
        .take_while(|&x| x < hi)
        .filter(|&x| cfg.in_domain(x))
        .collect();
    let scored: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&x| {
            let mut score = 0.0;
            let mut peak = 0.0f64;
            let mut mass = 0.0;
            for k in cfg.active_channels(x) {
                let z = v.get(k);
                score += (cfg.channel_value(k, x).conj() * z).re;
                peak = peak.max(z.norm());
                mass += z.norm();
            }
            (score, peak, mass)
        })
        .collect();

    let mut modes = Vec::new();
    for i in 0..scored.len() {
        let (score, peak, mass) = scored[i];
        let rises = i == 0 || score >= scored[i - 1].0;
        let falls = i + 1 == scored.len() || score > scored[i + 1].0;
        if score > 0.0 && rises && falls && score >= ORACLE_PEAK_FRACTION * m * peak {
            let x = points[i];
            modes.push(ModeEstimate {
                value: x,
                confidence: score / m,
                coherence: score / mass,
                support: cfg.active_channels(x).collect(),
            });
        }
    }
    modes.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(a.value.total_cmp(&b.value)));
    Ok(modes)
}

/// Writes pairs as CSV with header `x1,..,xd,y1,..,ye`.
pub fn write_csv<W: Write>(pairs: &[(Vec<f64>, Vec<f64>)], writer: W) -> Result<()> {
    let (d, e) = match pairs.first() {
        Some((x, y)) => (x.len(), y.len()),
        None => return Err(Error::Format("no pairs to write".into())),
    };
    let mut out = csv::Writer::from_writer(writer);
    let header: Vec<String> = (1..=d)
        .map(|i| format!("x{i}"))
        .chain((1..=e).map(|i| format!("y{i}")))
        .collect();
    out.write_record(&header)?;
    for (x, y) in pairs {
        if x.len() != d || y.len() != e {
            return Err(Error::Format("pairs have inconsistent dimensions".into()));
        }
        out.write_record(x.iter().chain(y).map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the CSV written by [`write_csv`].
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut input = csv::Reader::from_reader(reader);
    let header = input.headers()?.clone();
    let d = header.iter().take_while(|h| h.starts_with('x')).count();
    let e = header.len() - d;
    let expected: Vec<String> = (1..=d)
        .map(|i| format!("x{i}"))
        .chain((1..=e).map(|i| format!("y{i}")))
        .collect();
    if d == 0 || e == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Format(format!(
            "CSV header must read x1,..,xd,y1,..,ye; got {}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut pairs = Vec::new();
    for (row, record) in input.records().enumerate() {
        let record = record?;
        let values = record
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("row {}: cannot parse {s:?}", row + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        pairs.push((values[..d].to_vec(), values[d..].to_vec()));
    }
    Ok(pairs)
}
