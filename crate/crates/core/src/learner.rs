//! Least-squares linear maps between channel spaces.
//!
//! Training pairs are encoded into the columns of `A` (inputs) and `U`
//! (outputs), and the map is the `C` minimising `|U - C A|_F^2 + ridge |C|_F^2`.
//! The solve goes through the SVD `A = P S Q^H`:
//! `C = U Q diag(s / (s^2 + ridge)) P^H`, with singular values below
//! `rcond * s_max` dropped. With `ridge = 0` this is the minimum-norm
//! solution `U A^+`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel::{BankSet, ChannelVector, C64};
use crate::error::{Error, Result};

pub const DEFAULT_RCOND: f64 = 1e-10;
/// Prediction entries below this fraction of the largest output magnitude
/// are dropped.
pub const PREDICT_FLOOR: f64 = 1e-6;

/// Input/output pairs; repeated inputs with different outputs are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    input: BankSet,
    output: BankSet,
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

impl TrainingSet {
    pub fn new(input: BankSet, output: BankSet, pairs: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        for (i, (x, y)) in pairs.iter().enumerate() {
            check_point(&input, x).map_err(|e| Error::Format(format!("pair {i} input: {e}")))?;
            check_point(&output, y).map_err(|e| Error::Format(format!("pair {i} output: {e}")))?;
        }
        Ok(TrainingSet { input, output, pairs })
    }

    pub fn input_banks(&self) -> &BankSet {
        &self.input
    }

    pub fn output_banks(&self) -> &BankSet {
        &self.output
    }

    pub fn pairs(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Encoded samples as columns: `(A, U)`.
    pub fn matrices(&self) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
        let m = self.pairs.len();
        let mut a = DMatrix::zeros(self.input.total_len(), m);
        let mut u = DMatrix::zeros(self.output.total_len(), m);
        for (j, (x, y)) in self.pairs.iter().enumerate() {
            for (k, z) in self.input.encode(x)?.iter() {
                a[(k - 1, j)] = z;
            }
            for (k, z) in self.output.encode(y)?.iter() {
                u[(k - 1, j)] = z;
            }
        }
        if !(all_finite(&a) && all_finite(&u)) {
            return Err(Error::NonFinite("training encodings"));
        }
        Ok((a, u))
    }
}

fn check_point(banks: &BankSet, x: &[f64]) -> Result<()> {
    // encode reports dimension and per-axis domain problems
    banks.encode(x).map(|_| ())
}

fn all_finite(m: &DMatrix<C64>) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub ridge: f64,
    pub rcond: f64,
    /// Frobenius norm of `U - C A` on the training set.
    pub residual: f64,
}

/// A fitted complex matrix together with the banks it connects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct ChannelMap {
    input: BankSet,
    output: BankSet,
    matrix: DMatrix<C64>,
    meta: FitMeta,
}

impl ChannelMap {
    pub fn new(input: BankSet, output: BankSet, matrix: DMatrix<C64>, meta: FitMeta) -> Result<Self> {
        if matrix.nrows() != output.total_len() || matrix.ncols() != input.total_len() {
            return Err(Error::BankMismatch(format!(
                "matrix is {}x{}, banks need {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                output.total_len(),
                input.total_len()
            )));
        }
        if !all_finite(&matrix) {
            return Err(Error::NonFinite("map matrix"));
        }
        Ok(ChannelMap {
            input,
            output,
            matrix,
            meta,
        })
    }

    pub fn input_banks(&self) -> &BankSet {
        &self.input
    }

    pub fn output_banks(&self) -> &BankSet {
        &self.output
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn meta(&self) -> &FitMeta {
        &self.meta
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixFile {
    rows: usize,
    cols: usize,
    /// Row-major `[re, im]` pairs.
    data: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    input_banks: BankSet,
    output_banks: BankSet,
    matrix: MatrixFile,
    meta: FitMeta,
}

impl From<ChannelMap> for ModelFile {
    fn from(map: ChannelMap) -> Self {
        let m = &map.matrix;
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| [m[(i, j)].re, m[(i, j)].im]))
            .collect();
        ModelFile {
            matrix: MatrixFile {
                rows: m.nrows(),
                cols: m.ncols(),
                data,
            },
            input_banks: map.input,
            output_banks: map.output,
            meta: map.meta,
        }
    }
}

impl TryFrom<ModelFile> for ChannelMap {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        let MatrixFile { rows, cols, data } = file.matrix;
        if data.len() != rows * cols {
            return Err(Error::Format(format!(
                "matrix data holds {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        let matrix = DMatrix::from_row_iterator(rows, cols, data.into_iter().map(|[re, im]| C64::new(re, im)));
        ChannelMap::new(file.input_banks, file.output_banks, matrix, file.meta)
    }
}

/// Fits `C` by (optionally ridge-regularised) least squares.
pub fn fit(train: &TrainingSet, ridge: f64, rcond: f64) -> Result<ChannelMap> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::InvalidParam(format!("ridge must be >= 0, got {ridge}")));
    }
    if !(rcond.is_finite() && rcond > 0.0) {
        return Err(Error::InvalidParam(format!("rcond must be > 0, got {rcond}")));
    }
    let (a, u) = train.matrices()?;
    let matrix = solve(&a, &u, ridge, rcond)?;
    let residual = (&u - &matrix * &a).norm();
    ChannelMap::new(
        train.input.clone(),
        train.output.clone(),
        matrix,
        FitMeta { ridge, rcond, residual },
    )
}

// Relative reconstruction error above which a factorization is rejected.
const SVD_CHECK: f64 = 1e-10;

// C = U A^+, where A^+ applies sigma / (sigma^2 + ridge) to each singular
// value above the cutoff.
fn solve(a: &DMatrix<C64>, u: &DMatrix<C64>, ridge: f64, rcond: f64) -> Result<DMatrix<C64>> {
    let (n, m) = a.shape();
    let fa = faer::Mat::<C64>::from_fn(n, m, |i, j| a[(i, j)]);
    let svd = fa.thin_svd().map_err(|_| Error::SvdFailed)?;
    let (p, q) = (svd.U(), svd.V());
    let s: Vec<f64> = (0..n.min(m)).map(|i| svd.S()[i].re).collect();

    let mut err = 0.0;
    for i in 0..n {
        for j in 0..m {
            let z: C64 = s.iter().enumerate().map(|(r, &sigma)| p[(i, r)] * q[(j, r)].conj() * sigma).sum();
            err += (z - a[(i, j)]).norm_sqr();
        }
    }
    if err.is_nan() || err.sqrt() > SVD_CHECK * a.norm() {
        return Err(Error::SvdFailed);
    }

    let s_max = s.iter().copied().fold(0.0, f64::max);
    let cutoff = rcond * s_max;
    // Q diag(f) P^H
    let mut pinv = DMatrix::<C64>::zeros(m, n);
    for (r, &sigma) in s.iter().enumerate() {
        if !(sigma > cutoff && sigma > 0.0) {
            continue;
        }
        let f = sigma / (sigma * sigma + ridge);
        for j in 0..n {
            let pj = p[(j, r)].conj() * f;
            for i in 0..m {
                pinv[(i, j)] += q[(i, r)] * pj;
            }
        }
    }
    let c = u * pinv;
    if !all_finite(&c) {
        return Err(Error::NonFinite("least-squares solution"));
    }
    Ok(c)
}

/// Applies the map to an encoded input, touching only the columns where
/// the input is active, and drops output entries below [`PREDICT_FLOOR`]
/// times the largest output magnitude.
pub fn predict(map: &ChannelMap, a: &ChannelVector) -> Result<ChannelVector> {
    predict_with_floor(map, a, PREDICT_FLOOR)
}

pub fn predict_with_floor(map: &ChannelMap, a: &ChannelVector, relative_floor: f64) -> Result<ChannelVector> {
    if a.len() != map.input.total_len() {
        return Err(Error::LengthMismatch {
            expected: map.input.total_len(),
            found: a.len(),
        });
    }
    let mut out = vec![C64::default(); map.output.total_len()];
    for (k, z) in a.iter() {
        for (o, c) in out.iter_mut().zip(map.matrix.column(k - 1).iter()) {
            *o += c * z;
        }
    }
    let dense = ChannelVector::from_dense(&out)?;
    Ok(dense.sparsify(relative_floor * dense.max_magnitude()))
}

/// Encodes a raw input point and predicts its output channel vector.
pub fn predict_point(map: &ChannelMap, x: &[f64]) -> Result<ChannelVector> {
    predict(map, &map.input.encode(x)?)
}

/// Frobenius norm of `U - C A` over a training set.
pub fn residual(map: &ChannelMap, train: &TrainingSet) -> Result<f64> {
    if map.input != train.input || map.output != train.output {
        return Err(Error::BankMismatch("training set banks differ from the map's".into()));
    }
    let (a, u) = train.matrices()?;
    Ok((&u - &map.matrix * &a).norm())
}
