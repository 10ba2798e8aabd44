//! Channel banks and the complex exponential channel encoding.
//!
//! A bank of `count` channels maps a real value `x` to a sparse complex
//! vector. Channel `k` (1-based) responds with `exp(i*omega*(x + k*spacing))`
//! when `x` lies in its support `[origin + k*spacing, origin + (k+overlap)*spacing)`
//! and is silent otherwise, so every in-domain value lights up exactly
//! `overlap` consecutive channels, all on the unit circle.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::ops::RangeInclusive;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Parameters of one scalar channel bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig")]
pub struct ChannelConfig {
    omega: f64,
    spacing: f64,
    count: usize,
    overlap: usize,
    origin: f64,
}

#[derive(Deserialize)]
struct RawConfig {
    omega: f64,
    spacing: f64,
    count: usize,
    overlap: usize,
    origin: f64,
}

impl TryFrom<RawConfig> for ChannelConfig {
    type Error = Error;

    fn try_from(raw: RawConfig) -> Result<Self> {
        ChannelConfig::new(raw.omega, raw.spacing, raw.count, raw.overlap, raw.origin)
    }
}

impl ChannelConfig {
    /// Validates and builds a bank.
    ///
    /// The product `omega * overlap * spacing` must stay below `2*pi` so that
    /// the phase cannot wrap inside the intersection of active supports.
    pub fn new(omega: f64, spacing: f64, count: usize, overlap: usize, origin: f64) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::NonPositiveOmega(omega));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::NonPositiveSpacing(spacing));
        }
        if !origin.is_finite() {
            return Err(Error::NonFiniteOrigin(origin));
        }
        if count == 0 {
            return Err(Error::ZeroCount);
        }
        if overlap == 0 {
            return Err(Error::ZeroOverlap);
        }
        if overlap > count {
            return Err(Error::OverlapExceedsCount { overlap, count });
        }
        let product = omega * overlap as f64 * spacing;
        if product >= TAU {
            return Err(Error::PhaseWrap { product });
        }
        Ok(ChannelConfig {
            omega,
            spacing,
            count,
            overlap,
            origin,
        })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    /// Half-open interval `[lo, hi)` on which every value has exactly
    /// `overlap` active channels.
    pub fn domain(&self) -> (f64, f64) {
        (
            self.origin + self.overlap as f64 * self.spacing,
            self.origin + (self.count + 1) as f64 * self.spacing,
        )
    }

    // Position in units of spacing; every domain and support test goes
    // through this so they agree at cell boundaries.
    fn position(&self, x: f64) -> f64 {
        (x - self.origin) / self.spacing
    }

    pub fn in_domain(&self, x: f64) -> bool {
        let u = self.position(x);
        u >= self.overlap as f64 && u < (self.count + 1) as f64
    }

    /// Support of channel `k` as `[lo, hi)`.
    pub fn support(&self, k: usize) -> (f64, f64) {
        (
            self.origin + k as f64 * self.spacing,
            self.origin + (k + self.overlap) as f64 * self.spacing,
        )
    }

    /// Intersection of the supports of channels `first..=last`, as a closed
    /// interval. Empty (lo > hi) when the run is longer than `overlap`.
    pub fn window(&self, first: usize, last: usize) -> (f64, f64) {
        (
            self.origin + last as f64 * self.spacing,
            self.origin + (first + self.overlap) as f64 * self.spacing,
        )
    }

    /// Channels whose support contains `x`. Near the edges of the bank the
    /// set may be shorter than `overlap`, or empty.
    pub fn active_channels(&self, x: f64) -> RangeInclusive<usize> {
        let u = self.position(x);
        if !u.is_finite() || u < 1.0 {
            return empty_range();
        }
        let top = u.floor();
        let first = (top - self.overlap as f64 + 1.0).max(1.0);
        let last = top.min(self.count as f64);
        if first > last {
            return empty_range();
        }
        first as usize..=last as usize
    }

    /// Response of channel `k` to `x`, ignoring support.
    pub fn channel_value(&self, k: usize, x: f64) -> C64 {
        C64::from_polar(1.0, self.omega * (x + k as f64 * self.spacing))
    }

    /// Encodes an in-domain value.
    pub fn encode(&self, x: f64) -> Result<ChannelVector> {
        if !self.in_domain(x) {
            let (lo, hi) = self.domain();
            return Err(Error::OutOfDomain { x, lo, hi });
        }
        let entries = self
            .active_channels(x)
            .map(|k| (k, self.channel_value(k, x)))
            .collect();
        Ok(ChannelVector {
            len: self.count,
            entries,
        })
    }
}

fn empty_range() -> RangeInclusive<usize> {
    #[allow(clippy::reversed_empty_ranges)]
    {
        1..=0
    }
}

/// Sparse complex channel vector with 1-based indices. Zero coefficients are
/// never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVector", into = "RawVector")]
pub struct ChannelVector {
    len: usize,
    entries: BTreeMap<usize, C64>,
}

#[derive(Serialize, Deserialize)]
struct RawEntry {
    k: usize,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct RawVector {
    n: usize,
    entries: Vec<RawEntry>,
}

impl TryFrom<RawVector> for ChannelVector {
    type Error = Error;

    fn try_from(raw: RawVector) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for e in &raw.entries {
            if seen.insert(e.k, ()).is_some() {
                return Err(Error::DuplicateIndex(e.k));
            }
        }
        ChannelVector::from_entries(
            raw.n,
            raw.entries.into_iter().map(|e| (e.k, C64::new(e.re, e.im))),
        )
    }
}

impl From<ChannelVector> for RawVector {
    fn from(v: ChannelVector) -> Self {
        RawVector {
            n: v.len,
            entries: v
                .entries
                .into_iter()
                .map(|(k, z)| RawEntry { k, re: z.re, im: z.im })
                .collect(),
        }
    }
}

impl ChannelVector {
    pub fn zeros(len: usize) -> Self {
        ChannelVector {
            len,
            entries: BTreeMap::new(),
        }
    }

    /// Builds a vector from `(k, value)` pairs. Exact zeros are dropped; later
    /// pairs overwrite earlier ones with the same index.
    pub fn from_entries<I>(len: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, C64)>,
    {
        let mut v = ChannelVector::zeros(len);
        for (k, z) in entries {
            if k == 0 || k > len {
                return Err(Error::IndexOutOfRange { index: k, len });
            }
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFinite("channel vector entry"));
            }
            if z.norm_sqr() > 0.0 {
                v.entries.insert(k, z);
            } else {
                v.entries.remove(&k);
            }
        }
        Ok(v)
    }

    /// Builds a vector from a dense slice, where `dense[0]` is channel 1.
    pub fn from_dense(dense: &[C64]) -> Result<Self> {
        Self::from_entries(dense.len(), dense.iter().enumerate().map(|(i, z)| (i + 1, *z)))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// Number of stored (nonzero) entries.
    /// True when the vector has no channels at all.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, k: usize) -> C64 {
        self.entries.get(&k).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, C64)> + '_ {
        self.entries.iter().map(|(k, z)| (*k, *z))
    }

    /// Indices of stored entries, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }

    pub fn to_dense(&self) -> Vec<C64> {
        let mut dense = vec![C64::default(); self.len];
        for (k, z) in self.iter() {
            dense[k - 1] = z;
        }
        dense
    }

    pub fn norm(&self) -> f64 {
        self.entries.values().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.entries.values().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn check_len(&self, other: &ChannelVector) -> Result<()> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                found: other.len,
            });
        }
        Ok(())
    }

    /// Hermitian inner product `sum conj(self[k]) * other[k]`.
    pub fn inner(&self, other: &ChannelVector) -> Result<C64> {
        self.check_len(other)?;
        let (small, large, flip) = if self.nnz() <= other.nnz() {
            (self, other, false)
        } else {
            (other, self, true)
        };
        let mut acc = C64::default();
        for (k, z) in small.iter() {
            if let Some(w) = large.entries.get(&k) {
                acc += if flip { w.conj() * z } else { z.conj() * w };
            }
        }
        Ok(acc)
    }

    /// Euclidean distance, missing entries counting as zero.
    pub fn distance(&self, other: &ChannelVector) -> Result<f64> {
        self.check_len(other)?;
        let mut acc = 0.0;
        for (k, z) in self.iter() {
            acc += (z - other.get(k)).norm_sqr();
        }
        for (k, w) in other.iter() {
            if !self.entries.contains_key(&k) {
                acc += w.norm_sqr();
            }
        }
        Ok(acc.sqrt())
    }

    /// Drops entries whose magnitude is at or below `floor`. With `floor = 0`
    /// only exact zeros would go, and those are never stored.
    pub fn sparsify(&self, floor: f64) -> ChannelVector {
        ChannelVector {
            len: self.len,
            entries: self
                .entries
                .iter()
                .filter(|(_, z)| z.norm() > floor)
                .map(|(k, z)| (*k, *z))
                .collect(),
        }
    }

    /// Copy of channels `offset+1 ..= offset+len`, re-indexed from 1.
    pub fn block(&self, offset: usize, len: usize) -> ChannelVector {
        ChannelVector {
            len,
            entries: self
                .entries
                .range(offset + 1..=offset + len)
                .map(|(k, z)| (k - offset, *z))
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Weighted sum `sum w_i * v_i` with non-negative real weights.
pub fn superpose(terms: &[(f64, &ChannelVector)]) -> Result<ChannelVector> {
    let (_, first) = terms.first().ok_or(Error::EmptySuperposition)?;
    let mut acc: BTreeMap<usize, C64> = BTreeMap::new();
    for &(w, v) in terms {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::InvalidWeight(w));
        }
        first.check_len(v)?;
        for (k, z) in v.iter() {
            *acc.entry(k).or_default() += z * w;
        }
    }
    acc.retain(|_, z| z.norm_sqr() > 0.0);
    Ok(ChannelVector {
        len: first.len,
        entries: acc,
    })
}

/// One channel bank per axis of a vector-valued quantity; the axes are
/// encoded into consecutive blocks of one long channel vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ChannelConfig>", into = "Vec<ChannelConfig>")]
pub struct BankSet {
    banks: Vec<ChannelConfig>,
    offsets: Vec<usize>,
    total: usize,
}

impl TryFrom<Vec<ChannelConfig>> for BankSet {
    type Error = Error;

    fn try_from(banks: Vec<ChannelConfig>) -> Result<Self> {
        BankSet::new(banks)
    }
}

impl From<BankSet> for Vec<ChannelConfig> {
    fn from(set: BankSet) -> Self {
        set.banks
    }
}

impl BankSet {
    pub fn new(banks: Vec<ChannelConfig>) -> Result<Self> {
        if banks.is_empty() {
            return Err(Error::BankMismatch("a bank set needs at least one axis".into()));
        }
        let mut offsets = Vec::with_capacity(banks.len());
        let mut total = 0;
        for b in &banks {
            offsets.push(total);
            total += b.count();
        }
        Ok(BankSet {
            banks,
            offsets,
            total,
        })
    }

    pub fn single(cfg: ChannelConfig) -> Self {
        BankSet {
            banks: vec![cfg],
            offsets: vec![0],
            total: cfg.count(),
        }
    }

    pub fn dim(&self) -> usize {
        self.banks.len()
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn banks(&self) -> &[ChannelConfig] {
        &self.banks
    }

    pub fn bank(&self, axis: usize) -> &ChannelConfig {
        &self.banks[axis]
    }

    /// 1-based index range of an axis inside the concatenated vector.
    pub fn block_range(&self, axis: usize) -> RangeInclusive<usize> {
        let start = self.offsets[axis];
        start + 1..=start + self.banks[axis].count()
    }

    pub fn encode(&self, x: &[f64]) -> Result<ChannelVector> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let mut entries = BTreeMap::new();
        for (axis, (cfg, &xi)) in self.banks.iter().zip(x).enumerate() {
            let block = cfg.encode(xi).map_err(|e| e.on_axis(axis))?;
            let offset = self.offsets[axis];
            entries.extend(block.iter().map(|(k, z)| (k + offset, z)));
        }
        Ok(ChannelVector {
            len: self.total,
            entries,
        })
    }

    /// Splits a concatenated vector into per-axis blocks.
    pub fn split(&self, v: &ChannelVector) -> Result<Vec<ChannelVector>> {
        if v.len() != self.total {
            return Err(Error::LengthMismatch {
                expected: self.total,
                found: v.len(),
            });
        }
        Ok(self
            .banks
            .iter()
            .zip(&self.offsets)
            .map(|(cfg, &offset)| v.block(offset, cfg.count()))
            .collect())
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.banks.iter().zip(x).all(|(c, &xi)| c.in_domain(xi))
    }
}
