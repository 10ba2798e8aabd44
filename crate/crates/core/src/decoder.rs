//! Recovering real values from channel vectors.
//!
//! A run of active channels `S` is demodulated by
//! `s = mean_{k in S} v[k] * exp(-i*omega*k*spacing)`; for a pure encoding of
//! `x` this is exactly `exp(i*omega*x)`. The phase of `s` fixes `x` modulo
//! `2*pi/omega`, and the branch is picked from the window where the supports
//! of `S` intersect, which is narrower than one period.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::{BankSet, ChannelConfig, ChannelVector, C64};
use crate::error::{Error, Result};

/// One decoded value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEstimate {
    pub value: f64,
    /// Mean coefficient magnitude over the mode's window; recovers the
    /// superposition weight.
    pub confidence: f64,
    /// `|s| / mean |v[k]|`, 1 for a pure encoding.
    pub coherence: f64,
    /// Channel indices that voted for this mode.
    pub support: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    /// Entries with smaller magnitude are treated as absent.
    pub magnitude_floor: f64,
    /// Windows below this coherence are rejected.
    pub coherence_min: f64,
    /// Window estimates closer than this merge into one mode. `None` means
    /// half the bank spacing.
    pub merge_tol: Option<f64>,
    /// Minimum ratio of smallest to largest magnitude for a sliding window
    /// inside a run longer than `overlap`.
    pub uniformity_min: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            magnitude_floor: 1e-9,
            coherence_min: 0.9,
            merge_tol: None,
            uniformity_min: 0.3,
        }
    }
}

impl DecodeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.magnitude_floor.is_finite() && self.magnitude_floor >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "magnitude_floor must be >= 0, got {}",
                self.magnitude_floor
            )));
        }
        if !(0.0..=1.0).contains(&self.coherence_min) {
            return Err(Error::InvalidParam(format!(
                "coherence_min must lie in [0, 1], got {}",
                self.coherence_min
            )));
        }
        if let Some(tol) = self.merge_tol {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(Error::InvalidParam(format!("merge_tol must be > 0, got {tol}")));
            }
        }
        if !(0.0..=1.0).contains(&self.uniformity_min) {
            return Err(Error::InvalidParam(format!(
                "uniformity_min must lie in [0, 1], got {}",
                self.uniformity_min
            )));
        }
        Ok(())
    }

    pub fn merge_tol_for(&self, cfg: &ChannelConfig) -> f64 {
        self.merge_tol.unwrap_or(cfg.spacing() / 2.0)
    }
}

fn check_len(cfg: &ChannelConfig, v: &ChannelVector) -> Result<()> {
    if v.len() != cfg.count() {
        return Err(Error::LengthMismatch {
            expected: cfg.count(),
            found: v.len(),
        });
    }
    Ok(())
}

fn active_entries(v: &ChannelVector, floor: f64) -> Vec<(usize, C64)> {
    v.iter().filter(|(_, z)| z.norm() >= floor).collect()
}

/// Decodes a vector holding a single mode.
pub fn decode_single(cfg: &ChannelConfig, v: &ChannelVector, params: &DecodeParams) -> Result<ModeEstimate> {
    params.validate()?;
    check_len(cfg, v)?;
    let active = active_entries(v, params.magnitude_floor);
    if active.is_empty() {
        return Err(Error::EmptyVector);
    }
    let consecutive = active.windows(2).all(|w| w[1].0 == w[0].0 + 1);
    if !consecutive || active.len() > cfg.overlap() {
        return Err(Error::Ambiguous(active.iter().map(|(k, _)| *k).collect()));
    }
    decode_window(cfg, &active, params.coherence_min)
}

// `run` is non-empty, consecutive and no longer than `overlap`.
fn decode_window(cfg: &ChannelConfig, run: &[(usize, C64)], coherence_min: f64) -> Result<ModeEstimate> {
    let omega = cfg.omega();
    let n = run.len() as f64;
    let s = run
        .iter()
        .map(|&(k, z)| z * C64::from_polar(1.0, -omega * k as f64 * cfg.spacing()))
        .sum::<C64>()
        / n;
    let confidence = run.iter().map(|(_, z)| z.norm()).sum::<f64>() / n;
    let coherence = s.norm() / confidence;
    if coherence < coherence_min || coherence.is_nan() {
        return Err(Error::Incoherent {
            coherence,
            min: coherence_min,
        });
    }

    let (lo, hi) = cfg.window(run[0].0, run[run.len() - 1].0);
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    // Unique because omega * half < pi.
    let offset = (s * C64::from_polar(1.0, -omega * center)).arg() / omega;
    let slack = (0.5 * cfg.spacing()).min(0.5 * (PI / omega - half));
    let value = center + offset;
    if offset.abs() > half + slack {
        return Err(Error::Inconsistent { value, lo, hi });
    }
    Ok(ModeEstimate {
        value: value.clamp(lo, hi),
        confidence,
        coherence,
        support: run.iter().map(|(k, _)| *k).collect(),
    })
}

fn split_runs(active: &[(usize, C64)]) -> Vec<&[(usize, C64)]> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=active.len() {
        if i == active.len() || active[i].0 != active[i - 1].0 + 1 {
            if i > start {
                runs.push(&active[start..i]);
            }
            start = i;
        }
    }
    runs
}

/// Extracts every mode in a possibly superposed vector.
///
/// Runs no longer than `overlap` decode directly. Longer runs are scanned
/// with a window of width `overlap`; windows with roughly uniform magnitudes
/// that decode coherently vote, and votes closer than the merge tolerance
/// collapse into one mode. Failed windows are skipped.
pub fn decode_modes(cfg: &ChannelConfig, v: &ChannelVector, params: &DecodeParams) -> Result<Vec<ModeEstimate>> {
    params.validate()?;
    check_len(cfg, v)?;
    let active = active_entries(v, params.magnitude_floor);
    let width = cfg.overlap();
    let mut modes = Vec::new();

    for run in split_runs(&active) {
        if run.len() <= width {
            if let Ok(mode) = decode_window(cfg, run, params.coherence_min) {
                modes.push(mode);
            }
            continue;
        }
        let mut votes: Vec<ModeEstimate> = run
            .windows(width)
            .filter(|w| {
                let (min, max) = w
                    .iter()
                    .map(|(_, z)| z.norm())
                    .fold((f64::INFINITY, 0.0f64), |(a, b), m| (a.min(m), b.max(m)));
                min >= params.uniformity_min * max
            })
            .filter_map(|w| decode_window(cfg, w, params.coherence_min).ok())
            .collect();
        votes.sort_by(|a, b| a.value.total_cmp(&b.value));
        modes.extend(merge_votes(cfg, run, votes, params.merge_tol_for(cfg)));
    }

    modes.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.value.total_cmp(&b.value))
    });
    Ok(modes)
}

// `votes` sorted by value. Clusters chain while neighbours are closer than
// `tol`. A cluster's confidence is the total magnitude over the union of its
// windows divided by `overlap`, which equals the window mean for a single
// full window and still recovers the weight of a mode smeared over more
// than `overlap` channels.
fn merge_votes(cfg: &ChannelConfig, run: &[(usize, C64)], votes: Vec<ModeEstimate>, tol: f64) -> Vec<ModeEstimate> {
    let mut clusters: Vec<Vec<ModeEstimate>> = Vec::new();
    for vote in votes {
        match clusters.last_mut() {
            Some(c) if vote.value - c[c.len() - 1].value < tol => c.push(vote),
            _ => clusters.push(vec![vote]),
        }
    }
    clusters
        .into_iter()
        .map(|cluster| {
            let weight: f64 = cluster.iter().map(|m| m.confidence).sum();
            let value = cluster.iter().map(|m| m.confidence * m.value).sum::<f64>() / weight;
            let coherence = cluster.iter().map(|m| m.confidence * m.coherence).sum::<f64>() / weight;
            let mut support: Vec<usize> = cluster.iter().flat_map(|m| m.support.iter().copied()).collect();
            support.sort_unstable();
            support.dedup();
            let mass: f64 = run
                .iter()
                .filter(|(k, _)| support.binary_search(k).is_ok())
                .map(|(_, z)| z.norm())
                .sum();
            ModeEstimate {
                value,
                confidence: mass / cfg.overlap() as f64,
                coherence,
                support,
            }
        })
        .collect()
}

/// Decodes each axis block of a concatenated vector independently. Mode
/// supports are indices local to the block.
pub fn decode_point(banks: &BankSet, v: &ChannelVector, params: &DecodeParams) -> Result<Vec<Vec<ModeEstimate>>> {
    banks
        .split(v)?
        .iter()
        .zip(banks.banks())
        .enumerate()
        .map(|(axis, (block, cfg))| decode_modes(cfg, block, params).map_err(|e| e.on_axis(axis)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::superpose;
    use std::f64::consts::FRAC_PI_4;

    fn sparse() -> ChannelConfig {
        ChannelConfig::new(1.0, FRAC_PI_4, 16, 3, 0.0).unwrap()
    }

    #[test]
    fn full_overlap_recovery_sum() {
        let cfg = ChannelConfig::new(1.0, 1.0, 4, 4, 0.0).unwrap();
        let v = cfg.encode(4.5).unwrap();
        let sum: C64 = v.iter().map(|(k, z)| z * C64::from_polar(1.0, -(k as f64))).sum();
        assert!((sum - C64::from_polar(4.0, 4.5)).norm() < 1e-12);
        let mode = decode_single(&cfg, &v, &DecodeParams::default()).unwrap();
        assert!((mode.value - 4.5).abs() < 1e-12);
        assert!((mode.confidence - 1.0).abs() < 1e-12);
        assert!((mode.coherence - 1.0).abs() < 1e-12);
        assert_eq!(mode.support, vec![1, 2, 3, 4]);
    }

    #[test]
    fn round_trip_sparse() {
        let cfg = sparse();
        let mode = decode_single(&cfg, &cfg.encode(3.0).unwrap(), &DecodeParams::default()).unwrap();
        assert!((mode.value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn perturbed_channel_is_incoherent() {
        let cfg = sparse();
        let v = cfg.encode(3.0).unwrap();
        let flipped = ChannelVector::from_entries(16, v.iter().map(|(k, z)| (k, if k == 2 { -z } else { z }))).unwrap();
        match decode_single(&cfg, &flipped, &DecodeParams::default()) {
            Err(Error::Incoherent { coherence, .. }) => assert!((coherence - 1.0 / 3.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        // still decodable once the threshold allows it
        let loose = DecodeParams {
            coherence_min: 0.3,
            ..Default::default()
        };
        let mode = decode_single(&cfg, &flipped, &loose).unwrap();
        assert!((mode.value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_decode_errors() {
        let cfg = sparse();
        let p = DecodeParams::default();
        assert!(matches!(decode_single(&cfg, &ChannelVector::zeros(16), &p), Err(Error::EmptyVector)));

        let a = cfg.encode(3.0).unwrap();
        let b = cfg.encode(9.0).unwrap();
        let two = superpose(&[(1.0, &a), (1.0, &b)]).unwrap();
        assert!(matches!(decode_single(&cfg, &two, &p), Err(Error::Ambiguous(_))));

        // phases consistent with a value far outside the window of {1,2,3}
        let wrong = 3.5 * FRAC_PI_4 + 1.5;
        let v = ChannelVector::from_entries(16, (1..=3).map(|k| (k, cfg.channel_value(k, wrong)))).unwrap();
        assert!(matches!(decode_single(&cfg, &v, &p), Err(Error::Inconsistent { .. })));

        assert!(matches!(
            decode_single(&cfg, &ChannelVector::zeros(4), &p),
            Err(Error::LengthMismatch { .. })
        ));
        let bad = DecodeParams {
            coherence_min: 1.5,
            ..Default::default()
        };
        assert!(matches!(decode_single(&cfg, &a, &bad), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn weighted_encoding_keeps_value() {
        let cfg = sparse();
        let v = superpose(&[(0.25, &cfg.encode(5.0).unwrap())]).unwrap();
        let mode = decode_single(&cfg, &v, &DecodeParams::default()).unwrap();
        assert!((mode.value - 5.0).abs() < 1e-12);
        assert!((mode.confidence - 0.25).abs() < 1e-12);
        assert!((mode.coherence - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_disjoint_modes() {
        let cfg = sparse();
        let (y1, y2) = (3.0, 9.0);
        let v = superpose(&[(0.7, &cfg.encode(y1).unwrap()), (0.3, &cfg.encode(y2).unwrap())]).unwrap();
        let modes = decode_modes(&cfg, &v, &DecodeParams::default()).unwrap();
        assert_eq!(modes.len(), 2);
        assert!((modes[0].value - y1).abs() < 1e-12 && (modes[0].confidence - 0.7).abs() < 1e-12);
        assert!((modes[1].value - y2).abs() < 1e-12 && (modes[1].confidence - 0.3).abs() < 1e-12);
        assert!((modes[0].coherence - 1.0).abs() < 1e-12);
        assert!((modes[1].coherence - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_and_pure() {
        let cfg = sparse();
        let p = DecodeParams::default();
        assert!(decode_modes(&cfg, &ChannelVector::zeros(16), &p).unwrap().is_empty());
        let modes = decode_modes(&cfg, &cfg.encode(6.1).unwrap(), &p).unwrap();
        assert_eq!(modes.len(), 1);
        assert!((modes[0].value - 6.1).abs() < 1e-12);
    }

    #[test]
    fn touching_runs_split() {
        // {1,2,3} and {4,5,6}: disjoint supports forming one run of six
        let cfg = sparse();
        let t = FRAC_PI_4;
        for (y1, y2, w1, w2) in [
            (3.9 * t, 6.05 * t, 1.0, 0.2),
            (3.01 * t, 6.99 * t, 0.2, 1.0),
            (3.99 * t, 6.01 * t, 0.5, 0.5),
        ] {
            let a = cfg.encode(y1).unwrap();
            let b = cfg.encode(y2).unwrap();
            assert_eq!(a.support(), vec![1, 2, 3]);
            assert_eq!(b.support(), vec![4, 5, 6]);
            let v = superpose(&[(w1, &a), (w2, &b)]).unwrap();
            let mut modes = decode_modes(&cfg, &v, &DecodeParams::default()).unwrap();
            modes.sort_by(|a, b| a.value.total_cmp(&b.value));
            assert_eq!(modes.len(), 2, "{modes:?}");
            assert!((modes[0].value - y1).abs() < 1e-12);
            assert!((modes[1].value - y2).abs() < 1e-12);
            assert!((modes[0].confidence - w1).abs() < 1e-12);
            assert!((modes[1].confidence - w2).abs() < 1e-12);
        }
    }

    #[test]
    fn smeared_mode_merges() {
        // a mode spread over four channels, as a least-squares prediction
        // produces when its targets straddle a cell boundary
        let cfg = sparse();
        let y = 4.0 * FRAC_PI_4;
        let left = cfg.encode(y - 1e-3).unwrap();
        let right = cfg.encode(y + 1e-3).unwrap();
        let v = superpose(&[(0.25, &left), (0.25, &right)]).unwrap();
        assert_eq!(v.support(), vec![1, 2, 3, 4]);
        let modes = decode_modes(&cfg, &v, &DecodeParams::default()).unwrap();
        assert_eq!(modes.len(), 1, "{modes:?}");
        assert!((modes[0].value - y).abs() < 2e-3);
        assert!((modes[0].confidence - 0.5).abs() < 1e-6);
        assert_eq!(modes[0].support, vec![1, 2, 3, 4]);
    }

    #[test]
    fn point_decoding() {
        let cfg = sparse();
        let banks = BankSet::new(vec![cfg, cfg]).unwrap();
        let p = DecodeParams::default();
        let v = banks.encode(&[3.0, 5.0]).unwrap();
        let modes = decode_point(&banks, &v, &p).unwrap();
        assert_eq!(modes.len(), 2);
        assert!((modes[0][0].value - 3.0).abs() < 1e-12);
        assert!((modes[1][0].value - 5.0).abs() < 1e-12);

        let first_only = v.block(0, 16);
        let padded = ChannelVector::from_entries(32, first_only.iter()).unwrap();
        let modes = decode_point(&banks, &padded, &p).unwrap();
        assert_eq!(modes[0].len(), 1);
        assert!(modes[1].is_empty());

        let single = BankSet::single(cfg);
        let e = cfg.encode(3.0).unwrap();
        assert_eq!(decode_point(&single, &e, &p).unwrap()[0], decode_modes(&cfg, &e, &p).unwrap());
        assert!(decode_point(&banks, &e, &p).is_err());
    }

    #[test]
    fn mode_json() {
        let m = ModeEstimate {
            value: 3.0,
            confidence: 1.0,
            coherence: 1.0,
            support: vec![1, 2, 3],
        };
        assert_eq!(
            serde_json::to_string(&vec![m]).unwrap(),
            r#"[{"value":3.0,"confidence":1.0,"coherence":1.0,"support":[1,2,3]}]"#
        );
    }
}
