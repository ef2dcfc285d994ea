//! Recovery of an absolute frequency from beats measured against several
//! reference combs.
//!
//! A comb with spacing s and offset o has tones at o + k·s. A signal at f
//! beats with its nearest tone, so each measurement reveals only
//! fold(f) = distance to that tone, in [0, s/2]. The set of frequencies
//! consistent with one measurement is a union of small intervals around
//! o + k·s ± beat; intersecting those unions across combs of near-coprime
//! spacings leaves the true frequency.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeasurement {
    /// Hz.
    pub spacing: f64,
    /// Frequency of the comb tone with index 0, Hz.
    pub offset: f64,
    /// Beat against the nearest tone, Hz, in [0, spacing/2].
    pub measured_beat: f64,
    /// Hz.
    pub uncertainty: f64,
}

impl GridMeasurement {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("spacing", self.spacing)?;
        ensure_non_negative("uncertainty", self.uncertainty)?;
        if !self.offset.is_finite() {
            return Err(invalid("offset", "must be finite"));
        }
        if !(0.0..=self.spacing / 2.0).contains(&self.measured_beat) {
            return Err(invalid(
                "measured_beat",
                format!("{} Hz is outside [0, spacing/2]", self.measured_beat),
            ));
        }
        Ok(())
    }
}

/// Distance from `f` to the nearest tone of the comb (spacing, offset).
pub fn fold(f: f64, spacing: f64, offset: f64) -> f64 {
    let d = (f - offset).rem_euclid(spacing);
    d.min(spacing - d)
}

/// The noiseless measurement of a tone at `f` against a comb.
pub fn grid_measurement(f: f64, spacing: f64, offset: f64, uncertainty: f64) -> GridMeasurement {
    GridMeasurement {
        spacing,
        offset,
        measured_beat: fold(f, spacing, offset),
        uncertainty,
    }
}

fn merge(mut intervals: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
    for (lo, hi) in intervals {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

fn intersect(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo <= hi {
            out.push((lo, hi));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// All frequency intervals inside `band` within `tolerance` (plus each
/// measurement's own uncertainty) of every measurement.
pub fn consistent_intervals(
    measurements: &[GridMeasurement],
    band: (f64, f64),
    tolerance: f64,
) -> Result<Vec<(f64, f64)>> {
    if measurements.is_empty() {
        return Err(invalid("measurements", "need at least one measurement"));
    }
    ensure_non_negative("tolerance", tolerance)?;
    let (lo, hi) = band;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(invalid(
            "band",
            format!("[{lo}, {hi}] is not a finite, non-empty band"),
        ));
    }
    let mut acc = vec![(lo, hi)];
    for m in measurements {
        m.validate()?;
        let tol = tolerance + m.uncertainty;
        let k_lo = ((lo - m.offset - m.spacing) / m.spacing).floor() as i64;
        let k_hi = ((hi - m.offset + m.spacing) / m.spacing).ceil() as i64;
        let mut set = Vec::with_capacity(2 * (k_hi - k_lo + 1) as usize);
        for k in k_lo..=k_hi {
            let tone = m.offset + k as f64 * m.spacing;
            for f in [tone - m.measured_beat, tone + m.measured_beat] {
                set.push((f - tol, f + tol));
            }
        }
        acc = intersect(&acc, &merge(set));
        if acc.is_empty() {
            break;
        }
    }
    Ok(acc)
}

/// Candidate frequencies (interval midpoints, ascending) consistent with
/// all measurements. Unique when the comb spacings are well chosen.
pub fn disambiguate_frequency(
    measurements: &[GridMeasurement],
    band: (f64, f64),
    tolerance: f64,
) -> Result<Vec<f64>> {
    let intervals = consistent_intervals(measurements, band, tolerance)?;
    if intervals.is_empty() {
        return Err(Error::NoCandidates);
    }
    Ok(intervals.iter().map(|(a, b)| 0.5 * (a + b)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_examples() {
        assert_eq!(fold(37_300.0, 2000.0, 0.0), 700.0);
        assert_eq!(fold(37_300.0, 2300.0, 0.0), 500.0);
        assert_eq!(fold(1000.0, 2000.0, 0.0), 1000.0);
        assert_eq!(fold(-300.0, 2000.0, 0.0), 300.0);
        assert!((fold(2500.0, 2000.0, 400.0) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn single_measurement_gives_full_comb() {
        let m = grid_measurement(37_300.0, 2000.0, 0.0, 0.0);
        let c = disambiguate_frequency(&[m], (0.0, 20_000.0), 1e-6).unwrap();
        // two aliases per spacing period
        assert_eq!(c.len(), 20);
        assert!(c.iter().any(|f| (f - 7_300.0).abs() < 1e-6));
        assert!(c.iter().any(|f| (f - 8_700.0).abs() < 1e-6));
    }

    #[test]
    fn beat_at_half_spacing_merges_aliases() {
        let m = grid_measurement(3000.0, 2000.0, 0.0, 0.0);
        let c = disambiguate_frequency(&[m], (0.0, 10_000.0), 1e-6).unwrap();
        assert_eq!(c.len(), 5);
    }

    #[test]
    fn inconsistent_measurements() {
        let a = grid_measurement(10_000.0, 2000.0, 0.0, 0.0);
        let b = GridMeasurement {
            spacing: 2000.0,
            offset: 0.0,
            measured_beat: 500.0,
            uncertainty: 0.0,
        };
        assert!(matches!(
            disambiguate_frequency(&[a, b], (0.0, 5e4), 1e-3),
            Err(Error::NoCandidates)
        ));
        let bad = GridMeasurement {
            measured_beat: 1500.0,
            ..a
        };
        assert!(disambiguate_frequency(&[bad], (0.0, 5e4), 1e-3).is_err());
        assert!(disambiguate_frequency(&[], (0.0, 5e4), 1e-3).is_err());
    }
}
