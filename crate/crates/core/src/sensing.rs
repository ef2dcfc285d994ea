//! Analytic figures of merit, operating-point optimization and
//! reference-grid planning.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, invalid, Error, Result};
use crate::physics::{
    induced_relaxation, pump_rate, rabi_frequency, NVEnsembleParams, PhysicalConstants,
};
use crate::synthesis::{predicted_snr, DetectorModel};

/// 3√3/32, the saturated value of the SNR prefactor.
pub const SATURATION_CONSTANT: f64 = 0.162_379_763_209_582_25;

/// Laser power, reference drive, beat, channel count and integration time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// W.
    pub laser_power: f64,
    /// Reference field amplitude B1, T.
    pub reference_b: f64,
    /// Beat frequency δ, Hz.
    pub delta: f64,
    /// Number of reference tones m.
    pub channels: usize,
    /// Total measurement time t, s.
    pub total_time: f64,
}

impl OperatingPoint {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("laser_power", self.laser_power)?;
        ensure_positive("reference_b", self.reference_b)?;
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(invalid(
                "delta",
                format!("must be finite and >= 0, got {}", self.delta),
            ));
        }
        if self.channels == 0 {
            return Err(invalid("channels", "need at least one reference tone"));
        }
        ensure_positive("total_time", self.total_time)
    }
}

/// Spectrum SNR of the heterodyne beat from the rates directly:
/// Γp^{3/2}·ΓG^{1/2}·C·√(n_NV·K·Γg·t) / [2Σ√(Σ² + δ²)], Σ = Γp + Γ1 + m·ΓG.
#[allow(clippy::too_many_arguments)]
pub fn snr_from_rates(
    params: &NVEnsembleParams,
    gamma_p: f64,
    gamma_big_g: f64,
    gamma_g: f64,
    delta: f64,
    channels: usize,
    total_time: f64,
) -> f64 {
    let total = gamma_p + params.gamma1 + channels as f64 * gamma_big_g;
    gamma_p.powf(1.5)
        * gamma_big_g.sqrt()
        * params.contrast
        * (params.n_nv * params.collection_k * gamma_g * total_time).sqrt()
        / (2.0 * total * total.hypot(delta))
}

fn reference_rates(
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    op: &OperatingPoint,
) -> Result<(f64, f64)> {
    params.validate()?;
    op.validate()?;
    let gamma_p = pump_rate(op.laser_power, params)?;
    let big = induced_relaxation(
        rabi_frequency(op.reference_b, constants)?,
        params.gamma2,
        0.0,
    )?;
    Ok((gamma_p, big))
}

/// Single-reference SNR. `op.channels` is ignored.
pub fn analytic_snr(
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    op: &OperatingPoint,
    gamma_g: f64,
) -> Result<f64> {
    multichannel_snr(
        params,
        constants,
        &OperatingPoint { channels: 1, ..*op },
        gamma_g,
    )
}

/// SNR with `op.channels` reference tones, only one of which beats with
/// the signal; the others add relaxation m·ΓG.
pub fn multichannel_snr(
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    op: &OperatingPoint,
    gamma_g: f64,
) -> Result<f64> {
    ensure_non_negative("gamma_g", gamma_g)?;
    let (gamma_p, big) = reference_rates(params, constants, op)?;
    Ok(snr_from_rates(
        params,
        gamma_p,
        big,
        gamma_g,
        op.delta,
        op.channels,
        op.total_time,
    ))
}

/// Upper bound (3√3/(32√m))·C·√(n_NV·K·Γg·t), reached at Γp = 3mΓG with
/// Γ1 = δ = 0.
pub fn saturation_bound(
    params: &NVEnsembleParams,
    gamma_g: f64,
    total_time: f64,
    channels: usize,
) -> f64 {
    SATURATION_CONSTANT / (channels as f64).sqrt()
        * params.contrast
        * (params.n_nv * params.collection_k * gamma_g * total_time).sqrt()
}

/// Shot-noise-limited minimum field (T) after `total_time`:
/// (32√2/(3√3·C))·√(Γ2/(n_NV·K·t)) / γ_NV, the field at which the
/// saturated SNR equals 1.
pub fn shot_noise_sensitivity(
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    total_time: f64,
) -> Result<f64> {
    params.validate()?;
    ensure_positive("total_time", total_time)?;
    Ok(
        32.0 * std::f64::consts::SQRT_2 / (3.0 * 3f64.sqrt() * params.contrast)
            * (params.gamma2 / (params.n_nv * params.collection_k * total_time)).sqrt()
            / constants.gamma_nv,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub snr: f64,
    /// Field giving SNR = 1 at this operating point, T.
    pub b_min: f64,
    /// −3 dB bandwidth √3·Σ, Hz.
    pub bandwidth: f64,
    /// snr divided by its saturation bound.
    pub saturation_gap: f64,
}

impl SensitivityReport {
    pub fn report(&self) -> String {
        crate::analysis::key_value_report(&[
            ("snr", crate::analysis::format_value(self.snr)),
            ("b_min_t", crate::analysis::format_value(self.b_min)),
            (
                "bandwidth_hz",
                crate::analysis::format_value(self.bandwidth),
            ),
            (
                "saturation_gap",
                crate::analysis::format_value(self.saturation_gap),
            ),
        ])
    }
}

/// Analytic report for a signal field `signal_b` (T).
pub fn sensitivity_report(
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    op: &OperatingPoint,
    signal_b: f64,
) -> Result<SensitivityReport> {
    ensure_positive("signal_b", signal_b)?;
    let (gamma_p, big) = reference_rates(params, constants, op)?;
    let gamma_g = induced_relaxation(rabi_frequency(signal_b, constants)?, params.gamma2, 0.0)?;
    let snr = snr_from_rates(
        params,
        gamma_p,
        big,
        gamma_g,
        op.delta,
        op.channels,
        op.total_time,
    );
    let total = gamma_p + params.gamma1 + op.channels as f64 * big;
    Ok(SensitivityReport {
        snr,
        // SNR is linear in the signal field
        b_min: signal_b / snr,
        bandwidth: 3f64.sqrt() * total,
        saturation_gap: snr / saturation_bound(params, gamma_g, op.total_time, op.channels),
    })
}

/// Box constraints for [`optimize_operating_point`]. A coordinate with
/// equal bounds is held fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub laser_power: (f64, f64),
    pub reference_b: (f64, f64),
    pub delta: (f64, f64),
    pub channels: usize,
    pub total_time: f64,
}

impl SearchBox {
    fn validate(&self) -> Result<()> {
        for (name, (lo, hi), allow_zero) in [
            ("laser_power", self.laser_power, false),
            ("reference_b", self.reference_b, false),
            ("delta", self.delta, true),
        ] {
            let lo_ok = if allow_zero { lo >= 0.0 } else { lo > 0.0 };
            if !(lo.is_finite() && hi.is_finite() && lo_ok && hi >= lo) {
                return Err(invalid(
                    name,
                    format!("empty or invalid range [{lo}, {hi}]"),
                ));
            }
        }
        if self.channels == 0 {
            return Err(invalid("channels", "need at least one reference tone"));
        }
        ensure_positive("total_time", self.total_time)
    }
}

/// What [`optimize_operating_point`] maximizes.
pub enum Objective<'a> {
    /// Analytic shot-noise SNR for signal rate Γg.
    ShotNoise {
        gamma_g: f64,
    },
    /// Predicted spectrum SNR under a detector noise model for a signal
    /// field (T).
    NoiseModel {
        detector: &'a DetectorModel,
        signal_b: f64,
    },
    Custom(&'a (dyn Fn(&OperatingPoint) -> f64 + Sync)),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub point: OperatingPoint,
    pub value: f64,
    pub evaluations: usize,
}

const GRID: usize = 9;

/// Coordinate mapping: logarithmic for strictly positive ranges spanning
/// more than a decade, linear otherwise.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new((lo, hi): (f64, f64)) -> Self {
        Self {
            lo,
            hi,
            log: lo > 0.0 && hi / lo > 10.0,
        }
    }
    fn fixed(&self) -> bool {
        self.hi == self.lo
    }
    fn from_unit(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        if self.fixed() {
            self.lo
        } else if self.log {
            self.lo * (self.hi / self.lo).powf(u)
        } else {
            self.lo + u * (self.hi - self.lo)
        }
    }
}

/// Maximizes the objective over the box: a 9-point-per-axis grid scan,
/// then cyclic golden-section refinement of each free coordinate.
/// Deterministic: grid ties resolve to the lowest index.
pub fn optimize_operating_point(
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    bounds: &SearchBox,
    objective: &Objective<'_>,
) -> Result<Optimum> {
    bounds.validate()?;
    params.validate()?;
    let axes = [
        Axis::new(bounds.laser_power),
        Axis::new(bounds.reference_b),
        Axis::new(bounds.delta),
    ];
    let point = |u: [f64; 3]| OperatingPoint {
        laser_power: axes[0].from_unit(u[0]),
        reference_b: axes[1].from_unit(u[1]),
        delta: axes[2].from_unit(u[2]),
        channels: bounds.channels,
        total_time: bounds.total_time,
    };
    let eval = |u: [f64; 3]| -> f64 {
        let op = point(u);
        let v = match objective {
            // √Γg factors out; it is applied to the final value only
            Objective::ShotNoise { .. } => multichannel_snr(params, constants, &op, 1.0),
            Objective::NoiseModel { detector, signal_b } => {
                predicted_snr(detector, params, constants, &op, *signal_b)
            }
            Objective::Custom(f) => Ok(f(&op)),
        };
        match v {
            Ok(v) if v.is_finite() => v,
            _ => f64::NEG_INFINITY,
        }
    };
    let steps: Vec<usize> = axes
        .iter()
        .map(|a| if a.fixed() { 1 } else { GRID })
        .collect();
    let total = steps.iter().product::<usize>();
    let unit = |i: usize, n: usize| {
        if n == 1 {
            0.0
        } else {
            i as f64 / (n - 1) as f64
        }
    };
    let grid_values: Vec<(usize, f64)> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = (
                idx / (steps[1] * steps[2]),
                (idx / steps[2]) % steps[1],
                idx % steps[2],
            );
            (
                idx,
                eval([unit(i, steps[0]), unit(j, steps[1]), unit(k, steps[2])]),
            )
        })
        .collect();
    let (best_idx, mut best) =
        grid_values.iter().fold(
            (0, f64::NEG_INFINITY),
            |acc, &(i, v)| if v > acc.1 { (i, v) } else { acc },
        );
    if !best.is_finite() {
        return Err(Error::Degenerate(
            "objective is not finite anywhere in the box".into(),
        ));
    }
    let mut evaluations = total;
    let mut u = [
        unit(best_idx / (steps[1] * steps[2]), steps[0]),
        unit((best_idx / steps[2]) % steps[1], steps[1]),
        unit(best_idx % steps[2], steps[2]),
    ];
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _cycle in 0..60 {
        let before = best;
        for c in 0..3 {
            if axes[c].fixed() {
                continue;
            }
            let base = u;
            let at = |x: f64| {
                let mut v = base;
                v[c] = x;
                eval(v)
            };
            let (mut a, mut b) = (0.0, 1.0);
            let mut x1 = b - g * (b - a);
            let mut x2 = a + g * (b - a);
            let (mut f1, mut f2) = (at(x1), at(x2));
            evaluations += 2;
            while b - a > 1e-12 {
                if f1 > f2 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - g * (b - a);
                    f1 = at(x1);
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + g * (b - a);
                    f2 = at(x2);
                }
                evaluations += 1;
            }
            let mut candidates = vec![0.5 * (a + b), 0.0, 1.0];
            candidates.retain(|x| x.is_finite());
            for x in candidates {
                let v = at(x);
                evaluations += 1;
                if v > best {
                    best = v;
                    u[c] = x;
                }
            }
        }
        if best - before <= 1e-13 * best.abs() {
            break;
        }
    }
    if let Objective::ShotNoise { gamma_g } = objective {
        best *= gamma_g.sqrt();
    }
    Ok(Optimum {
        point: point(u),
        value: best,
        evaluations,
    })
}

/// A comb of reference tones covering a band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceGrid {
    /// Hz.
    pub spacing: f64,
    pub channels: usize,
    /// Largest signal-to-nearest-tone distance, spacing/2, Hz.
    pub coverage_radius: f64,
    /// SNR loss factor √m relative to one reference.
    pub sensitivity_penalty: f64,
    pub warnings: Vec<String>,
}

impl ReferenceGrid {
    /// Tone frequencies, centred on `center`.
    pub fn tones(&self, center: f64) -> Vec<f64> {
        let first = center - (self.channels as f64 - 1.0) / 2.0 * self.spacing;
        (0..self.channels)
            .map(|i| first + i as f64 * self.spacing)
            .collect()
    }

    pub fn report(&self) -> String {
        let mut out = crate::analysis::key_value_report(&[
            (
                "grid_spacing_hz",
                crate::analysis::format_value(self.spacing),
            ),
            ("grid_channels", self.channels.to_string()),
            (
                "grid_coverage_radius_hz",
                crate::analysis::format_value(self.coverage_radius),
            ),
            (
                "grid_sensitivity_penalty",
                crate::analysis::format_value(self.sensitivity_penalty),
            ),
        ]);
        for w in &self.warnings {
            out.push_str(&format!("warning={w}\n"));
        }
        out
    }
}

/// Plans a comb whose spacing is twice the largest usable beat `max_beat`
/// (each tone covers ±max_beat) and whose m = ⌈band/spacing⌉ tones span
/// `band`.
pub fn plan_reference_grid(
    band: f64,
    max_beat: f64,
    params: &NVEnsembleParams,
    m_max: usize,
) -> Result<ReferenceGrid> {
    ensure_positive("band", band)?;
    ensure_positive("max_beat", max_beat)?;
    let spacing = 2.0 * max_beat;
    let required = ((band / spacing) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    if required > m_max {
        return Err(Error::TooManyChannels {
            band,
            required,
            max: m_max,
        });
    }
    let mut warnings = Vec::new();
    let odmr_fwhm = 2.0 * params.gamma2;
    if band > odmr_fwhm {
        warnings.push(format!(
            "band {band} Hz exceeds the ODMR linewidth {odmr_fwhm} Hz; outer channels respond weakly"
        ));
    }
    Ok(ReferenceGrid {
        spacing,
        channels: required,
        coverage_radius: spacing / 2.0,
        sensitivity_penalty: (required as f64).sqrt(),
        warnings,
    })
}

/// One row of a parameter sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: f64,
    pub snr: f64,
    pub b_min: f64,
    pub bandwidth: f64,
}

/// CSV with header `parameter,snr,b_min_t,bandwidth_hz`.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("parameter,snr,b_min_t,bandwidth_hz\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.parameter, r.snr, r.b_min, r.bandwidth
        ));
    }
    out
}
