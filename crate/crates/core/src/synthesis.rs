//! Photodetector voltage traces from population trajectories.
//!
//! The detected photon rate is R(t) = n_NV·K·Γp·[1 − C(1 − P0(t))] and the
//! photovoltage is a single linear responsivity times R. Three noise sources
//! are added on top:
//!
//! * shot noise, Gaussian with variance R·Δt photons per sample;
//! * laser intensity noise, k·R·ε(t) where ε has the one-sided PSD
//!   ε0²/(1 + (f/f_c)^α);
//! * white electronic noise of the photodetector.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{integrate_sampled, DriveScenario};
use crate::error::{ensure_non_negative, ensure_positive, invalid, Error, Result};
use crate::noise::{chunk_rng, flicker_shape, shape_noise, white_gaussian, NoiseKind};
use crate::physics::{
    equilibrium_population, induced_relaxation, pump_rate, rabi_frequency, NVEnsembleParams,
    PhysicalConstants,
};
use crate::sensing::OperatingPoint;

/// Samples per independently seeded noise chunk.
pub const CHUNK_LEN: usize = 1 << 21;
/// Photons per sample below which the Gaussian shot-noise model is doubtful.
pub const GAUSSIAN_PHOTON_THRESHOLD: f64 = 100.0;

/// Photodetector and laser noise model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    /// Responsivity, V per (photon/s).
    pub volts_per_photon_rate: f64,
    /// White electronic noise, V/√Hz (one-sided).
    pub electronic_noise_density: f64,
    /// Relative intensity noise ε0 below the corner, 1/√Hz (one-sided).
    pub laser_noise_fraction: f64,
    /// α of the 1/f^α roll-off above the corner.
    pub laser_noise_exponent: f64,
    /// Corner frequency of the laser noise, Hz.
    pub laser_noise_corner: f64,
    /// Hz.
    pub sample_rate: f64,
    /// Photon shot noise on or off.
    #[serde(default = "enabled")]
    pub shot_noise: bool,
}

fn enabled() -> bool {
    true
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            volts_per_photon_rate: 2e-17,
            electronic_noise_density: 0.0,
            laser_noise_fraction: 0.0,
            laser_noise_exponent: 1.0,
            laser_noise_corner: 100.0,
            sample_rate: 2000.0,
            shot_noise: true,
        }
    }
}

impl DetectorModel {
    /// A detector with every noise source switched off.
    pub fn noiseless(volts_per_photon_rate: f64, sample_rate: f64) -> Self {
        Self {
            volts_per_photon_rate,
            sample_rate,
            shot_noise: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("volts_per_photon_rate", self.volts_per_photon_rate)?;
        ensure_non_negative("electronic_noise_density", self.electronic_noise_density)?;
        ensure_non_negative("laser_noise_fraction", self.laser_noise_fraction)?;
        ensure_non_negative("laser_noise_corner", self.laser_noise_corner)?;
        ensure_positive("sample_rate", self.sample_rate)?;
        if !(0.0..=2.0).contains(&self.laser_noise_exponent) {
            return Err(invalid(
                "laser_noise_exponent",
                format!("must lie in [0, 2], got {}", self.laser_noise_exponent),
            ));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        !self.shot_noise && self.electronic_noise_density == 0.0 && self.laser_noise_fraction == 0.0
    }

    /// One-sided noise PSD of the voltage at frequency `f` for a mean photon
    /// rate `rate`, V²/Hz. Includes shot noise.
    pub fn noise_psd(&self, rate: f64, f: f64) -> f64 {
        let k = self.volts_per_photon_rate;
        let shot = if self.shot_noise {
            2.0 * k * k * rate
        } else {
            0.0
        };
        let laser = (k * rate * self.laser_noise_fraction).powi(2)
            * flicker_shape(f, self.laser_noise_corner, self.laser_noise_exponent);
        shot + laser + self.electronic_noise_density.powi(2)
    }
}

/// A sampled photovoltage record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeTrace {
    pub sample_rate: f64,
    pub samples: Vec<f64>,
    pub seed: u64,
    /// SHA-256 (hex) of the inputs that produced the trace.
    pub fingerprint: String,
}

impl TimeTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 / self.sample_rate
    }
}

/// Detected photon rate for population `p0`, photons/s.
pub fn fluorescence_rate(p0: f64, params: &NVEnsembleParams, gamma_p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(invalid("p0", format!("must lie in [0, 1], got {p0}")));
    }
    Ok(rate_unchecked(p0, params, gamma_p))
}

#[inline]
fn rate_unchecked(p0: f64, params: &NVEnsembleParams, gamma_p: f64) -> f64 {
    params.bright_photon_rate(gamma_p) * (1.0 - params.contrast * (1.0 - p0))
}

/// SHA-256 over the JSON encoding of all inputs of a synthesis run.
pub fn scenario_fingerprint(
    scenario: &DriveScenario,
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    detector: &DetectorModel,
    seed: u64,
) -> String {
    let doc = serde_json::json!({
        "scenario": scenario,
        "params": params,
        "constants": constants,
        "detector": detector,
        "seed": seed,
    });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

/// Integrates the scenario, maps it to volts and adds the detector noise.
///
/// Deterministic in `seed`: noise is drawn per chunk of [`CHUNK_LEN`]
/// samples from streams keyed by (seed, chunk, kind), so the parallel
/// schedule never changes the result.
pub fn synthesize_trace(
    scenario: &DriveScenario,
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    detector: &DetectorModel,
    seed: u64,
) -> Result<TimeTrace> {
    detector.validate()?;
    let fs = detector.sample_rate;
    let beat = scenario.max_beat();
    if fs <= 2.0 * beat {
        return Err(Error::Aliasing {
            sample_rate: fs,
            beat,
        });
    }
    let gamma_p = pump_rate(scenario.laser_power, params)?;
    let trajectory = integrate_sampled(scenario, params, constants, fs, None)?;
    let mut samples = trajectory.p0_values;
    let k = detector.volts_per_photon_rate;

    let min_photons = samples
        .iter()
        .map(|&p| rate_unchecked(p, params, gamma_p) / fs)
        .fold(f64::INFINITY, f64::min);
    if detector.shot_noise && min_photons < GAUSSIAN_PHOTON_THRESHOLD {
        log::warn!(
            "only {min_photons:.1} photons per sample; Gaussian shot noise needs R·dt > {GAUSSIAN_PHOTON_THRESHOLD}"
        );
    }

    let shot_scale = if detector.shot_noise {
        k * fs.sqrt()
    } else {
        0.0
    };
    let electronic_std = detector.electronic_noise_density * (fs / 2.0).sqrt();
    let laser = detector.laser_noise_fraction;
    samples
        .par_chunks_mut(CHUNK_LEN)
        .enumerate()
        .for_each(|(chunk, block)| {
            let n = block.len();
            let chunk = chunk as u64;
            for p in block.iter_mut() {
                *p = rate_unchecked(*p, params, gamma_p);
            }
            let shot = (shot_scale > 0.0)
                .then(|| white_gaussian(&mut chunk_rng(seed, chunk, NoiseKind::Shot), n));
            let electronic = (electronic_std > 0.0)
                .then(|| white_gaussian(&mut chunk_rng(seed, chunk, NoiseKind::Electronic), n));
            let intensity = (laser > 0.0).then(|| {
                let white = white_gaussian(&mut chunk_rng(seed, chunk, NoiseKind::Laser), n);
                shape_noise(&white, fs, |f| {
                    laser
                        * laser
                        * flicker_shape(
                            f,
                            detector.laser_noise_corner,
                            detector.laser_noise_exponent,
                        )
                })
            });
            for i in 0..n {
                let r = block[i];
                let mut v = k * r;
                if let Some(z) = &shot {
                    v += shot_scale * r.sqrt() * z[i];
                }
                if let Some(eps) = &intensity {
                    v += k * r * eps[i];
                }
                if let Some(z) = &electronic {
                    v += electronic_std * z[i];
                }
                block[i] = v;
            }
        });
    Ok(TimeTrace {
        sample_rate: fs,
        samples,
        seed,
        fingerprint: scenario_fingerprint(scenario, params, constants, detector, seed),
    })
}

/// Rates at an operating point: (Γp, ΓG, Σ = Γp + Γ1 + mΓG).
fn operating_rates(
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    op: &OperatingPoint,
) -> Result<(f64, f64, f64)> {
    op.validate()?;
    let gamma_p = pump_rate(op.laser_power, params)?;
    let big_g = induced_relaxation(
        rabi_frequency(op.reference_b, constants)?,
        params.gamma2,
        0.0,
    )?;
    let total = gamma_p + params.gamma1 + op.channels as f64 * big_g;
    Ok((gamma_p, big_g, total))
}

/// Beat amplitude of the photovoltage per tesla of signal field, V/T.
pub fn voltage_responsivity(
    detector: &DetectorModel,
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    op: &OperatingPoint,
) -> Result<f64> {
    let (gamma_p, big_g, total) = operating_rates(params, constants, op)?;
    // √Γg per tesla
    let root_rate = constants.gamma_nv / (2.0 * params.gamma2).sqrt();
    let p0_per_tesla = gamma_p * big_g.sqrt() * root_rate / (total * total.hypot(op.delta));
    Ok(detector.volts_per_photon_rate
        * params.bright_photon_rate(gamma_p)
        * params.contrast
        * p0_per_tesla)
}

/// Mean detected photon rate at an operating point, photons/s.
pub fn mean_photon_rate(
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    op: &OperatingPoint,
) -> Result<f64> {
    let (gamma_p, big_g, _) = operating_rates(params, constants, op)?;
    let p0 = equilibrium_population(gamma_p, params.gamma1, op.channels as f64 * big_g)?;
    Ok(rate_unchecked(p0, params, gamma_p))
}

/// Sensitivity (T/√Hz) that a spectrum-SNR measurement reaches under the
/// detector's noise model: the field whose beat peak equals twice the
/// baseline RMS after 1 s.
///
/// For one-sided noise PSD S at δ the amplitude-spectrum baseline RMS after
/// time t is √(2S/t), so SNR = V_sig·√t / (2√(2S)).
pub fn predicted_sensitivity(
    detector: &DetectorModel,
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    op: &OperatingPoint,
) -> Result<f64> {
    detector.validate()?;
    let responsivity = voltage_responsivity(detector, params, constants, op)?;
    let psd = detector.noise_psd(mean_photon_rate(params, constants, op)?, op.delta);
    Ok(2.0 * (2.0 * psd).sqrt() / responsivity)
}

/// Expected spectrum SNR of a signal field `signal_b` after `op.total_time`.
pub fn predicted_snr(
    detector: &DetectorModel,
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    op: &OperatingPoint,
    signal_b: f64,
) -> Result<f64> {
    ensure_non_negative("signal_b", signal_b)?;
    Ok(signal_b * op.total_time.sqrt() / predicted_sensitivity(detector, params, constants, op)?)
}

/// Sets `laser_noise_fraction` so that [`predicted_sensitivity`] equals
/// `target` (T/√Hz). Fails when the target is better than what shot and
/// electronic noise alone allow.
pub fn calibrate_noise_to_sensitivity(
    detector: &DetectorModel,
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    target: f64,
    op: &OperatingPoint,
) -> Result<DetectorModel> {
    ensure_positive("target", target)?;
    let mut floor = *detector;
    floor.laser_noise_fraction = 0.0;
    let limit = predicted_sensitivity(&floor, params, constants, op)?;
    let rel = (target - limit) / limit;
    if rel < -1e-12 {
        return Err(Error::BelowNoiseLimit { target, limit });
    }
    if rel.abs() <= 1e-12 {
        return Ok(floor);
    }
    let responsivity = voltage_responsivity(detector, params, constants, op)?;
    let rate = mean_photon_rate(params, constants, op)?;
    let target_psd = (target * responsivity / 2.0).powi(2) / 2.0;
    let excess = target_psd - floor.noise_psd(rate, op.delta);
    let shape = flicker_shape(
        op.delta,
        detector.laser_noise_corner,
        detector.laser_noise_exponent,
    );
    floor.laser_noise_fraction =
        (excess / shape).max(0.0).sqrt() / (detector.volts_per_photon_rate * rate);
    Ok(floor)
}
