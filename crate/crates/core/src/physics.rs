//! Closed-form physics of the optically pumped, microwave-driven NV two-level
//! system.
//!
//! Unit convention used throughout the crate: every rate (`gamma1`, `gamma_g`,
//! `gamma_p`, ...) and every beat frequency `delta` is an ordinary frequency
//! in Hz. Time evolution runs at the angular rate `2π × rate`, so a population
//! relaxes as `exp(-2π Σ t)` and a beat term oscillates as `cos(2π δ t + φ)`.
//! With this choice rates and beats enter the steady-state formulas in the
//! same units and the factors of 2π cancel.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, invalid, Result};

pub const TAU: f64 = 2.0 * PI;

/// Ratio Γg/ΓG above which the first-order heterodyne solution is flagged.
pub const WEAK_SIGNAL_RATIO: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConstants {
    /// NV gyromagnetic ratio, Hz/T.
    pub gamma_nv: f64,
    /// Zero-field splitting, Hz.
    pub d_zfs: f64,
    /// 14N hyperfine splitting, Hz.
    pub a_hf: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            gamma_nv: 2.803e10,
            d_zfs: 2.87e9,
            a_hf: 2.16e6,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("gamma_nv", self.gamma_nv)?;
        ensure_positive("d_zfs", self.d_zfs)?;
        ensure_positive("a_hf", self.a_hf)
    }
}

/// Rates and ensemble constants of the NV sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NVEnsembleParams {
    /// Intrinsic longitudinal relaxation Γ1, Hz.
    pub gamma1: f64,
    /// Dephasing rate Γ2, Hz.
    pub gamma2: f64,
    /// Fluorescence contrast between bright and dark state.
    pub contrast: f64,
    /// Number of NV centers.
    pub n_nv: f64,
    /// Detected photons per polarization event.
    pub collection_k: f64,
    /// Polarization rate per watt of laser power, Hz/W.
    pub pump_coeff: f64,
}

impl NVEnsembleParams {
    /// Γ2 estimated from half the ODMR FWHM (482 kHz).
    pub const GAMMA2_LINEWIDTH: f64 = 241e3;
    /// Effective Γ2 obtained when it is left free in the responsivity fit.
    pub const GAMMA2_EFFECTIVE: f64 = 152e3;
    /// Alternative effective value (figure caption of the responsivity fit).
    pub const GAMMA2_EFFECTIVE_ALT: f64 = 144e3;

    /// Parameters with Γ2 taken from the ODMR linewidth.
    pub fn linewidth_preset() -> Self {
        Self {
            gamma1: 102.0,
            gamma2: Self::GAMMA2_LINEWIDTH,
            contrast: 0.02,
            n_nv: 2.8e13,
            collection_k: 10.0,
            pump_coeff: 250.0,
        }
    }

    /// Parameters with the fitted effective Γ2.
    pub fn effective_preset() -> Self {
        Self {
            gamma2: Self::GAMMA2_EFFECTIVE,
            ..Self::linewidth_preset()
        }
    }

    /// Looks up a named preset (`linewidth` or `effective`).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "linewidth" => Some(Self::linewidth_preset()),
            "effective" => Some(Self::effective_preset()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("gamma1", self.gamma1)?;
        ensure_positive("gamma2", self.gamma2)?;
        if !(self.contrast > 0.0 && self.contrast < 1.0) {
            return Err(invalid(
                "contrast",
                format!("must lie in (0, 1), got {}", self.contrast),
            ));
        }
        if !(self.n_nv >= 1.0) || !self.n_nv.is_finite() {
            return Err(invalid("n_nv", format!("must be >= 1, got {}", self.n_nv)));
        }
        ensure_positive("collection_k", self.collection_k)?;
        ensure_positive("pump_coeff", self.pump_coeff)
    }

    /// Detected photon rate of a fully polarized ensemble, photons/s.
    pub fn bright_photon_rate(&self, gamma_p: f64) -> f64 {
        self.n_nv * self.collection_k * gamma_p
    }
}

impl Default for NVEnsembleParams {
    fn default() -> Self {
        Self::linewidth_preset()
    }
}

/// A continuous microwave drive tone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicrowaveTone {
    /// Magnetic field amplitude, T.
    pub amplitude_b: f64,
    /// Carrier frequency, Hz.
    pub frequency: f64,
    /// Phase in [0, 2π).
    pub phase: f64,
}

impl MicrowaveTone {
    pub fn new(amplitude_b: f64, frequency: f64, phase: f64) -> Result<Self> {
        ensure_non_negative("amplitude_b", amplitude_b)?;
        ensure_positive("frequency", frequency)?;
        if !phase.is_finite() {
            return Err(invalid("phase", "must be finite"));
        }
        Ok(Self {
            amplitude_b,
            frequency,
            phase: normalize_phase(phase),
        })
    }
}

/// Wraps an angle into [0, 2π).
pub fn normalize_phase(phase: f64) -> f64 {
    let wrapped = phase.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if wrapped >= TAU {
        0.0
    } else {
        wrapped
    }
}

/// Rabi frequencies and the rates they induce, for one signal/reference pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedRates {
    pub g: f64,
    pub big_g: f64,
    pub gamma_g: f64,
    pub gamma_big_g: f64,
    pub gamma_p: f64,
}

impl DerivedRates {
    /// Rates for resonant signal and reference drives.
    pub fn resonant(
        params: &NVEnsembleParams,
        constants: &PhysicalConstants,
        signal_b: f64,
        reference_b: f64,
        laser_power: f64,
    ) -> Result<Self> {
        let g = rabi_frequency(signal_b, constants)?;
        let big_g = rabi_frequency(reference_b, constants)?;
        Ok(Self {
            g,
            big_g,
            gamma_g: induced_relaxation(g, params.gamma2, 0.0)?,
            gamma_big_g: induced_relaxation(big_g, params.gamma2, 0.0)?,
            gamma_p: pump_rate(laser_power, params)?,
        })
    }
}

/// Rabi frequency g = γ_NV·b/√2 of a field amplitude `b` (tesla), Hz.
pub fn rabi_frequency(b: f64, constants: &PhysicalConstants) -> Result<f64> {
    ensure_non_negative("b", b)?;
    Ok(constants.gamma_nv * b / SQRT_2)
}

/// Field amplitude (tesla) whose induced relaxation on resonance equals `rate`.
pub fn field_for_relaxation(rate: f64, gamma2: f64, constants: &PhysicalConstants) -> Result<f64> {
    ensure_non_negative("rate", rate)?;
    ensure_positive("gamma2", gamma2)?;
    Ok((rate * gamma2).sqrt() * SQRT_2 / constants.gamma_nv)
}

/// Incoherent transition rate g²/Γ2 induced by a weak drive, with a
/// Lorentzian detuning factor Γ2²/(Γ2² + Δ²).
pub fn induced_relaxation(g: f64, gamma2: f64, detuning: f64) -> Result<f64> {
    ensure_positive("gamma2", gamma2)?;
    if !g.is_finite() || !detuning.is_finite() {
        return Err(invalid("g", "rabi frequency and detuning must be finite"));
    }
    let lorentz = gamma2 * gamma2 / (gamma2 * gamma2 + detuning * detuning);
    Ok(g * g / gamma2 * lorentz)
}

/// Polarization rate Γp = pump_coeff × P_L.
pub fn pump_rate(laser_power: f64, params: &NVEnsembleParams) -> Result<f64> {
    ensure_non_negative("laser_power", laser_power)?;
    Ok(params.pump_coeff * laser_power)
}

fn ensure_rates(gamma_p: f64, gamma1: f64, gamma_g: f64) -> Result<()> {
    ensure_non_negative("gamma_p", gamma_p)?;
    ensure_non_negative("gamma1", gamma1)?;
    ensure_non_negative("gamma_g", gamma_g)
}

/// Steady-state population of |0⟩ under pumping and relaxation.
pub fn equilibrium_population(gamma_p: f64, gamma1: f64, gamma_g: f64) -> Result<f64> {
    ensure_rates(gamma_p, gamma1, gamma_g)?;
    let total = gamma_p + gamma1 + gamma_g;
    if total == 0.0 {
        return Err(invalid("rates", "at least one rate must be positive"));
    }
    Ok(0.5 + gamma_p / (2.0 * total))
}

/// Population of |0⟩ at time `t` after starting from `p0_initial` with
/// constant rates.
pub fn transient_population(
    t: f64,
    p0_initial: f64,
    gamma_p: f64,
    gamma1: f64,
    gamma_g: f64,
) -> Result<f64> {
    ensure_non_negative("t", t)?;
    if !(0.0..=1.0).contains(&p0_initial) {
        return Err(invalid(
            "p0_initial",
            format!("must lie in [0, 1], got {p0_initial}"),
        ));
    }
    let p_inf = equilibrium_population(gamma_p, gamma1, gamma_g)?;
    let decay = (-TAU * (gamma_p + gamma1 + gamma_g) * t).exp();
    Ok(p0_initial * decay + p_inf * (1.0 - decay))
}

/// First-order steady-state oscillation of P0 under a signal/reference pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeterodyneResponse {
    /// Oscillation amplitude of P0 (probability).
    pub amplitude: f64,
    /// Oscillation frequency, Hz (equals the beat δ).
    pub frequency: f64,
    /// Phase of `amplitude·cos(2πδt + phase)`, in [0, 2π).
    pub phase: f64,
    /// Whether Γg ≤ 10⁻²·ΓG holds, i.e. the perturbative result is trustworthy.
    pub perturbative: bool,
}

/// Linear heterodyne response of P0 to the beat between reference and signal.
///
/// `phi` is the phase of the interference term `cos(2πδt + phi)` in the
/// relaxation rate. The response lags that term by `atan(δ/Σ)` and is
/// inverted (more relaxation means less population in |0⟩), so the output
/// phase is `phi + π − atan(δ/Σ)` with Σ = Γp + Γ1 + ΓG.
pub fn heterodyne_response(
    gamma_p: f64,
    gamma1: f64,
    gamma_big_g: f64,
    gamma_g: f64,
    delta: f64,
    phi: f64,
) -> Result<HeterodyneResponse> {
    ensure_rates(gamma_p, gamma1, gamma_g)?;
    ensure_non_negative("gamma_big_g", gamma_big_g)?;
    if !delta.is_finite() || !phi.is_finite() {
        return Err(invalid("delta", "beat frequency and phase must be finite"));
    }
    if gamma_big_g == 0.0 && gamma_g > 0.0 {
        return Err(invalid(
            "gamma_big_g",
            "reference drive is zero, no interference term exists",
        ));
    }
    let total = gamma_p + gamma1 + gamma_big_g;
    if total == 0.0 {
        return Err(invalid("rates", "at least one rate must be positive"));
    }
    let perturbative = gamma_g <= WEAK_SIGNAL_RATIO * gamma_big_g;
    if !perturbative {
        log::warn!(
            "gamma_g/gamma_G = {:.3e} exceeds {WEAK_SIGNAL_RATIO:e}; first-order response is approximate",
            gamma_g / gamma_big_g
        );
    }
    let amplitude =
        gamma_p * (gamma_big_g * gamma_g).sqrt() / (total * (total * total + delta * delta).sqrt());
    Ok(HeterodyneResponse {
        amplitude,
        frequency: delta.abs(),
        phase: normalize_phase(phi + PI - (delta / total).atan()),
        perturbative,
    })
}

/// The −3 dB bandwidth √3·(Γp + Γ1 + ΓG), Hz. At this beat frequency the
/// heterodyne amplitude falls to half of its δ = 0 value.
pub fn bandwidth_3db(gamma_p: f64, gamma1: f64, gamma_big_g: f64) -> f64 {
    3f64.sqrt() * (gamma_p + gamma1 + gamma_big_g)
}

/// Fluorescence-vs-frequency curve of the hyperfine triplet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdmrSpectrum {
    pub frequencies: Vec<f64>,
    /// Fluorescence relative to a fully polarized ensemble, 1 − C(1 − P0).
    pub fluorescence: Vec<f64>,
    /// Centers of the three hyperfine lines, Hz.
    pub line_centers: [f64; 3],
    pub warnings: Vec<String>,
}

/// ODMR spectrum: equilibrium fluorescence while sweeping a probe tone of
/// amplitude `probe_b` across three equally weighted hyperfine lines at
/// `line_center + {−a_hf, 0, +a_hf}`.
pub fn odmr_spectrum(
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    probe_b: f64,
    laser_power: f64,
    line_center: f64,
    freq_grid: &[f64],
) -> Result<OdmrSpectrum> {
    params.validate()?;
    constants.validate()?;
    if freq_grid.is_empty() {
        return Err(invalid("freq_grid", "frequency grid is empty"));
    }
    let gamma_p = pump_rate(laser_power, params)?;
    let g = rabi_frequency(probe_b, constants)?;
    let mut warnings = Vec::new();
    let peak_rate = induced_relaxation(g, params.gamma2, 0.0)?;
    if peak_rate > params.gamma2 / 10.0 {
        warnings.push(format!(
            "probe drive is strong (gamma_g = {peak_rate:.3e} Hz > gamma2/10); lines are power broadened"
        ));
    }
    let line_centers = [
        line_center - constants.a_hf,
        line_center,
        line_center + constants.a_hf,
    ];
    let mut fluorescence = Vec::with_capacity(freq_grid.len());
    for &f in freq_grid {
        let mut gamma_g = 0.0;
        for &c in &line_centers {
            gamma_g += induced_relaxation(g, params.gamma2, f - c)? / 3.0;
        }
        let p0 = if gamma_p + params.gamma1 + gamma_g == 0.0 {
            1.0
        } else {
            equilibrium_population(gamma_p, params.gamma1, gamma_g)?
        };
        fluorescence.push(1.0 - params.contrast * (1.0 - p0));
    }
    Ok(OdmrSpectrum {
        frequencies: freq_grid.to_vec(),
        fluorescence,
        line_centers,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn rabi_frequency_examples() {
        let c = PhysicalConstants::default();
        let g = rabi_frequency(220e-9, &c).unwrap();
        assert!((g - 4360.44).abs() < 0.01, "{g}");
        assert_eq!(rabi_frequency(0.0, &c).unwrap(), 0.0);
        // 2.803e10 * 36.6e-9 / sqrt(2)
        let g = rabi_frequency(36.6e-9, &c).unwrap();
        assert!(close(g, 725.419_43, 1e-7), "{g}");
        assert!(rabi_frequency(-1e-9, &c).is_err());
    }

    #[test]
    fn induced_relaxation_examples() {
        let r = induced_relaxation(725.5, 241e3, 0.0).unwrap();
        assert!(close(r, 725.5f64.powi(2) / 241e3, 1e-15));
        assert!((r - 2.184).abs() < 1e-3);
        let r = induced_relaxation(4360.5, 241e3, 0.0).unwrap();
        assert!((r - 78.9).abs() < 0.05, "{r}");
        let on = induced_relaxation(1000.0, 241e3, 0.0).unwrap();
        let half = induced_relaxation(1000.0, 241e3, 241e3).unwrap();
        assert!(close(half, on / 2.0, 1e-14));
        assert!(induced_relaxation(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn pump_rate_examples() {
        let p = NVEnsembleParams::default();
        assert!(close(pump_rate(0.8, &p).unwrap(), 200.0, 1e-14));
        assert_eq!(pump_rate(0.0, &p).unwrap(), 0.0);
        assert!(close(pump_rate(1.2, &p).unwrap(), 300.0, 1e-14));
        assert!(pump_rate(-0.1, &p).is_err());
    }

    #[test]
    fn equilibrium_examples() {
        assert_eq!(equilibrium_population(0.0, 102.0, 5.0).unwrap(), 0.5);
        let p = equilibrium_population(204.0, 102.0, 0.0).unwrap();
        assert!(close(p, 0.5 + 204.0 / 612.0, 1e-15));
        assert!((p - 0.833_333).abs() < 1e-6);
        assert!(equilibrium_population(0.0, 0.0, 0.0).is_err());
        let big = equilibrium_population(204.0, 102.0, 1e12).unwrap();
        assert!((big - 0.5).abs() < 1e-9);
    }

    #[test]
    fn transient_examples() {
        let p = transient_population(0.0, 0.3, 204.0, 102.0, 5.0).unwrap();
        assert_eq!(p, 0.3);
        let inf = equilibrium_population(204.0, 102.0, 5.0).unwrap();
        let late = transient_population(10.0, 0.3, 204.0, 102.0, 5.0).unwrap();
        assert!((late - inf).abs() < 1e-15);
        // one e-folding of the revival: t = 1/(2π·306 Hz)
        let p = transient_population(1.0 / (TAU * 306.0), 0.5, 204.0, 102.0, 0.0).unwrap();
        let expected = 0.5 + (204.0 / 612.0) * (1.0 - (-1f64).exp());
        assert!(close(p, expected, 1e-12));
        assert!((p - 0.7107).abs() < 1e-4, "{p}");
        assert!(transient_population(-1.0, 0.5, 1.0, 1.0, 0.0).is_err());
        assert!(transient_population(1.0, 1.5, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn transient_satisfies_rate_ode() {
        let (gp, g1, gg, p_init) = (204.0, 102.0, 30.0, 0.55);
        let total = gp + g1 + gg;
        let h = 1e-6 / total;
        for &t in &[0.0002, 0.001, 0.003] {
            let p = |tt: f64| transient_population(tt, p_init, gp, g1, gg).unwrap();
            let deriv = (p(t + h) - p(t - h)) / (2.0 * h);
            let p0 = p(t);
            // P0' = 2π[−(Γ1+Γg)/2·(P0−P1) + Γp·P1]
            let rhs = TAU * (-(g1 + gg) / 2.0 * (2.0 * p0 - 1.0) + gp * (1.0 - p0));
            assert!(
                ((deriv - rhs) / rhs).abs() < 1e-6,
                "t={t}: {deriv} vs {rhs}"
            );
        }
    }

    #[test]
    fn heterodyne_examples() {
        let r = heterodyne_response(204.0, 102.0, 78.9, 0.0, 100.0, 0.3).unwrap();
        assert_eq!(r.amplitude, 0.0);
        let r = heterodyne_response(204.0, 102.0, 78.9, 0.1, 0.0, 0.4).unwrap();
        assert!((r.phase - (0.4 + PI)).abs() < 1e-12);
        let r = heterodyne_response(204.0, 102.0, 78.9, 2.18, 0.0, 0.0).unwrap();
        let expected = 204.0 * (78.9f64 * 2.18).sqrt() / 384.9f64.powi(2);
        assert!(close(r.amplitude, expected, 1e-12));
        assert!((r.amplitude - 1.806e-2).abs() < 1e-5, "{}", r.amplitude);
        assert!(!r.perturbative);
        assert!(heterodyne_response(204.0, 102.0, 0.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn bandwidth_examples() {
        let bw = bandwidth_3db(204.0, 102.0, 78.9);
        assert!((bw - 666.66).abs() < 0.05, "{bw}");
        assert_eq!(bandwidth_3db(0.0, 0.0, 0.0), 0.0);
        let a0 = heterodyne_response(204.0, 102.0, 78.9, 1e-3, 0.0, 0.0)
            .unwrap()
            .amplitude;
        let a3 = heterodyne_response(204.0, 102.0, 78.9, 1e-3, bw, 0.0)
            .unwrap()
            .amplitude;
        assert!((a3 / a0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn amplitude_is_maximized_at_one_third_of_the_other_rates() {
        // golden-section search over Γ_G against the stationarity condition
        // d/dΓG [√ΓG/(a + ΓG)²] = 0  ⇒  ΓG = a/3 with a = Γp + Γ1
        let (gp, g1) = (204.0, 102.0);
        let f = |gg: f64| {
            heterodyne_response(gp, g1, gg, 1e-6, 0.0, 0.0)
                .unwrap()
                .amplitude
        };
        let (mut a, mut b) = (1.0, 3000.0);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let best = 0.5 * (a + b);
        let stationary = (gp + g1) / 3.0;
        assert!(((best - stationary) / stationary).abs() < 1e-6, "{best}");
    }

    #[test]
    fn odmr_flat_without_probe() {
        let p = NVEnsembleParams::default();
        let c = PhysicalConstants::default();
        let grid: Vec<f64> = (0..101).map(|i| 2.87e9 + (i as f64 - 50.0) * 1e5).collect();
        let s = odmr_spectrum(&p, &c, 0.0, 0.816, 2.87e9, &grid).unwrap();
        let first = s.fluorescence[0];
        assert!(s.fluorescence.iter().all(|&v| v == first));
        assert!(odmr_spectrum(&p, &c, 1e-9, 0.816, 2.87e9, &[]).is_err());
    }

    #[test]
    fn odmr_triplet_minima_at_hyperfine_lines() {
        let p = NVEnsembleParams::default();
        let c = PhysicalConstants::default();
        let center = 2.87e9;
        let grid: Vec<f64> = (0..=8000)
            .map(|i| center + (i as f64 - 4000.0) * 1e3)
            .collect();
        let s = odmr_spectrum(&p, &c, 365e-9, 0.816, center, &grid).unwrap();
        let mut minima = Vec::new();
        for i in 1..grid.len() - 1 {
            let (l, m, r) = (
                s.fluorescence[i - 1],
                s.fluorescence[i],
                s.fluorescence[i + 1],
            );
            if m < l && m <= r {
                minima.push(grid[i]);
            }
        }
        assert_eq!(minima.len(), 3, "{minima:?}");
        for (found, expected) in minima
            .iter()
            .zip([center - 2.16e6, center, center + 2.16e6])
        {
            assert!((found - expected).abs() <= 1e3, "{found} vs {expected}");
        }
    }

    #[test]
    fn odmr_symmetric_about_center() {
        let p = NVEnsembleParams::default();
        let c = PhysicalConstants::default();
        let center = 2.87e9;
        let grid: Vec<f64> = (0..=400)
            .map(|i| center + (i as f64 - 200.0) * 2.5e4)
            .collect();
        let s = odmr_spectrum(&p, &c, 100e-9, 0.816, center, &grid).unwrap();
        let n = grid.len();
        for i in 0..n / 2 {
            let (a, b) = (s.fluorescence[i], s.fluorescence[n - 1 - i]);
            assert!((a - b).abs() < 1e-14, "{i}: {a} vs {b}");
        }
    }

    #[test]
    fn induced_relaxation_lorentzian_area() {
        // ∫ g²/Γ2 · Γ2²/(Γ2²+Δ²) dΔ = π g²; substitute Δ = Γ2 tan θ and use Simpson
        let (g, gamma2) = (1234.0, 241e3);
        let n = 20_000;
        let (lo, hi) = (-PI / 2.0 + 1e-9, PI / 2.0 - 1e-9);
        let h = (hi - lo) / n as f64;
        let f = |theta: f64| {
            let d = gamma2 * theta.tan();
            induced_relaxation(g, gamma2, d).unwrap() * gamma2 / theta.cos().powi(2)
        };
        let mut sum = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * f(lo + i as f64 * h);
        }
        let area = sum * h / 3.0;
        assert!(((area - PI * g * g) / (PI * g * g)).abs() < 1e-3, "{area}");
    }

    #[test]
    fn phase_normalization() {
        assert_eq!(normalize_phase(-1e-18), 0.0);
        assert!((normalize_phase(-PI / 2.0) - 1.5 * PI).abs() < 1e-15);
        assert!((normalize_phase(5.0 * TAU + 0.25) - 0.25).abs() < 1e-12);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn equilibrium_bounds_and_monotonicity(
                gp in 0.0f64..1e4, g1 in 0.0f64..1e3, gg in 0.0f64..1e4, bump in 1e-3f64..1e2,
            ) {
                prop_assume!(gp + g1 + gg > 1e-6);
                let p = equilibrium_population(gp, g1, gg).unwrap();
                prop_assert!((0.5..=1.0).contains(&p));
                if gp > 0.0 {
                    prop_assert!(equilibrium_population(gp, g1, gg + bump).unwrap() < p);
                }
                prop_assert!(equilibrium_population(gp + bump, g1, gg).unwrap() > p);
            }

            #[test]
            fn transient_monotone_toward_equilibrium(
                gp in 1.0f64..1e3, g1 in 0.0f64..1e3, gg in 0.0f64..1e3,
                p_init in 0.0f64..1.0, t in 0.0f64..0.01, dt in 1e-6f64..1e-3,
            ) {
                let inf = equilibrium_population(gp, g1, gg).unwrap();
                let a = transient_population(t, p_init, gp, g1, gg).unwrap();
                let b = transient_population(t + dt, p_init, gp, g1, gg).unwrap();
                prop_assert!((b - inf).abs() <= (a - inf).abs() + 1e-15);
            }

            #[test]
            fn heterodyne_linear_in_signal_field(
                gp in 10.0f64..1e3, g1 in 0.0f64..300.0, gbig in 1.0f64..1e3,
                gg in 1e-9f64..1e-3, delta in 0.0f64..2e3, scale in 0.1f64..10.0,
            ) {
                let a = heterodyne_response(gp, g1, gbig, gg, delta, 0.0).unwrap().amplitude;
                let b = heterodyne_response(gp, g1, gbig, gg * scale * scale, delta, 0.0).unwrap().amplitude;
                prop_assert!(((b / a) - scale).abs() < 1e-10 * scale);
                let c = heterodyne_response(gp, g1, gbig, gg, delta + 1.0, 0.0).unwrap().amplitude;
                prop_assert!(c < a);
            }

            #[test]
            fn induced_relaxation_even(g in 0.0f64..1e4, gamma2 in 1e3f64..1e6, det in 0.0f64..1e7) {
                let a = induced_relaxation(g, gamma2, det).unwrap();
                let b = induced_relaxation(g, gamma2, -det).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
