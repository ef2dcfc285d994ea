//! Time-domain integration of the two-level rate equation under an arbitrary
//! set of microwave tones.
//!
//! The carrier is never sampled. Tones are represented in the frame of the
//! first tone, so only their frequency offsets (the beats) enter the
//! envelope and the integrator resolves dynamics at the beat scale.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, invalid, Error, Result};
use crate::linalg;
use crate::physics::{
    normalize_phase, pump_rate, MicrowaveTone, NVEnsembleParams, PhysicalConstants, TAU,
};

/// Steps per period of the fastest time scale required by the integrator.
pub const STEPS_PER_PERIOD: f64 = 20.0;
/// Largest number of integration steps accepted for one scenario.
pub const MAX_STEPS: f64 = 1e9;

/// How the field envelope of several tones is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeModel {
    /// |Σ B_k e^{iθ_k}|², including the b₁² term.
    #[default]
    Exact,
    /// Two tones only: B₁² + 2B₁b₁cos(θ), dropping b₁².
    Simplified,
}

/// A window during which the microwaves are on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateWindow {
    pub on: f64,
    pub off: f64,
}

/// Drive configuration for one integration run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveScenario {
    pub tones: Vec<MicrowaveTone>,
    /// Laser power, W.
    pub laser_power: f64,
    /// Duration, s.
    pub duration: f64,
    /// P0 at t = 0.
    pub initial_p0: f64,
    /// Microwave-on windows. Empty means always on.
    #[serde(default)]
    pub gates: Vec<GateWindow>,
    #[serde(default)]
    pub envelope: EnvelopeModel,
    /// Transition frequency; when set, each tone is weighted by its
    /// Lorentzian detuning factor.
    #[serde(default)]
    pub line_center: Option<f64>,
    /// Skip the ±10·Γ2 resonance check.
    #[serde(default)]
    pub allow_off_resonant: bool,
}

impl DriveScenario {
    pub fn new(
        tones: Vec<MicrowaveTone>,
        laser_power: f64,
        duration: f64,
        initial_p0: f64,
    ) -> Self {
        Self {
            tones,
            laser_power,
            duration,
            initial_p0,
            gates: Vec::new(),
            envelope: EnvelopeModel::Exact,
            line_center: None,
            allow_off_resonant: false,
        }
    }

    /// Index of the signal tone: the one with the smallest amplitude, when
    /// there is more than one tone.
    pub fn signal_index(&self) -> Option<usize> {
        if self.tones.len() < 2 {
            return None;
        }
        self.tones
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.amplitude_b.total_cmp(&b.1.amplitude_b))
            .map(|(i, _)| i)
    }

    /// Largest difference between any two tone frequencies, Hz.
    pub fn max_beat(&self) -> f64 {
        let lo = self
            .tones
            .iter()
            .map(|t| t.frequency)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .tones
            .iter()
            .map(|t| t.frequency)
            .fold(f64::NEG_INFINITY, f64::max);
        if self.tones.len() < 2 {
            0.0
        } else {
            hi - lo
        }
    }

    pub fn microwaves_on(&self, t: f64) -> bool {
        self.gates.is_empty() || self.gates.iter().any(|g| t >= g.on && t < g.off)
    }

    pub fn validate(&self, params: &NVEnsembleParams) -> Result<()> {
        ensure_non_negative("laser_power", self.laser_power)?;
        ensure_positive("duration", self.duration)?;
        if !(0.0..=1.0).contains(&self.initial_p0) {
            return Err(invalid(
                "initial_p0",
                format!("must lie in [0, 1], got {}", self.initial_p0),
            ));
        }
        for tone in &self.tones {
            ensure_non_negative("amplitude_b", tone.amplitude_b)?;
            ensure_positive("frequency", tone.frequency)?;
        }
        for gate in &self.gates {
            if !(gate.on.is_finite() && gate.off.is_finite() && gate.off > gate.on) {
                return Err(invalid(
                    "gates",
                    format!("window [{}, {}) is empty", gate.on, gate.off),
                ));
            }
        }
        if self.envelope == EnvelopeModel::Simplified && self.tones.len() != 2 {
            return Err(invalid(
                "envelope",
                "simplified envelope needs exactly two tones",
            ));
        }
        if let (Some(center), false) = (self.line_center, self.allow_off_resonant) {
            for tone in &self.tones {
                if (tone.frequency - center).abs() > 10.0 * params.gamma2 {
                    return Err(invalid(
                        "tones",
                        format!(
                            "tone at {} Hz is more than 10·gamma2 from the line center; flag it off-resonant",
                            tone.frequency
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Field envelope of a reference and a signal tone at time `t`, tesla.
///
/// The exact form is √(B₁² + b₁² + 2B₁b₁cos(2πδt + φ)); the simplified one
/// drops b₁². Here δ = f_ref − f_sig and φ = φ_ref − φ_sig.
pub fn interference_envelope(
    reference: &MicrowaveTone,
    signal: &MicrowaveTone,
    t: f64,
    model: EnvelopeModel,
) -> Result<f64> {
    if signal.amplitude_b > reference.amplitude_b {
        return Err(invalid(
            "signal",
            "signal amplitude must not exceed the reference",
        ));
    }
    let (big, small) = (reference.amplitude_b, signal.amplitude_b);
    let theta =
        beat_phase(reference.frequency - signal.frequency, t) + reference.phase - signal.phase;
    let cross = 2.0 * big * small * theta.cos();
    let squared = match model {
        EnvelopeModel::Exact => big * big + small * small + cross,
        EnvelopeModel::Simplified => big * big + cross,
    };
    Ok(squared.max(0.0).sqrt())
}

/// 2π·f·t reduced to one cycle before scaling, to keep precision over long runs.
#[inline]
fn beat_phase(freq: f64, t: f64) -> f64 {
    TAU * (freq * t).fract()
}

/// Microwave-induced relaxation rate as a function of time.
#[derive(Clone, Debug)]
pub struct RelaxationModel {
    /// γ²/(2Γ2), Hz/T².
    kappa: f64,
    amplitudes: Vec<f64>,
    offsets: Vec<f64>,
    phases: Vec<f64>,
    envelope: EnvelopeModel,
}

impl RelaxationModel {
    pub fn new(
        tones: &[MicrowaveTone],
        gamma2: f64,
        constants: &PhysicalConstants,
        line_center: Option<f64>,
        envelope: EnvelopeModel,
    ) -> Result<Self> {
        ensure_positive("gamma2", gamma2)?;
        if envelope == EnvelopeModel::Simplified && tones.len() != 2 {
            return Err(invalid(
                "envelope",
                "simplified envelope needs exactly two tones",
            ));
        }
        let base = tones.first().map(|t| t.frequency).unwrap_or(0.0);
        let mut order: Vec<usize> = (0..tones.len()).collect();
        if envelope == EnvelopeModel::Simplified {
            // reference first
            order.sort_by(|&a, &b| tones[b].amplitude_b.total_cmp(&tones[a].amplitude_b));
        }
        let amplitudes = order
            .iter()
            .map(|&i| {
                let weight = line_center.map_or(1.0, |c| {
                    let d = tones[i].frequency - c;
                    gamma2 / (gamma2 * gamma2 + d * d).sqrt()
                });
                weight * tones[i].amplitude_b
            })
            .collect();
        Ok(Self {
            kappa: constants.gamma_nv * constants.gamma_nv / (2.0 * gamma2),
            amplitudes,
            offsets: order.iter().map(|&i| tones[i].frequency - base).collect(),
            phases: order.iter().map(|&i| tones[i].phase).collect(),
            envelope,
        })
    }

    /// Γ(t), Hz.
    pub fn rate_at(&self, t: f64) -> f64 {
        match self.envelope {
            EnvelopeModel::Exact => {
                let (mut re, mut im) = (0.0, 0.0);
                for ((&a, &f), &p) in self.amplitudes.iter().zip(&self.offsets).zip(&self.phases) {
                    let (s, c) = (beat_phase(f, t) + p).sin_cos();
                    re += a * c;
                    im += a * s;
                }
                self.kappa * (re * re + im * im)
            }
            EnvelopeModel::Simplified => {
                let (big, small) = (self.amplitudes[0], self.amplitudes[1]);
                let theta = beat_phase(self.offsets[0] - self.offsets[1], t) + self.phases[0]
                    - self.phases[1];
                self.kappa * (big * big + 2.0 * big * small * theta.cos())
            }
        }
    }

    /// Upper bound on Γ(t): κ(Σ|B_k|)².
    pub fn peak_rate(&self) -> f64 {
        let sum: f64 = self.amplitudes.iter().sum();
        self.kappa * sum * sum
    }

    /// Time-averaged Γ for mutually detuned tones: κΣB_k².
    pub fn mean_rate(&self) -> f64 {
        let sum_sq: f64 = match self.envelope {
            EnvelopeModel::Exact => self.amplitudes.iter().map(|a| a * a).sum(),
            EnvelopeModel::Simplified => self.amplitudes[0] * self.amplitudes[0],
        };
        self.kappa * sum_sq
    }
}

/// Γ(t) produced by `tones` on resonance.
///
/// For two tones the exact envelope gives ΓG + Γg + 2√(ΓGΓg)cos(2πδt + φ);
/// the simplified one drops the Γg term.
pub fn instantaneous_relaxation(
    tones: &[MicrowaveTone],
    gamma2: f64,
    constants: &PhysicalConstants,
    t: f64,
    envelope: EnvelopeModel,
) -> Result<f64> {
    Ok(RelaxationModel::new(tones, gamma2, constants, None, envelope)?.rate_at(t))
}

/// Uniformly sampled P0(t).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationTrajectory {
    pub start: f64,
    /// Spacing between recorded samples, s.
    pub interval: f64,
    pub p0_values: Vec<f64>,
    /// Integration step actually used, s.
    pub step: f64,
    pub method: String,
}

impl PopulationTrajectory {
    pub fn len(&self) -> usize {
        self.p0_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p0_values.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        self.start + index as f64 * self.interval
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.time(i))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,p0\n");
        for (i, p) in self.p0_values.iter().enumerate() {
            let _ = writeln!(out, "{:.12e},{:.17e}", self.time(i), p);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(self.to_csv().as_bytes())?;
        file.flush()?;
        Ok(())
    }
}

/// Fixed-step classical RK4 integrator of
/// P0' = 2π[−(Γ1 + Γ(t) + Γp)P0 + (Γ1 + Γ(t))/2 + Γp].
///
/// With a single unknown, P1 = 1 − P0 holds exactly.
pub struct RateIntegrator<'a> {
    scenario: &'a DriveScenario,
    model: RelaxationModel,
    gamma1: f64,
    gamma_p: f64,
    step: f64,
    index: u64,
    p0: f64,
    rate_now: f64,
}

impl<'a> RateIntegrator<'a> {
    pub fn new(
        scenario: &'a DriveScenario,
        params: &NVEnsembleParams,
        constants: &PhysicalConstants,
        step: f64,
    ) -> Result<Self> {
        params.validate()?;
        constants.validate()?;
        scenario.validate(params)?;
        ensure_positive("step", step)?;
        let model = RelaxationModel::new(
            &scenario.tones,
            params.gamma2,
            constants,
            scenario.line_center,
            scenario.envelope,
        )?;
        let gamma_p = pump_rate(scenario.laser_power, params)?;
        let bound = step_bound(scenario, params, &model, gamma_p);
        if step > bound * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { step, bound });
        }
        let steps = scenario.duration / step;
        if steps > MAX_STEPS {
            return Err(Error::TooManySteps { steps });
        }
        let mut integrator = Self {
            scenario,
            model,
            gamma1: params.gamma1,
            gamma_p,
            step,
            index: 0,
            p0: scenario.initial_p0,
            rate_now: 0.0,
        };
        integrator.rate_now = integrator.rate(0.0);
        Ok(integrator)
    }

    #[inline]
    fn rate(&self, t: f64) -> f64 {
        if self.scenario.microwaves_on(t) {
            self.model.rate_at(t)
        } else {
            0.0
        }
    }

    #[inline]
    fn deriv(&self, rate: f64, p0: f64) -> f64 {
        let relax = self.gamma1 + rate;
        TAU * (-(relax + self.gamma_p) * p0 + 0.5 * relax + self.gamma_p)
    }

    pub fn time(&self) -> f64 {
        self.index as f64 * self.step
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    /// Advances by one step.
    #[inline]
    pub fn step_once(&mut self) {
        let h = self.step;
        let t = self.time();
        let r0 = self.rate_now;
        let r_mid = self.rate(t + 0.5 * h);
        let t_next = (self.index + 1) as f64 * h;
        let r1 = self.rate(t_next);
        let p = self.p0;
        let k1 = self.deriv(r0, p);
        let k2 = self.deriv(r_mid, p + 0.5 * h * k1);
        let k3 = self.deriv(r_mid, p + 0.5 * h * k2);
        let k4 = self.deriv(r1, p + h * k3);
        self.p0 = p + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        self.index += 1;
        self.rate_now = r1;
    }

    pub fn advance(&mut self, steps: u64) {
        for _ in 0..steps {
            self.step_once();
        }
    }
}

/// Largest admissible step: 1/(20·max(max beat, Σ rates)).
fn step_bound(
    scenario: &DriveScenario,
    params: &NVEnsembleParams,
    model: &RelaxationModel,
    gamma_p: f64,
) -> f64 {
    let total = gamma_p + params.gamma1 + model.peak_rate();
    let fastest = scenario.max_beat().max(total);
    if fastest == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (STEPS_PER_PERIOD * fastest)
    }
}

/// The step bound for a scenario, s.
pub fn max_step(
    scenario: &DriveScenario,
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
) -> Result<f64> {
    let model = RelaxationModel::new(
        &scenario.tones,
        params.gamma2,
        constants,
        scenario.line_center,
        scenario.envelope,
    )?;
    let gamma_p = pump_rate(scenario.laser_power, params)?;
    Ok(step_bound(scenario, params, &model, gamma_p))
}

/// Integrates the rate equation with fixed step `step`, recording every step.
/// The step is shrunk slightly so the duration is an integer number of steps.
pub fn integrate_rate_equations(
    scenario: &DriveScenario,
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    step: f64,
) -> Result<PopulationTrajectory> {
    ensure_positive("step", step)?;
    let n = (scenario.duration / step).ceil().max(1.0);
    let step = scenario.duration / n;
    let mut integrator = RateIntegrator::new(scenario, params, constants, step)?;
    let n = n as usize;
    let mut p0_values = Vec::with_capacity(n + 1);
    p0_values.push(integrator.p0());
    for _ in 0..n {
        integrator.step_once();
        p0_values.push(integrator.p0());
    }
    Ok(PopulationTrajectory {
        start: 0.0,
        interval: step,
        p0_values,
        step,
        method: "rk4-fixed".into(),
    })
}

/// Integrates and records P0 at `sample_rate`, taking the smallest whole
/// number of sub-steps per sample that respects the step bound (and
/// `max_step`, when given).
pub fn integrate_sampled(
    scenario: &DriveScenario,
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    sample_rate: f64,
    max_step_override: Option<f64>,
) -> Result<PopulationTrajectory> {
    ensure_positive("sample_rate", sample_rate)?;
    let (substeps, step) =
        substeps_for(scenario, params, constants, sample_rate, max_step_override)?;
    let n_samples = (scenario.duration * sample_rate).round() as usize;
    let mut integrator = RateIntegrator::new(scenario, params, constants, step)?;
    let mut p0_values = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        p0_values.push(integrator.p0());
        integrator.advance(substeps);
    }
    Ok(PopulationTrajectory {
        start: 0.0,
        interval: 1.0 / sample_rate,
        p0_values,
        step,
        method: "rk4-fixed".into(),
    })
}

pub(crate) fn substeps_for(
    scenario: &DriveScenario,
    params: &NVEnsembleParams,
    constants: &PhysicalConstants,
    sample_rate: f64,
    max_step_override: Option<f64>,
) -> Result<(u64, f64)> {
    let mut bound = max_step(scenario, params, constants)?;
    if let Some(m) = max_step_override {
        ensure_positive("max_step", m)?;
        bound = bound.min(m);
    }
    let interval = 1.0 / sample_rate;
    let substeps = (interval / bound).ceil().max(1.0);
    Ok((substeps as u64, interval / substeps))
}

/// Sinusoid fitted to the settled tail of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub amplitude: f64,
    /// Phase of `amplitude·cos(2πδt + phase)`, in [0, 2π).
    pub phase: f64,
    pub offset: f64,
}

/// Least-squares fit of A·cos(2πδt + φ) + c over the last fifth of the
/// trajectory.
///
/// `relaxation_rate` is the total rate Σ (Hz) that sets the settling time
/// constant 1/(2πΣ); the tail must start after five of them and span ten
/// beat periods.
pub fn steady_state_oscillation(
    trajectory: &PopulationTrajectory,
    delta: f64,
    relaxation_rate: f64,
) -> Result<Oscillation> {
    ensure_positive("delta", delta)?;
    ensure_positive("relaxation_rate", relaxation_rate)?;
    let n = trajectory.len();
    if n < 16 {
        return Err(Error::InsufficientSettling(format!("only {n} samples")));
    }
    let first = n - n / 5;
    let tail_start = trajectory.time(first);
    let tail_span = trajectory.time(n - 1) - tail_start;
    let settle = 5.0 / (TAU * relaxation_rate);
    if tail_start < settle {
        return Err(Error::InsufficientSettling(format!(
            "tail starts at {tail_start:.3e} s, before 5 time constants ({settle:.3e} s)"
        )));
    }
    if tail_span * delta < 10.0 {
        return Err(Error::InsufficientSettling(format!(
            "tail spans {:.2} beat periods, need 10",
            tail_span * delta
        )));
    }
    let mean = trajectory.p0_values[first..].iter().sum::<f64>() / (n - first) as f64;
    let mut rows = Vec::with_capacity(n - first);
    let mut ys = Vec::with_capacity(n - first);
    for i in first..n {
        let theta = beat_phase(delta, trajectory.time(i));
        rows.push(vec![theta.cos(), theta.sin(), 1.0]);
        ys.push(trajectory.p0_values[i] - mean);
    }
    let coef = linalg::least_squares(&rows, &ys)
        .ok_or_else(|| Error::Degenerate("singular sinusoid fit".into()))?;
    // a·cos θ + b·sin θ = A·cos(θ + φ) with A = √(a²+b²), φ = atan2(−b, a)
    let (a, b) = (coef[0], coef[1]);
    let amplitude = a.hypot(b);
    let phase = if amplitude == 0.0 {
        0.0
    } else {
        normalize_phase((-b).atan2(a))
    };
    Ok(Oscillation {
        amplitude,
        phase,
        offset: mean + coef[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{equilibrium_population, transient_population};

    fn tone(b: f64, f: f64, phase: f64) -> MicrowaveTone {
        MicrowaveTone::new(b, f, phase).unwrap()
    }

    #[test]
    fn envelope_examples() {
        let reference = tone(201e-9, 2.9e9 + 1e3, 0.0);
        let off = tone(0.0, 2.9e9, 0.0);
        assert_eq!(
            interference_envelope(&reference, &off, 0.37, EnvelopeModel::Exact).unwrap(),
            201e-9
        );
        let signal = tone(36.6e-9, 2.9e9, 0.0);
        let e = interference_envelope(&reference, &signal, 0.0, EnvelopeModel::Exact).unwrap();
        assert!((e - 237.6e-9).abs() < 1e-15);
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..1000 {
            let t = i as f64 * 1e-6;
            let e = interference_envelope(&reference, &signal, t, EnvelopeModel::Exact).unwrap();
            lo = lo.min(e);
            hi = hi.max(e);
        }
        assert!(
            (lo - 164.4e-9).abs() < 1e-12 && (hi - 237.6e-9).abs() < 1e-12,
            "{lo} {hi}"
        );
        // one full beat period later the envelope repeats
        let a = interference_envelope(&reference, &signal, 0.2e-3, EnvelopeModel::Exact).unwrap();
        let b = interference_envelope(&reference, &signal, 1.2e-3, EnvelopeModel::Exact).unwrap();
        assert!((a - b).abs() < 1e-18);
        assert!(interference_envelope(&signal, &reference, 0.0, EnvelopeModel::Exact).is_err());
    }

    #[test]
    fn relaxation_examples() {
        let c = PhysicalConstants::default();
        let gamma2 = 241e3;
        let reference = tone(220e-9, 2.9e9 + 480.0, 0.0);
        let signal = tone(10e-9, 2.9e9, 0.0);
        let big = instantaneous_relaxation(&[reference], gamma2, &c, 0.123, EnvelopeModel::Exact)
            .unwrap();
        let gg =
            instantaneous_relaxation(&[signal], gamma2, &c, 0.0, EnvelopeModel::Exact).unwrap();
        let exact =
            instantaneous_relaxation(&[reference, signal], gamma2, &c, 0.0, EnvelopeModel::Exact)
                .unwrap();
        let simple = instantaneous_relaxation(
            &[reference, signal],
            gamma2,
            &c,
            0.0,
            EnvelopeModel::Simplified,
        )
        .unwrap();
        let quoted = big + 2.0 * (big * gg).sqrt();
        assert!(((simple - quoted) / quoted).abs() < 1e-12);
        assert!(((exact - simple - gg) / gg).abs() < 1e-9);
        assert!(
            instantaneous_relaxation(&[reference], 0.0, &c, 0.0, EnvelopeModel::Exact).is_err()
        );
    }

    #[test]
    fn many_detuned_references_average_to_m_times_rate() {
        let c = PhysicalConstants::default();
        let gamma2 = 241e3;
        let m = 5;
        let tones: Vec<_> = (0..m)
            .map(|k| tone(150e-9, 2.9e9 + 2000.0 * k as f64, 0.3 * k as f64))
            .collect();
        let single =
            instantaneous_relaxation(&tones[..1], gamma2, &c, 0.0, EnvelopeModel::Exact).unwrap();
        // one full beat period of the 2 kHz comb
        let n = 20_000;
        let mean = (0..n)
            .map(|i| {
                instantaneous_relaxation(
                    &tones,
                    gamma2,
                    &c,
                    i as f64 * 0.5e-3 / n as f64,
                    EnvelopeModel::Exact,
                )
                .unwrap()
            })
            .sum::<f64>()
            / n as f64;
        assert!(
            ((mean - m as f64 * single) / (m as f64 * single)).abs() < 1e-9,
            "{mean}"
        );
        let model = RelaxationModel::new(&tones, gamma2, &c, None, EnvelopeModel::Exact).unwrap();
        assert!(((model.mean_rate() - m as f64 * single) / single).abs() < 1e-12);
    }

    #[test]
    fn constant_drive_matches_analytic_transient() {
        let params = NVEnsembleParams::default();
        let c = PhysicalConstants::default();
        let mut scenario = DriveScenario::new(vec![tone(100e-9, 2.9e9, 0.0)], 0.816, 0.0, 0.5);
        let rate = instantaneous_relaxation(
            &scenario.tones,
            params.gamma2,
            &c,
            0.0,
            EnvelopeModel::Exact,
        )
        .unwrap();
        let gamma_p = 204.0;
        let total = gamma_p + params.gamma1 + rate;
        scenario.duration = 5.0 / (TAU * total);
        let traj =
            integrate_rate_equations(&scenario, &params, &c, 1.0 / (2000.0 * total)).unwrap();
        let mut worst = 0.0f64;
        for (i, &p) in traj.p0_values.iter().enumerate() {
            let exact =
                transient_population(traj.time(i), 0.5, gamma_p, params.gamma1, rate).unwrap();
            worst = worst.max((p - exact).abs());
        }
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn zero_tones_relax_to_dark_equilibrium() {
        let params = NVEnsembleParams::default();
        let c = PhysicalConstants::default();
        let scenario = DriveScenario::new(vec![], 0.816, 0.05, 0.5);
        let traj = integrate_rate_equations(&scenario, &params, &c, 1e-5).unwrap();
        let expected = equilibrium_population(204.0, params.gamma1, 0.0).unwrap();
        assert!((traj.p0_values.last().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_too_large_step() {
        let params = NVEnsembleParams::default();
        let c = PhysicalConstants::default();
        let scenario = DriveScenario::new(
            vec![tone(100e-9, 2.9e9, 0.0), tone(1e-9, 2.9e9 + 1e3, 0.0)],
            0.816,
            0.1,
            0.5,
        );
        match integrate_rate_equations(&scenario, &params, &c, 1e-3) {
            Err(Error::StepTooLarge { bound, .. }) => assert!((bound - 1.0 / 20e3).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        let long = DriveScenario {
            duration: 1e6,
            ..scenario
        };
        assert!(matches!(
            integrate_rate_equations(&long, &params, &c, 1e-5),
            Err(Error::TooManySteps { .. })
        ));
    }

    #[test]
    fn off_resonant_tones_need_flag() {
        let params = NVEnsembleParams::default();
        let c = PhysicalConstants::default();
        let mut scenario =
            DriveScenario::new(vec![tone(100e-9, 2.9e9 + 5e6, 0.0)], 0.816, 0.01, 0.5);
        scenario.line_center = Some(2.9e9);
        assert!(integrate_rate_equations(&scenario, &params, &c, 1e-5).is_err());
        scenario.allow_off_resonant = true;
        assert!(integrate_rate_equations(&scenario, &params, &c, 1e-5).is_ok());
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let params = NVEnsembleParams::default();
        let c = PhysicalConstants::default();
        let scenario = DriveScenario::new(
            vec![tone(220e-9, 2.9e9 + 300.0, 0.0), tone(50e-9, 2.9e9, 0.0)],
            0.816,
            0.02,
            0.5,
        );
        let bound = max_step(&scenario, &params, &c).unwrap();
        let final_value = |h: f64| {
            *integrate_rate_equations(&scenario, &params, &c, h)
                .unwrap()
                .p0_values
                .last()
                .unwrap()
        };
        let reference = final_value(bound / 64.0);
        let steps = [bound, bound / 2.0, bound / 4.0];
        let errors: Vec<f64> = steps
            .iter()
            .map(|&h| (final_value(h) - reference).abs())
            .collect();
        let slope = |i: usize| (errors[i] / errors[i + 1]).log2();
        for i in 0..2 {
            assert!(
                (slope(i) - 4.0).abs() < 0.3,
                "slope {} errors {errors:?}",
                slope(i)
            );
        }
        let halving = (final_value(bound / 8.0) - final_value(bound / 16.0)).abs();
        assert!(halving < 1e-9, "halving change {halving:e}");
    }

    #[test]
    fn sinusoid_fit_recovers_synthetic_cosine() {
        let delta = 37.0;
        let n = 20_000;
        let interval = 1e-4;
        let values: Vec<f64> = (0..n)
            .map(|i| 0.7 + 3e-3 * (TAU * delta * i as f64 * interval + 1.1).cos())
            .collect();
        let traj = PopulationTrajectory {
            start: 0.0,
            interval,
            p0_values: values,
            step: interval,
            method: "synthetic".into(),
        };
        let osc = steady_state_oscillation(&traj, delta, 300.0).unwrap();
        assert!((osc.amplitude - 3e-3).abs() < 1e-13, "{}", osc.amplitude);
        assert!((osc.phase - 1.1).abs() < 1e-10);
        assert!((osc.offset - 0.7).abs() < 1e-12);

        let flat = PopulationTrajectory {
            p0_values: vec![0.8; n],
            ..traj.clone()
        };
        assert!(
            steady_state_oscillation(&flat, delta, 300.0)
                .unwrap()
                .amplitude
                < 1e-15
        );

        let short = PopulationTrajectory {
            p0_values: traj.p0_values[..500].to_vec(),
            ..traj
        };
        assert!(matches!(
            steady_state_oscillation(&short, delta, 300.0),
            Err(Error::InsufficientSettling(_))
        ));
    }

    #[test]
    fn trajectory_csv_has_header_and_rows() {
        let traj = PopulationTrajectory {
            start: 0.0,
            interval: 0.5,
            p0_values: vec![0.5, 0.75],
            step: 0.5,
            method: "x".into(),
        };
        let csv = traj.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "time_s,p0");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("5.0"));
    }
}
