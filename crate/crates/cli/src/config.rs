//! Scenario configuration files (TOML). Every physical quantity carries its
//! unit in the key name; unknown keys are rejected.

use std::path::{Path, PathBuf};

use nvhet_core::analysis::Window;
use nvhet_core::dynamics::{DriveScenario, EnvelopeModel, GateWindow, RelaxationModel};
use nvhet_core::physics::{
    equilibrium_population, pump_rate, MicrowaveTone, NVEnsembleParams, PhysicalConstants,
};
use nvhet_core::sensing::{plan_reference_grid, OperatingPoint, ReferenceGrid};
use nvhet_core::synthesis::{calibrate_noise_to_sensitivity, DetectorModel};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub constants: ConstantsSection,
    pub laser: LaserSection,
    #[serde(default)]
    pub tones: Vec<ToneSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub detector: DetectorSection,
    pub run: RunSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

/// Ensemble parameters. `preset` (`linewidth` or `effective`) supplies the
/// values not given explicitly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma1_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma2_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_nv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collection_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pump_coeff_hz_per_w: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_nv_hz_per_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_zfs_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_hf_hz: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserSection {
    pub power_w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneSection {
    pub b1_tesla: f64,
    pub frequency_hz: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

/// A planned comb of reference tones added to `tones`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub band_hz: f64,
    pub max_beat_hz: f64,
    pub center_hz: f64,
    pub b1_tesla: f64,
    #[serde(default = "default_max_channels")]
    pub max_channels: usize,
}

fn default_max_channels() -> usize {
    240
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub volts_per_photon_rate_v_s: f64,
    pub electronic_noise_v_per_rthz: f64,
    pub laser_noise_fraction_per_rthz: f64,
    pub laser_noise_exponent: f64,
    pub laser_noise_corner_hz: f64,
    pub shot_noise: bool,
    /// When set, the laser noise fraction is calibrated so the predicted
    /// sensitivity at the scenario's operating point equals this value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_sensitivity_t_per_rthz: Option<f64>,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let d = DetectorModel::default();
        Self {
            volts_per_photon_rate_v_s: d.volts_per_photon_rate,
            electronic_noise_v_per_rthz: d.electronic_noise_density,
            laser_noise_fraction_per_rthz: d.laser_noise_fraction,
            laser_noise_exponent: d.laser_noise_exponent,
            laser_noise_corner_hz: d.laser_noise_corner,
            shot_noise: d.shot_noise,
            target_sensitivity_t_per_rthz: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the equilibrium under the mean relaxation rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_p0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_center_hz: Option<f64>,
    #[serde(default)]
    pub allow_off_resonant: bool,
    #[serde(default)]
    pub envelope: EnvelopeModel,
    #[serde(default)]
    pub gates: Vec<GateSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    pub on_s: f64,
    pub off_s: f64,
}

/// Default analysis applied by `sweep` and available to `analyze`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub window: Window,
    /// Beat frequency to measure; defaults to the signal-to-reference
    /// detuning.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signal_hz: Option<f64>,
    pub signal_span_hz: f64,
    pub noise_span_hz: f64,
    /// Initial stretch dropped before the spectrum.
    pub settle_s: f64,
    /// Fit a Lorentzian to the zoomed line to measure its FWHM.
    pub fwhm: bool,
    pub fwhm_points: usize,
    pub min_snr: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            window: Window::Rectangular,
            signal_hz: None,
            signal_span_hz: 0.003,
            noise_span_hz: 0.1,
            settle_s: 0.0,
            fwhm: false,
            fwhm_points: 81,
            min_snr: 5.0,
        }
    }
}

fn check(path: &str, ok: bool, what: &str) -> Result<(), Failure> {
    if ok {
        Ok(())
    } else {
        Err(Failure::Config(format!("{path}: {what}")))
    }
}

fn positive(path: &str, v: f64) -> Result<(), Failure> {
    check(
        path,
        v.is_finite() && v > 0.0,
        &format!("must be finite and > 0, got {v}"),
    )
}

fn non_negative(path: &str, v: f64) -> Result<(), Failure> {
    check(
        path,
        v.is_finite() && v >= 0.0,
        &format!("must be finite and >= 0, got {v}"),
    )
}

impl ScenarioConfig {
    /// Parses TOML, reporting schema violations with the path to the key.
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| Failure::Config(e.message().to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| Failure::Config(format!("{}: {}", e.path(), e.inner().message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Failure::Config(msg) => Failure::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Range checks, reported with the key path.
    pub fn validate(&self) -> Result<(), Failure> {
        let e = &self.ensemble;
        if let Some(p) = &e.preset {
            check(
                "ensemble.preset",
                NVEnsembleParams::preset(p).is_some(),
                &format!("unknown preset `{p}`"),
            )?;
        }
        if let Some(v) = e.gamma1_hz {
            non_negative("ensemble.gamma1_hz", v)?;
        }
        for (k, v) in [
            ("ensemble.gamma2_hz", e.gamma2_hz),
            ("ensemble.n_nv", e.n_nv),
            ("ensemble.collection_k", e.collection_k),
            ("ensemble.pump_coeff_hz_per_w", e.pump_coeff_hz_per_w),
            (
                "constants.gamma_nv_hz_per_t",
                self.constants.gamma_nv_hz_per_t,
            ),
            ("constants.d_zfs_hz", self.constants.d_zfs_hz),
            ("constants.a_hf_hz", self.constants.a_hf_hz),
        ] {
            if let Some(v) = v {
                positive(k, v)?;
            }
        }
        if let Some(c) = e.contrast {
            check(
                "ensemble.contrast",
                c > 0.0 && c < 1.0,
                &format!("must lie in (0, 1), got {c}"),
            )?;
        }
        non_negative("laser.power_w", self.laser.power_w)?;
        for (i, t) in self.tones.iter().enumerate() {
            non_negative(&format!("tones[{i}].b1_tesla"), t.b1_tesla)?;
            positive(&format!("tones[{i}].frequency_hz"), t.frequency_hz)?;
            check(
                &format!("tones[{i}].phase_rad"),
                t.phase_rad.is_finite(),
                "must be finite",
            )?;
        }
        if let Some(g) = &self.grid {
            positive("grid.band_hz", g.band_hz)?;
            positive("grid.max_beat_hz", g.max_beat_hz)?;
            positive("grid.center_hz", g.center_hz)?;
            non_negative("grid.b1_tesla", g.b1_tesla)?;
            check(
                "grid.max_channels",
                g.max_channels > 0,
                "must be at least 1",
            )?;
        }
        let d = &self.detector;
        positive(
            "detector.volts_per_photon_rate_v_s",
            d.volts_per_photon_rate_v_s,
        )?;
        non_negative(
            "detector.electronic_noise_v_per_rthz",
            d.electronic_noise_v_per_rthz,
        )?;
        non_negative(
            "detector.laser_noise_fraction_per_rthz",
            d.laser_noise_fraction_per_rthz,
        )?;
        non_negative("detector.laser_noise_exponent", d.laser_noise_exponent)?;
        positive("detector.laser_noise_corner_hz", d.laser_noise_corner_hz)?;
        if let Some(t) = d.target_sensitivity_t_per_rthz {
            positive("detector.target_sensitivity_t_per_rthz", t)?;
        }
        let r = &self.run;
        positive("run.duration_s", r.duration_s)?;
        positive("run.sample_rate_hz", r.sample_rate_hz)?;
        if let Some(p) = r.initial_p0 {
            check(
                "run.initial_p0",
                (0.0..=1.0).contains(&p),
                &format!("must lie in [0, 1], got {p}"),
            )?;
        }
        if let Some(c) = r.line_center_hz {
            positive("run.line_center_hz", c)?;
        }
        for (i, g) in r.gates.iter().enumerate() {
            check(
                &format!("run.gates[{i}]"),
                g.on_s.is_finite() && g.off_s.is_finite() && g.off_s > g.on_s,
                &format!("window [{}, {}) is empty", g.on_s, g.off_s),
            )?;
        }
        let a = &self.analysis;
        if let Some(f) = a.signal_hz {
            non_negative("analysis.signal_hz", f)?;
        }
        positive("analysis.signal_span_hz", a.signal_span_hz)?;
        positive("analysis.noise_span_hz", a.noise_span_hz)?;
        non_negative("analysis.settle_s", a.settle_s)?;
        check(
            "analysis.settle_s",
            a.settle_s < r.duration_s,
            "must be shorter than run.duration_s",
        )?;
        check(
            "analysis.fwhm_points",
            a.fwhm_points >= 8,
            "need at least 8 points",
        )?;
        non_negative("analysis.min_snr", a.min_snr)?;
        Ok(())
    }

    pub fn params(&self) -> Result<NVEnsembleParams, Failure> {
        let e = &self.ensemble;
        let mut p = match &e.preset {
            Some(name) => NVEnsembleParams::preset(name).ok_or_else(|| {
                Failure::Config(format!("ensemble.preset: unknown preset `{name}`"))
            })?,
            None => NVEnsembleParams::default(),
        };
        p.gamma1 = e.gamma1_hz.unwrap_or(p.gamma1);
        p.gamma2 = e.gamma2_hz.unwrap_or(p.gamma2);
        p.contrast = e.contrast.unwrap_or(p.contrast);
        p.n_nv = e.n_nv.unwrap_or(p.n_nv);
        p.collection_k = e.collection_k.unwrap_or(p.collection_k);
        p.pump_coeff = e.pump_coeff_hz_per_w.unwrap_or(p.pump_coeff);
        p.validate()?;
        Ok(p)
    }

    pub fn constants(&self) -> Result<PhysicalConstants, Failure> {
        let d = PhysicalConstants::default();
        let c = PhysicalConstants {
            gamma_nv: self.constants.gamma_nv_hz_per_t.unwrap_or(d.gamma_nv),
            d_zfs: self.constants.d_zfs_hz.unwrap_or(d.d_zfs),
            a_hf: self.constants.a_hf_hz.unwrap_or(d.a_hf),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn grid_plan(&self) -> Result<Option<ReferenceGrid>, Failure> {
        let Some(g) = &self.grid else { return Ok(None) };
        Ok(Some(plan_reference_grid(
            g.band_hz,
            g.max_beat_hz,
            &self.params()?,
            g.max_channels,
        )?))
    }

    /// Explicit tones followed by the planned grid tones.
    pub fn all_tones(&self) -> Result<Vec<MicrowaveTone>, Failure> {
        let mut tones = Vec::with_capacity(self.tones.len());
        for t in &self.tones {
            tones.push(MicrowaveTone::new(t.b1_tesla, t.frequency_hz, t.phase_rad)?);
        }
        if let (Some(g), Some(plan)) = (&self.grid, self.grid_plan()?) {
            for f in plan.tones(g.center_hz) {
                tones.push(MicrowaveTone::new(g.b1_tesla, f, 0.0)?);
            }
        }
        Ok(tones)
    }

    pub fn scenario(&self) -> Result<DriveScenario, Failure> {
        let params = self.params()?;
        let constants = self.constants()?;
        let tones = self.all_tones()?;
        let mut s = DriveScenario::new(tones, self.laser.power_w, self.run.duration_s, 0.0);
        s.gates = self
            .run
            .gates
            .iter()
            .map(|g| GateWindow {
                on: g.on_s,
                off: g.off_s,
            })
            .collect();
        s.envelope = self.run.envelope;
        s.line_center = self.run.line_center_hz;
        s.allow_off_resonant = self.run.allow_off_resonant;
        s.initial_p0 = match self.run.initial_p0 {
            Some(p) => p,
            None => {
                let rate = if s.tones.is_empty() || !s.microwaves_on(0.0) {
                    0.0
                } else {
                    RelaxationModel::new(
                        &s.tones,
                        params.gamma2,
                        &constants,
                        s.line_center,
                        s.envelope,
                    )?
                    .mean_rate()
                };
                equilibrium_population(pump_rate(s.laser_power, &params)?, params.gamma1, rate)?
            }
        };
        s.validate(&params)?;
        Ok(s)
    }

    /// Signal = weakest tone; its nearest other tone is the beating
    /// reference. `None` with fewer than two tones.
    pub fn operating_point(&self) -> Result<Option<(OperatingPoint, f64)>, Failure> {
        let tones = self.all_tones()?;
        if tones.len() < 2 {
            return Ok(None);
        }
        let sig = (0..tones.len())
            .min_by(|&a, &b| tones[a].amplitude_b.total_cmp(&tones[b].amplitude_b))
            .unwrap();
        let f = tones[sig].frequency;
        let reference = (0..tones.len())
            .filter(|&i| i != sig)
            .min_by(|&a, &b| {
                (tones[a].frequency - f)
                    .abs()
                    .total_cmp(&(tones[b].frequency - f).abs())
            })
            .unwrap();
        let op = OperatingPoint {
            laser_power: self.laser.power_w,
            reference_b: tones[reference].amplitude_b,
            delta: (tones[reference].frequency - f).abs(),
            channels: tones.len() - 1,
            total_time: self.run.duration_s,
        };
        Ok(Some((op, tones[sig].amplitude_b)))
    }

    pub fn signal_frequency(&self) -> Result<Option<f64>, Failure> {
        if let Some(f) = self.analysis.signal_hz {
            return Ok(Some(f));
        }
        Ok(self.operating_point()?.map(|(op, _)| op.delta))
    }

    pub fn detector(&self) -> Result<DetectorModel, Failure> {
        let d = &self.detector;
        let model = DetectorModel {
            volts_per_photon_rate: d.volts_per_photon_rate_v_s,
            electronic_noise_density: d.electronic_noise_v_per_rthz,
            laser_noise_fraction: d.laser_noise_fraction_per_rthz,
            laser_noise_exponent: d.laser_noise_exponent,
            laser_noise_corner: d.laser_noise_corner_hz,
            sample_rate: self.run.sample_rate_hz,
            shot_noise: d.shot_noise,
        };
        let Some(target) = d.target_sensitivity_t_per_rthz else {
            return Ok(model);
        };
        let (op, _) = self.operating_point()?.ok_or_else(|| {
            Failure::Config(
                "detector.target_sensitivity_t_per_rthz: needs a signal and a reference tone"
                    .into(),
            )
        })?;
        let op = OperatingPoint { channels: 1, ..op };
        Ok(calibrate_noise_to_sensitivity(
            &model,
            &self.params()?,
            &self.constants()?,
            target,
            &op,
        )?)
    }

    /// Copy with the value at a dotted key path (`tones.1.b1_tesla`,
    /// `laser.power_w`) replaced.
    pub fn with_value(&self, key: &str, value: f64) -> Result<Self, Failure> {
        let mut root = toml::Value::try_from(self).expect("configuration serializes");
        let missing = || {
            Failure::Config(format!(
                "sweep parameter `{key}` does not exist in the schema"
            ))
        };
        let parts: Vec<&str> = key.split('.').collect();
        let (last, parents) = parts.split_last().ok_or_else(missing)?;
        let mut node = &mut root;
        for part in parents {
            node = match node {
                toml::Value::Table(t) => {
                    if !t.contains_key(*part) {
                        // optional sections that are absent
                        t.insert(part.to_string(), toml::Value::Table(Default::default()));
                    }
                    t.get_mut(*part).unwrap()
                }
                toml::Value::Array(a) => part
                    .parse::<usize>()
                    .ok()
                    .and_then(|i| a.get_mut(i))
                    .ok_or_else(missing)?,
                _ => return Err(missing()),
            };
        }
        let toml::Value::Table(table) = node else {
            return Err(missing());
        };
        let new = match table.get(*last) {
            Some(toml::Value::Integer(_)) => {
                check(
                    key,
                    value.is_finite() && value >= 0.0,
                    "integer parameter needs a value >= 0",
                )?;
                toml::Value::Integer(value.round() as i64)
            }
            Some(toml::Value::Float(_)) | None => toml::Value::Float(value),
            Some(_) => {
                return Err(Failure::Config(format!(
                    "sweep parameter `{key}` is not numeric"
                )))
            }
        };
        table.insert(last.to_string(), new);
        let cfg: Self = serde_path_to_error::deserialize(root).map_err(|e| {
            if e.inner().to_string().contains("unknown field") {
                missing()
            } else {
                Failure::Config(format!("{}: {}", e.path(), e.inner()))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Resolves `name` as a path, else as a preset name (with or without
/// `.toml`) inside `preset_dir`.
pub fn resolve_config_path(name: &Path, preset_dir: Option<&Path>) -> Result<PathBuf, Failure> {
    if name.is_file() {
        return Ok(name.to_path_buf());
    }
    let dir = preset_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(default_preset_dir);
    let candidates = [dir.join(name), dir.join(name).with_extension("toml")];
    candidates.into_iter().find(|p| p.is_file()).ok_or_else(|| {
        Failure::Io(format!(
            "no config file or preset named `{}` (preset dir {})",
            name.display(),
            dir.display()
        ))
    })
}

pub fn default_preset_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[laser]
power_w = 0.816

[[tones]]
b1_tesla = 220e-9
frequency_hz = 2903900480.0

[[tones]]
b1_tesla = 6.81e-12
frequency_hz = 2903900000.0

[run]
duration_s = 1.0
sample_rate_hz = 2000.0
seed = 7
"#;

    #[test]
    fn round_trip_is_identity() {
        let cfg = ScenarioConfig::parse(MINIMAL).unwrap();
        let again = ScenarioConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.to_toml(), cfg.to_toml());
    }

    #[test]
    fn unknown_key_reports_path() {
        let text = MINIMAL.replace("power_w", "power_mw");
        let err = ScenarioConfig::parse(&text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("laser"), "{err}");
        assert!(err.to_string().contains("power_mw"), "{err}");
        let text = format!("{MINIMAL}\n[ensemble]\ngamma1 = 3.0\n");
        let err = ScenarioConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("ensemble.gamma1"), "{err}");
    }

    #[test]
    fn range_errors_name_the_key() {
        let text = MINIMAL.replace("b1_tesla = 6.81e-12", "b1_tesla = -1.0");
        let err = ScenarioConfig::parse(&text).unwrap_err();
        assert!(err.to_string().starts_with("tones[1].b1_tesla"), "{err}");
    }

    #[test]
    fn operating_point_from_tones() {
        let cfg = ScenarioConfig::parse(MINIMAL).unwrap();
        let (op, b) = cfg.operating_point().unwrap().unwrap();
        assert!((op.delta - 480.0).abs() < 1e-6);
        assert_eq!(op.reference_b, 220e-9);
        assert_eq!(op.channels, 1);
        assert_eq!(b, 6.81e-12);
        assert!((cfg.signal_frequency().unwrap().unwrap() - 480.0).abs() < 1e-6);
    }

    #[test]
    fn preset_with_override() {
        let text = format!("{MINIMAL}\n[ensemble]\npreset = \"effective\"\ngamma1_hz = 90.0\n");
        let p = ScenarioConfig::parse(&text).unwrap().params().unwrap();
        assert_eq!(p.gamma2, 152e3);
        assert_eq!(p.gamma1, 90.0);
    }

    #[test]
    fn with_value_sets_nested_keys() {
        let cfg = ScenarioConfig::parse(MINIMAL).unwrap();
        let c = cfg.with_value("tones.1.b1_tesla", 1e-9).unwrap();
        assert_eq!(c.tones[1].b1_tesla, 1e-9);
        let c = cfg.with_value("run.seed", 12.0).unwrap();
        assert_eq!(c.run.seed, 12);
        let c = cfg.with_value("ensemble.gamma2_hz", 1e5).unwrap();
        assert_eq!(c.params().unwrap().gamma2, 1e5);
        assert!(cfg.with_value("laser.wavelength_m", 1.0).is_err());
        assert!(cfg.with_value("tones.9.b1_tesla", 1.0).is_err());
        assert!(cfg.with_value("laser.power_w", -1.0).is_err());
    }

    #[test]
    fn default_initial_population_is_mean_rate_equilibrium() {
        let cfg = ScenarioConfig::parse(MINIMAL).unwrap();
        let s = cfg.scenario().unwrap();
        assert!(s.initial_p0 > 0.7 && s.initial_p0 < 0.8);
        let gated = format!("{MINIMAL}\n[[run.gates]]\non_s = 0.1\noff_s = 0.2\n");
        let s = ScenarioConfig::parse(&gated).unwrap().scenario().unwrap();
        let p = cfg.params().unwrap();
        let want = equilibrium_population(pump_rate(0.816, &p).unwrap(), p.gamma1, 0.0).unwrap();
        assert!((s.initial_p0 - want).abs() < 1e-15);
    }

    #[test]
    fn calibration_target_sets_laser_noise() {
        let text = format!("{MINIMAL}\n[detector]\ntarget_sensitivity_t_per_rthz = 8.9e-12\n");
        let d = ScenarioConfig::parse(&text).unwrap().detector().unwrap();
        assert!(d.laser_noise_fraction > 0.0);
        let text = format!("{MINIMAL}\n[detector]\ntarget_sensitivity_t_per_rthz = 1e-16\n");
        let err = ScenarioConfig::parse(&text)
            .unwrap()
            .detector()
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn grid_tones_are_appended() {
        let text = format!(
            "{MINIMAL}\n[grid]\nband_hz = 8000.0\nmax_beat_hz = 1000.0\ncenter_hz = 2903900000.0\nb1_tesla = 100e-9\n"
        );
        let cfg = ScenarioConfig::parse(&text).unwrap();
        assert_eq!(cfg.all_tones().unwrap().len(), 2 + 4);
        assert_eq!(cfg.grid_plan().unwrap().unwrap().channels, 4);
    }
}
