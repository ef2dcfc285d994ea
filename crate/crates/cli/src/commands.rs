use std::path::{Path, PathBuf};
use std::time::Instant;

use nvhet_core::analysis::{
    amplitude_spectrum_of, disambiguate_frequency, find_peaks, format_value, key_value_report,
    lorentzian_fit, peak_snr, zoom_spectrum, GridMeasurement, Spectrum,
};
use nvhet_core::physics::{induced_relaxation, pump_rate, rabi_frequency};
use nvhet_core::sensing::{sensitivity_report, shot_noise_sensitivity, OperatingPoint};
use nvhet_core::synthesis::{predicted_sensitivity, predicted_snr, synthesize_trace, TimeTrace};
use nvhet_core::trace_io::{read_trace, write_trace, TraceFormat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AnalysisSection, ScenarioConfig};
use crate::failure::Failure;
use crate::manifest::{describe_outputs, sha256_file, RunManifest};

/// A command and all of its resolved inputs; enough to run it again.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Invocation {
    Simulate {
        config: ScenarioConfig,
        format: String,
    },
    Analyze {
        spec: AnalyzeSpec,
    },
    Sweep {
        config: ScenarioConfig,
        sweep: SweepSpec,
    },
    Report {
        config: ScenarioConfig,
    },
}

impl Invocation {
    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::Simulate { config, .. }
            | Self::Sweep { config, .. }
            | Self::Report { config } => Some(config.run.seed),
            Self::Analyze { .. } => None,
        }
    }
}

/// Files written (relative to the output directory) and text for stdout.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<String>,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub spacing_hz: f64,
    pub beat_hz: f64,
    #[serde(default)]
    pub offset_hz: f64,
    #[serde(default)]
    pub uncertainty_hz: f64,
}

impl std::str::FromStr for GridSpec {
    type Err = Failure;

    /// `SPACING:BEAT[:OFFSET[:UNCERTAINTY]]`, all in Hz.
    fn from_str(s: &str) -> Result<Self, Failure> {
        let bad = || {
            Failure::Config(format!(
                "--grid `{s}`: expected SPACING:BEAT[:OFFSET[:UNCERTAINTY]] in Hz"
            ))
        };
        let v: Vec<f64> = s
            .split(':')
            .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        if !(2..=4).contains(&v.len()) {
            return Err(bad());
        }
        Ok(Self {
            spacing_hz: v[0],
            beat_hz: v[1],
            offset_hz: v.get(2).copied().unwrap_or(0.0),
            uncertainty_hz: v.get(3).copied().unwrap_or(0.0),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    pub analysis: AnalysisSection,
    pub max_peaks: usize,
    /// Frequency range written to `spectrum.csv`; whole spectrum if unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum_range_hz: Option<(f64, f64)>,
    pub grids: Vec<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band_hz: Option<(f64, f64)>,
    pub tolerance_hz: f64,
}

impl Default for AnalyzeSpec {
    fn default() -> Self {
        Self {
            trace: None,
            analysis: AnalysisSection::default(),
            max_peaks: 20,
            spectrum_range_hz: None,
            grids: Vec::new(),
            band_hz: None,
            tolerance_hz: 1e-6,
        }
    }
}

impl AnalyzeSpec {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| Failure::Config(e.message().to_string()))?;
        serde_path_to_error::deserialize(de)
            .map_err(|e| Failure::Config(format!("{}: {}", e.path(), e.inner().message())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Dotted key path into the scenario, e.g. `tones.1.b1_tesla`.
    pub parameter: String,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    #[serde(default)]
    pub log: bool,
    #[serde(default)]
    pub keep_traces: bool,
    #[serde(default = "default_format")]
    pub format: String,
}

fn default_format() -> String {
    "csv".into()
}

impl SweepSpec {
    pub fn values(&self) -> Result<Vec<f64>, Failure> {
        let degenerate = |why: &str| Failure::Config(format!("sweep range: {why}"));
        if !(self.from.is_finite() && self.to.is_finite()) {
            return Err(degenerate("bounds must be finite"));
        }
        if self.points < 2 {
            return Err(degenerate("need at least 2 points"));
        }
        if self.from == self.to {
            return Err(degenerate("from equals to"));
        }
        if self.log && !(self.from > 0.0 && self.to > 0.0) {
            return Err(degenerate("log spacing needs positive bounds"));
        }
        let n = (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| {
                let u = i as f64 / n;
                if self.log {
                    self.from * (self.to / self.from).powf(u)
                } else {
                    self.from + u * (self.to - self.from)
                }
            })
            .collect())
    }
}

pub fn parse_format(s: &str) -> Result<TraceFormat, Failure> {
    s.parse::<TraceFormat>()
        .map_err(|e| Failure::Config(e.to_string()))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

pub fn synthesize(cfg: &ScenarioConfig) -> Result<TimeTrace, Failure> {
    Ok(synthesize_trace(
        &cfg.scenario()?,
        &cfg.params()?,
        &cfg.constants()?,
        &cfg.detector()?,
        cfg.run.seed,
    )?)
}

/// Beat line at `f` measured on the samples after the settling window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineMeasurement {
    pub peak_hz: f64,
    pub amplitude_v: f64,
    pub snr: f64,
    pub fwhm_hz: Option<f64>,
}

fn settled<'a>(samples: &'a [f64], fs: f64, a: &AnalysisSection) -> &'a [f64] {
    let skip = ((a.settle_s * fs).round() as usize).min(samples.len());
    &samples[skip..]
}

pub fn measure_line(
    samples: &[f64],
    fs: f64,
    spectrum: &Spectrum,
    a: &AnalysisSection,
    f: f64,
) -> Result<LineMeasurement, Failure> {
    let est = peak_snr(spectrum, f, a.signal_span_hz, a.noise_span_hz)?;
    let fwhm_hz = if a.fwhm {
        let x = settled(samples, fs, a);
        let half = fs / x.len() as f64;
        let zoom = zoom_spectrum(
            x,
            fs,
            a.window,
            (est.frequency - half).max(0.0),
            est.frequency + half,
            a.fwhm_points,
        )?;
        let fit = lorentzian_fit(&zoom.bin_frequencies(), &zoom.amplitudes, 1, None, false)?;
        Some(fit.peaks[0].fwhm)
    } else {
        None
    };
    Ok(LineMeasurement {
        peak_hz: est.frequency,
        amplitude_v: est.amplitude,
        snr: est.snr,
        fwhm_hz,
    })
}

pub fn simulate(cfg: &ScenarioConfig, out: &Path, format: TraceFormat) -> Result<Outcome, Failure> {
    let trace = synthesize(cfg)?;
    let name = format!("trace.{}", format.extension());
    write_trace(&trace, &out.join(&name), format)?;
    let mean = trace.samples.iter().sum::<f64>() / trace.len() as f64;
    let (lo, hi) = trace
        .samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let text = key_value_report(&[
        ("trace", name.clone()),
        ("samples", trace.len().to_string()),
        ("sample_rate_hz", format_value(trace.sample_rate)),
        ("duration_s", format_value(trace.duration())),
        ("seed", trace.seed.to_string()),
        ("fingerprint", trace.fingerprint.clone()),
        ("mean_v", format_value(mean)),
        ("min_v", format_value(lo)),
        ("max_v", format_value(hi)),
    ]);
    Ok(Outcome {
        outputs: vec![name.clone(), format!("{name}.meta")],
        text,
    })
}

fn grid_candidates(spec: &AnalyzeSpec) -> Result<Vec<(&'static str, String)>, Failure> {
    let ms: Vec<GridMeasurement> = spec
        .grids
        .iter()
        .map(|g| GridMeasurement {
            spacing: g.spacing_hz,
            offset: g.offset_hz,
            measured_beat: g.beat_hz,
            uncertainty: g.uncertainty_hz,
        })
        .collect();
    let band = spec.band_hz.ok_or_else(|| {
        Failure::Config("band_hz: required with grid measurements (--band LO:HI)".into())
    })?;
    let candidates = disambiguate_frequency(&ms, band, spec.tolerance_hz)?;
    let list = candidates
        .iter()
        .map(|f| format!("{f:.6}"))
        .collect::<Vec<_>>()
        .join(";");
    Ok(vec![
        ("candidates", candidates.len().to_string()),
        ("unique", (candidates.len() == 1).to_string()),
        ("candidate_frequencies_hz", list),
    ])
}

pub fn analyze(spec: &AnalyzeSpec, out: &Path) -> Result<Outcome, Failure> {
    let a = &spec.analysis;
    let mut entries: Vec<(&str, String)> = Vec::new();
    let mut outputs = Vec::new();
    if spec.trace.is_none() && spec.grids.is_empty() {
        return Err(Failure::Config(
            "nothing to analyze: give a trace and/or grid measurements".into(),
        ));
    }
    if let Some(path) = &spec.trace {
        let trace = read_trace(path)?;
        let x = settled(&trace.samples, trace.sample_rate, a);
        let spectrum = amplitude_spectrum_of(x, trace.sample_rate, a.window)?;
        entries.extend([
            ("samples", trace.len().to_string()),
            ("analyzed_samples", x.len().to_string()),
            ("sample_rate_hz", format_value(trace.sample_rate)),
            ("resolution_hz", format_value(spectrum.resolution)),
            ("seed", trace.seed.to_string()),
            ("fingerprint", trace.fingerprint.clone()),
        ]);

        let mut spec_csv = String::from("freq_hz,amplitude_v\n");
        let (f_lo, f_hi) = spec
            .spectrum_range_hz
            .unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
        for (i, v) in spectrum.amplitudes.iter().enumerate() {
            let f = spectrum.frequency(i);
            if f >= f_lo && f <= f_hi {
                spec_csv.push_str(&format!("{},{}\n", format_value(f), format_value(*v)));
            }
        }
        std::fs::write(out.join("spectrum.csv"), spec_csv)
            .map_err(io_err(&out.join("spectrum.csv")))?;
        outputs.push("spectrum.csv".to_string());

        let peaks = find_peaks(&spectrum, a.min_snr, a.noise_span_hz)?;
        let mut peaks_csv = String::from("frequency_hz,amplitude_v,fwhm_hz,snr\n");
        for p in peaks.iter().take(spec.max_peaks) {
            peaks_csv.push_str(&format!(
                "{},{},{},{}\n",
                format_value(p.frequency),
                format_value(p.amplitude),
                format_value(p.fwhm),
                format_value(p.snr)
            ));
        }
        std::fs::write(out.join("peaks.csv"), peaks_csv).map_err(io_err(&out.join("peaks.csv")))?;
        outputs.push("peaks.csv".to_string());
        entries.push(("peaks", peaks.len().min(spec.max_peaks).to_string()));

        if let Some(f) = a.signal_hz {
            let m = measure_line(&trace.samples, trace.sample_rate, &spectrum, a, f)?;
            entries.extend([
                ("signal_frequency_hz", format_value(m.peak_hz)),
                ("signal_amplitude_v", format_value(m.amplitude_v)),
                ("signal_snr", format_value(m.snr)),
            ]);
            if let Some(w) = m.fwhm_hz {
                entries.push(("signal_fwhm_hz", format_value(w)));
            }
        }
    }
    if !spec.grids.is_empty() {
        entries.extend(grid_candidates(spec)?);
    }
    let text = key_value_report(&entries);
    std::fs::write(out.join("report.txt"), &text).map_err(io_err(&out.join("report.txt")))?;
    outputs.push("report.txt".to_string());
    Ok(Outcome { outputs, text })
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct PointResult {
    value: f64,
    seed: u64,
    line: Option<LineMeasurement>,
    delta_v: f64,
    mean_v: f64,
}

const SWEEP_HEADER: &str = "index,value,seed,peak_hz,amplitude_v,snr,fwhm_hz,delta_v,mean_v";

fn point_row(i: usize, r: &PointResult) -> String {
    let nan = f64::NAN;
    let l = r.line;
    let cols = [
        l.map_or(nan, |l| l.peak_hz),
        l.map_or(nan, |l| l.amplitude_v),
        l.map_or(nan, |l| l.snr),
        l.and_then(|l| l.fwhm_hz).unwrap_or(nan),
        r.delta_v,
        r.mean_v,
    ];
    let cols: Vec<String> = cols.iter().map(|&x| format_value(x)).collect();
    format!(
        "{i},{},{},{}\n",
        format_value(r.value),
        r.seed,
        cols.join(",")
    )
}

/// Voltage before the first gate opens (or the first sample) minus the
/// mean of the last tenth of the record.
fn direct_difference(cfg: &ScenarioConfig, trace: &TimeTrace) -> f64 {
    let n = trace.len();
    let first_on = cfg
        .run
        .gates
        .iter()
        .map(|g| g.on_s)
        .fold(f64::INFINITY, f64::min);
    let pre = if first_on.is_finite() && first_on > 0.0 {
        ((first_on * trace.sample_rate) as usize).clamp(1, n)
    } else {
        1
    };
    let tail = (n / 10).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    mean(&trace.samples[..pre]) - mean(&trace.samples[n - tail..])
}

pub fn sweep(cfg: &ScenarioConfig, sweep: &SweepSpec, out: &Path) -> Result<Outcome, Failure> {
    let values = sweep.values()?;
    let format = parse_format(&sweep.format)?;
    // resolve every point first so schema errors surface before any work
    let configs: Vec<ScenarioConfig> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut c = cfg.with_value(&sweep.parameter, v)?;
            c.run.seed = cfg.run.seed.wrapping_add(i as u64);
            Ok(c)
        })
        .collect::<Result<_, Failure>>()?;
    let points_dir = out.join("points");
    std::fs::create_dir_all(&points_dir).map_err(io_err(&points_dir))?;
    let results: Vec<Result<(PointResult, Vec<String>), Failure>> = configs
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let trace = synthesize(c)?;
            let a = &c.analysis;
            let line = match c.signal_frequency()? {
                Some(f) => {
                    let x = settled(&trace.samples, trace.sample_rate, a);
                    let spectrum = amplitude_spectrum_of(x, trace.sample_rate, a.window)?;
                    Some(measure_line(
                        &trace.samples,
                        trace.sample_rate,
                        &spectrum,
                        a,
                        f,
                    )?)
                }
                None => None,
            };
            let r = PointResult {
                value: values[i],
                seed: c.run.seed,
                line,
                delta_v: direct_difference(c, &trace),
                mean_v: trace.samples.iter().sum::<f64>() / trace.len() as f64,
            };
            let mut files = Vec::new();
            let name = format!("points/point_{i:04}.csv");
            let path = out.join(&name);
            std::fs::write(&path, format!("{SWEEP_HEADER}\n{}", point_row(i, &r)))
                .map_err(io_err(&path))?;
            files.push(name);
            if sweep.keep_traces {
                let name = format!("points/trace_{i:04}.{}", format.extension());
                write_trace(&trace, &out.join(&name), format)?;
                files.push(name.clone());
                files.push(format!("{name}.meta"));
            }
            Ok((r, files))
        })
        .collect();
    let mut table = format!("{SWEEP_HEADER}\n");
    let mut outputs = Vec::new();
    let mut point_files = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let (r, files) = r?;
        table.push_str(&point_row(i, &r));
        point_files.extend(files);
    }
    std::fs::write(out.join("sweep.csv"), &table).map_err(io_err(&out.join("sweep.csv")))?;
    outputs.push("sweep.csv".to_string());
    outputs.extend(point_files);
    Ok(Outcome {
        outputs,
        text: table,
    })
}

pub fn report(cfg: &ScenarioConfig) -> Result<String, Failure> {
    let params = cfg.params()?;
    let constants = cfg.constants()?;
    let gamma_p = pump_rate(cfg.laser.power_w, &params)?;
    let mut entries: Vec<(&str, String)> = vec![
        ("gamma1_hz", format_value(params.gamma1)),
        ("gamma2_hz", format_value(params.gamma2)),
        ("gamma_p_hz", format_value(gamma_p)),
        (
            "shot_noise_limit_t",
            format_value(shot_noise_sensitivity(
                &params,
                &constants,
                cfg.run.duration_s,
            )?),
        ),
    ];
    let mut text = String::new();
    if let Some((op, signal_b)) = cfg.operating_point()? {
        let big = induced_relaxation(
            rabi_frequency(op.reference_b, &constants)?,
            params.gamma2,
            0.0,
        )?;
        let single = OperatingPoint {
            channels: 1,
            total_time: 1.0,
            ..op
        };
        entries.extend([
            ("reference_b_t", format_value(op.reference_b)),
            ("signal_b_t", format_value(signal_b)),
            ("delta_hz", format_value(op.delta)),
            ("channels", op.channels.to_string()),
            ("total_time_s", format_value(op.total_time)),
            ("gamma_big_g_hz", format_value(big)),
            (
                "predicted_sensitivity_t_per_rthz",
                format_value(predicted_sensitivity(
                    &cfg.detector()?,
                    &params,
                    &constants,
                    &single,
                )?),
            ),
            (
                "predicted_snr",
                format_value(predicted_snr(
                    &cfg.detector()?,
                    &params,
                    &constants,
                    &OperatingPoint { channels: 1, ..op },
                    signal_b,
                )?),
            ),
        ]);
        text.push_str(&key_value_report(&entries));
        text.push_str(&sensitivity_report(&params, &constants, &op, signal_b)?.report());
    } else {
        text.push_str(&key_value_report(&entries));
    }
    if let Some(plan) = cfg.grid_plan()? {
        text.push_str(&plan.report());
    }
    Ok(text)
}

/// Runs an invocation into `out`, writing its manifest.
pub fn execute(inv: &Invocation, out: &Path) -> Result<Outcome, Failure> {
    let start = Instant::now();
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let outcome = match inv {
        Invocation::Simulate { config, format } => simulate(config, out, parse_format(format)?)?,
        Invocation::Analyze { spec } => analyze(spec, out)?,
        Invocation::Sweep { config, sweep: s } => sweep(config, s, out)?,
        Invocation::Report { config } => {
            let text = report(config)?;
            std::fs::write(out.join("report.txt"), &text)
                .map_err(io_err(&out.join("report.txt")))?;
            Outcome {
                outputs: vec!["report.txt".into()],
                text,
            }
        }
    };
    let manifest = RunManifest {
        tool: "nvhet".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        invocation: inv.clone(),
        seed: inv.seed(),
        outputs: describe_outputs(out, &outcome.outputs)?,
        wall_clock_s: start.elapsed().as_secs_f64(),
        created_unix_s: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    manifest.write(out)?;
    Ok(outcome)
}

/// Re-executes a manifest into `out` and compares every output hash.
pub fn rerun(manifest_path: &Path, out: &Path) -> Result<Outcome, Failure> {
    let original = RunManifest::load(manifest_path)?;
    execute(&original.invocation, out)?;
    let mut text = String::new();
    let mut mismatches = 0;
    for f in &original.outputs {
        let status = match sha256_file(&out.join(&f.path)) {
            Ok((h, _)) if h == f.sha256 => "identical",
            Ok(_) => {
                mismatches += 1;
                "DIFFERS"
            }
            Err(_) => {
                mismatches += 1;
                "MISSING"
            }
        };
        text.push_str(&format!("{}={status}\n", f.path));
    }
    if mismatches > 0 {
        return Err(Failure::Numeric(format!(
            "{text}{mismatches} output(s) not reproduced"
        )));
    }
    text.push_str(&format!("reproduced={}\n", original.outputs.len()));
    Ok(Outcome {
        outputs: Vec::new(),
        text,
    })
}
