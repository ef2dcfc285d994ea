use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, AnalyzeSpec, GridSpec, Invocation, SweepSpec};
use crate::config::{resolve_config_path, ScenarioConfig};
use crate::failure::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "nvhet",
    version,
    about = "Heterodyne NV-ensemble magnetometer simulator"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory searched for preset configs named by --config.
    #[arg(long, global = true, env = "NVHET_PRESET_DIR")]
    pub preset_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Scenario file, or the name of a preset.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides run.seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a photovoltage trace.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// csv or binary.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Spectrum, peaks, line fit and frequency disambiguation.
    Analyze {
        /// Trace file (csv or binary).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// TOML analysis spec; flags override it.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// rectangular or hann.
        #[arg(long)]
        window: Option<String>,
        /// Beat frequency whose line is measured (SNR, optional FWHM).
        #[arg(long)]
        signal_hz: Option<f64>,
        /// Width around the signal excluded from the baseline.
        #[arg(long)]
        signal_span_hz: Option<f64>,
        /// Width of the baseline window around the signal.
        #[arg(long)]
        noise_span_hz: Option<f64>,
        /// Leading seconds dropped before the FFT.
        #[arg(long)]
        settle_s: Option<f64>,
        /// Fit a Lorentzian to the zoomed signal line.
        #[arg(long)]
        fwhm: bool,
        /// Minimum SNR for a listed peak.
        #[arg(long)]
        min_snr: Option<f64>,
        #[arg(long)]
        max_peaks: Option<usize>,
        /// Range written to spectrum.csv, LO:HI in Hz.
        #[arg(long)]
        spectrum_range: Option<String>,
        /// Beat measured against a comb: SPACING:BEAT[:OFFSET[:UNCERTAINTY]] (Hz). Repeatable.
        #[arg(long = "grid")]
        grids: Vec<String>,
        /// Search band for disambiguation, LO:HI in Hz.
        #[arg(long)]
        band: Option<String>,
        /// Slack added to every measured beat when matching.
        #[arg(long)]
        tolerance_hz: Option<f64>,
    },
    /// Run simulate + analyze over a range of one config value.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Dotted key path, e.g. tones.1.b1_tesla.
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        points: usize,
        /// Logarithmic spacing.
        #[arg(long)]
        log: bool,
        /// Also write each point's trace.
        #[arg(long)]
        keep_traces: bool,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Analytic sensitivity report for the config's operating point.
    Report {
        #[command(flatten)]
        config: ConfigArgs,
        /// Also write report.txt and a manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a manifest and check that every output is byte-identical.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn pair(flag: &str, s: &str) -> Result<(f64, f64), Failure> {
    let bad = || Failure::Config(format!("--{flag} `{s}`: expected LO:HI"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

impl Cli {
    fn load(&self, args: &ConfigArgs) -> Result<ScenarioConfig, Failure> {
        let path = resolve_config_path(&args.config, self.preset_dir.as_deref())?;
        let mut cfg = ScenarioConfig::load(&path)?;
        if let Some(seed) = args.seed {
            cfg.run.seed = seed;
        }
        Ok(cfg)
    }

    /// Executes the command, returning text for stdout.
    pub fn run(&self) -> Result<String, Failure> {
        if let Some(n) = self.threads {
            if n == 0 {
                return Err(Failure::Config("--threads must be at least 1".into()));
            }
            // fails only if a pool already exists, which is harmless
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
        let (inv, out) = match &self.command {
            Command::Simulate {
                config,
                out,
                format,
            } => {
                commands::parse_format(format)?;
                (
                    Invocation::Simulate {
                        config: self.load(config)?,
                        format: format.clone(),
                    },
                    out.clone(),
                )
            }
            Command::Analyze {
                trace,
                spec,
                out,
                window,
                signal_hz,
                signal_span_hz,
                noise_span_hz,
                settle_s,
                fwhm,
                min_snr,
                max_peaks,
                spectrum_range,
                grids,
                band,
                tolerance_hz,
            } => {
                let mut s = match spec {
                    Some(p) => {
                        let text = std::fs::read_to_string(p)
                            .map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
                        AnalyzeSpec::parse(&text)
                            .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
                    }
                    None => AnalyzeSpec::default(),
                };
                if let Some(t) = trace {
                    // absolute, so the manifest reruns from anywhere
                    s.trace = Some(
                        std::path::absolute(t)
                            .map_err(|e| Failure::Io(format!("{}: {e}", t.display())))?,
                    );
                }
                let a = &mut s.analysis;
                if let Some(w) = window {
                    a.window = w
                        .parse()
                        .map_err(|e: nvhet_core::Error| Failure::Config(e.to_string()))?;
                }
                a.signal_hz = signal_hz.or(a.signal_hz);
                a.signal_span_hz = signal_span_hz.unwrap_or(a.signal_span_hz);
                a.noise_span_hz = noise_span_hz.unwrap_or(a.noise_span_hz);
                a.settle_s = settle_s.unwrap_or(a.settle_s);
                a.fwhm |= *fwhm;
                a.min_snr = min_snr.unwrap_or(a.min_snr);
                s.max_peaks = max_peaks.unwrap_or(s.max_peaks);
                if let Some(r) = spectrum_range {
                    s.spectrum_range_hz = Some(pair("spectrum-range", r)?);
                }
                for g in grids {
                    s.grids.push(g.parse::<GridSpec>()?);
                }
                if let Some(b) = band {
                    s.band_hz = Some(pair("band", b)?);
                }
                s.tolerance_hz = tolerance_hz.unwrap_or(s.tolerance_hz);
                (Invocation::Analyze { spec: s }, out.clone())
            }
            Command::Sweep {
                config,
                out,
                param,
                from,
                to,
                points,
                log,
                keep_traces,
                format,
            } => {
                let sweep = SweepSpec {
                    parameter: param.clone(),
                    from: *from,
                    to: *to,
                    points: *points,
                    log: *log,
                    keep_traces: *keep_traces,
                    format: format.clone(),
                };
                sweep.values()?;
                commands::parse_format(format)?;
                (
                    Invocation::Sweep {
                        config: self.load(config)?,
                        sweep,
                    },
                    out.clone(),
                )
            }
            Command::Report { config, out } => {
                let cfg = self.load(config)?;
                match out {
                    Some(dir) => (Invocation::Report { config: cfg }, dir.clone()),
                    None => return commands::report(&cfg),
                }
            }
            Command::Rerun { manifest, out } => return Ok(commands::rerun(manifest, out)?.text),
        };
        Ok(commands::execute(&inv, &out)?.text)
    }
}
