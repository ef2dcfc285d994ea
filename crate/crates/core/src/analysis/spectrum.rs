use std::path::Path;

use rayon::prelude::*;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::physics::TAU;
use crate::synthesis::TimeTrace;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

impl Window {
    fn weight(self, i: usize, n: usize) -> f64 {
        match self {
            Self::Rectangular => 1.0,
            Self::Hann => 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos(),
        }
    }

    /// Mean of the window, the amplitude gain for a bin-centred sinusoid.
    fn coherent_gain(self) -> f64 {
        match self {
            Self::Rectangular => 1.0,
            Self::Hann => 0.5,
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectangular" | "rect" => Ok(Self::Rectangular),
            "hann" => Ok(Self::Hann),
            other => Err(invalid("window", format!("unknown window `{other}`"))),
        }
    }
}

/// One-sided amplitude spectrum, normalized so a sinusoid of amplitude A
/// centred on a bin reads A. Bins are uniform: bin i sits at
/// `start + i·resolution`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub start: f64,
    /// Bin spacing, Hz.
    pub resolution: f64,
    /// V.
    pub amplitudes: Vec<f64>,
    /// Duration of the analysed record, s.
    pub duration: f64,
    pub window: Window,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn frequency(&self, index: usize) -> f64 {
        self.start + index as f64 * self.resolution
    }

    pub fn bin_frequencies(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.frequency(i)).collect()
    }

    /// Index of the bin nearest to `f`, clamped to the spectrum.
    pub fn bin_of(&self, f: f64) -> usize {
        let i = ((f - self.start) / self.resolution).round();
        i.clamp(0.0, (self.len().saturating_sub(1)) as f64) as usize
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 40 + 24);
        out.push_str("freq_hz,amplitude_v\n");
        for (i, a) in self.amplitudes.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.frequency(i), a));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

pub fn amplitude_spectrum(trace: &TimeTrace, window: Window) -> Result<Spectrum> {
    amplitude_spectrum_of(&trace.samples, trace.sample_rate, window)
}

/// FFT amplitude spectrum of `samples`. DC and Nyquist bins carry the
/// 1/N weight, all others 2/N.
pub fn amplitude_spectrum_of(
    samples: &[f64],
    sample_rate: f64,
    window: Window,
) -> Result<Spectrum> {
    let n = samples.len();
    if n < 16 {
        return Err(invalid(
            "trace",
            format!("need at least 16 samples, got {n}"),
        ));
    }
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(invalid("trace", format!("sample {i} is not finite")));
    }
    let mut buf: Vec<Complex64> = samples
        .iter()
        .enumerate()
        .map(|(i, &v)| Complex64::new(v * window.weight(i, n), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let norm = 1.0 / (n as f64 * window.coherent_gain());
    let half = n / 2;
    let amplitudes = buf[..=half]
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let edge = k == 0 || (n % 2 == 0 && k == half);
            c.norm() * norm * if edge { 1.0 } else { 2.0 }
        })
        .collect();
    Ok(Spectrum {
        start: 0.0,
        resolution: sample_rate / n as f64,
        amplitudes,
        duration: n as f64 / sample_rate,
        window,
    })
}

/// Amplitude of the discrete-time Fourier transform on `points` uniformly
/// spaced frequencies in [f_lo, f_hi], with the record mean removed.
/// Resolves line shapes finer than the FFT bin spacing.
pub fn zoom_spectrum(
    samples: &[f64],
    sample_rate: f64,
    window: Window,
    f_lo: f64,
    f_hi: f64,
    points: usize,
) -> Result<Spectrum> {
    let n = samples.len();
    if n < 16 {
        return Err(invalid(
            "trace",
            format!("need at least 16 samples, got {n}"),
        ));
    }
    if !(f_hi > f_lo && f_lo >= 0.0 && points >= 2) {
        return Err(invalid(
            "zoom",
            "need f_hi > f_lo >= 0 and at least two points",
        ));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let weighted: Vec<f64> = samples
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - mean) * window.weight(i, n))
        .collect();
    let step = (f_hi - f_lo) / (points - 1) as f64;
    let norm = 2.0 / (n as f64 * window.coherent_gain());
    let amplitudes = (0..points)
        .into_par_iter()
        .map(|j| dtft(&weighted, (f_lo + j as f64 * step) / sample_rate).norm() * norm)
        .collect();
    Ok(Spectrum {
        start: f_lo,
        resolution: step,
        amplitudes,
        duration: n as f64 / sample_rate,
        window,
    })
}

/// Σ x_n e^{−2πi·ν·n} for normalized frequency ν, by a rotating phasor that
/// is re-anchored every block to bound rounding drift.
fn dtft(x: &[f64], nu: f64) -> Complex64 {
    const BLOCK: usize = 4096;
    let rot = Complex64::from_polar(1.0, -TAU * nu);
    let mut acc = Complex64::new(0.0, 0.0);
    for (b, chunk) in x.chunks(BLOCK).enumerate() {
        let start = (b * BLOCK) as f64;
        let mut w = Complex64::from_polar(1.0, -TAU * (nu * start).fract());
        let mut part = Complex64::new(0.0, 0.0);
        for &v in chunk {
            part += w * v;
            w *= rot;
        }
        acc += part;
    }
    acc
}
