use serde::{Deserialize, Serialize};

use super::spectrum::Spectrum;
use crate::error::{ensure_positive, invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakEstimate {
    /// Hz.
    pub frequency: f64,
    /// V.
    pub amplitude: f64,
    /// Half-maximum width from linear interpolation between bins, Hz.
    pub fwhm: f64,
    /// Peak over twice the baseline RMS; infinite for a noiseless baseline.
    pub snr: f64,
}

impl PeakEstimate {
    pub fn report(&self) -> String {
        super::key_value_report(&[
            ("frequency_hz", super::format_value(self.frequency)),
            ("amplitude_v", super::format_value(self.amplitude)),
            ("fwhm_hz", super::format_value(self.fwhm)),
            ("snr", super::format_value(self.snr)),
        ])
    }
}

/// Largest bin within ±signal_span/2 of `f_center`, compared against the
/// RMS of the remaining bins within ±noise_span/2.
///
/// SNR = amplitude / (2·RMS).
pub fn peak_snr(
    spectrum: &Spectrum,
    f_center: f64,
    signal_span: f64,
    noise_span: f64,
) -> Result<PeakEstimate> {
    ensure_positive("signal_span", signal_span)?;
    ensure_positive("noise_span", noise_span)?;
    if spectrum.is_empty() {
        return Err(invalid("spectrum", "empty spectrum"));
    }
    let last = spectrum.frequency(spectrum.len() - 1);
    if f_center < spectrum.start || f_center > last {
        return Err(invalid(
            "f_center",
            format!("{f_center} Hz is outside the spectrum"),
        ));
    }
    let in_span = |i: usize, span: f64| (spectrum.frequency(i) - f_center).abs() <= span / 2.0;
    let lo = spectrum.bin_of(f_center - noise_span.max(signal_span) / 2.0);
    let hi = spectrum.bin_of(f_center + noise_span.max(signal_span) / 2.0);
    let mut best: Option<usize> = None;
    let (mut sum_sq, mut count) = (0.0, 0usize);
    for i in lo..=hi {
        if in_span(i, signal_span) {
            if best.is_none_or(|b| spectrum.amplitudes[i] > spectrum.amplitudes[b]) {
                best = Some(i);
            }
        } else if in_span(i, noise_span) {
            sum_sq += spectrum.amplitudes[i].powi(2);
            count += 1;
        }
    }
    let peak = best.unwrap_or_else(|| spectrum.bin_of(f_center));
    if count == 0 {
        return Err(invalid(
            "noise_span",
            "no baseline bins outside the signal span",
        ));
    }
    let amplitude = spectrum.amplitudes[peak];
    let rms = (sum_sq / count as f64).sqrt();
    let snr = if rms > 0.0 {
        amplitude / (2.0 * rms)
    } else if amplitude > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(PeakEstimate {
        frequency: spectrum.frequency(peak),
        amplitude,
        fwhm: half_max_width(spectrum, peak),
        snr,
    })
}

/// Width of the peak at bin `peak` where it falls to half its height,
/// interpolating linearly between bins. A lone bin gives one bin width.
pub fn half_max_width(spectrum: &Spectrum, peak: usize) -> f64 {
    let a = &spectrum.amplitudes;
    let half = a[peak] / 2.0;
    let crossing = |dir: isize| -> f64 {
        let mut i = peak as isize;
        loop {
            let j = i + dir;
            if j < 0 || j as usize >= a.len() {
                return (i - peak as isize).unsigned_abs() as f64;
            }
            let (ai, aj) = (a[i as usize], a[j as usize]);
            if aj <= half {
                let frac = if ai == aj {
                    0.0
                } else {
                    (ai - half) / (ai - aj)
                };
                return (i - peak as isize).unsigned_abs() as f64 + frac;
            }
            i = j;
        }
    };
    (crossing(-1) + crossing(1)) * spectrum.resolution
}

/// Local maxima (excluding DC) whose SNR against the surrounding
/// `noise_span` reaches `min_snr` and whose height exceeds 10⁻⁹ of the
/// largest bin including DC. Sorted by descending amplitude.
pub fn find_peaks(spectrum: &Spectrum, min_snr: f64, noise_span: f64) -> Result<Vec<PeakEstimate>> {
    ensure_positive("noise_span", noise_span)?;
    let a = &spectrum.amplitudes;
    let dc = if spectrum.start == 0.0 { 1 } else { 0 };
    let top = a.iter().skip(dc).cloned().fold(0.0f64, f64::max);
    let reference = top.max(if dc == 1 { a[0] } else { 0.0 });
    if top == 0.0 || a.len() < dc + 3 {
        return Ok(Vec::new());
    }
    let mut peaks = Vec::new();
    for i in (dc + 1)..a.len() - 1 {
        if !(a[i] > a[i - 1] && a[i] >= a[i + 1]) || a[i] < 1e-9 * reference {
            continue;
        }
        let f = spectrum.frequency(i);
        let span = noise_span
            .min(f - spectrum.frequency(dc))
            .max(4.0 * spectrum.resolution);
        let Ok(est) = peak_snr(spectrum, f, 1.5 * spectrum.resolution, span) else {
            continue;
        };
        if est.snr >= min_snr && est.frequency == f {
            peaks.push(est);
        }
    }
    peaks.sort_by(|x, y| y.amplitude.total_cmp(&x.amplitude));
    Ok(peaks)
}
