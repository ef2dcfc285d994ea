use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmOptions};
use crate::error::{ensure_positive, invalid, Error, Result};
use crate::linalg;
use crate::physics::TAU;

/// height / (1 + (2(x − center)/fwhm)²)
pub fn lorentzian(x: f64, center: f64, fwhm: f64, height: f64) -> f64 {
    let u = 2.0 * (x - center) / fwhm;
    height / (1.0 + u * u)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorentzPeak {
    pub center: f64,
    pub fwhm: f64,
    /// Signed: negative for dips.
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    /// Sorted by center.
    pub peaks: Vec<LorentzPeak>,
    pub baseline: f64,
    pub rss: f64,
    pub r_squared: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostic: Option<String>,
}

impl LorentzianFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.baseline
            + self
                .peaks
                .iter()
                .map(|p| lorentzian(x, p.center, p.fwhm, p.height))
                .sum::<f64>()
    }

    pub fn report(&self) -> String {
        let entries = [
            ("peaks", self.peaks.len().to_string()),
            ("baseline", super::format_value(self.baseline)),
            ("rss", super::format_value(self.rss)),
            ("r_squared", super::format_value(self.r_squared)),
            ("iterations", self.iterations.to_string()),
            ("converged", self.converged.to_string()),
        ];
        let mut out = super::key_value_report(&entries);
        for (i, p) in self.peaks.iter().enumerate() {
            out.push_str(&format!(
                "peak{i}.center={}\npeak{i}.fwhm={}\npeak{i}.height={}\n",
                p.center, p.fwhm, p.height
            ));
        }
        if let Some(d) = &self.diagnostic {
            out.push_str(&format!("diagnostic={d}\n"));
        }
        out
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Seeds from the `n` most prominent local extrema of y − median(y), in
/// the direction of the largest excursion.
fn auto_seed(x: &[f64], y: &[f64], n: usize, fit_baseline: bool) -> (f64, Vec<LorentzPeak>) {
    let base = if fit_baseline { median(y) } else { 0.0 };
    let d: Vec<f64> = y.iter().map(|v| v - base).collect();
    let sign = d
        .iter()
        .cloned()
        .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc })
        .signum();
    let s: Vec<f64> = d.iter().map(|v| v * sign).collect();
    let mut extrema: Vec<usize> = (0..s.len())
        .filter(|&i| {
            let left = i == 0 || s[i] >= s[i - 1];
            let right = i + 1 == s.len() || s[i] >= s[i + 1];
            left && right && s[i] > 0.0
        })
        .collect();
    extrema.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let span = (x[x.len() - 1] - x[0]).abs();
    let mut chosen: Vec<usize> = Vec::new();
    for &i in &extrema {
        if chosen.len() == n {
            break;
        }
        if chosen
            .iter()
            .all(|&j| (x[i] - x[j]).abs() > span / (4.0 * n as f64))
        {
            chosen.push(i);
        }
    }
    let mut k = 0;
    while chosen.len() < n {
        // spread leftovers evenly
        chosen.push(((k + 1) * (x.len() - 1)) / (n + 1));
        k += 1;
    }
    let peaks = chosen
        .iter()
        .map(|&i| {
            let half = s[i] / 2.0;
            let mut lo = i;
            while lo > 0 && s[lo] > half {
                lo -= 1;
            }
            let mut hi = i;
            while hi + 1 < s.len() && s[hi] > half {
                hi += 1;
            }
            let width = (x[hi] - x[lo]).abs().max(span / x.len() as f64 * 2.0);
            LorentzPeak {
                center: x[i],
                fwhm: width,
                height: d[i],
            }
        })
        .collect();
    (base, peaks)
}

/// Fits `baseline + Σ lorentzian` to (x, y). Without `init` the peaks are
/// seeded from local extrema. The fit runs in coordinates normalized to
/// the data's range, so it is equivariant under shifting and scaling x.
pub fn lorentzian_multifit(
    x: &[f64],
    y: &[f64],
    n_peaks: usize,
    init: Option<&[LorentzPeak]>,
) -> Result<LorentzianFit> {
    lorentzian_fit(x, y, n_peaks, init, true)
}

/// As [`lorentzian_multifit`], with the baseline either fitted or pinned
/// to zero (for spectral lines on a noiseless floor).
pub fn lorentzian_fit(
    x: &[f64],
    y: &[f64],
    n_peaks: usize,
    init: Option<&[LorentzPeak]>,
    fit_baseline: bool,
) -> Result<LorentzianFit> {
    if n_peaks == 0 {
        return Err(invalid("n_peaks", "need at least one peak"));
    }
    if x.len() != y.len() {
        return Err(invalid("y", "x and y differ in length"));
    }
    if x.len() < 3 * n_peaks + 2 {
        return Err(invalid(
            "x",
            format!("{} points cannot constrain {n_peaks} peaks", x.len()),
        ));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(invalid("x", "data must be finite"));
    }
    let (x_min, x_max) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let x0 = 0.5 * (x_min + x_max);
    let xs = 0.5 * (x_max - x_min);
    if xs <= 0.0 {
        return Err(invalid("x", "x values are all equal"));
    }
    let (base, seeds) = match init {
        Some(p) if p.len() == n_peaks => (median(y), p.to_vec()),
        Some(p) => {
            return Err(invalid(
                "init",
                format!("{} guesses for {n_peaks} peaks", p.len()),
            ))
        }
        None => auto_seed(x, y, n_peaks, fit_baseline),
    };
    let base = if fit_baseline { base } else { 0.0 };
    let ys = y.iter().map(|v| (v - base).abs()).fold(0.0f64, f64::max);
    if ys == 0.0 {
        return Err(Error::Degenerate("data are constant".into()));
    }
    let u: Vec<f64> = x.iter().map(|v| (v - x0) / xs).collect();
    let w: Vec<f64> = y.iter().map(|v| (v - base) / ys).collect();
    let lead = usize::from(fit_baseline);
    let mut p0 = vec![0.0; lead];
    for s in &seeds {
        p0.extend([(s.center - x0) / xs, s.fwhm / xs, s.height / ys]);
    }
    let model = |p: &[f64], ui: f64| {
        let mut v = if fit_baseline { p[0] } else { 0.0 };
        for k in 0..n_peaks {
            let (c, fw, h) = (
                p[lead + 3 * k],
                p[lead + 1 + 3 * k].abs(),
                p[lead + 2 + 3 * k],
            );
            v += lorentzian(ui, c, fw, h);
        }
        v
    };
    let residuals = |p: &[f64]| {
        u.iter()
            .zip(&w)
            .map(|(&ui, &wi)| model(p, ui) - wi)
            .collect::<Vec<_>>()
    };
    let scales = vec![1.0; p0.len()];
    let out = levenberg_marquardt(residuals, &p0, &scales, &LmOptions::default());
    let mut peaks: Vec<LorentzPeak> = (0..n_peaks)
        .map(|k| LorentzPeak {
            center: x0 + xs * out.params[lead + 3 * k],
            fwhm: xs * out.params[lead + 1 + 3 * k].abs(),
            height: ys * out.params[lead + 2 + 3 * k],
        })
        .collect();
    peaks.sort_by(|a, b| a.center.total_cmp(&b.center));
    let mean_w = w.iter().sum::<f64>() / w.len() as f64;
    let tss: f64 = w.iter().map(|v| (v - mean_w).powi(2)).sum();
    Ok(LorentzianFit {
        peaks,
        baseline: if fit_baseline {
            base + ys * out.params[0]
        } else {
            0.0
        },
        rss: out.rss * ys * ys,
        r_squared: if tss > 0.0 { 1.0 - out.rss / tss } else { 1.0 },
        iterations: out.iterations,
        converged: out.converged,
        diagnostic: out.diagnostic,
    })
}

/// V(t) = offset + amplitude·e^{−2π·rate·(t − t₀)}, t₀ the first time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    /// Hz (the time constant is 1/(2π·rate)).
    pub rate: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub rss: f64,
}

impl ExponentialFit {
    pub fn report(&self) -> String {
        super::key_value_report(&[
            ("rate_hz", super::format_value(self.rate)),
            ("amplitude", super::format_value(self.amplitude)),
            ("offset", super::format_value(self.offset)),
            ("rss", super::format_value(self.rss)),
        ])
    }
}

/// Exponential approach fitted by variable projection: for each trial
/// rate the offset and amplitude are solved linearly, and the rate is
/// found by a log-spaced scan refined with golden-section search.
pub fn exponential_rate_fit(times: &[f64], values: &[f64]) -> Result<ExponentialFit> {
    let n = times.len();
    if n != values.len() {
        return Err(invalid("values", "times and values differ in length"));
    }
    if n < 4 {
        return Err(invalid("values", "need at least four points"));
    }
    if times.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(invalid("values", "data must be finite"));
    }
    let t0 = times[0];
    let span = times[n - 1] - t0;
    if span <= 0.0 {
        return Err(invalid("times", "times must increase"));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let scale = centred.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale <= 1e-12 * mean.abs() || scale == 0.0 {
        return Err(Error::Degenerate("segment is flat".into()));
    }
    let solve = |rate: f64| -> (f64, f64, f64) {
        let (mut s_e, mut s_ee, mut s_y, mut s_ey) = (0.0, 0.0, 0.0, 0.0);
        for (t, y) in times.iter().zip(&centred) {
            let e = (-TAU * rate * (t - t0)).exp();
            s_e += e;
            s_ee += e * e;
            s_y += y;
            s_ey += e * y;
        }
        let nf = n as f64;
        let det = nf * s_ee - s_e * s_e;
        if det.abs() <= 1e-300 {
            return (f64::INFINITY, 0.0, 0.0);
        }
        let amp = (nf * s_ey - s_e * s_y) / det;
        let off = (s_y - amp * s_e) / nf;
        let rss = times
            .iter()
            .zip(&centred)
            .map(|(t, y)| (off + amp * (-TAU * rate * (t - t0)).exp() - y).powi(2))
            .sum();
        (rss, amp, off)
    };
    let dt = span / (n - 1) as f64;
    let (lo, hi) = ((0.01 / span).ln(), (1.0 / (TAU * dt) * 3.0).ln());
    let grid = 400;
    let rss_at = |lr: f64| solve(lr.exp()).0;
    let samples: Vec<f64> = (0..=grid)
        .map(|i| rss_at(lo + (hi - lo) * i as f64 / grid as f64))
        .collect();
    let best = (0..=grid)
        .min_by(|&a, &b| samples[a].total_cmp(&samples[b]))
        .unwrap();
    if best == 0 || best == grid {
        return Err(Error::Degenerate(
            "no exponential time scale within the segment (non-monotone or too slow)".into(),
        ));
    }
    let at = |i: usize| lo + (hi - lo) * i as f64 / grid as f64;
    let (mut a, mut b) = (at(best - 1), at(best + 1));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (rss_at(c), rss_at(d));
    while b - a > 1e-13 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = rss_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = rss_at(d);
        }
    }
    let rate = (0.5 * (a + b)).exp();
    let (rss, amplitude, off) = solve(rate);
    let tss: f64 = centred.iter().map(|v| v * v).sum();
    if rss > 0.5 * tss {
        return Err(Error::Degenerate(
            "segment is not an exponential approach (non-monotone)".into(),
        ));
    }
    Ok(ExponentialFit {
        rate,
        amplitude,
        offset: off + mean,
        rss,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// Coefficient of determination in log-log space.
    pub r_squared: f64,
}

/// y = prefactor·x^exponent by least squares on (ln x, ln y).
pub fn power_law_fit(x: &[f64], y: &[f64]) -> Result<PowerLawFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid(
            "x",
            "need at least two (x, y) pairs of equal length",
        ));
    }
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(invalid("x", "power-law data must be finite and positive"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let rows: Vec<Vec<f64>> = lx.iter().map(|v| vec![*v, 1.0]).collect();
    let coef = linalg::least_squares(&rows, &ly)
        .ok_or_else(|| Error::Degenerate("x values are all equal".into()))?;
    let mean = ly.iter().sum::<f64>() / ly.len() as f64;
    let tss: f64 = ly.iter().map(|v| (v - mean).powi(2)).sum();
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (coef[0] * a + coef[1] - b).powi(2))
        .sum();
    Ok(PowerLawFit {
        exponent: coef[0],
        prefactor: coef[1].exp(),
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
    })
}

/// Fixed quantities of the heterodyne amplitude-vs-reference-field curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponsivityModel {
    pub gamma_p: f64,
    pub gamma1: f64,
    pub delta: f64,
    /// Gyromagnetic ratio, Hz/T.
    pub gamma_nv: f64,
}

/// scale·Γp√ΓG / (Σ√(Σ² + δ²)) with ΓG = (γB/√2)²/Γ2 and Σ = Γp + Γ1 + ΓG.
/// The signal-side factor √Γg is folded into `scale`.
pub fn responsivity_model(
    model: &ResponsivityModel,
    gamma2: f64,
    scale: f64,
    reference_b: f64,
) -> f64 {
    let g = model.gamma_nv * reference_b / std::f64::consts::SQRT_2;
    let big = g * g / gamma2;
    let total = model.gamma_p + model.gamma1 + big;
    scale * model.gamma_p * big.sqrt() / (total * total.hypot(model.delta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponsivityFit {
    pub gamma2: f64,
    pub scale: f64,
    /// 2×2 row-major over (Γ2, scale).
    pub covariance: Option<[f64; 4]>,
    pub rss: f64,
    pub warnings: Vec<String>,
}

impl ResponsivityFit {
    pub fn gamma2_std(&self) -> Option<f64> {
        self.covariance.map(|c| c[0].max(0.0).sqrt())
    }
}

/// Fits Γ2 and an overall scale to heterodyne amplitudes measured at
/// several reference fields.
pub fn responsivity_fit(
    reference_b: &[f64],
    amplitudes: &[f64],
    model: &ResponsivityModel,
) -> Result<ResponsivityFit> {
    let n = reference_b.len();
    if n != amplitudes.len() {
        return Err(invalid(
            "amplitudes",
            "fields and amplitudes differ in length",
        ));
    }
    if n < 2 {
        return Err(invalid(
            "amplitudes",
            "need at least two points to fit gamma2 and scale",
        ));
    }
    ensure_positive("gamma_p", model.gamma_p)?;
    ensure_positive("gamma_nv", model.gamma_nv)?;
    if reference_b.iter().any(|b| !(b.is_finite() && *b > 0.0))
        || amplitudes.iter().any(|a| !a.is_finite())
    {
        return Err(invalid(
            "reference_b",
            "fields must be positive and amplitudes finite",
        ));
    }
    let mut warnings = Vec::new();
    if n < 5 {
        warnings.push(format!("only {n} points; gamma2 is poorly constrained"));
    }
    let imax = (0..n)
        .max_by(|&a, &b| amplitudes[a].total_cmp(&amplitudes[b]))
        .unwrap();
    let bmin = reference_b.iter().cloned().fold(f64::INFINITY, f64::min);
    let bmax = reference_b.iter().cloned().fold(0.0, f64::max);
    if reference_b[imax] == bmin || reference_b[imax] == bmax {
        warnings.push("data do not span the response maximum; gamma2 is weakly constrained".into());
    }
    let best_scale = |gamma2: f64| {
        let (mut num, mut den) = (0.0, 0.0);
        for (b, a) in reference_b.iter().zip(amplitudes) {
            let f = responsivity_model(model, gamma2, 1.0, *b);
            num += f * a;
            den += f * f;
        }
        let s = if den > 0.0 { num / den } else { 0.0 };
        let rss: f64 = reference_b
            .iter()
            .zip(amplitudes)
            .map(|(b, a)| (responsivity_model(model, gamma2, s, *b) - a).powi(2))
            .sum();
        (s, rss)
    };
    // coarse scan over Γ2, 1 Hz to 1 GHz
    let (mut g_best, mut rss_best) = (1.0, f64::INFINITY);
    for i in 0..=270 {
        let g = 10f64.powf(i as f64 / 30.0);
        let (_, rss) = best_scale(g);
        if rss < rss_best {
            rss_best = rss;
            g_best = g;
        }
    }
    let (s0, _) = best_scale(g_best);
    let amp_scale = amplitudes
        .iter()
        .fold(0.0f64, |m, a| m.max(a.abs()))
        .max(1e-300);
    let residuals = |p: &[f64]| {
        let gamma2 = g_best * p[0].exp();
        reference_b
            .iter()
            .zip(amplitudes)
            .map(|(b, a)| (responsivity_model(model, gamma2, s0 * p[1], *b) - a) / amp_scale)
            .collect::<Vec<_>>()
    };
    let out = levenberg_marquardt(residuals, &[0.0, 1.0], &[1.0, 1.0], &LmOptions::default());
    if !out.converged {
        warnings.push(out.diagnostic.clone().unwrap_or_default());
    }
    let gamma2 = g_best * out.params[0].exp();
    let scale = s0 * out.params[1];
    // chain rule from (ln Γ2 offset, relative scale) to (Γ2, scale)
    let covariance = out.covariance.map(|c| {
        let (j0, j1) = (gamma2, s0);
        let f = amp_scale * amp_scale;
        [
            c[0] * j0 * j0 * f,
            c[1] * j0 * j1 * f,
            c[2] * j0 * j1 * f,
            c[3] * j1 * j1 * f,
        ]
    });
    Ok(ResponsivityFit {
        gamma2,
        scale,
        covariance,
        rss: out.rss * amp_scale * amp_scale,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{
        heterodyne_response, induced_relaxation, rabi_frequency, PhysicalConstants,
    };

    #[test]
    fn exact_single_lorentzian() {
        let x: Vec<f64> = (0..201).map(|i| -5.0 + i as f64 * 0.05).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| 0.3 + lorentzian(v, 0.7, 1.3, -2.0))
            .collect();
        let fit = lorentzian_multifit(&x, &y, 1, None).unwrap();
        assert!(fit.converged);
        let p = fit.peaks[0];
        for (got, want) in [
            (p.center, 0.7),
            (p.fwhm, 1.3),
            (p.height, -2.0),
            (fit.baseline, 0.3),
        ] {
            assert!((got / want - 1.0).abs() < 1e-8, "{got} vs {want}");
        }
        assert!(fit.report().contains("peak0.center="));
    }

    #[test]
    fn multifit_equivariance() {
        let x: Vec<f64> = (0..300).map(|i| i as f64 * 0.1).collect();
        let f = |v: f64| {
            1.0 + lorentzian(v, 8.0, 2.0, 3.0)
                + lorentzian(v, 19.0, 3.0, 2.0)
                + 0.01 * (v * 7.3).sin()
        };
        let y: Vec<f64> = x.iter().map(|&v| f(v)).collect();
        let base = lorentzian_multifit(&x, &y, 2, None).unwrap();
        let (shift, scale) = (2.87e9, 1e5);
        let x2: Vec<f64> = x.iter().map(|v| shift + scale * v).collect();
        let moved = lorentzian_multifit(&x2, &y, 2, None).unwrap();
        for (a, b) in base.peaks.iter().zip(&moved.peaks) {
            assert!(((shift + scale * a.center) - b.center).abs() < 1e-6 * scale);
            assert!((scale * a.fwhm / b.fwhm - 1.0).abs() < 1e-6);
            assert!((a.height / b.height - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_baseline_fit_of_sinc_main_lobe() {
        // amplitude spectrum of a rectangular-window tone: FWHM of the
        // Lorentzian fitted over ±1 bin is 1.026 bins
        let x: Vec<f64> = (0..201).map(|i| -1.0 + i as f64 * 0.01).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v: &f64| {
                if v == 0.0 {
                    1.0
                } else {
                    ((std::f64::consts::PI * v).sin() / (std::f64::consts::PI * v)).abs()
                }
            })
            .collect();
        let fit = lorentzian_fit(&x, &y, 1, None, false).unwrap();
        assert_eq!(fit.baseline, 0.0);
        assert!(
            (fit.peaks[0].fwhm - 1.0256).abs() < 1e-3,
            "{}",
            fit.peaks[0].fwhm
        );
    }

    #[test]
    fn multifit_rejects_bad_input() {
        assert!(lorentzian_multifit(&[1.0, 2.0], &[1.0, 2.0], 0, None).is_err());
        assert!(lorentzian_multifit(&[1.0; 10], &[1.0; 9], 1, None).is_err());
        assert!(lorentzian_multifit(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 1, None).is_err());
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert!(lorentzian_multifit(&x, &[1.0; 20], 1, None).is_err());
    }

    #[test]
    fn exponential_exact() {
        let t: Vec<f64> = (0..2000).map(|i| i as f64 * 1e-5).collect();
        let v: Vec<f64> = t
            .iter()
            .map(|&s| 0.57 + 0.01 * (-TAU * 306.0 * s).exp())
            .collect();
        let fit = exponential_rate_fit(&t, &v).unwrap();
        assert!((fit.rate / 306.0 - 1.0).abs() < 1e-6, "{}", fit.rate);
        assert!((fit.offset - 0.57).abs() < 1e-9);
        assert!((fit.amplitude - 0.01).abs() < 1e-9);
        assert!(fit.report().starts_with("rate_hz="));
    }

    #[test]
    fn exponential_rejects_flat() {
        let t: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert!(matches!(
            exponential_rate_fit(&t, &[2.0; 100]),
            Err(Error::Degenerate(_))
        ));
        let wavy: Vec<f64> = t.iter().map(|v| (v * 0.5).sin()).collect();
        assert!(exponential_rate_fit(&t, &wavy).is_err());
    }

    #[test]
    fn power_law_examples() {
        let x: Vec<f64> = (1..20).map(|i| i as f64).collect();
        let fit = power_law_fit(&x, &x).unwrap();
        assert!((fit.exponent - 1.0).abs() < 1e-12 && (fit.prefactor - 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        let fit = power_law_fit(&x, &y).unwrap();
        assert!((fit.exponent - 2.0).abs() < 1e-12 && (fit.prefactor - 3.0).abs() < 1e-10);
        assert!(power_law_fit(&[1.0, -1.0], &[1.0, 1.0]).is_err());
    }

    fn synthetic_response(gamma2: f64) -> (Vec<f64>, Vec<f64>, ResponsivityModel) {
        let c = PhysicalConstants::default();
        let model = ResponsivityModel {
            gamma_p: 204.0,
            gamma1: 102.0,
            delta: 480.0,
            gamma_nv: c.gamma_nv,
        };
        let gamma_g = induced_relaxation(rabi_frequency(50e-12, &c).unwrap(), gamma2, 0.0).unwrap();
        let bs: Vec<f64> = (0..15).map(|i| 40e-9 * 1.25f64.powi(i)).collect();
        let amps = bs
            .iter()
            .map(|&b| {
                let big = induced_relaxation(rabi_frequency(b, &c).unwrap(), gamma2, 0.0).unwrap();
                heterodyne_response(204.0, 102.0, big, gamma_g, 480.0, 0.0)
                    .unwrap()
                    .amplitude
            })
            .collect();
        (bs, amps, model)
    }

    #[test]
    fn responsivity_recovers_gamma2() {
        for gamma2 in [152e3, 241e3] {
            let (bs, amps, model) = synthetic_response(gamma2);
            let fit = responsivity_fit(&bs, &amps, &model).unwrap();
            assert!((fit.gamma2 / gamma2 - 1.0).abs() < 0.02, "{}", fit.gamma2);
            assert!(fit.warnings.is_empty(), "{:?}", fit.warnings);
            assert!(fit.covariance.is_some());
        }
    }

    #[test]
    fn responsivity_underdetermined() {
        let (bs, amps, model) = synthetic_response(152e3);
        assert!(responsivity_fit(&bs[..1], &amps[..1], &model).is_err());
        let fit = responsivity_fit(&bs[..3], &amps[..3], &model).unwrap();
        assert!(fit.warnings.len() == 2, "{:?}", fit.warnings);
    }
}
