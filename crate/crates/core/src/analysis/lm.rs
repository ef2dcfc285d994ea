//! Damped Gauss–Newton (Levenberg–Marquardt) least squares with a
//! central-difference Jacobian.

use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step changes the residual sum of squares by
    /// less than this fraction.
    pub rss_tolerance: f64,
    /// Jacobian step relative to each parameter scale.
    pub jacobian_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            rss_tolerance: 1e-10,
            jacobian_step: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmResult {
    pub params: Vec<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// (JᵀJ)⁻¹·RSS/(m − n), row-major; `None` when singular or m ≤ n.
    pub covariance: Option<Vec<f64>>,
    pub diagnostic: Option<String>,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimizes Σ residuals(p)² from `initial`. `scales` sets the typical
/// magnitude of each parameter for the finite-difference step.
pub fn levenberg_marquardt<F>(
    residuals: F,
    initial: &[f64],
    scales: &[f64],
    options: &LmOptions,
) -> LmResult
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = initial.len();
    assert_eq!(scales.len(), n, "one scale per parameter");
    let mut p = initial.to_vec();
    let mut r = residuals(&p);
    let m = r.len();
    let mut rss = sum_sq(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut diagnostic = None;
    let mut iterations = 0;
    let mut jac = jacobian(&residuals, &p, scales, options.jacobian_step, m);

    if !rss.is_finite() {
        return LmResult {
            params: p,
            rss,
            iterations: 0,
            converged: false,
            covariance: None,
            diagnostic: Some("residuals are not finite at the initial guess".into()),
        };
    }

    while iterations < options.max_iterations {
        iterations += 1;
        if rss == 0.0 {
            converged = true;
            break;
        }
        let (jtj, jtr) = normal_equations(&jac, &r, n, m);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[i * n + i] += lambda * jtj[i * n + i].max(1e-300);
            }
            let neg: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(step) = linalg::solve(&a, &neg) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
            let r_trial = residuals(&trial);
            let rss_trial = sum_sq(&r_trial);
            if rss_trial.is_finite() && rss_trial < rss {
                let change = (rss - rss_trial) / rss;
                p = trial;
                r = r_trial;
                rss = rss_trial;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if change < options.rss_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step exists at machine precision
            converged = true;
            diagnostic = Some("stopped at the damping limit".into());
            break;
        }
        if converged {
            break;
        }
        jac = jacobian(&residuals, &p, scales, options.jacobian_step, m);
    }
    if !converged {
        diagnostic = Some(format!("no convergence after {iterations} iterations"));
    }
    let jac = jacobian(&residuals, &p, scales, options.jacobian_step, m);
    let (jtj, _) = normal_equations(&jac, &r, n, m);
    let covariance = (m > n)
        .then(|| linalg::invert(&jtj, n))
        .flatten()
        .map(|inv| inv.iter().map(|v| v * rss / (m - n) as f64).collect());
    LmResult {
        params: p,
        rss,
        iterations,
        converged,
        covariance,
        diagnostic,
    }
}

/// Column-major m×n Jacobian.
fn jacobian<F>(residuals: &F, p: &[f64], scales: &[f64], rel_step: f64, m: usize) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = p.len();
    let mut jac = vec![0.0; m * n];
    let mut probe = p.to_vec();
    for j in 0..n {
        let h = rel_step * scales[j].abs().max(p[j].abs()).max(1e-300);
        probe[j] = p[j] + h;
        let up = residuals(&probe);
        probe[j] = p[j] - h;
        let down = residuals(&probe);
        probe[j] = p[j];
        for i in 0..m {
            jac[j * m + i] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

fn normal_equations(jac: &[f64], r: &[f64], n: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jtj = vec![0.0; n * n];
    let mut jtr = vec![0.0; n];
    for a in 0..n {
        let ca = &jac[a * m..(a + 1) * m];
        jtr[a] = ca.iter().zip(r).map(|(x, y)| x * y).sum();
        for b in a..n {
            let cb = &jac[b * m..(b + 1) * m];
            let v: f64 = ca.iter().zip(cb).map(|(x, y)| x * y).sum();
            jtj[a * n + b] = v;
            jtj[b * n + a] = v;
        }
    }
    (jtj, jtr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_rosenbrock_style_problem() {
        let res = |p: &[f64]| vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]];
        let out = levenberg_marquardt(res, &[-1.2, 1.0], &[1.0, 1.0], &LmOptions::default());
        assert!(out.converged);
        assert!(
            (out.params[0] - 1.0).abs() < 1e-6 && (out.params[1] - 1.0).abs() < 1e-6,
            "{out:?}"
        );
    }

    #[test]
    fn linear_fit_covariance() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 2.0 * x + 1.0 + if (*x as i32) % 2 == 0 { 0.1 } else { -0.1 })
            .collect();
        let res = |p: &[f64]| {
            xs.iter()
                .zip(&ys)
                .map(|(x, y)| p[0] * x + p[1] - y)
                .collect()
        };
        let out = levenberg_marquardt(res, &[0.0, 0.0], &[1.0, 1.0], &LmOptions::default());
        let ols = linalg::least_squares(&xs.iter().map(|x| vec![*x, 1.0]).collect::<Vec<_>>(), &ys)
            .unwrap();
        assert!((out.params[0] - ols[0]).abs() < 1e-8 && (out.params[1] - ols[1]).abs() < 1e-8);
        let cov = out.covariance.unwrap();
        assert!(cov[0] > 0.0 && cov[3] > 0.0);
    }

    #[test]
    fn flags_iteration_limit() {
        let res = |p: &[f64]| vec![p[0].exp() - 1e6];
        let opts = LmOptions {
            max_iterations: 2,
            ..LmOptions::default()
        };
        let out = levenberg_marquardt(res, &[0.0], &[1.0], &opts);
        assert!(!out.converged);
        assert!(out.diagnostic.unwrap().contains("no convergence"));
    }
}
