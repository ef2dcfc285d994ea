//! Seeded Gaussian noise sources.
//!
//! Every chunk of every noise stream draws from its own ChaCha stream keyed
//! by `(seed, chunk, kind)`, so chunks can be generated in any order or in
//! parallel with identical results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex64, FftPlanner};

/// Identifies an independent noise stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    Shot = 0,
    Electronic = 1,
    Laser = 2,
    Auxiliary = 3,
}

/// Generator for one (seed, chunk, kind) stream.
pub fn chunk_rng(seed: u64, chunk: u64, kind: NoiseKind) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk.wrapping_mul(4).wrapping_add(kind as u64));
    rng
}

/// `n` independent standard normal samples.
pub fn white_gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Flat below `corner`, falling as f^−α above it: 1/(1 + (f/corner)^α).
pub fn flicker_shape(f: f64, corner: f64, exponent: f64) -> f64 {
    if exponent == 0.0 || corner <= 0.0 {
        return 1.0;
    }
    1.0 / (1.0 + (f.abs() / corner).powf(exponent))
}

/// Colours unit-variance white noise so its one-sided PSD becomes `psd(f)`
/// (units²/Hz), by filtering in the frequency domain over the whole block.
pub fn shape_noise(white: &[f64], sample_rate: f64, psd: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = white.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = white.iter().map(|&w| Complex64::new(w, 0.0)).collect();
    forward.process(&mut buf);
    let df = sample_rate / n as f64;
    for (k, value) in buf.iter_mut().enumerate() {
        let bin = if k <= n / 2 { k } else { n - k };
        // unit white noise has one-sided PSD 2/fs
        let gain = (psd(bin as f64 * df) * sample_rate / 2.0).max(0.0).sqrt();
        *value *= gain;
    }
    inverse.process(&mut buf);
    let norm = 1.0 / n as f64;
    buf.iter().map(|c| c.re * norm).collect()
}
