use nvhet_core::analysis::{
    consistent_intervals, disambiguate_frequency, fold, grid_measurement, GridMeasurement,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BAND: (f64, f64) = (0.0, 190e3);

fn noisy(f: f64, spacing: f64, offset: f64, unc: f64, rng: &mut ChaCha8Rng) -> GridMeasurement {
    let beat = (fold(f, spacing, offset) + rng.random_range(-unc..unc)).clamp(0.0, spacing / 2.0);
    GridMeasurement {
        spacing,
        offset,
        measured_beat: beat,
        uncertainty: unc,
    }
}

fn contains(intervals: &[(f64, f64)], f: f64) -> bool {
    intervals.iter().any(|(a, b)| *a <= f && f <= *b)
}

#[test]
fn true_frequency_is_never_excluded() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let f: f64 = rng.random_range(BAND.0..BAND.1);
        let ms = [
            noisy(f, 2000.0, 0.0, 0.5, &mut rng),
            noisy(f, 2003.0, 130.0, 0.5, &mut rng),
        ];
        let iv = consistent_intervals(&ms, BAND, 0.0).unwrap();
        assert!(contains(&iv, f), "{f} excluded");
    }
}

#[test]
fn adding_a_grid_only_shrinks_the_candidate_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let f: f64 = rng.random_range(BAND.0..BAND.1);
        let a = grid_measurement(f, 2000.0, 0.0, 2.0);
        let b = grid_measurement(f, 2300.0, 0.0, 2.0);
        let c = grid_measurement(f, 2003.0, 0.0, 2.0);
        let one = consistent_intervals(&[a], BAND, 0.0).unwrap();
        let two = consistent_intervals(&[a, b], BAND, 0.0).unwrap();
        let three = consistent_intervals(&[a, b, c], BAND, 0.0).unwrap();
        for (lo, hi) in &two {
            assert!(one.iter().any(|(a, b)| a <= lo && hi <= b));
        }
        for (lo, hi) in &three {
            assert!(two.iter().any(|(a, b)| a <= lo && hi <= b));
        }
        let width = |v: &[(f64, f64)]| v.iter().map(|(a, b)| b - a).sum::<f64>();
        assert!(width(&three) <= width(&two) && width(&two) <= width(&one));
    }
}

#[test]
fn two_and_two_point_three_khz_grids_are_ambiguous() {
    let ms = [
        grid_measurement(37_300.0, 2000.0, 0.0, 0.0),
        grid_measurement(37_300.0, 2300.0, 0.0, 0.0),
    ];
    let c = disambiguate_frequency(&ms, BAND, 1e-6).unwrap();
    assert!(c.len() > 1);
    assert!(c.iter().any(|f| (f - 37_300.0).abs() < 1e-6));
    assert!(c.iter().any(|f| (f - 8_700.0).abs() < 1e-6));
    // lcm(2000, 2300) = 46 kHz
    assert!(c.iter().any(|f| (f - 83_300.0).abs() < 1e-6));
}

#[test]
fn near_coprime_grids_recover_a_unique_frequency() {
    let ms = [
        grid_measurement(37_300.0, 2000.0, 0.0, 0.0),
        grid_measurement(37_300.0, 2003.0, 0.0, 0.0),
    ];
    let c = disambiguate_frequency(&ms, BAND, 1e-6).unwrap();
    assert_eq!(c.len(), 1);
    assert!((c[0] - 37_300.0).abs() < 1e-6);
}
