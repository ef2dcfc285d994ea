//! Recovery of field amplitude and frequency from photovoltage traces.

mod disambiguate;
mod fits;
mod lm;
mod peaks;
mod spectrum;

pub use disambiguate::{
    consistent_intervals, disambiguate_frequency, fold, grid_measurement, GridMeasurement,
};
pub use fits::{
    exponential_rate_fit, lorentzian, lorentzian_fit, lorentzian_multifit, power_law_fit,
    responsivity_fit, responsivity_model, ExponentialFit, LorentzPeak, LorentzianFit, PowerLawFit,
    ResponsivityFit, ResponsivityModel,
};
pub use lm::{levenberg_marquardt, LmOptions, LmResult};
pub use peaks::{find_peaks, half_max_width, peak_snr, PeakEstimate};
pub use spectrum::{amplitude_spectrum, amplitude_spectrum_of, zoom_spectrum, Spectrum, Window};

/// `key=value` lines, one per entry.
pub fn key_value_report(entries: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    out
}

/// Shortest round-tripping text for `x`: plain between 1e-3 and 1e7,
/// scientific otherwise.
pub fn format_value(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-3..1e7).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

/// Parses `key=value` lines, ignoring blanks and `#` comments.
pub fn parse_key_value(text: &str) -> Vec<(String, String)> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_value_round_trips() {
        assert_eq!(format_value(220e-9), "2.2e-7");
        assert_eq!(format_value(666.5), "666.5");
        assert_eq!(format_value(0.0), "0");
        assert_eq!(format_value(2.8e13), "2.8e13");
        for x in [6.81e-12, 1.0 / 3.0, 123456789.123, -4.5e-5] {
            assert_eq!(format_value(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn key_value_roundtrip() {
        let text = key_value_report(&[("snr", "24.2".into()), ("frequency_hz", "480".into())]);
        assert_eq!(text, "snr=24.2\nfrequency_hz=480\n");
        let back = parse_key_value(&format!("# header\n\n{text}"));
        assert_eq!(
            back,
            vec![
                ("snr".into(), "24.2".into()),
                ("frequency_hz".into(), "480".into())
            ]
        );
    }
}
