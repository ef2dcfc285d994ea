//! The published JSON schema and the config parser accept the same keys.

use std::collections::BTreeSet;
use std::path::Path;

use nvhet_cli::config::ScenarioConfig;
use serde_json::Value;

fn schema() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schema/scenario.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const FULL: &str = r#"
[ensemble]
preset = "effective"
gamma1_hz = 100.0
gamma2_hz = 2e5
contrast = 0.03
n_nv = 1e13
collection_k = 5.0
pump_coeff_hz_per_w = 200.0

[constants]
gamma_nv_hz_per_t = 2.8e10
d_zfs_hz = 2.87e9
a_hf_hz = 2.16e6

[laser]
power_w = 0.5

[[tones]]
b1_tesla = 1e-7
frequency_hz = 2.8700005e9
phase_rad = 0.5

[[tones]]
b1_tesla = 1e-9
frequency_hz = 2.87e9

[grid]
band_hz = 4000.0
max_beat_hz = 1000.0
center_hz = 2.87e9
b1_tesla = 5e-8
max_channels = 10

[detector]
volts_per_photon_rate_v_s = 1e-17
electronic_noise_v_per_rthz = 1e-9
laser_noise_fraction_per_rthz = 1e-7
laser_noise_exponent = 1.0
laser_noise_corner_hz = 50.0
shot_noise = true
target_sensitivity_t_per_rthz = 1e-11

[run]
duration_s = 1.0
sample_rate_hz = 10000.0
seed = 3
initial_p0 = 0.8
line_center_hz = 2.87e9
allow_off_resonant = false
envelope = "exact"

[[run.gates]]
on_s = 0.1
off_s = 0.5

[analysis]
window = "hann"
signal_hz = 500.0
signal_span_hz = 0.5
noise_span_hz = 5.0
settle_s = 0.01
fwhm = true
fwhm_points = 21
min_snr = 3.0
"#;

/// Every key path of a JSON value, arrays collapsed to `[]`.
fn paths(v: &Value, prefix: &str, out: &mut BTreeSet<String>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let p = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                out.insert(p.clone());
                paths(v, &p, out);
            }
        }
        Value::Array(a) => {
            for v in a {
                paths(v, &format!("{prefix}[]"), out);
            }
        }
        _ => {}
    }
}

fn schema_paths(s: &Value, prefix: &str, out: &mut BTreeSet<String>) {
    if let Some(props) = s.get("properties").and_then(Value::as_object) {
        assert_eq!(
            s.get("additionalProperties"),
            Some(&Value::Bool(false)),
            "{prefix} admits extra keys"
        );
        for (k, sub) in props {
            let p = if prefix.is_empty() {
                k.clone()
            } else {
                format!("{prefix}.{k}")
            };
            out.insert(p.clone());
            schema_paths(sub, &p, out);
        }
    }
    if let Some(items) = s.get("items") {
        schema_paths(items, &format!("{prefix}[]"), out);
    }
}

#[test]
fn schema_and_parser_agree_on_keys() {
    let cfg = ScenarioConfig::parse(FULL).unwrap();
    let mut from_config = BTreeSet::new();
    paths(&serde_json::to_value(&cfg).unwrap(), "", &mut from_config);
    let mut from_schema = BTreeSet::new();
    schema_paths(&schema(), "", &mut from_schema);
    assert_eq!(from_config, from_schema);
}

#[test]
fn required_sections_match() {
    let s = schema();
    let required: Vec<&str> = s["required"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(required, ["laser", "run"]);
    assert!(ScenarioConfig::parse("[laser]\npower_w = 1.0\n").is_err());
    assert!(ScenarioConfig::parse("[run]\nduration_s = 1.0\nsample_rate_hz = 10.0\n").is_err());
    assert!(ScenarioConfig::parse(
        "[laser]\npower_w = 1.0\n[run]\nduration_s = 1.0\nsample_rate_hz = 10.0\n"
    )
    .is_ok());
}

#[test]
fn presets_use_only_schema_keys() {
    let mut allowed = BTreeSet::new();
    schema_paths(&schema(), "", &mut allowed);
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let value: toml::Value = toml::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let mut keys = BTreeSet::new();
        paths(&serde_json::to_value(&value).unwrap(), "", &mut keys);
        for k in keys {
            assert!(
                allowed.contains(&k),
                "{}: `{k}` not in schema",
                path.display()
            );
        }
        ScenarioConfig::load(&path).unwrap();
    }
}
