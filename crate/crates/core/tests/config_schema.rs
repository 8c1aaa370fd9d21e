//! The shipped JSON schema must describe exactly the configuration the loader
//! accepts, with the same defaults.

use std::path::PathBuf;

use serde_json::Value;
use sinegate_core::config::{parse_config, ConfigDocument};
use sinegate_core::qkd_budget;

fn schema() -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/config.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn compare(schema: &Value, defaults: &Value, at: &str) {
    let props = schema["properties"].as_object().unwrap_or_else(|| panic!("{at}: no properties"));
    let fields = defaults.as_object().unwrap();
    let mut a: Vec<&String> = props.keys().collect();
    let mut b: Vec<&String> = fields.keys().collect();
    a.sort();
    b.sort();
    assert_eq!(a, b, "{at}: schema and loader disagree on field names");
    for (name, value) in fields {
        let p = &props[name];
        assert!(p["description"].is_string(), "{at}.{name} undocumented");
        if value.is_object() {
            compare(p, value, &format!("{at}.{name}"));
        } else {
            assert_eq!(&p["default"], value, "{at}.{name} default");
        }
    }
}

#[test]
fn schema_matches_loader_defaults() {
    let defaults = serde_json::to_value(ConfigDocument::default()).unwrap();
    compare(&schema(), &defaults, "config");
}

#[test]
fn schema_defaults_load_back_to_the_default_config() {
    let s = schema();
    let doc: serde_json::Map<String, Value> = s["properties"]
        .as_object()
        .unwrap()
        .iter()
        .filter(|(_, p)| p.get("default").is_some())
        .map(|(k, p)| (k.clone(), p["default"].clone()))
        .collect();
    let cfg = parse_config(&Value::Object(doc).to_string()).unwrap();
    assert_eq!(cfg.detector, parse_config("{}").unwrap().detector);
}

#[test]
fn room_temperature_override_flows_into_link_budget() {
    let cold = parse_config("{}").unwrap();
    let warm = parse_config(r#"{"temperature_c": 20, "qkd": {"mu_source": 0.1}}"#).unwrap();
    assert_eq!(warm.detector.temperature, 20.0);
    let cold_q = qkd_budget::qber(&cold.qkd).unwrap();
    let warm_q = qkd_budget::qber(&warm.qkd).unwrap();
    assert!(warm_q.dark > cold_q.dark);
    assert!(warm_q.total < 0.03);
}
