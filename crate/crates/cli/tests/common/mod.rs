//! Helpers shared by the CLI integration tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub const CUMENE: &str = "dose,n,y\n0,50,4\n125,50,31\n250,50,42\n500,50,46\n";
pub const FLAT: &str = "dose,n,y\n0,50,10\n100,50,8\n200,50,5\n";

pub fn bbmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bbmd"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Writes `name.csv` and `name.toml` into `dir`; the config body follows the
/// dataset line.
pub fn setup(dir: &Path, name: &str, data: &str, body: &str) -> PathBuf {
    std::fs::write(dir.join(format!("{name}.csv")), data).unwrap();
    let config = dir.join(format!("{name}.toml"));
    std::fs::write(&config, format!("dataset = \"{name}.csv\"\n{body}")).unwrap();
    config
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Minimal JSON-schema check covering the keywords the report schema uses:
/// `type`, `enum`, `required`, `properties`, `items`, `oneOf` and local `$ref`.
pub fn validate(schema: &Value, root: &Value, value: &Value, path: &str) -> Result<(), String> {
    if let Some(r) = schema.get("$ref").and_then(Value::as_str) {
        let name = r.strip_prefix("#/$defs/").expect("local ref");
        return validate(&root["$defs"][name], root, value, path);
    }
    if let Some(options) = schema.get("oneOf").and_then(Value::as_array) {
        let hits = options
            .iter()
            .filter(|s| validate(s, root, value, path).is_ok())
            .count();
        if hits != 1 {
            return Err(format!("{path}: matches {hits} oneOf branches"));
        }
    }
    if let Some(t) = schema.get("type") {
        let types: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => panic!("bad type keyword"),
        };
        if !types.iter().any(|t| has_type(value, t)) {
            return Err(format!("{path}: expected {types:?}, found {value}"));
        }
    }
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(value) {
            return Err(format!("{path}: {value} not in {options:?}"));
        }
    }
    if let Value::Object(map) = value {
        if let Some(req) = schema.get("required").and_then(Value::as_array) {
            for key in req.iter().filter_map(Value::as_str) {
                if !map.contains_key(key) {
                    return Err(format!("{path}: missing {key}"));
                }
            }
        }
        if let Some(props) = schema.get("properties").and_then(Value::as_object) {
            for (key, sub) in props {
                if let Some(v) = map.get(key) {
                    validate(sub, root, v, &format!("{path}.{key}"))?;
                }
            }
        }
    }
    if let (Value::Array(items), Some(sub)) = (value, schema.get("items")) {
        for (i, v) in items.iter().enumerate() {
            validate(sub, root, v, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

fn has_type(v: &Value, t: &str) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "number" => v.is_number(),
        "integer" => v.is_u64() || v.is_i64(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        _ => panic!("unknown type {t}"),
    }
}

pub fn check_report(report: &Value) {
    let schema: Value = serde_json::from_str(bbmd_cli::report::REPORT_SCHEMA).unwrap();
    if let Err(e) = validate(&schema, &schema, report, "$") {
        panic!("report violates schema: {e}");
    }
}
