//! `--config` files: a JSON object or `key=value` lines whose keys are flag
//! names. Entries are spliced in right after the subcommand so anything given
//! on the command line later overrides them.

use std::ffi::OsString;
use std::path::Path;

use clap::Command;

use crate::failure::Failure;

/// Flag/value pairs read from a config file, in file order.
pub fn read_config(path: &Path) -> Result<Vec<(String, String)>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))
}

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    if text.trim_start().starts_with('{') {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let obj = value.as_object().ok_or("top level must be an object")?;
        return obj
            .iter()
            .map(|(k, v)| Ok((normalize_key(k), json_scalar(v)?)))
            .collect();
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
        out.push((normalize_key(k), v.trim().to_string()));
    }
    Ok(out)
}

fn normalize_key(k: &str) -> String {
    k.trim().trim_start_matches("--").replace('_', "-")
}

fn json_scalar(v: &serde_json::Value) -> Result<String, String> {
    use serde_json::Value;
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Array(items) => Ok(items.iter().map(json_scalar).collect::<Result<Vec<_>, _>>()?.join(",")),
        Value::Null | Value::Object(_) => Err(format!("unsupported value {v}")),
    }
}

/// Index of the subcommand token, skipping global options.
fn subcommand_position(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            i += 2;
            continue;
        }
        if !a.starts_with('-') {
            return Some(i);
        }
        i += 1;
    }
    None
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Inserts config entries that the chosen subcommand accepts. Keys unknown to
/// every subcommand are a usage error; keys meant for other subcommands are
/// skipped so one file can drive a whole run.
pub fn expand(args: Vec<OsString>, cmd: &Command) -> Result<Vec<OsString>, Failure> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let Some(pos) = subcommand_position(&args) else {
        return Ok(args);
    };
    let entries = read_config(Path::new(&path))?;
    let name = args[pos].to_string_lossy().into_owned();
    let Some(sub) = cmd.find_subcommand(&name) else {
        return Ok(args);
    };
    let known = |c: &Command, key: &str| c.get_arguments().find(|a| a.get_long() == Some(key)).cloned();
    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            continue;
        }
        match known(sub, &key) {
            Some(arg) => {
                if arg.get_action().takes_values() {
                    injected.push(format!("--{key}").into());
                    injected.push(value.into());
                } else if value
                    .parse::<bool>()
                    .map_err(|_| Failure::usage(format!("config key `{key}` is a switch, expected true or false")))?
                {
                    injected.push(format!("--{key}").into());
                }
            }
            None => {
                if !cmd.get_subcommands().any(|c| known(c, &key).is_some()) {
                    return Err(Failure::usage(format!("unknown config key `{key}`")));
                }
            }
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}
