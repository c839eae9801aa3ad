//! `--config FILE` handling: a flat `key = value` file whose keys are long
//! flag names. Values from the file override command-line flags (and flags
//! override defaults), implemented by appending the file's pairs after the
//! user's arguments — the parser takes the last occurrence.

use std::ffi::OsString;

pub fn expand_config_args(
    argv: impl Iterator<Item = OsString>,
) -> Result<Vec<OsString>, String> {
    let mut args: Vec<OsString> = argv.collect();
    let mut config_path: Option<String> = None;
    let mut i = 0;
    while i < args.len() {
        if args[i] == "--config" {
            if i + 1 >= args.len() {
                return Err("--config needs a file path".into());
            }
            config_path = Some(args[i + 1].to_string_lossy().into_owned());
            args.drain(i..=i + 1);
        } else {
            i += 1;
        }
    }
    let Some(path) = config_path else {
        return Ok(args);
    };
    let text =
        std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("{path}:{}: expected `key = value`", lineno + 1));
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(format!("{path}:{}: empty key or value", lineno + 1));
        }
        args.push(format!("--{key}").into());
        args.push(value.into());
    }
    Ok(args)
}
