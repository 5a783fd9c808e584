//! Flat `key = value` run configuration files.
//!
//! Every command records its resolved flags in `run_config.txt` next to its
//! outputs. Passing that file back with `--config` replays the run; flags
//! given on the command line after it take precedence.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const RUN_CONFIG_NAME: &str = "run_config.txt";

/// Parse `key = value` lines; blank lines and `#` comments are skipped.
pub fn read_config(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected key = value, got {line:?}", path.display(), n + 1);
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn write_run_config(dir: &Path, command: &str, entries: &[(&str, String)]) -> Result<()> {
    let mut text = format!("# sdesr {command}\n");
    for (k, v) in entries {
        text.push_str(&format!("{k} = {v}\n"));
    }
    let path = dir.join(RUN_CONFIG_NAME);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

/// Turn config entries into flags: `true` becomes a bare switch, `false` and
/// empty values are dropped.
pub fn entries_to_flags(entries: &[(String, String)]) -> Vec<OsString> {
    let mut out = Vec::new();
    for (k, v) in entries {
        let flag = format!("--{}", k.replace('_', "-"));
        match v.as_str() {
            "" | "false" => {}
            "true" => out.push(flag.into()),
            _ => {
                out.push(flag.into());
                out.push(v.into());
            }
        }
    }
    out
}

/// Replace `--config FILE` after the subcommand by the flags it contains,
/// placed before the remaining command-line flags.
pub fn expand_config_args(args: Vec<OsString>) -> Result<Vec<OsString>> {
    if args.len() < 3 {
        return Ok(args);
    }
    let mut rest: Vec<OsString> = Vec::new();
    let mut file: Option<OsString> = None;
    let mut it = args[2..].iter().cloned();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().into_owned();
        if s == "--config" {
            file = Some(it.next().context("--config needs a file")?);
        } else if let Some(f) = s.strip_prefix("--config=") {
            file = Some(f.into());
        } else {
            rest.push(a);
        }
    }
    let Some(file) = file else {
        return Ok(args);
    };
    let mut out = args[..2].to_vec();
    out.extend(entries_to_flags(&read_config(Path::new(&file))?));
    out.extend(rest);
    Ok(out)
}

pub fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

pub fn opt<T: ToString>(value: &Option<T>) -> String {
    value.as_ref().map(ToString::to_string).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_expansion() {
        let dir = tempfile::tempdir().unwrap();
        write_run_config(
            dir.path(),
            "sample",
            &[("n", "10".into()), ("no_denoise", "true".into()), ("limit", String::new())],
        )
        .unwrap();
        let path = dir.path().join(RUN_CONFIG_NAME);
        let entries = read_config(&path).unwrap();
        assert_eq!(entries.len(), 3);
        let args: Vec<OsString> = ["sdesr", "sample", "--config", path.to_str().unwrap(), "--n", "5"]
            .iter()
            .map(OsString::from)
            .collect();
        let out = expand_config_args(args).unwrap();
        let out: Vec<String> = out.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(out, vec!["sdesr", "sample", "--n", "10", "--no-denoise", "--n", "5"]);
    }

    #[test]
    fn malformed_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        fs::write(&p, "steps 10\n").unwrap();
        assert!(read_config(&p).is_err());
    }
}
