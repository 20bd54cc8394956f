//! `key = value` run files. Entries become flags placed before the ones typed
//! on the command line, so typed flags win.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use clap::CommandFactory;
use serde::Serialize;

use crate::Cli;

/// Parse a run file into ordered `(key, value)` pairs.
pub fn parse(text: &str, origin: &str) -> Result<Vec<(String, String)>, String> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("{origin}:{}: expected key = value", n + 1));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(format!("{origin}:{}: empty key", n + 1));
        }
        pairs.push((key.to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return iter.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
    }
    None
}

/// Expand `--config FILE` into explicit flags for the chosen subcommand.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    if argv.len() < 2 {
        return Ok(argv);
    }
    let sub = argv[1].to_string_lossy().into_owned();
    let Some(path) = config_path(&argv[2..]) else {
        return Ok(argv);
    };
    let cli = Cli::command();
    let Some(command) = cli.find_subcommand(&sub) else {
        return Ok(argv);
    };
    let origin = Path::new(&path).display().to_string();
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {origin}: {e}"))?;
    let mut injected = Vec::new();
    for (key, value) in parse(&text, &origin)? {
        let known = command
            .get_arguments()
            .any(|a| a.get_long() == Some(key.as_str()) && key != "config");
        if !known {
            return Err(format!("{origin}: `{key}` is not an option of `foilcap {sub}`"));
        }
        injected.push(OsString::from(format!("--{key}={value}")));
    }
    let mut out = Vec::with_capacity(argv.len() + injected.len());
    out.extend(argv[..2].iter().cloned());
    out.extend(injected);
    out.extend(argv[2..].iter().cloned());
    Ok(out)
}

/// Render fully resolved options as a run file.
pub fn render<T: Serialize>(command: &str, args: &T) -> String {
    let value = serde_json::to_value(args).expect("options serialize");
    let mut out = format!("# foilcap {command}\n");
    for (key, v) in value.as_object().expect("options are a struct") {
        let text = match v {
            serde_json::Value::Null => continue,
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        if key == "config" {
            continue;
        }
        let _ = writeln!(out, "{key} = {text}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_spacing() {
        let pairs = parse("# run\nseed = 7\n\nout=dir # not a comment\n", "f").unwrap();
        assert_eq!(
            pairs,
            vec![("seed".into(), "7".into()), ("out".into(), "dir # not a comment".into())]
        );
        assert!(parse("seed 7", "f").unwrap_err().contains("f:1"));
        assert!(parse(" = 7", "f").is_err());
    }

    #[test]
    fn flags_follow_config_entries() {
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "seed = 3\nn-images = 10\n").unwrap();
        let argv: Vec<OsString> = ["foilcap", "synth", "--config", path.to_str().unwrap(), "--seed", "9"]
            .iter()
            .map(OsString::from)
            .collect();
        let expanded = expand(argv).unwrap();
        let shown: Vec<String> = expanded.iter().map(|s| s.to_string_lossy().into_owned()).collect();
        assert_eq!(&shown[..4], ["foilcap", "synth", "--seed=3", "--n-images=10"]);
        assert_eq!(&shown[shown.len() - 2..], ["--seed", "9"]);

        fs::write(&path, "bogus = 1\n").unwrap();
        let argv: Vec<OsString> = ["foilcap", "synth", "--config", path.to_str().unwrap()]
            .iter()
            .map(OsString::from)
            .collect();
        assert!(expand(argv).unwrap_err().contains("bogus"));
    }
}
