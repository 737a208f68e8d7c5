//! `--config` files: `key = value` lines naming long flags.
//!
//! The file's flags are spliced in right after the subcommand name, ahead
//! of everything the user typed, so command-line flags override them.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use crate::error::CliError;

const SUBCOMMANDS: &[&str] = &["model", "simulate", "fit", "calibrate-crosstalk", "qscan", "invert"];

pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let Some(pos) = args.iter().position(|a| SUBCOMMANDS.iter().any(|s| a == *s)) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let flags = parse(&text, &path)?;
    let mut out = args[..=pos].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let arg = arg.to_string_lossy();
        if arg == "--config" {
            return iter.next().map(PathBuf::from);
        }
        if let Some(path) = arg.strip_prefix("--config=") {
            return Some(PathBuf::from(path));
        }
    }
    None
}

fn parse(text: &str, path: &Path) -> Result<Vec<OsString>, CliError> {
    let mut flags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Validation(format!(
                "{}:{}: expected `key = value`, got `{line}`",
                path.display(),
                i + 1
            )));
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim().trim_matches('"');
        if key == "config" {
            return Err(CliError::Validation(format!(
                "{}:{}: config files cannot include other config files",
                path.display(),
                i + 1
            )));
        }
        match value {
            "true" => flags.push(format!("--{key}").into()),
            "false" => {}
            _ => flags.push(format!("--{key}={value}").into()),
        }
    }
    Ok(flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_pairs_comments_and_flags() {
        let flags = parse(
            "# detector\npixels = 100\nmean_photons=1.5 # per pulse\nareas = true\nlinear = false\n",
            Path::new("c"),
        )
        .unwrap();
        assert_eq!(flags, os(&["--pixels=100", "--mean-photons=1.5", "--areas"]));
    }

    #[test]
    fn rejects_lines_without_equals() {
        let err = parse("pixels 100", Path::new("run.cfg")).unwrap_err();
        assert!(err.to_string().contains("run.cfg:1"));
    }

    #[test]
    fn splices_after_the_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "pixels = 10\n").unwrap();
        let args = os(&[
            "clickstat",
            "--config",
            path.to_str().unwrap(),
            "model",
            "--pixels",
            "20",
        ]);
        let out = expand(args).unwrap();
        assert_eq!(&out[3..], &os(&["model", "--pixels=10", "--pixels", "20"])[..]);
    }
}
