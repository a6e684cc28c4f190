//! `--config` files: one `key = value` per line, `#` comments, keys named
//! like the long flags (`lr`, `batch-size` or `batch_size`). The pairs are
//! spliced in right after the subcommand, so flags typed later override them.

use std::path::{Path, PathBuf};

use clap::{ArgAction, Command};
use hcdh::Error;

fn config_path(args: &[String]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        }
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

fn parse(text: &str, path: &Path) -> Result<Vec<(String, String)>, Error> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Invalid(format!("{}:{}: expected key=value, got {line:?}", path.display(), n + 1))
        })?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(Error::Invalid(format!("{}:{}: invalid key {k:?}", path.display(), n + 1)));
        }
        pairs.push((key, v.trim().to_string()));
    }
    Ok(pairs)
}

/// Returns `args` with the config file's pairs inserted after the subcommand
/// name. Keys that belong to other subcommands are skipped; keys no
/// subcommand knows are rejected.
pub fn expand(args: Vec<String>, cli: &Command) -> Result<Vec<String>, Error> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|source| Error::Io { path: path.clone(), source })?;
    let pairs = parse(&text, &path)?;

    let Some(pos) = args
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| cli.find_subcommand(a.as_str()).is_some())
        .map(|(i, _)| i)
    else {
        return Ok(args);
    };
    let sub = cli.find_subcommand(args[pos].as_str()).expect("found above");

    let mut injected = Vec::new();
    for (key, value) in pairs {
        let arg = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str()));
        let Some(arg) = arg else {
            let known = cli.get_subcommands().any(|s| s.get_arguments().any(|a| a.get_long() == Some(key.as_str())));
            if known || cli.get_arguments().any(|a| a.get_long() == Some(key.as_str())) {
                if key == "threads" {
                    injected.push(format!("--{key}={value}"));
                }
                continue;
            }
            return Err(Error::Invalid(format!("{}: unknown key {key:?}", path.display())));
        };
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match value.as_str() {
                "true" | "1" | "yes" => injected.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                _ => return Err(Error::Invalid(format!("{}: {key} expects true or false, got {value:?}", path.display()))),
            }
        } else {
            injected.push(format!("--{key}={value}"));
        }
    }
    let mut out = args;
    out.splice(pos + 1..pos + 1, injected);
    Ok(out)
}
