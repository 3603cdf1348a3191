//! `--config` support: TOML keys are turned into flags and placed before
//! the user's own flags, so anything given on the command line wins.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::CommandFactory;

use crate::args::{Cli, ENDPOINT_ENV};

fn config_path(raw: &[OsString]) -> Option<PathBuf> {
    let mut it = raw.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn flag_values(key: &str, value: &toml::Value) -> anyhow::Result<Vec<String>> {
    let flag = format!("--{}", key.replace('_', "-"));
    Ok(match value {
        toml::Value::Boolean(true) => vec![flag],
        toml::Value::Boolean(false) => vec![],
        toml::Value::String(s) => vec![flag, s.clone()],
        toml::Value::Integer(i) => vec![flag, i.to_string()],
        toml::Value::Float(f) => vec![flag, f.to_string()],
        toml::Value::Array(items) => {
            let mut out = Vec::new();
            for item in items {
                out.extend(flag_values(key, item)?);
            }
            out
        }
        other => bail!("unsupported value for `{key}`: {other}"),
    })
}

/// Returns `raw` with config-derived flags inserted after the subcommand.
pub fn inject(raw: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let Some(path) = config_path(&raw) else { return Ok(raw) };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;

    let cmd = Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    let Some(pos) = raw.iter().position(|a| names.iter().any(|n| a == n.as_str())) else { return Ok(raw) };
    let sub_name = raw[pos].to_string_lossy().into_owned();
    let sub = cmd.find_subcommand(&sub_name).expect("listed subcommand");
    let accepted: BTreeSet<String> = sub.get_arguments().filter_map(|a| a.get_long()).map(str::to_string).collect();
    let known_anywhere: BTreeSet<String> = cmd
        .get_subcommands()
        .flat_map(|s| s.get_arguments().filter_map(|a| a.get_long()).map(str::to_string))
        .collect();
    let env_endpoint = std::env::var_os(ENDPOINT_ENV).is_some();

    let mut injected = Vec::new();
    let mut push = |key: &str, value: &toml::Value| -> anyhow::Result<()> {
        let long = key.replace('_', "-");
        if long == "config" {
            bail!("`config` cannot be set from a config file");
        }
        // the environment overrides the file for the endpoint
        if long == "endpoint" && env_endpoint {
            return Ok(());
        }
        if accepted.contains(&long) {
            injected.extend(flag_values(key, value)?);
        }
        Ok(())
    };
    for (key, value) in &table {
        if let toml::Value::Table(_) = value {
            if !names.contains(key) {
                bail!("unknown section [{key}]");
            }
            continue;
        }
        if !known_anywhere.contains(&key.replace('_', "-")) {
            bail!("unknown key `{key}`");
        }
        push(key, value)?;
    }
    if let Some(toml::Value::Table(section)) = table.get(&sub_name) {
        for (key, value) in section {
            if !accepted.contains(&key.replace('_', "-")) {
                bail!("`{key}` is not a flag of `{sub_name}`");
            }
            push(key, value)?;
        }
    }

    let mut out = raw[..=pos].to_vec();
    out.extend(injected.into_iter().map(OsString::from));
    out.extend(raw[pos + 1..].iter().cloned());
    Ok(out)
}
