//! `--config` files: flat `key = value` lines merged into argv.
//!
//! Keys are long flag names (`_` and `-` both accepted). `command = sim`
//! selects the subcommand when none is given on the command line. Boolean
//! flags take `true` or `false`. Anything passed on the command line wins.

use std::ffi::OsString;

use anyhow::{bail, Context, Result};

const SUBCOMMANDS: [&str; 8] = ["bootstrap", "qc", "lc", "sim", "gap", "blocks", "paths", "perc"];
const GLOBAL_VALUED: [&str; 4] = ["--seed", "--threads", "--out", "--config"];

#[derive(Debug, PartialEq)]
pub struct ConfigFile {
    pub command: Option<String>,
    pub entries: Vec<(String, String)>,
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let mut command = None;
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key = value", i + 1);
        };
        let key = k.trim().replace('_', "-");
        let value = v.trim().to_string();
        if key.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        if key == "config" {
            bail!("config line {}: nested config files are not supported", i + 1);
        }
        if key == "command" {
            command = Some(value);
        } else if entries.iter().any(|(e, _)| *e == key) {
            bail!("config line {}: duplicate key '{key}'", i + 1);
        } else {
            entries.push((key, value));
        }
    }
    Ok(ConfigFile { command, entries })
}

fn flag_name(tok: &str) -> Option<&str> {
    let rest = tok.strip_prefix("--")?;
    Some(rest.split_once('=').map_or(rest, |(k, _)| k))
}

/// Rewrites argv as `prog <command> <config flags> <user flags>`, dropping
/// config keys the user set explicitly.
pub fn expand_args(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let args: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut config_path = None;
    let mut command_at = None;
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(p.to_string());
        } else if a == "--config" {
            config_path = args.get(i + 1).cloned();
        }
        if command_at.is_none() && SUBCOMMANDS.contains(&a.as_str()) {
            command_at = Some(i);
        }
        if GLOBAL_VALUED.contains(&a.as_str()) {
            i += 1;
        }
        i += 1;
    }
    let Some(path) = config_path else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let cfg = parse_config(&text)?;

    let user_flags: Vec<&str> = args[1..].iter().filter_map(|a| flag_name(a)).collect();
    let command = match command_at {
        Some(at) => args[at].clone(),
        None => match cfg.command {
            Some(c) => c,
            None => bail!("no subcommand given on the command line or in {path}"),
        },
    };
    let mut out: Vec<OsString> = vec![argv[0].clone(), command.into()];
    for (k, v) in &cfg.entries {
        if user_flags.contains(&k.as_str()) {
            continue;
        }
        match v.as_str() {
            "true" => out.push(format!("--{k}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{k}").into());
                out.push(v.into());
            }
        }
    }
    for (j, a) in argv.iter().enumerate().skip(1) {
        if Some(j) != command_at {
            out.push(a.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_flat_files() {
        let c = parse_config("command = sim\n# comment\nq = 0.3\nt_max=10 # trailing\n\n").unwrap();
        assert_eq!(c.command.as_deref(), Some("sim"));
        assert_eq!(c.entries, vec![("q".into(), "0.3".into()), ("t-max".into(), "10".into())]);
        assert!(parse_config("q 0.3").is_err());
        assert!(parse_config("q=1\nq=2").is_err());
    }

    #[test]
    fn command_line_wins() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.conf");
        std::fs::write(&p, "command = perc\np = 0.5\nreplicas = 10\ndense = false\n").unwrap();
        let ps = p.to_str().unwrap();
        let out = expand_args(os(&["kcm", "--config", ps, "--p", "0.7"])).unwrap();
        let got: Vec<String> = out.iter().map(|s| s.to_string_lossy().into_owned()).collect();
        assert_eq!(got, ["kcm", "perc", "--replicas", "10", "--config", ps, "--p", "0.7"]);
        let out = expand_args(os(&["kcm", "--seed", "3", "perc", "--config", ps])).unwrap();
        let got: Vec<String> = out.iter().map(|s| s.to_string_lossy().into_owned()).collect();
        assert_eq!(got, ["kcm", "perc", "--p", "0.5", "--replicas", "10", "--seed", "3", "--config", ps]);
    }
}
