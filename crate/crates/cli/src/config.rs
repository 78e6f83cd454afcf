//! Flat `key = value` config files. Keys are long flag names (underscores
//! allowed); `command` gives the subcommand path, e.g. `sieve driver`.
//! Flags on the command line win over the file.

use std::collections::BTreeMap;
use std::path::Path;

const SUBCOMMANDS: [&str; 11] = [
    "poly",
    "repr",
    "density",
    "eisenstein",
    "betas",
    "sieve",
    "witness",
    "residuals",
    "threshold",
    "suite",
    "replay",
];

pub fn parse(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key `{key}`", i + 1));
        }
    }
    Ok(map)
}

/// Pulls `--config <path>` out of `args` and merges the file into them.
pub fn expand(mut args: Vec<String>) -> Result<Vec<String>, String> {
    let mut path = None;
    let mut i = 1;
    while i < args.len() {
        if args[i] == "--config" {
            if i + 1 >= args.len() {
                return Err("--config needs a path".into());
            }
            path = Some(args.remove(i + 1));
            args.remove(i);
        } else if let Some(p) = args[i].strip_prefix("--config=") {
            path = Some(p.to_string());
            args.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| format!("cannot read config `{path}`: {e}"))?;
    merge(args, parse(&text)?)
}

fn merge(mut args: Vec<String>, mut map: BTreeMap<String, String>) -> Result<Vec<String>, String> {
    let command = map.remove("command");
    let has_command = args
        .iter()
        .skip(1)
        .any(|a| SUBCOMMANDS.contains(&a.as_str()));
    if !has_command {
        let command = command.ok_or("no subcommand given on the command line or in the config")?;
        let words: Vec<String> = command.split_whitespace().map(String::from).collect();
        args.splice(1..1, words);
    }
    let positional = map.remove("name");
    for (k, v) in map {
        let flag = format!("--{k}");
        let given = args
            .iter()
            .any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if given {
            continue;
        }
        match v.as_str() {
            "true" => args.push(flag),
            "false" => {}
            _ => args.push(format!("{flag}={v}")),
        }
    }
    if let Some(name) = positional {
        args.push(name);
    }
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn file_supplies_command_and_missing_flags() {
        let map =
            parse("command = density\n# note\np = 5\nm = 7\nalpha = 1,1,1,1\nn = 1\n").unwrap();
        let out = merge(strs(&["polysum", "--m", "5"]), map).unwrap();
        assert_eq!(
            out,
            strs(&[
                "polysum",
                "density",
                "--m",
                "5",
                "--alpha=1,1,1,1",
                "--n=1",
                "--p=5"
            ])
        );
    }

    #[test]
    fn booleans_and_underscores() {
        let map = parse("command = repr count\nlist = true\nn_range = 1:3\n").unwrap();
        let out = merge(strs(&["polysum"]), map).unwrap();
        assert_eq!(
            out,
            strs(&["polysum", "repr", "count", "--list", "--n-range=1:3"])
        );
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(parse("just words").is_err());
        assert!(parse("a = 1\na = 2").is_err());
    }
}
