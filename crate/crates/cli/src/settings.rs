//! Flag/config-file resolution and output plumbing shared by every subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Display};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use serde_json::{json, Value};

/// Bad invocation: exit code 1 and the subcommand's help.
#[derive(Debug)]
pub struct UsageError(pub String);

impl Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected key=value", i + 1)))?;
        out.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(out)
}

/// Effective settings for one run: flags override the config file, which
/// overrides built-in defaults. Every resolved value is recorded for the
/// output metadata.
pub struct Settings {
    pub command: String,
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    echo: BTreeMap<String, String>,
    json: bool,
    out: Option<PathBuf>,
}

impl Settings {
    pub fn new(command: &str, config: Option<&Path>, json: bool, out: Option<PathBuf>) -> Result<Self> {
        let file = match config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        Ok(Self {
            command: command.to_string(),
            file,
            used: BTreeSet::new(),
            echo: BTreeMap::new(),
            json,
            out,
        })
    }

    fn file_value<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        match self.file.get(key) {
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| usage(format!("config key {key}: {e}"))),
            None => Ok(None),
        }
    }

    pub fn opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file_value(key)?,
        };
        if let Some(v) = &v {
            self.echo.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        let v = self.opt(key, flag)?.unwrap_or(default);
        self.echo.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn required<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T::Err: Display,
    {
        self.opt(key, flag)?
            .ok_or_else(|| usage(format!("missing required option --{key}")))
    }

    pub fn flag(&mut self, key: &str, flag: bool) -> Result<bool> {
        let v = flag || self.file_value::<bool>(key)?.unwrap_or(false);
        self.echo.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Repeatable list option; the config file form is comma separated.
    pub fn list(&mut self, key: &str, flag: Vec<String>) -> Result<Vec<String>> {
        let v = if flag.is_empty() {
            self.file_value::<String>(key)?
                .map(|s| s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect())
                .unwrap_or_default()
        } else {
            flag
        };
        if !v.is_empty() {
            self.echo.insert(key.to_string(), v.join(","));
        }
        Ok(v)
    }

    pub fn record(&mut self, key: &str, value: impl Display) {
        self.echo.insert(key.to_string(), value.to_string());
    }

    pub fn warn_unused(&self) {
        for k in self.file.keys().filter(|k| !self.used.contains(*k)) {
            eprintln!("warning: config key {k:?} is not used by {}", self.command);
        }
    }

    pub fn metadata(&self) -> Value {
        json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.echo,
        })
    }

    /// Writes a result table (or its JSON mirror) to `--out` or stdout. A
    /// file output gets a `<out>.meta.json` sidecar with the effective config;
    /// on stdout the config goes to stderr.
    pub fn emit(
        &self,
        table: impl FnOnce(&mut dyn Write) -> io::Result<()>,
        json_result: impl FnOnce() -> Value,
    ) -> Result<()> {
        if self.json {
            let mut doc = self.metadata();
            doc["result"] = json_result();
            let text = serde_json::to_string_pretty(&doc)? + "\n";
            return self.write_primary(|w| w.write_all(text.as_bytes()), false);
        }
        self.write_primary(table, true)
    }

    /// Writes a non-tabular artifact (model, FASTA) to `--out`, which is required.
    pub fn emit_artifact(&self, what: &str, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
        if self.out.is_none() {
            return Err(usage(format!("{} writes a {what}; --out is required", self.command)));
        }
        self.write_primary(write, true)
    }

    fn write_primary(&self, write: impl FnOnce(&mut dyn Write) -> io::Result<()>, sidecar: bool) -> Result<()> {
        match &self.out {
            Some(path) => {
                let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
                let mut w = BufWriter::new(f);
                write(&mut w)?;
                w.flush()?;
                if sidecar {
                    self.write_sidecar(path)?;
                }
            }
            None => {
                if sidecar {
                    eprintln!("# config {}", serde_json::to_string(&self.metadata())?);
                }
                let stdout = io::stdout();
                let mut w = BufWriter::new(stdout.lock());
                write(&mut w)?;
                w.flush()?;
            }
        }
        Ok(())
    }

    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let mut side = path.as_os_str().to_owned();
        side.push(".meta.json");
        let text = serde_json::to_string_pretty(&self.metadata())? + "\n";
        fs::write(&side, text).with_context(|| format!("writing {}", Path::new(&side).display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let mut s = Settings::new("t", None, false, None).unwrap();
        s.file = parse_config("top_p = 0.9\n# comment\nseed=4\n").unwrap();
        assert_eq!(s.get("top-p", None, 1.0).unwrap(), 0.9);
        assert_eq!(s.get("top-p", Some(0.5), 1.0).unwrap(), 0.5);
        assert_eq!(s.get("seed", None, 0u64).unwrap(), 4);
        assert_eq!(s.get("temperature", None, 1.0).unwrap(), 1.0);
        assert_eq!(s.echo["top-p"], "0.5");
        assert!(parse_config("novalue").is_err());
    }
}
