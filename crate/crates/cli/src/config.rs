//! Key=value config files and flag/file/default precedence.
//!
//! Files are plain text: one `key = value` pair per line, `#` comments.
//! Keys use the long flag spelling (e.g. `eta`, `inverter-epochs`,
//! `weight-decay`). Flags always win over file entries, which win over
//! built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut entries = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "{}:{}: expected key=value",
                    path.display(),
                    idx + 1
                )));
            };
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::Usage(format!("config key '{key}' has invalid value '{raw}'"))
            }),
        }
    }

    /// flag > file > default.
    pub fn resolve<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, CliError> {
        if let Some(value) = flag {
            return Ok(value);
        }
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    /// Boolean switches: a set flag wins, otherwise the file, otherwise off.
    pub fn resolve_switch(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        if flag {
            return Ok(true);
        }
        Ok(self.parsed::<bool>(key)?.unwrap_or(false))
    }
}

/// Prefix relative paths with `HGINJECT_OUT_DIR` when it is set.
pub fn out_path(path: std::path::PathBuf) -> std::path::PathBuf {
    if path.is_absolute() {
        return path;
    }
    match std::env::var_os("HGINJECT_OUT_DIR") {
        Some(dir) if !dir.is_empty() => Path::new(&dir).join(path),
        _ => path,
    }
}
