//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use dimer_otoc::propagate::Backend;

use crate::error::CliError;

/// Key, default (empty means unset) and help text.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("theta", "1.35", "interaction angle Θ"),
    ("n_particles", "1000", "particle number(s), comma separated"),
    (
        "omega",
        "1",
        "squeezing parameter ω of the initial Gaussian",
    ),
    ("backend", "auto", "propagator: auto, eigen or chebyshev"),
    ("points", "400", "time points per series"),
    ("t_max", "", "last time point; overrides t_max_factor"),
    ("t_max_factor", "1.5", "last time point in units of τE"),
    ("t0", "0", "backward evolution time for squeezing (≤ 0)"),
    (
        "t0_tau_e",
        "0",
        "backward evolution time in units of τE (≤ 0)",
    ),
    (
        "twa_samples",
        "0",
        "TWA samples added to otoc output (0 = off)",
    ),
    ("seed", "0", "random seed"),
    ("nz", "201", "grid points along z"),
    ("nphi", "201", "grid points along φ"),
    ("frames", "9", "Husimi frames on [0, t_max]"),
    ("format", "csv", "Husimi frame format: csv, bin or both"),
    (
        "theta_min",
        "-1.5707963267948966",
        "stability scan lower end",
    ),
    (
        "theta_max",
        "1.5707963267948966",
        "stability scan upper end",
    ),
    ("theta_points", "721", "stability scan points"),
    ("separatrix_points", "200", "points per separatrix branch"),
    ("scan_thetas", "", "Θ values for scan, comma separated"),
    (
        "scan_points",
        "10",
        "evenly spaced interior Θ values when scan_thetas is unset",
    ),
    ("shrink", "0.5", "fit window shrink in units of 1/λs"),
    ("max_tau_e", "60", "scan cells with larger τE are skipped"),
    ("out_dir", "out", "output directory"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

fn lookup(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|k| k.0 == key).map(|k| k.0)
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|&(k, v, _)| (k, v.to_string())).collect(),
        }
    }
}

/// Parsed file: optional `command` line and the key assignments in order.
pub type FileEntries = (Option<String>, Vec<(&'static str, String)>);

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, origin: &str) -> Result<FileEntries, CliError> {
        let mut command = None;
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| CliError::Config(format!("{origin}:{}: {msg}", i + 1));
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got `{line}`")))?;
            if k.trim() == "command" {
                command = Some(v.trim().to_string());
                continue;
            }
            let key = lookup(k.trim()).ok_or_else(|| err(format!("unknown key `{}`", k.trim())))?;
            if seen.iter().any(|(s, _)| *s == key) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            seen.push((key, v.trim().to_string()));
        }
        Ok((command, seen))
    }

    pub fn load(path: &Path) -> Result<FileEntries, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), CliError> {
        let key = lookup(key).ok_or_else(|| CliError::Config(format!("unknown key `{key}`")))?;
        self.values.insert(key, value.into());
        Ok(())
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<T, CliError> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| CliError::Config(format!("{key} = `{raw}` is not {what}")))
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        let v: f64 = self.parsed(key, "a number")?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(CliError::Config(format!("{key} must be finite")))
        }
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.f64(key).map(Some)
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        self.parsed(key, "a non-negative integer")
    }

    fn list<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Vec<T>, CliError> {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| CliError::Config(format!("{key}: `{s}` is not {what}")))
            })
            .collect()
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>, CliError> {
        let v = self.list(key, "a non-negative integer")?;
        if v.is_empty() {
            return Err(CliError::Config(format!("{key} is empty")));
        }
        Ok(v)
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.list(key, "a number")
    }

    pub fn string(&self, key: &str) -> &str {
        self.raw(key)
    }

    /// `None` selects the backend by particle number.
    pub fn backend(&self) -> Result<Option<Backend>, CliError> {
        match self.raw("backend") {
            "auto" => Ok(None),
            other => other
                .parse()
                .map(Some)
                .map_err(|e: dimer_otoc::Error| CliError::Config(e.to_string())),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("out_dir"))
    }

    /// Every key in table order, prefixed by the command name.
    pub fn render(&self, command: &str) -> String {
        let mut s = format!("# resolved configuration\ncommand = {command}\n");
        for &(k, _, _) in KEYS {
            s.push_str(&format!("{k} = {}\n", self.raw(k)));
        }
        s
    }

    /// Interior scan grid: explicit `scan_thetas`, else `scan_points` evenly
    /// spaced values strictly inside the unstable range.
    pub fn scan_thetas(&self, lo: f64) -> Result<Vec<f64>, CliError> {
        let explicit = self.f64_list("scan_thetas")?;
        if !explicit.is_empty() {
            return Ok(explicit);
        }
        let m = self.usize("scan_points")?;
        Ok((1..=m)
            .map(|i| lo + (FRAC_PI_2 - lo) * i as f64 / (m + 1) as f64)
            .collect())
    }
}
