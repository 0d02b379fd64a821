//! Flat `key = value` pipeline configuration.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub sessions: Option<PathBuf>,
    pub personnel: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub theta: u32,
    pub theta_sweep: Vec<u32>,
    pub window_years: u32,
    pub n_worlds: u32,
    pub seed: u64,
    pub cutoff_year: i32,
    pub cutoff_sweep: Vec<i32>,
    pub exclude_leaders: Option<PathBuf>,
    pub quantiles: usize,
    pub smoothing_window: usize,
    pub n_permutations: usize,
    pub permutation_subsample: usize,
    pub lowess_f: f64,
    pub kde_bandwidth: Option<f64>,
    pub top_k_instruments: usize,
    pub horizon_years: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sessions: None,
            personnel: None,
            records: None,
            theta: 2,
            theta_sweep: vec![2, 3, 5, 10],
            window_years: 1,
            n_worlds: 100,
            seed: 42,
            cutoff_year: 2000,
            cutoff_sweep: vec![2000, 1995, 1990],
            exclude_leaders: None,
            quantiles: 10_000,
            smoothing_window: 100,
            n_permutations: 10_000,
            permutation_subsample: 500_000,
            lowess_f: 0.5,
            kde_bandwidth: None,
            top_k_instruments: 200,
            horizon_years: 5,
        }
    }
}

impl PipelineConfig {
    /// Parse `key = value` lines; `#` starts a comment. Unknown keys are
    /// errors so typos cannot silently fall back to defaults.
    pub fn parse(text: &str) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        let mut seen: HashSet<&str> = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key) {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            let bad =
                |what: &str| Error::Config(format!("line {}: bad {what} '{value}'", lineno + 1));
            match key {
                "sessions" => cfg.sessions = Some(PathBuf::from(value)),
                "personnel" => cfg.personnel = Some(PathBuf::from(value)),
                "records" => cfg.records = Some(PathBuf::from(value)),
                "theta" => cfg.theta = value.parse().map_err(|_| bad("integer"))?,
                "theta_sweep" => cfg.theta_sweep = parse_list(value).ok_or_else(|| bad("list"))?,
                "window_years" => cfg.window_years = value.parse().map_err(|_| bad("integer"))?,
                "n_worlds" => cfg.n_worlds = value.parse().map_err(|_| bad("integer"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("integer"))?,
                "cutoff_year" => cfg.cutoff_year = value.parse().map_err(|_| bad("integer"))?,
                "cutoff_sweep" => cfg.cutoff_sweep = parse_list(value).ok_or_else(|| bad("list"))?,
                "exclude_leaders" => cfg.exclude_leaders = Some(PathBuf::from(value)),
                "quantiles" => cfg.quantiles = value.parse().map_err(|_| bad("integer"))?,
                "smoothing_window" => {
                    cfg.smoothing_window = value.parse().map_err(|_| bad("integer"))?;
                }
                "n_permutations" => {
                    cfg.n_permutations = value.parse().map_err(|_| bad("integer"))?;
                }
                "permutation_subsample" => {
                    cfg.permutation_subsample = value.parse().map_err(|_| bad("integer"))?;
                }
                "lowess_f" => cfg.lowess_f = value.parse().map_err(|_| bad("number"))?,
                "kde_bandwidth" => {
                    cfg.kde_bandwidth = Some(value.parse().map_err(|_| bad("number"))?);
                }
                "top_k_instruments" => {
                    cfg.top_k_instruments = value.parse().map_err(|_| bad("integer"))?;
                }
                "horizon_years" => cfg.horizon_years = value.parse().map_err(|_| bad("integer"))?,
                other => {
                    return Err(Error::Config(format!("line {}: unknown key '{other}'", lineno + 1)))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let has_csv = self.sessions.is_some() && self.personnel.is_some();
        if self.sessions.is_some() != self.personnel.is_some() {
            return Err(Error::Config("sessions and personnel must be given together".into()));
        }
        if !has_csv && self.records.is_none() {
            return Err(Error::Config(
                "no input: set sessions+personnel and/or records".into(),
            ));
        }
        if self.theta < 2 {
            return Err(Error::Config("theta must be >= 2".into()));
        }
        if self.theta_sweep.is_empty() || self.theta_sweep.iter().any(|&t| t < 2) {
            return Err(Error::Config("theta_sweep must be non-empty with values >= 2".into()));
        }
        if self.cutoff_sweep.is_empty() {
            return Err(Error::Config("cutoff_sweep must be non-empty".into()));
        }
        if self.window_years == 0 {
            return Err(Error::Config("window_years must be >= 1".into()));
        }
        if self.quantiles == 0 || self.smoothing_window == 0 {
            return Err(Error::Config("quantiles and smoothing_window must be >= 1".into()));
        }
        if self.n_permutations == 0 || self.permutation_subsample == 0 {
            return Err(Error::Config(
                "n_permutations and permutation_subsample must be >= 1".into(),
            ));
        }
        if !(0.0 < self.lowess_f && self.lowess_f <= 1.0) {
            return Err(Error::Config("lowess_f must be in (0, 1]".into()));
        }
        if let Some(h) = self.kde_bandwidth {
            if h <= 0.0 {
                return Err(Error::Config("kde_bandwidth must be positive".into()));
            }
        }
        if self.top_k_instruments == 0 {
            return Err(Error::Config("top_k_instruments must be >= 1".into()));
        }
        if self.horizon_years == 0 {
            return Err(Error::Config("horizon_years must be >= 1".into()));
        }
        Ok(())
    }

    /// Canonical rendering; its digest identifies the run. Unset optional
    /// keys are omitted so the text reparses to the same config.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            if !v.is_empty() {
                let _ = writeln!(out, "{k} = {v}");
            }
        };
        let path = |p: &Option<PathBuf>| {
            p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
        };
        put("sessions", path(&self.sessions));
        put("personnel", path(&self.personnel));
        put("records", path(&self.records));
        put("theta", self.theta.to_string());
        put("theta_sweep", join(&self.theta_sweep));
        put("window_years", self.window_years.to_string());
        put("n_worlds", self.n_worlds.to_string());
        put("seed", self.seed.to_string());
        put("cutoff_year", self.cutoff_year.to_string());
        put("cutoff_sweep", join(&self.cutoff_sweep));
        put("exclude_leaders", path(&self.exclude_leaders));
        put("quantiles", self.quantiles.to_string());
        put("smoothing_window", self.smoothing_window.to_string());
        put("n_permutations", self.n_permutations.to_string());
        put("permutation_subsample", self.permutation_subsample.to_string());
        put("lowess_f", format!("{}", self.lowess_f));
        put("kde_bandwidth", self.kde_bandwidth.map(|h| h.to_string()).unwrap_or_default());
        put("top_k_instruments", self.top_k_instruments.to_string());
        put("horizon_years", self.horizon_years.to_string());
        out
    }
}

fn join<T: std::fmt::Display>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T: std::str::FromStr>(value: &str) -> Option<Vec<T>> {
    let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return None;
    }
    items.into_iter().map(|s| s.parse().ok()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_roundtrips() {
        let text = "\
sessions = data/sessions.csv
personnel = data/personnel.csv   # comment
theta = 3
theta_sweep = 2, 3, 5
n_worlds = 10
seed = 7
lowess_f = 0.4
";
        let cfg = PipelineConfig::parse(text).unwrap();
        assert_eq!(cfg.theta, 3);
        assert_eq!(cfg.theta_sweep, vec![2, 3, 5]);
        assert_eq!(cfg.n_worlds, 10);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.lowess_f, 0.4);
        // canonical form reparses to the same config
        let again = PipelineConfig::parse(&cfg.canonical()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(PipelineConfig::parse("sessions = a\npersonnel = b\nzzz = 1\n").is_err());
        assert!(PipelineConfig::parse("sessions = a\npersonnel = b\ntheta = 1\n").is_err());
        assert!(PipelineConfig::parse("sessions = a\n").is_err());
        assert!(PipelineConfig::parse("").is_err());
        assert!(PipelineConfig::parse("records = r.txt\nlowess_f = 1.2\n").is_err());
        assert!(PipelineConfig::parse("records = r.txt\ntheta = 2\ntheta = 2\n").is_err());
    }

    #[test]
    fn records_only_is_valid() {
        let cfg = PipelineConfig::parse("records = corpus.txt\n").unwrap();
        assert_eq!(cfg.records, Some(PathBuf::from("corpus.txt")));
    }
}
