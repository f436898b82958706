//! Scenario configuration: defaults, `key = value` and JSON config files, the
//! `FILTRALAB_SEED` environment fallback, and command-line overrides.
//!
//! Precedence, highest first: flags, config file, environment, defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::paths::TimeGrid;
use crate::report::Format;

pub const SEED_ENV: &str = "FILTRALAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Bridge,
    Supremum,
    EmeryAfter,
    EmeryBefore,
    Honest,
    Pitman,
    GlueDemo,
    ElemintCheck,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 8] = [
        ScenarioKind::Bridge,
        ScenarioKind::Supremum,
        ScenarioKind::EmeryAfter,
        ScenarioKind::EmeryBefore,
        ScenarioKind::Honest,
        ScenarioKind::Pitman,
        ScenarioKind::GlueDemo,
        ScenarioKind::ElemintCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Bridge => "bridge",
            ScenarioKind::Supremum => "supremum",
            ScenarioKind::EmeryAfter => "emery-after",
            ScenarioKind::EmeryBefore => "emery-before",
            ScenarioKind::Honest => "honest",
            ScenarioKind::Pitman => "pitman",
            ScenarioKind::GlueDemo => "glue-demo",
            ScenarioKind::ElemintCheck => "elemint-check",
        }
    }

    /// Whether the scenario's verdict rests on Monte Carlo statistics.
    pub fn is_statistical(self) -> bool {
        !matches!(self, ScenarioKind::GlueDemo | ScenarioKind::ElemintCheck)
    }

    /// Scenarios driven by `W_1` live on `[0, 1]`.
    pub fn needs_unit_horizon(self) -> bool {
        matches!(self, ScenarioKind::Bridge | ScenarioKind::EmeryAfter | ScenarioKind::EmeryBefore | ScenarioKind::Honest)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
            Error::config("scenario", format!("unknown scenario `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

/// A configuration layer in which every field may be absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartialConfig {
    pub scenario: Option<ScenarioKind>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub n_paths: Option<usize>,
    pub seed: Option<u64>,
    pub delta: Option<f64>,
    pub threshold: Option<f64>,
    pub out_path: Option<PathBuf>,
    pub format: Option<Format>,
    pub no_correction: Option<bool>,
}

fn parse_field<T: FromStr>(field: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::config(field, format!("cannot parse `{value}`")))
}

impl PartialConfig {
    /// Sets one field from its textual value. Keys accept `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "scenario" => self.scenario = Some(value.parse()?),
            "horizon" => self.horizon = Some(parse_field("horizon", value)?),
            "dt" => self.dt = Some(parse_field("dt", value)?),
            "n_paths" => self.n_paths = Some(parse_field("n_paths", value)?),
            "seed" => self.seed = Some(parse_field("seed", value)?),
            "delta" => self.delta = Some(parse_field("delta", value)?),
            "threshold" => self.threshold = Some(parse_field("threshold", value)?),
            "out" | "out_path" => self.out_path = Some(PathBuf::from(value)),
            "format" => self.format = Some(value.parse()?),
            "no_correction" => self.no_correction = Some(parse_field("no_correction", value)?),
            other => return Err(Error::config(other, "unknown configuration key")),
        }
        Ok(())
    }

    /// `key = value` lines; blank lines and `#` comments are ignored.
    pub fn parse_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config("config", format!("line {}: expected `key = value`", i + 1)))?;
            let norm = key.trim().replace('-', "_");
            if seen.contains(&norm) {
                return Err(Error::config(&norm, format!("line {}: duplicate key", i + 1)));
            }
            cfg.set(key, value)?;
            seen.push(norm);
        }
        Ok(cfg)
    }

    /// A flat JSON object with the same keys as the `key = value` format.
    pub fn parse_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::config("config", format!("invalid JSON: {e}")))?;
        let obj = value.as_object().ok_or_else(|| Error::config("config", "JSON config must be an object"))?;
        let mut cfg = Self::default();
        for (key, v) in obj {
            let text = match v {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                _ => return Err(Error::config(key, "expected a string, number or boolean")),
            };
            cfg.set(key, &text)?;
        }
        Ok(cfg)
    }

    /// Reads a config file; JSON when it starts with `{`, `key = value`
    /// otherwise.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        if text.trim_start().starts_with('{') {
            Self::parse_json(&text)
        } else {
            Self::parse_kv(&text)
        }
    }

    /// Fields of `over` replace those of `self`.
    pub fn overlay(self, over: PartialConfig) -> PartialConfig {
        PartialConfig {
            scenario: over.scenario.or(self.scenario),
            horizon: over.horizon.or(self.horizon),
            dt: over.dt.or(self.dt),
            n_paths: over.n_paths.or(self.n_paths),
            seed: over.seed.or(self.seed),
            delta: over.delta.or(self.delta),
            threshold: over.threshold.or(self.threshold),
            out_path: over.out_path.or(self.out_path),
            format: over.format.or(self.format),
            no_correction: over.no_correction.or(self.no_correction),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Trim around singular times; defaults to `0.05 * horizon`.
    pub delta: f64,
    /// Nominal two-sided z threshold of each suite.
    pub threshold: f64,
    pub out_path: Option<PathBuf>,
    pub format: Format,
    /// Run the negative control without the drift correction.
    pub no_correction: bool,
}

impl ScenarioConfig {
    pub const DEFAULT_HORIZON: f64 = 1.0;
    pub const DEFAULT_DT: f64 = 1e-3;
    pub const DEFAULT_N_PATHS: usize = 10_000;
    pub const DEFAULT_SEED: u64 = 1;
    pub const DEFAULT_THRESHOLD: f64 = 3.0;

    /// Fills defaults below `layers` (merged from the environment seed up to
    /// the flags) and validates.
    pub fn resolve(layers: PartialConfig, env_seed: Option<&str>) -> Result<Self> {
        let mut base = PartialConfig::default();
        if let Some(s) = env_seed {
            base.seed = Some(parse_field(SEED_ENV, s)?);
        }
        let p = base.overlay(layers);
        let scenario = p.scenario.ok_or_else(|| Error::config("scenario", "no scenario given"))?;
        let horizon = p.horizon.unwrap_or(Self::DEFAULT_HORIZON);
        let format = p.format.unwrap_or_else(|| match &p.out_path {
            Some(path) if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) => Format::Json,
            _ => Format::Csv,
        });
        let cfg = Self {
            scenario,
            horizon,
            dt: p.dt.unwrap_or(Self::DEFAULT_DT),
            n_paths: p.n_paths.unwrap_or(Self::DEFAULT_N_PATHS),
            seed: p.seed.unwrap_or(Self::DEFAULT_SEED),
            delta: p.delta.unwrap_or(0.05 * horizon),
            threshold: p.threshold.unwrap_or(Self::DEFAULT_THRESHOLD),
            out_path: p.out_path,
            format,
            no_correction: p.no_correction.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = TimeGrid::from_horizon(self.horizon, self.dt)?;
        if self.scenario.needs_unit_horizon() && grid.index_of(1.0) != Some(grid.steps()) {
            return Err(Error::config("horizon", format!("scenario {} runs on [0, 1]", self.scenario)));
        }
        if !(self.delta >= self.dt * (1.0 - 1e-9)) || !self.delta.is_finite() {
            return Err(Error::config("delta", format!("must be at least dt = {}, got {}", self.dt, self.delta)));
        }
        if self.delta >= 0.5 * self.horizon {
            return Err(Error::config("delta", "must be below half the horizon"));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::config("threshold", format!("must be positive, got {}", self.threshold)));
        }
        if self.scenario.is_statistical() && self.n_paths < crate::verify::MIN_PATHS {
            return Err(Error::config(
                "n_paths",
                format!("statistical scenarios need at least {} paths", crate::verify::MIN_PATHS),
            ));
        }
        if self.n_paths == 0 {
            return Err(Error::config("n_paths", "must be positive"));
        }
        Ok(())
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::from_horizon(self.horizon, self.dt).expect("validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(e: Error) -> String {
        match e {
            Error::Config { field, .. } => field,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn defaults() {
        let p = PartialConfig { scenario: Some(ScenarioKind::Bridge), ..Default::default() };
        let c = ScenarioConfig::resolve(p, None).unwrap();
        assert_eq!(c.delta, 0.05);
        assert_eq!(c.format, Format::Csv);
        assert_eq!(c.seed, ScenarioConfig::DEFAULT_SEED);
    }

    #[test]
    fn precedence() {
        let file = PartialConfig::parse_kv("scenario = pitman\nseed = 7\nn-paths = 500\n").unwrap();
        let flags = PartialConfig { seed: Some(9), ..Default::default() };
        assert_eq!(ScenarioConfig::resolve(file.clone().overlay(flags), Some("3")).unwrap().seed, 9);
        assert_eq!(ScenarioConfig::resolve(file.clone(), Some("3")).unwrap().seed, 7);
        let no_seed = PartialConfig { seed: None, ..file };
        assert_eq!(ScenarioConfig::resolve(no_seed, Some("3")).unwrap().seed, 3);
    }

    #[test]
    fn json_and_kv_agree() {
        let kv = PartialConfig::parse_kv("# sweep\nscenario=supremum\ndt = 0.002\nformat = json\nno-correction = true").unwrap();
        let js =
            PartialConfig::parse_json(r#"{"scenario": "supremum", "dt": 0.002, "format": "json", "no_correction": true}"#)
                .unwrap();
        assert_eq!(kv, js);
    }

    #[test]
    fn dt_must_divide_horizon() {
        let p = PartialConfig { scenario: Some(ScenarioKind::Pitman), dt: Some(0.3), ..Default::default() };
        assert_eq!(field_of(ScenarioConfig::resolve(p, None).unwrap_err()), "dt");
    }

    #[test]
    fn rejected_fields_are_named() {
        let base = PartialConfig { scenario: Some(ScenarioKind::Bridge), ..Default::default() };
        let cases = [
            (PartialConfig { delta: Some(1e-4), ..base.clone() }, "delta"),
            (PartialConfig { n_paths: Some(99), ..base.clone() }, "n_paths"),
            (PartialConfig { threshold: Some(0.0), ..base.clone() }, "threshold"),
            (PartialConfig { horizon: Some(2.0), ..base.clone() }, "horizon"),
        ];
        for (p, field) in cases {
            assert_eq!(field_of(ScenarioConfig::resolve(p, None).unwrap_err()), field);
        }
        assert_eq!(field_of(PartialConfig::parse_kv("colour = red").unwrap_err()), "colour");
        assert_eq!(field_of(PartialConfig::parse_kv("seed = 1\nseed = 2").unwrap_err()), "seed");
        assert_eq!(field_of(PartialConfig::parse_kv("scenario = nope").unwrap_err()), "scenario");
        assert_eq!(field_of(ScenarioConfig::resolve(base, Some("x")).unwrap_err()), SEED_ENV);
    }

    #[test]
    fn deterministic_scenarios_accept_small_ensembles() {
        let p = PartialConfig { scenario: Some(ScenarioKind::ElemintCheck), n_paths: Some(1), ..Default::default() };
        assert!(ScenarioConfig::resolve(p, None).is_ok());
    }

    #[test]
    fn json_extension_selects_json() {
        let p = PartialConfig {
            scenario: Some(ScenarioKind::Bridge),
            out_path: Some("r.JSON".into()),
            ..Default::default()
        };
        assert_eq!(ScenarioConfig::resolve(p, None).unwrap().format, Format::Json);
    }
}
