use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::simulation::{AbcVariant, BURN_IN_FACTOR, DT_FACTOR, WINDOW_FACTOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Filter,
    Smoother,
    Abc,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Filter => "filter",
            Estimator::Smoother => "smoother",
            Estimator::Abc => "abc",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "filter" => Ok(Estimator::Filter),
            "smoother" => Ok(Estimator::Smoother),
            "abc" => Ok(Estimator::Abc),
            other => Err(Error::invalid(
                "estimator",
                format!("unknown estimator `{other}` (expected filter, smoother or abc)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantName {
    #[default]
    Exact,
    Linearized,
}

impl From<VariantName> for AbcVariant {
    fn from(v: VariantName) -> Self {
        match v {
            VariantName::Exact => AbcVariant::Exact,
            VariantName::Linearized => AbcVariant::Linearized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub p: Vec<u32>,
    pub kappa: f64,
    /// Values of `(N/kappa)^((p-1)/p)`.
    pub grid: Vec<f64>,
    pub estimators: Vec<Estimator>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub linearized: bool,
}

fn default_trials() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbcSection {
    /// Defaults to `mu^(1/p)` at each grid point.
    pub chi: Option<f64>,
    /// Decay rate of the lowest chain component.
    pub cutoff: Option<f64>,
    #[serde(default)]
    pub variant: VariantName,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingSection {
    pub dt_factor: f64,
    pub burn_in_factor: f64,
    pub window_factor: f64,
    pub divergence_windows: usize,
    /// A row is flagged as diverged when its windowed mean MSE rises strictly
    /// and the mean log-MSE of the last window exceeds the first by this many
    /// combined standard errors.
    pub divergence_sigmas: f64,
}

impl Default for TimingSection {
    fn default() -> Self {
        Self {
            dt_factor: DT_FACTOR,
            burn_in_factor: BURN_IN_FACTOR,
            window_factor: WINDOW_FACTOR,
            divergence_windows: 3,
            divergence_sigmas: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub sweep: SweepSection,
    #[serde(default)]
    pub abc: AbcSection,
    #[serde(default)]
    pub timing: TimingSection,
}

fn config_err(field: &str, reason: impl fmt::Display) -> Error {
    Error::Config(format!("`{field}`: {reason}"))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(config_err(
            field,
            format!("must be finite and > 0, got {v}"),
        ))
    }
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sweep;
        if s.p.is_empty() {
            return Err(config_err("p", "list is empty"));
        }
        for &p in &s.p {
            if p < 2 || p % 2 != 0 || p > crate::lg_estimation::MAX_EXPONENT {
                return Err(config_err(
                    "p",
                    format!("{p} is not an even integer in [2, 20]"),
                ));
            }
        }
        positive("kappa", s.kappa)?;
        if s.grid.is_empty() {
            return Err(config_err("grid", "list is empty"));
        }
        for &g in &s.grid {
            positive("grid", g)?;
        }
        if s.estimators.is_empty() {
            return Err(config_err("estimators", "list is empty"));
        }
        let mut seen = s.estimators.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != s.estimators.len() {
            return Err(config_err("estimators", "contains duplicates"));
        }
        if s.trials < 2 {
            return Err(config_err(
                "trials",
                format!("need at least 2 for an error bar, got {}", s.trials),
            ));
        }
        if let Some(chi) = self.abc.chi {
            positive("chi", chi)?;
        }
        if let Some(l) = self.abc.cutoff {
            positive("cutoff", l)?;
        }
        if self.abc.variant == VariantName::Linearized && !s.linearized {
            return Err(config_err(
                "variant",
                "the linearized ABC estimator assumes a linearized photocurrent; set `linearized = true`",
            ));
        }
        let t = &self.timing;
        positive("dt_factor", t.dt_factor)?;
        if t.dt_factor > DT_FACTOR {
            return Err(config_err("dt_factor", format!("must be <= {DT_FACTOR}")));
        }
        if !(t.burn_in_factor >= BURN_IN_FACTOR && t.burn_in_factor.is_finite()) {
            return Err(config_err(
                "burn_in_factor",
                format!("must be >= {BURN_IN_FACTOR}"),
            ));
        }
        positive("window_factor", t.window_factor)?;
        if t.divergence_windows < 2 {
            return Err(config_err("divergence_windows", "need at least 2 windows"));
        }
        positive("divergence_sigmas", t.divergence_sigmas)?;
        Ok(())
    }
}
