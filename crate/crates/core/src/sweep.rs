//! Independent runs over one varied scenario parameter.

use serde::{Deserialize, Serialize};

use crate::driver::{run_multistart, Algorithm, BcdSettings, RunReport};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::scenario::{Scenario, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Flight period `T` in seconds; the slot length is kept.
    Period,
    /// Radar SINR threshold, linear.
    SensingThreshold,
    /// UAV transmit power cap in watts.
    UavPowerCap,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Period => "T",
            SweepParam::SensingThreshold => "gamma_th",
            SweepParam::UavPowerCap => "p_uav",
        }
    }

    pub fn apply(self, cfg: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        match self {
            SweepParam::Period => cfg.with_period(value),
            SweepParam::SensingThreshold => cfg.with_sensing_threshold(value),
            SweepParam::UavPowerCap => cfg.with_uav_power_cap(value),
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "T" | "period" => Ok(SweepParam::Period),
            "gamma_th" => Ok(SweepParam::SensingThreshold),
            "p_uav" => Ok(SweepParam::UavPowerCap),
            other => Err(format!("unknown sweep parameter `{other}` (expected T, gamma_th or p_uav)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn new(param: SweepParam, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::validation("sweep needs at least one value"));
        }
        Ok(SweepSpec { param, values })
    }
}

/// Options shared by every run of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub algorithm: Algorithm,
    pub max_iterations: Option<usize>,
    pub starts: usize,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { algorithm: Algorithm::Proposed, max_iterations: None, starts: 1, seed: 0 }
    }
}

/// One complete run of `cfg`.
pub fn run_config(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunReport> {
    let sc = Scenario::new(cfg.clone());
    let mut settings = BcdSettings::for_scenario(&sc);
    if let Some(m) = opts.max_iterations {
        settings.max_iterations = m;
    }
    // starts run one after another; the sweep already spreads over threads
    run_multistart(&sc, opts.algorithm, &settings, opts.starts, opts.seed, Execution::Sequential)
}

/// Runs every value of the sweep, keeping value order. A failing value does
/// not stop the others.
pub fn run_sweep(cfg: &ScenarioConfig, spec: &SweepSpec, opts: &RunOptions, exec: Execution) -> Vec<Result<RunReport>> {
    par::map(exec, &spec.values, |&v| spec.param.apply(cfg, v).and_then(|c| run_config(&c, opts)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_names_parse() {
        for p in [SweepParam::Period, SweepParam::SensingThreshold, SweepParam::UavPowerCap] {
            assert_eq!(p.name().parse::<SweepParam>(), Ok(p));
        }
        assert!("alpha".parse::<SweepParam>().is_err());
    }

    #[test]
    fn empty_sweep_is_rejected() {
        assert!(SweepSpec::new(SweepParam::Period, vec![]).is_err());
    }

    #[test]
    fn period_sweep_changes_the_slot_count() {
        let cfg = ScenarioConfig::reference(1e-3);
        assert_eq!(SweepParam::Period.apply(&cfg, 70.0).unwrap().num_slots, 70);
        assert!(SweepParam::UavPowerCap.apply(&cfg, -1.0).is_err());
    }
}
