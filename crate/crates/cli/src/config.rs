//! Run configuration: JSON file with flat keys, overridden by CLI flags.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Static,
    OnestepCombined,
    OnestepIndividual,
    SdeOu,
    SdeCubic,
    SdeIrregular,
    SdeLaser,
    Plan,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "static" => Ok(Scenario::Static),
            "onestep-combined" => Ok(Scenario::OnestepCombined),
            "onestep-individual" => Ok(Scenario::OnestepIndividual),
            "sde-ou" => Ok(Scenario::SdeOu),
            "sde-cubic" => Ok(Scenario::SdeCubic),
            "sde-irregular" => Ok(Scenario::SdeIrregular),
            "sde-laser" => Ok(Scenario::SdeLaser),
            "plan" => Ok(Scenario::Plan),
            other => Err(ConfigError(format!("unknown scenario '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Static => "static",
            Scenario::OnestepCombined => "onestep-combined",
            Scenario::OnestepIndividual => "onestep-individual",
            Scenario::SdeOu => "sde-ou",
            Scenario::SdeCubic => "sde-cubic",
            Scenario::SdeIrregular => "sde-irregular",
            Scenario::SdeLaser => "sde-laser",
            Scenario::Plan => "plan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Euler,
    Combined,
    Individual,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "euler" => Ok(Method::Euler),
            "combined" => Ok(Method::Combined),
            "individual" => Ok(Method::Individual),
            other => Err(ConfigError(format!("unknown method '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Combined => "combined",
            Method::Individual => "individual",
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Flat key set accepted both in the JSON config file and as CLI flags.
/// Every field is optional; scenario defaults fill the gaps.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct PartialConfig {
    pub scenario: Option<String>,
    pub n_samples: Option<usize>,
    pub n_steps: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub attempts: Option<usize>,
    pub runs: Option<usize>,
    pub m_order: Option<usize>,
    pub method: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub sigma: Option<f64>,
    pub drift: Option<f64>,
    pub noise: Option<f64>,
    pub init_mean: Option<f64>,
    pub init_std: Option<f64>,
    pub ou_f: Option<f64>,
    pub ou_g: Option<f64>,
    pub ou_b: Option<f64>,
    pub laser_b: Option<Vec<f64>>,
    pub workers: Option<usize>,
    pub timing: Option<bool>,
    /// `"divide"` (documented convention) or `"multiply"` for the exp/abs
    /// error normalization.
    pub extra_error_scaling: Option<String>,
    pub budget: Option<u64>,
    pub order_p: Option<f64>,
    pub trunc_const: Option<f64>,
    pub sample_sigma: Option<f64>,
}

impl PartialConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("cannot parse {}: {e}", path.display())))
    }

    /// Field-wise override: values in `over` win.
    pub fn merged_with(mut self, over: PartialConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(
            scenario, n_samples, n_steps, dt, horizon, attempts, runs, m_order, method, seed,
            out, sigma, drift, noise, init_mean, init_std, ou_f, ou_g, ou_b, laser_b, workers,
            timing, extra_error_scaling, budget, order_p, trunc_const, sample_sigma
        );
        self
    }
}

/// A fully resolved benchmark configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub n_samples: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub horizon: f64,
    pub attempts: usize,
    pub runs: usize,
    pub m_order: usize,
    pub method: Method,
    pub seed: u64,
    pub out: PathBuf,
    pub sigma: f64,
    pub drift: f64,
    pub noise: f64,
    pub init_mean: f64,
    pub init_std: f64,
    pub ou: pos_core::models::OuParams,
    pub laser_b: Vec<f64>,
    pub workers: usize,
    pub timing: bool,
    pub extra_error_scaling: pos_core::stats::ExtraErrorScaling,
    pub budget: u64,
    pub order_p: f64,
    pub trunc_const: f64,
    pub sample_sigma: f64,
}

impl RunConfig {
    /// Applies per-scenario defaults, then validates.
    pub fn resolve(p: &PartialConfig) -> Result<Self, ConfigError> {
        let scenario = Scenario::parse(
            p.scenario.as_deref().ok_or_else(|| ConfigError("scenario is required".into()))?,
        )?;
        let (def_ns, def_nt, def_horizon, def_attempts, def_runs, def_method) = match scenario {
            Scenario::Static => (1000, 1, 1.0, 100, 1, Method::Combined),
            Scenario::OnestepCombined => (1000, 1, 1e-4, 100, 1, Method::Combined),
            Scenario::OnestepIndividual => (1000, 1, 0.1, 100, 1, Method::Individual),
            Scenario::SdeOu => (10_000, 1000, 1.0, 1, 8, Method::Individual),
            Scenario::SdeCubic | Scenario::SdeIrregular => {
                (4096, 12_500, 25.0, 1, 8, Method::Combined)
            }
            Scenario::SdeLaser => (16_384, 12_500, 25.0, 1, 8, Method::Combined),
            Scenario::Plan => (1, 1, 1.0, 1, 1, Method::Euler),
        };
        let n_steps = p.n_steps.unwrap_or(def_nt);
        if n_steps == 0 {
            return Err(ConfigError("n_steps must be >= 1".into()));
        }
        let (dt, horizon) = match (p.dt, p.horizon) {
            (Some(_), Some(_)) => {
                return Err(ConfigError("give exactly one of dt and horizon, not both".into()))
            }
            (Some(dt), None) => (dt, dt * n_steps as f64),
            (None, Some(h)) => (h / n_steps as f64, h),
            (None, None) => match scenario {
                // one-step scenarios are configured by dt, multi-step by
                // horizon
                Scenario::OnestepCombined | Scenario::OnestepIndividual => {
                    (def_horizon, def_horizon * n_steps as f64)
                }
                _ => (def_horizon / n_steps as f64, def_horizon),
            },
        };
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(ConfigError("dt must be positive and finite".into()));
        }
        let method = match p.method.as_deref() {
            Some(s) => Method::parse(s)?,
            None => def_method,
        };
        let cfg = RunConfig {
            scenario,
            n_samples: p.n_samples.unwrap_or(def_ns),
            n_steps,
            dt,
            horizon,
            attempts: p.attempts.unwrap_or(def_attempts),
            runs: p.runs.unwrap_or(def_runs),
            m_order: p.m_order.unwrap_or(6),
            method,
            seed: p.seed.unwrap_or(1),
            out: PathBuf::from(
                p.out.clone().unwrap_or_else(|| format!("{}.csv", scenario.name())),
            ),
            sigma: p.sigma.unwrap_or(1.0),
            drift: p.drift.unwrap_or(0.5),
            noise: p.noise.unwrap_or(0.5),
            init_mean: p.init_mean.unwrap_or(match scenario {
                Scenario::OnestepCombined | Scenario::OnestepIndividual => 1.0,
                _ => 0.0,
            }),
            init_std: p.init_std.unwrap_or(match scenario {
                Scenario::OnestepCombined | Scenario::OnestepIndividual => 0.1,
                Scenario::Static => 1.0,
                _ => 0.5f64.sqrt(),
            }),
            ou: pos_core::models::OuParams {
                f: p.ou_f.unwrap_or(1.0),
                g: p.ou_g.unwrap_or(0.2),
                b: p.ou_b.unwrap_or(0.5),
                init_mean: p.init_mean.unwrap_or(0.5),
                init_std: p.init_std.unwrap_or(0.1),
            },
            laser_b: p.laser_b.clone().unwrap_or_else(|| vec![0.01, 0.32, 10.24]),
            workers: p.workers.unwrap_or(0),
            timing: p.timing.unwrap_or(false),
            extra_error_scaling: match p.extra_error_scaling.as_deref() {
                None | Some("divide") => pos_core::stats::ExtraErrorScaling::DivideBySqrtN,
                Some("multiply") => pos_core::stats::ExtraErrorScaling::MultiplyBySqrtN,
                Some(other) => {
                    return Err(ConfigError(format!(
                        "extra_error_scaling must be 'divide' or 'multiply', got '{other}'"
                    )))
                }
            },
            budget: p.budget.unwrap_or(1_000_000),
            order_p: p.order_p.unwrap_or(1.0),
            trunc_const: p.trunc_const.unwrap_or(1.0),
            sample_sigma: p.sample_sigma.unwrap_or(1.0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.n_samples == 0 || self.attempts == 0 || self.runs == 0 || self.m_order == 0 {
            return Err(ConfigError("all counts must be >= 1".into()));
        }
        if !(self.sigma > 0.0) || !(self.init_std >= 0.0) {
            return Err(ConfigError("sigma must be positive and init_std non-negative".into()));
        }
        if self.scenario == Scenario::SdeLaser
            && self.laser_b.iter().any(|b| !(*b > 0.0) || !b.is_finite())
        {
            return Err(ConfigError("laser_b entries must be positive and finite".into()));
        }
        if self.scenario == Scenario::Plan
            && (!(self.order_p > 0.0) || !(self.trunc_const > 0.0) || !(self.sample_sigma > 0.0))
        {
            return Err(ConfigError("plan requires order_p, trunc_const, sample_sigma > 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dt_and_horizon_are_exclusive() {
        let p = PartialConfig {
            scenario: Some("sde-ou".into()),
            dt: Some(1e-3),
            horizon: Some(1.0),
            ..Default::default()
        };
        assert!(RunConfig::resolve(&p).is_err());
    }

    #[test]
    fn defaults_fill_in() {
        let p = PartialConfig { scenario: Some("static".into()), ..Default::default() };
        let cfg = RunConfig::resolve(&p).unwrap();
        assert_eq!(cfg.n_samples, 1000);
        assert_eq!(cfg.attempts, 100);
        assert_eq!(cfg.m_order, 6);
        assert!(!cfg.timing);
    }

    #[test]
    fn overrides_win() {
        let base = PartialConfig {
            scenario: Some("static".into()),
            n_samples: Some(50),
            ..Default::default()
        };
        let over = PartialConfig { n_samples: Some(77), ..Default::default() };
        let cfg = RunConfig::resolve(&base.merged_with(over)).unwrap();
        assert_eq!(cfg.n_samples, 77);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<PartialConfig>("{\"bogus\": 1}");
        assert!(err.is_err());
    }
}
