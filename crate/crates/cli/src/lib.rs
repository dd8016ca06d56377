//! Benchmark harness behind the `pos-sde` binary: run configuration,
//! deterministic seeding, CSV emission and summary statistics for the
//! parallel-optimized-sampling scenarios.

pub mod config;
pub mod csv;
pub mod scenarios;
pub mod summary;

use config::{RunConfig, Scenario};

/// Runs a scenario and returns the rendered CSV body.
pub fn execute(cfg: &RunConfig) -> anyhow::Result<String> {
    if cfg.scenario == Scenario::Plan {
        let plan = scenarios::plan::run(cfg)?;
        return Ok(csv::render_plan(&plan));
    }
    let mut records = match cfg.scenario {
        Scenario::Static => scenarios::statics::run(cfg)?,
        Scenario::OnestepCombined | Scenario::OnestepIndividual => scenarios::onestep::run(cfg)?,
        Scenario::SdeOu | Scenario::SdeCubic | Scenario::SdeIrregular | Scenario::SdeLaser => {
            scenarios::sde::run(cfg)?
        }
        Scenario::Plan => unreachable!(),
    };
    csv::sort_records(&mut records);
    Ok(csv::render(cfg, &records))
}
