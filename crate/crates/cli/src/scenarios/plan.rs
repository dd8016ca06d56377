//! Resource-planning subcommand: optimal sample/step split for a budget.

use pos_core::planner::{effective_order, optimal_split, ResourcePlan};

use crate::config::RunConfig;

pub fn run(cfg: &RunConfig) -> anyhow::Result<ResourcePlan> {
    Ok(optimal_split(cfg.order_p, cfg.trunc_const, cfg.sample_sigma, cfg.budget)?)
}

pub fn describe(plan: &ResourcePlan) -> String {
    format!(
        "budget N         {}\n\
         order p          {}\n\
         N_S (samples)    {}\n\
         N_T (steps)      {}\n\
         predicted error  {:.6e}\n\
         eps_T / eps_S    {}\n\
         effective order  {:.6}\n",
        plan.budget,
        plan.order_p,
        plan.n_samples,
        plan.n_steps,
        plan.predicted_error,
        plan.error_ratio,
        effective_order(plan.order_p),
    )
}
