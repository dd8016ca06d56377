//! Full SDE benchmarks: paired optimized/reference integrations sharing
//! the same noise stream, compared against analytic or quadrature oracles
//! at the final time.
//!
//! Per run the CSV holds one row per tracked quantity: moment errors
//! (`1`..`8`), cumulant errors (`k1`..`k8`), the `exp`/`abs` observables
//! for the steady-state models, and the photon-number error `n` for the
//! laser sweep (with the swept `b` in the `param` column).

use rayon::prelude::*;

use pos_core::dynamic::{integrate, RecordSpec, SdeModel, StepMethod};
use pos_core::ensemble::Ensemble;
use pos_core::error::PosError;
use pos_core::models::{
    cubic_weight, irregular_weight, laser_nss, laser_observables, steady_state_expectation,
    CubicDrift, IrregularDrift, Laser, Ou, SteadyStateWeight,
};
use pos_core::noise::{blocks, NoiseStream};
use pos_core::observables::ObservableSet;
use pos_core::static_pos::{optimize_initial, DivergencePolicy, OptimizerConfig, MAX_RESTARTS};
use pos_core::stats::{cross_raw_moments, cumulants_from_moments, raw_moments};

use super::{mean_map, normal_targets, with_pool};
use crate::config::{Method, RunConfig, Scenario};
use crate::csv::Record;

const TRACKED_ORDER: usize = 8;

struct Oracle {
    raw: Vec<f64>,
    kappa: Vec<f64>,
    exp: Option<f64>,
    abs: Option<f64>,
}

fn steady_oracle<L: Fn(f64) -> f64>(w: &SteadyStateWeight<L>) -> anyhow::Result<Oracle> {
    let mut raw = Vec::with_capacity(TRACKED_ORDER);
    for m in 1..=TRACKED_ORDER {
        raw.push(steady_state_expectation(w, |x| x.powi(m as i32))?);
    }
    let kappa = cumulants_from_moments(&pos_core::stats::MomentVector::new(raw.clone()));
    Ok(Oracle {
        kappa,
        exp: Some(steady_state_expectation(w, f64::exp)?),
        abs: Some(steady_state_expectation(w, f64::abs)?),
        raw,
    })
}

fn oracle_for(cfg: &RunConfig) -> anyhow::Result<Oracle> {
    match cfg.scenario {
        Scenario::SdeOu => {
            let (raw, kappa) = pos_core::models::ou_exact_moments(&cfg.ou, cfg.horizon, TRACKED_ORDER)?;
            Ok(Oracle { raw: raw.into_values(), kappa, exp: None, abs: None })
        }
        Scenario::SdeCubic => steady_oracle(&cubic_weight()),
        Scenario::SdeIrregular => steady_oracle(&irregular_weight()),
        _ => anyhow::bail!("no scalar oracle for this scenario"),
    }
}

fn step_method(m: Method) -> StepMethod {
    match m {
        Method::Euler => StepMethod::Euler,
        Method::Combined => StepMethod::Combined,
        Method::Individual => StepMethod::Individual,
    }
}

pub fn run(cfg: &RunConfig) -> anyhow::Result<Vec<Record>> {
    match cfg.scenario {
        Scenario::SdeLaser => run_laser(cfg),
        _ => run_scalar(cfg),
    }
}

/// Pre-optimizes the initial ensemble, resampling on divergence.
fn preoptimize(
    stream: &NoiseStream,
    cfg: &RunConfig,
    obs: &ObservableSet,
    dim: usize,
    mean: f64,
    std: f64,
) -> anyhow::Result<Ensemble> {
    let opt_cfg = OptimizerConfig {
        divergence_policy: DivergencePolicy::BacktrackResample,
        ..OptimizerConfig::default()
    };
    let mut k = 0usize;
    loop {
        let block = if k == 0 { blocks::INIT } else { blocks::restart(k - 1) };
        let x0 = stream.gaussian_ensemble(block, cfg.n_samples, dim, mean, std)?;
        match optimize_initial(x0, obs, &opt_cfg) {
            Ok((x, _)) => return Ok(x),
            Err(PosError::Divergence { .. }) if k < MAX_RESTARTS => k += 1,
            Err(e) => return Err(e.into()),
        }
    }
}

fn run_scalar(cfg: &RunConfig) -> anyhow::Result<Vec<Record>> {
    let oracle = oracle_for(cfg)?;
    let records: Vec<Vec<Record>> = with_pool(cfg.workers, || {
        (0..cfg.runs)
            .into_par_iter()
            .map(|run| scalar_pair(cfg, run, &oracle))
            .collect::<anyhow::Result<_>>()
    })??;
    Ok(records.into_iter().flatten().collect())
}

fn scalar_pair(cfg: &RunConfig, run: usize, oracle: &Oracle) -> anyhow::Result<Vec<Record>> {
    let model: Box<dyn SdeModel + Send + Sync> = match cfg.scenario {
        Scenario::SdeOu => Box::new(Ou(cfg.ou)),
        Scenario::SdeCubic => Box::new(CubicDrift),
        Scenario::SdeIrregular => Box::new(IrregularDrift),
        _ => unreachable!(),
    };
    let (init_mean, init_std) = match cfg.scenario {
        Scenario::SdeOu => (cfg.ou.init_mean, cfg.ou.init_std),
        _ => (cfg.init_mean, cfg.init_std),
    };
    let targets = match cfg.scenario {
        Scenario::SdeOu => {
            pos_core::models::ou_exact_moments(&cfg.ou, 0.0, cfg.m_order)?.0.into_values()
        }
        _ => normal_targets(cfg.m_order, init_std),
    };
    let obs = ObservableSet::monomial_1d(cfg.m_order, targets)?;
    let stream = NoiseStream::new(cfg.seed, run as u64);
    let record = RecordSpec { moment_order: TRACKED_ORDER, at_steps: vec![] };
    let opt_cfg = OptimizerConfig::default();

    let x_raw =
        stream.gaussian_ensemble(blocks::INIT, cfg.n_samples, 1, init_mean, init_std)?;
    let reference = integrate(
        model.as_ref(),
        &x_raw,
        cfg.horizon,
        cfg.n_steps,
        StepMethod::Euler,
        &obs,
        &opt_cfg,
        &record,
        &stream,
    )?;

    let x0 = preoptimize(&stream, cfg, &obs, 1, init_mean, init_std)?;
    let optimized = integrate(
        model.as_ref(),
        &x0,
        cfg.horizon,
        cfg.n_steps,
        step_method(cfg.method),
        &obs,
        &opt_cfg,
        &record,
        &stream,
    )?;

    let mut rows = Vec::new();
    let pos_m = raw_moments(&optimized.final_ensemble, TRACKED_ORDER)?;
    let ref_m = raw_moments(&reference.final_ensemble, TRACKED_ORDER)?;
    for m in 1..=TRACKED_ORDER {
        rows.push(Record {
            attempt: run,
            m: m.to_string(),
            r_opt: Some((pos_m.get(m) - oracle.raw[m - 1]).abs()),
            r_raw: Some((ref_m.get(m) - oracle.raw[m - 1]).abs()),
            iterations: Some(optimized.step_retries),
            ..Default::default()
        });
    }
    let pos_k = cumulants_from_moments(&pos_m);
    let ref_k = cumulants_from_moments(&ref_m);
    for m in 1..=TRACKED_ORDER {
        rows.push(Record {
            attempt: run,
            m: format!("k{m}"),
            r_opt: Some((pos_k[m - 1] - oracle.kappa[m - 1]).abs()),
            r_raw: Some((ref_k[m - 1] - oracle.kappa[m - 1]).abs()),
            ..Default::default()
        });
    }
    if let (Some(exp_ss), Some(abs_ss)) = (oracle.exp, oracle.abs) {
        let pairs = [
            ("exp", exp_ss, f64::exp as fn(f64) -> f64),
            ("abs", abs_ss, f64::abs as fn(f64) -> f64),
        ];
        for (label, target, f) in pairs {
            rows.push(Record {
                attempt: run,
                m: label.to_string(),
                r_opt: Some((mean_map(&optimized.final_ensemble, f) - target).abs()),
                r_raw: Some((mean_map(&reference.final_ensemble, f) - target).abs()),
                ..Default::default()
            });
        }
    }
    Ok(rows)
}

fn run_laser(cfg: &RunConfig) -> anyhow::Result<Vec<Record>> {
    let jobs: Vec<(usize, f64, usize)> = cfg
        .laser_b
        .iter()
        .enumerate()
        .flat_map(|(bi, &b)| (0..cfg.runs).map(move |run| (bi, b, run)))
        .collect();
    let records: Vec<Vec<Record>> = with_pool(cfg.workers, || {
        jobs.into_par_iter()
            .map(|(bi, b, run)| laser_pair(cfg, bi, b, run))
            .collect::<anyhow::Result<_>>()
    })??;
    Ok(records.into_iter().flatten().collect())
}

fn laser_pair(cfg: &RunConfig, b_index: usize, b: f64, run: usize) -> anyhow::Result<Vec<Record>> {
    let model = Laser { b };
    let n_ss = laser_nss(b)?;
    let obs = laser_observables(cfg.init_std)?;
    let stream = NoiseStream::new(cfg.seed, (b_index as u64) << 32 | run as u64);
    let record = RecordSpec { moment_order: 2, at_steps: vec![] };
    let opt_cfg = OptimizerConfig::default();

    let x_raw =
        stream.gaussian_ensemble(blocks::INIT, cfg.n_samples, 2, cfg.init_mean, cfg.init_std)?;
    let reference = integrate(
        &model,
        &x_raw,
        cfg.horizon,
        cfg.n_steps,
        StepMethod::Euler,
        &obs,
        &opt_cfg,
        &record,
        &stream,
    )?;
    let x0 = preoptimize(&stream, cfg, &obs, 2, cfg.init_mean, cfg.init_std)?;
    let optimized = integrate(
        &model,
        &x0,
        cfg.horizon,
        cfg.n_steps,
        step_method(cfg.method),
        &obs,
        &opt_cfg,
        &record,
        &stream,
    )?;

    let photon = |e: &Ensemble| -> anyhow::Result<f64> {
        let c = cross_raw_moments(e, &[(2, 0), (0, 2)])?;
        Ok(c[0] + c[1])
    };
    Ok(vec![Record {
        param: Some(b),
        attempt: run,
        m: "n".to_string(),
        r_opt: Some((photon(&optimized.final_ensemble)? - n_ss).abs()),
        r_raw: Some((photon(&reference.final_ensemble)? - n_ss).abs()),
        iterations: Some(optimized.step_retries),
        ..Default::default()
    }])
}
