use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::critic::{fit_advantage_bellman, BELLMAN_RIDGE};
use crate::error::{Error, Result};
use crate::estimators::{
    episodic_search_gradient, finite_difference_gradient, likelihood_ratio_from_episodes, reinforce_gradient,
    reinforce_with_optimal_baseline, FdStep, SearchDistribution,
};
use crate::mdp::{exact_expected_return, exact_policy_gradient, PolicyMatrix, TabularMdp};
use crate::natural::{enac_update, npg_iterate, LearnerState, NpgConfig};
use crate::policy::{DifferentiablePolicy, FeatureMap, GibbsPolicy, ParamVector, StateFeatures};

use super::config::{ExperimentConfig, FeatureChoice, Method, ThetaInit};
use super::envs::{build_environment, Environment};

pub const CSV_HEADER: [&str; 6] = ["method", "seed", "iteration", "J", "grad_norm", "wall_ms"];

/// One logged iteration. `j` is the exact expected return of θ_k and
/// `grad_norm` the norm of the ascent direction computed at θ_k.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub method: Method,
    pub seed: u64,
    pub iteration: usize,
    pub j: f64,
    pub grad_norm: f64,
    /// Zero unless timing was requested.
    pub wall_ms: f64,
}

/// Runs every seed (in parallel) and returns rows sorted by (seed, iteration).
pub fn run_experiment(config: &ExperimentConfig, timing: bool) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let env = build_environment(&config.environment)?;
    let features = Arc::new(feature_map(&env.mdp, config.features)?);
    let runs = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, &env, &features, seed, timing))
        .collect::<Vec<_>>();
    let mut records = Vec::with_capacity(config.seeds.len() * config.iterations);
    for run in runs {
        records.extend(run?);
    }
    records.sort_by_key(|r| (r.seed, r.iteration));
    Ok(records)
}

pub(crate) fn feature_map(mdp: &TabularMdp, choice: FeatureChoice) -> Result<FeatureMap> {
    match choice {
        FeatureChoice::OneHot => FeatureMap::one_hot(mdp.num_states(), mdp.num_actions()),
        FeatureChoice::OneHotReduced => FeatureMap::one_hot_reduced(mdp.num_states(), mdp.num_actions()),
    }
}

pub(crate) fn initial_theta<R: Rng + ?Sized>(
    env: &Environment,
    features: &FeatureMap,
    choice: FeatureChoice,
    init: &ThetaInit,
    rng: &mut R,
) -> Result<ParamVector> {
    let dim = features.dimension();
    match init {
        ThetaInit::Values(v) if v.len() != dim => {
            Err(Error::InvalidArgument(format!("theta has {} values, the policy has {dim} parameters", v.len())))
        }
        ThetaInit::Values(v) => ParamVector::new(v.clone()),
        ThetaInit::Random => ParamVector::new((0..dim).map(|_| rng.sample(StandardNormal)).collect()),
        ThetaInit::Default => match &env.start_logits {
            None => Ok(ParamVector::zeros(dim)),
            Some(logits) => {
                let na = env.mdp.num_actions();
                let values = match choice {
                    FeatureChoice::OneHot => logits.clone(),
                    FeatureChoice::OneHotReduced => logits
                        .chunks(na)
                        .flat_map(|row| row[1..].iter().map(move |l| l - row[0]))
                        .collect(),
                };
                ParamVector::new(values)
            }
        },
    }
}

fn run_seed(
    config: &ExperimentConfig,
    env: &Environment,
    features: &Arc<FeatureMap>,
    seed: u64,
    timing: bool,
) -> Result<Vec<RunRecord>> {
    let mdp = &env.mdp;
    let gamma = mdp.discount();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = initial_theta(env, features, config.features, &config.theta, &mut rng)?;
    let mut policy = GibbsPolicy::new(features.clone(), theta.clone())?;
    let mut state = LearnerState::new(theta, config.schedule)?;
    let npg = NpgConfig { batch_size: config.batch_size, damping: config.damping, mode: config.mode };
    let critic_features = StateFeatures::one_hot(mdp.num_states())?;
    let mut records = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        let start = Instant::now();
        let j = exact_expected_return(mdp, &PolicyMatrix::from_policy(mdp, &policy)?)?;
        let direction = match config.method {
            Method::Exact => Some(exact_policy_gradient(mdp, &policy)?.gradient),
            Method::FiniteDifference => {
                // common random numbers for both sides of every difference
                let crn: u64 = rng.random();
                let objective = |theta: &[f64]| -> Result<f64> {
                    let p = policy.with_theta(ParamVector::new(theta.to_vec())?)?;
                    let mut r = ChaCha8Rng::seed_from_u64(crn);
                    let episodes = mdp.sample_episodes(&p, config.batch_size, &mut r)?;
                    Ok(episodes.iter().map(|e| e.discounted_return(gamma)).sum::<f64>() / episodes.len() as f64)
                };
                Some(finite_difference_gradient(objective, &state.theta, FdStep::Absolute(config.fd_delta))?.gradient)
            }
            Method::Episodic => {
                let dist = SearchDistribution::isotropic(state.theta.clone(), config.search_std)?;
                Some(episodic_search_gradient(mdp, &dist, &policy, config.batch_size, &mut rng)?.gradient)
            }
            Method::Reinforce => Some(reinforce_gradient(mdp, &policy, config.batch_size, None, &mut rng)?.gradient),
            Method::ReinforceOptimalBaseline => {
                Some(reinforce_with_optimal_baseline(mdp, &policy, config.batch_size, &mut rng)?.gradient)
            }
            Method::ActorCriticBellman => {
                let episodes = mdp.sample_episodes(&policy, config.batch_size, &mut rng)?;
                let transitions: Vec<_> = episodes.iter().flat_map(|e| e.transitions()).collect();
                let fit = if transitions.is_empty() {
                    None
                } else {
                    Some(fit_advantage_bellman(&transitions, &policy, &critic_features, gamma, BELLMAN_RIDGE)?)
                };
                let q = |s, a| fit.as_ref().map_or(0.0, |f| f.advantage(&policy, s, a));
                Some(likelihood_ratio_from_episodes(&episodes, &policy, gamma, q)?.gradient)
            }
            Method::Npg => {
                state = npg_iterate(mdp, &policy, state, &npg, &mut rng)?;
                None
            }
            Method::Enac => {
                let episodes = mdp.sample_episodes(&policy, config.batch_size, &mut rng)?;
                state = enac_update(&episodes, &policy, gamma, state)?.0;
                None
            }
        };
        if let Some(direction) = direction {
            state = state.advance(&direction, j)?;
        }
        let grad_norm = state.history.last().map_or(0.0, |h| h.grad_norm);
        policy = policy.with_theta(state.theta.clone())?;
        records.push(RunRecord {
            method: config.method,
            seed,
            iteration,
            j,
            grad_norm,
            wall_ms: if timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 },
        });
    }
    Ok(records)
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the records as CSV; a partially written file is removed on error.
pub fn write_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let result = (|| -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(CSV_HEADER)?;
        for r in records {
            writer.write_record([
                r.method.name().to_string(),
                r.seed.to_string(),
                r.iteration.to_string(),
                float(r.j),
                float(r.grad_norm),
                float(r.wall_ms),
            ])?;
        }
        writer.flush()?;
        Ok(())
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(path);
    }
    result
}

/// Mean and standard error (sample std / √n) of per-seed values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Zero when `n < 2`.
    pub standard_error: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let standard_error = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Summary { n, mean, standard_error }
    }
}

/// Summary of J at each seed's last logged iteration.
pub fn final_j_summary(records: &[RunRecord]) -> Option<Summary> {
    let mut finals: Vec<(u64, usize, f64)> = Vec::new();
    for r in records {
        match finals.iter_mut().find(|f| f.0 == r.seed) {
            Some(f) if r.iteration > f.1 => *f = (r.seed, r.iteration, r.j),
            Some(_) => {}
            None => finals.push((r.seed, r.iteration, r.j)),
        }
    }
    if finals.is_empty() {
        return None;
    }
    Some(Summary::of(&finals.iter().map(|f| f.2).collect::<Vec<_>>()))
}
