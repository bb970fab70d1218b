//! Critics: compatible advantage fits, TD(0) value learning, Monte-Carlo
//! Q-estimates and the least-squares advantage Bellman system.
//!
//! The advantage weights `w` are never trained by TD on the advantage
//! itself; they come either from the exact weighted least-squares fit or
//! from the joint (w, v) Bellman system.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{solve_general, solve_symmetric};
use crate::mdp::{Occupancy, PolicyMatrix, TabularMdp, Trajectory, Transition};
use crate::policy::{dot, DifferentiablePolicy, ParamVector, StateFeatures};
use crate::schedule::StepSchedule;

/// Default ridge on the advantage Bellman system.
pub const BELLMAN_RIDGE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct CriticFit {
    /// Compatible advantage weights: f_w(s, a) = ∇log π(a|s)ᵀw.
    pub w: Vec<f64>,
    /// Value weights: V̂(s) = φ(s)ᵀv.
    pub v: Vec<f64>,
    pub residual_norm: f64,
    pub sample_count: usize,
    /// The undamped system was singular; the reported solution is the
    /// minimum-norm (or ridge-regularized) one.
    pub rank_deficient: bool,
}

impl CriticFit {
    /// f_w(s, a)
    pub fn advantage<P: DifferentiablePolicy>(&self, policy: &P, state: usize, action: usize) -> f64 {
        dot(policy.score(state, action), &self.w)
    }
}

/// ∇_θ log π(a|s), the regressors of the compatible approximator.
pub fn compatible_features<P: DifferentiablePolicy>(policy: &P, state: usize, action: usize) -> Result<Vec<f64>> {
    if state >= policy.num_states() || action >= policy.num_actions() {
        return Err(Error::InvalidArgument(format!("(s={state}, a={action}) out of range")));
    }
    Ok(policy.score(state, action).to_vec())
}

/// Normal equations `M w = c` of the exact compatible fit:
/// `M = Σ d(s)π(a|s) ∇log π ∇log πᵀ` and `c = Σ d(s)π(a|s) ∇log π · A_π(s, a)`.
pub fn compatible_normal_equations<P: DifferentiablePolicy>(
    mdp: &TabularMdp,
    policy: &P,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let pi = PolicyMatrix::from_policy(mdp, policy)?;
    let occ = Occupancy::compute(mdp, &pi)?;
    let dim = policy.param_dim();
    let na = mdp.num_actions();
    let mut m = DMatrix::zeros(dim, dim);
    let mut c = vec![0.0; dim];
    occ.for_each_weighted(&pi, |epoch, s, a, weight| {
        let g = policy.score(s, a);
        let adv = epoch.q[s * na + a] - epoch.v[s];
        for i in 0..dim {
            c[i] += weight * g[i] * adv;
            for j in 0..dim {
                m[(i, j)] += weight * g[i] * g[j];
            }
        }
    });
    Ok((m, c))
}

/// Weighted least squares `min_w Σ d(s)π(a|s)(∇log πᵀw − A_π(s, a))²` using
/// exact d, π and A_π. `v` holds the exact initial-stage values V_π (one-hot
/// state features).
pub fn fit_compatible_advantage_exact<P: DifferentiablePolicy>(mdp: &TabularMdp, policy: &P) -> Result<CriticFit> {
    let (m, c) = compatible_normal_equations(mdp, policy)?;
    let solution = solve_symmetric(&m, &c, 0.0);
    let w = solution.x;

    let pi = PolicyMatrix::from_policy(mdp, policy)?;
    let occ = Occupancy::compute(mdp, &pi)?;
    let na = mdp.num_actions();
    let mut sq = 0.0;
    occ.for_each_weighted(&pi, |epoch, s, a, weight| {
        let r = dot(policy.score(s, a), &w) - (epoch.q[s * na + a] - epoch.v[s]);
        sq += weight * r * r;
    });
    Ok(CriticFit {
        w,
        v: occ.epochs[0].v.clone(),
        residual_norm: sq.sqrt(),
        sample_count: 0,
        rank_deficient: solution.rank_deficient,
    })
}

/// δ = r + γV̂(s') − V̂(s) for one transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TdError {
    pub value: f64,
    pub state: usize,
    pub next_state: usize,
    pub reward: f64,
}

/// One TD(0) step: `v ← v + α·δ·φ(s)`.
pub fn td0_value_update(
    v: &ParamVector,
    transition: &Transition,
    features: &StateFeatures,
    step_size: f64,
    discount: f64,
) -> Result<(ParamVector, TdError)> {
    if !(step_size > 0.0 && step_size.is_finite()) {
        return Err(Error::InvalidArgument(format!("TD step size must be positive, got {step_size}")));
    }
    if v.dim() != features.dimension() {
        return Err(Error::InvalidArgument(format!(
            "value weights have dimension {}, features have {}",
            v.dim(),
            features.dimension()
        )));
    }
    let n = features.num_states();
    if transition.state >= n || transition.next_state >= n {
        return Err(Error::InvalidArgument("transition state out of range".into()));
    }
    let delta = transition.reward + discount * features.value(transition.next_state, v)
        - features.value(transition.state, v);
    let updated = v.step(features.evaluate(transition.state), step_size * delta)?;
    let err = TdError {
        value: delta,
        state: transition.state,
        next_state: transition.next_state,
        reward: transition.reward,
    };
    Ok((updated, err))
}

/// Runs on-policy TD(0) for `num_transitions` steps starting from `v = 0`,
/// rolling out fresh episodes as needed. Step `k` uses `schedule.step_size(k)`.
pub fn td0_evaluate<P, R>(
    mdp: &TabularMdp,
    policy: &P,
    features: &StateFeatures,
    schedule: &StepSchedule,
    num_transitions: usize,
    rng: &mut R,
) -> Result<ParamVector>
where
    P: DifferentiablePolicy,
    R: Rng + ?Sized,
{
    schedule.validate()?;
    let mut v = ParamVector::zeros(features.dimension());
    let mut k = 0;
    while k < num_transitions {
        let episode = mdp.sample_trajectory(policy, rng)?;
        for tr in episode.transitions() {
            if k == num_transitions {
                break;
            }
            v = td0_value_update(&v, &tr, features, schedule.step_size(k), mdp.discount())?.0;
            k += 1;
        }
    }
    Ok(v)
}

/// First-visit Monte-Carlo statistics for one (s, a) pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QEstimate {
    pub mean: f64,
    pub count: usize,
    /// Unbiased sample variance of the first-visit returns (0 for one visit).
    pub variance: f64,
}

impl QEstimate {
    pub fn standard_error(&self) -> f64 {
        (self.variance / self.count as f64).sqrt()
    }
}

/// Averages first-visit returns-to-go per (s, a). Unvisited pairs are absent.
pub fn monte_carlo_q(episodes: &[Trajectory], discount: f64) -> Result<BTreeMap<(usize, usize), QEstimate>> {
    if episodes.is_empty() {
        return Err(Error::InvalidArgument("Monte-Carlo Q needs at least one episode".into()));
    }
    let mut samples: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for ep in episodes {
        let to_go = ep.returns_to_go(discount);
        let mut seen = std::collections::BTreeSet::new();
        for (step, g) in ep.steps.iter().zip(to_go) {
            if seen.insert((step.state, step.action)) {
                samples.entry((step.state, step.action)).or_default().push(g);
            }
        }
    }
    Ok(samples
        .into_iter()
        .map(|(key, xs)| {
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let variance = if n > 1 {
                xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            (key, QEstimate { mean, count: n, variance })
        })
        .collect())
}

/// Joint least-squares fit of the advantage Bellman equation
/// `∇log π(a_t|s_t)ᵀw + φ(s_t)ᵀv = r_t + γφ(s_{t+1})ᵀv + ε`.
///
/// The noise ε is correlated with φ(s_{t+1}), so the system is solved in its
/// instrumental (LSTD-Q(0)) form with instruments `[∇log π; φ(s_t)]`, which
/// keeps the solution consistent. `ridge` damps the (averaged) system; it
/// pins directions the data leave undetermined, such as value weights of
/// states only ever reached as successors.
pub fn fit_advantage_bellman<P: DifferentiablePolicy>(
    transitions: &[Transition],
    policy: &P,
    features: &StateFeatures,
    discount: f64,
    ridge: f64,
) -> Result<CriticFit> {
    if transitions.is_empty() {
        return Err(Error::InvalidArgument("advantage Bellman fit needs transitions".into()));
    }
    if features.num_states() != policy.num_states() {
        return Err(Error::InvalidArgument(format!(
            "state features cover {} states, policy covers {}",
            features.num_states(),
            policy.num_states()
        )));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidArgument(format!("ridge must be non-negative, got {ridge}")));
    }
    let dw = policy.param_dim();
    let dv = features.dimension();
    let dim = dw + dv;
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = vec![0.0; dim];
    let mut z = vec![0.0; dim];
    let mut x = vec![0.0; dim];
    for tr in transitions {
        if tr.state >= policy.num_states() || tr.next_state >= policy.num_states() || tr.action >= policy.num_actions()
        {
            return Err(Error::InvalidArgument("transition index out of range".into()));
        }
        let g = policy.score(tr.state, tr.action);
        let phi = features.evaluate(tr.state);
        let phi_next = features.evaluate(tr.next_state);
        z[..dw].copy_from_slice(g);
        x[..dw].copy_from_slice(g);
        for i in 0..dv {
            z[dw + i] = phi[i];
            x[dw + i] = phi[i] - discount * phi_next[i];
        }
        for i in 0..dim {
            if z[i] == 0.0 {
                continue;
            }
            b[i] += z[i] * tr.reward;
            for j in 0..dim {
                a[(i, j)] += z[i] * x[j];
            }
        }
    }
    let n = transitions.len() as f64;
    a /= n;
    b.iter_mut().for_each(|v| *v /= n);
    let solution = solve_general(&a, &b, ridge).ok_or(Error::Singular { context: "advantage Bellman system" })?;
    let (w, v) = solution.x.split_at(dw);

    let sq: f64 = transitions
        .iter()
        .map(|tr| {
            let r = dot(policy.score(tr.state, tr.action), w) + features.value(tr.state, v)
                - tr.reward
                - discount * features.value(tr.next_state, v);
            r * r
        })
        .sum();
    Ok(CriticFit {
        w: w.to_vec(),
        v: v.to_vec(),
        residual_norm: (sq / n).sqrt(),
        sample_count: transitions.len(),
        rank_deficient: solution.rank_deficient,
    })
}
