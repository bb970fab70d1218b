//! Sampling-based policy-gradient estimators.
//!
//! Every estimator averages independent per-episode (or per-perturbation)
//! contributions in a fixed order, so identical seeds give bitwise-identical
//! estimates. Step-t terms are weighted by γᵗ, which makes the sampled
//! estimators target the gradient of the discounted objective.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::mdp::{exact_expected_return, PolicyMatrix, TabularMdp, Trajectory};
use crate::policy::{DifferentiablePolicy, GibbsPolicy, ParamVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Exact,
    FiniteDifference,
    EpisodicSearch,
    Reinforce,
    ReinforceOptimalBaseline,
    LikelihoodRatio,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Exact => "exact",
            EstimatorKind::FiniteDifference => "finite-difference",
            EstimatorKind::EpisodicSearch => "episodic-search",
            EstimatorKind::Reinforce => "reinforce",
            EstimatorKind::ReinforceOptimalBaseline => "reinforce-optimal-baseline",
            EstimatorKind::LikelihoodRatio => "likelihood-ratio",
        })
    }
}

/// A gradient vector with sampling diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub gradient: Vec<f64>,
    /// Number of averaged contributions; zero for exact oracles.
    pub sample_count: usize,
    /// Unbiased empirical variance of the per-sample contributions.
    pub component_variance: Vec<f64>,
    pub method: EstimatorKind,
}

impl GradientEstimate {
    pub(crate) fn exact(gradient: Vec<f64>, method: EstimatorKind) -> Self {
        let dim = gradient.len();
        GradientEstimate { gradient, sample_count: 0, component_variance: vec![0.0; dim], method }
    }

    /// Mean and variance of equally weighted contributions, summed in order.
    pub(crate) fn from_contributions(dim: usize, contributions: &[Vec<f64>], method: EstimatorKind) -> Self {
        let n = contributions.len();
        let mut mean = vec![0.0; dim];
        for c in contributions {
            for (m, x) in mean.iter_mut().zip(c) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; dim];
        if n > 1 {
            for c in contributions {
                for ((v, x), m) in var.iter_mut().zip(c).zip(&mean) {
                    *v += (x - m) * (x - m);
                }
            }
            var.iter_mut().for_each(|v| *v /= (n - 1) as f64);
        }
        GradientEstimate { gradient: mean, sample_count: n, component_variance: var, method }
    }

    /// Per-component standard error `sqrt(var / n)` (zero for exact oracles).
    pub fn standard_error(&self) -> Vec<f64> {
        if self.sample_count == 0 {
            return vec![0.0; self.gradient.len()];
        }
        self.component_variance.iter().map(|v| (v / self.sample_count as f64).sqrt()).collect()
    }

    pub fn variance_trace(&self) -> f64 {
        self.component_variance.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        crate::norm(&self.gradient)
    }
}

/// Perturbation size for [`finite_difference_gradient`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FdStep {
    /// The same δ for every coordinate.
    Absolute(f64),
    /// δ_i = h·max(1, |θ_i|).
    Scaled(f64),
}

impl Default for FdStep {
    fn default() -> Self {
        FdStep::Scaled(1e-5)
    }
}

/// Symmetric differences `(J(θ + δe_i) − J(θ − δe_i)) / 2δ` for every coordinate.
pub fn finite_difference_gradient<F>(mut objective: F, theta: &ParamVector, step: FdStep) -> Result<GradientEstimate>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let h = match step {
        FdStep::Absolute(h) | FdStep::Scaled(h) => h,
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    let mut eval = |point: &[f64]| -> Result<f64> {
        let value = objective(point)?;
        if !value.is_finite() {
            return Err(Error::NonFinite { what: "objective value".into(), theta: point.to_vec() });
        }
        Ok(value)
    };
    let mut point = theta.as_slice().to_vec();
    let mut gradient = Vec::with_capacity(theta.dim());
    for i in 0..theta.dim() {
        let delta = match step {
            FdStep::Absolute(h) => h,
            FdStep::Scaled(h) => h * theta[i].abs().max(1.0),
        };
        point[i] = theta[i] + delta;
        let plus = eval(&point)?;
        point[i] = theta[i] - delta;
        let minus = eval(&point)?;
        point[i] = theta[i];
        gradient.push((plus - minus) / (2.0 * delta));
    }
    let dim = gradient.len();
    Ok(GradientEstimate {
        gradient,
        sample_count: 2 * dim,
        component_variance: vec![0.0; dim],
        method: EstimatorKind::FiniteDifference,
    })
}

/// θ ↦ exact J(θ) for a policy class on a known MDP.
pub fn exact_return_objective<'a, P: DifferentiablePolicy>(
    mdp: &'a TabularMdp,
    policy: &'a P,
) -> impl FnMut(&[f64]) -> Result<f64> + 'a {
    move |theta: &[f64]| {
        let p = policy.with_theta(ParamVector::new(theta.to_vec())?)?;
        exact_expected_return(mdp, &PolicyMatrix::from_policy(mdp, &p)?)
    }
}

/// Diagonal Gaussian search distribution p(θ|ω) over policy parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchDistribution {
    mean: ParamVector,
    std: Vec<f64>,
}

impl SearchDistribution {
    pub fn new(mean: ParamVector, std: Vec<f64>) -> Result<Self> {
        if std.len() != mean.dim() {
            return Err(Error::InvalidArgument(format!(
                "search std has length {}, mean has {}",
                std.len(),
                mean.dim()
            )));
        }
        if let Some(s) = std.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!("search std must be positive, got {s}")));
        }
        Ok(SearchDistribution { mean, std })
    }

    /// Isotropic distribution with a shared standard deviation.
    pub fn isotropic(mean: ParamVector, std: f64) -> Result<Self> {
        let dim = mean.dim();
        SearchDistribution::new(mean, vec![std; dim])
    }

    pub fn mean(&self) -> &ParamVector {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let values = self
            .mean
            .iter()
            .zip(&self.std)
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(rng);
                m + s * z
            })
            .collect();
        ParamVector::new(values).expect("finite mean and std give finite samples")
    }

    /// ∇_mean log p(θ|ω) = (θ − mean) / std².
    pub fn mean_score(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().zip(self.mean.iter()).zip(&self.std).map(|((t, m), s)| (t - m) / (s * s)).collect()
    }
}

/// Black-box gradient of `E_{θ~p(θ|ω)}[ℛ]` with respect to the search mean.
///
/// Each sampled θ acts greedily (the highest-logit action of `template`
/// evaluated at θ) for one rollout.
pub fn episodic_search_gradient<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    dist: &SearchDistribution,
    template: &GibbsPolicy,
    num_samples: usize,
    rng: &mut R,
) -> Result<GradientEstimate> {
    if num_samples < 2 {
        return Err(Error::InvalidArgument("episodic search needs at least 2 samples".into()));
    }
    let contributions = (0..num_samples)
        .map(|_| {
            let theta = dist.sample(rng);
            let actor = template.with_theta(theta.clone())?.greedy();
            let ret = mdp.sample_trajectory(&actor, rng)?.discounted_return(mdp.discount());
            Ok(dist.mean_score(&theta).into_iter().map(|g| g * ret).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(GradientEstimate::from_contributions(dist.mean().dim(), &contributions, EstimatorKind::EpisodicSearch))
}

/// REINFORCE over given episodes: per episode Σ_t ∇log π(a_t|s_t)·(γᵗQ̂_t − b),
/// with Q̂_t the return-to-go and `b` a per-component baseline.
pub fn reinforce_from_episodes<P: DifferentiablePolicy>(
    episodes: &[Trajectory],
    policy: &P,
    discount: f64,
    baseline: Option<&[f64]>,
) -> Result<GradientEstimate> {
    if episodes.is_empty() {
        return Err(Error::InvalidArgument("REINFORCE needs at least one episode".into()));
    }
    let dim = policy.param_dim();
    if let Some(b) = baseline {
        if b.len() != dim {
            return Err(Error::InvalidArgument(format!("baseline has length {}, expected {dim}", b.len())));
        }
    }
    let contributions: Vec<Vec<f64>> =
        episodes.iter().map(|ep| episode_contribution(ep, policy, discount, baseline)).collect();
    let kind = if baseline.is_some() { EstimatorKind::ReinforceOptimalBaseline } else { EstimatorKind::Reinforce };
    Ok(GradientEstimate::from_contributions(dim, &contributions, kind))
}

fn episode_contribution<P: DifferentiablePolicy>(
    ep: &Trajectory,
    policy: &P,
    discount: f64,
    baseline: Option<&[f64]>,
) -> Vec<f64> {
    let mut c = vec![0.0; policy.param_dim()];
    let mut weight = 1.0;
    for (step, q) in ep.steps.iter().zip(ep.returns_to_go(discount)) {
        let target = weight * q;
        let score = policy.score(step.state, step.action);
        match baseline {
            Some(b) => {
                for ((ci, g), bi) in c.iter_mut().zip(score).zip(b) {
                    *ci += g * (target - bi);
                }
            }
            None => {
                for (ci, g) in c.iter_mut().zip(score) {
                    *ci += g * target;
                }
            }
        }
        weight *= discount;
    }
    c
}

/// REINFORCE where episode k is baselined with the optimal baseline
/// estimated from the other episodes of the batch. The baseline is then
/// independent of the episode it corrects, so the estimate stays unbiased.
pub fn reinforce_optimal_baseline_from_episodes<P: DifferentiablePolicy>(
    episodes: &[Trajectory],
    policy: &P,
    discount: f64,
) -> Result<GradientEstimate> {
    if episodes.len() < 2 {
        return Err(Error::InvalidArgument("optimal baseline needs at least 2 episodes".into()));
    }
    let moments = BaselineMoments::new(episodes, policy, discount);
    let dim = policy.param_dim();
    let mut b = vec![0.0; dim];
    let contributions: Vec<Vec<f64>> = episodes
        .iter()
        .enumerate()
        .map(|(k, ep)| {
            moments.leave_one_out(k, &mut b);
            episode_contribution(ep, policy, discount, Some(&b))
        })
        .collect();
    Ok(GradientEstimate::from_contributions(dim, &contributions, EstimatorKind::ReinforceOptimalBaseline))
}

/// Samples `num_episodes` rollouts and applies [`reinforce_from_episodes`].
pub fn reinforce_gradient<P, R>(
    mdp: &TabularMdp,
    policy: &P,
    num_episodes: usize,
    baseline: Option<&[f64]>,
    rng: &mut R,
) -> Result<GradientEstimate>
where
    P: DifferentiablePolicy,
    R: Rng + ?Sized,
{
    if num_episodes == 0 {
        return Err(Error::InvalidArgument("REINFORCE needs at least one episode".into()));
    }
    let episodes = mdp.sample_episodes(policy, num_episodes, rng)?;
    reinforce_from_episodes(&episodes, policy, mdp.discount(), baseline)
}

/// Samples `num_episodes` rollouts and applies
/// [`reinforce_optimal_baseline_from_episodes`].
pub fn reinforce_with_optimal_baseline<P, R>(
    mdp: &TabularMdp,
    policy: &P,
    num_episodes: usize,
    rng: &mut R,
) -> Result<GradientEstimate>
where
    P: DifferentiablePolicy,
    R: Rng + ?Sized,
{
    if num_episodes < 2 {
        return Err(Error::InvalidArgument("optimal baseline needs at least 2 episodes".into()));
    }
    let episodes = mdp.sample_episodes(policy, num_episodes, rng)?;
    reinforce_optimal_baseline_from_episodes(&episodes, policy, mdp.discount())
}

/// Per-component variance-minimizing baseline
/// `b_j = ⟨(Σ_t ∂_j log π)² ℛ⟩ / ⟨(Σ_t ∂_j log π)²⟩`, zero where the
/// denominator vanishes.
pub fn optimal_baseline<P: DifferentiablePolicy>(
    episodes: &[Trajectory],
    policy: &P,
    discount: f64,
) -> Result<Vec<f64>> {
    if episodes.len() < 2 {
        return Err(Error::InvalidArgument("optimal baseline needs at least 2 episodes".into()));
    }
    let m = BaselineMoments::new(episodes, policy, discount);
    Ok(m.num.iter().zip(&m.den).map(|(n, d)| if *d > 0.0 { n / d } else { 0.0 }).collect())
}

/// Sums behind the optimal baseline, kept per episode for leave-one-out use.
struct BaselineMoments {
    num: Vec<f64>,
    den: Vec<f64>,
    /// (Σ_t ∇log π)² per episode, flattened `[k·dim + j]`.
    squares: Vec<f64>,
    returns: Vec<f64>,
}

impl BaselineMoments {
    fn new<P: DifferentiablePolicy>(episodes: &[Trajectory], policy: &P, discount: f64) -> Self {
        let dim = policy.param_dim();
        let mut num = vec![0.0; dim];
        let mut den = vec![0.0; dim];
        let mut squares = Vec::with_capacity(episodes.len() * dim);
        let mut returns = Vec::with_capacity(episodes.len());
        let mut total = vec![0.0; dim];
        for ep in episodes {
            total.iter_mut().for_each(|x| *x = 0.0);
            for step in &ep.steps {
                for (t, g) in total.iter_mut().zip(policy.score(step.state, step.action)) {
                    *t += g;
                }
            }
            let ret = ep.discounted_return(discount);
            for ((n, d), t) in num.iter_mut().zip(den.iter_mut()).zip(&total) {
                let sq = t * t;
                *n += sq * ret;
                *d += sq;
                squares.push(sq);
            }
            returns.push(ret);
        }
        BaselineMoments { num, den, squares, returns }
    }

    /// The baseline computed without episode `k`, written into `out`.
    fn leave_one_out(&self, k: usize, out: &mut [f64]) {
        let dim = out.len();
        let ret = self.returns[k];
        for (j, b) in out.iter_mut().enumerate() {
            let sq = self.squares[k * dim + j];
            let d = self.den[j] - sq;
            // below this the remainder is rounding noise of a zero sum
            *b = if d > 1e-12 * self.den[j] { (self.num[j] - sq * ret) / d } else { 0.0 };
        }
    }
}

/// `E_{s~μ_π, a~π}[∇log π(a|s)·Q(s, a)]` from given episodes, with step t
/// weighted by γᵗ.
pub fn likelihood_ratio_from_episodes<P, Q>(
    episodes: &[Trajectory],
    policy: &P,
    discount: f64,
    mut q_provider: Q,
) -> Result<GradientEstimate>
where
    P: DifferentiablePolicy,
    Q: FnMut(usize, usize) -> f64,
{
    if episodes.is_empty() {
        return Err(Error::InvalidArgument("likelihood-ratio gradient needs at least one episode".into()));
    }
    let dim = policy.param_dim();
    let contributions = episodes
        .iter()
        .map(|ep| {
            let mut c = vec![0.0; dim];
            let mut weight = 1.0;
            for step in &ep.steps {
                let q = q_provider(step.state, step.action);
                if !q.is_finite() {
                    return Err(Error::NonFinite {
                        what: format!("Q value at (s={}, a={})", step.state, step.action),
                        theta: policy.theta().as_slice().to_vec(),
                    });
                }
                for (ci, g) in c.iter_mut().zip(policy.score(step.state, step.action)) {
                    *ci += weight * g * q;
                }
                weight *= discount;
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GradientEstimate::from_contributions(dim, &contributions, EstimatorKind::LikelihoodRatio))
}

/// Samples `num_samples` rollouts and applies [`likelihood_ratio_from_episodes`].
pub fn likelihood_ratio_gradient<P, Q, R>(
    mdp: &TabularMdp,
    policy: &P,
    q_provider: Q,
    num_samples: usize,
    rng: &mut R,
) -> Result<GradientEstimate>
where
    P: DifferentiablePolicy,
    Q: FnMut(usize, usize) -> f64,
    R: Rng + ?Sized,
{
    let episodes = mdp.sample_episodes(policy, num_samples, rng)?;
    likelihood_ratio_from_episodes(&episodes, policy, mdp.discount(), q_provider)
}
