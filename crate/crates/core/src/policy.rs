//! Parameterized policies and their score functions.
//!
//! Discrete policies precompute their full action-probability table (and,
//! for [`GibbsPolicy`], the score table) at construction, since every state
//! space handled here is small enough to enumerate.

use std::ops::Deref;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Shifted logits below `-LOGIT_CLAMP` are raised to it before exponentiation.
pub const LOGIT_CLAMP: f64 = 30.0;

/// A finite, non-empty real parameter vector (θ, ω, w or v).
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("parameter vector must be non-empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "parameter {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(ParamVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "parameter dimension must be positive");
        ParamVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `self + scale·direction`, rejecting non-finite results.
    pub fn step(&self, direction: &[f64], scale: f64) -> Result<Self> {
        if direction.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "step direction has length {}, expected {}",
                direction.len(),
                self.dim()
            )));
        }
        ParamVector::new(self.0.iter().zip(direction).map(|(t, d)| t + scale * d).collect())
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// State-action features φ(s, a) stored as a dense table.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    num_states: usize,
    num_actions: usize,
    dimension: usize,
    table: Vec<f64>,
}

impl FeatureMap {
    /// One indicator per (s, a) pair: dimension `S·A`.
    pub fn one_hot(num_states: usize, num_actions: usize) -> Result<Self> {
        let dim = num_states * num_actions;
        Self::from_fn(num_states, num_actions, dim, |s, a, out| out[s * num_actions + a] = 1.0)
    }

    /// One indicator per (s, a) pair with a > 0; action 0 is the reference
    /// action with logit fixed at zero. Dimension `S·(A−1)`.
    ///
    /// Unlike [`FeatureMap::one_hot`], this parameterization is identifiable,
    /// so the Fisher matrix of an interior Gibbs policy is nonsingular.
    pub fn one_hot_reduced(num_states: usize, num_actions: usize) -> Result<Self> {
        if num_actions < 2 {
            return Err(Error::InvalidArgument(
                "reduced one-hot features need at least 2 actions".into(),
            ));
        }
        let per_state = num_actions - 1;
        Self::from_fn(num_states, num_actions, num_states * per_state, |s, a, out| {
            if a > 0 {
                out[s * per_state + a - 1] = 1.0;
            }
        })
    }

    /// Builds a feature table by calling `fill(s, a, out)` with a zeroed
    /// output slice of length `dimension` for every pair.
    pub fn from_fn<F>(num_states: usize, num_actions: usize, dimension: usize, mut fill: F) -> Result<Self>
    where
        F: FnMut(usize, usize, &mut [f64]),
    {
        if num_states == 0 || num_actions == 0 || dimension == 0 {
            return Err(Error::InvalidArgument(
                "feature map needs positive state, action and feature counts".into(),
            ));
        }
        let mut table = vec![0.0; num_states * num_actions * dimension];
        for s in 0..num_states {
            for a in 0..num_actions {
                let start = (s * num_actions + a) * dimension;
                fill(s, a, &mut table[start..start + dimension]);
            }
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("feature map contains non-finite values".into()));
        }
        Ok(FeatureMap { num_states, num_actions, dimension, table })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn evaluate(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.num_actions + action) * self.dimension;
        &self.table[start..start + self.dimension]
    }
}

/// State features φ(s), used for value functions and Gaussian means.
#[derive(Clone, Debug, PartialEq)]
pub struct StateFeatures {
    num_states: usize,
    dimension: usize,
    table: Vec<f64>,
}

impl StateFeatures {
    pub fn one_hot(num_states: usize) -> Result<Self> {
        let mut table = vec![0.0; num_states * num_states];
        for s in 0..num_states {
            table[s * num_states + s] = 1.0;
        }
        Self::from_table(num_states, num_states, table)
    }

    /// Row-major table of `num_states × dimension` values.
    pub fn from_table(num_states: usize, dimension: usize, table: Vec<f64>) -> Result<Self> {
        if num_states == 0 || dimension == 0 {
            return Err(Error::InvalidArgument("state features need positive sizes".into()));
        }
        if table.len() != num_states * dimension {
            return Err(Error::InvalidArgument(format!(
                "state feature table has {} entries, expected {}",
                table.len(),
                num_states * dimension
            )));
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("state features contain non-finite values".into()));
        }
        Ok(StateFeatures { num_states, dimension, table })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn evaluate(&self, state: usize) -> &[f64] {
        &self.table[state * self.dimension..(state + 1) * self.dimension]
    }

    /// φ(s)ᵀv
    pub fn value(&self, state: usize, v: &[f64]) -> f64 {
        dot(self.evaluate(state), v)
    }
}

/// A policy over a finite action set with a tabulated distribution per state.
pub trait DiscretePolicy {
    fn num_states(&self) -> usize;

    fn num_actions(&self) -> usize;

    /// π(·|s). Panics if `state` is out of range.
    fn probs(&self, state: usize) -> &[f64];

    fn sample_action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        sample_index(self.probs(state), rng)
    }
}

/// A discrete policy with parameters θ and an analytic score ∇_θ log π(a|s).
pub trait DifferentiablePolicy: DiscretePolicy + Sized {
    fn theta(&self) -> &ParamVector;

    fn param_dim(&self) -> usize {
        self.theta().dim()
    }

    /// ∇_θ log π(a|s). Panics if `state` or `action` is out of range.
    fn score(&self, state: usize, action: usize) -> &[f64];

    /// The same policy class evaluated at different parameters.
    fn with_theta(&self, theta: ParamVector) -> Result<Self>;
}

/// Gibbs (softmax) policy π(a|s) ∝ exp(φ(s,a)ᵀθ).
#[derive(Clone, Debug)]
pub struct GibbsPolicy {
    features: Arc<FeatureMap>,
    theta: ParamVector,
    probs: Vec<f64>,
    scores: Vec<f64>,
}

impl GibbsPolicy {
    pub fn new(features: Arc<FeatureMap>, theta: ParamVector) -> Result<Self> {
        if theta.dim() != features.dimension() {
            return Err(Error::InvalidParameter(format!(
                "theta has dimension {}, features have {}",
                theta.dim(),
                features.dimension()
            )));
        }
        let (ns, na, dim) = (features.num_states(), features.num_actions(), features.dimension());
        let mut probs = vec![0.0; ns * na];
        let mut scores = vec![0.0; ns * na * dim];
        let mut logits = vec![0.0; na];
        let mut mean_feature = vec![0.0; dim];
        for s in 0..ns {
            for (a, z) in logits.iter_mut().enumerate() {
                *z = dot(features.evaluate(s, a), &theta);
            }
            if logits.iter().any(|z| !z.is_finite()) {
                return Err(Error::InvalidParameter(format!("non-finite logit in state {s}")));
            }
            let row = &mut probs[s * na..(s + 1) * na];
            softmax_into(&logits, row);

            mean_feature.iter_mut().for_each(|m| *m = 0.0);
            for (a, &p) in row.iter().enumerate() {
                for (m, f) in mean_feature.iter_mut().zip(features.evaluate(s, a)) {
                    *m += p * f;
                }
            }
            for a in 0..na {
                let start = (s * na + a) * dim;
                for ((g, f), m) in scores[start..start + dim]
                    .iter_mut()
                    .zip(features.evaluate(s, a))
                    .zip(&mean_feature)
                {
                    *g = f - m;
                }
            }
        }
        if scores.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidParameter("non-finite score".into()));
        }
        Ok(GibbsPolicy { features, theta, probs, scores })
    }

    /// Gibbs policy with one-hot (s, a) features at θ = 0 (uniform).
    pub fn uniform_one_hot(num_states: usize, num_actions: usize) -> Result<Self> {
        let features = Arc::new(FeatureMap::one_hot(num_states, num_actions)?);
        let dim = features.dimension();
        GibbsPolicy::new(features, ParamVector::zeros(dim))
    }

    pub fn features(&self) -> &Arc<FeatureMap> {
        &self.features
    }

    /// Range-checked π(·|s).
    pub fn action_distribution(&self, state: usize) -> Result<&[f64]> {
        self.check_state(state)?;
        Ok(self.probs(state))
    }

    /// Range-checked ∇_θ log π(a|s) = φ(s,a) − Σ_b π(b|s)φ(s,b).
    pub fn log_prob_gradient(&self, state: usize, action: usize) -> Result<&[f64]> {
        self.check_state(state)?;
        if action >= self.num_actions() {
            return Err(Error::InvalidArgument(format!("action {action} out of range")));
        }
        Ok(self.score(state, action))
    }

    /// Unclamped logits φ(s,·)ᵀθ.
    pub fn logits(&self, state: usize) -> Vec<f64> {
        (0..self.num_actions())
            .map(|a| dot(self.features.evaluate(state, a), &self.theta))
            .collect()
    }

    /// Deterministic policy taking the highest-logit action (lowest index on ties).
    pub fn greedy(&self) -> crate::mdp::PolicyMatrix {
        let ns = self.num_states();
        let actions = (0..ns)
            .map(|s| {
                let logits = self.logits(s);
                let mut best = 0;
                for (a, &z) in logits.iter().enumerate() {
                    if z > logits[best] {
                        best = a;
                    }
                }
                best
            })
            .collect::<Vec<_>>();
        crate::mdp::PolicyMatrix::deterministic(self.num_actions(), &actions)
            .expect("greedy actions are in range")
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.num_states() {
            return Err(Error::InvalidArgument(format!("state {state} out of range")));
        }
        Ok(())
    }
}

impl DiscretePolicy for GibbsPolicy {
    fn num_states(&self) -> usize {
        self.features.num_states()
    }

    fn num_actions(&self) -> usize {
        self.features.num_actions()
    }

    fn probs(&self, state: usize) -> &[f64] {
        let na = self.num_actions();
        &self.probs[state * na..(state + 1) * na]
    }
}

impl DifferentiablePolicy for GibbsPolicy {
    fn theta(&self) -> &ParamVector {
        &self.theta
    }

    fn score(&self, state: usize, action: usize) -> &[f64] {
        let dim = self.features.dimension();
        let start = (state * self.num_actions() + action) * dim;
        &self.scores[start..start + dim]
    }

    fn with_theta(&self, theta: ParamVector) -> Result<Self> {
        GibbsPolicy::new(Arc::clone(&self.features), theta)
    }
}

/// Gaussian policy a ~ 𝒩(φ(s)ᵀθ₁, θ₂²) over a scalar continuous action.
///
/// θ₂ is the standard deviation. It is an exploration hyperparameter and
/// excluded from the score unless `learn_std` is set.
#[derive(Clone, Debug)]
pub struct GaussianPolicy {
    features: Arc<StateFeatures>,
    theta1: ParamVector,
    theta2: f64,
    learn_std: bool,
}

impl GaussianPolicy {
    pub fn new(features: Arc<StateFeatures>, theta1: ParamVector, theta2: f64) -> Result<Self> {
        if theta1.dim() != features.dimension() {
            return Err(Error::InvalidParameter(format!(
                "theta1 has dimension {}, features have {}",
                theta1.dim(),
                features.dimension()
            )));
        }
        if !(theta2 > 0.0 && theta2.is_finite()) {
            return Err(Error::InvalidParameter(format!("theta2 must be positive, got {theta2}")));
        }
        Ok(GaussianPolicy { features, theta1, theta2, learn_std: false })
    }

    /// Include ∂/∂θ₂ as the last score component.
    pub fn learning_std(mut self, learn: bool) -> Self {
        self.learn_std = learn;
        self
    }

    pub fn theta1(&self) -> &ParamVector {
        &self.theta1
    }

    pub fn theta2(&self) -> f64 {
        self.theta2
    }

    pub fn param_dim(&self) -> usize {
        self.theta1.dim() + usize::from(self.learn_std)
    }

    pub fn mean(&self, state: usize) -> Result<f64> {
        if state >= self.features.num_states() {
            return Err(Error::InvalidArgument(format!("state {state} out of range")));
        }
        Ok(self.features.value(state, &self.theta1))
    }

    pub fn log_density(&self, state: usize, action: f64) -> Result<f64> {
        let z = (action - self.mean(state)?) / self.theta2;
        Ok(-0.5 * z * z - self.theta2.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())
    }

    /// ∇ log π(a|s) with respect to θ₁ (and θ₂ when learned).
    pub fn log_prob_gradient(&self, state: usize, action: f64) -> Result<Vec<f64>> {
        let diff = action - self.mean(state)?;
        let var = self.theta2 * self.theta2;
        let mut g: Vec<f64> = self.features.evaluate(state).iter().map(|f| diff * f / var).collect();
        if self.learn_std {
            g.push((diff * diff - var) / (var * self.theta2));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite Gaussian score".into()));
        }
        Ok(g)
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> Result<f64> {
        let normal = Normal::new(self.mean(state)?, self.theta2)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(normal.sample(rng))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Max-subtracted softmax with shifted logits clamped at `-LOGIT_CLAMP`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).max(-LOGIT_CLAMP).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}
