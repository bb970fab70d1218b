//! Finite MDPs: sampling and closed-form analysis.
//!
//! For an unbounded horizon the exact solvers use the stationary quantities
//! `V_π = (I − γP_π)⁻¹ r_π` and `μ_πᵀ = μ₀ᵀ(I − γP_π)⁻¹`. For a finite
//! horizon `T` they switch to the time-indexed recursion over `t < T`, which
//! is the quantity the sampler actually estimates.
//!
//! A state is terminal iff every action self-loops with probability one and
//! zero reward. Sampling stops on reaching one, and terminal states carry no
//! decision weight in [`Occupancy`].

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, GradientEstimate};
use crate::policy::{sample_index, DifferentiablePolicy, DiscretePolicy};

/// Row-sum tolerance for transition rows and the initial distribution.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Row-sum tolerance for tabulated policies.
pub const POLICY_TOL: f64 = 1e-9;
/// Tail mass below which unbounded rollouts are truncated.
pub const TRUNCATION_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Horizon {
    Finite(usize),
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    /// `[(s·A + a)·S + s']`
    transition: Vec<f64>,
    /// `[s·A + a]`
    reward: Vec<f64>,
    discount: f64,
    initial_dist: Vec<f64>,
    horizon: Horizon,
    terminal: Vec<bool>,
}

impl TabularMdp {
    /// Validates and builds an MDP. `transition` is indexed `[(s·A + a)·S + s']`
    /// and `reward` is indexed `[s·A + a]`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        initial_dist: Vec<f64>,
        horizon: Horizon,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidMdp(msg));
        if num_states == 0 || num_actions == 0 {
            return bad("need at least one state and one action".into());
        }
        if transition.len() != num_states * num_actions * num_states {
            return bad(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                num_states * num_actions * num_states
            ));
        }
        if reward.len() != num_states * num_actions {
            return bad(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                num_states * num_actions
            ));
        }
        if initial_dist.len() != num_states {
            return bad(format!(
                "initial distribution has {} entries, expected {num_states}",
                initial_dist.len()
            ));
        }
        if !(0.0..1.0).contains(&discount) {
            return bad(format!("discount must lie in [0, 1), got {discount}"));
        }
        if horizon == Horizon::Finite(0) {
            return bad("horizon must be positive".into());
        }
        if let Some(i) = reward.iter().position(|r| !r.is_finite()) {
            return bad(format!("reward for (s={}, a={}) is not finite", i / num_actions, i % num_actions));
        }
        for (row, chunk) in transition.chunks(num_states).enumerate() {
            if let Err(msg) = check_stochastic(chunk) {
                return bad(format!(
                    "transition row (s={}, a={}): {msg}",
                    row / num_actions,
                    row % num_actions
                ));
            }
        }
        if let Err(msg) = check_stochastic(&initial_dist) {
            return bad(format!("initial distribution: {msg}"));
        }

        let terminal: Vec<bool> = (0..num_states)
            .map(|s| {
                (0..num_actions).all(|a| {
                    let row = &transition[(s * num_actions + a) * num_states..][..num_states];
                    (row[s] - 1.0).abs() <= STOCHASTIC_TOL && reward[s * num_actions + a] == 0.0
                })
            })
            .collect();
        if let Some(s) = (0..num_states).find(|&s| terminal[s] && initial_dist[s] > 0.0) {
            return bad(format!("initial distribution puts mass on terminal state {s}"));
        }

        Ok(TabularMdp {
            num_states,
            num_actions,
            transition,
            reward,
            discount,
            initial_dist,
            horizon,
            terminal,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// p(·|s, a)
    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.num_actions + action) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[state * self.num_actions + action]
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    /// Largest |r(s, a)|.
    pub fn max_abs_reward(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Rollout length: `T` for a finite horizon, otherwise the smallest `T`
    /// with `γᵀ ≤ 1e-8`.
    pub fn effective_horizon(&self) -> usize {
        match self.horizon {
            Horizon::Finite(t) => t,
            Horizon::Unbounded if self.discount == 0.0 => 1,
            Horizon::Unbounded => (TRUNCATION_EPS.ln() / self.discount.ln()).ceil().max(1.0) as usize,
        }
    }

    pub(crate) fn check_policy<P: DiscretePolicy>(&self, policy: &P) -> Result<()> {
        if policy.num_states() != self.num_states || policy.num_actions() != self.num_actions {
            return Err(Error::InvalidArgument(format!(
                "policy is defined on {}x{} (states x actions), MDP is {}x{}",
                policy.num_states(),
                policy.num_actions(),
                self.num_states,
                self.num_actions
            )));
        }
        Ok(())
    }

    /// Rolls out one trajectory: `s₀ ~ μ₀`, `a_t ~ π(·|s_t)`, `s_{t+1} ~ p(·|s_t, a_t)`
    /// until the effective horizon or a terminal state.
    pub fn sample_trajectory<P, R>(&self, policy: &P, rng: &mut R) -> Result<Trajectory>
    where
        P: DiscretePolicy,
        R: Rng + ?Sized,
    {
        self.check_policy(policy)?;
        let horizon = self.effective_horizon();
        let mut steps = Vec::with_capacity(horizon.min(1024));
        let mut state = sample_index(&self.initial_dist, rng);
        while steps.len() < horizon && !self.terminal[state] {
            let action = policy.sample_action(state, rng);
            steps.push(Step { state, action, reward: self.reward(state, action) });
            state = sample_index(self.transition_row(state, action), rng);
        }
        let truncated = !self.terminal[state];
        Ok(Trajectory { steps, final_state: state, truncated })
    }

    /// Samples `count` trajectories in sequence from one random source.
    pub fn sample_episodes<P, R>(&self, policy: &P, count: usize, rng: &mut R) -> Result<Vec<Trajectory>>
    where
        P: DiscretePolicy,
        R: Rng + ?Sized,
    {
        (0..count).map(|_| self.sample_trajectory(policy, rng)).collect()
    }
}

fn check_stochastic(row: &[f64]) -> std::result::Result<(), String> {
    if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(format!("entry {p} outside [0, 1]"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(format!("sums to {sum}, not 1"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// One (s, a, r, s') sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// One rollout: the visited (s, a, r) steps and the state reached after the last step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub final_state: usize,
    /// True when the rollout was cut at the horizon rather than ending in a terminal state.
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Σ_t γᵗ r_t
    pub fn discounted_return(&self, discount: f64) -> f64 {
        discounted_return(self.steps.iter().map(|s| s.reward), discount)
    }

    /// Q̂_t = Σ_{t' ≥ t} γ^{t'−t} r_{t'}, computed by a backward pass.
    pub fn returns_to_go(&self, discount: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.steps.len()];
        let mut acc = 0.0;
        for (o, step) in out.iter_mut().zip(&self.steps).rev() {
            acc = step.reward + discount * acc;
            *o = acc;
        }
        out
    }

    pub fn transitions(&self) -> impl Iterator<Item = Transition> + '_ {
        self.steps.iter().enumerate().map(move |(t, step)| Transition {
            state: step.state,
            action: step.action,
            reward: step.reward,
            next_state: self.steps.get(t + 1).map_or(self.final_state, |n| n.state),
        })
    }
}

/// Σ_t γᵗ r_t over a reward sequence (Horner form).
pub fn discounted_return<I>(rewards: I, discount: f64) -> f64
where
    I: IntoIterator<Item = f64>,
    I::IntoIter: DoubleEndedIterator,
{
    rewards.into_iter().rev().fold(0.0, |acc, r| r + discount * acc)
}

/// A tabulated policy π(a|s).
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyMatrix {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl PolicyMatrix {
    /// Row-major `S × A` table; rows must be distributions within 1e-9.
    pub fn from_rows(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || probs.len() != num_states * num_actions {
            return Err(Error::InvalidArgument(format!(
                "policy table has {} entries for {num_states}x{num_actions}",
                probs.len()
            )));
        }
        for (s, row) in probs.chunks(num_actions).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > POLICY_TOL {
                return Err(Error::InvalidArgument(format!(
                    "policy row for state {s} is not a distribution (sum {sum})"
                )));
            }
        }
        Ok(PolicyMatrix { num_states, num_actions, probs })
    }

    /// Tabulates any discrete policy over the MDP's state and action sets.
    pub fn from_policy<P: DiscretePolicy>(mdp: &TabularMdp, policy: &P) -> Result<Self> {
        mdp.check_policy(policy)?;
        let probs = (0..mdp.num_states).flat_map(|s| policy.probs(s).iter().copied()).collect();
        PolicyMatrix::from_rows(mdp.num_states, mdp.num_actions, probs)
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        PolicyMatrix {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    /// One-hot rows selecting `actions[s]`.
    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::InvalidArgument(format!("action {a} out of range in state {s}")));
            }
            probs[s * num_actions + a] = 1.0;
        }
        PolicyMatrix::from_rows(actions.len(), num_actions, probs)
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.num_actions + action]
    }
}

impl DiscretePolicy for PolicyMatrix {
    fn num_states(&self) -> usize {
        self.num_states
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn probs(&self, state: usize) -> &[f64] {
        &self.probs[state * self.num_actions..(state + 1) * self.num_actions]
    }
}

/// Infinite-horizon quantities of an MDP under a fixed policy.
#[derive(Clone, Debug)]
pub struct StationaryQuantities {
    /// P_π[i, j] = Σ_k p(s_j|s_i, a_k) π(a_k|s_i)
    pub p_pi: DMatrix<f64>,
    /// r_π[i] = Σ_j r(s_i, a_j) π(a_j|s_i)
    pub r_pi: Vec<f64>,
    pub v_pi: Vec<f64>,
    /// Q_π indexed `[s·A + a]`.
    pub q_pi: Vec<f64>,
    /// Unnormalized discounted state distribution μ_πᵀ = μ₀ᵀ(I − γP_π)⁻¹.
    pub mu_pi: Vec<f64>,
}

impl StationaryQuantities {
    /// Solves the policy-evaluation and state-distribution linear systems.
    /// Ignores any finite horizon on the MDP.
    pub fn solve(mdp: &TabularMdp, pi: &PolicyMatrix) -> Result<Self> {
        mdp.check_policy(pi)?;
        let (ns, gamma) = (mdp.num_states, mdp.discount);
        let p_pi = policy_transition_matrix(mdp, pi);
        let r_pi = policy_reward(mdp, pi);

        let system = DMatrix::identity(ns, ns) - &p_pi * gamma;
        let lu = system.clone().lu();
        let v = lu
            .solve(&DVector::from_column_slice(&r_pi))
            .ok_or(Error::Singular { context: "policy evaluation" })?;
        let mu = system
            .transpose()
            .lu()
            .solve(&DVector::from_column_slice(&mdp.initial_dist))
            .ok_or(Error::Singular { context: "discounted state distribution" })?;
        if v.iter().chain(mu.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Singular { context: "policy evaluation" });
        }
        let v_pi = v.as_slice().to_vec();
        let q_pi = q_from_next_values(mdp, &v_pi);
        Ok(StationaryQuantities { p_pi, r_pi, v_pi, q_pi, mu_pi: mu.as_slice().to_vec() })
    }

    pub fn q(&self, num_actions: usize, state: usize, action: usize) -> f64 {
        self.q_pi[state * num_actions + action]
    }

    /// ‖V_π − r_π − γP_πV_π‖∞
    pub fn bellman_residual(&self, discount: f64) -> f64 {
        let v = DVector::from_column_slice(&self.v_pi);
        let pv = &self.p_pi * &v;
        (0..self.v_pi.len())
            .map(|i| (self.v_pi[i] - self.r_pi[i] - discount * pv[i]).abs())
            .fold(0.0, f64::max)
    }
}

fn policy_transition_matrix(mdp: &TabularMdp, pi: &PolicyMatrix) -> DMatrix<f64> {
    let ns = mdp.num_states;
    let mut p = DMatrix::zeros(ns, ns);
    for s in 0..ns {
        for (a, &prob) in pi.probs(s).iter().enumerate() {
            for (next, &pt) in mdp.transition_row(s, a).iter().enumerate() {
                p[(s, next)] += prob * pt;
            }
        }
    }
    p
}

fn policy_reward(mdp: &TabularMdp, pi: &PolicyMatrix) -> Vec<f64> {
    (0..mdp.num_states)
        .map(|s| pi.probs(s).iter().enumerate().map(|(a, p)| p * mdp.reward(s, a)).sum())
        .collect()
}

/// Q(s, a) = r(s, a) + γ Σ_{s'} p(s'|s, a) V(s')
fn q_from_next_values(mdp: &TabularMdp, v_next: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; mdp.num_states * mdp.num_actions];
    for s in 0..mdp.num_states {
        for a in 0..mdp.num_actions {
            let expected: f64 = mdp.transition_row(s, a).iter().zip(v_next).map(|(p, v)| p * v).sum();
            q[s * mdp.num_actions + a] = mdp.reward(s, a) + mdp.discount * expected;
        }
    }
    q
}

/// Decision weights and action values at one stage of the problem.
#[derive(Clone, Debug)]
pub struct DecisionEpoch {
    /// Discounted visitation weight per state; zero at terminal states.
    pub weight: Vec<f64>,
    /// Action values from this stage on, indexed `[s·A + a]`.
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

/// The discounted occupancy measure of an MDP under a policy, split into
/// decision epochs.
///
/// Every exact expectation of the form `E[Σ_t γᵗ f(s_t, a_t, t)]` is
/// `Σ_epochs Σ_s weight(s) Σ_a π(a|s) f(s, a, epoch)`. An unbounded horizon
/// has a single stationary epoch weighted by μ_π; a finite horizon `T` has
/// one epoch per time step with weights `γᵗ·Pr(s_t = s)`.
#[derive(Clone, Debug)]
pub struct Occupancy {
    pub epochs: Vec<DecisionEpoch>,
}

impl Occupancy {
    pub fn compute(mdp: &TabularMdp, pi: &PolicyMatrix) -> Result<Self> {
        mdp.check_policy(pi)?;
        let ns = mdp.num_states;
        let mask = |mut w: Vec<f64>| {
            for (s, x) in w.iter_mut().enumerate() {
                if mdp.terminal[s] {
                    *x = 0.0;
                }
            }
            w
        };
        match mdp.horizon {
            Horizon::Unbounded => {
                let sq = StationaryQuantities::solve(mdp, pi)?;
                Ok(Occupancy {
                    epochs: vec![DecisionEpoch { weight: mask(sq.mu_pi), q: sq.q_pi, v: sq.v_pi }],
                })
            }
            Horizon::Finite(horizon) => {
                let p_pi = policy_transition_matrix(mdp, pi);
                // Backward pass: values with k steps to go, k = 1..=T.
                let mut to_go: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(horizon);
                let mut v_next = vec![0.0; ns];
                for _ in 0..horizon {
                    let q = q_from_next_values(mdp, &v_next);
                    let v: Vec<f64> = (0..ns)
                        .map(|s| pi.probs(s).iter().enumerate().map(|(a, p)| p * q[s * mdp.num_actions + a]).sum())
                        .collect();
                    v_next = v.clone();
                    to_go.push((q, v));
                }
                // Forward pass: state distribution at time t.
                let mut dist = DVector::from_column_slice(&mdp.initial_dist);
                let p_t = p_pi.transpose();
                let mut scale = 1.0;
                let mut epochs = Vec::with_capacity(horizon);
                for t in 0..horizon {
                    let (q, v) = to_go[horizon - 1 - t].clone();
                    let weight = mask(dist.iter().map(|d| scale * d).collect());
                    epochs.push(DecisionEpoch { weight, q, v });
                    dist = &p_t * dist;
                    scale *= mdp.discount;
                }
                Ok(Occupancy { epochs })
            }
        }
    }

    /// Σ over epochs, states and actions of `weight(s)·π(a|s)·f(epoch, s, a)`.
    pub(crate) fn for_each_weighted<F>(&self, pi: &PolicyMatrix, mut f: F)
    where
        F: FnMut(&DecisionEpoch, usize, usize, f64),
    {
        for epoch in &self.epochs {
            for (s, &w) in epoch.weight.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (a, &p) in pi.probs(s).iter().enumerate() {
                    if p > 0.0 {
                        f(epoch, s, a, w * p);
                    }
                }
            }
        }
    }
}

/// J = μ₀ᵀV_π (unbounded horizon) or its finite-horizon counterpart.
pub fn exact_expected_return(mdp: &TabularMdp, pi: &PolicyMatrix) -> Result<f64> {
    mdp.check_policy(pi)?;
    match mdp.horizon {
        Horizon::Unbounded => {
            let sq = StationaryQuantities::solve(mdp, pi)?;
            Ok(dot(&mdp.initial_dist, &sq.v_pi))
        }
        Horizon::Finite(_) => {
            let occ = Occupancy::compute(mdp, pi)?;
            Ok(dot(&mdp.initial_dist, &occ.epochs[0].v))
        }
    }
}

/// ∇J = Σ_{s,a} μ_π(s) π(a|s) ∇_θ log π(a|s) Q_π(s, a), evaluated exactly.
pub fn exact_policy_gradient<P: DifferentiablePolicy>(mdp: &TabularMdp, policy: &P) -> Result<GradientEstimate> {
    let pi = PolicyMatrix::from_policy(mdp, policy)?;
    let occ = Occupancy::compute(mdp, &pi)?;
    let mut gradient = vec![0.0; policy.param_dim()];
    occ.for_each_weighted(&pi, |epoch, s, a, weight| {
        let q = epoch.q[s * mdp.num_actions + a];
        for (g, score) in gradient.iter_mut().zip(policy.score(s, a)) {
            *g += weight * score * q;
        }
    });
    Ok(GradientEstimate::exact(gradient, EstimatorKind::Exact))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
