//! Fisher information, natural gradients, and the NPG / eNAC learners.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::{reinforce_optimal_baseline_from_episodes, GradientEstimate};
use crate::linalg::{min_eigenvalue, solve_symmetric};
use crate::mdp::{exact_expected_return, exact_policy_gradient, Occupancy, PolicyMatrix, TabularMdp, Trajectory};
use crate::policy::{DifferentiablePolicy, DiscretePolicy, ParamVector};
use crate::schedule::StepSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FisherSource {
    Exact,
    Empirical,
}

/// F_θ = E_{s~d_π, a~π}[∇log π ∇log πᵀ].
#[derive(Clone, Debug, PartialEq)]
pub struct FisherMatrix {
    pub matrix: DMatrix<f64>,
    pub source: FisherSource,
    /// Damping applied by the last natural-gradient solve against this matrix.
    pub damping: f64,
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }

    /// Largest |F_ij − F_ji|.
    pub fn asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)]).abs());
            }
        }
        worst
    }

    /// F·x
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(x)).as_slice().to_vec()
    }
}

/// Exact Fisher matrix from the discounted state distribution. Terminal
/// states carry no weight.
pub fn fisher_exact<P: DifferentiablePolicy>(mdp: &TabularMdp, policy: &P) -> Result<FisherMatrix> {
    let pi = PolicyMatrix::from_policy(mdp, policy)?;
    let occ = Occupancy::compute(mdp, &pi)?;
    let dim = policy.param_dim();
    let mut state_weight = vec![0.0; mdp.num_states()];
    for epoch in &occ.epochs {
        for (acc, w) in state_weight.iter_mut().zip(&epoch.weight) {
            *acc += w;
        }
    }
    let mut matrix = DMatrix::zeros(dim, dim);
    for (s, &d) in state_weight.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let mut per_state = DMatrix::zeros(dim, dim);
        for (a, &p) in pi.probs(s).iter().enumerate() {
            let g = DVector::from_column_slice(policy.score(s, a));
            per_state.ger(p, &g, &g, 1.0);
        }
        matrix += per_state * d;
    }
    let matrix = (&matrix + matrix.transpose()) * 0.5;
    Ok(FisherMatrix { matrix, source: FisherSource::Exact, damping: 0.0 })
}

/// Monte-Carlo Fisher estimate: `(1/N) Σ_episodes Σ_t γᵗ ∇log π ∇log πᵀ`.
pub fn fisher_empirical<P: DifferentiablePolicy>(
    episodes: &[Trajectory],
    policy: &P,
    discount: f64,
) -> Result<FisherMatrix> {
    if episodes.is_empty() {
        return Err(Error::InvalidArgument("empirical Fisher needs at least one episode".into()));
    }
    let dim = policy.param_dim();
    let mut matrix = DMatrix::zeros(dim, dim);
    for ep in episodes {
        let mut weight = 1.0;
        for step in &ep.steps {
            let g = DVector::from_column_slice(policy.score(step.state, step.action));
            matrix.ger(weight, &g, &g, 1.0);
            weight *= discount;
        }
    }
    matrix /= episodes.len() as f64;
    let matrix = (&matrix + matrix.transpose()) * 0.5;
    Ok(FisherMatrix { matrix, source: FisherSource::Empirical, damping: 0.0 })
}

/// Damping λ added to F before solving.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Damping {
    /// λ = 0; a singular F is an error.
    None,
    Fixed(f64),
    /// λ = 1e-6·trace(F)/dim(θ).
    Auto,
}

impl Damping {
    pub fn resolve(&self, fisher: &FisherMatrix) -> f64 {
        match *self {
            Damping::None => 0.0,
            Damping::Fixed(l) => l,
            Damping::Auto => 1e-6 * fisher.trace() / fisher.dim().max(1) as f64,
        }
    }
}

/// `(F + λI)⁻¹ ∇J`.
pub fn natural_gradient(grad: &[f64], fisher: &FisherMatrix, damping: f64) -> Result<Vec<f64>> {
    if !(damping >= 0.0 && damping.is_finite()) {
        return Err(Error::InvalidArgument(format!("damping must be non-negative, got {damping}")));
    }
    if grad.len() != fisher.dim() {
        return Err(Error::InvalidArgument(format!(
            "gradient has length {}, Fisher matrix is {}x{}",
            grad.len(),
            fisher.dim(),
            fisher.dim()
        )));
    }
    let solution = solve_symmetric(&fisher.matrix, grad, damping);
    if solution.rank_deficient && damping == 0.0 {
        return Err(Error::Singular { context: "natural gradient" });
    }
    Ok(solution.x)
}

/// `F⁺ ∇J` with the Moore–Penrose pseudo-inverse; equals `F⁻¹∇J` when F is
/// invertible and picks the minimum-norm direction for over-parameterized
/// policies.
pub fn natural_gradient_min_norm(grad: &[f64], fisher: &FisherMatrix) -> Result<Vec<f64>> {
    if grad.len() != fisher.dim() {
        return Err(Error::InvalidArgument("gradient and Fisher dimensions differ".into()));
    }
    Ok(solve_symmetric(&fisher.matrix, grad, 0.0).x)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub j_estimate: f64,
    pub grad_norm: f64,
}

/// Parameters and progress of one gradient-ascent run.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnerState {
    pub theta: ParamVector,
    pub iteration: usize,
    pub schedule: StepSchedule,
    pub history: Vec<HistoryEntry>,
}

impl LearnerState {
    pub fn new(theta: ParamVector, schedule: StepSchedule) -> Result<Self> {
        schedule.validate()?;
        Ok(LearnerState { theta, iteration: 0, schedule, history: Vec::new() })
    }

    /// Applies `θ ← θ + α_k·direction`, logs `(k, j_estimate, ‖direction‖)`
    /// and advances k.
    pub fn advance(mut self, direction: &[f64], j_estimate: f64) -> Result<Self> {
        let alpha = self.schedule.step_size(self.iteration);
        self.theta = self.theta.step(direction, alpha)?;
        self.history.push(HistoryEntry {
            iteration: self.iteration,
            j_estimate,
            grad_norm: crate::norm(direction),
        });
        self.iteration += 1;
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientMode {
    /// Exact ∇J and F from the model.
    Exact,
    /// REINFORCE with optimal baseline and the empirical Fisher of one batch.
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NpgConfig {
    pub batch_size: usize,
    pub damping: Damping,
    pub mode: GradientMode,
}

impl Default for NpgConfig {
    fn default() -> Self {
        NpgConfig { batch_size: 100, damping: Damping::Auto, mode: GradientMode::Sampled }
    }
}

/// The gradient and Fisher matrix NPG would use at the policy's parameters,
/// plus the matching J estimate.
pub fn npg_inputs<P, R>(
    mdp: &TabularMdp,
    policy: &P,
    config: &NpgConfig,
    rng: &mut R,
) -> Result<(GradientEstimate, FisherMatrix, f64)>
where
    P: DifferentiablePolicy,
    R: Rng + ?Sized,
{
    match config.mode {
        GradientMode::Exact => {
            let grad = exact_policy_gradient(mdp, policy)?;
            let fisher = fisher_exact(mdp, policy)?;
            let j = exact_expected_return(mdp, &PolicyMatrix::from_policy(mdp, policy)?)?;
            Ok((grad, fisher, j))
        }
        GradientMode::Sampled => {
            let episodes = mdp.sample_episodes(policy, config.batch_size, rng)?;
            let grad = reinforce_optimal_baseline_from_episodes(&episodes, policy, mdp.discount())?;
            let fisher = fisher_empirical(&episodes, policy, mdp.discount())?;
            let j = mean_return(&episodes, mdp.discount());
            Ok((grad, fisher, j))
        }
    }
}

/// One natural policy gradient step `θ_{k+1} = θ_k + α_k (F + λI)⁻¹ ∇̂J`.
/// `template` supplies the policy class; its own θ is ignored.
pub fn npg_iterate<P, R>(
    mdp: &TabularMdp,
    template: &P,
    state: LearnerState,
    config: &NpgConfig,
    rng: &mut R,
) -> Result<LearnerState>
where
    P: DifferentiablePolicy,
    R: Rng + ?Sized,
{
    if config.mode == GradientMode::Sampled && config.batch_size < 2 {
        return Err(Error::InvalidArgument("sampled NPG needs a batch of at least 2 episodes".into()));
    }
    let policy = template.with_theta(state.theta.clone())?;
    let (grad, mut fisher, j) = npg_inputs(mdp, &policy, config, rng)?;
    fisher.damping = config.damping.resolve(&fisher);
    let direction = natural_gradient(&grad.gradient, &fisher, fisher.damping)?;
    state.advance(&direction, j)
}

/// Result of the episodic natural actor-critic regression.
#[derive(Clone, Debug, PartialEq)]
pub struct EnacFit {
    /// Natural-gradient estimate.
    pub w: Vec<f64>,
    /// Baseline J₀ absorbed by the intercept.
    pub intercept: f64,
    pub residual_norm: f64,
    /// Fewer independent episodes than unknowns; the minimum-norm solution is returned.
    pub rank_deficient: bool,
}

/// Least-squares regression `Σ_t γᵗ∇log π(a_t|s_t)ᵀw + J₀ = ℛ(τ)` over episodes.
pub fn enac_fit<P: DifferentiablePolicy>(episodes: &[Trajectory], policy: &P, discount: f64) -> Result<EnacFit> {
    if episodes.is_empty() {
        return Err(Error::InvalidArgument("eNAC needs at least one episode".into()));
    }
    let dim = policy.param_dim();
    let rows: Vec<(Vec<f64>, f64)> = episodes
        .iter()
        .map(|ep| {
            let mut x = vec![0.0; dim + 1];
            let mut weight = 1.0;
            for step in &ep.steps {
                for (xi, g) in x.iter_mut().zip(policy.score(step.state, step.action)) {
                    *xi += weight * g;
                }
                weight *= discount;
            }
            x[dim] = 1.0;
            (x, ep.discounted_return(discount))
        })
        .collect();
    let mut m = DMatrix::zeros(dim + 1, dim + 1);
    let mut c = vec![0.0; dim + 1];
    for (x, y) in &rows {
        let xv = DVector::from_column_slice(x);
        m.ger(1.0, &xv, &xv, 1.0);
        for (ci, xi) in c.iter_mut().zip(x) {
            *ci += xi * y;
        }
    }
    let n = rows.len() as f64;
    m /= n;
    c.iter_mut().for_each(|v| *v /= n);
    let solution = solve_symmetric(&m, &c, 0.0);
    let sq: f64 = rows
        .iter()
        .map(|(x, y)| {
            let r = crate::policy::dot(x, &solution.x) - y;
            r * r
        })
        .sum();
    let mut w = solution.x;
    let intercept = w.pop().expect("intercept column");
    Ok(EnacFit { w, intercept, residual_norm: (sq / n).sqrt(), rank_deficient: solution.rank_deficient })
}

/// eNAC step `θ_{k+1} = θ_k + α_k w` from a batch sampled at `state.theta`.
pub fn enac_update<P: DifferentiablePolicy>(
    episodes: &[Trajectory],
    policy: &P,
    discount: f64,
    state: LearnerState,
) -> Result<(LearnerState, EnacFit)> {
    if policy.theta() != &state.theta {
        return Err(Error::InvalidArgument("eNAC batch policy does not match the learner's theta".into()));
    }
    let fit = enac_fit(episodes, policy, discount)?;
    let state = state.advance(&fit.w, mean_return(episodes, discount))?;
    Ok((state, fit))
}

pub(crate) fn mean_return(episodes: &[Trajectory], discount: f64) -> f64 {
    episodes.iter().map(|e| e.discounted_return(discount)).sum::<f64>() / episodes.len() as f64
}
