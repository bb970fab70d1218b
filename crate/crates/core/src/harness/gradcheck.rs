use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::critic::fit_compatible_advantage_exact;
use crate::error::{Error, Result};
use crate::estimators::{exact_return_objective, finite_difference_gradient, FdStep};
use crate::mdp::exact_policy_gradient;
use crate::natural::{fisher_exact, natural_gradient_min_norm};
use crate::policy::{DifferentiablePolicy, GibbsPolicy};
use crate::relative_error;

use super::config::ExperimentConfig;
use super::envs::build_environment;
use super::runner::{feature_map, initial_theta};

/// Thresholds for (exact vs finite-difference gradient), (F·w vs ∇J) and
/// (F⁻¹∇J vs w).
pub const GRADCHECK_TOLERANCES: [f64; 3] = [1e-5, 1e-7, 1e-7];
const CHECK_NAMES: [&str; 3] = ["exact-vs-finite-difference", "fisher-times-w-vs-gradient", "natural-gradient-vs-w"];

/// Relative errors of the three consistency checks at one θ.
#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub errors: [f64; 3],
}

impl GradcheckReport {
    /// Names of the checks at or above their tolerance.
    pub fn failures(&self) -> Vec<&'static str> {
        self.errors
            .iter()
            .zip(GRADCHECK_TOLERANCES)
            .zip(CHECK_NAMES)
            .filter(|((e, tol), _)| e.is_nan() || **e >= *tol)
            .map(|(_, name)| name)
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ((name, e), tol) in CHECK_NAMES.iter().zip(self.errors).zip(GRADCHECK_TOLERANCES) {
            let verdict = if e < tol { "ok" } else { "FAIL" };
            writeln!(f, "{name:<28} {e:.3e}  (< {tol:.0e})  {verdict}")?;
        }
        Ok(())
    }
}

/// Runs the checks at the config's initial θ for its first seed. With
/// one-hot features F is singular, so F⁻¹ is the pseudo-inverse and the
/// compatible fit is its minimum-norm solution.
pub fn gradcheck(config: &ExperimentConfig) -> Result<GradcheckReport> {
    let seed = *config.seeds.first().ok_or_else(|| Error::InvalidArgument("seeds list is empty".into()))?;
    let env = build_environment(&config.environment)?;
    let features = Arc::new(feature_map(&env.mdp, config.features)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = initial_theta(&env, &features, config.features, &config.theta, &mut rng)?;
    let policy = GibbsPolicy::new(features, theta)?;
    let mdp = &env.mdp;

    let grad = exact_policy_gradient(mdp, &policy)?.gradient;
    let fd = finite_difference_gradient(exact_return_objective(mdp, &policy), policy.theta(), FdStep::default())?;
    let fisher = fisher_exact(mdp, &policy)?;
    let w = fit_compatible_advantage_exact(mdp, &policy)?.w;
    let natural = natural_gradient_min_norm(&grad, &fisher)?;
    Ok(GradcheckReport {
        errors: [
            relative_error(&fd.gradient, &grad),
            relative_error(&fisher.apply(&w), &grad),
            relative_error(&natural, &w),
        ],
    })
}
