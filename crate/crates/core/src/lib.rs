//! Policy-gradient estimation on finite Markov decision processes.
//!
//! Every sampling-based estimator in this crate has an exact counterpart
//! computed from the closed-form solution of the MDP, so estimators can be
//! checked against ground truth instead of against each other:
//!
//! - [`mdp`]: the tabular MDP, trajectory sampling and the exact solvers
//!   (values, Q-functions, discounted state distribution, exact gradient).
//! - [`policy`]: Gibbs and Gaussian policies with analytic score functions.
//! - [`estimators`]: finite differences, episodic parameter search,
//!   REINFORCE with the optimal baseline, likelihood-ratio gradients.
//! - [`critic`]: compatible advantage fits, TD(0), Monte-Carlo Q and the
//!   least-squares advantage Bellman system.
//! - [`natural`]: Fisher matrices, natural gradients, NPG and eNAC.
//! - [`harness`]: benchmark environments, experiment configs, CSV output.

pub mod critic;
pub mod error;
pub mod estimators;
pub mod harness;
mod linalg;
pub mod mdp;
pub mod natural;
pub mod policy;
pub mod schedule;

pub use error::{Error, Result};
pub use mdp::{Horizon, PolicyMatrix, StationaryQuantities, TabularMdp, Trajectory};
pub use policy::{
    DifferentiablePolicy, DiscretePolicy, FeatureMap, GaussianPolicy, GibbsPolicy, ParamVector, StateFeatures,
};
pub use schedule::StepSchedule;

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − b‖ / ‖b‖`, or the absolute difference when `b` is (numerically) zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_error: length mismatch");
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = norm(b);
    if scale > 1e-12 {
        diff / scale
    } else {
        diff
    }
}
