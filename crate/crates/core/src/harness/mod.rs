//! Experiment harness: benchmark environments, the MDP and config text
//! formats, seeded multi-run execution with CSV output, and gradient checks.

mod config;
mod envs;
mod gradcheck;
mod mdp_file;
mod runner;

pub use config::{ExperimentConfig, FeatureChoice, Method, ThetaInit};
pub use envs::{build_environment, EnvSpec, Environment, PLATEAU_TARGET};
pub use gradcheck::{gradcheck, GradcheckReport, GRADCHECK_TOLERANCES};
pub use mdp_file::{format_mdp, parse_mdp};
pub use runner::{final_j_summary, run_experiment, write_csv, RunRecord, Summary, CSV_HEADER};
