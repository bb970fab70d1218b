//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use pgrad::critic::{fit_advantage_bellman, fit_compatible_advantage_exact, td0_evaluate, BELLMAN_RIDGE};
use pgrad::estimators::{
    exact_return_objective, finite_difference_gradient, reinforce_from_episodes,
    reinforce_optimal_baseline_from_episodes, FdStep,
};
use pgrad::harness::{build_environment, run_experiment, EnvSpec, ExperimentConfig, PLATEAU_TARGET};
use pgrad::mdp::{exact_policy_gradient, Transition};
use pgrad::natural::{fisher_empirical, fisher_exact, natural_gradient};
use pgrad::{
    norm, relative_error, DifferentiablePolicy, DiscretePolicy, Horizon, PolicyMatrix, StateFeatures,
    StationaryQuantities, StepSchedule, TabularMdp,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(limit: Duration, start: Instant) -> (bool, String) {
    let elapsed = start.elapsed();
    (elapsed < limit, format!("{:.2} s of {} s", elapsed.as_secs_f64(), limit.as_secs()))
}

fn mean_and_variance(xs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = xs.len() as f64;
    let dim = xs[0].len();
    let mean: Vec<f64> = (0..dim).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let var = (0..dim).map(|j| xs.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0)).collect();
    (mean, var)
}

fn sizes(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.random_range(1..=6), rng.random_range(1..=4))
}

fn oracle_gradient_agreement() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (ns, na) = sizes(&mut rng);
        let mdp = random_mdp(&mut rng, ns, na, 0.9, Horizon::Unbounded);
        let policy = gibbs(ns, na, random_theta(&mut rng, ns * na, 1.0));
        let exact = exact_policy_gradient(&mdp, &policy).unwrap().gradient;
        let fd = finite_difference_gradient(exact_return_objective(&mdp, &policy), policy.theta(), FdStep::default())
            .unwrap()
            .gradient;
        let err = if norm(&exact) > 1e-12 { relative_error(&fd, &exact) } else { norm(&fd) };
        worst = worst.max(err);
    }
    let (fast, time) = within(Duration::from_secs(10), start);
    outcome(worst < 1e-5 && fast, format!("max relative error {worst:.2e} (< 1e-5), {time}"))
}

fn brute_force_unbiasedness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mdp = random_mdp(&mut rng, 2, 2, 0.9, Horizon::Finite(5));
    let policy = gibbs(2, 2, random_theta(&mut rng, 4, 1.0));
    let exact = exact_policy_gradient(&mdp, &policy).unwrap().gradient;
    let (_, enumerated) = enumerate_gradient(&mdp, &policy);
    let enum_err = max_abs_diff(&enumerated, &exact);

    let episodes = mdp.sample_episodes(&policy, 100_000, &mut rng).unwrap();
    let est = reinforce_from_episodes(&episodes, &policy, mdp.discount(), None).unwrap();
    let se = est.standard_error();
    let worst_z = est
        .gradient
        .iter()
        .zip(&se)
        .zip(&exact)
        .map(|((g, s), e)| (g - e).abs() / s)
        .fold(0.0f64, f64::max);
    let (fast, time) = within(Duration::from_secs(60), start);
    outcome(
        enum_err < 1e-9 && worst_z <= 3.0 && fast,
        format!("enumeration vs exact {enum_err:.2e} (< 1e-9), REINFORCE max |z| {worst_z:.2} (<= 3), {time}"),
    )
}

/// Random interior instances with reduced one-hot features.
fn identity_instances() -> Vec<(TabularMdp, pgrad::GibbsPolicy)> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    (0..50)
        .map(|_| {
            let ns = rng.random_range(1..=6);
            let na = rng.random_range(2..=4);
            let mdp = random_mdp(&mut rng, ns, na, 0.9, Horizon::Unbounded);
            let policy = gibbs_reduced(ns, na, random_theta(&mut rng, ns * (na - 1), 1.0));
            (mdp, policy)
        })
        .collect()
}

fn compatible_identity() -> Outcome {
    let mut worst = 0.0f64;
    for (mdp, policy) in identity_instances() {
        let grad = exact_policy_gradient(&mdp, &policy).unwrap().gradient;
        let w = fit_compatible_advantage_exact(&mdp, &policy).unwrap().w;
        let fw = fisher_exact(&mdp, &policy).unwrap().apply(&w);
        worst = worst.max(relative_error(&fw, &grad));
    }
    outcome(worst < 1e-7, format!("max ||F w - grad J|| / ||grad J|| {worst:.2e} (< 1e-7) on 50 instances"))
}

fn natural_identity() -> Outcome {
    let mut worst = 0.0f64;
    for (mdp, policy) in identity_instances() {
        let grad = exact_policy_gradient(&mdp, &policy).unwrap().gradient;
        let w = fit_compatible_advantage_exact(&mdp, &policy).unwrap().w;
        let natural = natural_gradient(&grad, &fisher_exact(&mdp, &policy).unwrap(), 0.0).unwrap();
        let diff: Vec<f64> = natural.iter().zip(&w).map(|(a, b)| a - b).collect();
        worst = worst.max(norm(&diff));
    }
    outcome(worst < 1e-8, format!("max ||F^-1 grad J - w|| {worst:.2e} (< 1e-8), damping 0"))
}

fn baseline_variance_reduction() -> Outcome {
    let env = build_environment(&EnvSpec::Bandit2).unwrap();
    let policy = gibbs(1, 2, vec![0.0, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut plain, mut based) = (Vec::new(), Vec::new());
    for _ in 0..100 {
        let episodes = env.mdp.sample_episodes(&policy, 100, &mut rng).unwrap();
        plain.push(reinforce_from_episodes(&episodes, &policy, env.mdp.discount(), None).unwrap().gradient);
        based.push(reinforce_optimal_baseline_from_episodes(&episodes, &policy, env.mdp.discount()).unwrap().gradient);
    }
    let (m0, v0) = mean_and_variance(&plain);
    let (m1, v1) = mean_and_variance(&based);
    let (t0, t1) = (v0.iter().sum::<f64>(), v1.iter().sum::<f64>());
    let worst_z = (0..2)
        .map(|j| (m0[j] - m1[j]).abs() / ((v0[j] + v1[j]) / 100.0).sqrt())
        .fold(0.0f64, f64::max);
    outcome(
        t1 <= t0 && worst_z <= 3.0,
        format!("variance trace {t1:.3e} with baseline vs {t0:.3e} without, mean difference max |z| {worst_z:.2} (<= 3)"),
    )
}

fn td_convergence() -> Outcome {
    let (mdp, policy) = td_benchmark();
    let features = StateFeatures::one_hot(4).unwrap();
    let schedule = StepSchedule::Harmonic { scale: 10.0, offset: 100.0 };
    let (_, exact, _) = evaluate(&mdp, &table(&policy));
    let errors: Vec<f64> = (0..10)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = td0_evaluate(&mdp, &policy, &features, &schedule, 100_000, &mut rng).unwrap();
            max_abs_diff(v.as_slice(), &exact)
        })
        .collect();
    let med = median(errors);
    outcome(med < 1e-2, format!("median sup-norm error {med:.2e} (< 1e-2) over 10 seeds"))
}

fn transitions<P: DifferentiablePolicy>(mdp: &TabularMdp, policy: &P, n: usize, rng: &mut ChaCha8Rng) -> Vec<Transition> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let ep = mdp.sample_trajectory(policy, rng).unwrap();
        out.extend(ep.transitions().take(n - out.len()));
    }
    out
}

fn advantage_bellman_fit() -> Outcome {
    const REPLICATES: u64 = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = 0.0f64;
    for instance in 0..10u64 {
        let ns = rng.random_range(2..=5);
        let na = rng.random_range(2..=3);
        let mdp = random_mdp(&mut rng, ns, na, 0.9, Horizon::Unbounded);
        let policy = gibbs_reduced(ns, na, random_theta(&mut rng, ns * (na - 1), 1.0));
        let features = StateFeatures::one_hot(ns).unwrap();
        let exact = fit_compatible_advantage_exact(&mdp, &policy).unwrap().w;
        let fit = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = transitions(&mdp, &policy, 100_000, &mut rng);
            fit_advantage_bellman(&data, &policy, &features, 0.9, BELLMAN_RIDGE).unwrap().w
        };
        let fitted = fit(instance);
        let replicates: Vec<Vec<f64>> = (0..REPLICATES).map(|r| fit(10_000 + instance * 100 + r)).collect();
        let (_, var) = mean_and_variance(&replicates);
        let se = var.iter().sum::<f64>().sqrt();
        let diff: Vec<f64> = fitted.iter().zip(&exact).map(|(a, b)| a - b).collect();
        worst = worst.max(norm(&diff) / se);
    }
    outcome(worst <= 3.0, format!("max ||w_fit - w_exact|| / SE {worst:.2} (<= 3) on 10 instances, 1e5 transitions each"))
}

const STEP_GRID: [f64; 7] = [0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0];

fn plateau_config(method: &str, alpha: f64, iterations: usize, seeds: &str, extra: &str) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "environment = plateau\nfeatures = one-hot-reduced\nmethod = {method}\nschedule = constant({alpha})\n\
         iterations = {iterations}\nseeds = {seeds}\ndamping = auto\n{extra}"
    ))
    .unwrap()
}

/// Iterations to reach the target for each seed; unreached counts as infinity.
fn iterations_to_target(config: &ExperimentConfig) -> Vec<f64> {
    let records = run_experiment(config, false).unwrap();
    let mut out = Vec::new();
    for seed in &config.seeds {
        let hit = records.iter().filter(|r| r.seed == *seed).find(|r| r.j >= PLATEAU_TARGET).map(|r| r.iteration);
        out.push(hit.map_or(f64::INFINITY, |k| k as f64));
    }
    out
}

fn best_step(method: &str, extra: &str) -> (f64, f64) {
    let mut best = (f64::NAN, f64::INFINITY);
    for alpha in STEP_GRID {
        let k = iterations_to_target(&plateau_config(method, alpha, 300, "0", extra))[0];
        if k < best.1 {
            best = (alpha, k);
        }
    }
    best
}

fn plateau_reproduction() -> Outcome {
    let start = Instant::now();
    let (alpha_v, k_v) = best_step("exact", "");
    let (alpha_n, k_n) = best_step("npg", "mode = exact\n");
    let seeds = "0..10";
    let sampled_v = median(iterations_to_target(&plateau_config("reinforce-ob", alpha_v, 50, seeds, "batch_size = 100\n")));
    let sampled_n = median(iterations_to_target(&plateau_config("npg", alpha_n, 50, seeds, "batch_size = 100\n")));
    let (fast, time) = within(Duration::from_secs(120), start);
    outcome(
        k_n < k_v && sampled_n < sampled_v && fast,
        format!(
            "exact: natural {k_n} iterations (step {alpha_n}) vs vanilla {k_v} (step {alpha_v}); \
             sampled medians over 10 seeds: natural {sampled_n} vs vanilla {sampled_v}; {time}"
        ),
    )
}

fn normalization_and_score_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let (mut mu_err, mut score_err, mut asym, mut min_eig) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    for k in 0..200 {
        let (ns, na) = sizes(&mut rng);
        let gamma = rng.random_range(0.0..0.99);
        let mdp = random_mdp(&mut rng, ns, na, gamma, Horizon::Unbounded);
        let reduced = k % 2 == 1 && na > 1;
        let policy = if reduced {
            gibbs_reduced(ns, na, random_theta(&mut rng, ns * (na - 1), 3.0))
        } else {
            gibbs(ns, na, random_theta(&mut rng, ns * na, 3.0))
        };
        let sq = StationaryQuantities::solve(&mdp, &PolicyMatrix::from_policy(&mdp, &policy).unwrap()).unwrap();
        mu_err = mu_err.max(((1.0 - gamma) * sq.mu_pi.iter().sum::<f64>() - 1.0).abs());
        for s in 0..ns {
            let probs = policy.probs(s);
            let mut expected = vec![0.0; policy.param_dim()];
            for (a, p) in probs.iter().enumerate() {
                for (e, g) in expected.iter_mut().zip(policy.score(s, a)) {
                    *e += p * g;
                }
            }
            score_err = expected.iter().fold(score_err, |m, e| m.max(e.abs()));
        }
        let episodes = mdp.sample_episodes(&policy, 10, &mut rng).unwrap();
        for f in [fisher_exact(&mdp, &policy).unwrap(), fisher_empirical(&episodes, &policy, gamma).unwrap()] {
            asym = asym.max(f.asymmetry());
            min_eig = min_eig.min(f.min_eigenvalue());
        }
    }
    outcome(
        mu_err <= 1e-9 && score_err <= 1e-10 && asym == 0.0 && min_eig >= -1e-10,
        format!(
            "|(1-g) sum mu - 1| {mu_err:.1e}, |E[score]| {score_err:.1e}, asymmetry {asym:.1e}, min eigenvalue {min_eig:.1e} over 200 instances"
        ),
    )
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("oracle gradient agreement", oracle_gradient_agreement),
        ("brute-force unbiasedness", brute_force_unbiasedness),
        ("compatible approximator identity", compatible_identity),
        ("natural gradient identity", natural_identity),
        ("optimal baseline variance reduction", baseline_variance_reduction),
        ("TD(0) convergence", td_convergence),
        ("advantage Bellman fit", advantage_bellman_fit),
        ("plateau reproduction", plateau_reproduction),
        ("normalization and score identities", normalization_and_score_identities),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        failures += usize::from(!result.passed);
        println!("criterion {}: {} {name}: {}", i + 1, if result.passed { "PASS" } else { "FAIL" }, result.detail);
    }
    if failures > 0 {
        println!("{failures} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
