mod common;

use common::*;
use pgrad::estimators::{
    episodic_search_gradient, exact_return_objective, finite_difference_gradient, likelihood_ratio_gradient,
    optimal_baseline, reinforce_from_episodes, reinforce_optimal_baseline_from_episodes, reinforce_gradient, FdStep, SearchDistribution,
};
use pgrad::harness::{build_environment, EnvSpec};
use pgrad::mdp::exact_policy_gradient;
use pgrad::{relative_error, DifferentiablePolicy, DiscretePolicy, Horizon, ParamVector, PolicyMatrix, StationaryQuantities, TabularMdp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn within_standard_errors(estimate: &[f64], se: &[f64], truth: &[f64], k: f64) -> bool {
    estimate.iter().zip(se).zip(truth).all(|((e, s), t)| (e - t).abs() <= k * s)
}

#[test]
fn finite_differences_of_exact_return_match_exact_gradient() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(&mut rng, 4, 2, 0.9, Horizon::Unbounded);
        let policy = gibbs(4, 2, random_theta(&mut rng, 8, 1.5));
        let fd = finite_difference_gradient(exact_return_objective(&mdp, &policy), policy.theta(), FdStep::Absolute(1e-5))
            .unwrap();
        let exact = exact_policy_gradient(&mdp, &policy).unwrap();
        assert!(relative_error(&fd.gradient, &exact.gradient) < 1e-4, "seed {seed}");
        assert_eq!(fd.sample_count, 16);
    }
}

#[test]
fn episodic_search_matches_nested_monte_carlo_on_bandit() {
    let mdp = build_environment(&EnvSpec::Bandit2).unwrap().mdp;
    let template = gibbs(1, 2, vec![0.0, 0.0]);
    let mean = vec![0.1, -0.1];
    let sigma = 0.5;
    let dist = SearchDistribution::isotropic(ParamVector::new(mean.clone()).unwrap(), sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let est = episodic_search_gradient(&mdp, &dist, &template, 200_000, &mut rng).unwrap();

    // Oracle: symmetric differences of E_θ[J(θ)] in the search mean, each
    // expectation estimated by an outer loop over θ and an inner rollout,
    // with common random numbers across the two sides.
    let delta = 0.05;
    let outer = 200_000;
    let mut oracle = Vec::new();
    let mut oracle_se = Vec::new();
    for i in 0..2 {
        let mut rng = ChaCha8Rng::seed_from_u64(77 + i as u64);
        let mut diffs = Vec::with_capacity(outer);
        for _ in 0..outer {
            let noise: Vec<f64> = (0..2).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)).collect();
            let u: u64 = rand::Rng::random(&mut rng);
            let value = |shift: f64| {
                let theta: Vec<f64> = (0..2).map(|k| mean[k] + if k == i { shift } else { 0.0 } + sigma * noise[k]).collect();
                let actor = template.with_theta(ParamVector::new(theta).unwrap()).unwrap().greedy();
                let mut inner = ChaCha8Rng::seed_from_u64(u);
                mdp.sample_trajectory(&actor, &mut inner).unwrap().discounted_return(mdp.discount())
            };
            diffs.push((value(delta) - value(-delta)) / (2.0 * delta));
        }
        let m = diffs.iter().sum::<f64>() / outer as f64;
        let v = diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (outer - 1) as f64;
        oracle.push(m);
        oracle_se.push((v / outer as f64).sqrt());
    }
    let se = est.standard_error();
    assert!(est.gradient[0] > 0.0 && est.gradient[1] < 0.0, "{:?}", est.gradient);
    for i in 0..2 {
        let combined = (se[i].powi(2) + oracle_se[i].powi(2)).sqrt();
        assert!((est.gradient[i] - oracle[i]).abs() < 3.0 * combined, "{i}: {:?} vs {oracle:?}", est.gradient);
    }
}

#[test]
fn reinforce_is_unbiased_on_short_horizon() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mdp = random_mdp(&mut rng, 2, 2, 0.9, Horizon::Finite(3));
    let policy = gibbs(2, 2, random_theta(&mut rng, 4, 1.0));
    let exact = exact_policy_gradient(&mdp, &policy).unwrap().gradient;
    let (_, brute) = enumerate_gradient(&mdp, &policy);
    assert!(max_abs_diff(&exact, &brute) < 1e-12);
    let est = reinforce_gradient(&mdp, &policy, 100_000, None, &mut rng).unwrap();
    assert_eq!(est.sample_count, 100_000);
    assert!(within_standard_errors(&est.gradient, &est.standard_error(), &exact, 3.0), "{:?} vs {exact:?}", est.gradient);
}

#[test]
fn optimal_baseline_reduces_variance_without_bias() {
    let mdp = build_environment(&EnvSpec::Bandit2).unwrap().mdp;
    let policy = gibbs(1, 2, vec![0.3, -0.4]);
    let exact = exact_policy_gradient(&mdp, &policy).unwrap().gradient;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut plain, mut based) = (Vec::new(), Vec::new());
    for _ in 0..100 {
        let episodes = mdp.sample_episodes(&policy, 10_000, &mut rng).unwrap();
        plain.push(reinforce_from_episodes(&episodes, &policy, mdp.discount(), None).unwrap().gradient);
        based.push(reinforce_optimal_baseline_from_episodes(&episodes, &policy, mdp.discount()).unwrap().gradient);
    }
    let stats = |xs: &[Vec<f64>]| {
        let n = xs.len() as f64;
        let mean: Vec<f64> = (0..2).map(|i| xs.iter().map(|x| x[i]).sum::<f64>() / n).collect();
        let var: Vec<f64> = (0..2).map(|i| xs.iter().map(|x| (x[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1.0)).collect();
        (mean, var)
    };
    let (m0, v0) = stats(&plain);
    let (m1, v1) = stats(&based);
    assert!(v1.iter().sum::<f64>() <= v0.iter().sum::<f64>(), "{v1:?} vs {v0:?}");
    for i in 0..2 {
        let se = ((v0[i] + v1[i]) / 100.0).sqrt();
        assert!((m0[i] - m1[i]).abs() < 3.0 * se);
        assert!((m1[i] - exact[i]).abs() < 3.0 * (v1[i] / 100.0).sqrt(), "{m1:?} vs {exact:?}");
    }
}

#[test]
fn full_batch_baseline_is_a_weighted_mean_return() {
    let mdp = build_environment(&EnvSpec::Bandit2).unwrap().mdp;
    let policy = gibbs(1, 2, vec![0.3, -0.4]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let episodes = mdp.sample_episodes(&policy, 1_000, &mut rng).unwrap();
    // the squared score of either arm's episode is the same in both
    // components, so both equal ⟨g²ℛ⟩/⟨g²⟩ computed by hand
    let p0 = policy.probs(0)[0];
    let (mut num, mut den) = (0.0, 0.0);
    for ep in &episodes {
        let g = if ep.steps[0].action == 0 { 1.0 - p0 } else { p0 };
        num += g * g * ep.discounted_return(0.9);
        den += g * g;
    }
    let b = optimal_baseline(&episodes, &policy, 0.9).unwrap();
    assert!((b[0] - num / den).abs() < 1e-12 && (b[1] - num / den).abs() < 1e-12);
}

#[test]
fn likelihood_ratio_with_exact_q_is_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mdp = random_mdp(&mut rng, 3, 2, 0.9, Horizon::Unbounded);
    let policy = gibbs(3, 2, random_theta(&mut rng, 6, 1.0));
    let sq = StationaryQuantities::solve(&mdp, &PolicyMatrix::from_policy(&mdp, &policy).unwrap()).unwrap();
    let exact = exact_policy_gradient(&mdp, &policy).unwrap().gradient;
    let est = likelihood_ratio_gradient(&mdp, &policy, |s, a| sq.q(2, s, a), 100_000, &mut rng).unwrap();
    assert!(within_standard_errors(&est.gradient, &est.standard_error(), &exact, 3.0), "{:?} vs {exact:?}", est.gradient);
}

#[test]
fn discounted_reinforce_targets_the_discounted_objective() {
    // single absorbing state with two actions and discount 0.5
    let mdp = TabularMdp::new(1, 2, vec![1.0, 1.0], vec![1.0, 0.0], 0.5, vec![1.0], Horizon::Finite(6)).unwrap();
    let policy = gibbs(1, 2, vec![0.2, 0.0]);
    let exact = exact_policy_gradient(&mdp, &policy).unwrap().gradient;
    let (_, brute) = enumerate_gradient(&mdp, &policy);
    assert!(max_abs_diff(&exact, &brute) < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let est = reinforce_gradient(&mdp, &policy, 50_000, None, &mut rng).unwrap();
    assert!(within_standard_errors(&est.gradient, &est.standard_error(), &exact, 3.0));
}

#[test]
fn baselined_reinforce_leaves_each_episode_out_of_its_own_baseline() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mdp = random_mdp(&mut rng, 3, 2, 0.9, Horizon::Finite(4));
    let policy = gibbs(3, 2, random_theta(&mut rng, 6, 1.0));
    let episodes = mdp.sample_episodes(&policy, 12, &mut rng).unwrap();
    let mut expected = vec![0.0; 6];
    for k in 0..episodes.len() {
        let others: Vec<_> = episodes.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, e)| e.clone()).collect();
        let b = optimal_baseline(&others, &policy, 0.9).unwrap();
        let g = reinforce_from_episodes(&episodes[k..=k], &policy, 0.9, Some(&b)).unwrap().gradient;
        for (e, x) in expected.iter_mut().zip(g) {
            *e += x / episodes.len() as f64;
        }
    }
    let est = reinforce_optimal_baseline_from_episodes(&episodes, &policy, 0.9).unwrap();
    assert!(max_abs_diff(&est.gradient, &expected) < 1e-12, "{:?} vs {expected:?}", est.gradient);
    assert!(reinforce_optimal_baseline_from_episodes(&episodes[..1], &policy, 0.9).is_err());
}
