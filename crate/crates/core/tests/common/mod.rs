//! Test-side oracles. They recompute every quantity from the raw model by
//! iteration or enumeration and share no code with the solvers under test.
#![allow(dead_code)]

use std::sync::Arc;

use pgrad::{
    DifferentiablePolicy, DiscretePolicy, FeatureMap, GibbsPolicy, Horizon, ParamVector, TabularMdp,
};
use rand::Rng;

/// Random MDP with dense transitions, rewards in [-1, 1] and full-support μ₀.
pub fn random_mdp<R: Rng>(rng: &mut R, ns: usize, na: usize, gamma: f64, horizon: Horizon) -> TabularMdp {
    let mut t = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        t.extend(random_distribution(rng, ns));
    }
    let r = (0..ns * na).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mu0 = random_distribution(rng, ns);
    TabularMdp::new(ns, na, t, r, gamma, mu0, horizon).expect("valid random MDP")
}

pub fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

pub fn gibbs(ns: usize, na: usize, theta: Vec<f64>) -> GibbsPolicy {
    let features = Arc::new(FeatureMap::one_hot(ns, na).unwrap());
    GibbsPolicy::new(features, ParamVector::new(theta).unwrap()).unwrap()
}

pub fn gibbs_reduced(ns: usize, na: usize, theta: Vec<f64>) -> GibbsPolicy {
    let features = Arc::new(FeatureMap::one_hot_reduced(ns, na).unwrap());
    GibbsPolicy::new(features, ParamVector::new(theta).unwrap()).unwrap()
}

pub fn random_theta<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Softmax of a one-hot Gibbs policy computed naively from θ.
pub fn naive_one_hot_probs(theta: &[f64], ns: usize, na: usize) -> Vec<Vec<f64>> {
    (0..ns)
        .map(|s| {
            let e: Vec<f64> = (0..na).map(|a| theta[s * na + a].exp()).collect();
            let z: f64 = e.iter().sum();
            e.into_iter().map(|x| x / z).collect()
        })
        .collect()
}

pub fn table<P: DiscretePolicy>(policy: &P) -> Vec<Vec<f64>> {
    (0..policy.num_states()).map(|s| policy.probs(s).to_vec()).collect()
}

/// Values and action values by repeated Bellman backups (to a fixed point for
/// an unbounded horizon, `T` backups otherwise). Returns `(J, V, Q[s][a])`.
pub fn evaluate(mdp: &TabularMdp, pi: &[Vec<f64>]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let (ns, na, g) = (mdp.num_states(), mdp.num_actions(), mdp.discount());
    let backup = |v: &[f64]| -> Vec<Vec<f64>> {
        (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| {
                        let next: f64 = mdp.transition_row(s, a).iter().zip(v).map(|(p, x)| p * x).sum();
                        mdp.reward(s, a) + g * next
                    })
                    .collect()
            })
            .collect()
    };
    let average = |q: &[Vec<f64>]| -> Vec<f64> {
        (0..ns).map(|s| pi[s].iter().zip(&q[s]).map(|(p, x)| p * x).sum()).collect()
    };
    let mut v = vec![0.0; ns];
    let mut q = backup(&v);
    match mdp.horizon() {
        Horizon::Finite(t) => {
            for _ in 0..t {
                q = backup(&v);
                v = average(&q);
            }
        }
        Horizon::Unbounded => {
            for _ in 0..100_000 {
                q = backup(&v);
                let next = average(&q);
                let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                v = next;
                if change < 1e-15 {
                    break;
                }
            }
        }
    }
    let j = mdp.initial_dist().iter().zip(&v).map(|(m, x)| m * x).sum();
    (j, v, q)
}

/// Σ_t γᵗ Pr(s_t = s) by forward propagation of the state distribution,
/// ignoring terminal structure.
pub fn discounted_visits(mdp: &TabularMdp, pi: &[Vec<f64>]) -> Vec<f64> {
    let (ns, na, g) = (mdp.num_states(), mdp.num_actions(), mdp.discount());
    let steps = match mdp.horizon() {
        Horizon::Finite(t) => t,
        Horizon::Unbounded => 20_000,
    };
    let mut d = mdp.initial_dist().to_vec();
    let mut mu = vec![0.0; ns];
    let mut scale = 1.0;
    for _ in 0..steps {
        for (m, x) in mu.iter_mut().zip(&d) {
            *m += scale * x;
        }
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                for (sp, p) in mdp.transition_row(s, a).iter().enumerate() {
                    next[sp] += d[s] * pi[s][a] * p;
                }
            }
        }
        d = next;
        scale *= g;
        if scale < 1e-300 {
            break;
        }
    }
    mu
}

/// Exact J and ∇J of a finite-horizon MDP by summing over every trajectory:
/// ∇J = Σ_τ p(τ)·ℛ(τ)·Σ_t ∇log π(a_t|s_t). Episodes stop at terminal states.
pub fn enumerate_gradient<P: DifferentiablePolicy>(mdp: &TabularMdp, policy: &P) -> (f64, Vec<f64>) {
    let horizon = match mdp.horizon() {
        Horizon::Finite(t) => t,
        Horizon::Unbounded => panic!("enumeration needs a finite horizon"),
    };
    let dim = policy.param_dim();
    let mut j = 0.0;
    let mut grad = vec![0.0; dim];
    struct Frame {
        state: usize,
        t: usize,
        prob: f64,
        ret: f64,
        score: Vec<f64>,
    }
    let mut stack: Vec<Frame> = mdp
        .initial_dist()
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(s, &p)| Frame { state: s, t: 0, prob: p, ret: 0.0, score: vec![0.0; dim] })
        .collect();
    while let Some(f) = stack.pop() {
        if f.t == horizon || mdp.is_terminal(f.state) {
            j += f.prob * f.ret;
            for (g, x) in grad.iter_mut().zip(&f.score) {
                *g += f.prob * f.ret * x;
            }
            continue;
        }
        let disc = mdp.discount().powi(f.t as i32);
        for a in 0..mdp.num_actions() {
            let pa = policy.probs(f.state)[a];
            if pa == 0.0 {
                continue;
            }
            let score: Vec<f64> = f.score.iter().zip(policy.score(f.state, a)).map(|(x, y)| x + y).collect();
            for (next, &pn) in mdp.transition_row(f.state, a).iter().enumerate() {
                if pn == 0.0 {
                    continue;
                }
                stack.push(Frame {
                    state: next,
                    t: f.t + 1,
                    prob: f.prob * pa * pn,
                    ret: f.ret + disc * mdp.reward(f.state, a),
                    score: score.clone(),
                });
            }
        }
    }
    (j, grad)
}

/// Five-point central differences of `f` at `x`.
pub fn five_point_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let mut at = |d: f64| {
                p[i] = x[i] + d;
                let v = f(&p);
                p[i] = x[i];
                v
            };
            (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
        })
        .collect()
}

/// J(θ) of a Gibbs policy class via [`evaluate`].
pub fn oracle_return(mdp: &TabularMdp, template: &GibbsPolicy, theta: &[f64]) -> f64 {
    let p = template.with_theta(ParamVector::new(theta.to_vec()).unwrap()).unwrap();
    evaluate(mdp, &table(&p)).0
}

/// Fisher matrix Σ_s d(s) Σ_a π(a|s) ∇log π ∇log πᵀ with d from
/// [`discounted_visits`] restricted to non-terminal states.
pub fn oracle_fisher<P: DifferentiablePolicy>(mdp: &TabularMdp, policy: &P) -> Vec<Vec<f64>> {
    let pi = table(policy);
    let d = discounted_visits(mdp, &pi);
    let dim = policy.param_dim();
    let mut f = vec![vec![0.0; dim]; dim];
    for s in (0..mdp.num_states()).filter(|&s| !mdp.is_terminal(s)) {
        for a in 0..mdp.num_actions() {
            let g = policy.score(s, a);
            for i in 0..dim {
                for j in 0..dim {
                    f[i][j] += d[s] * pi[s][a] * g[i] * g[j];
                }
            }
        }
    }
    f
}

pub fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Solves `m x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(m: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut a: Vec<Vec<f64>> = m.iter().zip(b).map(|(row, bi)| {
        let mut r = row.clone();
        r.push(*bi);
        r
    }).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..=n {
                a[row][k] -= factor * a[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (a[row][n] - tail) / a[row][row];
    }
    x
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Fixed 4-state, 2-action MDP with γ = 0.5 and rewards in [0, 1] used for
/// TD(0) convergence checks, plus the evaluated policy (one-hot Gibbs).
pub fn td_benchmark() -> (TabularMdp, GibbsPolicy) {
    #[rustfmt::skip]
    let transition = vec![
        0.1, 0.6, 0.2, 0.1,   0.5, 0.1, 0.1, 0.3,
        0.3, 0.1, 0.5, 0.1,   0.2, 0.2, 0.2, 0.4,
        0.1, 0.3, 0.1, 0.5,   0.6, 0.2, 0.1, 0.1,
        0.4, 0.1, 0.4, 0.1,   0.1, 0.4, 0.3, 0.2,
    ];
    let reward = vec![0.2, 0.9, 0.5, 0.1, 1.0, 0.3, 0.0, 0.7];
    let mdp = TabularMdp::new(4, 2, transition, reward, 0.5, vec![0.25; 4], Horizon::Unbounded).unwrap();
    (mdp, gibbs(4, 2, vec![0.3, -0.3, 0.0, 0.5, -0.2, 0.4, 0.8, 0.0]))
}
