use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::mdp::{Horizon, TabularMdp};

/// Return the plateau benchmark counts as solved at (optimum is 9).
pub const PLATEAU_TARGET: f64 = 8.0;

/// A named benchmark or an MDP file.
#[derive(Clone, Debug, PartialEq)]
pub enum EnvSpec {
    Bandit2,
    Chain(usize),
    Gridworld(usize, usize),
    Plateau,
    Random { states: usize, actions: usize, seed: u64 },
    File(PathBuf),
}

impl EnvSpec {
    /// Parses `bandit2`, `chain(n)`, `gridworld(w,h)`, `plateau`,
    /// `random(states,actions,seed)` or `file:<path>`. Any other text
    /// ending in `.mdp` is taken as a file path.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if let Some(path) = text.strip_prefix("file:") {
            return Ok(EnvSpec::File(PathBuf::from(path.trim())));
        }
        if text.ends_with(".mdp") {
            return Ok(EnvSpec::File(PathBuf::from(text)));
        }
        let (name, args) = match text.find('(') {
            Some(open) => {
                let inner = text[open + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| Error::InvalidArgument(format!("missing ')' in environment '{text}'")))?;
                let args = inner
                    .split(',')
                    .map(|a| {
                        a.trim().parse::<u64>().map_err(|_| {
                            Error::InvalidArgument(format!("bad environment argument '{}' in '{text}'", a.trim()))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                (text[..open].trim(), args)
            }
            None => (text, Vec::new()),
        };
        let size = |v: u64| {
            usize::try_from(v)
                .ok()
                .filter(|&n| n <= 10_000)
                .ok_or_else(|| Error::InvalidArgument(format!("environment size {v} too large")))
        };
        let spec = match (name, args.as_slice()) {
            ("bandit2", []) => EnvSpec::Bandit2,
            ("plateau", []) => EnvSpec::Plateau,
            ("chain", &[n]) => EnvSpec::Chain(size(n)?),
            ("gridworld", &[w, h]) => EnvSpec::Gridworld(size(w)?, size(h)?),
            ("random", &[s, a, seed]) => EnvSpec::Random { states: size(s)?, actions: size(a)?, seed },
            _ => return Err(Error::InvalidArgument(format!("unknown environment '{text}'"))),
        };
        Ok(spec)
    }

    /// Resolves a relative file path against `base`.
    pub fn relative_to(self, base: &Path) -> Self {
        match self {
            EnvSpec::File(p) if p.is_relative() => EnvSpec::File(base.join(p)),
            other => other,
        }
    }
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvSpec::Bandit2 => write!(f, "bandit2"),
            EnvSpec::Chain(n) => write!(f, "chain({n})"),
            EnvSpec::Gridworld(w, h) => write!(f, "gridworld({w},{h})"),
            EnvSpec::Plateau => write!(f, "plateau"),
            EnvSpec::Random { states, actions, seed } => write!(f, "random({states},{actions},{seed})"),
            EnvSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

/// An MDP plus optional starting logits (one per state-action pair).
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    pub mdp: TabularMdp,
    pub start_logits: Option<Vec<f64>>,
}

pub fn build_environment(spec: &EnvSpec) -> Result<Environment> {
    let plain = |mdp| Ok(Environment { mdp, start_logits: None });
    match spec {
        EnvSpec::Bandit2 => plain(bandit2()?),
        EnvSpec::Chain(n) => plain(chain(*n)?),
        EnvSpec::Gridworld(w, h) => plain(gridworld(*w, *h)?),
        EnvSpec::Plateau => Ok(Environment { mdp: plateau()?, start_logits: Some(PLATEAU_START_LOGITS.to_vec()) }),
        EnvSpec::Random { states, actions, seed } => plain(random(*states, *actions, *seed)?),
        EnvSpec::File(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
            plain(super::parse_mdp(&text)?)
        }
    }
}

/// One state, two arms paying 1 and 0, a single pull per episode.
fn bandit2() -> Result<TabularMdp> {
    TabularMdp::new(1, 2, vec![1.0, 1.0], vec![1.0, 0.0], 0.9, vec![1.0], Horizon::Finite(1))
}

/// States `0..n`; action 0 moves right, action 1 moves left (clamped at 0).
/// Entering state `n−1` pays 1 and ends the episode.
fn chain(n: usize) -> Result<TabularMdp> {
    if n < 2 {
        return Err(Error::InvalidArgument("chain needs at least 2 states".into()));
    }
    let (ns, na) = (n, 2);
    let mut t = vec![0.0; ns * na * ns];
    let mut r = vec![0.0; ns * na];
    for s in 0..ns {
        let targets = if s == ns - 1 { [s, s] } else { [s + 1, s.saturating_sub(1)] };
        for (a, next) in targets.into_iter().enumerate() {
            t[(s * na + a) * ns + next] = 1.0;
        }
    }
    r[(ns - 2) * na] = 1.0;
    let mut mu0 = vec![0.0; ns];
    mu0[0] = 1.0;
    TabularMdp::new(ns, na, t, r, 0.9, mu0, Horizon::Unbounded)
}

/// `w × h` grid, row-major states, actions up/down/left/right. Start at the
/// top-left corner; entering the bottom-right corner pays 1 and ends the episode.
fn gridworld(w: usize, h: usize) -> Result<TabularMdp> {
    if w == 0 || h == 0 || w * h < 2 {
        return Err(Error::InvalidArgument("gridworld needs at least 2 cells".into()));
    }
    let (ns, na) = (w * h, 4);
    let goal = ns - 1;
    let mut t = vec![0.0; ns * na * ns];
    let mut r = vec![0.0; ns * na];
    for s in 0..ns {
        let (x, y) = (s % w, s / w);
        for a in 0..na {
            let next = if s == goal {
                s
            } else {
                match a {
                    0 => x + y.saturating_sub(1) * w,
                    1 => x + (y + 1).min(h - 1) * w,
                    2 => x.saturating_sub(1) + y * w,
                    _ => (x + 1).min(w - 1) + y * w,
                }
            };
            t[(s * na + a) * ns + next] = 1.0;
            if s != goal && next == goal {
                r[s * na + a] = 1.0;
            }
        }
    }
    let mut mu0 = vec![0.0; ns];
    mu0[0] = 1.0;
    TabularMdp::new(ns, na, t, r, 0.9, mu0, Horizon::Unbounded)
}

/// Starting logits for the plateau benchmark, `[s·A + a]`: both states
/// strongly prefer their locally safe but globally poor action.
pub(crate) const PLATEAU_START_LOGITS: [f64; 4] = [0.0, -8.0, 0.0, 0.0];

/// Two states, γ = 0.9. In state 0, action 0 collects 0.1 and stays while
/// action 1 collects nothing and moves to state 1. In state 1, action 0
/// collects 1 and stays while action 1 returns to state 0. The optimum
/// (move, then stay) is worth 9; the starting policy mostly idles for ≈1.
fn plateau() -> Result<TabularMdp> {
    let t = vec![
        1.0, 0.0, // s0 a0
        0.0, 1.0, // s0 a1
        0.0, 1.0, // s1 a0
        1.0, 0.0, // s1 a1
    ];
    TabularMdp::new(2, 2, t, vec![0.1, 0.0, 1.0, 0.0], 0.9, vec![1.0, 0.0], Horizon::Unbounded)
}

/// Dirichlet(1) transition rows and initial distribution, rewards uniform
/// on [0, 1), γ = 0.9, unbounded horizon.
fn random(ns: usize, na: usize, seed: u64) -> Result<TabularMdp> {
    if ns == 0 || na == 0 {
        return Err(Error::InvalidArgument("random MDP needs states and actions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        t.extend(dirichlet(ns, &mut rng));
    }
    let r = (0..ns * na).map(|_| rng.random::<f64>()).collect();
    let mu0 = dirichlet(ns, &mut rng);
    TabularMdp::new(ns, na, t, r, 0.9, mu0, Horizon::Unbounded)
}

fn dirichlet(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}
