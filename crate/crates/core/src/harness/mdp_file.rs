//! Plain-text MDP files.
//!
//! ```text
//! # two-state example
//! states = 2
//! actions = 2
//! gamma = 0.9
//! horizon = inf          # or a positive integer
//! mu0 = 1 0
//! reward:                # one row per state, one column per action
//!   0 1
//!   0 0
//! transition:            # one row per (state, action), state-major
//!   1 0                  # s=0 a=0
//!   0 1                  # s=0 a=1
//!   0 1                  # s=1 a=0
//!   0 1                  # s=1 a=1
//! ```
//!
//! Numbers are separated by whitespace or commas and `#` starts a comment.
//! `states` and `actions` must precede the tables.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mdp::{Horizon, TabularMdp, STOCHASTIC_TOL};

const MAX_ENTRIES: usize = 10_000_000;

#[derive(Clone, Copy, PartialEq)]
enum Block {
    Reward,
    Transition,
}

#[derive(Default)]
struct Partial {
    states: Option<usize>,
    actions: Option<usize>,
    gamma: Option<f64>,
    horizon: Option<Horizon>,
    mu0: Option<Vec<f64>>,
    reward: Option<Vec<f64>>,
    transition: Option<Vec<f64>>,
}

pub fn parse_mdp(text: &str) -> Result<TabularMdp> {
    let mut p = Partial::default();
    // block being filled, rows still expected, line of its header
    let mut open: Option<(Block, usize, usize)> = None;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }

        if let Some((block, remaining, _)) = open {
            if starts_with_number(content) {
                let values = numbers(content, line)?;
                match block {
                    Block::Reward => {
                        let na = p.actions.unwrap_or(0);
                        if values.len() != na {
                            return Err(Error::parse(line, format!("reward row has {} entries, expected {na}", values.len())));
                        }
                        p.reward.get_or_insert_with(Vec::new).extend(values);
                    }
                    Block::Transition => {
                        let (ns, na) = (p.states.unwrap_or(0), p.actions.unwrap_or(0));
                        let row = ns * na - remaining;
                        let what = format!("transition row (s={}, a={})", row / na, row % na);
                        check_distribution(&values, ns, line, &what)?;
                        p.transition.get_or_insert_with(Vec::new).extend(values);
                    }
                }
                open = (remaining > 1).then_some((block, remaining - 1, line));
                continue;
            }
            return Err(incomplete(block, remaining, line));
        }

        if let Some(name) = content.strip_suffix(':') {
            let name = name.trim();
            let block = match name {
                "reward" => Block::Reward,
                "transition" => Block::Transition,
                _ => return Err(Error::parse(line, format!("unknown table '{name}'"))),
            };
            let (ns, na) = match (p.states, p.actions) {
                (Some(ns), Some(na)) => (ns, na),
                _ => return Err(Error::parse(line, format!("'{name}' must come after 'states' and 'actions'"))),
            };
            let filled = match block {
                Block::Reward => p.reward.is_some(),
                Block::Transition => p.transition.is_some(),
            };
            if filled {
                return Err(Error::parse(line, format!("duplicate table '{name}'")));
            }
            let rows = if block == Block::Reward { ns } else { ns * na };
            match block {
                Block::Reward => p.reward = Some(Vec::with_capacity(ns * na)),
                Block::Transition => p.transition = Some(Vec::with_capacity(ns * na * ns)),
            }
            open = Some((block, rows, line));
            continue;
        }

        let (key, value) = content
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::parse(line, format!("expected 'key = value' or 'table:', found '{content}'")))?;
        let dup = || Error::parse(line, format!("duplicate key '{key}'"));
        match key {
            "states" | "actions" => {
                let n: usize = value
                    .parse()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| Error::parse(line, format!("'{key}' must be a positive integer, got '{value}'")))?;
                let slot = if key == "states" { &mut p.states } else { &mut p.actions };
                if slot.replace(n).is_some() {
                    return Err(dup());
                }
                if let (Some(ns), Some(na)) = (p.states, p.actions) {
                    if ns.checked_mul(ns).and_then(|x| x.checked_mul(na)).is_none_or(|x| x > MAX_ENTRIES) {
                        return Err(Error::parse(line, "MDP too large"));
                    }
                }
            }
            "gamma" => {
                let g = parse_f64(value, line)?;
                if !(0.0..1.0).contains(&g) {
                    return Err(Error::parse(line, format!("gamma must lie in [0, 1), got {value}")));
                }
                if p.gamma.replace(g).is_some() {
                    return Err(dup());
                }
            }
            "horizon" => {
                let h = match value {
                    "inf" | "unbounded" => Horizon::Unbounded,
                    v => Horizon::Finite(v.parse().ok().filter(|&t: &usize| t > 0).ok_or_else(|| {
                        Error::parse(line, format!("horizon must be 'inf' or a positive integer, got '{v}'"))
                    })?),
                };
                if p.horizon.replace(h).is_some() {
                    return Err(dup());
                }
            }
            "mu0" => {
                let ns = p.states.ok_or_else(|| Error::parse(line, "'mu0' must come after 'states'"))?;
                let values = numbers(value, line)?;
                check_distribution(&values, ns, line, "mu0")?;
                if p.mu0.replace(values).is_some() {
                    return Err(dup());
                }
            }
            _ => return Err(Error::parse(line, format!("unknown key '{key}'"))),
        }
    }

    if let Some((block, remaining, _)) = open {
        return Err(incomplete(block, remaining, last_line + 1));
    }
    let end = last_line + 1;
    let missing = |name: &str| Error::parse(end, format!("missing '{name}'"));
    let ns = p.states.ok_or_else(|| missing("states"))?;
    let na = p.actions.ok_or_else(|| missing("actions"))?;
    TabularMdp::new(
        ns,
        na,
        p.transition.ok_or_else(|| missing("transition"))?,
        p.reward.ok_or_else(|| missing("reward"))?,
        p.gamma.ok_or_else(|| missing("gamma"))?,
        p.mu0.ok_or_else(|| missing("mu0"))?,
        p.horizon.ok_or_else(|| missing("horizon"))?,
    )
}

/// Writes `mdp` in the format read by [`parse_mdp`]; the round trip is exact.
pub fn format_mdp(mdp: &TabularMdp) -> String {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let join = |xs: &mut dyn Iterator<Item = f64>| xs.map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let mut out = String::new();
    let _ = writeln!(out, "states = {ns}");
    let _ = writeln!(out, "actions = {na}");
    let _ = writeln!(out, "gamma = {}", mdp.discount());
    match mdp.horizon() {
        Horizon::Unbounded => out.push_str("horizon = inf\n"),
        Horizon::Finite(t) => {
            let _ = writeln!(out, "horizon = {t}");
        }
    }
    let _ = writeln!(out, "mu0 = {}", join(&mut mdp.initial_dist().iter().copied()));
    out.push_str("reward:\n");
    for s in 0..ns {
        let _ = writeln!(out, "  {}", join(&mut (0..na).map(|a| mdp.reward(s, a))));
    }
    out.push_str("transition:\n");
    for s in 0..ns {
        for a in 0..na {
            let _ = writeln!(out, "  {}  # s={s} a={a}", join(&mut mdp.transition_row(s, a).iter().copied()));
        }
    }
    out
}

fn incomplete(block: Block, remaining: usize, line: usize) -> Error {
    let name = if block == Block::Reward { "reward" } else { "transition" };
    Error::parse(line, format!("'{name}' table is missing {remaining} row(s)"))
}

fn starts_with_number(s: &str) -> bool {
    s.starts_with(|c: char| c.is_ascii_digit() || matches!(c, '-' | '+' | '.'))
        || s.starts_with("inf")
        || s.starts_with("NaN")
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::parse(line, format!("expected a finite number, found '{s}'")))
}

fn numbers(s: &str, line: usize) -> Result<Vec<f64>> {
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| parse_f64(t, line))
        .collect()
}

fn check_distribution(values: &[f64], len: usize, line: usize, what: &str) -> Result<()> {
    if values.len() != len {
        return Err(Error::parse(line, format!("{what} has {} entries, expected {len}", values.len())));
    }
    if values.iter().any(|&p| p < 0.0) {
        return Err(Error::parse(line, format!("{what} has a negative probability")));
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::parse(line, format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}
