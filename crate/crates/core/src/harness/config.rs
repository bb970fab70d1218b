//! Experiment configuration files: one `key = value` per line, `#` comments.
//!
//! | key          | values                                                    | default     |
//! |--------------|-----------------------------------------------------------|-------------|
//! | environment  | see [`EnvSpec::parse`]; relative files resolve against the config's directory | required |
//! | policy       | `gibbs`                                                   | `gibbs`     |
//! | features     | `one-hot`, `one-hot-reduced`                              | `one-hot`   |
//! | method       | `fd`, `episodic`, `reinforce`, `reinforce-ob`, `ac-bellman`, `npg`, `enac`, `exact` | required |
//! | schedule     | `constant(a)`, `harmonic(scale, offset)`                  | required    |
//! | iterations   | 1 ..= 1000000                                             | required    |
//! | seeds        | comma-separated integers and `a..b` ranges, non-empty     | required    |
//! | batch_size   | 1 ..= 1000000 (2 or more for `episodic`, `reinforce-ob`, sampled `npg`) | 100 |
//! | damping      | `auto`, `none`, or a non-negative number                  | `auto`      |
//! | mode         | `sampled`, `exact` (`npg` only)                           | `sampled`   |
//! | theta        | `default`, `random`, or comma-separated values            | `default`   |
//! | search_std   | positive number (`episodic` only)                         | 0.1         |
//! | fd_delta     | positive number (`fd` only)                               | 0.01        |
//! | output       | CSV path                                                  | none        |
//!
//! `theta = default` starts from the environment's documented starting
//! policy when it has one and from zero otherwise; `random` draws each
//! component from N(0, 1) with the run's seed.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::natural::{Damping, GradientMode};
use crate::schedule::StepSchedule;

use super::envs::EnvSpec;

const MAX_ITERATIONS: usize = 1_000_000;
const MAX_BATCH: usize = 1_000_000;
const MAX_SEEDS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    FiniteDifference,
    Episodic,
    Reinforce,
    ReinforceOptimalBaseline,
    ActorCriticBellman,
    Npg,
    Enac,
    Exact,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::FiniteDifference,
        Method::Episodic,
        Method::Reinforce,
        Method::ReinforceOptimalBaseline,
        Method::ActorCriticBellman,
        Method::Npg,
        Method::Enac,
        Method::Exact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::FiniteDifference => "fd",
            Method::Episodic => "episodic",
            Method::Reinforce => "reinforce",
            Method::ReinforceOptimalBaseline => "reinforce-ob",
            Method::ActorCriticBellman => "ac-bellman",
            Method::Npg => "npg",
            Method::Enac => "enac",
            Method::Exact => "exact",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureChoice {
    /// One indicator per state-action pair.
    OneHot,
    /// Indicators for actions `1..A` only; action 0 is the per-state reference.
    OneHotReduced,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ThetaInit {
    Default,
    Random,
    Values(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub environment: EnvSpec,
    pub features: FeatureChoice,
    pub method: Method,
    pub schedule: StepSchedule,
    pub batch_size: usize,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    pub damping: Damping,
    pub mode: GradientMode,
    pub theta: ThetaInit,
    pub search_std: f64,
    pub fd_delta: f64,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Reads and parses a config file; relative environment paths resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.environment = config.environment.relative_to(base);
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut environment = None;
        let mut features = FeatureChoice::OneHot;
        let mut method = None;
        let mut schedule = None;
        let mut batch_size = 100;
        let mut iterations = None;
        let mut seeds = None;
        let mut damping = Damping::Auto;
        let mut mode = GradientMode::Sampled;
        let mut theta = ThetaInit::Default;
        let mut search_std = 0.1;
        let mut fd_delta = 0.01;
        let mut output = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::parse(line, format!("expected 'key = value', found '{content}'")))?;
            if !seen.insert(key.to_string()) {
                return Err(Error::parse(line, format!("duplicate key '{key}'")));
            }
            let at = |e: Error| Error::parse(line, e.to_string());
            match key {
                "environment" => environment = Some(EnvSpec::parse(value).map_err(at)?),
                "policy" => {
                    if value != "gibbs" {
                        return Err(Error::parse(line, format!("unknown policy '{value}' (expected 'gibbs')")));
                    }
                }
                "features" => {
                    features = match value {
                        "one-hot" => FeatureChoice::OneHot,
                        "one-hot-reduced" => FeatureChoice::OneHotReduced,
                        _ => return Err(Error::parse(line, format!("unknown features '{value}'"))),
                    }
                }
                "method" => {
                    method = Some(
                        Method::ALL
                            .into_iter()
                            .find(|m| m.name() == value)
                            .ok_or_else(|| Error::parse(line, format!("unknown method '{value}'")))?,
                    )
                }
                "schedule" => schedule = Some(parse_schedule(value).map_err(at)?),
                "batch_size" => batch_size = parse_count(value, MAX_BATCH).map_err(at)?,
                "iterations" => iterations = Some(parse_count(value, MAX_ITERATIONS).map_err(at)?),
                "seeds" => seeds = Some(parse_seeds(value).map_err(at)?),
                "damping" => {
                    damping = match value {
                        "auto" => Damping::Auto,
                        "none" | "0" => Damping::None,
                        v => Damping::Fixed(parse_positive(v).map_err(at)?),
                    }
                }
                "mode" => {
                    mode = match value {
                        "sampled" => GradientMode::Sampled,
                        "exact" => GradientMode::Exact,
                        _ => return Err(Error::parse(line, format!("unknown mode '{value}'"))),
                    }
                }
                "theta" => {
                    theta = match value {
                        "default" => ThetaInit::Default,
                        "random" => ThetaInit::Random,
                        v => ThetaInit::Values(parse_list(v).map_err(at)?),
                    }
                }
                "search_std" => search_std = parse_positive(value).map_err(at)?,
                "fd_delta" => fd_delta = parse_positive(value).map_err(at)?,
                "output" => {
                    if value.is_empty() {
                        return Err(Error::parse(line, "empty output path"));
                    }
                    output = Some(PathBuf::from(value));
                }
                _ => return Err(Error::parse(line, format!("unknown key '{key}'"))),
            }
        }

        let missing = |key: &str| Error::InvalidArgument(format!("config is missing '{key}'"));
        let config = ExperimentConfig {
            environment: environment.ok_or_else(|| missing("environment"))?,
            features,
            method: method.ok_or_else(|| missing("method"))?,
            schedule: schedule.ok_or_else(|| missing("schedule"))?,
            batch_size,
            iterations: iterations.ok_or_else(|| missing("iterations"))?,
            seeds: seeds.ok_or_else(|| missing("seeds"))?,
            damping,
            mode,
            theta,
            search_std,
            fd_delta,
            output,
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidArgument(msg));
        self.schedule.validate()?;
        if self.seeds.is_empty() {
            return invalid("seeds list is empty".into());
        }
        if !(1..=MAX_ITERATIONS).contains(&self.iterations) {
            return invalid(format!("iterations must lie in 1..={MAX_ITERATIONS}"));
        }
        if !(1..=MAX_BATCH).contains(&self.batch_size) {
            return invalid(format!("batch_size must lie in 1..={MAX_BATCH}"));
        }
        let needs_pairs = match self.method {
            Method::Episodic | Method::ReinforceOptimalBaseline => true,
            Method::Npg => self.mode == GradientMode::Sampled,
            _ => false,
        };
        if needs_pairs && self.batch_size < 2 {
            return invalid(format!("method '{}' needs batch_size >= 2", self.method));
        }
        if let Damping::Fixed(l) = self.damping {
            if !(l >= 0.0 && l.is_finite()) {
                return invalid(format!("damping must be non-negative, got {l}"));
            }
        }
        Ok(())
    }
}

fn parse_schedule(text: &str) -> Result<StepSchedule> {
    let bad = || Error::InvalidArgument(format!("expected 'constant(a)' or 'harmonic(scale, offset)', found '{text}'"));
    let (name, rest) = text.split_once('(').ok_or_else(bad)?;
    let args = parse_list(rest.strip_suffix(')').ok_or_else(bad)?)?;
    let schedule = match (name.trim(), args.as_slice()) {
        ("constant", &[a]) => StepSchedule::Constant(a),
        ("harmonic", &[scale, offset]) => StepSchedule::Harmonic { scale, offset },
        _ => return Err(bad()),
    };
    schedule.validate()?;
    Ok(schedule)
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::InvalidArgument(format!("expected a finite number, found '{t}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(values)
}

fn parse_positive(text: &str) -> Result<f64> {
    match text.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        _ => Err(Error::InvalidArgument(format!("expected a positive number, found '{text}'"))),
    }
}

fn parse_count(text: &str, max: usize) -> Result<usize> {
    match text.parse::<usize>() {
        Ok(n) if (1..=max).contains(&n) => Ok(n),
        _ => Err(Error::InvalidArgument(format!("expected an integer in 1..={max}, found '{text}'"))),
    }
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for item in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let int = |t: &str| {
            t.trim().parse::<u64>().map_err(|_| Error::InvalidArgument(format!("bad seed '{}'", t.trim())))
        };
        match item.split_once("..") {
            Some((lo, hi)) => {
                let (lo, hi) = (int(lo)?, int(hi)?);
                if hi.saturating_sub(lo) as usize + seeds.len() > MAX_SEEDS {
                    return Err(Error::InvalidArgument(format!("more than {MAX_SEEDS} seeds")));
                }
                seeds.extend(lo..hi);
            }
            None => seeds.push(int(item)?),
        }
        if seeds.len() > MAX_SEEDS {
            return Err(Error::InvalidArgument(format!("more than {MAX_SEEDS} seeds")));
        }
    }
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("seeds list is empty".into()));
    }
    let mut unique = seeds.clone();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != seeds.len() {
        return Err(Error::InvalidArgument("seeds list contains duplicates".into()));
    }
    Ok(seeds)
}
