//! Experiment configuration: a flat `key = value` file with `#` comments.
//!
//! ```text
//! agents = 25
//! bandits = 5
//! arms = 20
//! peer_size = 5
//! scenarios = unaware, aware, no-comm, full-comm, fully-aware
//! alpha = 15
//! beta = 3
//! sticky_mode = partition     # or random
//! sticky_size = 4             # optional, see below
//! mean_low = 0
//! mean_high = 1
//! horizon = 200000
//! replications = 30
//! master_seed = 1
//! ```
//!
//! Optional keys: `gamma` (0.1), `c1` (sticky-size formula constant, default
//! taken from the group sizes), `grid_points` (100), `workers` (0 = all cores),
//! `noise` (`gaussian` or `zero`), `tail_fraction` (0.25), `instance` (path of
//! a fixed instance file), `event_log` (directory for per-scenario event logs
//! of replication 0), `output_dir` (`out`).
//!
//! Without `sticky_size`, partition mode uses `K / N_m` and random mode uses
//! `ceil(M K / (c1 N) ln(M / gamma))`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::env::{max_sticky_size, MeanRange, NoiseModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate key `{0}`")]
    Duplicate(String),
    #[error("missing key `{0}`")]
    Missing(&'static str),
    #[error("bad value for `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {msg}")]
    Read { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    Unaware,
    Aware,
    NoComm,
    FullComm,
    FullyAware,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [Scenario::Unaware, Scenario::Aware, Scenario::NoComm, Scenario::FullComm, Scenario::FullyAware];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Unaware => "unaware",
            Scenario::Aware => "aware",
            Scenario::NoComm => "no-comm",
            Scenario::FullComm => "full-comm",
            Scenario::FullyAware => "fully-aware",
        }
    }

    /// Stable small integer used to key random streams.
    pub fn id(self) -> u32 {
        self as u32
    }

    /// Runs the phased gossip loop.
    pub fn gossips(self) -> bool {
        matches!(self, Scenario::Unaware | Scenario::Aware | Scenario::FullyAware)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "unaware" => Ok(Scenario::Unaware),
            "aware" => Ok(Scenario::Aware),
            "no-comm" | "nocomm" => Ok(Scenario::NoComm),
            "full-comm" | "fullcomm" => Ok(Scenario::FullComm),
            "fully-aware" | "fullyaware" => Ok(Scenario::FullyAware),
            other => Err(format!("unknown scenario `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StickyKind {
    Random,
    Partition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub agents: usize,
    pub bandits: usize,
    pub arms: usize,
    pub peer_size: Option<usize>,
    pub scenarios: Vec<Scenario>,
    pub alpha: f64,
    pub beta: f64,
    pub sticky_kind: StickyKind,
    pub sticky_size: Option<usize>,
    pub gamma: f64,
    pub c1: Option<f64>,
    pub mean_range: MeanRange,
    pub horizon: u64,
    pub replications: usize,
    pub master_seed: u64,
    pub grid_points: usize,
    pub workers: usize,
    pub noise: NoiseModel,
    pub tail_fraction: f64,
    pub instance: Option<PathBuf>,
    pub event_log: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl SimConfig {
    /// Defaults for everything but the problem shape.
    pub fn new(agents: usize, bandits: usize, arms: usize) -> Self {
        Self {
            agents,
            bandits,
            arms,
            peer_size: None,
            scenarios: vec![Scenario::Unaware],
            alpha: 15.0,
            beta: 3.0,
            sticky_kind: StickyKind::Random,
            sticky_size: None,
            gamma: 0.1,
            c1: None,
            mean_range: MeanRange::unit(),
            horizon: 200_000,
            replications: 30,
            master_seed: 1,
            grid_points: 100,
            workers: 0,
            noise: NoiseModel::Gaussian,
            tail_fraction: 0.25,
            instance: None,
            event_log: None,
            output_dir: PathBuf::from("out"),
        }
    }

    /// 25 agents on 5 bandits with 20 arms, blocks of 5, partition sticky sets of 4.
    pub fn standard() -> Self {
        let mut c = Self::new(25, 5, 20);
        c.peer_size = Some(5);
        c.scenarios = Scenario::ALL.to_vec();
        c.alpha = 15.0;
        c.sticky_kind = StickyKind::Partition;
        c.sticky_size = Some(4);
        c
    }

    /// 36 agents on 6 bandits with 30 arms, blocks of 6, means in [2, 4).
    pub fn shifted() -> Self {
        let mut c = Self::new(36, 6, 30);
        c.peer_size = Some(6);
        c.scenarios = Scenario::ALL.to_vec();
        c.alpha = 30.0;
        c.sticky_kind = StickyKind::Partition;
        c.sticky_size = Some(5);
        c.mean_range = MeanRange::new(2.0, 4.0).expect("valid range");
        c
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), msg: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: no + 1, msg: format!("expected `key = value`, got `{line}`") })?;
            let key = k.trim().to_ascii_lowercase();
            if pairs.iter().any(|(p, _)| *p == key) {
                return Err(ConfigError::Duplicate(key));
            }
            pairs.push((key, v.trim().to_string()));
        }
        let get = |key: &str| pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let agents = parse_count(get("agents").ok_or(ConfigError::Missing("agents"))?, "agents")?;
        let bandits = parse_count(get("bandits").ok_or(ConfigError::Missing("bandits"))?, "bandits")?;
        let arms = parse_count(get("arms").ok_or(ConfigError::Missing("arms"))?, "arms")?;
        let mut c = Self::new(agents, bandits, arms);
        let mut low = 0.0;
        let mut high = 1.0;
        for (key, value) in &pairs {
            let v = value.as_str();
            match key.as_str() {
                "agents" | "bandits" | "arms" => {}
                "peer_size" => c.peer_size = Some(parse_count(v, key)?),
                "scenarios" => {
                    c.scenarios = v
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| s.parse().map_err(|msg| ConfigError::Value { key: key.clone(), msg }))
                        .collect::<Result<_, _>>()?;
                }
                "alpha" => c.alpha = parse_f64(v, key)?,
                "beta" => c.beta = parse_f64(v, key)?,
                "sticky_mode" => {
                    c.sticky_kind = match v.to_ascii_lowercase().as_str() {
                        "random" => StickyKind::Random,
                        "partition" => StickyKind::Partition,
                        other => return Err(value_err(key, format!("expected random or partition, got `{other}`"))),
                    }
                }
                "sticky_size" => c.sticky_size = Some(parse_count(v, key)?),
                "gamma" => c.gamma = parse_f64(v, key)?,
                "c1" => c.c1 = Some(parse_f64(v, key)?),
                "mean_low" => low = parse_f64(v, key)?,
                "mean_high" => high = parse_f64(v, key)?,
                "horizon" => c.horizon = parse_count(v, key)? as u64,
                "replications" => c.replications = parse_count(v, key)?,
                "master_seed" => c.master_seed = v.parse().map_err(|e| value_err(key, format!("{e}")))?,
                "grid_points" => c.grid_points = parse_count(v, key)?,
                "workers" => c.workers = parse_count(v, key)?,
                "noise" => {
                    c.noise = match v.to_ascii_lowercase().as_str() {
                        "gaussian" => NoiseModel::Gaussian,
                        "zero" | "none" => NoiseModel::Zero,
                        other => return Err(value_err(key, format!("expected gaussian or zero, got `{other}`"))),
                    }
                }
                "tail_fraction" => c.tail_fraction = parse_f64(v, key)?,
                "instance" => c.instance = Some(PathBuf::from(v)),
                "event_log" => c.event_log = Some(PathBuf::from(v)),
                "output_dir" => c.output_dir = PathBuf::from(v),
                _ => return Err(ConfigError::UnknownKey(key.clone())),
            }
        }
        c.mean_range = MeanRange::new(low, high).map_err(|e| value_err("mean_low/mean_high", e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Group sizes of the default split: as equal as possible, earlier
    /// bandits taking the remainder.
    pub fn group_sizes(&self) -> Vec<usize> {
        let base = self.agents / self.bandits.max(1);
        let extra = self.agents % self.bandits.max(1);
        (0..self.bandits).map(|m| base + usize::from(m < extra)).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.bandits == 0 || self.agents < 2 || self.arms < 2 {
            return bad("need at least 1 bandit, 2 agents and 2 arms".into());
        }
        if self.agents < 2 * self.bandits {
            return bad(format!("{} agents cannot give {} bandits two agents each", self.agents, self.bandits));
        }
        if self.scenarios.is_empty() {
            return bad("no scenarios listed".into());
        }
        let mut seen = self.scenarios.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.scenarios.len() {
            return bad("a scenario is listed twice".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return bad(format!("beta must exceed 1, got {}", self.beta));
        }
        if self.horizon == 0 || self.replications == 0 || self.grid_points == 0 {
            return bad("horizon, replications and grid_points must be positive".into());
        }
        if self.replications > u32::MAX as usize {
            return bad("too many replications".into());
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return bad(format!("tail_fraction must lie in (0, 1], got {}", self.tail_fraction));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if let Some(c1) = self.c1 {
            if !(c1 > 0.0) {
                return bad(format!("c1 must be positive, got {c1}"));
            }
        }
        let aware = self.scenarios.contains(&Scenario::Aware);
        match (aware, self.peer_size) {
            (true, None) => return bad("the aware scenario needs peer_size".into()),
            (false, Some(_)) => return bad("peer_size is only used by the aware scenario".into()),
            _ => {}
        }
        let sizes = self.group_sizes();
        if let Some(r) = self.peer_size {
            if r < 2 {
                return bad(format!("peer_size must be at least 2, got {r}"));
            }
            if sizes.iter().any(|&s| s % r != 0) {
                return bad(format!("every group size {sizes:?} must be a multiple of peer_size {r}"));
            }
        }
        let limit = max_sticky_size(self.arms, self.bandits, self.peer_size);
        if self.sticky_kind == StickyKind::Partition {
            if sizes.iter().any(|&s| s != sizes[0]) {
                return bad(format!("partition sticky sets need equal groups, got {sizes:?}"));
            }
            let s = self.sticky_size.unwrap_or(self.arms / sizes[0]);
            if s * sizes[0] != self.arms {
                return bad(format!("partition sticky sets need K = S * N_m, got K = {}, S = {s}, N_m = {}", self.arms, sizes[0]));
            }
        }
        if let Some(s) = self.sticky_size {
            if s == 0 || s > limit {
                return bad(format!("sticky_size {s} must lie in 1..={limit}"));
            }
        }
        Ok(())
    }
}

fn value_err(key: &str, msg: String) -> ConfigError {
    ConfigError::Value { key: key.to_string(), msg }
}

/// Non-negative integer; accepts `2e5`-style input when integral.
fn parse_count(v: &str, key: &str) -> Result<usize, ConfigError> {
    if let Ok(n) = v.parse::<usize>() {
        return Ok(n);
    }
    match v.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < 1e15 => Ok(x as usize),
        _ => Err(value_err(key, format!("expected a non-negative integer, got `{v}`"))),
    }
}

fn parse_f64(v: &str, key: &str) -> Result<f64, ConfigError> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(value_err(key, format!("expected a number, got `{v}`"))),
    }
}
