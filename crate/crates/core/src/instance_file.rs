//! Text format for a fixed problem instance.
//!
//! ```text
//! # two bandits, three arms, four agents
//! bandits 2
//! arms 3
//! mean 0 0.9 0.1 0.2
//! mean 1 0.3 0.8 0.1
//! assign 0 0 2          # bandit 0 is learned by agents 0 and 2
//! assign 1 1 3
//! block 0 0 2           # optional peer blocks
//! block 1 1 3
//! sticky 0 0 1          # optional sticky set of each agent
//! sticky 1 1 2
//! sticky 2 2
//! sticky 3 0
//! ```
//!
//! Optional scalar lines `alpha`, `beta`, `horizon`, `sticky_size`, `c1` and
//! `c2` supply defaults for the bound calculator.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::env::{Assignment, BanditSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {msg}")]
    Read { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub bandits: BanditSet,
    pub assignment: Option<Assignment>,
    pub sticky: Option<Vec<Vec<usize>>>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub horizon: Option<u64>,
    pub sticky_size: Option<usize>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
}

impl InstanceSpec {
    pub fn new(bandits: BanditSet) -> Self {
        Self { bandits, assignment: None, sticky: None, alpha: None, beta: None, horizon: None, sticky_size: None, c1: None, c2: None }
    }

    pub fn from_file(path: &Path) -> Result<Self, InstanceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| InstanceError::Read { path: path.display().to_string(), msg: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, InstanceError> {
        let mut m_count: Option<usize> = None;
        let mut k_count: Option<usize> = None;
        let mut means: Vec<Option<Vec<f64>>> = Vec::new();
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut blocks: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut sticky: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut spec_scalars: Vec<(String, String, usize)> = Vec::new();

        for (no, raw) in text.lines().enumerate() {
            let line_no = no + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            let key = words.next().unwrap_or_default();
            let rest: Vec<&str> = words.collect();
            let syn = |msg: String| InstanceError::Syntax { line: line_no, msg };
            let uint = |s: &str| s.parse::<usize>().map_err(|_| syn(format!("expected an integer, got `{s}`")));
            match key {
                "bandits" | "arms" => {
                    let [v] = rest.as_slice() else { return Err(syn(format!("`{key}` takes one value"))) };
                    let v = uint(v)?;
                    if key == "bandits" {
                        m_count = Some(v);
                        means.resize(v, None);
                    } else {
                        k_count = Some(v);
                    }
                }
                "mean" => {
                    let (m, vals) = rest.split_first().ok_or_else(|| syn("`mean` needs a bandit index".into()))?;
                    let m = uint(m)?;
                    let row: Vec<f64> = vals
                        .iter()
                        .map(|s| s.parse::<f64>().map_err(|_| syn(format!("expected a number, got `{s}`"))))
                        .collect::<Result<_, _>>()?;
                    if m >= means.len() {
                        return Err(syn(format!("bandit {m} is out of range (declare `bandits` first)")));
                    }
                    if means[m].is_some() {
                        return Err(syn(format!("bandit {m} has two mean lines")));
                    }
                    means[m] = Some(row);
                }
                "assign" | "block" | "sticky" => {
                    let (idx, vals) = rest.split_first().ok_or_else(|| syn(format!("`{key}` needs an index")))?;
                    let idx = uint(idx)?;
                    let list: Vec<usize> = vals.iter().map(|s| uint(s)).collect::<Result<_, _>>()?;
                    match key {
                        "assign" => groups.push((idx, list)),
                        "block" => blocks.push((idx, list)),
                        _ => sticky.push((idx, list)),
                    }
                }
                "agents" | "peer_size" => {
                    // informational; checked against the lists below
                    let [v] = rest.as_slice() else { return Err(syn(format!("`{key}` takes one value"))) };
                    spec_scalars.push((key.to_string(), v.to_string(), line_no));
                }
                "alpha" | "beta" | "horizon" | "sticky_size" | "c1" | "c2" => {
                    let [v] = rest.as_slice() else { return Err(syn(format!("`{key}` takes one value"))) };
                    spec_scalars.push((key.to_string(), v.to_string(), line_no));
                }
                other => return Err(syn(format!("unknown key `{other}`"))),
            }
        }

        let m = m_count.ok_or_else(|| InstanceError::Invalid("missing `bandits` line".into()))?;
        let k = k_count.ok_or_else(|| InstanceError::Invalid("missing `arms` line".into()))?;
        let rows: Vec<Vec<f64>> = means
            .into_iter()
            .enumerate()
            .map(|(b, r)| r.ok_or_else(|| InstanceError::Invalid(format!("bandit {b} has no mean line"))))
            .collect::<Result<_, _>>()?;
        if rows.iter().any(|r| r.len() != k) {
            return Err(InstanceError::Invalid(format!("every mean line needs {k} values")));
        }
        let bandits = BanditSet::from_means(rows).map_err(|e| InstanceError::Invalid(e.to_string()))?;
        let mut spec = InstanceSpec::new(bandits);

        if !groups.is_empty() {
            let groups = indexed(groups, m, "assign")?;
            let blocks = if blocks.is_empty() {
                None
            } else {
                let count = blocks.len();
                Some(indexed(blocks, count, "block")?)
            };
            spec.assignment = Some(Assignment::from_groups(groups, blocks).map_err(|e| InstanceError::Invalid(e.to_string()))?);
        } else if !blocks.is_empty() {
            return Err(InstanceError::Invalid("`block` lines need `assign` lines".into()));
        }
        if !sticky.is_empty() {
            let n = spec
                .assignment
                .as_ref()
                .map(Assignment::num_agents)
                .ok_or_else(|| InstanceError::Invalid("`sticky` lines need `assign` lines".into()))?;
            let sets = indexed(sticky, n, "sticky")?;
            if sets.iter().flatten().any(|&a| a >= k) {
                return Err(InstanceError::Invalid("sticky arm out of range".into()));
            }
            spec.sticky = Some(sets);
        }

        for (key, v, line) in spec_scalars {
            let syn = |msg: String| InstanceError::Syntax { line, msg };
            let num = || v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| syn(format!("bad number `{v}`")));
            let count = || {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| *x >= 0.0 && x.fract() == 0.0)
                    .map(|x| x as u64)
                    .ok_or_else(|| syn(format!("bad count `{v}`")))
            };
            match key.as_str() {
                "alpha" => spec.alpha = Some(num()?),
                "beta" => spec.beta = Some(num()?),
                "c1" => spec.c1 = Some(num()?),
                "c2" => spec.c2 = Some(num()?),
                "horizon" => spec.horizon = Some(count()?),
                "sticky_size" => spec.sticky_size = Some(count()? as usize),
                "agents" => {
                    if let Some(a) = &spec.assignment {
                        if count()? as usize != a.num_agents() {
                            return Err(syn("`agents` disagrees with the assign lines".into()));
                        }
                    }
                }
                "peer_size" => {
                    if let Some(r) = spec.assignment.as_ref().and_then(Assignment::peer_size) {
                        if count()? as usize != r {
                            return Err(syn("`peer_size` disagrees with the block lines".into()));
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
        Ok(spec)
    }

    /// Text form; floats in shortest round-trip notation.
    pub fn to_text(&self) -> String {
        let b = &self.bandits;
        let mut s = String::new();
        let _ = writeln!(s, "bandits {}", b.num_bandits());
        let _ = writeln!(s, "arms {}", b.num_arms());
        if let Some(a) = &self.assignment {
            let _ = writeln!(s, "agents {}", a.num_agents());
            if let Some(r) = a.peer_size() {
                let _ = writeln!(s, "peer_size {r}");
            }
        }
        for (m, row) in b.means().iter().enumerate() {
            let _ = write!(s, "mean {m}");
            for x in row {
                let _ = write!(s, " {x:?}");
            }
            s.push('\n');
        }
        if let Some(a) = &self.assignment {
            for (m, g) in a.groups().iter().enumerate() {
                write_list(&mut s, "assign", m, g);
            }
            if let Some(blocks) = a.blocks() {
                for (z, bl) in blocks.iter().enumerate() {
                    write_list(&mut s, "block", z, bl);
                }
            }
        }
        if let Some(sets) = &self.sticky {
            for (i, set) in sets.iter().enumerate() {
                write_list(&mut s, "sticky", i, set);
            }
        }
        let scalars = [("alpha", self.alpha), ("beta", self.beta), ("c1", self.c1), ("c2", self.c2)];
        for (k, v) in scalars {
            if let Some(v) = v {
                let _ = writeln!(s, "{k} {v:?}");
            }
        }
        if let Some(h) = self.horizon {
            let _ = writeln!(s, "horizon {h}");
        }
        if let Some(ss) = self.sticky_size {
            let _ = writeln!(s, "sticky_size {ss}");
        }
        s
    }
}

fn write_list(s: &mut String, key: &str, idx: usize, list: &[usize]) {
    let _ = write!(s, "{key} {idx}");
    for x in list {
        let _ = write!(s, " {x}");
    }
    s.push('\n');
}

/// Orders `(index, list)` lines into a dense vector of length `n`.
fn indexed(lines: Vec<(usize, Vec<usize>)>, n: usize, key: &str) -> Result<Vec<Vec<usize>>, InstanceError> {
    let mut out: Vec<Option<Vec<usize>>> = vec![None; n];
    for (i, list) in lines {
        let slot = out.get_mut(i).ok_or_else(|| InstanceError::Invalid(format!("`{key} {i}` is out of range")))?;
        if slot.is_some() {
            return Err(InstanceError::Invalid(format!("`{key} {i}` appears twice")));
        }
        *slot = Some(list);
    }
    out.into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| InstanceError::Invalid(format!("missing `{key} {i}` line"))))
        .collect()
}
