//! Problem instances: arm means, reward noise, agent-to-bandit assignment and
//! sticky-set construction.
//!
//! Arms, bandits and agents are 0-based everywhere in the crate.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("need at least 2 arms, got {0}")]
    TooFewArms(usize),
    #[error("need at least 1 bandit")]
    NoBandits,
    #[error("mean range [{low}, {high}) is empty")]
    EmptyRange { low: f64, high: f64 },
    #[error("row {row} has {got} arms, expected {expected}")]
    RaggedMeans { row: usize, got: usize, expected: usize },
    #[error("bandit {0} has no strictly unique best arm")]
    TiedBest(usize),
    #[error("mean for bandit {bandit}, arm {arm} is not finite")]
    NonFiniteMean { bandit: usize, arm: usize },
    #[error("index out of range: bandit {bandit}, arm {arm} (instance is {m}x{k})")]
    OutOfRange { bandit: usize, arm: usize, m: usize, k: usize },
    #[error("{agents} agents cannot be split evenly over {bandits} bandits")]
    Indivisible { agents: usize, bandits: usize },
    #[error("group sizes sum to {got}, expected {expected}")]
    SizeMismatch { got: usize, expected: usize },
    #[error("group sizes must be positive")]
    EmptyGroup,
    #[error("peer-block size {r} does not divide group {group} of size {size}")]
    BlockIndivisible { r: usize, group: usize, size: usize },
    #[error("peer-block size {r} is larger than the smallest group ({min})")]
    BlockTooLarge { r: usize, min: usize },
    #[error("peer-block size must be at least 1")]
    BlockZero,
    #[error("sticky size {size} exceeds the limit {limit} for this scenario")]
    StickyTooLarge { size: usize, limit: usize },
    #[error("partition sticky sets need K = S * N_m; K={k}, S={s}, N_m={group_size}")]
    PartitionShape { k: usize, s: usize, group_size: usize },
    #[error("explicit sticky sets: {0}")]
    BadExplicit(String),
    #[error("gamma must lie in (0, 1), got {0}")]
    BadGamma(f64),
    #[error("assignment does not match instance: {0}")]
    Mismatch(String),
}

/// Half-open interval `[low, high)` from which arm means are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanRange {
    pub low: f64,
    pub high: f64,
}

impl MeanRange {
    pub fn new(low: f64, high: f64) -> Result<Self, EnvError> {
        if !(low.is_finite() && high.is_finite()) || high <= low {
            return Err(EnvError::EmptyRange { low, high });
        }
        Ok(Self { low, high })
    }

    pub fn unit() -> Self {
        Self { low: 0.0, high: 1.0 }
    }
}

/// True arm means of the M bandits plus the derived best arms and gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditSet {
    means: Vec<Vec<f64>>,
    best_arm: Vec<usize>,
    gaps: Vec<Vec<f64>>,
    delta_min: Vec<f64>,
}

impl BanditSet {
    /// Builds an instance from an explicit mean matrix (one row per bandit).
    pub fn from_means(means: Vec<Vec<f64>>) -> Result<Self, EnvError> {
        if means.is_empty() {
            return Err(EnvError::NoBandits);
        }
        let k = means[0].len();
        if k < 2 {
            return Err(EnvError::TooFewArms(k));
        }
        let mut best_arm = Vec::with_capacity(means.len());
        let mut gaps = Vec::with_capacity(means.len());
        let mut delta_min = Vec::with_capacity(means.len());
        for (m, row) in means.iter().enumerate() {
            if row.len() != k {
                return Err(EnvError::RaggedMeans { row: m, got: row.len(), expected: k });
            }
            if let Some(arm) = row.iter().position(|x| !x.is_finite()) {
                return Err(EnvError::NonFiniteMean { bandit: m, arm });
            }
            let best = unique_argmax(row).ok_or(EnvError::TiedBest(m))?;
            let top = row[best];
            let g: Vec<f64> = row.iter().map(|&x| top - x).collect();
            let dmin = g
                .iter()
                .enumerate()
                .filter(|&(a, _)| a != best)
                .map(|(_, &d)| d)
                .fold(f64::INFINITY, f64::min);
            best_arm.push(best);
            gaps.push(g);
            delta_min.push(dmin);
        }
        Ok(Self { means, best_arm, gaps, delta_min })
    }

    pub fn num_bandits(&self) -> usize {
        self.means.len()
    }

    pub fn num_arms(&self) -> usize {
        self.means[0].len()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    #[inline]
    pub fn mean(&self, m: usize, k: usize) -> f64 {
        self.means[m][k]
    }

    pub fn best_arm(&self, m: usize) -> usize {
        self.best_arm[m]
    }

    pub fn best_arms(&self) -> &[usize] {
        &self.best_arm
    }

    #[inline]
    pub fn gap(&self, m: usize, k: usize) -> f64 {
        self.gaps[m][k]
    }

    pub fn gaps(&self, m: usize) -> &[f64] {
        &self.gaps[m]
    }

    /// Minimum gap of bandit `m` over its suboptimal arms.
    pub fn delta_min(&self, m: usize) -> f64 {
        self.delta_min[m]
    }

    /// Largest gap of bandit `m`.
    pub fn delta_max(&self, m: usize) -> f64 {
        self.gaps[m].iter().copied().fold(0.0, f64::max)
    }

    /// The set of best arms over all bandits, ascending and deduplicated.
    pub fn best_set(&self) -> Vec<usize> {
        let mut b = self.best_arm.clone();
        b.sort_unstable();
        b.dedup();
        b
    }

    /// Best arms of the other bandits, excluding bandit `m`'s own best arm.
    pub fn best_set_excluding(&self, m: usize) -> Vec<usize> {
        let own = self.best_arm[m];
        self.best_set().into_iter().filter(|&k| k != own).collect()
    }

    /// Arms of bandit `m` sorted by mean, highest first. Ties keep the lower
    /// arm index first.
    pub fn order_statistics(&self, m: usize) -> Vec<usize> {
        let row = &self.means[m];
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        idx
    }

    /// True when every mean lies in `[0, 1]`.
    pub fn within_unit_interval(&self) -> bool {
        self.means.iter().flatten().all(|&x| (0.0..=1.0).contains(&x))
    }

    pub fn check_index(&self, m: usize, k: usize) -> Result<(), EnvError> {
        if m >= self.num_bandits() || k >= self.num_arms() {
            return Err(EnvError::OutOfRange { bandit: m, arm: k, m: self.num_bandits(), k: self.num_arms() });
        }
        Ok(())
    }
}

fn unique_argmax(row: &[f64]) -> Option<usize> {
    let mut best = 0;
    for (k, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = k;
        }
    }
    let top = row[best];
    (row.iter().filter(|&&x| x == top).count() == 1).then_some(best)
}

/// Draws an `m x k` instance with means i.i.d. uniform on `range`. Rows whose
/// maximum is tied are redrawn.
pub fn build_instance<R: Rng + ?Sized>(
    m: usize,
    k: usize,
    range: MeanRange,
    rng: &mut R,
) -> Result<BanditSet, EnvError> {
    if k < 2 {
        return Err(EnvError::TooFewArms(k));
    }
    if m < 1 {
        return Err(EnvError::NoBandits);
    }
    let range = MeanRange::new(range.low, range.high)?;
    let mut means = Vec::with_capacity(m);
    for _ in 0..m {
        let row = loop {
            let row: Vec<f64> = (0..k).map(|_| rng.random_range(range.low..range.high)).collect();
            if unique_argmax(&row).is_some() {
                break row;
            }
        };
        means.push(row);
    }
    BanditSet::from_means(means)
}

/// Reward noise added to the arm mean on each pull.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseModel {
    /// Standard Gaussian, unit variance.
    #[default]
    Gaussian,
    /// No noise. Only for deterministic tests.
    Zero,
}

impl NoiseModel {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            NoiseModel::Gaussian => rng.sample(StandardNormal),
            NoiseModel::Zero => 0.0,
        }
    }
}

/// One reward draw for arm `k` of bandit `m`.
pub fn draw_reward<R: Rng + ?Sized>(
    instance: &BanditSet,
    m: usize,
    k: usize,
    noise: NoiseModel,
    rng: &mut R,
) -> Result<f64, EnvError> {
    instance.check_index(m, k)?;
    Ok(instance.mean(m, k) + noise.sample(rng))
}

/// Partition of the agents over the bandits, with optional peer blocks for the
/// partially context aware scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    bandit_of: Vec<usize>,
    groups: Vec<Vec<usize>>,
    blocks: Option<Vec<Vec<usize>>>,
    block_of: Option<Vec<usize>>,
    c1: f64,
    c2: f64,
}

impl Assignment {
    /// Builds an assignment from explicit groups (and optionally peer blocks).
    /// Group and block member lists are stored sorted.
    pub fn from_groups(groups: Vec<Vec<usize>>, blocks: Option<Vec<Vec<usize>>>) -> Result<Self, EnvError> {
        if groups.is_empty() {
            return Err(EnvError::NoBandits);
        }
        let n: usize = groups.iter().map(Vec::len).sum();
        let mut bandit_of = vec![usize::MAX; n];
        let mut groups = groups;
        for (m, g) in groups.iter_mut().enumerate() {
            if g.is_empty() {
                return Err(EnvError::EmptyGroup);
            }
            g.sort_unstable();
            for &i in g.iter() {
                if i >= n || bandit_of[i] != usize::MAX {
                    return Err(EnvError::Mismatch(format!("agent {i} is missing, duplicated or out of range")));
                }
                bandit_of[i] = m;
            }
        }
        let (block_of, blocks) = match blocks {
            None => (None, None),
            Some(mut blocks) => {
                let r = blocks.first().map_or(0, Vec::len);
                if r == 0 {
                    return Err(EnvError::BlockZero);
                }
                let mut block_of = vec![usize::MAX; n];
                for (z, b) in blocks.iter_mut().enumerate() {
                    b.sort_unstable();
                    if b.len() != r {
                        return Err(EnvError::Mismatch(format!("block {z} has size {}, expected {r}", b.len())));
                    }
                    let m = bandit_of.get(b[0]).copied().unwrap_or(usize::MAX);
                    for &i in b.iter() {
                        if i >= n || block_of[i] != usize::MAX {
                            return Err(EnvError::Mismatch(format!("agent {i} is in several blocks")));
                        }
                        if bandit_of[i] != m {
                            return Err(EnvError::Mismatch(format!("block {z} spans several bandits")));
                        }
                        block_of[i] = z;
                    }
                }
                if block_of.contains(&usize::MAX) {
                    return Err(EnvError::Mismatch("peer blocks do not cover every agent".into()));
                }
                (Some(block_of), Some(blocks))
            }
        };
        let (c1, c2) = tight_balance(&groups, n);
        Ok(Self { bandit_of, groups, blocks, block_of, c1, c2 })
    }

    pub fn num_agents(&self) -> usize {
        self.bandit_of.len()
    }

    pub fn num_bandits(&self) -> usize {
        self.groups.len()
    }

    #[inline]
    pub fn bandit_of(&self, agent: usize) -> usize {
        self.bandit_of[agent]
    }

    pub fn group(&self, m: usize) -> &[usize] {
        &self.groups[m]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_size(&self, m: usize) -> usize {
        self.groups[m].len()
    }

    pub fn min_group_size(&self) -> usize {
        self.groups.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn blocks(&self) -> Option<&[Vec<usize>]> {
        self.blocks.as_deref()
    }

    pub fn peer_size(&self) -> Option<usize> {
        self.blocks.as_ref().map(|b| b[0].len())
    }

    pub fn block_of(&self, agent: usize) -> Option<usize> {
        self.block_of.as_ref().map(|b| b[agent])
    }

    /// The known peers f(i): the other members of agent `i`'s block.
    pub fn peers_of(&self, agent: usize) -> Vec<usize> {
        match (&self.blocks, &self.block_of) {
            (Some(blocks), Some(block_of)) => blocks[block_of[agent]].iter().copied().filter(|&n| n != agent).collect(),
            _ => Vec::new(),
        }
    }

    /// Balance constants: the smallest c1 and largest c2 that this partition
    /// satisfies, i.e. `c1 N/M <= N_m <= c2 N/M`.
    pub fn balance(&self) -> (f64, f64) {
        (self.c1, self.c2)
    }

    pub fn satisfies_balance(&self, c1: f64, c2: f64) -> bool {
        let n = self.num_agents() as f64;
        let m = self.num_bandits() as f64;
        self.groups.iter().all(|g| {
            let s = g.len() as f64;
            c1 * n / m <= s + 1e-12 && s <= c2 * n / m + 1e-12
        })
    }
}

fn tight_balance(groups: &[Vec<usize>], n: usize) -> (f64, f64) {
    let m = groups.len() as f64;
    let per = n as f64 / m;
    let min = groups.iter().map(Vec::len).min().unwrap_or(0) as f64;
    let max = groups.iter().map(Vec::len).max().unwrap_or(0) as f64;
    (min / per, max / per)
}

/// Splits `n` agents over `m` bandits. Agents are shuffled before chunking;
/// peer blocks of size `r` are contiguous chunks of each group after a second
/// shuffle of that group.
pub fn assign_agents<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    sizes: Option<&[usize]>,
    r: Option<usize>,
    rng: &mut R,
) -> Result<Assignment, EnvError> {
    if m == 0 {
        return Err(EnvError::NoBandits);
    }
    let sizes: Vec<usize> = match sizes {
        Some(s) => {
            if s.len() != m {
                return Err(EnvError::Mismatch(format!("{} group sizes for {m} bandits", s.len())));
            }
            let total: usize = s.iter().sum();
            if total != n {
                return Err(EnvError::SizeMismatch { got: total, expected: n });
            }
            s.to_vec()
        }
        None => {
            if !n.is_multiple_of(m) {
                return Err(EnvError::Indivisible { agents: n, bandits: m });
            }
            vec![n / m; m]
        }
    };
    if sizes.contains(&0) {
        return Err(EnvError::EmptyGroup);
    }
    if let Some(r) = r {
        if r == 0 {
            return Err(EnvError::BlockZero);
        }
        let min = *sizes.iter().min().unwrap();
        if r > min {
            return Err(EnvError::BlockTooLarge { r, min });
        }
        if let Some((group, &size)) = sizes.iter().enumerate().find(|(_, &s)| s % r != 0) {
            return Err(EnvError::BlockIndivisible { r, group, size });
        }
    }

    let mut agents: Vec<usize> = (0..n).collect();
    agents.shuffle(rng);
    let mut groups = Vec::with_capacity(m);
    let mut offset = 0;
    for &s in &sizes {
        groups.push(agents[offset..offset + s].to_vec());
        offset += s;
    }
    let blocks = r.map(|r| {
        let mut blocks = Vec::with_capacity(n / r);
        for g in &groups {
            let mut members = g.clone();
            members.shuffle(rng);
            blocks.extend(members.chunks(r).map(<[usize]>::to_vec));
        }
        blocks
    });
    Assignment::from_groups(groups, blocks)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StickyMode {
    /// S arms per agent, uniformly without replacement, independent across agents.
    RandomUniform,
    /// Each group deals a shuffled copy of [K] round-robin, S arms per agent.
    Partition,
    /// Per-agent sets supplied by the caller, of any size up to K.
    Explicit(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StickyConfig {
    pub size: usize,
    pub gamma: f64,
    pub mode: StickyMode,
}

/// Sticky sets for every agent plus whether every bandit has at least one
/// agent holding its best arm.
#[derive(Debug, Clone, PartialEq)]
pub struct StickyDraw {
    pub sets: Vec<Vec<usize>>,
    pub assumption_holds: bool,
}

/// Largest sticky size the algorithms accept: `K - 2`, or `K - 2 - ceil(M/r)`
/// when peer blocks of size `r` are in use.
pub fn max_sticky_size(k: usize, m: usize, r: Option<usize>) -> usize {
    let extra = r.map_or(0, |r| m.div_ceil(r));
    k.saturating_sub(2 + extra)
}

/// Sticky size that makes the random-uniform draw satisfy the best-arm
/// coverage condition with probability at least `1 - gamma`:
/// `ceil(M K / (c1 N) * ln(M / gamma))`.
pub fn sticky_size_for(m: usize, k: usize, n: usize, c1: f64, gamma: f64) -> Result<usize, EnvError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(EnvError::BadGamma(gamma));
    }
    let raw = (m * k) as f64 / (c1 * n as f64) * (m as f64 / gamma).ln();
    Ok(raw.ceil() as usize)
}

/// True when every bandit has some agent whose sticky set holds its best arm.
pub fn best_arm_covered(instance: &BanditSet, assignment: &Assignment, sets: &[Vec<usize>]) -> bool {
    (0..instance.num_bandits()).all(|m| {
        let best = instance.best_arm(m);
        assignment.group(m).iter().any(|&i| sets[i].contains(&best))
    })
}

pub fn sample_sticky_sets<R: Rng + ?Sized>(
    instance: &BanditSet,
    assignment: &Assignment,
    cfg: &StickyConfig,
    rng: &mut R,
) -> Result<StickyDraw, EnvError> {
    let k = instance.num_arms();
    let n = assignment.num_agents();
    if assignment.num_bandits() != instance.num_bandits() {
        return Err(EnvError::Mismatch(format!(
            "{} groups for {} bandits",
            assignment.num_bandits(),
            instance.num_bandits()
        )));
    }
    let limit = max_sticky_size(k, instance.num_bandits(), assignment.peer_size());
    let sets = match &cfg.mode {
        StickyMode::RandomUniform => {
            if cfg.size > limit {
                return Err(EnvError::StickyTooLarge { size: cfg.size, limit });
            }
            (0..n)
                .map(|_| {
                    let mut s = rand::seq::index::sample(rng, k, cfg.size).into_vec();
                    s.sort_unstable();
                    s
                })
                .collect()
        }
        StickyMode::Partition => {
            if cfg.size > limit {
                return Err(EnvError::StickyTooLarge { size: cfg.size, limit });
            }
            let mut sets = vec![Vec::new(); n];
            for g in assignment.groups() {
                if cfg.size * g.len() != k {
                    return Err(EnvError::PartitionShape { k, s: cfg.size, group_size: g.len() });
                }
                let mut arms: Vec<usize> = (0..k).collect();
                arms.shuffle(rng);
                for (pos, &arm) in arms.iter().enumerate() {
                    sets[g[pos % g.len()]].push(arm);
                }
            }
            for s in &mut sets {
                s.sort_unstable();
            }
            sets
        }
        StickyMode::Explicit(given) => {
            if given.len() != n {
                return Err(EnvError::BadExplicit(format!("{} sets for {n} agents", given.len())));
            }
            let mut sets = Vec::with_capacity(n);
            for (i, s) in given.iter().enumerate() {
                let mut s = s.clone();
                s.sort_unstable();
                s.dedup();
                if s.len() != given[i].len() {
                    return Err(EnvError::BadExplicit(format!("agent {i} lists an arm twice")));
                }
                if s.iter().any(|&a| a >= k) {
                    return Err(EnvError::BadExplicit(format!("agent {i} lists an arm >= K")));
                }
                if s.is_empty() {
                    return Err(EnvError::BadExplicit(format!("agent {i} has an empty sticky set")));
                }
                sets.push(s);
            }
            sets
        }
    };
    let assumption_holds = best_arm_covered(instance, assignment, &sets);
    Ok(StickyDraw { sets, assumption_holds })
}

/// True when the sticky sets of each group are pairwise disjoint and cover [K].
pub fn is_partition(k: usize, assignment: &Assignment, sets: &[Vec<usize>]) -> bool {
    assignment.groups().iter().all(|g| {
        let mut seen = vec![false; k];
        let mut total = 0;
        for &i in g {
            for &a in &sets[i] {
                if a >= k || seen[a] {
                    return false;
                }
                seen[a] = true;
                total += 1;
            }
        }
        total == k
    })
}
