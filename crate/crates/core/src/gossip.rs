//! Gossip fabric: complete-graph contact sampling and per-phase bit accounting.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GossipError {
    #[error("gossip needs at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("agent {agent} is out of range for {n} agents")]
    OutOfRange { agent: usize, n: usize },
    #[error("agent {0} is not a member of the group it samples from")]
    NotInGroup(usize),
}

/// Complete-graph gossip matrix: row `i` is uniform over every agent but `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GossipMatrix {
    n: usize,
}

impl GossipMatrix {
    pub fn complete(n: usize) -> Result<Self, GossipError> {
        if n < 2 {
            return Err(GossipError::TooFewAgents(n));
        }
        Ok(Self { n })
    }

    pub fn num_agents(&self) -> usize {
        self.n
    }

    pub fn weight(&self, from: usize, to: usize) -> f64 {
        if from == to {
            0.0
        } else {
            1.0 / (self.n - 1) as f64
        }
    }

    /// Draws the agent that `i` pulls information from.
    #[inline]
    pub fn sample_contact<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Result<usize, GossipError> {
        if i >= self.n {
            return Err(GossipError::OutOfRange { agent: i, n: self.n });
        }
        let u = rng.random_range(0..self.n - 1);
        Ok(if u >= i { u + 1 } else { u })
    }
}

/// Uniform draw from `group \ {i}`. `group` must be sorted ascending and
/// contain `i`. On the full agent list this consumes the generator exactly
/// like [`GossipMatrix::sample_contact`].
#[inline]
pub fn sample_within<R: Rng + ?Sized>(group: &[usize], i: usize, rng: &mut R) -> Result<usize, GossipError> {
    if group.len() < 2 {
        return Err(GossipError::TooFewAgents(group.len()));
    }
    let pos = group.binary_search(&i).map_err(|_| GossipError::NotInGroup(i))?;
    let u = rng.random_range(0..group.len() - 1);
    Ok(group[if u >= pos { u + 1 } else { u }])
}

/// Bits needed for one arm ID.
pub fn bits_per_arm(k: usize) -> u32 {
    if k <= 1 {
        0
    } else {
        usize::BITS - (k - 1).leading_zeros()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetViolation {
    pub agent: usize,
    pub phase: u64,
    pub bits: u64,
    pub budget: u64,
}

/// Bits received by each agent in its current phase, against a per-phase
/// budget of `ids_per_phase` arm IDs.
#[derive(Debug, Clone, PartialEq)]
pub struct BitLedger {
    bits_per_id: u64,
    budget: u64,
    phase: Vec<u64>,
    used: Vec<u64>,
    total_bits: u64,
    max_in_phase: u64,
    violations: Vec<BudgetViolation>,
}

impl BitLedger {
    /// `ids_per_phase` is 1 when agents know no peers and `r` with peer blocks of size `r`.
    pub fn new(n: usize, k: usize, ids_per_phase: u64) -> Self {
        let bits_per_id = u64::from(bits_per_arm(k));
        Self {
            bits_per_id,
            budget: ids_per_phase * bits_per_id,
            phase: vec![0; n],
            used: vec![0; n],
            total_bits: 0,
            max_in_phase: 0,
            violations: Vec::new(),
        }
    }

    pub fn bits_per_id(&self) -> u64 {
        self.bits_per_id
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// Charges `arm_ids` arm IDs received by `agent` at the end of `phase`.
    /// A budget overrun is recorded, never dropped.
    pub fn charge(&mut self, agent: usize, phase: u64, arm_ids: u64) {
        if self.phase[agent] != phase {
            self.phase[agent] = phase;
            self.used[agent] = 0;
        }
        let bits = arm_ids * self.bits_per_id;
        self.used[agent] += bits;
        self.total_bits += bits;
        let used = self.used[agent];
        self.max_in_phase = self.max_in_phase.max(used);
        if used > self.budget {
            self.violations.push(BudgetViolation { agent, phase, bits: used, budget: self.budget });
        }
    }

    pub fn used(&self, agent: usize, phase: u64) -> u64 {
        if self.phase[agent] == phase {
            self.used[agent]
        } else {
            0
        }
    }

    pub fn total_bits(&self) -> u64 {
        self.total_bits
    }

    pub fn max_bits_in_phase(&self) -> u64 {
        self.max_in_phase
    }

    pub fn violations(&self) -> &[BudgetViolation] {
        &self.violations
    }

    pub fn summary(&self) -> LedgerSummary {
        LedgerSummary {
            total_bits: self.total_bits,
            max_bits_in_phase: self.max_in_phase,
            budget: self.budget,
            violations: self.violations.len() as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LedgerSummary {
    pub total_bits: u64,
    pub max_bits_in_phase: u64,
    pub budget: u64,
    pub violations: u64,
}
