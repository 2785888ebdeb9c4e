//! Rumor spreading on a complete graph, and spreading times read off real runs.
//!
//! In every round each uninformed agent contacts a uniformly random other agent
//! and becomes informed when the contact is informed and an independent
//! Bernoulli(eta) trial succeeds. `eta = 1` is the noiseless process.

use std::io::{self, Write};

use rand::Rng;
use thiserror::Error;

use crate::env::{Assignment, BanditSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RumorError {
    #[error("rumor process needs at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("success probability must lie in (0, 1], got {0}")]
    BadEta(f64),
    #[error("seed agent {seed} is out of range for {n} agents")]
    BadSeed { seed: usize, n: usize },
    #[error("coupled processes must have the same size")]
    SizeMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RumorProcess {
    eta: f64,
    informed: Vec<bool>,
    count: usize,
    rounds: u64,
}

impl RumorProcess {
    /// Process on `n` agents with only `seed` informed.
    pub fn new(n: usize, eta: f64, seed: usize) -> Result<Self, RumorError> {
        if n < 2 {
            return Err(RumorError::TooFewAgents(n));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(RumorError::BadEta(eta));
        }
        if seed >= n {
            return Err(RumorError::BadSeed { seed, n });
        }
        let mut informed = vec![false; n];
        informed[seed] = true;
        Ok(Self { eta, informed, count: 1, rounds: 0 })
    }

    pub fn n_agents(&self) -> usize {
        self.informed.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn informed(&self) -> &[bool] {
        &self.informed
    }

    pub fn informed_count(&self) -> usize {
        self.count
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn is_complete(&self) -> bool {
        self.count == self.informed.len()
    }

    /// One synchronous round. Every agent draws a contact and a uniform
    /// variate whether or not it is informed, so two processes driven by
    /// equal generators see the same draws.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let draws = draw_round(self.informed.len(), rng);
        self.apply(&draws);
    }

    fn apply(&mut self, draws: &[(usize, f64)]) {
        let before = self.informed.clone();
        for (i, &(contact, u)) in draws.iter().enumerate() {
            if !before[i] && before[contact] && u < self.eta {
                self.informed[i] = true;
                self.count += 1;
            }
        }
        self.rounds += 1;
    }

    /// Rounds until every agent is informed.
    pub fn run_to_completion<R: Rng + ?Sized>(&mut self, rng: &mut R) -> u64 {
        while !self.is_complete() {
            self.step(rng);
        }
        self.rounds
    }
}

fn draw_round<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<(usize, f64)> {
    (0..n)
        .map(|i| {
            let u = rng.random_range(0..n - 1);
            let contact = if u >= i { u + 1 } else { u };
            (contact, rng.random::<f64>())
        })
        .collect()
}

/// Advances two processes with one shared set of draws.
pub fn step_coupled<R: Rng + ?Sized>(
    a: &mut RumorProcess,
    b: &mut RumorProcess,
    rng: &mut R,
) -> Result<(), RumorError> {
    if a.n_agents() != b.n_agents() {
        return Err(RumorError::SizeMismatch);
    }
    let draws = draw_round(a.n_agents(), rng);
    a.apply(&draws);
    b.apply(&draws);
    Ok(())
}

/// `replications` i.i.d. spreading times, each started from agent 0.
pub fn spreading_time<R: Rng + ?Sized>(
    n: usize,
    eta: f64,
    rng: &mut R,
    replications: usize,
) -> Result<Vec<u64>, RumorError> {
    let template = RumorProcess::new(n, eta, 0)?;
    Ok((0..replications).map(|_| template.clone().run_to_completion(rng)).collect())
}

/// One row per sample with columns
/// `process_kind,n_agents,eta,replication,spreading_time`.
pub fn write_rumor_csv<W: Write>(
    out: &mut W,
    kind: &str,
    n: usize,
    eta: f64,
    samples: &[u64],
    header: bool,
) -> io::Result<()> {
    if header {
        writeln!(out, "process_kind,n_agents,eta,replication,spreading_time")?;
    }
    for (rep, s) in samples.iter().enumerate() {
        writeln!(out, "{kind},{n},{},{rep},{s}", crate::output::fmt_g6(eta))?;
    }
    Ok(())
}

/// What one agent did in one complete phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentPhase {
    /// Its bandit's best arm was in the active set used during the phase.
    pub best_active: bool,
    /// Most played arm of the phase.
    pub most_played: usize,
    /// Active set for the next phase differs from this one.
    pub active_changed: bool,
}

/// Per-phase record of a run. Only phases that ended inside the horizon
/// (and so had an exchange) are recorded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseRecord {
    pub phase: u64,
    pub agents: Vec<AgentPhase>,
    /// Per peer block: the block's distinct recent arms equal the best set.
    /// Empty for runs without peer blocks.
    pub blocks_locked: Vec<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunTrace {
    pub phases: Vec<PhaseRecord>,
}

impl RunTrace {
    /// Phases where an agent held its best arm but recommended another one.
    pub fn chi_events(&self, inst: &BanditSet, assign: &Assignment) -> Vec<(u64, usize)> {
        let mut out = Vec::new();
        for rec in &self.phases {
            for (i, a) in rec.agents.iter().enumerate() {
                if a.best_active && a.most_played != inst.best_arm(assign.bandit_of(i)) {
                    out.push((rec.phase, i));
                }
            }
        }
        out
    }

    /// The records covering the last `fraction` of recorded phases
    /// (at least one when any exist).
    pub fn tail(&self, fraction: f64) -> &[PhaseRecord] {
        let n = self.phases.len();
        if n == 0 {
            return &[];
        }
        let keep = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
        &self.phases[n - keep..]
    }

    /// Every agent recommends its best arm and keeps it active in the tail.
    pub fn frozen_on_best(&self, inst: &BanditSet, assign: &Assignment, fraction: f64) -> bool {
        self.tail(fraction).iter().all(|rec| {
            rec.agents
                .iter()
                .enumerate()
                .all(|(i, a)| a.best_active && a.most_played == inst.best_arm(assign.bandit_of(i)))
        })
    }

    /// Active sets never change and every block is locked on the best set
    /// in the tail. The last recorded phase's `active_changed` is ignored
    /// since the next phase may be truncated.
    pub fn static_in_tail(&self, fraction: f64) -> bool {
        let tail = self.tail(fraction);
        if tail.is_empty() {
            return false;
        }
        let locked = tail.iter().all(|rec| !rec.blocks_locked.is_empty() && rec.blocks_locked.iter().all(|&b| b));
        let constant = tail[..tail.len() - 1].iter().all(|rec| rec.agents.iter().all(|a| !a.active_changed));
        locked && constant
    }
}

/// Spreading-time estimates from one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSpread {
    /// One past the last phase with a χ event (1 when there was none).
    pub tau_stab: u64,
    /// Per bandit: phases after `tau_stab` until every member holds the best
    /// arm. `None` when that did not happen within the recorded phases.
    pub tau_spr: Vec<Option<u64>>,
    /// Per block: phases after `tau_stab + max tau_spr` until the block's
    /// distinct recent arms equal the best set. Empty without blocks.
    pub tau_rec: Vec<Option<u64>>,
    /// The χ event estimate fell past the last recorded phase.
    pub stabilized: bool,
    /// Per bandit: one past the last phase with a χ event among its own agents.
    pub bandit_stab: Vec<u64>,
    /// Per bandit: phases after `bandit_stab` until every member holds the
    /// best arm, `None` when that was not seen.
    pub bandit_spr: Vec<Option<u64>>,
}

/// Reads spreading times off a run trace.
pub fn measure_real_spread(trace: &RunTrace, inst: &BanditSet, assign: &Assignment) -> RunSpread {
    let last = trace.phases.last().map_or(0, |r| r.phase);
    let tau_stab = trace.chi_events(inst, assign).iter().map(|&(p, _)| p).max().map_or(1, |p| p + 1);
    let stabilized = tau_stab <= last;

    let chi = trace.chi_events(inst, assign);
    let mut tau_spr = Vec::with_capacity(assign.num_bandits());
    let mut bandit_stab = Vec::with_capacity(assign.num_bandits());
    let mut bandit_spr = Vec::with_capacity(assign.num_bandits());
    for m in 0..assign.num_bandits() {
        let spread = if stabilized { spread_after(trace, assign.group(m), tau_stab) } else { None };
        tau_spr.push(spread);
        let own = chi.iter().filter(|&&(_, i)| assign.bandit_of(i) == m).map(|&(p, _)| p).max().map_or(1, |p| p + 1);
        bandit_stab.push(own);
        bandit_spr.push(if own <= last { spread_after(trace, assign.group(m), own) } else { None });
    }

    let blocks = trace.phases.first().map_or(0, |r| r.blocks_locked.len());
    let spread_done: Option<u64> =
        tau_spr.iter().try_fold(0u64, |acc, s| s.map(|v| acc.max(v))).map(|s| tau_stab + s);
    let tau_rec = (0..blocks)
        .map(|z| {
            let start = spread_done?;
            trace
                .phases
                .iter()
                .find(|r| r.phase >= start && r.blocks_locked[z])
                .map(|r| r.phase - start)
        })
        .collect();

    RunSpread { tau_stab, tau_spr, tau_rec, stabilized, bandit_stab, bandit_spr }
}

// Phases after `start` until every agent of `group` has held its best arm.
fn spread_after(trace: &RunTrace, group: &[usize], start: u64) -> Option<u64> {
    let mut worst = 0;
    for &i in group {
        let first = trace.phases.iter().find(|r| r.phase >= start && r.agents[i].best_active)?;
        worst = worst.max(first.phase - start);
    }
    Some(worst)
}

/// Noisy-process success probability for a group of `group_size` among `n` agents.
pub fn group_eta(group_size: usize, n: usize) -> f64 {
    (group_size as f64 - 1.0) / (n as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_agents_noiseless_takes_one_round() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = spreading_time(2, 1.0, &mut rng, 100).unwrap();
        assert!(s.iter().all(|&x| x == 1));
    }

    #[test]
    fn two_agents_half_success_is_geometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reps = 100_000;
        let s = spreading_time(2, 0.5, &mut rng, reps).unwrap();
        let mean = s.iter().sum::<u64>() as f64 / reps as f64;
        // geometric(0.5): mean 2, variance 2
        let sigma = (2.0 / reps as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * sigma, "{mean}");
    }

    #[test]
    fn informed_sets_only_grow() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = RumorProcess::new(10, 0.3, 4).unwrap();
        let mut prev = p.informed().to_vec();
        while !p.is_complete() {
            p.step(&mut rng);
            for (a, b) in prev.iter().zip(p.informed()) {
                assert!(!a || *b);
            }
            prev = p.informed().to_vec();
        }
    }

    #[test]
    fn coupled_noiseless_leads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let mut fast = RumorProcess::new(8, 1.0, 0).unwrap();
            let mut slow = RumorProcess::new(8, 0.4, 0).unwrap();
            while !slow.is_complete() {
                step_coupled(&mut fast, &mut slow, &mut rng).unwrap();
                for (f, s) in fast.informed().iter().zip(slow.informed()) {
                    assert!(!s || *f);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RumorProcess::new(1, 1.0, 0).is_err());
        assert!(RumorProcess::new(3, 0.0, 0).is_err());
        assert!(RumorProcess::new(3, 1.5, 0).is_err());
        assert!(RumorProcess::new(3, 1.0, 3).is_err());
    }

    #[test]
    fn csv_rows() {
        let mut buf = Vec::new();
        write_rumor_csv(&mut buf, "noisy", 5, 4.0 / 24.0, &[3, 7], true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "process_kind,n_agents,eta,replication,spreading_time\nnoisy,5,0.166667,0,3\nnoisy,5,0.166667,1,7\n"
        );
    }

    fn one_bandit() -> (BanditSet, Assignment) {
        let inst = BanditSet::from_means(vec![vec![0.9, 0.1, 0.2]]).unwrap();
        let assign = Assignment::from_groups(vec![vec![0, 1, 2]], None).unwrap();
        (inst, assign)
    }

    fn rec(phase: u64, rows: &[(bool, usize)]) -> PhaseRecord {
        PhaseRecord {
            phase,
            agents: rows.iter().map(|&(b, k)| AgentPhase { best_active: b, most_played: k, active_changed: false }).collect(),
            blocks_locked: Vec::new(),
        }
    }

    #[test]
    fn spread_measured_from_trace() {
        let (inst, assign) = one_bandit();
        let trace = RunTrace {
            phases: vec![
                rec(1, &[(true, 1), (false, 1), (false, 2)]),
                rec(2, &[(true, 0), (false, 1), (false, 2)]),
                rec(3, &[(true, 0), (true, 0), (false, 2)]),
                rec(4, &[(true, 0), (true, 0), (true, 0)]),
                rec(5, &[(true, 0), (true, 0), (true, 0)]),
            ],
        };
        let s = measure_real_spread(&trace, &inst, &assign);
        assert_eq!(s.tau_stab, 2);
        assert!(s.stabilized);
        assert_eq!(s.tau_spr, vec![Some(2)]);
        assert!(trace.frozen_on_best(&inst, &assign, 0.25));
        assert!(!trace.frozen_on_best(&inst, &assign, 1.0));
    }

    #[test]
    fn chi_in_last_phase_is_not_stabilized() {
        let (inst, assign) = one_bandit();
        let trace = RunTrace { phases: vec![rec(1, &[(true, 0), (true, 0), (true, 0)]), rec(2, &[(true, 2), (true, 0), (true, 0)])] };
        let s = measure_real_spread(&trace, &inst, &assign);
        assert_eq!(s.tau_stab, 3);
        assert!(!s.stabilized);
        assert_eq!(s.tau_spr, vec![None]);
    }

    #[test]
    fn block_lock_time() {
        let (inst, assign) = one_bandit();
        let mut phases = vec![
            rec(1, &[(true, 0), (true, 0), (true, 0)]),
            rec(2, &[(true, 0), (true, 0), (true, 0)]),
            rec(3, &[(true, 0), (true, 0), (true, 0)]),
        ];
        phases[0].blocks_locked = vec![false];
        phases[1].blocks_locked = vec![false];
        phases[2].blocks_locked = vec![true];
        let trace = RunTrace { phases };
        let s = measure_real_spread(&trace, &inst, &assign);
        assert_eq!(s.tau_stab, 1);
        assert_eq!(s.tau_spr, vec![Some(0)]);
        assert_eq!(s.tau_rec, vec![Some(2)]);
        assert!(trace.static_in_tail(0.25));
        assert!(!trace.static_in_tail(1.0));
    }
}
