//! Seeded replications of every scenario and their aggregation.
//!
//! Each replication draws one instance, one assignment and one set of sticky
//! sets, shared by every scenario of that replication. Rewards come from one
//! stream per agent and contacts from one stream per scenario, all keyed by
//! `(master_seed, replication, purpose, index)` as described in [`crate::rng`].
//! Replications run in parallel and are collected in index order, so output
//! bytes do not depend on the worker count.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, Scenario, SimConfig, StickyKind};
use crate::env::{
    assign_agents, build_instance, sample_sticky_sets, sticky_size_for, Assignment, BanditSet, EnvError, StickyConfig,
    StickyMode,
};
use crate::events::{EventSink, LineLog};
use crate::gossip::{sample_within, BitLedger, GossipError, GossipMatrix, LedgerSummary};
use crate::instance_file::{InstanceError, InstanceSpec};
use crate::output::{emit_csv, fmt_g6, ScenarioCurves};
use crate::phase::{PhaseSchedule, ScheduleError};
use crate::policy::{get_rec, AgentState, BlockRecs, PolicyError, SharedUcb};
use crate::rng::{Purpose, SeedTree, StreamId};
use crate::rumor::{measure_real_spread, AgentPhase, PhaseRecord, RunSpread, RunTrace};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Gossip(#[from] GossipError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("{0}")]
    Setup(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Up to `points` timesteps spaced evenly in `ln t` over `[1, horizon]`,
/// deduplicated; always ends at `horizon`.
pub fn log_grid(horizon: u64, points: usize) -> Vec<u64> {
    if points <= 1 || horizon <= 1 {
        return vec![horizon.max(1)];
    }
    let top = (horizon as f64).ln();
    let mut out: Vec<u64> = (0..points)
        .map(|g| ((top * g as f64 / (points - 1) as f64).exp().round() as u64).clamp(1, horizon))
        .collect();
    out.dedup();
    if *out.last().unwrap() != horizon {
        out.push(horizon);
    }
    out
}

/// Everything one replication shares across scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub index: usize,
    pub instance: BanditSet,
    pub assignment: Assignment,
    pub sticky: Vec<Vec<usize>>,
    pub assumption_holds: bool,
}

/// Sticky size in effect for `assign` under `cfg`.
pub fn effective_sticky_size(cfg: &SimConfig, assign: &Assignment) -> Result<usize, SimError> {
    if let Some(s) = cfg.sticky_size {
        return Ok(s);
    }
    Ok(match cfg.sticky_kind {
        StickyKind::Partition => cfg.arms / assign.group_size(0),
        StickyKind::Random => {
            let c1 = cfg.c1.unwrap_or(assign.balance().0);
            let s = sticky_size_for(cfg.bandits, cfg.arms, cfg.agents, c1, cfg.gamma)?;
            let limit = crate::env::max_sticky_size(cfg.arms, cfg.bandits, cfg.peer_size);
            if s > limit {
                return Err(SimError::Setup(format!(
                    "default sticky size {s} exceeds the limit {limit}; set sticky_size explicitly"
                )));
            }
            s
        }
    })
}

pub fn prepare_replication(
    cfg: &SimConfig,
    seeds: &SeedTree,
    index: usize,
    fixed: Option<&InstanceSpec>,
) -> Result<Replication, SimError> {
    let rep = index as u32;
    let instance = match fixed {
        Some(spec) => spec.bandits.clone(),
        None => build_instance(cfg.bandits, cfg.arms, cfg.mean_range, &mut seeds.for_replication(rep, Purpose::Instance))?,
    };
    if instance.num_bandits() != cfg.bandits || instance.num_arms() != cfg.arms {
        return Err(SimError::Setup(format!(
            "instance has {} bandits and {} arms, config says {} and {}",
            instance.num_bandits(),
            instance.num_arms(),
            cfg.bandits,
            cfg.arms
        )));
    }
    let assignment = match fixed.and_then(|s| s.assignment.clone()) {
        Some(a) => {
            if a.num_agents() != cfg.agents {
                return Err(SimError::Setup(format!("instance file assigns {} agents, config says {}", a.num_agents(), cfg.agents)));
            }
            if a.peer_size() != cfg.peer_size {
                return Err(SimError::Setup("instance file peer blocks disagree with peer_size".into()));
            }
            a
        }
        None => assign_agents(
            cfg.agents,
            cfg.bandits,
            Some(&cfg.group_sizes()),
            cfg.peer_size,
            &mut seeds.for_replication(rep, Purpose::Assignment),
        )?,
    };
    let explicit = fixed.and_then(|s| s.sticky.clone());
    let sticky_cfg = match explicit {
        Some(sets) => StickyConfig { size: 0, gamma: cfg.gamma, mode: StickyMode::Explicit(sets) },
        None => StickyConfig {
            size: effective_sticky_size(cfg, &assignment)?,
            gamma: cfg.gamma,
            mode: match cfg.sticky_kind {
                StickyKind::Random => StickyMode::RandomUniform,
                StickyKind::Partition => StickyMode::Partition,
            },
        },
    };
    let draw = sample_sticky_sets(&instance, &assignment, &sticky_cfg, &mut seeds.for_replication(rep, Purpose::Sticky))?;
    Ok(Replication { index, instance, assignment, sticky: draw.sets, assumption_holds: draw.assumption_holds })
}

/// Outcome of one scenario in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Group regret at each grid point.
    pub curve: Vec<f64>,
    /// Final regret of each agent.
    pub agent_regret: Vec<f64>,
    pub ledger: LedgerSummary,
    /// Per-phase record; empty for scenarios without gossip.
    pub trace: RunTrace,
    pub chi_events: usize,
    pub spread: Option<RunSpread>,
    /// Every agent recommends its best arm and holds it in the tail phases.
    pub frozen: Option<bool>,
    /// Active sets constant and blocks locked on the best set in the tail
    /// (aware scenario only).
    pub static_tail: Option<bool>,
}

impl RunResult {
    pub fn final_regret(&self) -> f64 {
        *self.curve.last().unwrap_or(&0.0)
    }
}

fn reward_streams(seeds: &SeedTree, rep: u32, n: usize) -> Vec<ChaCha8Rng> {
    (0..n).map(|i| seeds.stream(StreamId::new(rep, Purpose::Reward, i as u32))).collect()
}

/// Runs one scenario on one replication.
pub fn run_scenario(
    cfg: &SimConfig,
    scenario: Scenario,
    rep: &Replication,
    seeds: &SeedTree,
    grid: &[u64],
    log: Option<&mut dyn EventSink>,
) -> Result<RunResult, SimError> {
    match scenario {
        Scenario::NoComm => run_no_comm(cfg, rep, seeds, grid, log),
        Scenario::FullComm => run_full_comm(cfg, rep, seeds, grid, log),
        _ => run_gossip(cfg, scenario, rep, seeds, grid, log),
    }
}

fn run_no_comm(
    cfg: &SimConfig,
    rep: &Replication,
    seeds: &SeedTree,
    grid: &[u64],
    mut log: Option<&mut dyn EventSink>,
) -> Result<RunResult, SimError> {
    let inst = &rep.instance;
    let assign = &rep.assignment;
    let n = assign.num_agents();
    let k = inst.num_arms();
    let mut rngs = reward_streams(seeds, rep.index as u32, n);
    let mut acc = vec![0.0; grid.len()];
    let mut agent_regret = Vec::with_capacity(n);
    for i in 0..n {
        let mut a = AgentState::new((0..k).collect(), k, cfg.alpha, cfg.horizon);
        let sink = log.as_deref_mut().map(|s| (s, i, 1));
        a.play_phase(inst, assign.bandit_of(i), cfg.noise, &mut rngs[i], 1, cfg.horizon, grid, &mut acc, sink);
        agent_regret.push(a.regret());
    }
    Ok(RunResult {
        curve: acc,
        agent_regret,
        ledger: LedgerSummary::default(),
        trace: RunTrace::default(),
        chi_events: 0,
        spread: None,
        frozen: None,
        static_tail: None,
    })
}

fn run_full_comm(
    cfg: &SimConfig,
    rep: &Replication,
    seeds: &SeedTree,
    grid: &[u64],
    mut log: Option<&mut dyn EventSink>,
) -> Result<RunResult, SimError> {
    let inst = &rep.instance;
    let assign = &rep.assignment;
    let n = assign.num_agents();
    let k = inst.num_arms();
    let mut rngs = reward_streams(seeds, rep.index as u32, n);
    let mut tables: Vec<SharedUcb> = (0..inst.num_bandits()).map(|_| SharedUcb::new(k, cfg.alpha, cfg.horizon)).collect();
    let mut group_regret = vec![0.0; inst.num_bandits()];
    let mut acc = vec![0.0; grid.len()];
    let mut cursor = 0;
    for t in 1..=cfg.horizon {
        for (m, table) in tables.iter_mut().enumerate() {
            let arm = table.select();
            let mean = inst.mean(m, arm);
            for &i in assign.group(m) {
                let reward = mean + cfg.noise.sample(&mut rngs[i]);
                table.record(arm, reward);
                if let Some(sink) = log.as_deref_mut() {
                    sink.pull(t, i, arm, reward, 1);
                }
            }
            group_regret[m] += inst.gap(m, arm) * assign.group_size(m) as f64;
        }
        while cursor < grid.len() && grid[cursor] == t {
            acc[cursor] = group_regret.iter().sum();
            cursor += 1;
        }
    }
    let agent_regret = (0..n)
        .map(|i| {
            let m = assign.bandit_of(i);
            group_regret[m] / assign.group_size(m) as f64
        })
        .collect();
    Ok(RunResult {
        curve: acc,
        agent_regret,
        ledger: LedgerSummary::default(),
        trace: RunTrace::default(),
        chi_events: 0,
        spread: None,
        frozen: None,
        static_tail: None,
    })
}

fn run_gossip(
    cfg: &SimConfig,
    scenario: Scenario,
    rep: &Replication,
    seeds: &SeedTree,
    grid: &[u64],
    mut log: Option<&mut dyn EventSink>,
) -> Result<RunResult, SimError> {
    let inst = &rep.instance;
    let assign = &rep.assignment;
    let n = assign.num_agents();
    let k = inst.num_arms();
    let m_count = inst.num_bandits();
    let aware = scenario == Scenario::Aware;
    let r = if aware {
        assign.peer_size().ok_or_else(|| SimError::Setup("aware scenario without peer blocks".into()))?
    } else {
        1
    };

    let schedule = PhaseSchedule::new(cfg.beta, cfg.horizon)?;
    let matrix = GossipMatrix::complete(n)?;
    let mut agents: Vec<AgentState> =
        rep.sticky.iter().map(|s| AgentState::new(s.clone(), k, cfg.alpha, cfg.horizon)).collect();
    let mut rngs = reward_streams(seeds, rep.index as u32, n);
    let mut gossip = seeds.stream(StreamId::new(rep.index as u32, Purpose::Gossip, scenario.id()));
    let mut ledger = BitLedger::new(n, k, r as u64);
    let mut blocks: Vec<BlockRecs> = if aware {
        assign.blocks().unwrap_or_default().iter().map(|b| BlockRecs::new(b)).collect()
    } else {
        Vec::new()
    };
    let best_set = inst.best_set();
    let mut acc = vec![0.0; grid.len()];
    let mut trace = RunTrace::default();
    let mut received = vec![0usize; n];
    let mut ohat = vec![0usize; n];

    for span in schedule.phases()? {
        let j = span.index;
        for (i, agent) in agents.iter_mut().enumerate() {
            let sink = log.as_deref_mut().map(|s| (s, i, j));
            agent.play_phase(inst, assign.bandit_of(i), cfg.noise, &mut rngs[i], span.first, span.last, grid, &mut acc, sink);
        }
        if !span.complete {
            break;
        }
        for i in 0..n {
            ohat[i] = agents[i].most_played_this_phase()?;
        }
        for i in 0..n {
            let contact = match scenario {
                Scenario::FullyAware => sample_within(assign.group(assign.bandit_of(i)), i, &mut gossip)?,
                _ => matrix.sample_contact(i, &mut gossip)?,
            };
            received[i] = get_rec(i, &agents[contact], &mut ledger, j)?;
            if let Some(sink) = log.as_deref_mut() {
                sink.rec(j, i, contact, received[i]);
            }
        }
        let before: Vec<(bool, Vec<usize>)> = agents
            .iter()
            .enumerate()
            .map(|(i, a)| (a.active().contains(&inst.best_arm(assign.bandit_of(i))), a.active().to_vec()))
            .collect();

        let mut locked = Vec::with_capacity(blocks.len());
        if aware {
            for block in &mut blocks {
                let recs: Vec<usize> = block.members().iter().map(|&i| received[i]).collect();
                let update = block.end_phase(j, &recs, m_count);
                for (p, &i) in block.members().iter().enumerate() {
                    ledger.charge(i, j, (r - 1) as u64);
                    agents[i].update_active_aware(received[i], ohat[i], &update, p + 1, m_count, r)?;
                }
                let mut unique = block.last_unique().to_vec();
                unique.sort_unstable();
                locked.push(unique == best_set);
            }
        } else {
            for (i, agent) in agents.iter_mut().enumerate() {
                agent.update_active_unaware(received[i], ohat[i]);
            }
        }

        let records = before
            .into_iter()
            .enumerate()
            .map(|(i, (best_active, old))| AgentPhase {
                best_active,
                most_played: ohat[i],
                active_changed: old.as_slice() != agents[i].active(),
            })
            .collect();
        trace.phases.push(PhaseRecord { phase: j, agents: records, blocks_locked: locked });
        if let Some(sink) = log.as_deref_mut() {
            for (i, a) in agents.iter().enumerate() {
                sink.active(j + 1, i, a.active());
            }
        }
    }

    let chi_events = trace.chi_events(inst, assign).len();
    let spread = measure_real_spread(&trace, inst, assign);
    let frozen = trace.frozen_on_best(inst, assign, cfg.tail_fraction);
    let static_tail = aware.then(|| trace.static_in_tail(cfg.tail_fraction));
    Ok(RunResult {
        curve: acc,
        agent_regret: agents.iter().map(AgentState::regret).collect(),
        ledger: ledger.summary(),
        trace,
        chi_events,
        spread: Some(spread),
        frozen: Some(frozen),
        static_tail,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRuns {
    pub scenario: Scenario,
    pub runs: Vec<RunResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: SimConfig,
    pub grid: Vec<u64>,
    pub replications: Vec<Replication>,
    pub scenarios: Vec<ScenarioRuns>,
}

fn run_replication(
    cfg: &SimConfig,
    seeds: &SeedTree,
    index: usize,
    fixed: Option<&InstanceSpec>,
    grid: &[u64],
) -> Result<(Replication, Vec<RunResult>), SimError> {
    let rep = prepare_replication(cfg, seeds, index, fixed)?;
    let mut out = Vec::with_capacity(cfg.scenarios.len());
    for &scenario in &cfg.scenarios {
        let result = match (&cfg.event_log, index) {
            (Some(dir), 0) => {
                fs::create_dir_all(dir)?;
                let file = fs::File::create(dir.join(format!("{}-rep0.log", scenario.name())))?;
                let mut sink = LineLog::new(BufWriter::new(file));
                let r = run_scenario(cfg, scenario, &rep, seeds, grid, Some(&mut sink))?;
                sink.finish()?;
                r
            }
            _ => run_scenario(cfg, scenario, &rep, seeds, grid, None)?,
        };
        out.push(result);
    }
    Ok((rep, out))
}

/// Runs every configured scenario for every replication.
pub fn run_experiment(cfg: &SimConfig) -> Result<Experiment, SimError> {
    let fixed = cfg.instance.as_deref().map(InstanceSpec::from_file).transpose()?;
    run_experiment_with(cfg, fixed.as_ref())
}

/// Like [`run_experiment`] with the fixed instance given in memory.
pub fn run_experiment_with(cfg: &SimConfig, fixed: Option<&InstanceSpec>) -> Result<Experiment, SimError> {
    cfg.validate()?;
    let seeds = SeedTree::new(cfg.master_seed);
    let grid = log_grid(cfg.horizon, cfg.grid_points);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| SimError::Setup(format!("cannot start worker pool: {e}")))?;
    let results: Vec<(Replication, Vec<RunResult>)> = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|i| run_replication(cfg, &seeds, i, fixed, &grid))
            .collect::<Result<_, _>>()
    })?;

    let mut scenarios: Vec<ScenarioRuns> =
        cfg.scenarios.iter().map(|&s| ScenarioRuns { scenario: s, runs: Vec::with_capacity(results.len()) }).collect();
    let mut replications = Vec::with_capacity(results.len());
    for (rep, runs) in results {
        for (slot, run) in scenarios.iter_mut().zip(runs) {
            slot.runs.push(run);
        }
        replications.push(rep);
    }
    Ok(Experiment { config: cfg.clone(), grid, replications, scenarios })
}

impl Experiment {
    pub fn scenario(&self, s: Scenario) -> Option<&ScenarioRuns> {
        self.scenarios.iter().find(|r| r.scenario == s)
    }

    pub fn curves(&self) -> Vec<ScenarioCurves> {
        self.scenarios
            .iter()
            .map(|s| ScenarioCurves {
                scenario: s.scenario.name().to_string(),
                grid: self.grid.clone(),
                curves: s.runs.iter().map(|r| r.curve.clone()).collect(),
            })
            .collect()
    }

    /// Writes `curves.csv`, `summary.csv`, `diagnostics.csv`, `agents.csv`,
    /// `instance-rep0.txt` and `notes.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        emit_csv(dir, &self.curves())?;
        let mut f = BufWriter::new(fs::File::create(dir.join("diagnostics.csv"))?);
        self.write_diagnostics(&mut f)?;
        f.flush()?;
        let mut f = BufWriter::new(fs::File::create(dir.join("agents.csv"))?);
        self.write_agents(&mut f)?;
        f.flush()?;
        if let Some(rep) = self.replications.first() {
            let mut spec = InstanceSpec::new(rep.instance.clone());
            spec.assignment = Some(rep.assignment.clone());
            spec.sticky = Some(rep.sticky.clone());
            spec.alpha = Some(self.config.alpha);
            spec.beta = Some(self.config.beta);
            spec.horizon = Some(self.config.horizon);
            fs::write(dir.join("instance-rep0.txt"), spec.to_text())?;
        }
        fs::write(dir.join("notes.txt"), self.notes())
    }

    pub fn notes(&self) -> String {
        let mut s = String::new();
        s.push_str("regret is pseudo-regret: the sum of true gaps of the pulled arms\n");
        s.push_str("ci_half = 1.96 * sample sd / sqrt(replications)\n");
        if self.config.replications == 1 {
            s.push_str("single replication: ci_half is 0 by convention\n");
        }
        s.push_str(
            "tau_stab is estimated in hindsight as one past the last phase in which an agent holding its best arm \
             recommended another arm; it depends on the horizon\n",
        );
        s
    }

    pub fn write_diagnostics<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(
            out,
            "scenario,replication,final_group_regret,chi_events,total_bits,max_bits_in_phase,bit_budget,violations,\
             tau_stab,stabilized,frozen_tail,static_tail,assumption_holds"
        )?;
        let flag = |b: Option<bool>| b.map_or(String::new(), |b| u8::from(b).to_string());
        for s in &self.scenarios {
            for (rep, run) in s.runs.iter().enumerate() {
                writeln!(
                    out,
                    "{},{rep},{},{},{},{},{},{},{},{},{},{},{}",
                    s.scenario,
                    fmt_g6(run.final_regret()),
                    run.chi_events,
                    run.ledger.total_bits,
                    run.ledger.max_bits_in_phase,
                    run.ledger.budget,
                    run.ledger.violations,
                    run.spread.as_ref().map_or(String::new(), |sp| sp.tau_stab.to_string()),
                    flag(run.spread.as_ref().map(|sp| sp.stabilized)),
                    flag(run.frozen),
                    flag(run.static_tail),
                    u8::from(self.replications[rep].assumption_holds),
                )?;
            }
        }
        Ok(())
    }

    pub fn write_agents<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "scenario,replication,agent,bandit,final_regret")?;
        for s in &self.scenarios {
            for (rep, run) in s.runs.iter().enumerate() {
                let assign = &self.replications[rep].assignment;
                for (i, r) in run.agent_regret.iter().enumerate() {
                    writeln!(out, "{},{rep},{i},{},{}", s.scenario, assign.bandit_of(i), fmt_g6(*r))?;
                }
            }
        }
        Ok(())
    }
}
