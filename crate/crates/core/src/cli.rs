//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bounds::{
    group_ub, lower_bound_group, lower_bound_unaware, per_agent_ub_aware, per_agent_ub_unaware, BoundError, BoundParams,
    G_SPR_AWARE_NOTE, G_SPR_NOTE,
};
use crate::config::{Scenario, SimConfig};
use crate::env::is_partition;
use crate::instance_file::InstanceSpec;
use crate::output::fmt_g6;
use crate::rng::{Purpose, SeedTree, StreamId};
use crate::rumor::{spreading_time, write_rumor_csv};
use crate::runner::{prepare_replication, run_experiment, run_experiment_with, Experiment};

#[derive(Debug, Parser)]
#[command(name = "gossip-bandits", version, about = "Multi-agent bandit learning over gossip")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the scenarios of a config file and write CSVs.
    Run(RunArgs),
    /// Run all five scenarios on one shared instance.
    Sweep(RunArgs),
    /// Print the regret bounds of an instance file.
    Bounds(BoundsArgs),
    /// Sample rumor spreading times.
    Rumor(RumorArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Config file (`key = value` lines).
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Instance file.
    pub instance: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub sticky_size: Option<usize>,
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RumorArgs {
    /// Group sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    /// Success probabilities, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub eta: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// CSV path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), String> {
    match cmd {
        Command::Run(a) => run_cmd(&a, false),
        Command::Sweep(a) => run_cmd(&a, true),
        Command::Bounds(a) => bounds_cmd(&a),
        Command::Rumor(a) => rumor_cmd(&a),
    }
}

fn load_config(a: &RunArgs) -> Result<SimConfig, String> {
    let mut cfg = SimConfig::from_file(&a.config).map_err(|e| e.to_string())?;
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    if let Some(r) = a.reps {
        cfg.replications = r;
    }
    if let Some(h) = a.horizon {
        cfg.horizon = h;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if let Some(o) = &a.out {
        cfg.output_dir = o.clone();
    }
    // Relative paths in the file are taken relative to the file.
    let base = a.config.parent().unwrap_or(Path::new("."));
    if let Some(p) = &cfg.instance {
        if p.is_relative() {
            cfg.instance = Some(base.join(p));
        }
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn run_cmd(a: &RunArgs, sweep: bool) -> Result<(), String> {
    let mut cfg = load_config(a)?;
    let exp = if sweep {
        cfg.scenarios = if cfg.peer_size.is_some() {
            Scenario::ALL.to_vec()
        } else {
            Scenario::ALL.iter().copied().filter(|&s| s != Scenario::Aware).collect()
        };
        cfg.validate().map_err(|e| e.to_string())?;
        let fixed = match &cfg.instance {
            Some(p) => InstanceSpec::from_file(p).map_err(|e| e.to_string())?,
            None => {
                let rep = prepare_replication(&cfg, &SeedTree::new(cfg.master_seed), 0, None).map_err(|e| e.to_string())?;
                InstanceSpec::new(rep.instance)
            }
        };
        run_experiment_with(&cfg, Some(&fixed))
    } else {
        run_experiment(&cfg)
    }
    .map_err(|e| e.to_string())?;
    exp.write(&cfg.output_dir).map_err(|e| format!("cannot write {}: {e}", cfg.output_dir.display()))?;
    print_run_summary(&exp);
    Ok(())
}

fn print_run_summary(exp: &Experiment) {
    let cfg = &exp.config;
    println!(
        "{} replications, horizon {}, outputs in {}",
        cfg.replications,
        cfg.horizon,
        cfg.output_dir.display()
    );
    if cfg.replications == 1 {
        println!("note: single replication, ci_half is 0 by convention");
    }
    println!("{:<12} {:>14} {:>12}", "scenario", "final_mean", "ci_half");
    for c in exp.curves() {
        if let Some(last) = c.summary().last() {
            println!("{:<12} {:>14} {:>12}", c.scenario, fmt_g6(last.mean), fmt_g6(last.ci_half));
        }
    }
}

struct Table {
    rows: Vec<(String, String, String)>,
}

impl Table {
    fn push(&mut self, quantity: &str, scope: impl Into<String>, value: impl Into<String>) {
        self.rows.push((quantity.to_string(), scope.into(), value.into()));
    }

    fn num(&mut self, quantity: &str, scope: impl Into<String>, v: f64) {
        self.push(quantity, scope, fmt_g6(v));
    }

    fn print<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let w0 = self.rows.iter().map(|r| r.0.len()).max().unwrap_or(8).max(8);
        let w1 = self.rows.iter().map(|r| r.1.len()).max().unwrap_or(5).max(5);
        writeln!(out, "{:<w0$}  {:<w1$}  value", "quantity", "scope")?;
        for (q, s, v) in &self.rows {
            writeln!(out, "{q:<w0$}  {s:<w1$}  {v}")?;
        }
        Ok(())
    }

    fn csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "quantity,scope,value")?;
        for (q, s, v) in &self.rows {
            if v.contains(',') || v.contains('"') {
                writeln!(out, "{q},{s},\"{}\"", v.replace('"', "\"\""))?;
            } else {
                writeln!(out, "{q},{s},{v}")?;
            }
        }
        Ok(())
    }
}

fn bounds_cmd(a: &BoundsArgs) -> Result<(), String> {
    let spec = InstanceSpec::from_file(&a.instance).map_err(|e| e.to_string())?;
    let inst = &spec.bandits;
    let mut t = Table { rows: Vec::new() };

    match lower_bound_group(inst) {
        Ok(v) => t.num("lower_bound_group", "all", v),
        Err(e) => t.push("lower_bound_group", "all", format!("n/a: {e}")),
    }

    let (Some(assign), Some(sticky)) = (&spec.assignment, &spec.sticky) else {
        t.push("note", "all", "upper bounds need assign and sticky lines");
        return finish_table(&t, a.csv.as_deref());
    };

    let (c1_tight, c2_tight) = assign.balance();
    let p = BoundParams {
        alpha: a.alpha.or(spec.alpha).unwrap_or(15.0),
        beta: a.beta.or(spec.beta).unwrap_or(3.0),
        horizon: a.horizon.or(spec.horizon).unwrap_or(200_000),
        sticky_size: a
            .sticky_size
            .or(spec.sticky_size)
            .unwrap_or_else(|| sticky.iter().map(Vec::len).max().unwrap_or(0)),
        c1: a.c1.or(spec.c1).unwrap_or(c1_tight),
        c2: a.c2.or(spec.c2).unwrap_or(c2_tight),
    };
    p.check().map_err(|e| format!("{e}; the upper bounds are only valid there"))?;

    match lower_bound_unaware(inst, assign) {
        Ok(lb) => {
            t.num("lower_bound_chained", "all", lb.value);
            t.num("lower_bound_chained_floor", "all", lb.floor);
        }
        Err(e) => t.push("lower_bound_chained", "all", format!("n/a: {e}")),
    }

    let r = assign.peer_size();
    for i in 0..assign.num_agents() {
        let scope = format!("agent{i}");
        let b = per_agent_ub_unaware(inst, assign, sticky, i, &p).map_err(|e| e.to_string())?;
        t.num("unaware_log_coef", scope.clone(), b.log_coef);
        t.push("unaware_tau_star", scope.clone(), b.start_phase.to_string());
        t.num("unaware_warmup", scope.clone(), b.warmup);
        t.num("unaware_g", scope.clone(), b.g);
        t.num("unaware_constant", scope.clone(), b.constant);
        t.num("unaware_at_horizon", scope.clone(), b.at_horizon);
        if let Some(r) = r {
            let b = per_agent_ub_aware(inst, assign, sticky, i, r, &p).map_err(|e| e.to_string())?;
            t.num("aware_log_coef", scope.clone(), b.log_coef);
            t.push("aware_j_star", scope.clone(), b.start_phase.to_string());
            t.num("aware_warmup", scope.clone(), b.warmup);
            t.num("aware_g", scope.clone(), b.g);
            t.num("aware_constant", scope.clone(), b.constant);
            t.num("aware_rec", scope.clone(), b.rec);
            t.num("aware_at_horizon", scope, b.at_horizon);
        }
    }

    if is_partition(inst.num_arms(), assign, sticky) {
        let g = group_ub(inst, assign, sticky, None, &p).map_err(|e| e.to_string())?;
        group_rows(&mut t, "unaware", &g);
        if let Some(r) = r {
            let g = group_ub(inst, assign, sticky, Some(r), &p).map_err(|e| e.to_string())?;
            group_rows(&mut t, "aware", &g);
        }
    } else {
        t.push("note", "group", "group bounds need sticky sets that partition the arms of every group");
    }
    t.push("g_spr", "symbolic", G_SPR_NOTE);
    if r.is_some() {
        t.push("g_spr_aware", "symbolic", G_SPR_AWARE_NOTE);
    }
    if !inst.within_unit_interval() {
        t.push("note", "all", "means outside [0,1]: second-order terms scaled by each bandit's largest gap");
    }
    finish_table(&t, a.csv.as_deref())
}

fn group_rows(t: &mut Table, label: &str, g: &crate::bounds::GroupBound) {
    let scope = format!("group_{label}");
    t.num("first_log_coef", scope.clone(), g.first_coef);
    t.num("second_log_coef", scope.clone(), g.second_coef);
    t.num("log_coef", scope.clone(), g.log_coef());
    t.push("start_phase", scope.clone(), g.start_phase.to_string());
    t.num("warmup", scope.clone(), g.warmup);
    t.num("constant", scope.clone(), g.constant);
    t.num("rec", scope.clone(), g.rec);
    t.num("at_horizon", scope, g.at_horizon);
}

fn finish_table(t: &Table, csv: Option<&Path>) -> Result<(), String> {
    let stdout = io::stdout();
    t.print(&mut stdout.lock()).map_err(|e| e.to_string())?;
    if let Some(path) = csv {
        let mut f = BufWriter::new(fs::File::create(path).map_err(|e| format!("cannot write {}: {e}", path.display()))?);
        t.csv(&mut f).and_then(|_| f.flush()).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn rumor_cmd(a: &RumorArgs) -> Result<(), String> {
    let seeds = SeedTree::new(a.seed);
    let mut buf: Vec<u8> = Vec::new();
    let mut combo = 0u32;
    for &n in &a.n {
        for &eta in &a.eta {
            let mut rng = seeds.stream(StreamId::new(0, Purpose::Rumor, combo));
            let samples = spreading_time(n, eta, &mut rng, a.reps).map_err(|e| e.to_string())?;
            let kind = if eta == 1.0 { "noiseless" } else { "noisy" };
            write_rumor_csv(&mut buf, kind, n, eta, &samples, combo == 0).map_err(|e| e.to_string())?;
            combo += 1;
        }
    }
    match &a.out {
        Some(p) => fs::write(p, &buf).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => io::stdout().write_all(&buf).map_err(|e| e.to_string()),
    }
}

impl From<BoundError> for String {
    fn from(e: BoundError) -> Self {
        e.to_string()
    }
}
