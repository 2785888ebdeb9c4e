//! Acceptance checks. Each test prints one `PASS` or `FAIL` line.
//!
//! Simulation outcomes that miss their target are reported, not asserted;
//! set `ACCEPTANCE_STRICT=1` to turn every `FAIL` into a test failure.

use gossip_bandits::bounds::{
    chained_family, check_chained, group_ub, lower_bound_group, lower_bound_unaware, phase_cap, tau_m_star, BoundParams,
};
use gossip_bandits::env::{
    assign_agents, build_instance, sample_sticky_sets, sticky_size_for, Assignment, BanditSet, MeanRange, StickyConfig,
    StickyMode,
};
use gossip_bandits::output::mean_ci;
use gossip_bandits::phase::PhaseSchedule;
use gossip_bandits::policy::divide_rec;
use gossip_bandits::rumor::{group_eta, spreading_time};
use gossip_bandits::runner::run_experiment;
use gossip_bandits::{Experiment, Scenario, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

fn report(name: &str, pass: bool, detail: &str) {
    let line = format!("{} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    // straight to the process stdout so the line survives output capture
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    if !pass && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        panic!("{name} failed: {detail}");
    }
}

struct Batch {
    label: &'static str,
    exp: Experiment,
    elapsed: Duration,
}

fn run_batch(label: &'static str, cfg: SimConfig) -> Batch {
    let start = Instant::now();
    let exp = run_experiment(&cfg).expect("batch run");
    Batch { label, exp, elapsed: start.elapsed() }
}

fn standard_run() -> &'static Batch {
    static F: OnceLock<Batch> = OnceLock::new();
    F.get_or_init(|| run_batch("fig1", SimConfig::standard()))
}

fn shifted_run() -> &'static Batch {
    static F: OnceLock<Batch> = OnceLock::new();
    F.get_or_init(|| run_batch("fig2", SimConfig::shifted()))
}

fn finals(exp: &Experiment, s: Scenario) -> Vec<f64> {
    exp.scenario(s).expect("scenario present").runs.iter().map(|r| r.final_regret()).collect()
}

const ORDER: [Scenario; 5] =
    [Scenario::FullComm, Scenario::FullyAware, Scenario::Aware, Scenario::Unaware, Scenario::NoComm];

fn ordering_holds(f: &Batch) -> (bool, String) {
    let stats: Vec<(f64, f64)> = ORDER.iter().map(|&s| mean_ci(&finals(&f.exp, s))).collect();
    let ordered = stats.windows(2).all(|w| w[0].0 < w[1].0);
    let apart = |a: (f64, f64), b: (f64, f64)| a.0 + a.1 < b.0 - b.1;
    let sep_nc = apart(stats[3], stats[4]);
    let sep_ua = apart(stats[2], stats[3]);
    let listing: Vec<String> =
        ORDER.iter().zip(&stats).map(|(s, (m, h))| format!("{}={:.0}+-{:.0}", s.name(), m, h)).collect();
    let detail = format!(
        "{} [{}] ordered={} ci_apart(unaware,no-comm)={} ci_apart(aware,unaware)={} time={:.1}s",
        f.label,
        listing.join(" "),
        ordered,
        sep_nc,
        sep_ua,
        f.elapsed.as_secs_f64()
    );
    (ordered && sep_nc && sep_ua, detail)
}

#[test]
fn regret_ordering() {
    let (p1, d1) = ordering_holds(standard_run());
    let (p2, d2) = ordering_holds(shifted_run());
    report("regret_ordering", p1 && p2, &format!("{d1}; {d2}"));
}

const NEED: usize = 28;

fn count_runs(f: &Batch, s: Scenario, pick: impl Fn(&gossip_bandits::runner::RunResult) -> Option<bool>) -> usize {
    f.exp.scenario(s).unwrap().runs.iter().filter(|r| pick(r) == Some(true)).count()
}

#[test]
fn freezing() {
    let mut pass = true;
    let mut parts = Vec::new();
    for f in [standard_run(), shifted_run()] {
        for s in [Scenario::Unaware, Scenario::Aware] {
            let n = count_runs(f, s, |r| r.frozen);
            let total = f.exp.scenario(s).unwrap().runs.len();
            pass &= n >= NEED;
            parts.push(format!("{} {} {n}/{total}", f.label, s.name()));
        }
    }
    report("freezing", pass, &format!("{} (need >= {NEED}/30)", parts.join(", ")));
}

#[test]
fn aware_stasis() {
    let mut pass = true;
    let mut parts = Vec::new();
    for f in [standard_run(), shifted_run()] {
        let n = count_runs(f, Scenario::Aware, |r| r.static_tail);
        let total = f.exp.scenario(Scenario::Aware).unwrap().runs.len();
        pass &= n >= NEED;
        parts.push(format!("{} {n}/{total}", f.label));
    }
    report("aware_stasis", pass, &format!("{} (need >= {NEED}/30)", parts.join(", ")));
}

// One stabilized bandit from one run: phases until every member held the
// best arm, and how many phases were left to observe it.
struct SpreadSample {
    value: Option<u64>,
    window: u64,
}

struct SpreadPool {
    samples: Vec<SpreadSample>,
    runs: usize,
    contributing: usize,
    violations: u64,
}

const POOL_RUNS: usize = 300;
const POOL_NEED: usize = 200;

// Context-unaware runs on the standard shape. Each bandit counts from
// the phase after its own last chi event.
fn spread_pool() -> &'static SpreadPool {
    static P: OnceLock<SpreadPool> = OnceLock::new();
    P.get_or_init(|| {
        let mut cfg = SimConfig::standard();
        cfg.scenarios = vec![Scenario::Unaware];
        cfg.peer_size = None;
        cfg.replications = POOL_RUNS;
        cfg.master_seed = 1000;
        let exp = run_experiment(&cfg).expect("pool run");
        let mut pool = SpreadPool { samples: Vec::new(), runs: 0, contributing: 0, violations: 0 };
        for run in &exp.scenarios[0].runs {
            pool.runs += 1;
            pool.violations += run.ledger.violations;
            let spread = run.spread.as_ref().expect("gossip run has spread");
            let last = run.trace.phases.last().map_or(0, |p| p.phase);
            let before = pool.samples.len();
            for (&stab, &value) in spread.bandit_stab.iter().zip(&spread.bandit_spr) {
                if stab <= last {
                    pool.samples.push(SpreadSample { value, window: last + 1 - stab });
                }
            }
            if pool.samples.len() > before {
                pool.contributing += 1;
            }
        }
        pool
    })
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn rumor_dominance() {
    let pool = spread_pool();
    let eta = group_eta(5, 25);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    // Both sides truncated at the sample's window, which keeps the ordering.
    let mut real = Vec::with_capacity(pool.samples.len());
    let mut noisy = Vec::with_capacity(pool.samples.len());
    let mut censored = 0;
    for s in &pool.samples {
        if s.value.is_none() {
            censored += 1;
        }
        real.push(s.value.unwrap_or(s.window).min(s.window) as f64);
        let t = spreading_time(5, eta, &mut rng, 1).unwrap()[0];
        noisy.push(t.min(s.window) as f64);
    }
    if real.len() < 2 {
        return report("rumor_dominance", false, &format!("{} samples", real.len()));
    }
    let (mr, sr) = mean_se(&real);
    let (mn, sn) = mean_se(&noisy);
    let pooled = (sr * sr + sn * sn).sqrt();
    let pass = pool.contributing >= POOL_NEED && mr <= mn + 2.0 * pooled;
    let detail = format!(
        "real mean {mr:.3} (se {sr:.3}) <= noisy eta={eta:.4} mean {mn:.3} (se {sn:.3}) + 2 pooled se; \
         {} bandit samples ({censored} cut at horizon) from {} of {} runs",
        real.len(),
        pool.contributing,
        pool.runs
    );
    report("rumor_dominance", pass, &detail);
}

fn exact_noiseless_mean(n: usize) -> f64 {
    let pmf = |u: usize, j: usize, p: f64| {
        let mut c = 1.0;
        for i in 0..j {
            c = c * (u - i) as f64 / (i + 1) as f64;
        }
        c * p.powi(j as i32) * (1.0 - p).powi((u - j) as i32)
    };
    let mut e = vec![0.0; n + 1];
    for s in (1..n).rev() {
        let p = s as f64 / (n - 1) as f64;
        let u = n - s;
        let acc: f64 = 1.0 + (1..=u).map(|j| pmf(u, j, p) * e[s + j]).sum::<f64>();
        e[s] = acc / (1.0 - pmf(u, 0, p));
    }
    e[1]
}

#[test]
fn noiseless_rumor_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut pass = true;
    let mut parts = Vec::new();
    for n in 2..=8 {
        let xs: Vec<f64> = spreading_time(n, 1.0, &mut rng, 10_000).unwrap().into_iter().map(|v| v as f64).collect();
        let (m, se) = mean_se(&xs);
        let exact = exact_noiseless_mean(n);
        let z = if se > 0.0 { (m - exact) / se } else if m == exact { 0.0 } else { f64::INFINITY };
        pass &= z.abs() <= 3.0;
        parts.push(format!("n={n} {m:.4}/{exact:.4} z={z:.2}"));
    }
    report("noiseless_rumor_exactness", pass, &parts.join(", "));
}

#[test]
fn sticky_probability() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = build_instance(5, 20, MeanRange::unit(), &mut rng).unwrap();
    let assign = assign_agents(25, 5, None, None, &mut rng).unwrap();
    let s = sticky_size_for(5, 20, 25, assign.balance().0, 0.1).unwrap();
    let cfg = StickyConfig { size: s, gamma: 0.1, mode: StickyMode::RandomUniform };
    let trials = 10_000;
    let fails = (0..trials).filter(|_| !sample_sticky_sets(&inst, &assign, &cfg, &mut rng).unwrap().assumption_holds).count();
    let rate = fails as f64 / trials as f64;
    let limit = 0.1 + 3.0 * (0.09f64 / trials as f64).sqrt();
    report("sticky_probability", s == 16 && rate <= limit, &format!("S={s} failure rate {rate:.4} <= {limit:.4}"));
}

#[test]
fn bit_budget() {
    let mut violations = 0u64;
    let mut checked = 0usize;
    let mut worst = Vec::new();
    for f in [standard_run(), shifted_run()] {
        for s in &f.exp.scenarios {
            if !s.scenario.gossips() {
                continue;
            }
            let max = s.runs.iter().map(|r| r.ledger.max_bits_in_phase).max().unwrap_or(0);
            let budget = s.runs.first().map_or(0, |r| r.ledger.budget);
            worst.push(format!("{} {} max {max}/{budget}", f.label, s.scenario.name()));
            for r in &s.runs {
                violations += r.ledger.violations;
                checked += 1;
            }
        }
    }
    let pool = spread_pool();
    violations += pool.violations;
    checked += pool.runs;
    report("bit_budget", violations == 0, &format!("{violations} violations over {checked} runs; {}", worst.join(", ")));
}

fn fig1_rep0() -> (BanditSet, Assignment, Vec<Vec<usize>>) {
    let rep = &standard_run().exp.replications[0];
    (rep.instance.clone(), rep.assignment.clone(), rep.sticky.clone())
}

#[test]
fn bounds_consistency() {
    let mut notes = Vec::new();

    let mut scan_ok = 0;
    for alpha in [11.0, 15.0, 20.0, 30.0, 50.0] {
        for delta in [0.05, 0.1, 0.2, 0.5, 1.0] {
            for beta in [2.5, 3.0, 3.5, 4.0] {
                let s = PhaseSchedule::new(beta, u64::MAX).unwrap();
                let j = tau_m_star(&s, 4, alpha, delta).unwrap();
                if j as f64 <= phase_cap(beta, alpha, delta, 6.0) {
                    scan_ok += 1;
                }
            }
        }
    }
    notes.push(format!("scan<=cap {scan_ok}/100"));

    let two = BanditSet::from_means(vec![vec![0.2, 0.0], vec![0.0, 0.5]]).unwrap();
    let lb = lower_bound_group(&two).unwrap();
    notes.push(format!("two-by-two lower bound {lb}"));

    let (inst, assign, sticky) = fig1_rep0();
    let p = BoundParams { alpha: 15.0, beta: 3.0, horizon: 200_000, sticky_size: 4, c1: 1.0, c2: 1.0 };
    let un = group_ub(&inst, &assign, &sticky, None, &p).unwrap().log_coef();
    let aw = group_ub(&inst, &assign, &sticky, Some(5), &p).unwrap().log_coef();
    notes.push(format!("fig1 log-coef aware {aw:.1} <= unaware {un:.1}"));

    let fam = BanditSet::from_means(chained_family(5, 20)).unwrap();
    let chained = check_chained(&fam).is_ok();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fam_assign = assign_agents(25, 5, None, None, &mut rng).unwrap();
    let lbu = lower_bound_unaware(&fam, &fam_assign).unwrap();
    notes.push(format!("chained family accepted={chained} value {} >= floor {}", lbu.value, lbu.floor));

    let pass = scan_ok == 100 && lb == 14.0 && aw <= un && chained && lbu.value >= lbu.floor;
    report("bounds_consistency", pass, &notes.join("; "));
}

#[test]
fn divide_rec_coverage() {
    let mut cases = 0;
    let mut bad = Vec::new();
    for m in 1..=8usize {
        for r in 1..=m {
            let sortrec: Vec<usize> = (0..m).collect();
            let mut seen = BTreeSet::new();
            for pos in 1..=r {
                let part = divide_rec(pos, &sortrec, m, r).unwrap();
                if part.len() > m.div_ceil(r) {
                    bad.push(format!("M={m} r={r} pos={pos} too long"));
                }
                seen.extend(part);
            }
            if seen.len() != m {
                bad.push(format!("M={m} r={r} covers {}", seen.len()));
            }
            cases += 1;
        }
    }
    let example = divide_rec(2, &[1, 2, 3, 4, 5, 6], 6, 3).unwrap();
    let pass = bad.is_empty() && example == vec![3, 4];
    report(
        "divide_rec",
        pass,
        &format!("{cases} (M, r) pairs, problems {:?}; M=6 r=3 pos=2 -> {example:?}", bad),
    );
}

fn csv_bytes(workers: usize, dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut cfg = SimConfig::standard();
    cfg.replications = 8;
    cfg.workers = workers;
    run_experiment(&cfg).unwrap().write(dir).unwrap();
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let wide = std::thread::available_parallelism().map_or(8, |n| n.get()).max(8) * 4;
    let a = csv_bytes(1, &tmp.path().join("a"));
    let b = csv_bytes(wide, &tmp.path().join("b"));
    let c = csv_bytes(1, &tmp.path().join("c"));
    let pass = !a.is_empty() && a == b && a == c;
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    report("determinism", pass, &format!("{} files {:?} identical at 1 and {wide} workers", a.len(), names));
}
