//! Closed-form regret bounds.
//!
//! Upper bounds hold for `alpha > 10` and `beta > 2`; every bound entry point
//! refuses other parameters. Terms that are only known up to absolute
//! constants are reported as formula strings.
//!
//! When some mean falls outside `[0, 1]`, the second-order terms of each agent
//! are multiplied by the largest gap of its bandit.

use std::f64::consts::PI;

use thiserror::Error;

use crate::env::{is_partition, Assignment, BanditSet};
use crate::phase::{PhaseSchedule, ScheduleError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("upper bounds require alpha > 10, got alpha = {0}")]
    AlphaTooSmall(f64),
    #[error("upper bounds require beta > 2, got beta = {0}")]
    BetaTooSmall(f64),
    #[error("gap must be positive, got {0}")]
    BadGap(f64),
    #[error("c1/M = {ratio} must exceed 1/N = {inv_n}")]
    BalanceTooLow { ratio: f64, inv_n: f64 },
    #[error("peer block size r must be >= 1")]
    BadPeerSize,
    #[error("group bounds need sticky sets that partition [K] within every group")]
    NotPartition,
    #[error("bandit {0} has a suboptimal arm with zero gap")]
    ZeroGap(usize),
    #[error("instance does not chain best arms: {0}")]
    NotChained(String),
    #[error("scan for the first good phase passed the closed-form cap {0}")]
    CapExceeded(f64),
    #[error("agent {0} has no sticky set")]
    MissingSticky(usize),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Inputs shared by all upper bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub alpha: f64,
    pub beta: f64,
    pub horizon: u64,
    /// Common sticky size S.
    pub sticky_size: usize,
    /// Lower balance constant: every group has at least `c1 N / M` agents.
    pub c1: f64,
    /// Upper balance constant: every group has at most `c2 N / M` agents.
    pub c2: f64,
}

impl BoundParams {
    pub fn check(&self) -> Result<(), BoundError> {
        if !(self.alpha > 10.0) {
            return Err(BoundError::AlphaTooSmall(self.alpha));
        }
        if !(self.beta > 2.0) {
            return Err(BoundError::BetaTooSmall(self.beta));
        }
        Ok(())
    }
}

/// `Gamma(x)` for `x > 0`. Integral arguments up to 171 use the exact
/// factorial; the rest use the Lanczos approximation (g = 7, 9 terms).
pub fn gamma(x: f64) -> f64 {
    if x == x.floor() && (1.0..=171.0).contains(&x) {
        return (1..x as u64).fold(1.0, |acc, i| acc * i as f64);
    }
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    (ln_gamma_lanczos(x)).exp()
}

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn ln_gamma_lanczos(x: f64) -> f64 {
    let x = x - 1.0;
    let t = x + 7.5;
    let mut a = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `C(n, k)`: exact in integers for `n <= 64`, otherwise through log-gamma
/// (relative error around 1e-13).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    if n <= 64 {
        let mut c: u128 = 1;
        for i in 0..k as u128 {
            c = c * (n as u128 - i) / (i + 1);
        }
        return c as f64;
    }
    let ln = ln_gamma_lanczos(n as f64 + 1.0) - ln_gamma_lanczos(k as f64 + 1.0) - ln_gamma_lanczos((n - k) as f64 + 1.0);
    ln.exp().round()
}

/// First phase `j` with `(A_j - A_{j-1}) / den >= 1 + 4 alpha / delta^2 ln A_j`.
/// `den` is `S + 2` without peer blocks and `S + 2 + ceil(M/r)` with them.
pub fn first_good_phase(schedule: &PhaseSchedule, den: f64, alpha: f64, delta: f64) -> Result<u64, BoundError> {
    if !(delta > 0.0) {
        return Err(BoundError::BadGap(delta));
    }
    if !(schedule.beta() > 2.0) {
        return Err(BoundError::BetaTooSmall(schedule.beta()));
    }
    let cap = phase_cap(schedule.beta(), alpha, delta, den);
    let limit = cap.floor() as u64 + 1;
    let mut prev = 0.0;
    for j in 1..=limit {
        let end = phase_end_f64(schedule, j)?;
        if good_phase_f64(end - prev, end, den, alpha, delta) {
            return Ok(j);
        }
        prev = end;
    }
    Err(BoundError::CapExceeded(cap))
}

// Exact below 1e12, plain ceil(j^beta) above, where u64 may overflow and
// one unit of rounding no longer matters.
fn phase_end_f64(schedule: &PhaseSchedule, j: u64) -> Result<f64, BoundError> {
    let approx = (j as f64).powf(schedule.beta());
    if approx < 1e12 {
        Ok(schedule.phase_end(j)? as f64)
    } else {
        Ok(approx.ceil())
    }
}

/// The defining inequality at one phase, given its length and end.
pub fn good_phase(len: u64, end: u64, den: f64, alpha: f64, delta: f64) -> bool {
    good_phase_f64(len as f64, end as f64, den, alpha, delta)
}

fn good_phase_f64(len: f64, end: f64, den: f64, alpha: f64, delta: f64) -> bool {
    len / den >= 1.0 + 4.0 * alpha / (delta * delta) * end.ln()
}

/// `2 + (1/beta + (1/beta + 8 alpha / delta^2) den)^(1/(beta-2))`.
pub fn phase_cap(beta: f64, alpha: f64, delta: f64, den: f64) -> f64 {
    let inner = 1.0 / beta + (1.0 / beta + 8.0 * alpha / (delta * delta)) * den;
    2.0 + inner.powf(1.0 / (beta - 2.0))
}

/// `tau_m*` for the context-unaware algorithm.
pub fn tau_m_star(schedule: &PhaseSchedule, s: usize, alpha: f64, delta: f64) -> Result<u64, BoundError> {
    first_good_phase(schedule, s as f64 + 2.0, alpha, delta)
}

/// `j_m*` for the partially aware algorithm.
pub fn j_m_star(schedule: &PhaseSchedule, s: usize, m: usize, r: usize, alpha: f64, delta: f64) -> Result<u64, BoundError> {
    if r == 0 {
        return Err(BoundError::BadPeerSize);
    }
    first_good_phase(schedule, (s + 2 + m.div_ceil(r)) as f64, alpha, delta)
}

/// `g = N (2^b + 1) 2^(b (a/2 - 3)) (S + 1) / (a/2 - 3) * C(K, 2)`.
pub fn g_unaware(n: usize, beta: f64, alpha: f64, s: usize, k: usize) -> f64 {
    let h = alpha / 2.0 - 3.0;
    n as f64 * (2f64.powf(beta) + 1.0) * 2f64.powf(beta * h) * (s as f64 + 1.0) / h * binomial(k, 2)
}

/// `g^ = N (3^b + 1) 3^(b (a/2 - 3)) (S + 1 + ceil(M/r)) / (a/2 - 3) * C(K, 2 + ceil(M/r))`.
pub fn g_aware(n: usize, beta: f64, alpha: f64, s: usize, k: usize, m: usize, r: usize) -> f64 {
    let h = alpha / 2.0 - 3.0;
    let w = m.div_ceil(r);
    n as f64 * (3f64.powf(beta) + 1.0) * 3f64.powf(beta * h) * (s + 1 + w) as f64 / h * binomial(k, 2 + w)
}

/// `(N/r) (ceil((3M)^b) + 2 (3 / ((c1/M - 1/N) r))^b M / (1 - c1/M)^r Gamma(b + 1))`.
pub fn g_rec(n: usize, m: usize, r: usize, beta: f64, c1: f64) -> Result<f64, BoundError> {
    if r == 0 {
        return Err(BoundError::BadPeerSize);
    }
    let (nf, mf, rf) = (n as f64, m as f64, r as f64);
    let ratio = c1 / mf;
    if !(ratio > 1.0 / nf) {
        return Err(BoundError::BalanceTooLow { ratio, inv_n: 1.0 / nf });
    }
    let head = (3.0 * mf).powf(beta).ceil();
    let tail = 2.0 * (3.0 / ((ratio - 1.0 / nf) * rf)).powf(beta) * mf / (1.0 - ratio).powi(r as i32) * gamma(beta + 1.0);
    Ok(nf / rf * (head + tail))
}

pub const G_SPR_NOTE: &str = "g_spr = O(M^(beta+1) ((log(N/M))^2 log(log(N/M)))^beta)";
pub const G_SPR_AWARE_NOTE: &str = "g^_spr = O(M^(beta+1) ((log(N/M))^2 log(log(N/M)))^beta)";

/// Multiplier for second-order terms: 1 inside `[0, 1]`, else the largest gap.
pub fn range_scale(inst: &BanditSet, m: usize) -> f64 {
    if inst.within_unit_interval() {
        1.0
    } else {
        inst.delta_max(m)
    }
}

fn sum_coef(inst: &BanditSet, m: usize, arms: impl IntoIterator<Item = usize>, alpha: f64) -> f64 {
    let best = inst.best_arm(m);
    arms.into_iter().filter(|&k| k != best).map(|k| 4.0 * alpha / inst.gap(m, k)).sum()
}

/// `tau* = 2 max{2, max_m tau_m*}`.
pub fn tau_star(inst: &BanditSet, p: &BoundParams) -> Result<u64, BoundError> {
    p.check()?;
    let schedule = PhaseSchedule::new(p.beta, p.horizon.max(1))?;
    let mut worst = 2;
    for m in 0..inst.num_bandits() {
        worst = worst.max(tau_m_star(&schedule, p.sticky_size, p.alpha, inst.delta_min(m))?);
    }
    Ok(2 * worst)
}

/// `j* = 3 max{2, max_m j_m*}`.
pub fn j_star(inst: &BanditSet, p: &BoundParams, r: usize) -> Result<u64, BoundError> {
    p.check()?;
    let schedule = PhaseSchedule::new(p.beta, p.horizon.max(1))?;
    let mut worst = 2;
    for m in 0..inst.num_bandits() {
        worst = worst.max(j_m_star(&schedule, p.sticky_size, inst.num_bandits(), r, p.alpha, inst.delta_min(m))?);
    }
    Ok(3 * worst)
}

/// `ceil(x^beta)` kept in floating point.
fn warmup(x: u64, beta: f64) -> f64 {
    (x as f64).powf(beta).ceil()
}

/// Upper bound on one agent's expected regret.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentBound {
    pub agent: usize,
    pub bandit: usize,
    /// Coefficient of `ln T`.
    pub log_coef: f64,
    /// `tau*` or `j*`.
    pub start_phase: u64,
    /// `ceil(start_phase^beta)`, scaled.
    pub warmup: f64,
    /// `g` or `g^`.
    pub g: f64,
    /// `(K + g) pi^2 / 3`, scaled.
    pub constant: f64,
    /// `g^_rec`, scaled (0 without peer blocks).
    pub rec: f64,
    /// Multiplier applied to the second-order terms.
    pub scale: f64,
    /// Numeric total at the horizon, without the spreading term.
    pub at_horizon: f64,
    pub note: &'static str,
}

/// Per-agent bound for the context-unaware algorithm.
pub fn per_agent_ub_unaware(
    inst: &BanditSet,
    assign: &Assignment,
    sticky: &[Vec<usize>],
    agent: usize,
    p: &BoundParams,
) -> Result<AgentBound, BoundError> {
    p.check()?;
    let m = assign.bandit_of(agent);
    let own = sticky.get(agent).ok_or(BoundError::MissingSticky(agent))?;
    let mut arms: Vec<usize> = own.iter().copied().chain(inst.best_set_excluding(m)).collect();
    arms.sort_unstable();
    arms.dedup();
    let log_coef = sum_coef(inst, m, arms, p.alpha);
    let start = tau_star(inst, p)?;
    let g = g_unaware(assign.num_agents(), p.beta, p.alpha, p.sticky_size, inst.num_arms());
    let scale = range_scale(inst, m);
    let w = scale * warmup(start, p.beta);
    let constant = scale * (inst.num_arms() as f64 + g) * PI * PI / 3.0;
    let at_horizon = w + constant + log_coef * (p.horizon as f64).ln();
    Ok(AgentBound { agent, bandit: m, log_coef, start_phase: start, warmup: w, g, constant, rec: 0.0, scale, at_horizon, note: G_SPR_NOTE })
}

/// The arms `k_{m,2}, ..., k_{m,ceil(M/r)+2}`: the next best arms after the
/// best one, in decreasing order of mean.
pub fn aware_extra_arms(inst: &BanditSet, m: usize, r: usize) -> Vec<usize> {
    let w = inst.num_bandits().div_ceil(r);
    inst.order_statistics(m).into_iter().skip(1).take(w + 1).collect()
}

/// Per-agent bound for the partially aware algorithm with blocks of size `r`.
pub fn per_agent_ub_aware(
    inst: &BanditSet,
    assign: &Assignment,
    sticky: &[Vec<usize>],
    agent: usize,
    r: usize,
    p: &BoundParams,
) -> Result<AgentBound, BoundError> {
    p.check()?;
    if r == 0 {
        return Err(BoundError::BadPeerSize);
    }
    let m = assign.bandit_of(agent);
    let own = sticky.get(agent).ok_or(BoundError::MissingSticky(agent))?;
    let log_coef = sum_coef(inst, m, own.iter().copied(), p.alpha) + sum_coef(inst, m, aware_extra_arms(inst, m, r), p.alpha);
    let start = j_star(inst, p, r)?;
    let n = assign.num_agents();
    let g = g_aware(n, p.beta, p.alpha, p.sticky_size, inst.num_arms(), inst.num_bandits(), r);
    let scale = range_scale(inst, m);
    let w = scale * warmup(start, p.beta);
    let constant = scale * (inst.num_arms() as f64 + g) * PI * PI / 3.0;
    let rec = scale * g_rec(n, inst.num_bandits(), r, p.beta, p.c1)?;
    let at_horizon = w + constant + rec + log_coef * (p.horizon as f64).ln();
    Ok(AgentBound { agent, bandit: m, log_coef, start_phase: start, warmup: w, g, constant, rec, scale, at_horizon, note: G_SPR_AWARE_NOTE })
}

/// Upper bound on expected group regret under partition sticky sets.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupBound {
    /// `sum_m sum_{k != k*} 4 alpha / gap`.
    pub first_coef: f64,
    /// `c2 N / M` times the per-bandit sums over other best arms (unaware)
    /// or the next-best order statistics (aware).
    pub second_coef: f64,
    pub start_phase: u64,
    /// Sum over agents of the scaled warm-up terms.
    pub warmup: f64,
    /// Sum over agents of the scaled `(K + g) pi^2 / 3` terms.
    pub constant: f64,
    /// Sum over agents of the scaled `g^_rec` terms.
    pub rec: f64,
    pub at_horizon: f64,
    pub note: &'static str,
}

impl GroupBound {
    pub fn log_coef(&self) -> f64 {
        self.first_coef + self.second_coef
    }
}

/// Group bound; `r = None` for the context-unaware algorithm.
pub fn group_ub(
    inst: &BanditSet,
    assign: &Assignment,
    sticky: &[Vec<usize>],
    r: Option<usize>,
    p: &BoundParams,
) -> Result<GroupBound, BoundError> {
    p.check()?;
    let k = inst.num_arms();
    if sticky.len() != assign.num_agents() || !is_partition(k, assign, sticky) {
        return Err(BoundError::NotPartition);
    }
    let mm = inst.num_bandits();
    let n = assign.num_agents();
    let first_coef: f64 = (0..mm).map(|m| sum_coef(inst, m, 0..k, p.alpha)).sum();
    let per_bandit: f64 = (0..mm)
        .map(|m| match r {
            None => sum_coef(inst, m, inst.best_set_excluding(m), p.alpha),
            Some(r) => sum_coef(inst, m, aware_extra_arms(inst, m, r), p.alpha),
        })
        .sum();
    let second_coef = p.c2 * n as f64 / mm as f64 * per_bandit;

    let (start, g, rec_one, note) = match r {
        None => (tau_star(inst, p)?, g_unaware(n, p.beta, p.alpha, p.sticky_size, k), 0.0, G_SPR_NOTE),
        Some(r) => {
            if r == 0 {
                return Err(BoundError::BadPeerSize);
            }
            (
                j_star(inst, p, r)?,
                g_aware(n, p.beta, p.alpha, p.sticky_size, k, mm, r),
                g_rec(n, mm, r, p.beta, p.c1)?,
                G_SPR_AWARE_NOTE,
            )
        }
    };
    let weight: f64 = (0..mm).map(|m| assign.group_size(m) as f64 * range_scale(inst, m)).sum();
    let warm = weight * warmup(start, p.beta);
    let constant = weight * (k as f64 + g) * PI * PI / 3.0;
    let rec = weight * rec_one;
    let at_horizon = warm + constant + rec + (first_coef + second_coef) * (p.horizon as f64).ln();
    Ok(GroupBound { first_coef, second_coef, start_phase: start, warmup: warm, constant, rec, at_horizon, note })
}

/// Coefficient of `ln T` in the group lower bound: `sum_m sum_{k != k*} 2 / gap`.
pub fn lower_bound_group(inst: &BanditSet) -> Result<f64, BoundError> {
    let mut total = 0.0;
    for m in 0..inst.num_bandits() {
        let best = inst.best_arm(m);
        for k in 0..inst.num_arms() {
            if k == best {
                continue;
            }
            let gap = inst.gap(m, k);
            if !(gap > 0.0) {
                return Err(BoundError::ZeroGap(m));
            }
            total += 2.0 / gap;
        }
    }
    Ok(total)
}

/// Checks that each bandit's best arm has the same mean in the next bandit
/// and differs from the next bandit's best arm.
pub fn check_chained(inst: &BanditSet) -> Result<(), BoundError> {
    for m in 0..inst.num_bandits().saturating_sub(1) {
        let b = inst.best_arm(m);
        if inst.mean(m, b) != inst.mean(m + 1, b) {
            return Err(BoundError::NotChained(format!("mean of arm {b} differs between bandits {m} and {}", m + 1)));
        }
        if b == inst.best_arm(m + 1) {
            return Err(BoundError::NotChained(format!("bandits {m} and {} share best arm {b}", m + 1)));
        }
    }
    Ok(())
}

/// The example family `mu_{m,k} = ((m - 1) + 1(m = k)) / M` with one-based
/// `m` and `k`, here for `m` bandits and `k >= m` arms.
pub fn chained_family(m: usize, k: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|b| (0..k).map(|a| (b as f64 + if a == b { 1.0 } else { 0.0 }) / m as f64).collect())
        .collect()
}

/// Context-unaware lower bound constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainedLowerBound {
    /// `2 sum_{m < M} |I_m| Delta_m`.
    pub value: f64,
    /// `N Delta` with `Delta` the smallest minimum gap.
    pub floor: f64,
}

pub fn lower_bound_unaware(inst: &BanditSet, assign: &Assignment) -> Result<ChainedLowerBound, BoundError> {
    check_chained(inst)?;
    let mm = inst.num_bandits();
    let value = 2.0 * (0..mm.saturating_sub(1)).map(|m| assign.group_size(m) as f64 * inst.delta_min(m)).sum::<f64>();
    let delta = (0..mm).map(|m| inst.delta_min(m)).fold(f64::INFINITY, f64::min);
    Ok(ChainedLowerBound { value, floor: assign.num_agents() as f64 * delta })
}
