//! Per-agent learning rules.
//!
//! Within a phase every agent runs UCB on its active set. At the phase end it
//! reports its most played arm, pulls one recommendation from a random contact
//! and rebuilds its active set. With peer blocks, the block additionally pools
//! the recommendations its members received and splits the most recent
//! distinct ones among the members.
//!
//! All argmax ties go to the smallest arm index.

use rand::Rng;
use thiserror::Error;

use crate::env::{BanditSet, NoiseModel};
use crate::events::EventSink;
use crate::gossip::BitLedger;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("arm {0} is not in the active set")]
    NotActive(usize),
    #[error("active set is empty")]
    EmptyActive,
    #[error("phase is not finished: {done} of {target} pulls made")]
    MidPhase { done: u64, target: u64 },
    #[error("position {pos} is outside 1..={r}")]
    BadPosition { pos: usize, r: usize },
    #[error("sorted recommendation list has {len} arms, more than M = {m}")]
    TooManyRecs { len: usize, m: usize },
}

/// One agent's learning state.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    sticky: Vec<usize>,
    active: Vec<usize>,
    counts: Vec<u64>,
    sums: Vec<f64>,
    phase_counts: Vec<u64>,
    index: Vec<f64>,
    explore: f64,
    phase_pulls: u64,
    phase_target: u64,
    regret: f64,
    grid_cursor: usize,
}

impl AgentState {
    /// Fresh state over `k` arms. `explore` is `alpha * ln(horizon)`.
    pub fn new(sticky: Vec<usize>, k: usize, alpha: f64, horizon: u64) -> Self {
        let mut sticky = sticky;
        sticky.sort_unstable();
        sticky.dedup();
        let explore = alpha * (horizon as f64).ln();
        Self {
            active: sticky.clone(),
            sticky,
            counts: vec![0; k],
            sums: vec![0.0; k],
            phase_counts: vec![0; k],
            index: vec![f64::INFINITY; k],
            explore,
            phase_pulls: 0,
            phase_target: 0,
            regret: 0.0,
            grid_cursor: 0,
        }
    }

    pub fn sticky(&self) -> &[usize] {
        &self.sticky
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    pub fn phase_counts(&self) -> &[u64] {
        &self.phase_counts
    }

    /// Cumulative pseudo-regret so far.
    pub fn regret(&self) -> f64 {
        self.regret
    }

    /// Empirical mean, 0 for an unplayed arm.
    pub fn empirical_mean(&self, k: usize) -> f64 {
        if self.counts[k] == 0 {
            0.0
        } else {
            self.sums[k] / self.counts[k] as f64
        }
    }

    /// UCB index of an active arm; `+inf` while the arm is unplayed.
    pub fn ucb_index(&self, k: usize) -> Result<f64, PolicyError> {
        if self.active.binary_search(&k).is_err() {
            return Err(PolicyError::NotActive(k));
        }
        Ok(self.index[k])
    }

    pub fn select_arm(&self) -> Result<usize, PolicyError> {
        if self.active.is_empty() {
            return Err(PolicyError::EmptyActive);
        }
        Ok(self.argmax_index())
    }

    #[inline]
    fn argmax_index(&self) -> usize {
        let mut best = self.active[0];
        let mut best_val = self.index[best];
        for &k in &self.active[1..] {
            let v = self.index[k];
            if v > best_val {
                best = k;
                best_val = v;
            }
        }
        best
    }

    /// Records one pull of arm `k` with the observed reward.
    #[inline]
    pub fn record(&mut self, k: usize, reward: f64) {
        self.counts[k] += 1;
        self.sums[k] += reward;
        self.phase_counts[k] += 1;
        self.phase_pulls += 1;
        let n = self.counts[k] as f64;
        self.index[k] = self.sums[k] / n + (self.explore / n).sqrt();
    }

    /// Starts a phase of `len` pulls.
    pub fn begin_phase(&mut self, len: u64) {
        self.phase_pulls = 0;
        self.phase_target = len;
    }

    pub fn phase_pulls(&self) -> u64 {
        self.phase_pulls
    }

    /// Most played active arm of the phase that just ended.
    pub fn most_played_this_phase(&self) -> Result<usize, PolicyError> {
        if self.phase_pulls == 0 || self.phase_pulls < self.phase_target {
            return Err(PolicyError::MidPhase { done: self.phase_pulls, target: self.phase_target });
        }
        let mut best = self.active[0];
        for &k in &self.active[1..] {
            if self.phase_counts[k] > self.phase_counts[best] {
                best = k;
            }
        }
        Ok(best)
    }

    fn reset_phase_counts(&mut self) {
        for &k in &self.active {
            self.phase_counts[k] = 0;
        }
        self.phase_pulls = 0;
        self.phase_target = 0;
    }

    /// Context-unaware update: active = sticky ∪ {own most played} ∪ {received}.
    pub fn update_active_unaware(&mut self, received: usize, most_played: usize) {
        self.reset_phase_counts();
        let mut next = self.sticky.clone();
        insert_sorted(&mut next, most_played);
        insert_sorted(&mut next, received);
        self.active = next;
    }

    /// Aware update for one agent, given the block-level decision.
    /// `pos` is the agent's 1-based rank within its block.
    pub fn update_active_aware(
        &mut self,
        received: usize,
        most_played: usize,
        block: &BlockUpdate,
        pos: usize,
        m: usize,
        r: usize,
    ) -> Result<(), PolicyError> {
        if !block.changed {
            self.reset_phase_counts();
            return Ok(());
        }
        let share = divide_rec(pos, &block.sortrec, m, r)?;
        self.reset_phase_counts();
        let mut next = self.sticky.clone();
        insert_sorted(&mut next, most_played);
        insert_sorted(&mut next, received);
        for a in share {
            insert_sorted(&mut next, a);
        }
        self.active = next;
        Ok(())
    }

    /// Replaces the active set (sticky arms are always kept).
    pub fn set_active(&mut self, arms: &[usize]) {
        self.reset_phase_counts();
        let mut next = self.sticky.clone();
        for &a in arms {
            insert_sorted(&mut next, a);
        }
        self.active = next;
    }

    /// Plays timesteps `first..=last` for an agent on bandit `bandit`.
    /// Pseudo-regret is accumulated; whenever `t` hits the next entry of
    /// `grid`, the agent's cumulative regret is added to `grid_acc`.
    #[allow(clippy::too_many_arguments)]
    pub fn play_phase<'s, R: Rng + ?Sized>(
        &mut self,
        instance: &BanditSet,
        bandit: usize,
        noise: NoiseModel,
        rng: &mut R,
        first: u64,
        last: u64,
        grid: &[u64],
        grid_acc: &mut [f64],
        mut log: Option<(&mut (dyn EventSink + 's), usize, u64)>,
    ) -> PhaseOutcome {
        self.begin_phase(last + 1 - first);
        let means = &instance.means()[bandit];
        let gaps = instance.gaps(bandit);
        let start_regret = self.regret;
        for t in first..=last {
            let k = self.argmax_index();
            let reward = means[k] + noise.sample(rng);
            self.record(k, reward);
            self.regret += gaps[k];
            while self.grid_cursor < grid.len() && grid[self.grid_cursor] == t {
                grid_acc[self.grid_cursor] += self.regret;
                self.grid_cursor += 1;
            }
            if let Some((sink, agent, phase)) = log.as_mut() {
                sink.pull(t, *agent, k, reward, *phase);
            }
        }
        PhaseOutcome { pulls: last + 1 - first, regret: self.regret - start_regret }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseOutcome {
    pub pulls: u64,
    pub regret: f64,
}

fn insert_sorted(v: &mut Vec<usize>, x: usize) {
    if let Err(pos) = v.binary_search(&x) {
        v.insert(pos, x);
    }
}

/// The recommendation an information pull returns: the contacted agent's most
/// played arm this phase. Charges one arm ID to the requester.
pub fn get_rec(
    requester: usize,
    contacted: &AgentState,
    ledger: &mut BitLedger,
    phase: u64,
) -> Result<usize, PolicyError> {
    let arm = contacted.most_played_this_phase()?;
    ledger.charge(requester, phase, 1);
    Ok(arm)
}

/// The `m` most recent distinct arms across the histories of a peer block.
///
/// `histories[p]` is the `(phase, arm)` list of the block member with rank
/// `p` (members ranked by ascending agent index). Entries are scanned from the
/// latest phase backwards; inside one phase, lower ranks come first. The
/// result is in scan order, most recent first.
pub fn uniquerec(histories: &[&[(u64, usize)]], m: usize) -> Vec<usize> {
    let mut entries: Vec<(u64, usize, usize)> = histories
        .iter()
        .enumerate()
        .flat_map(|(p, h)| h.iter().map(move |&(phase, arm)| (phase, p, arm)))
        .collect();
    entries.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<usize> = Vec::with_capacity(m);
    for (_, _, arm) in entries {
        if out.len() == m {
            break;
        }
        if !out.contains(&arm) {
            out.push(arm);
        }
    }
    out
}

/// The arms of `sortrec` assigned to the block member of rank `pos`.
///
/// With `L = sortrec.len()` and `w = ceil(L / r)`, rank `pos` receives the
/// cyclic window of positions `(pos-1)*w, ..., pos*w - 1` (mod `L`). When the
/// list is full (`L = M`) this is the `ceil(M/r)` window; shorter lists use
/// the proportionally smaller window.
pub fn divide_rec(pos: usize, sortrec: &[usize], m: usize, r: usize) -> Result<Vec<usize>, PolicyError> {
    if r == 0 || pos == 0 || pos > r {
        return Err(PolicyError::BadPosition { pos, r });
    }
    let len = sortrec.len();
    if len > m {
        return Err(PolicyError::TooManyRecs { len, m });
    }
    if len == 0 {
        return Ok(Vec::new());
    }
    let w = len.div_ceil(r);
    let mut out: Vec<usize> = (0..w).map(|s| sortrec[((pos - 1) * w + s) % len]).collect();
    out.dedup();
    Ok(out)
}

/// Outcome of the block-level end-of-phase step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockUpdate {
    /// The distinct recent arms differ (as a set) from the previous phase.
    pub changed: bool,
    /// Current distinct recent arms, ascending.
    pub sortrec: Vec<usize>,
}

/// Recommendation histories of one peer block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecs {
    members: Vec<usize>,
    histories: Vec<Vec<(u64, usize)>>,
    last_sorted: Vec<usize>,
    last_unique: Vec<usize>,
}

impl BlockRecs {
    /// `members` is sorted on construction; ranks follow that order.
    pub fn new(members: &[usize]) -> Self {
        let mut members = members.to_vec();
        members.sort_unstable();
        Self { histories: vec![Vec::new(); members.len()], members, last_sorted: Vec::new(), last_unique: Vec::new() }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    /// 1-based rank of `agent` in the block.
    pub fn position(&self, agent: usize) -> Option<usize> {
        self.members.binary_search(&agent).ok().map(|p| p + 1)
    }

    pub fn histories(&self) -> &[Vec<(u64, usize)>] {
        &self.histories
    }

    /// Most recent distinct arms at the last update, most recent first.
    pub fn last_unique(&self) -> &[usize] {
        &self.last_unique
    }

    /// Appends this phase's recommendations (`received[p]` for rank `p`) and
    /// recomputes the distinct recent set.
    pub fn end_phase(&mut self, phase: u64, received: &[usize], m: usize) -> BlockUpdate {
        debug_assert_eq!(received.len(), self.members.len());
        for (h, &arm) in self.histories.iter_mut().zip(received) {
            h.push((phase, arm));
        }
        let views: Vec<&[(u64, usize)]> = self.histories.iter().map(Vec::as_slice).collect();
        let unique = uniquerec(&views, m);
        let mut sorted = unique.clone();
        sorted.sort_unstable();
        let changed = sorted != self.last_sorted;
        self.last_unique = unique;
        self.last_sorted = sorted.clone();
        BlockUpdate { changed, sortrec: sorted }
    }
}

/// One UCB table shared by all members of a bandit (full-communication
/// baseline). All members choose from the table as it stood at the start of
/// the timestep; their samples are then folded in one by one.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedUcb {
    counts: Vec<u64>,
    sums: Vec<f64>,
    index: Vec<f64>,
    explore: f64,
}

impl SharedUcb {
    pub fn new(k: usize, alpha: f64, horizon: u64) -> Self {
        Self {
            counts: vec![0; k],
            sums: vec![0.0; k],
            index: vec![f64::INFINITY; k],
            explore: alpha * (horizon as f64).ln(),
        }
    }

    #[inline]
    pub fn select(&self) -> usize {
        let mut best = 0;
        for k in 1..self.index.len() {
            if self.index[k] > self.index[best] {
                best = k;
            }
        }
        best
    }

    #[inline]
    pub fn record(&mut self, k: usize, reward: f64) {
        self.counts[k] += 1;
        self.sums[k] += reward;
        let n = self.counts[k] as f64;
        self.index[k] = self.sums[k] / n + (self.explore / n).sqrt();
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::BanditSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state_with(active: &[usize], k: usize, alpha: f64, horizon: u64) -> AgentState {
        AgentState::new(active.to_vec(), k, alpha, horizon)
    }

    #[test]
    fn unplayed_arm_is_infinite() {
        let s = state_with(&[0, 1], 2, 15.0, 100);
        assert_eq!(s.ucb_index(0).unwrap(), f64::INFINITY);
        assert_eq!(s.ucb_index(5), Err(PolicyError::NotActive(5)));
    }

    #[test]
    fn index_value_matches_hand_arithmetic() {
        // counts 4, sum 2.0, alpha 15, ln T = 1: 0.5 + sqrt(15/4) = 2.436492...
        let mut s = AgentState::new(vec![0], 1, 15.0, 1);
        s.explore = 15.0;
        for _ in 0..4 {
            s.record(0, 0.5);
        }
        let v = s.ucb_index(0).unwrap();
        assert!((v - 2.436_492).abs() < 1e-6, "{v}");
    }

    #[test]
    fn index_grows_with_mean_at_equal_counts() {
        let mut s = state_with(&[0, 1], 2, 15.0, 10_000);
        for _ in 0..10 {
            s.record(0, 0.9);
            s.record(1, 0.5);
        }
        assert!(s.ucb_index(0).unwrap() > s.ucb_index(1).unwrap());
    }

    #[test]
    fn fresh_state_picks_lowest_arm() {
        let s = state_with(&[3, 7, 9], 10, 15.0, 100);
        assert_eq!(s.select_arm().unwrap(), 3);
        let s = state_with(&[4], 10, 15.0, 100);
        assert_eq!(s.select_arm().unwrap(), 4);
        let s = state_with(&[], 10, 15.0, 100);
        assert_eq!(s.select_arm(), Err(PolicyError::EmptyActive));
    }

    #[test]
    fn select_prefers_higher_index() {
        // Both arms pulled 100 times; the bonus is equal so the mean decides.
        let mut s = state_with(&[0, 1], 2, 15.0, 10_000);
        for _ in 0..100 {
            s.record(0, 0.2);
            s.record(1, 0.8);
        }
        assert_eq!(s.select_arm().unwrap(), 1);
    }

    #[test]
    fn most_played_and_ties() {
        let mut s = state_with(&[2, 7], 10, 15.0, 100);
        s.begin_phase(8);
        for _ in 0..5 {
            s.record(2, 0.0);
        }
        for _ in 0..3 {
            s.record(7, 0.0);
        }
        assert_eq!(s.most_played_this_phase().unwrap(), 2);

        let mut s = state_with(&[2, 7], 10, 15.0, 100);
        s.begin_phase(8);
        for _ in 0..4 {
            s.record(7, 0.0);
            s.record(2, 0.0);
        }
        assert_eq!(s.most_played_this_phase().unwrap(), 2);
    }

    #[test]
    fn most_played_refuses_mid_phase() {
        let mut s = state_with(&[2, 7], 10, 15.0, 100);
        s.begin_phase(8);
        s.record(2, 0.0);
        assert_eq!(s.most_played_this_phase(), Err(PolicyError::MidPhase { done: 1, target: 8 }));
    }

    #[test]
    fn zero_noise_phase_recommends_best() {
        let inst = BanditSet::from_means(vec![vec![0.9, 0.5]]).unwrap();
        let mut s = state_with(&[0, 1], 2, 15.0, 10_000);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut acc = [];
        s.play_phase(&inst, 0, NoiseModel::Zero, &mut rng, 1, 5000, &[], &mut acc, None);
        assert_eq!(s.most_played_this_phase().unwrap(), 0);
    }

    #[test]
    fn unaware_update_is_a_union() {
        let mut s = state_with(&[1, 2], 10, 15.0, 100);
        s.update_active_unaware(9, 2);
        assert_eq!(s.active(), &[1, 2, 9]);
        s.update_active_unaware(2, 2);
        assert_eq!(s.active(), &[1, 2]);
        s.update_active_unaware(9, 5);
        assert_eq!(s.active(), &[1, 2, 5, 9]);
    }

    #[test]
    fn get_rec_passes_through_and_charges() {
        let mut contacted = state_with(&[5, 6], 20, 15.0, 100);
        contacted.begin_phase(3);
        for _ in 0..3 {
            contacted.record(5, 1.0);
        }
        let mut ledger = BitLedger::new(2, 20, 1);
        assert_eq!(get_rec(0, &contacted, &mut ledger, 1).unwrap(), 5);
        assert_eq!(ledger.used(0, 1), 5);
        assert!(ledger.violations().is_empty());
    }

    #[test]
    fn uniquerec_examples() {
        let (a, b) = (4, 9);
        let h: Vec<(u64, usize)> = vec![(1, a), (2, b), (3, a)];
        assert_eq!(uniquerec(&[&h], 2), vec![a, b]);

        let (x, y) = (1, 2);
        let h1: Vec<(u64, usize)> = vec![(3, x), (4, x)];
        let h2: Vec<(u64, usize)> = vec![(4, y)];
        assert_eq!(uniquerec(&[&h1, &h2], 3), vec![x, y]);
    }

    #[test]
    fn divide_rec_examples() {
        let sortrec = [10, 11, 12, 13, 14, 15];
        assert_eq!(divide_rec(2, &sortrec, 6, 3).unwrap(), vec![12, 13]);
        assert_eq!(divide_rec(1, &sortrec, 6, 3).unwrap(), vec![10, 11]);
        assert_eq!(divide_rec(3, &sortrec, 6, 3).unwrap(), vec![14, 15]);

        let sortrec = [0, 1, 2, 3, 4];
        assert_eq!(divide_rec(1, &sortrec, 5, 3).unwrap(), vec![0, 1]);
        assert_eq!(divide_rec(2, &sortrec, 5, 3).unwrap(), vec![2, 3]);
        assert_eq!(divide_rec(3, &sortrec, 5, 3).unwrap(), vec![4, 0]);

        assert!(divide_rec(0, &sortrec, 5, 3).is_err());
        assert!(divide_rec(4, &sortrec, 5, 3).is_err());
        assert!(divide_rec(1, &sortrec, 4, 3).is_err());
    }

    #[test]
    fn divide_rec_short_list() {
        // L = 3 < M = 6 with r = 2: window ceil(3/2) = 2 over the short list.
        let sortrec = [3, 5, 8];
        assert_eq!(divide_rec(1, &sortrec, 6, 2).unwrap(), vec![3, 5]);
        assert_eq!(divide_rec(2, &sortrec, 6, 2).unwrap(), vec![8, 3]);
        assert!(divide_rec(1, &[], 6, 2).unwrap().is_empty());
    }

    #[test]
    fn block_freezes_when_set_repeats() {
        let mut b = BlockRecs::new(&[7, 3]);
        assert_eq!(b.position(3), Some(1));
        assert_eq!(b.position(7), Some(2));
        let u1 = b.end_phase(1, &[1, 2], 2);
        assert!(u1.changed);
        assert_eq!(u1.sortrec, vec![1, 2]);
        let u2 = b.end_phase(2, &[2, 1], 2);
        assert!(!u2.changed);
        let u3 = b.end_phase(3, &[4, 4], 2);
        assert!(u3.changed);
        assert_eq!(u3.sortrec, vec![2, 4]);
    }

    #[test]
    fn aware_update_freeze_branch_keeps_active() {
        let mut s = state_with(&[0, 1], 10, 15.0, 100);
        s.set_active(&[6]);
        let frozen = BlockUpdate { changed: false, sortrec: vec![2, 3] };
        s.update_active_aware(8, 0, &frozen, 1, 2, 2).unwrap();
        assert_eq!(s.active(), &[0, 1, 6]);
        let fresh = BlockUpdate { changed: true, sortrec: vec![2, 3] };
        s.update_active_aware(8, 0, &fresh, 2, 2, 2).unwrap();
        assert_eq!(s.active(), &[0, 1, 3, 8]);
    }

    #[test]
    fn shared_table_counts_every_member() {
        let inst = BanditSet::from_means(vec![vec![0.9, 0.5, 0.2]]).unwrap();
        let mut table = SharedUcb::new(3, 15.0, 1000);
        let members = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for t in 1..=50u64 {
            let k = table.select();
            for _ in 0..members {
                let r = inst.mean(0, k) + NoiseModel::Gaussian.sample(&mut rng);
                table.record(k, r);
            }
            assert_eq!(table.total_count(), members * t);
        }
    }
}
