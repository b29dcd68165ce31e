//! Collision-sensing protocol for the static model.
//!
//! Players first grab distinct arms through a musical-chairs procedure,
//! estimate how many players there are by a deterministic collision
//! schedule, and then alternate exploration phases with communication
//! phases. During communication every player sends its quantized per-arm
//! statistics to every other player, one bit per round, by either colliding
//! with the receiver (bit 1) or staying on its own arm (bit 0). All players
//! therefore share the same statistics and take identical accept/reject
//! decisions, shrinking the set of active arms until everyone has fixed on
//! an accepted arm.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::arena::{Observation, PhaseTag, Policy};

/// Which confidence radius to run with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SicVariant {
    /// Bounded rewards in `[0, 1]`: radius `3 * sqrt(ln T / (2 s))`.
    General,
    /// Bernoulli rewards: tighter radius `sqrt(2 ln T / s)` and integer
    /// statistics, so quantization is exact.
    Bernoulli,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SicConfig {
    pub horizon: u64,
    pub variant: SicVariant,
}

/// Unbiased randomized rounding of `s` to an integer in `[0, 2^(p+1) - 1]`:
/// `floor(s) + 1` with probability `frac(s)`, else `floor(s)`.
pub fn quantize(s: f64, p: u32, rng: &mut dyn RngCore) -> u64 {
    debug_assert!(s >= 0.0);
    let f = s.floor();
    let q = f as u64 + u64::from(rng.random::<f64>() < s - f);
    q.min((1u64 << (p + 1)) - 1)
}

/// Accept/reject decision over the active arms.
///
/// Position `a` is accepted when it dominates at least `k_p - m_p` other
/// active arms (its lower confidence bound clears their upper bound), and
/// rejected when at least `m_p` active arms dominate it. Both sets are
/// returned in increasing position order.
pub fn accept_reject(mu: &[f64], radius: &[f64], m_p: usize) -> (Vec<usize>, Vec<usize>) {
    let k_p = mu.len();
    let mut acc = Vec::new();
    let mut rej = Vec::new();
    for a in 0..k_p {
        let dominated = (0..k_p)
            .filter(|&i| i != a && mu[a] - radius[a] >= mu[i] + radius[i])
            .count();
        if dominated + m_p >= k_p {
            acc.push(a);
        }
        let dominators =
            (0..k_p).filter(|&i| i != a && mu[i] - radius[i] >= mu[a] + radius[a]).count();
        if dominators >= m_p {
            rej.push(a);
        }
    }
    (acc, rej)
}

#[derive(Clone, Debug)]
enum State {
    InitMc { remaining: u64 },
    EstimM { step: u64 },
    Explore { remaining: u64, pos: usize },
    Communicate { slot: CommSlot },
    Exploit,
}

/// Cursor over the communication schedule: sender `i`, receiver `l`, arm
/// position `k` (all 1-based), bit `n`; lexicographic in `(i, l, k)`, bits
/// least significant first.
#[derive(Clone, Debug)]
struct CommSlot {
    i: usize,
    l: usize,
    k: usize,
    n: u32,
    recv: u64,
}

impl CommSlot {
    fn first(m_p: usize) -> Option<Self> {
        if m_p < 2 {
            return None;
        }
        Some(CommSlot { i: 1, l: 2, k: 1, n: 0, recv: 0 })
    }

    /// Advances past a finished slot; `None` when the schedule is done.
    fn next_slot(&self, m_p: usize, k_p: usize) -> Option<Self> {
        let mut s = CommSlot { n: 0, recv: 0, ..*self };
        s.k += 1;
        if s.k <= k_p {
            return Some(s);
        }
        s.k = 1;
        s.l += 1;
        if s.l == s.i {
            s.l += 1;
        }
        if s.l <= m_p {
            return Some(s);
        }
        s.i += 1;
        s.l = if s.i == 1 { 2 } else { 1 };
        if s.i <= m_p {
            Some(s)
        } else {
            None
        }
    }
}

/// Comparable snapshot of the protocol state shared between players.
#[derive(Clone, Debug, PartialEq)]
pub struct SicSnapshot {
    pub p: u32,
    pub m_p: usize,
    pub active: Vec<usize>,
    pub shared_s: Vec<Vec<f64>>,
    pub tvec: Vec<f64>,
}

pub struct SicPolicy {
    cfg: SicConfig,
    k: usize,
    ln_t: f64,
    state: State,
    /// Arm occupied after musical chairs, if any.
    seat: Option<usize>,
    /// External rank: 1-based index of the occupied arm.
    ext_rank: usize,
    /// Internal rank `j` within the active players, 1-based.
    rank: usize,
    m_init: usize,
    m_p: usize,
    p: u32,
    active: Vec<usize>,
    /// Quantized per-player statistics; rows of players that already left
    /// stay frozen at their last communicated values.
    shared_s: Vec<Vec<f64>>,
    /// Shared pull counts per arm across all active players.
    tvec: Vec<f64>,
    /// Own raw reward sums of the current exploration phase.
    phase_s: Vec<f64>,
    /// Quantized phase statistics per active position, fixed when the
    /// communication phase starts and sent identically to every receiver.
    send_vals: Vec<u64>,
    failed: bool,
    last_arm: usize,
}

impl SicPolicy {
    pub fn new(cfg: SicConfig, arms: usize) -> Self {
        assert!(arms > 0);
        let ln_t = (cfg.horizon as f64).ln();
        let t0 = (arms as f64 * ln_t).ceil() as u64;
        Self {
            cfg,
            k: arms,
            ln_t,
            state: State::InitMc { remaining: t0.max(1) },
            seat: None,
            ext_rank: 1,
            rank: 1,
            m_init: 1,
            m_p: 1,
            p: 0,
            active: (0..arms).collect(),
            shared_s: Vec::new(),
            tvec: vec![0.0; arms],
            phase_s: vec![0.0; arms],
            send_vals: Vec::new(),
            failed: false,
            last_arm: 0,
        }
    }

    /// Skips musical chairs and starts rank estimation from a known seat
    /// (1-based arm index). Used by tests and by orchestrations that
    /// already hold an orthogonal assignment.
    pub fn with_external_rank(cfg: SicConfig, arms: usize, ext_rank: usize) -> Self {
        assert!((1..=arms).contains(&ext_rank));
        let mut p = Self::new(cfg, arms);
        p.seat = Some(ext_rank - 1);
        p.ext_rank = ext_rank;
        p.state = State::EstimM { step: 0 };
        p
    }

    pub fn phase_index(&self) -> u32 {
        self.p
    }

    pub fn active_arms(&self) -> &[usize] {
        &self.active
    }

    pub fn num_players(&self) -> usize {
        self.m_p
    }

    pub fn internal_rank(&self) -> usize {
        self.rank
    }

    pub fn external_rank(&self) -> usize {
        self.ext_rank
    }

    pub fn snapshot(&self) -> SicSnapshot {
        SicSnapshot {
            p: self.p,
            m_p: self.m_p,
            active: self.active.clone(),
            shared_s: self.shared_s.clone(),
            tvec: self.tvec.clone(),
        }
    }

    fn radius(&self, t_k: f64) -> f64 {
        match self.cfg.variant {
            SicVariant::General => 3.0 * (self.ln_t / (2.0 * t_k)).sqrt(),
            SicVariant::Bernoulli => (2.0 * self.ln_t / t_k).sqrt(),
        }
    }

    fn own_pos(&self) -> usize {
        (self.rank - 1).min(self.active.len() - 1)
    }

    fn start_explore(&mut self) {
        self.phase_s.iter_mut().for_each(|s| *s = 0.0);
        let len = self.active.len() as u64 * (1u64 << self.p);
        self.state = State::Explore { remaining: len, pos: self.own_pos() };
    }

    /// Freezes this phase's outgoing statistics and books them into the
    /// player's own row of the shared table.
    fn start_communicate(&mut self, rng: &mut dyn RngCore) {
        self.send_vals = self
            .active
            .iter()
            .map(|&arm| quantize(self.phase_s[arm], self.p, rng))
            .collect();
        for (pos, &arm) in self.active.iter().enumerate() {
            self.shared_s[self.rank - 1][arm] += self.send_vals[pos] as f64;
        }
        match CommSlot::first(self.m_p) {
            Some(slot) => self.state = State::Communicate { slot },
            None => self.decide(),
        }
    }

    /// End-of-phase bookkeeping: update shared counts, accept and reject
    /// arms, then either fix or start the next exploration phase. Every
    /// player runs this on identical shared data, so all outcomes agree.
    fn decide(&mut self) {
        let pulls = (self.m_p as u64 * (1u64 << self.p)) as f64;
        for &arm in &self.active {
            self.tvec[arm] += pulls;
        }
        let mu: Vec<f64> = self
            .active
            .iter()
            .map(|&arm| self.shared_s.iter().map(|row| row[arm]).sum::<f64>() / self.tvec[arm])
            .collect();
        let rad: Vec<f64> = self.active.iter().map(|&arm| self.radius(self.tvec[arm])).collect();
        let (acc, rej) = accept_reject(&mu, &rad, self.m_p);

        if self.m_p + 1 > self.rank && self.m_p + 1 - self.rank <= acc.len() {
            // The (M_p - j + 1)-th accepted arm (in increasing arm order)
            // goes to the player of rank j.
            let arm = self.active[acc[self.m_p - self.rank]];
            self.last_arm = arm;
            self.state = State::Exploit;
            return;
        }

        let mut drop = vec![false; self.active.len()];
        for &a in acc.iter().chain(rej.iter()) {
            drop[a] = true;
        }
        let kept: Vec<usize> = self
            .active
            .iter()
            .zip(&drop)
            .filter(|(_, &d)| !d)
            .map(|(&arm, _)| arm)
            .collect();
        if !kept.is_empty() {
            self.active = kept;
        }
        self.m_p = (self.m_p - acc.len()).max(1);
        self.p += 1;
        self.start_explore();
    }

    fn finish_estimation(&mut self) {
        self.m_p = self.m_init.min(self.k);
        self.rank = self.rank.min(self.m_p);
        self.shared_s = vec![vec![0.0; self.k]; self.m_p];
        self.start_explore();
    }

    /// 1-based step number within the rank-estimation schedule.
    fn estim_arm(&self, step_1b: u64) -> usize {
        let k = self.k as u64;
        let r = self.ext_rank as u64;
        if step_1b <= 2 * r {
            self.ext_rank - 1
        } else {
            ((step_1b - r - 1) % k) as usize
        }
    }
}

impl Policy for SicPolicy {
    fn choose(&mut self, _personal_time: u64, rng: &mut dyn RngCore) -> usize {
        let arm = match &mut self.state {
            State::InitMc { .. } => match self.seat {
                Some(arm) => arm,
                None => rng.random_range(0..self.k),
            },
            State::EstimM { step } => {
                let s = *step + 1;
                self.estim_arm(s)
            }
            State::Explore { pos, .. } => {
                *pos = (*pos + 1) % self.active.len();
                self.active[*pos]
            }
            State::Communicate { slot } => {
                let me = self.rank;
                if slot.i == me {
                    let bit = (self.send_vals[slot.k - 1] >> slot.n) & 1;
                    if bit == 1 {
                        self.active[slot.l - 1]
                    } else {
                        self.active[(me - 1).min(self.active.len() - 1)]
                    }
                } else {
                    self.active[(me - 1).min(self.active.len() - 1)]
                }
            }
            State::Exploit => self.last_arm,
        };
        self.last_arm = arm;
        arm
    }

    fn observe(&mut self, obs: &Observation, rng: &mut dyn RngCore) {
        let collided = obs.collision.unwrap_or(false);
        match &mut self.state {
            State::InitMc { remaining } => {
                if self.seat.is_none() && !collided {
                    self.seat = Some(self.last_arm);
                }
                *remaining -= 1;
                if *remaining == 0 {
                    match self.seat {
                        Some(arm) => self.ext_rank = arm + 1,
                        None => {
                            // Initialization failed; keep playing from the
                            // last arm so the run completes, but flag it.
                            self.failed = true;
                            self.ext_rank = self.last_arm + 1;
                        }
                    }
                    self.state = State::EstimM { step: 0 };
                }
            }
            State::EstimM { step } => {
                *step += 1;
                if collided {
                    self.m_init += 1;
                    if *step <= 2 * self.ext_rank as u64 {
                        self.rank += 1;
                    }
                }
                if *step == 2 * self.k as u64 {
                    self.finish_estimation();
                }
            }
            State::Explore { remaining, .. } => {
                self.phase_s[self.last_arm] += obs.reward;
                *remaining -= 1;
                if *remaining == 0 {
                    self.start_communicate(rng);
                }
            }
            State::Communicate { slot } => {
                if slot.l == self.rank && collided {
                    slot.recv |= 1 << slot.n;
                }
                if slot.n < self.p {
                    slot.n += 1;
                    return;
                }
                // Slot complete: receivers book the decoded value.
                if slot.l == self.rank {
                    let arm = self.active[slot.k - 1];
                    self.shared_s[slot.i - 1][arm] += slot.recv as f64;
                }
                match slot.next_slot(self.m_p, self.active.len()) {
                    Some(next) => *slot = next,
                    None => self.decide(),
                }
            }
            State::Exploit => {}
        }
    }

    fn is_exploiting(&self) -> Option<usize> {
        match self.state {
            State::Exploit => Some(self.last_arm),
            _ => None,
        }
    }

    fn phase(&self) -> PhaseTag {
        match self.state {
            State::InitMc { .. } => PhaseTag::InitMc,
            State::EstimM { .. } => PhaseTag::EstimM,
            State::Explore { .. } => PhaseTag::Explore,
            State::Communicate { .. } => PhaseTag::Communicate,
            State::Exploit => PhaseTag::Exploit,
        }
    }

    fn init_failed(&self) -> bool {
        self.failed
    }
}
