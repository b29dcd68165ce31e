//! No-sensing protocol for the static model.
//!
//! The collision-sensing machinery survives with two changes. First, every
//! synchronization primitive is stretched into blocks of pulls long enough
//! that "no positive reward in the whole block" certifies a collision
//! rather than bad luck. Second, players no longer exchange statistics:
//! each keeps its own counts, and communication only serves to declare
//! decisions. A player declares a rejected arm by sitting on it half the
//! time for one block, which measurably depresses the arm's empirical
//! reward for everyone else; a player accepting an arm just fixes there,
//! which zeroes the arm out entirely. Receivers compare each block's
//! per-arm mean against their running mean to detect both kinds of signal,
//! and the final (quiet) block separates them: a fully silent declared arm
//! is occupied by a fixed player, a half-depressed one was a rejection.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::arena::{Observation, PhaseTag, Policy};
use crate::sic_mmab::accept_reject;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Sic2Config {
    pub horizon: u64,
    /// Known lower bound on all arm means; calibrates every block length.
    pub mu_min: f64,
    /// Multiplier in the exploration block length `T0 = ceil(scale * ln T /
    /// mu_min)`. The analyzed value is 2400; small horizons need smaller
    /// blocks to finish even one phase, at the cost of the guarantee's
    /// slack.
    pub block_scale: f64,
}

impl Sic2Config {
    pub fn new(horizon: u64, mu_min: f64) -> Self {
        Self { horizon, mu_min, block_scale: 2400.0 }
    }
}

/// Block-mean signal detector: arm declared when the block's empirical
/// mean drifts from the running mean by at least a quarter of it.
pub fn signal_detected(hist_mean: f64, block_mean: f64) -> bool {
    (hist_mean - block_mean).abs() >= hist_mean / 4.0
}

/// Probability with which a declaring player pulls the declared arm at
/// each step of its declare block.
const LAMBDA_D: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Role {
    /// Sits on the declared arm half the time.
    Declarer(usize),
    /// Hops, waiting for a positive reward on an accepted arm to fix.
    Fixer,
    Listener,
}

#[derive(Clone, Debug)]
struct CommState {
    role: Role,
    step: u64,
    /// Block length, fixed when the block opens.
    len: u64,
    /// Per-arm statistics of the current block, hop pulls only.
    s_blk: Vec<f64>,
    t_blk: Vec<u64>,
}

#[derive(Clone, Debug)]
enum State {
    InitMc { remaining: u64 },
    EstimM { slot: usize, step: u64, slot_sum: f64 },
    /// Re-orthogonalization after arms were removed.
    ReorthMc { remaining: u64 },
    Explore { remaining: u64 },
    Comm(CommState),
    Exploit,
}

pub struct Sic2Policy {
    cfg: Sic2Config,
    k: usize,
    ln_t: f64,
    /// Collision-certification block: `ceil(ln T / mu_min)` pulls.
    t_c: u64,
    /// Exploration block: `ceil(block_scale * ln T / mu_min)` pulls.
    t_0: u64,
    state: State,
    seat: Option<usize>,
    /// Hop cursor, a position in `active`.
    pos: usize,
    active: Vec<usize>,
    m_p: usize,
    p: u32,
    /// Own reward sums and pull counts per arm, exploration pulls only.
    s: Vec<f64>,
    t: Vec<u64>,
    /// Own decisions for the current communication phase.
    acc: Vec<usize>,
    rej: Vec<usize>,
    decl: Vec<bool>,
    failed: bool,
    last_arm: usize,
    /// Whether the last pull was a hop pull (counts toward block stats).
    last_was_hop: bool,
}

impl Sic2Policy {
    pub fn new(cfg: Sic2Config, arms: usize) -> Self {
        assert!(arms > 0 && cfg.mu_min > 0.0 && cfg.mu_min <= 1.0);
        let ln_t = (cfg.horizon as f64).ln();
        let t_c = (ln_t / cfg.mu_min).ceil().max(1.0) as u64;
        let t_0 = (cfg.block_scale * ln_t / cfg.mu_min).ceil().max(1.0) as u64;
        Self {
            cfg,
            k: arms,
            ln_t,
            t_c,
            t_0,
            state: State::InitMc { remaining: arms as u64 * t_c },
            seat: None,
            pos: 0,
            active: (0..arms).collect(),
            m_p: 1,
            p: 0,
            s: vec![0.0; arms],
            t: vec![0; arms],
            acc: Vec::new(),
            rej: Vec::new(),
            decl: vec![false; arms],
            failed: false,
            last_arm: 0,
            last_was_hop: true,
        }
    }

    pub fn config(&self) -> &Sic2Config {
        &self.cfg
    }

    pub fn num_players(&self) -> usize {
        self.m_p
    }

    pub fn active_arms(&self) -> &[usize] {
        &self.active
    }

    pub fn phase_index(&self) -> u32 {
        self.p
    }

    pub fn exploration_block(&self) -> u64 {
        self.t_0
    }

    /// Reception/declare block length for the current phase.
    fn t_d(&self) -> u64 {
        self.active.len() as u64 * self.t_0
    }

    /// 0-based arm pulled in 1-based slot `n` of the player-count
    /// estimation schedule, for a player seated on 1-based arm `k`. Seated
    /// until slot `2k - 1`, then hopping; two seats `k < k'` meet exactly
    /// in slot `k + k' - 1`.
    fn estim_arm(&self, seat_1b: usize, slot_1b: usize) -> usize {
        if slot_1b < 2 * seat_1b {
            seat_1b - 1
        } else {
            (slot_1b - seat_1b) % self.k
        }
    }

    fn hop(&mut self) -> usize {
        let arm = self.active[self.pos];
        self.pos = (self.pos + 1) % self.active.len();
        arm
    }

    fn start_explore(&mut self, remaining: u64) {
        self.state = State::Explore { remaining };
    }

    fn start_comm(&mut self) {
        let mu: Vec<f64> = self.active.iter().map(|&a| self.s[a] / self.t[a] as f64).collect();
        let rad: Vec<f64> =
            self.active.iter().map(|&a| (2.0 * self.ln_t / self.t[a] as f64).sqrt()).collect();
        let (acc_pos, rej_pos) = accept_reject(&mu, &rad, self.m_p);
        self.acc = acc_pos.iter().map(|&i| self.active[i]).collect();
        self.rej = rej_pos.iter().map(|&i| self.active[i]).collect();
        self.decl = vec![false; self.k];
        self.state = State::Comm(self.new_block());
    }

    fn new_block(&self) -> CommState {
        let role = if let Some(&arm) = self.rej.iter().find(|&&a| !self.decl[a]) {
            Role::Declarer(arm)
        } else if self.acc.iter().any(|&a| !self.decl[a]) {
            Role::Fixer
        } else {
            Role::Listener
        };
        CommState {
            role,
            step: 0,
            len: self.t_d(),
            s_blk: vec![0.0; self.k],
            t_blk: vec![0; self.k],
        }
    }

    /// End of a communication block: fold the signals into the declared
    /// set and either open the next block or close the phase.
    fn finish_block(&mut self) {
        let State::Comm(blk) = std::mem::replace(&mut self.state, State::Exploit) else {
            unreachable!()
        };
        let mut signaled = Vec::new();
        for &a in &self.active {
            if self.decl[a] || blk.t_blk[a] == 0 || self.s[a] <= 0.0 {
                continue;
            }
            let hist = self.s[a] / self.t[a] as f64;
            if signal_detected(hist, blk.s_blk[a] / blk.t_blk[a] as f64) {
                signaled.push(a);
            }
        }
        let declared_own = matches!(blk.role, Role::Declarer(_));
        if let Role::Declarer(arm) = blk.role {
            self.decl[arm] = true;
        }
        for &a in &signaled {
            self.decl[a] = true;
        }

        if signaled.is_empty() && !declared_own {
            // Quiet block: the phase is over. Fixed players show as fully
            // silent declared arms and leave with their arm; half-silent
            // declared arms were rejections.
            let fixed_count = self
                .active
                .iter()
                .filter(|&&a| self.decl[a] && blk.t_blk[a] > 0 && blk.s_blk[a] == 0.0)
                .count();
            self.m_p = self.m_p.saturating_sub(fixed_count).max(1);
            let any_decl = self.active.iter().any(|&a| self.decl[a]);
            self.active.retain(|&a| !self.decl[a]);
            self.p += 1;
            let explore_len = self.active.len() as u64 * (1u64 << self.p) * self.t_0;
            if any_decl {
                self.seat = None;
                self.state = State::ReorthMc { remaining: self.active.len() as u64 * self.t_c };
            } else {
                // Nothing happened, so the quiet block doubles as clean
                // exploration: keep its samples and shorten the next
                // exploration phase accordingly.
                let folded: u64 = self.active.iter().map(|&a| blk.t_blk[a]).sum();
                for &a in &self.active {
                    self.s[a] += blk.s_blk[a];
                    self.t[a] += blk.t_blk[a];
                }
                self.start_explore(explore_len.saturating_sub(folded).max(1));
            }
        } else {
            self.state = State::Comm(self.new_block());
        }
    }
}

impl Policy for Sic2Policy {
    fn choose(&mut self, _personal_time: u64, rng: &mut dyn RngCore) -> usize {
        enum Act {
            Fixed(usize),
            McRandom,
            Hop,
            CommHop(Option<usize>),
        }
        let act = match &self.state {
            State::InitMc { .. } | State::ReorthMc { .. } => match self.seat {
                Some(arm) => Act::Fixed(arm),
                None => Act::McRandom,
            },
            State::EstimM { slot, .. } => {
                let seat = self.seat.unwrap_or(self.last_arm) + 1;
                Act::Fixed(self.estim_arm(seat, *slot))
            }
            State::Explore { .. } => Act::Hop,
            State::Comm(blk) => Act::CommHop(match blk.role {
                Role::Declarer(k) => Some(k),
                _ => None,
            }),
            State::Exploit => Act::Fixed(self.last_arm),
        };
        let arm = match act {
            Act::Fixed(arm) => arm,
            Act::McRandom => self.active[rng.random_range(0..self.active.len())],
            Act::Hop => self.hop(),
            Act::CommHop(declared) => {
                let cursor = self.hop();
                if let Some(k) = declared {
                    if rng.random::<f64>() < LAMBDA_D {
                        self.last_was_hop = false;
                        self.last_arm = k;
                        return k;
                    }
                }
                cursor
            }
        };
        self.last_was_hop = true;
        self.last_arm = arm;
        arm
    }

    fn observe(&mut self, obs: &Observation, _rng: &mut dyn RngCore) {
        match &mut self.state {
            State::InitMc { remaining } => {
                if self.seat.is_none() && obs.reward > 0.0 {
                    self.seat = Some(self.last_arm);
                }
                *remaining -= 1;
                if *remaining == 0 {
                    if self.seat.is_none() {
                        self.failed = true;
                        self.seat = Some(self.last_arm);
                    }
                    self.state = State::EstimM { slot: 1, step: 0, slot_sum: 0.0 };
                }
            }
            State::EstimM { slot, step, slot_sum } => {
                *slot_sum += obs.reward;
                *step += 1;
                if *step == self.t_c {
                    if *slot_sum == 0.0 {
                        self.m_p += 1;
                    }
                    *slot += 1;
                    *step = 0;
                    *slot_sum = 0.0;
                    if *slot > 2 * self.k {
                        self.m_p = self.m_p.min(self.k);
                        // The schedule parks seat k on arm (1 - k) mod K;
                        // exploration hops on from there.
                        let here = self.last_arm;
                        self.pos = self.active.iter().position(|&a| a == here).unwrap_or(0);
                        let len = self.active.len() as u64 * self.t_0;
                        self.start_explore(len);
                    }
                }
            }
            State::ReorthMc { remaining } => {
                if self.seat.is_none() && obs.reward > 0.0 {
                    self.seat = Some(self.last_arm);
                }
                *remaining -= 1;
                if *remaining == 0 {
                    if self.seat.is_none() {
                        self.failed = true;
                        self.seat = Some(self.last_arm);
                    }
                    let here = self.seat.unwrap();
                    self.pos = self.active.iter().position(|&a| a == here).unwrap_or(0);
                    let len = self.active.len() as u64 * (1u64 << self.p) * self.t_0;
                    self.start_explore(len);
                }
            }
            State::Explore { remaining } => {
                self.s[self.last_arm] += obs.reward;
                self.t[self.last_arm] += 1;
                *remaining -= 1;
                if *remaining == 0 {
                    self.start_comm();
                }
            }
            State::Comm(blk) => {
                if self.last_was_hop {
                    blk.s_blk[self.last_arm] += obs.reward;
                    blk.t_blk[self.last_arm] += 1;
                    if blk.role == Role::Fixer
                        && obs.reward > 0.0
                        && !self.decl[self.last_arm]
                        && self.acc.contains(&self.last_arm)
                    {
                        self.state = State::Exploit;
                        return;
                    }
                }
                blk.step += 1;
                if blk.step == blk.len {
                    self.finish_block();
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
            State::InitMc { .. } | State::ReorthMc { .. } => PhaseTag::InitMc,
            State::EstimM { .. } => PhaseTag::EstimM,
            State::Explore { .. } => PhaseTag::Explore,
            State::Comm(CommState { role: Role::Declarer(_), .. }) => PhaseTag::Declare,
            State::Comm(CommState { role: Role::Fixer, .. }) => PhaseTag::Fix,
            State::Comm(CommState { role: Role::Listener, .. }) => PhaseTag::Receive,
            State::Exploit => PhaseTag::Exploit,
        }
    }

    fn init_failed(&self) -> bool {
        self.failed
    }
}
