//! Baseline policies: a fixed-arm oracle allocation and a selfish UCB
//! player that ignores the other players entirely.

use rand::RngCore;

use crate::arena::{BanditInstance, Observation, PhaseTag, Policy};

/// Pulls one arm forever. Building block of the oracle allocation and of
/// scripted tests.
#[derive(Clone, Debug)]
pub struct FixedArm {
    arm: usize,
}

impl FixedArm {
    pub fn new(arm: usize) -> Self {
        Self { arm }
    }
}

impl Policy for FixedArm {
    fn choose(&mut self, _personal_time: u64, _rng: &mut dyn RngCore) -> usize {
        self.arm
    }
    fn observe(&mut self, _obs: &Observation, _rng: &mut dyn RngCore) {}
    fn is_exploiting(&self) -> Option<usize> {
        Some(self.arm)
    }
    fn phase(&self) -> PhaseTag {
        PhaseTag::Exploit
    }
}

/// Centralized oracle allocation: the `j`-th entrant (ties broken by player
/// index) is pinned to the `j`-th best arm, so no round ever has a
/// collision and the pseudo-regret is identically zero.
pub fn oracle_assignment(means: &[f64], entries: &[u64]) -> Vec<usize> {
    let mut arm_order: Vec<usize> = (0..means.len()).collect();
    arm_order.sort_by(|&a, &b| means[b].partial_cmp(&means[a]).unwrap().then(a.cmp(&b)));
    let mut player_order: Vec<usize> = (0..entries.len()).collect();
    player_order.sort_by_key(|&j| (entries[j], j));
    let mut out = vec![0; entries.len()];
    for (rank, &j) in player_order.iter().enumerate() {
        out[j] = arm_order[rank];
    }
    out
}

/// One [`FixedArm`] per player, following the oracle allocation.
pub fn oracle_policies(instance: &BanditInstance) -> Vec<FixedArm> {
    oracle_assignment(&instance.means, &instance.entries)
        .into_iter()
        .map(FixedArm::new)
        .collect()
}

/// Single-player UCB1 run without any regard for the other players.
///
/// Collisions feed back as plain zero rewards, so several selfish players
/// chase the same top arms and keep knocking each other out; the baseline
/// exists to show that this fails, not to compete.
#[derive(Clone, Debug)]
pub struct SelfishPolicy {
    sums: Vec<f64>,
    counts: Vec<u64>,
    last_arm: usize,
}

impl SelfishPolicy {
    pub fn new(arms: usize) -> Self {
        assert!(arms > 0);
        Self { sums: vec![0.0; arms], counts: vec![0; arms], last_arm: 0 }
    }
}

impl Policy for SelfishPolicy {
    fn choose(&mut self, personal_time: u64, rng: &mut dyn RngCore) -> usize {
        let k = self.sums.len() as u64;
        let arm = if personal_time <= k {
            // Round-robin warmup, lowest index first.
            (personal_time - 1) as usize
        } else {
            let n = (personal_time - 1) as f64;
            let mut best = f64::NEG_INFINITY;
            let mut ties: Vec<usize> = Vec::new();
            for arm in 0..self.sums.len() {
                let t = self.counts[arm] as f64;
                let index = self.sums[arm] / t + (2.0 * n.ln() / t).sqrt();
                if index > best {
                    best = index;
                    ties.clear();
                    ties.push(arm);
                } else if index == best {
                    ties.push(arm);
                }
            }
            ties[(rng.next_u64() % ties.len() as u64) as usize]
        };
        self.last_arm = arm;
        arm
    }

    fn observe(&mut self, obs: &Observation, _rng: &mut dyn RngCore) {
        self.sums[self.last_arm] += obs.reward;
        self.counts[self.last_arm] += 1;
    }

    fn is_exploiting(&self) -> Option<usize> {
        None
    }

    fn phase(&self) -> PhaseTag {
        PhaseTag::Explore
    }
}
