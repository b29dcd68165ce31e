//! No-sensing protocol for the dynamic model, where players enter at
//! arbitrary times and cannot observe collision indicators.
//!
//! Each player explores uniformly at random and maintains confidence
//! intervals on every arm. An arm whose lower bound dominates the upper
//! bound of every other candidate becomes a preference; the player keeps
//! exploring uniformly and fixes on the preferred arm the first time a
//! pull of it returns a positive reward. Occupied arms are detected in two
//! ways: a whole window of pulls yielding only zeros proves an occupant
//! directly, and a preference overtaken by a non-occupied arm must have
//! had its apparent mean deflated by an occupant, so it is demoted and the
//! player moves down its preference list.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::arena::{Observation, PhaseTag, Policy};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DynConfig {
    /// The player's own horizon `T^j`.
    pub personal_horizon: u64,
    /// Multiplier on the confidence width; 1.0 is the analyzed width
    /// `2 * sqrt(6 K ln(T) / t)`, smaller values trade the guarantee for
    /// speed on short horizons.
    pub confidence_scale: f64,
}

impl DynConfig {
    pub fn new(personal_horizon: u64) -> Self {
        Self { personal_horizon, confidence_scale: 1.0 }
    }
}

pub struct DynPolicy {
    cfg: DynConfig,
    k: usize,
    ln_t: f64,
    sums: Vec<f64>,
    counts: Vec<u64>,
    r_inf: Vec<f64>,
    r_sup: Vec<f64>,
    /// Occupancy detection threshold per arm: the all-zero window length
    /// that is implausible for an unoccupied arm. Only ever shrinks.
    l_bound: Vec<f64>,
    /// Pulls and reward total of the current detection window, per arm.
    block_counts: Vec<u64>,
    block_sums: Vec<f64>,
    occupied: Vec<bool>,
    preferences: Vec<usize>,
    /// 1-based pointer into `preferences`; past the end means the player
    /// is back to uniform exploration.
    ptr: usize,
    fixed: Option<usize>,
    last_arm: usize,
}

impl DynPolicy {
    pub fn new(cfg: DynConfig, arms: usize) -> Self {
        assert!(arms > 0 && cfg.personal_horizon > 1);
        Self {
            ln_t: (cfg.personal_horizon as f64).ln(),
            cfg,
            k: arms,
            sums: vec![0.0; arms],
            counts: vec![0; arms],
            r_inf: vec![0.0; arms],
            r_sup: vec![1.0; arms],
            l_bound: vec![f64::INFINITY; arms],
            block_counts: vec![0; arms],
            block_sums: vec![0.0; arms],
            occupied: vec![false; arms],
            preferences: Vec::new(),
            ptr: 1,
            fixed: None,
            last_arm: 0,
        }
    }

    pub fn preferences(&self) -> &[usize] {
        &self.preferences
    }

    /// The arm the player is currently trying to occupy, if any.
    pub fn current_preference(&self) -> Option<usize> {
        self.current_pref()
    }

    pub fn occupied(&self) -> Vec<usize> {
        (0..self.k).filter(|&a| self.occupied[a]).collect()
    }

    pub fn bounds(&self, arm: usize) -> (f64, f64) {
        (self.r_inf[arm], self.r_sup[arm])
    }


    fn current_pref(&self) -> Option<usize> {
        self.preferences.get(self.ptr - 1).copied()
    }

    /// Arms still in contention: neither detected occupied nor already
    /// listed as a preference.
    fn is_active(&self, arm: usize) -> bool {
        !self.occupied[arm] && !self.preferences.contains(&arm)
    }

    fn width(&self, t: u64) -> f64 {
        self.cfg.confidence_scale * 2.0 * (6.0 * self.k as f64 * self.ln_t / t as f64).sqrt()
    }
}

impl Policy for DynPolicy {
    fn choose(&mut self, _personal_time: u64, rng: &mut dyn RngCore) -> usize {
        let arm = match self.fixed {
            Some(arm) => arm,
            None => rng.random_range(0..self.k),
        };
        self.last_arm = arm;
        arm
    }

    fn observe(&mut self, obs: &Observation, _rng: &mut dyn RngCore) {
        if self.fixed.is_some() {
            return;
        }
        let arm = self.last_arm;
        self.sums[arm] += obs.reward;
        self.counts[arm] += 1;
        self.block_sums[arm] += obs.reward;
        self.block_counts[arm] += 1;

        let b = self.width(obs.personal_time);
        for a in 0..self.k {
            if self.counts[a] == 0 {
                continue;
            }
            let mu = self.sums[a] / self.counts[a] as f64;
            self.r_inf[a] = (mu - b).max(0.0);
            self.r_sup[a] = (mu + b).min(1.0);
        }
        if self.r_inf[arm] > 0.0 {
            let l = 2.0 * std::f64::consts::E * self.ln_t / self.r_inf[arm];
            self.l_bound[arm] = self.l_bound[arm].min(l);
        }

        // Opportunistic fixation: a positive reward on the arm the player
        // is trying to occupy means nobody else sits there right now.
        if self.current_pref() == Some(arm) && obs.reward > 0.0 {
            self.fixed = Some(arm);
            return;
        }

        // Skip preferences that got marked occupied.
        while self.current_pref().map(|a| self.occupied[a]).unwrap_or(false) {
            self.ptr += 1;
        }

        // A whole detection window of zero rewards proves occupancy.
        if self.block_counts[arm] as f64 >= self.l_bound[arm] {
            if self.block_sums[arm] == 0.0 {
                self.occupied[arm] = true;
            }
            self.block_counts[arm] = 0;
            self.block_sums[arm] = 0.0;
        }

        // An active arm dominating every other active arm becomes the next
        // preference.
        let candidate = (0..self.k).find(|&i| {
            self.is_active(i)
                && (0..self.k)
                    .all(|l| l == i || !self.is_active(l) || self.r_inf[i] > self.r_sup[l])
        });
        if let Some(i) = candidate {
            self.preferences.push(i);
        }

        // Demotion: some non-occupied arm outside the already-visited
        // preferences beats the current candidate, so the candidate's
        // apparent mean must be deflated by an occupant.
        if let Some(pref) = self.current_pref() {
            let visited = &self.preferences[..self.ptr.min(self.preferences.len())];
            let beaten = (0..self.k).any(|l| {
                !self.occupied[l] && !visited.contains(&l) && self.r_inf[l] > self.r_sup[pref]
            });
            if beaten {
                self.occupied[pref] = true;
            }
        }
    }

    fn is_exploiting(&self) -> Option<usize> {
        self.fixed
    }

    fn phase(&self) -> PhaseTag {
        if self.fixed.is_some() {
            PhaseTag::Exploit
        } else {
            PhaseTag::Explore
        }
    }
}
