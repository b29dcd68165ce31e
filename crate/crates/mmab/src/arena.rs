//! Environment kernel: reward sampling, collision resolution, feedback
//! visibility, lockstep episode execution and regret accounting.

use rand::Rng;
use rand::RngCore;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream;

#[derive(Debug, Error)]
pub enum ArenaError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("player {player} pulled arm {arm} but the instance has only {arms} arms")]
    ArmOutOfRange { player: usize, arm: usize, arms: usize },
    #[error("expected one policy per entry ({entries}), got {policies}")]
    PolicyCount { entries: usize, policies: usize },
}

/// Per-arm reward distribution. All supports lie in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistFamily {
    Bernoulli,
    /// A Beta draw with the requested mean; exercises non-integer reward
    /// sums (and therefore the quantization path) that Bernoulli cannot.
    BoundedGeneral,
}

/// Feedback visibility regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    /// The player observes her reward and the collision bit of her arm.
    CollisionSensing,
    /// The player observes only her reward; a zero is ambiguous.
    NoSensing,
}

/// A multiplayer bandit problem: arms, horizon, player entry times and
/// feedback mode.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BanditInstance {
    pub means: Vec<f64>,
    pub dist_family: Vec<DistFamily>,
    pub horizon: u64,
    /// Entry time of each player; all zero in the static model.
    pub entries: Vec<u64>,
    pub feedback: Feedback,
}

impl BanditInstance {
    pub fn new(
        means: Vec<f64>,
        dist_family: Vec<DistFamily>,
        horizon: u64,
        entries: Vec<u64>,
        feedback: Feedback,
    ) -> Result<Self, ArenaError> {
        let k = means.len();
        if k == 0 {
            return Err(ArenaError::InvalidInstance("no arms".into()));
        }
        if dist_family.len() != k {
            return Err(ArenaError::InvalidInstance(
                "one distribution tag per arm required".into(),
            ));
        }
        if horizon == 0 {
            return Err(ArenaError::InvalidInstance("horizon must be >= 1".into()));
        }
        if means.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(ArenaError::InvalidInstance(
                "all means must lie in [0, 1]".into(),
            ));
        }
        if entries.is_empty() || entries.len() > k {
            return Err(ArenaError::InvalidInstance(format!(
                "player count must satisfy 1 <= M <= K, got M={} K={}",
                entries.len(),
                k
            )));
        }
        if entries.iter().any(|&tau| tau >= horizon) {
            return Err(ArenaError::InvalidInstance(
                "entry times must lie in {0, .., T-1}".into(),
            ));
        }
        Ok(Self { means, dist_family, horizon, entries, feedback })
    }

    /// All arms Bernoulli, convenience constructor.
    pub fn bernoulli(
        means: Vec<f64>,
        horizon: u64,
        entries: Vec<u64>,
        feedback: Feedback,
    ) -> Result<Self, ArenaError> {
        let fam = vec![DistFamily::Bernoulli; means.len()];
        Self::new(means, fam, horizon, entries, feedback)
    }

    pub fn arms(&self) -> usize {
        self.means.len()
    }

    pub fn players(&self) -> usize {
        self.entries.len()
    }

    /// Static model: every player present from the first round.
    pub fn is_static(&self) -> bool {
        self.entries.iter().all(|&tau| tau == 0)
    }

    fn sample_arm(&self, arm: usize, rng: &mut impl Rng) -> f64 {
        let mu = self.means[arm];
        match self.dist_family[arm] {
            DistFamily::Bernoulli => {
                if rng.random::<f64>() < mu {
                    1.0
                } else {
                    0.0
                }
            }
            DistFamily::BoundedGeneral => {
                if mu <= 0.0 || mu >= 1.0 {
                    mu
                } else {
                    // Mean a/(a+b) = mu with concentration a+b = 2.
                    Beta::new(2.0 * mu, 2.0 * (1.0 - mu)).unwrap().sample(rng)
                }
            }
        }
    }
}

/// Phase annotation attached by policies to each of their pulls, used by
/// trace consumers and the test hooks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseTag {
    InitMc,
    EstimM,
    Explore,
    Communicate,
    Declare,
    Fix,
    Receive,
    Exploit,
}

impl std::fmt::Display for PhaseTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PhaseTag::InitMc => "init_mc",
            PhaseTag::EstimM => "estim_m",
            PhaseTag::Explore => "explore",
            PhaseTag::Communicate => "communicate",
            PhaseTag::Declare => "declare",
            PhaseTag::Fix => "fix",
            PhaseTag::Receive => "receive",
            PhaseTag::Exploit => "exploit",
        };
        f.write_str(s)
    }
}

/// Ground truth of one simulated round.
///
/// Vectors are indexed by player (`pulls`, `rewards`, `phases`) or by arm
/// (`raw_draws`, `eta`). Players that have not entered yet have `None`
/// pulls and zero rewards.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RoundResult {
    pub t: u64,
    pub pulls: Vec<Option<usize>>,
    pub raw_draws: Vec<f64>,
    pub eta: Vec<bool>,
    pub rewards: Vec<f64>,
    pub phases: Vec<Option<PhaseTag>>,
}

/// What one player gets to see after a round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Observation {
    pub reward: f64,
    /// Collision bit of the pulled arm; absent under `NoSensing`, so a
    /// policy can never read it there.
    pub collision: Option<bool>,
    pub personal_time: u64,
}

/// Behavioral contract for a decentralized policy.
///
/// A policy sees only its own pulls and observations: no instance means, no
/// other policies, no global clock. It may know its personal horizon and,
/// where the protocol requires it, the lower bound on the arm means.
pub trait Policy {
    /// Pick an arm for the given personal round (1-based).
    fn choose(&mut self, personal_time: u64, rng: &mut dyn RngCore) -> usize;
    /// Digest the feedback of the round just played.
    fn observe(&mut self, obs: &Observation, rng: &mut dyn RngCore);
    /// The arm this policy has committed to, if it is exploiting.
    /// Introspection for tests and reporting only.
    fn is_exploiting(&self) -> Option<usize>;
    /// Phase the policy is currently in, attached to the trace.
    fn phase(&self) -> PhaseTag;
    /// True when an initialization procedure failed and the run should be
    /// flagged invalid rather than aborted.
    fn init_failed(&self) -> bool {
        false
    }
}

impl Policy for Box<dyn Policy> {
    fn choose(&mut self, personal_time: u64, rng: &mut dyn RngCore) -> usize {
        (**self).choose(personal_time, rng)
    }
    fn observe(&mut self, obs: &Observation, rng: &mut dyn RngCore) {
        (**self).observe(obs, rng)
    }
    fn is_exploiting(&self) -> Option<usize> {
        (**self).is_exploiting()
    }
    fn phase(&self) -> PhaseTag {
        (**self).phase()
    }
    fn init_failed(&self) -> bool {
        (**self).init_failed()
    }
}

/// Cumulative pseudo-regret and collision accounting for one run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RegretLedger {
    /// Means-based cumulative pseudo-regret, one entry per round.
    pub cum_regret: Vec<f64>,
    /// Realized-reward cumulative regret, recorded for cross-checking.
    pub cum_realized_regret: Vec<f64>,
    /// Number of colliding arms per round.
    pub collisions: Vec<u32>,
    /// Final committed arm per player, if any.
    pub per_player_exploit_arm: Vec<Option<usize>>,
}

/// Outcome of a full episode.
#[derive(Debug)]
pub struct EpisodeOutcome {
    pub ledger: RegretLedger,
    /// Some policy reported an initialization failure; the run should be
    /// reported separately, never silently averaged in.
    pub flagged: bool,
}

/// Samples rewards and resolves collisions for one round.
///
/// One draw per arm per round: players colliding on an arm would have
/// shared its draw, but both receive zero.
pub fn resolve_round(
    instance: &BanditInstance,
    t: u64,
    pulls: &[Option<usize>],
    rng: &mut impl Rng,
) -> Result<RoundResult, ArenaError> {
    let mut out = RoundResult::default();
    resolve_round_into(instance, t, pulls, rng, &mut out)?;
    Ok(out)
}

fn resolve_round_into(
    instance: &BanditInstance,
    t: u64,
    pulls: &[Option<usize>],
    rng: &mut impl Rng,
    out: &mut RoundResult,
) -> Result<(), ArenaError> {
    let k = instance.arms();
    out.t = t;
    out.pulls.clear();
    out.pulls.extend_from_slice(pulls);
    out.raw_draws.clear();
    for arm in 0..k {
        out.raw_draws.push(instance.sample_arm(arm, rng));
    }
    out.eta.clear();
    out.eta.resize(k, false);
    let mut counts = vec![0u32; k];
    for (player, pull) in pulls.iter().enumerate() {
        if let Some(arm) = *pull {
            if arm >= k {
                return Err(ArenaError::ArmOutOfRange { player, arm, arms: k });
            }
            counts[arm] += 1;
        }
    }
    for arm in 0..k {
        out.eta[arm] = counts[arm] > 1;
    }
    out.rewards.clear();
    for pull in pulls {
        let r = match *pull {
            Some(arm) if !out.eta[arm] => out.raw_draws[arm],
            _ => 0.0,
        };
        out.rewards.push(r);
    }
    out.phases.clear();
    out.phases.resize(pulls.len(), None);
    Ok(())
}

/// Restricts a round's ground truth to what player `j` may observe.
pub fn feedback_view(result: &RoundResult, mode: Feedback, j: usize, personal_time: u64) -> Observation {
    let collision = match mode {
        Feedback::CollisionSensing => {
            let arm = result.pulls[j].expect("player did not pull this round");
            Some(result.eta[arm])
        }
        Feedback::NoSensing => None,
    };
    Observation { reward: result.rewards[j], collision, personal_time }
}

/// Prefix sums of the means sorted in decreasing order; `top_sums[m]` is
/// the best achievable expected reward of `m` non-colliding players.
fn top_mean_prefix(means: &[f64]) -> Vec<f64> {
    let mut sorted = means.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(0.0);
    for m in sorted {
        acc += m;
        out.push(acc);
    }
    out
}

fn regret_increment(instance: &BanditInstance, top_sums: &[f64], round: &RoundResult) -> (f64, f64) {
    let active = round.pulls.iter().filter(|p| p.is_some()).count();
    let best = top_sums[active.min(top_sums.len() - 1)];
    let mut achieved_mean = 0.0;
    let mut achieved_real = 0.0;
    for (j, pull) in round.pulls.iter().enumerate() {
        if let Some(arm) = *pull {
            if !round.eta[arm] {
                achieved_mean += instance.means[arm];
            }
            achieved_real += round.rewards[j];
        }
    }
    (best - achieved_mean, best - achieved_real)
}

/// Runs a full lockstep episode, streaming each round to `on_round`.
///
/// Deterministic for a fixed seed: the environment and every player draw
/// from independent named streams derived from the master seed, so the
/// trace is bit-identical across reruns and adding a player does not
/// perturb existing streams.
pub fn run_episode_with<P, F>(
    instance: &BanditInstance,
    policies: &mut [P],
    seed: u64,
    mut on_round: F,
) -> Result<EpisodeOutcome, ArenaError>
where
    P: Policy,
    F: FnMut(&RoundResult, &[P]),
{
    let m = instance.players();
    if policies.len() != m {
        return Err(ArenaError::PolicyCount { entries: m, policies: policies.len() });
    }
    let mut env_rng = stream(seed, "env", 0);
    let mut player_rngs: Vec<_> = (0..m).map(|j| stream(seed, "player", j as u64)).collect();

    let top_sums = top_mean_prefix(&instance.means);
    let t_max = instance.horizon as usize;
    let mut ledger = RegretLedger {
        cum_regret: Vec::with_capacity(t_max),
        cum_realized_regret: Vec::with_capacity(t_max),
        collisions: Vec::with_capacity(t_max),
        per_player_exploit_arm: vec![None; m],
    };

    let mut pulls = vec![None; m];
    let mut round = RoundResult::default();
    let mut cum = 0.0;
    let mut cum_real = 0.0;
    for t in 1..=instance.horizon {
        for j in 0..m {
            pulls[j] = if instance.entries[j] < t {
                let personal = t - instance.entries[j];
                Some(policies[j].choose(personal, &mut player_rngs[j]))
            } else {
                None
            };
        }
        resolve_round_into(instance, t, &pulls, &mut env_rng, &mut round)?;
        for j in 0..m {
            if pulls[j].is_some() {
                round.phases[j] = Some(policies[j].phase());
            }
        }
        for j in 0..m {
            if pulls[j].is_some() {
                let obs = feedback_view(&round, instance.feedback, j, t - instance.entries[j]);
                policies[j].observe(&obs, &mut player_rngs[j]);
            }
        }
        let (inc, inc_real) = regret_increment(instance, &top_sums, &round);
        cum += inc;
        cum_real += inc_real;
        ledger.cum_regret.push(cum);
        ledger.cum_realized_regret.push(cum_real);
        ledger.collisions.push(round.eta.iter().filter(|&&e| e).count() as u32);
        on_round(&round, policies);
    }
    for (j, policy) in policies.iter().enumerate() {
        ledger.per_player_exploit_arm[j] = policy.is_exploiting();
    }
    let flagged = policies.iter().any(|p| p.init_failed());
    Ok(EpisodeOutcome { ledger, flagged })
}

/// [`run_episode_with`] variant that retains the full trace.
pub fn run_episode<P: Policy>(
    instance: &BanditInstance,
    policies: &mut [P],
    seed: u64,
) -> Result<(Vec<RoundResult>, EpisodeOutcome), ArenaError> {
    let mut trace = Vec::with_capacity(instance.horizon as usize);
    let outcome = run_episode_with(instance, policies, seed, |round, _| trace.push(round.clone()))?;
    Ok((trace, outcome))
}

/// Recomputes the regret ledger from a complete trace.
///
/// Pseudo-regret is means-based rather than realized-reward based, which
/// cuts Monte-Carlo variance while matching the expected regret. Exploit
/// arms are read off the final round's phase annotations.
pub fn pseudo_regret(trace: &[RoundResult], instance: &BanditInstance) -> RegretLedger {
    let top_sums = top_mean_prefix(&instance.means);
    let mut ledger = RegretLedger {
        per_player_exploit_arm: vec![None; instance.players()],
        ..Default::default()
    };
    let mut cum = 0.0;
    let mut cum_real = 0.0;
    for round in trace {
        let (inc, inc_real) = regret_increment(instance, &top_sums, round);
        cum += inc;
        cum_real += inc_real;
        ledger.cum_regret.push(cum);
        ledger.cum_realized_regret.push(cum_real);
        ledger.collisions.push(round.eta.iter().filter(|&&e| e).count() as u32);
    }
    if let Some(last) = trace.last() {
        for (j, phase) in last.phases.iter().enumerate() {
            if *phase == Some(PhaseTag::Exploit) {
                ledger.per_player_exploit_arm[j] = last.pulls[j];
            }
        }
    }
    ledger
}
