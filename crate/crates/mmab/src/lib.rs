//! Simulator and reference protocols for multiplayer multi-armed bandits
//! on a collision channel.
//!
//! Several players pull arms of a shared bandit in discrete lockstep rounds.
//! When two or more players pull the same arm in the same round they collide
//! and all receive a zero reward. Depending on the feedback mode a player
//! either observes the collision indicator of her arm (`CollisionSensing`)
//! or only her reward (`NoSensing`), in which case a zero is ambiguous.
//!
//! The crate provides:
//!
//! - [`arena`]: the environment kernel — reward sampling, collision
//!   resolution, feedback visibility, lockstep episode execution and
//!   pseudo-regret accounting;
//! - [`sic_mmab`]: a Collision Sensing protocol that communicates quantized
//!   statistics between players through deliberate collisions and eliminates
//!   arms by successive accept/reject;
//! - [`dyn_mmab`]: a No Sensing protocol for players entering at different
//!   times, based on uniform exploration, occupancy detection through runs
//!   of zero rewards and opportunistic fixation;
//! - [`sic_mmab2`]: a No Sensing static protocol that signals accept/reject
//!   decisions by measurably depressing an arm's empirical reward;
//! - [`baselines`]: a selfish per-player UCB and a centralized oracle;
//! - [`harness`]: batch experiment orchestration with seeded runs, CSV/JSON
//!   artifacts and gap sweeps.

pub mod arena;
pub mod baselines;
pub mod dyn_mmab;
pub mod export;
pub mod harness;
pub mod rng;
pub mod sic_mmab;
pub mod sic_mmab2;

pub use arena::{
    feedback_view, pseudo_regret, resolve_round, run_episode, run_episode_with, ArenaError,
    BanditInstance, DistFamily, EpisodeOutcome, Feedback, Observation, PhaseTag, Policy,
    RegretLedger, RoundResult,
};
