//! End-to-end protocol runs on small instances: initialization handshakes,
//! in-band communication, and convergence to the top arms.

use mmab::arena::{run_episode_with, BanditInstance, Feedback, PhaseTag, Policy};
use mmab::dyn_mmab::{DynConfig, DynPolicy};
use mmab::sic_mmab::{SicConfig, SicPolicy, SicVariant};
use mmab::sic_mmab2::{Sic2Config, Sic2Policy};

fn top3_instance(horizon: u64, entries: Vec<u64>, feedback: Feedback) -> BanditInstance {
    BanditInstance::bernoulli(vec![0.9, 0.75, 0.6, 0.45, 0.3], horizon, entries, feedback).unwrap()
}

#[test]
fn sic_rank_estimation_orders_by_seat() {
    // Seats 5, 7, 2 on K = 8 arms: internal ranks must come out 2, 3, 1.
    let cfg = SicConfig { horizon: 100_000, variant: SicVariant::Bernoulli };
    let inst = BanditInstance::bernoulli(
        vec![0.5; 8],
        16,
        vec![0, 0, 0],
        Feedback::CollisionSensing,
    )
    .unwrap();
    let mut policies = vec![
        SicPolicy::with_external_rank(cfg, 8, 5),
        SicPolicy::with_external_rank(cfg, 8, 7),
        SicPolicy::with_external_rank(cfg, 8, 2),
    ];
    run_episode_with(&inst, &mut policies, 3, |_, _| {}).unwrap();
    assert!(policies.iter().all(|p| p.num_players() == 3));
    let ranks: Vec<usize> = policies.iter().map(|p| p.internal_rank()).collect();
    assert_eq!(ranks, vec![2, 3, 1]);
}

#[test]
fn sic_full_run_converges_and_shares_state() {
    let inst = top3_instance(100_000, vec![0, 0, 0], Feedback::CollisionSensing);
    let cfg = SicConfig { horizon: inst.horizon, variant: SicVariant::Bernoulli };
    let mut policies: Vec<SicPolicy> = (0..3).map(|_| SicPolicy::new(cfg, 5)).collect();
    let mut prev_phases = vec![PhaseTag::InitMc; 3];
    let mut explore_collisions = 0u64;
    let outcome = run_episode_with(&inst, &mut policies, 41, |round, pols| {
        // Whenever a player transitions communicate -> explore, every
        // still-active player must agree on the shared state exactly.
        for j in 0..3 {
            let now = pols[j].phase();
            if prev_phases[j] == PhaseTag::Communicate && now == PhaseTag::Explore {
                let snap = pols[j].snapshot();
                for other in pols.iter() {
                    if other.is_exploiting().is_none() {
                        assert_eq!(other.snapshot(), snap, "state diverged at t={}", round.t);
                    }
                }
            }
            prev_phases[j] = now;
        }
        for (j, pull) in round.pulls.iter().enumerate() {
            let tag = round.phases[j];
            if let (Some(arm), Some(PhaseTag::Explore | PhaseTag::Exploit)) = (pull, tag) {
                if round.eta[*arm] {
                    explore_collisions += 1;
                }
            }
        }
    })
    .unwrap();
    assert!(!outcome.flagged);
    assert_eq!(explore_collisions, 0, "explore/exploit rounds must be collision-free");
    let mut arms: Vec<usize> =
        outcome.ledger.per_player_exploit_arm.iter().map(|a| a.unwrap()).collect();
    arms.sort_unstable();
    assert_eq!(arms, vec![0, 1, 2], "players must exploit the top three arms");
}

#[test]
fn sic_communication_round_trips_bulk_statistics() {
    // Two players, forced distinct seats; after the first communication
    // phase each player's table row for the other must match what the
    // other sent (its own row), entry for entry.
    let cfg = SicConfig { horizon: 100_000, variant: SicVariant::Bernoulli };
    let inst = BanditInstance::bernoulli(
        vec![0.9, 0.5, 0.2],
        2_000,
        vec![0, 0],
        Feedback::CollisionSensing,
    )
    .unwrap();
    let mut policies = vec![
        SicPolicy::with_external_rank(cfg, 3, 1),
        SicPolicy::with_external_rank(cfg, 3, 2),
    ];
    let mut checked = false;
    run_episode_with(&inst, &mut policies, 11, |_, pols| {
        if !checked
            && pols.iter().all(|p| p.phase() == PhaseTag::Explore && p.phase_index() >= 1)
        {
            let a = pols[0].snapshot();
            let b = pols[1].snapshot();
            assert_eq!(a.shared_s, b.shared_s);
            assert_eq!(a.tvec, b.tvec);
            checked = true;
        }
    })
    .unwrap();
    assert!(checked, "never reached a second exploration phase");
}

#[test]
fn sic2_full_run_converges_without_sensing() {
    let inst = top3_instance(500_000, vec![0, 0, 0], Feedback::NoSensing);
    let cfg = Sic2Config { horizon: inst.horizon, mu_min: 0.3, block_scale: 60.0 };
    let mut policies: Vec<Sic2Policy> = (0..3).map(|_| Sic2Policy::new(cfg, 5)).collect();
    let outcome = run_episode_with(&inst, &mut policies, 17, |_, _| {}).unwrap();
    assert!(!outcome.flagged);
    let mut arms: Vec<usize> = outcome
        .ledger
        .per_player_exploit_arm
        .iter()
        .map(|a| a.expect("all players should have fixed"))
        .collect();
    arms.sort_unstable();
    assert_eq!(arms, vec![0, 1, 2]);
}

#[test]
fn sic2_declaration_is_heard_by_everyone() {
    // Same run as above, but watch the active sets: once any player has
    // moved past phase 0, rejected arms must disappear for all of them.
    let inst = top3_instance(500_000, vec![0, 0, 0], Feedback::NoSensing);
    let cfg = Sic2Config { horizon: inst.horizon, mu_min: 0.3, block_scale: 60.0 };
    let mut policies: Vec<Sic2Policy> = (0..3).map(|_| Sic2Policy::new(cfg, 5)).collect();
    let mut shrunk_together = false;
    run_episode_with(&inst, &mut policies, 29, |_, pols| {
        if shrunk_together {
            return;
        }
        let active: Vec<&[usize]> = pols
            .iter()
            .filter(|p| p.is_exploiting().is_none())
            .map(|p| p.active_arms())
            .collect();
        if active.iter().all(|a| a.len() < 5) && !active.is_empty() {
            let first = active[0];
            assert!(active.iter().all(|a| *a == first), "active sets diverged: {active:?}");
            shrunk_together = true;
        }
    })
    .unwrap();
    assert!(shrunk_together, "no arm was ever eliminated");
}

#[test]
fn dyn_players_queue_up_on_the_best_arms() {
    let inst = top3_instance(200_000, vec![0, 1_000, 2_000], Feedback::NoSensing);
    let mut policies: Vec<DynPolicy> = inst
        .entries
        .iter()
        .map(|&e| {
            DynPolicy::new(
                DynConfig {
                    personal_horizon: inst.horizon - e,
                    confidence_scale: 0.3,
                },
                5,
            )
        })
        .collect();
    let outcome = run_episode_with(&inst, &mut policies, 53, |_, _| {}).unwrap();
    let mut arms: Vec<usize> = outcome
        .ledger
        .per_player_exploit_arm
        .iter()
        .map(|a| a.expect("all players should have fixed"))
        .collect();
    // The first entrant grabs the best arm; later entrants find it
    // occupied and settle on the next ones.
    assert_eq!(arms[0], 0);
    arms.sort_unstable();
    assert_eq!(arms, vec![0, 1, 2]);
}

#[test]
fn dyn_exploiters_are_never_disturbed() {
    let inst = top3_instance(200_000, vec![0, 1_000, 2_000], Feedback::NoSensing);
    let mut policies: Vec<DynPolicy> = inst
        .entries
        .iter()
        .map(|&e| {
            DynPolicy::new(
                DynConfig { personal_horizon: inst.horizon - e, confidence_scale: 0.3 },
                5,
            )
        })
        .collect();
    let mut stuck: Vec<Option<usize>> = vec![None; 3];
    run_episode_with(&inst, &mut policies, 67, |round, pols| {
        for j in 0..3 {
            if let Some(arm) = pols[j].is_exploiting() {
                if let Some(prev) = stuck[j] {
                    assert_eq!(prev, arm, "player {j} abandoned its fixed arm at t={}", round.t);
                } else {
                    stuck[j] = Some(arm);
                }
            }
        }
    })
    .unwrap();
    assert!(stuck.iter().all(|s| s.is_some()));
}
