//! Acceptance suite: one test per release criterion, each printing a
//! single PASS/FAIL line. Run with `--nocapture` to see the lines as they
//! complete.

use std::collections::BTreeMap;

use mmab::arena::{
    run_episode_with, BanditInstance, Feedback, Observation, PhaseTag, Policy, RoundResult,
};
use mmab::dyn_mmab::{DynConfig, DynPolicy};
use mmab::harness::{run_batch, AlgoSpec, ExperimentConfig, MeansSpec};
use mmab::rng::{derive_seed, stream};
use mmab::sic_mmab::{accept_reject, quantize, SicConfig, SicPolicy, SicVariant};
use mmab::sic_mmab2::{Sic2Config, Sic2Policy};
use rand::{Rng, RngCore};

fn verdict(n: u32, name: &str, pass: bool) {
    println!("criterion {n:>2} {name}: {}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} ({name}) failed");
}

fn top3_means() -> Vec<f64> {
    vec![0.9, 0.75, 0.6, 0.45, 0.3]
}

fn top3_instance(horizon: u64, entries: Vec<u64>, feedback: Feedback) -> BanditInstance {
    BanditInstance::bernoulli(top3_means(), horizon, entries, feedback).unwrap()
}

/// Exploited arms of a finished run, sorted; `None` when any player failed
/// to fix or the run was flagged.
fn exploited_set(ledger: &mmab::RegretLedger, flagged: bool) -> Option<Vec<usize>> {
    if flagged {
        return None;
    }
    let mut arms = Vec::new();
    for a in &ledger.per_player_exploit_arm {
        arms.push((*a)?);
    }
    arms.sort_unstable();
    Some(arms)
}

// --- 1: bit codec exactness over a real collision channel ---------------

struct ScriptedSender {
    arms: Vec<usize>,
    idx: usize,
}

impl Policy for ScriptedSender {
    fn choose(&mut self, _t: u64, _rng: &mut dyn RngCore) -> usize {
        let arm = self.arms[self.idx];
        self.idx += 1;
        arm
    }
    fn observe(&mut self, _obs: &Observation, _rng: &mut dyn RngCore) {}
    fn is_exploiting(&self) -> Option<usize> {
        None
    }
    fn phase(&self) -> PhaseTag {
        PhaseTag::Communicate
    }
}

struct ScriptedReceiver {
    bits: Vec<bool>,
}

impl Policy for ScriptedReceiver {
    fn choose(&mut self, _t: u64, _rng: &mut dyn RngCore) -> usize {
        1
    }
    fn observe(&mut self, obs: &Observation, _rng: &mut dyn RngCore) {
        self.bits.push(obs.collision.expect("needs collision sensing"));
    }
    fn is_exploiting(&self) -> Option<usize> {
        None
    }
    fn phase(&self) -> PhaseTag {
        PhaseTag::Communicate
    }
}

#[test]
fn codec_exactness() {
    // Every value expressible in p+1 bits, for p = 0..=12, sent bit by bit
    // through deliberate collisions: bit 1 = jump on the receiver's arm,
    // bit 0 = stay home.
    let mut arms = Vec::new();
    let mut expected = Vec::new();
    for p in 0..=12u32 {
        for s in 0u64..(1 << (p + 1)) {
            expected.push((p, s));
            for n in 0..=p {
                arms.push(if (s >> n) & 1 == 1 { 1 } else { 0 });
            }
        }
    }
    let horizon = arms.len() as u64;
    let inst = BanditInstance::bernoulli(
        vec![1.0, 1.0],
        horizon,
        vec![0, 0],
        Feedback::CollisionSensing,
    )
    .unwrap();
    let mut policies = vec![
        PolicyPair::Sender(ScriptedSender { arms, idx: 0 }),
        PolicyPair::Receiver(ScriptedReceiver { bits: Vec::new() }),
    ];
    run_episode_with(&inst, &mut policies, 1, |_, _| {}).unwrap();
    let bits = match policies.pop().unwrap() {
        PolicyPair::Receiver(r) => r.bits,
        _ => unreachable!(),
    };

    let mut cursor = 0usize;
    let mut exact = 0usize;
    for &(p, s) in &expected {
        let mut decoded = 0u64;
        for n in 0..=p {
            if bits[cursor] {
                decoded |= 1 << n;
            }
            cursor += 1;
        }
        if decoded == s {
            exact += 1;
        }
    }
    verdict(1, "codec exactness", exact == expected.len() && cursor == bits.len());
}

enum PolicyPair {
    Sender(ScriptedSender),
    Receiver(ScriptedReceiver),
}

impl Policy for PolicyPair {
    fn choose(&mut self, t: u64, rng: &mut dyn RngCore) -> usize {
        match self {
            PolicyPair::Sender(p) => p.choose(t, rng),
            PolicyPair::Receiver(p) => p.choose(t, rng),
        }
    }
    fn observe(&mut self, obs: &Observation, rng: &mut dyn RngCore) {
        match self {
            PolicyPair::Sender(p) => p.observe(obs, rng),
            PolicyPair::Receiver(p) => p.observe(obs, rng),
        }
    }
    fn is_exploiting(&self) -> Option<usize> {
        None
    }
    fn phase(&self) -> PhaseTag {
        PhaseTag::Communicate
    }
}

// --- 2: shared-state agreement across players ---------------------------

#[test]
fn shared_state_convergence() {
    let inst = top3_instance(100_000, vec![0, 0, 0], Feedback::CollisionSensing);
    let cfg = SicConfig { horizon: inst.horizon, variant: SicVariant::Bernoulli };
    let mut divergences = 0u64;
    let mut bad_collisions = 0u64;
    let mut checked_transitions = 0u64;
    for run in 0..100 {
        let seed = derive_seed(20_002, "run", run);
        let mut policies: Vec<SicPolicy> = (0..3).map(|_| SicPolicy::new(cfg, 5)).collect();
        let mut prev = vec![PhaseTag::InitMc; 3];
        let outcome = run_episode_with(&inst, &mut policies, seed, |round, pols| {
            for j in 0..3 {
                let now = pols[j].phase();
                if prev[j] == PhaseTag::Communicate && now == PhaseTag::Explore {
                    let snap = pols[j].snapshot();
                    for other in pols.iter() {
                        if other.is_exploiting().is_none() && other.snapshot() != snap {
                            divergences += 1;
                        }
                    }
                    checked_transitions += 1;
                }
                prev[j] = now;
            }
            for (j, pull) in round.pulls.iter().enumerate() {
                if let (Some(arm), Some(PhaseTag::Explore | PhaseTag::Exploit)) =
                    (round.pulls[j], round.phases[j])
                {
                    let _ = pull;
                    if round.eta[arm] {
                        bad_collisions += 1;
                    }
                }
            }
        })
        .unwrap();
        // Runs with failed initialization are exempt from the agreement
        // requirement; none are expected at this horizon.
        let _ = outcome;
    }
    verdict(
        2,
        "shared-state convergence",
        divergences == 0 && bad_collisions == 0 && checked_transitions > 0,
    );
}

// --- 3: initialization failure rate -------------------------------------

#[test]
fn initialization_failure_bound() {
    // 10 arms, 5 players, policies sized for T = 1e5 so the seating window
    // is ceil(10 ln 1e5) = 116 rounds; the episode only needs to cover it.
    let means: Vec<f64> = (0..10).map(|i| 0.9 - 0.05 * i as f64).collect();
    let inst =
        BanditInstance::bernoulli(means, 120, vec![0; 5], Feedback::CollisionSensing).unwrap();
    let cfg = SicConfig { horizon: 100_000, variant: SicVariant::Bernoulli };
    let mut failures = 0u64;
    for run in 0..10_000u64 {
        let seed = derive_seed(20_003, "run", run);
        let mut policies: Vec<SicPolicy> = (0..5).map(|_| SicPolicy::new(cfg, 10)).collect();
        let outcome = run_episode_with(&inst, &mut policies, seed, |_, _| {}).unwrap();
        if outcome.flagged {
            failures += 1;
        }
    }
    println!("  ({failures} init failures in 10000 runs)");
    verdict(3, "initialization failure bound", failures < 3);
}

// --- 4: correct selection for all three protocols -----------------------

#[test]
fn correct_selection_sensing() {
    let inst = top3_instance(100_000, vec![0, 0, 0], Feedback::CollisionSensing);
    let cfg = SicConfig { horizon: inst.horizon, variant: SicVariant::Bernoulli };
    let mut good = 0;
    for run in 0..100u64 {
        let seed = derive_seed(20_004, "run", run);
        let mut policies: Vec<SicPolicy> = (0..3).map(|_| SicPolicy::new(cfg, 5)).collect();
        let outcome = run_episode_with(&inst, &mut policies, seed, |_, _| {}).unwrap();
        if exploited_set(&outcome.ledger, outcome.flagged) == Some(vec![0, 1, 2]) {
            good += 1;
        }
    }
    println!("  (sensing protocol correct in {good}/100 runs)");
    verdict(4, "correct selection (sensing)", good >= 99);
}

#[test]
fn correct_selection_no_sensing() {
    let inst = top3_instance(500_000, vec![0, 0, 0], Feedback::NoSensing);
    let cfg = Sic2Config { horizon: inst.horizon, mu_min: 0.3, block_scale: 60.0 };
    let mut good = 0;
    for run in 0..100u64 {
        let seed = derive_seed(20_104, "run", run);
        let mut policies: Vec<Sic2Policy> = (0..3).map(|_| Sic2Policy::new(cfg, 5)).collect();
        let outcome = run_episode_with(&inst, &mut policies, seed, |_, _| {}).unwrap();
        if exploited_set(&outcome.ledger, outcome.flagged) == Some(vec![0, 1, 2]) {
            good += 1;
        }
    }
    println!("  (no-sensing protocol correct in {good}/100 runs)");
    verdict(4, "correct selection (no sensing)", good >= 95);
}

#[test]
fn correct_selection_dynamic() {
    let entries = vec![0u64, 1_000, 2_000];
    let inst = top3_instance(200_000, entries.clone(), Feedback::NoSensing);
    let mut good = 0;
    for run in 0..100u64 {
        let seed = derive_seed(20_204, "run", run);
        let mut policies: Vec<DynPolicy> = entries
            .iter()
            .map(|&e| {
                DynPolicy::new(
                    DynConfig { personal_horizon: inst.horizon - e, confidence_scale: 0.3 },
                    5,
                )
            })
            .collect();
        let outcome = run_episode_with(&inst, &mut policies, seed, |_, _| {}).unwrap();
        if exploited_set(&outcome.ledger, outcome.flagged) == Some(vec![0, 1, 2]) {
            good += 1;
        }
    }
    println!("  (dynamic protocol correct in {good}/100 runs)");
    verdict(4, "correct selection (dynamic)", good >= 95);
}

// --- 5: quantizer unbiasedness ------------------------------------------

#[test]
fn quantizer_unbiasedness() {
    let mut rng = stream(20_005, "q", 0);
    let n = 100_000u64;
    let mut pass = true;
    for &s in &[0.1f64, 3.25, 7.9] {
        let frac = s - s.floor();
        let sigma = (frac * (1.0 - frac) / n as f64).sqrt();
        let mean = (0..n).map(|_| quantize(s, 3, &mut rng) as f64).sum::<f64>() / n as f64;
        let dev = (mean - s).abs();
        println!("  (s = {s}: sample mean {mean:.5}, allowed 4 sigma = {:.5})", 4.0 * sigma);
        if dev > 4.0 * sigma {
            pass = false;
        }
    }
    verdict(5, "quantizer unbiasedness", pass);
}

// --- 6: regret shape ----------------------------------------------------

#[test]
fn regret_shape() {
    let inst = top3_instance(100_000, vec![0, 0, 0], Feedback::CollisionSensing);
    let cfg = SicConfig { horizon: inst.horizon, variant: SicVariant::Bernoulli };
    let t = inst.horizon as usize;
    let (mut at_early, mut at_half, mut at_late, mut at_end) = (0.0, 0.0, 0.0, 0.0);
    let runs = 50;
    for run in 0..runs {
        let seed = derive_seed(20_006, "run", run);
        let mut policies: Vec<SicPolicy> = (0..3).map(|_| SicPolicy::new(cfg, 5)).collect();
        let outcome = run_episode_with(&inst, &mut policies, seed, |_, _| {}).unwrap();
        let cum = &outcome.ledger.cum_regret;
        at_early += cum[t / 10 - 1];
        at_half += cum[t / 2 - 1];
        at_late += cum[t * 9 / 10 - 1];
        at_end += cum[t - 1];
    }
    let n = runs as f64;
    let early_rate = (at_early / n) / (t as f64 / 10.0);
    let late_rate = ((at_end - at_late) / n) / (t as f64 / 10.0);
    let plateau = late_rate <= 0.05 * early_rate;
    let sublinear = at_end / n <= 1.5 * (at_half / n);
    println!(
        "  (per-round regret: first decile {early_rate:.5}, last decile {late_rate:.5}; \
         cum T = {:.1}, cum T/2 = {:.1})",
        at_end / n,
        at_half / n
    );
    verdict(6, "regret shape", plateau && sublinear);
}

// --- 7: phase alternation on the 9-arm close-gap setup ------------------

#[test]
fn phase_alternation_steps() {
    let means: Vec<f64> = (0..9).map(|i| 0.9 - 0.01 * i as f64 / 8.0).collect();
    let inst = BanditInstance::bernoulli(
        means,
        500_000,
        vec![0; 6],
        Feedback::CollisionSensing,
    )
    .unwrap();
    let cfg = SicConfig { horizon: inst.horizon, variant: SicVariant::Bernoulli };
    let t = inst.horizon as usize;
    let runs = 200u64;
    let mut inc_sum = vec![0.0f64; t];
    let mut phase_of_round: Vec<PhaseTag> = Vec::with_capacity(t);
    for run in 0..runs {
        let seed = derive_seed(20_007, "run", run);
        let mut policies: Vec<SicPolicy> = (0..6).map(|_| SicPolicy::new(cfg, 9)).collect();
        let first = run == 0;
        let outcome = run_episode_with(&inst, &mut policies, seed, |_, pols| {
            if first {
                phase_of_round.push(pols[0].phase());
            }
        })
        .unwrap();
        let cum = &outcome.ledger.cum_regret;
        inc_sum[0] += cum[0];
        for i in 1..t {
            inc_sum[i] += cum[i] - cum[i - 1];
        }
    }

    // The gaps are far too small for any accept/reject decision within the
    // horizon, so the explore/communicate schedule is identical in every
    // run; segment it from the first run's phase labels.
    let mut segments: Vec<(PhaseTag, usize, usize)> = Vec::new();
    let mut start = 0usize;
    for i in 1..=t {
        if i == t || phase_of_round[i] != phase_of_round[start] {
            segments.push((phase_of_round[start], start, i));
            start = i;
        }
    }
    let seg_rate = |&(_, a, b): &(PhaseTag, usize, usize)| {
        inc_sum[a..b].iter().sum::<f64>() / (b - a) as f64 / runs as f64
    };
    let mut compared = 0;
    let mut pass = true;
    for (i, seg) in segments.iter().enumerate() {
        if seg.0 != PhaseTag::Communicate {
            continue;
        }
        let comm = seg_rate(seg);
        for other in [i.checked_sub(1).map(|j| &segments[j]), segments.get(i + 1)]
            .into_iter()
            .flatten()
        {
            if other.0 == PhaseTag::Explore {
                compared += 1;
                if comm <= seg_rate(other) {
                    pass = false;
                }
            }
        }
    }
    println!("  ({compared} communication/exploration boundaries compared)");
    verdict(7, "phase alternation steps", pass && compared >= 10);
}

// --- 8: accept/reject against a brute-force sorter ----------------------

#[test]
fn accept_reject_oracle_equivalence() {
    let mut rng = stream(20_008, "inst", 0);
    let mut pass = true;
    for _ in 0..1000 {
        let k = 2 + (rng.next_u64() % 7) as usize;
        let m = 1 + (rng.next_u64() % k as u64) as usize;
        let mu: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let distinct = {
            let mut s = mu.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            s.windows(2).all(|w| w[0] != w[1])
        };
        if !distinct {
            continue;
        }
        let rad = vec![0.0; k];
        let (acc, rej) = accept_reject(&mu, &rad, m);

        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| mu[b].partial_cmp(&mu[a]).unwrap());
        let mut top: Vec<usize> = order[..m].to_vec();
        top.sort_unstable();
        let mut rest: Vec<usize> = order[m..].to_vec();
        rest.sort_unstable();
        if acc != top || rej != rest {
            pass = false;
        }
    }
    verdict(8, "accept/reject oracle equivalence", pass);
}

// --- 9: dynamic estimation error bound ----------------------------------

#[test]
fn dynamic_estimation_bound() {
    let entries = vec![0u64, 1_000, 2_000];
    let inst = top3_instance(200_000, entries.clone(), Feedback::NoSensing);
    let k = inst.arms() as f64;
    let means = top3_means();
    let mut total = 0u64;
    let mut violations = 0u64;
    for run in 0..100u64 {
        let seed = derive_seed(20_204, "run", run);
        let mut policies: Vec<DynPolicy> = entries
            .iter()
            .map(|&e| {
                DynPolicy::new(
                    DynConfig { personal_horizon: inst.horizon - e, confidence_scale: 0.3 },
                    5,
                )
            })
            .collect();
        let mut sums = vec![vec![0.0f64; 5]; 3];
        let mut gamma_sum = vec![0.0f64; 3];
        let mut free = vec![true; 5];
        run_episode_with(&inst, &mut policies, seed, |round: &RoundResult, pols| {
            // Arms stop being free the moment someone starts exploiting
            // them.
            for (j, phase) in round.phases.iter().enumerate() {
                if *phase == Some(PhaseTag::Exploit) {
                    if let Some(arm) = round.pulls[j] {
                        free[arm] = false;
                    }
                }
            }
            let m_t = round
                .phases
                .iter()
                .filter(|p| **p == Some(PhaseTag::Explore))
                .count();
            let shade = if m_t == 0 { 1.0 } else { (1.0 - 1.0 / k).powi(m_t as i32 - 1) };
            for j in 0..3 {
                if round.phases[j] != Some(PhaseTag::Explore) {
                    continue;
                }
                gamma_sum[j] += shade;
                if let Some(arm) = round.pulls[j] {
                    sums[j][arm] += round.rewards[j];
                }
                let t_pers = round.t - entries[j];
                // Check at geometric personal times while the player is
                // still sampling uniformly.
                if t_pers >= 64
                    && t_pers.is_power_of_two()
                    && pols[j].current_preference().is_none()
                {
                    let horizon_j = (inst.horizon - entries[j]) as f64;
                    let bound = 2.0 * (6.0 * k * horizon_j.ln() / t_pers as f64).sqrt();
                    for arm in 0..5 {
                        if !free[arm] {
                            continue;
                        }
                        let r_hat = k * sums[j][arm] / t_pers as f64;
                        let gamma_bar = gamma_sum[j] / t_pers as f64;
                        total += 1;
                        if (r_hat - gamma_bar * means[arm]).abs() > bound {
                            violations += 1;
                        }
                    }
                }
            }
        })
        .unwrap();
    }
    println!("  ({violations} violations over {total} checkpoints)");
    verdict(9, "dynamic estimation bound", total > 0 && (violations as f64) <= 0.01 * total as f64);
}

// --- 10: byte-identical reruns ------------------------------------------

#[test]
fn determinism_byte_identical() {
    let cfg = ExperimentConfig {
        means: MeansSpec::Explicit(top3_means()),
        dist_family: mmab::DistFamily::Bernoulli,
        horizon: 100_000,
        entries: vec![0, 0, 0],
        feedback: None,
        algo: AlgoSpec::SicMmab { variant: SicVariant::Bernoulli },
        runs: 5,
        seed: 20_010,
        per_round: false,
    };
    let mut outputs: BTreeMap<&str, Vec<Vec<u8>>> = BTreeMap::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        run_batch(&cfg, Some(dir.path())).unwrap();
        for name in ["runs.csv", "summary.json"] {
            outputs
                .entry(name)
                .or_default()
                .push(std::fs::read(dir.path().join(name)).unwrap());
        }
    }
    let pass = outputs.values().all(|v| v[0] == v[1]);
    verdict(10, "determinism", pass);
}
