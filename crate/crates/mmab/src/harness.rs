//! Batch experiment orchestration: config ingestion, seeded runs,
//! aggregation and artifact emission.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arena::{
    run_episode_with, BanditInstance, DistFamily, Feedback, Policy, RoundResult,
};
use crate::baselines::{oracle_assignment, FixedArm, SelfishPolicy};
use crate::dyn_mmab::{DynConfig, DynPolicy};
use crate::rng::derive_seed;
use crate::sic_mmab::{SicConfig, SicPolicy, SicVariant};
use crate::sic_mmab2::{Sic2Config, Sic2Policy};

/// Arm means, either spelled out or generated on a linear grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeansSpec {
    Explicit(Vec<f64>),
    Linear { from: f64, to: f64, count: usize },
}

impl MeansSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            MeansSpec::Explicit(v) => v.clone(),
            MeansSpec::Linear { from, to, count } => {
                if *count == 1 {
                    return vec![*from];
                }
                (0..*count)
                    .map(|i| from + (to - from) * i as f64 / (*count as f64 - 1.0))
                    .collect()
            }
        }
    }
}

/// Algorithm selection plus its parameters; one kind for all players.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum AlgoSpec {
    SicMmab {
        #[serde(default = "default_variant")]
        variant: SicVariant,
    },
    DynMmab {
        #[serde(default = "one")]
        confidence_scale: f64,
    },
    SicMmab2 {
        mu_min: f64,
        #[serde(default = "default_block_scale")]
        block_scale: f64,
    },
    Selfish,
    Oracle,
}

fn default_variant() -> SicVariant {
    SicVariant::Bernoulli
}

fn one() -> f64 {
    1.0
}

fn default_block_scale() -> f64 {
    2400.0
}

impl AlgoSpec {
    pub fn label(&self) -> &'static str {
        match self {
            AlgoSpec::SicMmab { .. } => "sic_mmab",
            AlgoSpec::DynMmab { .. } => "dyn_mmab",
            AlgoSpec::SicMmab2 { .. } => "sic_mmab2",
            AlgoSpec::Selfish => "selfish",
            AlgoSpec::Oracle => "oracle",
        }
    }

    fn default_feedback(&self) -> Feedback {
        match self {
            AlgoSpec::SicMmab { .. } => Feedback::CollisionSensing,
            _ => Feedback::NoSensing,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub means: MeansSpec,
    #[serde(default = "default_family")]
    pub dist_family: DistFamily,
    pub horizon: u64,
    pub entries: Vec<u64>,
    /// Defaults to the natural mode of the chosen algorithm.
    #[serde(default)]
    pub feedback: Option<Feedback>,
    pub algo: AlgoSpec,
    pub runs: usize,
    pub seed: u64,
    /// Also emit the run-averaged per-round regret curve (large files).
    #[serde(default)]
    pub per_round: bool,
}

fn default_family() -> DistFamily {
    DistFamily::Bernoulli
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("invalid experiment config")?;
        if cfg.runs == 0 {
            bail!("runs must be >= 1");
        }
        cfg.instance()?;
        Ok(cfg)
    }

    pub fn instance(&self) -> Result<BanditInstance> {
        let means = self.means.values();
        let fam = vec![self.dist_family; means.len()];
        let feedback = self.feedback.unwrap_or_else(|| self.algo.default_feedback());
        Ok(BanditInstance::new(means, fam, self.horizon, self.entries.clone(), feedback)?)
    }

    pub fn policies(&self, instance: &BanditInstance) -> Vec<Box<dyn Policy>> {
        let k = instance.arms();
        instance
            .entries
            .iter()
            .enumerate()
            .map(|(j, &entry)| -> Box<dyn Policy> {
                match &self.algo {
                    AlgoSpec::SicMmab { variant } => Box::new(SicPolicy::new(
                        SicConfig { horizon: instance.horizon, variant: *variant },
                        k,
                    )),
                    AlgoSpec::DynMmab { confidence_scale } => Box::new(DynPolicy::new(
                        DynConfig {
                            personal_horizon: instance.horizon - entry,
                            confidence_scale: *confidence_scale,
                        },
                        k,
                    )),
                    AlgoSpec::SicMmab2 { mu_min, block_scale } => Box::new(Sic2Policy::new(
                        Sic2Config {
                            horizon: instance.horizon,
                            mu_min: *mu_min,
                            block_scale: *block_scale,
                        },
                        k,
                    )),
                    AlgoSpec::Selfish => Box::new(SelfishPolicy::new(k)),
                    AlgoSpec::Oracle => {
                        Box::new(FixedArm::new(oracle_assignment(&instance.means, &instance.entries)[j]))
                    }
                }
            })
            .collect()
    }
}

/// Geometric checkpoint grid: powers of two up to the horizon, plus the
/// horizon itself.
pub fn checkpoints(horizon: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut t = 1;
    while t < horizon {
        out.push(t);
        t *= 2;
    }
    out.push(horizon);
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub flagged_runs: usize,
    pub init_failure_rate: f64,
    pub checkpoints: Vec<u64>,
    /// Mean/σ of cumulative pseudo-regret at each checkpoint, flagged runs
    /// excluded.
    pub mean_regret: Vec<f64>,
    pub std_regret: Vec<f64>,
    /// Mean including flagged runs, reported separately so failures are
    /// visible rather than silently averaged in.
    pub mean_regret_all: Vec<f64>,
    pub final_regret_mean: f64,
    pub final_regret_mean_all: f64,
    /// Player-collision events attributed to the colliding player's phase.
    pub collisions_by_phase: BTreeMap<String, u64>,
    /// Frequency of each end-state exploitation map, keyed by the
    /// comma-joined per-player arm list ("-" when a player never fixed).
    pub exploit_map_counts: BTreeMap<String, usize>,
}

#[derive(Clone, Debug)]
struct RunSummary {
    run_id: usize,
    flagged: bool,
    regret_at: Vec<f64>,
    collisions_at: Vec<u64>,
    phase_at: Vec<String>,
    exploit_key: String,
    collisions_by_phase: BTreeMap<String, u64>,
    round_curve: Option<Vec<f64>>,
}

fn run_one(config: &ExperimentConfig, instance: &BanditInstance, run_id: usize) -> Result<RunSummary> {
    let seed = derive_seed(config.seed, "run", run_id as u64);
    let marks = checkpoints(instance.horizon);
    let mut policies = config.policies(instance);
    let mut phase_at = Vec::with_capacity(marks.len());
    let mut by_phase: BTreeMap<String, u64> = BTreeMap::new();
    let mut next_mark = 0usize;

    let outcome = run_episode_with(instance, &mut policies, seed, |round: &RoundResult, _| {
        for (j, pull) in round.pulls.iter().enumerate() {
            if let Some(arm) = *pull {
                if round.eta[arm] {
                    let tag =
                        round.phases[j].map(|p| p.to_string()).unwrap_or_else(|| "-".into());
                    *by_phase.entry(tag).or_insert(0) += 1;
                }
            }
        }
        if next_mark < marks.len() && round.t == marks[next_mark] {
            // Phase column tracks the first player.
            phase_at
                .push(round.phases[0].map(|p| p.to_string()).unwrap_or_else(|| "-".into()));
            next_mark += 1;
        }
    })?;

    // Regret and collision totals come from the completed ledger.
    let ledger = outcome.ledger;
    let mut regret_at = Vec::with_capacity(marks.len());
    let mut collisions_at = Vec::with_capacity(marks.len());
    let mut cum_collisions = 0u64;
    let mut prev_idx = 0usize;
    for &t in &marks {
        let idx = (t - 1) as usize;
        regret_at.push(ledger.cum_regret[idx]);
        cum_collisions += ledger.collisions[prev_idx..=idx].iter().map(|&c| c as u64).sum::<u64>();
        collisions_at.push(cum_collisions);
        prev_idx = idx + 1;
    }
    let round_curve = config.per_round.then(|| ledger.cum_regret.clone());
    let exploit_key = ledger
        .per_player_exploit_arm
        .iter()
        .map(|a| a.map(|x| x.to_string()).unwrap_or_else(|| "-".into()))
        .collect::<Vec<_>>()
        .join(",");
    Ok(RunSummary {
        run_id,
        flagged: outcome.flagged,
        regret_at,
        collisions_at,
        phase_at,
        exploit_key,
        collisions_by_phase: by_phase,
        round_curve,
    })
}

/// Executes `R` independent seeded episodes and aggregates them.
///
/// Runs may execute in any order across the worker pool; summaries are
/// reduced in run-id order, so the report is deterministic given the
/// master seed.
pub fn run_batch(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<AggregateReport> {
    if config.runs == 0 {
        bail!("runs must be >= 1");
    }
    let instance = config.instance()?;
    let mut summaries: Vec<RunSummary> = (0..config.runs)
        .into_par_iter()
        .map(|i| run_one(config, &instance, i))
        .collect::<Result<Vec<_>>>()?;
    summaries.sort_by_key(|s| s.run_id);

    let marks = checkpoints(instance.horizon);
    let n_marks = marks.len();
    let ok: Vec<&RunSummary> = summaries.iter().filter(|s| !s.flagged).collect();
    let flagged_runs = summaries.len() - ok.len();

    let mean_over = |set: &[&RunSummary], i: usize| -> f64 {
        if set.is_empty() {
            return f64::NAN;
        }
        set.iter().map(|s| s.regret_at[i]).sum::<f64>() / set.len() as f64
    };
    let all: Vec<&RunSummary> = summaries.iter().collect();
    let mut mean_regret = Vec::with_capacity(n_marks);
    let mut std_regret = Vec::with_capacity(n_marks);
    let mut mean_regret_all = Vec::with_capacity(n_marks);
    for i in 0..n_marks {
        let m = mean_over(&ok, i);
        mean_regret.push(m);
        let var = if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|s| (s.regret_at[i] - m).powi(2)).sum::<f64>() / ok.len() as f64
        };
        std_regret.push(var.sqrt());
        mean_regret_all.push(mean_over(&all, i));
    }

    let mut collisions_by_phase: BTreeMap<String, u64> = BTreeMap::new();
    let mut exploit_map_counts: BTreeMap<String, usize> = BTreeMap::new();
    for s in &summaries {
        for (k, v) in &s.collisions_by_phase {
            *collisions_by_phase.entry(k.clone()).or_insert(0) += v;
        }
        *exploit_map_counts.entry(s.exploit_key.clone()).or_insert(0) += 1;
    }

    let report = AggregateReport {
        runs: summaries.len(),
        flagged_runs,
        init_failure_rate: flagged_runs as f64 / summaries.len() as f64,
        checkpoints: marks.clone(),
        final_regret_mean: mean_regret[n_marks - 1],
        final_regret_mean_all: mean_regret_all[n_marks - 1],
        mean_regret,
        std_regret,
        mean_regret_all,
        collisions_by_phase,
        exploit_map_counts,
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_runs_csv(&dir.join("runs.csv"), &marks, &summaries)?;
        let mut f = File::create(dir.join("summary.json"))?;
        let doc = serde_json::json!({ "config": config, "report": report });
        serde_json::to_writer_pretty(&mut f, &doc)?;
        f.write_all(b"\n")?;
        if config.per_round {
            write_per_round_csv(&dir.join("per_round.csv"), &mut summaries)?;
        }
    }
    Ok(report)
}

fn write_runs_csv(path: &Path, marks: &[u64], summaries: &[RunSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["run_id", "t", "cum_regret", "collisions", "phase"])?;
    for s in summaries {
        for (i, &t) in marks.iter().enumerate() {
            let phase = if s.flagged { "flagged" } else { s.phase_at[i].as_str() };
            w.write_record([
                s.run_id.to_string(),
                t.to_string(),
                s.regret_at[i].to_string(),
                s.collisions_at[i].to_string(),
                phase.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Run-averaged cumulative regret at every round, flagged runs excluded.
fn write_per_round_csv(path: &Path, summaries: &mut [RunSummary]) -> Result<()> {
    let mut acc: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for s in summaries.iter_mut() {
        let Some(curve) = s.round_curve.take() else { continue };
        if s.flagged {
            continue;
        }
        if acc.is_empty() {
            acc = curve;
        } else {
            for (a, c) in acc.iter_mut().zip(curve) {
                *a += c;
            }
        }
        n += 1;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "mean_cum_regret"])?;
    for (i, a) in acc.iter().enumerate() {
        w.write_record([(i + 1).to_string(), (a / n.max(1) as f64).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Plot-ready tables: the regret-vs-time series of one report.
pub fn emit_plot_data(report: &AggregateReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join("regret_vs_time.csv"))?;
    w.write_record(["t", "mean_regret", "std_regret"])?;
    for (i, &t) in report.checkpoints.iter().enumerate() {
        w.write_record([
            t.to_string(),
            report.mean_regret[i].to_string(),
            report.std_regret[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Final regret as a function of the gap: rebuilds the linear means grid
/// for each gap (top mean kept, spacing scaled) and reruns the batch.
pub fn run_sweep(base: &ExperimentConfig, gaps: &[f64], out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let k = base.means.values().len();
    let top = base.means.values().iter().cloned().fold(f64::MIN, f64::max);
    let mut rows = Vec::new();
    for &gap in gaps {
        let mut cfg = base.clone();
        cfg.means = MeansSpec::Linear { from: top, to: top - gap * (k as f64 - 1.0), count: k };
        let report = run_batch(&cfg, None)?;
        rows.push((gap, report.final_regret_mean));
    }
    let mut w = csv::Writer::from_path(out_dir.join("sweep.csv"))?;
    w.write_record(["gap", "inv_gap", "final_regret_mean"])?;
    for (gap, reg) in rows {
        w.write_record([gap.to_string(), (1.0 / gap).to_string(), reg.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
