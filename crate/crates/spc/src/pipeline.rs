//! Round orchestration: snapshot registry, the two-round evolution
//! schedule with asymmetric matchups, dataset construction, and training
//! hand-off. All stages are seeded and resumable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::core::{Problem, Role, Step, Trajectory};
use crate::data::{
    apply_difficulty_mix, build_critic_dataset, build_sneaky_dataset, critique_correct_pool,
    CritiquedStep, DatasetManifest, TrainingSample,
};
use crate::game::{play_round, summarize_round, GameConfig, GameRecord, RoundReport, RoundTag};
use crate::toyworld::gen::{labeled_instances, problem_pool, sneaky_pairs};
use crate::toyworld::{
    CriticFeaturizer, PolicySnapshot, SneakyFeaturizer, ToyCritic, ToySneaky, ToySolver,
};
use crate::train::{
    train_round, RlConfig, SampleDecoder, ToyCriticDecoder, ToySneakyDecoder, TrainMode,
    TrainReport,
};
use crate::util::{derive_seed, read_jsonl, sha256_hex, write_json, write_jsonl};
use crate::validate::{tier_problem, Tier};
use crate::{Error, Result};

/// Where a snapshot came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub round_index: Option<usize>,
    pub base_version: Option<String>,
    pub dataset_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub role: Role,
    pub version: String,
    pub snapshot_sha256: String,
    pub provenance: Provenance,
}

/// On-disk store of policy snapshots, laid out `{role}/{version}/`.
/// Entries are immutable and hash-verified on load.
#[derive(Debug, Clone)]
pub struct SnapshotRegistry {
    root: PathBuf,
}

impl SnapshotRegistry {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(SnapshotRegistry { root })
    }

    pub fn dir(&self, role: Role, version: &str) -> PathBuf {
        self.root.join(role.code()).join(version)
    }

    pub fn exists(&self, role: Role, version: &str) -> bool {
        self.dir(role, version).join("snapshot.json").is_file()
    }

    pub fn save(
        &self,
        snapshot: &PolicySnapshot,
        version: &str,
        provenance: Provenance,
    ) -> Result<()> {
        let dir = self.dir(snapshot.role, version);
        std::fs::create_dir_all(&dir)?;
        let path = dir.join("snapshot.json");
        let bytes = {
            let mut b = serde_json::to_vec_pretty(snapshot)?;
            b.push(b'\n');
            b
        };
        if path.is_file() {
            let existing = std::fs::read(&path)?;
            if existing != bytes {
                return Err(Error::Config(format!(
                    "snapshot {}/{version} already exists with different content",
                    snapshot.role.code()
                )));
            }
            return Ok(());
        }
        std::fs::write(&path, &bytes)?;
        let manifest = SnapshotManifest {
            role: snapshot.role,
            version: version.to_string(),
            snapshot_sha256: sha256_hex(&bytes),
            provenance,
        };
        write_json(&dir.join("manifest.json"), &manifest)?;
        Ok(())
    }

    pub fn load(&self, role: Role, version: &str) -> Result<PolicySnapshot> {
        let dir = self.dir(role, version);
        let snap_path = dir.join("snapshot.json");
        if !snap_path.is_file() {
            return Err(Error::UnknownSnapshot {
                role: role.code().to_string(),
                version: version.to_string(),
            });
        }
        let bytes = std::fs::read(&snap_path)?;
        let manifest: SnapshotManifest = crate::util::read_json(&dir.join("manifest.json"))?;
        if manifest.snapshot_sha256 != sha256_hex(&bytes) {
            return Err(Error::SnapshotHashMismatch(format!(
                "{}/{version}",
                role.code()
            )));
        }
        let snap: PolicySnapshot = serde_json::from_slice(&bytes)?;
        Ok(snap)
    }

    pub fn manifest(&self, role: Role, version: &str) -> Result<SnapshotManifest> {
        crate::util::read_json(&self.dir(role, version).join("manifest.json"))
    }
}

/// One role to (re)train at the end of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTarget {
    pub role: Role,
    /// Checkpoint to start from.
    pub base_version: String,
    pub new_version: String,
    /// Which rounds' game records feed the dataset (merged).
    pub data_rounds: Vec<usize>,
}

/// Declarative description of one round: who plays, who gets trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub round_index: usize,
    pub sneaky_to_play: String,
    pub critic_to_play: String,
    pub train: Vec<TrainTarget>,
}

/// The default two-round schedule: round 1 pits the initial policies and
/// trains both; round 2 pits the new generator against the old critic and
/// retrains both from the initial checkpoints on the merged data.
pub fn default_schedule() -> Vec<RoundPlan> {
    vec![
        RoundPlan {
            round_index: 1,
            sneaky_to_play: "s0".into(),
            critic_to_play: "c0".into(),
            train: vec![
                TrainTarget {
                    role: Role::Sneaky,
                    base_version: "s0".into(),
                    new_version: "s1".into(),
                    data_rounds: vec![1],
                },
                TrainTarget {
                    role: Role::Critic,
                    base_version: "c0".into(),
                    new_version: "c1".into(),
                    data_rounds: vec![1],
                },
            ],
        },
        RoundPlan {
            round_index: 2,
            sneaky_to_play: "s1".into(),
            critic_to_play: "c0".into(),
            train: vec![
                TrainTarget {
                    role: Role::Sneaky,
                    base_version: "s0".into(),
                    new_version: "s2".into(),
                    data_rounds: vec![1, 2],
                },
                TrainTarget {
                    role: Role::Critic,
                    base_version: "c0".into(),
                    new_version: "c2".into(),
                    data_rounds: vec![1, 2],
                },
            ],
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub game: GameConfig,
    pub rl: RlConfig,
    pub problems_per_round: usize,
    pub difficulty_lo: usize,
    pub difficulty_hi: usize,
    pub critic_dataset_size: usize,
    pub sneaky_dataset_size: usize,
    /// Labeled instances for the initial behavior-cloning corpora.
    pub sft_corpus_size: usize,
    pub solver_error_rate: f64,
    pub solver_recheck_prob: f64,
    pub critic_noise_prob: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            game: GameConfig::default(),
            rl: RlConfig::default(),
            problems_per_round: 96,
            difficulty_lo: 2,
            difficulty_hi: 5,
            critic_dataset_size: 900,
            sneaky_dataset_size: 450,
            sft_corpus_size: 96,
            solver_error_rate: 0.02,
            solver_recheck_prob: 0.9,
            critic_noise_prob: 0.3,
            seed: 17,
        }
    }
}

impl PipelineConfig {
    pub fn game_solver(&self) -> ToySolver {
        ToySolver::with_error_rate(self.solver_error_rate, self.solver_recheck_prob)
    }

    pub fn critic_featurizer(&self) -> CriticFeaturizer {
        CriticFeaturizer {
            noise_prob: self.critic_noise_prob,
            noise_seed: derive_seed(self.seed, &[0xFEA7]),
        }
    }
}

/// Train the round-0 snapshots from scratch on generated corpora.
pub fn init_sft(cfg: &PipelineConfig, registry: &SnapshotRegistry) -> Result<(TrainReport, TrainReport)> {
    let seed = derive_seed(cfg.seed, &[100]);
    let featurizer = cfg.critic_featurizer();
    // Critic corpus: oracle-labeled steps at a 1:1 truth mix.
    let critic_samples: Vec<TrainingSample> =
        labeled_instances(cfg.sft_corpus_size, seed, cfg.difficulty_lo, cfg.difficulty_hi, 0.5)?
            .iter()
            .map(|inst| {
                let req = inst.to_request();
                TrainingSample {
                    role: Role::Critic,
                    input: crate::data::encode_critic_input(
                        &req.problem.statement,
                        &req.prefix,
                        &req.step,
                    ),
                    output: inst.truth.code().to_string(),
                    reward: 1.0,
                    pair_group: None,
                    old_logprob: None,
                    difficulty_tag: Tier::Medium,
                }
            })
            .collect();
    let critic_init = ToyCritic::uniform(featurizer);
    let critic_decoder = ToyCriticDecoder::new(featurizer);
    let (critic_policy, critic_report) = train_round(
        Role::Critic,
        &critic_init.policy,
        &critic_samples,
        &critic_decoder,
        &cfg.rl,
        TrainMode::Sft,
        derive_seed(seed, &[1]),
    )?;
    let mut c0 = critic_init;
    c0.policy = critic_policy;
    registry.save(&c0.to_snapshot(), "c0", Provenance::default())?;
    // Sneaky corpus: uniformly random transformation targets, giving a
    // near-uniform starting policy in the output contract format.
    let sneaky_samples: Vec<TrainingSample> =
        sneaky_pairs(cfg.sft_corpus_size, seed, cfg.difficulty_lo, cfg.difficulty_hi)?
            .iter()
            .map(|pair| {
                let step = Step {
                    index: pair.prefix_len,
                    text: pair.step.render(),
                };
                let statement = pair.problem.to_problem("sft").statement;
                let sneaky_render = crate::toyworld::apply_perturbation(&pair.step, pair.action)
                    .map(|s| s.render())
                    .unwrap_or_else(|_| pair.step.render());
                TrainingSample {
                    role: Role::Sneaky,
                    input: crate::data::encode_sneaky_input(&statement, pair.prefix_len, &step),
                    output: format!(
                        "Error type: {}\nTransformation: applied {} to `{}`\nSneaky step: {}",
                        pair.action.error_type().code(),
                        pair.action.code(),
                        step.text,
                        sneaky_render
                    ),
                    reward: 1.0,
                    pair_group: None,
                    old_logprob: None,
                    difficulty_tag: Tier::Medium,
                }
            })
            .collect();
    let sneaky_init = ToySneaky::uniform();
    let sneaky_decoder = ToySneakyDecoder {
        featurizer: SneakyFeaturizer,
    };
    let (sneaky_policy, sneaky_report) = train_round(
        Role::Sneaky,
        &sneaky_init.policy,
        &sneaky_samples,
        &sneaky_decoder,
        &cfg.rl,
        TrainMode::Sft,
        derive_seed(seed, &[2]),
    )?;
    let mut s0 = sneaky_init;
    s0.policy = sneaky_policy;
    registry.save(&s0.to_snapshot(), "s0", Provenance::default())?;
    Ok((sneaky_report, critic_report))
}

/// Check every plan against the registry (and versions earlier plans will
/// create) before anything runs.
pub fn validate_plans(plans: &[RoundPlan], registry: &SnapshotRegistry) -> Result<()> {
    let mut known: Vec<(Role, String)> = Vec::new();
    for role in [Role::Sneaky, Role::Critic] {
        for v in ["s0", "c0", "s1", "c1", "s2", "c2"] {
            if registry.exists(role, v) {
                known.push((role, v.to_string()));
            }
        }
    }
    let have = |role: Role, v: &str, known: &[(Role, String)]| {
        known.iter().any(|(r, k)| *r == role && k == v) || registry.exists(role, v)
    };
    for plan in plans {
        if !have(Role::Sneaky, &plan.sneaky_to_play, &known) {
            return Err(Error::InvalidPlan(format!(
                "round {}: unknown sneaky version {}",
                plan.round_index, plan.sneaky_to_play
            )));
        }
        if !have(Role::Critic, &plan.critic_to_play, &known) {
            return Err(Error::InvalidPlan(format!(
                "round {}: unknown critic version {}",
                plan.round_index, plan.critic_to_play
            )));
        }
        for t in &plan.train {
            if !have(t.role, &t.base_version, &known) {
                return Err(Error::InvalidPlan(format!(
                    "round {}: unknown base version {} for {:?}",
                    plan.round_index, t.base_version, t.role
                )));
            }
            known.push((t.role, t.new_version.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedVersion {
    pub role: Role,
    pub version: String,
    pub samples: usize,
    pub dataset_manifest: DatasetManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round_index: usize,
    pub sneaky_version: String,
    pub critic_version: String,
    pub game: RoundReport,
    pub trained: Vec<TrainedVersion>,
}

fn round_dir(out_dir: &Path, round_index: usize) -> PathBuf {
    out_dir.join(format!("round{round_index}"))
}

fn records_path(out_dir: &Path, round_index: usize) -> PathBuf {
    round_dir(out_dir, round_index).join("records.jsonl")
}

/// Rebuild generic problems referenced by records (statement + gold).
fn record_problem(r: &GameRecord) -> Problem {
    Problem {
        id: r.problem_id.clone(),
        statement: r.problem_statement.clone(),
        gold_answer: r.gold_answer.clone(),
        source_tag: "toyworld".to_string(),
    }
}

fn correct_pool_from_records(
    records: &[GameRecord],
    critic: &ToyCritic,
    cfg: &PipelineConfig,
    seed: u64,
) -> Vec<CritiquedStep> {
    let pool: Vec<(Problem, Tier, Trajectory, Step)> = records
        .iter()
        .map(|r| {
            (
                record_problem(r),
                r.difficulty,
                r.prefix.clone(),
                r.original_step.clone(),
            )
        })
        .collect();
    critique_correct_pool(
        &pool,
        critic,
        cfg.game.k_critiques,
        cfg.game.critic_temperature,
        seed,
    )
}

fn train_target(
    target: &TrainTarget,
    out_dir: &Path,
    registry: &SnapshotRegistry,
    played_critic: &ToyCritic,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<TrainedVersion> {
    let mut records: Vec<GameRecord> = Vec::new();
    for round in &target.data_rounds {
        records.extend(read_jsonl::<GameRecord>(&records_path(out_dir, *round))?);
    }
    let (samples, manifest) = match target.role {
        Role::Critic => {
            let pool = correct_pool_from_records(
                &records,
                played_critic,
                cfg,
                derive_seed(seed, &[1]),
            );
            build_critic_dataset(&records, &pool, cfg.critic_dataset_size, derive_seed(seed, &[2]))?
        }
        Role::Sneaky => {
            build_sneaky_dataset(&records, cfg.sneaky_dataset_size, derive_seed(seed, &[3]))?
        }
        Role::Solver => {
            return Err(Error::InvalidPlan("solver is not a trainable role here".into()))
        }
    };
    // Difficulty targeting is best-effort: when medium-tier data is scarce
    // (the toy solver finds most problems easy), meeting the target would
    // discard most of the dataset, which hurts more than an off-target mix.
    let (mixed, _mix_warnings) = apply_difficulty_mix(
        samples.clone(),
        cfg.game.validation.medium_fraction,
        derive_seed(seed, &[4]),
    );
    let samples = if mixed.len() * 2 >= samples.len() {
        mixed
    } else {
        samples
    };
    let base = registry.load(target.role, &target.base_version)?;
    let decoder: Box<dyn SampleDecoder> = match target.role {
        Role::Critic => Box::new(ToyCriticDecoder::new(
            base.featurizer
                .clone()
                .critic()
                .ok_or_else(|| Error::Config("critic snapshot lacks featurizer".into()))?,
        )),
        _ => Box::new(ToySneakyDecoder {
            featurizer: SneakyFeaturizer,
        }),
    };
    let (policy, report) = train_round(
        target.role,
        &base.policy,
        &samples,
        decoder.as_ref(),
        &cfg.rl,
        TrainMode::Rl,
        derive_seed(seed, &[5]),
    )?;
    let snapshot = PolicySnapshot::new(target.role, policy, base.featurizer.clone());
    let dataset_bytes = serde_json::to_vec(&samples)?;
    registry.save(
        &snapshot,
        &target.new_version,
        Provenance {
            round_index: None,
            base_version: Some(target.base_version.clone()),
            dataset_sha256: Some(sha256_hex(&dataset_bytes)),
        },
    )?;
    let dir = out_dir.join("datasets");
    write_jsonl(&dir.join(format!("{}.jsonl", target.new_version)), &samples)?;
    write_json(&dir.join(format!("{}.manifest.json", target.new_version)), &manifest)?;
    write_json(&dir.join(format!("{}.train.json", target.new_version)), &report)?;
    Ok(TrainedVersion {
        role: target.role,
        version: target.new_version.clone(),
        samples: samples.len(),
        dataset_manifest: manifest,
    })
}

fn run_round(
    plan: &RoundPlan,
    cfg: &PipelineConfig,
    out_dir: &Path,
    registry: &SnapshotRegistry,
) -> Result<RoundSummary> {
    let seed = derive_seed(cfg.seed, &[plan.round_index as u64]);
    let solver = cfg.game_solver();
    let pool = problem_pool(
        cfg.problems_per_round,
        derive_seed(seed, &[1]),
        cfg.difficulty_lo,
        cfg.difficulty_hi,
        &format!("r{}", plan.round_index),
    )?;
    let mut tiered: Vec<(Problem, Tier)> = Vec::new();
    for (i, p) in pool.into_iter().enumerate() {
        let tier = tier_problem(&p, &solver, &cfg.game.validation, derive_seed(seed, &[2, i as u64]));
        if tier != Tier::Unsolvable {
            tiered.push((p, tier));
        }
    }
    let sneaky = ToySneaky::from_snapshot(&registry.load(Role::Sneaky, &plan.sneaky_to_play)?)?;
    let critic =
        ToyCritic::from_snapshot(&registry.load(Role::Critic, &plan.critic_to_play)?, false)?;
    let tag = RoundTag {
        sneaky_version: plan.sneaky_to_play.clone(),
        critic_version: plan.critic_to_play.clone(),
    };
    let records = play_round(
        &tiered,
        &sneaky,
        &critic,
        &solver,
        &cfg.game,
        &tag,
        derive_seed(seed, &[3]),
    );
    let dir = round_dir(out_dir, plan.round_index);
    write_jsonl(&records_path(out_dir, plan.round_index), &records)?;
    let game_report = summarize_round(&records);
    write_json(&dir.join("game_report.json"), &game_report)?;
    let mut trained = Vec::new();
    for target in &plan.train {
        trained.push(train_target(
            target,
            out_dir,
            registry,
            &critic,
            cfg,
            derive_seed(seed, &[4, trained.len() as u64]),
        )?);
    }
    let summary = RoundSummary {
        round_index: plan.round_index,
        sneaky_version: plan.sneaky_to_play.clone(),
        critic_version: plan.critic_to_play.clone(),
        game: game_report,
        trained,
    };
    // Written last: its presence marks the round complete for resumption.
    write_json(&dir.join("report.json"), &summary)?;
    Ok(summary)
}

/// Execute a schedule. Rounds whose report file already exists are skipped
/// byte-identically, making an interrupted run resumable.
pub fn run_schedule(
    plans: &[RoundPlan],
    cfg: &PipelineConfig,
    out_dir: &Path,
    registry: &SnapshotRegistry,
) -> Result<Vec<RoundSummary>> {
    validate_plans(plans, registry)?;
    let mut summaries = Vec::new();
    for plan in plans {
        let report_path = round_dir(out_dir, plan.round_index).join("report.json");
        if report_path.is_file() {
            summaries.push(crate::util::read_json(&report_path)?);
            continue;
        }
        summaries.push(run_round(plan, cfg, out_dir, registry)?);
    }
    Ok(summaries)
}

/// Win-rate probe of one generator version against one critic version,
/// without any training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchupReport {
    pub sneaky_version: String,
    pub critic_version: String,
    pub instances: usize,
    /// Fraction of attempts that produced a validated attack.
    pub attack_success_rate: f64,
    /// Fraction of validated attacks that fooled the critic.
    pub win_rate_vs_critic: f64,
    /// Fraction of all attempts that fooled the critic.
    pub sneaky_win_rate: f64,
}

pub fn matchup_report(
    registry: &SnapshotRegistry,
    sneaky_version: &str,
    critic_version: &str,
    cfg: &PipelineConfig,
    n_problems: usize,
    seed: u64,
) -> Result<MatchupReport> {
    let sneaky = ToySneaky::from_snapshot(&registry.load(Role::Sneaky, sneaky_version)?)?;
    let critic = ToyCritic::from_snapshot(&registry.load(Role::Critic, critic_version)?, false)?;
    let solver = cfg.game_solver();
    let pool = problem_pool(
        n_problems,
        derive_seed(seed, &[1]),
        cfg.difficulty_lo,
        cfg.difficulty_hi,
        "m",
    )?;
    let tiered: Vec<(Problem, Tier)> =
        pool.into_iter().map(|p| (p, Tier::Easy)).collect();
    let tag = RoundTag {
        sneaky_version: sneaky_version.to_string(),
        critic_version: critic_version.to_string(),
    };
    let mut game_cfg = cfg.game.clone();
    game_cfg.k_critiques = 1;
    let records = play_round(
        &tiered,
        &sneaky,
        &critic,
        &solver,
        &game_cfg,
        &tag,
        derive_seed(seed, &[2]),
    );
    let report = summarize_round(&records);
    let valid = report.records - report.outcome_counts["invalid_attack"];
    Ok(MatchupReport {
        sneaky_version: sneaky_version.to_string(),
        critic_version: critic_version.to_string(),
        instances: report.records,
        attack_success_rate: if report.records == 0 {
            0.0
        } else {
            valid as f64 / report.records as f64
        },
        win_rate_vs_critic: report.win_rate_vs_critic,
        sneaky_win_rate: report.sneaky_win_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyworld::CategoricalPolicy;

    fn small_cfg() -> PipelineConfig {
        PipelineConfig {
            problems_per_round: 10,
            critic_dataset_size: 120,
            sneaky_dataset_size: 90,
            sft_corpus_size: 60,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn registry_round_trips_and_verifies() {
        let dir = tempfile::tempdir().unwrap();
        let registry = SnapshotRegistry::new(dir.path()).unwrap();
        let snap = PolicySnapshot::new(
            Role::Critic,
            CategoricalPolicy::zeros(2, vec!["correct".into(), "incorrect".into()]),
            CriticFeaturizer::default().spec(),
        );
        registry.save(&snap, "c0", Provenance::default()).unwrap();
        let back = registry.load(Role::Critic, "c0").unwrap();
        assert_eq!(back, snap);
        // Idempotent identical save, rejected divergent save.
        registry.save(&snap, "c0", Provenance::default()).unwrap();
        let mut other = snap.clone();
        other.policy.params[0] = 1.0;
        assert!(registry.save(&other, "c0", Provenance::default()).is_err());
        // Tampering is detected.
        let path = registry.dir(Role::Critic, "c0").join("snapshot.json");
        let mut text = std::fs::read_to_string(&path).unwrap();
        text = text.replace("0.0", "0.5");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            registry.load(Role::Critic, "c0"),
            Err(Error::SnapshotHashMismatch(_))
        ));
    }

    #[test]
    fn missing_snapshot_is_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let registry = SnapshotRegistry::new(dir.path()).unwrap();
        assert!(matches!(
            registry.load(Role::Sneaky, "s9"),
            Err(Error::UnknownSnapshot { .. })
        ));
    }

    #[test]
    fn plan_validation_catches_missing_versions() {
        let dir = tempfile::tempdir().unwrap();
        let registry = SnapshotRegistry::new(dir.path()).unwrap();
        let plans = default_schedule();
        assert!(matches!(
            validate_plans(&plans, &registry),
            Err(Error::InvalidPlan(_))
        ));
    }

    #[test]
    fn init_sft_registers_round_zero() {
        let dir = tempfile::tempdir().unwrap();
        let registry = SnapshotRegistry::new(dir.path()).unwrap();
        let cfg = small_cfg();
        init_sft(&cfg, &registry).unwrap();
        assert!(registry.exists(Role::Sneaky, "s0"));
        assert!(registry.exists(Role::Critic, "c0"));
        // Plans referencing the created versions now validate, including
        // versions created mid-schedule.
        validate_plans(&default_schedule(), &registry).unwrap();
    }

    #[test]
    fn init_sft_is_deterministic() {
        let cfg = small_cfg();
        let hash = |dir: &Path| {
            let registry = SnapshotRegistry::new(dir).unwrap();
            init_sft(&cfg, &registry).unwrap();
            (
                registry.manifest(Role::Sneaky, "s0").unwrap().snapshot_sha256,
                registry.manifest(Role::Critic, "c0").unwrap().snapshot_sha256,
            )
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        assert_eq!(hash(d1.path()), hash(d2.path()));
    }

    #[test]
    fn small_schedule_runs_and_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let registry = SnapshotRegistry::new(dir.path().join("registry")).unwrap();
        let out = dir.path().join("rounds");
        let cfg = small_cfg();
        init_sft(&cfg, &registry).unwrap();
        let plans = default_schedule();
        let first = run_schedule(&plans, &cfg, &out, &registry).unwrap();
        assert_eq!(first.len(), 2);
        for v in ["s1", "s2"] {
            assert!(registry.exists(Role::Sneaky, v));
        }
        for v in ["c1", "c2"] {
            assert!(registry.exists(Role::Critic, v));
        }
        // Rerun: everything already complete, summaries identical.
        let second = run_schedule(&plans, &cfg, &out, &registry).unwrap();
        assert_eq!(first, second);
    }
}
