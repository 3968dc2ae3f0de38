//! The adversarial game loop: sneaky transformation, rollout validation,
//! critic judgment, and zero-sum reward assignment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::core::{Problem, Step, StepVerdict, Trajectory};
use crate::roles::{Critique, CritiqueRequest, CriticRole, SneakyRole, SneakyTransformation, SolverRole};
use crate::util::derive_seed;
use crate::validate::{harvest_correct_steps, validate_sneaky, Tier, ValidationConfig, ValidationResult};
use crate::{Error, Result};

/// The three ways a sneaky attempt can end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SneakyOutcome {
    /// The candidate step failed validation (or was malformed/identical):
    /// it does not actually break the solver.
    InvalidAttack,
    /// Valid attack, but the paired critique flagged it.
    DetectedByCritic,
    /// Valid attack that the paired critique approved.
    FooledCritic,
}

impl SneakyOutcome {
    pub fn code(self) -> &'static str {
        match self {
            SneakyOutcome::InvalidAttack => "invalid_attack",
            SneakyOutcome::DetectedByCritic => "detected_by_critic",
            SneakyOutcome::FooledCritic => "fooled_critic",
        }
    }
}

/// Which policy versions played this instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTag {
    pub sneaky_version: String,
    pub critic_version: String,
}

/// One sampled critique with its grading against the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedCritique {
    pub text: String,
    pub verdict: Option<StepVerdict>,
    pub critic_correct: bool,
    pub old_logprob: Option<f64>,
}

/// Full audit record of one game instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub instance_id: String,
    pub problem_id: String,
    pub problem_statement: String,
    pub gold_answer: String,
    pub difficulty: Tier,
    pub prefix: Trajectory,
    pub original_step: Step,
    /// Absent when the generator output was malformed.
    pub sneaky: Option<SneakyTransformation>,
    /// Absent when no well-formed candidate reached validation.
    pub validation: Option<ValidationResult>,
    /// Non-empty only for valid attacks.
    pub critiques: Vec<RecordedCritique>,
    pub r_sneaky: i32,
    pub r_critic: Vec<i32>,
    pub outcome: SneakyOutcome,
    pub round_tag: RoundTag,
    pub error: Option<String>,
}

/// Run the sneaky generator once and enforce the output contract.
pub fn run_sneaky_turn(
    problem: &Problem,
    prefix: &Trajectory,
    correct_step: &Step,
    sneaky: &dyn SneakyRole,
    seed: u64,
) -> Result<SneakyTransformation> {
    let t = sneaky.transform(problem, prefix, correct_step, seed)?;
    if t.sneaky_step.text == correct_step.text {
        return Err(Error::IdenticalStep);
    }
    Ok(t)
}

/// Sample `k_critiques` independent critiques of one step.
pub fn run_critic_turn(
    request: &CritiqueRequest,
    critic: &dyn CriticRole,
    k_critiques: usize,
    temperature: f64,
    seed: u64,
) -> Result<Vec<Critique>> {
    (0..k_critiques)
        .map(|j| critic.critique(request, temperature, derive_seed(seed, &[j as u64])))
        .collect()
}

/// Zero-sum reward assignment.
///
/// Invalid attacks cost the generator its reward and never reach the
/// critic. On valid attacks each critique earns +1 when its verdict
/// matches the truth (absent verdicts lose); the generator's reward is the
/// negation of the first critique's, keeping the pair zero-sum.
pub fn assign_rewards(
    valid: bool,
    verdicts: &[Option<StepVerdict>],
    truth: StepVerdict,
) -> Result<(i32, Vec<i32>)> {
    if !valid {
        return Ok((-1, Vec::new()));
    }
    if verdicts.is_empty() {
        return Err(Error::InconsistentInputs(
            "valid attack requires at least one critique".into(),
        ));
    }
    let r_critic: Vec<i32> = verdicts
        .iter()
        .map(|v| if *v == Some(truth) { 1 } else { -1 })
        .collect();
    Ok((-r_critic[0], r_critic))
}

/// Game-stage parameters beyond validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameConfig {
    pub validation: ValidationConfig,
    /// Critiques sampled per valid attack.
    pub k_critiques: usize,
    pub critic_temperature: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            validation: ValidationConfig::default(),
            k_critiques: 4,
            critic_temperature: 1.0,
        }
    }
}

/// Aggregate statistics of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub records: usize,
    pub outcome_counts: BTreeMap<String, usize>,
    pub sneaky_win_rate: f64,
    /// Fraction of valid attacks the sneaky side won (validated instances only).
    pub win_rate_vs_critic: f64,
    pub critic_accuracy: f64,
    pub errors: usize,
}

pub fn summarize_round(records: &[GameRecord]) -> RoundReport {
    let mut outcome_counts: BTreeMap<String, usize> = BTreeMap::new();
    for outcome in [
        SneakyOutcome::InvalidAttack,
        SneakyOutcome::DetectedByCritic,
        SneakyOutcome::FooledCritic,
    ] {
        outcome_counts.insert(outcome.code().to_string(), 0);
    }
    let mut fooled = 0usize;
    let mut valid = 0usize;
    let mut critiques = 0usize;
    let mut critic_hits = 0usize;
    let mut errors = 0usize;
    for r in records {
        *outcome_counts.entry(r.outcome.code().to_string()).or_insert(0) += 1;
        if r.outcome != SneakyOutcome::InvalidAttack {
            valid += 1;
        }
        if r.outcome == SneakyOutcome::FooledCritic {
            fooled += 1;
        }
        for c in &r.critiques {
            critiques += 1;
            if c.critic_correct {
                critic_hits += 1;
            }
        }
        if r.error.is_some() {
            errors += 1;
        }
    }
    let frac = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    RoundReport {
        records: records.len(),
        outcome_counts,
        sneaky_win_rate: frac(fooled, records.len()),
        win_rate_vs_critic: frac(fooled, valid),
        critic_accuracy: frac(critic_hits, critiques),
        errors,
    }
}

fn play_instance(
    problem: &Problem,
    difficulty: Tier,
    prefix: Trajectory,
    original_step: Step,
    instance_id: String,
    sneaky: &dyn SneakyRole,
    critic: &dyn CriticRole,
    solver: &dyn SolverRole,
    cfg: &GameConfig,
    seed: u64,
    round_tag: &RoundTag,
) -> GameRecord {
    let mut record = GameRecord {
        instance_id,
        problem_id: problem.id.clone(),
        problem_statement: problem.statement.clone(),
        gold_answer: problem.gold_answer.clone(),
        difficulty,
        prefix,
        original_step,
        sneaky: None,
        validation: None,
        critiques: Vec::new(),
        r_sneaky: -1,
        r_critic: Vec::new(),
        outcome: SneakyOutcome::InvalidAttack,
        round_tag: round_tag.clone(),
        error: None,
    };
    let transformation = match run_sneaky_turn(
        problem,
        &record.prefix,
        &record.original_step,
        sneaky,
        derive_seed(seed, &[1]),
    ) {
        Ok(t) => t,
        // Malformed or identical output: invalid attack by contract.
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    let validation = validate_sneaky(
        problem,
        &record.prefix,
        &record.original_step,
        &transformation.sneaky_step,
        solver,
        &cfg.validation,
        derive_seed(seed, &[2]),
    );
    let sneaky_step = transformation.sneaky_step.clone();
    record.sneaky = Some(transformation);
    let valid = validation.valid;
    record.validation = Some(validation);
    if !valid {
        return record;
    }
    let request = CritiqueRequest {
        problem: problem.clone(),
        prefix: record.prefix.clone(),
        step: sneaky_step,
    };
    let critiques = match run_critic_turn(
        &request,
        critic,
        cfg.k_critiques,
        cfg.critic_temperature,
        derive_seed(seed, &[3]),
    ) {
        Ok(c) => c,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    let verdicts: Vec<Option<StepVerdict>> = critiques.iter().map(|c| c.verdict).collect();
    let (r_sneaky, r_critic) = match assign_rewards(true, &verdicts, StepVerdict::Incorrect) {
        Ok(r) => r,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    record.critiques = critiques
        .into_iter()
        .zip(&r_critic)
        .map(|(c, r)| RecordedCritique {
            critic_correct: *r > 0,
            text: c.text,
            verdict: c.verdict,
            old_logprob: c.old_logprob,
        })
        .collect();
    record.r_sneaky = r_sneaky;
    record.r_critic = r_critic;
    record.outcome = if r_sneaky > 0 {
        SneakyOutcome::FooledCritic
    } else {
        SneakyOutcome::DetectedByCritic
    };
    record
}

/// Play one full round over pre-tiered problems. Instances are independent
/// and processed concurrently per problem; output order is by instance id,
/// so the record stream is deterministic.
pub fn play_round(
    problems: &[(Problem, Tier)],
    sneaky: &dyn SneakyRole,
    critic: &dyn CriticRole,
    solver: &dyn SolverRole,
    cfg: &GameConfig,
    round_tag: &RoundTag,
    seed: u64,
) -> Vec<GameRecord> {
    let mut per_problem: Vec<Vec<GameRecord>> = Vec::new();
    per_problem.resize_with(problems.len(), Vec::new);
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(problems.len());
        for (p_idx, (problem, tier)) in problems.iter().enumerate() {
            let problem_seed = derive_seed(seed, &[p_idx as u64]);
            handles.push(scope.spawn(move || {
                let harvested = match harvest_correct_steps(
                    problem,
                    *tier,
                    solver,
                    &cfg.validation,
                    derive_seed(problem_seed, &[0]),
                ) {
                    Ok(h) => h,
                    Err(_) => return Vec::new(),
                };
                harvested
                    .into_iter()
                    .enumerate()
                    .map(|(h_idx, h)| {
                        play_instance(
                            problem,
                            *tier,
                            h.prefix,
                            h.step,
                            format!("{}#{h_idx}", problem.id),
                            sneaky,
                            critic,
                            solver,
                            cfg,
                            derive_seed(problem_seed, &[1 + h_idx as u64]),
                            round_tag,
                        )
                    })
                    .collect::<Vec<_>>()
            }));
        }
        for (slot, handle) in per_problem.iter_mut().zip(handles) {
            *slot = handle.join().expect("game worker panicked");
        }
    });
    per_problem.into_iter().flatten().collect()
}
