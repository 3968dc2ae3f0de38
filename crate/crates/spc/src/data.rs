//! Balanced training-set construction from game records: paired critic
//! samples, equal three-way sneaky scenario split, difficulty mixing, and
//! generic templated SFT corpus assembly.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::{Problem, Role, Step, StepVerdict, Trajectory};
use crate::game::{GameRecord, RecordedCritique, RoundTag, SneakyOutcome};
use crate::roles::{CritiqueRequest, CriticRole};
use crate::toyworld::actors::{ToyCriticInput, ToySneakyInput};
use crate::util::derive_seed;
use crate::validate::Tier;
use crate::{Error, Result};

/// One (input, output, reward) training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub role: Role,
    /// Serialized context; samples in one pair group share this byte for byte.
    pub input: String,
    pub output: String,
    pub reward: f64,
    pub pair_group: Option<String>,
    pub old_logprob: Option<f64>,
    pub difficulty_tag: Tier,
}

/// Accounting for one constructed dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub role: Role,
    pub seed: u64,
    pub total: usize,
    pub counts: BTreeMap<String, usize>,
    pub source_round_tags: Vec<RoundTag>,
    pub warnings: Vec<String>,
}

impl DatasetManifest {
    /// Recount a sample list and compare with the recorded counts.
    pub fn verify(&self, samples: &[TrainingSample]) -> bool {
        self.total == samples.len()
    }
}

/// Shared input encoding for critic samples.
pub fn encode_critic_input(statement: &str, prefix: &Trajectory, step: &Step) -> String {
    ToyCriticInput {
        statement: statement.to_string(),
        prefix: prefix.steps.iter().map(|s| s.text.clone()).collect(),
        step: step.text.clone(),
    }
    .encode()
}

/// Shared input encoding for sneaky samples.
pub fn encode_sneaky_input(statement: &str, prefix_len: usize, step: &Step) -> String {
    ToySneakyInput {
        statement: statement.to_string(),
        prefix_len,
        step: step.text.clone(),
    }
    .encode()
}

/// A step (correct or sneaky) together with sampled critiques of it; the
/// unit from which critic samples are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiquedStep {
    pub input: String,
    pub truth: StepVerdict,
    pub difficulty: Tier,
    pub critiques: Vec<RecordedCritique>,
}

/// Critique a pool of genuine correct steps so they can be mixed into the
/// critic dataset. Each critique is graded against truth Correct.
pub fn critique_correct_pool(
    pool: &[(Problem, Tier, Trajectory, Step)],
    critic: &dyn CriticRole,
    k_critiques: usize,
    temperature: f64,
    seed: u64,
) -> Vec<CritiquedStep> {
    pool.iter()
        .enumerate()
        .map(|(i, (problem, tier, prefix, step))| {
            let request = CritiqueRequest {
                problem: problem.clone(),
                prefix: prefix.clone(),
                step: step.clone(),
            };
            let critiques = (0..k_critiques)
                .filter_map(|j| {
                    critic
                        .critique(&request, temperature, derive_seed(seed, &[i as u64, j as u64]))
                        .ok()
                })
                .map(|c| RecordedCritique {
                    critic_correct: c.verdict == Some(StepVerdict::Correct),
                    text: c.text,
                    verdict: c.verdict,
                    old_logprob: c.old_logprob,
                })
                .collect();
            CritiquedStep {
                input: encode_critic_input(&problem.statement, prefix, step),
                truth: StepVerdict::Correct,
                difficulty: *tier,
                critiques,
            }
        })
        .collect()
}

/// Extract the critiqued sneaky steps (valid attacks only) from records.
pub fn critiqued_sneaky_steps(records: &[GameRecord]) -> Vec<CritiquedStep> {
    records
        .iter()
        .filter(|r| r.outcome != SneakyOutcome::InvalidAttack)
        .filter_map(|r| {
            let sneaky = r.sneaky.as_ref()?;
            Some(CritiquedStep {
                input: encode_critic_input(&r.problem_statement, &r.prefix, &sneaky.sneaky_step),
                truth: StepVerdict::Incorrect,
                difficulty: r.difficulty,
                critiques: r.critiques.clone(),
            })
        })
        .collect()
}

fn critic_sample(
    step: &CritiquedStep,
    critique: &RecordedCritique,
    pair_group: Option<String>,
) -> Option<TrainingSample> {
    // A trainable sample needs a decodable sampled verdict.
    let verdict = critique.verdict?;
    let reward = if verdict == step.truth { 1.0 } else { -1.0 };
    Some(TrainingSample {
        role: Role::Critic,
        input: step.input.clone(),
        output: verdict.code().to_string(),
        reward,
        pair_group,
        old_logprob: critique.old_logprob,
        difficulty_tag: step.difficulty,
    })
}

/// Build one truth class: pairs first, then sign-balanced singletons.
fn class_samples(
    steps: &[CritiquedStep],
    class_target: usize,
    rng: &mut ChaCha8Rng,
    group_prefix: &str,
) -> (Vec<TrainingSample>, bool) {
    let mut pairs: Vec<(TrainingSample, TrainingSample)> = Vec::new();
    let mut pos_singles: Vec<TrainingSample> = Vec::new();
    let mut neg_singles: Vec<TrainingSample> = Vec::new();
    for (i, step) in steps.iter().enumerate() {
        let right = step
            .critiques
            .iter()
            .find(|c| c.verdict == Some(step.truth));
        let wrong = step
            .critiques
            .iter()
            .find(|c| c.verdict.is_some() && c.verdict != Some(step.truth));
        match (right, wrong) {
            (Some(r), Some(w)) => {
                let group = format!("{group_prefix}-{i}");
                let a = critic_sample(step, r, Some(group.clone()));
                let b = critic_sample(step, w, Some(group));
                if let (Some(a), Some(b)) = (a, b) {
                    pairs.push((a, b));
                }
            }
            (Some(r), None) => {
                if let Some(s) = critic_sample(step, r, None) {
                    pos_singles.push(s);
                }
            }
            (None, Some(w)) => {
                if let Some(s) = critic_sample(step, w, None) {
                    neg_singles.push(s);
                }
            }
            (None, None) => {}
        }
    }
    pairs.shuffle(rng);
    pos_singles.shuffle(rng);
    neg_singles.shuffle(rng);
    let want_pairs = (class_target / 4).min(pairs.len());
    let mut out = Vec::new();
    for (a, b) in pairs.drain(..want_pairs) {
        out.push(a);
        out.push(b);
    }
    // Fill the remainder with sign-balanced singletons; leftover pairs can
    // serve as singleton sources too.
    for (a, b) in pairs {
        pos_singles.push(a);
        neg_singles.push(b);
    }
    let remainder = class_target.saturating_sub(out.len());
    let per_sign = (remainder / 2).min(pos_singles.len()).min(neg_singles.len());
    out.extend(pos_singles.into_iter().take(per_sign));
    out.extend(neg_singles.into_iter().take(per_sign));
    let short = out.len() < class_target;
    (out, short)
}

/// Build the critic dataset: truth classes mixed 1:1, each sign-balanced,
/// with paired samples preferred.
pub fn build_critic_dataset(
    records: &[GameRecord],
    correct_pool: &[CritiquedStep],
    target_size: usize,
    seed: u64,
) -> Result<(Vec<TrainingSample>, DatasetManifest)> {
    let incorrect_steps = critiqued_sneaky_steps(records);
    if incorrect_steps.is_empty() || correct_pool.is_empty() {
        return Err(Error::EmptyPool(
            "critic dataset needs both sneaky and correct critiqued steps".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[10]));
    let class_target = target_size / 2;
    let (mut incorrect_samples, short_i) =
        class_samples(&incorrect_steps, class_target, &mut rng, "pi");
    let (mut correct_samples, short_c) =
        class_samples(correct_pool, class_target, &mut rng, "pc");
    // Keep the truth mix 1:1 even when one side came up short.
    let class_n = incorrect_samples.len().min(correct_samples.len());
    incorrect_samples.truncate(class_n);
    correct_samples.truncate(class_n);
    let mut samples = incorrect_samples;
    samples.append(&mut correct_samples);
    let mut warnings = Vec::new();
    if short_i || short_c || samples.len() < target_size {
        warnings.push(format!(
            "requested {target_size} samples, emitted {} (largest balanced subset)",
            samples.len()
        ));
    }
    let manifest = manifest_for(Role::Critic, seed, &samples, records, warnings);
    Ok((samples, manifest))
}

/// Build the sneaky dataset: the three scenarios in equal shares.
pub fn build_sneaky_dataset(
    records: &[GameRecord],
    target_size: usize,
    seed: u64,
) -> Result<(Vec<TrainingSample>, DatasetManifest)> {
    let mut by_outcome: BTreeMap<SneakyOutcome, Vec<TrainingSample>> = BTreeMap::new();
    for r in records {
        // Malformed generator output has no trainable target.
        let Some(sneaky) = r.sneaky.as_ref() else { continue };
        let reward = if r.outcome == SneakyOutcome::FooledCritic {
            1.0
        } else {
            -1.0
        };
        by_outcome.entry(r.outcome).or_default().push(TrainingSample {
            role: Role::Sneaky,
            input: encode_sneaky_input(
                &r.problem_statement,
                r.prefix.steps.len(),
                &r.original_step,
            ),
            output: sneaky.transformation_text.clone(),
            reward,
            pair_group: None,
            old_logprob: sneaky.old_logprob,
            difficulty_tag: r.difficulty,
        });
    }
    if by_outcome.is_empty() {
        return Err(Error::EmptyPool("no trainable sneaky records".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[11]));
    let per_scenario_target = target_size / 3;
    let available_min = [
        SneakyOutcome::InvalidAttack,
        SneakyOutcome::DetectedByCritic,
        SneakyOutcome::FooledCritic,
    ]
    .iter()
    .map(|o| by_outcome.get(o).map_or(0, Vec::len))
    .min()
    .unwrap_or(0);
    if available_min == 0 {
        return Err(Error::EmptyPool(
            "a sneaky scenario has no records; cannot balance".into(),
        ));
    }
    let per_scenario = per_scenario_target.min(available_min);
    let mut samples = Vec::new();
    for outcome in [
        SneakyOutcome::InvalidAttack,
        SneakyOutcome::DetectedByCritic,
        SneakyOutcome::FooledCritic,
    ] {
        let mut pool = by_outcome.remove(&outcome).unwrap_or_default();
        pool.shuffle(&mut rng);
        samples.extend(pool.into_iter().take(per_scenario));
    }
    let mut warnings = Vec::new();
    if per_scenario < per_scenario_target {
        warnings.push(format!(
            "requested {per_scenario_target} per scenario, emitted {per_scenario} (largest balanced subset)"
        ));
    }
    let manifest = manifest_for(Role::Sneaky, seed, &samples, records, warnings);
    Ok((samples, manifest))
}

fn manifest_for(
    role: Role,
    seed: u64,
    samples: &[TrainingSample],
    records: &[GameRecord],
    warnings: Vec<String>,
) -> DatasetManifest {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for s in samples {
        let sign = if s.reward > 0.0 { "positive" } else { "negative" };
        *counts.entry(sign.to_string()).or_insert(0) += 1;
        *counts.entry(format!("difficulty:{:?}", s.difficulty_tag)).or_insert(0) += 1;
        if s.pair_group.is_some() {
            *counts.entry("paired".to_string()).or_insert(0) += 1;
        }
    }
    let mut source_round_tags: Vec<RoundTag> = Vec::new();
    for r in records {
        if !source_round_tags.contains(&r.round_tag) {
            source_round_tags.push(r.round_tag.clone());
        }
    }
    DatasetManifest {
        role,
        seed,
        total: samples.len(),
        counts,
        source_round_tags,
        warnings,
    }
}

/// Rebalance a sample list toward `medium_fraction` medium difficulty,
/// within two percentage points when feasible. Best effort: infeasible
/// targets return the input with a warning.
pub fn apply_difficulty_mix(
    samples: Vec<TrainingSample>,
    medium_fraction: f64,
    seed: u64,
) -> (Vec<TrainingSample>, Vec<String>) {
    let (medium, easy): (Vec<_>, Vec<_>) = samples
        .into_iter()
        .partition(|s| s.difficulty_tag == Tier::Medium);
    let mut warnings = Vec::new();
    if medium_fraction >= 1.0 {
        if !easy.is_empty() {
            warnings.push(format!("dropped {} easy samples (fraction 1.0)", easy.len()));
        }
        return (medium, warnings);
    }
    if medium.is_empty() {
        warnings.push("no medium samples; mix target infeasible, input unchanged".into());
        return (easy, warnings);
    }
    if medium_fraction <= 0.0 {
        warnings.push(format!("dropped {} medium samples (fraction 0.0)", medium.len()));
        return (easy, warnings);
    }
    // Keep all of whichever side is the binding constraint.
    let want_easy_for_all_medium =
        (medium.len() as f64 * (1.0 - medium_fraction) / medium_fraction).round() as usize;
    let (keep_medium, keep_easy) = if want_easy_for_all_medium <= easy.len() {
        (medium.len(), want_easy_for_all_medium)
    } else {
        let keep_medium =
            (easy.len() as f64 * medium_fraction / (1.0 - medium_fraction)).round() as usize;
        (keep_medium.min(medium.len()), easy.len())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[12]));
    let mut medium = medium;
    let mut easy = easy;
    medium.shuffle(&mut rng);
    easy.shuffle(&mut rng);
    medium.truncate(keep_medium);
    easy.truncate(keep_easy);
    let total = medium.len() + easy.len();
    if total > 0 {
        let realized = medium.len() as f64 / total as f64;
        if (realized - medium_fraction).abs() > 0.02 {
            warnings.push(format!(
                "realized medium fraction {realized:.3} misses target {medium_fraction:.3}"
            ));
        }
    }
    medium.append(&mut easy);
    (medium, warnings)
}

/// A raw (fields, output) pair for SFT corpus assembly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPair {
    pub fields: BTreeMap<String, String>,
    pub output: String,
    /// Ground-truth label for critic pairs, driving the 1:1 mix.
    pub truth: Option<StepVerdict>,
    pub difficulty_tag: Tier,
}

fn fill_template(template: &str, fields: &BTreeMap<String, String>) -> Result<String> {
    let mut out = template.to_string();
    for (k, v) in fields {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    if let Some(start) = out.find('{') {
        if let Some(end) = out[start..].find('}') {
            let name = &out[start + 1..start + end];
            if name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_')
                && !name.is_empty()
            {
                return Err(Error::TemplateFieldMissing(name.to_string()));
            }
        }
    }
    Ok(out)
}

/// Assemble a behavior-cloning corpus by applying a prompt template to raw
/// pairs. Critic corpora are rebalanced to a 1:1 correct/incorrect mix.
pub fn assemble_sft_corpus(
    role: Role,
    raw_pairs: &[RawPair],
    template: &str,
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    let mut samples = Vec::with_capacity(raw_pairs.len());
    for pair in raw_pairs {
        samples.push((
            pair.truth,
            TrainingSample {
                role,
                input: fill_template(template, &pair.fields)?,
                output: pair.output.clone(),
                reward: 1.0,
                pair_group: None,
                old_logprob: None,
                difficulty_tag: pair.difficulty_tag,
            },
        ));
    }
    if role == Role::Critic {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[13]));
        let (mut correct, mut incorrect): (Vec<_>, Vec<_>) = samples
            .into_iter()
            .partition(|(t, _)| *t == Some(StepVerdict::Correct));
        correct.shuffle(&mut rng);
        incorrect.shuffle(&mut rng);
        let n = correct.len().min(incorrect.len());
        correct.truncate(n);
        incorrect.truncate(n);
        correct.append(&mut incorrect);
        return Ok(correct.into_iter().map(|(_, s)| s).collect());
    }
    Ok(samples.into_iter().map(|(_, s)| s).collect())
}
