//! Step-level critic benchmarking: probe construction from annotated
//! solution corpora, recall metrics, and solver solve-rate scoring.

use serde::{Deserialize, Serialize};

use crate::core::{canonicalize_answer, Problem, Step, StepVerdict, Trajectory};
use crate::roles::{CritiqueRequest, CriticRole};
use crate::toyworld::gen::LabeledInstance;
use crate::util::derive_seed;
use crate::{Error, Result};

/// One annotated solution from a benchmark corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub problem: String,
    #[serde(default)]
    pub gold_answer: Option<String>,
    pub steps: Vec<String>,
    /// Per-step correctness labels (1 = correct); mutually optional with
    /// `first_error_index`.
    #[serde(default)]
    pub labels: Option<Vec<u8>>,
    #[serde(default)]
    pub first_error_index: Option<usize>,
    #[serde(default)]
    pub source_tag: Option<String>,
}

/// How error annotations translate into probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeSemantics {
    /// Only the first annotated error per solution becomes a probe.
    FirstError,
    /// Every annotated error becomes a probe (prefix truncated before it).
    AllErrors,
}

/// One step-judgment probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub problem: Problem,
    pub prefix: Vec<String>,
    pub probe_step: String,
    pub truth: StepVerdict,
    pub source_tag: String,
}

impl ProbeRecord {
    pub fn to_request(&self) -> CritiqueRequest {
        let mut prefix = Trajectory::empty(&self.problem.id);
        for s in &self.prefix {
            prefix.push_step(s.clone());
        }
        CritiqueRequest {
            problem: self.problem.clone(),
            prefix,
            step: Step {
                index: self.prefix.len(),
                text: self.probe_step.clone(),
            },
        }
    }
}

/// Convert oracle-labeled toy instances into probes.
pub fn probes_from_labeled(instances: &[LabeledInstance]) -> Vec<ProbeRecord> {
    instances
        .iter()
        .map(|inst| ProbeRecord {
            problem: inst.problem.to_problem(&inst.id),
            prefix: inst.prefix.iter().map(|s| s.render()).collect(),
            probe_step: inst.step.render(),
            truth: inst.truth,
            source_tag: "toyworld".to_string(),
        })
        .collect()
}

fn first_error_of(record: &CorpusRecord) -> Result<Option<usize>> {
    if let Some(idx) = record.first_error_index {
        if idx >= record.steps.len() {
            return Err(Error::UnlabeledRecord(format!(
                "{}: first_error_index {idx} out of range",
                record.id
            )));
        }
        return Ok(Some(idx));
    }
    match &record.labels {
        Some(labels) if labels.len() == record.steps.len() => {
            Ok(labels.iter().position(|&l| l == 0))
        }
        _ => Err(Error::UnlabeledRecord(record.id.clone())),
    }
}

fn error_indices(record: &CorpusRecord, semantics: ProbeSemantics) -> Result<Vec<usize>> {
    match semantics {
        ProbeSemantics::FirstError => Ok(first_error_of(record)?.into_iter().collect()),
        ProbeSemantics::AllErrors => match &record.labels {
            Some(labels) if labels.len() == record.steps.len() => Ok(labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == 0)
                .map(|(i, _)| i)
                .collect()),
            _ => Ok(first_error_of(record)?.into_iter().collect()),
        },
    }
}

/// Build a 1:1 correct/error probe set from an annotated corpus. Erroneous
/// solutions contribute their annotated error step(s) with the prefix
/// strictly before; correct solutions contribute one uniformly sampled
/// step. The larger side is down-sampled, seeded. Returns the probes and
/// the number of skipped unlabeled records.
pub fn build_probes(
    corpus: &[CorpusRecord],
    semantics: ProbeSemantics,
    seed: u64,
) -> (Vec<ProbeRecord>, usize) {
    let mut error_probes = Vec::new();
    let mut correct_probes = Vec::new();
    let mut skipped = 0usize;
    for (r_idx, record) in corpus.iter().enumerate() {
        if record.steps.is_empty() {
            skipped += 1;
            continue;
        }
        let problem = Problem {
            id: record.id.clone(),
            statement: record.problem.clone(),
            gold_answer: record.gold_answer.clone().unwrap_or_default(),
            source_tag: record.source_tag.clone().unwrap_or_default(),
        };
        let indices = match error_indices(record, semantics) {
            Ok(v) => v,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        if indices.is_empty() {
            // Fully correct solution: sample one step.
            let pick = derive_seed(seed, &[1, r_idx as u64]) % record.steps.len() as u64;
            let k = pick as usize;
            correct_probes.push(ProbeRecord {
                problem,
                prefix: record.steps[..k].to_vec(),
                probe_step: record.steps[k].clone(),
                truth: StepVerdict::Correct,
                source_tag: record.source_tag.clone().unwrap_or_default(),
            });
        } else {
            for k in indices {
                error_probes.push(ProbeRecord {
                    problem: problem.clone(),
                    prefix: record.steps[..k].to_vec(),
                    probe_step: record.steps[k].clone(),
                    truth: StepVerdict::Incorrect,
                    source_tag: record.source_tag.clone().unwrap_or_default(),
                });
            }
        }
    }
    // Seeded down-sample of the larger side to a 1:1 mix.
    let n = error_probes.len().min(correct_probes.len());
    seeded_downsample(&mut error_probes, n, derive_seed(seed, &[2]));
    seeded_downsample(&mut correct_probes, n, derive_seed(seed, &[3]));
    let mut probes = error_probes;
    probes.append(&mut correct_probes);
    (probes, skipped)
}

fn seeded_downsample<T>(items: &mut Vec<T>, n: usize, seed: u64) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    if items.len() <= n {
        return;
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
    items.truncate(n);
}

/// Recall metrics as percentages, with their two summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall_correct: f64,
    pub recall_error: f64,
    pub average: f64,
    pub harmonic_mean: f64,
    pub correct_probes: usize,
    pub error_probes: usize,
    pub correct_hits: usize,
    pub error_hits: usize,
}

/// Average and harmonic mean of two recall percentages.
pub fn summary_metrics(recall_correct: f64, recall_error: f64) -> (f64, f64) {
    let average = (recall_correct + recall_error) / 2.0;
    let harmonic = if recall_correct + recall_error == 0.0 {
        0.0
    } else {
        2.0 * recall_correct * recall_error / (recall_correct + recall_error)
    };
    (average, harmonic)
}

pub fn eval_report_from_counts(
    correct_probes: usize,
    correct_hits: usize,
    error_probes: usize,
    error_hits: usize,
) -> EvalReport {
    let pct = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            100.0 * num as f64 / den as f64
        }
    };
    let recall_correct = pct(correct_hits, correct_probes);
    let recall_error = pct(error_hits, error_probes);
    let (average, harmonic_mean) = summary_metrics(recall_correct, recall_error);
    EvalReport {
        recall_correct,
        recall_error,
        average,
        harmonic_mean,
        correct_probes,
        error_probes,
        correct_hits,
        error_hits,
    }
}

/// Run a critic over a probe set and score recall per truth class.
/// Critiques without a parseable verdict count as misses.
pub fn evaluate_critic(
    probes: &[ProbeRecord],
    critic: &dyn CriticRole,
    seed: u64,
) -> EvalReport {
    let mut verdicts: Vec<Option<StepVerdict>> = vec![None; probes.len()];
    std::thread::scope(|scope| {
        let chunk = probes.len().div_ceil(8).max(1);
        let mut handles = Vec::new();
        for (c_idx, probe_chunk) in probes.chunks(chunk).enumerate() {
            handles.push(scope.spawn(move || {
                probe_chunk
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let s = derive_seed(seed, &[(c_idx * chunk + i) as u64]);
                        critic
                            .critique(&p.to_request(), 0.0, s)
                            .ok()
                            .and_then(|c| c.verdict)
                    })
                    .collect::<Vec<_>>()
            }));
        }
        let mut offset = 0;
        for handle in handles {
            let part = handle.join().expect("eval worker panicked");
            verdicts[offset..offset + part.len()].clone_from_slice(&part);
            offset += part.len();
        }
    });
    let mut correct_probes = 0;
    let mut correct_hits = 0;
    let mut error_probes = 0;
    let mut error_hits = 0;
    for (p, v) in probes.iter().zip(&verdicts) {
        match p.truth {
            StepVerdict::Correct => {
                correct_probes += 1;
                if *v == Some(StepVerdict::Correct) {
                    correct_hits += 1;
                }
            }
            StepVerdict::Incorrect => {
                error_probes += 1;
                if *v == Some(StepVerdict::Incorrect) {
                    error_hits += 1;
                }
            }
        }
    }
    eval_report_from_counts(correct_probes, correct_hits, error_probes, error_hits)
}

/// Verdict accuracy over a probe set (hits over all probes).
pub fn critic_accuracy(probes: &[ProbeRecord], critic: &dyn CriticRole, seed: u64) -> f64 {
    let report = evaluate_critic(probes, critic, seed);
    let hits = report.correct_hits + report.error_hits;
    let total = report.correct_probes + report.error_probes;
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Solve-rate percentage over canonical answer comparison.
pub fn score_solver_benchmark(problems: &[Problem], answers: &[String]) -> f64 {
    assert_eq!(problems.len(), answers.len());
    if problems.is_empty() {
        return 0.0;
    }
    let hits = problems
        .iter()
        .zip(answers)
        .filter(|(p, a)| {
            let c = canonicalize_answer(a);
            !c.is_empty() && c == canonicalize_answer(&p.gold_answer)
        })
        .count();
    100.0 * hits as f64 / problems.len() as f64
}

/// Mean solve rate over repeated runs.
pub fn mean_solve_rate(per_run: &[f64]) -> f64 {
    if per_run.is_empty() {
        0.0
    } else {
        per_run.iter().sum::<f64>() / per_run.len() as f64
    }
}
