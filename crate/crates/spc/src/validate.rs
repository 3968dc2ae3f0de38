//! Rollout-based validation of candidate incorrect steps and problem
//! difficulty tiering.
//!
//! A candidate is valid when completions from the original step almost
//! always succeed while completions from the substituted step never do,
//! demonstrating the substitution actually breaks the solution.

use serde::{Deserialize, Serialize};

use crate::core::{canonicalize_answer, is_terminal_step, Problem, Step, Trajectory};
use crate::roles::SolverRole;
use crate::toyworld::{oracle_check, ToyProblem, ToyStep};
use crate::util::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    /// Completions per side when validating a candidate step.
    pub n_completions: usize,
    /// Minimum success rate from the original step.
    pub original_min_success: f64,
    /// Maximum success rate from the substituted step.
    pub sneaky_max_success: f64,
    /// Solutions pre-generated per problem for tiering.
    pub pregen_solutions: usize,
    /// Success counts (out of `pregen_solutions`) classed as medium.
    pub medium_band: Vec<usize>,
    /// Success counts classed as easy.
    pub easy_band: Vec<usize>,
    /// Target fraction of medium-difficulty data.
    pub medium_fraction: f64,
    /// Solutions generated for harvesting on medium problems.
    pub medium_resample: usize,
    pub max_steps: usize,
    pub temperature: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            n_completions: 8,
            original_min_success: 0.75,
            sneaky_max_success: 0.0,
            pregen_solutions: 4,
            medium_band: vec![1, 2],
            easy_band: vec![3, 4],
            medium_fraction: 0.9,
            medium_resample: 16,
            max_steps: 64,
            temperature: 1.0,
        }
    }
}

impl ValidationConfig {
    pub fn check(&self) -> Result<()> {
        if self.n_completions == 0 || self.pregen_solutions == 0 {
            return Err(Error::Config("rollout counts must be positive".into()));
        }
        if self.sneaky_max_success >= self.original_min_success {
            return Err(Error::Config(
                "sneaky_max_success must be below original_min_success".into(),
            ));
        }
        if self.medium_band.iter().any(|c| self.easy_band.contains(c)) {
            return Err(Error::Config("difficulty bands must be disjoint".into()));
        }
        Ok(())
    }
}

/// Outcome of one validation run: success counts on both sides plus the
/// per-rollout final answers as an audit trail (None when a rollout failed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub original_successes: usize,
    pub sneaky_successes: usize,
    pub n: usize,
    pub valid: bool,
    pub original_answers: Vec<Option<String>>,
    pub sneaky_answers: Vec<Option<String>>,
}

/// The pure threshold rule over clean counts.
pub fn validity_rule(
    original_successes: usize,
    sneaky_successes: usize,
    n: usize,
    cfg: &ValidationConfig,
) -> bool {
    if n == 0 {
        return false;
    }
    let original_rate = original_successes as f64 / n as f64;
    let sneaky_rate = sneaky_successes as f64 / n as f64;
    original_rate >= cfg.original_min_success && sneaky_rate <= cfg.sneaky_max_success
}

fn answer_matches(final_answer: Option<&str>, gold: &str) -> bool {
    match final_answer {
        Some(a) => {
            let c = canonicalize_answer(a);
            !c.is_empty() && c == canonicalize_answer(gold)
        }
        None => false,
    }
}

/// Run `n` completions from `prefix` with per-index seeds, concurrently.
/// Returns per-rollout final answers in index order.
fn rollout_answers(
    problem: &Problem,
    prefix: &Trajectory,
    solver: &dyn SolverRole,
    n: usize,
    seed: u64,
    cfg: &ValidationConfig,
) -> Vec<Option<String>> {
    let mut answers: Vec<Option<String>> = vec![None; n];
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(n);
        for i in 0..n {
            let rollout_seed = derive_seed(seed, &[i as u64]);
            handles.push(scope.spawn(move || {
                solver
                    .complete(problem, prefix, cfg.temperature, rollout_seed, cfg.max_steps)
                    .ok()
                    .and_then(|t| t.final_answer)
            }));
        }
        for (slot, handle) in answers.iter_mut().zip(handles) {
            *slot = handle.join().unwrap_or(None);
        }
    });
    answers
}

/// Validate a candidate step by comparing rollout success rates from the
/// original and the substituted step. Failed rollouts count toward neither
/// side; a side with any failed rollout cannot certify validity.
pub fn validate_sneaky(
    problem: &Problem,
    prefix: &Trajectory,
    original_step: &Step,
    sneaky_step: &Step,
    solver: &dyn SolverRole,
    cfg: &ValidationConfig,
    seed: u64,
) -> ValidationResult {
    let n = cfg.n_completions;
    let original_prefix = prefix.extended(&original_step.text);
    let sneaky_prefix = prefix.extended(&sneaky_step.text);
    let original_answers = rollout_answers(
        problem,
        &original_prefix,
        solver,
        n,
        derive_seed(seed, &[1]),
        cfg,
    );
    let sneaky_answers = rollout_answers(
        problem,
        &sneaky_prefix,
        solver,
        n,
        derive_seed(seed, &[2]),
        cfg,
    );
    let count = |answers: &[Option<String>]| {
        answers
            .iter()
            .filter(|a| answer_matches(a.as_deref(), &problem.gold_answer))
            .count()
    };
    let original_successes = count(&original_answers);
    let sneaky_successes = count(&sneaky_answers);
    let clean = original_answers.iter().all(Option::is_some)
        && sneaky_answers.iter().all(Option::is_some);
    let valid = clean && validity_rule(original_successes, sneaky_successes, n, cfg);
    ValidationResult {
        original_successes,
        sneaky_successes,
        n,
        valid,
        original_answers,
        sneaky_answers,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tier {
    Unsolvable,
    Medium,
    Easy,
}

/// Classify a problem by how many of `pregen_solutions` fresh completions
/// succeed.
pub fn tier_problem(
    problem: &Problem,
    solver: &dyn SolverRole,
    cfg: &ValidationConfig,
    seed: u64,
) -> Tier {
    let answers = rollout_answers(
        problem,
        &Trajectory::empty(&problem.id),
        solver,
        cfg.pregen_solutions,
        derive_seed(seed, &[3]),
        cfg,
    );
    let successes = answers
        .iter()
        .filter(|a| answer_matches(a.as_deref(), &problem.gold_answer))
        .count();
    tier_from_successes(successes, cfg)
}

pub fn tier_from_successes(successes: usize, cfg: &ValidationConfig) -> Tier {
    if successes == 0 {
        Tier::Unsolvable
    } else if cfg.medium_band.contains(&successes) {
        Tier::Medium
    } else {
        Tier::Easy
    }
}

/// A harvested correct step with the prefix strictly before it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestedStep {
    pub prefix: Trajectory,
    pub step: Step,
}

/// Harvest one correct step per successful solution. Easy problems reuse
/// the tiering solutions (regenerated from the same seeds); medium problems
/// draw a larger fresh batch. Toy steps are additionally checked against
/// the exact oracle.
pub fn harvest_correct_steps(
    problem: &Problem,
    tier: Tier,
    solver: &dyn SolverRole,
    cfg: &ValidationConfig,
    seed: u64,
) -> Result<Vec<HarvestedStep>> {
    let (count, batch_seed) = match tier {
        Tier::Unsolvable => {
            return Err(Error::NoCorrectSolutions(problem.id.clone()));
        }
        Tier::Easy => (cfg.pregen_solutions, derive_seed(seed, &[3])),
        Tier::Medium => (cfg.medium_resample, derive_seed(seed, &[4])),
    };
    let empty = Trajectory::empty(&problem.id);
    let mut solutions: Vec<Option<Trajectory>> = vec![None; count];
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(count);
        for i in 0..count {
            let rollout_seed = derive_seed(batch_seed, &[i as u64]);
            let empty = &empty;
            handles.push(scope.spawn(move || {
                solver
                    .complete(problem, empty, cfg.temperature, rollout_seed, cfg.max_steps)
                    .ok()
            }));
        }
        for (slot, handle) in solutions.iter_mut().zip(handles) {
            *slot = handle.join().unwrap_or(None);
        }
    });
    let toy = ToyProblem::from_problem(problem).ok();
    let mut out = Vec::new();
    for (i, solution) in solutions.into_iter().enumerate() {
        let Some(solution) = solution else { continue };
        if !answer_matches(solution.final_answer.as_deref(), &problem.gold_answer) {
            continue;
        }
        let candidates: Vec<usize> = solution
            .steps
            .iter()
            .enumerate()
            .filter(|(_, s)| !is_terminal_step(&s.text))
            .map(|(k, _)| k)
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let pick_seed = derive_seed(seed, &[5, i as u64]);
        let k = candidates[(pick_seed % candidates.len() as u64) as usize];
        if let Some(toy) = &toy {
            let parse = |s: &Step| ToyStep::parse(&s.text);
            let prefix: Option<Vec<ToyStep>> =
                solution.steps[..k].iter().map(parse).collect();
            let step = parse(&solution.steps[k]);
            let verified = match (prefix, step) {
                (Some(prefix), Some(step)) => {
                    oracle_check(&step, &prefix, toy).ok()
                        == Some(crate::core::StepVerdict::Correct)
                }
                _ => false,
            };
            if !verified {
                continue;
            }
        }
        let mut prefix = Trajectory::empty(&problem.id);
        for s in &solution.steps[..k] {
            prefix.push_step(s.text.clone());
        }
        out.push(HarvestedStep {
            prefix,
            step: solution.steps[k].clone(),
        });
    }
    if out.is_empty() {
        return Err(Error::NoCorrectSolutions(problem.id.clone()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyworld::gen::correct_step_at;
    use crate::toyworld::{apply_perturbation, sample_problem, PerturbationAction, ToySolver};

    fn toy_setup() -> (Problem, ToySolver) {
        let toy = sample_problem(21, 3).unwrap();
        (toy.to_problem("v-21"), ToySolver::with_error_rate(0.0, 0.9))
    }

    #[test]
    fn threshold_examples() {
        let cfg = ValidationConfig::default();
        assert!(validity_rule(6, 0, 8, &cfg));
        assert!(!validity_rule(5, 0, 8, &cfg));
        assert!(!validity_rule(8, 1, 8, &cfg));
    }

    #[test]
    fn default_config_is_coherent() {
        ValidationConfig::default().check().unwrap();
        let mut bad = ValidationConfig::default();
        bad.sneaky_max_success = 0.8;
        assert!(bad.check().is_err());
    }

    #[test]
    fn consistent_perturbation_validates_inconsistent_does_not() {
        let (problem, solver) = toy_setup();
        let toy = crate::toyworld::ToyProblem::from_problem(&problem).unwrap();
        let correct = correct_step_at(&toy, 0);
        let cfg = ValidationConfig::default();
        let prefix = Trajectory::empty(&problem.id);
        let original = Step {
            index: 0,
            text: correct.render(),
        };
        // Wrong operand: arithmetically consistent, survives the recheck.
        let consistent = apply_perturbation(&correct, PerturbationAction::WrongOperand).unwrap();
        let r = validate_sneaky(
            &problem,
            &prefix,
            &original,
            &Step {
                index: 0,
                text: consistent.render(),
            },
            &solver,
            &cfg,
            7,
        );
        assert_eq!(r.original_successes, 8);
        assert_eq!(r.sneaky_successes, 0);
        assert!(r.valid);
        // Off by one: inconsistent, usually corrected by the recheck, so
        // sneaky-side completions mostly still succeed.
        let inconsistent = apply_perturbation(&correct, PerturbationAction::OffByOne).unwrap();
        let r = validate_sneaky(
            &problem,
            &prefix,
            &original,
            &Step {
                index: 0,
                text: inconsistent.render(),
            },
            &solver,
            &cfg,
            7,
        );
        assert!(r.sneaky_successes > 0);
        assert!(!r.valid);
    }

    #[test]
    fn validation_is_deterministic() {
        let (problem, solver) = toy_setup();
        let toy = crate::toyworld::ToyProblem::from_problem(&problem).unwrap();
        let correct = correct_step_at(&toy, 1);
        let sneaky = apply_perturbation(&correct, PerturbationAction::SwapOperator).unwrap();
        let mut prefix = Trajectory::empty(&problem.id);
        prefix.push_step(correct_step_at(&toy, 0).render());
        let original = Step {
            index: 1,
            text: correct.render(),
        };
        let s = Step {
            index: 1,
            text: sneaky.render(),
        };
        let cfg = ValidationConfig::default();
        let a = validate_sneaky(&problem, &prefix, &original, &s, &solver, &cfg, 3);
        let b = validate_sneaky(&problem, &prefix, &original, &s, &solver, &cfg, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn perfect_solver_tiers_easy() {
        let (problem, solver) = toy_setup();
        let cfg = ValidationConfig::default();
        assert_eq!(tier_problem(&problem, &solver, &cfg, 1), Tier::Easy);
    }

    #[test]
    fn failing_solver_tiers_unsolvable() {
        let (problem, _) = toy_setup();
        let solver = ToySolver::with_error_rate(1.0, 0.0);
        let cfg = ValidationConfig::default();
        assert_eq!(tier_problem(&problem, &solver, &cfg, 1), Tier::Unsolvable);
    }

    #[test]
    fn tier_bands() {
        let cfg = ValidationConfig::default();
        assert_eq!(tier_from_successes(0, &cfg), Tier::Unsolvable);
        assert_eq!(tier_from_successes(2, &cfg), Tier::Medium);
        assert_eq!(tier_from_successes(4, &cfg), Tier::Easy);
    }

    #[test]
    fn harvest_easy_reuses_pregenerated_solutions() {
        let (problem, solver) = toy_setup();
        let cfg = ValidationConfig::default();
        let steps = harvest_correct_steps(&problem, Tier::Easy, &solver, &cfg, 5).unwrap();
        assert!(!steps.is_empty());
        assert!(steps.len() <= cfg.pregen_solutions);
        for h in &steps {
            assert_eq!(h.step.index, h.prefix.steps.len());
            assert!(!is_terminal_step(&h.step.text));
        }
    }

    #[test]
    fn harvest_medium_draws_larger_batch() {
        let (problem, _) = toy_setup();
        let solver = ToySolver::with_error_rate(0.3, 0.9);
        let cfg = ValidationConfig::default();
        let steps = harvest_correct_steps(&problem, Tier::Medium, &solver, &cfg, 5).unwrap();
        assert!(steps.len() <= cfg.medium_resample);
        // Deterministic in seed.
        let again = harvest_correct_steps(&problem, Tier::Medium, &solver, &cfg, 5).unwrap();
        assert_eq!(steps, again);
    }

    #[test]
    fn harvest_unsolvable_is_an_error() {
        let (problem, solver) = toy_setup();
        let cfg = ValidationConfig::default();
        assert!(matches!(
            harvest_correct_steps(&problem, Tier::Unsolvable, &solver, &cfg, 5),
            Err(Error::NoCorrectSolutions(_))
        ));
    }
}
