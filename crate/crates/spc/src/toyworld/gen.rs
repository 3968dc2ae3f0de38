//! Deterministic corpus generation over the toy domain: oracle-labeled
//! step instances for critic training and probing, and step-transformation
//! pairs for sneaky initialization.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::{Problem, Step, StepVerdict, Trajectory};
use crate::roles::CritiqueRequest;
use crate::toyworld::{
    apply_perturbation, sample_problem, PerturbationAction, ToyProblem, ToyStep,
};
use crate::util::derive_seed;
use crate::Result;

/// One oracle-labeled step-judgment instance: a correct prefix and a step
/// that is either the true continuation or a perturbation of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub id: String,
    pub problem: ToyProblem,
    pub prefix: Vec<ToyStep>,
    pub step: ToyStep,
    pub truth: StepVerdict,
    /// The perturbation used, when `truth` is Incorrect.
    pub action: Option<PerturbationAction>,
}

impl LabeledInstance {
    pub fn to_request(&self) -> CritiqueRequest {
        let problem = self.problem.to_problem(&self.id);
        let mut prefix = Trajectory::empty(&problem.id);
        for s in &self.prefix {
            prefix.push_step(s.render());
        }
        CritiqueRequest {
            problem,
            prefix,
            step: Step {
                index: self.prefix.len(),
                text: self.step.render(),
            },
        }
    }
}

/// The correct chain of steps for a problem.
pub fn correct_chain(problem: &ToyProblem) -> Vec<ToyStep> {
    let mut steps = Vec::with_capacity(problem.ops.len());
    let mut value = problem.start_value;
    for op in &problem.ops {
        let rhs = op.operator.apply(value, op.operand);
        steps.push(ToyStep {
            lhs: value,
            operator: op.operator,
            operand: op.operand,
            rhs_claimed: rhs,
        });
        value = rhs;
    }
    steps
}

/// The correct step at `index` given the true chain so far.
pub fn correct_step_at(problem: &ToyProblem, index: usize) -> ToyStep {
    let value = problem.value_after(index);
    let op = problem.ops[index];
    ToyStep {
        lhs: value,
        operator: op.operator,
        operand: op.operand,
        rhs_claimed: op.operator.apply(value, op.operand),
    }
}

/// Generate `n` labeled instances, deterministically in `seed`. Roughly an
/// `incorrect_frac` fraction carries a random perturbation of the true
/// continuation; the rest are exact. Difficulties are drawn uniformly from
/// `difficulty_lo..=difficulty_hi`.
pub fn labeled_instances(
    n: usize,
    seed: u64,
    difficulty_lo: usize,
    difficulty_hi: usize,
    incorrect_frac: f64,
) -> Result<Vec<LabeledInstance>> {
    let mut out = Vec::with_capacity(n);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
    for i in 0..n {
        let difficulty = rng.gen_range(difficulty_lo..=difficulty_hi);
        let problem = sample_problem(derive_seed(seed, &[2, i as u64]), difficulty)?;
        let chain = correct_chain(&problem);
        let position = rng.gen_range(0..chain.len());
        let prefix = chain[..position].to_vec();
        let correct = chain[position];
        let corrupt = rng.gen::<f64>() < incorrect_frac;
        let (step, truth, action) = if corrupt {
            // Retry on fixed points; every step has at least one
            // non-degenerate perturbation.
            let mut chosen = None;
            for _ in 0..16 {
                let action = PerturbationAction::ALL[rng.gen_range(0..PerturbationAction::ALL.len())];
                if let Ok(perturbed) = apply_perturbation(&correct, action) {
                    chosen = Some((perturbed, action));
                    break;
                }
            }
            match chosen {
                Some((perturbed, action)) => (perturbed, StepVerdict::Incorrect, Some(action)),
                None => (correct, StepVerdict::Correct, None),
            }
        } else {
            (correct, StepVerdict::Correct, None)
        };
        out.push(LabeledInstance {
            id: format!("gen-{seed}-{i}"),
            problem,
            prefix,
            step,
            truth,
            action,
        });
    }
    Ok(out)
}

/// Like [`labeled_instances`], but incorrect steps are drawn only from
/// perturbations that keep the step arithmetically consistent. That is the
/// attack surface that survives a rechecking solver, and therefore the step
/// distribution the self-play game and guided search actually face.
pub fn consistent_labeled_instances(
    n: usize,
    seed: u64,
    difficulty_lo: usize,
    difficulty_hi: usize,
    incorrect_frac: f64,
) -> Result<Vec<LabeledInstance>> {
    let mut out = Vec::with_capacity(n);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[7]));
    for i in 0..n {
        let difficulty = rng.gen_range(difficulty_lo..=difficulty_hi);
        let problem = sample_problem(derive_seed(seed, &[8, i as u64]), difficulty)?;
        let chain = correct_chain(&problem);
        let position = rng.gen_range(0..chain.len());
        let prefix = chain[..position].to_vec();
        let correct = chain[position];
        let corrupt = rng.gen::<f64>() < incorrect_frac;
        let (step, truth, action) = if corrupt {
            let mut chosen = None;
            for _ in 0..16 {
                let action = PerturbationAction::ALL[rng.gen_range(0..PerturbationAction::ALL.len())];
                match apply_perturbation(&correct, action) {
                    Ok(perturbed) if perturbed.arithmetically_consistent() => {
                        chosen = Some((perturbed, action));
                        break;
                    }
                    _ => {}
                }
            }
            match chosen {
                Some((perturbed, action)) => (perturbed, StepVerdict::Incorrect, Some(action)),
                None => (correct, StepVerdict::Correct, None),
            }
        } else {
            (correct, StepVerdict::Correct, None)
        };
        out.push(LabeledInstance {
            id: format!("cgen-{seed}-{i}"),
            problem,
            prefix,
            step,
            truth,
            action,
        });
    }
    Ok(out)
}

/// A (context, target action) pair for initializing the sneaky policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SneakyPair {
    pub problem: ToyProblem,
    pub prefix_len: usize,
    pub step: ToyStep,
    pub action: PerturbationAction,
}

/// Generate sneaky initialization pairs with actions drawn uniformly, so
/// fitting them yields a near-uniform starting policy.
pub fn sneaky_pairs(
    n: usize,
    seed: u64,
    difficulty_lo: usize,
    difficulty_hi: usize,
) -> Result<Vec<SneakyPair>> {
    let mut out = Vec::with_capacity(n);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[3]));
    for i in 0..n {
        let difficulty = rng.gen_range(difficulty_lo..=difficulty_hi);
        let problem = sample_problem(derive_seed(seed, &[4, i as u64]), difficulty)?;
        let position = rng.gen_range(0..problem.ops.len());
        let step = correct_step_at(&problem, position);
        let action = PerturbationAction::ALL[rng.gen_range(0..PerturbationAction::ALL.len())];
        out.push(SneakyPair {
            problem,
            prefix_len: position,
            step,
            action,
        });
    }
    Ok(out)
}

/// Generate a pool of plain problems, ids `"{id_prefix}-{i}"`.
pub fn problem_pool(
    n: usize,
    seed: u64,
    difficulty_lo: usize,
    difficulty_hi: usize,
    id_prefix: &str,
) -> Result<Vec<Problem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[5]));
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let difficulty = rng.gen_range(difficulty_lo..=difficulty_hi);
        let toy = sample_problem(derive_seed(seed, &[6, i as u64]), difficulty)?;
        out.push(toy.to_problem(&format!("{id_prefix}-{i}")));
    }
    Ok(out)
}
