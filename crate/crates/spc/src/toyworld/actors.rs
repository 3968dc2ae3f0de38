//! Toy role implementations: parametric solver, sneaky generator, and
//! critic over the arithmetic domain.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::GeneratedStep;
use crate::core::{Problem, Role, Step, StepVerdict, Trajectory};
use crate::roles::{Critique, CritiqueRequest, SneakyRole, SneakyTransformation, SolverRole};
use crate::toyworld::{
    apply_perturbation, CategoricalPolicy, CriticFeaturizer, FeaturizerSpec, PerturbationAction,
    PolicySnapshot, SneakyFeaturizer, SolverFeaturizer, SparseFeatures, ToyProblem, ToyStep,
};
use crate::util::derive_seed;
use crate::{Error, Result};

/// Serialized critic context; this exact JSON is the training-sample input,
/// so byte-identical inputs mean identical contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyCriticInput {
    pub statement: String,
    pub prefix: Vec<String>,
    pub step: String,
}

impl ToyCriticInput {
    pub fn from_request(request: &CritiqueRequest) -> Self {
        ToyCriticInput {
            statement: request.problem.statement.clone(),
            prefix: request.prefix.steps.iter().map(|s| s.text.clone()).collect(),
            step: request.step.text.clone(),
        }
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }

    pub fn decode(input: &str) -> Result<Self> {
        Ok(serde_json::from_str(input)?)
    }

    pub fn parse_toy(&self) -> Result<(ToyProblem, Vec<ToyStep>, ToyStep)> {
        let problem = ToyProblem::parse_statement_checked(&self.statement)?;
        let mut prefix = Vec::with_capacity(self.prefix.len());
        for text in &self.prefix {
            prefix.push(parse_toy_step(text)?);
        }
        let step = parse_toy_step(&self.step)?;
        Ok((problem, prefix, step))
    }
}

/// Serialized sneaky context (problem, prefix length, correct step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySneakyInput {
    pub statement: String,
    pub prefix_len: usize,
    pub step: String,
}

impl ToySneakyInput {
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }

    pub fn decode(input: &str) -> Result<Self> {
        Ok(serde_json::from_str(input)?)
    }

    pub fn parse_toy(&self) -> Result<(ToyProblem, ToyStep)> {
        let problem = ToyProblem::parse_statement_checked(&self.statement)?;
        let step = parse_toy_step(&self.step)?;
        Ok((problem, step))
    }
}

impl ToyProblem {
    fn parse_statement_checked(statement: &str) -> Result<Self> {
        ToyProblem::from_problem(&Problem {
            id: String::new(),
            statement: statement.to_string(),
            gold_answer: String::new(),
            source_tag: String::new(),
        })
    }
}

fn parse_toy_step(text: &str) -> Result<ToyStep> {
    ToyStep::parse(text).ok_or_else(|| Error::ParseFailure(format!("not a toy step: {text}")))
}

fn terminal_text(value: i64) -> String {
    format!("The answer is \\boxed{{{value}}}")
}

/// Parametric solver: at each position it chooses among the correct next
/// step and its consistent misapplications, so per-step error rates are
/// tunable through the policy parameters.
#[derive(Debug, Clone)]
pub struct ToySolver {
    pub policy: CategoricalPolicy,
    /// Probability that, when continuing a given prefix, an arithmetically
    /// inconsistent last step is noticed and its value silently corrected.
    /// Consistent-but-wrong operations are never noticed.
    pub recheck_prob: f64,
}

pub const SOLVER_CORRECT_ACTION: &str = "correct";

/// Mistakes the solver itself can make. It recomputes the arithmetic of
/// every step it writes — the same recheck that vets handed-over prefixes —
/// so its slips are always arithmetically consistent misapplications of the
/// operation chain, never raw calculation typos.
pub const SOLVER_ERROR_ACTIONS: [PerturbationAction; 2] = [
    PerturbationAction::WrongOperand,
    PerturbationAction::SwapOperator,
];

impl ToySolver {
    pub fn actions() -> Vec<String> {
        let mut actions = vec![SOLVER_CORRECT_ACTION.to_string()];
        actions.extend(SOLVER_ERROR_ACTIONS.iter().map(|a| a.code().to_string()));
        actions
    }

    /// Solver with the given per-step error probability, spread uniformly
    /// over its error actions.
    pub fn with_error_rate(error_rate: f64, recheck_prob: f64) -> Self {
        let mut policy = CategoricalPolicy::zeros(SolverFeaturizer::N_FEATURES, Self::actions());
        let n_errors = SOLVER_ERROR_ACTIONS.len() as f64;
        let weight = if error_rate <= 0.0 {
            30.0
        } else {
            (n_errors * (1.0 - error_rate) / error_rate).ln()
        };
        policy.params[0] = weight;
        ToySolver {
            policy,
            recheck_prob,
        }
    }

    /// Parse a rendered prefix back into toy steps, returning the running
    /// value. Terminal steps are rejected (nothing follows them).
    fn running_value(&self, toy: &ToyProblem, prefix: &Trajectory) -> Result<i64> {
        match prefix.steps.last() {
            None => Ok(toy.start_value),
            Some(last) => Ok(parse_toy_step(&last.text)?.rhs_claimed),
        }
    }

    fn candidate_step(
        &self,
        toy: &ToyProblem,
        index: usize,
        value: i64,
        temperature: f64,
        seed: u64,
    ) -> ToyStep {
        let op = toy.ops[index];
        let correct = ToyStep {
            lhs: value,
            operator: op.operator,
            operand: op.operand,
            rhs_claimed: op.operator.apply(value, op.operand),
        };
        let feats = SolverFeaturizer.features();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let choice = self.policy.sample_idx_at(&feats, temperature, &mut rng);
        if choice == 0 {
            return correct;
        }
        let action = SOLVER_ERROR_ACTIONS[choice - 1];
        // A fixed-point perturbation degenerates to the correct step.
        apply_perturbation(&correct, action).unwrap_or(correct)
    }
}

impl SolverRole for ToySolver {
    fn next_step(
        &self,
        problem: &Problem,
        prefix: &Trajectory,
        temperature: f64,
        seed: u64,
    ) -> Result<GeneratedStep> {
        let toy = ToyProblem::from_problem(problem)?;
        let index = prefix.steps.len();
        let value = self.running_value(&toy, prefix)?;
        if index >= toy.ops.len() {
            let text = terminal_text(value);
            return Ok(GeneratedStep {
                step: Step { index, text },
                terminal: true,
                final_answer: Some(value.to_string()),
            });
        }
        let step = self.candidate_step(&toy, index, value, temperature, seed);
        Ok(GeneratedStep {
            step: Step {
                index,
                text: step.render(),
            },
            terminal: false,
            final_answer: None,
        })
    }

    /// Completion applies the recheck pass to the handed-over prefix: an
    /// arithmetically inconsistent last step may be noticed and its value
    /// corrected before continuing. Self-generated steps are not rechecked.
    fn complete(
        &self,
        problem: &Problem,
        prefix: &Trajectory,
        temperature: f64,
        seed: u64,
        max_steps: usize,
    ) -> Result<Trajectory> {
        let toy = ToyProblem::from_problem(problem)?;
        let mut traj = prefix.clone();
        let mut value = self.running_value(&toy, prefix)?;
        if let Some(last) = prefix.steps.last() {
            let last_step = parse_toy_step(&last.text)?;
            if !last_step.arithmetically_consistent() {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xC0FFEE]));
                if rng.gen::<f64>() < self.recheck_prob {
                    value = last_step.exact_value();
                }
            }
        }
        for i in prefix.steps.len()..prefix.steps.len() + max_steps {
            if i >= toy.ops.len() {
                traj.push_step(terminal_text(value));
                traj.complete = true;
                traj.final_answer = Some(value.to_string());
                break;
            }
            let step = self.candidate_step(&toy, i, value, temperature, derive_seed(seed, &[i as u64]));
            value = step.rhs_claimed;
            traj.push_step(step.render());
        }
        Ok(traj)
    }
}

/// Parametric sneaky generator: a categorical over perturbation actions
/// conditioned on step features.
#[derive(Debug, Clone)]
pub struct ToySneaky {
    pub policy: CategoricalPolicy,
    pub featurizer: SneakyFeaturizer,
}

impl ToySneaky {
    pub fn actions() -> Vec<String> {
        PerturbationAction::ALL.iter().map(|a| a.code().to_string()).collect()
    }

    pub fn uniform() -> Self {
        ToySneaky {
            policy: CategoricalPolicy::zeros(SneakyFeaturizer::N_FEATURES, Self::actions()),
            featurizer: SneakyFeaturizer,
        }
    }

    pub fn to_snapshot(&self) -> PolicySnapshot {
        PolicySnapshot::new(Role::Sneaky, self.policy.clone(), FeaturizerSpec::Sneaky)
    }

    pub fn from_snapshot(snapshot: &PolicySnapshot) -> Result<Self> {
        if snapshot.role != Role::Sneaky {
            return Err(Error::Config(format!(
                "snapshot role {:?} is not sneaky",
                snapshot.role
            )));
        }
        Ok(ToySneaky {
            policy: snapshot.policy.clone(),
            featurizer: SneakyFeaturizer,
        })
    }

    pub fn features_for(
        &self,
        problem: &ToyProblem,
        prefix_len: usize,
        step: &ToyStep,
    ) -> SparseFeatures {
        self.featurizer.features(problem, prefix_len, step)
    }
}

impl SneakyRole for ToySneaky {
    fn transform(
        &self,
        problem: &Problem,
        prefix: &Trajectory,
        correct_step: &Step,
        seed: u64,
    ) -> Result<SneakyTransformation> {
        let toy = ToyProblem::from_problem(problem)?;
        let toy_step = parse_toy_step(&correct_step.text)?;
        let feats = self.features_for(&toy, prefix.steps.len(), &toy_step);
        let choice = self.policy.sample_seeded(&feats, seed);
        let action = PerturbationAction::ALL[choice];
        let old_logprob = Some(self.policy.log_prob_idx(&feats, choice));
        // A fixed-point perturbation yields an identical step; the game
        // layer rejects it as an invalid attack, which is the learning
        // signal for avoiding that action.
        let sneaky = apply_perturbation(&toy_step, action).unwrap_or(toy_step);
        let sneaky_text = sneaky.render();
        let transformation_text = format!(
            "Error type: {}\nTransformation: applied {} to `{}`\nSneaky step: {}",
            action.error_type().code(),
            action.code(),
            correct_step.text,
            sneaky_text
        );
        Ok(SneakyTransformation {
            error_type: action.error_type(),
            transformation_text,
            sneaky_step: Step {
                index: correct_step.index,
                text: sneaky_text,
            },
            old_logprob,
        })
    }
}

/// Parametric critic: a categorical over {correct, incorrect} on
/// hand-crafted step features.
#[derive(Debug, Clone)]
pub struct ToyCritic {
    pub policy: CategoricalPolicy,
    pub featurizer: CriticFeaturizer,
    /// When set, critiques use the most probable verdict instead of
    /// sampling; evaluation and search guidance want this.
    pub deterministic: bool,
}

impl ToyCritic {
    pub fn actions() -> Vec<String> {
        CriticFeaturizer::ACTIONS.iter().map(|s| s.to_string()).collect()
    }

    pub fn uniform(featurizer: CriticFeaturizer) -> Self {
        ToyCritic {
            policy: CategoricalPolicy::zeros(CriticFeaturizer::N_FEATURES, Self::actions()),
            featurizer,
            deterministic: false,
        }
    }

    /// Deterministic critic with hand-set weights that reproduce the exact
    /// decision rule whenever the discriminative features are unmasked:
    /// flag arithmetic inconsistency, flag operator or operand mismatch,
    /// otherwise accept with a margin.
    pub fn hand_weighted() -> Self {
        let mut critic = ToyCritic::uniform(CriticFeaturizer {
            noise_prob: 0.0,
            noise_seed: 0,
        });
        critic.deterministic = true;
        let n = critic.policy.n_actions();
        let incorrect = critic.policy.action_index("incorrect").unwrap();
        let correct = critic.policy.action_index("correct").unwrap();
        // Inconsistency bit (0 or 1) strongly indicates an error.
        critic.policy.params[2 * n + incorrect] = 30.0;
        // Match bits (+1/-1): a mismatch flips the sign and wins against
        // the acceptance margin below.
        critic.policy.params[3 * n + incorrect] = -10.0;
        critic.policy.params[4 * n + incorrect] = -10.0;
        critic.policy.params[correct] = -5.0;
        critic
    }

    pub fn to_snapshot(&self) -> PolicySnapshot {
        PolicySnapshot::new(Role::Critic, self.policy.clone(), self.featurizer.spec())
    }

    pub fn from_snapshot(snapshot: &PolicySnapshot, deterministic: bool) -> Result<Self> {
        let featurizer = snapshot
            .featurizer
            .clone()
            .critic()
            .ok_or_else(|| Error::Config("snapshot does not carry a critic featurizer".into()))?;
        if snapshot.role != Role::Critic {
            return Err(Error::Config(format!(
                "snapshot role {:?} is not critic",
                snapshot.role
            )));
        }
        Ok(ToyCritic {
            policy: snapshot.policy.clone(),
            featurizer,
            deterministic,
        })
    }

    fn verdict_index(&self, feats: &SparseFeatures, temperature: f64, seed: u64) -> usize {
        if self.deterministic || temperature <= 0.0 {
            self.policy.argmax(feats)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            self.policy.sample_idx_at(feats, temperature, &mut rng)
        }
    }
}

impl crate::roles::CriticRole for ToyCritic {
    fn critique(
        &self,
        request: &CritiqueRequest,
        temperature: f64,
        seed: u64,
    ) -> Result<Critique> {
        let input = ToyCriticInput::from_request(request);
        let (problem, prefix, step) = match input.parse_toy() {
            Ok(parsed) => parsed,
            // Unparseable step under review: no definite conclusion.
            Err(_) => {
                return Ok(Critique {
                    text: "The step could not be interpreted.".to_string(),
                    verdict: None,
                    old_logprob: None,
                })
            }
        };
        let feats = self.featurizer.features(&problem, &prefix, &step);
        let idx = self.verdict_index(&feats, temperature, seed);
        let verdict = if CriticFeaturizer::ACTIONS[idx] == "correct" {
            StepVerdict::Correct
        } else {
            StepVerdict::Incorrect
        };
        let text = format!(
            "The step claims {}. Conclusion: the step is {}.",
            step.render(),
            verdict.code()
        );
        Ok(Critique {
            text,
            verdict: Some(verdict),
            old_logprob: Some(self.policy.log_prob_idx(&feats, idx)),
        })
    }
}

/// Critic that consults the exact arithmetic oracle. Useful as a
/// perfect-detection reference in tests and benchmarks.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleCritic;

impl crate::roles::CriticRole for OracleCritic {
    fn critique(&self, request: &CritiqueRequest, _: f64, _: u64) -> Result<Critique> {
        let verdict = (|| {
            let input = ToyCriticInput::from_request(request);
            let (problem, prefix, step) = input.parse_toy().ok()?;
            crate::toyworld::oracle_check(&step, &prefix, &problem).ok()
        })();
        Ok(Critique {
            text: match verdict {
                Some(v) => format!("Conclusion: the step is {}.", v.code()),
                None => "The step could not be interpreted.".to_string(),
            },
            verdict,
            old_logprob: None,
        })
    }
}
