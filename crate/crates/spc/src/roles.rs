//! Role abstractions: solver, sneaky generator, and critic.
//!
//! Each role has a trait so the game, validation, and search machinery can
//! run against either parametric toy policies or text backends.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{generate_step, Backend, GeneratedStep, GenerationRequest, Message};
use crate::core::{ErrorType, Problem, Step, StepVerdict, Trajectory, STEP_DELIMITER};
use crate::{Error, Result};

/// Default prompt for one-step-at-a-time solving.
pub const SOLVER_TEMPLATE: &str = "Solve the problem step by step. Separate steps with one blank line and finish with a line \"The answer is \\boxed{{...}}\".\n\nProblem: {problem}\n\nSteps so far:\n{prefix}\n\nNext step:";

/// Default prompt for the sneaky generator. The output contract is parsed
/// by [`parse_sneaky_output`].
pub const SNEAKY_TEMPLATE: &str = "You will transform the last step of a partial solution into a subtly incorrect step.\nFirst pick exactly one error type from: calculation_error, logical_error, misread_problem, sign_or_unit_error, unjustified_claim.\nRespond in this exact format:\nError type: <type>\nTransformation: <how you change the step>\nSneaky step: <the incorrect step>\n\nProblem: {problem}\n\nPartial solution:\n{prefix}\n\nCorrect step to transform:\n{step}";

/// Default prompt for the critic. The final line convention is parsed by
/// [`parse_verdict`].
pub const CRITIC_TEMPLATE: &str = "Analyze whether the last step of this partial solution is correct.\nGive a brief analysis, then end with exactly one line:\nConclusion: the step is correct\nor\nConclusion: the step is incorrect\n\nProblem: {problem}\n\nPartial solution:\n{prefix}\n\nStep under review:\n{step}";

/// One adversarial instance fed to the critic: the step under test with the
/// prefix strictly before it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiqueRequest {
    pub problem: Problem,
    pub prefix: Trajectory,
    pub step: Step,
}

/// A sampled critique: analysis text plus a parsed verdict. The verdict is
/// absent when no definite conclusion could be parsed (counts as a critic
/// loss downstream).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critique {
    pub text: String,
    pub verdict: Option<StepVerdict>,
    /// log-probability of the sampled output under the generating policy,
    /// recorded when available (toy policies).
    pub old_logprob: Option<f64>,
}

/// An error-type choice plus transformation chain producing a candidate
/// sneaky step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SneakyTransformation {
    pub error_type: ErrorType,
    /// The full generator output (the training target for the sneaky role).
    pub transformation_text: String,
    pub sneaky_step: Step,
    pub old_logprob: Option<f64>,
}

pub trait SolverRole: Send + Sync {
    /// Generate exactly one next step.
    fn next_step(
        &self,
        problem: &Problem,
        prefix: &Trajectory,
        temperature: f64,
        seed: u64,
    ) -> Result<GeneratedStep>;

    /// Run the solver to completion (or until `max_steps`).
    fn complete(
        &self,
        problem: &Problem,
        prefix: &Trajectory,
        temperature: f64,
        seed: u64,
        max_steps: usize,
    ) -> Result<Trajectory> {
        let mut traj = prefix.clone();
        for i in 0..max_steps {
            let g = self.next_step(
                problem,
                &traj,
                temperature,
                crate::util::derive_seed(seed, &[i as u64]),
            )?;
            traj.push_step(g.step.text);
            if g.terminal {
                traj.complete = true;
                traj.final_answer = g.final_answer;
                break;
            }
        }
        Ok(traj)
    }
}

pub trait SneakyRole: Send + Sync {
    fn transform(
        &self,
        problem: &Problem,
        prefix: &Trajectory,
        correct_step: &Step,
        seed: u64,
    ) -> Result<SneakyTransformation>;
}

pub trait CriticRole: Send + Sync {
    fn critique(&self, request: &CritiqueRequest, temperature: f64, seed: u64)
        -> Result<Critique>;
}

/// Parse the definite conclusion out of a critique: the last sentence
/// containing "correct"/"incorrect" decides, negation-aware for
/// "not correct".
pub fn parse_verdict(text: &str) -> Option<StepVerdict> {
    let sentences: Vec<&str> = text
        .split(|c: char| matches!(c, '.' | '!' | '?' | '\n'))
        .collect();
    for sentence in sentences.iter().rev() {
        let lower = sentence.to_lowercase();
        if lower.contains("incorrect") || lower.contains("not correct") {
            return Some(StepVerdict::Incorrect);
        }
        if lower.contains("correct") {
            return Some(StepVerdict::Correct);
        }
    }
    None
}

/// Parse the sneaky output contract: an "Error type:" header and a
/// "Sneaky step:" payload.
pub fn parse_sneaky_output(text: &str, step_index: usize) -> Result<(ErrorType, Step)> {
    let mut error_type = None;
    for line in text.lines() {
        if let Some(rest) = line.trim().strip_prefix("Error type:") {
            error_type = ErrorType::from_code(rest.trim());
            break;
        }
    }
    let error_type = error_type
        .ok_or_else(|| Error::ParseFailure("missing or unknown 'Error type:' header".into()))?;
    let marker = "Sneaky step:";
    let pos = text
        .find(marker)
        .ok_or_else(|| Error::ParseFailure("missing 'Sneaky step:' marker".into()))?;
    let step_text = text[pos + marker.len()..]
        .split(STEP_DELIMITER)
        .map(str::trim)
        .find(|s| !s.is_empty())
        .unwrap_or("")
        .to_string();
    if step_text.is_empty() {
        return Err(Error::ParseFailure("empty sneaky step".into()));
    }
    Ok((
        error_type,
        Step {
            index: step_index,
            text: step_text,
        },
    ))
}

fn fill_template(template: &str, problem: &Problem, prefix: &Trajectory, step: Option<&Step>) -> String {
    let mut out = template
        .replace("{problem}", &problem.statement)
        .replace("{prefix}", &prefix.render(STEP_DELIMITER));
    if let Some(step) = step {
        out = out.replace("{step}", &step.text);
    }
    out
}

/// Solver backed by a text-generation backend.
pub struct LlmSolver {
    pub backend: Arc<dyn Backend>,
    pub template: String,
    pub delimiter: String,
}

impl LlmSolver {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        LlmSolver {
            backend,
            template: SOLVER_TEMPLATE.to_string(),
            delimiter: STEP_DELIMITER.to_string(),
        }
    }
}

impl SolverRole for LlmSolver {
    fn next_step(
        &self,
        problem: &Problem,
        prefix: &Trajectory,
        temperature: f64,
        seed: u64,
    ) -> Result<GeneratedStep> {
        generate_step(
            self.backend.as_ref(),
            prefix,
            problem,
            &self.template,
            &self.delimiter,
            temperature,
            seed,
        )
    }
}

/// Sneaky generator backed by a text-generation backend.
pub struct LlmSneaky {
    pub backend: Arc<dyn Backend>,
    pub template: String,
    pub temperature: f64,
}

impl LlmSneaky {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        LlmSneaky {
            backend,
            template: SNEAKY_TEMPLATE.to_string(),
            temperature: 0.7,
        }
    }
}

impl SneakyRole for LlmSneaky {
    fn transform(
        &self,
        problem: &Problem,
        prefix: &Trajectory,
        correct_step: &Step,
        seed: u64,
    ) -> Result<SneakyTransformation> {
        let prompt = fill_template(&self.template, problem, prefix, Some(correct_step));
        let mut request = GenerationRequest::new(vec![Message::user(prompt)]);
        request.temperature = self.temperature;
        request.seed = Some(seed);
        let text = self.backend.generate(&request).into_text()?;
        let (error_type, sneaky_step) = parse_sneaky_output(&text, correct_step.index)?;
        Ok(SneakyTransformation {
            error_type,
            transformation_text: text,
            sneaky_step,
            old_logprob: None,
        })
    }
}

/// Critic backed by a text-generation backend.
pub struct LlmCritic {
    pub backend: Arc<dyn Backend>,
    pub template: String,
}

impl LlmCritic {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        LlmCritic {
            backend,
            template: CRITIC_TEMPLATE.to_string(),
        }
    }
}

impl CriticRole for LlmCritic {
    fn critique(
        &self,
        request: &CritiqueRequest,
        temperature: f64,
        seed: u64,
    ) -> Result<Critique> {
        let prompt = fill_template(
            &self.template,
            &request.problem,
            &request.prefix,
            Some(&request.step),
        );
        let mut gen = GenerationRequest::new(vec![Message::user(prompt)]);
        gen.temperature = temperature;
        gen.seed = Some(seed);
        let text = self.backend.generate(&gen).into_text()?;
        let verdict = parse_verdict(&text);
        Ok(Critique {
            text,
            verdict,
            old_logprob: None,
        })
    }
}
