//! Domain types shared across the pipeline: problems, steps, trajectories,
//! verdicts, roles, and error categories.

use serde::{Deserialize, Serialize};

/// Default step delimiter: one blank line.
pub const STEP_DELIMITER: &str = "\n\n";

/// A problem with a canonical gold answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub statement: String,
    pub gold_answer: String,
    pub source_tag: String,
}

/// One reasoning step inside a trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub text: String,
}

/// An ordered step-partitioned (partial) solution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub problem_id: String,
    pub steps: Vec<Step>,
    pub complete: bool,
    pub final_answer: Option<String>,
}

impl Trajectory {
    pub fn empty(problem_id: &str) -> Self {
        Trajectory {
            problem_id: problem_id.to_string(),
            steps: Vec::new(),
            complete: false,
            final_answer: None,
        }
    }

    /// Append a step, keeping indices contiguous from 0.
    pub fn push_step(&mut self, text: impl Into<String>) {
        let index = self.steps.len();
        self.steps.push(Step {
            index,
            text: text.into(),
        });
    }

    /// Copy with one extra step appended.
    pub fn extended(&self, text: &str) -> Self {
        let mut t = self.clone();
        t.push_step(text);
        t
    }

    /// Render the steps joined by the given delimiter.
    pub fn render(&self, delimiter: &str) -> String {
        self.steps
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(delimiter)
    }
}

/// Definite conclusion of a step-level critique.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepVerdict {
    Correct,
    Incorrect,
}

impl StepVerdict {
    pub fn code(self) -> &'static str {
        match self {
            StepVerdict::Correct => "correct",
            StepVerdict::Incorrect => "incorrect",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "correct" => Some(StepVerdict::Correct),
            "incorrect" => Some(StepVerdict::Incorrect),
            _ => None,
        }
    }
}

/// The three players of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Solver,
    Sneaky,
    Critic,
}

impl Role {
    pub fn code(self) -> &'static str {
        match self {
            Role::Solver => "solver",
            Role::Sneaky => "sneaky",
            Role::Critic => "critic",
        }
    }
}

/// The five predefined error categories a sneaky transformation declares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorType {
    CalculationError,
    LogicalError,
    MisreadProblem,
    SignOrUnitError,
    UnjustifiedClaim,
}

impl ErrorType {
    pub const ALL: [ErrorType; 5] = [
        ErrorType::CalculationError,
        ErrorType::LogicalError,
        ErrorType::MisreadProblem,
        ErrorType::SignOrUnitError,
        ErrorType::UnjustifiedClaim,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ErrorType::CalculationError => "calculation_error",
            ErrorType::LogicalError => "logical_error",
            ErrorType::MisreadProblem => "misread_problem",
            ErrorType::SignOrUnitError => "sign_or_unit_error",
            ErrorType::UnjustifiedClaim => "unjustified_claim",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|e| e.code() == code)
    }
}

/// Split solution text into steps on a delimiter; empty segments are dropped
/// and each step is trimmed of surrounding whitespace.
pub fn split_into_steps(solution_text: &str, delimiter: &str) -> Vec<Step> {
    assert!(!delimiter.is_empty(), "step delimiter must be non-empty");
    solution_text
        .split(delimiter)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .enumerate()
        .map(|(index, text)| Step {
            index,
            text: text.to_string(),
        })
        .collect()
}

/// Reduce a raw answer string to a canonical comparable form.
///
/// Unwraps `\boxed{...}`, strips an "the answer is" prefix, normalizes
/// numeric strings ("7.0" and "7" compare equal), and returns the empty
/// string when nothing answer-like can be extracted.
pub fn canonicalize_answer(raw: &str) -> String {
    let candidate = extract_candidate(raw);
    let cleaned = clean_token(&candidate);
    if cleaned.is_empty() {
        return String::new();
    }
    if let Some(num) = normalize_number(&cleaned) {
        return num;
    }
    // A single bare token passes through; multi-word text is not an answer.
    if cleaned.split_whitespace().count() == 1 {
        cleaned
    } else {
        String::new()
    }
}

fn extract_candidate(raw: &str) -> String {
    if let Some(start) = raw.find("\\boxed{") {
        let inner = &raw[start + "\\boxed{".len()..];
        let mut depth = 1usize;
        for (i, c) in inner.char_indices() {
            match c {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        return inner[..i].to_string();
                    }
                }
                _ => {}
            }
        }
        return inner.to_string();
    }
    let lower = raw.to_lowercase();
    if let Some(pos) = lower.rfind("answer is") {
        let tail_start = pos + "answer is".len();
        // Lowercasing can shift byte offsets for exotic scripts; fall back
        // to the lowercased text when the offset is not a char boundary.
        return match raw.get(tail_start..) {
            Some(tail) if raw.len() == lower.len() => tail.to_string(),
            _ => lower[tail_start..].to_string(),
        };
    }
    raw.to_string()
}

fn clean_token(s: &str) -> String {
    // Whitespace and wrapper punctuation can interleave; strip both until
    // stable so cleaning is idempotent.
    let mut cur = s;
    loop {
        let next = cur
            .trim()
            .trim_matches(|c: char| matches!(c, '$' | '.' | ',' | ':' | ';' | '{' | '}' | '"'));
        if next == cur {
            return cur.to_string();
        }
        cur = next;
    }
}

fn normalize_number(s: &str) -> Option<String> {
    let v: f64 = s.parse().ok()?;
    if !v.is_finite() {
        return None;
    }
    if v == 0.0 {
        return Some("0".to_string());
    }
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        return Some(format!("{}", v as i64));
    }
    // Shortest round-trip representation.
    Some(format!("{v}"))
}

/// True when a step text declares a final answer (ends the trajectory).
pub fn is_terminal_step(text: &str) -> bool {
    text.contains("\\boxed{") || text.to_lowercase().contains("the answer is")
}
