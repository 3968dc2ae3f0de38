//! Synthetic multi-step arithmetic reasoning domain with exact ground truth,
//! plus parametric categorical policies for solver, sneaky generator, and
//! critic.
//!
//! A toy problem is a start value folded through a short chain of `+`, `-`,
//! `*` operations; a toy step claims one application of the chain. Steps
//! render to text (`"3 + 4 = 7"`) so the generic game, search, and
//! validation machinery runs unchanged on this domain.

pub mod actors;
pub mod features;
pub mod gen;
pub mod policy;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::{ErrorType, Problem, StepVerdict};
use crate::{Error, Result};

pub use actors::{OracleCritic, ToyCritic, ToySneaky, ToySolver};
pub use features::{CriticFeaturizer, FeaturizerSpec, SneakyFeaturizer, SolverFeaturizer};
pub use policy::{CategoricalPolicy, PolicySnapshot, SparseFeatures};

pub const MIN_DIFFICULTY: usize = 2;
pub const MAX_DIFFICULTY: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
    #[serde(rename = "*")]
    Mul,
}

impl Operator {
    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Add => "+",
            Operator::Sub => "-",
            Operator::Mul => "*",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        match s {
            "+" => Some(Operator::Add),
            "-" => Some(Operator::Sub),
            "*" | "x" | "×" => Some(Operator::Mul),
            _ => None,
        }
    }

    pub fn apply(self, lhs: i64, operand: i64) -> i64 {
        match self {
            Operator::Add => lhs + operand,
            Operator::Sub => lhs - operand,
            Operator::Mul => lhs * operand,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyOp {
    pub operator: Operator,
    pub operand: i64,
}

/// A toy problem: fold `ops` over `start_value`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyProblem {
    pub start_value: i64,
    pub ops: Vec<ToyOp>,
}

impl ToyProblem {
    pub fn gold_answer(&self) -> i64 {
        self.ops
            .iter()
            .fold(self.start_value, |acc, op| op.operator.apply(acc, op.operand))
    }

    /// Exact value after the first `k` operations.
    pub fn value_after(&self, k: usize) -> i64 {
        self.ops[..k]
            .iter()
            .fold(self.start_value, |acc, op| op.operator.apply(acc, op.operand))
    }

    /// Render as a generic [`Problem`] whose statement parses back losslessly.
    pub fn to_problem(&self, id: &str) -> Problem {
        let ops = self
            .ops
            .iter()
            .map(|op| format!("{} {}", op.operator.symbol(), op.operand))
            .collect::<Vec<_>>()
            .join(", ");
        Problem {
            id: id.to_string(),
            statement: format!("start {}; ops: {}", self.start_value, ops),
            gold_answer: self.gold_answer().to_string(),
            source_tag: "toyworld".to_string(),
        }
    }

    pub fn from_problem(problem: &Problem) -> Result<Self> {
        Self::parse_statement(&problem.statement)
            .ok_or_else(|| Error::ParseFailure(format!("not a toy statement: {}", problem.statement)))
    }

    fn parse_statement(statement: &str) -> Option<Self> {
        let rest = statement.strip_prefix("start ")?;
        let (start, ops_part) = rest.split_once("; ops: ")?;
        let start_value: i64 = start.trim().parse().ok()?;
        let mut ops = Vec::new();
        for chunk in ops_part.split(',') {
            let mut it = chunk.split_whitespace();
            let operator = Operator::from_symbol(it.next()?)?;
            let operand: i64 = it.next()?.parse().ok()?;
            ops.push(ToyOp { operator, operand });
        }
        if ops.is_empty() {
            return None;
        }
        Some(ToyProblem { start_value, ops })
    }
}

/// One claimed application of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyStep {
    pub lhs: i64,
    pub operator: Operator,
    pub operand: i64,
    pub rhs_claimed: i64,
}

impl ToyStep {
    pub fn render(&self) -> String {
        format!(
            "{} {} {} = {}",
            self.lhs,
            self.operator.symbol(),
            self.operand,
            self.rhs_claimed
        )
    }

    pub fn parse(text: &str) -> Option<Self> {
        let (expr, rhs) = text.split_once('=')?;
        let rhs_claimed: i64 = rhs.trim().parse().ok()?;
        let tokens: Vec<&str> = expr.split_whitespace().collect();
        if tokens.len() != 3 {
            return None;
        }
        Some(ToyStep {
            lhs: tokens[0].parse().ok()?,
            operator: Operator::from_symbol(tokens[1])?,
            operand: tokens[2].parse().ok()?,
            rhs_claimed,
        })
    }

    /// Exact value of `lhs <op> operand`.
    pub fn exact_value(&self) -> i64 {
        self.operator.apply(self.lhs, self.operand)
    }

    /// True when the claimed result matches the step's own arithmetic.
    pub fn arithmetically_consistent(&self) -> bool {
        self.rhs_claimed == self.exact_value()
    }
}

/// Deterministic step corruptions available to the toy sneaky generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PerturbationAction {
    OffByOne,
    SignFlip,
    WrongOperand,
    SwapOperator,
    CopyPreviousResult,
}

impl PerturbationAction {
    pub const ALL: [PerturbationAction; 5] = [
        PerturbationAction::OffByOne,
        PerturbationAction::SignFlip,
        PerturbationAction::WrongOperand,
        PerturbationAction::SwapOperator,
        PerturbationAction::CopyPreviousResult,
    ];

    pub fn code(self) -> &'static str {
        match self {
            PerturbationAction::OffByOne => "off_by_one",
            PerturbationAction::SignFlip => "sign_flip",
            PerturbationAction::WrongOperand => "wrong_operand",
            PerturbationAction::SwapOperator => "swap_operator",
            PerturbationAction::CopyPreviousResult => "copy_previous_result",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|a| a.code() == code)
    }

    /// The error category this corruption declares.
    pub fn error_type(self) -> ErrorType {
        match self {
            PerturbationAction::OffByOne => ErrorType::CalculationError,
            PerturbationAction::SignFlip => ErrorType::SignOrUnitError,
            PerturbationAction::WrongOperand => ErrorType::MisreadProblem,
            PerturbationAction::SwapOperator => ErrorType::LogicalError,
            PerturbationAction::CopyPreviousResult => ErrorType::UnjustifiedClaim,
        }
    }
}

/// Sample a toy problem with `difficulty` operations. Deterministic in seed.
pub fn sample_problem(rng_seed: u64, difficulty: usize) -> Result<ToyProblem> {
    if !(MIN_DIFFICULTY..=MAX_DIFFICULTY).contains(&difficulty) {
        return Err(Error::DifficultyOutOfRange(difficulty));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let start_value = rng.gen_range(1..=9);
    let ops = (0..difficulty)
        .map(|_| {
            let operator = match rng.gen_range(0..3) {
                0 => Operator::Add,
                1 => Operator::Sub,
                _ => Operator::Mul,
            };
            let operand = rng.gen_range(1..=9);
            ToyOp { operator, operand }
        })
        .collect();
    Ok(ToyProblem { start_value, ops })
}

/// Judge a step against the exact arithmetic oracle.
///
/// A step is Correct iff its lhs chains from the prefix, it applies the
/// problem's designated operation at its position, and the claimed result
/// is exact.
pub fn oracle_check(step: &ToyStep, prefix: &[ToyStep], problem: &ToyProblem) -> Result<StepVerdict> {
    // The prefix itself must chain (it may contain incorrect values, but
    // each lhs must carry over the previous claim).
    let mut expected_lhs = problem.start_value;
    for (i, p) in prefix.iter().enumerate() {
        if p.lhs != expected_lhs {
            return Err(Error::InconsistentPrefix(i));
        }
        expected_lhs = p.rhs_claimed;
    }
    let index = prefix.len();
    let correct = index < problem.ops.len()
        && step.lhs == expected_lhs
        && step.operator == problem.ops[index].operator
        && step.operand == problem.ops[index].operand
        && step.arithmetically_consistent();
    Ok(if correct {
        StepVerdict::Correct
    } else {
        StepVerdict::Incorrect
    })
}

/// Deterministically corrupt a correct step.
///
/// The corrupted step differs from the input in at least one field; actions
/// that would reproduce the input fail with `FixedPointPerturbation`.
pub fn apply_perturbation(step: &ToyStep, action: PerturbationAction) -> Result<ToyStep> {
    let mut out = *step;
    match action {
        PerturbationAction::OffByOne => {
            out.rhs_claimed = step.rhs_claimed + 1;
        }
        PerturbationAction::SignFlip => match step.operator {
            // Flip between + and -, recomputing so the error is the sign.
            Operator::Add => {
                out.operator = Operator::Sub;
                out.rhs_claimed = out.exact_value();
            }
            Operator::Sub => {
                out.operator = Operator::Add;
                out.rhs_claimed = out.exact_value();
            }
            // No additive sign to flip; negate the result instead.
            Operator::Mul => {
                out.rhs_claimed = -step.rhs_claimed;
            }
        },
        PerturbationAction::WrongOperand => {
            out.operand = step.operand % 9 + 1;
            out.rhs_claimed = out.exact_value();
        }
        PerturbationAction::SwapOperator => {
            out.operator = match step.operator {
                Operator::Add => Operator::Mul,
                Operator::Mul => Operator::Add,
                Operator::Sub => Operator::Mul,
            };
            out.rhs_claimed = out.exact_value();
        }
        PerturbationAction::CopyPreviousResult => {
            out.rhs_claimed = step.lhs;
        }
    }
    if out == *step {
        return Err(Error::FixedPointPerturbation {
            action: action.code().to_string(),
            step: step.render(),
        });
    }
    Ok(out)
}
