//! Hand-crafted feature maps for the toy policies.

use serde::{Deserialize, Serialize};

use crate::toyworld::{Operator, SparseFeatures, ToyProblem, ToyStep};
use crate::util::stable_hash;

/// Serializable descriptor of a feature map, stored inside policy snapshots
/// so game-time and train-time featurization always agree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeaturizerSpec {
    Critic { noise_prob: f64, noise_seed: u64 },
    Sneaky,
    Solver,
}

impl FeaturizerSpec {
    pub fn critic(self) -> Option<CriticFeaturizer> {
        match self {
            FeaturizerSpec::Critic {
                noise_prob,
                noise_seed,
            } => Some(CriticFeaturizer {
                noise_prob,
                noise_seed,
            }),
            _ => None,
        }
    }
}

/// Features of (prefix, step) for the critic policy: arithmetic
/// inconsistency bit, chain-link match bit, operation-match bits,
/// magnitude bucket.
///
/// The discriminative features (residual and operation match) are masked to
/// zero on a deterministic, seeded fraction of instances so the task stays
/// learnable but not trivially separable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticFeaturizer {
    pub noise_prob: f64,
    pub noise_seed: u64,
}

impl Default for CriticFeaturizer {
    fn default() -> Self {
        CriticFeaturizer {
            noise_prob: 0.3,
            noise_seed: 0,
        }
    }
}

impl CriticFeaturizer {
    pub const N_FEATURES: usize = 6;
    pub const ACTIONS: [&'static str; 2] = ["correct", "incorrect"];

    pub fn spec(&self) -> FeaturizerSpec {
        FeaturizerSpec::Critic {
            noise_prob: self.noise_prob,
            noise_seed: self.noise_seed,
        }
    }

    /// Deterministic per-instance mask decision.
    fn masked(&self, problem: &ToyProblem, prefix: &[ToyStep], step: &ToyStep) -> bool {
        if self.noise_prob <= 0.0 {
            return false;
        }
        let mut key = format!(
            "{}|{}|{}",
            problem.start_value,
            prefix.len(),
            step.render()
        );
        for op in &problem.ops {
            key.push_str(op.operator.symbol());
            key.push_str(&op.operand.to_string());
        }
        key.push('#');
        key.push_str(&self.noise_seed.to_string());
        let h = stable_hash(key.as_bytes());
        (h as f64 / u64::MAX as f64) < self.noise_prob
    }

    pub fn features(
        &self,
        problem: &ToyProblem,
        prefix: &[ToyStep],
        step: &ToyStep,
    ) -> SparseFeatures {
        let expected_lhs = prefix
            .last()
            .map(|s| s.rhs_claimed)
            .unwrap_or(problem.start_value);
        let chain = if step.lhs == expected_lhs { 1.0 } else { -1.0 };
        // Indicator, not signed residual: a linear model can then separate
        // "claimed result disagrees with the step's own arithmetic" cleanly.
        let residual = if step.arithmetically_consistent() { 0.0 } else { 1.0 };
        let index = prefix.len();
        let (op_match, operand_match) = match problem.ops.get(index) {
            Some(op) => (
                if step.operator == op.operator { 1.0 } else { -1.0 },
                if step.operand == op.operand { 1.0 } else { -1.0 },
            ),
            None => (-1.0, -1.0),
        };
        let magnitude = {
            let digits = step.rhs_claimed.abs().to_string().len().min(4);
            digits as f64 / 4.0
        };
        let mask = self.masked(problem, prefix, step);
        let gate = |v: f64| if mask { 0.0 } else { v };
        vec![
            (0, 1.0),
            (1, chain),
            (2, gate(residual)),
            (3, gate(op_match)),
            (4, gate(operand_match)),
            (5, magnitude),
        ]
    }
}

/// Features of (problem, prefix position, correct step) for the sneaky
/// policy: operator identity, chain position, operand shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SneakyFeaturizer;

impl SneakyFeaturizer {
    pub const N_FEATURES: usize = 6;

    pub fn features(
        &self,
        problem: &ToyProblem,
        prefix_len: usize,
        step: &ToyStep,
    ) -> SparseFeatures {
        let pos_frac = if problem.ops.is_empty() {
            0.0
        } else {
            prefix_len as f64 / problem.ops.len() as f64
        };
        vec![
            (0, 1.0),
            (1, if step.operator == Operator::Add { 1.0 } else { 0.0 }),
            (2, if step.operator == Operator::Sub { 1.0 } else { 0.0 }),
            (3, if step.operator == Operator::Mul { 1.0 } else { 0.0 }),
            (4, pos_frac),
            (5, if step.operand == 1 { 1.0 } else { 0.0 }),
        ]
    }
}

/// Context-free featurizer for the solver's candidate-choice policy: the
/// per-step error profile is a bias-only categorical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SolverFeaturizer;

impl SolverFeaturizer {
    pub const N_FEATURES: usize = 1;

    pub fn features(&self) -> SparseFeatures {
        vec![(0, 1.0)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyworld::{sample_problem, ToyOp};

    fn correct_first_step(p: &ToyProblem) -> ToyStep {
        ToyStep {
            lhs: p.start_value,
            operator: p.ops[0].operator,
            operand: p.ops[0].operand,
            rhs_claimed: p.ops[0].operator.apply(p.start_value, p.ops[0].operand),
        }
    }

    #[test]
    fn critic_features_are_deterministic() {
        let p = sample_problem(3, 3).unwrap();
        let s = correct_first_step(&p);
        let f = CriticFeaturizer::default();
        assert_eq!(f.features(&p, &[], &s), f.features(&p, &[], &s));
    }

    #[test]
    fn critic_features_distinguish_wrong_operator_when_unmasked() {
        let p = ToyProblem {
            start_value: 3,
            ops: vec![ToyOp {
                operator: Operator::Add,
                operand: 4,
            }],
        };
        let good = correct_first_step(&p);
        let bad = ToyStep {
            operator: Operator::Sub,
            rhs_claimed: -1,
            ..good
        };
        let f = CriticFeaturizer {
            noise_prob: 0.0,
            noise_seed: 0,
        };
        let fg = f.features(&p, &[], &good);
        let fb = f.features(&p, &[], &bad);
        assert_eq!(fg[3], (3, 1.0));
        assert_eq!(fb[3], (3, -1.0));
        // Both arithmetically consistent: residual feature is silent.
        assert_eq!(fg[2], (2, 0.0));
        assert_eq!(fb[2], (2, 0.0));
    }

    #[test]
    fn masking_rate_tracks_noise_prob() {
        let f = CriticFeaturizer {
            noise_prob: 0.3,
            noise_seed: 1,
        };
        let mut masked = 0;
        let n = 2000;
        for seed in 0..n {
            let p = sample_problem(seed, 3).unwrap();
            let s = correct_first_step(&p);
            if f.masked(&p, &[], &s) {
                masked += 1;
            }
        }
        let rate = masked as f64 / n as f64;
        assert!((rate - 0.3).abs() < 0.05, "rate {rate}");
    }

    #[test]
    fn sneaky_features_encode_operator() {
        let p = sample_problem(11, 2).unwrap();
        let s = correct_first_step(&p);
        let feats = SneakyFeaturizer.features(&p, 0, &s);
        let one_hot: f64 = [1, 2, 3].iter().map(|&i| feats[i].1).sum();
        assert_eq!(one_hot, 1.0);
    }
}
