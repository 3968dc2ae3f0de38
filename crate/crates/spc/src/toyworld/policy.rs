//! Differentiable categorical policies over finite action sets.
//!
//! A policy scores each action as a linear function of sparse context
//! features and samples through a softmax. Log-probabilities and their
//! exact gradients are available in closed form, which is what the offline
//! trainer consumes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::Role;
use crate::toyworld::FeaturizerSpec;
use crate::{Error, Result};

/// Sparse feature vector: (feature index, value) pairs.
pub type SparseFeatures = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalPolicy {
    /// Stable action codes, in sampling-index order.
    pub actions: Vec<String>,
    pub n_features: usize,
    /// Dense parameter matrix, laid out `params[feature * n_actions + action]`.
    pub params: Vec<f64>,
}

impl CategoricalPolicy {
    pub fn zeros(n_features: usize, actions: Vec<String>) -> Self {
        let params = vec![0.0; n_features * actions.len()];
        CategoricalPolicy {
            actions,
            n_features,
            params,
        }
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn action_index(&self, code: &str) -> Result<usize> {
        self.actions
            .iter()
            .position(|a| a == code)
            .ok_or_else(|| Error::UnknownAction(code.to_string()))
    }

    /// Raw softmax scores for every action.
    pub fn scores(&self, features: &SparseFeatures) -> Vec<f64> {
        let n_actions = self.n_actions();
        let mut scores = vec![0.0; n_actions];
        for &(f, x) in features {
            debug_assert!(f < self.n_features);
            let row = &self.params[f * n_actions..(f + 1) * n_actions];
            for (s, w) in scores.iter_mut().zip(row) {
                *s += w * x;
            }
        }
        scores
    }

    /// Log-probabilities of every action (log-softmax of the scores).
    pub fn log_probs(&self, features: &SparseFeatures) -> Vec<f64> {
        let scores = self.scores(features);
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        scores.into_iter().map(|s| s - log_z).collect()
    }

    pub fn probs(&self, features: &SparseFeatures) -> Vec<f64> {
        self.log_probs(features).into_iter().map(f64::exp).collect()
    }

    pub fn log_prob_idx(&self, features: &SparseFeatures, action: usize) -> f64 {
        self.log_probs(features)[action]
    }

    /// Log-probability of a named action; unknown actions are an error.
    pub fn log_prob(&self, features: &SparseFeatures, action: &str) -> Result<f64> {
        Ok(self.log_prob_idx(features, self.action_index(action)?))
    }

    /// Sample an action index at temperature 1. Deterministic in the rng.
    pub fn sample_idx(&self, features: &SparseFeatures, rng: &mut impl Rng) -> usize {
        self.sample_idx_at(features, 1.0, rng)
    }

    /// Sample at a temperature; `temperature <= 0` degenerates to argmax.
    pub fn sample_idx_at(
        &self,
        features: &SparseFeatures,
        temperature: f64,
        rng: &mut impl Rng,
    ) -> usize {
        if temperature <= 0.0 {
            return self.argmax(features);
        }
        let scores = self.scores(features);
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                return i;
            }
        }
        weights.len() - 1
    }

    /// Convenience: seeded sample.
    pub fn sample_seeded(&self, features: &SparseFeatures, seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_idx(features, &mut rng)
    }

    /// Most probable action (first on ties).
    pub fn argmax(&self, features: &SparseFeatures) -> usize {
        let scores = self.scores(features);
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        best
    }

    /// Accumulate `coef * grad(log pi(action | features))` into `grad`,
    /// which is laid out like `params`.
    pub fn accumulate_grad_log_prob(
        &self,
        features: &SparseFeatures,
        action: usize,
        coef: f64,
        grad: &mut [f64],
    ) {
        debug_assert_eq!(grad.len(), self.params.len());
        let n_actions = self.n_actions();
        let probs = self.probs(features);
        for &(f, x) in features {
            let row = &mut grad[f * n_actions..(f + 1) * n_actions];
            for (a, g) in row.iter_mut().enumerate() {
                let indicator = if a == action { 1.0 } else { 0.0 };
                *g += coef * x * (indicator - probs[a]);
            }
        }
    }

    /// Exact KL(self || other) for a single context.
    pub fn kl_divergence(&self, other: &CategoricalPolicy, features: &SparseFeatures) -> f64 {
        let lp = self.log_probs(features);
        let lq = other.log_probs(features);
        lp.iter()
            .zip(&lq)
            .map(|(p, q)| p.exp() * (p - q))
            .sum()
    }

    pub fn l2_distance(&self, other: &CategoricalPolicy) -> f64 {
        self.params
            .iter()
            .zip(&other.params)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Versioned on-disk policy snapshot: parameters plus action-space and
/// feature-map descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub format_version: u32,
    pub role: Role,
    pub policy: CategoricalPolicy,
    pub featurizer: FeaturizerSpec,
}

impl PolicySnapshot {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(role: Role, policy: CategoricalPolicy, featurizer: FeaturizerSpec) -> Self {
        PolicySnapshot {
            format_version: Self::FORMAT_VERSION,
            role,
            policy,
            featurizer,
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::util::write_json(path, self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let snap: PolicySnapshot = crate::util::read_json(path)?;
        if snap.format_version != Self::FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported snapshot format version {}",
                snap.format_version
            )));
        }
        Ok(snap)
    }
}
