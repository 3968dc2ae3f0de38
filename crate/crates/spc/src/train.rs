//! Offline training for categorical policies: behavior-cloning loss and a
//! policy-gradient objective with importance ratios, a batch-mean baseline,
//! and a KL penalty to the round-start reference policy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::Role;
use crate::data::TrainingSample;
use crate::toyworld::actors::{ToyCriticInput, ToySneakyInput};
use crate::toyworld::{
    CategoricalPolicy, CriticFeaturizer, PerturbationAction, SneakyFeaturizer, SparseFeatures,
};
use crate::util::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlConfig {
    pub batch_size: usize,
    /// Behavior-cloning step size (toy scale; large-model runs use ~5e-6).
    pub learning_rate_sft: f64,
    /// Policy-gradient step size (toy scale; large-model runs use ~2e-6).
    pub learning_rate_rl: f64,
    pub kl_coefficient: f64,
    pub sft_aux_coefficient: f64,
    pub epochs_sft: usize,
    pub epochs_rl: usize,
    /// Optional symmetric clip on the importance ratio; off by default.
    pub importance_ratio_clip: Option<f64>,
    /// When a sample lacks a recorded generation logprob, fall back to the
    /// reference policy's logprob.
    pub old_logprob_fallback: bool,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            batch_size: 64,
            learning_rate_sft: 0.05,
            learning_rate_rl: 0.1,
            kl_coefficient: 0.1,
            sft_aux_coefficient: 0.15,
            epochs_sft: 3,
            epochs_rl: 10,
            importance_ratio_clip: None,
            old_logprob_fallback: true,
        }
    }
}

/// A training sample decoded into policy space.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedSample {
    pub features: SparseFeatures,
    pub action: usize,
    pub reward: f64,
    pub old_logprob: Option<f64>,
}

/// Decodes serialized (input, output) pairs into features and action
/// indices for a concrete policy family.
pub trait SampleDecoder: Sync {
    fn decode(&self, sample: &TrainingSample) -> Result<DecodedSample>;
}

/// Decoder for critic samples over the toy domain.
pub struct ToyCriticDecoder {
    pub featurizer: CriticFeaturizer,
    pub actions: Vec<String>,
}

impl ToyCriticDecoder {
    pub fn new(featurizer: CriticFeaturizer) -> Self {
        ToyCriticDecoder {
            featurizer,
            actions: CriticFeaturizer::ACTIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl SampleDecoder for ToyCriticDecoder {
    fn decode(&self, sample: &TrainingSample) -> Result<DecodedSample> {
        let input = ToyCriticInput::decode(&sample.input)?;
        let (problem, prefix, step) = input.parse_toy()?;
        let features = self.featurizer.features(&problem, &prefix, &step);
        let action = self
            .actions
            .iter()
            .position(|a| *a == sample.output)
            .ok_or_else(|| Error::UnknownAction(sample.output.clone()))?;
        Ok(DecodedSample {
            features,
            action,
            reward: sample.reward,
            old_logprob: sample.old_logprob,
        })
    }
}

/// Decoder for sneaky samples: recovers the perturbation action from the
/// generator's transformation text.
pub struct ToySneakyDecoder {
    pub featurizer: SneakyFeaturizer,
}

pub fn parse_transformation_action(text: &str) -> Result<PerturbationAction> {
    for line in text.lines() {
        if let Some(rest) = line.trim().strip_prefix("Transformation: applied ") {
            let code = rest.split_whitespace().next().unwrap_or("");
            return PerturbationAction::from_code(code)
                .ok_or_else(|| Error::UnknownAction(code.to_string()));
        }
    }
    Err(Error::ParseFailure(
        "missing 'Transformation: applied' line".into(),
    ))
}

impl SampleDecoder for ToySneakyDecoder {
    fn decode(&self, sample: &TrainingSample) -> Result<DecodedSample> {
        let input = ToySneakyInput::decode(&sample.input)?;
        let (problem, step) = input.parse_toy()?;
        let features = self.featurizer.features(&problem, input.prefix_len, &step);
        let action = parse_transformation_action(&sample.output)?;
        let action = PerturbationAction::ALL
            .iter()
            .position(|a| *a == action)
            .expect("action from ALL");
        Ok(DecodedSample {
            features,
            action,
            reward: sample.reward,
            old_logprob: sample.old_logprob,
        })
    }
}

/// Behavior-cloning loss: mean negative log-likelihood of the targets,
/// with its exact gradient (laid out like the policy parameters).
pub fn sft_loss(
    policy: &CategoricalPolicy,
    batch: &[(SparseFeatures, usize)],
) -> (f64, Vec<f64>) {
    assert!(!batch.is_empty(), "sft batch must be non-empty");
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; policy.params.len()];
    for (features, action) in batch {
        loss -= policy.log_prob_idx(features, *action) / n;
        policy.accumulate_grad_log_prob(features, *action, -1.0 / n, &mut grad);
    }
    (loss, grad)
}

/// Per-sample advantages: reward minus the batch-mean baseline minus the
/// weighted divergence estimate. Treated as constants by the gradient.
pub fn advantage(rewards: &[f64], kls: &[f64], beta: f64) -> Vec<f64> {
    assert!(!rewards.is_empty() && rewards.len() == kls.len());
    let b = rewards.iter().sum::<f64>() / rewards.len() as f64;
    rewards
        .iter()
        .zip(kls)
        .map(|(r, kl)| r - b - beta * kl)
        .collect()
}

/// Policy-gradient estimate over one decoded batch. Returns the gradient
/// of the surrogate loss
/// `-mean(ratio_i * A_i) + sft_aux * nll(positive samples)`,
/// where `ratio_i = pi(y|x) / pi_old(y|x)` and `A_i` is detached.
pub fn rl_gradient(
    policy: &CategoricalPolicy,
    batch: &[DecodedSample],
    pi_ref: &CategoricalPolicy,
    cfg: &RlConfig,
) -> Result<(Vec<f64>, RlBatchStats)> {
    assert!(!batch.is_empty(), "rl batch must be non-empty");
    let n = batch.len() as f64;
    let mut logps = Vec::with_capacity(batch.len());
    let mut old_logps = Vec::with_capacity(batch.len());
    let mut kls = Vec::with_capacity(batch.len());
    for s in batch {
        let logp = policy.log_prob_idx(&s.features, s.action);
        let ref_logp = pi_ref.log_prob_idx(&s.features, s.action);
        let old = match s.old_logprob {
            Some(v) => v,
            None if cfg.old_logprob_fallback => ref_logp,
            None => return Err(Error::MissingOldLogprob(format!("action {}", s.action))),
        };
        logps.push(logp);
        old_logps.push(old);
        kls.push(logp - ref_logp);
    }
    let rewards: Vec<f64> = batch.iter().map(|s| s.reward).collect();
    let advantages = advantage(&rewards, &kls, cfg.kl_coefficient);
    let mut grad = vec![0.0; policy.params.len()];
    let mut ratio_sum = 0.0;
    for (i, s) in batch.iter().enumerate() {
        let mut ratio = (logps[i] - old_logps[i]).exp();
        if let Some(clip) = cfg.importance_ratio_clip {
            ratio = ratio.clamp(1.0 - clip, 1.0 + clip);
        }
        ratio_sum += ratio;
        policy.accumulate_grad_log_prob(
            &s.features,
            s.action,
            -ratio * advantages[i] / n,
            &mut grad,
        );
    }
    let mut surrogate_loss = -(0..batch.len())
        .map(|i| (logps[i] - old_logps[i]).exp() * advantages[i])
        .sum::<f64>()
        / n;
    let positives: Vec<(SparseFeatures, usize)> = batch
        .iter()
        .filter(|s| s.reward > 0.0)
        .map(|s| (s.features.clone(), s.action))
        .collect();
    if cfg.sft_aux_coefficient != 0.0 && !positives.is_empty() {
        let (sft_l, sft_grad) = sft_loss(policy, &positives);
        surrogate_loss += cfg.sft_aux_coefficient * sft_l;
        for (g, sg) in grad.iter_mut().zip(&sft_grad) {
            *g += cfg.sft_aux_coefficient * sg;
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    let stats = RlBatchStats {
        mean_ratio: ratio_sum / n,
        mean_kl: kls.iter().sum::<f64>() / n,
        mean_advantage: advantages.iter().sum::<f64>() / n,
        surrogate_loss,
    };
    Ok((grad, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlBatchStats {
    pub mean_ratio: f64,
    pub mean_kl: f64,
    pub mean_advantage: f64,
    /// Value of the surrogate loss at the current parameters.
    pub surrogate_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainMode {
    Sft,
    Rl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub role: Role,
    pub mode: TrainMode,
    pub epochs: usize,
    pub batches: usize,
    pub samples: usize,
    pub skipped_samples: usize,
    pub loss_curve: Vec<f64>,
    pub mean_ratio: f64,
    pub mean_kl: f64,
}

/// One full training run over a dataset: shuffled fixed-size batches for a
/// fixed number of epochs, deterministic in `seed`.
pub fn train_round(
    role: Role,
    init: &CategoricalPolicy,
    samples: &[TrainingSample],
    decoder: &dyn SampleDecoder,
    cfg: &RlConfig,
    mode: TrainMode,
    seed: u64,
) -> Result<(CategoricalPolicy, TrainReport)> {
    let mut decoded = Vec::with_capacity(samples.len());
    let mut skipped = 0usize;
    for s in samples {
        match decoder.decode(s) {
            Ok(d) => decoded.push(d),
            Err(_) => skipped += 1,
        }
    }
    if decoded.is_empty() {
        return Err(Error::EmptyPool("no decodable training samples".into()));
    }
    let pi_ref = init.clone();
    let mut policy = init.clone();
    let (epochs, lr) = match mode {
        TrainMode::Sft => (cfg.epochs_sft, cfg.learning_rate_sft),
        TrainMode::Rl => (cfg.epochs_rl, cfg.learning_rate_rl),
    };
    let mut loss_curve = Vec::new();
    let mut ratio_acc = 0.0;
    let mut kl_acc = 0.0;
    let mut batches = 0usize;
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..decoded.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[epoch as u64]));
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<DecodedSample> =
                chunk.iter().map(|&i| decoded[i].clone()).collect();
            let loss = match mode {
                TrainMode::Sft => {
                    let pairs: Vec<(SparseFeatures, usize)> = batch
                        .iter()
                        .map(|d| (d.features.clone(), d.action))
                        .collect();
                    let (loss, grad) = sft_loss(&policy, &pairs);
                    apply_step(&mut policy, &grad, lr)?;
                    loss
                }
                TrainMode::Rl => {
                    let (grad, stats) = rl_gradient(&policy, &batch, &pi_ref, cfg)?;
                    ratio_acc += stats.mean_ratio;
                    kl_acc += stats.mean_kl;
                    apply_step(&mut policy, &grad, lr)?;
                    stats.surrogate_loss
                }
            };
            if !loss.is_finite() {
                return Err(Error::DivergenceDetected(format!(
                    "non-finite loss at epoch {epoch}"
                )));
            }
            loss_curve.push(loss);
            batches += 1;
        }
    }
    let report = TrainReport {
        role,
        mode,
        epochs,
        batches,
        samples: decoded.len(),
        skipped_samples: skipped,
        loss_curve,
        mean_ratio: if batches > 0 && mode == TrainMode::Rl {
            ratio_acc / batches as f64
        } else {
            1.0
        },
        mean_kl: if batches > 0 && mode == TrainMode::Rl {
            kl_acc / batches as f64
        } else {
            0.0
        },
    };
    Ok((policy, report))
}

fn apply_step(policy: &mut CategoricalPolicy, grad: &[f64], lr: f64) -> Result<()> {
    for (w, g) in policy.params.iter_mut().zip(grad) {
        *w -= lr * g;
        if !w.is_finite() {
            return Err(Error::DivergenceDetected("non-finite parameter".into()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn uniform(n_actions: usize) -> CategoricalPolicy {
        CategoricalPolicy::zeros(3, (0..n_actions).map(|i| format!("a{i}")).collect())
    }

    fn random_policy(rng: &mut ChaCha8Rng, n_actions: usize) -> CategoricalPolicy {
        let mut p = uniform(n_actions);
        for w in p.params.iter_mut() {
            *w = rng.gen_range(-1.0..1.0);
        }
        p
    }

    /// A policy shaped for the critic featurizer's 6 features.
    fn critic_policy() -> CategoricalPolicy {
        CategoricalPolicy::zeros(
            CriticFeaturizer::N_FEATURES,
            CriticFeaturizer::ACTIONS.iter().map(|s| s.to_string()).collect(),
        )
    }

    fn random_critic_policy(rng: &mut ChaCha8Rng) -> CategoricalPolicy {
        let mut p = critic_policy();
        for w in p.params.iter_mut() {
            *w = rng.gen_range(-1.0..1.0);
        }
        p
    }

    fn random_features(rng: &mut ChaCha8Rng) -> SparseFeatures {
        vec![
            (0, 1.0),
            (1, rng.gen_range(-2.0..2.0)),
            (2, rng.gen_range(-2.0..2.0)),
        ]
    }

    #[test]
    fn uniform_sft_loss_is_log_k() {
        let p = uniform(5);
        let batch = vec![(vec![(0, 1.0)], 2), (vec![(0, 1.0)], 4)];
        let (loss, _) = sft_loss(&p, &batch);
        assert!((loss - 5.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_policy_sft_loss_near_zero() {
        let mut p = uniform(5);
        p.params[1] = 40.0;
        let batch = vec![(vec![(0, 1.0)], 1)];
        let (loss, _) = sft_loss(&p, &batch);
        assert!(loss < 1e-10);
    }

    #[test]
    fn advantage_examples() {
        assert_eq!(
            advantage(&[1.0, -1.0, 1.0, -1.0], &[0.0; 4], 0.0),
            vec![1.0, -1.0, 1.0, -1.0]
        );
        assert_eq!(
            advantage(&[1.0, 1.0, 1.0, -1.0], &[0.0; 4], 0.0),
            vec![0.5, 0.5, 0.5, -1.5]
        );
        // Zero divergence: beta is irrelevant.
        assert_eq!(
            advantage(&[1.0, -1.0], &[0.0, 0.0], 7.3),
            vec![1.0, -1.0]
        );
    }

    #[test]
    fn advantage_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.gen_range(2..20);
            let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let kls: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let beta = rng.gen_range(0.0..2.0);
            let a = advantage(&rewards, &kls, beta);
            let mean_a = a.iter().sum::<f64>() / n as f64;
            let mean_kl = kls.iter().sum::<f64>() / n as f64;
            assert!((mean_a + beta * mean_kl).abs() < 1e-12);
            // Shift invariance.
            let c = rng.gen_range(-5.0..5.0);
            let shifted: Vec<f64> = rewards.iter().map(|r| r + c).collect();
            let a2 = advantage(&shifted, &kls, beta);
            for (x, y) in a.iter().zip(&a2) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, n_actions: usize) -> Vec<DecodedSample> {
        (0..n)
            .map(|_| DecodedSample {
                features: random_features(rng),
                action: rng.gen_range(0..n_actions),
                reward: if rng.gen::<bool>() { 1.0 } else { -1.0 },
                old_logprob: Some(rng.gen_range(-3.0..-0.1)),
            })
            .collect()
    }

    /// The policy-gradient direction matches finite differences of the
    /// detached-advantage surrogate loss.
    #[test]
    fn rl_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let cfg = RlConfig {
            sft_aux_coefficient: 0.15,
            kl_coefficient: 0.1,
            ..RlConfig::default()
        };
        for _ in 0..15 {
            let policy = random_policy(&mut rng, 4);
            let pi_ref = random_policy(&mut rng, 4);
            let batch = random_batch(&mut rng, 6, 4);
            let (grad, _) = rl_gradient(&policy, &batch, &pi_ref, &cfg).unwrap();
            // Advantages detached at the base policy.
            let kls: Vec<f64> = batch
                .iter()
                .map(|s| {
                    policy.log_prob_idx(&s.features, s.action)
                        - pi_ref.log_prob_idx(&s.features, s.action)
                })
                .collect();
            let rewards: Vec<f64> = batch.iter().map(|s| s.reward).collect();
            let advs = advantage(&rewards, &kls, cfg.kl_coefficient);
            let surrogate = |p: &CategoricalPolicy| {
                let n = batch.len() as f64;
                let mut val = 0.0;
                for (i, s) in batch.iter().enumerate() {
                    let ratio =
                        (p.log_prob_idx(&s.features, s.action) - s.old_logprob.unwrap()).exp();
                    val -= ratio * advs[i] / n;
                }
                let positives: Vec<(SparseFeatures, usize)> = batch
                    .iter()
                    .filter(|s| s.reward > 0.0)
                    .map(|s| (s.features.clone(), s.action))
                    .collect();
                if !positives.is_empty() {
                    let (l, _) = sft_loss(p, &positives);
                    val += cfg.sft_aux_coefficient * l;
                }
                val
            };
            let h = 1e-5;
            for k in 0..policy.params.len() {
                let mut hi = policy.clone();
                hi.params[k] += h;
                let mut lo = policy.clone();
                lo.params[k] -= h;
                let fd = (surrogate(&hi) - surrogate(&lo)) / (2.0 * h);
                let denom = fd.abs().max(1e-8);
                assert!(
                    (grad[k] - fd).abs() / denom < 1e-4 || (grad[k] - fd).abs() < 1e-8,
                    "param {k}: analytic {} vs fd {fd}",
                    grad[k]
                );
            }
        }
    }

    #[test]
    fn ratio_one_beta_zero_reduces_to_reinforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = random_policy(&mut rng, 4);
        let mut batch = random_batch(&mut rng, 8, 4);
        for s in batch.iter_mut() {
            s.old_logprob = Some(policy.log_prob_idx(&s.features, s.action));
        }
        let cfg = RlConfig {
            kl_coefficient: 0.0,
            sft_aux_coefficient: 0.0,
            ..RlConfig::default()
        };
        let (grad, stats) = rl_gradient(&policy, &batch, &policy, &cfg).unwrap();
        assert!((stats.mean_ratio - 1.0).abs() < 1e-12);
        // Independent REINFORCE-with-baseline computation.
        let rewards: Vec<f64> = batch.iter().map(|s| s.reward).collect();
        let b = rewards.iter().sum::<f64>() / rewards.len() as f64;
        let mut expect = vec![0.0; policy.params.len()];
        for s in &batch {
            policy.accumulate_grad_log_prob(
                &s.features,
                s.action,
                -(s.reward - b) / batch.len() as f64,
                &mut expect,
            );
        }
        for (g, e) in grad.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn single_sample_batch_advantage_is_pure_kl() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let policy = random_policy(&mut rng, 3);
        let pi_ref = random_policy(&mut rng, 3);
        let batch = random_batch(&mut rng, 1, 3);
        let kl = policy.log_prob_idx(&batch[0].features, batch[0].action)
            - pi_ref.log_prob_idx(&batch[0].features, batch[0].action);
        let advs = advantage(&[batch[0].reward], &[kl], 0.1);
        assert!((advs[0] + 0.1 * kl).abs() < 1e-12);
    }

    #[test]
    fn missing_old_logprob_without_fallback_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let policy = random_policy(&mut rng, 3);
        let mut batch = random_batch(&mut rng, 2, 3);
        batch[0].old_logprob = None;
        let cfg = RlConfig {
            old_logprob_fallback: false,
            ..RlConfig::default()
        };
        assert!(matches!(
            rl_gradient(&policy, &batch, &policy, &cfg),
            Err(Error::MissingOldLogprob(_))
        ));
        let cfg = RlConfig::default();
        assert!(rl_gradient(&policy, &batch, &policy, &cfg).is_ok());
    }

    #[test]
    fn transformation_action_parses() {
        let text = "Error type: sign_or_unit_error\nTransformation: applied sign_flip to `3 + 4 = 7`\nSneaky step: 3 - 4 = -1";
        assert_eq!(
            parse_transformation_action(text).unwrap(),
            PerturbationAction::SignFlip
        );
        assert!(parse_transformation_action("no such line").is_err());
    }

    fn toy_sft_dataset(n: usize, seed: u64) -> Vec<TrainingSample> {
        use crate::toyworld::gen::labeled_instances;
        labeled_instances(n, seed, 2, 5, 0.5)
            .unwrap()
            .into_iter()
            .map(|inst| {
                let req = inst.to_request();
                TrainingSample {
                    role: Role::Critic,
                    input: crate::data::encode_critic_input(
                        &req.problem.statement,
                        &req.prefix,
                        &req.step,
                    ),
                    output: inst.truth.code().to_string(),
                    reward: 1.0,
                    pair_group: None,
                    old_logprob: None,
                    difficulty_tag: crate::validate::Tier::Medium,
                }
            })
            .collect()
    }

    #[test]
    fn sft_training_learns_the_unmasked_critic_task() {
        let featurizer = CriticFeaturizer {
            noise_prob: 0.0,
            noise_seed: 0,
        };
        let decoder = ToyCriticDecoder::new(featurizer);
        let init = CategoricalPolicy::zeros(
            CriticFeaturizer::N_FEATURES,
            CriticFeaturizer::ACTIONS.iter().map(|s| s.to_string()).collect(),
        );
        let train = toy_sft_dataset(400, 1);
        let cfg = RlConfig {
            epochs_sft: 25,
            ..RlConfig::default()
        };
        let (trained, report) =
            train_round(Role::Critic, &init, &train, &decoder, &cfg, TrainMode::Sft, 3).unwrap();
        assert_eq!(report.skipped_samples, 0);
        // Held-out accuracy well above chance.
        let held_out = toy_sft_dataset(300, 99);
        let mut hits = 0;
        for s in &held_out {
            let d = decoder.decode(s).unwrap();
            if trained.argmax(&d.features) == d.action {
                hits += 1;
            }
        }
        let acc = hits as f64 / held_out.len() as f64;
        assert!(acc > 0.9, "held-out accuracy {acc}");
        assert!(report.loss_curve.last().unwrap() < report.loss_curve.first().unwrap());
    }

    #[test]
    fn large_beta_limits_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let init = random_critic_policy(&mut rng);
        let decoder = ToyCriticDecoder::new(CriticFeaturizer::default());
        let dataset = toy_sft_dataset(200, 2)
            .into_iter()
            .enumerate()
            .map(|(i, mut s)| {
                s.reward = if i % 2 == 0 { 1.0 } else { -1.0 };
                s
            })
            .collect::<Vec<_>>();
        let run = |beta: f64| {
            let cfg = RlConfig {
                kl_coefficient: beta,
                sft_aux_coefficient: 0.0,
                epochs_rl: 3,
                ..RlConfig::default()
            };
            let (p, _) = train_round(
                Role::Critic,
                &init,
                &dataset,
                &decoder,
                &cfg,
                TrainMode::Rl,
                11,
            )
            .unwrap();
            p.l2_distance(&init)
        };
        assert!(run(10.0) < run(0.0));
    }

    #[test]
    fn zero_variance_rewards_leave_parameters_unchanged() {
        let init = critic_policy();
        let decoder = ToyCriticDecoder::new(CriticFeaturizer::default());
        let dataset: Vec<TrainingSample> = toy_sft_dataset(64, 3);
        // All rewards equal, beta 0, no aux: every advantage is zero.
        let cfg = RlConfig {
            kl_coefficient: 0.0,
            sft_aux_coefficient: 0.0,
            epochs_rl: 2,
            ..RlConfig::default()
        };
        let (p, _) = train_round(
            Role::Critic,
            &init,
            &dataset,
            &decoder,
            &cfg,
            TrainMode::Rl,
            1,
        )
        .unwrap();
        assert_eq!(p.params, init.params);
    }

    #[test]
    fn training_is_deterministic() {
        let init = critic_policy();
        let decoder = ToyCriticDecoder::new(CriticFeaturizer::default());
        let dataset = toy_sft_dataset(100, 4);
        let cfg = RlConfig::default();
        let a = train_round(Role::Critic, &init, &dataset, &decoder, &cfg, TrainMode::Sft, 5)
            .unwrap();
        let b = train_round(Role::Critic, &init, &dataset, &decoder, &cfg, TrainMode::Sft, 5)
            .unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.loss_curve, b.1.loss_curve);
    }
}
