//! Softmax-DPO alignment of the generator.
//!
//! With `ratio(c) = beta * (log pi(c|u) - log ref(c|u))`, one positive `p`
//! and negatives `D`, the loss is
//!
//! ```text
//! L = -log sigmoid(-log sum_{d in D} exp(ratio(d) - ratio(p)))
//!   = softplus(LSE_d(ratio(d) - ratio(p)))
//! ```
//!
//! and its gradient is
//! `sigmoid(LSE) * sum_d softmax_d * beta * (grad log pi(d) - grad log pi(p))`.

use alloc::format;
use alloc::vec::Vec;

use crate::env::Dataset;
use crate::error::{Error, Result};
use crate::feedback::FeedbackRecord;
use crate::generator::GeneratorParams;
use crate::math::{log_sum_exp, sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpoConfig {
    /// Preference sharpness inside the loss.
    pub beta: f64,
    /// Step size of the per-record descent.
    pub lr: f64,
    pub epochs: usize,
}

impl Default for DpoConfig {
    fn default() -> Self {
        DpoConfig { beta: 1.0, lr: 1e-2, epochs: 1 }
    }
}

impl DpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !(self.lr >= 0.0) || self.epochs == 0 {
            return Err(Error::InvalidInput(format!("invalid dpo config {self:?}")));
        }
        Ok(())
    }
}

struct Margins {
    /// `ratio(d) - ratio(p)` per negative, in `negative_indices` order.
    deltas: Vec<f64>,
    lse: f64,
}

fn margins(
    policy: &GeneratorParams,
    reference: &GeneratorParams,
    record: &FeedbackRecord,
    beta: f64,
    user_features: &[f64],
) -> Result<Margins> {
    if record.negative_indices.is_empty() {
        return Err(Error::Contract("record has no negatives".into()));
    }
    let ratio = |i: usize| -> Result<f64> {
        let c = &record.cots[i];
        Ok(beta * (policy.cot_log_prob(user_features, c)? - reference.cot_log_prob(user_features, c)?))
    };
    let positive = ratio(record.positive_index)?;
    let deltas = record
        .negative_indices
        .iter()
        .map(|&i| Ok(ratio(i)? - positive))
        .collect::<Result<Vec<_>>>()?;
    let lse = log_sum_exp(&deltas);
    Ok(Margins { deltas, lse })
}

pub fn sdpo_loss(
    policy: &GeneratorParams,
    reference: &GeneratorParams,
    record: &FeedbackRecord,
    cfg: &DpoConfig,
    user_features: &[f64],
) -> Result<f64> {
    Ok(softplus(margins(policy, reference, record, cfg.beta, user_features)?.lse))
}

/// Loss and gradient with respect to the policy. The reference is frozen.
pub fn sdpo_loss_and_grad(
    policy: &GeneratorParams,
    reference: &GeneratorParams,
    record: &FeedbackRecord,
    cfg: &DpoConfig,
    user_features: &[f64],
) -> Result<(f64, GeneratorParams)> {
    let m = margins(policy, reference, record, cfg.beta, user_features)?;
    let outer = sigmoid(m.lse);
    // per-sample coefficient on grad log pi; identical cots are merged so
    // that a positive repeated as every negative cancels exactly
    let mut coefs: Vec<(usize, f64)> = Vec::with_capacity(record.cots.len());
    let mut total = 0.0;
    for (&i, &delta) in record.negative_indices.iter().zip(&m.deltas) {
        let c = outer * libm::exp(delta - m.lse) * cfg.beta;
        total += c;
        add_coef(record, &mut coefs, i, c);
    }
    add_coef(record, &mut coefs, record.positive_index, -total);

    let mut grad = GeneratorParams::zeros(policy.num_tags(), policy.cot_len());
    for (i, c) in coefs {
        if c != 0.0 {
            policy.accumulate_log_prob_grad(user_features, &record.cots[i], c, &mut grad);
        }
    }
    Ok((softplus(m.lse), grad))
}

fn add_coef(record: &FeedbackRecord, coefs: &mut Vec<(usize, f64)>, index: usize, c: f64) {
    match coefs.iter_mut().find(|(j, _)| record.cots[*j] == record.cots[index]) {
        Some((_, acc)) => *acc += c,
        None => coefs.push((index, c)),
    }
}

pub fn sdpo_grad(
    policy: &GeneratorParams,
    reference: &GeneratorParams,
    record: &FeedbackRecord,
    cfg: &DpoConfig,
    user_features: &[f64],
) -> Result<GeneratorParams> {
    sdpo_loss_and_grad(policy, reference, record, cfg, user_features).map(|(_, g)| g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignOutcome {
    pub params: GeneratorParams,
    /// Mean loss per epoch, each loss taken before its record's step.
    pub epoch_losses: Vec<f64>,
}

/// Per-record gradient descent on the softmax-DPO loss, records visited in
/// the given order for `cfg.epochs` passes.
pub fn align_generator(
    policy: &GeneratorParams,
    reference: &GeneratorParams,
    records: &[FeedbackRecord],
    data: &Dataset,
    cfg: &DpoConfig,
) -> Result<AlignOutcome> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::Contract("alignment needs at least one record".into()));
    }
    let mut params = policy.clone();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut sum = 0.0;
        for (index, record) in records.iter().enumerate() {
            let user = data.user(record.user_id)?;
            let (loss, grad) = sdpo_loss_and_grad(&params, reference, record, cfg, &user.features)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { stage: "alignment", index });
            }
            sum += loss;
            if cfg.lr != 0.0 {
                params.add_scaled(&grad, -cfg.lr);
            }
            if !params.is_finite() {
                return Err(Error::Divergence { stage: "alignment", index });
            }
        }
        epoch_losses.push(sum / records.len() as f64);
    }
    Ok(AlignOutcome { params, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cot::{Label, RecCot};
    use crate::env::{Interaction, Split};
    use crate::rng::{RngSeed, SeedStream};
    use alloc::vec;

    fn record(cots: Vec<Vec<usize>>, positive: usize) -> FeedbackRecord {
        let n = cots.len();
        let cots: Vec<RecCot> = cots.into_iter().map(|c| RecCot::new(c).unwrap()).collect();
        let mut scored = vec![(0.4, 0.6); n];
        scored[positive] = (0.9, 0.1);
        let x = Interaction { user_id: 0, item_id: 0, label: Label::Yes, split: Split::Train };
        FeedbackRecord::from_scored(&x, cots, scored).unwrap()
    }

    fn random_params(seed: u64) -> GeneratorParams {
        let mut rng = SeedStream::new(RngSeed(seed)).rng();
        GeneratorParams::gaussian(5, 2, 0.7, &mut rng)
    }

    const USER: [f64; 5] = [0.1, 0.4, 0.0, 0.3, 0.2];

    #[test]
    fn loss_at_reference_is_log_one_plus_n() {
        let g = random_params(1);
        let cfg = DpoConfig::default();
        let r = record(vec![vec![0, 1], vec![2, 3]], 0);
        assert!((sdpo_loss(&g, &g, &r, &cfg, &USER).unwrap() - core::f64::consts::LN_2).abs() < 1e-12);
        let r = record((0..10).map(|i| vec![i % 5, (i + 1) % 5]).collect(), 3);
        let l = sdpo_loss(&g, &g, &r, &cfg, &USER).unwrap();
        assert!((l - libm::log(10.0)).abs() < 1e-12);
        // the rounded figure as usually quoted
        #[allow(clippy::approx_constant)]
        let quoted = 2.302585;
        assert!((l - quoted).abs() < 1e-6);
    }

    #[test]
    fn one_negative_reduces_to_pairwise_dpo() {
        let policy = random_params(2);
        let reference = random_params(3);
        let cfg = DpoConfig { beta: 0.7, ..DpoConfig::default() };
        let r = record(vec![vec![0, 4], vec![3, 1]], 1);
        let lp = |g: &GeneratorParams, c: &RecCot| g.cot_log_prob(&USER, c).unwrap();
        let ratio = |c: &RecCot| cfg.beta * (lp(&policy, c) - lp(&reference, c));
        let pairwise = -libm::log(sigmoid(ratio(r.positive()) - ratio(&r.cots[0])));
        let l = sdpo_loss(&policy, &reference, &r, &cfg, &USER).unwrap();
        assert!((l - pairwise).abs() < 1e-12);
    }

    #[test]
    fn pairwise_closed_form() {
        // K=3, L=1: a bias of 1 on tag 0 shifts ratio(0) - ratio(1) by
        // exactly 1 against a uniform reference.
        let reference = GeneratorParams::zeros(3, 1);
        let mut policy = reference.clone();
        policy.bias_mut()[0] = 1.0;
        let x = Interaction { user_id: 0, item_id: 0, label: Label::Yes, split: Split::Train };
        let cots = vec![RecCot::new(vec![0]).unwrap(), RecCot::new(vec![1]).unwrap()];
        let r = FeedbackRecord::from_scored(&x, cots, vec![(0.9, 0.1), (0.2, 0.8)]).unwrap();
        let l = sdpo_loss(&policy, &reference, &r, &DpoConfig::default(), &[0.0; 3]).unwrap();
        assert!((l - libm::log1p(libm::exp(-1.0))).abs() < 1e-12);
        assert!((l - 0.313262).abs() < 1e-6);
    }

    #[test]
    fn loss_is_invariant_to_negative_order() {
        let policy = random_params(4);
        let reference = random_params(5);
        let cfg = DpoConfig::default();
        let a = record(vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 4]], 0);
        let mut b = a.clone();
        b.negative_indices.reverse();
        let la = sdpo_loss(&policy, &reference, &a, &cfg, &USER).unwrap();
        let lb = sdpo_loss(&policy, &reference, &b, &cfg, &USER).unwrap();
        assert!((la - lb).abs() < 1e-12);
    }

    #[test]
    fn identical_cots_give_zero_gradient() {
        let policy = random_params(6);
        let reference = random_params(7);
        let r = record(vec![vec![1, 2]; 4], 2);
        let g = sdpo_grad(&policy, &reference, &r, &DpoConfig::default(), &USER).unwrap();
        assert!(g.values().all(|x| x == 0.0));
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let data = crate::env::Dataset::new(
            5,
            vec![crate::env::UserProfile { user_id: 0, latent: None, features: USER.to_vec(), history: vec![] }],
            vec![crate::env::ItemProfile { item_id: 0, affinity: None, features: USER.to_vec() }],
            vec![],
        )
        .unwrap();
        let g = random_params(8);
        let r = record(vec![vec![0, 1], vec![1, 2], vec![3, 4]], 1);
        let cfg = DpoConfig { lr: 0.0, epochs: 3, ..DpoConfig::default() };
        let out = align_generator(&g, &g, &[r], &data, &cfg).unwrap();
        assert_eq!(out.params, g);
        assert_eq!(out.epoch_losses.len(), 3);
        assert!(out.epoch_losses.windows(2).all(|w| w[0] == w[1]));
    }
}
