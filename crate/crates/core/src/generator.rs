//! The cot generator: an autoregressive linear-softmax policy over tags.
//!
//! At slot `s` with prefix `c_0..c_{s-1}` the policy input is
//! `phi = [user features ; multi-hot(prefix) ; one-hot(s)]`, the logits are
//! `W * phi + bias`, tags already in the prefix are masked out and the rest
//! renormalized. Ties are always broken towards the lowest tag id.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::cot::RecCot;
use crate::error::{Error, Result};
use crate::math::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    num_tags: usize,
    cot_len: usize,
    /// Row-major `num_tags x input_dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingParams {
    pub samples: usize,
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for SamplingParams {
    /// N = 10 samples at t = 1, top_p = 0.9.
    fn default() -> Self {
        SamplingParams { samples: 10, temperature: 1.0, top_p: 0.9 }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 samples, got {}", self.samples)));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidInput(format!("temperature {} must be >= 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::InvalidInput(format!("top_p {} must be in (0, 1]", self.top_p)));
        }
        Ok(())
    }
}

impl GeneratorParams {
    pub fn zeros(num_tags: usize, cot_len: usize) -> Self {
        let d = 2 * num_tags + cot_len;
        GeneratorParams { num_tags, cot_len, weights: vec![0.0; num_tags * d], bias: vec![0.0; num_tags] }
    }

    /// Every entry drawn from `N(0, std^2)`.
    pub fn gaussian<R: Rng + ?Sized>(num_tags: usize, cot_len: usize, std: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(num_tags, cot_len);
        if let Ok(normal) = Normal::new(0.0, std) {
            p.weights.iter_mut().for_each(|w| *w = normal.sample(rng));
            p.bias.iter_mut().for_each(|b| *b = normal.sample(rng));
        }
        p
    }

    pub fn from_parts(num_tags: usize, cot_len: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let d = 2 * num_tags + cot_len;
        if weights.len() != num_tags * d || bias.len() != num_tags {
            return Err(Error::InvalidInput(format!(
                "generator shape mismatch: {} weights / {} biases for K={num_tags}, L={cot_len}",
                weights.len(),
                bias.len()
            )));
        }
        Ok(GeneratorParams { num_tags, cot_len, weights, bias })
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    pub fn cot_len(&self) -> usize {
        self.cot_len
    }

    pub fn input_dim(&self) -> usize {
        2 * self.num_tags + self.cot_len
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weight(&self, tag: usize, input: usize) -> f64 {
        self.weights[tag * self.input_dim() + input]
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &GeneratorParams, scale: f64) {
        debug_assert_eq!(self.weights.len(), other.weights.len());
        for (w, g) in self.weights.iter_mut().zip(&other.weights) {
            *w += scale * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&other.bias) {
            *b += scale * g;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|x| x.is_finite())
    }

    /// All values, weights first.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().chain(&self.bias).copied()
    }

    fn check_user(&self, user_features: &[f64]) -> Result<()> {
        if user_features.len() != self.num_tags {
            return Err(Error::InvalidInput(format!(
                "user features have length {}, expected {}",
                user_features.len(),
                self.num_tags
            )));
        }
        Ok(())
    }

    fn check_prefix(&self, prefix: &[usize], slot: usize) -> Result<()> {
        if slot >= self.cot_len {
            return Err(Error::Contract(format!("slot {slot} out of range for length {}", self.cot_len)));
        }
        if prefix.len() != slot {
            return Err(Error::Contract(format!("prefix has {} tags at slot {slot}", prefix.len())));
        }
        for (i, &t) in prefix.iter().enumerate() {
            if t >= self.num_tags || prefix[..i].contains(&t) {
                return Err(Error::Contract(format!("invalid prefix {prefix:?}")));
            }
        }
        Ok(())
    }

    fn check_cot(&self, cot: &RecCot) -> Result<()> {
        cot.check(self.num_tags, Some(self.cot_len))
    }

    fn policy_input(&self, user_features: &[f64], prefix: &[usize], slot: usize) -> Vec<f64> {
        let k = self.num_tags;
        let mut phi = vec![0.0; self.input_dim()];
        phi[..k].copy_from_slice(user_features);
        for &t in prefix {
            phi[k + t] = 1.0;
        }
        phi[2 * k + slot] = 1.0;
        phi
    }

    fn logits(&self, phi: &[f64]) -> Vec<f64> {
        let d = self.input_dim();
        self.weights.chunks_exact(d).zip(&self.bias).map(|(row, b)| dot(row, phi) + b).collect()
    }

    /// Masked softmax of `logits / t`; `t == 0` is a point mass on the
    /// highest unmasked logit.
    fn masked_distribution(logits: &[f64], prefix: &[usize], temperature: f64) -> Vec<f64> {
        let k = logits.len();
        let open = |i: usize| !prefix.contains(&i);
        let mut probs = vec![0.0; k];
        if temperature == 0.0 {
            if let Some(best) = argmax_open(logits, prefix) {
                probs[best] = 1.0;
            }
            return probs;
        }
        let max = (0..k).filter(|&i| open(i)).map(|i| logits[i] / temperature).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for i in (0..k).filter(|&i| open(i)) {
            let e = libm::exp(logits[i] / temperature - max);
            probs[i] = e;
            total += e;
        }
        probs.iter_mut().for_each(|p| *p /= total);
        probs
    }

    /// Next-tag distribution at `slot` given the already generated `prefix`.
    pub fn slot_distribution(
        &self,
        user_features: &[f64],
        prefix: &[usize],
        slot: usize,
        temperature: f64,
    ) -> Result<Vec<f64>> {
        self.check_user(user_features)?;
        self.check_prefix(prefix, slot)?;
        if !(temperature >= 0.0) {
            return Err(Error::InvalidInput(format!("temperature {temperature} must be >= 0")));
        }
        let logits = self.logits(&self.policy_input(user_features, prefix, slot));
        Ok(Self::masked_distribution(&logits, prefix, temperature))
    }

    /// Temperature then nucleus filtering at each slot.
    pub fn sample_cot<R: Rng + ?Sized>(
        &self,
        user_features: &[f64],
        sampling: &SamplingParams,
        rng: &mut R,
    ) -> Result<RecCot> {
        if !(sampling.temperature > 0.0) {
            return Err(Error::Contract("sample_cot needs temperature > 0; use greedy_cot".into()));
        }
        if !(sampling.top_p > 0.0 && sampling.top_p <= 1.0) {
            return Err(Error::InvalidInput(format!("top_p {} must be in (0, 1]", sampling.top_p)));
        }
        self.check_user(user_features)?;
        let mut tags = Vec::with_capacity(self.cot_len);
        for slot in 0..self.cot_len {
            let logits = self.logits(&self.policy_input(user_features, &tags, slot));
            let probs = Self::masked_distribution(&logits, &tags, sampling.temperature);
            let kept = nucleus(&probs, sampling.top_p);
            tags.push(draw(&kept, rng));
        }
        Ok(RecCot::from_distinct(tags))
    }

    /// Slot-by-slot argmax, lowest tag id on ties.
    pub fn greedy_cot(&self, user_features: &[f64]) -> Result<RecCot> {
        self.check_user(user_features)?;
        let mut tags = Vec::with_capacity(self.cot_len);
        for slot in 0..self.cot_len {
            let logits = self.logits(&self.policy_input(user_features, &tags, slot));
            // at t = 1 the softmax is monotone in the logits
            let best = argmax_open(&logits, &tags).expect("vocabulary larger than cot length");
            tags.push(best);
        }
        Ok(RecCot::from_distinct(tags))
    }

    /// `log pi(cot | user)` at t = 1 without nucleus filtering.
    pub fn cot_log_prob(&self, user_features: &[f64], cot: &RecCot) -> Result<f64> {
        self.check_user(user_features)?;
        self.check_cot(cot)?;
        let tags = cot.tags();
        let mut total = 0.0;
        for slot in 0..self.cot_len {
            let prefix = &tags[..slot];
            let logits = self.logits(&self.policy_input(user_features, prefix, slot));
            let open: Vec<f64> =
                (0..self.num_tags).filter(|i| !prefix.contains(i)).map(|i| logits[i]).collect();
            total += logits[tags[slot]] - crate::math::log_sum_exp(&open);
        }
        Ok(total)
    }

    /// Gradient of [`cot_log_prob`](Self::cot_log_prob) with respect to
    /// every parameter. Rows of masked tags get nothing at that slot.
    pub fn cot_log_prob_grad(&self, user_features: &[f64], cot: &RecCot) -> Result<GeneratorParams> {
        self.check_user(user_features)?;
        self.check_cot(cot)?;
        let mut grad = GeneratorParams::zeros(self.num_tags, self.cot_len);
        self.accumulate_log_prob_grad(user_features, cot, 1.0, &mut grad);
        Ok(grad)
    }

    /// `grad += scale * d log pi(cot) / d theta`, inputs already checked.
    pub(crate) fn accumulate_log_prob_grad(
        &self,
        user_features: &[f64],
        cot: &RecCot,
        scale: f64,
        grad: &mut GeneratorParams,
    ) {
        let d = self.input_dim();
        let tags = cot.tags();
        for slot in 0..self.cot_len {
            let prefix = &tags[..slot];
            let phi = self.policy_input(user_features, prefix, slot);
            let probs = Self::masked_distribution(&self.logits(&phi), prefix, 1.0);
            for (k, &p) in probs.iter().enumerate() {
                let indicator = if k == tags[slot] { 1.0 } else { 0.0 };
                let g = scale * (indicator - p);
                if g == 0.0 {
                    continue;
                }
                grad.bias[k] += g;
                let row = &mut grad.weights[k * d..(k + 1) * d];
                for (w, x) in row.iter_mut().zip(&phi) {
                    *w += g * x;
                }
            }
        }
    }
}

fn argmax_open(values: &[f64], masked: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if masked.contains(&i) {
            continue;
        }
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Smallest set of tags, taken in order of decreasing probability (lower id
/// first on ties), whose mass reaches `top_p`. Returns `(tag, renormalized
/// probability)` in that order. Zero-probability tags are never kept.
pub fn nucleus(probs: &[f64], top_p: f64) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut kept = Vec::new();
    let mut mass = 0.0;
    for i in order {
        kept.push((i, probs[i]));
        mass += probs[i];
        if mass >= top_p {
            break;
        }
    }
    kept.iter_mut().for_each(|(_, p)| *p /= mass);
    kept
}

fn draw<R: Rng + ?Sized>(kept: &[(usize, f64)], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(tag, p) in kept {
        acc += p;
        if u < acc {
            return tag;
        }
    }
    kept.last().map(|&(t, _)| t).expect("nucleus is never empty")
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * libm::log(p)).sum::<f64>()
}
