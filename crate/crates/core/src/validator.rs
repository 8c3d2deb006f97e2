//! The cot validator: separate exponential Yes and No heads over
//! `psi = [user features ; item features ; h ; h * item features]`, where
//! `h` is the multi-hot of the cot.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::cot::{Label, RecCot};
use crate::error::{Error, Result};
use crate::math::{clamped_bce, dot};

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatorParams {
    num_tags: usize,
    pub w_yes: Vec<f64>,
    pub w_no: Vec<f64>,
    pub b_yes: f64,
    pub b_no: f64,
}

/// `(s_yes, s_no) -> (p_T, p_F)`.
pub fn normalize(s_yes: f64, s_no: f64) -> Result<(f64, f64)> {
    if !(s_yes >= 0.0 && s_no >= 0.0) {
        return Err(Error::InvalidInput(format!("negative score ({s_yes}, {s_no})")));
    }
    let total = s_yes + s_no;
    if total == 0.0 {
        return Err(Error::DegenerateScore);
    }
    Ok((s_yes / total, s_no / total))
}

impl ValidatorParams {
    pub fn zeros(num_tags: usize) -> Self {
        ValidatorParams {
            num_tags,
            w_yes: vec![0.0; 4 * num_tags],
            w_no: vec![0.0; 4 * num_tags],
            b_yes: 0.0,
            b_no: 0.0,
        }
    }

    pub fn gaussian<R: Rng + ?Sized>(num_tags: usize, std: f64, rng: &mut R) -> Self {
        let mut v = Self::zeros(num_tags);
        if let Ok(normal) = Normal::new(0.0, std) {
            v.w_yes.iter_mut().for_each(|w| *w = normal.sample(rng));
            v.w_no.iter_mut().for_each(|w| *w = normal.sample(rng));
            v.b_yes = normal.sample(rng);
            v.b_no = normal.sample(rng);
        }
        v
    }

    pub fn from_parts(num_tags: usize, w_yes: Vec<f64>, w_no: Vec<f64>, b_yes: f64, b_no: f64) -> Result<Self> {
        if w_yes.len() != 4 * num_tags || w_no.len() != 4 * num_tags {
            return Err(Error::InvalidInput(format!("validator weights must have length {}", 4 * num_tags)));
        }
        Ok(ValidatorParams { num_tags, w_yes, w_no, b_yes, b_no })
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    pub fn input_dim(&self) -> usize {
        4 * self.num_tags
    }

    pub fn add_scaled(&mut self, other: &ValidatorParams, scale: f64) {
        for (w, g) in self.w_yes.iter_mut().zip(&other.w_yes) {
            *w += scale * g;
        }
        for (w, g) in self.w_no.iter_mut().zip(&other.w_no) {
            *w += scale * g;
        }
        self.b_yes += scale * other.b_yes;
        self.b_no += scale * other.b_no;
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// `w_yes, w_no, b_yes, b_no` flattened.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.w_yes.iter().chain(&self.w_no).copied().chain([self.b_yes, self.b_no])
    }

    pub fn input(&self, user_features: &[f64], item_features: &[f64], cot: &RecCot) -> Result<Vec<f64>> {
        let k = self.num_tags;
        if user_features.len() != k || item_features.len() != k {
            return Err(Error::InvalidInput(format!("feature vectors must have length {k}")));
        }
        let h = cot.multi_hot(k)?;
        let mut psi = Vec::with_capacity(4 * k);
        psi.extend_from_slice(user_features);
        psi.extend_from_slice(item_features);
        psi.extend_from_slice(&h);
        psi.extend(h.iter().zip(item_features).map(|(a, b)| a * b));
        Ok(psi)
    }

    fn head_logits(&self, psi: &[f64]) -> (f64, f64) {
        (dot(&self.w_yes, psi) + self.b_yes, dot(&self.w_no, psi) + self.b_no)
    }

    /// Unnormalized `(exp(yes logit), exp(no logit))`.
    pub fn raw_scores(&self, user_features: &[f64], item_features: &[f64], cot: &RecCot) -> Result<(f64, f64)> {
        let (a, b) = self.head_logits(&self.input(user_features, item_features, cot)?);
        Ok((libm::exp(a), libm::exp(b)))
    }

    /// Both scores divided by the larger one; same ratio as
    /// [`raw_scores`](Self::raw_scores) without overflow.
    pub fn scaled_scores(&self, user_features: &[f64], item_features: &[f64], cot: &RecCot) -> Result<(f64, f64)> {
        let (a, b) = self.head_logits(&self.input(user_features, item_features, cot)?);
        let m = a.max(b);
        Ok((libm::exp(a - m), libm::exp(b - m)))
    }

    pub fn p_yes(&self, user_features: &[f64], item_features: &[f64], cot: &RecCot) -> Result<f64> {
        let (s_yes, s_no) = self.scaled_scores(user_features, item_features, cot)?;
        Ok(normalize(s_yes, s_no)?.0)
    }

    /// Clamped binary cross-entropy of [`p_yes`](Self::p_yes) against `label`.
    pub fn bce_loss(&self, user_features: &[f64], item_features: &[f64], cot: &RecCot, label: Label) -> Result<f64> {
        Ok(clamped_bce(self.p_yes(user_features, item_features, cot)?, label.target()))
    }

    /// Gradient of the (unclamped) binary cross-entropy.
    pub fn bce_grad(
        &self,
        user_features: &[f64],
        item_features: &[f64],
        cot: &RecCot,
        label: Label,
    ) -> Result<ValidatorParams> {
        let psi = self.input(user_features, item_features, cot)?;
        let (a, b) = self.head_logits(&psi);
        let residual = crate::math::sigmoid(a - b) - label.target();
        let mut grad = ValidatorParams::zeros(self.num_tags);
        for ((gy, gn), x) in grad.w_yes.iter_mut().zip(grad.w_no.iter_mut()).zip(&psi) {
            *gy = residual * x;
            *gn = -residual * x;
        }
        grad.b_yes = residual;
        grad.b_no = -residual;
        Ok(grad)
    }
}
