//! CTR backbone with a preference connector.
//!
//! ```text
//! m     = W2 tanh(W1 e_p + b1) + b2                  connector, d_e -> 16 -> d_m
//! x     = [user emb ; item emb ; f_u ; f_i ; m]
//! y_hat = sigmoid(v . relu(H x + c) + v0)
//! ```
//!
//! All trainable values live in one flat vector; [`CtrShape`] knows the
//! offsets. The tag encoder is not part of the parameters.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::cot::Label;
use crate::env::{Dataset, Interaction};
use crate::error::{Error, Result};
use crate::math::{clamped_bce, sigmoid};
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CtrShape {
    pub n_users: usize,
    pub n_items: usize,
    pub num_tags: usize,
    pub id_dim: usize,
    pub enc_dim: usize,
    pub connector_hidden: usize,
    pub pref_dim: usize,
    pub hidden: usize,
}

impl CtrShape {
    pub fn new(n_users: usize, n_items: usize, num_tags: usize) -> Self {
        CtrShape {
            n_users,
            n_items,
            num_tags,
            id_dim: 8,
            enc_dim: 32,
            connector_hidden: 16,
            pref_dim: 8,
            hidden: 32,
        }
    }

    pub fn backbone_input(&self) -> usize {
        2 * self.id_dim + 2 * self.num_tags + self.pref_dim
    }

    fn offsets(&self) -> Offsets {
        let user_emb = 0;
        let item_emb = user_emb + self.n_users * self.id_dim;
        let conn_w1 = item_emb + self.n_items * self.id_dim;
        let conn_b1 = conn_w1 + self.connector_hidden * self.enc_dim;
        let conn_w2 = conn_b1 + self.connector_hidden;
        let conn_b2 = conn_w2 + self.pref_dim * self.connector_hidden;
        let hid_w = conn_b2 + self.pref_dim;
        let hid_b = hid_w + self.hidden * self.backbone_input();
        let out_w = hid_b + self.hidden;
        let out_b = out_w + self.hidden;
        Offsets { user_emb, item_emb, conn_w1, conn_b1, conn_w2, conn_b2, hid_w, hid_b, out_w, out_b, len: out_b + 1 }
    }

    pub fn len(&self) -> usize {
        self.offsets().len
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    user_emb: usize,
    item_emb: usize,
    conn_w1: usize,
    conn_b1: usize,
    conn_w2: usize,
    conn_b2: usize,
    hid_w: usize,
    hid_b: usize,
    out_w: usize,
    out_b: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtrModelParams {
    shape: CtrShape,
    values: Vec<f64>,
}

impl CtrModelParams {
    pub fn zeros(shape: CtrShape) -> Self {
        CtrModelParams { shape, values: vec![0.0; shape.len()] }
    }

    pub fn from_values(shape: CtrShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::InvalidInput(format!(
                "ctr model expects {} values, got {}",
                shape.len(),
                values.len()
            )));
        }
        Ok(CtrModelParams { shape, values })
    }

    /// Embeddings `N(0, 0.05^2)`, layer weights scaled by fan-in, biases 0.
    pub fn init(shape: CtrShape, stream: &SeedStream) -> Self {
        let mut p = Self::zeros(shape);
        let o = shape.offsets();
        let mut rng = stream.rng();
        let mut fill = |range: core::ops::Range<usize>, std: f64, values: &mut [f64]| {
            let normal = Normal::new(0.0, std).expect("positive std");
            for v in &mut values[range] {
                *v = normal.sample(&mut rng);
            }
        };
        let v = &mut p.values;
        fill(o.user_emb..o.conn_w1, 0.05, v);
        fill(o.conn_w1..o.conn_b1, libm::sqrt(1.0 / shape.enc_dim as f64), v);
        fill(o.conn_w2..o.conn_b2, libm::sqrt(1.0 / shape.connector_hidden as f64), v);
        fill(o.hid_w..o.hid_b, libm::sqrt(2.0 / shape.backbone_input() as f64), v);
        fill(o.out_w..o.out_b, libm::sqrt(1.0 / shape.hidden as f64), v);
        p
    }

    pub fn shape(&self) -> CtrShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn add_scaled(&mut self, other: &CtrModelParams, scale: f64) {
        for (v, g) in self.values.iter_mut().zip(&other.values) {
            *v += scale * g;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Zeroes the connector's last layer so the preference input has no path
    /// to the output.
    pub fn zero_connector_output(&mut self) {
        let o = self.shape.offsets();
        self.values[o.conn_w2..o.conn_b2].iter_mut().for_each(|v| *v = 0.0);
    }
}

struct Activations {
    conn_h: Vec<f64>,
    x: Vec<f64>,
    hid_pre: Vec<f64>,
    hid: Vec<f64>,
    prob: f64,
}

fn matvec(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    w.chunks_exact(x.len()).zip(b).map(|(row, b)| crate::math::dot(row, x) + b).collect()
}

fn forward(
    p: &CtrModelParams,
    user: usize,
    item: usize,
    uf: &[f64],
    itf: &[f64],
    e_p: &[f64],
) -> Result<Activations> {
    let s = p.shape;
    let o = s.offsets();
    if user >= s.n_users {
        return Err(Error::Referential(format!("user {user} outside embedding table")));
    }
    if item >= s.n_items {
        return Err(Error::Referential(format!("item {item} outside embedding table")));
    }
    if uf.len() != s.num_tags || itf.len() != s.num_tags || e_p.len() != s.enc_dim {
        return Err(Error::InvalidInput("ctr input has the wrong width".into()));
    }
    let v = &p.values;
    let conn_h: Vec<f64> = matvec(&v[o.conn_w1..o.conn_b1], &v[o.conn_b1..o.conn_w2], e_p)
        .into_iter()
        .map(libm::tanh)
        .collect();
    let m = matvec(&v[o.conn_w2..o.conn_b2], &v[o.conn_b2..o.hid_w], &conn_h);

    let d = s.id_dim;
    let mut x = Vec::with_capacity(s.backbone_input());
    x.extend_from_slice(&v[o.user_emb + user * d..o.user_emb + (user + 1) * d]);
    x.extend_from_slice(&v[o.item_emb + item * d..o.item_emb + (item + 1) * d]);
    x.extend_from_slice(uf);
    x.extend_from_slice(itf);
    x.extend_from_slice(&m);

    let hid_pre = matvec(&v[o.hid_w..o.hid_b], &v[o.hid_b..o.out_w], &x);
    let hid: Vec<f64> = hid_pre.iter().map(|&z| z.max(0.0)).collect();
    let logit = crate::math::dot(&v[o.out_w..o.out_b], &hid) + v[o.out_b];
    Ok(Activations { conn_h, x, hid_pre, hid, prob: sigmoid(logit) })
}

/// `grad += d BCE / d params` given the forward pass; the BCE derivative
/// with respect to the logit is `prob - target`.
fn backward(
    p: &CtrModelParams,
    act: &Activations,
    user: usize,
    item: usize,
    e_p: &[f64],
    target: f64,
    grad: &mut [f64],
) {
    let s = p.shape;
    let o = s.offsets();
    let v = &p.values;
    let dlogit = act.prob - target;
    let nx = s.backbone_input();

    grad[o.out_b] += dlogit;
    let mut dx = vec![0.0; nx];
    for j in 0..s.hidden {
        grad[o.out_w + j] += dlogit * act.hid[j];
        if act.hid_pre[j] <= 0.0 {
            continue;
        }
        let dpre = dlogit * v[o.out_w + j];
        grad[o.hid_b + j] += dpre;
        let row = o.hid_w + j * nx;
        for i in 0..nx {
            grad[row + i] += dpre * act.x[i];
            dx[i] += dpre * v[row + i];
        }
    }

    let d = s.id_dim;
    for i in 0..d {
        grad[o.user_emb + user * d + i] += dx[i];
        grad[o.item_emb + item * d + i] += dx[d + i];
    }
    let dm = &dx[2 * d + 2 * s.num_tags..];
    let hdim = s.connector_hidden;
    let mut dh = vec![0.0; hdim];
    for (r, &g) in dm.iter().enumerate() {
        grad[o.conn_b2 + r] += g;
        for c in 0..hdim {
            grad[o.conn_w2 + r * hdim + c] += g * act.conn_h[c];
            dh[c] += g * v[o.conn_w2 + r * hdim + c];
        }
    }
    for c in 0..hdim {
        let da = dh[c] * (1.0 - act.conn_h[c] * act.conn_h[c]);
        grad[o.conn_b1 + c] += da;
        for (i, &e) in e_p.iter().enumerate() {
            grad[o.conn_w1 + c * s.enc_dim + i] += da * e;
        }
    }
}

/// Encoded preference per user; users without an entry get the zero vector.
pub type PreferenceFeatures = BTreeMap<u32, Vec<f64>>;

fn preference<'a>(prefs: Option<&'a PreferenceFeatures>, user: u32, zero: &'a [f64]) -> &'a [f64] {
    prefs.and_then(|m| m.get(&user)).map_or(zero, Vec::as_slice)
}

/// Click probability for one interaction.
pub fn ctr_forward(
    params: &CtrModelParams,
    data: &Dataset,
    interaction: &Interaction,
    e_p: &[f64],
) -> Result<f64> {
    let uf = &data.user(interaction.user_id)?.features;
    let itf = &data.item(interaction.item_id)?.features;
    Ok(forward(params, interaction.user_id as usize, interaction.item_id as usize, uf, itf, e_p)?.prob)
}

/// Clamped-BCE loss and its gradient summed over `interactions`.
pub fn ctr_loss_and_grad(
    params: &CtrModelParams,
    data: &Dataset,
    interactions: &[Interaction],
    prefs: Option<&PreferenceFeatures>,
) -> Result<(f64, CtrModelParams)> {
    let zero = vec![0.0; params.shape.enc_dim];
    let mut grad = CtrModelParams::zeros(params.shape);
    let mut loss = 0.0;
    for x in interactions {
        let e_p = preference(prefs, x.user_id, &zero);
        let uf = &data.user(x.user_id)?.features;
        let itf = &data.item(x.item_id)?.features;
        let (u, i) = (x.user_id as usize, x.item_id as usize);
        let act = forward(params, u, i, uf, itf, e_p)?;
        loss += clamped_bce(act.prob, x.label.target());
        backward(params, &act, u, i, e_p, x.label.target(), &mut grad.values);
    }
    Ok((loss, grad))
}

pub fn ctr_predict(
    params: &CtrModelParams,
    data: &Dataset,
    interactions: &[Interaction],
    prefs: Option<&PreferenceFeatures>,
) -> Result<Vec<(f64, Label)>> {
    let zero = vec![0.0; params.shape.enc_dim];
    interactions
        .iter()
        .map(|x| Ok((ctr_forward(params, data, x, preference(prefs, x.user_id, &zero))?, x.label)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtrTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for CtrTrainConfig {
    fn default() -> Self {
        CtrTrainConfig { epochs: 50, lr: 0.3, batch_size: 64 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtrTrainOutcome {
    pub params: CtrModelParams,
    /// Mean clamped BCE per epoch, each batch measured before its step.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch gradient descent; the order is reshuffled every epoch from
/// `stream`.
pub fn ctr_train(
    params: &CtrModelParams,
    data: &Dataset,
    train: &[Interaction],
    prefs: Option<&PreferenceFeatures>,
    cfg: &CtrTrainConfig,
    stream: &SeedStream,
) -> Result<CtrTrainOutcome> {
    if train.is_empty() {
        return Err(Error::Contract("ctr training needs a non-empty train split".into()));
    }
    if cfg.batch_size == 0 || !(cfg.lr >= 0.0) {
        return Err(Error::InvalidInput(format!("invalid ctr config {cfg:?}")));
    }
    let mut params = params.clone();
    let mut rng = stream.rng();
    let mut order: Vec<Interaction> = train.to_vec();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = ctr_loss_and_grad(&params, data, batch, prefs)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { stage: "ctr", index: epoch });
            }
            total += loss;
            if cfg.lr != 0.0 {
                params.add_scaled(&grad, -cfg.lr / batch.len() as f64);
            }
        }
        if !params.is_finite() {
            return Err(Error::Divergence { stage: "ctr", index: epoch });
        }
        epoch_losses.push(total / order.len() as f64);
    }
    Ok(CtrTrainOutcome { params, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ItemProfile, Split, UserProfile};
    use crate::rng::RngSeed;

    fn tiny_data() -> Dataset {
        let k = 3;
        let users = (0..2)
            .map(|u| UserProfile { user_id: u, latent: None, features: vec![0.2, 0.5, 0.3], history: vec![] })
            .collect();
        let items = (0..3)
            .map(|i| ItemProfile { item_id: i, affinity: None, features: vec![0.1 * i as f64, 0.4, 0.2] })
            .collect();
        let interactions = vec![
            Interaction { user_id: 0, item_id: 0, label: Label::Yes, split: Split::Train },
            Interaction { user_id: 1, item_id: 1, label: Label::No, split: Split::Train },
            Interaction { user_id: 0, item_id: 2, label: Label::No, split: Split::Train },
            Interaction { user_id: 1, item_id: 2, label: Label::Yes, split: Split::Train },
        ];
        Dataset::new(k, users, items, interactions).unwrap()
    }

    #[test]
    fn zero_params_predict_half() {
        let data = tiny_data();
        let p = CtrModelParams::zeros(CtrShape::new(2, 3, 3));
        assert_eq!(ctr_forward(&p, &data, &data.interactions[0], &[0.3; 32]).unwrap(), 0.5);
    }

    #[test]
    fn unknown_ids_are_referential_errors() {
        let data = tiny_data();
        let p = CtrModelParams::zeros(CtrShape::new(1, 3, 3));
        let err = ctr_forward(&p, &data, &data.interactions[1], &[0.0; 32]).unwrap_err();
        assert!(matches!(err, Error::Referential(_)));
    }

    #[test]
    fn balanced_zero_init_starts_at_ln2() {
        let data = tiny_data();
        let p = CtrModelParams::zeros(CtrShape::new(2, 3, 3));
        let cfg = CtrTrainConfig { epochs: 1, lr: 0.0, batch_size: 64 };
        let out = ctr_train(&p, &data, &data.interactions, None, &cfg, &SeedStream::new(RngSeed(1))).unwrap();
        assert!((out.epoch_losses[0] - core::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(out.params, p);
    }

    #[test]
    fn preference_reaches_the_output_only_through_the_connector() {
        let data = tiny_data();
        let mut p = CtrModelParams::init(CtrShape::new(2, 3, 3), &SeedStream::new(RngSeed(4)));
        let e: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = &data.interactions[0];
        let with = ctr_forward(&p, &data, x, &e).unwrap();
        let without = ctr_forward(&p, &data, x, &[0.0; 32]).unwrap();
        assert_ne!(with, without);
        p.zero_connector_output();
        let with = ctr_forward(&p, &data, x, &e).unwrap();
        let without = ctr_forward(&p, &data, x, &[0.0; 32]).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn missing_preferences_fall_back_to_zero() {
        let data = tiny_data();
        let p = CtrModelParams::init(CtrShape::new(2, 3, 3), &SeedStream::new(RngSeed(5)));
        let empty = PreferenceFeatures::new();
        let a = ctr_predict(&p, &data, &data.interactions, Some(&empty)).unwrap();
        let b = ctr_predict(&p, &data, &data.interactions, None).unwrap();
        assert_eq!(a, b);
        let cfg = CtrTrainConfig { epochs: 3, lr: 0.1, batch_size: 2 };
        let out = ctr_train(&p, &data, &data.interactions, None, &cfg, &SeedStream::new(RngSeed(6))).unwrap();
        assert!(out.epoch_losses.iter().all(|l| l.is_finite()));
    }
}
