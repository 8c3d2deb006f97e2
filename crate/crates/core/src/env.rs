//! Synthetic recommendation world and the in-memory dataset shape shared
//! with external loaders.
//!
//! Users carry a hidden tag preference on the simplex and an observed
//! feature vector built from the items they clicked before the target
//! interactions, so a target item never leaks into its own user's features.
//! Items carry a tag affinity on the simplex, observed exactly. Clicks are
//! Bernoulli with probability `sigmoid(c * <latent, affinity> + b0)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::cot::Label;
use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::rng::{domain, RngSeed, SeedStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "valid" => Some(Split::Valid),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub user_id: u32,
    /// Hidden preference; only present for synthetic data.
    pub latent: Option<Vec<f64>>,
    pub features: Vec<f64>,
    /// Clicked items the features were built from, in order.
    pub history: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemProfile {
    pub item_id: u32,
    pub affinity: Option<Vec<f64>>,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Interaction {
    pub user_id: u32,
    pub item_id: u32,
    pub label: Label,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub interactions_per_user: usize,
    /// Items each user saw before the target interactions; clicked ones
    /// form the observed history. 0 builds features from train clicks.
    pub history_len: usize,
    pub num_tags: usize,
    pub cot_len: usize,
    pub click_sharpness: f64,
    pub click_bias: f64,
    pub feature_noise: f64,
    pub dirichlet_alpha: f64,
    pub seed: RngSeed,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            n_users: 200,
            n_items: 500,
            interactions_per_user: 30,
            history_len: 100,
            num_tags: 16,
            cot_len: 4,
            click_sharpness: 32.0,
            click_bias: -3.0,
            feature_noise: 0.01,
            dirichlet_alpha: 0.3,
            seed: RngSeed(42),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(format!("env config: {msg}")));
        if self.n_users == 0 || self.n_items == 0 || self.interactions_per_user == 0 {
            return bad("counts must be positive");
        }
        if self.interactions_per_user + self.history_len > self.n_items {
            return bad("interactions_per_user + history_len exceeds n_items");
        }
        if self.cot_len == 0 || self.num_tags < 2 || self.num_tags < self.cot_len {
            return bad("need num_tags >= max(2, cot_len) and cot_len >= 1");
        }
        if !(self.click_sharpness > 0.0) || !self.click_bias.is_finite() {
            return bad("click_sharpness must be positive and click_bias finite");
        }
        if !(self.feature_noise >= 0.0) || !(self.dirichlet_alpha > 0.0) {
            return bad("feature_noise must be >= 0 and dirichlet_alpha > 0");
        }
        Ok(())
    }

    pub fn click_probability(&self, latent: &[f64], affinity: &[f64]) -> f64 {
        sigmoid(self.click_sharpness * crate::math::dot(latent, affinity) + self.click_bias)
    }
}

/// Users, items and interactions with dense ids: `users[i].user_id == i` and
/// `items[j].item_id == j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_tags: usize,
    pub users: Vec<UserProfile>,
    pub items: Vec<ItemProfile>,
    pub interactions: Vec<Interaction>,
}

impl Dataset {
    pub fn new(
        num_tags: usize,
        users: Vec<UserProfile>,
        items: Vec<ItemProfile>,
        interactions: Vec<Interaction>,
    ) -> Result<Self> {
        for (i, u) in users.iter().enumerate() {
            if u.user_id as usize != i {
                return Err(Error::InvalidInput(format!("user at position {i} has id {}", u.user_id)));
            }
            if u.features.len() != num_tags {
                return Err(Error::InvalidInput(format!("user {i} features have wrong length")));
            }
        }
        for (i, it) in items.iter().enumerate() {
            if it.item_id as usize != i {
                return Err(Error::InvalidInput(format!("item at position {i} has id {}", it.item_id)));
            }
            if it.features.len() != num_tags {
                return Err(Error::InvalidInput(format!("item {i} features have wrong length")));
            }
        }
        let ds = Dataset { num_tags, users, items, interactions };
        for x in &ds.interactions {
            ds.user(x.user_id)?;
            ds.item(x.item_id)?;
        }
        Ok(ds)
    }

    pub fn user(&self, id: u32) -> Result<&UserProfile> {
        self.users.get(id as usize).ok_or_else(|| Error::Referential(format!("user {id}")))
    }

    pub fn item(&self, id: u32) -> Result<&ItemProfile> {
        self.items.get(id as usize).ok_or_else(|| Error::Referential(format!("item {id}")))
    }

    pub fn split(&self, split: Split) -> Vec<Interaction> {
        self.interactions.iter().copied().filter(|x| x.split == split).collect()
    }

    pub fn has_latent(&self) -> bool {
        self.users.iter().any(|u| u.latent.is_some())
    }
}

/// Mean of the given item feature vectors plus optional Gaussian noise,
/// clamped to `[0, 1]`; the uniform vector `1/K` when there are no items.
pub fn history_features<R: Rng + ?Sized>(
    num_tags: usize,
    clicked: &[&[f64]],
    noise: f64,
    rng: &mut R,
) -> Vec<f64> {
    if clicked.is_empty() {
        return vec![1.0 / num_tags as f64; num_tags];
    }
    let mut f = vec![0.0; num_tags];
    for v in clicked {
        for (acc, x) in f.iter_mut().zip(v.iter()) {
            *acc += x;
        }
    }
    let n = clicked.len() as f64;
    let normal = if noise > 0.0 { Normal::new(0.0, noise).ok() } else { None };
    for x in f.iter_mut() {
        *x /= n;
        if let Some(normal) = &normal {
            *x += normal.sample(rng);
        }
        *x = x.clamp(0.0, 1.0);
    }
    f
}

fn dirichlet<R: Rng + ?Sized>(gamma: &Gamma<f64>, k: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let s: f64 = v.iter().sum();
    if s > 0.0 && s.is_finite() {
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        v.iter_mut().for_each(|x| *x = 1.0 / k as f64);
    }
    v
}

/// Per-user split counts: `(train, valid)`; the rest is test.
pub fn split_sizes(n: usize) -> (usize, usize) {
    let train = libm::round(0.8 * n as f64) as usize;
    let train = train.clamp(1, n);
    let valid = (libm::round(0.1 * n as f64) as usize).min(n - train);
    (train, valid)
}

pub fn make_synthetic(config: &EnvConfig) -> Result<Dataset> {
    config.validate()?;
    let k = config.num_tags;
    let mut rng = SeedStream::new(config.seed).derive(domain::ENV).rng();
    let gamma = Gamma::new(config.dirichlet_alpha, 1.0)
        .map_err(|e| Error::InvalidInput(format!("dirichlet alpha: {e}")))?;

    let latents: Vec<Vec<f64>> = (0..config.n_users).map(|_| dirichlet(&gamma, k, &mut rng)).collect();
    let items: Vec<ItemProfile> = (0..config.n_items)
        .map(|i| {
            let a = dirichlet(&gamma, k, &mut rng);
            ItemProfile { item_id: i as u32, affinity: Some(a.clone()), features: a }
        })
        .collect();

    let m = config.interactions_per_user;
    let (n_train, n_valid) = split_sizes(m);
    let mut interactions = Vec::with_capacity(config.n_users * m);
    let mut users = Vec::with_capacity(config.n_users);
    for (u, latent) in latents.into_iter().enumerate() {
        let h = config.history_len;
        let chosen = index::sample(&mut rng, config.n_items, m + h).into_vec();
        let labels: Vec<Label> = chosen
            .iter()
            .map(|&i| {
                let p = config.click_probability(&latent, &items[i].features);
                Label::from_bool(rng.random::<f64>() < p)
            })
            .collect();
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        let mut splits = vec![Split::Test; m];
        for (rank, &pos) in order.iter().enumerate() {
            splits[pos] = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_valid {
                Split::Valid
            } else {
                Split::Test
            };
        }
        let mut history = Vec::new();
        let mut clicked: Vec<&[f64]> = Vec::new();
        for j in 0..m {
            let x = Interaction {
                user_id: u as u32,
                item_id: chosen[j] as u32,
                label: labels[j],
                split: splits[j],
            };
            if h == 0 && x.split == Split::Train && x.label.is_yes() {
                history.push(x.item_id);
                clicked.push(&items[chosen[j]].features);
            }
            interactions.push(x);
        }
        for j in m..m + h {
            if labels[j].is_yes() {
                history.push(chosen[j] as u32);
                clicked.push(&items[chosen[j]].features);
            }
        }
        let features = history_features(k, &clicked, config.feature_noise, &mut rng);
        users.push(UserProfile { user_id: u as u32, latent: Some(latent), features, history });
    }
    Dataset::new(k, users, items, interactions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EnvConfig {
        EnvConfig { n_users: 30, n_items: 60, interactions_per_user: 10, history_len: 20, ..EnvConfig::default() }
    }

    #[test]
    fn logit_zero_is_even_odds() {
        let cfg = EnvConfig::default();
        // <latent, affinity> = 3/32 gives 32 * 3/32 - 3 = 0
        let latent = [0.375, 0.625, 0.0];
        let affinity = [0.25, 0.0, 0.75];
        assert_eq!(cfg.click_probability(&latent, &affinity), 0.5);
    }

    #[test]
    fn single_clicked_item_without_noise_is_copied() {
        let a = [0.1, 0.6, 0.3];
        let mut rng = SeedStream::new(RngSeed(1)).rng();
        assert_eq!(history_features(3, &[&a], 0.0, &mut rng), a.to_vec());
        assert_eq!(history_features(4, &[], 0.0, &mut rng), vec![0.25; 4]);
    }

    #[test]
    fn empirical_click_rate_at_logit_zero() {
        let mut rng = SeedStream::new(RngSeed(11)).rng();
        let n = 100_000;
        let yes = (0..n).filter(|_| rng.random::<f64>() < sigmoid(0.0)).count();
        let rate = yes as f64 / n as f64;
        assert!((rate - 0.5).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn synthetic_invariants() {
        let cfg = small();
        let ds = make_synthetic(&cfg).unwrap();
        assert_eq!(ds.users.len(), 30);
        assert_eq!(ds.items.len(), 60);
        assert_eq!(ds.interactions.len(), 300);
        for u in &ds.users {
            let lat = u.latent.as_ref().unwrap();
            assert!(lat.iter().all(|&x| x >= 0.0));
            assert!((lat.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(u.features.iter().all(|&x| (0.0..=1.0).contains(&x)));
            let mine: Vec<_> = ds.interactions.iter().filter(|x| x.user_id == u.user_id).collect();
            let train = mine.iter().filter(|x| x.split == Split::Train).count();
            assert!(train >= 1);
            assert!((train as f64 - 0.8 * mine.len() as f64).abs() <= 1.0);
            let mut items: Vec<_> = mine.iter().map(|x| x.item_id).collect();
            items.sort();
            items.dedup();
            assert_eq!(items.len(), mine.len());
        }
        for it in &ds.items {
            assert_eq!(it.affinity.as_ref(), Some(&it.features));
        }
    }

    #[test]
    fn synthetic_is_reproducible() {
        assert_eq!(make_synthetic(&small()).unwrap(), make_synthetic(&small()).unwrap());
        let other = EnvConfig { seed: RngSeed(43), ..small() };
        assert_ne!(make_synthetic(&small()).unwrap(), make_synthetic(&other).unwrap());
    }

    #[test]
    fn default_positive_rate_is_moderate() {
        let ds = make_synthetic(&EnvConfig::default()).unwrap();
        let yes = ds.interactions.iter().filter(|x| x.label.is_yes()).count();
        let rate = yes as f64 / ds.interactions.len() as f64;
        assert!((0.1..0.5).contains(&rate), "rate {rate}");
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = EnvConfig { interactions_per_user: 0, ..EnvConfig::default() };
        assert!(make_synthetic(&cfg).is_err());
        let cfg = EnvConfig { num_tags: 3, cot_len: 4, ..EnvConfig::default() };
        assert!(make_synthetic(&cfg).is_err());
    }

    #[test]
    fn split_sizes_stay_near_eighty_percent() {
        for n in 1..60 {
            let (t, v) = split_sizes(n);
            assert!(t >= 1 && t + v <= n);
            assert!((t as f64 - 0.8 * n as f64).abs() <= 1.0);
        }
    }
}
