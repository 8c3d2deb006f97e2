//! Analytic gradients against central finite differences.

use rand::Rng;
use trackrec_core::gradcheck::{central_difference, max_relative_error, STEP};
use trackrec_core::rec::ctr::{ctr_loss_and_grad, PreferenceFeatures};
use trackrec_core::rec::{CtrModelParams, CtrShape};
use trackrec_core::*;

const INSTANCES: usize = 60;

fn simplex<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn unflatten_generator(k: usize, l: usize, x: &[f64]) -> GeneratorParams {
    let w = k * (2 * k + l);
    GeneratorParams::from_parts(k, l, x[..w].to_vec(), x[w..].to_vec()).unwrap()
}

fn unflatten_validator(k: usize, x: &[f64]) -> ValidatorParams {
    ValidatorParams::from_parts(k, x[..4 * k].to_vec(), x[4 * k..8 * k].to_vec(), x[8 * k], x[8 * k + 1]).unwrap()
}

#[test]
fn cot_log_prob_gradient() {
    let mut rng = SeedStream::new(RngSeed(101)).rng();
    let sampling = SamplingParams { samples: 2, temperature: 1.0, top_p: 1.0 };
    let mut worst = 0.0f64;
    for n in 0..INSTANCES {
        let (k, l) = (3 + n % 5, 1 + n % 3);
        let g = GeneratorParams::gaussian(k, l, 0.7, &mut rng);
        let uf = simplex(k, &mut rng);
        let cot = g.sample_cot(&uf, &sampling, &mut rng).unwrap();
        let analytic: Vec<f64> = g.cot_log_prob_grad(&uf, &cot).unwrap().values().collect();
        let mut x: Vec<f64> = g.values().collect();
        let numeric = central_difference(&mut x, STEP, |v| unflatten_generator(k, l, v).cot_log_prob(&uf, &cot).unwrap());
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    assert!(worst < 1e-5, "max relative error {worst:e}");
}

fn sdpo_instances(samples: usize, seed: u64) -> f64 {
    let mut rng = SeedStream::new(RngSeed(seed)).rng();
    let sampling = SamplingParams { samples, temperature: 1.0, top_p: 1.0 };
    let mut worst = 0.0f64;
    for n in 0..INSTANCES {
        let (k, l) = (4 + n % 4, 2 + n % 2);
        let policy = GeneratorParams::gaussian(k, l, 0.6, &mut rng);
        let reference = GeneratorParams::gaussian(k, l, 0.6, &mut rng);
        let uf = simplex(k, &mut rng);
        let cots: Vec<RecCot> = (0..samples).map(|_| policy.sample_cot(&uf, &sampling, &mut rng).unwrap()).collect();
        let scored: Vec<(f64, f64)> = (0..samples)
            .map(|_| {
                let p = rng.random_range(0.05..0.95);
                (p, 1.0 - p)
            })
            .collect();
        let x = Interaction { user_id: 0, item_id: 0, label: Label::from_bool(rng.random()), split: Split::Train };
        let record = FeedbackRecord::from_scored(&x, cots, scored).unwrap();
        let cfg = DpoConfig { beta: rng.random_range(0.5..2.0), ..DpoConfig::default() };
        let analytic: Vec<f64> = sdpo_grad(&policy, &reference, &record, &cfg, &uf).unwrap().values().collect();
        let mut v: Vec<f64> = policy.values().collect();
        let numeric = central_difference(&mut v, STEP, |p| {
            sdpo_loss(&unflatten_generator(k, l, p), &reference, &record, &cfg, &uf).unwrap()
        });
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    worst
}

#[test]
fn sdpo_gradient_two_samples() {
    let e = sdpo_instances(2, 202);
    assert!(e < 1e-5, "max relative error {e:e}");
}

#[test]
fn sdpo_gradient_five_samples() {
    let e = sdpo_instances(5, 205);
    assert!(e < 1e-5, "max relative error {e:e}");
}

#[test]
fn sdpo_gradient_ten_samples() {
    let e = sdpo_instances(10, 210);
    assert!(e < 1e-5, "max relative error {e:e}");
}

#[test]
fn sdpo_gradient_at_reference_has_uniform_negative_weight() {
    // at policy = reference every delta is 0, so each negative carries
    // beta / (n + 1) and the positive -beta * n / (n + 1)
    let mut rng = SeedStream::new(RngSeed(7)).rng();
    let g = GeneratorParams::gaussian(5, 2, 0.5, &mut rng);
    let uf = simplex(5, &mut rng);
    let cots: Vec<RecCot> = [[0, 1], [1, 2], [2, 3], [3, 4]].iter().map(|t| RecCot::new(t.to_vec()).unwrap()).collect();
    let scored = vec![(0.9, 0.1), (0.2, 0.8), (0.3, 0.7), (0.4, 0.6)];
    let x = Interaction { user_id: 0, item_id: 0, label: Label::Yes, split: Split::Train };
    let record = FeedbackRecord::from_scored(&x, cots.clone(), scored).unwrap();
    let cfg = DpoConfig::default();
    let grad: Vec<f64> = sdpo_grad(&g, &g, &record, &cfg, &uf).unwrap().values().collect();
    let n = 3.0;
    let mut want = vec![0.0; grad.len()];
    for (i, c) in cots.iter().enumerate() {
        let coef = if i == 0 { -n / (n + 1.0) } else { 1.0 / (n + 1.0) };
        for (w, d) in want.iter_mut().zip(g.cot_log_prob_grad(&uf, c).unwrap().values()) {
            *w += coef * d;
        }
    }
    assert!(max_relative_error(&grad, &want) < 1e-12);
}

#[test]
fn validator_bce_gradient() {
    let mut rng = SeedStream::new(RngSeed(303)).rng();
    let mut worst = 0.0f64;
    for n in 0..INSTANCES {
        let k = 4 + n % 5;
        let v = ValidatorParams::gaussian(k, 0.8, &mut rng);
        let uf = simplex(k, &mut rng);
        let itf = simplex(k, &mut rng);
        let mut tags: Vec<usize> = (0..k).collect();
        tags.rotate_left(n % k);
        let cot = RecCot::new(tags[..2].to_vec()).unwrap();
        let label = Label::from_bool(n % 2 == 0);
        let analytic: Vec<f64> = v.bce_grad(&uf, &itf, &cot, label).unwrap().values().collect();
        let mut x: Vec<f64> = v.values().collect();
        let numeric = central_difference(&mut x, STEP, |p| unflatten_validator(k, p).bce_loss(&uf, &itf, &cot, label).unwrap());
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    assert!(worst < 1e-5, "max relative error {worst:e}");
}

fn tiny_shape(n_users: usize, n_items: usize, num_tags: usize) -> CtrShape {
    CtrShape { id_dim: 3, enc_dim: 6, connector_hidden: 4, pref_dim: 3, hidden: 5, ..CtrShape::new(n_users, n_items, num_tags) }
}

#[test]
fn ctr_model_gradient() {
    let env = EnvConfig {
        n_users: 6,
        n_items: 12,
        interactions_per_user: 3,
        history_len: 4,
        num_tags: 4,
        cot_len: 2,
        ..EnvConfig::default()
    };
    let data = make_synthetic(&env).unwrap();
    let shape = tiny_shape(6, 12, 4);
    let mut rng = SeedStream::new(RngSeed(404)).rng();
    let mut worst = 0.0f64;
    for n in 0..INSTANCES {
        let params = CtrModelParams::init(shape, &SeedStream::new(RngSeed(n as u64)));
        let prefs: PreferenceFeatures =
            (0..6u32).map(|u| (u, (0..shape.enc_dim).map(|_| rng.random_range(-1.0..1.0)).collect())).collect();
        let start = (n * 3) % data.interactions.len();
        let batch: Vec<Interaction> = data.interactions.iter().cycle().skip(start).take(4).cloned().collect();
        let (_, grad) = ctr_loss_and_grad(&params, &data, &batch, Some(&prefs)).unwrap();
        let mut x = params.values().to_vec();
        let numeric = central_difference(&mut x, STEP, |v| {
            let p = CtrModelParams::from_values(shape, v.to_vec()).unwrap();
            ctr_loss_and_grad(&p, &data, &batch, Some(&prefs)).unwrap().0
        });
        worst = worst.max(max_relative_error(grad.values(), &numeric));
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");
}
