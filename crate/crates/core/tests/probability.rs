use std::collections::HashMap;

use rand::Rng;
use trackrec_core::generator::{entropy, nucleus};
use trackrec_core::*;

fn simplex<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn all_cots(k: usize) -> Vec<RecCot> {
    let mut out = Vec::new();
    for a in 0..k {
        for b in 0..k {
            if a != b {
                out.push(RecCot::new(vec![a, b]).unwrap());
            }
        }
    }
    out
}

#[test]
fn cot_probabilities_sum_to_one() {
    let mut rng = SeedStream::new(RngSeed(5)).rng();
    for _ in 0..20 {
        let g = GeneratorParams::gaussian(4, 2, 1.5, &mut rng);
        let uf = simplex(4, &mut rng);
        let total: f64 = all_cots(4).iter().map(|c| g.cot_log_prob(&uf, c).unwrap().exp()).sum();
        assert!((total - 1.0).abs() < 1e-10, "total {total}");
    }
}

#[test]
fn sampling_matches_exact_distribution() {
    let mut rng = SeedStream::new(RngSeed(6)).rng();
    let g = GeneratorParams::gaussian(4, 2, 1.0, &mut rng);
    let uf = simplex(4, &mut rng);
    let sampling = SamplingParams { samples: 2, temperature: 1.0, top_p: 1.0 };
    let draws = 100_000;
    let mut counts: HashMap<RecCot, usize> = HashMap::new();
    let mut first = [0usize; 4];
    for _ in 0..draws {
        let c = g.sample_cot(&uf, &sampling, &mut rng).unwrap();
        first[c.tags()[0]] += 1;
        *counts.entry(c).or_default() += 1;
    }
    let slot0 = g.slot_distribution(&uf, &[], 0, 1.0).unwrap();
    for (t, &n) in first.iter().enumerate() {
        let f = n as f64 / draws as f64;
        assert!((f - slot0[t]).abs() < 0.01, "slot 0 tag {t}: {f} vs {}", slot0[t]);
    }
    for c in all_cots(4) {
        let f = counts.get(&c).copied().unwrap_or(0) as f64 / draws as f64;
        let p = g.cot_log_prob(&uf, &c).unwrap().exp();
        assert!((f - p).abs() < 0.01, "{:?}: {f} vs {p}", c.tags());
    }
}

#[test]
fn near_zero_temperature_sampling_is_greedy() {
    let mut rng = SeedStream::new(RngSeed(8)).rng();
    let sampling = SamplingParams { samples: 2, temperature: 1e-6, top_p: 1.0 };
    for _ in 0..50 {
        let g = GeneratorParams::gaussian(8, 4, 1.0, &mut rng);
        let uf = simplex(8, &mut rng);
        assert_eq!(g.sample_cot(&uf, &sampling, &mut rng).unwrap(), g.greedy_cot(&uf).unwrap());
    }
}

#[test]
fn entropy_grows_with_temperature() {
    let mut rng = SeedStream::new(RngSeed(9)).rng();
    for _ in 0..30 {
        let g = GeneratorParams::gaussian(6, 3, 1.0, &mut rng);
        let uf = simplex(6, &mut rng);
        let hs: Vec<f64> = [0.1, 0.3, 1.0, 3.0, 10.0]
            .iter()
            .map(|&t| entropy(&g.slot_distribution(&uf, &[2], 1, t).unwrap()))
            .collect();
        assert!(hs.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{hs:?}");
    }
}

#[test]
fn masked_tags_get_no_mass() {
    let mut rng = SeedStream::new(RngSeed(10)).rng();
    let g = GeneratorParams::gaussian(5, 3, 1.0, &mut rng);
    let p = g.slot_distribution(&simplex(5, &mut rng), &[4, 1], 2, 1.0).unwrap();
    assert_eq!((p[4], p[1]), (0.0, 0.0));
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn small_top_p_keeps_only_the_mode() {
    let kept = nucleus(&[0.1, 0.6, 0.3], 0.5);
    assert_eq!(kept, vec![(1, 1.0)]);
    let kept = nucleus(&[0.1, 0.6, 0.3], 0.85);
    assert_eq!(kept.iter().map(|k| k.0).collect::<Vec<_>>(), vec![1, 2]);
}
