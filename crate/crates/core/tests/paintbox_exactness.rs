//! The thinned event sampler against direct constructions with explicit
//! mass partitions.

use std::collections::BTreeMap;

use xicoal::model::{ModelConfig, WeightLaw};
use xicoal::numerics::special::power_sum;
use xicoal::paintbox::{sample_next_event, throw_balls, BlockState, EventSampler, Region};
use xicoal::rng::{stream, StreamTag};

fn cfg(law: WeightLaw) -> ModelConfig {
    ModelConfig::power(0.5, 1.0, law, 0)
}

fn within(observed: f64, expected: f64, sd: f64, z: f64) -> bool {
    (observed - expected).abs() <= z * sd
}

#[test]
fn two_singletons_merge_at_zeta_three_halves() {
    let sampler = EventSampler::new(&cfg(WeightLaw::Constant { c: 1.0 })).unwrap();
    let mut rng = stream(11, StreamTag::Paintbox, 0);
    let reps = 100_000;
    let state = BlockState::singletons(2);
    let mut total = 0.0;
    let (mut k1, mut k2) = (0u64, 0u64);
    for _ in 0..reps {
        let (w, k, next) = sample_next_event(&sampler, &state, &mut rng).unwrap();
        assert_eq!(next.census().get(&2), Some(&1));
        total += w;
        match k as u64 {
            1 => k1 += 1,
            2 => k2 += 1,
            _ => {}
        }
    }
    let rate = power_sum(1.5, 1, None);
    let mean = total / reps as f64;
    // Exponential waiting times: sd of the mean is mean / sqrt(reps).
    assert!(within(mean, 1.0 / rate, 1.0 / rate / (reps as f64).sqrt(), 4.0));
    // P(k=1)/P(k=2) = 2^{3/2}; delta-method error.
    let ratio = k1 as f64 / k2 as f64;
    let sd = ratio * (1.0 / k1 as f64 + 1.0 / k2 as f64).sqrt();
    assert!(within(ratio, 2f64.powf(1.5), sd, 4.0), "ratio {ratio}");
}

#[test]
fn gamma_weights_pair_rate() {
    // E Σ p_j² = 2/(k+1) for Dirichlet(1, ..., 1).
    let sampler = EventSampler::new(&cfg(WeightLaw::Gamma { shape: 1.0, scale: 1.0 })).unwrap();
    let mut rng = stream(12, StreamTag::Paintbox, 0);
    let reps = 100_000;
    let state = BlockState::singletons(2);
    let total: f64 = (0..reps)
        .map(|_| sample_next_event(&sampler, &state, &mut rng).unwrap().0)
        .sum();
    let rate: f64 = (1..=2_000_000u64).map(|k| (k as f64).powf(-0.5) * 2.0 / (k as f64 + 1.0)).sum::<f64>()
        + 2.0 * 2.0 / 2_000_000f64.sqrt();
    let mean = total / reps as f64;
    assert!(within(mean, 1.0 / rate, 1.0 / rate / (reps as f64).sqrt(), 4.0));
}

#[test]
fn three_singletons_jump_chain() {
    // Per-k probabilities with p = (1/k, ..., 1/k): triple merge 1/k²,
    // exactly one pair 3(k-1)/k².
    let sampler = EventSampler::new(&cfg(WeightLaw::Constant { c: 1.0 })).unwrap();
    let (mut triple_rate, mut pair_rate) = (0.0, 0.0);
    for k in 1..=5_000_000u64 {
        let kf = k as f64;
        let r = kf.powf(-0.5);
        triple_rate += r / (kf * kf);
        pair_rate += r * 3.0 * (kf - 1.0) / (kf * kf);
    }
    pair_rate += 3.0 * 2.0 / 5_000_000f64.sqrt();
    let p_triple = triple_rate / (triple_rate + pair_rate);
    let mut rng = stream(13, StreamTag::Paintbox, 0);
    let reps = 100_000;
    let state = BlockState::singletons(3);
    let triples = (0..reps)
        .filter(|_| sample_next_event(&sampler, &state, &mut rng).unwrap().2.block_count() == 1)
        .count();
    let freq = triples as f64 / reps as f64;
    let sd = (p_triple * (1.0 - p_triple) / reps as f64).sqrt();
    assert!(within(freq, p_triple, sd, 4.0), "{freq} vs {p_triple}");
}

/// Acceptance probability and outcome law of candidates with a fixed `k`
/// against explicit throws with a materialised mass partition.
fn compare_fixed_k(law: WeightLaw, sizes: &[u64], k: u64, seed: u64) {
    let sampler = EventSampler::new(&cfg(law.clone())).unwrap();
    let b = sizes.len() as u64;
    let region = if k <= sampler.k0(b) { Region::Direct } else { Region::Pair };
    let reps = 200_000;
    let mut rng = stream(seed, StreamTag::Paintbox, 1);
    let state = BlockState::from_sizes(sizes);
    let mut explicit: BTreeMap<Vec<u64>, u64> = BTreeMap::new();
    let mut explicit_merges = 0u64;
    for _ in 0..reps {
        let p = law.sample_mass_partition(k, &mut rng).unwrap();
        let out = throw_balls(&state, &p, &mut rng);
        if out.block_count() < b {
            explicit_merges += 1;
            *explicit.entry(out.sizes()).or_insert(0) += 1;
        }
    }
    let mut lazy: BTreeMap<Vec<u64>, u64> = BTreeMap::new();
    let mut accepted = 0u64;
    let mut rng = stream(seed, StreamTag::Paintbox, 2);
    for _ in 0..reps {
        if let Some(mut out) = sampler.propose_with_k(sizes, k as f64, region, &mut rng).outcome {
            out.sort_unstable();
            accepted += 1;
            *lazy.entry(out).or_insert(0) += 1;
        }
    }
    // Acceptance relates to the merge probability through U(k, b)/R(k).
    let dominance = match region {
        Region::Direct => 1.0,
        Region::Pair => (b * b) as f64 * sampler.c2() / (2.0 * k as f64),
    };
    let p_merge = explicit_merges as f64 / reps as f64;
    let p_acc = accepted as f64 / reps as f64;
    let sd = ((p_merge * (1.0 - p_merge) + p_acc * dominance * (1.0 - p_acc) * dominance) / reps as f64).sqrt();
    assert!(
        within(p_acc * dominance, p_merge, sd, 4.5),
        "acceptance {} vs merge probability {p_merge} (k = {k})",
        p_acc * dominance
    );
    for (outcome, &c) in &explicit {
        let q_exp = c as f64 / explicit_merges as f64;
        let q_lazy = lazy.get(outcome).copied().unwrap_or(0) as f64 / accepted as f64;
        let sd = (q_exp * (1.0 - q_exp) * (1.0 / explicit_merges as f64 + 1.0 / accepted as f64)).sqrt();
        assert!(within(q_lazy, q_exp, sd, 4.5), "{outcome:?}: {q_lazy} vs {q_exp} (k = {k})");
    }
}

#[test]
fn lazy_throws_match_explicit_partitions() {
    let laws = [
        WeightLaw::Constant { c: 1.0 },
        WeightLaw::Gamma { shape: 1.0, scale: 1.0 },
        WeightLaw::Gamma { shape: 0.5, scale: 2.0 },
        WeightLaw::FiniteDiscrete {
            values: vec![1.0, 2.0],
            probs: vec![0.5, 0.5],
        },
    ];
    for (i, law) in laws.iter().enumerate() {
        for &k in &[2u64, 5, 40, 200] {
            compare_fixed_k(law.clone(), &[1, 1, 2, 3], k, 100 + i as u64 * 10 + k);
        }
    }
}
