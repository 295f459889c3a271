use proptest::prelude::*;
use rand::SeedableRng;

use xicoal::coag::{apply_coag, coag_coordinate, FreqVector};
use xicoal::model::{tilted_weight_sampler, WeightLaw};
use xicoal::paintbox::{throw_balls, BlockState};
use xicoal::rng::SimRng;
use xicoal::urnstats::{exact_tv, Pmf};

fn law() -> impl Strategy<Value = WeightLaw> {
    prop_oneof![
        Just(WeightLaw::Constant { c: 1.0 }),
        (0.3f64..4.0).prop_map(|shape| WeightLaw::Gamma { shape, scale: 1.0 }),
        Just(WeightLaw::FiniteDiscrete { values: vec![0.5, 2.0], probs: vec![0.4, 0.6] }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn throws_conserve_mass(sizes in prop::collection::vec(1u64..6, 1..30), k in 1usize..12, seed: u64) {
        let state = BlockState::from_sizes(&sizes);
        let mut rng = SimRng::seed_from_u64(seed);
        let p = WeightLaw::Gamma { shape: 1.0, scale: 1.0 }.sample_mass_partition(k as u64, &mut rng).unwrap();
        let next = throw_balls(&state, &p, &mut rng);
        prop_assert_eq!(next.n(), state.n());
        prop_assert!(next.block_count() <= state.block_count());
        prop_assert!(next.block_count() >= 1);
    }

    #[test]
    fn tv_is_a_bounded_symmetric_distance(n in 0u64..15, p in 0.0f64..1.0, m in 0.0f64..6.0) {
        let a = Pmf::binomial(n, p);
        let b = Pmf::poisson(m);
        let ab = exact_tv(&a, &b);
        let ba = exact_tv(&b, &a);
        prop_assert!((ab.value - ba.value).abs() < 1e-14);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab.value));
        let c = Pmf::poisson(m + 0.5);
        let lhs = exact_tv(&a, &c).value;
        prop_assert!(lhs <= ab.value + exact_tv(&b, &c).value + 1e-12);
    }

    #[test]
    fn coagulation_is_homogeneous(
        entries in prop::collection::vec(0.0f64..1.0, 1..6),
        x in 0.05f64..5.0,
        gamma in 0.2f64..5.0,
        law in law(),
    ) {
        prop_assume!(entries.iter().any(|&v| v > 0.0));
        let tw = tilted_weight_sampler(&law, 32).unwrap();
        let z = FreqVector::new(entries).unwrap();
        let zg = z.scale(gamma);
        for ell in 1..8 {
            let lhs = gamma * coag_coordinate(&z, x, ell, &tw).unwrap();
            let rhs = coag_coordinate(&zg, gamma * x, ell, &tw).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-3), "ell={} {} {}", ell, lhs, rhs);
        }
        let table = apply_coag(&z, x, 30, &tw).unwrap();
        prop_assert!(table.values.iter().all(|&v| v >= 0.0));
    }
}
