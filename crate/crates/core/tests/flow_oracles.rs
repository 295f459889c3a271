use xicoal::limitflow::{
    exp_functional, lamperti_reconstruct, map_tests, simulate_flow, simulate_flow_from, Compensation, FlowModel,
    FlowOptions, MapDesign,
};
use xicoal::model::{ModelConfig, WeightLaw};
use xicoal::numerics::quad::QuadControls;
use xicoal::numerics::stats::Moments;
use xicoal::rng::{replicates, StreamTag};

fn point_model() -> FlowModel {
    FlowModel::new(&ModelConfig::power(0.5, 1.0, WeightLaw::Constant { c: 1.0 }, 0)).unwrap()
}

/// Exp-sinh trapezoid for `∫_0^∞ f`.
fn exp_sinh<F: Fn(f64) -> f64>(f: F, h: f64) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let steps = (6.0 / h) as i64;
    (-steps..=steps)
        .map(|i| {
            let t = i as f64 * h;
            let a = (half_pi * t.sinh()).exp();
            f(a) * a * half_pi * t.cosh()
        })
        .sum::<f64>()
        * h
}

#[test]
fn laplace_exponent_agrees_with_independent_quadrature() {
    let m = point_model();
    let adaptive = m.laplace_exponent(1.0, QuadControls::default());
    let ts = exp_sinh(|a| -(-m.g(a)).exp_m1() * a.powf(-0.5), 1.0 / 64.0);
    assert!((adaptive.value - ts).abs() < 1e-6, "{} vs {ts}", adaptive.value);
    assert!((adaptive.value - 2.363_271_8).abs() < 1e-6, "{}", adaptive.value);

    let gm = FlowModel::new(&ModelConfig::power(0.3, 2.0, WeightLaw::Gamma { shape: 1.0, scale: 1.0 }, 0)).unwrap();
    let ts = exp_sinh(|a| 2.0 * -(-1.5 * gm.g(a)).exp_m1() * a.powf(-0.3), 1.0 / 64.0);
    assert!((gm.laplace_exponent(1.5, QuadControls::default()).value - ts).abs() < 1e-6);
}

#[test]
fn subordinator_matches_laplace_exponent() {
    let m = point_model();
    let t = 1.0;
    let comp = Compensation::new(&m, FlowOptions::default());
    let paths = replicates(11, StreamTag::Flow, 10_000, |_, rng| {
        simulate_flow_from(&m, &[], 0.0, t, comp, rng).unwrap()
    });
    for q in [1.0, 1.5] {
        let s: Moments = paths.iter().map(|p| (-q * p.xi_at(t).unwrap()).exp()).collect();
        let phi = m.laplace_exponent(q, QuadControls::default()).value;
        assert!((s.mean - (-t * phi).exp()).abs() < 3.0 * s.std_err(), "q={q}: {} vs {}", s.mean, (-t * phi).exp());
    }
    let atoms: Moments = paths.iter().map(|p| p.jumps() as f64).collect();
    let rate = m.atom_rate(FlowOptions::default().a_max) * t;
    assert!((atoms.mean - rate).abs() < 3.0 * atoms.std_err());
    assert!((atoms.variance() / rate - 1.0).abs() < 0.05);
}

#[test]
fn exponential_functional_has_mean_one_over_phi() {
    let m = point_model();
    let comp = Compensation::new(&m, FlowOptions { a_max: 1e3, compensate_x: false });
    let vals = replicates(12, StreamTag::Flow, 4000, |_, rng| {
        let p = simulate_flow_from(&m, &[], 0.0, 30.0, comp, rng).unwrap();
        let ef = exp_functional(&p, 1.5, 1e-6).unwrap();
        assert!(!ef.flagged);
        ef.value
    });
    let s: Moments = vals.into_iter().collect();
    let target = 1.0 / m.laplace_exponent(1.5, QuadControls::default()).value;
    assert!((s.mean - target).abs() < 3.0 * s.std_err(), "{} vs {target}", s.mean);
}

#[test]
fn coordinates_are_ordered_and_radial_part_decreases() {
    let m = FlowModel::new(&ModelConfig::power(0.5, 1.0, WeightLaw::Gamma { shape: 1.0, scale: 1.0 }, 0)).unwrap();
    let lambdas = [0.1, 0.4, 0.7, 0.95];
    replicates(13, StreamTag::Flow, 20, |_, rng| {
        let p = simulate_flow(&m, &lambdas, 2.0, FlowOptions { a_max: 300.0, compensate_x: true }, rng).unwrap();
        for i in 0..p.jumps() {
            let x = &p.x[i * 4..(i + 1) * 4];
            assert!(x.windows(2).all(|w| w[0] <= w[1]));
            assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let mu = lamperti_reconstruct(&p, 0.5);
        let grid: Vec<f64> = (0..200).map(|i| i as f64 * 0.01).collect();
        let r: Vec<f64> = grid.iter().map(|&t| mu.at(t).unwrap().radial).collect();
        assert!(r.windows(2).all(|w| w[1] <= w[0]));
    });
}

#[test]
fn map_battery_statistic_shrinks_with_more_paths() {
    let m = point_model();
    let design = MapDesign::default();
    let comp = Compensation::new(&m, FlowOptions { a_max: 1e3, compensate_x: false });
    let run = |count: usize, seed: u64| {
        let paths = replicates(seed, StreamTag::Flow, count, |_, rng| {
            simulate_flow_from(&m, &[], 0.0, 3.0, comp, rng).unwrap()
        });
        let scaled = replicates(seed + 1, StreamTag::Flow, count, |_, rng| {
            simulate_flow_from(&m, &[], design.gamma.ln(), 3.0, comp, rng).unwrap()
        });
        map_tests(&paths, &scaled, 0.5, design).unwrap()
    };
    let small = run(1000, 20);
    let large = run(10_000, 30);
    assert!(large.stationarity.statistic < small.stationarity.statistic);
    assert!(large.self_similarity.statistic < small.self_similarity.statistic);
    assert!(large.independence.p_value > 0.001);
}
