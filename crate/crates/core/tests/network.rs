use std::sync::Arc;

use mott_core::env::{generate_environment, Environment, ModelParams};
use mott_core::graph::BandedGraph;
use mott_core::network::{
    boundary_margin, build_truncated_network, conductance, default_cutoff, mass_moment, BiasScale, TruncatedNetwork,
};
use mott_core::resistance::effective_resistance;
use mott_core::rng::RngStream;
use mott_core::stats::binomial_band;
use mott_core::MottError;
use proptest::prelude::*;
use rand::Rng;

fn env_for(params: ModelParams, k: usize, n: usize, seed: u64) -> Arc<Environment> {
    let big = k * n + boundary_margin(params.rho);
    Arc::new(generate_environment(&params, big, RngStream::new(seed, 0)).unwrap())
}

fn full(env: &Arc<Environment>, k: usize, n: usize) -> TruncatedNetwork {
    build_truncated_network(env.clone(), k, n, 2 * k * n).unwrap()
}

#[test]
fn log_two_separation() {
    let omega = vec![-1.0, 0.0, std::f64::consts::LN_2];
    let env = Environment::from_parts(ModelParams::new(1.0), RngStream::new(0, 0), omega, vec![0.2; 3], vec![1.0; 3]).unwrap();
    let c = conductance(&env, 1, 0, BiasScale::Unscaled).unwrap();
    assert!((c - 0.5).abs() < 1e-15);
}

#[test]
fn conductance_symmetric_and_errors() {
    let p = ModelParams::new(0.7).with_beta(2.0).with_lambda(0.3);
    let env = generate_environment(&p, 200, RngStream::new(3, 0)).unwrap();
    let mut rng = RngStream::new(4, 0).rng();
    for _ in 0..10_000 {
        let i = rng.random_range(-200i64..=200);
        let j = rng.random_range(-200i64..=200);
        if i == j {
            continue;
        }
        for b in [BiasScale::Unscaled, BiasScale::Scaled(50)] {
            let c = conductance(&env, i, j, b).unwrap();
            assert_eq!(c, conductance(&env, j, i, b).unwrap());
            assert!(c >= 0.0 && c.is_finite());
        }
    }
    assert!(matches!(conductance(&env, 5, 5, BiasScale::Unscaled), Err(MottError::Domain(_))));
    assert!(matches!(conductance(&env, 0, 201, BiasScale::Unscaled), Err(MottError::Domain(_))));
}

#[test]
fn nearest_neighbour_resistance_tail() {
    // P(1/c(omega_0, omega_1) >= u) = P(gap >= ln u) = u^{-rho}.
    let rho = 0.7;
    let p = ModelParams::new(rho);
    let draws = 1_000_000u64;
    let base = RngStream::new(21, 0);
    let r: Vec<f64> = (0..draws)
        .map(|s| {
            let env = generate_environment(&p, 1, base.replicate(s)).unwrap();
            1.0 / conductance(&env, 0, 1, BiasScale::Unscaled).unwrap()
        })
        .collect();
    for u in [2.0f64, 4.0, 8.0] {
        let target = u.powf(-rho);
        let emp = r.iter().filter(|&&x| x >= u).count() as f64 / draws as f64;
        let (lo, hi) = binomial_band(target, draws as usize, 3.0);
        assert!(emp > lo && emp < hi, "u = {u}: {emp} vs {target}");
    }
}

#[test]
fn no_cutoff_interior_matches_formula() {
    let p = ModelParams::new(0.9).with_beta(1.5).with_lambda(1.0);
    let (k, n) = (2, 30);
    let env = env_for(p, k, n, 8);
    let net = full(&env, k, n);
    let m = (k * n) as i64;
    for i in (-m + 1)..m {
        for j in (i + 1)..m {
            let direct = conductance(&env, i, j, BiasScale::Scaled(n as u64)).unwrap();
            assert_eq!(net.conductance(i, j).unwrap(), direct);
            assert_eq!(net.conductance(j, i).unwrap(), direct);
        }
    }
    // Boundary clusters collect every site beyond +-Kn.
    let direct: f64 = (m..=env.half_width() as i64)
        .map(|q| conductance(&env, 0, q, BiasScale::Scaled(n as u64)).unwrap())
        .sum();
    let got = net.conductance(0, m).unwrap();
    assert!((got - direct).abs() <= 1e-12 * direct);
}

#[test]
fn dropped_mass_within_bound() {
    let p = ModelParams::new(1.0);
    let (k, n, cutoff) = (2, 500, 60);
    for seed in 0..100 {
        let env = env_for(p, k, n, 1000 + seed);
        let cut = build_truncated_network(env.clone(), k, n, cutoff).unwrap();
        let exact = full(&env, k, n);
        let dropped = exact.graph().total_conductance() - cut.graph().total_conductance();
        assert!(dropped >= -1e-12, "seed {seed}: negative drop {dropped}");
        assert!(dropped <= cut.dropped_mass_bound() * (1.0 + 1e-9) + 1e-15, "seed {seed}: {dropped} > {}", cut.dropped_mass_bound());
    }
}

#[test]
fn cutoff_soundness() {
    // Adding edges of total conductance D raises an effective conductance by at most D.
    let p = ModelParams::new(1.0).with_beta(1.0).with_lambda(0.5);
    let (k, n, cutoff) = (2, 100, 12);
    for seed in 0..100 {
        let env = env_for(p, k, n, 5000 + seed);
        let cut = build_truncated_network(env.clone(), k, n, cutoff).unwrap();
        let exact = full(&env, k, n);
        let (a, b) = (-(n as i64), n as i64);
        let rc = effective_resistance(&cut, &[a], &[b]).unwrap().resistance;
        let re = effective_resistance(&exact, &[a], &[b]).unwrap().resistance;
        assert!(re <= rc * (1.0 + 1e-10), "seed {seed}");
        assert!(1.0 / re - 1.0 / rc <= cut.dropped_mass_bound() * (1.0 + 1e-9) + 1e-12, "seed {seed}");
    }
}

#[test]
fn monotone_in_cutoff() {
    let p = ModelParams::new(0.6);
    let (k, n) = (1, 80);
    let env = env_for(p, k, n, 77);
    let mut prev: Option<(TruncatedNetwork, f64)> = None;
    for cutoff in [1, 2, 5, 10, 40, 160] {
        let net = build_truncated_network(env.clone(), k, n, cutoff).unwrap();
        let r = effective_resistance(&net, &[-40], &[40]).unwrap().resistance;
        if let Some((pn, pr)) = &prev {
            assert!(r <= pr * (1.0 + 1e-12));
            let m = (k * n) as i64;
            for i in -m..=m {
                for j in (i + 1)..=m {
                    assert!(net.conductance(i, j).unwrap() >= pn.conductance(i, j).unwrap());
                }
            }
        }
        prev = Some((net, r));
    }
}

#[test]
fn three_node_masses() {
    let g = BandedGraph::from_edges(3, &[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]).unwrap();
    assert_eq!(g.row_sums(), vec![2.0, 2.0, 2.0]);
}

#[test]
fn handshake_identity() {
    let p = ModelParams::new(1.3).with_beta(0.5).with_lambda(2.0);
    let env = env_for(p, 3, 50, 9);
    let net = build_truncated_network(env, 3, 50, 40).unwrap();
    let total: f64 = net.masses().iter().sum();
    let twice = 2.0 * net.graph().total_conductance();
    assert!((total - twice).abs() <= 1e-12 * twice);
    let m7 = net.invariant_mass(7).unwrap();
    assert!((m7 - net.masses()[(7 + 150) as usize]).abs() <= 1e-14 * m7);
    assert!(matches!(net.invariant_mass(151), Err(MottError::Domain(_))));
}

#[test]
fn measure_additive_and_validated() {
    let p = ModelParams::new(1.0).with_lambda(1.0);
    let env = env_for(p, 2, 200, 10);
    let net = build_truncated_network(env, 2, 200, 60).unwrap();
    let ab = net.measure_interval(-1.5, 0.25).unwrap().raw;
    let bc = net.measure_interval(0.25, 1.75).unwrap().raw;
    let ac = net.measure_interval(-1.5, 1.75).unwrap().raw;
    assert!((ab + bc - ac).abs() <= 1e-12 * ac);
    let whole = net.measure_interval(-2.0, 2.0).unwrap().raw;
    let total: f64 = net.masses().iter().sum();
    assert!((whole - total).abs() <= 1e-12 * total);
    assert!(matches!(net.measure_interval(0.5, 0.5), Err(MottError::Domain(_))));
    assert!(matches!(net.measure_interval(0.5, 0.2), Err(MottError::Domain(_))));
    assert!(matches!(net.measure_interval(-3.0, 0.2), Err(MottError::Domain(_))));
}

#[test]
fn window_too_small_reports_required_width() {
    let p = ModelParams::new(1.0);
    let env = Arc::new(generate_environment(&p, 100, RngStream::new(0, 0)).unwrap());
    match build_truncated_network(env, 1, 100, 60) {
        Err(MottError::Precondition { required_half_width: Some(r), .. }) => assert_eq!(r, 100 + boundary_margin(1.0)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn default_cutoff_values() {
    assert_eq!(default_cutoff(1.0, 100), 60);
    assert_eq!(default_cutoff(0.5, 100_000), (16.0 * 100_000f64.ln()).ceil() as usize);
}

#[test]
fn origin_mass_mean() {
    // E c(omega_0) = 2 sum_k (rho / (1 + rho))^k = 2 rho.
    for rho in [0.5, 1.0, 2.0] {
        let est = mass_moment(&ModelParams::new(rho), 1.0, 20_000, RngStream::new(31, 0)).unwrap();
        assert!((est.estimate / (2.0 * rho) - 1.0).abs() < 0.02, "rho {rho}: {est:?}");
    }
}

#[test]
fn normalized_mass_unbiased() {
    let rho = 1.0;
    let n = 100_000;
    let env = env_for(ModelParams::new(rho), 1, n, 41);
    let net = build_truncated_network(env, 1, n, default_cutoff(rho, n)).unwrap();
    let m = net.measure_interval(0.0, 1.0).unwrap().normalized;
    assert!((m / (2.0 * rho) - 1.0).abs() < 0.02, "{m}");
}

#[test]
fn normalized_mass_biased() {
    let (rho, lambda) = (1.0, 1.0);
    let n = 100_000;
    let env = env_for(ModelParams::new(rho).with_lambda(lambda), 1, n, 42);
    let net = build_truncated_network(env, 1, n, default_cutoff(rho, n)).unwrap();
    let m = net.measure_interval(0.0, 1.0).unwrap().normalized;
    // 2 rho * int_0^1 e^{2 lambda r / rho} dr by the midpoint rule.
    let steps = 10_000;
    let integral: f64 = (0..steps)
        .map(|s| (2.0 * lambda * (s as f64 + 0.5) / steps as f64 / rho).exp())
        .sum::<f64>()
        / steps as f64;
    let target = 2.0 * rho * integral;
    assert!((m / target - 1.0).abs() < 0.05, "{m} vs {target}");
}

#[test]
fn export_writes_triplets_and_header() {
    let p = ModelParams::new(1.0);
    let env = env_for(p, 1, 20, 3);
    let net = build_truncated_network(env, 1, 20, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    net.export(dir.path(), "net").unwrap();
    let csv = std::fs::read_to_string(dir.path().join("net.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("i,j,conductance"));
    assert_eq!(csv.lines().count() - 1, net.labelled_edges().count());
    let head: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("net.json")).unwrap()).unwrap();
    assert_eq!(head["K"], 1);
    assert_eq!(head["cutoff"], 5);
    assert!(head["dropped_mass_bound"].as_f64().unwrap() >= 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn network_conductances_symmetric_nonnegative(
        seed in any::<u64>(),
        rho in 0.3f64..3.0,
        beta in 0.0f64..3.0,
        lambda in 0.0f64..3.0,
        n in 5usize..40,
        cutoff in 1usize..30,
    ) {
        let p = ModelParams::new(rho).with_beta(beta).with_lambda(lambda);
        let env = env_for(p, 1, n, seed);
        let net = build_truncated_network(env, 1, n, cutoff).unwrap();
        let m = n as i64;
        for i in -m..=m {
            for j in -m..=m {
                if i != j {
                    let c = net.conductance(i, j).unwrap();
                    prop_assert!(c >= 0.0 && c.is_finite());
                    prop_assert_eq!(c, net.conductance(j, i).unwrap());
                }
            }
        }
    }
}
