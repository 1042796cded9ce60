use mott_core::env::{generate_environment, interaction_value, Environment, ModelParams};
use mott_core::rng::RngStream;
use mott_core::stats::{binomial_band, hill_tail_index, ks_one_sample, mean};
use mott_core::MottError;
use proptest::prelude::*;
use rand::Rng;

fn gaps(env: &Environment) -> Vec<f64> {
    env.omega_slice().windows(2).map(|w| w[1] - w[0]).collect()
}

#[test]
fn mean_gap_at_unit_intensity() {
    let env = generate_environment(&ModelParams::new(1.0), 500_000, RngStream::new(11, 0)).unwrap();
    let g = gaps(&env);
    assert_eq!(g.len(), 1_000_000);
    let m = mean(&g);
    assert!((m - 1.0).abs() < 0.01, "mean gap {m}");
}

#[test]
fn gaps_are_exponential() {
    let rho = 0.7;
    let env = generate_environment(&ModelParams::new(rho), 500_000, RngStream::new(12, 3)).unwrap();
    let ks = ks_one_sample(&gaps(&env), |x| 1.0 - (-rho * x).exp()).unwrap();
    assert!(ks.p_value > 1e-3, "{ks:?}");
}

#[test]
fn holding_time_survival() {
    let env = generate_environment(&ModelParams::new(1.0).with_kappa(0.5), 500_000, RngStream::new(13, 0)).unwrap();
    let tau = env.tau_slice();
    let p = tau.iter().filter(|&&t| t >= 4.0).count() as f64 / tau.len() as f64;
    let (lo, hi) = binomial_band(0.5, tau.len(), 3.0);
    assert!(p > lo && p < hi, "P(tau >= 4) = {p}");
    assert!(tau.iter().all(|&t| t >= 1.0));
}

#[test]
fn holding_time_hill_slope() {
    let kappa = 0.5;
    let env = generate_environment(&ModelParams::new(1.0).with_kappa(kappa), 500_000, RngStream::new(14, 0)).unwrap();
    let h = hill_tail_index(env.tau_slice(), 0.1).unwrap();
    assert!((h.estimate - kappa).abs() < 0.02, "{h:?}");
}

#[test]
fn no_kappa_means_unit_tau() {
    let env = generate_environment(&ModelParams::new(2.0), 100, RngStream::new(1, 1)).unwrap();
    assert!(env.tau_slice().iter().all(|&t| t == 1.0));
    assert!(!env.has_holding_times());
}

#[test]
fn determinism_and_serialization() {
    let p = ModelParams::new(0.8).with_beta(1.0).with_lambda(0.5).with_kappa(0.3);
    let a = generate_environment(&p, 300, RngStream::new(99, 4)).unwrap();
    let b = generate_environment(&p, 300, RngStream::new(99, 4)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let c = generate_environment(&p, 300, RngStream::new(99, 5)).unwrap();
    assert_ne!(a.omega_slice(), c.omega_slice());

    let back = Environment::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("env.json");
    a.save(&path).unwrap();
    assert_eq!(Environment::load(&path).unwrap(), a);
}

#[test]
fn interaction_examples() {
    let p = ModelParams::new(1.0);
    assert_eq!(interaction_value(&p, 0.3, 0.3), 0.0);
    assert_eq!(interaction_value(&p, 0.0, 1.0), 1.0);
    let mut rng = RngStream::new(5, 0).rng();
    for _ in 0..10_000 {
        let (a, b): (f64, f64) = (rng.random(), rng.random());
        let u = interaction_value(&p, a, b);
        assert_eq!(u, interaction_value(&p, b, a));
        assert!((0.0..=1.0).contains(&u));
    }
}

#[test]
fn rejects_bad_parameters() {
    let s = RngStream::new(0, 0);
    for p in [
        ModelParams::new(0.0),
        ModelParams::new(-1.0),
        ModelParams::new(1.0).with_beta(-0.1),
        ModelParams::new(1.0).with_lambda(-1.0),
        ModelParams::new(1.0).with_kappa(1.0),
        ModelParams::new(f64::NAN),
    ] {
        assert!(matches!(generate_environment(&p, 10, s), Err(MottError::Parameter(_))), "{p:?}");
    }
    assert!(matches!(generate_environment(&ModelParams::new(1.0), 0, s), Err(MottError::Parameter(_))));
}

#[test]
fn from_parts_checks_arrays() {
    let p = ModelParams::new(1.0);
    let s = RngStream::new(0, 0);
    let ok = Environment::from_parts(p, s, vec![-1.0, 0.0, 2.0], vec![0.0; 3], vec![1.0; 3]).unwrap();
    assert_eq!(ok.half_width(), 1);
    assert_eq!(ok.gap(0), 2.0);
    assert!(Environment::from_parts(p, s, vec![0.0, 1.0], vec![0.0; 2], vec![1.0; 2]).is_err());
    assert!(Environment::from_parts(p, s, vec![-1.0, 0.5, 2.0], vec![0.0; 3], vec![1.0; 3]).is_err());
    assert!(Environment::from_parts(p, s, vec![1.0, 0.0, 2.0], vec![0.0; 3], vec![1.0; 3]).is_err());
    assert!(Environment::from_parts(p, s, vec![-1.0, 0.0, 2.0], vec![0.0; 3], vec![0.5, 1.0, 1.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn omega_increasing_with_palm_origin(seed in any::<u64>(), stream in 0u64..1000, rho in 0.1f64..5.0, n in 1usize..400) {
        let env = generate_environment(&ModelParams::new(rho), n, RngStream::new(seed, stream)).unwrap();
        prop_assert_eq!(env.omega(0), 0.0);
        prop_assert_eq!(env.omega_slice().len(), 2 * n + 1);
        prop_assert!(env.omega_slice().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn interaction_symmetric_in_range(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        for inter in [mott_core::env::Interaction::AbsDiff, mott_core::env::Interaction::Mott, mott_core::env::Interaction::Zero] {
            let mut p = ModelParams::new(1.0);
            p.interaction = inter;
            let u = interaction_value(&p, a, b);
            prop_assert_eq!(u, interaction_value(&p, b, a));
            prop_assert!((0.0..=1.0).contains(&u));
        }
    }
}
