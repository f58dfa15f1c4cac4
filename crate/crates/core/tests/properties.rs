//! Randomised invariants of the finite-state engine.

use proptest::prelude::*;

use dirichlet_core::chain::path_rng;
use dirichlet_core::potential::green_apply;
use dirichlet_core::projection::{harmonic_extension, poisson_kernel};
use dirichlet_core::random::{random_domain, random_form, random_function, random_measure, RandomFormConfig};
use dirichlet_core::{DiscreteForm, FunctionVector, NodeSet, SignedMeasure};

fn setup(seed: u64) -> (DiscreteForm, NodeSet, rand_chacha::ChaCha8Rng) {
    let mut rng = path_rng(seed, 0);
    let form = random_form(
        &mut rng,
        &RandomFormConfig {
            max_states: 20,
            ..RandomFormConfig::default()
        },
    );
    let d = random_domain(&mut rng, &form);
    (form, d, rng)
}

fn clamp01(u: &FunctionVector) -> Vec<f64> {
    u.iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_nonnegative_and_markovian(seed in any::<u64>()) {
        let (form, _, mut rng) = setup(seed);
        let u = random_function(&mut rng, form.n(), -2.0, 2.0);
        let e = form.energy(&u, &u).unwrap();
        prop_assert!(e >= -1e-12);
        let t = clamp01(&u);
        prop_assert!(form.energy(&t, &t).unwrap() <= e + 1e-12);
    }

    #[test]
    fn generator_is_dual_to_energy(seed in any::<u64>()) {
        let (form, _, mut rng) = setup(seed);
        let n = form.n();
        let u = random_function(&mut rng, n, -1.0, 1.0);
        let v = random_function(&mut rng, n, -1.0, 1.0);
        let lu = form.generator() * nalgebra::DVector::from_column_slice(&u);
        let rhs: f64 = (0..n).map(|x| -lu[x] * v[x] * form.m()[x]).sum();
        let e = form.energy(&u, &v).unwrap();
        prop_assert!((e - rhs).abs() <= 1e-10 * (1.0 + e.abs()));
    }

    #[test]
    fn harmonic_extension_minimises_energy(seed in any::<u64>()) {
        let (form, d, mut rng) = setup(seed);
        let n = form.n();
        let g = random_function(&mut rng, n, -1.0, 1.0);
        let h = harmonic_extension(&form, &d, &g).unwrap();
        let eh = form.energy(&h, &h).unwrap();
        // any other function agreeing with g off D has at least this energy
        let w = random_function(&mut rng, n, -1.0, 1.0);
        let other: Vec<f64> = (0..n).map(|x| if d.contains(x) { h[x] + w[x] } else { h[x] }).collect();
        prop_assert!(form.energy(&other, &other).unwrap() >= eh - 1e-10);
        let kernel = poisson_kernel(&form, &d).unwrap().apply(&g);
        for x in 0..n {
            prop_assert!((kernel[x] - h[x]).abs() < 1e-10);
        }
    }

    #[test]
    fn potentials_are_positive_and_monotone(seed in any::<u64>()) {
        let (form, d, mut rng) = setup(seed);
        let mu = random_measure(&mut rng, &d, 0.0, 1.0);
        let r = green_apply(&form, &d, &mu).unwrap();
        prop_assert!(r.iter().all(|&v| v >= -1e-14));
        let more = SignedMeasure(mu.iter().map(|v| v + 0.1).collect());
        let r2 = green_apply(&form, &d, &more).unwrap();
        prop_assert!(r.iter().zip(r2.iter()).all(|(a, b)| a <= &(b + 1e-12)));
        let k = poisson_kernel(&form, &d).unwrap();
        for &x in d.iter() {
            prop_assert!(k.row(x).iter().all(|&p| p >= -1e-14));
            prop_assert!(k.row(x).iter().sum::<f64>() <= 1.0 + 1e-12);
        }
    }
}
