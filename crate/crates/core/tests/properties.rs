//! Randomized identities and bounds, seed-pinned.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

use spm_core::ascent::{run_spm_ascent, AscentConfig};
use spm_core::landscape::{estimate_rho, grammian, objective_via_grammian};
use spm_core::linalg::{householder_complement, pseudo_inverse, sorted_svd, spectral_norm};
use spm_core::rng::{self, SpmRng};
use spm_core::subspace::{extract_subspace, subspace_distance, subspace_perturbation_bound, RankRule, TensorSubspace};
use spm_core::tensor::{
    add_gaussian_noise, contract, cp_synthesize, flatten_matrix, frobenius_inner, khatri_rao_power, kron, kron_power,
    symmetrize, ComponentEnsemble, DenseTensor,
};
use spm_core::{pinv_stability_bound, weight_estimate, FlatteningSvd};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 100,
        rng_seed: RngSeed::Fixed(0x5eed_cafe),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn random_ensemble(d: usize, k: usize, m: usize, r: &mut SpmRng) -> ComponentEnsemble {
    let a = rng::sphere_columns(d, k, r);
    let w = DVector::from_fn(k, |_, _| {
        let mag = 0.5 + 1.5 * rand::Rng::random::<f64>(r);
        if rand::Rng::random::<bool>(r) {
            mag
        } else {
            -mag
        }
    });
    ComponentEnsemble::new(m, w, a).unwrap()
}

fn tangent(x: &DVector<f64>, r: &mut SpmRng) -> DVector<f64> {
    let q = householder_complement(x);
    let c = rng::unit_sphere(x.len() - 1, r);
    q * c
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn riemannian_gradient_matches_finite_differences(seed in any::<u64>(), d in 3usize..7, k in 1usize..6, n in 2usize..4) {
        let mut r = rng::seeded(seed);
        let a = rng::sphere_columns(d, k, &mut r);
        let s = TensorSubspace::from_components(&a, n).unwrap();
        let x = rng::unit_sphere(d, &mut r);
        let z = tangent(&x, &mut r);
        let h = 1e-5_f64;
        let plus = (&x * h.cos() + &z * h.sin()).normalize();
        let minus = (&x * h.cos() - &z * h.sin()).normalize();
        let fd = (s.objective(&plus).unwrap() - s.objective(&minus).unwrap()) / (2.0 * h);
        let g = s.riemannian_gradient(&x).unwrap();
        prop_assert!(g.dot(&x).abs() < 1e-12);
        prop_assert!((g.dot(&z) - fd).abs() < 1e-6, "analytic {} vs fd {}", g.dot(&z), fd);
    }

    #[test]
    fn riemannian_hessian_matches_finite_differences(seed in any::<u64>(), d in 3usize..7, k in 1usize..6, n in 2usize..4) {
        let mut r = rng::seeded(seed);
        let a = rng::sphere_columns(d, k, &mut r);
        let s = TensorSubspace::from_components(&a, n).unwrap();
        let x = rng::unit_sphere(d, &mut r);
        let z = tangent(&x, &mut r);
        let h = 1e-4;
        let geo = |t: f64| (&x * t.cos() + &z * t.sin()).normalize();
        let fd = (s.objective(&geo(h)).unwrap() - 2.0 * s.objective(&x).unwrap() + s.objective(&geo(-h)).unwrap()) / (h * h);
        let q = s.riemannian_hessian_quadratic(&x, &z).unwrap();
        prop_assert!((q - fd).abs() < 1e-4, "analytic {} vs fd {}", q, fd);
        let hm = s.hessian_form(&x).unwrap();
        prop_assert!((z.dot(&(&hm * &z)) - q).abs() < 1e-10);
    }

    #[test]
    fn grammian_objective_equals_projector_objective(seed in any::<u64>(), d in 3usize..9, n in 2usize..4) {
        let mut r = rng::seeded(seed);
        let k = 1 + (seed as usize % (d * (d + 1) / 2));
        let a = rng::sphere_columns(d, k, &mut r);
        let g = grammian(&a, n).unwrap();
        prop_assume!(g.min_eigenvalue() > 1e-6);
        let s = TensorSubspace::from_components(&a, n).unwrap();
        let x = rng::unit_sphere(d, &mut r);
        let f1 = objective_via_grammian(&a, &g, &x).unwrap();
        let f2 = s.objective(&x).unwrap();
        prop_assert!((f1 - f2).abs() < 1e-9, "{} vs {}", f1, f2);
    }

    #[test]
    fn symmetrized_mixed_powers_have_binomial_norm(seed in any::<u64>(), d in 2usize..6, n in 1usize..6) {
        let mut r = rng::seeded(seed);
        let x = rng::unit_sphere(d, &mut r);
        let z = tangent(&x, &mut r);
        for s in 0..=n {
            let v = kron(&kron_power(x.as_slice(), n - s), &kron_power(z.as_slice(), s));
            let t = symmetrize(&DenseTensor::new(vec![d; n], v).unwrap()).unwrap();
            let expected = binomial(n, s).powf(-0.5);
            prop_assert!((t.frobenius_norm() - expected).abs() < 1e-12, "s={}: {} vs {}", s, t.frobenius_norm(), expected);
        }
    }

    #[test]
    fn flattening_factors_through_khatri_rao(seed in any::<u64>(), d in 2usize..6, k in 1usize..5, m in 3usize..6) {
        let mut r = rng::seeded(seed);
        let e = random_ensemble(d, k, m, &mut r);
        let n = m.div_ceil(2);
        let t = cp_synthesize(&e);
        let flat = flatten_matrix(&t, n).unwrap();
        let left = khatri_rao_power(e.components(), n).unwrap();
        let right = khatri_rao_power(e.components(), m - n).unwrap();
        let oracle = &left * DMatrix::from_diagonal(e.weights()) * right.transpose();
        prop_assert!((flat - oracle).amax() < 1e-12 * (1.0 + e.weights().amax()));
    }

    #[test]
    fn full_contraction_equals_inner_product(seed in any::<u64>(), d in 2usize..5, m in 2usize..5) {
        let mut r = rng::seeded(seed);
        let t = cp_synthesize(&random_ensemble(d, 3, m, &mut r));
        let u = cp_synthesize(&random_ensemble(d, 2, m, &mut r));
        let c = contract(&t, &u).unwrap().scalar().unwrap();
        let ip = frobenius_inner(&t, &u).unwrap();
        prop_assert!((c - ip).abs() < 1e-12 * (1.0 + ip.abs()));
    }

    #[test]
    fn subspace_perturbation_bound_holds(seed in any::<u64>(), d in 3usize..6, k in 1usize..5, scale in -4.0f64..-0.5) {
        let mut r = rng::seeded(seed);
        let e = random_ensemble(d, k, 4, &mut r);
        let t = cp_synthesize(&e);
        let sigma = 10f64.powf(scale);
        let t_hat = add_gaussian_noise(&t, sigma, &mut r).unwrap();
        let m = flatten_matrix(&t, 2).unwrap();
        let m_hat = flatten_matrix(&t_hat, 2).unwrap();
        match subspace_perturbation_bound(&m, &m_hat, k) {
            Ok(b) => {
                let s = extract_subspace(&t, 2, RankRule::Fixed(k)).unwrap();
                let s_hat = extract_subspace(&t_hat, 2, RankRule::Fixed(k)).unwrap();
                let dist = subspace_distance(&s, &s_hat).unwrap();
                prop_assert!(dist <= b.bound + 1e-12, "distance {} > bound {}", dist, b.bound);
            }
            Err(_) => prop_assume!(false),
        }
    }

    #[test]
    fn pseudo_inverse_stability_bound_holds(seed in any::<u64>(), p in 3usize..8, q in 3usize..8, frac in 0.01f64..0.49) {
        let mut r = rng::seeded(seed);
        let rank = 1 + (seed as usize % p.min(q));
        let left = DMatrix::from_fn(p, rank, |_, _| rng::standard_normal(&mut r));
        let right = DMatrix::from_fn(rank, q, |_, _| rng::standard_normal(&mut r));
        let w = left * right;
        let svd = sorted_svd(&w);
        let sigma_r = svd.singular_values[rank - 1];
        let e = DMatrix::from_fn(p, q, |_, _| rng::standard_normal(&mut r));
        let e = &e * (frac * sigma_r / spectral_norm(&e));
        let w_hat = &w + &e;
        let delta = spectral_norm(&e);
        let hat = sorted_svd(&w_hat);
        let inv_s = DMatrix::from_diagonal(&DVector::from_iterator(rank, hat.singular_values[..rank].iter().map(|s| 1.0 / s)));
        let pinv_hat = hat.v.columns(0, rank) * inv_s * hat.u.columns(0, rank).transpose();
        let pinv = pseudo_inverse(&w, 1e-10);
        let err = spectral_norm(&(pinv - pinv_hat));
        let bound = pinv_stability_bound(sigma_r, delta).unwrap();
        prop_assert!(err <= bound * (1.0 + 1e-9), "error {} > bound {}", err, bound);
    }

    #[test]
    fn frame_sandwich_with_exact_rho(seed in any::<u64>(), k in 1usize..5, s in 2usize..7) {
        let mut r = rng::seeded(seed);
        let a = rng::sphere_columns(2, k, &mut r);
        let rho = estimate_rho(&a, s, 4, &mut r).unwrap();
        prop_assert!(rho.exact);
        let gs = grammian(&a, s).unwrap();
        let gh = grammian(&a, s / 2).unwrap();
        let tol = 1e-9;
        prop_assert!(1.0 - rho.lower <= gs.min_eigenvalue() + tol);
        prop_assert!(gs.min_eigenvalue() <= gs.max_eigenvalue() + tol);
        prop_assert!(gs.max_eigenvalue() <= 1.0 + rho.lower + tol, "mu_1 {} > 1 + rho {}", gs.max_eigenvalue(), rho.lower);
        prop_assert!(1.0 + rho.lower <= gh.max_eigenvalue() + tol);
    }

    #[test]
    fn frame_sandwich_with_gershgorin_bound(seed in any::<u64>(), d in 3usize..8, s in 2usize..7) {
        let mut r = rng::seeded(seed);
        let k = 2 + (seed as usize % (2 * d));
        let a = rng::sphere_columns(d, k, &mut r);
        let rho = estimate_rho(&a, s, 4, &mut r).unwrap();
        let gs = grammian(&a, s).unwrap();
        prop_assert!(1.0 - rho.gershgorin <= gs.min_eigenvalue() + 1e-9);
        prop_assert!(gs.max_eigenvalue() <= 1.0 + rho.gershgorin + 1e-9);
        prop_assert!(rho.lower <= rho.upper + 1e-9);
    }

    #[test]
    fn optimality_conditions_at_converged_points(seed in any::<u64>(), d in 3usize..7, n in 2usize..4) {
        let mut r = rng::seeded(seed);
        let k = 1 + (seed as usize % (2 * d));
        let a = rng::sphere_columns(d, k, &mut r);
        let s = TensorSubspace::from_components(&a, n).unwrap();
        let x0 = rng::unit_sphere(d, &mut r);
        let tr = run_spm_ascent(&s, &x0, &AscentConfig::for_half_order(n)).unwrap();
        prop_assume!(tr.converged);
        let x = &tr.final_x;
        let f = s.objective(x).unwrap();
        let nf = n as f64;
        // first order: P(x^n) . x^(n-1) = F x
        let stationarity = (s.pull(x).unwrap() - x * f).norm();
        prop_assert!(stationarity < 1e-6, "stationarity residual {}", stationarity);
        // second order, for tangent z and arbitrary unit y
        let hm = s.hessian_form(x).unwrap();
        let tol = 1e-6;
        for _ in 0..5 {
            let z = tangent(x, &mut r);
            let rhs = (z.dot(&(&hm * &z)) + 2.0 * nf * f) / (2.0 * nf);
            prop_assert!(f >= rhs - tol, "tangent: F {} < {}", f, rhs);
            let y = rng::unit_sphere(d, &mut r);
            let quad = (y.dot(&(&hm * &y)) + 2.0 * nf * f) / (2.0 * nf);
            let derived = quad - 2.0 * (nf - 1.0) * f * x.dot(&y).powi(2);
            prop_assert!(f >= derived - tol, "derived: F {} < {}", f, derived);
        }
    }

    #[test]
    fn noiseless_weights_are_exact(seed in any::<u64>(), d in 3usize..6, m in 3usize..6) {
        let mut r = rng::seeded(seed);
        let k = 1 + (seed as usize % d);
        let e = random_ensemble(d, k, m, &mut r);
        let n = m.div_ceil(2);
        let pinv = FlatteningSvd::compute(&cp_synthesize(&e), n).unwrap().truncated_pinv(k);
        for i in 0..k {
            let w = weight_estimate(&e.component(i), &pinv).unwrap();
            prop_assert!((w - e.weights()[i]).abs() < 1e-8 * e.weights()[i].abs());
        }
    }

    #[test]
    fn symmetrize_is_idempotent_projection(seed in any::<u64>(), d in 2usize..5, m in 2usize..5) {
        let mut r = rng::seeded(seed);
        let len = d.pow(m as u32);
        let raw = DenseTensor::new(vec![d; m], (0..len).map(|_| rng::standard_normal(&mut r)).collect()).unwrap();
        let s1 = symmetrize(&raw).unwrap();
        let s2 = symmetrize(&s1.to_dense()).unwrap();
        let diff = s1.data().iter().zip(s2.data()).fold(0.0f64, |acc, (u, v)| acc.max((u - v).abs()));
        prop_assert!(diff < 1e-14);
        // orthogonal projection: <raw - sym, sym> = 0
        let resid = DenseTensor::new(vec![d; m], raw.data().iter().zip(s1.data()).map(|(u, v)| u - v).collect()).unwrap();
        prop_assert!(frobenius_inner(&resid, &s1).unwrap().abs() < 1e-12 * (1.0 + s1.frobenius_norm().powi(2)));
    }
}
