use std::sync::Arc;

use branchdiff::bgw::{
    qsd_eigenvector, DiscreteModel, FactorizedPoisson, LiteralOperator, Operator, Poisson,
};
use branchdiff::density::{ARule, SmallThetaQsd};
use branchdiff::feller::{density_bessel, density_mixture, extinction_prob};
use branchdiff::moments::{
    compositions, sampling_distribution, second_moments_linear_solve, second_moments_pim,
    second_moments_spectral,
};
use branchdiff::rates::{RateMatrix, ThetaModel};
use branchdiff::specfun;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Probability vector of length `d` with entries bounded away from 0.
fn prob_vector(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, d).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

/// Reversible generator from π and a symmetric nonnegative flux matrix.
fn reversible(max_d: usize) -> impl Strategy<Value = RateMatrix> {
    (2..=max_d)
        .prop_flat_map(|d| (prob_vector(d), prop::collection::vec(0.0f64..0.1, d * d)))
        .prop_map(|(pi, f)| {
            let d = pi.len();
            let mut flux = DMatrix::from_fn(d, d, |i, j| if i < j { f[i * d + j] } else { 0.0 });
            // A chain keeps the generator irreducible.
            for i in 0..d - 1 {
                flux[(i, i + 1)] += 0.01;
            }
            flux = &flux + flux.transpose();
            RateMatrix::from_detailed_balance(&pi, &flux).unwrap()
        })
}

fn pim_model(max_d: usize) -> impl Strategy<Value = ThetaModel> {
    (0.001f64..0.2, (2..=max_d).prop_flat_map(prob_vector))
        .prop_map(|(theta, pi)| ThetaModel::pim(theta, &pi).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exponential_integrals_positive_and_decreasing(x in 1e-3f64..20.0, dx in 1e-3f64..1.0) {
        for f in [specfun::e1, specfun::e2] {
            prop_assert!(f(x) > 0.0);
            prop_assert!(f(x + dx) < f(x));
        }
    }

    #[test]
    fn exponential_integral_recurrence(x in 1e-3f64..20.0) {
        // E2(x) = e^{−x} − x E1(x).
        let lhs = specfun::e2(x);
        let rhs = (-x).exp() - x * specfun::e1(x);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1e-300) + 1e-15);
    }

    #[test]
    fn mixture_equals_bessel(x in 0.01f64..10.0, alpha in -1.0f64..1.0, t in 0.1f64..4.0) {
        let a = density_mixture(x, alpha, t).unwrap();
        let b = density_bessel(x, alpha, t).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300), "{a} vs {b}");
    }

    #[test]
    fn extinction_probability_increases(alpha in -1.0f64..1.0, t in 0.1f64..4.0, dt in 0.01f64..1.0) {
        let p = extinction_prob(alpha, t).unwrap();
        let q = extinction_prob(alpha, t + dt).unwrap();
        prop_assert!((0.0..1.0).contains(&p));
        prop_assert!(q >= p);
    }

    #[test]
    fn reversible_generator_structure(r in reversible(8)) {
        let g = r.gamma();
        for row in g.row_iter() {
            prop_assert!(row.sum().abs() < 1e-12);
        }
        let pi = r.stationary_pi().unwrap();
        prop_assert!((pi.transpose() * g).abs().max() < 1e-12);
        prop_assert!(r.is_reversible(&pi));
        let s = r.spectral_decompose().unwrap();
        prop_assert!(s.orthonormality_error() < 1e-10);
        prop_assert!((s.reconstruct() - g).abs().max() < 1e-10);
        prop_assert!(s.eigenvalues[0].abs() < 1e-12);
        prop_assert!(s.eigenvalues.iter().skip(1).all(|&v| v < 0.0));
    }

    #[test]
    fn second_moment_methods_agree(r in reversible(6), alpha in -2.0f64..-0.05) {
        let a = second_moments_linear_solve(alpha, &r).unwrap();
        let b = second_moments_spectral(alpha, &r).unwrap();
        prop_assert!((&a - &b).abs().max() <= 1e-10 * a.abs().max());
        prop_assert!((&a - a.transpose()).abs().max() == 0.0);
    }

    #[test]
    fn pim_moments_agree_with_solve(theta in 0.01f64..2.0, pi in (2usize..6).prop_flat_map(prob_vector), alpha in -2.0f64..-0.05) {
        let r = RateMatrix::pim(theta, &pi).unwrap();
        let a = second_moments_linear_solve(alpha, &r).unwrap();
        let b = second_moments_pim(alpha, theta, &pi).unwrap();
        prop_assert!((&a - &b).abs().max() <= 1e-10 * a.abs().max());
    }

    #[test]
    fn sampling_distribution_sums_to_one(m in pim_model(4), n_total in 1u32..7) {
        let total: f64 = compositions(n_total, m.d())
            .iter()
            .map(|c| sampling_distribution(c, &m).unwrap())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_distribution_of_reversible_models_sums_to_one(r in reversible(4), n_total in 1u32..6) {
        let m = ThetaModel::new(r.canonical_theta_p().unwrap()).unwrap();
        let total: f64 = compositions(n_total, m.d())
            .iter()
            .map(|c| sampling_distribution(c, &m).unwrap())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn a_rule_constraints_hold(r in reversible(5), x in 0.01f64..20.0) {
        let m = ThetaModel::new(r.canonical_theta_p().unwrap()).unwrap();
        for rule in [ARule::Default, ARule::Split] {
            let q = SmallThetaQsd::new(m.clone(), rule).unwrap();
            for j in 0..q.d() {
                prop_assert!((q.constraint_sum(j, x) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn surface_density_is_linear_in_theta_up_to_exponent(m in pim_model(3), x in 0.05f64..5.0, y in 0.05f64..5.0) {
        let q = SmallThetaQsd::new(m, ARule::Default).unwrap();
        let half = q.with_theta(0.5 * q.model().theta);
        for i in 0..q.d() {
            for j in 0..q.d() {
                if i == j { continue; }
                let a = q.g_surface(i, j, x, y).unwrap();
                let b = half.g_surface(i, j, x, y).unwrap();
                // Only the x^{aθ} factors carry θ beyond the prefactor.
                let spread = q.model().theta * x.max(y) * (x.ln().abs() + y.ln().abs());
                prop_assert!((a / (2.0 * b) - 1.0).abs() <= spread.exp_m1() + 1e-12);
                let swapped = q.g_surface(j, i, y, x).unwrap();
                prop_assert!((a - swapped).abs() <= 1e-12 * a.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn factorised_operator_equals_literal(lambda in 0.5f64..1.2, r12 in 0.0f64..0.3, r21 in 0.0f64..0.3, m_max in 3usize..12, seed in any::<u64>()) {
        let law = Arc::new(Poisson::new(lambda).unwrap());
        let model = DiscreteModel::two_type(law, r12, r21, m_max).unwrap();
        let fast = FactorizedPoisson::new(&model);
        let slow = LiteralOperator::new(&model);
        let n = fast.dim();
        prop_assert_eq!(n, slow.dim());
        let x: Vec<f64> = (0..n).map(|k| ((seed.wrapping_mul(k as u64 + 1) >> 11) as f64) / (1u64 << 53) as f64).collect();
        let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
        fast.apply(&x, &mut a);
        slow.apply(&x, &mut b);
        for k in 0..n {
            prop_assert!((a[k] - b[k]).abs() <= 1e-13 * (1.0 + b[k].abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn qsd_vector_is_a_probability(lambda in 0.6f64..0.98, r12 in 0.01f64..0.3, r21 in 0.01f64..0.3) {
        let law = Arc::new(Poisson::new(lambda).unwrap());
        let model = DiscreteModel::two_type(law, r12, r21, 30).unwrap();
        let q = qsd_eigenvector(&model).unwrap();
        prop_assert!(q.probs.iter().all(|&p| p >= 0.0));
        prop_assert!((q.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(q.eigenvalue > 0.0 && q.eigenvalue < 1.0);
    }
}

#[test]
fn harmonic_numbers_approach_log() {
    let n = 1_000_000u64;
    let h = specfun::harmonic(n);
    assert!((h - (n as f64).ln() - specfun::EULER_GAMMA).abs() < 1e-6);
}
