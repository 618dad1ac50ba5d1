//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every criterion reports even when
//! an earlier one fails. Exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use branchdiff::bgw::{
    compare_surface, extinct_fraction, ks_distance, qsd_eigenvector, simulate, simulate_survivors,
    to_continuum, DiscreteModel, McConfig, Poisson, Window,
};
use branchdiff::density::{ARule, SmallThetaQsd};
use branchdiff::feller::{density_bessel, density_mixture, FellerLaw};
use branchdiff::moments::{
    compositions, moment_u_cross, moment_x_cross, moment_x_power, sampling_distribution,
    second_moments_linear_solve, second_moments_pim, second_moments_small_theta,
    second_moments_spectral, SampleCounts,
};
use branchdiff::rates::{RateMatrix, ThetaModel};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

const ALPHAS: [f64; 3] = [-0.5, 0.0, 0.5];
const TIMES: [f64; 3] = [0.5, 1.0, 5.0];
const PI2: [f64; 2] = [0.75, 0.25];

fn c1_density_forms() -> Verdict {
    let mut worst = 0.0f64;
    for &alpha in &ALPHAS {
        for &t in &TIMES {
            for k in 1..=100 {
                let x = 0.1 * k as f64;
                let a = density_mixture(x, alpha, t).unwrap();
                let b = density_bessel(x, alpha, t).unwrap();
                worst = worst.max((a - b).abs());
            }
        }
    }
    verdict(
        worst <= 1e-10,
        format!("max |mixture - bessel| = {worst:.3e} (tol 1e-10)"),
    )
}

fn c2_conservation() -> Verdict {
    let mut worst = 0.0f64;
    for &alpha in &ALPHAS {
        for &t in &TIMES {
            let law = FellerLaw::new(alpha, t).unwrap().law();
            worst = worst.max((law.total_mass() - 1.0).abs());
        }
    }
    verdict(
        worst <= 1e-6,
        format!("max |atom + mass - 1| = {worst:.3e} (tol 1e-6)"),
    )
}

fn c3_one_type_qsd() -> Verdict {
    let alpha = -0.5;
    let model = DiscreteModel::one_type(Arc::new(Poisson::new(0.975).unwrap()), 160).unwrap();
    let qsd = qsd_eigenvector(&model).unwrap();
    let cont = to_continuum(&model, &qsd, alpha).unwrap();
    let mut worst = 0.0f64;
    let mut at = 0.0;
    for &(x, g) in &cont.marginal {
        if !(0.2..=6.0).contains(&x) {
            continue;
        }
        let exact = 2.0 * alpha.abs() * (-2.0 * alpha.abs() * x).exp();
        let rel = (g - exact).abs() / exact;
        if rel > worst {
            worst = rel;
            at = x;
        }
    }
    verdict(
        worst <= 0.02,
        format!(
            "sup relative error on [0.2, 6] = {worst:.4} at x = {at:.3} (tol 0.02); rho = {:.6}",
            qsd.eigenvalue
        ),
    )
}

fn surface_l1(theta: f64) -> f64 {
    let alpha = -0.5;
    let gamma = RateMatrix::pim(theta, &PI2).unwrap();
    let model = DiscreteModel::matched_two_type(0.975, alpha, &gamma, 160).unwrap();
    let qsd = qsd_eigenvector(&model).unwrap();
    let cont = to_continuum(&model, &qsd, alpha).unwrap();
    let theory = SmallThetaQsd::new(ThetaModel::pim(theta, &PI2).unwrap(), ARule::Default).unwrap();
    compare_surface(&cont, &Window::default(), |x, u| {
        theory.g_surface_xu(0, 1, x, u)
    })
    .unwrap()
    .relative_l1
}

fn c4_two_type_surface() -> Verdict {
    let small: Vec<(f64, f64)> = [0.01, 0.1].iter().map(|&t| (t, surface_l1(t))).collect();
    let large = surface_l1(1.0);
    let ok = small.iter().all(|&(_, l)| l <= 0.10) && large >= 0.30;
    let parts: Vec<String> = small
        .iter()
        .map(|(t, l)| format!("theta={t}: L1={l:.4}"))
        .collect();
    verdict(
        ok,
        format!(
            "{}, theta=1: L1={large:.4} (need <= 0.10, <= 0.10, >= 0.30)",
            parts.join(", ")
        ),
    )
}

fn c5_moment_closure() -> Verdict {
    let theta = 0.05;
    let model = ThetaModel::pim(theta, &PI2).unwrap();
    let q = SmallThetaQsd::new(model.clone(), ARule::Default).unwrap();
    let checks: Vec<(&str, f64, f64)> = vec![
        (
            "E[X1]",
            q.expectation(|x| x[0]),
            moment_x_power(&model, 0, 1).unwrap(),
        ),
        (
            "E[X2]",
            q.expectation(|x| x[1]),
            moment_x_power(&model, 1, 1).unwrap(),
        ),
        (
            "E[X1^2]",
            q.expectation(|x| x[0] * x[0]),
            moment_x_power(&model, 0, 2).unwrap(),
        ),
        (
            "E[X2^2]",
            q.expectation(|x| x[1] * x[1]),
            moment_x_power(&model, 1, 2).unwrap(),
        ),
        (
            "E[X1X2]",
            q.expectation(|x| x[0] * x[1]),
            moment_x_cross(&model, 0, 1, 1, 1).unwrap(),
        ),
        (
            "E[U1U2]",
            q.expectation(|x| {
                let s = x[0] + x[1];
                if s > 0.0 {
                    x[0] * x[1] / (s * s)
                } else {
                    0.0
                }
            }),
            moment_u_cross(&model, 0, 1, 1, 1).unwrap(),
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, quad, closed) in checks {
        let rel = (quad - closed).abs() / closed.abs();
        ok &= rel <= 1e-3;
        parts.push(format!("{name} rel {rel:.2e}"));
    }
    verdict(ok, format!("{} (tol 1e-3)", parts.join(", ")))
}

fn random_reversible(d: usize, rng: &mut ChaCha8Rng) -> RateMatrix {
    let raw: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let pi: Vec<f64> = raw.iter().map(|v| v / s).collect();
    let mut flux = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i + 1..d {
            let f = rng.random_range(0.01..0.5);
            flux[(i, j)] = f;
            flux[(j, i)] = f;
        }
    }
    RateMatrix::from_detailed_balance(&pi, &flux).unwrap()
}

fn c6_spectral_vs_solve() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for d in 2..=5 {
        for _ in 0..20 {
            let r = random_reversible(d, &mut rng);
            let a = second_moments_linear_solve(-0.5, &r).unwrap();
            let b = second_moments_spectral(-0.5, &r).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                worst = worst.max((x - y).abs() / x.abs().max(y.abs()));
            }
        }
    }
    verdict(
        worst <= 1e-10,
        format!("max relative difference = {worst:.3e} over 80 draws (tol 1e-10)"),
    )
}

fn c7_residual_scaling() -> Verdict {
    let base = SmallThetaQsd::new(ThetaModel::pim(0.1, &PI2).unwrap(), ARule::Default).unwrap();
    let points = [[0.5, 1.0], [1.0, 2.0], [2.0, 0.3]];
    let h = 1e-4;
    let mut ok = true;
    let mut parts = Vec::new();
    for phi in &points {
        for theta in [0.1, 0.05] {
            let r1 = base.with_theta(theta).pde_residual(phi, h).unwrap();
            let r2 = base.with_theta(theta / 2.0).pde_residual(phi, h).unwrap();
            let ratio = r1 / r2;
            ok &= (3.2..=4.8).contains(&ratio);
            parts.push(format!("{ratio:.3}"));
        }
    }
    verdict(
        ok,
        format!(
            "res(theta)/res(theta/2) = [{}] (need [3.2, 4.8])",
            parts.join(", ")
        ),
    )
}

fn c8_sampling_normalisation() -> Verdict {
    let pi = [0.5, 0.3, 0.2];
    let mut flux = DMatrix::zeros(3, 3);
    for (i, j, f) in [(0, 1, 0.02), (0, 2, 0.01), (1, 2, 0.015)] {
        flux[(i, j)] = f;
        flux[(j, i)] = f;
    }
    let rates = RateMatrix::from_detailed_balance(&pi, &flux).unwrap();
    let non_pim =
        !rates.is_parent_independent() && rates.is_reversible(&rates.stationary_pi().unwrap());
    let model = ThetaModel::new(rates.canonical_theta_p().unwrap()).unwrap();
    let sum = |m: &ThetaModel| -> f64 {
        compositions(5, 3)
            .iter()
            .map(|c| sampling_distribution(c, m).unwrap())
            .sum()
    };
    let theta = 0.1;
    let d1 = sum(&model.with_theta(theta)) - 1.0;
    let d2 = sum(&model.with_theta(theta / 2.0)) - 1.0;
    // Below this the deficit is rounding and the halving ratio is 0/0.
    let rounding = 1e-13;
    let general_ok = d1.abs() <= theta * theta && d2.abs() <= theta * theta / 4.0;
    let ratio = if d1.abs() > rounding && d2.abs() > rounding {
        let r = d1 / d2;
        format!(
            "ratio {r:.3}{}",
            if (3.2..=4.8).contains(&r) {
                ""
            } else {
                " (outside 4 +- 20%)"
            }
        )
    } else {
        "ratio test not applicable: both deficits at rounding level".to_string()
    };
    let ratio_ok =
        !(d1.abs() > rounding && d2.abs() > rounding) || (3.2..=4.8).contains(&(d1 / d2));

    let pim = ThetaModel::pim(0.1, &PI2).unwrap();
    let expected = [((2, 0), 0.73125), ((0, 2), 0.23125), ((1, 1), 0.0375)];
    let mut table_err = 0.0f64;
    let mut table_sum = 0.0;
    for ((a, b), v) in expected {
        let p = sampling_distribution(&SampleCounts::new(vec![a, b]).unwrap(), &pim).unwrap();
        table_err = table_err.max((p - v).abs());
        table_sum += p;
    }
    let pim_ok = table_err <= 1e-12 && (table_sum - 1.0).abs() <= 1e-12;
    verdict(
        non_pim && general_ok && ratio_ok && pim_ok,
        format!(
            "d=3 non-PIM deficits {d1:.2e}, {d2:.2e} (bound theta^2); {ratio}; PIM table err {table_err:.1e}, sum - 1 = {:.1e}",
            table_sum - 1.0
        ),
    )
}

fn c9_yaglom() -> Verdict {
    let model = DiscreteModel::one_type(Arc::new(Poisson::new(1.0).unwrap()), 2).unwrap();
    let tau = 200;
    let cfg = McConfig {
        generations: tau,
        reps: 0,
        seed: 9,
        y0: 1,
        y1_0: 0,
        cap: None,
    };
    let survivors = simulate_survivors(&model, &cfg, 100_000, 100_000_000).unwrap();
    let w: Vec<f64> = survivors.iter().map(|r| r.y as f64 / tau as f64).collect();
    let sigma2 = model.sigma2();
    let ks = ks_distance(&w, |x| 1.0 - (-2.0 / sigma2 * x).exp());
    verdict(
        ks <= 0.02,
        format!(
            "KS vs Exp(2/sigma^2) = {ks:.4} from {} survivors (tol 0.02)",
            w.len()
        ),
    )
}

/// λ with α = Y0 log λ/λ (Poisson offspring, σ² = λ).
fn matched_lambda(alpha: f64, y0: f64) -> f64 {
    let mut l = 1.0 + alpha / y0;
    for _ in 0..50 {
        let f = y0 * l.ln() - alpha * l;
        let df = y0 / l - alpha;
        l -= f / df;
    }
    l
}

/// Per-individual extinction probability q = exp(λ(q − 1)).
fn poisson_extinction(lambda: f64) -> f64 {
    let mut q = 0.5;
    for _ in 0..100_000 {
        let next = (lambda * (q - 1.0)).exp();
        if (next - q).abs() < 1e-16 {
            break;
        }
        q = next;
    }
    q
}

fn c10_supercritical_extinction() -> Verdict {
    let y0 = 1000u64;
    let reps = 40_000;
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, alpha) in [0.25, 0.5].into_iter().enumerate() {
        let lambda = matched_lambda(alpha, y0 as f64);
        let q = poisson_extinction(lambda);
        let cap = ((1e-12f64).ln() / q.ln()).ceil() as u64;
        let model = DiscreteModel::one_type(Arc::new(Poisson::new(lambda).unwrap()), 2).unwrap();
        let cfg = McConfig {
            generations: 100_000_000,
            reps,
            seed: 10 + k as u64,
            y0,
            y1_0: 0,
            cap: Some(cap),
        };
        let out = simulate(&model, &cfg).unwrap();
        let frac = extinct_fraction(&out);
        let p = (-2.0 * alpha).exp();
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        let z = (frac - p) / se;
        ok &= z.abs() <= 3.0;
        parts.push(format!(
            "alpha={alpha}: {frac:.4} vs {p:.4} ({z:+.2} SE, cap {cap})"
        ));
    }
    verdict(ok, format!("{} (need |z| <= 3)", parts.join(", ")))
}

fn c11_small_theta_consistency() -> Verdict {
    let diff = |theta: f64| {
        let exact = second_moments_pim(-0.5, theta, &PI2).unwrap();
        let approx = second_moments_small_theta(&ThetaModel::pim(theta, &PI2).unwrap());
        exact - approx
    };
    let (a, b) = (diff(0.1), diff(0.05));
    let mut ok = true;
    let mut ratios = Vec::new();
    for (x, y) in a.iter().zip(b.iter()) {
        let r = x / y;
        ok &= (3.2..=4.8).contains(&r);
        ratios.push(format!("{r:.3}"));
    }
    verdict(
        ok,
        format!("entrywise ratios [{}] (need 4 +- 20%)", ratios.join(", ")),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("density forms agree", c1_density_forms),
        ("Feller law conserves mass", c2_conservation),
        ("one-type QSD vs exponential", c3_one_type_qsd),
        ("two-type surface vs O(theta) density", c4_two_type_surface),
        ("O(theta) density reproduces moments", c5_moment_closure),
        ("spectral vs linear-solve moments", c6_spectral_vs_solve),
        ("PDE residual is O(theta^2)", c7_residual_scaling),
        (
            "sampling distribution normalisation",
            c8_sampling_normalisation,
        ),
        ("critical Yaglom limit", c9_yaglom),
        ("supercritical extinction", c10_supercritical_extinction),
        (
            "exact vs O(theta) second moments",
            c11_small_theta_consistency,
        ),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = format!("{}", k + 1);
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "{} criterion {id:>2} {name}: {} [{secs:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
