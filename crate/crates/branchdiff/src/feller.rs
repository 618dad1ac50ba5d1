//! The single-type Feller diffusion with generator ½x∂² + αx∂ started at
//! X(0) = 1.
//!
//! At time t the law is a point mass p0(t) = e^{−μ} at zero plus a
//! Poisson(μ) mixture of Gamma(ℓ, β) densities, with
//! μ(t;α) = 2α e^{αt}/(e^{αt} − 1) and β(t;α) = (e^{αt} − 1)/(2α).

use crate::error::{domain, Result};
use crate::quad::{self, Tolerance};
use crate::specfun;

const CRITICAL_EPS: f64 = 1e-8;

/// (μ, β) for α·t ≠ 0, with the critical branch (2/t, t/2) when |α|t < 1e-8.
pub fn mu_beta(alpha: f64, t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) || !alpha.is_finite() || !t.is_finite() {
        return domain(format!(
            "mu_beta requires finite alpha and t > 0, got ({alpha}, {t})"
        ));
    }
    Ok(mu_beta_unchecked(alpha, t))
}

fn mu_beta_unchecked(alpha: f64, t: f64) -> (f64, f64) {
    let at = alpha * t;
    if at.abs() < CRITICAL_EPS {
        (2.0 / t, 0.5 * t)
    } else {
        (2.0 * alpha / -(-at).exp_m1(), at.exp_m1() / (2.0 * alpha))
    }
}

/// Extinction probability p0(t) = exp(−μ(t;α)).
pub fn extinction_prob(alpha: f64, t: f64) -> Result<f64> {
    let (mu, _) = mu_beta(alpha, t)?;
    Ok((-mu).exp())
}

/// Laplace transform ψ(φ, t; α) = E[e^{−φX(t)}] = exp(−e^{αt}φ/(1 + βφ)).
pub fn laplace_psi(phi: f64, alpha: f64, t: f64) -> Result<f64> {
    if !(phi >= 0.0) || !(t >= 0.0) || !alpha.is_finite() {
        return domain(format!(
            "laplace_psi requires phi >= 0, t >= 0, got ({phi}, {t})"
        ));
    }
    let at = alpha * t;
    let beta = if at.abs() < CRITICAL_EPS {
        0.5 * t
    } else {
        at.exp_m1() / (2.0 * alpha)
    };
    Ok((-at.exp() * phi / (1.0 + beta * phi)).exp())
}

/// Σ_{ℓ≥1} e^{−μ} μ^ℓ/ℓ! · x^{ℓ−1} e^{−x/β}/(β^ℓ (ℓ−1)!), summed at least to
/// ℓ = max(50, ⌈μ + 10√μ⌉) and then until the geometric tail bound is
/// negligible.
pub(crate) fn mixture_series(x: f64, mu: f64, beta: f64) -> f64 {
    if x == 0.0 {
        return mu * (-mu).exp() / beta;
    }
    let w = mu * x / beta;
    if w > 1e4 {
        return bessel_form(x, mu, beta);
    }
    let l_min = 50usize.max((mu + 10.0 * mu.sqrt()).ceil() as usize);
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut l = 1usize;
    loop {
        let q = w / (l * (l + 1)) as f64;
        term *= q;
        sum += term;
        l += 1;
        if l >= l_min && q < 0.5 && term * q / (1.0 - q) <= 1e-17 * sum {
            break;
        }
        if l > 100_000 {
            break;
        }
    }
    (-mu - x / beta).exp() * mu / beta * sum
}

fn bessel_form(x: f64, mu: f64, beta: f64) -> f64 {
    let z = 2.0 * (x * mu / beta).sqrt();
    let s = mu.sqrt() - (x / beta).sqrt();
    (-s * s).exp() * (mu / (x * beta)).sqrt() * specfun::i1_scaled(z)
}

fn check_xt(x: f64, t: f64) -> Result<()> {
    if !(x > 0.0) || !(t > 0.0) || !x.is_finite() || !t.is_finite() {
        return domain(format!("density requires x > 0 and t > 0, got ({x}, {t})"));
    }
    Ok(())
}

/// Continuous part of the law of X(t) from the Poisson–Gamma mixture.
pub fn density_mixture(x: f64, alpha: f64, t: f64) -> Result<f64> {
    check_xt(x, t)?;
    let (mu, beta) = mu_beta(alpha, t)?;
    Ok(mixture_series(x, mu, beta))
}

/// Continuous part of the law of X(t) in the Bessel form
/// e^{−μ−x/β} √(μ/(xβ)) I1(2√(xμ/β)).
pub fn density_bessel(x: f64, alpha: f64, t: f64) -> Result<f64> {
    check_xt(x, t)?;
    let (mu, beta) = mu_beta(alpha, t)?;
    Ok(bessel_form(x, mu, beta))
}

/// Density of X(t) conditioned on X(t) > 0.
pub fn conditioned_density(x: f64, alpha: f64, t: f64) -> Result<f64> {
    check_xt(x, t)?;
    let (mu, beta) = mu_beta(alpha, t)?;
    Ok(mixture_series(x, mu, beta) / -(-mu).exp_m1())
}

/// Subcritical quasi-stationary density 2|α| e^{−2|α|x}.
pub fn qsd_subcritical(x: f64, alpha: f64) -> Result<f64> {
    if !(alpha < 0.0) {
        return domain(format!("qsd_subcritical requires alpha < 0, got {alpha}"));
    }
    if !(x >= 0.0) {
        return domain(format!("qsd_subcritical requires x >= 0, got {x}"));
    }
    let k = -2.0 * alpha;
    Ok(k * (-k * x).exp())
}

/// Critical Yaglom density 2e^{−2w} of W = X(t)/t given survival.
pub fn yaglom_critical(w: f64) -> Result<f64> {
    if !(w >= 0.0) {
        return domain(format!("yaglom_critical requires w >= 0, got {w}"));
    }
    Ok(2.0 * (-2.0 * w).exp())
}

/// Survival function e^{−2w} of the critical Yaglom law.
#[must_use]
pub fn yaglom_survival(w: f64) -> f64 {
    (-2.0 * w.max(0.0)).exp()
}

/// Atom and continuous density of the supercritical t → ∞ law of
/// Z = X e^{−αt}; with `conditioned` the atom is removed and the density
/// renormalised by 1 − e^{−2α}.
pub fn supercritical_stationary(z: f64, alpha: f64, conditioned: bool) -> Result<(f64, f64)> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return domain(format!(
            "supercritical_stationary requires alpha > 0, got {alpha}"
        ));
    }
    if !(z >= 0.0) {
        return domain(format!("supercritical_stationary requires z >= 0, got {z}"));
    }
    let mu = 2.0 * alpha;
    let g = mixture_series(z, mu, 1.0 / mu);
    let atom = (-mu).exp();
    Ok(if conditioned {
        (0.0, g / -(-mu).exp_m1())
    } else {
        (atom, g)
    })
}

/// An atom at zero plus a density on (0, ∞).
pub struct PointMassPlusDensity {
    /// Probability mass at zero.
    pub atom: f64,
    density: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    x_cut: f64,
}

impl std::fmt::Debug for PointMassPlusDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PointMassPlusDensity")
            .field("atom", &self.atom)
            .field("x_cut", &self.x_cut)
            .finish_non_exhaustive()
    }
}

impl PointMassPlusDensity {
    /// Density at x > 0; at x = 0 the right limit.
    #[must_use]
    pub fn density(&self, x: f64) -> f64 {
        (self.density)(x)
    }

    /// Point beyond which the density's mass is below 1e-10.
    #[must_use]
    pub fn x_cut(&self) -> f64 {
        self.x_cut
    }

    /// atom + ∫_0^{x_cut} density, by adaptive quadrature.
    #[must_use]
    pub fn total_mass(&self) -> f64 {
        // Split at a few points so the unimodal bump is resolved early.
        let n = 8;
        let mut sum = self.atom;
        for k in 0..n {
            let a = self.x_cut * k as f64 / n as f64;
            let b = self.x_cut * (k + 1) as f64 / n as f64;
            sum += quad::integrate(|x| self.density(x), a, b, Tolerance::new(1e-13, 1e-12)).value;
        }
        sum
    }
}

/// The Feller diffusion at fixed (α, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FellerLaw {
    /// Scaled growth rate α.
    pub alpha: f64,
    /// Diffusion time t.
    pub t: f64,
}

impl FellerLaw {
    /// Validated constructor, t > 0.
    pub fn new(alpha: f64, t: f64) -> Result<Self> {
        mu_beta(alpha, t)?;
        Ok(Self { alpha, t })
    }

    /// μ(t;α).
    #[must_use]
    pub fn mu(&self) -> f64 {
        mu_beta_unchecked(self.alpha, self.t).0
    }

    /// β(t;α).
    #[must_use]
    pub fn beta(&self) -> f64 {
        mu_beta_unchecked(self.alpha, self.t).1
    }

    /// Extinction probability by time t.
    #[must_use]
    pub fn p0(&self) -> f64 {
        (-self.mu()).exp()
    }

    /// Atom plus mixture density.
    #[must_use]
    pub fn law(&self) -> PointMassPlusDensity {
        let (mu, beta) = mu_beta_unchecked(self.alpha, self.t);
        let l = mu + 10.0 * mu.sqrt() + 5.0;
        PointMassPlusDensity {
            atom: (-mu).exp(),
            density: Box::new(move |x| {
                if x >= 0.0 {
                    mixture_series(x, mu, beta)
                } else {
                    0.0
                }
            }),
            x_cut: beta * (l + 12.0 * l.sqrt() + 40.0),
        }
    }
}
