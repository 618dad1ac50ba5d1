//! Discrete Bienaymé–Galton–Watson oracle.
//!
//! One- and two-type neutral processes: each generation the Y parents have
//! a total number of children drawn from the offspring law, and each child
//! independently is of type 1 with probability
//! χ(i) = (i/m)(1 − r_12) + (1 − i/m) r_21 when i of the m parents are of
//! type 1. The quasi-stationary law is the principal left eigenvector of
//! the transition matrix restricted to 1 ≤ m ≤ m_max.

mod eigen;
mod operator;
mod sim;

use std::fmt::Debug;
use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Distribution, Gamma, Poisson as PoissonDist};

use crate::error::{Error, Result};
use crate::rates::RateMatrix;
use crate::specfun::ln_factorial;

pub use eigen::{qsd_eigenvector, qsd_eigenvector_with, EigenMethod, SolverOptions};
pub use operator::{operator_for, DenseOneType, FactorizedPoisson, LiteralOperator, Operator};
pub use sim::{
    extinct_fraction, ks_distance, simulate, simulate_survivors, McConfig, Outcome, Replicate,
};

/// Number of children of m parents, summed over parents.
pub trait OffspringLaw: Debug + Send + Sync {
    /// P(m parents have n children in total).
    fn pmf(&self, m: u64, n: u64) -> f64;
    /// Mean children per parent.
    fn mean(&self) -> f64;
    /// Variance of children per parent.
    fn variance(&self) -> f64;
    /// Draws the total number of children of m parents.
    fn sample_total(&self, m: u64, rng: &mut dyn RngCore) -> u64;
    /// The Poisson mean when the law is Poisson, enabling the factorised
    /// transition operator.
    fn poisson_mean(&self) -> Option<f64> {
        None
    }
}

/// Poisson(λ) children per parent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Poisson {
    lambda: f64,
}

impl Poisson {
    /// λ > 0.
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidModel(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }
}

pub(crate) fn poisson_pmf(mean: f64, n: u64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (-mean + n as f64 * mean.ln() - ln_factorial(n)).exp()
}

fn draw_poisson(mean: f64, rng: &mut dyn RngCore) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = PoissonDist::new(mean).expect("positive finite Poisson mean");
    d.sample(rng) as u64
}

impl OffspringLaw for Poisson {
    fn pmf(&self, m: u64, n: u64) -> f64 {
        poisson_pmf(self.lambda * m as f64, n)
    }
    fn mean(&self) -> f64 {
        self.lambda
    }
    fn variance(&self) -> f64 {
        self.lambda
    }
    fn sample_total(&self, m: u64, rng: &mut dyn RngCore) -> u64 {
        draw_poisson(self.lambda * m as f64, rng)
    }
    fn poisson_mean(&self) -> Option<f64> {
        Some(self.lambda)
    }
}

/// Geometric children per parent: P(k) = (1 − q)q^k, mean q/(1 − q).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometric {
    q: f64,
}

impl Geometric {
    /// Geometric law with the given mean.
    pub fn with_mean(mean: f64) -> Result<Self> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::InvalidModel(format!(
                "mean must be positive, got {mean}"
            )));
        }
        Ok(Self {
            q: mean / (1.0 + mean),
        })
    }
}

impl OffspringLaw for Geometric {
    fn pmf(&self, m: u64, n: u64) -> f64 {
        if m == 0 {
            return if n == 0 { 1.0 } else { 0.0 };
        }
        // Negative binomial: C(n + m − 1, n)(1 − q)^m q^n.
        let lc = ln_factorial(n + m - 1) - ln_factorial(n) - ln_factorial(m - 1);
        (lc + m as f64 * (1.0 - self.q).ln() + n as f64 * self.q.ln()).exp()
    }
    fn mean(&self) -> f64 {
        self.q / (1.0 - self.q)
    }
    fn variance(&self) -> f64 {
        self.q / ((1.0 - self.q) * (1.0 - self.q))
    }
    fn sample_total(&self, m: u64, rng: &mut dyn RngCore) -> u64 {
        if m == 0 {
            return 0;
        }
        let g = Gamma::new(m as f64, self.q / (1.0 - self.q)).expect("valid gamma parameters");
        let rate: f64 = g.sample(rng);
        draw_poisson(rate, rng)
    }
}

/// Binomial(n, p) probability of k, exact at p ∈ {0, 1}.
pub(crate) fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let lc = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    (lc + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}

/// The discrete model: offspring law, mutation probabilities, truncation.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    offspring: Arc<dyn OffspringLaw>,
    types: usize,
    r12: f64,
    r21: f64,
    m_max: usize,
}

impl DiscreteModel {
    /// One-type model.
    pub fn one_type(offspring: Arc<dyn OffspringLaw>, m_max: usize) -> Result<Self> {
        Self::build(offspring, 1, 0.0, 0.0, m_max)
    }

    /// Two-type model with per-offspring mutation probabilities r_12, r_21.
    pub fn two_type(
        offspring: Arc<dyn OffspringLaw>,
        r12: f64,
        r21: f64,
        m_max: usize,
    ) -> Result<Self> {
        Self::build(offspring, 2, r12, r21, m_max)
    }

    fn build(
        offspring: Arc<dyn OffspringLaw>,
        types: usize,
        r12: f64,
        r21: f64,
        m_max: usize,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&r12) || !(0.0..=1.0).contains(&r21) {
            return Err(Error::InvalidModel(format!(
                "mutation probabilities must lie in [0, 1], got ({r12}, {r21})"
            )));
        }
        if m_max < 2 {
            return Err(Error::InvalidModel(format!(
                "m_max must be at least 2, got {m_max}"
            )));
        }
        if !(offspring.mean() > 0.0) || !(offspring.variance() > 0.0) {
            return Err(Error::InvalidModel(
                "offspring law needs positive mean and variance".into(),
            ));
        }
        Ok(Self {
            offspring,
            types,
            r12,
            r21,
            m_max,
        })
    }

    /// Two-type Poisson model matched to a continuum (α, γ): with
    /// Y(0) = ασ²/log λ the mutation probabilities are r_ij = γ_ij log λ/α.
    pub fn matched_two_type(
        lambda: f64,
        alpha: f64,
        gamma: &RateMatrix,
        m_max: usize,
    ) -> Result<Self> {
        if gamma.d() != 2 {
            return Err(Error::InvalidModel(
                "the discrete oracle has two types".into(),
            ));
        }
        let law = Poisson::new(lambda)?;
        let c = lambda.ln() / alpha;
        if !(c > 0.0) {
            return Err(Error::InvalidModel(
                "log(lambda) and alpha must have the same sign".into(),
            ));
        }
        let g = gamma.gamma();
        Self::two_type(Arc::new(law), g[(0, 1)] * c, g[(1, 0)] * c, m_max)
    }

    /// The offspring law.
    #[must_use]
    pub fn offspring(&self) -> &dyn OffspringLaw {
        self.offspring.as_ref()
    }

    /// Mean offspring λ.
    #[must_use]
    pub fn lambda(&self) -> f64 {
        self.offspring.mean()
    }

    /// Offspring variance σ².
    #[must_use]
    pub fn sigma2(&self) -> f64 {
        self.offspring.variance()
    }

    /// Number of types (1 or 2).
    #[must_use]
    pub fn types(&self) -> usize {
        self.types
    }

    /// (r_12, r_21).
    #[must_use]
    pub fn mutation(&self) -> (f64, f64) {
        (self.r12, self.r21)
    }

    /// Truncation on the total population.
    #[must_use]
    pub fn m_max(&self) -> usize {
        self.m_max
    }

    /// Y(0) = ασ²/log λ for the continuum growth rate α.
    #[must_use]
    pub fn initial_size_for(&self, alpha: f64) -> f64 {
        alpha * self.sigma2() / self.lambda().ln()
    }

    /// P(m parents have n children).
    #[must_use]
    pub fn offspring_pmf(&self, m: u64, n: u64) -> f64 {
        self.offspring.pmf(m, n)
    }

    /// Probability that a child of an (m, i) population is of type 1.
    #[must_use]
    pub fn chi(&self, i: u64, m: u64) -> f64 {
        if m == 0 {
            return 0.0;
        }
        let f = i as f64 / m as f64;
        f * (1.0 - self.r12) + (1.0 - f) * self.r21
    }

    /// P((m, i) → (n, j)) = p(m, n) C(n, j) χ(i)^j (1 − χ(i))^{n−j}.
    #[must_use]
    pub fn transition(&self, m: u64, i: u64, n: u64, j: u64) -> f64 {
        if i > m || j > n {
            return 0.0;
        }
        self.offspring_pmf(m, n) * binomial_pmf(n, j, self.chi(i, m))
    }

    /// Number of states of the truncated chain.
    #[must_use]
    pub fn state_count(&self) -> usize {
        state_count(self.types, self.m_max)
    }
}

pub(crate) fn state_count(types: usize, m_max: usize) -> usize {
    if types == 1 {
        m_max
    } else {
        m_max * (m_max + 3) / 2
    }
}

/// Flat index of state (m, i) in the two-type ordering.
#[must_use]
pub fn state_index(m: usize, i: usize) -> usize {
    m * (m + 1) / 2 - 1 + i
}

/// Principal left eigenvector of the truncated chain, normalised to sum 1.
#[derive(Debug, Clone, PartialEq)]
pub struct QsdVector {
    /// Number of types.
    pub types: usize,
    /// Truncation.
    pub m_max: usize,
    /// G̃ over states; for two types ordered by (m, i) with 0 ≤ i ≤ m.
    pub probs: Vec<f64>,
    /// Principal eigenvalue ρ.
    pub eigenvalue: f64,
    /// One-step loss Π = 1 − ρ (extinction plus truncation leak).
    pub loss: f64,
    /// ‖G̃P̃ − ρG̃‖_1.
    pub residual: f64,
    /// Iterations performed.
    pub iterations: usize,
}

impl QsdVector {
    /// G̃(m, i); for one type `i` is ignored.
    #[must_use]
    pub fn get(&self, m: usize, i: usize) -> f64 {
        if self.types == 1 {
            self.probs[m - 1]
        } else {
            self.probs[state_index(m, i)]
        }
    }

    /// Σ_i G̃(m, i).
    #[must_use]
    pub fn total_marginal(&self, m: usize) -> f64 {
        if self.types == 1 {
            self.probs[m - 1]
        } else {
            (0..=m).map(|i| self.get(m, i)).sum()
        }
    }
}

/// Continuum-scaled samples of a discrete quasi-stationary vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Continuum {
    /// Scale c = log λ/(ασ²), so x = c·m.
    pub scale: f64,
    /// (x, g_X(x)) with g_X ≈ Σ_i G̃(m, i)/c.
    pub marginal: Vec<(f64, f64)>,
    /// (x, u, g_XU(x, u)) with u = i/m and g_XU ≈ (m/c) G̃(m, i); empty for
    /// one type.
    pub surface: Vec<(f64, f64, f64)>,
}

/// Rescales G̃ to continuum coordinates for growth rate `alpha`.
pub fn to_continuum(model: &DiscreteModel, qsd: &QsdVector, alpha: f64) -> Result<Continuum> {
    let c = model.lambda().ln() / (alpha * model.sigma2());
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidModel(
            "scaling log(lambda)/(alpha sigma^2) must be positive".into(),
        ));
    }
    let mut marginal = Vec::with_capacity(qsd.m_max);
    let mut surface = Vec::new();
    for m in 1..=qsd.m_max {
        let x = c * m as f64;
        marginal.push((x, qsd.total_marginal(m) / c));
        if qsd.types == 2 {
            for i in 0..=m {
                surface.push((x, i as f64 / m as f64, m as f64 / c * qsd.get(m, i)));
            }
        }
    }
    Ok(Continuum {
        scale: c,
        marginal,
        surface,
    })
}

/// Rectangle in (x, u) over which discrete and continuum surfaces are
/// compared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    /// Inclusive x range.
    pub x: (f64, f64),
    /// Inclusive u range.
    pub u: (f64, f64),
}

impl Default for Window {
    fn default() -> Self {
        Self {
            x: (0.5, 6.0),
            u: (0.05, 0.95),
        }
    }
}

impl Window {
    fn contains(&self, x: f64, u: f64) -> bool {
        (self.x.0..=self.x.1).contains(&x) && (self.u.0..=self.u.1).contains(&u)
    }
}

/// Discrepancy between a discrete surface and a continuum density.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrepancy {
    /// Σ|g_disc − g|w / Σ|g|w over lattice cells in the window, with w the
    /// cell area c/m.
    pub relative_l1: f64,
    /// max|g_disc − g| / max|g| over the same cells.
    pub relative_sup: f64,
    /// Lattice cells used.
    pub cells: usize,
    /// (x, u, discrete, continuum) per cell.
    pub pairs: Vec<(f64, f64, f64, f64)>,
}

/// Compares the surface samples of `cont` with `theory(x, u)` over `window`.
pub fn compare_surface<F>(cont: &Continuum, window: &Window, theory: F) -> Result<Discrepancy>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    let c = cont.scale;
    let (mut num, mut den, mut dmax, mut gmax) = (0.0, 0.0, 0.0f64, 0.0f64);
    let mut pairs = Vec::new();
    for &(x, u, g) in &cont.surface {
        if !window.contains(x, u) {
            continue;
        }
        let t = theory(x, u)?;
        let w = c * c / x;
        num += (g - t).abs() * w;
        den += t.abs() * w;
        dmax = dmax.max((g - t).abs());
        gmax = gmax.max(t.abs());
        pairs.push((x, u, g, t));
    }
    if pairs.is_empty() || den == 0.0 {
        return Err(Error::Domain(
            "comparison window contains no lattice cells".into(),
        ));
    }
    Ok(Discrepancy {
        relative_l1: num / den,
        relative_sup: dmax / gmax,
        cells: pairs.len(),
        pairs,
    })
}
