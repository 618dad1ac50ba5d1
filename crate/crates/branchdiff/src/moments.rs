//! Moments of the subcritical quasi-stationary law and finite-sample
//! type-count probabilities.
//!
//! Exact first and second moments hold for any α < 0. The small-θ
//! routines (`moment_x_*`, `moment_u*`, `sampling_distribution`) are
//! written at α = −½; other α are reached with [`rescale_moments`] and
//! [`ThetaModel::at_reference`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rates::{RateMatrix, ThetaModel};
use crate::specfun::{factorial, harmonic};

/// How a [`MomentReport`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMethod {
    /// Dense solve of the second-moment equations.
    LinearSolve,
    /// Spectral formula for reversible γ.
    Spectral,
    /// Closed form for parent-independent γ.
    Pim,
    /// First order in θ.
    SmallTheta,
}

impl MomentMethod {
    /// Short lowercase name.
    #[must_use]
    pub fn name(self) -> &'static str {
        match self {
            Self::LinearSolve => "solve",
            Self::Spectral => "spectral",
            Self::Pim => "pim",
            Self::SmallTheta => "small-theta",
        }
    }
}

/// First and second moments of the quasi-stationary law.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    /// Growth rate the moments refer to.
    pub alpha: f64,
    /// μ_i = E[X_i].
    pub mu: DVector<f64>,
    /// μ_ij = E[X_i X_j].
    pub mu2: DMatrix<f64>,
    /// Method used.
    pub method: MomentMethod,
}

fn check_alpha(alpha: f64) -> Result<f64> {
    if !(alpha < 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!(
            "alpha must be negative, got {alpha}"
        )));
    }
    Ok(-alpha)
}

/// μ = π/(2|α|).
pub fn mean_vector(alpha: f64, rates: &RateMatrix) -> Result<DVector<f64>> {
    let a = check_alpha(alpha)?;
    Ok(rates.stationary_pi()? / (2.0 * a))
}

fn pair_index(d: usize) -> Vec<Vec<usize>> {
    let mut idx = vec![vec![0; d]; d];
    let pairs = (0..d).flat_map(|r| (r..d).map(move |s| (r, s)));
    for (k, (r, s)) in pairs.enumerate() {
        idx[r][s] = k;
        idx[s][r] = k;
    }
    idx
}

/// Solves δ_rs μ_r − |α| μ_rs + Σ_i (γ_ir μ_is + γ_is μ_ir) = 0 over the
/// d(d+1)/2 unknowns μ_rs, r ≤ s.
pub fn second_moments_linear_solve(alpha: f64, rates: &RateMatrix) -> Result<DMatrix<f64>> {
    let a = check_alpha(alpha)?;
    let mu = mean_vector(alpha, rates)?;
    let g = rates.gamma();
    let d = rates.d();
    let idx = pair_index(d);
    let n = d * (d + 1) / 2;
    let mut m = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for r in 0..d {
        for s in r..d {
            let row = idx[r][s];
            m[(row, row)] -= a;
            for i in 0..d {
                m[(row, idx[i][s])] += g[(i, r)];
                m[(row, idx[i][r])] += g[(i, s)];
            }
            if r == s {
                rhs[row] = -mu[r];
            }
        }
    }
    let lu = m.lu();
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("second-moment system".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("second-moment system".into()));
    }
    Ok(DMatrix::from_fn(d, d, |r, s| x[idx[r][s]]))
}

/// μ_ij = π_iπ_j/(2α²)·(1 + Σ_{ℓ≥1} |α|/(|α| − 2ν_ℓ) u_i^{(ℓ)} u_j^{(ℓ)}).
pub fn second_moments_spectral(alpha: f64, rates: &RateMatrix) -> Result<DMatrix<f64>> {
    let a = check_alpha(alpha)?;
    let sp = rates.spectral_decompose()?;
    let d = rates.d();
    Ok(DMatrix::from_fn(d, d, |i, j| {
        let tail: f64 = (1..d)
            .map(|l| a / (a - 2.0 * sp.eigenvalues[l]) * sp.vectors[(i, l)] * sp.vectors[(j, l)])
            .sum();
        sp.pi[i] * sp.pi[j] / (2.0 * a * a) * (1.0 + tail)
    }))
}

/// μ_ij = π_i(|α|δ_ij + θπ_j)/(2α²(|α| + θ)).
pub fn second_moments_pim(alpha: f64, theta: f64, pi: &[f64]) -> Result<DMatrix<f64>> {
    let a = check_alpha(alpha)?;
    RateMatrix::pim(theta, pi)?;
    let d = pi.len();
    Ok(DMatrix::from_fn(d, d, |i, j| {
        let delta = if i == j { a } else { 0.0 };
        pi[i] * (delta + theta * pi[j]) / (2.0 * a * a * (a + theta))
    }))
}

/// 2π_kδ_kℓ + 2θ(π_kP_kℓ + π_ℓP_ℓk − 2π_kδ_kℓ), at α = −½.
#[must_use]
pub fn second_moments_small_theta(model: &ThetaModel) -> DMatrix<f64> {
    let d = model.d();
    let (t, p, pi) = (model.theta, &model.p, &model.pi);
    DMatrix::from_fn(d, d, |k, l| {
        let delta = if k == l { 1.0 } else { 0.0 };
        2.0 * pi[k] * delta
            + 2.0 * t * (pi[k] * p[(k, l)] + pi[l] * p[(l, k)] - 2.0 * pi[k] * delta)
    })
}

impl MomentReport {
    /// Exact moments by the chosen method.
    pub fn exact(alpha: f64, rates: &RateMatrix, method: MomentMethod) -> Result<Self> {
        let mu = mean_vector(alpha, rates)?;
        let mu2 = match method {
            MomentMethod::LinearSolve => second_moments_linear_solve(alpha, rates)?,
            MomentMethod::Spectral => second_moments_spectral(alpha, rates)?,
            MomentMethod::Pim => {
                if !rates.is_parent_independent() {
                    return Err(Error::InvalidModel(
                        "rate matrix is not parent independent".into(),
                    ));
                }
                let theta = rates.canonical_theta();
                let pi: Vec<f64> = mu.iter().map(|m| m * 2.0 * alpha.abs()).collect();
                second_moments_pim(alpha, theta, &pi)?
            }
            MomentMethod::SmallTheta => {
                return Err(Error::InvalidModel("use MomentReport::small_theta".into()));
            }
        };
        Ok(Self {
            alpha,
            mu,
            mu2,
            method,
        })
    }

    /// First-order moments at α = −½.
    #[must_use]
    pub fn small_theta(model: &ThetaModel) -> Self {
        Self {
            alpha: -0.5,
            mu: model.pi.clone(),
            mu2: second_moments_small_theta(model),
            method: MomentMethod::SmallTheta,
        }
    }
}

/// Maps moments computed at α = −½ (with θ already replaced by
/// θ/(2|α|)) to the growth rate `target_alpha`: order-n moments scale by
/// (2|α|)^{−n}.
pub fn rescale_moments(report: &MomentReport, target_alpha: f64) -> Result<MomentReport> {
    let a = check_alpha(target_alpha)?;
    if (report.alpha + 0.5).abs() > 1e-15 {
        return Err(Error::Domain(
            "rescale_moments expects a report at alpha = -1/2".into(),
        ));
    }
    let k = 2.0 * a;
    Ok(MomentReport {
        alpha: target_alpha,
        mu: &report.mu / k,
        mu2: &report.mu2 / (k * k),
        method: report.method,
    })
}

fn check_type(model: &ThetaModel, r: usize) -> Result<()> {
    if r >= model.d() {
        return Err(Error::Domain(format!(
            "type index {r} out of range for d = {}",
            model.d()
        )));
    }
    Ok(())
}

fn check_pair(model: &ThetaModel, r: usize, s: usize) -> Result<()> {
    check_type(model, r)?;
    check_type(model, s)?;
    if r == s {
        return Err(Error::Domain(
            "cross moments need two distinct types".into(),
        ));
    }
    Ok(())
}

/// E[X_r^n] = π_r n! − θπ_r(1 − P_rr)(n² − n − 1 + nH_n)(n − 1)!, α = −½.
pub fn moment_x_power(model: &ThetaModel, r: usize, n: u32) -> Result<f64> {
    check_type(model, r)?;
    if n == 0 {
        return Err(Error::Domain("moment order must be positive".into()));
    }
    let nf = f64::from(n);
    let n64 = u64::from(n);
    let pr = model.pi[r];
    let poly = nf * nf - nf - 1.0 + nf * harmonic(n64);
    Ok(
        pr * factorial(n64)
            - model.theta * pr * (1.0 - model.p[(r, r)]) * poly * factorial(n64 - 1),
    )
}

/// E[X_r^{n_r} X_s^{n_s}] = θπ_rP_rs n_r!(n_s − 1)!/(n_s + 1)·(n_r + 2n_s + 1)
/// + (r ↔ s), α = −½.
pub fn moment_x_cross(model: &ThetaModel, r: usize, s: usize, nr: u32, ns: u32) -> Result<f64> {
    check_pair(model, r, s)?;
    if nr == 0 || ns == 0 {
        return Err(Error::Domain("cross moment orders must be positive".into()));
    }
    let half = |r: usize, s: usize, nr: u32, ns: u32| {
        let (a, b) = (u64::from(nr), u64::from(ns));
        model.pi[r] * model.p[(r, s)] * factorial(a) * factorial(b - 1) / (b as f64 + 1.0)
            * (a as f64 + 2.0 * b as f64 + 1.0)
    };
    Ok(model.theta * (half(r, s, nr, ns) + half(s, r, ns, nr)))
}

/// E[Π_i X_i^{n_i}] for an arbitrary exponent vector at first order in θ:
/// zero once three or more exponents are positive.
pub fn moment_x(model: &ThetaModel, n: &[u32]) -> Result<f64> {
    if n.len() != model.d() {
        return Err(Error::Domain("exponent vector length must equal d".into()));
    }
    let nz: Vec<usize> = (0..n.len()).filter(|&i| n[i] > 0).collect();
    match nz.as_slice() {
        [] => Ok(1.0),
        [r] => moment_x_power(model, *r, n[*r]),
        [r, s] => moment_x_cross(model, *r, *s, n[*r], n[*s]),
        _ => Ok(0.0),
    }
}

/// E[U_r^n] = π_r(1 − θ(1 − P_rr)H_{n−1}).
pub fn moment_u(model: &ThetaModel, r: usize, n: u32) -> Result<f64> {
    check_type(model, r)?;
    if n == 0 {
        return Ok(1.0);
    }
    let h = harmonic(u64::from(n - 1));
    Ok(model.pi[r] * (1.0 - model.theta * (1.0 - model.p[(r, r)]) * h))
}

/// E[U_r^{n_r} U_s^{n_s}] = θπ_sP_sr (n_r − 1)! n_s!/(n_r + n_s)! + (r ↔ s).
pub fn moment_u_cross(model: &ThetaModel, r: usize, s: usize, nr: u32, ns: u32) -> Result<f64> {
    check_pair(model, r, s)?;
    if nr == 0 || ns == 0 {
        return Err(Error::Domain("cross moment orders must be positive".into()));
    }
    let (a, b) = (u64::from(nr), u64::from(ns));
    let n = factorial(a + b);
    let one = model.pi[s] * model.p[(s, r)] * factorial(a - 1) * factorial(b) / n;
    let two = model.pi[r] * model.p[(r, s)] * factorial(b - 1) * factorial(a) / n;
    Ok(model.theta * (one + two))
}

/// Type counts n = (n_1, …, n_d) of a finite sample.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SampleCounts {
    n: Vec<u32>,
}

impl SampleCounts {
    /// Validated counts: at least one positive entry.
    pub fn new(n: Vec<u32>) -> Result<Self> {
        if n.iter().all(|&v| v == 0) {
            return Err(Error::Domain(
                "sample must contain at least one individual".into(),
            ));
        }
        Ok(Self { n })
    }

    /// The counts.
    #[must_use]
    pub fn counts(&self) -> &[u32] {
        &self.n
    }

    /// Σ n_i.
    #[must_use]
    pub fn total(&self) -> u32 {
        self.n.iter().sum()
    }
}

/// All count vectors of length `d` summing to `n_total`, in lexicographic
/// order with the first type's count decreasing.
#[must_use]
pub fn compositions(n_total: u32, d: usize) -> Vec<SampleCounts> {
    fn rec(left: u32, slots: usize, cur: &mut Vec<u32>, out: &mut Vec<SampleCounts>) {
        if slots == 1 {
            cur.push(left);
            out.push(SampleCounts { n: cur.clone() });
            cur.pop();
            return;
        }
        for k in (0..=left).rev() {
            cur.push(k);
            rec(left - k, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n_total == 0 || d == 0 {
        return out;
    }
    rec(n_total, d, &mut Vec::with_capacity(d), &mut out);
    out
}

/// Probability of the type counts `counts` in a sample drawn from the
/// quasi-stationary population, to first order in θ. The value is signed:
/// outside the small-θ regime the truncation may go negative.
pub fn sampling_distribution(counts: &SampleCounts, model: &ThetaModel) -> Result<f64> {
    let n = counts.counts();
    if n.len() != model.d() {
        return Err(Error::Domain("sample length must equal d".into()));
    }
    let nz: Vec<usize> = (0..n.len()).filter(|&i| n[i] > 0).collect();
    let t = model.theta;
    Ok(match nz.as_slice() {
        [r] => {
            let h = harmonic(u64::from(n[*r] - 1));
            model.pi[*r] * (1.0 - t * (1.0 - model.p[(*r, *r)]) * h)
        }
        [r, s] => {
            let (r, s) = (*r, *s);
            t * (model.pi[r] * model.p[(r, s)] / f64::from(n[s])
                + model.pi[s] * model.p[(s, r)] / f64::from(n[r]))
        }
        _ => 0.0,
    })
}

/// As [`sampling_distribution`], clamping negative values to zero with a
/// logged warning.
pub fn sampling_distribution_clamped(counts: &SampleCounts, model: &ThetaModel) -> Result<f64> {
    let p = sampling_distribution(counts, model)?;
    if p < 0.0 {
        log::warn!(
            "sampling probability {p:e} for {:?} is negative at theta = {}; clamped to 0",
            counts.counts(),
            model.theta
        );
        return Ok(0.0);
    }
    Ok(p)
}
