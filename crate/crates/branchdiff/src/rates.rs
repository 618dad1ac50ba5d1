//! Scaled mutation-rate matrices γ, their (θ, P) parameterisation, the
//! stationary vector π and, for reversible γ, the spectral decomposition.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;
const BALANCE_TOL: f64 = 1e-10;

/// A d × d generator: nonnegative off-diagonal rates, zero row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    gamma: DMatrix<f64>,
    irreducible: bool,
}

/// γ written as ½θ(P − I) for a stochastic matrix P.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaP {
    /// Overall scaled mutation rate.
    pub theta: f64,
    /// Mutation transition matrix; rows sum to 1.
    pub p: DMatrix<f64>,
}

/// Eigen-data of a reversible generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    /// Eigenvalues ν_0 = 0 ≥ ν_1 ≥ … ≥ ν_{d−1}.
    pub eigenvalues: Vec<f64>,
    /// Right eigenvectors as columns; column 0 is the all-ones vector and
    /// Σ_i π_i u_i^{(k)} u_i^{(ℓ)} = δ_{kℓ}.
    pub vectors: DMatrix<f64>,
    /// Stationary vector π.
    pub pi: DVector<f64>,
}

fn check_stochastic(p: &DMatrix<f64>) -> Result<()> {
    if p.nrows() != p.ncols() || p.nrows() < 2 {
        return Err(Error::InvalidModel(format!(
            "P must be square with d >= 2, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    for (i, row) in p.row_iter().enumerate() {
        if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "P row {i} has a negative or non-finite entry"
            )));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidModel(format!("P row {i} sums to {s}, not 1")));
        }
    }
    Ok(())
}

fn check_probability_vector(pi: &[f64]) -> Result<()> {
    if pi.len() < 2 {
        return Err(Error::InvalidModel(
            "pi must have at least 2 entries".into(),
        ));
    }
    if pi.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidModel("pi entries must be positive".into()));
    }
    let s: f64 = pi.iter().sum();
    if (s - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidModel(format!("pi sums to {s}, not 1")));
    }
    Ok(())
}

fn strongly_connected(gamma: &DMatrix<f64>) -> bool {
    let d = gamma.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; d];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..d {
                let rate = if forward {
                    gamma[(i, j)]
                } else {
                    gamma[(j, i)]
                };
                if i != j && rate > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

impl ThetaP {
    /// Validated (θ, P) pair.
    pub fn new(theta: f64, p: DMatrix<f64>) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::InvalidModel(format!(
                "theta must be positive, got {theta}"
            )));
        }
        check_stochastic(&p)?;
        Ok(Self { theta, p })
    }

    /// Number of types.
    #[must_use]
    pub fn d(&self) -> usize {
        self.p.nrows()
    }
}

impl RateMatrix {
    /// Validates a generator given as a full matrix.
    pub fn new(gamma: DMatrix<f64>) -> Result<Self> {
        let d = gamma.nrows();
        if gamma.ncols() != d || d < 2 {
            return Err(Error::InvalidModel(format!(
                "gamma must be square with d >= 2, got {}x{}",
                d,
                gamma.ncols()
            )));
        }
        if gamma.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("gamma has non-finite entries".into()));
        }
        let scale = gamma.amax().max(1.0);
        for i in 0..d {
            for j in 0..d {
                if i != j && gamma[(i, j)] < 0.0 {
                    return Err(Error::InvalidModel(format!("gamma[{i}][{j}] is negative")));
                }
            }
            let s: f64 = gamma.row(i).iter().sum();
            if s.abs() > ROW_SUM_TOL * scale {
                return Err(Error::InvalidModel(format!(
                    "gamma row {i} sums to {s}, not 0"
                )));
            }
        }
        let irreducible = strongly_connected(&gamma);
        Ok(Self { gamma, irreducible })
    }

    /// γ = ½θ(P − I).
    pub fn from_theta_p(theta: f64, p: &DMatrix<f64>) -> Result<Self> {
        let tp = ThetaP::new(theta, p.clone())?;
        let d = tp.d();
        let gamma = (&tp.p - DMatrix::identity(d, d)) * (0.5 * theta);
        Self::new(gamma)
    }

    /// Parent-independent model γ_ij = ½θ(π_j − δ_ij).
    pub fn pim(theta: f64, pi: &[f64]) -> Result<Self> {
        check_probability_vector(pi)?;
        let d = pi.len();
        let p = DMatrix::from_fn(d, d, |_, j| pi[j]);
        Self::from_theta_p(theta, &p)
    }

    /// Reversible generator with prescribed π and symmetric flux
    /// F_ij = π_i γ_ij (i ≠ j).
    pub fn from_detailed_balance(pi: &[f64], flux: &DMatrix<f64>) -> Result<Self> {
        check_probability_vector(pi)?;
        let d = pi.len();
        if flux.nrows() != d || flux.ncols() != d {
            return Err(Error::InvalidModel("flux must be d x d".into()));
        }
        let mut gamma = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    let f = 0.5 * (flux[(i, j)] + flux[(j, i)]);
                    if f < 0.0 {
                        return Err(Error::InvalidModel("flux must be nonnegative".into()));
                    }
                    gamma[(i, j)] = f / pi[i];
                }
            }
            let s: f64 = gamma.row(i).iter().sum();
            gamma[(i, i)] = -s;
        }
        Self::new(gamma)
    }

    /// Number of types.
    #[must_use]
    pub fn d(&self) -> usize {
        self.gamma.nrows()
    }

    /// The generator matrix.
    #[must_use]
    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    /// Whether every type communicates with every other.
    #[must_use]
    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    /// Whether off-diagonal rates into each type are independent of the
    /// source type.
    #[must_use]
    pub fn is_parent_independent(&self) -> bool {
        let d = self.d();
        let scale = self.gamma.amax().max(f64::MIN_POSITIVE);
        (0..d).all(|j| {
            let col: Vec<f64> = (0..d)
                .filter(|&i| i != j)
                .map(|i| self.gamma[(i, j)])
                .collect();
            col.iter().all(|&v| (v - col[0]).abs() <= 1e-12 * scale)
        })
    }

    /// θ of the canonical parameterisation: ½θ = Σ_j γ_j for parent
    /// independent γ (giving P_ij = π_j), otherwise the smallest admissible
    /// θ, ½θ = max_i(−γ_ii).
    #[must_use]
    pub fn canonical_theta(&self) -> f64 {
        let d = self.d();
        if self.is_parent_independent() {
            let s: f64 = (0..d).map(|j| self.gamma[((j + 1) % d, j)]).sum();
            2.0 * s
        } else {
            2.0 * (0..d).map(|i| -self.gamma[(i, i)]).fold(0.0, f64::max)
        }
    }

    /// P = I + 2γ/θ for a θ satisfying ½θ ≥ max_i(−γ_ii).
    pub fn to_theta_p(&self, theta: f64) -> Result<ThetaP> {
        let d = self.d();
        let floor = (0..d).map(|i| -self.gamma[(i, i)]).fold(0.0, f64::max);
        if !(theta > 0.0) || 0.5 * theta < floor * (1.0 - 1e-12) {
            return Err(Error::InvalidModel(format!(
                "theta/2 = {} is below max(-gamma_ii) = {floor}",
                0.5 * theta
            )));
        }
        let mut p = DMatrix::identity(d, d) + &self.gamma * (2.0 / theta);
        for i in 0..d {
            if p[(i, i)] < 0.0 {
                p[(i, i)] = 0.0;
            }
        }
        ThetaP::new(theta, p)
    }

    /// Canonical (θ, P).
    pub fn canonical_theta_p(&self) -> Result<ThetaP> {
        self.to_theta_p(self.canonical_theta())
    }

    /// Stationary distribution: πγ = 0, Σπ = 1.
    pub fn stationary_pi(&self) -> Result<DVector<f64>> {
        if !self.irreducible {
            return Err(Error::Reducible);
        }
        let d = self.d();
        let mut a = self.gamma.transpose();
        for j in 0..d {
            a[(d - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(d);
        b[d - 1] = 1.0;
        let pi = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Singular("bordered stationary system".into()))?;
        if pi.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Singular(
                "stationary vector has nonpositive entries".into(),
            ));
        }
        Ok(pi)
    }

    /// Detailed balance π_i γ_ij = π_j γ_ji within 1e-10 for all pairs.
    #[must_use]
    pub fn is_reversible(&self, pi: &DVector<f64>) -> bool {
        let d = self.d();
        (0..d).all(|i| {
            (i + 1..d).all(|j| {
                (pi[i] * self.gamma[(i, j)] - pi[j] * self.gamma[(j, i)]).abs() <= BALANCE_TOL
            })
        })
    }

    /// Eigen-decomposition through the symmetric matrix D^{1/2} γ D^{−1/2}.
    pub fn spectral_decompose(&self) -> Result<SpectralData> {
        let pi = self.stationary_pi()?;
        if !self.is_reversible(&pi) {
            return Err(Error::NotReversible);
        }
        let d = self.d();
        let sq: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
        let s = DMatrix::from_fn(d, d, |i, j| {
            let a = sq[i] * self.gamma[(i, j)] / sq[j];
            let b = sq[j] * self.gamma[(j, i)] / sq[i];
            0.5 * (a + b)
        });
        let eig = s.symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut eigenvalues = Vec::with_capacity(d);
        let mut vectors = DMatrix::zeros(d, d);
        for (col, &k) in order.iter().enumerate() {
            let w = eig.eigenvectors.column(k);
            for i in 0..d {
                vectors[(i, col)] = w[i] / sq[i];
            }
            eigenvalues.push(eig.eigenvalues[k].min(0.0));
        }
        eigenvalues[0] = 0.0;
        for i in 0..d {
            vectors[(i, 0)] = 1.0;
        }
        Ok(SpectralData {
            eigenvalues,
            vectors,
            pi,
        })
    }
}

impl SpectralData {
    /// max |Σ_i π_i u^{(k)}_i u^{(ℓ)}_i − δ_{kℓ}|.
    #[must_use]
    pub fn orthonormality_error(&self) -> f64 {
        let d = self.pi.len();
        let mut worst: f64 = 0.0;
        for k in 0..d {
            for l in 0..d {
                let s: f64 = (0..d)
                    .map(|i| self.pi[i] * self.vectors[(i, k)] * self.vectors[(i, l)])
                    .sum();
                let target = if k == l { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }

    /// γ_ij rebuilt as π_j Σ_ℓ ν_ℓ u_i^{(ℓ)} u_j^{(ℓ)}.
    #[must_use]
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = self.pi.len();
        DMatrix::from_fn(d, d, |i, j| {
            self.pi[j]
                * (0..d)
                    .map(|l| self.eigenvalues[l] * self.vectors[(i, l)] * self.vectors[(j, l)])
                    .sum::<f64>()
        })
    }
}

/// (θ, P) together with the stationary vector π, the form in which the
/// small-θ formulas consume a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaModel {
    /// Overall scaled mutation rate.
    pub theta: f64,
    /// Mutation transition matrix.
    pub p: DMatrix<f64>,
    /// Stationary vector of γ = ½θ(P − I).
    pub pi: DVector<f64>,
}

impl ThetaModel {
    /// Builds the model and its stationary vector.
    pub fn new(tp: ThetaP) -> Result<Self> {
        let pi = RateMatrix::from_theta_p(tp.theta, &tp.p)?.stationary_pi()?;
        Ok(Self {
            theta: tp.theta,
            p: tp.p,
            pi,
        })
    }

    /// Parent-independent model with P_ij = π_j.
    pub fn pim(theta: f64, pi: &[f64]) -> Result<Self> {
        check_probability_vector(pi)?;
        let d = pi.len();
        let p = DMatrix::from_fn(d, d, |_, j| pi[j]);
        Self::new(ThetaP::new(theta, p)?)
    }

    /// Number of types.
    #[must_use]
    pub fn d(&self) -> usize {
        self.p.nrows()
    }

    /// The generator γ = ½θ(P − I).
    pub fn rates(&self) -> Result<RateMatrix> {
        RateMatrix::from_theta_p(self.theta, &self.p)
    }

    /// Same P and π with a different θ.
    #[must_use]
    pub fn with_theta(&self, theta: f64) -> Self {
        Self {
            theta,
            ..self.clone()
        }
    }

    /// The model to evaluate at the reference rate α = −½ when the physical
    /// growth rate is `alpha`: θ becomes θ/(2|α|).
    pub fn at_reference(&self, alpha: f64) -> Result<Self> {
        if !(alpha < 0.0) {
            return Err(Error::Domain(format!(
                "alpha must be negative, got {alpha}"
            )));
        }
        Ok(self.with_theta(self.theta / (2.0 * alpha.abs())))
    }
}
