//! Principal left eigenvector of the truncated transition matrix.

use nalgebra::{DMatrix, DVector};

use super::operator::{operator_for, Operator};
use super::{DiscreteModel, QsdVector};
use crate::error::{Error, Result};

/// Eigen-solver choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    /// Block subspace iteration with Rayleigh–Ritz extraction.
    Subspace,
    /// Plain power iteration.
    Power,
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Algorithm.
    pub method: EigenMethod,
    /// Stop once ‖gP̃ − ρg‖_1 ≤ tol for subspace iteration, or once
    /// successive iterates differ by at most tol in ℓ1 for power iteration.
    pub tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
    /// Block size for subspace iteration.
    pub block: usize,
    /// Mass at m = m_max above which a truncation warning is logged.
    pub boundary_warn: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: EigenMethod::Subspace,
            tol: 1e-10,
            max_iter: 20_000,
            block: 3,
            boundary_warn: 1e-3,
        }
    }
}

impl SolverOptions {
    /// Power iteration with the usual cap and step tolerance.
    #[must_use]
    pub fn power() -> Self {
        Self {
            method: EigenMethod::Power,
            tol: 1e-12,
            max_iter: 200_000,
            ..Self::default()
        }
    }
}

/// QSD vector with default options.
pub fn qsd_eigenvector(model: &DiscreteModel) -> Result<QsdVector> {
    qsd_eigenvector_with(model, &SolverOptions::default())
}

/// QSD vector with explicit options.
pub fn qsd_eigenvector_with(model: &DiscreteModel, opts: &SolverOptions) -> Result<QsdVector> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 || opts.block == 0 {
        return Err(Error::Domain(
            "solver needs tol > 0, max_iter > 0, block > 0".into(),
        ));
    }
    let op = operator_for(model);
    let starts = start_vectors(model, opts.block.min(op.dim()));
    let (mut g, iterations) = match opts.method {
        EigenMethod::Subspace => subspace(op.as_ref(), starts, opts)?,
        EigenMethod::Power => power(op.as_ref(), starts[0].clone(), opts)?,
    };
    // Round-off can leave tiny negative entries far in the tail.
    let neg: f64 = g.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    if neg > 1e-8 {
        log::warn!("eigenvector had negative mass {neg:.3e} before cleaning");
    }
    g.iter_mut().for_each(|v| *v = v.max(0.0));
    normalise(&mut g);
    let mut next = vec![0.0; g.len()];
    op.apply(&g, &mut next);
    let rho: f64 = next.iter().sum();
    next.iter_mut().for_each(|v| *v /= rho);
    std::mem::swap(&mut g, &mut next);
    op.apply(&g, &mut next);
    let rho: f64 = next.iter().sum();
    let residual: f64 = next.iter().zip(&g).map(|(a, b)| (a - rho * b).abs()).sum();

    let qsd = QsdVector {
        types: model.types(),
        m_max: model.m_max(),
        probs: g,
        eigenvalue: rho,
        loss: 1.0 - rho,
        residual,
        iterations,
    };
    let edge = qsd.total_marginal(model.m_max());
    if edge >= opts.boundary_warn {
        log::warn!(
            "QSD mass {edge:.3e} at m = m_max = {}; the truncation is too small",
            model.m_max()
        );
    }
    Ok(qsd)
}

fn start_vectors(model: &DiscreteModel, k: usize) -> Vec<Vec<f64>> {
    let mm = model.m_max();
    let decay = 4.0 / mm as f64;
    let mut states = Vec::with_capacity(model.state_count());
    if model.types() == 1 {
        states.extend((1..=mm).map(|m| (m, 0.5)));
    } else {
        for m in 1..=mm {
            states.extend((0..=m).map(|i| (m, i as f64 / m as f64)));
        }
    }
    (0..k)
        .map(|b| {
            states
                .iter()
                .map(|&(m, u)| {
                    let base = (-decay * m as f64).exp();
                    match b {
                        0 => base,
                        1 => base * (u - 0.5),
                        2 => base * (m as f64 / mm as f64 - 0.25),
                        _ => base * ((b as f64 * (m as f64 + 3.0 * u)).sin()),
                    }
                })
                .collect()
        })
        .collect()
}

fn normalise(g: &mut [f64]) {
    let s: f64 = g.iter().sum();
    if s != 0.0 {
        g.iter_mut().for_each(|v| *v /= s);
    }
}

fn apply_block(op: &dyn Operator, q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let mut z = DMatrix::zeros(n, q.ncols());
    let mut y = vec![0.0; n];
    for c in 0..q.ncols() {
        let x: Vec<f64> = q.column(c).iter().copied().collect();
        op.apply(&x, &mut y);
        z.column_mut(c).copy_from_slice(&y);
    }
    z
}

fn subspace(
    op: &dyn Operator,
    starts: Vec<Vec<f64>>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, usize)> {
    let n = op.dim();
    let k = starts.len();
    let mut v = DMatrix::from_fn(n, k, |r, c| starts[c][r]);
    let mut q = v.clone().qr().q();
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let z = apply_block(op, &q);
        let b = q.tr_mul(&z);
        let (rho, y) = dominant_ritz(&b)?;
        let g_raw = &q * &y;
        let scale = g_raw.sum();
        if scale == 0.0 {
            return Err(Error::Singular("Ritz vector has zero sum".into()));
        }
        let g: Vec<f64> = g_raw.iter().map(|v| v / scale).collect();
        // gP̃ follows from Z by linearity.
        let gp = (&z * &y) / scale;
        residual = gp.iter().zip(&g).map(|(a, b)| (a - rho * b).abs()).sum();
        if residual <= opts.tol {
            return Ok((g, it));
        }
        v = z;
        q = v.clone().qr().q();
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

/// Largest real Ritz value of the small projected matrix and its vector.
fn dominant_ritz(b: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let k = b.nrows();
    let eig = b.complex_eigenvalues();
    let rho = eig
        .iter()
        .filter(|z| z.im.abs() <= 1e-12 * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !rho.is_finite() {
        return Err(Error::Singular("no real Ritz value".into()));
    }
    let shifted = b - DMatrix::identity(k, k) * rho;
    let svd = shifted.svd(false, true);
    let vt = svd
        .v_t
        .ok_or_else(|| Error::Singular("SVD failed".into()))?;
    let (imin, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc },
            );
    let y = vt.row(imin).transpose();
    Ok((rho, y))
}

fn power(op: &dyn Operator, start: Vec<f64>, opts: &SolverOptions) -> Result<(Vec<f64>, usize)> {
    let mut g = start;
    normalise(&mut g);
    let mut next = vec![0.0; g.len()];
    let mut step = f64::INFINITY;
    for it in 1..=opts.max_iter {
        op.apply(&g, &mut next);
        normalise(&mut next);
        step = next.iter().zip(&g).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut g, &mut next);
        if step <= opts.tol {
            return Ok((g, it));
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: step,
    })
}
