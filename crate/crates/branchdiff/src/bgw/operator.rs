//! Row-vector application x ↦ xP̃ of the truncated transition matrix.

use nalgebra::DMatrix;

use super::{binomial_pmf, poisson_pmf, state_count, state_index, DiscreteModel};

/// A linear map applied to row vectors from the left.
pub trait Operator: Send + Sync {
    /// Dimension of the state space.
    fn dim(&self) -> usize;
    /// y = xP̃.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Dense one-type matrix T[m][n] = p(m, n), 1 ≤ m, n ≤ m_max.
#[derive(Debug, Clone)]
pub struct DenseOneType {
    t: DMatrix<f64>,
}

impl DenseOneType {
    /// Builds the matrix from the model's offspring law.
    #[must_use]
    pub fn new(model: &DiscreteModel) -> Self {
        let mm = model.m_max();
        let t = DMatrix::from_fn(mm, mm, |m, n| {
            model.offspring_pmf(m as u64 + 1, n as u64 + 1)
        });
        Self { t }
    }

    /// The matrix.
    #[must_use]
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.t
    }
}

impl Operator for DenseOneType {
    fn dim(&self) -> usize {
        self.t.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.t.nrows();
        y.iter_mut().for_each(|v| *v = 0.0);
        for (m, &xm) in x.iter().enumerate() {
            if xm == 0.0 {
                continue;
            }
            for (k, yk) in y.iter_mut().enumerate().take(n) {
                *yk += xm * self.t[(m, k)];
            }
        }
    }
}

/// Two-type Poisson operator in factorised form.
///
/// With i type-1 and k type-2 parents the children of the two parent
/// types are independent Poisson(λi), Poisson(λk) counts (J, K); each child
/// then mutates independently. The map is therefore H = AᵀGA with
/// A[i][J] = Poisson(λi)(J), followed by a per-total mixing matrix
/// M_n[J][j] = Σ_X Bin(J, r_12)(X) Bin(n − J, r_21)(j − J + X).
#[derive(Debug, Clone)]
pub struct FactorizedPoisson {
    m_max: usize,
    a: DMatrix<f64>,
    mix: Vec<Vec<f64>>,
}

impl FactorizedPoisson {
    /// Panics if the model's law is not Poisson or it has one type.
    #[must_use]
    pub fn new(model: &DiscreteModel) -> Self {
        let lambda = model
            .offspring()
            .poisson_mean()
            .expect("factorised operator needs Poisson offspring");
        assert_eq!(model.types(), 2, "factorised operator is two-type");
        let mm = model.m_max();
        let a = DMatrix::from_fn(mm + 1, mm + 1, |i, j| {
            poisson_pmf(lambda * i as f64, j as u64)
        });
        let (r12, r21) = model.mutation();
        let mut mix = Vec::with_capacity(mm + 1);
        for n in 0..=mm {
            let w = n + 1;
            let mut mn = vec![0.0; w * w];
            for big_j in 0..=n {
                let keep: Vec<f64> = (0..=big_j)
                    .map(|x| binomial_pmf(big_j as u64, x as u64, r12))
                    .collect();
                let back: Vec<f64> = (0..=n - big_j)
                    .map(|y| binomial_pmf((n - big_j) as u64, y as u64, r21))
                    .collect();
                for (x, &px) in keep.iter().enumerate() {
                    if px == 0.0 {
                        continue;
                    }
                    for (yv, &py) in back.iter().enumerate() {
                        let j = big_j - x + yv;
                        mn[big_j * w + j] += px * py;
                    }
                }
            }
            mix.push(mn);
        }
        Self { m_max: mm, a, mix }
    }
}

impl Operator for FactorizedPoisson {
    fn dim(&self) -> usize {
        state_count(2, self.m_max)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mm = self.m_max;
        let mut g = DMatrix::zeros(mm + 1, mm + 1);
        for m in 1..=mm {
            for i in 0..=m {
                g[(i, m - i)] = x[state_index(m, i)];
            }
        }
        let h = self.a.tr_mul(&g) * &self.a;
        for n in 1..=mm {
            let w = n + 1;
            let mn = &self.mix[n];
            let base = state_index(n, 0);
            let out = &mut y[base..base + w];
            out.iter_mut().for_each(|v| *v = 0.0);
            for big_j in 0..=n {
                let hv = h[(big_j, n - big_j)];
                if hv == 0.0 {
                    continue;
                }
                let row = &mn[big_j * w..(big_j + 1) * w];
                for (o, &r) in out.iter_mut().zip(row) {
                    *o += hv * r;
                }
            }
        }
    }
}

/// Sparse rows built entry by entry from [`DiscreteModel::transition`];
/// works for any offspring law and is the cross-check for the other
/// operators.
#[derive(Debug, Clone)]
pub struct LiteralOperator {
    dim: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl LiteralOperator {
    /// Builds all rows; cost grows as m_max⁴ for two types.
    #[must_use]
    pub fn new(model: &DiscreteModel) -> Self {
        let mm = model.m_max();
        let dim = model.state_count();
        let mut rows = Vec::with_capacity(dim);
        if model.types() == 1 {
            for m in 1..=mm {
                let row = (1..=mm)
                    .map(|n| (n - 1, model.offspring_pmf(m as u64, n as u64)))
                    .filter(|&(_, v)| v > 0.0)
                    .collect();
                rows.push(row);
            }
        } else {
            for m in 1..=mm {
                for i in 0..=m {
                    let mut row = Vec::new();
                    for n in 1..=mm {
                        for j in 0..=n {
                            let v = model.transition(m as u64, i as u64, n as u64, j as u64);
                            if v > 0.0 {
                                row.push((state_index(n, j), v));
                            }
                        }
                    }
                    rows.push(row);
                }
            }
        }
        Self { dim, rows }
    }

    /// Row sums Σ_t P̃[s][t].
    #[must_use]
    pub fn row_sums(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(_, v)| v).sum())
            .collect()
    }
}

impl Operator for LiteralOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (s, row) in self.rows.iter().enumerate() {
            let xs = x[s];
            if xs == 0.0 {
                continue;
            }
            for &(t, v) in row {
                y[t] += xs * v;
            }
        }
    }
}

/// The fastest exact operator for the model.
#[must_use]
pub fn operator_for(model: &DiscreteModel) -> Box<dyn Operator> {
    if model.types() == 1 {
        Box::new(DenseOneType::new(model))
    } else if model.offspring().poisson_mean().is_some() {
        Box::new(FactorizedPoisson::new(model))
    } else {
        Box::new(LiteralOperator::new(model))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgw::{Geometric, Poisson};
    use std::sync::Arc;

    #[test]
    fn factorised_equals_literal() {
        let model =
            DiscreteModel::two_type(Arc::new(Poisson::new(0.95).unwrap()), 0.07, 0.02, 12).unwrap();
        let fast = FactorizedPoisson::new(&model);
        let slow = LiteralOperator::new(&model);
        let n = fast.dim();
        assert_eq!(n, slow.dim());
        let x: Vec<f64> = (0..n).map(|k| ((k * 7919) % 13) as f64 + 0.5).collect();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        fast.apply(&x, &mut a);
        slow.apply(&x, &mut b);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-13 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn rows_are_substochastic() {
        let model =
            DiscreteModel::two_type(Arc::new(Geometric::with_mean(0.9).unwrap()), 0.1, 0.1, 8)
                .unwrap();
        let op = LiteralOperator::new(&model);
        for (s, r) in op.row_sums().into_iter().enumerate() {
            assert!(r <= 1.0 + 1e-14, "row {s} sums to {r}");
            assert!(r >= 0.0);
        }
    }

    #[test]
    fn dense_one_type_matches_literal() {
        let model = DiscreteModel::one_type(Arc::new(Poisson::new(0.9).unwrap()), 20).unwrap();
        let d = DenseOneType::new(&model);
        let l = LiteralOperator::new(&model);
        let x: Vec<f64> = (0..20).map(|k| 1.0 / (k as f64 + 1.0)).collect();
        let mut a = vec![0.0; 20];
        let mut b = vec![0.0; 20];
        d.apply(&x, &mut a);
        l.apply(&x, &mut b);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-15);
        }
    }
}
