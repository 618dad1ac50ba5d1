//! The first-order-in-θ quasi-stationary density of the subcritical
//! d-type diffusion at α = −½.
//!
//! To O(θ) the law lives on the coordinate axes and on the coordinate
//! planes spanned by pairs of axes: a signed line density along each axis
//! and a positive surface density on each plane. Its Laplace transform is
//! ζ0 + θζ1.

use crate::error::{domain, Error, Result};
use crate::quad::{self, Tolerance};
use crate::rates::ThetaModel;
use crate::specfun::{e1, e2, ein, EULER_GAMMA};

/// Choice of the functions a_ij(x_j) in the singular factor x_i^{a_ij θ − 1}.
/// Both rules satisfy Σ_{i≠j} P_ji x_j / a_ij(x_j) = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ARule {
    /// a_ij(x_j) = x_j(1 − P_jj), the same for every i.
    #[default]
    Default,
    /// a_ij(x_j) = k_j x_j P_ji with k_j the number of i ≠ j with P_ji > 0,
    /// so each admissible target takes an equal share of the constraint.
    Split,
}

impl ARule {
    /// Short lowercase name.
    #[must_use]
    pub fn name(self) -> &'static str {
        match self {
            Self::Default => "default",
            Self::Split => "split",
        }
    }
}

/// a_ij(x_j) = x_j(1 − P_jj).
pub fn a_default(j: usize, x_j: f64, p: &nalgebra::DMatrix<f64>) -> Result<f64> {
    if j >= p.nrows() {
        return domain(format!("type index {j} out of range"));
    }
    if !(x_j > 0.0) {
        return domain(format!("a_default requires x_j > 0, got {x_j}"));
    }
    let leave = 1.0 - p[(j, j)];
    if !(leave > 0.0) {
        return Err(Error::InvalidModel(format!(
            "type {j} never mutates (P_jj = 1)"
        )));
    }
    Ok(x_j * leave)
}

/// The O(θ) quasi-stationary law for a (θ, P) model at α = −½.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallThetaQsd {
    model: ThetaModel,
    rule: ARule,
    split_k: Vec<f64>,
}

fn ln1p_over(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x / 2.0 + x * x / 3.0 - x * x * x / 4.0
    } else {
        x.ln_1p() / x
    }
}

const SING_EPS: f64 = 0.1;

fn tol() -> Tolerance {
    Tolerance {
        abs: 1e-14,
        rel: 1e-11,
        max_intervals: 400,
    }
}

impl SmallThetaQsd {
    /// Validates that every type can mutate (P_jj < 1).
    pub fn new(model: ThetaModel, rule: ARule) -> Result<Self> {
        let d = model.d();
        for j in 0..d {
            if !(model.p[(j, j)] < 1.0) {
                return Err(Error::InvalidModel(format!(
                    "type {j} never mutates (P_jj = 1); the a_ij constraint cannot be met"
                )));
            }
        }
        let split_k = (0..d)
            .map(|j| (0..d).filter(|&i| i != j && model.p[(j, i)] > 0.0).count() as f64)
            .collect();
        Ok(Self {
            model,
            rule,
            split_k,
        })
    }

    /// The underlying model.
    #[must_use]
    pub fn model(&self) -> &ThetaModel {
        &self.model
    }

    /// The a-rule in use.
    #[must_use]
    pub fn a_rule(&self) -> ARule {
        self.rule
    }

    /// Number of types.
    #[must_use]
    pub fn d(&self) -> usize {
        self.model.d()
    }

    /// Same model and rule at another θ.
    #[must_use]
    pub fn with_theta(&self, theta: f64) -> Self {
        Self {
            model: self.model.with_theta(theta),
            ..self.clone()
        }
    }

    /// a_ij(x_j) under the configured rule.
    #[must_use]
    pub fn a(&self, i: usize, j: usize, x_j: f64) -> f64 {
        let p = &self.model.p;
        match self.rule {
            ARule::Default => x_j * (1.0 - p[(j, j)]),
            ARule::Split => {
                if p[(j, i)] > 0.0 {
                    self.split_k[j] * x_j * p[(j, i)]
                } else {
                    x_j * (1.0 - p[(j, j)])
                }
            }
        }
    }

    /// Σ_{i≠j} P_ji x_j / a_ij(x_j); equals 1 for an admissible rule.
    #[must_use]
    pub fn constraint_sum(&self, j: usize, x_j: f64) -> f64 {
        (0..self.d())
            .filter(|&i| i != j && self.model.p[(j, i)] > 0.0)
            .map(|i| self.model.p[(j, i)] * x_j / self.a(i, j, x_j))
            .sum()
    }

    fn check_phi(&self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.d() {
            return domain(format!(
                "phi has length {}, expected {}",
                phi.len(),
                self.d()
            ));
        }
        if phi.iter().any(|&v| !(v > -1.0) || !v.is_finite()) {
            return domain("phi components must exceed -1");
        }
        Ok(())
    }

    /// ζ0(φ) = Σ_i π_i/(1 + φ_i).
    pub fn zeta0(&self, phi: &[f64]) -> Result<f64> {
        self.check_phi(phi)?;
        Ok(phi
            .iter()
            .zip(self.model.pi.iter())
            .map(|(f, p)| p / (1.0 + f))
            .sum())
    }

    /// ζ1(φ) = −Σ_{i,j} π_jP_ji (1+φ_i)((1+φ_j)^{−1} − (1+φ_i)^{−1})² ln(1+φ_i)/φ_i.
    ///
    /// Defined for φ_i > −1 so that derivatives at φ = 0 can be taken by
    /// central differences.
    pub fn zeta1(&self, phi: &[f64]) -> Result<f64> {
        self.check_phi(phi)?;
        let d = self.d();
        let (p, pi) = (&self.model.p, &self.model.pi);
        let mut s = 0.0;
        for i in 0..d {
            let li = ln1p_over(phi[i]);
            let ri = 1.0 / (1.0 + phi[i]);
            for j in 0..d {
                if i == j {
                    continue;
                }
                let diff = 1.0 / (1.0 + phi[j]) - ri;
                s += pi[j] * p[(j, i)] * (1.0 + phi[i]) * diff * diff * li;
            }
        }
        Ok(-s)
    }

    /// ζ0 + θζ1.
    pub fn zeta(&self, phi: &[f64]) -> Result<f64> {
        Ok(self.zeta0(phi)? + self.model.theta * self.zeta1(phi)?)
    }

    fn residual_of<F: Fn(&[f64]) -> Result<f64>>(
        &self,
        phi: &[f64],
        h: f64,
        zeta: F,
    ) -> Result<f64> {
        self.check_phi(phi)?;
        if !(h > 0.0) {
            return domain("finite-difference step must be positive");
        }
        if phi.iter().any(|&v| v <= h) {
            return domain(format!("step {h} is too large relative to phi"));
        }
        let d = self.d();
        let (p, t) = (&self.model.p, self.model.theta);
        let z = zeta(phi)?;
        let mut lhs = -(1.0 - z);
        let mut x = phi.to_vec();
        for i in 0..d {
            x[i] = phi[i] + h;
            let up = zeta(&x)?;
            x[i] = phi[i] - h;
            let down = zeta(&x)?;
            x[i] = phi[i];
            let grad = (up - down) / (2.0 * h);
            let drift: f64 = (0..d)
                .map(|j| (p[(i, j)] - if i == j { 1.0 } else { 0.0 }) * phi[j])
                .sum();
            lhs += (-phi[i] * (1.0 + phi[i]) + t * drift) * grad;
        }
        Ok(lhs)
    }

    /// Left side of the α = −½ Laplace-transform equation
    /// Σ_i[−φ_i(1+φ_i) + θΣ_j(P_ij − δ_ij)φ_j]∂ζ/∂φ_i − (1 − ζ) at
    /// ζ = ζ0 + θζ1, with central-difference gradients of step `h`.
    pub fn pde_residual(&self, phi: &[f64], h: f64) -> Result<f64> {
        self.residual_of(phi, h, |x| self.zeta(x))
    }

    /// As [`Self::pde_residual`] but for ζ0 alone.
    pub fn pde_residual_zeta0(&self, phi: &[f64], h: f64) -> Result<f64> {
        self.residual_of(phi, h, |x| self.zeta0(x))
    }

    fn check_pair(&self, i: usize, j: usize, xi: f64, xj: f64) -> Result<()> {
        if i >= self.d() || j >= self.d() || i == j {
            return domain(format!("invalid type pair ({i}, {j})"));
        }
        if !(xi > 0.0) || !(xj > 0.0) {
            return domain("surface density requires positive coordinates");
        }
        Ok(())
    }

    fn surface_half(&self, i: usize, j: usize, xi: f64, xj: f64) -> f64 {
        let w = self.model.pi[j] * self.model.p[(j, i)];
        if w == 0.0 {
            return 0.0;
        }
        let s = self.a(i, j, xj) * self.model.theta;
        let ej = (-xj).exp();
        w * (xj * ej * xi.powf(s - 1.0) * e2(xi) + 2.0 * ej * e1(xi))
    }

    /// Surface density on the (x_i, x_j) plane:
    /// θπ_jP_ji{x_j e^{−x_j} x_i^{a_ij θ−1} E2(x_i) + 2e^{−x_j}E1(x_i)} + (i ↔ j).
    pub fn g_surface(&self, i: usize, j: usize, xi: f64, xj: f64) -> Result<f64> {
        self.check_pair(i, j, xi, xj)?;
        Ok(self.model.theta * (self.surface_half(i, j, xi, xj) + self.surface_half(j, i, xj, xi)))
    }

    fn line_bracket(x: f64) -> f64 {
        if x < 1.0 {
            // E1 + [γ(1−x) + ln x]e^{−x} with the ln x cancellation done
            // analytically through Ein.
            ein(x) - (EULER_GAMMA + x.ln()) * -(-x).exp_m1() - EULER_GAMMA * x * (-x).exp()
        } else {
            e1(x) + (EULER_GAMMA * (1.0 - x) + x.ln()) * (-x).exp()
        }
    }

    /// Line density −θπ_i(1 − P_ii){E1(x) + [γ_EM(1 − x) + ln x]e^{−x}}.
    pub fn g_line(&self, i: usize, x: f64) -> Result<f64> {
        if i >= self.d() {
            return domain(format!("type index {i} out of range"));
        }
        if !(x > 0.0) {
            return domain("line density requires x > 0");
        }
        let (pi, p) = (&self.model.pi, &self.model.p);
        Ok(-self.model.theta * pi[i] * (1.0 - p[(i, i)]) * Self::line_bracket(x))
    }

    /// Density at a point with one or two positive coordinates (others
    /// exactly zero); zero when three or more coordinates are positive.
    pub fn density_eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d() {
            return domain(format!(
                "point has length {}, expected {}",
                x.len(),
                self.d()
            ));
        }
        if x.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return domain("coordinates must be finite and nonnegative");
        }
        let pos: Vec<usize> = (0..x.len()).filter(|&k| x[k] > 0.0).collect();
        match pos.as_slice() {
            [] => Ok(0.0),
            [i] => self.g_line(*i, x[*i]),
            [i, j] => self.g_surface(*i, *j, x[*i], x[*j]),
            _ => Ok(0.0),
        }
    }

    /// Density at growth rate `alpha` < 0 with physical mutation rate
    /// θ (this model's θ): (2|α|)^k g_{−½, θ/(2|α|)}(2|α|x), k the number of
    /// positive coordinates.
    pub fn rescale_alpha(&self, x: &[f64], alpha: f64) -> Result<f64> {
        if !(alpha < 0.0) {
            return domain(format!("alpha must be negative, got {alpha}"));
        }
        let c = 2.0 * alpha.abs();
        let reference = self.with_theta(self.model.theta / c);
        let y: Vec<f64> = x.iter().map(|v| v * c).collect();
        let k = x.iter().filter(|&&v| v > 0.0).count() as i32;
        Ok(c.powi(k) * reference.density_eval(&y)?)
    }

    /// g_surface in (x, u) coordinates: x·g_surface(xu, x(1 − u)).
    pub fn g_surface_xu(&self, i: usize, j: usize, x: f64, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return domain("u must lie in (0, 1)");
        }
        Ok(x * self.g_surface(i, j, x * u, x * (1.0 - u))?)
    }

    /// E[w(X)] under the O(θ) law: Σ_i ∫ w(x e_i) g_line + Σ_{i<j} ∫∫ w g_surface.
    ///
    /// `w` must be smooth and of at most polynomial growth; the integrable
    /// x_i^{aθ−1} singularity of the surface density is removed by
    /// subtracting its value at x_i = 0 on (0, 0.1].
    pub fn expectation<W: Fn(&[f64]) -> f64>(&self, w: W) -> f64 {
        let d = self.d();
        let mut x = vec![0.0; d];
        let mut total = 0.0;
        for i in 0..d {
            total += integrate_half_line(|t| {
                let mut y = vec![0.0; d];
                y[i] = t;
                w(&y) * self.g_line(i, t).unwrap_or(0.0)
            });
        }
        for i in 0..d {
            for j in 0..d {
                if i == j {
                    continue;
                }
                let wgt = self.model.pi[j] * self.model.p[(j, i)];
                if wgt == 0.0 {
                    continue;
                }
                total += self.model.theta * wgt * self.half_surface_integral(i, j, &w, &mut x);
            }
        }
        total
    }

    fn half_surface_integral<W: Fn(&[f64]) -> f64>(
        &self,
        i: usize,
        j: usize,
        w: &W,
        scratch: &mut [f64],
    ) -> f64 {
        let d = self.d();
        let theta = self.model.theta;
        let outer = |xj: f64| {
            let mut y = scratch.to_vec();
            for v in y.iter_mut() {
                *v = 0.0;
            }
            y[j] = xj;
            let s = self.a(i, j, xj) * theta;
            let ej = (-xj).exp();
            let eval = |xi: f64| {
                let mut z = y.clone();
                z[i] = xi;
                w(&z)
            };
            let mut at_zero = {
                let mut z = vec![0.0; d];
                z[j] = xj;
                w(&z)
            };
            if !at_zero.is_finite() {
                at_zero = 0.0;
            }
            // x_j e^{−x_j} ∫ x_i^{s−1} E2(x_i) w dx_i, with the value at
            // x_i = 0 integrated in closed form on (0, ε].
            let near = at_zero * SING_EPS.powf(s) / s
                + quad::integrate(
                    |xi| xi.powf(s - 1.0) * (e2(xi) * eval(xi) - at_zero),
                    0.0,
                    SING_EPS,
                    tol(),
                )
                .value;
            let far = integrate_from(SING_EPS, |xi| xi.powf(s - 1.0) * e2(xi) * eval(xi));
            let log_part = integrate_half_line(|xi| 2.0 * e1(xi) * eval(xi));
            ej * (xj * (near + far) + log_part)
        };
        integrate_half_line(outer)
    }
}

const BREAKS: [f64; 7] = [0.0, 0.1, 1.0, 4.0, 12.0, 30.0, 70.0];

fn integrate_from<F: FnMut(f64) -> f64>(a: f64, mut f: F) -> f64 {
    let mut s = 0.0;
    for k in 0..BREAKS.len() - 1 {
        let (lo, hi) = (BREAKS[k].max(a), BREAKS[k + 1]);
        if hi > lo {
            s += quad::integrate(&mut f, lo, hi, tol()).value;
        }
    }
    s
}

fn integrate_half_line<F: FnMut(f64) -> f64>(f: F) -> f64 {
    integrate_from(0.0, f)
}

/// (x1, x2) ↦ (x1 + x2, x1/(x1 + x2)).
pub fn to_xu(x1: f64, x2: f64) -> Result<(f64, f64)> {
    if !(x1 > 0.0) || !(x2 > 0.0) {
        return domain("to_xu requires positive coordinates");
    }
    let x = x1 + x2;
    Ok((x, x1 / x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn pim2(theta: f64) -> SmallThetaQsd {
        SmallThetaQsd::new(
            ThetaModel::pim(theta, &[0.75, 0.25]).unwrap(),
            ARule::Default,
        )
        .unwrap()
    }

    #[test]
    fn zeta0_values() {
        let q = pim2(0.05);
        assert_eq!(q.zeta0(&[0.0, 0.0]).unwrap(), 1.0);
        assert!((q.zeta0(&[1.0, 0.0]).unwrap() - 0.625).abs() < 1e-15);
        assert!((q.zeta0(&[0.7, 0.7]).unwrap() - 1.0 / 1.7).abs() < 1e-15);
    }

    #[test]
    fn zeta1_vanishes_to_second_order_at_origin() {
        let q = pim2(0.05);
        assert_eq!(q.zeta1(&[0.0, 0.0]).unwrap(), 0.0);
        let h = 1e-5;
        for k in 0..2 {
            let mut up = [0.0, 0.0];
            let mut dn = [0.0, 0.0];
            up[k] = h;
            dn[k] = -h;
            let g = (q.zeta1(&up).unwrap() - q.zeta1(&dn).unwrap()) / (2.0 * h);
            assert!(g.abs() < 1e-9);
        }
    }

    #[test]
    fn a_rules_meet_the_constraint() {
        let p = DMatrix::from_row_slice(3, 3, &[0.6, 0.3, 0.1, 0.2, 0.7, 0.1, 0.25, 0.25, 0.5]);
        let m = ThetaModel::new(crate::rates::ThetaP::new(0.1, p.clone()).unwrap()).unwrap();
        for rule in [ARule::Default, ARule::Split] {
            let q = SmallThetaQsd::new(m.clone(), rule).unwrap();
            for j in 0..3 {
                for x in [1e-3, 0.5, 2.0, 40.0] {
                    assert!((q.constraint_sum(j, x) - 1.0).abs() < 1e-14);
                }
            }
        }
        assert!((a_default(0, 2.0, &p).unwrap() - 0.8).abs() < 1e-15);
        let q = SmallThetaQsd::new(m, ARule::Default).unwrap();
        for j in 0..3 {
            let a0 = q.a((j + 1) % 3, j, 1.5);
            assert_eq!(a0, q.a((j + 2) % 3, j, 1.5));
        }
        assert!(a_default(0, 1.0, &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn surface_reference_value() {
        let q = pim2(0.05);
        let expected =
            0.05 * 2.0 * 0.1875 * ((-1.0f64).exp() * e2(1.0) + 2.0 * (-1.0f64).exp() * e1(1.0));
        let got = q.g_surface(0, 1, 1.0, 1.0).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.00405).abs() < 5e-6);
    }

    #[test]
    fn surface_symmetry_and_linearity() {
        let q = pim2(0.05);
        let a = q.g_surface(0, 1, 0.3, 1.7).unwrap();
        let b = q.g_surface(1, 0, 1.7, 0.3).unwrap();
        assert_eq!(a, b);
        let l = q.g_line(0, 0.8).unwrap();
        assert!((q.with_theta(0.1).g_line(0, 0.8).unwrap() - 2.0 * l).abs() < 1e-17);
    }

    #[test]
    fn line_bracket_branches_agree() {
        let x: f64 = 1.0;
        let lo = ein(x) - (EULER_GAMMA + x.ln()) * -(-x).exp_m1() - EULER_GAMMA * x * (-x).exp();
        let hi = e1(x) + (EULER_GAMMA * (1.0 - x) + x.ln()) * (-x).exp();
        assert!((lo - hi).abs() < 1e-15);
        assert!(SmallThetaQsd::line_bracket(1e-12).abs() < 1e-10);
    }

    #[test]
    fn dispatch() {
        let q3 = SmallThetaQsd::new(
            ThetaModel::pim(0.05, &[0.5, 0.3, 0.2]).unwrap(),
            ARule::Default,
        )
        .unwrap();
        assert_eq!(q3.density_eval(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        let q = pim2(0.05);
        assert_eq!(
            q.density_eval(&[0.7, 0.0]).unwrap(),
            q.g_line(0, 0.7).unwrap()
        );
        assert_eq!(q.density_eval(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(q.density_eval(&[-1.0, 0.0]).is_err());
        assert!(q.g_surface(0, 0, 1.0, 1.0).is_err());
    }

    #[test]
    fn xu_map() {
        assert_eq!(to_xu(1.0, 1.0).unwrap(), (2.0, 0.5));
        let q = pim2(0.05);
        let v = q.g_surface_xu(0, 1, 2.0, 0.25).unwrap();
        assert!((v - 2.0 * q.g_surface(0, 1, 0.5, 1.5).unwrap()).abs() < 1e-16);
    }

    #[test]
    fn rescale_identity() {
        let q = pim2(0.05);
        for x in [[0.4, 1.2], [0.0, 2.0]] {
            assert!(
                (q.rescale_alpha(&x, -0.5).unwrap() - q.density_eval(&x).unwrap()).abs() < 1e-17
            );
        }
    }

    #[test]
    fn zeta0_alone_solves_the_theta_free_equation() {
        let q = pim2(0.05).with_theta(0.0);
        let r = q.pde_residual_zeta0(&[0.5, 1.0], 1e-4).unwrap();
        assert!(r.abs() < 1e-8);
        assert!(q.pde_residual(&[0.5, 1.0], 0.6).is_err());
    }
}
