//! Special functions: exponential integrals, modified Bessel I1, harmonic
//! numbers and a log-gamma.
//!
//! The `exp_integral_*`, `bessel_i1` and `harmonic` entry points validate
//! their arguments. The short-named variants (`e1`, `e2`, `ein`, `i1`,
//! `i1_scaled`) skip validation and return NaN outside their domain; they are
//! what the density code calls in its inner loops.

use crate::error::{domain, Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_86;

/// Truncation controls for series and continued fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecFunConfig {
    /// Relative tolerance at which a series or continued fraction stops.
    pub series_tol: f64,
    /// Hard cap on the number of terms.
    pub max_terms: usize,
}

impl Default for SpecFunConfig {
    fn default() -> Self {
        Self {
            series_tol: 1e-16,
            max_terms: 500,
        }
    }
}

impl SpecFunConfig {
    /// Checks `series_tol > 0` and `max_terms ≥ 50`.
    pub fn validate(&self) -> Result<()> {
        if !(self.series_tol > 0.0) || self.series_tol > 1e-6 {
            return Err(Error::InvalidModel(format!(
                "series_tol must lie in (0, 1e-6], got {}",
                self.series_tol
            )));
        }
        if self.max_terms < 50 {
            return Err(Error::InvalidModel(format!(
                "max_terms must be at least 50, got {}",
                self.max_terms
            )));
        }
        Ok(())
    }

    /// Ein(x) = Σ_{k≥1} (−1)^{k+1} x^k / (k·k!), the entire part of E1.
    #[must_use]
    pub fn ein(&self, x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for k in 2..self.max_terms {
            let kf = k as f64;
            term *= -x * (kf - 1.0) / (kf * kf);
            sum += term;
            if term.abs() <= self.series_tol * sum.abs() {
                break;
            }
        }
        sum
    }

    /// E1(x) for x > 0, NaN otherwise.
    #[must_use]
    pub fn e1(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NAN;
        }
        if x < 1.0 {
            return self.ein(x) - EULER_GAMMA - x.ln();
        }
        if x > 745.0 {
            return 0.0;
        }
        // Modified Lentz evaluation of the continued fraction for e^x E1(x).
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..self.max_terms {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() <= self.series_tol.max(f64::EPSILON) {
                break;
            }
        }
        h * (-x).exp()
    }

    /// E2(x) for x ≥ 0, NaN otherwise.
    #[must_use]
    pub fn e2(&self, x: f64) -> f64 {
        if x == 0.0 {
            1.0
        } else if !(x > 0.0) {
            f64::NAN
        } else if x < 1e-8 {
            1.0 + x * (x.ln() + EULER_GAMMA - 1.0)
        } else {
            (-x).exp() - x * self.e1(x)
        }
    }

    /// I1(z) by its power series, for z ≥ 0.
    #[must_use]
    pub fn i1(&self, z: f64) -> f64 {
        if !(z >= 0.0) {
            return f64::NAN;
        }
        let h = 0.5 * z;
        let h2 = h * h;
        let mut term = h;
        let mut sum = h;
        for k in 1..self.max_terms {
            let kf = k as f64;
            term *= h2 / (kf * (kf + 1.0));
            sum += term;
            if term <= self.series_tol * sum {
                break;
            }
        }
        sum
    }

    /// e^{−z} I1(z), usable for arbitrarily large z.
    #[must_use]
    pub fn i1_scaled(&self, z: f64) -> f64 {
        if !(z >= 0.0) {
            return f64::NAN;
        }
        if z <= 50.0 {
            return self.i1(z) * (-z).exp();
        }
        // Hankel asymptotic expansion; terms shrink until k ≈ 2z, far beyond
        // the point where they drop below the tolerance for z > 50.
        let mu = 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..self.max_terms {
            let kf = k as f64;
            let odd = 2.0 * kf - 1.0;
            term *= -(mu - odd * odd) / (kf * 8.0 * z);
            sum += term;
            if term.abs() <= self.series_tol * sum.abs() {
                break;
            }
        }
        sum / (2.0 * std::f64::consts::PI * z).sqrt()
    }
}

const DEFAULT: SpecFunConfig = SpecFunConfig {
    series_tol: 1e-16,
    max_terms: 500,
};

/// Ein(x) = E1(x) + γ_EM + ln x, entire in x.
#[must_use]
pub fn ein(x: f64) -> f64 {
    DEFAULT.ein(x)
}

/// E1(x) without argument checks.
#[must_use]
pub fn e1(x: f64) -> f64 {
    DEFAULT.e1(x)
}

/// E2(x) without argument checks.
#[must_use]
pub fn e2(x: f64) -> f64 {
    DEFAULT.e2(x)
}

/// I1(z) without argument checks.
#[must_use]
pub fn i1(z: f64) -> f64 {
    DEFAULT.i1(z)
}

/// e^{−z} I1(z) without argument checks.
#[must_use]
pub fn i1_scaled(z: f64) -> f64 {
    DEFAULT.i1_scaled(z)
}

/// Exponential integral E1(x) = ∫_1^∞ e^{−xt}/t dt, x > 0.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return domain(format!("E1 requires x > 0, got {x}"));
    }
    Ok(e1(x))
}

/// Exponential integral E2(x) = ∫_1^∞ e^{−xt}/t² dt, x ≥ 0.
pub fn exp_integral_e2(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return domain(format!("E2 requires x >= 0, got {x}"));
    }
    Ok(e2(x))
}

/// Modified Bessel function I1(z), z ≥ 0.
pub fn bessel_i1(z: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return domain(format!("I1 requires z >= 0, got {z}"));
    }
    Ok(i1(z))
}

/// Harmonic number H_n, with H_0 = 0.
#[must_use]
pub fn harmonic(n: u64) -> f64 {
    if n <= 10_000 {
        // Summed smallest-first to keep the rounding error at O(ε).
        return (1..=n).rev().map(|k| 1.0 / k as f64).sum();
    }
    let nf = n as f64;
    let inv2 = 1.0 / (nf * nf);
    nf.ln() + EULER_GAMMA + 0.5 / nf - inv2 / 12.0 + inv2 * inv2 / 120.0
}

/// n! as a float.
#[must_use]
pub fn factorial(n: u64) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7, nine coefficients).
#[must_use]
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (k, c) in C.iter().enumerate().skip(1) {
        a += c / (x + k as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// ln n!, exact summation below 30 and Lanczos above.
#[must_use]
pub fn ln_factorial(n: u64) -> f64 {
    if n < 30 {
        factorial(n).ln()
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}
