//! Half-angle series `u = Σ c_q r^q cos(qθ)`, `q = 1/2, 3/2, …`, for the slit disc in the plane.

use std::f64::consts::PI;

use crate::{Error, Result};

/// Tolerance used for the coefficient quadratures.
pub const QUAD_TOL: f64 = 1e-12;

/// Truncated half-angle expansion of the solution on the unit disc slit along the negative axis.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfAngleSeries {
    /// `coeffs[j]` multiplies `r^{j+1/2} cos((j+1/2)θ)`.
    pub coeffs: Vec<f64>,
    /// Tolerance that `|c_N|` is compared against.
    pub tolerance: f64,
}

impl HalfAngleSeries {
    pub fn new(coeffs: Vec<f64>) -> Self {
        HalfAngleSeries { coeffs, tolerance: 1e-8 }
    }

    pub fn truncation(&self) -> usize {
        self.coeffs.len()
    }

    pub fn q(j: usize) -> f64 {
        j as f64 + 0.5
    }

    /// Coefficient of `r^q cos(qθ)` for half-integer `q` (zero beyond the truncation).
    pub fn coeff(&self, q: f64) -> f64 {
        let j = (q - 0.5).round();
        if j < 0.0 || (q - 0.5 - j).abs() > 1e-12 {
            return 0.0;
        }
        self.coeffs.get(j as usize).copied().unwrap_or(0.0)
    }

    /// `|c_N|`, the last retained coefficient.
    pub fn tail(&self) -> f64 {
        self.coeffs.last().map(|c| c.abs()).unwrap_or(0.0)
    }

    /// True when the last coefficient is below the tolerance.
    pub fn is_resolved(&self) -> bool {
        self.tail() <= self.tolerance
    }

    /// Bound on the truncation error inside radius `rho < 1`, extrapolating the observed decay.
    pub fn tail_bound(&self, rho: f64) -> f64 {
        let n = self.coeffs.len();
        if n == 0 {
            return 0.0;
        }
        self.tail() * rho.powf(Self::q(n)) / (1.0 - rho).max(1e-300)
    }

    pub fn eval_polar(&self, r: f64, theta: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let q = Self::q(j);
                c * r.powf(q) * (q * theta).cos()
            })
            .sum()
    }

    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        self.eval_polar(x1.hypot(x2), x2.atan2(x1))
    }

    /// `(u, ∂₁u, ∂₂u)` at `(x1, x2)` off the slit.
    pub fn eval_grad(&self, x1: f64, x2: f64) -> (f64, f64, f64) {
        let r = x1.hypot(x2);
        let th = x2.atan2(x1);
        let (mut u, mut ur, mut ut) = (0.0, 0.0, 0.0);
        for (j, c) in self.coeffs.iter().enumerate() {
            let q = Self::q(j);
            let rq = r.powf(q);
            u += c * rq * (q * th).cos();
            ur += c * q * rq / r * (q * th).cos();
            ut -= c * q * rq * (q * th).sin();
        }
        let (ct, st) = (th.cos(), th.sin());
        (u, ur * ct - ut * st / r, ur * st + ut * ct / r)
    }

    /// Dirichlet energy `∫_{B₁} |∇u|² = π Σ q c_q²`.
    pub fn dirichlet_energy(&self) -> f64 {
        PI * self
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| Self::q(j) * c * c)
            .sum::<f64>()
    }
}

/// Single coefficient `c_q = (2/π)∫₀^π φ(θ) cos(qθ) dθ` for even `φ`.
pub fn half_angle_coefficient(phi: &dyn Fn(f64) -> f64, q: f64) -> Result<f64> {
    // Split at the midpoint so oscillatory integrands stay well sampled.
    let pieces = (q.ceil() as usize).max(1);
    let mut total = 0.0;
    for p in 0..pieces {
        let a = PI * p as f64 / pieces as f64;
        let b = PI * (p + 1) as f64 / pieces as f64;
        let out = quadrature::double_exponential::integrate(|t| phi(t) * (q * t).cos(), a, b, QUAD_TOL);
        if !out.integral.is_finite() || out.error_estimate > 1e3 * QUAD_TOL {
            return Err(Error::SeriesUnresolved { last: out.error_estimate, tolerance: QUAD_TOL });
        }
        total += out.integral;
    }
    Ok(2.0 / PI * total)
}

/// Solves the Dirichlet problem on the unit disc slit along `[−1, 0]` with boundary values
/// `φ(θ)` (even, vanishing at `±π`), keeping `n_terms` coefficients.
pub fn solve_series_2d(phi: &dyn Fn(f64) -> f64, n_terms: usize) -> Result<HalfAngleSeries> {
    let coeffs = (0..n_terms)
        .map(|j| half_angle_coefficient(phi, HalfAngleSeries::q(j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(HalfAngleSeries::new(coeffs))
}

/// Like [`solve_series_2d`] but doubles the truncation until `|c_N| ≤ tol`.
pub fn solve_series_adaptive(phi: &dyn Fn(f64) -> f64, tol: f64, max_terms: usize) -> Result<HalfAngleSeries> {
    let mut n = 8;
    loop {
        let mut s = solve_series_2d(phi, n)?;
        s.tolerance = tol;
        if s.is_resolved() {
            return Ok(s);
        }
        if n >= max_terms {
            return Err(Error::SeriesUnresolved { last: s.tail(), tolerance: tol });
        }
        n = (2 * n).min(max_terms);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cos_half_is_u0() {
        let s = solve_series_2d(&|t: f64| (t / 2.0).cos(), 6).unwrap();
        assert!((s.coeffs[0] - 1.0).abs() < 1e-12);
        for c in &s.coeffs[1..] {
            assert!(c.abs() < 1e-12);
        }
        assert!((s.dirichlet_energy() - PI / 2.0).abs() < 1e-10);
    }

    #[test]
    fn cos_three_half() {
        let s = solve_series_2d(&|t: f64| (1.5 * t).cos(), 6).unwrap();
        assert!((s.coeffs[1] - 1.0).abs() < 1e-12);
        let (x1, x2): (f64, f64) = (0.3, 0.2);
        let r = x1.hypot(x2);
        let u0 = ((x1 + r) / 2.0f64).sqrt();
        assert!((s.eval(x1, x2) - u0 * (2.0 * x1 - r)).abs() < 1e-12);
    }

    #[test]
    fn tent_against_riemann_sum() {
        let phi = |t: f64| 1.0 - t.abs() / PI;
        let s = solve_series_2d(&phi, 5).unwrap();
        for (j, c) in s.coeffs.iter().enumerate() {
            let q = HalfAngleSeries::q(j);
            let m = 1_000_000;
            let h = PI / m as f64;
            let riemann: f64 = (0..m).map(|i| {
                let t = (i as f64 + 0.5) * h;
                phi(t) * (q * t).cos()
            }).sum::<f64>() * h * 2.0 / PI;
            assert!((c - riemann).abs() < 1e-9, "q={q}");
            let closed = 2.0 / (PI * PI * q * q);
            assert!((c - closed).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let s = HalfAngleSeries::new(vec![1.0, 0.3, -0.2]);
        let (x1, x2, h) = (0.2, 0.15, 1e-6);
        let (_, g1, g2) = s.eval_grad(x1, x2);
        let f1 = (s.eval(x1 + h, x2) - s.eval(x1 - h, x2)) / (2.0 * h);
        let f2 = (s.eval(x1, x2 + h) - s.eval(x1, x2 - h)) / (2.0 * h);
        assert!((g1 - f1).abs() < 1e-7 && (g2 - f2).abs() < 1e-7);
    }

    #[test]
    fn adaptive_truncation() {
        let phi = |t: f64| (t / 2.0).cos() + 0.1 * (2.5 * t).cos();
        let s = solve_series_adaptive(&phi, 1e-10, 64).unwrap();
        assert!(s.is_resolved());
        assert!((s.coeff(2.5) - 0.1).abs() < 1e-12);
        let tent = |t: f64| 1.0 - t.abs() / PI;
        assert!(matches!(solve_series_adaptive(&tent, 1e-12, 16), Err(Error::SeriesUnresolved { .. })));
    }
}
