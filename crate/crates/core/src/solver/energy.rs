//! Discrete version of `E(u) = ∫_{B₁} |∇u|² + (π/2)|{u > 0} ∩ {x_{n+1} = 0} ∩ B₁|`.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::geometry::u0_of;
use crate::solver::{CartesianSolution, Domain, GridSolution};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    /// `∫|∇u|²` over the full (reflected) ball.
    pub gradient: f64,
    /// `(π/2)·` measure of the positivity set on the plane.
    pub plate: f64,
    pub total: f64,
}

/// Energy of a Cartesian solution over its disc (or the unit ball for box domains).
///
/// Each grid edge with midpoint in the ball contributes `h^{n−1}(Δu)²`; edges off the plane are
/// counted twice for the reflected half.
pub fn compute_energy(sol: &GridSolution) -> Result<EnergyReport> {
    match sol {
        GridSolution::Cartesian(s) => Ok(cartesian_energy(s)),
        GridSolution::Adapted(_) => Err(Error::InvalidInput(
            "energy is computed on Cartesian grids only".into(),
        )),
    }
}

fn cartesian_energy(sol: &CartesianSolution) -> EnergyReport {
    let n = sol.n;
    let h = sol.h;
    let (radius, center) = match &sol.spec.domain {
        Domain::Disc { radius, center } => (*radius, center.clone()),
        Domain::Box { .. } => (1.0, vec![0.0; n]),
    };
    let inside = |x: &[f64]| {
        let mut s = x[n] * x[n];
        for i in 0..n {
            s += (x[i] - center[i]).powi(2);
        }
        s < radius * radius
    };
    let st = sol.strides();
    let scale = h.powi(n as i32 - 1);
    let mut grad = 0.0;
    let mut plate_measure = 0.0;
    for idx in 0..sol.len() {
        let c = sol.index_coords(idx);
        let x = sol.point(idx);
        let on_plane = c[n] == 0;
        for a in 0..=n {
            if c[a] + 1 >= sol.dims[a] {
                continue;
            }
            let j = idx + st[a];
            let mut mid = x.clone();
            mid[a] += h / 2.0;
            if !inside(&mid) {
                continue;
            }
            let du = sol.values[j] - sol.values[idx];
            let mult = if on_plane && a != n { 1.0 } else { 2.0 };
            grad += mult * scale * du * du;
            if on_plane && a != n && n == 1 {
                let pos = (sol.values[idx] > 0.0) as u8 + (sol.values[j] > 0.0) as u8;
                plate_measure += h * pos as f64 / 2.0;
            }
        }
        if on_plane && n == 2 && inside(&x) && sol.values[idx] > 0.0 {
            plate_measure += h * h;
        }
    }
    let plate = PI / 2.0 * plate_measure;
    EnergyReport { gradient: grad, plate, total: grad + plate }
}

/// `∫_{B₁} |∇U₀|²` in the plane by Gauss–Legendre quadrature in polar coordinates, with the
/// gradient of `U₀` taken by central differences.
pub fn u0_polar_energy(order: usize) -> f64 {
    let rule = GaussLegendre::new(NonZeroUsize::new(order).expect("positive order"));
    let grad2 = |x: f64, y: f64| {
        let eps = 1e-5 * x.hypot(y);
        let dx = (u0_of(x + eps, y) - u0_of(x - eps, y)) / (2.0 * eps);
        let dy = (u0_of(x, y + eps) - u0_of(x, y - eps)) / (2.0 * eps);
        dx * dx + dy * dy
    };
    // r = ρ² removes the r^{-1/2} behaviour of the integrand.
    rule.integrate(0.0, 1.0, |rho| {
        let r = rho * rho;
        let ang = rule.integrate(-PI, PI, |t| grad2(r * t.cos(), r * t.sin()));
        ang * r * 2.0 * rho
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_quadrature_gives_half_pi() {
        assert!((u0_polar_energy(64) - PI / 2.0).abs() < 1e-6);
    }
}
