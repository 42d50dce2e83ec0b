//! Reference solutions of `Δu = (U₀/r) f` in slit domains.

pub mod adapted;
pub mod barrier;
pub mod cartesian;
pub mod energy;
pub mod linalg;
pub mod series;

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::geometry::{u0_of, Frame};
use crate::xrpoly::XrPoly;
use crate::{Error, Result};

pub use adapted::{solve_adapted, AdaptedGrid, AdaptedSolution};
pub use barrier::{check_barrier, BarrierReport};
pub use cartesian::{solve_fd, CartesianSolution};
pub use energy::{compute_energy, u0_polar_energy, EnergyReport};
pub use series::{solve_series_2d, solve_series_adaptive, HalfAngleSeries};

/// Linear-solver tolerance on the relative residual.
pub const SOLVER_TOL: f64 = 1e-11;

/// Dirichlet data on the outer boundary, with the extension used at nodes outside the domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BoundaryData {
    Zero,
    /// Trace of the flat profile `√((x_n + |(x_n, x_{n+1})|)/2)`.
    U0Flat,
    /// `Σ c_j ρ^{q_j} cos(q_j θ)`, `q_j = j + 1/2`, in polar coordinates of the `(x_n, x_{n+1})`
    /// plane about the domain center.
    HalfAngle { coeffs: Vec<f64> },
    /// `ρ^{1/2}(1 − |θ|/π)` about the domain center.
    Tent,
}

impl BoundaryData {
    pub fn cos_half() -> Self {
        BoundaryData::HalfAngle { coeffs: vec![1.0] }
    }

    /// Value at `x ∈ ℝⁿ⁺¹` for a domain centered at `center ∈ ℝⁿ`.
    pub fn value(&self, x: &[f64], center: &[f64]) -> f64 {
        let n = x.len() - 1;
        match self {
            BoundaryData::Zero => 0.0,
            BoundaryData::U0Flat => u0_of(x[n - 1], x[n]),
            BoundaryData::HalfAngle { coeffs } => {
                let (rho, th) = polar(x, center);
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, c)| {
                        let q = j as f64 + 0.5;
                        c * rho.powf(q) * (q * th).cos()
                    })
                    .sum()
            }
            BoundaryData::Tent => {
                let (rho, th) = polar(x, center);
                rho.sqrt() * (1.0 - th.abs() / PI)
            }
        }
    }

    /// Boundary values `φ(θ)` on the unit circle (for `n = 1`).
    pub fn on_circle(&self, theta: f64) -> f64 {
        self.value(&[theta.cos(), theta.sin()], &[0.0])
    }
}

fn polar(x: &[f64], center: &[f64]) -> (f64, f64) {
    let n = x.len() - 1;
    let a = x[n - 1] - center[n - 1];
    let b = x[n];
    let mut th = b.atan2(a);
    if th <= -PI {
        th = PI;
    }
    (a.hypot(b), th)
}

/// Right-hand side `f` of `Δu = (U₀/r) f`, a polynomial in `(x, r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rhs {
    pub f: XrPoly<f64>,
}

impl Rhs {
    pub fn zero(n: usize) -> Self {
        Rhs { f: XrPoly::zero(n) }
    }

    pub fn is_zero(&self) -> bool {
        self.f.is_zero()
    }

    /// `Δu` at a point with frame `fr` and coordinates `x`.
    pub fn laplacian(&self, x: &[f64], fr: &Frame) -> f64 {
        if self.f.is_zero() || fr.r == 0.0 {
            return 0.0;
        }
        fr.u0 / fr.r * self.f.eval_xr(&x[..x.len() - 1], fr.r)
    }
}

/// Outer domain of a Cartesian grid (always intersected with `x_{n+1} ≥ 0`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    /// Ball of the given radius about `center ∈ ℝⁿ` (last coordinate zero).
    Disc { radius: f64, center: Vec<f64> },
    /// Cube `[−a, a]ⁿ × [0, a]`.
    Box { half_width: f64 },
}

impl Domain {
    pub fn unit_disc(n: usize) -> Self {
        Domain::Disc { radius: 1.0, center: vec![0.0; n] }
    }

    pub fn center(&self, n: usize) -> Vec<f64> {
        match self {
            Domain::Disc { center, .. } => center.clone(),
            Domain::Box { .. } => vec![0.0; n],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Disc { radius, center } => {
                let n = center.len();
                let mut s = x[n] * x[n];
                for i in 0..n {
                    s += (x[i] - center[i]).powi(2);
                }
                s < radius * radius
            }
            Domain::Box { half_width } => x.iter().all(|v| v.abs() < *half_width),
        }
    }

    /// Bounding box `(lo, hi)` per coordinate of `ℝⁿ⁺¹` (last axis starts at 0).
    pub fn bounds(&self, n: usize) -> Vec<(f64, f64)> {
        match self {
            Domain::Disc { radius, center } => {
                let mut b: Vec<(f64, f64)> = center.iter().map(|c| (c - radius, c + radius)).collect();
                b.push((0.0, *radius));
                b
            }
            Domain::Box { half_width } => {
                let mut b = vec![(-half_width, *half_width); n];
                b.push((0.0, *half_width));
                b
            }
        }
    }
}

/// Cartesian grid parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub h: f64,
    pub domain: Domain,
    #[serde(default = "default_true")]
    pub split: bool,
}

fn default_true() -> bool {
    true
}

/// A discrete solution on one of the supported grids.
#[derive(Clone, Debug)]
pub enum GridSolution {
    Cartesian(CartesianSolution),
    Adapted(AdaptedSolution),
}

impl GridSolution {
    pub fn n(&self) -> usize {
        match self {
            GridSolution::Cartesian(s) => s.n,
            GridSolution::Adapted(_) => 2,
        }
    }

    pub fn h(&self) -> f64 {
        match self {
            GridSolution::Cartesian(s) => s.h,
            GridSolution::Adapted(s) => s.grid.h_s,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match self {
            GridSolution::Cartesian(s) => s.dims.clone(),
            GridSolution::Adapted(s) => s.grid.dims().to_vec(),
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            GridSolution::Cartesian(s) => &s.values,
            GridSolution::Adapted(s) => &s.values,
        }
    }

    pub fn grading(&self) -> &'static str {
        match self {
            GridSolution::Cartesian(_) => "uniform",
            GridSolution::Adapted(_) => "edge-adapted",
        }
    }

    fn header(&self) -> String {
        let dims: Vec<String> = self.dims().iter().map(|d| d.to_string()).collect();
        format!("{},{},{},{}", self.n(), self.h(), dims.join("x"), self.grading())
    }

    /// Header line `n,h,dims,grading`, then one value per line in row-major order
    /// (first axis fastest).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.header())?;
        for v in self.values() {
            writeln!(w, "{v:e}")?;
        }
        Ok(())
    }

    /// Header line followed by the values as little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.header())?;
        for v in self.values() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Parses the output of [`GridSolution::write_csv`] into `(header fields, values)`.
    pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<f64>)> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty grid file".into()))?;
        let fields: Vec<String> = header.split(',').map(str::to_string).collect();
        if fields.len() != 4 {
            return Err(Error::Parse("grid header must be n,h,dims,grading".into()));
        }
        let values = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Ok((fields, values))
    }
}

/// Smooth cutoff: 1 for `r ≤ 1/4`, 0 for `r ≥ 1/2`; returns `(χ, χ', χ'')`.
pub fn cutoff(r: f64) -> (f64, f64, f64) {
    const A: f64 = 0.25;
    const B: f64 = 0.5;
    if r <= A {
        return (1.0, 0.0, 0.0);
    }
    if r >= B {
        return (0.0, 0.0, 0.0);
    }
    let t = (r - A) / (B - A);
    let s = 1.0 / (B - A);
    // χ = ψ(1−t)/(ψ(1−t)+ψ(t)) with ψ(x) = exp(−1/x).
    let psi = |x: f64| (-1.0 / x).exp();
    let dpsi = |x: f64| psi(x) / (x * x);
    let ddpsi = |x: f64| psi(x) * (1.0 - 2.0 * x) / x.powi(4);
    let (a, da, dda) = (psi(1.0 - t), -dpsi(1.0 - t), ddpsi(1.0 - t));
    let (b, db, ddb) = (psi(t), dpsi(t), ddpsi(t));
    let den = a + b;
    let dden = da + db;
    let ddden = dda + ddb;
    let chi = a / den;
    let dchi = (da * den - a * dden) / (den * den);
    let ddchi = (dda * den - a * ddden) / (den * den) - 2.0 * dden * (da * den - a * dden) / den.powi(3);
    (chi, dchi * s, ddchi * s * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_derivatives() {
        let h = 1e-5;
        for &r in &[0.3, 0.37, 0.45] {
            let (c, d, dd) = cutoff(r);
            let (cp, dp, _) = cutoff(r + h);
            let (cm, dm, _) = cutoff(r - h);
            assert!(((cp - cm) / (2.0 * h) - d).abs() < 1e-6);
            assert!(((dp - dm) / (2.0 * h) - dd).abs() < 1e-4);
            assert!((0.0..=1.0).contains(&c));
        }
        assert_eq!(cutoff(0.1).0, 1.0);
        assert_eq!(cutoff(0.6).0, 0.0);
    }

    #[test]
    fn boundary_data_values() {
        let d = BoundaryData::cos_half();
        assert!((d.on_circle(0.0) - 1.0).abs() < 1e-15);
        assert!(d.on_circle(PI).abs() < 1e-15);
        let x = [0.3, 0.4];
        assert!((d.value(&x, &[0.0]) - BoundaryData::U0Flat.value(&x, &[0.0])).abs() < 1e-15);
    }
}
