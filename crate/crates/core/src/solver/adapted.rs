//! Edge-adapted solver for `n = 2`: tube coordinates around `Γ` with the square-root
//! unfolding `d + i x₃ = (ξ + iη)²`, in which `U₀ = ξ` and the slit is the face `ξ = 0`.
//!
//! A point is `X = γ(s) + d ν(s) + x₃ e₃` with `γ(s) = (s, g(s))`, so `r = ξ² + η²`.
//! The Laplacian becomes `(4r J h)⁻¹ [∂_s(4r/(J h) u_s) + ∂_ξ(J h u_ξ) + ∂_η(J h u_η)]` with
//! `J = √(1 + g'²)` and `h = 1 − k(s) d`.

use serde::{Deserialize, Serialize};

use crate::geometry::{Frame, SlitGeometry};
use crate::solver::linalg::{solve_dirichlet, strides_of, GridOperator, Multigrid};
use crate::solver::{BoundaryData, Rhs, SOLVER_TOL};
use crate::{Error, Result};

/// Uniform grid in `(s, ξ, η) ∈ [−s_max, s_max] × [0, ξ_max] × [0, η_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptedGrid {
    pub s_max: f64,
    pub xi_max: f64,
    pub eta_max: f64,
    pub n_s: usize,
    pub n_xi: usize,
    pub n_eta: usize,
    pub h_s: f64,
    pub h_xi: f64,
    pub h_eta: f64,
}

impl AdaptedGrid {
    /// `cells_xi` cells across `[0, 1]` in `ξ` and `η`, twice as many over `s ∈ [−1, 1]`.
    pub fn standard(cells_xi: usize) -> Self {
        Self::new(1.0, 1.0, 1.0, 2 * cells_xi, cells_xi, cells_xi)
    }

    pub fn new(s_max: f64, xi_max: f64, eta_max: f64, cells_s: usize, cells_xi: usize, cells_eta: usize) -> Self {
        AdaptedGrid {
            s_max,
            xi_max,
            eta_max,
            n_s: cells_s + 1,
            n_xi: cells_xi + 1,
            n_eta: cells_eta + 1,
            h_s: 2.0 * s_max / cells_s as f64,
            h_xi: xi_max / cells_xi as f64,
            h_eta: eta_max / cells_eta as f64,
        }
    }

    pub fn refined(&self) -> Self {
        Self::new(self.s_max, self.xi_max, self.eta_max, 2 * (self.n_s - 1), 2 * (self.n_xi - 1), 2 * (self.n_eta - 1))
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.n_s, self.n_xi, self.n_eta]
    }

    pub fn len(&self) -> usize {
        self.n_s * self.n_xi * self.n_eta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n_s * (j + self.n_xi * k)
    }

    pub fn ijk(&self, idx: usize) -> (usize, usize, usize) {
        (idx % self.n_s, (idx / self.n_s) % self.n_xi, idx / (self.n_s * self.n_xi))
    }

    pub fn coords(&self, i: usize, j: usize, k: usize) -> (f64, f64, f64) {
        (-self.s_max + i as f64 * self.h_s, j as f64 * self.h_xi, k as f64 * self.h_eta)
    }
}

/// Tube-coordinate data at `(s, ξ, η)`.
#[derive(Clone, Copy, Debug)]
pub struct TubePoint {
    pub x: [f64; 3],
    pub d: f64,
    pub q: f64,
    /// `J = √(1+g'²)`.
    pub jac: f64,
    /// `1 − k(s) d`.
    pub stretch: f64,
    pub tangent: [f64; 2],
    pub normal: [f64; 2],
    pub curvature: f64,
    pub foot: [f64; 2],
}

pub fn tube_point(geom: &SlitGeometry, s: f64, xi: f64, eta: f64) -> TubePoint {
    let (g0, g1, g2) = geom.g_derivs(s);
    let jac = (1.0 + g1 * g1).sqrt();
    let normal = [-g1 / jac, 1.0 / jac];
    let tangent = [1.0 / jac, g1 / jac];
    let curvature = g2 / jac.powi(3);
    let d = xi * xi - eta * eta;
    let q = xi * xi + eta * eta;
    TubePoint {
        x: [s + d * normal[0], g0 + d * normal[1], 2.0 * xi * eta],
        d,
        q,
        jac,
        stretch: 1.0 - curvature * d,
        tangent,
        normal,
        curvature,
        foot: [s, g0],
    }
}

impl TubePoint {
    pub fn frame(&self, xi: f64) -> Frame {
        let mut theta = self.x[2].atan2(self.d);
        if theta <= -std::f64::consts::PI || (self.x[2] == 0.0 && self.d < 0.0) {
            theta = std::f64::consts::PI;
        }
        Frame {
            d: self.d,
            r: self.q,
            theta,
            u0: xi,
            nu: self.normal.to_vec(),
            kappa: self.curvature / self.stretch,
            z: self.foot.to_vec(),
            t: self.x[2],
        }
    }
}

/// Solution on an [`AdaptedGrid`].
#[derive(Clone, Debug)]
pub struct AdaptedSolution {
    pub grid: AdaptedGrid,
    pub geometry: SlitGeometry,
    pub values: Vec<f64>,
    /// `u/U₀ = u/ξ`, extended to `ξ = 0` by a one-sided difference.
    pub ratio: Vec<f64>,
    pub boundary: BoundaryData,
    pub rhs: Rhs,
    pub iterations: usize,
    /// True when the values are a Richardson combination of this grid and its refinement.
    pub richardson: bool,
}

impl AdaptedSolution {
    pub fn tube(&self, idx: usize) -> (TubePoint, f64, f64) {
        let (i, j, k) = self.grid.ijk(idx);
        let (s, xi, eta) = self.grid.coords(i, j, k);
        (tube_point(&self.geometry, s, xi, eta), xi, eta)
    }
}

fn check_injective(geom: &SlitGeometry, grid: &AdaptedGrid) -> Result<()> {
    let dmax = grid.xi_max.powi(2).max(grid.eta_max.powi(2));
    let steps = 200;
    for i in 0..=steps {
        let s = -grid.s_max + 2.0 * grid.s_max * i as f64 / steps as f64;
        if geom.curvature_at(s).abs() * dmax >= 0.9 {
            return Err(Error::InvalidInput(format!(
                "tube of depth {dmax} exceeds the curvature radius near s = {s}"
            )));
        }
    }
    Ok(())
}

fn assemble(geom: &SlitGeometry, grid: &AdaptedGrid) -> GridOperator {
    let len = grid.len();
    let (hs, hx, he) = (grid.h_s, grid.h_xi, grid.h_eta);
    let mut w = vec![vec![0.0; len]; 3];
    let mut fixed = vec![false; len];
    for idx in 0..len {
        let (i, j, k) = grid.ijk(idx);
        let (s, xi, eta) = grid.coords(i, j, k);
        fixed[idx] = j == 0 || i == 0 || i + 1 == grid.n_s || j + 1 == grid.n_xi || k + 1 == grid.n_eta;
        let half = if k == 0 { 0.5 } else { 1.0 };
        if i + 1 < grid.n_s {
            let tp = tube_point(geom, s + hs / 2.0, xi, eta);
            w[0][idx] = half * 4.0 * tp.q / (tp.jac * tp.stretch) * hx * he / hs;
        }
        if j + 1 < grid.n_xi {
            let tp = tube_point(geom, s, xi + hx / 2.0, eta);
            w[1][idx] = half * tp.jac * tp.stretch * hs * he / hx;
        }
        if k + 1 < grid.n_eta {
            let tp = tube_point(geom, s, xi, eta + he / 2.0);
            w[2][idx] = tp.jac * tp.stretch * hs * hx / he;
        }
    }
    GridOperator::new(grid.dims().to_vec(), w, fixed)
}

fn solve_single(
    geom: &SlitGeometry,
    phi: &BoundaryData,
    rhs: &Rhs,
    grid: &AdaptedGrid,
) -> Result<(Vec<f64>, usize)> {
    let op = assemble(geom, grid);
    let len = grid.len();
    let vol = grid.h_s * grid.h_xi * grid.h_eta;
    let mut values = vec![0.0; len];
    let mut b = vec![0.0; len];
    for idx in 0..len {
        let (i, j, k) = grid.ijk(idx);
        let (s, xi, eta) = grid.coords(i, j, k);
        let tp = tube_point(geom, s, xi, eta);
        if op.fixed[idx] {
            values[idx] = if j == 0 { 0.0 } else { phi.value(&tp.x, &[0.0, 0.0]) };
        } else if !rhs.is_zero() {
            let half = if k == 0 { 0.5 } else { 1.0 };
            let f = rhs.f.eval_xr(&tp.x[..2], tp.q);
            b[idx] = -half * vol * 4.0 * xi * tp.jac * tp.stretch * f;
        }
    }
    let mg = Multigrid::new(op);
    let st = solve_dirichlet(&mg, &b, &mut values, SOLVER_TOL)?;
    Ok((values, st.iterations))
}

/// `u/ξ` with the `ξ = 0` face filled by the second-order one-sided derivative `∂_ξ u`.
fn ratio_of(grid: &AdaptedGrid, values: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; values.len()];
    for idx in 0..values.len() {
        let (i, j, k) = grid.ijk(idx);
        let (_, xi, _) = grid.coords(i, j, k);
        g[idx] = if j > 0 {
            values[idx] / xi
        } else {
            let u1 = values[grid.index(i, 1, k)];
            let u2 = values[grid.index(i, 2, k)];
            (4.0 * u1 - u2) / (2.0 * grid.h_xi)
        };
    }
    g
}

/// Solves `Δu = (U₀/r) f` in the tube with `u = 0` on the slit face, even reflection across
/// `η = 0` and Dirichlet data `φ(X)` on the remaining faces. With `richardson`, the grid and its
/// refinement are combined as `(4u_{h/2} − u_h)/3` on the coarse nodes.
pub fn solve_adapted(
    geom: &SlitGeometry,
    phi: &BoundaryData,
    rhs: &Rhs,
    grid: &AdaptedGrid,
    richardson: bool,
) -> Result<AdaptedSolution> {
    if geom.n() != 2 {
        return Err(Error::InvalidInput("edge-adapted solver requires n = 2".into()));
    }
    check_injective(geom, grid)?;
    let (mut values, mut iterations) = solve_single(geom, phi, rhs, grid)?;
    if richardson {
        let fine = grid.refined();
        let (fv, it) = solve_single(geom, phi, rhs, &fine)?;
        iterations += it;
        for idx in 0..values.len() {
            let (i, j, k) = grid.ijk(idx);
            let f = fv[fine.index(2 * i, 2 * j, 2 * k)];
            values[idx] = (4.0 * f - values[idx]) / 3.0;
        }
    }
    let ratio = ratio_of(grid, &values);
    Ok(AdaptedSolution {
        grid: grid.clone(),
        geometry: geom.clone(),
        values,
        ratio,
        boundary: phi.clone(),
        rhs: rhs.clone(),
        iterations,
        richardson,
    })
}

/// Derivative of a nodal field along one grid axis, fourth order in the interior, with even
/// reflection across the `ξ = 0` and `η = 0` faces.
pub fn axis_derivative(grid: &AdaptedGrid, field: &[f64], axis: usize) -> Vec<f64> {
    let dims = grid.dims();
    let st = strides_of(&dims);
    let h = [grid.h_s, grid.h_xi, grid.h_eta][axis];
    let n = dims[axis];
    let reflect = axis > 0;
    let mut out = vec![0.0; field.len()];
    for idx in 0..field.len() {
        let c = (idx / st[axis]) % n;
        let base = idx - c * st[axis];
        let at = |m: i64| -> Option<f64> {
            let m = if reflect && m < 0 { -m } else { m };
            if m < 0 || m as usize >= n {
                None
            } else {
                Some(field[base + m as usize * st[axis]])
            }
        };
        let ci = c as i64;
        out[idx] = match (at(ci - 2), at(ci - 1), at(ci + 1), at(ci + 2)) {
            (Some(a), Some(b), Some(d), Some(e)) => (a - 8.0 * b + 8.0 * d - e) / (12.0 * h),
            (_, Some(b), Some(d), _) => (d - b) / (2.0 * h),
            (None, None, Some(d), Some(e)) => (-3.0 * field[idx] + 4.0 * d - e) / (2.0 * h),
            (Some(a), Some(b), None, None) => (3.0 * field[idx] - 4.0 * b + a) / (2.0 * h),
            _ => 0.0,
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_u0_is_reproduced() {
        let g = SlitGeometry::flat(2);
        let grid = AdaptedGrid::new(1.0, 1.0, 1.0, 16, 8, 8);
        let sol = solve_adapted(&g, &BoundaryData::U0Flat, &Rhs::zero(2), &grid, false).unwrap();
        for (idx, r) in sol.ratio.iter().enumerate() {
            let (i, _, _) = grid.ijk(idx);
            if i > 0 && i + 1 < grid.n_s {
                assert!((r - 1.0).abs() < 1e-8, "{idx} {r}");
            }
        }
    }

    #[test]
    fn flat_cubic_harmonic() {
        // U₀(2x₂ − r) = ξ(2(ξ²−η²) − (ξ²+η²)) is exact for the scheme up to the η-stencil error.
        let g = SlitGeometry::flat(2);
        let phi = BoundaryData::HalfAngle { coeffs: vec![0.0, 1.0] };
        let exact = |x: &[f64]| {
            let r = x[1].hypot(x[2]);
            crate::geometry::u0_of(x[1], x[2]) * (2.0 * x[1] - r)
        };
        let mut errs = vec![];
        for cells in [8, 16] {
            let grid = AdaptedGrid::new(1.0, 1.0, 1.0, cells, cells, cells);
            let sol = solve_adapted(&g, &phi, &Rhs::zero(2), &grid, false).unwrap();
            let mut e: f64 = 0.0;
            for idx in 0..grid.len() {
                let (tp, _, _) = sol.tube(idx);
                e = e.max((sol.values[idx] - exact(&tp.x)).abs());
            }
            errs.push(e);
        }
        assert!(errs[1] < 1e-8 || errs[0] / errs[1] > 3.5, "{errs:?}");
    }

    #[test]
    fn derivative_orders() {
        let grid = AdaptedGrid::new(1.0, 1.0, 1.0, 32, 32, 32);
        let f: Vec<f64> = (0..grid.len())
            .map(|idx| {
                let (i, j, k) = grid.ijk(idx);
                let (s, xi, eta) = grid.coords(i, j, k);
                s.sin() + (xi * xi).cos() * (1.0 + eta * eta)
            })
            .collect();
        let ds = axis_derivative(&grid, &f, 0);
        let dx = axis_derivative(&grid, &f, 1);
        let idx = grid.index(10, 0, 5);
        let (s, _, _) = grid.coords(10, 0, 5);
        assert!((ds[idx] - s.cos()).abs() < 1e-6);
        assert!(dx[idx].abs() < 1e-12);
    }
}
