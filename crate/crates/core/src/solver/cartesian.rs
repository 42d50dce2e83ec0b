//! Second-order finite differences on a uniform Cartesian grid over `x_{n+1} ≥ 0`.

use crate::geometry::{closest_point_frame, Frame, SlitGeometry};
use crate::solver::linalg::{solve_dirichlet, strides_of, GridOperator, Multigrid};
use crate::solver::{cutoff, BoundaryData, GridSpec, Rhs, SOLVER_TOL};
use crate::{Error, Result};

/// Finite-difference solution on the half-space grid (even reflection is implicit).
#[derive(Clone, Debug)]
pub struct CartesianSolution {
    pub n: usize,
    pub h: f64,
    pub dims: Vec<usize>,
    /// Coordinates of node 0.
    pub origin: Vec<f64>,
    pub values: Vec<f64>,
    /// True on masked slit nodes.
    pub slit: Vec<bool>,
    /// True on outer Dirichlet nodes.
    pub outer: Vec<bool>,
    pub boundary: BoundaryData,
    pub rhs: Rhs,
    pub geometry: SlitGeometry,
    pub spec: GridSpec,
    /// Coefficients `c_p` of the subtracted singular functions `χ x₁^p U₀`.
    pub split_coeffs: Vec<f64>,
    pub iterations: usize,
}

impl CartesianSolution {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.dims)
    }

    pub fn index_coords(&self, idx: usize) -> Vec<usize> {
        let st = self.strides();
        (0..self.dims.len()).map(|a| (idx / st[a]) % self.dims[a]).collect()
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.index_coords(idx)
            .iter()
            .zip(&self.origin)
            .map(|(&i, o)| o + i as f64 * self.h)
            .collect()
    }

    pub fn is_free(&self, idx: usize) -> bool {
        !self.slit[idx] && !self.outer[idx]
    }

    /// Node index nearest to `x` (with `|x_{n+1}|` by evenness), if inside the array.
    pub fn nearest(&self, x: &[f64]) -> Option<usize> {
        let st = self.strides();
        let mut idx = 0;
        for a in 0..self.dims.len() {
            let v = if a == self.n { x[a].abs() } else { x[a] };
            let i = ((v - self.origin[a]) / self.h).round();
            if i < 0.0 || i as usize >= self.dims[a] {
                return None;
            }
            idx += i as usize * st[a];
        }
        Some(idx)
    }

    /// Value at a node given by integer offsets, reflecting across the plane.
    pub fn value_at(&self, coords: &[i64]) -> Option<f64> {
        let st = self.strides();
        let mut idx = 0;
        for a in 0..self.dims.len() {
            let mut c = coords[a];
            if a == self.n {
                c = c.abs();
            }
            if c < 0 || c as usize >= self.dims[a] {
                return None;
            }
            idx += c as usize * st[a];
        }
        Some(self.values[idx])
    }

    /// Evaluates the stored solution at a node and its mirror image (identical by construction).
    pub fn value_even(&self, x: &[f64]) -> Option<f64> {
        self.nearest(x).map(|i| self.values[i])
    }
}

fn padded_count(extent: f64, h: f64) -> usize {
    let raw = (extent / h).ceil() as usize + 1;
    let block = 1usize << (raw.max(2) as f64).log2().floor().min(6.0) as u32;
    raw.div_ceil(block) * block + 1
}

/// Singular functions `S_p = χ(r) x₁^p U₀` used for splitting, with `ΔS_p`.
fn singular_basis(n: usize) -> usize {
    if n == 1 {
        1
    } else {
        3
    }
}

fn singular_value(p: usize, x: &[f64], fr: &Frame) -> (f64, f64) {
    let (chi, dchi, ddchi) = cutoff(fr.r);
    if chi == 0.0 && dchi == 0.0 {
        return (0.0, 0.0);
    }
    let n = x.len() - 1;
    let x1p = if n == 1 { 1.0 } else { x[0].powi(p as i32) };
    let s = chi * x1p * fr.u0;
    if fr.r == 0.0 {
        return (s, 0.0);
    }
    let r = fr.r;
    let lap_d = -fr.kappa;
    let lap_u0 = fr.u0 / (2.0 * r) * lap_d;
    let grad_r_dot_grad_u0 = fr.u0 / (2.0 * r);
    let lap_r = (1.0 + fr.d * lap_d) / r;
    let lap_chi = ddchi + dchi * lap_r;
    let lap_chi_u0 = chi * lap_u0 + 2.0 * dchi * grad_r_dot_grad_u0 + fr.u0 * lap_chi;
    if n == 1 || p == 0 {
        return (s, lap_chi_u0);
    }
    // ∇(χU₀)·e₁ = χ' (d/r) ν₁ + χ (U₀/2r) ν₁
    let g1 = dchi * fr.d / r * fr.nu[0] * fr.u0 + chi * fr.u0 / (2.0 * r) * fr.nu[0];
    let pf = p as f64;
    let d_x1p = pf * x[0].powi(p as i32 - 1);
    let dd_x1p = if p >= 2 { pf * (pf - 1.0) * x[0].powi(p as i32 - 2) } else { 0.0 };
    (s, x1p * lap_chi_u0 + 2.0 * d_x1p * g1 + chi * fr.u0 * dd_x1p)
}

struct Setup {
    dims: Vec<usize>,
    origin: Vec<f64>,
    frames: Vec<Option<Frame>>,
    slit: Vec<bool>,
    outer: Vec<bool>,
    op: GridOperator,
}

fn setup(geom: &SlitGeometry, spec: &GridSpec) -> Result<Setup> {
    let n = geom.n();
    let h = spec.h;
    let bounds = spec.domain.bounds(n);
    let mut origin = Vec::new();
    let mut dims = Vec::new();
    for (a, &(lo, hi)) in bounds.iter().enumerate() {
        if a == n {
            origin.push(0.0);
            dims.push(padded_count(hi, h));
        } else {
            // Align nodes with the origin so the edge point is a node.
            let start = (lo / h).floor() - 1.0;
            let count = padded_count(hi - start * h, h);
            origin.push(start * h);
            dims.push(count);
        }
    }
    let st = strides_of(&dims);
    let len: usize = dims.iter().product();
    let mut frames = Vec::with_capacity(len);
    let mut slit = vec![false; len];
    let mut outer = vec![false; len];
    for idx in 0..len {
        let c: Vec<usize> = (0..=n).map(|a| (idx / st[a]) % dims[a]).collect();
        let x: Vec<f64> = (0..=n).map(|a| origin[a] + c[a] as f64 * h).collect();
        let on_edge = (0..=n).any(|a| c[a] + 1 == dims[a] || (a != n && c[a] == 0));
        if on_edge || !spec.domain.contains(&x) {
            outer[idx] = true;
            frames.push(None);
            continue;
        }
        if c[n] == 0 {
            let gx = if n == 1 { 0.0 } else { geom.g_derivs(x[0]).0 };
            if x[n - 1] <= gx - h / 2.0 {
                slit[idx] = true;
            }
        }
        frames.push(Some(closest_point_frame(geom, &x)?));
    }
    let plane_total = (0..len).filter(|&i| (i / st[n]).is_multiple_of(dims[n]) && !outer[i]).count();
    let slit_total = slit.iter().filter(|&&s| s).count();
    if slit_total == 0 || slit_total == plane_total {
        return Err(Error::MaskDegenerate(format!("{slit_total} of {plane_total} plane nodes masked")));
    }
    let scale = h.powi(n as i32 - 1);
    let mut weights = vec![vec![0.0; len]; n + 1];
    for idx in 0..len {
        let on_plane = (idx / st[n]).is_multiple_of(dims[n]);
        for (a, w) in weights.iter_mut().enumerate() {
            w[idx] = if a != n && on_plane { 0.5 * scale } else { scale };
        }
    }
    let fixed: Vec<bool> = (0..len).map(|i| slit[i] || outer[i]).collect();
    let op = GridOperator::new(dims.clone(), weights, fixed);
    Ok(Setup { dims, origin, frames, slit, outer, op })
}

/// Solves `Δu = (U₀/r) f` with Dirichlet data on the outer boundary, zero on the slit and
/// even reflection across `{x_{n+1} = 0}`.
pub fn solve_fd(geom: &SlitGeometry, phi: &BoundaryData, rhs: &Rhs, spec: &GridSpec) -> Result<CartesianSolution> {
    let n = geom.n();
    let h = spec.h;
    let su = setup(geom, spec)?;
    let len = su.op.len();
    let st = strides_of(&su.dims);
    let center = spec.domain.center(n);
    let point = |idx: usize| -> Vec<f64> { (0..=n).map(|a| su.origin[a] + ((idx / st[a]) % su.dims[a]) as f64 * h).collect() };
    let vol = |idx: usize| {
        let v = h.powi(n as i32 + 1);
        if (idx / st[n]).is_multiple_of(su.dims[n]) {
            0.5 * v
        } else {
            v
        }
    };
    let mg = Multigrid::new(su.op.clone());
    let mut b0 = vec![0.0; len];
    let mut v0 = vec![0.0; len];
    for idx in 0..len {
        let x = point(idx);
        if su.outer[idx] {
            v0[idx] = phi.value(&x, &center);
        } else if let Some(fr) = &su.frames[idx] {
            if !su.slit[idx] {
                b0[idx] = -vol(idx) * rhs.laplacian(&x, fr);
            }
        }
    }
    let mut stats = solve_dirichlet(&mg, &b0, &mut v0, SOLVER_TOL)?;
    let mut values = v0.clone();
    let mut split_coeffs = Vec::new();
    if spec.split {
        let nb = singular_basis(n);
        let mut s_vals = vec![vec![0.0; len]; nb];
        let mut v_p = Vec::new();
        for (p, s_p) in s_vals.iter_mut().enumerate() {
            let mut b = vec![0.0; len];
            for idx in 0..len {
                if let Some(fr) = &su.frames[idx] {
                    let x = point(idx);
                    let (s, lap) = singular_value(p, &x, fr);
                    s_p[idx] = s;
                    if !su.slit[idx] {
                        b[idx] = vol(idx) * lap;
                    }
                }
            }
            let mut v = vec![0.0; len];
            let st2 = solve_dirichlet(&mg, &b, &mut v, SOLVER_TOL)?;
            stats.iterations += st2.iterations;
            v_p.push(v);
        }
        let annulus: Vec<usize> = (0..len)
            .filter(|&i| {
                !su.slit[i]
                    && !su.outer[i]
                    && su.frames[i].as_ref().is_some_and(|f| f.r >= 4.0 * h && f.r <= (16.0 * h).min(0.25) && f.u0 > 0.0)
            })
            .collect();
        let alpha = |field: &[f64]| fit_singular_coeffs(n, nb, &annulus, &su.frames, &point, field);
        let a0 = alpha(&v0)?;
        let cols: Vec<Vec<f64>> = v_p.iter().map(|v| alpha(v)).collect::<Result<_>>()?;
        let m = nalgebra::DMatrix::from_fn(nb, nb, |i, j| cols[j][i]);
        let rhs_v = nalgebra::DVector::from_iterator(nb, a0.iter().map(|v| -v));
        let c = m
            .lu()
            .solve(&rhs_v)
            .ok_or_else(|| Error::SingularSystem("splitting coefficients".into()))?;
        for idx in 0..len {
            if su.outer[idx] || su.slit[idx] {
                continue;
            }
            let mut add = 0.0;
            for p in 0..nb {
                add += c[p] * (s_vals[p][idx] + v_p[p][idx]);
            }
            values[idx] += add;
        }
        split_coeffs = c.iter().copied().collect();
    }
    Ok(CartesianSolution {
        n,
        h,
        dims: su.dims,
        origin: su.origin,
        values,
        slit: su.slit,
        outer: su.outer,
        boundary: phi.clone(),
        rhs: rhs.clone(),
        geometry: geom.clone(),
        spec: spec.clone(),
        split_coeffs,
        iterations: stats.iterations,
    })
}

/// Least-squares coefficients of `U₀ x₁^p` in a local `U₀·(x, r)`-polynomial fit on the annulus.
fn fit_singular_coeffs(
    n: usize,
    nb: usize,
    nodes: &[usize],
    frames: &[Option<Frame>],
    point: &dyn Fn(usize) -> Vec<f64>,
    field: &[f64],
) -> Result<Vec<f64>> {
    let keys: Vec<Vec<u32>> = crate::poly::multi_indices_up_to(n + 1, 2);
    let pos: Vec<usize> = (0..nb)
        .map(|p| {
            let mut e = vec![0u32; n + 1];
            if n == 2 {
                e[0] = p as u32;
            }
            keys.iter().position(|k| *k == e).expect("basis key")
        })
        .collect();
    if nodes.len() < 2 * keys.len() {
        return Err(Error::InsufficientResolution { found: nodes.len(), required: 2 * keys.len() });
    }
    let mut a = nalgebra::DMatrix::zeros(nodes.len(), keys.len());
    let mut b = nalgebra::DVector::zeros(nodes.len());
    for (row, &idx) in nodes.iter().enumerate() {
        let fr = frames[idx].as_ref().unwrap();
        let x = point(idx);
        let w = 1.0 / fr.u0;
        for (col, k) in keys.iter().enumerate() {
            let mut v = fr.u0;
            for i in 0..n {
                v *= x[i].powi(k[i] as i32);
            }
            v *= fr.r.powi(k[n] as i32);
            a[(row, col)] = v * w;
        }
        b[row] = field[idx] * w;
    }
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::SingularSystem(e.to_string()))?;
    Ok(pos.iter().map(|&p| sol[p]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Domain;

    fn sup_error(sol: &CartesianSolution, radius: f64, exact: &dyn Fn(&[f64]) -> f64) -> f64 {
        let mut e: f64 = 0.0;
        for idx in 0..sol.len() {
            let x = sol.point(idx);
            if x.iter().map(|v| v * v).sum::<f64>().sqrt() < radius {
                e = e.max((sol.values[idx] - exact(&x)).abs());
            }
        }
        e
    }

    #[test]
    fn u0_flat_2d_split_is_accurate() {
        let g = SlitGeometry::flat(1);
        let spec = GridSpec { h: 1.0 / 32.0, domain: Domain::unit_disc(1), split: true };
        let sol = solve_fd(&g, &BoundaryData::cos_half(), &Rhs::zero(1), &spec).unwrap();
        let e = sup_error(&sol, 0.5, &|x| crate::geometry::u0_of(x[0], x[1]));
        assert!(e < 2e-2, "split error {e}");
        assert!((sol.split_coeffs[0] - 1.0).abs() < 0.05);
        let spec = GridSpec { split: false, ..spec };
        let raw = solve_fd(&g, &BoundaryData::cos_half(), &Rhs::zero(1), &spec).unwrap();
        let e_raw = sup_error(&raw, 0.5, &|x| crate::geometry::u0_of(x[0], x[1]));
        assert!(e_raw > e);
    }

    #[test]
    fn maximum_principle_and_evenness() {
        let g = SlitGeometry::flat(1);
        let spec = GridSpec { h: 1.0 / 16.0, domain: Domain::unit_disc(1), split: false };
        let sol = solve_fd(&g, &BoundaryData::Tent, &Rhs::zero(1), &spec).unwrap();
        for idx in 0..sol.len() {
            if sol.is_free(idx) {
                assert!(sol.values[idx] >= -1e-12 && sol.values[idx] <= 1.0 + 1e-12);
            }
        }
        assert_eq!(sol.value_even(&[0.2, 0.25]), sol.value_even(&[0.2, -0.25]));
    }

    #[test]
    fn flat_3d_unsplit_runs() {
        let g = SlitGeometry::flat(2);
        let spec = GridSpec { h: 1.0 / 16.0, domain: Domain::Box { half_width: 1.0 }, split: false };
        let sol = solve_fd(&g, &BoundaryData::U0Flat, &Rhs::zero(2), &spec).unwrap();
        let e = sup_error(&sol, 0.5, &|x| crate::geometry::u0_of(x[1], x[2]));
        assert!(e < 0.25, "{e}");
    }

    #[test]
    fn singular_laplacian_matches_differences() {
        let g = SlitGeometry::parabola();
        let x = [0.1, 0.3, 0.2];
        let h = 1e-4;
        for p in 0..3 {
            let f = |y: &[f64]| singular_value(p, y, &closest_point_frame(&g, y).unwrap()).0;
            let mut lap = -6.0 * f(&x);
            for a in 0..3 {
                let mut yp = x;
                yp[a] += h;
                let mut ym = x;
                ym[a] -= h;
                lap += f(&yp) + f(&ym);
            }
            lap /= h * h;
            let exact = singular_value(p, &x, &closest_point_frame(&g, &x).unwrap()).1;
            assert!((lap - exact).abs() < 1e-4 * (1.0 + exact.abs()), "p={p} {lap} {exact}");
        }
    }
}
