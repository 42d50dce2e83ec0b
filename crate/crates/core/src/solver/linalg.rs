//! Structured-grid symmetric operators and a multigrid-preconditioned CG solver.

use crate::{Error, Result};

const CHUNK: usize = 4096;

/// Dot product with a fixed summation order (chunked pairwise), independent of threading.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .chunks(CHUNK)
        .zip(b.chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
        .collect();
    partial.iter().sum()
}

/// Weighted graph Laplacian on a 2D or 3D tensor grid.
///
/// `weights[a][i]` couples node `i` with `i + e_a`; entries on the last layer of axis `a` are unused.
/// Fixed nodes carry Dirichlet values and are eliminated from the system.
#[derive(Clone, Debug)]
pub struct GridOperator {
    pub dims: Vec<usize>,
    pub strides: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub fixed: Vec<bool>,
    diag: Vec<f64>,
}

impl GridOperator {
    pub fn new(dims: Vec<usize>, weights: Vec<Vec<f64>>, fixed: Vec<bool>) -> Self {
        let strides = strides_of(&dims);
        let len: usize = dims.iter().product();
        assert_eq!(fixed.len(), len);
        assert_eq!(weights.len(), dims.len());
        let mut op = GridOperator { dims, strides, weights, fixed, diag: vec![] };
        op.diag = op.compute_diag();
        op
    }

    pub fn len(&self) -> usize {
        self.fixed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty()
    }

    pub fn coords(&self, idx: usize) -> Vec<usize> {
        let mut rest = idx;
        let mut c = vec![0; self.dims.len()];
        for a in (0..self.dims.len()).rev() {
            c[a] = rest / self.strides[a];
            rest %= self.strides[a];
        }
        c
    }

    fn compute_diag(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.len()];
        self.for_each_edge(|i, j, w| {
            diag[i] += w;
            diag[j] += w;
        });
        diag
    }

    /// Visits every edge `(i, i + e_a)` with its weight.
    pub fn for_each_edge(&self, mut f: impl FnMut(usize, usize, f64)) {
        let len = self.len();
        for (a, w) in self.weights.iter().enumerate() {
            let st = self.strides[a];
            let da = self.dims[a];
            for i in 0..len {
                if (i / st) % da + 1 < da {
                    f(i, i + st, w[i]);
                }
            }
        }
    }

    /// `y = A x` restricted to free nodes (fixed entries of `x` are treated as zero).
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let len = self.len();
        for i in 0..len {
            y[i] = if self.fixed[i] { 0.0 } else { self.diag[i] * x[i] };
        }
        for (a, w) in self.weights.iter().enumerate() {
            let st = self.strides[a];
            let da = self.dims[a];
            for i in 0..len {
                if (i / st) % da + 1 == da {
                    continue;
                }
                let j = i + st;
                let wij = w[i];
                if wij == 0.0 {
                    continue;
                }
                let (fi, fj) = (self.fixed[i], self.fixed[j]);
                if !fi && !fj {
                    y[i] -= wij * x[j];
                    y[j] -= wij * x[i];
                }
            }
        }
    }

    /// Right-hand side contribution `Σ_{j fixed} w_ij u_j` at free nodes.
    pub fn dirichlet_lift(&self, values: &[f64], b: &mut [f64]) {
        let (fixed, weights, strides, dims) = (&self.fixed, &self.weights, &self.strides, &self.dims);
        for (a, w) in weights.iter().enumerate() {
            let st = strides[a];
            let da = dims[a];
            for i in 0..fixed.len() {
                if (i / st) % da + 1 == da {
                    continue;
                }
                let j = i + st;
                if !fixed[i] && fixed[j] {
                    b[i] += w[i] * values[j];
                } else if fixed[i] && !fixed[j] {
                    b[j] += w[i] * values[i];
                }
            }
        }
    }

    /// One Gauss-Seidel sweep, forward or backward.
    fn gauss_seidel(&self, x: &mut [f64], b: &[f64], forward: bool) {
        let len = self.len();
        let nd = self.dims.len();
        let mut step = |i: usize| {
            if self.fixed[i] || self.diag[i] == 0.0 {
                return;
            }
            let mut s = b[i];
            let mut rest = i;
            for a in (0..nd).rev() {
                let st = self.strides[a];
                let c = rest / st;
                rest %= st;
                let w = &self.weights[a];
                if c > 0 && !self.fixed[i - st] {
                    s += w[i - st] * x[i - st];
                }
                if c + 1 < self.dims[a] && !self.fixed[i + st] {
                    s += w[i] * x[i + st];
                }
            }
            x[i] = s / self.diag[i];
        };
        if forward {
            (0..len).for_each(&mut step);
        } else {
            (0..len).rev().for_each(&mut step);
        }
    }

    /// Coarse operator by sampling weights at even nodes; `None` if the grid cannot be halved.
    fn coarsen(&self) -> Option<GridOperator> {
        if self.dims.iter().any(|&d| d < 5 || d % 2 == 0) {
            return None;
        }
        let cdims: Vec<usize> = self.dims.iter().map(|d| (d - 1) / 2 + 1).collect();
        let cst = strides_of(&cdims);
        let clen: usize = cdims.iter().product();
        let nd = self.dims.len();
        let scale = 2f64.powi(nd as i32 - 2);
        let mut fixed = vec![false; clen];
        let mut weights = vec![vec![0.0; clen]; nd];
        for ci in 0..clen {
            let mut rest = ci;
            let mut fi = 0;
            for a in (0..nd).rev() {
                let c = rest / cst[a];
                rest %= cst[a];
                fi += 2 * c * self.strides[a];
            }
            fixed[ci] = self.fixed[fi];
            for a in 0..nd {
                let c = (ci / cst[a]) % cdims[a];
                if c + 1 < cdims[a] {
                    let st = self.strides[a];
                    weights[a][ci] = scale * 0.5 * (self.weights[a][fi] + self.weights[a][fi + st]);
                }
            }
        }
        Some(GridOperator::new(cdims, weights, fixed))
    }
}

pub fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for a in 1..dims.len() {
        s[a] = s[a - 1] * dims[a - 1];
    }
    s
}

/// Multilinear prolongation from a coarse grid onto the fine grid (added to `fine`).
fn prolong_add(cdims: &[usize], fdims: &[usize], coarse: &[f64], fine: &mut [f64]) {
    let nd = fdims.len();
    let fst = strides_of(fdims);
    let cst = strides_of(cdims);
    for (fi, out) in fine.iter_mut().enumerate() {
        let mut lo = [0usize; 3];
        let mut odd = [false; 3];
        for a in 0..nd {
            let c = (fi / fst[a]) % fdims[a];
            lo[a] = c / 2;
            odd[a] = c % 2 == 1;
        }
        let mut acc = 0.0;
        let corners = 1 << nd;
        for mask in 0..corners {
            let mut w = 1.0;
            let mut ci = 0;
            let mut skip = false;
            for a in 0..nd {
                let hi = mask >> a & 1 == 1;
                if !odd[a] {
                    if hi {
                        skip = true;
                        break;
                    }
                    ci += lo[a] * cst[a];
                } else {
                    w *= 0.5;
                    ci += (lo[a] + hi as usize) * cst[a];
                }
            }
            if !skip {
                acc += w * coarse[ci];
            }
        }
        *out += acc;
    }
}

/// Transpose of [`prolong_add`].
fn restrict(cdims: &[usize], fdims: &[usize], fine: &[f64], coarse: &mut [f64]) {
    let nd = fdims.len();
    let fst = strides_of(fdims);
    let cst = strides_of(cdims);
    coarse.iter_mut().for_each(|v| *v = 0.0);
    for (fi, &val) in fine.iter().enumerate() {
        if val == 0.0 {
            continue;
        }
        let mut lo = [0usize; 3];
        let mut odd = [false; 3];
        for a in 0..nd {
            let c = (fi / fst[a]) % fdims[a];
            lo[a] = c / 2;
            odd[a] = c % 2 == 1;
        }
        for mask in 0..(1 << nd) {
            let mut w = 1.0;
            let mut ci = 0;
            let mut skip = false;
            for a in 0..nd {
                let hi = mask >> a & 1 == 1;
                if !odd[a] {
                    if hi {
                        skip = true;
                        break;
                    }
                    ci += lo[a] * cst[a];
                } else {
                    w *= 0.5;
                    ci += (lo[a] + hi as usize) * cst[a];
                }
            }
            if !skip {
                coarse[ci] += w * val;
            }
        }
    }
}

/// Geometric multigrid hierarchy used as a symmetric preconditioner.
pub struct Multigrid {
    levels: Vec<GridOperator>,
    sweeps: usize,
    coarse_sweeps: usize,
}

impl Multigrid {
    pub fn new(op: GridOperator) -> Self {
        let mut levels = vec![op];
        while levels.last().unwrap().len() > 300 {
            match levels.last().unwrap().coarsen() {
                Some(c) => levels.push(c),
                None => break,
            }
        }
        Multigrid { levels, sweeps: 2, coarse_sweeps: 40 }
    }

    pub fn op(&self) -> &GridOperator {
        &self.levels[0]
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// `z ≈ A⁻¹ r` by one V-cycle from a zero guess.
    pub fn precondition(&self, r: &[f64], z: &mut [f64]) {
        self.vcycle(0, r, z);
    }

    fn vcycle(&self, lvl: usize, b: &[f64], x: &mut [f64]) {
        let op = &self.levels[lvl];
        x.iter_mut().for_each(|v| *v = 0.0);
        if lvl + 1 == self.levels.len() {
            for _ in 0..self.coarse_sweeps {
                op.gauss_seidel(x, b, true);
                op.gauss_seidel(x, b, false);
            }
            return;
        }
        for _ in 0..self.sweeps {
            op.gauss_seidel(x, b, true);
        }
        let mut ax = vec![0.0; op.len()];
        op.apply(x, &mut ax);
        let res: Vec<f64> = (0..op.len())
            .map(|i| if op.fixed[i] { 0.0 } else { b[i] - ax[i] })
            .collect();
        let cop = &self.levels[lvl + 1];
        let mut cb = vec![0.0; cop.len()];
        restrict(&cop.dims, &op.dims, &res, &mut cb);
        for (v, &f) in cb.iter_mut().zip(&cop.fixed) {
            if f {
                *v = 0.0;
            }
        }
        let mut cx = vec![0.0; cop.len()];
        self.vcycle(lvl + 1, &cb, &mut cx);
        let mut corr = vec![0.0; op.len()];
        prolong_add(&cop.dims, &op.dims, &cx, &mut corr);
        for i in 0..op.len() {
            if !op.fixed[i] {
                x[i] += corr[i];
            }
        }
        for _ in 0..self.sweeps {
            op.gauss_seidel(x, b, false);
        }
    }
}

/// Outcome of a linear solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` on free nodes by preconditioned CG. `x` holds the initial guess on free
/// nodes; fixed entries of `x` are left untouched.
pub fn pcg(mg: &Multigrid, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats> {
    let op = mg.op();
    let n = op.len();
    let mask = |v: &mut [f64]| {
        for (vi, &f) in v.iter_mut().zip(&op.fixed) {
            if f {
                *vi = 0.0;
            }
        }
    };
    let mut xf: Vec<f64> = x.to_vec();
    mask(&mut xf);
    let mut r = vec![0.0; n];
    op.apply(&xf, &mut r);
    for i in 0..n {
        r[i] = if op.fixed[i] { 0.0 } else { b[i] - r[i] };
    }
    let mut bm = b.to_vec();
    mask(&mut bm);
    let bnorm = dot(&bm, &bm).sqrt().max(f64::MIN_POSITIVE);
    let mut z = vec![0.0; n];
    mg.precondition(&r, &mut z);
    mask(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    let mut it = 0;
    while rel > tol && it < max_iter {
        op.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            xf[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        it += 1;
        if rel <= tol {
            break;
        }
        mg.precondition(&r, &mut z);
        mask(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    for i in 0..n {
        if !op.fixed[i] {
            x[i] = xf[i];
        }
    }
    if rel > tol {
        return Err(Error::SolverStalled { iterations: it, residual: rel });
    }
    Ok(SolveStats { iterations: it, relative_residual: rel })
}

/// Solves the Dirichlet problem: `values` holds Dirichlet data at fixed nodes and the initial
/// guess elsewhere; `rhs` is the (already volume-scaled) source. On return `values` is the solution.
pub fn solve_dirichlet(mg: &Multigrid, rhs: &[f64], values: &mut [f64], tol: f64) -> Result<SolveStats> {
    let op = mg.op();
    let mut b = rhs.to_vec();
    op.dirichlet_lift(values, &mut b);
    for (bi, &f) in b.iter_mut().zip(&op.fixed) {
        if f {
            *bi = 0.0;
        }
    }
    pcg(mg, &b, values, tol, 500)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_2d(n: usize) -> GridOperator {
        let dims = vec![n, n];
        let len = n * n;
        let fixed: Vec<bool> = (0..len)
            .map(|i| {
                let (a, b) = (i % n, i / n);
                a == 0 || b == 0 || a + 1 == n || b + 1 == n
            })
            .collect();
        GridOperator::new(dims, vec![vec![1.0; len], vec![1.0; len]], fixed)
    }

    #[test]
    fn solves_linear_function_exactly() {
        let n = 65;
        let op = laplace_2d(n);
        let mg = Multigrid::new(op);
        assert!(mg.depth() >= 2);
        let mut vals: Vec<f64> = (0..n * n)
            .map(|i| {
                let (a, b) = ((i % n) as f64, (i / n) as f64);
                if mg.op().fixed[i] {
                    2.0 * a - b
                } else {
                    0.0
                }
            })
            .collect();
        let rhs = vec![0.0; n * n];
        let st = solve_dirichlet(&mg, &rhs, &mut vals, 1e-12).unwrap();
        assert!(st.iterations < 30, "{st:?}");
        for i in 0..n * n {
            let (a, b) = ((i % n) as f64, (i / n) as f64);
            assert!((vals[i] - (2.0 * a - b)).abs() < 1e-8);
        }
    }

    #[test]
    fn restriction_is_prolongation_transpose() {
        let (cd, fd) = (vec![3, 5], vec![5, 9]);
        let clen = 15;
        let flen = 45;
        for ci in 0..clen {
            let mut e = vec![0.0; clen];
            e[ci] = 1.0;
            let mut pe = vec![0.0; flen];
            prolong_add(&cd, &fd, &e, &mut pe);
            for fi in 0..flen {
                let mut f = vec![0.0; flen];
                f[fi] = 1.0;
                let mut rf = vec![0.0; clen];
                restrict(&cd, &fd, &f, &mut rf);
                assert_eq!(pe[fi], rf[ci]);
            }
        }
    }

    #[test]
    fn deterministic_dot() {
        let a: Vec<f64> = (0..10_000).map(|i| (i as f64).sin()).collect();
        assert_eq!(dot(&a, &a), dot(&a, &a));
    }
}
