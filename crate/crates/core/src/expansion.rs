//! Tangent polynomials `P₀(x, r)` of `u/U₀` at points of `Γ`, dyadic decay rates and the
//! formal derivative expansions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geometry::{closest_foot, closest_point_frame, u0_of, Frame, GammaJet, SlitGeometry};
use crate::poly::multi_indices_up_to;
use crate::scalar::Scalar;
use crate::solver::adapted::{axis_derivative, tube_point, AdaptedSolution};
use crate::solver::{CartesianSolution, HalfAngleSeries};
use crate::xrpoly::XrPoly;
use crate::{Error, Result};

/// Condition limit for the (column-equilibrated) normal matrix of a fit.
pub const CONDITION_LIMIT: f64 = 1e10;

/// A solution sample off the slit.
#[derive(Clone, Debug)]
pub struct Sample {
    pub x: Vec<f64>,
    pub frame: Frame,
    /// `u/U₀`.
    pub ratio: f64,
    /// Backing node, when the sample is a grid node.
    pub node: Option<usize>,
}

/// Anything that can be sampled as a solution of the slit problem.
pub trait SlitField: Sync {
    fn geometry(&self) -> &SlitGeometry;

    /// Samples with `|X − center| ≤ radius`, off the slit and outside the excluded core.
    fn samples(&self, center: &[f64], radius: f64) -> Vec<Sample>;

    /// Value of `u` at an arbitrary point, when representable.
    fn value(&self, x: &[f64]) -> Option<f64>;

    /// Step used by finite-difference fallbacks.
    fn fd_step(&self) -> f64;

    /// True when `Δu = 0` off the slit.
    fn is_harmonic(&self) -> bool;

    /// `(r/U₀) ∇_x u` at a sample.
    fn scaled_gradient(&self, s: &Sample) -> Option<Vec<f64>> {
        let n = self.geometry().n();
        let h = self.fd_step().min(0.1 * s.frame.r);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut p = s.x.clone();
            p[i] += h;
            let up = self.value(&p)?;
            p[i] -= 2.0 * h;
            let um = self.value(&p)?;
            out.push((up - um) / (2.0 * h) * s.frame.r / s.frame.u0);
        }
        Some(out)
    }

    /// `(r/U₀) ∇_x u` at an arbitrary point off the slit.
    fn scaled_gradient_at(&self, x: &[f64]) -> Option<Vec<f64>> {
        let frame = closest_point_frame(self.geometry(), x).ok()?;
        if frame.u0 <= 0.0 {
            return None;
        }
        self.scaled_gradient(&Sample { x: x.to_vec(), frame, ratio: f64::NAN, node: None })
    }

    /// `(r³/U₀) D²_x u` at a sample, row-major `n × n`.
    fn scaled_hessian(&self, s: &Sample) -> Option<Vec<f64>> {
        let n = self.geometry().n();
        let h = self.fd_step().min(0.1 * s.frame.r);
        let at = |di: usize, si: f64, dj: usize, sj: f64| -> Option<f64> {
            let mut p = s.x.clone();
            p[di] += si * h;
            p[dj] += sj * h;
            self.value(&p)
        };
        let u = self.value(&s.x)?;
        let scale = s.frame.r.powi(3) / s.frame.u0;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = if i == j {
                    let mut p = s.x.clone();
                    p[i] += h;
                    let up = self.value(&p)?;
                    p[i] -= 2.0 * h;
                    let um = self.value(&p)?;
                    (up - 2.0 * u + um) / (h * h)
                } else {
                    (at(i, 1.0, j, 1.0)? - at(i, 1.0, j, -1.0)? - at(i, -1.0, j, 1.0)? + at(i, -1.0, j, -1.0)?)
                        / (4.0 * h * h)
                };
                out[i * n + j] = v * scale;
                out[j * n + i] = v * scale;
            }
        }
        Some(out)
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// `Z ∈ Γ` as a point of `ℝⁿ⁺¹`.
fn lift(z: &[f64]) -> Vec<f64> {
    let mut v = z.to_vec();
    v.push(0.0);
    v
}

fn local_x(x: &[f64], z: &[f64]) -> Vec<f64> {
    z.iter().enumerate().map(|(i, zi)| x[i] - zi).collect()
}

// ---------------------------------------------------------------------------------------------
// Fields

type ValueFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradientFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Field given by closures, sampled on lattices refined per dyadic annulus.
pub struct AnalyticField {
    geometry: SlitGeometry,
    value: ValueFn,
    gradient: Option<GradientFn>,
    /// Lattice nodes per annulus radius along each axis.
    pub density: usize,
    /// Smallest annulus radius sampled.
    pub finest: f64,
    pub harmonic: bool,
}

impl AnalyticField {
    pub fn new(geometry: SlitGeometry, value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        AnalyticField { geometry, value: Box::new(value), gradient: None, density: 16, finest: 1.0 / 64.0, harmonic: true }
    }

    /// Supplies the exact `∇_x u` (n components).
    pub fn with_gradient(mut self, grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Box::new(grad));
        self
    }

    pub fn with_sampling(mut self, density: usize, finest: f64) -> Self {
        self.density = density;
        self.finest = finest;
        self
    }

    pub fn with_harmonic(mut self, harmonic: bool) -> Self {
        self.harmonic = harmonic;
        self
    }

    /// The series solution on the flat `n = 1` slit disc.
    pub fn from_series(series: HalfAngleSeries) -> Self {
        let s2 = series.clone();
        AnalyticField::new(SlitGeometry::flat(1), move |x| series.eval(x[0], x[1]))
            .with_gradient(move |x| vec![s2.eval_grad(x[0], x[1]).1])
    }
}

impl SlitField for AnalyticField {
    fn geometry(&self) -> &SlitGeometry {
        &self.geometry
    }

    fn samples(&self, center: &[f64], radius: f64) -> Vec<Sample> {
        let dim = center.len();
        let mut out = vec![];
        let mut lam = radius;
        while lam >= self.finest * (1.0 - 1e-12) {
            let h = lam / self.density as f64;
            let m = self.density as i64;
            let inner = if lam / 2.0 < self.finest * (1.0 - 1e-12) { 0.0 } else { lam / 2.0 };
            let total = (2 * m + 1).pow(dim as u32 - 1) * (m + 1);
            for flat in 0..total {
                let mut rem = flat;
                let mut x = center.to_vec();
                for (a, xa) in x.iter_mut().enumerate() {
                    let (i, span) = if a + 1 == dim { (rem % (m + 1), 0) } else { (rem % (2 * m + 1), m) };
                    rem /= if a + 1 == dim { m + 1 } else { 2 * m + 1 };
                    *xa += (i - span) as f64 * h;
                }
                let rho = distance(&x, center);
                if rho > lam || (rho <= inner && inner > 0.0) || rho == 0.0 {
                    continue;
                }
                let Ok(frame) = closest_point_frame(&self.geometry, &x) else { continue };
                if frame.u0 <= 1e-14 || frame.r <= 1e-14 {
                    continue;
                }
                let ratio = (self.value)(&x) / frame.u0;
                out.push(Sample { x, frame, ratio, node: None });
            }
            lam /= 2.0;
        }
        out
    }

    fn value(&self, x: &[f64]) -> Option<f64> {
        Some((self.value)(x))
    }

    fn fd_step(&self) -> f64 {
        1e-4
    }

    fn is_harmonic(&self) -> bool {
        self.harmonic
    }

    fn scaled_gradient(&self, s: &Sample) -> Option<Vec<f64>> {
        match &self.gradient {
            Some(g) => Some(g(&s.x).iter().map(|v| v * s.frame.r / s.frame.u0).collect()),
            None => {
                let n = self.geometry.n();
                let h = 1e-6 * s.frame.r.max(1e-3);
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    let mut p = s.x.clone();
                    p[i] += h;
                    let up = (self.value)(&p);
                    p[i] -= 2.0 * h;
                    let um = (self.value)(&p);
                    out.push((up - um) / (2.0 * h) * s.frame.r / s.frame.u0);
                }
                Some(out)
            }
        }
    }
}

/// An [`AdaptedSolution`] with the tube-coordinate derivatives of `G = u/U₀`.
pub struct AdaptedField<'a> {
    pub sol: &'a AdaptedSolution,
    pub g_s: Vec<f64>,
    pub g_xi: Vec<f64>,
    pub g_eta: Vec<f64>,
}

/// Four-point Lagrange weights at fractional offset `t ∈ [0, 1]` from node 0 of `(−1, 0, 1, 2)`.
fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

impl<'a> AdaptedField<'a> {
    pub fn new(sol: &'a AdaptedSolution) -> Self {
        let g = &sol.grid;
        AdaptedField {
            g_s: axis_derivative(g, &sol.ratio, 0),
            g_xi: axis_derivative(g, &sol.ratio, 1),
            g_eta: axis_derivative(g, &sol.ratio, 2),
            sol,
        }
    }

    /// Tensor cubic interpolation of a nodal field at `(s, ξ, η)`, even across `ξ = 0`, `η = 0`.
    pub fn interpolate(&self, field: &[f64], s: f64, xi: f64, eta: f64) -> Option<f64> {
        let g = &self.sol.grid;
        let pos = [(s + g.s_max) / g.h_s, xi.abs() / g.h_xi, eta.abs() / g.h_eta];
        let dims = g.dims();
        let mut base = [0i64; 3];
        let mut w = [[0.0; 4]; 3];
        for a in 0..3 {
            if pos[a] < -1e-9 || pos[a] > (dims[a] - 1) as f64 + 1e-9 {
                return None;
            }
            let mut b = pos[a].floor() as i64;
            if a == 0 {
                b = b.clamp(1, dims[0] as i64 - 3);
            } else {
                b = b.min(dims[a] as i64 - 3);
            }
            base[a] = b;
            w[a] = cubic_weights(pos[a] - b as f64);
        }
        let idx = |a: usize, m: i64| -> usize {
            let m = if a > 0 { m.abs() } else { m };
            m as usize
        };
        let mut acc = 0.0;
        for (c, wk) in w[2].iter().enumerate() {
            let k = idx(2, base[2] - 1 + c as i64);
            for (b, wj) in w[1].iter().enumerate() {
                let j = idx(1, base[1] - 1 + b as i64);
                for (a, wi) in w[0].iter().enumerate() {
                    let i = idx(0, base[0] - 1 + a as i64);
                    acc += wi * wj * wk * field[g.index(i, j, k)];
                }
            }
        }
        Some(acc)
    }

    /// Tube coordinates `(s, ξ, η ≥ 0)` of a point of `ℝ³`.
    pub fn tube_coords(&self, x: &[f64]) -> Option<(f64, f64, f64)> {
        let geom = &self.sol.geometry;
        let s = closest_foot(geom, x[0], x[1]).ok()?;
        let z = geom.gamma_point(s);
        let nu = geom.normal_at(s);
        let d = (x[0] - z[0]) * nu[0] + (x[1] - z[1]) * nu[1];
        let xi = u0_of(d, x[2]);
        let eta = if xi > 0.0 { x[2].abs() / (2.0 * xi) } else { (-d).max(0.0).sqrt() };
        Some((s, xi, eta))
    }

    /// `(r/U₀)∇_x u = q T G_s/(J h) + ν (G + ξ G_ξ − η G_η)/2` at tube coordinates.
    pub fn scaled_gradient_at_tube(&self, s: f64, xi: f64, eta: f64) -> Option<Vec<f64>> {
        let tp = tube_point(&self.sol.geometry, s, xi, eta);
        let gv = self.interpolate(&self.sol.ratio, s, xi, eta)?;
        let gs = self.interpolate(&self.g_s, s, xi, eta)?;
        let gx = self.interpolate(&self.g_xi, s, xi, eta)?;
        let ge = self.interpolate(&self.g_eta, s, xi, eta)?;
        Some(gradient_formula(&tp, xi, eta, gv, gs, gx, ge))
    }
}

fn gradient_formula(
    tp: &crate::solver::adapted::TubePoint,
    xi: f64,
    eta: f64,
    g: f64,
    gs: f64,
    gx: f64,
    ge: f64,
) -> Vec<f64> {
    let tang = tp.q * gs / (tp.jac * tp.stretch);
    let norm = 0.5 * (g + xi * gx - eta * ge);
    (0..2).map(|i| tp.tangent[i] * tang + tp.normal[i] * norm).collect()
}

impl SlitField for AdaptedField<'_> {
    fn geometry(&self) -> &SlitGeometry {
        &self.sol.geometry
    }

    /// Grid nodes with `ξ > 0` and `r ≥ 4h_ξ²` (the resolution of `r` at the edge).
    fn samples(&self, center: &[f64], radius: f64) -> Vec<Sample> {
        let g = &self.sol.grid;
        let excl = 4.0 * g.h_xi * g.h_xi;
        let mut out = vec![];
        for idx in 0..g.len() {
            let (i, j, k) = g.ijk(idx);
            if j == 0 {
                continue;
            }
            let (s, xi, eta) = g.coords(i, j, k);
            if (s - center[0]).abs() > radius {
                continue;
            }
            let tp = tube_point(&self.sol.geometry, s, xi, eta);
            if tp.q < excl || distance(&tp.x, center) > radius {
                continue;
            }
            out.push(Sample { x: tp.x.to_vec(), frame: tp.frame(xi), ratio: self.sol.ratio[idx], node: Some(idx) });
        }
        out
    }

    fn value(&self, x: &[f64]) -> Option<f64> {
        let (s, xi, eta) = self.tube_coords(x)?;
        Some(xi * self.interpolate(&self.sol.ratio, s, xi, eta)?)
    }

    fn fd_step(&self) -> f64 {
        self.sol.grid.h_s
    }

    fn is_harmonic(&self) -> bool {
        self.sol.rhs.is_zero()
    }

    fn scaled_gradient_at(&self, x: &[f64]) -> Option<Vec<f64>> {
        let (s, xi, eta) = self.tube_coords(x)?;
        self.scaled_gradient_at_tube(s, xi, eta)
    }

    fn scaled_gradient(&self, s: &Sample) -> Option<Vec<f64>> {
        let Some(idx) = s.node else { return self.scaled_gradient_at(&s.x) };
        let g = &self.sol.grid;
        let (i, j, k) = g.ijk(idx);
        let (sv, xi, eta) = g.coords(i, j, k);
        let tp = tube_point(&self.sol.geometry, sv, xi, eta);
        Some(gradient_formula(&tp, xi, eta, self.sol.ratio[idx], self.g_s[idx], self.g_xi[idx], self.g_eta[idx]))
    }
}

/// A [`CartesianSolution`] sampled at its free nodes with `r ≥ 4h`.
pub struct CartesianField<'a> {
    pub sol: &'a CartesianSolution,
}

impl<'a> CartesianField<'a> {
    pub fn new(sol: &'a CartesianSolution) -> Self {
        CartesianField { sol }
    }

    fn lattice(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.sol.origin).map(|(v, o)| (v - o) / self.sol.h).collect()
    }
}

impl SlitField for CartesianField<'_> {
    fn geometry(&self) -> &SlitGeometry {
        &self.sol.geometry
    }

    fn samples(&self, center: &[f64], radius: f64) -> Vec<Sample> {
        let sol = self.sol;
        let excl = 4.0 * sol.h;
        let mut out = vec![];
        for idx in 0..sol.len() {
            if !sol.is_free(idx) {
                continue;
            }
            let x = sol.point(idx);
            if distance(&x, center) > radius {
                continue;
            }
            let Ok(frame) = closest_point_frame(&sol.geometry, &x) else { continue };
            if frame.r < excl || frame.u0 <= 0.0 {
                continue;
            }
            out.push(Sample { ratio: sol.values[idx] / frame.u0, x, frame, node: Some(idx) });
        }
        out
    }

    /// Multilinear interpolation with reflection across the plane.
    fn value(&self, x: &[f64]) -> Option<f64> {
        let mut p = self.lattice(x);
        let n = self.sol.n;
        p[n] = p[n].abs();
        let dims = p.len();
        let base: Vec<i64> = p.iter().map(|v| (v + 1e-9).floor() as i64).collect();
        let frac: Vec<f64> = p.iter().zip(&base).map(|(v, b)| (v - *b as f64).max(0.0)).collect();
        let mut acc = 0.0;
        for corner in 0..(1usize << dims) {
            let mut c = base.clone();
            let mut w = 1.0;
            for a in 0..dims {
                if corner >> a & 1 == 1 {
                    c[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w == 0.0 {
                continue;
            }
            acc += w * self.sol.value_at(&c)?;
        }
        Some(acc)
    }

    fn fd_step(&self) -> f64 {
        self.sol.h
    }

    fn is_harmonic(&self) -> bool {
        self.sol.rhs.is_zero()
    }

    /// Centered differences, one-sided next to masked slit nodes.
    fn scaled_gradient(&self, s: &Sample) -> Option<Vec<f64>> {
        let sol = self.sol;
        let idx = s.node?;
        let c: Vec<i64> = sol.index_coords(idx).iter().map(|&v| v as i64).collect();
        let st = sol.strides();
        let masked = |cc: &[i64]| -> bool {
            let mut id = 0usize;
            for a in 0..cc.len() {
                let mut v = cc[a];
                if a == sol.n {
                    v = v.abs();
                }
                if v < 0 || v as usize >= sol.dims[a] {
                    return true;
                }
                id += v as usize * st[a];
            }
            sol.slit[id]
        };
        let mut out = vec![];
        for a in 0..sol.n {
            let mut p = c.clone();
            p[a] += 1;
            let mut m = c.clone();
            m[a] -= 1;
            let u = sol.values[idx];
            let g = match (masked(&p), masked(&m)) {
                (false, false) => (sol.value_at(&p)? - sol.value_at(&m)?) / (2.0 * sol.h),
                (true, false) => (u - sol.value_at(&m)?) / sol.h,
                (false, true) => (sol.value_at(&p)? - u) / sol.h,
                (true, true) => return None,
            };
            out.push(g * s.frame.r / s.frame.u0);
        }
        Some(out)
    }
}

// ---------------------------------------------------------------------------------------------
// Fitting

/// One data point for a weighted `(x, r)` polynomial fit about a point of `Γ`.
#[derive(Clone, Debug)]
pub struct FitPoint {
    /// `x − z'` (n entries).
    pub x: Vec<f64>,
    pub r: f64,
    /// `|X − Z|`.
    pub dist: f64,
    pub value: f64,
    /// Pointwise weight before the per-annulus normalisation.
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Radius of the fit ball.
    pub lambda0: f64,
    /// Hölder exponent used in the annulus weights.
    pub alpha: f64,
    /// Extra degrees fitted and then discarded.
    pub aux_degree: u32,
    /// Smallest annulus used.
    pub finest: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { lambda0: 0.25, alpha: 0.5, aux_degree: 1, finest: 0.0 }
    }
}

/// Weighted least-squares fit of degree `degree + aux_degree`, truncated to `degree`.
///
/// Each dyadic annulus `(λ/2, λ]` of the fit ball gets total weight `λ^{−2(degree+α)−1}`, so that
/// every scale counts in proportion to the expected size of the remainder there.
pub fn fit_points(n: usize, points: &[FitPoint], degree: u32, opts: &FitOptions) -> Result<(XrPoly<f64>, f64)> {
    let lam0 = opts.lambda0;
    let used: Vec<&FitPoint> =
        points.iter().filter(|p| p.dist <= lam0 && p.dist > opts.finest && p.dist > 0.0).collect();
    let full = degree + opts.aux_degree;
    let basis = multi_indices_up_to(n + 1, full);
    if used.len() < 2 * basis.len() {
        return Err(Error::InsufficientResolution { found: used.len(), required: 2 * basis.len() });
    }
    let level = |d: f64| (lam0 / d).log2().floor().max(0.0) as usize;
    let levels = used.iter().map(|p| level(p.dist)).max().unwrap_or(0) + 1;
    let mut counts = vec![0usize; levels];
    for p in &used {
        counts[level(p.dist)] += 1;
    }
    let expo = 2.0 * (degree as f64 + opts.alpha) + 1.0;
    let mut a = DMatrix::<f64>::zeros(used.len(), basis.len());
    let mut b = DVector::<f64>::zeros(used.len());
    for (row, p) in used.iter().enumerate() {
        let j = level(p.dist);
        let lam = lam0 / 2f64.powi(j as i32);
        let w = (p.weight / (counts[j] as f64 * lam.powf(expo))).sqrt();
        let vars: Vec<f64> = p.x.iter().chain(std::iter::once(&p.r)).map(|v| v / lam0).collect();
        for (col, e) in basis.iter().enumerate() {
            a[(row, col)] = w * e.iter().zip(&vars).map(|(&k, v)| v.powi(k as i32)).product::<f64>();
        }
        b[row] = w * p.value;
    }
    let scales: Vec<f64> = (0..basis.len()).map(|c| a.column(c).norm().max(1e-300)).collect();
    for (c, s) in scales.iter().enumerate() {
        a.column_mut(c).scale_mut(1.0 / s);
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::IllConditioned { condition, limit: CONDITION_LIMIT });
    }
    let sol = svd.solve(&b, 0.0).map_err(|e| Error::SingularSystem(e.to_string()))?;
    let mut poly = XrPoly::<f64>::zero(n);
    for (col, e) in basis.iter().enumerate() {
        let deg: u32 = e.iter().sum();
        if deg <= degree {
            let c = sol[col] / scales[col] / lam0.powi(deg as i32);
            poly.set_coeff(&e[..n], e[n], c);
        }
    }
    Ok((poly, condition))
}

/// Tangent polynomial of `u/U₀` at `Z = (z', g(z'))`, in the variables `(x − z, r)`.
pub fn fit_tangent(field: &dyn SlitField, z: &[f64], degree: u32, opts: &FitOptions) -> Result<XrPoly<f64>> {
    let n = field.geometry().n();
    let zc = lift(z);
    let points: Vec<FitPoint> = field
        .samples(&zc, opts.lambda0)
        .into_iter()
        .map(|s| FitPoint {
            x: local_x(&s.x, z),
            r: s.frame.r,
            dist: distance(&s.x, &zc),
            value: s.ratio,
            weight: s.frame.u0 * s.frame.u0,
        })
        .collect();
    Ok(fit_points(n, &points, degree, opts)?.0)
}

// ---------------------------------------------------------------------------------------------
// Rates

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateThresholds {
    /// Allowed shortfall of the fitted exponent below the target.
    pub margin: f64,
    /// Largest log-space residual that can pass.
    pub max_residual: f64,
    /// Residual above which the fit is unusable.
    pub unusable_residual: f64,
    /// Minimum number of samples in the smallest annulus.
    pub min_samples: usize,
}

impl Default for RateThresholds {
    fn default() -> Self {
        RateThresholds { margin: 0.2, max_residual: 0.3, unusable_residual: 0.5, min_samples: 100 }
    }
}

/// Sup errors on dyadic annuli and the fitted decay exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub scales: Vec<f64>,
    pub errors: Vec<f64>,
    pub counts: Vec<usize>,
    pub fitted_exponent: f64,
    pub target: f64,
    /// RMS of the log-log regression residuals.
    pub residual: f64,
    pub margin: f64,
    /// All errors at round-off level.
    pub exact: bool,
    pub usable: bool,
    pub pass: bool,
}

impl RateReport {
    /// Builds the report from errors already gathered per scale.
    pub fn from_errors(
        scales: Vec<f64>,
        errors: Vec<f64>,
        counts: Vec<usize>,
        target: f64,
        thr: &RateThresholds,
    ) -> Result<RateReport> {
        if scales.len() < 4 || scales.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput("need at least 4 strictly decreasing scales".into()));
        }
        let exact = errors.iter().all(|e| *e <= 1e-12);
        let (s, residual) = if exact { (f64::INFINITY, 0.0) } else { loglog_fit(&scales, &errors) };
        let usable = residual <= thr.unusable_residual;
        let pass = exact || (usable && residual <= thr.max_residual && s >= target - thr.margin);
        Ok(RateReport { scales, errors, counts, fitted_exponent: s, target, residual, margin: thr.margin, exact, usable, pass })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("scale,sup_error\n");
        for (l, e) in self.scales.iter().zip(&self.errors) {
            s.push_str(&format!("{l:e},{e:e}\n"));
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "fitted_exponent,target,residual,pass\n{},{},{},{}\n",
            self.fitted_exponent, self.target, self.residual, self.pass
        )
    }

    /// Minimal log-log plot of the errors against the target slope.
    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (400.0, 300.0, 40.0);
        let lx: Vec<f64> = self.scales.iter().map(|v| v.log10()).collect();
        let ly: Vec<f64> = self.errors.iter().map(|v| v.max(1e-300).log10()).collect();
        let (x0, x1) = (lx.iter().cloned().fold(f64::INFINITY, f64::min), lx.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let (y0, y1) = (ly.iter().cloned().fold(f64::INFINITY, f64::min), ly.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let sx = |v: f64| pad + (v - x0) / (x1 - x0).max(1e-12) * (w - 2.0 * pad);
        let sy = |v: f64| h - pad - (v - y0) / (y1 - y0).max(1e-12) * (h - 2.0 * pad);
        let pts: Vec<String> = lx.iter().zip(&ly).map(|(a, b)| format!("{:.1},{:.1}", sx(*a), sy(*b))).collect();
        let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n");
        s.push_str(&format!("<polyline fill=\"none\" stroke=\"black\" points=\"{}\"/>\n", pts.join(" ")));
        for p in &pts {
            let (a, b) = p.split_once(',').unwrap();
            s.push_str(&format!("<circle cx=\"{a}\" cy=\"{b}\" r=\"3\"/>\n"));
        }
        let yt = |v: f64| ly[0] + self.target * (v - lx[0]);
        s.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n",
            sx(x0),
            sy(yt(x0)),
            sx(x1),
            sy(yt(x1))
        ));
        s.push_str(&format!(
            "<text x=\"{pad}\" y=\"20\">slope {:.3} (target {:.2})</text>\n</svg>\n",
            self.fitted_exponent, self.target
        ));
        s
    }
}

/// Least-squares slope of `ln e` against `ln λ` and the RMS residual.
pub fn loglog_fit(scales: &[f64], errors: &[f64]) -> (f64, f64) {
    let xs: Vec<f64> = scales.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|v| v.max(1e-300).ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let s = sxy / sxx;
    let res = (xs.iter().zip(&ys).map(|(x, y)| (y - my - s * (x - mx)).powi(2)).sum::<f64>() / m).sqrt();
    (s, res)
}

/// Sup of `err` over each annulus `(λ_{j+1}, λ_j]` (the last one `(λ_J/2, λ_J]`).
pub fn annulus_sups(dists_errs: &[(f64, f64)], scales: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut errs = vec![0.0f64; scales.len()];
    let mut counts = vec![0usize; scales.len()];
    for &(d, e) in dists_errs {
        for (j, &lam) in scales.iter().enumerate() {
            let inner = scales.get(j + 1).copied().unwrap_or(lam / 2.0);
            if d <= lam && d > inner {
                errs[j] = errs[j].max(e);
                counts[j] += 1;
            }
        }
    }
    (errs, counts)
}

fn check_counts(counts: &[usize], thr: &RateThresholds) -> Result<()> {
    let last = *counts.last().unwrap_or(&0);
    if last < thr.min_samples {
        return Err(Error::InsufficientResolution { found: last, required: thr.min_samples });
    }
    Ok(())
}

/// Decay of `sup |u/U₀ − P₀|` on dyadic annuli about `Z`, with `P₀` frozen.
pub fn rate_report(
    field: &dyn SlitField,
    p0: &XrPoly<f64>,
    z: &[f64],
    scales: &[f64],
    target: f64,
    thr: &RateThresholds,
) -> Result<RateReport> {
    let zc = lift(z);
    let radius = scales.iter().cloned().fold(0.0, f64::max);
    let de: Vec<(f64, f64)> = field
        .samples(&zc, radius)
        .iter()
        .map(|s| (distance(&s.x, &zc), (s.ratio - p0.eval_xr(&local_x(&s.x, z), s.frame.r)).abs()))
        .collect();
    let (errors, counts) = annulus_sups(&de, scales);
    check_counts(&counts, thr)?;
    RateReport::from_errors(scales.to_vec(), errors, counts, target, thr)
}

// ---------------------------------------------------------------------------------------------
// Formal derivatives

fn jet_poly<T: Scalar>(p: &crate::poly::Poly<crate::scalar::Rat>) -> XrPoly<T> {
    XrPoly::from_x_poly(&p.map(|c| T::from_rat(c)))
}

/// `P₀^i` with `∇_x(U₀P₀) = (U₀/r)(P₀^i)`: the truncation to `degree` (the nominal degree
/// `k + 1` of `P₀`) of `½P₀ν^i + r∂ᵢP₀ + (∂_rP₀) d ν^i`.
pub fn formal_gradient<T: Scalar>(p0: &XrPoly<T>, jet: &GammaJet, degree: u32) -> Vec<XrPoly<T>> {
    let n = p0.n();
    let k = degree;
    let half = T::from_ratio(1, 2);
    let d: XrPoly<T> = jet_poly(&jet.d);
    let r = XrPoly::<T>::r(n);
    let pr = p0.dr();
    (0..n)
        .map(|i| {
            let nu: XrPoly<T> = jet_poly(&jet.nu[i]);
            let a = p0.mul_trunc(&nu, k).scale(&half);
            let b = r.mul_trunc(&p0.dx(i), k);
            let c = pr.mul_trunc(&d, k).mul_trunc(&nu, k);
            a.add(&b).add(&c).truncate(k)
        })
        .collect()
}

/// `P₀^{ij}` with `∂ᵢ∂ⱼ(U₀P₀) = (U₀/r³)(P₀^{ij})`, truncated at `degree + 1`:
/// `½rν^jP^i − dν^jP^i + r²∂ⱼP^i + r d ν^j ∂_rP^i` with `P^i` from [`formal_gradient`].
pub fn formal_hessian<T: Scalar>(p0: &XrPoly<T>, jet: &GammaJet, degree: u32) -> Vec<Vec<XrPoly<T>>> {
    let n = p0.n();
    let k = degree + 1;
    let half = T::from_ratio(1, 2);
    let d: XrPoly<T> = jet_poly(&jet.d);
    let r = XrPoly::<T>::r(n);
    let r2 = r.mul_trunc(&r, k);
    let grads = formal_gradient(p0, jet, degree);
    (0..n)
        .map(|i| {
            let pi = &grads[i];
            (0..n)
                .map(|j| {
                    let nu: XrPoly<T> = jet_poly(&jet.nu[j]);
                    let t1 = r.mul_trunc(&nu, k).mul_trunc(pi, k).scale(&half);
                    let t2 = d.mul_trunc(&nu, k).mul_trunc(pi, k);
                    let t3 = r2.mul_trunc(&pi.dx(j), k);
                    let t4 = r.mul_trunc(&d, k).mul_trunc(&nu, k).mul_trunc(&pi.dr(), k);
                    t1.sub(&t2).add(&t3).add(&t4).truncate(k)
                })
                .collect()
        })
        .collect()
}

/// Compares the numerical scaled derivatives with the formal expansions inside the cone
/// `r ≥ |x' − z'|`. `order` 1 uses `(r/U₀)∇u`, `order` 2 uses `(r³/U₀)D²u`; `degree` is the
/// nominal degree of `P₀`.
#[allow(clippy::too_many_arguments)]
pub fn derivative_rate_checks(
    field: &dyn SlitField,
    p0: &XrPoly<f64>,
    degree: u32,
    jet: &GammaJet,
    z: &[f64],
    scales: &[f64],
    order: u32,
    target: f64,
    thr: &RateThresholds,
) -> Result<RateReport> {
    let n = field.geometry().n();
    if order == 2 && !field.is_harmonic() {
        return Err(Error::InvalidInput("second-order checks need a harmonic solution".into()));
    }
    if order == 0 || order > 2 {
        return Err(Error::InvalidInput(format!("derivative order {order} not supported")));
    }
    let zc = lift(z);
    let radius = scales.iter().cloned().fold(0.0, f64::max);
    let grads = formal_gradient(p0, jet, degree);
    let hess = if order == 2 { formal_hessian(p0, jet, degree) } else { vec![] };
    let mut de = vec![];
    for s in field.samples(&zc, radius) {
        let xl = local_x(&s.x, z);
        let tangential = xl[..n - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
        if s.frame.r < tangential {
            continue;
        }
        let err = if order == 1 {
            let Some(g) = field.scaled_gradient(&s) else { continue };
            g.iter().zip(&grads).map(|(v, p)| (v - p.eval_xr(&xl, s.frame.r)).abs()).fold(0.0, f64::max)
        } else {
            let Some(hm) = field.scaled_hessian(&s) else { continue };
            let mut e: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    e = e.max((hm[i * n + j] - hess[i][j].eval_xr(&xl, s.frame.r)).abs());
                }
            }
            e
        };
        de.push((distance(&s.x, &zc), err));
    }
    let (errors, counts) = annulus_sups(&de, scales);
    check_counts(&counts, thr)?;
    RateReport::from_errors(scales.to_vec(), errors, counts, target, thr)
}

/// Dyadic scales `λ₀, λ₀/2, …` (`count` of them).
pub fn dyadic_scales(lambda0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|j| lambda0 / 2f64.powi(j as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;
    use crate::xrpoly::XRPolynomial;

    fn flat_field(n: usize, p: XrPoly<f64>) -> AnalyticField {
        let geom = SlitGeometry::flat(n);
        let g2 = geom.clone();
        AnalyticField::new(geom, move |x| {
            let fr = closest_point_frame(&g2, x).unwrap();
            fr.u0 * p.eval_xr(&x[..n], fr.r)
        })
        .with_sampling(12, 1.0 / 64.0)
    }

    #[test]
    fn fit_reproduces_u0() {
        let f = flat_field(1, XrPoly::one(1));
        let p = fit_tangent(&f, &[0.0], 1, &FitOptions::default()).unwrap();
        assert!((p.coeff(&[0], 0) - 1.0).abs() < 1e-10);
        assert!(p.coeff(&[1], 0).abs() < 1e-10 && p.coeff(&[0], 1).abs() < 1e-10);
    }

    #[test]
    fn fit_reproduces_kernel_cubic() {
        let p = XrPoly::x(2, 1).scale(&2.0).sub(&XrPoly::r(2));
        let f = flat_field(2, p).with_sampling(8, 1.0 / 16.0);
        let fit = fit_tangent(&f, &[0.0, 0.0], 1, &FitOptions::default()).unwrap();
        assert!((fit.coeff(&[0, 1], 0) - 2.0).abs() < 1e-8);
        assert!((fit.coeff(&[0, 0], 1) + 1.0).abs() < 1e-8);
        assert!(fit.coeff(&[0, 0], 0).abs() < 1e-8);
    }

    #[test]
    fn rate_of_quadratic_remainder() {
        // x₁² − 2x₂r + 3r²/4 is in the flat kernel up to degree 2: U₀ times it is harmonic.
        let jet = GammaJet::flat(2, 3);
        let mut free = std::collections::BTreeMap::new();
        free.insert(vec![2, 0], rat(1, 1));
        free.insert(vec![0, 1], rat(1, 1));
        let p = crate::xrpoly::solve_approximating(&jet, &XRPolynomial::zero(2), &free, 1).unwrap();
        let pf = p.to_f64();
        let f = flat_field(2, pf.clone()).with_sampling(8, 1.0 / 32.0);
        let p0 = pf.truncate(1);
        let rep = rate_report(&f, &p0, &[0.0, 0.0], &dyadic_scales(0.25, 4), 1.5, &RateThresholds::default()).unwrap();
        assert!((rep.fitted_exponent - 2.0).abs() < 0.05, "{rep:?}");
        assert!(rep.pass);
    }

    #[test]
    fn exact_report() {
        let f = flat_field(1, XrPoly::one(1));
        let rep =
            rate_report(&f, &XrPoly::one(1), &[0.0], &dyadic_scales(0.5, 5), 1.5, &RateThresholds::default()).unwrap();
        assert!(rep.exact && rep.pass);
        assert!(rep.to_csv().starts_with("scale,sup_error\n"));
    }

    #[test]
    fn formal_gradient_flat_one() {
        let jet = GammaJet::flat(2, 2);
        let g = formal_gradient(&XRPolynomial::one(2), &jet, 1);
        assert_eq!(g[1], XRPolynomial::constant(2, rat(1, 2)));
        assert!(g[0].is_zero());
    }

    #[test]
    fn formal_gradient_curved_one() {
        let geom = SlitGeometry::parabola();
        let jet = crate::geometry::gamma_jet(&geom, &[rat(0, 1)], 2).unwrap();
        let g = formal_gradient(&XRPolynomial::one(2), &jet, 1);
        assert_eq!(g[0].coeff(&[1, 0], 0), rat(-1, 4));
        assert_eq!(g[1].coeff(&[0, 0], 0), rat(1, 2));
    }

    #[test]
    fn formal_gradient_matches_fd() {
        let p = XrPoly::x(2, 1).sub(&XrPoly::r(2).scale(&0.5));
        let jet = GammaJet::flat(2, 2);
        let g = formal_gradient(&p, &jet, 1);
        let f = flat_field(2, p.clone());
        let x = [0.1, 0.05, 0.07];
        let fr = closest_point_frame(f.geometry(), &x).unwrap();
        let s = Sample { x: x.to_vec(), ratio: 0.0, frame: fr.clone(), node: None };
        let num = f.scaled_gradient(&s).unwrap();
        for i in 0..2 {
            assert!((num[i] - g[i].eval_xr(&x[..2], fr.r)).abs() < 1e-7, "{i}");
        }
        let h = formal_hessian(&p, &jet, 1);
        let hn = f.scaled_hessian(&s).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((hn[i * 2 + j] - h[i][j].eval_xr(&x[..2], fr.r)).abs() < 1e-5, "{i}{j}");
            }
        }
    }
}
