//! Slit geometry and the singular coordinate system around its edge.

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::poly::Poly;
use crate::scalar::{binom_rat, format_rat, parse_rat, Rat, Scalar};
use crate::{Error, Result};

/// Largest jet order supported by [`gamma_jet`].
pub const MAX_JET_ORDER: u32 = 8;

const NEWTON_MAX_ITERS: usize = 50;
const NEWTON_TOL: f64 = 1e-12;

/// The edge `Γ = graph(g)` in `ℝⁿ` and the slit `{x_{n+1} = 0, x_n ≤ g(x')}`.
///
/// For `n = 1` the graph function is the constant zero and `Γ` is the tip at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct SlitGeometry {
    n: usize,
    g: Poly<Rat>,
    g_dense: Vec<f64>,
    domain_radius: f64,
    norm_bound: f64,
}

/// Serializable description of a geometry, as found in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub n: usize,
    /// Coefficients of `g` indexed by power of `x₁` (only used when `n = 2`).
    #[serde(default)]
    pub g_coeffs: Vec<String>,
    #[serde(default = "default_domain_radius")]
    pub domain_radius: f64,
    #[serde(default = "default_norm_bound")]
    pub norm_bound: f64,
    /// Applied as `g(x) ↦ g(λx)/λ` before use.
    #[serde(default = "default_dilation")]
    pub dilation: String,
}

fn default_domain_radius() -> f64 {
    2.0
}
fn default_norm_bound() -> f64 {
    1.0
}
fn default_dilation() -> String {
    "1".into()
}

impl GeometrySpec {
    pub fn flat(n: usize) -> Self {
        GeometrySpec {
            n,
            g_coeffs: vec![],
            domain_radius: default_domain_radius(),
            norm_bound: default_norm_bound(),
            dilation: default_dilation(),
        }
    }

    /// `g(x₁) = x₁²/4` in `n = 2`.
    pub fn parabola() -> Self {
        GeometrySpec {
            n: 2,
            g_coeffs: vec!["0".into(), "0".into(), "1/4".into()],
            ..Self::flat(2)
        }
    }

    pub fn build(&self) -> Result<SlitGeometry> {
        let coeffs = self
            .g_coeffs
            .iter()
            .map(|s| parse_rat(s))
            .collect::<Result<Vec<_>>>()?;
        let geom = match self.n {
            1 => {
                if coeffs.iter().any(|c| !c.is_zero()) {
                    return Err(Error::ConfigInvalid {
                        field: "geometry.g_coeffs".into(),
                        message: "must be empty or zero when n = 1".into(),
                    });
                }
                SlitGeometry::flat(1)
            }
            2 => SlitGeometry::from_coeffs(&coeffs)?,
            n => {
                return Err(Error::ConfigInvalid {
                    field: "geometry.n".into(),
                    message: format!("unsupported dimension {n}"),
                })
            }
        };
        let lambda = parse_rat(&self.dilation)?;
        geom.dilate(&lambda)?
            .with_domain_radius(self.domain_radius)?
            .with_norm_bound(self.norm_bound)
    }
}

impl SlitGeometry {
    pub fn flat(n: usize) -> Self {
        assert!(n == 1 || n == 2, "only n = 1, 2 are supported");
        SlitGeometry {
            n,
            g: Poly::zero(n - 1),
            g_dense: vec![],
            domain_radius: default_domain_radius(),
            norm_bound: default_norm_bound(),
        }
    }

    /// `n = 2` geometry with `g(x₁) = Σ cⱼ x₁ʲ`.
    pub fn from_coeffs(coeffs: &[Rat]) -> Result<Self> {
        let mut g = Poly::zero(1);
        for (j, c) in coeffs.iter().enumerate() {
            g.add_term(vec![j as u32], c.clone());
        }
        Self::from_poly(g)
    }

    pub fn from_poly(g: Poly<Rat>) -> Result<Self> {
        if g.nvars() != 1 {
            return Err(Error::InvalidInput("graph function must be univariate".into()));
        }
        if !g.coeff(&[0]).is_zero() || !g.coeff(&[1]).is_zero() {
            return Err(Error::InvalidInput("graph must satisfy g(0) = 0 and g'(0) = 0".into()));
        }
        let deg = g.degree().unwrap_or(0) as usize;
        let mut g_dense = vec![0.0; deg + 1];
        for (e, c) in g.terms() {
            g_dense[e[0] as usize] = c.to_f64();
        }
        Ok(SlitGeometry {
            n: 2,
            g,
            g_dense,
            domain_radius: default_domain_radius(),
            norm_bound: default_norm_bound(),
        })
    }

    /// `g(x₁) = x₁²/4`.
    pub fn parabola() -> Self {
        GeometrySpec::parabola().build().expect("valid parabola")
    }

    pub fn with_domain_radius(mut self, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::ConfigInvalid {
                field: "geometry.domain_radius".into(),
                message: "must be positive".into(),
            });
        }
        self.domain_radius = r;
        Ok(self)
    }

    pub fn with_norm_bound(mut self, b: f64) -> Result<Self> {
        if !(b.is_finite() && b <= 1.0) {
            return Err(Error::ConfigInvalid {
                field: "geometry.norm_bound".into(),
                message: format!("{b} exceeds 1; dilate the geometry first"),
            });
        }
        self.norm_bound = b;
        Ok(self)
    }

    /// Rescales `g(x) ↦ g(λx)/λ`.
    pub fn dilate(&self, lambda: &Rat) -> Result<Self> {
        if lambda <= &Rat::zero() {
            return Err(Error::InvalidInput("dilation factor must be positive".into()));
        }
        if self.n == 1 || lambda.is_one() {
            return Ok(self.clone());
        }
        let mut g = Poly::zero(1);
        for (e, c) in self.g.terms() {
            let mut f = c.clone();
            for _ in 1..e[0] {
                f *= lambda.clone();
            }
            if e[0] == 0 {
                f /= lambda.clone();
            }
            g.add_term(e.clone(), f);
        }
        let mut out = Self::from_poly(g)?;
        out.domain_radius = self.domain_radius;
        out.norm_bound = self.norm_bound;
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn g(&self) -> &Poly<Rat> {
        &self.g
    }
    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }
    pub fn is_flat(&self) -> bool {
        self.g.is_zero()
    }

    /// Returns `(g, g', g'')` at `s`.
    pub fn g_derivs(&self, s: f64) -> (f64, f64, f64) {
        let (mut g0, mut g1, mut g2) = (0.0, 0.0, 0.0);
        for &c in self.g_dense.iter().rev() {
            g2 = g2 * s + 2.0 * g1;
            g1 = g1 * s + g0;
            g0 = g0 * s + c;
        }
        (g0, g1, g2)
    }

    /// Signed curvature of `Γ` at parameter `s` (positive when `Γ` bends towards `e_n`).
    pub fn curvature_at(&self, s: f64) -> f64 {
        let (_, g1, g2) = self.g_derivs(s);
        g2 / (1.0 + g1 * g1).powf(1.5)
    }

    /// Unit normal `(−g', 1)/√(1+g'²)` at parameter `s`.
    pub fn normal_at(&self, s: f64) -> [f64; 2] {
        let (_, g1, _) = self.g_derivs(s);
        let w = (1.0 + g1 * g1).sqrt();
        [-g1 / w, 1.0 / w]
    }

    /// Point of `Γ` above parameter `s`.
    pub fn gamma_point(&self, s: f64) -> [f64; 2] {
        [s, self.g_derivs(s).0]
    }

    /// Frame at `X ∈ ℝⁿ⁺¹`.
    pub fn frame(&self, x: &[f64]) -> Result<Frame> {
        closest_point_frame(self, x)
    }

    pub fn to_spec(&self) -> GeometrySpec {
        let g_coeffs = if self.n == 1 {
            vec![]
        } else {
            let deg = self.g.degree().unwrap_or(0);
            (0..=deg).map(|j| format_rat(&self.g.coeff(&[j]))).collect()
        };
        GeometrySpec {
            n: self.n,
            g_coeffs,
            domain_radius: self.domain_radius,
            norm_bound: self.norm_bound,
            dilation: default_dilation(),
        }
    }
}

/// Geometric data of a point relative to `Γ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    /// Signed distance in `ℝⁿ` to `Γ`.
    pub d: f64,
    /// Distance in `ℝⁿ⁺¹` to `Γ`.
    pub r: f64,
    pub theta: f64,
    pub u0: f64,
    pub nu: Vec<f64>,
    /// `−Δd` at the point.
    pub kappa: f64,
    /// Closest point on `Γ` (in `ℝⁿ`).
    pub z: Vec<f64>,
    /// The last coordinate `x_{n+1}`.
    pub t: f64,
}

impl Frame {
    fn from_dt(d: f64, t: f64, nu: Vec<f64>, kappa: f64, z: Vec<f64>) -> Frame {
        let r = d.hypot(t);
        let mut theta = t.atan2(d);
        if theta <= -std::f64::consts::PI {
            theta = std::f64::consts::PI;
        }
        if t == 0.0 && d < 0.0 {
            theta = std::f64::consts::PI;
        }
        Frame { d, r, theta, u0: u0_of(d, t), nu, kappa, z, t }
    }

    /// Local coordinates of the point relative to the foot point, in `ℝⁿ`.
    pub fn x_minus_z(&self) -> Vec<f64> {
        self.nu.iter().map(|v| v * self.d).collect()
    }
}

/// `U₀ = √((d+r)/2)` evaluated without cancellation for `d < 0`.
pub fn u0_of(d: f64, t: f64) -> f64 {
    let r = d.hypot(t);
    if d >= 0.0 {
        ((d + r) / 2.0).sqrt()
    } else if r - d > 0.0 {
        t.abs() / (2.0 * (r - d)).sqrt()
    } else {
        0.0
    }
}

/// Foot parameter `s` of the closest point `(s, g(s))` to `(x₁, x₂)`.
pub fn closest_foot(geom: &SlitGeometry, x1: f64, x2: f64) -> Result<f64> {
    let f = |s: f64| {
        let (g0, g1, g2) = geom.g_derivs(s);
        ((s - x1) + (g0 - x2) * g1, 1.0 + g1 * g1 + (g0 - x2) * g2, (s - x1).powi(2) + (g0 - x2).powi(2))
    };
    let span = (x2 - geom.g_derivs(x1).0).abs() + 1e-12;
    let mut best = x1;
    let mut best_d = f64::INFINITY;
    const COARSE: usize = 64;
    for i in 0..=COARSE {
        let s = x1 - span + 2.0 * span * i as f64 / COARSE as f64;
        let d2 = f(s).2;
        if d2 < best_d {
            best_d = d2;
            best = s;
        }
    }
    let mut s = best;
    let (mut fv, mut fp, _) = f(s);
    for it in 0..NEWTON_MAX_ITERS {
        if fv.abs() < NEWTON_TOL {
            return Ok(s);
        }
        let step = if fp > 0.0 { -fv / fp } else { -fv };
        let mut lam = 1.0;
        loop {
            let cand = s + lam * step;
            let (cv, cp, _) = f(cand);
            if cv.abs() < fv.abs() || lam < 1e-6 {
                s = cand;
                fv = cv;
                fp = cp;
                break;
            }
            lam *= 0.5;
        }
        if it + 1 == NEWTON_MAX_ITERS {
            break;
        }
    }
    if fv.abs() < NEWTON_TOL {
        Ok(s)
    } else {
        Err(Error::NonConvergence { iterations: NEWTON_MAX_ITERS, residual: fv.abs() })
    }
}

/// Computes `(d, r, θ, U₀, ν, κ, z)` at `X = (x, x_{n+1})`.
pub fn closest_point_frame(geom: &SlitGeometry, x: &[f64]) -> Result<Frame> {
    let n = geom.n();
    if x.len() != n + 1 {
        return Err(Error::InvalidInput(format!("expected a point in R^{}", n + 1)));
    }
    let radius = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if radius >= geom.domain_radius() {
        return Err(Error::OutOfDomain { radius, domain_radius: geom.domain_radius() });
    }
    let t = x[n];
    if n == 1 {
        return Ok(Frame::from_dt(x[0], t, vec![1.0], 0.0, vec![0.0]));
    }
    if geom.is_flat() {
        return Ok(Frame::from_dt(x[1], t, vec![0.0, 1.0], 0.0, vec![x[0], 0.0]));
    }
    let s = closest_foot(geom, x[0], x[1])?;
    let zp = geom.gamma_point(s);
    let nu = geom.normal_at(s);
    let d = (x[0] - zp[0]) * nu[0] + (x[1] - zp[1]) * nu[1];
    let k = geom.curvature_at(s);
    let kappa = k / (1.0 - k * d);
    Ok(Frame::from_dt(d, t, nu.to_vec(), kappa, zp.to_vec()))
}

/// Exact Taylor jets of the closest-point data around a point of `Γ`.
///
/// All series are polynomials in the local variables `x − z` (n of them).
#[derive(Clone, Debug, PartialEq)]
pub struct GammaJet {
    pub n: usize,
    pub center: Vec<Rat>,
    pub order: u32,
    pub d: Poly<Rat>,
    pub nu: Vec<Poly<Rat>>,
    pub kappa: Poly<Rat>,
    /// Flattening coordinates `y − y(z)`: tangential foot parameters, then `d`.
    pub y: Vec<Poly<Rat>>,
}

impl GammaJet {
    /// Jet of the flat geometry, exact to every order.
    pub fn flat(n: usize, order: u32) -> GammaJet {
        let nu = (0..n)
            .map(|i| if i + 1 == n { Poly::one(n) } else { Poly::zero(n) })
            .collect();
        let y = (0..n).map(|i| Poly::var(n, i)).collect();
        GammaJet {
            n,
            center: vec![Rat::zero(); n],
            order,
            d: Poly::var(n, n - 1),
            nu,
            kappa: Poly::zero(n),
            y,
        }
    }

    pub fn is_flat(&self) -> bool {
        self.kappa.is_zero()
            && self.d == Poly::var(self.n, self.n - 1)
            && self.nu.iter().enumerate().all(|(i, p)| {
                if i + 1 == self.n {
                    *p == Poly::one(self.n)
                } else {
                    p.is_zero()
                }
            })
    }

    /// Jet values evaluated at a local displacement (used to compare against frames).
    pub fn eval_at(&self, dx: &[f64]) -> (f64, Vec<f64>, f64) {
        (
            self.d.eval_f64(dx),
            self.nu.iter().map(|p| p.eval_f64(dx)).collect(),
            self.kappa.eval_f64(dx),
        )
    }

    /// Size of the curved part of the jet (max coefficient of `d − x_n`, `ν − e_n`, `κ`).
    pub fn perturbation(&self) -> f64 {
        let flat = GammaJet::flat(self.n, self.order);
        let mut m = self.kappa.norm();
        m = m.max(self.d.sub(&flat.d).norm());
        for (a, b) in self.nu.iter().zip(&flat.nu) {
            m = m.max(a.sub(b).norm());
        }
        m
    }
}

/// Taylor jets of `d`, `ν`, `κ` at the point of `Γ` above `z'`.
///
/// `d` and `ν` are exact through total degree `order`, `κ` as well.
/// Requires a horizontal tangent at `z'`.
pub fn gamma_jet(geom: &SlitGeometry, z_prime: &[Rat], order: u32) -> Result<GammaJet> {
    if order > MAX_JET_ORDER {
        return Err(Error::OrderTooHigh { requested: order, supported: MAX_JET_ORDER });
    }
    let n = geom.n();
    if z_prime.len() != n - 1 {
        return Err(Error::InvalidInput(format!("expected z' with {} entries", n - 1)));
    }
    if geom.is_flat() {
        let mut jet = GammaJet::flat(n, order);
        jet.center = z_prime.iter().cloned().chain(std::iter::once(Rat::zero())).collect();
        return Ok(jet);
    }
    let c = z_prime[0].clone();
    let g = geom.g();
    let gc = g.eval(std::slice::from_ref(&c));
    let shift = Poly::var(1, 0).add(&Poly::constant(1, c.clone()));
    let ghat = g.compose_trunc(&[shift], u32::MAX).sub(&Poly::constant(1, gc.clone()));
    let gp = ghat.deriv(0);
    if !gp.coeff(&[0]).is_zero() {
        return Err(Error::InvalidInput(
            "jets are only available where the tangent of Γ is horizontal".into(),
        ));
    }
    let big_n = order + 2;
    let x1 = Poly::<Rat>::var(2, 0);
    let x2 = Poly::<Rat>::var(2, 1);
    let mut s = x1.clone();
    let mut d = x2.clone();
    let one = Poly::<Rat>::one(2);
    let sqrt_series = |u: &Poly<Rat>, expo: Rat| {
        let mut acc = Poly::zero(2);
        let mut pw = one.clone();
        let mut j = 0;
        while !pw.is_zero() {
            acc = acc.add(&pw.scale(&binom_rat(&expo, j)));
            pw = pw.mul_trunc(u, big_n);
            j += 1;
        }
        acc
    };
    let (mut w, mut winv, mut gps);
    for _ in 0..=big_n {
        gps = gp.compose_trunc(&[s.clone()], big_n);
        let gs = ghat.compose_trunc(&[s.clone()], big_n);
        let u = gps.mul_trunc(&gps, big_n);
        w = sqrt_series(&u, Rat::new(1.into(), 2.into()));
        winv = sqrt_series(&u, Rat::new((-1).into(), 2.into()));
        let s_new = x1.add(&d.mul_trunc(&gps, big_n).mul_trunc(&winv, big_n));
        let d_new = x2.sub(&gs).mul_trunc(&w, big_n);
        s = s_new;
        d = d_new;
    }
    gps = gp.compose_trunc(&[s.clone()], big_n);
    let u = gps.mul_trunc(&gps, big_n);
    winv = sqrt_series(&u, Rat::new((-1).into(), 2.into()));
    let nu1 = gps.mul_trunc(&winv, big_n).scale(&-Rat::one());
    let nu2 = winv.clone();
    let lap = d.deriv(0).deriv(0).add(&d.deriv(1).deriv(1));
    let kappa = lap.scale(&-Rat::one()).truncate(order);
    Ok(GammaJet {
        n,
        center: vec![c, gc],
        order,
        d: d.truncate(order),
        nu: vec![nu1.truncate(order), nu2.truncate(order)],
        kappa,
        y: vec![s.truncate(order), d.truncate(order)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    #[test]
    fn flat_frames() {
        let g = SlitGeometry::flat(2);
        let f = g.frame(&[0.0, 1.0, 0.0]).unwrap();
        assert_eq!((f.d, f.r, f.theta, f.u0), (1.0, 1.0, 0.0, 1.0));
        assert_eq!(f.nu, vec![0.0, 1.0]);
        let f = g.frame(&[0.0, -1.0, 0.0]).unwrap();
        assert_eq!((f.d, f.r, f.u0), (-1.0, 1.0, 0.0));
        assert_eq!(f.theta, std::f64::consts::PI);
        let f = g.frame(&[0.0, -1.0, -0.0]).unwrap();
        assert_eq!(f.theta, std::f64::consts::PI);
    }

    #[test]
    fn out_of_domain() {
        let g = SlitGeometry::flat(1).with_domain_radius(1.0).unwrap();
        assert!(matches!(g.frame(&[1.0, 0.0]), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn norm_bound_rejected() {
        let mut spec = GeometrySpec::parabola();
        spec.norm_bound = 1.5;
        assert!(matches!(spec.build(), Err(Error::ConfigInvalid { .. })));
    }

    #[test]
    fn parabola_frame_and_curvature() {
        let g = SlitGeometry::parabola();
        let f = g.frame(&[0.0, 0.1, 0.0]).unwrap();
        assert!(f.z[0].abs() < 1e-12 && f.z[1].abs() < 1e-12);
        assert!((f.d - 0.1).abs() < 1e-12);
        assert!((f.nu[1] - 1.0).abs() < 1e-12);
        assert!((g.curvature_at(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn parabola_closest_point_brute_force() {
        let g = SlitGeometry::parabola();
        for &(x1, x2) in &[(0.3, 0.2), (-0.2, -0.1), (0.1, 0.4), (0.35, -0.05)] {
            let f = g.frame(&[x1, x2, 0.0]).unwrap();
            let mut best = f64::INFINITY;
            for i in 0..=200_000 {
                let t = -1.0 + 2.0 * i as f64 / 200_000.0;
                let dd = (x1 - t).hypot(x2 - t * t / 4.0);
                best = best.min(dd);
            }
            assert!((f.d.abs() - best).abs() < 1e-8, "{x1} {x2}");
        }
    }

    #[test]
    fn dilation_rescales() {
        let g = SlitGeometry::parabola().dilate(&rat(1, 2)).unwrap();
        assert_eq!(g.g().coeff(&[2]), rat(1, 8));
    }

    #[test]
    fn flat_jet() {
        let j = gamma_jet(&SlitGeometry::flat(2), &[rat(0, 1)], 3).unwrap();
        assert!(j.is_flat());
        assert_eq!(j.d, Poly::var(2, 1));
    }

    #[test]
    fn parabola_jet() {
        let g = SlitGeometry::parabola();
        let j = gamma_jet(&g, &[rat(0, 1)], 3).unwrap();
        assert_eq!(j.kappa.coeff(&[0, 0]), rat(1, 2));
        assert_eq!(j.nu[0].coeff(&[1, 0]), rat(-1, 2));
        assert_eq!(j.d.coeff(&[0, 1]), rat(1, 1));
        assert_eq!(j.d.coeff(&[2, 0]), rat(-1, 4));
        assert!(gamma_jet(&g, &[rat(0, 1)], MAX_JET_ORDER + 1).is_err());
        assert!(gamma_jet(&g, &[rat(1, 2)], 2).is_err());
    }

    #[test]
    fn jet_matches_frame() {
        let g = SlitGeometry::parabola();
        let j = gamma_jet(&g, &[rat(0, 1)], 8).unwrap();
        for &dx in &[[0.01, 0.02], [-0.015, 0.01], [0.02, -0.01]] {
            let f = g.frame(&[dx[0], dx[1], 0.0]).unwrap();
            let (d, nu, kappa) = j.eval_at(&dx);
            assert!((d - f.d).abs() < 1e-12);
            assert!((nu[0] - f.nu[0]).abs() < 1e-12);
            assert!((nu[1] - f.nu[1]).abs() < 1e-12);
            assert!((kappa - f.kappa).abs() < 1e-10);
            assert!((j.y[0].eval_f64(&dx) - f.z[0]).abs() < 1e-12);
        }
        let (d, nu, kappa) = j.eval_at(&[0.0, 0.0]);
        let f = g.frame(&[0.0, 0.0, 0.0]).unwrap();
        assert!((d - f.d).abs() < 1e-12 && (nu[1] - f.nu[1]).abs() < 1e-12);
        assert!((kappa - f.kappa).abs() < 1e-12);
    }
}
