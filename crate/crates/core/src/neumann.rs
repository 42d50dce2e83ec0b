//! Quotients `u_i/u_n`, the weighted Neumann problem they solve, and its polynomial solutions.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::expansion::{annulus_sups, fit_points, loglog_fit, FitOptions, FitPoint, RateReport, RateThresholds, Sample, SlitField};
use crate::geometry::{closest_point_frame, GammaJet, SlitGeometry};
use crate::poly::{multi_indices_of_degree, multi_indices_up_to, MultiIndex, Poly};
use crate::scalar::{Rat, Scalar};
use crate::whitney::{q_of_x, whitney_extend, Mollifier, YPolynomial};
use crate::xrpoly::{solve_approximating, XRPolynomial, XrPoly};
use crate::{Error, Result};

/// Weights of the quadratic through `t = 2h, 4h, 8h`: value at 0, then `h ×` slope at 0.
const TRACE_WEIGHTS: [f64; 3] = [8.0 / 3.0, -2.0, 1.0 / 3.0];
const SLOPE_WEIGHTS: [f64; 3] = [-1.0, 1.25, -0.25];

/// Point of `Γ` above `z'` and the unit normal there, both in `ℝⁿ`.
pub fn foot(geom: &SlitGeometry, zp: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = geom.n();
    if zp.len() + 1 != n {
        return Err(Error::InvalidInput(format!("expected z' with {} entries", n - 1)));
    }
    if geom.is_flat() {
        let mut z = zp.to_vec();
        z.push(0.0);
        let mut nu = vec![0.0; n];
        nu[n - 1] = 1.0;
        return Ok((z, nu));
    }
    if n != 2 {
        return Err(Error::InvalidInput("curved feet are only available for n = 2".into()));
    }
    Ok((geom.gamma_point(zp[0]).to_vec(), geom.normal_at(zp[0]).to_vec()))
}

fn along_normal(z: &[f64], nu: &[f64], t: f64) -> Vec<f64> {
    let mut x: Vec<f64> = z.iter().zip(nu).map(|(a, b)| a + t * b).collect();
    x.push(0.0);
    x
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------------------------
// Quotient

/// `w = u_i/u_n` sampled off the slit, with pointwise access for traces.
pub struct QuotientField<'a> {
    field: &'a dyn SlitField,
    pub i: usize,
    pub samples: Vec<Sample>,
    /// `w` at each sample.
    pub values: Vec<f64>,
    /// Base step of the normal extrapolation.
    pub step: f64,
}

/// One trace sample of `w` on `Γ`.
#[derive(Clone, Debug, PartialEq)]
pub struct TracePoint {
    pub foot: Vec<f64>,
    pub w: f64,
    pub w_nu: f64,
}

/// Builds `w = u_i/u_n` on the samples of `field` in the ball of `radius` about `center`.
pub fn quotient<'a>(field: &'a dyn SlitField, i: usize, center: &[f64], radius: f64) -> Result<QuotientField<'a>> {
    let n = field.geometry().n();
    if i >= n {
        return Err(Error::InvalidInput(format!("direction {i} out of range for n = {n}")));
    }
    let all = field.samples(center, radius);
    let grads: Vec<Option<Vec<f64>>> = all.par_iter().map(|s| field.scaled_gradient(s)).collect();
    let mut samples = Vec::new();
    let mut values = Vec::new();
    for (s, g) in all.into_iter().zip(grads) {
        let Some(g) = g else { continue };
        if !(g[n - 1] > 0.0) {
            return Err(Error::DegenerateWeight);
        }
        values.push(g[i] / g[n - 1]);
        samples.push(s);
    }
    Ok(QuotientField { field, i, samples, values, step: field.fd_step() })
}

impl QuotientField<'_> {
    pub fn geometry(&self) -> &SlitGeometry {
        self.field.geometry()
    }

    /// `w` at an arbitrary point off the slit.
    pub fn at(&self, x: &[f64]) -> Result<f64> {
        let n = self.geometry().n();
        let g = self
            .field
            .scaled_gradient_at(x)
            .ok_or_else(|| Error::InvalidInput(format!("no gradient available at {x:?}")))?;
        if !(g[n - 1] > 0.0) {
            return Err(Error::DegenerateWeight);
        }
        Ok(g[self.i] / g[n - 1])
    }

    /// Trace and one-sided normal derivative at the foot above `z'`.
    pub fn trace(&self, zp: &[f64]) -> Result<TracePoint> {
        let (z, nu) = foot(self.geometry(), zp)?;
        let h = self.step;
        let mut vals = [0.0; 3];
        for (j, v) in vals.iter_mut().enumerate() {
            *v = self.at(&along_normal(&z, &nu, h * 2f64.powi(j as i32 + 1)))?;
        }
        let w = TRACE_WEIGHTS.iter().zip(&vals).map(|(a, b)| a * b).sum();
        let w_nu = SLOPE_WEIGHTS.iter().zip(&vals).map(|(a, b)| a * b).sum::<f64>() / h;
        Ok(TracePoint { foot: z, w, w_nu })
    }
}

/// Trace of `w` against `−∂ᵢg` at the given foot parameters (`n = 2`).
#[derive(Clone, Debug, PartialEq)]
pub struct TraceCheck {
    pub feet: Vec<f64>,
    pub traces: Vec<f64>,
    pub expected: Vec<f64>,
    /// `sup |w + g'| / sup |g'|`.
    pub relative_error: f64,
}

pub fn trace_check(w: &QuotientField, feet: &[f64]) -> Result<TraceCheck> {
    let geom = w.geometry();
    if geom.n() != 2 || w.i != 0 {
        return Err(Error::InvalidInput("trace check needs n = 2 and i = 0".into()));
    }
    let mut traces = Vec::new();
    let mut expected = Vec::new();
    for &s in feet {
        traces.push(w.trace(&[s])?.w);
        expected.push(-geom.g_derivs(s).1);
    }
    let dev = traces.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let size = expected.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let relative_error = if size > 0.0 { dev / size } else { dev };
    Ok(TraceCheck { feet: feet.to_vec(), traces, expected, relative_error })
}

/// Result of the quotient regularity study about one point of `Γ`.
#[derive(Clone, Debug)]
pub struct NeumannReport {
    /// Decay of `sup |w − T₀|` on dyadic annuli.
    pub rate: RateReport,
    pub t0: XrPoly<f64>,
    /// `(λ, sup |w_ν|)` over feet at distance about `λ` along `Γ`.
    pub normal: Vec<(f64, f64)>,
    /// Log-log slope of `osc w` over the balls `B_λ`; reported only.
    pub holder: f64,
}

/// Fits `T₀` of degree `degree` to `w` about the foot above `z'` and measures the remainder decay.
pub fn neumann_rate(
    w: &QuotientField,
    zp: &[f64],
    degree: u32,
    opts: &FitOptions,
    scales: &[f64],
    target: f64,
    thr: &RateThresholds,
) -> Result<NeumannReport> {
    let n = w.geometry().n();
    let (z, _) = foot(w.geometry(), zp)?;
    let mut zc = z.clone();
    zc.push(0.0);
    let points: Vec<FitPoint> = w
        .samples
        .iter()
        .zip(&w.values)
        .map(|(s, &v)| FitPoint {
            x: (0..n).map(|i| s.x[i] - z[i]).collect(),
            r: s.frame.r,
            dist: crate::expansion::distance(&s.x, &zc),
            value: v,
            weight: 1.0,
        })
        .collect();
    let (t0, _) = fit_points(n, &points, degree, opts)?;
    let de: Vec<(f64, f64)> = points.iter().map(|p| (p.dist, (p.value - t0.eval_xr(&p.x, p.r)).abs())).collect();
    let (errors, counts) = annulus_sups(&de, scales);
    let last = *counts.last().unwrap_or(&0);
    if last < thr.min_samples {
        return Err(Error::InsufficientResolution { found: last, required: thr.min_samples });
    }
    let rate = RateReport::from_errors(scales.to_vec(), errors, counts, target, thr)?;

    let mut osc = Vec::new();
    for &lam in scales {
        let inside: Vec<f64> = points.iter().filter(|p| p.dist <= lam).map(|p| p.value).collect();
        let hi = inside.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = inside.iter().cloned().fold(f64::INFINITY, f64::min);
        osc.push((hi - lo).max(0.0));
    }
    let holder = loglog_fit(scales, &osc).0;

    let mut normal = Vec::new();
    for &lam in scales {
        let offsets: Vec<f64> = if n == 1 { vec![0.0] } else { vec![-0.75 * lam, 0.75 * lam] };
        let mut sup = 0.0f64;
        for o in offsets {
            let mut f = zp.to_vec();
            if let Some(s) = f.first_mut() {
                *s += o;
            }
            sup = sup.max(w.trace(&f)?.w_nu.abs());
        }
        normal.push((lam, sup));
    }
    Ok(NeumannReport { rate, t0, normal, holder })
}

// ---------------------------------------------------------------------------------------------
// Flat family

fn check_free(n: usize, q: &BTreeMap<MultiIndex, Rat>, b1: &BTreeMap<MultiIndex, Rat>, qmax: u32, bmax: u32) -> Result<()> {
    for mu in q.keys() {
        if mu.len() != n || mu[n - 1] != 0 || mu.iter().sum::<u32>() > qmax {
            return Err(Error::InvalidInput(format!("tangential coefficient index {mu:?} out of range")));
        }
    }
    for mu in b1.keys() {
        if mu.len() != n || mu[n - 1] == 0 || mu.iter().sum::<u32>() > bmax {
            return Err(Error::InvalidInput(format!("normal coefficient index {mu:?} out of range")));
        }
    }
    Ok(())
}

/// Solution `T = Q(x') + rP` of `Δ((U₀)_n T) = 0`, `T_ν = 0` in the flat geometry, of degree `k + 2`.
///
/// `q` holds the coefficients of `x^μ r⁰` (no `x_n`), `b1` those of `x^μ r¹` with `μ_n ≠ 0`;
/// `x'^σ r` is forced to vanish by the Neumann condition.
pub fn constant_t(n: usize, k: u32, q: &BTreeMap<MultiIndex, Rat>, b1: &BTreeMap<MultiIndex, Rat>) -> Result<XRPolynomial> {
    check_free(n, q, b1, k + 2, k + 1)?;
    let mut t = XRPolynomial::zero(n);
    for (mu, c) in q {
        t.add_term(mu, 0, c.clone());
    }
    for (mu, c) in b1 {
        t.add_term(mu, 1, c.clone());
    }
    let int = |v: u32| Rat::from_integer((v as i64).into());
    for deg in 2..=k + 2 {
        for m in 2..=deg {
            let l = m - 2;
            for sigma in multi_indices_of_degree(n, deg - m) {
                let sn = sigma[n - 1];
                let mut up = sigma.clone();
                up[n - 1] += 1;
                let mut acc = int(sn + 1) * t.coeff(&up, l + 1);
                for i in 0..n {
                    let mut s = sigma.clone();
                    s[i] += 2;
                    acc += int((sigma[i] + 1) * (sigma[i] + 2)) * t.coeff(&s, l);
                }
                t.set_coeff(&sigma, m, -acc / int((l + 1) * (l + 2 + 2 * sn)));
            }
        }
    }
    Ok(t)
}

/// `r²·(2r/U₀)·Δ((U₀/2r)·T)` by the monomial table; zero exactly when `(U₀)_n T` is harmonic.
pub fn shifted_laplacian(t: &XRPolynomial) -> XRPolynomial {
    let n = t.n();
    let int = |v: i64| Rat::from_integer(v.into());
    let mut out = XRPolynomial::zero(n);
    for (mu, m, c) in t.terms() {
        let (mi, mn) = (m as i64, mu[n - 1] as i64);
        out.add_term(mu, m, c.clone() * int((mi - 1) * (mi + 2 * mn)));
        if mn > 0 {
            let mut e = mu.to_vec();
            e[n - 1] -= 1;
            out.add_term(&e, m + 1, c.clone() * int(mn));
        }
        for i in 0..n {
            if mu[i] >= 2 {
                let mut e = mu.to_vec();
                e[i] -= 2;
                out.add_term(&e, m + 2, c.clone() * int((mu[i] * (mu[i] - 1)) as i64));
            }
        }
    }
    out
}

/// `T_ν` on the flat `Γ` as a polynomial in `x` (no `x_n` dependence).
pub fn flat_normal_derivative(t: &XRPolynomial) -> Poly<Rat> {
    let n = t.n();
    let mut out = Poly::zero(n);
    for (mu, m, c) in t.terms() {
        match (mu[n - 1], m) {
            (0, 1) => out.add_term(mu.to_vec(), c.clone()),
            (1, 0) => {
                let mut e = mu.to_vec();
                e[n - 1] = 0;
                out.add_term(e, c.clone());
            }
            _ => {}
        }
    }
    out
}

/// Difference quotients `(T(z + tν, t) − T(z, 0))/t` on the flat `Γ` at the foot `(z', 0)`.
pub fn flat_normal_quotients(t: &XrPoly<f64>, zp: &[f64], steps: &[f64]) -> Vec<f64> {
    let mut z = zp.to_vec();
    z.push(0.0);
    let t0 = t.eval_xr(&z, 0.0);
    steps
        .iter()
        .map(|&h| {
            let mut x = z.clone();
            *x.last_mut().unwrap() = h;
            (t.eval_xr(&x, h) - t0) / h
        })
        .collect()
}

// ---------------------------------------------------------------------------------------------
// Approximating pairs

/// `(Q, P)` with `W = E(Q) + (U₀/u_n)P`; `b_{μ0} = q_μ`, `b_{μ,m+1} = a_{μm}`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeumannPair {
    pub k: u32,
    pub q: Poly<Rat>,
    pub p: XRPolynomial,
}

impl NeumannPair {
    pub fn n(&self) -> usize {
        self.p.n()
    }

    pub fn b(&self, mu: &[u32], m: u32) -> Rat {
        if m == 0 {
            self.q.coeff(mu)
        } else {
            self.p.coeff(mu, m - 1)
        }
    }

    /// `Q + 2rP`, which is `W` in the flat geometry with `u = U₀`.
    pub fn flat_w(&self) -> XRPolynomial {
        let two_r = XRPolynomial::monomial(&vec![0; self.n()], 1, Rat::from_integer(2.into()));
        XRPolynomial::from_x_poly(&self.q).add(&two_r.mul_trunc(&self.p, self.k + 2))
    }

    /// Two CSV blocks, `Q` then `P`.
    pub fn to_csv(&self) -> String {
        format!("# Q\n{}# P\n{}", XRPolynomial::from_x_poly(&self.q).to_csv(), self.p.to_csv())
    }
}

/// Exact rational copy of a floating-point polynomial.
pub fn rationalize(p: &XrPoly<f64>) -> Result<XRPolynomial> {
    let mut out = XRPolynomial::zero(p.n());
    for (mu, m, c) in p.terms() {
        let r = Rat::from_float(*c).ok_or_else(|| Error::InvalidInput(format!("non-finite coefficient {c}")))?;
        out.add_term(mu, m, r);
    }
    Ok(out)
}

/// Formal inverse of `p` (with `p(0,0) ≠ 0`) truncated at `degree`.
pub fn series_inverse<T: Scalar>(p: &XrPoly<T>, degree: u32) -> Result<XrPoly<T>> {
    let n = p.n();
    let c0 = p.coeff(&vec![0; n], 0);
    if c0.is_zero() {
        return Err(Error::DegenerateWeight);
    }
    let inv0 = T::one() / c0.clone();
    let e = p.sub(&XrPoly::constant(n, c0)).scale(&inv0).truncate(degree);
    // 1/(1+e) = Σ (−e)^j
    let neg = e.scale(&-T::one());
    let mut term = XrPoly::one(n);
    let mut sum = XrPoly::one(n);
    for _ in 0..degree {
        term = term.mul_trunc(&neg, degree);
        sum = sum.add(&term);
    }
    Ok(sum.scale(&inv0))
}

/// Local graph `x_n = G(x')` of `{d = 0}` from the jet, truncated at `degree`.
fn local_graph(jet: &GammaJet, degree: u32) -> Poly<Rat> {
    let n = jet.n;
    let mut g = Poly::zero(n);
    for _ in 0..=degree + 1 {
        let subs: Vec<Poly<Rat>> = (0..n).map(|i| if i + 1 == n { g.clone() } else { Poly::var(n, i) }).collect();
        g = g.sub(&jet.d.compose_trunc(&subs, degree)).truncate(degree);
    }
    g
}

/// Solves conditions (i) and (ii) for `P` given `Q` and the free normal coefficients.
///
/// `p_n0` is the tangent polynomial of `r·u_n/U₀` at the jet centre; `q` is `Q(x')` in local
/// coordinates (degree `≤ k+2`, no `x_n`); `b1` holds `a_{μ0}` for `μ_n ≠ 0` (missing ones are 0).
pub fn solve_pair_systems(
    jet: &GammaJet,
    p_n0: &XRPolynomial,
    q: &Poly<Rat>,
    b1: &BTreeMap<MultiIndex, Rat>,
    k: u32,
) -> Result<NeumannPair> {
    let n = jet.n;
    let qmap: BTreeMap<MultiIndex, Rat> = q.terms().map(|(e, c)| (e.clone(), c.clone())).collect();
    check_free(n, &qmap, b1, k + 2, k + 1)?;
    if !jet.is_flat() && jet.order < k + 2 {
        return Err(Error::OrderTooHigh { requested: k + 2, supported: jet.order });
    }
    if p_n0.coeff(&vec![0; n], 0) <= Rat::zero() {
        return Err(Error::DegenerateWeight);
    }

    // (i): P(x', G(x'), 0) = O(|x'|^{k+2}) fixes every a_{(σ',0)0}.
    let g = local_graph(jet, k + 1);
    let mut free = b1.clone();
    let mut on_gamma = Poly::zero(n);
    for (mu, c) in b1 {
        let mut tangential = mu.clone();
        tangential[n - 1] = 0;
        let t = Poly::monomial(tangential, c.clone()).mul_trunc(&g.pow_trunc(mu[n - 1], k + 1), k + 1);
        on_gamma = on_gamma.add(&t);
    }
    for sigma in multi_indices_up_to(n, k + 1) {
        if sigma[n - 1] != 0 {
            continue;
        }
        let c = -on_gamma.coeff(&sigma);
        if !c.is_zero() {
            free.insert(sigma, c);
        }
    }

    // (ii): A(P) = −R with R = P_n0·ΔQ̃ + 2∇ₓP_n0·∇Q̃.
    let subs: Vec<Poly<Rat>> = (0..n).map(|i| if i + 1 == n { Poly::zero(n) } else { jet.y[i].clone() }).collect();
    let qt = q.compose_trunc(&subs, k + 2);
    let mut lap = Poly::zero(n);
    for i in 0..n {
        lap = lap.add(&qt.deriv(i).deriv(i));
    }
    let two = Rat::from_integer(2.into());
    let mut rhs = p_n0.mul_trunc(&XRPolynomial::from_x_poly(&lap), k);
    for i in 0..n {
        let cross = p_n0.dx(i).mul_trunc(&XRPolynomial::from_x_poly(&qt.deriv(i)), k);
        rhs = rhs.add(&cross.scale(&two));
    }
    let rhs = rhs.truncate(k).scale(&-Rat::one());
    let p = solve_approximating(jet, &rhs, &free, k)?;
    Ok(NeumannPair { k, q: q.clone(), p })
}

// ---------------------------------------------------------------------------------------------
// Correctors

/// `W_{Q,P} = E(Q) + (U₀/u_n)P` built on a sampled solution about the foot above `z'`.
pub struct WqpField<'a> {
    pub pair: NeumannPair,
    field: &'a dyn SlitField,
    moll: &'a Mollifier,
    q: YPolynomial,
    p: XrPoly<f64>,
    z: Vec<f64>,
    zp: Vec<f64>,
}

/// Residual decay of a corrector.
#[derive(Clone, Debug)]
pub struct WqpReport {
    /// `|∂_νW|` at feet on `Γ`, target `k + 1 + α`.
    pub w1: RateReport,
    /// `(r/U₀)|Δ(u_nW)|` off the slit, target `k + α`.
    pub w2: RateReport,
}

impl<'a> WqpField<'a> {
    pub fn new(pair: NeumannPair, field: &'a dyn SlitField, moll: &'a Mollifier, zp: &[f64]) -> Result<Self> {
        let geom = field.geometry();
        let n = geom.n();
        if pair.n() != n {
            return Err(Error::InvalidInput("pair dimension does not match the field".into()));
        }
        let (z, _) = foot(geom, zp)?;
        // Q is local about z'; the extension works in the global foot parameters.
        let shift: Vec<Poly<f64>> = (0..n)
            .map(|i| {
                let v = Poly::var(n, i);
                if i + 1 < n {
                    v.sub(&Poly::constant(n, zp[i]))
                } else {
                    v
                }
            })
            .collect();
        let qf = pair.q.to_f64().compose_trunc(&shift, pair.k + 2);
        let q = YPolynomial::new(qf)?;
        let p = pair.p.to_f64();
        Ok(WqpField { pair, field, moll, q, p, z, zp: zp.to_vec() })
    }

    fn extension(&self, x: &[f64]) -> Result<f64> {
        Ok(whitney_extend(&self.q, self.field.geometry(), self.moll, &[x.to_vec()])?[0])
    }

    /// `r·u_n/U₀` at `x ∈ ℝⁿ⁺¹`.
    fn weight(&self, x: &[f64]) -> Result<f64> {
        let n = self.z.len();
        let g = self
            .field
            .scaled_gradient_at(x)
            .ok_or_else(|| Error::InvalidInput(format!("no gradient available at {x:?}")))?;
        if !(g[n - 1] > 0.0) {
            return Err(Error::DegenerateWeight);
        }
        Ok(g[n - 1])
    }

    fn local(&self, x: &[f64]) -> Vec<f64> {
        self.z.iter().enumerate().map(|(i, zi)| x[i] - zi).collect()
    }

    /// `W` at a point of `ℝⁿ⁺¹` off `Γ`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let n = self.z.len();
        let frame = closest_point_frame(self.field.geometry(), x)?;
        let e = self.extension(&x[..n])?;
        Ok(e + frame.r * self.p.eval_xr(&self.local(x), frame.r) / self.weight(x)?)
    }

    /// `∂_νW` at the foot above `z'` by extrapolating difference quotients from `t = 2h, 4h, 8h`.
    pub fn normal_derivative(&self, zp: &[f64], h: f64) -> Result<f64> {
        let geom = self.field.geometry();
        let (z, nu) = foot(geom, zp)?;
        let w0 = q_of_x(&self.q, geom, &z)?;
        let mut acc = 0.0;
        for (j, a) in TRACE_WEIGHTS.iter().enumerate() {
            let t = h * 2f64.powi(j as i32 + 1);
            acc += a * (self.eval(&along_normal(&z, &nu, t))? - w0) / t;
        }
        Ok(acc)
    }

    /// `(r/U₀)Δ(u_nW)` at `x`, with `Δ(u_n) = 0` used and `Δ(U₀P)` taken from the frame at `x`.
    pub fn laplacian_residual(&self, x: &[f64]) -> Result<f64> {
        let n = self.z.len();
        let frame = closest_point_frame(self.field.geometry(), x)?;
        let r = frame.r;
        let delta = 0.05 * frame.d.abs().max(1e-12);
        let un = |y: &[f64]| -> Result<f64> {
            let f = closest_point_frame(self.field.geometry(), y)?;
            Ok(f.u0 / f.r * self.weight(y)?)
        };
        let e0 = self.extension(&x[..n])?;
        let mut lap_e = 0.0;
        let mut cross = 0.0;
        for i in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += delta;
            xm[i] -= delta;
            let (ep, em) = (self.extension(&xp[..n])?, self.extension(&xm[..n])?);
            lap_e += (ep - 2.0 * e0 + em) / (delta * delta);
            cross += (un(&xp)? - un(&xm)?) / (2.0 * delta) * (ep - em) / (2.0 * delta);
        }
        let scaled = r / frame.u0 * (un(x)? * lap_e + 2.0 * cross);
        Ok(scaled + u0p_bracket(&self.p, &self.local(x), &frame))
    }

    /// Residual decay of (W1) on feet and (W2) on samples with `|d| ≥ |X − Z|/4`.
    pub fn residuals(&self, scales: &[f64], alpha: f64, per_scale: usize, thr: &RateThresholds) -> Result<WqpReport> {
        let n = self.z.len();
        if n < 2 {
            return Err(Error::InvalidInput("corrector residuals need n ≥ 2".into()));
        }
        let k = self.pair.k as f64;
        let h = self.field.fd_step();
        let mut w1 = Vec::new();
        for &lam in scales {
            let mut sup = 0.0f64;
            for o in [-0.9, -0.6, 0.6, 0.9] {
                let mut f = self.zp.clone();
                f[0] += o * lam;
                sup = sup.max(self.normal_derivative(&f, h.min(lam / 32.0))?.abs());
            }
            w1.push(sup);
        }
        let mut zc = self.z.clone();
        zc.push(0.0);
        let radius = scales.iter().cloned().fold(0.0, f64::max);
        let pts: Vec<(f64, Vec<f64>)> = self
            .field
            .samples(&zc, radius)
            .into_iter()
            .map(|s| (crate::expansion::distance(&s.x, &zc), s))
            .filter(|(dist, s)| s.frame.d.abs() >= 0.25 * dist && s.frame.r >= norm(&self.local(&s.x)[..n - 1]))
            .map(|(dist, s)| (dist, s.x))
            .collect();
        let mut chosen = Vec::new();
        for (j, &lam) in scales.iter().enumerate() {
            let inner = scales.get(j + 1).copied().unwrap_or(lam / 2.0);
            let ring: Vec<&(f64, Vec<f64>)> = pts.iter().filter(|(d, _)| *d <= lam && *d > inner).collect();
            let stride = (ring.len() / per_scale.max(1)).max(1);
            chosen.extend(ring.into_iter().step_by(stride).take(per_scale).cloned());
        }
        let mut de = Vec::new();
        for (d, x) in &chosen {
            de.push((*d, self.laplacian_residual(x)?.abs()));
        }
        let (w2, counts2) = annulus_sups(&de, scales);
        Ok(WqpReport {
            w1: RateReport::from_errors(scales.to_vec(), w1, vec![4; scales.len()], k + 1.0 + alpha, thr)?,
            w2: RateReport::from_errors(scales.to_vec(), w2, counts2, k + alpha, thr)?,
        })
    }
}

/// Builds `W_{Q,P}` on `field` about the foot above `z'`.
pub fn build_wqp<'a>(pair: NeumannPair, field: &'a dyn SlitField, moll: &'a Mollifier, zp: &[f64]) -> Result<WqpField<'a>> {
    if moll.k < pair.k {
        return Err(Error::InvalidInput(format!("mollifier order {} below k = {}", moll.k, pair.k)));
    }
    WqpField::new(pair, field, moll, zp)
}

/// `(r/U₀)Δ(U₀P)` at one point, using the exact `d`, `ν`, `κ` of the frame there.
fn u0p_bracket(p: &XrPoly<f64>, y: &[f64], frame: &crate::geometry::Frame) -> f64 {
    let n = y.len();
    let (r, d, lap_d) = (frame.r, frame.d, -frame.kappa);
    let mono = |e: &[u32]| e.iter().zip(y).map(|(&k, v)| v.powi(k as i32)).product::<f64>();
    let mut total = 0.0;
    for (mu, m, c) in p.terms() {
        let mf = m as f64;
        let xm = mono(mu);
        let rm = r.powi(m as i32);
        let rm1 = if m >= 1 { r.powi(m as i32 - 1) } else { 0.0 };
        let mut lap_x = 0.0;
        let mut nu_grad = 0.0;
        for i in 0..n {
            let mut e = mu.to_vec();
            if mu[i] >= 2 {
                e[i] -= 2;
                lap_x += (mu[i] * (mu[i] - 1)) as f64 * mono(&e);
                e[i] += 1;
            } else if mu[i] == 1 {
                e[i] -= 1;
            }
            if mu[i] >= 1 {
                nu_grad += frame.nu[i] * mu[i] as f64 * mono(&e);
            }
        }
        let v = rm * r * lap_x
            + mf * (mf + 1.0) * xm * rm1
            + lap_d * xm * (0.5 * rm + mf * d * rm1)
            + (rm + 2.0 * mf * d * rm1) * nu_grad;
        total += c * v;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::AnalyticField;
    use crate::geometry::{gamma_jet, u0_of};
    use crate::scalar::rat;
    use crate::whitney::build_mollifier;

    fn idx(v: &[u32]) -> MultiIndex {
        v.to_vec()
    }

    #[test]
    fn x1_squared_family() {
        let q = BTreeMap::from([(idx(&[2, 0]), rat(1, 1))]);
        let t = constant_t(2, 0, &q, &BTreeMap::new()).unwrap();
        let mut expect = XRPolynomial::monomial(&[2, 0], 0, rat(1, 1));
        expect.add_term(&[0, 0], 2, rat(-1, 1));
        assert_eq!(t, expect);
        assert!(shifted_laplacian(&t).is_zero());
        assert!(flat_normal_derivative(&t).is_zero());
    }

    #[test]
    fn linear_q_is_already_a_solution() {
        let q = BTreeMap::from([(idx(&[1, 0]), rat(1, 1))]);
        let t = constant_t(2, 1, &q, &BTreeMap::new()).unwrap();
        assert_eq!(t, XRPolynomial::monomial(&[1, 0], 0, rat(1, 1)));
    }

    #[test]
    fn r_fails_neumann() {
        let t = XRPolynomial::r(2);
        let nd = flat_normal_derivative(&t);
        assert_eq!(nd.coeff(&[0, 0]), rat(1, 1));
        let qs = flat_normal_quotients(&t.to_f64(), &[0.3], &[0.1, 0.01]);
        assert!(qs.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn series_inverse_of_half_plus() {
        let mut p = XrPoly::<f64>::constant(2, 0.5);
        p.add_term(&[1, 0], 0, 0.25);
        p.add_term(&[0, 0], 1, -0.5);
        let inv = series_inverse(&p, 3).unwrap();
        let prod = p.mul_trunc(&inv, 3);
        assert!((prod.coeff(&[0, 0], 0) - 1.0).abs() < 1e-14);
        assert!(prod.sub(&XrPoly::one(2)).norm() < 1e-14);
        assert!((inv.coeff(&[0, 0], 0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn flat_pair_matches_family() {
        let jet = GammaJet::flat(2, 4);
        let half = XRPolynomial::constant(2, rat(1, 2));
        let q = Poly::monomial(idx(&[2, 0]), rat(1, 1));
        let pair = solve_pair_systems(&jet, &half, &q, &BTreeMap::new(), 0).unwrap();
        assert_eq!(pair.b(&[0, 0], 2), rat(-1, 2));
        assert_eq!(pair.p, XRPolynomial::monomial(&[0, 0], 1, rat(-1, 2)));
        let t = constant_t(2, 0, &BTreeMap::from([(idx(&[2, 0]), rat(1, 1))]), &BTreeMap::new()).unwrap();
        assert_eq!(pair.flat_w(), t);
        let zero = solve_pair_systems(&jet, &half, &Poly::zero(2), &BTreeMap::new(), 1).unwrap();
        assert!(zero.p.is_zero() && zero.q.is_zero());
    }

    #[test]
    fn curved_pair_shift_is_small() {
        let geom = SlitGeometry::parabola();
        let half = XRPolynomial::constant(2, rat(1, 2));
        let q = Poly::monomial(idx(&[2, 0]), rat(1, 1));
        for k in 0..=1 {
            let jet = gamma_jet(&geom, &[rat(0, 1)], k + 2).unwrap();
            let curved = solve_pair_systems(&jet, &half, &q, &BTreeMap::new(), k).unwrap();
            let flat = solve_pair_systems(&GammaJet::flat(2, k + 2), &half, &q, &BTreeMap::new(), k).unwrap();
            let shift = curved.p.to_f64().sub(&flat.p.to_f64()).norm();
            assert!(shift <= 10.0 * jet.perturbation(), "k={k}: shift {shift}");
        }
    }

    #[test]
    fn flat_corrector_residuals_vanish() {
        let geom = SlitGeometry::flat(2);
        let field = AnalyticField::new(geom, |x: &[f64]| u0_of(x[1], x[2]))
            .with_gradient(|x: &[f64]| vec![0.0, u0_of(x[1], x[2]) / (2.0 * x[1].hypot(x[2]))]);
        let moll = build_mollifier(2, 0).unwrap();
        let jet = GammaJet::flat(2, 2);
        let half = XRPolynomial::constant(2, rat(1, 2));
        let q = Poly::monomial(idx(&[2, 0]), rat(1, 1));
        let pair = solve_pair_systems(&jet, &half, &q, &BTreeMap::new(), 0).unwrap();
        let w = build_wqp(pair, &field, &moll, &[0.0]).unwrap();
        let x = [0.1, 0.05, 0.02];
        let r = (0.05f64.powi(2) + 0.02f64.powi(2)).sqrt();
        assert!((w.eval(&x).unwrap() - (0.01 - r * r)).abs() < 1e-10);
        assert!(w.normal_derivative(&[0.1], 1e-3).unwrap().abs() < 1e-8);
        assert!(w.laplacian_residual(&x).unwrap().abs() < 1e-5);
    }
}
