//! Moment-vanishing mollifier and the extension `E(Q)(x) = ∫ Q(y) ρ((x−y)/d) d^{−n} dy` of
//! functions of the tangential coordinates of `Γ`.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::expansion::loglog_fit;
use crate::geometry::{closest_foot, SlitGeometry};
use crate::poly::{multi_indices_up_to, MultiIndex, Poly};
use crate::{Error, Result};

/// Largest supported order `k`.
pub const MAX_ORDER: u32 = 4;

/// `exp(−1/(1 − 4|t|²))` on `|t| < 1/2`, zero outside.
pub fn bump(t2: f64) -> f64 {
    let s = 1.0 - 4.0 * t2;
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

/// Product rule on `B_{1/2}`: Gauss–Legendre in the radius (or on the interval for `n = 1`) and
/// the trapezoid rule in the angle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadRule {
    pub radial: usize,
    pub angular: usize,
}

impl QuadRule {
    /// Nodes `t` and weights on `B_{1/2} ⊂ ℝⁿ`.
    pub fn nodes(&self, n: usize) -> Vec<(Vec<f64>, f64)> {
        let rule = GaussLegendre::new(NonZeroUsize::new(self.radial).expect("positive order"));
        let pairs = rule.as_node_weight_pairs();
        if n == 1 {
            return pairs.iter().map(|&(t, w)| (vec![0.5 * t], 0.5 * w)).collect();
        }
        let m = self.angular;
        let mut out = Vec::with_capacity(pairs.len() * m);
        for &(t, w) in pairs {
            let rho = 0.25 * (t + 1.0);
            for a in 0..m {
                let phi = 2.0 * PI * a as f64 / m as f64;
                out.push((vec![rho * phi.cos(), rho * phi.sin()], 0.25 * w * rho * 2.0 * PI / m as f64));
            }
        }
        out
    }
}

/// `ρ(t) = b(|t|²)·Σ c_ν t^ν` with `∫ρ = 1` and `∫ρ t^μ = 0` for `1 ≤ |μ| ≤ k+2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    pub n: usize,
    pub k: u32,
    pub coeffs: Vec<(MultiIndex, f64)>,
    pub rule: QuadRule,
}

impl Mollifier {
    pub fn eval(&self, t: &[f64]) -> f64 {
        let t2: f64 = t.iter().map(|v| v * v).sum();
        let b = bump(t2);
        if b == 0.0 {
            return 0.0;
        }
        b * self
            .coeffs
            .iter()
            .map(|(e, c)| c * e.iter().zip(t).map(|(&k, v)| v.powi(k as i32)).product::<f64>())
            .sum::<f64>()
    }

    /// `∫ρ t^μ` by double-exponential quadrature, independent of the stored rule.
    pub fn moment(&self, mu: &[u32]) -> f64 {
        let f = |t: &[f64]| self.eval(t) * mu.iter().zip(t).map(|(&k, v)| v.powi(k as i32)).product::<f64>();
        if self.n == 1 {
            return quadrature::double_exponential::integrate(|s| f(&[s]), -0.5, 0.5, 1e-14).integral;
        }
        let m = 4 * (self.k as usize + 2 + mu.iter().sum::<u32>() as usize) + 8;
        quadrature::double_exponential::integrate(
            |rho| {
                let mut acc = 0.0;
                for a in 0..m {
                    let phi = 2.0 * PI * a as f64 / m as f64;
                    acc += f(&[rho * phi.cos(), rho * phi.sin()]);
                }
                acc * 2.0 * PI / m as f64 * rho
            },
            0.0,
            0.5,
            1e-14,
        )
        .integral
    }

    /// `(f ∗ ρ_s)(x) = ∫ f(x − s t) ρ(t) dt` on the stored rule.
    pub fn convolve(&self, f: &mut dyn FnMut(&[f64]) -> Result<f64>, x: &[f64], scale: f64) -> Result<f64> {
        let mut acc = 0.0;
        let mut y = x.to_vec();
        for (t, w) in self.rule.nodes(self.n) {
            let rho = self.eval(&t);
            if rho == 0.0 {
                continue;
            }
            for i in 0..self.n {
                y[i] = x[i] - scale * t[i];
            }
            acc += w * rho * f(&y)?;
        }
        Ok(acc)
    }
}

/// Builds the mollifier of order `k` in `ℝⁿ`.
pub fn build_mollifier(n: usize, k: u32) -> Result<Mollifier> {
    if !(1..=2).contains(&n) || k > MAX_ORDER {
        return Err(Error::InvalidInput(format!("mollifier needs n in 1..=2 and k <= {MAX_ORDER}")));
    }
    let rule = QuadRule { radial: 96, angular: 4 * (k as usize + 2) + 16 };
    let basis = multi_indices_up_to(n, k + 2);
    let nodes = rule.nodes(n);
    let p = basis.len();
    let mut gram = DMatrix::<f64>::zeros(p, p);
    for (t, w) in &nodes {
        let b = bump(t.iter().map(|v| v * v).sum());
        if b == 0.0 {
            continue;
        }
        let mono: Vec<f64> =
            basis.iter().map(|e| e.iter().zip(t).map(|(&k, v)| v.powi(k as i32)).product()).collect();
        for i in 0..p {
            for j in 0..p {
                gram[(i, j)] += w * b * mono[i] * mono[j];
            }
        }
    }
    let mut rhs = DVector::<f64>::zeros(p);
    let zero = basis.iter().position(|e| e.iter().all(|&v| v == 0)).expect("constant monomial");
    rhs[zero] = 1.0;
    let chol = gram.cholesky().ok_or(Error::SingularMoments)?;
    let c = chol.solve(&rhs);
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMoments);
    }
    Ok(Mollifier { n, k, coeffs: basis.into_iter().zip(c.iter().cloned()).collect(), rule })
}

/// Polynomial in the tangential coordinates `y'` (no dependence on `y_n`).
#[derive(Clone, Debug, PartialEq)]
pub struct YPolynomial {
    pub poly: Poly<f64>,
}

impl YPolynomial {
    /// `poly` must be a polynomial in `n` variables with no `y_n` dependence.
    pub fn new(poly: Poly<f64>) -> Result<Self> {
        let n = poly.nvars();
        if poly.terms().any(|(e, c)| e[n - 1] != 0 && *c != 0.0) {
            return Err(Error::InvalidInput("Q must not depend on y_n".into()));
        }
        Ok(YPolynomial { poly })
    }

    /// `Q(y')` from a polynomial in the `n − 1` tangential variables.
    pub fn tangential(q: &Poly<f64>) -> Self {
        YPolynomial { poly: q.extend_vars(1) }
    }

    pub fn n(&self) -> usize {
        self.poly.nvars()
    }

    pub fn scale(&self, s: f64) -> Self {
        YPolynomial { poly: self.poly.scale(&s) }
    }

    pub fn add(&self, o: &Self) -> Self {
        YPolynomial { poly: self.poly.add(&o.poly) }
    }
}

/// Flattening coordinates of `x ∈ ℝⁿ`: the foot parameter(s) then the signed distance.
pub fn flat_coords(geom: &SlitGeometry, x: &[f64]) -> Result<Vec<f64>> {
    if geom.n() == 1 {
        return Ok(vec![x[0]]);
    }
    let s = closest_foot(geom, x[0], x[1])?;
    let z = geom.gamma_point(s);
    let nu = geom.normal_at(s);
    let d = (x[0] - z[0]) * nu[0] + (x[1] - z[1]) * nu[1];
    let k = geom.curvature_at(s);
    if k.abs() * d.abs() >= 0.9 {
        return Err(Error::OutOfChart(x.to_vec()));
    }
    Ok(vec![s, d])
}

/// `Q ∘ y` at `x`.
pub fn q_of_x(q: &YPolynomial, geom: &SlitGeometry, x: &[f64]) -> Result<f64> {
    let y = flat_coords(geom, x)?;
    Ok(q.poly.eval_f64(&y))
}

/// `E(Q)` at each point (points of `ℝⁿ` off `Γ`).
pub fn whitney_extend(q: &YPolynomial, geom: &SlitGeometry, moll: &Mollifier, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    points.iter().map(|x| extend_at(q, geom, moll, x)).collect()
}

fn extend_at(q: &YPolynomial, geom: &SlitGeometry, moll: &Mollifier, x: &[f64]) -> Result<f64> {
    let d = flat_coords(geom, x)?[geom.n() - 1].abs();
    if d == 0.0 {
        return Err(Error::InvalidInput("E(Q) is evaluated off Γ".into()));
    }
    let mut f = |y: &[f64]| q_of_x(q, geom, y);
    moll.convolve(&mut f, x, d)
}

/// One row of a jet-match table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectRow {
    pub order: u32,
    /// Defect at the closest approach distance.
    pub defect: f64,
    pub approach_rate: f64,
    pub distances: Vec<f64>,
    pub defects: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectTable {
    pub rows: Vec<DefectRow>,
    /// `|∂_ν E(Q)|` at each approach distance (`∂_ν(Q∘y) = 0` identically).
    pub normal_derivative: Vec<f64>,
    pub normal_rate: f64,
}

impl DefectTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("order,defect,approach_rate\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:e},{}\n", r.order, r.defect, r.approach_rate));
        }
        s
    }
}

/// Derivatives of `E(Q) − Q∘y` of orders `0..=max_order` at `z + tν`, for `t` in `distances`,
/// by central differences with step `t/4`, and the decay rate of each as `t → 0`.
pub fn verify_jet_match(
    q: &YPolynomial,
    geom: &SlitGeometry,
    moll: &Mollifier,
    s: f64,
    distances: &[f64],
    max_order: u32,
) -> Result<DefectTable> {
    let n = geom.n();
    let (z, nu) = if n == 1 { (vec![0.0], vec![1.0]) } else { (geom.gamma_point(s).to_vec(), geom.normal_at(s).to_vec()) };
    let diff = |x: &[f64]| -> Result<f64> { Ok(extend_at(q, geom, moll, x)? - q_of_x(q, geom, x)?) };
    let mut per_order: Vec<Vec<f64>> = vec![vec![]; max_order as usize + 1];
    let mut normal = vec![];
    for &t in distances {
        let x: Vec<f64> = z.iter().zip(&nu).map(|(a, b)| a + t * b).collect();
        let h = t / 4.0;
        let at = |off: &[f64]| -> Result<f64> {
            let p: Vec<f64> = x.iter().zip(off).map(|(a, b)| a + h * b).collect();
            diff(&p)
        };
        let zero = vec![0.0; n];
        let f0 = at(&zero)?;
        for ord in 0..=max_order {
            let mut worst: f64 = 0.0;
            for mu in crate::poly::multi_indices_of_degree(n, ord) {
                worst = worst.max(central(&at, &mu, n, h)?.abs());
            }
            if ord == 0 {
                worst = f0.abs();
            }
            per_order[ord as usize].push(worst);
        }
        let ext = |y: &[f64]| extend_at(q, geom, moll, y);
        let p: Vec<f64> = x.iter().zip(&nu).map(|(a, b)| a + h * b).collect();
        let m: Vec<f64> = x.iter().zip(&nu).map(|(a, b)| a - h * b).collect();
        normal.push(((ext(&p)? - ext(&m)?) / (2.0 * h)).abs());
    }
    let rows = per_order
        .into_iter()
        .enumerate()
        .map(|(o, defects)| {
            let (rate, _) = loglog_fit(distances, &defects);
            DefectRow { order: o as u32, defect: *defects.last().unwrap_or(&0.0), approach_rate: rate, distances: distances.to_vec(), defects }
        })
        .collect();
    let (normal_rate, _) = loglog_fit(distances, &normal);
    Ok(DefectTable { rows, normal_derivative: normal, normal_rate })
}

/// Central-difference `D^μ` of `f` at offset 0 in units of `h` (orders up to 2 per axis pair).
fn central(f: &dyn Fn(&[f64]) -> Result<f64>, mu: &[u32], n: usize, h: f64) -> Result<f64> {
    let ord: u32 = mu.iter().sum();
    let unit = |i: usize, s: f64| -> Vec<f64> { (0..n).map(|j| if j == i { s } else { 0.0 }).collect() };
    match ord {
        0 => f(&vec![0.0; n]),
        1 => {
            let i = mu.iter().position(|&v| v == 1).unwrap();
            Ok((f(&unit(i, 1.0))? - f(&unit(i, -1.0))?) / (2.0 * h))
        }
        2 => {
            if let Some(i) = mu.iter().position(|&v| v == 2) {
                Ok((f(&unit(i, 1.0))? - 2.0 * f(&vec![0.0; n])? + f(&unit(i, -1.0))?) / (h * h))
            } else {
                let i = mu.iter().position(|&v| v == 1).unwrap();
                let j = mu.iter().rposition(|&v| v == 1).unwrap();
                let pp: Vec<f64> = (0..n).map(|a| if a == i || a == j { 1.0 } else { 0.0 }).collect();
                let pm: Vec<f64> = (0..n).map(|a| if a == i { 1.0 } else if a == j { -1.0 } else { 0.0 }).collect();
                let mp: Vec<f64> = pm.iter().map(|v| -v).collect();
                let mm: Vec<f64> = pp.iter().map(|v| -v).collect();
                Ok((f(&pp)? - f(&pm)? - f(&mp)? + f(&mm)?) / (4.0 * h * h))
            }
        }
        _ => Err(Error::OrderTooHigh { requested: ord, supported: 2 }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_vanish() {
        for n in 1..=2 {
            for k in 0..=2 {
                let m = build_mollifier(n, k).unwrap();
                for mu in multi_indices_up_to(n, k + 2) {
                    let want = if mu.iter().all(|&v| v == 0) { 1.0 } else { 0.0 };
                    let got = m.moment(&mu);
                    assert!((got - want).abs() < 1e-12, "n={n} k={k} {mu:?} {got}");
                }
            }
        }
    }

    #[test]
    fn reproduces_polynomials() {
        let m = build_mollifier(1, 0).unwrap();
        let mut sq = |y: &[f64]| Ok(y[0] * y[0]);
        let v = m.convolve(&mut sq, &[0.3], 1.0).unwrap();
        assert!((v - 0.09).abs() < 1e-12);
        let mut cube = |y: &[f64]| Ok(y[0].powi(4));
        let v = m.convolve(&mut cube, &[0.3], 1.0).unwrap();
        assert!((v - 0.3f64.powi(4)).abs() > 1e-6);
    }

    #[test]
    fn flat_extension_is_identity() {
        let geom = SlitGeometry::flat(2);
        let m = build_mollifier(2, 1).unwrap();
        let q = YPolynomial::tangential(&Poly::monomial(vec![3], 1.0).add(&Poly::var(1, 0)));
        let pts = vec![vec![0.1, 0.2], vec![-0.3, -0.05]];
        let e = whitney_extend(&q, &geom, &m, &pts).unwrap();
        for (p, v) in pts.iter().zip(e) {
            assert!((v - (p[0].powi(3) + p[0])).abs() < 1e-12);
        }
    }
}
