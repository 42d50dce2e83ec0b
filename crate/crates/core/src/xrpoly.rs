//! Polynomials in `(x₁..x_n, r)`, the Laplacian of `U₀·P`, and approximating polynomials.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::geometry::{Frame, GammaJet};
use crate::poly::{multi_indices_up_to, MultiIndex, Poly};
use crate::scalar::{format_rat, parse_rat, Rat, Scalar};
use crate::{Error, Result};

/// Polynomial in `x₁..x_n` and `r`. Internally a [`Poly`] in `n + 1` variables, `r` last.
#[derive(Clone, Debug, PartialEq)]
pub struct XrPoly<T: Scalar> {
    n: usize,
    poly: Poly<T>,
}

/// Exact rational `(x, r)` polynomial.
pub type XRPolynomial = XrPoly<Rat>;

impl<T: Scalar> XrPoly<T> {
    pub fn zero(n: usize) -> Self {
        XrPoly { n, poly: Poly::zero(n + 1) }
    }

    pub fn one(n: usize) -> Self {
        XrPoly { n, poly: Poly::one(n + 1) }
    }

    pub fn constant(n: usize, c: T) -> Self {
        XrPoly { n, poly: Poly::constant(n + 1, c) }
    }

    pub fn from_poly(n: usize, poly: Poly<T>) -> Self {
        assert_eq!(poly.nvars(), n + 1);
        XrPoly { n, poly }
    }

    /// `c·x^μ r^m`.
    pub fn monomial(mu: &[u32], m: u32, c: T) -> Self {
        let mut e = mu.to_vec();
        e.push(m);
        XrPoly { n: mu.len(), poly: Poly::monomial(e, c) }
    }

    /// The coordinate `x_i` (zero based).
    pub fn x(n: usize, i: usize) -> Self {
        XrPoly { n, poly: Poly::var(n + 1, i) }
    }

    pub fn r(n: usize) -> Self {
        XrPoly { n, poly: Poly::var(n + 1, n) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn poly(&self) -> &Poly<T> {
        &self.poly
    }

    pub fn is_zero(&self) -> bool {
        self.poly.is_zero()
    }

    pub fn degree(&self) -> Option<u32> {
        self.poly.degree()
    }

    /// Coefficient `a_{μm}`.
    pub fn coeff(&self, mu: &[u32], m: u32) -> T {
        let mut e = mu.to_vec();
        e.push(m);
        self.poly.coeff(&e)
    }

    pub fn set_coeff(&mut self, mu: &[u32], m: u32, c: T) {
        let mut e = mu.to_vec();
        e.push(m);
        self.poly.set_coeff(e, c);
    }

    pub fn add_term(&mut self, mu: &[u32], m: u32, c: T) {
        let mut e = mu.to_vec();
        e.push(m);
        self.poly.add_term(e, c);
    }

    /// Iterates `(μ, m, a_{μm})`.
    pub fn terms(&self) -> impl Iterator<Item = (&[u32], u32, &T)> {
        let n = self.n;
        self.poly.terms().map(move |(e, c)| (&e[..n], e[n], c))
    }

    pub fn add(&self, o: &Self) -> Self {
        XrPoly { n: self.n, poly: self.poly.add(&o.poly) }
    }

    pub fn sub(&self, o: &Self) -> Self {
        XrPoly { n: self.n, poly: self.poly.sub(&o.poly) }
    }

    pub fn scale(&self, s: &T) -> Self {
        XrPoly { n: self.n, poly: self.poly.scale(s) }
    }

    pub fn mul_trunc(&self, o: &Self, k: u32) -> Self {
        XrPoly { n: self.n, poly: self.poly.mul_trunc(&o.poly, k) }
    }

    pub fn truncate(&self, k: u32) -> Self {
        XrPoly { n: self.n, poly: self.poly.truncate(k) }
    }

    /// Formal partial derivative in `x_i` (r held fixed).
    pub fn dx(&self, i: usize) -> Self {
        XrPoly { n: self.n, poly: self.poly.deriv(i) }
    }

    /// Formal partial derivative in `r`.
    pub fn dr(&self) -> Self {
        XrPoly { n: self.n, poly: self.poly.deriv(self.n) }
    }

    /// Lifts an `x`-polynomial (n variables) to an `(x, r)` polynomial.
    pub fn from_x_poly(p: &Poly<T>) -> Self {
        XrPoly { n: p.nvars(), poly: p.extend_vars(1) }
    }

    /// `‖P‖ = max |a_{μm}|`.
    pub fn norm(&self) -> f64 {
        self.poly.norm()
    }

    pub fn eval_xr(&self, x: &[f64], r: f64) -> f64 {
        let mut v = x.to_vec();
        v.push(r);
        self.poly.eval_f64(&v)
    }

    pub fn eval_exact(&self, x: &[T], r: T) -> T {
        let mut v = x.to_vec();
        v.push(r);
        self.poly.eval(&v)
    }

    /// `P(x, r)` at the point described by a frame (`x = z + dν`).
    pub fn evaluate(&self, frame: &Frame) -> f64 {
        let x: Vec<f64> = frame.z.iter().zip(&frame.nu).map(|(z, v)| z + frame.d * v).collect();
        self.eval_xr(&x[..self.n], frame.r)
    }

    /// `U₀·P` at the point described by a frame.
    pub fn evaluate_u0p(&self, frame: &Frame) -> f64 {
        frame.u0 * self.evaluate(frame)
    }

    pub fn to_f64(&self) -> XrPoly<f64> {
        XrPoly { n: self.n, poly: self.poly.to_f64() }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> XrPoly<U> {
        XrPoly { n: self.n, poly: self.poly.map(f) }
    }
}

impl XrPoly<f64> {
    /// `(μ, m, coefficient)` in key order.
    pub fn coeffs_sorted(&self) -> Vec<(Vec<u32>, u32, f64)> {
        self.terms().map(|(mu, m, c)| (mu.to_vec(), m, *c)).collect()
    }

    /// CSV rows `mu_1,...,mu_n,m,coeff`.
    pub fn to_csv(&self) -> String {
        let head: Vec<String> = (1..=self.n).map(|i| format!("mu_{i}")).collect();
        let mut out = format!("{},m,coeff\n", head.join(","));
        for (mu, m, c) in self.terms() {
            let idx: Vec<String> = mu.iter().map(|e| e.to_string()).collect();
            out.push_str(&format!("{},{m},{c:e}\n", idx.join(",")));
        }
        out
    }
}

impl XRPolynomial {
    /// CSV rows `mu_1,...,mu_n,m,coeff_num,coeff_den`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let head: Vec<String> = (1..=self.n).map(|i| format!("mu_{i}")).collect();
        out.push_str(&head.join(","));
        out.push_str(",m,coeff_num,coeff_den\n");
        for (mu, m, c) in self.terms() {
            for v in mu {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{m},{},{}\n", c.numer(), c.denom()));
        }
        out
    }

    pub fn from_csv(n: usize, text: &str) -> Result<Self> {
        let mut p = Self::zero(n);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("mu_") || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != n + 3 {
                return Err(Error::Parse(format!("line {}: expected {} fields", lineno + 1, n + 3)));
            }
            let ints = f[..=n]
                .iter()
                .map(|s| s.parse::<u32>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1))))
                .collect::<Result<Vec<_>>>()?;
            let c = parse_rat(&format!("{}/{}", f[n + 1], f[n + 2]))?;
            p.add_term(&ints[..n], ints[n], c);
        }
        Ok(p)
    }

    /// Human-readable form such as `x2 - 1/2 r`.
    pub fn pretty(&self) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let mut parts = Vec::new();
        for (mu, m, c) in self.terms() {
            let mut s = format_rat(c);
            for (i, &p) in mu.iter().enumerate() {
                match p {
                    0 => {}
                    1 => s.push_str(&format!(" x{}", i + 1)),
                    _ => s.push_str(&format!(" x{}^{p}", i + 1)),
                }
            }
            match m {
                0 => {}
                1 => s.push_str(" r"),
                _ => s.push_str(&format!(" r^{m}")),
            }
            parts.push(s);
        }
        parts.join(" + ")
    }
}

/// `Δ(U₀P) = (U₀/r)(principal + curved_terms + O(|X|^{remainder_order}))`.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianResult {
    /// The flat part of the bracket, truncated at degree `k`.
    pub principal: XRPolynomial,
    /// Contributions of the jets of `d`, `ν`, `κ` beyond their flat values.
    pub curved_terms: XRPolynomial,
    /// Order of the dropped terms; `None` when the identity is exact.
    pub remainder_order: Option<u32>,
}

impl LaplacianResult {
    /// Coefficients `A_{σl}` of the full bracket.
    pub fn total(&self) -> XRPolynomial {
        self.principal.add(&self.curved_terms)
    }
}

/// Bracket of `Δ(U₀ x^μ r^m)` with `d`, `ν`, `Δd = −κ` taken from `jet`, truncated at degree `k`.
///
/// `r·Δ(U₀x^μr^m)/U₀ = r^{m+1}Δx^μ + m(m+1)x^μr^{m−1} + Δd·x^μ(½r^m + m d r^{m−1})
/// + (r^m + 2m d r^{m−1}) ν·∇x^μ`.
fn bracket(mu: &[u32], m: u32, jet: &GammaJet, k: u32) -> XRPolynomial {
    let n = mu.len();
    let lift = |p: &Poly<Rat>| XrPoly::from_x_poly(p);
    let mono = |mu: &[u32], m: u32, c: Rat| XrPoly::monomial(mu, m, c);
    let mut out = XRPolynomial::zero(n);
    let q = |v: i64| Rat::from_i64(v);
    for i in 0..n {
        if mu[i] >= 2 {
            let mut e = mu.to_vec();
            e[i] -= 2;
            out = out.add(&mono(&e, m + 1, q((mu[i] * (mu[i] - 1)) as i64)));
        }
    }
    if m >= 1 {
        out = out.add(&mono(mu, m - 1, q((m * (m + 1)) as i64)));
    }
    let lap_d = lift(&jet.kappa).scale(&-Rat::one());
    let d = lift(&jet.d);
    let half_rm = mono(mu, m, Rat::new(1.into(), 2.into()));
    let mut kterm = half_rm;
    if m >= 1 {
        kterm = kterm.add(&d.mul_trunc(&mono(mu, m - 1, q(m as i64)), k));
    }
    out = out.add(&lap_d.mul_trunc(&kterm, k));
    let mut weight = mono(&vec![0; n], m, Rat::one());
    if m >= 1 {
        weight = weight.add(&d.mul_trunc(&mono(&vec![0; n], m - 1, q(2 * m as i64)), k));
    }
    let mut grad_term = XRPolynomial::zero(n);
    for i in 0..n {
        if mu[i] == 0 {
            continue;
        }
        let mut e = mu.to_vec();
        e[i] -= 1;
        grad_term = grad_term.add(&lift(&jet.nu[i]).mul_trunc(&mono(&e, 0, q(mu[i] as i64)), k));
    }
    out = out.add(&weight.mul_trunc(&grad_term, k));
    out.truncate(k)
}

/// Laplacian table entry for `U₀ x^μ r^m`.
pub fn laplacian_monomial(mu: &[u32], m: u32, jet: &GammaJet, k: u32) -> LaplacianResult {
    assert_eq!(mu.len(), jet.n, "multi-index dimension must match the jet");
    assert!(jet.is_flat() || jet.order >= k, "jet order {} too low for truncation {k}", jet.order);
    let flat = GammaJet::flat(jet.n, k);
    let principal = bracket(mu, m, &flat, k);
    if jet.is_flat() {
        return LaplacianResult { principal, curved_terms: XRPolynomial::zero(jet.n), remainder_order: None };
    }
    let full = bracket(mu, m, jet, k);
    LaplacianResult { curved_terms: full.sub(&principal), principal, remainder_order: Some(k + 1) }
}

/// Laplacian of `U₀P` by linearity over the monomials of `P`.
pub fn laplacian_of_product(p: &XRPolynomial, jet: &GammaJet, k: u32) -> LaplacianResult {
    let n = p.n();
    let mut principal = XRPolynomial::zero(n);
    let mut curved = XRPolynomial::zero(n);
    let mut remainder_order = None;
    for (mu, m, c) in p.terms() {
        let l = laplacian_monomial(mu, m, jet, k);
        principal = principal.add(&l.principal.scale(c));
        curved = curved.add(&l.curved_terms.scale(c));
        remainder_order = remainder_order.or(l.remainder_order);
    }
    if !jet.is_flat() {
        remainder_order = Some(k + 1);
    }
    LaplacianResult { principal, curved_terms: curved, remainder_order }
}

/// Solves the dense rational system `a·x = b` by Gaussian elimination.
pub fn solve_rational(mut a: Vec<Vec<Rat>>, mut b: Vec<Rat>) -> Result<Vec<Rat>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero()).ok_or_else(|| {
            Error::SingularSystem(format!("no pivot in column {col} of {n}"))
        })?;
        a.swap(col, piv);
        b.swap(col, piv);
        let inv = Rat::one() / a[col][col].clone();
        for row in 0..n {
            if row == col || a[row][col].is_zero() {
                continue;
            }
            let f = a[row][col].clone() * inv.clone();
            for j in col..n {
                let v = a[col][j].clone() * f.clone();
                a[row][j] = a[row][j].clone() - v;
            }
            let v = b[col].clone() * f;
            b[row] = b[row].clone() - v;
        }
    }
    Ok((0..n).map(|i| b[i].clone() / a[i][i].clone()).collect())
}

/// Unknowns `a_{σ,l+1}` with `|σ| + l ≤ k`, ordered by total degree then by `l`.
fn unknown_keys(n: usize, k: u32) -> Vec<(MultiIndex, u32)> {
    let mut keys: Vec<(MultiIndex, u32)> = Vec::new();
    for deg in 0..=k {
        for l in 0..=deg {
            for sigma in crate::poly::multi_indices_of_degree(n, deg - l) {
                keys.push((sigma, l));
            }
        }
    }
    keys
}

/// Finds `P` of degree `k+1` whose Laplacian coefficients `A_{σl}` equal those of `R`
/// for `|σ| + l ≤ k`, with the coefficients `a_{μ0}` fixed by `free` (missing ones are 0).
pub fn solve_approximating(
    jet: &GammaJet,
    rhs: &XRPolynomial,
    free: &BTreeMap<MultiIndex, Rat>,
    k: u32,
) -> Result<XRPolynomial> {
    let n = jet.n;
    if let Some(d) = rhs.degree() {
        if d > k {
            return Err(Error::InvalidInput(format!("right-hand side degree {d} exceeds k = {k}")));
        }
    }
    let mut base = XRPolynomial::zero(n);
    for (mu, c) in free {
        if mu.len() != n || mu.iter().sum::<u32>() > k + 1 {
            return Err(Error::InvalidInput(format!("free coefficient index {mu:?} out of range")));
        }
        base.add_term(mu, 0, c.clone());
    }
    let keys = unknown_keys(n, k);
    let base_lap = laplacian_of_product(&base, jet, k).total();
    let columns: Vec<XRPolynomial> = keys
        .iter()
        .map(|(sigma, l)| laplacian_monomial(sigma, l + 1, jet, k).total())
        .collect();
    let rows = &keys;
    let a: Vec<Vec<Rat>> = rows
        .iter()
        .map(|(sigma, l)| columns.iter().map(|c| c.coeff(sigma, *l)).collect())
        .collect();
    let b: Vec<Rat> = rows
        .iter()
        .map(|(sigma, l)| rhs.coeff(sigma, *l) - base_lap.coeff(sigma, *l))
        .collect();
    let sol = solve_rational(a, b)?;
    let mut p = base;
    for ((sigma, l), v) in keys.iter().zip(sol) {
        p.add_term(sigma, l + 1, v);
    }
    Ok(p)
}

/// All free-coefficient index sets `μ` (the `a_{μ0}`) of a degree-`k+1` approximating polynomial.
pub fn free_indices(n: usize, k: u32) -> Vec<MultiIndex> {
    multi_indices_up_to(n, k + 1)
}

/// `free` map holding a single coefficient.
pub fn single_free(mu: MultiIndex, c: Rat) -> BTreeMap<MultiIndex, Rat> {
    let mut m = BTreeMap::new();
    if !c.is_zero() {
        m.insert(mu, c);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gamma_jet, SlitGeometry};
    use crate::scalar::rat;

    fn flat(n: usize) -> GammaJet {
        GammaJet::flat(n, 6)
    }

    #[test]
    fn table_examples() {
        let j = flat(2);
        assert_eq!(laplacian_monomial(&[0, 0], 1, &j, 4).principal, XRPolynomial::constant(2, rat(2, 1)));
        assert!(laplacian_monomial(&[1, 0], 0, &j, 4).principal.is_zero());
        assert_eq!(laplacian_monomial(&[2, 0], 0, &j, 4).principal, XRPolynomial::r(2).scale(&rat(2, 1)));
        assert_eq!(laplacian_monomial(&[2, 0], 0, &j, 4).remainder_order, None);
    }

    #[test]
    fn degree_one_law() {
        let j = flat(2);
        let mut p = XRPolynomial::zero(2);
        p.add_term(&[0, 0], 0, rat(3, 1));
        p.add_term(&[1, 0], 0, rat(5, 1));
        p.add_term(&[0, 1], 0, rat(7, 1));
        p.add_term(&[0, 0], 1, rat(11, 1));
        let a = laplacian_of_product(&p, &j, 0).total();
        assert_eq!(a.coeff(&[0, 0], 0), rat(7 + 22, 1));
    }

    #[test]
    fn harmonic_cubic_half() {
        let j = flat(2);
        let p = XRPolynomial::x(2, 1).sub(&XRPolynomial::r(2).scale(&rat(1, 2)));
        assert!(laplacian_of_product(&p, &j, 5).total().is_zero());
        let solved = solve_approximating(&j, &XRPolynomial::zero(2), &single_free(vec![0, 1], rat(1, 1)), 0).unwrap();
        assert_eq!(solved, p);
    }

    #[test]
    fn constant_rhs() {
        let j = flat(1);
        let p = solve_approximating(&j, &XRPolynomial::constant(1, rat(3, 1)), &BTreeMap::new(), 0).unwrap();
        assert_eq!(p.coeff(&[0], 1), rat(3, 2));
        assert_eq!(p.coeff(&[1], 0), rat(0, 1));
    }

    #[test]
    fn curved_constant() {
        let j = gamma_jet(&SlitGeometry::parabola(), &[rat(0, 1)], 3).unwrap();
        let a = laplacian_of_product(&XRPolynomial::one(2), &j, 0).total();
        // Δd = −κ, so the constant picks up −κ(0)/2.
        assert_eq!(a.coeff(&[0, 0], 0), rat(-1, 4));
        let p = solve_approximating(&j, &XRPolynomial::zero(2), &single_free(vec![0, 0], rat(1, 1)), 0).unwrap();
        assert_eq!(p.coeff(&[0, 0], 1), rat(1, 8));
        let a = laplacian_of_product(&p, &j, 0).total();
        assert!(a.is_zero());
    }

    #[test]
    fn csv_roundtrip() {
        let mut p = XRPolynomial::zero(2);
        p.add_term(&[1, 2], 3, rat(-5, 7));
        p.add_term(&[0, 0], 0, rat(1, 1));
        let text = p.to_csv();
        assert!(text.starts_with("mu_1,mu_2,m,coeff_num,coeff_den"));
        assert_eq!(XRPolynomial::from_csv(2, &text).unwrap(), p);
    }

    #[test]
    fn evaluation() {
        let g = SlitGeometry::flat(2);
        let f = g.frame(&[0.0, 0.5, 0.0]).unwrap();
        let p = XRPolynomial::x(2, 1).sub(&XRPolynomial::r(2).scale(&rat(1, 2)));
        assert!((p.evaluate(&f) - 0.25).abs() < 1e-15);
        assert!((p.evaluate_u0p(&f) - 0.25 * 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(XRPolynomial::one(2).evaluate_u0p(&f), f.u0);
        let f = g.frame(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(XRPolynomial::r(2).evaluate(&f), 1.0);
    }
}
