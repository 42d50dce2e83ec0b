//! Sparse multivariate polynomials over a [`Scalar`] field.

use std::collections::BTreeMap;
use std::fmt;

use crate::scalar::Scalar;

/// Multi-index of exponents, one entry per variable.
pub type MultiIndex = Vec<u32>;

/// Sparse polynomial in `nvars` variables. Zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly<T: Scalar> {
    nvars: usize,
    terms: BTreeMap<MultiIndex, T>,
}

impl<T: Scalar> Poly<T> {
    pub fn zero(nvars: usize) -> Self {
        Poly { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: T) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, T::one())
    }

    pub fn monomial(exps: MultiIndex, c: T) -> Self {
        let mut p = Self::zero(exps.len());
        p.add_term(exps, c);
        p
    }

    /// The coordinate function `x_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::monomial(e, T::one())
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &T)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, exps: &[u32]) -> T {
        self.terms.get(exps).cloned().unwrap_or_else(T::zero)
    }

    /// Adds `c` to the coefficient of `exps`, dropping it if it cancels.
    pub fn add_term(&mut self, exps: MultiIndex, c: T) {
        assert_eq!(exps.len(), self.nvars, "multi-index length mismatch");
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&exps) {
            Some(v) => {
                let s = v.clone() + c;
                if s.is_zero() {
                    self.terms.remove(&exps);
                } else {
                    *v = s;
                }
            }
            None => {
                self.terms.insert(exps, c);
            }
        }
    }

    pub fn set_coeff(&mut self, exps: MultiIndex, c: T) {
        assert_eq!(exps.len(), self.nvars);
        if c.is_zero() {
            self.terms.remove(&exps);
        } else {
            self.terms.insert(exps, c);
        }
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }

    /// Lowest total degree present; `None` for the zero polynomial.
    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).min()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-T::one()))
    }

    pub fn scale(&self, s: &T) -> Self {
        let mut out = Self::zero(self.nvars);
        if s.is_zero() {
            return out;
        }
        for (e, c) in &self.terms {
            out.add_term(e.clone(), c.clone() * s.clone());
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.mul_impl(other, None)
    }

    /// Product with all terms of total degree above `max_deg` discarded.
    pub fn mul_trunc(&self, other: &Self, max_deg: u32) -> Self {
        self.mul_impl(other, Some(max_deg))
    }

    fn mul_impl(&self, other: &Self, max_deg: Option<u32>) -> Self {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Self::zero(self.nvars);
        for (ea, ca) in &self.terms {
            let da: u32 = ea.iter().sum();
            for (eb, cb) in &other.terms {
                let db: u32 = eb.iter().sum();
                if max_deg.is_some_and(|m| da + db > m) {
                    continue;
                }
                let e: MultiIndex = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca.clone() * cb.clone());
            }
        }
        out
    }

    pub fn truncate(&self, max_deg: u32) -> Self {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| e.iter().sum::<u32>() <= max_deg)
                .map(|(e, c)| (e.clone(), c.clone()))
                .collect(),
        }
    }

    /// Homogeneous part of total degree `deg`.
    pub fn homogeneous_part(&self, deg: u32) -> Self {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| e.iter().sum::<u32>() == deg)
                .map(|(e, c)| (e.clone(), c.clone()))
                .collect(),
        }
    }

    pub fn deriv(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut f = e.clone();
            f[i] -= 1;
            out.add_term(f, c.clone() * T::from_i64(e[i] as i64));
        }
        out
    }

    /// Truncated power `self^k`.
    pub fn pow_trunc(&self, k: u32, max_deg: u32) -> Self {
        let mut acc = Self::one(self.nvars);
        for _ in 0..k {
            acc = acc.mul_trunc(self, max_deg);
        }
        acc
    }

    pub fn eval(&self, x: &[T]) -> T {
        assert_eq!(x.len(), self.nvars);
        let mut acc = T::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (xi, &p) in x.iter().zip(e) {
                for _ in 0..p {
                    t = t * xi.clone();
                }
            }
            acc = acc + t;
        }
        acc
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nvars);
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut t = c.to_f64();
                for (xi, &p) in x.iter().zip(e) {
                    t *= xi.powi(p as i32);
                }
                t
            })
            .sum()
    }

    /// Substitutes polynomials (in a common variable set) for each variable,
    /// truncating at `max_deg`.
    pub fn compose_trunc(&self, subs: &[Poly<T>], max_deg: u32) -> Poly<T> {
        assert_eq!(subs.len(), self.nvars);
        let m = subs.first().map(|p| p.nvars).unwrap_or(0);
        let mut out = Poly::zero(m);
        let mut cache: Vec<Vec<Poly<T>>> = subs.iter().map(|s| vec![Poly::one(s.nvars)]).collect();
        for (e, c) in &self.terms {
            let mut t = Poly::constant(m, c.clone());
            for (i, &p) in e.iter().enumerate() {
                while cache[i].len() <= p as usize {
                    let next = cache[i].last().unwrap().mul_trunc(&subs[i], max_deg);
                    cache[i].push(next);
                }
                t = t.mul_trunc(&cache[i][p as usize], max_deg);
            }
            out = out.add(&t);
        }
        out
    }

    /// Maximum absolute coefficient.
    pub fn norm(&self) -> f64 {
        self.terms.values().map(|c| c.to_f64().abs()).fold(0.0, f64::max)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Poly<U> {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), f(c));
        }
        out
    }

    pub fn to_f64(&self) -> Poly<f64> {
        self.map(|c| c.to_f64())
    }

    /// Drops coefficients with magnitude below `tol` (useful for floats).
    pub fn chop(&self, tol: f64) -> Self {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.to_f64().abs() > tol)
                .map(|(e, c)| (e.clone(), c.clone()))
                .collect(),
        }
    }

    /// Appends `extra` new variables (with exponent 0) after the existing ones.
    pub fn extend_vars(&self, extra: usize) -> Self {
        let mut out = Self::zero(self.nvars + extra);
        for (e, c) in &self.terms {
            let mut f = e.clone();
            f.extend(std::iter::repeat_n(0, extra));
            out.add_term(f, c.clone());
        }
        out
    }
}

/// All multi-indices in `nvars` variables with total degree exactly `deg`,
/// in lexicographically decreasing order.
pub fn multi_indices_of_degree(nvars: usize, deg: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let mut cur = vec![0; nvars];
    fn rec(i: usize, left: u32, cur: &mut MultiIndex, out: &mut Vec<MultiIndex>) {
        let n = cur.len();
        if i + 1 == n {
            cur[i] = left;
            out.push(cur.clone());
            return;
        }
        for v in (0..=left).rev() {
            cur[i] = v;
            rec(i + 1, left - v, cur, out);
        }
    }
    if nvars == 0 {
        if deg == 0 {
            out.push(vec![]);
        }
        return out;
    }
    rec(0, deg, &mut cur, &mut out);
    out
}

/// All multi-indices with total degree at most `deg`, grouped by degree.
pub fn multi_indices_up_to(nvars: usize, deg: u32) -> Vec<MultiIndex> {
    (0..=deg).flat_map(|d| multi_indices_of_degree(nvars, d)).collect()
}

impl<T: Scalar + fmt::Display> fmt::Display for Poly<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})")?;
            for (i, p) in e.iter().enumerate() {
                if *p > 0 {
                    write!(f, "*x{}^{}", i + 1, p)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, Rat};

    #[test]
    fn arithmetic_and_cancellation() {
        let x = Poly::<Rat>::var(2, 0);
        let y = Poly::<Rat>::var(2, 1);
        let p = x.add(&y).mul(&x.sub(&y));
        assert_eq!(p.coeff(&[2, 0]), rat(1, 1));
        assert_eq!(p.coeff(&[0, 2]), rat(-1, 1));
        assert_eq!(p.coeff(&[1, 1]), rat(0, 1));
        assert_eq!(p.len(), 2);
        assert!(p.sub(&p).is_zero());
    }

    #[test]
    fn truncated_products() {
        let x = Poly::<f64>::var(1, 0);
        let one_plus = Poly::one(1).add(&x);
        let p = one_plus.pow_trunc(5, 2);
        assert_eq!(p.coeff(&[0]), 1.0);
        assert_eq!(p.coeff(&[1]), 5.0);
        assert_eq!(p.coeff(&[2]), 10.0);
        assert_eq!(p.degree(), Some(2));
    }

    #[test]
    fn derivative_and_eval() {
        let mut p = Poly::<Rat>::zero(2);
        p.add_term(vec![3, 1], rat(2, 1));
        let d = p.deriv(0);
        assert_eq!(d.coeff(&[2, 1]), rat(6, 1));
        assert_eq!(p.eval(&[rat(1, 2), rat(3, 1)]), rat(3, 4));
    }

    #[test]
    fn composition() {
        // p(u) = u^2 with u = x + y
        let p = Poly::<Rat>::monomial(vec![2], rat(1, 1));
        let s = Poly::var(2, 0).add(&Poly::var(2, 1));
        let q = p.compose_trunc(&[s], 5);
        assert_eq!(q.coeff(&[1, 1]), rat(2, 1));
    }

    #[test]
    fn index_enumeration() {
        assert_eq!(multi_indices_of_degree(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(multi_indices_up_to(3, 2).len(), 10);
    }
}
