//! The planar thin one-phase problem with a single slit `{x₂ = 0, x₁ ≤ γ}` in the unit disc.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::SlitGeometry;
use crate::solver::energy::compute_energy;
use crate::solver::series::{half_angle_coefficient, solve_series_adaptive};
use crate::solver::{solve_fd, BoundaryData, Domain, GridSolution, GridSpec, HalfAngleSeries, Rhs};
use crate::{Error, Result};

/// Flux function `G` on `(−1, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FluxSpec {
    Constant { value: f64 },
    /// `Σ c_j γ^j`.
    Polynomial { coeffs: Vec<f64> },
}

impl FluxSpec {
    pub fn eval(&self, gamma: f64) -> f64 {
        match self {
            FluxSpec::Constant { value } => *value,
            FluxSpec::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * gamma + c),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TipProblem {
    pub phi: BoundaryData,
    pub flux: FluxSpec,
    pub bracket: (f64, f64),
    /// Number of intervals of the coarse sign scan.
    #[serde(default = "default_scan")]
    pub scan: usize,
}

fn default_scan() -> usize {
    32
}

impl TipProblem {
    pub fn new(phi: BoundaryData, flux: FluxSpec, bracket: (f64, f64)) -> Self {
        TipProblem { phi, flux, bracket, scan: default_scan() }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bracket;
        if !(-1.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::InvalidInput(format!("bracket [{lo}, {hi}] must lie inside (−1, 1)")));
        }
        for j in 0..=256 {
            let th = -PI + 2.0 * PI * j as f64 / 256.0;
            let v = self.phi.on_circle(th);
            if v < -1e-12 {
                return Err(Error::InvalidInput(format!("boundary data negative at θ = {th}")));
            }
            if (v - self.phi.on_circle(-th)).abs() > 1e-12 {
                return Err(Error::InvalidInput("boundary data must be even in θ".into()));
            }
        }
        for j in 0..=self.scan {
            let g = lo + (hi - lo) * j as f64 / self.scan as f64;
            if !(self.flux.eval(g) > 0.0) {
                return Err(Error::InvalidInput(format!("G must be positive on the bracket (G({g}) ≤ 0)")));
            }
        }
        if self.scan < 2 {
            return Err(Error::InvalidInput("scan needs at least 2 intervals".into()));
        }
        Ok(())
    }
}

/// Angle on the unit circle of `T⁻¹(e^{iθ})`, where `T(z) = (z − γ)/(1 − γz)`.
pub fn pullback_angle(gamma: f64, theta: f64) -> f64 {
    let (c, s) = (theta.cos(), theta.sin());
    let a = s.atan2(c + gamma) - (gamma * s).atan2(1.0 + gamma * c);
    // wrap to (−π, π]
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// `∂u/∂U₀` at the tip `γ` for boundary data `φ(θ)`.
pub fn tip_coefficient(gamma: f64, phi: &dyn Fn(f64) -> f64) -> Result<f64> {
    if !(gamma.abs() < 1.0) {
        return Err(Error::InvalidInput(format!("tip {gamma} outside (−1, 1)")));
    }
    let psi = |t: f64| phi(pullback_angle(gamma, t));
    let c = half_angle_coefficient(&psi, 0.5)?;
    Ok(c / (1.0 - gamma * gamma).sqrt())
}

/// Half-angle series of `u ∘ T⁻¹` on the standard slit disc.
pub fn tip_series(gamma: f64, phi: &dyn Fn(f64) -> f64, tol: f64) -> Result<HalfAngleSeries> {
    let psi = |t: f64| phi(pullback_angle(gamma, t));
    solve_series_adaptive(&psi, tol, 256)
}

/// Split Cartesian solve of the slit disc with tip at `γ`, in coordinates centred at the tip.
pub fn tip_fd_solution(gamma: f64, phi: &BoundaryData, h: f64) -> Result<GridSolution> {
    let spec = GridSpec { h, domain: Domain::Disc { radius: 1.0, center: vec![-gamma] }, split: true };
    Ok(GridSolution::Cartesian(solve_fd(&SlitGeometry::flat(1), phi, &Rhs::zero(1), &spec)?))
}

/// Tip coefficient read off the fitted singular part of a split finite-difference solve.
pub fn tip_coefficient_fd(gamma: f64, phi: &BoundaryData, h: f64) -> Result<f64> {
    match tip_fd_solution(gamma, phi, h)? {
        GridSolution::Cartesian(s) => {
            s.split_coeffs.first().copied().ok_or_else(|| Error::SingularSystem("no splitting coefficient".into()))
        }
        GridSolution::Adapted(_) => unreachable!(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FreeBoundarySolution {
    pub gamma: f64,
    pub a: f64,
    /// `a(γ*) − G(γ*)`.
    pub residual: f64,
    /// Coefficients of `u ∘ T⁻¹` on the standard slit disc.
    pub series: HalfAngleSeries,
    /// `(γ, a(γ) − G(γ))` from the coarse scan.
    pub scan: Vec<(f64, f64)>,
}

impl FreeBoundarySolution {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("gamma,a,residual\n");
        s.push_str(&format!("{:e},{:e},{:e}\n", self.gamma, self.a, self.residual));
        s
    }

    pub fn coefficients_csv(&self) -> String {
        let mut s = String::from("q,coefficient\n");
        for (j, c) in self.series.coeffs.iter().enumerate() {
            s.push_str(&format!("{},{c:e}\n", HalfAngleSeries::q(j)));
        }
        s
    }
}

/// Finds `γ*` in the bracket with `a(γ*) = G(γ*)`.
pub fn solve_free_boundary(prob: &TipProblem) -> Result<FreeBoundarySolution> {
    prob.validate()?;
    let phi = |t: f64| prob.phi.on_circle(t);
    let f = |g: f64| -> Result<f64> { Ok(tip_coefficient(g, &phi)? - prob.flux.eval(g)) };
    let (lo, hi) = prob.bracket;
    let scan: Vec<(f64, f64)> = (0..=prob.scan)
        .map(|j| {
            let g = lo + (hi - lo) * j as f64 / prob.scan as f64;
            f(g).map(|v| (g, v))
        })
        .collect::<Result<_>>()?;
    let mut brackets = Vec::new();
    for w in scan.windows(2) {
        let ((g0, f0), (g1, f1)) = (w[0], w[1]);
        if f0 == 0.0 {
            brackets.push((g0, g0));
        } else if f0 * f1 < 0.0 {
            brackets.push((g0, g1));
        }
    }
    if let Some(&(g, v)) = scan.last() {
        if v == 0.0 {
            brackets.push((g, g));
        }
    }
    match brackets.len() {
        0 => return Err(Error::NoBracket { lo, hi }),
        1 => {}
        _ => return Err(Error::MultipleRoots { roots: brackets.iter().map(|(a, b)| 0.5 * (a + b)).collect() }),
    }
    let (mut a, mut b) = brackets[0];
    let gamma = if a == b {
        a
    } else {
        let (mut fa, mut fb) = (f(a)?, f(b)?);
        while b - a > 1e-3 {
            let m = 0.5 * (a + b);
            let fm = f(m)?;
            if fm == 0.0 {
                (a, b, fa, fb) = (m, m, 0.0, 0.0);
                break;
            }
            if fa * fm < 0.0 {
                b = m;
                fb = fm;
            } else {
                a = m;
                fa = fm;
            }
        }
        secant(&f, a, fa, b, fb)?
    };
    let series = tip_series(gamma, &phi, 1e-10)?;
    let av = tip_coefficient(gamma, &phi)?;
    Ok(FreeBoundarySolution { gamma, a: av, residual: av - prob.flux.eval(gamma), series, scan })
}

/// Secant iteration kept inside `[a, b]`, falling back to bisection.
fn secant(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut fa: f64, mut b: f64, fb: f64) -> Result<f64> {
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let (mut x0, mut f0, mut x1, mut f1) = (a, fa, b, fb);
    for _ in 0..100 {
        let mut x = x1 - f1 * (x1 - x0) / (f1 - f0);
        if !(x > a && x < b) {
            x = 0.5 * (a + b);
        }
        let fx = f(x)?;
        if fx.abs() < 1e-9 {
            return Ok(x);
        }
        if fa * fx < 0.0 {
            b = x;
        } else {
            a = x;
            fa = fx;
        }
        x0 = x1;
        f0 = f1;
        x1 = x;
        f1 = fx;
        if b - a < 1e-15 {
            break;
        }
    }
    Err(Error::NonConvergence { iterations: 100, residual: f1.abs() })
}

/// Energies `∫|∇u|² + (π/2)|{u > 0} ∩ {x₂ = 0}|` at `γ` and `γ ± δ`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyCoherence {
    pub gammas: [f64; 3],
    /// From the half-angle series (the Dirichlet energy is conformally invariant).
    pub series_energy: [f64; 3],
    /// From `compute_energy` on split grid solves.
    pub grid_energy: [f64; 3],
    /// `E(γ) ≤ min E(γ ± δ) + tolerance` for both energies; informational.
    pub critical: bool,
}

pub fn energy_coherence(phi: &BoundaryData, gamma: f64, delta: f64, h: f64, tolerance: f64) -> Result<EnergyCoherence> {
    let gammas = [gamma, gamma - delta, gamma + delta];
    let on_circle = |t: f64| phi.on_circle(t);
    let mut series_energy = [0.0; 3];
    let mut grid_energy = [0.0; 3];
    for (j, &g) in gammas.iter().enumerate() {
        let s = tip_series(g, &on_circle, 1e-10)?;
        series_energy[j] = s.dirichlet_energy() + PI / 2.0 * (1.0 - g);
        grid_energy[j] = compute_energy(&tip_fd_solution(g, phi, h)?)?.total;
    }
    let ok = |e: &[f64; 3]| e[0] <= e[1].min(e[2]) + tolerance;
    Ok(EnergyCoherence { gammas, series_energy, grid_energy, critical: ok(&series_energy) && ok(&grid_energy) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos_half(t: f64) -> f64 {
        (t / 2.0).cos()
    }

    #[test]
    fn pullback_fixes_endpoints() {
        for g in [-0.5, 0.0, 0.3] {
            assert!((pullback_angle(g, PI).abs() - PI).abs() < 1e-12);
            assert!(pullback_angle(g, 0.0).abs() < 1e-12);
            assert!((pullback_angle(g, 1.0) + pullback_angle(g, -1.0)).abs() < 1e-12);
        }
        assert!((pullback_angle(0.0, 2.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn centred_tip_is_u0() {
        assert!((tip_coefficient(0.0, &cos_half).unwrap() - 1.0).abs() < 1e-12);
        let a = tip_coefficient(0.0, &|t| 2.5 * cos_half(t)).unwrap();
        assert!((a - 2.5).abs() < 1e-12);
    }

    #[test]
    fn flux_one_gives_centred_tip() {
        let prob = TipProblem::new(BoundaryData::cos_half(), FluxSpec::Constant { value: 1.0 }, (-0.5, 0.45));
        let sol = solve_free_boundary(&prob).unwrap();
        assert!(sol.gamma.abs() < 1e-6, "{}", sol.gamma);
        assert!(sol.residual.abs() < 1e-9);
    }

    #[test]
    fn larger_flux_lengthens_slit() {
        // a(γ) grows with γ: the tip approaches the circle, where φ ≈ 1.
        let prob = TipProblem::new(BoundaryData::cos_half(), FluxSpec::Constant { value: 1.05 }, (-0.6, 0.45));
        let sol = solve_free_boundary(&prob).unwrap();
        assert!(sol.gamma > 0.0);
        let below = sol.scan.iter().filter(|(_, v)| *v < 0.0).map(|(g, _)| *g).fold(f64::NEG_INFINITY, f64::max);
        let above = sol.scan.iter().filter(|(_, v)| *v > 0.0).map(|(g, _)| *g).fold(f64::INFINITY, f64::min);
        assert!(below < sol.gamma && sol.gamma < above);
    }

    #[test]
    fn scan_is_deterministic_and_linear() {
        let prob = TipProblem::new(BoundaryData::cos_half(), FluxSpec::Constant { value: 1.0 }, (-0.5, 0.45));
        let a = solve_free_boundary(&prob).unwrap();
        let b = solve_free_boundary(&prob).unwrap();
        assert_eq!(a, b);
        for g in [-0.4, 0.3] {
            let base = tip_coefficient(g, &cos_half).unwrap();
            let scaled = tip_coefficient(g, &|t| 3.0 * cos_half(t)).unwrap();
            assert!((scaled - 3.0 * base).abs() <= 1e-12 * scaled.abs());
        }
    }

    #[test]
    fn energy_is_stationary_at_unit_flux() {
        let ec = energy_coherence(&BoundaryData::cos_half(), 0.0, 0.05, 1.0 / 64.0, 1e-3).unwrap();
        assert!((ec.series_energy[0] - PI).abs() < 1e-9);
        assert!(ec.series_energy[0] <= ec.series_energy[1] && ec.series_energy[0] <= ec.series_energy[2]);
    }

    #[test]
    fn no_bracket_is_reported() {
        let prob = TipProblem::new(BoundaryData::cos_half(), FluxSpec::Constant { value: 10.0 }, (-0.5, 0.5));
        assert!(matches!(solve_free_boundary(&prob), Err(Error::NoBracket { .. })));
    }
}
