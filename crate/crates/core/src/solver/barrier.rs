//! Discrete check that `v̄ = −U₀ + U₀²` is a barrier: `r·Δ_h v̄` bounded below near `Γ`.

use crate::geometry::{closest_point_frame, SlitGeometry};
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct BarrierReport {
    pub h: f64,
    /// Minimum of `r·Δ_h(−U₀+U₀²)` over the checked nodes.
    pub min: f64,
    pub argmin: Vec<f64>,
    /// Maximum of `|r·Δ_h U₀|` over the same nodes (flat sanity check).
    pub max_u0_residual: f64,
    pub nodes: usize,
}

/// Evaluates `r·Δ_h(−U₀ + U₀²)` at off-slit nodes of the grid of spacing `h` inside the ball of
/// radius `radius`, skipping nodes with `r < 4h` where the stencil cannot resolve `U₀`.
pub fn check_barrier(geom: &SlitGeometry, h: f64, radius: f64) -> Result<BarrierReport> {
    let n = geom.n();
    let m = (radius / h).floor() as i64;
    let field = |x: &[f64]| -> Result<(f64, f64)> {
        let f = closest_point_frame(geom, x)?;
        Ok((f.u0, f.r))
    };
    let mut min = f64::INFINITY;
    let mut argmin = vec![];
    let mut max_res: f64 = 0.0;
    let mut count = 0;
    let mut idx = vec![-m; n + 1];
    idx[n] = 0;
    loop {
        let x: Vec<f64> = idx.iter().map(|&i| i as f64 * h).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm + h < radius {
            let (u0, r) = field(&x)?;
            let on_slit = idx[n] == 0 && {
                let gx = if n == 1 { 0.0 } else { geom.g_derivs(x[0]).0 };
                x[n - 1] <= gx - h / 2.0
            };
            if !on_slit && r >= 4.0 * h {
                let v = -u0 + u0 * u0;
                let mut lap_v = 0.0;
                let mut lap_u = 0.0;
                for a in 0..=n {
                    for sgn in [-1.0, 1.0] {
                        let mut y = x.clone();
                        y[a] += sgn * h;
                        let (w0, _) = field(&y)?;
                        lap_v += -w0 + w0 * w0 - v;
                        lap_u += w0 - u0;
                    }
                }
                let val = r * lap_v / (h * h);
                if val < min {
                    min = val;
                    argmin = x.clone();
                }
                max_res = max_res.max((r * lap_u / (h * h)).abs());
                count += 1;
            }
        }
        let mut a = 0;
        loop {
            if a > n {
                return Ok(BarrierReport { h, min, argmin, max_u0_residual: max_res, nodes: count });
            }
            idx[a] += 1;
            let top = m;
            if idx[a] <= top {
                break;
            }
            idx[a] = if a == n { 0 } else { -m };
            a += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_barrier_positive() {
        let g = SlitGeometry::flat(1);
        let rep = check_barrier(&g, 1.0 / 32.0, 1.0).unwrap();
        assert!(rep.min > 0.2, "{rep:?}");
        assert!(rep.nodes > 100);
    }
}
