//! Short command-line forms of boundary data and flux laws.

use anyhow::{anyhow, bail, Context};
use slitkit::freeboundary::FluxSpec;
use slitkit::solver::BoundaryData;

fn numbers(list: &str) -> anyhow::Result<Vec<f64>> {
    list.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad number '{t}'")))
        .collect()
}

/// `cos_half`, `u0`, `tent`, `zero` or `half_angle:c0,c1,...`.
pub fn parse_phi(s: &str) -> anyhow::Result<BoundaryData> {
    let s = s.trim();
    Ok(match s {
        "cos_half" => BoundaryData::cos_half(),
        "u0" => BoundaryData::U0Flat,
        "tent" => BoundaryData::Tent,
        "zero" => BoundaryData::Zero,
        _ => match s.strip_prefix("half_angle:") {
            Some(rest) => BoundaryData::HalfAngle { coeffs: numbers(rest)? },
            None => bail!("unknown boundary data '{s}' (cos_half, u0, tent, zero, half_angle:c0,c1,...)"),
        },
    })
}

/// A constant such as `1.05`, or `poly:c0,c1,...` for `Σ c_j γ^j`.
pub fn parse_flux(s: &str) -> anyhow::Result<FluxSpec> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("poly:") {
        return Ok(FluxSpec::Polynomial { coeffs: numbers(rest)? });
    }
    let value = s.parse::<f64>().map_err(|_| anyhow!("unknown flux '{s}' (a number or poly:c0,c1,...)"))?;
    Ok(FluxSpec::Constant { value })
}

/// `lo,hi`.
pub fn parse_bracket(s: &str) -> anyhow::Result<[f64; 2]> {
    match numbers(s)?.as_slice() {
        [lo, hi] => Ok([*lo, *hi]),
        _ => bail!("bracket needs two numbers 'lo,hi'"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_forms() {
        assert_eq!(parse_phi("cos_half").unwrap(), BoundaryData::cos_half());
        assert_eq!(parse_phi("half_angle:1, -0.5").unwrap(), BoundaryData::HalfAngle { coeffs: vec![1.0, -0.5] });
        assert!(parse_phi("sine").is_err());
    }

    #[test]
    fn flux_forms() {
        assert_eq!(parse_flux("1.05").unwrap(), FluxSpec::Constant { value: 1.05 });
        assert_eq!(parse_flux("poly:1,0.2").unwrap(), FluxSpec::Polynomial { coeffs: vec![1.0, 0.2] });
        assert!(parse_bracket("0.1").is_err());
    }
}
