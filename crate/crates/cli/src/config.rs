//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slitkit::expansion::RateThresholds;
use slitkit::freeboundary::FluxSpec;
use slitkit::scalar::parse_rat;
use slitkit::solver::{BoundaryData, Domain};
use slitkit::{Error, GeometrySpec};

pub const SCHEMA_VERSION: u32 = 1;
/// Root directory prepended to relative output directories.
pub const OUTPUT_ENV: &str = "SLITKIT_OUTPUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Solve,
    Expand,
    Rates,
    Whitney,
    Neumann,
    Freeboundary,
    Barrier,
    Energy,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Solve => "solve",
            Kind::Expand => "expand",
            Kind::Rates => "rates",
            Kind::Whitney => "whitney",
            Kind::Neumann => "neumann",
            Kind::Freeboundary => "freeboundary",
            Kind::Barrier => "barrier",
            Kind::Energy => "energy",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Cartesian,
    Adapted,
}

/// One term `coeff · y^mu` of a polynomial given in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub mu: Vec<u32>,
    pub coeff: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub phi: BoundaryData,
    pub flux: FluxSpec,
    pub bracket: [f64; 2],
    /// Tangential polynomial `Q` for the Whitney and Neumann experiments.
    pub q: Vec<Term>,
    /// Foot parameter(s) `z'` of the base point on `Γ`.
    pub center: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_energy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub kind: GridKind,
    /// Cells per unit length across the edge (adapted grids).
    pub cells: usize,
    /// Spacing of Cartesian grids.
    pub h: f64,
    pub split: bool,
    pub richardson: bool,
    pub domain: Domain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    /// Largest annulus radius.
    pub lambda0: f64,
    pub count: usize,
    /// Radius of the ball used for tangent fits.
    pub fit_radius: f64,
    /// Approach distances for jet matching.
    pub distances: Vec<f64>,
    /// Foot parameters where traces are compared.
    pub trace_feet: Vec<f64>,
}

impl ScaleConfig {
    pub fn dyadic(&self) -> Vec<f64> {
        (0..self.count).map(|j| self.lambda0 / 2f64.powi(j as i32)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub rates: RateThresholds,
    /// Allowed shortfall of the quotient exponent.
    pub neumann_margin: f64,
    /// Relative trace deviation allowed against `−g'`.
    pub trace_tolerance: f64,
    /// Relative change of the barrier minimum allowed under refinement.
    pub barrier_stability: f64,
    /// Relative energy deviation allowed against `expected_energy`.
    pub energy_tolerance: f64,
    /// Residual `|a − G|` accepted at the free boundary.
    pub flux_residual: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            rates: RateThresholds::default(),
            neumann_margin: 0.3,
            trace_tolerance: 0.1,
            barrier_stability: 0.1,
            energy_tolerance: 0.01,
            flux_residual: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: Kind,
    pub k: u32,
    pub alpha: f64,
    pub output_dir: String,
    /// Reserved for sample-point jitter; no current experiment draws random numbers.
    pub seed: u64,
    pub geometry: GeometrySpec,
    pub data: DataSpec,
    pub grid: GridConfig,
    pub scales: ScaleConfig,
    pub thresholds: Thresholds,
}

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::ConfigInvalid { field: field.into(), message: message.into() }
}

impl ExperimentConfig {
    /// Defaults for each kind, matching the acceptance settings.
    pub fn default_for(kind: Kind) -> Self {
        let mut cfg = ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            kind,
            k: 0,
            alpha: 0.5,
            output_dir: format!("out/{}", kind.name()),
            seed: 0,
            geometry: GeometrySpec::parabola(),
            data: DataSpec {
                phi: BoundaryData::U0Flat,
                flux: FluxSpec::Constant { value: 1.0 },
                bracket: [-0.5, 0.45],
                q: vec![Term { mu: vec![2, 0], coeff: "1".into() }],
                center: vec![0.0],
                expected_energy: None,
            },
            grid: GridConfig {
                kind: GridKind::Adapted,
                cells: 128,
                h: 1.0 / 32.0,
                split: true,
                richardson: false,
                domain: Domain::unit_disc(2),
            },
            scales: ScaleConfig {
                lambda0: 0.5,
                count: 5,
                fit_radius: 0.25,
                distances: (0..5).map(|j| 0.2 / 2f64.powi(j)).collect(),
                trace_feet: vec![-0.5, -0.25, 0.25, 0.5],
            },
            thresholds: Thresholds::default(),
        };
        match kind {
            Kind::Solve | Kind::Expand => cfg.grid.cells = 64,
            Kind::Whitney => cfg.data.center = vec![0.3],
            Kind::Freeboundary => {
                cfg.geometry = GeometrySpec::flat(1);
                cfg.data.phi = BoundaryData::cos_half();
                cfg.data.center = vec![];
                cfg.data.q = vec![];
                cfg.grid.kind = GridKind::Cartesian;
                cfg.grid.h = 1.0 / 512.0;
                cfg.grid.domain = Domain::unit_disc(1);
            }
            Kind::Barrier => {
                cfg.grid.kind = GridKind::Cartesian;
                cfg.grid.domain = Domain::Disc { radius: 0.5, center: vec![0.0, 0.0] };
            }
            Kind::Energy => {
                cfg.geometry = GeometrySpec::flat(1);
                cfg.data.center = vec![];
                cfg.data.q = vec![];
                cfg.data.expected_energy = Some(std::f64::consts::PI);
                cfg.grid.kind = GridKind::Cartesian;
                cfg.grid.h = 1.0 / 256.0;
                cfg.grid.domain = Domain::unit_disc(1);
            }
            _ => {}
        }
        cfg
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        Self::from_toml(&text)
    }

    /// Checks every field, reporting the first offending one.
    pub fn validate(&self) -> Result<(), Error> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid("schema_version", format!("expected {SCHEMA_VERSION}, found {}", self.schema_version)));
        }
        if self.k > 2 {
            return Err(invalid("k", "only k = 0, 1, 2 are supported"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", "must lie in (0, 1)"));
        }
        if self.output_dir.trim().is_empty() {
            return Err(invalid("output_dir", "must not be empty"));
        }
        let geom = self.geometry.build()?;
        let n = geom.n();
        let needs_center = !matches!(self.kind, Kind::Freeboundary | Kind::Energy | Kind::Barrier | Kind::Solve);
        if needs_center && self.data.center.len() + 1 != n {
            return Err(invalid("data.center", format!("expected {} foot coordinates", n - 1)));
        }
        for (i, t) in self.data.q.iter().enumerate() {
            if t.mu.len() != n || t.mu[n - 1] != 0 {
                return Err(invalid(&format!("data.q[{i}].mu"), format!("needs {n} exponents with the last one 0")));
            }
            parse_rat(&t.coeff).map_err(|e| invalid(&format!("data.q[{i}].coeff"), e.to_string()))?;
        }
        let [lo, hi] = self.data.bracket;
        if !(-1.0 < lo && lo < hi && hi < 1.0) {
            return Err(invalid("data.bracket", "need -1 < lo < hi < 1"));
        }
        if self.grid.cells < 4 {
            return Err(invalid("grid.cells", "need at least 4 cells"));
        }
        if !(self.grid.h > 0.0 && self.grid.h <= 0.5) {
            return Err(invalid("grid.h", "must lie in (0, 1/2]"));
        }
        if self.grid.kind == GridKind::Adapted && n != 2 {
            return Err(invalid("grid.kind", "adapted grids need n = 2"));
        }
        if self.scales.count < 4 {
            return Err(invalid("scales.count", "need at least 4 scales"));
        }
        if !(self.scales.lambda0 > 0.0) || !(self.scales.fit_radius > 0.0) {
            return Err(invalid("scales", "radii must be positive"));
        }
        if self.scales.distances.iter().any(|d| !(*d > 0.0)) {
            return Err(invalid("scales.distances", "must be positive"));
        }
        let t = &self.thresholds;
        let r = &t.rates;
        if !(r.margin >= 0.0 && r.max_residual > 0.0 && r.unusable_residual >= r.max_residual) {
            return Err(invalid("thresholds.rates", "need margin >= 0 and 0 < max_residual <= unusable_residual"));
        }
        for (name, v) in [
            ("thresholds.neumann_margin", t.neumann_margin),
            ("thresholds.trace_tolerance", t.trace_tolerance),
            ("thresholds.barrier_stability", t.barrier_stability),
            ("thresholds.energy_tolerance", t.energy_tolerance),
            ("thresholds.flux_residual", t.flux_residual),
        ] {
            if !(v >= 0.0) {
                return Err(invalid(name, "must be non-negative"));
            }
        }
        Ok(())
    }

    /// Output directory with the environment root applied to relative paths.
    pub fn resolved_output(&self) -> PathBuf {
        let dir = PathBuf::from(&self.output_dir);
        match std::env::var_os(OUTPUT_ENV) {
            Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
            _ => dir,
        }
    }
}
