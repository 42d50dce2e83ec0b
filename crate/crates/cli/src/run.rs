//! Runs one experiment and writes its reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};
use slitkit::expansion::{derivative_rate_checks, fit_tangent, rate_report, AdaptedField, CartesianField, FitOptions, SlitField};
use slitkit::freeboundary::{solve_free_boundary, TipProblem};
use slitkit::neumann::{constant_t, flat_normal_derivative, foot, neumann_rate, quotient, shifted_laplacian, trace_check};
use slitkit::scalar::parse_rat;
use slitkit::solver::{check_barrier, compute_energy, solve_adapted, solve_fd, AdaptedGrid, Domain, GridSolution, GridSpec, Rhs};
use slitkit::whitney::{build_mollifier, verify_jet_match, YPolynomial};
use slitkit::{gamma_jet, Poly, Rat, SlitGeometry};

use crate::config::{ExperimentConfig, GridKind, Kind, Term};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Check { name: name.into(), pass, detail }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
}

impl RunOutcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    kind: &'a str,
    schema_version: u32,
    config_sha256: String,
    slitkit_version: &'a str,
    cli_version: &'a str,
    seed: u64,
    wall_time_s: f64,
    pass: bool,
    files: Vec<String>,
    checks: &'a [Check],
}

/// Report files and checks produced by an experiment, before anything is written.
#[derive(Default)]
struct Report {
    files: Vec<(String, String)>,
    checks: Vec<Check>,
}

impl Report {
    fn file(&mut self, name: &str, body: String) {
        self.files.push((name.into(), body));
    }
}

/// Validates `cfg`, runs it and writes the reports, `checks.csv`, `config.toml` and
/// `manifest.toml` into the resolved output directory.
pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<RunOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let report = compute(cfg).with_context(|| format!("{} experiment failed", cfg.kind.name()))?;
    let wall = start.elapsed().as_secs_f64();

    let dir = cfg.resolved_output();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let config_text = cfg.to_toml()?;
    let mut files = report.files;
    files.push(("checks.csv".into(), checks_csv(&report.checks)));
    files.push(("config.toml".into(), config_text.clone()));
    let mut written = Vec::new();
    for (name, body) in &files {
        let path = dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    let manifest = Manifest {
        kind: cfg.kind.name(),
        schema_version: cfg.schema_version,
        config_sha256: hex(&Sha256::digest(config_text.as_bytes())),
        slitkit_version: slitkit::VERSION,
        cli_version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        wall_time_s: wall,
        pass: report.checks.iter().all(|c| c.pass),
        files: files.iter().map(|(n, _)| n.clone()).collect(),
        checks: &report.checks,
    };
    let path = dir.join("manifest.toml");
    std::fs::write(&path, toml::to_string(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(RunOutcome { dir, files: written, checks: report.checks })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn checks_csv(checks: &[Check]) -> String {
    let mut s = String::from("check,pass,detail\n");
    for c in checks {
        let _ = writeln!(s, "{},{},\"{}\"", c.name, c.pass, c.detail.replace('"', "'"));
    }
    s
}

fn compute(cfg: &ExperimentConfig) -> anyhow::Result<Report> {
    let geom = cfg.geometry.build()?;
    match cfg.kind {
        Kind::Solve => solve_kind(cfg, &geom),
        Kind::Expand | Kind::Rates => expand_kind(cfg, &geom),
        Kind::Whitney => whitney_kind(cfg, &geom),
        Kind::Neumann => neumann_kind(cfg, &geom),
        Kind::Freeboundary => freeboundary_kind(cfg),
        Kind::Barrier => barrier_kind(cfg, &geom),
        Kind::Energy => energy_kind(cfg, &geom),
    }
}

/// Richardson extrapolation only applies to adapted grids.
fn solve(cfg: &ExperimentConfig, geom: &SlitGeometry) -> anyhow::Result<GridSolution> {
    let n = geom.n();
    let g = &cfg.grid;
    Ok(match g.kind {
        GridKind::Adapted => GridSolution::Adapted(solve_adapted(
            geom,
            &cfg.data.phi,
            &Rhs::zero(n),
            &AdaptedGrid::standard(g.cells),
            g.richardson,
        )?),
        GridKind::Cartesian => {
            let spec = GridSpec { h: g.h, domain: g.domain.clone(), split: g.split };
            GridSolution::Cartesian(solve_fd(geom, &cfg.data.phi, &Rhs::zero(n), &spec)?)
        }
    })
}

fn field_of(sol: &GridSolution) -> Box<dyn SlitField + '_> {
    match sol {
        GridSolution::Adapted(s) => Box::new(AdaptedField::new(s)),
        GridSolution::Cartesian(s) => Box::new(CartesianField::new(s)),
    }
}

fn center_or_origin(cfg: &ExperimentConfig, n: usize) -> Vec<f64> {
    if cfg.data.center.len() + 1 == n {
        cfg.data.center.clone()
    } else {
        vec![0.0; n - 1]
    }
}

fn solve_kind(cfg: &ExperimentConfig, geom: &SlitGeometry) -> anyhow::Result<Report> {
    let n = geom.n();
    let sol = solve(cfg, geom)?;
    let field = field_of(&sol);
    let (z, nu) = foot(geom, &center_or_origin(cfg, n))?;
    let mut profile = String::from("t,u_above,u_below\n");
    let mut finite = true;
    for j in 1..=32 {
        let t = 0.5 * j as f64 / 32.0;
        let at = |s: f64| {
            let mut x: Vec<f64> = z.iter().zip(&nu).map(|(a, b)| a + s * b).collect();
            x.push(0.0);
            field.value(&x)
        };
        let (a, b) = (at(t), at(-t));
        finite &= a.is_none_or(f64::is_finite) && b.is_none_or(f64::is_finite);
        let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:e}"));
        let _ = writeln!(profile, "{t},{},{}", fmt(a), fmt(b));
    }
    let finite_grid = sol.values().iter().all(|v| v.is_finite());
    let mut rep = Report::default();
    let dims: Vec<String> = sol.dims().iter().map(|d| d.to_string()).collect();
    rep.file(
        "grid.csv",
        format!("grading,h,dims,nodes\n{},{:e},{},{}\n", sol.grading(), sol.h(), dims.join("x"), sol.values().len()),
    );
    rep.file("profile.csv", profile);
    rep.checks.push(Check::new("finite", finite && finite_grid, format!("{} nodes", sol.values().len())));
    Ok(rep)
}

fn expand_kind(cfg: &ExperimentConfig, geom: &SlitGeometry) -> anyhow::Result<Report> {
    let sol = solve(cfg, geom)?;
    let field = field_of(&sol);
    let zp = cfg.data.center.clone();
    let (z, _) = foot(geom, &zp)?;
    let degree = cfg.k + 1;
    let opts = FitOptions { lambda0: cfg.scales.fit_radius, alpha: cfg.alpha, ..FitOptions::default() };
    let p0 = fit_tangent(field.as_ref(), &z, degree, &opts)?;
    let mut rep = Report::default();
    rep.file("p0.csv", p0.to_csv());
    if cfg.kind == Kind::Expand {
        rep.checks.push(Check::new("fit", true, format!("degree {degree}, {} terms", p0.terms().count())));
        return Ok(rep);
    }
    let scales = cfg.scales.dyadic();
    let target = degree as f64 + cfg.alpha;
    let thr = &cfg.thresholds.rates;
    let r = rate_report(field.as_ref(), &p0, &z, &scales, target, thr)?;
    rep.file("rates.csv", r.to_csv());
    rep.file("rates_summary.csv", r.summary_csv());
    rep.file("rates.svg", r.to_svg());
    rep.checks.push(Check::new(
        "tangent_rate",
        r.pass,
        format!("exponent {:.3}, target {target}, residual {:.3}", r.fitted_exponent, r.residual),
    ));
    let zr = zp
        .iter()
        .map(|v| Rat::from_float(*v).ok_or_else(|| anyhow::anyhow!("non-finite foot coordinate {v}")))
        .collect::<anyhow::Result<Vec<Rat>>>()?;
    let jet = gamma_jet(geom, &zr, degree + 2)?;
    let g = derivative_rate_checks(field.as_ref(), &p0, degree, &jet, &z, &scales, 1, target, thr)?;
    rep.file("gradient_rates.csv", g.to_csv());
    rep.file("gradient_rates.svg", g.to_svg());
    rep.checks.push(Check::new(
        "gradient_rate",
        g.pass,
        format!("exponent {:.3}, target {target}, residual {:.3}", g.fitted_exponent, g.residual),
    ));
    Ok(rep)
}

fn q_poly(n: usize, terms: &[Term]) -> anyhow::Result<Poly<Rat>> {
    let mut q = Poly::zero(n);
    for t in terms {
        q.add_term(t.mu.clone(), parse_rat(&t.coeff)?);
    }
    Ok(q)
}

fn whitney_kind(cfg: &ExperimentConfig, geom: &SlitGeometry) -> anyhow::Result<Report> {
    let n = geom.n();
    let moll = build_mollifier(n, cfg.k)?;
    let q = YPolynomial::new(q_poly(n, &cfg.data.q)?.to_f64())?;
    let s = cfg.data.center.first().copied().unwrap_or(0.0);
    let tab = verify_jet_match(&q, geom, &moll, s, &cfg.scales.distances, 1)?;
    let need = cfg.k as f64 + 1.0;
    let mut rep = Report::default();
    let mut csv = tab.to_csv();
    csv.push_str(&format!("normal,{:e},{}\n", tab.normal_derivative.last().copied().unwrap_or(0.0), tab.normal_rate));
    rep.file("defects.csv", csv);
    for row in &tab.rows {
        rep.checks.push(Check::new(
            &format!("order_{}", row.order),
            row.approach_rate >= need,
            format!("rate {:.3}, need {need}", row.approach_rate),
        ));
    }
    rep.checks.push(Check::new("normal", tab.normal_rate >= need, format!("rate {:.3}, need {need}", tab.normal_rate)));
    Ok(rep)
}

fn neumann_kind(cfg: &ExperimentConfig, geom: &SlitGeometry) -> anyhow::Result<Report> {
    let n = geom.n();
    let mut rep = Report::default();
    let q: BTreeMap<_, Rat> = q_poly(n, &cfg.data.q)?.terms().map(|(m, c)| (m.clone(), c.clone())).collect();
    let t = constant_t(n, cfg.k, &q, &BTreeMap::new())?;
    rep.file("family.csv", t.to_csv());
    let harmonic = shifted_laplacian(&t).is_zero();
    let neumann = flat_normal_derivative(&t).is_zero();
    rep.checks.push(Check::new("family", harmonic && neumann, format!("T = {}", t.pretty())));
    if n != 2 || cfg.grid.kind != GridKind::Adapted {
        return Ok(rep);
    }
    let sol = solve(cfg, geom)?;
    let field = field_of(&sol);
    let (z, _) = foot(geom, &cfg.data.center)?;
    let mut center = z.clone();
    center.push(0.0);
    let w = quotient(field.as_ref(), 0, &center, cfg.scales.lambda0)?;
    let degree = cfg.k + 2;
    let target = degree as f64 + cfg.alpha;
    let thr = slitkit::expansion::RateThresholds { margin: cfg.thresholds.neumann_margin, ..cfg.thresholds.rates.clone() };
    let opts = FitOptions { lambda0: cfg.scales.fit_radius, alpha: cfg.alpha, ..FitOptions::default() };
    let r = neumann_rate(&w, &cfg.data.center, degree, &opts, &cfg.scales.dyadic(), target, &thr)?;
    rep.file("quotient_rates.csv", r.rate.to_csv());
    rep.file("quotient_rates.svg", r.rate.to_svg());
    rep.file("t0.csv", r.t0.to_csv());
    let mut normal = String::from("scale,sup_w_nu\n");
    for (l, v) in &r.normal {
        let _ = writeln!(normal, "{l:e},{v:e}");
    }
    rep.file("normal.csv", normal);
    rep.checks.push(Check::new(
        "quotient_rate",
        r.rate.pass,
        format!("exponent {:.3}, target {target}, holder {:.3}", r.rate.fitted_exponent, r.holder),
    ));
    let tc = trace_check(&w, &cfg.scales.trace_feet)?;
    let mut csv = String::from("foot,trace,expected\n");
    for ((f, a), b) in tc.feet.iter().zip(&tc.traces).zip(&tc.expected) {
        let _ = writeln!(csv, "{f},{a:e},{b:e}");
    }
    rep.file("trace.csv", csv);
    rep.checks.push(Check::new(
        "trace",
        tc.relative_error <= cfg.thresholds.trace_tolerance,
        format!("relative error {:.3e}", tc.relative_error),
    ));
    Ok(rep)
}

fn freeboundary_kind(cfg: &ExperimentConfig) -> anyhow::Result<Report> {
    let [lo, hi] = cfg.data.bracket;
    let prob = TipProblem::new(cfg.data.phi.clone(), cfg.data.flux.clone(), (lo, hi));
    let sol = solve_free_boundary(&prob)?;
    let mut rep = Report::default();
    rep.file("free_boundary.csv", sol.to_csv());
    rep.file("coefficients.csv", sol.coefficients_csv());
    let mut scan = String::from("gamma,a_minus_g\n");
    for (g, v) in &sol.scan {
        let _ = writeln!(scan, "{g:e},{v:e}");
    }
    rep.file("scan.csv", scan);
    rep.checks.push(Check::new(
        "flux_balance",
        sol.residual.abs() <= cfg.thresholds.flux_residual,
        format!("gamma* {:.9}, a {:.9}, residual {:.1e}", sol.gamma, sol.a, sol.residual),
    ));
    Ok(rep)
}

fn barrier_kind(cfg: &ExperimentConfig, geom: &SlitGeometry) -> anyhow::Result<Report> {
    let radius = match &cfg.grid.domain {
        Domain::Disc { radius, .. } => *radius,
        Domain::Box { half_width } => *half_width,
    };
    let h = cfg.grid.h;
    let coarse = check_barrier(geom, h, radius)?;
    let fine = check_barrier(geom, h / 2.0, radius)?;
    let mut csv = String::from("h,min,argmin,max_u0_residual,nodes\n");
    for b in [&coarse, &fine] {
        let arg: Vec<String> = b.argmin.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(csv, "{:e},{:e},{},{:e},{}", b.h, b.min, arg.join(" "), b.max_u0_residual, b.nodes);
    }
    let mut rep = Report::default();
    rep.file("barrier.csv", csv);
    let change = (fine.min - coarse.min).abs() / coarse.min.abs();
    rep.checks.push(Check::new("positive", coarse.min > 0.0 && fine.min > 0.0, format!("min {:.4} -> {:.4}", coarse.min, fine.min)));
    rep.checks.push(Check::new("stable", change <= cfg.thresholds.barrier_stability, format!("relative change {change:.3}")));
    Ok(rep)
}

fn energy_kind(cfg: &ExperimentConfig, geom: &SlitGeometry) -> anyhow::Result<Report> {
    let mut grid = cfg.clone();
    grid.grid.kind = GridKind::Cartesian;
    let sol = solve(&grid, geom)?;
    let e = compute_energy(&sol)?;
    let mut rep = Report::default();
    rep.file("energy.csv", format!("gradient,plate,total\n{:e},{:e},{:e}\n", e.gradient, e.plate, e.total));
    if let Some(expected) = cfg.data.expected_energy {
        let rel = (e.total - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
        rep.checks.push(Check::new(
            "energy",
            rel <= cfg.thresholds.energy_tolerance,
            format!("total {:.6}, expected {expected:.6}, relative {rel:.2e}", e.total),
        ));
    } else {
        rep.checks.push(Check::new("energy", e.total.is_finite(), format!("total {:.6}", e.total)));
    }
    Ok(rep)
}
