use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use slitkit::acceptance::{Suite, CRITERIA};
use slitkit::GeometrySpec;
use slitkit_cli::config::{ExperimentConfig, Kind};
use slitkit_cli::spec::{parse_bracket, parse_flux, parse_phi};
use slitkit_cli::{run, RunOutcome};

#[derive(Parser)]
#[command(name = "slitkit", version, about = "Harmonic functions in slit domains: solvers, expansions and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeometryArg {
    Flat,
    Parabola,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment, from a config file or from the defaults for its kind.
    Run {
        kind: Kind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        geometry: Option<GeometryArg>,
        #[arg(long)]
        k: Option<u32>,
        #[arg(long)]
        cells: Option<usize>,
        #[arg(long)]
        output: Option<String>,
    },
    /// Solve for the tip position where the tip coefficient meets the flux law.
    Freeboundary {
        /// cos_half, u0, tent, zero or half_angle:c0,c1,...
        #[arg(long, default_value = "cos_half")]
        phi: String,
        /// A number or poly:c0,c1,...
        #[arg(long = "G", default_value = "1")]
        flux: String,
        #[arg(long, default_value = "-0.5,0.45", allow_hyphen_values = true)]
        bracket: String,
        #[arg(long)]
        output: Option<String>,
    },
    /// Run the acceptance suite, or a single criterion.
    Acceptance {
        #[arg(long)]
        criterion: Option<u32>,
    },
    /// Print the default config for a kind as TOML.
    Config {
        #[arg(long, default_value = "rates")]
        kind: Kind,
    },
}

fn report(out: &RunOutcome) {
    for c in &out.checks {
        println!("{} {} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("wrote {} files to {}", out.files.len(), out.dir.display());
}

fn status(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { kind, config, geometry, k, cells, output } => {
            let mut cfg = match config {
                Some(path) => ExperimentConfig::load(&path)?,
                None => ExperimentConfig::default_for(kind),
            };
            if cfg.kind != kind {
                anyhow::bail!("config is for kind '{}', not '{}'", cfg.kind.name(), kind.name());
            }
            match geometry {
                Some(GeometryArg::Flat) => {
                    let n = cfg.geometry.n;
                    cfg.geometry = GeometrySpec::flat(n);
                }
                Some(GeometryArg::Parabola) => cfg.geometry = GeometrySpec::parabola(),
                None => {}
            }
            if let Some(k) = k {
                cfg.k = k;
            }
            if let Some(c) = cells {
                cfg.grid.cells = c;
            }
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            let out = run(&cfg)?;
            report(&out);
            Ok(status(out.pass()))
        }
        Command::Freeboundary { phi, flux, bracket, output } => {
            let mut cfg = ExperimentConfig::default_for(Kind::Freeboundary);
            cfg.data.phi = parse_phi(&phi)?;
            cfg.data.flux = parse_flux(&flux)?;
            cfg.data.bracket = parse_bracket(&bracket)?;
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            let out = run(&cfg)?;
            report(&out);
            Ok(status(out.pass()))
        }
        Command::Acceptance { criterion } => {
            let suite = Suite::new();
            let results = match criterion {
                Some(id) => {
                    if !CRITERIA.iter().any(|(i, _)| *i == id) {
                        anyhow::bail!("no criterion {id}; criteria are 1..={}", CRITERIA.len());
                    }
                    vec![suite.run(id)]
                }
                None => suite.run_all(),
            };
            for r in &results {
                println!("{}", r.line());
            }
            Ok(status(results.iter().all(|r| r.pass)))
        }
        Command::Config { kind } => {
            let text = ExperimentConfig::default_for(kind).to_toml().context("serializing config")?;
            print!("{text}");
            Ok(ExitCode::SUCCESS)
        }
    }
}
