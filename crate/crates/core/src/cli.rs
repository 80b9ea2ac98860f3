//! Command-line front end. Exit codes: 0 success, 1 failed verification,
//! 2 configuration error, 3 solver failure, 4 I/O failure, 5 certificate
//! violation.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::algebra::{spectral_norm, Element, ElementKind};
use crate::error::Error;
use crate::expectation::estimate_hypothesis_constant;
use crate::projection::{linspace, square_summable_constant};
use crate::scenario::{Scenario, Setup, Stream};
use crate::unitary::{compare_with_transport, solve_unitary};
use crate::verify::{run_full_suite, ResidualReport, CHECK_NAMES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_CERTIFICATE: i32 = 5;

#[derive(Parser, Debug)]
#[command(
    name = "condexp",
    version,
    about = "Transport propagators for paths of conditional expectations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve along a time grid and write `t,quantity,value` CSV.
    Simulate(Common),
    /// Run the residual suite; one line per check.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Print check names without running.
        #[arg(long)]
        list: bool,
    },
    /// Report the hypothesis constant, its bound and related constants.
    EstimateConstants(Common),
    /// Compare the unitary implementation with the transport propagator.
    ComparePropagators(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print the fully-resolved scenario and exit.
    #[arg(long)]
    pub dump_config: bool,
}

enum Failure {
    Code(i32, String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_)
            | Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::OutOfInterval { .. } => EXIT_CONFIG,
            Error::Convergence { .. } | Error::PowerIteration { .. } | Error::Numerical(_) => {
                EXIT_SOLVER
            }
        };
        Failure::Code(code, e.to_string())
    }
}

type Outcome = std::result::Result<(String, i32), Failure>;

/// Runs the CLI; diagnostics go to `err`, reports to `out` unless `--output` is given.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_CONFIG;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    let common = match &cli.command {
        Command::Simulate(c)
        | Command::EstimateConstants(c)
        | Command::ComparePropagators(c)
        | Command::Verify { common: c, .. } => c.clone(),
    };
    let outcome = match &cli.command {
        Command::Verify { list: true, .. } => Ok((
            CHECK_NAMES.iter().map(|n| format!("{n}\n")).collect(),
            EXIT_OK,
        )),
        _ => dispatch(&cli.command, &common),
    };
    match outcome {
        Ok((text, code)) => match emit(&text, common.output.as_deref(), out) {
            Ok(()) => code,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                EXIT_IO
            }
        },
        Err(Failure::Code(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => out.write_all(text.as_bytes()),
    }
}

fn load(common: &Common) -> std::result::Result<Scenario, Failure> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Failure::Code(EXIT_CONFIG, "--config <path> is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Code(EXIT_IO, format!("{}: {e}", path.display())))?;
    Scenario::from_toml_with_seed(&text, common.seed).map_err(|e| {
        let code = Failure::from(e);
        match code {
            Failure::Code(c, msg) => Failure::Code(c, format!("{}: {msg}", path.display())),
        }
    })
}

fn dispatch(command: &Command, common: &Common) -> Outcome {
    let scenario = load(common)?;
    if common.dump_config {
        return Ok((scenario.to_toml_string()?, EXIT_OK));
    }
    match command {
        Command::Simulate(_) => simulate(&scenario),
        Command::Verify { .. } => verify(&scenario),
        Command::EstimateConstants(_) => estimate_constants(&scenario),
        Command::ComparePropagators(_) => compare_propagators(&scenario),
    }
}

/// Quantities written per time by `simulate`, in row order.
pub const SIMULATE_QUANTITIES: &[&str] = &[
    "norm",
    "isometry_residual",
    "projected_norm",
    "intertwining_residual",
    "multiplicativity_residual",
    "unital_residual",
    "codiagonal_residual",
    "d_norm",
    "unitary_intertwining_residual",
    "unitarity_residual",
];

/// Solves outward from 0 through the grid; returns solutions per grid point.
fn march_from_zero(
    setup: &Setup,
    grid: &[f64],
    init: &[Element],
) -> crate::Result<Vec<Vec<Element>>> {
    let p = &setup.propagator;
    let mut out: Vec<Option<Vec<Element>>> = vec![None; grid.len()];
    let split = grid.partition_point(|&t| t < 0.0);
    let mut state = (0.0, init.to_vec());
    for k in split..grid.len() {
        let next = p.apply_many(grid[k], state.0, &state.1)?;
        state = (grid[k], next.clone());
        out[k] = Some(next);
    }
    state = (0.0, init.to_vec());
    for k in (0..split).rev() {
        let next = p.apply_many(grid[k], state.0, &state.1)?;
        state = (grid[k], next.clone());
        out[k] = Some(next);
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

fn simulate(scenario: &Scenario) -> Outcome {
    let setup = scenario.build()?;
    let (lo, hi) = scenario.interval();
    let grid = linspace(lo, hi, scenario.samples.simulate_points);
    let n = scenario.algebra.dimension;
    let mut rng = scenario.rng(Stream::Samples, 0);
    let a = Element::random(n, &mut rng, ElementKind::General);
    let e0 = setup.ep.frame(0.0)?;
    let b1 = e0.expectation(&Element::random(n, &mut rng, ElementKind::General));
    let b2 = e0.expectation(&Element::random(n, &mut rng, ElementKind::General));
    let one = Element::identity(n);
    let init = vec![
        a.clone(),
        e0.expectation(&a),
        b1.clone(),
        b2.clone(),
        &b1 * &b2,
        one.clone(),
    ];
    let solutions = march_from_zero(&setup, &grid, &init)?;

    let mut unitary_grid = grid.clone();
    if !unitary_grid.contains(&0.0) {
        unitary_grid.push(0.0);
        unitary_grid.sort_by(f64::total_cmp);
    }
    let up = solve_unitary(
        setup.ep.path(),
        &unitary_grid,
        scenario.path.step,
        f64::INFINITY,
    )?;
    let base = setup.ep.path().base();

    let mut csv = String::from("t,quantity,value\n");
    for (&t, sol) in grid.iter().zip(&solutions) {
        let f = setup.ep.frame(t)?;
        let (alpha, gamma, g1, g2, g12, g_one) =
            (&sol[0], &sol[1], &sol[2], &sol[3], &sol[4], &sol[5]);
        let codiag = {
            let d = f.d_expectation(alpha);
            (&f.d_expectation(&f.expectation(alpha)) + &f.expectation(&d)).dist(&d)
        };
        let u = up.unitary(t)?;
        let mut uint: f64 = 0.0;
        for (p0, pt) in base.projections().iter().zip(f.system.projections()) {
            uint = uint.max((&(&u * p0) * &u.adjoint()).dist(pt));
        }
        let values = [
            alpha.two_norm(),
            (alpha.two_norm() - a.two_norm()).abs(),
            f.expectation(alpha).two_norm(),
            gamma.dist(&f.expectation(alpha)),
            g12.dist(&(g1 * g2)),
            g_one.dist(&one),
            codiag,
            spectral_norm(&f.d_matrix()),
            uint,
            (&u.adjoint() * &u).dist(&one),
        ];
        for (name, v) in SIMULATE_QUANTITIES.iter().zip(values) {
            let _ = writeln!(csv, "{t:.16e},{name},{v:.16e}");
        }
    }
    Ok((csv, EXIT_OK))
}

fn verify(scenario: &Scenario) -> Outcome {
    let reports = run_full_suite(scenario)?;
    let mut text = String::new();
    for r in &reports {
        text.push_str(&r.line());
        text.push('\n');
    }
    let code = if reports.iter().all(|r| r.pass) {
        EXIT_OK
    } else {
        EXIT_VERIFY
    };
    Ok((text, code))
}

fn unitary_grid(scenario: &Scenario) -> Vec<f64> {
    let (lo, hi) = scenario.interval();
    let step = scenario.path.step;
    let below = (-lo / step).round() as i64;
    let above = (hi / step).round() as i64;
    let mut grid: Vec<f64> = (-below..=above)
        .map(|k| (k as f64 * step).clamp(lo, hi))
        .collect();
    grid.dedup();
    grid
}

fn estimate_constants(scenario: &Scenario) -> Outcome {
    let setup = scenario.build()?;
    let j = scenario.interval();
    let g = scenario.samples.constant_grid;
    let seed = scenario.stream_seed(Stream::Samples);
    let count = scenario.samples.count;
    let certificate = |e: Error| match e {
        Error::Numerical(msg) => Failure::Code(EXIT_CERTIFICATE, msg),
        other => other.into(),
    };
    let est = estimate_hypothesis_constant(&setup.ep, j, count, g, seed).map_err(certificate)?;
    let fine =
        estimate_hypothesis_constant(&setup.ep, j, count, 2 * g, seed).map_err(certificate)?;
    let square = square_summable_constant(setup.ep.path(), j, g)?;
    let up = solve_unitary(
        setup.ep.path(),
        &unitary_grid(scenario),
        scenario.path.step,
        f64::INFINITY,
    )?;
    let k_j = up.derivative_bound()?;
    let delta = if est.empirical > 0.0 {
        (fine.empirical - est.empirical).abs() / est.empirical
    } else {
        (fine.empirical - est.empirical).abs()
    };
    let mut text = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(text, "{k} {v}");
    };
    line("interval", format!("{:.16e} {:.16e}", j.0, j.1));
    line("grid", g.to_string());
    line("samples", count.to_string());
    line("c_j_empirical", format!("{:.16e}", est.empirical));
    line("c_j_sampled", format!("{:.16e}", est.sampled));
    line("c_j_exact", format!("{:.16e}", est.exact));
    line("c_j_bound", format!("{:.16e}", est.bound));
    line("d_j", format!("{:.16e}", est.de_norm));
    line("quadrature_tolerance", format!("{:.16e}", est.tolerance()));
    line("d_square_summable", format!("{:.16e}", square.value));
    line("k_j", format!("{k_j:.16e}"));
    line("refined_grid", (2 * g).to_string());
    line("c_j_empirical_refined", format!("{:.16e}", fine.empirical));
    line("grid_doubling_delta", format!("{delta:.16e}"));
    let ok = est.certified() && fine.certified();
    line("certificate", if ok { "pass" } else { "fail" }.to_string());
    Ok((text, if ok { EXIT_OK } else { EXIT_CERTIFICATE }))
}

fn compare_propagators(scenario: &Scenario) -> Outcome {
    let setup = scenario.build()?;
    let mut grid = scenario.samples.times.clone();
    grid.push(0.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let up = solve_unitary(setup.ep.path(), &grid, scenario.path.step, f64::INFINITY)?;
    let mut rng = scenario.rng(Stream::Samples, 1);
    let n = scenario.algebra.dimension;
    let xs: Vec<Element> = (0..scenario.samples.solves)
        .map(|_| Element::random(n, &mut rng, ElementKind::General))
        .collect();
    let mut text = String::from("t on_range global\n");
    let (mut on_range, mut global) = (0.0f64, 0.0f64);
    for &t in &scenario.samples.times {
        let c = compare_with_transport(&up, &setup.propagator, t, &xs)?;
        let _ = writeln!(text, "{:.16e} {:.16e} {:.16e}", t, c.on_range, c.global);
        on_range = on_range.max(c.on_range);
        global = global.max(c.global);
    }
    let range =
        ResidualReport::thresholded("omega_vs_g_range", on_range, scenario.thresholds.integrated);
    let gap = if setup.base.len() <= 2 {
        ResidualReport::thresholded("omega_vs_g_global", global, scenario.thresholds.integrated)
    } else {
        ResidualReport::info("omega_vs_g_global", global)
    }
    .with("projections", setup.base.len());
    text.push_str(&range.line());
    text.push('\n');
    text.push_str(&gap.line());
    text.push('\n');
    Ok((text, if range.pass { EXIT_OK } else { EXIT_VERIFY }))
}
