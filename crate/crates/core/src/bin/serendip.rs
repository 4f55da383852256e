//! Command-line driver for solves, experiment suites and tables.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use serendip::bench::{
    convergence_study, emit_dof_table, emit_patchsize_table, run_suite, write_csv, write_outcomes, ExperimentConfig,
    Format, Material, PcKind, Problem,
};
use serendip::fe_basis::Family;
use serendip::krylov::StoppingNorm;
use serendip::multigrid::{Omega, PatchSmoothing};
use serendip::schwarz::CoarseSolver;

#[derive(Parser)]
#[command(name = "serendip", version, about = "Serendipity/tensor-product FEM with Schwarz and multigrid PCG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem on the finest level.
    Solve(SolveArgs),
    /// Solve every family/degree combination on each level from --from to --refine.
    Suite(SuiteArgs),
    /// Print DOF counts for the standard mesh sequences.
    Dofs(DofsArgs),
    /// Print interior vertex-patch sizes per degree.
    Patchsize(PatchsizeArgs),
    /// L2 error and observed order of the manufactured Poisson solutions.
    Converge(ConvergeArgs),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value = "poisson2d")]
    problem: Problem,
    /// Base mesh cells per axis, NX[,NY[,NZ]]; a single value is used for every axis.
    #[arg(long)]
    base_mesh: Option<String>,
    /// Refinements of the base mesh.
    #[arg(long, default_value_t = 2)]
    refine: usize,
    #[arg(long, default_value = "asm2")]
    pc: PcKind,
    #[arg(long, default_value = "direct")]
    coarse: CoarseSolver,
    #[arg(long, default_value_t = 1e-12)]
    rtol: f64,
    /// Residual norm for the stopping test: unpreconditioned or preconditioned.
    #[arg(long, default_value = "unpreconditioned")]
    norm: StoppingNorm,
    #[arg(long, default_value_t = 500)]
    maxit: usize,
    /// Smoother or preconditioner scaling, AUTO or a number.
    #[arg(long, default_value = "AUTO")]
    omega: String,
    /// Patch smoothing for mg and tg: richardson or chebyshev[DEGREE].
    #[arg(long, default_value = "richardson")]
    smoother: PatchSmoothing,
    #[arg(long, default_value_t = 1.0)]
    young: f64,
    #[arg(long, default_value_t = 0.3)]
    nu: f64,
    #[arg(long, default_value_t = 1.0)]
    gravity: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Exit nonzero if any solve fails to converge.
    #[arg(long)]
    strict: bool,
    /// Report zero for all timings so output is reproducible byte for byte.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "S")]
    family: Family,
    #[arg(long, default_value_t = 2)]
    degree: usize,
}

#[derive(Args)]
struct SuiteArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated families.
    #[arg(long, default_value = "S,Q")]
    family: String,
    /// Comma-separated degrees.
    #[arg(long, default_value = "2,3,4")]
    degree: String,
    /// First reported refinement level.
    #[arg(long, default_value_t = 0)]
    from: usize,
}

#[derive(Args)]
struct DofsArgs {
    /// Restrict to one problem.
    #[arg(long)]
    problem: Option<Problem>,
    #[arg(long, default_value = "2,3,4")]
    degree: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PatchsizeArgs {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 8)]
    max_degree: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "S")]
    family: Family,
    #[arg(long, default_value_t = 2)]
    degree: usize,
    #[arg(long, default_value_t = 0)]
    from: usize,
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|e| anyhow::anyhow!("bad list entry '{t}': {e}")))
        .collect()
}

fn parse_omega(s: &str) -> Result<Omega> {
    if s.eq_ignore_ascii_case("auto") {
        Ok(Omega::Auto)
    } else {
        Ok(Omega::Fixed(s.parse().with_context(|| format!("bad omega '{s}'"))?))
    }
}

fn config(c: &Common, family: Family, degree: usize, from: usize) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::new(c.problem, family, degree, c.refine, c.pc);
    if let Some(m) = &c.base_mesh {
        let mut cells: Vec<usize> = parse_list(m)?;
        if cells.len() == 1 {
            cells = vec![cells[0]; c.problem.dim()];
        }
        cfg.base_mesh = cells;
    }
    cfg.first_level = from;
    cfg.coarse = c.coarse;
    cfg.omega = parse_omega(&c.omega)?;
    cfg.smoothing = c.smoother;
    cfg.rtol = c.rtol;
    cfg.norm = c.norm;
    cfg.maxit = c.maxit;
    cfg.material = Material { young: c.young, poisson_ratio: c.nu, gravity: c.gravity };
    cfg.timing = !c.no_timing;
    cfg.validate()?;
    Ok(cfg)
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn solve(configs: &[ExperimentConfig], c: &Common) -> Result<bool> {
    let outcomes = run_suite(configs, |o| {
        let r = &o.row;
        eprintln!(
            "{} {}{} {} dofs={} its={} converged={}",
            r.problem, r.family, r.degree, r.mesh, r.dofs, r.iterations, r.converged
        );
    })?;
    write_outcomes(&outcomes, c.format, output(&c.out)?)?;
    Ok(outcomes.iter().all(|o| o.row.converged))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve(a) => {
            let cfg = config(&a.common, a.family, a.degree, a.common.refine)?;
            Ok(solve(&[cfg], &a.common)? || !a.common.strict)
        }
        Command::Suite(a) => {
            let mut configs = Vec::new();
            for family in parse_list::<Family>(&a.family)? {
                for k in parse_list::<usize>(&a.degree)? {
                    configs.push(config(&a.common, family, k, a.from)?);
                }
            }
            Ok(solve(&configs, &a.common)? || !a.common.strict)
        }
        Command::Dofs(a) => {
            let problems = match a.problem {
                Some(p) => vec![p],
                None => vec![Problem::Poisson2d, Problem::Poisson3d, Problem::Elasticity2d],
            };
            let rows = emit_dof_table(&problems, &parse_list(&a.degree)?);
            write_csv(&rows, output(&a.out)?)?;
            Ok(true)
        }
        Command::Patchsize(a) => {
            write_csv(&emit_patchsize_table(a.dim, a.max_degree)?, output(&a.out)?)?;
            Ok(true)
        }
        Command::Converge(a) => {
            if a.common.problem == Problem::Elasticity2d {
                bail!("convergence studies need a manufactured Poisson problem");
            }
            let cfg = config(&a.common, a.family, a.degree, a.from)?;
            write_csv(&convergence_study(&cfg)?, output(&a.common.out)?)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: at least one solve did not converge");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
