//! Experiment driver: configurations, result rows, DOF and patch-size
//! tables, and convergence studies.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::assembly::{
    closed_form_dof_count, l2_error, plane_stress_lame, Discretization, Forcing, ManufacturedSolution, ProblemSpec,
};
use crate::error::{invalid, Error, Result};
use crate::fe_basis::{Family, MAX_DEGREE};
use crate::krylov::{pcg, Identity, LinearOperator, PcgOptions, SolveReport, StoppingNorm};
use crate::mesh::{refine_uniform, DirichletSelector, Side, StructuredMesh};
use crate::multigrid::{build_multigrid, build_two_grid, MgOptions, Omega, PatchSmoothing};
use crate::schwarz::{patch_dof_count, AsmMode, AsmPreconditioner, CoarseSolver, PatchShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Problem {
    #[serde(rename = "poisson2d")]
    Poisson2d,
    #[serde(rename = "poisson3d")]
    Poisson3d,
    #[serde(rename = "elasticity2d")]
    Elasticity2d,
}

impl Problem {
    pub fn dim(self) -> usize {
        match self {
            Problem::Poisson3d => 3,
            _ => 2,
        }
    }

    pub fn default_base_mesh(self) -> Vec<usize> {
        match self {
            Problem::Poisson2d => vec![8, 8],
            Problem::Poisson3d => vec![4, 4, 4],
            Problem::Elasticity2d => vec![125, 5],
        }
    }

    pub fn value_dim(self) -> usize {
        match self {
            Problem::Elasticity2d => 2,
            _ => 1,
        }
    }

    fn manufactured(self) -> Option<ManufacturedSolution> {
        match self {
            Problem::Poisson2d => Some(ManufacturedSolution::Poisson2d),
            Problem::Poisson3d => Some(ManufacturedSolution::Poisson3d),
            Problem::Elasticity2d => None,
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::Poisson2d => "poisson2d",
            Problem::Poisson3d => "poisson3d",
            Problem::Elasticity2d => "elasticity2d",
        })
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson2d" => Ok(Problem::Poisson2d),
            "poisson3d" => Ok(Problem::Poisson3d),
            "elasticity2d" => Ok(Problem::Elasticity2d),
            _ => Err(invalid(format!("unknown problem '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PcKind {
    None,
    Patch,
    Asm2,
    Mg,
    /// Multiplicative two-grid: patch smoothing around an exact Q_1 correction.
    Tg,
}

impl fmt::Display for PcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PcKind::None => "none",
            PcKind::Patch => "patch",
            PcKind::Asm2 => "asm2",
            PcKind::Mg => "mg",
            PcKind::Tg => "tg",
        })
    }
}

impl FromStr for PcKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PcKind::None),
            "patch" => Ok(PcKind::Patch),
            "asm2" => Ok(PcKind::Asm2),
            "mg" => Ok(PcKind::Mg),
            "tg" => Ok(PcKind::Tg),
            _ => Err(invalid(format!("unknown preconditioner '{s}'"))),
        }
    }
}

/// Cantilever material and load.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material {
    pub young: f64,
    pub poisson_ratio: f64,
    pub gravity: f64,
}

impl Default for Material {
    fn default() -> Self {
        Self { young: 1.0, poisson_ratio: 0.3, gravity: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub family: Family,
    pub degree: usize,
    pub base_mesh: Vec<usize>,
    /// Refinements of the base mesh for the finest level.
    pub refine: usize,
    /// First refinement level reported by a suite run.
    pub first_level: usize,
    pub pc: PcKind,
    pub coarse: CoarseSolver,
    pub omega: Omega,
    /// Patch smoothing inside `mg` and `tg`.
    pub smoothing: PatchSmoothing,
    pub rtol: f64,
    pub norm: StoppingNorm,
    pub maxit: usize,
    pub material: Material,
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn new(problem: Problem, family: Family, degree: usize, refine: usize, pc: PcKind) -> Self {
        Self {
            problem,
            family,
            degree,
            base_mesh: problem.default_base_mesh(),
            refine,
            first_level: refine,
            pc,
            coarse: CoarseSolver::Direct,
            omega: Omega::Auto,
            smoothing: PatchSmoothing::Richardson,
            rtol: 1e-12,
            norm: StoppingNorm::Unpreconditioned,
            maxit: 500,
            material: Material::default(),
            timing: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_DEGREE).contains(&self.degree) {
            return Err(invalid(format!("degree {} outside 1..={MAX_DEGREE}", self.degree)));
        }
        if self.family == Family::P {
            return Err(invalid("P_k is only available for counting"));
        }
        if self.base_mesh.len() != self.problem.dim() || self.base_mesh.contains(&0) {
            return Err(invalid(format!("base mesh must have {} positive entries", self.problem.dim())));
        }
        if self.first_level > self.refine {
            return Err(invalid("first reported level exceeds refinement count"));
        }
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return Err(invalid("rtol must lie in (0, 1)"));
        }
        if let Omega::Fixed(w) = self.omega {
            if !(w > 0.0 && w.is_finite()) {
                return Err(invalid("omega must be positive"));
            }
        }
        let m = self.material;
        if self.problem == Problem::Elasticity2d && !(m.young > 0.0 && m.poisson_ratio >= 0.0 && m.poisson_ratio < 0.5) {
            return Err(invalid("material needs E > 0 and 0 <= nu < 0.5"));
        }
        Ok(())
    }

    pub fn base(&self) -> Result<StructuredMesh> {
        let dim = self.problem.dim();
        let upper: Vec<f64> = match self.problem {
            // the beam is 25 long and 1 high
            Problem::Elasticity2d => vec![25.0, 1.0],
            _ => vec![1.0; dim],
        };
        StructuredMesh::new(dim, &self.base_mesh, &vec![0.0; dim], &upper)
    }

    pub fn spec(&self) -> Result<ProblemSpec> {
        match self.problem {
            Problem::Elasticity2d => {
                let (lambda, mu) = plane_stress_lame(self.material.young, self.material.poisson_ratio);
                ProblemSpec::elasticity(
                    lambda,
                    mu,
                    Forcing::Constant(vec![0.0, -self.material.gravity]),
                    DirichletSelector::sides([(0, Side::Low)]),
                )
            }
            p => Ok(ProblemSpec::poisson(
                Forcing::Manufactured(p.manufactured().unwrap()),
                DirichletSelector::all(p.dim()),
            )),
        }
    }
}

/// One line of the results table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub problem: Problem,
    pub family: String,
    pub degree: usize,
    pub mesh: String,
    pub dofs: usize,
    pub iterations: usize,
    pub converged: bool,
    pub kappa_est: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub l2_error: Option<f64>,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
}

/// A result row together with the full solver report.
#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub row: ResultRow,
    pub pc: String,
    pub report: SolveReport,
}

fn seconds(t: Instant, timing: bool) -> f64 {
    if timing {
        t.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

/// Solve `config` on refinement level `level` of its base mesh.
pub fn run_level(config: &ExperimentConfig, level: usize) -> Result<Outcome> {
    config.validate()?;
    let spec = config.spec()?;
    let hierarchy = refine_uniform(&config.base()?, level);
    let t0 = Instant::now();
    let (disc, pc): (Discretization, Box<dyn LinearOperator>) = match config.pc {
        PcKind::Mg => {
            let opts = MgOptions { omega: config.omega, smoothing: config.smoothing, ..MgOptions::default() };
            let mg = build_multigrid(&hierarchy, config.family, config.degree, &spec, &opts)?;
            (mg.finest().clone(), Box::new(mg))
        }
        pc => {
            let disc = Discretization::new(hierarchy.finest(), config.family, config.degree, &spec)?;
            let op: Box<dyn LinearOperator> = match pc {
                PcKind::None => Box::new(Identity(disc.num_dofs())),
                PcKind::Tg => {
                    let opts = MgOptions { omega: config.omega, smoothing: config.smoothing, ..MgOptions::default() };
                    Box::new(build_two_grid(&disc, &opts)?)
                }
                _ => {
                    let mode = if pc == PcKind::Patch { AsmMode::PatchOnly } else { AsmMode::TwoLevel };
                    let mut asm = AsmPreconditioner::build(&disc, mode, config.coarse)?;
                    if let Omega::Fixed(w) = config.omega {
                        asm.set_omega(w);
                    }
                    Box::new(asm)
                }
            };
            (disc, op)
        }
    };
    let setup_seconds = seconds(t0, config.timing);
    let b = disc.rhs()?;
    let opts = PcgOptions { rtol: config.rtol, maxit: config.maxit, norm: config.norm, ..PcgOptions::default() };
    let t1 = Instant::now();
    let (x, mut report) = pcg(&disc.operator, &b, pc.as_ref(), &opts, None)?;
    let solve_seconds = seconds(t1, config.timing);
    report.setup_seconds = setup_seconds;
    report.solve_seconds = solve_seconds;
    let l2 = config
        .problem
        .manufactured()
        .map(|m| l2_error(&disc.dofmap, &disc.basis, &x, |p| m.exact(p)));
    let row = ResultRow {
        problem: config.problem,
        family: config.family.to_string(),
        degree: config.degree,
        mesh: disc.mesh().descriptor(),
        dofs: disc.num_dofs(),
        iterations: report.iterations,
        converged: report.converged,
        kappa_est: report.kappa,
        lambda_min: report.lambda_min,
        lambda_max: report.lambda_max,
        l2_error: l2,
        setup_seconds,
        solve_seconds,
    };
    Ok(Outcome { row, pc: config.pc.to_string(), report })
}

/// Run every config at each level `first_level..=refine`, in order.
pub fn run_suite(configs: &[ExperimentConfig], mut on_row: impl FnMut(&Outcome)) -> Result<Vec<Outcome>> {
    let mut out = Vec::new();
    for c in configs {
        c.validate()?;
        for level in c.first_level..=c.refine {
            let o = run_level(c, level)?;
            on_row(&o);
            out.push(o);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(invalid(format!("unknown format '{s}'"))),
        }
    }
}

fn io_error(e: impl fmt::Display) -> Error {
    invalid(format!("write failed: {e}"))
}

/// Serialize records as CSV with a header row, LF line endings.
pub fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for r in rows {
        w.serialize(r).map_err(io_error)?;
    }
    w.flush().map_err(io_error)
}

pub fn write_outcomes(outcomes: &[Outcome], format: Format, mut out: impl Write) -> Result<()> {
    match format {
        Format::Csv => {
            let rows: Vec<&ResultRow> = outcomes.iter().map(|o| &o.row).collect();
            write_csv(&rows, out)
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, outcomes).map_err(io_error)?;
            writeln!(out).map_err(io_error)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DofRow {
    pub problem: Problem,
    pub family: String,
    pub degree: usize,
    pub mesh: String,
    /// Refinements of the base mesh.
    pub level: usize,
    pub dofs: usize,
}

/// Standard DOF tables: 2D Poisson on 8^2 refined 2..=6, 3D Poisson on 4^3
/// refined 2..=4, elasticity on 125x5 refined 2..=5; S and Q, k = 2..4.
pub fn standard_dof_configs() -> Vec<(Problem, std::ops::RangeInclusive<usize>)> {
    vec![(Problem::Poisson2d, 2..=6), (Problem::Poisson3d, 2..=4), (Problem::Elasticity2d, 2..=5)]
}

pub fn emit_dof_table(problems: &[Problem], degrees: &[usize]) -> Vec<DofRow> {
    let mut rows = Vec::new();
    for (problem, levels) in standard_dof_configs() {
        if !problems.contains(&problem) {
            continue;
        }
        for family in [Family::S, Family::Q] {
            for &k in degrees {
                for level in levels.clone() {
                    let cells: Vec<usize> = problem.default_base_mesh().iter().map(|n| n << level).collect();
                    let dofs = closed_form_dof_count(&cells, family, k, problem.value_dim());
                    let mesh = cells.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x");
                    rows.push(DofRow { problem, family: family.to_string(), degree: k, mesh, level, dofs });
                }
            }
        }
    }
    rows
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PatchSizeRow {
    pub r: usize,
    #[serde(rename = "Pr")]
    pub p: usize,
    #[serde(rename = "Sr")]
    pub s: usize,
    #[serde(rename = "Qr")]
    pub q: usize,
}

/// Interior vertex-patch DOF counts for degrees `1..=max_degree`: P on the
/// 6-triangle (2D) or 24-tetrahedron (3D) patch, S and Q on 4 or 8 boxes.
pub fn emit_patchsize_table(dim: usize, max_degree: usize) -> Result<Vec<PatchSizeRow>> {
    let (simplex, boxes) = match dim {
        2 => (PatchShape::Tri6, PatchShape::Quad4),
        3 => (PatchShape::Tet24, PatchShape::Hex8),
        _ => return Err(invalid(format!("patch sizes need dim 2 or 3, got {dim}"))),
    };
    (1..=max_degree)
        .map(|r| {
            Ok(PatchSizeRow {
                r,
                p: patch_dof_count(Family::P, r, dim, simplex)?,
                s: patch_dof_count(Family::S, r, dim, boxes)?,
                q: patch_dof_count(Family::Q, r, dim, boxes)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub mesh: String,
    pub h: f64,
    pub dofs: usize,
    pub l2_error: f64,
    pub observed_order: Option<f64>,
}

/// L2 errors of the two-level-ASM solution on each level of `config`, and
/// `log2(e_coarse / e_fine)` between consecutive levels.
pub fn convergence_study(config: &ExperimentConfig) -> Result<Vec<ConvergenceRow>> {
    if config.problem.manufactured().is_none() {
        return Err(invalid("convergence studies need a manufactured solution"));
    }
    let mut c = config.clone();
    c.pc = PcKind::Asm2;
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for level in c.first_level..=c.refine {
        let o = run_level(&c, level)?;
        let mesh = refine_uniform(&c.base()?, level).finest().clone();
        let e = o.row.l2_error.unwrap();
        let observed_order = rows.last().map(|prev| (prev.l2_error / e).log2());
        rows.push(ConvergenceRow { mesh: o.row.mesh, h: mesh.h(), dofs: o.row.dofs, l2_error: e, observed_order });
    }
    Ok(rows)
}
