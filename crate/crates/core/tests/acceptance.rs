//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use serendip::assembly::{
    assemble_operator, build_dofmap, element_matrix, interpolate, interpolate_scalar, DofMap,
    Discretization, Forcing, ProblemKind, ProblemSpec,
};
use serendip::bench::{
    convergence_study, emit_dof_table, emit_patchsize_table, run_level, ExperimentConfig, Outcome, PcKind, Problem,
};
use serendip::fe_basis::{build_basis, Family};
use serendip::krylov::{pcg, PcgOptions, StoppingNorm};
use serendip::mesh::{DirichletSelector, StructuredMesh};
use serendip::multigrid::PatchSmoothing;
use serendip::schwarz::{apply_asm, AsmMode, AsmPreconditioner, CoarseSolver};

const CHEB: PatchSmoothing = PatchSmoothing::Chebyshev(2);
const RICH: PatchSmoothing = PatchSmoothing::Richardson;

struct Verdict {
    pass: bool,
    detail: String,
    info: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Self { pass: true, detail: String::new(), info: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.pass = false;
            if !self.detail.is_empty() {
                self.detail.push_str("; ");
            }
            self.detail.push_str(&what.into());
        }
    }
}

fn solve(problem: Problem, family: Family, k: usize, level: usize, pc: PcKind, smoothing: PatchSmoothing) -> Outcome {
    let mut c = ExperimentConfig::new(problem, family, k, level, pc);
    c.smoothing = smoothing;
    c.timing = false;
    run_level(&c, level).expect("solve")
}

fn preconditioned_norm_iterations(problem: Problem, family: Family, k: usize, level: usize) -> usize {
    let mut c = ExperimentConfig::new(problem, family, k, level, PcKind::Tg);
    c.smoothing = CHEB;
    c.norm = StoppingNorm::Preconditioned;
    c.timing = false;
    run_level(&c, level).expect("solve").row.iterations
}

fn series(problem: Problem, family: Family, k: usize, levels: &[usize], pc: PcKind, sm: PatchSmoothing) -> Vec<usize> {
    levels
        .iter()
        .map(|&l| {
            let o = solve(problem, family, k, l, pc, sm);
            if o.row.converged {
                o.row.iterations
            } else {
                usize::MAX / 2
            }
        })
        .collect()
}

fn fmt(v: &[usize]) -> String {
    format!("{v:?}")
}

/// Criterion 1: DOF tables reproduce every reference count, and the
/// closed form agrees with the global DofMap.
fn dof_tables() -> Verdict {
    let mut v = Verdict::new();
    let rows = emit_dof_table(&[Problem::Poisson2d, Problem::Poisson3d, Problem::Elasticity2d], &[2, 3, 4]);
    let mut checked = 0;
    let mut lookup = |problem: Problem, family: Family, k: usize, level: usize, expect: usize, v: &mut Verdict| {
        let row = rows
            .iter()
            .find(|r| r.problem == problem && r.family == family.to_string() && r.degree == k && r.level == level);
        match row {
            Some(r) => {
                v.check(r.dofs == expect, format!("{problem} {family}{k} {}: {} != {expect}", r.mesh, r.dofs));
                let cells: Vec<usize> = r.mesh.split('x').map(|n| n.parse().unwrap()).collect();
                let dim = cells.len();
                let mesh = StructuredMesh::new(dim, &cells, &vec![0.0; dim], &vec![1.0; dim]).unwrap();
                let basis = build_basis(family, k, dim).unwrap();
                let map = build_dofmap(&mesh, &basis, problem.value_dim()).unwrap();
                v.check(map.num_dofs() == expect, format!("DofMap {problem} {family}{k} {}", r.mesh));
            }
            None => v.check(false, format!("missing row {problem} {family}{k} level {level}")),
        }
        checked += 1;
    };
    for (f, k, counts) in DOFS_2D {
        for (i, &n) in counts.iter().enumerate() {
            lookup(Problem::Poisson2d, f, k, i + 2, n, &mut v);
        }
    }
    for (f, k, counts) in DOFS_3D {
        for (i, &n) in counts.iter().enumerate() {
            lookup(Problem::Poisson3d, f, k, i + 2, n, &mut v);
        }
    }
    for (f, k, counts) in DOFS_ELASTICITY {
        for (i, &n) in counts.iter().enumerate() {
            lookup(Problem::Elasticity2d, f, k, i + 2, n, &mut v);
        }
    }
    if v.pass {
        v.detail = format!("{checked} counts exact (closed form and DofMap)");
    }
    v
}

/// Criterion 2: patch sizes.
fn patch_sizes() -> Verdict {
    let mut v = Verdict::new();
    let t2 = emit_patchsize_table(2, 8).unwrap();
    let t3 = emit_patchsize_table(3, 8).unwrap();
    v.check(t2[2].s == 9 && t2[2].q == 25, format!("2D r=3: S {} Q {}", t2[2].s, t2[2].q));
    v.check(t3[2].s == 13 && t3[2].q == 125, format!("3D r=3: S {} Q {}", t3[2].s, t3[2].q));
    for (i, (a, b)) in t2.iter().zip(&t3).enumerate() {
        let r = i + 1;
        // 6 triangles around a vertex: 1 vertex, 6 edges, 6 cells
        let p2 = 1 + 6 * (r - 1) + 6 * (r - 1) * r.saturating_sub(2) / 2;
        // 24 tetrahedra: 1 vertex, 14 edges, 36 faces, 24 cells
        let p3 = 1 + 14 * (r - 1) + 36 * (r - 1) * r.saturating_sub(2) / 2
            + 24 * (r - 1) * r.saturating_sub(2) * r.saturating_sub(3) / 6;
        v.check(a.p == p2, format!("2D P_{r}: {} != {p2}", a.p));
        v.check(b.p == p3, format!("3D P_{r}: {} != {p3}", b.p));
        v.check(a.q == (2 * r - 1).pow(2) && b.q == (2 * r - 1).pow(3), format!("Q_{r}"));
    }
    // built patches on a 2^dim all-Dirichlet mesh have exactly the tabulated size
    for (dim, kmax, table) in [(2, 6, &t2), (3, 3, &t3)] {
        let mesh = StructuredMesh::unit(dim, 2).unwrap();
        for k in 1..=kmax {
            for family in [Family::S, Family::Q] {
                let spec = ProblemSpec::poisson(Forcing::Zero, DirichletSelector::all(dim));
                let disc = Discretization::new(&mesh, family, k, &spec).unwrap();
                let pc = AsmPreconditioner::build(&disc, AsmMode::PatchOnly, CoarseSolver::Direct).unwrap();
                let built = pc.patches()[0].dofs.len();
                let row = &table[k - 1];
                let expect = if family == Family::S { row.s } else { row.q };
                v.check(built == expect, format!("{dim}D {family}{k} built patch {built} != {expect}"));
            }
        }
    }
    if v.pass {
        v.detail = format!(
            "2D S3/Q3 = {}/{}, 3D S3/Q3 = {}/{}, P_r from entity counts, built patches agree",
            t2[2].s, t2[2].q, t3[2].s, t3[2].q
        );
    }
    v
}

/// Iteration-count gate: reference +-tol, spread across levels and across k.
fn gate_counts<const N: usize>(
    v: &mut Verdict,
    table: &[(Family, usize, [usize; N])],
    measured: &[Vec<usize>],
    tol: usize,
    level_spread: usize,
    degree_spread: Option<usize>,
) {
    for ((f, k, reference), got) in table.iter().zip(measured) {
        for (r, g) in reference.iter().zip(got) {
            v.check(g.abs_diff(*r) <= tol, format!("{f}{k}: {} vs {}", fmt(got), fmt(reference)));
        }
        v.check(spread(got) <= level_spread, format!("{f}{k} varies {} across levels", spread(got)));
    }
    if let Some(ds) = degree_spread {
        for family in [Family::S, Family::Q] {
            let rows: Vec<&Vec<usize>> =
                table.iter().zip(measured).filter(|((f, _, _), _)| *f == family).map(|(_, m)| m).collect();
            for l in 0..N {
                let col: Vec<usize> = rows.iter().map(|r| r[l]).collect();
                v.check(spread(&col) <= ds, format!("{family} level {l} varies {} across k", spread(&col)));
            }
        }
    }
}

fn summary<const N: usize>(table: &[(Family, usize, [usize; N])], measured: &[Vec<usize>]) -> String {
    table
        .iter()
        .zip(measured)
        .map(|((f, k, _), m)| format!("{f}{k} {}", fmt(m)))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Criterion 3: two-level iteration counts, 2D Poisson, 32^2..512^2.
fn two_level_2d() -> Verdict {
    let mut v = Verdict::new();
    let levels = [2, 3, 4, 5, 6];
    let tg: Vec<Vec<usize>> =
        TWO_LEVEL_2D.iter().map(|&(f, k, _)| series(Problem::Poisson2d, f, k, &levels, PcKind::Tg, CHEB)).collect();
    gate_counts(&mut v, &TWO_LEVEL_2D, &tg, 2, 3, Some(3));
    let add: Vec<Vec<usize>> =
        TWO_LEVEL_2D.iter().map(|&(f, k, _)| series(Problem::Poisson2d, f, k, &levels, PcKind::Asm2, RICH)).collect();
    let mut a = Verdict::new();
    gate_counts(&mut a, &TWO_LEVEL_2D, &add, 2, 3, Some(3));
    v.info.push(format!(
        "additive two-level (asm2) would {}: {}",
        if a.pass { "pass" } else { "fail" },
        summary(&TWO_LEVEL_2D, &add)
    ));
    if v.pass {
        v.detail = format!("two-grid, Chebyshev(2) patch smoothing: {}", summary(&TWO_LEVEL_2D, &tg));
    }
    v
}

/// Criterion 4: two-level, 3D Poisson at 16^3 and 32^3.
fn two_level_3d() -> Verdict {
    let mut v = Verdict::new();
    let levels = [2, 3];
    let table: Vec<(Family, usize, [usize; 2])> = TWO_LEVEL_3D.iter().map(|&(f, k, r)| (f, k, [r[0], r[1]])).collect();
    let tg: Vec<Vec<usize>> =
        table.iter().map(|&(f, k, _)| series(Problem::Poisson3d, f, k, &levels, PcKind::Tg, CHEB)).collect();
    gate_counts(&mut v, &table, &tg, 2, 2, None);
    let add: Vec<Vec<usize>> =
        table.iter().map(|&(f, k, _)| series(Problem::Poisson3d, f, k, &[2], PcKind::Asm2, RICH)).collect();
    v.info.push(format!("additive two-level (asm2) at 16^3: {}", summary(&table, &add)));
    if v.pass {
        v.detail = format!("two-grid, Chebyshev(2) patch smoothing, 16^3/32^3: {}", summary(&table, &tg));
    }
    v
}

/// Criterion 5: multigrid iteration counts, 2D Poisson.
fn multigrid_2d() -> Verdict {
    let mut v = Verdict::new();
    let levels = [2, 3, 4, 5, 6];
    let mg: Vec<Vec<usize>> =
        MG_2D.iter().map(|&(f, k, _)| series(Problem::Poisson2d, f, k, &levels, PcKind::Mg, CHEB)).collect();
    gate_counts(&mut v, &MG_2D, &mg, 4, 3, None);
    let rich: Vec<Vec<usize>> =
        MG_2D.iter().map(|&(f, k, _)| series(Problem::Poisson2d, f, k, &[2, 3, 4], PcKind::Mg, RICH)).collect();
    let table3: Vec<(Family, usize, [usize; 3])> = MG_2D.iter().map(|&(f, k, r)| (f, k, [r[0], r[1], r[2]])).collect();
    let mut a = Verdict::new();
    gate_counts(&mut a, &table3, &rich, 4, 3, None);
    v.info.push(format!(
        "damped Richardson patch smoothing (omega = 1/lambda_max), 32^2..128^2, would {}: {}",
        if a.pass { "pass" } else { "fail" },
        summary(&table3, &rich)
    ));
    if v.pass {
        v.detail = format!("V(1,1), Chebyshev(2) patch smoothing: {}", summary(&MG_2D, &mg));
    }
    v
}

/// Criterion 6: elasticity, two-level, N = 2, 3.
fn elasticity() -> Verdict {
    let mut v = Verdict::new();
    let levels = [2, 3];
    let table: Vec<(Family, usize, [usize; 2])> =
        TWO_LEVEL_ELASTICITY.iter().map(|&(f, k, r)| (f, k, [r[0], r[1]])).collect();
    let tg: Vec<Vec<usize>> =
        table.iter().map(|&(f, k, _)| series(Problem::Elasticity2d, f, k, &levels, PcKind::Tg, CHEB)).collect();
    for ((f, k, _), got) in table.iter().zip(&tg) {
        v.check(got.iter().all(|&n| (8..=10).contains(&n)), format!("{f}{k}: {} outside 8..=10", fmt(got)));
        v.check(spread(got) <= 1, format!("{f}{k} not flat: {}", fmt(got)));
    }
    let add: Vec<Vec<usize>> =
        table.iter().map(|&(f, k, _)| series(Problem::Elasticity2d, f, k, &[2], PcKind::Asm2, RICH)).collect();
    v.info.push(format!("additive two-level (asm2) at N=2: {}", summary(&table, &add)));
    let pre: Vec<Vec<usize>> = table
        .iter()
        .map(|&(f, k, _)| vec![preconditioned_norm_iterations(Problem::Elasticity2d, f, k, 2)])
        .collect();
    v.info.push(format!("two-grid, preconditioned-residual stopping norm at N=2: {}", summary(&table, &pre)));
    if v.pass {
        v.detail = format!("two-grid, Chebyshev(2) patch smoothing, N=2,3: {}", summary(&table, &tg));
    }
    v
}

/// Criterion 7: spectral bounds of the additive operators.
fn spectral_bounds() -> Verdict {
    let mut v = Verdict::new();
    let mut notes = Vec::new();
    // (a) patch-only: lambda_max below the overlap bound, kappa grows like H^-2
    for (problem, levels, bound) in [(Problem::Poisson2d, vec![0, 1, 2, 3], 4.0), (Problem::Poisson3d, vec![0, 1, 2], 8.0)]
    {
        let kmax = if problem == Problem::Poisson3d { 3 } else { 4 };
        for family in [Family::S, Family::Q] {
            for k in 2..=kmax {
                let outs: Vec<Outcome> = levels.iter().map(|&l| solve(problem, family, k, l, PcKind::Patch, RICH)).collect();
                let lmax = outs.iter().map(|o| o.row.lambda_max).fold(0.0, f64::max);
                let kappas: Vec<f64> = outs.iter().map(|o| o.row.kappa_est).collect();
                v.check(outs.iter().all(|o| o.row.converged), format!("{problem} {family}{k} patch-only did not converge"));
                v.check(lmax <= 1.1 * bound, format!("{problem} {family}{k}: lambda_max {lmax:.3} > {:.1}", 1.1 * bound));
                v.check(kappas.windows(2).all(|w| w[1] > w[0]), format!("{problem} {family}{k}: kappa not growing {kappas:.1?}"));
                let growth = kappas.last().unwrap() / kappas[0];
                let h2 = 4f64.powi(levels.len() as i32 - 1);
                v.check(
                    growth >= h2 / 3.0 && growth <= h2 * 3.0,
                    format!("{problem} {family}{k}: kappa growth {growth:.1} vs H^-2 factor {h2}"),
                );
                notes.push(format!("{problem} {family}{k} lmax {lmax:.2} kappa x{growth:.1}"));
            }
        }
    }
    // (b) two-level: kappa varies by less than 1.5x across three refinements
    for family in [Family::S, Family::Q] {
        for k in 2..=4 {
            let kappas: Vec<f64> =
                (2..=5).map(|l| solve(Problem::Poisson2d, family, k, l, PcKind::Asm2, RICH).row.kappa_est).collect();
            let ratio = kappas.iter().cloned().fold(0.0, f64::max) / kappas.iter().cloned().fold(f64::MAX, f64::min);
            v.check(ratio < 1.5, format!("two-level {family}{k}: kappa {kappas:.2?}"));
            notes.push(format!("two-level {family}{k} kappa {:.2}..{:.2}", kappas[0], kappas[3]));
        }
    }
    v.info.push(notes.join(", "));
    if v.pass {
        v.detail = "patch-only lambda_max within overlap bound and kappa ~ H^-2; two-level kappa flat (< 1.5x)".into();
    }
    v
}

fn dense_op(op: &dyn serendip::krylov::LinearOperator) -> DMatrix<f64> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut y = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut y);
        e[j] = 0.0;
        for i in 0..n {
            m[(i, j)] = y[i];
        }
    }
    m
}

/// Criterion 8: dense oracle for the two-level operator; single patch is exact.
fn dense_oracle() -> Verdict {
    let mut v = Verdict::new();
    let mesh = StructuredMesh::unit(2, 8).unwrap();
    let spec = ProblemSpec::poisson(Forcing::Zero, DirichletSelector::all(2));
    let disc = Discretization::new(&mesh, Family::S, 2, &spec).unwrap();
    let pc = AsmPreconditioner::build(&disc, AsmMode::TwoLevel, CoarseSolver::Direct).unwrap();
    let n = disc.num_dofs();
    let a = dense_op(&disc.operator);
    let free: Vec<bool> = disc.constrained().iter().map(|c| !c).collect();
    let map: &DofMap = &disc.dofmap;
    // support cells of each dof, from the cell-to-dof lists
    let mut support: Vec<Vec<usize>> = vec![Vec::new(); n];
    for c in 0..mesh.num_cells() {
        for &d in map.cell_dofs(c).iter() {
            support[d as usize].push(c);
        }
    }
    let h = mesh.spacing(0);
    let mut oracle = DMatrix::<f64>::zeros(n, n);
    let mut add_block = |p: &DMatrix<f64>| {
        let ai = p.transpose() * &a * p;
        let inv = ai.cholesky().expect("SPD block").inverse();
        oracle += p * inv * p.transpose();
    };
    let mut patches = 0;
    for j in 1..8 {
        for i in 1..8 {
            let (xv, yv) = (i as f64 * h, j as f64 * h);
            let contains = |c: usize| {
                let (ci, cj) = (c % 8, c / 8);
                (ci == i || ci + 1 == i) && (cj == j || cj + 1 == j)
            };
            let dofs: Vec<usize> = (0..n).filter(|&d| free[d] && support[d].iter().all(|&c| contains(c))).collect();
            let mut p = DMatrix::zeros(n, dofs.len());
            for (col, &d) in dofs.iter().enumerate() {
                p[(d, col)] = 1.0;
            }
            add_block(&p);
            patches += 1;
            let _ = (xv, yv);
        }
    }
    // coarse space: interpolants of the interior bilinear hats
    let mut cols = Vec::new();
    for j in 1..8 {
        for i in 1..8 {
            let (xv, yv) = (i as f64 * h, j as f64 * h);
            let hat = move |x: &[f64]| (1.0 - (x[0] - xv).abs() / h).max(0.0) * (1.0 - (x[1] - yv).abs() / h).max(0.0);
            cols.push(interpolate_scalar(map, &disc.basis, 4, hat));
        }
    }
    let p0 = DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r]);
    add_block(&p0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let r: Vec<f64> = (0..n).map(|i| if free[i] { rng.random_range(-1.0..1.0) } else { 0.0 }).collect();
        let got = apply_asm(&pc, &r);
        let want = &oracle * DVector::from_column_slice(&r);
        let scale = want.amax();
        let diff = got.iter().zip(want.iter()).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
        worst = worst.max(diff / scale);
    }
    v.check(patches == pc.patches().len(), format!("{} patches vs {patches}", pc.patches().len()));
    v.check(worst <= 1e-12, format!("relative difference {worst:.2e}"));
    // single patch on a 2x2 all-Dirichlet mesh
    let small = Discretization::new(&StructuredMesh::unit(2, 2).unwrap(), Family::S, 3, &ProblemSpec::poisson(Forcing::Constant(vec![1.0]), DirichletSelector::all(2))).unwrap();
    let single = AsmPreconditioner::build(&small, AsmMode::PatchOnly, CoarseSolver::Direct).unwrap();
    let (_, rep) = pcg(&small.operator, &small.rhs().unwrap(), &single, &PcgOptions::default(), None).unwrap();
    v.check(rep.iterations == 1 && rep.converged, format!("single patch took {} iterations", rep.iterations));
    if v.pass {
        v.detail = format!("8x8 S_2: max relative difference {worst:.1e} over {patches} patches + coarse; single patch: 1 iteration");
    }
    v
}

/// Criterion 9: convergence orders, Q_1 oracle, symmetry and kernels.
fn discretization() -> Verdict {
    let mut v = Verdict::new();
    let mut orders = Vec::new();
    for family in [Family::S, Family::Q] {
        for k in 2..=4 {
            let mut c = ExperimentConfig::new(Problem::Poisson2d, family, k, 4, PcKind::Asm2);
            c.first_level = 2;
            c.timing = false;
            let rows = convergence_study(&c).unwrap();
            for r in rows.iter().skip(1) {
                let p = r.observed_order.unwrap();
                v.check(p >= k as f64 + 0.8, format!("{family}{k} order {p:.2} at {}", r.mesh));
                orders.push(format!("{family}{k}@{} {p:.2}", r.mesh));
            }
        }
    }
    // Q_1 stiffness on the unit square against the hand-derived matrix
    let basis = build_basis(Family::Q, 1, 2).unwrap();
    let k = element_matrix(&basis, &[1.0, 1.0], &ProblemKind::Poisson);
    let corner: Vec<[f64; 2]> = (0..4)
        .map(|i| {
            let c = [[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]];
            *c.iter().find(|x| (basis.eval(&x[..])[i] - 1.0).abs() < 1e-12).unwrap()
        })
        .collect();
    let mut q1 = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            let shared = (corner[i][0] == corner[j][0]) as u8 + (corner[i][1] == corner[j][1]) as u8;
            let want = match shared {
                2 => 2.0 / 3.0,
                1 => -1.0 / 6.0,
                _ => -1.0 / 3.0,
            };
            q1 = q1.max((k[(i, j)] - want).abs());
        }
    }
    v.check(q1 <= 1e-12, format!("Q_1 stiffness off by {q1:.1e}"));
    // symmetry and kernels of unconstrained operators
    let mut checked = 0;
    for (dim, kmax) in [(2, 4), (3, 3)] {
        let mesh = StructuredMesh::unit(dim, 3).unwrap();
        for family in [Family::S, Family::Q] {
            for k in 1..=kmax {
                let basis = build_basis(family, k, dim).unwrap();
                let map = Arc::new(build_dofmap(&mesh, &basis, 1).unwrap());
                let a = assemble_operator(&map, &basis, &ProblemKind::Poisson);
                let ones = interpolate_scalar(&map, &basis, k + 1, |_| 1.0);
                let mut y = vec![0.0; a.nrows()];
                a.spmv(&ones, &mut y);
                let kernel = y.iter().fold(0.0f64, |m, x| m.max(x.abs())) / a.max_abs();
                v.check(a.symmetry_defect() <= 1e-12, format!("{dim}D {family}{k} asymmetric"));
                v.check(kernel <= 1e-12, format!("{dim}D {family}{k} constants not in kernel ({kernel:.1e})"));
                checked += 1;
            }
        }
    }
    let mesh = StructuredMesh::new(2, &[5, 2], &[0.0, 0.0], &[5.0, 1.0]).unwrap();
    for family in [Family::S, Family::Q] {
        for k in 1..=4 {
            let basis = build_basis(family, k, 2).unwrap();
            let map = Arc::new(build_dofmap(&mesh, &basis, 2).unwrap());
            let a = assemble_operator(&map, &basis, &ProblemKind::Elasticity { lambda: 0.4, mu: 0.4 });
            let rigid: [fn(&[f64], &mut [f64]); 3] = [
                |_, u| {
                    u[0] = 1.0;
                    u[1] = 0.0
                },
                |_, u| {
                    u[0] = 0.0;
                    u[1] = 1.0
                },
                |x, u| {
                    u[0] = -x[1];
                    u[1] = x[0]
                },
            ];
            for f in rigid {
                let r = interpolate(&map, &basis, k + 1, f);
                let mut y = vec![0.0; r.len()];
                a.spmv(&r, &mut y);
                let kernel = y.iter().fold(0.0f64, |m, x| m.max(x.abs())) / a.max_abs();
                v.check(kernel <= 1e-11, format!("elasticity {family}{k} rigid motion residual {kernel:.1e}"));
            }
            v.check(a.symmetry_defect() <= 1e-12, format!("elasticity {family}{k} asymmetric"));
            checked += 1;
        }
    }
    v.info.push(format!("observed orders: {}", orders.join(", ")));
    if v.pass {
        v.detail = format!(
            "orders >= k+0.8 (32^2..128^2), Q_1 stiffness error {q1:.1e}, {checked} operators symmetric with exact kernels"
        );
    }
    v
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("DOF tables", dof_tables),
        ("patch-size tables", patch_sizes),
        ("two-level iteration counts, 2D Poisson", two_level_2d),
        ("two-level iteration counts, 3D Poisson", two_level_3d),
        ("multigrid iteration counts, 2D Poisson", multigrid_2d),
        ("two-level iteration counts, elasticity", elasticity),
        ("spectral bounds", spectral_bounds),
        ("dense oracle equivalence", dense_oracle),
        ("discretization correctness", discretization),
    ];
    // numeric arguments select criteria; cargo's own flags are ignored
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !selected.is_empty() && !selected.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let v = f();
        println!(
            "criterion {} {} {name} ({:.0}s): {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            v.detail
        );
        for line in &v.info {
            println!("    info: {line}");
        }
        failed += usize::from(!v.pass);
    }
    println!("criterion 10 EXCLUDED wall-clock comparisons: timings are reported by the CLI for information only");
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
