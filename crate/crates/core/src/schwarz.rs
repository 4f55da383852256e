//! Vertex-patch additive Schwarz preconditioners.
//!
//! Every vertex not on the Dirichlet boundary owns a patch: the unconstrained
//! dofs on entities that contain it. The local operator is the principal
//! submatrix of the global operator on those dofs and is factored densely.
//! The two-level variant adds a correction from the Q_1 subspace on the same
//! mesh.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::assembly::{Discretization, DofMap, ElementOperator};
use crate::error::{invalid, Error, Result};
use crate::fe_basis::{dim_p, Family};
use crate::krylov::LinearOperator;
use crate::mesh::{interior_vertices, DirichletSelector, MAX_DIM};
use crate::multigrid::{build_q1_multigrid, Interpolation, MgPreconditioner};
use crate::sparse::{CsrMatrix, SparseCholesky};

/// Packed lower-triangular Cholesky factor of a small dense SPD matrix.
#[derive(Clone, Debug)]
pub struct DenseCholesky {
    n: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    /// Factor the row-major `n x n` matrix `a`. On failure returns the
    /// offending pivot index and value.
    pub fn new(a: &[f64], n: usize) -> std::result::Result<Self, (usize, f64)> {
        let mut l = vec![0.0; n * (n + 1) / 2];
        let idx = |i: usize, j: usize| i * (i + 1) / 2 + j;
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[idx(i, k)] * l[idx(j, k)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err((i, s));
                    }
                    l[idx(i, i)] = s.sqrt();
                } else {
                    l[idx(i, j)] = s / l[idx(j, j)];
                }
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let l = &self.l;
        for i in 0..n {
            let row = &l[i * (i + 1) / 2..i * (i + 1) / 2 + i + 1];
            let s: f64 = row[..i].iter().zip(&b[..i]).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - s) / row[i];
        }
        for i in (0..n).rev() {
            let row = &l[i * (i + 1) / 2..i * (i + 1) / 2 + i + 1];
            b[i] /= row[i];
            let xi = b[i];
            for (bj, a) in b[..i].iter_mut().zip(&row[..i]) {
                *bj -= a * xi;
            }
        }
    }
}

/// Operators that can hand out dense principal submatrices on patches.
pub trait PatchSource: LinearOperator {
    /// Row-major principal submatrix on sorted `dofs`; `cells` lists the
    /// cells of the patch and contains every cell coupling two of the dofs.
    fn patch_matrix(&self, cells: &[usize], dofs: &[u32]) -> Vec<f64>;
}

impl PatchSource for CsrMatrix {
    fn patch_matrix(&self, _cells: &[usize], dofs: &[u32]) -> Vec<f64> {
        self.principal_submatrix(dofs)
    }
}

impl PatchSource for ElementOperator {
    fn patch_matrix(&self, cells: &[usize], dofs: &[u32]) -> Vec<f64> {
        ElementOperator::patch_matrix(self, cells, dofs)
    }
}

#[derive(Clone, Debug)]
pub struct VertexPatch {
    pub vertex: usize,
    pub dofs: Vec<u32>,
    pub factor: Arc<DenseCholesky>,
}

/// Cells around vertex `vertex` and the sorted unconstrained dofs on the
/// entities containing it.
pub fn patch_dofs(dofmap: &DofMap, constrained: &[bool], vertex: usize) -> (Vec<usize>, Vec<u32>) {
    let mesh = dofmap.mesh();
    let dim = mesh.dim();
    let vd = dofmap.value_dim();
    let v = mesh.entity(0, vertex);
    let cells = mesh.cells_containing(&v);
    let mut dofs = Vec::new();
    for cell in &cells {
        let mut corner = [0; MAX_DIM];
        for a in 0..dim {
            corner[a] = v.index[a] - cell[a];
        }
        for (r, _) in dofmap.layout() {
            if (0..dim).all(|a| r.spans(a) || r.offset[a] == corner[a]) {
                for s in dofmap.entity_scalar_dofs(&r.global(cell)) {
                    for c in 0..vd {
                        let g = s * vd + c;
                        if !constrained[g] {
                            dofs.push(g as u32);
                        }
                    }
                }
            }
        }
    }
    dofs.sort_unstable();
    dofs.dedup();
    (cells.iter().map(|c| mesh.cell_id(c)).collect(), dofs)
}

/// One patch per vertex off the Dirichlet boundary, factored densely.
/// Identical local matrices share one factor.
pub fn build_patches(
    op: &dyn PatchSource,
    dofmap: &DofMap,
    selector: &DirichletSelector,
) -> Result<Vec<VertexPatch>> {
    let constrained = dofmap.constrained(selector);
    let mut cache: HashMap<Vec<u64>, Arc<DenseCholesky>> = HashMap::new();
    let mut patches = Vec::new();
    for vertex in interior_vertices(dofmap.mesh(), selector) {
        let (cells, dofs) = patch_dofs(dofmap, &constrained, vertex);
        if dofs.is_empty() {
            continue;
        }
        let a = op.patch_matrix(&cells, &dofs);
        let key: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
        let factor = match cache.get(&key) {
            Some(f) => f.clone(),
            None => {
                let f = DenseCholesky::new(&a, dofs.len())
                    .map_err(|(pivot, value)| Error::PatchNotSpd { vertex, pivot, value })?;
                let f = Arc::new(f);
                cache.insert(key, f.clone());
                f
            }
        };
        patches.push(VertexPatch { vertex, dofs, factor });
    }
    Ok(patches)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatchShape {
    /// Four quadrilaterals around a vertex.
    Quad4,
    /// Eight hexahedra around a vertex.
    Hex8,
    /// Six triangles and six edges around a vertex.
    Tri6,
    /// 24 tetrahedra, 36 faces and 14 edges around a vertex.
    Tet24,
}

/// Interior dofs of one vertex patch after eliminating its boundary.
pub fn patch_dof_count(family: Family, k: usize, dim: usize, shape: PatchShape) -> Result<usize> {
    if k < 1 {
        return Err(invalid("polynomial degree must be at least 1"));
    }
    let km = k as i64;
    let n = match (family, dim, shape) {
        (Family::S, 2, PatchShape::Quad4) => 1 + 4 * (k - 1) + 4 * dim_p(km - 4, 2),
        (Family::Q, 2, PatchShape::Quad4) => (2 * k - 1).pow(2),
        (Family::S, 3, PatchShape::Hex8) => 1 + 6 * (k - 1) + 12 * dim_p(km - 4, 2) + 8 * dim_p(km - 6, 3),
        (Family::Q, 3, PatchShape::Hex8) => (2 * k - 1).pow(3),
        (Family::P, 2, PatchShape::Tri6) => 1 + 6 * (k - 1) + 6 * dim_p(km - 3, 2),
        (Family::P, 3, PatchShape::Tet24) => {
            1 + 14 * (k - 1) + 36 * dim_p(km - 3, 2) + 24 * dim_p(km - 4, 3)
        }
        _ => return Err(invalid(format!("no {family} patch of shape {shape:?} in {dim}D"))),
    };
    Ok(n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoarseSolver {
    /// Sparse Cholesky.
    Direct,
    /// One Q_1 multigrid V-cycle with Chebyshev-Jacobi smoothing.
    Q1Multigrid,
}

impl FromStr for CoarseSolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Self::Direct),
            "q1mg" => Ok(Self::Q1Multigrid),
            other => Err(invalid(format!("unknown coarse solver '{other}'"))),
        }
    }
}

impl fmt::Display for CoarseSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Direct => "direct",
            Self::Q1Multigrid => "q1mg",
        })
    }
}

enum CoarseSolve {
    Direct(SparseCholesky),
    Multigrid(Box<MgPreconditioner>),
}

/// Q_1 subspace of the fine space on the same mesh.
pub struct CoarseSpace {
    disc: Discretization,
    transfer: Interpolation,
    solve: CoarseSolve,
}

impl fmt::Debug for CoarseSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoarseSpace").field("dofs", &self.disc.num_dofs()).finish()
    }
}

impl CoarseSpace {
    /// Q_1 discretization of the same problem.
    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    /// The inclusion `R_0` from Q_1 coefficients into the fine space.
    pub fn transfer(&self) -> &Interpolation {
        &self.transfer
    }

    pub fn num_dofs(&self) -> usize {
        self.disc.num_dofs()
    }

    /// `y += R_0 A_0^{-1} R_0^T r`
    pub fn add_correction(&self, r: &[f64], y: &mut [f64]) {
        let mut rc = vec![0.0; self.num_dofs()];
        self.transfer.restrict(r, &mut rc);
        let mut xc = vec![0.0; rc.len()];
        match &self.solve {
            CoarseSolve::Direct(f) => {
                xc.copy_from_slice(&rc);
                f.solve_in_place(&mut xc);
            }
            CoarseSolve::Multigrid(mg) => mg.apply(&rc, &mut xc),
        }
        self.transfer.prolong_add(&xc, y);
    }
}

/// Q_1 coarse space for `fine`. The coarse operator is assembled directly
/// on the Q_1 space and checked against `R_0^T A R_0` on random vectors.
pub fn build_coarse_space(fine: &Discretization, solver: CoarseSolver) -> Result<CoarseSpace> {
    let mesh = fine.mesh();
    let disc = Discretization::new(mesh, Family::Q, 1, &fine.spec)?;
    let transfer = Interpolation::new(&disc.dofmap, &disc.basis, &fine.dofmap, &fine.basis, disc.constrained(), fine.constrained())?;
    check_galerkin(&fine.operator, &disc.operator, &transfer, 3, 1e-10)
        .map_err(|d| Error::CoarseSpace(format!("Q_1 operator differs from R0^T A R0 by {d:e}")))?;
    let solve = match solver {
        CoarseSolver::Direct => CoarseSolve::Direct(SparseCholesky::new(&disc.operator.to_csr())?),
        CoarseSolver::Q1Multigrid => CoarseSolve::Multigrid(Box::new(build_q1_multigrid(&disc)?)),
    };
    Ok(CoarseSpace { disc, transfer, solve })
}

/// Compare `P^T A_fine P v` with `A_coarse v` on `probes` random vectors
/// supported on free coarse dofs. Returns the relative defect on failure.
pub fn check_galerkin(
    fine: &dyn LinearOperator,
    coarse: &ElementOperator,
    p: &Interpolation,
    probes: usize,
    tol: f64,
) -> std::result::Result<f64, f64> {
    use rand::{Rng, SeedableRng};
    let nc = coarse.dim();
    let nf = fine.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xc0a5e);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let v: Vec<f64> = (0..nc)
            .map(|i| if coarse.constrained()[i] { 0.0 } else { rng.random_range(-1.0..1.0) })
            .collect();
        let mut pv = vec![0.0; nf];
        p.prolong(&v, &mut pv);
        let mut apv = vec![0.0; nf];
        fine.apply(&pv, &mut apv);
        let mut g = vec![0.0; nc];
        p.restrict(&apv, &mut g);
        let mut a0v = vec![0.0; nc];
        coarse.apply(&v, &mut a0v);
        let scale = a0v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        for i in 0..nc {
            if !coarse.constrained()[i] {
                worst = worst.max((g[i] - a0v[i]).abs() / scale);
            }
        }
    }
    if worst <= tol {
        Ok(worst)
    } else {
        Err(worst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AsmMode {
    PatchOnly,
    TwoLevel,
}

/// `C^{-1} = omega (sum_i R_i A_i^{-1} R_i^T [+ R_0 A_0^{-1} R_0^T])`
pub struct AsmPreconditioner {
    n: usize,
    patches: Vec<VertexPatch>,
    coarse: Option<CoarseSpace>,
    omega: f64,
    max_patch: usize,
}

impl fmt::Debug for AsmPreconditioner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AsmPreconditioner")
            .field("patches", &self.patches.len())
            .field("coarse", &self.coarse)
            .field("omega", &self.omega)
            .finish()
    }
}

impl AsmPreconditioner {
    pub fn new(n: usize, patches: Vec<VertexPatch>, coarse: Option<CoarseSpace>) -> Self {
        let max_patch = patches.iter().map(|p| p.dofs.len()).max().unwrap_or(0);
        Self { n, patches, coarse, omega: 1.0, max_patch }
    }

    /// Patch-only or two-level preconditioner for a discretization.
    pub fn build(disc: &Discretization, mode: AsmMode, coarse: CoarseSolver) -> Result<Self> {
        let patches = build_patches(&disc.operator, &disc.dofmap, &disc.spec.dirichlet)?;
        let coarse = match mode {
            AsmMode::PatchOnly => None,
            AsmMode::TwoLevel => Some(build_coarse_space(disc, coarse)?),
        };
        Ok(Self::new(disc.num_dofs(), patches, coarse))
    }

    pub fn mode(&self) -> AsmMode {
        if self.coarse.is_some() {
            AsmMode::TwoLevel
        } else {
            AsmMode::PatchOnly
        }
    }

    pub fn patches(&self) -> &[VertexPatch] {
        &self.patches
    }

    pub fn coarse(&self) -> Option<&CoarseSpace> {
        self.coarse.as_ref()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn set_omega(&mut self, omega: f64) {
        self.omega = omega;
    }

    /// Number of distinct factorizations behind the patches.
    pub fn unique_factors(&self) -> usize {
        let mut ptrs: Vec<*const DenseCholesky> = self.patches.iter().map(|p| Arc::as_ptr(&p.factor)).collect();
        ptrs.sort();
        ptrs.dedup();
        ptrs.len()
    }
}

impl LinearOperator for AsmPreconditioner {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, r: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        let mut buf = vec![0.0; self.max_patch];
        for p in &self.patches {
            let w = &mut buf[..p.dofs.len()];
            for (wi, &g) in w.iter_mut().zip(&p.dofs) {
                *wi = r[g as usize];
            }
            p.factor.solve_in_place(w);
            for (wi, &g) in w.iter().zip(&p.dofs) {
                y[g as usize] += wi;
            }
        }
        if let Some(c) = &self.coarse {
            c.add_correction(r, y);
        }
        if self.omega != 1.0 {
            for v in y.iter_mut() {
                *v *= self.omega;
            }
        }
    }
}

/// Apply the preconditioner: zero-extended patch solves plus, when present,
/// the coarse correction.
pub fn apply_asm(pc: &AsmPreconditioner, residual: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; residual.len()];
    pc.apply(residual, &mut y);
    y
}
