//! Geometric multigrid on uniformly refined hierarchies, with vertex-patch
//! smoothers for S_k/Q_k and Chebyshev-Jacobi smoothers for Q_1.

use std::fmt;
use std::sync::Arc;

use crate::assembly::{Discretization, DofMap, ElementOperator, ProblemSpec};
use crate::error::{invalid, Result};
use crate::fe_basis::{ElementBasis, Family};
use crate::krylov::{estimate_extreme_eigenvalues, LinearOperator};
use crate::mesh::{refine_uniform, MeshHierarchy, StructuredMesh, MAX_DIM};
use crate::schwarz::{build_patches, check_galerkin, AsmPreconditioner};
use crate::sparse::{CsrMatrix, SparseCholesky};

/// Canonical interpolation from a coarse space into a fine one on the same
/// or a once-refined mesh. Column `j` of the matrix holds the fine dof
/// functionals applied to coarse basis function `j`. Rows of constrained
/// fine dofs and columns of constrained coarse dofs are zero.
#[derive(Clone, Debug)]
pub struct Interpolation {
    fine: Arc<DofMap>,
    coarse: Arc<DofMap>,
    ratio: usize,
    /// Per child position, `fine local x coarse local`, row-major.
    local: Vec<Vec<f64>>,
    ncl: usize,
    /// Fine scalar dof -> (fine cell, local index) of one cell containing it.
    owner: Vec<(u32, u32)>,
    fine_constrained: Vec<bool>,
    coarse_constrained: Vec<bool>,
}

impl Interpolation {
    pub fn new(
        coarse: &Arc<DofMap>,
        coarse_basis: &ElementBasis,
        fine: &Arc<DofMap>,
        fine_basis: &ElementBasis,
        coarse_constrained: &[bool],
        fine_constrained: &[bool],
    ) -> Result<Self> {
        let (cm, fm) = (coarse.mesh(), fine.mesh());
        let dim = fm.dim();
        if cm.dim() != dim || cm.lower() != fm.lower() || cm.upper() != fm.upper() {
            return Err(invalid("transfer between meshes on different domains"));
        }
        if coarse.value_dim() != fine.value_dim() {
            return Err(invalid("transfer between fields of different value dimension"));
        }
        let ratio = fm.cells_per_axis()[0] / cm.cells_per_axis()[0];
        if !(ratio == 1 || ratio == 2) || (0..dim).any(|a| fm.cells_per_axis()[a] != ratio * cm.cells_per_axis()[a]) {
            return Err(invalid(format!(
                "meshes {} and {} are not a nested pair",
                cm.descriptor(),
                fm.descriptor()
            )));
        }
        let q = fine_basis.degree().max(coarse_basis.degree()) + 1;
        let nfl = fine_basis.ndofs();
        let ncl = coarse_basis.ndofs();
        let nchild = ratio.pow(dim as u32);
        let mut local = Vec::with_capacity(nchild);
        for ch in 0..nchild {
            let mut m = vec![0.0; nfl * ncl];
            for (i, func) in fine_basis.functionals().iter().enumerate() {
                for (xi, w) in func.rule(q) {
                    let mut xc = [0.0; MAX_DIM];
                    for a in 0..dim {
                        xc[a] = if ratio == 2 {
                            let pos = ((ch >> a) & 1) as f64;
                            0.5 * (xi[a] + 2.0 * pos - 1.0)
                        } else {
                            xi[a]
                        };
                    }
                    for (j, v) in coarse_basis.eval(&xc[..dim]).iter().enumerate() {
                        m[i * ncl + j] += w * v;
                    }
                }
            }
            local.push(m);
        }
        let mut owner = vec![(0u32, 0u32); fine.num_scalar_dofs()];
        for d in 0..=dim {
            let per = fine.dofs_per_entity(d);
            if per == 0 {
                continue;
            }
            for e in fm.entities(d) {
                let (cell, r) = fm.owner_cell(&e);
                let cid = fm.cell_id(&cell) as u32;
                let start = fine.local_range(fine.ref_index(&r)).start;
                let first = fine.entity_first_dof(&e);
                for j in 0..per {
                    owner[first + j] = (cid, (start + j) as u32);
                }
            }
        }
        Ok(Self {
            fine: fine.clone(),
            coarse: coarse.clone(),
            ratio,
            local,
            ncl,
            owner,
            fine_constrained: fine_constrained.to_vec(),
            coarse_constrained: coarse_constrained.to_vec(),
        })
    }

    pub fn nrows(&self) -> usize {
        self.fine.num_dofs()
    }

    pub fn ncols(&self) -> usize {
        self.coarse.num_dofs()
    }

    /// Coarse cell id and child position of fine cell `cell`.
    fn parent(&self, cell: usize) -> (usize, usize) {
        if self.ratio == 1 {
            return (cell, 0);
        }
        let c = self.fine.mesh().cell_multi(cell);
        let (p, pos) = MeshHierarchy::parent(&c);
        (self.coarse.mesh().cell_id(&p), pos[0] | (pos[1] << 1) | (pos[2] << 2))
    }

    /// Call `f(fine dof, coarse dof, weight)` for every nonzero entry.
    fn for_each_entry(&self, mut f: impl FnMut(usize, usize, f64)) {
        let vd = self.fine.value_dim();
        for (s, &(cell, l)) in self.owner.iter().enumerate() {
            let (pc, ch) = self.parent(cell as usize);
            let row = &self.local[ch][l as usize * self.ncl..(l as usize + 1) * self.ncl];
            let cd = self.coarse.cell_scalar_dofs(pc);
            for c in 0..vd {
                let gf = s * vd + c;
                if self.fine_constrained[gf] {
                    continue;
                }
                for (j, &w) in row.iter().enumerate() {
                    let gc = cd[j] as usize * vd + c;
                    if w != 0.0 && !self.coarse_constrained[gc] {
                        f(gf, gc, w);
                    }
                }
            }
        }
    }

    /// `y = P x`
    pub fn prolong(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        self.prolong_add(x, y);
    }

    /// `y += P x`
    pub fn prolong_add(&self, x: &[f64], y: &mut [f64]) {
        self.for_each_entry(|gf, gc, w| y[gf] += w * x[gc]);
    }

    /// `y = P^T r`
    pub fn restrict(&self, r: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        self.for_each_entry(|gf, gc, w| y[gc] += w * r[gf]);
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let mut t = Vec::new();
        self.for_each_entry(|gf, gc, w| t.push((gf, gc, w)));
        CsrMatrix::from_triplets(self.nrows(), self.ncols(), &t)
    }
}

/// Prolongation between consecutive levels.
pub fn build_prolongation(coarse: &Discretization, fine: &Discretization) -> Result<Interpolation> {
    Interpolation::new(
        &coarse.dofmap,
        &coarse.basis,
        &fine.dofmap,
        &fine.basis,
        coarse.constrained(),
        fine.constrained(),
    )
}

/// `z = D^{-1} r`
#[derive(Clone, Debug)]
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(diag: &[f64]) -> Self {
        Self { inv_diag: diag.iter().map(|d| 1.0 / d).collect() }
    }
}

impl LinearOperator for Jacobi {
    fn dim(&self) -> usize {
        self.inv_diag.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, xi), d) in y.iter_mut().zip(x).zip(&self.inv_diag) {
            *yi = xi * d;
        }
    }
}

/// Chebyshev acceleration of a preconditioner `P` on `[0.1 λ, 1.1 λ]`, with
/// `λ` estimating `λ_max(P A)` from a few preconditioned CG steps.
#[derive(Clone, Debug)]
pub struct Chebyshev<P> {
    pc: P,
    lo: f64,
    hi: f64,
    degree: usize,
}

pub type ChebyshevJacobi = Chebyshev<Jacobi>;

impl Chebyshev<Jacobi> {
    /// Jacobi-preconditioned, interval from 10 CG steps.
    pub fn jacobi(op: &ElementOperator, degree: usize) -> Result<Self> {
        Self::new(op, Jacobi::new(&op.diagonal()), degree, 10)
    }
}

impl<P: LinearOperator> Chebyshev<P> {
    pub fn new(op: &ElementOperator, pc: P, degree: usize, steps: usize) -> Result<Self> {
        if degree == 0 {
            return Err(invalid("Chebyshev degree must be positive"));
        }
        let est = estimate_extreme_eigenvalues(op, &pc, steps, 0xcbe, Some(op.constrained()))?;
        let lmax = est.lambda_max;
        Ok(Self { pc, lo: 0.1 * lmax, hi: 1.1 * lmax, degree })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn preconditioner(&self) -> &P {
        &self.pc
    }

    /// `degree` Chebyshev steps on `A x = b` from the current `x`.
    pub fn smooth(&self, a: &dyn LinearOperator, b: &[f64], x: &mut [f64]) {
        let n = b.len();
        let theta = 0.5 * (self.hi + self.lo);
        let delta = 0.5 * (self.hi - self.lo);
        let sigma = theta / delta;
        let mut rho = 1.0 / sigma;
        let mut r = vec![0.0; n];
        a.apply(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let mut d = vec![0.0; n];
        self.pc.apply(&r, &mut d);
        for v in d.iter_mut() {
            *v /= theta;
        }
        let mut ad = vec![0.0; n];
        let mut z = vec![0.0; n];
        for step in 0..self.degree {
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi += di;
            }
            if step + 1 == self.degree {
                break;
            }
            a.apply(&d, &mut ad);
            for (ri, adi) in r.iter_mut().zip(&ad) {
                *ri -= adi;
            }
            let rho_new = 1.0 / (2.0 * sigma - rho);
            self.pc.apply(&r, &mut z);
            for (di, zi) in d.iter_mut().zip(&z) {
                *di = rho_new * rho * *di + 2.0 * rho_new / delta * zi;
            }
            rho = rho_new;
        }
    }
}

pub enum Smoother {
    /// `x += omega C^{-1} (b - A x)` with a patch-only Schwarz operator.
    Patch { asm: AsmPreconditioner, omega: f64 },
    /// Chebyshev-accelerated patch smoothing.
    PatchChebyshev(Chebyshev<AsmPreconditioner>),
    Jacobi(ChebyshevJacobi),
}

impl Smoother {
    pub fn smooth(&self, a: &dyn LinearOperator, b: &[f64], x: &mut [f64]) {
        match self {
            Smoother::Patch { asm, omega } => {
                let n = b.len();
                let mut r = vec![0.0; n];
                a.apply(x, &mut r);
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri = bi - *ri;
                }
                let mut z = vec![0.0; n];
                asm.apply(&r, &mut z);
                for (xi, zi) in x.iter_mut().zip(&z) {
                    *xi += omega * zi;
                }
            }
            Smoother::PatchChebyshev(c) => c.smooth(a, b, x),
            Smoother::Jacobi(c) => c.smooth(a, b, x),
        }
    }

    pub fn omega(&self) -> Option<f64> {
        match self {
            Smoother::Patch { omega, .. } => Some(*omega),
            _ => None,
        }
    }
}

/// `omega = 1 / λ_max(C^{-1} A)` from 15 CG-Lanczos steps, clamped to `[1/8, 1]`.
pub fn estimate_smoother_scaling(op: &ElementOperator, smoother: &AsmPreconditioner) -> Result<f64> {
    let est = estimate_extreme_eigenvalues(op, smoother, 15, 0x0e9a, Some(op.constrained()))?;
    Ok((1.0 / est.lambda_max).clamp(0.125, 1.0))
}

pub struct MgLevel {
    pub disc: Discretization,
    /// Absent on the coarsest level, which is solved directly.
    pub smoother: Option<Smoother>,
    /// From the next coarser level into this one.
    pub prolongation: Option<Interpolation>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Omega {
    Auto,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug)]
pub struct MgOptions {
    pub omega: Omega,
    /// Pre- and post-smoothing sweeps.
    pub sweeps: usize,
    pub smoothing: PatchSmoothing,
}

impl Default for MgOptions {
    fn default() -> Self {
        Self { omega: Omega::Auto, sweeps: 1, smoothing: PatchSmoothing::Richardson }
    }
}

/// How the patch operator is used as a smoother.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatchSmoothing {
    /// One damped step `x += omega C^{-1} (b - A x)`.
    Richardson,
    /// Chebyshev iteration of the given degree preconditioned by `C^{-1}`.
    Chebyshev(usize),
}

impl fmt::Display for PatchSmoothing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatchSmoothing::Richardson => f.write_str("richardson"),
            PatchSmoothing::Chebyshev(d) => write!(f, "chebyshev{d}"),
        }
    }
}

impl std::str::FromStr for PatchSmoothing {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "richardson" => Ok(PatchSmoothing::Richardson),
            "chebyshev" => Ok(PatchSmoothing::Chebyshev(2)),
            _ => match s.strip_prefix("chebyshev").and_then(|d| d.parse().ok()) {
                Some(d) if d > 0 => Ok(PatchSmoothing::Chebyshev(d)),
                _ => Err(invalid(format!("unknown smoother '{s}'"))),
            },
        }
    }
}

/// Symmetric V-cycle used as a preconditioner.
pub struct MgPreconditioner {
    levels: Vec<MgLevel>,
    coarsest: SparseCholesky,
    sweeps: usize,
}

impl fmt::Debug for MgPreconditioner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MgPreconditioner")
            .field("levels", &self.levels.len())
            .field("sweeps", &self.sweeps)
            .finish()
    }
}

impl MgPreconditioner {
    pub fn levels(&self) -> &[MgLevel] {
        &self.levels
    }

    pub fn finest(&self) -> &Discretization {
        &self.levels.last().unwrap().disc
    }

    /// Relative defect between `A_{l-1}` and `P_l^T A_l P_l` on random probes.
    pub fn nesting_defect(&self, level: usize) -> f64 {
        let fine = &self.levels[level];
        let coarse = &self.levels[level - 1];
        let p = fine.prolongation.as_ref().expect("level above the coarsest");
        match check_galerkin(&fine.disc.operator, &coarse.disc.operator, p, 3, f64::INFINITY) {
            Ok(d) | Err(d) => d,
        }
    }

    fn cycle(&self, l: usize, b: &[f64], x: &mut [f64]) {
        if l == 0 {
            x.copy_from_slice(b);
            self.coarsest.solve_in_place(x);
            return;
        }
        let level = &self.levels[l];
        let a = &level.disc.operator;
        let smoother = level.smoother.as_ref().unwrap();
        let p = level.prolongation.as_ref().unwrap();
        x.fill(0.0);
        for _ in 0..self.sweeps {
            smoother.smooth(a, b, x);
        }
        let mut r = vec![0.0; b.len()];
        a.apply(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let nc = p.ncols();
        let mut rc = vec![0.0; nc];
        p.restrict(&r, &mut rc);
        drop(r);
        let mut xc = vec![0.0; nc];
        self.cycle(l - 1, &rc, &mut xc);
        p.prolong_add(&xc, x);
        for _ in 0..self.sweeps {
            smoother.smooth(a, b, x);
        }
    }
}

impl LinearOperator for MgPreconditioner {
    fn dim(&self) -> usize {
        self.finest().num_dofs()
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.cycle(self.levels.len() - 1, r, z);
    }
}

/// One V-cycle applied to `residual`.
pub fn v_cycle(mg: &MgPreconditioner, residual: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; residual.len()];
    mg.apply(residual, &mut z);
    z
}

/// Patch smoother for one level.
pub fn patch_smoother(disc: &Discretization, opts: &MgOptions) -> Result<Smoother> {
    let patches = build_patches(&disc.operator, &disc.dofmap, &disc.spec.dirichlet)?;
    let asm = AsmPreconditioner::new(disc.num_dofs(), patches, None);
    Ok(match opts.smoothing {
        PatchSmoothing::Richardson => {
            let omega = match opts.omega {
                Omega::Auto => estimate_smoother_scaling(&disc.operator, &asm)?,
                Omega::Fixed(w) => w,
            };
            Smoother::Patch { asm, omega }
        }
        PatchSmoothing::Chebyshev(degree) => Smoother::PatchChebyshev(Chebyshev::new(&disc.operator, asm, degree, 10)?),
    })
}

/// Multiplicative two-grid cycle: patch smoothing on `disc`, exact Q_1
/// correction on the same mesh in between.
pub fn build_two_grid(disc: &Discretization, opts: &MgOptions) -> Result<MgPreconditioner> {
    let q1 = Discretization::new(disc.mesh(), Family::Q, 1, &disc.spec)?;
    let prolongation = build_prolongation(&q1, disc)?;
    let coarsest = coarsest_factor(&q1)?;
    let smoother = patch_smoother(disc, opts)?;
    let levels = vec![
        MgLevel { disc: q1, smoother: None, prolongation: None },
        MgLevel { disc: disc.clone(), smoother: Some(smoother), prolongation: Some(prolongation) },
    ];
    Ok(MgPreconditioner { levels, coarsest, sweeps: opts.sweeps })
}

fn coarsest_factor(disc: &Discretization) -> Result<SparseCholesky> {
    SparseCholesky::new(&disc.operator.to_csr())
}

/// Multigrid with damped patch smoothers on every level of `hierarchy`.
pub fn build_multigrid(
    hierarchy: &MeshHierarchy,
    family: Family,
    degree: usize,
    spec: &ProblemSpec,
    opts: &MgOptions,
) -> Result<MgPreconditioner> {
    let basis = Arc::new(crate::fe_basis::build_basis(family, degree, hierarchy.finest().dim())?);
    let mut levels: Vec<MgLevel> = Vec::with_capacity(hierarchy.len());
    for mesh in hierarchy.levels() {
        let disc = Discretization::with_basis(mesh, basis.clone(), spec)?;
        let prolongation = match levels.last() {
            Some(prev) => Some(build_prolongation(&prev.disc, &disc)?),
            None => None,
        };
        let smoother = if levels.is_empty() { None } else { Some(patch_smoother(&disc, opts)?) };
        levels.push(MgLevel { disc, smoother, prolongation });
    }
    let coarsest = coarsest_factor(&levels[0].disc)?;
    Ok(MgPreconditioner { levels, coarsest, sweeps: opts.sweeps })
}

/// Coarsest mesh reachable from `mesh` by halving every axis while the
/// counts stay even and at least 4.
fn coarsen_fully(mesh: &StructuredMesh) -> (StructuredMesh, usize) {
    let mut cells = mesh.cells_per_axis().to_vec();
    let mut times = 0;
    while cells.iter().all(|&n| n % 2 == 0 && n / 2 >= 4) {
        for n in cells.iter_mut() {
            *n /= 2;
        }
        times += 1;
    }
    let coarse = StructuredMesh::new(mesh.dim(), &cells, mesh.lower(), mesh.upper()).expect("valid coarsening");
    (coarse, times)
}

/// Q_1 multigrid for the coarse problem of the two-level method: degree-2
/// Chebyshev-Jacobi smoothing, direct solve on the coarsest level.
pub fn build_q1_multigrid(q1: &Discretization) -> Result<MgPreconditioner> {
    let (coarse, times) = coarsen_fully(q1.mesh());
    let hierarchy = refine_uniform(&coarse, times);
    let mut levels: Vec<MgLevel> = Vec::with_capacity(hierarchy.len());
    for mesh in hierarchy.levels() {
        let disc = if mesh == q1.mesh() {
            q1.clone()
        } else {
            Discretization::with_basis(mesh, q1.basis.clone(), &q1.spec)?
        };
        let prolongation = match levels.last() {
            Some(prev) => Some(build_prolongation(&prev.disc, &disc)?),
            None => None,
        };
        let smoother = if levels.is_empty() {
            None
        } else {
            Some(Smoother::Jacobi(ChebyshevJacobi::jacobi(&disc.operator, 2)?))
        };
        levels.push(MgLevel { disc, smoother, prolongation });
    }
    let coarsest = coarsest_factor(&levels[0].disc)?;
    Ok(MgPreconditioner { levels, coarsest, sweeps: 1 })
}
