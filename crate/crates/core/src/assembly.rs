//! Global numbering, operators and load vectors for the Poisson and planar
//! elasticity problems.
//!
//! All cells of a structured mesh are translates of each other, so one
//! element matrix serves the whole mesh. [`ElementOperator`] applies the
//! global operator cell by cell from that matrix; [`ElementOperator::to_csr`]
//! assembles it explicitly when a sparse matrix is needed.

use std::f64::consts::PI;
use std::ops::Range;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fe_basis::{build_basis, dofs_per_entity, gauss_rule, ElementBasis, Family};
use crate::krylov::LinearOperator;
use crate::mesh::{classes, reference_entities, DirichletSelector, Entity, RefEntity, StructuredMesh, MAX_DIM};
pub use crate::sparse::CsrMatrix;

/// Global degree-of-freedom numbering.
///
/// Scalar dofs are numbered entity-dimension-major (vertices, edges, faces,
/// cells), then by entity id, then by the entity's local functional. A
/// vector-valued field interleaves components: global index
/// `scalar * value_dim + component`.
#[derive(Clone, Debug)]
pub struct DofMap {
    mesh: StructuredMesh,
    family: Family,
    degree: usize,
    value_dim: usize,
    per_entity: [usize; 4],
    dim_offset: [usize; 5],
    class_offset: [usize; 8],
    class_shape: [[usize; MAX_DIM]; 8],
    layout: Vec<(RefEntity, Range<usize>)>,
    ref_lookup: [usize; 64],
    nloc: usize,
    cell_dofs: Vec<u32>,
}

fn offset_bits(offset: &[usize; MAX_DIM]) -> usize {
    offset[0] | (offset[1] << 1) | (offset[2] << 2)
}

impl DofMap {
    pub fn new(mesh: &StructuredMesh, family: Family, degree: usize, value_dim: usize) -> Result<Self> {
        if family == Family::P {
            return Err(invalid("P_k is not available on box meshes"));
        }
        if degree < 1 {
            return Err(invalid("polynomial degree must be at least 1"));
        }
        if value_dim < 1 {
            return Err(invalid("value dimension must be at least 1"));
        }
        let dim = mesh.dim();
        let mut per_entity = [0; 4];
        for (d, p) in per_entity.iter_mut().enumerate().take(dim + 1) {
            *p = dofs_per_entity(family, degree, d);
        }
        let mut class_offset = [0; 8];
        let mut class_shape = [[1; MAX_DIM]; 8];
        let mut dim_offset = [0; 5];
        for d in 0..=dim {
            let mut acc = 0;
            for mask in classes(dim, d) {
                class_offset[mask as usize] = acc;
                class_shape[mask as usize] = mesh.class_shape(mask);
                acc += mesh.class_len(mask);
            }
            dim_offset[d + 1] = dim_offset[d] + acc * per_entity[d];
        }
        for d in dim + 1..4 {
            dim_offset[d + 1] = dim_offset[d];
        }
        let mut layout = Vec::new();
        let mut ref_lookup = [usize::MAX; 64];
        let mut start = 0;
        for (i, r) in reference_entities(dim).into_iter().enumerate() {
            let n = per_entity[r.dim()];
            layout.push((r, start..start + n));
            ref_lookup[r.mask as usize * 8 + offset_bits(&r.offset)] = i;
            start += n;
        }
        let mut map = Self {
            mesh: mesh.clone(),
            family,
            degree,
            value_dim,
            per_entity,
            dim_offset,
            class_offset,
            class_shape,
            layout,
            ref_lookup,
            nloc: start,
            cell_dofs: Vec::new(),
        };
        let ncells = mesh.num_cells();
        let mut cell_dofs = Vec::with_capacity(ncells * start);
        for id in 0..ncells {
            let cell = mesh.cell_multi(id);
            for (r, range) in &map.layout {
                let first = map.entity_first_dof(&r.global(&cell));
                cell_dofs.extend((0..range.len()).map(|j| (first + j) as u32));
            }
        }
        if map.num_dofs() > u32::MAX as usize {
            return Err(invalid("too many degrees of freedom for 32-bit indices"));
        }
        map.cell_dofs = cell_dofs;
        Ok(map)
    }

    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    pub fn num_scalar_dofs(&self) -> usize {
        self.dim_offset[4]
    }

    pub fn num_dofs(&self) -> usize {
        self.num_scalar_dofs() * self.value_dim
    }

    /// Scalar dofs per cell.
    pub fn local_scalar_dofs(&self) -> usize {
        self.nloc
    }

    /// Local dofs per cell including components.
    pub fn local_dofs(&self) -> usize {
        self.nloc * self.value_dim
    }

    pub fn dofs_per_entity(&self, d: usize) -> usize {
        self.per_entity[d]
    }

    pub fn cell_scalar_dofs(&self, cell: usize) -> &[u32] {
        &self.cell_dofs[cell * self.nloc..(cell + 1) * self.nloc]
    }

    /// Global dofs of a cell in local order `(i, c) -> i * value_dim + c`.
    pub fn cell_dofs(&self, cell: usize) -> Vec<u32> {
        let vd = self.value_dim as u32;
        self.cell_scalar_dofs(cell)
            .iter()
            .flat_map(|&s| (0..vd).map(move |c| s * vd + c))
            .collect()
    }

    pub fn entity_id(&self, e: &Entity) -> usize {
        let s = &self.class_shape[e.mask as usize];
        self.class_offset[e.mask as usize] + e.index[0] + s[0] * (e.index[1] + s[1] * e.index[2])
    }

    /// First scalar dof attached to `e`.
    pub fn entity_first_dof(&self, e: &Entity) -> usize {
        let d = e.dim();
        self.dim_offset[d] + self.entity_id(e) * self.per_entity[d]
    }

    pub fn entity_scalar_dofs(&self, e: &Entity) -> Range<usize> {
        let first = self.entity_first_dof(e);
        first..first + self.per_entity[e.dim()]
    }

    /// Position of a reference entity in the local layout.
    pub fn ref_index(&self, r: &RefEntity) -> usize {
        self.ref_lookup[r.mask as usize * 8 + offset_bits(&r.offset)]
    }

    /// Local scalar dofs of reference entity number `i`.
    pub fn local_range(&self, i: usize) -> Range<usize> {
        self.layout[i].1.clone()
    }

    pub fn layout(&self) -> &[(RefEntity, Range<usize>)] {
        &self.layout
    }

    /// Local scalar index in `cell` of the `j`-th dof on entity `e`.
    pub fn local_index(&self, cell: &[usize; MAX_DIM], e: &Entity, j: usize) -> usize {
        let mut offset = [0; MAX_DIM];
        for a in 0..self.mesh.dim() {
            offset[a] = e.index[a] - cell[a];
        }
        let r = RefEntity { mask: e.mask, offset };
        self.layout[self.ref_index(&r)].1.start + j
    }

    /// Flags for every dof on an entity in the closure of the selected facets.
    pub fn constrained(&self, selector: &DirichletSelector) -> Vec<bool> {
        let mut out = vec![false; self.num_dofs()];
        if selector.is_empty() {
            return out;
        }
        let vd = self.value_dim;
        for d in 0..=self.mesh.dim() {
            if self.per_entity[d] == 0 {
                continue;
            }
            for e in self.mesh.entities(d) {
                if selector.contains(&self.mesh, &e) {
                    for s in self.entity_scalar_dofs(&e) {
                        out[s * vd..(s + 1) * vd].fill(true);
                    }
                }
            }
        }
        out
    }
}

/// Build a numbering whose local layout matches `basis`.
pub fn build_dofmap(mesh: &StructuredMesh, basis: &ElementBasis, value_dim: usize) -> Result<DofMap> {
    if basis.dim() != mesh.dim() {
        return Err(invalid(format!("{}D basis on a {}D mesh", basis.dim(), mesh.dim())));
    }
    let map = DofMap::new(mesh, basis.family(), basis.degree(), value_dim)?;
    for (i, (_, range)) in map.layout.iter().enumerate() {
        if basis.entity_dofs(i) != *range {
            return Err(invalid("basis entity layout does not match the dof map"));
        }
    }
    Ok(map)
}

/// Dof count from the entity-count formulas alone.
pub fn closed_form_dof_count(cells: &[usize], family: Family, k: usize, value_dim: usize) -> usize {
    let dim = cells.len();
    let mut total = 0;
    for mask in 0u8..(1 << dim) {
        let count: usize = (0..dim).map(|a| if mask & (1 << a) != 0 { cells[a] } else { cells[a] + 1 }).product();
        total += count * dofs_per_entity(family, k, mask.count_ones() as usize);
    }
    total * value_dim
}

/// The two stated manufactured solutions on the unit square and cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ManufacturedSolution {
    /// `u = e^{xy} sin(3 pi x) sin(4 pi y)`
    Poisson2d,
    /// `u = e^{xyz} sin(2 pi x) sin(3 pi y) sin(4 pi z)`
    Poisson3d,
}

impl ManufacturedSolution {
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "poisson2d" => Ok(Self::Poisson2d),
            "poisson3d" => Ok(Self::Poisson3d),
            other => Err(invalid(format!("unknown manufactured solution '{other}'"))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::Poisson2d => "poisson2d",
            Self::Poisson3d => "poisson3d",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Poisson2d => 2,
            Self::Poisson3d => 3,
        }
    }

    pub fn exact(&self, x: &[f64]) -> f64 {
        match self {
            Self::Poisson2d => (x[0] * x[1]).exp() * (3.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).sin(),
            Self::Poisson3d => {
                (x[0] * x[1] * x[2]).exp()
                    * (2.0 * PI * x[0]).sin()
                    * (3.0 * PI * x[1]).sin()
                    * (4.0 * PI * x[2]).sin()
            }
        }
    }

    /// `f = -Δu`, differentiated by hand.
    pub fn forcing(&self, x: &[f64]) -> f64 {
        match self {
            Self::Poisson2d => {
                let (px, py) = (x[0], x[1]);
                let e = (px * py).exp();
                let (s, c) = (3.0 * PI * px).sin_cos();
                let (t, d) = (4.0 * PI * py).sin_cos();
                let lap = e
                    * ((px * px + py * py - 25.0 * PI * PI) * s * t
                        + 6.0 * PI * py * c * t
                        + 8.0 * PI * px * s * d);
                -lap
            }
            Self::Poisson3d => {
                let (px, py, pz) = (x[0], x[1], x[2]);
                let e = (px * py * pz).exp();
                let (s1, c1) = (2.0 * PI * px).sin_cos();
                let (s2, c2) = (3.0 * PI * py).sin_cos();
                let (s3, c3) = (4.0 * PI * pz).sin_cos();
                let grad2 = (py * pz).powi(2) + (px * pz).powi(2) + (px * py).powi(2);
                let lap = e
                    * ((grad2 - 29.0 * PI * PI) * s1 * s2 * s3
                        + 4.0 * PI * py * pz * c1 * s2 * s3
                        + 6.0 * PI * px * pz * s1 * c2 * s3
                        + 8.0 * PI * px * py * s1 * s2 * c3);
                -lap
            }
        }
    }
}

impl FromStr for ManufacturedSolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_id(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ProblemKind {
    Poisson,
    Elasticity { lambda: f64, mu: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Forcing {
    Zero,
    /// One constant per component.
    Constant(Vec<f64>),
    Manufactured(ManufacturedSolution),
}

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub forcing: Forcing,
    pub dirichlet: DirichletSelector,
}

/// Plane-stress Lamé constants `(lambda, mu)` from Young's modulus and
/// Poisson's ratio.
pub fn plane_stress_lame(young: f64, poisson: f64) -> (f64, f64) {
    (young * poisson / (1.0 - poisson * poisson), young / (2.0 * (1.0 + poisson)))
}

impl ProblemSpec {
    pub fn poisson(forcing: Forcing, dirichlet: DirichletSelector) -> Self {
        Self { kind: ProblemKind::Poisson, forcing, dirichlet }
    }

    pub fn elasticity(lambda: f64, mu: f64, forcing: Forcing, dirichlet: DirichletSelector) -> Result<Self> {
        if !(mu > 0.0) || !(lambda >= 0.0) {
            return Err(invalid(format!("elasticity needs mu > 0 and lambda >= 0, got mu={mu}, lambda={lambda}")));
        }
        Ok(Self { kind: ProblemKind::Elasticity { lambda, mu }, forcing, dirichlet })
    }

    pub fn value_dim(&self, dim: usize) -> usize {
        match self.kind {
            ProblemKind::Poisson => 1,
            ProblemKind::Elasticity { .. } => dim,
        }
    }
}

/// Physical point of reference coordinate `xi` in `cell`.
fn physical_point(mesh: &StructuredMesh, cell: &[usize; MAX_DIM], xi: &[f64]) -> [f64; MAX_DIM] {
    let mut x = [0.0; MAX_DIM];
    for a in 0..mesh.dim() {
        x[a] = mesh.lower()[a] + (cell[a] as f64 + 0.5 * (xi[a] + 1.0)) * mesh.spacing(a);
    }
    x
}

/// Element matrix on a box with the given edge lengths, local ordering
/// `(i, c) -> i * value_dim + c`.
pub fn element_matrix(basis: &ElementBasis, spacing: &[f64], kind: &ProblemKind) -> DMatrix<f64> {
    let dim = basis.dim();
    let n = basis.ndofs();
    let rule = gauss_rule(basis.degree() + 1, dim);
    let tab = basis.tabulate(&rule);
    let det: f64 = spacing.iter().map(|h| 0.5 * h).product();
    let scale: Vec<f64> = spacing.iter().map(|h| 2.0 / h).collect();
    match *kind {
        ProblemKind::Poisson => {
            let mut k = DMatrix::zeros(n, n);
            for p in 0..tab.npoints {
                let w = rule.weights[p] * det;
                for i in 0..n {
                    for j in 0..n {
                        let g: f64 =
                            (0..dim).map(|a| scale[a] * scale[a] * tab.grad(p, i, a) * tab.grad(p, j, a)).sum();
                        k[(i, j)] += w * g;
                    }
                }
            }
            k
        }
        ProblemKind::Elasticity { lambda, mu } => {
            let vd = dim;
            let m = n * vd;
            let mut k = DMatrix::zeros(m, m);
            for p in 0..tab.npoints {
                let w = rule.weights[p] * det;
                let grad = |i: usize, a: usize| scale[a] * tab.grad(p, i, a);
                for i in 0..n {
                    for j in 0..n {
                        let gg: f64 = (0..dim).map(|a| grad(i, a) * grad(j, a)).sum();
                        for c in 0..vd {
                            for d in 0..vd {
                                let mut v = mu * grad(i, d) * grad(j, c) + lambda * grad(i, c) * grad(j, d);
                                if c == d {
                                    v += mu * gg;
                                }
                                k[(i * vd + c, j * vd + d)] += w * v;
                            }
                        }
                    }
                }
            }
            k
        }
    }
}

/// Global operator applied cell by cell from a single element matrix, with
/// Dirichlet dofs eliminated symmetrically (identity rows and columns).
#[derive(Clone, Debug)]
pub struct ElementOperator {
    dofmap: Arc<DofMap>,
    kernel: Vec<f64>,
    m: usize,
    constrained: Vec<bool>,
    constrained_list: Vec<u32>,
}

impl ElementOperator {
    pub fn new(dofmap: Arc<DofMap>, kernel: &DMatrix<f64>, constrained: Option<Vec<bool>>) -> Self {
        let m = dofmap.local_dofs();
        assert_eq!(kernel.nrows(), m, "element matrix does not match the dof map");
        let mut k = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                k[i * m + j] = kernel[(i, j)];
            }
        }
        let constrained = constrained.unwrap_or_else(|| vec![false; dofmap.num_dofs()]);
        assert_eq!(constrained.len(), dofmap.num_dofs());
        let constrained_list = (0..constrained.len()).filter(|&i| constrained[i]).map(|i| i as u32).collect();
        Self { dofmap, kernel: k, m, constrained, constrained_list }
    }

    pub fn dofmap(&self) -> &Arc<DofMap> {
        &self.dofmap
    }

    pub fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    pub fn element_matrix(&self) -> &[f64] {
        &self.kernel
    }

    /// Same element matrix, different constraints.
    pub fn with_constraints(&self, constrained: Vec<bool>) -> Self {
        let kernel = DMatrix::from_row_slice(self.m, self.m, &self.kernel);
        Self::new(self.dofmap.clone(), &kernel, Some(constrained))
    }

    fn global_local(&self, cell: usize, out: &mut [usize]) {
        let vd = self.dofmap.value_dim();
        for (i, &s) in self.dofmap.cell_scalar_dofs(cell).iter().enumerate() {
            for c in 0..vd {
                out[i * vd + c] = s as usize * vd + c;
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dofmap.num_dofs()];
        let mut g = vec![0; self.m];
        for cell in 0..self.dofmap.mesh().num_cells() {
            self.global_local(cell, &mut g);
            for (l, &gl) in g.iter().enumerate() {
                d[gl] += self.kernel[l * self.m + l];
            }
        }
        for &c in &self.constrained_list {
            d[c as usize] = 1.0;
        }
        d
    }

    /// Explicit sparse matrix of this operator.
    pub fn to_csr(&self) -> CsrMatrix {
        let map = &*self.dofmap;
        let mesh = map.mesh();
        let vd = map.value_dim();
        let n = map.num_dofs();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols: Vec<u32> = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut entries: Vec<(u32, f64)> = Vec::new();
        let mut g = vec![0; self.m];
        for d in 0..=mesh.dim() {
            let per = map.dofs_per_entity(d);
            if per == 0 {
                continue;
            }
            for e in mesh.entities(d) {
                let cells = mesh.cells_containing(&e);
                let first = map.entity_first_dof(&e);
                for j in 0..per {
                    for c in 0..vd {
                        let row = (first + j) * vd + c;
                        entries.clear();
                        if self.constrained[row] {
                            entries.push((row as u32, 1.0));
                        } else {
                            for cell in &cells {
                                let cid = mesh.cell_id(cell);
                                self.global_local(cid, &mut g);
                                let lr = map.local_index(cell, &e, j) * vd + c;
                                let krow = &self.kernel[lr * self.m..(lr + 1) * self.m];
                                for (l, &gl) in g.iter().enumerate() {
                                    if !self.constrained[gl] {
                                        entries.push((gl as u32, krow[l]));
                                    }
                                }
                            }
                            entries.sort_by_key(|t| t.0);
                        }
                        let mut last = u32::MAX;
                        for &(col, v) in &entries {
                            if col == last {
                                *vals.last_mut().unwrap() += v;
                            } else {
                                cols.push(col);
                                vals.push(v);
                                last = col;
                            }
                        }
                        row_ptr.push(cols.len());
                    }
                }
            }
        }
        CsrMatrix::from_parts(n, n, row_ptr, cols, vals)
    }

    /// Dense principal submatrix on the sorted dofs `dofs`, all of whose
    /// couplings lie inside `cells`. Row-major.
    pub fn patch_matrix(&self, cells: &[usize], dofs: &[u32]) -> Vec<f64> {
        let n = dofs.len();
        let mut out = vec![0.0; n * n];
        let mut g = vec![0; self.m];
        let mut found: Vec<(usize, usize)> = Vec::with_capacity(self.m);
        for &cell in cells {
            self.global_local(cell, &mut g);
            found.clear();
            for (l, &gl) in g.iter().enumerate() {
                if let Ok(p) = dofs.binary_search(&(gl as u32)) {
                    found.push((l, p));
                }
            }
            for &(l1, p1) in &found {
                let krow = &self.kernel[l1 * self.m..(l1 + 1) * self.m];
                for &(l2, p2) in &found {
                    out[p1 * n + p2] += krow[l2];
                }
            }
        }
        for (p, &d) in dofs.iter().enumerate() {
            if self.constrained[d as usize] {
                out[p * n..(p + 1) * n].fill(0.0);
                for q in 0..n {
                    out[q * n + p] = 0.0;
                }
                out[p * n + p] = 1.0;
            }
        }
        out
    }
}

impl LinearOperator for ElementOperator {
    fn dim(&self) -> usize {
        self.dofmap.num_dofs()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let m = self.m;
        let mut g = vec![0; m];
        let mut xl = vec![0.0; m];
        let masked;
        let xs: &[f64] = if self.constrained_list.is_empty() {
            x
        } else {
            let mut v = x.to_vec();
            for &c in &self.constrained_list {
                v[c as usize] = 0.0;
            }
            masked = v;
            &masked
        };
        y.fill(0.0);
        for cell in 0..self.dofmap.mesh().num_cells() {
            self.global_local(cell, &mut g);
            for (xv, &gl) in xl.iter_mut().zip(&g) {
                *xv = xs[gl];
            }
            for (l, &gl) in g.iter().enumerate() {
                let row = &self.kernel[l * m..(l + 1) * m];
                let v: f64 = row.iter().zip(&xl).map(|(a, b)| a * b).sum();
                y[gl] += v;
            }
        }
        for &c in &self.constrained_list {
            y[c as usize] = x[c as usize];
        }
    }
}

/// Assembled global operator before boundary conditions.
pub fn assemble_operator(dofmap: &Arc<DofMap>, basis: &ElementBasis, kind: &ProblemKind) -> CsrMatrix {
    let spacing: Vec<f64> = (0..dofmap.mesh().dim()).map(|a| dofmap.mesh().spacing(a)).collect();
    let k = element_matrix(basis, &spacing, kind);
    ElementOperator::new(dofmap.clone(), &k, None).to_csr()
}

/// Load vector `F(v) = ∫ f·v`, with constrained entries zeroed.
pub fn assemble_rhs(dofmap: &DofMap, basis: &ElementBasis, spec: &ProblemSpec) -> Result<Vec<f64>> {
    let n = dofmap.num_dofs();
    let vd = dofmap.value_dim();
    let mesh = dofmap.mesh();
    let dim = mesh.dim();
    let mut out = vec![0.0; n];
    let constant: Vec<f64> = match &spec.forcing {
        Forcing::Zero => return Ok(out),
        Forcing::Constant(v) => {
            if v.len() != vd {
                return Err(invalid(format!("constant forcing has {} components, expected {vd}", v.len())));
            }
            v.clone()
        }
        Forcing::Manufactured(m) => {
            if m.dim() != dim || vd != 1 {
                return Err(invalid(format!("manufactured solution '{}' does not fit this problem", m.id())));
            }
            Vec::new()
        }
    };
    let rule = gauss_rule(basis.degree() + 3, dim);
    let tab = basis.tabulate(&rule);
    let det: f64 = (0..dim).map(|a| 0.5 * mesh.spacing(a)).product();
    let nloc = basis.ndofs();
    let mut fvals = vec![0.0; vd];
    for cell_id in 0..mesh.num_cells() {
        let cell = mesh.cell_multi(cell_id);
        let sd = dofmap.cell_scalar_dofs(cell_id);
        for p in 0..tab.npoints {
            let w = rule.weights[p] * det;
            match &spec.forcing {
                Forcing::Manufactured(m) => {
                    let x = physical_point(mesh, &cell, &rule.points[p]);
                    fvals[0] = m.forcing(&x[..dim]);
                }
                _ => fvals.copy_from_slice(&constant),
            }
            for i in 0..nloc {
                let phi = tab.value(p, i) * w;
                for c in 0..vd {
                    out[sd[i] as usize * vd + c] += phi * fvals[c];
                }
            }
        }
    }
    let constrained = dofmap.constrained(&spec.dirichlet);
    for (v, &c) in out.iter_mut().zip(&constrained) {
        if c {
            *v = 0.0;
        }
    }
    Ok(out)
}

/// Symmetric elimination of the dofs flagged in `constrained`: rows and
/// columns zeroed, unit diagonal, rhs entries zeroed.
pub fn apply_dirichlet_mask(matrix: &mut CsrMatrix, rhs: &mut [f64], constrained: &[bool]) {
    let n = matrix.nrows();
    let ptr = matrix.row_ptr().to_vec();
    let cols = matrix.col_indices().to_vec();
    let vals = matrix.values_mut();
    for i in 0..n {
        for p in ptr[i]..ptr[i + 1] {
            let j = cols[p] as usize;
            if constrained[i] || constrained[j] {
                vals[p] = if i == j { 1.0 } else { 0.0 };
            }
        }
    }
    for (r, &c) in rhs.iter_mut().zip(constrained) {
        if c {
            *r = 0.0;
        }
    }
}

pub fn apply_dirichlet(matrix: &mut CsrMatrix, rhs: &mut [f64], dofmap: &DofMap, selector: &DirichletSelector) {
    let constrained = dofmap.constrained(selector);
    apply_dirichlet_mask(matrix, rhs, &constrained);
}

/// Canonical interpolant: every global functional applied to `f`, whose
/// `value_dim` components are written into the output slice. Moments use
/// `q`-point Gauss rules.
pub fn interpolate(
    dofmap: &DofMap,
    basis: &ElementBasis,
    q: usize,
    f: impl Fn(&[f64], &mut [f64]),
) -> Vec<f64> {
    let mesh = dofmap.mesh();
    let dim = mesh.dim();
    let vd = dofmap.value_dim();
    let rules: Vec<_> = basis.functionals().iter().map(|func| func.rule(q)).collect();
    let mut out = vec![0.0; dofmap.num_dofs()];
    let mut val = vec![0.0; vd];
    for d in 0..=dim {
        for e in mesh.entities(d) {
            let (cell, r) = mesh.owner_cell(&e);
            let range = dofmap.local_range(dofmap.ref_index(&r));
            let first = dofmap.entity_first_dof(&e);
            for (j, l) in range.enumerate() {
                for (xi, w) in &rules[l] {
                    let x = physical_point(mesh, &cell, xi);
                    f(&x[..dim], &mut val);
                    for c in 0..vd {
                        out[(first + j) * vd + c] += w * val[c];
                    }
                }
            }
        }
    }
    out
}

pub fn interpolate_scalar(dofmap: &DofMap, basis: &ElementBasis, q: usize, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    interpolate(dofmap, basis, q, |x, v| v[0] = f(x))
}

/// Value of a finite element field at the physical point `x`.
pub fn evaluate(dofmap: &DofMap, basis: &ElementBasis, u: &[f64], x: &[f64]) -> Vec<f64> {
    let mesh = dofmap.mesh();
    let dim = mesh.dim();
    let vd = dofmap.value_dim();
    let mut cell = [0; MAX_DIM];
    let mut xi = [0.0; MAX_DIM];
    for a in 0..dim {
        let t = (x[a] - mesh.lower()[a]) / mesh.spacing(a);
        let c = (t.floor().max(0.0) as usize).min(mesh.cells_per_axis()[a] - 1);
        cell[a] = c;
        xi[a] = 2.0 * (t - c as f64) - 1.0;
    }
    let phi = basis.eval(&xi[..dim]);
    let sd = dofmap.cell_scalar_dofs(mesh.cell_id(&cell));
    let mut out = vec![0.0; vd];
    for (i, p) in phi.iter().enumerate() {
        for c in 0..vd {
            out[c] += p * u[sd[i] as usize * vd + c];
        }
    }
    out
}

/// `||u_h - u||_{L2}` for a scalar field, with `k+3` Gauss points per axis.
pub fn l2_error(dofmap: &DofMap, basis: &ElementBasis, uh: &[f64], exact: impl Fn(&[f64]) -> f64) -> f64 {
    let mesh = dofmap.mesh();
    let dim = mesh.dim();
    let rule = gauss_rule(basis.degree() + 3, dim);
    let tab = basis.tabulate(&rule);
    let det: f64 = (0..dim).map(|a| 0.5 * mesh.spacing(a)).product();
    let mut total = 0.0;
    for cell_id in 0..mesh.num_cells() {
        let cell = mesh.cell_multi(cell_id);
        let sd = dofmap.cell_scalar_dofs(cell_id);
        for p in 0..tab.npoints {
            let v: f64 = (0..tab.ndofs).map(|i| tab.value(p, i) * uh[sd[i] as usize]).sum();
            let x = physical_point(mesh, &cell, &rule.points[p]);
            let e = v - exact(&x[..dim]);
            total += rule.weights[p] * det * e * e;
        }
    }
    total.sqrt()
}

/// Everything needed to solve one problem on one mesh.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub basis: Arc<ElementBasis>,
    pub dofmap: Arc<DofMap>,
    pub spec: ProblemSpec,
    pub operator: ElementOperator,
}

impl Discretization {
    pub fn new(mesh: &StructuredMesh, family: Family, degree: usize, spec: &ProblemSpec) -> Result<Self> {
        let basis = Arc::new(build_basis(family, degree, mesh.dim())?);
        Self::with_basis(mesh, basis, spec)
    }

    pub fn with_basis(mesh: &StructuredMesh, basis: Arc<ElementBasis>, spec: &ProblemSpec) -> Result<Self> {
        let dofmap = Arc::new(build_dofmap(mesh, &basis, spec.value_dim(mesh.dim()))?);
        let spacing: Vec<f64> = (0..mesh.dim()).map(|a| mesh.spacing(a)).collect();
        let k = element_matrix(&basis, &spacing, &spec.kind);
        let constrained = dofmap.constrained(&spec.dirichlet);
        let operator = ElementOperator::new(dofmap.clone(), &k, Some(constrained));
        Ok(Self { basis, dofmap, spec: spec.clone(), operator })
    }

    pub fn mesh(&self) -> &StructuredMesh {
        self.dofmap.mesh()
    }

    pub fn num_dofs(&self) -> usize {
        self.dofmap.num_dofs()
    }

    pub fn constrained(&self) -> &[bool] {
        self.operator.constrained()
    }

    pub fn rhs(&self) -> Result<Vec<f64>> {
        assemble_rhs(&self.dofmap, &self.basis, &self.spec)
    }
}
