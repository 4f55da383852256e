//! Structured quadrilateral and hexahedral meshes of axis-aligned boxes.
//!
//! Every mesh entity (vertex, edge, face, cell) is described by the set of
//! axes it spans, stored as a bit mask, together with the grid index of its
//! lower corner. A vertex spans no axis, an x-edge spans axis 0, a cell spans
//! all of them. Entities of one topological dimension are numbered class by
//! class (ascending mask) and lexicographically within a class, x fastest.

use crate::error::{invalid, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Which end of an axis a boundary facet sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Low,
    High,
}

/// A mesh entity: spanned axes plus grid index of its lowest vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Entity {
    pub mask: u8,
    pub index: [usize; MAX_DIM],
}

impl Entity {
    pub fn dim(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn spans(&self, axis: usize) -> bool {
        self.mask & (1 << axis) != 0
    }
}

/// An entity of the reference cell `[0,1]^dim`, identified by its spanned
/// axes and its 0/1 offset along the remaining ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RefEntity {
    pub mask: u8,
    pub offset: [usize; MAX_DIM],
}

impl RefEntity {
    pub fn dim(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn spans(&self, axis: usize) -> bool {
        self.mask & (1 << axis) != 0
    }

    /// Axes spanned by this entity, ascending.
    pub fn axes(&self, dim: usize) -> Vec<usize> {
        (0..dim).filter(|&a| self.spans(a)).collect()
    }

    /// The global entity this reference entity maps to in cell `cell`.
    pub fn global(&self, cell: &[usize; MAX_DIM]) -> Entity {
        let mut index = *cell;
        for (i, o) in index.iter_mut().zip(self.offset.iter()) {
            *i += o;
        }
        Entity { mask: self.mask, index }
    }
}

/// Axis masks with `d` bits set among the first `dim` axes, ascending.
pub fn classes(dim: usize, d: usize) -> Vec<u8> {
    (0u8..(1 << dim)).filter(|m| m.count_ones() as usize == d).collect()
}

/// Entities of the reference cell in canonical order: by dimension, then
/// class, then offsets lexicographically (x fastest). Vertices therefore come
/// out as (0,0), (1,0), (0,1), (1,1) in 2D.
pub fn reference_entities(dim: usize) -> Vec<RefEntity> {
    let mut out = Vec::new();
    for d in 0..=dim {
        for mask in classes(dim, d) {
            let free: Vec<usize> = (0..dim).filter(|a| mask & (1 << a) == 0).collect();
            for bits in 0..(1usize << free.len()) {
                let mut offset = [0; MAX_DIM];
                for (j, &a) in free.iter().enumerate() {
                    offset[a] = (bits >> j) & 1;
                }
                out.push(RefEntity { mask, offset });
            }
        }
    }
    out
}

/// Tensor-product mesh of `cells[0] x ... x cells[dim-1]` equal boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuredMesh {
    dim: usize,
    cells: [usize; MAX_DIM],
    lower: [f64; MAX_DIM],
    upper: [f64; MAX_DIM],
}

impl StructuredMesh {
    pub fn new(dim: usize, cells_per_axis: &[usize], lower: &[f64], upper: &[f64]) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(invalid(format!("mesh dimension must be 2 or 3, got {dim}")));
        }
        if cells_per_axis.len() != dim || lower.len() != dim || upper.len() != dim {
            return Err(invalid("axis counts and box corners must have one entry per dimension"));
        }
        let mut cells = [0; MAX_DIM];
        let mut lo = [0.0; MAX_DIM];
        let mut hi = [0.0; MAX_DIM];
        for a in 0..dim {
            if cells_per_axis[a] == 0 {
                return Err(invalid(format!("axis {a} has zero cells")));
            }
            if !(upper[a] > lower[a]) {
                return Err(invalid(format!("box has non-positive extent along axis {a}")));
            }
            cells[a] = cells_per_axis[a];
            lo[a] = lower[a];
            hi[a] = upper[a];
        }
        Ok(Self { dim, cells, lower: lo, upper: hi })
    }

    /// `n^dim` cells on the unit square or cube.
    pub fn unit(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, &vec![n; dim], &vec![0.0; dim], &vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower[..self.dim]
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper[..self.dim]
    }

    /// Cell width along `axis`. Every cell has the same size.
    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.cells[axis] as f64
    }

    /// Largest cell width.
    pub fn h(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    /// Human-readable size such as `32x32`.
    pub fn descriptor(&self) -> String {
        self.cells_per_axis()
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join("x")
    }

    /// Number of grid positions of entities in class `mask` along each axis.
    pub fn class_shape(&self, mask: u8) -> [usize; MAX_DIM] {
        let mut shape = [1; MAX_DIM];
        for (a, s) in shape.iter_mut().enumerate().take(self.dim) {
            *s = if mask & (1 << a) != 0 { self.cells[a] } else { self.cells[a] + 1 };
        }
        shape
    }

    pub fn class_len(&self, mask: u8) -> usize {
        self.class_shape(mask).iter().product()
    }

    pub fn num_entities(&self, d: usize) -> usize {
        classes(self.dim, d).into_iter().map(|m| self.class_len(m)).sum()
    }

    pub fn num_vertices(&self) -> usize {
        self.num_entities(0)
    }

    pub fn num_edges(&self) -> usize {
        self.num_entities(1)
    }

    /// Two-dimensional entities. In 2D these are the cells.
    pub fn num_faces(&self) -> usize {
        self.num_entities(2)
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_axis().iter().product()
    }

    fn class_offset(&self, mask: u8) -> usize {
        let d = mask.count_ones() as usize;
        classes(self.dim, d)
            .into_iter()
            .take_while(|&m| m != mask)
            .map(|m| self.class_len(m))
            .sum()
    }

    /// Id of `e` among the entities of its dimension.
    pub fn entity_id(&self, e: &Entity) -> usize {
        let shape = self.class_shape(e.mask);
        self.class_offset(e.mask) + e.index[0] + shape[0] * (e.index[1] + shape[1] * e.index[2])
    }

    /// Inverse of [`entity_id`](Self::entity_id).
    pub fn entity(&self, d: usize, id: usize) -> Entity {
        let mut rest = id;
        for mask in classes(self.dim, d) {
            let len = self.class_len(mask);
            if rest < len {
                let shape = self.class_shape(mask);
                let index = [rest % shape[0], (rest / shape[0]) % shape[1], rest / (shape[0] * shape[1])];
                return Entity { mask, index };
            }
            rest -= len;
        }
        panic!("entity id {id} out of range for dimension {d}");
    }

    /// All entities of dimension `d` in id order.
    pub fn entities(&self, d: usize) -> impl Iterator<Item = Entity> + '_ {
        classes(self.dim, d).into_iter().flat_map(move |mask| {
            let shape = self.class_shape(mask);
            (0..shape[2]).flat_map(move |k| {
                (0..shape[1]).flat_map(move |j| (0..shape[0]).map(move |i| Entity { mask, index: [i, j, k] }))
            })
        })
    }

    pub fn vertex_coords(&self, index: &[usize; MAX_DIM]) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = self.lower[a] + index[a] as f64 * self.spacing(a);
        }
        x
    }

    pub fn cell_multi(&self, id: usize) -> [usize; MAX_DIM] {
        let n = &self.cells;
        match self.dim {
            2 => [id % n[0], id / n[0], 0],
            _ => [id % n[0], (id / n[0]) % n[1], id / (n[0] * n[1])],
        }
    }

    pub fn cell_id(&self, c: &[usize; MAX_DIM]) -> usize {
        let n = &self.cells;
        c[0] + n[0] * (c[1] + n[1] * c[2])
    }

    /// Cells whose closure contains `e`, in ascending cell id.
    pub fn cells_containing(&self, e: &Entity) -> Vec<[usize; MAX_DIM]> {
        let mut ranges = [(0usize, 1usize); MAX_DIM];
        for (a, range) in ranges.iter_mut().enumerate().take(self.dim) {
            *range = if e.spans(a) {
                (e.index[a], e.index[a] + 1)
            } else {
                (e.index[a].saturating_sub(1), (e.index[a] + 1).min(self.cells[a]))
            };
        }
        let mut out = Vec::with_capacity(1 << self.dim);
        for k in ranges[2].0..ranges[2].1 {
            for j in ranges[1].0..ranges[1].1 {
                for i in ranges[0].0..ranges[0].1 {
                    out.push([i, j, k]);
                }
            }
        }
        out
    }

    /// One cell containing `e`, plus the reference entity `e` is in that cell.
    pub fn owner_cell(&self, e: &Entity) -> ([usize; MAX_DIM], RefEntity) {
        let mut cell = [0; MAX_DIM];
        let mut offset = [0; MAX_DIM];
        for a in 0..self.dim {
            if e.spans(a) {
                cell[a] = e.index[a];
            } else {
                cell[a] = e.index[a].min(self.cells[a] - 1);
                offset[a] = e.index[a] - cell[a];
            }
        }
        (cell, RefEntity { mask: e.mask, offset })
    }

    /// Whether `e` lies in the closure of the boundary facet `(axis, side)`.
    pub fn on_side(&self, e: &Entity, axis: usize, side: Side) -> bool {
        if e.spans(axis) {
            return false;
        }
        match side {
            Side::Low => e.index[axis] == 0,
            Side::High => e.index[axis] == self.cells[axis],
        }
    }

    pub fn on_boundary(&self, e: &Entity) -> bool {
        (0..self.dim).any(|a| self.on_side(e, a, Side::Low) || self.on_side(e, a, Side::High))
    }

    /// Uniform refinement: every cell split into `2^dim` children.
    pub fn refine(&self) -> StructuredMesh {
        let mut cells = self.cells;
        for c in cells.iter_mut().take(self.dim) {
            *c *= 2;
        }
        StructuredMesh { dim: self.dim, cells, lower: self.lower, upper: self.upper }
    }
}

/// Boundary facets carrying homogeneous Dirichlet conditions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DirichletSelector {
    sides: Vec<(usize, Side)>,
}

impl DirichletSelector {
    /// Every boundary facet.
    pub fn all(dim: usize) -> Self {
        let sides = (0..dim).flat_map(|a| [(a, Side::Low), (a, Side::High)]).collect();
        Self { sides }
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn sides(sides: impl IntoIterator<Item = (usize, Side)>) -> Self {
        Self { sides: sides.into_iter().collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.sides.is_empty()
    }

    pub fn selected(&self) -> &[(usize, Side)] {
        &self.sides
    }

    /// Whether `e` lies in the closure of the selected facets.
    pub fn contains(&self, mesh: &StructuredMesh, e: &Entity) -> bool {
        self.sides.iter().any(|&(a, s)| mesh.on_side(e, a, s))
    }
}

/// Vertex ids not in the closure of the Dirichlet boundary. These are the
/// centres of the vertex patches.
pub fn interior_vertices(mesh: &StructuredMesh, dirichlet: &DirichletSelector) -> Vec<usize> {
    mesh.entities(0)
        .enumerate()
        .filter(|(_, v)| !dirichlet.contains(mesh, v))
        .map(|(id, _)| id)
        .collect()
}

/// Nested sequence of uniformly refined meshes, coarsest first.
#[derive(Clone, Debug)]
pub struct MeshHierarchy {
    levels: Vec<StructuredMesh>,
}

impl MeshHierarchy {
    pub fn levels(&self) -> &[StructuredMesh] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn finest(&self) -> &StructuredMesh {
        self.levels.last().expect("hierarchy has at least one level")
    }

    pub fn coarsest(&self) -> &StructuredMesh {
        &self.levels[0]
    }

    /// Parent cell on level `level - 1` of fine cell `cell` on `level`, and
    /// the child's 0/1 position inside the parent.
    pub fn parent(cell: &[usize; MAX_DIM]) -> ([usize; MAX_DIM], [usize; MAX_DIM]) {
        let mut parent = [0; MAX_DIM];
        let mut pos = [0; MAX_DIM];
        for a in 0..MAX_DIM {
            parent[a] = cell[a] / 2;
            pos[a] = cell[a] % 2;
        }
        (parent, pos)
    }

    /// Truncate to the first `n` levels.
    pub fn truncated(&self, n: usize) -> MeshHierarchy {
        MeshHierarchy { levels: self.levels[..n.clamp(1, self.levels.len())].to_vec() }
    }
}

/// Refine `mesh` uniformly `times` times.
pub fn refine_uniform(mesh: &StructuredMesh, times: usize) -> MeshHierarchy {
    let mut levels = vec![mesh.clone()];
    for _ in 0..times {
        let next = levels.last().unwrap().refine();
        levels.push(next);
    }
    MeshHierarchy { levels }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_2d() {
        let m = StructuredMesh::unit(2, 8).unwrap();
        assert_eq!(m.num_vertices(), 81);
        assert_eq!(m.num_edges(), 144);
        assert_eq!(m.num_cells(), 64);
        let one = StructuredMesh::unit(2, 1).unwrap();
        assert_eq!((one.num_vertices(), one.num_edges(), one.num_cells()), (4, 4, 1));
    }

    #[test]
    fn counts_3d() {
        let m = StructuredMesh::unit(3, 4).unwrap();
        assert_eq!(m.num_vertices(), 125);
        assert_eq!(m.num_cells(), 64);
        // 3 * 4 * 5 * 5 edges, 3 * 4 * 4 * 5 faces
        assert_eq!(m.num_edges(), 300);
        assert_eq!(m.num_faces(), 240);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(StructuredMesh::new(2, &[0, 3], &[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(StructuredMesh::new(2, &[2, 3], &[0.0, 1.0], &[1.0, 1.0]).is_err());
        assert!(StructuredMesh::new(4, &[1; 4], &[0.0; 4], &[1.0; 4]).is_err());
    }

    #[test]
    fn euler_characteristic_2d() {
        for (nx, ny) in [(1, 1), (3, 5), (125, 5)] {
            let m = StructuredMesh::new(2, &[nx, ny], &[0.0, 0.0], &[1.0, 2.0]).unwrap();
            let chi = m.num_vertices() as i64 - m.num_edges() as i64 + m.num_cells() as i64;
            assert_eq!(chi, 1);
        }
    }

    #[test]
    fn entity_ids_roundtrip() {
        let m = StructuredMesh::new(3, &[2, 3, 4], &[0.0; 3], &[1.0; 3]).unwrap();
        for d in 0..=3 {
            for (id, e) in m.entities(d).enumerate() {
                assert_eq!(m.entity_id(&e), id);
                assert_eq!(m.entity(d, id), e);
            }
        }
    }

    #[test]
    fn reference_vertex_order_is_lexicographic() {
        let r = reference_entities(2);
        let verts: Vec<_> = r.iter().filter(|e| e.dim() == 0).map(|e| (e.offset[0], e.offset[1])).collect();
        assert_eq!(verts, vec![(0, 0), (1, 0), (0, 1), (1, 1)]);
        assert_eq!(r.len(), 9);
        assert_eq!(reference_entities(3).len(), 27);
    }

    #[test]
    fn interior_vertices_counts() {
        let all2 = DirichletSelector::all(2);
        assert_eq!(interior_vertices(&StructuredMesh::unit(2, 2).unwrap(), &all2), vec![4]);
        assert_eq!(interior_vertices(&StructuredMesh::unit(2, 32).unwrap(), &all2).len(), 961);
        let m3 = StructuredMesh::unit(3, 2).unwrap();
        assert_eq!(interior_vertices(&m3, &DirichletSelector::all(3)), vec![13]);
    }

    #[test]
    fn cantilever_patch_centres() {
        let m = StructuredMesh::new(2, &[125, 5], &[0.0, 0.0], &[25.0, 1.0]).unwrap();
        let clamp = DirichletSelector::sides([(0, Side::Low)]);
        assert_eq!(interior_vertices(&m, &clamp).len(), m.num_vertices() - 6);
    }

    #[test]
    fn vertex_partition() {
        // interior, Dirichlet closure and free boundary vertices partition the set
        let m = StructuredMesh::new(2, &[6, 4], &[0.0, 0.0], &[3.0, 1.0]).unwrap();
        let sel = DirichletSelector::sides([(0, Side::Low), (1, Side::High)]);
        let mut strict = 0;
        let mut dir = 0;
        let mut free_bdry = 0;
        for v in m.entities(0) {
            match (sel.contains(&m, &v), m.on_boundary(&v)) {
                (true, _) => dir += 1,
                (false, true) => free_bdry += 1,
                (false, false) => strict += 1,
            }
        }
        assert_eq!(strict + dir + free_bdry, m.num_vertices());
        assert_eq!(interior_vertices(&m, &sel).len(), strict + free_bdry);
        assert_eq!(dir, 5 + 7 - 1);
    }

    #[test]
    fn hierarchy_sizes_and_nesting() {
        let base = StructuredMesh::unit(2, 8).unwrap();
        let h = refine_uniform(&base, 6);
        assert_eq!(h.len(), 7);
        assert_eq!(h.finest().cells_per_axis(), &[512, 512]);
        for (l, m) in h.levels().iter().enumerate() {
            assert_eq!(m.num_cells(), (1 << (2 * l)) * base.num_cells());
        }
        // coarse vertices reappear with bit-identical coordinates
        for w in h.levels().windows(2) {
            let (c, f) = (&w[0], &w[1]);
            for v in c.entities(0) {
                let fine = [2 * v.index[0], 2 * v.index[1], 0];
                assert_eq!(c.vertex_coords(&v.index), f.vertex_coords(&fine));
            }
        }
        let single = refine_uniform(&base, 0);
        assert_eq!(single.len(), 1);
        assert_eq!(single.finest(), &base);

        let beam = StructuredMesh::new(2, &[125, 5], &[0.0, 0.0], &[25.0, 1.0]).unwrap();
        assert_eq!(refine_uniform(&beam, 2).finest().cells_per_axis(), &[500, 20]);
    }

    #[test]
    fn fine_vertices_classify_against_coarse_entities() {
        // every fine vertex is a coarse vertex, edge midpoint, face or cell centre
        let coarse = StructuredMesh::unit(3, 2).unwrap();
        let fine = coarse.refine();
        for v in fine.entities(0) {
            let mask = (0..3).fold(0u8, |m, a| if v.index[a] % 2 == 1 { m | (1 << a) } else { m });
            let idx = [v.index[0] / 2, v.index[1] / 2, v.index[2] / 2];
            let e = Entity { mask, index: idx };
            let id = coarse.entity_id(&e);
            assert!(id < coarse.num_entities(e.dim()));
        }
    }

    #[test]
    fn cells_containing_interior_vertex() {
        let m = StructuredMesh::unit(3, 3).unwrap();
        let v = Entity { mask: 0, index: [1, 2, 1] };
        assert_eq!(m.cells_containing(&v).len(), 8);
        let m2 = StructuredMesh::unit(2, 3).unwrap();
        assert_eq!(m2.cells_containing(&Entity { mask: 0, index: [1, 1, 0] }).len(), 4);
        assert_eq!(m2.cells_containing(&Entity { mask: 0, index: [0, 1, 0] }).len(), 2);
        assert_eq!(m2.cells_containing(&Entity { mask: 1, index: [1, 1, 0] }).len(), 2);
    }

    #[test]
    fn owner_cell_maps_back() {
        let m = StructuredMesh::new(3, &[2, 3, 2], &[0.0; 3], &[1.0; 3]).unwrap();
        for d in 0..=3 {
            for e in m.entities(d) {
                let (cell, r) = m.owner_cell(&e);
                assert_eq!(r.global(&cell), e);
            }
        }
    }
}
