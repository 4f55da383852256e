//! Polynomial spaces P_k, Q_k and S_k on the reference box `[-1,1]^dim`,
//! their degrees of freedom, and the dual (nodal) bases built from them.
//!
//! The serendipity space S_k is the span of all monomials of superlinear
//! degree at most k. Its degrees of freedom are vertex values, moments
//! against Legendre polynomials of degree `0..=k-2` on edges, moments against
//! Legendre products of total degree `<= k-4` on faces and `<= k-6` in the
//! interior of 3D cells. Q_k uses the tensor analogue (`0..=k-2` per axis).
//!
//! Basis functions are expanded in tensor Legendre products indexed by the
//! same exponent set as the monomials of the space. The exponent set is
//! closed under decreasing an exponent, so the two spans agree, and the
//! Legendre expansion keeps the generalized Vandermonde well conditioned.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mesh::{reference_entities, RefEntity, MAX_DIM};

/// Highest polynomial degree accepted by [`build_basis`].
pub const MAX_DEGREE: usize = 6;

/// Reject Vandermonde matrices worse conditioned than this.
pub const MAX_VANDERMONDE_COND: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Total degree.
    P,
    /// Tensor product.
    Q,
    /// Serendipity.
    S,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::P => "P",
            Family::Q => "Q",
            Family::S => "S",
        };
        f.write_str(s)
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "P" | "p" => Ok(Family::P),
            "Q" | "q" => Ok(Family::Q),
            "S" | "s" => Ok(Family::S),
            other => Err(invalid(format!("unknown element family '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial {
    pub exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(exponents: &[u32]) -> Self {
        Self { exponents: exponents.to_vec() }
    }

    pub fn total_degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    /// Sum of the exponents that are at least 2.
    pub fn superlinear_degree(&self) -> u32 {
        superlinear_degree(&self.exponents)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exponents.iter().zip(x).map(|(&e, &xi)| xi.powi(e as i32)).product()
    }
}

pub fn superlinear_degree(exponents: &[u32]) -> u32 {
    exponents.iter().filter(|&&e| e >= 2).sum()
}

fn binomial(n: usize, r: usize) -> usize {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    (0..r).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Dimension of P_m in `d` variables, zero for negative `m`.
pub fn dim_p(m: i64, d: usize) -> usize {
    if m < 0 {
        0
    } else {
        binomial(m as usize + d, d)
    }
}

/// Dimension of a local space, from closed-form counting.
pub fn dim_space(family: Family, k: usize, dim: usize) -> Result<usize> {
    if k < 1 {
        return Err(invalid("polynomial degree must be at least 1"));
    }
    if !(1..=MAX_DIM).contains(&dim) {
        return Err(invalid(format!("unsupported dimension {dim}")));
    }
    Ok(match family {
        Family::P => dim_p(k as i64, dim),
        Family::Q => (k + 1).pow(dim as u32),
        // sum over d of 2^(n-d) C(n,d) C(k-d,d)
        Family::S => (0..=dim.min(k / 2))
            .map(|d| (1usize << (dim - d)) * binomial(dim, d) * binomial(k - d, d))
            .sum(),
    })
}

fn in_space(family: Family, k: u32, exps: &[u32]) -> bool {
    match family {
        Family::P => exps.iter().sum::<u32>() <= k,
        Family::Q => exps.iter().all(|&e| e <= k),
        Family::S => exps.iter().all(|&e| e <= k) && superlinear_degree(exps) <= k,
    }
}

/// Multi-indices in `dim` variables with every entry `<= max`, x fastest.
fn box_indices(dim: usize, max: u32) -> Vec<Vec<u32>> {
    let side = max as usize + 1;
    (0..side.pow(dim as u32))
        .map(|mut n| {
            (0..dim)
                .map(|_| {
                    let e = (n % side) as u32;
                    n /= side;
                    e
                })
                .collect()
        })
        .collect()
}

fn grlex_sort(list: &mut [Vec<u32>]) {
    list.sort_by(|a, b| {
        let (ta, tb): (u32, u32) = (a.iter().sum(), b.iter().sum());
        ta.cmp(&tb).then_with(|| b.cmp(a))
    });
}

/// Monomial basis of a space in graded lexicographic order.
pub fn enumerate_monomials(family: Family, k: usize, dim: usize) -> Result<Vec<Monomial>> {
    dim_space(family, k, dim)?;
    let mut exps: Vec<Vec<u32>> = box_indices(dim, k as u32)
        .into_iter()
        .filter(|e| in_space(family, k as u32, e))
        .collect();
    grlex_sort(&mut exps);
    Ok(exps.into_iter().map(|exponents| Monomial { exponents }).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolySpace {
    pub family: Family,
    pub degree: usize,
    pub dim: usize,
    pub monomials: Vec<Monomial>,
}

impl PolySpace {
    pub fn new(family: Family, degree: usize, dim: usize) -> Result<Self> {
        let monomials = enumerate_monomials(family, degree, dim)?;
        Ok(Self { family, degree, dim, monomials })
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn name(&self) -> String {
        format!("{}_{} ({}D)", self.family, self.degree, self.dim)
    }
}

/// Number of degrees of freedom attached to one entity of dimension `d`.
pub fn dofs_per_entity(family: Family, k: usize, d: usize) -> usize {
    if d == 0 {
        return 1;
    }
    match family {
        Family::Q => (k - 1).pow(d as u32),
        Family::S => dim_p(k as i64 - 2 * d as i64, d),
        // Lagrange P_k on simplices: interior points of a d-simplex
        Family::P => dim_p(k as i64 - d as i64 - 1, d),
    }
}

/// Legendre moment indices attached to an entity of dimension `d`.
fn moment_indices(family: Family, k: usize, d: usize) -> Vec<Vec<u32>> {
    if d == 0 {
        return vec![vec![]];
    }
    if k < 2 {
        return vec![];
    }
    let mut list: Vec<Vec<u32>> = match family {
        Family::Q => box_indices(d, k as u32 - 2),
        _ => {
            let top = k as i64 - 2 * d as i64;
            if top < 0 {
                return vec![];
            }
            box_indices(d, top as u32)
                .into_iter()
                .filter(|b| b.iter().sum::<u32>() as i64 <= top)
                .collect()
        }
    };
    grlex_sort(&mut list);
    list
}

/// Legendre polynomials `L_0..=L_n` and their derivatives at `x`.
pub fn legendre(n: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n + 1];
    let mut d = vec![0.0; n + 1];
    v[0] = 1.0;
    if n >= 1 {
        v[1] = x;
        d[1] = 1.0;
    }
    for m in 1..n {
        let mf = m as f64;
        v[m + 1] = ((2.0 * mf + 1.0) * x * v[m] - mf * v[m - 1]) / (mf + 1.0);
        d[m + 1] = (mf + 1.0) * v[m] + x * d[m];
    }
    (v, d)
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1,1]`.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1, "need at least one quadrature point");
    let mut pts = vec![0.0; q];
    let mut wts = vec![0.0; q];
    for i in 0..q {
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (v, d) = legendre(q, x);
            let dx = v[q] / d[q];
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(q, x);
        pts[i] = x;
        wts[i] = 2.0 / ((1.0 - x * x) * d[q] * d[q]);
    }
    (pts, wts)
}

/// Tensor Gauss rule on `[-1,1]^dim`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub dim: usize,
    pub points: Vec<[f64; MAX_DIM]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(&p[..self.dim])).sum()
    }
}

/// `q` points per axis; exact for Q_{2q-1}.
pub fn gauss_rule(q: usize, dim: usize) -> QuadratureRule {
    let (x, w) = gauss_legendre(q);
    let n = q.pow(dim as u32);
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for idx in 0..n {
        let mut p = [0.0; MAX_DIM];
        let mut wt = 1.0;
        let mut rest = idx;
        for pa in p.iter_mut().take(dim) {
            let i = rest % q;
            rest /= q;
            *pa = x[i];
            wt *= w[i];
        }
        points.push(p);
        weights.push(wt);
    }
    QuadratureRule { dim, points, weights }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DofKind {
    VertexEval,
    EdgeMoment,
    FaceMoment,
    InteriorMoment,
}

/// One degree of freedom: a point value at a reference vertex, or a moment
/// of the trace on a reference entity against a product of Legendre
/// polynomials (one degree per spanned axis, ascending axis order).
#[derive(Clone, Debug, PartialEq)]
pub struct DofFunctional {
    pub entity: RefEntity,
    /// Position of `entity` in [`reference_entities`].
    pub entity_index: usize,
    pub moment: Vec<u32>,
    cell_dim: usize,
}

impl DofFunctional {
    pub fn kind(&self) -> DofKind {
        match (self.entity.dim(), self.cell_dim) {
            (0, _) => DofKind::VertexEval,
            (1, _) => DofKind::EdgeMoment,
            (d, n) if d == n => DofKind::InteriorMoment,
            _ => DofKind::FaceMoment,
        }
    }

    /// Quadrature realization: the functional equals `sum w * f(x)` over the
    /// returned pairs, exactly for integrands of degree `<= 2q-1` per axis.
    pub fn rule(&self, q: usize) -> Vec<([f64; MAX_DIM], f64)> {
        let dim = self.cell_dim;
        let mut base = [0.0; MAX_DIM];
        for (a, b) in base.iter_mut().enumerate().take(dim) {
            *b = if self.entity.offset[a] == 1 { 1.0 } else { -1.0 };
        }
        let axes = self.entity.axes(dim);
        if axes.is_empty() {
            return vec![(base, 1.0)];
        }
        let top = self.moment.iter().copied().max().unwrap_or(0) as usize;
        let sub = gauss_rule(q, axes.len());
        sub.points
            .iter()
            .zip(&sub.weights)
            .map(|(t, w)| {
                let mut x = base;
                let mut weight = *w;
                for (j, &a) in axes.iter().enumerate() {
                    x[a] = t[j];
                    let (l, _) = legendre(top, t[j]);
                    let b = self.moment[j] as usize;
                    weight *= l[b] * (2.0 * b as f64 + 1.0) / 2.0;
                }
                (x, weight)
            })
            .collect()
    }

    pub fn apply(&self, q: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.rule(q).iter().map(|(x, w)| w * f(&x[..self.cell_dim])).sum()
    }
}

/// Degrees of freedom of S_k or Q_k, grouped by reference entity in
/// canonical order.
pub fn build_dof_functionals(family: Family, k: usize, dim: usize) -> Result<Vec<DofFunctional>> {
    if family == Family::P {
        return Err(invalid("P_k elements on boxes are not supported; P_k is used for counting only"));
    }
    dim_space(family, k, dim)?;
    let mut out = Vec::new();
    for (entity_index, entity) in reference_entities(dim).into_iter().enumerate() {
        for moment in moment_indices(family, k, entity.dim()) {
            out.push(DofFunctional { entity, entity_index, moment, cell_dim: dim });
        }
    }
    Ok(out)
}

/// Values and gradients of every basis function at a set of points.
#[derive(Clone, Debug)]
pub struct Tabulation {
    pub dim: usize,
    pub npoints: usize,
    pub ndofs: usize,
    /// `values[p * ndofs + i]`
    pub values: Vec<f64>,
    /// `grads[(p * ndofs + i) * dim + a]`
    pub grads: Vec<f64>,
}

impl Tabulation {
    pub fn value(&self, p: usize, i: usize) -> f64 {
        self.values[p * self.ndofs + i]
    }

    pub fn grad(&self, p: usize, i: usize, a: usize) -> f64 {
        self.grads[(p * self.ndofs + i) * self.dim + a]
    }
}

/// Dual basis of S_k or Q_k on `[-1,1]^dim`.
#[derive(Clone, Debug)]
pub struct ElementBasis {
    space: PolySpace,
    functionals: Vec<DofFunctional>,
    entity_dofs: Vec<Range<usize>>,
    /// Column j holds the Legendre coefficients of basis function j.
    coeffs: DMatrix<f64>,
    vandermonde_cond: f64,
}

/// Build the nodal basis dual to [`build_dof_functionals`].
pub fn build_basis(family: Family, k: usize, dim: usize) -> Result<ElementBasis> {
    if !(2..=3).contains(&dim) {
        return Err(invalid(format!("element dimension must be 2 or 3, got {dim}")));
    }
    if k > MAX_DEGREE {
        return Err(invalid(format!("degree {k} exceeds the supported maximum {MAX_DEGREE}")));
    }
    let space = PolySpace::new(family, k, dim)?;
    let functionals = build_dof_functionals(family, k, dim)?;
    let fail = |reason: String| Error::BasisConstruction { space: space.name(), reason };
    if functionals.len() != space.len() {
        return Err(fail(format!("{} functionals for a space of dimension {}", functionals.len(), space.len())));
    }
    let n = space.len();
    let q = k + 1;
    let mut v = DMatrix::zeros(n, n);
    for (i, func) in functionals.iter().enumerate() {
        for (x, w) in func.rule(q) {
            let vals = prime_values(&space, &x[..dim]);
            for (m, pv) in vals.iter().enumerate() {
                v[(i, m)] += w * pv;
            }
        }
    }
    let sv = v.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_VANDERMONDE_COND) {
        return Err(fail(format!("generalized Vandermonde is singular or ill-conditioned (cond {cond:e})")));
    }
    let coeffs = v.try_inverse().ok_or_else(|| fail("generalized Vandermonde is singular".into()))?;

    let nent = reference_entities(dim).len();
    let mut entity_dofs = vec![0..0; nent];
    let mut start = 0;
    for (e, range) in entity_dofs.iter_mut().enumerate() {
        let count = functionals.iter().filter(|f| f.entity_index == e).count();
        *range = start..start + count;
        start += count;
    }
    Ok(ElementBasis { space, functionals, entity_dofs, coeffs, vandermonde_cond: cond })
}

/// Tensor Legendre products over the exponent set of `space`.
fn prime_values(space: &PolySpace, x: &[f64]) -> Vec<f64> {
    let tables: Vec<Vec<f64>> = x.iter().map(|&xi| legendre(space.degree, xi).0).collect();
    space
        .monomials
        .iter()
        .map(|m| m.exponents.iter().enumerate().map(|(a, &e)| tables[a][e as usize]).product())
        .collect()
}

fn prime_values_and_grads(space: &PolySpace, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let dim = x.len();
    let tables: Vec<(Vec<f64>, Vec<f64>)> = x.iter().map(|&xi| legendre(space.degree, xi)).collect();
    let mut vals = Vec::with_capacity(space.len());
    let mut grads = vec![Vec::with_capacity(space.len()); dim];
    for m in &space.monomials {
        let e: Vec<usize> = m.exponents.iter().map(|&e| e as usize).collect();
        vals.push((0..dim).map(|a| tables[a].0[e[a]]).product());
        for (b, g) in grads.iter_mut().enumerate() {
            g.push(
                (0..dim)
                    .map(|a| if a == b { tables[a].1[e[a]] } else { tables[a].0[e[a]] })
                    .product(),
            );
        }
    }
    (vals, grads)
}

impl ElementBasis {
    pub fn space(&self) -> &PolySpace {
        &self.space
    }

    pub fn family(&self) -> Family {
        self.space.family
    }

    pub fn degree(&self) -> usize {
        self.space.degree
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    pub fn ndofs(&self) -> usize {
        self.functionals.len()
    }

    pub fn functionals(&self) -> &[DofFunctional] {
        &self.functionals
    }

    /// Local dofs attached to reference entity `e` (index into [`reference_entities`]).
    pub fn entity_dofs(&self, e: usize) -> Range<usize> {
        self.entity_dofs[e].clone()
    }

    pub fn dofs_per_entity(&self, d: usize) -> usize {
        dofs_per_entity(self.family(), self.degree(), d)
    }

    pub fn vandermonde_condition(&self) -> f64 {
        self.vandermonde_cond
    }

    /// Values of all basis functions at `x`.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let p = prime_values(&self.space, x);
        (0..self.ndofs())
            .map(|j| p.iter().enumerate().map(|(m, pm)| pm * self.coeffs[(m, j)]).sum())
            .collect()
    }

    /// Gradients of all basis functions at `x`, `grads[j][a]`.
    pub fn eval_grad(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let (_, pg) = prime_values_and_grads(&self.space, x);
        (0..self.ndofs())
            .map(|j| {
                pg.iter()
                    .map(|g| g.iter().enumerate().map(|(m, gm)| gm * self.coeffs[(m, j)]).sum())
                    .collect()
            })
            .collect()
    }

    pub fn tabulate_points(&self, points: &[[f64; MAX_DIM]]) -> Tabulation {
        let dim = self.dim();
        let n = self.ndofs();
        let mut values = Vec::with_capacity(points.len() * n);
        let mut grads = Vec::with_capacity(points.len() * n * dim);
        for p in points {
            let (pv, pg) = prime_values_and_grads(&self.space, &p[..dim]);
            for j in 0..n {
                let col = self.coeffs.column(j);
                values.push(pv.iter().zip(col.iter()).map(|(a, b)| a * b).sum());
                for g in &pg {
                    grads.push(g.iter().zip(col.iter()).map(|(a, b)| a * b).sum());
                }
            }
        }
        Tabulation { dim, npoints: points.len(), ndofs: n, values, grads }
    }

    pub fn tabulate(&self, rule: &QuadratureRule) -> Tabulation {
        self.tabulate_points(&rule.points)
    }

    /// Apply every functional to `f` with `q`-point moment quadrature.
    pub fn interpolate(&self, q: usize, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.functionals.iter().map(|func| func.apply(q, &f)).collect()
    }

    /// Apply every functional to the polynomial with the given dof values,
    /// i.e. `interpolate` of a member of this space, using exact quadrature.
    pub fn functional_matrix(&self) -> DMatrix<f64> {
        let n = self.ndofs();
        let q = self.degree() + 1;
        let mut m = DMatrix::zeros(n, n);
        for (i, func) in self.functionals.iter().enumerate() {
            for (x, w) in func.rule(q) {
                let vals = self.eval(&x[..self.dim()]);
                for j in 0..n {
                    m[(i, j)] += w * vals[j];
                }
            }
        }
        m
    }
}
