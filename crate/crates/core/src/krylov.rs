//! Preconditioned conjugate gradients with eigenvalue estimates recovered
//! from the CG coefficients (Lanczos connection).

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A square linear map `y = A x`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for std::sync::Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// Dense matrix as an operator, for small oracles.
impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `y += a x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[derive(Clone, Debug)]
pub struct PcgOptions {
    pub rtol: f64,
    pub maxit: usize,
    /// Run the randomized symmetry test on `A` before iterating.
    pub check_symmetry: bool,
    pub seed: u64,
    pub norm: StoppingNorm,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, maxit: 500, check_symmetry: true, seed: 0x5eed, norm: StoppingNorm::Unpreconditioned }
    }
}

/// Residual norm used in the relative stopping test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StoppingNorm {
    /// `||r_k|| / ||r_0||`
    Unpreconditioned,
    /// `||C^{-1} r_k|| / ||C^{-1} r_0||`
    Preconditioned,
}

impl fmt::Display for StoppingNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StoppingNorm::Unpreconditioned => "unpreconditioned",
            StoppingNorm::Preconditioned => "preconditioned",
        })
    }
}

impl FromStr for StoppingNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unpreconditioned" | "true" => Ok(StoppingNorm::Unpreconditioned),
            "preconditioned" => Ok(StoppingNorm::Preconditioned),
            _ => Err(Error::InvalidArgument(format!("unknown stopping norm '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// `||C^{-1} r_k||_2`, starting with the initial residual.
    pub residual_history: Vec<f64>,
    /// `||r_k||_2` from the CG recurrence, starting with the initial residual.
    pub true_residual_history: Vec<f64>,
    /// `||b - A x|| / ||b - A x0||` recomputed after the last iteration.
    pub final_relative_residual: f64,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    /// Fewer than five iterations were available.
    pub low_confidence: bool,
}

/// Eigenvalues of the symmetric tridiagonal matrix with the given diagonal
/// and off-diagonal, ascending.
pub fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let m = diag.len();
    if m == 0 {
        return vec![];
    }
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = diag[i];
        if i + 1 < m {
            t[(i, i + 1)] = off[i];
            t[(i + 1, i)] = off[i];
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(t).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Eigenvalues of the Lanczos matrix assembled from CG step lengths `alphas`
/// and residual ratios `betas`.
pub fn lanczos_eigenvalues(alphas: &[f64], betas: &[f64]) -> Vec<f64> {
    let m = alphas.len();
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m.saturating_sub(1)];
    for j in 0..m {
        diag[j] = 1.0 / alphas[j];
        if j > 0 {
            diag[j] += betas[j - 1] / alphas[j - 1];
        }
        if j + 1 < m {
            off[j] = betas[j].sqrt() / alphas[j];
        }
    }
    tridiagonal_eigenvalues(&diag, &off)
}

/// Extreme eigenvalues of the preconditioned operator seen by a CG run.
pub fn estimate_condition(report: &SolveReport) -> ConditionEstimate {
    let m = report.alphas.len();
    let ev = lanczos_eigenvalues(&report.alphas, &report.betas[..m.saturating_sub(1).min(report.betas.len())]);
    if ev.is_empty() {
        return ConditionEstimate { lambda_min: 1.0, lambda_max: 1.0, kappa: 1.0, low_confidence: true };
    }
    let lambda_min = ev[0];
    let lambda_max = ev[ev.len() - 1];
    ConditionEstimate { lambda_min, lambda_max, kappa: (lambda_max / lambda_min).max(1.0), low_confidence: m < 5 }
}

/// Randomized test `<Au, v> = <u, Av>` on `pairs` vector pairs. Returns the
/// worst relative defect.
pub fn symmetry_defect(a: &dyn LinearOperator, pairs: usize, seed: u64) -> f64 {
    let n = a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut au = vec![0.0; n];
    let mut av = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        a.apply(&u, &mut au);
        a.apply(&v, &mut av);
        let scale = norm(&au) * norm(&v) + norm(&av) * norm(&u);
        if scale > 0.0 {
            worst = worst.max((dot(&au, &v) - dot(&u, &av)).abs() / scale);
        }
    }
    worst
}

/// Solve `A x = b` by CG preconditioned with `m`, stopping once
/// `||r_k|| / ||r_0|| <= rtol`.
pub fn pcg(
    a: &dyn LinearOperator,
    b: &[f64],
    m: &dyn LinearOperator,
    opts: &PcgOptions,
    x0: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = a.dim();
    assert_eq!(b.len(), n, "right-hand side has the wrong length");
    assert_eq!(m.dim(), n, "preconditioner has the wrong size");
    if opts.check_symmetry {
        let defect = symmetry_defect(a, 5, opts.seed);
        if defect > 1e-10 {
            return Err(Error::NotSymmetric { defect });
        }
    }
    let start = Instant::now();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut r = vec![0.0; n];
    a.apply(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let r0 = norm(&r);
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut report = SolveReport::default();
    report.true_residual_history.push(r0);
    if r0 == 0.0 {
        report.converged = true;
        report.residual_history.push(0.0);
        report.lambda_min = 1.0;
        report.lambda_max = 1.0;
        report.kappa = 1.0;
        report.solve_seconds = start.elapsed().as_secs_f64();
        return Ok((x, report));
    }
    m.apply(&r, &mut z);
    let z0 = norm(&z);
    report.residual_history.push(z0);
    let mut rz = dot(&r, &z);
    let mut p = z.clone();
    for it in 0..opts.maxit {
        if rz <= 0.0 {
            return Err(Error::Breakdown { iteration: it, reason: format!("preconditioned residual inner product {rz:e} is not positive") });
        }
        a.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            return Err(Error::Breakdown { iteration: it, reason: format!("curvature p^T A p = {pq:e} is not positive") });
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        report.alphas.push(alpha);
        report.iterations = it + 1;
        let rnorm = norm(&r);
        report.true_residual_history.push(rnorm);
        m.apply(&r, &mut z);
        let znorm = norm(&z);
        report.residual_history.push(znorm);
        let done = match opts.norm {
            StoppingNorm::Unpreconditioned => rnorm <= opts.rtol * r0,
            StoppingNorm::Preconditioned => znorm <= opts.rtol * z0,
        };
        if done || rnorm == 0.0 {
            report.converged = true;
            break;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        report.betas.push(beta);
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    a.apply(&x, &mut q);
    let res: f64 = q.iter().zip(b).map(|(ax, bi)| (bi - ax) * (bi - ax)).sum::<f64>().sqrt();
    report.final_relative_residual = res / r0;
    let est = estimate_condition(&report);
    report.lambda_min = est.lambda_min;
    report.lambda_max = est.lambda_max;
    report.kappa = est.kappa;
    report.solve_seconds = start.elapsed().as_secs_f64();
    Ok((x, report))
}

/// Extreme eigenvalues of `M A` from `steps` CG iterations on a random
/// right-hand side. Entries flagged in `constrained` are kept at zero.
pub fn estimate_extreme_eigenvalues(
    a: &dyn LinearOperator,
    m: &dyn LinearOperator,
    steps: usize,
    seed: u64,
    constrained: Option<&[bool]>,
) -> Result<ConditionEstimate> {
    let n = a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    if let Some(c) = constrained {
        for (bi, &ci) in b.iter_mut().zip(c) {
            if ci {
                *bi = 0.0;
            }
        }
    }
    let opts = PcgOptions { rtol: 0.0, maxit: steps, check_symmetry: false, seed, ..PcgOptions::default() };
    let (_, report) = pcg(a, &b, m, &opts, None)?;
    Ok(estimate_condition(&report))
}
