//! Eigenvalues of the discrete generator through the quadratic pencil
//! `lambda^2 M + lambda D + K`.
//!
//! The default (dense) path symmetrizes the mass with its bidiagonal
//! Cholesky factor `M = L L^T` and solves the standard eigenproblem of
//! `[[0, I], [-L^{-1} K L^{-T}, -L^{-1} D L^{-T}]]`, which has the same
//! eigenvalues as the generalized companion pair. Every eigenvalue is then
//! certified by a pencil residual obtained from inverse iteration on the
//! tridiagonal `lambda^2 M + lambda D + K`.

use std::path::Path;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::discretization::{assemble, build_mesh, SystemMatrices};
use crate::error::{Error, Result};
use crate::model::DampingProfile;
use crate::resolvent::{ComplexState, ShiftedResolvent};
use crate::tridiag::{SymTridiag, Tridiag, TridiagLu};

type C64 = Complex64;

/// Default bound on the scaled pencil residual of a reported eigenvalue.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Generalized companion pair `(A_lin, B_lin)` of size `2 n_dof`:
/// `A_lin = [[0, I], [-K, -D]]`, `B_lin = [[I, 0], [0, M]]`.
pub fn linearize_pencil(matrices: &SystemMatrices) -> (Mat<f64>, Mat<f64>) {
    let n = matrices.n_dof();
    let k = &matrices.stiffness;
    let d = &matrices.damping;
    let m = &matrices.mass;
    let a = Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => 0.0,
        (true, false) => f64::from(i == j - n),
        (false, true) => -k.get(i - n, j),
        (false, false) => -d.get(i - n, j - n),
    });
    let b = Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => f64::from(i == j),
        (false, false) => m.get(i - n, j - n),
        _ => 0.0,
    });
    (a, b)
}

/// Spectrum of the discrete generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    /// Sorted by imaginary part.
    pub eigenvalues: Vec<C64>,
    /// `max Re lambda`.
    pub abscissa: f64,
    /// `min |Re lambda|`.
    pub axis_gap: f64,
    pub n_dof: usize,
    /// Largest scaled pencil residual among the reported eigenvalues.
    pub max_residual: f64,
}

impl SpectrumResult {
    fn from_eigenvalues(mut eigenvalues: Vec<C64>, n_dof: usize, max_residual: f64) -> Self {
        eigenvalues.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
        let abscissa = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let axis_gap = eigenvalues.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
        Self {
            eigenvalues,
            abscissa,
            axis_gap,
            n_dof,
            max_residual,
        }
    }

    pub fn max_modulus(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues with `Im lambda > 0`, by increasing imaginary part.
    pub fn upper_half(&self) -> Vec<C64> {
        let floor = 1e-12 * self.max_modulus();
        self.eigenvalues.iter().copied().filter(|z| z.im > floor).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_csv(path, &["re", "im"], self.eigenvalues.iter().map(|z| (z.re, z.im)))
    }
}

/// How eigenvalues are computed.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum SpectrumMode {
    /// Full dense eigensolve.
    #[default]
    Dense,
    /// Shift-invert Arnoldi around each shift, returning the `per_shift`
    /// eigenvalues nearest to it (plus their conjugates).
    ShiftInvert { shifts: Vec<C64>, per_shift: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumOptions {
    pub mode: SpectrumMode,
    pub residual_tol: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            mode: SpectrumMode::Dense,
            residual_tol: RESIDUAL_TOL,
        }
    }
}

pub fn compute_spectrum(matrices: &SystemMatrices) -> Result<SpectrumResult> {
    compute_spectrum_with(matrices, &SpectrumOptions::default())
}

pub fn compute_spectrum_with(matrices: &SystemMatrices, opts: &SpectrumOptions) -> Result<SpectrumResult> {
    match &opts.mode {
        SpectrumMode::Dense => dense_spectrum(matrices, opts.residual_tol),
        SpectrumMode::ShiftInvert { shifts, per_shift } => {
            shift_invert_spectrum(matrices, shifts, *per_shift, opts.residual_tol)
        }
    }
}

fn dense_spectrum(matrices: &SystemMatrices, tol: f64) -> Result<SpectrumResult> {
    let n = matrices.n_dof();
    let chol = matrices.mass_factor();
    let kt = chol.congruence_dense(&matrices.stiffness);
    let dt = chol.congruence_dense(&matrices.damping);
    let companion = Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => 0.0,
        (true, false) => f64::from(i == j - n),
        (false, true) => -kt[i - n][j],
        (false, false) => -dt[i - n][j - n],
    });
    let eigenvalues = companion
        .eigenvalues()
        .map_err(|e| Error::Eigen(format!("dense eigensolve of size {}: {e:?}", 2 * n)))?;
    let residuals: Vec<f64> = eigenvalues
        .par_iter()
        .map(|&z| pencil_residual(matrices, z).map(|(r, _)| r))
        .collect::<Result<_>>()?;
    let mut max_residual = 0.0_f64;
    for (z, r) in eigenvalues.iter().zip(&residuals) {
        if !(*r <= tol) {
            return Err(Error::NoConvergence {
                context: format!("dense eigenvalue {z} fails the pencil residual check"),
                iterations: 0,
                last: *r,
            });
        }
        max_residual = max_residual.max(*r);
    }
    Ok(SpectrumResult::from_eigenvalues(eigenvalues, n, max_residual))
}

fn pencil_at(matrices: &SystemMatrices, lambda: C64) -> Tridiag<C64> {
    Tridiag::combination(&[
        (lambda * lambda, &matrices.mass),
        (lambda, &matrices.damping),
        (C64::new(1.0, 0.0), &matrices.stiffness),
    ])
}

fn two_norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Scaled residual `||P(lambda) x|| / (||x|| (|lambda|^2 ||M|| + |lambda| ||D|| + ||K||))`
/// of the best eigenvector inverse iteration finds for `lambda`, together
/// with that vector.
pub fn pencil_residual(matrices: &SystemMatrices, lambda: C64) -> Result<(f64, Vec<C64>)> {
    let n = matrices.n_dof();
    let pencil = pencil_at(matrices, lambda);
    let lu = TridiagLu::factor_perturbed(&pencil)?;
    let scale = lambda.norm_sqr() * matrices.mass.norm_inf()
        + lambda.norm() * matrices.damping.norm_inf()
        + matrices.stiffness.norm_inf();
    let mut x: Vec<C64> = (0..n)
        .map(|i| C64::new(1.0 + 0.5 * ((i as f64) * 0.7548776662).sin(), 0.0))
        .collect();
    let start = two_norm(&x);
    for xi in x.iter_mut() {
        *xi /= start;
    }
    // The start vector counts too: when P(lambda) vanishes numerically (a
    // 1x1 pencil at its root) the solves below overflow.
    let mut best = (two_norm(&pencil.mul_vec(&x)) / scale, x.clone());
    for _ in 0..3 {
        lu.solve_in_place(&mut x);
        let norm = two_norm(&x);
        if !(norm.is_finite() && norm > 0.0) {
            break;
        }
        for xi in x.iter_mut() {
            *xi /= norm;
        }
        let r = two_norm(&pencil.mul_vec(&x)) / scale;
        if r < best.0 {
            best = (r, x.clone());
        }
    }
    Ok(best)
}

fn arnoldi_ritz(
    matrices: &SystemMatrices,
    shift: C64,
    steps: usize,
) -> Result<Vec<C64>> {
    let n = matrices.n_dof();
    let op = ShiftedResolvent::new(matrices, shift)?;
    let dim = 2 * n;
    let steps = steps.min(dim);
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(steps + 1);
    let start: Vec<C64> = (0..dim)
        .map(|i| C64::new(((i as f64 + 1.0) * 0.618034).fract() - 0.5, ((i as f64 + 1.0) * 0.414214).fract() - 0.5))
        .collect();
    let norm = two_norm(&start);
    basis.push(start.into_iter().map(|z| z / norm).collect());
    let mut h = vec![vec![C64::new(0.0, 0.0); steps]; steps + 1];
    let mut used = steps;
    for j in 0..steps {
        let q = &basis[j];
        let image = op.apply(&ComplexState {
            u: q[..n].to_vec(),
            v: q[n..].to_vec(),
        });
        let mut w: Vec<C64> = image.u.into_iter().chain(image.v).collect();
        // Modified Gram-Schmidt, applied twice.
        for _ in 0..2 {
            for (i, b) in basis.iter().enumerate() {
                let c: C64 = b.iter().zip(&w).map(|(bi, wi)| bi.conj() * wi).sum();
                h[i][j] += c;
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let beta = two_norm(&w);
        h[j + 1][j] = C64::new(beta, 0.0);
        if beta <= 1e-14 * h[j][j].norm().max(1.0) {
            used = j + 1;
            break;
        }
        basis.push(w.into_iter().map(|z| z / beta).collect());
    }
    let hess = Mat::from_fn(used, used, |i, j| h[i][j]);
    let mu = hess
        .eigenvalues()
        .map_err(|e| Error::Eigen(format!("Hessenberg eigensolve at shift {shift}: {e:?}")))?;
    let mut mu: Vec<C64> = mu.into_iter().filter(|z| z.norm() > 0.0).collect();
    mu.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    Ok(mu.into_iter().map(|m| shift - m.inv()).collect())
}

fn shift_invert_spectrum(
    matrices: &SystemMatrices,
    shifts: &[C64],
    per_shift: usize,
    tol: f64,
) -> Result<SpectrumResult> {
    if shifts.is_empty() || per_shift == 0 {
        return Err(Error::invalid("shift-invert mode needs at least one shift and per_shift > 0"));
    }
    let dim = 2 * matrices.n_dof();
    let mut found: Vec<(C64, f64)> = Vec::new();
    for &shift in shifts {
        let mut steps = (2 * per_shift + 20).min(dim);
        let accepted = loop {
            let ritz = arnoldi_ritz(matrices, shift, steps)?;
            let mut good = Vec::new();
            let mut worst = 0.0_f64;
            for &z in ritz.iter().take(per_shift) {
                let (r, _) = pencil_residual(matrices, z)?;
                worst = worst.max(r);
                if r <= tol {
                    good.push((z, r));
                }
            }
            if good.len() == per_shift.min(ritz.len()) {
                break good;
            }
            if steps >= dim {
                return Err(Error::NoConvergence {
                    context: format!("shift-invert Arnoldi at shift {shift}"),
                    iterations: steps,
                    last: worst,
                });
            }
            steps = (2 * steps).min(dim);
        };
        found.extend(accepted);
    }
    let mut eigenvalues: Vec<C64> = Vec::new();
    let mut max_residual = 0.0_f64;
    let same = |a: C64, b: C64| (a - b).norm() <= 1e-8 * a.norm().max(1.0);
    for (z, r) in found {
        let candidates = if z.im.abs() > 1e-12 * z.norm() {
            vec![z, z.conj()]
        } else {
            vec![C64::new(z.re, 0.0)]
        };
        for c in candidates {
            if !eigenvalues.iter().any(|&e| same(e, c)) {
                eigenvalues.push(c);
                max_residual = max_residual.max(r);
            }
        }
    }
    Ok(SpectrumResult::from_eigenvalues(eigenvalues, matrices.n_dof(), max_residual))
}

/// One row of the branch table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPoint {
    pub alpha: f64,
    /// 1-based branch index.
    pub k: usize,
    pub eigenvalue: C64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BranchTable {
    pub rows: Vec<BranchPoint>,
}

impl BranchTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_csv(
            path,
            &["alpha", "k", "re", "im"],
            self.rows.iter().map(|r| (r.alpha, r.k, r.eigenvalue.re, r.eigenvalue.im)),
        )
    }

    pub fn branch(&self, k: usize) -> Vec<BranchPoint> {
        self.rows.iter().copied().filter(|r| r.k == k).collect()
    }
}

/// Candidates closer than this to being equidistant count as ambiguous.
pub const BRANCH_AMBIGUITY: f64 = 1e-6;

/// Follow the `k_max` lowest upper-half-plane eigenvalues across `alphas`
/// on a uniform mesh of `n_elements`.
pub fn trace_branches(alphas: &[f64], n_elements: usize, k_max: usize) -> Result<BranchTable> {
    let mesh = build_mesh(n_elements, 1.0)?;
    let systems: Vec<(f64, SystemMatrices)> = alphas
        .iter()
        .map(|&a| Ok((a, assemble(&mesh, &DampingProfile::new(a)?))))
        .collect::<Result<_>>()?;
    trace_branches_from(&systems, k_max)
}

/// Branch tracing over explicitly supplied systems (tagged with the value
/// written to the `alpha` column).
pub fn trace_branches_from(systems: &[(f64, SystemMatrices)], k_max: usize) -> Result<BranchTable> {
    if k_max == 0 {
        return Ok(BranchTable::default());
    }
    let spectra: Vec<SpectrumResult> = systems
        .par_iter()
        .map(|(_, m)| compute_spectrum(m))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut current: Vec<C64> = Vec::new();
    for ((alpha, _), spectrum) in systems.iter().zip(&spectra) {
        let pool: Vec<C64> = spectrum.upper_half().into_iter().take(2 * k_max).collect();
        if pool.len() < k_max {
            return Err(Error::invalid(format!(
                "alpha={alpha}: only {} upper-half eigenvalues, need {k_max}",
                pool.len()
            )));
        }
        if current.is_empty() {
            current = pool[..k_max].to_vec();
        } else {
            let mut taken = vec![false; pool.len()];
            for (branch, prev) in current.iter_mut().enumerate() {
                let mut order: Vec<usize> = (0..pool.len()).filter(|&i| !taken[i]).collect();
                order.sort_by(|&a, &b| (pool[a] - *prev).norm().total_cmp(&(pool[b] - *prev).norm()));
                let best = order[0];
                if let Some(&second) = order.get(1) {
                    let gap = (pool[second] - *prev).norm() - (pool[best] - *prev).norm();
                    if gap < BRANCH_AMBIGUITY {
                        return Err(Error::AmbiguousBranch {
                            alpha: *alpha,
                            branch: branch + 1,
                            first: pool[best],
                            second: pool[second],
                            gap,
                        });
                    }
                }
                taken[best] = true;
                *prev = pool[best];
            }
        }
        rows.extend(current.iter().enumerate().map(|(i, &z)| BranchPoint {
            alpha: *alpha,
            k: i + 1,
            eigenvalue: z,
        }));
    }
    Ok(BranchTable { rows })
}

/// `[[0, I], [-K, -D]]` applied to `(u, v)` with `B_lin = diag(I, M)`
/// residual, for checking eigenpairs of the companion pair directly.
pub fn companion_residual(matrices: &SystemMatrices, lambda: C64, x: &[C64]) -> f64 {
    let (a, b) = linearize_pencil(matrices);
    let n = x.len();
    let mut worst = 0.0_f64;
    let mut norm = 0.0_f64;
    for i in 0..n {
        let mut r = C64::new(0.0, 0.0);
        for j in 0..n {
            r += (C64::new(a[(i, j)], 0.0) - lambda * b[(i, j)]) * x[j];
        }
        worst = worst.max(r.norm());
        norm = norm.max(x[i].norm());
    }
    worst / norm
}

/// Scalar system `M = m, D = d, K = k` (one degree of freedom).
pub fn scalar_system(m: f64, d: f64, k: f64) -> Result<SystemMatrices> {
    SystemMatrices::from_parts(
        SymTridiag::new(vec![m], vec![])?,
        SymTridiag::new(vec![k], vec![])?,
        SymTridiag::new(vec![d], vec![])?,
    )
}
