//! Dense reference computations.
//!
//! These are deliberately slow and structurally different from the fast
//! paths they check: singular values come from a full SVD instead of power
//! iteration, trajectories from the matrix exponential instead of time
//! stepping, the damping matrix from adaptive quadrature instead of the
//! closed-form element integral. They are meant for `n_dof` up to a few dozen.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::discretization::{Mesh, State, SystemMatrices};
use crate::error::{Error, Result};
use crate::model::DampingProfile;
use crate::tridiag::SymTridiag;

fn dense(matrix: &SymTridiag) -> DMatrix<f64> {
    let n = matrix.dim();
    DMatrix::from_fn(n, n, |i, j| matrix.get(i, j))
}

fn cholesky(matrix: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Cholesky::new(matrix.clone())
        .map(|c| c.l())
        .ok_or_else(|| Error::invalid(format!("{what} is not positive definite")))
}

/// Dense generator `A = [[0, I], [-M^{-1} K, -M^{-1} D]]`.
pub fn dense_generator(matrices: &SystemMatrices) -> Result<DMatrix<f64>> {
    let n = matrices.n_dof();
    let m = dense(&matrices.mass);
    let k = dense(&matrices.stiffness);
    let d = dense(&matrices.damping);
    let m_chol = Cholesky::new(m).ok_or_else(|| Error::invalid("mass matrix is not positive definite"))?;
    let mk = m_chol.solve(&k);
    let md = m_chol.solve(&d);
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
        for j in 0..n {
            a[(n + i, j)] = -mk[(i, j)];
            a[(n + i, n + j)] = -md[(i, j)];
        }
    }
    Ok(a)
}

/// Smallest singular value of `i omega - A` in the energy norm, through the
/// full SVD of `W (i omega - A) W^{-1}` with `W = diag(L_K^T, L_M^T)`.
pub fn dense_sigma_min(matrices: &SystemMatrices, omega: f64) -> Result<f64> {
    let n = matrices.n_dof();
    let a = dense_generator(matrices)?;
    let lk = cholesky(&dense(&matrices.stiffness), "stiffness")?;
    let lm = cholesky(&dense(&matrices.mass), "mass")?;
    let mut w = DMatrix::zeros(2 * n, 2 * n);
    w.view_mut((0, 0), (n, n)).copy_from(&lk.transpose());
    w.view_mut((n, n), (n, n)).copy_from(&lm.transpose());
    let w_inv = w
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::invalid("energy weight is singular"))?;
    let shifted: DMatrix<Complex64> = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let diag = if i == j { Complex64::new(0.0, omega) } else { Complex64::new(0.0, 0.0) };
        diag - Complex64::new(a[(i, j)], 0.0)
    });
    let wc = w.map(|x| Complex64::new(x, 0.0));
    let wic = w_inv.map(|x| Complex64::new(x, 0.0));
    let t = wc * shifted * wic;
    let sv = t.singular_values();
    Ok(sv.iter().copied().fold(f64::INFINITY, f64::min))
}

/// `exp(t A) U_0` by the dense matrix exponential.
pub fn dense_expm_state(matrices: &SystemMatrices, initial: &State, t: f64) -> Result<State> {
    let n = matrices.n_dof();
    let a = dense_generator(matrices)?;
    let e = (a * t).exp();
    let x0 = DVector::from_iterator(2 * n, initial.u.iter().chain(&initial.v).copied());
    let x = e * x0;
    Ok(State {
        u: x.rows(0, n).iter().copied().collect(),
        v: x.rows(n, n).iter().copied().collect(),
    })
}

/// Eigenvalues of the dense generator.
pub fn dense_eigenvalues(matrices: &SystemMatrices) -> Result<Vec<Complex64>> {
    let a = dense_generator(matrices)?;
    Ok(a.complex_eigenvalues().iter().copied().collect())
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1] (non-negative half).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Kronrod and Gauss estimates of `int_a^b f`.
pub fn gauss_kronrod_15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * half, gauss * half)
}

/// Adaptive bisection until the Kronrod/Gauss difference on every piece is
/// below `tol` times the running total.
pub fn adaptive_integral(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut stack = vec![(a, b, 0usize)];
    let (whole, _) = gauss_kronrod_15(f, a, b);
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    let mut total = 0.0;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (k, g) = gauss_kronrod_15(f, lo, hi);
        let width_share = (hi - lo) / (b - a);
        if (k - g).abs() <= tol * scale * width_share.max(1e-3) || hi - lo <= 1e-15 * (b - a).abs() {
            total += k;
        } else if depth > 200 {
            return Err(Error::NoConvergence {
                context: format!("adaptive quadrature on [{a}, {b}]"),
                iterations: depth,
                last: total,
            });
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    Ok(total)
}

/// Damping matrix from quadrature of `b(x) phi_i' phi_j'` on every element.
pub fn quadrature_damping(mesh: &Mesh, profile: &DampingProfile) -> Result<SymTridiag> {
    let nodes = mesh.nodes();
    let n_dof = mesh.n_dof();
    let mut diag = vec![0.0; n_dof];
    let mut off = vec![0.0; n_dof.saturating_sub(1)];
    for e in 0..mesh.n_elements() {
        let (a, b) = (nodes[e], nodes[e + 1]);
        let h = b - a;
        let integral = adaptive_integral(&|x| profile.value_unchecked(x), a, b, 1e-14)?;
        let c = integral / (h * h);
        // Local nodes e, e+1 are global dofs e-1, e.
        let left = e.checked_sub(1);
        let right = (e < n_dof).then_some(e);
        if let Some(i) = left {
            diag[i] += c;
        }
        if let Some(j) = right {
            diag[j] += c;
        }
        if let (Some(i), Some(_)) = (left, right) {
            off[i] -= c;
        }
    }
    SymTridiag::new(diag, off)
}
