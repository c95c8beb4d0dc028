//! Tridiagonal storage and solvers.
//!
//! Every matrix the finite-element assembly produces is symmetric
//! tridiagonal, and every shifted operator the solvers need (the implicit
//! midpoint Schur complement, `-omega^2 M + i omega D + K`, the quadratic
//! pencil at a trial eigenvalue) is a linear combination of them. Those
//! combinations are factored with Gaussian elimination with partial
//! pivoting, which stays stable for the indefinite and complex cases.

use std::fmt::Debug;
use std::ops::{AddAssign, Mul, MulAssign, Sub, SubAssign, Div, DivAssign, Add, Neg};

use num_complex::Complex64;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

/// Field the tridiagonal kernels operate over (`f64` or `Complex64`).
pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Mul<f64, Output = Self>
{
    fn modulus(self) -> f64;
    fn from_real(x: f64) -> Self;
    fn conj(self) -> Self;
    fn as_complex(self) -> Complex64;
}

impl Scalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn as_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Scalar for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn as_complex(self) -> Complex64 {
        self
    }
}

/// Real symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::invalid(format!(
                "tridiagonal shape mismatch: {} diagonal, {} off-diagonal entries",
                diag.len(),
                off.len()
            )));
        }
        Ok(Self { diag, off })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            diag: vec![1.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.abs_diff(j) {
            0 => self.diag[i],
            1 => self.off[i.min(j)],
            _ => 0.0,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            diag: self.diag.iter().map(|d| d * factor).collect(),
            off: self.off.iter().map(|o| o * factor).collect(),
        }
    }

    /// `y = A x`.
    pub fn mul_vec<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); x.len()];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into<T: Scalar>(&self, x: &[T], y: &mut [T]) {
        let n = self.dim();
        assert_eq!(x.len(), n, "dimension mismatch in tridiagonal product");
        for i in 0..n {
            let mut acc = x[i] * self.diag[i];
            if i > 0 {
                acc += x[i - 1] * self.off[i - 1];
            }
            if i + 1 < n {
                acc += x[i + 1] * self.off[i];
            }
            y[i] = acc;
        }
    }

    /// `x^H A y` for real symmetric `A`.
    pub fn form<T: Scalar>(&self, x: &[T], y: &[T]) -> T {
        let ay = self.mul_vec(y);
        x.iter()
            .zip(&ay)
            .fold(T::zero(), |acc, (&xi, &ai)| acc + xi.conj() * ai)
    }

    /// `x^T A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.form(x, x)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.diag
            .iter()
            .chain(&self.off)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.off[i - 1].abs();
                }
                if i + 1 < n {
                    s += self.off[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|j| self.get(i, j)).collect()).collect()
    }
}

/// General tridiagonal matrix `sub`/`diag`/`sup` over a [`Scalar`].
#[derive(Debug, Clone)]
pub struct Tridiag<T> {
    pub sub: Vec<T>,
    pub diag: Vec<T>,
    pub sup: Vec<T>,
}

impl<T: Scalar> Tridiag<T> {
    /// `sum_k c_k A_k` over symmetric tridiagonal terms with scalar weights.
    pub fn combination(terms: &[(T, &SymTridiag)]) -> Self {
        let n = terms.first().map(|(_, a)| a.dim()).unwrap_or(0);
        let mut diag = vec![T::zero(); n];
        let mut off = vec![T::zero(); n.saturating_sub(1)];
        for (c, a) in terms {
            assert_eq!(a.dim(), n, "dimension mismatch in tridiagonal combination");
            for (d, &v) in diag.iter_mut().zip(&a.diag) {
                *d += *c * v;
            }
            for (o, &v) in off.iter_mut().zip(&a.off) {
                *o += *c * v;
            }
        }
        Self {
            sub: off.clone(),
            diag,
            sup: off,
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * x[i];
                if i > 0 {
                    acc += self.sub[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    acc += self.sup[i] * x[i + 1];
                }
                acc
            })
            .collect()
    }

    fn max_modulus(&self) -> f64 {
        self.sub
            .iter()
            .chain(&self.diag)
            .chain(&self.sup)
            .fold(0.0_f64, |m, v| m.max(v.modulus()))
    }
}

/// LU factorization with partial pivoting of a tridiagonal matrix
/// (the `gttrf`/`gttrs` scheme: `U` gains a second superdiagonal).
#[derive(Debug, Clone)]
pub struct TridiagLu<T> {
    multipliers: Vec<T>,
    diag: Vec<T>,
    sup1: Vec<T>,
    sup2: Vec<T>,
    swapped: Vec<bool>,
}

impl<T: Scalar> TridiagLu<T> {
    /// Factor, failing when a pivot is negligible relative to the largest
    /// entry of the matrix.
    pub fn factor(matrix: &Tridiag<T>) -> Result<Self> {
        let scale = matrix.max_modulus();
        let lu = Self::factor_raw(matrix)?;
        let threshold = scale * f64::EPSILON;
        if let Some(pos) = lu.diag.iter().position(|p| p.modulus() <= threshold) {
            return Err(Error::Singular {
                shift: Complex64::new(f64::NAN, f64::NAN),
                context: format!(
                    "pivot {pos} is {:e} (matrix scale {scale:e})",
                    lu.diag[pos].modulus()
                ),
            });
        }
        Ok(lu)
    }

    /// Factor, replacing negligible pivots by `eps * scale`. Used for inverse
    /// iteration at (numerically) exact eigenvalues.
    pub fn factor_perturbed(matrix: &Tridiag<T>) -> Result<Self> {
        let scale = matrix.max_modulus().max(f64::MIN_POSITIVE);
        let floor = scale * f64::EPSILON;
        let mut lu = Self::factor_raw(matrix)?;
        for p in lu.diag.iter_mut() {
            if p.modulus() <= floor {
                *p = T::from_real(floor);
            }
        }
        Ok(lu)
    }

    fn factor_raw(matrix: &Tridiag<T>) -> Result<Self> {
        let n = matrix.dim();
        if n == 0 || matrix.sub.len() + 1 != n || matrix.sup.len() + 1 != n {
            return Err(Error::invalid("malformed tridiagonal matrix"));
        }
        let mut dl = matrix.sub.clone();
        let mut d = matrix.diag.clone();
        let mut du = matrix.sup.clone();
        let mut du2 = vec![T::zero(); n.saturating_sub(2)];
        let mut swapped = vec![false; n];
        for i in 0..n.saturating_sub(1) {
            if d[i].modulus() >= dl[i].modulus() {
                if d[i] != T::zero() {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    let t = fact * du[i];
                    d[i + 1] -= t;
                } else {
                    dl[i] = T::zero();
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -(fact * du[i + 1]);
                }
                swapped[i] = true;
            }
        }
        if d.iter().any(|v| !v.modulus().is_finite()) {
            return Err(Error::invalid("non-finite entry in tridiagonal factorization"));
        }
        Ok(Self {
            multipliers: dl,
            diag: d,
            sup1: du,
            sup2: du2,
            swapped,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Smallest pivot modulus, a cheap singularity indicator.
    pub fn min_pivot(&self) -> f64 {
        self.diag.iter().map(|p| p.modulus()).fold(f64::INFINITY, f64::min)
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.dim();
        assert_eq!(b.len(), n, "dimension mismatch in tridiagonal solve");
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.multipliers[i] * b[i];
            } else {
                let t = self.multipliers[i] * b[i];
                b[i + 1] -= t;
            }
        }
        b[n - 1] /= self.diag[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.sup1[n - 2] * b[n - 1]) / self.diag[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.sup1[i] * b[i + 1] - self.sup2[i] * b[i + 2]) / self.diag[i];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Cholesky factor `A = L L^T` of a symmetric positive-definite tridiagonal
/// matrix; `L` is lower bidiagonal.
#[derive(Debug, Clone)]
pub struct BidiagCholesky {
    diag: Vec<f64>,
    sub: Vec<f64>,
}

impl BidiagCholesky {
    pub fn factor(a: &SymTridiag) -> Result<Self> {
        let n = a.dim();
        let mut diag = vec![0.0; n];
        let mut sub = vec![0.0; n.saturating_sub(1)];
        for i in 0..n {
            let mut pivot = a.diag[i];
            if i > 0 {
                pivot -= sub[i - 1] * sub[i - 1];
            }
            if !(pivot > 0.0) {
                return Err(Error::invalid(format!(
                    "matrix is not positive definite (pivot {i} = {pivot:e})"
                )));
            }
            diag[i] = pivot.sqrt();
            if i + 1 < n {
                sub[i] = a.off[i] / diag[i];
            }
        }
        Ok(Self { diag, sub })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Solve `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        for i in 0..b.len() {
            if i > 0 {
                b[i] -= self.sub[i - 1] * b[i - 1];
            }
            b[i] /= self.diag[i];
        }
    }

    /// Solve `L^T x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = b.len();
        for i in (0..n).rev() {
            if i + 1 < n {
                b[i] -= self.sub[i] * b[i + 1];
            }
            b[i] /= self.diag[i];
        }
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// Dense `L^{-1} A L^{-T}` for a symmetric tridiagonal `A`, row-major.
    pub fn congruence_dense(&self, a: &SymTridiag) -> Vec<Vec<f64>> {
        let n = self.dim();
        // X = L^{-1} A, column by column (A is symmetric, so columns are rows).
        let mut x_cols: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut col = vec![0.0; n];
                col[j] = a.diag[j];
                if j > 0 {
                    col[j - 1] = a.off[j - 1];
                }
                if j + 1 < n {
                    col[j + 1] = a.off[j];
                }
                self.solve_lower_in_place(&mut col);
                col
            })
            .collect();
        // Y = L^{-1} X^T; columns of X^T are rows of X.
        let mut out = vec![vec![0.0; n]; n];
        let mut row = vec![0.0; n];
        for j in 0..n {
            for (k, r) in row.iter_mut().enumerate() {
                *r = x_cols[k][j];
            }
            self.solve_lower_in_place(&mut row);
            for i in 0..n {
                out[i][j] = row[i];
            }
        }
        x_cols.clear();
        // Symmetrize away the round-off asymmetry.
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (out[i][j] + out[j][i]);
                out[i][j] = s;
                out[j][i] = s;
            }
        }
        out
    }
}
