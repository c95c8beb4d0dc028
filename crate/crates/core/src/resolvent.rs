//! Energy-norm resolvent norms along the imaginary axis.
//!
//! For a shift `s`, `(s I - A) U = F` with `U = (u, v)`, `F = (f, g)` reduces
//! to one complex tridiagonal solve
//!
//! ```text
//! (s^2 M + s D + K) u = M g + (s M + D) f,     v = s u - f.
//! ```
//!
//! The norm of `R = (i omega - A)^{-1}` in the energy inner product
//! `<U, W>_E = u^H K w_u + v^H M w_v` is found by power iteration on
//! `R^# R`, where `R^#` is the energy-adjoint. With `J (u, v) = (u, -v)` one
//! has `A^# = J A J`, hence `R(omega)^# = J R(-omega) J`: the adjoint costs one
//! more tridiagonal solve at the conjugate shift.

use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::SystemMatrices;
use crate::error::{Error, Result};
use crate::fit::power_law_fit;
use crate::model::DEFAULT_CAP_FACTOR;
use crate::tridiag::{Tridiag, TridiagLu};

type C64 = Complex64;

/// Complex `(u, v)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexState {
    pub u: Vec<C64>,
    pub v: Vec<C64>,
}

impl ComplexState {
    pub fn zeros(n: usize) -> Self {
        Self {
            u: vec![C64::new(0.0, 0.0); n],
            v: vec![C64::new(0.0, 0.0); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    fn scale(&mut self, factor: f64) {
        for x in self.u.iter_mut().chain(self.v.iter_mut()) {
            *x *= factor;
        }
    }

    fn flip_velocity(&mut self) {
        for x in self.v.iter_mut() {
            *x = -*x;
        }
    }
}

/// `||U||_E^2 = u^H K u + v^H M v`.
pub fn energy_norm_sq(matrices: &SystemMatrices, state: &ComplexState) -> f64 {
    matrices.stiffness.form(&state.u, &state.u).re + matrices.mass.form(&state.v, &state.v).re
}

/// Factored `(s I - A)^{-1}` for one complex shift.
#[derive(Debug, Clone)]
pub struct ShiftedResolvent<'a> {
    matrices: &'a SystemMatrices,
    shift: C64,
    lu: TridiagLu<C64>,
}

impl<'a> ShiftedResolvent<'a> {
    pub fn new(matrices: &'a SystemMatrices, shift: C64) -> Result<Self> {
        let schur = Tridiag::combination(&[
            (shift * shift, &matrices.mass),
            (shift, &matrices.damping),
            (C64::new(1.0, 0.0), &matrices.stiffness),
        ]);
        let lu = TridiagLu::factor(&schur).map_err(|e| Error::Singular {
            shift,
            context: format!("Schur complement s^2 M + s D + K is singular ({e}); s is a discrete eigenvalue"),
        })?;
        Ok(Self { matrices, shift, lu })
    }

    pub fn shift(&self) -> C64 {
        self.shift
    }

    /// Solve `(s I - A) U = rhs`.
    pub fn apply(&self, rhs: &ComplexState) -> ComplexState {
        let m = self.matrices;
        let s = self.shift;
        let mg = m.mass.mul_vec(&rhs.v);
        let mf = m.mass.mul_vec(&rhs.u);
        let df = m.damping.mul_vec(&rhs.u);
        let mut u: Vec<C64> = (0..rhs.dim()).map(|i| mg[i] + s * mf[i] + df[i]).collect();
        self.lu.solve_in_place(&mut u);
        let v = u.iter().zip(&rhs.u).map(|(&ui, &fi)| s * ui - fi).collect();
        ComplexState { u, v }
    }
}

fn check_dims(matrices: &SystemMatrices, state: &ComplexState) -> Result<()> {
    let n = matrices.n_dof();
    if state.u.len() != n || state.v.len() != n {
        return Err(Error::invalid(format!(
            "state has lengths ({}, {}), system has {n} degrees of freedom",
            state.u.len(),
            state.v.len()
        )));
    }
    Ok(())
}

/// Solve `(i omega I - A) U = F`.
pub fn resolvent_apply(matrices: &SystemMatrices, omega: f64, rhs: &ComplexState) -> Result<ComplexState> {
    check_dims(matrices, rhs)?;
    Ok(ShiftedResolvent::new(matrices, C64::new(0.0, omega))?.apply(rhs))
}

/// `(s I - A) U`, with the velocity row multiplied through by `M`:
/// returns `(s u - v, s M v + K u + D v)`.
fn shifted_operator_weighted(matrices: &SystemMatrices, shift: C64, x: &ComplexState) -> (Vec<C64>, Vec<C64>) {
    let mv = matrices.mass.mul_vec(&x.v);
    let ku = matrices.stiffness.mul_vec(&x.u);
    let dv = matrices.damping.mul_vec(&x.v);
    let first = x.u.iter().zip(&x.v).map(|(&u, &v)| shift * u - v).collect();
    let second = (0..x.dim()).map(|i| shift * mv[i] + ku[i] + dv[i]).collect();
    (first, second)
}

/// `(s I - A) U` in the original (unweighted) coordinates.
pub fn apply_shifted_operator(matrices: &SystemMatrices, shift: C64, x: &ComplexState) -> Result<ComplexState> {
    check_dims(matrices, x)?;
    let (first, weighted) = shifted_operator_weighted(matrices, shift, x);
    Ok(ComplexState {
        u: first,
        v: solve_mass_complex(matrices, &weighted),
    })
}

fn solve_mass_complex(matrices: &SystemMatrices, rhs: &[C64]) -> Vec<C64> {
    let chol = matrices.mass_factor();
    let re: Vec<f64> = rhs.iter().map(|z| z.re).collect();
    let im: Vec<f64> = rhs.iter().map(|z| z.im).collect();
    let re = chol.solve(&re);
    let im = chol.solve(&im);
    re.into_iter().zip(im).map(|(a, b)| C64::new(a, b)).collect()
}

/// `||(s I - A) x - rhs||_E / ||rhs||_E`.
pub fn shifted_residual(matrices: &SystemMatrices, shift: C64, x: &ComplexState, rhs: &ComplexState) -> Result<f64> {
    let ax = apply_shifted_operator(matrices, shift, x)?;
    check_dims(matrices, rhs)?;
    let diff = ComplexState {
        u: ax.u.iter().zip(&rhs.u).map(|(a, b)| a - b).collect(),
        v: ax.v.iter().zip(&rhs.v).map(|(a, b)| a - b).collect(),
    };
    let denom = energy_norm_sq(matrices, rhs).sqrt();
    Ok(energy_norm_sq(matrices, &diff).sqrt() / denom.max(f64::MIN_POSITIVE))
}

/// Controls for the power iteration behind [`sigma_min`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaMinOptions {
    /// Relative change of `||R x||_E^2` between iterations that counts as
    /// converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed of the (fixed) start vector.
    pub seed: u64,
}

impl Default for SigmaMinOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaMinEstimate {
    pub sigma_min: f64,
    pub iterations: usize,
}

fn start_vector(n: usize, seed: u64) -> ComplexState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> C64 {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(re, im)
    };
    let u = (0..n).map(|_| draw()).collect();
    let v = (0..n).map(|_| draw()).collect();
    ComplexState { u, v }
}

/// Smallest energy-norm singular value of `i omega I - A`.
pub fn sigma_min(matrices: &SystemMatrices, omega: f64) -> Result<f64> {
    Ok(sigma_min_with(matrices, omega, &SigmaMinOptions::default())?.sigma_min)
}

pub fn sigma_min_with(matrices: &SystemMatrices, omega: f64, opts: &SigmaMinOptions) -> Result<SigmaMinEstimate> {
    if !omega.is_finite() {
        return Err(Error::invalid(format!("omega must be finite (got {omega})")));
    }
    let forward = ShiftedResolvent::new(matrices, C64::new(0.0, omega))?;
    let backward = ShiftedResolvent::new(matrices, C64::new(0.0, -omega))?;

    let mut x = start_vector(matrices.n_dof(), opts.seed);
    x.scale(1.0 / energy_norm_sq(matrices, &x).sqrt());
    let mut previous = 0.0;
    let mut estimate = 0.0;
    for iteration in 1..=opts.max_iter {
        let y = forward.apply(&x);
        estimate = energy_norm_sq(matrices, &y);
        if !estimate.is_finite() {
            return Err(Error::Singular {
                shift: forward.shift(),
                context: "resolvent produced non-finite values".into(),
            });
        }
        if (estimate - previous).abs() < opts.tol * estimate {
            return Ok(SigmaMinEstimate {
                sigma_min: 1.0 / estimate.sqrt(),
                iterations: iteration,
            });
        }
        previous = estimate;
        // x <- R^# y = J R(-omega) J y, normalized.
        let mut z = y;
        z.flip_velocity();
        let mut next = backward.apply(&z);
        next.flip_velocity();
        let norm = energy_norm_sq(matrices, &next).sqrt();
        next.scale(1.0 / norm);
        x = next;
    }
    Err(Error::NoConvergence {
        context: format!("sigma_min power iteration at omega={omega}"),
        iterations: opts.max_iter,
        last: 1.0 / estimate.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

impl std::str::FromStr for Spacing {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "log" => Ok(Self::Log),
            "linear" => Ok(Self::Linear),
            other => Err(format!("unknown spacing `{other}` (log|linear)")),
        }
    }
}

/// What a scan records.
///
/// `Grid` evaluates `sigma_min` at the grid frequencies. `Envelope` locates
/// every resonance in the window (local minimum of `sigma_min`) and records
/// the minimum there; the resolvent norm's growth lives on this lower
/// envelope, while off-resonance values stay nearly flat.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Grid,
    #[default]
    Envelope,
}

impl std::str::FromStr for Sampling {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "grid" => Ok(Self::Grid),
            "envelope" => Ok(Self::Envelope),
            other => Err(format!("unknown sampling `{other}` (grid|envelope)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventSample {
    pub omega: f64,
    pub sigma_min: f64,
}

impl ResolventSample {
    pub fn resolvent_norm(&self) -> f64 {
        1.0 / self.sigma_min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolventScan {
    pub samples: Vec<ResolventSample>,
    pub alpha: f64,
    pub n_dof: usize,
    pub n_elements: usize,
    pub omega_cap: f64,
    /// Requested frequency range.
    pub range: (f64, f64),
    pub sampling: Sampling,
}

impl ResolventScan {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_csv(
            path,
            &["omega", "sigma_min", "resolvent_norm"],
            self.samples
                .iter()
                .map(|s| (s.omega, s.sigma_min, s.resolvent_norm())),
        )
    }
}

/// Scan settings beyond the frequency window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub cap_factor: f64,
    pub sigma: SigmaMinOptions,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            cap_factor: DEFAULT_CAP_FACTOR,
            sigma: SigmaMinOptions::default(),
        }
    }
}

/// Largest frequency the mesh is trusted to resolve.
pub fn omega_cap(n_elements: usize, cap_factor: f64) -> f64 {
    n_elements as f64 / cap_factor
}

fn check_window(matrices: &SystemMatrices, omega_min: f64, omega_max: f64, opts: &ScanOptions) -> Result<f64> {
    let cap = omega_cap(matrices.n_elements(), opts.cap_factor);
    if !(omega_min > 0.0 && omega_min < omega_max) {
        return Err(Error::invalid(format!(
            "need 0 < omega_min < omega_max (got {omega_min}, {omega_max})"
        )));
    }
    if omega_max > cap {
        return Err(Error::invalid(format!(
            "omega_max={omega_max} exceeds the resolution cap omega_cap={cap} (n_elements/{})",
            opts.cap_factor
        )));
    }
    Ok(cap)
}

pub fn frequency_grid(omega_min: f64, omega_max: f64, points: usize, spacing: Spacing) -> Vec<f64> {
    if points == 1 {
        return vec![omega_min];
    }
    let last = (points - 1) as f64;
    (0..points)
        .map(|j| {
            let s = j as f64 / last;
            match spacing {
                Spacing::Log => omega_min * (omega_max / omega_min).powf(s),
                Spacing::Linear => omega_min + (omega_max - omega_min) * s,
            }
        })
        .collect()
}

fn evaluate_grid(matrices: &SystemMatrices, omegas: &[f64], opts: &SigmaMinOptions) -> Result<Vec<f64>> {
    omegas
        .par_iter()
        .map(|&w| sigma_min_with(matrices, w, opts).map(|e| e.sigma_min))
        .collect()
}

/// `sigma_min` on a grid of `points` frequencies in `[omega_min, omega_max]`.
pub fn scan(
    matrices: &SystemMatrices,
    omega_min: f64,
    omega_max: f64,
    points: usize,
    spacing: Spacing,
) -> Result<ResolventScan> {
    scan_with(matrices, omega_min, omega_max, points, spacing, &ScanOptions::default())
}

pub fn scan_with(
    matrices: &SystemMatrices,
    omega_min: f64,
    omega_max: f64,
    points: usize,
    spacing: Spacing,
    opts: &ScanOptions,
) -> Result<ResolventScan> {
    let cap = check_window(matrices, omega_min, omega_max, opts)?;
    if points == 0 {
        return Err(Error::invalid("scan needs at least one point"));
    }
    let omegas = frequency_grid(omega_min, omega_max, points, spacing);
    let sigmas = evaluate_grid(matrices, &omegas, &opts.sigma)?;
    Ok(ResolventScan {
        samples: omegas
            .into_iter()
            .zip(sigmas)
            .map(|(omega, sigma_min)| ResolventSample { omega, sigma_min })
            .collect(),
        alpha: matrices.alpha(),
        n_dof: matrices.n_dof(),
        n_elements: matrices.n_elements(),
        omega_cap: cap,
        range: (omega_min, omega_max),
        sampling: Sampling::Grid,
    })
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimization of `f` on `[a, b]`.
fn golden_section(mut a: f64, mut b: f64, xtol: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..200 {
        if b - a <= xtol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

/// Locate the resonances in `[omega_min, omega_max]` and record `sigma_min`
/// at each of them.
///
/// `sigma_min` is first evaluated on a uniform grid with step at most
/// `resolution`; every interior local minimum is then refined by
/// golden-section search inside its neighbouring grid cells. `resolution`
/// must be well below the spacing of the eigenfrequencies.
pub fn envelope_scan(
    matrices: &SystemMatrices,
    omega_min: f64,
    omega_max: f64,
    resolution: f64,
    opts: &ScanOptions,
) -> Result<ResolventScan> {
    let cap = check_window(matrices, omega_min, omega_max, opts)?;
    if !(resolution > 0.0) {
        return Err(Error::invalid(format!("resolution must be > 0 (got {resolution})")));
    }
    let cells = ((omega_max - omega_min) / resolution).ceil().max(2.0) as usize;
    let omegas = frequency_grid(omega_min, omega_max, cells + 1, Spacing::Linear);
    let sigmas = evaluate_grid(matrices, &omegas, &opts.sigma)?;

    let brackets: Vec<usize> = (1..omegas.len() - 1)
        .filter(|&j| sigmas[j] < sigmas[j - 1] && sigmas[j] <= sigmas[j + 1])
        .collect();
    let mut samples: Vec<ResolventSample> = brackets
        .par_iter()
        .map(|&j| {
            let xtol = 1e-9 * omegas[j];
            let (omega, sigma_min) = golden_section(omegas[j - 1], omegas[j + 1], xtol, |w| {
                sigma_min_with(matrices, w, &opts.sigma).map(|e| e.sigma_min)
            })?;
            Ok(ResolventSample { omega, sigma_min })
        })
        .collect::<Result<_>>()?;
    samples.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    samples.dedup_by(|later, earlier| (later.omega - earlier.omega).abs() <= 1e-8 * earlier.omega);
    log::debug!(
        "envelope scan [{omega_min}, {omega_max}]: {} grid points, {} resonances",
        omegas.len(),
        samples.len()
    );
    Ok(ResolventScan {
        samples,
        alpha: matrices.alpha(),
        n_dof: matrices.n_dof(),
        n_elements: matrices.n_elements(),
        omega_cap: cap,
        range: (omega_min, omega_max),
        sampling: Sampling::Envelope,
    })
}

/// Minimum number of scan samples inside a fit window.
pub const MIN_THETA_SAMPLES: usize = 10;

/// Power-law fit of the resolvent norm, `||R(i omega)|| ~ omega^theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Fitted growth exponent of `1 / sigma_min` (the estimate of theta).
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub window: (f64, f64),
    /// `min omega^slope * sigma_min` over the window.
    pub r_lower: f64,
    pub n_samples: usize,
}

fn window_samples(scan: &ResolventScan, omega_lo: f64, omega_hi: f64) -> Result<Vec<ResolventSample>> {
    if !(omega_lo < omega_hi) {
        return Err(Error::invalid(format!("degenerate window [{omega_lo}, {omega_hi}]")));
    }
    let (lo, hi) = scan.range;
    let slack = 1e-12 * hi;
    if omega_lo < lo - slack || omega_hi > hi + slack {
        return Err(Error::invalid(format!(
            "window [{omega_lo}, {omega_hi}] is outside the scanned range [{lo}, {hi}]"
        )));
    }
    Ok(scan
        .samples
        .iter()
        .filter(|s| s.omega >= omega_lo && s.omega <= omega_hi)
        .copied()
        .collect())
}

pub fn fit_theta(scan: &ResolventScan, omega_lo: f64, omega_hi: f64) -> Result<RateFit> {
    let samples = window_samples(scan, omega_lo, omega_hi)?;
    if samples.len() < MIN_THETA_SAMPLES {
        return Err(Error::invalid(format!(
            "window [{omega_lo}, {omega_hi}] holds {} samples, need {MIN_THETA_SAMPLES}",
            samples.len()
        )));
    }
    let omegas: Vec<f64> = samples.iter().map(|s| s.omega).collect();
    let norms: Vec<f64> = samples.iter().map(|s| s.resolvent_norm()).collect();
    let fit = power_law_fit(&omegas, &norms)?;
    let r_lower = samples
        .iter()
        .map(|s| s.omega.powf(fit.slope) * s.sigma_min)
        .fold(f64::INFINITY, f64::min);
    Ok(RateFit {
        slope: fit.slope,
        intercept: fit.intercept,
        residual: fit.residual,
        window: (omega_lo, omega_hi),
        r_lower,
        n_samples: samples.len(),
    })
}

/// `min omega^theta * sigma_min` over the window for a prescribed `theta`.
pub fn lower_bound_witness(scan: &ResolventScan, theta: f64, omega_lo: f64, omega_hi: f64) -> Result<f64> {
    let samples = window_samples(scan, omega_lo, omega_hi)?;
    if samples.is_empty() {
        return Err(Error::invalid("no scan samples in the window"));
    }
    Ok(samples
        .iter()
        .map(|s| s.omega.powf(theta) * s.sigma_min)
        .fold(f64::INFINITY, f64::min))
}

/// Contents of `fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub alpha: f64,
    pub n_elements: usize,
    pub theta_fit: f64,
    pub theta_predicted: f64,
    pub r_lower: f64,
    pub window: [f64; 2],
    pub residual: f64,
}

impl FitReport {
    pub fn new(scan: &ResolventScan, fit: &RateFit, theta_predicted: f64) -> Self {
        Self {
            alpha: scan.alpha,
            n_elements: scan.n_elements,
            theta_fit: fit.slope,
            theta_predicted,
            r_lower: fit.r_lower,
            window: [fit.window.0, fit.window.1],
            residual: fit.residual,
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, crate::io::json_sorted(self)?.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assemble, build_mesh};
    use crate::model::DampingProfile;
    use crate::tridiag::SymTridiag;
    use approx::assert_abs_diff_eq;

    fn system(n: usize, alpha: f64) -> SystemMatrices {
        assemble(&build_mesh(n, 1.0).unwrap(), &DampingProfile::new(alpha).unwrap())
    }

    fn random_complex(n: usize, seed: u64) -> ComplexState {
        start_vector(n, seed)
    }

    #[test]
    fn inverse_consistency() {
        let m = system(32, 0.5);
        let u = random_complex(31, 7);
        for omega in [0.0, 1.3, 12.0] {
            let s = C64::new(0.0, omega);
            let f = apply_shifted_operator(&m, s, &u).unwrap();
            let back = resolvent_apply(&m, omega, &f).unwrap();
            let diff = ComplexState {
                u: back.u.iter().zip(&u.u).map(|(a, b)| a - b).collect(),
                v: back.v.iter().zip(&u.v).map(|(a, b)| a - b).collect(),
            };
            let rel = (energy_norm_sq(&m, &diff) / energy_norm_sq(&m, &u)).sqrt();
            assert!(rel <= 1e-10, "omega={omega}: {rel}");
            assert!(shifted_residual(&m, s, &back, &f).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn zero_frequency_reduces_to_static_solve() {
        let m = system(16, 0.5);
        let f = random_complex(15, 3);
        let x = resolvent_apply(&m, 0.0, &f).unwrap();
        for (v, fi) in x.v.iter().zip(&f.u) {
            assert_abs_diff_eq!((v + fi).norm(), 0.0, epsilon = 1e-12);
        }
        // K u = M g + D f
        let ku = m.stiffness.mul_vec(&x.u);
        let mg = m.mass.mul_vec(&f.v);
        let df = m.damping.mul_vec(&f.u);
        for i in 0..15 {
            assert_abs_diff_eq!((ku[i] - mg[i] - df[i]).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_dimensions() {
        let m = system(16, 0.5);
        assert!(resolvent_apply(&m, 1.0, &ComplexState::zeros(3)).is_err());
    }

    #[test]
    fn singular_shift_reported() {
        // Scalar undamped oscillator: K = 4, M = 1 resonates at omega = 2.
        let one = SymTridiag::identity(1);
        let k = SymTridiag::new(vec![4.0], vec![]).unwrap();
        let m = SystemMatrices::from_parts(one, k, SymTridiag::zeros(1)).unwrap();
        assert!(matches!(
            resolvent_apply(&m, 2.0, &ComplexState::zeros(1)),
            Err(Error::Singular { .. })
        ));
        assert!(sigma_min(&m, 2.0).is_err());
        // Away from resonance the scalar case is exact: sigma_min = |4 - omega^2| / ...
        assert!(sigma_min(&m, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn damped_sigma_min_positive_everywhere() {
        let m = system(64, 0.5);
        for omega in [0.0, 0.5, 1.6, 3.6, 6.4] {
            assert!(sigma_min(&m, omega).unwrap() > 0.0);
        }
    }

    #[test]
    fn sigma_min_is_order_independent() {
        let m = system(64, 0.25);
        let grid = frequency_grid(1.0, 6.0, 12, Spacing::Log);
        let forward: Vec<f64> = grid.iter().map(|&w| sigma_min(&m, w).unwrap()).collect();
        let backward: Vec<f64> = grid.iter().rev().map(|&w| sigma_min(&m, w).unwrap()).collect();
        let parallel = scan(&m, 1.0, 6.0, 12, Spacing::Log).unwrap();
        for i in 0..grid.len() {
            assert_eq!(forward[i], backward[grid.len() - 1 - i]);
            assert_eq!(forward[i], parallel.samples[i].sigma_min);
        }
    }

    #[test]
    fn scan_single_point_and_monotone_grid() {
        let m = system(64, 0.5);
        let one = scan(&m, 2.0, 5.0, 1, Spacing::Log).unwrap();
        assert_eq!(one.samples.len(), 1);
        assert_eq!(one.samples[0].sigma_min, sigma_min(&m, 2.0).unwrap());
        for spacing in [Spacing::Log, Spacing::Linear] {
            let s = scan(&m, 1.0, 6.0, 9, spacing).unwrap();
            assert!(s.samples.windows(2).all(|w| w[1].omega > w[0].omega));
            assert_abs_diff_eq!(s.samples[8].omega, 6.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn scan_enforces_cap() {
        let m = system(64, 0.5);
        let err = scan(&m, 1.0, 7.0, 4, Spacing::Log).unwrap_err().to_string();
        assert!(err.contains("6.4"), "{err}");
        assert!(scan(&m, 5.0, 5.0, 4, Spacing::Log).is_err());
        assert!(scan(&m, 0.0, 5.0, 4, Spacing::Log).is_err());
        assert!(scan(&m, 1.0, 5.0, 0, Spacing::Log).is_err());
    }

    fn synthetic(f: impl Fn(f64) -> f64) -> ResolventScan {
        let samples = frequency_grid(10.0, 100.0, 40, Spacing::Log)
            .into_iter()
            .map(|omega| ResolventSample {
                omega,
                sigma_min: f(omega),
            })
            .collect();
        ResolventScan {
            samples,
            alpha: 0.0,
            n_dof: 1,
            n_elements: 2,
            omega_cap: 1e9,
            range: (10.0, 100.0),
            sampling: Sampling::Grid,
        }
    }

    #[test]
    fn fit_exact_power_laws() {
        let fit = fit_theta(&synthetic(|w| w.powf(-0.5)), 10.0, 100.0).unwrap();
        assert_abs_diff_eq!(fit.slope, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.r_lower, 1.0, epsilon = 1e-10);
        let fit = fit_theta(&synthetic(|_| 0.3), 10.0, 100.0).unwrap();
        assert_abs_diff_eq!(fit.slope, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn fit_rejects_degenerate_windows() {
        let s = synthetic(|w| 1.0 / w);
        assert!(fit_theta(&s, 50.0, 50.0).is_err());
        assert!(fit_theta(&s, 5.0, 50.0).is_err());
        assert!(fit_theta(&s, 10.0, 12.0).is_err());
    }

    #[test]
    fn witness_with_prescribed_theta() {
        let s = synthetic(|w| 2.0 * w.powf(-0.25));
        assert_abs_diff_eq!(lower_bound_witness(&s, 0.25, 10.0, 100.0).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, fx) = golden_section(0.0, 3.0, 1e-10, |x| Ok((x - 1.234).powi(2) + 0.5)).unwrap();
        assert_abs_diff_eq!(x, 1.234, epsilon = 1e-8);
        assert_abs_diff_eq!(fx, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn envelope_samples_sit_at_resonances() {
        let m = system(256, 0.0);
        let env = envelope_scan(&m, 5.0, 20.0, 0.25, &ScanOptions::default()).unwrap();
        assert!(env.samples.len() >= 4);
        assert!(env.samples.windows(2).all(|w| w[1].omega > w[0].omega));
        for s in &env.samples {
            let left = sigma_min(&m, s.omega - 0.05).unwrap();
            let right = sigma_min(&m, s.omega + 0.05).unwrap();
            assert!(s.sigma_min < left && s.sigma_min < right);
        }
        let grid = scan(&m, 5.0, 20.0, 30, Spacing::Linear).unwrap();
        let grid_min = grid.samples.iter().map(|s| s.sigma_min).fold(f64::INFINITY, f64::min);
        let env_min = env.samples.iter().map(|s| s.sigma_min).fold(f64::INFINITY, f64::min);
        assert!(env_min <= grid_min);
    }

    #[test]
    fn fit_report_json_keys() {
        let s = synthetic(|w| w.powf(-0.5));
        let fit = fit_theta(&s, 10.0, 100.0).unwrap();
        let report = FitReport::new(&s, &fit, 0.5);
        let text = crate::io::json_sorted(&report).unwrap();
        let keys = ["alpha", "n_elements", "r_lower", "residual", "theta_fit", "theta_predicted", "window"];
        let positions: Vec<usize> = keys.iter().map(|k| text.find(&format!("\"{k}\"")).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }
}
