//! Acceptance criteria.
//!
//! Each criterion runs a complete measurement and reports PASS/FAIL with the
//! numbers it was decided on. The `verify` subcommand and the `acceptance`
//! integration test both call into this module.

use std::fmt;

use rayon::prelude::*;

use crate::analysis::{
    beta_minus_one_divergence, build_comparison_table, hardy_ratio, hardy_sweep, table_csv, table_text,
    PiecewiseLinear, DEFAULT_HARDY_ALPHAS, DEFAULT_HARDY_BETAS, DEFAULT_HARDY_SAMPLES,
};
use crate::discretization::{assemble, build_mesh, energy, Mesh, State, SystemMatrices};
use crate::error::{Error, Result};
use crate::evolution::{default_t_hi, fit_decay_exponent, make_initial_data, simulate, InitialKind};
use crate::model::{predict_rates, DampingProfile};
use crate::oracle::{dense_expm_state, dense_sigma_min, quadrature_damping};
use crate::resolvent::{envelope_scan, fit_theta, lower_bound_witness, sigma_min, ResolventScan, ScanOptions};
use crate::spectral::compute_spectrum;

/// Outcome of one criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} [{}] {}: {}", self.id, self.title, self.detail)
    }
}

fn finish(id: u8, title: &'static str, outcome: Result<(bool, String)>) -> CriterionResult {
    match outcome {
        Ok((passed, detail)) => CriterionResult { id, title, passed, detail },
        Err(e) => CriterionResult {
            id,
            title,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn system(n: usize, alpha: f64) -> Result<(Mesh, SystemMatrices)> {
    let mesh = build_mesh(n, 1.0)?;
    let m = assemble(&mesh, &DampingProfile::new(alpha)?);
    Ok((mesh, m))
}

pub const RESOLVENT_ALPHAS: [f64; 3] = [0.0, 0.25, 0.5];
pub const RESOLVENT_MESHES: [usize; 2] = [2048, 4096];
pub const RESOLVENT_WINDOW: (f64, f64) = (10.0, 100.0);
pub const THETA_TOL: f64 = 0.08;
pub const THETA_MESH_TOL: f64 = 0.05;

/// Envelope scans over the fit window for every `(alpha, n)` combination
/// used by the resolvent criteria.
#[derive(Debug, Clone)]
pub struct ResolventStudy {
    /// `(alpha, [scan at 2048, scan at 4096])`.
    pub scans: Vec<(f64, [ResolventScan; 2])>,
}

pub fn resolvent_study() -> Result<ResolventStudy> {
    let (lo, hi) = RESOLVENT_WINDOW;
    let opts = ScanOptions::default();
    let scans = RESOLVENT_ALPHAS
        .iter()
        .map(|&alpha| {
            let pair: Vec<ResolventScan> = RESOLVENT_MESHES
                .iter()
                .map(|&n| {
                    let (_, m) = system(n, alpha)?;
                    envelope_scan(&m, lo, hi, 0.25, &opts)
                })
                .collect::<Result<_>>()?;
            let [a, b]: [ResolventScan; 2] = pair.try_into().expect("two meshes");
            Ok((alpha, [a, b]))
        })
        .collect::<Result<_>>()?;
    Ok(ResolventStudy { scans })
}

/// Fitted resolvent growth exponent against the prediction.
pub fn criterion_1(study: &Result<ResolventStudy>) -> CriterionResult {
    let outcome = study.as_ref().map_err(clone_err).and_then(|study| {
        let (lo, hi) = RESOLVENT_WINDOW;
        let mut ok = true;
        let mut parts = Vec::new();
        for (alpha, [coarse, fine]) in &study.scans {
            let theta = predict_rates(*alpha)?.theta;
            let a = fit_theta(coarse, lo, hi)?.slope;
            let b = fit_theta(fine, lo, hi)?.slope;
            let good = (a - theta).abs() <= THETA_TOL && (a - b).abs() <= THETA_MESH_TOL;
            ok &= good;
            parts.push(format!(
                "alpha={alpha}: theta_fit={a:.4} (n=2048), {b:.4} (n=4096), predicted {theta:.4}{}",
                if good { "" } else { " [off]" }
            ));
        }
        Ok((ok, parts.join("; ")))
    });
    finish(1, "resolvent exponent", outcome)
}

/// Lower-bound witness `min omega^theta sigma_min` at the predicted theta.
pub fn criterion_2(study: &Result<ResolventStudy>) -> CriterionResult {
    let outcome = study.as_ref().map_err(clone_err).and_then(|study| {
        let (lo, hi) = RESOLVENT_WINDOW;
        let mut ok = true;
        let mut parts = Vec::new();
        for (alpha, [coarse, fine]) in &study.scans {
            let theta = predict_rates(*alpha)?.theta;
            let a = lower_bound_witness(coarse, theta, lo, hi)?;
            let b = lower_bound_witness(fine, theta, lo, hi)?;
            let ratio = a.max(b) / a.min(b);
            let good = a > 0.0 && b > 0.0 && ratio <= 2.0;
            ok &= good;
            parts.push(format!("alpha={alpha}: r={a:.4e} / {b:.4e} (ratio {ratio:.3})"));
        }
        Ok((ok, parts.join("; ")))
    });
    finish(2, "lower-bound witness", outcome)
}

fn clone_err(e: &Error) -> Error {
    Error::invalid(format!("resolvent study failed: {e}"))
}

pub const SPECTRUM_MESHES: [usize; 2] = [64, 256];
pub const SPECTRUM_ALPHAS: [f64; 4] = [0.0, 0.25, 0.5, 0.9];

/// Dissipativity and imaginary-axis gap of the pencil spectra, and the
/// undamped control frequencies.
pub fn criterion_3() -> CriterionResult {
    let outcome = (|| -> Result<(bool, String)> {
        let pairs: Vec<(usize, f64)> = SPECTRUM_MESHES
            .iter()
            .flat_map(|&n| SPECTRUM_ALPHAS.iter().map(move |&a| (n, a)))
            .collect();
        let results: Vec<(usize, f64, f64, f64, f64)> = pairs
            .par_iter()
            .map(|&(n, alpha)| {
                let (_, m) = system(n, alpha)?;
                let s = compute_spectrum(&m)?;
                Ok((n, alpha, s.abscissa, s.axis_gap, s.max_modulus()))
            })
            .collect::<Result<_>>()?;
        let mut ok = true;
        let mut worst_scaled = f64::NEG_INFINITY;
        let mut min_gap = f64::INFINITY;
        for &(n, alpha, abscissa, gap, modulus) in &results {
            if !(abscissa <= 1e-10 * modulus && gap > 0.0) {
                ok = false;
                log::warn!("n={n} alpha={alpha}: abscissa {abscissa:e}, gap {gap:e}");
            }
            worst_scaled = worst_scaled.max(abscissa / modulus);
            min_gap = min_gap.min(gap);
        }
        let mut worst_rel = 0.0_f64;
        for &n in &SPECTRUM_MESHES {
            let (_, m) = system(n, 0.0)?;
            let upper = compute_spectrum(&m.undamped())?.upper_half();
            for k in 1..=n / 10 {
                let exact = k as f64 * std::f64::consts::FRAC_PI_2;
                let z = upper.get(k - 1).copied().unwrap_or_default();
                worst_rel = worst_rel.max((z - num_complex::Complex64::new(0.0, exact)).norm() / exact);
            }
        }
        ok &= worst_rel <= 1e-3;
        Ok((
            ok,
            format!(
                "{} spectra: max Re/|lambda| = {worst_scaled:.3e}, min axis gap = {min_gap:.3e}; undamped k <= n/10 max rel err = {worst_rel:.2e}",
                results.len()
            ),
        ))
    })();
    finish(3, "dissipativity and axis gap", outcome)
}

pub const DECAY_N: usize = 2048;
pub const DECAY_DT: f64 = 1e-3;

/// Energy decay slope for graph-normalized smooth data.
pub fn criterion_4() -> CriterionResult {
    let outcome = (|| -> Result<(bool, String)> {
        let cases: Vec<(f64, f64)> = vec![(0.0, -3.5), (0.5, -2.0 * predict_rates(0.5)?.prior_order + 0.5)];
        let fits: Vec<(f64, f64, f64, f64, f64)> = cases
            .par_iter()
            .map(|&(alpha, bound)| {
                let (mesh, m) = system(DECAY_N, alpha)?;
                let abscissa = compute_spectrum(&m)?.abscissa;
                let t_hi = default_t_hi(100.0, None, Some(abscissa));
                let u0 = make_initial_data(&mesh, &m, InitialKind::GraphNormalized)?;
                let trace = simulate(&m, &u0, t_hi, DECAY_DT, 100)?;
                let fit = fit_decay_exponent(&trace, 10.0, t_hi)?;
                Ok((alpha, fit.slope, bound, t_hi, abscissa))
            })
            .collect::<Result<_>>()?;
        let ok = fits.iter().all(|&(_, slope, bound, _, _)| slope <= bound);
        let detail = fits
            .iter()
            .map(|(a, s, b, t, ab)| format!("alpha={a}: slope={s:.3} (need <= {b}), window [10, {t:.1}], abscissa {ab:.3e}"))
            .collect::<Vec<_>>()
            .join("; ");
        Ok((ok, detail))
    })();
    finish(4, "energy decay", outcome)
}

pub const ORACLE_N: usize = 32;
pub const ORACLE_DT: f64 = 5e-4;

fn energy_distance(m: &SystemMatrices, a: &State, b: &State) -> Result<f64> {
    let diff = State {
        u: a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect(),
        v: a.v.iter().zip(&b.v).map(|(x, y)| x - y).collect(),
    };
    Ok((energy(m, &diff)? / energy(m, b)?).sqrt())
}

/// Fast paths against the dense oracles at `n_dof <= 32`.
pub fn criterion_5() -> CriterionResult {
    let outcome = (|| -> Result<(bool, String)> {
        let mut sigma_err = 0.0_f64;
        for alpha in [0.0, 0.5, 0.9] {
            let (_, m) = system(ORACLE_N, alpha)?;
            for omega in [0.0, 0.7, 1.6, 2.9, 3.2] {
                let fast = sigma_min(&m, omega)?;
                let slow = dense_sigma_min(&m, omega)?;
                sigma_err = sigma_err.max((fast - slow).abs() / slow);
            }
        }

        let (mesh, m) = system(ORACLE_N, 0.5)?;
        let u0 = make_initial_data(&mesh, &m, InitialKind::GraphNormalized)?;
        let trace = simulate(&m, &u0, 1.0, ORACLE_DT, 2000)?;
        let exact = dense_expm_state(&m, &u0, 1.0)?;
        let traj_err = energy_distance(&m, &trace.final_state, &exact)?;

        let mut quad_err = 0.0_f64;
        for (alpha, grading) in [(0.0, 1.0), (0.25, 1.0), (0.5, 2.0), (0.9, 3.0)] {
            let mesh = build_mesh(ORACLE_N, grading)?;
            let p = DampingProfile::new(alpha)?;
            let exact = assemble(&mesh, &p).damping;
            let quad = quadrature_damping(&mesh, &p)?;
            for i in 0..mesh.n_dof() {
                for j in i..(i + 2).min(mesh.n_dof()) {
                    let (a, b) = (exact.get(i, j), quad.get(i, j));
                    if a != 0.0 || b != 0.0 {
                        quad_err = quad_err.max((a - b).abs() / a.abs().max(b.abs()));
                    }
                }
            }
        }
        let ok = sigma_err <= 1e-6 && traj_err <= 1e-6 && quad_err <= 1e-10;
        Ok((
            ok,
            format!(
                "sigma_min rel err {sigma_err:.2e} (<= 1e-6), trajectory at t=1 rel err {traj_err:.2e} (<= 1e-6, dt={ORACLE_DT}), damping matrix rel err {quad_err:.2e} (<= 1e-10)"
            ),
        ))
    })();
    finish(5, "oracle equivalence", outcome)
}

/// Hardy-ratio stability under refinement, and divergence at `beta = -1`.
pub fn criterion_6() -> CriterionResult {
    let outcome = (|| -> Result<(bool, String)> {
        let cases = hardy_sweep(&DEFAULT_HARDY_ALPHAS, &DEFAULT_HARDY_BETAS, DEFAULT_HARDY_SAMPLES, 0)?;
        let worst = cases
            .iter()
            .max_by(|a, b| a.growth().total_cmp(&b.growth()))
            .ok_or_else(|| Error::invalid("empty sweep"))?;
        let stable = cases.iter().all(|c| c.ratio.is_finite() && c.growth() < 1.5);

        let lowers: Vec<f64> = (1..=8).map(|k| 10f64.powi(-2 * k)).collect();
        let div = beta_minus_one_divergence(&lowers)?;
        let increasing = div.windows(2).all(|w| w[1].1 > w[0].1);
        let last = div.last().map(|d| d.1).unwrap_or(0.0);
        let rejected = hardy_ratio(&PiecewiseLinear::new(vec![0.0, 1.0], vec![1.0, 0.0])?, 0.0, -1.0).is_err();
        let diverges = increasing && last > 30.0 && rejected;
        Ok((
            stable && diverges,
            format!(
                "{} pairs, max growth {:.3} at (alpha={}, beta={}); beta=-1 ratio {:.2} -> {:.2} as eps 1e-2 -> 1e-16",
                cases.len(),
                worst.growth(),
                worst.alpha,
                worst.beta,
                div[0].1,
                last
            ),
        ))
    })();
    finish(6, "Hardy inequality", outcome)
}

/// No energy increase beyond `1e-12 E(0)` for any time step.
pub fn criterion_7() -> CriterionResult {
    let outcome = (|| -> Result<(bool, String)> {
        let runs: Vec<(f64, f64)> = [1e-4, 1e-2, 1.0]
            .iter()
            .flat_map(|&dt| [0.0, 0.5, 0.9].into_iter().map(move |a| (dt, a)))
            .collect();
        let worst: Vec<f64> = runs
            .par_iter()
            .map(|&(dt, alpha)| {
                let (mesh, m) = system(256, alpha)?;
                let mut worst = 0.0_f64;
                for kind in [InitialKind::GraphNormalized, InitialKind::BumpVelocity] {
                    let u0 = make_initial_data(&mesh, &m, kind)?;
                    let trace = simulate(&m, &u0, 2000.0 * dt, dt, 1)?;
                    worst = worst.max(trace.max_increase() / trace.initial_energy());
                }
                Ok(worst)
            })
            .collect::<Result<_>>()?;
        let max = worst.iter().copied().fold(0.0, f64::max);
        Ok((
            max <= 1e-12,
            format!("{} traces, max relative energy increase {max:.2e} (<= 1e-12)", 2 * runs.len()),
        ))
    })();
    finish(7, "energy monotonicity", outcome)
}

/// The comparison table for `alpha in {0, 0.5}`.
pub fn criterion_8() -> CriterionResult {
    let outcome = (|| -> Result<(bool, String)> {
        let alphas = [0.0, 0.5];
        let rows = build_comparison_table(&alphas, &[])?;
        let csv = String::from_utf8(table_csv(&rows)?).map_err(|e| Error::invalid(e.to_string()))?;
        let expected = "alpha,decay_order,prior_order,theta_fit,slope_energy\n0.0,2.0,1.5,,\n0.5,3.0,2.5,,\n";
        let text = table_text(&rows);
        let mut ok = csv == expected;
        for r in &rows {
            ok &= r.decay_order == (2.0 - r.alpha) / (1.0 - r.alpha);
            ok &= r.prior_order == (3.0 - r.alpha) / (2.0 * (1.0 - r.alpha));
            ok &= r.prior_order < r.decay_order;
        }
        ok &= rows[0].decay_order == 2.0;
        ok &= text.contains("optimal polynomial t^-2") && text.contains("polynomial t^-3");
        Ok((
            ok,
            format!(
                "alpha=0: order {} (prior {}); alpha=0.5: order {} (prior {})",
                rows[0].decay_order, rows[0].prior_order, rows[1].decay_order, rows[1].prior_order
            ),
        ))
    })();
    finish(8, "conclusion table", outcome)
}

/// Run the suite. `quick` restricts it to the small-n criteria 5-8.
pub fn run_acceptance(quick: bool) -> Vec<CriterionResult> {
    let mut out = Vec::new();
    if !quick {
        let study = resolvent_study();
        out.push(criterion_1(&study));
        out.push(criterion_2(&study));
        out.push(criterion_3());
        out.push(criterion_4());
    }
    out.push(criterion_5());
    out.push(criterion_6());
    out.push(criterion_7());
    out.push(criterion_8());
    out
}
