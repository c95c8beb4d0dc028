//! Time stepping of `dU/dt = A U` with the implicit midpoint rule, and the
//! energy traces used to measure decay exponents.
//!
//! One step solves `(I - dt/2 A) U+ = (I + dt/2 A) U`. Eliminating the
//! displacement leaves a single SPD tridiagonal system for the midpoint
//! velocity,
//!
//! ```text
//! ((4/dt^2) M + (2/dt) D + K) v_mid = (4/dt^2) M v - (2/dt) K u
//! u+ = u + dt v_mid,   v+ = 2 v_mid - v
//! ```
//!
//! and the discrete energy obeys `E(U+) - E(U) = -2 dt v_mid^T D v_mid`
//! exactly (up to round-off).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discretization::{apply_generator, energy, Mesh, State, SystemMatrices};
use crate::error::{Error, Result};
use crate::fit::{power_law_fit, PowerLawFit};
use crate::tridiag::{Tridiag, TridiagLu};

/// Energies below this fraction of the trace maximum are treated as
/// round-off and rejected by [`fit_decay_exponent`].
pub const ROUNDOFF_FLOOR: f64 = 1e-28;

/// Minimum number of samples in a decay-fit window.
pub const MIN_FIT_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// `u = sin(pi (x + 1) / 2)`, `v = 0`.
    SineDisplacement,
    /// `u = 0`, `v = (1 - x^2)^2`.
    BumpVelocity,
    /// `SineDisplacement` scaled so that `E(U0) + E(A U0) = 1`.
    GraphNormalized,
}

impl std::str::FromStr for InitialKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sine_displacement" => Ok(Self::SineDisplacement),
            "bump_velocity" => Ok(Self::BumpVelocity),
            "graph_normalized" => Ok(Self::GraphNormalized),
            other => Err(format!(
                "unknown initial data `{other}` (sine_displacement|bump_velocity|graph_normalized)"
            )),
        }
    }
}

pub fn make_initial_data(mesh: &Mesh, matrices: &SystemMatrices, kind: InitialKind) -> Result<State> {
    let x = mesh.interior();
    if x.len() != matrices.n_dof() {
        return Err(Error::invalid("mesh and matrices disagree on the number of unknowns"));
    }
    let sine = || -> Vec<f64> {
        x.iter()
            .map(|&xi| (std::f64::consts::PI * (xi + 1.0) / 2.0).sin())
            .collect()
    };
    match kind {
        InitialKind::SineDisplacement => Ok(State {
            u: sine(),
            v: vec![0.0; x.len()],
        }),
        InitialKind::BumpVelocity => Ok(State {
            u: vec![0.0; x.len()],
            v: x.iter().map(|&xi| (1.0 - xi * xi).powi(2)).collect(),
        }),
        InitialKind::GraphNormalized => {
            let state = State {
                u: sine(),
                v: vec![0.0; x.len()],
            };
            let graph = energy(matrices, &state)? + energy(matrices, &apply_generator(matrices, &state)?)?;
            Ok(state.scaled(1.0 / graph.sqrt()))
        }
    }
}

/// Factored implicit midpoint step for a fixed `dt`.
///
/// A negative `dt` steps backward in time.
#[derive(Debug, Clone)]
pub struct MidpointStepper<'a> {
    matrices: &'a SystemMatrices,
    dt: f64,
    lu: TridiagLu<f64>,
}

/// Result of one step: the new state and the energy it dissipated,
/// `2 dt v_mid^T D v_mid`.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: State,
    pub dissipated: f64,
}

impl<'a> MidpointStepper<'a> {
    pub fn new(matrices: &'a SystemMatrices, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::invalid(format!("time step must be finite and nonzero (got {dt})")));
        }
        let schur = Tridiag::combination(&[
            (4.0 / (dt * dt), &matrices.mass),
            (2.0 / dt, &matrices.damping),
            (1.0, &matrices.stiffness),
        ]);
        let lu = TridiagLu::factor(&schur).map_err(|e| Error::Singular {
            shift: num_complex::Complex64::new(dt, 0.0),
            context: format!("implicit midpoint Schur complement: {e}"),
        })?;
        Ok(Self { matrices, dt, lu })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, state: &State) -> Result<StepOutcome> {
        let m = self.matrices;
        let n = m.n_dof();
        if state.u.len() != n || state.v.len() != n {
            return Err(Error::invalid("state dimension does not match the system"));
        }
        let dt = self.dt;
        let mv = m.mass.mul_vec(&state.v);
        let ku = m.stiffness.mul_vec(&state.u);
        let mut v_mid: Vec<f64> = mv
            .iter()
            .zip(&ku)
            .map(|(a, b)| (4.0 / (dt * dt)) * a - (2.0 / dt) * b)
            .collect();
        self.lu.solve_in_place(&mut v_mid);
        let u: Vec<f64> = state.u.iter().zip(&v_mid).map(|(u, w)| u + dt * w).collect();
        let v: Vec<f64> = state.v.iter().zip(&v_mid).map(|(v, w)| 2.0 * w - v).collect();
        let dissipated = 2.0 * dt * m.damping.quad_form(&v_mid);
        Ok(StepOutcome {
            state: State { u, v },
            dissipated,
        })
    }
}

/// One implicit midpoint step (`dt > 0`).
pub fn step(matrices: &SystemMatrices, state: &State, dt: f64) -> Result<State> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be > 0 (got {dt})")));
    }
    Ok(MidpointStepper::new(matrices, dt)?.step(state)?.state)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub t: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrace {
    pub samples: Vec<EnergySample>,
    pub alpha: f64,
    pub n_elements: usize,
    pub dt: f64,
    /// Sum of the per-step dissipation `2 dt v_mid^T D v_mid`.
    pub dissipated: f64,
    /// State at `t_final`.
    pub final_state: State,
}

impl EnergyTrace {
    pub fn initial_energy(&self) -> f64 {
        self.samples.first().map(|s| s.energy).unwrap_or(0.0)
    }

    /// Largest increase between consecutive samples.
    pub fn max_increase(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| w[1].energy - w[0].energy)
            .fold(0.0, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_csv(path, &["t", "energy"], self.samples.iter().map(|s| (s.t, s.energy)))
    }
}

/// Step from `u0` to `t_final`, recording the energy every `sample_every`
/// steps (and at `t = 0`).
pub fn simulate(
    matrices: &SystemMatrices,
    u0: &State,
    t_final: f64,
    dt: f64,
    sample_every: usize,
) -> Result<EnergyTrace> {
    if !(t_final > 0.0) || !(dt > 0.0) {
        return Err(Error::invalid(format!(
            "t_final and dt must be positive (got {t_final}, {dt})"
        )));
    }
    if sample_every == 0 {
        return Err(Error::invalid("sample_every must be positive"));
    }
    let steps = (t_final / dt).round() as usize;
    if steps == 0 {
        return Err(Error::invalid("t_final is shorter than one time step"));
    }
    let stepper = MidpointStepper::new(matrices, dt)?;
    let mut state = u0.clone();
    let mut samples = Vec::with_capacity(steps / sample_every + 2);
    samples.push(EnergySample {
        t: 0.0,
        energy: energy(matrices, &state)?,
    });
    let mut dissipated = 0.0;
    for k in 1..=steps {
        let out = stepper.step(&state)?;
        dissipated += out.dissipated;
        state = out.state;
        if k % sample_every == 0 || k == steps {
            samples.push(EnergySample {
                t: k as f64 * dt,
                energy: energy(matrices, &state)?,
            });
        }
    }
    // The final step may also land on a sampling multiple; drop a duplicate.
    samples.dedup_by(|a, b| a.t == b.t);
    Ok(EnergyTrace {
        samples,
        alpha: matrices.alpha(),
        n_elements: matrices.n_elements(),
        dt,
        dissipated,
        final_state: state,
    })
}

/// Least-squares slope of `log E` against `log t` over `[t_lo, t_hi]`.
pub fn fit_decay_exponent(trace: &EnergyTrace, t_lo: f64, t_hi: f64) -> Result<PowerLawFit> {
    if !(t_lo > 0.0 && t_hi > t_lo) {
        return Err(Error::invalid(format!("bad fit window [{t_lo}, {t_hi}]")));
    }
    let peak = trace.samples.iter().map(|s| s.energy).fold(0.0, f64::max);
    let floor = ROUNDOFF_FLOOR * peak;
    let window: Vec<&EnergySample> = trace
        .samples
        .iter()
        .filter(|s| s.t >= t_lo && s.t <= t_hi)
        .collect();
    if window.len() < MIN_FIT_SAMPLES {
        return Err(Error::invalid(format!(
            "fit window [{t_lo}, {t_hi}] holds {} samples, need {MIN_FIT_SAMPLES}",
            window.len()
        )));
    }
    if let Some(s) = window.iter().find(|s| !(s.energy > floor)) {
        return Err(Error::invalid(format!(
            "energy {:e} at t={} is at the round-off floor",
            s.energy, s.t
        )));
    }
    let ts: Vec<f64> = window.iter().map(|s| s.t).collect();
    let es: Vec<f64> = window.iter().map(|s| s.energy).collect();
    power_law_fit(&ts, &es)
}

/// Upper end of the decay-fit window: the explicit value if given, else
/// `0.5 / |abscissa|` when a spectral abscissa is known, capped by `t_final`.
pub fn default_t_hi(t_final: f64, explicit: Option<f64>, abscissa: Option<f64>) -> f64 {
    if let Some(t) = explicit {
        return t.min(t_final);
    }
    match abscissa {
        Some(a) if a != 0.0 => (0.5 / a.abs()).min(t_final),
        _ => t_final,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assemble, build_mesh, energy_inner};
    use crate::model::DampingProfile;
    use approx::assert_abs_diff_eq;

    fn system(n: usize, alpha: f64) -> (Mesh, SystemMatrices) {
        let mesh = build_mesh(n, 1.0).unwrap();
        let m = assemble(&mesh, &DampingProfile::new(alpha).unwrap());
        (mesh, m)
    }

    #[test]
    fn sine_interpolation_values() {
        let (mesh, m) = system(4, 0.5);
        let s = make_initial_data(&mesh, &m, InitialKind::SineDisplacement).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(s.u[0], r, epsilon = 1e-15);
        assert_abs_diff_eq!(s.u[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.u[2], r, epsilon = 1e-15);
        assert!(s.v.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bump_velocity_energy_is_kinetic() {
        let (mesh, m) = system(16, 0.5);
        let s = make_initial_data(&mesh, &m, InitialKind::BumpVelocity).unwrap();
        assert!(s.u.iter().all(|&u| u == 0.0));
        assert_abs_diff_eq!(energy(&m, &s).unwrap(), m.mass.quad_form(&s.v), epsilon = 1e-15);
    }

    #[test]
    fn graph_normalized_has_unit_graph_norm() {
        let (mesh, m) = system(64, 0.3);
        let s = make_initial_data(&mesh, &m, InitialKind::GraphNormalized).unwrap();
        let au = apply_generator(&m, &s).unwrap();
        let total = energy(&m, &s).unwrap() + energy(&m, &au).unwrap();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn undamped_step_conserves_energy() {
        let (mesh, m) = system(32, 0.5);
        let m = m.undamped();
        let s = make_initial_data(&mesh, &m, InitialKind::BumpVelocity).unwrap();
        let e0 = energy(&m, &s).unwrap();
        let s1 = step(&m, &s, 0.01).unwrap();
        assert_abs_diff_eq!(energy(&m, &s1).unwrap() / e0, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_state_stays_zero() {
        let (_, m) = system(8, 0.5);
        let s = step(&m, &State::zeros(7), 0.1).unwrap();
        assert!(s.u.iter().chain(&s.v).all(|&x| x == 0.0));
        assert!(step(&m, &State::zeros(7), 0.0).is_err());
        assert!(step(&m, &State::zeros(7), -0.1).is_err());
    }

    #[test]
    fn per_step_energy_identity() {
        let (mesh, m) = system(32, 0.25);
        let s = make_initial_data(&mesh, &m, InitialKind::SineDisplacement).unwrap();
        let stepper = MidpointStepper::new(&m, 0.05).unwrap();
        let mut state = s;
        for _ in 0..20 {
            let e0 = energy(&m, &state).unwrap();
            let out = stepper.step(&state).unwrap();
            let e1 = energy(&m, &out.state).unwrap();
            assert!(out.dissipated >= 0.0);
            assert_abs_diff_eq!(e0 - e1, out.dissipated, epsilon = 1e-12 * e0);
            state = out.state;
        }
    }

    #[test]
    fn undamped_trace_constant_over_many_steps() {
        let (mesh, m) = system(32, 0.5);
        let m = m.undamped();
        let s = make_initial_data(&mesh, &m, InitialKind::SineDisplacement).unwrap();
        let trace = simulate(&m, &s, 10.0, 1e-3, 100).unwrap();
        assert_eq!(trace.samples.len(), 101);
        let e0 = trace.initial_energy();
        for smp in &trace.samples {
            assert!((smp.energy - e0).abs() <= 1e-10 * e0);
        }
    }

    #[test]
    fn damped_trace_strictly_decreasing() {
        let (mesh, m) = system(64, 0.0);
        let s = make_initial_data(&mesh, &m, InitialKind::GraphNormalized).unwrap();
        let trace = simulate(&m, &s, 5.0, 1e-2, 10).unwrap();
        assert!(trace.samples.windows(2).all(|w| w[1].energy < w[0].energy));
        assert!(trace.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn undamped_time_reversibility() {
        let (mesh, m) = system(32, 0.5);
        let m = m.undamped();
        let s = make_initial_data(&mesh, &m, InitialKind::SineDisplacement).unwrap();
        let fwd = MidpointStepper::new(&m, 0.01).unwrap();
        let bwd = MidpointStepper::new(&m, -0.01).unwrap();
        let mut state = s.clone();
        for _ in 0..50 {
            state = fwd.step(&state).unwrap().state;
        }
        for _ in 0..50 {
            state = bwd.step(&state).unwrap().state;
        }
        let diff = State {
            u: state.u.iter().zip(&s.u).map(|(a, b)| a - b).collect(),
            v: state.v.iter().zip(&s.v).map(|(a, b)| a - b).collect(),
        };
        assert!(energy_inner(&m, &diff, &diff).unwrap().sqrt() <= 1e-10);
    }

    fn synthetic(f: impl Fn(f64) -> f64) -> EnergyTrace {
        let samples = (1..=200)
            .map(|i| {
                let t = i as f64;
                EnergySample { t, energy: f(t) }
            })
            .collect();
        EnergyTrace {
            samples,
            alpha: 0.0,
            n_elements: 2,
            dt: 1.0,
            dissipated: 0.0,
            final_state: State::zeros(1),
        }
    }

    #[test]
    fn fit_exact_power_law() {
        let fit = fit_decay_exponent(&synthetic(|t| t.powi(-4)), 10.0, 100.0).unwrap();
        assert_abs_diff_eq!(fit.slope, -4.0, epsilon = 1e-8);
        let fit = fit_decay_exponent(&synthetic(|_| 2.5), 10.0, 100.0).unwrap();
        assert_abs_diff_eq!(fit.slope, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn fit_rejects_small_window_and_floor() {
        let trace = synthetic(|t| t.powi(-4));
        assert!(fit_decay_exponent(&trace, 10.0, 20.0).is_err());
        assert!(fit_decay_exponent(&trace, 20.0, 10.0).is_err());
        let trace = synthetic(|t| if t > 50.0 { 1e-40 } else { 1.0 });
        assert!(fit_decay_exponent(&trace, 10.0, 100.0).is_err());
    }

    #[test]
    fn t_hi_policy() {
        assert_eq!(default_t_hi(100.0, None, Some(-0.01)), 50.0);
        assert_eq!(default_t_hi(100.0, None, Some(-1e-6)), 100.0);
        assert_eq!(default_t_hi(100.0, Some(30.0), Some(-1e-6)), 30.0);
        assert_eq!(default_t_hi(100.0, None, None), 100.0);
    }
}
