//! Weighted Hardy inequality checks and the rate comparison table.
//!
//! The inequality under test is
//! `int_0^1 x^beta |xi|^2 <= C int_0^1 x^alpha |xi'|^2` for `xi(1) = 0`,
//! `beta > -1`, `alpha < 1`. Test functions are piecewise linear, and both
//! integrals are evaluated in closed form element by element.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::predict_rates;

/// Continuous piecewise-linear function on `[x_0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    /// Nodes must increase strictly from `x_0 >= 0` to `1`, and the function
    /// must vanish at `1`.
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.len() != values.len() {
            return Err(Error::invalid("need at least two nodes and one value per node"));
        }
        if !(nodes[0] >= 0.0) || *nodes.last().unwrap() != 1.0 {
            return Err(Error::invalid("nodes must span [x0, 1] with x0 >= 0"));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("nodes must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values must be finite"));
        }
        if *values.last().unwrap() != 0.0 {
            return Err(Error::invalid("test function must vanish at x = 1"));
        }
        Ok(Self { nodes, values })
    }

    /// Interpolant of `f` on the uniform mesh of `[0, 1]` with `n` elements.
    pub fn interpolate(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let nodes: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let mut values: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
        values[n] = 0.0;
        Self::new(nodes, values)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// `int_a^b x^p dx` for `0 <= a < b`; infinite when it diverges.
fn power_integral(p: f64, a: f64, b: f64) -> f64 {
    let q = p + 1.0;
    if a == 0.0 {
        return if q > 0.0 { b.powf(q) / q } else { f64::INFINITY };
    }
    let log_ratio = (b / a).ln();
    if q == 0.0 {
        return log_ratio;
    }
    // b^q - a^q = a^q expm1(q ln(b/a)), accurate as q -> 0.
    a.powf(q) * (q * log_ratio).exp_m1() / q
}

/// `int x^beta |xi|^2` and `int x^alpha |xi'|^2` over `[max(x_0, lower), 1]`.
fn weighted_integrals(xi: &PiecewiseLinear, alpha: f64, beta: f64, lower: f64) -> (f64, f64) {
    let mut left = 0.0;
    let mut right = 0.0;
    for e in 0..xi.nodes.len() - 1 {
        let (xa, xb) = (xi.nodes[e], xi.nodes[e + 1]);
        if xb <= lower {
            continue;
        }
        let (fa, fb) = (xi.values[e], xi.values[e + 1]);
        let slope = (fb - fa) / (xb - xa);
        let a = xa.max(lower);
        // xi = c0 + c1 x on the element.
        let c0 = fa - slope * xa;
        let c1 = slope;
        if c0 != 0.0 || c1 != 0.0 {
            left += c0 * c0 * power_integral(beta, a, xb)
                + 2.0 * c0 * c1 * power_integral(beta + 1.0, a, xb)
                + c1 * c1 * power_integral(beta + 2.0, a, xb);
        }
        if slope != 0.0 {
            right += slope * slope * power_integral(alpha, a, xb);
        }
    }
    (left, right)
}

fn ratio_of(left: f64, right: f64) -> f64 {
    if right == 0.0 {
        return if left == 0.0 { 0.0 } else { f64::INFINITY };
    }
    if right.is_infinite() {
        return 0.0;
    }
    left / right
}

/// `(int_0^1 x^beta |xi|^2) / (int_0^1 x^alpha |xi'|^2)`, zero for `xi = 0`.
pub fn hardy_ratio(xi: &PiecewiseLinear, alpha: f64, beta: f64) -> Result<f64> {
    check_admissible(alpha, beta)?;
    if xi.is_zero() {
        return Ok(0.0);
    }
    let (left, right) = weighted_integrals(xi, alpha, beta, 0.0);
    Ok(ratio_of(left, right))
}

/// The same ratio with both integrals taken over `[lower, 1]`, for any real
/// exponents. Used to probe the excluded case `beta = -1`.
pub fn truncated_ratio(xi: &PiecewiseLinear, alpha: f64, beta: f64, lower: f64) -> Result<f64> {
    if !(lower > 0.0 && lower < 1.0) {
        return Err(Error::invalid(format!("lower limit must lie in (0, 1) (got {lower})")));
    }
    let (left, right) = weighted_integrals(xi, alpha, beta, lower);
    Ok(ratio_of(left, right))
}

fn check_admissible(alpha: f64, beta: f64) -> Result<()> {
    if !(beta > -1.0) {
        return Err(Error::invalid(format!("beta must be > -1 (got {beta})")));
    }
    if !(alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must be < 1 (got {alpha})")));
    }
    Ok(())
}

/// Ratios `int_eps^1 x^{-1} (1-x)^2 / int_eps^1 1` for each `eps`, which grow
/// like `-ln eps`.
pub fn beta_minus_one_divergence(lowers: &[f64]) -> Result<Vec<(f64, f64)>> {
    let xi = PiecewiseLinear::new(vec![0.0, 1.0], vec![1.0, 0.0])?;
    lowers
        .iter()
        .map(|&eps| Ok((eps, truncated_ratio(&xi, 0.0, -1.0, eps)?)))
        .collect()
}

/// Hardy sweep result for one `(alpha, beta)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HardyCase {
    pub alpha: f64,
    pub beta: f64,
    /// Largest ratio found on the fine mesh.
    pub ratio: f64,
    /// Largest ratio for the same functions on the coarse mesh.
    pub ratio_coarse: f64,
    pub n_samples: usize,
}

impl HardyCase {
    pub fn growth(&self) -> f64 {
        self.ratio / self.ratio_coarse
    }
}

pub const HARDY_COARSE: usize = 64;
pub const HARDY_FINE: usize = 512;
pub const DEFAULT_HARDY_ALPHAS: [f64; 4] = [-1.0, 0.0, 0.5, 0.9];
pub const DEFAULT_HARDY_BETAS: [f64; 4] = [-0.5, 0.0, 1.0, 2.0];
pub const DEFAULT_HARDY_SAMPLES: usize = 200;

/// Random smooth profile with `xi(1) = 0` and `x^{alpha/2} xi'` square
/// integrable: `sum c_i (1 - x^{g_i}) + sum d_k sin(k pi (1 - x) / 2)` with
/// every `g_i > (1 - alpha) / 2`.
#[derive(Debug, Clone)]
struct RandomProfile {
    powers: Vec<(f64, f64)>,
    sines: Vec<f64>,
}

impl RandomProfile {
    fn draw(rng: &mut ChaCha8Rng, alpha: f64) -> Self {
        let g_min = (1.0 - alpha) / 2.0 + 0.05;
        let powers = (0..3)
            .map(|_| {
                let c: f64 = StandardNormal.sample(rng);
                (c, g_min + rng.random::<f64>() * 2.0)
            })
            .collect();
        let sines = (1..=4)
            .map(|k| {
                let d: f64 = StandardNormal.sample(rng);
                d / (k * k) as f64
            })
            .collect();
        Self { powers, sines }
    }

    fn eval(&self, x: f64) -> f64 {
        let p: f64 = self.powers.iter().map(|&(c, g)| c * (1.0 - x.powf(g))).sum();
        let s: f64 = self
            .sines
            .iter()
            .enumerate()
            .map(|(k, d)| d * ((k + 1) as f64 * std::f64::consts::PI * (1.0 - x) / 2.0).sin())
            .sum();
        p + s
    }
}

/// Nodal interpolant on `n` uniform elements. For `alpha <= -1` the first
/// element is flattened, since `int_0 x^alpha` diverges there.
fn sampled(n: usize, alpha: f64, f: impl Fn(f64) -> f64) -> Result<PiecewiseLinear> {
    let mut xi = PiecewiseLinear::interpolate(n, f)?;
    if alpha <= -1.0 {
        xi.values[0] = xi.values[1];
    }
    Ok(xi)
}

fn sweep_pair(alpha: f64, beta: f64, n_random: usize, seed: u64, stream: u64) -> Result<HardyCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut coarse = 0.0_f64;
    let mut fine = 0.0_f64;
    let mut record = |f: &dyn Fn(f64) -> f64| -> Result<()> {
        coarse = coarse.max(hardy_ratio(&sampled(HARDY_COARSE, alpha, f)?, alpha, beta)?);
        fine = fine.max(hardy_ratio(&sampled(HARDY_FINE, alpha, f)?, alpha, beta)?);
        Ok(())
    };
    record(&|x| 1.0 - x)?;
    for _ in 1..n_random {
        let profile = RandomProfile::draw(&mut rng, alpha);
        record(&|x| profile.eval(x))?;
    }
    Ok(HardyCase {
        alpha,
        beta,
        ratio: fine,
        ratio_coarse: coarse,
        n_samples: n_random,
    })
}

/// Largest ratio over `n_random` test functions per `(alpha, beta)` pair, on
/// meshes of 64 and 512 elements. The first test function is `1 - x`; the
/// rest are seeded random profiles (one independent stream per pair).
pub fn hardy_sweep(alphas: &[f64], betas: &[f64], n_random: usize, seed: u64) -> Result<Vec<HardyCase>> {
    let pairs: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect();
    for &(a, b) in &pairs {
        check_admissible(a, b)?;
    }
    if n_random == 0 {
        return Ok(Vec::new());
    }
    pairs
        .par_iter()
        .enumerate()
        .map(|(i, &(a, b))| sweep_pair(a, b, n_random, seed, i as u64))
        .collect()
}

pub fn write_hardy_csv(cases: &[HardyCase], path: &Path) -> Result<()> {
    crate::io::write_csv(
        path,
        &["alpha", "beta", "ratio", "ratio_coarse", "n_samples"],
        cases
            .iter()
            .map(|c| (c.alpha, c.beta, c.ratio, c.ratio_coarse, c.n_samples)),
    )
}

/// Measured exponents for one `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub alpha: f64,
    pub theta_fit: Option<f64>,
    pub slope_energy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub alpha: f64,
    pub decay_order: f64,
    pub prior_order: f64,
    pub theta_fit: Option<f64>,
    pub slope_energy: Option<f64>,
}

/// One row per `alpha` with the predicted orders, plus any measurement whose
/// `alpha` matches exactly.
pub fn build_comparison_table(alphas: &[f64], fits: &[Measurement]) -> Result<Vec<ComparisonRow>> {
    alphas
        .iter()
        .map(|&alpha| {
            let rates = predict_rates(alpha)?;
            let hit = fits.iter().find(|m| m.alpha == alpha);
            Ok(ComparisonRow {
                alpha,
                decay_order: rates.decay_order,
                prior_order: rates.prior_order,
                theta_fit: hit.and_then(|m| m.theta_fit),
                slope_energy: hit.and_then(|m| m.slope_energy),
            })
        })
        .collect()
}

pub fn table_csv(rows: &[ComparisonRow]) -> Result<Vec<u8>> {
    crate::io::csv_bytes(
        &["alpha", "decay_order", "prior_order", "theta_fit", "slope_energy"],
        rows.iter()
            .map(|r| (r.alpha, r.decay_order, r.prior_order, r.theta_fit, r.slope_energy)),
    )
}

fn rate_text(row: &ComparisonRow) -> String {
    if row.alpha == 0.0 {
        "optimal polynomial t^-2".to_string()
    } else {
        format!("polynomial t^-{}", trim_float(row.decay_order))
    }
}

fn trim_float(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn optional(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".to_string())
}

/// Aligned plain-text rendering: alpha, damping, decay rate, then the prior
/// order and any measured exponents.
pub fn table_text(rows: &[ComparisonRow]) -> String {
    let header = [
        "alpha",
        "damping",
        "decay rate",
        "decay order",
        "prior order",
        "theta fit",
        "energy slope",
    ];
    let body: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                trim_float(r.alpha),
                "x^alpha".to_string(),
                rate_text(r),
                trim_float(r.decay_order),
                trim_float(r.prior_order),
                optional(r.theta_fit),
                optional(r.slope_energy),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let rule: String = widths
        .iter()
        .map(|w| "-".repeat(w + 2))
        .collect::<Vec<_>>()
        .join("+");
    let line = |cells: &[&str]| -> String {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!(" {c:<w$} "))
            .collect::<Vec<_>>()
            .join("|")
    };
    let mut out = String::new();
    let _ = writeln!(out, "+{rule}+");
    let _ = writeln!(out, "|{}|", line(&header));
    let _ = writeln!(out, "+{rule}+");
    for row in &body {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        let _ = writeln!(out, "|{}|", line(&cells));
    }
    let _ = writeln!(out, "+{rule}+");
    out
}
