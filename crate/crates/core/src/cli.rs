//! Command-line front end for the `kvdecay` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use crate::analysis::{
    build_comparison_table, hardy_sweep, table_csv, table_text, write_hardy_csv, Measurement,
    DEFAULT_HARDY_ALPHAS, DEFAULT_HARDY_BETAS, DEFAULT_HARDY_SAMPLES,
};
use crate::discretization::{assemble_with, build_mesh, dump_matrices, MassScheme, Mesh, SystemMatrices};
use crate::error::{Error, Result};
use crate::evolution::{default_t_hi, fit_decay_exponent, make_initial_data, simulate, InitialKind};
use crate::io::write_atomic;
use crate::model::{predict_rates, validate_config, ConfigOverrides, RunConfig};
use crate::resolvent::{envelope_scan, fit_theta, scan_with, FitReport, Sampling, ScanOptions, SigmaMinOptions, Spacing};
use crate::spectral::{compute_spectrum_with, trace_branches, SpectrumMode, SpectrumOptions, RESIDUAL_TOL};
use crate::verify::run_acceptance;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_COMPUTATION: i32 = 2;
pub const EXIT_ACCEPTANCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "kvdecay", version, about = "Kelvin-Voigt damped string: spectra, resolvent growth and energy decay")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Time-step the damped string and record the energy.
    Simulate(RunArgs),
    /// Eigenvalues of the discrete generator.
    Spectrum(SpectrumArgs),
    /// Resolvent norm along the imaginary axis and its growth exponent.
    Resolvent(RunArgs),
    /// Weighted Hardy inequality sweep.
    Hardy(HardyArgs),
    /// Predicted (and optionally measured) decay orders.
    Table(TableArgs),
    /// Run the acceptance criteria.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON file with RunConfig keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of elements.
    #[arg(long = "n")]
    n_elements: Option<usize>,
    #[arg(long)]
    grading: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    omega_min: Option<f64>,
    #[arg(long)]
    omega_max: Option<f64>,
    #[arg(long = "points")]
    omega_points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// consistent | lumped | blended
    #[arg(long)]
    mass: Option<MassScheme>,
    #[arg(long)]
    cap_factor: Option<f64>,
    /// log | linear
    #[arg(long)]
    spacing: Option<Spacing>,
    /// envelope | grid
    #[arg(long)]
    sampling: Option<Sampling>,
    #[arg(long)]
    resolution: Option<f64>,
    /// sine_displacement | bump_velocity | graph_normalized
    #[arg(long)]
    initial: Option<InitialKind>,
    #[arg(long)]
    sample_every: Option<usize>,
    #[arg(long)]
    t_lo: Option<f64>,
    #[arg(long)]
    t_hi: Option<f64>,
    /// Also write mass.txt, stiffness.txt and damping.txt.
    #[arg(long)]
    dump_matrices: bool,
}

impl RunArgs {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            alpha: self.alpha,
            n_elements: self.n_elements,
            grading: self.grading,
            dt: self.dt,
            t_final: self.t_final,
            omega_min: self.omega_min,
            omega_max: self.omega_max,
            omega_points: self.omega_points,
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            mass: self.mass,
            cap_factor: self.cap_factor,
            spacing: self.spacing,
            sampling: self.sampling,
            resolution: self.resolution,
            initial: self.initial,
            sample_every: self.sample_every,
            t_lo: self.t_lo,
            t_hi: self.t_hi,
        }
    }
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Use shift-invert Arnoldi around these imaginary-axis points
    /// instead of the dense solve.
    #[arg(long, value_delimiter = ',')]
    shifts: Option<Vec<f64>>,
    #[arg(long, default_value_t = 6)]
    per_shift: usize,
    /// Also trace eigenvalue branches across these alphas (branches.csv).
    #[arg(long, value_delimiter = ',')]
    branch_alphas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10)]
    k_max: usize,
}

#[derive(Debug, Args)]
struct HardyArgs {
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_HARDY_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
}

#[derive(Debug, Args)]
struct TableArgs {
    #[arg(long, value_delimiter = ',', default_value = "0,0.5")]
    alphas: Vec<f64>,
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
    /// Fill the measured columns by running a resolvent scan and a
    /// simulation for every alpha (on `--n` elements).
    #[arg(long)]
    measure: bool,
    #[arg(long = "n", default_value_t = 1024)]
    n_elements: usize,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Only the small-n oracle, Hardy, monotonicity and table checks.
    #[arg(long)]
    quick: bool,
}

/// A parsed and validated invocation.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Simulate {
        config: RunConfig,
        dump_matrices: bool,
    },
    Spectrum {
        config: RunConfig,
        dump_matrices: bool,
        mode: SpectrumMode,
        branches: Option<(Vec<f64>, usize)>,
    },
    Resolvent {
        config: RunConfig,
        dump_matrices: bool,
    },
    Hardy {
        alphas: Vec<f64>,
        betas: Vec<f64>,
        samples: usize,
        seed: u64,
        output_dir: PathBuf,
    },
    Table {
        alphas: Vec<f64>,
        output_dir: PathBuf,
        measure: Option<usize>,
    },
    Verify {
        quick: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub command: Command,
    pub threads: Option<usize>,
}

/// Parse failure: the message to print and the exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError {
    pub message: String,
    pub status: i32,
}

impl UsageError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            status: EXIT_USAGE,
        }
    }
}

fn resolve_config(args: &RunArgs) -> std::result::Result<RunConfig, UsageError> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| UsageError::usage(format!("cannot read config {}: {e}", path.display())))?;
            ConfigOverrides::from_json(&text)
                .map_err(|e| UsageError::usage(format!("bad config {}: {e}", path.display())))?
        }
        None => ConfigOverrides::default(),
    };
    let merged = file.merged_with(args.overrides());
    validate_config(&merged, &["alpha", "n_elements"]).map_err(|errors| {
        UsageError::usage(errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))
    })
}

fn check_alphas(alphas: &[f64]) -> std::result::Result<(), UsageError> {
    match alphas.iter().find(|a| !(a.is_finite() && (0.0..1.0).contains(*a))) {
        Some(a) => Err(UsageError::usage(format!("alpha out of [0,1) (got {a})"))),
        None => Ok(()),
    }
}

/// Parse `argv` (including the program name) into a validated invocation.
pub fn parse_args<I, T>(argv: I) -> std::result::Result<Invocation, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| {
        use clap::error::ErrorKind;
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => UsageError {
                message: e.to_string(),
                status: EXIT_OK,
            },
            _ => UsageError::usage(e.to_string().lines().next().unwrap_or("usage error").to_string()),
        }
    })?;
    if cli.threads == Some(0) {
        return Err(UsageError::usage("--threads must be positive"));
    }
    let command = match cli.command {
        Sub::Simulate(args) => Command::Simulate {
            config: resolve_config(&args)?,
            dump_matrices: args.dump_matrices,
        },
        Sub::Resolvent(args) => Command::Resolvent {
            config: resolve_config(&args)?,
            dump_matrices: args.dump_matrices,
        },
        Sub::Spectrum(args) => {
            let config = resolve_config(&args.run)?;
            let mode = match &args.shifts {
                Some(shifts) => {
                    if args.per_shift == 0 {
                        return Err(UsageError::usage("--per-shift must be positive"));
                    }
                    SpectrumMode::ShiftInvert {
                        shifts: shifts.iter().map(|&w| Complex64::new(0.0, w)).collect(),
                        per_shift: args.per_shift,
                    }
                }
                None => SpectrumMode::Dense,
            };
            let branches = match args.branch_alphas {
                Some(alphas) => {
                    check_alphas(&alphas)?;
                    Some((alphas, args.k_max))
                }
                None => None,
            };
            Command::Spectrum {
                config,
                dump_matrices: args.run.dump_matrices,
                mode,
                branches,
            }
        }
        Sub::Hardy(args) => {
            let alphas = args.alphas.unwrap_or_else(|| DEFAULT_HARDY_ALPHAS.to_vec());
            let betas = args.betas.unwrap_or_else(|| DEFAULT_HARDY_BETAS.to_vec());
            if let Some(a) = alphas.iter().find(|a| !(**a < 1.0)) {
                return Err(UsageError::usage(format!("Hardy alpha must be < 1 (got {a})")));
            }
            if let Some(b) = betas.iter().find(|b| !(**b > -1.0)) {
                return Err(UsageError::usage(format!("Hardy beta must be > -1 (got {b})")));
            }
            Command::Hardy {
                alphas,
                betas,
                samples: args.samples,
                seed: args.seed,
                output_dir: args.output_dir,
            }
        }
        Sub::Table(args) => {
            check_alphas(&args.alphas)?;
            if args.measure && (args.n_elements < 2 || args.n_elements % 2 != 0) {
                return Err(UsageError::usage(format!(
                    "n_elements must be even and at least 2 (got {})",
                    args.n_elements
                )));
            }
            Command::Table {
                alphas: args.alphas,
                output_dir: args.output_dir,
                measure: args.measure.then_some(args.n_elements),
            }
        }
        Sub::Verify(args) => Command::Verify { quick: args.quick },
    };
    Ok(Invocation {
        command,
        threads: cli.threads,
    })
}

fn build_system(config: &RunConfig) -> Result<(Mesh, SystemMatrices)> {
    let mesh = build_mesh(config.n_elements, config.grading)?;
    let m = assemble_with(&mesh, &config.profile()?, config.mass);
    Ok((mesh, m))
}

fn prepare(config: &RunConfig, dump: bool) -> Result<(Mesh, SystemMatrices)> {
    let (mesh, m) = build_system(config)?;
    if dump {
        dump_matrices(&m, &config.output_dir)?;
    }
    Ok((mesh, m))
}

fn scan_options(config: &RunConfig) -> ScanOptions {
    ScanOptions {
        cap_factor: config.cap_factor,
        sigma: SigmaMinOptions {
            seed: config.seed,
            ..SigmaMinOptions::default()
        },
    }
}

fn run_resolvent(config: &RunConfig, dump: bool) -> Result<()> {
    let (_, m) = prepare(config, dump)?;
    let opts = scan_options(config);
    let scan = match config.sampling {
        Sampling::Envelope => envelope_scan(&m, config.omega_min, config.omega_max, config.resolution, &opts)?,
        Sampling::Grid => scan_with(
            &m,
            config.omega_min,
            config.omega_max,
            config.omega_points,
            config.spacing,
            &opts,
        )?,
    };
    scan.write_csv(&config.output_dir.join("resolvent.csv"))?;
    match fit_theta(&scan, config.omega_min, config.omega_max) {
        Ok(fit) => {
            let predicted = predict_rates(config.alpha)?.theta;
            FitReport::new(&scan, &fit, predicted).write_json(&config.output_dir.join("fit.json"))?;
            println!(
                "theta_fit={:.6} theta_predicted={predicted:.6} r_lower={:.6e} samples={}",
                fit.slope, fit.r_lower, fit.n_samples
            );
        }
        Err(e) => eprintln!("warning: no exponent fit: {e}"),
    }
    Ok(())
}

fn run_simulate(config: &RunConfig, dump: bool) -> Result<()> {
    let (mesh, m) = prepare(config, dump)?;
    let u0 = make_initial_data(&mesh, &m, config.initial)?;
    let trace = simulate(&m, &u0, config.t_final, config.dt, config.sample_every)?;
    trace.write_csv(&config.output_dir.join("energy.csv"))?;
    let t_hi = default_t_hi(config.t_final, config.t_hi, None);
    match fit_decay_exponent(&trace, config.t_lo, t_hi) {
        Ok(fit) => println!("energy slope={:.6} over [{}, {t_hi}]", fit.slope, config.t_lo),
        Err(e) => eprintln!("warning: no decay fit: {e}"),
    }
    Ok(())
}

fn run_spectrum(
    config: &RunConfig,
    dump: bool,
    mode: &SpectrumMode,
    branches: &Option<(Vec<f64>, usize)>,
) -> Result<()> {
    let (_, m) = prepare(config, dump)?;
    let opts = SpectrumOptions {
        mode: mode.clone(),
        residual_tol: RESIDUAL_TOL,
    };
    let spectrum = compute_spectrum_with(&m, &opts)?;
    spectrum.write_csv(&config.output_dir.join("spectrum.csv"))?;
    println!(
        "eigenvalues={} abscissa={:.6e} axis_gap={:.6e} max_residual={:.2e}",
        spectrum.eigenvalues.len(),
        spectrum.abscissa,
        spectrum.axis_gap,
        spectrum.max_residual
    );
    if let Some((alphas, k_max)) = branches {
        trace_branches(alphas, config.n_elements, *k_max)?.write_csv(&config.output_dir.join("branches.csv"))?;
    }
    Ok(())
}

/// Write `table.csv` and `table.txt` into `dir`.
pub fn write_table(alphas: &[f64], fits: &[Measurement], dir: &Path) -> Result<()> {
    let rows = build_comparison_table(alphas, fits)?;
    write_atomic(&dir.join("table.csv"), &table_csv(&rows)?)?;
    write_atomic(&dir.join("table.txt"), table_text(&rows).as_bytes())
}

fn measure(alpha: f64, n: usize) -> Result<Measurement> {
    let overrides = ConfigOverrides {
        alpha: Some(alpha),
        n_elements: Some(n),
        ..ConfigOverrides::default()
    };
    let config = validate_config(&overrides, &[]).map_err(|errors| {
        Error::invalid(errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))
    })?;
    let (mesh, m) = build_system(&config)?;
    let scan = envelope_scan(&m, config.omega_min, config.omega_max, config.resolution, &scan_options(&config))?;
    let theta_fit = fit_theta(&scan, config.omega_min, config.omega_max).ok().map(|f| f.slope);
    let u0 = make_initial_data(&mesh, &m, config.initial)?;
    let trace = simulate(&m, &u0, config.t_final, config.dt, config.sample_every)?;
    let slope_energy = fit_decay_exponent(&trace, config.t_lo, config.t_final).ok().map(|f| f.slope);
    Ok(Measurement {
        alpha,
        theta_fit,
        slope_energy,
    })
}

fn execute(command: &Command) -> Result<i32> {
    match command {
        Command::Simulate { config, dump_matrices } => run_simulate(config, *dump_matrices)?,
        Command::Resolvent { config, dump_matrices } => run_resolvent(config, *dump_matrices)?,
        Command::Spectrum {
            config,
            dump_matrices,
            mode,
            branches,
        } => run_spectrum(config, *dump_matrices, mode, branches)?,
        Command::Hardy {
            alphas,
            betas,
            samples,
            seed,
            output_dir,
        } => {
            let cases = hardy_sweep(alphas, betas, *samples, *seed)?;
            write_hardy_csv(&cases, &output_dir.join("hardy.csv"))?;
        }
        Command::Table {
            alphas,
            output_dir,
            measure: n,
        } => {
            let fits = match n {
                Some(n) => alphas.iter().map(|&a| measure(a, *n)).collect::<Result<Vec<_>>>()?,
                None => Vec::new(),
            };
            write_table(alphas, &fits, output_dir)?;
        }
        Command::Verify { quick } => {
            let results = run_acceptance(*quick);
            for r in &results {
                println!("{r}");
            }
            if results.iter().any(|r| !r.passed) {
                return Ok(EXIT_ACCEPTANCE);
            }
        }
    }
    Ok(EXIT_OK)
}

/// Execute an invocation and return the process exit status.
pub fn run(invocation: &Invocation) -> i32 {
    let outcome = match invocation.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&invocation.command)),
            Err(e) => Err(Error::invalid(format!("cannot build thread pool: {e}"))),
        },
        None => execute(&invocation.command),
    };
    match outcome {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_COMPUTATION
        }
    }
}

/// Parse and run; the body of `main`.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match parse_args(argv) {
        Ok(invocation) => run(&invocation),
        Err(e) => {
            if e.status == EXIT_OK {
                print!("{}", e.message);
            } else {
                eprintln!("error: {}", e.message.trim_start_matches("error: "));
            }
            e.status
        }
    }
}
