//! Command-line driver: scenario runs, initial state correction, reversal
//! checks, entropy post-processing, and the Gresho error table.
//!
//! All output files are deterministic functions of (config, seed); wall-clock
//! timestamps go to a separate metadata file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use revsph::bench::{Arrangement, GreshoScenario, leading_edge};
use revsph::checkpoint;
use revsph::config::{ScenarioConfig, ScenarioName};
use revsph::integrate::{self, Arithmetic, RunHooks, Scheme, SimState};
use revsph::isc::{solve_isc, IscProblem};
use revsph::kernel::Kernel;
use revsph::math::Vec2;
use revsph::sphcore::{DiagnosticsRecord, ParticleSystem};
use revsph::thermo;

#[derive(Parser)]
#[command(name = "revsph", version, about = "Reversible weakly compressible SPH in 2D")]
struct Cli {
    /// Size of the worker thread pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write diagnostics, metrics, and checkpoints.
    Run(RunArgs),
    /// Relax a particle arrangement with the initial state correction.
    Isc(IscArgs),
    /// Run forward, reverse velocities, run back, and report the mismatch.
    ReverseCheck(RunArgs),
    /// Post-process checkpoints into an entropy time series.
    AnalyzeEntropy(AnalyzeEntropyArgs),
    /// Sweep the four grid arrangements and three filter modes.
    GreshoTable(GreshoTableArgs),
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum ArithArg {
    Fixpa,
    Flopa,
}

impl From<ArithArg> for Arithmetic {
    fn from(a: ArithArg) -> Arithmetic {
        match a {
            ArithArg::Fixpa => Arithmetic::FixPa,
            ArithArg::Flopa => Arithmetic::FloPa,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum SchemeArg {
    Sym,
    Std,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum OnOff {
    On,
    Off,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Scenario selector override (dam-break | gresho).
    #[arg(long)]
    scenario: Option<String>,
    /// Particle spacing override.
    #[arg(long)]
    dr: Option<f64>,
    /// Arithmetic mode override.
    #[arg(long)]
    arith: Option<ArithArg>,
    /// Integration scheme override.
    #[arg(long)]
    scheme: Option<SchemeArg>,
    /// Reverse all velocities at this time.
    #[arg(long)]
    reverse_at: Option<f64>,
    /// Allow reversal in irreversible configurations.
    #[arg(long)]
    force: bool,
    /// End time override.
    #[arg(long)]
    t_end: Option<f64>,
    /// Apply the initial state correction to the arrangement.
    #[arg(long)]
    isc: Option<OnOff>,
    /// ISC density tolerance (with --isc on).
    #[arg(long)]
    isc_tol: Option<f64>,
    /// Seed for ISC noise and any other randomness.
    #[arg(long)]
    isc_seed: Option<u64>,
    /// Checkpoint cadence in steps.
    #[arg(long)]
    snapshot_every: Option<u64>,
}

#[derive(Args)]
struct IscArgs {
    /// Particles per side of the square test grid.
    #[arg(long, default_value_t = 30)]
    n: usize,
    /// Grid spacing.
    #[arg(long, default_value_t = 0.01)]
    dr: f64,
    /// Initial random displacement bound (default dr/10).
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Convergence tolerance on the relative density error.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Kernel family: wendland2 or cubic-spline.
    #[arg(long, default_value = "wendland2")]
    kernel: String,
}

#[derive(Args)]
struct AnalyzeEntropyArgs {
    /// Directory containing state_*.ckp checkpoints.
    #[arg(long)]
    snapshots: PathBuf,
    #[arg(long, default_value = "entropy.csv")]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    bins: usize,
}

#[derive(Args)]
struct GreshoTableArgs {
    #[arg(long, default_value_t = 0.01)]
    dr: f64,
    #[arg(long, default_value = "gresho_table.csv")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not configure thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Run(args) => cmd_run(args, false),
        Command::ReverseCheck(args) => cmd_run(args, true),
        Command::Isc(args) => cmd_isc(args),
        Command::AnalyzeEntropy(args) => cmd_analyze_entropy(args),
        Command::GreshoTable(args) => cmd_gresho_table(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn load_config(args: &RunArgs) -> Result<ScenarioConfig, Box<dyn std::error::Error>> {
    let mut config = match &args.config {
        Some(path) => ScenarioConfig::parse(&std::fs::read_to_string(path)?)?,
        None => ScenarioConfig::default(),
    };
    if let Some(name) = &args.scenario {
        config.scenario.name = match name.as_str() {
            "dam-break" | "dambreak" | "dam_break" => ScenarioName::DamBreak,
            "gresho" => ScenarioName::Gresho,
            other => return Err(format!("unknown scenario '{other}'").into()),
        };
    }
    if let Some(dr) = args.dr {
        config.scenario.dr = Some(dr);
    }
    if let Some(a) = args.arith {
        config.integrator.arithmetic = a.into();
    }
    if let Some(s) = args.scheme {
        config.integrator.scheme = match s {
            SchemeArg::Sym => Scheme::Sym,
            SchemeArg::Std => Scheme::Std,
        };
    }
    if let Some(t) = args.reverse_at {
        config.integrator.reverse_at = Some(t);
    }
    if args.force {
        config.integrator.force_irreversible = true;
    }
    if let Some(t) = args.t_end {
        config.integrator.t_end = t;
    }
    if let Some(flag) = args.isc {
        config.grid.apply_isc = flag == OnOff::On;
    }
    if let Some(seed) = args.isc_seed {
        config.scenario.seed = seed;
    }
    if let Some(every) = args.snapshot_every {
        config.output.snapshot_every = Some(every);
    }
    config.validate()?;
    Ok(config)
}

const DIAGNOSTICS_HEADER: &str = "t,kinetic,internal,gravitational,wall,total,momentum_x,momentum_y,angular_momentum,min_density,max_density,dissipated,entropy,fitted_temperature,equilibrium_entropy";

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn diagnostics_row(rec: &DiagnosticsRecord) -> String {
    format!(
        "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{},{}",
        rec.t,
        rec.kinetic,
        rec.internal,
        rec.gravitational,
        rec.wall,
        rec.total,
        rec.momentum.x,
        rec.momentum.y,
        rec.angular_momentum,
        rec.min_density,
        rec.max_density,
        rec.dissipated,
        csv_opt(rec.entropy),
        csv_opt(rec.fitted_temperature),
        csv_opt(rec.equilibrium_entropy),
    )
}

/// Entropy diagnostics of the current fluid velocity ensemble.
fn entropy_fields(ps: &ParticleSystem, bins: usize) -> (Option<f64>, Option<f64>, Option<f64>) {
    let velocities: Vec<Vec2> = ps.fluid_indices().map(|a| ps.velocities[a]).collect();
    let masses: Vec<f64> = ps.fluid_indices().map(|a| ps.masses[a]).collect();
    let temperature = thermo::fit_temperature(&velocities, &masses);
    let v_max = velocities.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    let entropy = if v_max > 0.0 {
        thermo::VelocityHistogram::from_velocities(&velocities, bins, 1.05 * v_max)
            .and_then(|h| h.reduced_entropy())
    } else {
        None
    };
    let kinetic: f64 = velocities
        .iter()
        .zip(&masses)
        .map(|(v, &m)| 0.5 * m * v.norm_squared())
        .sum();
    let mean_mass = if masses.is_empty() {
        0.0
    } else {
        masses.iter().sum::<f64>() / masses.len() as f64
    };
    let s_eq = thermo::equilibrium_entropy_from_energy(kinetic, velocities.len(), mean_mass);
    (entropy, temperature, s_eq)
}

fn cmd_run(args: RunArgs, is_reverse_check: bool) -> CliResult {
    let mut config = load_config(&args)?;
    if is_reverse_check && config.integrator.reverse_at.is_none() {
        config.integrator.reverse_at = Some(0.5 * config.integrator.t_end);
        // Keep reverse_at on the step grid by construction of t_end below.
        config.validate()?;
    }
    let out = &args.out;
    std::fs::create_dir_all(out)?;

    let config_text = config.render();
    std::fs::write(out.join("config.toml"), &config_text)?;
    let hash = checkpoint::config_hash(&config_text);
    std::fs::write(
        out.join("metadata.txt"),
        format!(
            "started_unix_ms = {}\n",
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0)
        ),
    )?;

    let (mut state, physics, cfg) = config.build_state()?;
    let initial = state.clone();
    checkpoint::write_checkpoint(&out.join("initial.ckp"), &state, &hash)?;

    let is_dam_break = config.scenario.name == ScenarioName::DamBreak;
    let column_width = 1.0;
    let gravity = physics.params.gravity;

    let mut diagnostics_csv = String::from(DIAGNOSTICS_HEADER);
    diagnostics_csv.push('\n');
    let mut leading_csv = String::from("t_dimensionless,leading_edge\n");
    let snapshot_dir = out.join("snapshots");
    if config.output.snapshot_every.is_some() {
        std::fs::create_dir_all(&snapshot_dir)?;
    }

    {
        let mut on_diag = |state: &SimState, rec: &DiagnosticsRecord| {
            let mut rec = *rec;
            if is_dam_break {
                let (s, t_fit, s_eq) = entropy_fields(&state.ps, 64);
                rec.entropy = s;
                rec.fitted_temperature = t_fit;
                rec.equilibrium_entropy = s_eq;
                let t_star = rec.t * (gravity / column_width).sqrt();
                let _ = writeln!(
                    leading_csv,
                    "{:?},{:?}",
                    t_star,
                    leading_edge(&state.ps, column_width)
                );
            }
            diagnostics_csv.push_str(&diagnostics_row(&rec));
            diagnostics_csv.push('\n');
        };
        let mut on_snapshot = |state: &SimState| -> Result<(), revsph::SphError> {
            checkpoint::write_checkpoint(
                &snapshot_dir.join(format!("state_{:08}.ckp", state.step)),
                state,
                &hash,
            )
        };
        let mut hooks = RunHooks {
            diagnostics_every: config.output.diagnostics_every,
            on_diagnostics: Some(&mut on_diag),
            snapshot_every: config.output.snapshot_every,
            on_snapshot: Some(&mut on_snapshot),
        };
        integrate::run(&mut state, &cfg, &physics, config.integrator.t_end, &mut hooks)?;
    }

    std::fs::write(out.join("diagnostics.csv"), &diagnostics_csv)?;
    if is_dam_break {
        std::fs::write(out.join("leading_edge.csv"), &leading_csv)?;
        write_velocity_histogram(out, &state)?;
    }
    checkpoint::write_checkpoint(&out.join("final.ckp"), &state, &hash)?;

    if cfg.reverse_at.is_some() {
        let (exact, mismatch) = integrate::round_trip_mismatch(&initial, &state);
        let verdict = if exact { "PASS" } else { "FAIL" };
        let line = format!(
            "reverse-check {verdict} max_position_mismatch = {mismatch:?} m\n"
        );
        print!("{line}");
        std::fs::write(out.join("reverse_check.txt"), line)?;
        if is_reverse_check && !exact && cfg.arithmetic == Arithmetic::FixPa {
            return Err("fixed-point round trip failed to return bitwise".into());
        }
    }
    println!(
        "done: {} steps, t = {:?}, {} fluid particles",
        state.step,
        state.time,
        state.ps.fluid_count()
    );
    Ok(())
}

/// Export the fluid speed histogram with the fitted equilibrium density and
/// its chi-square statistic (reported, not thresholded).
fn write_velocity_histogram(out: &Path, state: &SimState) -> CliResult {
    let ps = &state.ps;
    let velocities: Vec<Vec2> = ps.fluid_indices().map(|a| ps.velocities[a]).collect();
    let masses: Vec<f64> = ps.fluid_indices().map(|a| ps.masses[a]).collect();
    let Some(t_fit) = thermo::fit_temperature(&velocities, &masses) else {
        return Ok(());
    };
    if masses.is_empty() || t_fit <= 0.0 {
        return Ok(());
    }
    let mean_mass = masses.iter().sum::<f64>() / masses.len() as f64;
    let v_max = velocities.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    let Some(hist) = thermo::VelocityHistogram::from_velocities(&velocities, 64, 1.05 * v_max)
    else {
        return Ok(());
    };
    let mut csv = String::from("v,measured_density,equilibrium_density\n");
    let mut chi2 = 0.0;
    let n = hist.sample_count as f64;
    for (i, &f) in hist.densities.iter().enumerate() {
        let v = hist.bin_center(i);
        let f_eq = thermo::maxwell_boltzmann_density(t_fit, mean_mass, v);
        let _ = writeln!(csv, "{v:?},{f:?},{f_eq:?}");
        let expected = f_eq * hist.bin_width * n;
        if expected > 0.0 {
            let observed = f * hist.bin_width * n;
            chi2 += (observed - expected) * (observed - expected) / expected;
        }
    }
    std::fs::write(out.join("velocity_histogram.csv"), csv)?;
    std::fs::write(
        out.join("histogram_fit.txt"),
        format!("fitted_temperature = {t_fit:?}\nchi_square = {chi2:?}\nbins = 64\n"),
    )?;
    Ok(())
}

fn cmd_isc(args: IscArgs) -> CliResult {
    let dr = args.dr;
    let kernel = match args.kernel.as_str() {
        "wendland2" => Kernel::wendland2(3.0 * dr),
        "cubic-spline" | "cubic_spline" => Kernel::cubic_spline(3.0 * dr),
        other => return Err(format!("unknown kernel '{other}'").into()),
    };
    let mut positions = Vec::with_capacity(args.n * args.n);
    for j in 0..args.n {
        for i in 0..args.n {
            positions.push(Vec2::new(i as f64 * dr, j as f64 * dr));
        }
    }
    let rho0 = 1000.0;
    let masses = vec![rho0 * dr * dr; positions.len()];
    let mut problem = IscProblem::new(positions, masses, kernel, rho0, dr);
    problem.seed = args.seed;
    problem.density_tolerance = args.tol;
    if let Some(noise) = args.noise {
        problem.noise_amplitude = noise;
    }
    match solve_isc(&problem) {
        Ok((_, report)) => {
            for (k, err) in report.errors.iter().enumerate() {
                println!("iteration {k}: max relative density error = {err:?}");
            }
            println!("converged in {} iterations", report.iterations);
            Ok(())
        }
        Err(e) => Err(format!("initial state correction failed: {e}").into()),
    }
}

fn cmd_analyze_entropy(args: AnalyzeEntropyArgs) -> CliResult {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&args.snapshots)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension().is_some_and(|x| x == "ckp")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("state_"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(format!("no state_*.ckp files in {}", args.snapshots.display()).into());
    }
    let mut csv = String::from("t,entropy,fitted_temperature,equilibrium_entropy\n");
    for path in &paths {
        let (state, header) = checkpoint::read_checkpoint(path, None)?;
        let velocities: Vec<Vec2> = state
            .ps
            .fluid_indices()
            .map(|a| state.ps.velocities[a])
            .collect();
        let masses: Vec<f64> = state.ps.fluid_indices().map(|a| state.ps.masses[a]).collect();
        let t_fit = thermo::fit_temperature(&velocities, &masses);
        let v_max = velocities.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
        let entropy = if v_max > 0.0 {
            thermo::VelocityHistogram::from_velocities(&velocities, args.bins, 1.05 * v_max)
                .and_then(|h| h.reduced_entropy())
        } else {
            None
        };
        let kinetic: f64 = velocities
            .iter()
            .zip(&masses)
            .map(|(v, &m)| 0.5 * m * v.norm_squared())
            .sum();
        let mean_mass = masses.iter().sum::<f64>() / masses.len().max(1) as f64;
        let s_eq = thermo::equilibrium_entropy_from_energy(kinetic, velocities.len(), mean_mass);
        let _ = writeln!(
            csv,
            "{:?},{},{},{}",
            header.time,
            csv_opt(entropy),
            csv_opt(t_fit),
            csv_opt(s_eq)
        );
    }
    std::fs::write(&args.out, csv)?;
    println!("wrote {} ({} snapshots)", args.out.display(), paths.len());
    Ok(())
}

fn cmd_gresho_table(args: GreshoTableArgs) -> CliResult {
    let mut csv = String::from("arrangement,no_filter,passive_filter,active_filter\n");
    let rows = [
        ("square", Arrangement::Square, false),
        ("hexagonal", Arrangement::Hexagonal, false),
        ("vogel", Arrangement::Vogel, false),
        ("vogel_isc", Arrangement::Vogel, true),
    ];
    for (label, arrangement, apply_isc) in rows {
        let mut scenario = GreshoScenario::new(args.dr, arrangement);
        scenario.apply_isc = apply_isc;
        scenario.isc_seed = args.seed;
        let plain = scenario.run(Arithmetic::FloPa, false)?;
        let active = scenario.run(Arithmetic::FloPa, true)?;
        let _ = writeln!(
            csv,
            "{label},{:?},{:?},{:?}",
            plain.error_raw, plain.error_passive, active.error_raw
        );
        eprintln!(
            "{label}: no filter {:.2}%, passive {:.2}%, active {:.2}%",
            100.0 * plain.error_raw,
            100.0 * plain.error_passive,
            100.0 * active.error_raw
        );
    }
    std::fs::write(&args.out, csv)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
