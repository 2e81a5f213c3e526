mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use kinmhd::collision::{BackendKind, CollisionBackend};
use kinmhd::grid::SpatialGrid;
use kinmhd::harness::{emit_report, run_sweep, summarize, FluidProfile, SweepConfig};
use kinmhd::io::{append_diagnostics, write_kinetic_snapshot, write_mhd_snapshot};
use kinmhd::kinetic::{init_state, InitKind, Integrator, KineticSolver, SolverOptions};
use kinmhd::mhd::{dissipation, energy, MhdCoefficients, MhdSolver};
use kinmhd::transport::compute_coefficients;
use kinmhd::velocity::VelocityBasis;

use config::{parse_config, parse_override, ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "kinmhd", version, about = "Kinetic and resistive MHD solvers with a small-eps convergence harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Compute the transport coefficients of a collision backend.
    Coeffs,
    /// Verify the structural assumptions of a collision backend.
    CheckOperator,
    /// Run the kinetic system at one eps.
    SimulateKinetic,
    /// Run the incompressible resistive MHD reference.
    SimulateMhd,
    /// Run the eps sweep and write the convergence report.
    Converge,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Coeffs => "coeffs",
            Command::CheckOperator => "check-operator",
            Command::SimulateKinetic => "simulate-kinetic",
            Command::SimulateMhd => "simulate-mhd",
            Command::Converge => "converge",
        }
    }
}

#[derive(Args)]
struct Common {
    /// TOML config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override any config key, e.g. `--set grid_modes=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Print the resolved config and exit.
    #[arg(long, global = true)]
    echo: bool,
    #[arg(long, global = true)]
    backend: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    eps: Option<f64>,
    /// Comma-separated, strictly decreasing.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    eps_list: Option<Vec<f64>>,
    #[arg(long, global = true)]
    t_end: Option<f64>,
    #[arg(long, global = true)]
    modes_per_axis: Option<i64>,
    #[arg(long, global = true)]
    grid_modes: Option<i64>,
    #[arg(long, global = true)]
    n_samples: Option<i64>,
    #[arg(long, global = true)]
    n_steps: Option<i64>,
    #[arg(long, global = true)]
    fluid: Option<String>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, toml::Value)>, ConfigError> {
        use toml::Value;
        let mut o = self.set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
        let mut push = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        push("out", self.out.clone().map(Value::String));
        push("seed", self.seed.map(|s| Value::Integer(s as i64)));
        push("backend", self.backend.clone().map(Value::String));
        push("eps", self.eps.map(Value::Float));
        push("eps_list", self.eps_list.clone().map(|l| Value::Array(l.into_iter().map(Value::Float).collect())));
        push("t_end", self.t_end.map(Value::Float));
        push("modes_per_axis", self.modes_per_axis.map(Value::Integer));
        push("grid_modes", self.grid_modes.map(Value::Integer));
        push("n_samples", self.n_samples.map(Value::Integer));
        push("n_steps", self.n_steps.map(Value::Integer));
        push("fluid", self.fluid.clone().map(Value::String));
        Ok(o)
    }
}

#[derive(Debug)]
enum AppError {
    Config(ConfigError),
    Core { context: &'static str, source: kinmhd::Error },
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(e) => write!(f, "config: {e}"),
            AppError::Core { context, source } => write!(f, "{context}: {source}"),
        }
    }
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(ConfigError::Io { .. }) => 3,
            AppError::Config(_) => 1,
            AppError::Core { source, .. } if source.is_io() => 3,
            AppError::Core { source, .. } if source.is_numerical() => 2,
            AppError::Core { .. } => 1,
        }
    }
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e)
    }
}

trait Context<T> {
    fn context(self, what: &'static str) -> Result<T, AppError>;
}

impl<T> Context<T> for kinmhd::Result<T> {
    fn context(self, what: &'static str) -> Result<T, AppError> {
        self.map_err(|source| AppError::Core { context: what, source })
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), AppError> {
    fs::write(path, bytes).map_err(|e| kinmhd::Error::io(path, e)).context("writing output")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), AppError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable record");
    text.push('\n');
    write_file(path, text.as_bytes())
}

struct Setup {
    grid: SpatialGrid,
    basis: VelocityBasis,
    backend: Arc<CollisionBackend>,
}

fn backend_kind(c: &RunConfig) -> BackendKind {
    c.backend.parse().expect("validated backend name")
}

fn cache_dir(c: &RunConfig) -> Option<PathBuf> {
    (!c.cache_dir.is_empty()).then(|| PathBuf::from(&c.cache_dir))
}

fn setup(c: &RunConfig) -> Result<Setup, AppError> {
    let grid = SpatialGrid::uniform(c.grid_dims, c.grid_modes).context("building grid")?;
    let basis = VelocityBasis::for_products(c.modes_per_axis).context("building velocity basis")?;
    let kind = backend_kind(c);
    let backend = match cache_dir(c) {
        Some(dir) => CollisionBackend::build_cached(kind, &basis, &dir),
        None => CollisionBackend::build(kind, &basis),
    }
    .context("assembling collision operator")?;
    Ok(Setup { grid, basis, backend: Arc::new(backend) })
}

fn solver_options(c: &RunConfig) -> SolverOptions {
    SolverOptions {
        integrator: if c.integrator == "imex" { Integrator::Imex } else { Integrator::Midpoint },
        c_cfl: c.c_cfl,
        dt_relax: c.dt_relax,
        gauss_projection_every: c.gauss_projection_every,
        sobolev_order: c.sobolev_order,
        ..SolverOptions::default()
    }
}

fn fluid_profile(c: &RunConfig) -> FluidProfile {
    if c.fluid == "zero" {
        FluidProfile::Zero
    } else {
        FluidProfile::Shear { amplitude: c.amplitude }
    }
}

fn init_kind(c: &RunConfig) -> InitKind {
    if c.init == "general" {
        InitKind::General { amplitude: c.init_amplitude, seed: c.seed }
    } else {
        InitKind::WellPrepared
    }
}

#[derive(Serialize)]
struct CoefficientRecord<'a> {
    backend: &'a str,
    #[serde(rename = "N")]
    n: usize,
    nu: f64,
    kappa: f64,
    sigma: f64,
}

/// Runs a subcommand, returning the data files it wrote.
fn dispatch(cmd: Command, c: &RunConfig, out: &Path) -> Result<Vec<&'static str>, AppError> {
    match cmd {
        Command::Coeffs => {
            let s = setup(c)?;
            let tc = compute_coefficients(&s.backend).context("computing transport coefficients")?;
            println!("backend = {}, N = {}", c.backend, c.modes_per_axis);
            println!("nu    = {:.15}", tc.nu);
            println!("kappa = {:.15}", tc.kappa);
            println!("sigma = {:.15}", tc.sigma);
            println!("nu (limit viscosity) = {:.15}", tc.nu_limit());
            let rec =
                CoefficientRecord { backend: &c.backend, n: c.modes_per_axis, nu: tc.nu, kappa: tc.kappa, sigma: tc.sigma };
            write_json(&out.join("coefficients.json"), &rec)?;
            Ok(vec!["coefficients.json"])
        }
        Command::CheckOperator => {
            let s = setup(c)?;
            let cert = s.backend.verify_assumptions(c.check_samples, c.seed);
            println!("{}", serde_json::to_string_pretty(&cert).expect("serializable certificate"));
            write_json(&out.join("certificate.json"), &cert)?;
            if !(cert.lambda_est > 0.0 && cert.lambda_est_charge > 0.0) {
                return Err(kinmhd::Error::SingularOperator { lambda_est: cert.lambda_est.min(cert.lambda_est_charge) })
                    .context("checking coercivity");
            }
            Ok(vec!["certificate.json"])
        }
        Command::SimulateKinetic => {
            let s = setup(c)?;
            let fluid = fluid_profile(c).build(&s.grid);
            fluid.check_admissible(&s.grid).context("checking initial data")?;
            let state = init_state(init_kind(c), &fluid, c.eps, &s.grid, &s.basis).context("initialising state")?;
            let mut solver = KineticSolver::new(s.grid.clone(), s.backend.clone(), c.eps, solver_options(c))
                .context("building kinetic solver")?;
            let run = if c.n_steps > 0 {
                let every = (c.n_steps / c.n_samples).max(1);
                solver.run_steps(&state, c.n_steps, every, false)
            } else {
                solver.run_to(&state, c.t_end, c.n_samples, false)
            }
            .context("integrating kinetic system")?;
            let diag = out.join("diagnostics.csv");
            let _ = fs::remove_file(&diag);
            append_diagnostics(&diag, &run.records).context("writing diagnostics")?;
            write_kinetic_snapshot(&out.join("final.snap"), &s.grid, &run.final_state).context("writing snapshot")?;
            let last = run.records.last().expect("at least one record");
            println!(
                "t = {:.6}, steps = {}, dt = {:.3e}, H = {:.6e}, div B = {:.2e}, gauss = {:.2e}",
                last.t,
                last.step,
                solver.dt(),
                last.energy_h,
                last.div_b,
                last.gauss
            );
            Ok(vec!["diagnostics.csv", "final.snap"])
        }
        Command::SimulateMhd => {
            let s = setup(c)?;
            let tc = compute_coefficients(&s.backend).context("computing transport coefficients")?;
            let coeffs = MhdCoefficients { nu: tc.nu_limit(), kappa: tc.kappa, sigma: tc.sigma };
            let fluid = fluid_profile(c).build(&s.grid);
            fluid.check_admissible(&s.grid).context("checking initial data")?;
            let solver = MhdSolver::new(s.grid.clone(), coeffs).context("building MHD solver")?;
            let dt = (c.t_end / c.n_samples as f64).min(c.mhd_dt);
            let traj = solver.run(&fluid, c.t_end, dt, c.n_samples).context("integrating MHD system")?;
            let mut csv = String::from("t,energy,dissipation\n");
            for st in &traj {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    st.t,
                    energy(&s.grid, st),
                    dissipation(&s.grid, &coeffs, st)
                ));
            }
            write_file(&out.join("mhd_diagnostics.csv"), csv.as_bytes())?;
            let last = traj.last().expect("at least one sample");
            write_mhd_snapshot(&out.join("final_mhd.snap"), &s.grid, last).context("writing snapshot")?;
            println!("t = {:.6}, energy = {:.6e}", last.t, energy(&s.grid, last));
            Ok(vec!["mhd_diagnostics.csv", "final_mhd.snap"])
        }
        Command::Converge => {
            let sweep = SweepConfig {
                eps_list: c.eps_list.clone(),
                t_end: c.t_end,
                fluid: fluid_profile(c),
                init: init_kind(c),
                backend: backend_kind(c),
                modes_per_axis: c.modes_per_axis,
                grid_dims: c.grid_dims,
                grid_modes: c.grid_modes,
                n_samples: c.n_samples,
                error_order: c.error_order,
                mhd_dt: c.mhd_dt,
                cache_dir: cache_dir(c),
                solver: solver_options(c),
            };
            let report = run_sweep(&sweep).context("running sweep")?;
            emit_report(&report, c.error_order, out).context("writing report")?;
            let summary = summarize(&report, c.error_order);
            for (name, m) in &summary.metrics {
                let orders: Vec<String> = m.orders.iter().map(|p| format!("{p:.3}")).collect();
                println!("{name:16} decreasing = {:5}  orders = [{}]", m.strictly_decreasing, orders.join(", "));
            }
            Ok(vec!["report.csv", "summary.json"])
        }
    }
}

#[derive(Serialize)]
struct Manifest {
    subcommand: &'static str,
    version: &'static str,
    config_sha256: String,
    wall_time_s: f64,
    outputs: BTreeMap<String, String>,
}

fn run(cli: &Cli) -> Result<(), AppError> {
    let c = parse_config(cli.common.config.as_deref(), &cli.common.overrides()?)?;
    let text = c.to_toml();
    if cli.common.echo {
        print!("{text}");
        return Ok(());
    }
    let out = PathBuf::from(&c.out);
    fs::create_dir_all(&out).map_err(|e| kinmhd::Error::io(&out, e)).context("creating output directory")?;
    write_file(&out.join("config.toml"), text.as_bytes())?;

    let start = Instant::now();
    let files = dispatch(cli.command, &c, &out)?;
    let wall_time_s = start.elapsed().as_secs_f64();

    let mut outputs = BTreeMap::new();
    for name in files {
        let path = out.join(name);
        let bytes = fs::read(&path).map_err(|e| kinmhd::Error::io(&path, e)).context("hashing outputs")?;
        outputs.insert(name.to_string(), sha256_hex(&bytes));
    }
    let manifest = Manifest {
        subcommand: cli.command.name(),
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: sha256_hex(text.as_bytes()),
        wall_time_s,
        outputs,
    };
    write_json(&out.join("manifest.json"), &manifest)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kinmhd {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
