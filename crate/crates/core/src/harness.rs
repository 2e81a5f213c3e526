//! Knudsen-number sweep: kinetic runs at decreasing `eps` from shared
//! well-prepared data, compared against one MHD reference run.
//!
//! Every error is an `L^2(0, T; H^m)` norm, with trapezoidal quadrature over
//! equally spaced samples in time.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{BackendKind, CollisionBackend};
use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, Spectrum, VectorSpectrum};
use crate::kinetic::{init_state, InitKind, KineticSolver, KineticState, SolverOptions};
use crate::mhd::{leray_project, FluidState, MhdCoefficients, MhdSolver};
use crate::transport::compute_coefficients;
use crate::velocity::{VelocityBasis, VELOCITY_MODES};

/// Metric names in report order.
pub const METRICS: [&str; 8] =
    ["err_u", "err_theta", "err_B", "err_f", "err_h", "err_n", "ohm_residual", "ampere_residual"];

/// Metrics whose empirical order is held to a minimum.
pub const RATE_METRICS: [&str; 4] = ["err_u", "err_theta", "err_B", "ohm_residual"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "profile")]
pub enum FluidProfile {
    /// No data.
    Zero,
    /// `u = (0, A sin x1, 0)`, `theta = A cos x1`, `B = (0, 0, A cos x1)`.
    Shear { amplitude: f64 },
}

impl FluidProfile {
    pub fn build(&self, grid: &SpatialGrid) -> FluidState {
        match *self {
            FluidProfile::Zero => FluidState::zeros(grid),
            FluidProfile::Shear { amplitude: a } => FluidState::from_fn(
                grid,
                |x| [0.0, a * x[0].sin(), 0.0],
                |x| a * x[0].cos(),
                |x| [0.0, 0.0, a * x[0].cos()],
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub eps_list: Vec<f64>,
    pub t_end: f64,
    pub fluid: FluidProfile,
    pub init: InitKind,
    pub backend: BackendKind,
    pub modes_per_axis: usize,
    pub grid_dims: usize,
    pub grid_modes: usize,
    /// Records per run after the initial one.
    pub n_samples: usize,
    /// Spatial order `m` of the error norms.
    pub error_order: usize,
    /// Upper bound on the reference step.
    pub mhd_dt: f64,
    /// Operator cache for the collision backend.
    pub cache_dir: Option<PathBuf>,
    pub solver: SolverOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            eps_list: vec![0.4, 0.2, 0.1, 0.05],
            t_end: 0.5,
            fluid: FluidProfile::Shear { amplitude: 0.05 },
            init: InitKind::WellPrepared,
            backend: BackendKind::Relaxation,
            modes_per_axis: 6,
            grid_dims: 1,
            grid_modes: 32,
            n_samples: 20,
            error_order: 1,
            mhd_dt: 1e-3,
            cache_dir: None,
            solver: SolverOptions::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_list.is_empty() {
            return Err(Error::InvalidInput("eps_list must not be empty".into()));
        }
        if self.eps_list.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::InvalidInput("every eps must lie in (0, 1]".into()));
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput("eps_list must be strictly decreasing".into()));
        }
        if !(self.t_end > 0.0 && self.mhd_dt > 0.0) || self.n_samples == 0 {
            return Err(Error::InvalidInput("t_end, mhd_dt and n_samples must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub eps: f64,
    /// Values in the order of [`METRICS`].
    pub values: Vec<f64>,
    /// `max_t H(t) / H(0)` of the kinetic run.
    pub energy_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ReportRow>,
    pub coefficients: Option<MhdCoefficients>,
}

impl ConvergenceReport {
    pub fn metric(&self, name: &str) -> Vec<f64> {
        let k = METRICS.iter().position(|m| *m == name).expect("known metric");
        self.rows.iter().map(|r| r.values[k]).collect()
    }

    pub fn eps(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.eps).collect()
    }

    /// Empirical orders between consecutive rows.
    pub fn orders(&self, name: &str) -> Vec<f64> {
        empirical_orders(&self.eps(), &self.metric(name))
    }

    pub fn strictly_decreasing(&self, name: &str) -> bool {
        self.metric(name).windows(2).all(|w| w[1] < w[0])
    }
}

/// `p_k = log(e_k / e_{k+1}) / log(eps_k / eps_{k+1})`.
pub fn empirical_orders(eps: &[f64], errs: &[f64]) -> Vec<f64> {
    eps.windows(2)
        .zip(errs.windows(2))
        .map(|(e, r)| (r[0] / r[1]).ln() / (e[0] / e[1]).ln())
        .collect()
}

/// Context for turning samples into error norms.
pub struct ErrorContext<'a> {
    pub grid: &'a SpatialGrid,
    pub basis: &'a VelocityBasis,
    pub sigma: f64,
    pub order: usize,
    /// Errors are integrated over `[tau, t_end]`.
    pub tau: f64,
}

fn diff(a: &[Complex64], b: &[Complex64]) -> Spectrum {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Trapezoidal `sqrt(int ||.||^2 dt)` over samples with `t >= tau`.
fn time_norm(times: &[f64], sq: &[f64], tau: f64) -> f64 {
    let mut total = 0.0;
    for k in 1..times.len() {
        if times[k - 1] + 1e-12 >= tau {
            total += 0.5 * (times[k] - times[k - 1]) * (sq[k] + sq[k - 1]);
        }
    }
    total.sqrt()
}

/// Error metrics of a kinetic trajectory against an MHD trajectory sampled
/// at the same times.
pub fn compute_errors(kin: &[KineticState], mhd: &[FluidState], ctx: &ErrorContext) -> Result<Vec<f64>> {
    if kin.len() != mhd.len() {
        return Err(Error::SamplingMismatch(format!("{} kinetic vs {} MHD samples", kin.len(), mhd.len())));
    }
    for (k, m) in kin.iter().zip(mhd) {
        if (k.t - m.t).abs() > 1e-9 * (1.0 + k.t.abs()) {
            return Err(Error::SamplingMismatch(format!("kinetic t = {} vs MHD t = {}", k.t, m.t)));
        }
    }
    let g = ctx.grid;
    let m = ctx.order;
    let energy = ctx.basis.energy_mode();
    let mut sq = vec![Vec::with_capacity(kin.len()); METRICS.len()];
    for (k, fl) in kin.iter().zip(mhd) {
        let u_eps: VectorSpectrum = k.u().map(|w| w.clone());
        let pu = leray_project(g, &u_eps);
        let err_u: VectorSpectrum = [0, 1, 2].map(|a| diff(&pu[a], &fl.u[a]));
        let theta_eps = k.theta(ctx.basis);
        let err_theta: Spectrum = (0..g.len())
            .map(|i| 0.6 * theta_eps[i] - 0.4 * k.rho()[i] - fl.theta[i])
            .collect();
        let err_b: VectorSpectrum = [0, 1, 2].map(|a| diff(&k.b[a], &fl.b[a]));

        // f - (rho + u.v + ((|v|^2-3)/2) theta), rho = -theta
        let mut err_f = 0.0;
        for (mode, fm) in k.f.iter().enumerate() {
            let mut want: Spectrum = fl.theta.iter().map(|z| z * energy.coeffs[mode]).collect();
            if mode == 0 {
                want.iter_mut().zip(&fl.theta).for_each(|(w, t)| *w -= t);
            }
            if let Some(a) = VELOCITY_MODES.iter().position(|&v| v == mode) {
                want.iter_mut().zip(&fl.u[a]).for_each(|(w, u)| *w += u);
            }
            err_f += g.sobolev_sq(&diff(fm, &want), m);
        }
        let err_h: f64 = k.h.iter().map(|w| g.sobolev_sq(w, m)).sum();
        let err_n = g.sobolev_sq(k.n(), m);

        let j = k.j();
        let uxb = g.cross(&u_eps, &k.b);
        let ohm: VectorSpectrum =
            [0, 1, 2].map(|a| (0..g.len()).map(|i| j[a][i] - ctx.sigma * (k.e[a][i] + uxb[a][i])).collect());
        let curl_b = g.curl(&k.b);
        let ampere: VectorSpectrum = [0, 1, 2].map(|a| diff(&curl_b[a], &j[a]));

        let vals = [
            g.sobolev_sq_vec(&err_u, m),
            g.sobolev_sq(&err_theta, m),
            g.sobolev_sq_vec(&err_b, m),
            err_f,
            err_h,
            err_n,
            g.sobolev_sq_vec(&ohm, m),
            g.sobolev_sq_vec(&ampere, m),
        ];
        for (s, v) in sq.iter_mut().zip(vals) {
            s.push(v);
        }
    }
    let times: Vec<f64> = kin.iter().map(|k| k.t).collect();
    Ok(sq.iter().map(|s| time_norm(&times, s, ctx.tau)).collect())
}

/// Run the sweep. Kinetic runs at different `eps` execute concurrently.
pub fn run_sweep(cfg: &SweepConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let grid = SpatialGrid::uniform(cfg.grid_dims, cfg.grid_modes)?;
    let basis = VelocityBasis::for_products(cfg.modes_per_axis)?;
    let backend = Arc::new(match &cfg.cache_dir {
        Some(dir) => CollisionBackend::build_cached(cfg.backend, &basis, dir)?,
        None => CollisionBackend::build(cfg.backend, &basis)?,
    });
    let tc = compute_coefficients(&backend)?;
    let coeffs = MhdCoefficients { nu: tc.nu_limit(), kappa: tc.kappa, sigma: tc.sigma };
    let fluid = cfg.fluid.build(&grid);
    fluid.check_admissible(&grid)?;

    let mhd = MhdSolver::new(grid.clone(), coeffs)?;
    let dt_mhd = (cfg.t_end / cfg.n_samples as f64).min(cfg.mhd_dt);
    let reference = mhd.run(&fluid, cfg.t_end, dt_mhd, cfg.n_samples)?;
    let tau = match cfg.init {
        InitKind::WellPrepared => 0.0,
        InitKind::General { .. } => 0.1 * cfg.t_end,
    };

    let runs: Vec<Result<ReportRow>> = cfg
        .eps_list
        .par_iter()
        .map(|&eps| {
            let state = init_state(cfg.init, &fluid, eps, &grid, &basis)?;
            let mut solver = KineticSolver::new(grid.clone(), backend.clone(), eps, cfg.solver.clone())?;
            let out = solver.run_to(&state, cfg.t_end, cfg.n_samples, true)?;
            let ctx = ErrorContext { grid: &grid, basis: &basis, sigma: tc.sigma, order: cfg.error_order, tau };
            let values = compute_errors(&out.samples, &reference, &ctx)?;
            let h0 = out.records[0].energy_h;
            let hmax = out.records.iter().map(|r| r.energy_h).fold(0.0, f64::max);
            let energy_ratio = if h0 > 0.0 { hmax / h0 } else if hmax == 0.0 { 1.0 } else { f64::INFINITY };
            Ok(ReportRow { eps, values, energy_ratio })
        })
        .collect();
    let rows = runs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport { rows, coefficients: Some(coeffs) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub values: Vec<f64>,
    pub orders: Vec<f64>,
    pub strictly_decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub eps: Vec<f64>,
    pub norm: String,
    pub time_quadrature: String,
    pub metrics: BTreeMap<String, MetricSummary>,
    pub energy_ratio: Vec<f64>,
    pub coefficients: Option<MhdCoefficients>,
}

pub fn summarize(report: &ConvergenceReport, error_order: usize) -> ReportSummary {
    let metrics = METRICS
        .iter()
        .map(|&name| {
            (
                name.to_string(),
                MetricSummary {
                    values: report.metric(name),
                    orders: report.orders(name),
                    strictly_decreasing: report.strictly_decreasing(name),
                },
            )
        })
        .collect();
    ReportSummary {
        eps: report.eps(),
        norm: format!("L2(0,T;H^{error_order})"),
        time_quadrature: "trapezoidal over equally spaced samples".into(),
        metrics,
        energy_ratio: report.rows.iter().map(|r| r.energy_ratio).collect(),
        coefficients: report.coefficients,
    }
}

pub const REPORT_HEADER: &str = "eps,metric,value,order";

/// Write `report.csv` (one row per eps per metric; `order` is relative to the
/// previous eps and empty on the first) and `summary.json`.
pub fn emit_report(report: &ConvergenceReport, error_order: usize, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = String::from(REPORT_HEADER);
    csv.push('\n');
    for name in METRICS {
        let orders = report.orders(name);
        for (k, row) in report.rows.iter().enumerate() {
            let v = row.values[METRICS.iter().position(|m| *m == name).unwrap()];
            let order = if k == 0 { String::new() } else { format!("{}", orders[k - 1]) };
            csv.push_str(&format!("{},{},{},{}\n", row.eps, name, v, order));
        }
    }
    let path = dir.join("report.csv");
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summarize(report, error_order))
        .map_err(|e| Error::format(&path, e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub eps: f64,
    pub metric: String,
    pub value: f64,
    pub order: Option<f64>,
}

pub fn parse_report(path: &Path) -> Result<Vec<CsvRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(Error::format(path, "missing header"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::format(path, format!("`{s}`: {e}")));
    lines
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::format(path, format!("expected 4 columns in `{line}`")));
            }
            Ok(CsvRow {
                eps: num(cols[0])?,
                metric: cols[1].to_string(),
                value: num(cols[2])?,
                order: if cols[3].is_empty() { None } else { Some(num(cols[3])?) },
            })
        })
        .collect()
}

