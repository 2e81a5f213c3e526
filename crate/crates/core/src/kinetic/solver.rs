use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagnostics::DiagnosticsRecord;
use super::state::KineticState;
use crate::collision::{CollisionBackend, Operator};
use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, Spectrum};
use crate::velocity::{VelocityBasis, VELOCITY_MODES};

type C = Complex64;
type Pair = (Vec<f64>, Vec<f64>);
const I: C = C::new(0.0, 1.0);
const ZERO: C = C::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Implicit midpoint on the whole system; the nonlinear terms are
    /// resolved by fixed-point iteration. Conserves linear and quadratic
    /// invariants to the iteration tolerance.
    Midpoint,
    /// Backward Euler on every linear term followed by SSP-RK2 on the
    /// nonlinear terms (Lie splitting).
    Imex,
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "midpoint" => Ok(Integrator::Midpoint),
            "imex" => Ok(Integrator::Imex),
            other => Err(Error::InvalidInput(format!("unknown integrator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub integrator: Integrator,
    /// `L f` and `Ls h`.
    pub linear_collisions: bool,
    /// `Gamma(f, f)` and `Gamma(h, f)`.
    pub nonlinear_collisions: bool,
    /// The `E.v` source and the current in Ampere's law.
    pub field_coupling: bool,
    /// Lorentz-force terms.
    pub lorentz: bool,
    /// Correct `E` to satisfy Gauss's law every this many steps (0 = never).
    pub gauss_projection_every: usize,
    /// `dt <= c_cfl eps dx / v_max`.
    pub c_cfl: f64,
    /// `dt <= dt_relax eps^2`.
    pub dt_relax: f64,
    /// Spatial derivative order of the energy functionals.
    pub sobolev_order: usize,
    pub fixed_point_tol: f64,
    pub max_fixed_point_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            integrator: Integrator::Midpoint,
            linear_collisions: true,
            nonlinear_collisions: true,
            field_coupling: true,
            lorentz: true,
            gauss_projection_every: 0,
            c_cfl: 1.0,
            dt_relax: 0.5,
            sobolev_order: 2,
            fixed_point_tol: 1e-14,
            max_fixed_point_iters: 100,
        }
    }
}

/// A time derivative in the state layout (`t` and `eps` unused).
pub type Tendency = KineticState;

#[derive(Debug, Clone)]
pub struct RhsSplit {
    /// `-(1/e^2) (L f, Ls h)`.
    pub collision: Tendency,
    /// Maxwell's equations and the `(1/e) E.v` source.
    pub maxwell: Tendency,
    /// Transport, Lorentz and `Gamma` terms.
    pub nonstiff: Tendency,
}

impl RhsSplit {
    pub fn total(&self) -> Tendency {
        let s = lin_comb(1.0, &self.collision, 1.0, &self.maxwell);
        lin_comb(1.0, &s, 1.0, &self.nonstiff)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepInfo {
    /// `|| (n^{k+1} - n^k)/dt + div j ||_{L^2}` with `j` taken at the stage
    /// that advances `n`.
    pub continuity_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub final_state: KineticState,
    pub records: Vec<DiagnosticsRecord>,
    /// States at the record times, when requested.
    pub samples: Vec<KineticState>,
}

struct Block {
    idx: usize,
    lu_f: LU<C, Dyn, Dyn>,
    lu_heb: LU<C, Dyn, Dyn>,
}

pub struct KineticSolver {
    pub(super) grid: SpatialGrid,
    pub(super) backend: Arc<CollisionBackend>,
    pub(super) eps: f64,
    pub(super) opts: SolverOptions,
    pub(super) dt: f64,
    pub(super) v_tilde: [Vec<f64>; 3],
    pub(super) sigma: f64,
    mul_v: [DMatrix<f64>; 3],
    blocks: Vec<Block>,
}

impl std::fmt::Debug for KineticSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KineticSolver")
            .field("grid", &self.grid)
            .field("eps", &self.eps)
            .field("dt", &self.dt)
            .field("opts", &self.opts)
            .finish()
    }
}

pub(super) fn lin_comb(a: f64, x: &KineticState, b: f64, y: &KineticState) -> KineticState {
    let comb = |p: &Spectrum, q: &Spectrum| -> Spectrum { p.iter().zip(q).map(|(u, v)| a * u + b * v).collect() };
    KineticState {
        t: x.t,
        eps: x.eps,
        f: x.f.iter().zip(&y.f).map(|(p, q)| comb(p, q)).collect(),
        h: x.h.iter().zip(&y.h).map(|(p, q)| comb(p, q)).collect(),
        e: [0, 1, 2].map(|i| comb(&x.e[i], &y.e[i])),
        b: [0, 1, 2].map(|i| comb(&x.b[i], &y.b[i])),
    }
}

fn max_abs_diff(x: &KineticState, y: &KineticState) -> (f64, f64) {
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    let all_x = x.f.iter().chain(&x.h).chain(&x.e).chain(&x.b);
    let all_y = y.f.iter().chain(&y.h).chain(&y.e).chain(&y.b);
    for (p, q) in all_x.zip(all_y) {
        for (u, v) in p.iter().zip(q) {
            diff = diff.max((u - v).norm());
            scale = scale.max(u.norm());
        }
    }
    (diff, scale)
}

/// Apply a real velocity-space operator column by column to complex spectra.
pub(super) fn velocity_map(src: &[Spectrum], op: impl Fn(&[f64], &mut [f64])) -> Vec<Spectrum> {
    let nm = src.len();
    let npts = src[0].len();
    let mut out = vec![vec![ZERO; npts]; nm];
    let mut re = vec![0.0; nm];
    let mut im = vec![0.0; nm];
    let mut ore = vec![0.0; nm];
    let mut oim = vec![0.0; nm];
    for i in 0..npts {
        let mut nonzero = false;
        for m in 0..nm {
            re[m] = src[m][i].re;
            im[m] = src[m][i].im;
            nonzero |= re[m] != 0.0 || im[m] != 0.0;
        }
        if !nonzero {
            continue;
        }
        ore.iter_mut().for_each(|x| *x = 0.0);
        oim.iter_mut().for_each(|x| *x = 0.0);
        op(&re, &mut ore);
        op(&im, &mut oim);
        for m in 0..nm {
            out[m][i] = C::new(ore[m], oim[m]);
        }
    }
    out
}

impl KineticSolver {
    pub fn new(grid: SpatialGrid, backend: Arc<CollisionBackend>, eps: f64, opts: SolverOptions) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidInput(format!("eps must lie in (0, 1], got {eps}")));
        }
        if !(opts.c_cfl > 0.0 && opts.dt_relax > 0.0) {
            return Err(Error::InvalidInput("c_cfl and dt_relax must be positive".into()));
        }
        let basis = backend.basis();
        let mut v_tilde = [Vec::new(), Vec::new(), Vec::new()];
        let mut sigma = 0.0;
        for (a, vt) in v_tilde.iter_mut().enumerate() {
            let v = basis.velocity(a);
            let x = backend.solve_on_orthogonal(Operator::Charge, &v)?;
            sigma += x.coeffs[VELOCITY_MODES[a]] / 3.0;
            *vt = x.coeffs;
        }
        let mul_v = [0, 1, 2].map(|a| basis.mul_v_matrix(a));
        let mut solver = KineticSolver {
            grid,
            backend,
            eps,
            opts,
            dt: 0.0,
            v_tilde,
            sigma,
            mul_v,
            blocks: Vec::new(),
        };
        let dt = solver.dt_max();
        solver.set_dt(dt)?;
        Ok(solver)
    }

    pub fn basis(&self) -> &VelocityBasis {
        self.backend.basis()
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    /// `(1/3) sum_a <v_tilde_a, v_a>`, the conductivity of the charge operator.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Advective bound `c_cfl eps dx / v_max`.
    pub fn cfl_limit(&self) -> f64 {
        self.opts.c_cfl * self.eps * self.grid.dx() / self.basis().max_speed()
    }

    /// Default step: the advective bound capped at `dt_relax eps^2`.
    pub fn dt_max(&self) -> f64 {
        self.cfl_limit().min(self.opts.dt_relax * self.eps * self.eps)
    }

    pub fn set_dt(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        let limit = self.cfl_limit();
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, limit });
        }
        if dt == self.dt && !self.blocks.is_empty() {
            return Ok(());
        }
        self.dt = dt;
        let theta = match self.opts.integrator {
            Integrator::Midpoint => 0.5,
            Integrator::Imex => 1.0,
        };
        let idx: Vec<usize> = (0..self.grid.len()).filter(|&i| self.grid.keep(i)).collect();
        let blocks: Result<Vec<Block>> = idx
            .par_iter()
            .map(|&i| {
                let (af, aheb) = self.linear_blocks(self.grid.k(i));
                let lu = |a: DMatrix<C>| -> Result<LU<C, Dyn, Dyn>> {
                    let n = a.nrows();
                    let m = DMatrix::<C>::identity(n, n) - a * C::new(theta * dt, 0.0);
                    let lu = m.lu();
                    if !lu.is_invertible() {
                        return Err(Error::SingularOperator { lambda_est: f64::NAN });
                    }
                    Ok(lu)
                };
                Ok(Block { idx: i, lu_f: lu(af)?, lu_heb: lu(aheb)? })
            })
            .collect();
        self.blocks = blocks?;
        Ok(())
    }

    /// Linear generator at wavenumber `k`: the `f` block and the coupled
    /// `(h, E, B)` block.
    pub fn linear_blocks(&self, k: [f64; 3]) -> (DMatrix<C>, DMatrix<C>) {
        let nm = self.basis().len();
        let eps = self.eps;
        let o = &self.opts;
        let mut transport = DMatrix::<C>::zeros(nm, nm);
        for a in 0..3 {
            if k[a] != 0.0 {
                transport += self.mul_v[a].map(|x| C::new(0.0, -k[a] * x / eps));
            }
        }
        let mut af = transport.clone();
        let mut ah = transport;
        if o.linear_collisions {
            let s = -1.0 / (eps * eps);
            af += self.backend.matrix(Operator::Hydro).map(|x| C::new(s * x, 0.0));
            ah += self.backend.matrix(Operator::Charge).map(|x| C::new(s * x, 0.0));
        }
        let mut aheb = DMatrix::<C>::zeros(nm + 6, nm + 6);
        aheb.view_mut((0, 0), (nm, nm)).copy_from(&ah);
        let (e0, b0) = (nm, nm + 3);
        for a in 0..3 {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            // e d_t E = i k x B - j
            aheb[(e0 + a, b0 + c)] += I * k[b] / eps;
            aheb[(e0 + a, b0 + b)] -= I * k[c] / eps;
            // d_t B = -i k x E
            aheb[(b0 + a, e0 + c)] -= I * k[b];
            aheb[(b0 + a, e0 + b)] += I * k[c];
            if o.field_coupling {
                aheb[(VELOCITY_MODES[a], e0 + a)] += C::new(1.0 / eps, 0.0);
                aheb[(e0 + a, VELOCITY_MODES[a])] -= C::new(1.0 / (eps * eps), 0.0);
            }
        }
        (af, aheb)
    }

    fn has_nonlinear(&self) -> bool {
        self.opts.lorentz || self.opts.nonlinear_collisions
    }

    /// `(I - theta dt A)^{-1} y` mode by mode.
    fn solve_linear(&self, y: &KineticState) -> KineticState {
        let nm = self.basis().len();
        let solved: Vec<(usize, DVector<C>, DVector<C>)> = self
            .blocks
            .par_iter()
            .map(|blk| {
                let i = blk.idx;
                let rf = DVector::from_fn(nm, |m, _| y.f[m][i]);
                let rheb = DVector::from_fn(nm + 6, |r, _| {
                    if r < nm {
                        y.h[r][i]
                    } else if r < nm + 3 {
                        y.e[r - nm][i]
                    } else {
                        y.b[r - nm - 3][i]
                    }
                });
                let xf = blk.lu_f.solve(&rf).expect("factorisation checked at construction");
                let xheb = blk.lu_heb.solve(&rheb).expect("factorisation checked at construction");
                (i, xf, xheb)
            })
            .collect();
        let mut out = KineticState::zeros(&self.grid, self.basis(), y.eps);
        out.t = y.t;
        for (i, xf, xheb) in solved {
            for m in 0..nm {
                out.f[m][i] = xf[m];
                out.h[m][i] = xheb[m];
            }
            for a in 0..3 {
                out.e[a][i] = xheb[nm + a];
                out.b[a][i] = xheb[nm + 3 + a];
            }
        }
        out
    }

    /// Lorentz and `Gamma` terms, evaluated pointwise in space and dealiased.
    pub fn nonlinear(&self, s: &KineticState) -> (Vec<Spectrum>, Vec<Spectrum>) {
        let g = &self.grid;
        let basis = self.basis();
        let nm = basis.len();
        let npts = g.len();
        if !self.has_nonlinear() {
            return (vec![g.zeros(); nm], vec![g.zeros(); nm]);
        }
        let fr: Vec<Vec<f64>> = s.f.iter().map(|w| g.inverse_real(w)).collect();
        let hr: Vec<Vec<f64>> = s.h.iter().map(|w| g.inverse_real(w)).collect();
        let er = s.e.each_ref().map(|w| g.inverse_real(w));
        let br = s.b.each_ref().map(|w| g.inverse_real(w));
        let inv_eps = 1.0 / self.eps;
        let opts = &self.opts;
        let pointwise: Vec<(Vec<f64>, Vec<f64>)> = (0..npts)
            .into_par_iter()
            .map(|x| {
                let fv: Vec<f64> = (0..nm).map(|m| fr[m][x]).collect();
                let hv: Vec<f64> = (0..nm).map(|m| hr[m][x]).collect();
                let mut nf = vec![0.0; nm];
                let mut nh = vec![0.0; nm];
                if opts.lorentz {
                    for a in 0..3 {
                        let (ea, ba) = (er[a][x], br[a][x]);
                        if ea != 0.0 {
                            basis.raise_add(a, &hv, ea, &mut nf);
                            basis.raise_add(a, &fv, ea, &mut nh);
                        }
                        if ba != 0.0 {
                            basis.rotation_add(a, &hv, -ba * inv_eps, &mut nf);
                            basis.rotation_add(a, &fv, -ba * inv_eps, &mut nh);
                        }
                    }
                }
                if opts.nonlinear_collisions {
                    let gff = self.backend.bilinear(&fv, &fv);
                    let ghf = self.backend.bilinear(&hv, &fv);
                    for m in 0..nm {
                        nf[m] += inv_eps * gff[m];
                        nh[m] += inv_eps * ghf[m];
                    }
                }
                (nf, nh)
            })
            .collect();
        let back = |sel: &dyn Fn(&Pair) -> &Vec<f64>| -> Vec<Spectrum> {
            (0..nm)
                .map(|m| {
                    let vals: Vec<f64> = pointwise.iter().map(|p| sel(p)[m]).collect();
                    let mut w = g.forward_real(&vals);
                    g.dealias(&mut w);
                    w
                })
                .collect()
        };
        (back(&|p| &p.0), back(&|p| &p.1))
    }

    fn with_nonlinear(&self, y: &KineticState, z: &KineticState, coef: f64) -> KineticState {
        let (nf, nh) = self.nonlinear(z);
        let mut out = y.clone();
        for (o, n) in out.f.iter_mut().zip(&nf).chain(out.h.iter_mut().zip(&nh)) {
            for (a, b) in o.iter_mut().zip(n) {
                *a += coef * b;
            }
        }
        out
    }

    fn continuity(&self, n0: &Spectrum, n1: &Spectrum, stage: &KineticState) -> f64 {
        let g = &self.grid;
        let dt = self.dt;
        let res: Spectrum = (0..g.len())
            .map(|i| {
                let k = g.k(i);
                let div_j: C = (0..3).map(|a| I * k[a] * stage.h[VELOCITY_MODES[a]][i] / self.eps).sum();
                (n1[i] - n0[i]) / dt + div_j
            })
            .collect();
        g.sobolev_sq(&res, 0).sqrt()
    }

    /// Advance one step of the current `dt`.
    pub fn step(&self, y: &KineticState) -> Result<(KineticState, StepInfo)> {
        let dt = self.dt;
        let mut info = StepInfo::default();
        let mut out = match self.opts.integrator {
            Integrator::Midpoint => {
                let mut z = if self.has_nonlinear() {
                    self.solve_linear(&self.with_nonlinear(y, y, 0.5 * dt))
                } else {
                    self.solve_linear(y)
                };
                if self.has_nonlinear() {
                    for it in 1..=self.opts.max_fixed_point_iters {
                        let next = self.solve_linear(&self.with_nonlinear(y, &z, 0.5 * dt));
                        let (diff, scale) = max_abs_diff(&next, &z);
                        z = next;
                        info.iterations = it;
                        if diff <= self.opts.fixed_point_tol * (1.0 + scale) {
                            break;
                        }
                    }
                }
                let y1 = lin_comb(2.0, &z, -1.0, y);
                info.continuity_residual = self.continuity(&y.h[0], &y1.h[0], &z);
                y1
            }
            Integrator::Imex => {
                let ys = self.solve_linear(y);
                info.continuity_residual = self.continuity(&y.h[0], &ys.h[0], &ys);
                if self.has_nonlinear() {
                    let y1 = self.with_nonlinear(&ys, &ys, dt);
                    let y2 = self.with_nonlinear(&y1, &y1, dt);
                    lin_comb(0.5, &ys, 0.5, &y2)
                } else {
                    ys
                }
            }
        };
        out.t = y.t + dt;
        out.eps = y.eps;
        if let Some(field) = out.is_finite() {
            return Err(Error::NonFinite { field, t: out.t });
        }
        Ok((out, info))
    }

    /// Replace the longitudinal part of `E` so that `eps div E = n` exactly.
    pub fn project_gauss(&self, s: &mut KineticState) {
        let g = &self.grid;
        for i in 1..g.len() {
            let k = g.k(i);
            let k2 = g.k2(i);
            let div: C = (0..3).map(|a| I * k[a] * s.e[a][i]).sum();
            let phi = (s.h[0][i] / self.eps - div) / (I * k2);
            for a in 0..3 {
                s.e[a][i] += k[a] * phi;
            }
        }
    }

    /// Take `n_steps` steps, recording diagnostics at the start, every
    /// `diag_every` steps and at the end.
    pub fn run_steps(
        &self,
        state: &KineticState,
        n_steps: usize,
        diag_every: usize,
        keep_samples: bool,
    ) -> Result<RunOutput> {
        let t0 = state.t;
        let mut cur = state.clone();
        let mut records = vec![self.diagnostics(&cur, 0, 0.0)];
        let mut samples = if keep_samples { vec![cur.clone()] } else { Vec::new() };
        let mut worst_continuity = 0.0f64;
        for k in 1..=n_steps {
            let t = cur.t;
            let (next, info) = self.step(&cur).map_err(|e| e.at_time(t))?;
            cur = next;
            cur.t = t0 + k as f64 * self.dt;
            let every = self.opts.gauss_projection_every;
            if every > 0 && k % every == 0 {
                self.project_gauss(&mut cur);
            }
            worst_continuity = worst_continuity.max(info.continuity_residual);
            if (diag_every > 0 && k % diag_every == 0) || k == n_steps {
                records.push(self.diagnostics(&cur, k, worst_continuity));
                worst_continuity = 0.0;
                if keep_samples {
                    samples.push(cur.clone());
                }
            }
        }
        Ok(RunOutput { final_state: cur, records, samples })
    }

    /// Integrate to `t_end` with `n_samples` equally spaced records after the
    /// initial one; `dt` is reduced so the record times fall on steps.
    pub fn run_to(
        &mut self,
        state: &KineticState,
        t_end: f64,
        n_samples: usize,
        keep_samples: bool,
    ) -> Result<RunOutput> {
        let span = t_end - state.t;
        if !(span > 0.0) || n_samples == 0 {
            return Err(Error::InvalidInput("run needs t_end > t and n_samples > 0".into()));
        }
        let per_sample = ((span / n_samples as f64) / self.dt_max() - 1e-9).ceil().max(1.0) as usize;
        self.set_dt(span / (per_sample * n_samples) as f64)?;
        self.run_steps(state, per_sample * n_samples, per_sample, keep_samples)
    }

    /// Right-hand side, evaluated without the per-mode matrices.
    pub fn rhs(&self, s: &KineticState) -> RhsSplit {
        let g = &self.grid;
        let basis = self.basis();
        let eps = self.eps;
        let o = &self.opts;
        let zero = || {
            let mut z = KineticState::zeros(g, basis, eps);
            z.t = s.t;
            z
        };

        let mut collision = zero();
        if o.linear_collisions {
            let c = -1.0 / (eps * eps);
            let lm = self.backend.matrix(Operator::Hydro);
            let lsm = self.backend.matrix(Operator::Charge);
            let apply = |mat: &DMatrix<f64>, src: &[f64], dst: &mut [f64]| {
                let r = mat * DVector::from_column_slice(src);
                dst.iter_mut().zip(r.iter()).for_each(|(d, x)| *d = c * x);
            };
            collision.f = velocity_map(&s.f, |src, dst| apply(lm, src, dst));
            collision.h = velocity_map(&s.h, |src, dst| apply(lsm, src, dst));
        }

        let mut maxwell = zero();
        let curl_b = g.curl(&s.b);
        let curl_e = g.curl(&s.e);
        for a in 0..3 {
            let m = VELOCITY_MODES[a];
            for i in 0..g.len() {
                let mut de = curl_b[a][i] / eps;
                if o.field_coupling {
                    de -= s.h[m][i] / (eps * eps);
                    maxwell.h[m][i] = s.e[a][i] / eps;
                }
                maxwell.e[a][i] = de;
                maxwell.b[a][i] = -curl_e[a][i];
            }
        }

        let mut nonstiff = zero();
        let (nf, nh) = self.nonlinear(s);
        let tf = self.transport(&s.f);
        let th = self.transport(&s.h);
        for m in 0..basis.len() {
            for i in 0..g.len() {
                nonstiff.f[m][i] = tf[m][i] + nf[m][i];
                nonstiff.h[m][i] = th[m][i] + nh[m][i];
            }
        }
        RhsSplit { collision, maxwell, nonstiff }
    }

    /// `-(1/eps) v.grad g` through the ladder operators.
    pub fn transport(&self, src: &[Spectrum]) -> Vec<Spectrum> {
        let g = &self.grid;
        let basis = self.basis();
        let nm = basis.len();
        let mut out = vec![g.zeros(); nm];
        let mut re = vec![0.0; nm];
        let mut im = vec![0.0; nm];
        for i in 0..g.len() {
            let k = g.k(i);
            if k == [0.0; 3] {
                continue;
            }
            let col_re: Vec<f64> = src.iter().map(|w| w[i].re).collect();
            let col_im: Vec<f64> = src.iter().map(|w| w[i].im).collect();
            re.iter_mut().for_each(|x| *x = 0.0);
            im.iter_mut().for_each(|x| *x = 0.0);
            for a in 0..3 {
                if k[a] != 0.0 {
                    basis.mul_v_add(a, &col_re, k[a], &mut re);
                    basis.mul_v_add(a, &col_im, k[a], &mut im);
                }
            }
            // -(i/eps)(re + i im)
            for m in 0..nm {
                out[m][i] = C::new(im[m], -re[m]) / self.eps;
            }
        }
        out
    }
}
