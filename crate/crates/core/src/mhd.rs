//! Pseudo-spectral solver for incompressible resistive MHD on the torus:
//!
//! ```text
//! d_t u + u.grad u - nu lap u + grad P = (curl B) x B,   div u = 0
//! d_t theta + u.grad theta - kappa lap theta = 0
//! d_t B - (1/sigma) lap B = curl (u x B),                div B = 0
//! ```
//!
//! Diffusion is integrated exactly (integrating factor), the nonlinear terms
//! with SSP-RK2, and the pressure is removed by Leray projection.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, Spectrum, VectorSpectrum};

/// Residual above which a field counts as not divergence-free or not mean-zero.
pub const SOLENOIDAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MhdCoefficients {
    pub nu: f64,
    pub kappa: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub t: f64,
    pub u: VectorSpectrum,
    pub theta: Spectrum,
    pub b: VectorSpectrum,
}

impl FluidState {
    pub fn zeros(grid: &SpatialGrid) -> Self {
        FluidState { t: 0.0, u: grid.zeros_vec(), theta: grid.zeros(), b: grid.zeros_vec() }
    }

    /// Sample the fields and keep the dealiased band.
    pub fn from_fn(
        grid: &SpatialGrid,
        u: impl Fn([f64; 3]) -> [f64; 3],
        theta: impl Fn([f64; 3]) -> f64,
        b: impl Fn([f64; 3]) -> [f64; 3],
    ) -> Self {
        let mut s = FluidState {
            t: 0.0,
            u: [0, 1, 2].map(|a| grid.from_fn(|x| u(x)[a])),
            theta: grid.from_fn(&theta),
            b: [0, 1, 2].map(|a| grid.from_fn(|x| b(x)[a])),
        };
        for f in s.u.iter_mut().chain(s.b.iter_mut()).chain(std::iter::once(&mut s.theta)) {
            grid.dealias(f);
        }
        s
    }

    /// Density recovered from the Boussinesq relation `rho + theta = 0`.
    pub fn rho(&self) -> Spectrum {
        self.theta.iter().map(|c| -c).collect()
    }

    /// Check `div u = div B = 0` and zero means of `u`, `theta`, `B`.
    pub fn check_admissible(&self, grid: &SpatialGrid) -> Result<()> {
        for (name, w) in [("u", &self.u), ("B", &self.b)] {
            let residual = grid.sobolev_sq(&grid.div(w), 0).sqrt();
            if residual > SOLENOIDAL_TOLERANCE {
                return Err(Error::NonSolenoidal { field: name, residual });
            }
            let mean = w.iter().map(|s| s[0].norm()).fold(0.0, f64::max);
            if mean > SOLENOIDAL_TOLERANCE {
                return Err(Error::InvalidInput(format!("{name} must have zero mean (got {mean:.3e})")));
            }
        }
        if self.theta[0].norm() > SOLENOIDAL_TOLERANCE {
            return Err(Error::InvalidInput("theta must have zero mean".into()));
        }
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        let bad = |w: &[Complex64]| w.iter().any(|c| !c.re.is_finite() || !c.im.is_finite());
        if self.u.iter().any(|w| bad(w)) {
            return Err(Error::NonFinite { field: "u", t: self.t });
        }
        if bad(&self.theta) {
            return Err(Error::NonFinite { field: "theta", t: self.t });
        }
        if self.b.iter().any(|w| bad(w)) {
            return Err(Error::NonFinite { field: "B", t: self.t });
        }
        Ok(())
    }

    fn axpy(&self, a: f64, other: &FluidState) -> FluidState {
        let lin = |x: &[Complex64], y: &[Complex64]| -> Spectrum { x.iter().zip(y).map(|(p, q)| p + a * q).collect() };
        FluidState {
            t: self.t,
            u: [0, 1, 2].map(|i| lin(&self.u[i], &other.u[i])),
            theta: lin(&self.theta, &other.theta),
            b: [0, 1, 2].map(|i| lin(&self.b[i], &other.b[i])),
        }
    }
}

/// Divergence-free part of `w`; the mean mode is kept.
pub fn leray_project(grid: &SpatialGrid, w: &VectorSpectrum) -> VectorSpectrum {
    let mut out = w.clone();
    for i in 1..grid.len() {
        let k = grid.k(i);
        let k2 = grid.k2(i);
        let kw = k[0] * w[0][i] + k[1] * w[1][i] + k[2] * w[2][i];
        for a in 0..3 {
            out[a][i] -= k[a] * kw / k2;
        }
    }
    out
}

/// `0.5 (||u||^2 + ||B||^2)`.
pub fn energy(grid: &SpatialGrid, s: &FluidState) -> f64 {
    0.5 * (grid.sobolev_sq_vec(&s.u, 0) + grid.sobolev_sq_vec(&s.b, 0))
}

/// `nu ||grad u||^2 + (1/sigma) ||grad B||^2`.
pub fn dissipation(grid: &SpatialGrid, c: &MhdCoefficients, s: &FluidState) -> f64 {
    let grad_sq = |w: &VectorSpectrum| grid.sobolev_sq_vec(w, 1) - grid.sobolev_sq_vec(w, 0);
    c.nu * grad_sq(&s.u) + grad_sq(&s.b) / c.sigma
}

#[derive(Debug, Clone)]
pub struct MhdSolver {
    grid: SpatialGrid,
    coeffs: MhdCoefficients,
    c_cfl: f64,
}

impl MhdSolver {
    pub fn new(grid: SpatialGrid, coeffs: MhdCoefficients) -> Result<Self> {
        if !(coeffs.nu > 0.0 && coeffs.kappa > 0.0 && coeffs.sigma > 0.0) {
            return Err(Error::InvalidInput("MHD coefficients must be positive".into()));
        }
        Ok(MhdSolver { grid, coeffs, c_cfl: 1.0 })
    }

    pub fn with_cfl(mut self, c_cfl: f64) -> Self {
        self.c_cfl = c_cfl;
        self
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn coefficients(&self) -> &MhdCoefficients {
        &self.coeffs
    }

    /// Advective limit `c_cfl dx / max(|u|, |B|)`; infinite for quiescent data.
    pub fn cfl_limit(&self, s: &FluidState) -> f64 {
        let speed = |w: &VectorSpectrum| -> f64 {
            let r = w.each_ref().map(|c| self.grid.inverse_real(c));
            (0..self.grid.len())
                .map(|i| (r[0][i] * r[0][i] + r[1][i] * r[1][i] + r[2][i] * r[2][i]).sqrt())
                .fold(0.0, f64::max)
        };
        let vmax = speed(&s.u).max(speed(&s.b));
        if vmax == 0.0 {
            f64::INFINITY
        } else {
            self.c_cfl * self.grid.dx() / vmax
        }
    }

    /// Nonlinear tendencies `(P[-u.grad u + (curl B) x B], -u.grad theta, curl(u x B))`.
    pub fn nonlinear(&self, s: &FluidState) -> FluidState {
        let g = &self.grid;
        let n = g.len();
        let u = s.u.each_ref().map(|c| g.inverse_real(c));
        let b = s.b.each_ref().map(|c| g.inverse_real(c));
        let j = g.curl(&s.b).map(|c| g.inverse_real(&c));
        let grad_theta = g.grad(&s.theta).map(|c| g.inverse_real(&c));
        let mut adv = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for a in 0..3 {
            let du = g.grad(&s.u[a]).map(|c| g.inverse_real(&c));
            for x in 0..n {
                adv[a][x] = -(u[0][x] * du[0][x] + u[1][x] * du[1][x] + u[2][x] * du[2][x]);
            }
        }
        for x in 0..n {
            for a in 0..3 {
                let (p, q) = ((a + 1) % 3, (a + 2) % 3);
                adv[a][x] += j[p][x] * b[q][x] - j[q][x] * b[p][x];
            }
        }
        let to_spectrum = |v: &[f64]| {
            let mut s = g.forward_real(v);
            g.dealias(&mut s);
            s
        };
        let mom = leray_project(g, &adv.each_ref().map(|v| to_spectrum(v)));
        let heat: Vec<f64> = (0..n)
            .map(|x| -(u[0][x] * grad_theta[0][x] + u[1][x] * grad_theta[1][x] + u[2][x] * grad_theta[2][x]))
            .collect();
        let uxb: [Vec<f64>; 3] = [0, 1, 2].map(|a| {
            let (p, q) = ((a + 1) % 3, (a + 2) % 3);
            (0..n).map(|x| u[p][x] * b[q][x] - u[q][x] * b[p][x]).collect()
        });
        let induction = g.curl(&uxb.each_ref().map(|v| to_spectrum(v)));
        FluidState { t: s.t, u: mom, theta: to_spectrum(&heat), b: induction }
    }

    // Multiply every mode by its diffusion factor over `dt`.
    fn diffuse(&self, s: &FluidState, dt: f64) -> FluidState {
        let g = &self.grid;
        let c = &self.coeffs;
        let scale = |w: &[Complex64], rate: f64| -> Spectrum {
            w.iter().enumerate().map(|(i, z)| z * (-rate * g.k2(i) * dt).exp()).collect()
        };
        FluidState {
            t: s.t + dt,
            u: s.u.each_ref().map(|w| scale(w, c.nu)),
            theta: scale(&s.theta, c.kappa),
            b: s.b.each_ref().map(|w| scale(w, 1.0 / c.sigma)),
        }
    }

    /// One integrating-factor SSP-RK2 step.
    pub fn step(&self, s: &FluidState, dt: f64) -> Result<FluidState> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        let limit = self.cfl_limit(s);
        if dt > limit {
            return Err(Error::CflViolation { dt, limit });
        }
        let stage = self.diffuse(&s.axpy(dt, &self.nonlinear(s)), dt);
        let base = self.diffuse(s, dt);
        let second = stage.axpy(dt, &self.nonlinear(&stage));
        let mut out = base.axpy(1.0, &second);
        let half = |w: &mut Spectrum| w.iter_mut().for_each(|z| *z *= 0.5);
        out.u.iter_mut().for_each(half);
        out.b.iter_mut().for_each(half);
        half(&mut out.theta);
        out.t = s.t + dt;
        out.check_finite()?;
        Ok(out)
    }

    /// Integrate to `t_end` with steps no longer than `dt_max`, returning
    /// `n_samples + 1` equally spaced states (the first is the input).
    pub fn run(&self, s: &FluidState, t_end: f64, dt_max: f64, n_samples: usize) -> Result<Vec<FluidState>> {
        let span = t_end - s.t;
        if !(span >= 0.0) || n_samples == 0 || !(dt_max > 0.0) {
            return Err(Error::InvalidInput("run needs t_end >= t, dt_max > 0 and n_samples > 0".into()));
        }
        let per_sample = ((span / n_samples as f64) / dt_max - 1e-9).ceil().max(1.0) as usize;
        let dt = span / (per_sample * n_samples) as f64;
        let mut out = Vec::with_capacity(n_samples + 1);
        out.push(s.clone());
        let mut cur = s.clone();
        if span == 0.0 {
            out.extend(std::iter::repeat_n(s.clone(), n_samples));
            return Ok(out);
        }
        for k in 1..=n_samples {
            for _ in 0..per_sample {
                let t = cur.t;
                cur = self.step(&cur, dt).map_err(|e| e.at_time(t))?;
            }
            cur.t = s.t + span * k as f64 / n_samples as f64;
            out.push(cur.clone());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(nu: f64, kappa: f64, sigma: f64) -> MhdCoefficients {
        MhdCoefficients { nu, kappa, sigma }
    }

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()))
    }

    #[test]
    fn leray_examples() {
        let g = SpatialGrid::new([16, 16, 8]).unwrap();
        let phi = g.from_fn(|x| (x[0] - x[1]).sin() + (2.0 * x[2]).cos() * x[1].cos());
        let mut w = g.grad(&phi);
        w[0][0] = Complex64::new(0.3, 0.0);
        let p = leray_project(&g, &w);
        assert!((p[0][0] - Complex64::new(0.3, 0.0)).norm() < 1e-15);
        assert!(p.iter().flat_map(|s| s.iter().skip(1)).all(|z| z.norm() < 1e-14));

        let shear = [g.from_fn(|x| x[1].sin()), g.zeros(), g.zeros()];
        let p = leray_project(&g, &shear);
        assert!(max_diff(&p[0], &shear[0]) < 1e-15 && p[1].iter().all(|z| z.norm() == 0.0));

        let sol = g.curl(&[g.from_fn(|x| (x[1] + x[2]).cos()), g.from_fn(|x| x[0].sin() * x[2].cos()), g.zeros()]);
        let p = leray_project(&g, &sol);
        for a in 0..3 {
            assert!(max_diff(&p[a], &sol[a]) < 1e-14);
        }
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = SpatialGrid::new([16, 1, 1]).unwrap();
        let solver = MhdSolver::new(g.clone(), c(1.0, 1.0, 1.0)).unwrap();
        let traj = solver.run(&FluidState::zeros(&g), 1.0, 0.1, 4).unwrap();
        assert_eq!(traj.len(), 5);
        assert!(traj.iter().all(|s| energy(&g, s) == 0.0 && s.theta.iter().all(|z| z.norm() == 0.0)));
    }

    #[test]
    fn magnetic_mode_decays_exactly() {
        let g = SpatialGrid::new([16, 16, 1]).unwrap();
        let sigma = 0.7;
        let solver = MhdSolver::new(g.clone(), c(1.0, 1.0, sigma)).unwrap();
        let s0 = FluidState::from_fn(&g, |_| [0.0; 3], |_| 0.0, |x| [0.0, 0.0, (x[0] + x[1]).cos()]);
        // one diffusion time sigma / |k|^2
        let t_end = sigma / 2.0;
        let traj = solver.run(&s0, t_end, 0.01, 1).unwrap();
        let want: Spectrum = s0.b[2].iter().map(|z| z * (-2.0 * t_end / sigma).exp()).collect();
        assert!(max_diff(&traj[1].b[2], &want) < 1e-6);
    }

    #[test]
    fn heat_kernel_multiplier() {
        let g = SpatialGrid::new([16, 1, 1]).unwrap();
        let solver = MhdSolver::new(g.clone(), c(1.0, 0.4, 1.0)).unwrap();
        let s0 = FluidState::from_fn(&g, |_| [0.0; 3], |x| x[0].sin() + 0.5 * (3.0 * x[0]).cos(), |_| [0.0; 3]);
        let s1 = solver.run(&s0, 0.8, 0.05, 1).unwrap().pop().unwrap();
        let want: Spectrum = s0.theta.iter().enumerate().map(|(i, z)| z * (-0.4 * g.k2(i) * 0.8).exp()).collect();
        assert!(max_diff(&s1.theta, &want) < 1e-13);
    }

    #[test]
    fn shear_flow_decays_viscously() {
        let g = SpatialGrid::new([32, 1, 1]).unwrap();
        let nu = 1.0;
        let solver = MhdSolver::new(g.clone(), c(nu, 1.0, 1.0)).unwrap();
        let s0 = FluidState::from_fn(&g, |x| [0.0, 0.5 * x[0].sin(), 0.0], |_| 0.0, |_| [0.0; 3]);
        let traj = solver.run(&s0, 1.0, 0.01, 10).unwrap();
        for s in &traj {
            let want: Spectrum = s0.u[1].iter().map(|z| z * (-nu * s.t).exp()).collect();
            assert!(max_diff(&s.u[1], &want) < 1e-6);
        }
    }

    fn random_state(g: &SpatialGrid, seed: u64, amp: f64) -> FluidState {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut pot = || {
            let mut s = g.zeros();
            for (i, z) in s.iter_mut().enumerate() {
                let k2 = g.k2(i);
                if i > 0 && k2 <= 9.0 {
                    *z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * amp / (1.0 + k2);
                }
            }
            // Hermitian symmetry
            let real = g.inverse_real(&s);
            let mut s = g.forward_real(&real);
            g.dealias(&mut s);
            s
        };
        let a = [pot(), pot(), pot()];
        let p = [pot(), pot(), pot()];
        FluidState { t: 0.0, u: g.curl(&a), theta: pot(), b: g.curl(&p) }
    }

    #[test]
    fn invariants_preserved() {
        let g = SpatialGrid::new([16, 16, 1]).unwrap();
        let solver = MhdSolver::new(g.clone(), c(0.1, 0.1, 5.0)).unwrap();
        let mut s = random_state(&g, 4, 1.0);
        s.theta[0] = Complex64::new(0.25, 0.0);
        for _ in 0..50 {
            s = solver.step(&s, 0.01).unwrap();
            assert!(g.sobolev_sq(&g.div(&s.u), 0).sqrt() < 1e-12);
            assert!(g.sobolev_sq(&g.div(&s.b), 0).sqrt() < 1e-12);
        }
        assert_eq!(s.theta[0], Complex64::new(0.25, 0.0));
        assert!(s.b.iter().all(|w| w[0].norm() == 0.0));
    }

    #[test]
    fn energy_law_defect_is_second_order() {
        let g = SpatialGrid::new([16, 16, 1]).unwrap();
        let coeffs = c(0.05, 0.05, 10.0);
        let solver = MhdSolver::new(g.clone(), coeffs).unwrap();
        let s0 = random_state(&g, 9, 1.0);
        let defect = |dt: f64| {
            let s1 = solver.step(&s0, dt).unwrap();
            let rate = (energy(&g, &s1) - energy(&g, &s0)) / dt;
            let budget = 0.5 * (dissipation(&g, &coeffs, &s0) + dissipation(&g, &coeffs, &s1));
            (rate + budget).abs()
        };
        let (d1, d2) = (defect(0.01), defect(0.005));
        assert!(d1 / d2 > 3.0, "{d1} {d2}");
    }

    #[test]
    fn second_order_in_time() {
        let g = SpatialGrid::new([16, 16, 1]).unwrap();
        let solver = MhdSolver::new(g.clone(), c(0.05, 0.05, 10.0)).unwrap();
        let s0 = random_state(&g, 5, 1.0);
        let end = |dt: f64| solver.run(&s0, 0.4, dt, 1).unwrap().pop().unwrap();
        let reference = end(0.4 / 512.0);
        let err = |dt: f64| {
            let s = end(dt);
            let d: VectorSpectrum = [0, 1, 2].map(|a| s.u[a].iter().zip(&reference.u[a]).map(|(x, y)| x - y).collect());
            g.sobolev_sq_vec(&d, 0).sqrt()
        };
        let (e1, e2, e3) = (err(0.4 / 16.0), err(0.4 / 32.0), err(0.4 / 64.0));
        let p1 = (e1 / e2).log2();
        let p2 = (e2 / e3).log2();
        assert!(p1 > 1.8 && p2 > 1.8, "{p1} {p2}");
    }

    #[test]
    fn rejects_cfl_violations() {
        let g = SpatialGrid::new([16, 1, 1]).unwrap();
        let solver = MhdSolver::new(g.clone(), c(1.0, 1.0, 1.0)).unwrap();
        let s0 = FluidState::from_fn(&g, |x| [0.0, 10.0 * x[0].sin(), 0.0], |_| 0.0, |_| [0.0; 3]);
        assert!(matches!(solver.step(&s0, 1.0), Err(Error::CflViolation { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn energy_never_grows(seed in 0u64..1_000_000) {
            let g = SpatialGrid::new([8, 8, 1]).unwrap();
            let coeffs = c(0.1, 0.1, 5.0);
            let solver = MhdSolver::new(g.clone(), coeffs).unwrap();
            let mut s = random_state(&g, seed, 0.1);
            let mut e = energy(&g, &s);
            for _ in 0..10 {
                s = solver.step(&s, 0.02).unwrap();
                let e1 = energy(&g, &s);
                prop_assert!(e1 <= e * (1.0 + 1e-12));
                e = e1;
            }
        }
    }
}
