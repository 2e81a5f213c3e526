use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, Spectrum, VectorSpectrum};
use crate::mhd::FluidState;
use crate::velocity::{VelocityBasis, VELOCITY_MODES};

/// Spectral kinetic state. `f[m]` and `h[m]` are the Fourier spectra of
/// velocity mode `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    pub t: f64,
    pub eps: f64,
    pub f: Vec<Spectrum>,
    pub h: Vec<Spectrum>,
    pub e: VectorSpectrum,
    pub b: VectorSpectrum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitKind {
    /// Data in the hydrodynamic kernel with `rho = -theta`, `h = 0`, `E = 0`.
    WellPrepared,
    /// Well-prepared data plus a microscopic perturbation of the given size.
    General { amplitude: f64, seed: u64 },
}

impl KineticState {
    pub fn zeros(grid: &SpatialGrid, basis: &VelocityBasis, eps: f64) -> Self {
        KineticState {
            t: 0.0,
            eps,
            f: vec![grid.zeros(); basis.len()],
            h: vec![grid.zeros(); basis.len()],
            e: grid.zeros_vec(),
            b: grid.zeros_vec(),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.f.len()
    }

    pub fn rho(&self) -> &Spectrum {
        &self.f[0]
    }

    pub fn u(&self) -> [&Spectrum; 3] {
        VELOCITY_MODES.map(|m| &self.f[m])
    }

    /// `theta = <f, (|v|^2 - 3)/3>`.
    pub fn theta(&self, basis: &VelocityBasis) -> Spectrum {
        let e4 = &basis.hydro_kernel()[4];
        let c = 6f64.sqrt() / 3.0;
        let mut out = vec![Complex64::new(0.0, 0.0); self.f[0].len()];
        for (m, w) in e4.iter().enumerate() {
            if *w != 0.0 {
                for (o, z) in out.iter_mut().zip(&self.f[m]) {
                    *o += c * w * z;
                }
            }
        }
        out
    }

    pub fn n(&self) -> &Spectrum {
        &self.h[0]
    }

    /// `j = (1/eps) <h, v>`.
    pub fn j(&self) -> VectorSpectrum {
        VELOCITY_MODES.map(|m| self.h[m].iter().map(|z| z / self.eps).collect())
    }

    pub fn is_finite(&self) -> Option<&'static str> {
        let bad = |w: &[Complex64]| w.iter().any(|c| !c.re.is_finite() || !c.im.is_finite());
        if self.f.iter().any(|w| bad(w)) {
            Some("f")
        } else if self.h.iter().any(|w| bad(w)) {
            Some("h")
        } else if self.e.iter().any(|w| bad(w)) {
            Some("E")
        } else if self.b.iter().any(|w| bad(w)) {
            Some("B")
        } else {
            None
        }
    }
}

/// Kinetic initial data `f = rho + u.v + ((|v|^2 - 3)/2) theta` with
/// `rho = -theta`, `h = 0`, `E = 0` and the given `B`.
pub fn init_state(
    kind: InitKind,
    fluid: &FluidState,
    eps: f64,
    grid: &SpatialGrid,
    basis: &VelocityBasis,
) -> Result<KineticState> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidInput(format!("eps must lie in (0, 1], got {eps}")));
    }
    fluid.check_admissible(grid)?;
    let mut s = KineticState::zeros(grid, basis, eps);
    s.t = fluid.t;
    let band = |w: &Spectrum| {
        let mut w = w.clone();
        grid.dealias(&mut w);
        w
    };
    let theta = band(&fluid.theta);
    s.f[0] = theta.iter().map(|z| -z).collect();
    for a in 0..3 {
        s.f[VELOCITY_MODES[a]] = band(&fluid.u[a]);
        s.b[a] = band(&fluid.b[a]);
    }
    let energy = basis.energy_mode();
    for (m, w) in energy.coeffs.iter().enumerate() {
        if *w != 0.0 {
            for (o, z) in s.f[m].iter_mut().zip(&theta) {
                *o += w * z;
            }
        }
    }
    if let InitKind::General { amplitude, seed } = kind {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nm = basis.len();
        let mut micro = |charge: bool| {
            let mut w: Vec<f64> = (0..nm).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if charge {
                w[0] = 0.0;
            } else {
                for k in basis.hydro_kernel() {
                    let c: f64 = k.iter().zip(&w).map(|(a, b)| a * b).sum();
                    w.iter_mut().zip(k).for_each(|(x, y)| *x -= c * y);
                }
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            w.iter().map(|x| amplitude * x / norm).collect::<Vec<f64>>()
        };
        let wf = micro(false);
        let wh = micro(true);
        let axis = (0..3).find(|&a| grid.shape()[a] > 1).unwrap_or(0);
        let profile = band(&grid.from_fn(|x| x[axis].cos()));
        for m in 0..nm {
            for (i, p) in profile.iter().enumerate() {
                s.f[m][i] += wf[m] * p;
                s.h[m][i] += wh[m] * p;
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (SpatialGrid, VelocityBasis) {
        (SpatialGrid::new([16, 1, 1]).unwrap(), VelocityBasis::new(4, 6).unwrap())
    }

    #[test]
    fn zero_data_gives_zero_state() {
        let (g, b) = setup();
        let s = init_state(InitKind::WellPrepared, &FluidState::zeros(&g), 0.3, &g, &b).unwrap();
        assert_eq!(s, KineticState::zeros(&g, &b, 0.3));
    }

    #[test]
    fn single_velocity_mode() {
        let (g, b) = setup();
        let fluid = FluidState::from_fn(&g, |x| [0.0, 0.0, (2.0 * x[0]).sin()], |_| 0.0, |_| [0.0; 3]);
        let s = init_state(InitKind::WellPrepared, &fluid, 0.5, &g, &b).unwrap();
        for m in 0..b.len() {
            let want = if m == 3 { fluid.u[2].clone() } else { g.zeros() };
            assert_eq!(s.f[m], want);
            assert!(s.h[m].iter().all(|z| z.norm() == 0.0));
        }
        let gauss: Spectrum = g.div(&s.e).iter().zip(s.n()).map(|(d, n)| 0.5 * d - n).collect();
        assert!(gauss.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn moments_reproduce_fluid_data() {
        let (g, b) = setup();
        let fluid = FluidState::from_fn(
            &g,
            |x| [0.0, x[0].sin(), 0.3 * x[0].cos()],
            |x| 0.2 * (3.0 * x[0]).cos(),
            |x| [0.0, 0.1 * x[0].sin(), 0.0],
        );
        let s = init_state(InitKind::WellPrepared, &fluid, 0.1, &g, &b).unwrap();
        let theta = s.theta(&b);
        for i in 0..g.len() {
            assert!((theta[i] - fluid.theta[i]).norm() < 1e-15);
            assert!((s.rho()[i] + fluid.theta[i]).norm() < 1e-15);
        }
        assert_eq!(g.integral(s.rho()), -g.integral(&fluid.theta));
        assert_eq!(g.integral(s.n()), 0.0);
        let general = init_state(InitKind::General { amplitude: 0.1, seed: 3 }, &fluid, 0.1, &g, &b).unwrap();
        assert!((g.integral(general.rho()) - g.integral(s.rho())).abs() < 1e-15);
        assert!(g.integral(general.n()).abs() < 1e-15);
        let d: Vec<f64> = (0..b.len()).map(|m| (general.f[m][1] - s.f[m][1]).re).collect();
        assert!(b.hydro_residual(&d) < 1e-15 && d.iter().any(|x| x.abs() > 1e-3));
    }

    #[test]
    fn rejects_inadmissible_data() {
        let (g, b) = setup();
        let fluid = FluidState::from_fn(&g, |x| [x[0].sin(), 0.0, 0.0], |_| 0.0, |_| [0.0; 3]);
        assert!(matches!(
            init_state(InitKind::WellPrepared, &fluid, 0.5, &g, &b),
            Err(Error::NonSolenoidal { field: "u", .. })
        ));
        let fluid = FluidState::from_fn(&g, |_| [0.0; 3], |_| 0.0, |x| [x[0].cos(), 0.0, 0.0]);
        assert!(matches!(
            init_state(InitKind::WellPrepared, &fluid, 0.5, &g, &b),
            Err(Error::NonSolenoidal { field: "B", .. })
        ));
        assert!(init_state(InitKind::WellPrepared, &FluidState::zeros(&g), 1.5, &g, &b).is_err());
    }
}
