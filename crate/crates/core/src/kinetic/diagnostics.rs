use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::solver::{velocity_map, KineticSolver};
use super::state::KineticState;
use crate::grid::{Spectrum, VectorSpectrum};

type C = Complex64;

/// Global invariants (integrals over the torus).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Conserved {
    /// `int (u + eps E x B)`.
    pub momentum: [f64; 3],
    /// `int (theta + eps (eps |E|^2 + |B|^2) / 3)`.
    pub energy: f64,
    /// `int rho`.
    pub mass: f64,
    /// `int n`.
    pub charge: f64,
    /// `int B`.
    pub magnetic: [f64; 3],
}

impl Conserved {
    pub fn as_array(&self) -> [f64; 9] {
        [
            self.momentum[0],
            self.momentum[1],
            self.momentum[2],
            self.energy,
            self.mass,
            self.charge,
            self.magnetic[0],
            self.magnetic[1],
            self.magnetic[2],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub step: usize,
    pub conserved: Conserved,
    /// `||div B||_{L^2}`.
    pub div_b: f64,
    /// `||eps div E - n||_{L^2}`.
    pub gauss: f64,
    pub energy_h: f64,
    pub dissipation_d: f64,
    /// Largest discrete continuity residual since the previous record.
    pub continuity: f64,
    /// `eps^2 d_t jt + div <vt (x) v, h> - sigma E + j - eps <vt, N_h>`,
    /// `jt = (1/eps) <vt, h>`, in `L^2`.
    pub jtilde_residual: f64,
    /// Same identity with `-j` and `N_f` in place of `+j` and `N_h`.
    pub jtilde_residual_alt: f64,
}

impl KineticSolver {
    pub fn conserved(&self, s: &KineticState) -> Conserved {
        let g = &self.grid;
        let eps = self.eps;
        let u = s.u();
        let mut momentum = [0.0; 3];
        for a in 0..3 {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            let exb = g.inner(&s.e[b], &s.b[c]) - g.inner(&s.e[c], &s.b[b]);
            momentum[a] = g.integral(u[a]) + eps * exb;
        }
        let e2 = g.sobolev_sq_vec(&s.e, 0);
        let b2 = g.sobolev_sq_vec(&s.b, 0);
        Conserved {
            momentum,
            energy: g.integral(&s.theta(self.basis())) + eps * (eps * e2 + b2) / 3.0,
            mass: g.integral(s.rho()),
            charge: g.integral(s.n()),
            magnetic: [0, 1, 2].map(|a| g.integral(&s.b[a])),
        }
    }

    /// `(||div B||, ||eps div E - n||)`.
    pub fn constraint_residuals(&self, s: &KineticState) -> (f64, f64) {
        let g = &self.grid;
        let div_b = g.sobolev_sq(&g.div(&s.b), 0).sqrt();
        let gauss: Spectrum = g.div(&s.e).iter().zip(s.n()).map(|(d, n)| self.eps * d - n).collect();
        (div_b, g.sobolev_sq(&gauss, 0).sqrt())
    }

    fn sobolev_modes(&self, w: &[Spectrum], m: usize) -> f64 {
        w.iter().map(|s| self.grid.sobolev_sq(s, m)).sum()
    }

    // sum_k weight_m(k) g_k^H G g_k with G the Lambda Gram matrix
    fn lambda_sobolev(&self, w: &[Spectrum], m: usize) -> f64 {
        let g = &self.grid;
        let gram = self.basis().lambda_gram();
        let nm = w.len();
        let mut total = 0.0;
        for i in 0..g.len() {
            let re = nalgebra::DVector::from_fn(nm, |r, _| w[r][i].re);
            let im = nalgebra::DVector::from_fn(nm, |r, _| w[r][i].im);
            if re.iter().chain(im.iter()).all(|x| *x == 0.0) {
                continue;
            }
            let q = re.dot(&(gram * &re)) + im.dot(&(gram * &im));
            total += g.sobolev_weight(i, m) * q;
        }
        crate::grid::TORUS_VOLUME * total
    }

    fn grad_v(&self, w: &[Spectrum]) -> [Vec<Spectrum>; 3] {
        let basis = self.basis();
        [0, 1, 2].map(|a| velocity_map(w, |src, dst| basis.lower_add(a, src, 1.0, dst)))
    }

    /// `||(f, h, B, sqrt(eps) E)||^2_{H^s} + eps^2 ||(grad_v f, grad_v h)||^2_{H^{s-1}}`.
    pub fn energy_functional(&self, s: &KineticState) -> f64 {
        let g = &self.grid;
        let m = self.opts.sobolev_order;
        let mut total = self.sobolev_modes(&s.f, m)
            + self.sobolev_modes(&s.h, m)
            + g.sobolev_sq_vec(&s.b, m)
            + self.eps * g.sobolev_sq_vec(&s.e, m);
        if m >= 1 {
            for w in [&s.f, &s.h] {
                for d in self.grad_v(w) {
                    total += self.eps * self.eps * self.sobolev_modes(&d, m - 1);
                }
            }
        }
        total
    }

    /// `||(f, h)||^2_{H^s_Lambda} + ||(E, B)||^2_{H^{s-1}}
    ///  + (1/eps^2) ||(f_perp, h_perp)||^2_{H^s_{Lambda_x}} + (1/eps) ||n||^2_{H^{s-1}}`.
    pub fn dissipation_functional(&self, s: &KineticState) -> f64 {
        let g = &self.grid;
        let basis = self.basis();
        let m = self.opts.sobolev_order;
        let eps = self.eps;
        let mut total = 0.0;
        // mixed x/v derivatives, |alpha| + |beta| <= m
        for w in [&s.f, &s.h] {
            let mut level = vec![w.clone()];
            for order in 0..=m {
                for d in &level {
                    total += self.lambda_sobolev(d, m - order);
                }
                if order < m {
                    level = level.iter().flat_map(|d| self.grad_v(d)).collect();
                }
            }
        }
        let lower = m.saturating_sub(1);
        total += g.sobolev_sq_vec(&s.e, lower) + g.sobolev_sq_vec(&s.b, lower);
        let f_perp = velocity_map(&s.f, |src, dst| {
            dst.copy_from_slice(src);
            for k in basis.hydro_kernel() {
                let c: f64 = k.iter().zip(src).map(|(a, b)| a * b).sum();
                dst.iter_mut().zip(k).for_each(|(d, x)| *d -= c * x);
            }
        });
        let mut h_perp = s.h.clone();
        h_perp[0] = g.zeros();
        total += (self.lambda_sobolev(&f_perp, m) + self.lambda_sobolev(&h_perp, m)) / (eps * eps);
        total += g.sobolev_sq(s.n(), lower) / eps;
        total
    }

    /// Residuals of the `v_tilde` moment identity in both sign conventions.
    pub fn jtilde_residuals(&self, s: &KineticState) -> (f64, f64) {
        let g = &self.grid;
        let basis = self.basis();
        let eps = self.eps;
        let dh = self.rhs(s).total().h;
        let (nf, nh) = self.nonlinear(s);
        let pair = |vt: &[f64], w: &[Spectrum]| -> Spectrum {
            let mut out = g.zeros();
            for (m, c) in vt.iter().enumerate() {
                if *c != 0.0 {
                    out.iter_mut().zip(&w[m]).for_each(|(o, z)| *o += c * z);
                }
            }
            out
        };
        let j = s.j();
        let mut re: VectorSpectrum = g.zeros_vec();
        let mut alt: VectorSpectrum = g.zeros_vec();
        for a in 0..3 {
            let vt = &self.v_tilde[a];
            let dt_jt = pair(vt, &dh);
            let mut flux = g.zeros();
            for b in 0..3 {
                let mut vtv = vec![0.0; basis.len()];
                basis.mul_v_add(b, vt, 1.0, &mut vtv);
                let moment = pair(&vtv, &s.h);
                let d = g.derivative(&moment, b);
                flux.iter_mut().zip(&d).for_each(|(o, z)| *o += z);
            }
            let src_h = pair(vt, &nh);
            let src_f = pair(vt, &nf);
            for i in 0..g.len() {
                let common: C = eps * dt_jt[i] + flux[i] - self.sigma * s.e[a][i];
                re[a][i] = common + j[a][i] - eps * src_h[i];
                alt[a][i] = common - j[a][i] - eps * src_f[i];
            }
        }
        (g.sobolev_sq_vec(&re, 0).sqrt(), g.sobolev_sq_vec(&alt, 0).sqrt())
    }

    pub fn diagnostics(&self, s: &KineticState, step: usize, continuity: f64) -> DiagnosticsRecord {
        let (div_b, gauss) = self.constraint_residuals(s);
        let (jt, jt_alt) = self.jtilde_residuals(s);
        DiagnosticsRecord {
            t: s.t,
            step,
            conserved: self.conserved(s),
            div_b,
            gauss,
            energy_h: self.energy_functional(s),
            dissipation_d: self.dissipation_functional(s),
            continuity,
            jtilde_residual: jt,
            jtilde_residual_alt: jt_alt,
        }
    }
}
