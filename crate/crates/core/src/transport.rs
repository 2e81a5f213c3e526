//! Limiting transport coefficients from the cell problems
//! `L A_hat = A`, `L B_hat = B`, `Ls v_tilde = v`, with
//! `A = v (x) v - |v|^2/3 I` and `B = v (|v|^2 - 5)/2`.

use serde::{Deserialize, Serialize};

use crate::collision::{CollisionBackend, Operator};
use crate::error::{Error, Result};
use crate::velocity::{VelocityBasis, VelocityFunction};

/// Kernel moments of the source terms must vanish to this level.
pub const SOURCE_MOMENT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportCoefficients {
    /// `(1/15) sum_ij <A_ij, A_hat_ij>`.
    pub nu: f64,
    /// `(2/15) sum_i <B_i, B_hat_i>`.
    pub kappa: f64,
    /// `(1/3) sum_i <v_tilde_i, v_i>`.
    pub sigma: f64,
    #[serde(skip)]
    pub a_hat: Vec<Vec<VelocityFunction>>,
    #[serde(skip)]
    pub b_hat: Vec<VelocityFunction>,
    #[serde(skip)]
    pub v_tilde: Vec<VelocityFunction>,
}

impl TransportCoefficients {
    /// Viscosity seen by the limiting momentum equation:
    /// `(1/10) sum_ij <A_ij, A_hat_ij>`, i.e. `1.5 * nu`.
    pub fn nu_limit(&self) -> f64 {
        1.5 * self.nu
    }

    /// Constant coefficients with no cell solutions attached.
    pub fn constant(nu: f64, kappa: f64, sigma: f64) -> Self {
        TransportCoefficients { nu, kappa, sigma, a_hat: Vec::new(), b_hat: Vec::new(), v_tilde: Vec::new() }
    }
}

pub fn source_a(basis: &VelocityBasis, i: usize, j: usize) -> VelocityFunction {
    basis.project_fn(move |v| {
        let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        v[i] * v[j] - if i == j { r2 / 3.0 } else { 0.0 }
    })
}

pub fn source_b(basis: &VelocityBasis, i: usize) -> VelocityFunction {
    basis.project_fn(move |v| {
        let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        v[i] * (r2 - 5.0) / 2.0
    })
}

fn dot(a: &VelocityFunction, b: &VelocityFunction) -> f64 {
    a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x * y).sum()
}

fn check_source(basis: &VelocityBasis, op: Operator, src: &VelocityFunction, name: &str) -> Result<()> {
    let residual = match op {
        Operator::Hydro => basis.hydro_residual(&src.coeffs),
        Operator::Charge => src.coeffs[0].abs(),
    };
    if residual > SOURCE_MOMENT_TOLERANCE {
        return Err(Error::Assembly(format!("source {name} has kernel moment {residual:.3e}")));
    }
    Ok(())
}

pub fn compute_coefficients(backend: &CollisionBackend) -> Result<TransportCoefficients> {
    let basis = backend.basis();
    let mut a_hat: Vec<Vec<VelocityFunction>> = (0..3).map(|_| Vec::with_capacity(3)).collect();
    let mut nu = 0.0;
    for (i, row) in a_hat.iter_mut().enumerate() {
        for j in 0..3 {
            let a = source_a(basis, i, j);
            check_source(basis, Operator::Hydro, &a, "A")?;
            let x = backend.solve_on_orthogonal(Operator::Hydro, &a)?;
            nu += dot(&a, &x);
            row.push(x);
        }
    }
    nu /= 15.0;

    let scale = 1.0 + a_hat.iter().flatten().map(|x| x.max_abs()).fold(0.0, f64::max);
    let mut trace = basis.zeros();
    let mut asym = 0.0f64;
    for i in 0..3 {
        trace = trace.add(&a_hat[i][i]);
        for j in 0..3 {
            asym = asym.max(a_hat[i][j].sub(&a_hat[j][i]).max_abs());
        }
    }
    if asym > 1e-10 * scale || trace.max_abs() > 1e-10 * scale {
        return Err(Error::Assembly(format!(
            "viscous cell solution not symmetric traceless (asym {asym:.2e}, trace {:.2e})",
            trace.max_abs()
        )));
    }

    let mut b_hat = Vec::with_capacity(3);
    let mut kappa = 0.0;
    for i in 0..3 {
        let b = source_b(basis, i);
        check_source(basis, Operator::Hydro, &b, "B")?;
        let x = backend.solve_on_orthogonal(Operator::Hydro, &b)?;
        kappa += dot(&b, &x);
        b_hat.push(x);
    }
    kappa *= 2.0 / 15.0;

    let mut v_tilde = Vec::with_capacity(3);
    let mut sigma = 0.0;
    for i in 0..3 {
        let v = basis.velocity(i);
        check_source(basis, Operator::Charge, &v, "v")?;
        let x = backend.solve_on_orthogonal(Operator::Charge, &v)?;
        sigma += dot(&v, &x);
        v_tilde.push(x);
    }
    sigma /= 3.0;

    for (name, val) in [("nu", nu), ("kappa", kappa), ("sigma", sigma)] {
        if !(val > 0.0) {
            return Err(Error::Assembly(format!("{name} = {val} is not positive")));
        }
    }
    Ok(TransportCoefficients { nu, kappa, sigma, a_hat, b_hat, v_tilde })
}
