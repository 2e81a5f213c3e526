//! Maxwellian-weighted velocity discretisation.
//!
//! Functions of `v in R^3` are expanded in tensor Hermite polynomials that are
//! orthonormal under the standard Maxwellian `M(v) = (2 pi)^{-3/2} e^{-|v|^2/2}`,
//! truncated by total degree. In this basis multiplication by `v_i` and the
//! derivative `d/dv_i` are exact sparse ladder operators, and the
//! `M`-weighted inner product is the Euclidean one on coefficients.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_hermite, gauss_radial_maxwell, Rule, SphereRule};

/// Dimension of the hydrodynamic kernel span{1, v1, v2, v3, (|v|^2-3)/2}.
pub const HYDRO_KERNEL_DIM: usize = 5;

/// Flat indices of `v1, v2, v3` (degree-one modes are stored right after the constant).
pub const VELOCITY_MODES: [usize; 3] = [1, 2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    /// `int f g M dv`
    Plain,
    /// `int f g (1 + |v|) M dv`
    Lambda,
}

/// One function of velocity, stored as coefficients in a [`VelocityBasis`].
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityFunction {
    pub coeffs: Vec<f64>,
}

impl VelocityFunction {
    pub fn zeros(len: usize) -> Self {
        Self { coeffs: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect() }
    }

    /// `L^2(M dv)` norm, by Parseval.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Hydrodynamic moments at one spatial point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HydroMoments {
    pub rho: f64,
    pub u: [f64; 3],
    pub theta: f64,
    pub n: f64,
    pub j: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct VelocityBasis {
    modes_per_axis: usize,
    degree: usize,
    modes: Vec<[usize; 3]>,
    cube: Vec<Option<usize>>,
    gh: Rule,
    // herm[n][q] = psi_n(x_q) and the same times the 1D weight.
    herm: Vec<Vec<f64>>,
    herm_w: Vec<Vec<f64>>,
    quad_nodes: Vec<[f64; 3]>,
    quad_weights: Vec<f64>,
    raise: [Vec<Option<(usize, f64)>>; 3],
    lower: [Vec<Option<(usize, f64)>>; 3],
    lambda_gram: DMatrix<f64>,
    kernel: Vec<Vec<f64>>,
}

/// Normalised 1D Hermite functions `psi_0..psi_{n-1}` at `x`
/// (`psi_k = He_k / sqrt(k!)`).
pub fn hermite_1d(n: usize, x: f64, out: &mut [f64]) {
    if n == 0 {
        return;
    }
    out[0] = 1.0;
    if n > 1 {
        out[1] = x;
    }
    for k in 1..n - 1 {
        out[k + 1] = (x * out[k] - (k as f64).sqrt() * out[k - 1]) / ((k + 1) as f64).sqrt();
    }
}

impl VelocityBasis {
    /// Build a basis with `modes_per_axis` Hermite modes per direction (total
    /// degree `<= modes_per_axis - 1`) and a tensor Gauss–Hermite rule with
    /// `quad_points_per_axis` nodes per direction.
    pub fn new(modes_per_axis: usize, quad_points_per_axis: usize) -> Result<Self> {
        if modes_per_axis < 4 {
            return Err(Error::InvalidBasis(format!(
                "modes_per_axis must be >= 4, got {modes_per_axis}"
            )));
        }
        if modes_per_axis > 16 {
            return Err(Error::InvalidBasis(format!(
                "modes_per_axis must be <= 16, got {modes_per_axis}"
            )));
        }
        if quad_points_per_axis < modes_per_axis {
            return Err(Error::InvalidBasis(format!(
                "quad_points_per_axis ({quad_points_per_axis}) must be >= modes_per_axis ({modes_per_axis})"
            )));
        }
        let degree = modes_per_axis - 1;
        let p = degree + 1;
        let mut modes = Vec::new();
        for d in 0..=degree {
            for i in (0..=d).rev() {
                for j in (0..=d - i).rev() {
                    modes.push([i, j, d - i - j]);
                }
            }
        }
        let mut cube = vec![None; p * p * p];
        for (idx, m) in modes.iter().enumerate() {
            cube[(m[0] * p + m[1]) * p + m[2]] = Some(idx);
        }
        let lookup = |m: [usize; 3]| -> Option<usize> {
            if m.iter().sum::<usize>() > degree {
                None
            } else {
                cube[(m[0] * p + m[1]) * p + m[2]]
            }
        };
        let mut raise: [Vec<Option<(usize, f64)>>; 3] = Default::default();
        let mut lower: [Vec<Option<(usize, f64)>>; 3] = Default::default();
        for a in 0..3 {
            for m in &modes {
                let mut up = *m;
                up[a] += 1;
                raise[a].push(lookup(up).map(|t| (t, ((m[a] + 1) as f64).sqrt())));
                lower[a].push(if m[a] == 0 {
                    None
                } else {
                    let mut dn = *m;
                    dn[a] -= 1;
                    lookup(dn).map(|t| (t, (m[a] as f64).sqrt()))
                });
            }
        }

        let gh = gauss_hermite(quad_points_per_axis);
        let q = gh.len();
        let mut herm = vec![vec![0.0; q]; p];
        let mut buf = vec![0.0; p];
        for (qi, &x) in gh.nodes.iter().enumerate() {
            hermite_1d(p, x, &mut buf);
            for n in 0..p {
                herm[n][qi] = buf[n];
            }
        }
        let herm_w: Vec<Vec<f64>> = herm
            .iter()
            .map(|row| row.iter().zip(&gh.weights).map(|(h, w)| h * w).collect())
            .collect();
        let mut quad_nodes = Vec::with_capacity(q * q * q);
        let mut quad_weights = Vec::with_capacity(q * q * q);
        for a in 0..q {
            for b in 0..q {
                for c in 0..q {
                    quad_nodes.push([gh.nodes[a], gh.nodes[b], gh.nodes[c]]);
                    quad_weights.push(gh.weights[a] * gh.weights[b] * gh.weights[c]);
                }
            }
        }

        let mut basis = VelocityBasis {
            modes_per_axis,
            degree,
            modes,
            cube,
            gh,
            herm,
            herm_w,
            quad_nodes,
            quad_weights,
            raise,
            lower,
            lambda_gram: DMatrix::zeros(0, 0),
            kernel: Vec::new(),
        };
        basis.lambda_gram = basis.assemble_lambda_gram();
        basis.kernel = basis.hydro_kernel_vectors();
        Ok(basis)
    }

    /// Basis with enough quadrature points that products of two basis
    /// functions are projected back exactly.
    pub fn for_products(modes_per_axis: usize) -> Result<Self> {
        let degree = modes_per_axis.saturating_sub(1);
        let q = (3 * degree + 2).div_ceil(2).max(modes_per_axis);
        Self::new(modes_per_axis, q)
    }

    // (1 + |v|)-weighted Gram matrix by a spherical-radial rule, exact for
    // polynomial integrands of the degree involved.
    fn assemble_lambda_gram(&self) -> DMatrix<f64> {
        let nm = self.len();
        let radial = gauss_radial_maxwell(self.degree + 2);
        let sphere = SphereRule::exact_to(2 * self.degree);
        let mut gram = DMatrix::zeros(nm, nm);
        let mut psi = vec![0.0; nm];
        for (&r, &wr) in radial.nodes.iter().zip(&radial.weights) {
            for (omega, &ws) in sphere.points.iter().zip(&sphere.weights) {
                let v = [r * omega[0], r * omega[1], r * omega[2]];
                self.eval_modes(v, &mut psi);
                let w = wr * ws * (1.0 + r);
                for a in 0..nm {
                    let wa = w * psi[a];
                    for b in a..nm {
                        gram[(a, b)] += wa * psi[b];
                    }
                }
            }
        }
        for a in 0..nm {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        gram
    }

    fn hydro_kernel_vectors(&self) -> Vec<Vec<f64>> {
        let nm = self.len();
        let mut out = Vec::with_capacity(HYDRO_KERNEL_DIM);
        for idx in [0, 1, 2, 3] {
            let mut e = vec![0.0; nm];
            e[idx] = 1.0;
            out.push(e);
        }
        // (|v|^2 - 3)/sqrt(6) = (psi_200 + psi_020 + psi_002)/sqrt(3)
        let mut e = vec![0.0; nm];
        for a in 0..3 {
            let mut m = [0; 3];
            m[a] = 2;
            e[self.index(m).expect("degree >= 2")] = 1.0 / 3f64.sqrt();
        }
        out.push(e);
        out
    }

    pub fn modes_per_axis(&self) -> usize {
        self.modes_per_axis
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of retained modes.
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn quad_points_per_axis(&self) -> usize {
        self.gh.len()
    }

    pub fn modes(&self) -> &[[usize; 3]] {
        &self.modes
    }

    pub fn index(&self, m: [usize; 3]) -> Option<usize> {
        if m.iter().sum::<usize>() > self.degree {
            return None;
        }
        let p = self.degree + 1;
        self.cube[(m[0] * p + m[1]) * p + m[2]]
    }

    pub fn quad_nodes(&self) -> &[[f64; 3]] {
        &self.quad_nodes
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn lambda_gram(&self) -> &DMatrix<f64> {
        &self.lambda_gram
    }

    /// Orthonormal basis of the hydrodynamic kernel, as coefficient vectors.
    pub fn hydro_kernel(&self) -> &[Vec<f64>] {
        &self.kernel
    }

    pub fn zeros(&self) -> VelocityFunction {
        VelocityFunction::zeros(self.len())
    }

    pub fn constant(&self, c: f64) -> VelocityFunction {
        let mut f = self.zeros();
        f.coeffs[0] = c;
        f
    }

    /// The function `v_axis`.
    pub fn velocity(&self, axis: usize) -> VelocityFunction {
        let mut f = self.zeros();
        f.coeffs[VELOCITY_MODES[axis]] = 1.0;
        f
    }

    /// The function `(|v|^2 - 3)/2`.
    pub fn energy_mode(&self) -> VelocityFunction {
        VelocityFunction { coeffs: self.kernel[4].iter().map(|c| c * 6f64.sqrt() / 2.0).collect() }
    }

    /// Values of every basis function at `v`.
    pub fn eval_modes(&self, v: [f64; 3], out: &mut [f64]) {
        let p = self.degree + 1;
        let mut h = [[0.0; 16]; 3];
        for a in 0..3 {
            hermite_1d(p, v[a], &mut h[a][..p]);
        }
        for (o, m) in out.iter_mut().zip(&self.modes) {
            *o = h[0][m[0]] * h[1][m[1]] * h[2][m[2]];
        }
    }

    pub fn eval(&self, f: &VelocityFunction, v: [f64; 3]) -> f64 {
        let mut psi = vec![0.0; self.len()];
        self.eval_modes(v, &mut psi);
        psi.iter().zip(&f.coeffs).map(|(a, b)| a * b).sum()
    }

    /// Galerkin projection of an arbitrary function by tensor Gauss–Hermite
    /// quadrature (exact for polynomials of degree `<= 2 Q - 1 - degree`).
    pub fn project_fn(&self, f: impl Fn([f64; 3]) -> f64) -> VelocityFunction {
        let vals: Vec<f64> = self.quad_nodes.iter().map(|&v| f(v)).collect();
        VelocityFunction { coeffs: self.from_grid(&vals) }
    }

    /// Values at the tensor quadrature nodes (row-major `[q1][q2][q3]`),
    /// by sum factorisation.
    pub fn to_grid(&self, coeffs: &[f64]) -> Vec<f64> {
        let p = self.degree + 1;
        let q = self.gh.len();
        let mut c = vec![0.0; p * p * p];
        for (idx, m) in self.modes.iter().enumerate() {
            c[(m[0] * p + m[1]) * p + m[2]] = coeffs[idx];
        }
        // t1[q1][j][k]
        let mut t1 = vec![0.0; q * p * p];
        for i in 0..p {
            for j in 0..p - i {
                for k in 0..p - i - j {
                    let cv = c[(i * p + j) * p + k];
                    if cv == 0.0 {
                        continue;
                    }
                    for (q1, h) in self.herm[i].iter().enumerate() {
                        t1[(q1 * p + j) * p + k] += h * cv;
                    }
                }
            }
        }
        // t2[q1][q2][k]
        let mut t2 = vec![0.0; q * q * p];
        for q1 in 0..q {
            for j in 0..p {
                for k in 0..p - j {
                    let tv = t1[(q1 * p + j) * p + k];
                    if tv == 0.0 {
                        continue;
                    }
                    for (q2, h) in self.herm[j].iter().enumerate() {
                        t2[(q1 * q + q2) * p + k] += h * tv;
                    }
                }
            }
        }
        let mut out = vec![0.0; q * q * q];
        for q12 in 0..q * q {
            for k in 0..p {
                let tv = t2[q12 * p + k];
                if tv == 0.0 {
                    continue;
                }
                for (q3, h) in self.herm[k].iter().enumerate() {
                    out[q12 * q + q3] += h * tv;
                }
            }
        }
        out
    }

    /// Quadrature projection of nodal values back onto the basis.
    pub fn from_grid(&self, vals: &[f64]) -> Vec<f64> {
        let p = self.degree + 1;
        let q = self.gh.len();
        // s1[i][q2][q3]
        let mut s1 = vec![0.0; p * q * q];
        for q1 in 0..q {
            let slab = &vals[q1 * q * q..(q1 + 1) * q * q];
            for i in 0..p {
                let hw = self.herm_w[i][q1];
                let dst = &mut s1[i * q * q..(i + 1) * q * q];
                for (d, s) in dst.iter_mut().zip(slab) {
                    *d += hw * s;
                }
            }
        }
        // s2[i][j][q3]
        let mut s2 = vec![0.0; p * p * q];
        for i in 0..p {
            for q2 in 0..q {
                let row = &s1[(i * q + q2) * q..(i * q + q2 + 1) * q];
                for j in 0..p - i {
                    let hw = self.herm_w[j][q2];
                    let dst = &mut s2[(i * p + j) * q..(i * p + j + 1) * q];
                    for (d, s) in dst.iter_mut().zip(row) {
                        *d += hw * s;
                    }
                }
            }
        }
        self.modes
            .iter()
            .map(|m| {
                let row = &s2[(m[0] * p + m[1]) * q..(m[0] * p + m[1] + 1) * q];
                row.iter().zip(&self.herm_w[m[2]]).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// Galerkin projection of the pointwise product `g h`.
    pub fn product(&self, g: &[f64], h: &[f64]) -> Vec<f64> {
        let gv = self.to_grid(g);
        let hv = self.to_grid(h);
        let prod: Vec<f64> = gv.iter().zip(&hv).map(|(a, b)| a * b).collect();
        self.from_grid(&prod)
    }

    /// `dst += coef * a_axis^dagger src` (the raising operator `v_i - d/dv_i`).
    pub fn raise_add(&self, axis: usize, src: &[f64], coef: f64, dst: &mut [f64]) {
        for (m, s) in src.iter().enumerate() {
            if let Some((t, c)) = self.raise[axis][m] {
                dst[t] += coef * c * s;
            }
        }
    }

    /// `dst += coef * d/dv_axis src`.
    pub fn lower_add(&self, axis: usize, src: &[f64], coef: f64, dst: &mut [f64]) {
        for (m, s) in src.iter().enumerate() {
            if let Some((t, c)) = self.lower[axis][m] {
                dst[t] += coef * c * s;
            }
        }
    }

    /// `dst += coef * v_axis src`, truncated to the basis.
    pub fn mul_v_add(&self, axis: usize, src: &[f64], coef: f64, dst: &mut [f64]) {
        self.raise_add(axis, src, coef, dst);
        self.lower_add(axis, src, coef, dst);
    }

    /// `dst += coef * Omega_k src` where `(v x B) . grad_v = sum_k B_k Omega_k`.
    ///
    /// `Omega_k = v_{k+2} d_{k+1} - v_{k+1} d_{k+2}` (indices mod 3) preserves the
    /// total degree, so it acts exactly on the truncated basis.
    pub fn rotation_add(&self, k: usize, src: &[f64], coef: f64, dst: &mut [f64]) {
        let a = (k + 1) % 3;
        let b = (k + 2) % 3;
        for (m, s) in src.iter().enumerate() {
            if *s == 0.0 {
                continue;
            }
            // a_b^dagger a_a
            if let Some((mid, c1)) = self.lower[a][m] {
                if let Some((t, c2)) = self.raise[b][mid] {
                    dst[t] += coef * c1 * c2 * s;
                }
            }
            // - a_a^dagger a_b
            if let Some((mid, c1)) = self.lower[b][m] {
                if let Some((t, c2)) = self.raise[a][mid] {
                    dst[t] -= coef * c1 * c2 * s;
                }
            }
        }
    }

    /// Dense Galerkin matrix of multiplication by `v_axis` (symmetric).
    pub fn mul_v_matrix(&self, axis: usize) -> DMatrix<f64> {
        let nm = self.len();
        let mut mat = DMatrix::zeros(nm, nm);
        let mut e = vec![0.0; nm];
        let mut col = vec![0.0; nm];
        for m in 0..nm {
            e[m] = 1.0;
            col.iter_mut().for_each(|c| *c = 0.0);
            self.mul_v_add(axis, &e, 1.0, &mut col);
            for (r, c) in col.iter().enumerate() {
                mat[(r, m)] = *c;
            }
            e[m] = 0.0;
        }
        mat
    }

    /// Largest speed resolved by the truncated transport operator: the
    /// spectral radius of the Galerkin `v_axis` matrix.
    pub fn max_speed(&self) -> f64 {
        // Restricted to one axis this is the largest zero of He_{modes_per_axis}.
        let rule = gauss_hermite(self.modes_per_axis);
        rule.nodes.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Hydrodynamic moments of `(f, h)`.
    pub fn moments(&self, f: &VelocityFunction, h: &VelocityFunction, eps: f64) -> HydroMoments {
        moments_from_coeffs(self, &f.coeffs, &h.coeffs, eps)
    }

    /// Orthogonal projection onto span{1, v, (|v|^2-3)/2}.
    pub fn project_hydro(&self, f: &VelocityFunction) -> VelocityFunction {
        let mut out = self.zeros();
        for e in &self.kernel {
            let c: f64 = e.iter().zip(&f.coeffs).map(|(a, b)| a * b).sum();
            for (o, ei) in out.coeffs.iter_mut().zip(e) {
                *o += c * ei;
            }
        }
        out
    }

    /// Orthogonal projection onto constants.
    pub fn project_charge(&self, h: &VelocityFunction) -> VelocityFunction {
        self.constant(h.coeffs[0])
    }

    /// Size of the hydrodynamic kernel components of `f` (Euclidean norm of
    /// the five moments against the orthonormal kernel basis).
    pub fn hydro_residual(&self, f: &[f64]) -> f64 {
        self.kernel
            .iter()
            .map(|e| e.iter().zip(f).map(|(a, b)| a * b).sum::<f64>().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn weighted_inner(&self, f: &VelocityFunction, g: &VelocityFunction, weight: Weight) -> f64 {
        match weight {
            Weight::Plain => f.coeffs.iter().zip(&g.coeffs).map(|(a, b)| a * b).sum(),
            Weight::Lambda => {
                let gg = &self.lambda_gram * nalgebra::DVector::from_column_slice(&g.coeffs);
                f.coeffs.iter().zip(gg.iter()).map(|(a, b)| a * b).sum()
            }
        }
    }
}

pub(crate) fn moments_from_coeffs(basis: &VelocityBasis, f: &[f64], h: &[f64], eps: f64) -> HydroMoments {
    let t = &basis.kernel[4];
    // theta = <f, (|v|^2-3)/3> = (sqrt 6 / 3) <f, e4>
    let theta = 6f64.sqrt() / 3.0 * t.iter().zip(f).map(|(a, b)| a * b).sum::<f64>();
    HydroMoments {
        rho: f[0],
        u: [f[1], f[2], f[3]],
        theta,
        n: h[0],
        j: [h[1] / eps, h[2] / eps, h[3] / eps],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quad(basis: &VelocityBasis, f: impl Fn([f64; 3]) -> f64) -> f64 {
        basis.quad_nodes().iter().zip(basis.quad_weights()).map(|(v, w)| w * f(*v)).sum()
    }

    fn random_fn(basis: &VelocityBasis, rng: &mut ChaCha8Rng) -> VelocityFunction {
        VelocityFunction { coeffs: (0..basis.len()).map(|_| rng.gen_range(-1.0..1.0)).collect() }
    }

    #[test]
    fn rejects_small_bases() {
        assert!(matches!(VelocityBasis::new(3, 6), Err(Error::InvalidBasis(_))));
        assert!(matches!(VelocityBasis::new(6, 5), Err(Error::InvalidBasis(_))));
    }

    #[test]
    fn maxwellian_moments() {
        let b = VelocityBasis::new(4, 6).unwrap();
        assert!((quad(&b, |_| 1.0) - 1.0).abs() < 1e-14);
        assert!((quad(&b, |v| v[0] * v[0]) - 1.0).abs() < 1e-14);
        for i in 0..3 {
            assert!(quad(&b, |v| v[i]).abs() < 1e-15);
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((quad(&b, |v| v[i] * v[j]) - want).abs() < 1e-14);
            }
        }
        let b = VelocityBasis::new(6, 8).unwrap();
        let r4 = quad(&b, |v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).powi(2));
        assert!((r4 - 15.0).abs() < 1e-12, "{r4}");
    }

    #[test]
    fn basis_is_orthonormal() {
        let b = VelocityBasis::new(6, 6).unwrap();
        let nm = b.len();
        assert_eq!(nm, 56);
        let vals: Vec<Vec<f64>> = (0..nm)
            .map(|m| {
                let mut e = vec![0.0; nm];
                e[m] = 1.0;
                b.to_grid(&e)
            })
            .collect();
        for a in 0..nm {
            for c in 0..nm {
                let ip: f64 =
                    vals[a].iter().zip(&vals[c]).zip(b.quad_weights()).map(|((x, y), w)| x * y * w).sum();
                let want = if a == c { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-12, "({a},{c}) = {ip}");
            }
        }
    }

    #[test]
    fn moments_of_kernel_elements() {
        let b = VelocityBasis::new(6, 8).unwrap();
        let zero = b.zeros();
        let m = b.moments(&b.constant(1.0), &zero, 1.0);
        assert_eq!((m.rho, m.u, m.theta), (1.0, [0.0; 3], 0.0));

        let m = b.moments(&b.energy_mode(), &zero, 1.0);
        assert!(m.rho.abs() < 1e-15 && m.u == [0.0; 3]);
        assert!((m.theta - 1.0).abs() < 1e-14);

        let m = b.moments(&zero, &b.velocity(0), 0.5);
        assert_eq!(m.n, 0.0);
        assert_eq!(m.j, [2.0, 0.0, 0.0]);
    }

    #[test]
    fn energy_mode_matches_pointwise_definition() {
        let b = VelocityBasis::new(5, 8).unwrap();
        let direct = b.project_fn(|v| 0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] - 3.0));
        assert!(direct.sub(&b.energy_mode()).max_abs() < 1e-13);
    }

    #[test]
    fn hydro_projection_examples() {
        let b = VelocityBasis::new(6, 8).unwrap();
        let f = b.constant(3.0).add(&b.velocity(1).scaled(2.0));
        assert!(b.project_hydro(&f).sub(&f).max_abs() < 1e-15);

        let v1v2 = b.project_fn(|v| v[0] * v[1]);
        assert!(b.project_hydro(&v1v2).max_abs() < 1e-15);

        // |v|^2 = 3 + 2 (|v|^2-3)/2 lies in the kernel
        let sq = b.project_fn(|v| v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        assert!(b.project_hydro(&sq).sub(&sq).max_abs() < 1e-13);

        // brute-force check of the complement's moments
        let g = b.project_fn(|v| v[0].powi(4) + v[1] * v[2] * v[2] + v[2]);
        let perp = g.sub(&b.project_hydro(&g));
        let perp_at = |v: [f64; 3]| b.eval(&perp, v);
        assert!(quad(&b, perp_at).abs() < 1e-12);
        for i in 0..3 {
            assert!(quad(&b, |v| perp_at(v) * v[i]).abs() < 1e-12);
        }
        assert!(quad(&b, |v| perp_at(v) * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] - 3.0)).abs() < 1e-12);

        let h = b.project_fn(|v| 2.0 + v[0] * v[0]);
        assert!((b.project_charge(&h).coeffs[0] - 3.0).abs() < 1e-13);
    }

    #[test]
    fn weighted_inner_examples() {
        let b = VelocityBasis::new(6, 8).unwrap();
        let one = b.constant(1.0);
        assert!((b.weighted_inner(&one, &one, Weight::Plain) - 1.0).abs() < 1e-15);
        assert_eq!(b.weighted_inner(&b.velocity(0), &b.velocity(1), Weight::Plain), 0.0);
        // E|v| for a 3D standard normal is 2 sqrt(2/pi): independent radial
        // oracle by composite Simpson on the chi density.
        let oracle = {
            let n = 20000;
            let h = 20.0 / n as f64;
            let dens = |r: f64| (2.0 / std::f64::consts::PI).sqrt() * r * r * (-0.5 * r * r).exp() * r;
            let mut s = dens(0.0) + dens(20.0);
            for i in 1..n {
                s += dens(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        assert!((oracle - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        let lam = b.weighted_inner(&one, &one, Weight::Lambda);
        assert!((lam - (1.0 + oracle)).abs() < 1e-12, "{lam}");
    }

    #[test]
    fn ladder_operators_match_quadrature() {
        let b = VelocityBasis::new(6, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // Restrict to degree <= 4 so that products stay inside the basis.
        let mut g = random_fn(&b, &mut rng);
        for (c, m) in g.coeffs.iter_mut().zip(b.modes()) {
            if m.iter().sum::<usize>() > 4 {
                *c = 0.0;
            }
        }
        for axis in 0..3 {
            let mut mv = vec![0.0; b.len()];
            b.mul_v_add(axis, &g.coeffs, 1.0, &mut mv);
            let direct = b.project_fn(|v| v[axis] * b.eval(&g, v));
            let err = mv.iter().zip(&direct.coeffs).fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
            assert!(err < 1e-12, "v_{axis}: {err}");

            // derivative by central differences of the polynomial
            let mut dv = vec![0.0; b.len()];
            b.lower_add(axis, &g.coeffs, 1.0, &mut dv);
            let dvf = VelocityFunction { coeffs: dv };
            for v in [[0.3, -0.7, 1.1], [1.5, 0.2, -0.4]] {
                let hstep = 1e-5;
                let mut vp = v;
                let mut vm = v;
                vp[axis] += hstep;
                vm[axis] -= hstep;
                let fd = (b.eval(&g, vp) - b.eval(&g, vm)) / (2.0 * hstep);
                assert!((fd - b.eval(&dvf, v)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rotation_operator_matches_definition() {
        let b = VelocityBasis::new(5, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_fn(&b, &mut rng);
        let bf = [0.3, -1.2, 0.7];
        let mut rot = vec![0.0; b.len()];
        for k in 0..3 {
            b.rotation_add(k, &g.coeffs, bf[k], &mut rot);
        }
        // (v x B) . grad_v g, assembled from the exact ladder operators
        let mut grads = vec![vec![0.0; b.len()]; 3];
        for a in 0..3 {
            b.lower_add(a, &g.coeffs, 1.0, &mut grads[a]);
        }
        let direct = b.project_fn(|v| {
            let vxb = [v[1] * bf[2] - v[2] * bf[1], v[2] * bf[0] - v[0] * bf[2], v[0] * bf[1] - v[1] * bf[0]];
            (0..3).map(|a| vxb[a] * b.eval(&VelocityFunction { coeffs: grads[a].clone() }, v)).sum()
        });
        let err = rot.iter().zip(&direct.coeffs).fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn product_is_exact_with_enough_nodes() {
        let b = VelocityBasis::for_products(5).unwrap();
        let x = b.velocity(0);
        let p = b.product(&x.coeffs, &x.coeffs);
        let direct = b.project_fn(|v| v[0] * v[0]);
        let err = p.iter().zip(&direct.coeffs).fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
        assert!(err < 1e-13);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn basis() -> &'static VelocityBasis {
            use std::sync::OnceLock;
            static B: OnceLock<VelocityBasis> = OnceLock::new();
            B.get_or_init(|| VelocityBasis::new(6, 8).unwrap())
        }

        fn coeffs() -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-1.0f64..1.0, 56)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn parseval(c in coeffs()) {
                let b = basis();
                let vals = b.to_grid(&c);
                let l2: f64 = vals.iter().zip(b.quad_weights()).map(|(v, w)| w * v * v).sum();
                let sum: f64 = c.iter().map(|x| x * x).sum();
                prop_assert!((l2 - sum).abs() <= 1e-12 * sum.max(1.0));
            }

            #[test]
            fn projection_idempotent_and_orthogonal(c in coeffs()) {
                let b = basis();
                let f = VelocityFunction { coeffs: c };
                let p = b.project_hydro(&f);
                prop_assert!(b.project_hydro(&p).sub(&p).norm() <= 1e-12);
                let perp = f.sub(&p);
                prop_assert!(b.weighted_inner(&p, &perp, Weight::Plain).abs() <= 1e-12);
                let (m1, m2) = (b.moments(&f, &f, 1.0), b.moments(&p, &p, 1.0));
                prop_assert!((m1.rho - m2.rho).abs() < 1e-12);
                prop_assert!((m1.theta - m2.theta).abs() < 1e-12);
                for i in 0..3 {
                    prop_assert!((m1.u[i] - m2.u[i]).abs() < 1e-12);
                }
            }

            #[test]
            fn lambda_inner_is_symmetric(c in coeffs(), d in coeffs()) {
                let b = basis();
                let f = VelocityFunction { coeffs: c };
                let g = VelocityFunction { coeffs: d };
                let a = b.weighted_inner(&f, &g, Weight::Lambda);
                let r = b.weighted_inner(&g, &f, Weight::Lambda);
                prop_assert!((a - r).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
