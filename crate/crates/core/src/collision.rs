//! Linearised collision operators.
//!
//! Two operators act on velocity functions: `L` (for the species sum, kernel
//! span{1, v, (|v|^2-3)/2}) and `Ls` (for the species difference, kernel
//! span{1}). They come with the quadratic collision term `Gamma`.
//!
//! Backends:
//!
//! * [`BackendKind::Relaxation`]: unit-rate relaxation `L = I - P`, `Ls = I - P0`
//!   and `Gamma(g, h) = (I - P)(g h) / 2`.
//! * [`BackendKind::HardSphere`]: Galerkin matrices of the linearised hard-sphere
//!   Boltzmann operator (`b = |v - v*|`), assembled in centre-of-mass and
//!   relative coordinates where every integral is a polynomial moment and the
//!   quadrature is exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_hermite, gauss_laguerre, SphereRule};
use crate::velocity::{VelocityBasis, VelocityFunction};

/// Kernel components below this size are treated as round-off by the cell solver.
pub const KERNEL_TOLERANCE: f64 = 1e-8;

/// Largest kernel violation accepted from the hard-sphere assembly.
pub const ASSEMBLY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Relaxation,
    HardSphere,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Relaxation => "relaxation",
            BackendKind::HardSphere => "hard_sphere",
        }
    }

    fn tag(self) -> u32 {
        match self {
            BackendKind::Relaxation => 1,
            BackendKind::HardSphere => 2,
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relaxation" => Ok(BackendKind::Relaxation),
            "hard_sphere" | "hard-sphere" => Ok(BackendKind::HardSphere),
            other => Err(Error::InvalidInput(format!("unknown collision backend `{other}`"))),
        }
    }
}

/// Which of the two linear operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operator {
    /// `L`, acting on the species sum.
    Hydro,
    /// `Ls`, acting on the species difference.
    Charge,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoercivityCertificate {
    /// min <L g, g> / |g|^2_{Lambda} over the kernel complement of `L`.
    pub lambda_est: f64,
    /// Same for `Ls`.
    pub lambda_est_charge: f64,
    /// max |<Gamma(g, g), k>| over kernel elements of `L`, and
    /// |<Gamma(g, h), 1>|, over the sampled pairs.
    pub gamma_orth_residual: f64,
    /// max |<L f, g> - <f, L g>| over sampled pairs, both operators.
    pub self_adjoint_residual: f64,
    /// max |L k| over the kernel basis and |Ls 1|.
    pub kernel_residual: f64,
    pub n_samples: usize,
}

// Centre-of-mass quadrature used for the hard-sphere Gamma.
#[derive(Debug, Clone)]
struct HardSphereGamma {
    centers: Vec<[f64; 3]>,
    center_weights: Vec<f64>,
    radii: Vec<f64>,
    radius_weights: Vec<f64>,
    sphere: SphereRule,
    // sphere means of psi(V + r omega / 2), one vector per (center, radius)
    means: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct CollisionBackend {
    kind: BackendKind,
    basis: Arc<VelocityBasis>,
    matrix_l: DMatrix<f64>,
    matrix_ls: DMatrix<f64>,
    // Cholesky factors of L + P and Ls + P0 (deflated, SPD when coercive).
    chol_l: Option<Cholesky<f64, Dyn>>,
    chol_ls: Option<Cholesky<f64, Dyn>>,
    hs_gamma: std::sync::OnceLock<HardSphereGamma>,
}

impl CollisionBackend {
    pub fn build(kind: BackendKind, basis: &VelocityBasis) -> Result<Self> {
        let (l, ls) = match kind {
            BackendKind::Relaxation => relaxation_matrices(basis),
            BackendKind::HardSphere => hard_sphere_matrices(basis),
        };
        Self::from_matrices(kind, basis, l, ls)
    }

    /// Build, reusing (or writing) an on-disk copy of the assembled matrices.
    pub fn build_cached(kind: BackendKind, basis: &VelocityBasis, cache_dir: &Path) -> Result<Self> {
        let path = cache_dir.join(format!("{}_n{}.ops", kind.as_str(), basis.modes_per_axis()));
        if path.exists() {
            if let Ok((k, n, l, ls)) = load_matrices(&path) {
                if k == kind && n == basis.modes_per_axis() && l.nrows() == basis.len() {
                    return Self::from_matrices(kind, basis, l, ls);
                }
            }
        }
        let backend = Self::build(kind, basis)?;
        fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
        backend.dump(&path)?;
        Ok(backend)
    }

    pub fn from_matrices(
        kind: BackendKind,
        basis: &VelocityBasis,
        matrix_l: DMatrix<f64>,
        matrix_ls: DMatrix<f64>,
    ) -> Result<Self> {
        let nm = basis.len();
        if matrix_l.shape() != (nm, nm) || matrix_ls.shape() != (nm, nm) {
            return Err(Error::Assembly(format!("operator matrices must be {nm}x{nm}")));
        }
        let mut kernel_violation = 0.0f64;
        for k in basis.hydro_kernel() {
            kernel_violation = kernel_violation.max((&matrix_l * DVector::from_column_slice(k)).norm());
        }
        kernel_violation = kernel_violation.max(matrix_ls.column(0).norm());
        if kernel_violation > ASSEMBLY_TOLERANCE {
            return Err(Error::Assembly(format!(
                "kernel violation {kernel_violation:.3e} exceeds {ASSEMBLY_TOLERANCE:.0e}; increase quadrature resolution"
            )));
        }
        let mut deflated_l = matrix_l.clone();
        for k in basis.hydro_kernel() {
            let kv = DVector::from_column_slice(k);
            deflated_l += &kv * kv.transpose();
        }
        let mut deflated_ls = matrix_ls.clone();
        deflated_ls[(0, 0)] += 1.0;
        Ok(CollisionBackend {
            kind,
            basis: Arc::new(basis.clone()),
            chol_l: Cholesky::new(deflated_l),
            chol_ls: Cholesky::new(deflated_ls),
            matrix_l,
            matrix_ls,
            hs_gamma: std::sync::OnceLock::new(),
        })
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    pub fn basis(&self) -> &VelocityBasis {
        &self.basis
    }

    pub fn matrix(&self, op: Operator) -> &DMatrix<f64> {
        match op {
            Operator::Hydro => &self.matrix_l,
            Operator::Charge => &self.matrix_ls,
        }
    }

    pub fn apply(&self, op: Operator, g: &VelocityFunction) -> VelocityFunction {
        let out = self.matrix(op) * DVector::from_column_slice(&g.coeffs);
        VelocityFunction { coeffs: out.as_slice().to_vec() }
    }

    /// `Gamma(g, h)`. Lies in the kernel complement of `Ls` for any arguments
    /// and in that of `L` when `g = h`.
    pub fn apply_bilinear(&self, g: &VelocityFunction, h: &VelocityFunction) -> VelocityFunction {
        VelocityFunction { coeffs: self.bilinear(&g.coeffs, &h.coeffs) }
    }

    pub(crate) fn bilinear(&self, g: &[f64], h: &[f64]) -> Vec<f64> {
        match self.kind {
            BackendKind::Relaxation => {
                let basis = &self.basis;
                let prod = VelocityFunction { coeffs: basis.product(g, h) };
                let p = basis.project_hydro(&prod);
                prod.coeffs.iter().zip(&p.coeffs).map(|(a, b)| 0.5 * (a - b)).collect()
            }
            BackendKind::HardSphere => self.hs_gamma.get_or_init(|| HardSphereGamma::new(&self.basis)).apply(&self.basis, g, h),
        }
    }

    /// Solve `op x = rhs` for the unique `x` in the kernel complement.
    pub fn solve_on_orthogonal(&self, op: Operator, rhs: &VelocityFunction) -> Result<VelocityFunction> {
        let basis = &self.basis;
        let residual = match op {
            Operator::Hydro => basis.hydro_residual(&rhs.coeffs),
            Operator::Charge => rhs.coeffs[0].abs(),
        };
        if residual > KERNEL_TOLERANCE {
            return Err(Error::NonOrthogonalRhs { residual, tolerance: KERNEL_TOLERANCE });
        }
        let chol = match op {
            Operator::Hydro => self.chol_l.as_ref(),
            Operator::Charge => self.chol_ls.as_ref(),
        };
        let chol = chol.ok_or_else(|| Error::SingularOperator { lambda_est: self.lambda_min(op) })?;
        // Remove the (round-off sized) kernel part so the solution is exactly
        // in the complement.
        let rhs = self.remove_kernel(op, &rhs.coeffs);
        let x = chol.solve(&DVector::from_vec(rhs));
        Ok(VelocityFunction { coeffs: self.remove_kernel(op, x.as_slice()) })
    }

    fn remove_kernel(&self, op: Operator, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        match op {
            Operator::Hydro => {
                for k in self.basis.hydro_kernel() {
                    let c: f64 = k.iter().zip(v).map(|(a, b)| a * b).sum();
                    for (o, ki) in out.iter_mut().zip(k) {
                        *o -= c * ki;
                    }
                }
            }
            Operator::Charge => out[0] = 0.0,
        }
        out
    }

    /// Smallest Rayleigh quotient `<op g, g> / |g|^2_Lambda` over the kernel complement.
    pub fn lambda_min(&self, op: Operator) -> f64 {
        let basis = &self.basis;
        let nm = basis.len();
        let kernel: Vec<Vec<f64>> = match op {
            Operator::Hydro => basis.hydro_kernel().to_vec(),
            Operator::Charge => {
                let mut e = vec![0.0; nm];
                e[0] = 1.0;
                vec![e]
            }
        };
        let q = orthonormal_complement(&kernel, nm);
        let a = q.transpose() * self.matrix(op) * &q;
        let g = q.transpose() * basis.lambda_gram() * &q;
        let Some(chol) = Cholesky::new(g) else {
            return f64::NAN;
        };
        let l = chol.l();
        let linv = l.clone().try_inverse().expect("Cholesky factor is invertible");
        let sym = &linv * a * linv.transpose();
        let sym = 0.5 * (&sym + sym.transpose());
        SymmetricEigen::new(sym).eigenvalues.iter().fold(f64::INFINITY, |m, &x| m.min(x))
    }

    /// Numerical check of the structural assumptions on the operators.
    pub fn verify_assumptions(&self, n_samples: usize, seed: u64) -> CoercivityCertificate {
        let basis = &self.basis;
        let nm = basis.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut random = || VelocityFunction { coeffs: (0..nm).map(|_| rng.gen_range(-1.0..1.0)).collect() };

        let mut kernel_residual = 0.0f64;
        for k in basis.hydro_kernel() {
            let kv = VelocityFunction { coeffs: k.clone() };
            kernel_residual = kernel_residual.max(self.apply(Operator::Hydro, &kv).norm());
        }
        kernel_residual = kernel_residual.max(self.apply(Operator::Charge, &basis.constant(1.0)).norm());

        let mut self_adjoint_residual = 0.0f64;
        let mut gamma_orth_residual = 0.0f64;
        for _ in 0..n_samples {
            let f = random();
            let g = random();
            for op in [Operator::Hydro, Operator::Charge] {
                let lf = self.apply(op, &f);
                let lg = self.apply(op, &g);
                let d = dot(&lf.coeffs, &g.coeffs) - dot(&f.coeffs, &lg.coeffs);
                self_adjoint_residual = self_adjoint_residual.max(d.abs());
            }
            let gff = self.apply_bilinear(&f, &f);
            for k in basis.hydro_kernel() {
                gamma_orth_residual = gamma_orth_residual.max(dot(&gff.coeffs, k).abs());
            }
            let gfg = self.apply_bilinear(&f, &g);
            gamma_orth_residual = gamma_orth_residual.max(gfg.coeffs[0].abs());
        }
        CoercivityCertificate {
            lambda_est: self.lambda_min(Operator::Hydro),
            lambda_est_charge: self.lambda_min(Operator::Charge),
            gamma_orth_residual,
            self_adjoint_residual,
            kernel_residual,
            n_samples,
        }
    }

    /// Write the assembled matrices: a fixed header (magic, kind, modes per
    /// axis, matrix size, FNV-1a checksum of the body) followed by `L` and
    /// `Ls` as little-endian row-major doubles.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut body = Vec::with_capacity(16 * self.matrix_l.len());
        for m in [&self.matrix_l, &self.matrix_ls] {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    body.extend_from_slice(&m[(r, c)].to_le_bytes());
                }
            }
        }
        let mut out = Vec::with_capacity(body.len() + 32);
        out.extend_from_slice(OPS_MAGIC);
        out.extend_from_slice(&self.kind.tag().to_le_bytes());
        out.extend_from_slice(&(self.basis.modes_per_axis() as u32).to_le_bytes());
        out.extend_from_slice(&(self.basis.len() as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&fnv1a(&body).to_le_bytes());
        out.extend_from_slice(&body);
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&out).map_err(|e| Error::io(path, e))
    }
}

const OPS_MAGIC: &[u8; 8] = b"KMHDOPS1";

/// Read matrices written by [`CollisionBackend::dump`].
pub fn load_matrices(path: &Path) -> Result<(BackendKind, usize, DMatrix<f64>, DMatrix<f64>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 32 || &bytes[..8] != OPS_MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let kind = match u32_at(8) {
        1 => BackendKind::Relaxation,
        2 => BackendKind::HardSphere,
        t => return Err(Error::format(path, format!("unknown backend tag {t}"))),
    };
    let n = u32_at(12) as usize;
    let nm = u32_at(16) as usize;
    let checksum = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let body = &bytes[32..];
    if body.len() != 16 * nm * nm {
        return Err(Error::format(path, "truncated body"));
    }
    if fnv1a(body) != checksum {
        return Err(Error::format(path, "checksum mismatch"));
    }
    let vals: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let l = DMatrix::from_row_slice(nm, nm, &vals[..nm * nm]);
    let ls = DMatrix::from_row_slice(nm, nm, &vals[nm * nm..]);
    Ok((kind, n, l, ls))
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthonormal_complement(kernel: &[Vec<f64>], nm: usize) -> DMatrix<f64> {
    let mut cols: Vec<Vec<f64>> = kernel.to_vec();
    let k = cols.len();
    for i in 0..nm {
        let mut e = vec![0.0; nm];
        e[i] = 1.0;
        // two passes of Gram-Schmidt
        for _ in 0..2 {
            for c in &cols {
                let p = dot(&e, c);
                for (x, y) in e.iter_mut().zip(c) {
                    *x -= p * y;
                }
            }
        }
        let n = dot(&e, &e).sqrt();
        if n > 1e-8 {
            cols.push(e.iter().map(|x| x / n).collect());
        }
    }
    let rest = &cols[k..];
    DMatrix::from_fn(nm, rest.len(), |r, c| rest[c][r])
}

fn relaxation_matrices(basis: &VelocityBasis) -> (DMatrix<f64>, DMatrix<f64>) {
    let nm = basis.len();
    let mut l = DMatrix::identity(nm, nm);
    for k in basis.hydro_kernel() {
        let kv = DVector::from_column_slice(k);
        l -= &kv * kv.transpose();
    }
    let mut ls = DMatrix::identity(nm, nm);
    ls[(0, 0)] = 0.0;
    (l, ls)
}

// Centre-of-mass variables: v = V + w/2, v* = V - w/2, w = r w_hat. Then
// M M* = (2 pi)^-3 exp(-|V|^2 - r^2/4); V is Gaussian with variance 1/2 per
// axis and t = r^2/4 carries the weight t e^{-t} once the hard-sphere factor r
// is absorbed. The pre/post-collisional velocities are V +- r omega/2, so the
// angular integrals over w_hat and omega decouple.
fn centre_of_mass_nodes(n: usize) -> (Vec<[f64; 3]>, Vec<f64>) {
    let gh = gauss_hermite(n);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut pts = Vec::with_capacity(n * n * n);
    let mut wts = Vec::with_capacity(n * n * n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                pts.push([gh.nodes[a] * s, gh.nodes[b] * s, gh.nodes[c] * s]);
                wts.push(gh.weights[a] * gh.weights[b] * gh.weights[c]);
            }
        }
    }
    (pts, wts)
}

fn radius_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let lag = gauss_laguerre(n, 1.0);
    (lag.nodes.iter().map(|t| 2.0 * t.sqrt()).collect(), lag.weights)
}

fn hard_sphere_matrices(basis: &VelocityBasis) -> (DMatrix<f64>, DMatrix<f64>) {
    let nm = basis.len();
    let d = basis.degree();
    // Integrands are polynomials of degree 2d in V and omega and d in t.
    let (centers, cw) = centre_of_mass_nodes(d + 1);
    let (radii, rw) = radius_nodes(d / 2 + 2);
    let sphere = SphereRule::new((d + 1).max(8), (2 * d + 2).max(16));
    let ns = sphere.len();

    let mut l = DMatrix::<f64>::zeros(nm, nm);
    let mut ls = DMatrix::<f64>::zeros(nm, nm);
    let mut xs = DMatrix::<f64>::zeros(ns, nm);
    let mut xt = DMatrix::<f64>::zeros(ns, nm);
    let mut plus = vec![0.0; nm];
    let mut minus = vec![0.0; nm];
    for (v, &wv) in centers.iter().zip(&cw) {
        for (&r, &wr) in radii.iter().zip(&rw) {
            let mut ms = DVector::<f64>::zeros(nm);
            let mut mt = DVector::<f64>::zeros(nm);
            for (s, (om, &wo)) in sphere.points.iter().zip(&sphere.weights).enumerate() {
                let half = [0.5 * r * om[0], 0.5 * r * om[1], 0.5 * r * om[2]];
                basis.eval_modes([v[0] + half[0], v[1] + half[1], v[2] + half[2]], &mut plus);
                basis.eval_modes([v[0] - half[0], v[1] - half[1], v[2] - half[2]], &mut minus);
                let sw = wo.sqrt();
                for m in 0..nm {
                    let sm = plus[m] + minus[m];
                    xs[(s, m)] = sw * sm;
                    xt[(s, m)] = sw * plus[m];
                    ms[m] += wo * sm;
                    mt[m] += wo * plus[m];
                }
            }
            let w = wv * wr;
            let cs = xs.tr_mul(&xs) - &ms * ms.transpose();
            let ct = xt.tr_mul(&xt) - &mt * mt.transpose();
            l += cs * w;
            ls += ct * w;
        }
    }
    let sqrt_pi = std::f64::consts::PI.sqrt();
    l *= 8.0 * sqrt_pi;
    ls *= 16.0 * sqrt_pi;
    let l = 0.5 * (&l + l.transpose());
    let ls = 0.5 * (&ls + ls.transpose());
    (l, ls)
}

impl HardSphereGamma {
    fn new(basis: &VelocityBasis) -> Self {
        let nm = basis.len();
        let d = basis.degree();
        // <Gamma(psi_a, psi_b), psi_c> has total degree 3d.
        let (centers, center_weights) = centre_of_mass_nodes((3 * d + 2).div_ceil(2));
        let (radii, radius_weights) = radius_nodes((3 * d) / 4 + 2);
        let sphere = SphereRule::new(((3 * d) / 2 + 1).max(8), (3 * d + 1).next_multiple_of(2).max(16));
        let mut means = Vec::with_capacity(centers.len() * radii.len());
        let mut psi = vec![0.0; nm];
        for v in &centers {
            for &r in &radii {
                let mut m = vec![0.0; nm];
                for (om, &wo) in sphere.points.iter().zip(&sphere.weights) {
                    basis.eval_modes(
                        [v[0] + 0.5 * r * om[0], v[1] + 0.5 * r * om[1], v[2] + 0.5 * r * om[2]],
                        &mut psi,
                    );
                    for (mi, p) in m.iter_mut().zip(&psi) {
                        *mi += wo * p;
                    }
                }
                means.push(m);
            }
        }
        HardSphereGamma { centers, center_weights, radii, radius_weights, sphere, means }
    }

    // <Gamma(g, h), phi> = 16 sqrt(pi) E[g(x) h(y) (mean_omega phi(V + r omega/2) - phi(x))]
    // with x = V + r w_hat/2, y = V - r w_hat/2.
    fn apply(&self, basis: &VelocityBasis, g: &[f64], h: &[f64]) -> Vec<f64> {
        let nm = basis.len();
        let mut out = vec![0.0; nm];
        let mut px = vec![0.0; nm];
        let mut py = vec![0.0; nm];
        let mut idx = 0;
        for (v, &wv) in self.centers.iter().zip(&self.center_weights) {
            for (&r, &wr) in self.radii.iter().zip(&self.radius_weights) {
                let mean = &self.means[idx];
                idx += 1;
                let mut acc_mean = 0.0;
                for (om, &wo) in self.sphere.points.iter().zip(&self.sphere.weights) {
                    let half = [0.5 * r * om[0], 0.5 * r * om[1], 0.5 * r * om[2]];
                    basis.eval_modes([v[0] + half[0], v[1] + half[1], v[2] + half[2]], &mut px);
                    basis.eval_modes([v[0] - half[0], v[1] - half[1], v[2] - half[2]], &mut py);
                    let w = wv * wr * wo * dot(g, &px) * dot(h, &py);
                    acc_mean += w;
                    for (o, p) in out.iter_mut().zip(&px) {
                        *o -= w * p;
                    }
                }
                for (o, m) in out.iter_mut().zip(mean) {
                    *o += acc_mean * m;
                }
            }
        }
        let c = 16.0 * std::f64::consts::PI.sqrt();
        out.iter_mut().for_each(|o| *o *= c);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn basis6() -> &'static VelocityBasis {
        static B: OnceLock<VelocityBasis> = OnceLock::new();
        B.get_or_init(|| VelocityBasis::for_products(6).unwrap())
    }

    fn relax() -> &'static CollisionBackend {
        static B: OnceLock<CollisionBackend> = OnceLock::new();
        B.get_or_init(|| CollisionBackend::build(BackendKind::Relaxation, basis6()).unwrap())
    }

    fn hard_sphere() -> &'static CollisionBackend {
        static B: OnceLock<CollisionBackend> = OnceLock::new();
        B.get_or_init(|| CollisionBackend::build(BackendKind::HardSphere, basis6()).unwrap())
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn relaxation_spectrum_is_projector() {
        let eig = SymmetricEigen::new(relax().matrix(Operator::Hydro).clone());
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        assert!(vals[..5].iter().all(|v| v.abs() < 1e-14));
        assert!(vals[5..].iter().all(|v| (v - 1.0).abs() < 1e-14));
        let b = basis6();
        let lv = relax().apply(Operator::Charge, &b.velocity(0));
        assert!(max_diff(&lv.coeffs, &b.velocity(0).coeffs) < 1e-15);
    }

    #[test]
    fn relaxation_bilinear_examples() {
        let b = basis6();
        let r = relax();
        let zero = b.zeros();
        let h = b.project_fn(|v| v[0] * v[1] + v[2]);
        assert!(r.apply_bilinear(&zero, &h).max_abs() == 0.0);
        assert!(r.apply_bilinear(&b.constant(1.0), &b.constant(1.0)).max_abs() < 1e-15);
        // Gamma(v1, v1) = (v1^2 - P v1^2)/2, the five kernel moments of v1^2
        // removed by brute-force quadrature
        let g = r.apply_bilinear(&b.velocity(0), &b.velocity(0));
        let quad = |f: &dyn Fn([f64; 3]) -> f64| -> f64 {
            b.quad_nodes().iter().zip(b.quad_weights()).map(|(v, w)| w * f(*v)).sum()
        };
        let mass = quad(&|v| v[0] * v[0]);
        let energy = quad(&|v| v[0] * v[0] * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] - 3.0) / 3.0);
        let expect = b.project_fn(|v| {
            let e = 0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] - 3.0);
            0.5 * (v[0] * v[0] - mass - e * energy)
        });
        assert!((mass - 1.0).abs() < 1e-14 && (energy - 2.0 / 3.0).abs() < 1e-14);
        assert!(max_diff(&g.coeffs, &expect.coeffs) < 1e-13);
    }

    #[test]
    fn relaxation_cell_problems_are_identity() {
        let b = basis6();
        let r = relax();
        let a12 = b.project_fn(|v| v[0] * v[1]);
        let x = r.solve_on_orthogonal(Operator::Hydro, &a12).unwrap();
        assert!(max_diff(&x.coeffs, &a12.coeffs) < 1e-13);
        let b1 = b.project_fn(|v| v[0] * (0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) - 2.5));
        let x = r.solve_on_orthogonal(Operator::Hydro, &b1).unwrap();
        assert!(max_diff(&x.coeffs, &b1.coeffs) < 1e-13);
        assert!(matches!(
            r.solve_on_orthogonal(Operator::Hydro, &b.constant(1.0)),
            Err(Error::NonOrthogonalRhs { .. })
        ));
        assert!(matches!(
            r.solve_on_orthogonal(Operator::Charge, &b.constant(1.0)),
            Err(Error::NonOrthogonalRhs { .. })
        ));
    }

    #[test]
    fn relaxation_certificate() {
        let cert = relax().verify_assumptions(100, 1);
        assert!(cert.lambda_est > 0.0 && cert.lambda_est_charge > 0.0);
        assert!(cert.gamma_orth_residual <= 1e-10, "{}", cert.gamma_orth_residual);
        assert!(cert.self_adjoint_residual <= 1e-10);
        assert!(cert.kernel_residual <= 1e-14);
    }

    #[test]
    fn hard_sphere_structure() {
        let hs = hard_sphere();
        let cert = hs.verify_assumptions(5, 2);
        assert!(cert.kernel_residual <= 1e-6, "{}", cert.kernel_residual);
        assert!(cert.self_adjoint_residual <= 1e-10);
        assert!(cert.lambda_est > 0.0, "{}", cert.lambda_est);
        assert!(cert.lambda_est_charge > 0.0);
        assert!(cert.gamma_orth_residual <= 1e-10, "{}", cert.gamma_orth_residual);
    }

    #[test]
    fn hard_sphere_operators_agree_with_gamma() {
        // Ls w = -Gamma(w, 1) and L g = -Gamma(g, 1) - Gamma(1, g): the
        // matrices and the bilinear evaluator use independent quadratures.
        let b = basis6();
        let hs = hard_sphere();
        let one = b.constant(1.0);
        for w in [b.velocity(1), b.project_fn(|v| v[0] * v[2] - 0.3 * v[1] * v[1] * v[1])] {
            let ls = hs.apply(Operator::Charge, &w);
            let via_gamma = hs.apply_bilinear(&w, &one).scaled(-1.0);
            assert!(max_diff(&ls.coeffs, &via_gamma.coeffs) < 1e-11);
            let l = hs.apply(Operator::Hydro, &w);
            let via_gamma = hs.apply_bilinear(&w, &one).add(&hs.apply_bilinear(&one, &w)).scaled(-1.0);
            assert!(max_diff(&l.coeffs, &via_gamma.coeffs) < 1e-11);
        }
    }

    #[test]
    fn hard_sphere_gamma_on_kernel_is_half_l_of_square() {
        // Expanding Q(M e^{g}, M e^{g}) = 0 to second order for g in the kernel
        // gives Gamma(g, g) = L(g^2)/2.
        let b = basis6();
        let hs = hard_sphere();
        let g = b.constant(0.2).add(&b.velocity(0).scaled(0.7)).add(&b.energy_mode().scaled(-0.4));
        let g2 = VelocityFunction { coeffs: b.product(&g.coeffs, &g.coeffs) };
        let lhs = hs.apply_bilinear(&g, &g);
        let rhs = hs.apply(Operator::Hydro, &g2).scaled(0.5);
        assert!(max_diff(&lhs.coeffs, &rhs.coeffs) < 1e-11);
        // the relaxation model obeys the same identity
        let r = relax();
        let lhs = r.apply_bilinear(&g, &g);
        let rhs = r.apply(Operator::Hydro, &g2).scaled(0.5);
        assert!(max_diff(&lhs.coeffs, &rhs.coeffs) < 1e-13);
    }

    #[test]
    fn hard_sphere_solve_is_right_inverse() {
        let b = basis6();
        let hs = hard_sphere();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let f = VelocityFunction { coeffs: (0..b.len()).map(|_| rng.gen_range(-1.0..1.0)).collect() };
            let rhs = f.sub(&b.project_hydro(&f));
            let x = hs.solve_on_orthogonal(Operator::Hydro, &rhs).unwrap();
            let back = hs.apply(Operator::Hydro, &x);
            assert!(back.sub(&rhs).norm() <= 1e-9);
            assert!(b.hydro_residual(&x.coeffs) < 1e-12);
        }
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let b = VelocityBasis::new(4, 4).unwrap();
        let first = CollisionBackend::build_cached(BackendKind::HardSphere, &b, dir.path()).unwrap();
        let path = dir.path().join("hard_sphere_n4.ops");
        let (kind, n, l, ls) = load_matrices(&path).unwrap();
        assert_eq!((kind, n), (BackendKind::HardSphere, 4));
        assert_eq!(&l, first.matrix(Operator::Hydro));
        assert_eq!(&ls, first.matrix(Operator::Charge));
        let again = CollisionBackend::build_cached(BackendKind::HardSphere, &b, dir.path()).unwrap();
        assert_eq!(again.matrix(Operator::Hydro), first.matrix(Operator::Hydro));

        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_matrices(&path), Err(Error::Format { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn operators_are_self_adjoint_and_positive(
                f in proptest::collection::vec(-1.0f64..1.0, 56),
                g in proptest::collection::vec(-1.0f64..1.0, 56),
            ) {
                for backend in [relax(), hard_sphere()] {
                    let lam = backend.lambda_min(Operator::Hydro);
                    let b = backend.basis();
                    for op in [Operator::Hydro, Operator::Charge] {
                        let fv = VelocityFunction { coeffs: f.clone() };
                        let gv = VelocityFunction { coeffs: g.clone() };
                        let lf = backend.apply(op, &fv);
                        let lg = backend.apply(op, &gv);
                        prop_assert!((dot(&lf.coeffs, &g) - dot(&f, &lg.coeffs)).abs() <= 1e-10);
                        prop_assert!(dot(&lf.coeffs, &f) >= -1e-12);
                    }
                    let fv = VelocityFunction { coeffs: f.clone() };
                    let perp = fv.sub(&b.project_hydro(&fv));
                    let q = dot(&backend.apply(Operator::Hydro, &fv).coeffs, &f);
                    let norm_l = b.weighted_inner(&perp, &perp, crate::velocity::Weight::Lambda);
                    prop_assert!(q >= lam * norm_l * (1.0 - 1e-10));
                }
            }
        }
    }
}
