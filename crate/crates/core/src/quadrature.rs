//! Gaussian quadrature rules built from three-term recurrences (Golub–Welsch).
//!
//! Every rule here is normalised so that its weights sum to the total mass of
//! the underlying measure as stated on each constructor.

use nalgebra::{DMatrix, SymmetricEigen};

/// A one-dimensional quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Gauss rule for the measure whose monic orthogonal polynomials satisfy
/// `p_{k+1} = (x - alpha_k) p_k - beta_k p_{k-1}`, with total mass `mass`.
pub fn gauss_from_recurrence(alpha: &[f64], beta: &[f64], mass: f64) -> Rule {
    let n = alpha.len();
    assert!(n > 0 && beta.len() + 1 >= n);
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        jacobi[(k, k)] = alpha[k];
        if k + 1 < n {
            let off = beta[k].sqrt();
            jacobi[(k, k + 1)] = off;
            jacobi[(k + 1, k)] = off;
        }
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mass * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss–Hermite rule for the standard normal density (weights sum to 1).
pub fn gauss_hermite(n: usize) -> Rule {
    let alpha = vec![0.0; n];
    let beta: Vec<f64> = (1..n).map(|k| k as f64).collect();
    let mut rule = gauss_from_recurrence(&alpha, &beta, 1.0);
    symmetrize(&mut rule);
    rule
}

/// Gauss–Legendre rule on [-1, 1] (weights sum to 2).
pub fn gauss_legendre(n: usize) -> Rule {
    let alpha = vec![0.0; n];
    let beta: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k * k / (4.0 * k * k - 1.0)
        })
        .collect();
    let mut rule = gauss_from_recurrence(&alpha, &beta, 2.0);
    symmetrize(&mut rule);
    rule
}

/// Generalised Gauss–Laguerre rule for `t^a e^{-t} / Gamma(a + 1)` on [0, inf).
pub fn gauss_laguerre(n: usize, a: f64) -> Rule {
    let alpha: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + a + 1.0).collect();
    let beta: Vec<f64> = (1..n).map(|k| k as f64 * (k as f64 + a)).collect();
    gauss_from_recurrence(&alpha, &beta, 1.0)
}

/// Gauss rule in the radius `r = |v|` for the radial part of the 3D standard
/// normal, i.e. the density `sqrt(2/pi) r^2 e^{-r^2/2}` on [0, inf).
///
/// The recurrence is generated by the discretised Stieltjes procedure over a
/// composite Gauss–Legendre grid on [0, 16]; the truncated tail is below 1e-50.
pub fn gauss_radial_maxwell(n: usize) -> Rule {
    let panels = 64;
    let per_panel = gauss_legendre(24);
    let r_max = 16.0;
    let h = r_max / panels as f64;
    let mut xs = Vec::with_capacity(panels * per_panel.len());
    let mut ws = Vec::with_capacity(xs.capacity());
    let norm = (2.0 / std::f64::consts::PI).sqrt();
    for p in 0..panels {
        let a = p as f64 * h;
        for (&z, &w) in per_panel.nodes.iter().zip(&per_panel.weights) {
            let r = a + 0.5 * h * (z + 1.0);
            xs.push(r);
            ws.push(0.5 * h * w * norm * r * r * (-0.5 * r * r).exp());
        }
    }
    let (alpha, beta, mass) = stieltjes(&xs, &ws, n);
    gauss_from_recurrence(&alpha, &beta, mass)
}

fn stieltjes(xs: &[f64], ws: &[f64], n: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let m = xs.len();
    let mass: f64 = ws.iter().sum();
    let mut alpha = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    let mut prev = vec![0.0; m];
    let mut cur = vec![1.0; m];
    let mut norm_prev = 1.0;
    let mut norm_cur = mass;
    for k in 0..n {
        let a = (0..m).map(|i| ws[i] * xs[i] * cur[i] * cur[i]).sum::<f64>() / norm_cur;
        alpha.push(a);
        let b = if k == 0 { 0.0 } else { norm_cur / norm_prev };
        if k > 0 {
            beta.push(b);
        }
        let next: Vec<f64> = (0..m).map(|i| (xs[i] - a) * cur[i] - b * prev[i]).collect();
        // Rescale to keep the monic polynomials in range; ratios are unaffected.
        let s = next.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-300);
        prev = cur.iter().map(|v| v / s).collect();
        cur = next.iter().map(|v| v / s).collect();
        norm_prev = norm_cur / (s * s);
        norm_cur = (0..m).map(|i| ws[i] * cur[i] * cur[i]).sum();
    }
    (alpha, beta, mass)
}

// Enforce exact mirror symmetry of a rule that is symmetric in exact arithmetic.
fn symmetrize(rule: &mut Rule) {
    let n = rule.len();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        let w = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.nodes[i] = -x;
        rule.nodes[j] = x;
        rule.weights[i] = w;
        rule.weights[j] = w;
    }
    if n % 2 == 1 {
        rule.nodes[n / 2] = 0.0;
    }
}

/// Product rule on the unit sphere with normalised surface measure (weights
/// sum to 1): Gauss–Legendre in `cos(theta)`, uniform in `phi`.
///
/// Exact for spherical polynomials of degree `<= min(2 n_theta - 1, n_phi - 1)`.
/// With `n_phi` even the node set is invariant under `omega -> -omega`.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn new(n_theta: usize, n_phi: usize) -> Self {
        assert!(n_phi.is_multiple_of(2), "n_phi must be even");
        let gl = gauss_legendre(n_theta);
        let mut points = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (&z, &wz) in gl.nodes.iter().zip(&gl.weights) {
            let s = (1.0 - z * z).max(0.0).sqrt();
            for j in 0..n_phi {
                let phi = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / n_phi as f64;
                points.push([s * phi.cos(), s * phi.sin(), z]);
                weights.push(0.5 * wz / n_phi as f64);
            }
        }
        SphereRule { points, weights }
    }

    /// Smallest rule exact to polynomial degree `degree`.
    pub fn exact_to(degree: usize) -> Self {
        let n_theta = degree / 2 + 1;
        let n_phi = (degree + 1).next_multiple_of(2).max(2);
        Self::new(n_theta, n_phi)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_factorial(n: i64) -> f64 {
        if n <= 0 {
            1.0
        } else {
            n as f64 * double_factorial(n - 2)
        }
    }

    #[test]
    fn hermite_moments_exact() {
        let rule = gauss_hermite(8);
        for p in 0..16 {
            let q = rule.integrate(|x| x.powi(p as i32));
            let exact = if p % 2 == 1 { 0.0 } else { double_factorial(p - 1) };
            assert!((q - exact).abs() <= 1e-11 * exact.max(1.0), "p={p}: {q} vs {exact}");
        }
    }

    #[test]
    fn legendre_moments_exact() {
        let rule = gauss_legendre(6);
        for p in 0..12 {
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            assert!((rule.integrate(|x| x.powi(p)) - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn laguerre_moments_exact() {
        // E[t^p] under t e^{-t} is (p + 1)!
        let rule = gauss_laguerre(5, 1.0);
        let mut fact = 1.0;
        for p in 0..10 {
            fact *= (p + 1) as f64;
            let q = rule.integrate(|t| t.powi(p));
            assert!((q - fact).abs() < 1e-11 * fact, "p={p}");
        }
    }

    #[test]
    fn radial_rule_matches_chi_moments() {
        // E|v|^p for a 3D standard normal: 2^{p/2} Gamma((p+3)/2) / Gamma(3/2)
        let rule = gauss_radial_maxwell(8);
        let exact = [
            1.0,
            2.0 * (2.0 / std::f64::consts::PI).sqrt(),
            3.0,
            8.0 * (2.0 / std::f64::consts::PI).sqrt(),
            15.0,
        ];
        for (p, &e) in exact.iter().enumerate() {
            let q = rule.integrate(|r| r.powi(p as i32));
            assert!((q - e).abs() < 1e-13 * e, "p={p}: {q} vs {e}");
        }
    }

    #[test]
    fn sphere_rule_integrates_monomials() {
        let rule = SphereRule::exact_to(8);
        let avg = |f: &dyn Fn([f64; 3]) -> f64| -> f64 {
            rule.points.iter().zip(&rule.weights).map(|(p, w)| w * f(*p)).sum()
        };
        assert!((avg(&|_| 1.0) - 1.0).abs() < 1e-15);
        assert!((avg(&|p| p[0] * p[0]) - 1.0 / 3.0).abs() < 1e-15);
        assert!((avg(&|p| p[2].powi(4)) - 0.2).abs() < 1e-15);
        assert!((avg(&|p| p[0] * p[0] * p[1] * p[1]) - 1.0 / 15.0).abs() < 1e-15);
        assert!(avg(&|p| p[0] * p[1] * p[2]).abs() < 1e-15);
    }
}
