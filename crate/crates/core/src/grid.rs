//! Periodic spatial grid on the torus `[0, 2 pi)^3` with spectral operators.
//!
//! Scalar fields are stored as normalised Fourier coefficients
//! `g_k = (1/n) sum_x g(x) e^{-i k.x}` in FFT order, row-major over the
//! three axes. Inactive axes have a single point and wavenumber zero.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type Spectrum = Vec<Complex64>;
pub type VectorSpectrum = [Spectrum; 3];

/// Volume of the torus.
pub const TORUS_VOLUME: f64 = 8.0 * PI * PI * PI;

#[derive(Clone)]
pub struct SpatialGrid {
    n: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl fmt::Debug for SpatialGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpatialGrid").field("n", &self.n).finish()
    }
}

impl PartialEq for SpatialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl SpatialGrid {
    /// Points per axis; each must be 1 (inactive) or a power of two `>= 4`.
    pub fn new(n: [usize; 3]) -> Result<Self> {
        for &m in &n {
            if !(m == 1 || (m >= 4 && m.is_power_of_two())) {
                return Err(Error::InvalidInput(format!(
                    "grid size {m} must be 1 or a power of two >= 4"
                )));
            }
        }
        let mut planner = FftPlanner::new();
        let forward = n.map(|m| planner.plan_fft_forward(m));
        let inverse = n.map(|m| planner.plan_fft_inverse(m));
        Ok(SpatialGrid { n, forward, inverse })
    }

    /// `dims` active axes with `modes` points each.
    pub fn uniform(dims: usize, modes: usize) -> Result<Self> {
        if !(1..=3).contains(&dims) {
            return Err(Error::InvalidInput(format!("dims_active must be 1, 2 or 3, got {dims}")));
        }
        let mut n = [1; 3];
        n[..dims].iter_mut().for_each(|m| *m = modes);
        Self::new(n)
    }

    pub fn shape(&self) -> [usize; 3] {
        self.n
    }

    pub fn dims_active(&self) -> usize {
        self.n.iter().filter(|&&m| m > 1).count()
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Smallest grid spacing over the active axes.
    pub fn dx(&self) -> f64 {
        let m = self.n.iter().copied().filter(|&m| m > 1).max().unwrap_or(1);
        2.0 * PI / m as f64
    }

    fn split(&self, idx: usize) -> [usize; 3] {
        [idx / (self.n[1] * self.n[2]), (idx / self.n[2]) % self.n[1], idx % self.n[2]]
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let c = self.split(idx);
        [0, 1, 2].map(|a| 2.0 * PI * c[a] as f64 / self.n[a] as f64)
    }

    fn freq(m: usize, n: usize) -> i64 {
        if m <= n / 2 {
            m as i64
        } else {
            m as i64 - n as i64
        }
    }

    pub fn wavenumber(&self, idx: usize) -> [i64; 3] {
        let c = self.split(idx);
        [0, 1, 2].map(|a| Self::freq(c[a], self.n[a]))
    }

    pub fn k(&self, idx: usize) -> [f64; 3] {
        self.wavenumber(idx).map(|x| x as f64)
    }

    pub fn k2(&self, idx: usize) -> f64 {
        self.wavenumber(idx).iter().map(|&x| (x * x) as f64).sum()
    }

    /// Two-thirds rule: modes with `3|k_a| < n_a` on every axis survive.
    pub fn keep(&self, idx: usize) -> bool {
        let k = self.wavenumber(idx);
        (0..3).all(|a| 3 * k[a].unsigned_abs() < self.n[a] as u64)
    }

    /// Index of the wavenumber `k`, if it is on the grid.
    pub fn index_of(&self, k: [i64; 3]) -> Option<usize> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let n = self.n[a] as i64;
            c[a] = k[a].rem_euclid(n) as usize;
            if Self::freq(c[a], self.n[a]) != k[a] {
                return None;
            }
        }
        Some((c[0] * self.n[1] + c[1]) * self.n[2] + c[2])
    }

    pub fn dealias(&self, s: &mut [Complex64]) {
        for (i, c) in s.iter_mut().enumerate() {
            if !self.keep(i) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let [n0, n1, n2] = self.n;
        if n2 > 1 {
            for row in data.chunks_exact_mut(n2) {
                plans[2].process(row);
            }
        }
        let mut line = Vec::new();
        for (axis, stride, count) in [(1usize, n2, n1), (0usize, n1 * n2, n0)] {
            if count == 1 {
                continue;
            }
            line.resize(count, Complex64::new(0.0, 0.0));
            for base in 0..data.len() {
                // base must be the first element of a line along `axis`
                let pos = (base / stride) % count;
                if pos != 0 {
                    continue;
                }
                for (j, l) in line.iter_mut().enumerate() {
                    *l = data[base + j * stride];
                }
                plans[axis].process(&mut line);
                for (j, l) in line.iter().enumerate() {
                    data[base + j * stride] = *l;
                }
            }
        }
    }

    /// Real samples to normalised spectrum.
    pub fn forward_real(&self, vals: &[f64]) -> Spectrum {
        let mut data: Vec<Complex64> = vals.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        let s = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|c| *c *= s);
        data
    }

    /// Spectrum to real samples (imaginary round-off dropped).
    pub fn inverse_real(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut data = coeffs.to_vec();
        self.transform(&mut data, &self.inverse);
        data.iter().map(|c| c.re).collect()
    }

    pub fn from_fn(&self, f: impl Fn([f64; 3]) -> f64) -> Spectrum {
        let vals: Vec<f64> = (0..self.len()).map(|i| f(self.point(i))).collect();
        self.forward_real(&vals)
    }

    pub fn zeros(&self) -> Spectrum {
        vec![Complex64::new(0.0, 0.0); self.len()]
    }

    pub fn zeros_vec(&self) -> VectorSpectrum {
        [self.zeros(), self.zeros(), self.zeros()]
    }

    /// `i k_axis s`.
    pub fn derivative(&self, s: &[Complex64], axis: usize) -> Spectrum {
        s.iter()
            .enumerate()
            .map(|(i, c)| Complex64::new(0.0, self.k(i)[axis]) * c)
            .collect()
    }

    pub fn div(&self, w: &VectorSpectrum) -> Spectrum {
        (0..self.len())
            .map(|i| {
                let k = self.k(i);
                Complex64::new(0.0, 1.0) * (k[0] * w[0][i] + k[1] * w[1][i] + k[2] * w[2][i])
            })
            .collect()
    }

    pub fn curl(&self, w: &VectorSpectrum) -> VectorSpectrum {
        let mut out = self.zeros_vec();
        let im = Complex64::new(0.0, 1.0);
        for i in 0..self.len() {
            let k = self.k(i);
            for a in 0..3 {
                let (b, c) = ((a + 1) % 3, (a + 2) % 3);
                out[a][i] = im * (k[b] * w[c][i] - k[c] * w[b][i]);
            }
        }
        out
    }

    pub fn grad(&self, s: &[Complex64]) -> VectorSpectrum {
        [0, 1, 2].map(|a| self.derivative(s, a))
    }

    /// `int g dx`.
    pub fn integral(&self, s: &[Complex64]) -> f64 {
        TORUS_VOLUME * s[0].re
    }

    /// `int g h dx` for real fields.
    pub fn inner(&self, g: &[Complex64], h: &[Complex64]) -> f64 {
        TORUS_VOLUME * g.iter().zip(h).map(|(a, b)| (a * b.conj()).re).sum::<f64>()
    }

    /// Sobolev multiplier `sum_{j <= m} |k|^{2j}`.
    pub fn sobolev_weight(&self, idx: usize, m: usize) -> f64 {
        let k2 = self.k2(idx);
        (0..=m).map(|j| k2.powi(j as i32)).sum()
    }

    /// `||g||^2_{H^m} = sum_{j <= m} ||grad^j g||^2_{L^2}`.
    pub fn sobolev_sq(&self, s: &[Complex64], m: usize) -> f64 {
        TORUS_VOLUME * s.iter().enumerate().map(|(i, c)| self.sobolev_weight(i, m) * c.norm_sqr()).sum::<f64>()
    }

    pub fn sobolev_sq_vec(&self, w: &VectorSpectrum, m: usize) -> f64 {
        w.iter().map(|s| self.sobolev_sq(s, m)).sum()
    }

    /// Dealiased pseudo-spectral product.
    pub fn product(&self, g: &[Complex64], h: &[Complex64]) -> Spectrum {
        let a = self.inverse_real(g);
        let b = self.inverse_real(h);
        let p: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let mut s = self.forward_real(&p);
        self.dealias(&mut s);
        s
    }

    /// Dealiased pseudo-spectral cross product.
    pub fn cross(&self, g: &VectorSpectrum, h: &VectorSpectrum) -> VectorSpectrum {
        let a = g.each_ref().map(|s| self.inverse_real(s));
        let b = h.each_ref().map(|s| self.inverse_real(s));
        [0, 1, 2].map(|i| {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            let p: Vec<f64> = (0..self.len()).map(|x| a[j][x] * b[k][x] - a[k][x] * b[j][x]).collect();
            let mut s = self.forward_real(&p);
            self.dealias(&mut s);
            s
        })
    }
}
