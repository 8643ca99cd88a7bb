//! Truncated Fourier series on the flat torus `[0, 2π)²`.
//!
//! A scalar is `f(x, y) = Σ c_{mn} e^{i(mx + ny)}` over `|m|, |n| ≤ K`, with
//! `c_{-m,-n} = conj(c_{mn})` for real fields. Coefficients are stored at
//! index `(m + K)(2K + 1) + (n + K)`.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::GeometryError;

#[derive(Clone, Debug, PartialEq)]
pub struct TorusScalar {
    pub k: usize,
    pub c: Vec<Complex64>,
}

/// Value and first/second partial derivatives of a scalar at a point:
/// `[f, f_x, f_y, f_xx, f_xy, f_yy]`.
pub type Jet2 = [f64; 6];

impl TorusScalar {
    pub fn zeros(k: usize) -> Self {
        TorusScalar {
            k,
            c: vec![Complex64::new(0.0, 0.0); (2 * k + 1) * (2 * k + 1)],
        }
    }

    pub fn new(k: usize, c: Vec<Complex64>) -> Result<Self, GeometryError> {
        let expected = (2 * k + 1) * (2 * k + 1);
        if c.len() != expected {
            return Err(GeometryError::CoeffLength {
                expected,
                got: c.len(),
            });
        }
        Ok(TorusScalar { k, c })
    }

    #[inline]
    pub fn index(&self, m: i64, n: i64) -> usize {
        let k = self.k as i64;
        ((m + k) * (2 * k + 1) + (n + k)) as usize
    }

    pub fn get(&self, m: i64, n: i64) -> Complex64 {
        let k = self.k as i64;
        if m.abs() > k || n.abs() > k {
            return Complex64::new(0.0, 0.0);
        }
        self.c[self.index(m, n)]
    }

    /// Sets `c_{mn}` and its Hermitian partner.
    pub fn set(&mut self, m: i64, n: i64, value: Complex64) {
        let i = self.index(m, n);
        let j = self.index(-m, -n);
        if i == j {
            self.c[i] = Complex64::new(value.re, 0.0);
        } else {
            self.c[i] = value;
            self.c[j] = value.conj();
        }
    }

    /// Adds `a cos(mx + ny) + b sin(mx + ny)`.
    pub fn add_trig(&mut self, m: i64, n: i64, a: f64, b: f64) {
        if m == 0 && n == 0 {
            let i = self.index(0, 0);
            self.c[i] += Complex64::new(a, 0.0);
            return;
        }
        let z = self.get(m, n) + Complex64::new(a / 2.0, -b / 2.0);
        self.set(m, n, z);
    }

    pub fn modes(&self) -> impl Iterator<Item = (i64, i64, usize)> + '_ {
        let k = self.k as i64;
        (-k..=k).flat_map(move |m| (-k..=k).map(move |n| (m, n, self.index(m, n))))
    }

    /// `max |c_{mn} − conj(c_{-m,-n})|`.
    pub fn hermitian_defect(&self) -> f64 {
        self.modes()
            .map(|(m, n, i)| (self.c[i] - self.get(-m, -n).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.get(0, 0).re
    }

    pub fn map_modes<F: Fn(i64, i64, Complex64) -> Complex64>(&self, f: F) -> Self {
        let mut out = self.clone();
        for (m, n, i) in self.modes() {
            out.c[i] = f(m, n, self.c[i]);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map_modes(|_, _, c| c * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        let k = self.k.max(other.k);
        let mut out = self.resized(k);
        for (m, n, i) in other.modes() {
            let j = out.index(m, n);
            out.c[j] += other.c[i];
        }
        out
    }

    /// Truncates or zero-pads to degree `k`.
    pub fn resized(&self, k: usize) -> Self {
        let mut out = TorusScalar::zeros(k);
        let kk = k as i64;
        for (m, n, i) in self.modes() {
            if m.abs() <= kk && n.abs() <= kk {
                let j = out.index(m, n);
                out.c[j] = self.c[i];
            }
        }
        out
    }

    pub fn dx(&self) -> Self {
        self.map_modes(|m, _, c| c * Complex64::new(0.0, m as f64))
    }

    pub fn dy(&self) -> Self {
        self.map_modes(|_, n, c| c * Complex64::new(0.0, n as f64))
    }

    pub fn laplacian(&self) -> Self {
        self.map_modes(|m, n, c| c * (-((m * m + n * n) as f64)))
    }

    /// Sum of `|c|²` over the modes, i.e. the mean of `f²`.
    pub fn mean_square(&self) -> f64 {
        self.c.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.c.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    fn phases(&self, a: f64) -> Vec<Complex64> {
        let k = self.k;
        let mut out = vec![Complex64::new(1.0, 0.0); 2 * k + 1];
        let e = Complex64::cis(a);
        for j in 1..=k {
            out[k + j] = out[k + j - 1] * e;
            out[k - j] = out[k + j].conj();
        }
        out
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let ex = self.phases(x);
        let ey = self.phases(y);
        let w = 2 * self.k + 1;
        let mut total = 0.0;
        for (a, exm) in ex.iter().enumerate() {
            let row = &self.c[a * w..(a + 1) * w];
            let mut s = Complex64::new(0.0, 0.0);
            for (c, eyn) in row.iter().zip(&ey) {
                s += c * eyn;
            }
            total += (s * exm).re;
        }
        total
    }

    /// Value with first and second partial derivatives.
    pub fn eval_jet(&self, x: f64, y: f64) -> Jet2 {
        let ex = self.phases(x);
        let ey = self.phases(y);
        let k = self.k as i64;
        let w = 2 * self.k + 1;
        let mut out = [0.0; 6];
        for (a, exm) in ex.iter().enumerate() {
            let m = a as i64 - k;
            let row = &self.c[a * w..(a + 1) * w];
            // Σ_n c e^{iny}, Σ_n (in) c e^{iny}, Σ_n (in)² c e^{iny}
            let mut s0 = Complex64::new(0.0, 0.0);
            let mut s1 = Complex64::new(0.0, 0.0);
            let mut s2 = Complex64::new(0.0, 0.0);
            for (b, (c, eyn)) in row.iter().zip(&ey).enumerate() {
                let n = (b as i64 - k) as f64;
                let t = c * eyn;
                s0 += t;
                s1 += t * Complex64::new(0.0, n);
                s2 -= t * (n * n);
            }
            let mf = m as f64;
            let im = Complex64::new(0.0, mf);
            out[0] += (s0 * exm).re;
            out[1] += (s0 * exm * im).re;
            out[2] += (s1 * exm).re;
            out[3] -= (s0 * exm).re * mf * mf;
            out[4] += (s1 * exm * im).re;
            out[5] += (s2 * exm).re;
        }
        out
    }

    /// Values on the uniform `n × n` grid, row-major with `x` slowest.
    pub fn to_grid(&self, n: usize) -> Vec<f64> {
        let nn = n as i64;
        let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
        for (m, q, i) in self.modes() {
            if 2 * m.abs() >= nn || 2 * q.abs() >= nn {
                if self.c[i].norm() != 0.0 {
                    log::warn!("mode ({m},{q}) dropped on {n}-point grid");
                }
                continue;
            }
            let a = m.rem_euclid(nn) as usize;
            let b = q.rem_euclid(nn) as usize;
            buf[a * n + b] += self.c[i];
        }
        fft2(&mut buf, n, true);
        buf.iter().map(|z| z.re).collect()
    }

    /// Discrete Fourier fit of grid values, truncated to degree `k`.
    ///
    /// Requires `n ≥ 2k + 1`; an even-`n` Nyquist bin is discarded.
    pub fn from_grid(values: &[f64], n: usize, k: usize) -> Result<Self, GeometryError> {
        if values.len() != n * n {
            return Err(GeometryError::GridMismatch(format!(
                "expected {} values, got {}",
                n * n,
                values.len()
            )));
        }
        if n < 2 * k + 1 {
            return Err(GeometryError::GridMismatch(format!(
                "{n}-point grid cannot resolve degree {k}"
            )));
        }
        let mut buf: Vec<Complex64> = values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        fft2(&mut buf, n, false);
        let scale = 1.0 / (n * n) as f64;
        let mut out = TorusScalar::zeros(k);
        let nn = n as i64;
        for (m, q, i) in out.clone().modes() {
            let a = m.rem_euclid(nn) as usize;
            let b = q.rem_euclid(nn) as usize;
            out.c[i] = buf[a * n + b] * scale;
        }
        // Enforce exact Hermitian symmetry against rounding.
        for (m, q, i) in out.clone().modes() {
            let j = out.index(-m, -q);
            if i < j {
                let avg = (out.c[i] + out.c[j].conj()) * 0.5;
                out.c[i] = avg;
                out.c[j] = avg.conj();
            } else if i == j {
                out.c[i].im = 0.0;
            }
        }
        Ok(out)
    }
}

fn fft2(buf: &mut [Complex64], n: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    for row in buf.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = buf[i * n + j];
        }
        fft.process(&mut col);
        for i in 0..n {
            buf[i * n + j] = col[i];
        }
    }
}

/// A torus vector field `u ∂_x + v ∂_y`.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusVector {
    pub u: TorusScalar,
    pub v: TorusScalar,
}

impl TorusVector {
    pub fn zeros(k: usize) -> Self {
        TorusVector {
            u: TorusScalar::zeros(k),
            v: TorusScalar::zeros(k),
        }
    }

    pub fn degree(&self) -> usize {
        self.u.k.max(self.v.k)
    }

    pub fn eval(&self, x: f64, y: f64) -> Vector3<f64> {
        Vector3::new(self.u.eval(x, y), self.v.eval(x, y), 0.0)
    }

    /// Value and Jacobian `J` with `∇_w v = J w`.
    pub fn eval_jet(&self, x: f64, y: f64) -> (Vector3<f64>, Matrix3<f64>) {
        let a = self.u.eval_jet(x, y);
        let b = self.v.eval_jet(x, y);
        (
            Vector3::new(a[0], b[0], 0.0),
            Matrix3::new(a[1], a[2], 0.0, b[1], b[2], 0.0, 0.0, 0.0, 0.0),
        )
    }

    pub fn divergence(&self) -> TorusScalar {
        self.u.dx().add(&self.v.dy())
    }

    pub fn map_components<F: Fn(&TorusScalar) -> TorusScalar>(&self, f: F) -> Self {
        TorusVector {
            u: f(&self.u),
            v: f(&self.v),
        }
    }

    /// Helmholtz–Leray projection onto divergence-free fields, mode by mode.
    pub fn leray(&self) -> Self {
        let k = self.degree();
        let u = self.u.resized(k);
        let v = self.v.resized(k);
        let mut pu = u.clone();
        let mut pv = v.clone();
        for (m, n, i) in u.modes() {
            let kk = (m * m + n * n) as f64;
            if kk == 0.0 {
                continue;
            }
            let dot = u.c[i] * m as f64 + v.c[i] * n as f64;
            pu.c[i] = u.c[i] - dot * (m as f64 / kk);
            pv.c[i] = v.c[i] - dot * (n as f64 / kk);
        }
        TorusVector { u: pu, v: pv }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trig_mode_round_trip() {
        let mut f = TorusScalar::zeros(3);
        f.add_trig(1, 0, 1.0, 0.0);
        f.add_trig(2, -1, 0.0, 0.5);
        let (x, y) = (0.37f64, 1.91f64);
        let want = x.cos() + 0.5 * (2.0 * x - y).sin();
        assert!((f.eval(x, y) - want).abs() < 1e-14);
        let jet = f.eval_jet(x, y);
        assert!((jet[0] - want).abs() < 1e-14);
        assert!((jet[1] - (-x.sin() + (2.0 * x - y).cos())).abs() < 1e-14);
        assert!((jet[2] - (-0.5 * (2.0 * x - y).cos())).abs() < 1e-14);
        assert!((jet[3] - (-x.cos() - 2.0 * (2.0 * x - y).sin())).abs() < 1e-13);
        assert!((jet[4] - (2.0 * x - y).sin()).abs() < 1e-13);
        assert!((jet[5] - (-0.5 * (2.0 * x - y).sin())).abs() < 1e-13);
        assert_eq!(f.hermitian_defect(), 0.0);
    }

    #[test]
    fn grid_round_trip() {
        let mut f = TorusScalar::zeros(4);
        f.add_trig(0, 0, 0.25, 0.0);
        f.add_trig(3, 4, 0.3, -0.8);
        f.add_trig(-4, 1, 1.2, 0.1);
        for n in [9, 10, 16] {
            let g = f.to_grid(n);
            let x = 2.0 * std::f64::consts::PI * 3.0 / n as f64;
            let y = 2.0 * std::f64::consts::PI * 5.0 / n as f64;
            assert!((g[3 * n + 5] - f.eval(x, y)).abs() < 1e-13);
            let back = TorusScalar::from_grid(&g, n, 4).unwrap();
            for (a, b) in back.c.iter().zip(&f.c) {
                assert!((a - b).norm() < 1e-14);
            }
        }
        assert!(TorusScalar::from_grid(&f.to_grid(8), 8, 4).is_err());
    }
}
