//! Real spherical harmonics on the unit sphere, evaluated in ambient
//! polynomial form.
//!
//! `Y_l^m = √2 Q_l^m(z) Re (x + iy)^m` for `m > 0`, `√2 Q_l^{|m|}(z) Im (x + iy)^{|m|}`
//! for `m < 0` and `Q_l^0(z)` for `m = 0`, where `Q_l^m` is the normalized
//! `m`-th derivative of the Legendre polynomial. The polynomial extension to
//! `R³` gives ambient gradients and Hessians; surface quantities follow by
//! tangent projection. Coefficient of `Y_l^m` is stored at `l² + l + m`.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{Matrix3, Vector3};

use crate::geometry::sphere_project;
use crate::GeometryError;

#[inline]
pub fn sh_index(l: usize, m: i64) -> usize {
    debug_assert!(m.unsigned_abs() as usize <= l);
    ((l * l + l) as i64 + m) as usize
}

#[inline]
fn tri(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Degree of the harmonic stored at index `i`.
#[inline]
pub fn degree_of(i: usize) -> usize {
    (i as f64).sqrt().floor() as usize
}

#[inline]
pub fn cross_matrix(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

#[inline]
pub fn tangent_projector(x: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::identity() - x * x.transpose()
}

/// Visits every real harmonic of degree `≤ lmax` at `x`, passing its index,
/// value, ambient gradient and ambient Hessian of the polynomial extension.
/// With `order < 2` the Hessian is zero; with `order < 1` so is the gradient.
pub fn for_each_harmonic<F>(lmax: usize, x: &Vector3<f64>, order: u8, mut f: F)
where
    F: FnMut(usize, f64, &Vector3<f64>, &Matrix3<f64>),
{
    let z = x.z;
    let nt = tri(lmax + 1, 0);
    let mut q = vec![0.0; nt];
    let mut d = vec![0.0; nt];
    let mut s = vec![0.0; nt];
    let mut qmm = (1.0 / (4.0 * PI)).sqrt();
    for m in 0..=lmax {
        if m > 0 {
            qmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
        }
        q[tri(m, m)] = qmm;
        if m < lmax {
            let c = ((2 * m + 3) as f64).sqrt();
            q[tri(m + 1, m)] = c * z * qmm;
            d[tri(m + 1, m)] = c * qmm;
        }
        for l in m + 2..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let l1 = lf - 1.0;
            let b = ((l1 * l1 - mf * mf) / (4.0 * l1 * l1 - 1.0)).sqrt();
            let (i, i1, i2) = (tri(l, m), tri(l - 1, m), tri(l - 2, m));
            q[i] = a * (z * q[i1] - b * q[i2]);
            d[i] = a * (q[i1] + z * d[i1] - b * d[i2]);
            s[i] = a * (2.0 * d[i1] + z * s[i1] - b * s[i2]);
        }
    }
    // Re/Im (x + iy)^m
    let mut cm = vec![0.0; lmax + 1];
    let mut sm = vec![0.0; lmax + 1];
    cm[0] = 1.0;
    for m in 1..=lmax {
        cm[m] = x.x * cm[m - 1] - x.y * sm[m - 1];
        sm[m] = x.x * sm[m - 1] + x.y * cm[m - 1];
    }
    let at = |v: &[f64], k: isize| if k < 0 { 0.0 } else { v[k as usize] };
    let zero_g = Vector3::zeros();
    let zero_h = Matrix3::zeros();
    let sqrt2 = std::f64::consts::SQRT_2;
    for l in 0..=lmax {
        let base = l * l + l;
        for m in 0..=l {
            let i = tri(l, m);
            let (qv, dv, sv) = (q[i], d[i], s[i]);
            if m == 0 {
                if order == 0 {
                    f(base, qv, &zero_g, &zero_h);
                } else {
                    let g = Vector3::new(0.0, 0.0, dv);
                    let mut h = Matrix3::zeros();
                    if order > 1 {
                        h[(2, 2)] = sv;
                    }
                    f(base, qv, &g, &h);
                }
                continue;
            }
            let mi = m as isize;
            let mf = m as f64;
            let m2 = mf * (mf - 1.0);
            // (P, P_x, P_y, P_xx, P_xy, P_yy) for P = C_m and P = S_m.
            let c_poly = [
                cm[m],
                mf * cm[m - 1],
                -mf * sm[m - 1],
                m2 * at(&cm, mi - 2),
                -m2 * at(&sm, mi - 2),
                -m2 * at(&cm, mi - 2),
            ];
            let s_poly = [
                sm[m],
                mf * sm[m - 1],
                mf * cm[m - 1],
                m2 * at(&sm, mi - 2),
                m2 * at(&cm, mi - 2),
                -m2 * at(&sm, mi - 2),
            ];
            for (idx, p) in [(base + m, c_poly), (base - m, s_poly)] {
                let value = sqrt2 * qv * p[0];
                if order == 0 {
                    f(idx, value, &zero_g, &zero_h);
                    continue;
                }
                let g = Vector3::new(qv * p[1], qv * p[2], dv * p[0]) * sqrt2;
                let h = if order > 1 {
                    Matrix3::new(
                        qv * p[3],
                        qv * p[4],
                        dv * p[1],
                        qv * p[4],
                        qv * p[5],
                        dv * p[2],
                        dv * p[1],
                        dv * p[2],
                        sv * p[0],
                    ) * sqrt2
                } else {
                    zero_h
                };
                f(idx, value, &g, &h);
            }
        }
    }
}

/// Real spherical-harmonic expansion of a scalar, degrees `≤ l`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereScalar {
    pub l: usize,
    pub c: Vec<f64>,
}

impl SphereScalar {
    pub fn zeros(l: usize) -> Self {
        SphereScalar {
            l,
            c: vec![0.0; (l + 1) * (l + 1)],
        }
    }

    pub fn new(l: usize, c: Vec<f64>) -> Result<Self, GeometryError> {
        let expected = (l + 1) * (l + 1);
        if c.len() != expected {
            return Err(GeometryError::CoeffLength {
                expected,
                got: c.len(),
            });
        }
        Ok(SphereScalar { l, c })
    }

    pub fn get(&self, l: usize, m: i64) -> f64 {
        if l > self.l {
            return 0.0;
        }
        self.c[sh_index(l, m)]
    }

    pub fn set(&mut self, l: usize, m: i64, value: f64) {
        let i = sh_index(l, m);
        self.c[i] = value;
    }

    pub fn mean(&self) -> f64 {
        self.c[0] / (4.0 * PI).sqrt()
    }

    pub fn map_degrees<F: Fn(usize, f64) -> f64>(&self, f: F) -> Self {
        SphereScalar {
            l: self.l,
            c: self
                .c
                .iter()
                .enumerate()
                .map(|(i, c)| f(degree_of(i), *c))
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map_degrees(|_, c| c * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.resized(self.l.max(other.l));
        for (i, c) in other.c.iter().enumerate() {
            out.c[i] += c;
        }
        out
    }

    pub fn resized(&self, l: usize) -> Self {
        let mut out = SphereScalar::zeros(l);
        let n = out.c.len().min(self.c.len());
        out.c[..n].copy_from_slice(&self.c[..n]);
        out
    }

    pub fn laplacian(&self) -> Self {
        self.map_degrees(|l, c| -((l * (l + 1)) as f64) * c)
    }

    pub fn mean_square_integral(&self) -> f64 {
        self.c.iter().map(|c| c * c).sum()
    }

    pub fn eval(&self, x: &Vector3<f64>) -> f64 {
        let mut total = 0.0;
        for_each_harmonic(self.l, x, 0, |i, y, _, _| total += self.c[i] * y);
        total
    }

    /// Value and surface gradient.
    pub fn eval_grad(&self, x: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let mut total = 0.0;
        let mut g = Vector3::zeros();
        for_each_harmonic(self.l, x, 1, |i, y, gy, _| {
            total += self.c[i] * y;
            g += gy * self.c[i];
        });
        (total, sphere_project(x, &g))
    }

    /// Value, ambient gradient and ambient Hessian of the polynomial extension.
    pub fn eval_ambient(&self, x: &Vector3<f64>) -> (f64, Vector3<f64>, Matrix3<f64>) {
        let mut total = 0.0;
        let mut g = Vector3::zeros();
        let mut h = Matrix3::zeros();
        for_each_harmonic(self.l, x, 2, |i, y, gy, hy| {
            let c = self.c[i];
            if c != 0.0 {
                total += c * y;
                g += gy * c;
                h += hy * c;
            }
        });
        (total, g, h)
    }
}

/// A sphere vector field `rot ψ + ∇φ` with `rot ψ = x × ∇ψ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereVector {
    pub psi: SphereScalar,
    pub phi: SphereScalar,
}

impl SphereVector {
    pub fn zeros(l: usize) -> Self {
        SphereVector {
            psi: SphereScalar::zeros(l),
            phi: SphereScalar::zeros(l),
        }
    }

    pub fn degree(&self) -> usize {
        self.psi.l.max(self.phi.l)
    }

    /// Rotation field `e₃ × x` scaled by `amplitude`.
    pub fn killing(l: usize, amplitude: f64) -> Self {
        let mut out = SphereVector::zeros(l.max(1));
        out.psi.set(1, 0, -amplitude * (4.0 * PI / 3.0).sqrt());
        out
    }

    pub fn eval(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let l = self.degree();
        let mut gpsi = Vector3::zeros();
        let mut gphi = Vector3::zeros();
        for_each_harmonic(l, x, 1, |i, _, g, _| {
            if i < self.psi.c.len() {
                gpsi += g * self.psi.c[i];
            }
            if i < self.phi.c.len() {
                gphi += g * self.phi.c[i];
            }
        });
        x.cross(&gpsi) + sphere_project(x, &gphi)
    }

    /// Value and tangent Jacobian `J` (`J x = 0`) with `∇_w v = J w`.
    pub fn eval_jet(&self, x: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
        let l = self.degree();
        let mut gpsi = Vector3::zeros();
        let mut gphi = Vector3::zeros();
        let mut hpsi = Matrix3::zeros();
        let mut hphi = Matrix3::zeros();
        for_each_harmonic(l, x, 2, |i, _, g, h| {
            if let Some(c) = self.psi.c.get(i).filter(|c| **c != 0.0) {
                gpsi += g * *c;
                hpsi += h * *c;
            }
            if let Some(c) = self.phi.c.get(i).filter(|c| **c != 0.0) {
                gphi += g * *c;
                hphi += h * *c;
            }
        });
        let p = tangent_projector(x);
        let value = x.cross(&gpsi) + p * gphi;
        // ∇_w(x × G) = Π(w × G + x × Hw); ∇_w(ΠG) = Π H w − (x·G) w.
        let jac = p * (-cross_matrix(&gpsi) + cross_matrix(x) * hpsi + hphi) * p - p * x.dot(&gphi);
        (value, jac)
    }

    pub fn divergence(&self) -> SphereScalar {
        self.phi.laplacian()
    }

    pub fn leray(&self) -> Self {
        SphereVector {
            psi: self.psi.clone(),
            phi: SphereScalar::zeros(self.phi.l),
        }
    }

    pub fn map_potentials<F: Fn(&SphereScalar) -> SphereScalar>(&self, f: F) -> Self {
        SphereVector {
            psi: f(&self.psi),
            phi: f(&self.phi),
        }
    }
}

/// Gauss–Legendre latitudes × uniform longitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereGrid {
    pub nlat: usize,
    pub nlon: usize,
    /// Gauss–Legendre nodes in `z`, ascending.
    pub z: Vec<f64>,
    /// Quadrature weight of each node in a latitude ring, including `2π/nlon`.
    pub ring_weight: Vec<f64>,
}

impl SphereGrid {
    pub fn new(nlat: usize, nlon: usize) -> Result<Self, GeometryError> {
        let deg = NonZeroUsize::new(nlat)
            .ok_or_else(|| GeometryError::Invalid("nlat must be positive".into()))?;
        if nlon == 0 {
            return Err(GeometryError::Invalid("nlon must be positive".into()));
        }
        let rule = GaussLegendre::new(deg);
        let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let dlon = 2.0 * PI / nlon as f64;
        Ok(SphereGrid {
            nlat,
            nlon,
            z: pairs.iter().map(|p| p.0).collect(),
            ring_weight: pairs.iter().map(|p| p.1 * dlon).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nlat * self.nlon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node `(lon, lat)` and ambient position; latitude index slowest.
    pub fn node(&self, i: usize) -> (f64, f64, Vector3<f64>) {
        let (a, b) = (i / self.nlon, i % self.nlon);
        let z = self.z[a];
        let lon = 2.0 * PI * b as f64 / self.nlon as f64;
        let r = (1.0 - z * z).max(0.0).sqrt();
        let (s, c) = lon.sin_cos();
        (lon, z.asin(), Vector3::new(r * c, r * s, z).normalize())
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.ring_weight[i / self.nlon]
    }

    /// Scalar analysis; exact for degree `≤ l` when `nlat ≥ l + 1` and `nlon ≥ 2l + 1`.
    pub fn analyze_scalar(&self, values: &[f64], l: usize) -> SphereScalar {
        let mut out = SphereScalar::zeros(l);
        for (p, v) in values.iter().enumerate() {
            let (_, _, x) = self.node(p);
            let w = self.weight(p) * v;
            for_each_harmonic(l, &x, 0, |i, y, _, _| out.c[i] += w * y);
        }
        out
    }

    /// Helmholtz analysis of tangent samples; exact for potentials of degree
    /// `≤ l` when `nlat ≥ l + 2` and `nlon ≥ 2l + 3`.
    pub fn analyze_vector(&self, values: &[Vector3<f64>], l: usize) -> SphereVector {
        let mut out = SphereVector::zeros(l);
        for (p, v) in values.iter().enumerate() {
            let (_, _, x) = self.node(p);
            let w = self.weight(p);
            let xv = x.cross(v);
            for_each_harmonic(l, &x, 1, |i, _, g, _| {
                // v·(x × ∇Y) = (v × x)·∇Y
                out.phi.c[i] += w * v.dot(g);
                out.psi.c[i] -= w * xv.dot(g);
            });
        }
        for i in 1..out.phi.c.len() {
            let ll = (degree_of(i) * (degree_of(i) + 1)) as f64;
            out.phi.c[i] /= ll;
            out.psi.c[i] /= ll;
        }
        out.phi.c[0] = 0.0;
        out.psi.c[0] = 0.0;
        out
    }

    /// Weak-form divergence of tangent samples: coefficients of `div a`
    /// from `−∫ a·∇Y`.
    pub fn weak_divergence(&self, values: &[Vector3<f64>], l: usize) -> SphereScalar {
        let mut out = SphereScalar::zeros(l);
        for (p, a) in values.iter().enumerate() {
            let (_, _, x) = self.node(p);
            let w = self.weight(p);
            for_each_harmonic(l, &x, 1, |i, _, g, _| out.c[i] -= w * a.dot(g));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{laplace_beltrami_fd, Point};

    #[test]
    fn low_degree_closed_forms() {
        let x = Vector3::new(0.48, -0.6, 0.64);
        let mut vals = vec![0.0; 9];
        for_each_harmonic(2, &x, 0, |i, y, _, _| vals[i] = y);
        let c0 = (1.0 / (4.0 * PI)).sqrt();
        let c1 = (3.0 / (4.0 * PI)).sqrt();
        assert!((vals[0] - c0).abs() < 1e-15);
        assert!((vals[2] - c1 * x.z).abs() < 1e-15);
        assert!((vals[3] - c1 * x.x).abs() < 1e-15);
        assert!((vals[1] - c1 * x.y).abs() < 1e-15);
        let c22 = (15.0 / (16.0 * PI)).sqrt();
        assert!((vals[8] - c22 * (x.x * x.x - x.y * x.y)).abs() < 1e-15);
        let c20 = (5.0 / (16.0 * PI)).sqrt();
        assert!((vals[6] - c20 * (3.0 * x.z * x.z - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn orthonormal_under_quadrature() {
        let l = 6;
        let grid = SphereGrid::new(l + 1, 2 * l + 1).unwrap();
        let n = (l + 1) * (l + 1);
        let mut gram = vec![0.0; n * n];
        for p in 0..grid.len() {
            let (_, _, x) = grid.node(p);
            let mut y = vec![0.0; n];
            for_each_harmonic(l, &x, 0, |i, v, _, _| y[i] = v);
            for i in 0..n {
                for j in 0..n {
                    gram[i * n + j] += grid.weight(p) * y[i] * y[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[i * n + j] - want).abs() < 1e-13, "({i},{j})");
            }
        }
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let x = Vector3::new(0.3, 0.5, -0.81).normalize();
        let l = 5;
        let n = (l + 1) * (l + 1);
        let eval = |y: &Vector3<f64>| {
            let mut v = vec![0.0; n];
            let mut g = vec![Vector3::zeros(); n];
            for_each_harmonic(l, y, 1, |i, val, gr, _| {
                v[i] = val;
                g[i] = *gr;
            });
            (v, g)
        };
        let mut gs = vec![Vector3::zeros(); n];
        let mut hs = vec![Matrix3::zeros(); n];
        for_each_harmonic(l, &x, 2, |i, _, g, h| {
            gs[i] = *g;
            hs[i] = *h;
        });
        let h = 1e-6;
        for k in 0..3 {
            let mut e = Vector3::zeros();
            e[k] = h;
            let (vp, gp) = eval(&(x + e));
            let (vm, gm) = eval(&(x - e));
            for i in 0..n {
                assert!(((vp[i] - vm[i]) / (2.0 * h) - gs[i][k]).abs() < 1e-8);
                let col = (gp[i] - gm[i]) / (2.0 * h);
                assert!((col - hs[i].column(k)).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn harmonics_are_eigenfunctions() {
        let p = Point::sphere_lonlat(0.8, 0.3);
        for (l, m) in [(1usize, 0i64), (2, -1), (3, 2), (4, -4)] {
            let mut f = SphereScalar::zeros(l);
            f.set(l, m, 1.0);
            let lap = laplace_beltrami_fd(|q: &Point| f.eval(q.coords()), &p, 1e-4);
            let want = -((l * (l + 1)) as f64) * f.eval(p.coords());
            assert!((lap - want).abs() < 1e-5, "l={l} m={m}: {lap} vs {want}");
        }
    }

    #[test]
    fn killing_field_values() {
        let k = SphereVector::killing(2, 1.0);
        let x = Vector3::new(0.6, 0.0, 0.8);
        assert!((k.eval(&x) - Vector3::z().cross(&x)).norm() < 1e-14);
    }

    #[test]
    fn vector_analysis_round_trip() {
        let l = 4;
        let mut v = SphereVector::zeros(l);
        v.psi.set(2, 1, 0.7);
        v.psi.set(4, -3, -0.2);
        v.phi.set(1, -1, 0.5);
        v.phi.set(3, 3, 0.9);
        let grid = SphereGrid::new(l + 2, 2 * l + 3).unwrap();
        let samples: Vec<_> = (0..grid.len()).map(|p| v.eval(&grid.node(p).2)).collect();
        let back = grid.analyze_vector(&samples, l);
        for (a, b) in back.psi.c.iter().zip(&v.psi.c) {
            assert!((a - b).abs() < 1e-13);
        }
        for (a, b) in back.phi.c.iter().zip(&v.phi.c) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
