//! Orthonormal frames and the scalarization/realization correspondence.
//!
//! A frame `u` at `x` is an ordered orthonormal basis `(E_1, E_2)` of `T_xM`.
//! A rank-`(m, n)` tensor at `x` is scalarized to its `d^{m+n}` coefficients
//! `θ(E_{i_1}^♯, …, E_{i_m}^♯, E_{j_1}, …, E_{j_n})`, stored row-major over
//! `(i_1 … i_m, j_1 … j_n)`. Since frames are orthonormal, covector slots are
//! fed the frame vectors themselves.

use nalgebra::{Matrix2, Vector3};

use crate::geometry::{
    exp_raw, orthonormal_basis, sphere_project, transport_raw, ManifoldKind, Point, TangentVector,
    BASE_TOL,
};
use crate::GeometryError;

pub const FRAME_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub base: Point,
    pub basis: [Vector3<f64>; 2],
}

impl Frame {
    /// Checked constructor: basis vectors must be tangent and orthonormal to `1e-12`.
    pub fn new(base: Point, basis: [Vector3<f64>; 2]) -> Result<Self, GeometryError> {
        for e in &basis {
            TangentVector::new(base, *e)?;
        }
        let f = Frame { base, basis };
        let residual = f.orthonormality_residual();
        if residual > 1e-12 {
            return Err(GeometryError::NotOrthonormal { residual });
        }
        Ok(f)
    }

    /// Canonical frame at `p`: coordinate frame on the torus, east/north on the sphere.
    pub fn canonical(p: &Point) -> Self {
        Frame {
            base: *p,
            basis: orthonormal_basis(p),
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        self.base.kind()
    }

    /// `max |⟨E_i, E_j⟩ − δ_ij|`.
    pub fn orthonormality_residual(&self) -> f64 {
        let mut r: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let d = if i == j { 1.0 } else { 0.0 };
                r = r.max((self.basis[i].dot(&self.basis[j]) - d).abs());
            }
        }
        r
    }

    /// Frame coordinates of a tangent vector given by its carrier components.
    #[inline]
    pub fn coords_of(&self, v: &Vector3<f64>) -> [f64; 2] {
        [self.basis[0].dot(v), self.basis[1].dot(v)]
    }

    /// Carrier components of `u c = c_1 E_1 + c_2 E_2`.
    #[inline]
    pub fn vector_from(&self, c: &[f64; 2]) -> Vector3<f64> {
        self.basis[0] * c[0] + self.basis[1] * c[1]
    }
}

/// Coefficient array of a rank-`(m, n)` tensor in a frame basis.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorCoords {
    pub m: usize,
    pub n: usize,
    pub coeffs: Vec<f64>,
}

impl TensorCoords {
    pub fn new(m: usize, n: usize, coeffs: Vec<f64>) -> Result<Self, GeometryError> {
        let expected = FRAME_DIM.pow((m + n) as u32);
        if coeffs.len() != expected {
            return Err(GeometryError::CoeffLength {
                expected,
                got: coeffs.len(),
            });
        }
        Ok(TensorCoords { m, n, coeffs })
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        TensorCoords {
            m,
            n,
            coeffs: vec![0.0; FRAME_DIM.pow((m + n) as u32)],
        }
    }

    pub fn vector(c: [f64; 2]) -> Self {
        TensorCoords {
            m: 1,
            n: 0,
            coeffs: c.to_vec(),
        }
    }

    pub fn rank(&self) -> usize {
        self.m + self.n
    }

    /// Coordinates in the frame `uO` given coordinates in `u`.
    ///
    /// Every index, co- or contravariant, transforms with `Oᵀ = O⁻¹` because
    /// both frames are orthonormal.
    pub fn in_rotated_frame(&self, o: &Matrix2<f64>) -> TensorCoords {
        let r = self.rank();
        let mut out = self.coeffs.clone();
        // Apply Oᵀ along one axis at a time.
        for axis in 0..r {
            let stride = FRAME_DIM.pow((r - 1 - axis) as u32);
            let mut next = vec![0.0; out.len()];
            for (idx, slot) in next.iter_mut().enumerate() {
                let j = (idx / stride) % FRAME_DIM;
                let base = idx - j * stride;
                *slot = (0..FRAME_DIM)
                    .map(|i| o[(i, j)] * out[base + i * stride])
                    .sum();
            }
            out = next;
        }
        TensorCoords {
            m: self.m,
            n: self.n,
            coeffs: out,
        }
    }
}

/// A tensor at a point, stored by its ambient-carrier components
/// (`3^{m+n}` entries, row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct RealizedTensor {
    pub base: Point,
    pub m: usize,
    pub n: usize,
    pub components: Vec<f64>,
}

impl RealizedTensor {
    /// Evaluates the tensor on `m + n` tangent vectors (covector slots
    /// identified with vectors through the metric).
    pub fn eval(&self, args: &[Vector3<f64>]) -> f64 {
        assert_eq!(args.len(), self.m + self.n);
        let r = args.len();
        let mut total = 0.0;
        for (idx, c) in self.components.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let mut prod = *c;
            let mut rem = idx;
            for a in (0..r).rev() {
                prod *= args[a][rem % 3];
                rem /= 3;
            }
            total += prod;
        }
        total
    }

    pub fn as_vector(&self) -> Result<TangentVector, GeometryError> {
        if (self.m, self.n) != (1, 0) {
            return Err(GeometryError::RankMismatch {
                expected_m: 1,
                expected_n: 0,
                m: self.m,
                n: self.n,
            });
        }
        Ok(TangentVector::new_unchecked(
            self.base,
            Vector3::new(self.components[0], self.components[1], self.components[2]),
        ))
    }
}

fn multi_indices(rank: usize, dim: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = dim.pow(rank as u32);
    (0..total).map(move |mut idx| {
        let mut out = vec![0; rank];
        for a in (0..rank).rev() {
            out[a] = idx % dim;
            idx /= dim;
        }
        out
    })
}

/// Scalarization of a tangent vector.
pub fn scalarize(u: &Frame, v: &TangentVector) -> Result<TensorCoords, GeometryError> {
    if !u.base.approx_eq(&v.base, BASE_TOL) {
        return Err(GeometryError::BaseMismatch);
    }
    Ok(TensorCoords::vector(u.coords_of(&v.components)))
}

/// Scalarization of a rank-`(m, n)` tensor supplied as a multilinear evaluator
/// on `m + n` tangent vectors at the frame's base point.
pub fn scalarize_multilinear<F>(u: &Frame, m: usize, n: usize, theta: F) -> TensorCoords
where
    F: Fn(&[Vector3<f64>]) -> f64,
{
    let coeffs = multi_indices(m + n, FRAME_DIM)
        .map(|ix| {
            let args: Vec<Vector3<f64>> = ix.iter().map(|&i| u.basis[i]).collect();
            theta(&args)
        })
        .collect();
    TensorCoords { m, n, coeffs }
}

/// Realization `u c`: the tensor whose scalarization in `u` is `c`.
pub fn realize(u: &Frame, c: &TensorCoords) -> RealizedTensor {
    let r = c.rank();
    let mut components = vec![0.0; 3usize.pow(r as u32)];
    for (ix, coeff) in multi_indices(r, FRAME_DIM).zip(&c.coeffs) {
        if *coeff == 0.0 {
            continue;
        }
        for (out_idx, slot) in components.iter_mut().enumerate() {
            let mut prod = *coeff;
            let mut rem = out_idx;
            for a in (0..r).rev() {
                prod *= u.basis[ix[a]][rem % 3];
                rem /= 3;
            }
            *slot += prod;
        }
    }
    RealizedTensor {
        base: u.base,
        m: c.m,
        n: c.n,
        components,
    }
}

/// Realization restricted to rank `(1, 0)`.
pub fn realize_vector(u: &Frame, c: &TensorCoords) -> Result<TangentVector, GeometryError> {
    if (c.m, c.n) != (1, 0) {
        return Err(GeometryError::RankMismatch {
            expected_m: 1,
            expected_n: 0,
            m: c.m,
            n: c.n,
        });
    }
    Ok(TangentVector::new_unchecked(
        u.base,
        u.vector_from(&[c.coeffs[0], c.coeffs[1]]),
    ))
}

/// Right action of `O ∈ O(2)`: `E'_j = Σ_i O_ij E_i`.
pub fn rotate_frame(u: &Frame, o: &Matrix2<f64>) -> Result<Frame, GeometryError> {
    let residual = (o.transpose() * o - Matrix2::identity()).abs().max();
    if residual > 1e-12 {
        return Err(GeometryError::NonOrthogonal { residual });
    }
    let b = &u.basis;
    Ok(Frame {
        base: u.base,
        basis: [
            b[0] * o[(0, 0)] + b[1] * o[(1, 0)],
            b[0] * o[(0, 1)] + b[1] * o[(1, 1)],
        ],
    })
}

/// Ordered Gram–Schmidt, also re-projecting onto the tangent plane.
pub fn orthonormalize(kind: ManifoldKind, x: &Vector3<f64>, basis: &mut [Vector3<f64>; 2]) {
    if kind == ManifoldKind::UnitSphere2 {
        basis[0] = sphere_project(x, &basis[0]);
        basis[1] = sphere_project(x, &basis[1]);
    }
    basis[0] /= basis[0].norm();
    let proj = basis[0].dot(&basis[1]);
    basis[1] -= basis[0] * proj;
    basis[1] /= basis[1].norm();
}

/// Horizontal step: move the base along `exp(x, v)` and parallel-transport
/// the basis, then re-orthonormalize.
pub fn transport_frame(u: &Frame, v: &TangentVector) -> Result<Frame, GeometryError> {
    if !u.base.approx_eq(&v.base, BASE_TOL) {
        return Err(GeometryError::BaseMismatch);
    }
    Ok(transport_frame_raw(u, &v.components))
}

/// Unchecked version of [`transport_frame`] on carrier components.
#[inline]
pub fn transport_frame_raw(u: &Frame, v: &Vector3<f64>) -> Frame {
    let kind = u.kind();
    let x = u.base.coords();
    match kind {
        ManifoldKind::FlatTorus2 => {
            let y = exp_raw(kind, x, v);
            Frame {
                base: Point::torus(y.x, y.y),
                basis: u.basis,
            }
        }
        ManifoldKind::UnitSphere2 => {
            let y = exp_raw(kind, x, v);
            let mut basis = [
                transport_raw(kind, x, v, &u.basis[0]),
                transport_raw(kind, x, v, &u.basis[1]),
            ];
            orthonormalize(kind, &y, &mut basis);
            Frame {
                base: Point::sphere_normalized(y),
                basis,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn rot(a: f64) -> Matrix2<f64> {
        let (s, c) = a.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    #[test]
    fn torus_scalarize_and_realize() {
        let p = Point::torus(0.2, 0.3);
        let u = Frame::canonical(&p);
        let c = scalarize(&u, &TangentVector::torus(p, 3.0, -1.0)).unwrap();
        assert_eq!(c.coeffs, vec![3.0, -1.0]);
        let v = realize_vector(&u, &c).unwrap();
        assert_eq!(v.components, Vector3::new(3.0, -1.0, 0.0));
    }

    #[test]
    fn killing_vanishes_at_pole() {
        let p = Point::sphere(Vector3::z()).unwrap();
        let u = Frame::new(p, [Vector3::x(), Vector3::y()]).unwrap();
        let k = TangentVector::new(p, Vector3::z().cross(p.coords())).unwrap();
        assert_eq!(scalarize(&u, &k).unwrap().coeffs, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_endomorphism_coefficients() {
        let p = Point::sphere_lonlat(1.1, 0.4);
        let u = rotate_frame(&Frame::canonical(&p), &rot(0.7)).unwrap();
        let c = scalarize_multilinear(&u, 1, 1, |a| a[0].dot(&a[1]));
        for (got, want) in c.coeffs.iter().zip([1.0, 0.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_coords_realize_to_zero() {
        let u = Frame::canonical(&Point::sphere_lonlat(0.0, 0.0));
        let t = realize(&u, &TensorCoords::zeros(1, 1));
        assert!(t.components.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn rotation_examples() {
        let p = Point::torus(0.0, 0.0);
        let u = Frame::canonical(&p);
        assert_eq!(rotate_frame(&u, &Matrix2::identity()).unwrap(), u);
        let uo = rotate_frame(&u, &rot(FRAC_PI_2)).unwrap();
        let c = scalarize(&uo, &TangentVector::torus(p, 3.0, -1.0)).unwrap();
        assert!((c.coeffs[0] + 1.0).abs() < 1e-15 && (c.coeffs[1] + 3.0).abs() < 1e-15);
        assert!(rotate_frame(&u, &Matrix2::new(1.0, 0.1, 0.0, 1.0)).is_err());
    }

    #[test]
    fn rank_two_rotation_matches_direct_scalarization() {
        let p = Point::sphere_lonlat(-0.4, 0.9);
        let u = Frame::canonical(&p);
        let a = Vector3::new(0.3, -1.2, 0.5);
        let b = Vector3::new(-0.7, 0.2, 1.0);
        let theta = |args: &[Vector3<f64>]| args[0].dot(&a) * args[1].dot(&b);
        let o = rot(0.37);
        let direct = scalarize_multilinear(&rotate_frame(&u, &o).unwrap(), 0, 2, theta);
        let moved = scalarize_multilinear(&u, 0, 2, theta).in_rotated_frame(&o);
        for (x, y) in direct.coeffs.iter().zip(&moved.coeffs) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn realize_rank_two_round_trip() {
        let p = Point::sphere_lonlat(2.0, -0.3);
        let u = Frame::canonical(&p);
        let c = TensorCoords::new(1, 1, vec![0.5, -2.0, 1.5, 3.0]).unwrap();
        let t = realize(&u, &c);
        let back = scalarize_multilinear(&u, 1, 1, |args| t.eval(args));
        for (x, y) in back.coeffs.iter().zip(&c.coeffs) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(TensorCoords::new(1, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn quarter_octant_holonomy() {
        // North pole → (1,0,0) → (0,1,0) → north pole along great circles.
        let north = Point::sphere(Vector3::z()).unwrap();
        let mut u = Frame::new(north, [Vector3::x(), Vector3::y()]).unwrap();
        let start = u;
        for w in [Vector3::x(), Vector3::y(), Vector3::z()] {
            let x = *u.base.coords();
            let v = crate::geometry::log_raw(ManifoldKind::UnitSphere2, &x, &w);
            u = transport_frame_raw(&u, &v);
        }
        assert!(u.base.approx_eq(&start.base, 1e-14));
        let cos = u.basis[0].dot(&start.basis[0]);
        let sin = start.basis[0].cross(&u.basis[0]).dot(start.base.coords());
        let angle = sin.atan2(cos).abs();
        assert!((angle - FRAC_PI_2).abs() < 1e-12, "angle {angle}");
    }

    #[test]
    fn zero_step_is_identity() {
        let u = Frame::canonical(&Point::sphere_lonlat(0.5, 0.5));
        let t = transport_frame(&u, &TangentVector::zero(u.base)).unwrap();
        assert!((t.basis[0] - u.basis[0]).norm() < 1e-15);
        assert!(t.base.approx_eq(&u.base, 0.0));
    }
}
