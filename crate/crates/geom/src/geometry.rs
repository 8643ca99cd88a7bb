//! Embedded-manifold primitives for the two supported compact surfaces.
//!
//! The flat torus is carried in angle coordinates `(x, y)` with period `2π`
//! and isometrically embedded in `R⁴` as the Clifford torus
//! `(cos x, sin x, cos y, sin y)`. The unit sphere is carried directly in
//! ambient `R³`. Tangent vectors use the same carrier: coordinate components
//! `(a, b, 0)` on the torus, ambient triples on the sphere. In both cases the
//! Riemannian metric is the Euclidean dot product of the carriers.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::GeometryError;

/// Tolerance for deciding that two points coincide.
pub const BASE_TOL: f64 = 1e-10;

/// Finite-difference step for covariant derivatives of black-box fields.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManifoldKind {
    #[serde(rename = "torus2")]
    FlatTorus2,
    #[serde(rename = "sphere2")]
    UnitSphere2,
}

impl ManifoldKind {
    /// Intrinsic dimension.
    pub const fn dim(self) -> usize {
        2
    }

    /// Dimension of the isometric embedding.
    pub const fn ambient_dim(self) -> usize {
        match self {
            ManifoldKind::FlatTorus2 => 4,
            ManifoldKind::UnitSphere2 => 3,
        }
    }

    /// Number of embedding gradient fields `A_i`, equal to the ambient dimension.
    pub const fn noise_count(self) -> usize {
        self.ambient_dim()
    }

    /// Number of carrier components used for points and tangent vectors.
    pub const fn coord_dim(self) -> usize {
        match self {
            ManifoldKind::FlatTorus2 => 2,
            ManifoldKind::UnitSphere2 => 3,
        }
    }

    /// Riemannian volume.
    pub fn volume(self) -> f64 {
        match self {
            ManifoldKind::FlatTorus2 => 4.0 * PI * PI,
            ManifoldKind::UnitSphere2 => 4.0 * PI,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            ManifoldKind::FlatTorus2 => "torus2",
            ManifoldKind::UnitSphere2 => "sphere2",
        }
    }
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ManifoldKind {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "torus2" | "torus" => Ok(ManifoldKind::FlatTorus2),
            "sphere2" | "sphere" => Ok(ManifoldKind::UnitSphere2),
            other => Err(GeometryError::UnknownManifold(other.to_string())),
        }
    }
}

/// A point on one of the supported manifolds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    kind: ManifoldKind,
    coords: Vector3<f64>,
}

fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Maps an angle difference into `(-π, π]`.
fn wrap_difference(d: f64) -> f64 {
    let r = wrap_angle(d);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

impl Point {
    /// Torus point from angles; both are reduced modulo `2π`.
    pub fn torus(x: f64, y: f64) -> Self {
        Point {
            kind: ManifoldKind::FlatTorus2,
            coords: Vector3::new(wrap_angle(x), wrap_angle(y), 0.0),
        }
    }

    /// Sphere point; rejects inputs off the unit sphere by more than `1e-12`.
    pub fn sphere(v: Vector3<f64>) -> Result<Self, GeometryError> {
        let residual = (v.norm() - 1.0).abs();
        if residual > 1e-12 || !residual.is_finite() {
            return Err(GeometryError::NotOnSphere { residual });
        }
        Ok(Point {
            kind: ManifoldKind::UnitSphere2,
            coords: v,
        })
    }

    /// Sphere point obtained by radial projection of a nonzero vector.
    pub fn sphere_normalized(v: Vector3<f64>) -> Self {
        Point {
            kind: ManifoldKind::UnitSphere2,
            coords: v.normalize(),
        }
    }

    /// Sphere point from longitude and latitude (radians).
    pub fn sphere_lonlat(lon: f64, lat: f64) -> Self {
        let (sl, cl) = lat.sin_cos();
        let (so, co) = lon.sin_cos();
        Point::sphere_normalized(Vector3::new(cl * co, cl * so, sl))
    }

    /// Point from raw carrier coordinates (angles are wrapped, sphere
    /// vectors normalized).
    #[inline]
    pub fn from_carrier(kind: ManifoldKind, c: &Vector3<f64>) -> Self {
        match kind {
            ManifoldKind::FlatTorus2 => Point::torus(c.x, c.y),
            ManifoldKind::UnitSphere2 => Point::sphere_normalized(*c),
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    /// Carrier coordinates: `(x, y, 0)` angles on the torus, ambient on the sphere.
    pub fn coords(&self) -> &Vector3<f64> {
        &self.coords
    }

    /// Image under the isometric embedding.
    pub fn embed(&self) -> Vec<f64> {
        match self.kind {
            ManifoldKind::FlatTorus2 => {
                let (sx, cx) = self.coords.x.sin_cos();
                let (sy, cy) = self.coords.y.sin_cos();
                vec![cx, sx, cy, sy]
            }
            ManifoldKind::UnitSphere2 => self.coords.as_slice().to_vec(),
        }
    }

    /// Geodesic-free closeness test used for base-point checks.
    pub fn approx_eq(&self, other: &Point, tol: f64) -> bool {
        if self.kind != other.kind {
            return false;
        }
        match self.kind {
            ManifoldKind::FlatTorus2 => {
                wrap_difference(self.coords.x - other.coords.x).abs() <= tol
                    && wrap_difference(self.coords.y - other.coords.y).abs() <= tol
            }
            ManifoldKind::UnitSphere2 => (self.coords - other.coords).norm() <= tol,
        }
    }

    /// Longitude and latitude of a sphere point.
    pub fn lonlat(&self) -> (f64, f64) {
        let c = &self.coords;
        (c.y.atan2(c.x), c.z.clamp(-1.0, 1.0).asin())
    }
}

/// A tangent vector together with its base point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVector {
    pub base: Point,
    pub components: Vector3<f64>,
}

impl TangentVector {
    /// Checked constructor; on the sphere `|x·v| ≤ 1e-12·max(1, |v|)`.
    pub fn new(base: Point, components: Vector3<f64>) -> Result<Self, GeometryError> {
        match base.kind {
            ManifoldKind::FlatTorus2 => {
                if components.z != 0.0 {
                    return Err(GeometryError::NotTangent {
                        residual: components.z.abs(),
                    });
                }
            }
            ManifoldKind::UnitSphere2 => {
                let residual = base.coords.dot(&components).abs();
                if residual > 1e-12 * components.norm().max(1.0) {
                    return Err(GeometryError::NotTangent { residual });
                }
            }
        }
        Ok(TangentVector { base, components })
    }

    pub fn new_unchecked(base: Point, components: Vector3<f64>) -> Self {
        TangentVector { base, components }
    }

    pub fn zero(base: Point) -> Self {
        TangentVector {
            base,
            components: Vector3::zeros(),
        }
    }

    /// Torus coordinate vector `a ∂_x + b ∂_y`.
    pub fn torus(base: Point, a: f64, b: f64) -> Self {
        debug_assert_eq!(base.kind, ManifoldKind::FlatTorus2);
        TangentVector {
            base,
            components: Vector3::new(a, b, 0.0),
        }
    }

    pub fn norm(&self) -> f64 {
        self.components.norm()
    }
}

fn check_base(p: &Point, v: &TangentVector) -> Result<(), GeometryError> {
    if !p.approx_eq(&v.base, BASE_TOL) {
        return Err(GeometryError::BaseMismatch);
    }
    Ok(())
}

/// Riemannian inner product `⟨v, w⟩(p)`.
pub fn metric(p: &Point, v: &TangentVector, w: &TangentVector) -> Result<f64, GeometryError> {
    check_base(p, v)?;
    check_base(p, w)?;
    Ok(v.components.dot(&w.components))
}

/// Orthogonal projection `Π(p)` of an ambient vector onto `T_pM`.
///
/// `a` must have `ambient_dim` entries (4 on the torus, 3 on the sphere).
pub fn project_to_tangent(p: &Point, a: &[f64]) -> TangentVector {
    assert_eq!(
        a.len(),
        p.kind.ambient_dim(),
        "ambient vector has wrong dimension"
    );
    let c = &p.coords;
    let comps = match p.kind {
        ManifoldKind::FlatTorus2 => {
            let (sx, cx) = c.x.sin_cos();
            let (sy, cy) = c.y.sin_cos();
            Vector3::new(-sx * a[0] + cx * a[1], -sy * a[2] + cy * a[3], 0.0)
        }
        ManifoldKind::UnitSphere2 => {
            let v = Vector3::new(a[0], a[1], a[2]);
            v - c * c.dot(&v)
        }
    };
    TangentVector::new_unchecked(*p, comps)
}

/// Sphere tangent projection of an ambient 3-vector.
#[inline]
pub fn sphere_project(x: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
    v - x * x.dot(v)
}

/// Components of the embedding gradient fields `A_i(p) = Π(p) e_i`.
///
/// Only the first `noise_count` entries are meaningful.
#[inline]
pub fn embedding_field_components(kind: ManifoldKind, c: &Vector3<f64>) -> [Vector3<f64>; 4] {
    match kind {
        ManifoldKind::FlatTorus2 => {
            let (sx, cx) = c.x.sin_cos();
            let (sy, cy) = c.y.sin_cos();
            [
                Vector3::new(-sx, 0.0, 0.0),
                Vector3::new(cx, 0.0, 0.0),
                Vector3::new(0.0, -sy, 0.0),
                Vector3::new(0.0, cy, 0.0),
            ]
        }
        ManifoldKind::UnitSphere2 => [
            Vector3::new(1.0 - c.x * c.x, -c.x * c.y, -c.x * c.z),
            Vector3::new(-c.y * c.x, 1.0 - c.y * c.y, -c.y * c.z),
            Vector3::new(-c.z * c.x, -c.z * c.y, 1.0 - c.z * c.z),
            Vector3::zeros(),
        ],
    }
}

/// The `k` embedding gradient fields at `p`.
pub fn embedding_fields(p: &Point) -> Vec<TangentVector> {
    let comps = embedding_field_components(p.kind, &p.coords);
    comps[..p.kind.noise_count()]
        .iter()
        .map(|a| TangentVector::new_unchecked(*p, *a))
        .collect()
}

/// Exact `∇_R A_m` for the embedding fields, for every `m`.
#[inline]
pub fn embedding_field_derivatives(
    kind: ManifoldKind,
    c: &Vector3<f64>,
    r: &Vector3<f64>,
) -> [Vector3<f64>; 4] {
    match kind {
        ManifoldKind::FlatTorus2 => {
            let (sx, cx) = c.x.sin_cos();
            let (sy, cy) = c.y.sin_cos();
            [
                Vector3::new(-cx * r.x, 0.0, 0.0),
                Vector3::new(-sx * r.x, 0.0, 0.0),
                Vector3::new(0.0, -cy * r.y, 0.0),
                Vector3::new(0.0, -sy * r.y, 0.0),
            ]
        }
        // A_m = Π e_m, so ∇_R A_m = -x_m R.
        ManifoldKind::UnitSphere2 => [-c.x * r, -c.y * r, -c.z * r, Vector3::zeros()],
    }
}

/// `Ric^♯ v`: zero on the flat torus, the identity on the unit sphere.
pub fn ricci_sharp(p: &Point, v: &TangentVector) -> Result<TangentVector, GeometryError> {
    check_base(p, v)?;
    Ok(match p.kind {
        ManifoldKind::FlatTorus2 => TangentVector::zero(*p),
        ManifoldKind::UnitSphere2 => *v,
    })
}

#[inline]
pub fn ricci_factor(kind: ManifoldKind) -> f64 {
    match kind {
        ManifoldKind::FlatTorus2 => 0.0,
        ManifoldKind::UnitSphere2 => 1.0,
    }
}

/// Riemannian exponential on raw carriers.
#[inline]
pub fn exp_raw(kind: ManifoldKind, x: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
    match kind {
        ManifoldKind::FlatTorus2 => Vector3::new(wrap_angle(x.x + v.x), wrap_angle(x.y + v.y), 0.0),
        ManifoldKind::UnitSphere2 => {
            let th = v.norm();
            if th == 0.0 {
                return *x;
            }
            let (s, c) = th.sin_cos();
            (x * c + v * (s / th)).normalize()
        }
    }
}

/// Parallel transport of `u` (at `x`) along `t ↦ exp(x, t v)`, `t ∈ [0, 1]`.
#[inline]
pub fn transport_raw(
    kind: ManifoldKind,
    x: &Vector3<f64>,
    v: &Vector3<f64>,
    u: &Vector3<f64>,
) -> Vector3<f64> {
    match kind {
        ManifoldKind::FlatTorus2 => *u,
        ManifoldKind::UnitSphere2 => {
            let th = v.norm();
            if th == 0.0 {
                return *u;
            }
            let n = v / th;
            let a = u.dot(&n);
            let (s, c) = th.sin_cos();
            u + (n * (c - 1.0) - x * s) * a
        }
    }
}

/// Riemannian logarithm on raw carriers (minimal geodesic).
#[inline]
pub fn log_raw(kind: ManifoldKind, x: &Vector3<f64>, y: &Vector3<f64>) -> Vector3<f64> {
    match kind {
        ManifoldKind::FlatTorus2 => {
            Vector3::new(wrap_difference(y.x - x.x), wrap_difference(y.y - x.y), 0.0)
        }
        ManifoldKind::UnitSphere2 => {
            let c = x.dot(y).clamp(-1.0, 1.0);
            let w = y - x * c;
            let s = w.norm();
            if s == 0.0 {
                return Vector3::zeros();
            }
            w * (s.atan2(c) / s)
        }
    }
}

/// Riemannian exponential map.
pub fn exp_map(p: &Point, v: &TangentVector) -> Result<Point, GeometryError> {
    check_base(p, v)?;
    Ok(Point {
        kind: p.kind,
        coords: exp_raw(p.kind, &p.coords, &v.components),
    })
}

/// Parallel transport of `u` along the geodesic `t ↦ exp(p, t v)`.
pub fn parallel_transport(
    p: &Point,
    v: &TangentVector,
    u: &TangentVector,
) -> Result<TangentVector, GeometryError> {
    check_base(p, v)?;
    check_base(p, u)?;
    let q = exp_map(p, v)?;
    let mut t = transport_raw(p.kind, &p.coords, &v.components, &u.components);
    if p.kind == ManifoldKind::UnitSphere2 {
        t = sphere_project(&q.coords, &t);
    }
    Ok(TangentVector::new_unchecked(q, t))
}

/// Riemannian logarithm `log_p(q)`.
pub fn log_map(p: &Point, q: &Point) -> Result<TangentVector, GeometryError> {
    if p.kind != q.kind {
        return Err(GeometryError::ManifoldMismatch);
    }
    Ok(TangentVector::new_unchecked(
        *p,
        log_raw(p.kind, &p.coords, &q.coords),
    ))
}

/// Canonical orthonormal basis of `T_pM`: coordinate frame on the torus,
/// (east, north) on the sphere with a fixed fallback at the poles.
pub fn orthonormal_basis(p: &Point) -> [Vector3<f64>; 2] {
    match p.kind {
        ManifoldKind::FlatTorus2 => [Vector3::x(), Vector3::y()],
        ManifoldKind::UnitSphere2 => {
            let x = &p.coords;
            let rho = x.x.hypot(x.y);
            let east = if rho > 1e-8 {
                Vector3::new(-x.y / rho, x.x / rho, 0.0)
            } else {
                sphere_project(x, &Vector3::y()).normalize()
            };
            [east, x.cross(&east)]
        }
    }
}

/// A (time-independent) smooth vector field that can be sampled pointwise.
///
/// `eval` returns tangent components at `p` in the carrier convention.
pub trait VectorField: Sync {
    fn eval(&self, p: &Point) -> Vector3<f64>;
}

impl<F> VectorField for F
where
    F: Fn(&Point) -> Vector3<f64> + Sync,
{
    fn eval(&self, p: &Point) -> Vector3<f64> {
        self(p)
    }
}

/// A time-dependent vector field.
///
/// `covariant_at` returns `∇_w v(t)` at `p`; the default implementation is
/// a central finite difference of `eval_at`.
pub trait TimeVectorField: Sync {
    fn eval_at(&self, t: f64, p: &Point) -> Vector3<f64>;

    fn covariant_at(&self, t: f64, p: &Point, w: &Vector3<f64>) -> Vector3<f64> {
        fd_covariant(&|q: &Point| self.eval_at(t, q), p, w, FD_STEP)
    }
}

/// The zero vector field.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroField;

impl TimeVectorField for ZeroField {
    fn eval_at(&self, _t: f64, _p: &Point) -> Vector3<f64> {
        Vector3::zeros()
    }

    fn covariant_at(&self, _t: f64, _p: &Point, _w: &Vector3<f64>) -> Vector3<f64> {
        Vector3::zeros()
    }
}

/// Adapts a time-independent field.
pub struct Steady<F>(pub F);

impl<F: VectorField> TimeVectorField for Steady<F> {
    fn eval_at(&self, _t: f64, p: &Point) -> Vector3<f64> {
        self.0.eval(p)
    }
}

/// Adapts a closure `(t, p) -> v`.
pub struct TimeFn<F>(pub F);

impl<F> TimeVectorField for TimeFn<F>
where
    F: Fn(f64, &Point) -> Vector3<f64> + Sync,
{
    fn eval_at(&self, t: f64, p: &Point) -> Vector3<f64> {
        (self.0)(t, p)
    }
}

fn fd_covariant<F: VectorField + ?Sized>(
    field: &F,
    p: &Point,
    w: &Vector3<f64>,
    h: f64,
) -> Vector3<f64> {
    match p.kind {
        ManifoldKind::FlatTorus2 => {
            let c = p.coords;
            let plus = field.eval(&Point::torus(c.x + h * w.x, c.y + h * w.y));
            let minus = field.eval(&Point::torus(c.x - h * w.x, c.y - h * w.y));
            (plus - minus) / (2.0 * h)
        }
        ManifoldKind::UnitSphere2 => {
            // Extension G(y) = v(y/|y|); then ∇_w v = Π(x) D_w G.
            let x = p.coords;
            let plus = field.eval(&Point::sphere_normalized(x + w * h));
            let minus = field.eval(&Point::sphere_normalized(x - w * h));
            sphere_project(&x, &((plus - minus) / (2.0 * h)))
        }
    }
}

/// Levi-Civita covariant derivative `∇_w v` of a sampled field, by central
/// differences with step [`FD_STEP`] followed by tangent projection.
pub fn covariant_derivative<F: VectorField + ?Sized>(
    field: &F,
    p: &Point,
    w: &TangentVector,
) -> Result<TangentVector, GeometryError> {
    check_base(p, w)?;
    Ok(TangentVector::new_unchecked(
        *p,
        fd_covariant(field, p, &w.components, FD_STEP),
    ))
}

/// Divergence `Σ ⟨∇_{E_i} v, E_i⟩` in the canonical basis.
pub fn divergence<F: VectorField + ?Sized>(field: &F, p: &Point) -> f64 {
    divergence_in_basis(field, p, &orthonormal_basis(p))
}

/// Divergence evaluated in a caller-supplied orthonormal basis of `T_pM`.
pub fn divergence_in_basis<F: VectorField + ?Sized>(
    field: &F,
    p: &Point,
    basis: &[Vector3<f64>; 2],
) -> f64 {
    basis
        .iter()
        .map(|e| fd_covariant(field, p, e, FD_STEP).dot(e))
        .sum()
}

/// Ambient Jacobian of a field, i.e. the matrix `J` with `∇_w v = J w` for
/// tangent `w`, assembled column-wise from finite differences.
pub fn covariant_jacobian_fd<F: VectorField + ?Sized>(
    field: &F,
    p: &Point,
    h: f64,
) -> Matrix3<f64> {
    let basis = orthonormal_basis(p);
    let mut j = Matrix3::zeros();
    for e in &basis {
        let d = fd_covariant(field, p, e, h);
        j += d * e.transpose();
    }
    j
}

/// Second covariant derivative `∇²v(e, e)` along the geodesic through `p` with
/// unit initial velocity `e`, by a central second difference of the
/// parallel-transported field values.
pub fn second_covariant_fd<F: VectorField + ?Sized>(
    field: &F,
    p: &Point,
    e: &Vector3<f64>,
    h: f64,
) -> Vector3<f64> {
    let x = p.coords;
    let kind = p.kind;
    let v0 = field.eval(p);
    let mut acc = -2.0 * v0;
    for sign in [1.0, -1.0] {
        let step = e * (sign * h);
        let q = exp_raw(kind, &x, &step);
        let vq = field.eval(&Point { kind, coords: q });
        // Transport back along the reversed geodesic.
        let back = -transport_raw(kind, &x, &step, &step);
        acc += transport_raw(kind, &q, &back, &vq);
    }
    let out = acc / (h * h);
    match kind {
        ManifoldKind::FlatTorus2 => out,
        ManifoldKind::UnitSphere2 => sphere_project(&x, &out),
    }
}

/// Bochner Laplacian `Tr ∇²v` by finite differences along geodesics.
pub fn bochner_laplacian_fd<F: VectorField + ?Sized>(field: &F, p: &Point, h: f64) -> Vector3<f64> {
    orthonormal_basis(p)
        .iter()
        .map(|e| second_covariant_fd(field, p, e, h))
        .sum()
}

/// Laplace–Beltrami operator of a scalar function by geodesic second differences.
pub fn laplace_beltrami_fd<F: Fn(&Point) -> f64>(f: F, p: &Point, h: f64) -> f64 {
    let f0 = f(p);
    let mut acc = 0.0;
    for e in orthonormal_basis(p) {
        for sign in [1.0, -1.0] {
            let q = exp_raw(p.kind, &p.coords, &(e * (sign * h)));
            acc += f(&Point {
                kind: p.kind,
                coords: q,
            }) - f0;
        }
    }
    acc / (h * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn north() -> Point {
        Point::sphere(Vector3::new(0.0, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn metric_examples() {
        let p = north();
        let v = TangentVector::new(p, Vector3::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(metric(&p, &v, &v).unwrap(), 1.0);
        let a = TangentVector::new(p, Vector3::new(1.0, 1.0, 0.0)).unwrap();
        let b = TangentVector::new(p, Vector3::new(1.0, -1.0, 0.0)).unwrap();
        assert_eq!(metric(&p, &a, &b).unwrap(), 0.0);

        let q = Point::torus(0.3, 5.0);
        let v = TangentVector::torus(q, 2.0, 0.0);
        let w = TangentVector::torus(q, 0.0, 3.0);
        assert_eq!(metric(&q, &v, &w).unwrap(), 0.0);
    }

    #[test]
    fn metric_rejects_foreign_base() {
        let p = north();
        let q = Point::sphere(Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let v = TangentVector::new(q, Vector3::new(0.0, 1.0, 0.0)).unwrap();
        assert!(matches!(
            metric(&p, &v, &v),
            Err(GeometryError::BaseMismatch)
        ));
    }

    #[test]
    fn sphere_point_checks_norm() {
        assert!(Point::sphere(Vector3::new(0.0, 0.0, 1.0 + 1e-9)).is_err());
        assert!(TangentVector::new(north(), Vector3::new(0.0, 0.0, 1e-6)).is_err());
    }

    #[test]
    fn projection_examples() {
        let p = north();
        let t = project_to_tangent(&p, &[0.0, 0.0, 5.0]);
        assert_eq!(t.components, Vector3::zeros());
        let t = project_to_tangent(&p, &[1.0, 2.0, 3.0]);
        assert_eq!(t.components, Vector3::new(1.0, 2.0, 0.0));
    }

    #[test]
    fn torus_projection_of_coordinate_image() {
        // d/dx of the Clifford embedding, computed by finite differences.
        let (x, y) = (0.7, -1.9);
        let h = 1e-6;
        let plus = Point::torus(x + h, y).embed();
        let minus = Point::torus(x - h, y).embed();
        let dx: Vec<f64> = plus
            .iter()
            .zip(&minus)
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        let t = project_to_tangent(&Point::torus(x, y), &dx);
        assert!((t.components - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn embedding_fields_examples() {
        let a = embedding_fields(&north());
        assert_eq!(a.len(), 3);
        assert_eq!(a[0].components, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(a[1].components, Vector3::new(0.0, 1.0, 0.0));
        assert_eq!(a[2].components, Vector3::zeros());

        let a = embedding_fields(&Point::torus(0.0, 0.0));
        let got: Vec<_> = a.iter().map(|t| (t.components.x, t.components.y)).collect();
        assert_eq!(got, vec![(-0.0, 0.0), (1.0, 0.0), (0.0, -0.0), (0.0, 1.0)]);
    }

    #[test]
    fn covariant_derivative_examples() {
        let p = Point::torus(std::f64::consts::FRAC_PI_2, 0.0);
        let field = |q: &Point| Vector3::new(q.coords().x.sin(), 0.0, 0.0);
        let d = covariant_derivative(&field, &p, &TangentVector::torus(p, 1.0, 0.0)).unwrap();
        assert!(d.components.norm() < 1e-9);

        // Rotation field on the sphere: ∇_w K = Π(e3 × w).
        let killing = |q: &Point| Vector3::z().cross(q.coords());
        let p = Point::sphere(Vector3::x()).unwrap();
        let w = TangentVector::new(p, Vector3::new(0.0, 0.6, -0.8)).unwrap();
        let d = covariant_derivative(&killing, &p, &w).unwrap();
        let expect = sphere_project(p.coords(), &Vector3::z().cross(&w.components));
        assert!((d.components - expect).norm() < 1e-9);
    }

    #[test]
    fn divergence_examples() {
        let field = |q: &Point| Vector3::new(q.coords().x.sin(), 0.0, 0.0);
        assert!((divergence(&field, &Point::torus(0.0, 0.0)) - 1.0).abs() < 1e-9);
        let tg = |q: &Point| {
            let c = q.coords();
            Vector3::new(c.x.sin() * c.y.cos(), -c.x.cos() * c.y.sin(), 0.0)
        };
        assert!(divergence(&tg, &Point::torus(0.4, 2.2)).abs() < 1e-9);
        let killing = |q: &Point| Vector3::z().cross(q.coords());
        let p = Point::sphere_lonlat(0.3, 0.9);
        assert!(divergence(&killing, &p).abs() < 1e-9);
    }

    #[test]
    fn ricci_examples() {
        let q = Point::torus(1.0, 1.0);
        let r = ricci_sharp(&q, &TangentVector::torus(q, 3.0, -1.0)).unwrap();
        assert_eq!(r.components, Vector3::zeros());
        let p = north();
        let v = TangentVector::new(p, Vector3::x()).unwrap();
        assert_eq!(ricci_sharp(&p, &v).unwrap().components, Vector3::x());
    }

    #[test]
    fn exp_and_transport_examples() {
        let p = north();
        let v = TangentVector::new(p, Vector3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0)).unwrap();
        let q = exp_map(&p, &v).unwrap();
        assert!((q.coords() - Vector3::x()).norm() < 1e-15);
        let u = TangentVector::new(p, Vector3::y()).unwrap();
        let tu = parallel_transport(&p, &v, &u).unwrap();
        assert!((tu.components - Vector3::y()).norm() < 1e-15);
        // The velocity itself turns into -e3 at (1, 0, 0).
        let tv = parallel_transport(&p, &v, &v).unwrap();
        assert!(
            (tv.components - Vector3::new(0.0, 0.0, -std::f64::consts::FRAC_PI_2)).norm() < 1e-14
        );

        let p = Point::torus(1.0, 2.0);
        let v = TangentVector::torus(p, 0.5, -0.5);
        let q = exp_map(&p, &v).unwrap();
        assert!(q.approx_eq(&Point::torus(1.5, 1.5), 1e-15));
        let u = TangentVector::torus(p, 0.2, 0.7);
        assert_eq!(
            parallel_transport(&p, &v, &u).unwrap().components,
            u.components
        );
    }

    #[test]
    fn log_inverts_exp() {
        let p = Point::sphere_lonlat(0.4, -0.3);
        let b = orthonormal_basis(&p);
        let v = b[0] * 0.7 - b[1] * 0.2;
        let q = exp_raw(p.kind(), p.coords(), &v);
        let back = log_raw(p.kind(), p.coords(), &q);
        assert!((back - v).norm() < 1e-14);

        let p = Point::torus(6.2, 0.05);
        let q = Point::torus(0.1, 6.0);
        let l = log_map(&p, &q).unwrap();
        assert!(
            (l.components - Vector3::new(0.1 + TAU - 6.2, 6.0 - TAU - 0.05, 0.0)).norm() < 1e-12
        );
    }

    #[test]
    fn torus_wraps_angles() {
        let p = Point::torus(-0.5, 7.0);
        assert!((p.coords().x - (TAU - 0.5)).abs() < 1e-15);
        assert!((p.coords().y - (7.0 - TAU)).abs() < 1e-15);
        let tiny = Point::torus(-1e-18, 0.0);
        assert!(tiny.coords().x < TAU);
    }

    #[test]
    fn basis_is_orthonormal_at_poles() {
        for z in [1.0, -1.0] {
            let p = Point::sphere(Vector3::new(0.0, 0.0, z)).unwrap();
            let [e1, e2] = orthonormal_basis(&p);
            assert!((e1.norm() - 1.0).abs() < 1e-15 && (e2.norm() - 1.0).abs() < 1e-15);
            assert!(e1.dot(&e2).abs() < 1e-15);
            assert!(e1.dot(p.coords()).abs() < 1e-15);
        }
    }
}
