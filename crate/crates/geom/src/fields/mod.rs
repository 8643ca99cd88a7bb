//! Spectral scalar and vector fields on the supported manifolds.
//!
//! Torus fields are truncated Fourier series in the coordinate components;
//! sphere vector fields are Helmholtz pairs `rot ψ + ∇φ` of spherical-harmonic
//! potentials, which keeps divergence, Leray projection and `Δ⁻¹` diagonal.
//! Nonlinear terms are evaluated on a finer quadrature grid and projected back.

pub mod snapshot;
pub mod sphere;
pub mod torus;

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{
    exp_raw, orthonormal_basis, ricci_factor, transport_raw, ManifoldKind, Point, TangentVector,
    TimeVectorField, VectorField,
};
use crate::GeometryError;

pub use sphere::{SphereGrid, SphereScalar, SphereVector};
pub use torus::{TorusScalar, TorusVector};

/// Tolerance on `|mean f|` above which `Δ⁻¹` subtracts the mean and warns.
pub const MEAN_TOL: f64 = 1e-10;
const SNAP: f64 = 1e-9;

/// Spectral truncation: Fourier degree `K` or harmonic degree `L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "manifold", rename_all = "lowercase")]
pub enum Resolution {
    Torus { k: usize },
    Sphere { l: usize },
}

impl Resolution {
    pub fn new(kind: ManifoldKind, degree: usize) -> Self {
        match kind {
            ManifoldKind::FlatTorus2 => Resolution::Torus { k: degree },
            ManifoldKind::UnitSphere2 => Resolution::Sphere { l: degree },
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        match self {
            Resolution::Torus { .. } => ManifoldKind::FlatTorus2,
            Resolution::Sphere { .. } => ManifoldKind::UnitSphere2,
        }
    }

    pub fn degree(&self) -> usize {
        match *self {
            Resolution::Torus { k } => k,
            Resolution::Sphere { l } => l,
        }
    }
}

/// Collocation grid.
#[derive(Clone, Debug, PartialEq)]
pub enum Grid {
    /// Uniform `n × n` grid, `x` index slowest.
    Torus {
        n: usize,
    },
    Sphere(SphereGrid),
}

impl Grid {
    pub fn torus(n: usize) -> Self {
        Grid::Torus { n }
    }

    pub fn sphere(nlat: usize, nlon: usize) -> Result<Self, GeometryError> {
        Ok(Grid::Sphere(SphereGrid::new(nlat, nlon)?))
    }

    /// Smallest grid on which `fit_field` is exact for the resolution.
    pub fn for_fit(res: Resolution) -> Self {
        match res {
            Resolution::Torus { k } => Grid::torus(2 * k + 2),
            Resolution::Sphere { l } => Grid::Sphere(SphereGrid::new(l + 2, 2 * l + 4).unwrap()),
        }
    }

    /// Grid for quadratic nonlinearities and quadrature of norms.
    pub fn dealiased(res: Resolution) -> Self {
        match res {
            Resolution::Torus { k } => Grid::torus((3 * k + 2).max(8)),
            Resolution::Sphere { l } => {
                let nlat = (3 * l) / 2 + 4;
                Grid::Sphere(SphereGrid::new(nlat, 2 * nlat).unwrap())
            }
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        match self {
            Grid::Torus { .. } => ManifoldKind::FlatTorus2,
            Grid::Sphere(_) => ManifoldKind::UnitSphere2,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Grid::Torus { n } => n * n,
            Grid::Sphere(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> Point {
        match self {
            Grid::Torus { n } => {
                let h = 2.0 * PI / *n as f64;
                Point::torus(h * (i / n) as f64, h * (i % n) as f64)
            }
            Grid::Sphere(g) => Point::sphere_normalized(g.node(i).2),
        }
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn weight(&self, i: usize) -> f64 {
        match self {
            Grid::Torus { n } => (2.0 * PI / *n as f64).powi(2),
            Grid::Sphere(g) => g.weight(i),
        }
    }

    /// Quadrature of a pointwise function.
    pub fn integrate<F: Fn(&Point) -> f64>(&self, f: F) -> f64 {
        (0..self.len())
            .map(|i| self.weight(i) * f(&self.point(i)))
            .sum()
    }

    pub fn describe(&self) -> serde_json::Value {
        match self {
            Grid::Torus { n } => serde_json::json!({"kind": "uniform", "n": n}),
            Grid::Sphere(g) => serde_json::json!({
                "kind": "gauss-legendre",
                "nlat": g.nlat,
                "nlon": g.nlon,
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScalarFieldSpec {
    Torus(TorusScalar),
    Sphere(SphereScalar),
}

impl ScalarFieldSpec {
    pub fn zeros(res: Resolution) -> Self {
        match res {
            Resolution::Torus { k } => ScalarFieldSpec::Torus(TorusScalar::zeros(k)),
            Resolution::Sphere { l } => ScalarFieldSpec::Sphere(SphereScalar::zeros(l)),
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        match self {
            ScalarFieldSpec::Torus(_) => ManifoldKind::FlatTorus2,
            ScalarFieldSpec::Sphere(_) => ManifoldKind::UnitSphere2,
        }
    }

    pub fn resolution(&self) -> Resolution {
        match self {
            ScalarFieldSpec::Torus(f) => Resolution::Torus { k: f.k },
            ScalarFieldSpec::Sphere(f) => Resolution::Sphere { l: f.l },
        }
    }

    pub fn eval(&self, p: &Point) -> f64 {
        match self {
            ScalarFieldSpec::Torus(f) => f.eval(p.coords().x, p.coords().y),
            ScalarFieldSpec::Sphere(f) => f.eval(p.coords()),
        }
    }

    /// Mean value over the manifold.
    pub fn mean(&self) -> f64 {
        match self {
            ScalarFieldSpec::Torus(f) => f.mean(),
            ScalarFieldSpec::Sphere(f) => f.mean(),
        }
    }

    pub fn laplacian(&self) -> Self {
        match self {
            ScalarFieldSpec::Torus(f) => ScalarFieldSpec::Torus(f.laplacian()),
            ScalarFieldSpec::Sphere(f) => ScalarFieldSpec::Sphere(f.laplacian()),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        match self {
            ScalarFieldSpec::Torus(f) => ScalarFieldSpec::Torus(f.scale(s)),
            ScalarFieldSpec::Sphere(f) => ScalarFieldSpec::Sphere(f.scale(s)),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        match (self, other) {
            (ScalarFieldSpec::Torus(a), ScalarFieldSpec::Torus(b)) => {
                ScalarFieldSpec::Torus(a.add(b))
            }
            (ScalarFieldSpec::Sphere(a), ScalarFieldSpec::Sphere(b)) => {
                ScalarFieldSpec::Sphere(a.add(b))
            }
            _ => panic!("scalar fields on different manifolds"),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// `‖f‖_{L²}` from the coefficients.
    pub fn l2_norm(&self) -> f64 {
        match self {
            ScalarFieldSpec::Torus(f) => (4.0 * PI * PI * f.mean_square()).sqrt(),
            ScalarFieldSpec::Sphere(f) => f.mean_square_integral().sqrt(),
        }
    }

    /// Largest coefficient magnitude.
    pub fn max_abs_coeff(&self) -> f64 {
        match self {
            ScalarFieldSpec::Torus(f) => f.max_abs_coeff(),
            ScalarFieldSpec::Sphere(f) => f.c.iter().map(|c| c.abs()).fold(0.0, f64::max),
        }
    }

    /// `max |c − conj(c̄)|` on the torus; zero on the sphere (real basis).
    pub fn hermitian_defect(&self) -> f64 {
        match self {
            ScalarFieldSpec::Torus(f) => f.hermitian_defect(),
            ScalarFieldSpec::Sphere(_) => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VectorFieldSpec {
    Torus(TorusVector),
    Sphere(SphereVector),
}

impl VectorFieldSpec {
    pub fn zeros(res: Resolution) -> Self {
        match res {
            Resolution::Torus { k } => VectorFieldSpec::Torus(TorusVector::zeros(k)),
            Resolution::Sphere { l } => VectorFieldSpec::Sphere(SphereVector::zeros(l)),
        }
    }

    /// `amplitude · (sin x cos y, −cos x sin y)`.
    pub fn taylor_green(k: usize, amplitude: f64) -> Self {
        let mut f = TorusVector::zeros(k.max(1));
        let h = amplitude / 2.0;
        f.u.add_trig(1, 1, 0.0, h);
        f.u.add_trig(1, -1, 0.0, h);
        f.v.add_trig(1, 1, 0.0, -h);
        f.v.add_trig(1, -1, 0.0, h);
        VectorFieldSpec::Torus(f)
    }

    /// `amplitude · e₃ × x` on the sphere.
    pub fn killing(l: usize, amplitude: f64) -> Self {
        VectorFieldSpec::Sphere(SphereVector::killing(l, amplitude))
    }

    /// Torus field from trigonometric terms `(m, n, a_u, b_u, a_v, b_v)`, each
    /// adding `(a_u cos θ + b_u sin θ) ∂_x + (a_v cos θ + b_v sin θ) ∂_y` with
    /// `θ = mx + ny`.
    pub fn torus_trig(k: usize, terms: &[(i64, i64, f64, f64, f64, f64)]) -> Self {
        let mut f = TorusVector::zeros(k);
        for &(m, n, cu, su, cv, sv) in terms {
            f.u.add_trig(m, n, cu, su);
            f.v.add_trig(m, n, cv, sv);
        }
        VectorFieldSpec::Torus(f)
    }

    pub fn kind(&self) -> ManifoldKind {
        match self {
            VectorFieldSpec::Torus(_) => ManifoldKind::FlatTorus2,
            VectorFieldSpec::Sphere(_) => ManifoldKind::UnitSphere2,
        }
    }

    pub fn resolution(&self) -> Resolution {
        match self {
            VectorFieldSpec::Torus(f) => Resolution::Torus { k: f.degree() },
            VectorFieldSpec::Sphere(f) => Resolution::Sphere { l: f.degree() },
        }
    }

    #[inline]
    pub fn eval_point(&self, p: &Point) -> Vector3<f64> {
        let c = p.coords();
        match self {
            VectorFieldSpec::Torus(f) => f.eval(c.x, c.y),
            VectorFieldSpec::Sphere(f) => f.eval(c),
        }
    }

    /// Value and covariant Jacobian (`∇_w v = J w`).
    #[inline]
    pub fn eval_jet(&self, p: &Point) -> (Vector3<f64>, Matrix3<f64>) {
        let c = p.coords();
        match self {
            VectorFieldSpec::Torus(f) => f.eval_jet(c.x, c.y),
            VectorFieldSpec::Sphere(f) => f.eval_jet(c),
        }
    }

    pub fn tangent(&self, p: &Point) -> TangentVector {
        TangentVector::new_unchecked(*p, self.eval_point(p))
    }

    pub fn scale(&self, s: f64) -> Self {
        match self {
            VectorFieldSpec::Torus(f) => VectorFieldSpec::Torus(f.map_components(|c| c.scale(s))),
            VectorFieldSpec::Sphere(f) => VectorFieldSpec::Sphere(f.map_potentials(|c| c.scale(s))),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        match (self, other) {
            (VectorFieldSpec::Torus(a), VectorFieldSpec::Torus(b)) => {
                VectorFieldSpec::Torus(TorusVector {
                    u: a.u.add(&b.u),
                    v: a.v.add(&b.v),
                })
            }
            (VectorFieldSpec::Sphere(a), VectorFieldSpec::Sphere(b)) => {
                VectorFieldSpec::Sphere(SphereVector {
                    psi: a.psi.add(&b.psi),
                    phi: a.phi.add(&b.phi),
                })
            }
            _ => panic!("vector fields on different manifolds"),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        self.scale(a).add(&other.scale(b))
    }

    pub fn resized(&self, degree: usize) -> Self {
        match self {
            VectorFieldSpec::Torus(f) => {
                VectorFieldSpec::Torus(f.map_components(|c| c.resized(degree)))
            }
            VectorFieldSpec::Sphere(f) => {
                VectorFieldSpec::Sphere(f.map_potentials(|c| c.resized(degree)))
            }
        }
    }

    /// `‖v‖_{L²}` from the coefficients.
    pub fn l2_norm(&self) -> f64 {
        match self {
            VectorFieldSpec::Torus(f) => {
                (4.0 * PI * PI * (f.u.mean_square() + f.v.mean_square())).sqrt()
            }
            VectorFieldSpec::Sphere(f) => {
                let mut s = 0.0;
                for (i, (a, b)) in f.psi.c.iter().zip(&f.phi.c).enumerate() {
                    let l = sphere::degree_of(i) as f64;
                    s += l * (l + 1.0) * (a * a + b * b);
                }
                // Potentials of unequal degree.
                for (i, a) in f.psi.c.iter().enumerate().skip(f.phi.c.len()) {
                    let l = sphere::degree_of(i) as f64;
                    s += l * (l + 1.0) * a * a;
                }
                for (i, b) in f.phi.c.iter().enumerate().skip(f.psi.c.len()) {
                    let l = sphere::degree_of(i) as f64;
                    s += l * (l + 1.0) * b * b;
                }
                s.sqrt()
            }
        }
    }

    /// Sampled values on a grid.
    pub fn sample(&self, grid: &Grid) -> Vec<Vector3<f64>> {
        grid.points().iter().map(|p| self.eval_point(p)).collect()
    }
}

impl VectorField for VectorFieldSpec {
    fn eval(&self, p: &Point) -> Vector3<f64> {
        self.eval_point(p)
    }
}

impl TimeVectorField for VectorFieldSpec {
    fn eval_at(&self, _t: f64, p: &Point) -> Vector3<f64> {
        self.eval_point(p)
    }

    fn covariant_at(&self, _t: f64, p: &Point, w: &Vector3<f64>) -> Vector3<f64> {
        self.eval_jet(p).1 * w
    }
}

fn kinds_match(a: ManifoldKind, b: ManifoldKind) -> Result<(), GeometryError> {
    if a != b {
        return Err(GeometryError::ManifoldMismatch);
    }
    Ok(())
}

pub fn grad(f: &ScalarFieldSpec) -> VectorFieldSpec {
    match f {
        ScalarFieldSpec::Torus(s) => VectorFieldSpec::Torus(TorusVector {
            u: s.dx(),
            v: s.dy(),
        }),
        ScalarFieldSpec::Sphere(s) => VectorFieldSpec::Sphere(SphereVector {
            psi: SphereScalar::zeros(s.l),
            phi: s.clone(),
        }),
    }
}

/// `rot ψ = x × ∇ψ` on the sphere.
pub fn rot(psi: &SphereScalar) -> VectorFieldSpec {
    VectorFieldSpec::Sphere(SphereVector {
        psi: psi.clone(),
        phi: SphereScalar::zeros(psi.l),
    })
}

pub fn div(v: &VectorFieldSpec) -> ScalarFieldSpec {
    match v {
        VectorFieldSpec::Torus(f) => ScalarFieldSpec::Torus(f.divergence()),
        VectorFieldSpec::Sphere(f) => ScalarFieldSpec::Sphere(f.divergence()),
    }
}

/// Mean of `f` if it exceeds [`MEAN_TOL`], `None` otherwise.
pub fn excess_mean(f: &ScalarFieldSpec) -> Option<f64> {
    let mean = f.mean();
    (mean.abs() > MEAN_TOL).then_some(mean)
}

/// Zero-mean solution of `Δu = f`. A mean above [`MEAN_TOL`] is subtracted
/// first and reported through `log::warn!`.
pub fn laplace_inverse(f: &ScalarFieldSpec) -> ScalarFieldSpec {
    if let Some(mean) = excess_mean(f) {
        log::warn!("laplace_inverse: subtracted nonzero mean {mean:.3e}");
    }
    match f {
        ScalarFieldSpec::Torus(s) => ScalarFieldSpec::Torus(s.map_modes(|m, n, c| {
            let kk = (m * m + n * n) as f64;
            if kk == 0.0 {
                c * 0.0
            } else {
                -c / kk
            }
        })),
        ScalarFieldSpec::Sphere(s) => ScalarFieldSpec::Sphere(s.map_degrees(|l, c| {
            if l == 0 {
                0.0
            } else {
                -c / (l * (l + 1)) as f64
            }
        })),
    }
}

/// `P v = v − ∇Δ⁻¹ div v`.
pub fn leray_project(v: &VectorFieldSpec) -> VectorFieldSpec {
    match v {
        VectorFieldSpec::Torus(f) => VectorFieldSpec::Torus(f.leray()),
        VectorFieldSpec::Sphere(f) => VectorFieldSpec::Sphere(f.leray()),
    }
}

/// `Ric^♯ v`.
pub fn ricci(v: &VectorFieldSpec) -> VectorFieldSpec {
    v.scale(ricci_factor(v.kind()))
}

/// Bochner Laplacian `tr ∇²`.
pub fn bochner_laplacian(v: &VectorFieldSpec) -> VectorFieldSpec {
    match v {
        VectorFieldSpec::Torus(f) => VectorFieldSpec::Torus(f.map_components(|c| c.laplacian())),
        // Δ∇φ = ∇(Δφ + φ) and Δ rot ψ = rot(Δψ + ψ) on the unit sphere.
        VectorFieldSpec::Sphere(f) => VectorFieldSpec::Sphere(
            f.map_potentials(|c| c.map_degrees(|l, a| (1.0 - (l * (l + 1)) as f64) * a)),
        ),
    }
}

/// Hodge–de Rham Laplacian, `Δ − Ric^♯`.
pub fn hodge_laplacian(v: &VectorFieldSpec) -> VectorFieldSpec {
    bochner_laplacian(v).sub(&ricci(v))
}

/// `div(∇_v w)`, with the product evaluated on the dealiased grid and the
/// result truncated to the larger input degree.
pub fn advective_divergence(
    v: &VectorFieldSpec,
    w: &VectorFieldSpec,
) -> Result<ScalarFieldSpec, GeometryError> {
    kinds_match(v.kind(), w.kind())?;
    let degree = v.resolution().degree().max(w.resolution().degree());
    let res = Resolution::new(v.kind(), degree);
    let grid = Grid::dealiased(res);
    let products: Vec<Vector3<f64>> = grid
        .points()
        .iter()
        .map(|p| {
            let a = v.eval_point(p);
            w.eval_jet(p).1 * a
        })
        .collect();
    Ok(match (&grid, res) {
        (Grid::Torus { .. }, Resolution::Torus { k }) => {
            div(&fit_values(&products, &grid, Resolution::Torus { k })?)
        }
        (Grid::Sphere(g), Resolution::Sphere { l }) => {
            ScalarFieldSpec::Sphere(g.weak_divergence(&products, l))
        }
        _ => unreachable!(),
    })
}

/// `F_v = ∇Δ⁻¹(div(∇_v v) − ν div(Ric^♯ v))` for divergence-free `v`.
///
/// The Hodge flag does not enter the pressure force and is accepted only so
/// callers can pass their configuration through unchanged.
pub fn pressure_force(
    v: &VectorFieldSpec,
    nu: f64,
    _hodge: bool,
) -> Result<VectorFieldSpec, GeometryError> {
    let d = div(v);
    let norm = d.l2_norm();
    if norm > 1e-8 {
        return Err(GeometryError::NotDivergenceFree { norm });
    }
    let source = advective_divergence(v, v)?.sub(&d.scale(nu * ricci_factor(v.kind())));
    Ok(grad(&laplace_inverse(&source)))
}

/// Second covariant derivative `∇²v(e_a, ·)` as a matrix, by central
/// differences of the exact Jacobian along the geodesic in direction `e_a`.
fn second_derivative_fd(v: &VectorFieldSpec, p: &Point, e: &Vector3<f64>, h: f64) -> Matrix3<f64> {
    let kind = p.kind();
    let x = *p.coords();
    let mut out = Matrix3::zeros();
    for sign in [1.0, -1.0] {
        let step = e * (sign * h);
        let q = exp_raw(kind, &x, &step);
        let qp = match kind {
            ManifoldKind::FlatTorus2 => Point::torus(q.x, q.y),
            ManifoldKind::UnitSphere2 => Point::sphere_normalized(q),
        };
        let (_, jq) = v.eval_jet(&qp);
        let back = -transport_raw(kind, &x, &step, &step);
        let mut m = Matrix3::zeros();
        for b in 0..3 {
            let mut eb = Vector3::zeros();
            eb[b] = 1.0;
            let tb = transport_raw(kind, &x, &step, &(eb - x * x.dot(&eb)));
            let col = transport_raw(kind, &q, &back, &(jq * tb));
            m.set_column(b, &col);
        }
        out += m * sign;
    }
    out / (2.0 * h)
}

/// Frobenius norms `(|v|, |∇v|, |∇²v|)` at a point.
pub fn pointwise_derivative_norms(v: &VectorFieldSpec, p: &Point, order: usize) -> [f64; 3] {
    let (val, jac) = v.eval_jet(p);
    let mut out = [val.norm(), 0.0, 0.0];
    if order >= 1 {
        let basis = orthonormal_basis(p);
        out[1] = basis
            .iter()
            .map(|e| (jac * e).norm_squared())
            .sum::<f64>()
            .sqrt();
    }
    if order >= 2 {
        out[2] = match v {
            VectorFieldSpec::Torus(f) => {
                let c = p.coords();
                let a = f.u.eval_jet(c.x, c.y);
                let b = f.v.eval_jet(c.x, c.y);
                (a[3] * a[3]
                    + 2.0 * a[4] * a[4]
                    + a[5] * a[5]
                    + b[3] * b[3]
                    + 2.0 * b[4] * b[4]
                    + b[5] * b[5])
                    .sqrt()
            }
            VectorFieldSpec::Sphere(_) => {
                let basis = orthonormal_basis(p);
                let mut s = 0.0;
                for ea in &basis {
                    let m = second_derivative_fd(v, p, ea, 1e-4);
                    for eb in &basis {
                        s += (m * eb).norm_squared();
                    }
                }
                s.sqrt()
            }
        };
    }
    out
}

/// `‖v‖_{order,p} = (∫ Σ_{i ≤ order} |∇^i v|^p)^{1/p}` by quadrature on the
/// dealiased grid.
pub fn sobolev_norm(v: &VectorFieldSpec, order: usize, p: f64) -> Result<f64, GeometryError> {
    if order > 2 {
        return Err(GeometryError::Invalid(format!("order {order} > 2")));
    }
    if p < 1.0 {
        return Err(GeometryError::Invalid(format!("exponent {p} < 1")));
    }
    let grid = Grid::dealiased(v.resolution());
    let total = grid.integrate(|q| {
        pointwise_derivative_norms(v, q, order)[..=order]
            .iter()
            .map(|a| a.powf(p))
            .sum()
    });
    Ok(total.powf(1.0 / p))
}

/// Quality of a grid fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// `max_p |v_fit(p) − v_sample(p)|` over the grid.
    pub max_residual: f64,
    /// Root-mean-square of the same residual.
    pub rms_residual: f64,
}

/// Spectral fit of tangent samples given in grid order.
pub fn fit_values(
    values: &[Vector3<f64>],
    grid: &Grid,
    res: Resolution,
) -> Result<VectorFieldSpec, GeometryError> {
    kinds_match(grid.kind(), res.kind())?;
    if values.len() != grid.len() {
        return Err(GeometryError::GridMismatch(format!(
            "{} samples for a {}-point grid",
            values.len(),
            grid.len()
        )));
    }
    match (grid, res) {
        (Grid::Torus { n }, Resolution::Torus { k }) => {
            let u: Vec<f64> = values.iter().map(|v| v.x).collect();
            let w: Vec<f64> = values.iter().map(|v| v.y).collect();
            Ok(VectorFieldSpec::Torus(TorusVector {
                u: TorusScalar::from_grid(&u, *n, k)?,
                v: TorusScalar::from_grid(&w, *n, k)?,
            }))
        }
        (Grid::Sphere(g), Resolution::Sphere { l }) => {
            if g.nlat < l + 2 || g.nlon < 2 * l + 3 {
                return Err(GeometryError::GridMismatch(format!(
                    "{}x{} grid cannot resolve degree {l}",
                    g.nlat, g.nlon
                )));
            }
            Ok(VectorFieldSpec::Sphere(g.analyze_vector(values, l)))
        }
        _ => unreachable!(),
    }
}

/// Spectral fit of scalar samples given in grid order.
pub fn fit_scalar_values(
    values: &[f64],
    grid: &Grid,
    res: Resolution,
) -> Result<ScalarFieldSpec, GeometryError> {
    kinds_match(grid.kind(), res.kind())?;
    if values.len() != grid.len() {
        return Err(GeometryError::GridMismatch(format!(
            "{} samples for a {}-point grid",
            values.len(),
            grid.len()
        )));
    }
    match (grid, res) {
        (Grid::Torus { n }, Resolution::Torus { k }) => Ok(ScalarFieldSpec::Torus(
            TorusScalar::from_grid(values, *n, k)?,
        )),
        (Grid::Sphere(g), Resolution::Sphere { l }) => {
            if g.nlat < l + 1 || g.nlon < 2 * l + 1 {
                return Err(GeometryError::GridMismatch(format!(
                    "{}x{} grid cannot resolve degree {l}",
                    g.nlat, g.nlon
                )));
            }
            Ok(ScalarFieldSpec::Sphere(g.analyze_scalar(values, l)))
        }
        _ => unreachable!(),
    }
}

pub fn fit_report(fit: &VectorFieldSpec, grid: &Grid, values: &[Vector3<f64>]) -> FitReport {
    let mut max: f64 = 0.0;
    let mut sq = 0.0;
    for (p, v) in grid.points().iter().zip(values) {
        let r = (fit.eval_point(p) - v).norm();
        max = max.max(r);
        sq += r * r;
    }
    FitReport {
        max_residual: max,
        rms_residual: (sq / values.len().max(1) as f64).sqrt(),
    }
}

/// Fits `(point, vector)` samples that must lie on `grid` in grid order.
pub fn fit_field(
    samples: &[(Point, TangentVector)],
    grid: &Grid,
    res: Resolution,
) -> Result<(VectorFieldSpec, FitReport), GeometryError> {
    if samples.len() != grid.len() {
        return Err(GeometryError::GridMismatch(format!(
            "{} samples for a {}-point grid",
            samples.len(),
            grid.len()
        )));
    }
    for (i, (p, v)) in samples.iter().enumerate() {
        if !p.approx_eq(&grid.point(i), 1e-12) || !v.base.approx_eq(p, 1e-12) {
            return Err(GeometryError::GridMismatch(format!(
                "sample {i} is not at grid node {i}"
            )));
        }
    }
    let values: Vec<Vector3<f64>> = samples.iter().map(|(_, v)| v.components).collect();
    let fit = fit_values(&values, grid, res)?;
    let report = fit_report(&fit, grid, &values);
    Ok((fit, report))
}

/// Piecewise-linear-in-time vector field.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeField {
    pub times: Vec<f64>,
    pub fields: Vec<VectorFieldSpec>,
}

impl TimeField {
    pub fn new(times: Vec<f64>, fields: Vec<VectorFieldSpec>) -> Result<Self, GeometryError> {
        if times.is_empty() || times.len() != fields.len() {
            return Err(GeometryError::Invalid(
                "time grid and field list must be nonempty and of equal length".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeometryError::TimeGrid);
        }
        let kind = fields[0].kind();
        if fields.iter().any(|f| f.kind() != kind) {
            return Err(GeometryError::ManifoldMismatch);
        }
        Ok(TimeField { times, fields })
    }

    /// The same field at every node.
    pub fn constant(times: Vec<f64>, field: &VectorFieldSpec) -> Result<Self, GeometryError> {
        let fields = vec![field.clone(); times.len()];
        TimeField::new(times, fields)
    }

    pub fn kind(&self) -> ManifoldKind {
        self.fields[0].kind()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Interval index and weight of the right node; clamped outside the grid.
    #[inline]
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return (0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 2, 1.0);
        }
        let i = self.times.partition_point(|s| *s <= t) - 1;
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        // Times accumulated as t0 + j·dt land on nodes only up to rounding.
        if w < SNAP {
            (i, 0.0)
        } else if w > 1.0 - SNAP {
            (i, 1.0)
        } else {
            (i, w)
        }
    }

    /// Spectral field at time `t` (linear combination of neighbouring nodes).
    pub fn field_at(&self, t: f64) -> VectorFieldSpec {
        let (i, w) = self.locate(t);
        if self.times.len() == 1 || w == 0.0 {
            return self.fields[i].clone();
        }
        if w == 1.0 {
            return self.fields[i + 1].clone();
        }
        self.fields[i].combine(1.0 - w, &self.fields[i + 1], w)
    }

    pub fn jet_at(&self, t: f64, p: &Point) -> (Vector3<f64>, Matrix3<f64>) {
        let (i, w) = self.locate(t);
        if self.times.len() == 1 || w == 0.0 {
            return self.fields[i].eval_jet(p);
        }
        if w == 1.0 {
            return self.fields[i + 1].eval_jet(p);
        }
        let (a, ja) = self.fields[i].eval_jet(p);
        let (b, jb) = self.fields[i + 1].eval_jet(p);
        (a * (1.0 - w) + b * w, ja * (1.0 - w) + jb * w)
    }

    /// The same piecewise-linear field resampled on `times`.
    pub fn resampled(&self, times: Vec<f64>) -> Result<Self, GeometryError> {
        let fields = times.iter().map(|t| self.field_at(*t)).collect();
        TimeField::new(times, fields)
    }

    pub fn map<F: Fn(&VectorFieldSpec) -> VectorFieldSpec>(&self, f: F) -> Self {
        TimeField {
            times: self.times.clone(),
            fields: self.fields.iter().map(f).collect(),
        }
    }

    /// Node-wise `sup_t ‖self(t) − other(t)‖` in a caller-chosen norm.
    pub fn sup_distance<F>(&self, other: &TimeField, norm: F) -> Result<f64, GeometryError>
    where
        F: Fn(&VectorFieldSpec) -> Result<f64, GeometryError>,
    {
        if self.times != other.times {
            return Err(GeometryError::TimeGrid);
        }
        let mut best: f64 = 0.0;
        for (a, b) in self.fields.iter().zip(&other.fields) {
            best = best.max(norm(&a.sub(b))?);
        }
        Ok(best)
    }
}

impl TimeVectorField for TimeField {
    fn eval_at(&self, t: f64, p: &Point) -> Vector3<f64> {
        let (i, w) = self.locate(t);
        if self.times.len() == 1 || w == 0.0 {
            return self.fields[i].eval_point(p);
        }
        if w == 1.0 {
            return self.fields[i + 1].eval_point(p);
        }
        self.fields[i].eval_point(p) * (1.0 - w) + self.fields[i + 1].eval_point(p) * w
    }

    fn covariant_at(&self, t: f64, p: &Point, w: &Vector3<f64>) -> Vector3<f64> {
        self.jet_at(t, p).1 * w
    }
}
