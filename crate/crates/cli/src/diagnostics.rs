//! Numerical diagnostics shared by the CLI and the acceptance suite.

use nalgebra::{Matrix2, Vector3};
use serde::Serialize;

use fbsde_core::fbsde::batch_standard_error;
use fbsde_core::rng::PathNoise;
use fbsde_core::sde_engine::{Scheme, Stepper};
use fbsde_geom::fields::{
    grad, leray_project, Grid, ScalarFieldSpec, SphereScalar, SphereVector, VectorFieldSpec,
};
use fbsde_geom::frame_bundle::{
    realize, realize_vector, rotate_frame, scalarize, scalarize_multilinear, Frame,
};
use fbsde_geom::geometry::{
    covariant_derivative, embedding_field_components, embedding_field_derivatives, exp_raw,
    log_raw, metric, orthonormal_basis, parallel_transport, project_to_tangent, ManifoldKind,
    Point, TangentVector, TimeVectorField,
};

/// Deterministic normals for test data, one stream per sample.
struct Sampler {
    seed: u64,
    next: u64,
}

impl Sampler {
    fn new(seed: u64) -> Self {
        // Keep sample streams away from the path streams of simulations.
        Sampler {
            seed,
            next: 1 << 40,
        }
    }

    fn normals(&mut self) -> [f64; 4] {
        self.next += 1;
        PathNoise::new(self.seed, self.next, 0).next_step()
    }

    fn point(&mut self, kind: ManifoldKind) -> Point {
        let z = self.normals();
        match kind {
            ManifoldKind::FlatTorus2 => Point::torus(z[0].atan2(z[1]), z[2].atan2(z[3])),
            ManifoldKind::UnitSphere2 => Point::sphere_normalized(Vector3::new(z[0], z[1], z[2])),
        }
    }

    fn tangent(&mut self, p: &Point) -> TangentVector {
        let z = self.normals();
        project_to_tangent(p, &z[..p.kind().ambient_dim()])
    }

    fn rotation(&mut self) -> Matrix2<f64> {
        let z = self.normals();
        let a = z[0].atan2(z[1]);
        let (s, c) = a.sin_cos();
        if z[2] > 0.0 {
            Matrix2::new(c, -s, s, c)
        } else {
            // reflection: O(2) elements of determinant −1
            Matrix2::new(c, s, s, -c)
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GeometryReport {
    pub manifold: String,
    pub samples: usize,
    /// `max |Σ⟨A_i, w⟩² − |w|²|`.
    pub sum_of_squares: f64,
    /// `max |Σ ∇_{A_i} A_i|`; analytic on the torus, finite differences on the sphere.
    pub mean_curvature: f64,
    /// `max |u S(v)(u) − v|` over vectors and rank-2 tensors.
    pub round_trip: f64,
    /// `max |S(θ)(uO) − O⁻¹ S(θ)(u)|` over vectors and rank-2 tensors.
    pub equivariance: f64,
    /// `max |⟨τa, τb⟩ − ⟨a, b⟩|` for exact transport.
    pub transport_isometry: f64,
}

impl GeometryReport {
    pub fn mean_curvature_tol(kind: ManifoldKind) -> f64 {
        match kind {
            ManifoldKind::FlatTorus2 => 1e-10,
            ManifoldKind::UnitSphere2 => 1e-6,
        }
    }

    /// `(name, value, tolerance)` rows.
    pub fn checks(&self, kind: ManifoldKind) -> Vec<(&'static str, f64, f64)> {
        vec![
            ("sum_of_squares", self.sum_of_squares, 1e-12),
            (
                "mean_curvature",
                self.mean_curvature,
                Self::mean_curvature_tol(kind),
            ),
            ("round_trip", self.round_trip, 1e-13),
            ("equivariance", self.equivariance, 1e-13),
            ("transport_isometry", self.transport_isometry, 1e-12),
        ]
    }

    pub fn pass(&self, kind: ManifoldKind) -> bool {
        self.checks(kind).iter().all(|(_, v, t)| v <= t)
    }
}

/// Embedding-field identities, scalarization and transport checks at
/// `samples` random configurations.
pub fn geometry_identities(kind: ManifoldKind, samples: usize, seed: u64) -> GeometryReport {
    let mut rng = Sampler::new(seed);
    let mut rep = GeometryReport {
        manifold: kind.name().to_string(),
        samples,
        ..Default::default()
    };
    let k = kind.noise_count();
    for _ in 0..samples {
        let p = rng.point(kind);
        let w = rng.tangent(&p);
        let a = embedding_field_components(kind, p.coords());
        let s: f64 = a[..k].iter().map(|ai| ai.dot(&w.components).powi(2)).sum();
        rep.sum_of_squares = rep
            .sum_of_squares
            .max((s - w.components.norm_squared()).abs());

        let mc: Vector3<f64> = match kind {
            ManifoldKind::FlatTorus2 => (0..k)
                .map(|i| embedding_field_derivatives(kind, p.coords(), &a[i])[i])
                .sum(),
            ManifoldKind::UnitSphere2 => (0..k)
                .map(|i| {
                    let field = move |q: &Point| embedding_field_components(kind, q.coords())[i];
                    let dir = TangentVector::new_unchecked(p, a[i]);
                    covariant_derivative(&field, &p, &dir)
                        .expect("same base")
                        .components
                })
                .sum(),
        };
        rep.mean_curvature = rep.mean_curvature.max(mc.norm());

        // Frames: canonical turned by a random O(2) element.
        let o = rng.rotation();
        let u = rotate_frame(&Frame::canonical(&p), &rng.rotation()).expect("orthogonal");
        let uo = rotate_frame(&u, &o).expect("orthogonal");
        let c = scalarize(&u, &w).expect("same base");
        let back = realize_vector(&u, &c).expect("vector");
        rep.round_trip = rep.round_trip.max((back.components - w.components).norm());
        let co = scalarize(&uo, &w).expect("same base");
        let pred = c.in_rotated_frame(&o);
        let e = co
            .coeffs
            .iter()
            .zip(&pred.coeffs)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        rep.equivariance = rep.equivariance.max(e);

        // Rank-2 tensor θ(a, b) = ⟨a, e⟩⟨b, f⟩ + ⟨a, b⟩.
        let (ev, fv) = (rng.tangent(&p).components, rng.tangent(&p).components);
        let theta =
            |args: &[Vector3<f64>]| args[0].dot(&ev) * args[1].dot(&fv) + args[0].dot(&args[1]);
        let t = scalarize_multilinear(&u, 1, 1, theta);
        let tr = realize(&u, &t);
        let (x1, x2) = (rng.tangent(&p).components, rng.tangent(&p).components);
        rep.round_trip = rep
            .round_trip
            .max((tr.eval(&[x1, x2]) - theta(&[x1, x2])).abs());
        let to = scalarize_multilinear(&uo, 1, 1, theta);
        let tp = t.in_rotated_frame(&o);
        let e = to
            .coeffs
            .iter()
            .zip(&tp.coeffs)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        rep.equivariance = rep.equivariance.max(e);

        let v = rng.tangent(&p);
        let (x1, x2) = (rng.tangent(&p), rng.tangent(&p));
        let t1 = parallel_transport(&p, &v, &x1).expect("same base");
        let t2 = parallel_transport(&p, &v, &x2).expect("same base");
        let before = metric(&p, &x1, &x2).expect("same base");
        let after = t1.components.dot(&t2.components);
        rep.transport_isometry = rep.transport_isometry.max((after - before).abs());
    }
    rep
}

/// A smooth scalar with closed-form gradient and Laplace–Beltrami operator.
pub struct TestScalar {
    pub name: &'static str,
    pub value: fn(&Point) -> f64,
    /// Gradient in carrier components.
    pub grad: fn(&Point) -> Vector3<f64>,
    pub laplacian: fn(&Point) -> f64,
}

/// Two test scalars per manifold; their Laplacians follow from Fourier modes
/// and spherical-harmonic degrees.
pub fn test_scalars(kind: ManifoldKind) -> [TestScalar; 2] {
    match kind {
        ManifoldKind::FlatTorus2 => [
            TestScalar {
                name: "sin x cos 2y",
                value: |p| p.coords().x.sin() * (2.0 * p.coords().y).cos(),
                grad: |p| {
                    let c = p.coords();
                    Vector3::new(
                        c.x.cos() * (2.0 * c.y).cos(),
                        -2.0 * c.x.sin() * (2.0 * c.y).sin(),
                        0.0,
                    )
                },
                laplacian: |p| -5.0 * p.coords().x.sin() * (2.0 * p.coords().y).cos(),
            },
            TestScalar {
                name: "cos(x + y)",
                value: |p| (p.coords().x + p.coords().y).cos(),
                grad: |p| {
                    let s = -(p.coords().x + p.coords().y).sin();
                    Vector3::new(s, s, 0.0)
                },
                laplacian: |p| -2.0 * (p.coords().x + p.coords().y).cos(),
            },
        ],
        ManifoldKind::UnitSphere2 => [
            TestScalar {
                name: "z^2",
                value: |p| p.coords().z.powi(2),
                grad: |p| {
                    let x = p.coords();
                    let g = Vector3::new(0.0, 0.0, 2.0 * x.z);
                    g - x * x.dot(&g)
                },
                // z² = (z² − 1/3) + 1/3 with a degree-2 harmonic part.
                laplacian: |p| -6.0 * (p.coords().z.powi(2) - 1.0 / 3.0),
            },
            TestScalar {
                name: "xy + z",
                value: |p| p.coords().x * p.coords().y + p.coords().z,
                grad: |p| {
                    let x = p.coords();
                    let g = Vector3::new(x.y, x.x, 1.0);
                    g - x * x.dot(&g)
                },
                laplacian: |p| -6.0 * p.coords().x * p.coords().y - 2.0 * p.coords().z,
            },
        ],
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GeneratorCheck {
    pub function: String,
    pub estimate: f64,
    pub exact: f64,
    pub std_error: f64,
    pub relative_error: f64,
}

/// One-step estimate of `(E f(X_dt) − f(x))/dt` against `νΔf + ⟨b, ∇f⟩`.
///
/// The first-order noise term `⟨∇f(x), √(2ν) Σ A_i ΔB_i⟩` has mean zero and
/// is subtracted path by path as a control variate.
#[allow(clippy::too_many_arguments)]
pub fn generator_check(
    f: &TestScalar,
    x: &Point,
    drift: &dyn TimeVectorField,
    nu: f64,
    dt: f64,
    paths: usize,
    seed: u64,
    scheme: Scheme,
) -> GeneratorCheck {
    let kind = x.kind();
    let stepper = Stepper::new(kind, nu, dt, scheme, drift);
    let u0 = Frame::canonical(x);
    let f0 = (f.value)(x);
    let g0 = (f.grad)(x);
    let a = embedding_field_components(kind, x.coords());
    let s = (2.0 * nu).sqrt();
    let (mut sum, mut sq) = (0.0, 0.0);
    for p in 0..paths {
        let db = PathNoise::new(seed, p as u64, 0).increment(dt, 0);
        let (u, _) = stepper.step(&u0, 0.0, &db);
        let lin: f64 = (0..kind.noise_count())
            .map(|i| g0.dot(&a[i]) * db[i] * s)
            .sum();
        let y = ((f.value)(&u.base) - f0 - lin) / dt;
        sum += y;
        sq += y * y;
    }
    let n = paths as f64;
    let mean = sum / n;
    let var = (sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    let exact = nu * (f.laplacian)(x) + drift.eval_at(0.0, x).dot(&g0);
    GeneratorCheck {
        function: f.name.to_string(),
        estimate: mean,
        exact,
        std_error: (var / n).sqrt(),
        relative_error: (mean - exact).abs() / exact.abs(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CoordinateDecay {
    pub mean: [f64; 3],
    pub std_error: [f64; 3],
    pub exact: [f64; 3],
}

impl CoordinateDecay {
    /// Largest deviation in units of the standard error.
    pub fn max_z_score(&self) -> f64 {
        (0..3)
            .map(|i| (self.mean[i] - self.exact[i]).abs() / self.std_error[i].max(1e-300))
            .fold(0.0, f64::max)
    }
}

/// `E[x_i(X_t)]` for driftless Brownian motion on the sphere against
/// `e^{−2νt} x_i(x₀)`.
pub fn coordinate_decay(
    x0: &Point,
    nu: f64,
    t: f64,
    dt: f64,
    paths: usize,
    seed: u64,
) -> CoordinateDecay {
    let zero = fbsde_geom::geometry::ZeroField;
    let stepper = Stepper::new(
        ManifoldKind::UnitSphere2,
        nu,
        dt,
        Scheme::ExactGeodesicHeun,
        &zero,
    );
    let n = (t / dt).round() as usize;
    let mut sum = Vector3::zeros();
    let mut sq = Vector3::zeros();
    for p in 0..paths {
        let mut rng = PathNoise::new(seed, p as u64, 0);
        let mut u = Frame::canonical(x0);
        for j in 0..n {
            let db = rng.increment(dt, 0);
            u = stepper.step(&u, j as f64 * dt, &db).0;
        }
        let x = u.base.coords();
        sum += x;
        sq += x.component_mul(x);
    }
    let m = paths as f64;
    let mean = sum / m;
    let decay = (-2.0 * nu * t).exp();
    let mut out = CoordinateDecay {
        mean: [0.0; 3],
        std_error: [0.0; 3],
        exact: [0.0; 3],
    };
    for i in 0..3 {
        out.mean[i] = mean[i];
        let var = (sq[i] / m - mean[i] * mean[i]).max(0.0) * m / (m - 1.0);
        out.std_error[i] = (var / m).sqrt();
        out.exact[i] = decay * x0.coords()[i];
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct VariationalErrors {
    pub eps: f64,
    pub dt: f64,
    /// Mean over paths and directions of `|log(X^x, X^y)/ε − R|`.
    pub mean_error: f64,
    pub std_error: f64,
}

/// Pathwise comparison of the variational flow with a common-noise finite
/// difference of the base flow started at `exp(x₀, ε A_i(x₀))`.
///
/// The coarse step is `dt_fine · 2^refinement`; all runs with the same
/// `dt_fine` see one Brownian path.
#[allow(clippy::too_many_arguments)]
pub fn variational_errors(
    x0: &Point,
    drift: &dyn TimeVectorField,
    nu: f64,
    horizon: f64,
    dt_fine: f64,
    refinement: u32,
    eps: f64,
    paths: usize,
    seed: u64,
) -> VariationalErrors {
    let kind = x0.kind();
    let dt = dt_fine * (1u64 << refinement) as f64;
    let n = (horizon / dt).round() as usize;
    let stepper = Stepper::new(kind, nu, dt, Scheme::ExactGeodesicHeun, drift);
    let a = embedding_field_components(kind, x0.coords());
    let dirs: Vec<usize> = (0..kind.noise_count())
        .filter(|i| a[*i].norm() > 1e-3)
        .collect();
    let mut per_path = Vec::with_capacity(paths);
    for p in 0..paths {
        let mut total = 0.0;
        for &i in &dirs {
            let y0 = Point::from_carrier(kind, &exp_raw(kind, x0.coords(), &(a[i] * eps)));
            let mut rng = PathNoise::new(seed, p as u64, 0);
            let (mut ux, mut uy) = (Frame::canonical(x0), Frame::canonical(&y0));
            let mut r = a[i];
            for j in 0..n {
                let t = j as f64 * dt;
                let db = rng.increment(dt, refinement);
                let g = stepper.geometry(t, &ux.base, &db);
                r = stepper.variational_step(t, &ux.base, &r, &db, &g);
                ux = stepper.step(&ux, t, &db).0;
                uy = stepper.step(&uy, t, &db).0;
            }
            let fd = log_raw(kind, ux.base.coords(), uy.base.coords()) / eps;
            total += (fd - r).norm();
        }
        per_path.push(total / dirs.len() as f64);
    }
    let mean = per_path.iter().sum::<f64>() / paths as f64;
    let var = per_path.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (paths as f64 - 1.0);
    VariationalErrors {
        eps,
        dt,
        mean_error: mean,
        std_error: (var / paths as f64).sqrt(),
    }
}

/// `⟨f, r⟩ / ⟨r, r⟩` in the spectral L² inner product.
pub fn amplitude(f: &VectorFieldSpec, r: &VectorFieldSpec) -> f64 {
    let deg = f.resolution().degree().max(r.resolution().degree());
    let (f, r) = (f.resized(deg), r.resized(deg));
    let plus = f.add(&r).l2_norm().powi(2);
    let minus = f.sub(&r).l2_norm().powi(2);
    (plus - minus) / (4.0 * r.l2_norm().powi(2))
}

/// Least-squares decay rate `λ` of `a(s) ≈ C e^{−λs}`.
pub fn fit_decay_rate(times: &[f64], amps: &[f64]) -> f64 {
    let n = times.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (s, a) in times.iter().zip(amps) {
        let y = a.ln();
        sx += s;
        sy += y;
        sxx += s * s;
        sxy += s * y;
    }
    -(n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Decay rates per batch, for an error bar on the fitted rate.
pub fn decay_rate_std(times: &[f64], batch_amps: &[Vec<f64>]) -> f64 {
    let rates: Vec<f64> = batch_amps
        .iter()
        .map(|a| fit_decay_rate(times, a))
        .collect();
    batch_standard_error(&rates)
}

/// Random field with unit-normal coefficients up to `degree`.
pub fn random_field(kind: ManifoldKind, degree: usize, seed: u64) -> VectorFieldSpec {
    let mut rng = Sampler::new(seed);
    match kind {
        ManifoldKind::FlatTorus2 => {
            let k = degree as i64;
            let mut terms = Vec::new();
            for m in 0..=k {
                for n in -k..=k {
                    if m == 0 && n <= 0 {
                        continue;
                    }
                    let z = rng.normals();
                    terms.push((m, n, z[0], z[1], z[2], z[3]));
                }
            }
            VectorFieldSpec::torus_trig(degree, &terms)
        }
        ManifoldKind::UnitSphere2 => {
            let n = (degree + 1).pow(2);
            let mut draw = || -> Vec<f64> {
                let mut c: Vec<f64> = (0..n).map(|_| rng.normals()[0]).collect();
                c[0] = 0.0;
                c
            };
            let psi = SphereScalar::new(degree, draw()).expect("coefficient count");
            let phi = SphereScalar::new(degree, draw()).expect("coefficient count");
            VectorFieldSpec::Sphere(SphereVector { psi, phi })
        }
    }
}

/// Random gradient field `∇f`.
pub fn random_gradient(kind: ManifoldKind, degree: usize, seed: u64) -> VectorFieldSpec {
    let f = match random_field(kind, degree, seed) {
        VectorFieldSpec::Torus(v) => ScalarFieldSpec::Torus(v.u),
        VectorFieldSpec::Sphere(v) => ScalarFieldSpec::Sphere(v.phi),
    };
    grad(&f)
}

/// `‖div v‖₂` by quadrature of the pointwise trace of `∇v`.
pub fn pointwise_divergence_l2(v: &VectorFieldSpec) -> f64 {
    let grid = Grid::dealiased(v.resolution());
    grid.integrate(|p| {
        let (_, j) = v.eval_jet(p);
        let d: f64 = orthonormal_basis(p).iter().map(|e| e.dot(&(j * e))).sum();
        d * d
    })
    .sqrt()
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct LerayReport {
    pub manifold: String,
    pub samples: usize,
    /// `max ‖div P v‖₂`, quadrature of the pointwise divergence.
    pub divergence: f64,
    /// `max ‖P P v − P v‖₂ / ‖v‖₂`.
    pub idempotence: f64,
    /// `max ‖P ∇f‖₂ / ‖∇f‖₂`.
    pub gradient: f64,
}

impl LerayReport {
    pub fn checks(&self, kind: ManifoldKind) -> Vec<(&'static str, f64, f64)> {
        let div_tol = match kind {
            ManifoldKind::FlatTorus2 => 1e-10,
            ManifoldKind::UnitSphere2 => 1e-6,
        };
        vec![
            ("leray_divergence", self.divergence, div_tol),
            ("leray_idempotence", self.idempotence, 1e-12),
            ("leray_gradient", self.gradient, 1e-10),
        ]
    }

    pub fn pass(&self, kind: ManifoldKind) -> bool {
        self.checks(kind).iter().all(|(_, v, t)| v <= t)
    }
}

/// Leray projection checks on random fields of the given degree.
pub fn leray_checks(kind: ManifoldKind, degree: usize, samples: usize, seed: u64) -> LerayReport {
    let mut rep = LerayReport {
        manifold: kind.name().to_string(),
        samples,
        ..Default::default()
    };
    for i in 0..samples as u64 {
        let v = random_field(kind, degree, seed.wrapping_add(2 * i));
        let pv = leray_project(&v);
        rep.divergence = rep.divergence.max(pointwise_divergence_l2(&pv));
        let ppv = leray_project(&pv);
        rep.idempotence = rep.idempotence.max(ppv.sub(&pv).l2_norm() / v.l2_norm());
        let g = random_gradient(kind, degree, seed.wrapping_add(2 * i + 1));
        rep.gradient = rep.gradient.max(leray_project(&g).l2_norm() / g.l2_norm());
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identities_hold_on_both_manifolds() {
        for kind in [ManifoldKind::FlatTorus2, ManifoldKind::UnitSphere2] {
            let rep = geometry_identities(kind, 50, 3);
            assert!(rep.pass(kind), "{rep:?}");
        }
    }

    #[test]
    fn leray_checks_pass_on_both_manifolds() {
        for kind in [ManifoldKind::FlatTorus2, ManifoldKind::UnitSphere2] {
            let rep = leray_checks(kind, 6, 3, 9);
            assert!(rep.pass(kind), "{rep:?}");
        }
    }

    #[test]
    fn decay_fit_recovers_rate() {
        let t = [0.0f64, 0.1, 0.3, 0.5];
        let a: Vec<f64> = t.iter().map(|s| 2.0 * (-0.7 * s).exp()).collect();
        assert!((fit_decay_rate(&t, &a) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn amplitude_of_scaled_field() {
        let tg = VectorFieldSpec::taylor_green(3, 1.0);
        assert!((amplitude(&tg.scale(0.37), &tg) - 0.37).abs() < 1e-13);
    }

    #[test]
    fn test_scalar_gradients_match_differences() {
        for kind in [ManifoldKind::FlatTorus2, ManifoldKind::UnitSphere2] {
            let mut rng = Sampler::new(5);
            for f in test_scalars(kind).iter() {
                let p = rng.point(kind);
                let w = rng.tangent(&p).components;
                let h = 1e-6;
                let fwd = Point::from_carrier(kind, &exp_raw(kind, p.coords(), &(w * h)));
                let bwd = Point::from_carrier(kind, &exp_raw(kind, p.coords(), &(w * -h)));
                let fd = ((f.value)(&fwd) - (f.value)(&bwd)) / (2.0 * h);
                assert!((fd - (f.grad)(&p).dot(&w)).abs() < 1e-7, "{}", f.name);
                let lap = fbsde_geom::geometry::laplace_beltrami_fd(f.value, &p, 1e-3);
                assert!((lap - (f.laplacian)(&p)).abs() < 1e-4, "{}", f.name);
            }
        }
    }
}
