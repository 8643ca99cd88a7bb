//! Forward horizontal SDEs on the orthonormal frame bundle.
//!
//! The base path solves the Stratonovich equation
//! `dX = √(2ν) Σ A_i(X) ∘ dB^i + b(s, X) ds` with the embedding gradient
//! fields `A_i`, and the frame is parallel-transported along it. The drift
//! `b` is supplied with its sign by the caller.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fbsde_geom::frame_bundle::{orthonormalize, transport_frame_raw, Frame};
use fbsde_geom::geometry::{
    embedding_field_components, embedding_field_derivatives, exp_raw, ricci_factor, sphere_project,
    transport_raw, ManifoldKind, Point, TimeVectorField,
};

use crate::rng::{PathNoise, MAX_CHANNELS};
use crate::CoreError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Heun predictor–corrector on exact geodesics with exact transport.
    #[default]
    #[serde(alias = "heun")]
    ExactGeodesicHeun,
    /// Ambient Euler–Maruyama step followed by projection to the manifold.
    #[serde(alias = "euler")]
    ProjectedEuler,
}

/// Time grid and noise addressing of an ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub k: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Global index of the first coarse step; noise for coarse step `j` is
    /// read at fine steps `(first_step + j) · 2^refinement …`.
    pub first_step: u64,
    /// Each coarse increment is the sum of `2^refinement` fine increments.
    pub refinement: u32,
}

impl NoiseSpec {
    pub fn new(kind: ManifoldKind, dt: f64, n_steps: usize, seed: u64) -> Result<Self, CoreError> {
        let spec = NoiseSpec {
            k: kind.noise_count(),
            dt,
            n_steps,
            seed,
            scheme: Scheme::ExactGeodesicHeun,
            first_step: 0,
            refinement: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_first_step(mut self, first_step: u64) -> Self {
        self.first_step = first_step;
        self
    }

    pub fn with_refinement(mut self, refinement: u32) -> Self {
        self.refinement = refinement;
        self
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(CoreError::Invalid(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.k == 0 || self.k > MAX_CHANNELS {
            return Err(CoreError::Invalid(format!(
                "noise dimension {} unsupported",
                self.k
            )));
        }
        if self.refinement > 20 {
            return Err(CoreError::Invalid("refinement above 20".into()));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Noise reader for one path, positioned at the first step.
    pub fn path_noise(&self, path: u64) -> PathNoise {
        PathNoise::new(self.seed, path, self.first_step << self.refinement)
    }
}

/// Number of steps of size `dt` covering `length`, which must be a multiple of `dt`.
pub fn steps_for(length: f64, dt: f64) -> Result<usize, CoreError> {
    let n = (length / dt).round();
    if length < 0.0 || (n * dt - length).abs() > 1e-9 * length.abs().max(1.0) {
        return Err(CoreError::Invalid(format!(
            "interval {length} is not a multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

/// Per-step geometry shared by the frame update and the variational flow.
#[derive(Clone, Copy, Debug)]
pub struct StepGeometry {
    /// Predictor increment at `x`.
    pub delta0: Vector3<f64>,
    /// Predicted point `exp(x, δ₀)`.
    pub x_pred: Vector3<f64>,
    /// Final increment at `x`.
    pub delta: Vector3<f64>,
}

/// One-path integrator with fixed coefficients.
pub struct Stepper<'a, D: TimeVectorField + ?Sized> {
    pub kind: ManifoldKind,
    pub nu: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub drift: &'a D,
}

impl<'a, D: TimeVectorField + ?Sized> Stepper<'a, D> {
    pub fn new(kind: ManifoldKind, nu: f64, dt: f64, scheme: Scheme, drift: &'a D) -> Self {
        Stepper {
            kind,
            nu,
            dt,
            scheme,
            drift,
        }
    }

    #[inline]
    fn diffusion(&self, x: &Vector3<f64>, db: &[f64; MAX_CHANNELS]) -> Vector3<f64> {
        let a = embedding_field_components(self.kind, x);
        let s = (2.0 * self.nu).sqrt();
        let mut out = Vector3::zeros();
        for (ai, b) in a.iter().zip(db).take(self.kind.noise_count()) {
            out += ai * (b * s);
        }
        out
    }

    #[inline]
    fn point(&self, c: &Vector3<f64>) -> Point {
        Point::from_carrier(self.kind, c)
    }

    /// Increment geometry of a step from `(t, x)` with Brownian increment `db`.
    #[inline]
    pub fn geometry(&self, t: f64, x: &Point, db: &[f64; MAX_CHANNELS]) -> StepGeometry {
        let xc = *x.coords();
        let d0 = self.diffusion(&xc, db) + self.drift.eval_at(t, x) * self.dt;
        match self.scheme {
            Scheme::ProjectedEuler => StepGeometry {
                delta0: d0,
                x_pred: exp_raw(self.kind, &xc, &d0),
                delta: d0,
            },
            Scheme::ExactGeodesicHeun => {
                let xp = exp_raw(self.kind, &xc, &d0);
                let pp = self.point(&xp);
                let xp = *pp.coords();
                let d1 = self.diffusion(&xp, db) + self.drift.eval_at(t + self.dt, &pp) * self.dt;
                let back = -transport_raw(self.kind, &xc, &d0, &d0);
                let mut d1b = transport_raw(self.kind, &xp, &back, &d1);
                if self.kind == ManifoldKind::UnitSphere2 {
                    d1b = sphere_project(&xc, &d1b);
                }
                StepGeometry {
                    delta0: d0,
                    x_pred: xp,
                    delta: (d0 + d1b) * 0.5,
                }
            }
        }
    }

    /// Advances a frame by one step.
    #[inline]
    pub fn step(&self, u: &Frame, t: f64, db: &[f64; MAX_CHANNELS]) -> (Frame, StepGeometry) {
        let g = self.geometry(t, &u.base, db);
        let next = match (self.scheme, self.kind) {
            (Scheme::ProjectedEuler, ManifoldKind::UnitSphere2) => {
                let x = u.base.coords();
                let y = (x + g.delta).normalize();
                let mut basis = u.basis;
                orthonormalize(self.kind, &y, &mut basis);
                Frame {
                    base: Point::sphere_normalized(y),
                    basis,
                }
            }
            _ => transport_frame_raw(u, &g.delta),
        };
        (next, g)
    }

    /// Advances a tangent vector of the variational flow along a step whose
    /// geometry was produced by [`Stepper::geometry`] from `(t, x)`.
    pub fn variational_step(
        &self,
        t: f64,
        x: &Point,
        r: &Vector3<f64>,
        db: &[f64; MAX_CHANNELS],
        g: &StepGeometry,
    ) -> Vector3<f64> {
        let kind = self.kind;
        let xc = *x.coords();
        let s = (2.0 * self.nu).sqrt();
        let rate = |c: &Vector3<f64>, p: &Point, rr: &Vector3<f64>, time: f64| {
            let da = embedding_field_derivatives(kind, c, rr);
            let mut k = Vector3::zeros();
            for (d, b) in da.iter().zip(db).take(kind.noise_count()) {
                k += d * (b * s);
            }
            k + self.drift.covariant_at(time, p, rr) * self.dt
        };
        let k0 = rate(&xc, x, r, t);
        let mut out = match self.scheme {
            Scheme::ProjectedEuler => {
                // Itô form: covariant noise term, drift derivative and −ν Ric^♯ R.
                let step = r + k0 - r * (self.nu * ricci_factor(kind) * self.dt);
                match kind {
                    ManifoldKind::FlatTorus2 => step,
                    ManifoldKind::UnitSphere2 => {
                        let y = (xc + g.delta).normalize();
                        transport_raw(
                            kind,
                            &xc,
                            &fbsde_geom::geometry::log_raw(kind, &xc, &y),
                            &step,
                        )
                    }
                }
            }
            Scheme::ExactGeodesicHeun => {
                let pp = self.point(&g.x_pred);
                let r_pred = transport_raw(kind, &xc, &g.delta0, &(r + k0));
                let k1 = rate(&g.x_pred, &pp, &r_pred, t + self.dt);
                let back = -transport_raw(kind, &xc, &g.delta0, &g.delta0);
                let k1b = transport_raw(kind, &g.x_pred, &back, &k1);
                transport_raw(kind, &xc, &g.delta, &(r + (k0 + k1b) * 0.5))
            }
        };
        if kind == ManifoldKind::UnitSphere2 {
            let y = exp_raw(kind, &xc, &g.delta);
            out = sphere_project(&y, &out);
        }
        out
    }
}

fn check_finite(v: &Vector3<f64>, path: usize, step: usize) -> Result<(), CoreError> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(CoreError::NonFinite { path, step })
    }
}

/// Stored trajectories of an ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub kind: ManifoldKind,
    pub t0: f64,
    pub noise: NoiseSpec,
    pub nu: f64,
    /// `frames[path][j]` at time `t0 + j·dt`, `j = 0 … n_steps`.
    pub frames: Vec<Vec<Frame>>,
    /// `increments[path][j]`: Brownian increment over step `j`.
    pub increments: Vec<Vec<[f64; MAX_CHANNELS]>>,
    /// Left-rectangle integral of the scalarized source, per path.
    pub integrals: Vec<[f64; 2]>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.frames.len()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.noise.dt
    }

    pub fn terminal(&self, path: usize) -> &Frame {
        self.frames[path].last().expect("nonempty trajectory")
    }
}

/// Simulates `n_paths` trajectories from `u0` at time `t0`.
pub fn simulate_forward<D: TimeVectorField + ?Sized>(
    u0: &Frame,
    t0: f64,
    drift: &D,
    nu: f64,
    noise: &NoiseSpec,
    n_paths: usize,
) -> Result<PathEnsemble, CoreError> {
    noise.validate()?;
    if nu < 0.0 {
        return Err(CoreError::Invalid(format!(
            "viscosity must be nonnegative, got {nu}"
        )));
    }
    if noise.k != u0.kind().noise_count() {
        return Err(CoreError::Invalid(
            "noise dimension does not match the manifold".into(),
        ));
    }
    let stepper = Stepper::new(u0.kind(), nu, noise.dt, noise.scheme, drift);
    let paths: Result<Vec<_>, CoreError> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = noise.path_noise(p as u64);
            let mut frames = Vec::with_capacity(noise.n_steps + 1);
            let mut incs = Vec::with_capacity(noise.n_steps);
            let mut u = *u0;
            frames.push(u);
            for j in 0..noise.n_steps {
                let db = rng.increment(noise.dt, noise.refinement);
                let (next, g) = stepper.step(&u, t0 + j as f64 * noise.dt, &db);
                check_finite(&g.delta, p, j)?;
                u = next;
                frames.push(u);
                incs.push(db);
            }
            Ok((frames, incs))
        })
        .collect();
    let (frames, increments): (Vec<_>, Vec<_>) = paths?.into_iter().unzip();
    Ok(PathEnsemble {
        kind: u0.kind(),
        t0,
        noise: *noise,
        nu,
        integrals: vec![[0.0; 2]; frames.len()],
        frames,
        increments,
    })
}

/// Fills the per-path integrals `Σ_j S(G(t_j, X_j))(U_j) dt` (left rectangle).
pub fn accumulate_transported_source<G: TimeVectorField + ?Sized>(
    ens: &PathEnsemble,
    source: &G,
) -> PathEnsemble {
    let dt = ens.noise.dt;
    let integrals = ens
        .frames
        .par_iter()
        .map(|traj| {
            let mut acc = [0.0; 2];
            for (j, u) in traj.iter().take(traj.len().saturating_sub(1)).enumerate() {
                let c = u.coords_of(&source.eval_at(ens.time(j), &u.base));
                acc[0] += c[0] * dt;
                acc[1] += c[1] * dt;
            }
            acc
        })
        .collect();
    PathEnsemble {
        integrals,
        ..ens.clone()
    }
}

/// Tangent vectors `R^i` of the variational flow, one per embedding field.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalState {
    /// `r[path][j][i]` at step `j` for direction `A_i(x₀)`.
    pub r: Vec<Vec<Vec<Vector3<f64>>>>,
}

impl VariationalState {
    pub fn terminal(&self, path: usize, direction: usize) -> Vector3<f64> {
        self.r[path].last().expect("nonempty trajectory")[direction]
    }
}

/// Drives the variational flow with the stored increments of `ens`, starting
/// from `R^i = A_i(x₀)`.
pub fn simulate_variational<D: TimeVectorField + ?Sized>(
    ens: &PathEnsemble,
    nu: f64,
    drift: &D,
) -> VariationalState {
    let kind = ens.kind;
    let stepper = Stepper::new(kind, nu, ens.noise.dt, ens.noise.scheme, drift);
    let r = ens
        .frames
        .par_iter()
        .zip(ens.increments.par_iter())
        .map(|(traj, incs)| {
            let x0 = traj[0].base;
            let a = embedding_field_components(kind, x0.coords());
            let mut cur: Vec<Vector3<f64>> = a[..kind.noise_count()].to_vec();
            let mut out = Vec::with_capacity(traj.len());
            out.push(cur.clone());
            for (j, db) in incs.iter().enumerate() {
                let t = ens.time(j);
                let x = traj[j].base;
                let g = stepper.geometry(t, &x, db);
                cur = cur
                    .iter()
                    .map(|ri| stepper.variational_step(t, &x, ri, db, &g))
                    .collect();
                out.push(cur.clone());
            }
            out
        })
        .collect();
    VariationalState { r }
}
