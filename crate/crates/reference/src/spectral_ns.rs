//! Pseudo-spectral vorticity solver for the 2D Navier–Stokes equations on the
//! flat torus: `∂_s ω + u·∇ω = νΔω`, explicit RK4 in time, 2/3-rule
//! dealiasing of the advection term.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use fbsde_geom::fields::{TimeField, TorusScalar, TorusVector, VectorFieldSpec};
use fbsde_geom::ManifoldKind;

use crate::ReferenceError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralSettings {
    /// Collocation points per direction; `0` picks `max(32, 3K + 3)` rounded up to even.
    pub n: usize,
    /// Largest admissible `dt · max(|u| + |v|) · n / 2π`.
    pub cfl_max: f64,
}

impl Default for SpectralSettings {
    fn default() -> Self {
        SpectralSettings { n: 0, cfl_max: 1.0 }
    }
}

struct Solver {
    n: usize,
    nu: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Signed wavenumber of each FFT index.
    wave: Vec<f64>,
    keep: Vec<bool>,
    mean: (f64, f64),
    cfl_max: f64,
}

type Spectrum = Vec<Complex64>;

impl Solver {
    fn new(n: usize, nu: f64, mean: (f64, f64), cfl_max: f64) -> Self {
        let mut planner = FftPlanner::new();
        let wave: Vec<f64> = (0..n)
            .map(|a| {
                if 2 * a < n {
                    a as f64
                } else if 2 * a == n {
                    0.0
                } else {
                    a as f64 - n as f64
                }
            })
            .collect();
        let cut = n as f64 / 3.0;
        let keep = (0..n).map(|a| 2 * a != n && wave[a].abs() <= cut).collect();
        Solver {
            n,
            nu,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            wave,
            keep,
            mean,
            cfl_max,
        }
    }

    fn fft2(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        for row in buf.chunks_mut(n) {
            plan.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for b in 0..n {
            for a in 0..n {
                col[a] = buf[a * n + b];
            }
            plan.process(&mut col);
            for a in 0..n {
                buf[a * n + b] = col[a];
            }
        }
        if inverse {
            let s = 1.0 / (n * n) as f64;
            buf.iter_mut().for_each(|z| *z *= s);
        }
    }

    fn grid_of(&self, spec: &[Complex64]) -> Vec<f64> {
        let mut buf = spec.to_vec();
        self.fft2(&mut buf, true);
        buf.iter().map(|z| z.re).collect()
    }

    /// Velocity spectra from vorticity, including the conserved mean flow.
    fn velocity(&self, w: &[Complex64]) -> (Spectrum, Spectrum) {
        let n = self.n;
        let mut u = vec![Complex64::new(0.0, 0.0); n * n];
        let mut v = u.clone();
        for a in 0..n {
            for b in 0..n {
                let (m, q) = (self.wave[a], self.wave[b]);
                let kk = m * m + q * q;
                if kk == 0.0 {
                    continue;
                }
                let psi = w[a * n + b] / kk;
                u[a * n + b] = Complex64::new(0.0, q) * psi;
                v[a * n + b] = Complex64::new(0.0, -m) * psi;
            }
        }
        let nn = (n * n) as f64;
        u[0] = Complex64::new(self.mean.0 * nn, 0.0);
        v[0] = Complex64::new(self.mean.1 * nn, 0.0);
        (u, v)
    }

    fn rhs(&self, w: &[Complex64], dt: f64, time: f64) -> Result<Spectrum, ReferenceError> {
        let n = self.n;
        let (u, v) = self.velocity(w);
        let mut wx = vec![Complex64::new(0.0, 0.0); n * n];
        let mut wy = wx.clone();
        for a in 0..n {
            for b in 0..n {
                let i = a * n + b;
                wx[i] = Complex64::new(0.0, self.wave[a]) * w[i];
                wy[i] = Complex64::new(0.0, self.wave[b]) * w[i];
            }
        }
        let (ug, vg) = (self.grid_of(&u), self.grid_of(&v));
        let (xg, yg) = (self.grid_of(&wx), self.grid_of(&wy));
        let speed = ug
            .iter()
            .zip(&vg)
            .map(|(a, b)| a.abs() + b.abs())
            .fold(0.0, f64::max);
        let cfl = dt * speed * n as f64 / (2.0 * PI);
        if !cfl.is_finite() {
            return Err(ReferenceError::NonFinite { time });
        }
        if cfl > self.cfl_max {
            return Err(ReferenceError::Cfl { cfl, time });
        }
        let mut nl: Spectrum = (0..n * n)
            .map(|i| Complex64::new(ug[i] * xg[i] + vg[i] * yg[i], 0.0))
            .collect();
        self.fft2(&mut nl, false);
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for a in 0..n {
            for b in 0..n {
                if !(self.keep[a] && self.keep[b]) {
                    continue;
                }
                let i = a * n + b;
                let kk = self.wave[a].powi(2) + self.wave[b].powi(2);
                out[i] = -nl[i] - w[i] * (self.nu * kk);
            }
        }
        Ok(out)
    }

    fn rk4(&self, w: &[Complex64], dt: f64, time: f64) -> Result<Spectrum, ReferenceError> {
        let axpy = |k: &[Complex64], s: f64| -> Spectrum {
            w.iter().zip(k).map(|(a, b)| a + b * s).collect()
        };
        let k1 = self.rhs(w, dt, time)?;
        let k2 = self.rhs(&axpy(&k1, dt / 2.0), dt, time)?;
        let k3 = self.rhs(&axpy(&k2, dt / 2.0), dt, time)?;
        let k4 = self.rhs(&axpy(&k3, dt), dt, time)?;
        Ok((0..w.len())
            .map(|i| w[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0))
            .collect())
    }

    fn to_field(&self, w: &[Complex64], k: usize) -> Result<VectorFieldSpec, ReferenceError> {
        let (u, v) = self.velocity(w);
        Ok(VectorFieldSpec::Torus(TorusVector {
            u: TorusScalar::from_grid(&self.grid_of(&u), self.n, k)?,
            v: TorusScalar::from_grid(&self.grid_of(&v), self.n, k)?,
        }))
    }
}

/// Reference trajectory sampled at every step `s_j = j·dt` up to `s_end`,
/// truncated to the degree of `v0`.
pub fn torus_spectral_ns(
    v0: &VectorFieldSpec,
    nu: f64,
    s_end: f64,
    dt: f64,
) -> Result<TimeField, ReferenceError> {
    let steps = step_count(s_end, dt)?;
    let times: Vec<f64> = (0..=steps).map(|j| j as f64 * dt).collect();
    torus_spectral_ns_at(v0, nu, &times, dt, SpectralSettings::default())
}

fn step_count(s: f64, dt: f64) -> Result<usize, ReferenceError> {
    let n = (s / dt).round();
    if !(dt > 0.0) || s < 0.0 || (n * dt - s).abs() > 1e-9 * s.max(1.0) {
        return Err(ReferenceError::Invalid(format!(
            "time {s} is not a nonnegative multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

/// Reference trajectory at the given increasing times, each a multiple of `dt`.
pub fn torus_spectral_ns_at(
    v0: &VectorFieldSpec,
    nu: f64,
    times: &[f64],
    dt: f64,
    settings: SpectralSettings,
) -> Result<TimeField, ReferenceError> {
    let f0 = match v0 {
        VectorFieldSpec::Torus(f) => f,
        VectorFieldSpec::Sphere(_) => {
            return Err(ReferenceError::WrongManifold {
                expected: ManifoldKind::FlatTorus2,
                got: ManifoldKind::UnitSphere2,
            })
        }
    };
    if !(nu >= 0.0) {
        return Err(ReferenceError::Invalid(
            "viscosity must be nonnegative".into(),
        ));
    }
    let d = f0.divergence().max_abs_coeff();
    if d > 1e-10 {
        return Err(ReferenceError::Invalid(format!(
            "v0 is not divergence-free: {d:.3e}"
        )));
    }
    let k = f0.degree();
    let n = if settings.n > 0 {
        settings.n
    } else {
        let m = (3 * k + 3).max(32);
        m + m % 2
    };
    if n < 2 * k + 2 {
        return Err(ReferenceError::Invalid(format!(
            "{n}-point grid cannot hold degree {k}"
        )));
    }
    let steps: Vec<usize> = times
        .iter()
        .map(|t| step_count(*t, dt))
        .collect::<Result<_, _>>()?;
    if steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ReferenceError::Invalid("output times must increase".into()));
    }
    let nn = n as f64;
    let mut u =
        f0.u.to_grid(n)
            .into_iter()
            .map(|x| Complex64::new(x, 0.0))
            .collect::<Vec<_>>();
    let mut v =
        f0.v.to_grid(n)
            .into_iter()
            .map(|x| Complex64::new(x, 0.0))
            .collect::<Vec<_>>();
    let mean = (
        u.iter().map(|z| z.re).sum::<f64>() / (nn * nn),
        v.iter().map(|z| z.re).sum::<f64>() / (nn * nn),
    );
    let solver = Solver::new(n, nu, mean, settings.cfl_max);
    solver.fft2(&mut u, false);
    solver.fft2(&mut v, false);
    let mut w: Spectrum = (0..n * n)
        .map(|i| {
            let (a, b) = (i / n, i % n);
            Complex64::new(0.0, solver.wave[a]) * v[i] - Complex64::new(0.0, solver.wave[b]) * u[i]
        })
        .collect();
    let mut fields = Vec::with_capacity(times.len());
    let mut done = 0usize;
    for &target in &steps {
        while done < target {
            w = solver.rk4(&w, dt, done as f64 * dt)?;
            done += 1;
        }
        fields.push(solver.to_field(&w, k)?);
    }
    Ok(TimeField::new(times.to_vec(), fields)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_stays_zero() {
        let z = VectorFieldSpec::zeros(fbsde_geom::fields::Resolution::Torus { k: 3 });
        let tf = torus_spectral_ns(&z, 0.1, 0.01, 1e-3).unwrap();
        assert!(tf.fields.iter().all(|f| f.l2_norm() == 0.0));
    }

    #[test]
    fn taylor_green_decays_exactly() {
        let nu = 0.1;
        let tg = VectorFieldSpec::taylor_green(4, 1.0);
        let tf =
            torus_spectral_ns_at(&tg, nu, &[0.0, 0.1], 1e-3, SpectralSettings::default()).unwrap();
        let exact = tg.scale((-2.0 * nu * 0.1f64).exp());
        assert!(tf.fields[1].sub(&exact).l2_norm() / exact.l2_norm() < 1e-8);
    }

    #[test]
    fn cfl_violation_aborts() {
        let tg = VectorFieldSpec::taylor_green(2, 50.0);
        let r = torus_spectral_ns_at(&tg, 0.1, &[0.0, 0.5], 0.1, SpectralSettings::default());
        assert!(matches!(r, Err(ReferenceError::Cfl { .. })));
    }

    #[test]
    fn rejects_sphere_input() {
        let k = VectorFieldSpec::killing(2, 1.0);
        assert!(torus_spectral_ns(&k, 0.1, 0.1, 0.01).is_err());
    }
}
