//! Backward equations for vector fields solved by Monte-Carlo on the frame
//! bundle.
//!
//! For an evaluation time `t` and a grid point `x`, paths start from the
//! canonical frame `u` at `x` and run to the horizon `T`. The estimate
//!
//! ```text
//! θ(t, x) = u · E[ S(h)(U_T) + Σ_j S(G(t_j, X_j))(U_j) dt ]
//! ```
//!
//! solves `∂_t θ + νΔθ + ∇_b θ + G = 0`, `θ(T) = h`, where `Δ` is the
//! Bochner Laplacian and `b` the forward drift. Noise is addressed by path
//! index and absolute step, so all grid points, time nodes and Picard
//! iterates see common random numbers.

use std::sync::Arc;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fbsde_geom::fields::{
    bochner_laplacian, fit_values, sobolev_norm, FitReport, Grid, Resolution, TimeField,
    VectorFieldSpec,
};
use fbsde_geom::frame_bundle::Frame;
use fbsde_geom::geometry::{
    embedding_field_components, ManifoldKind, Point, TimeVectorField, ZeroField,
};

use crate::sde_engine::{steps_for, NoiseSpec, Scheme, Stepper};
use crate::CoreError;

/// Number of contiguous path batches kept for error bars of derived quantities.
pub const N_BATCHES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McParams {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub refinement: u32,
}

impl McParams {
    pub fn new(paths: usize, dt: f64, seed: u64) -> Self {
        McParams {
            paths,
            dt,
            seed,
            scheme: Scheme::ExactGeodesicHeun,
            refinement: 0,
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.paths < 2 {
            return Err(CoreError::Invalid(format!(
                "paths must be at least 2, got {}",
                self.paths
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(CoreError::Invalid(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        Ok(())
    }

    fn noise(&self, kind: ManifoldKind, t0: f64, horizon: f64) -> Result<NoiseSpec, CoreError> {
        let n = steps_for(horizon - t0, self.dt)?;
        let first = (t0 / self.dt).round().max(0.0) as u64;
        Ok(NoiseSpec::new(kind, self.dt, n, self.seed)?
            .with_scheme(self.scheme)
            .with_first_step(first)
            .with_refinement(self.refinement))
    }
}

/// A driver `F(t, x, y, z)` acting on realized vectors: `y = θ(t, x)` and
/// `z[i] = ∇_{A_i(x)} θ(t, x)`. The result must be tangent at `x`.
///
/// Working on realized rather than frame coordinates makes every driver
/// automatically equivariant under frame rotations.
pub trait Driver: Send + Sync {
    fn eval(&self, t: f64, x: &Point, y: &Vector3<f64>, z: &[Vector3<f64>]) -> Vector3<f64>;
    /// Declared Lipschitz constant in `(y, z)`.
    fn lipschitz(&self) -> f64;
}

/// `F = −c·y`.
#[derive(Clone, Copy, Debug)]
pub struct LinearDecay {
    pub c: f64,
}

impl Driver for LinearDecay {
    fn eval(&self, _t: f64, _x: &Point, y: &Vector3<f64>, _z: &[Vector3<f64>]) -> Vector3<f64> {
        -y * self.c
    }

    fn lipschitz(&self) -> f64 {
        self.c.abs()
    }
}

/// Driver from a closure.
pub struct FnDriver<F> {
    pub f: F,
    pub lipschitz: f64,
}

impl<F> Driver for FnDriver<F>
where
    F: Fn(f64, &Point, &Vector3<f64>, &[Vector3<f64>]) -> Vector3<f64> + Send + Sync,
{
    fn eval(&self, t: f64, x: &Point, y: &Vector3<f64>, z: &[Vector3<f64>]) -> Vector3<f64> {
        (self.f)(t, x, y, z)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

#[derive(Clone)]
pub enum Source {
    None,
    /// Source field `G(t, x)`, independent of the solution.
    Field(TimeField),
    /// Solution-dependent driver, handled by [`solve_general_fbsde`].
    Driver(Arc<dyn Driver>),
}

impl std::fmt::Debug for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Source::None => write!(f, "None"),
            Source::Field(g) => write!(f, "Field({} nodes)", g.len()),
            Source::Driver(d) => write!(f, "Driver(lipschitz = {})", d.lipschitz()),
        }
    }
}

/// Picard controls for the general driver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardParams {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for PicardParams {
    fn default() -> Self {
        PicardParams {
            tol: 1e-4,
            max_iters: 20,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BackwardProblem {
    pub kind: ManifoldKind,
    /// Forward drift in backward time `t`, with its sign; `None` is zero.
    pub drift: Option<TimeField>,
    pub nu: f64,
    pub terminal: VectorFieldSpec,
    pub source: Source,
    pub horizon: f64,
    /// Increasing evaluation times in `[0, horizon]`.
    pub times: Vec<f64>,
    pub resolution: Resolution,
    pub grid: Grid,
    pub mc: McParams,
    pub picard: PicardParams,
}

impl BackwardProblem {
    /// Problem on the fit grid of `resolution` with zero drift and source.
    pub fn new(
        terminal: VectorFieldSpec,
        nu: f64,
        horizon: f64,
        times: Vec<f64>,
        resolution: Resolution,
        mc: McParams,
    ) -> Self {
        BackwardProblem {
            kind: terminal.kind(),
            drift: None,
            nu,
            terminal,
            source: Source::None,
            horizon,
            times,
            resolution,
            grid: Grid::for_fit(resolution),
            mc,
            picard: PicardParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        self.mc.validate()?;
        if !(self.nu >= 0.0) {
            return Err(CoreError::Invalid(format!(
                "viscosity must be nonnegative, got {}",
                self.nu
            )));
        }
        if !(self.horizon >= 0.0) {
            return Err(CoreError::Invalid("horizon must be nonnegative".into()));
        }
        if self.times.is_empty() || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoreError::Invalid(
                "evaluation times must be nonempty and increasing".into(),
            ));
        }
        if self.times[0] < -1e-12 || *self.times.last().unwrap() > self.horizon + 1e-12 {
            return Err(CoreError::Invalid(
                "evaluation times must lie in [0, T]".into(),
            ));
        }
        let kinds = [
            self.terminal.kind(),
            self.resolution.kind(),
            self.grid.kind(),
        ];
        if kinds.iter().any(|k| *k != self.kind) {
            return Err(CoreError::Invalid(
                "manifold mismatch between problem parts".into(),
            ));
        }
        if let Some(d) = &self.drift {
            if d.kind() != self.kind {
                return Err(CoreError::Invalid("drift lives on another manifold".into()));
            }
        }
        match &self.source {
            Source::Field(g) if g.kind() != self.kind => {
                return Err(CoreError::Invalid(
                    "source lives on another manifold".into(),
                ))
            }
            Source::Driver(d) if !(d.lipschitz() >= 0.0) => {
                return Err(CoreError::Invalid(
                    "driver Lipschitz constant must be ≥ 0".into(),
                ))
            }
            _ => {}
        }
        if !(self.picard.tol > 0.0) || self.picard.max_iters == 0 {
            return Err(CoreError::Invalid(
                "Picard tol and max_iters must be positive".into(),
            ));
        }
        Ok(())
    }

    fn is_terminal(&self, t: f64) -> bool {
        (self.horizon - t).abs() <= 1e-12 * self.horizon.max(1.0)
    }
}

/// Monte-Carlo estimate of `θ(t, x)` from one starting frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PointEstimate {
    pub mean: Vector3<f64>,
    /// `sqrt(tr Cov / N)`: standard error of the vector estimate.
    pub std_error: f64,
    /// Means over [`N_BATCHES`] contiguous path blocks.
    pub batch_means: Vec<Vector3<f64>>,
}

/// Runs the paths for one starting frame and time. Paths are processed in
/// index order, so the result does not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn estimate_at_frame(
    u0: &Frame,
    t0: f64,
    horizon: f64,
    drift: &dyn TimeVectorField,
    nu: f64,
    terminal: &VectorFieldSpec,
    source: Option<&dyn TimeVectorField>,
    mc: &McParams,
) -> Result<PointEstimate, CoreError> {
    let kind = u0.kind();
    let noise = mc.noise(kind, t0, horizon)?;
    let stepper = Stepper::new(kind, nu, mc.dt, mc.scheme, drift);
    let n = mc.paths;
    let mut mean = Vector3::zeros();
    let mut m2 = 0.0;
    let mut batches = vec![Vector3::zeros(); N_BATCHES];
    let mut counts = [0usize; N_BATCHES];
    for p in 0..n {
        let mut rng = noise.path_noise(p as u64);
        let mut u = *u0;
        let mut acc = [0.0; 2];
        for j in 0..noise.n_steps {
            let t = t0 + j as f64 * mc.dt;
            if let Some(g) = source {
                let c = u.coords_of(&g.eval_at(t, &u.base));
                acc[0] += c[0] * mc.dt;
                acc[1] += c[1] * mc.dt;
            }
            let db = rng.increment(mc.dt, mc.refinement);
            u = stepper.step(&u, t, &db).0;
        }
        let c = u.coords_of(&terminal.eval_point(&u.base));
        let value = u0.vector_from(&[c[0] + acc[0], c[1] + acc[1]]);
        if !value.iter().all(|v| v.is_finite()) {
            return Err(CoreError::NonFinite {
                path: p,
                step: noise.n_steps,
            });
        }
        // Welford update.
        let delta = value - mean;
        mean += delta / (p + 1) as f64;
        m2 += delta.dot(&(value - mean));
        let b = p * N_BATCHES / n;
        batches[b] += value;
        counts[b] += 1;
    }
    let batch_means = batches
        .iter()
        .zip(counts)
        .map(|(s, c)| {
            if c > 0 {
                s / c as f64
            } else {
                Vector3::zeros()
            }
        })
        .collect();
    Ok(PointEstimate {
        mean,
        std_error: (m2 / (n - 1) as f64 / n as f64).sqrt(),
        batch_means,
    })
}

/// Grid output of a backward solve.
#[derive(Clone, Debug)]
pub struct BackwardSolution {
    pub theta: TimeField,
    /// Grid estimates `[node][point]` before fitting.
    pub samples: Vec<Vec<Vector3<f64>>>,
    /// Per-point standard errors `[node][point]`; zero at the terminal node.
    pub point_std: Vec<Vec<f64>>,
    /// Root-mean-square of the per-point standard errors at each node.
    pub node_std: Vec<f64>,
    /// Batch means `[node][point][batch]`.
    pub batch_means: Vec<Vec<Vec<Vector3<f64>>>>,
    pub fit_reports: Vec<FitReport>,
    /// Successive Picard distances; empty for linear solves.
    pub picard_distances: Vec<f64>,
    pub converged: bool,
    pub resolution: Resolution,
    pub grid: Grid,
}

impl BackwardSolution {
    /// Field fitted from batch `b` alone, at every node.
    pub fn batch_field(&self, b: usize) -> Result<TimeField, CoreError> {
        let mut fields = Vec::with_capacity(self.theta.len());
        for (node, pts) in self.batch_means.iter().enumerate() {
            if pts.is_empty() {
                fields.push(self.theta.fields[node].clone());
                continue;
            }
            let vals: Vec<Vector3<f64>> = pts.iter().map(|bs| bs[b]).collect();
            fields.push(fit_values(&vals, &self.grid, self.resolution)?);
        }
        Ok(TimeField::new(self.theta.times.clone(), fields)?)
    }

    pub fn batch_fields(&self) -> Result<Vec<TimeField>, CoreError> {
        (0..N_BATCHES).map(|b| self.batch_field(b)).collect()
    }

    /// Largest per-point standard error over all nodes.
    pub fn max_point_std(&self) -> f64 {
        self.point_std
            .iter()
            .flatten()
            .fold(0.0, |a: f64, b| a.max(*b))
    }
}

/// Standard error of a mean from batch values.
pub fn batch_standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// `‖a − b‖₂ / ‖b‖₂` in the spectral L² norm.
pub fn relative_l2(a: &VectorFieldSpec, b: &VectorFieldSpec) -> f64 {
    let d = a.resized(a.resolution().degree().max(b.resolution().degree()));
    d.sub(b).l2_norm() / b.l2_norm()
}

fn terminal_field(prob: &BackwardProblem) -> Result<VectorFieldSpec, CoreError> {
    let deg = prob.resolution.degree();
    if prob.terminal.resolution().degree() <= deg {
        return Ok(prob.terminal.resized(deg));
    }
    let vals = prob.terminal.sample(&prob.grid);
    Ok(fit_values(&vals, &prob.grid, prob.resolution)?)
}

/// Grid solve with a solution-independent source.
fn solve_with_source(
    prob: &BackwardProblem,
    times: &[f64],
    source: Option<&dyn TimeVectorField>,
) -> Result<BackwardSolution, CoreError> {
    let zero = ZeroField;
    let drift: &dyn TimeVectorField = match &prob.drift {
        Some(d) => d,
        None => &zero,
    };
    let frames: Vec<Frame> = prob.grid.points().iter().map(Frame::canonical).collect();
    let mut fields = Vec::with_capacity(times.len());
    let mut samples = Vec::with_capacity(times.len());
    let mut point_std = Vec::with_capacity(times.len());
    let mut node_std = Vec::with_capacity(times.len());
    let mut batch_means = Vec::with_capacity(times.len());
    let mut fit_reports = Vec::with_capacity(times.len());
    for (node, &t) in times.iter().enumerate() {
        if prob.is_terminal(t) {
            let h = terminal_field(prob)?;
            samples.push(h.sample(&prob.grid));
            point_std.push(vec![0.0; frames.len()]);
            node_std.push(0.0);
            batch_means.push(Vec::new());
            fit_reports.push(FitReport::default());
            fields.push(h);
            continue;
        }
        let est: Result<Vec<PointEstimate>, CoreError> = frames
            .par_iter()
            .enumerate()
            .map(|(i, u)| {
                estimate_at_frame(
                    u,
                    t,
                    prob.horizon,
                    drift,
                    prob.nu,
                    &prob.terminal,
                    source,
                    &prob.mc,
                )
                .map_err(|e| match e {
                    CoreError::NonFinite { .. } => CoreError::NonFiniteEstimate { point: i, node },
                    other => other,
                })
            })
            .collect();
        let est = est?;
        let vals: Vec<Vector3<f64>> = est.iter().map(|e| e.mean).collect();
        let fit = fit_values(&vals, &prob.grid, prob.resolution)?;
        fit_reports.push(fbsde_geom::fields::fit_report(&fit, &prob.grid, &vals));
        let stds: Vec<f64> = est.iter().map(|e| e.std_error).collect();
        node_std.push((stds.iter().map(|s| s * s).sum::<f64>() / stds.len() as f64).sqrt());
        point_std.push(stds);
        batch_means.push(est.into_iter().map(|e| e.batch_means).collect());
        samples.push(vals);
        fields.push(fit);
    }
    Ok(BackwardSolution {
        theta: TimeField::new(times.to_vec(), fields)?,
        samples,
        point_std,
        node_std,
        batch_means,
        fit_reports,
        picard_distances: Vec::new(),
        converged: true,
        resolution: prob.resolution,
        grid: prob.grid.clone(),
    })
}

/// Feynman–Kac evaluation for a source that does not depend on the solution.
pub fn evaluate_backward_linear(prob: &BackwardProblem) -> Result<BackwardSolution, CoreError> {
    prob.validate()?;
    let prob = &on_step_grid(prob)?;
    match &prob.source {
        Source::None => solve_with_source(prob, &prob.times, None),
        Source::Field(g) => solve_with_source(prob, &prob.times, Some(g)),
        Source::Driver(_) => Err(CoreError::Invalid(
            "a solution-dependent driver needs solve_general_fbsde".into(),
        )),
    }
}

/// Resamples drift and source on the step grid `k·dt` when every path
/// starts on it, so each step evaluates one spectral field instead of
/// interpolating two. Values along paths are unchanged.
fn on_step_grid(prob: &BackwardProblem) -> Result<BackwardProblem, CoreError> {
    let dt = prob.mc.dt;
    let on_grid = |t: f64| ((t / dt).round() * dt - t).abs() <= 1e-9 * dt;
    if !prob.times.iter().all(|t| on_grid(*t)) || !on_grid(prob.horizon) {
        return Ok(prob.clone());
    }
    let n = (prob.horizon / dt).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
    let mut out = prob.clone();
    if n == 0 {
        return Ok(out);
    }
    if let Some(d) = &prob.drift {
        out.drift = Some(d.resampled(grid.clone())?);
    }
    if let Source::Field(g) = &prob.source {
        out.source = Source::Field(g.resampled(grid)?);
    }
    Ok(out)
}

/// The driver frozen at a Picard iterate: `G(t, x) = F(t, x, θ, ∇_{A_i}θ)`.
struct FrozenDriver<'a> {
    driver: &'a dyn Driver,
    theta: &'a TimeField,
}

impl TimeVectorField for FrozenDriver<'_> {
    fn eval_at(&self, t: f64, p: &Point) -> Vector3<f64> {
        let kind = p.kind();
        let (y, jac) = self.theta.jet_at(t, p);
        let a = embedding_field_components(kind, p.coords());
        let z: Vec<Vector3<f64>> = a[..kind.noise_count()].iter().map(|ai| jac * ai).collect();
        self.driver.eval(t, p, &y, &z)
    }
}

/// `sup_t ‖a(t) − b(t)‖_{1,2}`.
pub fn sup_w12_distance(a: &TimeField, b: &TimeField) -> Result<f64, CoreError> {
    Ok(a.sup_distance(b, |d| sobolev_norm(d, 1, 2.0))?)
}

/// Picard iteration in the driver. The iterate is carried on the requested
/// times with `T` appended when absent; the output keeps that node set.
///
/// Each sweep freezes `(y, z)` at the previous iterate, with `z` taken from
/// the spectral covariant derivative of the fitted field, and reuses the
/// same noise. The loop stops when the `sup_t W^{1,2}` distance drops below
/// `tol`, fails with [`CoreError::NonContraction`] after three consecutive
/// distance ratios ≥ 1, and otherwise returns after `max_iters` sweeps with
/// `converged = false`.
pub fn solve_general_fbsde(prob: &BackwardProblem) -> Result<BackwardSolution, CoreError> {
    prob.validate()?;
    let driver = match &prob.source {
        Source::Driver(d) => d.clone(),
        Source::None | Source::Field(_) => return evaluate_backward_linear(prob),
    };
    let mut times = prob.times.clone();
    if !prob.is_terminal(*times.last().unwrap()) {
        times.push(prob.horizon);
    }
    let h = terminal_field(prob)?;
    let mut theta = TimeField::constant(times.clone(), &h)?;
    let mut distances = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    for iter in 0..prob.picard.max_iters {
        let frozen = FrozenDriver {
            driver: driver.as_ref(),
            theta: &theta,
        };
        let mut sol = solve_with_source(prob, &times, Some(&frozen))?;
        let d = sup_w12_distance(&sol.theta, &theta)?;
        log::debug!("driver Picard sweep {iter}: distance {d:.3e}");
        if let Some(prev) = distances.last() {
            ratios.push(d / prev);
        }
        distances.push(d);
        let stuck = ratios.len() >= 3 && ratios[ratios.len() - 3..].iter().all(|r| *r >= 1.0);
        if stuck {
            return Err(CoreError::NonContraction { ratios, distances });
        }
        let done = d < prob.picard.tol;
        theta = sol.theta.clone();
        if done || iter + 1 == prob.picard.max_iters {
            sol.picard_distances = distances;
            sol.converged = done;
            if !done {
                log::warn!(
                    "driver Picard loop stopped at max_iters = {} above tol {}",
                    prob.picard.max_iters,
                    prob.picard.tol
                );
            }
            return Ok(sol);
        }
    }
    unreachable!("max_iters ≥ 1 is validated")
}

/// Residual of the backward PDE at one interior time node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualNode {
    pub time: f64,
    /// `‖∂_tθ + νΔθ + ∇_bθ + F‖₂`.
    pub absolute: f64,
    /// `absolute` over the sum of the L² norms of the four terms.
    pub relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub nodes: Vec<ResidualNode>,
}

impl ResidualReport {
    pub fn max_absolute(&self) -> f64 {
        self.nodes.iter().fold(0.0, |a, n| a.max(n.absolute))
    }

    pub fn max_relative(&self) -> f64 {
        self.nodes.iter().fold(0.0, |a, n| a.max(n.relative))
    }
}

/// Evaluates `∂_tθ + νΔθ + ∇_bθ + F(t, x, θ, ∇_{A_i}θ)` at the interior
/// nodes of `theta`, with central time differences and quadrature on the
/// dealiased grid of the field resolution.
pub fn pde_residual_check(
    theta: &TimeField,
    prob: &BackwardProblem,
) -> Result<ResidualReport, CoreError> {
    if theta.len() < 3 {
        return Err(CoreError::Invalid(
            "residual check needs at least 3 time nodes".into(),
        ));
    }
    if theta.kind() != prob.kind {
        return Err(CoreError::Invalid("manifold mismatch".into()));
    }
    let res = theta.fields[0].resolution();
    let grid = Grid::dealiased(res);
    let mut nodes = Vec::new();
    for i in 1..theta.len() - 1 {
        let t = theta.times[i];
        let h = theta.times[i + 1] - theta.times[i - 1];
        let dtheta = theta.fields[i + 1].sub(&theta.fields[i - 1]).scale(1.0 / h);
        let field = &theta.fields[i];
        let lap = bochner_laplacian(field).scale(prob.nu);
        let mut sq = [0.0; 5];
        for q in 0..grid.len() {
            let p = grid.point(q);
            let w = grid.weight(q);
            let (y, jac) = field.eval_jet(&p);
            let a = dtheta.eval_point(&p);
            let b = lap.eval_point(&p);
            let c = match &prob.drift {
                Some(d) => jac * d.eval_at(t, &p),
                None => Vector3::zeros(),
            };
            let f = match &prob.source {
                Source::None => Vector3::zeros(),
                Source::Field(g) => g.eval_at(t, &p),
                Source::Driver(drv) => {
                    let kind = p.kind();
                    let am = embedding_field_components(kind, p.coords());
                    let z: Vec<Vector3<f64>> =
                        am[..kind.noise_count()].iter().map(|ai| jac * ai).collect();
                    drv.eval(t, &p, &y, &z)
                }
            };
            let r = a + b + c + f;
            for (s, v) in sq.iter_mut().zip([r, a, b, c, f]) {
                *s += w * v.norm_squared();
            }
        }
        let norms = sq.map(f64::sqrt);
        let scale: f64 = norms[1..].iter().sum();
        nodes.push(ResidualNode {
            time: t,
            absolute: norms[0],
            relative: if scale > 0.0 { norms[0] / scale } else { 0.0 },
        });
    }
    Ok(ResidualReport { nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sin_x(k: usize) -> VectorFieldSpec {
        VectorFieldSpec::torus_trig(k, &[(1, 0, 0.0, 1.0, 0.0, 0.0)])
    }

    #[test]
    fn zero_horizon_returns_terminal() {
        let h = sin_x(3);
        let prob = BackwardProblem::new(
            h.clone(),
            0.1,
            0.0,
            vec![0.0],
            Resolution::Torus { k: 3 },
            McParams::new(16, 0.01, 1),
        );
        let sol = evaluate_backward_linear(&prob).unwrap();
        assert_eq!(sol.theta.fields[0], h);
    }

    #[test]
    fn noiseless_flow_is_exact() {
        // ν = 0 and no drift: every path sits still, θ(t) = h.
        let h = sin_x(3);
        let prob = BackwardProblem::new(
            h.clone(),
            0.0,
            0.2,
            vec![0.0, 0.1, 0.2],
            Resolution::Torus { k: 3 },
            McParams::new(4, 0.05, 1),
        );
        let sol = evaluate_backward_linear(&prob).unwrap();
        for f in &sol.theta.fields {
            assert!(f.sub(&h).l2_norm() < 1e-12);
        }
        assert!(sol.max_point_std() < 1e-14);
    }

    #[test]
    fn driver_requires_general_solver() {
        let mut prob = BackwardProblem::new(
            sin_x(2),
            0.1,
            0.1,
            vec![0.0],
            Resolution::Torus { k: 2 },
            McParams::new(4, 0.05, 1),
        );
        prob.source = Source::Driver(Arc::new(LinearDecay { c: 1.0 }));
        assert!(evaluate_backward_linear(&prob).is_err());
    }

    #[test]
    fn rejects_bad_times() {
        let prob = BackwardProblem::new(
            sin_x(2),
            0.1,
            0.1,
            vec![0.05, 0.0],
            Resolution::Torus { k: 2 },
            McParams::new(4, 0.05, 1),
        );
        assert!(prob.validate().is_err());
    }

    #[test]
    fn batch_error_of_constant_is_zero() {
        assert_eq!(batch_standard_error(&[1.0; 8]), 0.0);
        let se = batch_standard_error(&[0.0, 2.0]);
        assert!((se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_everything_has_zero_residual() {
        let z = VectorFieldSpec::zeros(Resolution::Torus { k: 2 });
        let theta = TimeField::constant(vec![0.0, 0.1, 0.2], &z).unwrap();
        let prob = BackwardProblem::new(
            z,
            0.1,
            0.2,
            vec![0.0, 0.1, 0.2],
            Resolution::Torus { k: 2 },
            McParams::new(4, 0.05, 1),
        );
        let rep = pde_residual_check(&theta, &prob).unwrap();
        assert_eq!(rep.max_absolute(), 0.0);
        assert_eq!(rep.max_relative(), 0.0);
    }
}
