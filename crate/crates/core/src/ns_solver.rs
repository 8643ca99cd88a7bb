//! Navier–Stokes by Picard iteration of the stochastic representation.
//!
//! Public times are physical, `s ∈ [0, T]`, with the initial velocity at
//! `s = 0`. Internally the backward time `t = T − s` is used: for a frozen
//! velocity `w`, the backward equation has forward drift `−w(T − t)`,
//! source `F_{w(T−t)}` and terminal value `v₀`. Its Leray-projected solution
//! is the next iterate.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use fbsde_geom::fields::snapshot::fmt17;
use fbsde_geom::fields::{
    advective_divergence, div, grad, laplace_inverse, leray_project, pressure_force, ricci,
    sobolev_norm, Grid, Resolution, TimeField, VectorFieldSpec,
};
use fbsde_geom::geometry::{ricci_factor, ManifoldKind};

use crate::fbsde::{
    evaluate_backward_linear, BackwardProblem, BackwardSolution, McParams, PicardParams, Source,
    N_BATCHES,
};
use crate::CoreError;

/// Divergence allowed in Picard inputs.
pub const INPUT_DIV_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Laplacian {
    /// `tr ∇²`.
    #[default]
    Bochner,
    /// `Δ − Ric^♯`; the backward source gains `−ν Ric^♯ Y`, with `Y` frozen
    /// at the current iterate.
    #[serde(alias = "hodge")]
    HodgeDeRham,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NsPicard {
    pub max_iters: usize,
    /// Stop when `sup_s ‖w_{n+1} − w_n‖_{1,p}` falls below `tol`.
    pub tol: f64,
    pub p: f64,
}

impl Default for NsPicard {
    fn default() -> Self {
        NsPicard {
            max_iters: 8,
            tol: 1e-3,
            p: 4.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NSConfig {
    pub nu: f64,
    pub horizon: f64,
    pub v0: VectorFieldSpec,
    pub laplacian: Laplacian,
    pub picard: NsPicard,
    pub mc: McParams,
    /// Increasing physical times from `0` to `horizon`.
    pub time_nodes: Vec<f64>,
    pub resolution: Resolution,
    pub grid: Grid,
}

impl NSConfig {
    /// Configuration with `n_nodes` equally spaced time nodes and the fit grid.
    pub fn new(
        v0: VectorFieldSpec,
        nu: f64,
        horizon: f64,
        n_nodes: usize,
        resolution: Resolution,
        mc: McParams,
    ) -> Self {
        let n = n_nodes.max(2);
        let time_nodes = (0..n)
            .map(|i| horizon * i as f64 / (n - 1) as f64)
            .collect();
        NSConfig {
            nu,
            horizon,
            v0,
            laplacian: Laplacian::Bochner,
            picard: NsPicard::default(),
            mc,
            time_nodes,
            resolution,
            grid: Grid::for_fit(resolution),
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        self.v0.kind()
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        self.mc.validate()?;
        if !(self.nu > 0.0) {
            return Err(CoreError::Invalid(format!(
                "nu must be positive, got {}",
                self.nu
            )));
        }
        if !(self.horizon > 0.0) {
            return Err(CoreError::Invalid("horizon must be positive".into()));
        }
        if !(self.picard.tol > 0.0) || self.picard.max_iters == 0 {
            return Err(CoreError::Invalid(
                "Picard tol and max_iters must be positive".into(),
            ));
        }
        if !(self.picard.p > 2.0) {
            return Err(CoreError::Invalid(format!(
                "Sobolev exponent p must exceed the dimension 2, got {}",
                self.picard.p
            )));
        }
        let nodes = &self.time_nodes;
        if nodes.len() < 2
            || nodes[0].abs() > 1e-12
            || (nodes[nodes.len() - 1] - self.horizon).abs() > 1e-12
            || nodes.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(CoreError::Invalid(
                "time nodes must increase from 0 to the horizon".into(),
            ));
        }
        let d = div(&self.v0).l2_norm();
        if d > 1e-8 {
            return Err(CoreError::Invalid(format!(
                "v0 is not divergence-free: ‖div‖ = {d:.3e}"
            )));
        }
        if self.resolution.kind() != self.kind() || self.grid.kind() != self.kind() {
            return Err(CoreError::Invalid(
                "manifold mismatch between v0, resolution and grid".into(),
            ));
        }
        Ok(())
    }

    /// Backward times `T − s`, increasing.
    fn backward_times(&self) -> Vec<f64> {
        self.time_nodes
            .iter()
            .rev()
            .map(|s| self.horizon - s)
            .collect()
    }

    fn norm_1p(&self, v: &VectorFieldSpec) -> Result<f64, fbsde_geom::GeometryError> {
        sobolev_norm(v, 1, self.picard.p)
    }
}

/// Reverses the node order of `f` and relabels it with `times`, which must
/// be the mirrored grid. Taking the times from the caller keeps the physical
/// grid bit-exact across the round trip.
fn reverse_onto(f: &TimeField, times: Vec<f64>) -> Result<TimeField, CoreError> {
    let fields = f.fields.iter().rev().cloned().collect();
    Ok(TimeField::new(times, fields)?)
}

/// Result of one application of the Picard map.
#[derive(Clone, Debug)]
pub struct PicardStep {
    /// `I(w)` in physical time.
    pub projected: TimeField,
    /// The backward solution before projection, in physical time.
    pub unprojected: TimeField,
    /// Per-node RMS standard error, physical node order.
    pub node_std: Vec<f64>,
    /// Backward solution in backward time, with batch data.
    pub backward: BackwardSolution,
}

fn max_div(w: &TimeField) -> f64 {
    w.fields
        .iter()
        .map(|f| div(f).l2_norm())
        .fold(0.0, f64::max)
}

/// `F_v` without the divergence-free precondition, for diagnostics on
/// contaminated inputs.
fn pressure_force_unchecked(v: &VectorFieldSpec, nu: f64) -> Result<VectorFieldSpec, CoreError> {
    let d = div(v);
    let source = advective_divergence(v, v)?.sub(&d.scale(nu * ricci_factor(v.kind())));
    Ok(grad(&laplace_inverse(&source)))
}

fn picard_map_impl(w: &TimeField, cfg: &NSConfig, checked: bool) -> Result<PicardStep, CoreError> {
    cfg.validate()?;
    if w.kind() != cfg.kind() {
        return Err(CoreError::Invalid("w lives on another manifold".into()));
    }
    if w.times.len() != cfg.time_nodes.len()
        || w.times
            .iter()
            .zip(&cfg.time_nodes)
            .any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(CoreError::Invalid(
            "w must live on the configured time nodes".into(),
        ));
    }
    if checked {
        let d = max_div(w);
        if d > INPUT_DIV_TOL {
            return Err(CoreError::Invalid(format!(
                "Picard input is not divergence-free: max ‖div w‖ = {d:.3e}"
            )));
        }
    }
    let mut forces = Vec::with_capacity(w.len());
    for f in &w.fields {
        let mut g = if checked {
            // Remove the sub-tolerance divergence before the strict check.
            pressure_force(
                &leray_project(f),
                cfg.nu,
                cfg.laplacian == Laplacian::HodgeDeRham,
            )?
        } else {
            pressure_force_unchecked(f, cfg.nu)?
        };
        if cfg.laplacian == Laplacian::HodgeDeRham {
            g = g.sub(&ricci(f).scale(cfg.nu));
        }
        forces.push(g);
    }
    let forces = TimeField::new(w.times.clone(), forces)?;
    let drift = reverse_onto(&w.map(|f| f.scale(-1.0)), cfg.backward_times())?;
    let source = reverse_onto(&forces, cfg.backward_times())?;
    let prob = BackwardProblem {
        kind: cfg.kind(),
        drift: Some(drift),
        nu: cfg.nu,
        terminal: cfg.v0.clone(),
        source: Source::Field(source),
        horizon: cfg.horizon,
        times: cfg.backward_times(),
        resolution: cfg.resolution,
        grid: cfg.grid.clone(),
        mc: cfg.mc,
        picard: PicardParams::default(),
    };
    let backward = evaluate_backward_linear(&prob)?;
    let unprojected = reverse_onto(&backward.theta, cfg.time_nodes.clone())?;
    let projected = unprojected.map(leray_project);
    let node_std = backward.node_std.iter().rev().copied().collect();
    Ok(PicardStep {
        projected,
        unprojected,
        node_std,
        backward,
    })
}

/// One application of `I_{ν,T,v₀}` to a divergence-free `w`.
pub fn picard_map(w: &TimeField, cfg: &NSConfig) -> Result<PicardStep, CoreError> {
    picard_map_impl(w, cfg, true)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PicardTrace {
    /// `sup_s ‖w_{n+1} − w_n‖_{1,p}`.
    pub distances: Vec<f64>,
    /// `sup_s ‖w_n‖_{2,p}` of the input of sweep `n`.
    pub norms: Vec<f64>,
    pub wall_ms: Vec<f64>,
    /// Largest per-node RMS standard error of sweep `n`.
    pub mc_std: Vec<f64>,
    /// Whether distances decrease after the first two sweeps.
    pub monotone_after_burn_in: bool,
}

impl PicardTrace {
    pub fn iterations(&self) -> usize {
        self.distances.len()
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.distances.windows(2).map(|w| w[1] / w[0]).collect()
    }

    /// Long-format CSV `iteration,distance,norm,wall_ms,mc_std`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,distance,norm,wall_ms,mc_std\n");
        for i in 0..self.distances.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                i + 1,
                fmt17(self.distances[i]),
                fmt17(self.norms[i]),
                fmt17(self.wall_ms[i]),
                fmt17(self.mc_std[i])
            );
        }
        out
    }

    /// Same rows without the timing column, so repeated runs compare
    /// byte for byte.
    pub fn to_csv_untimed(&self) -> String {
        let mut out = String::from("iteration,distance,norm,mc_std\n");
        for i in 0..self.distances.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                i + 1,
                fmt17(self.distances[i]),
                fmt17(self.norms[i]),
                fmt17(self.mc_std[i])
            );
        }
        out
    }

    fn update_monotone(&mut self) {
        let d = &self.distances;
        self.monotone_after_burn_in = d.len() < 3 || d[1..].windows(2).all(|w| w[1] < w[0]);
    }
}

/// Failure of the outer iteration, with the trace so far.
#[derive(Debug)]
pub struct NsFailure {
    pub error: CoreError,
    pub trace: PicardTrace,
    /// Last iterate, when at least one sweep completed.
    pub last: Option<TimeField>,
}

impl std::fmt::Display for NsFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} after {} sweeps", self.error, self.trace.iterations())
    }
}

impl std::error::Error for NsFailure {}

#[derive(Clone, Debug)]
pub struct NsSolution {
    /// Velocity in physical time.
    pub velocity: TimeField,
    pub trace: PicardTrace,
    /// The last sweep, whose projected output is `velocity`.
    pub last_step: PicardStep,
}

fn sup_norm(
    f: &TimeField,
    norm: impl Fn(&VectorFieldSpec) -> Result<f64, fbsde_geom::GeometryError>,
) -> Result<f64, CoreError> {
    let mut best: f64 = 0.0;
    for v in &f.fields {
        best = best.max(norm(v)?);
    }
    Ok(best)
}

/// Picard iteration `w₀ = v₀`, `w_{n+1} = I(w_n)` with common noise.
pub fn solve_ns(cfg: &NSConfig) -> Result<NsSolution, NsFailure> {
    let mut trace = PicardTrace::default();
    let fail = |error: CoreError, trace: &PicardTrace, last: Option<TimeField>| NsFailure {
        error,
        trace: trace.clone(),
        last,
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, &trace, None));
    }
    let v0 = cfg.v0.resized(cfg.resolution.degree());
    let mut w = match TimeField::constant(cfg.time_nodes.clone(), &v0) {
        Ok(w) => w,
        Err(e) => return Err(fail(e.into(), &trace, None)),
    };
    let p = cfg.picard.p;
    for iter in 0..cfg.picard.max_iters {
        let start = Instant::now();
        let norm = match sup_norm(&w, |f| sobolev_norm(f, 2, p)) {
            Ok(n) => n,
            Err(e) => return Err(fail(e, &trace, Some(w))),
        };
        let step = match picard_map(&w, cfg) {
            Ok(s) => s,
            Err(e) => return Err(fail(e, &trace, Some(w))),
        };
        let dist = match step.projected.sup_distance(&w, |d| cfg.norm_1p(d)) {
            Ok(d) => d,
            Err(e) => return Err(fail(e.into(), &trace, Some(w))),
        };
        trace.distances.push(dist);
        trace.norms.push(norm);
        trace.wall_ms.push(start.elapsed().as_secs_f64() * 1e3);
        trace
            .mc_std
            .push(step.node_std.iter().copied().fold(0.0, f64::max));
        trace.update_monotone();
        log::info!(
            "Picard sweep {}: distance {dist:.3e}, ‖w‖_2,p {norm:.3e}",
            iter + 1
        );
        w = step.projected.clone();
        if dist < cfg.picard.tol {
            if !trace.monotone_after_burn_in {
                log::warn!("Picard distances were not monotone after burn-in");
            }
            return Ok(NsSolution {
                velocity: w,
                trace,
                last_step: step,
            });
        }
        let ratios = trace.ratios();
        if ratios.len() >= 3 && ratios[ratios.len() - 3..].iter().all(|r| *r >= 1.0) {
            log::warn!("Picard iteration does not contract; ratios {ratios:?}");
            let error = CoreError::NonContraction {
                ratios,
                distances: trace.distances.clone(),
            };
            return Err(fail(error, &trace, Some(w)));
        }
    }
    log::warn!(
        "Picard iteration stopped at max_iters = {} above tol {}",
        cfg.picard.max_iters,
        cfg.picard.tol
    );
    let error = CoreError::NoConvergence {
        tol: cfg.picard.tol,
        iters: cfg.picard.max_iters,
        distances: trace.distances.clone(),
    };
    Err(fail(error, &trace, Some(w)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    /// `sup_s ‖I(w₁) − I(w₂)‖_{1,p} / sup_s ‖w₁ − w₂‖_{1,p}`.
    pub ratio: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// `(s, ‖I(w₁) − I(w₂)‖_{1,p}, ‖w₁ − w₂‖_{1,p})` per node.
    pub per_time: Vec<(f64, f64, f64)>,
}

/// Measured Lipschitz ratio of the Picard map with common noise.
pub fn contraction_probe(
    w1: &TimeField,
    w2: &TimeField,
    cfg: &NSConfig,
) -> Result<ContractionReport, CoreError> {
    let mut per_time = Vec::with_capacity(w1.len());
    if w1.times != w2.times {
        return Err(CoreError::Invalid("inputs must share time nodes".into()));
    }
    let mut denominator: f64 = 0.0;
    for (s, (a, b)) in w1.times.iter().zip(w1.fields.iter().zip(&w2.fields)) {
        let d = cfg.norm_1p(&a.sub(b))?;
        denominator = denominator.max(d);
        per_time.push((*s, 0.0, d));
    }
    if denominator == 0.0 {
        return Err(CoreError::Invalid(
            "identical inputs: the contraction ratio is 0/0".into(),
        ));
    }
    let i1 = picard_map(w1, cfg)?.projected;
    let i2 = picard_map(w2, cfg)?.projected;
    let mut numerator: f64 = 0.0;
    for (row, (a, b)) in per_time.iter_mut().zip(i1.fields.iter().zip(&i2.fields)) {
        row.1 = cfg.norm_1p(&a.sub(b))?;
        numerator = numerator.max(row.1);
    }
    Ok(ContractionReport {
        ratio: numerator / denominator,
        numerator,
        denominator,
        per_time,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    /// `(s, ‖div θ(s)‖₂, MC standard error of div θ(s))`.
    pub per_time: Vec<(f64, f64, f64)>,
    pub sup_div: f64,
    /// Standard error at the node attaining `sup_div`.
    pub mc_std: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Divergence of the unprojected backward solution for input `v`.
///
/// The input is not required to be divergence-free, so that contaminated
/// velocities can be diagnosed. The MC error of `div θ(s)` is the L² norm of
/// its batch standard-error field.
pub fn divergence_decay_check(
    v: &TimeField,
    cfg: &NSConfig,
) -> Result<DivergenceReport, CoreError> {
    let step = picard_map_impl(v, cfg, false)?;
    let batches = step.backward.batch_fields()?;
    let n = cfg.time_nodes.len();
    let mut per_time = Vec::with_capacity(n);
    for (node, s) in cfg.time_nodes.iter().enumerate() {
        // backward node index of physical node `node`
        let b = n - 1 - node;
        let d = div(&step.backward.theta.fields[b]);
        let mut var = None;
        for bf in &batches {
            let e = div(&bf.fields[b]).sub(&d);
            let sq = e.l2_norm().powi(2);
            var = Some(var.unwrap_or(0.0) + sq);
        }
        let nb = N_BATCHES as f64;
        let se = var.map_or(0.0, |v| (v / (nb * (nb - 1.0))).sqrt());
        per_time.push((*s, d.l2_norm(), se));
    }
    let (sup_div, mc_std) =
        per_time.iter().fold(
            (0.0, 0.0),
            |acc: (f64, f64), r| if r.1 > acc.0 { (r.1, r.2) } else { acc },
        );
    let threshold = (1e-3f64).max(5.0 * mc_std);
    Ok(DivergenceReport {
        per_time,
        sup_div,
        mc_std,
        threshold,
        pass: sup_div <= threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(v0: VectorFieldSpec) -> NSConfig {
        let res = Resolution::Torus { k: 2 };
        NSConfig::new(v0, 0.1, 0.1, 3, res, McParams::new(16, 0.05, 1))
    }

    #[test]
    fn zero_data_is_a_fixed_point() {
        let cfg = small_cfg(VectorFieldSpec::zeros(Resolution::Torus { k: 2 }));
        let sol = solve_ns(&cfg).unwrap();
        assert_eq!(sol.trace.iterations(), 1);
        assert!(sol.velocity.fields.iter().all(|f| f.l2_norm() == 0.0));
    }

    #[test]
    fn identical_probe_inputs_are_rejected() {
        let tg = VectorFieldSpec::taylor_green(2, 1.0);
        let cfg = small_cfg(tg.clone());
        let w = TimeField::constant(cfg.time_nodes.clone(), &tg).unwrap();
        assert!(contraction_probe(&w, &w, &cfg).is_err());
    }

    #[test]
    fn config_checks() {
        let tg = VectorFieldSpec::taylor_green(2, 1.0);
        let mut cfg = small_cfg(tg);
        cfg.picard.p = 2.0;
        assert!(cfg.validate().is_err());
        let grad_field = VectorFieldSpec::torus_trig(2, &[(1, 0, 0.0, 1.0, 0.0, 0.0)]);
        assert!(small_cfg(grad_field).validate().is_err());
    }

    #[test]
    fn reversal_keeps_physical_grid() {
        let tg = VectorFieldSpec::taylor_green(2, 1.0);
        let mut cfg = small_cfg(tg.clone());
        cfg.time_nodes = vec![0.0, 0.03, 0.1];
        let f = TimeField::new(
            cfg.time_nodes.clone(),
            vec![tg.clone(), tg.scale(0.5), tg.scale(0.2)],
        )
        .unwrap();
        let r = reverse_onto(&f, cfg.backward_times()).unwrap();
        assert!((r.times[1] - 0.07).abs() < 1e-15);
        assert_eq!(r.fields[0], tg.scale(0.2));
        let back = reverse_onto(&r, cfg.time_nodes.clone()).unwrap();
        assert_eq!(back, f);
    }
}
