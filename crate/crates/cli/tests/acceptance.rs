//! Acceptance suite. Every test prints one `[PASS]`/`[FAIL]` line to stderr
//! (outside the test harness capture) and then asserts.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use serde_json::Value;

use fbsde_cli::diagnostics::amplitude;
use fbsde_core::fbsde::{
    batch_standard_error, solve_general_fbsde, BackwardProblem, LinearDecay, McParams,
    PicardParams, Source,
};
use fbsde_geom::fields::{Resolution, VectorFieldSpec};

/// Runtime bounds are part of several criteria, so tests run one at a time.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn report(name: &str, pass: bool, detail: &str) {
    let line = format!(
        "[{}] {name}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

/// Runs the CLI in-process and returns `(exit code, manifest metrics)`.
fn cli(dir: &Path, args: &[&str]) -> (i32, Value) {
    let mut argv = vec!["fbsde-ns".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.push("--out".into());
    argv.push(dir.display().to_string());
    let code = fbsde_cli::run(argv);
    let text = std::fs::read_to_string(dir.join("manifest.json")).expect("manifest");
    let manifest: Value = serde_json::from_str(&text).expect("manifest json");
    (code, manifest["metrics"].clone())
}

fn num(v: &Value, key: &str) -> f64 {
    v[key]
        .as_f64()
        .unwrap_or_else(|| panic!("metric `{key}` missing in {v}"))
}

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().expect("temp dir")
}

#[test]
fn geometry_identities() {
    let _guard = serial();
    let mut pass = true;
    let mut detail = String::new();
    for (m, curv_tol) in [("torus2", 1e-10), ("sphere2", 1e-6)] {
        let d = tmp();
        let start = Instant::now();
        let (_, metrics) = cli(
            d.path(),
            &[
                "validate-geometry",
                "--manifold",
                m,
                "--samples",
                "1000",
                "--seed",
                "7",
            ],
        );
        let secs = start.elapsed().as_secs_f64();
        let id = &metrics["identities"];
        let (sq, mc) = (num(id, "sum_of_squares"), num(id, "mean_curvature"));
        pass &= sq <= 1e-12 && mc <= curv_tol && secs < 1.0;
        detail += &format!("{m}: sum-of-squares {sq:.2e}, mean curvature {mc:.2e} (tol {curv_tol:.0e}), {secs:.2}s; ");
    }
    report("geometry identities", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn scalarization_round_trip_and_equivariance() {
    let _guard = serial();
    let mut pass = true;
    let mut detail = String::new();
    for m in ["torus2", "sphere2"] {
        let d = tmp();
        let start = Instant::now();
        let (_, metrics) = cli(
            d.path(),
            &[
                "validate-geometry",
                "--manifold",
                m,
                "--samples",
                "1000",
                "--seed",
                "11",
            ],
        );
        let secs = start.elapsed().as_secs_f64();
        let id = &metrics["identities"];
        let (rt, eq) = (num(id, "round_trip"), num(id, "equivariance"));
        pass &= rt <= 1e-13 && eq <= 1e-13 && secs < 1.0;
        detail += &format!("{m}: round trip {rt:.2e}, equivariance {eq:.2e}, {secs:.2}s; ");
    }
    report(
        "scalarization round trip and O(2) equivariance",
        pass,
        &detail,
    );
    assert!(pass, "{detail}");
}

#[test]
fn forward_scheme_weak_consistency() {
    let _guard = serial();
    let start = Instant::now();
    let mut pass = true;
    let mut detail = String::new();
    for m in ["torus2", "sphere2"] {
        let d = tmp();
        let (_, metrics) = cli(
            d.path(),
            &[
                "flow-diagnostics",
                "--manifold",
                m,
                "--nu",
                "0.5",
                "--T",
                "0.2",
                "--dt",
                "1e-3",
                "--paths",
                "1000000",
                "--samples",
                "100000",
                "--seed",
                "7",
            ],
        );
        for g in metrics["generator"].as_array().expect("generator rows") {
            let e = num(g, "relative_error");
            pass &= e <= 0.05;
            detail += &format!(
                "{m} generator[{}] {:.2}%; ",
                g["function"].as_str().unwrap_or("?"),
                100.0 * e
            );
        }
        if m == "sphere2" {
            let dec = &metrics["coordinate_decay"];
            let mut z: f64 = 0.0;
            for i in 0..3 {
                let (mean, se, exact) = (
                    dec["mean"][i].as_f64().unwrap(),
                    dec["std_error"][i].as_f64().unwrap(),
                    dec["exact"][i].as_f64().unwrap(),
                );
                z = z.max((mean - exact).abs() / se);
            }
            pass &= z <= 3.0;
            detail += &format!("coordinate decay max |z| {z:.2}; ");
        }
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs <= 120.0;
    detail += &format!("{secs:.0}s");
    report("forward scheme weak consistency", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn tensor_heat_by_backward_estimator() {
    let _guard = serial();
    let start = Instant::now();
    let mut pass = true;
    let mut detail = String::new();
    for (m, degree) in [("torus2", "4"), ("sphere2", "6")] {
        let d = tmp();
        let (code, _) = cli(
            d.path(),
            &[
                "heat",
                "--manifold",
                m,
                "--degree",
                degree,
                "--grid",
                "16",
                "--nu",
                "0.5",
                "--T",
                "0.4",
                "--dt",
                "0.01",
                "--nodes",
                "3",
                "--paths",
                "20000",
                "--seed",
                "7",
            ],
        );
        let csv = std::fs::read_to_string(d.path().join("heat_errors.csv")).expect("heat csv");
        for row in csv.lines().skip(1) {
            let c: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
            let tol = (0.02f64).max(3.0 * c[2]);
            pass &= c[1] <= tol;
            detail += &format!(
                "{m} t={:.2}: {:.2}% (tol {:.2}%); ",
                c[0],
                100.0 * c[1],
                100.0 * tol
            );
        }
        pass &= code == 0;
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs <= 600.0;
    detail += &format!("{secs:.0}s");
    report("tensor heat via backward estimator", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn general_driver_linear_in_y() {
    let _guard = serial();
    let (nu, c, horizon) = (0.4, 0.5, 0.5);
    let l = 3;
    let k = VectorFieldSpec::killing(l, 1.0);
    let times = vec![0.0, 0.25];
    let mut prob = BackwardProblem::new(
        k.clone(),
        nu,
        horizon,
        times.clone(),
        Resolution::Sphere { l },
        McParams::new(4000, 0.01, 7),
    );
    prob.source = Source::Driver(Arc::new(LinearDecay { c }));
    prob.picard = PicardParams {
        tol: 1e-4,
        max_iters: 20,
    };
    let sol = solve_general_fbsde(&prob).expect("driver solve");
    let batches = sol.batch_fields().expect("batches");
    let mut pass = sol.converged;
    let mut detail = String::new();
    for (i, t) in times.iter().enumerate() {
        let a = amplitude(&sol.theta.fields[i], &k);
        let exact = (-(nu + c) * (horizon - t)).exp();
        let se = batch_standard_error(
            &batches
                .iter()
                .map(|b| amplitude(&b.fields[i], &k))
                .collect::<Vec<_>>(),
        );
        let err = (a - exact).abs() / exact;
        let tol = (0.02f64).max(3.0 * se / exact);
        pass &= err <= tol;
        detail += &format!(
            "t={t}: amplitude {a:.5} vs {exact:.5} ({:.2}%, tol {:.2}%); ",
            100.0 * err,
            100.0 * tol
        );
    }
    let d = &sol.picard_distances;
    let decreasing = d.len() < 3 || d[1..].windows(2).all(|w| w[1] < w[0]);
    pass &= decreasing;
    detail += &format!("Picard distances {}", sci(d));
    report("general driver reproduces exp(-(nu+c)(T-t))", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn leray_projection() {
    let _guard = serial();
    let mut pass = true;
    let mut detail = String::new();
    for (m, div_tol) in [("torus2", 1e-10), ("sphere2", 1e-6)] {
        let d = tmp();
        let (_, metrics) = cli(
            d.path(),
            &[
                "validate-geometry",
                "--manifold",
                m,
                "--degree",
                "8",
                "--samples",
                "20",
                "--seed",
                "3",
            ],
        );
        let lr = &metrics["leray"];
        let (dv, idem, gr) = (
            num(lr, "divergence"),
            num(lr, "idempotence"),
            num(lr, "gradient"),
        );
        pass &= dv <= div_tol && idem <= 1e-12 && gr <= 1e-10;
        detail += &format!("{m}: div {dv:.2e}, idempotence {idem:.2e}, gradient {gr:.2e}; ");
    }
    report("Leray projection", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn navier_stokes_torus_taylor_green() {
    let _guard = serial();
    let d = tmp();
    let start = Instant::now();
    let (code, metrics) = cli(
        d.path(),
        &[
            "ns-validate",
            "--manifold",
            "torus2",
            "--nu",
            "0.1",
            "--T",
            "0.1",
            "--degree",
            "4",
            "--dt",
            "0.01",
            "--nodes",
            "3",
            "--paths",
            "20000",
            "--tol",
            "1e-3",
            "--max-iters",
            "8",
            "--reference",
            "true",
            "--seed",
            "7",
        ],
    );
    let secs = start.elapsed().as_secs_f64();
    let converged = metrics["converged"].as_bool().unwrap_or(false);
    let iters = num(&metrics, "picard_iterations");
    let amp = num(&metrics, "final_amplitude_error");
    let refe = num(&metrics, "reference_error");
    let pass =
        converged && iters <= 8.0 && amp <= 0.03 && refe <= 0.05 && secs <= 1800.0 && code == 0;
    let detail = format!(
        "amplitude error {:.3}%, spectral-reference error {:.3}%, {iters} sweeps, {secs:.0}s",
        100.0 * amp,
        100.0 * refe
    );
    report("Navier-Stokes on the torus (Taylor-Green)", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn navier_stokes_sphere_killing_decay() {
    let _guard = serial();
    let mut rates = Vec::new();
    let mut pass = true;
    let mut detail = String::new();
    for (lap, factor) in [("bochner", 1.0), ("hodge-de-rham", 2.0)] {
        let d = tmp();
        let (_, metrics) = cli(
            d.path(),
            &[
                "ns-validate",
                "--manifold",
                "sphere2",
                "--laplacian",
                lap,
                "--nu",
                "0.4",
                "--T",
                "0.5",
                "--degree",
                "2",
                "--dt",
                "0.01",
                "--nodes",
                "3",
                "--paths",
                "10000",
                "--seed",
                "7",
            ],
        );
        let r = num(&metrics, "fitted_rate");
        let target = factor * 0.4;
        let err = (r - target).abs() / target;
        pass &= metrics["converged"].as_bool().unwrap_or(false) && err <= 0.05;
        detail += &format!("{lap}: rate {r:.4} vs {target} ({:.2}%); ", 100.0 * err);
        rates.push(r);
    }
    let ratio = rates[1] / rates[0];
    pass &= (ratio - 2.0).abs() <= 0.2;
    detail += &format!("ratio {ratio:.3}");
    report("Navier-Stokes on the sphere (Killing decay)", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn contraction_probe_ratios() {
    let _guard = serial();
    let mut pass = true;
    let mut detail = String::new();
    for m in ["torus2", "sphere2"] {
        let mut ratios = Vec::new();
        for t in [0.05f64, 0.2, 0.8] {
            let d = tmp();
            let dt = (0.01f64).min(t / 10.0).to_string();
            let ts = t.to_string();
            let (_, metrics) = cli(
                d.path(),
                &[
                    "contraction-probe",
                    "--manifold",
                    m,
                    "--nu",
                    "0.1",
                    "--T",
                    &ts,
                    "--dt",
                    &dt,
                    "--nodes",
                    "3",
                    "--paths",
                    "1000",
                    "--seed",
                    "7",
                ],
            );
            ratios.push(num(&metrics, "ratio"));
        }
        pass &= ratios[0] < 1.0 && ratios.windows(2).all(|w| w[1] > w[0]);
        detail += &format!("{m}: ratios {}; ", sci(&ratios));
    }
    report("contraction probe", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn variational_flow_orders() {
    let _guard = serial();
    let d = tmp();
    let (_, metrics) = cli(
        d.path(),
        &[
            "flow-diagnostics",
            "--manifold",
            "sphere2",
            "--nu",
            "0.5",
            "--T",
            "0.5",
            "--dt",
            "1e-3",
            "--paths",
            "10000",
            "--samples",
            "2000",
            "--seed",
            "7",
        ],
    );
    let eo = num(&metrics, "variational_eps_order");
    let to = num(&metrics, "variational_dt_order");
    let pass = eo >= 0.9 && to >= 0.9;
    let detail = format!("observed order {eo:.3} in eps, {to:.3} in dt");
    report("variational flow finite-difference orders", pass, &detail);
    assert!(pass, "{detail}");
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .expect("out dir")
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn determinism_across_worker_counts() {
    let _guard = serial();
    let exe = PathBuf::from(env!("CARGO_BIN_EXE_fbsde-ns"));
    let runs: [&[&str]; 2] = [
        &[
            "heat",
            "--manifold",
            "sphere2",
            "--paths",
            "400",
            "--nu",
            "0.5",
            "--T",
            "0.2",
        ],
        &[
            "ns-solve",
            "--manifold",
            "torus2",
            "--paths",
            "200",
            "--max-iters",
            "3",
            "--tol",
            "1e-2",
        ],
    ];
    let mut pass = true;
    let mut detail = String::new();
    for args in runs {
        let mut outputs = Vec::new();
        for threads in ["1", "4", "16"] {
            let d = tmp();
            let status = Command::new(&exe)
                .args(args)
                .args(["--seed", "7", "--threads", threads, "--out"])
                .arg(d.path())
                .output()
                .expect("spawn CLI");
            assert!(status.status.code().is_some_and(|c| c <= 1), "{status:?}");
            outputs.push(csv_files(d.path()));
        }
        let same = !outputs[0].is_empty() && outputs.iter().all(|o| *o == outputs[0]);
        pass &= same;
        detail += &format!(
            "{}: {} CSVs {}; ",
            args[0],
            outputs[0].len(),
            if same { "identical" } else { "differ" }
        );
    }
    report("determinism across worker counts 1/4/16", pass, &detail);
    assert!(pass, "{detail}");
}
