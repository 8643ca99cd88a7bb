use fbsde_geom::fields::{leray_project, VectorFieldSpec};
use fbsde_geom::Point;
use fbsde_reference::{torus_spectral_ns, ExactSolution, Family};

fn random_solenoidal() -> VectorFieldSpec {
    // Low modes in a wide truncation, so output truncation loses no energy.
    let v = VectorFieldSpec::torus_trig(
        12,
        &[
            (1, 0, 0.3, -0.2, 0.5, 0.1),
            (1, 2, -0.4, 0.2, 0.1, 0.3),
            (3, -1, 0.2, 0.1, -0.2, 0.4),
            (0, 2, 0.6, 0.0, 0.0, -0.1),
        ],
    );
    leray_project(&v)
}

#[test]
fn kinetic_energy_does_not_increase() {
    let traj = torus_spectral_ns(&random_solenoidal(), 0.05, 0.5, 0.005).unwrap();
    let energy: Vec<f64> = traj.fields.iter().map(|f| f.l2_norm()).collect();
    for w in energy.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} > {}", w[1], w[0]);
    }
}

#[test]
fn inviscid_flow_conserves_energy() {
    let v0 = random_solenoidal();
    let traj = torus_spectral_ns(&v0, 0.0, 0.2, 0.002).unwrap();
    let e0 = v0.l2_norm();
    let e1 = traj.fields.last().unwrap().l2_norm();
    assert!((e1 - e0).abs() < 1e-3 * e0, "{e0} → {e1}");
}

#[test]
fn spectral_taylor_green_agrees_with_closed_form() {
    let nu = 0.1;
    let traj = torus_spectral_ns(&VectorFieldSpec::taylor_green(4, 1.0), nu, 0.3, 0.01).unwrap();
    let exact = ExactSolution::new(Family::TaylorGreen, nu, 1.0);
    let p = Point::torus(0.9, 2.2);
    let (s, last) = (*traj.times.last().unwrap(), traj.fields.last().unwrap());
    let want = exact.eval(s, &p).unwrap().components;
    assert!((last.eval_point(&p) - want).norm() < 1e-8);
}

#[test]
fn reference_does_not_depend_on_the_solver_crate() {
    let manifest = include_str!("../Cargo.toml");
    assert!(!manifest.contains("fbsde-core"));
}
