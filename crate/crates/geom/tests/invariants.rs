use nalgebra::{Matrix2, Vector3};
use proptest::prelude::*;

use fbsde_geom::fields::snapshot::{read_meta, read_snapshot_vectors, write_snapshot};
use fbsde_geom::fields::{
    div, laplace_inverse, leray_project, Grid, Resolution, ScalarFieldSpec, TorusScalar,
    VectorFieldSpec,
};
use fbsde_geom::frame_bundle::{rotate_frame, scalarize, transport_frame_raw};
use fbsde_geom::geometry::{
    embedding_field_components, exp_raw, log_raw, parallel_transport, project_to_tangent,
};
use fbsde_geom::{Frame, ManifoldKind, Point};

fn sphere_point() -> impl Strategy<Value = Point> {
    (-1.0f64..1.0, 0.0..std::f64::consts::TAU).prop_map(|(z, lon)| {
        let r = (1.0 - z * z).sqrt();
        Point::sphere_normalized(Vector3::new(r * lon.cos(), r * lon.sin(), z))
    })
}

fn torus_point() -> impl Strategy<Value = Point> {
    (0.0f64..6.3, 0.0f64..6.3).prop_map(|(x, y)| Point::torus(x, y))
}

fn any_point() -> impl Strategy<Value = Point> {
    prop_oneof![sphere_point(), torus_point()]
}

fn ambient() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-2.0f64..2.0)
}

fn torus_field(k: i64) -> impl Strategy<Value = VectorFieldSpec> {
    prop::collection::vec(prop::array::uniform4(-1.0f64..1.0), 6).prop_map(move |c| {
        let modes = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (0, 2)];
        let terms: Vec<_> = modes
            .iter()
            .zip(&c)
            .map(|(&(m, n), a)| (m.min(k), n.min(k), a[0], a[1], a[2], a[3]))
            .collect();
        VectorFieldSpec::torus_trig(k as usize, &terms)
    })
}

fn tangent(p: &Point, a: &[f64; 4]) -> fbsde_geom::TangentVector {
    project_to_tangent(p, &a[..p.kind().ambient_dim()])
}

proptest! {
    #[test]
    fn embedding_fields_resolve_the_metric(p in any_point(), a in ambient()) {
        let w = tangent(&p, &a);
        let fields = embedding_field_components(p.kind(), p.coords());
        let s: f64 = fields[..p.kind().noise_count()]
            .iter()
            .map(|f| f.dot(&w.components).powi(2))
            .sum();
        prop_assert!((s - w.components.norm_squared()).abs() <= 1e-12);
    }

    #[test]
    fn transport_is_an_isometry(p in any_point(), a in ambient(), b in ambient(), c in ambient()) {
        let v = tangent(&p, &a);
        let (x, y) = (tangent(&p, &b), tangent(&p, &c));
        let tx = parallel_transport(&p, &v, &x).unwrap();
        let ty = parallel_transport(&p, &v, &y).unwrap();
        let before = x.components.dot(&y.components);
        prop_assert!((tx.components.dot(&ty.components) - before).abs() <= 1e-12);
    }

    #[test]
    fn log_inverts_exp_below_the_cut_locus(p in any_point(), a in ambient()) {
        let v = tangent(&p, &a);
        prop_assume!(v.norm() < 2.5);
        let q = exp_raw(p.kind(), p.coords(), &v.components);
        let back = log_raw(p.kind(), p.coords(), &q);
        prop_assert!((back - v.components).norm() <= 1e-9);
    }

    #[test]
    fn frame_transport_keeps_orthonormality(p in any_point(), a in ambient(), angle in 0.0f64..6.3) {
        let (s, c) = angle.sin_cos();
        let u = rotate_frame(&Frame::canonical(&p), &Matrix2::new(c, -s, s, c)).unwrap();
        let v = tangent(&p, &a);
        let moved = transport_frame_raw(&u, &v.components);
        prop_assert!(moved.orthonormality_residual() <= 1e-12);
    }

    #[test]
    fn rotating_the_frame_rotates_coordinates(p in any_point(), a in ambient(), angle in 0.0f64..6.3) {
        let (s, c) = angle.sin_cos();
        let o = Matrix2::new(c, -s, s, c);
        let u = Frame::canonical(&p);
        let w = tangent(&p, &a);
        let base = scalarize(&u, &w).unwrap();
        let turned = scalarize(&rotate_frame(&u, &o).unwrap(), &w).unwrap();
        let expect = base.in_rotated_frame(&o);
        for (x, y) in turned.coeffs.iter().zip(&expect.coeffs) {
            prop_assert!((x - y).abs() <= 1e-13);
        }
    }

    #[test]
    fn leray_projection_is_a_divergence_free_idempotent(v in torus_field(3)) {
        let pv = leray_project(&v);
        prop_assert!(div(&pv).max_abs_coeff() <= 1e-12);
        prop_assert!(leray_project(&pv).sub(&pv).l2_norm() <= 1e-12 * (1.0 + v.l2_norm()));
    }

    #[test]
    fn laplace_inverse_is_a_right_inverse_on_mean_free(c in prop::collection::vec(-1.0f64..1.0, 4)) {
        let mut f = TorusScalar::zeros(3);
        f.add_trig(1, 2, c[0], c[1]);
        f.add_trig(3, -1, c[2], c[3]);
        let f = ScalarFieldSpec::Torus(f);
        let back = laplace_inverse(&f).laplacian();
        prop_assert!(back.sub(&f).l2_norm() <= 1e-12);
    }
}

#[test]
fn snapshot_round_trip_keeps_values_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tg.csv");
    let field = VectorFieldSpec::taylor_green(3, 0.7);
    let grid = Grid::for_fit(Resolution::new(ManifoldKind::FlatTorus2, 3));
    write_snapshot(&path, &field, &grid, 0.25).unwrap();
    let back = read_snapshot_vectors(&path).unwrap();
    for (v, w) in back.iter().zip(field.sample(&grid)) {
        assert_eq!(*v, w);
    }
    let meta = read_meta(&path).unwrap();
    assert_eq!(meta.time, 0.25);
    assert_eq!(meta.manifold, "torus2");
}
