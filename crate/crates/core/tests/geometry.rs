use std::f64::consts::{PI, TAU};

use fklab::geometry::{
    boundary_curvature, dual_vector, equi_decay_set, export_csv, feasible_delta, in_backward_cone,
    in_forward_cone, polar, polarity_defect, principal_curvatures, surcharge, wulff_shape,
    ConvexBody, DirectionalNorm, FourierNorm, TabulatedNorm,
};
use proptest::prelude::*;

fn test_norms() -> Vec<DirectionalNorm> {
    vec![
        DirectionalNorm::euclidean(2),
        DirectionalNorm::Euclidean { dim: 2, scale: 2.0 },
        DirectionalNorm::L1 { dim: 2, scale: 1.0 },
        DirectionalNorm::elliptic(2.0, 1.0),
        DirectionalNorm::Quadratic {
            dim: 2,
            matrix: vec![2.0, 0.5, 0.5, 1.0],
        },
        DirectionalNorm::Fourier(FourierNorm::symmetric(4, &[1.0, -0.03]).unwrap()),
    ]
}

fn smooth_norms() -> Vec<DirectionalNorm> {
    test_norms()
        .into_iter()
        .filter(|n| !matches!(n, DirectionalNorm::L1 { .. }))
        .collect()
}

fn unit(theta: f64) -> [f64; 2] {
    [theta.cos(), theta.sin()]
}

fn is_convex_ccw(v: &[[f64; 2]]) -> bool {
    let n = v.len();
    (0..n).all(|i| {
        let (a, b, c) = (v[i], v[(i + 1) % n], v[(i + 2) % n]);
        (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]) >= -1e-12
    })
}

#[test]
fn euclidean_unit_ball_and_wulff_shape() {
    let n = DirectionalNorm::euclidean(2);
    for body in [
        equi_decay_set(&n, 360).unwrap(),
        wulff_shape(&n, 360).unwrap(),
    ] {
        for p in body.vertices().unwrap() {
            assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-3);
        }
    }
}

#[test]
fn scaled_euclidean_ball() {
    let u = equi_decay_set(&DirectionalNorm::Euclidean { dim: 2, scale: 2.0 }, 180).unwrap();
    assert!(u
        .vertices()
        .unwrap()
        .iter()
        .all(|p| (p[0].hypot(p[1]) - 0.5).abs() < 1e-12));
}

#[test]
fn l1_wulff_shape_is_the_sup_norm_square() {
    let k = wulff_shape(&DirectionalNorm::L1 { dim: 2, scale: 1.0 }, 720).unwrap();
    let v = k.vertices().unwrap();
    assert_eq!(v.len(), 4);
    for p in v {
        assert!((p[0].abs() - 1.0).abs() < 1e-9 && (p[1].abs() - 1.0).abs() < 1e-9);
    }
    // brute-force polar of the diamond: t is in K iff (t, v) <= 1 at the four diamond corners
    for p in v {
        let worst = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
            .iter()
            .map(|c| p[0] * c[0] + p[1] * c[1])
            .fold(f64::MIN, f64::max);
        assert!((worst - 1.0).abs() < 1e-9);
    }
}

#[test]
fn bodies_are_convex_and_contain_the_origin() {
    for n in test_norms() {
        for body in [
            equi_decay_set(&n, 256).unwrap(),
            wulff_shape(&n, 256).unwrap(),
        ] {
            let v = body.vertices().unwrap();
            assert!(is_convex_ccw(v), "{n:?}");
            assert!(body.contains(&[0.0, 0.0], 0.0));
        }
    }
}

#[test]
fn polar_of_wulff_shape_is_unit_ball() {
    for n in test_norms() {
        let u = equi_decay_set(&n, 720).unwrap();
        let k = wulff_shape(&n, 720).unwrap();
        let pu = polar(&k).unwrap();
        for th in (0..97).map(|i| TAU * i as f64 / 97.0) {
            let d = unit(th);
            let a = u.support(&d);
            let b = pu.support(&d);
            assert!((a - b).abs() < 2e-3 * a, "{n:?} at {th}: {a} vs {b}");
        }
        assert!(polarity_defect(&u, &k).unwrap() < 1e-3, "{n:?}");
        assert!(polarity_defect(&k, &u).unwrap() < 1e-3, "{n:?}");
    }
}

#[test]
fn dual_vector_examples() {
    let e = DirectionalNorm::euclidean(2);
    let t = dual_vector(&[3.0, 4.0], &e, None).unwrap();
    assert!((t[0] - 0.6).abs() < 1e-15 && (t[1] - 0.8).abs() < 1e-15);
    assert!(dual_vector(&[0.0, 0.0], &e, None).is_err());
    let l1 = DirectionalNorm::L1 { dim: 2, scale: 1.0 };
    let t = dual_vector(&[1.0, 0.0], &l1, Some(&wulff_shape(&l1, 720).unwrap())).unwrap();
    assert!((t[0] - 1.0).abs() < 1e-9 && t[1].abs() < 1e-9);
}

#[test]
fn surcharge_examples() {
    let e = DirectionalNorm::euclidean(2);
    assert!((surcharge(&[1.0, 0.0], &[0.0, 1.0], &e) - 1.0).abs() < 1e-15);
    for n in smooth_norms() {
        let x = [1.3, -0.4];
        let t = dual_vector(&x, &n, None).unwrap();
        assert!(surcharge(&t, &x, &n) < 1e-12);
    }
}

#[test]
fn cone_examples() {
    let e = DirectionalNorm::euclidean(2);
    let t = [1.0, 0.0];
    assert!(!in_forward_cone(&[0.0, 0.0], &t, 0.5, &e));
    assert!(in_forward_cone(&[2.0, 0.0], &t, 0.5, &e));
    assert!(!in_forward_cone(&[0.0, 2.0], &t, 0.5, &e));
    assert!(in_backward_cone(&[-2.0, 0.0], &t, 0.5, &e));
}

#[test]
fn curvature_of_disks_and_ellipses() {
    let disk = ConvexBody::Support(DirectionalNorm::euclidean(2));
    assert!((boundary_curvature(&disk, &[0.6, 0.8]).unwrap() - 1.0).abs() < 1e-6);
    let big = ConvexBody::Support(DirectionalNorm::Euclidean { dim: 2, scale: 2.5 });
    assert!((boundary_curvature(&big, &[2.5, 0.0]).unwrap() - 0.4).abs() < 1e-6);
    let (a, b) = (2.0, 1.0);
    let ellipse = DirectionalNorm::elliptic(a, b);
    let exact = a / (b * b);
    assert!(
        (boundary_curvature(&ConvexBody::Support(ellipse.clone()), &[a, 0.0]).unwrap() - exact)
            .abs()
            < 1e-5
    );
    let polygon = wulff_shape(&ellipse, 2000).unwrap();
    assert!((boundary_curvature(&polygon, &[a, 0.0]).unwrap() - exact).abs() < 0.02 * exact);
}

#[test]
fn curvature_needs_enough_vertices() {
    let square = ConvexBody::Polygon(vec![[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]]);
    assert!(boundary_curvature(&square, &[1.0, 0.0]).is_err());
}

#[test]
fn three_dimensional_sphere_curvatures() {
    let n = DirectionalNorm::Euclidean { dim: 3, scale: 2.0 };
    let k = principal_curvatures(&n, &[0.0, 0.0, 2.0]).unwrap();
    assert!((k[0] - 0.5).abs() < 1e-4 && (k[1] - 0.5).abs() < 1e-4);
}

#[test]
fn tabulated_norm_interpolates_nodes() {
    let angles: Vec<f64> = (0..64).map(|i| TAU / 64.0 * i as f64).collect();
    let ellipse = DirectionalNorm::elliptic(2.0, 1.0);
    let values: Vec<f64> = angles.iter().map(|a| ellipse.eval(&unit(*a))).collect();
    let n = DirectionalNorm::Tabulated(TabulatedNorm::new(&angles, &values).unwrap());
    for (a, v) in angles.iter().zip(&values) {
        assert!((n.eval(&unit(*a)) - v).abs() < 1e-12);
    }
    for th in (0..100).map(|i| 0.0123 + TAU * i as f64 / 100.0) {
        let exact = ellipse.eval(&unit(th));
        assert!((n.eval(&unit(th)) - exact).abs() < 0.01 * exact);
    }
}

#[test]
fn tabulated_l1_table_is_exact() {
    // the l1 unit ball is the polygon through its axis and diagonal nodes
    let angles: Vec<f64> = (0..8).map(|i| PI / 4.0 * i as f64).collect();
    let values: Vec<f64> = angles
        .iter()
        .map(|a| a.cos().abs() + a.sin().abs())
        .collect();
    let n = DirectionalNorm::Tabulated(TabulatedNorm::new(&angles, &values).unwrap());
    for th in (0..50).map(|i| 0.05 + TAU * i as f64 / 50.0) {
        let u = unit(th);
        assert!((n.eval(&u) - u[0].abs() - u[1].abs()).abs() < 1e-12);
    }
}

#[test]
fn tabulated_norm_rejects_a_concave_table() {
    let angles: Vec<f64> = (0..8).map(|i| PI / 4.0 * i as f64).collect();
    let values: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 1.0 } else { 2.0 }).collect();
    assert!(TabulatedNorm::new(&angles, &values).is_err());
}

#[test]
fn feasible_delta_admits_an_axis_direction() {
    for n in smooth_norms() {
        let (lo, hi) = feasible_delta(&n, 720).expect("non-empty feasible range");
        assert!(lo < hi);
        let delta = 0.5 * (lo + hi);
        for th in (0..360).map(|i| TAU * i as f64 / 360.0) {
            let t = n.gradient(&unit(th));
            let ok = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
                .iter()
                .any(|e| in_forward_cone(e, &t, 3.0 * delta, &n));
            assert!(ok, "{n:?} at {th}");
        }
    }
}

#[test]
fn export_has_theta_x_y_rows() {
    let mut buf = Vec::new();
    export_csv(
        &equi_decay_set(&DirectionalNorm::euclidean(2), 8).unwrap(),
        &mut buf,
    )
    .unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("theta,x,y"));
    assert_eq!(text.lines().count(), 9);
}

fn norm_strategy() -> impl Strategy<Value = DirectionalNorm> {
    (0..test_norms().len()).prop_map(|i| test_norms().swap_remove(i))
}

proptest! {
    #[test]
    fn homogeneity_and_symmetry(n in norm_strategy(), lambda in 0.0f64..50.0, x in -5.0f64..5.0, y in -5.0f64..5.0) {
        let v = n.eval(&[x, y]);
        prop_assert!((n.eval(&[lambda * x, lambda * y]) - lambda * v).abs() <= 1e-9 * (1.0 + lambda * v));
        prop_assert!((n.eval(&[-x, -y]) - v).abs() <= 1e-9 * (1.0 + v));
        if x != 0.0 || y != 0.0 {
            prop_assert!(v > 0.0);
        }
    }

    #[test]
    fn triangle_inequality(n in norm_strategy(), a in prop::array::uniform4(-5.0f64..5.0)) {
        let s = n.eval(&[a[0] + a[2], a[1] + a[3]]);
        prop_assert!(s <= n.eval(&[a[0], a[1]]) + n.eval(&[a[2], a[3]]) + 1e-9);
    }

    #[test]
    fn dual_pairs_attain_the_norm(n in norm_strategy(), x in -5.0f64..5.0, y in -5.0f64..5.0) {
        prop_assume!(x.abs() + y.abs() > 1e-3);
        let t = dual_vector(&[x, y], &n, None).unwrap();
        let xi = n.eval(&[x, y]);
        prop_assert!((t[0] * x + t[1] * y - xi).abs() <= 1e-6 * xi);
        // t lies in K: (t, u) <= xi(u) for all directions
        for th in (0..64).map(|i| TAU * i as f64 / 64.0) {
            let u = unit(th);
            prop_assert!(t[0] * u[0] + t[1] * u[1] <= n.eval(&u) + 1e-9);
        }
    }

    #[test]
    fn surcharge_is_non_negative(n in norm_strategy(), th in 0.0f64..TAU, y in prop::array::uniform2(-5.0f64..5.0)) {
        let t = n.gradient(&unit(th));
        prop_assert!(surcharge(&t, &y, &n) >= 0.0);
    }

    #[test]
    fn cones_are_nested(n in norm_strategy(), th in 0.0f64..TAU, x in -10i64..=10, y in -10i64..=10, d1 in 0.01f64..0.5, d2 in 0.01f64..0.5) {
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        let t = n.gradient(&unit(th));
        let p = [x as f64, y as f64];
        if in_forward_cone(&p, &t, lo, &n) {
            prop_assert!(in_forward_cone(&p, &t, hi, &n));
        }
    }
}
