//! Closed forms and brute-force references for the geometry and the solver.

use std::f64::consts::PI;

use infconv::apps::{self, convex_body_approx, dist_to_set_sq, dist_to_set_sq_envelope};
use infconv::envelope::{
    envelope_gradient, hj_residual, localization_radius, moreau_envelope, EnvelopeParams,
};
use infconv::field::{quadratic_minoration, ConvexSet, ScalarField};
use infconv::manifold::{minkowski, GeodesicSegment, ManifoldModel, Point, Tangent};
use infconv::sampling::{self, lattice, random_unit_tangent, Region};
use infconv::verify::{self, GeodesicSamplePlan, Target, Tolerance};

fn h2() -> ManifoldModel {
    ManifoldModel::Hyperboloid(2)
}

fn scale(v: &[f64], k: f64) -> Vec<f64> {
    v.iter().map(|a| a * k).collect()
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| a * xi + yi).collect()
}

/// RK4 on the hyperboloid geodesic and parallel-transport equations:
/// `x'' = ⟨x', x'⟩ x`, `V' = ⟨V, x'⟩ x`.
fn integrate(x: &[f64], v: &[f64], w: &[f64], steps: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = x.len();
    let rhs = |s: &[f64]| -> Vec<f64> {
        let (x, v, w) = (&s[..n], &s[n..2 * n], &s[2 * n..]);
        let mut out = v.to_vec();
        out.extend(scale(x, minkowski(v, v)));
        out.extend(scale(x, minkowski(w, v)));
        out
    };
    let mut s: Vec<f64> = [x, v, w].concat();
    let h = 1.0 / steps as f64;
    for _ in 0..steps {
        let k1 = rhs(&s);
        let k2 = rhs(&axpy(h / 2.0, &k1, &s));
        let k3 = rhs(&axpy(h / 2.0, &k2, &s));
        let k4 = rhs(&axpy(h, &k3, &s));
        for i in 0..s.len() {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    (s[..n].to_vec(), s[n..2 * n].to_vec(), s[2 * n..].to_vec())
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn euclidean_and_hyperbolic_geodesic_examples() {
    let e = ManifoldModel::Euclidean(2);
    let o = Point::new(&[0.0, 0.0]);
    let q = e
        .exp(&o, &Tangent::new(o.clone(), &[1.0, 0.0]), 2.0)
        .unwrap();
    assert_eq!(q.coords(), &[2.0, 0.0]);
    let l = e
        .log(&Point::new(&[1.0, 1.0]), &Point::new(&[4.0, 5.0]))
        .unwrap();
    assert_eq!(l.vec(), &[3.0, 4.0]);

    let h1 = ManifoldModel::Hyperboloid(1);
    let p = Point::new(&[1.0, 0.0]);
    for s in [0.1, 1.0, 2.5] {
        let q = h1
            .exp(&p, &Tangent::new(p.clone(), &[0.0, 1.0]), s)
            .unwrap();
        assert!(max_diff(q.coords(), &[s.cosh(), s.sinh()]) < 1e-12 * s.cosh());
    }
    let d = h2().dist(
        &Point::new(&[1.0, 0.0, 0.0]),
        &Point::new(&[1f64.cosh(), 1f64.sinh(), 0.0]),
    );
    assert!((d.unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn hyperboloid_exp_matches_ode() {
    let m = h2();
    let mut rng = sampling::rng(3);
    let reg = Region::new(&m, m.origin(), 1.5).unwrap();
    for _ in 0..10 {
        let p = reg.sample(&m, &mut rng);
        let v = random_unit_tangent(&m, &p, &mut rng).scaled(1.3);
        let (end, _, _) = integrate(p.coords(), v.vec(), v.vec(), 2000);
        let q = m.exp(&p, &v, 1.0).unwrap();
        assert!(
            max_diff(&end, q.coords()) < 1e-9,
            "{:?} vs {:?}",
            end,
            q.coords()
        );
    }
}

#[test]
fn hyperboloid_transport_matches_ode() {
    let m = h2();
    let mut rng = sampling::rng(4);
    let reg = Region::new(&m, m.origin(), 1.5).unwrap();
    for _ in 0..10 {
        let p = reg.sample(&m, &mut rng);
        let q = reg.sample(&m, &mut rng);
        let v = m.log(&p, &q).unwrap();
        let w = random_unit_tangent(&m, &p, &mut rng);
        let (_, _, moved) = integrate(p.coords(), v.vec(), w.vec(), 2000);
        let t = m.parallel_transport(&p, &q, &w).unwrap();
        assert!(max_diff(&moved, t.vec()) < 1e-9);
        let back = m.parallel_transport(&q, &p, &t).unwrap();
        assert!(max_diff(back.vec(), w.vec()) < 1e-9);
    }
}

#[test]
fn hyperbolic_distance_matches_path_length() {
    // length of t ↦ exp(p, t v) on a fine partition, in the ambient Minkowski norm
    let m = h2();
    let mut rng = sampling::rng(5);
    let reg = Region::new(&m, m.origin(), 2.0).unwrap();
    for _ in 0..10 {
        let p = reg.sample(&m, &mut rng);
        let q = reg.sample(&m, &mut rng);
        let v = m.log(&p, &q).unwrap();
        let n = 4000;
        let mut len = 0.0;
        let mut prev = p.coords().to_vec();
        for k in 1..=n {
            let cur = m
                .exp(&p, &v, k as f64 / n as f64)
                .unwrap()
                .coords()
                .to_vec();
            let diff: Vec<f64> = cur.iter().zip(&prev).map(|(a, b)| a - b).collect();
            len += minkowski(&diff, &diff).max(0.0).sqrt();
            prev = cur;
        }
        let d = m.dist(&p, &q).unwrap();
        assert!((len - d).abs() < 1e-6 * (1.0 + d), "{len} vs {d}");
    }
}

#[test]
fn cylinder_wraps_to_shortest_offset() {
    let m = ManifoldModel::Cylinder;
    let o = Point::new(&[0.0, 0.0]);
    let l = m.log(&o, &Point::new(&[PI - 0.1, 0.0])).unwrap();
    assert!(max_diff(l.vec(), &[PI - 0.1, 0.0]) < 1e-15);
    let d = m.dist(&o, &Point::new(&[1.5 * PI, 0.0])).unwrap();
    assert!((d - PI / 2.0).abs() < 1e-15);

    let mut rng = sampling::rng(6);
    let reg = Region::new(&m, o, 3.0).unwrap();
    for _ in 0..1000 {
        let p = reg.sample(&m, &mut rng);
        let q = reg.sample(&m, &mut rng);
        let (a, b) = (p.coords(), q.coords());
        let brute = (-3..=3)
            .map(|k| {
                let dt = b[0] + 2.0 * PI * k as f64 - a[0];
                (dt * dt + (b[1] - a[1]).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((m.dist(&p, &q).unwrap() - brute).abs() < 1e-12);
    }
}

#[test]
fn cylinder_antipodal_log_is_a_cut_point() {
    let m = ManifoldModel::Cylinder;
    assert!(m
        .log(&Point::new(&[0.0, 0.0]), &Point::new(&[PI, 0.3]))
        .is_err());
}

#[test]
fn curvature_sign_from_median_comparison() {
    // d(p, mid(q, r))² against the flat median ½a² + ½b² − ¼c²
    let models = [
        ManifoldModel::Euclidean(2),
        ManifoldModel::Cylinder,
        ManifoldModel::Hyperboloid(2),
        ManifoldModel::PoincareHalfPlane,
        ManifoldModel::Sphere,
    ];
    for m in models {
        let mut rng = sampling::rng(7);
        let reg = Region::new(&m, m.origin(), 0.4).unwrap();
        let mut signs = Vec::new();
        for _ in 0..50 {
            let (p, q, r) = (
                reg.sample(&m, &mut rng),
                reg.sample(&m, &mut rng),
                reg.sample(&m, &mut rng),
            );
            let mid = GeodesicSegment::new(m, q.clone(), r.clone())
                .unwrap()
                .eval(0.5);
            let a = m.dist(&p, &q).unwrap();
            let b = m.dist(&p, &r).unwrap();
            let c = m.dist(&q, &r).unwrap();
            let flat = 0.5 * a * a + 0.5 * b * b - 0.25 * c * c;
            let gap = m.dist(&p, &mid).unwrap().powi(2) - flat;
            signs.push(gap);
        }
        match m.curvature_sign() {
            0 => assert!(signs.iter().all(|g| g.abs() < 1e-12), "{m}"),
            1 => assert!(
                signs.iter().all(|g| *g > -1e-12) && signs.iter().any(|g| *g > 1e-6),
                "{m}"
            ),
            _ => assert!(
                signs.iter().all(|g| *g < 1e-12) && signs.iter().any(|g| *g < -1e-6),
                "{m}"
            ),
        }
    }
}

#[test]
fn small_balls_are_convex_below_the_convexity_radius() {
    for m in [ManifoldModel::Sphere, ManifoldModel::Cylinder] {
        let r = 0.98 * m.convexity_radius(&m.origin());
        let ball = Region::new(&m, m.origin(), r).unwrap();
        let mut rng = sampling::rng(8);
        for _ in 0..500 {
            let g = GeodesicSegment::new(m, ball.sample(&m, &mut rng), ball.sample(&m, &mut rng))
                .unwrap();
            for k in 1..10 {
                let d = m.dist(&m.origin(), &g.eval(k as f64 / 10.0)).unwrap();
                assert!(d <= r + 1e-12, "{m}: {d} > {r}");
            }
        }
    }
}

#[test]
fn busemann_is_the_ray_limit() {
    let m = h2();
    let base = m.origin();
    let dir = m.tangent(&base, &[0.0, 0.6, 0.8]).unwrap();
    let b = ScalarField::busemann(m, &dir).unwrap();
    let mut rng = sampling::rng(9);
    let reg = Region::new(&m, m.origin(), 2.0).unwrap();
    for _ in 0..100 {
        let x = reg.sample(&m, &mut rng);
        // t = 20 directly; t = 1e3 with cosh and sinh divided by e^t
        let direct = m.dist(&x, &m.exp(&base, &dir, 20.0).unwrap()).unwrap() - 20.0;
        let t: f64 = 1e3;
        let damp = (-2.0 * t).exp();
        let a = -0.5 * (1.0 + damp) * minkowski(x.coords(), base.coords())
            - 0.5 * (1.0 - damp) * minkowski(x.coords(), dir.vec());
        let far = (a + (a * a - damp).sqrt()).ln();
        assert!((direct - b.eval(&x)).abs() < 1e-6);
        assert!((far - b.eval(&x)).abs() < 1e-6);
    }
    let plan = GeodesicSamplePlan::new(100, reg, 10);
    let rep =
        verify::check_midpoint_convexity(&m, &Target::Field(&b), &plan, Tolerance::absolute(1e-9))
            .unwrap();
    assert!(rep.pass, "{}", rep.summary_line());
}

#[test]
fn distance_minoration_holds_on_ten_thousand_points() {
    for m in [
        h2(),
        ManifoldModel::Euclidean(2),
        ManifoldModel::PoincareHalfPlane,
    ] {
        let p = m.origin();
        let f = ScalarField::distance(m, p.clone()).unwrap();
        let c = quadratic_minoration(&f, &p).unwrap();
        assert!((c - 2.0).abs() < 1e-12);
        let pts = apps::region_points(&m, &Region::new(&m, p.clone(), 5.0).unwrap(), 10_000, 11);
        for x in pts {
            let d = m.dist(&x, &p).unwrap();
            assert!(f.eval(&x) >= -0.5 * c * (1.0 + d * d));
        }
    }
}

#[test]
fn localization_radius_examples() {
    let e1 = ManifoldModel::Euclidean(1);
    let x = Point::new(&[0.0]);
    let one = ScalarField::constant(e1, 1.0).unwrap();
    let r = localization_radius(&one, &x, 0.5, 0.0, &x, 1e-12).unwrap();
    assert!((r - 1.0).abs() < 1e-9);

    // c = 1, λ = 1/4: r = √½, and the ball infimum is the global one for a
    // field with f(0) = 0 and f ≥ −½(1 + y²)
    let zero = ScalarField::constant(e1, 0.0).unwrap();
    let r = localization_radius(&zero, &x, 0.25, 1.0, &x, 0.0).unwrap();
    assert!((r - 0.5f64.sqrt()).abs() < 1e-15);
    let f = |y: f64| -0.5 * y * y + 0.25 * ((y - 1.0).abs() - 1.0);
    let phi = |y: f64| f(y) + y * y / 0.5;
    let n = 400_000;
    let (arg, _) = (0..=n)
        .map(|k| -20.0 + 40.0 * k as f64 / n as f64)
        .map(|y| (y, phi(y)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!(arg.abs() <= r + 40.0 / n as f64, "{arg}");
}

#[test]
fn euclidean_quadratic_envelope_and_gradient() {
    let m = ManifoldModel::Euclidean(1);
    let f = ScalarField::scaled(
        2.0,
        ScalarField::squared_distance(m, Point::new(&[0.0])).unwrap(),
    )
    .unwrap();
    let x = Point::new(&[2.0]);
    let r = moreau_envelope(&m, &f, &x, &EnvelopeParams::new(0.5).unwrap()).unwrap();
    assert!((r.value - 2.0).abs() < 1e-10);
    assert!((r.prox_point.coords()[0] - 1.0).abs() < 1e-10);
    let g = envelope_gradient(&m, &x, &Point::new(&[1.0]), 0.5).unwrap();
    assert_eq!(g.vec(), &[2.0]);
    // brute-force 1-d grid
    let brute = (0..=400_000)
        .map(|k| -2.0 + 6.0 * k as f64 / 400_000.0)
        .map(|y| y * y + (y - 2.0f64).powi(2))
        .fold(f64::INFINITY, f64::min);
    assert!((brute - r.value).abs() < 1e-9);
}

#[test]
fn hyperbolic_ball_indicator_matches_projection() {
    let m = h2();
    let p = m.origin();
    let c = ConvexSet::ball(m, p.clone(), 1.0).unwrap();
    let f = ScalarField::indicator(c.clone());
    let u = m.tangent(&p, &[0.0, 0.8, -0.6]).unwrap();
    let x = m.exp(&p, &u, 2.0).unwrap();
    let r = moreau_envelope(&m, &f, &x, &EnvelopeParams::new(0.5).unwrap()).unwrap();
    assert!((r.value - 1.0).abs() < 1e-9);
    let boundary = m.exp(&p, &u, 1.0).unwrap();
    assert!(m.dist(&r.prox_point, &boundary).unwrap() < 1e-6);
    // dense samples of C never beat the returned value
    let mut rng = sampling::rng(12);
    for _ in 0..5000 {
        let y = c.sample(&mut rng);
        assert!(m.dist(&x, &y).unwrap().powi(2) >= r.value - 1e-9);
    }
}

#[test]
fn hyperboloid_gradient_matches_finite_differences() {
    let m = h2();
    let p = m.origin();
    let fields = [
        ScalarField::squared_distance(m, p.clone()).unwrap(),
        ScalarField::indicator(ConvexSet::ball(m, p.clone(), 1.0).unwrap()),
    ];
    let pts = apps::region_points(&m, &Region::new(&m, p.clone(), 2.0).unwrap(), 30, 13);
    for f in &fields {
        let rep = verify::check_gradient_fd(
            &m,
            f,
            0.5,
            &pts,
            1e-5,
            &EnvelopeParams::default(),
            Tolerance::absolute(1e-5),
        )
        .unwrap();
        assert!(rep.pass, "{}", rep.summary_line());
    }
}

#[test]
fn hamilton_jacobi_closed_form_point() {
    let m = ManifoldModel::Euclidean(1);
    let f = ScalarField::scaled(
        2.0,
        ScalarField::squared_distance(m, Point::new(&[0.0])).unwrap(),
    )
    .unwrap();
    let res = hj_residual(
        &m,
        &f,
        1.0,
        &Point::new(&[1.0]),
        1e-4,
        &EnvelopeParams::default(),
    )
    .unwrap();
    assert!(res < 1e-6, "{res}");
}

#[test]
fn point_segment_distance_is_classical() {
    let m = ManifoldModel::Euclidean(2);
    let (a, b) = ([-1.0, 0.5], [2.0, 1.5]);
    let c = ConvexSet::segment(m, Point::new(&a), Point::new(&b)).unwrap();
    let classical = |x: [f64; 2]| {
        let ab = [b[0] - a[0], b[1] - a[1]];
        let ax = [x[0] - a[0], x[1] - a[1]];
        let t = ((ax[0] * ab[0] + ax[1] * ab[1]) / (ab[0] * ab[0] + ab[1] * ab[1])).clamp(0.0, 1.0);
        (ax[0] - t * ab[0]).powi(2) + (ax[1] - t * ab[1]).powi(2)
    };
    for q in lattice(2, 11, 3.0) {
        let x = Point::new(&q);
        let (d2, _) = dist_to_set_sq(&m, &c, &x).unwrap();
        let want = classical([q[0], q[1]]);
        assert!((d2 - want).abs() < 1e-10 * (1.0 + want));
        let via_envelope = dist_to_set_sq_envelope(&m, &c, &x, &EnvelopeParams::default()).unwrap();
        assert!((via_envelope - want).abs() < 1e-8 * (1.0 + want));
    }
}

#[test]
fn set_distance_agrees_with_envelope_on_hyperboloid() {
    let m = h2();
    let p = m.origin();
    let q = m.exp(&p, &m.tangent_basis(&p)[0], 1.5).unwrap();
    let c = ConvexSet::segment(m, p.clone(), q).unwrap();
    let pts = apps::region_points(&m, &Region::new(&m, p, 2.5).unwrap(), 40, 14);
    for x in &pts {
        let (d2, grad) = dist_to_set_sq(&m, &c, x).unwrap();
        let env = dist_to_set_sq_envelope(&m, &c, x, &EnvelopeParams::default()).unwrap();
        assert!((d2 - env).abs() < 1e-8 * (1.0 + d2), "{d2} vs {env}");
        // −2 log_x(proj) is the gradient of d²
        let h = 1e-5;
        for e in m.tangent_basis(x) {
            let fwd = dist_to_set_sq(&m, &c, &m.exp(x, &e, h).unwrap()).unwrap().0;
            let bwd = dist_to_set_sq(&m, &c, &m.exp(x, &e, -h).unwrap())
                .unwrap()
                .0;
            let fd = (fwd - bwd) / (2.0 * h);
            assert!((fd - m.inner(x, &grad, &e).unwrap()).abs() < 1e-6);
        }
    }
}

#[test]
fn convex_body_sampling_passes_and_rejects_zero_margin() {
    let m = h2();
    let p = m.origin();
    let q = m.exp(&p, &m.tangent_basis(&p)[1], 1.0).unwrap();
    let c = ConvexSet::segment(m, p.clone(), q).unwrap();
    let (_, reports) = convex_body_approx(&m, &c, 0.3, 200, 15).unwrap();
    assert_eq!(reports.len(), 3);
    assert!(reports.iter().all(|r| r.pass));
    assert!(convex_body_approx(&m, &c, 0.0, 200, 15).is_err());
    let point = ConvexSet::singleton(m, p).unwrap();
    let (body, reports) = convex_body_approx(&m, &point, 0.5, 100, 16).unwrap();
    assert!(reports.iter().all(|r| r.pass));
    assert!(body.contains(
        &m.exp(&m.origin(), &m.tangent_basis(&m.origin())[0], 0.49)
            .unwrap()
    ));
}

#[test]
fn joint_distance_convexity_examples() {
    let e = ManifoldModel::Euclidean(3);
    let seg = |a: &[f64], b: &[f64]| GeodesicSegment::new(e, Point::new(a), Point::new(b)).unwrap();
    let skew = [(
        seg(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0]),
        seg(&[0.0, 1.0, 1.0], &[0.0, -1.0, 1.0]),
    )];
    assert!(verify::check_distance_joint_convexity_pairs(&e, &skew, Tolerance::default()).pass);

    let m = h2();
    let plan = GeodesicSamplePlan::new(200, Region::new(&m, m.origin(), 2.0).unwrap(), 17);
    assert!(
        verify::check_distance_joint_convexity(&m, &plan, Tolerance::default())
            .unwrap()
            .pass
    );

    let pair = verify::parallel_meridians(0.3, 0.5).unwrap();
    let rep = verify::check_distance_joint_convexity_pairs(
        &ManifoldModel::Sphere,
        &[pair],
        Tolerance::default(),
    );
    assert!(!rep.pass && rep.worst_violation > 1e-3);
}

#[test]
fn squared_distance_to_a_point_is_convex_on_small_caps() {
    let s = ManifoldModel::Sphere;
    let p = s.origin();
    let f = ScalarField::squared_distance(s, p.clone()).unwrap();
    let plan = GeodesicSamplePlan::new(500, Region::new(&s, p, 1.2).unwrap(), 18);
    let rep =
        verify::check_midpoint_convexity(&s, &Target::Field(&f), &plan, Tolerance::absolute(1e-12))
            .unwrap();
    assert!(rep.pass, "{}", rep.summary_line());
}

#[test]
fn sphere_set_distance_fails_midpoint_convexity() {
    let rep = apps::sphere_counterexample(0.5).unwrap();
    let w = rep.witness.expect("witness");
    assert!(w.margin > 1e-4);
    assert!(!rep.report.pass);
    let control = apps::counterexample_search(&h2(), 0.5).unwrap();
    assert!(control.witness.is_none() && control.report.pass);
}
