//! Acceptance suite: one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::time::Instant;

use infconv::apps::{counterexample_search, hj_demo, sphere_counterexample};
use infconv::envelope::{moreau_envelope, EnvelopeParams};
use infconv::field::{ConvexSet, Isometry, ScalarField};
use infconv::manifold::{ManifoldModel, Point};
use infconv::sampling::{self, lattice, Region};
use infconv::verify::{self, BundleOptions, GeodesicSamplePlan, Target, Tolerance};

type Criterion = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn quadratic(m: ManifoldModel) -> ScalarField {
    // ‖x‖² = 2 · ½ d(x, 0)²
    ScalarField::scaled(2.0, ScalarField::squared_distance(m, m.origin()).unwrap()).unwrap()
}

fn params(lambda: f64) -> EnvelopeParams {
    EnvelopeParams::new(lambda).unwrap()
}

fn first_lattice_points(dim: usize, count: usize, half_width: f64) -> Vec<Vec<f64>> {
    let per_axis = (count as f64).powf(1.0 / dim as f64).ceil() as usize;
    let h = 2.0 * half_width / (per_axis - 1) as f64;
    (0..per_axis.pow(dim as u32))
        .take(count)
        .map(|mut i| {
            (0..dim)
                .map(|_| {
                    let c = -half_width + h * (i % per_axis) as f64;
                    i /= per_axis;
                    c
                })
                .collect()
        })
        .collect()
}

fn closed_form_envelope() -> Outcome {
    let t = Instant::now();
    let (mut worst_v, mut worst_p) = (0.0_f64, 0.0_f64);
    for dim in 1..=3 {
        let m = ManifoldModel::Euclidean(dim);
        let f = quadratic(m);
        for &lambda in &[0.1, 0.5, 2.0] {
            for x in first_lattice_points(dim, 100, 2.0) {
                let r = moreau_envelope(&m, &f, &Point::new(&x), &params(lambda)).unwrap();
                let k = 1.0 + 2.0 * lambda;
                let want = x.iter().map(|a| a * a).sum::<f64>() / k;
                worst_v = worst_v.max((r.value - want).abs());
                for (p, a) in r.prox_point.coords().iter().zip(&x) {
                    worst_p = worst_p.max((p - a / k).abs());
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst_v <= 1e-8 && worst_p <= 1e-8 && secs < 5.0,
        format!("value err {worst_v:.2e}, prox err {worst_p:.2e}, {secs:.2} s"),
    )
}

fn huber() -> Outcome {
    let m = ManifoldModel::Euclidean(1);
    let f = ScalarField::distance(m, m.origin()).unwrap();
    let mut worst = 0.0_f64;
    for i in 0..=600 {
        let x = -3.0 + 0.01 * i as f64;
        let r = moreau_envelope(&m, &f, &Point::new(&[x]), &params(1.0)).unwrap();
        let want = if x.abs() <= 1.0 {
            0.5 * x * x
        } else {
            x.abs() - 0.5
        };
        worst = worst.max((r.value - want).abs());
    }
    outcome(
        worst <= 1e-8,
        format!("max |f_1 - huber| = {worst:.2e} over 601 points"),
    )
}

fn all_models() -> Vec<(ManifoldModel, Point)> {
    vec![
        (ManifoldModel::Euclidean(2), Point::new(&[0.3, -0.2])),
        (
            ManifoldModel::Hyperboloid(2),
            ManifoldModel::Hyperboloid(2).point(&[0.4, 0.1]).unwrap(),
        ),
        (ManifoldModel::PoincareHalfPlane, Point::new(&[0.2, 1.1])),
        (ManifoldModel::Cylinder, Point::new(&[1.0, 0.5])),
        (ManifoldModel::Sphere, Point::new(&[0.0, 0.6, 0.8])),
    ]
}

fn order_and_monotonicity() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut total = 0;
    let mut failing = Vec::new();
    for (k, (m, p)) in all_models().into_iter().enumerate() {
        let fields = [
            ScalarField::squared_distance(m, p.clone()).unwrap(),
            ScalarField::distance(m, p.clone()).unwrap(),
            ScalarField::indicator(ConvexSet::ball(m, p.clone(), 0.5).unwrap()),
        ];
        let region = Region::new(&m, p.clone(), 1.2).unwrap();
        let mut rng = sampling::rng(100 + k as u64);
        let pts: Vec<Point> = (0..1000).map(|_| region.sample(&m, &mut rng)).collect();
        for (j, f) in fields.iter().enumerate() {
            // each field sees a third of the samples
            let share: Vec<Point> = pts.iter().skip(j).step_by(3).cloned().collect();
            let rep = verify::check_order(
                &m,
                f,
                &[0.05, 0.2, 1.0],
                &share,
                &EnvelopeParams::default(),
                Tolerance::absolute(1e-10),
            )
            .unwrap();
            total += rep.samples;
            worst = worst.max(rep.worst_violation);
            if !rep.pass {
                failing.push(rep.summary_line());
            }
        }
    }
    outcome(
        failing.is_empty(),
        format!(
            "{total} samples, worst violation {worst:.2e}{}",
            join_failures(&failing)
        ),
    )
}

fn join_failures(f: &[String]) -> String {
    if f.is_empty() {
        String::new()
    } else {
        format!("; {}", f.join(" | "))
    }
}

fn localization() -> Outcome {
    let mut failing = Vec::new();
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_value = f64::NEG_INFINITY;
    let cases: Vec<(ManifoldModel, ScalarField)> = vec![
        (
            ManifoldModel::Hyperboloid(2),
            ScalarField::busemann(
                ManifoldModel::Hyperboloid(2),
                &ManifoldModel::Hyperboloid(2)
                    .tangent(&ManifoldModel::Hyperboloid(2).origin(), &[0.0, 0.6, 0.8])
                    .unwrap(),
            )
            .unwrap(),
        ),
        (
            ManifoldModel::Euclidean(2),
            ScalarField::linear(ManifoldModel::Euclidean(2), &[1.0, -0.5], 0.25).unwrap(),
        ),
    ];
    for (k, (m, f)) in cases.iter().enumerate() {
        let c = f.minoration().unwrap().c;
        let mut rng = sampling::rng(400 + k as u64);
        let region = Region::new(m, m.origin(), 2.0).unwrap();
        let samples: Vec<(Point, f64)> = (0..100)
            .map(|_| {
                let x = region.sample(m, &mut rng);
                let lambda = rand::Rng::random_range(&mut rng, 0.01..0.99) / (2.0 * c);
                (x, lambda)
            })
            .collect();
        let rep =
            verify::check_localization(m, f, &samples, 161, &EnvelopeParams::default()).unwrap();
        worst_gap = worst_gap.max(rep.worst_violation);
        if !rep.pass {
            failing.push(rep.summary_line());
        }
        // the solver's value never exceeds the brute-force grid infimum
        for (x, lambda) in &samples {
            let r = moreau_envelope(m, f, x, &params(*lambda)).unwrap();
            let basis = m.tangent_basis(x);
            let big = 3.0 * r.radius_used + 1.0;
            let grid_min = lattice(2, 161, big)
                .iter()
                .map(|c| {
                    let y = m.exp_chart(x, &basis, c).unwrap();
                    f.eval(&y) + m.dist(x, &y).unwrap().powi(2) / (2.0 * lambda)
                })
                .fold(f64::INFINITY, f64::min);
            worst_value = worst_value.max(r.value - grid_min);
        }
    }
    let value_ok = worst_value <= 1e-12;
    if !value_ok {
        failing.push(format!("solver above grid infimum by {worst_value:.2e}"));
    }
    outcome(
        failing.is_empty(),
        format!(
            "200 cases, worst argmin excess {worst_gap:.2e}, solver - grid inf {worst_value:.2e}{}",
            join_failures(&failing)
        ),
    )
}

fn convergence() -> Outcome {
    let m = ManifoldModel::Hyperboloid(2);
    let p = m.origin();
    let f = ScalarField::distance(m, p.clone()).unwrap();
    let basis = m.tangent_basis(&p);
    let grid: Vec<Point> = lattice(2, 21, 3.0)
        .iter()
        .map(|c| m.exp_chart(&p, &basis, c).unwrap())
        .collect();
    let lambdas = [1.0, 0.1, 0.01];
    let rows = verify::lambda_sweep(&m, &f, &lambdas, &grid, &EnvelopeParams::default()).unwrap();
    let mut worst = f64::NEG_INFINITY;
    for r in &rows {
        worst = worst.max(r.sup_gap - r.lambda / 2.0);
    }
    let rep = verify::check_convergence(&m, &f, &rows, Some(1.0), Tolerance::absolute(1e-6));
    let gaps: Vec<String> = rows
        .iter()
        .map(|r| format!("{}:{:.6}", r.lambda, r.sup_gap))
        .collect();
    outcome(
        worst <= 1e-6 && rep.pass,
        format!(
            "sup gaps [{}], worst gap - lambda/2 = {worst:.2e}",
            gaps.join(", ")
        ),
    )
}

fn convexity_preservation() -> Outcome {
    let mut failing = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for (k, m) in [
        ManifoldModel::Hyperboloid(2),
        ManifoldModel::PoincareHalfPlane,
    ]
    .into_iter()
    .enumerate()
    {
        let p = m.origin();
        let fields = [
            ScalarField::indicator(ConvexSet::ball(m, p.clone(), 1.0).unwrap()),
            ScalarField::distance(m, p.clone()).unwrap(),
        ];
        let plan = GeodesicSamplePlan::new(
            1000,
            Region::new(&m, p.clone(), 2.5).unwrap(),
            600 + k as u64,
        );
        for f in &fields {
            for &lambda in &[0.1, 1.0, 10.0] {
                let rep = verify::check_midpoint_convexity(
                    &m,
                    &Target::Envelope(f, params(lambda)),
                    &plan,
                    Tolerance {
                        abs: 1e-12,
                        rel: 1e-7,
                    },
                )
                .unwrap();
                count += rep.samples;
                worst = worst.max(rep.worst_violation);
                if !rep.pass {
                    failing.push(rep.summary_line());
                }
            }
        }
    }
    outcome(
        failing.is_empty(),
        format!(
            "{count} geodesics, worst scaled violation {worst:.2e}{}",
            join_failures(&failing)
        ),
    )
}

fn c1_and_gradient() -> Outcome {
    let mut failing = Vec::new();
    let mut worst_rel = f64::NEG_INFINITY;
    let mut fd_count = 0;
    let h2 = ManifoldModel::Hyperboloid(2);
    let e2 = ManifoldModel::Euclidean(2);
    let cases: Vec<(ManifoldModel, ScalarField, f64)> = vec![
        (h2, ScalarField::distance(h2, h2.origin()).unwrap(), 1.0),
        (
            h2,
            ScalarField::indicator(ConvexSet::ball(h2, h2.origin(), 1.0).unwrap()),
            0.5,
        ),
        (
            h2,
            ScalarField::squared_distance(h2, h2.point(&[0.5, -0.3]).unwrap()).unwrap(),
            0.3,
        ),
        (e2, quadratic(e2), 0.5),
        (e2, ScalarField::distance(e2, e2.origin()).unwrap(), 1.0),
    ];
    let env = EnvelopeParams::default();
    for (k, (m, f, lambda)) in cases.iter().enumerate() {
        let region = Region::new(m, m.origin(), 2.5).unwrap();
        let mut rng = sampling::rng(700 + k as u64);
        let pts: Vec<Point> = (0..100).map(|_| region.sample(m, &mut rng)).collect();
        let rep =
            verify::check_gradient_fd(m, f, *lambda, &pts, 1e-5, &env, Tolerance::absolute(1e-5))
                .unwrap();
        fd_count += rep.samples;
        worst_rel = worst_rel.max(rep.worst_violation);
        if !rep.pass || rep.samples < 90 {
            failing.push(rep.summary_line());
        }
        let pairs = verify::pair_plan(m, &region, 20, 800 + k as u64);
        let rep = verify::check_c1(m, f, *lambda, &pairs, &[1e-1, 1e-2, 1e-3, 1e-4], &env).unwrap();
        if !rep.pass {
            failing.push(rep.summary_line());
        }
    }
    outcome(
        failing.is_empty(),
        format!(
            "{fd_count} unique-prox points, worst relative gradient error {worst_rel:.2e}, ladders decay linearly{}",
            join_failures(&failing)
        ),
    )
}

fn minimizers_and_symmetry() -> Outcome {
    let mut failing = Vec::new();
    let env = EnvelopeParams::default();
    let lambdas = [0.1, 1.0, 5.0];
    let h2 = ManifoldModel::Hyperboloid(2);
    let p = h2.point(&[0.3, 0.2]).unwrap();
    let region = Region::new(&h2, p.clone(), 2.0).unwrap();
    let basis = h2.tangent_basis(&p);
    let per_axis = 21;
    let grid: Vec<Point> = lattice(2, per_axis, 2.0)
        .iter()
        .map(|c| h2.exp_chart(&p, &basis, c).unwrap())
        .collect();
    // chart lattice spacing, stretched by sinh(R)/R at the rim
    let resolution = 2.0 * 2.0 / (per_axis - 1) as f64 * (2f64.sinh() / 2.0) * 2f64.sqrt();
    let sq = ScalarField::squared_distance(h2, p.clone()).unwrap();
    let ball = ScalarField::indicator(ConvexSet::ball(h2, p.clone(), 1.0).unwrap());
    let constant = ScalarField::constant(h2, 0.7).unwrap();
    for f in [&sq, &ball, &constant] {
        let ms = f.minimizers().unwrap();
        let rep = verify::check_minimizer_preservation(
            &h2,
            f,
            &ms,
            &lambdas,
            &grid,
            resolution,
            &env,
            Tolerance::absolute(1e-9),
        )
        .unwrap();
        if !rep.pass {
            failing.push(rep.summary_line());
        }
    }

    let mut rng = sampling::rng(900);
    let samples: Vec<Point> = (0..100).map(|_| region.sample(&h2, &mut rng)).collect();
    let rot = Isometry::rotation_about(h2, &p, 1.1).unwrap();
    let mut worst = f64::NEG_INFINITY;
    for f in [&sq, &ball] {
        let f = f.clone().with_symmetry(rot.clone()).unwrap();
        for &l in &lambdas {
            let rep =
                verify::check_symmetry(&h2, &f, &rot, l, &samples, &env, Tolerance::absolute(1e-8))
                    .unwrap();
            worst = worst.max(rep.worst_violation);
            if !rep.pass {
                failing.push(rep.summary_line());
            }
        }
    }
    let cyl = ManifoldModel::Cylinder;
    let circle = ScalarField::set_distance_squared(ConvexSet::cylinder_circle(0.0).unwrap());
    let shift = Isometry::cylinder_shift(2.3, 0.0);
    let cregion = Region::new(&cyl, Point::new(&[0.0, 0.0]), 1.5).unwrap();
    let csamples: Vec<Point> = (0..100).map(|_| cregion.sample(&cyl, &mut rng)).collect();
    for &l in &lambdas {
        let rep = verify::check_symmetry(
            &cyl,
            &circle,
            &shift,
            l,
            &csamples,
            &env,
            Tolerance::absolute(1e-8),
        )
        .unwrap();
        worst = worst.max(rep.worst_violation);
        if !rep.pass {
            failing.push(rep.summary_line());
        }
    }
    let id = Isometry::identity(h2);
    let rep = verify::check_symmetry(&h2, &sq, &id, 1.0, &samples, &env, Tolerance::absolute(0.0))
        .unwrap();
    if !rep.pass {
        failing.push(rep.summary_line());
    }
    outcome(
        failing.is_empty(),
        format!(
            "argmin within {resolution:.3}, worst invariance error {worst:.2e}{}",
            join_failures(&failing)
        ),
    )
}

fn counterexample() -> Outcome {
    let t = Instant::now();
    let sphere = sphere_counterexample(0.5).unwrap();
    let control = counterexample_search(&ManifoldModel::Hyperboloid(2), 0.5).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let margin = sphere
        .witness
        .as_ref()
        .map_or(f64::NEG_INFINITY, |w| w.margin);
    outcome(
        margin > 1e-4 && control.witness.is_none() && secs < 60.0,
        format!(
            "sphere margin {margin:.3e}, hyperboloid worst {:.2e} (no witness: {}), {secs:.1} s",
            control.report.worst_violation,
            control.witness.is_none()
        ),
    )
}

fn hamilton_jacobi() -> Outcome {
    let env = EnvelopeParams::default();
    let times: Vec<f64> = (1..=10).map(|k| 0.1 * k as f64).collect();

    let e1 = ManifoldModel::Euclidean(1);
    let xs: Vec<Point> = (0..10)
        .map(|k| Point::new(&[-2.0 + 4.0 * k as f64 / 9.0]))
        .collect();
    let table = hj_demo(&e1, &quadratic(e1), &times, &xs, 1e-4, &env).unwrap();
    let closed = table
        .rows
        .iter()
        .map(|r| (r.u - r.x[0] * r.x[0] / (1.0 + 2.0 * r.t)).abs())
        .fold(0.0, f64::max);

    let h2 = ManifoldModel::Hyperboloid(2);
    let p = h2.origin();
    let region = Region::new(&h2, p.clone(), 2.0).unwrap();
    let mut rng = sampling::rng(1000);
    let hx: Vec<Point> = (0..10).map(|_| region.sample(&h2, &mut rng)).collect();
    let f = ScalarField::squared_distance(h2, p.clone()).unwrap();
    let htable = hj_demo(&h2, &f, &times, &hx, 1e-4, &env).unwrap();
    // u = d²/(2(1 + t)) for the squared distance
    let hclosed = htable
        .rows
        .iter()
        .zip(times.iter().flat_map(|_| hx.iter()))
        .map(|(r, x)| (r.u - h2.dist(x, &p).unwrap().powi(2) / (2.0 * (1.0 + r.t))).abs())
        .fold(0.0, f64::max);

    outcome(
        table.max_residual < 1e-5 && htable.max_residual < 1e-5 && closed < 1e-8 && hclosed < 1e-8,
        format!(
            "euclidean residual {:.2e} (closed form {closed:.1e}), hyperboloid residual {:.2e} (closed form {hclosed:.1e})",
            table.max_residual, htable.max_residual
        ),
    )
}

fn full_suite_json(seed: u64) -> String {
    let h2 = ManifoldModel::Hyperboloid(2);
    let opts = BundleOptions {
        seed,
        geodesics: 40,
        samples: 20,
        grid_per_axis: 7,
        ..BundleOptions::default()
    };
    let region = Region::new(&h2, h2.origin(), 1.5).unwrap();
    let ball = ScalarField::indicator(ConvexSet::ball(h2, h2.origin(), 1.0).unwrap());
    let dist = ScalarField::distance(h2, h2.origin()).unwrap();
    let mut reports =
        verify::cartan_hadamard_bundle(&h2, &ball, &region, &[0.1, 1.0], &opts).unwrap();
    reports.extend(verify::main_corollary_bundle(&h2, &dist, &region, &opts).unwrap());
    reports.push(sphere_counterexample(0.5).unwrap().report);
    serde_json::to_string_pretty(&reports).unwrap()
}

fn determinism() -> Outcome {
    let a = full_suite_json(11);
    let b = full_suite_json(11);
    outcome(
        a == b,
        format!("{} bytes per run, identical: {}", a.len(), a == b),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 11] = [
        ("closed-form envelope", closed_form_envelope),
        ("huber oracle", huber),
        ("order and monotonicity", order_and_monotonicity),
        ("localization", localization),
        ("convergence", convergence),
        ("convexity preservation", convexity_preservation),
        ("c1 and gradient", c1_and_gradient),
        ("minimizers and symmetry", minimizers_and_symmetry),
        ("sphere counterexample", counterexample),
        ("hamilton-jacobi", hamilton_jacobi),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let o = run();
        println!(
            "criterion {:>2} {:<24} {} ({}; {:.1} s)",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
