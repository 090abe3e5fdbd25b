//! Constructions built on the envelope: smoothed squared distance to a convex
//! set, convex-body thickening, the sphere counterexample search and the
//! Hamilton–Jacobi table.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::envelope::{hj_residual, moreau_envelope, EnvelopeParams};
use crate::error::{Error, Result};
use crate::field::{ConvexSet, ScalarField};
use crate::manifold::{GeodesicSegment, ManifoldModel, Point, Tangent};
use crate::sampling::{self, Region};
use crate::verify::{CheckReport, Witness};

fn require_hadamard(m: &ManifoldModel) -> Result<()> {
    if m.is_cartan_hadamard() {
        Ok(())
    } else {
        Err(Error::NotHadamard(m.name()))
    }
}

/// `d(x, C)²` and its gradient `-2 log_x(proj_C x)`.
pub fn dist_to_set_sq(m: &ManifoldModel, c: &ConvexSet, x: &Point) -> Result<(f64, Tangent)> {
    require_hadamard(m)?;
    m.check_point(x)?;
    let proj = c.project(x);
    let d = m.dist(x, &proj)?;
    Ok((d * d, m.log(x, &proj)?.scaled(-2.0)))
}

/// The same quantity as `2λ (δ_C)_λ(x)` with `λ = ½`.
pub fn dist_to_set_sq_envelope(
    m: &ManifoldModel,
    c: &ConvexSet,
    x: &Point,
    params: &EnvelopeParams,
) -> Result<f64> {
    require_hadamard(m)?;
    let f = ScalarField::indicator(c.clone());
    Ok(moreau_envelope(m, &f, x, &params.with_lambda(0.5))?.value)
}

/// `D = {x : d(x, C) ≤ r}`.
#[derive(Clone, Debug)]
pub struct ConvexBody {
    pub set: ConvexSet,
    pub margin: f64,
}

impl ConvexBody {
    pub fn contains(&self, x: &Point) -> bool {
        self.set.distance(x) <= self.margin
    }
}

/// Thickens `C` by `r` and samples the three defining properties:
/// `C ⊂ D`, `D` within distance `r` of `C`, and a nonvanishing gradient of
/// `d(·, C)²` on the boundary of `D`.
pub fn convex_body_approx(
    m: &ManifoldModel,
    c: &ConvexSet,
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<(ConvexBody, Vec<CheckReport>)> {
    require_hadamard(m)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Parameter(format!(
            "thickening radius must be positive, got {r}"
        )));
    }
    let body = ConvexBody {
        set: c.clone(),
        margin: r,
    };
    let mut rng = sampling::rng(seed);
    let label = c.description();

    let mut inner = CheckReport::new("body-contains-set", m, &label, 0.0).param("r", r);
    let mut within = CheckReport::new("body-within-margin", m, &label, 1e-12).param("r", r);
    let mut boundary = CheckReport::new("body-boundary-gradient", m, &label, 0.0).param("r", r);
    for _ in 0..samples {
        let y = c.sample(&mut rng);
        let d = c.distance(&y);
        inner.record(Witness {
            inputs: vec![y.coords().to_vec()],
            values: vec![d],
            margin: if body.contains(&y) { -1.0 } else { d },
        });

        // a point near the set and the boundary point along the same ray
        let u = sampling::random_unit_tangent(m, &y, &mut rng);
        let probe = m.exp(&y, &u, 2.0 * r * rand::Rng::random::<f64>(&mut rng))?;
        if body.contains(&probe) {
            let dp = c.distance(&probe);
            within.record(Witness {
                inputs: vec![probe.coords().to_vec()],
                values: vec![dp],
                margin: dp - r,
            });
        }
        let b = boundary_point(m, c, &y, &u, r)?;
        let (_, g) = dist_to_set_sq(m, c, &b)?;
        let gn = m.norm(&b, &g)?;
        boundary.record(Witness {
            inputs: vec![b.coords().to_vec()],
            values: vec![c.distance(&b), gn],
            // the gradient norm is 2r on the boundary
            margin: r - gn,
        });
    }
    Ok((body, vec![inner, within, boundary]))
}

/// First point of the ray `s ↦ exp_y(s u)` at distance `r` from `C`.
fn boundary_point(
    m: &ManifoldModel,
    c: &ConvexSet,
    y: &Point,
    u: &Tangent,
    r: f64,
) -> Result<Point> {
    let at = |s: f64| m.exp(y, u, s);
    let (mut lo, mut hi) = (0.0, r);
    // d(·, C) along the ray grows at least like s - d(y, C) - diam, so this ends
    while c.distance(&at(hi)?) < r {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if c.distance(&at(mid)?) < r {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    at(hi)
}

/// Violation of midpoint convexity found by the counterexample search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterexampleWitness {
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
    pub half_length: f64,
    /// `g(-τ), g(0), g(τ)` for `g(t) = d(γ(t), C)²`.
    pub values: [f64; 3],
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub model: String,
    pub epsilon: f64,
    pub candidates: usize,
    pub report: CheckReport,
    pub witness: Option<CounterexampleWitness>,
}

/// Smallest margin reported as a violation.
pub const VIOLATION_THRESHOLD: f64 = 1e-9;

const OFFSETS: [f64; 9] = [0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.2, 1.5];
const HALF_LENGTHS: [f64; 3] = [0.05, 0.1, 0.2];
const HEADINGS: usize = 24;
const ALONG: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Searches geodesics near a segment `C` of length `eps` for a violation of
/// midpoint convexity of `d(·, C)²`.
///
/// On the sphere `C` starts at `(1, 0, 0)` and runs along the equator; on the
/// hyperboloid it starts at the origin along the first axis. Candidate
/// geodesics pass through points offset normally from `C` (from nearly on
/// `C` up to nearly the pole) in all headings.
pub fn counterexample_search(m: &ManifoldModel, eps: f64) -> Result<CounterexampleReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!(
            "segment length must lie in (0, 1), got {eps}"
        )));
    }
    let (start, dir) = match m {
        ManifoldModel::Sphere => {
            let s = Point::new(&[1.0, 0.0, 0.0]);
            let v = Tangent::new(s.clone(), &[0.0, 1.0, 0.0]);
            (s, v)
        }
        ManifoldModel::Hyperboloid(n) if *n >= 2 => {
            let s = m.origin();
            let mut v = vec![0.0; n + 1];
            v[1] = 1.0;
            let v = Tangent::new(s.clone(), &v);
            (s, v)
        }
        _ => {
            return Err(Error::InvalidInput(format!(
                "the search is defined on the sphere and the hyperboloid, not {m}"
            )))
        }
    };
    let end = m.exp(&start, &dir, eps)?;
    let set = ConvexSet::segment(*m, start, end)?;
    let seg = GeodesicSegment::from_velocity(*m, dir.scaled(eps))?;

    let mut bases = Vec::new();
    for &s in &ALONG {
        let p = seg.eval(s);
        let along = m.parallel_transport(seg.start(), &p, seg.initial_velocity())?;
        let normal = unit_normal(m, &p, &along)?;
        for &off in &OFFSETS {
            for sign in [1.0, -1.0] {
                let b = m.exp(&p, &normal, sign * off)?;
                // heading 0 is parallel to C
                let a = m.parallel_transport(&p, &b, &along)?;
                let a = a.scaled(1.0 / m.norm(&b, &a)?);
                let nb = unit_normal(m, &b, &a)?;
                bases.push((b, a, nb));
            }
        }
    }
    let candidates: Vec<(Point, Tangent, f64)> = bases
        .iter()
        .flat_map(|(b, a, nb)| {
            (0..HEADINGS).flat_map(move |k| {
                let ang = k as f64 * 2.0 * PI / HEADINGS as f64;
                let u = a.scaled(ang.cos()).plus(&nb.scaled(ang.sin()));
                HALF_LENGTHS
                    .iter()
                    .map(move |&tau| (b.clone(), u.clone(), tau))
            })
        })
        .collect();

    let g = |p: &Point| set.distance(p).powi(2);
    let ws: Vec<(Witness, CounterexampleWitness)> = candidates
        .par_iter()
        .map(|(b, u, tau)| {
            let lo = m.exp(b, u, -tau)?;
            let hi = m.exp(b, u, *tau)?;
            let vals = [g(&lo), g(b), g(&hi)];
            let margin = vals[1] - 0.5 * (vals[0] + vals[2]);
            Ok((
                Witness {
                    inputs: vec![b.coords().to_vec(), u.vec().to_vec(), vec![*tau]],
                    values: vals.to_vec(),
                    margin,
                },
                CounterexampleWitness {
                    base: b.coords().to_vec(),
                    direction: u.vec().to_vec(),
                    half_length: *tau,
                    values: vals,
                    margin,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let best = ws
        .iter()
        .map(|(_, c)| c)
        .max_by(|a, b| a.margin.total_cmp(&b.margin))
        .filter(|c| c.margin > VIOLATION_THRESHOLD)
        .cloned();
    let report = CheckReport::new(
        "set-distance-midpoint-convexity",
        m,
        &format!("d(., {})^2", set.description()),
        VIOLATION_THRESHOLD,
    )
    .param("epsilon", eps)
    .record_all(ws.into_iter().map(|(w, _)| w));
    Ok(CounterexampleReport {
        model: m.to_string(),
        epsilon: eps,
        candidates: candidates.len(),
        report,
        witness: best,
    })
}

/// The sphere instance of [`counterexample_search`].
pub fn sphere_counterexample(eps: f64) -> Result<CounterexampleReport> {
    counterexample_search(&ManifoldModel::Sphere, eps)
}

/// A unit tangent at `p` orthogonal to `a`.
fn unit_normal(m: &ManifoldModel, p: &Point, a: &Tangent) -> Result<Tangent> {
    let basis = m.tangent_basis(p);
    let an = m.norm(p, a)?;
    let mut best: Option<(f64, Tangent)> = None;
    for b in basis {
        let k = m.inner(p, &b, a)? / (an * an);
        let w = b.minus(&a.scaled(k));
        let wn = m.norm(p, &w)?;
        if best.as_ref().is_none_or(|(n, _)| wn > *n) {
            best = Some((wn, w.scaled(1.0 / wn)));
        }
    }
    best.map(|(_, w)| w)
        .ok_or_else(|| Error::InvalidInput("no normal direction in dimension 1".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HjRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: f64,
    pub gradient: Vec<f64>,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HjTable {
    pub rows: Vec<HjRow>,
    pub max_residual: f64,
}

/// `u(t, x) = f_t(x)`, its gradient and the residual of
/// `∂_t u + ½‖∇u‖² = 0` on a `(t, x)` grid.
pub fn hj_demo(
    m: &ManifoldModel,
    f: &ScalarField,
    times: &[f64],
    points: &[Point],
    step: f64,
    params: &EnvelopeParams,
) -> Result<HjTable> {
    require_hadamard(m)?;
    if !f.is_convex() {
        return Err(Error::InvalidInput(format!("{} is not convex", f.label())));
    }
    let jobs: Vec<(f64, &Point)> = times
        .iter()
        .flat_map(|&t| points.iter().map(move |x| (t, x)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(t, x)| {
            let r = moreau_envelope(m, f, x, &params.with_lambda(t))?;
            let residual = hj_residual(m, f, t, x, step, params)?;
            let basis = m.tangent_basis(x);
            Ok(HjRow {
                t,
                x: x.coords().to_vec(),
                u: r.value,
                gradient: m.coefficients(&basis, &r.gradient),
                residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(HjTable { rows, max_residual })
}

/// Evenly spaced sample points of a region, for tables.
pub fn region_points(m: &ManifoldModel, region: &Region, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = sampling::rng(seed);
    (0..count).map(|_| region.sample(m, &mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_in_set_has_zero_distance_and_gradient() {
        let m = ManifoldModel::Hyperboloid(2);
        let c = ConvexSet::ball(m, m.origin(), 1.0).unwrap();
        let x = m.point(&[0.2, 0.1]).unwrap();
        let (d, g) = dist_to_set_sq(&m, &c, &x).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(m.norm(&x, &g).unwrap(), 0.0);
    }

    #[test]
    fn sphere_is_refused() {
        let m = ManifoldModel::Sphere;
        let c = ConvexSet::singleton(m, m.origin()).unwrap();
        assert_eq!(
            dist_to_set_sq(&m, &c, &m.origin()).unwrap_err(),
            Error::NotHadamard("sphere")
        );
    }

    #[test]
    fn zero_margin_is_rejected() {
        let m = ManifoldModel::Euclidean(2);
        let c = ConvexSet::singleton(m, m.origin()).unwrap();
        assert!(convex_body_approx(&m, &c, 0.0, 10, 1).is_err());
    }

    #[test]
    fn counterexample_needs_short_segment() {
        assert!(sphere_counterexample(1.0).is_err());
        assert!(sphere_counterexample(0.0).is_err());
    }
}
