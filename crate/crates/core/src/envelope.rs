//! The envelope `f_λ(x) = inf_y { f(y) + d(x, y)² / 2λ }`, its proximal point
//! and gradient, and the Hopf–Lax solution `u(t, x) = f_t(x)`.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{golden_section, heuristic_minoration, ScalarField};
use crate::manifold::{ManifoldModel, Point, Tangent};

/// Maximum number of radius doublings before giving up.
pub const MAX_DOUBLINGS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvelopeParams {
    pub lambda: f64,
    /// Slack in the localization radius.
    pub eta: f64,
    /// Grid points per unit radius along each chart axis.
    pub grid_density: f64,
    pub refine_tol: f64,
    pub max_refine_iters: usize,
    pub multistart_count: usize,
    /// Upper bound on the number of lattice points of the coarse search.
    pub max_grid_points: usize,
}

impl Default for EnvelopeParams {
    fn default() -> Self {
        EnvelopeParams {
            lambda: 1.0,
            eta: 1e-3,
            grid_density: 8.0,
            refine_tol: 1e-10,
            max_refine_iters: 200,
            multistart_count: 16,
            max_grid_points: 1024,
        }
    }
}

impl EnvelopeParams {
    pub fn new(lambda: f64) -> Result<Self> {
        Self {
            lambda,
            ..Self::default()
        }
        .validated()
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn validated(self) -> Result<Self> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.lambda) {
            return Err(Error::Parameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !positive(self.eta) || !positive(self.grid_density) || !positive(self.refine_tol) {
            return Err(Error::Parameter(
                "eta, grid_density and refine_tol must be positive".into(),
            ));
        }
        if self.multistart_count == 0 || self.max_grid_points < 3 || self.max_refine_iters == 0 {
            return Err(Error::Parameter(
                "multistart_count, max_refine_iters and max_grid_points too small".into(),
            ));
        }
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    /// The search ball came from certified minoration metadata.
    Certified,
    /// The minoration constant was fitted by sampling.
    HeuristicC,
    /// Heuristic radius and the best point still touches the search boundary.
    BoundaryHit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvelopeResult {
    pub value: f64,
    pub prox_point: Point,
    /// `-log_x(prox)/λ`; only a superdifferential witness when the minimizer
    /// is not unique.
    pub gradient: Tangent,
    pub radius_used: f64,
    pub minimizer_unique: bool,
    pub evals: usize,
    pub status: SolveStatus,
}

/// `r = sqrt(λ (2a + 2η + c(2d² + 1)) / (1 - 2λc))` where `a` is any upper
/// bound of `f_λ(x)` (usually `f(x)`) and `d = d(x, x₀)`.
pub fn radius_formula(anchor: f64, d_x_x0: f64, lambda: f64, c: f64, eta: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Parameter("lambda must be positive".into()));
    }
    if c > 0.0 && lambda >= 1.0 / (2.0 * c) {
        return Err(Error::Parameter(format!(
            "lambda = {lambda} must be below 1/(2c) = {}",
            1.0 / (2.0 * c)
        )));
    }
    if !anchor.is_finite() {
        return Err(Error::InvalidInput(
            "the localization anchor value must be finite".into(),
        ));
    }
    let num = 2.0 * anchor + 2.0 * eta + c * (2.0 * d_x_x0 * d_x_x0 + 1.0);
    Ok((lambda * num.max(0.0) / (1.0 - 2.0 * lambda * c)).sqrt())
}

/// Localization radius at `x`. When `f(x) = +∞` the anchor is taken from the
/// field's seed points (the projection, for indicators).
pub fn localization_radius(
    f: &ScalarField,
    x: &Point,
    lambda: f64,
    c: f64,
    x0: &Point,
    eta: f64,
) -> Result<f64> {
    let m = f.model();
    let a = anchor_value(f, x, lambda);
    radius_formula(a, m.dist(x, x0)?, lambda, c, eta)
}

/// `min φ` over `{x}` and the field's seed points, an upper bound of `f_λ(x)`.
fn anchor_value(f: &ScalarField, x: &Point, lambda: f64) -> f64 {
    let m = f.model();
    std::iter::once(x.clone())
        .chain(f.seed_points(x))
        .map(|y| f.eval(&y) + m.dist_unchecked(x.coords(), y.coords()).powi(2) / (2.0 * lambda))
        .fold(f64::INFINITY, f64::min)
}

/// `-log_x(y)/λ`, the gradient of `f_λ` at `x` when `y` is its unique proximal point.
pub fn envelope_gradient(m: &ManifoldModel, x: &Point, y: &Point, lambda: f64) -> Result<Tangent> {
    if !(lambda > 0.0) {
        return Err(Error::Parameter("lambda must be positive".into()));
    }
    Ok(m.log(x, y)?.scaled(-1.0 / lambda))
}

pub fn prox_point(
    m: &ManifoldModel,
    f: &ScalarField,
    x: &Point,
    p: &EnvelopeParams,
) -> Result<Point> {
    Ok(moreau_envelope(m, f, x, p)?.prox_point)
}

/// `u(t, x) = f_t(x)`, with `u(0, x) = f(x)`.
pub fn hopf_lax(
    m: &ManifoldModel,
    f: &ScalarField,
    t: f64,
    x: &Point,
    p: &EnvelopeParams,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(f.eval(x));
    }
    if !(t > 0.0) {
        return Err(Error::Parameter(format!("time must be positive, got {t}")));
    }
    Ok(moreau_envelope(m, f, x, &p.with_lambda(t))?.value)
}

/// `|∂_t u + ½‖∇u‖²|` at `(t, x)`, with a central difference of step `h` in time.
pub fn hj_residual(
    m: &ManifoldModel,
    f: &ScalarField,
    t: f64,
    x: &Point,
    h: f64,
    p: &EnvelopeParams,
) -> Result<f64> {
    if !(h > 0.0 && t - h > 0.0) {
        return Err(Error::Parameter(format!(
            "need 0 < h < t, got t = {t}, h = {h}"
        )));
    }
    let dt = (hopf_lax(m, f, t + h, x, p)? - hopf_lax(m, f, t - h, x, p)?) / (2.0 * h);
    let r = moreau_envelope(m, f, x, &p.with_lambda(t))?;
    let g = m.norm(x, &r.gradient)?;
    Ok((dt + 0.5 * g * g).abs())
}

/// The proximal objective `φ(y) = f(y) + d(x, y)²/2λ` with an evaluation counter.
struct Objective<'a> {
    m: ManifoldModel,
    f: &'a ScalarField,
    x: &'a Point,
    lambda: f64,
    evals: usize,
    /// Longest descent step; minimizers lie well inside this distance of `x`.
    reach: f64,
}

struct Refined {
    point: Point,
    value: f64,
    converged: bool,
}

impl Objective<'_> {
    fn value(&mut self, y: &Point) -> f64 {
        self.evals += 1;
        self.value_pure(y)
    }

    fn value_pure(&self, y: &Point) -> f64 {
        if !y.coords().iter().all(|c| c.is_finite()) {
            return f64::INFINITY;
        }
        let fy = self.f.eval(y);
        if fy.is_infinite() {
            return fy;
        }
        let v =
            fy + self.m.dist_unchecked(self.x.coords(), y.coords()).powi(2) / (2.0 * self.lambda);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    /// Riemannian gradient of `φ` and the scale used for relative stopping.
    fn gradient(&self, y: &Point) -> Option<(Tangent, f64)> {
        let zeta = self.f.subgradient(y)?;
        let to_x = self.m.log(y, self.x).ok()?;
        let scale = 1.0 + self.m.norm(y, &zeta).ok()? + self.m.norm(y, &to_x).ok()? / self.lambda;
        Some((zeta.minus(&to_x.scaled(1.0 / self.lambda)), scale))
    }

    /// Gradient descent with Barzilai–Borwein steps and Armijo backtracking.
    fn descend(&mut self, start: Point, tol: f64, max_iters: usize) -> Refined {
        let m = self.m;
        let mut y = start;
        let mut v = self.value(&y);
        let stuck = |y: Point, v: f64| Refined {
            point: y,
            value: v,
            converged: false,
        };
        if !v.is_finite() {
            return stuck(y, v);
        }
        let Some((mut g, mut scale)) = self.gradient(&y) else {
            return stuck(y, v);
        };
        let mut alpha = self.lambda;
        let mut flat_steps = 0usize;
        let (mut best_gn, mut since_best) = (f64::INFINITY, 0usize);
        for _ in 0..max_iters {
            let gn = m.norm(&y, &g).unwrap_or(f64::INFINITY);
            // a gradient that stops shrinking signals a kink; polishing takes over
            if gn < 0.5 * best_gn {
                best_gn = gn;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > 20 {
                    return stuck(y, v);
                }
            }
            if gn <= tol * scale {
                return Refined {
                    point: y,
                    value: v,
                    converged: true,
                };
            }
            let mut accepted = None;
            let mut step = alpha.min(2.0 * self.reach / gn);
            for _ in 0..60 {
                let Ok(cand) = m.exp(&y, &g, -step) else {
                    break;
                };
                let cand = m.retract_point(&cand);
                let cv = self.value(&cand);
                if cv <= v - 1e-4 * step * gn * gn {
                    accepted = Some((cand, cv, None));
                    break;
                }
                // Near the optimum value decreases drown in rounding; accept a
                // step that keeps the value and shrinks the gradient.
                if cv.is_finite() && cv - v <= 8.0 * f64::EPSILON * (1.0 + v.abs()) {
                    if let Some((cg, cs)) = self.gradient(&cand) {
                        if m.norm(&cand, &cg).unwrap_or(f64::INFINITY) < gn {
                            accepted = Some((cand, cv, Some((cg, cs))));
                            break;
                        }
                    }
                }
                step *= 0.5;
            }
            let Some((next, nv, known)) = accepted else {
                return stuck(y, v);
            };
            // zigzagging across a kink: no measurable progress
            if v - nv <= 8.0 * f64::EPSILON * (1.0 + v.abs()) {
                flat_steps += 1;
                if flat_steps > 10 {
                    return if nv <= v {
                        stuck(next, nv)
                    } else {
                        stuck(y, v)
                    };
                }
            } else {
                flat_steps = 0;
            }
            let Some((ng, ns)) = known.or_else(|| self.gradient(&next)) else {
                return stuck(next, nv);
            };
            // Barzilai–Borwein step from transported differences
            alpha = match (m.log(&next, &y), m.parallel_transport(&y, &next, &g)) {
                (Ok(back), Ok(g_moved)) => {
                    let s = back.scaled(-1.0);
                    let dg = ng.minus(&g_moved);
                    let ss = m.inner(&next, &s, &s).unwrap_or(0.0);
                    let sy = m.inner(&next, &s, &dg).unwrap_or(0.0);
                    if sy > 0.0 {
                        (ss / sy).clamp(1e-12, 1e6)
                    } else {
                        (2.0 * step).min(1e6)
                    }
                }
                _ => step,
            };
            y = next;
            v = nv;
            g = ng;
            scale = ns;
        }
        let gn = m.norm(&y, &g).unwrap_or(f64::INFINITY);
        Refined {
            point: y,
            value: v,
            converged: gn <= tol * scale,
        }
    }

    /// Golden-section sweeps along the coordinate geodesics at the current point.
    fn polish(&mut self, start: Refined, width: f64, max_sweeps: usize) -> Refined {
        let m = self.m;
        let (mut y, mut v) = (start.point, start.value);
        let mut w = width;
        for _ in 0..max_sweeps {
            if w < 1e-13 {
                break;
            }
            let mut moved = 0.0_f64;
            for e in m.tangent_basis(&y) {
                let base = y.clone();
                let line = |s: f64| m.exp(&base, &e, s).ok().map(|p| m.retract_point(&p));
                let calls = Cell::new(0usize);
                let phi = |s: f64| {
                    calls.set(calls.get() + 1);
                    line(s).map_or(f64::INFINITY, |p| self.value_pure(&p))
                };
                let (s, sv) = golden_section(&phi, -w, w, w * 1e-4);
                self.evals += calls.get();
                if sv < v {
                    if let Some(p) = line(s) {
                        y = p;
                        v = sv;
                        moved = moved.max(s.abs());
                    }
                }
            }
            if moved == 0.0 {
                w *= 0.01;
            } else if moved < 0.25 * w {
                w *= 0.25;
            }
        }
        let converged = start.converged;
        Refined {
            point: y,
            value: v,
            converged,
        }
    }
}

/// Minimizes `φ` over `B(x, r)`: a coarse exponential-chart lattice, descent
/// from its local minima and from the field's seed points, and coordinate
/// polishing where descent stalls.
pub fn moreau_envelope(
    m: &ManifoldModel,
    f: &ScalarField,
    x: &Point,
    p: &EnvelopeParams,
) -> Result<EnvelopeResult> {
    let p = p.clone().validated()?;
    if f.model() != *m {
        return Err(Error::InvalidInput(format!(
            "field lives on {}, not {m}",
            f.model()
        )));
    }
    m.check_point(x)?;
    let lambda = p.lambda;

    let (c, x0, certified) = match f.minoration() {
        Some(mm) => (mm.c, mm.anchor, true),
        None => (heuristic_minoration(f, x, 0), x.clone(), false),
    };
    let seeds = f.seed_points(x);
    let anchor = anchor_value(f, x, lambda);
    let mut radius = if anchor.is_finite() {
        radius_formula(anchor, m.dist(x, &x0)?, lambda, c, p.eta)?
    } else {
        if c > 0.0 && lambda >= 1.0 / (2.0 * c) {
            return Err(Error::Parameter(format!(
                "lambda = {lambda} must be below 1/(2c)"
            )));
        }
        1.0
    };
    // the sphere has diameter π
    let cap = if *m == ManifoldModel::Sphere {
        std::f64::consts::PI
    } else {
        f64::INFINITY
    };
    radius = radius.min(cap);

    let mut obj = Objective {
        m: *m,
        f,
        x,
        lambda,
        evals: 0,
        reach: 1.0,
    };
    let dim = m.dimension();
    let basis = m.tangent_basis(x);
    let mut status = if certified {
        SolveStatus::Certified
    } else {
        SolveStatus::HeuristicC
    };

    for attempt in 0..=MAX_DOUBLINGS {
        obj.reach = radius.max(f64::MIN_POSITIVE);
        let per_axis = grid_points_per_axis(radius, p.grid_density, dim, p.max_grid_points);
        let h = if radius > 0.0 {
            2.0 * radius / (per_axis - 1) as f64
        } else {
            0.0
        };
        let mut starts =
            lattice_local_minima(&mut obj, &basis, radius, per_axis, p.multistart_count);
        starts.extend(seeds.iter().cloned());
        starts.push(x.clone());

        let mut results: Vec<Refined> = starts
            .into_iter()
            .map(|s| obj.descend(s, p.refine_tol, p.max_refine_iters))
            .filter(|r| r.value.is_finite())
            .collect();
        if results.is_empty() {
            if attempt == MAX_DOUBLINGS || radius >= cap {
                break;
            }
            radius = (2.0 * radius.max(1e-3)).min(cap);
            continue;
        }
        results.sort_by(|a, b| a.value.total_cmp(&b.value));
        // Polish the leading candidates whose descent stalled.
        let width = if h > 0.0 {
            h
        } else {
            (2.0 * lambda * p.eta).sqrt()
        };
        let polish_sweeps = (p.max_refine_iters / 4).max(8);
        let near = results[0].value + 1e-6 * (1.0 + results[0].value.abs());
        let lead = results.len().min(3);
        for r in results.iter_mut().take(lead) {
            if !r.converged && r.value <= near {
                let taken = std::mem::replace(
                    r,
                    Refined {
                        point: x.clone(),
                        value: f64::INFINITY,
                        converged: false,
                    },
                );
                *r = obj.polish(taken, width, polish_sweeps);
            }
        }
        results.sort_by(|a, b| a.value.total_cmp(&b.value));
        let best = &results[0];
        let d_best = m.dist_unchecked(x.coords(), best.point.coords());

        if !certified && radius > 0.0 && d_best >= radius - h && radius < cap {
            if attempt < MAX_DOUBLINGS {
                radius = (2.0 * radius).min(cap);
                continue;
            }
            status = SolveStatus::BoundaryHit;
        }

        let tie = p.refine_tol * (1.0 + best.value.abs());
        let unique = !results[1..].iter().any(|r| {
            r.value - best.value <= tie
                && m.dist_unchecked(r.point.coords(), best.point.coords()) > h.max(1e-6)
        });
        let (gradient, unique) = match envelope_gradient(m, x, &best.point, lambda) {
            Ok(g) => (g, unique),
            Err(_) => (m.zero_tangent(x), false),
        };
        // The minimum never exceeds the anchor's value; rounding can.
        let value = best.value.min(f.eval(x));
        return Ok(EnvelopeResult {
            value,
            prox_point: best.point.clone(),
            gradient,
            radius_used: radius,
            minimizer_unique: unique,
            evals: obj.evals,
            status,
        });
    }
    Err(Error::Infeasible(format!(
        "no finite value of {} within distance {radius} of {:?}",
        f.label(),
        x.coords()
    )))
}

fn grid_points_per_axis(radius: f64, density: f64, dim: usize, budget: usize) -> usize {
    let wanted = 2 * (radius * density).ceil() as usize + 1;
    let cap = (budget as f64).powf(1.0 / dim as f64).floor() as usize;
    let cap = if cap.is_multiple_of(2) { cap - 1 } else { cap };
    wanted.min(cap).max(3)
}

/// Lattice points that are no worse than any of their lattice neighbours,
/// best first.
fn lattice_local_minima(
    obj: &mut Objective<'_>,
    basis: &[Tangent],
    radius: f64,
    per_axis: usize,
    count: usize,
) -> Vec<Point> {
    if radius <= 0.0 {
        return Vec::new();
    }
    let m = obj.m;
    let x = obj.x.clone();
    let dim = basis.len();
    let h = 2.0 * radius / (per_axis - 1) as f64;
    let total = per_axis.pow(dim as u32);
    let mut values = vec![f64::INFINITY; total];
    let mut points: Vec<Option<Point>> = vec![None; total];
    let mut coeffs = vec![0.0; dim];
    for (idx, slot) in values.iter_mut().enumerate() {
        let mut rem = idx;
        for c in coeffs.iter_mut() {
            *c = -radius + h * (rem % per_axis) as f64;
            rem /= per_axis;
        }
        if coeffs.iter().map(|c| c * c).sum::<f64>() > radius * radius * (1.0 + 1e-12) {
            continue;
        }
        if let Ok(y) = m.exp_chart(&x, basis, &coeffs) {
            *slot = obj.value(&y);
            points[idx] = Some(y);
        }
    }

    let offsets: Vec<Vec<i64>> = (0..3usize.pow(dim as u32))
        .map(|k| {
            let mut rem = k;
            (0..dim)
                .map(|_| {
                    let o = (rem % 3) as i64 - 1;
                    rem /= 3;
                    o
                })
                .collect()
        })
        .filter(|o: &Vec<i64>| o.iter().any(|&c| c != 0))
        .collect();
    let mut minima: Vec<(f64, usize)> = Vec::new();
    for idx in 0..total {
        let v = values[idx];
        if !v.is_finite() {
            continue;
        }
        let mut digits = Vec::with_capacity(dim);
        let mut rem = idx;
        for _ in 0..dim {
            digits.push((rem % per_axis) as i64);
            rem /= per_axis;
        }
        let is_min = offsets.iter().all(|o| {
            let mut j = 0usize;
            let mut stride = 1usize;
            for (d, off) in digits.iter().zip(o) {
                let k = d + off;
                if k < 0 || k >= per_axis as i64 {
                    return true;
                }
                j += k as usize * stride;
                stride *= per_axis;
            }
            v <= values[j]
        });
        if is_min {
            minima.push((v, idx));
        }
    }
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));
    minima
        .into_iter()
        .take(count)
        .filter_map(|(_, idx)| points[idx].take())
        .collect()
}
