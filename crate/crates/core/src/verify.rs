//! Sampled pass/fail checks of the envelope's structural properties.
//!
//! Every check is a pure function of its inputs and seed; samples are
//! evaluated in parallel and merged in input order, so reports are
//! reproducible byte for byte.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::envelope::{moreau_envelope, EnvelopeParams, EnvelopeResult};
use crate::error::{Error, Result};
use crate::field::{MinimizerSet, ScalarField};
use crate::manifold::{GeodesicSegment, ManifoldModel, Point};
use crate::sampling::{self, lattice, Region};

/// Number of worst cases kept per report.
pub const MAX_WITNESSES: usize = 3;

/// `violation ≤ abs + rel · magnitude` is accepted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-7,
            rel: 1e-7,
        }
    }
}

impl Tolerance {
    pub fn absolute(abs: f64) -> Self {
        Tolerance { abs, rel: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub inputs: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Scaled violation: raw violation minus the relative allowance.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub check_name: String,
    pub model: String,
    pub field: String,
    pub params: Map<String, Value>,
    pub samples: usize,
    pub worst_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub witnesses: Vec<Witness>,
}

impl CheckReport {
    pub fn new(check_name: &str, model: &ManifoldModel, field: &str, tolerance: f64) -> Self {
        CheckReport {
            check_name: check_name.to_string(),
            model: model.to_string(),
            field: field.to_string(),
            params: Map::new(),
            samples: 0,
            worst_violation: f64::NEG_INFINITY,
            tolerance,
            pass: true,
            witnesses: Vec::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    /// Records one sample.
    pub fn record(&mut self, w: Witness) {
        self.samples += 1;
        if w.margin > self.worst_violation {
            self.worst_violation = w.margin;
        }
        self.witnesses.push(w);
        self.witnesses.sort_by(|a, b| b.margin.total_cmp(&a.margin));
        self.witnesses.truncate(MAX_WITNESSES);
        self.pass = self.worst_violation <= self.tolerance;
    }

    pub fn record_all(mut self, ws: impl IntoIterator<Item = Witness>) -> Self {
        for w in ws {
            self.record(w);
        }
        self
    }

    /// Associative merge of two reports of the same check.
    pub fn merge(mut self, other: CheckReport) -> Self {
        self.samples += other.samples;
        self.worst_violation = self.worst_violation.max(other.worst_violation);
        self.witnesses.extend(other.witnesses);
        self.witnesses.sort_by(|a, b| b.margin.total_cmp(&a.margin));
        self.witnesses.truncate(MAX_WITNESSES);
        self.pass = self.worst_violation <= self.tolerance;
        self
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} {} model={} field={} samples={} worst={:.3e} tol={:.3e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.check_name,
            self.model,
            self.field,
            self.samples,
            self.worst_violation,
            self.tolerance
        )
    }
}

fn coords(p: &Point) -> Vec<f64> {
    p.coords().to_vec()
}

/// What a check evaluates: a field or one of its envelopes.
#[derive(Clone, Debug)]
pub enum Target<'a> {
    Field(&'a ScalarField),
    Envelope(&'a ScalarField, EnvelopeParams),
}

impl Target<'_> {
    pub fn eval(&self, x: &Point) -> Result<f64> {
        match self {
            Target::Field(f) => Ok(f.eval(x)),
            Target::Envelope(f, p) => Ok(moreau_envelope(&f.model(), f, x, p)?.value),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Target::Field(f) => f.label(),
            Target::Envelope(f, p) => format!("env[{}; lambda={}]", f.label(), p.lambda),
        }
    }
}

/// Random geodesic segments inside a ball.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeodesicSamplePlan {
    pub count: usize,
    pub min_length: f64,
    pub max_length: f64,
    pub seed: u64,
    pub region: Region,
}

impl GeodesicSamplePlan {
    pub fn new(count: usize, region: Region, seed: u64) -> Self {
        GeodesicSamplePlan {
            count,
            min_length: 0.0,
            max_length: 2.0 * region.radius,
            seed,
            region,
        }
    }

    /// Segments whose endpoints lie in the region; the region must be convex
    /// for the whole segment to stay inside.
    pub fn segments(&self, m: &ManifoldModel) -> Result<Vec<GeodesicSegment>> {
        if !(self.min_length >= 0.0 && self.max_length >= self.min_length) {
            return Err(Error::Parameter("invalid geodesic length range".into()));
        }
        let mut rng = sampling::rng(self.seed);
        let mut out = Vec::with_capacity(self.count);
        let mut tries = 0usize;
        while out.len() < self.count {
            tries += 1;
            if tries > 1000 * (self.count + 1) {
                return Err(Error::Infeasible(
                    "cannot fit geodesics of the requested length in the region".into(),
                ));
            }
            let start = self.region.sample(m, &mut rng);
            let end = self.region.sample(m, &mut rng);
            let Ok(seg) = GeodesicSegment::new(*m, start, end) else {
                continue;
            };
            let len = seg.length();
            if len >= self.min_length && len <= self.max_length && len > 1e-9 {
                out.push(seg);
            }
        }
        Ok(out)
    }
}

fn midpoint_witness(seg: &GeodesicSegment, a: f64, b: f64, c: f64, rel: f64) -> Witness {
    let raw = c - 0.5 * (a + b);
    let mag = a.abs().max(b.abs()).max(c.abs());
    Witness {
        inputs: vec![coords(seg.start()), coords(seg.end())],
        values: vec![a, c, b],
        margin: raw - rel * mag,
    }
}

/// `g(γ(½)) ≤ ½ g(γ(0)) + ½ g(γ(1))` along the plan's geodesics.
pub fn check_midpoint_convexity(
    m: &ManifoldModel,
    g: &Target<'_>,
    plan: &GeodesicSamplePlan,
    tol: Tolerance,
) -> Result<CheckReport> {
    let segs = plan.segments(m)?;
    let ws = segs
        .par_iter()
        .map(|s| {
            let a = g.eval(s.start())?;
            let b = g.eval(s.end())?;
            let c = g.eval(&s.eval(0.5))?;
            if !(a.is_finite() && b.is_finite() && c.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{} is not finite on the region",
                    g.label()
                )));
            }
            Ok(midpoint_witness(s, a, b, c, tol.rel))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(
        CheckReport::new("midpoint-convexity", m, &g.label(), tol.abs)
            .param("seed", plan.seed)
            .param("radius", plan.region.radius)
            .param("rel_tol", tol.rel)
            .record_all(ws),
    )
}

/// Midpoint convexity of `t ↦ d(β₁(t), β₂(t))` for explicit geodesic pairs.
pub fn check_distance_joint_convexity_pairs(
    m: &ManifoldModel,
    pairs: &[(GeodesicSegment, GeodesicSegment)],
    tol: Tolerance,
) -> CheckReport {
    let ws: Vec<Witness> = pairs
        .par_iter()
        .map(|(b1, b2)| {
            let l = |t: f64| m.dist_unchecked(b1.eval(t).coords(), b2.eval(t).coords());
            let (a, c, b) = (l(0.0), l(0.5), l(1.0));
            let raw = c - 0.5 * (a + b);
            Witness {
                inputs: vec![
                    coords(b1.start()),
                    coords(b1.end()),
                    coords(b2.start()),
                    coords(b2.end()),
                ],
                values: vec![a, c, b],
                margin: raw - tol.rel * a.max(b).max(c),
            }
        })
        .collect();
    CheckReport::new("distance-joint-convexity", m, "d(beta1, beta2)", tol.abs)
        .param("rel_tol", tol.rel)
        .record_all(ws)
}

/// Joint convexity of the distance on random pairs of geodesics in the plan's
/// region. The region must lie within the convexity radius.
pub fn check_distance_joint_convexity(
    m: &ManifoldModel,
    plan: &GeodesicSamplePlan,
    tol: Tolerance,
) -> Result<CheckReport> {
    if plan.region.radius >= m.convexity_radius(&plan.region.center) {
        return Err(Error::Parameter(format!(
            "region radius {} exceeds the convexity radius of {m}",
            plan.region.radius
        )));
    }
    let doubled = GeodesicSamplePlan {
        count: 2 * plan.count,
        ..plan.clone()
    };
    let segs = doubled.segments(m)?;
    let pairs: Vec<_> = segs
        .chunks(2)
        .map(|c| (c[0].clone(), c[1].clone()))
        .collect();
    Ok(check_distance_joint_convexity_pairs(m, &pairs, tol)
        .param("seed", plan.seed)
        .param("radius", plan.region.radius))
}

/// Two meridian arcs at longitudes `0` and `delta`, latitude `-half..half`.
pub fn parallel_meridians(delta: f64, half: f64) -> Result<(GeodesicSegment, GeodesicSegment)> {
    let m = ManifoldModel::Sphere;
    let at =
        |lon: f64, lat: f64| Point::new(&[lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]);
    Ok((
        GeodesicSegment::new(m, at(0.0, -half), at(0.0, half))?,
        GeodesicSegment::new(m, at(delta, -half), at(delta, half))?,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub sup_gap: f64,
    pub mean_gap: f64,
}

/// `sup` and mean of `f - f_λ` over `points` for each `λ`.
pub fn lambda_sweep(
    m: &ManifoldModel,
    f: &ScalarField,
    lambdas: &[f64],
    points: &[Point],
    params: &EnvelopeParams,
) -> Result<Vec<SweepRow>> {
    if points.is_empty() {
        return Err(Error::InvalidInput("empty sample grid".into()));
    }
    let fx: Vec<f64> = points.iter().map(|x| f.eval(x)).collect();
    if fx.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "sweep needs a field finite on the grid".into(),
        ));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let p = params.with_lambda(lambda);
            let gaps = points
                .par_iter()
                .zip(fx.par_iter())
                .map(|(x, v)| Ok(v - moreau_envelope(m, f, x, &p)?.value))
                .collect::<Result<Vec<f64>>>()?;
            Ok(SweepRow {
                lambda,
                sup_gap: gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                mean_gap: gaps.iter().sum::<f64>() / gaps.len() as f64,
            })
        })
        .collect()
}

/// Convergence as `λ → 0`: gaps are nonnegative, nondecreasing in `λ`, and,
/// for an `L`-Lipschitz field, below `L²λ/2`.
pub fn check_convergence(
    m: &ManifoldModel,
    f: &ScalarField,
    rows: &[SweepRow],
    lipschitz: Option<f64>,
    tol: Tolerance,
) -> CheckReport {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let mut ws = Vec::new();
    for (i, r) in sorted.iter().enumerate() {
        let mut margin = -r.sup_gap;
        if let Some(l) = lipschitz {
            margin = margin.max(r.sup_gap - l * l * r.lambda / 2.0);
        }
        if i > 0 {
            margin = margin.max(sorted[i - 1].sup_gap - r.sup_gap);
        }
        ws.push(Witness {
            inputs: vec![vec![r.lambda]],
            values: vec![r.sup_gap, r.mean_gap],
            margin,
        });
    }
    let mut rep = CheckReport::new("convergence", m, &f.label(), tol.abs).record_all(ws);
    if let Some(l) = lipschitz {
        rep = rep.param("lipschitz", l);
    }
    rep
}

/// `f_λ ≤ f` and `f_{λ₂} ≤ f_{λ₁}` for `λ₁ < λ₂` at every point.
pub fn check_order(
    m: &ManifoldModel,
    f: &ScalarField,
    lambdas: &[f64],
    points: &[Point],
    params: &EnvelopeParams,
    tol: Tolerance,
) -> Result<CheckReport> {
    let mut lams = lambdas.to_vec();
    lams.sort_by(f64::total_cmp);
    let ws = points
        .par_iter()
        .map(|x| {
            let fx = f.eval(x);
            let vals = lams
                .iter()
                .map(|&l| Ok(moreau_envelope(m, f, x, &params.with_lambda(l))?.value))
                .collect::<Result<Vec<f64>>>()?;
            let mut margin = f64::NEG_INFINITY;
            for (i, v) in vals.iter().enumerate() {
                margin = margin.max(v - fx);
                if i > 0 {
                    margin = margin.max(v - vals[i - 1]);
                }
            }
            let mut values = vec![fx];
            values.extend(vals);
            Ok(Witness {
                inputs: vec![coords(x)],
                values,
                margin,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CheckReport::new("order", m, &f.label(), tol.abs)
        .param("lambdas", lams)
        .record_all(ws))
}

/// Minimizers survive: the grid argmin of `f_λ` lies within grid resolution
/// of the known minimizer set, and minimizers are fixed points of the prox
/// with `f_λ = f` there.
#[allow(clippy::too_many_arguments)]
pub fn check_minimizer_preservation(
    m: &ManifoldModel,
    f: &ScalarField,
    minimizers: &MinimizerSet,
    lambdas: &[f64],
    grid: &[Point],
    resolution: f64,
    params: &EnvelopeParams,
    tol: Tolerance,
) -> Result<CheckReport> {
    let mut rep =
        CheckReport::new("minimizers", m, &f.label(), tol.abs).param("resolution", resolution);
    let fixed: Vec<Point> = match minimizers {
        MinimizerSet::Points(ps) => ps.clone(),
        MinimizerSet::Set(c) => {
            let mut rng = sampling::rng(7);
            (0..8).map(|_| c.sample(&mut rng)).collect()
        }
        MinimizerSet::Everywhere => grid.iter().take(8).cloned().collect(),
    };
    for &lambda in lambdas {
        let p = params.with_lambda(lambda);
        let env = grid
            .par_iter()
            .map(|x| moreau_envelope(m, f, x, &p))
            .collect::<Result<Vec<EnvelopeResult>>>()?;
        let (best_i, best) = env
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.value.total_cmp(&b.1.value))
            .ok_or_else(|| Error::InvalidInput("empty grid".into()))?;
        let margin = match minimizers {
            MinimizerSet::Everywhere => {
                let hi = env
                    .iter()
                    .map(|e| e.value)
                    .fold(f64::NEG_INFINITY, f64::max);
                hi - best.value
            }
            _ => minimizers.distance(m, &grid[best_i]) - resolution,
        };
        rep.record(Witness {
            inputs: vec![vec![lambda], coords(&grid[best_i])],
            values: vec![best.value],
            margin,
        });
        for z in &fixed {
            let e = moreau_envelope(m, f, z, &p)?;
            let fz = f.eval(z);
            let drift = m.dist(&e.prox_point, z)?;
            rep.record(Witness {
                inputs: vec![vec![lambda], coords(z)],
                values: vec![fz, e.value, drift],
                margin: (fz - e.value).abs().max(drift) - tol.rel * fz.abs(),
            });
        }
    }
    Ok(rep.param("lambdas", lambdas.to_vec()))
}

/// `|f_λ(T x) - f_λ(x)|` for a declared isometry `T`.
pub fn check_symmetry(
    m: &ManifoldModel,
    f: &ScalarField,
    iso: &crate::field::Isometry,
    lambda: f64,
    samples: &[Point],
    params: &EnvelopeParams,
    tol: Tolerance,
) -> Result<CheckReport> {
    let p = params.with_lambda(lambda);
    let ws = samples
        .par_iter()
        .map(|x| {
            let tx = iso.apply(x);
            let a = moreau_envelope(m, f, x, &p)?.value;
            let b = moreau_envelope(m, f, &tx, &p)?.value;
            Ok(Witness {
                inputs: vec![coords(x), coords(&tx)],
                values: vec![a, b],
                margin: (a - b).abs() - tol.rel * a.abs().max(b.abs()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CheckReport::new("symmetry", m, &f.label(), tol.abs)
        .param("isometry", iso.description())
        .param("lambda", lambda)
        .record_all(ws))
}

/// Pairs `(x, u)` of base points and unit directions for the C¹ ladders.
pub fn pair_plan(
    m: &ManifoldModel,
    region: &Region,
    count: usize,
    seed: u64,
) -> Vec<(Point, crate::manifold::Tangent)> {
    let mut rng = sampling::rng(seed);
    (0..count)
        .map(|_| {
            let x = region.sample(m, &mut rng);
            let u = sampling::random_unit_tangent(m, &x, &mut rng);
            (x, u)
        })
        .collect()
}

/// Gradient-continuity ladder at one base point: `q(δ) = ‖L ∇f_λ(x') - ∇f_λ(x)‖`
/// for `x' = exp_x(δu)`.
pub fn gradient_moduli(
    m: &ManifoldModel,
    f: &ScalarField,
    x: &Point,
    u: &crate::manifold::Tangent,
    ladder: &[f64],
    params: &EnvelopeParams,
) -> Result<Vec<f64>> {
    let g0 = moreau_envelope(m, f, x, params)?.gradient;
    ladder
        .iter()
        .map(|&d| {
            let y = m.exp(x, u, d)?;
            let gy = moreau_envelope(m, f, &y, params)?.gradient;
            let back = m.parallel_transport(&y, x, &gy)?;
            m.norm(x, &back.minus(&g0))
        })
        .collect()
}

/// Noise floor of the gradient modulus.
fn modulus_floor(lambda: f64) -> f64 {
    1e-8 * (1.0 + 1.0 / lambda)
}

/// C¹ smoothness: along ladders of shrinking distances the modulus divided by
/// the distance may not grow by more than a factor 2 between rungs, so the
/// modulus decays at least linearly.
pub fn check_c1(
    m: &ManifoldModel,
    f: &ScalarField,
    lambda: f64,
    pairs: &[(Point, crate::manifold::Tangent)],
    ladder: &[f64],
    params: &EnvelopeParams,
) -> Result<CheckReport> {
    let p = params.with_lambda(lambda);
    let floor = modulus_floor(lambda);
    let ws = pairs
        .par_iter()
        .map(|(x, u)| {
            let q = gradient_moduli(m, f, x, u, ladder, &p)?;
            let mut margin = f64::NEG_INFINITY;
            for k in 1..ladder.len() {
                if q[k] <= floor {
                    margin = margin.max(-1.0);
                    continue;
                }
                let prev = (q[k - 1] / ladder[k - 1]).max(floor / ladder[k - 1]);
                margin = margin.max(q[k] / ladder[k] / prev - 2.0);
            }
            Ok(Witness {
                inputs: vec![coords(x), u.vec().to_vec(), ladder.to_vec()],
                values: q,
                margin,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CheckReport::new("c1", m, &f.label(), 0.0)
        .param("lambda", lambda)
        .param("ladder", ladder.to_vec())
        .record_all(ws))
}

/// Diagnostic: `λ · q(δ)/δ`, which a `1/λ`-Lipschitz gradient keeps below 1.
pub fn check_gradient_lipschitz(
    m: &ManifoldModel,
    f: &ScalarField,
    lambda: f64,
    pairs: &[(Point, crate::manifold::Tangent)],
    delta: f64,
    params: &EnvelopeParams,
    tol: Tolerance,
) -> Result<CheckReport> {
    let p = params.with_lambda(lambda);
    let ws = pairs
        .par_iter()
        .map(|(x, u)| {
            let q = gradient_moduli(m, f, x, u, &[delta], &p)?[0];
            let ratio = lambda * q / delta;
            Ok(Witness {
                inputs: vec![coords(x), u.vec().to_vec()],
                values: vec![q, ratio],
                margin: ratio - 1.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(
        CheckReport::new("gradient-lipschitz", m, &f.label(), tol.abs)
            .param("lambda", lambda)
            .param("delta", delta)
            .record_all(ws),
    )
}

/// Envelope gradient against central differences of `f_λ` along the
/// coordinate geodesics; points with non-unique proximal points are skipped.
pub fn check_gradient_fd(
    m: &ManifoldModel,
    f: &ScalarField,
    lambda: f64,
    points: &[Point],
    step: f64,
    params: &EnvelopeParams,
    tol: Tolerance,
) -> Result<CheckReport> {
    let p = params.with_lambda(lambda);
    let ws = points
        .par_iter()
        .map(|x| {
            let r = moreau_envelope(m, f, x, &p)?;
            if !r.minimizer_unique {
                return Ok(None);
            }
            let basis = m.tangent_basis(x);
            let g = m.coefficients(&basis, &r.gradient);
            let fd = basis
                .iter()
                .map(|e| {
                    let plus = moreau_envelope(m, f, &m.exp(x, e, step)?, &p)?.value;
                    let minus = moreau_envelope(m, f, &m.exp(x, e, -step)?, &p)?.value;
                    Ok((plus - minus) / (2.0 * step))
                })
                .collect::<Result<Vec<f64>>>()?;
            let err = g
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let gn = g.iter().map(|a| a * a).sum::<f64>().sqrt();
            let mut values = g.clone();
            values.extend(fd);
            Ok(Some(Witness {
                inputs: vec![coords(x)],
                values,
                margin: err / gn.max(1e-3),
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CheckReport::new("gradient-fd", m, &f.label(), tol.abs)
        .param("lambda", lambda)
        .param("step", step)
        .record_all(ws.into_iter().flatten()))
}

/// Localization: on a lattice of a large ball around `x` the global argmin of
/// the proximal objective lies in `B(x, r)` up to the lattice resolution.
pub fn check_localization(
    m: &ManifoldModel,
    f: &ScalarField,
    cases: &[(Point, f64)],
    per_axis: usize,
    params: &EnvelopeParams,
) -> Result<CheckReport> {
    let ws = cases
        .par_iter()
        .map(|(x, lambda)| {
            let mm = f.minoration().ok_or_else(|| {
                Error::MetadataMissing(format!("{} has no minoration", f.label()))
            })?;
            let r =
                crate::envelope::localization_radius(f, x, *lambda, mm.c, &mm.anchor, params.eta)?;
            let big = 3.0 * r + 1.0;
            let basis = m.tangent_basis(x);
            let h = 2.0 * big / (per_axis - 1) as f64;
            let phi = |y: &Point| {
                f.eval(y) + m.dist_unchecked(x.coords(), y.coords()).powi(2) / (2.0 * lambda)
            };
            let mut global = (f64::INFINITY, 0.0);
            let mut inside = f64::INFINITY;
            for c in lattice(m.dimension(), per_axis, big) {
                let y = m.exp_chart(x, &basis, &c)?;
                let v = phi(&y);
                let d = m.dist_unchecked(x.coords(), y.coords());
                if v < global.0 {
                    global = (v, d);
                }
                if d <= r {
                    inside = inside.min(v);
                }
            }
            let res = h * (m.dimension() as f64).sqrt();
            Ok(Witness {
                inputs: vec![coords(x), vec![*lambda, r, res]],
                values: vec![inside, global.0, global.1],
                margin: global.1 - r - res,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CheckReport::new("localization", m, &f.label(), 0.0)
        .param("per_axis", per_axis as u64)
        .record_all(ws))
}

/// `λ₀` such that the localization ball of every `z` in `B(x₀, R)` stays
/// inside a ball of radius `r` when `|f| ≤ k` there.
pub fn lambda_zero(r: f64, k: f64, region_radius: f64) -> f64 {
    if k <= 0.0 {
        return f64::INFINITY;
    }
    let big_r = region_radius;
    if r.is_infinite() {
        return 1.0 / (2.0 * k);
    }
    r * r / (k * (3.0 + 8.0 * big_r * big_r) + 2.0 * k * r * r)
}

/// Options shared by the corollary bundles.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BundleOptions {
    pub seed: u64,
    pub geodesics: usize,
    pub samples: usize,
    pub grid_per_axis: usize,
    pub ladder: Vec<f64>,
    pub tolerance: Tolerance,
    pub envelope: EnvelopeParams,
}

impl Default for BundleOptions {
    fn default() -> Self {
        BundleOptions {
            seed: 1,
            geodesics: 100,
            samples: 50,
            grid_per_axis: 9,
            ladder: vec![1e-1, 1e-2, 1e-3, 1e-4],
            tolerance: Tolerance::default(),
            envelope: EnvelopeParams::default(),
        }
    }
}

fn grid_points(m: &ManifoldModel, region: &Region, per_axis: usize) -> Result<(Vec<Point>, f64)> {
    let basis = m.tangent_basis(&region.center);
    let pts = lattice(m.dimension(), per_axis, region.radius)
        .iter()
        .map(|c| m.exp_chart(&region.center, &basis, c))
        .collect::<Result<Vec<_>>>()?;
    let h = 2.0 * region.radius / (per_axis - 1) as f64;
    // chart spacing bounds the geodesic spacing up to the chart's distortion
    let stretch = match m.curvature_sign() {
        -1 => (region.radius.sinh() / region.radius.max(1e-12)).max(1.0),
        _ => 1.0,
    };
    Ok((pts, h * stretch * (m.dimension() as f64).sqrt()))
}

fn run_bundle(
    m: &ManifoldModel,
    f: &ScalarField,
    region: &Region,
    lambdas: &[f64],
    opts: &BundleOptions,
) -> Result<Vec<CheckReport>> {
    let env = &opts.envelope;
    let tol = opts.tolerance;
    let mut rng = sampling::rng(opts.seed);
    let samples: Vec<Point> = (0..opts.samples)
        .map(|_| region.sample(m, &mut rng))
        .collect();
    let (grid, resolution) = grid_points(m, region, opts.grid_per_axis)?;
    let mut out = vec![check_order(
        m,
        f,
        lambdas,
        &samples,
        env,
        Tolerance::absolute(1e-10),
    )?];

    let finite_on_grid = grid.iter().all(|x| f.eval(x).is_finite());
    if finite_on_grid {
        let rows = lambda_sweep(m, f, lambdas, &grid, env)?;
        let l = f.lipschitz_on_ball(&region.center, region.radius + 1.0);
        out.push(check_convergence(m, f, &rows, l, Tolerance::absolute(1e-9)));
    }
    if let Some(ms) = f.minimizers() {
        out.push(check_minimizer_preservation(
            m, f, &ms, lambdas, &grid, resolution, env, tol,
        )?);
    }
    for iso in f.symmetries() {
        for &l in lambdas {
            out.push(check_symmetry(
                m,
                f,
                iso,
                l,
                &samples,
                env,
                Tolerance::absolute(1e-8),
            )?);
        }
    }
    let plan = GeodesicSamplePlan::new(opts.geodesics, region.clone(), opts.seed.wrapping_add(1));
    let pairs = pair_plan(m, region, opts.samples.min(20), opts.seed.wrapping_add(2));
    for &l in lambdas {
        let target = Target::Envelope(f, env.with_lambda(l));
        out.push(check_midpoint_convexity(m, &target, &plan, tol)?.param("lambda", l));
        out.push(check_c1(m, f, l, &pairs, &opts.ladder, env)?);
    }
    Ok(out)
}

/// Bounded-region bundle with `λ` below the computed `λ₀`.
pub fn main_corollary_bundle(
    m: &ManifoldModel,
    f: &ScalarField,
    region: &Region,
    opts: &BundleOptions,
) -> Result<Vec<CheckReport>> {
    let mut rng = sampling::rng(opts.seed ^ 0x5eed);
    let sup = (0..400)
        .map(|_| f.eval(&region.sample(m, &mut rng)).abs())
        .fold(f.eval(&region.center).abs(), f64::max);
    if !sup.is_finite() {
        return Err(Error::InvalidInput(format!(
            "{} is not bounded on the region",
            f.label()
        )));
    }
    let c = f.minoration().map_or(0.0, |mm| mm.c);
    let k = sup.max(c);
    let r = (m.convexity_radius(&region.center) / 2.0).min(PI);
    let l0 = lambda_zero(r, k, region.radius).min(1.0);
    let lambdas = [l0 / 2.0, l0 / 8.0, l0 / 32.0];
    Ok(run_bundle(m, f, region, &lambdas, opts)?
        .into_iter()
        .map(|r| r.param("bundle", "main-corollary").param("lambda0", l0))
        .collect())
}

/// All-`λ` bundle on Cartan–Hadamard models, indicators included.
pub fn cartan_hadamard_bundle(
    m: &ManifoldModel,
    f: &ScalarField,
    region: &Region,
    lambdas: &[f64],
    opts: &BundleOptions,
) -> Result<Vec<CheckReport>> {
    if !m.is_cartan_hadamard() {
        return Err(Error::NotHadamard(m.name()));
    }
    Ok(run_bundle(m, f, region, lambdas, opts)?
        .into_iter()
        .map(|r| r.param("bundle", "cartan-hadamard"))
        .collect())
}
