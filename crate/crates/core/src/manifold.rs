//! Closed-form geometry of the five model manifolds.
//!
//! Every model is complete and carries explicit formulas for the exponential
//! and logarithm maps, the geodesic distance and parallel transport along the
//! minimizing geodesic. Coordinates:
//!
//! | model                 | point coordinates            | tangent coordinates         |
//! |-----------------------|------------------------------|-----------------------------|
//! | `Euclidean(n)`        | `x ∈ ℝⁿ`                     | `v ∈ ℝⁿ`                    |
//! | `Hyperboloid(n)`      | `p ∈ ℝⁿ⁺¹`, `⟨p,p⟩_L = -1`   | ambient, `⟨p,v⟩_L = 0`      |
//! | `PoincareHalfPlane`   | `(x, y)`, `y > 0`            | `(vx, vy)`, metric `/y²`    |
//! | `Cylinder`            | `(θ mod 2π, z)`              | `(vθ, vz)`                  |
//! | `Sphere`              | `p ∈ ℝ³`, `‖p‖ = 1`          | ambient, `p·v = 0`          |
//!
//! The half-plane is handled by conjugating with the isometry onto the
//! two-dimensional hyperboloid, except for the distance which has a direct
//! cancellation-free formula.

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize, Serializer};
use smallvec::SmallVec;

use crate::error::{Error, Result};

pub type Coords = SmallVec<[f64; 4]>;

/// Tolerance on the model constraint (hyperboloid sheet, unit sphere).
pub const POINT_TOL: f64 = 1e-10;
/// Tolerance used to decide whether a tangent vector is based at a point.
pub const BASE_TOL: f64 = 1e-9;
/// Angular slack used to detect the cylinder's cut locus (θ-offset π).
pub const CUT_LOCUS_TOL: f64 = 1e-12;
/// Distance from the antipode below which sphere `log` and transport refuse.
pub const SPHERE_CUT_TOL: f64 = 1e-9;

/// A location in a model's chart.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    coords: Coords,
}

impl Point {
    /// Wraps raw coordinates without validation; use [`ManifoldModel::point`]
    /// for checked construction.
    pub fn new(coords: &[f64]) -> Self {
        Point {
            coords: Coords::from_slice(coords),
        }
    }

    fn from_coords(coords: Coords) -> Self {
        Point { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Max-norm distance between coordinate vectors.
    pub fn coord_distance(&self, other: &Point) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.coords.iter())
    }
}

/// A vector attached to a base point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tangent {
    base: Point,
    vec: Coords,
}

impl Tangent {
    /// Unchecked constructor; [`ManifoldModel::tangent`] validates tangency.
    pub fn new(base: Point, vec: &[f64]) -> Self {
        Tangent {
            base,
            vec: Coords::from_slice(vec),
        }
    }

    fn from_coords(base: Point, vec: Coords) -> Self {
        Tangent { base, vec }
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn vec(&self) -> &[f64] {
        &self.vec
    }

    pub fn scaled(&self, k: f64) -> Tangent {
        Tangent::from_coords(self.base.clone(), self.vec.iter().map(|v| v * k).collect())
    }

    /// Componentwise sum; `other` must share the base point.
    pub fn plus(&self, other: &Tangent) -> Tangent {
        let vec = self
            .vec
            .iter()
            .zip(&other.vec)
            .map(|(a, b)| a + b)
            .collect();
        Tangent::from_coords(self.base.clone(), vec)
    }

    pub fn minus(&self, other: &Tangent) -> Tangent {
        self.plus(&other.scaled(-1.0))
    }
}

/// One of the closed-form model geometries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManifoldModel {
    Euclidean(usize),
    /// Upper sheet of the hyperboloid in Minkowski space, curvature -1.
    Hyperboloid(usize),
    /// Upper half-plane with metric `(dx² + dy²)/y²`, curvature -1.
    PoincareHalfPlane,
    /// Unit-radius cylinder `S¹ × ℝ`, flat.
    Cylinder,
    /// Unit two-sphere, curvature +1.
    Sphere,
}

impl fmt::Display for ManifoldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldModel::Euclidean(n) => write!(f, "euclidean({n})"),
            ManifoldModel::Hyperboloid(n) => write!(f, "hyperboloid({n})"),
            ManifoldModel::PoincareHalfPlane => write!(f, "poincare_half_plane"),
            ManifoldModel::Cylinder => write!(f, "cylinder"),
            ManifoldModel::Sphere => write!(f, "sphere"),
        }
    }
}

impl ManifoldModel {
    /// Parses a model from its name and (for the n-dimensional families) dimension.
    pub fn from_name(name: &str, dim: Option<usize>) -> Result<Self> {
        let model = match name {
            "euclidean" => ManifoldModel::Euclidean(dim.unwrap_or(2)),
            "hyperboloid" => ManifoldModel::Hyperboloid(dim.unwrap_or(2)),
            "poincare_half_plane" | "half_plane" => ManifoldModel::PoincareHalfPlane,
            "cylinder" => ManifoldModel::Cylinder,
            "sphere" => ManifoldModel::Sphere,
            other => return Err(Error::InvalidInput(format!("unknown manifold `{other}`"))),
        };
        match (model, dim) {
            (
                ManifoldModel::PoincareHalfPlane | ManifoldModel::Cylinder | ManifoldModel::Sphere,
                Some(d),
            ) if d != 2 => Err(Error::InvalidInput(format!(
                "{model} is two-dimensional, got dim = {d}"
            ))),
            _ => model.validated(),
        }
    }

    pub fn validated(self) -> Result<Self> {
        match self {
            ManifoldModel::Euclidean(0) | ManifoldModel::Hyperboloid(0) => {
                Err(Error::InvalidInput("dimension must be at least 1".into()))
            }
            m => Ok(m),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ManifoldModel::Euclidean(_) => "euclidean",
            ManifoldModel::Hyperboloid(_) => "hyperboloid",
            ManifoldModel::PoincareHalfPlane => "poincare_half_plane",
            ManifoldModel::Cylinder => "cylinder",
            ManifoldModel::Sphere => "sphere",
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            ManifoldModel::Euclidean(n) | ManifoldModel::Hyperboloid(n) => *n,
            _ => 2,
        }
    }

    /// Number of coordinates used for points and tangent vectors.
    pub fn coord_len(&self) -> usize {
        match self {
            ManifoldModel::Euclidean(n) => *n,
            ManifoldModel::Hyperboloid(n) => n + 1,
            ManifoldModel::PoincareHalfPlane | ManifoldModel::Cylinder => 2,
            ManifoldModel::Sphere => 3,
        }
    }

    pub fn curvature_sign(&self) -> i8 {
        match self {
            ManifoldModel::Hyperboloid(_) | ManifoldModel::PoincareHalfPlane => -1,
            ManifoldModel::Euclidean(_) | ManifoldModel::Cylinder => 0,
            ManifoldModel::Sphere => 1,
        }
    }

    /// Complete, simply connected and nonpositively curved.
    pub fn is_cartan_hadamard(&self) -> bool {
        matches!(
            self,
            ManifoldModel::Euclidean(_)
                | ManifoldModel::Hyperboloid(_)
                | ManifoldModel::PoincareHalfPlane
        )
    }

    /// Largest `r` such that every ball `B(p, s)`, `s < r`, is geodesically convex.
    pub fn convexity_radius(&self, _p: &Point) -> f64 {
        match self {
            ManifoldModel::Sphere | ManifoldModel::Cylinder => PI / 2.0,
            _ => f64::INFINITY,
        }
    }

    /// Radius of the ball around any point on which `exp` is a diffeomorphism
    /// onto its image and `log` is defined.
    pub fn injectivity_radius(&self) -> f64 {
        match self {
            ManifoldModel::Sphere | ManifoldModel::Cylinder => PI,
            _ => f64::INFINITY,
        }
    }

    /// A canonical base point of the model.
    pub fn origin(&self) -> Point {
        let mut c: Coords = SmallVec::from_elem(0.0, self.coord_len());
        match self {
            ManifoldModel::Hyperboloid(_) => c[0] = 1.0,
            ManifoldModel::PoincareHalfPlane => c[1] = 1.0,
            ManifoldModel::Sphere => c[2] = 1.0,
            _ => {}
        }
        Point::from_coords(c)
    }

    /// Checked point construction.
    ///
    /// For the hyperboloid an `n`-vector is accepted as the spatial part and
    /// lifted onto the upper sheet. Cylinder angles are reduced mod 2π.
    pub fn point(&self, coords: &[f64]) -> Result<Point> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        match self {
            ManifoldModel::Hyperboloid(n) if coords.len() == *n => {
                let mut c: Coords = SmallVec::with_capacity(n + 1);
                c.push((1.0 + coords.iter().map(|x| x * x).sum::<f64>()).sqrt());
                c.extend_from_slice(coords);
                Ok(Point::from_coords(c))
            }
            ManifoldModel::Cylinder if coords.len() == 2 => {
                Ok(Point::new(&[coords[0].rem_euclid(TAU), coords[1]]))
            }
            _ => {
                let p = Point::new(coords);
                self.check_point(&p)?;
                Ok(p)
            }
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.coord_len() {
            return Err(Error::InvalidInput(format!(
                "{self} expects {} coordinates, got {len}",
                self.coord_len()
            )));
        }
        Ok(())
    }

    /// Validates the model constraint within [`POINT_TOL`].
    pub fn check_point(&self, p: &Point) -> Result<()> {
        self.check_len(p.len())?;
        let c = p.coords();
        match self {
            ManifoldModel::Hyperboloid(_) => {
                let scale = 1.0 + c.iter().map(|x| x * x).sum::<f64>();
                if (minkowski(c, c) + 1.0).abs() > POINT_TOL * scale || c[0] <= 0.0 {
                    return Err(Error::InvalidInput(
                        "point is not on the upper hyperboloid sheet".into(),
                    ));
                }
            }
            ManifoldModel::Sphere => {
                if (dot(c, c).sqrt() - 1.0).abs() > POINT_TOL {
                    return Err(Error::InvalidInput(
                        "point is not on the unit sphere".into(),
                    ));
                }
            }
            ManifoldModel::PoincareHalfPlane if c[1] <= 0.0 => {
                return Err(Error::InvalidInput("half-plane point needs y > 0".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Checked tangent construction.
    pub fn tangent(&self, p: &Point, vec: &[f64]) -> Result<Tangent> {
        let t = Tangent::new(p.clone(), vec);
        self.check_tangent(&t)?;
        Ok(t)
    }

    /// Validates the tangency constraint within [`POINT_TOL`].
    pub fn check_tangent(&self, v: &Tangent) -> Result<()> {
        self.check_len(v.vec().len())?;
        self.check_point(v.base())?;
        let (p, w) = (v.base().coords(), v.vec());
        let scale = 1.0 + dot(p, p).sqrt() * dot(w, w).sqrt();
        let residual = match self {
            ManifoldModel::Hyperboloid(_) => minkowski(p, w),
            ManifoldModel::Sphere => dot(p, w),
            _ => 0.0,
        };
        if residual.abs() > POINT_TOL * scale {
            return Err(Error::InvalidInput(
                "vector is not tangent at its base point".into(),
            ));
        }
        Ok(())
    }

    fn check_base(&self, p: &Point, v: &Tangent) -> Result<()> {
        self.check_len(p.len())?;
        self.check_len(v.vec().len())?;
        let scale = 1.0 + p.coords().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if p.coord_distance(v.base()) > BASE_TOL * scale {
            return Err(Error::BaseMismatch);
        }
        Ok(())
    }

    pub fn zero_tangent(&self, p: &Point) -> Tangent {
        Tangent::from_coords(p.clone(), SmallVec::from_elem(0.0, self.coord_len()))
    }

    fn metric(&self, p: &[f64], a: &[f64], b: &[f64]) -> f64 {
        match self {
            ManifoldModel::Hyperboloid(_) => minkowski(a, b),
            ManifoldModel::PoincareHalfPlane => dot(a, b) / (p[1] * p[1]),
            _ => dot(a, b),
        }
    }

    /// Riemannian inner product of two vectors based at `p`.
    pub fn inner(&self, p: &Point, u: &Tangent, v: &Tangent) -> Result<f64> {
        self.check_base(p, u)?;
        self.check_base(p, v)?;
        Ok(self.metric(p.coords(), u.vec(), v.vec()))
    }

    pub fn norm(&self, p: &Point, v: &Tangent) -> Result<f64> {
        Ok(self.inner(p, v, v)?.max(0.0).sqrt())
    }

    /// `γ(t)` for the geodesic with `γ(0) = p`, `γ'(0) = v`.
    pub fn exp(&self, p: &Point, v: &Tangent, t: f64) -> Result<Point> {
        self.check_base(p, v)?;
        let (pc, vc) = (p.coords(), v.vec());
        let out = match self {
            ManifoldModel::Euclidean(_) => pc.iter().zip(vc).map(|(a, b)| a + t * b).collect(),
            ManifoldModel::Hyperboloid(_) => hyp_exp(pc, vc, t),
            ManifoldModel::Sphere => sphere_exp(pc, vc, t),
            ManifoldModel::Cylinder => {
                smallvec::smallvec![(pc[0] + t * vc[0]).rem_euclid(TAU), pc[1] + t * vc[1]]
            }
            ManifoldModel::PoincareHalfPlane => {
                let hp = half_plane_to_hyp(pc);
                let hv = half_plane_push(pc, vc);
                half_plane_from_hyp(&hyp_exp(&hp, &hv, t))
            }
        };
        Ok(Point::from_coords(out))
    }

    /// Inverse of `exp` on the injectivity domain: `exp(p, log(p, q), 1) = q`.
    pub fn log(&self, p: &Point, q: &Point) -> Result<Tangent> {
        self.check_len(p.len())?;
        self.check_len(q.len())?;
        let (pc, qc) = (p.coords(), q.coords());
        let vec = match self {
            ManifoldModel::Euclidean(_) => qc.iter().zip(pc).map(|(a, b)| a - b).collect(),
            ManifoldModel::Hyperboloid(_) => hyp_log(pc, qc),
            ManifoldModel::Sphere => sphere_log(pc, qc)?,
            ManifoldModel::Cylinder => {
                let dtheta = wrap_angle(qc[0] - pc[0]);
                if dtheta.abs() >= PI - CUT_LOCUS_TOL {
                    return Err(Error::CutLocus { model: "cylinder" });
                }
                smallvec::smallvec![dtheta, qc[1] - pc[1]]
            }
            ManifoldModel::PoincareHalfPlane => {
                let l = hyp_log(&half_plane_to_hyp(pc), &half_plane_to_hyp(qc));
                half_plane_pull(pc, &l)
            }
        };
        Ok(Tangent::from_coords(p.clone(), vec))
    }

    /// Geodesic distance.
    pub fn dist(&self, p: &Point, q: &Point) -> Result<f64> {
        self.check_len(p.len())?;
        self.check_len(q.len())?;
        Ok(self.dist_unchecked(p.coords(), q.coords()))
    }

    pub(crate) fn dist_unchecked(&self, p: &[f64], q: &[f64]) -> f64 {
        match self {
            ManifoldModel::Euclidean(_) => p
                .iter()
                .zip(q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            ManifoldModel::Hyperboloid(_) => acosh_1p(hyp_excess(p, q)),
            ManifoldModel::Sphere => {
                let diff = sub(q, p);
                let cross = cross3(p, &diff);
                dot(&cross, &cross).sqrt().atan2(1.0 + dot(p, &diff))
            }
            ManifoldModel::Cylinder => {
                let dt = wrap_angle(q[0] - p[0]);
                (dt * dt + (q[1] - p[1]).powi(2)).sqrt()
            }
            ManifoldModel::PoincareHalfPlane => {
                let u = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)) / (2.0 * p[1] * q[1]);
                acosh_1p(u)
            }
        }
    }

    /// Parallel transport `L_{pq}` along the minimizing geodesic from `p` to `q`.
    pub fn parallel_transport(&self, p: &Point, q: &Point, v: &Tangent) -> Result<Tangent> {
        self.check_base(p, v)?;
        self.check_len(q.len())?;
        let (pc, qc, vc) = (p.coords(), q.coords(), v.vec());
        let out = match self {
            ManifoldModel::Euclidean(_) => Coords::from_slice(vc),
            ManifoldModel::Cylinder => {
                if wrap_angle(qc[0] - pc[0]).abs() >= PI - CUT_LOCUS_TOL {
                    return Err(Error::CutLocus { model: "cylinder" });
                }
                Coords::from_slice(vc)
            }
            ManifoldModel::Hyperboloid(_) => hyp_transport(pc, qc, vc),
            ManifoldModel::Sphere => {
                if PI - self.dist_unchecked(pc, qc) < SPHERE_CUT_TOL {
                    return Err(Error::CutLocus { model: "sphere" });
                }
                let k = dot(qc, vc) / (1.0 + dot(pc, qc));
                let mut w: Coords = vc
                    .iter()
                    .zip(pc.iter().zip(qc))
                    .map(|(v, (a, b))| v - k * (a + b))
                    .collect();
                let c = dot(qc, &w);
                for (wi, qi) in w.iter_mut().zip(qc) {
                    *wi -= c * qi;
                }
                w
            }
            ManifoldModel::PoincareHalfPlane => {
                let (hp, hq) = (half_plane_to_hyp(pc), half_plane_to_hyp(qc));
                let hv = half_plane_push(pc, vc);
                half_plane_pull(qc, &hyp_transport(&hp, &hq, &hv))
            }
        };
        Ok(Tangent::from_coords(q.clone(), out))
    }

    /// An orthonormal basis of the tangent space at `p`.
    pub fn tangent_basis(&self, p: &Point) -> Vec<Tangent> {
        let c = p.coords();
        let n = self.coord_len();
        let unit = |i: usize| -> Coords {
            let mut e: Coords = SmallVec::from_elem(0.0, n);
            e[i] = 1.0;
            e
        };
        let vecs: Vec<Coords> = match self {
            ManifoldModel::Euclidean(_) | ManifoldModel::Cylinder => (0..n).map(unit).collect(),
            ManifoldModel::PoincareHalfPlane => vec![
                smallvec::smallvec![c[1], 0.0],
                smallvec::smallvec![0.0, c[1]],
            ],
            ManifoldModel::Hyperboloid(_) => (1..n)
                .map(|i| {
                    // transport of e_i from the origin (1, 0, ..., 0)
                    let k = c[i] / (1.0 + c[0]);
                    let mut e = unit(i);
                    e[0] += k * (1.0 + c[0]);
                    for (j, ej) in e.iter_mut().enumerate().skip(1) {
                        *ej += k * c[j];
                    }
                    e
                })
                .collect(),
            ManifoldModel::Sphere => {
                let k = (0..3)
                    .min_by(|&a, &b| c[a].abs().total_cmp(&c[b].abs()))
                    .unwrap_or(0);
                let mut a = unit(k);
                let pk = c[k];
                for (ai, pi) in a.iter_mut().zip(c) {
                    *ai -= pk * pi;
                }
                let na = dot(&a, &a).sqrt();
                a.iter_mut().for_each(|x| *x /= na);
                let b = cross3(c, &a);
                vec![a, b]
            }
        };
        vecs.into_iter()
            .map(|v| Tangent::from_coords(p.clone(), v))
            .collect()
    }

    /// `Σ coeffs[i] · basis[i]` as a tangent vector at `p`.
    pub fn combine(&self, p: &Point, basis: &[Tangent], coeffs: &[f64]) -> Tangent {
        let mut v: Coords = SmallVec::from_elem(0.0, self.coord_len());
        for (b, c) in basis.iter().zip(coeffs) {
            for (vi, bi) in v.iter_mut().zip(b.vec()) {
                *vi += c * bi;
            }
        }
        Tangent::from_coords(p.clone(), v)
    }

    /// Point with normal coordinates `coeffs` in the exponential chart at `p`.
    pub fn exp_chart(&self, p: &Point, basis: &[Tangent], coeffs: &[f64]) -> Result<Point> {
        self.exp(p, &self.combine(p, basis, coeffs), 1.0)
    }

    /// Coefficients of `v` in an orthonormal basis at its base point.
    pub fn coefficients(&self, basis: &[Tangent], v: &Tangent) -> Vec<f64> {
        let p = v.base().coords();
        basis
            .iter()
            .map(|b| self.metric(p, b.vec(), v.vec()))
            .collect()
    }

    /// Projects ambient coordinates back onto the model (renormalization after drift).
    pub fn retract_point(&self, p: &Point) -> Point {
        match self {
            ManifoldModel::Hyperboloid(_) => Point::from_coords(hyp_normalize(p.coords.clone())),
            ManifoldModel::Sphere => Point::from_coords(sphere_normalize(p.coords.clone())),
            ManifoldModel::Cylinder => Point::new(&[p.coords[0].rem_euclid(TAU), p.coords[1]]),
            _ => p.clone(),
        }
    }
}

/// Distance on `M × M` with the product metric.
pub fn product_dist(m: &ManifoldModel, a: (&Point, &Point), b: (&Point, &Point)) -> Result<f64> {
    Ok(m.dist(a.0, b.0)?.hypot(m.dist(a.1, b.1)?))
}

/// Constant-speed geodesic `t ↦ exp(start, t·v)` with `exp(start, v) = end`.
#[derive(Clone, Debug)]
pub struct GeodesicSegment {
    model: ManifoldModel,
    start: Point,
    end: Point,
    velocity: Tangent,
}

impl GeodesicSegment {
    pub fn new(model: ManifoldModel, start: Point, end: Point) -> Result<Self> {
        let velocity = model.log(&start, &end)?;
        Ok(GeodesicSegment {
            model,
            start,
            end,
            velocity,
        })
    }

    /// Geodesic through `start` with initial velocity `velocity`, on `[0, 1]`.
    pub fn from_velocity(model: ManifoldModel, velocity: Tangent) -> Result<Self> {
        let start = velocity.base().clone();
        let end = model.exp(&start, &velocity, 1.0)?;
        Ok(GeodesicSegment {
            model,
            start,
            end,
            velocity,
        })
    }

    pub fn start(&self) -> &Point {
        &self.start
    }

    pub fn end(&self) -> &Point {
        &self.end
    }

    pub fn initial_velocity(&self) -> &Tangent {
        &self.velocity
    }

    pub fn length(&self) -> f64 {
        self.model
            .norm(&self.start, &self.velocity)
            .unwrap_or(f64::NAN)
    }

    pub fn eval(&self, t: f64) -> Point {
        if t == 1.0 {
            return self.end.clone();
        }
        // base and velocity are consistent by construction
        self.model
            .exp(&self.start, &self.velocity, t)
            .expect("geodesic velocity is based at its start")
    }
}

// ---- scalar helpers -------------------------------------------------------

/// `arccosh(1 + u)` without the cancellation of forming `1 + u` first.
pub fn acosh_1p(u: f64) -> f64 {
    if u.is_nan() {
        return u;
    }
    let u = u.max(0.0);
    if u < 1e-6 {
        (2.0 * u).sqrt() * (1.0 - u / 12.0 + 3.0 * u * u / 160.0)
    } else {
        (u + (u * (u + 2.0)).sqrt()).ln_1p()
    }
}

/// Reduces an angle to `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(TAU) - PI
}

fn sinhc(s: f64) -> f64 {
    if s.abs() < 1e-6 {
        1.0 + s * s / 6.0
    } else {
        s.sinh() / s
    }
}

fn sinc(s: f64) -> f64 {
    if s.abs() < 1e-6 {
        1.0 - s * s / 6.0
    } else {
        s.sin() / s
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minkowski form `-a₀b₀ + Σ aᵢbᵢ`.
pub fn minkowski(a: &[f64], b: &[f64]) -> f64 {
    -a[0] * b[0] + a[1..].iter().zip(&b[1..]).map(|(x, y)| x * y).sum::<f64>()
}

fn sub(a: &[f64], b: &[f64]) -> Coords {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn cross3(a: &[f64], b: &[f64]) -> Coords {
    smallvec::smallvec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0]
    ]
}

// ---- hyperboloid ------------------------------------------------------------

/// `-⟨p,q⟩ - 1 = cosh d - 1`, from the chord when the points are close.
fn hyp_excess(p: &[f64], q: &[f64]) -> f64 {
    let diff = sub(q, p);
    let chord = minkowski(&diff, &diff);
    if chord.is_nan() {
        return chord;
    }
    if chord < 2.0 {
        0.5 * chord.max(0.0)
    } else {
        (-minkowski(p, q) - 1.0).max(0.0)
    }
}

fn hyp_normalize(mut c: Coords) -> Coords {
    c[0] = (1.0 + c[1..].iter().map(|x| x * x).sum::<f64>()).sqrt();
    c
}

fn hyp_project_tangent(p: &[f64], w: &mut Coords) {
    let k = minkowski(p, w);
    for (wi, pi) in w.iter_mut().zip(p) {
        *wi += k * pi;
    }
}

fn hyp_exp(p: &[f64], v: &[f64], t: f64) -> Coords {
    let nv = minkowski(v, v).max(0.0).sqrt();
    let s = t * nv;
    let (ch, sh) = (s.cosh(), t * sinhc(s));
    hyp_normalize(p.iter().zip(v).map(|(a, b)| ch * a + sh * b).collect())
}

fn hyp_log(p: &[f64], q: &[f64]) -> Coords {
    let excess = hyp_excess(p, q);
    let d = acosh_1p(excess);
    // q - cosh(d) p, written through the difference vector
    let mut w: Coords = q.iter().zip(p).map(|(a, b)| (a - b) - excess * b).collect();
    hyp_project_tangent(p, &mut w);
    let k = 1.0 / sinhc(d);
    w.iter_mut().for_each(|x| *x *= k);
    w
}

fn hyp_transport(p: &[f64], q: &[f64], v: &[f64]) -> Coords {
    let k = minkowski(q, v) / (2.0 + hyp_excess(p, q));
    let mut w: Coords = v
        .iter()
        .zip(p.iter().zip(q))
        .map(|(vi, (a, b))| vi + k * (a + b))
        .collect();
    hyp_project_tangent(q, &mut w);
    w
}

// ---- sphere -----------------------------------------------------------------

fn sphere_normalize(mut c: Coords) -> Coords {
    let n = dot(&c, &c).sqrt();
    c.iter_mut().for_each(|x| *x /= n);
    c
}

fn sphere_exp(p: &[f64], v: &[f64], t: f64) -> Coords {
    let nv = dot(v, v).sqrt();
    let s = t * nv;
    let (c, sn) = (s.cos(), t * sinc(s));
    sphere_normalize(p.iter().zip(v).map(|(a, b)| c * a + sn * b).collect())
}

fn sphere_log(p: &[f64], q: &[f64]) -> Result<Coords> {
    let diff = sub(q, p);
    let cross = cross3(p, &diff);
    let d = dot(&cross, &cross).sqrt().atan2(1.0 + dot(p, &diff));
    if PI - d < SPHERE_CUT_TOL {
        return Err(Error::CutLocus { model: "sphere" });
    }
    let pd = dot(p, &diff);
    let k = 1.0 / sinc(d);
    Ok(diff.iter().zip(p).map(|(a, b)| k * (a - pd * b)).collect())
}

// ---- half-plane <-> hyperboloid(2) ------------------------------------------

fn half_plane_to_hyp(c: &[f64]) -> Coords {
    let (x, y) = (c[0], c[1]);
    let a = x * x + y * y;
    smallvec::smallvec![(a + 1.0) / (2.0 * y), (a - 1.0) / (2.0 * y), x / y]
}

fn half_plane_from_hyp(h: &[f64]) -> Coords {
    let y = 1.0 / (h[0] - h[1]);
    smallvec::smallvec![h[2] * y, y]
}

fn half_plane_push(c: &[f64], v: &[f64]) -> Coords {
    let (x, y) = (c[0], c[1]);
    let (vx, vy) = (v[0], v[1]);
    let y2 = y * y;
    smallvec::smallvec![
        x / y * vx + (y2 - x * x - 1.0) / (2.0 * y2) * vy,
        x / y * vx + (y2 - x * x + 1.0) / (2.0 * y2) * vy,
        vx / y - x / y2 * vy
    ]
}

fn half_plane_pull(c: &[f64], w: &[f64]) -> Coords {
    let (x, y) = (c[0], c[1]);
    let dy = -y * y * (w[0] - w[1]);
    let dx = y * w[2] + x / y * dy;
    smallvec::smallvec![dx, dy]
}
