//! Extended-real scalar fields with the metadata the envelope solver uses:
//! quadratic minoration, Lipschitz bounds, subgradient witnesses, declared
//! isometries, and closed convex sets with projection oracles.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{minkowski, GeodesicSegment, ManifoldModel, Point, Tangent};
use crate::sampling;

/// Membership slack for [`ConvexSet::contains`].
pub const SET_TOL: f64 = 1e-12;

/// `f(x) ≥ -(c/2)(1 + d(x, anchor)²)` for all `x`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Minoration {
    pub c: f64,
    pub anchor: Point,
}

// ---- convex sets -------------------------------------------------------------

#[derive(Clone, Debug)]
enum SetShape {
    Singleton(Point),
    Ball {
        center: Point,
        radius: f64,
    },
    Segment(GeodesicSegment),
    /// The closed geodesic `z = height` of the cylinder.
    Circle {
        height: f64,
    },
}

/// A closed geodesically convex set given by membership and nearest-point oracles.
#[derive(Clone, Debug)]
pub struct ConvexSet {
    model: ManifoldModel,
    shape: SetShape,
}

impl ConvexSet {
    pub fn singleton(model: ManifoldModel, p: Point) -> Result<Self> {
        model.check_point(&p)?;
        Ok(ConvexSet {
            model,
            shape: SetShape::Singleton(p),
        })
    }

    /// Closed geodesic ball; on the sphere and cylinder the radius must stay
    /// below the convexity radius.
    pub fn ball(model: ManifoldModel, center: Point, radius: f64) -> Result<Self> {
        model.check_point(&center)?;
        if !(radius >= 0.0) || radius >= model.convexity_radius(&center) {
            return Err(Error::Parameter(format!(
                "ball radius {radius} must lie in [0, {})",
                model.convexity_radius(&center)
            )));
        }
        Ok(ConvexSet {
            model,
            shape: SetShape::Ball { center, radius },
        })
    }

    /// Minimizing geodesic segment between two points.
    pub fn segment(model: ManifoldModel, start: Point, end: Point) -> Result<Self> {
        model.check_point(&start)?;
        model.check_point(&end)?;
        Ok(ConvexSet {
            model,
            shape: SetShape::Segment(GeodesicSegment::new(model, start, end)?),
        })
    }

    pub fn cylinder_circle(height: f64) -> Result<Self> {
        if !height.is_finite() {
            return Err(Error::Parameter("circle height must be finite".into()));
        }
        Ok(ConvexSet {
            model: ManifoldModel::Cylinder,
            shape: SetShape::Circle { height },
        })
    }

    pub fn model(&self) -> ManifoldModel {
        self.model
    }

    pub fn description(&self) -> String {
        match &self.shape {
            SetShape::Singleton(p) => format!("point{:?}", p.coords()),
            SetShape::Ball { center, radius } => {
                format!("ball(center={:?}, r={radius})", center.coords())
            }
            SetShape::Segment(s) => format!(
                "segment({:?} -> {:?})",
                s.start().coords(),
                s.end().coords()
            ),
            SetShape::Circle { height } => format!("circle(z={height})"),
        }
    }

    /// Some point of the set.
    pub fn anchor(&self) -> Point {
        match &self.shape {
            SetShape::Singleton(p) => p.clone(),
            SetShape::Ball { center, .. } => center.clone(),
            SetShape::Segment(s) => s.start().clone(),
            SetShape::Circle { height } => Point::new(&[0.0, *height]),
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.distance(x) <= SET_TOL
    }

    pub fn distance(&self, x: &Point) -> f64 {
        self.model
            .dist_unchecked(x.coords(), self.project(x).coords())
    }

    /// A nearest point of the set.
    pub fn project(&self, x: &Point) -> Point {
        let m = &self.model;
        match &self.shape {
            SetShape::Singleton(p) => p.clone(),
            SetShape::Ball { center, radius } => {
                let d = m.dist_unchecked(center.coords(), x.coords());
                if d <= *radius {
                    return x.clone();
                }
                let dir = match m.log(center, x) {
                    Ok(v) => v.scaled(1.0 / d),
                    // x on the cut locus of the center: every boundary point is nearest
                    Err(_) => m.tangent_basis(center).swap_remove(0),
                };
                m.exp(center, &dir, *radius)
                    .expect("direction is based at the center")
            }
            SetShape::Segment(s) => s.eval(nearest_parameter(m, s, x)),
            SetShape::Circle { height } => Point::new(&[x.coords()[0], *height]),
        }
    }

    /// A random point of the set.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Point {
        match &self.shape {
            SetShape::Singleton(p) => p.clone(),
            SetShape::Ball { center, radius } => sampling::Region {
                center: center.clone(),
                radius: radius.max(f64::MIN_POSITIVE),
            }
            .sample(&self.model, rng),
            SetShape::Segment(s) => s.eval(rng.random::<f64>()),
            SetShape::Circle { height } => Point::new(&[rng.random::<f64>() * 2.0 * PI, *height]),
        }
    }
}

/// Arg-min over `s ∈ [0, 1]` of `d(x, σ(s))`: coarse sampling then golden section.
fn nearest_parameter(m: &ManifoldModel, s: &GeodesicSegment, x: &Point) -> f64 {
    const COARSE: usize = 64;
    let dist_at = |t: f64| m.dist_unchecked(x.coords(), s.eval(t).coords());
    let best = (0..=COARSE)
        .map(|k| k as f64 / COARSE as f64)
        .map(|t| (t, dist_at(t)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(t, _)| t)
        .unwrap_or(0.0);
    let h = 1.0 / COARSE as f64;
    let (lo, hi) = ((best - h).max(0.0), (best + h).min(1.0));
    let t = golden_section(&dist_at, lo, hi, 1e-13).0;
    // endpoints are often the exact answer
    [lo, t, hi, best]
        .into_iter()
        .min_by(|a, b| dist_at(*a).total_cmp(&dist_at(*b)))
        .unwrap_or(t)
}

/// Golden-section search for a unimodal function on `[a, b]`.
///
/// Infinite values are treated as lying outside an interval domain that
/// contains the minimizer, which keeps the search valid for convex
/// extended-real functions.
pub fn golden_section<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc.is_infinite() && fd.is_infinite() {
            a = c;
            b = d;
            c = b - INV_PHI * (b - a);
            d = a + INV_PHI * (b - a);
            fc = f(c);
            fd = f(d);
        } else if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

// ---- isometries --------------------------------------------------------------

#[derive(Clone, Debug)]
enum IsoKind {
    Identity,
    /// `x ↦ A x + b` on the model's coordinates.
    Affine {
        matrix: DMatrix<f64>,
        shift: DVector<f64>,
    },
    /// Lorentz matrix acting through the hyperboloid image of the half-plane.
    HalfPlane(DMatrix<f64>),
    CylinderShift {
        dtheta: f64,
        dz: f64,
    },
    CylinderReflection {
        theta: f64,
        z: f64,
    },
}

/// An isometry of a model onto itself.
#[derive(Clone, Debug)]
pub struct Isometry {
    model: ManifoldModel,
    kind: IsoKind,
    description: String,
}

impl Isometry {
    pub fn identity(model: ManifoldModel) -> Self {
        Isometry {
            model,
            kind: IsoKind::Identity,
            description: "identity".into(),
        }
    }

    /// Rotation by `angle` about `center` (in the first chart plane for
    /// dimensions above two).
    pub fn rotation_about(model: ManifoldModel, center: &Point, angle: f64) -> Result<Self> {
        model.check_point(center)?;
        if model.dimension() < 2 {
            return Err(Error::InvalidInput(
                "rotations need dimension at least 2".into(),
            ));
        }
        let kind = match model {
            ManifoldModel::Euclidean(n) => {
                let mut r = DMatrix::identity(n, n);
                plane_rotation(&mut r, 0, 1, angle);
                let c = DVector::from_column_slice(center.coords());
                let shift = &c - &r * &c;
                IsoKind::Affine { matrix: r, shift }
            }
            ManifoldModel::Hyperboloid(n) => IsoKind::Affine {
                matrix: lorentz_rotation(center.coords(), angle),
                shift: DVector::zeros(n + 1),
            },
            ManifoldModel::PoincareHalfPlane => {
                let h = half_plane_lift(center.coords());
                IsoKind::HalfPlane(lorentz_rotation(&h, angle))
            }
            ManifoldModel::Sphere => IsoKind::Affine {
                matrix: rodrigues(center.coords(), angle),
                shift: DVector::zeros(3),
            },
            ManifoldModel::Cylinder => {
                return Err(Error::InvalidInput(
                    "the cylinder has no rotations about a point; use cylinder_shift or point_reflection".into(),
                ))
            }
        };
        Ok(Isometry {
            model,
            kind,
            description: format!("rotation(center={:?}, angle={angle})", center.coords()),
        })
    }

    /// Geodesic symmetry `exp_c(v) ↦ exp_c(-v)`.
    pub fn point_reflection(model: ManifoldModel, center: &Point) -> Result<Self> {
        model.check_point(center)?;
        let c = center.coords();
        let kind = match model {
            ManifoldModel::Euclidean(n) => IsoKind::Affine {
                matrix: -DMatrix::<f64>::identity(n, n),
                shift: DVector::from_column_slice(c) * 2.0,
            },
            ManifoldModel::Hyperboloid(n) => IsoKind::Affine {
                matrix: lorentz_reflection(c),
                shift: DVector::zeros(n + 1),
            },
            ManifoldModel::PoincareHalfPlane => {
                IsoKind::HalfPlane(lorentz_reflection(&half_plane_lift(c)))
            }
            ManifoldModel::Sphere => IsoKind::Affine {
                matrix: rodrigues(c, PI),
                shift: DVector::zeros(3),
            },
            ManifoldModel::Cylinder => IsoKind::CylinderReflection {
                theta: c[0],
                z: c[1],
            },
        };
        Ok(Isometry {
            model,
            kind,
            description: format!("point_reflection(center={c:?})"),
        })
    }

    /// `(θ, z) ↦ (θ + dθ, z + dz)` on the cylinder.
    pub fn cylinder_shift(dtheta: f64, dz: f64) -> Self {
        Isometry {
            model: ManifoldModel::Cylinder,
            kind: IsoKind::CylinderShift { dtheta, dz },
            description: format!("cylinder_shift(dtheta={dtheta}, dz={dz})"),
        }
    }

    /// `x ↦ x + shift` on Euclidean space.
    pub fn translation(model: ManifoldModel, shift: &[f64]) -> Result<Self> {
        match model {
            ManifoldModel::Euclidean(n) if shift.len() == n => Ok(Isometry {
                model,
                kind: IsoKind::Affine {
                    matrix: DMatrix::identity(n, n),
                    shift: DVector::from_column_slice(shift),
                },
                description: format!("translation({shift:?})"),
            }),
            _ => Err(Error::InvalidInput(
                "translations are defined on Euclidean space only".into(),
            )),
        }
    }

    pub fn model(&self) -> ManifoldModel {
        self.model
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn apply(&self, p: &Point) -> Point {
        let c = p.coords();
        let out = match &self.kind {
            IsoKind::Identity => return p.clone(),
            IsoKind::Affine { matrix, shift } => {
                let y = matrix * DVector::from_column_slice(c) + shift;
                Point::new(y.as_slice())
            }
            IsoKind::HalfPlane(l) => {
                let y = l * DVector::from_column_slice(&half_plane_lift(c));
                let yy = 1.0 / (y[0] - y[1]);
                Point::new(&[y[2] * yy, yy])
            }
            IsoKind::CylinderShift { dtheta, dz } => Point::new(&[c[0] + dtheta, c[1] + dz]),
            IsoKind::CylinderReflection { theta, z } => {
                Point::new(&[2.0 * theta - c[0], 2.0 * z - c[1]])
            }
        };
        self.model.retract_point(&out)
    }

    /// Differential of the isometry.
    pub fn apply_tangent(&self, v: &Tangent) -> Tangent {
        let base = self.apply(v.base());
        let w = v.vec();
        match &self.kind {
            IsoKind::Identity => v.clone(),
            IsoKind::Affine { matrix, .. } => {
                Tangent::new(base, (matrix * DVector::from_column_slice(w)).as_slice())
            }
            IsoKind::HalfPlane(l) => {
                // push to the hyperboloid, apply, pull back
                let p = v.base().coords();
                let (x, y) = (p[0], p[1]);
                let y2 = y * y;
                let hv = DVector::from_column_slice(&[
                    x / y * w[0] + (y2 - x * x - 1.0) / (2.0 * y2) * w[1],
                    x / y * w[0] + (y2 - x * x + 1.0) / (2.0 * y2) * w[1],
                    w[0] / y - x / y2 * w[1],
                ]);
                let hw = l * hv;
                let (bx, by) = (base.coords()[0], base.coords()[1]);
                let dy = -by * by * (hw[0] - hw[1]);
                let dx = by * hw[2] + bx / by * dy;
                Tangent::new(base, &[dx, dy])
            }
            IsoKind::CylinderShift { .. } => Tangent::new(base, w),
            IsoKind::CylinderReflection { .. } => Tangent::new(base, &[-w[0], -w[1]]),
        }
    }
}

fn plane_rotation(m: &mut DMatrix<f64>, i: usize, j: usize, angle: f64) {
    let (s, c) = angle.sin_cos();
    m[(i, i)] = c;
    m[(i, j)] = -s;
    m[(j, i)] = s;
    m[(j, j)] = c;
}

/// Lorentz boost taking the origin `(1, 0, ..., 0)` to `p`.
fn boost(p: &[f64]) -> DMatrix<f64> {
    let n = p.len();
    let mut b = DMatrix::identity(n, n);
    b[(0, 0)] = p[0];
    for i in 1..n {
        b[(0, i)] = p[i];
        b[(i, 0)] = p[i];
        for j in 1..n {
            b[(i, j)] += p[i] * p[j] / (1.0 + p[0]);
        }
    }
    b
}

fn boost_inverse(p: &[f64]) -> DMatrix<f64> {
    let mut q = p.to_vec();
    q[1..].iter_mut().for_each(|x| *x = -*x);
    boost(&q)
}

fn lorentz_rotation(center: &[f64], angle: f64) -> DMatrix<f64> {
    let n = center.len();
    let mut r = DMatrix::identity(n, n);
    plane_rotation(&mut r, 1, 2, angle);
    boost(center) * r * boost_inverse(center)
}

fn lorentz_reflection(center: &[f64]) -> DMatrix<f64> {
    let n = center.len();
    let mut r = -DMatrix::<f64>::identity(n, n);
    r[(0, 0)] = 1.0;
    boost(center) * r * boost_inverse(center)
}

fn rodrigues(axis: &[f64], angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    let k = DMatrix::from_row_slice(
        3,
        3,
        &[
            0.0, -axis[2], axis[1], axis[2], 0.0, -axis[0], -axis[1], axis[0], 0.0,
        ],
    );
    let a = DVector::from_column_slice(axis);
    DMatrix::identity(3, 3) * c + k * s + (&a * a.transpose()) * (1.0 - c)
}

fn half_plane_lift(c: &[f64]) -> Vec<f64> {
    let (x, y) = (c[0], c[1]);
    let a = x * x + y * y;
    vec![(a + 1.0) / (2.0 * y), (a - 1.0) / (2.0 * y), x / y]
}

// ---- scalar fields -----------------------------------------------------------

type EvalFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
type SubgradFn = Arc<dyn Fn(&Point) -> Option<Tangent> + Send + Sync>;

/// User-supplied field; metadata is whatever the caller vouches for.
#[derive(Clone)]
pub struct CustomField {
    pub label: String,
    pub eval: EvalFn,
    pub subgradient: Option<SubgradFn>,
    pub minoration: Option<Minoration>,
    pub convex: bool,
}

#[derive(Clone)]
enum FieldKind {
    Constant(f64),
    /// `½ d(·, center)²`
    SquaredDistance {
        center: Point,
    },
    Distance {
        center: Point,
    },
    Indicator(ConvexSet),
    /// `d(·, C)²`
    SetDistanceSquared(ConvexSet),
    /// `log(-⟨x, base + direction⟩_L)`, the Busemann function of the ray from
    /// `base` with unit velocity `direction`.
    Busemann {
        base: Point,
        null: Vec<f64>,
    },
    /// `⟨a, x⟩ + b` on Euclidean space.
    Linear {
        gradient: Vec<f64>,
        offset: f64,
    },
    Scaled {
        factor: f64,
        inner: Box<ScalarField>,
    },
    Max(Vec<ScalarField>),
    Custom(CustomField),
}

/// Known minimizer set of a field.
#[derive(Clone, Debug)]
pub enum MinimizerSet {
    Points(Vec<Point>),
    Set(ConvexSet),
    Everywhere,
}

impl MinimizerSet {
    pub fn distance(&self, model: &ManifoldModel, x: &Point) -> f64 {
        match self {
            MinimizerSet::Points(ps) => ps
                .iter()
                .map(|p| model.dist_unchecked(p.coords(), x.coords()))
                .fold(f64::INFINITY, f64::min),
            MinimizerSet::Set(c) => c.distance(x),
            MinimizerSet::Everywhere => 0.0,
        }
    }
}

/// An extended-real function `M → ℝ ∪ {+∞}`.
#[derive(Clone)]
pub struct ScalarField {
    model: ManifoldModel,
    kind: FieldKind,
    symmetries: Vec<Isometry>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("model", &self.model)
            .field("label", &self.label())
            .finish()
    }
}

impl ScalarField {
    fn build(model: ManifoldModel, kind: FieldKind) -> Self {
        ScalarField {
            model,
            kind,
            symmetries: Vec::new(),
        }
    }

    pub fn constant(model: ManifoldModel, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Parameter("constant must be finite".into()));
        }
        Ok(Self::build(model, FieldKind::Constant(value)))
    }

    /// `x ↦ ½ d(x, center)²`.
    pub fn squared_distance(model: ManifoldModel, center: Point) -> Result<Self> {
        model.check_point(&center)?;
        Ok(Self::build(model, FieldKind::SquaredDistance { center }))
    }

    pub fn distance(model: ManifoldModel, center: Point) -> Result<Self> {
        model.check_point(&center)?;
        Ok(Self::build(model, FieldKind::Distance { center }))
    }

    /// `δ_C`: zero on `C`, `+∞` elsewhere.
    pub fn indicator(set: ConvexSet) -> Self {
        Self::build(set.model(), FieldKind::Indicator(set))
    }

    /// `x ↦ d(x, C)²`.
    pub fn set_distance_squared(set: ConvexSet) -> Self {
        Self::build(set.model(), FieldKind::SetDistanceSquared(set))
    }

    /// Busemann function of the geodesic ray `t ↦ exp(base, t·direction)` on
    /// the hyperboloid, normalized to vanish at `base`.
    pub fn busemann(model: ManifoldModel, direction: &Tangent) -> Result<Self> {
        if !matches!(model, ManifoldModel::Hyperboloid(_)) {
            return Err(Error::InvalidInput(
                "Busemann fields are provided on the hyperboloid".into(),
            ));
        }
        model.check_tangent(direction)?;
        let base = direction.base().clone();
        let n = model.norm(&base, direction)?;
        if n < 1e-12 {
            return Err(Error::Parameter(
                "Busemann direction must be nonzero".into(),
            ));
        }
        let null = base
            .coords()
            .iter()
            .zip(direction.vec())
            .map(|(p, v)| p + v / n)
            .collect();
        Ok(Self::build(model, FieldKind::Busemann { base, null }))
    }

    pub fn linear(model: ManifoldModel, gradient: &[f64], offset: f64) -> Result<Self> {
        match model {
            ManifoldModel::Euclidean(n) if gradient.len() == n => Ok(Self::build(
                model,
                FieldKind::Linear {
                    gradient: gradient.to_vec(),
                    offset,
                },
            )),
            _ => Err(Error::InvalidInput(
                "linear fields live on Euclidean space".into(),
            )),
        }
    }

    /// `k·f` for `k ≥ 0`.
    pub fn scaled(factor: f64, inner: ScalarField) -> Result<Self> {
        if !(factor >= 0.0 && factor.is_finite()) {
            return Err(Error::Parameter(
                "scale factor must be finite and nonnegative".into(),
            ));
        }
        let symmetries = inner.symmetries.clone();
        let mut f = Self::build(
            inner.model,
            FieldKind::Scaled {
                factor,
                inner: Box::new(inner),
            },
        );
        f.symmetries = symmetries;
        Ok(f)
    }

    pub fn max(fields: Vec<ScalarField>) -> Result<Self> {
        let model = fields
            .first()
            .map(|f| f.model)
            .ok_or_else(|| Error::Parameter("max of an empty family".into()))?;
        if fields.iter().any(|f| f.model != model) {
            return Err(Error::InvalidInput(
                "max of fields on different models".into(),
            ));
        }
        Ok(Self::build(model, FieldKind::Max(fields)))
    }

    pub fn custom(model: ManifoldModel, field: CustomField) -> Self {
        Self::build(model, FieldKind::Custom(field))
    }

    /// Declares an isometry leaving the field invariant.
    pub fn with_symmetry(mut self, iso: Isometry) -> Result<Self> {
        if iso.model() != self.model {
            return Err(Error::InvalidInput(
                "isometry belongs to another model".into(),
            ));
        }
        self.symmetries.push(iso);
        Ok(self)
    }

    pub fn model(&self) -> ManifoldModel {
        self.model
    }

    pub fn symmetries(&self) -> &[Isometry] {
        &self.symmetries
    }

    pub fn label(&self) -> String {
        match &self.kind {
            FieldKind::Constant(c) => format!("constant({c})"),
            FieldKind::SquaredDistance { center } => format!("half_sq_dist({:?})", center.coords()),
            FieldKind::Distance { center } => format!("dist({:?})", center.coords()),
            FieldKind::Indicator(c) => format!("indicator[{}]", c.description()),
            FieldKind::SetDistanceSquared(c) => format!("sq_dist_to[{}]", c.description()),
            FieldKind::Busemann { base, .. } => format!("busemann(base={:?})", base.coords()),
            FieldKind::Linear { gradient, offset } => format!("linear({gradient:?}, {offset})"),
            FieldKind::Scaled { factor, inner } => format!("{factor}*{}", inner.label()),
            FieldKind::Max(fs) => format!(
                "max({})",
                fs.iter().map(|f| f.label()).collect::<Vec<_>>().join(", ")
            ),
            FieldKind::Custom(c) => c.label.clone(),
        }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        let m = &self.model;
        match &self.kind {
            FieldKind::Constant(c) => *c,
            FieldKind::SquaredDistance { center } => {
                0.5 * m.dist_unchecked(x.coords(), center.coords()).powi(2)
            }
            FieldKind::Distance { center } => m.dist_unchecked(x.coords(), center.coords()),
            FieldKind::Indicator(c) => {
                if c.contains(x) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            FieldKind::SetDistanceSquared(c) => c.distance(x).powi(2),
            FieldKind::Busemann { null, .. } => (-minkowski(x.coords(), null)).ln(),
            FieldKind::Linear { gradient, offset } => {
                gradient
                    .iter()
                    .zip(x.coords())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    + offset
            }
            FieldKind::Scaled { factor, inner } => {
                let v = inner.eval(x);
                if *factor == 0.0 && v.is_finite() {
                    0.0
                } else {
                    factor * v
                }
            }
            FieldKind::Max(fs) => fs
                .iter()
                .map(|f| f.eval(x))
                .fold(f64::NEG_INFINITY, f64::max),
            FieldKind::Custom(c) => (c.eval)(x),
        }
    }

    /// A witness `ζ` of the (viscosity) subdifferential at `x`, when known.
    ///
    /// At the center of a distance field every vector of norm at most one is
    /// a subgradient; the first basis vector is returned.
    pub fn subgradient(&self, x: &Point) -> Option<Tangent> {
        let m = &self.model;
        match &self.kind {
            FieldKind::Constant(_) => Some(m.zero_tangent(x)),
            FieldKind::SquaredDistance { center } => m.log(x, center).ok().map(|v| v.scaled(-1.0)),
            FieldKind::Distance { center } => {
                let d = m.dist_unchecked(x.coords(), center.coords());
                if d == 0.0 {
                    return m.tangent_basis(x).into_iter().next();
                }
                m.log(x, center).ok().map(|v| v.scaled(-1.0 / d))
            }
            FieldKind::Indicator(c) => c.contains(x).then(|| m.zero_tangent(x)),
            FieldKind::SetDistanceSquared(c) => {
                m.log(x, &c.project(x)).ok().map(|v| v.scaled(-2.0))
            }
            FieldKind::Busemann { null, .. } => {
                let xc = x.coords();
                let s = -minkowski(xc, null);
                // Riemannian gradient: projection of -w / s onto T_x
                let mut g: Vec<f64> = null.iter().map(|w| -w / s).collect();
                let k = minkowski(xc, &g);
                g.iter_mut().zip(xc).for_each(|(gi, xi)| *gi += k * xi);
                Some(Tangent::new(x.clone(), &g))
            }
            FieldKind::Linear { gradient, .. } => Some(Tangent::new(x.clone(), gradient)),
            FieldKind::Scaled { factor, inner } => inner.subgradient(x).map(|z| z.scaled(*factor)),
            FieldKind::Max(fs) => fs
                .iter()
                .max_by(|a, b| a.eval(x).total_cmp(&b.eval(x)))
                .and_then(|f| f.subgradient(x)),
            FieldKind::Custom(c) => c.subgradient.as_ref().and_then(|g| g(x)),
        }
    }

    /// Certified quadratic minoration carried by the field, if any.
    pub fn minoration(&self) -> Option<Minoration> {
        let m = &self.model;
        let at = |c: f64, anchor: &Point| {
            Some(Minoration {
                c,
                anchor: anchor.clone(),
            })
        };
        match &self.kind {
            FieldKind::Constant(v) => at(2.0 * (-v).max(0.0), &m.origin()),
            FieldKind::SquaredDistance { center } | FieldKind::Distance { center } => {
                at(0.0, center)
            }
            FieldKind::Indicator(c) | FieldKind::SetDistanceSquared(c) => at(0.0, &c.anchor()),
            // b ≥ -d(·, base) ≥ -(1 + d²)/2
            FieldKind::Busemann { base, .. } => at(1.0, base),
            FieldKind::Linear { gradient, offset } => {
                let a = gradient.iter().map(|x| x * x).sum::<f64>().sqrt();
                at(a + 2.0 * offset.abs(), &m.origin())
            }
            FieldKind::Scaled { factor, inner } => inner.minoration().map(|mut mm| {
                mm.c *= factor;
                mm
            }),
            FieldKind::Max(fs) => fs.first().and_then(|f| f.minoration()),
            FieldKind::Custom(c) => c.minoration.clone(),
        }
    }

    /// Lipschitz constant of the field on `B(center, radius)`, when known.
    pub fn lipschitz_on_ball(&self, center: &Point, radius: f64) -> Option<f64> {
        let m = &self.model;
        match &self.kind {
            FieldKind::Constant(_) => Some(0.0),
            FieldKind::SquaredDistance { center: p } => {
                Some(m.dist_unchecked(center.coords(), p.coords()) + radius)
            }
            FieldKind::Distance { .. } | FieldKind::Busemann { .. } => Some(1.0),
            FieldKind::Indicator(_) | FieldKind::Custom(_) => None,
            FieldKind::SetDistanceSquared(c) => Some(2.0 * (c.distance(center) + radius)),
            FieldKind::Linear { gradient, .. } => {
                Some(gradient.iter().map(|x| x * x).sum::<f64>().sqrt())
            }
            FieldKind::Scaled { factor, inner } => {
                inner.lipschitz_on_ball(center, radius).map(|l| l * factor)
            }
            FieldKind::Max(fs) => fs
                .iter()
                .map(|f| f.lipschitz_on_ball(center, radius))
                .try_fold(0.0_f64, |acc, l| l.map(|l| acc.max(l))),
        }
    }

    /// Convex set outside of which the field is `+∞`.
    pub fn domain_hint(&self) -> Option<&ConvexSet> {
        match &self.kind {
            FieldKind::Indicator(c) => Some(c),
            FieldKind::Scaled { inner, .. } => inner.domain_hint(),
            FieldKind::Max(fs) => fs.iter().find_map(|f| f.domain_hint()),
            _ => None,
        }
    }

    /// Points where the field is not differentiable and that may attain the
    /// proximal infimum from `x`; the envelope solver adds them to its starts.
    pub fn seed_points(&self, x: &Point) -> Vec<Point> {
        match &self.kind {
            FieldKind::Distance { center } => vec![center.clone()],
            FieldKind::Indicator(c) => vec![c.project(x)],
            FieldKind::Scaled { inner, .. } => inner.seed_points(x),
            FieldKind::Max(fs) => fs.iter().flat_map(|f| f.seed_points(x)).collect(),
            _ => Vec::new(),
        }
    }

    pub fn minimizers(&self) -> Option<MinimizerSet> {
        match &self.kind {
            FieldKind::Constant(_) => Some(MinimizerSet::Everywhere),
            FieldKind::SquaredDistance { center } | FieldKind::Distance { center } => {
                Some(MinimizerSet::Points(vec![center.clone()]))
            }
            FieldKind::Indicator(c) | FieldKind::SetDistanceSquared(c) => {
                Some(MinimizerSet::Set(c.clone()))
            }
            FieldKind::Scaled { factor, inner } if *factor > 0.0 => inner.minimizers(),
            FieldKind::Scaled { .. } => Some(MinimizerSet::Everywhere),
            _ => None,
        }
    }

    /// Whether the field is geodesically convex on its model.
    pub fn is_convex(&self) -> bool {
        match &self.kind {
            FieldKind::Constant(_) | FieldKind::Linear { .. } | FieldKind::Indicator(_) => true,
            FieldKind::SquaredDistance { .. }
            | FieldKind::Distance { .. }
            | FieldKind::SetDistanceSquared(_)
            | FieldKind::Busemann { .. } => self.model.is_cartan_hadamard(),
            FieldKind::Scaled { inner, .. } => inner.is_convex(),
            FieldKind::Max(fs) => fs.iter().all(|f| f.is_convex()),
            FieldKind::Custom(c) => c.convex,
        }
    }

    /// Finite everywhere, so that uniform-continuity statements apply.
    pub fn is_finite_valued(&self) -> bool {
        self.domain_hint().is_none() && !matches!(&self.kind, FieldKind::Custom(_))
    }
}

/// `c = 2(‖ζ‖ + |f(x₀)|)` from a subgradient witness `ζ` at `x₀`.
pub fn quadratic_minoration(f: &ScalarField, x0: &Point) -> Result<f64> {
    let m = f.model();
    let zeta = f.subgradient(x0).ok_or_else(|| {
        Error::MetadataMissing(format!("no subgradient witness for {} at x0", f.label()))
    })?;
    let fx0 = f.eval(x0);
    if !fx0.is_finite() {
        return Err(Error::InvalidInput("f(x0) must be finite".into()));
    }
    Ok(2.0 * (m.norm(x0, &zeta)? + fx0.abs()))
}

/// Non-certified minoration constant fitted by sampling `f` on geodesic
/// spheres of growing radius around `x0`.
pub fn heuristic_minoration(f: &ScalarField, x0: &Point, seed: u64) -> f64 {
    let m = f.model();
    let mut rng = sampling::rng(seed);
    let mut needed = 0.0_f64;
    for k in 0..10 {
        let r = 0.25 * 2f64.powi(k);
        for _ in 0..24 {
            let v = sampling::random_unit_tangent(&m, x0, &mut rng);
            let y = match m.exp(x0, &v, r) {
                Ok(y) => y,
                Err(_) => continue,
            };
            let fy = f.eval(&y);
            if fy.is_finite() {
                let d = m.dist_unchecked(x0.coords(), y.coords());
                needed = needed.max(-2.0 * fy / (1.0 + d * d));
            }
        }
    }
    let fx0 = f.eval(x0);
    if fx0.is_finite() {
        needed = needed.max(-2.0 * fx0);
    }
    1.5 * needed
}

// ---- named construction --------------------------------------------------------

/// Declared symmetry in a field description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IsometrySpec {
    Identity,
    Rotation {
        center: Vec<f64>,
        angle: f64,
    },
    PointReflection {
        center: Vec<f64>,
    },
    CylinderShift {
        dtheta: f64,
        #[serde(default)]
        dz: f64,
    },
    Translation {
        shift: Vec<f64>,
    },
}

impl IsometrySpec {
    pub fn build(&self, model: ManifoldModel) -> Result<Isometry> {
        match self {
            IsometrySpec::Identity => Ok(Isometry::identity(model)),
            IsometrySpec::Rotation { center, angle } => {
                Isometry::rotation_about(model, &model.point(center)?, *angle)
            }
            IsometrySpec::PointReflection { center } => {
                Isometry::point_reflection(model, &model.point(center)?)
            }
            IsometrySpec::CylinderShift { dtheta, dz } => {
                if model != ManifoldModel::Cylinder {
                    return Err(Error::InvalidInput(
                        "cylinder_shift needs the cylinder".into(),
                    ));
                }
                Ok(Isometry::cylinder_shift(*dtheta, *dz))
            }
            IsometrySpec::Translation { shift } => Isometry::translation(model, shift),
        }
    }
}

/// Named builtin field with its parameter list, as addressed from configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// `½ d(·, center)²`
    HalfSquaredDistance {
        center: Vec<f64>,
    },
    /// `weight · ½ d(·, center)²`; weight 2 gives `d(·, center)²`.
    WeightedSquaredDistance {
        center: Vec<f64>,
        weight: f64,
    },
    Distance {
        center: Vec<f64>,
    },
    IndicatorPoint {
        center: Vec<f64>,
    },
    IndicatorBall {
        center: Vec<f64>,
        radius: f64,
    },
    IndicatorSegment {
        start: Vec<f64>,
        end: Vec<f64>,
    },
    SegmentDistanceSquared {
        start: Vec<f64>,
        end: Vec<f64>,
    },
    CircleDistanceSquared {
        height: f64,
    },
    Busemann {
        base: Vec<f64>,
        direction: Vec<f64>,
    },
    Linear {
        gradient: Vec<f64>,
        offset: f64,
    },
    Max {
        parts: Vec<FieldSpec>,
    },
}

impl FieldSpec {
    pub fn build(&self, model: ManifoldModel) -> Result<ScalarField> {
        let pt = |c: &Vec<f64>| model.point(c);
        match self {
            FieldSpec::Constant { value } => ScalarField::constant(model, *value),
            FieldSpec::HalfSquaredDistance { center } => {
                ScalarField::squared_distance(model, pt(center)?)
            }
            FieldSpec::WeightedSquaredDistance { center, weight } => {
                ScalarField::scaled(*weight, ScalarField::squared_distance(model, pt(center)?)?)
            }
            FieldSpec::Distance { center } => ScalarField::distance(model, pt(center)?),
            FieldSpec::IndicatorPoint { center } => Ok(ScalarField::indicator(
                ConvexSet::singleton(model, pt(center)?)?,
            )),
            FieldSpec::IndicatorBall { center, radius } => Ok(ScalarField::indicator(
                ConvexSet::ball(model, pt(center)?, *radius)?,
            )),
            FieldSpec::IndicatorSegment { start, end } => Ok(ScalarField::indicator(
                ConvexSet::segment(model, pt(start)?, pt(end)?)?,
            )),
            FieldSpec::SegmentDistanceSquared { start, end } => Ok(
                ScalarField::set_distance_squared(ConvexSet::segment(model, pt(start)?, pt(end)?)?),
            ),
            FieldSpec::CircleDistanceSquared { height } => {
                if model != ManifoldModel::Cylinder {
                    return Err(Error::InvalidInput(
                        "circle_distance_squared needs the cylinder".into(),
                    ));
                }
                Ok(ScalarField::set_distance_squared(
                    ConvexSet::cylinder_circle(*height)?,
                ))
            }
            FieldSpec::Busemann { base, direction } => {
                let b = pt(base)?;
                let v = model.tangent(&b, direction)?;
                ScalarField::busemann(model, &v)
            }
            FieldSpec::Linear { gradient, offset } => ScalarField::linear(model, gradient, *offset),
            FieldSpec::Max { parts } => ScalarField::max(
                parts
                    .iter()
                    .map(|p| p.build(model))
                    .collect::<Result<_>>()?,
            ),
        }
    }
}

/// Builds a named builtin field on `model`.
pub fn builtin_field(model: ManifoldModel, spec: &FieldSpec) -> Result<ScalarField> {
    spec.build(model)
}
