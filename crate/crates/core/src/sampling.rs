//! Seeded sampling of points, directions and chart lattices.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::{ManifoldModel, Point, Tangent};

pub type SampleRng = ChaCha8Rng;

/// Portable, reproducible generator for a given seed.
pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform direction on the unit sphere of `ℝⁿ`.
pub fn random_unit_coeffs<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn random_unit_tangent<R: Rng>(model: &ManifoldModel, p: &Point, rng: &mut R) -> Tangent {
    let basis = model.tangent_basis(p);
    let c = random_unit_coeffs(rng, basis.len());
    model.combine(p, &basis, &c)
}

/// A geodesic ball `B(center, radius)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Region {
    pub center: Point,
    pub radius: f64,
}

impl Region {
    pub fn new(model: &ManifoldModel, center: Point, radius: f64) -> Result<Self> {
        model.check_point(&center)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Parameter(format!(
                "region radius must be positive, got {radius}"
            )));
        }
        Ok(Region { center, radius })
    }

    /// Point drawn uniformly (in normal coordinates) from the ball.
    pub fn sample<R: Rng>(&self, model: &ManifoldModel, rng: &mut R) -> Point {
        let n = model.dimension();
        let dir = random_unit_coeffs(rng, n);
        let r = self.radius * rng.random::<f64>().powf(1.0 / n as f64);
        let coeffs: Vec<f64> = dir.iter().map(|d| d * r).collect();
        let basis = model.tangent_basis(&self.center);
        model
            .exp_chart(&self.center, &basis, &coeffs)
            .expect("basis is based at the region center")
    }

    pub fn contains(&self, model: &ManifoldModel, p: &Point) -> bool {
        model
            .dist(&self.center, p)
            .map(|d| d <= self.radius * (1.0 + 1e-12))
            .unwrap_or(false)
    }
}

/// Cubic lattice in the exponential chart at `center`, clipped to the ball
/// of radius `radius`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleGrid {
    pub center: Point,
    pub radius: f64,
    /// Lattice points along each chart axis (odd counts include the center).
    pub per_axis: usize,
}

impl SampleGrid {
    pub fn new(center: Point, radius: f64, per_axis: usize) -> Result<Self> {
        if per_axis < 2 || !(radius > 0.0) {
            return Err(Error::Parameter(
                "grid needs radius > 0 and at least 2 points per axis".into(),
            ));
        }
        Ok(SampleGrid {
            center,
            radius,
            per_axis,
        })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.radius / (self.per_axis - 1) as f64
    }

    /// Normal coordinates of the lattice points inside the ball.
    pub fn chart_points(&self, dim: usize) -> Vec<Vec<f64>> {
        lattice(dim, self.per_axis, self.radius)
    }

    pub fn points(&self, model: &ManifoldModel) -> Vec<Point> {
        let basis = model.tangent_basis(&self.center);
        self.chart_points(model.dimension())
            .iter()
            .map(|c| {
                model
                    .exp_chart(&self.center, &basis, c)
                    .expect("basis is based at the grid center")
            })
            .collect()
    }
}

/// Points of the `per_axis^dim` lattice on `[-radius, radius]^dim` lying in the closed ball.
pub fn lattice(dim: usize, per_axis: usize, radius: f64) -> Vec<Vec<f64>> {
    let h = 2.0 * radius / (per_axis - 1) as f64;
    let total = per_axis.pow(dim as u32);
    let mut out = Vec::new();
    for idx in 0..total {
        let mut rem = idx;
        let mut c = Vec::with_capacity(dim);
        for _ in 0..dim {
            c.push(-radius + h * (rem % per_axis) as f64);
            rem /= per_axis;
        }
        if c.iter().map(|x| x * x).sum::<f64>().sqrt() <= radius * (1.0 + 1e-12) {
            out.push(c);
        }
    }
    out
}
