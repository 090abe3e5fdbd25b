use std::fmt;
use std::path::PathBuf;

use infconv::envelope::EnvelopeParams;
use infconv::field::{FieldSpec, IsometrySpec, ScalarField};
use infconv::manifold::{ManifoldModel, Point};
use infconv::sampling::Region;
use infconv::verify::Tolerance;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub manifold: ManifoldSection,
    pub field: FieldSpec,
    #[serde(default)]
    pub run: RunSection,
    pub region: RegionSection,
    #[serde(default)]
    pub tolerances: Tolerance,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub hj: HjSection,
    /// Isometries the field is declared invariant under.
    #[serde(default, rename = "symmetry", skip_serializing_if = "Vec::is_empty")]
    pub symmetries: Vec<IsometrySpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSection {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Bundle {
    MainCorollary,
    CartanHadamard,
    Localization,
    Symmetry,
    C1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub lambda: Vec<f64>,
    pub bundle: Bundle,
    /// Segment length for the counterexample search.
    pub epsilon: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            lambda: vec![0.1, 1.0],
            bundle: Bundle::CartanHadamard,
            epsilon: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Lattice points per chart axis.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Random samples for the checks.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_geodesics")]
    pub geodesics: usize,
}

fn default_resolution() -> usize {
    9
}

fn default_samples() -> usize {
    50
}

fn default_geodesics() -> usize {
    100
}

/// Solver knobs; `λ` comes from `[run]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub eta: f64,
    pub grid_density: f64,
    pub refine_tol: f64,
    pub max_refine_iters: usize,
    pub multistart_count: usize,
    pub max_grid_points: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let p = EnvelopeParams::default();
        SolverSection {
            eta: p.eta,
            grid_density: p.grid_density,
            refine_tol: p.refine_tol,
            max_refine_iters: p.max_refine_iters,
            multistart_count: p.multistart_count,
            max_grid_points: p.max_grid_points,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HjSection {
    pub times: Vec<f64>,
    /// Finite-difference step of the residual.
    pub step: f64,
}

impl Default for HjSection {
    fn default() -> Self {
        HjSection {
            times: vec![0.25, 0.5, 1.0],
            step: 1e-4,
        }
    }
}

/// A configuration problem, with the offending line when it can be located.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Everything a command needs, built and checked from a [`RunConfig`].
pub struct Prepared {
    pub model: ManifoldModel,
    pub field: ScalarField,
    pub lambdas: Vec<f64>,
    pub region: Region,
    pub grid: Vec<Point>,
    pub params: EnvelopeParams,
    pub tolerance: Tolerance,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().trim().to_string(),
        })
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn model(&self) -> Result<ManifoldModel, String> {
        ManifoldModel::from_name(&self.manifold.name, self.manifold.dimension)
            .map_err(|e| e.to_string())
    }

    /// Validates every numeric constraint and builds the run objects.
    /// `text` is the source the config was parsed from, for line numbers.
    pub fn prepare(&self, text: Option<&str>) -> Result<Prepared, ConfigError> {
        let fail = |section: &str, key: &str, message: String| ConfigError {
            line: text.and_then(|t| locate(t, section, key)),
            message: format!("[{section}] {key}: {message}"),
        };
        let model = self.model().map_err(|m| fail("manifold", "name", m))?;
        let mut field = self
            .field
            .build(model)
            .map_err(|e| fail("field", "name", e.to_string()))?;
        for s in &self.symmetries {
            let iso = s
                .build(model)
                .map_err(|e| fail("symmetry", "kind", e.to_string()))?;
            field = field
                .with_symmetry(iso)
                .map_err(|e| fail("symmetry", "kind", e.to_string()))?;
        }

        if self.run.lambda.is_empty() {
            return Err(fail(
                "run",
                "lambda",
                "at least one value is required".into(),
            ));
        }
        if let Some(l) = self
            .run
            .lambda
            .iter()
            .find(|l| !(**l > 0.0 && l.is_finite()))
        {
            return Err(fail(
                "run",
                "lambda",
                format!("values must be positive, got {l}"),
            ));
        }
        if let Some(mm) = field.minoration() {
            if mm.c > 0.0 {
                let bound = 1.0 / (2.0 * mm.c);
                if let Some(l) = self.run.lambda.iter().find(|l| **l >= bound) {
                    return Err(fail(
                        "run",
                        "lambda",
                        format!("{l} is not below 1/(2c) = {bound} for this field"),
                    ));
                }
            }
        }
        if !(self.run.epsilon > 0.0 && self.run.epsilon < 1.0) {
            return Err(fail(
                "run",
                "epsilon",
                format!("must lie in (0, 1), got {}", self.run.epsilon),
            ));
        }

        let r = &self.region;
        let center = model
            .point(&r.center)
            .map_err(|e| fail("region", "center", e.to_string()))?;
        let region = Region::new(&model, center.clone(), r.radius)
            .map_err(|e| fail("region", "radius", e.to_string()))?;
        if r.resolution < 2 {
            return Err(fail(
                "region",
                "resolution",
                "need at least 2 points per axis".into(),
            ));
        }
        if r.samples == 0 {
            return Err(fail("region", "samples", "must be positive".into()));
        }
        if r.geodesics == 0 {
            return Err(fail("region", "geodesics", "must be positive".into()));
        }
        let grid = infconv::sampling::SampleGrid::new(center, r.radius, r.resolution)
            .map_err(|e| fail("region", "resolution", e.to_string()))?
            .points(&model);

        let t = self.tolerances;
        if !(t.abs >= 0.0 && t.abs.is_finite()) {
            return Err(fail(
                "tolerances",
                "abs",
                "must be a nonnegative number".into(),
            ));
        }
        if !(t.rel >= 0.0 && t.rel.is_finite()) {
            return Err(fail(
                "tolerances",
                "rel",
                "must be a nonnegative number".into(),
            ));
        }

        let s = &self.solver;
        let params = EnvelopeParams {
            lambda: self.run.lambda[0],
            eta: s.eta,
            grid_density: s.grid_density,
            refine_tol: s.refine_tol,
            max_refine_iters: s.max_refine_iters,
            multistart_count: s.multistart_count,
            max_grid_points: s.max_grid_points,
        }
        .validated()
        .map_err(|e| fail("solver", "eta", e.to_string()))?;

        let h = &self.hj;
        if !(h.step > 0.0 && h.step.is_finite()) {
            return Err(fail(
                "hj",
                "step",
                format!("must be positive, got {}", h.step),
            ));
        }
        if let Some(bad) = h.times.iter().find(|t| !(**t > h.step && t.is_finite())) {
            return Err(fail(
                "hj",
                "times",
                format!("times must exceed the step, got {bad}"),
            ));
        }

        Ok(Prepared {
            model,
            field,
            lambdas: self.run.lambda.clone(),
            region,
            grid,
            params,
            tolerance: t,
        })
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]` (or `[[section]]`), or of the header.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line
                .trim_matches(|c| c == '[' || c == ']')
                .trim()
                .to_string();
            if current == section && header.is_none() {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}
