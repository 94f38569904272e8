use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::io::load_binary;
use crate::field::{Grid, MapField, MetricField, Sym2};
use crate::schedule::Schedule;
use crate::stage_corrugate::{Mode, DEFAULT_GUARD};

/// Built-in metric families, or a field file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    Euclidean,
    /// `(1 + amplitude·exp(−|x|²/width²)) e`.
    ConformalGaussian {
        amplitude: f64,
        width: f64,
    },
    /// Binary metric field on the run grid.
    File {
        path: PathBuf,
    },
}

/// Built-in initial maps, or a field file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    /// `scale·(x₁, x₂, 0)`.
    ScaledFlat {
        scale: f64,
    },
    /// `(scale·x₁, scale·x₂, curvature·|x|²/2)`.
    Paraboloid {
        scale: f64,
        curvature: f64,
    },
    File {
        path: PathBuf,
    },
}

/// Where the iteration starts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Start {
    /// Twist the initial map, then build `u₀` from it.
    #[default]
    Short,
    /// Use the initial map as `u₀` directly, with the given `κ`. Meant for
    /// resuming from a saved map or studying the stages in isolation.
    Stage { kappa: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    /// Half side of the sampled square; at least the starting radius 1.5.
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

fn default_half_width() -> f64 {
    1.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Allowed `‖u − ū‖₀`.
    pub eps: f64,
    /// Twisting budget: `‖g − δ̄e − ũ♯e‖_α ≤ σ₁δ̄/2`.
    pub sigma1: f64,
    /// Radians of phase per grid cell.
    pub guard: f64,
    pub beltrami_tol: f64,
    pub beltrami_max_iter: usize,
    /// Relative tolerance of the per-stage error identity.
    pub bookkeeping: f64,
    /// Pairs closer than this are covered by the local proxy.
    pub injectivity_sep: f64,
    /// Nodes kept for the far-pair scan.
    pub injectivity_samples: usize,
    /// Hölder exponent of the convergence report; defaults to
    /// `0.9/(2bc)`.
    pub beta: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eps: 0.2,
            sigma1: 0.2,
            guard: DEFAULT_GUARD,
            beltrami_tol: 1e-12,
            beltrami_max_iter: 200,
            bookkeeping: 1e-8,
            injectivity_sep: 0.05,
            injectivity_samples: 2500,
            beta: None,
        }
    }
}

/// Constants that only exist up to existence statements; all of them are
/// inputs and recorded in the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Constants {
    /// `κ = kappa_fraction·δ̄/δ₁`: the defect left by `u₀` is this fraction
    /// of `δ̄`.
    pub kappa_fraction: f64,
    pub c_bar: f64,
    pub c_zero: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_doublings: usize,
    /// First twist frequency.
    pub freq0: f64,
    /// Allowed ratio of the `C^{1,β}` increment proxy to
    /// `δ_{q+1}^{1/2} λ_{q+1}^β`.
    pub c_star: f64,
    /// Corrugation amplitude cap; `None` keeps the built-in one.
    pub s_max: Option<f64>,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            kappa_fraction: 0.5,
            c_bar: 10.0,
            c_zero: 10.0,
            c1: 1.0,
            c2: 1.0,
            max_doublings: 12,
            freq0: 4.0,
            c_star: 10.0,
            s_max: None,
        }
    }
}

/// A whole run, as read from one TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub mode: Mode,
    pub metric: MetricSpec,
    pub initial_map: MapSpec,
    #[serde(default)]
    pub start: Start,
    pub grid: GridConfig,
    pub schedule: Schedule,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub constants: Constants,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("c1beta-out")
}

/// Radius of the disk carrying `u₀`.
pub const START_RADIUS: f64 = 1.5;

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config; relative paths inside it are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.output_dir);
        if let MetricSpec::File { path } = &mut cfg.metric {
            rebase(path);
        }
        if let MapSpec::File { path } = &mut cfg.initial_map {
            rebase(path);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.grid.half_width < START_RADIUS {
            return Err(Error::Config(format!(
                "grid.half_width must be at least {START_RADIUS}, got {}",
                self.grid.half_width
            )));
        }
        if self.mode == Mode::Strict && !self.schedule.feasibility().feasible() {
            return Err(Error::Config(
                "schedule exponents are infeasible; use mode = \"measure\"".into(),
            ));
        }
        for path in [self.metric_path(), self.map_path()].into_iter().flatten() {
            if !path.exists() {
                return Err(Error::Config(format!("missing input file {}", path.display())));
            }
        }
        let t = &self.tolerances;
        if !(t.eps > 0.0 && t.sigma1 > 0.0 && t.guard > 0.0 && t.injectivity_sep > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.constants.kappa_fraction > 0.0 && self.constants.kappa_fraction < 1.0) {
            return Err(Error::Config("constants.kappa_fraction must lie in (0, 1)".into()));
        }
        if let Start::Stage { kappa } = self.start {
            if !(kappa > 0.0) {
                return Err(Error::Config("start.kappa must be positive".into()));
            }
        }
        Ok(())
    }

    fn metric_path(&self) -> Option<&Path> {
        match &self.metric {
            MetricSpec::File { path } => Some(path),
            _ => None,
        }
    }

    fn map_path(&self) -> Option<&Path> {
        match &self.initial_map {
            MapSpec::File { path } => Some(path),
            _ => None,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.half_width, self.grid.n, START_RADIUS)
    }

    pub fn beta(&self) -> f64 {
        self.tolerances
            .beta
            .unwrap_or(0.9 / (2.0 * self.schedule.b * self.schedule.c))
    }

    pub fn metric(&self, grid: Grid) -> Result<MetricField> {
        match &self.metric {
            MetricSpec::Euclidean => Ok(MetricField::from_fn_masked(grid, |_, _| Sym2::identity())),
            MetricSpec::ConformalGaussian { amplitude, width } => Ok(MetricField::from_fn_masked(grid, |x, y| {
                Sym2::identity() * (1.0 + amplitude * (-(x * x + y * y) / (width * width)).exp())
            })),
            MetricSpec::File { path } => {
                let f: MetricField = load_binary(path)?;
                if !f.grid().same_nodes(&grid) {
                    return Err(Error::GridMismatch);
                }
                f.remask(grid.radius())
            }
        }
    }

    pub fn initial_map(&self, grid: Grid) -> Result<MapField> {
        match &self.initial_map {
            MapSpec::ScaledFlat { scale } => Ok(MapField::from_fn_masked(grid, |x, y| {
                Vector3::new(scale * x, scale * y, 0.0)
            })),
            MapSpec::Paraboloid { scale, curvature } => Ok(MapField::from_fn_masked(grid, |x, y| {
                Vector3::new(scale * x, scale * y, 0.5 * curvature * (x * x + y * y))
            })),
            MapSpec::File { path } => {
                let f: MapField = load_binary(path)?;
                if !f.grid().same_nodes(&grid) {
                    return Err(Error::GridMismatch);
                }
                f.remask(grid.radius())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
        output_dir = "out"
        mode = "measure"

        [metric]
        kind = "euclidean"

        [initial_map]
        kind = "scaled_flat"
        scale = 0.9

        [grid]
        n = 128

        [schedule]
        a = 2.0
        b = 1.1
        c = 2.5
        alpha = 0.01

        [tolerances]
        eps = 0.2
    "#;

    #[test]
    fn parses_sample() {
        let c = RunConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.initial_map, MapSpec::ScaledFlat { scale: 0.9 });
        assert_eq!(c.grid.half_width, 1.5);
        assert_eq!(c.schedule.q_max, 2);
        assert_eq!(c.tolerances.bookkeeping, 1e-8);
        c.validate().unwrap();
        let again = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = SAMPLE.replace("eps = 0.2", "eps = 0.2\nepsilon = 0.1");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn missing_file_is_reported() {
        let cfg = SAMPLE.replace(
            "kind = \"euclidean\"",
            "kind = \"file\"\npath = \"/nonexistent/g.c1bf\"",
        );
        let c = RunConfig::from_toml(&cfg).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn small_square_rejected() {
        let mut c = RunConfig::from_toml(SAMPLE).unwrap();
        c.grid.half_width = 1.2;
        assert!(c.validate().is_err());
    }
}
