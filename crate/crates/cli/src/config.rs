//! Run configuration, read from a single JSON file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use radspec_core::abel::InversionConfig;
use radspec_core::flowlines::CertificateThresholds;
use radspec_core::potentials::{AnalyticPotential, LevelSetParams, QuadratureParams, RadialProfile};
use radspec_core::spectra::SolverParams;
use radspec_core::{Error, Result, UniformGrid};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialConfig,
    #[serde(default)]
    pub spectra: Option<SpectraConfig>,
    #[serde(default)]
    pub invariants: Option<InvariantsConfig>,
    #[serde(default)]
    pub inversion: InversionConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
    #[serde(default)]
    pub flowlines: FlowlinesConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Reserved; no command draws random numbers.
    #[serde(default, rename = "seed")]
    pub _seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PotentialConfig {
    #[serde(flatten)]
    pub shape: Shape,
    /// Position of the minimum; the origin by default.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    /// Half-width of the evaluation box around the center.
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default)]
    pub extension: Extension,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Harmonic {
        n: usize,
        lambda0: f64,
    },
    PowerLaw {
        n: usize,
        coeff: f64,
        exponent: f64,
        #[serde(rename = "R0")]
        r0: f64,
    },
    Tabulated {
        n: usize,
        r: Vec<f64>,
        values: Vec<f64>,
    },
    Anisotropic {
        weights: Vec<f64>,
        lambda0: f64,
    },
    RadialAngular {
        n: usize,
        amplitude: f64,
        mode: u32,
        lambda0: f64,
    },
    FlatAnnulus {
        n: usize,
        inner: f64,
        outer: f64,
        lambda0: f64,
    },
}

/// Continuation of a radial profile beyond `R0`. Only the quadratic rule
/// `R(R0) + R'(R0-) d + d^2` is implemented.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extension {
    #[default]
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumSource {
    /// Closed-form oscillator levels; harmonic potentials only.
    Exact,
    FiniteDifference,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraConfig {
    pub h: Vec<f64>,
    pub lambda_max: f64,
    #[serde(default)]
    pub source: Option<SpectrumSource>,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub r_max: f64,
    pub grid_points: usize,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantsConfig {
    #[serde(default)]
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_step: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub cells_per_dim: Option<usize>,
    pub refine: Option<usize>,
    /// Marching-squares resolution for level-set integrals in the plane.
    pub level_grid: Option<usize>,
    /// Angular resolution for level-set integrals in three or more dimensions.
    pub level_angular: Option<usize>,
}

/// Levels `s_min..=s_max` as fractions of `lambda0`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelGrid {
    pub s_min: f64,
    pub s_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseConfig {
    pub levels: LevelGrid,
    pub bins: usize,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self { levels: LevelGrid { s_min: 0.05, s_max: 0.95, points: 19 }, bins: 50 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowlinesConfig {
    /// Starting level, as a fraction of `lambda0`.
    pub s0: f64,
    /// Seeds placed on `{V = s0}`.
    pub count: usize,
    /// Explicit starting points, flowed in addition to the seeds.
    pub starts: Vec<Vec<f64>>,
    pub t_end: f64,
    pub dt: f64,
    /// Levels on which `F` is tabulated.
    pub levels: LevelGrid,
    pub thresholds: CertificateThresholds,
}

impl Default for FlowlinesConfig {
    fn default() -> Self {
        Self {
            s0: 0.25,
            count: 8,
            starts: Vec::new(),
            t_end: 0.3,
            dt: 1e-3,
            levels: LevelGrid { s_min: 0.05, s_max: 0.95, points: 19 },
            thresholds: CertificateThresholds::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("{name} must be positive, got {x}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks that do not need the potential to be built.
    pub fn validate(&self) -> Result<()> {
        self.inversion.validate()?;
        match &self.potential.shape {
            Shape::Harmonic { lambda0, .. }
            | Shape::Anisotropic { lambda0, .. }
            | Shape::RadialAngular { lambda0, .. }
            | Shape::FlatAnnulus { lambda0, .. } => positive("lambda0", *lambda0)?,
            Shape::PowerLaw { r0, .. } => positive("R0", *r0)?,
            Shape::Tabulated { .. } => {}
        }
        if let Some(s) = &self.spectra {
            if s.h.is_empty() {
                return Err(config_err("spectra.h is empty"));
            }
            for &h in &s.h {
                positive("h", h)?;
            }
            positive("spectra.lambda_max", s.lambda_max)?;
            if let Some(sv) = s.solver {
                positive("solver.r_max", sv.r_max)?;
            }
        }
        if let Some(inv) = &self.invariants {
            positive("invariants.lambda_max", inv.lambda_max)?;
            positive("invariants.lambda_step", inv.lambda_step)?;
            positive("invariants.eps", inv.eps)?;
            if !(inv.lambda_min >= 0.0 && inv.lambda_min < inv.lambda_max) {
                return Err(config_err(format!(
                    "invariants need 0 <= lambda_min < lambda_max, got [{}, {}]",
                    inv.lambda_min, inv.lambda_max
                )));
            }
        }
        for (name, g) in [("diagnose.levels", self.diagnose.levels), ("flowlines.levels", self.flowlines.levels)] {
            if !(g.s_min > 0.0 && g.s_min < g.s_max && g.s_max < 1.0 && g.points >= 2) {
                return Err(config_err(format!("{name} needs 0 < s_min < s_max < 1 and at least 2 points")));
            }
        }
        positive("flowlines.s0", self.flowlines.s0)?;
        positive("flowlines.t_end", self.flowlines.t_end)?;
        positive("flowlines.dt", self.flowlines.dt)?;
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        match &self.potential.shape {
            Shape::Harmonic { n, .. }
            | Shape::PowerLaw { n, .. }
            | Shape::Tabulated { n, .. }
            | Shape::RadialAngular { n, .. }
            | Shape::FlatAnnulus { n, .. } => *n,
            Shape::Anisotropic { weights, .. } => weights.len(),
        }
    }

    /// The radial profile behind the potential, if it has one.
    pub fn radial_profile(&self) -> Result<Option<RadialProfile>> {
        // RadialProfile continues every shape by the quadratic rule
        let Extension::Quadratic = self.potential.extension;
        Ok(match &self.potential.shape {
            Shape::Harmonic { n, lambda0 } => Some(RadialProfile::power_law(*n, 1.0, 2.0, lambda0.sqrt())?),
            Shape::PowerLaw { n, coeff, exponent, r0 } => Some(RadialProfile::power_law(*n, *coeff, *exponent, *r0)?),
            Shape::Tabulated { n, r, values } => Some(RadialProfile::tabulated(*n, r.clone(), values.clone())?),
            _ => None,
        })
    }

    pub fn analytic(&self) -> Result<AnalyticPotential> {
        let mut p = match &self.potential.shape {
            Shape::Harmonic { n, lambda0 } => AnalyticPotential::harmonic(*n, *lambda0)?,
            Shape::PowerLaw { .. } | Shape::Tabulated { .. } => {
                AnalyticPotential::radial(self.radial_profile()?.expect("radial family"))?
            }
            Shape::Anisotropic { weights, lambda0 } => AnalyticPotential::anisotropic(weights.clone(), *lambda0)?,
            Shape::RadialAngular { n, amplitude, mode, lambda0 } => {
                AnalyticPotential::radial_angular(*n, *amplitude, *mode, *lambda0)?
            }
            Shape::FlatAnnulus { n, inner, outer, lambda0 } => {
                AnalyticPotential::flat_annulus(*n, *inner, *outer, *lambda0)?
            }
        };
        if let Some(c) = &self.potential.center {
            p = p.translated(c.clone())?;
        }
        if let Some(w) = self.potential.half_width {
            p = p.with_half_width(w)?;
        }
        Ok(p)
    }

    pub fn spectra(&self) -> Result<&SpectraConfig> {
        self.spectra.as_ref().ok_or_else(|| config_err("config has no spectra section"))
    }

    /// Exact levels by default for the harmonic family without solver
    /// settings, finite differences otherwise.
    pub fn spectrum_source(&self) -> Result<SpectrumSource> {
        let s = self.spectra()?;
        let harmonic = matches!(self.potential.shape, Shape::Harmonic { .. });
        match s.source {
            Some(SpectrumSource::Exact) if !harmonic => {
                Err(config_err("exact spectra exist only for the harmonic family"))
            }
            Some(src) => Ok(src),
            None if harmonic && s.solver.is_none() => Ok(SpectrumSource::Exact),
            None => Ok(SpectrumSource::FiniteDifference),
        }
    }

    pub fn solver_params(&self) -> Result<SolverParams> {
        let sv = self
            .spectra()?
            .solver
            .ok_or_else(|| config_err("finite-difference spectra need spectra.solver"))?;
        let mut params = SolverParams::new(sv.r_max, sv.grid_points);
        if let Some(t) = sv.tolerance {
            params.tolerance = t;
        }
        Ok(params)
    }

    pub fn invariants(&self) -> Result<InvariantsConfig> {
        self.invariants.ok_or_else(|| config_err("config has no invariants section"))
    }

    pub fn lambda_grid(&self) -> Result<UniformGrid> {
        let inv = self.invariants()?;
        UniformGrid::with_step(inv.lambda_min, inv.lambda_max, inv.lambda_step)
    }

    pub fn quadrature(&self) -> Result<QuadratureParams> {
        let d = QuadratureParams::default_for(self.dimension());
        QuadratureParams::new(self.oracle.cells_per_dim.unwrap_or(d.cells_per_dim), self.oracle.refine.unwrap_or(d.refine))
    }

    pub fn level_set(&self) -> LevelSetParams {
        let d = LevelSetParams::default();
        LevelSetParams {
            grid: self.oracle.level_grid.unwrap_or(d.grid),
            angular: self.oracle.level_angular.unwrap_or(d.angular),
            centroid_cells: d.centroid_cells,
        }
    }
}

impl LevelGrid {
    pub fn scaled(&self, lambda0: f64) -> Result<UniformGrid> {
        UniformGrid::new(self.s_min * lambda0, self.s_max * lambda0, self.points)
    }
}
