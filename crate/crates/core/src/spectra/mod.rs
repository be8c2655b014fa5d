//! Eigenvalue lists of `-h^2 Δ + V` below a cutoff: exact for the harmonic
//! oscillator, and by per-angular-momentum finite differences for radial
//! profiles.

mod io;
mod tridiag;

pub use io::{read_spectra, read_spectrum_csv, write_spectra, write_spectrum_csv, Manifest, ManifestEntry};
pub use tridiag::SymTridiagonal;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::potentials::RadialProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ExactHarmonic,
    FiniteDifference,
}

/// Discretization used by [`radial_fd_spectrum`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub grid_points: usize,
    pub r_max: f64,
    pub l_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub energy: f64,
    pub multiplicity: u64,
}

/// Distinct energies below `lambda_max` with multiplicities, at a fixed `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    h: f64,
    dimension: usize,
    lambda_max: f64,
    levels: Vec<Level>,
    provenance: Provenance,
    solver: Option<SolverMeta>,
}

impl Spectrum {
    pub fn new(
        h: f64,
        dimension: usize,
        lambda_max: f64,
        levels: Vec<Level>,
        provenance: Provenance,
        solver: Option<SolverMeta>,
    ) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!("h must be positive, got {h}")));
        }
        if dimension < 2 {
            return Err(Error::InvalidInput(format!("dimension must be at least 2, got {dimension}")));
        }
        if !(lambda_max > 0.0 && lambda_max.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda_max must be positive, got {lambda_max}")));
        }
        for (i, l) in levels.iter().enumerate() {
            if !(l.energy > 0.0 && l.energy <= lambda_max) {
                return Err(Error::InvalidInput(format!(
                    "energy {} lies outside (0, {lambda_max}]",
                    l.energy
                )));
            }
            if l.multiplicity == 0 {
                return Err(Error::InvalidInput(format!("energy {} has zero multiplicity", l.energy)));
            }
            if i > 0 && !(l.energy > levels[i - 1].energy) {
                return Err(Error::InvalidInput("energies must be strictly increasing".into()));
            }
        }
        Ok(Self { h, dimension, lambda_max, levels, provenance, solver })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn solver(&self) -> Option<SolverMeta> {
        self.solver
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Number of eigenvalues counted with multiplicity.
    pub fn total_multiplicity(&self) -> u64 {
        self.levels.iter().map(|l| l.multiplicity).sum()
    }

    /// Every eigenvalue repeated by multiplicity, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.levels
            .iter()
            .flat_map(|l| std::iter::repeat_n(l.energy, l.multiplicity as usize))
            .collect()
    }

    /// Same spectrum with every multiplicity multiplied by `factor`.
    pub fn with_scaled_multiplicities(&self, factor: u64) -> Result<Self> {
        let levels = self.levels.iter().map(|l| Level { multiplicity: l.multiplicity * factor, ..*l }).collect();
        Self::new(self.h, self.dimension, self.lambda_max, levels, self.provenance, self.solver)
    }

    /// Shifts the k-th distinct energy by `(-1)^k * delta`. Energies pushed
    /// outside `(0, lambda_max]` are dropped.
    pub fn with_alternating_shift(&self, delta: f64) -> Result<Self> {
        let levels = self
            .levels
            .iter()
            .enumerate()
            .map(|(k, l)| Level { energy: l.energy + if k % 2 == 0 { delta } else { -delta }, ..*l })
            .filter(|l| l.energy > 0.0 && l.energy <= self.lambda_max)
            .collect();
        Self::new(self.h, self.dimension, self.lambda_max, levels, self.provenance, self.solver)
    }
}

/// Dimension of the degree-`l` spherical harmonics on `S^{n-1}`.
pub fn spherical_harmonic_dim(l: usize, n: usize) -> u64 {
    assert!(n >= 2, "dimension must be at least 2");
    if l == 0 {
        return 1;
    }
    if n == 2 {
        return 2;
    }
    let a = binomial((l + n - 1) as u64, (n - 1) as u64);
    let b = if l >= 2 { binomial((l + n - 3) as u64, (n - 1) as u64) } else { 0 };
    a - b
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

/// Eigenvalues `h(2m + n)` of `-h^2 Δ + |x|^2` up to `lambda_max`, with
/// multiplicity `C(m + n - 1, n - 1)`.
pub fn exact_harmonic_spectrum(n: usize, h: f64, lambda_max: f64) -> Result<Spectrum> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("h must be positive, got {h}")));
    }
    let mut levels = Vec::new();
    let mut m = 0u64;
    loop {
        let energy = (2 * m + n as u64) as f64 * h;
        if energy > lambda_max {
            break;
        }
        levels.push(Level { energy, multiplicity: binomial(m + n as u64 - 1, n as u64 - 1) });
        m += 1;
    }
    Spectrum::new(h, n, lambda_max, levels, Provenance::ExactHarmonic, None)
}

/// Number of eigenvalues strictly below `lambda`, with multiplicity.
pub fn count_below(spec: &Spectrum, lambda: f64) -> Result<u64> {
    if lambda > spec.lambda_max {
        return Err(Error::Truncation(format!(
            "count below {lambda} needs the spectrum beyond lambda_max = {}",
            spec.lambda_max
        )));
    }
    Ok(spec.levels.iter().take_while(|l| l.energy < lambda).map(|l| l.multiplicity).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub r_max: f64,
    pub grid_points: usize,
    /// Absolute bisection width as a fraction of `lambda_max`.
    pub tolerance: f64,
    /// Angular momenta tried before giving up on the cutoff rule.
    pub l_limit: usize,
}

impl SolverParams {
    pub fn new(r_max: f64, grid_points: usize) -> Self {
        Self { r_max, grid_points, tolerance: 1e-13, l_limit: 100_000 }
    }

    fn validate(&self, profile: &RadialProfile) -> Result<()> {
        if self.grid_points < 100 {
            return Err(Error::Config(format!("grid_points must be at least 100, got {}", self.grid_points)));
        }
        if !(self.r_max > profile.r0()) || !self.r_max.is_finite() {
            return Err(Error::Config(format!(
                "r_max = {} must exceed R0 = {}",
                self.r_max,
                profile.r0()
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1e-3) {
            return Err(Error::Config(format!("solver tolerance {} out of range", self.tolerance)));
        }
        Ok(())
    }
}

/// Energies closer than this fraction of `lambda_max` are merged.
pub const MERGE_TOLERANCE: f64 = 1e-9;

/// One radial problem per angular momentum `l`, discretized by finite
/// volumes on the cell centers `r_j = (j + 1/2) Δ` of `[0, r_max]` and
/// symmetrized to a tridiagonal matrix. The radial flux carries the weight
/// `r^{n-1}`, which vanishes at the origin and removes the need for a
/// boundary condition there; the outer boundary is Dirichlet.
///
/// Angular momenta run until the minimum of the effective potential
/// `R(r) + h^2 l (l + n - 2) / r^2` over the grid exceeds `lambda_max`.
pub fn radial_fd_spectrum(profile: &RadialProfile, h: f64, lambda_max: f64, params: SolverParams) -> Result<Spectrum> {
    params.validate(profile)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("h must be positive, got {h}")));
    }
    if !(lambda_max > 0.0) || lambda_max > profile.lambda0() * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "lambda_max = {lambda_max} must lie in (0, lambda0 = {}]",
            profile.lambda0()
        )));
    }
    let n = profile.dimension();
    let cells = params.grid_points;
    let dr = params.r_max / cells as f64;
    let centers: Vec<f64> = (0..cells).map(|j| (j as f64 + 0.5) * dr).collect();
    let potential: Vec<f64> = centers.iter().map(|&r| profile.eval(r)).collect();
    let centrifugal = |l: usize| h * h * (l * (l + n - 2)) as f64;

    let mut l_max = None;
    for l in 0..=params.l_limit {
        let c = centrifugal(l);
        let floor = centers
            .iter()
            .zip(&potential)
            .map(|(r, v)| v + c / (r * r))
            .fold(f64::INFINITY, f64::min);
        if floor > lambda_max {
            l_max = Some(l);
            break;
        }
    }
    let Some(l_stop) = l_max else {
        return Err(Error::Config(format!(
            "no angular-momentum cutoff below l = {} for lambda_max = {lambda_max}",
            params.l_limit
        )));
    };

    let p = (n - 1) as i32;
    let face = |j: usize| (j as f64 * dr).powi(p);
    let kinetic = h * h / (dr * dr);
    let off: Vec<f64> = (0..cells - 1)
        .map(|j| -kinetic * face(j + 1) / (centers[j] * centers[j + 1]).powf(0.5 * p as f64))
        .collect();
    let base: Vec<f64> = (0..cells)
        .map(|j| kinetic * (face(j) + face(j + 1)) / centers[j].powi(p) + potential[j])
        .collect();
    let tol = params.tolerance * lambda_max;

    let per_l = par::try_map_range(l_stop, |l| -> Result<Vec<f64>> {
        let c = centrifugal(l);
        let d: Vec<f64> = base.iter().zip(&centers).map(|(b, r)| b + c / (r * r)).collect();
        let t = SymTridiagonal::new(d, off.clone());
        let mut evs = t.eigenvalues_below(lambda_max, tol).ok_or_else(|| Error::NonConvergence {
            l,
            msg: format!("bisection failed at h = {h}"),
        })?;
        // bisection midpoints can land a hair above the cutoff
        evs.retain(|&e| e > 0.0 && e <= lambda_max);
        Ok(evs)
    })?;

    let mut all: Vec<(f64, u64)> = Vec::new();
    for (l, evs) in per_l.iter().enumerate() {
        let mult = spherical_harmonic_dim(l, n);
        all.extend(evs.iter().map(|&e| (e, mult)));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let merge_tol = MERGE_TOLERANCE * lambda_max;
    let mut levels: Vec<Level> = Vec::new();
    for (e, m) in all {
        match levels.last_mut() {
            Some(last) if e - last.energy <= merge_tol => last.multiplicity += m,
            _ => levels.push(Level { energy: e, multiplicity: m }),
        }
    }
    Spectrum::new(
        h,
        n,
        lambda_max,
        levels,
        Provenance::FiniteDifference,
        Some(SolverMeta { grid_points: cells, r_max: params.r_max, l_max: l_stop.saturating_sub(1) }),
    )
}
