//! Histogram of the pushforward `V_* dx` on `(0, lambda0)`.

use crate::curve::{Curve, UniformGrid};
use crate::error::{Error, Result};
use crate::par;

use super::analytic::AnalyticPotential;
use super::quadrature::{sublevel_volume_in, QuadBox, QuadratureParams};

/// Neighbors on each side used for the atom test.
const NEIGHBORS: usize = 3;
/// A bin is suspicious when its mass exceeds this multiple of the median of
/// its neighbors.
pub const ATOM_RATIO: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PushforwardDensity {
    /// Density on bin centers, with bin-mass discretization estimates.
    pub density: Curve,
    /// Bin masses `vol{s_k <= V < s_{k+1}}`.
    pub masses: Vec<f64>,
    /// Indices of bins flagged as a suspected atom or plateau.
    pub flagged: Vec<usize>,
}

impl PushforwardDensity {
    pub fn bin_width(&self) -> f64 {
        self.density.grid().step()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Lower and upper level of each flagged bin.
    pub fn flagged_levels(&self) -> Vec<(f64, f64)> {
        let w = self.bin_width();
        self.flagged.iter().map(|&k| (k as f64 * w, (k + 1) as f64 * w)).collect()
    }
}

/// Bin masses are differences of sublevel volumes at the bin edges, so the
/// histogram sums to `vol{V < lambda0}` up to rounding.
pub fn pushforward_density(
    p: &AnalyticPotential,
    bbox: &QuadBox,
    bins: usize,
    quad: QuadratureParams,
) -> Result<PushforwardDensity> {
    if bins < 10 {
        return Err(Error::InvalidInput(format!("pushforward needs at least 10 bins, got {bins}")));
    }
    let l0 = p.lambda0();
    let width = l0 / bins as f64;
    let edges = par::try_map_range(bins, |k| {
        let s = (k + 1) as f64 * width;
        sublevel_volume_in(p, bbox, s.min(l0), quad)
    })?;
    let mut masses = Vec::with_capacity(bins);
    let mut errs = Vec::with_capacity(bins);
    let mut prev = (0.0, 0.0);
    for e in &edges {
        masses.push(e.value - prev.0);
        errs.push((e.err_est + prev.1) / width);
        prev = (e.value, e.err_est);
    }
    let grid = UniformGrid::new(0.5 * width, l0 - 0.5 * width, bins)?;
    let density = Curve::new("pushforward_density", grid, masses.iter().map(|m| m / width).collect())?
        .with_err_est(errs)?;
    let flagged = flag_atoms(&masses);
    Ok(PushforwardDensity { density, masses, flagged })
}

/// Bins whose mass exceeds `ATOM_RATIO` times the median mass of up to
/// three neighbors on each side. Bins with a zero neighbor median are never
/// flagged, since the ratio is then meaningless.
pub fn flag_atoms(masses: &[f64]) -> Vec<usize> {
    let n = masses.len();
    (0..n)
        .filter(|&k| {
            let lo = k.saturating_sub(NEIGHBORS);
            let hi = (k + NEIGHBORS + 1).min(n);
            let mut nb: Vec<f64> = (lo..hi).filter(|&j| j != k).map(|j| masses[j]).collect();
            if nb.is_empty() {
                return false;
            }
            nb.sort_by(f64::total_cmp);
            let m = nb.len();
            let median = if m % 2 == 1 { nb[m / 2] } else { 0.5 * (nb[m / 2 - 1] + nb[m / 2]) };
            median > 0.0 && masses[k] > ATOM_RATIO * median
        })
        .collect()
}
