//! End-to-end chains from spectra or oracles to [`PipelineOutputs`].

use serde::{Deserialize, Serialize};

use crate::abel::{recover_surface_invariants, recover_volume, InversionConfig};
use crate::curve::{Curve, UniformGrid};
use crate::error::{Error, Result};
use crate::par;
use crate::potentials::{
    level_surface_invariants_oracle, phase_space_integral_oracle, sublevel_volume_oracle, AnalyticPotential,
    LevelSetParams, PhaseWeight, QuadratureParams,
};
use crate::reconstruct::{patch_bottom, PipelineOutputs, ProvenanceChain, Source};
use crate::spectra::Spectrum;
use crate::traces::{extract_invariants, InvariantTable};

/// Mollifier half-widths above the spectral floor where extracted volumes
/// are replaced by the bottom power law.
pub const BOTTOM_WIDTH: f64 = 2.0;
/// The same clearance in units of the smallest `h`: below it the traces
/// average over only a few eigenvalues.
pub const BOTTOM_H_FACTOR: f64 = 4.0;
/// Extra λ nodes extracted above the requested grid when the spectra reach
/// far enough, so that no reported node uses a one-sided stencil.
pub const TOP_PADDING: usize = 4;

/// What [`invert_extracted`] needs besides the invariant table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionMeta {
    pub dimension: usize,
    pub eps: f64,
    /// Rows of the table on the requested grid; any further rows are padding.
    pub report_len: usize,
    /// See [`spectral_floor`].
    pub floor: Option<f64>,
    /// Width above the floor replaced by the bottom power law.
    pub clearance: f64,
}

/// Trace invariants on `grid` extended by up to [`TOP_PADDING`] nodes, so
/// that no reported node uses a one-sided stencil after inversion.
pub fn extract_padded(spectra: &[Spectrum], grid: &UniformGrid, eps: f64) -> Result<(InvariantTable, ExtractionMeta)> {
    let lambda_max = spectra.iter().map(|s| s.lambda_max()).fold(f64::INFINITY, f64::min);
    let room = ((lambda_max - eps - grid.max()) / grid.step() + 1e-9).floor();
    let pad = if room >= 1.0 { (room as usize).min(TOP_PADDING) } else { 0 };
    let padded = UniformGrid::new(grid.min(), grid.min() + (grid.len() - 1 + pad) as f64 * grid.step(), grid.len() + pad)?;
    let table = extract_invariants(spectra, &padded, eps)?;
    let h_min = spectra.iter().map(|s| s.h()).fold(f64::INFINITY, f64::min);
    let meta = ExtractionMeta {
        dimension: table.dimension,
        eps,
        report_len: grid.len(),
        floor: spectral_floor(spectra),
        clearance: (BOTTOM_WIDTH * eps).max(BOTTOM_H_FACTOR * h_min),
    };
    Ok((table, meta))
}

/// Abel inversion of a padded table, cropped to the requested grid, with
/// the volume near the floor replaced by the bottom power law.
pub fn invert_extracted(table: &InvariantTable, meta: &ExtractionMeta, cfg: &InversionConfig) -> Result<PipelineOutputs> {
    if table.a_est.len() < meta.report_len {
        return Err(Error::InvalidInput(format!(
            "table has {} rows but {} are reported",
            table.a_est.len(),
            meta.report_len
        )));
    }
    let mut outputs =
        from_invariants(&table.first_invariant()?, &table.second_invariant()?, table.dimension, cfg, Source::Spectral)?;
    for c in [&mut outputs.volume, &mut outputs.i1, &mut outputs.i2].into_iter().flatten() {
        *c = c.truncated(meta.report_len)?;
    }
    if let (Some(floor), Some(v)) = (meta.floor, outputs.volume.as_mut()) {
        *v = patch_bottom(v, floor, floor + meta.clearance)?;
        if let Some(p) = outputs.provenance.as_mut() {
            p.stages.push("bottom power law".into());
        }
    }
    Ok(outputs)
}

/// Spectra → trace invariants → Abel inversion. Returns the invariant table
/// on `grid` alongside the stage outputs.
///
/// Near the bottom of the well the mollifier reaches below the minimum and
/// the coarse `h` carry no eigenvalues inside it, so the volume curve just
/// above the [`spectral_floor`] is replaced by a local power law fitted on
/// the next nodes. The clearance is [`BOTTOM_WIDTH`] half-widths or
/// [`BOTTOM_H_FACTOR`] times the smallest `h`, whichever is larger.
pub fn from_spectra(
    spectra: &[Spectrum],
    grid: &UniformGrid,
    eps: f64,
    cfg: &InversionConfig,
) -> Result<(InvariantTable, PipelineOutputs)> {
    let (table, meta) = extract_padded(spectra, grid, eps)?;
    let outputs = invert_extracted(&table, &meta, cfg)?;
    Ok((table.truncated(meta.report_len)?, outputs))
}

/// `min V` estimated by extrapolating the ground-state energy linearly in
/// `h` from the two smallest `h` to `h = 0`.
pub fn spectral_floor(spectra: &[Spectrum]) -> Option<f64> {
    let mut ground: Vec<(f64, f64)> =
        spectra.iter().filter_map(|s| s.levels().first().map(|l| (s.h(), l.energy))).collect();
    ground.sort_by(|a, b| a.0.total_cmp(&b.0));
    ground.dedup_by(|a, b| a.0 == b.0);
    match ground.as_slice() {
        [(h1, e1), (h2, e2), ..] => Some(e1 - h1 * (e2 - e1) / (h2 - h1)),
        _ => None,
    }
}

/// Abel inversion of a given pair of invariant curves.
pub fn from_invariants(a: &Curve, b: &Curve, n: usize, cfg: &InversionConfig, source: Source) -> Result<PipelineOutputs> {
    let v = recover_volume(a, n, cfg)?;
    let (i1, i2) = recover_surface_invariants(a, b, n, cfg)?;
    let extract = match source {
        Source::Spectral => "trace invariants from spectra",
        Source::Oracle => "trace invariants from phase-space quadrature",
    };
    Ok(PipelineOutputs {
        dimension: n,
        volume: Some(v),
        i1: Some(i1),
        i2: Some(i2),
        provenance: Some(ProvenanceChain {
            volume: source,
            surface_invariants: source,
            stages: vec![extract.into(), "abel inversion".into(), "monotone radial inversion".into()],
        }),
    })
}

/// Both phase-space invariants by quadrature on a grid starting at 0,
/// where they vanish.
pub fn oracle_invariants(p: &AnalyticPotential, grid: &UniformGrid, quad: QuadratureParams) -> Result<(Curve, Curve)> {
    if grid.min() != 0.0 {
        return Err(Error::InvalidInput("oracle invariants need a grid starting at 0".into()));
    }
    let rows = par::try_map_range(grid.len(), |i| {
        let l = grid.x(i);
        if l == 0.0 {
            return Ok([0.0; 4]);
        }
        let a = phase_space_integral_oracle(p, l, PhaseWeight::One, quad)?;
        let b = phase_space_integral_oracle(p, l, PhaseWeight::GradSquared, quad)?;
        Ok::<_, Error>([a.spatial, a.err_est, b.spatial, b.err_est])
    })?;
    let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
    let a = Curve::new("A", *grid, col(0))?.with_err_est(col(1))?;
    let b = Curve::new("B", *grid, col(2))?.with_err_est(col(3))?;
    Ok((a, b))
}

/// The oracle-fed chain: quadrature invariants, then the same inversion
/// the spectral chain uses.
pub fn from_oracle(
    p: &AnalyticPotential,
    grid: &UniformGrid,
    quad: QuadratureParams,
    cfg: &InversionConfig,
) -> Result<PipelineOutputs> {
    let (a, b) = oracle_invariants(p, grid, quad)?;
    from_invariants(&a, &b, p.dimension(), cfg, Source::Oracle)
}

/// Volume and surface invariants straight from the geometry of the level
/// sets, with no inversion at all. The grid must avoid the minimum level.
pub fn direct_oracle(
    p: &AnalyticPotential,
    grid: &UniformGrid,
    quad: QuadratureParams,
    level: LevelSetParams,
) -> Result<PipelineOutputs> {
    let rows = par::try_map_range(grid.len(), |i| {
        let s = grid.x(i);
        let v = sublevel_volume_oracle(p, s, quad)?;
        let inv = level_surface_invariants_oracle(p, s, level)?;
        Ok::<_, Error>([v.value, v.err_est, inv.i1, inv.i1_err, inv.i2, inv.i2_err])
    })?;
    let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
    Ok(PipelineOutputs {
        dimension: p.dimension(),
        volume: Some(Curve::new("v", *grid, col(0))?.with_err_est(col(1))?),
        i1: Some(Curve::new("I1", *grid, col(2))?.with_err_est(col(3))?),
        i2: Some(Curve::new("I2", *grid, col(4))?.with_err_est(col(5))?),
        provenance: Some(ProvenanceChain {
            volume: Source::Oracle,
            surface_invariants: Source::Oracle,
            stages: vec!["sublevel quadrature".into(), "level-set quadrature".into()],
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstruct::{build_report, StageTolerances};
    use crate::spectra::exact_harmonic_spectrum;

    #[test]
    fn harmonic_spectral_chain() {
        let spectra: Vec<Spectrum> =
            [0.04, 0.02, 0.01].iter().map(|&h| exact_harmonic_spectrum(2, h, 1.05).unwrap()).collect();
        let grid = UniformGrid::new(0.0, 1.0, 51).unwrap();
        let (_, out) = from_spectra(&spectra, &grid, 0.01, &InversionConfig::default()).unwrap();
        let reference = crate::potentials::RadialProfile::power_law(2, 1.0, 2.0, 1.0).unwrap();
        let report = build_report(&out, Some(&reference), StageTolerances::default()).unwrap();
        assert!(report.metrics.unwrap().max_rel_error < 0.02);
    }

    #[test]
    fn direct_oracle_rejects_minimum() {
        let p = AnalyticPotential::harmonic(2, 1.0).unwrap();
        let grid = UniformGrid::new(0.0, 0.9, 10).unwrap();
        assert!(direct_oracle(&p, &grid, QuadratureParams::default_for(2), LevelSetParams::default()).is_err());
    }
}
