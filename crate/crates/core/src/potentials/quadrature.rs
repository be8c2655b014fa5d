//! Tensor midpoint quadrature over sublevel sets `{V < level}`.
//!
//! Cells that straddle the level set are split once into `refine^n`
//! sub-cells. Error estimates compare against the same rule on a grid with
//! half as many cells per dimension.

use crate::error::{Error, Result};
use crate::par;

use super::analytic::AnalyticPotential;
use super::unit_ball_volume;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureParams {
    pub cells_per_dim: usize,
    /// Sub-cells per dimension in straddling cells.
    pub refine: usize,
}

impl QuadratureParams {
    pub fn new(cells_per_dim: usize, refine: usize) -> Result<Self> {
        if cells_per_dim < 4 || refine < 1 {
            return Err(Error::InvalidInput(format!(
                "quadrature needs >= 4 cells per dimension and refine >= 1 (got {cells_per_dim}, {refine})"
            )));
        }
        Ok(Self { cells_per_dim, refine })
    }

    /// Resolution that keeps the cell count manageable in dimension `n`.
    pub fn default_for(n: usize) -> Self {
        match n {
            2 => Self { cells_per_dim: 256, refine: 8 },
            3 => Self { cells_per_dim: 64, refine: 4 },
            4 => Self { cells_per_dim: 24, refine: 2 },
            _ => Self { cells_per_dim: 10, refine: 2 },
        }
    }

    fn coarse(&self) -> Self {
        Self { cells_per_dim: (self.cells_per_dim / 2).max(4), refine: self.refine }
    }
}

/// Axis-aligned integration box.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl QuadBox {
    pub fn of(p: &AnalyticPotential) -> Self {
        Self { lower: p.box_lower(), upper: p.box_upper() }
    }
}

/// A quadrature result with its discretization estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue {
    pub value: f64,
    pub err_est: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseWeight {
    /// `(lambda - V)^{n/2}`
    One,
    /// `|grad V|^2 (lambda - V)^{n/2}`
    GradSquared,
}

/// Spatial form of a phase-space invariant and the constant `omega_n`
/// relating it to the full phase-space integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSpaceIntegral {
    pub spatial: f64,
    pub err_est: f64,
    pub omega_n: f64,
}

impl PhaseSpaceIntegral {
    /// `omega_n` times the spatial integral.
    pub fn phase_space(&self) -> f64 {
        self.omega_n * self.spatial
    }
}

/// `∫_{V<λ} (λ−V)^{n/2} dx` or `∫_{V<λ} |∇V|² (λ−V)^{n/2} dx`.
pub fn phase_space_integral_oracle(
    p: &AnalyticPotential,
    lambda: f64,
    weight: PhaseWeight,
    quad: QuadratureParams,
) -> Result<PhaseSpaceIntegral> {
    phase_space_integral_in(p, &QuadBox::of(p), lambda, weight, quad)
}

pub fn phase_space_integral_in(
    p: &AnalyticPotential,
    bbox: &QuadBox,
    lambda: f64,
    weight: PhaseWeight,
    quad: QuadratureParams,
) -> Result<PhaseSpaceIntegral> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    let n = p.dimension();
    let r = match weight {
        PhaseWeight::One => estimate(p, bbox, lambda, n as f64 / 2.0, quad, &|_: &[f64], _: &mut [f64]| 1.0)?,
        PhaseWeight::GradSquared => {
            let w = |x: &[f64], g: &mut [f64]| {
                p.grad_into(x, g);
                g.iter().map(|c| c * c).sum::<f64>()
            };
            estimate(p, bbox, lambda, n as f64 / 2.0, quad, &w)?
        }
    };
    Ok(PhaseSpaceIntegral { spatial: r.value, err_est: r.err_est, omega_n: unit_ball_volume(n) })
}

/// Lebesgue measure of `{V < s}`.
pub fn sublevel_volume_oracle(p: &AnalyticPotential, s: f64, quad: QuadratureParams) -> Result<OracleValue> {
    sublevel_volume_in(p, &QuadBox::of(p), s, quad)
}

pub fn sublevel_volume_in(p: &AnalyticPotential, bbox: &QuadBox, s: f64, quad: QuadratureParams) -> Result<OracleValue> {
    if !(s > 0.0) {
        return Err(Error::InvalidInput(format!("level must be positive, got {s}")));
    }
    estimate(p, bbox, s, 0.0, quad, &|_: &[f64], _: &mut [f64]| 1.0)
}

/// Centroid of `{V < s}` by plain midpoint sampling.
pub fn sublevel_centroid(p: &AnalyticPotential, s: f64, cells_per_dim: usize) -> Result<Vec<f64>> {
    let n = p.dimension();
    let bbox = QuadBox::of(p);
    let width: Vec<f64> = (0..n).map(|d| (bbox.upper[d] - bbox.lower[d]) / cells_per_dim as f64).collect();
    let slab = cells_per_dim.pow((n - 1) as u32);
    let partial = par::map_range(cells_per_dim, |i0| {
        let mut acc = vec![0.0; n + 1];
        let mut x = vec![0.0; n];
        for rest in 0..slab {
            let mut idx = rest;
            x[0] = bbox.lower[0] + (i0 as f64 + 0.5) * width[0];
            for d in 1..n {
                x[d] = bbox.lower[d] + ((idx % cells_per_dim) as f64 + 0.5) * width[d];
                idx /= cells_per_dim;
            }
            if p.value_unchecked(&x) < s {
                acc[n] += 1.0;
                for d in 0..n {
                    acc[d] += x[d];
                }
            }
        }
        acc
    });
    let mut total = vec![0.0; n + 1];
    for part in partial {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    if total[n] == 0.0 {
        return Err(Error::InvalidInput(format!("sublevel set {{V < {s}}} is empty at this resolution")));
    }
    Ok((0..n).map(|d| total[d] / total[n]).collect())
}

fn estimate<F>(
    p: &AnalyticPotential,
    bbox: &QuadBox,
    level: f64,
    power: f64,
    quad: QuadratureParams,
    weight: &F,
) -> Result<OracleValue>
where
    F: Fn(&[f64], &mut [f64]) -> f64 + Sync,
{
    let fine = integrate(p, bbox, level, power, quad, weight)?;
    let coarse = integrate(p, bbox, level, power, quad.coarse(), weight)?;
    Ok(OracleValue { value: fine, err_est: (fine - coarse).abs() })
}

/// Mean of `(-a - X)_+^k` for `X` uniform on `[-w/2, w/2]`.
fn ramp_mean(a: f64, w: f64, k: f64) -> f64 {
    if w <= 0.0 || !(w.is_finite()) {
        return if a < 0.0 { (-a).powf(k) } else { 0.0 };
    }
    let up = (0.5 * w - a).max(0.0);
    let down = (-0.5 * w - a).max(0.0);
    (up.powf(k + 1.0) - down.powf(k + 1.0)) / ((k + 1.0) * w)
}

/// `∫ weight(x) (level - V(x))_+^power dx` over the box.
///
/// Cells entirely inside the sublevel set use the two-point Gauss rule in
/// each coordinate. Cells crossing the level set are split into
/// `refine^n` sub-cells; in each, `V` is replaced by its linearization at
/// the sub-cell center and the ramp is averaged over a uniform spread with
/// the same variance as the projection of the sub-cell onto the gradient.
/// This removes the lattice noise a hard indicator would leave.
pub(crate) fn integrate<F>(
    p: &AnalyticPotential,
    bbox: &QuadBox,
    level: f64,
    power: f64,
    quad: QuadratureParams,
    weight: &F,
) -> Result<f64>
where
    F: Fn(&[f64], &mut [f64]) -> f64 + Sync,
{
    let n = p.dimension();
    let cells = quad.cells_per_dim;
    let verts = cells + 1;
    let width: Vec<f64> = (0..n).map(|d| (bbox.upper[d] - bbox.lower[d]) / cells as f64).collect();
    let cell_volume: f64 = width.iter().product();

    // vertex lattice, first coordinate slowest
    let vslab = verts.pow((n - 1) as u32);
    let vertex_rows: Vec<Vec<f64>> = par::map_range(verts, |i0| {
        let mut x = vec![0.0; n];
        (0..vslab)
            .map(|rest| {
                x[0] = bbox.lower[0] + i0 as f64 * width[0];
                let mut idx = rest;
                for d in (1..n).rev() {
                    x[d] = bbox.lower[d] + (idx % verts) as f64 * width[d];
                    idx /= verts;
                }
                p.value_unchecked(&x)
            })
            .collect()
    });
    let vertex = |multi: &[usize]| -> f64 {
        let mut rest = 0;
        for &m in &multi[1..] {
            rest = rest * verts + m;
        }
        vertex_rows[multi[0]][rest]
    };

    // coverage: the sublevel set must not reach the box boundary
    for (i0, row) in vertex_rows.iter().enumerate() {
        for (rest, &v) in row.iter().enumerate() {
            if v >= level {
                continue;
            }
            let mut on_boundary = i0 == 0 || i0 == cells;
            let mut idx = rest;
            for _ in 1..n {
                let m = idx % verts;
                on_boundary |= m == 0 || m == cells;
                idx /= verts;
            }
            if on_boundary {
                return Err(Error::Coverage(format!(
                    "{{V < {level}}} reaches the boundary of the quadrature box"
                )));
            }
        }
    }

    let gauss = 0.5 / 3f64.sqrt();
    let cslab = cells.pow((n - 1) as u32);
    let corners = 1usize << n;
    let sub = quad.refine;
    let sub_count = sub.pow(n as u32);
    let sub_width: Vec<f64> = width.iter().map(|w| w / sub as f64).collect();
    let sub_volume = cell_volume / sub_count as f64;
    let partial: Vec<f64> = par::map_range(cells, |i0| {
        let mut multi = vec![0usize; n];
        let mut corner = vec![0usize; n];
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut g = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        let mut acc = 0.0;
        for rest in 0..cslab {
            multi[0] = i0;
            let mut idx = rest;
            for d in (1..n).rev() {
                multi[d] = idx % cells;
                idx /= cells;
            }
            let mut below = 0usize;
            for c in 0..corners {
                for d in 0..n {
                    corner[d] = multi[d] + ((c >> d) & 1);
                }
                if vertex(&corner) < level {
                    below += 1;
                }
            }
            for d in 0..n {
                x[d] = bbox.lower[d] + (multi[d] as f64 + 0.5) * width[d];
            }
            let center_below = p.value_unchecked(&x) < level;
            if below == 0 && !center_below {
                continue;
            }
            if below == corners && center_below {
                let mut cell_acc = 0.0;
                for c in 0..corners {
                    for d in 0..n {
                        let sign = if (c >> d) & 1 == 1 { 1.0 } else { -1.0 };
                        y[d] = x[d] + sign * gauss * width[d];
                    }
                    let v = p.value_unchecked(&y);
                    if v < level {
                        cell_acc += weight(&y, &mut scratch) * (level - v).powf(power);
                    }
                }
                acc += cell_acc * cell_volume / corners as f64;
                continue;
            }
            let mut cell_acc = 0.0;
            for k in 0..sub_count {
                let mut kk = k;
                for d in 0..n {
                    let j = kk % sub;
                    kk /= sub;
                    y[d] = bbox.lower[d] + (multi[d] as f64 + (j as f64 + 0.5) / sub as f64) * width[d];
                }
                let a = p.value_unchecked(&y) - level;
                p.grad_into(&y, &mut g);
                let spread = g.iter().zip(&sub_width).map(|(gi, hi)| gi * gi * hi * hi).sum::<f64>().sqrt();
                let ramp = ramp_mean(a, spread, power);
                if ramp > 0.0 {
                    cell_acc += weight(&y, &mut scratch) * ramp;
                }
            }
            acc += cell_acc * sub_volume;
        }
        acc
    });
    Ok(partial.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn harmonic_phase_space_weight_one() {
        // ∫_0^1 (1 - r^2) 2πr dr = π/2
        let p = AnalyticPotential::harmonic(2, 1.0).unwrap();
        let r = phase_space_integral_oracle(&p, 1.0, PhaseWeight::One, QuadratureParams::default_for(2)).unwrap();
        assert!((r.spatial - PI / 2.0).abs() < 1e-5, "{}", r.spatial);
        assert!((r.omega_n - PI).abs() < 1e-14);
        assert!(r.err_est < 1e-3);
    }

    #[test]
    fn harmonic_phase_space_grad_squared() {
        // 8π ∫_0^1 r^3 (1 - r^2) dr = 2π/3
        let p = AnalyticPotential::harmonic(2, 1.0).unwrap();
        let r = phase_space_integral_oracle(&p, 1.0, PhaseWeight::GradSquared, QuadratureParams::default_for(2))
            .unwrap();
        assert!((r.spatial - 2.0 * PI / 3.0).abs() < 1e-4, "{}", r.spatial);
    }

    #[test]
    fn tiny_level_gives_tiny_integral() {
        let p = AnalyticPotential::harmonic(2, 1.0).unwrap();
        let r = phase_space_integral_oracle(&p, 1e-9, PhaseWeight::One, QuadratureParams::default_for(2)).unwrap();
        assert!(r.spatial.abs() < 1e-12, "{}", r.spatial);
    }

    #[test]
    fn ball_volumes() {
        let p2 = AnalyticPotential::harmonic(2, 1.0).unwrap();
        let v = sublevel_volume_oracle(&p2, 0.5, QuadratureParams::default_for(2)).unwrap();
        assert!((v.value - PI / 2.0).abs() < 2e-5, "{}", v.value);
        let p3 = AnalyticPotential::harmonic(3, 1.0).unwrap();
        let v = sublevel_volume_oracle(&p3, 1.0, QuadratureParams::default_for(3)).unwrap();
        assert!((v.value - 4.0 * PI / 3.0).abs() < 1e-3, "{}", v.value);
    }

    #[test]
    fn coverage_error_when_box_too_small() {
        let p = AnalyticPotential::harmonic(2, 1.0).unwrap().with_half_width(0.5).unwrap();
        let r = sublevel_volume_oracle(&p, 1.0, QuadratureParams::default_for(2));
        assert!(matches!(r, Err(Error::Coverage(_))));
    }

    #[test]
    fn translation_invariance() {
        let q = QuadratureParams::new(128, 4).unwrap();
        let p = AnalyticPotential::anisotropic(vec![1.0, 4.0], 1.0).unwrap();
        let t = p.clone().translated(vec![0.3, -0.17]).unwrap();
        for w in [PhaseWeight::One, PhaseWeight::GradSquared] {
            let a = phase_space_integral_oracle(&p, 0.7, w, q).unwrap();
            let b = phase_space_integral_oracle(&t, 0.7, w, q).unwrap();
            assert!((a.spatial - b.spatial).abs() < 1e-10 * a.spatial.abs().max(1.0));
        }
    }

    #[test]
    fn centroid_of_translated_ball() {
        let p = AnalyticPotential::harmonic(3, 1.0).unwrap().translated(vec![0.2, 0.1, -0.3]).unwrap();
        let c = sublevel_centroid(&p, 0.5, 40).unwrap();
        for (a, b) in c.iter().zip([0.2, 0.1, -0.3]) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
