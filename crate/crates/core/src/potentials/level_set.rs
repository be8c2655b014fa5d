//! Surface integrals over regular level sets `{V = s}`.
//!
//! In two dimensions the level curve is extracted by marching squares, with
//! edge crossings solved on the true potential and segment midpoints pulled
//! back onto the curve by Newton steps. In higher dimensions the level set
//! must be star-shaped about the sublevel centroid and is parametrized by
//! its radial function over a hyperspherical angular grid.

use crate::error::{Error, Result};
use crate::par;

use super::analytic::AnalyticPotential;
use super::quadrature::sublevel_centroid;
use super::unit_ball_volume;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSetParams {
    /// Marching-squares cells per dimension (n = 2).
    pub grid: usize,
    /// Cells per polar angle; the azimuth gets twice as many (n >= 3).
    pub angular: usize,
    /// Midpoint cells per dimension for the centroid (n >= 3).
    pub centroid_cells: usize,
}

impl Default for LevelSetParams {
    fn default() -> Self {
        Self { grid: 512, angular: 48, centroid_cells: 48 }
    }
}

impl LevelSetParams {
    fn coarse(&self) -> Self {
        Self { grid: (self.grid / 2).max(8), angular: (self.angular / 2).max(4), centroid_cells: self.centroid_cells }
    }
}

/// `I1 = ∫ |∇V|^{-1} dS`, `I2 = ∫ |∇V| dS` and the area of `{V = s}`,
/// each with a discretization estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSurfaceInvariants {
    pub i1: f64,
    pub i2: f64,
    pub area: f64,
    pub i1_err: f64,
    pub i2_err: f64,
    pub area_err: f64,
    pub min_grad: f64,
    pub max_grad: f64,
}

impl LevelSurfaceInvariants {
    /// `I1 I2 - area^2`, nonnegative by Cauchy–Schwarz.
    pub fn cauchy_schwarz_gap(&self) -> f64 {
        self.i1 * self.i2 - self.area * self.area
    }
}

const NEAR_CRITICAL: f64 = 1e-10;
/// Levels with `min |∇V| < REGULARITY_RATIO * max |∇V|` on the extracted set
/// are treated as critical.
pub const REGULARITY_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default)]
struct Raw {
    i1: f64,
    i2: f64,
    area: f64,
    min_grad: f64,
    max_grad: f64,
}

pub fn level_surface_invariants_oracle(
    p: &AnalyticPotential,
    s: f64,
    params: LevelSetParams,
) -> Result<LevelSurfaceInvariants> {
    if !(s > 0.0) {
        return Err(Error::InvalidInput(format!("level must be positive, got {s}")));
    }
    let (fine, coarse) = if p.dimension() == 2 {
        (march_2d(p, s, params.grid)?, march_2d(p, s, params.coarse().grid)?)
    } else {
        let center = sublevel_centroid(p, s, params.centroid_cells)?;
        (rays(p, s, &center, params.angular)?, rays(p, s, &center, params.coarse().angular)?)
    };
    Ok(LevelSurfaceInvariants {
        i1: fine.i1,
        i2: fine.i2,
        area: fine.area,
        i1_err: (fine.i1 - coarse.i1).abs(),
        i2_err: (fine.i2 - coarse.i2).abs(),
        area_err: (fine.area - coarse.area).abs(),
        min_grad: fine.min_grad,
        max_grad: fine.max_grad,
    })
}

/// Whether `s` is a regular value by the gradient-ratio rule. Levels whose
/// extraction hits a near-critical point are reported as not regular.
pub fn is_regular_value(p: &AnalyticPotential, s: f64, params: LevelSetParams) -> Result<bool> {
    match level_surface_invariants_oracle(p, s, params) {
        Ok(r) => Ok(r.min_grad >= REGULARITY_RATIO * r.max_grad),
        Err(Error::NearCritical(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Keeps the candidates that are regular values.
pub fn regular_values(p: &AnalyticPotential, candidates: &[f64], params: LevelSetParams) -> Result<Vec<f64>> {
    let flags = par::try_map_range(candidates.len(), |i| is_regular_value(p, candidates[i], params))?;
    Ok(candidates.iter().zip(flags).filter(|(_, ok)| *ok).map(|(s, _)| *s).collect())
}

fn accumulate(raw: &mut Raw, weight: f64, inv_part: f64, grad_part: f64, area_part: f64, g: f64) {
    raw.i1 += weight * inv_part;
    raw.i2 += weight * grad_part;
    raw.area += weight * area_part;
    raw.min_grad = raw.min_grad.min(g);
    raw.max_grad = raw.max_grad.max(g);
}

fn merge(parts: Vec<Result<Raw>>) -> Result<Raw> {
    let mut total = Raw { min_grad: f64::INFINITY, ..Raw::default() };
    for part in parts {
        let part = part?;
        total.i1 += part.i1;
        total.i2 += part.i2;
        total.area += part.area;
        total.min_grad = total.min_grad.min(part.min_grad);
        total.max_grad = total.max_grad.max(part.max_grad);
    }
    if total.area == 0.0 {
        return Err(Error::InvalidInput("level set is empty at this resolution".into()));
    }
    Ok(total)
}

fn march_2d(p: &AnalyticPotential, s: f64, cells: usize) -> Result<Raw> {
    let lower = p.box_lower();
    let upper = p.box_upper();
    let w = [(upper[0] - lower[0]) / cells as f64, (upper[1] - lower[1]) / cells as f64];
    let node = |i: usize, j: usize| [lower[0] + i as f64 * w[0], lower[1] + j as f64 * w[1]];
    let verts = cells + 1;
    let values: Vec<Vec<f64>> =
        par::map_range(verts, |j| (0..verts).map(|i| p.value_unchecked(&node(i, j))).collect());
    for j in 0..verts {
        for i in 0..verts {
            let edge = i == 0 || j == 0 || i == cells || j == cells;
            if edge && values[j][i] < s {
                return Err(Error::Coverage(format!("level set {{V = {s}}} reaches the box boundary")));
            }
        }
    }

    let crossing = |a: [f64; 2], va: f64, b: [f64; 2], vb: f64| -> [f64; 2] {
        // Illinois-modified regula falsi along the edge, on t in [0, 1]
        let at = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        let (mut t0, mut f0, mut t1, mut f1) = (0.0, va - s, 1.0, vb - s);
        let mut side = 0i8;
        for _ in 0..40 {
            let t = (t0 * f1 - t1 * f0) / (f1 - f0);
            let ft = p.value_unchecked(&at(t)) - s;
            if ft == 0.0 || (t1 - t0).abs() < 1e-15 {
                return at(t);
            }
            if (ft < 0.0) == (f0 < 0.0) {
                t0 = t;
                f0 = ft;
                if side == -1 {
                    f1 *= 0.5;
                }
                side = -1;
            } else {
                t1 = t;
                f1 = ft;
                if side == 1 {
                    f0 *= 0.5;
                }
                side = 1;
            }
        }
        at((t0 * f1 - t1 * f0) / (f1 - f0))
    };

    let parts = par::map_range(cells, |j| -> Result<Raw> {
        let mut raw = Raw { min_grad: f64::INFINITY, ..Raw::default() };
        let mut g = [0.0; 2];
        for i in 0..cells {
            let c = [node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)];
            let v = [values[j][i], values[j][i + 1], values[j + 1][i + 1], values[j + 1][i]];
            let inside: Vec<bool> = v.iter().map(|&x| x < s).collect();
            let mut pts: [Option<[f64; 2]>; 4] = [None; 4];
            let mut count = 0;
            for e in 0..4 {
                let (a, b) = (e, (e + 1) % 4);
                if inside[a] != inside[b] {
                    pts[e] = Some(crossing(c[a], v[a], c[b], v[b]));
                    count += 1;
                }
            }
            let pairs: Vec<(usize, usize)> = match count {
                0 => continue,
                2 => {
                    let e: Vec<usize> = (0..4).filter(|&e| pts[e].is_some()).collect();
                    vec![(e[0], e[1])]
                }
                4 => {
                    let mid = [c[0][0] + 0.5 * w[0], c[0][1] + 0.5 * w[1]];
                    if (p.value_unchecked(&mid) < s) == inside[0] {
                        vec![(0, 1), (2, 3)]
                    } else {
                        vec![(3, 0), (1, 2)]
                    }
                }
                _ => unreachable!("a square has an even number of sign changes"),
            };
            for (ea, eb) in pairs {
                let (a, b) = (pts[ea].unwrap(), pts[eb].unwrap());
                let len = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                if len == 0.0 {
                    continue;
                }
                let mut m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                for _ in 0..2 {
                    p.grad_into(&m, &mut g);
                    let g2 = g[0] * g[0] + g[1] * g[1];
                    if g2 == 0.0 {
                        break;
                    }
                    let r = (p.value_unchecked(&m) - s) / g2;
                    m = [m[0] - r * g[0], m[1] - r * g[1]];
                }
                p.grad_into(&m, &mut g);
                let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
                if gn < NEAR_CRITICAL {
                    return Err(Error::NearCritical(format!("|grad V| = {gn:e} at {m:?} on {{V = {s}}}")));
                }
                accumulate(&mut raw, len, 1.0 / gn, gn, 1.0, gn);
            }
        }
        Ok(raw)
    });
    merge(parts)
}

/// Unit direction from hyperspherical angles.
fn direction(angles: &[f64], out: &mut [f64]) {
    let n = out.len();
    let mut sin_prod = 1.0;
    for k in 0..n - 1 {
        out[k] = sin_prod * angles[k].cos();
        sin_prod *= angles[k].sin();
    }
    out[n - 1] = sin_prod;
}

// ∫ sin^e over [a, b] by composite Simpson.
fn sin_power_integral(e: usize, a: f64, b: f64) -> f64 {
    let m = 16;
    let h = (b - a) / m as f64;
    let f = |t: f64| t.sin().powi(e as i32);
    let mut acc = f(a) + f(b);
    for k in 1..m {
        acc += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

fn rays(p: &AnalyticPotential, s: f64, center: &[f64], angular: usize) -> Result<Raw> {
    let n = p.dimension();
    let polar = n - 2;
    let azimuth = 2 * angular;
    let pi = std::f64::consts::PI;
    let dpolar = pi / angular as f64;
    let daz = 2.0 * pi / azimuth as f64;
    // per-cell polar weights, exponent n-2-k for the k-th polar angle
    let polar_w: Vec<Vec<f64>> = (0..polar)
        .map(|k| {
            (0..angular)
                .map(|j| sin_power_integral(n - 2 - k, j as f64 * dpolar, (j + 1) as f64 * dpolar))
                .collect()
        })
        .collect();
    let total_w: f64 = polar_w.iter().map(|w| w.iter().sum::<f64>()).product::<f64>() * 2.0 * pi;
    let renorm = n as f64 * unit_ball_volume(n) / total_w;

    let lower = p.box_lower();
    let upper = p.box_upper();
    let polar_cells = angular.pow(polar as u32);
    let parts = par::map_range(polar_cells, |pc| -> Result<Raw> {
        let mut raw = Raw { min_grad: f64::INFINITY, ..Raw::default() };
        let mut angles = vec![0.0; n - 1];
        let mut weight = renorm * daz;
        let mut idx = pc;
        for k in 0..polar {
            let j = idx % angular;
            idx /= angular;
            angles[k] = (j as f64 + 0.5) * dpolar;
            weight *= polar_w[k][j];
        }
        let mut u = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut g = vec![0.0; n];
        for a in 0..azimuth {
            angles[n - 2] = (a as f64 + 0.5) * daz;
            direction(&angles, &mut u);
            let t_box = (0..n)
                .map(|d| {
                    if u[d] > 0.0 {
                        (upper[d] - center[d]) / u[d]
                    } else if u[d] < 0.0 {
                        (lower[d] - center[d]) / u[d]
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(f64::INFINITY, f64::min);
            let at = |t: f64, x: &mut [f64]| {
                for d in 0..n {
                    x[d] = center[d] + t * u[d];
                }
            };
            let samples = 128;
            let mut hit = None;
            for k in 1..=samples {
                let t = t_box * k as f64 / samples as f64;
                at(t, &mut x);
                let v = p.value_unchecked(&x);
                match hit {
                    None if v >= s => hit = Some(k),
                    Some(_) if v < s => {
                        return Err(Error::UnsupportedGeometry(format!(
                            "{{V < {s}}} is not star-shaped about {center:?}"
                        )))
                    }
                    _ => {}
                }
            }
            let Some(k) = hit else {
                return Err(Error::Coverage(format!("level set {{V = {s}}} reaches the box boundary")));
            };
            let (mut lo, mut hi) = (t_box * (k - 1) as f64 / samples as f64, t_box * k as f64 / samples as f64);
            for _ in 0..64 {
                let mid = 0.5 * (lo + hi);
                at(mid, &mut x);
                if p.value_unchecked(&x) < s {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let rho = 0.5 * (lo + hi);
            at(rho, &mut x);
            p.grad_into(&x, &mut g);
            let gn = g.iter().map(|c| c * c).sum::<f64>().sqrt();
            if gn < NEAR_CRITICAL {
                return Err(Error::NearCritical(format!("|grad V| = {gn:e} on {{V = {s}}}")));
            }
            let ug: f64 = u.iter().zip(&g).map(|(a, b)| a * b).sum();
            if ug <= 1e-12 * gn {
                return Err(Error::UnsupportedGeometry(format!(
                    "ray from {center:?} is tangent to {{V = {s}}}"
                )));
            }
            // dS = rho^{n-1} |∇V| / (u·∇V) dΩ
            let jac = rho.powi(n as i32 - 1) / ug;
            accumulate(&mut raw, weight, jac, jac * gn * gn, jac * gn, gn);
        }
        Ok(raw)
    });
    merge(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::RadialProfile;
    use std::f64::consts::PI;

    #[test]
    fn harmonic_circle() {
        // radius 1/2, |∇V| = 1 on the circle
        let p = AnalyticPotential::harmonic(2, 1.0).unwrap();
        let r = level_surface_invariants_oracle(&p, 0.25, LevelSetParams::default()).unwrap();
        assert!((r.i1 - PI).abs() < 1e-4, "{}", r.i1);
        assert!((r.i2 - PI).abs() < 1e-4, "{}", r.i2);
        assert!(r.i1_err < 1e-3);
    }

    #[test]
    fn radial_equality_case() {
        let prof = RadialProfile::power_law(2, 1.0, 3.0, 1.0).unwrap();
        let p = AnalyticPotential::radial(prof).unwrap();
        for s in [0.1, 0.4, 0.8] {
            let r = level_surface_invariants_oracle(&p, s, LevelSetParams::default()).unwrap();
            assert!(r.cauchy_schwarz_gap().abs() < 1e-6 * r.area * r.area, "s={s}");
        }
    }

    #[test]
    fn ellipse_is_strict() {
        // I1 = π/2, I2 = 5πs on x^2 + 4y^2 = s
        let p = AnalyticPotential::anisotropic(vec![1.0, 4.0], 1.0).unwrap();
        let r = level_surface_invariants_oracle(&p, 0.5, LevelSetParams::default()).unwrap();
        assert!((r.i1 - PI / 2.0).abs() < 1e-4);
        assert!((r.i2 - 2.5 * PI).abs() < 1e-3);
        assert!(r.cauchy_schwarz_gap() > 0.02 * r.area * r.area);
    }

    #[test]
    fn sphere_in_three_dimensions() {
        // radius sqrt(s), |∇V| = 2 sqrt(s): I1 = 2π sqrt(s), I2 = 8π s^{3/2}
        let p = AnalyticPotential::harmonic(3, 1.0).unwrap();
        let s = 0.36;
        let r = level_surface_invariants_oracle(&p, s, LevelSetParams::default()).unwrap();
        assert!((r.i1 - 2.0 * PI * s.sqrt()).abs() < 1e-9, "{}", r.i1);
        assert!((r.i2 - 8.0 * PI * s.powf(1.5)).abs() < 1e-9);
        assert!((r.area - 4.0 * PI * s).abs() < 1e-9);
    }

    #[test]
    fn ellipsoid_in_three_dimensions() {
        // I1 is the derivative of the ellipsoid volume (4π/3) s^{3/2} / sqrt(w1 w2 w3)
        let p = AnalyticPotential::anisotropic(vec![1.0, 4.0, 2.0], 1.0).unwrap();
        let s = 0.5;
        let r = level_surface_invariants_oracle(&p, s, LevelSetParams::default()).unwrap();
        let expected = 2.0 * PI * s.sqrt() / 8f64.sqrt();
        assert!((r.i1 - expected).abs() < 2e-3 * expected, "{} vs {expected}", r.i1);
        assert!(r.cauchy_schwarz_gap() > 0.0);
    }

    #[test]
    fn translated_sphere_uses_centroid() {
        let p = AnalyticPotential::harmonic(3, 1.0).unwrap().translated(vec![0.3, -0.2, 0.1]).unwrap();
        let r = level_surface_invariants_oracle(&p, 0.25, LevelSetParams::default()).unwrap();
        assert!((r.area - PI).abs() < 1e-6, "{}", r.area);
    }

    #[test]
    fn plateau_level_is_not_regular() {
        let p = AnalyticPotential::flat_annulus(2, 0.4, 0.6, 1.0).unwrap();
        assert!(is_regular_value(&p, 0.5, LevelSetParams::default()).unwrap());
        // at the plateau height the extracted curve runs through the flat
        // region where the gradient vanishes
        assert!(!is_regular_value(&p, 0.4 * 0.4, LevelSetParams::default()).unwrap());
    }
}
