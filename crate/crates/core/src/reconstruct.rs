//! From the volume curve to the radial profile, and the radiality
//! certificates built from the surface invariants.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::curve::{fmt_f64, Curve, UniformGrid};
use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::isotonic::{isotonic_nondecreasing, max_decrease};
use crate::potentials::{isoperimetric_area, unit_ball_volume, RadialProfile};

/// Largest tolerated decrease of `v`, relative to `max |v|`, before the
/// isotonic projection is refused.
pub const MONOTONE_TOLERANCE: f64 = 0.05;

/// `ρ(s) = (v(s) / ω_n)^{1/n}` inverted on a uniform `r` grid over
/// `[0, ρ(s_max)]` with as many points as `v`.
///
/// Where `v` vanishes on an initial segment the profile starts at the last
/// level with zero volume.
pub fn radial_profile_from_volume(v: &Curve, n: usize) -> Result<RadialProfile> {
    let vals = v.values();
    let scale = vals.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::Inversion("volume curve vanishes identically".into()));
    }
    let drop = max_decrease(vals);
    if drop > MONOTONE_TOLERANCE * scale {
        return Err(Error::Inversion(format!(
            "volume curve decreases by {drop:e}, more than {}% of its range",
            100.0 * MONOTONE_TOLERANCE
        )));
    }
    let mono: Vec<f64> = isotonic_nondecreasing(vals, None).into_iter().map(|x| x.max(0.0)).collect();
    let xs = v.grid().nodes();
    let omega = unit_ball_volume(n);
    let top = *mono.last().unwrap();
    if top <= 0.0 {
        return Err(Error::Inversion("volume curve has no positive values".into()));
    }
    let rho_top = (top / omega).powf(1.0 / n as f64);
    let start = mono.iter().rposition(|&x| x <= 0.0).map_or(xs[0], |i| xs[i]);
    let interp = MonotoneCubic::new(xs.clone(), mono.clone())?;
    let points = v.len();
    let mut rs = vec![0.0];
    let mut values = vec![start];
    for i in 1..points {
        let r = rho_top * i as f64 / (points - 1) as f64;
        let target = omega * r.powi(n as i32);
        let s = if i == points - 1 {
            xs[xs.len() - 1]
        } else if target <= mono[0] {
            // below the first recovered volume: collapses onto the floor
            xs[0]
        } else {
            interp.solve_increasing(target).ok_or_else(|| {
                Error::Inversion(format!("volume {target} at r = {r} is outside the recovered range"))
            })?
        };
        // jumps in v collapse several radii onto one level; keep the first
        if s > *values.last().unwrap() {
            rs.push(r);
            values.push(s);
        }
    }
    RadialProfile::tabulated(n, rs, values).map_err(|e| Error::Inversion(format!("recovered profile: {e}")))
}

/// Nodes of `v` fitted for the bottom power law.
pub const BOTTOM_FIT_NODES: usize = 5;

/// Replaces `v` below `clean_from` by `v_c ((s - floor) / (s_c - floor))^q`,
/// where `s_c` is the first node at or above `clean_from` and `q` is the
/// log-log slope of `v` against `s - floor` over the next
/// [`BOTTOM_FIT_NODES`] nodes. Nodes at or below `floor` get 0.
///
/// Returns `v` unchanged when the clean nodes do not support the fit.
pub fn patch_bottom(v: &Curve, floor: f64, clean_from: f64) -> Result<Curve> {
    let xs = v.grid().nodes();
    let vals = v.values();
    let Some(c) = xs.iter().position(|&x| x >= clean_from - 1e-9 * v.grid().step()) else {
        return Ok(v.clone());
    };
    if c == 0 || c + BOTTOM_FIT_NODES > xs.len() || xs[c] <= floor {
        return Ok(v.clone());
    }
    let pts: Vec<(f64, f64)> = (c..c + BOTTOM_FIT_NODES)
        .filter(|&i| vals[i] > 0.0)
        .map(|i| ((xs[i] - floor).ln(), vals[i].ln()))
        .collect();
    if pts.len() < BOTTOM_FIT_NODES {
        return Ok(v.clone());
    }
    let m = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let q = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    if !(q > 0.0 && q.is_finite()) {
        return Ok(v.clone());
    }
    let mut out = vals.to_vec();
    for i in 0..c {
        out[i] = if xs[i] <= floor { 0.0 } else { vals[c] * ((xs[i] - floor) / (xs[c] - floor)).powf(q) };
    }
    let curve = Curve::new(v.label().to_string(), *v.grid(), out)?;
    match v.err_est() {
        Some(e) => curve.with_err_est(e.to_vec()),
        None => Ok(curve),
    }
}

/// `D(s) = I1 I2 - S_iso(v)^2` with `S_iso` the area of the ball of volume
/// `v(s)`. Error estimates are propagated to first order when all three
/// inputs carry them.
pub fn isoperimetric_defect(i1: &Curve, i2: &Curve, v: &Curve, n: usize) -> Result<Curve> {
    if !i1.same_grid(i2) || !i1.same_grid(v) {
        return Err(Error::InvalidInput("I1, I2 and v must share a grid".into()));
    }
    let vals: Vec<f64> = (0..i1.len())
        .map(|k| {
            let s = isoperimetric_area(n, v.values()[k]);
            i1.values()[k] * i2.values()[k] - s * s
        })
        .collect();
    let d = Curve::new("D", *i1.grid(), vals)?;
    match (i1.err_est(), i2.err_est(), v.err_est()) {
        (Some(e1), Some(e2), Some(ev)) => {
            let nf = n as f64;
            let err = (0..i1.len())
                .map(|k| {
                    let (a, b, vv) = (i1.values()[k], i2.values()[k], v.values()[k].max(0.0));
                    let s = isoperimetric_area(n, vv);
                    let ds2 = if vv > 0.0 { 2.0 * (nf - 1.0) / nf * s * s / vv * ev[k] } else { 0.0 };
                    b.abs() * e1[k] + a.abs() * e2[k] + ds2
                })
                .collect();
            d.with_err_est(err)
        }
        _ => Ok(d),
    }
}

/// `D / (I1 I2)`, zero where the product vanishes.
pub fn relative_defect(d: &Curve, i1: &Curve, i2: &Curve) -> Result<Curve> {
    if !d.same_grid(i1) || !d.same_grid(i2) {
        return Err(Error::InvalidInput("curves must share a grid".into()));
    }
    let vals = (0..d.len())
        .map(|k| {
            let p = i1.values()[k] * i2.values()[k];
            if p > 0.0 {
                d.values()[k] / p
            } else {
                0.0
            }
        })
        .collect();
    Curve::new("relative_defect", *d.grid(), vals)
}

/// `F(s) = I2(s) / I1(s)`, which is `|∇V|^2` on `{V = s}` only when the
/// defect vanishes.
pub fn gradient_modulus_profile(i1: &Curve, i2: &Curve) -> Result<Curve> {
    if !i1.same_grid(i2) {
        return Err(Error::InvalidInput("I1 and I2 must share a grid".into()));
    }
    let mut vals = Vec::with_capacity(i1.len());
    for k in 0..i1.len() {
        let a = i1.values()[k];
        if !(a > 0.0) {
            return Err(Error::Division { s: i1.x(k) });
        }
        vals.push(i2.values()[k] / a);
    }
    Curve::new("F", *i1.grid(), vals)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Spectral,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceChain {
    pub volume: Source,
    pub surface_invariants: Source,
    pub stages: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageTolerances {
    pub monotone_violation: f64,
    pub metric_range: [f64; 2],
    pub defect_noise_factor: f64,
    /// Relative noise assumed when no input carries an error estimate.
    pub default_noise: f64,
}

impl Default for StageTolerances {
    fn default() -> Self {
        Self { monotone_violation: MONOTONE_TOLERANCE, metric_range: [0.1, 0.9], defect_noise_factor: 3.0, default_noise: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
    pub max_rel_error: f64,
    pub rms_rel_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Radiality {
    pub max_relative_defect: f64,
    pub noise: f64,
    pub radial: bool,
}

/// Stage outputs gathered for [`build_report`].
#[derive(Debug, Clone, Default)]
pub struct PipelineOutputs {
    pub dimension: usize,
    pub volume: Option<Curve>,
    pub i1: Option<Curve>,
    pub i2: Option<Curve>,
    pub provenance: Option<ProvenanceChain>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionReport {
    pub dimension: usize,
    pub profile: Vec<[f64; 2]>,
    pub defect: Vec<[f64; 2]>,
    pub relative_defect: Vec<[f64; 2]>,
    #[serde(rename = "F")]
    pub f: Vec<[f64; 2]>,
    pub metrics: Option<Metrics>,
    pub radiality: Radiality,
    pub tolerances: StageTolerances,
    pub provenance: ProvenanceChain,
    #[serde(skip)]
    pub recovered: Option<RadialProfile>,
}

const METRIC_POINTS: usize = 201;

/// Max and RMS relative error of `recovered` against `reference` on
/// `[lo, hi] · ρ_top`, with `ρ_top` the recovered radius at the top level.
pub fn profile_error(recovered: &RadialProfile, reference: &RadialProfile, range: [f64; 2]) -> Metrics {
    let top = recovered.r0();
    let (r_min, r_max) = (range[0] * top, range[1] * top);
    let errs: Vec<f64> = (0..METRIC_POINTS)
        .map(|i| {
            let r = r_min + (r_max - r_min) * i as f64 / (METRIC_POINTS - 1) as f64;
            let exact = reference.eval(r);
            (recovered.eval(r) - exact).abs() / exact.abs()
        })
        .collect();
    Metrics {
        r_min,
        r_max,
        points: METRIC_POINTS,
        max_rel_error: errs.iter().cloned().fold(0.0, f64::max),
        rms_rel_error: (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt(),
    }
}

fn pairs(c: &Curve) -> Vec<[f64; 2]> {
    c.points().map(|(x, y)| [x, y]).collect()
}

/// Trims leading grid points up to the last one with `I1 <= 0`, where `F`
/// is undefined.
fn positive_tail(i1: &Curve, i2: &Curve) -> Result<Option<(Curve, Curve)>> {
    let start = match i1.values().iter().rposition(|&x| !(x > 0.0)) {
        None => return Ok(Some((i1.clone(), i2.clone()))),
        Some(k) => k + 1,
    };
    if i1.len() - start < 2 {
        return Ok(None);
    }
    let grid = UniformGrid::new(i1.x(start), i1.grid().max(), i1.len() - start)?;
    let cut = |c: &Curve| Curve::new(c.label().to_string(), grid, c.values()[start..].to_vec());
    Ok(Some((cut(i1)?, cut(i2)?)))
}

pub fn build_report(
    out: &PipelineOutputs,
    reference: Option<&RadialProfile>,
    tol: StageTolerances,
) -> Result<ReconstructionReport> {
    let n = out.dimension;
    let v = out.volume.as_ref().ok_or_else(|| Error::Assembly("volume curve".into()))?;
    let i1 = out.i1.as_ref().ok_or_else(|| Error::Assembly("surface invariant I1".into()))?;
    let i2 = out.i2.as_ref().ok_or_else(|| Error::Assembly("surface invariant I2".into()))?;
    let provenance = out.provenance.clone().ok_or_else(|| Error::Assembly("provenance chain".into()))?;
    let profile = radial_profile_from_volume(v, n)?;
    let defect = isoperimetric_defect(i1, i2, v, n)?;
    let rel = relative_defect(&defect, i1, i2)?;

    let s_top = v.grid().max();
    let central = |s: f64| s >= tol.metric_range[0] * s_top && s <= tol.metric_range[1] * s_top;
    let mut max_rel = 0.0f64;
    let mut noise = 0.0f64;
    let have_err = i1.err_est().is_some() && i2.err_est().is_some() && v.err_est().is_some();
    for k in 0..v.len() {
        if !central(v.x(k)) {
            continue;
        }
        max_rel = max_rel.max(rel.values()[k].abs());
        if have_err {
            let (a, b, vv) = (i1.values()[k], i2.values()[k], v.values()[k]);
            let nf = n as f64;
            let local = i1.err_est().unwrap()[k] / a.abs()
                + i2.err_est().unwrap()[k] / b.abs()
                + 2.0 * (nf - 1.0) / nf * v.err_est().unwrap()[k] / vv.abs();
            if local.is_finite() {
                noise = noise.max(local);
            }
        }
    }
    if !have_err {
        noise = tol.default_noise;
    }
    let radiality =
        Radiality { max_relative_defect: max_rel, noise, radial: max_rel < tol.defect_noise_factor * noise };

    let f = match positive_tail(i1, i2)? {
        Some((a, b)) => pairs(&gradient_modulus_profile(&a, &b)?),
        None => Vec::new(),
    };
    let metrics = reference.map(|r| profile_error(&profile, r, tol.metric_range));
    let table = match profile.shape() {
        crate::potentials::ProfileShape::Table(t) => {
            let (x, y) = t.nodes();
            x.iter().zip(y).map(|(a, b)| [*a, *b]).collect()
        }
        _ => profile.sample(v.len()).into_iter().map(|(a, b)| [a, b]).collect(),
    };
    Ok(ReconstructionReport {
        dimension: n,
        profile: table,
        defect: pairs(&defect),
        relative_defect: pairs(&rel),
        f,
        metrics,
        radiality,
        tolerances: tol,
        provenance,
        recovered: Some(profile),
    })
}

impl ReconstructionReport {
    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    /// `r,R` rows with 17 significant digits.
    pub fn write_profile_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["r", "R"])?;
        for [r, v] in &self.profile {
            w.write_record([fmt_f64(*r), fmt_f64(*v)])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn curve(points: usize, f: impl Fn(f64) -> f64) -> Curve {
        Curve::from_fn("c", UniformGrid::new(0.0, 1.0, points).unwrap(), f)
    }

    #[test]
    fn two_dimensional_quadratic() {
        let p = radial_profile_from_volume(&curve(201, |s| PI * s), 2).unwrap();
        assert!((p.r0() - 1.0).abs() < 1e-12);
        for i in 1..100 {
            let r = i as f64 / 100.0;
            assert!((p.eval(r) - r * r).abs() < 1e-6 * r * r.max(0.1), "r={r}");
        }
    }

    #[test]
    fn three_dimensional_quadratic() {
        let p = radial_profile_from_volume(&curve(201, |s| 4.0 * PI / 3.0 * s.powf(1.5)), 3).unwrap();
        for i in 10..100 {
            let r = i as f64 / 100.0;
            assert!((p.eval(r) / (r * r) - 1.0).abs() < 2e-3, "r={r}: {}", p.eval(r) / (r * r) - 1.0);
        }
    }

    #[test]
    fn zero_initial_segment_sets_the_floor() {
        let p = radial_profile_from_volume(&curve(101, |s| PI * (s - 0.2).max(0.0)), 2).unwrap();
        assert!((p.eval(0.0) - 0.2).abs() < 1e-12);
        assert!((p.eval(0.5) - 0.45).abs() < 1e-5);
    }

    #[test]
    fn bottom_patch_follows_local_power_law() {
        // v = 2 (s - 0.1)^1.5 above the floor, garbage below 0.3
        let v = curve(101, |s| if s < 0.3 { 5.0 } else { 2.0 * (s - 0.1f64).powf(1.5) });
        let p = patch_bottom(&v, 0.1, 0.3).unwrap();
        for (s, y) in p.points() {
            let exact = 2.0 * (s - 0.1f64).max(0.0).powf(1.5);
            assert!((y - exact).abs() < 1e-12, "s={s}");
        }
        assert_eq!(patch_bottom(&v, 0.1, 0.99).unwrap(), v);
    }

    #[test]
    fn decreasing_volume_is_refused() {
        let bad = curve(50, |s| if s < 0.5 { s } else { 0.5 - 0.2 * (s - 0.5) });
        assert!(matches!(radial_profile_from_volume(&bad, 2), Err(Error::Inversion(_))));
    }

    #[test]
    fn oscillator_defect_vanishes() {
        let i1 = curve(101, |_| PI);
        let i2 = curve(101, |s| 4.0 * PI * s);
        let v = curve(101, |s| PI * s);
        let d = isoperimetric_defect(&i1, &i2, &v, 2).unwrap();
        assert!(d.values().iter().all(|x| x.abs() < 1e-12));
        let f = gradient_modulus_profile(&i1, &i2).unwrap();
        for (s, y) in f.points() {
            assert!((y - 4.0 * s).abs() < 1e-12);
        }
    }

    #[test]
    fn ellipse_defect_is_positive() {
        // x^2 + 4y^2: I1 = π/2, I2 = 5πs, v = πs/2
        let i1 = curve(101, |_| PI / 2.0);
        let i2 = curve(101, |s| 5.0 * PI * s);
        let v = curve(101, |s| PI * s / 2.0);
        let d = isoperimetric_defect(&i1, &i2, &v, 2).unwrap();
        let rel = relative_defect(&d, &i1, &i2).unwrap();
        assert!((rel.values()[50] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn unit_speed_profile() {
        let f = gradient_modulus_profile(&curve(11, |s| 1.0 + s), &curve(11, |s| 1.0 + s)).unwrap();
        assert!(f.values().iter().all(|&x| (x - 1.0).abs() < 1e-15));
        assert!(matches!(
            gradient_modulus_profile(&curve(11, |s| s - 0.5), &curve(11, |_| 1.0)),
            Err(Error::Division { .. })
        ));
    }

    #[test]
    fn report_with_and_without_reference() {
        let out = PipelineOutputs {
            dimension: 2,
            volume: Some(curve(201, |s| PI * s)),
            i1: Some(curve(201, |_| PI)),
            i2: Some(curve(201, |s| 4.0 * PI * s)),
            provenance: Some(ProvenanceChain {
                volume: Source::Oracle,
                surface_invariants: Source::Oracle,
                stages: vec!["closed form".into()],
            }),
        };
        let reference = RadialProfile::power_law(2, 1.0, 2.0, 1.0).unwrap();
        let r = build_report(&out, Some(&reference), StageTolerances::default()).unwrap();
        assert!(r.metrics.unwrap().max_rel_error < 1e-5);
        assert!(r.radiality.radial);
        let r = build_report(&out, None, StageTolerances::default()).unwrap();
        assert!(r.metrics.is_none());
        let mut buf = Vec::new();
        r.write_json(&mut buf).unwrap();
        let json: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        for key in ["profile", "defect", "F", "metrics", "provenance"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        let missing = PipelineOutputs { i2: None, ..out };
        assert!(matches!(build_report(&missing, None, StageTolerances::default()), Err(Error::Assembly(_))));
    }

    proptest! {
        #[test]
        fn scale_equivariance(c in 0.2f64..5.0, p in 0.5f64..3.0) {
            // v -> c v scales ρ by c^{1/n}, so R_c(c^{1/n} r) = R(r)
            let base = radial_profile_from_volume(&curve(101, |s| PI * s.powf(p)), 2).unwrap();
            let scaled = radial_profile_from_volume(&curve(101, |s| c * PI * s.powf(p)), 2).unwrap();
            for i in 1..20 {
                let r = 0.05 * i as f64 * base.r0();
                prop_assert!((scaled.eval(c.sqrt() * r) - base.eval(r)).abs() < 1e-9 + 1e-6 * base.eval(r));
            }
        }

        #[test]
        fn strictly_increasing_output(p in 0.3f64..3.0) {
            let prof = radial_profile_from_volume(&curve(81, |s| s.powf(p) + s), 3).unwrap();
            let samples = prof.sample(200);
            prop_assert!(samples.windows(2).all(|w| w[1].1 > w[0].1));
        }
    }
}
