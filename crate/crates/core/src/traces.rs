//! Smoothed spectral traces, their small-`h` regression, and the two trace
//! invariants as curves in `λ`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::curve::{fmt_f64, grid_from_nodes, parse_f64, Curve, UniformGrid};
use crate::error::{Error, Result};
use crate::par;
use crate::potentials::unit_ball_volume;
use crate::spectra::Spectrum;

/// Smoothed step: 1 below `center - eps`, 0 above `center + eps`, joined by
/// the degree-7 polynomial with three matching derivatives at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    center: f64,
    eps: f64,
}

/// `max |S'''|` of the smoothstep `S(t) = 35t^4 - 84t^5 + 70t^6 - 20t^7`
/// on `[0, 1]`, attained at `t = 1/2`.
const SMOOTHSTEP_THIRD_MAX: f64 = 52.5;

impl Mollifier {
    pub fn new(center: f64, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite() && center.is_finite()) {
            return Err(Error::InvalidInput(format!("mollifier needs finite center and eps > 0, got {center}, {eps}")));
        }
        Ok(Self { center, eps })
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Right end of the support.
    pub fn support_end(&self) -> f64 {
        self.center + self.eps
    }

    fn t(&self, s: f64) -> f64 {
        (s - (self.center - self.eps)) / (2.0 * self.eps)
    }

    pub fn value(&self, s: f64) -> f64 {
        let t = self.t(s);
        if t <= 0.0 {
            1.0
        } else if t >= 1.0 {
            0.0
        } else {
            let t4 = t * t * t * t;
            1.0 - t4 * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t)))
        }
    }

    /// `f^{(order)}(s)` for `order` in 1..=3.
    pub fn derivative(&self, s: f64, order: u32) -> f64 {
        let t = self.t(s);
        if t <= 0.0 || t >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - t;
        let scale = 1.0 / (2.0 * self.eps);
        match order {
            1 => -140.0 * (t * u).powi(3) * scale,
            2 => -420.0 * (t * u).powi(2) * (1.0 - 2.0 * t) * scale * scale,
            3 => -840.0 * t * u * (1.0 - 5.0 * t + 5.0 * t * t) * scale.powi(3),
            _ => panic!("mollifier derivatives are provided up to order 3"),
        }
    }

    /// `C / eps^3` with `C = 52.5 / 8` bounding `|f'''|`.
    pub fn third_derivative_bound(&self) -> f64 {
        SMOOTHSTEP_THIRD_MAX / (8.0 * self.eps.powi(3))
    }
}

/// `Σ_j mult_j f(E_j)`.
pub fn smoothed_trace(spec: &Spectrum, f: &Mollifier) -> Result<f64> {
    if f.support_end() > spec.lambda_max() * (1.0 + 1e-12) {
        return Err(Error::Truncation(format!(
            "test function reaches {} but the spectrum stops at {}",
            f.support_end(),
            spec.lambda_max()
        )));
    }
    Ok(spec.levels().iter().map(|l| l.multiplicity as f64 * f.value(l.energy)).sum())
}

/// Condition estimates above this are reported as ill-conditioned.
pub const CONDITION_LIMIT: f64 = 1e8;

/// Least-squares fit of `(2πh)^n T(h) = a0 + a2 h^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HFit {
    pub hs: Vec<f64>,
    pub a0: f64,
    pub a2: f64,
    /// Unweighted residuals `(2πh)^n T - a0 - a2 h^2`, one per `h`.
    pub residuals: Vec<f64>,
    pub residual_rms: f64,
    pub condition: f64,
}

impl HFit {
    pub fn ill_conditioned(&self) -> bool {
        !(self.condition <= CONDITION_LIMIT)
    }

    /// Whether the residuals are large against the `h^2` term they are
    /// meant to separate from.
    pub fn a2_noisy(&self) -> bool {
        let hmax = self.hs.iter().cloned().fold(0.0, f64::max);
        self.residual_rms > 0.1 * self.a2.abs() * hmax * hmax
    }
}

/// Rows are weighted by `(h_min / h)^4`, the inverse scale of the `O(h^4)`
/// remainder, so the coarse `h` values do not dominate the fit.
pub fn fit_h_expansion(traces: &[(f64, f64)], n: usize) -> Result<HFit> {
    let mut hs: Vec<f64> = traces.iter().map(|t| t.0).collect();
    if hs.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidInput("h values must be positive".into()));
    }
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    if hs.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 distinct h values, got {}", hs.len())));
    }
    let (hmin, hmax) = (hs[0], hs[hs.len() - 1]);
    if hmax < 2.0 * hmin {
        return Err(Error::InsufficientData(format!("h values must span a factor of 2, got [{hmin}, {hmax}]")));
    }
    let m = traces.len();
    let y: Vec<f64> = traces.iter().map(|(h, t)| (2.0 * std::f64::consts::PI * h).powi(n as i32) * t).collect();
    let mut design = DMatrix::zeros(m, 2);
    let mut rhs = DVector::zeros(m);
    for (i, (h, _)) in traces.iter().enumerate() {
        let w = (hmin / h).powi(4);
        design[(i, 0)] = w;
        design[(i, 1)] = w * (h / hmax).powi(2);
        rhs[i] = w * y[i];
    }
    let svd = design.clone().svd(true, true);
    let sv = &svd.singular_values;
    let condition = sv.max() / sv.min();
    let coef = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::IllConditioned(format!("h-fit design is singular: {e}")))?;
    let a0 = coef[0];
    let a2 = coef[1] / (hmax * hmax);
    let residuals: Vec<f64> = traces.iter().zip(&y).map(|((h, _), yi)| yi - a0 - a2 * h * h).collect();
    let residual_rms = (residuals.iter().map(|r| r * r).sum::<f64>() / m as f64).sqrt();
    Ok(HFit { hs: traces.iter().map(|t| t.0).collect(), a0, a2, residuals, residual_rms, condition })
}

/// Slope of `ln |residual|` against `ln h`. Needs three nonzero residuals.
pub fn residual_order(fit: &HFit) -> Result<f64> {
    let pts: Vec<(f64, f64)> = fit
        .hs
        .iter()
        .zip(&fit.residuals)
        .filter(|(_, r)| **r != 0.0)
        .map(|(h, r)| (h.ln(), r.abs().ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData("fewer than 3 nonzero residuals".into()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

/// Traces of one mollifier over every spectrum, paired with `h`.
pub fn traces_at(spectra: &[Spectrum], f: &Mollifier) -> Result<Vec<(f64, f64)>> {
    spectra.iter().map(|s| Ok((s.h(), smoothed_trace(s, f)?))).collect()
}

/// Geometric grid of 6 values halving from `0.05 lambda0`.
pub fn default_h_grid(lambda0: f64) -> Vec<f64> {
    (0..6).map(|k| 0.05 * lambda0 / f64::powi(2.0, k)).collect()
}

pub fn default_eps(lambda0: f64) -> f64 {
    0.01 * lambda0
}

/// Per-`λ` flags raised during extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flags {
    pub ill_conditioned: bool,
    pub a2_noisy: bool,
}

impl Flags {
    pub fn render(&self) -> String {
        let mut parts = Vec::new();
        if self.ill_conditioned {
            parts.push("ill_conditioned");
        }
        if self.a2_noisy {
            parts.push("a2_noisy");
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join(";")
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut f = Flags::default();
        for part in s.split(';').map(str::trim) {
            match part {
                "none" | "" => {}
                "ill_conditioned" => f.ill_conditioned = true,
                "a2_noisy" => f.a2_noisy = true,
                other => return Err(Error::Parse(format!("unknown flag {other:?}"))),
            }
        }
        Ok(f)
    }
}

/// Both invariants on a `λ` grid, with the raw `a2` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantTable {
    pub dimension: usize,
    pub grid: UniformGrid,
    pub a_est: Vec<f64>,
    pub a2: Vec<f64>,
    /// `None` when the grid does not start at 0.
    pub b_est: Option<Vec<f64>>,
    pub residual: Vec<f64>,
    pub flags: Vec<Flags>,
}

fn check_spectra(spectra: &[Spectrum]) -> Result<usize> {
    let first = spectra.first().ok_or_else(|| Error::InsufficientData("no spectra supplied".into()))?;
    if spectra.iter().any(|s| s.dimension() != first.dimension() || s.lambda_max() != first.lambda_max()) {
        return Err(Error::InvalidInput("spectra must share dimension and lambda_max".into()));
    }
    Ok(first.dimension())
}

/// Fits at every grid point. `A_est = a0 / ω_n` estimates
/// `∫_{V<λ} (λ - V)^{n/2} dx`; `B_est` is the triple antiderivative of
/// `a2` scaled by `-12 / ω_n`, estimating `∫_{V<λ} |∇V|^2 (λ - V)^{n/2} dx`.
pub fn extract_invariants(spectra: &[Spectrum], grid: &UniformGrid, eps: f64) -> Result<InvariantTable> {
    let n = check_spectra(spectra)?;
    let fits = par::try_map_range(grid.len(), |i| {
        let f = Mollifier::new(grid.x(i), eps)?;
        fit_h_expansion(&traces_at(spectra, &f)?, n)
    })?;
    let omega = unit_ball_volume(n);
    let a_est = fits.iter().map(|f| f.a0 / omega).collect();
    let a2: Vec<f64> = fits.iter().map(|f| f.a2).collect();
    let b_est = (grid.min() == 0.0).then(|| {
        let g = triple_antiderivative(&a2, grid.step());
        g.iter().map(|x| -12.0 * x / omega).collect()
    });
    Ok(InvariantTable {
        dimension: n,
        grid: *grid,
        a_est,
        a2,
        b_est,
        residual: fits.iter().map(|f| f.residual_rms).collect(),
        flags: fits
            .iter()
            .map(|f| Flags { ill_conditioned: f.ill_conditioned(), a2_noisy: f.a2_noisy() })
            .collect(),
    })
}

pub fn extract_first_invariant(spectra: &[Spectrum], grid: &UniformGrid, eps: f64) -> Result<Curve> {
    extract_invariants(spectra, grid, eps)?.first_invariant()
}

/// Needs a grid starting at 0, where the antiderivatives vanish.
pub fn extract_second_invariant(spectra: &[Spectrum], grid: &UniformGrid, eps: f64) -> Result<Curve> {
    extract_invariants(spectra, grid, eps)?.second_invariant()
}

/// Cumulative trapezoid applied three times, starting from 0.
pub fn triple_antiderivative(values: &[f64], step: f64) -> Vec<f64> {
    let once = |v: &[f64]| {
        let mut out = vec![0.0; v.len()];
        for i in 1..v.len() {
            out[i] = out[i - 1] + 0.5 * step * (v[i - 1] + v[i]);
        }
        out
    };
    once(&once(&once(values)))
}

impl InvariantTable {
    /// The first `len` grid points.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        let len = len.min(self.grid.len());
        let cut = |v: &Vec<f64>| v[..len].to_vec();
        Ok(Self {
            dimension: self.dimension,
            grid: UniformGrid::new(self.grid.min(), self.grid.x(len - 1), len)?,
            a_est: cut(&self.a_est),
            a2: cut(&self.a2),
            b_est: self.b_est.as_ref().map(cut),
            residual: cut(&self.residual),
            flags: self.flags[..len].to_vec(),
        })
    }

    pub fn first_invariant(&self) -> Result<Curve> {
        let err = self.residual.iter().map(|r| r / unit_ball_volume(self.dimension)).collect();
        Curve::new("A_est", self.grid, self.a_est.clone())?.with_err_est(err)
    }

    pub fn second_invariant(&self) -> Result<Curve> {
        let b = self.b_est.as_ref().ok_or_else(|| {
            Error::InvalidInput(format!(
                "second invariant needs a lambda grid starting at 0, got {}",
                self.grid.min()
            ))
        })?;
        Curve::new("B_est", self.grid, b.clone())
    }

    /// Writes `lambda,A_est,a2,B_est,residual,flags`. A missing `B_est` is
    /// written as `nan`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["lambda", "A_est", "a2", "B_est", "residual", "flags"])?;
        for i in 0..self.grid.len() {
            let b = self.b_est.as_ref().map_or(f64::NAN, |b| b[i]);
            w.write_record([
                fmt_f64(self.grid.x(i)),
                fmt_f64(self.a_est[i]),
                fmt_f64(self.a2[i]),
                fmt_f64(b),
                fmt_f64(self.residual[i]),
                self.flags[i].render(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, dimension: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["lambda", "A_est", "a2", "B_est", "residual", "flags"] {
            return Err(Error::Parse(format!("unexpected invariants header {headers:?}")));
        }
        let (mut xs, mut a, mut a2, mut b, mut res, mut flags) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 6 {
                return Err(Error::Parse(format!("invariants row has {} fields", rec.len())));
            }
            xs.push(parse_f64(&rec[0])?);
            a.push(parse_f64(&rec[1])?);
            a2.push(parse_f64(&rec[2])?);
            b.push(parse_f64(&rec[3])?);
            res.push(parse_f64(&rec[4])?);
            flags.push(Flags::parse(&rec[5])?);
        }
        let grid = grid_from_nodes(&xs)?;
        let b_est = if b.iter().all(|x| x.is_nan()) { None } else { Some(b) };
        Ok(Self { dimension, grid, a_est: a, a2, b_est, residual: res, flags })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::exact_harmonic_spectrum;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn mollifier_shape() {
        let f = Mollifier::new(0.5, 0.1).unwrap();
        assert_eq!(f.value(0.4), 1.0);
        assert!(f.value(0.6).abs() < 1e-13);
        assert_eq!(f.value(0.61), 0.0);
        assert!((f.value(0.5) - 0.5).abs() < 1e-15);
        // derivatives against differences of the next-lower order
        let d = 1e-6;
        for s in [0.43, 0.5, 0.57] {
            assert!(((f.value(s + d) - f.value(s - d)) / (2.0 * d) - f.derivative(s, 1)).abs() < 1e-6);
            for k in 1..3 {
                let fd = (f.derivative(s + d, k) - f.derivative(s - d, k)) / (2.0 * d);
                assert!((fd - f.derivative(s, k + 1)).abs() < 1e-4 * (1.0 + fd.abs()), "order {k} at {s}");
            }
        }
    }

    #[test]
    fn third_derivative_bound_is_sharp() {
        let f = Mollifier::new(1.0, 0.05).unwrap();
        let peak = (0..=10_000)
            .map(|i| f.derivative(0.95 + 0.1 * i as f64 / 10_000.0, 3).abs())
            .fold(0.0, f64::max);
        assert!(peak <= f.third_derivative_bound() * (1.0 + 1e-12));
        assert!(peak > 0.999 * f.third_derivative_bound());
    }

    #[test]
    fn trace_examples() {
        let s = exact_harmonic_spectrum(2, 0.1, 1.0).unwrap();
        let t = smoothed_trace(&s, &Mollifier::new(0.5, 0.05).unwrap()).unwrap();
        assert!((t - 3.0).abs() < 1e-15);
        let all = smoothed_trace(&s, &Mollifier::new(0.5, 0.5).unwrap()).unwrap();
        assert!(all > 0.0);
        let full = Mollifier::new(-5.0, 6.0).unwrap();
        assert!((smoothed_trace(&s, &full).unwrap() - 15.0).abs() < 1e-12 || full.value(1.0) < 1.0);
        assert!(matches!(smoothed_trace(&s, &Mollifier::new(0.98, 0.05).unwrap()), Err(Error::Truncation(_))));
        let empty = exact_harmonic_spectrum(2, 0.1, 0.15).unwrap();
        assert_eq!(smoothed_trace(&empty, &Mollifier::new(0.1, 0.05).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn flat_region_counts_everything() {
        let s = exact_harmonic_spectrum(2, 0.1, 2.0).unwrap();
        // the transition [1.05, 1.15] falls in the gap between 1.0 and 1.2
        let f = Mollifier::new(1.1, 0.05).unwrap();
        let below: u64 = s.levels().iter().filter(|l| l.energy <= 1.0).map(|l| l.multiplicity).sum();
        assert_eq!(smoothed_trace(&s, &f).unwrap(), below as f64);
    }

    #[test]
    fn exact_model_is_recovered() {
        let data: Vec<(f64, f64)> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| (h, (1.0 - 0.3 * h * h) / (2.0 * PI * h).powi(2)))
            .collect();
        let fit = fit_h_expansion(&data, 2).unwrap();
        assert!((fit.a0 - 1.0).abs() < 1e-10);
        assert!((fit.a2 + 0.3).abs() < 1e-10);
        assert!(fit.residual_rms < 1e-12);
        assert!(!fit.ill_conditioned());
    }

    #[test]
    fn fit_needs_enough_h() {
        assert!(matches!(fit_h_expansion(&[(0.1, 1.0), (0.05, 1.0)], 2), Err(Error::InsufficientData(_))));
        assert!(matches!(
            fit_h_expansion(&[(0.1, 1.0), (0.08, 1.0), (0.06, 1.0)], 2),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn first_invariant_near_zero_vanishes() {
        let spectra: Vec<Spectrum> =
            [0.04, 0.02, 0.01].iter().map(|&h| exact_harmonic_spectrum(2, h, 1.05).unwrap()).collect();
        let grid = UniformGrid::new(0.0, 0.005, 2).unwrap();
        let a = extract_first_invariant(&spectra, &grid, 0.01).unwrap();
        assert_eq!(a.values(), &[0.0, 0.0]);
    }

    #[test]
    fn doubling_multiplicities_doubles_output() {
        let spectra: Vec<Spectrum> =
            [0.04, 0.02, 0.01].iter().map(|&h| exact_harmonic_spectrum(2, h, 1.05).unwrap()).collect();
        let doubled: Vec<Spectrum> = spectra.iter().map(|s| s.with_scaled_multiplicities(2).unwrap()).collect();
        let grid = UniformGrid::new(0.0, 1.0, 11).unwrap();
        let a = extract_first_invariant(&spectra, &grid, 0.01).unwrap();
        let b = extract_first_invariant(&doubled, &grid, 0.01).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn triple_antiderivative_of_constant() {
        // x^3 at 1; the third pass integrates a quadratic with error h^2/2
        let g = triple_antiderivative(&vec![6.0; 101], 0.01);
        assert!((g[100] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn table_round_trip() {
        let spectra: Vec<Spectrum> =
            [0.04, 0.02, 0.01].iter().map(|&h| exact_harmonic_spectrum(2, h, 1.05).unwrap()).collect();
        let grid = UniformGrid::new(0.0, 1.0, 21).unwrap();
        let t = extract_invariants(&spectra, &grid, 0.02).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = InvariantTable::read_csv(buf.as_slice(), 2).unwrap();
        assert_eq!(back, t);
    }

    proptest! {
        #[test]
        fn trace_is_monotone_in_the_test_function(c in 0.1f64..0.9, e1 in 0.01f64..0.1, shift in 0.0f64..0.2) {
            // g is f moved right, so f <= g pointwise
            let s = exact_harmonic_spectrum(2, 0.01, 1.3).unwrap();
            let f = Mollifier::new(c, e1).unwrap();
            let g = Mollifier::new(c + shift, e1).unwrap();
            prop_assert!(smoothed_trace(&s, &f).unwrap() <= smoothed_trace(&s, &g).unwrap() + 1e-9);
        }

        #[test]
        fn mollifier_is_nonincreasing(c in -1.0f64..1.0, e in 0.001f64..1.0, a in -3.0f64..3.0, d in 0.0f64..1.0) {
            let f = Mollifier::new(c, e).unwrap();
            prop_assert!(f.value(a + d) <= f.value(a));
            prop_assert!(f.derivative(a, 3).abs() <= f.third_derivative_bound() * (1.0 + 1e-12));
        }
    }
}
