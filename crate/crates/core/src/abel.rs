//! Riemann–Liouville integrals `J^α g(λ) = Γ(α)^{-1} ∫_0^λ (λ - s)^{α-1} g(s) ds`
//! and the inversions from the trace invariants to volume and surface
//! curves.

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::isotonic::{isotonic_nondecreasing, max_decrease};

/// Fractional order in `[0, 12]`; order 0 is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracOrder(f64);

impl FracOrder {
    pub const MAX: f64 = 12.0;

    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=Self::MAX).contains(&alpha) {
            return Err(Error::InvalidInput(format!("fractional order must lie in [0, 12], got {alpha}")));
        }
        Ok(Self(alpha))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Product-integration weights: with `g` linear between nodes,
/// `J^α g(t_k) = Δ^α / Γ(α + 2) (w0_k g_0 + Σ_{j=1}^k c_{k-j} g_j)`.
fn toeplitz_weights(alpha: f64, len: usize) -> Vec<f64> {
    let p = alpha + 1.0;
    (0..len)
        .map(|m| {
            if m == 0 {
                1.0
            } else {
                let m = m as f64;
                (m + 1.0).powf(p) - 2.0 * m.powf(p) + (m - 1.0).powf(p)
            }
        })
        .collect()
}

fn first_column_weight(alpha: f64, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let k = k as f64;
    (k - 1.0).powf(alpha + 1.0) - (k - alpha - 1.0) * k.powf(alpha)
}

/// Sizes above this use FFT convolution for the Toeplitz part.
const DIRECT_LIMIT: usize = 512;

fn causal_convolution(kernel: &[f64], signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    if n <= DIRECT_LIMIT {
        return (0..n).map(|k| (0..=k).map(|j| kernel[k - j] * signal[j]).sum()).collect();
    }
    let size = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let pad = |v: &[f64]| {
        let mut out: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
        out.resize(size, Complex::new(0.0, 0.0));
        out
    };
    let mut a = pad(&kernel[..n]);
    let mut b = pad(signal);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    a[..n].iter().map(|c| c.re / size as f64).collect()
}

fn check_origin(g: &Curve) -> Result<()> {
    if g.grid().min() != 0.0 {
        return Err(Error::InvalidInput(format!(
            "fractional integrals need a grid starting at 0, got {}",
            g.grid().min()
        )));
    }
    Ok(())
}

fn base_rule(values: &[f64], step: f64, alpha: f64) -> Vec<f64> {
    let n = values.len();
    let c = toeplitz_weights(alpha, n);
    let mut shifted = values.to_vec();
    shifted[0] = 0.0;
    let conv = causal_convolution(&c, &shifted);
    let scale = step.powf(alpha) / gamma(alpha + 2.0);
    (0..n).map(|k| scale * (first_column_weight(alpha, k) * values[0] + conv[k])).collect()
}

/// Exponents on which the corrected rule is exact: the base rule already
/// integrates `1` and `s` exactly, and a starting correction adds `s^{1/2}`,
/// the leading power at the origin in odd dimensions.
const STARTING_EXPONENTS: [f64; 3] = [0.0, 0.5, 1.0];

/// Per-node starting weights on `g_0, g_1, g_2`. At the first few nodes,
/// where the three-node weights would make a combined weight negative, only
/// `g_0, g_1` are corrected and exactness on `s` is given up. Empty below 3
/// nodes.
fn starting_weights(alpha: f64, len: usize, step: f64) -> Vec<[f64; 3]> {
    if len < 3 {
        return Vec::new();
    }
    let nodes: Vec<f64> = (0..len).map(|k| k as f64 * step).collect();
    let sampled: Vec<f64> = nodes.iter().map(|t| t.sqrt()).collect();
    let approx = base_rule(&sampled, step, alpha);
    let exact = gamma(1.5) / gamma(alpha + 1.5);
    // M[γ][j] = (j Δ)^γ with 0^0 = 1
    let m = nalgebra::Matrix3::from_fn(|r, j| nodes[j].powf(STARTING_EXPONENTS[r]));
    let lu = m.lu();
    let c = toeplitz_weights(alpha, len);
    let scale = step.powf(alpha) / gamma(alpha + 2.0);
    let two = nalgebra::Matrix2::new(1.0, 1.0, 0.0, nodes[1].sqrt());
    let two = two.try_inverse().expect("distinct nodes");
    (0..len)
        .map(|k| {
            let defect = exact * nodes[k].powf(alpha + 0.5) - approx[k];
            let base = |j: usize| match j {
                0 => scale * first_column_weight(alpha, k),
                j if j <= k => scale * c[k - j],
                _ => 0.0,
            };
            // keep every combined weight nonnegative so the rule stays positive
            let w = lu.solve(&nalgebra::Vector3::new(0.0, defect, 0.0)).expect("distinct nodes and exponents");
            if (0..3).all(|j| base(j) + w[j] >= 0.0) {
                return [w[0], w[1], w[2]];
            }
            // fewer nodes: exact on 1 and s^{1/2} only
            let w = two * nalgebra::Vector2::new(0.0, defect);
            if (0..2).all(|j| base(j) + w[j] >= 0.0) {
                return [w[0], w[1], 0.0];
            }
            [0.0; 3]
        })
        .collect()
}

fn frac_values(values: &[f64], step: f64, alpha: f64) -> Vec<f64> {
    if alpha == 0.0 {
        return values.to_vec();
    }
    let mut out = base_rule(values, step, alpha);
    for (k, w) in starting_weights(alpha, values.len(), step).into_iter().enumerate() {
        out[k] += (0..3).map(|j| w[j] * values[j]).sum::<f64>();
    }
    out
}

/// `J^α g` on the grid of `g`, which must start at 0. Product integration
/// of the piecewise-linear interpolant, with starting weights so that the
/// rule is also exact on `s^{1/2}` wherever that keeps all weights
/// nonnegative.
pub fn frac_integral(g: &Curve, alpha: FracOrder) -> Result<Curve> {
    check_origin(g)?;
    let vals = frac_values(g.values(), g.grid().step(), alpha.value());
    Curve::new(format!("J^{}[{}]", alpha.value(), g.label()), *g.grid(), vals)
}

/// `∫_0^λ (λ - s)^{α-1} g(s) ds = Γ(α) J^α g`.
pub fn abel_integral(g: &Curve, alpha: FracOrder) -> Result<Curve> {
    if alpha.value() == 0.0 {
        return Err(Error::InvalidInput("the unnormalized Abel integral needs a positive order".into()));
    }
    Ok(frac_integral(g, alpha)?.scaled(gamma(alpha.value())))
}

/// `max |J^α J^β g - J^{α+β} g| / max |J^{α+β} g|`, or the absolute
/// difference when the right side vanishes.
pub fn semigroup_defect(g: &Curve, alpha: FracOrder, beta: FracOrder) -> Result<f64> {
    check_origin(g)?;
    let step = g.grid().step();
    let composed = frac_values(&frac_values(g.values(), step, beta.value()), step, alpha.value());
    let direct = frac_values(g.values(), step, alpha.value() + beta.value());
    let diff = composed.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = direct.iter().map(|x| x.abs()).fold(0.0, f64::max);
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeScheme {
    /// `(2(f_{i+1} - f_{i-1}) + (f_{i+2} - f_{i-2})) / 8Δ`, which also
    /// annihilates the grid-scale oscillation.
    SmoothedFivePoint,
    /// `(f_{i+1} - f_{i-1}) / 2Δ`.
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionConfig {
    /// Curvature penalty, relative to the mean diagonal of `KᵀK`.
    pub tikhonov_weight: f64,
    pub monotone: bool,
    pub derivative: DerivativeScheme,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self { tikhonov_weight: 1e-6, monotone: true, derivative: DerivativeScheme::SmoothedFivePoint }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tikhonov_weight >= 0.0 && self.tikhonov_weight.is_finite()) {
            return Err(Error::Config(format!("Tikhonov weight must be finite and >= 0, got {}", self.tikhonov_weight)));
        }
        Ok(())
    }
}

impl DerivativeScheme {
    /// The interior stencil equals `f' + c Δ^2 f'''` up to `O(Δ^4)`.
    fn third_order_coefficient(self) -> f64 {
        match self {
            DerivativeScheme::SmoothedFivePoint => 5.0 / 12.0,
            DerivativeScheme::Central => 1.0 / 6.0,
        }
    }
}

/// Five-point weights at `offsets` (in grid units) reproducing
/// `f' + c Δ^2 f'''` exactly on polynomials of degree 4.
fn matched_weights(offsets: [f64; 5], c: f64) -> [f64; 5] {
    let m = nalgebra::Matrix5::from_fn(|row, col| offsets[col].powi(row as i32));
    let rhs = nalgebra::Vector5::new(0.0, 1.0, 0.0, 6.0 * c, 0.0);
    let w = m.lu().solve(&rhs).expect("distinct offsets give an invertible Vandermonde matrix");
    [w[0], w[1], w[2], w[3], w[4]]
}

/// First derivative on a uniform grid of at least 5 points.
///
/// Near the ends the stencils are built to carry the same `Δ^2 f'''` term
/// as the interior stencil, so the error is smooth along the whole grid and
/// a second differentiation does not amplify a mismatch at the edges.
pub fn derivative(values: &[f64], step: f64, scheme: DerivativeScheme) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 5, "derivative needs at least 5 points");
    let f = values;
    let c = scheme.third_order_coefficient();
    let mut out = vec![0.0; n];
    let edge = |first: usize, offsets: [f64; 5]| -> f64 {
        let w = matched_weights(offsets, c);
        (0..5).map(|k| w[k] * f[first + k]).sum::<f64>() / step
    };
    let special = match scheme {
        DerivativeScheme::SmoothedFivePoint => 2,
        DerivativeScheme::Central => 1,
    };
    for i in 0..special {
        out[i] = edge(0, std::array::from_fn(|k| k as f64 - i as f64));
        out[n - 1 - i] = edge(n - 5, std::array::from_fn(|k| k as f64 - 4.0 + i as f64));
    }
    for i in special..n - special {
        out[i] = match scheme {
            DerivativeScheme::SmoothedFivePoint => {
                (2.0 * (f[i + 1] - f[i - 1]) + (f[i + 2] - f[i - 2])) / (8.0 * step)
            }
            DerivativeScheme::Central => (f[i + 1] - f[i - 1]) / (2.0 * step),
        };
    }
    out
}

/// `Γ(n/2 + 1) J^{n/2} v`, the first invariant of a sublevel-volume curve.
pub fn forward_first_invariant(v: &Curve, n: usize) -> Result<Curve> {
    let half = n as f64 / 2.0;
    Ok(frac_integral(v, FracOrder::new(half)?)?.scaled(gamma(half + 1.0)).relabel("A"))
}

/// `Γ(n/2 + 1) J^{n/2 + 1} I2`, the second invariant of a surface curve.
pub fn forward_second_invariant(i2: &Curve, n: usize) -> Result<Curve> {
    let half = n as f64 / 2.0;
    Ok(frac_integral(i2, FracOrder::new(half + 1.0)?)?.scaled(gamma(half + 1.0)).relabel("B"))
}

/// Dense matrix of `J^α` on `len` nodes with spacing `step`.
fn frac_matrix(alpha: f64, len: usize, step: f64) -> DMatrix<f64> {
    let c = toeplitz_weights(alpha, len);
    let scale = step.powf(alpha) / gamma(alpha + 2.0);
    let mut m = DMatrix::from_fn(len, len, |k, j| {
        if j > k || k == 0 {
            0.0
        } else if j == 0 {
            scale * first_column_weight(alpha, k)
        } else {
            scale * c[k - j]
        }
    });
    for (k, w) in starting_weights(alpha, len, step).into_iter().enumerate() {
        for j in 0..3 {
            m[(k, j)] += w[j];
        }
    }
    m
}

/// Whether `A` is nondecreasing up to rounding.
pub fn is_nondecreasing(c: &Curve) -> bool {
    let scale = c.values().iter().map(|x| x.abs()).fold(0.0, f64::max);
    max_decrease(c.values()) <= 1e-12 * scale
}

/// Inverts `A(λ) = (n/2) ∫_0^λ (λ - s)^{n/2 - 1} v(s) ds` for the volume
/// curve `v`. In two dimensions this is `v = A'`; otherwise a first-kind
/// Volterra system is solved with a curvature penalty, then optionally
/// projected onto nondecreasing curves.
pub fn recover_volume(a: &Curve, n: usize, cfg: &InversionConfig) -> Result<Curve> {
    cfg.validate()?;
    if n < 2 {
        return Err(Error::InvalidInput(format!("dimension must be at least 2, got {n}")));
    }
    if a.len() < 5 {
        return Err(Error::InsufficientData(format!("inversion needs at least 5 grid points, got {}", a.len())));
    }
    let step = a.grid().step();
    let (mut v, err) = if n == 2 {
        let v = derivative(a.values(), step, cfg.derivative);
        let gain = match cfg.derivative {
            DerivativeScheme::SmoothedFivePoint => 0.75,
            DerivativeScheme::Central => 1.0,
        } / step;
        (v, a.err_est().map(|e| e.iter().map(|x| gain * x).collect::<Vec<_>>()))
    } else {
        check_origin(a)?;
        (volterra_solve(a.values(), n, step, cfg.tikhonov_weight)?, None)
    };
    if cfg.monotone {
        v = isotonic_nondecreasing(&v, None);
    }
    let curve = Curve::new("v", *a.grid(), v)?;
    match err {
        Some(e) => curve.with_err_est(e),
        None => Ok(curve),
    }
}

fn volterra_solve(rhs: &[f64], n: usize, step: f64, weight: f64) -> Result<Vec<f64>> {
    let len = rhs.len();
    let half = n as f64 / 2.0;
    let k = frac_matrix(half, len, step) * gamma(half + 1.0);
    let kt = k.transpose();
    let mut normal = &kt * &k;
    let mean_diag = normal.diagonal().mean();
    let w = weight * mean_diag;
    if w > 0.0 {
        // DᵀD for the second-difference operator on interior nodes
        for i in 1..len - 1 {
            let idx = [i - 1, i, i + 1];
            let coef = [1.0, -2.0, 1.0];
            for a in 0..3 {
                for b in 0..3 {
                    normal[(idx[a], idx[b])] += w * coef[a] * coef[b];
                }
            }
        }
    }
    let b = kt * DVector::from_column_slice(rhs);
    let chol = normal.cholesky().ok_or_else(|| {
        Error::Regularization(format!("normal equations are not positive definite at weight {weight:e}"))
    })?;
    let sol = chol.solve(&b);
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(Error::Regularization(format!("non-finite solution at weight {weight:e}")));
    }
    Ok(sol.iter().copied().collect())
}

/// `(I1, I2)` from the two invariants: `I1 = v'` with `v` recovered from
/// `A`, and `I2 = w'` with `w = J^1 I2` recovered from `B` by the same
/// inversion.
pub fn recover_surface_invariants(a: &Curve, b: &Curve, n: usize, cfg: &InversionConfig) -> Result<(Curve, Curve)> {
    if !a.same_grid(b) {
        return Err(Error::InvalidInput("A and B must share a grid".into()));
    }
    let step = a.grid().step();
    let v = recover_volume(a, n, cfg)?;
    let w = recover_volume(b, n, cfg)?;
    let gain = 0.75 / step;
    let i1 = Curve::new("I1", *a.grid(), derivative(v.values(), step, cfg.derivative))?;
    let i1 = match v.err_est() {
        Some(e) => i1.with_err_est(e.iter().map(|x| gain * x).collect())?,
        None => i1,
    };
    let i2 = Curve::new("I2", *a.grid(), derivative(w.values(), step, cfg.derivative))?;
    let i2 = match w.err_est() {
        Some(e) => i2.with_err_est(e.iter().map(|x| gain * x).collect())?,
        None => i2,
    };
    Ok((i1, i2))
}
