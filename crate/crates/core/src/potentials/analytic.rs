use crate::error::{Error, Result};

use super::profile::RadialProfile;

/// The closed-form potential families.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `V(x) = R(|x|)` with the profile's confining extension beyond `R0`.
    RadialProfile(RadialProfile),
    /// `V(x) = |x|^2`.
    Harmonic,
    /// `V(x) = sum_i w_i x_i^2`.
    Anisotropic { weights: Vec<f64> },
    /// `V(x) = |x|^2 + a rho^2 cos(m theta)` with `(rho, theta)` the polar
    /// coordinates of `(x_1, x_2)`; requires `|a| < 1`.
    RadialAngular { amplitude: f64, mode: u32 },
    /// `|x|^2` inside radius `inner`, flat at `inner^2` on the annulus up to
    /// `outer`, then `inner^2 + |x|^2 - outer^2`. The plateau is a fat
    /// critical set.
    FlatAnnulus { inner: f64, outer: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMethod {
    ClosedForm,
    /// Central differences with step `1e-5` of the box width.
    CentralDifference,
}

/// A potential on `R^n`, translated so its minimum sits at `center`, with
/// an axis-aligned evaluation box `center ± half_width` and an energy
/// cutoff `lambda0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticPotential {
    dimension: usize,
    family: Family,
    center: Vec<f64>,
    half_width: f64,
    lambda0: f64,
}

const BOX_MARGIN: f64 = 1.25;

impl AnalyticPotential {
    fn build(dimension: usize, family: Family, lambda0: f64) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::InvalidInput(format!("dimension must be at least 2, got {dimension}")));
        }
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda0 must be positive, got {lambda0}")));
        }
        let reach = match &family {
            Family::RadialProfile(p) => p.inverse(lambda0),
            Family::Harmonic => lambda0.sqrt(),
            Family::Anisotropic { weights } => {
                let wmin = weights.iter().cloned().fold(f64::INFINITY, f64::min);
                (lambda0 / wmin).sqrt()
            }
            Family::RadialAngular { amplitude, .. } => (lambda0 / (1.0 - amplitude.abs())).sqrt(),
            Family::FlatAnnulus { inner, outer } => {
                (lambda0 - inner * inner + outer * outer).max(outer * outer).sqrt()
            }
        };
        Ok(Self { dimension, family, center: vec![0.0; dimension], half_width: BOX_MARGIN * reach, lambda0 })
    }

    pub fn harmonic(dimension: usize, lambda0: f64) -> Result<Self> {
        Self::build(dimension, Family::Harmonic, lambda0)
    }

    pub fn anisotropic(weights: Vec<f64>, lambda0: f64) -> Result<Self> {
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput("anisotropic weights must be positive".into()));
        }
        Self::build(weights.len(), Family::Anisotropic { weights }, lambda0)
    }

    /// Radial potential with cutoff `profile.lambda0()`.
    pub fn radial(profile: RadialProfile) -> Result<Self> {
        let n = profile.dimension();
        let l0 = profile.lambda0();
        Self::build(n, Family::RadialProfile(profile), l0)
    }

    pub fn radial_angular(dimension: usize, amplitude: f64, mode: u32, lambda0: f64) -> Result<Self> {
        if !(amplitude.abs() < 1.0) {
            return Err(Error::InvalidInput(format!(
                "angular amplitude must satisfy |a| < 1, got {amplitude}"
            )));
        }
        Self::build(dimension, Family::RadialAngular { amplitude, mode }, lambda0)
    }

    pub fn flat_annulus(dimension: usize, inner: f64, outer: f64, lambda0: f64) -> Result<Self> {
        if !(inner > 0.0 && outer > inner) {
            return Err(Error::InvalidInput(format!(
                "flat annulus needs 0 < inner < outer, got {inner}, {outer}"
            )));
        }
        Self::build(dimension, Family::FlatAnnulus { inner, outer }, lambda0)
    }

    /// Moves the minimum to `center`; the box moves with it.
    pub fn translated(mut self, center: Vec<f64>) -> Result<Self> {
        if center.len() != self.dimension {
            return Err(Error::InvalidInput("center has the wrong dimension".into()));
        }
        self.center = center;
        Ok(self)
    }

    pub fn with_half_width(mut self, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidInput(format!("box half-width must be positive, got {half_width}")));
        }
        self.half_width = half_width;
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn box_lower(&self) -> Vec<f64> {
        self.center.iter().map(|c| c - self.half_width).collect()
    }

    pub fn box_upper(&self) -> Vec<f64> {
        self.center.iter().map(|c| c + self.half_width).collect()
    }

    pub fn is_radial(&self) -> bool {
        matches!(self.family, Family::RadialProfile(_) | Family::Harmonic | Family::FlatAnnulus { .. })
    }

    pub fn gradient_method(&self) -> GradientMethod {
        match &self.family {
            Family::RadialProfile(p) if p.is_tabulated() => GradientMethod::CentralDifference,
            _ => GradientMethod::ClosedForm,
        }
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        x.len() == self.dimension
            && x.iter().zip(&self.center).all(|(xi, ci)| (xi - ci).abs() <= self.half_width * (1.0 + 1e-12))
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::Domain(format!(
                "point has {} coordinates, potential is {}-dimensional",
                x.len(),
                self.dimension
            )));
        }
        if !self.in_box(x) {
            return Err(Error::Domain(format!("{x:?} lies outside the evaluation box")));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.value_unchecked(x))
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut g = vec![0.0; self.dimension];
        self.grad_into(x, &mut g);
        Ok(g)
    }

    /// `V(x)` without the box check.
    pub fn value_unchecked(&self, x: &[f64]) -> f64 {
        let sq = |i: usize| {
            let d = x[i] - self.center[i];
            d * d
        };
        let r2 = || (0..self.dimension).map(sq).sum::<f64>();
        match &self.family {
            Family::RadialProfile(p) => p.eval(r2().sqrt()),
            Family::Harmonic => r2(),
            Family::Anisotropic { weights } => (0..self.dimension).map(|i| weights[i] * sq(i)).sum(),
            Family::RadialAngular { amplitude, mode } => {
                let (y1, y2) = (x[0] - self.center[0], x[1] - self.center[1]);
                let rho2 = y1 * y1 + y2 * y2;
                let ang = if rho2 > 0.0 { (*mode as f64 * y2.atan2(y1)).cos() } else { 0.0 };
                r2() + amplitude * rho2 * ang
            }
            Family::FlatAnnulus { inner, outer } => {
                let r2 = r2();
                if r2 < inner * inner {
                    r2
                } else if r2 <= outer * outer {
                    inner * inner
                } else {
                    inner * inner + r2 - outer * outer
                }
            }
        }
    }

    /// Writes `grad V(x)` into `out` without the box check.
    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dimension;
        let y = |i: usize| x[i] - self.center[i];
        match &self.family {
            Family::RadialProfile(p) if p.is_tabulated() => {
                let step = 1e-5 * 2.0 * self.half_width;
                let mut probe = x.to_vec();
                for i in 0..n {
                    probe[i] = x[i] + step;
                    let hi = self.value_unchecked(&probe);
                    probe[i] = x[i] - step;
                    let lo = self.value_unchecked(&probe);
                    probe[i] = x[i];
                    out[i] = (hi - lo) / (2.0 * step);
                }
            }
            Family::RadialProfile(p) => {
                let r = (0..n).map(|i| y(i) * y(i)).sum::<f64>().sqrt();
                let scale = if r > 0.0 { p.derivative(r) / r } else { 0.0 };
                for (i, o) in out.iter_mut().enumerate() {
                    *o = scale * y(i);
                }
            }
            Family::Harmonic => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = 2.0 * y(i);
                }
            }
            Family::Anisotropic { weights } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = 2.0 * weights[i] * y(i);
                }
            }
            Family::RadialAngular { amplitude, mode } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = 2.0 * y(i);
                }
                let (y1, y2) = (y(0), y(1));
                let rho = (y1 * y1 + y2 * y2).sqrt();
                if rho > 0.0 {
                    let theta = y2.atan2(y1);
                    let m = *mode as f64;
                    let (cm, sm) = ((m * theta).cos(), (m * theta).sin());
                    let (c, s) = (theta.cos(), theta.sin());
                    out[0] += amplitude * rho * (2.0 * cm * c + m * sm * s);
                    out[1] += amplitude * rho * (2.0 * cm * s - m * sm * c);
                }
            }
            Family::FlatAnnulus { inner, outer } => {
                let r2 = (0..n).map(|i| y(i) * y(i)).sum::<f64>();
                let flat = r2 >= inner * inner && r2 <= outer * outer;
                for (i, o) in out.iter_mut().enumerate() {
                    *o = if flat { 0.0 } else { 2.0 * y(i) };
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_grad(p: &AnalyticPotential, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (p.value_unchecked(&a) - p.value_unchecked(&b)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn harmonic_values() {
        let p = AnalyticPotential::harmonic(2, 1.0).unwrap();
        assert_eq!(p.eval(&[0.0, 0.0]).unwrap(), 0.0);
        assert!((p.eval(&[0.3, 0.4]).unwrap() - 0.25).abs() < 1e-15);
        let g = p.grad(&[0.3, 0.4]).unwrap();
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn radial_profile_values() {
        let prof = RadialProfile::power_law(2, 1.0, 2.0, 1.0).unwrap();
        let p = AnalyticPotential::radial(prof).unwrap();
        assert!((p.eval(&[0.5, 0.0]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn anisotropic_gradient() {
        let p = AnalyticPotential::anisotropic(vec![1.0, 4.0], 5.0).unwrap();
        assert_eq!(p.grad(&[1.0, 1.0]).unwrap(), vec![2.0, 8.0]);
    }

    #[test]
    fn minimum_is_critical() {
        let prof = RadialProfile::power_law(3, 1.5, 2.5, 1.0).unwrap();
        let pots = vec![
            AnalyticPotential::harmonic(3, 1.0).unwrap(),
            AnalyticPotential::anisotropic(vec![1.0, 4.0, 2.0], 1.0).unwrap(),
            AnalyticPotential::radial(prof).unwrap(),
            AnalyticPotential::radial_angular(3, 0.3, 3, 1.0).unwrap(),
            AnalyticPotential::harmonic(3, 1.0).unwrap().translated(vec![0.2, -0.1, 0.05]).unwrap(),
        ];
        for p in pots {
            let g = p.grad(p.center()).unwrap();
            assert!(g.iter().all(|v| v.abs() < 1e-12), "{g:?}");
        }
    }

    #[test]
    fn out_of_box_is_domain_error() {
        let p = AnalyticPotential::harmonic(2, 1.0).unwrap();
        assert!(matches!(p.eval(&[10.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(p.eval(&[0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn closed_form_gradients_match_differences() {
        let prof = RadialProfile::power_law(2, 1.3, 1.7, 1.0).unwrap();
        let pots = vec![
            AnalyticPotential::harmonic(2, 1.0).unwrap(),
            AnalyticPotential::anisotropic(vec![1.0, 4.0], 1.0).unwrap(),
            AnalyticPotential::radial(prof).unwrap(),
            AnalyticPotential::radial_angular(2, 0.4, 3, 1.0).unwrap(),
            AnalyticPotential::radial_angular(3, 0.2, 2, 1.0).unwrap(),
        ];
        let points = [[0.31, -0.22, 0.1], [-0.5, 0.05, -0.3], [0.12, 0.41, 0.2]];
        for p in &pots {
            for pt in &points {
                let x = &pt[..p.dimension()];
                let g = p.grad(x).unwrap();
                let fd = fd_grad(p, x);
                for (a, b) in g.iter().zip(&fd) {
                    assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn tabulated_profile_uses_central_differences() {
        let r: Vec<f64> = (0..=40).map(|i| i as f64 * 0.025).collect();
        let v: Vec<f64> = r.iter().map(|r| r * r).collect();
        let prof = RadialProfile::tabulated(2, r, v).unwrap();
        let p = AnalyticPotential::radial(prof).unwrap();
        assert_eq!(p.gradient_method(), GradientMethod::CentralDifference);
        let g = p.grad(&[0.3, 0.4]).unwrap();
        assert!((g[0] - 0.6).abs() < 1e-3 && (g[1] - 0.8).abs() < 1e-3);
    }
}
