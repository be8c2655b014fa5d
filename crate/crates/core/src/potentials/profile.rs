use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileShape {
    /// `R(r) = coeff * r^exponent`
    PowerLaw { coeff: f64, exponent: f64 },
    /// Strictly increasing samples joined by a monotone cubic.
    Table(MonotoneCubic),
}

/// Monotone radial profile `R` on `[0, R0]` with `R(R0) = lambda0`.
///
/// Beyond `R0` the profile continues as
/// `R(R0) + R'(R0-) (r - R0) + (r - R0)^2`, which keeps it above `lambda0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    dimension: usize,
    r0: f64,
    lambda0: f64,
    shape: ProfileShape,
}

impl RadialProfile {
    pub fn power_law(dimension: usize, coeff: f64, exponent: f64, r0: f64) -> Result<Self> {
        check_dimension(dimension)?;
        if !(coeff > 0.0 && exponent > 0.0 && r0 > 0.0) || !(coeff * exponent * r0).is_finite() {
            return Err(Error::InvalidInput(format!(
                "power-law profile needs coeff, exponent, R0 > 0 (got {coeff}, {exponent}, {r0})"
            )));
        }
        Ok(Self {
            dimension,
            r0,
            lambda0: coeff * r0.powf(exponent),
            shape: ProfileShape::PowerLaw { coeff, exponent },
        })
    }

    /// Tabulated profile. `r` must start at 0 and both columns must be
    /// strictly increasing; `R0` and `lambda0` are the last sample.
    ///
    /// `values[0]` may be positive for recovered profiles whose sublevel
    /// volumes vanish on an initial energy segment.
    pub fn tabulated(dimension: usize, r: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_dimension(dimension)?;
        if r.len() < 3 || r.len() != values.len() {
            return Err(Error::InvalidProfile("table needs at least 3 matching (r, R) samples".into()));
        }
        if r[0] != 0.0 {
            return Err(Error::InvalidProfile(format!("table must start at r = 0, got {}", r[0])));
        }
        if values[0] < 0.0 {
            return Err(Error::InvalidProfile("profile must be nonnegative".into()));
        }
        if r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidProfile("r samples must be strictly increasing".into()));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidProfile("R samples must be strictly increasing".into()));
        }
        let r0 = r[r.len() - 1];
        let lambda0 = values[values.len() - 1];
        Ok(Self { dimension, r0, lambda0, shape: ProfileShape::Table(MonotoneCubic::new(r, values)?) })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn shape(&self) -> &ProfileShape {
        &self.shape
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.shape, ProfileShape::Table(_))
    }

    fn inner(&self, r: f64) -> f64 {
        match &self.shape {
            ProfileShape::PowerLaw { coeff, exponent } => coeff * r.powf(*exponent),
            ProfileShape::Table(t) => t.eval(r),
        }
    }

    fn inner_derivative(&self, r: f64) -> f64 {
        match &self.shape {
            ProfileShape::PowerLaw { coeff, exponent } => {
                if r == 0.0 {
                    if *exponent > 1.0 {
                        0.0
                    } else if *exponent == 1.0 {
                        *coeff
                    } else {
                        f64::INFINITY
                    }
                } else {
                    coeff * exponent * r.powf(exponent - 1.0)
                }
            }
            ProfileShape::Table(t) => t.derivative(r),
        }
    }

    /// One-sided slope `R'(R0-)` used by the extension.
    pub fn edge_slope(&self) -> f64 {
        self.inner_derivative(self.r0)
    }

    /// `R(r)` for `r >= 0`, extended beyond `R0`.
    pub fn eval(&self, r: f64) -> f64 {
        if r <= self.r0 {
            self.inner(r.max(0.0))
        } else {
            let d = r - self.r0;
            self.lambda0 + self.edge_slope() * d + d * d
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        if r <= self.r0 {
            self.inner_derivative(r.max(0.0))
        } else {
            self.edge_slope() + 2.0 * (r - self.r0)
        }
    }

    /// Radius `rho(s)` with `R(rho) = s`; zero below `R(0)`.
    pub fn inverse(&self, s: f64) -> f64 {
        let floor = self.inner(0.0);
        if s <= floor {
            return 0.0;
        }
        if s > self.lambda0 {
            // lambda0 + m d + d^2 = s
            let m = self.edge_slope();
            let d = 0.5 * (-m + (m * m + 4.0 * (s - self.lambda0)).sqrt());
            return self.r0 + d;
        }
        match &self.shape {
            ProfileShape::PowerLaw { coeff, exponent } => (s / coeff).powf(1.0 / exponent),
            ProfileShape::Table(t) => t.solve_increasing(s).unwrap_or(self.r0),
        }
    }

    /// Samples `(r, R(r))` on a uniform grid over `[0, R0]`.
    pub fn sample(&self, points: usize) -> Vec<(f64, f64)> {
        let points = points.max(2);
        (0..points)
            .map(|i| {
                let r = self.r0 * i as f64 / (points - 1) as f64;
                (r, self.eval(r))
            })
            .collect()
    }
}

fn check_dimension(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("dimension must be at least 2, got {n}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_basics() {
        let p = RadialProfile::power_law(2, 1.0, 2.0, 1.0).unwrap();
        assert_eq!(p.eval(0.0), 0.0);
        assert_eq!(p.eval(0.5), 0.25);
        assert_eq!(p.lambda0(), 1.0);
        assert!((p.inverse(0.25) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn extension_is_continuous_and_confining() {
        let p = RadialProfile::power_law(3, 2.0, 1.5, 0.8).unwrap();
        let eps = 1e-9;
        assert!((p.eval(p.r0() + eps) - p.eval(p.r0())).abs() < 1e-7);
        for k in 1..50 {
            let r = p.r0() + 0.1 * k as f64;
            assert!(p.eval(r) > p.lambda0());
            assert!((p.inverse(p.eval(r)) - r).abs() < 1e-12);
        }
    }

    #[test]
    fn table_requires_monotone_samples() {
        assert!(RadialProfile::tabulated(2, vec![0.0, 0.5, 1.0], vec![0.0, 0.3, 0.2]).is_err());
        assert!(RadialProfile::tabulated(2, vec![0.1, 0.5, 1.0], vec![0.0, 0.3, 0.5]).is_err());
        let t = RadialProfile::tabulated(2, vec![0.0, 0.5, 1.0], vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(t.r0(), 1.0);
        assert_eq!(t.lambda0(), 1.0);
        let rho = t.inverse(0.6);
        assert!((t.eval(rho) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn rejects_dimension_one() {
        assert!(RadialProfile::power_law(1, 1.0, 2.0, 1.0).is_err());
    }
}
