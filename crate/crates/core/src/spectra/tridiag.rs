//! Eigenvalues of symmetric tridiagonal matrices by Sturm-sequence bisection.

/// Symmetric tridiagonal matrix with diagonal `d` and off-diagonal `e`
/// (`e[i]` couples rows `i` and `i + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    d: Vec<f64>,
    e: Vec<f64>,
}

impl SymTridiagonal {
    /// Panics unless `e.len() + 1 == d.len()`.
    pub fn new(d: Vec<f64>, e: Vec<f64>) -> Self {
        assert_eq!(e.len() + 1, d.len(), "off-diagonal must be one shorter than the diagonal");
        Self { d, e }
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Number of eigenvalues strictly below `x`, from the signs of the
    /// LDLᵀ pivots of `T - x I`.
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.d.len() {
            let coupling = if i == 0 { 0.0 } else { self.e[i - 1] * self.e[i - 1] / q };
            q = self.d[i] - x - coupling;
            if q == 0.0 {
                q = -f64::EPSILON * (self.d[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.d.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut radius = 0.0;
            if i > 0 {
                radius += self.e[i - 1].abs();
            }
            if i + 1 < n {
                radius += self.e[i].abs();
            }
            lo = lo.min(self.d[i] - radius);
            hi = hi.max(self.d[i] + radius);
        }
        (lo, hi)
    }

    /// All eigenvalues strictly below `upper`, ascending, each bisected to
    /// an absolute width of `tol`. Returns `None` if bisection cannot
    /// separate the requested eigenvalue, which only happens for non-finite
    /// input.
    pub fn eigenvalues_below(&self, upper: f64, tol: f64) -> Option<Vec<f64>> {
        if self.d.is_empty() {
            return Some(Vec::new());
        }
        let (lo0, _) = self.gershgorin();
        if !lo0.is_finite() || !upper.is_finite() {
            return None;
        }
        let k = self.count_below(upper);
        let mut out = Vec::with_capacity(k);
        let mut floor = lo0 - tol;
        for i in 0..k {
            // find the (i+1)-th eigenvalue: count_below(lo) <= i < count_below(hi)
            let (mut lo, mut hi) = (floor, upper);
            let mut iters = 0;
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if self.count_below(mid) > i {
                    hi = mid;
                } else {
                    lo = mid;
                }
                iters += 1;
                if iters > 400 {
                    return None;
                }
            }
            let ev = 0.5 * (lo + hi);
            out.push(ev);
            floor = lo;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn discrete_laplacian() {
        // eigenvalues 2 - 2 cos(k pi / (n + 1))
        let n = 50;
        let t = SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1]);
        let evs = t.eigenvalues_below(5.0, 1e-14).unwrap();
        assert_eq!(evs.len(), n);
        for (k, ev) in evs.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((ev - exact).abs() < 1e-12, "{k}: {ev} vs {exact}");
        }
    }

    #[test]
    fn cutoff_respected() {
        let t = SymTridiagonal::new(vec![1.0, 2.0, 3.0], vec![0.0, 0.0]);
        assert_eq!(t.eigenvalues_below(2.5, 1e-12).unwrap().len(), 2);
        assert!(t.eigenvalues_below(0.5, 1e-12).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn trace_matches_eigenvalue_sum(d in proptest::collection::vec(-5.0f64..5.0, 2..20), seed in -1.0f64..1.0) {
            let e: Vec<f64> = (0..d.len() - 1).map(|i| seed * (i as f64 + 1.0).sin()).collect();
            let t = SymTridiagonal::new(d.clone(), e);
            let (_, hi) = t.gershgorin();
            let evs = t.eigenvalues_below(hi + 1.0, 1e-13).unwrap();
            prop_assert_eq!(evs.len(), d.len());
            let tr: f64 = d.iter().sum();
            prop_assert!((evs.iter().sum::<f64>() - tr).abs() < 1e-9);
            prop_assert!(evs.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
