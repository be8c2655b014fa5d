//! Least-squares projection onto nondecreasing sequences (pool adjacent
//! violators).

/// Returns the nondecreasing sequence closest to `values` in weighted least
/// squares. `weights` defaults to all ones.
pub fn isotonic_nondecreasing(values: &[f64], weights: Option<&[f64]>) -> Vec<f64> {
    // blocks of (weighted mean, total weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (i, &v) in values.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m1, w1, l1) = blocks[blocks.len() - 1];
            let (m0, w0, l0) = blocks[blocks.len() - 2];
            if m0 <= m1 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let wt = w0 + w1;
            blocks.push(((m0 * w0 + m1 * w1) / wt, wt, l0 + l1));
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (m, _, len) in blocks {
        out.extend(std::iter::repeat_n(m, len));
    }
    out
}

/// Largest drop `values[i] - values[j]` over `i < j`, zero for a
/// nondecreasing sequence.
pub fn max_decrease(values: &[f64]) -> f64 {
    let mut running_max = f64::NEG_INFINITY;
    let mut worst: f64 = 0.0;
    for &v in values {
        running_max = running_max.max(v);
        worst = worst.max(running_max - v);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pools_violators() {
        assert_eq!(isotonic_nondecreasing(&[1.0, 3.0, 2.0, 4.0], None), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic_nondecreasing(&[3.0, 2.0, 1.0], None), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn measures_decrease() {
        assert_eq!(max_decrease(&[0.0, 1.0, 2.0]), 0.0);
        assert_eq!(max_decrease(&[0.0, 3.0, 1.0, 2.5]), 2.0);
    }

    proptest! {
        #[test]
        fn output_is_monotone_and_mean_preserving(v in prop::collection::vec(-10.0f64..10.0, 1..60)) {
            let out = isotonic_nondecreasing(&v, None);
            prop_assert!(out.windows(2).all(|w| w[0] <= w[1] + 1e-12));
            let s0: f64 = v.iter().sum();
            let s1: f64 = out.iter().sum();
            prop_assert!((s0 - s1).abs() < 1e-9 * (1.0 + s0.abs()));
        }

        #[test]
        fn monotone_input_is_fixed(mut v in prop::collection::vec(-10.0f64..10.0, 1..60)) {
            v.sort_by(f64::total_cmp);
            prop_assert_eq!(isotonic_nondecreasing(&v, None), v);
        }
    }
}
