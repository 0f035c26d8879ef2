use std::cmp::Ordering;

use super::MetricError;

/// Kendall's tau-b between two score vectors.
///
/// Uses Knight's O(n log n) algorithm: sort by `(x, y)`, count tied groups,
/// then count inversions of `y` with a bottom-up merge sort.
///
/// `τ_b = (n_c − n_d) / sqrt((n0 − n1)(n0 − n2))` where `n1`, `n2` are the
/// pairs tied in `x` and `y` respectively. Undefined (an error) when either
/// side is constant.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch { left: x.len(), right: y.len() });
    }
    let n = x.len();
    if n < 2 {
        return Err(MetricError::TooShort { n, min: 2 });
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(MetricError::NonFinite);
    }

    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = choose2(n);
    let mut x_ties = 0u64;
    let mut joint_ties = 0u64;
    let mut run_x = 1u64;
    let mut run_xy = 1u64;
    for i in 1..n {
        let (prev, cur) = (pairs[i - 1], pairs[i]);
        if cur.0 == prev.0 {
            run_x += 1;
            if cur.1 == prev.1 {
                run_xy += 1;
            } else {
                joint_ties += choose2_u(run_xy);
                run_xy = 1;
            }
        } else {
            x_ties += choose2_u(run_x);
            joint_ties += choose2_u(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    x_ties += choose2_u(run_x);
    joint_ties += choose2_u(run_xy);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = merge_sort_inversions(&mut ys);

    let mut y_ties = 0u64;
    let mut run_y = 1u64;
    for i in 1..n {
        if ys[i] == ys[i - 1] {
            run_y += 1;
        } else {
            y_ties += choose2_u(run_y);
            run_y = 1;
        }
    }
    y_ties += choose2_u(run_y);

    if x_ties == n0 || y_ties == n0 {
        return Err(MetricError::UndefinedTau);
    }
    // n_c − n_d = n0 − n1 − n2 + n3 − 2·swaps
    let numerator = n0 as i128 - x_ties as i128 - y_ties as i128 + joint_ties as i128 - 2 * swaps as i128;
    let denominator = ((n0 - x_ties) as f64 * (n0 - y_ties) as f64).sqrt();
    Ok(numerator as f64 / denominator)
}

fn choose2(n: usize) -> u64 {
    let n = n as u64;
    n * (n.saturating_sub(1)) / 2
}

fn choose2_u(n: u64) -> u64 {
    n * (n.saturating_sub(1)) / 2
}

/// Sorts ascending, returning the number of strictly inverted pairs.
fn merge_sort_inversions(v: &mut Vec<f64>) -> u64 {
    let n = v.len();
    let mut buf = vec![0.0; n];
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut k) = (start, mid, start);
            while i < mid && j < end {
                if v[j].total_cmp(&v[i]) == Ordering::Less {
                    buf[k] = v[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                } else {
                    buf[k] = v[i];
                    i += 1;
                }
                k += 1;
            }
            buf[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
            k += mid - i;
            buf[k..k + (end - j)].copy_from_slice(&v[j..end]);
            start = end;
        }
        std::mem::swap(v, &mut buf);
        width *= 2;
    }
    swaps
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_reversed() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let rev = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert_eq!(kendall_tau_b(&x, &x).unwrap(), 1.0);
        assert_eq!(kendall_tau_b(&x, &rev).unwrap(), -1.0);
    }

    #[test]
    fn known_tied_value() {
        // scipy.stats.kendalltau([12, 2, 1, 12, 2], [1, 4, 7, 1, 0]) = -0.47140452079103173
        let t = kendall_tau_b(&[12.0, 2.0, 1.0, 12.0, 2.0], &[1.0, 4.0, 7.0, 1.0, 0.0]).unwrap();
        assert!((t - -0.47140452079103173).abs() < 1e-15);
    }

    #[test]
    fn constant_input_is_undefined() {
        assert!(matches!(kendall_tau_b(&[1.0; 4], &[1.0; 4]), Err(MetricError::UndefinedTau)));
        assert!(matches!(kendall_tau_b(&[1.0; 3], &[1.0, 2.0, 3.0]), Err(MetricError::UndefinedTau)));
    }

    #[test]
    fn argument_errors() {
        assert!(matches!(kendall_tau_b(&[1.0], &[1.0]), Err(MetricError::TooShort { .. })));
        assert!(matches!(kendall_tau_b(&[1.0, 2.0], &[1.0]), Err(MetricError::LengthMismatch { .. })));
        assert!(matches!(kendall_tau_b(&[1.0, f64::NAN], &[1.0, 2.0]), Err(MetricError::NonFinite)));
    }

    #[test]
    fn inversions_counted() {
        let mut v = vec![3.0, 1.0, 2.0, 2.0, 0.0];
        assert_eq!(merge_sort_inversions(&mut v), 7);
        assert_eq!(v, vec![0.0, 1.0, 2.0, 2.0, 3.0]);
    }
}
