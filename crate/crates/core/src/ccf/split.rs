use crate::cca::Matrix;

use super::Impurity;

/// Best threshold found over a set of candidate axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    /// Column of the projected matrix.
    pub dim: usize,
    /// Rows with value `<= threshold` go left.
    pub threshold: f64,
    /// Parent impurity minus size-weighted child impurity.
    pub gain: f64,
}

pub fn impurity_of_counts(counts: &[usize], total: usize, impurity: Impurity) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    match impurity {
        Impurity::Gini => {
            1.0 - counts
                .iter()
                .map(|&c| {
                    let p = c as f64 / n;
                    p * p
                })
                .sum::<f64>()
        }
        Impurity::Entropy => counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum(),
    }
}

/// Midpoint of two consecutive distinct sorted values, kept in `[lo, hi)`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= lo && mid < hi {
        mid
    } else {
        lo
    }
}

/// Best split of one axis. `None` when every value is identical.
pub(crate) fn best_split_1d(
    values: &[f64],
    labels: &[usize],
    n_classes: usize,
    impurity: Impurity,
) -> Option<(f64, f64)> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut right = vec![0usize; n_classes];
    for &l in labels {
        right[l] += 1;
    }
    let parent = impurity_of_counts(&right, n, impurity);
    let mut left = vec![0usize; n_classes];
    let nf = n as f64;

    let mut best: Option<(f64, f64)> = None;
    for pos in 0..n.saturating_sub(1) {
        let i = order[pos];
        left[labels[i]] += 1;
        right[labels[i]] -= 1;
        let (lo, hi) = (values[i], values[order[pos + 1]]);
        if lo >= hi {
            continue;
        }
        let n_left = pos + 1;
        let n_right = n - n_left;
        let children = (n_left as f64 / nf) * impurity_of_counts(&left, n_left, impurity)
            + (n_right as f64 / nf) * impurity_of_counts(&right, n_right, impurity);
        let gain = parent - children;
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((midpoint(lo, hi), gain));
        }
    }
    best
}

/// Exhaustive search over every column of `projected` and every midpoint
/// between consecutive distinct values.
///
/// Ties go to the lower column, then the lower threshold. When no column
/// has two distinct values the result has gain 0.
pub fn best_split(
    projected: &Matrix,
    labels: &[usize],
    n_classes: usize,
    impurity: Impurity,
) -> SplitCandidate {
    let mut best = SplitCandidate {
        dim: 0,
        threshold: projected.get((0, 0)).copied().unwrap_or(0.0),
        gain: 0.0,
    };
    let mut found = false;
    for (dim, col) in projected.column_iter().enumerate() {
        let values: Vec<f64> = col.iter().copied().collect();
        if let Some((threshold, gain)) = best_split_1d(&values, labels, n_classes, impurity) {
            if !found || gain > best.gain {
                best = SplitCandidate {
                    dim,
                    threshold,
                    gain,
                };
                found = true;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(v: &[f64]) -> Matrix {
        Matrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn separable_pair() {
        let s = best_split(&column(&[-1.0, 1.0]), &[0, 1], 2, Impurity::Gini);
        assert_eq!(s.threshold, 0.0);
        assert!((s.gain - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identical_values_have_no_gain() {
        let s = best_split(&column(&[1.0, 1.0]), &[0, 1], 2, Impurity::Gini);
        assert_eq!(s.gain, 0.0);
    }

    #[test]
    fn four_points_split_in_the_middle() {
        // candidates 1.5 (gain 1/6), 2.5 (gain 1/2), 3.5 (gain 1/6)
        let s = best_split(
            &column(&[1.0, 2.0, 3.0, 4.0]),
            &[0, 0, 1, 1],
            2,
            Impurity::Gini,
        );
        assert_eq!(s.threshold, 2.5);
        assert!((s.gain - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unsorted_input_is_handled() {
        let s = best_split(
            &column(&[4.0, 1.0, 3.0, 2.0]),
            &[1, 0, 1, 0],
            2,
            Impurity::Gini,
        );
        assert_eq!(s.threshold, 2.5);
    }

    #[test]
    fn entropy_gain_of_perfect_split_is_one_bit() {
        let s = best_split(
            &column(&[0.0, 0.0, 5.0, 5.0]),
            &[0, 0, 1, 1],
            2,
            Impurity::Entropy,
        );
        assert!((s.gain - 1.0).abs() < 1e-15);
        assert_eq!(s.threshold, 2.5);
    }

    #[test]
    fn ties_prefer_lower_dim_then_lower_threshold() {
        // both columns separate perfectly; column 0 must win
        let m = Matrix::from_row_slice(4, 2, &[0.0, 10.0, 1.0, 11.0, 2.0, 12.0, 3.0, 13.0]);
        let s = best_split(&m, &[0, 0, 1, 1], 2, Impurity::Gini);
        assert_eq!(s.dim, 0);
        // labels 0,1,0,1: the first and last candidates tie
        let s = best_split(
            &column(&[0.0, 1.0, 2.0, 3.0]),
            &[0, 1, 1, 0],
            2,
            Impurity::Gini,
        );
        assert_eq!(s.threshold, 0.5);
    }

    #[test]
    fn adjacent_floats_keep_threshold_below_upper_value() {
        let lo = 1.0_f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let s = best_split(&column(&[lo, hi]), &[0, 1], 2, Impurity::Gini);
        assert!(lo <= s.threshold && s.threshold < hi);
    }

    #[test]
    fn gini_of_counts() {
        assert_eq!(impurity_of_counts(&[2, 2], 4, Impurity::Gini), 0.5);
        assert_eq!(impurity_of_counts(&[4, 0], 4, Impurity::Gini), 0.0);
        assert_eq!(impurity_of_counts(&[0, 0], 0, Impurity::Gini), 0.0);
    }
}
