//! Unconstrained dynamic time warping with absolute-difference point cost.

use crate::error::{Error, Result};

/// Total cost of the cheapest monotone alignment, optionally with the path.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentCost {
    pub cost: f64,
    pub path: Option<Vec<(usize, usize)>>,
}

fn validate(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("dtw requires non-empty sequences".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Argument("dtw requires finite values".into()));
    }
    Ok(())
}

/// DTW cost between `a` and `b`, using two rolling rows of the DP table.
///
/// `D[i,j] = |a_i - b_j| + min(D[i-1,j], D[i,j-1], D[i-1,j-1])`, anchored at
/// `D[0,0] = |a_0 - b_0|`.
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    validate(a, b)?;
    Ok(dtw_cost_unchecked(a, b))
}

/// Hot path for retrieval scans; callers guarantee non-empty finite input.
pub(crate) fn dtw_cost_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for (i, &ai) in a.iter().enumerate() {
        for j in 0..m {
            let cost = (ai - b[j]).abs();
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = cost + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

/// DTW cost together with one optimal warping path from `(0,0)` to the end.
pub fn dtw_alignment(a: &[f64], b: &[f64]) -> Result<AlignmentCost> {
    validate(a, b)?;
    let (n, m) = (a.len(), b.len());
    let mut d = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            let cost = (a[i] - b[j]).abs();
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => d[j - 1],
                (_, 0) => d[(i - 1) * m],
                _ => d[(i - 1) * m + j]
                    .min(d[i * m + j - 1])
                    .min(d[(i - 1) * m + j - 1]),
            };
            d[i * m + j] = cost + best;
        }
    }
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        (i, j) = match (i, j) {
            (0, _) => (0, j - 1),
            (_, 0) => (i - 1, 0),
            _ => {
                let diag = d[(i - 1) * m + j - 1];
                let up = d[(i - 1) * m + j];
                let left = d[i * m + j - 1];
                if diag <= up && diag <= left {
                    (i - 1, j - 1)
                } else if up <= left {
                    (i - 1, j)
                } else {
                    (i, j - 1)
                }
            }
        };
        path.push((i, j));
    }
    path.reverse();
    Ok(AlignmentCost {
        cost: d[n * m - 1],
        path: Some(path),
    })
}


#[cfg(test)]
mod tests {
    use super::oracle::brute_force_dtw;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(
            dtw_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(),
            0.0
        );
        assert_eq!(dtw_distance(&[0.0], &[5.0]).unwrap(), 5.0);
        let a = [1.0, 2.0, 3.0];
        let b = [1.0, 2.0, 2.0, 3.0];
        assert_eq!(brute_force_dtw(&a, &b), 0.0);
        assert_eq!(dtw_distance(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn empty_input_is_an_argument_error() {
        assert!(matches!(dtw_distance(&[], &[1.0]), Err(Error::Argument(_))));
        assert!(matches!(dtw_distance(&[1.0], &[]), Err(Error::Argument(_))));
        assert!(dtw_distance(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn alignment_path_is_monotone_and_costs_match() {
        let a = [0.0, 1.0, 3.0, 2.0, 2.5];
        let b = [0.0, 3.0, 2.0];
        let al = dtw_alignment(&a, &b).unwrap();
        assert_eq!(al.cost, dtw_distance(&a, &b).unwrap());
        let path = al.path.unwrap();
        assert_eq!(path.first(), Some(&(0, 0)));
        assert_eq!(path.last(), Some(&(4, 2)));
        for w in path.windows(2) {
            let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            assert!(di <= 1 && dj <= 1 && di + dj >= 1);
        }
        let along: f64 = path.iter().map(|&(i, j)| (a[i] - b[j]).abs()).sum();
        assert!((along - al.cost).abs() < 1e-12);
    }

    fn seq() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, 1..=10)
    }

    proptest! {
        #[test]
        fn symmetric(a in seq(), b in seq()) {
            prop_assert_eq!(dtw_distance(&a, &b).unwrap(), dtw_distance(&b, &a).unwrap());
        }

        #[test]
        fn self_distance_is_zero(a in seq()) {
            prop_assert_eq!(dtw_distance(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn non_negative(a in seq(), b in seq()) {
            prop_assert!(dtw_distance(&a, &b).unwrap() >= 0.0);
        }

        #[test]
        fn matches_brute_force(
            a in proptest::collection::vec(-3.0f64..3.0, 1..=6),
            b in proptest::collection::vec(-3.0f64..3.0, 1..=6),
        ) {
            let fast = dtw_distance(&a, &b).unwrap();
            let slow = brute_force_dtw(&a, &b);
            prop_assert!((fast - slow).abs() < 1e-9);
        }
    }
}
