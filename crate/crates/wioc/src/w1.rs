//! Exact Wasserstein-1 distance between matched-size uniform empirical
//! measures, solved as a minimum-cost perfect matching.
//!
//! Every measure the frameworks produce is uniform with matched atom counts,
//! so the metric reduces to an `n x n` assignment problem under the Euclidean
//! ground distance. The solver is the `O(n^3)` shortest-augmenting-path
//! algorithm on dual potentials (Jonker-Volgenant style). No general transport
//! LP is provided.

use crate::error::{Error, Result};
use crate::traj::{euclidean_distance, EmpiricalMeasure};

/// Minimum-cost perfect matching on a square cost matrix.
///
/// Returns `(assign, total)` where row `i` is matched to column `assign[i]`
/// and `total` is the sum of the selected entries in row order.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    if n == 0 {
        return Err(Error::invalid("assignment needs at least one row"));
    }
    for row in cost {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: row.len(),
            });
        }
        if !crate::numeric::all_finite(row) {
            return Err(Error::numeric("min_cost_assignment", "non-finite cost entry"));
        }
    }

    // 1-based arrays; p[j] is the row matched to column j, 0 meaning free.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // Walk the augmenting path back.
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    let mut total = 0.0;
    for (i, &j) in assign.iter().enumerate() {
        total += cost[i][j];
    }
    Ok((assign, total))
}

/// Exact W1 between two uniform empirical measures of equal atom count:
/// `(1/n) * min-cost matching under the Euclidean distance`.
pub fn exact_w1(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    Ok(exact_w1_with_plan(a, b)?.1)
}

/// As [`exact_w1`] but also returns the optimal pairing `i -> plan[i]`.
pub fn exact_w1_with_plan(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
) -> Result<(Vec<usize>, f64)> {
    if a.len() != b.len() {
        return Err(Error::Unsupported(format!(
            "exact_w1 requires matched atom counts, got {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let n = a.len();
    let mut cost = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            cost[i][j] = euclidean_distance(a.get(i), b.get(j))?;
        }
    }
    let (assign, total) = min_cost_assignment(&cost)?;
    Ok((assign, total / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn measure(rows: &[&[f64]]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn identical_measures_have_zero_distance() {
        let a = measure(&[&[0.0, 1.0], &[2.0, 3.0]]);
        assert_eq!(exact_w1(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn single_pair_distance() {
        let a = measure(&[&[0.0]]);
        let b = measure(&[&[3.0]]);
        assert_eq!(exact_w1(&a, &b).unwrap(), 3.0);
    }

    #[test]
    fn two_point_line_example() {
        // {0,1} vs {2,3}: both matchings cost 4 in total, W1 = 2.
        let a = measure(&[&[0.0], &[1.0]]);
        let b = measure(&[&[2.0], &[3.0]]);
        assert_eq!(exact_w1(&a, &b).unwrap(), 2.0);
    }

    #[test]
    fn rejects_unequal_counts() {
        let a = measure(&[&[0.0]]);
        let b = measure(&[&[1.0], &[2.0]]);
        assert!(matches!(exact_w1(&a, &b), Err(Error::Unsupported(_))));
    }

    #[test]
    fn assignment_picks_the_cheaper_permutation() {
        let cost = vec![vec![1.0, 10.0], vec![10.0, 1.0]];
        let (assign, total) = min_cost_assignment(&cost).unwrap();
        assert_eq!(assign, vec![0, 1]);
        assert_eq!(total, 2.0);
    }
}
