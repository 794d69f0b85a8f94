//! Dense tableau simplex for the small LPs behind the distribution-network
//! loss: maximize c^T y subject to M y <= rhs, y >= 0.
//!
//! Bland's anti-cycling rule makes termination unconditional; problems here
//! are tiny (d <= 64), so a dense tableau is the simplest correct choice.
//! Note that with a redistribution matrix A whose rows sum to one,
//! M = I - A annihilates the all-ones vector, so the feasible set always
//! contains the ray t*1: the LP is unbounded exactly when total excess
//! demand 1^T c is positive. Callers treat that as a sure network failure.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, y: Vec<f64> },
    Unbounded,
}

/// Maximize c^T y subject to M y <= rhs (rhs >= 0), y >= 0.
pub fn solve_max(c: &[f64], m: &DMatrix<f64>, rhs: &[f64]) -> Result<LpOutcome> {
    let rows = m.nrows();
    let n = m.ncols();
    if c.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: c.len() });
    }
    if rhs.len() != rows {
        return Err(Error::DimensionMismatch { expected: rows, got: rhs.len() });
    }
    if rhs.iter().any(|&b| b < 0.0) {
        return Err(Error::Config("simplex requires rhs >= 0".into()));
    }

    // Tableau: rows x (n structural + rows slack + 1 rhs); slack basis start.
    let total = n + rows;
    let mut t = vec![vec![0.0f64; total + 1]; rows];
    for i in 0..rows {
        for j in 0..n {
            t[i][j] = m[(i, j)];
        }
        t[i][n + i] = 1.0;
        t[i][total] = rhs[i];
    }
    // Reduced-cost row for maximization: positive entry => improving column.
    let mut z = vec![0.0f64; total + 1];
    z[..n].copy_from_slice(c);
    let mut basis: Vec<usize> = (n..total).collect();

    loop {
        // Bland: entering = lowest-index column with positive reduced cost.
        let Some(enter) = (0..total).find(|&j| z[j] > PIVOT_TOL) else {
            break;
        };
        // Ratio test; Bland tie-break on the basic variable index.
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..rows {
            if t[i][enter] > PIVOT_TOL {
                let ratio = t[i][total] / t[i][enter];
                let better = ratio < best - PIVOT_TOL
                    || (ratio < best + PIVOT_TOL
                        && leave.map_or(true, |l| basis[i] < basis[l]));
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            return Ok(LpOutcome::Unbounded);
        };
        // Pivot on (leave, enter).
        let piv = t[leave][enter];
        for v in t[leave].iter_mut() {
            *v /= piv;
        }
        for i in 0..rows {
            if i != leave && t[i][enter].abs() > 0.0 {
                let f = t[i][enter];
                for j in 0..=total {
                    t[i][j] -= f * t[leave][j];
                }
            }
        }
        let f = z[enter];
        for j in 0..=total {
            z[j] -= f * t[leave][j];
        }
        basis[leave] = enter;
    }

    let mut y = vec![0.0f64; n];
    for i in 0..rows {
        if basis[i] < n {
            y[basis[i]] = t[i][total];
        }
    }
    let value = c.iter().zip(&y).map(|(ci, yi)| ci * yi).sum();
    Ok(LpOutcome::Optimal { value, y })
}

/// Total unserved excess demand of the network: the LP value with
/// M = I - A, objective D - s. `Err(Unbounded)` means total excess demand
/// escapes the redistribution system entirely (a sure failure).
pub fn network_loss(a: &DMatrix<f64>, demand: &[f64], supply: &[f64]) -> Result<f64> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: a.ncols() });
    }
    let m = DMatrix::identity(d, d) - a;
    let c: Vec<f64> = demand.iter().zip(supply).map(|(di, si)| di - si).collect();
    let rhs = vec![1.0; d];
    match solve_max(&c, &m, &rhs)? {
        LpOutcome::Optimal { value, .. } => Ok(value),
        LpOutcome::Unbounded => Err(Error::Unbounded),
    }
}

/// Complete-graph redistribution matrix, a_ij = 1/(d-1) off the diagonal.
pub fn complete_topology(d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| if i == j { 0.0 } else { 1.0 / (d - 1) as f64 })
}

/// Cyclic redistribution matrix, node i passes all excess to node i+1.
pub fn cyclic_topology(d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| if j == (i + 1) % d { 1.0 } else { 0.0 })
}

/// Exhaustive oracle: maximize over all feasible basic solutions (vertex
/// enumeration over bases of [M | I]). Test- and acceptance-only; O(C(2d, d)).
pub fn brute_force_max(c: &[f64], m: &DMatrix<f64>, rhs: &[f64]) -> Option<f64> {
    let rows = m.nrows();
    let n = m.ncols();
    let total = n + rows;
    let full = {
        let mut f = DMatrix::zeros(rows, total);
        for i in 0..rows {
            for j in 0..n {
                f[(i, j)] = m[(i, j)];
            }
            f[(i, n + i)] = 1.0;
        }
        f
    };
    let b = nalgebra::DVector::from_column_slice(rhs);
    let mut best: Option<f64> = None;
    let mut cols = vec![0usize; rows];
    fn rec(
        start: usize,
        k: usize,
        cols: &mut Vec<usize>,
        full: &DMatrix<f64>,
        b: &nalgebra::DVector<f64>,
        c: &[f64],
        n: usize,
        best: &mut Option<f64>,
    ) {
        let rows = full.nrows();
        if k == rows {
            let basis = full.select_columns(cols.iter());
            if let Some(sol) = basis.lu().solve(b) {
                if sol.iter().all(|&v| v > -1e-9) {
                    let mut val = 0.0;
                    for (slot, &col) in cols.iter().enumerate() {
                        if col < n {
                            val += c[col] * sol[slot];
                        }
                    }
                    if best.map_or(true, |bv| val > bv) {
                        *best = Some(val);
                    }
                }
            }
            return;
        }
        for j in start..full.ncols() {
            cols[k] = j;
            rec(j + 1, k + 1, cols, full, b, c, n, best);
        }
    }
    rec(0, 0, &mut cols, &full, &b, c, n, &mut best);
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use approx::assert_relative_eq;

    #[test]
    fn one_dimensional() {
        let m = DMatrix::from_row_slice(1, 1, &[1.0]);
        match solve_max(&[0.7], &m, &[1.0]).unwrap() {
            LpOutcome::Optimal { value, y } => {
                assert_relative_eq!(value, 0.7, epsilon = 1e-12);
                assert_relative_eq!(y[0], 1.0, epsilon = 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_node_swap_network() {
        // A = [[0,1],[1,0]], D - s = (1, -3): optimum 1 at y = (1, 0)
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let v = network_loss(&a, &[2.0, 0.0], &[1.0, 3.0]).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn positive_total_excess_is_unbounded() {
        let a = complete_topology(3);
        assert_eq!(
            network_loss(&a, &[5.0, 5.0, 5.0], &[1.0, 1.0, 1.0]),
            Err(crate::error::Error::Unbounded)
        );
    }

    #[test]
    fn all_supplied_no_failure() {
        let a = complete_topology(4);
        let v = network_loss(&a, &[0.5; 4], &[1.0; 4]).unwrap();
        assert!(v <= 0.0 + 1e-9, "loss = {v}");
    }

    #[test]
    fn single_hot_node_complete_network() {
        // D - s = (2, 0, 0, 0, -8); y = e1 is feasible, so loss >= 2
        let a = complete_topology(5);
        let v = network_loss(&a, &[3.0, 1.0, 1.0, 1.0, 1.0], &[1.0, 1.0, 1.0, 1.0, 9.0]).unwrap();
        assert!(v >= 2.0 - 1e-9, "loss = {v}");
    }

    fn random_irreducible(d: usize, s: &mut RandomStream) -> DMatrix<f64> {
        // cycle backbone guarantees irreducibility; extra random mass on top
        let mut a = DMatrix::zeros(d, d);
        for i in 0..d {
            a[(i, (i + 1) % d)] = 0.5 + s.uniform01();
            for j in 0..d {
                if j != i && s.uniform01() < 0.4 {
                    a[(i, j)] += s.uniform01();
                }
            }
            let row_sum: f64 = (0..d).map(|j| a[(i, j)]).sum();
            for j in 0..d {
                a[(i, j)] /= row_sum;
            }
        }
        a
    }

    #[test]
    fn simplex_matches_brute_force_on_random_networks() {
        let mut s = RandomStream::new(31, 0);
        let mut optimal_seen = 0;
        for _ in 0..100 {
            let d = 5;
            let a = random_irreducible(d, &mut s);
            let m = DMatrix::identity(d, d) - &a;
            let c: Vec<f64> = (0..d).map(|_| 2.0 * s.uniform01() - 1.2).collect();
            let rhs = vec![1.0; d];
            match solve_max(&c, &m, &rhs).unwrap() {
                LpOutcome::Optimal { value, y } => {
                    optimal_seen += 1;
                    let oracle = brute_force_max(&c, &m, &rhs).expect("feasible at y = 0");
                    assert_relative_eq!(value, oracle, epsilon = 1e-8);
                    // primal feasibility of the returned vertex
                    for i in 0..d {
                        let lhs: f64 = (0..d).map(|j| m[(i, j)] * y[j]).sum();
                        assert!(lhs <= 1.0 + 1e-9);
                    }
                    assert!(y.iter().all(|&v| v >= -1e-9));
                }
                LpOutcome::Unbounded => {
                    // only possible when the all-ones recession ray improves
                    assert!(c.iter().sum::<f64>() > -1e-9);
                }
            }
        }
        assert!(optimal_seen > 50, "too few bounded instances: {optimal_seen}");
    }

    #[test]
    fn sandwich_property_random_instances() {
        let mut s = RandomStream::new(32, 0);
        for _ in 0..300 {
            let d = 5;
            let a = random_irreducible(d, &mut s);
            let demand: Vec<f64> = (0..d).map(|_| 3.0 * s.uniform01()).collect();
            let supply: Vec<f64> = (0..d).map(|_| 2.0 * s.uniform01()).collect();
            let k = 1.0;
            let max_excess = demand
                .iter()
                .zip(&supply)
                .map(|(di, si)| di - si)
                .fold(f64::NEG_INFINITY, f64::max);
            match network_loss(&a, &demand, &supply) {
                Ok(loss) => {
                    if max_excess > k {
                        assert!(loss > k - 1e-9, "loss {loss}, max excess {max_excess}");
                    }
                    if loss > k {
                        assert!(max_excess > 0.0, "loss {loss}, max excess {max_excess}");
                    }
                }
                Err(crate::error::Error::Unbounded) => {
                    let total: f64 = demand.iter().sum::<f64>() - supply.iter().sum::<f64>();
                    assert!(total > -1e-9);
                }
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn scale_equivariance() {
        let mut s = RandomStream::new(33, 0);
        for _ in 0..50 {
            let a = random_irreducible(4, &mut s);
            let demand: Vec<f64> = (0..4).map(|_| 2.0 * s.uniform01()).collect();
            let supply: Vec<f64> = (0..4).map(|_| 2.0 * s.uniform01()).collect();
            let c = 3.0;
            let scaled_d: Vec<f64> = demand.iter().map(|v| c * v).collect();
            let scaled_s: Vec<f64> = supply.iter().map(|v| c * v).collect();
            match (network_loss(&a, &demand, &supply), network_loss(&a, &scaled_d, &scaled_s)) {
                (Ok(v1), Ok(v2)) => assert_relative_eq!(v2, c * v1, epsilon = 1e-8),
                (Err(e1), Err(e2)) => assert_eq!(e1, e2),
                (r1, r2) => panic!("inconsistent scaling: {r1:?} vs {r2:?}"),
            }
        }
    }

    #[test]
    fn cyclic_topology_runs() {
        let a = cyclic_topology(5);
        let v = network_loss(&a, &[1.5, 0.2, 0.2, 0.2, 0.2], &[0.5; 5]).unwrap();
        assert!(v.is_finite());
    }
}
