//! Lawson–Hanson active-set solver for `min ||Ax - b||` subject to `x >= 0`.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Solve the nonnegative least squares problem.
///
/// `tol` is the dual feasibility threshold relative to `||A^T b||`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64, max_iter: usize) -> NnlsSolution {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = (a.transpose() * b).amax().max(1e-300);
    let mut iterations = 0;

    loop {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol * scale)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = candidate else { break };
        if iterations >= max_iter {
            break;
        }
        passive[t] = true;

        loop {
            iterations += 1;
            let z = restricted_lstsq(a, b, &passive);
            let infeasible: Vec<usize> = (0..n).filter(|&j| passive[j] && z[j] <= 0.0).collect();
            if infeasible.is_empty() {
                x = z;
                break;
            }
            let alpha = infeasible
                .iter()
                .map(|&j| x[j] / (x[j] - z[j]))
                .fold(f64::INFINITY, f64::min);
            x += alpha * (&z - &x);
            for j in 0..n {
                if passive[j] && x[j] <= 1e-15 * scale.max(1.0) {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
            if iterations >= max_iter {
                break;
            }
        }
        if iterations >= max_iter {
            break;
        }
    }

    let residual_norm = (a * &x - b).norm();
    NnlsSolution { x, residual_norm, iterations }
}

/// Unconstrained least squares on the passive columns, zero elsewhere.
fn restricted_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let cols: Vec<usize> = (0..a.ncols()).filter(|&j| passive[j]).collect();
    let mut z = DVector::zeros(a.ncols());
    if cols.is_empty() {
        return z;
    }
    let sub = a.select_columns(&cols);
    let sol = sub
        .svd(true, true)
        .solve(b, 1e-14)
        .expect("svd computed with u and v");
    for (k, &j) in cols.iter().enumerate() {
        z[j] = sol[k];
    }
    z
}

/// Largest violation of the KKT conditions, relative to `||A^T b||_inf`.
pub fn kkt_violation(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let scale = (a.transpose() * b).amax().max(1e-300);
    let grad = a.transpose() * (a * x - b);
    let mut worst = 0.0f64;
    for j in 0..x.len() {
        if x[j] < 0.0 {
            worst = worst.max(-x[j]);
        }
        let v = if x[j] > 0.0 { grad[j].abs() } else { (-grad[j]).max(0.0) };
        worst = worst.max(v / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive search over supports, solving each by Gaussian elimination
    /// on the normal equations.
    fn brute_force(a: &DMatrix<f64>, b: &DVector<f64>) -> (Vec<f64>, f64) {
        let n = a.ncols();
        let mut best = (vec![0.0; n], b.norm_squared());
        for mask in 1u32..(1 << n) {
            let cols: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
            let k = cols.len();
            let mut m = vec![vec![0.0; k + 1]; k];
            for (r, &i) in cols.iter().enumerate() {
                for (c, &j) in cols.iter().enumerate() {
                    m[r][c] = a.column(i).dot(&a.column(j));
                }
                m[r][k] = a.column(i).dot(b);
            }
            let Some(sol) = gauss(m) else { continue };
            if sol.iter().any(|&v| v < 0.0) {
                continue;
            }
            let mut x = vec![0.0; n];
            for (r, &j) in cols.iter().enumerate() {
                x[j] = sol[r];
            }
            let xv = DVector::from_vec(x.clone());
            let obj = (a * xv - b).norm_squared();
            if obj < best.1 {
                best = (x, obj);
            }
        }
        best
    }

    fn gauss(mut m: Vec<Vec<f64>>) -> Option<Vec<f64>> {
        let k = m.len();
        for c in 0..k {
            let p = (c..k).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
            if m[p][c].abs() < 1e-12 {
                return None;
            }
            m.swap(c, p);
            for r in 0..k {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    for cc in c..=k {
                        m[r][cc] -= f * m[c][cc];
                    }
                }
            }
        }
        Some((0..k).map(|r| m[r][k] / m[r][r]).collect())
    }

    #[test]
    fn recovers_known_nonnegative_solution() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0]);
        let truth = DVector::from_vec(vec![0.5, 2.0]);
        let b = &a * &truth;
        let sol = nnls(&a, &b, 1e-10, 100);
        assert!((sol.x[0] - 0.5).abs() < 1e-10);
        assert!((sol.x[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn clamps_negative_direction() {
        let a = DMatrix::identity(3, 3);
        let b = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let sol = nnls(&a, &b, 1e-10, 100);
        assert_eq!(sol.x[1], 0.0);
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[2] - 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_exhaustive_support_search(
            vals in proptest::collection::vec(-1.0f64..1.0, 6 * 3),
            rhs in proptest::collection::vec(-1.0f64..1.0, 6),
        ) {
            let a = DMatrix::from_row_slice(6, 3, &vals);
            let b = DVector::from_vec(rhs);
            let sol = nnls(&a, &b, 1e-12, 200);
            let (_, best_obj) = brute_force(&a, &b);
            let obj = (&a * &sol.x - &b).norm_squared();
            prop_assert!(obj <= best_obj + 1e-9 * (1.0 + best_obj));
            prop_assert!(kkt_violation(&a, &b, &sol.x) < 1e-8);
        }
    }
}
