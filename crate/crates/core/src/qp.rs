//! Dense strictly convex QP by the dual active-set method of Goldfarb and Idnani.
//!
//! ```text
//! min 1/2 x^T G x + a^T x   s.t.   C x >= d
//! ```
//!
//! `G` must be positive definite. The factorisation `J = L^{-T} Q` and the
//! triangular `R` of the active normals are updated with Givens rotations.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    NotPositiveDefinite,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of `C x >= d`, zero for inactive rows.
    pub multipliers: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
}

pub fn solve_qp(g: &DMatrix<f64>, a: &DVector<f64>, c: &DMatrix<f64>, d: &DVector<f64>) -> QpSolution {
    let n = g.nrows();
    let m = c.nrows();
    let fail = |status| QpSolution {
        x: DVector::zeros(n),
        multipliers: DVector::zeros(m),
        status,
        iterations: 0,
    };
    let Some(chol) = g.clone().cholesky() else {
        return fail(QpStatus::NotPositiveDefinite);
    };
    let l = chol.l();
    // J = L^{-T}.
    let Some(linv) = l.clone().solve_lower_triangular(&DMatrix::identity(n, n)) else {
        return fail(QpStatus::NotPositiveDefinite);
    };
    let mut j = linv.transpose();
    let mut x = -chol.solve(a);

    let row_norms: Vec<f64> = (0..m).map(|i| c.row(i).norm().max(1e-300)).collect();
    let scale = 1.0 + a.amax() + d.amax();
    let tol = 1e-12 * scale;

    let mut r = DMatrix::<f64>::zeros(n, n);
    let mut active: Vec<usize> = Vec::with_capacity(n);
    let mut u: Vec<f64> = Vec::with_capacity(n + 1);
    let mut is_active = vec![false; m];
    let max_iter = 10 * (n + m) + 100;
    let mut iterations = 0;

    loop {
        iterations += 1;
        if iterations > max_iter {
            return finish(x, &active, &u, m, QpStatus::MaxIter, iterations);
        }
        // Most violated constraint, measured relative to its row norm.
        let slack = c * &x - d;
        let mut p = usize::MAX;
        let mut worst = -tol;
        for i in 0..m {
            if is_active[i] {
                continue;
            }
            let v = slack[i] / row_norms[i];
            if v < worst {
                worst = v;
                p = i;
            }
        }
        if p == usize::MAX {
            return finish(x, &active, &u, m, QpStatus::Optimal, iterations);
        }
        let np: DVector<f64> = c.row(p).transpose();
        let mut u_plus = u.clone();
        u_plus.push(0.0);
        loop {
            let q = active.len();
            let dvec = j.transpose() * &np;
            let z: DVector<f64> = if q < n {
                j.columns(q, n - q) * dvec.rows(q, n - q)
            } else {
                DVector::zeros(n)
            };
            let rvec = back_substitute(&r, &dvec, q);
            // Partial step: the first active constraint whose multiplier hits zero.
            let mut t1 = f64::INFINITY;
            let mut drop_k = usize::MAX;
            for k in 0..q {
                if rvec[k] > 0.0 {
                    let ratio = u_plus[k] / rvec[k];
                    if ratio < t1 {
                        t1 = ratio;
                        drop_k = k;
                    }
                }
            }
            // Full step: enough to satisfy constraint p.
            let zn = z.dot(&np);
            let sp = np.dot(&x) - d[p];
            let t2 = if z.amax() > 1e-14 * scale && zn > 0.0 {
                -sp / zn
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return finish(x, &active, &u, m, QpStatus::Infeasible, iterations);
            }
            if t2.is_infinite() {
                for k in 0..q {
                    u_plus[k] -= t * rvec[k];
                }
                u_plus[q] += t;
                drop_constraint(&mut r, &mut j, drop_k, q);
                is_active[active[drop_k]] = false;
                active.remove(drop_k);
                u_plus.remove(drop_k);
                continue;
            }
            x += &z * t;
            for k in 0..q {
                u_plus[k] -= t * rvec[k];
            }
            u_plus[q] += t;
            if t == t2 {
                if !add_constraint(&mut r, &mut j, &dvec, q) {
                    // Dependent with the active set: the step already satisfies it.
                    u_plus.pop();
                    u = u_plus;
                    break;
                }
                active.push(p);
                is_active[p] = true;
                u = u_plus;
                break;
            }
            drop_constraint(&mut r, &mut j, drop_k, q);
            is_active[active[drop_k]] = false;
            active.remove(drop_k);
            u_plus.remove(drop_k);
            iterations += 1;
            if iterations > max_iter {
                return finish(x, &active, &u_plus[..active.len()], m, QpStatus::MaxIter, iterations);
            }
        }
    }
}

fn finish(x: DVector<f64>, active: &[usize], u: &[f64], m: usize, status: QpStatus, iterations: usize) -> QpSolution {
    let mut multipliers = DVector::zeros(m);
    for (k, &i) in active.iter().enumerate() {
        if k < u.len() {
            multipliers[i] = u[k].max(0.0);
        }
    }
    QpSolution {
        x,
        multipliers,
        status,
        iterations,
    }
}

fn back_substitute(r: &DMatrix<f64>, d: &DVector<f64>, q: usize) -> Vec<f64> {
    let mut out = vec![0.0; q];
    for i in (0..q).rev() {
        let mut s = d[i];
        for k in (i + 1)..q {
            s -= r[(i, k)] * out[k];
        }
        out[i] = s / r[(i, i)];
    }
    out
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let h = a.hypot(b);
    if h == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        (a / h, b / h, h)
    }
}

fn rotate_columns(j: &mut DMatrix<f64>, c0: usize, c1: usize, c: f64, s: f64) {
    for row in 0..j.nrows() {
        let a = j[(row, c0)];
        let b = j[(row, c1)];
        j[(row, c0)] = c * a + s * b;
        j[(row, c1)] = -s * a + c * b;
    }
}

/// Appends the normal with transformed coordinates `d = J^T n` as active row `q`.
fn add_constraint(r: &mut DMatrix<f64>, j: &mut DMatrix<f64>, d: &DVector<f64>, q: usize) -> bool {
    let n = j.nrows();
    let mut d = d.clone();
    for i in ((q + 1)..n).rev() {
        if d[i] == 0.0 {
            continue;
        }
        let (c, s, h) = givens(d[i - 1], d[i]);
        d[i - 1] = h;
        d[i] = 0.0;
        rotate_columns(j, i - 1, i, c, s);
    }
    if d[q].abs() <= 1e-14 * d.amax().max(1.0) {
        return false;
    }
    for i in 0..=q {
        r[(i, q)] = d[i];
    }
    true
}

/// Removes active row `k` out of `q` and restores the triangular factor.
fn drop_constraint(r: &mut DMatrix<f64>, j: &mut DMatrix<f64>, k: usize, q: usize) {
    for col in k..(q - 1) {
        for row in 0..q {
            r[(row, col)] = r[(row, col + 1)];
        }
    }
    for row in 0..q {
        r[(row, q - 1)] = 0.0;
    }
    for col in k..(q - 1) {
        let (c, s, h) = givens(r[(col, col)], r[(col + 1, col)]);
        r[(col, col)] = h;
        r[(col + 1, col)] = 0.0;
        for cc in (col + 1)..(q - 1) {
            let a = r[(col, cc)];
            let b = r[(col + 1, cc)];
            r[(col, cc)] = c * a + s * b;
            r[(col + 1, cc)] = -s * a + c * b;
        }
        rotate_columns(j, col, col + 1, c, s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unconstrained_minimum() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let a = DVector::from_column_slice(&[-2.0, -4.0]);
        let sol = solve_qp(&g, &a, &DMatrix::zeros(0, 2), &DVector::zeros(0));
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.x, DVector::from_column_slice(&[1.0, 1.0]), epsilon = 1e-12);
    }

    #[test]
    fn classic_quadprog_example() {
        // min -(0,5,0)x + 1/2 x^T x  s.t. A^T x >= b with the textbook data.
        let g = DMatrix::identity(3, 3);
        let a = DVector::from_column_slice(&[0.0, -5.0, 0.0]);
        let c = DMatrix::from_row_slice(3, 3, &[-4.0, -3.0, 0.0, 2.0, 1.0, 0.0, 0.0, -2.0, 1.0]);
        let d = DVector::from_column_slice(&[-8.0, 2.0, 0.0]);
        let sol = solve_qp(&g, &a, &c, &d);
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(
            sol.x,
            DVector::from_column_slice(&[0.4761905, 1.0476190, 2.0952381]),
            epsilon = 1e-6
        );
        assert_relative_eq!(
            sol.multipliers,
            DVector::from_column_slice(&[0.0, 0.2380952, 2.0952381]),
            epsilon = 1e-6
        );
    }

    #[test]
    fn infeasible_detected() {
        let g = DMatrix::identity(1, 1);
        let a = DVector::zeros(1);
        let c = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let d = DVector::from_column_slice(&[1.0, 0.0]);
        assert_eq!(solve_qp(&g, &a, &c, &d).status, QpStatus::Infeasible);
    }

    #[test]
    fn box_projection_with_drops() {
        // Project (3, -3, 0.5) onto the unit box; needs active-set changes.
        let g = DMatrix::identity(3, 3);
        let target = DVector::from_column_slice(&[3.0, -3.0, 0.5]);
        let a = -&target;
        let mut c = DMatrix::zeros(6, 3);
        let mut d = DVector::zeros(6);
        for i in 0..3 {
            c[(i, i)] = 1.0;
            d[i] = -1.0;
            c[(3 + i, i)] = -1.0;
            d[3 + i] = -1.0;
        }
        let sol = solve_qp(&g, &a, &c, &d);
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.x, DVector::from_column_slice(&[1.0, -1.0, 0.5]), epsilon = 1e-12);
    }

    #[test]
    fn kkt_on_random_problems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(2..8);
            let m = rng.random_range(1..15);
            let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let g = &b * b.transpose() + DMatrix::identity(n, n) * 0.1;
            let a = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let c = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            // Feasible by construction: the origin satisfies C x >= d.
            let d = DVector::from_fn(m, |_, _| rng.random_range(-1.0..0.0));
            let sol = solve_qp(&g, &a, &c, &d);
            assert_eq!(sol.status, QpStatus::Optimal);
            let slack = &c * &sol.x - &d;
            assert!(slack.min() >= -1e-9);
            let grad = &g * &sol.x + &a - c.transpose() * &sol.multipliers;
            assert!(grad.amax() <= 1e-8, "stationarity {}", grad.amax());
            for i in 0..m {
                assert!((sol.multipliers[i] * slack[i]).abs() <= 1e-8);
            }
        }
    }
}
