//! Minimum distance between two polytopes through its conic dual
//!
//! ```text
//! max  -b1^T l12 - b2^T l21
//! s.t. A1^T l12 + s = 0,  A2^T l21 - s = 0,  ||s|| <= 1,  l12, l21 >= 0
//! ```
//!
//! solved with a primal-dual hybrid gradient iteration. Every few iterations
//! the constraints that look active are handed to an exact equality-constrained
//! solve; a candidate is accepted only once primal feasibility, dual
//! feasibility and a zero duality gap are verified.
//!
//! At the optimum `s` points from the first polytope's nearest neighbour in the
//! second polytope towards the first polytope, so `s^T x >= -b1^T l12` on `P1`
//! and `s^T y <= b2^T l21` on `P2`.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::GeometryError;
use crate::geometry::{enumerate_vertices, Hyperplane, Polytope};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualStatus {
    Optimal,
    /// The polytopes touch or overlap; distance, multipliers and `s` are zero.
    Intersecting,
    /// No verified optimum within the iteration budget; fields hold the last iterate.
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub distance: f64,
    pub lambda_12: DVector<f64>,
    pub lambda_21: DVector<f64>,
    pub s: DVector<f64>,
    pub status: DualStatus,
    pub iterations: usize,
    /// Closest point in the first polytope.
    pub point_1: DVector<f64>,
    /// Closest point in the second polytope.
    pub point_2: DVector<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct DualSettings {
    pub max_iter: usize,
    /// Relative tolerance of the optimality checks.
    pub tol: f64,
    pub polish_every: usize,
}

impl Default for DualSettings {
    fn default() -> Self {
        DualSettings {
            max_iter: 5000,
            tol: 1e-9,
            polish_every: 10,
        }
    }
}

pub fn solve_dual_distance(p1: &Polytope, p2: &Polytope) -> Result<DualSolution, GeometryError> {
    solve_dual_distance_with(p1, p2, &DualSettings::default(), None)
}

/// Solves the dual distance problem, optionally starting from a previous
/// solution of a nearby problem with the same constraint layout.
pub fn solve_dual_distance_with(
    p1: &Polytope,
    p2: &Polytope,
    settings: &DualSettings,
    warm: Option<&DualSolution>,
) -> Result<DualSolution, GeometryError> {
    if p1.dim() != p2.dim() {
        return Err(GeometryError::DimensionMismatch(format!(
            "polytopes of dimension {} and {}",
            p1.dim(),
            p2.dim()
        )));
    }
    let sp = Scaled::new(p1, p2);
    let m1 = p1.n_constraints();
    let m2 = p2.n_constraints();

    let warm = warm.filter(|w| w.lambda_12.len() == m1 && w.lambda_21.len() == m2 && w.s.len() == p1.dim());
    if let Some(w) = warm {
        if w.status == DualStatus::Optimal {
            let act1: Vec<usize> = (0..m1).filter(|&i| w.lambda_12[i] > 0.0).collect();
            let act2: Vec<usize> = (0..m2).filter(|&i| w.lambda_21[i] > 0.0).collect();
            if let Some(sol) = sp.polish(&act1, &act2, settings.tol) {
                return Ok(sp.finish(p1, p2, sol, 0));
            }
        }
    }

    let mut it = Pdhg::new(&sp, warm);
    for iter in 1..=settings.max_iter {
        it.step(&sp);
        if iter % settings.polish_every == 0 || iter == settings.max_iter {
            if let Some(sol) = sp.polish_from_iterate(&it.x, &it.y, settings.tol) {
                return Ok(sp.finish(p1, p2, sol, iter));
            }
        }
    }
    Ok(sp.failed(p1, p2, &it, settings.max_iter))
}

/// Both polytopes with unit rows, translated by a common offset and scaled to
/// unit size. Multipliers and `s` are invariant under these maps up to the
/// recorded row norms.
struct Scaled {
    a1: DMatrix<f64>,
    b1: DVector<f64>,
    a2: DMatrix<f64>,
    b2: DVector<f64>,
    r1: DVector<f64>,
    r2: DVector<f64>,
    center: DVector<f64>,
    scale: f64,
}

enum Polished {
    Separated {
        x: DVector<f64>,
        y: DVector<f64>,
        mu1: DVector<f64>,
        mu2: DVector<f64>,
    },
    Intersecting {
        z: DVector<f64>,
    },
}

impl Scaled {
    fn new(p1: &Polytope, p2: &Polytope) -> Self {
        let r1 = DVector::from_iterator(p1.n_constraints(), (0..p1.n_constraints()).map(|i| p1.a.row(i).norm()));
        let r2 = DVector::from_iterator(p2.n_constraints(), (0..p2.n_constraints()).map(|i| p2.a.row(i).norm()));
        let n1 = p1.normalized();
        let n2 = p2.normalized();
        let c1 = ls_center(&n1);
        let c2 = ls_center(&n2);
        let center = (&c1 + &c2) * 0.5;
        let b1 = &n1.b - &n1.a * &center;
        let b2 = &n2.b - &n2.a * &center;
        let scale = b1.amax().max(b2.amax()).max(1e-9);
        Scaled {
            a1: n1.a,
            b1: b1 / scale,
            a2: n2.a,
            b2: b2 / scale,
            r1,
            r2,
            center,
            scale,
        }
    }

    fn dim(&self) -> usize {
        self.a1.ncols()
    }

    fn to_scaled(&self, p: &DVector<f64>) -> DVector<f64> {
        (p - &self.center) / self.scale
    }

    fn unscale(&self, p: &DVector<f64>) -> DVector<f64> {
        p * self.scale + &self.center
    }

    fn polish_from_iterate(&self, x: &DVector<f64>, y: &DVector<f64>, tol: f64) -> Option<Polished> {
        let slack1 = &self.b1 - &self.a1 * x;
        let slack2 = &self.b2 - &self.a2 * y;
        let mut last: Option<(Vec<usize>, Vec<usize>)> = None;
        for theta in [1e-4, 1e-3, 1e-2, 5e-2] {
            let act1: Vec<usize> = (0..slack1.len()).filter(|&i| slack1[i] <= theta).collect();
            let act2: Vec<usize> = (0..slack2.len()).filter(|&i| slack2[i] <= theta).collect();
            if last.as_ref() == Some(&(act1.clone(), act2.clone())) {
                continue;
            }
            if let Some(sol) = self.polish(&act1, &act2, tol) {
                return Some(sol);
            }
            last = Some((act1, act2));
        }
        self.polish_by_enumeration(&slack1, &slack2, tol)
    }

    /// Tries every small working set built from the tightest constraints of
    /// each body. Used when the active-set iteration stalls on near ties.
    fn polish_by_enumeration(&self, slack1: &DVector<f64>, slack2: &DVector<f64>, tol: f64) -> Option<Polished> {
        let n = self.dim();
        let c1 = subsets(&tightest(slack1, n + 2), n);
        let c2 = subsets(&tightest(slack2, n + 2), n);
        let mut best: Option<(f64, Polished)> = None;
        for w1 in &c1 {
            for w2 in c2.iter().filter(|w2| w1.len() + w2.len() <= n + 1) {
                let Some((x, y, mu1, mu2)) = self.eqp(w1, w2) else {
                    continue;
                };
                if mu1.iter().chain(mu2.iter()).any(|&m| m < -tol) {
                    continue;
                }
                let feas1 = (&self.a1 * &x - &self.b1).max();
                let feas2 = (&self.a2 * &y - &self.b2).max();
                if feas1.max(feas2) > tol {
                    continue;
                }
                let d = (&x - &y).norm();
                if best.as_ref().is_some_and(|(bd, _)| *bd <= d) {
                    continue;
                }
                if let Some(sol) = self.certify(w1, w2, x, y, &mu1, &mu2, tol) {
                    best = Some((d, sol));
                }
            }
        }
        best.map(|(_, sol)| sol)
    }

    /// Active-set refinement of the primal problem `min 1/2 ||x - y||^2`
    /// starting from the given working sets.
    fn polish(&self, act1: &[usize], act2: &[usize], tol: f64) -> Option<Polished> {
        let mut w1: Vec<usize> = act1.to_vec();
        let mut w2: Vec<usize> = act2.to_vec();
        let budget = 2 * (self.b1.len() + self.b2.len()) + 4;
        let mut seen: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
        for _ in 0..budget {
            let key = (sorted(&w1), sorted(&w2));
            if seen.contains(&key) {
                return None;
            }
            seen.push(key);
            let (x, y, mu1, mu2) = self.eqp(&w1, &w2)?;
            // Drop the most negative multiplier first.
            let mut worst: Option<(bool, usize, f64)> = None;
            for (k, &m) in mu1.iter().enumerate() {
                if m < -tol && worst.is_none_or(|(_, _, v)| m < v) {
                    worst = Some((true, k, m));
                }
            }
            for (k, &m) in mu2.iter().enumerate() {
                if m < -tol && worst.is_none_or(|(_, _, v)| m < v) {
                    worst = Some((false, k, m));
                }
            }
            if let Some((first, k, _)) = worst {
                if first {
                    w1.remove(k);
                } else {
                    w2.remove(k);
                }
                continue;
            }
            // Then add the most violated constraint.
            let v1 = &self.a1 * &x - &self.b1;
            let v2 = &self.a2 * &y - &self.b2;
            let (i1, m1) = argmax(&v1);
            let (i2, m2) = argmax(&v2);
            if m1.max(m2) > tol {
                if m1 >= m2 {
                    if w1.contains(&i1) {
                        return None;
                    }
                    w1.push(i1);
                } else {
                    if w2.contains(&i2) {
                        return None;
                    }
                    w2.push(i2);
                }
                continue;
            }
            if let Some(sol) = self.certify(&w1, &w2, x, y, &mu1, &mu2, tol) {
                return Some(sol);
            }
            // Near-parallel faces leave the working set rank deficient; grow it
            // with the tightest inactive constraint and try again.
            let pick = |v: &DVector<f64>, w: &[usize]| {
                (0..v.len())
                    .filter(|i| !w.contains(i))
                    .max_by(|&a, &b| v[a].total_cmp(&v[b]))
                    .map(|i| (i, v[i]))
            };
            match (pick(&v1, &w1), pick(&v2, &w2)) {
                (Some((i1, s1)), Some((_, s2))) if s1 >= s2 => w1.push(i1),
                (Some((i1, _)), None) => w1.push(i1),
                (_, Some((i2, _))) => w2.push(i2),
                (None, None) => return None,
            }
        }
        None
    }

    /// Checks stationarity and a zero duality gap on the scaled problem.
    /// Primal feasibility of `x`, `y` is the caller's job.
    #[allow(clippy::too_many_arguments)]
    fn certify(
        &self,
        w1: &[usize],
        w2: &[usize],
        x: DVector<f64>,
        y: DVector<f64>,
        mu1: &DVector<f64>,
        mu2: &DVector<f64>,
        tol: f64,
    ) -> Option<Polished> {
        let w = &x - &y;
        let d = w.norm();
        if d <= tol.sqrt() * 1e-2 {
            let z = (&x + &y) * 0.5;
            let ok1 = (&self.a1 * &z - &self.b1).max() <= tol;
            let ok2 = (&self.a2 * &z - &self.b2).max() <= tol;
            return (ok1 && ok2).then_some(Polished::Intersecting { z });
        }
        let mut full1 = DVector::zeros(self.b1.len());
        let mut full2 = DVector::zeros(self.b2.len());
        for (k, &i) in w1.iter().enumerate() {
            full1[i] += mu1[k].max(0.0);
        }
        for (k, &i) in w2.iter().enumerate() {
            full2[i] += mu2[k].max(0.0);
        }
        let r1 = &w + self.a1.transpose() * &full1;
        let r2 = -&w + self.a2.transpose() * &full2;
        let gap = (d * d + self.b1.dot(&full1) + self.b2.dot(&full2)).abs();
        let res = r1.amax().max(r2.amax());
        (res <= tol * d.max(1.0) && gap <= tol * d.max(1.0)).then_some(Polished::Separated {
            x,
            y,
            mu1: full1,
            mu2: full2,
        })
    }

    #[allow(clippy::type_complexity)]
    fn eqp(
        &self,
        w1: &[usize],
        w2: &[usize],
    ) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
        let n = self.dim();
        let k1 = w1.len();
        let k2 = w2.len();
        let size = 2 * n + k1 + k2;
        let mut m = DMatrix::zeros(size, size);
        let mut rhs = DVector::zeros(size);
        for i in 0..n {
            m[(i, i)] = 1.0;
            m[(i, n + i)] = -1.0;
            m[(n + i, i)] = -1.0;
            m[(n + i, n + i)] = 1.0;
        }
        for (k, &r) in w1.iter().enumerate() {
            for j in 0..n {
                m[(j, 2 * n + k)] = self.a1[(r, j)];
                m[(2 * n + k, j)] = self.a1[(r, j)];
            }
            rhs[2 * n + k] = self.b1[r];
        }
        for (k, &r) in w2.iter().enumerate() {
            for j in 0..n {
                m[(n + j, 2 * n + k1 + k)] = self.a2[(r, j)];
                m[(2 * n + k1 + k, n + j)] = self.a2[(r, j)];
            }
            rhs[2 * n + k1 + k] = self.b2[r];
        }
        let sol = m.svd(true, true).solve(&rhs, 1e-12).ok()?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let x = sol.rows(0, n).into_owned();
        let y = sol.rows(n, n).into_owned();
        let mu1 = sol.rows(2 * n, k1).into_owned();
        let mu2 = sol.rows(2 * n + k1, k2).into_owned();
        Some((x, y, mu1, mu2))
    }

    fn finish(&self, p1: &Polytope, p2: &Polytope, sol: Polished, iterations: usize) -> DualSolution {
        let n = self.dim();
        match sol {
            Polished::Intersecting { z } => {
                let z = self.unscale(&z);
                DualSolution {
                    distance: 0.0,
                    lambda_12: DVector::zeros(p1.n_constraints()),
                    lambda_21: DVector::zeros(p2.n_constraints()),
                    s: DVector::zeros(n),
                    status: DualStatus::Intersecting,
                    iterations,
                    point_1: z.clone(),
                    point_2: z,
                }
            }
            Polished::Separated { x, y, mu1, mu2 } => {
                let w = &x - &y;
                let d = w.norm();
                let s = &w / d;
                let lambda_12 = mu1.component_div(&self.r1) / d;
                let lambda_21 = mu2.component_div(&self.r2) / d;
                let distance = -p1.b.dot(&lambda_12) - p2.b.dot(&lambda_21);
                DualSolution {
                    distance,
                    lambda_12,
                    lambda_21,
                    s,
                    status: DualStatus::Optimal,
                    iterations,
                    point_1: self.unscale(&x),
                    point_2: self.unscale(&y),
                }
            }
        }
    }

    fn failed(&self, p1: &Polytope, p2: &Polytope, it: &Pdhg, iterations: usize) -> DualSolution {
        let lambda_12 = it.l1.component_div(&self.r1);
        let lambda_21 = it.l2.component_div(&self.r2);
        DualSolution {
            distance: -p1.b.dot(&lambda_12) - p2.b.dot(&lambda_21),
            lambda_12,
            lambda_21,
            s: it.s.clone(),
            status: DualStatus::Failed,
            iterations,
            point_1: self.unscale(&it.x),
            point_2: self.unscale(&it.y),
        }
    }
}

fn sorted(w: &[usize]) -> Vec<usize> {
    let mut w = w.to_vec();
    w.sort_unstable();
    w
}

/// Indices of the `k` smallest slacks.
fn tightest(slack: &DVector<f64>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..slack.len()).collect();
    idx.sort_by(|&a, &b| slack[a].total_cmp(&slack[b]));
    idx.truncate(k);
    idx
}

/// Non-empty subsets of `items` with at most `max` elements.
fn subsets(items: &[usize], max: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![vec![]];
    for &it in items {
        let grown: Vec<Vec<usize>> = out
            .iter()
            .filter(|s| s.len() < max)
            .map(|s| {
                let mut s = s.clone();
                s.push(it);
                s
            })
            .collect();
        out.extend(grown);
    }
    out.retain(|s| !s.is_empty());
    out
}

fn argmax(v: &DVector<f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &x) in v.iter().enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

/// Least-squares solution of `A p = b`; an interior-ish reference point.
fn ls_center(p: &Polytope) -> DVector<f64> {
    p.a.clone()
        .svd(true, true)
        .solve(&p.b, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(p.dim()))
}

/// Primal-dual hybrid gradient state. The conic variables are `(l1, l2, s)`;
/// the equality multipliers are stored as the points `x`, `y`.
struct Pdhg {
    l1: DVector<f64>,
    l2: DVector<f64>,
    s: DVector<f64>,
    x: DVector<f64>,
    y: DVector<f64>,
    tau: f64,
    sigma: f64,
}

impl Pdhg {
    fn new(sp: &Scaled, warm: Option<&DualSolution>) -> Self {
        let n = sp.dim();
        let knorm = operator_norm(sp);
        let eta = 0.95 / knorm;
        let (l1, l2, s, x, y) = match warm {
            Some(w) if w.status != DualStatus::Intersecting => (
                w.lambda_12.component_mul(&sp.r1),
                w.lambda_21.component_mul(&sp.r2),
                w.s.clone(),
                sp.to_scaled(&w.point_1),
                sp.to_scaled(&w.point_2),
            ),
            _ => {
                let c1 = ls_center(&Polytope {
                    a: sp.a1.clone(),
                    b: sp.b1.clone(),
                });
                let c2 = ls_center(&Polytope {
                    a: sp.a2.clone(),
                    b: sp.b2.clone(),
                });
                (
                    DVector::zeros(sp.b1.len()),
                    DVector::zeros(sp.b2.len()),
                    DVector::zeros(n),
                    c1,
                    c2,
                )
            }
        };
        Pdhg {
            l1,
            l2,
            s,
            x,
            y,
            tau: eta,
            sigma: eta,
        }
    }

    fn step(&mut self, sp: &Scaled) {
        // Projected ascent on the conic variables.
        let l1n = (&self.l1 + (&sp.a1 * &self.x - &sp.b1) * self.tau).map(|v| v.max(0.0));
        let l2n = (&self.l2 + (&sp.a2 * &self.y - &sp.b2) * self.tau).map(|v| v.max(0.0));
        let mut sn = &self.s + (&self.x - &self.y) * self.tau;
        let ns = sn.norm();
        if ns > 1.0 {
            sn /= ns;
        }
        // Extrapolated descent on the equality multipliers.
        let l1b = &l1n * 2.0 - &self.l1;
        let l2b = &l2n * 2.0 - &self.l2;
        let sb = &sn * 2.0 - &self.s;
        self.x -= (sp.a1.transpose() * &l1b + &sb) * self.sigma;
        self.y -= (sp.a2.transpose() * &l2b - &sb) * self.sigma;
        self.l1 = l1n;
        self.l2 = l2n;
        self.s = sn;
    }
}

fn operator_norm(sp: &Scaled) -> f64 {
    // Power iteration on K^T K with K = [[A1^T, 0, I], [0, A2^T, -I]].
    let m1 = sp.b1.len();
    let m2 = sp.b2.len();
    let n = sp.dim();
    let mut v = DVector::from_element(m1 + m2 + n, 1.0);
    let mut est = 1.0;
    for _ in 0..30 {
        let l1 = v.rows(0, m1);
        let l2 = v.rows(m1, m2);
        let s = v.rows(m1 + m2, n);
        let k1 = sp.a1.transpose() * l1 + s;
        let k2 = sp.a2.transpose() * l2 - s;
        let mut w = DVector::zeros(m1 + m2 + n);
        w.rows_mut(0, m1).copy_from(&(&sp.a1 * &k1));
        w.rows_mut(m1, m2).copy_from(&(&sp.a2 * &k2));
        w.rows_mut(m1 + m2, n).copy_from(&(&k1 - &k2));
        let nw = w.norm();
        if nw <= 0.0 {
            break;
        }
        est = nw / v.norm();
        v = w / nw;
    }
    est.sqrt() * 1.01
}

/// Residuals of a dual certificate against a required distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateReport {
    pub feasible: bool,
    /// `max(0, d_min - (-b1^T l12 - b2^T l21))`.
    pub distance_residual: f64,
    /// `||A1^T l12 + s||`.
    pub equality_12_residual: f64,
    /// `||A2^T l21 - s||`.
    pub equality_21_residual: f64,
    /// `max(0, ||s|| - 1)`.
    pub norm_residual: f64,
    /// Largest negative multiplier magnitude.
    pub sign_residual: f64,
}

pub const CERTIFICATE_TOL: f64 = 1e-7;

/// Checks whether `(l12, l21, s)` certifies `dist(P1, P2) >= d_min`.
pub fn feasibility_certificate(
    p1: &Polytope,
    p2: &Polytope,
    lambda_12: &DVector<f64>,
    lambda_21: &DVector<f64>,
    s: &DVector<f64>,
    d_min: f64,
) -> CertificateReport {
    let value = -p1.b.dot(lambda_12) - p2.b.dot(lambda_21);
    let distance_residual = (d_min - value).max(0.0);
    let equality_12_residual = (p1.a.transpose() * lambda_12 + s).norm();
    let equality_21_residual = (p2.a.transpose() * lambda_21 - s).norm();
    let norm_residual = (s.norm() - 1.0).max(0.0);
    let sign_residual = lambda_12
        .iter()
        .chain(lambda_21.iter())
        .fold(0.0f64, |acc, &l| acc.max(-l));
    let feasible = distance_residual <= CERTIFICATE_TOL
        && equality_12_residual <= CERTIFICATE_TOL
        && equality_21_residual <= CERTIFICATE_TOL
        && norm_residual <= CERTIFICATE_TOL
        && sign_residual <= CERTIFICATE_TOL;
    CertificateReport {
        feasible,
        distance_residual,
        equality_12_residual,
        equality_21_residual,
        norm_residual,
        sign_residual,
    }
}

/// Supporting hyperplanes `s^T x = -b1^T l12` (touching `P1`) and
/// `s^T y = b2^T l21` (touching `P2`), with unit normal `s`. `None` when the
/// polytopes intersect.
pub fn supporting_hyperplanes(
    p1: &Polytope,
    p2: &Polytope,
    sol: &DualSolution,
) -> Option<(Hyperplane, Hyperplane)> {
    let ns = sol.s.norm();
    if sol.status == DualStatus::Intersecting || ns <= 1e-12 {
        return None;
    }
    let normal = &sol.s / ns;
    let h1 = Hyperplane {
        normal: normal.clone(),
        offset: -p1.b.dot(&sol.lambda_12) / ns,
    };
    let h2 = Hyperplane {
        normal,
        offset: p2.b.dot(&sol.lambda_21) / ns,
    };
    Some((h1, h2))
}

/// The hyperplane midway between the two supporting hyperplanes; `P1` lies on
/// its positive side.
pub fn separating_hyperplane(p1: &Polytope, p2: &Polytope, sol: &DualSolution) -> Option<Hyperplane> {
    let (h1, h2) = supporting_hyperplanes(p1, p2, sol)?;
    Some(Hyperplane {
        normal: h1.normal,
        offset: 0.5 * (h1.offset + h2.offset),
    })
}

/// Multipliers `l >= 0` of the support problem `min_{x in P} s^T x`, i.e.
/// `A^T l = -s` with `-b^T l` equal to the minimum. Planar polytopes only.
pub fn support_multipliers(p: &Polytope, s: &Vector2<f64>) -> Result<(f64, DVector<f64>), GeometryError> {
    let verts = enumerate_vertices(p)?;
    if verts.is_empty() {
        return Err(GeometryError::Empty);
    }
    let m = p.n_constraints();
    let mut lambda = DVector::zeros(m);
    if s.norm() <= 1e-15 {
        return Ok((0.0, lambda));
    }
    let (vmin, _) = verts
        .iter()
        .map(|v| (v, s.dot(v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");
    let scale = p.b.amax().max(1.0);
    let active: Vec<usize> = (0..m)
        .filter(|&i| {
            let r = p.a.row(i);
            let slack = p.b[i] - r[0] * vmin.x - r[1] * vmin.y;
            slack <= 1e-9 * scale * r.norm()
        })
        .collect();
    // Pick the nonnegative combination of active normals that reproduces -s.
    let target = -s;
    let mut best: Option<(f64, Vec<(usize, f64)>)> = None;
    for (ia, &i) in active.iter().enumerate() {
        let ai = Vector2::new(p.a[(i, 0)], p.a[(i, 1)]);
        let t = ai.dot(&target) / ai.norm_squared();
        if t >= 0.0 {
            let res = (ai * t - target).norm();
            if best.as_ref().is_none_or(|b| res < b.0) {
                best = Some((res, vec![(i, t)]));
            }
        }
        for &j in &active[ia + 1..] {
            let aj = Vector2::new(p.a[(j, 0)], p.a[(j, 1)]);
            let mat = nalgebra::Matrix2::from_columns(&[ai, aj]);
            if let Some(inv) = mat.try_inverse() {
                let c = inv * target;
                if c.x >= -1e-12 && c.y >= -1e-12 {
                    let c = c.map(|v| v.max(0.0));
                    let res = (mat * c - target).norm();
                    if best.as_ref().is_none_or(|b| res < b.0) {
                        best = Some((res, vec![(i, c.x), (j, c.y)]));
                    }
                }
            }
        }
    }
    let (_, comb) = best.ok_or(GeometryError::Empty)?;
    for (i, v) in comb {
        lambda[i] = v;
    }
    Ok((-p.b.dot(&lambda), lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{oracle_distance, vehicle_polytope, Pose2};
    use approx::assert_relative_eq;

    fn square(x: f64, y: f64) -> Polytope {
        vehicle_polytope(&Pose2::new(x, y, 0.0), 1.0, 1.0)
    }

    #[test]
    fn unit_squares_three_apart() {
        let p1 = square(0.0, 0.0);
        let p2 = square(3.0, 0.0);
        let sol = solve_dual_distance(&p1, &p2).unwrap();
        assert_eq!(sol.status, DualStatus::Optimal);
        assert_relative_eq!(sol.distance, 2.0, epsilon = 1e-9);
        assert_relative_eq!(sol.s, DVector::from_column_slice(&[-1.0, 0.0]), epsilon = 1e-9);
        assert_relative_eq!(-p1.b.dot(&sol.lambda_12), -0.5, epsilon = 1e-9);
        assert_relative_eq!(-p2.b.dot(&sol.lambda_21), 2.5, epsilon = 1e-9);
        let (h1, h2) = supporting_hyperplanes(&p1, &p2, &sol).unwrap();
        // Normal is (-1, 0): offsets -0.5 and -2.5 mean x = 0.5 and x = 2.5.
        assert_relative_eq!(h1.offset, -0.5, epsilon = 1e-9);
        assert_relative_eq!(h2.offset, -2.5, epsilon = 1e-9);
        let mid = separating_hyperplane(&p1, &p2, &sol).unwrap();
        assert_relative_eq!(mid.offset, -1.5, epsilon = 1e-9);
    }

    #[test]
    fn swapping_arguments_negates_s() {
        let p1 = square(0.0, 0.0);
        let p2 = vehicle_polytope(&Pose2::new(2.5, 1.7, 0.4), 1.5, 0.6);
        let a = solve_dual_distance(&p1, &p2).unwrap();
        let b = solve_dual_distance(&p2, &p1).unwrap();
        assert_relative_eq!(a.distance, b.distance, epsilon = 1e-9);
        assert_relative_eq!(a.s, -b.s, epsilon = 1e-9);
    }

    #[test]
    fn overlapping_and_touching_are_intersecting() {
        for (p1, p2) in [(square(0.0, 0.0), square(0.5, 0.0)), (square(0.0, 0.0), square(1.0, 0.0))] {
            let sol = solve_dual_distance(&p1, &p2).unwrap();
            assert_eq!(sol.status, DualStatus::Intersecting);
            assert_eq!(sol.distance, 0.0);
            assert_eq!(sol.s.norm(), 0.0);
            assert!(sol.lambda_12.iter().chain(sol.lambda_21.iter()).all(|&l| l == 0.0));
        }
    }

    #[test]
    fn identical_polytopes_intersect() {
        let p = vehicle_polytope(&Pose2::new(1.0, -2.0, 0.3), 4.5, 1.8);
        let sol = solve_dual_distance(&p, &p).unwrap();
        assert_eq!(sol.status, DualStatus::Intersecting);
        assert_eq!(sol.distance, 0.0);
    }

    #[test]
    fn far_apart_polytopes_keep_accuracy() {
        let p1 = square(0.0, 0.0);
        let p2 = square(1.0e6, 0.0);
        let sol = solve_dual_distance(&p1, &p2).unwrap();
        assert_eq!(sol.status, DualStatus::Optimal);
        assert!((sol.distance - (1.0e6 - 1.0)).abs() <= 1e-6 * 1.0e6);
        assert!((sol.s.norm() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn scaling_rows_scales_multipliers() {
        let p1 = square(0.0, 0.0);
        let p2 = square(3.0, 0.4);
        let base = solve_dual_distance(&p1, &p2).unwrap();
        let p1s = Polytope::new(&p1.a * 2.0, &p1.b * 2.0).unwrap();
        let scaled = solve_dual_distance(&p1s, &p2).unwrap();
        assert_relative_eq!(scaled.distance, base.distance, epsilon = 1e-9);
        assert_relative_eq!(scaled.lambda_12 * 2.0, base.lambda_12, epsilon = 1e-9);
        assert_relative_eq!(scaled.s, base.s, epsilon = 1e-9);
    }

    #[test]
    fn parallel_offset_edges() {
        let p1 = square(0.0, 0.0);
        let p2 = square(3.0, 0.8);
        let sol = solve_dual_distance(&p1, &p2).unwrap();
        assert_relative_eq!(sol.distance, 2.0, epsilon = 1e-9);
        assert_relative_eq!(sol.distance, oracle_distance(&p1, &p2).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn warm_start_on_nearby_problem() {
        let p1 = vehicle_polytope(&Pose2::new(0.0, 0.0, 0.1), 4.5, 1.8);
        let p2 = vehicle_polytope(&Pose2::new(6.0, 2.0, -0.2), 4.5, 1.8);
        let cold = solve_dual_distance(&p1, &p2).unwrap();
        let p2b = vehicle_polytope(&Pose2::new(6.05, 2.0, -0.21), 4.5, 1.8);
        let warm = solve_dual_distance_with(&p1, &p2b, &DualSettings::default(), Some(&cold)).unwrap();
        assert_eq!(warm.iterations, 0);
        assert_relative_eq!(warm.distance, oracle_distance(&p1, &p2b).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn certificate_on_optimal_solution() {
        let p1 = square(0.0, 0.0);
        let p2 = square(3.0, 0.0);
        let sol = solve_dual_distance(&p1, &p2).unwrap();
        let ok = feasibility_certificate(&p1, &p2, &sol.lambda_12, &sol.lambda_21, &sol.s, 1.5);
        assert!(ok.feasible);
        let bad = feasibility_certificate(&p1, &p2, &sol.lambda_12, &sol.lambda_21, &sol.s, 2.5);
        assert!(!bad.feasible);
        assert_relative_eq!(bad.distance_residual, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn zero_certificate_only_for_zero_distance() {
        let p1 = square(0.0, 0.0);
        let p2 = square(3.0, 0.0);
        let z4 = DVector::zeros(4);
        let z2 = DVector::zeros(2);
        assert!(feasibility_certificate(&p1, &p2, &z4, &z4, &z2, 0.0).feasible);
        let s = DVector::from_column_slice(&[1.0, 0.0]);
        assert!(!feasibility_certificate(&p1, &p2, &z4, &z4, &s, 0.0).feasible);
    }

    #[test]
    fn three_dimensional_cubes() {
        let c1 = Polytope::axis_box(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]).unwrap();
        let c2 = Polytope::axis_box(&[3.0, 4.0, 1.0], &[4.0, 5.0, 2.0]).unwrap();
        let sol = solve_dual_distance(&c1, &c2).unwrap();
        assert_eq!(sol.status, DualStatus::Optimal);
        assert_relative_eq!(sol.distance, (4.0f64 + 9.0).sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn support_multipliers_on_square() {
        let p = square(0.0, 0.0);
        let (v, l) = support_multipliers(&p, &Vector2::new(-1.0, 0.0)).unwrap();
        assert_relative_eq!(v, -0.5, epsilon = 1e-12);
        assert_relative_eq!(p.a.transpose() * &l, DVector::from_column_slice(&[1.0, 0.0]), epsilon = 1e-12);
        let (v, l) = support_multipliers(&p, &Vector2::new(0.6, 0.8)).unwrap();
        assert_relative_eq!(v, -0.7, epsilon = 1e-12);
        assert!(l.iter().all(|&x| x >= 0.0));
    }
}
