//! Polytopes in halfspace form and planar helpers.
//!
//! A polytope is `{p : A p <= b}`. Planar robot footprints are built from a
//! body-frame base polytope `(A_O, b_O)` and a pose `(x, y, psi)` as
//! `A = A_O R(psi)^T`, `b = b_O + A [x, y]^T`.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Tolerance used when testing vertex candidates for feasibility.
const VERTEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Polytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, GeometryError> {
        if a.nrows() != b.len() {
            return Err(GeometryError::DimensionMismatch(format!(
                "A has {} rows but b has {} entries",
                a.nrows(),
                b.len()
            )));
        }
        if a.ncols() == 0 || a.nrows() == 0 {
            return Err(GeometryError::DimensionMismatch("empty constraint matrix".into()));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        for i in 0..a.nrows() {
            if a.row(i).norm() <= 1e-14 {
                return Err(GeometryError::ZeroRow(i));
            }
        }
        Ok(Polytope { a, b })
    }

    /// Builds a planar polytope from row-major constraint rows.
    pub fn from_rows(rows: &[[f64; 2]], b: &[f64]) -> Result<Self, GeometryError> {
        let a = DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]);
        Polytope::new(a, DVector::from_column_slice(b))
    }

    /// Axis-aligned box `lo <= p <= hi` in any dimension.
    pub fn axis_box(lo: &[f64], hi: &[f64]) -> Result<Self, GeometryError> {
        let n = lo.len();
        if hi.len() != n {
            return Err(GeometryError::DimensionMismatch("box bounds differ in length".into()));
        }
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for i in 0..n {
            a[(i, i)] = 1.0;
            b[i] = hi[i];
            a[(n + i, i)] = -1.0;
            b[n + i] = -lo[i];
        }
        Polytope::new(a, b)
    }

    /// Halfspace form of the convex hull of planar vertices given in
    /// counter-clockwise order.
    pub fn from_ccw_vertices(vertices: &[Vector2<f64>]) -> Result<Self, GeometryError> {
        let m = vertices.len();
        if m < 3 {
            return Err(GeometryError::Empty);
        }
        let mut rows = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        for i in 0..m {
            let p = vertices[i];
            let q = vertices[(i + 1) % m];
            let e = q - p;
            let n = Vector2::new(e.y, -e.x);
            let len = n.norm();
            if len <= 1e-12 {
                return Err(GeometryError::Empty);
            }
            let n = n / len;
            rows.push([n.x, n.y]);
            b.push(n.dot(&p));
        }
        Polytope::from_rows(&rows, &b)
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn n_constraints(&self) -> usize {
        self.a.nrows()
    }

    pub fn contains(&self, p: &DVector<f64>, tol: f64) -> bool {
        (&self.a * p - &self.b).iter().all(|&r| r <= tol)
    }

    /// The polytope shifted by `t`.
    pub fn translated(&self, t: &DVector<f64>) -> Polytope {
        Polytope {
            a: self.a.clone(),
            b: &self.b + &self.a * t,
        }
    }

    /// Equivalent polytope with unit-norm rows.
    pub fn normalized(&self) -> Polytope {
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        for i in 0..a.nrows() {
            let n = a.row(i).norm();
            a.row_mut(i).scale_mut(1.0 / n);
            b[i] /= n;
        }
        Polytope { a, b }
    }
}

/// Planar pose `(x, y, psi)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, psi: f64) -> Self {
        Pose2 { x, y, psi }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

/// Hyperplane `{p : normal^T p = offset}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    pub normal: DVector<f64>,
    pub offset: f64,
}

impl Hyperplane {
    pub fn signed_value(&self, p: &DVector<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

pub fn rotation_matrix(psi: f64) -> Matrix2<f64> {
    let (s, c) = psi.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Derivative of [`rotation_matrix`] with respect to `psi`.
pub fn rotation_matrix_derivative(psi: f64) -> Matrix2<f64> {
    let (s, c) = psi.sin_cos();
    Matrix2::new(-s, -c, c, -s)
}

/// Body-frame rectangle of length `h` (along the heading) and width `w`.
pub fn rectangle_base(h: f64, w: f64) -> Polytope {
    Polytope::from_rows(
        &[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
        &[h / 2.0, w / 2.0, h / 2.0, w / 2.0],
    )
    .expect("rectangle rows are nonzero")
}

/// Vehicle footprint: `A = [R^T; -R^T]`, `b = [h/2, w/2, h/2, w/2] + A [x, y]^T`.
pub fn vehicle_polytope(pose: &Pose2, h: f64, w: f64) -> Polytope {
    transform_base_polytope(&rectangle_base(h, w), pose).expect("rectangle is planar")
}

/// Places a body-frame polytope at `pose`.
pub fn transform_base_polytope(base: &Polytope, pose: &Pose2) -> Result<Polytope, GeometryError> {
    if base.dim() != 2 {
        return Err(GeometryError::NotPlanar(base.dim()));
    }
    let rt = rotation_matrix(pose.psi).transpose();
    let a = &base.a * DMatrix::from_column_slice(2, 2, rt.as_slice());
    let p = DVector::from_column_slice(&[pose.x, pose.y]);
    let b = &base.b + &a * p;
    Ok(Polytope { a, b })
}

/// Vertices of a bounded planar polytope in counter-clockwise order.
///
/// Returns an empty list for an empty polytope and collapses degenerate
/// polytopes (a point or a segment) to their distinct vertices.
pub fn enumerate_vertices(p: &Polytope) -> Result<Vec<Vector2<f64>>, GeometryError> {
    if p.dim() != 2 {
        return Err(GeometryError::NotPlanar(p.dim()));
    }
    if !normals_span_plane(&p.a) {
        return Err(GeometryError::Unbounded);
    }
    let m = p.n_constraints();
    let scale = p.b.amax().max(1.0);
    let mut verts: Vec<Vector2<f64>> = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let mat = Matrix2::new(p.a[(i, 0)], p.a[(i, 1)], p.a[(j, 0)], p.a[(j, 1)]);
            let det = mat.determinant();
            let ni = p.a.row(i).norm();
            let nj = p.a.row(j).norm();
            if det.abs() <= 1e-12 * ni * nj {
                continue;
            }
            let Some(inv) = mat.try_inverse() else { continue };
            let v = inv * Vector2::new(p.b[i], p.b[j]);
            let feasible = (0..m).all(|k| {
                let nk = p.a.row(k).norm();
                p.a[(k, 0)] * v.x + p.a[(k, 1)] * v.y - p.b[k] <= VERTEX_TOL * scale * nk
            });
            if feasible && !verts.iter().any(|u| (u - v).norm() <= 1e-9 * scale) {
                verts.push(v);
            }
        }
    }
    if verts.len() > 2 {
        let c = verts.iter().fold(Vector2::zeros(), |acc, v| acc + v) / verts.len() as f64;
        verts.sort_by(|u, v| {
            let au = (u.y - c.y).atan2(u.x - c.x);
            let av = (v.y - c.y).atan2(v.x - c.x);
            au.total_cmp(&av)
        });
    }
    Ok(verts)
}

/// True when the row normals positively span the plane, i.e. the polytope is bounded.
fn normals_span_plane(a: &DMatrix<f64>) -> bool {
    let mut angles: Vec<f64> = (0..a.nrows()).map(|i| a[(i, 1)].atan2(a[(i, 0)])).collect();
    if angles.len() < 3 {
        return false;
    }
    angles.sort_by(f64::total_cmp);
    let mut max_gap = angles[0] + 2.0 * std::f64::consts::PI - angles[angles.len() - 1];
    for w in angles.windows(2) {
        max_gap = max_gap.max(w[1] - w[0]);
    }
    max_gap < std::f64::consts::PI - 1e-12
}

/// Shoelace area of a simple polygon with ordered vertices.
pub fn polygon_area(vertices: &[Vector2<f64>]) -> f64 {
    let m = vertices.len();
    if m < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..m {
        let p = vertices[i];
        let q = vertices[(i + 1) % m];
        twice += p.x * q.y - q.x * p.y;
    }
    0.5 * twice.abs()
}

fn point_segment_distance(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 <= 0.0 { 0.0 } else { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) };
    (a + ab * t - p).norm()
}

fn cross(u: Vector2<f64>, v: Vector2<f64>) -> f64 {
    u.x * v.y - u.y * v.x
}

fn segments_cross(p1: Vector2<f64>, p2: Vector2<f64>, q1: Vector2<f64>, q2: Vector2<f64>) -> bool {
    let d1 = cross(q2 - q1, p1 - q1);
    let d2 = cross(q2 - q1, p2 - q1);
    let d3 = cross(p2 - p1, q1 - p1);
    let d4 = cross(p2 - p1, q2 - p1);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn edges(vertices: &[Vector2<f64>]) -> Vec<(Vector2<f64>, Vector2<f64>)> {
    let m = vertices.len();
    match m {
        0 => Vec::new(),
        1 => vec![(vertices[0], vertices[0])],
        2 => vec![(vertices[0], vertices[1])],
        _ => (0..m).map(|i| (vertices[i], vertices[(i + 1) % m])).collect(),
    }
}

/// Exact Euclidean distance between two planar polytopes, computed from their
/// boundaries. Zero when they intersect.
pub fn oracle_distance(p1: &Polytope, p2: &Polytope) -> Result<f64, GeometryError> {
    let v1 = enumerate_vertices(p1)?;
    let v2 = enumerate_vertices(p2)?;
    if v1.is_empty() || v2.is_empty() {
        return Err(GeometryError::Empty);
    }
    let inside = |p: &Polytope, v: &Vector2<f64>| {
        let scale = p.b.amax().max(1.0);
        p.contains(&DVector::from_column_slice(&[v.x, v.y]), 1e-12 * scale)
    };
    if v1.iter().any(|v| inside(p2, v)) || v2.iter().any(|v| inside(p1, v)) {
        return Ok(0.0);
    }
    let e1 = edges(&v1);
    let e2 = edges(&v2);
    let mut best = f64::INFINITY;
    for &(a, b) in &e1 {
        for &(c, d) in &e2 {
            if segments_cross(a, b, c, d) {
                return Ok(0.0);
            }
            best = best
                .min(point_segment_distance(a, c, d))
                .min(point_segment_distance(b, c, d))
                .min(point_segment_distance(c, a, b))
                .min(point_segment_distance(d, a, b));
        }
    }
    Ok(best)
}
