use nalgebra::{DMatrix, DVector};

use crate::dynamics::wrap_angle;
use crate::error::NmpcError;

/// Quadratic weights on state error, input and input change.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub q_z: DMatrix<f64>,
    pub q_u: DMatrix<f64>,
    pub q_du: DMatrix<f64>,
}

impl CostWeights {
    pub fn diagonal(q_z: &[f64], q_u: &[f64], q_du: &[f64]) -> Self {
        CostWeights {
            q_z: DMatrix::from_diagonal(&DVector::from_column_slice(q_z)),
            q_u: DMatrix::from_diagonal(&DVector::from_column_slice(q_u)),
            q_du: DMatrix::from_diagonal(&DVector::from_column_slice(q_du)),
        }
    }

    pub fn validate(&self, nx: usize, nu: usize) -> Result<(), NmpcError> {
        let shapes = [
            ("q_z", &self.q_z, nx),
            ("q_u", &self.q_u, nu),
            ("q_du", &self.q_du, nu),
        ];
        for (name, m, n) in shapes {
            if m.nrows() != n || m.ncols() != n {
                return Err(NmpcError::Invalid(format!("{name} must be {n}x{n}")));
            }
            if (m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
                return Err(NmpcError::Invalid(format!("{name} must be symmetric")));
            }
            let min_eig = m.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-12 * (1.0 + m.amax()) {
                return Err(NmpcError::Invalid(format!("{name} must be positive semidefinite")));
            }
        }
        Ok(())
    }
}

/// State error with the heading component wrapped to `(-pi, pi]`.
pub(crate) fn state_error(z: &[f64], z_ref: &[f64]) -> DVector<f64> {
    let mut e = DVector::from_iterator(z.len(), z.iter().zip(z_ref).map(|(a, b)| a - b));
    e[2] = wrap_angle(e[2]);
    e
}

fn quad(q: &DMatrix<f64>, e: &DVector<f64>) -> f64 {
    e.dot(&(q * e))
}

/// `||z - z_ref||^2_Qz + ||u||^2_Qu + ||u - u_prev||^2_Qdu`.
pub fn stage_cost(z: &[f64], z_ref: &[f64], u: &[f64], u_prev: &[f64], w: &CostWeights) -> f64 {
    let ez = state_error(z, z_ref);
    let u = DVector::from_column_slice(u);
    let du = &u - DVector::from_column_slice(u_prev);
    quad(&w.q_z, &ez) + quad(&w.q_u, &u) + quad(&w.q_du, &du)
}

/// Horizon objective: state error at `k = 0..N`, inputs and their changes at
/// `k = 0..N-1`, with the change of `u_0` measured from `u_prev`.
pub fn horizon_cost(
    states: &[Vec<f64>],
    refs: &[Vec<f64>],
    inputs: &[Vec<f64>],
    u_prev: &[f64],
    w: &CostWeights,
) -> f64 {
    let mut j = 0.0;
    for (z, r) in states.iter().zip(refs) {
        j += quad(&w.q_z, &state_error(z, r));
    }
    let mut prev = DVector::from_column_slice(u_prev);
    for u in inputs {
        let u = DVector::from_column_slice(u);
        j += quad(&w.q_u, &u) + quad(&w.q_du, &(&u - &prev));
        prev = u;
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w() -> CostWeights {
        CostWeights::diagonal(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0], &[10.0, 10.0])
    }

    #[test]
    fn zero_at_reference() {
        let z = [1.0, 2.0, 0.1, 15.0];
        assert_eq!(stage_cost(&z, &z, &[0.0, 0.0], &[0.0, 0.0], &w()), 0.0);
    }

    #[test]
    fn weighted_terms() {
        let c = stage_cost(&[1.0, 0.0, 0.0, 0.0], &[0.0; 4], &[1.0, 0.0], &[0.0, 0.0], &w());
        assert_eq!(c, 1.0 + 1.0 + 10.0);
    }

    #[test]
    fn heading_error_wraps() {
        let pi = std::f64::consts::PI;
        let c = stage_cost(&[0.0, 0.0, pi - 0.1, 0.0], &[0.0, 0.0, -pi + 0.1, 0.0], &[0.0; 2], &[0.0; 2], &w());
        assert!((c - 3.0 * 0.04).abs() < 1e-12);
    }

    #[test]
    fn rejects_indefinite() {
        let mut bad = w();
        bad.q_u[(0, 0)] = -1.0;
        assert!(bad.validate(4, 2).is_err());
        assert!(w().validate(4, 2).is_ok());
        assert!(w().validate(3, 2).is_err());
    }
}
