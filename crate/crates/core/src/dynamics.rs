//! Forward-Euler kinematic models.
//!
//! States and inputs are flat slices so the optimisers can treat every robot
//! alike; the typed structs are conveniences for callers.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::geometry::Pose2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Distance from the centre of gravity to the front axle.
    pub l_f: f64,
    /// Distance from the centre of gravity to the rear axle.
    pub l_r: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams { l_f: 1.125, l_r: 1.125 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BicycleState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BicycleInput {
    pub a: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UnicycleState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UnicycleInput {
    pub v: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RobotModel {
    /// State `(x, y, psi, v)`, input `(a, delta)`.
    Bicycle(VehicleParams),
    /// State `(x, y, psi)`, input `(v, omega)`.
    Unicycle,
}

impl RobotModel {
    pub fn state_dim(&self) -> usize {
        match self {
            RobotModel::Bicycle(_) => 4,
            RobotModel::Unicycle => 3,
        }
    }

    pub fn input_dim(&self) -> usize {
        2
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if let RobotModel::Bicycle(p) = self {
            if !(p.l_f > 0.0 && p.l_r > 0.0 && p.l_f.is_finite() && p.l_r.is_finite()) {
                return Err(ModelError::Parameter(format!(
                    "axle distances must be positive, got l_f = {}, l_r = {}",
                    p.l_f, p.l_r
                )));
            }
        }
        Ok(())
    }

    pub fn check(&self, z: &[f64], u: &[f64]) -> Result<(), ModelError> {
        if z.len() != self.state_dim() {
            return Err(ModelError::StateLength {
                expected: self.state_dim(),
                got: z.len(),
            });
        }
        if u.len() != self.input_dim() {
            return Err(ModelError::InputLength {
                expected: self.input_dim(),
                got: u.len(),
            });
        }
        Ok(())
    }

    pub fn step(&self, z: &[f64], u: &[f64], dt: f64) -> Result<Vec<f64>, ModelError> {
        self.check(z, u)?;
        Ok(self.step_unchecked(z, u, dt))
    }

    pub(crate) fn step_unchecked(&self, z: &[f64], u: &[f64], dt: f64) -> Vec<f64> {
        match self {
            RobotModel::Bicycle(p) => {
                let s = bicycle_step(
                    &BicycleState {
                        x: z[0],
                        y: z[1],
                        psi: z[2],
                        v: z[3],
                    },
                    &BicycleInput { a: u[0], delta: u[1] },
                    p,
                    dt,
                );
                vec![s.x, s.y, s.psi, s.v]
            }
            RobotModel::Unicycle => {
                let s = unicycle_step(
                    &UnicycleState {
                        x: z[0],
                        y: z[1],
                        psi: z[2],
                    },
                    &UnicycleInput { v: u[0], omega: u[1] },
                    dt,
                );
                vec![s.x, s.y, s.psi]
            }
        }
    }

    /// Jacobians `(df/dz, df/du)` of one Euler step.
    pub fn linearize(&self, z: &[f64], u: &[f64], dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        match self {
            RobotModel::Bicycle(p) => bicycle_jacobians(z, u, p, dt),
            RobotModel::Unicycle => {
                let (s, c) = z[2].sin_cos();
                let v = u[0];
                let mut a = DMatrix::identity(3, 3);
                a[(0, 2)] = -dt * v * s;
                a[(1, 2)] = dt * v * c;
                let mut b = DMatrix::zeros(3, 2);
                b[(0, 0)] = dt * c;
                b[(1, 0)] = dt * s;
                b[(2, 1)] = dt;
                (a, b)
            }
        }
    }

    pub fn pose(&self, z: &[f64]) -> Pose2 {
        Pose2::new(z[0], z[1], z[2])
    }
}

fn slip_angle(delta: f64, p: &VehicleParams) -> f64 {
    (delta.tan() * p.l_r / (p.l_f + p.l_r)).atan()
}

pub fn bicycle_step(z: &BicycleState, u: &BicycleInput, p: &VehicleParams, dt: f64) -> BicycleState {
    let beta = slip_angle(u.delta, p);
    let l = p.l_f + p.l_r;
    BicycleState {
        x: z.x + dt * z.v * (z.psi + beta).cos(),
        y: z.y + dt * z.v * (z.psi + beta).sin(),
        psi: z.psi + dt * z.v * beta.cos() / l * u.delta.tan(),
        v: (z.v + dt * u.a).max(0.0),
    }
}

pub fn unicycle_step(z: &UnicycleState, u: &UnicycleInput, dt: f64) -> UnicycleState {
    UnicycleState {
        x: z.x + dt * u.v * z.psi.cos(),
        y: z.y + dt * u.v * z.psi.sin(),
        psi: z.psi + dt * u.omega,
    }
}

fn bicycle_jacobians(z: &[f64], u: &[f64], p: &VehicleParams, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (psi, v) = (z[2], z[3]);
    let (acc, delta) = (u[0], u[1]);
    let l = p.l_f + p.l_r;
    let k = p.l_r / l;
    let td = delta.tan();
    let sec2 = 1.0 + td * td;
    let beta = (k * td).atan();
    let dbeta = k * sec2 / (1.0 + k * k * td * td);
    let (sh, ch) = (psi + beta).sin_cos();
    let (sb, cb) = beta.sin_cos();

    let mut a = DMatrix::identity(4, 4);
    a[(0, 2)] = -dt * v * sh;
    a[(0, 3)] = dt * ch;
    a[(1, 2)] = dt * v * ch;
    a[(1, 3)] = dt * sh;
    a[(2, 3)] = dt * cb * td / l;
    let mut b = DMatrix::zeros(4, 2);
    b[(0, 1)] = -dt * v * sh * dbeta;
    b[(1, 1)] = dt * v * ch * dbeta;
    b[(2, 1)] = dt * v / l * (-sb * dbeta * td + cb * sec2);
    if v + dt * acc > 0.0 {
        b[(3, 0)] = dt;
    } else {
        a[(3, 3)] = 0.0;
    }
    (a, b)
}

/// States `z_0 .. z_N` obtained by applying `inputs` from `z0`.
pub fn rollout(model: &RobotModel, z0: &[f64], inputs: &[Vec<f64>], dt: f64) -> Result<Vec<Vec<f64>>, ModelError> {
    let mut out = Vec::with_capacity(inputs.len() + 1);
    out.push(z0.to_vec());
    for u in inputs {
        let next = model.step(out.last().expect("nonempty"), u, dt)?;
        out.push(next);
    }
    Ok(out)
}

/// Drops the first element and repeats the last: `[s0, .., sN] -> [s1, .., sN, sN]`.
pub fn shift_and_augment<T: Clone>(seq: &[T]) -> Vec<T> {
    match seq.len() {
        0 => Vec::new(),
        1 => seq.to_vec(),
        _ => {
            let mut out = seq[1..].to_vec();
            out.push(seq[seq.len() - 1].clone());
            out
        }
    }
}

/// Applies [`shift_and_augment`] `k` times.
pub fn shift_by<T: Clone>(seq: &[T], k: usize) -> Vec<T> {
    if seq.is_empty() {
        return Vec::new();
    }
    let last = seq.len() - 1;
    (0..seq.len()).map(|i| seq[(i + k).min(last)].clone()).collect()
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const DT: f64 = 0.05;

    #[test]
    fn bicycle_from_rest_accelerates_without_moving() {
        let m = RobotModel::Bicycle(VehicleParams::default());
        let z = m.step(&[0.0, 0.0, 0.0, 0.0], &[1.0, 0.0], DT).unwrap();
        assert_eq!(z, vec![0.0, 0.0, 0.0, DT]);
    }

    #[test]
    fn bicycle_straight_line() {
        let m = RobotModel::Bicycle(VehicleParams::default());
        let traj = rollout(&m, &[0.0, 1.85, 0.0, 15.0], &vec![vec![0.0, 0.0]; 15], DT).unwrap();
        let last = traj.last().unwrap();
        assert_relative_eq!(last[0], 15.0 * 0.75, epsilon = 1e-12);
        assert_eq!(last[1], 1.85);
        assert_eq!(last[2], 0.0);
    }

    #[test]
    fn bicycle_speed_is_clamped() {
        let m = RobotModel::Bicycle(VehicleParams::default());
        let z = m.step(&[0.0, 0.0, 0.0, 0.1], &[-4.0, 0.0], DT).unwrap();
        assert_eq!(z[3], 0.0);
    }

    #[test]
    fn bicycle_turns_towards_steering() {
        let m = RobotModel::Bicycle(VehicleParams::default());
        let z = m.step(&[0.0, 0.0, 0.0, 10.0], &[0.0, 0.2], DT).unwrap();
        assert!(z[2] > 0.0 && z[1] > 0.0);
    }

    #[test]
    fn unicycle_straight_and_turning() {
        let m = RobotModel::Unicycle;
        let z = m.step(&[1.0, 2.0, std::f64::consts::FRAC_PI_2], &[2.0, 0.0], DT).unwrap();
        assert_relative_eq!(z[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(z[1], 2.0 + 0.1, epsilon = 1e-15);
        let z = m.step(&[0.0, 0.0, 0.0], &[0.0, 1.0], DT).unwrap();
        assert_eq!(z, vec![0.0, 0.0, DT]);
    }

    #[test]
    fn dimension_errors() {
        let m = RobotModel::Unicycle;
        assert!(matches!(m.step(&[0.0; 4], &[0.0; 2], DT), Err(ModelError::StateLength { .. })));
        assert!(matches!(m.step(&[0.0; 3], &[0.0; 1], DT), Err(ModelError::InputLength { .. })));
        let bad = RobotModel::Bicycle(VehicleParams { l_f: 0.0, l_r: 1.0 });
        assert!(bad.validate().is_err());
    }

    fn check_jacobians(m: &RobotModel, z: &[f64], u: &[f64]) {
        let (a, b) = m.linearize(z, u, DT);
        let h = 1e-6;
        for j in 0..z.len() {
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[j] += h;
            zm[j] -= h;
            let fp = m.step(&zp, u, DT).unwrap();
            let fm = m.step(&zm, u, DT).unwrap();
            for i in 0..z.len() {
                assert_relative_eq!(a[(i, j)], (fp[i] - fm[i]) / (2.0 * h), epsilon = 1e-7);
            }
        }
        for j in 0..u.len() {
            let mut up = u.to_vec();
            let mut um = u.to_vec();
            up[j] += h;
            um[j] -= h;
            let fp = m.step(z, &up, DT).unwrap();
            let fm = m.step(z, &um, DT).unwrap();
            for i in 0..z.len() {
                assert_relative_eq!(b[(i, j)], (fp[i] - fm[i]) / (2.0 * h), epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        check_jacobians(&RobotModel::Bicycle(VehicleParams::default()), &[3.0, 1.0, 0.3, 12.0], &[0.7, -0.15]);
        check_jacobians(
            &RobotModel::Bicycle(VehicleParams { l_f: 1.2, l_r: 1.6 }),
            &[0.0, 0.0, -1.0, 4.0],
            &[-1.0, 0.25],
        );
        check_jacobians(&RobotModel::Unicycle, &[1.0, -2.0, 2.5], &[1.5, -0.4]);
    }

    #[test]
    fn shift_and_augment_examples() {
        assert_eq!(shift_and_augment(&[1, 2, 3]), vec![2, 3, 3]);
        assert_eq!(shift_and_augment(&[7]), vec![7]);
        assert_eq!(shift_by(&[1, 2, 3, 4], 2), vec![3, 4, 4, 4]);
        assert_eq!(shift_by(&[1, 2, 3], 0), vec![1, 2, 3]);
    }

    #[test]
    fn wrap_angle_range() {
        assert_relative_eq!(wrap_angle(3.0 * std::f64::consts::PI), std::f64::consts::PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(-0.1), -0.1, epsilon = 1e-15);
        assert_relative_eq!(wrap_angle(2.0 * std::f64::consts::PI + 0.2), 0.2, epsilon = 1e-12);
    }
}
