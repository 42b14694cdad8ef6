//! Vehicle plant models.
//!
//! Continuous lateral (linear bicycle) and longitudinal (gap/speed
//! integrator) models with a shared driver/system input channel, exact
//! zero-order-hold discretization via the augmented matrix exponential,
//! and the discrete plant step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Front-wheel steering angle limit, rad.
pub const STEER_LIMIT: f64 = 0.3;
/// Longitudinal acceleration limits, m/s^2.
pub const ACCEL_MIN: f64 = -7.0;
pub const ACCEL_MAX: f64 = 3.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlantError {
    #[error("longitudinal speed must be positive for the lateral model")]
    NonPositiveSpeed,
    #[error("step time must be positive")]
    NonPositiveStepTime,
    #[error("matrix entries are not finite")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Bicycle-model parameters. Defaults are the simulation vehicle:
/// a=1.0 m, b=1.5 m, m=1270 kg, Iz=1443.1 kg m^2, Cf=Cr=30000 N/rad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams<T> {
    pub dist_front: T,
    pub dist_rear: T,
    pub mass: T,
    pub yaw_inertia: T,
    pub cornering_front: T,
    pub cornering_rear: T,
}

impl<T: Real> Default for VehicleParams<T> {
    fn default() -> Self {
        Self {
            dist_front: T::of(1.0),
            dist_rear: T::of(1.5),
            mass: T::of(1270.0),
            yaw_inertia: T::of(1443.1),
            cornering_front: T::of(30_000.0),
            cornering_rear: T::of(30_000.0),
        }
    }
}

/// Lateral state: displacement, lateral velocity, yaw angle, yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LateralState<T> {
    pub d_y: T,
    pub v_y: T,
    pub psi: T,
    pub omega: T,
}

impl<T: Real> LateralState<T> {
    pub fn to_vector(&self) -> DVector<T> {
        DVector::from_vec(vec![self.d_y, self.v_y, self.psi, self.omega])
    }

    pub fn from_vector(v: &DVector<T>) -> Self {
        Self {
            d_y: v[0],
            v_y: v[1],
            psi: v[2],
            omega: v[3],
        }
    }
}

/// Longitudinal state: relative distance to target, host speed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LongitudinalState<T> {
    pub d_x: T,
    pub v_x: T,
}

impl<T: Real> LongitudinalState<T> {
    pub fn to_vector(&self) -> DVector<T> {
        DVector::from_vec(vec![self.d_x, self.v_x])
    }

    pub fn from_vector(v: &DVector<T>) -> Self {
        Self { d_x: v[0], v_x: v[1] }
    }

    pub fn collided(&self) -> bool {
        self.d_x <= T::zero()
    }
}

/// Continuous-time model `x' = A x + B1 u_D + B2 u_A + Bw w`, `z = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel<T: Real> {
    pub a: DMatrix<T>,
    pub b1: DMatrix<T>,
    pub b2: DMatrix<T>,
    pub bw: DMatrix<T>,
    pub c: DMatrix<T>,
}

/// Lateral bicycle model linearized at longitudinal speed `v_x`.
///
/// State (d_y, v_y, psi, omega); input front-wheel angle (shared channel,
/// B1 = B2); outputs (d_y, psi). The (1,3) coupling entry of A is `v_x`.
pub fn lateral_continuous<T: Real>(
    params: &VehicleParams<T>,
    v_x: T,
) -> Result<ContinuousModel<T>, PlantError> {
    if v_x <= T::zero() {
        return Err(PlantError::NonPositiveSpeed);
    }
    let two = T::of(2.0);
    let cf = params.cornering_front;
    let cr = params.cornering_rear;
    let af = params.dist_front;
    let br = params.dist_rear;
    let m = params.mass;
    let iz = params.yaw_inertia;

    let a11 = -(two * cf + two * cr) / (m * v_x);
    let a12 = -v_x - (two * af * cf - two * br * cr) / (m * v_x);
    let a21 = -(two * af * cf - two * br * cr) / (iz * v_x);
    let a22 = -(two * af * af * cf + two * br * br * cr) / (iz * v_x);
    let b1 = two * cf / m;
    let b2 = two * af * cf / iz;

    let z = T::zero();
    let one = T::one();
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            z, one, v_x, z, //
            z, a11, z, a12, //
            z, z, z, one, //
            z, a21, z, a22,
        ],
    );
    let b = DMatrix::from_column_slice(4, 1, &[z, b1, z, b2]);
    let c = DMatrix::from_row_slice(2, 4, &[one, z, z, z, z, z, one, z]);
    Ok(ContinuousModel {
        a,
        b1: b.clone(),
        b2: b,
        bw: DMatrix::zeros(4, 1),
        c,
    })
}

/// Longitudinal model: gap `d_x` closes at `v_x - w` (w is the target
/// speed), speed integrates the shared acceleration inputs. Outputs are
/// the full state.
pub fn longitudinal_continuous<T: Real>() -> ContinuousModel<T> {
    let z = T::zero();
    let one = T::one();
    let a = DMatrix::from_row_slice(2, 2, &[z, -one, z, z]);
    let b = DMatrix::from_column_slice(2, 1, &[z, one]);
    let bw = DMatrix::from_column_slice(2, 1, &[one, z]);
    ContinuousModel {
        a,
        b1: b.clone(),
        b2: b,
        bw,
        c: DMatrix::identity(2, 2),
    }
}

/// Discrete-time joint model `x(k+1) = A x + B1 u_D + B2 u_A + Bw w`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJointModel<T: Real> {
    pub a: DMatrix<T>,
    pub b1: DMatrix<T>,
    pub b2: DMatrix<T>,
    pub bw: DMatrix<T>,
    pub c: DMatrix<T>,
    pub step_time: T,
}

impl<T: Real> DiscreteJointModel<T> {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b1.ncols()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.bw.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// One discrete plant step.
    pub fn step(
        &self,
        x: &DVector<T>,
        u1: &DVector<T>,
        u2: &DVector<T>,
        w: &DVector<T>,
    ) -> Result<DVector<T>, PlantError> {
        if x.len() != self.state_dim() {
            return Err(PlantError::DimensionMismatch(format!(
                "state has {} entries, expected {}",
                x.len(),
                self.state_dim()
            )));
        }
        if u1.len() != self.input_dim() || u2.len() != self.input_dim() {
            return Err(PlantError::DimensionMismatch(format!(
                "inputs have {}/{} entries, expected {}",
                u1.len(),
                u2.len(),
                self.input_dim()
            )));
        }
        if w.len() != self.disturbance_dim() {
            return Err(PlantError::DimensionMismatch(format!(
                "disturbance has {} entries, expected {}",
                w.len(),
                self.disturbance_dim()
            )));
        }
        Ok(&self.a * x + &self.b1 * u1 + &self.b2 * u2 + &self.bw * w)
    }

    pub fn output(&self, x: &DVector<T>) -> DVector<T> {
        &self.c * x
    }
}

/// Exact zero-order-hold discretization via the augmented matrix
/// exponential `exp([[A, B], [0, 0]] T)`; inputs and disturbance are held
/// constant over each step.
pub fn discretize<T: Real>(
    cont: &ContinuousModel<T>,
    step_time: T,
) -> Result<DiscreteJointModel<T>, PlantError> {
    if step_time <= T::zero() {
        return Err(PlantError::NonPositiveStepTime);
    }
    let n = cont.a.nrows();
    let m1 = cont.b1.ncols();
    let m2 = cont.b2.ncols();
    let mw = cont.bw.ncols();
    let dim = n + m1 + m2 + mw;

    let mut aug = DMatrix::zeros(dim, dim);
    aug.view_mut((0, 0), (n, n)).copy_from(&cont.a);
    aug.view_mut((0, n), (n, m1)).copy_from(&cont.b1);
    aug.view_mut((0, n + m1), (n, m2)).copy_from(&cont.b2);
    aug.view_mut((0, n + m1 + m2), (n, mw)).copy_from(&cont.bw);
    aug *= step_time;

    let e = aug.exp();
    if e.iter().any(|v| !num_traits::Float::is_finite(*v)) {
        return Err(PlantError::NonFinite);
    }

    Ok(DiscreteJointModel {
        a: e.view((0, 0), (n, n)).into_owned(),
        b1: e.view((0, n), (n, m1)).into_owned(),
        b2: e.view((0, n + m1), (n, m2)).into_owned(),
        bw: e.view((0, n + m1 + m2), (n, mw)).into_owned(),
        c: cont.c.clone(),
        step_time,
    })
}

/// Clamp a steering command to the actuator limit.
pub fn saturate_steering<T: Real>(delta: T) -> T {
    num_traits::clamp(delta, T::of(-STEER_LIMIT), T::of(STEER_LIMIT))
}

/// Clamp an acceleration command to the actuator limits.
pub fn saturate_accel<T: Real>(accel: T) -> T {
    num_traits::clamp(accel, T::of(ACCEL_MIN), T::of(ACCEL_MAX))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lateral_entries_match_hand_formulas() {
        let params = VehicleParams::<f64>::default();
        let m = lateral_continuous(&params, 20.0).unwrap();
        assert_relative_eq!(m.a[(1, 1)], -120000.0 / 25400.0, epsilon = 1e-12);
        assert_relative_eq!(m.b1[(1, 0)], 2.0 * 30000.0 / 1270.0, epsilon = 1e-12);
        assert_relative_eq!(m.a[(0, 2)], 20.0);
        assert_eq!(m.b1, m.b2);
    }

    #[test]
    fn symmetric_axle_cancels_a21() {
        let params = VehicleParams {
            dist_front: 1.2,
            dist_rear: 1.2,
            ..VehicleParams::<f64>::default()
        };
        let m = lateral_continuous(&params, 15.0).unwrap();
        assert_relative_eq!(m.a[(3, 1)], 0.0);
    }

    #[test]
    fn lateral_rejects_zero_speed() {
        let params = VehicleParams::<f64>::default();
        assert_eq!(
            lateral_continuous(&params, 0.0).unwrap_err(),
            PlantError::NonPositiveSpeed
        );
    }

    #[test]
    fn longitudinal_gap_rate_is_target_minus_host() {
        let m = longitudinal_continuous::<f64>();
        let x = DVector::from_vec(vec![20.0, 8.0]);
        let w = DVector::from_vec(vec![10.0]);
        let dx = &m.a * &x + &m.bw * &w;
        assert_relative_eq!(dx[0], 2.0); // gap opening
        assert_relative_eq!(dx[1], 0.0);
    }

    #[test]
    fn longitudinal_zoh_matches_nilpotent_hand_result() {
        let d = discretize(&longitudinal_continuous::<f64>(), 0.01).unwrap();
        assert_relative_eq!(d.a[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(d.a[(0, 1)], -0.01, epsilon = 1e-14);
        assert_relative_eq!(d.a[(1, 0)], 0.0, epsilon = 1e-14);
        assert_relative_eq!(d.a[(1, 1)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(d.b1[(0, 0)], -5e-5, epsilon = 1e-16);
        assert_relative_eq!(d.b1[(1, 0)], 0.01, epsilon = 1e-14);
        assert_relative_eq!(d.bw[(0, 0)], 0.01, epsilon = 1e-14);
        assert_relative_eq!(d.bw[(1, 0)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn tiny_step_approaches_identity() {
        let params = VehicleParams::<f64>::default();
        let c = lateral_continuous(&params, 20.0).unwrap();
        let d = discretize(&c, 1e-9).unwrap();
        let eye = DMatrix::<f64>::identity(4, 4);
        assert!((d.a - eye).amax() < 1e-6);
    }

    #[test]
    fn equal_speeds_hold_gap() {
        let d = discretize(&longitudinal_continuous::<f64>(), 0.01).unwrap();
        let x = DVector::from_vec(vec![20.0, 10.0]);
        let u = DVector::from_vec(vec![0.0]);
        let w = DVector::from_vec(vec![10.0]);
        let next = d.step(&x, &u, &u, &w).unwrap();
        assert_relative_eq!(next[0], 20.0, epsilon = 1e-12);
        assert_relative_eq!(next[1], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_state_zero_input_is_equilibrium() {
        let params = VehicleParams::<f64>::default();
        let d = discretize(&lateral_continuous(&params, 20.0).unwrap(), 0.01).unwrap();
        let x = DVector::zeros(4);
        let u = DVector::zeros(1);
        let w = DVector::zeros(1);
        let next = d.step(&x, &u, &u, &w).unwrap();
        assert!(next.amax() == 0.0);
    }

    #[test]
    fn input_split_is_irrelevant_when_channels_match() {
        let params = VehicleParams::<f64>::default();
        let d = discretize(&lateral_continuous(&params, 20.0).unwrap(), 0.01).unwrap();
        let x = DVector::from_vec(vec![0.1, -0.2, 0.05, 0.3]);
        let w = DVector::zeros(1);
        let a = d
            .step(
                &x,
                &DVector::from_vec(vec![0.07]),
                &DVector::from_vec(vec![0.03]),
                &w,
            )
            .unwrap();
        let b = d
            .step(
                &x,
                &DVector::from_vec(vec![0.0]),
                &DVector::from_vec(vec![0.1]),
                &w,
            )
            .unwrap();
        assert!((a - b).amax() < 1e-15);
    }

    #[test]
    fn step_rejects_dimension_mismatch() {
        let d = discretize(&longitudinal_continuous::<f64>(), 0.01).unwrap();
        let bad = d.step(
            &DVector::zeros(3),
            &DVector::zeros(1),
            &DVector::zeros(1),
            &DVector::zeros(1),
        );
        assert!(matches!(bad, Err(PlantError::DimensionMismatch(_))));
    }

    #[test]
    fn zoh_matches_substepped_euler_for_lateral_model() {
        let params = VehicleParams::<f64>::default();
        let c = lateral_continuous(&params, 20.0).unwrap();
        let d = discretize(&c, 0.01).unwrap();

        let x0 = DVector::from_vec(vec![0.5, -0.1, 0.02, 0.1]);
        let u1 = DVector::from_vec(vec![0.05]);
        let u2 = DVector::from_vec(vec![-0.02]);
        let w = DVector::zeros(1);

        let zoh = d.step(&x0, &u1, &u2, &w).unwrap();

        // Many Euler sub-steps with held inputs.
        let sub = 0.01 / 20_000.0;
        let mut x = x0.clone();
        for _ in 0..20_000 {
            let dx = &c.a * &x + &c.b1 * &u1 + &c.b2 * &u2;
            x += dx * sub;
        }
        for i in 0..4 {
            assert!(
                (zoh[i] - x[i]).abs() <= 1e-6 * x[i].abs().max(1.0),
                "entry {i}: zoh {} vs euler {}",
                zoh[i],
                x[i]
            );
        }
    }
}
