//! Two-player non-cooperative MPC.
//!
//! Stacked prediction model over the preview horizon, per-player
//! quadratic tracking costs weighted by the privilege schedule, and the
//! closed-form open-loop Nash equilibrium. The solver is non-iterative:
//! both best-response relations are stacked into one linear system and
//! solved in a single shot.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::plant::DiscreteJointModel;
use crate::scalar::Real;

/// Condition-number cutoff beyond which `I - L` is treated as singular
/// and the equilibrium as non-existent.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GameError {
    #[error("horizons must satisfy Np >= Nu >= 1, got Np={np}, Nu={nu}")]
    BadHorizons { np: usize, nu: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("confidence weights must be nonnegative")]
    NegativeWeight,
    #[error("control penalties must be positive")]
    NonPositivePenalty,
}

/// Stacked prediction model: `Z = Psi x + Theta1 U1 + Theta2 U2 + Xi D`.
///
/// `Theta` and `Xi` are lower-block-triangular with `Nu` block columns;
/// inputs and disturbance beyond the control horizon are held at their
/// last value, so the final block column accumulates powers of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrices<T: Real> {
    pub psi: DMatrix<T>,
    pub theta1: DMatrix<T>,
    pub theta2: DMatrix<T>,
    pub xi: DMatrix<T>,
    pub np: usize,
    pub nu: usize,
    pub output_dim: usize,
    pub input_dim: usize,
    pub disturbance_dim: usize,
}

fn stacked_response<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    np: usize,
    nu: usize,
) -> DMatrix<T> {
    let p = c.nrows();
    let m = b.ncols();
    // c_pow[k] = C * A^k
    let mut c_pow = Vec::with_capacity(np);
    c_pow.push(c.clone());
    for k in 1..np {
        let next = &c_pow[k - 1] * a;
        c_pow.push(next);
    }
    let mut out = DMatrix::zeros(np * p, nu * m);
    for i in 1..=np {
        for j in 0..nu {
            let mut block = DMatrix::zeros(p, m);
            if j + 1 < nu {
                if j <= i - 1 {
                    block = &c_pow[i - 1 - j] * b;
                }
            } else if i >= nu {
                // Held input: accumulate every step driven by the last
                // free move.
                for m_pow in 0..=(i - nu) {
                    block += &c_pow[m_pow] * b;
                }
            }
            out.view_mut(((i - 1) * p, j * m), (p, m)).copy_from(&block);
        }
    }
    out
}

/// Build the stacked prediction matrices for a discrete joint model.
pub fn build_prediction<T: Real>(
    model: &DiscreteJointModel<T>,
    np: usize,
    nu: usize,
) -> Result<PredictionMatrices<T>, GameError> {
    if nu < 1 || np < nu {
        return Err(GameError::BadHorizons { np, nu });
    }
    let n = model.state_dim();
    let p = model.output_dim();
    if model.c.ncols() != n {
        return Err(GameError::DimensionMismatch(format!(
            "C has {} columns, state dim is {n}",
            model.c.ncols()
        )));
    }

    let mut psi = DMatrix::zeros(np * p, n);
    let mut ca = model.c.clone();
    for i in 0..np {
        ca = &ca * &model.a;
        psi.view_mut((i * p, 0), (p, n)).copy_from(&ca);
    }

    Ok(PredictionMatrices {
        psi,
        theta1: stacked_response(&model.a, &model.b1, &model.c, np, nu),
        theta2: stacked_response(&model.a, &model.b2, &model.c, np, nu),
        xi: stacked_response(&model.a, &model.bw, &model.c, np, nu),
        np,
        nu,
        output_dim: p,
        input_dim: model.input_dim(),
        disturbance_dim: model.disturbance_dim(),
    })
}

/// Per-player cost weights, stored as the diagonals of the
/// block-diagonal `Q_i` (length `Np * output_dim`) and of `R_i`
/// (length `Nu * input_dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceWeights<T: Real> {
    pub q1: DVector<T>,
    pub q2: DVector<T>,
    pub r1: DVector<T>,
    pub r2: DVector<T>,
}

impl<T: Real> ConfidenceWeights<T> {
    pub fn from_diagonals(
        q1: DVector<T>,
        q2: DVector<T>,
        r1: DVector<T>,
        r2: DVector<T>,
    ) -> Result<Self, GameError> {
        if q1.len() != q2.len() || r1.len() != r2.len() {
            return Err(GameError::DimensionMismatch(
                "player weight vectors must have matching lengths".into(),
            ));
        }
        if q1.iter().chain(q2.iter()).any(|v| *v < T::zero()) {
            return Err(GameError::NegativeWeight);
        }
        if r1.iter().chain(r2.iter()).any(|v| *v <= T::zero()) {
            return Err(GameError::NonPositivePenalty);
        }
        Ok(Self { q1, q2, r1, r2 })
    }
}

/// Build weights from per-step privilege values and per-step dynamic
/// factors. Each horizon step contributes a diag(kappa, lambda) block,
/// so the plant must have two outputs.
#[allow(clippy::too_many_arguments)]
pub fn build_confidence_scheduled<T: Real>(
    kappa1_horizon: &[T],
    kappa2_horizon: &[T],
    lambda1_horizon: &[T],
    lambda2_horizon: &[T],
    r1: T,
    r2: T,
    nu: usize,
    input_dim: usize,
) -> Result<ConfidenceWeights<T>, GameError> {
    let np = kappa1_horizon.len();
    if kappa2_horizon.len() != np
        || lambda1_horizon.len() != np
        || lambda2_horizon.len() != np
    {
        return Err(GameError::DimensionMismatch(
            "horizon weight slices must all have length Np".into(),
        ));
    }
    let interleave = |kappa: &[T], lambda: &[T]| {
        DVector::from_iterator(
            2 * np,
            kappa
                .iter()
                .zip(lambda.iter())
                .flat_map(|(k, l)| [*k, *l]),
        )
    };
    ConfidenceWeights::from_diagonals(
        interleave(kappa1_horizon, lambda1_horizon),
        interleave(kappa2_horizon, lambda2_horizon),
        DVector::from_element(nu * input_dim, r1),
        DVector::from_element(nu * input_dim, r2),
    )
}

/// Build weights with constant dynamic factors over the horizon.
#[allow(clippy::too_many_arguments)]
pub fn build_confidence<T: Real>(
    kappa1_horizon: &[T],
    kappa2_horizon: &[T],
    lambda1: T,
    lambda2: T,
    r1: T,
    r2: T,
    nu: usize,
    input_dim: usize,
) -> Result<ConfidenceWeights<T>, GameError> {
    let np = kappa1_horizon.len();
    build_confidence_scheduled(
        kappa1_horizon,
        kappa2_horizon,
        &vec![lambda1; np],
        &vec![lambda2; np],
        r1,
        r2,
        nu,
        input_dim,
    )
}

/// Forward-looking target stack over the preview horizon, maintained as
/// a shift register: each control step drops the oldest per-step target
/// and appends the newest.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTrajectory<T: Real> {
    blocks: VecDeque<DVector<T>>,
    dim: usize,
}

impl<T: Real> TargetTrajectory<T> {
    /// A horizon of `np` copies of one per-step target.
    pub fn constant(np: usize, block: DVector<T>) -> Self {
        let dim = block.len();
        Self {
            blocks: std::iter::repeat(block).take(np).collect(),
            dim,
        }
    }

    /// Drop the oldest per-step target and append a new one.
    pub fn push(&mut self, block: DVector<T>) -> Result<(), GameError> {
        if block.len() != self.dim {
            return Err(GameError::DimensionMismatch(format!(
                "target block has {} entries, expected {}",
                block.len(),
                self.dim
            )));
        }
        self.blocks.pop_front();
        self.blocks.push_back(block);
        Ok(())
    }

    /// Replace the whole horizon with one per-step target.
    pub fn fill(&mut self, block: DVector<T>) -> Result<(), GameError> {
        if block.len() != self.dim {
            return Err(GameError::DimensionMismatch(format!(
                "target block has {} entries, expected {}",
                block.len(),
                self.dim
            )));
        }
        for b in self.blocks.iter_mut() {
            *b = block.clone();
        }
        Ok(())
    }

    /// The stacked horizon vector (length `Np * output_dim`).
    pub fn stacked(&self) -> DVector<T> {
        DVector::from_iterator(
            self.blocks.len() * self.dim,
            self.blocks.iter().flat_map(|b| b.iter().copied()),
        )
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Tracking gain `F = (Theta' Q Theta + R)^-1 Theta' Q`, computed in the
/// square-root least-squares form: `F = pinv([S_Q Theta; S_R]) [S_Q; 0]`
/// with `S_Q = Q^(1/2)`, `S_R = R^(1/2)`.
pub fn response_gain<T: Real>(
    theta: &DMatrix<T>,
    q_diag: &DVector<T>,
    r_diag: &DVector<T>,
) -> Result<DMatrix<T>, GameError> {
    let rows = theta.nrows();
    let cols = theta.ncols();
    if q_diag.len() != rows || r_diag.len() != cols {
        return Err(GameError::DimensionMismatch(format!(
            "Theta is {rows}x{cols}, Q diag has {} entries, R diag has {}",
            q_diag.len(),
            r_diag.len()
        )));
    }
    let sq = q_diag.map(|v| num_traits::Float::sqrt(v));
    let sr = r_diag.map(|v| num_traits::Float::sqrt(v));

    let mut stacked = DMatrix::zeros(rows + cols, cols);
    let mut weighted = theta.clone();
    for i in 0..rows {
        for j in 0..cols {
            weighted[(i, j)] *= sq[i];
        }
    }
    stacked.view_mut((0, 0), (rows, cols)).copy_from(&weighted);
    for j in 0..cols {
        stacked[(rows + j, j)] = sr[j];
    }

    let mut rhs = DMatrix::zeros(rows + cols, rows);
    for i in 0..rows {
        rhs[(i, i)] = sq[i];
    }

    let pinv = stacked
        .pseudo_inverse(T::of(1e-13))
        .map_err(|e| GameError::DimensionMismatch(e.to_string()))?;
    Ok(pinv * rhs)
}

/// Tracking gain by the direct normal-equation formula. Kept as an
/// independent route for cross-checking [`response_gain`].
pub fn response_gain_direct<T: Real>(
    theta: &DMatrix<T>,
    q_diag: &DVector<T>,
    r_diag: &DVector<T>,
) -> Result<DMatrix<T>, GameError> {
    let rows = theta.nrows();
    let cols = theta.ncols();
    if q_diag.len() != rows || r_diag.len() != cols {
        return Err(GameError::DimensionMismatch(
            "weight diagonals do not match Theta".into(),
        ));
    }
    let q = DMatrix::from_diagonal(q_diag);
    let tq = theta.transpose() * &q;
    let mut h = &tq * theta;
    for j in 0..cols {
        h[(j, j)] += r_diag[j];
    }
    let hinv = h
        .try_inverse()
        .ok_or_else(|| GameError::DimensionMismatch("singular Hessian".into()))?;
    Ok(hinv * tq)
}

/// Open-loop Nash equilibrium of the two-player game.
#[derive(Debug, Clone, PartialEq)]
pub struct NashSolution<T: Real> {
    /// Full-horizon input sequences (length `Nu * input_dim`).
    pub u1: DVector<T>,
    pub u2: DVector<T>,
    /// First-step inputs actually applied (receding horizon).
    pub u1_first: DVector<T>,
    pub u2_first: DVector<T>,
    pub existence: bool,
    pub condition_estimate: T,
}

/// Solve the game in closed form.
///
/// Stacks both best-response relations `U_i = F_i (T_i - Psi x - Xi D -
/// Theta_j U_j)` into `(I - L) U = M e` and solves once. A singular or
/// ill-conditioned `I - L` is reported as `existence = false` with zero
/// inputs.
pub fn nash_solve<T: Real>(
    pred: &PredictionMatrices<T>,
    weights: &ConfidenceWeights<T>,
    t1: &TargetTrajectory<T>,
    t2: &TargetTrajectory<T>,
    x: &DVector<T>,
    d: &DVector<T>,
) -> Result<NashSolution<T>, GameError> {
    let nz = pred.psi.nrows();
    let nui = pred.theta1.ncols();
    if x.len() != pred.psi.ncols() {
        return Err(GameError::DimensionMismatch(format!(
            "state has {} entries, expected {}",
            x.len(),
            pred.psi.ncols()
        )));
    }
    if d.len() != pred.xi.ncols() {
        return Err(GameError::DimensionMismatch(format!(
            "disturbance stack has {} entries, expected {}",
            d.len(),
            pred.xi.ncols()
        )));
    }
    let t1s = t1.stacked();
    let t2s = t2.stacked();
    if t1s.len() != nz || t2s.len() != nz {
        return Err(GameError::DimensionMismatch(format!(
            "target stacks have {}/{} entries, expected {nz}",
            t1s.len(),
            t2s.len()
        )));
    }

    let f1 = response_gain(&pred.theta1, &weights.q1, &weights.r1)?;
    let f2 = response_gain(&pred.theta2, &weights.q2, &weights.r2)?;

    let free = &pred.psi * x + &pred.xi * d;
    let e1 = &t1s - &free;
    let e2 = &t2s - &free;

    let mut ilm = DMatrix::identity(2 * nui, 2 * nui);
    ilm.view_mut((0, nui), (nui, nui)).copy_from(&(&f1 * &pred.theta2));
    ilm.view_mut((nui, 0), (nui, nui)).copy_from(&(&f2 * &pred.theta1));

    let sv = ilm.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition_estimate = if smin > T::zero() {
        smax / smin
    } else {
        <T as num_traits::Float>::infinity()
    };
    let existence = num_traits::Float::is_finite(condition_estimate)
        && condition_estimate <= T::of(CONDITION_LIMIT);

    if !existence {
        let zero = DVector::zeros(nui);
        return Ok(NashSolution {
            u1: zero.clone(),
            u2: zero,
            u1_first: DVector::zeros(pred.input_dim),
            u2_first: DVector::zeros(pred.input_dim),
            existence: false,
            condition_estimate,
        });
    }

    let mut rhs = DVector::zeros(2 * nui);
    rhs.rows_mut(0, nui).copy_from(&(&f1 * e1));
    rhs.rows_mut(nui, nui).copy_from(&(&f2 * e2));

    let u = ilm
        .lu()
        .solve(&rhs)
        .ok_or_else(|| GameError::DimensionMismatch("LU solve failed".into()))?;

    let u1 = u.rows(0, nui).into_owned();
    let u2 = u.rows(nui, nui).into_owned();
    let m = pred.input_dim;
    Ok(NashSolution {
        u1_first: u1.rows(0, m).into_owned(),
        u2_first: u2.rows(0, m).into_owned(),
        u1,
        u2,
        existence: true,
        condition_estimate,
    })
}

/// Receding-horizon game controller bound to one plant model.
///
/// Owns the prediction matrices and both target shift registers; each
/// call to [`GameController::step`] rebuilds the confidence weights from
/// the privilege schedule's future values and solves the game.
#[derive(Debug, Clone)]
pub struct GameController<T: Real> {
    pub pred: PredictionMatrices<T>,
    pub t1: TargetTrajectory<T>,
    pub t2: TargetTrajectory<T>,
    pub lambda1: T,
    pub lambda2: T,
    pub r1: T,
    pub r2: T,
    /// Total privilege `A`; per-step weights split it between players.
    pub total_privilege: T,
}

impl<T: Real> GameController<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &DiscreteJointModel<T>,
        np: usize,
        nu: usize,
        lambda1: T,
        lambda2: T,
        r1: T,
        r2: T,
        total_privilege: T,
    ) -> Result<Self, GameError> {
        let pred = build_prediction(model, np, nu)?;
        if pred.output_dim != 2 {
            return Err(GameError::DimensionMismatch(
                "confidence blocks diag(kappa, lambda) need two outputs".into(),
            ));
        }
        let zero = DVector::zeros(2);
        Ok(Self {
            t1: TargetTrajectory::constant(np, zero.clone()),
            t2: TargetTrajectory::constant(np, zero),
            pred,
            lambda1,
            lambda2,
            r1,
            r2,
            total_privilege,
        })
    }

    /// Solve one receding-horizon step.
    ///
    /// `kappa1_horizon` holds the driver's privilege over the next `Np`
    /// steps; the system's is the complement to `A`. The dynamic factors
    /// are scheduled with privilege (`lambda_i(k) = lambda_i *
    /// kappa_i(k)/A`) so a player with no privilege exerts no tracking
    /// pressure on either output.
    pub fn step(
        &self,
        x: &DVector<T>,
        kappa1_horizon: &[T],
        d: &DVector<T>,
    ) -> Result<NashSolution<T>, GameError> {
        if kappa1_horizon.len() != self.pred.np {
            return Err(GameError::DimensionMismatch(format!(
                "privilege horizon has {} entries, expected {}",
                kappa1_horizon.len(),
                self.pred.np
            )));
        }
        let a = self.total_privilege;
        let kappa2: Vec<T> = kappa1_horizon.iter().map(|k| a - *k).collect();
        let lam1: Vec<T> = kappa1_horizon.iter().map(|k| self.lambda1 * *k / a).collect();
        let lam2: Vec<T> = kappa2.iter().map(|k| self.lambda2 * *k / a).collect();
        let weights = build_confidence_scheduled(
            kappa1_horizon,
            &kappa2,
            &lam1,
            &lam2,
            self.r1,
            self.r2,
            self.pred.nu,
            self.pred.input_dim,
        )?;
        nash_solve(&self.pred, &weights, &self.t1, &self.t2, x, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{discretize, lateral_continuous, longitudinal_continuous, VehicleParams};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_model(a: f64, b: f64) -> DiscreteJointModel<f64> {
        DiscreteJointModel {
            a: DMatrix::from_element(1, 1, a),
            b1: DMatrix::from_element(1, 1, b),
            b2: DMatrix::from_element(1, 1, b),
            bw: DMatrix::zeros(1, 1),
            c: DMatrix::from_element(1, 1, 1.0),
            step_time: 1.0,
        }
    }

    fn random_model(rng: &mut ChaCha8Rng, n: usize) -> DiscreteJointModel<f64> {
        let mut gen = |r: usize, c: usize| {
            DMatrix::from_fn(r, c, |_, _| rng.gen_range(-0.9..0.9))
        };
        DiscreteJointModel {
            a: gen(n, n),
            b1: gen(n, 1),
            b2: gen(n, 1),
            bw: gen(n, 1),
            c: gen(2, n),
            step_time: 1.0,
        }
    }

    #[test]
    fn scalar_theta_accumulates_held_input() {
        let m = scalar_model(1.0, 1.0);
        let p = build_prediction(&m, 2, 1).unwrap();
        assert_relative_eq!(p.psi[(0, 0)], 1.0);
        assert_relative_eq!(p.psi[(1, 0)], 1.0);
        assert_relative_eq!(p.theta1[(0, 0)], 1.0);
        assert_relative_eq!(p.theta1[(1, 0)], 2.0);
    }

    #[test]
    fn zero_dynamics_kill_free_response_beyond_first_power() {
        let m = scalar_model(0.0, 1.0);
        let p = build_prediction(&m, 3, 3).unwrap();
        assert!(p.psi.amax() == 0.0);
    }

    #[test]
    fn prediction_matches_rollout_with_held_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = random_model(&mut rng, 3);
            let (np, nu) = (6, 3);
            let p = build_prediction(&m, np, nu).unwrap();
            let x0 = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let u1: Vec<f64> = (0..nu).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u2: Vec<f64> = (0..nu).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..nu).map(|_| rng.gen_range(-1.0..1.0)).collect();

            let mut x = x0.clone();
            let mut z = Vec::new();
            for k in 0..np {
                let idx = k.min(nu - 1);
                x = m
                    .step(
                        &x,
                        &DVector::from_element(1, u1[idx]),
                        &DVector::from_element(1, u2[idx]),
                        &DVector::from_element(1, w[idx]),
                    )
                    .unwrap();
                let out = m.output(&x);
                z.extend(out.iter().copied());
            }

            let stacked = &p.psi * &x0
                + &p.theta1 * DVector::from_vec(u1.clone())
                + &p.theta2 * DVector::from_vec(u2.clone())
                + &p.xi * DVector::from_vec(w.clone());
            for (a, b) in z.iter().zip(stacked.iter()) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn rejects_bad_horizons() {
        let m = scalar_model(1.0, 1.0);
        assert!(matches!(
            build_prediction(&m, 2, 3),
            Err(GameError::BadHorizons { .. })
        ));
        assert!(matches!(
            build_prediction(&m, 2, 0),
            Err(GameError::BadHorizons { .. })
        ));
    }

    #[test]
    fn confidence_blocks_repeat_kappa_lambda() {
        let kappa = [0.1_f64; 10];
        let w = build_confidence(&kappa, &[0.0; 10], 2.0, 2.0, 1.0, 1.0, 10, 1).unwrap();
        assert_eq!(w.q1.len(), 20);
        for j in 0..10 {
            assert_relative_eq!(w.q1[2 * j], 0.1);
            assert_relative_eq!(w.q1[2 * j + 1], 2.0);
        }
        assert_eq!(w.r1, DVector::from_element(10, 1.0));
    }

    #[test]
    fn confidence_rejects_bad_weights() {
        assert_eq!(
            build_confidence(&[-0.1_f64], &[0.0], 1.0, 1.0, 1.0, 1.0, 1, 1).unwrap_err(),
            GameError::NegativeWeight
        );
        assert_eq!(
            build_confidence(&[0.1_f64], &[0.0], 1.0, 1.0, 0.0, 1.0, 1, 1).unwrap_err(),
            GameError::NonPositivePenalty
        );
    }

    #[test]
    fn target_shift_register_semantics() {
        let mut t = TargetTrajectory::constant(3, DVector::from_vec(vec![1.0_f64]));
        t.push(DVector::from_vec(vec![4.0])).unwrap();
        assert_eq!(t.stacked(), DVector::from_vec(vec![1.0, 1.0, 4.0]));
        for v in [5.0, 6.0, 7.0] {
            t.push(DVector::from_vec(vec![v])).unwrap();
        }
        assert_eq!(t.stacked(), DVector::from_vec(vec![5.0, 6.0, 7.0]));
        assert!(t.push(DVector::zeros(2)).is_err());
    }

    #[test]
    fn scalar_gain_is_q_over_q_plus_r() {
        let theta = DMatrix::from_element(1, 1, 1.0_f64);
        let f = response_gain(
            &theta,
            &DVector::from_vec(vec![3.0]),
            &DVector::from_vec(vec![2.0]),
        )
        .unwrap();
        assert_relative_eq!(f[(0, 0)], 0.6, epsilon = 1e-12);
    }

    #[test]
    fn zero_q_gives_zero_gain() {
        let theta = DMatrix::from_element(2, 1, 1.0_f64);
        let f = response_gain(
            &theta,
            &DVector::zeros(2),
            &DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        assert!(f.amax() < 1e-12);
    }

    #[test]
    fn stable_and_direct_gains_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let rows = rng.gen_range(2..8);
            let cols = rng.gen_range(1..=rows);
            let theta =
                DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-2.0..2.0_f64));
            let q = DVector::from_fn(rows, |_, _| rng.gen_range(0.1..5.0));
            let r = DVector::from_fn(cols, |_, _| rng.gen_range(0.1..5.0));
            let a = response_gain(&theta, &q, &r).unwrap();
            let b = response_gain_direct(&theta, &q, &r).unwrap();
            let scale = b.amax().max(1.0);
            assert!((a - b).amax() / scale < 1e-8);
        }
    }

    fn one_step_scalar_game() -> (PredictionMatrices<f64>, ConfidenceWeights<f64>) {
        let m = scalar_model(1.0, 1.0);
        let mut pred = build_prediction(&m, 1, 1).unwrap();
        pred.output_dim = 1; // scalar output
        let w = ConfidenceWeights::from_diagonals(
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        (pred, w)
    }

    #[test]
    fn scalar_nash_is_one_third() {
        let (pred, w) = one_step_scalar_game();
        let t = TargetTrajectory::constant(1, DVector::from_vec(vec![1.0]));
        let sol = nash_solve(
            &pred,
            &w,
            &t,
            &t,
            &DVector::zeros(1),
            &DVector::zeros(1),
        )
        .unwrap();
        assert!(sol.existence);
        assert_relative_eq!(sol.u1[0], 1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(sol.u2[0], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn unactuated_opponent_reduces_to_single_player_mpc() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = random_model(&mut rng, 3);
        m.b2 = DMatrix::zeros(3, 1);
        let pred = build_prediction(&m, 4, 2).unwrap();
        let q = DVector::from_fn(8, |_, _| rng.gen_range(0.1..2.0));
        let r = DVector::from_element(2, 1.0);
        let w = ConfidenceWeights::from_diagonals(q.clone(), q.clone(), r.clone(), r.clone())
            .unwrap();
        let t1 = TargetTrajectory::constant(4, DVector::from_vec(vec![1.0, -0.5]));
        let x = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let d = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let sol = nash_solve(&pred, &w, &t1, &t1, &x, &d).unwrap();
        assert!(sol.existence);

        let f1 = response_gain(&pred.theta1, &q, &r).unwrap();
        let expect = f1 * (t1.stacked() - &pred.psi * &x - &pred.xi * &d);
        assert!((sol.u1 - expect).amax() < 1e-9);
    }

    #[test]
    fn identical_players_share_the_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = {
            let mut m = random_model(&mut rng, 3);
            m.b2 = m.b1.clone();
            m
        };
        let pred = build_prediction(&m, 3, 2).unwrap();
        let q = DVector::from_element(6, 1.0);
        let r = DVector::from_element(2, 1.0);
        let w = ConfidenceWeights::from_diagonals(q.clone(), q, r.clone(), r).unwrap();
        let t = TargetTrajectory::constant(3, DVector::from_vec(vec![0.7, 0.2]));
        let x = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let sol = nash_solve(&pred, &w, &t, &t, &x, &DVector::zeros(2)).unwrap();
        assert!((sol.u1.clone() - sol.u2.clone()).amax() < 1e-10);
    }

    #[test]
    fn closed_form_matches_iterated_best_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let m = random_model(&mut rng, 2);
            let pred = build_prediction(&m, 4, 2).unwrap();
            let q1 = DVector::from_fn(8, |_, _| rng.gen_range(0.1..2.0));
            let q2 = DVector::from_fn(8, |_, _| rng.gen_range(0.1..2.0));
            let r = DVector::from_element(2, 1.0);
            let w =
                ConfidenceWeights::from_diagonals(q1.clone(), q2.clone(), r.clone(), r.clone())
                    .unwrap();
            let t1 = TargetTrajectory::constant(4, DVector::from_vec(vec![1.0, 0.0]));
            let t2 = TargetTrajectory::constant(4, DVector::from_vec(vec![-1.0, 0.5]));
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let d = DVector::from_fn(2, |_, _| rng.gen_range(-0.5..0.5));
            let sol = nash_solve(&pred, &w, &t1, &t2, &x, &d).unwrap();
            if !sol.existence {
                continue;
            }
            let f1 = response_gain(&pred.theta1, &q1, &r).unwrap();
            let f2 = response_gain(&pred.theta2, &q2, &r).unwrap();
            let free = &pred.psi * &x + &pred.xi * &d;
            let mut u1 = DVector::zeros(2);
            let mut u2 = DVector::zeros(2);
            let mut converged = false;
            for _ in 0..20_000 {
                let n1 = &f1 * (t1.stacked() - &free - &pred.theta2 * &u2);
                let n2 = &f2 * (t2.stacked() - &free - &pred.theta1 * &n1);
                let delta = (&n1 - &u1).amax().max((&n2 - &u2).amax());
                u1 = n1;
                u2 = n2;
                if delta < 1e-12 {
                    converged = true;
                    break;
                }
            }
            if converged {
                assert!((&sol.u1 - &u1).amax() < 1e-8);
                assert!((&sol.u2 - &u2).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn controller_tracks_lane_keeping_without_opponent_pressure() {
        let params = VehicleParams::<f64>::default();
        let model = discretize(&lateral_continuous(&params, 20.0).unwrap(), 0.01).unwrap();
        let ctrl = GameController::new(&model, 10, 10, 2.0, 2.0, 1.0, 1.0, 0.1).unwrap();
        // Driver holds all privilege and wants the current lane; an
        // offset vehicle should steer back toward zero.
        let mut ctrl = ctrl;
        ctrl.t1.fill(DVector::zeros(2)).unwrap();
        ctrl.t2.fill(DVector::zeros(2)).unwrap();
        let kappa = vec![0.1; 10];
        let mut x = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        for _ in 0..600 {
            let sol = ctrl.step(&x, &kappa, &DVector::zeros(10)).unwrap();
            assert!(sol.existence);
            x = model
                .step(&x, &sol.u1_first, &sol.u2_first, &DVector::zeros(1))
                .unwrap();
        }
        assert!(x[0].abs() < 0.05, "lateral offset {} did not decay", x[0]);
    }

    #[test]
    fn controller_longitudinal_zero_privilege_player_is_passive() {
        let model = discretize(&longitudinal_continuous::<f64>(), 0.01).unwrap();
        let ctrl = GameController::new(&model, 10, 10, 100.0, 100.0, 1.0, 1.0, 0.1).unwrap();
        let kappa = vec![0.1; 10]; // system has zero privilege
        let x = DVector::from_vec(vec![20.0, 10.0]);
        let d = DVector::from_element(10, 8.0);
        let mut ctrl = ctrl;
        // Driver wants to keep current state; system wants a hard brake.
        ctrl.t1.fill(DVector::from_vec(vec![20.0, 10.0])).unwrap();
        ctrl.t2.fill(DVector::from_vec(vec![50.0, 0.0])).unwrap();
        let sol = ctrl.step(&x, &kappa, &d).unwrap();
        assert!(sol.existence);
        assert!(
            sol.u2_first[0].abs() < 1e-9,
            "system input {} should vanish with zero privilege",
            sol.u2_first[0]
        );
    }
}
