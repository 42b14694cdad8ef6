//! Collision-risk assessment for car-following and cut-in situations.
//!
//! Two complementary measures are combined:
//!
//! * **Obvious risk** — based on the inverse time-to-collision (1/TTC),
//!   classified against speed-dependent percentile boundaries with fixed
//!   floors.
//! * **Potential risk** — based on the time margin (TM): the maximum
//!   reaction delay the host driver can afford if the target vehicle
//!   brakes to a stop at its friction limit.
//!
//! The combined level resolves by strict precedence RL3 > RL2 > RL1 > RL0.

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Relative speeds (and host speeds) below this are treated as zero when
/// they appear in a denominator; the corresponding time measure is +inf.
pub const SPEED_EPSILON: f64 = 1e-3;

/// Friction-limit braking deceleration used by default for both vehicles,
/// in m/s^2.
pub const DEFAULT_DECEL: f64 = 7.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RiskError {
    #[error("relative distance must be positive (vehicles overlapping)")]
    NonPositiveGap,
    #[error("braking deceleration limits must be positive")]
    NonPositiveDecel,
    #[error("vehicle speeds must be non-negative")]
    NegativeSpeed,
}

/// Host/target longitudinal gap and speeds; the input to all risk math.
///
/// `gap` is the bumper-to-bumper relative distance, `host_decel` and
/// `target_decel` are braking-deceleration magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicPair<T> {
    pub gap: T,
    pub host_speed: T,
    pub target_speed: T,
    pub host_decel: T,
    pub target_decel: T,
}

impl<T: Real> KinematicPair<T> {
    pub fn new(
        gap: T,
        host_speed: T,
        target_speed: T,
        host_decel: T,
        target_decel: T,
    ) -> Result<Self, RiskError> {
        let pair = Self {
            gap,
            host_speed,
            target_speed,
            host_decel,
            target_decel,
        };
        pair.validate()?;
        Ok(pair)
    }

    /// Pair with both decelerations at the friction-limit default.
    pub fn with_default_decel(gap: T, host_speed: T, target_speed: T) -> Result<Self, RiskError> {
        let a = T::of(DEFAULT_DECEL);
        Self::new(gap, host_speed, target_speed, a, a)
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        if self.gap <= T::zero() {
            return Err(RiskError::NonPositiveGap);
        }
        if self.host_decel <= T::zero() || self.target_decel <= T::zero() {
            return Err(RiskError::NonPositiveDecel);
        }
        if self.host_speed < T::zero() || self.target_speed < T::zero() {
            return Err(RiskError::NegativeSpeed);
        }
        Ok(())
    }
}

/// Obvious risk level, from inverse TTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObviousRisk {
    Or0,
    Or1,
    Or2,
    Or3,
}

/// Potential risk level, from the time margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PotentialRisk {
    Pr0,
    Pr1,
    Pr2,
    Pr3,
}

/// Combined risk level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RiskLevel {
    Rl0,
    Rl1,
    Rl2,
    Rl3,
}

impl ObviousRisk {
    pub fn rank(self) -> u8 {
        self as u8
    }
}

impl PotentialRisk {
    pub fn rank(self) -> u8 {
        self as u8
    }
}

impl RiskLevel {
    pub fn rank(self) -> u8 {
        self as u8
    }

    pub fn from_rank(rank: u8) -> Option<Self> {
        match rank {
            0 => Some(RiskLevel::Rl0),
            1 => Some(RiskLevel::Rl1),
            2 => Some(RiskLevel::Rl2),
            3 => Some(RiskLevel::Rl3),
            _ => None,
        }
    }
}

/// Speed-dependent 1/TTC percentile intercepts, in s^-1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IttcIntercepts<T> {
    pub c5: T,
    pub c50: T,
    pub c95: T,
}

/// Fixed minimum 1/TTC boundaries per obvious-risk level, in s^-1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IttcFloors<T> {
    pub thr1: T,
    pub thr2: T,
    pub thr3: T,
}

/// Time-margin boundaries per potential-risk level, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TmBounds<T> {
    pub pr1: T,
    pub pr2: T,
    pub pr3: T,
}

/// Classification thresholds for both risk measures.
///
/// Defaults are the empirical values fitted from naturalistic last-second
/// braking data: slope -0.0717 s^-1 per m/s, percentile intercepts
/// 0.49/1.18/1.73 s^-1 with floors 0.33/0.66/1.0 s^-1, and time-margin
/// boundaries 1.4/0.5/0.0 s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskThresholds<T> {
    pub ittc_slope: T,
    pub ittc_intercepts: IttcIntercepts<T>,
    pub ittc_floors: IttcFloors<T>,
    pub tm_bounds: TmBounds<T>,
}

impl<T: Real> Default for RiskThresholds<T> {
    fn default() -> Self {
        Self {
            ittc_slope: T::of(-0.0717),
            ittc_intercepts: IttcIntercepts {
                c5: T::of(0.49),
                c50: T::of(1.18),
                c95: T::of(1.73),
            },
            ittc_floors: IttcFloors {
                thr1: T::of(0.33),
                thr2: T::of(0.66),
                thr3: T::of(1.0),
            },
            tm_bounds: TmBounds {
                pr1: T::of(1.4),
                pr2: T::of(0.5),
                pr3: T::of(0.0),
            },
        }
    }
}

impl<T: Real> RiskThresholds<T> {
    /// Check the orderings the classifier relies on.
    pub fn validate(&self) -> Result<(), String> {
        let i = &self.ittc_intercepts;
        if !(i.c5 < i.c50 && i.c50 < i.c95) {
            return Err("1/TTC percentile intercepts must satisfy c5 < c50 < c95".into());
        }
        let f = &self.ittc_floors;
        if !(f.thr1 < f.thr2 && f.thr2 < f.thr3) {
            return Err("1/TTC floors must satisfy thr1 < thr2 < thr3".into());
        }
        let b = &self.tm_bounds;
        if !(b.pr3 < b.pr2 && b.pr2 < b.pr1) {
            return Err("time-margin bounds must satisfy pr3 < pr2 < pr1".into());
        }
        Ok(())
    }
}

/// Lane geometry for the cut-in gating rule.
///
/// `target_lateral_offset` is the signed distance of the target vehicle's
/// near edge from the ego-lane boundary line, positive while still outside
/// the ego lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneGeometry<T> {
    pub lane_width: T,
    pub target_lateral_offset: T,
}

impl<T: Real> Default for LaneGeometry<T> {
    fn default() -> Self {
        Self {
            lane_width: T::of(3.5),
            target_lateral_offset: T::zero(),
        }
    }
}

/// Full assessment output for one kinematic sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment<T> {
    pub ttc: T,
    pub inv_ttc: T,
    pub tm: T,
    pub obvious: ObviousRisk,
    pub potential: PotentialRisk,
    pub level: RiskLevel,
}

/// Time to collision: gap over closing speed, +inf when not closing.
pub fn ttc<T: Real>(pair: &KinematicPair<T>) -> Result<T, RiskError> {
    pair.validate()?;
    let closing = pair.host_speed - pair.target_speed;
    if closing > T::of(SPEED_EPSILON) {
        Ok(pair.gap / closing)
    } else {
        Ok(Float::infinity())
    }
}

/// Inverse TTC; zero when the TTC is infinite.
pub fn inverse_ttc<T: Real>(ttc: T) -> T {
    if Float::is_finite(ttc) {
        T::one() / ttc
    } else {
        T::zero()
    }
}

/// Time margin: the longest reaction delay after which the host, braking
/// at `host_decel`, still stops behind the target's stop point when the
/// target brakes to a halt at `target_decel`. May be negative; +inf for a
/// (near-)stationary host.
pub fn time_margin<T: Real>(pair: &KinematicPair<T>) -> Result<T, RiskError> {
    pair.validate()?;
    if pair.host_speed <= T::of(SPEED_EPSILON) {
        return Ok(Float::infinity());
    }
    let two = T::of(2.0);
    let target_stop = pair.target_speed * pair.target_speed / (two * pair.target_decel);
    let host_stop = pair.host_speed * pair.host_speed / (two * pair.host_decel);
    Ok((pair.gap + target_stop - host_stop) / pair.host_speed)
}

/// Obvious risk level from inverse TTC and host speed.
///
/// Boundaries are `max(slope * v + c_p, thr_i)` so that the
/// speed-dependent percentile lines never drop below the fixed floors.
pub fn obvious_risk<T: Real>(inv_ttc: T, host_speed: T, thr: &RiskThresholds<T>) -> ObviousRisk {
    let line = |c: T| thr.ittc_slope * host_speed + c;
    let b1 = Float::max(line(thr.ittc_intercepts.c5), thr.ittc_floors.thr1);
    let b2 = Float::max(line(thr.ittc_intercepts.c50), thr.ittc_floors.thr2);
    let b3 = Float::max(line(thr.ittc_intercepts.c95), thr.ittc_floors.thr3);
    if inv_ttc < b1 {
        ObviousRisk::Or0
    } else if inv_ttc < b2 {
        ObviousRisk::Or1
    } else if inv_ttc < b3 {
        ObviousRisk::Or2
    } else {
        ObviousRisk::Or3
    }
}

/// Potential risk level from the time margin.
pub fn potential_risk<T: Real>(tm: T, thr: &RiskThresholds<T>) -> PotentialRisk {
    let b = &thr.tm_bounds;
    if tm > b.pr1 {
        PotentialRisk::Pr0
    } else if tm > b.pr2 {
        PotentialRisk::Pr1
    } else if tm > b.pr3 {
        PotentialRisk::Pr2
    } else {
        PotentialRisk::Pr3
    }
}

/// Combined risk level, resolved by strict precedence RL3 > RL2 > RL1 > RL0.
pub fn combined_risk(obvious: ObviousRisk, potential: PotentialRisk) -> RiskLevel {
    use ObviousRisk as O;
    use PotentialRisk as P;
    if potential == P::Pr3 || obvious == O::Or3 {
        RiskLevel::Rl3
    } else if potential == P::Pr2 || obvious == O::Or2 {
        RiskLevel::Rl2
    } else if potential == P::Pr1 && obvious == O::Or1 {
        RiskLevel::Rl1
    } else {
        RiskLevel::Rl0
    }
}

/// Cut-in gate: risk assessment starts once the target's near edge has
/// reached or crossed the ego-lane boundary.
pub fn cut_in_gate<T: Real>(geom: &LaneGeometry<T>) -> bool {
    geom.target_lateral_offset <= T::zero()
}

/// Assess one sample: TTC, TM, and all three levels.
pub fn assess<T: Real>(
    pair: &KinematicPair<T>,
    thr: &RiskThresholds<T>,
) -> Result<RiskAssessment<T>, RiskError> {
    let ttc = ttc(pair)?;
    let inv_ttc = inverse_ttc(ttc);
    let tm = time_margin(pair)?;
    let obvious = obvious_risk(inv_ttc, pair.host_speed, thr);
    let potential = potential_risk(tm, thr);
    Ok(RiskAssessment {
        ttc,
        inv_ttc,
        tm,
        obvious,
        potential,
        level: combined_risk(obvious, potential),
    })
}
