//! Closed-loop scenario simulation.
//!
//! Wires the risk classifier, privilege scheduler, plant models, and the
//! two-player MPC into the lane-change and cut-in conflict scenarios,
//! producing a per-step log and a run summary.
//!
//! In the lane-change scenario the driver tracks a quintic lane-change
//! trajectory while a faster vehicle approaches from behind in the
//! destination lane; the rear conflict is mapped onto car-following
//! geometry with the rear vehicle as the closing host. In the cut-in
//! scenario a slower vehicle enters the host lane ahead at a scripted
//! lane-line crossing time and the longitudinal game brakes the host.
//! Only one of the two decoupled games is active per scenario.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{GameController, GameError};
use crate::plant::{
    discretize, lateral_continuous, longitudinal_continuous, saturate_accel, saturate_steering,
    PlantError, VehicleParams,
};
use crate::privilege::{HandoverEvent, HandoverPolicy, Phase, PrivilegeState};
use crate::risk::{
    assess, KinematicPair, ObviousRisk, PotentialRisk, RiskError, RiskLevel, RiskThresholds,
    DEFAULT_DECEL,
};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("game solver error: {0}")]
    Game(#[from] GameError),
    #[error("plant error: {0}")]
    Plant(#[from] PlantError),
    #[error("risk error: {0}")]
    Risk(#[from] RiskError),
    #[error("Nash equilibrium does not exist at step {step}")]
    NashNonExistence { step: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    LaneChange,
    CutIn,
}

fn default_lane_width<T: Real>() -> T {
    T::of(3.5)
}
fn default_maneuver_length<T: Real>() -> T {
    T::of(80.0)
}
fn default_maneuver_start<T: Real>() -> T {
    T::of(2.0)
}
fn default_r<T: Real>() -> T {
    T::one()
}
fn default_total_privilege<T: Real>() -> T {
    T::of(0.1)
}
fn default_np() -> usize {
    10
}
fn default_step_time<T: Real>() -> T {
    T::of(0.01)
}

/// One scenario run. Unspecified fields take the values used throughout
/// the simulation study (lane width 3.5 m, 80 m maneuver, horizons
/// Np = Nu = 10 at 10 ms, privilege total 0.1, unit control penalties,
/// dynamic factors 2 lateral / 100 longitudinal).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig<T: Real> {
    pub kind: ScenarioKind,
    /// Host initial speed, m/s.
    pub host_speed: T,
    /// Initial gap to the conflict vehicle, m. Positive = ahead (cut-in);
    /// negative = behind (lane-change rear traffic). Omit for a free run
    /// with no conflict vehicle.
    #[serde(default)]
    pub target_initial_gap: Option<T>,
    /// Conflict vehicle initial speed, m/s.
    #[serde(default)]
    pub target_speed: T,
    /// Conflict vehicle constant acceleration, m/s^2.
    #[serde(default)]
    pub target_accel: T,
    /// Cut-in: time at which the target crosses the lane line and risk
    /// assessment begins, s.
    #[serde(default)]
    pub cross_time: T,
    /// Cut-in: time at which the target leaves the host lane again and
    /// risk assessment stops (false-alarm conflicts). Omit for a target
    /// that stays.
    #[serde(default)]
    pub exit_time: Option<T>,
    /// Lane-change: time at which the driver starts the maneuver, s.
    #[serde(default = "default_maneuver_start")]
    pub maneuver_start: T,
    #[serde(default = "default_lane_width")]
    pub lane_width: T,
    #[serde(default = "default_maneuver_length")]
    pub maneuver_length: T,
    /// Driver signals takeover intent (affects the return ramp: 2 s with
    /// intent, 6 s without).
    #[serde(default)]
    pub takeover_intent: bool,
    /// Dynamic factors; default 2 (lateral) or 100 (longitudinal).
    #[serde(default)]
    pub lambda1: Option<T>,
    #[serde(default)]
    pub lambda2: Option<T>,
    #[serde(default = "default_r")]
    pub r1: T,
    #[serde(default = "default_r")]
    pub r2: T,
    /// Total driving privilege A.
    #[serde(default = "default_total_privilege")]
    pub total_privilege: T,
    #[serde(default = "default_np")]
    pub np: usize,
    #[serde(default = "default_np")]
    pub nu: usize,
    #[serde(default = "default_step_time")]
    pub step_time: T,
    /// Run length, s.
    pub duration: T,
    #[serde(default)]
    pub thresholds: RiskThresholds<T>,
}

impl<T: Real> ScenarioConfig<T> {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.host_speed <= T::zero() {
            return Err(ScenarioError::InvalidConfig(
                "host_speed must be positive".into(),
            ));
        }
        if self.duration <= T::zero() || self.step_time <= T::zero() {
            return Err(ScenarioError::InvalidConfig(
                "duration and step_time must be positive".into(),
            ));
        }
        if self.np < self.nu || self.nu == 0 {
            return Err(ScenarioError::InvalidConfig(
                "horizons must satisfy Np >= Nu >= 1".into(),
            ));
        }
        match (self.kind, self.target_initial_gap) {
            (ScenarioKind::LaneChange, Some(g)) if g >= T::zero() => {
                Err(ScenarioError::InvalidConfig(
                    "lane-change rear target must start behind (negative gap)".into(),
                ))
            }
            (ScenarioKind::CutIn, None) => Err(ScenarioError::InvalidConfig(
                "cut-in needs a target vehicle".into(),
            )),
            (ScenarioKind::CutIn, Some(g)) if g <= T::zero() => {
                Err(ScenarioError::InvalidConfig(
                    "cut-in target must start ahead (positive gap)".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    fn lambda1(&self) -> T {
        self.lambda1.unwrap_or_else(|| match self.kind {
            ScenarioKind::LaneChange => T::of(2.0),
            ScenarioKind::CutIn => T::of(100.0),
        })
    }

    fn lambda2(&self) -> T {
        self.lambda2.unwrap_or_else(|| match self.kind {
            ScenarioKind::LaneChange => T::of(2.0),
            ScenarioKind::CutIn => T::of(100.0),
        })
    }

    fn steps(&self) -> usize {
        num_traits::Float::round(self.duration / self.step_time).as_f64() as usize
    }

    /// Lane-change conflict: host 20 m/s, rear vehicle 30 m behind at
    /// 23 m/s; escalates to RL2 shortly after the maneuver begins.
    pub fn lane_change_case1() -> Self {
        Self {
            kind: ScenarioKind::LaneChange,
            host_speed: T::of(20.0),
            target_initial_gap: Some(T::of(-30.0)),
            target_speed: T::of(23.0),
            target_accel: T::zero(),
            cross_time: T::zero(),
            exit_time: None,
            maneuver_start: default_maneuver_start(),
            lane_width: default_lane_width(),
            maneuver_length: default_maneuver_length(),
            takeover_intent: false,
            lambda1: None,
            lambda2: None,
            r1: T::one(),
            r2: T::one(),
            total_privilege: default_total_privilege(),
            np: 10,
            nu: 10,
            step_time: default_step_time(),
            duration: T::of(17.0),
            thresholds: RiskThresholds::default(),
        }
    }

    /// Lane-change conflict with the rear vehicle 40 m behind and gently
    /// accelerating; the driver signals intent, so the return ramp is
    /// the short one.
    pub fn lane_change_case2() -> Self {
        Self {
            target_initial_gap: Some(T::of(-40.0)),
            target_accel: T::of(0.15),
            takeover_intent: true,
            duration: T::of(13.0),
            ..Self::lane_change_case1()
        }
    }

    /// Cut-in: host 8 m/s, target cuts in 10 m ahead at 5 m/s, crossing
    /// the lane line at 0.5 s; triggers RL1.
    pub fn cut_in_case1() -> Self {
        Self {
            kind: ScenarioKind::CutIn,
            host_speed: T::of(8.0),
            target_initial_gap: Some(T::of(10.0)),
            target_speed: T::of(5.0),
            target_accel: T::zero(),
            cross_time: T::of(0.5),
            exit_time: None,
            maneuver_start: default_maneuver_start(),
            lane_width: default_lane_width(),
            maneuver_length: default_maneuver_length(),
            takeover_intent: false,
            lambda1: None,
            lambda2: None,
            r1: T::one(),
            r2: T::one(),
            total_privilege: default_total_privilege(),
            np: 10,
            nu: 10,
            step_time: default_step_time(),
            duration: T::of(10.0),
            thresholds: RiskThresholds::default(),
        }
    }

    /// Cut-in: host 12 m/s, target 10 m ahead at 10 m/s, crossing at
    /// 0.6 s; triggers RL2.
    pub fn cut_in_case2() -> Self {
        Self {
            host_speed: T::of(12.0),
            target_initial_gap: Some(T::of(10.0)),
            target_speed: T::of(10.0),
            cross_time: T::of(0.6),
            duration: T::of(10.0),
            ..Self::cut_in_case1()
        }
    }

    /// Aggressive cut-in: host 15 m/s, target 14 m ahead at 5 m/s,
    /// crossing almost immediately; triggers RL3 with the fast ramp.
    pub fn cut_in_case3() -> Self {
        Self {
            host_speed: T::of(15.0),
            target_initial_gap: Some(T::of(14.0)),
            target_speed: T::of(5.0),
            cross_time: T::of(0.2),
            takeover_intent: true,
            duration: T::of(10.0),
            ..Self::cut_in_case1()
        }
    }

    /// False alarm: the cut-in vehicle leaves the host lane again before
    /// the risk escalates, so the RL1 takeover ramp runs to completion
    /// and privilege returns on the long no-intent schedule.
    pub fn cut_in_false_alarm() -> Self {
        Self {
            exit_time: Some(T::of(0.9)),
            duration: T::of(11.0),
            ..Self::cut_in_case1()
        }
    }
}

/// One logged simulation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimRow<T> {
    pub time: T,
    pub d_y: T,
    pub v_y: T,
    pub psi: T,
    pub omega: T,
    pub d_x: T,
    pub v_x: T,
    pub kappa1: T,
    pub kappa2: T,
    pub rl: u8,
    pub or_lvl: u8,
    pub pr_lvl: u8,
    pub ttc: T,
    pub tm: T,
    pub u_d: T,
    pub u_a: T,
    pub t1_0: T,
    pub t2_0: T,
}

/// A handover event with its wall-clock time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedEvent<T: Real> {
    pub time: T,
    pub event: HandoverEvent<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog<T: Real> {
    pub rows: Vec<SimRow<T>>,
    pub events: Vec<TimedEvent<T>>,
}

/// Aggregates reported alongside the CSV log.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary<T: Real> {
    pub steps: usize,
    pub first_takeover_time: Option<T>,
    pub min_gap: Option<T>,
    pub peak_decel: T,
    pub final_d_y: T,
    pub final_speed_error: Option<T>,
    pub handover_count: usize,
}

pub const SIM_CSV_HEADER: &str = "time, d_y, v_y, psi, omega, d_x, v_x, kappa1, kappa2, rl, \
or_lvl, pr_lvl, ttc, tm, u_d, u_a, t1_0, t2_0";

impl<T: Real> SimLog<T> {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<(), ScenarioError> {
        writeln!(w, "{SIM_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.time,
                r.d_y,
                r.v_y,
                r.psi,
                r.omega,
                r.d_x,
                r.v_x,
                r.kappa1,
                r.kappa2,
                r.rl,
                r.or_lvl,
                r.pr_lvl,
                r.ttc,
                r.tm,
                r.u_d,
                r.u_a,
                r.t1_0,
                r.t2_0
            )?;
        }
        Ok(())
    }

    pub fn summary(&self, kind: ScenarioKind, target_speed_final: Option<T>) -> RunSummary<T> {
        let first_takeover_time = self
            .events
            .iter()
            .find(|e| matches!(e.event, HandoverEvent::TakeoverStarted { .. }))
            .map(|e| e.time);
        let handover_count = self
            .events
            .iter()
            .filter(|e| matches!(e.event, HandoverEvent::TakeoverStarted { .. }))
            .count();
        let mut min_gap: Option<T> = None;
        let mut peak_decel = T::zero();
        for (i, r) in self.rows.iter().enumerate() {
            if matches!(kind, ScenarioKind::CutIn) {
                min_gap = Some(match min_gap {
                    Some(g) => num_traits::Float::min(g, r.d_x),
                    None => r.d_x,
                });
                if i + 1 < self.rows.len() {
                    let dv = self.rows[i + 1].v_x - r.v_x;
                    let dt = self.rows[i + 1].time - r.time;
                    if dv < T::zero() {
                        peak_decel = num_traits::Float::max(peak_decel, -dv / dt);
                    }
                }
            }
        }
        let last = self.rows.last();
        RunSummary {
            steps: self.rows.len(),
            first_takeover_time,
            min_gap,
            peak_decel,
            final_d_y: last.map(|r| r.d_y).unwrap_or_else(T::zero),
            final_speed_error: match (last, target_speed_final) {
                (Some(r), Some(vt)) => Some(num_traits::Float::abs(r.v_x - vt)),
                _ => None,
            },
            handover_count,
        }
    }
}

impl<T: Real> std::fmt::Display for RunSummary<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "steps: {}", self.steps)?;
        match self.first_takeover_time {
            Some(t) => writeln!(f, "handover start: {t} s")?,
            None => writeln!(f, "handover start: none")?,
        }
        writeln!(f, "handover count: {}", self.handover_count)?;
        if let Some(g) = self.min_gap {
            writeln!(f, "min gap: {g} m")?;
        }
        writeln!(f, "peak decel: {} m/s^2", self.peak_decel)?;
        writeln!(f, "final d_y: {} m", self.final_d_y)?;
        if let Some(e) = self.final_speed_error {
            writeln!(f, "final speed error: {e} m/s")?;
        }
        Ok(())
    }
}

/// Quintic lane-change trajectory: zero lateral velocity and
/// acceleration at both ends. Returns (lateral offset, heading).
pub fn lane_change_profile<T: Real>(length: T, width: T, speed: T, t: T) -> (T, T) {
    let s = num_traits::clamp(speed * t / length, T::zero(), T::one());
    let s2 = s * s;
    let s3 = s2 * s;
    let ten = T::of(10.0);
    let fifteen = T::of(15.0);
    let six = T::of(6.0);
    let d_y = width * (ten * s3 - fifteen * s2 * s2 + six * s2 * s3);
    // d(d_y)/dx = d(d_y)/ds / length
    let slope = width * (T::of(30.0) * s2 - T::of(60.0) * s3 + T::of(30.0) * s2 * s2) / length;
    (d_y, num_traits::Float::atan(slope))
}

fn risk_levels_to_u8(or: ObviousRisk, pr: PotentialRisk, rl: RiskLevel) -> (u8, u8, u8) {
    (or.rank(), pr.rank(), rl.rank())
}

/// Desired following gap solving TM = pr1 bound at the given speeds.
fn safe_gap<T: Real>(bound: T, v_host: T, v_target: T, decel: T) -> T {
    let two = T::of(2.0);
    bound * v_host + v_host * v_host / (two * decel) - v_target * v_target / (two * decel)
}

/// Run a configured scenario.
pub fn run<T: Real>(config: &ScenarioConfig<T>) -> Result<SimLog<T>, ScenarioError> {
    config.validate()?;
    match config.kind {
        ScenarioKind::LaneChange => run_lane_change(config),
        ScenarioKind::CutIn => run_cut_in(config),
    }
}

/// Lane-change scenario: lateral game active, longitudinal speed held.
pub fn run_lane_change<T: Real>(config: &ScenarioConfig<T>) -> Result<SimLog<T>, ScenarioError> {
    let params = VehicleParams::<T>::default();
    let model = discretize(
        &lateral_continuous(&params, config.host_speed)?,
        config.step_time,
    )?;
    let mut ctrl = GameController::new(
        &model,
        config.np,
        config.nu,
        config.lambda1(),
        config.lambda2(),
        config.r1,
        config.r2,
        config.total_privilege,
    )?;
    let policy = HandoverPolicy {
        step_time: config.step_time,
        ..HandoverPolicy::default()
    };

    let mut privilege = PrivilegeState::full_driver(config.total_privilege);
    let mut x = DVector::<T>::zeros(4);
    let d_stack = DVector::<T>::zeros(config.nu * model.disturbance_dim());
    let steps = config.steps();
    let mut rows = Vec::with_capacity(steps);
    let mut events = Vec::new();
    // Once the system has taken over, the driver abandons the maneuver
    // and keeps the lane for the rest of the run.
    let mut driver_aborted = false;

    for k in 0..steps {
        let t = T::of_usize(k) * config.step_time;

        // Rear vehicle kinematics (destination lane).
        let half = T::of(0.5);
        let rear = config.target_initial_gap.map(|g0| {
            let gap = -g0 - (config.target_speed - config.host_speed) * t
                - half * config.target_accel * t * t;
            let speed = config.target_speed + config.target_accel * t;
            (gap, speed)
        });

        // Rear conflict mapped onto car-following geometry: the rear
        // vehicle is the closing host. Cleared once it has passed.
        let (assessment, gap_now) = match rear {
            Some((gap, speed)) if gap > T::zero() => {
                let pair = KinematicPair::with_default_decel(gap, speed, config.host_speed)?;
                (Some(assess(&pair, &config.thresholds)?), Some(gap))
            }
            Some((gap, _)) => (None, Some(gap)),
            None => (None, None),
        };
        let rl = assessment.as_ref().map(|a| a.level).unwrap_or(RiskLevel::Rl0);

        let (next_privilege, event) =
            privilege.step(rl, Some(config.takeover_intent), &policy);
        if let Some(ev) = event {
            events.push(TimedEvent {
                time: t,
                event: ev.clone(),
            });
            if matches!(ev, HandoverEvent::TakeoverStarted { .. }) {
                driver_aborted = true;
            }
        }

        // Driver target: the quintic maneuver until aborted, then lane
        // keeping. System target: always lane keeping.
        if driver_aborted {
            ctrl.t1.fill(DVector::zeros(2))?;
        } else {
            for j in 1..=config.np {
                let tj = t + T::of_usize(j) * config.step_time
                    - config.maneuver_start;
                let (dy, psi) = if tj > T::zero() {
                    lane_change_profile(
                        config.maneuver_length,
                        config.lane_width,
                        config.host_speed,
                        tj,
                    )
                } else {
                    (T::zero(), T::zero())
                };
                ctrl.t1.push(DVector::from_vec(vec![dy, psi]))?;
            }
        }
        ctrl.t2.fill(DVector::zeros(2))?;

        let kappa_h = privilege.kappa1_horizon(config.np);
        let sol = ctrl.step(&x, &kappa_h, &d_stack)?;
        if !sol.existence {
            return Err(ScenarioError::NashNonExistence { step: k });
        }
        let u_d = saturate_steering(sol.u1_first[0]);
        let u_a = saturate_steering(sol.u2_first[0]);
        let u_total = saturate_steering(u_d + u_a);

        let (or8, pr8, rl8) = assessment
            .as_ref()
            .map(|a| risk_levels_to_u8(a.obvious, a.potential, a.level))
            .unwrap_or((0, 0, 0));
        rows.push(SimRow {
            time: t,
            d_y: x[0],
            v_y: x[1],
            psi: x[2],
            omega: x[3],
            d_x: gap_now.unwrap_or_else(|| <T as num_traits::Float>::infinity()),
            v_x: config.host_speed,
            kappa1: privilege.kappa1,
            kappa2: privilege.kappa2(),
            rl: rl8,
            or_lvl: or8,
            pr_lvl: pr8,
            ttc: assessment
                .as_ref()
                .map(|a| a.ttc)
                .unwrap_or_else(|| <T as num_traits::Float>::infinity()),
            tm: assessment
                .as_ref()
                .map(|a| a.tm)
                .unwrap_or_else(|| <T as num_traits::Float>::infinity()),
            u_d,
            u_a,
            t1_0: ctrl.t1.stacked()[0],
            t2_0: T::zero(),
        });

        x = model.step(
            &x,
            &DVector::from_vec(vec![u_total]),
            &DVector::zeros(1),
            &DVector::zeros(1),
        )?;
        privilege = next_privilege;
    }

    Ok(SimLog { rows, events })
}

/// Cut-in scenario: longitudinal game active, lateral motion ignored.
pub fn run_cut_in<T: Real>(config: &ScenarioConfig<T>) -> Result<SimLog<T>, ScenarioError> {
    let model = discretize(&longitudinal_continuous::<T>(), config.step_time)?;
    let mut ctrl = GameController::new(
        &model,
        config.np,
        config.nu,
        config.lambda1(),
        config.lambda2(),
        config.r1,
        config.r2,
        config.total_privilege,
    )?;
    let policy = HandoverPolicy {
        step_time: config.step_time,
        ..HandoverPolicy::default()
    };

    let mut privilege = PrivilegeState::full_driver(config.total_privilege);
    let gap0 = config.target_initial_gap.expect("validated");
    let mut x = DVector::from_vec(vec![gap0, config.host_speed]);
    let steps = config.steps();
    let mut rows = Vec::with_capacity(steps);
    let mut events = Vec::new();
    let decel = T::of(DEFAULT_DECEL);
    // After the first completed takeover the driver accepts the slower
    // vehicle and keeps its speed instead of the initial one.
    let mut driver_yields = false;

    for k in 0..steps {
        let t = T::of_usize(k) * config.step_time;
        let target_speed = config.target_speed + config.target_accel * t;

        let in_lane = t >= config.cross_time
            && config.exit_time.map_or(true, |e| t < e);
        let assessment = if in_lane && x[0] > T::zero() {
            let pair = KinematicPair::with_default_decel(x[0], x[1], target_speed)?;
            Some(assess(&pair, &config.thresholds)?)
        } else {
            None
        };
        let rl = assessment.as_ref().map(|a| a.level).unwrap_or(RiskLevel::Rl0);

        let (next_privilege, event) =
            privilege.step(rl, Some(config.takeover_intent), &policy);
        if let Some(ev) = event {
            events.push(TimedEvent {
                time: t,
                event: ev.clone(),
            });
        }
        if matches!(next_privilege.phase, Phase::Holding) {
            driver_yields = true;
        }

        // Driver: distance-indifferent speed keeping. System: follow at
        // the gap that sits exactly on the no-risk TM boundary.
        let driver_speed = if driver_yields {
            target_speed
        } else {
            config.host_speed
        };
        ctrl.t1.fill(DVector::from_vec(vec![x[0], driver_speed]))?;
        let desired_gap = safe_gap(config.thresholds.tm_bounds.pr1, x[1], target_speed, decel);
        ctrl.t2
            .fill(DVector::from_vec(vec![desired_gap, target_speed]))?;

        let kappa_h = privilege.kappa1_horizon(config.np);
        let d_stack = DVector::from_element(config.nu, target_speed);
        let sol = ctrl.step(&x, &kappa_h, &d_stack)?;
        if !sol.existence {
            return Err(ScenarioError::NashNonExistence { step: k });
        }
        let u_d = saturate_accel(sol.u1_first[0]);
        let u_a = saturate_accel(sol.u2_first[0]);
        let u_total = saturate_accel(u_d + u_a);

        let (or8, pr8, rl8) = assessment
            .as_ref()
            .map(|a| risk_levels_to_u8(a.obvious, a.potential, a.level))
            .unwrap_or((0, 0, 0));
        rows.push(SimRow {
            time: t,
            d_y: T::zero(),
            v_y: T::zero(),
            psi: T::zero(),
            omega: T::zero(),
            d_x: x[0],
            v_x: x[1],
            kappa1: privilege.kappa1,
            kappa2: privilege.kappa2(),
            rl: rl8,
            or_lvl: or8,
            pr_lvl: pr8,
            ttc: assessment
                .as_ref()
                .map(|a| a.ttc)
                .unwrap_or_else(|| <T as num_traits::Float>::infinity()),
            tm: assessment
                .as_ref()
                .map(|a| a.tm)
                .unwrap_or_else(|| <T as num_traits::Float>::infinity()),
            u_d,
            u_a,
            t1_0: x[0],
            t2_0: desired_gap,
        });

        x = model.step(
            &x,
            &DVector::from_vec(vec![u_total]),
            &DVector::zeros(1),
            &DVector::from_vec(vec![target_speed]),
        )?;
        // Speed cannot go negative.
        if x[1] < T::zero() {
            x[1] = T::zero();
        }
        privilege = next_privilege;
    }

    Ok(SimLog { rows, events })
}
