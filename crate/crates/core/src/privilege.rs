//! Driving-privilege weights and their linear handover schedules.
//!
//! The driver carries weight `kappa1`, the active safety system carries
//! `kappa2 = total - kappa1`. Takeovers ramp `kappa1` linearly to zero
//! with a duration keyed to the risk level; returns ramp it back to
//! `total` with a duration keyed to the driver's takeover intent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::risk::RiskLevel;
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrivilegeError {
    #[error("no takeover schedule is planned at risk level 0")]
    NoRiskNoTakeover,
    #[error("schedule weights must lie within [0, total]")]
    WeightOutOfRange,
}

/// Linear weight ramp between two step indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSchedule<T> {
    pub start_weight: T,
    pub end_weight: T,
    pub start_step: i64,
    pub end_step: i64,
    pub total: T,
}

impl<T: Real> WeightSchedule<T> {
    pub fn new(
        start_weight: T,
        end_weight: T,
        start_step: i64,
        steps: i64,
        total: T,
    ) -> Result<Self, PrivilegeError> {
        let zero = T::zero();
        if start_weight < zero || start_weight > total || end_weight < zero || end_weight > total {
            return Err(PrivilegeError::WeightOutOfRange);
        }
        Ok(Self {
            start_weight,
            end_weight,
            start_step,
            end_step: start_step + steps.max(0),
            total,
        })
    }

    /// Driver weight at step `k`: constant outside the ramp, linear inside.
    pub fn weight_at(&self, k: i64) -> T {
        if k < self.start_step {
            return self.start_weight;
        }
        if k >= self.end_step {
            return self.end_weight;
        }
        let span = T::of((self.end_step - self.start_step) as f64);
        let progress = T::of((k - self.start_step) as f64) / span;
        let w = self.start_weight + (self.end_weight - self.start_weight) * progress;
        num_traits::clamp(w, T::zero(), self.total)
    }

    pub fn len_steps(&self) -> i64 {
        self.end_step - self.start_step
    }

    pub fn is_done_at(&self, k: i64) -> bool {
        k >= self.end_step
    }
}

/// Return-handover mode, keyed to the driver's takeover intent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReturnMode {
    Intent,
    NoIntent,
}

/// Handover durations (seconds) and the controller step time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandoverPolicy<T> {
    pub take_rl1: T,
    pub take_rl2: T,
    pub take_rl3: T,
    pub return_intent: T,
    pub return_no_intent: T,
    pub step_time: T,
}

impl<T: Real> Default for HandoverPolicy<T> {
    fn default() -> Self {
        Self {
            take_rl1: T::of(3.0),
            take_rl2: T::of(1.0),
            take_rl3: T::of(0.5),
            return_intent: T::of(2.0),
            return_no_intent: T::of(6.0),
            step_time: T::of(0.01),
        }
    }
}

impl<T: Real> HandoverPolicy<T> {
    pub fn takeover_duration(&self, level: RiskLevel) -> Option<T> {
        match level {
            RiskLevel::Rl0 => None,
            RiskLevel::Rl1 => Some(self.take_rl1),
            RiskLevel::Rl2 => Some(self.take_rl2),
            RiskLevel::Rl3 => Some(self.take_rl3),
        }
    }

    pub fn return_duration(&self, mode: ReturnMode) -> T {
        match mode {
            ReturnMode::Intent => self.return_intent,
            ReturnMode::NoIntent => self.return_no_intent,
        }
    }

    fn steps_for(&self, duration: T) -> i64 {
        num_traits::Float::round((duration / self.step_time).as_f64()) as i64
    }
}

/// Plan a takeover ramp from the current driver weight down to zero.
pub fn plan_takeover<T: Real>(
    current_kappa1: T,
    level: RiskLevel,
    policy: &HandoverPolicy<T>,
    now_step: i64,
    total: T,
) -> Result<WeightSchedule<T>, PrivilegeError> {
    let duration = policy
        .takeover_duration(level)
        .ok_or(PrivilegeError::NoRiskNoTakeover)?;
    WeightSchedule::new(
        current_kappa1,
        T::zero(),
        now_step,
        policy.steps_for(duration),
        total,
    )
}

/// Plan a return ramp from the current driver weight back to `total`.
pub fn plan_return<T: Real>(
    mode: ReturnMode,
    policy: &HandoverPolicy<T>,
    now_step: i64,
    current_kappa1: T,
    total: T,
) -> Result<WeightSchedule<T>, PrivilegeError> {
    WeightSchedule::new(
        current_kappa1,
        total,
        now_step,
        policy.steps_for(policy.return_duration(mode)),
        total,
    )
}

/// What the scheduler is currently doing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Phase<T> {
    /// Full driver privilege, no active schedule.
    Idle,
    /// Ramping privilege to the safety system.
    Takeover {
        level: RiskLevel,
        schedule: WeightSchedule<T>,
    },
    /// Takeover complete; safety system holds authority until danger clears.
    Holding,
    /// Ramping privilege back to the driver.
    Returning { schedule: WeightSchedule<T> },
}

/// A handover event emitted by [`PrivilegeState::step`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HandoverEvent<T> {
    TakeoverStarted {
        step: i64,
        level: RiskLevel,
        from_kappa1: T,
        planned_steps: i64,
    },
    ReturnStarted {
        step: i64,
        mode: ReturnMode,
        planned_steps: i64,
    },
}

/// Privilege weights evolved step by step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivilegeState<T> {
    pub kappa1: T,
    pub step: i64,
    pub total: T,
    pub phase: Phase<T>,
}

impl<T: Real> PrivilegeState<T> {
    /// Start with full driver privilege.
    pub fn full_driver(total: T) -> Self {
        Self {
            kappa1: total,
            step: 0,
            total,
            phase: Phase::Idle,
        }
    }

    /// System weight; always exactly `total - kappa1`.
    pub fn kappa2(&self) -> T {
        self.total - self.kappa1
    }

    /// Driver weights over the next `horizon` steps (`step+1 ..= step+horizon`),
    /// following the active schedule and holding constant otherwise.
    pub fn kappa1_horizon(&self, horizon: usize) -> Vec<T> {
        let sched = match &self.phase {
            Phase::Takeover { schedule, .. } | Phase::Returning { schedule } => Some(*schedule),
            _ => None,
        };
        (1..=horizon as i64)
            .map(|i| match &sched {
                Some(s) => s.weight_at(self.step + i),
                None => self.kappa1,
            })
            .collect()
    }

    /// Advance one step given the observed risk level and takeover intent.
    ///
    /// Escalation above the level that produced the active takeover
    /// re-plans from the current weight; the re-planned ramp never runs
    /// longer than the remaining one. De-escalation does not abort a
    /// takeover. A return starts once the danger clears (RL0) after a
    /// completed takeover, and is itself pre-empted by new risk.
    pub fn step(
        &self,
        level: RiskLevel,
        takeover_intent: Option<bool>,
        policy: &HandoverPolicy<T>,
    ) -> (Self, Option<HandoverEvent<T>>) {
        let mut next = *self;
        let mut event = None;
        let now = self.step;

        match self.phase {
            Phase::Idle => {
                if level > RiskLevel::Rl0 {
                    let schedule =
                        plan_takeover(self.kappa1, level, policy, now, self.total).expect("level > RL0");
                    event = Some(HandoverEvent::TakeoverStarted {
                        step: now,
                        level,
                        from_kappa1: self.kappa1,
                        planned_steps: schedule.len_steps(),
                    });
                    next.phase = Phase::Takeover { level, schedule };
                }
            }
            Phase::Takeover {
                level: planned_level,
                schedule,
            } => {
                if level > planned_level {
                    let remaining = (schedule.end_step - now).max(0);
                    let duration = policy.takeover_duration(level).expect("level > RL0");
                    let steps = policy.steps_for(duration).min(remaining);
                    let schedule = WeightSchedule::new(self.kappa1, T::zero(), now, steps, self.total)
                        .expect("kappa1 within range");
                    event = Some(HandoverEvent::TakeoverStarted {
                        step: now,
                        level,
                        from_kappa1: self.kappa1,
                        planned_steps: schedule.len_steps(),
                    });
                    next.phase = Phase::Takeover { level, schedule };
                }
            }
            Phase::Holding => {
                if level == RiskLevel::Rl0 {
                    let mode = if takeover_intent.unwrap_or(false) {
                        ReturnMode::Intent
                    } else {
                        ReturnMode::NoIntent
                    };
                    let schedule = plan_return(mode, policy, now, self.kappa1, self.total)
                        .expect("kappa1 within range");
                    event = Some(HandoverEvent::ReturnStarted {
                        step: now,
                        mode,
                        planned_steps: schedule.len_steps(),
                    });
                    next.phase = Phase::Returning { schedule };
                }
            }
            Phase::Returning { .. } => {
                if level > RiskLevel::Rl0 {
                    let schedule = plan_takeover(self.kappa1, level, policy, now, self.total)
                        .expect("level > RL0");
                    event = Some(HandoverEvent::TakeoverStarted {
                        step: now,
                        level,
                        from_kappa1: self.kappa1,
                        planned_steps: schedule.len_steps(),
                    });
                    next.phase = Phase::Takeover { level, schedule };
                }
            }
        }

        next.step = now + 1;
        match next.phase {
            Phase::Takeover { schedule, .. } => {
                next.kappa1 = schedule.weight_at(next.step);
                if schedule.is_done_at(next.step) {
                    next.phase = Phase::Holding;
                }
            }
            Phase::Returning { schedule } => {
                next.kappa1 = schedule.weight_at(next.step);
                if schedule.is_done_at(next.step) {
                    next.phase = Phase::Idle;
                }
            }
            Phase::Idle | Phase::Holding => {}
        }
        (next, event)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn policy() -> HandoverPolicy<f64> {
        HandoverPolicy::default()
    }

    #[test]
    fn weight_at_clamps_and_interpolates() {
        let s = WeightSchedule::new(0.1, 0.0, 0, 100, 0.1).unwrap();
        assert_relative_eq!(s.weight_at(-5), 0.1);
        assert_relative_eq!(s.weight_at(50), 0.05);
        assert_relative_eq!(s.weight_at(100), 0.0);
        assert_relative_eq!(s.weight_at(200), 0.0);
    }

    #[test]
    fn degenerate_schedule_returns_end_weight() {
        let s = WeightSchedule::new(0.1, 0.0, 10, 0, 0.1).unwrap();
        assert_relative_eq!(s.weight_at(10), 0.0);
        assert_relative_eq!(s.weight_at(9), 0.1);
    }

    #[test]
    fn takeover_step_counts_per_level() {
        let p = policy();
        let s = plan_takeover(0.1, RiskLevel::Rl2, &p, 0, 0.1).unwrap();
        assert_eq!(s.len_steps(), 100);
        let s = plan_takeover(0.1, RiskLevel::Rl1, &p, 0, 0.1).unwrap();
        assert_eq!(s.len_steps(), 300);
        let s = plan_takeover(0.05, RiskLevel::Rl3, &p, 7, 0.1).unwrap();
        assert_eq!(s.len_steps(), 50);
        assert_relative_eq!(s.start_weight, 0.05);
        assert_eq!(
            plan_takeover(0.1, RiskLevel::Rl0, &p, 0, 0.1),
            Err(PrivilegeError::NoRiskNoTakeover)
        );
    }

    #[test]
    fn return_step_counts_per_mode() {
        let p = policy();
        let s = plan_return(ReturnMode::Intent, &p, 0, 0.0, 0.1).unwrap();
        assert_eq!(s.len_steps(), 200);
        let s = plan_return(ReturnMode::NoIntent, &p, 0, 0.0, 0.1).unwrap();
        assert_eq!(s.len_steps(), 600);
        // Already with the driver: constant schedule.
        let s = plan_return(ReturnMode::Intent, &p, 0, 0.1, 0.1).unwrap();
        assert_relative_eq!(s.weight_at(100), 0.1);
    }

    #[test]
    fn idle_at_no_risk_keeps_full_privilege() {
        let p = policy();
        let state = PrivilegeState::full_driver(0.1);
        let (next, ev) = state.step(RiskLevel::Rl0, None, &p);
        assert!(ev.is_none());
        assert_relative_eq!(next.kappa1, 0.1);
        assert_eq!(next.phase, Phase::Idle);
    }

    #[test]
    fn takeover_ramps_down_and_holds() {
        let p = policy();
        let mut state = PrivilegeState::full_driver(0.1);
        let (s1, ev) = state.step(RiskLevel::Rl2, None, &p);
        assert!(matches!(
            ev,
            Some(HandoverEvent::TakeoverStarted {
                level: RiskLevel::Rl2,
                planned_steps: 100,
                ..
            })
        ));
        assert!(s1.kappa1 < 0.1);
        state = s1;
        for _ in 0..200 {
            state = state.step(RiskLevel::Rl2, None, &p).0;
        }
        assert_relative_eq!(state.kappa1, 0.0);
        assert_eq!(state.phase, Phase::Holding);
    }

    #[test]
    fn conservation_and_bounds_through_full_cycle() {
        let p = policy();
        let mut state = PrivilegeState::full_driver(0.1);
        let mut level = RiskLevel::Rl1;
        for k in 0..1500 {
            if k == 200 {
                level = RiskLevel::Rl3; // escalate mid-ramp
            }
            if k == 400 {
                level = RiskLevel::Rl0; // danger clears
            }
            state = state.step(level, Some(true), &p).0;
            assert_eq!(state.kappa1 + state.kappa2(), 0.1);
            assert!(state.kappa1 >= 0.0 && state.kappa1 <= 0.1);
        }
        // Return with intent completed long ago.
        assert_eq!(state.phase, Phase::Idle);
        assert_relative_eq!(state.kappa1, 0.1);
    }

    #[test]
    fn escalation_never_lengthens_remaining_time() {
        let p = policy();
        let mut state = PrivilegeState::full_driver(0.1);
        // Start a 3s (300-step) RL1 takeover.
        state = state.step(RiskLevel::Rl1, None, &p).0;
        for _ in 0..280 {
            state = state.step(RiskLevel::Rl1, None, &p).0;
        }
        // 19 steps remain; escalating to RL2 (100 steps nominal) must clamp.
        let (state, ev) = state.step(RiskLevel::Rl2, None, &p);
        match ev {
            Some(HandoverEvent::TakeoverStarted { planned_steps, .. }) => {
                assert!(planned_steps <= 19);
            }
            other => panic!("expected takeover event, got {other:?}"),
        }
        match state.phase {
            Phase::Takeover { schedule, .. } => {
                assert!(schedule.end_step <= 301);
            }
            other => panic!("expected takeover phase, got {other:?}"),
        }
    }

    #[test]
    fn ramp_is_linear() {
        let s = WeightSchedule::new(0.1, 0.0, 0, 300, 0.1).unwrap();
        let expected: f64 = -0.1 / 300.0;
        for k in 0..300 {
            let diff = s.weight_at(k + 1) - s.weight_at(k);
            assert!((diff - expected).abs() < 1e-15, "step {k}: {diff}");
        }
    }

    #[test]
    fn return_starts_only_after_clearance() {
        let p = policy();
        let mut state = PrivilegeState::full_driver(0.1);
        state = state.step(RiskLevel::Rl3, None, &p).0;
        for _ in 0..60 {
            state = state.step(RiskLevel::Rl3, None, &p).0;
        }
        assert_eq!(state.phase, Phase::Holding);
        // Still holding while risk persists.
        state = state.step(RiskLevel::Rl1, None, &p).0;
        assert_eq!(state.phase, Phase::Holding);
        let (state, ev) = state.step(RiskLevel::Rl0, Some(false), &p);
        assert!(matches!(
            ev,
            Some(HandoverEvent::ReturnStarted {
                mode: ReturnMode::NoIntent,
                planned_steps: 600,
                ..
            })
        ));
        assert!(matches!(state.phase, Phase::Returning { .. }));
    }
}
