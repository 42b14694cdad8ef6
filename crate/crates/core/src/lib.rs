//! Shared-control gradual-takeover toolkit.
//!
//! Building blocks for simulating a driving-privilege handover between a
//! human driver and an active safety system: kinematic risk assessment
//! ([`risk`]), privilege scheduling ([`privilege`]), vehicle plant
//! models ([`plant`]), a two-player model-predictive steering/speed game
//! ([`game`]), closed-loop conflict scenarios ([`scenario`]), and a
//! detector evaluation kit ([`eval`]).
//!
//! Everything numerical is generic over [`scalar::Real`] (implemented
//! for `f32` and `f64`); the `*64`/`*32` aliases below pin the common
//! concrete choices.

pub mod eval;
pub mod game;
pub mod plant;
pub mod privilege;
pub mod risk;
pub mod scalar;
pub mod scenario;

pub use scalar::Real;

pub type KinematicPair64 = risk::KinematicPair<f64>;
pub type KinematicPair32 = risk::KinematicPair<f32>;
pub type RiskThresholds64 = risk::RiskThresholds<f64>;
pub type RiskThresholds32 = risk::RiskThresholds<f32>;
pub type RiskAssessment64 = risk::RiskAssessment<f64>;
pub type HandoverPolicy64 = privilege::HandoverPolicy<f64>;
pub type PrivilegeState64 = privilege::PrivilegeState<f64>;
pub type VehicleParams64 = plant::VehicleParams<f64>;
pub type DiscreteJointModel64 = plant::DiscreteJointModel<f64>;
pub type GameController64 = game::GameController<f64>;
pub type NashSolution64 = game::NashSolution<f64>;
pub type ScenarioConfig64 = scenario::ScenarioConfig<f64>;
pub type SimLog64 = scenario::SimLog<f64>;
pub type LabeledCase64 = eval::LabeledCase<f64>;
