//! Closed-form control of predecessor-following vehicle platoons.
//!
//! Each follower in the platoon runs third-order longitudinal dynamics
//! (position, velocity, acceleration with an engine time lag) and tries to
//! settle at a fixed spacing behind its predecessor by the end of a finite
//! horizon. This crate implements two families of open-loop strategies in
//! closed form, together with the machinery to certify them numerically:
//!
//! * [`lin`] — the linear-systems kernel: dynamics matrices, the matrix
//!   exponential `e^{tA}` and the controllability Gramian `Ψ(t)`, both in
//!   closed form and via adaptive quadrature.
//! * [`nash`] — the exact equilibrium strategy for the spacing game without
//!   collision avoidance, with its closed-form controls and trajectories.
//! * [`ca`] — the estimated strategies with a collision-avoidance term:
//!   a terminal variant and two time-varying variants.
//! * [`sim`] — the independent verification engine: RK4 integration of the
//!   true dynamics under any control law, cost evaluation, best-response
//!   certification, and trajectory analysis.
//! * [`scenario`] — scenario files, the built-in reference scenario, the
//!   run pipeline, and CSV/JSON emission used by the CLI.
//!
//! All numerical kernels are generic over the scalar type through the
//! [`scalar::Real`] trait (`f32` or `f64`); the concrete aliases below pin
//! the `f64` instantiations used by the scenario runner and the CLI.

pub mod ca;
pub mod error;
pub mod lin;
pub mod nash;
pub mod scalar;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` dynamics matrices.
pub type Dynamics64 = lin::Dynamics<f64>;
/// `f64` controllability Gramian.
pub type Gramian64 = lin::Gramian<f64>;
/// `f64` vehicle state triple.
pub type State64 = lin::State3<f64>;
/// `f64` follower weights and spacing parameters.
pub type FollowerParams64 = nash::FollowerParams<f64>;
/// `f64` equilibrium solution of the spacing game.
pub type NashSolution64 = nash::NashSolution<f64>;
/// `f64` collision-avoidance solution.
pub type CaSolution64 = ca::CaSolution<f64>;
/// `f64` scenario description consumed by the simulation oracle.
pub type Scenario64 = sim::Scenario<f64>;
/// `f64` time-indexed trajectory record.
pub type TrajectorySample64 = sim::TrajectorySample<f64>;
/// `f64` run summary.
pub type RunReport64 = sim::RunReport<f64>;
