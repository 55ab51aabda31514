//! Exact open-loop equilibrium of the platoon spacing game.
//!
//! Follower `i` tracks its predecessor through the relative state
//! `y_i(t) = x_{i−1}(t) − x_i(t) − d̂_i` and pays
//! `ω_i‖y_i(T)‖² + ∫₀ᵀ ξ_i²`, where `ξ_i = u_{i−1} − u_i` is the control of
//! the reduced per-follower problem. The reduced problems decouple, each one
//! is linear-quadratic, and the optimal controls come out in closed form:
//!
//! ```text
//! ξ_i(t) = −ω_i Bᵀ e^{(T−t)Aᵀ} y_i(T),
//! y_i(T) = (I + ω_i Ψ(T))⁻¹ e^{TA} y_i(0),
//! u_i(t) = −Σ_{j≤i} ξ_j(t),                       u_0 ≡ 0.
//! ```
//!
//! The relative-state trajectory induced by `ξ_i` follows by variation of
//! constants:
//!
//! ```text
//! y_i(t) = e^{tA} y_i(0) − ω_i Ψ(t) e^{(T−t)Aᵀ} y_i(T),
//! ```
//!
//! and absolute vehicle states telescope down the platoon:
//! `x_i(t) = x_{i−1}(t) − y_i(t) − d̂_i` with the leader translating
//! uniformly at `v₀`.
//!
//! Everything is open loop: a follower's control depends only on its initial
//! relative state, the elapsed time, and the horizon. [`NashSolution`] caches
//! the time-independent factors (`Ψ(T)`, `e^{TA}`, and each `y_i(T)`) once at
//! construction.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lin::{Dynamics, Gramian, State3};
use crate::scalar::Real;
use crate::sim::{ControlLaw, LawKind};

/// Constant-velocity leader: `x₀(t) = (p₀ + v₀ t, v₀, 0)`.
///
/// The leader's acceleration and control are identically zero by
/// construction; the telescoped control sums require it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderMotion<T> {
    /// Initial position (m).
    pub p0: T,
    /// Constant velocity (m/s).
    pub v0: T,
}

impl<T: Real> LeaderMotion<T> {
    pub fn state_at(&self, t: T) -> State3<T> {
        State3::new(self.p0 + self.v0 * t, self.v0, T::zero())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.p0.is_finite() || !self.v0.is_finite() {
            return Err(Error::Validation("leader state must be finite".into()));
        }
        Ok(())
    }
}

/// Per-follower weights and spacing policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FollowerParams<T> {
    /// Terminal spacing-error weight ω (> 0).
    pub omega: T,
    /// Desired spacing to the predecessor d (m, > 0).
    pub d: T,
    /// Safety radius r (m, 0 < r ≤ d); spacing below r counts as a collision.
    pub r: T,
    /// Collision-term weight μ (≥ 0); zero disables the collision term.
    pub mu: T,
}

impl<T: Real> FollowerParams<T> {
    pub fn validate(&self) -> Result<()> {
        let finite =
            self.omega.is_finite() && self.d.is_finite() && self.r.is_finite() && self.mu.is_finite();
        if !finite {
            return Err(Error::Validation("follower parameters must be finite".into()));
        }
        if self.omega <= T::zero() {
            return Err(Error::Validation("omega must be positive".into()));
        }
        if self.d <= T::zero() {
            return Err(Error::Validation("desired spacing d must be positive".into()));
        }
        if self.r <= T::zero() || self.r > self.d {
            return Err(Error::Validation("safety radius r must satisfy 0 < r <= d".into()));
        }
        if self.mu < T::zero() {
            return Err(Error::Validation("collision weight mu must be non-negative".into()));
        }
        Ok(())
    }

    /// Desired-spacing offset `d̂ = (d, 0, 0)`.
    pub fn spacing_offset(&self) -> Vector3<T> {
        Vector3::new(self.d, T::zero(), T::zero())
    }

    /// Safety-radius offset `r̂ = (r, 0, 0)`.
    pub fn safety_offset(&self) -> Vector3<T> {
        Vector3::new(self.r, T::zero(), T::zero())
    }
}

/// Relative state of one follower with respect to its predecessor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeState<T> {
    /// Follower index, 0-based (follower `i` is vehicle `i + 1`).
    pub index: usize,
    /// `y = x_pred − x_self − d̂`.
    pub y: State3<T>,
}

/// Builds `y_i(0) = x_{i−1}(0) − x_i(0) − d̂_i` for every follower.
///
/// Initial positions must be strictly decreasing front-to-back; the error
/// names the first offending pair of vehicles.
pub fn relative_initial_states<T: Real>(
    leader: &LeaderMotion<T>,
    followers: &[(State3<T>, FollowerParams<T>)],
) -> Result<Vec<RelativeState<T>>> {
    if followers.is_empty() {
        return Err(Error::NoFollowers);
    }
    leader.validate()?;
    let mut states = Vec::with_capacity(followers.len());
    let mut pred = leader.state_at(T::zero());
    for (index, (x0, params)) in followers.iter().enumerate() {
        params.validate()?;
        if !x0.is_finite() {
            return Err(Error::Validation(format!(
                "initial state of vehicle {} must be finite",
                index + 1
            )));
        }
        if x0.p >= pred.p {
            return Err(Error::InitialOrdering {
                front: index,
                back: index + 1,
                front_position: pred.p.as_f64(),
                back_position: x0.p.as_f64(),
            });
        }
        let y = pred.as_vector() - x0.as_vector() - params.spacing_offset();
        states.push(RelativeState {
            index,
            y: State3::from_vector(&y),
        });
        pred = *x0;
    }
    Ok(states)
}

/// Cached per-follower data of the equilibrium law.
#[derive(Clone, Debug)]
struct FollowerLaw<T> {
    y0: Vector3<T>,
    params: FollowerParams<T>,
    /// `y_i(T) = (I + ω_i Ψ(T))⁻¹ e^{TA} y_i(0)`.
    terminal: Vector3<T>,
}

/// The equilibrium strategy of the whole platoon over one game horizon.
#[derive(Clone, Debug)]
pub struct NashSolution<T> {
    dynamics: Dynamics<T>,
    horizon: T,
    leader: LeaderMotion<T>,
    followers: Vec<FollowerLaw<T>>,
    psi_horizon: Gramian<T>,
    expm_horizon: Matrix3<T>,
}

impl<T: Real> NashSolution<T> {
    pub fn new(
        dynamics: Dynamics<T>,
        horizon: T,
        leader: LeaderMotion<T>,
        followers: &[(State3<T>, FollowerParams<T>)],
    ) -> Result<Self> {
        if !horizon.is_finite() || horizon <= T::zero() {
            return Err(Error::InvalidParameter {
                name: "horizon",
                value: horizon.as_f64(),
                reason: "game horizon must be finite and positive",
            });
        }
        let initial = relative_initial_states(&leader, followers)?;
        let psi_horizon = dynamics.gramian(horizon)?;
        let expm_horizon = dynamics.expm(horizon)?;
        let followers = initial
            .into_iter()
            .zip(followers.iter())
            .map(|(rel, (_, params))| {
                let y0 = rel.y.as_vector();
                let inverse = psi_horizon.shifted_inverse(params.omega)?;
                Ok(FollowerLaw {
                    y0,
                    params: *params,
                    terminal: inverse * (expm_horizon * y0),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dynamics,
            horizon,
            leader,
            followers,
            psi_horizon,
            expm_horizon,
        })
    }

    pub fn dynamics(&self) -> &Dynamics<T> {
        &self.dynamics
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn leader(&self) -> &LeaderMotion<T> {
        &self.leader
    }

    pub fn params(&self, i: usize) -> &FollowerParams<T> {
        &self.followers[i].params
    }

    /// `y_i(0)`, the relative state the whole open-loop law is built from.
    pub fn initial_relative_state(&self, i: usize) -> State3<T> {
        State3::from_vector(&self.followers[i].y0)
    }

    /// The closed-form terminal relative state `y_i(T)`.
    pub fn terminal_relative_state(&self, i: usize) -> State3<T> {
        State3::from_vector(&self.followers[i].terminal)
    }

    pub(crate) fn gramian_horizon(&self) -> &Gramian<T> {
        &self.psi_horizon
    }

    pub(crate) fn expm_horizon(&self) -> &Matrix3<T> {
        &self.expm_horizon
    }

    fn check_horizon(&self, t: T) -> Result<()> {
        if !t.is_finite() || t < T::zero() || t > self.horizon {
            return Err(Error::OutOfHorizon {
                t: t.as_f64(),
                horizon: self.horizon.as_f64(),
            });
        }
        Ok(())
    }

    /// Reduced control `ξ_i(t) = −ω_i Bᵀe^{(T−t)Aᵀ} y_i(T)`.
    pub fn xi(&self, i: usize, t: T) -> Result<T> {
        self.check_horizon(t)?;
        let law = &self.followers[i];
        let g = self.dynamics.impulse_response(self.horizon - t);
        Ok(-law.params.omega * g.dot(&law.terminal))
    }

    /// Vehicle control `u_i(t) = −Σ_{j≤i} ξ_j(t)`.
    pub fn control(&self, i: usize, t: T) -> Result<T> {
        Ok(self.controls_at(t)?[i])
    }

    /// All follower controls at once (prefix sums of `−ξ_j`).
    pub fn controls_at(&self, t: T) -> Result<Vec<T>> {
        self.check_horizon(t)?;
        let g = self.dynamics.impulse_response(self.horizon - t);
        let mut u = T::zero();
        Ok(self
            .followers
            .iter()
            .map(|law| {
                let xi = -(law.params.omega * g.dot(&law.terminal));
                u -= xi;
                u
            })
            .collect())
    }

    /// Closed-form relative state
    /// `y_i(t) = e^{tA} y_i(0) − ω_i Ψ(t) e^{(T−t)Aᵀ} y_i(T)`.
    pub fn relative_state(&self, i: usize, t: T) -> Result<State3<T>> {
        self.check_horizon(t)?;
        let law = &self.followers[i];
        let drift = self.dynamics.expm(t)? * law.y0;
        let psi = self.dynamics.gramian(t)?;
        let back = self.dynamics.expm(self.horizon - t)?.transpose() * law.terminal;
        let y = drift - psi.matrix() * back * law.params.omega;
        Ok(State3::from_vector(&y))
    }

    /// Absolute states of the whole platoon (leader first).
    pub fn vehicle_states(&self, t: T) -> Result<Vec<State3<T>>> {
        self.check_horizon(t)?;
        let mut states = Vec::with_capacity(self.followers.len() + 1);
        let mut x = self.leader.state_at(t).as_vector();
        states.push(State3::from_vector(&x));
        for i in 0..self.followers.len() {
            let y = self.relative_state(i, t)?.as_vector();
            x = x - y - self.followers[i].params.spacing_offset();
            states.push(State3::from_vector(&x));
        }
        Ok(states)
    }
}

impl<T: Real> ControlLaw<T> for NashSolution<T> {
    fn follower_count(&self) -> usize {
        self.followers.len()
    }

    fn kind(&self) -> LawKind {
        LawKind::Nash
    }

    fn control(&self, i: usize, t: T) -> Result<T> {
        NashSolution::control(self, i, t)
    }

    fn controls_at(&self, t: T) -> Result<Vec<T>> {
        NashSolution::controls_at(self, t)
    }
}
