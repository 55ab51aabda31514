//! Estimated strategies with a collision-avoidance term.
//!
//! The collision-aware cost adds a reciprocal terminal-proximity penalty to
//! the spacing game, which destroys the plain linear-quadratic structure. The
//! strategies here follow the estimation approach: the unknown collision risk
//! at the horizon is replaced by the risk of the *freely drifting* relative
//! state `e^{tA} y(0)`, measured by the scalar
//!
//! ```text
//! f(y) = 1 / (μ (y + d̂ − r̂)ᵀ(y + d̂ − r̂) + ε)²,
//! ```
//!
//! which peaks at `1/ε²` exactly when the state sits at the safety radius
//! (`y = r̂ − d̂`) and decays with distance from it.
//!
//! Three variants ship, selected by [`CaVariant`]:
//!
//! * **Terminal** — the risk is frozen at the horizon estimate
//!   `f_T = f(e^{TA} y(0))`. The terminal relative state is estimated as
//!
//!   ```text
//!   ŷ(T) = (I + (ω − μ f_T) Ψ(T))⁻¹ (e^{TA} y(0) − μ f_T Ψ(T)(r̂ − d̂)),
//!   ```
//!
//!   and the control uses the constant bracket
//!   `w = (ω − μ f_T) ŷ(T) + μ f_T (r̂ − d̂)`:
//!   `ξ̂(t) = −Bᵀe^{(T−t)Aᵀ} w`. Its induced trajectory has the closed form
//!   `ŷ(t) = e^{tA} y(0) − Ψ(t) e^{(T−t)Aᵀ} w`.
//!
//! * **TimeVarying** — the running estimator [`CaSolution::terminal_estimate`]
//!
//!   ```text
//!   z(t) = (I + (ω − μ f_t) Ψ(t))⁻¹ (e^{tA} y(0) − μ f_t Ψ(t)(r̂ − d̂)),
//!   f_t = f(e^{tA} y(0)),       z(T) = ŷ(T),
//!   ```
//!
//!   replaces `ŷ(T)` in the control bracket while the repulsion term keeps
//!   the horizon risk: `ξ̂(t) = −Bᵀe^{(T−t)Aᵀ}((ω − μ f_t) z(t) + μ f_T (r̂ − d̂))`.
//!
//! * **TimeVaryingConsistent** — as `TimeVarying` with the repulsion term
//!   also at the running risk `f_t`, so every `f` in the bracket is evaluated
//!   at `e^{tA} y(0)`. The two time-varying brackets coincide at `t = T`.
//!
//! The time-varying brackets admit no closed-form antiderivative, so the
//! trajectories they induce are evaluated exactly by adaptive quadrature of
//! the variation-of-constants integral
//! `ŷ(t) = e^{tA} y(0) + ∫₀ᵗ e^{(t−s)A} B ξ̂(s) ds`.
//!
//! All variants keep the open-loop structure: controls and trajectories are
//! functions of the initial state and time only. With `μ = 0` the Terminal
//! variant reduces identically to the equilibrium strategy of [`crate::nash`];
//! the time-varying variants do not (their `z(t)` differs from the constant
//! `y(T)` whenever `t < T`), which is measured rather than assumed by this
//! crate's test suites.

use std::cell::RefCell;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lin::quad::{self, QuadratureSpec};
use crate::lin::{Dynamics, Gramian, State3};
use crate::nash::{relative_initial_states, FollowerParams, LeaderMotion};
use crate::scalar::Real;
use crate::sim::{ControlLaw, LawKind};

/// Which estimated strategy to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaVariant {
    /// Horizon-frozen risk and terminal estimate.
    Terminal,
    /// Running estimator `z(t)`, repulsion at the horizon risk `f_T`.
    TimeVarying,
    /// Running estimator `z(t)`, repulsion at the running risk `f_t`.
    TimeVaryingConsistent,
}

/// Collision-avoidance parameters shared by the whole platoon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaParams<T> {
    /// Denominator regularizer ε > 0; caps the risk at `1/ε²`.
    pub epsilon: T,
    pub variant: CaVariant,
}

impl<T: Real> CaParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= T::zero() {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                value: self.epsilon.as_f64(),
                reason: "risk regularizer must be finite and positive",
            });
        }
        Ok(())
    }
}

/// The collision-risk scalar `f(y)`.
///
/// Strictly positive, bounded by `1/ε²`, with the bound attained exactly at
/// `y = r̂ − d̂` (spacing equal to the safety radius).
pub fn collision_risk<T: Real>(y: &Vector3<T>, params: &FollowerParams<T>, epsilon: T) -> T {
    let q = y + params.spacing_offset() - params.safety_offset();
    let denom = params.mu * q.dot(&q) + epsilon;
    T::one() / (denom * denom)
}

/// The running terminal-state estimate `z_i(t)` of one follower.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatedTerminal<T> {
    /// Follower index, 0-based.
    pub follower: usize,
    pub t: T,
    pub z: State3<T>,
}

#[derive(Clone, Debug)]
struct CaFollower<T> {
    y0: Vector3<T>,
    params: FollowerParams<T>,
    /// `r̂ − d̂`.
    repulsion: Vector3<T>,
    /// `f_T = f(e^{TA} y(0))`.
    f_horizon: T,
    /// `ŷ(T)`.
    terminal_estimate: Vector3<T>,
    /// `(ω − μ f_T) ŷ(T) + μ f_T (r̂ − d̂)`.
    bracket_terminal: Vector3<T>,
}

/// One collision-avoidance strategy over a game horizon, with the
/// time-independent factors cached per follower.
#[derive(Clone, Debug)]
pub struct CaSolution<T> {
    dynamics: Dynamics<T>,
    horizon: T,
    leader: LeaderMotion<T>,
    ca: CaParams<T>,
    followers: Vec<CaFollower<T>>,
    psi_horizon: Gramian<T>,
    expm_horizon: Matrix3<T>,
    quad_spec: QuadratureSpec<T>,
}

impl<T: Real> CaSolution<T> {
    pub fn new(
        dynamics: Dynamics<T>,
        horizon: T,
        leader: LeaderMotion<T>,
        followers: &[(State3<T>, FollowerParams<T>)],
        ca: CaParams<T>,
    ) -> Result<Self> {
        if !horizon.is_finite() || horizon <= T::zero() {
            return Err(Error::InvalidParameter {
                name: "horizon",
                value: horizon.as_f64(),
                reason: "game horizon must be finite and positive",
            });
        }
        ca.validate()?;
        let initial = relative_initial_states(&leader, followers)?;
        let psi_horizon = dynamics.gramian(horizon)?;
        let expm_horizon = dynamics.expm(horizon)?;
        let followers = initial
            .into_iter()
            .zip(followers.iter())
            .map(|(rel, (_, params))| {
                let y0 = rel.y.as_vector();
                let repulsion = params.safety_offset() - params.spacing_offset();
                let f_horizon = collision_risk(&(expm_horizon * y0), params, ca.epsilon);
                let shift = params.omega - params.mu * f_horizon;
                let inverse = psi_horizon.shifted_inverse(shift).map_err(|e| at(e, rel.index, horizon))?;
                let forced = expm_horizon * y0
                    - psi_horizon.matrix() * repulsion * (params.mu * f_horizon);
                let terminal_estimate = inverse * forced;
                let bracket_terminal =
                    terminal_estimate * shift + repulsion * (params.mu * f_horizon);
                Ok(CaFollower {
                    y0,
                    params: *params,
                    repulsion,
                    f_horizon,
                    terminal_estimate,
                    bracket_terminal,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dynamics,
            horizon,
            leader,
            ca,
            followers,
            psi_horizon,
            expm_horizon,
            quad_spec: QuadratureSpec::default(),
        })
    }

    /// Overrides the quadrature tolerances used for time-varying trajectories.
    pub fn with_quadrature(mut self, spec: QuadratureSpec<T>) -> Self {
        self.quad_spec = spec;
        self
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

    pub fn variant(&self) -> CaVariant {
        self.ca.variant
    }

    pub fn epsilon(&self) -> T {
        self.ca.epsilon
    }

    pub fn params(&self, i: usize) -> &FollowerParams<T> {
        &self.followers[i].params
    }

    pub fn initial_relative_state(&self, i: usize) -> State3<T> {
        State3::from_vector(&self.followers[i].y0)
    }

    /// `ŷ_i(T)`, the horizon estimate every variant shares.
    pub fn horizon_terminal_estimate(&self, i: usize) -> State3<T> {
        State3::from_vector(&self.followers[i].terminal_estimate)
    }

    /// Horizon risk `f(e^{TA} y_i(0))`.
    pub fn horizon_risk(&self, i: usize) -> T {
        self.followers[i].f_horizon
    }

    /// Running risk `f(e^{tA} y_i(0))` of the freely drifting relative state.
    pub fn risk_at(&self, i: usize, t: T) -> Result<T> {
        let law = &self.followers[i];
        let drift = self.dynamics.expm(t)? * law.y0;
        Ok(collision_risk(&drift, &law.params, self.ca.epsilon))
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

    /// Running terminal-state estimator `z_i(t)`.
    ///
    /// `z_i(0) = y_i(0)` (the Gramian vanishes) and `z_i(T) = ŷ_i(T)`.
    /// Fails with a singularity error when `μ f > ω` pushes
    /// `I + (ω − μ f) Ψ(t)` through singularity at this `(i, t)`.
    pub fn terminal_estimate(&self, i: usize, t: T) -> Result<EstimatedTerminal<T>> {
        self.check_horizon(t)?;
        let law = &self.followers[i];
        let drift = self.dynamics.expm(t)? * law.y0;
        let f_t = collision_risk(&drift, &law.params, self.ca.epsilon);
        let shift = law.params.omega - law.params.mu * f_t;
        let psi = self.dynamics.gramian(t)?;
        let inverse = psi.shifted_inverse(shift).map_err(|e| at(e, i, t))?;
        let forced = drift - psi.matrix() * law.repulsion * (law.params.mu * f_t);
        Ok(EstimatedTerminal {
            follower: i,
            t,
            z: State3::from_vector(&(inverse * forced)),
        })
    }

    /// The bracket multiplying `−Bᵀe^{(T−t)Aᵀ}` in the selected variant.
    fn bracket(&self, i: usize, t: T) -> Result<Vector3<T>> {
        let law = &self.followers[i];
        match self.ca.variant {
            CaVariant::Terminal => Ok(law.bracket_terminal),
            CaVariant::TimeVarying | CaVariant::TimeVaryingConsistent => {
                let drift = self.dynamics.expm(t)? * law.y0;
                let f_t = collision_risk(&drift, &law.params, self.ca.epsilon);
                let f_rep = match self.ca.variant {
                    CaVariant::TimeVarying => law.f_horizon,
                    _ => f_t,
                };
                let z = self.terminal_estimate(i, t)?.z.as_vector();
                Ok(z * (law.params.omega - law.params.mu * f_t) + law.repulsion * (law.params.mu * f_rep))
            }
        }
    }

    /// Reduced control `ξ̂_i(t) = −Bᵀe^{(T−t)Aᵀ} · bracket`.
    pub fn xi(&self, i: usize, t: T) -> Result<T> {
        self.check_horizon(t)?;
        let g = self.dynamics.impulse_response(self.horizon - t);
        Ok(-g.dot(&self.bracket(i, t)?))
    }

    /// Vehicle control `û_i(t) = −Σ_{j≤i} ξ̂_j(t)`.
    pub fn control(&self, i: usize, t: T) -> Result<T> {
        Ok(self.controls_at(t)?[i])
    }

    pub fn controls_at(&self, t: T) -> Result<Vec<T>> {
        self.check_horizon(t)?;
        let g = self.dynamics.impulse_response(self.horizon - t);
        let mut u = T::zero();
        self.followers
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let xi = -g.dot(&self.bracket(i, t)?);
                u -= xi;
                Ok(u)
            })
            .collect()
    }

    /// Relative state induced by the selected variant's control.
    ///
    /// The Terminal variant evaluates its closed form; the time-varying
    /// variants integrate `e^{tA} y(0) + ∫₀ᵗ e^{(t−s)A} B ξ̂(s) ds` by
    /// adaptive quadrature.
    pub fn relative_state(&self, i: usize, t: T) -> Result<State3<T>> {
        self.check_horizon(t)?;
        let law = &self.followers[i];
        let drift = self.dynamics.expm(t)? * law.y0;
        match self.ca.variant {
            CaVariant::Terminal => {
                let psi = self.dynamics.gramian(t)?;
                let back = self.dynamics.expm(self.horizon - t)?.transpose() * law.bracket_terminal;
                Ok(State3::from_vector(&(drift - psi.matrix() * back)))
            }
            CaVariant::TimeVarying | CaVariant::TimeVaryingConsistent => {
                let failed: RefCell<Option<Error>> = RefCell::new(None);
                let integrand = |s: T| -> Vector3<T> {
                    match self.xi(i, s) {
                        Ok(xi) => self.dynamics.impulse_response(t - s) * xi,
                        Err(e) => {
                            failed.borrow_mut().get_or_insert(e);
                            Vector3::zeros()
                        }
                    }
                };
                let forced = quad::integrate(integrand, T::zero(), t, &self.quad_spec)?;
                if let Some(e) = failed.into_inner() {
                    return Err(e);
                }
                Ok(State3::from_vector(&(drift + forced)))
            }
        }
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

impl<T: Real> ControlLaw<T> for CaSolution<T> {
    fn follower_count(&self) -> usize {
        self.followers.len()
    }

    fn kind(&self) -> LawKind {
        match self.ca.variant {
            CaVariant::Terminal => LawKind::CaTerminal,
            CaVariant::TimeVarying => LawKind::CaTimeVarying,
            CaVariant::TimeVaryingConsistent => LawKind::CaTimeVaryingConsistent,
        }
    }

    fn control(&self, i: usize, t: T) -> Result<T> {
        CaSolution::control(self, i, t)
    }

    fn controls_at(&self, t: T) -> Result<Vec<T>> {
        CaSolution::controls_at(self, t)
    }
}

/// Tags a kernel singularity error with the follower and time that hit it.
fn at<T: Real>(e: Error, follower: usize, t: T) -> Error {
    match e {
        Error::SingularShift { condition } => Error::SingularShiftAt {
            follower: follower + 1,
            t: t.as_f64(),
            condition,
        },
        other => other,
    }
}
