//! Independent verification engine.
//!
//! Nothing in this module trusts the closed forms: trajectories are produced
//! by fixed-step RK4 integration of the raw dynamics `ẋ_i = A x_i + B u_i`
//! under an arbitrary [`ControlLaw`], costs are evaluated by composite
//! Simpson quadrature on the integration grid, and optimality is certified
//! by checking that bump perturbations of a follower's reduced control never
//! lower its reduced cost.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ca::{collision_risk, CaParams, CaSolution, CaVariant};
use crate::error::{Error, Result};
use crate::lin::{Dynamics, State3};
use crate::nash::{relative_initial_states, FollowerParams, LeaderMotion, NashSolution};
use crate::scalar::Real;

/// Hard cap on the number of integration steps.
pub const MAX_STEPS: f64 = 1e7;
/// Margin tolerance of the best-response certification.
pub const BEST_RESPONSE_TOL: f64 = 1e-9;

/// Provenance tag of a control law.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LawKind {
    Nash,
    CaTerminal,
    CaTimeVarying,
    CaTimeVaryingConsistent,
    External,
}

/// An evaluatable mapping `(follower, t) → u_i(t)`.
///
/// Follower indices are 0-based; vehicle numbering in reports adds one.
pub trait ControlLaw<T: Real> {
    fn follower_count(&self) -> usize;

    fn kind(&self) -> LawKind;

    fn control(&self, i: usize, t: T) -> Result<T>;

    /// All follower controls at one instant; laws with shared per-instant
    /// work override this.
    fn controls_at(&self, t: T) -> Result<Vec<T>> {
        (0..self.follower_count()).map(|i| self.control(i, t)).collect()
    }
}

/// A control law backed by a plain closure.
pub struct ExternalLaw<T, F> {
    count: usize,
    f: F,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Real, F: Fn(usize, T) -> Result<T>> ExternalLaw<T, F> {
    pub fn new(count: usize, f: F) -> Self {
        Self {
            count,
            f,
            _scalar: std::marker::PhantomData,
        }
    }
}

impl<T: Real, F: Fn(usize, T) -> Result<T>> ControlLaw<T> for ExternalLaw<T, F> {
    fn follower_count(&self) -> usize {
        self.count
    }

    fn kind(&self) -> LawKind {
        LawKind::External
    }

    fn control(&self, i: usize, t: T) -> Result<T> {
        (self.f)(i, t)
    }
}

/// Validated platoon scenario: dynamics, horizon, leader, followers, and the
/// collision-risk regularizer shared by all followers.
#[derive(Clone, Debug)]
pub struct Scenario<T> {
    pub dynamics: Dynamics<T>,
    pub horizon: T,
    pub leader: LeaderMotion<T>,
    pub followers: Vec<(State3<T>, FollowerParams<T>)>,
    pub epsilon: T,
}

impl<T: Real> Scenario<T> {
    pub fn follower_count(&self) -> usize {
        self.followers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.horizon.is_finite() || self.horizon <= T::zero() {
            return Err(Error::Validation("horizon must be finite and positive".into()));
        }
        if !self.epsilon.is_finite() || self.epsilon <= T::zero() {
            return Err(Error::Validation("epsilon must be finite and positive".into()));
        }
        relative_initial_states(&self.leader, &self.followers).map(|_| ())
    }

    /// Initial relative states `y_i(0)` as raw vectors.
    pub fn initial_relative_vectors(&self) -> Result<Vec<Vector3<T>>> {
        Ok(relative_initial_states(&self.leader, &self.followers)?
            .into_iter()
            .map(|r| r.y.as_vector())
            .collect())
    }

    /// Equilibrium strategy for this scenario.
    pub fn nash_solution(&self) -> Result<NashSolution<T>> {
        self.validate()?;
        NashSolution::new(self.dynamics, self.horizon, self.leader, &self.followers)
    }

    /// Collision-avoidance strategy for this scenario.
    pub fn ca_solution(&self, variant: CaVariant) -> Result<CaSolution<T>> {
        self.validate()?;
        CaSolution::new(
            self.dynamics,
            self.horizon,
            self.leader,
            &self.followers,
            CaParams {
                epsilon: self.epsilon,
                variant,
            },
        )
    }
}

/// One time slice of a run: states of all vehicles (leader first), follower
/// controls, predecessor spacings, and free-drift collision risks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample<T> {
    pub t: T,
    pub states: Vec<State3<T>>,
    pub controls: Vec<T>,
    pub spacings: Vec<T>,
    pub risks: Vec<T>,
}

/// Fixed-step RK4 integration of the platoon under `law`.
///
/// The leader is propagated analytically. Produces a sample at every step
/// plus one at `t = horizon` exactly; the final step is shortened when the
/// horizon is not a multiple of `dt`.
pub fn integrate<T: Real>(
    law: &dyn ControlLaw<T>,
    scenario: &Scenario<T>,
    dt: T,
) -> Result<Vec<TrajectorySample<T>>> {
    scenario.validate()?;
    if !dt.is_finite() || dt <= T::zero() {
        return Err(Error::InvalidParameter {
            name: "dt",
            value: dt.as_f64(),
            reason: "integration step must be finite and positive",
        });
    }
    if (scenario.horizon / dt).as_f64() > MAX_STEPS {
        return Err(Error::InvalidParameter {
            name: "dt",
            value: dt.as_f64(),
            reason: "horizon/dt exceeds the step budget",
        });
    }
    if law.follower_count() != scenario.follower_count() {
        return Err(Error::Validation(format!(
            "law drives {} followers but the scenario has {}",
            law.follower_count(),
            scenario.follower_count()
        )));
    }

    let n = scenario.follower_count();
    let a = scenario.dynamics.a_matrix();
    let b = scenario.dynamics.b_vector();
    let y0s = scenario.initial_relative_vectors()?;
    let horizon = scenario.horizon;

    let mut xs: Vec<Vector3<T>> = scenario.followers.iter().map(|(x0, _)| x0.as_vector()).collect();
    let mut samples = Vec::new();

    let sample =
        |t: T, xs: &[Vector3<T>], samples: &mut Vec<TrajectorySample<T>>| -> Result<()> {
            let mut states = Vec::with_capacity(n + 1);
            states.push(scenario.leader.state_at(t));
            states.extend(xs.iter().map(State3::from_vector));
            let controls = law.controls_at(t)?;
            let spacings = (1..=n).map(|i| states[i - 1].p - states[i].p).collect();
            let drift = scenario.dynamics.expm(t)?;
            let risks = (0..n)
                .map(|i| collision_risk(&(drift * y0s[i]), &scenario.followers[i].1, scenario.epsilon))
                .collect();
            samples.push(TrajectorySample {
                t,
                states,
                controls,
                spacings,
                risks,
            });
            Ok(())
        };

    sample(T::zero(), &xs, &mut samples)?;

    let guard = dt * T::of(1e-9);
    let mut t = T::zero();
    let mut k: u64 = 0;
    while t < horizon {
        let t_next_grid = T::of((k + 1) as f64) * dt;
        let t_next = if t_next_grid < horizon - guard { t_next_grid } else { horizon };
        let h = t_next - t;

        let u0 = law.controls_at(t)?;
        let um = law.controls_at(t + h * T::of(0.5))?;
        let u1 = law.controls_at(t_next)?;
        for (i, x) in xs.iter_mut().enumerate() {
            let f = |x: &Vector3<T>, u: T| a * x + b * u;
            let half = T::of(0.5);
            let k1 = f(x, u0[i]);
            let k2 = f(&(*x + k1 * (h * half)), um[i]);
            let k3 = f(&(*x + k2 * (h * half)), um[i]);
            let k4 = f(&(*x + k3 * h), u1[i]);
            *x += (k1 + (k2 + k3) * T::of(2.0) + k4) * (h / T::of(6.0));
            if !(x.x.is_finite() && x.y.is_finite() && x.z.is_finite()) {
                return Err(Error::Divergence {
                    follower: i + 1,
                    t: t_next.as_f64(),
                });
            }
        }

        t = t_next;
        k += 1;
        sample(t, &xs, &mut samples)?;
    }

    Ok(samples)
}

/// RK4 integration of one follower's reduced dynamics `ẏ = A y + B ξ`.
///
/// Returns the sample times and relative states on the same grid convention
/// as [`integrate`].
pub fn integrate_relative<T: Real>(
    dynamics: &Dynamics<T>,
    horizon: T,
    y0: Vector3<T>,
    dt: T,
    xi: &dyn Fn(T) -> Result<T>,
) -> Result<(Vec<T>, Vec<Vector3<T>>)> {
    if !dt.is_finite() || dt <= T::zero() || (horizon / dt).as_f64() > MAX_STEPS {
        return Err(Error::InvalidParameter {
            name: "dt",
            value: dt.as_f64(),
            reason: "integration step must be positive with horizon/dt within the step budget",
        });
    }
    let a = dynamics.a_matrix();
    let b = dynamics.b_vector();
    let mut y = y0;
    let mut times = vec![T::zero()];
    let mut ys = vec![y];
    let guard = dt * T::of(1e-9);
    let mut t = T::zero();
    let mut k: u64 = 0;
    while t < horizon {
        let t_next_grid = T::of((k + 1) as f64) * dt;
        let t_next = if t_next_grid < horizon - guard { t_next_grid } else { horizon };
        let h = t_next - t;
        let half = T::of(0.5);
        let f = |y: &Vector3<T>, u: T| a * y + b * u;
        let k1 = f(&y, xi(t)?);
        let um = xi(t + h * half)?;
        let k2 = f(&(y + k1 * (h * half)), um);
        let k3 = f(&(y + k2 * (h * half)), um);
        let k4 = f(&(y + k3 * h), xi(t_next)?);
        y += (k1 + (k2 + k3) * T::of(2.0) + k4) * (h / T::of(6.0));
        t = t_next;
        k += 1;
        times.push(t);
        ys.push(y);
    }
    Ok((times, ys))
}

/// Composite Simpson quadrature on a sample grid.
///
/// The grid is uniform except possibly for a shortened final interval; the
/// uniform even-count prefix gets Simpson's rule and the at most two
/// remaining intervals fall back to the trapezoid rule.
pub fn quadrature_on_grid<T: Real>(times: &[T], values: &[T]) -> T {
    let n = times.len();
    if n < 2 {
        return T::zero();
    }
    let h = times[1] - times[0];
    let tol = h * T::of(1e-6);
    // Number of leading intervals with uniform width h.
    let mut uniform = n - 1;
    if n >= 3 {
        let last = times[n - 1] - times[n - 2];
        if (last - h).abs() > tol {
            uniform = n - 2;
        }
    }
    let simpson_end = uniform - (uniform % 2);
    let third = T::of(1.0 / 3.0);
    let mut total = T::zero();
    let mut i = 0;
    while i + 2 <= simpson_end {
        total += h * third * (values[i] + T::of(4.0) * values[i + 1] + values[i + 2]);
        i += 2;
    }
    while i + 1 < n {
        total += (times[i + 1] - times[i]) * T::of(0.5) * (values[i] + values[i + 1]);
        i += 1;
    }
    total
}

/// Player cost over an integrated run.
///
/// `J_i = ω_i ‖x_{i−1}(T) − x_i(T) − d̂_i‖² + ∫₀ᵀ u_i²`; with
/// `with_collision_term` the reciprocal terminal proximity penalty
/// `1 / (μ_i ‖x_{i−1}(T) − x_i(T) − r̂_i‖² + ε)` is added.
pub fn eval_cost<T: Real>(
    i: usize,
    law: &dyn ControlLaw<T>,
    scenario: &Scenario<T>,
    with_collision_term: bool,
    dt: T,
) -> Result<T> {
    let samples = integrate(law, scenario, dt)?;
    cost_from_samples(i, &samples, scenario, with_collision_term)
}

/// As [`eval_cost`], reusing an existing run.
pub fn cost_from_samples<T: Real>(
    i: usize,
    samples: &[TrajectorySample<T>],
    scenario: &Scenario<T>,
    with_collision_term: bool,
) -> Result<T> {
    let last = samples.last().ok_or_else(|| Error::Validation("empty sample list".into()))?;
    let params = &scenario.followers[i].1;
    let times: Vec<T> = samples.iter().map(|s| s.t).collect();
    let usq: Vec<T> = samples.iter().map(|s| s.controls[i] * s.controls[i]).collect();
    let err = last.states[i].as_vector() - last.states[i + 1].as_vector() - params.spacing_offset();
    let mut cost = params.omega * err.dot(&err) + quadrature_on_grid(&times, &usq);
    if with_collision_term {
        let prox = last.states[i].as_vector() - last.states[i + 1].as_vector() - params.safety_offset();
        cost += T::one() / (params.mu * prox.dot(&prox) + scenario.epsilon);
    }
    Ok(cost)
}

/// Margin of one perturbation direction in a best-response check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpMargin<T> {
    /// Index of the bump basis function.
    pub bump: usize,
    /// Perturbation sign (+1 or −1).
    pub sign: i8,
    /// `𝒥(ξ ± m·δ) − 𝒥(ξ)`.
    pub margin: T,
}

/// Outcome of certifying one follower's reduced control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestResponseReport<T> {
    /// Vehicle number (1-based follower id).
    pub vehicle: usize,
    pub base_cost: T,
    pub margins: Vec<BumpMargin<T>>,
    pub min_margin: T,
    pub tolerance: T,
    pub passed: bool,
}

/// Raised-cosine bump `δ_k` on `[k, k+1]·(T/count)`, zero elsewhere.
pub fn bump<T: Real>(k: usize, count: usize, horizon: T, t: T) -> T {
    let width = horizon / T::of(count as f64);
    let lo = width * T::of(k as f64);
    if t < lo || t > lo + width {
        return T::zero();
    }
    let phase = (t - lo) / width;
    T::of(0.5) * (T::one() - (T::two_pi() * phase).cos())
}

/// Certifies that `xi` is a best response for follower `i`'s reduced problem
/// `min ω_i‖y_i(T)‖² + ∫ξ²` by sweeping raised-cosine perturbations.
///
/// Every margin must stay above `−`[`BEST_RESPONSE_TOL`]; a negative margin
/// beyond that is reported (`passed = false`), not raised as an error.
pub fn best_response_check<T: Real>(
    scenario: &Scenario<T>,
    i: usize,
    xi: &(dyn Fn(T) -> Result<T> + Sync),
    bump_count: usize,
    magnitude: T,
    dt: T,
) -> Result<BestResponseReport<T>> {
    scenario.validate()?;
    let y0 = scenario.initial_relative_vectors()?[i];
    let omega = scenario.followers[i].1.omega;
    let horizon = scenario.horizon;
    let dynamics = &scenario.dynamics;

    let reduced_cost = |xi_fun: &(dyn Fn(T) -> Result<T>)| -> Result<T> {
        let (times, ys) = integrate_relative(dynamics, horizon, y0, dt, xi_fun)?;
        let vals = times.iter().map(|&t| xi_fun(t).map(|v| v * v)).collect::<Result<Vec<_>>>()?;
        let terminal = ys.last().expect("integration produced samples");
        Ok(omega * terminal.dot(terminal) + quadrature_on_grid(&times, &vals))
    };

    let base_cost = reduced_cost(&|t| xi(t))?;
    let cases: Vec<(usize, i8)> = (0..bump_count).flat_map(|k| [(k, 1i8), (k, -1i8)]).collect();
    let margins = cases
        .into_par_iter()
        .map(|(k, sign)| {
            let perturbed = |t: T| -> Result<T> {
                Ok(xi(t)? + T::of(sign as f64) * magnitude * bump(k, bump_count, horizon, t))
            };
            let cost = reduced_cost(&perturbed)?;
            Ok(BumpMargin {
                bump: k,
                sign,
                margin: cost - base_cost,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let min_margin = margins
        .iter()
        .map(|m| m.margin)
        .fold(T::of(f64::INFINITY), |acc, m| acc.min(m));
    let tolerance = T::of(BEST_RESPONSE_TOL);
    Ok(BestResponseReport {
        vehicle: i + 1,
        base_cost,
        margins,
        min_margin,
        tolerance,
        passed: min_margin >= -tolerance,
    })
}

/// Location and value of a per-follower extremum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extremum<T> {
    pub value: T,
    pub t: T,
}

/// A maximal interval of samples with spacing below the safety radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent<T> {
    /// Vehicle number of the follower that got too close to its predecessor.
    pub vehicle: usize,
    pub entry: T,
    /// `None` when the spacing is still below the radius at the horizon.
    pub exit: Option<T>,
}

/// Player costs of one follower.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostPair<T> {
    /// Terminal spacing penalty plus control energy.
    pub j: T,
    /// `j` plus the reciprocal terminal-proximity term.
    pub j_hat: T,
}

/// Summary metrics of one run.
///
/// "Desired platoon achieved" is operationalized as the position component
/// of the spacing error staying below [`RunReport::platoon_position_threshold`]
/// (0.1 m); the threshold is recorded here precisely because it is a choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport<T> {
    pub horizon: T,
    pub follower_count: usize,
    pub platoon_position_threshold: T,
    /// `‖x_{i−1}(T) − x_i(T) − d̂_i‖` per follower (full state norm).
    pub terminal_spacing_errors: Vec<T>,
    /// `|p_{i−1}(T) − p_i(T) − d_i|` per follower (position component).
    pub terminal_position_errors: Vec<T>,
    pub min_spacing: Vec<Extremum<T>>,
    pub collision_events: Vec<CollisionEvent<T>>,
    /// Argmax over samples of the free-drift risk `f(e^{tA} y_i(0))`.
    pub peak_risk: Vec<Extremum<T>>,
    /// Earliest sample time from which the position error stays below the
    /// threshold through the horizon; `None` when it never settles.
    pub platoon_achieved_from: Vec<Option<T>>,
    pub costs: Vec<CostPair<T>>,
}

/// Reduces an integrated (or closed-form-sampled) run to its summary metrics.
pub fn analyze<T: Real>(
    samples: &[TrajectorySample<T>],
    scenario: &Scenario<T>,
) -> Result<RunReport<T>> {
    if samples.is_empty() {
        return Err(Error::Validation("cannot analyze an empty sample list".into()));
    }
    let n = scenario.follower_count();
    let threshold = T::of(0.1);
    let last = samples.last().expect("nonempty");

    let mut terminal_spacing_errors = Vec::with_capacity(n);
    let mut terminal_position_errors = Vec::with_capacity(n);
    let mut min_spacing = Vec::with_capacity(n);
    let mut collision_events = Vec::new();
    let mut peak_risk = Vec::with_capacity(n);
    let mut platoon_achieved_from = Vec::with_capacity(n);
    let mut costs = Vec::with_capacity(n);

    for i in 0..n {
        let params = &scenario.followers[i].1;
        let err = last.states[i].as_vector() - last.states[i + 1].as_vector() - params.spacing_offset();
        terminal_spacing_errors.push(err.norm());
        terminal_position_errors.push(err.x.abs());

        let mut min = Extremum {
            value: T::of(f64::INFINITY),
            t: T::zero(),
        };
        let mut peak = Extremum {
            value: T::of(f64::NEG_INFINITY),
            t: T::zero(),
        };
        let mut below: Option<T> = None;
        let mut settled_from = Some(samples[0].t);
        let mut settled = true;
        for s in samples {
            if s.spacings[i] < min.value {
                min = Extremum {
                    value: s.spacings[i],
                    t: s.t,
                };
            }
            if s.risks[i] > peak.value {
                peak = Extremum {
                    value: s.risks[i],
                    t: s.t,
                };
            }
            match (s.spacings[i] < params.r, below) {
                (true, None) => below = Some(s.t),
                (false, Some(entry)) => {
                    collision_events.push(CollisionEvent {
                        vehicle: i + 1,
                        entry,
                        exit: Some(s.t),
                    });
                    below = None;
                }
                _ => {}
            }
            let pos_err = (s.spacings[i] - params.d).abs();
            if pos_err >= threshold {
                settled = false;
                settled_from = None;
            } else if !settled {
                settled = true;
                settled_from = Some(s.t);
            }
        }
        if let Some(entry) = below {
            collision_events.push(CollisionEvent {
                vehicle: i + 1,
                entry,
                exit: None,
            });
        }
        min_spacing.push(min);
        peak_risk.push(peak);
        platoon_achieved_from.push(settled_from);
        costs.push(CostPair {
            j: cost_from_samples(i, samples, scenario, false)?,
            j_hat: cost_from_samples(i, samples, scenario, true)?,
        });
    }

    Ok(RunReport {
        horizon: scenario.horizon,
        follower_count: n,
        platoon_position_threshold: threshold,
        terminal_spacing_errors,
        terminal_position_errors,
        min_spacing,
        collision_events,
        peak_risk,
        platoon_achieved_from,
        costs,
    })
}
