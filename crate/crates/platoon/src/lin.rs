//! Linear-systems kernel for the third-order longitudinal vehicle model.
//!
//! Every vehicle runs the same feedback-linearized dynamics
//!
//! ```text
//! ẋ = A x + B u,        x = (p, v, a),
//!
//!     ┌ 0  1    0  ┐        ┌  0  ┐
//! A = │ 0  0    1  │,   B = │  0  │,      τ > 0.
//!     └ 0  0  −1/τ ┘        └ 1/τ ┘
//! ```
//!
//! Because `A` is upper triangular with a single non-zero eigenvalue, the
//! matrix exponential and the controllability Gramian
//!
//! ```text
//! Ψ(t) = ∫₀ᵗ e^{(t−s)A} B Bᵀ e^{(t−s)Aᵀ} ds
//! ```
//!
//! have elementary closed forms. Both are implemented analytically here, and
//! the Gramian additionally via adaptive Gauss–Kronrod quadrature so the two
//! routes can cross-check each other.
//!
//! With `c = e^{−t/τ}` the closed forms used throughout the crate are
//!
//! ```text
//! e^{tA} = ┌ 1  t  τt − τ²(1−c) ┐        e^{tA}B = ┌ t − τ(1−c) ┐
//!          │ 0  1  τ(1−c)       │,                 │ 1 − c      │
//!          └ 0  0  c            ┘                  └ c/τ        ┘
//! ```
//!
//! both valid for all real `t`.

pub mod quad;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use quad::QuadratureSpec;

/// Relative tolerance of the Gramian symmetry invariant.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalue floor of the Gramian positive-semidefiniteness invariant.
pub const PSD_EIGEN_FLOOR: f64 = -1e-10;
/// Condition-estimate limit above which a shifted Gramian counts as singular.
pub const CONDITION_LIMIT: f64 = 1e14;

/// One vehicle's state triple: position, velocity, acceleration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct State3<T> {
    /// Position (m).
    pub p: T,
    /// Velocity (m/s).
    pub v: T,
    /// Acceleration (m/s²).
    pub a: T,
}

impl<T: Real> State3<T> {
    pub fn new(p: T, v: T, a: T) -> Self {
        Self { p, v, a }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn as_vector(&self) -> Vector3<T> {
        Vector3::new(self.p, self.v, self.a)
    }

    pub fn from_vector(v: &Vector3<T>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.v.is_finite() && self.a.is_finite()
    }
}

/// Dynamics matrices of the longitudinal model, parameterized by the engine
/// time constant τ.
///
/// `A` and `B` are fully determined by τ; they are materialized on demand so
/// the struct stays a plain value type.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dynamics<T> {
    tau: T,
}

impl<T: Real> Dynamics<T> {
    /// Builds the dynamics for engine time constant `tau`.
    ///
    /// Fails with an invalid-parameter error when `tau` is not a finite
    /// positive number.
    pub fn new(tau: T) -> Result<Self> {
        if !tau.is_finite() || tau <= T::zero() {
            return Err(Error::InvalidParameter {
                name: "tau",
                value: tau.as_f64(),
                reason: "engine time constant must be finite and positive",
            });
        }
        Ok(Self { tau })
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    /// The system matrix `A`.
    pub fn a_matrix(&self) -> Matrix3<T> {
        let z = T::zero();
        let o = T::one();
        Matrix3::new(z, o, z, z, z, o, z, z, -o / self.tau)
    }

    /// The input vector `B`.
    pub fn b_vector(&self) -> Vector3<T> {
        Vector3::new(T::zero(), T::zero(), T::one() / self.tau)
    }

    /// Closed-form matrix exponential `e^{tA}`, valid for all real `t`.
    pub fn expm(&self, t: T) -> Result<Matrix3<T>> {
        if !t.is_finite() {
            return Err(Error::InvalidParameter {
                name: "t",
                value: t.as_f64(),
                reason: "evaluation time must be finite",
            });
        }
        let tau = self.tau;
        let z = T::zero();
        let o = T::one();
        let c = (-t / tau).exp();
        let lag = tau * (o - c);
        Ok(Matrix3::new(
            o,
            t,
            tau * t - tau * lag,
            z,
            o,
            lag,
            z,
            z,
            c,
        ))
    }

    /// Closed form of `e^{sA} B`: the state response to a control impulse,
    /// and the only way `B` ever enters the strategy formulas.
    pub fn impulse_response(&self, s: T) -> Vector3<T> {
        let tau = self.tau;
        let c = (-s / tau).exp();
        let e1 = T::one() - c;
        Vector3::new(s - tau * e1, e1, c / tau)
    }

    /// Controllability Gramian `Ψ(t)` from the entrywise analytic
    /// antiderivatives of `e^{sA}BBᵀe^{sAᵀ}`.
    ///
    /// With `c = e^{−t/τ}`, `e₁ = 1 − c`, `e₂ = 1 − e^{−2t/τ}`:
    ///
    /// ```text
    /// Ψ₁₁ = ((t−τ)³ + τ³)/3 − 2τ²tc + τ³e₂/2
    /// Ψ₁₂ = (t² − 2τt)/2 + τtc + τ²e₁ − τ²e₂/2
    /// Ψ₁₃ = −tc + τe₂/2
    /// Ψ₂₂ = t − 2τe₁ + τe₂/2
    /// Ψ₂₃ = e₁ − e₂/2
    /// Ψ₃₃ = e₂/(2τ)
    /// ```
    pub fn gramian(&self, t: T) -> Result<Gramian<T>> {
        if !t.is_finite() || t < T::zero() {
            return Err(Error::InvalidParameter {
                name: "t",
                value: t.as_f64(),
                reason: "Gramian time must be finite and non-negative",
            });
        }
        let tau = self.tau;
        let half = T::of(0.5);
        let two = T::of(2.0);
        let three = T::of(3.0);
        let c = (-t / tau).exp();
        let e1 = T::one() - c;
        let e2 = T::one() - (-two * t / tau).exp();
        let tau2 = tau * tau;
        let tau3 = tau2 * tau;

        let p11 = ((t - tau).powi(3) + tau3) / three - two * tau2 * t * c + half * tau3 * e2;
        let p12 = half * (t * t - two * tau * t) + tau * t * c + tau2 * e1 - half * tau2 * e2;
        let p13 = -t * c + half * tau * e2;
        let p22 = t - two * tau * e1 + half * tau * e2;
        let p23 = e1 - half * e2;
        let p33 = e2 / (two * tau);

        Gramian::new(t, Matrix3::new(p11, p12, p13, p12, p22, p23, p13, p23, p33))
    }

    /// Controllability Gramian via adaptive Gauss–Kronrod quadrature of the
    /// closed-form integrand. Self-check path for [`Dynamics::gramian`].
    pub fn gramian_quadrature(&self, t: T, spec: &QuadratureSpec<T>) -> Result<Gramian<T>> {
        if !t.is_finite() || t < T::zero() {
            return Err(Error::InvalidParameter {
                name: "t",
                value: t.as_f64(),
                reason: "Gramian time must be finite and non-negative",
            });
        }
        if t == T::zero() {
            return Gramian::new(t, Matrix3::zeros());
        }
        let m = quad::integrate(
            |s| {
                let g = self.impulse_response(s);
                g * g.transpose()
            },
            T::zero(),
            t,
            spec,
        )?;
        Gramian::new(t, m)
    }
}

/// The Gramian `Ψ(t)` together with its evaluation time.
///
/// Construction validates the symmetry and positive-semidefiniteness
/// invariants at the tolerances [`SYMMETRY_TOL`] and [`PSD_EIGEN_FLOOR`];
/// `Ψ(0)` must be exactly zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gramian<T> {
    t: T,
    m: Matrix3<T>,
}

impl<T: Real> Gramian<T> {
    pub fn new(t: T, m: Matrix3<T>) -> Result<Self> {
        if !t.is_finite() || t < T::zero() {
            return Err(Error::InvalidParameter {
                name: "t",
                value: t.as_f64(),
                reason: "Gramian time must be finite and non-negative",
            });
        }
        let asym = max_abs(&(m - m.transpose()));
        if asym > T::of(SYMMETRY_TOL) * (T::one() + max_abs(&m)) {
            return Err(Error::Validation(format!(
                "Gramian asymmetry {:.3e} exceeds tolerance",
                asym.as_f64()
            )));
        }
        let eig_min = m
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(T::of(f64::INFINITY), |acc, e| acc.min(e));
        if eig_min < T::of(PSD_EIGEN_FLOOR) {
            return Err(Error::Validation(format!(
                "Gramian eigenvalue {:.3e} below PSD floor",
                eig_min.as_f64()
            )));
        }
        if t == T::zero() && m != Matrix3::zeros() {
            return Err(Error::Validation("Gramian at t = 0 must be zero".into()));
        }
        Ok(Self { t, m })
    }

    pub fn time(&self) -> T {
        self.t
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.m
    }

    /// `(I + w Ψ)⁻¹` with a condition-number guard.
    ///
    /// For `w > 0` the shifted matrix is provably invertible; the guard exists
    /// for the negative shifts the collision-avoidance strategies can produce,
    /// where `I + w Ψ` may pass through singularity. A condition estimate
    /// above [`CONDITION_LIMIT`] (1-norm based) is reported as singular.
    pub fn shifted_inverse(&self, w: T) -> Result<Matrix3<T>> {
        if !w.is_finite() {
            return Err(Error::InvalidParameter {
                name: "w",
                value: w.as_f64(),
                reason: "Gramian shift must be finite",
            });
        }
        let shifted = Matrix3::identity() + self.m * w;
        let inverse = shifted
            .try_inverse()
            .ok_or(Error::SingularShift {
                condition: f64::INFINITY,
            })?;
        let condition = norm_one(&shifted) * norm_one(&inverse);
        if condition > T::of(CONDITION_LIMIT) {
            return Err(Error::SingularShift {
                condition: condition.as_f64(),
            });
        }
        Ok(inverse)
    }
}

/// Largest absolute entry.
pub(crate) fn max_abs<T: Real>(m: &Matrix3<T>) -> T {
    m.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
}

/// Induced 1-norm (maximum absolute column sum).
fn norm_one<T: Real>(m: &Matrix3<T>) -> T {
    let mut worst = T::zero();
    for j in 0..3 {
        let mut sum = T::zero();
        for i in 0..3 {
            sum += m[(i, j)].abs();
        }
        worst = worst.max(sum);
    }
    worst
}
