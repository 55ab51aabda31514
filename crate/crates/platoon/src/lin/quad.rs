//! Adaptive Gauss–Kronrod quadrature over fixed-size matrix integrands.
//!
//! A 15-point Kronrod rule with its embedded 7-point Gauss rule drives
//! interval bisection; the Gauss/Kronrod difference serves as the local error
//! estimate. Good for the smooth integrands this crate produces (products of
//! polynomials and decaying exponentials).

use nalgebra::SMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

// Kronrod-15 abscissae on [0, 1] side of the symmetric rule; odd indices are
// the embedded Gauss-7 nodes.
const XGK: [f64; 8] = [
    0.9914553711208126,
    0.9491079123427585,
    0.8648644233597691,
    0.7415311855993945,
    0.5860872354676911,
    0.4058451513773972,
    0.20778495500789848,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224,
    0.06309209262997856,
    0.10479001032225019,
    0.14065325971552592,
    0.1690047266392679,
    0.19035057806478542,
    0.20443294007529889,
    0.20948214108472782,
];
const WG: [f64; 4] = [
    0.1294849661688697,
    0.27970539148927664,
    0.3818300505051189,
    0.4179591836734694,
];

/// Tolerances and subdivision budget for adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureSpec<T> {
    /// Relative tolerance against the magnitude of the whole integral.
    pub rel_tol: T,
    /// Absolute tolerance floor.
    pub abs_tol: T,
    /// Maximum bisection depth per interval.
    pub max_depth: u32,
}

impl<T: Real> Default for QuadratureSpec<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::of(1e-12),
            abs_tol: T::of(1e-14),
            max_depth: 32,
        }
    }
}

/// Integrates `f` over `[a, b]`, `a <= b`, to the requested tolerance.
pub fn integrate<T: Real, const R: usize, const C: usize>(
    f: impl Fn(T) -> SMatrix<T, R, C>,
    a: T,
    b: T,
    spec: &QuadratureSpec<T>,
) -> Result<SMatrix<T, R, C>> {
    if !a.is_finite() || !b.is_finite() || b < a {
        return Err(Error::InvalidParameter {
            name: "interval",
            value: (b - a).as_f64(),
            reason: "integration interval must be finite with b >= a",
        });
    }
    if a == b {
        return Ok(SMatrix::zeros());
    }

    let total_len = b - a;
    let (k0, e0) = kronrod15(&f, a, b);
    let scale = max_abs(&k0).max(spec.abs_tol);

    let mut acc = SMatrix::<T, R, C>::zeros();
    let mut stack = vec![(a, b, k0, e0, 0u32)];
    while let Some((lo, hi, k, err, depth)) = stack.pop() {
        let budget = spec.abs_tol.max(spec.rel_tol * scale) * ((hi - lo) / total_len);
        if err <= budget {
            acc += k;
            continue;
        }
        if depth >= spec.max_depth {
            return Err(Error::QuadratureNoConvergence {
                a: lo.as_f64(),
                b: hi.as_f64(),
                estimate: err.as_f64(),
            });
        }
        let mid = (lo + hi) * T::of(0.5);
        let (kl, el) = kronrod15(&f, lo, mid);
        let (kr, er) = kronrod15(&f, mid, hi);
        stack.push((lo, mid, kl, el, depth + 1));
        stack.push((mid, hi, kr, er, depth + 1));
    }
    Ok(acc)
}

/// One K15/G7 evaluation over `[lo, hi]`: returns the Kronrod estimate and
/// the |K15 − G7| error estimate.
fn kronrod15<T: Real, const R: usize, const C: usize>(
    f: &impl Fn(T) -> SMatrix<T, R, C>,
    lo: T,
    hi: T,
) -> (SMatrix<T, R, C>, T) {
    let half = T::of(0.5);
    let center = (lo + hi) * half;
    let halfwidth = (hi - lo) * half;

    let mut kron = SMatrix::<T, R, C>::zeros();
    let mut gauss = SMatrix::<T, R, C>::zeros();
    for (i, &x) in XGK.iter().enumerate() {
        let wk = T::of(WGK[i]);
        let node = T::of(x) * halfwidth;
        let pair = if i == 7 {
            f(center)
        } else {
            f(center + node) + f(center - node)
        };
        kron += pair * wk;
        if i % 2 == 1 {
            gauss += pair * T::of(WG[i / 2]);
        }
    }
    kron *= halfwidth;
    gauss *= halfwidth;
    (kron, max_abs(&(kron - gauss)))
}

fn max_abs<T: Real, const R: usize, const C: usize>(m: &SMatrix<T, R, C>) -> T {
    m.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
}
