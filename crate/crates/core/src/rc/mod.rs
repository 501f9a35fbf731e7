//! Reflection-coefficient optimization for a fixed power allocation.
//!
//! For fixed powers the sum-of-ratios objective is again handled with the
//! quadratic transform: given auxiliaries `l`, maximizing the surrogate is the
//! same as minimizing the convex quadratic
//!
//! ```text
//! ḡ(φ) = w φ + φᴴ c + φᴴ A φ
//! ```
//!
//! over the feasible set. Each feasible set has its own solver:
//!
//! * [`solve_ideal`] for `|φ_n| ≤ 1` (convex; dual Newton with primal refinement),
//! * [`rcg_minimize`] for `|φ_n| = 1` (Riemannian conjugate gradient),
//! * [`npp_project`] for τ discrete phases (rounding of the unit-modulus
//!   solution), with [`brute_force_discrete`] as an exhaustive reference.

mod discrete;
mod ideal;
mod manifold;
mod rcg;

pub use discrete::{brute_force_discrete, npp_project, quantize_phase, BRUTE_FORCE_CAP};
pub use ideal::{solve_ideal, solve_ideal_from, solve_ideal_kkt, IdealSolution};
pub use manifold::{retract, riemannian_gradient, transport, ManifoldPoint, TangentVector};
pub use rcg::{rcg_minimize, rcg_minimize_with, RcgOptions, RcgOutcome};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::power::{auxiliary_q, RatioTerms};
use crate::system::{CVector, ChannelSet, FeasibleSet, PowerAllocation, RcVector};

pub type CMatrix = DMatrix<Complex64>;

const HERMITIAN_TOL: f64 = 1e-12;

/// The quadratic `ḡ(φ) = w φ + φᴴ c + φᴴ A φ`.
///
/// `w` is a row vector stored as a column; it equals `cᴴ` for forms built by
/// [`assemble_quadratic`], which makes `ḡ` real.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    w: CVector,
    c: CVector,
    a: CMatrix,
}

impl QuadraticForm {
    pub fn new(w: CVector, c: CVector, a: CMatrix) -> Result<Self> {
        let n = c.len();
        if w.len() != n {
            return Err(Error::Dimension {
                what: "row vector w",
                expected: n,
                found: w.len(),
            });
        }
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::Dimension {
                what: "matrix A",
                expected: n,
                found: a.nrows().max(a.ncols()),
            });
        }
        let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for i in 0..n {
            for j in i..n {
                if (a[(i, j)] - a[(j, i)].conj()).norm()
                    > HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE)
                {
                    return Err(Error::Numerical(format!(
                        "A is not Hermitian at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { w, c, a })
    }

    /// Form with `w = cᴴ`.
    pub fn from_hermitian(c: CVector, a: CMatrix) -> Result<Self> {
        Self::new(c.map(|z| z.conj()), c, a)
    }

    pub fn w(&self) -> &CVector {
        &self.w
    }

    pub fn c(&self) -> &CVector {
        &self.c
    }

    pub fn a(&self) -> &CMatrix {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    /// `w φ + φᴴ c + φᴴ A φ` without discarding the imaginary part.
    pub fn value_complex(&self, phi: &CVector) -> Complex64 {
        self.w.dot(phi) + phi.dotc(&self.c) + phi.dotc(&(&self.a * phi))
    }

    /// Real part of [`value_complex`](Self::value_complex).
    pub fn value(&self, phi: &CVector) -> f64 {
        self.value_complex(phi).re
    }

    /// Euclidean gradient `2Aφ + c + wᴴ` with respect to `φ*`.
    pub fn euclidean_gradient(&self, phi: &CVector) -> CVector {
        (&self.a * phi) * Complex64::new(2.0, 0.0) + &self.c + self.w.map(|z| z.conj())
    }

    /// Largest entry magnitude of `A`, or of `c` and `w` when `A` vanishes.
    pub fn scale(&self) -> f64 {
        let a = self.a.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if a > 0.0 {
            return a;
        }
        self.c
            .iter()
            .chain(self.w.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Same minimizers, entries rescaled to order one.
    pub fn normalized(&self) -> Self {
        let s = self.scale();
        if !(s.is_finite() && s > 0.0) {
            return self.clone();
        }
        let inv = Complex64::new(1.0 / s, 0.0);
        Self {
            w: &self.w * inv,
            c: &self.c * inv,
            a: &self.a * inv,
        }
    }
}

/// Optimal auxiliaries `l_m = √(b_m p_m + σ²) / (v_m p_m + σ²)` for fixed `φ` and `p`.
pub fn auxiliary_l(
    ch: &ChannelSet,
    phi: &CVector,
    p: &PowerAllocation,
    noise: f64,
) -> Result<Vec<f64>> {
    let terms = RatioTerms::from_channels(ch, phi, noise)?;
    auxiliary_q(p, &terms)
}

/// Coefficients of the reflection subproblem for auxiliaries `l` and powers `p`.
pub fn assemble_quadratic(
    ch: &ChannelSet,
    l: &[f64],
    p: &PowerAllocation,
) -> Result<QuadraticForm> {
    let m_total = ch.n_subcarriers();
    for (what, len) in [("auxiliary l", l.len()), ("power allocation", p.len())] {
        if len != m_total {
            return Err(Error::Dimension {
                what,
                expected: m_total,
                found: len,
            });
        }
    }
    let n = ch.n_cells();
    let mut w = CVector::zeros(n);
    let mut c = CVector::zeros(n);
    let mut a = CMatrix::zeros(n, n);
    for (m, (lm, pm)) in l.iter().zip(p.powers()).enumerate() {
        let weight = lm * lm * pm;
        if weight == 0.0 {
            continue;
        }
        let hr = &ch.reflect_si()[m];
        let h1 = ch.si_gain()[m];
        c.axpy(
            Complex64::new(weight, 0.0) * h1,
            hr,
            Complex64::new(1.0, 0.0),
        );
        // w is a row: weight · h1* · h_Rᴴ
        w.zip_apply(hr, |wn, hn| *wn += weight * h1.conj() * hn.conj());
        a.ger(
            Complex64::new(weight, 0.0),
            hr,
            &hr.map(|z| z.conj()),
            Complex64::new(1.0, 0.0),
        );
    }
    // Enforce exact Hermitian symmetry against rounding in the rank-one updates.
    let a = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
    QuadraticForm::new(w, c, a)
}

/// Uniformly random phases on the unit circle.
pub fn random_rc<R: Rng + ?Sized>(n: usize, rng: &mut R) -> RcVector {
    let values = CVector::from_fn(n, |_, _| {
        Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI))
    });
    RcVector::new(values, FeasibleSet::UnitModulus).expect("unit-modulus by construction")
}
