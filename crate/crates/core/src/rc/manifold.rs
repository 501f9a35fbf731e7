//! The complex circle manifold `{φ : |φ_n| = 1}` and its tangent spaces.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::system::{CVector, FeasibleSet, RcVector};

const ON_MANIFOLD_TOL: f64 = 1e-9;

/// A point with every entry on the unit circle.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint(CVector);

impl ManifoldPoint {
    pub fn new(phi: CVector) -> Result<Self> {
        if let Some(n) = phi
            .iter()
            .position(|z| (z.norm() - 1.0).abs() > ON_MANIFOLD_TOL)
        {
            return Err(Error::Numerical(format!(
                "entry {n} has modulus {} off the unit circle",
                phi[n].norm()
            )));
        }
        Ok(Self(phi))
    }

    /// Entrywise projection `φ_n / |φ_n|`; zero entries map to 1.
    pub fn project(phi: &CVector) -> Self {
        Self(phi.map(|z| {
            let r = z.norm();
            if r > 0.0 {
                z / r
            } else {
                Complex64::new(1.0, 0.0)
            }
        }))
    }

    pub fn values(&self) -> &CVector {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_rc(&self) -> RcVector {
        RcVector::new(self.0.clone(), FeasibleSet::UnitModulus).expect("point lies on the manifold")
    }
}

impl TryFrom<&RcVector> for ManifoldPoint {
    type Error = Error;

    fn try_from(rc: &RcVector) -> Result<Self> {
        Self::new(rc.values().clone())
    }
}

/// A tangent vector `μ` at `base`, with `Re(μ_n φ_n*) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub mu: CVector,
    pub base: ManifoldPoint,
}

impl TangentVector {
    /// Real inner product `Re(μᴴ ν)`.
    pub fn inner(&self, other: &TangentVector) -> f64 {
        self.mu.dotc(&other.mu).re
    }

    pub fn norm_sqr(&self) -> f64 {
        self.mu.norm_squared()
    }

    /// `max_n |Re(μ_n φ_n*)|`; zero up to round-off for a tangent vector.
    pub fn tangency_residual(&self) -> f64 {
        self.mu
            .iter()
            .zip(self.base.values().iter())
            .map(|(m, p)| (m * p.conj()).re.abs())
            .fold(0.0, f64::max)
    }
}

fn project_tangent(v: &CVector, at: &ManifoldPoint) -> CVector {
    v.zip_map(at.values(), |g, p| g - p * (g * p.conj()).re)
}

/// Orthogonal projection of the Euclidean gradient onto the tangent space.
pub fn riemannian_gradient(at: &ManifoldPoint, egrad: &CVector) -> Result<TangentVector> {
    if egrad.len() != at.len() {
        return Err(Error::Dimension {
            what: "euclidean gradient",
            expected: at.len(),
            found: egrad.len(),
        });
    }
    Ok(TangentVector {
        mu: project_tangent(egrad, at),
        base: at.clone(),
    })
}

/// Moves `step` along `dir` and normalizes each entry back to the circle.
pub fn retract(dir: &TangentVector, step: f64) -> Result<ManifoldPoint> {
    let moved = dir.base.values() + &dir.mu * Complex64::new(step, 0.0);
    if let Some(n) = moved
        .iter()
        .position(|z| z.norm() == 0.0 || !z.norm().is_finite())
    {
        return Err(Error::Numerical(format!(
            "retraction degenerates at entry {n}"
        )));
    }
    Ok(ManifoldPoint(moved.map(|z| z / z.norm())))
}

/// Carries a tangent vector to the tangent space at `to` by projection.
pub fn transport(v: &TangentVector, to: &ManifoldPoint) -> Result<TangentVector> {
    if v.mu.len() != to.len() {
        return Err(Error::Dimension {
            what: "transport target",
            expected: v.mu.len(),
            found: to.len(),
        });
    }
    Ok(TangentVector {
        mu: project_tangent(&v.mu, to),
        base: to.clone(),
    })
}
