//! Riemannian conjugate gradient on the complex circle manifold.

use super::manifold::{retract, riemannian_gradient, transport, ManifoldPoint, TangentVector};
use super::QuadraticForm;
use crate::error::{Error, Result};
use crate::system::RcVector;

#[derive(Debug, Clone, PartialEq)]
pub struct RcgOptions {
    /// Stop once `‖grad‖² ≤ tol`.
    pub tol: f64,
    pub max_iters: usize,
    pub initial_step: f64,
    pub contraction: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for RcgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iters: 1000,
            initial_step: 1.0,
            contraction: 0.5,
            armijo: 1e-4,
            max_backtracks: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RcgOutcome {
    pub rc: RcVector,
    pub iterations: usize,
    /// False when the iteration cap or a failed line search ended the run.
    pub converged: bool,
    /// Objective before the first step and after each accepted step.
    pub objective_trace: Vec<f64>,
    pub grad_norm_sqr: f64,
}

/// Minimizes `ḡ` over `|φ_n| = 1` from `start` with default settings and tolerance `tol`.
pub fn rcg_minimize(qf: &QuadraticForm, start: &ManifoldPoint, tol: f64) -> Result<RcgOutcome> {
    rcg_minimize_with(
        qf,
        start,
        &RcgOptions {
            tol,
            ..RcgOptions::default()
        },
    )
}

pub fn rcg_minimize_with(
    qf: &QuadraticForm,
    start: &ManifoldPoint,
    opts: &RcgOptions,
) -> Result<RcgOutcome> {
    if start.len() != qf.dim() {
        return Err(Error::Dimension {
            what: "starting point",
            expected: qf.dim(),
            found: start.len(),
        });
    }
    if !(opts.tol > 0.0 && 0.0 < opts.contraction && opts.contraction < 1.0) {
        return Err(Error::config(
            "rcg",
            "tolerance must be positive and contraction in (0, 1)",
        ));
    }

    let mut x = start.clone();
    let mut f = qf.value(x.values());
    let mut grad = riemannian_gradient(&x, &qf.euclidean_gradient(x.values()))?;
    let mut dir = negate(&grad);
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let gg = grad.norm_sqr();
        if gg <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iters {
            break;
        }
        let mut slope = grad.inner(&dir);
        if slope.is_nan() || slope >= 0.0 {
            dir = negate(&grad);
            slope = -gg;
        }

        let mut step = opts.initial_step;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            if let Ok(y) = retract(&dir, step) {
                let fy = qf.value(y.values());
                if fy <= f + opts.armijo * step * slope {
                    accepted = Some((y, fy));
                    break;
                }
            }
            step *= opts.contraction;
        }
        let Some((y, fy)) = accepted else {
            log::debug!("line search failed after {iterations} iterations, ‖grad‖² = {gg:e}");
            break;
        };
        iterations += 1;

        let next_grad = riemannian_gradient(&y, &qf.euclidean_gradient(y.values()))?;
        let old_grad = transport(&grad, &y)?;
        let old_dir = transport(&dir, &y)?;
        let diff = &next_grad.mu - &old_grad.mu;
        let beta = (next_grad.mu.dotc(&diff).re / gg).max(0.0);
        dir = TangentVector {
            mu: &old_dir.mu * num_complex::Complex64::new(beta, 0.0) - &next_grad.mu,
            base: y.clone(),
        };
        x = y;
        f = fy;
        grad = next_grad;
        trace.push(f);
    }

    Ok(RcgOutcome {
        rc: x.to_rc(),
        iterations,
        converged,
        objective_trace: trace,
        grad_norm_sqr: grad.norm_sqr(),
    })
}

fn negate(v: &TangentVector) -> TangentVector {
    TangentVector {
        mu: -&v.mu,
        base: v.base.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rc::random_rc;
    use crate::rc::tests::random_psd_form;
    use crate::system::CVector;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn ones(n: usize) -> ManifoldPoint {
        ManifoldPoint::new(CVector::from_element(n, Complex64::new(1.0, 0.0))).unwrap()
    }

    #[test]
    fn single_element_has_closed_form() {
        // With N = 1 the quadratic term is constant and the minimizer is −b/|b|.
        let c = CVector::from_element(1, Complex64::new(-0.3, 0.8));
        let a = CVector::from_element(1, Complex64::new(2.0, 0.0));
        let qf =
            QuadraticForm::from_hermitian(c.clone(), nalgebra::DMatrix::from_diagonal(&a)).unwrap();
        let out = rcg_minimize(&qf, &ones(1), 1e-12).unwrap();
        let expect = -c[0] / c[0].norm();
        // Angular error is bounded by ‖grad‖ over the curvature 2|c|.
        assert!((out.rc.values()[0] - expect).norm() <= 1e-6 / (2.0 * c[0].norm()) * 2.0);
        assert!(out.converged);
    }

    #[test]
    fn trace_is_monotone() {
        let qf = random_psd_form(3, 16, 8, 0.0).normalized();
        let out = rcg_minimize(&qf, &ones(16), 1e-10).unwrap();
        assert!(out.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(out.objective_trace.len(), out.iterations + 1);
    }

    #[test]
    fn converges_on_well_posed_problem() {
        let qf = random_psd_form(5, 8, 8, 0.1).normalized();
        let out = rcg_minimize(&qf, &ones(8), 1e-12).unwrap();
        assert!(out.converged);
        assert!(out.grad_norm_sqr <= 1e-12);
    }

    #[test]
    fn cap_is_reported() {
        let qf = random_psd_form(5, 8, 8, 0.1).normalized();
        let opts = RcgOptions {
            tol: 1e-30,
            max_iters: 3,
            ..RcgOptions::default()
        };
        let out = rcg_minimize_with(&qf, &ones(8), &opts).unwrap();
        assert!(!out.converged);
        assert!(out.iterations <= 3);
    }

    #[test]
    fn already_stationary_start_returns_immediately() {
        let c = CVector::from_element(2, Complex64::new(-1.0, 0.0));
        let qf = QuadraticForm::from_hermitian(c, nalgebra::DMatrix::zeros(2, 2)).unwrap();
        let out = rcg_minimize(&qf, &ones(2), 1e-12).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
    }

    #[test]
    fn beats_dense_random_sampling_for_three_elements() {
        let qf = random_psd_form(11, 3, 2, 0.0);
        let out = rcg_minimize(&qf, &ones(3), 1e-14).unwrap();
        let ours = qf.value(out.rc.values());
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut best = f64::INFINITY;
        let mut phi = CVector::zeros(3);
        for _ in 0..1_000_000 {
            for z in phi.iter_mut() {
                *z = Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI));
            }
            best = best.min(qf.value(&phi));
        }
        assert!(
            ours <= best + 1e-9 * best.abs().max(1.0),
            "{ours} vs {best}"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn never_worse_than_start(seed in any::<u64>(), n in 1usize..12) {
            let qf = random_psd_form(seed, n, n.div_ceil(2), 0.0).normalized();
            let start = ManifoldPoint::try_from(&random_rc(n, &mut ChaCha8Rng::seed_from_u64(seed))).unwrap();
            let out = rcg_minimize(&qf, &start, 1e-9).unwrap();
            prop_assert!(qf.value(out.rc.values()) <= qf.value(start.values()) + 1e-12);
            prop_assert!(out.rc.values().iter().all(|z| (z.norm() - 1.0).abs() <= 1e-12));
        }
    }
}
