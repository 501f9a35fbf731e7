//! Amplitude-and-phase case `|φ_n| ≤ 1`.
//!
//! The problem is a convex QCQP. Its Lagrange dual in the per-element
//! multipliers `ν ≥ 0` is smooth and concave,
//!
//! ```text
//! D(ν) = −bᴴ (A + diag ν)⁻¹ b − Σ ν_n,   b = (c + wᴴ)/2,
//! ```
//!
//! and the primal point is recovered as `φ = −(A + diag ν)⁻¹ b`. `D` is
//! maximized with a projected Newton method on the active set.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::manifold::ManifoldPoint;
use super::rcg::{rcg_minimize_with, RcgOptions};
use super::{CMatrix, QuadraticForm};
use crate::error::{Error, Result};
use crate::system::{CVector, FeasibleSet, RcVector};

const MAX_NEWTON: usize = 200;
const MAX_HALVINGS: usize = 60;
const GRAD_TOL: f64 = 1e-10;
const ARMIJO: f64 = 1e-4;
const RIDGE: f64 = 1e-12;
const MAX_STALLED: usize = 3;
const STALL_ZONE: f64 = 1e-6;
const TINY_STEP: f64 = 1e-9;
const POLISH_TOL: f64 = 1e-20;
const POLISH_ITERS: usize = 2000;
const MAX_SWEEPS: usize = 500;
const SWEEP_TOL: f64 = 1e-15;
const ON_CIRCLE: f64 = 1e-9;

/// Minimizer together with the certificate that it is one.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealSolution {
    pub rc: RcVector,
    /// Multipliers of `|φ_n|² ≤ 1`, in the units of the input form.
    pub multipliers: Vec<f64>,
    /// `max_n ν_n·||φ_n|² − 1|` on the normalized form.
    pub complementary_slackness: f64,
    /// Primal value minus the dual bound, on the normalized form.
    pub duality_gap: f64,
    pub newton_steps: usize,
}

/// Minimizes `ḡ` over `|φ_n| ≤ 1`.
pub fn solve_ideal(qf: &QuadraticForm) -> Result<RcVector> {
    Ok(solve_ideal_kkt(qf)?.rc)
}

struct DualPoint {
    phi: CVector,
    inverse: CMatrix,
    value: f64,
}

fn evaluate(a: &CMatrix, b: &CVector, nu: &[f64], ridge: f64) -> Option<DualPoint> {
    let mut m = a.clone();
    for (i, v) in nu.iter().enumerate() {
        m[(i, i)] += Complex64::new(v + ridge, 0.0);
    }
    let chol = m.cholesky()?;
    let phi = -chol.solve(b);
    let value = b.dotc(&phi).re - nu.iter().sum::<f64>();
    if !value.is_finite() {
        return None;
    }
    Some(DualPoint {
        phi,
        inverse: chol.inverse(),
        value,
    })
}

fn slack(phi: &CVector) -> Vec<f64> {
    phi.iter().map(|z| z.norm_sqr() - 1.0).collect()
}

/// Length of the projected gradient step, `max_n |max(0, ν_n + g_n) − ν_n|`.
fn kkt_residual(nu: &[f64], g: &[f64]) -> f64 {
    nu.iter()
        .zip(g)
        .map(|(v, gn)| ((v + gn).max(0.0) - v).abs())
        .fold(0.0, f64::max)
}

pub fn solve_ideal_kkt(qf: &QuadraticForm) -> Result<IdealSolution> {
    solve_ideal_from(qf, None)
}

/// As [`solve_ideal_kkt`], also refining from a known feasible point.
pub fn solve_ideal_from(qf: &QuadraticForm, start: Option<&CVector>) -> Result<IdealSolution> {
    let n = qf.dim();
    let scale = qf.scale();
    if n == 0 || scale == 0.0 {
        return Ok(IdealSolution {
            rc: RcVector::new(CVector::zeros(n), FeasibleSet::Ideal)?,
            multipliers: vec![0.0; n],
            complementary_slackness: 0.0,
            duality_gap: 0.0,
            newton_steps: 0,
        });
    }
    let norm = qf.normalized();
    let a = norm.a().clone();
    let b = (norm.c() + norm.w().map(|z| z.conj())) * Complex64::new(0.5, 0.0);
    let trace = a.diagonal().iter().map(|z| z.re).sum::<f64>() / n as f64;
    let ridge = RIDGE * trace.max(1.0);

    let mut nu = vec![0.0; n];
    let mut point = match evaluate(&a, &b, &nu, ridge) {
        Some(p) => p,
        None => {
            nu = vec![trace.max(1.0); n];
            evaluate(&a, &b, &nu, ridge)
                .ok_or_else(|| Error::Numerical("dual matrix is not positive definite".into()))?
        }
    };

    // Single-coordinate estimate of the multipliers that pull each violator
    // back to the circle.
    let mut warm = nu.clone();
    for i in 0..n {
        let r = point.phi[i].norm();
        if r > 1.0 {
            warm[i] = nu[i] + (r - 1.0) / point.inverse[(i, i)].re.max(f64::MIN_POSITIVE);
        }
    }
    if warm != nu {
        if let Some(p) = evaluate(&a, &b, &warm, ridge) {
            nu = warm;
            point = p;
        }
    }

    let mut steps = 0;
    let mut g = slack(&point.phi);
    let mut best_residual = kkt_residual(&nu, &g);
    let mut stalled = 0;
    while kkt_residual(&nu, &g) > GRAD_TOL && steps < MAX_NEWTON {
        steps += 1;
        // Multipliers within `eps` of zero and pushed down are treated as
        // active and sent to zero.
        let eps = best_residual.min(1e-3);
        let free: Vec<usize> = (0..n).filter(|&i| g[i] > 0.0 || nu[i] > eps).collect();
        let k = free.len();
        // Negated dual Hessian restricted to the free set.
        let mut h = DMatrix::<f64>::from_fn(k, k, |r, s| {
            let (i, j) = (free[r], free[s]);
            2.0 * (point.phi[i].conj() * point.inverse[(i, j)] * point.phi[j]).re
        });
        let damp = 1e-14 * h.diagonal().iter().cloned().fold(0.0, f64::max).max(1e-300);
        for r in 0..k {
            h[(r, r)] += damp;
        }
        let rhs = DVector::from_iterator(k, free.iter().map(|&i| g[i]));
        let step = h.cholesky().map(|c| c.solve(&rhs)).unwrap_or(rhs);
        let mut dir: Vec<f64> = nu.iter().map(|v| -v).collect();
        for (r, &i) in free.iter().enumerate() {
            dir[i] = step[r];
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = nu
                .iter()
                .zip(&dir)
                .map(|(v, d)| (v + t * d).max(0.0))
                .collect();
            let gain: f64 = trial
                .iter()
                .zip(&nu)
                .zip(&g)
                .map(|((x, v), gn)| gn * (x - v))
                .sum();
            if let Some(p) = evaluate(&a, &b, &trial, ridge) {
                if p.value >= point.value + ARMIJO * gain {
                    accepted = Some((trial, p));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((trial, p)) = accepted else { break };
        nu = trial;
        point = p;
        g = slack(&point.phi);
        // On badly conditioned forms round-off can floor the residual above
        // the tolerance; stop once it no longer falls and steps have collapsed.
        let residual = kkt_residual(&nu, &g);
        if residual < best_residual {
            best_residual = residual;
            stalled = 0;
        } else if residual < STALL_ZONE || t < TINY_STEP {
            stalled += 1;
            if stalled >= MAX_STALLED {
                break;
            }
        }
    }

    // Remove round-off excursions past the circle.
    let dual_phi = point.phi.map(clip);
    let dual_value = norm.value(&dual_phi);
    // When `A + diag(ν)` is nearly singular the dual optimum pins down the
    // value but not the point, so candidates are refined in the primal.
    let mut candidates = vec![coordinate_descent(&a, &b, dual_phi.clone())];
    if nu.iter().all(|v| *v > 0.0) {
        candidates.push(descend_on_circle(&norm, &dual_phi));
    }
    if let Some(start) = start {
        candidates.push(coordinate_descent(&a, &b, start.map(clip)));
    }
    let best = candidates
        .into_iter()
        .min_by(|x, y| norm.value(x).total_cmp(&norm.value(y)))
        .expect("at least one candidate");
    let (phi, nu) = if norm.value(&best) < dual_value {
        let multipliers = stationarity_multipliers(&a, &b, &best);
        (best, multipliers)
    } else {
        (dual_phi, nu)
    };
    let g = slack(&phi);
    let slackness = nu
        .iter()
        .zip(&g)
        .map(|(v, gn)| v * gn.abs())
        .fold(0.0, f64::max);
    Ok(IdealSolution {
        duality_gap: (norm.value(&phi) - point.value).max(0.0),
        rc: RcVector::new(phi, FeasibleSet::Ideal)?,
        multipliers: nu.iter().map(|v| v * scale).collect(),
        complementary_slackness: slackness,
        newton_steps: steps,
    })
}

fn clip(z: Complex64) -> Complex64 {
    if z.norm() > 1.0 {
        z / z.norm()
    } else {
        z
    }
}

/// Exact minimization over one disk at a time, swept until the value settles.
fn coordinate_descent(a: &CMatrix, b: &CVector, mut phi: CVector) -> CVector {
    let n = phi.len();
    let mut r = a * &phi + b;
    let value = |phi: &CVector, r: &CVector| phi.dotc(r).re + phi.dotc(b).re;
    let mut last = value(&phi, &r);
    for _ in 0..MAX_SWEEPS {
        for i in 0..n {
            let aii = a[(i, i)].re;
            let rest = r[i] - a[(i, i)] * phi[i];
            let z = if aii > 0.0 {
                clip(-rest / aii)
            } else if rest.norm() > 0.0 {
                -rest / rest.norm()
            } else {
                phi[i]
            };
            let delta = z - phi[i];
            if delta != Complex64::new(0.0, 0.0) {
                r.axpy(delta, &a.column(i), Complex64::new(1.0, 0.0));
                phi[i] = z;
            }
        }
        let next = value(&phi, &r);
        if last - next <= SWEEP_TOL * next.abs().max(1.0) {
            break;
        }
        last = next;
    }
    phi
}

fn descend_on_circle(qf: &QuadraticForm, phi: &CVector) -> CVector {
    let opts = RcgOptions {
        tol: POLISH_TOL,
        max_iters: POLISH_ITERS,
        ..RcgOptions::default()
    };
    match rcg_minimize_with(qf, &ManifoldPoint::project(phi), &opts) {
        Ok(out) => out.rc.values().clone(),
        Err(_) => phi.clone(),
    }
}

/// Multipliers read off `Aφ + b + diag(ν)φ = 0` on the circle, zero inside it.
fn stationarity_multipliers(a: &CMatrix, b: &CVector, phi: &CVector) -> Vec<f64> {
    let r = a * phi + b;
    phi.iter()
        .zip(r.iter())
        .map(|(z, ri)| {
            if z.norm() >= 1.0 - ON_CIRCLE {
                (-(z.conj() * ri).re).max(0.0)
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rc::tests::{cn, random_psd_form};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disk(z: Complex64) -> Complex64 {
        if z.norm() > 1.0 {
            z / z.norm()
        } else {
            z
        }
    }

    /// Accelerated projected gradient on the product of unit disks.
    fn fista(qf: &QuadraticForm, iters: usize) -> CVector {
        let lmax = qf
            .a()
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        let step = 1.0 / (2.0 * lmax).max(1e-12);
        let n = qf.dim();
        let mut x = CVector::zeros(n);
        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut best = x.clone();
        for _ in 0..iters {
            let g = qf.euclidean_gradient(&y);
            let next = (&y - g * Complex64::new(step, 0.0)).map(disk);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mom = (t - 1.0) / t_next;
            y = &next + (&next - &x) * Complex64::new(mom, 0.0);
            if qf.value(&next) > qf.value(&x) {
                // Adaptive restart.
                y = next.clone();
                t = 1.0;
            } else {
                t = t_next;
            }
            x = next;
            if qf.value(&x) < qf.value(&best) {
                best = x.clone();
            }
        }
        best
    }

    #[test]
    fn interior_minimizer_is_unconstrained_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 4;
        let b = CMatrix::from_fn(n, n, |_, _| cn(&mut rng));
        let a = &b * b.adjoint() + CMatrix::identity(n, n) * Complex64::new(5.0, 0.0);
        let a = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
        let c = CVector::from_fn(n, |_, _| cn(&mut rng) * 0.1);
        let qf = QuadraticForm::from_hermitian(c.clone(), a.clone()).unwrap();
        let sol = solve_ideal_kkt(&qf).unwrap();
        let expect = -a.cholesky().unwrap().solve(&c);
        assert!((sol.rc.values() - expect).norm() <= 1e-10);
        assert!(sol.multipliers.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn diagonal_form_has_closed_form() {
        let a = CMatrix::from_diagonal(&CVector::from_vec(vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(0.5, 0.0),
            Complex64::new(1.0, 0.0),
        ]));
        let c = CVector::from_vec(vec![
            Complex64::new(0.3, 0.4),
            Complex64::new(-3.0, 1.0),
            Complex64::new(0.0, 1.0),
        ]);
        let qf = QuadraticForm::from_hermitian(c.clone(), a.clone()).unwrap();
        let sol = solve_ideal(&qf).unwrap();
        for i in 0..3 {
            let expect = disk(-c[i] / a[(i, i)]);
            assert!(
                (sol.values()[i] - expect).norm() <= 1e-9,
                "{i}: {} vs {expect}",
                sol.values()[i]
            );
        }
    }

    #[test]
    fn linear_form_puts_every_element_on_the_circle() {
        let c = CVector::from_vec(vec![Complex64::new(1.0, 1.0), Complex64::new(-2.0, 0.5)]);
        let qf = QuadraticForm::from_hermitian(c.clone(), CMatrix::zeros(2, 2)).unwrap();
        let sol = solve_ideal(&qf).unwrap();
        for i in 0..2 {
            assert!((sol.values()[i] + c[i] / c[i].norm()).norm() <= 1e-6);
        }
    }

    #[test]
    fn zero_form_returns_zero() {
        let qf = QuadraticForm::from_hermitian(CVector::zeros(3), CMatrix::zeros(3, 3)).unwrap();
        assert_eq!(solve_ideal(&qf).unwrap().values(), &CVector::zeros(3));
    }

    #[test]
    fn matches_projected_gradient_oracle() {
        for seed in 0..20 {
            let n = 2 + (seed as usize % 5);
            let qf = random_psd_form(seed, n, 1 + seed as usize % n, 0.05);
            let sol = solve_ideal_kkt(&qf).unwrap();
            let oracle = fista(&qf, 20_000);
            let (ours, theirs) = (qf.value(sol.rc.values()), qf.value(&oracle));
            assert!(
                ours <= theirs + 1e-8 * theirs.abs().max(1.0),
                "seed {seed}: {ours} vs {theirs}"
            );
            assert!(sol.complementary_slackness <= 1e-8, "seed {seed}: {sol:?}");
            assert!(sol.rc.values().iter().all(|z| z.norm() <= 1.0 + 1e-9));
        }
    }

    #[test]
    fn rank_one_form_is_solved() {
        let qf = random_psd_form(77, 12, 1, 0.0);
        let sol = solve_ideal_kkt(&qf).unwrap();
        let oracle = fista(&qf, 50_000);
        assert!(qf.value(sol.rc.values()) <= qf.value(&oracle) + 1e-8 * qf.value(&oracle).abs());
    }

    #[test]
    fn scale_does_not_change_the_minimizer() {
        let qf = random_psd_form(9, 5, 3, 0.01);
        let tiny = QuadraticForm::new(
            qf.w() * Complex64::new(1e-13, 0.0),
            qf.c() * Complex64::new(1e-13, 0.0),
            qf.a() * Complex64::new(1e-13, 0.0),
        )
        .unwrap();
        let (x, y) = (solve_ideal(&qf).unwrap(), solve_ideal(&tiny).unwrap());
        assert!((x.values() - y.values()).norm() <= 1e-9);
    }

    #[test]
    fn multipliers_satisfy_stationarity() {
        let qf = random_psd_form(4, 6, 2, 0.0);
        let sol = solve_ideal_kkt(&qf).unwrap();
        let phi = sol.rc.values();
        let mut grad = qf.euclidean_gradient(phi);
        for i in 0..6 {
            grad[i] += 2.0 * sol.multipliers[i] * phi[i];
        }
        let scale = qf.scale();
        assert_relative_eq!(grad.norm() / scale, 0.0, epsilon = 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn no_sampled_feasible_point_is_better(seed in any::<u64>(), n in 1usize..7) {
            let qf = random_psd_form(seed, n, n.div_ceil(2), 0.0);
            let best = qf.value(solve_ideal(&qf).unwrap().values());
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            for _ in 0..200 {
                let phi = CVector::from_fn(n, |_, _| {
                    Complex64::from_polar(rng.gen_range(0.0f64..1.0).sqrt(), rng.gen_range(0.0..6.3))
                });
                prop_assert!(best <= qf.value(&phi) + 1e-9 * best.abs().max(1.0));
            }
        }
    }
}
