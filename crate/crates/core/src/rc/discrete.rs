//! Discrete phase shifts `φ_n ∈ {e^{j2πk/τ}}`.

use num_complex::Complex64;
use std::f64::consts::PI;

use super::QuadraticForm;
use crate::error::{Error, Result};
use crate::system::{CVector, FeasibleSet, RcVector};

/// Largest candidate count [`brute_force_discrete`] will enumerate.
pub const BRUTE_FORCE_CAP: usize = 1 << 24;

fn check_tau(tau: u32) -> Result<()> {
    if tau < 2 {
        return Err(Error::config(
            "tau",
            format!("{tau} levels; need at least 2"),
        ));
    }
    Ok(())
}

/// Index of the level nearest to angle `theta` in radians. A phase exactly
/// halfway between two levels goes to the lower index.
pub fn quantize_phase(theta: f64, tau: u32) -> u32 {
    let x = theta.rem_euclid(2.0 * PI) * tau as f64 / (2.0 * PI);
    ((x - 0.5).ceil() as i64).rem_euclid(tau as i64) as u32
}

fn level(k: u32, tau: u32) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * k as f64 / tau as f64)
}

/// Rounds each phase of `phi` to the nearest of `tau` levels.
pub fn npp_project(phi: &RcVector, tau: u32) -> Result<RcVector> {
    check_tau(tau)?;
    let values = phi
        .values()
        .map(|z| level(quantize_phase(z.arg(), tau), tau));
    RcVector::new(values, FeasibleSet::Discrete(tau))
}

/// Exhaustive minimizer of `ḡ` over all `τ^N` discrete vectors.
pub fn brute_force_discrete(qf: &QuadraticForm, tau: u32) -> Result<RcVector> {
    check_tau(tau)?;
    let n = qf.dim();
    let candidates = (tau as f64).powi(n as i32);
    if candidates > BRUTE_FORCE_CAP as f64 {
        return Err(Error::SearchSpace {
            candidates,
            cap: BRUTE_FORCE_CAP,
        });
    }
    let levels: Vec<Complex64> = (0..tau).map(|k| level(k, tau)).collect();
    let mut idx = vec![0u32; n];
    let mut phi = CVector::from_element(n, levels[0]);
    let mut best = (qf.value(&phi), phi.clone());
    'outer: loop {
        // Odometer increment.
        let mut pos = 0;
        loop {
            if pos == n {
                break 'outer;
            }
            idx[pos] += 1;
            if idx[pos] == tau {
                idx[pos] = 0;
                phi[pos] = levels[0];
                pos += 1;
            } else {
                phi[pos] = levels[idx[pos] as usize];
                break;
            }
        }
        let v = qf.value(&phi);
        if v < best.0 {
            best = (v, phi.clone());
        }
    }
    RcVector::new(best.1, FeasibleSet::Discrete(tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rc::random_rc;
    use crate::rc::tests::random_psd_form;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    fn rc_from_degrees(d: &[f64]) -> RcVector {
        let v = CVector::from_iterator(
            d.len(),
            d.iter().map(|x| Complex64::from_polar(1.0, deg(*x))),
        );
        RcVector::new(v, FeasibleSet::UnitModulus).unwrap()
    }

    fn degrees(rc: &RcVector) -> Vec<f64> {
        rc.values()
            .iter()
            .map(|z| (z.arg().to_degrees().rem_euclid(360.0) * 1e6).round() / 1e6 % 360.0)
            .collect()
    }

    #[test]
    fn rounds_to_nearest_level() {
        let out = npp_project(
            &rc_from_degrees(&[10.0, 100.0, 200.0, 315.0 - 1e-6, 350.0]),
            4,
        )
        .unwrap();
        assert_eq!(degrees(&out), vec![0.0, 90.0, 180.0, 270.0, 0.0]);
    }

    #[test]
    fn halfway_goes_to_lower_level() {
        assert_eq!(quantize_phase(deg(45.0), 4), 0);
        assert_eq!(quantize_phase(deg(135.0), 4), 1);
        assert_eq!(quantize_phase(deg(315.0), 4), 3);
        assert_eq!(quantize_phase(deg(90.0), 2), 0);
        assert_eq!(quantize_phase(deg(-45.0), 4), 3);
    }

    #[test]
    fn output_is_tagged_discrete() {
        let out = npp_project(&rc_from_degrees(&[33.0]), 8).unwrap();
        assert_eq!(out.set(), FeasibleSet::Discrete(8));
        assert!(npp_project(&out, 1).is_err());
    }

    #[test]
    fn brute_force_rejects_large_spaces() {
        let qf = random_psd_form(1, 13, 2, 0.0);
        assert!(matches!(
            brute_force_discrete(&qf, 4),
            Err(Error::SearchSpace { .. })
        ));
    }

    #[test]
    fn brute_force_is_no_worse_than_rounding() {
        for seed in 0..20 {
            let qf = random_psd_form(seed, 5, 3, 0.0);
            let exact = brute_force_discrete(&qf, 4).unwrap();
            let rounded =
                npp_project(&random_rc(5, &mut ChaCha8Rng::seed_from_u64(seed)), 4).unwrap();
            assert!(qf.value(exact.values()) <= qf.value(rounded.values()) + 1e-12);
        }
    }

    #[test]
    fn brute_force_visits_every_candidate() {
        // A linear form whose minimizer is a known level pattern.
        let target = [3u32, 0, 2];
        let c = CVector::from_iterator(3, target.iter().map(|k| -level(*k, 4)));
        let qf = QuadraticForm::from_hermitian(c, super::super::CMatrix::zeros(3, 3)).unwrap();
        let best = brute_force_discrete(&qf, 4).unwrap();
        for (z, k) in best.values().iter().zip(target) {
            assert!((z - level(k, 4)).norm() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn rounding_error_is_at_most_half_a_step(seed in any::<u64>(), tau in 2u32..65, n in 1usize..30) {
            let rc = random_rc(n, &mut ChaCha8Rng::seed_from_u64(seed));
            let out = npp_project(&rc, tau).unwrap();
            let half = PI / tau as f64;
            for (a, b) in rc.values().iter().zip(out.values().iter()) {
                let diff = (a * b.conj()).arg().abs();
                prop_assert!(diff <= half + 1e-12);
            }
        }

        #[test]
        fn projection_is_idempotent(seed in any::<u64>(), tau in 2u32..65) {
            let rc = random_rc(8, &mut ChaCha8Rng::seed_from_u64(seed));
            let once = npp_project(&rc, tau).unwrap();
            let twice = npp_project(&once, tau).unwrap();
            for (a, b) in once.values().iter().zip(twice.values().iter()) {
                prop_assert!((a - b).norm() <= 1e-12);
            }
        }
    }
}
