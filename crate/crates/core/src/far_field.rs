//! Rician tapped-delay-line channels for the links between the two devices,
//! and their per-subcarrier frequency responses.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Rician parameters for one link class.
#[derive(Debug, Clone, PartialEq)]
pub struct RicianParams {
    pub k_factor: f64,
    /// Path loss at 1 m, in dB (negative for a loss).
    pub pathloss_ref_db: f64,
    pub pathloss_exponent: f64,
    /// Link distance in meters.
    pub distance: f64,
    /// Number of nonzero taps (maximum delay spread + 1).
    pub n_taps: usize,
}

impl RicianParams {
    /// Linear large-scale gain `ζ · s^(−∂)`.
    pub fn pathloss(&self) -> f64 {
        10f64.powf(self.pathloss_ref_db / 10.0) * self.distance.powf(-self.pathloss_exponent)
    }

    pub fn validate(&self, n_subcarriers: usize, cp_len: usize) -> Result<()> {
        if !(self.k_factor.is_finite() && self.k_factor >= 0.0) {
            return Err(Error::config("k_factor", "must be finite and nonnegative"));
        }
        if !(self.distance.is_finite() && self.distance > 0.0) {
            return Err(Error::config("device_distance_m", "must be positive"));
        }
        if self.n_taps == 0 || self.n_taps > cp_len + 1 {
            return Err(Error::config(
                "max_delay_spread",
                format!("tap count {} must lie in 1..={}", self.n_taps, cp_len + 1),
            ));
        }
        if self.n_taps > n_subcarriers {
            return Err(Error::config(
                "max_delay_spread",
                format!(
                    "tap count {} exceeds {} subcarriers",
                    self.n_taps, n_subcarriers
                ),
            ));
        }
        Ok(())
    }
}

/// Time-domain taps of one scalar link, zero padded to the DFT size.
#[derive(Debug, Clone, PartialEq)]
pub struct TapChannel {
    taps: Vec<Complex64>,
    n_taps: usize,
}

impl TapChannel {
    pub fn new(taps: Vec<Complex64>, n_taps: usize) -> Result<Self> {
        if n_taps > taps.len() {
            return Err(Error::Dimension {
                what: "tap channel",
                expected: n_taps,
                found: taps.len(),
            });
        }
        if taps[n_taps..]
            .iter()
            .any(|t| *t != Complex64::new(0.0, 0.0))
        {
            return Err(Error::Numerical(
                "taps past the delay spread must be zero".into(),
            ));
        }
        Ok(Self { taps, n_taps })
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn n_taps(&self) -> usize {
        self.n_taps
    }

    /// DFT size.
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }

    /// Response on every subcarrier, `Γ_m = Σ_l h_l e^{−j2πml/M}`.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut buf = self.taps.clone();
        FftPlanner::new()
            .plan_fft_forward(buf.len())
            .process(&mut buf);
        buf
    }
}

/// Draws one Rician realization with uniform power over the first `n_taps`
/// taps and the line-of-sight component in tap 0 with random phase.
pub fn draw_rician_taps<R: Rng + ?Sized>(
    params: &RicianParams,
    n_subcarriers: usize,
    rng: &mut R,
) -> Result<TapChannel> {
    if params.n_taps == 0 || params.n_taps > n_subcarriers {
        return Err(Error::config(
            "max_delay_spread",
            format!(
                "tap count {} must lie in 1..={n_subcarriers}",
                params.n_taps
            ),
        ));
    }
    let scale = params.pathloss().sqrt();
    let k = params.k_factor;
    let (los_w, nlos_w) = if k.is_infinite() {
        (1.0, 0.0)
    } else {
        ((k / (1.0 + k)).sqrt(), (1.0 / (1.0 + k)).sqrt())
    };
    // CN(0, 1/n_taps) per tap: each quadrature has variance 1/(2 n_taps).
    let nlos_sigma = (0.5 / params.n_taps as f64).sqrt();

    let mut taps = vec![Complex64::new(0.0, 0.0); n_subcarriers];
    let los_phase = rng.gen_range(0.0..2.0 * PI);
    for (l, tap) in taps.iter_mut().take(params.n_taps).enumerate() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let mut value = nlos_w * nlos_sigma * Complex64::new(re, im);
        if l == 0 {
            value += los_w * Complex64::from_polar(1.0, los_phase);
        }
        *tap = scale * value;
    }
    TapChannel::new(taps, params.n_taps)
}

/// Response of `ch` on subcarrier `m` alone.
pub fn cfr_at_subcarrier(ch: &TapChannel, m: usize) -> Result<Complex64> {
    let size = ch.len();
    if m >= size {
        return Err(Error::IndexOutOfRange {
            what: "subcarrier",
            index: m,
            len: size,
        });
    }
    Ok(ch.taps[..ch.n_taps]
        .iter()
        .enumerate()
        .map(|(l, tap)| {
            let angle = -2.0 * PI * ((m * l) % size) as f64 / size as f64;
            tap * Complex64::from_polar(1.0, angle)
        })
        .sum())
}

/// Independent taps for each element of a vector link.
pub fn draw_vector_link<R: Rng + ?Sized>(
    params: &RicianParams,
    n_elements: usize,
    n_subcarriers: usize,
    rng: &mut R,
) -> Result<Vec<TapChannel>> {
    (0..n_elements)
        .map(|_| draw_rician_taps(params, n_subcarriers, rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(k: f64) -> RicianParams {
        RicianParams {
            k_factor: k,
            pathloss_ref_db: -30.0,
            pathloss_exponent: 2.0,
            distance: 1000.0,
            n_taps: 6,
        }
    }

    /// Textbook O(M·L) DFT, kept apart from both library routes.
    fn brute_dft(taps: &[Complex64]) -> Vec<Complex64> {
        let m_len = taps.len();
        (0..m_len)
            .map(|m| {
                taps.iter()
                    .enumerate()
                    .map(|(l, t)| {
                        let a = -2.0 * PI * (m as f64) * (l as f64) / m_len as f64;
                        t * Complex64::new(a.cos(), a.sin())
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn pathloss_of_default_link() {
        assert_relative_eq!(params(6.0).pathloss(), 1e-9, max_relative = 1e-12);
    }

    #[test]
    fn pure_los_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = draw_rician_taps(&params(f64::INFINITY), 128, &mut rng).unwrap();
        assert_relative_eq!(ch.taps()[0].norm_sqr(), 1e-9, max_relative = 1e-12);
        assert!(ch.taps()[1..].iter().all(|t| t.norm() == 0.0));
    }

    #[test]
    fn nlos_only_energy_is_pathloss_on_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 20_000;
        let energies: Vec<f64> = (0..trials)
            .map(|_| {
                draw_rician_taps(&params(0.0), 128, &mut rng)
                    .unwrap()
                    .energy()
                    / 1e-9
            })
            .collect();
        let mean = energies.iter().sum::<f64>() / trials as f64;
        let var = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let stderr = (var / trials as f64).sqrt();
        assert!(
            (mean - 1.0).abs() < 3.0 * stderr,
            "mean {mean} stderr {stderr}"
        );
    }

    #[test]
    fn rician_energy_is_pathloss_on_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let trials = 20_000;
        let energies: Vec<f64> = (0..trials)
            .map(|_| {
                draw_rician_taps(&params(9.0), 128, &mut rng)
                    .unwrap()
                    .energy()
                    / 1e-9
            })
            .collect();
        let mean = energies.iter().sum::<f64>() / trials as f64;
        let var = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        assert!((mean - 1.0).abs() < 3.0 * (var / trials as f64).sqrt());
    }

    #[test]
    fn taps_past_delay_spread_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = draw_rician_taps(&params(6.0), 128, &mut rng).unwrap();
        assert_eq!(ch.len(), 128);
        assert!(ch.taps()[6..]
            .iter()
            .all(|t| *t == Complex64::new(0.0, 0.0)));
        assert!(TapChannel::new(vec![Complex64::new(1.0, 0.0); 4], 2).is_err());
    }

    #[test]
    fn same_seed_same_taps() {
        let a = draw_rician_taps(&params(6.0), 64, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = draw_rician_taps(&params(6.0), 64, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let mut taps = vec![Complex64::new(0.0, 0.0); 16];
        taps[0] = Complex64::new(1.0, 0.0);
        let ch = TapChannel::new(taps, 1).unwrap();
        for m in 0..16 {
            let g = cfr_at_subcarrier(&ch, m).unwrap();
            assert_relative_eq!(g.re, 1.0);
            assert_relative_eq!(g.im, 0.0);
        }
    }

    #[test]
    fn dft_basis_vector_hits_one_bin() {
        let size = 16;
        let k = 3;
        let taps: Vec<Complex64> = (0..size)
            .map(|l| Complex64::from_polar(1.0, 2.0 * PI * (k * l) as f64 / size as f64))
            .collect();
        let ch = TapChannel::new(taps, size).unwrap();
        let spec = ch.spectrum();
        for (m, g) in spec.iter().enumerate() {
            if m == k {
                assert_relative_eq!(g.norm(), size as f64, max_relative = 1e-12);
            } else {
                assert!(g.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn both_routes_match_brute_force_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = draw_rician_taps(&params(6.0), 128, &mut rng).unwrap();
        let oracle = brute_dft(ch.taps());
        let spec = ch.spectrum();
        let scale = oracle.iter().map(|g| g.norm()).fold(0.0, f64::max);
        for m in 0..128 {
            let direct = cfr_at_subcarrier(&ch, m).unwrap();
            assert!((direct - oracle[m]).norm() <= 1e-12 * scale);
            assert!((spec[m] - oracle[m]).norm() <= 1e-12 * scale);
        }
        assert!(cfr_at_subcarrier(&ch, 128).is_err());
    }

    #[test]
    fn tap_count_is_validated() {
        let mut p = params(6.0);
        assert!(p.validate(128, 5).is_ok());
        p.n_taps = 7;
        assert!(p.validate(128, 5).is_err());
        p.n_taps = 0;
        assert!(p.validate(128, 5).is_err());
    }

    proptest! {
        #[test]
        fn parseval(seed in any::<u64>(), k in 0.0..20.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = draw_rician_taps(&params(k), 128, &mut rng).unwrap();
            let freq: f64 = ch.spectrum().iter().map(|g| g.norm_sqr()).sum();
            let time = 128.0 * ch.energy();
            prop_assert!((freq - time).abs() <= 1e-10 * time);
        }
    }
}
