//! Scenario configuration and channel construction.
//!
//! Both devices use the same layout: transmit and receive antennas above a
//! surface centered at the origin of their own frame. The near-field links
//! (self-interference, antenna to own surface) follow from geometry alone;
//! every link between the two devices is Rician and drawn per trial.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ao::{AoOptions, RcCase};
use crate::error::{Error, Result};
use crate::far_field::{draw_rician_taps, draw_vector_link, RicianParams, TapChannel};
use crate::near_field::{
    antenna_to_surface_cfr, near_field_violations, si_cfr, CarrierPlan, Point3, SurfaceGeometry,
};
use crate::rc::RcgOptions;
use crate::system::{assemble_cascades, dbm_to_watts, CVector, ChannelSet, LinkSet};

/// Every knob of one experiment. Units are in the field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub center_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub n_subcarriers: usize,
    pub cp_len: usize,
    /// Largest tap delay; links have `max_delay_spread + 1` taps.
    pub max_delay_spread: usize,
    /// Surface cells; snapped to the nearest perfect square.
    pub n_cells: usize,
    pub p1_dbm: f64,
    pub p2_dbm: f64,
    pub noise_dbm: f64,
    /// Reflection efficiency of the local surface.
    pub eta: f64,
    /// Reflection efficiency of the remote surface.
    pub beta: f64,
    pub tx_x_m: f64,
    pub tx_y_m: f64,
    pub tx_z_m: f64,
    pub rx_x_m: f64,
    pub rx_y_m: f64,
    pub rx_z_m: f64,
    pub device_distance_m: f64,
    /// Rician factor of the direct antenna-to-antenna link.
    pub k_direct: f64,
    /// Rician factor of antenna-to-surface links between devices.
    pub k_surface: f64,
    pub pathloss_ref_db: f64,
    pub pathloss_exponent: f64,
    /// Cell side is the subcarrier wavelength over this number.
    pub cell_side_fraction: f64,
    /// Receive aperture side for the self-interference link, as a fraction
    /// of the center wavelength.
    pub si_aperture_fraction: f64,
    /// Suppression assumed for full duplex without surfaces, in dB.
    pub baseline_sic_db: f64,
    pub case: RcCase,
    /// Stop tolerance on the squared Riemannian gradient norm.
    pub rcg_tol: f64,
    pub rcg_max_iters: usize,
    pub ao_tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub trials: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            center_freq_hz: 5.8e9,
            bandwidth_hz: 20e6,
            n_subcarriers: 128,
            cp_len: 5,
            max_delay_spread: 5,
            n_cells: 36,
            p1_dbm: 0.0,
            p2_dbm: 0.0,
            noise_dbm: -110.0,
            eta: 0.8,
            beta: 0.8,
            tx_x_m: -0.02,
            tx_y_m: 0.0,
            tx_z_m: 0.04,
            rx_x_m: 0.02,
            rx_y_m: 0.0,
            rx_z_m: 0.04,
            device_distance_m: 1000.0,
            k_direct: 6.0,
            k_surface: 9.0,
            pathloss_ref_db: -30.0,
            pathloss_exponent: 2.0,
            cell_side_fraction: 5.0,
            si_aperture_fraction: 5.0,
            baseline_sic_db: 87.0,
            case: RcCase::Ideal,
            rcg_tol: 1e-7,
            rcg_max_iters: 1000,
            ao_tol: 1e-6,
            max_iters: 50,
            seed: 0,
            trials: 20,
        }
    }
}

/// Nearest perfect square to `n`, at least 1.
pub fn snap_to_square(n: usize) -> usize {
    let side = ((n as f64).sqrt().round() as usize).max(1);
    side * side
}

fn positive(field: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::config(
            field,
            format!("{v} is not a positive number"),
        ));
    }
    Ok(())
}

fn finite(field: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::config(field, format!("{v} is not finite")));
    }
    Ok(())
}

impl ScenarioConfig {
    /// Checks every field and returns a copy with `n_cells` snapped.
    pub fn validated(&self) -> Result<Self> {
        positive("center_freq_hz", self.center_freq_hz)?;
        positive("bandwidth_hz", self.bandwidth_hz)?;
        if self.n_subcarriers == 0 {
            return Err(Error::config("n_subcarriers", "must be at least 1"));
        }
        if self.max_delay_spread > self.cp_len {
            return Err(Error::config(
                "max_delay_spread",
                format!("{} exceeds cp_len {}", self.max_delay_spread, self.cp_len),
            ));
        }
        if self.max_delay_spread >= self.n_subcarriers {
            return Err(Error::config(
                "max_delay_spread",
                "must be below n_subcarriers",
            ));
        }
        if self.n_cells == 0 {
            return Err(Error::config("n_cells", "must be at least 1"));
        }
        for (field, v) in [
            ("p1_dbm", self.p1_dbm),
            ("p2_dbm", self.p2_dbm),
            ("noise_dbm", self.noise_dbm),
            ("pathloss_ref_db", self.pathloss_ref_db),
            ("pathloss_exponent", self.pathloss_exponent),
            ("baseline_sic_db", self.baseline_sic_db),
        ] {
            finite(field, v)?;
        }
        for (field, v) in [("eta", self.eta), ("beta", self.beta)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(field, format!("{v} outside (0, 1]")));
            }
        }
        for (field, p) in [("tx_z_m", self.tx()), ("rx_z_m", self.rx())] {
            if !p.is_finite() || p.z <= 0.0 {
                return Err(Error::config(
                    field,
                    "antenna needs finite coordinates and height z > 0",
                ));
            }
        }
        if self.tx().distance(&self.rx()) == 0.0 {
            return Err(Error::config(
                "rx_x_m",
                "receive antenna coincides with transmit antenna",
            ));
        }
        positive("device_distance_m", self.device_distance_m)?;
        for (field, k) in [("k_direct", self.k_direct), ("k_surface", self.k_surface)] {
            if k.is_nan() || k < 0.0 {
                return Err(Error::config(field, format!("{k} is negative")));
            }
        }
        positive("cell_side_fraction", self.cell_side_fraction)?;
        positive("si_aperture_fraction", self.si_aperture_fraction)?;
        if let RcCase::Discrete(tau) = self.case {
            if tau < 2 {
                return Err(Error::config("case", "discrete phases need tau >= 2"));
            }
        }
        positive("rcg_tol", self.rcg_tol)?;
        positive("ao_tol", self.ao_tol)?;
        for (field, v) in [
            ("rcg_max_iters", self.rcg_max_iters),
            ("max_iters", self.max_iters),
            ("trials", self.trials),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        CarrierPlan::new(
            self.center_freq_hz,
            self.bandwidth_hz,
            self.n_subcarriers,
            self.cp_len,
        )
        .map_err(|e| Error::config("bandwidth_hz", e.to_string()))?;

        let mut out = self.clone();
        out.n_cells = snap_to_square(self.n_cells);
        if out.n_cells != self.n_cells {
            log::info!(
                "n_cells {} snapped to the square grid {}",
                self.n_cells,
                out.n_cells
            );
        }
        Ok(out)
    }

    pub fn tx(&self) -> Point3 {
        Point3::new(self.tx_x_m, self.tx_y_m, self.tx_z_m)
    }

    pub fn rx(&self) -> Point3 {
        Point3::new(self.rx_x_m, self.rx_y_m, self.rx_z_m)
    }

    pub fn plan(&self) -> Result<CarrierPlan> {
        CarrierPlan::new(
            self.center_freq_hz,
            self.bandwidth_hz,
            self.n_subcarriers,
            self.cp_len,
        )
    }

    pub fn p1_watts(&self) -> f64 {
        dbm_to_watts(self.p1_dbm)
    }

    pub fn p2_watts(&self) -> f64 {
        dbm_to_watts(self.p2_dbm)
    }

    pub fn noise_watts(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    pub fn ao_options(&self) -> AoOptions {
        AoOptions {
            max_iters: self.max_iters,
            tol: self.ao_tol,
            rcg: RcgOptions {
                tol: self.rcg_tol,
                max_iters: self.rcg_max_iters,
                ..RcgOptions::default()
            },
        }
    }

    fn rician(&self, k_factor: f64) -> RicianParams {
        RicianParams {
            k_factor,
            pathloss_ref_db: self.pathloss_ref_db,
            pathloss_exponent: self.pathloss_exponent,
            distance: self.device_distance_m,
            n_taps: self.max_delay_spread + 1,
        }
    }

    /// Generator of trial `trial`; trials are seeded `seed + trial`.
    pub fn trial_rng(&self, trial: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(trial as u64))
    }
}

/// Links fixed by geometry, shared by both devices and all trials.
#[derive(Debug, Clone, PartialEq)]
pub struct NearFieldLinks {
    pub si: Vec<Complex64>,
    pub tx_surface: Vec<CVector>,
    pub rx_surface: Vec<CVector>,
}

/// Builds the geometric links of a validated configuration.
pub fn near_field_links(cfg: &ScenarioConfig) -> Result<NearFieldLinks> {
    let plan = cfg.plan()?;
    let geom = SurfaceGeometry::wavelength_scaled(cfg.n_cells, &plan, cfg.cell_side_fraction)?;
    let aperture = (plan.center_wavelength() / cfg.si_aperture_fraction).powi(2);
    let (tx, rx) = (cfg.tx(), cfg.rx());
    for (name, antenna) in [("tx", &tx), ("rx", &rx)] {
        let bad = near_field_violations(antenna, 0, &geom, &plan)?;
        if !bad.is_empty() {
            log::warn!(
                "{name} antenna is outside the radiating near field of {} of {} cells",
                bad.len(),
                cfg.n_cells
            );
        }
    }
    let m_total = cfg.n_subcarriers;
    let mut si = Vec::with_capacity(m_total);
    let mut tx_surface = Vec::with_capacity(m_total);
    let mut rx_surface = Vec::with_capacity(m_total);
    for m in 0..m_total {
        si.push(si_cfr(&tx, &rx, m, &plan, aperture)?);
        tx_surface.push(antenna_to_surface_cfr(&tx, m, &geom, &plan)?);
        rx_surface.push(antenna_to_surface_cfr(&rx, m, &geom, &plan)?);
    }
    Ok(NearFieldLinks {
        si,
        tx_surface,
        rx_surface,
    })
}

/// Channels seen by each device's receiver in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    /// Device 1 receiving from device 2.
    pub local: ChannelSet,
    /// Device 2 receiving from device 1.
    pub remote: ChannelSet,
}

/// Per-subcarrier vectors from per-element tap channels.
fn element_spectra(links: &[TapChannel], m_total: usize) -> Vec<CVector> {
    let spectra: Vec<Vec<Complex64>> = links.iter().map(TapChannel::spectrum).collect();
    (0..m_total)
        .map(|m| DVector::from_iterator(links.len(), spectra.iter().map(|s| s[m])))
        .collect()
}

fn draw_direction(
    cfg: &ScenarioConfig,
    nf: &NearFieldLinks,
    rng: &mut ChaCha8Rng,
) -> Result<ChannelSet> {
    let m_total = cfg.n_subcarriers;
    let surface = cfg.rician(cfg.k_surface);
    let remote_tx_local_surface = element_spectra(
        &draw_vector_link(&surface, cfg.n_cells, m_total, rng)?,
        m_total,
    );
    let remote_surface_rx = element_spectra(
        &draw_vector_link(&surface, cfg.n_cells, m_total, rng)?,
        m_total,
    );
    let direct = draw_rician_taps(&cfg.rician(cfg.k_direct), m_total, rng)?.spectrum();
    let links = LinkSet {
        si: nf.si.clone(),
        rx_local_surface: nf.rx_surface.clone(),
        tx_local_surface: nf.tx_surface.clone(),
        remote_tx_local_surface,
        remote_surface_rx,
        remote_tx_remote_surface: nf.tx_surface.clone(),
        direct,
    };
    assemble_cascades(&links, cfg.eta, cfg.beta)
}

/// Draws trial `trial`. The local direction is drawn first, then the remote
/// one, each as: remote transmitter to local surface, remote surface to
/// local receiver, direct link.
pub fn draw_realization(
    cfg: &ScenarioConfig,
    nf: &NearFieldLinks,
    trial: usize,
) -> Result<Realization> {
    let mut rng = cfg.trial_rng(trial);
    let local = draw_direction(cfg, nf, &mut rng)?;
    let remote = draw_direction(cfg, nf, &mut rng)?;
    Ok(Realization { local, remote })
}

/// The self-interference part of the channels alone, which is all the
/// optimizer looks at. Desired links are zero.
pub fn sic_channels(cfg: &ScenarioConfig, nf: &NearFieldLinks) -> Result<ChannelSet> {
    let m_total = cfg.n_subcarriers;
    let zero_vecs = vec![CVector::zeros(cfg.n_cells); m_total];
    let links = LinkSet {
        si: nf.si.clone(),
        rx_local_surface: nf.rx_surface.clone(),
        tx_local_surface: nf.tx_surface.clone(),
        remote_tx_local_surface: zero_vecs.clone(),
        remote_surface_rx: zero_vecs.clone(),
        remote_tx_remote_surface: zero_vecs,
        direct: vec![Complex64::new(0.0, 0.0); m_total],
    };
    assemble_cascades(&links, cfg.eta, cfg.beta)
}
