//! Cascaded channels of the two-device link and the figures of merit
//! evaluated on them.
//!
//! Everything here works on frequency-domain responses directly: the cyclic
//! prefix is assumed long enough that each subcarrier sees a flat channel.

use nalgebra::DVector;
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type CVector = DVector<Complex64>;

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

/// Feasible set of a reflection-coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibleSet {
    /// `|φ_n| ≤ 1`.
    Ideal,
    /// `|φ_n| = 1`.
    UnitModulus,
    /// `φ_n = e^{j2πk/τ}` for integer `k`.
    Discrete(u32),
}

const MODULUS_TOL: f64 = 1e-9;

/// Reflection coefficients of one surface, tagged with the set they live in.
#[derive(Debug, Clone, PartialEq)]
pub struct RcVector {
    values: CVector,
    set: FeasibleSet,
}

impl RcVector {
    pub fn new(values: CVector, set: FeasibleSet) -> Result<Self> {
        for (n, v) in values.iter().enumerate() {
            let r = v.norm();
            let ok = match set {
                FeasibleSet::Ideal => r <= 1.0 + MODULUS_TOL,
                FeasibleSet::UnitModulus => (r - 1.0).abs() <= MODULUS_TOL,
                FeasibleSet::Discrete(tau) => {
                    if tau == 0 {
                        return Err(Error::config("tau", "must be at least 1"));
                    }
                    let step = 2.0 * PI / tau as f64;
                    let k = (v.arg().rem_euclid(2.0 * PI) / step).round();
                    let level = Complex64::from_polar(1.0, k * step);
                    (r - 1.0).abs() <= MODULUS_TOL && (v - level).norm() <= MODULUS_TOL
                }
            };
            if !v.re.is_finite() || !v.im.is_finite() || !ok {
                return Err(Error::Numerical(format!(
                    "coefficient {n} = {v} lies outside {set:?}"
                )));
            }
        }
        Ok(Self { values, set })
    }

    /// All-zero coefficients (no reflection).
    pub fn zeros(n: usize) -> Self {
        Self {
            values: CVector::zeros(n),
            set: FeasibleSet::Ideal,
        }
    }

    /// All-ones coefficients.
    pub fn ones(n: usize) -> Self {
        Self {
            values: CVector::from_element(n, Complex64::new(1.0, 0.0)),
            set: FeasibleSet::UnitModulus,
        }
    }

    pub fn values(&self) -> &CVector {
        &self.values
    }

    pub fn set(&self) -> FeasibleSet {
        self.set
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> CVector {
        self.values
    }
}

/// Nonnegative per-subcarrier transmit powers under a total budget.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    p: Vec<f64>,
    budget: f64,
}

impl PowerAllocation {
    pub fn new(p: Vec<f64>, budget: f64) -> Result<Self> {
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(Error::config(
                "power budget",
                "must be finite and nonnegative",
            ));
        }
        if let Some((m, v)) = p
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Numerical(format!("power on subcarrier {m} is {v}")));
        }
        let total: f64 = p.iter().sum();
        if total > budget * (1.0 + 1e-9) {
            return Err(Error::Numerical(format!(
                "allocation {total} W exceeds budget {budget} W"
            )));
        }
        Ok(Self { p, budget })
    }

    pub fn zeros(n_subcarriers: usize, budget: f64) -> Self {
        Self {
            p: vec![0.0; n_subcarriers],
            budget: budget.max(0.0),
        }
    }

    /// Budget split evenly across subcarriers.
    pub fn uniform(n_subcarriers: usize, budget: f64) -> Self {
        let budget = budget.max(0.0);
        Self {
            p: vec![budget / n_subcarriers.max(1) as f64; n_subcarriers],
            budget,
        }
    }

    pub fn powers(&self) -> &[f64] {
        &self.p
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// Constituent links of one receive direction (remote device → local
/// receiver), per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSet {
    /// Local transmit → local receive antenna.
    pub si: Vec<Complex64>,
    /// Local surface ↔ local receive antenna (near field).
    pub rx_local_surface: Vec<CVector>,
    /// Local transmit antenna ↔ local surface (near field).
    pub tx_local_surface: Vec<CVector>,
    /// Remote transmit antenna → local surface (far field).
    pub remote_tx_local_surface: Vec<CVector>,
    /// Remote surface → local receive antenna (far field).
    pub remote_surface_rx: Vec<CVector>,
    /// Remote transmit antenna ↔ remote surface (near field).
    pub remote_tx_remote_surface: Vec<CVector>,
    /// Remote transmit → local receive antenna (far field).
    pub direct: Vec<Complex64>,
}

/// Effective per-subcarrier responses seen by the local receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    si_gain: Vec<Complex64>,
    reflect_si: Vec<CVector>,
    reflect_desired_local: Vec<CVector>,
    reflect_desired_remote: Vec<CVector>,
    direct_desired: Vec<Complex64>,
}

impl ChannelSet {
    pub fn new(
        si_gain: Vec<Complex64>,
        reflect_si: Vec<CVector>,
        reflect_desired_local: Vec<CVector>,
        reflect_desired_remote: Vec<CVector>,
        direct_desired: Vec<Complex64>,
    ) -> Result<Self> {
        let m = si_gain.len();
        check_len("reflect_si", m, reflect_si.len())?;
        check_len("reflect_desired_local", m, reflect_desired_local.len())?;
        check_len("reflect_desired_remote", m, reflect_desired_remote.len())?;
        check_len("direct_desired", m, direct_desired.len())?;
        let n = reflect_si.first().map_or(0, |v| v.len());
        for group in [&reflect_si, &reflect_desired_local, &reflect_desired_remote] {
            for v in group.iter() {
                check_len("surface vector", n, v.len())?;
                if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::Numerical("non-finite channel coefficient".into()));
                }
            }
        }
        if si_gain
            .iter()
            .chain(direct_desired.iter())
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::Numerical("non-finite channel coefficient".into()));
        }
        Ok(Self {
            si_gain,
            reflect_si,
            reflect_desired_local,
            reflect_desired_remote,
            direct_desired,
        })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.si_gain.len()
    }

    pub fn n_cells(&self) -> usize {
        self.reflect_si.first().map_or(0, |v| v.len())
    }

    pub fn si_gain(&self) -> &[Complex64] {
        &self.si_gain
    }

    pub fn reflect_si(&self) -> &[CVector] {
        &self.reflect_si
    }

    pub fn reflect_desired_local(&self) -> &[CVector] {
        &self.reflect_desired_local
    }

    pub fn reflect_desired_remote(&self) -> &[CVector] {
        &self.reflect_desired_remote
    }

    pub fn direct_desired(&self) -> &[Complex64] {
        &self.direct_desired
    }

    /// `h_{m,1} + h_{m,R}^H φ`.
    pub fn residual_si(&self, m: usize, phi: &CVector) -> Complex64 {
        self.si_gain[m] + self.reflect_si[m].dotc(phi)
    }

    /// `|h_{m,1} + h_{m,R}^H φ|²` on every subcarrier.
    pub fn residual_si_power(&self, phi: &CVector) -> Vec<f64> {
        (0..self.n_subcarriers())
            .map(|m| self.residual_si(m, phi).norm_sqr())
            .collect()
    }

    fn check_rc(&self, what: &'static str, rc: &CVector) -> Result<()> {
        check_len(what, self.n_cells(), rc.len())
    }

    fn check_power(&self, what: &'static str, p: &PowerAllocation) -> Result<()> {
        check_len(what, self.n_subcarriers(), p.len())
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

fn hadamard_conj(a: &CVector, b: &CVector, scale: f64) -> Result<CVector> {
    check_len("cascade constituent", a.len(), b.len())?;
    Ok(a.zip_map(b, |x, y| x * y.conj() * scale))
}

/// Builds the cascaded responses from constituent links, with reflection
/// efficiencies `eta` (local surface) and `beta` (remote surface).
pub fn assemble_cascades(links: &LinkSet, eta: f64, beta: f64) -> Result<ChannelSet> {
    let m = links.si.len();
    for (what, len) in [
        ("rx_local_surface", links.rx_local_surface.len()),
        ("tx_local_surface", links.tx_local_surface.len()),
        (
            "remote_tx_local_surface",
            links.remote_tx_local_surface.len(),
        ),
        ("remote_surface_rx", links.remote_surface_rx.len()),
        (
            "remote_tx_remote_surface",
            links.remote_tx_remote_surface.len(),
        ),
        ("direct", links.direct.len()),
    ] {
        check_len(what, m, len)?;
    }
    let (se, sb) = (eta.sqrt(), beta.sqrt());
    let mut reflect_si = Vec::with_capacity(m);
    let mut local = Vec::with_capacity(m);
    let mut remote = Vec::with_capacity(m);
    for k in 0..m {
        reflect_si.push(hadamard_conj(
            &links.rx_local_surface[k],
            &links.tx_local_surface[k],
            se,
        )?);
        local.push(hadamard_conj(
            &links.rx_local_surface[k],
            &links.remote_tx_local_surface[k],
            se,
        )?);
        remote.push(hadamard_conj(
            &links.remote_surface_rx[k],
            &links.remote_tx_remote_surface[k],
            sb,
        )?);
    }
    ChannelSet::new(
        links.si.clone(),
        reflect_si,
        local,
        remote,
        links.direct.clone(),
    )
}

/// Sum over subcarriers of `(|h_{m,1}|² p_m + σ²) / (|h_{m,1} + h_{m,R}^H φ|² p_m + σ²)`.
///
/// This is the quantity the optimizer maximizes; [`sic_capability`] is its
/// value in dB.
pub fn sic_objective(
    ch: &ChannelSet,
    phi: &CVector,
    p: &PowerAllocation,
    noise: f64,
) -> Result<f64> {
    ch.check_rc("reflection coefficients", phi)?;
    ch.check_power("power allocation", p)?;
    Ok(p.powers()
        .iter()
        .enumerate()
        .map(|(m, pm)| {
            let before = ch.si_gain[m].norm_sqr() * pm + noise;
            let after = ch.residual_si(m, phi).norm_sqr() * pm + noise;
            before / after
        })
        .sum())
}

/// SIC capability in dB.
pub fn sic_capability(
    ch: &ChannelSet,
    phi: &CVector,
    p: &PowerAllocation,
    noise: f64,
) -> Result<f64> {
    Ok(10.0 * sic_objective(ch, phi, p, noise)?.log10())
}

/// Full-duplex capacity in bit/s/Hz with local coefficients `phi`, remote
/// coefficients `psi`, local powers `p1` and remote powers `p2`.
pub fn fd_capacity(
    ch: &ChannelSet,
    phi: &CVector,
    psi: &CVector,
    p1: &PowerAllocation,
    p2: &PowerAllocation,
    noise: f64,
    cp_len: usize,
) -> Result<f64> {
    ch.check_rc("local coefficients", phi)?;
    ch.check_rc("remote coefficients", psi)?;
    ch.check_power("local powers", p1)?;
    ch.check_power("remote powers", p2)?;
    let m_total = ch.n_subcarriers();
    let bits: f64 = (0..m_total)
        .map(|m| {
            let desired = ch.direct_desired[m]
                + ch.reflect_desired_local[m].dotc(phi)
                + ch.reflect_desired_remote[m].dotc(psi);
            let interference = ch.residual_si(m, phi).norm_sqr() * p1.powers()[m] + noise;
            (1.0 + desired.norm_sqr() * p2.powers()[m] / interference).log2()
        })
        .sum();
    Ok(bits / (m_total + cp_len) as f64)
}

/// Half-duplex capacity without any surface.
pub fn hd_capacity(
    ch: &ChannelSet,
    p2: &PowerAllocation,
    noise: f64,
    cp_len: usize,
) -> Result<f64> {
    ch.check_power("remote powers", p2)?;
    let m_total = ch.n_subcarriers();
    let bits: f64 = (0..m_total)
        .map(|m| (1.0 + ch.direct_desired[m].norm_sqr() * p2.powers()[m] / noise).log2())
        .sum();
    Ok(0.5 * bits / (m_total + cp_len) as f64)
}

/// Full-duplex capacity without surfaces, where a fraction `kappa` of the
/// self-interference power survives cancellation.
pub fn fd_capacity_sic_coefficient(
    ch: &ChannelSet,
    kappa: f64,
    p1: &PowerAllocation,
    p2: &PowerAllocation,
    noise: f64,
    cp_len: usize,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::config("kappa", format!("{kappa} outside [0, 1]")));
    }
    ch.check_power("local powers", p1)?;
    ch.check_power("remote powers", p2)?;
    let m_total = ch.n_subcarriers();
    let bits: f64 = (0..m_total)
        .map(|m| {
            let interference = kappa * ch.si_gain[m].norm_sqr() * p1.powers()[m] + noise;
            (1.0 + ch.direct_desired[m].norm_sqr() * p2.powers()[m] / interference).log2()
        })
        .sum();
    Ok(bits / (m_total + cp_len) as f64)
}

/// SIC coefficient that leaves `sic_db` of suppression.
pub fn sic_coefficient_from_db(sic_db: f64) -> f64 {
    10f64.powf(-sic_db / 10.0)
}

/// Phase quantization step of a `tau`-level surface, in degrees.
pub fn phase_error_bound(tau: u32) -> f64 {
    360.0 / tau as f64
}
