//! Radiating near-field channel between an antenna and the unit cells of a
//! small square surface.
//!
//! Each cell is treated as a receive aperture. The power gain seen by a cell
//! comes from integrating the radiated intensity of a Y-polarized isotropic
//! source over the cell's rectangle, which gives a closed form in the four
//! corner offsets of the rectangle relative to the antenna's projection. The
//! phase is the free-space delay modulo one wavelength.
//!
//! The same machinery gives the direct self-interference link: the receive
//! antenna is a single-cell surface placed on the transmit antenna's
//! boresight, at the transmit-to-receive distance.

use nalgebra::DVector;
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Lower edge of the radiating near field, in wavelengths.
pub const NEAR_FIELD_MIN_WAVELENGTHS: f64 = 0.16;
/// Upper edge of the radiating near field, in wavelengths.
pub const NEAR_FIELD_MAX_WAVELENGTHS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// OFDM carrier layout: `n_subcarriers` bins spread evenly over `bandwidth`
/// around `center_freq`.
#[derive(Debug, Clone, PartialEq)]
pub struct CarrierPlan {
    center_freq: f64,
    bandwidth: f64,
    n_subcarriers: usize,
    cp_len: usize,
}

impl CarrierPlan {
    pub fn new(
        center_freq: f64,
        bandwidth: f64,
        n_subcarriers: usize,
        cp_len: usize,
    ) -> Result<Self> {
        if n_subcarriers == 0 {
            return Err(Error::config("subcarriers", "must be at least 1"));
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::config("bandwidth_hz", "must be positive"));
        }
        if !center_freq.is_finite() || center_freq - bandwidth / 2.0 <= 0.0 {
            return Err(Error::config(
                "f_hz",
                "lowest subcarrier frequency must be positive",
            ));
        }
        Ok(Self {
            center_freq,
            bandwidth,
            n_subcarriers,
            cp_len,
        })
    }

    pub fn center_freq(&self) -> f64 {
        self.center_freq
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn cp_len(&self) -> usize {
        self.cp_len
    }

    pub fn spacing(&self) -> f64 {
        self.bandwidth / self.n_subcarriers as f64
    }

    /// Wavelength at the center frequency.
    pub fn center_wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.center_freq
    }

    pub fn frequency(&self, m: usize) -> Result<f64> {
        subcarrier_frequency(m, self)
    }

    pub fn wavelength(&self, m: usize) -> Result<f64> {
        Ok(SPEED_OF_LIGHT / self.frequency(m)?)
    }
}

/// Frequency of subcarrier `m`: `f - B/2 + m Δf`.
pub fn subcarrier_frequency(m: usize, plan: &CarrierPlan) -> Result<f64> {
    if m >= plan.n_subcarriers {
        return Err(Error::IndexOutOfRange {
            what: "subcarrier",
            index: m,
            len: plan.n_subcarriers,
        });
    }
    Ok(plan.center_freq - plan.bandwidth / 2.0 + m as f64 * plan.spacing())
}

/// A square surface of `n_cells` cells laid edge to edge, centered at the
/// origin of the XY plane. Cell area may differ per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGeometry {
    n_cells: usize,
    side: usize,
    cell_area: Vec<f64>,
}

impl SurfaceGeometry {
    pub fn new(n_cells: usize, cell_area_per_subcarrier: Vec<f64>) -> Result<Self> {
        let side = grid_side(n_cells)?;
        if let Some(bad) = cell_area_per_subcarrier
            .iter()
            .find(|a| !(a.is_finite() && **a > 0.0))
        {
            return Err(Error::Geometry(format!(
                "cell area must be positive, got {bad}"
            )));
        }
        Ok(Self {
            n_cells,
            side,
            cell_area: cell_area_per_subcarrier,
        })
    }

    /// Cells whose side is `λ_m / side_fraction` on every subcarrier.
    pub fn wavelength_scaled(
        n_cells: usize,
        plan: &CarrierPlan,
        side_fraction: f64,
    ) -> Result<Self> {
        if !(side_fraction.is_finite() && side_fraction > 0.0) {
            return Err(Error::config("cell_side_fraction", "must be positive"));
        }
        let areas = (0..plan.n_subcarriers())
            .map(|m| plan.wavelength(m).map(|l| (l / side_fraction).powi(2)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(n_cells, areas)
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Number of cells along one edge.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn cell_area(&self, m: usize) -> Result<f64> {
        self.cell_area
            .get(m)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                what: "subcarrier",
                index: m,
                len: self.cell_area.len(),
            })
    }
}

fn grid_side(n_cells: usize) -> Result<usize> {
    let side = (n_cells as f64).sqrt().round() as usize;
    if n_cells == 0 || side * side != n_cells {
        return Err(Error::config(
            "n_cells",
            format!("{n_cells} is not a positive perfect square"),
        ));
    }
    Ok(side)
}

/// Center of cell `n` (1-based, row-major from the top-left corner) on
/// subcarrier `m`.
pub fn unit_cell_center(n: usize, m: usize, geom: &SurfaceGeometry) -> Result<Point3> {
    if n == 0 || n > geom.n_cells {
        return Err(Error::IndexOutOfRange {
            what: "cell (1-based)",
            index: n,
            len: geom.n_cells + 1,
        });
    }
    let pitch = geom.cell_area(m)?.sqrt();
    let side = geom.side;
    let half_span = (side as f64 - 1.0) * pitch / 2.0;
    let col = (n - 1) % side;
    let row = (n - 1) / side;
    Ok(Point3::new(
        -half_span + pitch * col as f64,
        half_span - pitch * row as f64,
        0.0,
    ))
}

/// Power gain ξ captured by a cell of area `cell_area` centered at `p`
/// (in the z = 0 plane) from a Y-polarized isotropic antenna at `t`.
pub fn patch_gain(t: &Point3, p: &Point3, cell_area: f64) -> Result<f64> {
    let d = t.z - p.z;
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Geometry(format!(
            "antenna must be above the surface plane, got height {d}"
        )));
    }
    if !(cell_area > 0.0 && cell_area.is_finite()) {
        return Err(Error::Geometry(format!(
            "cell area must be positive, got {cell_area}"
        )));
    }
    let half = cell_area.sqrt() / 2.0;
    let xs = [half + p.x - t.x, half - p.x + t.x];
    let ys = [half + p.y - t.y, half - p.y + t.y];

    let d2 = d * d;
    let mut sum = 0.0;
    for x in xs {
        for y in ys {
            let (x2, y2, xy) = (x * x / d2, y * y / d2, x * y / d2);
            let root = (x2 + y2 + 1.0).sqrt();
            sum += xy / (3.0 * (y2 + 1.0) * root) + 2.0 / 3.0 * (xy / root).atan();
        }
    }
    Ok(sum / (4.0 * PI))
}

/// Propagation phase `2π · frac(‖t − p‖ / λ)`, in `[0, 2π)`.
pub fn link_phase(t: &Point3, p: &Point3, wavelength: f64) -> f64 {
    phase_of_distance(t.distance(p), wavelength)
}

pub(crate) fn phase_of_distance(distance: f64, wavelength: f64) -> f64 {
    let cycles = (distance / wavelength).rem_euclid(1.0);
    let phase = 2.0 * PI * cycles;
    if phase >= 2.0 * PI {
        0.0
    } else {
        phase
    }
}

/// Whether `distance` lies inside the radiating near field of a cell at
/// `wavelength`.
pub fn in_radiating_near_field(distance: f64, wavelength: f64) -> bool {
    distance > NEAR_FIELD_MIN_WAVELENGTHS * wavelength
        && distance < NEAR_FIELD_MAX_WAVELENGTHS * wavelength
}

/// Frequency response between the antenna at `t` and every cell on
/// subcarrier `m`. Element `n - 1` belongs to cell `n`.
pub fn antenna_to_surface_cfr(
    t: &Point3,
    m: usize,
    geom: &SurfaceGeometry,
    plan: &CarrierPlan,
) -> Result<DVector<Complex64>> {
    let wavelength = plan.wavelength(m)?;
    let area = geom.cell_area(m)?;
    let mut out = DVector::zeros(geom.n_cells);
    for n in 1..=geom.n_cells {
        let p = unit_cell_center(n, m, geom)?;
        let gain = patch_gain(t, &p, area)?;
        let phase = link_phase(t, &p, wavelength);
        out[n - 1] = Complex64::from_polar(gain.sqrt(), -phase);
    }
    Ok(out)
}

/// Cells (1-based) that fall outside the radiating near field of the antenna
/// at `t` on subcarrier `m`.
pub fn near_field_violations(
    t: &Point3,
    m: usize,
    geom: &SurfaceGeometry,
    plan: &CarrierPlan,
) -> Result<Vec<usize>> {
    let wavelength = plan.wavelength(m)?;
    let mut bad = Vec::new();
    for n in 1..=geom.n_cells {
        let p = unit_cell_center(n, m, geom)?;
        if !in_radiating_near_field(t.distance(&p), wavelength) {
            bad.push(n);
        }
    }
    Ok(bad)
}

/// Direct self-interference response from `t` to `r` on subcarrier `m`.
///
/// The receive antenna is a one-cell surface of area `aperture` facing the
/// transmit antenna at distance `‖t − r‖`, so the magnitude does not depend
/// on `m` while the phase does.
pub fn si_cfr(
    t: &Point3,
    r: &Point3,
    m: usize,
    plan: &CarrierPlan,
    aperture: f64,
) -> Result<Complex64> {
    let wavelength = plan.wavelength(m)?;
    let spacing = t.distance(r);
    let gain = patch_gain(
        &Point3::new(t.x, t.y, spacing),
        &Point3::new(t.x, t.y, 0.0),
        aperture,
    )?;
    let phase = phase_of_distance(spacing, wavelength);
    Ok(Complex64::from_polar(gain.sqrt(), -phase))
}
