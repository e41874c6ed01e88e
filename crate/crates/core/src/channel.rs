//! mmWave link model for the SU → IRS → user cascade.
//!
//! Path loss in dB is converted to a linear amplitude `10^(-dB/20)` before
//! it scales a channel vector. Angles are measured at the IRS: azimuth is
//! `atan2(Δy, Δx)` and elevation is `atan2(Δz, horizontal distance)` with
//! `Δ = far end − IRS`. Elements are indexed zero-based and row-major,
//! `i = m_r · cols + m_c`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("vector lengths differ: g={g}, phases={phases}, h={h}")]
    DimensionMismatch { g: usize, phases: usize, h: usize },
    #[error("positions coincide, angles are undefined")]
    CoincidentPositions,
    #[error("invalid channel parameter `{0}`")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IrsGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Spacing between adjacent elements, meters.
    pub element_spacing: f64,
    /// Carrier wavelength, meters.
    pub wavelength: f64,
}

impl Default for IrsGeometry {
    /// 4x4 half-wavelength array at 28 GHz.
    fn default() -> Self {
        let wavelength = 299_792_458.0 / 28e9;
        Self {
            rows: 4,
            cols: 4,
            element_spacing: wavelength / 2.0,
            wavelength,
        }
    }
}

impl IrsGeometry {
    pub fn elements(&self) -> usize {
        self.rows * self.cols
    }

    /// `(m_r, m_c)` of element `i`.
    pub fn index(&self, i: usize) -> (usize, usize) {
        (i / self.cols, i % self.cols)
    }

    fn wavenumber_spacing(&self) -> f64 {
        2.0 * PI * self.element_spacing / self.wavelength
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(ChannelError::Invalid("irs rows/cols"));
        }
        if !(self.element_spacing > 0.0 && self.wavelength > 0.0) {
            return Err(ChannelError::Invalid("irs spacing/wavelength"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathLossModel {
    pub ref_distance: f64,
    pub ref_loss_db: f64,
    pub exponent: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            ref_distance: 1.0,
            ref_loss_db: 30.0,
            exponent: 2.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkBudget {
    /// Transmit power, W.
    pub tx_power: f64,
    /// Noise power spectral density, W/Hz.
    pub noise_psd: f64,
    /// Bandwidth, Hz.
    pub bandwidth: f64,
}

impl Default for LinkBudget {
    /// 15 W, -174 dBm/Hz, 2 MHz.
    fn default() -> Self {
        Self {
            tx_power: 15.0,
            noise_psd: dbm_per_hz_to_watts(-174.0),
            bandwidth: 2e6,
        }
    }
}

pub fn dbm_per_hz_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Reflection phases, each in `[-π, π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseShifts {
    pub omega: Vec<f64>,
}

impl PhaseShifts {
    pub fn zeros(m: usize) -> Self {
        Self { omega: vec![0.0; m] }
    }

    /// Wraps arbitrary angles into `[-π, π)`.
    pub fn wrapped(raw: impl IntoIterator<Item = f64>) -> Self {
        Self {
            omega: raw.into_iter().map(wrap_phase).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }
}

pub fn wrap_phase(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut w = x - two_pi * ((x + PI) / two_pi).floor();
    if w >= PI {
        w -= two_pi;
    }
    if w < -PI {
        w = -PI;
    }
    w
}

/// One slot's cascaded channel for the served user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    #[serde(with = "complex_pairs")]
    pub g: Vec<Complex64>,
    #[serde(with = "complex_pairs")]
    pub h: Vec<Complex64>,
    pub rician_k: f64,
    pub aoa_azimuth: f64,
    pub aoa_elevation: f64,
    pub aod_azimuth: f64,
    pub aod_elevation: f64,
}

/// Serializes complex vectors as JSON arrays of `[re, im]` pairs.
pub mod complex_pairs {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = v.iter().map(|c| [c.re, c.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let pairs: Vec<[f64; 2]> = Vec::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

pub fn path_loss_db(model: &PathLossModel, d: f64) -> Result<f64, ChannelError> {
    if d.is_nan() || d <= 0.0 {
        return Err(ChannelError::NonPositiveDistance(d));
    }
    Ok(model.ref_loss_db + 10.0 * model.exponent * (d / model.ref_distance).log10())
}

pub fn db_to_amplitude(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 20.0)
}

/// Azimuth and elevation of `far` as seen from `irs`.
pub fn angles_at(irs: Vec3, far: Vec3) -> Result<(f64, f64), ChannelError> {
    let d = far - irs;
    if d.norm() == 0.0 {
        return Err(ChannelError::CoincidentPositions);
    }
    Ok((d.y.atan2(d.x), d.z.atan2(d.horizontal_norm())))
}

fn steering_phase(geom: &IrsGeometry, m_r: usize, m_c: usize, azimuth: f64, elevation: f64) -> f64 {
    geom.wavenumber_spacing()
        * (m_c as f64 * azimuth.sin() * elevation.cos() + m_r as f64 * elevation.sin())
}

/// Planar-array response; every entry has unit modulus.
pub fn los_steering(geom: &IrsGeometry, azimuth: f64, elevation: f64) -> Vec<Complex64> {
    (0..geom.elements())
        .map(|i| {
            let (m_r, m_c) = geom.index(i);
            Complex64::from_polar(1.0, steering_phase(geom, m_r, m_c, azimuth, elevation))
        })
        .collect()
}

/// Rician fading or pure line of sight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fading {
    Rician(f64),
    PureLos,
}

/// `amplitude(loss) · (√(k/(1+k))·LoS + √(1/(1+k))·NLoS)` with unit-variance
/// circularly-symmetric Gaussian NLoS entries.
pub fn sample_channel<R: Rng + ?Sized>(
    geom: &IrsGeometry,
    loss_db: f64,
    fading: Fading,
    azimuth: f64,
    elevation: f64,
    rng: &mut R,
) -> Vec<Complex64> {
    let amp = db_to_amplitude(loss_db);
    let los = los_steering(geom, azimuth, elevation);
    match fading {
        Fading::PureLos => los.into_iter().map(|c| c * amp).collect(),
        Fading::Rician(k) => {
            let w_los = (k / (1.0 + k)).sqrt();
            let w_nlos = (1.0 / (1.0 + k)).sqrt();
            let scale = std::f64::consts::FRAC_1_SQRT_2;
            los.into_iter()
                .map(|l| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    let nlos = Complex64::new(re * scale, im * scale);
                    (l * w_los + nlos * w_nlos) * amp
                })
                .collect()
        }
    }
}

/// `Σ_i g_i · e^{jω_i} · h_i`.
pub fn cascaded_gain(
    g: &[Complex64],
    phases: &PhaseShifts,
    h: &[Complex64],
) -> Result<Complex64, ChannelError> {
    if g.len() != h.len() || g.len() != phases.len() {
        return Err(ChannelError::DimensionMismatch {
            g: g.len(),
            phases: phases.len(),
            h: h.len(),
        });
    }
    Ok(g.iter()
        .zip(&phases.omega)
        .zip(h)
        .map(|((gi, w), hi)| gi * Complex64::from_polar(1.0, *w) * hi)
        .sum())
}

pub fn rate_from_gain(budget: &LinkBudget, gain: Complex64) -> f64 {
    let snr = budget.tx_power * gain.norm_sqr() / (budget.bandwidth * budget.noise_psd);
    budget.bandwidth * (1.0 + snr).log2()
}

/// Achievable rate in bit/s with `|gᵀΘh|²` in the SNR.
pub fn achievable_rate(
    budget: &LinkBudget,
    g: &[Complex64],
    phases: &PhaseShifts,
    h: &[Complex64],
) -> Result<f64, ChannelError> {
    Ok(rate_from_gain(budget, cascaded_gain(g, phases, h)?))
}

/// Closed-form phases that co-phase every reflected path of the pure-LoS
/// cascade: element `i` cancels the SU-side and user-side steering phases.
pub fn optimal_phases(
    geom: &IrsGeometry,
    su: Vec3,
    irs: Vec3,
    user: Vec3,
) -> Result<PhaseShifts, ChannelError> {
    let (az_si, el_si) = angles_at(irs, su)?;
    let (az_ie, el_ie) = angles_at(irs, user)?;
    Ok(phases_for_angles(geom, (az_si, el_si), (az_ie, el_ie)))
}

pub fn phases_for_angles(
    geom: &IrsGeometry,
    arrival: (f64, f64),
    departure: (f64, f64),
) -> PhaseShifts {
    PhaseShifts::wrapped((0..geom.elements()).map(|i| {
        let (m_r, m_c) = geom.index(i);
        -(steering_phase(geom, m_r, m_c, departure.0, departure.1)
            + steering_phase(geom, m_r, m_c, arrival.0, arrival.1))
    }))
}
