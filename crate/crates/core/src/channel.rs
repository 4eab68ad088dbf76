//! Channel models between the RIS and a user or base station.
//!
//! Element `n` of the user-side channel is, with `d_n` the exact
//! element-to-user distance, `G` the antenna gain and `lambda` the
//! wavelength:
//!
//! ```text
//! near field:  h_n = sqrt(G) lambda / (4 pi d_n) * exp(-j 2 pi d_n / lambda)
//! far field:   h_n = sqrt(G) lambda / (4 pi R)   * exp(-j 2 pi (R - y_n u - z_n v) / lambda)
//! ```
//!
//! where `(u, v) = (sin(polar) sin(azimuth), cos(polar))` are the direction
//! cosines the array observes and `R - y_n u - z_n v` is the first-order
//! expansion of `d_n` about the array center. The far-field form is used
//! when the worst-case phase error of that expansion across the array,
//! `max_n 2 pi / lambda * (d_n - (R - y_n u - z_n v))`, is at most pi/8;
//! otherwise the user is in the near field.
//!
//! The reflected link seen by the receiver is the Hadamard product of the
//! BS-to-RIS leg and the RIS-to-user leg, steered by unit-modulus phase
//! shifts `b`: a transmitted symbol `s` arrives as `b^T (hA .* h) s` plus
//! circularly-symmetric complex Gaussian noise.

use crate::geometry::{CartesianPoint, GeometryError, RisGeometry, SphericalLocation};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Phase-error threshold separating the near- and far-field regimes.
pub const REGION_PHASE_THRESHOLD: f64 = PI / 8.0;

/// Tolerance on `|b_n| - 1` accepted by [`PhaseShiftVector`].
pub const UNIT_MODULUS_TOLERANCE: f64 = 1e-9;

/// Errors from channel construction and signal-model validation.
#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("channel entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty vector")]
    Empty,
    #[error("phase shift {index} has magnitude {magnitude}, not unit modulus")]
    OffUnitModulus { index: usize, magnitude: f64 },
    #[error("antenna gain must be positive and finite, got {0}")]
    BadGain(f64),
    #[error("noise power must be nonnegative and finite, got {0}")]
    BadNoisePower(f64),
    #[error("carrier frequency must be positive and finite, got {0}")]
    BadCarrier(f64),
    #[error("pilot symbol must be finite and nonzero")]
    BadSymbol,
    #[error("geometry wavelength {geometry} does not match carrier wavelength {params}")]
    WavelengthMismatch { geometry: f64, params: f64 },
    #[error("base station must sit off the RIS plane, got x = {x}")]
    BsOnArrayPlane { x: f64 },
    #[error("array has no near-field region along this direction")]
    NoNearFieldBoundary,
    #[error("failed to bracket the near/far boundary")]
    BracketingFailed,
}

/// Near- vs far-field classification of a location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    NearField,
    FarField,
}

/// Complex channel vector over the RIS elements, finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    values: Vec<Complex64>,
}

impl ChannelVector {
    pub fn new(values: Vec<Complex64>) -> Result<Self, ChannelError> {
        if values.is_empty() {
            return Err(ChannelError::Empty);
        }
        for (index, v) in values.iter().enumerate() {
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(ChannelError::NonFinite { index });
            }
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
}

/// Unit-modulus RIS phase-shift vector.
///
/// Construction rejects entries whose magnitude deviates from 1 by more
/// than [`UNIT_MODULUS_TOLERANCE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Complex64>", into = "Vec<Complex64>")]
pub struct PhaseShiftVector {
    values: Vec<Complex64>,
}

impl PhaseShiftVector {
    pub fn new(values: Vec<Complex64>) -> Result<Self, ChannelError> {
        if values.is_empty() {
            return Err(ChannelError::Empty);
        }
        for (index, v) in values.iter().enumerate() {
            let magnitude = v.norm();
            if !magnitude.is_finite() || (magnitude - 1.0).abs() > UNIT_MODULUS_TOLERANCE {
                return Err(ChannelError::OffUnitModulus { index, magnitude });
            }
        }
        Ok(Self { values })
    }

    /// Builds `exp(j phase_n)` entries; always on the manifold.
    pub fn from_phases(phases: &[f64]) -> Result<Self, ChannelError> {
        if phases.is_empty() {
            return Err(ChannelError::Empty);
        }
        Ok(Self {
            values: phases
                .iter()
                .map(|&p| Complex64::from_polar(1.0, p))
                .collect(),
        })
    }

    /// All-ones configuration (no phase shift applied).
    pub fn ones(len: usize) -> Result<Self, ChannelError> {
        if len == 0 {
            return Err(ChannelError::Empty);
        }
        Ok(Self {
            values: vec![Complex64::new(1.0, 0.0); len],
        })
    }

    /// Uniform random phases in `[0, 2 pi)`.
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Result<Self, ChannelError> {
        if len == 0 {
            return Err(ChannelError::Empty);
        }
        let phases: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        Self::from_phases(&phases)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Worst deviation of any entry magnitude from 1.
    pub fn manifold_violation(&self) -> f64 {
        self.values
            .iter()
            .map(|v| (v.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<Complex64>> for PhaseShiftVector {
    type Error = ChannelError;

    fn try_from(values: Vec<Complex64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<PhaseShiftVector> for Vec<Complex64> {
    fn from(v: PhaseShiftVector) -> Self {
        v.values
    }
}

/// Transmit-side signal model: antenna gain, pilot symbol, noise power and
/// carrier frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalModelParams {
    transmit_gain: f64,
    symbol: Complex64,
    noise_power: f64,
    carrier_hz: f64,
}

impl SignalModelParams {
    pub fn new(
        transmit_gain: f64,
        symbol: Complex64,
        noise_power: f64,
        carrier_hz: f64,
    ) -> Result<Self, ChannelError> {
        if !(transmit_gain.is_finite() && transmit_gain > 0.0) {
            return Err(ChannelError::BadGain(transmit_gain));
        }
        if !(symbol.re.is_finite() && symbol.im.is_finite()) || symbol.norm_sqr() == 0.0 {
            return Err(ChannelError::BadSymbol);
        }
        if !(noise_power.is_finite() && noise_power >= 0.0) {
            return Err(ChannelError::BadNoisePower(noise_power));
        }
        if !(carrier_hz.is_finite() && carrier_hz > 0.0) {
            return Err(ChannelError::BadCarrier(carrier_hz));
        }
        Ok(Self {
            transmit_gain,
            symbol,
            noise_power,
            carrier_hz,
        })
    }

    /// Unit gain, unit symbol, no noise at the given carrier.
    pub fn unit(carrier_hz: f64) -> Result<Self, ChannelError> {
        Self::new(1.0, Complex64::new(1.0, 0.0), 0.0, carrier_hz)
    }

    pub fn transmit_gain(&self) -> f64 {
        self.transmit_gain
    }

    pub fn symbol(&self) -> Complex64 {
        self.symbol
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn carrier_hz(&self) -> f64 {
        self.carrier_hz
    }

    pub fn wavelength(&self) -> f64 {
        crate::geometry::SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Returns a copy with a different noise power.
    pub fn with_noise_power(&self, noise_power: f64) -> Result<Self, ChannelError> {
        Self::new(self.transmit_gain, self.symbol, noise_power, self.carrier_hz)
    }

    /// Checks that the geometry was built for this carrier.
    pub fn consistent_with(&self, geom: &RisGeometry) -> Result<(), ChannelError> {
        let lw = self.wavelength();
        let gw = geom.wavelength();
        if ((lw - gw) / lw).abs() > 1e-9 {
            return Err(ChannelError::WavelengthMismatch {
                geometry: gw,
                params: lw,
            });
        }
        Ok(())
    }
}

/// Exact spherical-wave channel from an arbitrary point, shared by the
/// user-side near-field model and the BS-side leg.
fn spherical_wave_channel(
    geom: &RisGeometry,
    source: &CartesianPoint,
    gain: f64,
) -> Result<ChannelVector, ChannelError> {
    if !(gain.is_finite() && gain > 0.0) {
        return Err(ChannelError::BadGain(gain));
    }
    let lambda = geom.wavelength();
    let amp = gain.sqrt() * lambda / (4.0 * PI);
    let k = geom.wavenumber();
    let mut values = Vec::with_capacity(geom.num_elements());
    for n in 0..geom.num_elements() {
        let d = geom.distance_to_element(source, n)?;
        values.push(Complex64::from_polar(amp / d, -k * d));
    }
    ChannelVector::new(values)
}

/// Near-field (exact spherical wavefront) RIS-to-user channel.
pub fn nf_channel(
    geom: &RisGeometry,
    location: &SphericalLocation,
    params: &SignalModelParams,
) -> Result<ChannelVector, ChannelError> {
    spherical_wave_channel(geom, &location.to_cartesian(), params.transmit_gain())
}

/// Far-field (planar wavefront) RIS-to-user channel at the given range.
///
/// All entries share the magnitude `sqrt(G) lambda / (4 pi R)`; the phase
/// of element `n` is `-2 pi / lambda * (R - y_n u - z_n v)`. The common
/// scalar `exp(-j 2 pi R / lambda)` is factored out so changing the range
/// rescales the vector without touching the per-element factors.
pub fn ff_channel(
    geom: &RisGeometry,
    polar: f64,
    azimuth: f64,
    range: f64,
    params: &SignalModelParams,
) -> Result<ChannelVector, ChannelError> {
    if !(range.is_finite() && range > 0.0) {
        return Err(ChannelError::Geometry(GeometryError::BadRange(range)));
    }
    let probe = SphericalLocation::new(range, polar, azimuth)?;
    let (u, v) = probe.direction_cosines();
    let lambda = geom.wavelength();
    let k = geom.wavenumber();
    let amp = params.transmit_gain().sqrt() * lambda / (4.0 * PI * range);
    let common = Complex64::from_polar(amp, -k * range);
    let mut values = Vec::with_capacity(geom.num_elements());
    for n in 0..geom.num_elements() {
        let e = geom.element_position(n)?;
        values.push(common * Complex64::from_polar(1.0, k * (e.y * u + e.z * v)));
    }
    ChannelVector::new(values)
}

/// Worst-case phase error of the planar-wavefront approximation across the
/// array, in radians.
pub fn max_phase_error(
    geom: &RisGeometry,
    location: &SphericalLocation,
) -> Result<f64, ChannelError> {
    let point = location.to_cartesian();
    let (u, v) = location.direction_cosines();
    let k = geom.wavenumber();
    let r = location.range();
    let mut worst = f64::NEG_INFINITY;
    for n in 0..geom.num_elements() {
        let e = geom.element_position(n)?;
        let d = geom.distance_to_element(&point, n)?;
        let linear = r - e.y * u - e.z * v;
        worst = worst.max(k * (d - linear));
    }
    Ok(worst)
}

/// Splits locations into near field (phase error above pi/8) and far field.
/// A location exactly on the threshold counts as far field.
pub fn classify_region(
    geom: &RisGeometry,
    location: &SphericalLocation,
) -> Result<Region, ChannelError> {
    Ok(if max_phase_error(geom, location)? > REGION_PHASE_THRESHOLD {
        Region::NearField
    } else {
        Region::FarField
    })
}

/// Smallest range along `(polar, azimuth)` at which the planar-wavefront
/// approximation becomes acceptable, found by bisecting the phase error
/// against the pi/8 threshold.
pub fn nf_ff_boundary_range(
    geom: &RisGeometry,
    polar: f64,
    azimuth: f64,
) -> Result<f64, ChannelError> {
    let lambda = geom.wavelength();
    let rho = geom.max_element_radius();
    if rho == 0.0 {
        // Single element: the expansion is exact, no near field exists.
        return Err(ChannelError::NoNearFieldBoundary);
    }
    let err_at = |range: f64| -> Result<f64, ChannelError> {
        let loc = SphericalLocation::new(range, polar, azimuth)?;
        Ok(max_phase_error(geom, &loc)? - REGION_PHASE_THRESHOLD)
    };
    let mut lo = (rho * 1e-3).max(lambda * 1e-6);
    if err_at(lo)? <= 0.0 {
        return Err(ChannelError::NoNearFieldBoundary);
    }
    // The classic Fraunhofer distance 8 rho^2 / lambda marks the broadside
    // boundary; start above it and expand until the error goes negative.
    let mut hi = (16.0 * rho * rho / lambda).max(10.0 * rho);
    let mut expansions = 0;
    while err_at(hi)? > 0.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > 200 {
            return Err(ChannelError::BracketingFailed);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if err_at(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// BS-to-RIS leg: the exact spherical-wave model from a known BS position
/// with the receive-side gain. Shares the implementation of [`nf_channel`],
/// so evaluating it at the Cartesian image of a spherical location matches
/// the near-field channel exactly.
pub fn bs_ris_channel(
    geom: &RisGeometry,
    bs_position: &CartesianPoint,
    receive_gain: f64,
) -> Result<ChannelVector, ChannelError> {
    if bs_position.x == 0.0 {
        return Err(ChannelError::BsOnArrayPlane { x: bs_position.x });
    }
    spherical_wave_channel(geom, bs_position, receive_gain)
}

/// Hadamard product of the BS-side and user-side legs.
///
/// The BS leg multiplies from the left; the estimator relies on the same
/// ordering when it applies the BS leg to dictionary atoms, so noiseless
/// on-grid measurements reproduce predicted signals bit for bit.
pub fn cascaded_channel(
    bs_leg: &ChannelVector,
    user_leg: &ChannelVector,
) -> Result<ChannelVector, ChannelError> {
    if bs_leg.len() != user_leg.len() {
        return Err(ChannelError::LengthMismatch {
            left: bs_leg.len(),
            right: user_leg.len(),
        });
    }
    ChannelVector::new(cascade_slices(bs_leg.values(), user_leg.values()))
}

/// Entrywise product with the BS leg on the left. Every cascade in the
/// crate funnels through this one loop so rounding is reproducible.
pub(crate) fn cascade_slices(bs_leg: &[Complex64], user_leg: &[Complex64]) -> Vec<Complex64> {
    bs_leg.iter().zip(user_leg).map(|(a, b)| a * b).collect()
}

/// `b^T h`: the steered sum over elements in enumeration order.
pub fn steered_sum(
    phases: &PhaseShiftVector,
    channel: &ChannelVector,
) -> Result<Complex64, ChannelError> {
    if phases.len() != channel.len() {
        return Err(ChannelError::LengthMismatch {
            left: phases.len(),
            right: channel.len(),
        });
    }
    Ok(steered_sum_slices(phases.values(), channel.values()))
}

/// Shared accumulation loop behind [`steered_sum`]; both the measurement
/// model and the dictionary matcher use it, keeping their rounding
/// identical.
pub(crate) fn steered_sum_slices(phases: &[Complex64], channel: &[Complex64]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (b, h) in phases.iter().zip(channel) {
        acc += b * h;
    }
    acc
}

/// One received sample `b^T h s + noise`.
pub fn received_signal(
    phases: &PhaseShiftVector,
    channel: &ChannelVector,
    symbol: Complex64,
    noise: Complex64,
) -> Result<Complex64, ChannelError> {
    Ok(steered_sum(phases, channel)? * symbol + noise)
}

/// Draws circularly-symmetric complex Gaussian noise with total power
/// `noise_power` (variance `noise_power / 2` per real component).
pub fn complex_gaussian<R: Rng + ?Sized>(noise_power: f64, rng: &mut R) -> Complex64 {
    if noise_power == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let normal = Normal::new(0.0, (noise_power / 2.0).sqrt()).expect("valid std dev");
    Complex64::new(normal.sample(rng), normal.sample(rng))
}

// ---------------------------------------------------------------------------
