//! RIS element layout and coordinate conversions.
//!
//! The RIS is a uniform L x M grid of passive elements in the Y-Z plane,
//! centered on the origin. Users and the base station are placed in
//! spherical coordinates about that center with the physics convention
//!
//! ```text
//! x = R sin(theta) cos(phi)
//! y = R sin(theta) sin(phi)
//! z = R cos(theta)
//! ```
//!
//! where `R` is the range in meters, `theta` the polar angle measured from
//! the +Z axis and `phi` the azimuth measured from the +X axis toward +Y.
//! Azimuth is restricted to `[0, pi]`: a planar array in the Y-Z plane
//! only serves a half-space, and its response depends on azimuth through
//! `sin(phi)` alone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vacuum speed of light in meters per second.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Errors from geometry construction and queries.
#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("RIS needs at least one row and one column, got {rows}x{cols}")]
    EmptyArray { rows: usize, cols: usize },
    #[error("element spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("wavelength must be positive and finite, got {0}")]
    BadWavelength(f64),
    #[error("element index {index} out of range for {count} elements")]
    ElementOutOfRange { index: usize, count: usize },
    #[error("range must be positive and finite, got {0}")]
    BadRange(f64),
    #[error("polar angle must lie in [0, pi], got {0}")]
    BadPolar(f64),
    #[error("azimuth must lie in [0, pi], got {0}")]
    BadAzimuth(f64),
    #[error("point coincides with RIS element {element}")]
    OnElement { element: usize },
    #[error("point with negative y={y} is outside the served half-space")]
    BehindArray { y: f64 },
}

/// Uniform planar RIS in the Y-Z plane, centered on the origin.
///
/// Element `(row, col)` sits at `(0, y, z)` with
/// `y = (col - (cols-1)/2) * spacing` and `z = (row - (rows-1)/2) * spacing`,
/// so even-sized arrays get half-integer offsets and the element centroid
/// is always the origin. Elements are enumerated row-major with the column
/// (y) index varying fastest: `n = row * cols + col`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisGeometry {
    rows: usize,
    cols: usize,
    spacing: f64,
    wavelength: f64,
}

impl RisGeometry {
    /// Builds a geometry, validating dimensions, spacing and wavelength.
    pub fn new(
        rows: usize,
        cols: usize,
        spacing: f64,
        wavelength: f64,
    ) -> Result<Self, GeometryError> {
        if rows == 0 || cols == 0 {
            return Err(GeometryError::EmptyArray { rows, cols });
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(GeometryError::BadSpacing(spacing));
        }
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(GeometryError::BadWavelength(wavelength));
        }
        Ok(Self {
            rows,
            cols,
            spacing,
            wavelength,
        })
    }

    /// Builds a geometry for a carrier frequency, with spacing given in
    /// wavelengths (0.5 for the usual half-wavelength grid).
    pub fn for_carrier(
        rows: usize,
        cols: usize,
        spacing_wavelengths: f64,
        carrier_hz: f64,
    ) -> Result<Self, GeometryError> {
        if !(carrier_hz.is_finite() && carrier_hz > 0.0) {
            return Err(GeometryError::BadWavelength(carrier_hz));
        }
        let wavelength = SPEED_OF_LIGHT / carrier_hz;
        Self::new(rows, cols, spacing_wavelengths * wavelength, wavelength)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn num_elements(&self) -> usize {
        self.rows * self.cols
    }

    /// Free-space wavenumber `2 pi / wavelength`.
    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    /// Position of element `n` in the enumeration order described above.
    pub fn element_position(&self, n: usize) -> Result<CartesianPoint, GeometryError> {
        let count = self.num_elements();
        if n >= count {
            return Err(GeometryError::ElementOutOfRange { index: n, count });
        }
        let row = n / self.cols;
        let col = n % self.cols;
        let cy = (self.cols as f64 - 1.0) / 2.0;
        let cz = (self.rows as f64 - 1.0) / 2.0;
        Ok(CartesianPoint {
            x: 0.0,
            y: (col as f64 - cy) * self.spacing,
            z: (row as f64 - cz) * self.spacing,
        })
    }

    /// All element positions in enumeration order.
    pub fn element_positions(&self) -> Vec<CartesianPoint> {
        (0..self.num_elements())
            .map(|n| self.element_position(n).expect("index in range"))
            .collect()
    }

    /// Largest element distance from the array center.
    pub fn max_element_radius(&self) -> f64 {
        let cy = (self.cols as f64 - 1.0) / 2.0 * self.spacing;
        let cz = (self.rows as f64 - 1.0) / 2.0 * self.spacing;
        (cy * cy + cz * cz).sqrt()
    }

    /// Diagonal extent of the array (twice [`Self::max_element_radius`]).
    pub fn aperture(&self) -> f64 {
        2.0 * self.max_element_radius()
    }

    /// Distance from a point to element `n`.
    ///
    /// Errors if the point coincides with the element, where the
    /// spherical-wave channel model is undefined.
    pub fn distance_to_element(
        &self,
        point: &CartesianPoint,
        n: usize,
    ) -> Result<f64, GeometryError> {
        let e = self.element_position(n)?;
        let d = point.distance_to(&e);
        if d == 0.0 {
            return Err(GeometryError::OnElement { element: n });
        }
        Ok(d)
    }
}

/// Point in Cartesian coordinates, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl CartesianPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance_to(&self, other: &CartesianPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Location in spherical coordinates about the RIS center.
///
/// Invariants enforced at construction: `range > 0` and finite,
/// `polar` in `[0, pi]`, `azimuth` in `[0, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalLocation {
    range: f64,
    polar: f64,
    azimuth: f64,
}

impl SphericalLocation {
    pub fn new(range: f64, polar: f64, azimuth: f64) -> Result<Self, GeometryError> {
        if !(range.is_finite() && range > 0.0) {
            return Err(GeometryError::BadRange(range));
        }
        if !(polar.is_finite() && (0.0..=std::f64::consts::PI).contains(&polar)) {
            return Err(GeometryError::BadPolar(polar));
        }
        if !(azimuth.is_finite() && (0.0..=std::f64::consts::PI).contains(&azimuth)) {
            return Err(GeometryError::BadAzimuth(azimuth));
        }
        Ok(Self {
            range,
            polar,
            azimuth,
        })
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn polar(&self) -> f64 {
        self.polar
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    /// Converts to Cartesian coordinates using the crate convention.
    pub fn to_cartesian(&self) -> CartesianPoint {
        let (st, ct) = self.polar.sin_cos();
        let (sp, cp) = self.azimuth.sin_cos();
        CartesianPoint {
            x: self.range * st * cp,
            y: self.range * st * sp,
            z: self.range * ct,
        }
    }

    /// Inverse of [`Self::to_cartesian`] on the served half-space `y >= 0`.
    pub fn from_cartesian(point: &CartesianPoint) -> Result<Self, GeometryError> {
        if point.y < 0.0 {
            return Err(GeometryError::BehindArray { y: point.y });
        }
        let range = point.norm();
        if !(range.is_finite() && range > 0.0) {
            return Err(GeometryError::BadRange(range));
        }
        let polar = (point.z / range).clamp(-1.0, 1.0).acos();
        let azimuth = point.y.atan2(point.x);
        Self::new(range, polar, azimuth)
    }

    /// Direction cosines the planar array actually observes:
    /// `(sin(polar) * sin(azimuth), cos(polar))`.
    ///
    /// Element distances depend on the location only through the range and
    /// this pair, which is why azimuth values `phi` and `pi - phi` produce
    /// identical channels.
    pub fn direction_cosines(&self) -> (f64, f64) {
        (self.polar.sin() * self.azimuth.sin(), self.polar.cos())
    }
}

// ---------------------------------------------------------------------------
