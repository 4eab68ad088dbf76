//! Fisher information and Cramer-Rao bounds for the location parameters.
//!
//! Each sensing cycle contributes rank-at-most-two information about the
//! unknown location. With measurement `y_q = b_q^T (h_bs * h(p)) s + w_q`
//! and circular Gaussian noise of power `sigma^2`, the information matrix
//! is
//!
//! ```text
//! J_ij = (2 / sigma^2) * sum_q Re{ conj(a_i^q) a_j^q },
//! a_i^q = b_q^T (h_bs * dh/dp_i) s,
//! ```
//!
//! over parameters `p = (range, polar, azimuth)` in the near field and
//! `p = (polar, azimuth)` in the far field. The diagonal of `J^{-1}` lower
//! bounds the per-parameter error variance of any unbiased estimator.
//!
//! Derivatives come in two flavors: the default phase-only model keeps the
//! dominant `-j k dd/dp` term, matching the regime `k d >> 1` where the
//! amplitude variation is negligible; the full model adds the `-1/d`
//! amplitude term and equals the exact channel Jacobian.

use crate::channel::{ff_channel, nf_channel, ChannelError, ChannelVector, PhaseShiftVector, SignalModelParams};
use crate::geometry::{RisGeometry, SphericalLocation};
use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

/// Relative ridge added to the information matrix inside optimization
/// objectives so early cycles with rank-deficient information stay usable.
pub const REGULARIZATION_SCALE: f64 = 1e-12;

/// Largest condition number at which bound values are still reported.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Errors from information-matrix assembly and inversion.
#[derive(Debug, Error)]
pub enum CrbError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("at least one derivative vector is required")]
    Empty,
    #[error("expected {expected} projections, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("derivative vectors must share one length, got {left} and {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("noise power must be positive and finite, got {0}")]
    BadNoisePower(f64),
    #[error("weight must be finite and non-negative, got {0}")]
    BadWeight(f64),
    #[error("information matrix condition number {condition:.3e} exceeds {limit:.0e}")]
    IllConditioned { condition: f64, limit: f64 },
    #[error("information matrix is singular")]
    Singular,
}

/// Which terms of the channel Jacobian to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum DerivativeMode {
    /// Keep only the `-j k dd/dp` phase term (the `k d >> 1` regime).
    #[default]
    PhaseOnly,
    /// Keep the amplitude term too; equals the exact channel Jacobian.
    Full,
}

/// Non-negative weights for the per-parameter bound values.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CrbWeights {
    pub range: f64,
    pub polar: f64,
    pub azimuth: f64,
}

impl Default for CrbWeights {
    fn default() -> Self {
        Self {
            range: 0.0,
            polar: 1.0,
            azimuth: 1.0,
        }
    }
}

impl CrbWeights {
    pub fn validate(&self) -> Result<(), CrbError> {
        for w in [self.range, self.polar, self.azimuth] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(CrbError::BadWeight(w));
            }
        }
        Ok(())
    }

    /// Weight vector in parameter order: `[range, polar, azimuth]` for a
    /// three-parameter (near-field) matrix, `[polar, azimuth]` for two.
    pub fn for_dim(&self, dim: usize) -> Result<Vec<f64>, CrbError> {
        self.validate()?;
        match dim {
            3 => Ok(vec![self.range, self.polar, self.azimuth]),
            2 => Ok(vec![self.polar, self.azimuth]),
            other => Err(CrbError::DimensionMismatch {
                expected: 3,
                got: other,
            }),
        }
    }
}

fn trig(location_polar: f64, location_azimuth: f64) -> (f64, f64, f64, f64) {
    (
        location_polar.sin(),
        location_polar.cos(),
        location_azimuth.sin(),
        location_azimuth.cos(),
    )
}

/// Jacobian of the exact spherical-wave channel with respect to
/// `(range, polar, azimuth)`, one vector per parameter.
pub fn nf_channel_derivatives(
    geom: &RisGeometry,
    location: &SphericalLocation,
    params: &SignalModelParams,
    mode: DerivativeMode,
) -> Result<[ChannelVector; 3], CrbError> {
    let h = nf_channel(geom, location, params)?;
    let point = location.to_cartesian();
    let (u, v) = location.direction_cosines();
    let (st, ct, sp, cp) = trig(location.polar(), location.azimuth());
    let r = location.range();
    let k = geom.wavenumber();
    let n = geom.num_elements();

    let mut dr = Vec::with_capacity(n);
    let mut dpolar = Vec::with_capacity(n);
    let mut dazimuth = Vec::with_capacity(n);
    for i in 0..n {
        let e = geom.element_position(i)?;
        let d = geom.distance_to_element(&point, i)?;
        // Distance partials from d^2 = R^2 - 2R(y u + z v) + y^2 + z^2.
        let dd_dr = (r - e.y * u - e.z * v) / d;
        let dd_dpolar = r * (e.z * st - e.y * ct * sp) / d;
        let dd_dazimuth = -r * e.y * st * cp / d;
        let factor = match mode {
            DerivativeMode::PhaseOnly => Complex64::new(0.0, -k),
            DerivativeMode::Full => Complex64::new(-1.0 / d, -k),
        };
        let base = h.values()[i] * factor;
        dr.push(base * dd_dr);
        dpolar.push(base * dd_dpolar);
        dazimuth.push(base * dd_dazimuth);
    }
    Ok([
        ChannelVector::new(dr)?,
        ChannelVector::new(dpolar)?,
        ChannelVector::new(dazimuth)?,
    ])
}

/// Jacobian of the planar-wavefront channel with respect to
/// `(polar, azimuth)` at a fixed range. The amplitude does not depend on
/// the angles, so this Jacobian is exact in both derivative modes.
pub fn ff_channel_derivatives(
    geom: &RisGeometry,
    polar: f64,
    azimuth: f64,
    range: f64,
    params: &SignalModelParams,
) -> Result<[ChannelVector; 2], CrbError> {
    let a = ff_channel(geom, polar, azimuth, range, params)?;
    let (st, ct, sp, cp) = trig(polar, azimuth);
    let k = geom.wavenumber();
    let n = geom.num_elements();

    let mut dpolar = Vec::with_capacity(n);
    let mut dazimuth = Vec::with_capacity(n);
    for i in 0..n {
        let e = geom.element_position(i)?;
        let jk = Complex64::new(0.0, k);
        dpolar.push(a.values()[i] * jk * (e.y * ct * sp - e.z * st));
        dazimuth.push(a.values()[i] * jk * (e.y * st * cp));
    }
    Ok([ChannelVector::new(dpolar)?, ChannelVector::new(dazimuth)?])
}

/// Applies the BS leg to each derivative vector.
pub fn cascade_derivatives(
    bs_leg: &ChannelVector,
    derivs: &[ChannelVector],
) -> Result<Vec<ChannelVector>, CrbError> {
    derivs
        .iter()
        .map(|d| crate::channel::cascaded_channel(bs_leg, d).map_err(CrbError::from))
        .collect()
}

/// Projects the cascaded derivative vectors through one phase
/// configuration: `a_i = (b^T w_i) s`.
pub fn project_derivatives(
    cascaded_derivs: &[ChannelVector],
    phases: &PhaseShiftVector,
    symbol: Complex64,
) -> Result<Vec<Complex64>, CrbError> {
    if cascaded_derivs.is_empty() {
        return Err(CrbError::Empty);
    }
    cascaded_derivs
        .iter()
        .map(|w| {
            crate::channel::steered_sum(phases, w)
                .map(|z| z * symbol)
                .map_err(CrbError::from)
        })
        .collect()
}

/// Symmetric positive semi-definite information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    m: DMatrix<f64>,
}

impl FisherMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Adds one cycle's contribution `(2 / sigma^2) Re{conj(a_i) a_j}`.
    /// Each contribution has rank at most two.
    pub fn accumulate(
        &mut self,
        projections: &[Complex64],
        noise_power: f64,
    ) -> Result<(), CrbError> {
        if projections.len() != self.dim() {
            return Err(CrbError::DimensionMismatch {
                expected: self.dim(),
                got: projections.len(),
            });
        }
        if !(noise_power.is_finite() && noise_power > 0.0) {
            return Err(CrbError::BadNoisePower(noise_power));
        }
        let scale = 2.0 / noise_power;
        for i in 0..self.dim() {
            for j in i..self.dim() {
                let v = scale * (projections[i].conj() * projections[j]).re;
                self.m[(i, j)] += v;
                if j != i {
                    self.m[(j, i)] += v;
                }
            }
        }
        Ok(())
    }

    /// `J + eps * I` with `eps = scale * trace(J)` (or `scale` alone for a
    /// zero matrix), keeping rank-deficient matrices invertible without
    /// noticeably moving well-conditioned ones.
    pub fn regularized(&self, scale: f64) -> FisherMatrix {
        let trace = self.m.trace();
        let eps = if trace > 0.0 { scale * trace } else { scale };
        let mut m = self.m.clone();
        for i in 0..self.dim() {
            m[(i, i)] += eps;
        }
        FisherMatrix { m }
    }

    /// Ratio of extreme absolute eigenvalues; infinite for a singular
    /// matrix.
    pub fn condition_number(&self) -> f64 {
        let eig = self.m.clone().symmetric_eigen();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for v in eig.eigenvalues.iter() {
            lo = lo.min(v.abs());
            hi = hi.max(v.abs());
        }
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// Matrix inverse, failing on singular input.
    pub fn try_inverse(&self) -> Result<DMatrix<f64>, CrbError> {
        self.m.clone().try_inverse().ok_or(CrbError::Singular)
    }
}

/// Builds the information matrix over a whole phase history.
pub fn fisher_matrix(
    cascaded_derivs: &[ChannelVector],
    phase_history: &[PhaseShiftVector],
    symbol: Complex64,
    noise_power: f64,
) -> Result<FisherMatrix, CrbError> {
    if cascaded_derivs.is_empty() {
        return Err(CrbError::Empty);
    }
    let len = cascaded_derivs[0].len();
    for d in cascaded_derivs {
        if d.len() != len {
            return Err(CrbError::LengthMismatch {
                left: len,
                right: d.len(),
            });
        }
    }
    let mut fim = FisherMatrix::zeros(cascaded_derivs.len());
    for phases in phase_history {
        let a = project_derivatives(cascaded_derivs, phases, symbol)?;
        fim.accumulate(&a, noise_power)?;
    }
    Ok(fim)
}

/// Diagonal of the inverse information matrix: the per-parameter variance
/// bounds, in parameter order. Refuses matrices whose condition number
/// makes the inverse numerically meaningless.
pub fn crb_values(fim: &FisherMatrix) -> Result<Vec<f64>, CrbError> {
    let condition = fim.condition_number();
    if !(condition <= CONDITION_LIMIT) {
        return Err(CrbError::IllConditioned {
            condition,
            limit: CONDITION_LIMIT,
        });
    }
    let inv = fim.try_inverse()?;
    Ok((0..fim.dim()).map(|i| inv[(i, i)]).collect())
}

/// Weighted sum of variance bounds `sum_i w_i [J^{-1}]_ii`, the scalar the
/// phase optimizer drives down. The caller chooses how much regularization
/// the matrix carries.
pub fn weighted_crb_objective(fim: &FisherMatrix, weights: &[f64]) -> Result<f64, CrbError> {
    if weights.len() != fim.dim() {
        return Err(CrbError::DimensionMismatch {
            expected: fim.dim(),
            got: weights.len(),
        });
    }
    for &w in weights {
        if !(w.is_finite() && w >= 0.0) {
            return Err(CrbError::BadWeight(w));
        }
    }
    let inv = fim.try_inverse()?;
    Ok(weights
        .iter()
        .enumerate()
        .map(|(i, w)| w * inv[(i, i)])
        .sum())
}

// ---------------------------------------------------------------------------
