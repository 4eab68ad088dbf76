//! Location dictionary: candidate positions and their channel atoms.
//!
//! The estimator matches measurements against a finite codebook of channel
//! vectors. Candidates come in two blocks:
//!
//! - near field: a 3-D grid over (range, polar, azimuth) restricted to
//!   locations the phase-error test classifies as near field, each with an
//!   exact spherical-wave atom;
//! - far field: the angle grid alone, each with a planar-wavefront atom at
//!   a fixed reference range. A far-field atom represents every range along
//!   its direction up to one complex scale, which the estimator fits per
//!   column.
//!
//! Angle grids use cell centers `(i + 1/2) pi / n` so no candidate sits on
//! the domain boundary. Near-field columns precede far-field columns, and
//! ties in the estimator resolve toward lower column indices.

use crate::channel::{
    classify_region, ff_channel, nf_channel, nf_ff_boundary_range, ChannelError, Region,
    SignalModelParams,
};
use crate::geometry::{GeometryError, RisGeometry, SphericalLocation};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{self, Read, Write};
use thiserror::Error;

/// Fallback far-field reference range for degenerate arrays with no
/// near-field region, in meters.
pub const FF_REFERENCE_FLOOR: f64 = 1.0;

const DICTIONARY_MAGIC: &[u8; 8] = b"RLDICT01";

/// Errors from grid and dictionary construction or serialization.
#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("grid counts must be positive, got n_polar={n_polar}, n_azimuth={n_azimuth}")]
    EmptyAngleGrid { n_polar: usize, n_azimuth: usize },
    #[error("range step must be positive and finite, got {0}")]
    BadRangeStep(f64),
    #[error("range window [{min}, {max}] is empty or invalid")]
    BadRangeWindow { min: f64, max: f64 },
    #[error("far-field reference range {range} is still near field at polar {polar}, azimuth {azimuth}")]
    FfReferenceInNearField { range: f64, polar: f64, azimuth: f64 },
    #[error("no grid point classifies as near field; widen the range window")]
    EmptyNearFieldGrid,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("dictionary stream is corrupt: {0}")]
    Format(String),
}

/// Sampling specification for the dictionary grids.
///
/// `max_range` bounds the near-field range sweep and `ff_reference_range`
/// is the single range at which far-field atoms are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_polar: usize,
    pub n_azimuth: usize,
    pub range_step: f64,
    pub min_range: f64,
    pub max_range: f64,
    pub ff_reference_range: f64,
}

impl GridSpec {
    pub fn new(
        n_polar: usize,
        n_azimuth: usize,
        range_step: f64,
        min_range: f64,
        max_range: f64,
        ff_reference_range: f64,
    ) -> Result<Self, DictionaryError> {
        if n_polar == 0 || n_azimuth == 0 {
            return Err(DictionaryError::EmptyAngleGrid {
                n_polar,
                n_azimuth,
            });
        }
        if !(range_step.is_finite() && range_step > 0.0) {
            return Err(DictionaryError::BadRangeStep(range_step));
        }
        if !(min_range.is_finite() && min_range > 0.0 && max_range.is_finite())
            || max_range < min_range
        {
            return Err(DictionaryError::BadRangeWindow {
                min: min_range,
                max: max_range,
            });
        }
        if !(ff_reference_range.is_finite() && ff_reference_range > 0.0) {
            return Err(DictionaryError::BadRangeWindow {
                min: ff_reference_range,
                max: ff_reference_range,
            });
        }
        Ok(Self {
            n_polar,
            n_azimuth,
            range_step,
            min_range,
            max_range,
            ff_reference_range,
        })
    }

    /// Derives the range window from the geometry: the sweep starts at
    /// `min_range`, ends at the worst-direction near/far boundary, and the
    /// far-field reference sits at twice that boundary.
    pub fn for_geometry(
        geom: &RisGeometry,
        n_polar: usize,
        n_azimuth: usize,
        range_step: f64,
        min_range: f64,
    ) -> Result<Self, DictionaryError> {
        let ff_reference = choose_ff_reference_range(geom, n_polar, n_azimuth)?;
        let max_range = ff_reference / 2.0;
        Self::new(
            n_polar,
            n_azimuth,
            range_step,
            min_range,
            max_range.max(min_range),
            ff_reference,
        )
    }

    /// Near-field range samples `min_range + i * range_step`, ascending,
    /// up to `max_range`.
    pub fn range_samples(&self) -> Vec<f64> {
        range_sweep(self.min_range, self.max_range, self.range_step)
    }
}

fn range_sweep(min: f64, max: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut i = 0u32;
    loop {
        let r = min + f64::from(i) * step;
        if r > max * (1.0 + 1e-12) {
            break;
        }
        out.push(r);
        i += 1;
    }
    out
}

/// Cell-center angle grid: pairs `(polar, azimuth)` with
/// `polar_i = (i + 1/2) pi / n_polar` and likewise for azimuth.
///
/// Ordering is azimuth-major: the azimuth index is the outer (slow) loop
/// and the polar index the inner (fast) one.
pub fn build_angle_grid(n_polar: usize, n_azimuth: usize) -> Vec<(f64, f64)> {
    let mut grid = Vec::with_capacity(n_polar * n_azimuth);
    for ia in 0..n_azimuth {
        let azimuth = (ia as f64 + 0.5) * PI / n_azimuth as f64;
        for ip in 0..n_polar {
            let polar = (ip as f64 + 0.5) * PI / n_polar as f64;
            grid.push((polar, azimuth));
        }
    }
    grid
}

/// Far-field reference range: twice the largest near/far boundary over the
/// sampled directions, or [`FF_REFERENCE_FLOOR`] for arrays with no near
/// field at all.
pub fn choose_ff_reference_range(
    geom: &RisGeometry,
    n_polar: usize,
    n_azimuth: usize,
) -> Result<f64, DictionaryError> {
    if n_polar == 0 || n_azimuth == 0 {
        return Err(DictionaryError::EmptyAngleGrid {
            n_polar,
            n_azimuth,
        });
    }
    let mut worst: f64 = 0.0;
    for (polar, azimuth) in build_angle_grid(n_polar, n_azimuth) {
        match nf_ff_boundary_range(geom, polar, azimuth) {
            Ok(boundary) => worst = worst.max(boundary),
            Err(ChannelError::NoNearFieldBoundary) => {}
            Err(e) => return Err(e.into()),
        }
    }
    if worst == 0.0 {
        return Ok(FF_REFERENCE_FLOOR);
    }
    Ok(2.0 * worst)
}

/// Near-field candidate locations: the Cartesian product of the range
/// samples (ascending, outer loop) with the angle grid (inner loop),
/// keeping only points the phase-error test classifies as near field.
pub fn build_nf_grid(
    geom: &RisGeometry,
    spec: &GridSpec,
) -> Result<Vec<SphericalLocation>, DictionaryError> {
    let angles = build_angle_grid(spec.n_polar, spec.n_azimuth);
    let mut grid = Vec::new();
    for range in spec.range_samples() {
        for &(polar, azimuth) in &angles {
            let loc = SphericalLocation::new(range, polar, azimuth)
                .map_err(ChannelError::Geometry)?;
            if classify_region(geom, &loc)? == Region::NearField {
                grid.push(loc);
            }
        }
    }
    Ok(grid)
}

/// Candidate location tagged with the model used for its atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CandidateLocation {
    /// Full 3-D location with an exact spherical-wave atom.
    Near(SphericalLocation),
    /// Direction-only candidate with a planar-wavefront atom; the range is
    /// unresolved up to the estimator's per-column complex scale.
    Far { polar: f64, azimuth: f64 },
}

impl CandidateLocation {
    pub fn polar(&self) -> f64 {
        match self {
            Self::Near(loc) => loc.polar(),
            Self::Far { polar, .. } => *polar,
        }
    }

    pub fn azimuth(&self) -> f64 {
        match self {
            Self::Near(loc) => loc.azimuth(),
            Self::Far { azimuth, .. } => *azimuth,
        }
    }

    pub fn range(&self) -> Option<f64> {
        match self {
            Self::Near(loc) => Some(loc.range()),
            Self::Far { .. } => None,
        }
    }

    pub fn is_near(&self) -> bool {
        matches!(self, Self::Near(_))
    }
}

/// Which candidate blocks the dictionary carries.
///
/// `Unified` is the hybrid codebook. `NearOnly` drops the far-field block
/// and instead extends the exact-model range sweep through the far-field
/// shell up to the reference range, covering the same volume with many
/// more columns. `FarOnly` keeps just the planar-wavefront block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DictionaryVariant {
    Unified,
    NearOnly,
    FarOnly,
}

/// Channel atoms for every candidate location, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    geom: RisGeometry,
    spec: GridSpec,
    variant: DictionaryVariant,
    transmit_gain: f64,
    locations: Vec<CandidateLocation>,
    nf_count: usize,
    atoms: Vec<Complex64>,
}

impl Dictionary {
    pub fn geometry(&self) -> &RisGeometry {
        &self.geom
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn variant(&self) -> DictionaryVariant {
        self.variant
    }

    pub fn transmit_gain(&self) -> f64 {
        self.transmit_gain
    }

    /// Number of candidate columns.
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Number of RIS elements (rows of the atom matrix).
    pub fn n_elements(&self) -> usize {
        self.geom.num_elements()
    }

    /// Columns `0..nf_count()` are near-field candidates, the rest far field.
    pub fn nf_count(&self) -> usize {
        self.nf_count
    }

    pub fn location(&self, column: usize) -> &CandidateLocation {
        &self.locations[column]
    }

    pub fn locations(&self) -> &[CandidateLocation] {
        &self.locations
    }

    /// Atom for one candidate column.
    pub fn column(&self, column: usize) -> &[Complex64] {
        let n = self.n_elements();
        &self.atoms[column * n..(column + 1) * n]
    }

    pub fn is_far_column(&self, column: usize) -> bool {
        column >= self.nf_count
    }

    /// Writes the dictionary in the versioned binary cache format. All
    /// floats are stored as little-endian IEEE-754 bits, so a read-back
    /// reproduces the dictionary exactly.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), DictionaryError> {
        w.write_all(DICTIONARY_MAGIC)?;
        write_u64(&mut w, self.geom.rows() as u64)?;
        write_u64(&mut w, self.geom.cols() as u64)?;
        write_f64(&mut w, self.geom.spacing())?;
        write_f64(&mut w, self.geom.wavelength())?;
        write_u64(&mut w, self.spec.n_polar as u64)?;
        write_u64(&mut w, self.spec.n_azimuth as u64)?;
        write_f64(&mut w, self.spec.range_step)?;
        write_f64(&mut w, self.spec.min_range)?;
        write_f64(&mut w, self.spec.max_range)?;
        write_f64(&mut w, self.spec.ff_reference_range)?;
        let variant = match self.variant {
            DictionaryVariant::Unified => 0u8,
            DictionaryVariant::NearOnly => 1u8,
            DictionaryVariant::FarOnly => 2u8,
        };
        w.write_all(&[variant])?;
        write_f64(&mut w, self.transmit_gain)?;
        write_u64(&mut w, self.locations.len() as u64)?;
        write_u64(&mut w, self.nf_count as u64)?;
        for loc in &self.locations {
            match loc {
                CandidateLocation::Near(p) => {
                    w.write_all(&[0u8])?;
                    write_f64(&mut w, p.range())?;
                    write_f64(&mut w, p.polar())?;
                    write_f64(&mut w, p.azimuth())?;
                }
                CandidateLocation::Far { polar, azimuth } => {
                    w.write_all(&[1u8])?;
                    write_f64(&mut w, *polar)?;
                    write_f64(&mut w, *azimuth)?;
                }
            }
        }
        for v in &self.atoms {
            write_f64(&mut w, v.re)?;
            write_f64(&mut w, v.im)?;
        }
        Ok(())
    }

    /// Reads a dictionary previously written by [`Self::write_to`].
    pub fn read_from<R: Read>(mut r: R) -> Result<Self, DictionaryError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DICTIONARY_MAGIC {
            return Err(DictionaryError::Format(format!(
                "bad magic {magic:?}, expected {DICTIONARY_MAGIC:?}"
            )));
        }
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let spacing = read_f64(&mut r)?;
        let wavelength = read_f64(&mut r)?;
        let geom = RisGeometry::new(rows, cols, spacing, wavelength)
            .map_err(|e| DictionaryError::Format(e.to_string()))?;
        let n_polar = read_u64(&mut r)? as usize;
        let n_azimuth = read_u64(&mut r)? as usize;
        let range_step = read_f64(&mut r)?;
        let min_range = read_f64(&mut r)?;
        let max_range = read_f64(&mut r)?;
        let ff_reference_range = read_f64(&mut r)?;
        let spec = GridSpec::new(
            n_polar,
            n_azimuth,
            range_step,
            min_range,
            max_range,
            ff_reference_range,
        )
        .map_err(|e| DictionaryError::Format(e.to_string()))?;
        let mut variant_byte = [0u8; 1];
        r.read_exact(&mut variant_byte)?;
        let variant = match variant_byte[0] {
            0 => DictionaryVariant::Unified,
            1 => DictionaryVariant::NearOnly,
            2 => DictionaryVariant::FarOnly,
            other => {
                return Err(DictionaryError::Format(format!(
                    "unknown variant tag {other}"
                )))
            }
        };
        let transmit_gain = read_f64(&mut r)?;
        let count = read_u64(&mut r)? as usize;
        let nf_count = read_u64(&mut r)? as usize;
        if nf_count > count {
            return Err(DictionaryError::Format(format!(
                "near-field count {nf_count} exceeds column count {count}"
            )));
        }
        let mut locations = Vec::with_capacity(count);
        for _ in 0..count {
            let mut tag = [0u8; 1];
            r.read_exact(&mut tag)?;
            match tag[0] {
                0 => {
                    let range = read_f64(&mut r)?;
                    let polar = read_f64(&mut r)?;
                    let azimuth = read_f64(&mut r)?;
                    let loc = SphericalLocation::new(range, polar, azimuth)
                        .map_err(|e| DictionaryError::Format(e.to_string()))?;
                    locations.push(CandidateLocation::Near(loc));
                }
                1 => {
                    let polar = read_f64(&mut r)?;
                    let azimuth = read_f64(&mut r)?;
                    locations.push(CandidateLocation::Far { polar, azimuth });
                }
                other => {
                    return Err(DictionaryError::Format(format!(
                        "unknown location tag {other}"
                    )))
                }
            }
        }
        let n = geom.num_elements();
        let mut atoms = Vec::with_capacity(count * n);
        for _ in 0..count * n {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            atoms.push(Complex64::new(re, im));
        }
        Ok(Self {
            geom,
            spec,
            variant,
            transmit_gain,
            locations,
            nf_count,
            atoms,
        })
    }
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Builds the unified (hybrid near/far) dictionary.
pub fn build_dictionary(
    geom: &RisGeometry,
    spec: &GridSpec,
    params: &SignalModelParams,
) -> Result<Dictionary, DictionaryError> {
    build_dictionary_variant(geom, spec, params, DictionaryVariant::Unified)
}

/// Builds a dictionary of the requested variant. Construction is
/// deterministic: the same inputs produce bit-identical atoms.
pub fn build_dictionary_variant(
    geom: &RisGeometry,
    spec: &GridSpec,
    params: &SignalModelParams,
    variant: DictionaryVariant,
) -> Result<Dictionary, DictionaryError> {
    params.consistent_with(geom)?;
    let n = geom.num_elements();
    let angles = build_angle_grid(spec.n_polar, spec.n_azimuth);

    let mut locations = Vec::new();
    let mut atoms: Vec<Complex64> = Vec::new();

    let near_locations = match variant {
        DictionaryVariant::Unified => build_nf_grid(geom, spec)?,
        DictionaryVariant::NearOnly => {
            // Matched coverage: keep the exact model through the far-field
            // shell, sweeping ranges all the way to the reference range.
            let mut grid = Vec::new();
            for range in range_sweep(spec.min_range, spec.ff_reference_range, spec.range_step) {
                for &(polar, azimuth) in &angles {
                    grid.push(
                        SphericalLocation::new(range, polar, azimuth)
                            .map_err(ChannelError::Geometry)?,
                    );
                }
            }
            grid
        }
        DictionaryVariant::FarOnly => Vec::new(),
    };

    if variant == DictionaryVariant::Unified && near_locations.is_empty() {
        return Err(DictionaryError::EmptyNearFieldGrid);
    }

    for loc in &near_locations {
        let atom = nf_channel(geom, loc, params)?;
        atoms.extend_from_slice(atom.values());
        locations.push(CandidateLocation::Near(*loc));
    }
    let nf_count = locations.len();

    if variant != DictionaryVariant::NearOnly {
        for &(polar, azimuth) in &angles {
            let probe = SphericalLocation::new(spec.ff_reference_range, polar, azimuth)
                .map_err(ChannelError::Geometry)?;
            if classify_region(geom, &probe)? != Region::FarField {
                return Err(DictionaryError::FfReferenceInNearField {
                    range: spec.ff_reference_range,
                    polar,
                    azimuth,
                });
            }
            let atom = ff_channel(geom, polar, azimuth, spec.ff_reference_range, params)?;
            atoms.extend_from_slice(atom.values());
            locations.push(CandidateLocation::Far { polar, azimuth });
        }
    }

    debug_assert_eq!(atoms.len(), locations.len() * n);
    Ok(Dictionary {
        geom: geom.clone(),
        spec: *spec,
        variant,
        transmit_gain: params.transmit_gain(),
        locations,
        nf_count,
        atoms,
    })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn test_geom() -> RisGeometry {
        RisGeometry::for_carrier(10, 10, 0.5, 28e9).unwrap()
    }

    fn unit_params() -> SignalModelParams {
        SignalModelParams::unit(28e9).unwrap()
    }

    fn default_spec(geom: &RisGeometry) -> GridSpec {
        let lambda = geom.wavelength();
        GridSpec::for_geometry(geom, 10, 10, 5.0 * lambda, 10.0 * lambda).unwrap()
    }

    #[test]
    fn angle_grid_hits_cell_centers() {
        let grid = build_angle_grid(10, 10);
        assert_eq!(grid.len(), 100);
        let polar_min = grid.iter().map(|g| g.0).fold(f64::INFINITY, f64::min);
        let polar_max = grid.iter().map(|g| g.0).fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(polar_min, PI / 20.0, max_relative = 1e-15);
        assert_relative_eq!(polar_max, 19.0 * PI / 20.0, max_relative = 1e-15);

        let tiny = build_angle_grid(2, 1);
        assert_eq!(tiny.len(), 2);
        assert_relative_eq!(tiny[0].0, PI / 4.0, max_relative = 1e-15);
        assert_relative_eq!(tiny[0].1, PI / 2.0, max_relative = 1e-15);
        assert_relative_eq!(tiny[1].0, 3.0 * PI / 4.0, max_relative = 1e-15);
        assert_relative_eq!(tiny[1].1, PI / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn angle_grid_is_azimuth_major() {
        let grid = build_angle_grid(3, 2);
        // First block: azimuth fixed at its first cell, polar ascending.
        assert_eq!(grid[0].1, grid[1].1);
        assert_eq!(grid[1].1, grid[2].1);
        assert!(grid[0].0 < grid[1].0 && grid[1].0 < grid[2].0);
        assert!(grid[3].1 > grid[2].1);
    }

    #[test]
    fn ff_reference_doubles_the_worst_boundary_and_is_far_field() {
        let geom = test_geom();
        let reference = choose_ff_reference_range(&geom, 10, 10).unwrap();

        let mut worst: f64 = 0.0;
        for (polar, azimuth) in build_angle_grid(10, 10) {
            let b = nf_ff_boundary_range(&geom, polar, azimuth).unwrap();
            worst = worst.max(b);
        }
        assert_relative_eq!(reference, 2.0 * worst, max_relative = 1e-12);

        for (polar, azimuth) in build_angle_grid(10, 10) {
            let probe = SphericalLocation::new(reference, polar, azimuth).unwrap();
            assert_eq!(
                classify_region(&geom, &probe).unwrap(),
                Region::FarField,
                "reference range still near field at ({polar}, {azimuth})"
            );
        }
    }

    #[test]
    fn doubling_the_aperture_pushes_the_reference_out() {
        let small = test_geom();
        let big = RisGeometry::for_carrier(20, 20, 0.5, 28e9).unwrap();
        let r_small = choose_ff_reference_range(&small, 10, 10).unwrap();
        let r_big = choose_ff_reference_range(&big, 10, 10).unwrap();
        assert!(r_big > r_small);
    }

    #[test]
    fn single_element_falls_back_to_the_floor() {
        let geom = RisGeometry::new(1, 1, 0.005, 0.0107).unwrap();
        let r = choose_ff_reference_range(&geom, 4, 4).unwrap();
        assert_eq!(r, FF_REFERENCE_FLOOR);
    }

    #[test]
    fn nf_grid_is_all_near_field_and_ordered_by_range() {
        let geom = test_geom();
        let spec = default_spec(&geom);
        let grid = build_nf_grid(&geom, &spec).unwrap();
        assert!(!grid.is_empty());
        let n_ranges = spec.range_samples().len();
        assert!(grid.len() <= n_ranges * 100);
        let mut prev_range = 0.0;
        for loc in &grid {
            assert_eq!(classify_region(&geom, loc).unwrap(), Region::NearField);
            assert!(loc.range() >= prev_range);
            prev_range = loc.range();
        }
    }

    #[test]
    fn unified_dictionary_has_nf_block_then_angle_block() {
        let geom = test_geom();
        let spec = default_spec(&geom);
        let params = unit_params();
        let dict = build_dictionary(&geom, &spec, &params).unwrap();

        let s = build_nf_grid(&geom, &spec).unwrap().len();
        assert_eq!(dict.nf_count(), s);
        assert_eq!(dict.len(), s + 100);
        assert_eq!(dict.n_elements(), 100);
        for i in 0..dict.len() {
            assert_eq!(dict.is_far_column(i), i >= s);
            let norm: f64 = dict.column(i).iter().map(|v| v.norm_sqr()).sum();
            assert!(norm > 0.0, "column {i} has zero norm");
        }

        // Tagged locations are pairwise distinct.
        for i in 0..dict.len() {
            for j in (i + 1)..dict.len() {
                assert_ne!(dict.location(i), dict.location(j));
            }
        }
    }

    #[test]
    fn ff_atoms_share_the_reference_magnitude() {
        let geom = test_geom();
        let spec = default_spec(&geom);
        let dict = build_dictionary(&geom, &spec, &unit_params()).unwrap();
        let want = geom.wavelength() / (4.0 * PI * spec.ff_reference_range);
        for col in dict.nf_count()..dict.len() {
            for v in dict.column(col) {
                assert_relative_eq!(v.norm(), want, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let geom = test_geom();
        let spec = default_spec(&geom);
        let params = unit_params();
        let a = build_dictionary(&geom, &spec, &params).unwrap();
        let b = build_dictionary(&geom, &spec, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn near_only_variant_extends_through_the_far_shell() {
        let geom = test_geom();
        let spec = default_spec(&geom);
        let params = unit_params();
        let unified = build_dictionary(&geom, &spec, &params).unwrap();
        let near_only =
            build_dictionary_variant(&geom, &spec, &params, DictionaryVariant::NearOnly).unwrap();
        let far_only =
            build_dictionary_variant(&geom, &spec, &params, DictionaryVariant::FarOnly).unwrap();

        assert_eq!(near_only.nf_count(), near_only.len());
        assert!(near_only.len() > unified.len());
        let max_range = near_only
            .locations()
            .iter()
            .filter_map(|l| l.range())
            .fold(0.0, f64::max);
        assert!(max_range > spec.max_range);
        assert!(max_range <= spec.ff_reference_range * (1.0 + 1e-12));

        assert_eq!(far_only.nf_count(), 0);
        assert_eq!(far_only.len(), 100);
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let geom = test_geom();
        let spec = default_spec(&geom);
        let dict = build_dictionary(&geom, &spec, &unit_params()).unwrap();

        let mut buf = Vec::new();
        dict.write_to(&mut buf).unwrap();
        let back = Dictionary::read_from(buf.as_slice()).unwrap();
        assert_eq!(dict, back);

        // Bitwise equality of every stored float, not just PartialEq.
        for col in 0..dict.len() {
            for (a, b) in dict.column(col).iter().zip(back.column(col)) {
                assert_eq!(a.re.to_bits(), b.re.to_bits());
                assert_eq!(a.im.to_bits(), b.im.to_bits());
            }
        }
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let geom = test_geom();
        let spec = default_spec(&geom);
        let dict = build_dictionary(&geom, &spec, &unit_params()).unwrap();
        let mut buf = Vec::new();
        dict.write_to(&mut buf).unwrap();
        buf[0] ^= 0xFF;
        assert!(matches!(
            Dictionary::read_from(buf.as_slice()),
            Err(DictionaryError::Format(_))
        ));
    }

    #[test]
    fn truncated_stream_is_rejected() {
        let geom = test_geom();
        let spec = default_spec(&geom);
        let dict = build_dictionary(&geom, &spec, &unit_params()).unwrap();
        let mut buf = Vec::new();
        dict.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() / 2);
        assert!(Dictionary::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn mirror_azimuth_cells_tag_distinct_locations_with_near_equal_atoms() {
        // The grid pairs azimuth cells phi and pi - phi; their atoms are
        // numerically indistinguishable because the array only sees
        // sin(phi). The tags stay distinct; metrics fold this symmetry.
        let geom = test_geom();
        let spec = default_spec(&geom);
        let dict = build_dictionary(&geom, &spec, &unit_params()).unwrap();
        let s = dict.nf_count();
        // Far block is azimuth-major with 10 polar cells per azimuth cell:
        // column s + ia * 10 + ip pairs with s + (9 - ia) * 10 + ip.
        let a = dict.column(s);
        let b = dict.column(s + 90);
        let (la, lb) = (dict.location(s), dict.location(s + 90));
        assert_ne!(la, lb);
        assert_relative_eq!(la.azimuth() + lb.azimuth(), PI, max_relative = 1e-12);
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).norm() / x.norm() < 1e-9);
        }
    }

    #[test]
    fn empty_near_field_grid_is_an_error() {
        // Range window entirely beyond the boundary: nothing is near field.
        let geom = test_geom();
        let lambda = geom.wavelength();
        let reference = choose_ff_reference_range(&geom, 10, 10).unwrap();
        let spec = GridSpec::new(10, 10, 5.0 * lambda, reference * 2.0, reference * 3.0, reference)
            .unwrap();
        assert!(matches!(
            build_dictionary(&geom, &spec, &unit_params()),
            Err(DictionaryError::EmptyNearFieldGrid)
        ));
    }
}
