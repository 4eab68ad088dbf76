//! Monte Carlo experiments: accuracy versus SNR and runtime versus size.
//!
//! The accuracy experiment sweeps SNR points, runs a batch of trials per
//! (SNR, dictionary variant, phase policy) combination, and reports root
//! mean square errors of the final-cycle estimates. Trials are paired:
//! the trial seed depends only on the SNR index and trial index, never on
//! the variant or policy, so competing arms face identical true locations,
//! identical first-cycle phases, and identical noise realizations.
//!
//! The planar array cannot distinguish a user from its mirror image across
//! the array plane's normal section (only `sin(azimuth)` enters the
//! channel), so azimuth errors are folded: an estimate of `pi - azimuth`
//! counts as exact. This is a property of the physics, not the estimator.
//!
//! The runtime experiment grows the array side length and times whole
//! trials serially, isolating how the dictionary size drives the cost of
//! each sensing cycle.

use crate::channel::{classify_region, SignalModelParams};
use crate::crb::{CrbWeights, DerivativeMode};
use crate::dictionary::{build_dictionary_variant, Dictionary, DictionaryVariant, GridSpec};
use crate::geometry::{CartesianPoint, RisGeometry, SphericalLocation};
use crate::optimizer::OptimizerConfig;
use crate::protocol::{
    run_protocol, MeasurementModel, PhasePolicy, ProtocolConfig, ProtocolError, ProtocolTrace, Snr,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use thiserror::Error;

/// Errors from experiment configuration or execution.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Channel(#[from] crate::channel::ChannelError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Dictionary(#[from] crate::dictionary::DictionaryError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("invalid experiment configuration: {0}")]
    BadConfig(String),
    #[error("could not draw a valid location after {0} attempts")]
    SamplingExhausted(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Where true user locations are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserPlacement {
    /// Rejection-sampled inside the near-field annulus of the grid's
    /// range window.
    NearField,
    /// On the far side, at `far_range_factor` times the far-field
    /// reference range.
    FarField,
}

/// Full experiment description. Serializable so runs are reproducible
/// from a config file alone. Every field has a default, so a partial
/// (or empty) config is valid; unknown keys are rejected to catch typos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Array rows for the accuracy experiment.
    pub rows: usize,
    /// Array columns for the accuracy experiment.
    pub cols: usize,
    /// Element pitch in wavelengths.
    pub spacing_wavelengths: f64,
    pub carrier_hz: f64,
    pub bs_x: f64,
    pub bs_y: f64,
    pub bs_z: f64,
    pub bs_gain: f64,
    pub transmit_gain: f64,
    pub n_polar: usize,
    pub n_azimuth: usize,
    pub range_step_wavelengths: f64,
    pub min_range_wavelengths: f64,
    /// Sensing cycles per trial.
    pub cycles: usize,
    /// SNR sweep points in dB.
    pub snr_db: Vec<f64>,
    /// Trials per (SNR, variant, policy) cell.
    pub trials: usize,
    pub weights: CrbWeights,
    pub optimizer: OptimizerConfig,
    pub derivative_mode: DerivativeMode,
    pub placement: UserPlacement,
    /// Range multiple of the far-field reference used by far placement.
    pub far_range_factor: f64,
    /// Angular sampling box; the default avoids the polar axis, where
    /// azimuth is unidentifiable.
    pub polar_min: f64,
    pub polar_max: f64,
    pub azimuth_min: f64,
    pub azimuth_max: f64,
    pub variants: Vec<DictionaryVariant>,
    pub policies: Vec<PhasePolicy>,
    pub master_seed: u64,
    /// Square array side lengths for the runtime experiment.
    pub array_sides: Vec<usize>,
    /// Trials per cell of the runtime experiment (run serially).
    pub runtime_runs: usize,
    /// Fixed SNR for the runtime experiment, in dB.
    pub runtime_snr_db: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rows: 10,
            cols: 10,
            spacing_wavelengths: 0.5,
            carrier_hz: 28e9,
            bs_x: 3.0,
            bs_y: -1.0,
            bs_z: 0.5,
            bs_gain: 1.0,
            transmit_gain: 1.0,
            n_polar: 10,
            n_azimuth: 10,
            range_step_wavelengths: 5.0,
            min_range_wavelengths: 10.0,
            cycles: 15,
            snr_db: vec![0.0, 10.0, 20.0, 30.0],
            trials: 50,
            weights: CrbWeights::default(),
            optimizer: OptimizerConfig::default(),
            derivative_mode: DerivativeMode::default(),
            placement: UserPlacement::NearField,
            far_range_factor: 3.0,
            polar_min: PI / 4.0,
            polar_max: 3.0 * PI / 4.0,
            azimuth_min: PI / 4.0,
            azimuth_max: 3.0 * PI / 4.0,
            variants: vec![DictionaryVariant::Unified],
            policies: vec![PhasePolicy::Random, PhasePolicy::Optimized],
            master_seed: 0x5EED,
            array_sides: vec![5, 10, 15],
            runtime_runs: 20,
            runtime_snr_db: 20.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.trials == 0 || self.runtime_runs == 0 {
            return Err(ExperimentError::BadConfig(
                "trial counts must be positive".into(),
            ));
        }
        if self.snr_db.is_empty() {
            return Err(ExperimentError::BadConfig("snr_db must be non-empty".into()));
        }
        if self.variants.is_empty() || self.policies.is_empty() {
            return Err(ExperimentError::BadConfig(
                "variants and policies must be non-empty".into(),
            ));
        }
        if self.cycles == 0 {
            return Err(ExperimentError::BadConfig("cycles must be positive".into()));
        }
        if !(self.polar_min < self.polar_max
            && self.polar_min > 0.0
            && self.polar_max < PI
            && self.azimuth_min < self.azimuth_max
            && self.azimuth_min >= 0.0
            && self.azimuth_max <= PI)
        {
            return Err(ExperimentError::BadConfig(format!(
                "angle box [{}, {}] x [{}, {}] is invalid",
                self.polar_min, self.polar_max, self.azimuth_min, self.azimuth_max
            )));
        }
        if !(self.far_range_factor.is_finite() && self.far_range_factor >= 1.0) {
            return Err(ExperimentError::BadConfig(format!(
                "far_range_factor must be at least 1, got {}",
                self.far_range_factor
            )));
        }
        if self.array_sides.iter().any(|&s| s == 0) {
            return Err(ExperimentError::BadConfig(
                "array sides must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<RisGeometry, ExperimentError> {
        Ok(RisGeometry::for_carrier(
            self.rows,
            self.cols,
            self.spacing_wavelengths,
            self.carrier_hz,
        )?)
    }

    fn geometry_for_side(&self, side: usize) -> Result<RisGeometry, ExperimentError> {
        Ok(RisGeometry::for_carrier(
            side,
            side,
            self.spacing_wavelengths,
            self.carrier_hz,
        )?)
    }

    pub fn params(&self) -> Result<SignalModelParams, ExperimentError> {
        Ok(SignalModelParams::new(
            self.transmit_gain,
            num_complex::Complex64::new(1.0, 0.0),
            0.0,
            self.carrier_hz,
        )?)
    }

    pub fn bs_position(&self) -> CartesianPoint {
        CartesianPoint {
            x: self.bs_x,
            y: self.bs_y,
            z: self.bs_z,
        }
    }

    pub fn grid_spec(&self, geom: &RisGeometry) -> Result<GridSpec, ExperimentError> {
        let lambda = geom.wavelength();
        Ok(GridSpec::for_geometry(
            geom,
            self.n_polar,
            self.n_azimuth,
            self.range_step_wavelengths * lambda,
            self.min_range_wavelengths * lambda,
        )?)
    }

    fn protocol_config(&self, policy: PhasePolicy) -> ProtocolConfig {
        ProtocolConfig {
            cycles: self.cycles,
            policy,
            weights: self.weights,
            optimizer: self.optimizer,
            derivative_mode: self.derivative_mode,
            reuse_predicted_signals: true,
        }
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream purposes for [`derive_seed`].
pub const SEED_PURPOSE_LOCATION: u64 = 1;
pub const SEED_PURPOSE_PROTOCOL: u64 = 2;

/// Collision-resistant seed derivation: one independent stream per
/// `(master, snr index, trial, purpose)` tuple.
pub fn derive_seed(master: u64, snr_index: u64, trial: u64, purpose: u64) -> u64 {
    let mut state = master.wrapping_add(0x9E37_79B9_7F4A_7C15);
    for v in [snr_index, trial, purpose] {
        state = mix64(state ^ v.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1));
    }
    mix64(state)
}

/// Draws a true location per the placement rule.
pub fn sample_true_location(
    geom: &RisGeometry,
    spec: &GridSpec,
    config: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SphericalLocation, ExperimentError> {
    const MAX_ATTEMPTS: usize = 10_000;
    match config.placement {
        UserPlacement::NearField => {
            for _ in 0..MAX_ATTEMPTS {
                let polar = rng.gen_range(config.polar_min..config.polar_max);
                let azimuth = rng.gen_range(config.azimuth_min..config.azimuth_max);
                let range = rng.gen_range(spec.min_range..=spec.max_range);
                let loc = SphericalLocation::new(range, polar, azimuth)?;
                if classify_region(geom, &loc)? == crate::channel::Region::NearField {
                    return Ok(loc);
                }
            }
            Err(ExperimentError::SamplingExhausted(MAX_ATTEMPTS))
        }
        UserPlacement::FarField => {
            let polar = rng.gen_range(config.polar_min..config.polar_max);
            let azimuth = rng.gen_range(config.azimuth_min..config.azimuth_max);
            let range = config.far_range_factor * spec.ff_reference_range;
            Ok(SphericalLocation::new(range, polar, azimuth)?)
        }
    }
}

/// Azimuth error with the mirror symmetry folded out: an estimate of
/// `pi - azimuth` is as good as the azimuth itself.
pub fn folded_azimuth_error(true_azimuth: f64, estimated_azimuth: f64) -> f64 {
    let direct = (estimated_azimuth - true_azimuth).abs();
    let mirrored = ((PI - estimated_azimuth) - true_azimuth).abs();
    direct.min(mirrored)
}

/// Per-trial error summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub polar_error: f64,
    pub azimuth_error: f64,
    pub range_error: Option<f64>,
    pub region_correct: bool,
    pub cpu_seconds: f64,
}

/// One aggregated cell of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub snr_db: f64,
    pub n_elements: usize,
    pub variant: DictionaryVariant,
    pub policy: PhasePolicy,
    pub trials: usize,
    /// RMSE of the combined angle error `sqrt(polar^2 + azimuth^2)`.
    pub rmse_angle: f64,
    pub rmse_polar: f64,
    pub rmse_azimuth: f64,
    /// Delta-method standard error of `rmse_angle`.
    pub se_rmse_angle: f64,
    /// RMSE of range over trials with a near-field estimate, if any.
    pub rmse_range: Option<f64>,
    /// Fraction of trials whose final region matched the placement.
    pub nf_ff_classification_accuracy: f64,
    pub mean_cpu_seconds: f64,
    pub median_cpu_seconds: f64,
}

fn rmse(squares: &[f64]) -> f64 {
    if squares.is_empty() {
        return 0.0;
    }
    (squares.iter().sum::<f64>() / squares.len() as f64).sqrt()
}

/// Delta method: `Var(rmse) ~ Var(mean of squares) / (4 mse)`.
fn se_of_rmse(squares: &[f64]) -> f64 {
    let n = squares.len();
    if n < 2 {
        return 0.0;
    }
    let mean = squares.iter().sum::<f64>() / n as f64;
    if mean == 0.0 {
        return 0.0;
    }
    let var = squares.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (var / n as f64).sqrt() / (2.0 * mean.sqrt())
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

fn aggregate(
    snr_db: f64,
    n_elements: usize,
    variant: DictionaryVariant,
    policy: PhasePolicy,
    outcomes: &[TrialOutcome],
) -> ResultRow {
    let angle_sq: Vec<f64> = outcomes
        .iter()
        .map(|o| o.polar_error.powi(2) + o.azimuth_error.powi(2))
        .collect();
    let polar_sq: Vec<f64> = outcomes.iter().map(|o| o.polar_error.powi(2)).collect();
    let azimuth_sq: Vec<f64> = outcomes.iter().map(|o| o.azimuth_error.powi(2)).collect();
    let range_sq: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.range_error.map(|e| e * e))
        .collect();
    let cpu: Vec<f64> = outcomes.iter().map(|o| o.cpu_seconds).collect();
    let correct = outcomes.iter().filter(|o| o.region_correct).count();

    ResultRow {
        snr_db,
        n_elements,
        variant,
        policy,
        trials: outcomes.len(),
        rmse_angle: rmse(&angle_sq),
        rmse_polar: rmse(&polar_sq),
        rmse_azimuth: rmse(&azimuth_sq),
        se_rmse_angle: se_of_rmse(&angle_sq),
        rmse_range: if range_sq.is_empty() {
            None
        } else {
            Some(rmse(&range_sq))
        },
        nf_ff_classification_accuracy: correct as f64 / outcomes.len() as f64,
        mean_cpu_seconds: mean(&cpu),
        median_cpu_seconds: median(&cpu),
    }
}

fn trial_trace(
    config: &ExperimentConfig,
    geom: &RisGeometry,
    spec: &GridSpec,
    dict: &Dictionary,
    policy: PhasePolicy,
    snr_db: f64,
    snr_index: u64,
    trial: u64,
) -> Result<ProtocolTrace, ExperimentError> {
    // Trial `t` visits the same true location at every sweep point, so
    // point-to-point RMSE differences reflect the SNR, not a fresh draw
    // of user positions; noise and phases stay independent per point.
    let loc_seed = derive_seed(config.master_seed, 0, trial, SEED_PURPOSE_LOCATION);
    let mut loc_rng = ChaCha8Rng::seed_from_u64(loc_seed);
    let truth = sample_true_location(geom, spec, config, &mut loc_rng)?;

    let model = MeasurementModel::new(
        geom.clone(),
        &config.bs_position(),
        config.bs_gain,
        config.params()?,
        truth,
    )?;
    let protocol_seed = derive_seed(config.master_seed, snr_index, trial, SEED_PURPOSE_PROTOCOL);
    Ok(run_protocol(
        &model,
        dict,
        &config.protocol_config(policy),
        Snr::Db(snr_db),
        protocol_seed,
    )?)
}

/// Runs one fully seeded trial and returns its trace: the same true
/// location, phases, and noise as trial `trial` of the SNR point at
/// `snr_index` inside [`run_rmse_experiment`].
pub fn run_single_trial(
    config: &ExperimentConfig,
    snr_index: usize,
    trial: u64,
    variant: DictionaryVariant,
    policy: PhasePolicy,
) -> Result<ProtocolTrace, ExperimentError> {
    config.validate()?;
    if snr_index >= config.snr_db.len() {
        return Err(ExperimentError::BadConfig(format!(
            "snr index {snr_index} is out of range for {} sweep points",
            config.snr_db.len()
        )));
    }
    let geom = config.geometry()?;
    let spec = config.grid_spec(&geom)?;
    let params = config.params()?;
    let dict = build_dictionary_variant(&geom, &spec, &params, variant)?;
    trial_trace(
        config,
        &geom,
        &spec,
        &dict,
        policy,
        config.snr_db[snr_index],
        snr_index as u64,
        trial,
    )
}

fn run_trial(
    config: &ExperimentConfig,
    geom: &RisGeometry,
    spec: &GridSpec,
    dict: &Dictionary,
    policy: PhasePolicy,
    snr_db: f64,
    snr_index: u64,
    trial: u64,
) -> Result<TrialOutcome, ExperimentError> {
    let trace = trial_trace(config, geom, spec, dict, policy, snr_db, snr_index, trial)?;
    let last = trace.final_record();
    let expected_region = match config.placement {
        UserPlacement::NearField => crate::channel::Region::NearField,
        UserPlacement::FarField => crate::channel::Region::FarField,
    };
    Ok(TrialOutcome {
        polar_error: (last.estimate_polar - trace.true_polar).abs(),
        azimuth_error: folded_azimuth_error(trace.true_azimuth, last.estimate_azimuth),
        range_error: last.estimate_range.map(|r| (r - trace.true_range).abs()),
        region_correct: last.estimate_region == expected_region,
        cpu_seconds: trace.elapsed_seconds,
    })
}

/// Accuracy sweep: every SNR point against every dictionary variant and
/// phase policy. Trials inside a cell run in parallel; seeds are fixed by
/// indices, so results do not depend on the thread schedule.
pub fn run_rmse_experiment(
    config: &ExperimentConfig,
) -> Result<Vec<ResultRow>, ExperimentError> {
    config.validate()?;
    let geom = config.geometry()?;
    let spec = config.grid_spec(&geom)?;
    let params = config.params()?;

    let dictionaries: Vec<(DictionaryVariant, Dictionary)> = config
        .variants
        .iter()
        .map(|&v| Ok((v, build_dictionary_variant(&geom, &spec, &params, v)?)))
        .collect::<Result<_, ExperimentError>>()?;

    let mut rows = Vec::new();
    for (snr_index, &snr_db) in config.snr_db.iter().enumerate() {
        for (variant, dict) in &dictionaries {
            for &policy in &config.policies {
                let outcomes: Vec<TrialOutcome> = (0..config.trials as u64)
                    .into_par_iter()
                    .map(|trial| {
                        run_trial(
                            config,
                            &geom,
                            &spec,
                            dict,
                            policy,
                            snr_db,
                            snr_index as u64,
                            trial,
                        )
                    })
                    .collect::<Result<_, _>>()?;
                rows.push(aggregate(
                    snr_db,
                    geom.num_elements(),
                    *variant,
                    policy,
                    &outcomes,
                ));
            }
        }
    }
    Ok(rows)
}

/// Runtime sweep: one cell per (array side, variant), random-phase policy,
/// trials run strictly serially so timings do not contend.
pub fn run_cputime_experiment(
    config: &ExperimentConfig,
) -> Result<Vec<ResultRow>, ExperimentError> {
    config.validate()?;
    let mut rows = Vec::new();
    for (side_index, &side) in config.array_sides.iter().enumerate() {
        let geom = config.geometry_for_side(side)?;
        let spec = config.grid_spec(&geom)?;
        let params = config.params()?;
        for &variant in &config.variants {
            let dict = build_dictionary_variant(&geom, &spec, &params, variant)?;
            let outcomes: Vec<TrialOutcome> = (0..config.runtime_runs as u64)
                .map(|trial| {
                    run_trial(
                        config,
                        &geom,
                        &spec,
                        &dict,
                        PhasePolicy::Random,
                        config.runtime_snr_db,
                        side_index as u64,
                        trial,
                    )
                })
                .collect::<Result<_, _>>()?;
            rows.push(aggregate(
                config.runtime_snr_db,
                geom.num_elements(),
                variant,
                PhasePolicy::Random,
                &outcomes,
            ));
        }
    }
    Ok(rows)
}

fn variant_label(v: DictionaryVariant) -> &'static str {
    match v {
        DictionaryVariant::Unified => "unified",
        DictionaryVariant::NearOnly => "near-only",
        DictionaryVariant::FarOnly => "far-only",
    }
}

fn policy_label(p: PhasePolicy) -> &'static str {
    match p {
        PhasePolicy::Random => "random",
        PhasePolicy::Optimized => "optimized",
    }
}

/// Column order of the CSV emitted by [`emit_csv`]. Timing columns come
/// last so consumers can strip them before comparing runs byte for byte.
pub const CSV_HEADER: &str = "snr_db,n_elements,variant,policy,trials,rmse_angle,rmse_polar,\
rmse_azimuth,se_rmse_angle,rmse_range,nf_ff_classification_accuracy,mean_cpu_seconds,\
median_cpu_seconds";

/// Writes rows as CSV with a fixed header, LF line endings, and a final
/// newline. Floats use Rust's shortest round-trip formatting, so equal
/// inputs produce identical bytes.
pub fn emit_csv<W: Write>(rows: &[ResultRow], mut out: W) -> Result<(), ExperimentError> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        let range = r
            .rmse_range
            .map(|v| v.to_string())
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.snr_db,
            r.n_elements,
            variant_label(r.variant),
            policy_label(r.policy),
            r.trials,
            r.rmse_angle,
            r.rmse_polar,
            r.rmse_azimuth,
            r.se_rmse_angle,
            range,
            r.nf_ff_classification_accuracy,
            r.mean_cpu_seconds,
            r.median_cpu_seconds,
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
