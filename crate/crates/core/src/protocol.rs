//! Adaptive sensing protocol: measure, estimate, reconfigure, repeat.
//!
//! A trial runs `K` sensing cycles against a fixed true location. Under
//! the optimized policy a cycle designs its probe by rebuilding the
//! information matrix at the current location estimate and minimizing the
//! weighted bound objective — but only once the estimate has earned
//! trust, meaning the last few cycles all agreed on the same physical
//! cell. The gate exists because designed probes concentrate energy
//! around their anchor: anchoring on a one-off fit (the first cycle's
//! estimate carries no directional information at all — every far-field
//! candidate fits a single equation exactly — and an early noisy fit can
//! land cells away from the truth) leaves the true location in the
//! probe's dark region, so the following measurement cannot correct the
//! estimate and the error perpetuates itself. Two safeguards break that
//! loop: unconfirmed cycles fall back to random probes, which illuminate
//! every cell about equally, and designed probes never run back-to-back —
//! each is followed by a random probe, so even an anchor that is
//! confidently wrong keeps receiving measurements that see the true cell
//! and the accumulated fit can escape. Each optimization starts from a
//! fresh random point on the phase manifold so successive designed
//! probes stay diverse. Under the random policy every cycle draws fresh
//! random phases.
//!
//! Randomness is split into two independent streams derived from the trial
//! seed: one for phase draws, one for noise draws. Paired runs of the two
//! policies under the same seed therefore see identical noise, which makes
//! their comparison a common-random-numbers experiment.
//!
//! A single cycle cannot separate direction from range: with one sample
//! every far-field candidate fits exactly, so the first estimate is
//! direction-degenerate. It resolves from the second cycle on.

use crate::channel::{
    cascaded_channel, complex_gaussian, nf_channel, received_signal, ChannelError, ChannelVector,
    PhaseShiftVector, Region, SignalModelParams,
};
use crate::crb::{
    cascade_derivatives, ff_channel_derivatives, fisher_matrix, nf_channel_derivatives, CrbError,
    CrbWeights, DerivativeMode,
};
use crate::dictionary::{CandidateLocation, Dictionary, DictionaryError};
use crate::estimator::{
    estimate_location, estimate_location_from, Estimate, EstimatorError, IncrementalPredictor,
    Observation,
};
use crate::geometry::{CartesianPoint, GeometryError, RisGeometry, SphericalLocation};
use crate::optimizer::{
    optimize_phases, CrbObjective, OptimizerConfig, OptimizerError, Termination,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use std::time::Instant;

/// Schema tag stamped on every serialized trace line.
pub const TRACE_SCHEMA: &str = "risloc-trace/1";

/// Errors from protocol setup or execution.
#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Crb(#[from] CrbError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error("SNR must be positive, got {0}")]
    BadSnr(f64),
    #[error("signal power is zero; the SNR cannot set a noise level")]
    ZeroSignalPower,
    #[error("a trial needs at least one cycle")]
    NoCycles,
    #[error("dictionary was built for a different geometry")]
    GeometryMismatch,
    #[error("dictionary was built with transmit gain {dictionary}, model uses {model}")]
    GainMismatch { dictionary: f64, model: f64 },
    #[error("trace serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("trace line has schema {got:?}, expected {expected:?}")]
    SchemaMismatch { expected: String, got: String },
    #[error("malformed trace stream: {0}")]
    TraceFormat(String),
}

/// Signal-to-noise ratio specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Snr {
    Db(f64),
    Linear(f64),
}

impl Snr {
    pub fn linear(&self) -> Result<f64, ProtocolError> {
        let v = match self {
            Snr::Db(db) => {
                if !db.is_finite() {
                    return Err(ProtocolError::BadSnr(*db));
                }
                10f64.powf(db / 10.0)
            }
            Snr::Linear(l) => *l,
        };
        if v.is_nan() || v <= 0.0 {
            return Err(ProtocolError::BadSnr(v));
        }
        Ok(v)
    }

    /// Decibel value, or `None` for an infinite (noiseless) ratio.
    pub fn to_db(&self) -> Result<Option<f64>, ProtocolError> {
        let linear = self.linear()?;
        if linear.is_infinite() {
            Ok(None)
        } else {
            Ok(Some(10.0 * linear.log10()))
        }
    }
}

/// How phase configurations are chosen after the first cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhasePolicy {
    /// Fresh uniform random phases every cycle.
    Random,
    /// Bound-minimizing phases on cycles whose recent predecessors agree
    /// on the estimated cell, interleaved with random probes; cycles with
    /// an unconfirmed estimate fall back to random probing.
    Optimized,
}

/// Fixed scene: geometry, BS anchor, signal parameters, true location.
///
/// Measurements always use the exact spherical-wave channel at the true
/// location; the planar approximation exists only inside the dictionary.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    geom: RisGeometry,
    params: SignalModelParams,
    true_location: SphericalLocation,
    bs_leg: ChannelVector,
    cascade: ChannelVector,
}

impl MeasurementModel {
    pub fn new(
        geom: RisGeometry,
        bs_position: &CartesianPoint,
        bs_gain: f64,
        params: SignalModelParams,
        true_location: SphericalLocation,
    ) -> Result<Self, ProtocolError> {
        params.consistent_with(&geom)?;
        let bs_leg = crate::channel::bs_ris_channel(&geom, bs_position, bs_gain)?;
        let user = nf_channel(&geom, &true_location, &params)?;
        let cascade = cascaded_channel(&bs_leg, &user)?;
        Ok(Self {
            geom,
            params,
            true_location,
            bs_leg,
            cascade,
        })
    }

    pub fn geometry(&self) -> &RisGeometry {
        &self.geom
    }

    pub fn params(&self) -> &SignalModelParams {
        &self.params
    }

    pub fn true_location(&self) -> &SphericalLocation {
        &self.true_location
    }

    pub fn bs_leg(&self) -> &ChannelVector {
        &self.bs_leg
    }

    pub fn cascade(&self) -> &ChannelVector {
        &self.cascade
    }

    /// One received sample under the given phases and noise realization.
    pub fn measure(
        &self,
        phases: &PhaseShiftVector,
        noise: Complex64,
    ) -> Result<Complex64, ProtocolError> {
        Ok(received_signal(
            phases,
            &self.cascade,
            self.params.symbol(),
            noise,
        )?)
    }
}

/// Reference signal power `|1^T (h_bs * h_user) s|^2`: the sample power
/// under all-ones phases.
pub fn signal_power(cascade: &ChannelVector, symbol: Complex64) -> f64 {
    let sum = cascade
        .values()
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, v| acc + v);
    (sum * symbol).norm_sqr()
}

/// Noise power that realizes the requested SNR against the reference
/// signal power. An infinite SNR yields exactly zero noise.
pub fn noise_power_from_snr(signal_power: f64, snr: Snr) -> Result<f64, ProtocolError> {
    if !(signal_power.is_finite() && signal_power > 0.0) {
        return Err(ProtocolError::ZeroSignalPower);
    }
    let linear = snr.linear()?;
    if linear.is_infinite() {
        return Ok(0.0);
    }
    Ok(signal_power / linear)
}

/// Per-trial protocol settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Number of sensing cycles `K`.
    pub cycles: usize,
    pub policy: PhasePolicy,
    /// Weights on the (range, polar, azimuth) variance bounds.
    pub weights: CrbWeights,
    pub optimizer: OptimizerConfig,
    pub derivative_mode: DerivativeMode,
    /// Reuse per-column predictions across cycles instead of rebuilding
    /// them for every estimate. Bit-identical results, less work.
    pub reuse_predicted_signals: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            cycles: 5,
            policy: PhasePolicy::Optimized,
            weights: CrbWeights::default(),
            optimizer: OptimizerConfig::default(),
            derivative_mode: DerivativeMode::default(),
            reuse_predicted_signals: false,
        }
    }
}

/// Outcome of one phase-optimization attempt inside a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSummary {
    pub initial_objective: f64,
    pub objective: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// True when the cycle fell back to random phases because the
    /// optimizer aborted.
    pub random_fallback: bool,
}

/// Everything observed and decided in one sensing cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    /// 1-based cycle number.
    pub cycle: usize,
    pub phases: Vec<Complex64>,
    pub received: Complex64,
    pub estimate_column: usize,
    pub estimate_region: Region,
    pub estimate_range: Option<f64>,
    pub estimate_polar: f64,
    pub estimate_azimuth: f64,
    pub estimate_loss: f64,
    pub estimate_ff_scale: Option<Complex64>,
    pub optimizer: Option<OptimizerSummary>,
}

impl CycleRecord {
    fn from_estimate(
        cycle: usize,
        phases: &PhaseShiftVector,
        received: Complex64,
        estimate: &Estimate,
        optimizer: Option<OptimizerSummary>,
    ) -> Self {
        Self {
            cycle,
            phases: phases.values().to_vec(),
            received,
            estimate_column: estimate.column,
            estimate_region: estimate.region,
            estimate_range: estimate.location.range(),
            estimate_polar: estimate.location.polar(),
            estimate_azimuth: estimate.location.azimuth(),
            estimate_loss: estimate.loss,
            estimate_ff_scale: estimate.ff_scale,
            optimizer,
        }
    }
}

/// Full record of one trial, serializable as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTrace {
    pub schema: String,
    pub seed: u64,
    pub policy: PhasePolicy,
    /// `None` means a noiseless (infinite SNR) run.
    pub snr_db: Option<f64>,
    pub signal_power: f64,
    pub noise_power: f64,
    pub true_range: f64,
    pub true_polar: f64,
    pub true_azimuth: f64,
    pub records: Vec<CycleRecord>,
    /// Wall-clock duration of the trial; ignore when comparing traces.
    pub elapsed_seconds: f64,
}

impl ProtocolTrace {
    /// Record of the last cycle, carrying the final estimate.
    pub fn final_record(&self) -> &CycleRecord {
        self.records.last().expect("a trace has at least one cycle")
    }

    /// Compact single-line JSON form.
    pub fn to_json_line(&self) -> Result<String, ProtocolError> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses a line produced by [`Self::to_json_line`], checking the
    /// schema tag.
    pub fn from_json_line(line: &str) -> Result<Self, ProtocolError> {
        let trace: ProtocolTrace = serde_json::from_str(line)?;
        if trace.schema != TRACE_SCHEMA {
            return Err(ProtocolError::SchemaMismatch {
                expected: TRACE_SCHEMA.to_string(),
                got: trace.schema,
            });
        }
        Ok(trace)
    }

    /// Line-delimited form: one header line carrying the run-level fields
    /// and the cycle count, then one line per cycle record.
    pub fn to_jsonl(&self) -> Result<String, ProtocolError> {
        let header = TraceHeader {
            schema: self.schema.clone(),
            seed: self.seed,
            policy: self.policy,
            snr_db: self.snr_db,
            signal_power: self.signal_power,
            noise_power: self.noise_power,
            true_range: self.true_range,
            true_polar: self.true_polar,
            true_azimuth: self.true_azimuth,
            cycles: self.records.len(),
            elapsed_seconds: self.elapsed_seconds,
        };
        let mut out = serde_json::to_string(&header)?;
        for record in &self.records {
            out.push('\n');
            out.push_str(&serde_json::to_string(record)?);
        }
        out.push('\n');
        Ok(out)
    }

    /// Parses the output of [`Self::to_jsonl`], checking the schema tag
    /// and that the advertised cycle count matches the record lines.
    pub fn from_jsonl(text: &str) -> Result<Self, ProtocolError> {
        let mut lines = text.lines();
        let first = lines
            .next()
            .ok_or_else(|| ProtocolError::TraceFormat("empty trace stream".into()))?;
        let header: TraceHeader = serde_json::from_str(first)?;
        if header.schema != TRACE_SCHEMA {
            return Err(ProtocolError::SchemaMismatch {
                expected: TRACE_SCHEMA.to_string(),
                got: header.schema,
            });
        }
        let records: Vec<CycleRecord> = lines
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        if records.len() != header.cycles {
            return Err(ProtocolError::TraceFormat(format!(
                "header advertises {} cycles but {} record lines follow",
                header.cycles,
                records.len()
            )));
        }
        Ok(Self {
            schema: header.schema,
            seed: header.seed,
            policy: header.policy,
            snr_db: header.snr_db,
            signal_power: header.signal_power,
            noise_power: header.noise_power,
            true_range: header.true_range,
            true_polar: header.true_polar,
            true_azimuth: header.true_azimuth,
            records,
            elapsed_seconds: header.elapsed_seconds,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TraceHeader {
    schema: String,
    seed: u64,
    policy: PhasePolicy,
    snr_db: Option<f64>,
    signal_power: f64,
    noise_power: f64,
    true_range: f64,
    true_polar: f64,
    true_azimuth: f64,
    cycles: usize,
    elapsed_seconds: f64,
}

/// Derivative vectors at the current estimate, cascaded with the BS leg.
/// Far-field estimates anchor the range at the dictionary's reference;
/// the bound objective's minimizer does not depend on that choice of
/// scale.
fn estimate_derivatives(
    model: &MeasurementModel,
    dict: &Dictionary,
    estimate: &Estimate,
    mode: DerivativeMode,
) -> Result<Vec<ChannelVector>, ProtocolError> {
    let derivs = match &estimate.location {
        CandidateLocation::Near(loc) => {
            nf_channel_derivatives(model.geometry(), loc, model.params(), mode)?.to_vec()
        }
        CandidateLocation::Far { polar, azimuth } => ff_channel_derivatives(
            model.geometry(),
            *polar,
            *azimuth,
            dict.spec().ff_reference_range,
            model.params(),
        )?
        .to_vec(),
    };
    Ok(cascade_derivatives(model.bs_leg(), &derivs)?)
}

/// Number of consecutive cycles that must agree on the estimated cell
/// before the estimate is trusted as a probe-design anchor.
const ANCHOR_CONFIRMATION_CYCLES: usize = 3;

/// Number of unsteered (random-phase) probes that must accumulate before
/// any probe is designed. The estimate's landing cell stabilizes as the
/// random probe count grows; designs anchored earlier act on estimates
/// that are still likely to move.
const MIN_RANDOM_PROBES_BEFORE_DESIGN: usize = 11;

/// Count of cycles so far whose probe was drawn at random.
fn random_probe_count(records: &[CycleRecord]) -> usize {
    records.iter().filter(|r| r.optimizer.is_none()).count()
}

/// True when two cycle records name the same physical cell. The array
/// lies in a plane, so a cell at azimuth `pi - phi` is indistinguishable
/// from one at `phi`; estimates alternating between such mirror columns
/// count as the same anchor.
fn same_cell(a: &CycleRecord, b: &CycleRecord) -> bool {
    if a.estimate_column == b.estimate_column {
        return true;
    }
    let folded = ((std::f64::consts::PI - a.estimate_azimuth) - b.estimate_azimuth).abs();
    a.estimate_region == b.estimate_region
        && a.estimate_range == b.estimate_range
        && a.estimate_polar == b.estimate_polar
        && folded < 1e-12
}

/// True when the last `span` recorded cycles all estimated the same cell.
fn anchor_confirmed(records: &[CycleRecord], span: usize) -> bool {
    records.len() >= span
        && records[records.len() - span..]
            .windows(2)
            .all(|w| same_cell(&w[0], &w[1]))
}

/// Runs one trial: `config.cycles` sensing cycles at the given SNR,
/// deterministically driven by `seed`.
pub fn run_protocol(
    model: &MeasurementModel,
    dict: &Dictionary,
    config: &ProtocolConfig,
    snr: Snr,
    seed: u64,
) -> Result<ProtocolTrace, ProtocolError> {
    if config.cycles == 0 {
        return Err(ProtocolError::NoCycles);
    }
    config.weights.validate()?;
    config.optimizer.validate()?;
    if dict.geometry() != model.geometry() {
        return Err(ProtocolError::GeometryMismatch);
    }
    if dict.transmit_gain() != model.params().transmit_gain() {
        return Err(ProtocolError::GainMismatch {
            dictionary: dict.transmit_gain(),
            model: model.params().transmit_gain(),
        });
    }

    let started = Instant::now();
    let p_signal = signal_power(model.cascade(), model.params().symbol());
    let noise_power = noise_power_from_snr(p_signal, snr)?;
    // The bound objective's minimizer is invariant to a uniform noise
    // rescaling, so noiseless runs optimize at unit noise power.
    let opt_noise_power = if noise_power > 0.0 { noise_power } else { 1.0 };

    let mut root = ChaCha8Rng::seed_from_u64(seed);
    let mut phase_rng = ChaCha8Rng::seed_from_u64(root.gen::<u64>());
    let mut noise_rng = ChaCha8Rng::seed_from_u64(root.gen::<u64>());

    let n = model.geometry().num_elements();
    let symbol = model.params().symbol();
    let mut predictor = if config.reuse_predicted_signals {
        Some(IncrementalPredictor::new(dict, model.bs_leg(), symbol)?)
    } else {
        None
    };

    let mut phase_history: Vec<PhaseShiftVector> = Vec::with_capacity(config.cycles);
    let mut received: Vec<Complex64> = Vec::with_capacity(config.cycles);
    let mut records: Vec<CycleRecord> = Vec::with_capacity(config.cycles);
    let mut estimate: Option<Estimate> = None;

    for cycle in 1..=config.cycles {
        let mut summary = None;
        // Design a probe only from a confirmed anchor — the most recent
        // cycles all estimated the same physical cell — only after a
        // floor of accumulated random probes, and never twice in a row.
        // An unconfirmed or early estimate may be a chance fit (the
        // first is always direction-degenerate), and a probe focused on
        // a wrong cell leaves the truth dark, so consecutive designs at
        // a wrong anchor would freeze the error in place; the
        // interleaved random probe keeps feeding the fit measurements
        // that see every cell.
        let rested = records.last().map_or(true, |r| r.optimizer.is_none());
        let phases = match (config.policy, &estimate) {
            (PhasePolicy::Optimized, Some(est))
                if rested
                    && random_probe_count(&records) >= MIN_RANDOM_PROBES_BEFORE_DESIGN
                    && anchor_confirmed(&records, ANCHOR_CONFIRMATION_CYCLES) =>
            {
                let cascaded =
                    estimate_derivatives(model, dict, est, config.derivative_mode)?;
                let history =
                    fisher_matrix(&cascaded, &phase_history, symbol, opt_noise_power)?;
                let weights = config.weights.for_dim(cascaded.len())?;
                let objective = CrbObjective::new(
                    cascaded,
                    history,
                    weights,
                    symbol,
                    opt_noise_power,
                    config.optimizer.regularization,
                )?;
                let start = PhaseShiftVector::random(n, &mut phase_rng)?;
                match optimize_phases(&objective, &start, &config.optimizer) {
                    Ok(run) => {
                        let fallback = matches!(run.termination, Termination::Aborted(_));
                        summary = Some(OptimizerSummary {
                            initial_objective: run.initial_objective,
                            objective: run.objective,
                            iterations: run.iterations,
                            termination: run.termination,
                            random_fallback: fallback,
                        });
                        if fallback {
                            start
                        } else {
                            run.phases
                        }
                    }
                    Err(e) => {
                        summary = Some(OptimizerSummary {
                            initial_objective: 0.0,
                            objective: 0.0,
                            iterations: 0,
                            termination: Termination::Aborted(e.to_string()),
                            random_fallback: true,
                        });
                        start
                    }
                }
            }
            _ => PhaseShiftVector::random(n, &mut phase_rng)?,
        };

        let noise = complex_gaussian(noise_power, &mut noise_rng);
        let sample = model.measure(&phases, noise)?;
        if let Some(p) = predictor.as_mut() {
            p.push(&phases)?;
        }
        phase_history.push(phases);
        received.push(sample);

        let observation =
            Observation::new(phase_history.clone(), received.clone(), symbol)?;
        let est = match predictor.as_ref() {
            Some(p) => estimate_location_from(dict, &observation, p.signals())?,
            None => estimate_location(dict, model.bs_leg(), &observation)?,
        };
        records.push(CycleRecord::from_estimate(
            cycle,
            phase_history.last().unwrap(),
            sample,
            &est,
            summary,
        ));
        estimate = Some(est);
    }

    Ok(ProtocolTrace {
        schema: TRACE_SCHEMA.to_string(),
        seed,
        policy: config.policy,
        snr_db: snr.to_db()?,
        signal_power: p_signal,
        noise_power,
        true_range: model.true_location().range(),
        true_polar: model.true_location().polar(),
        true_azimuth: model.true_location().azimuth(),
        records,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
