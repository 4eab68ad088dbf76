//! Simulation library for user localization assisted by a reconfigurable
//! intelligent surface (RIS).

pub mod channel;
pub mod crb;
pub mod dictionary;
pub mod estimator;
pub mod experiment;
pub mod geometry;
pub mod optimizer;
pub mod protocol;

pub use channel::{
    bs_ris_channel, cascaded_channel, classify_region, complex_gaussian, ff_channel,
    max_phase_error, nf_channel, nf_ff_boundary_range, received_signal, steered_sum, ChannelError,
    ChannelVector, PhaseShiftVector, Region, SignalModelParams, REGION_PHASE_THRESHOLD,
};
pub use crb::{
    cascade_derivatives, crb_values, ff_channel_derivatives, fisher_matrix,
    nf_channel_derivatives, project_derivatives, weighted_crb_objective, CrbError, CrbWeights,
    DerivativeMode, FisherMatrix, CONDITION_LIMIT, REGULARIZATION_SCALE,
};
pub use dictionary::{
    build_angle_grid, build_dictionary, build_dictionary_variant, build_nf_grid,
    choose_ff_reference_range, CandidateLocation, Dictionary, DictionaryError, DictionaryVariant,
    GridSpec, FF_REFERENCE_FLOOR,
};
pub use estimator::{
    estimate_location, estimate_location_from, ff_amplitude, ff_loss, nf_loss, predicted_signals,
    Estimate, EstimatorError, IncrementalPredictor, Observation, PredictedSignals,
};
pub use experiment::{
    derive_seed, emit_csv, folded_azimuth_error, run_cputime_experiment, run_rmse_experiment,
    run_single_trial, sample_true_location, ExperimentConfig, ExperimentError, ResultRow,
    TrialOutcome, UserPlacement, CSV_HEADER, SEED_PURPOSE_LOCATION, SEED_PURPOSE_PROTOCOL,
};
pub use geometry::{
    CartesianPoint, GeometryError, RisGeometry, SphericalLocation, SPEED_OF_LIGHT,
};
pub use optimizer::{
    optimize_phases, retract, riemannian_project, tangent_update, CrbObjective, OptimizerConfig,
    OptimizerError, PhaseOptimization, Termination,
};
pub use protocol::{
    noise_power_from_snr, run_protocol, signal_power, CycleRecord, MeasurementModel,
    OptimizerSummary, PhasePolicy, ProtocolConfig, ProtocolError, ProtocolTrace, Snr,
    TRACE_SCHEMA,
};
