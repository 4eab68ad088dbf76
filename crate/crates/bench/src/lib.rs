//! Shared scene builders for the benchmark suite.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use risloc_core::{
    build_dictionary_variant, CrbObjective, CrbWeights, DerivativeMode, Dictionary,
    DictionaryVariant, ExperimentConfig, FisherMatrix, MeasurementModel, Observation,
    PhaseShiftVector, SignalModelParams, SphericalLocation,
};

/// Default 10x10 half-wavelength array at 28 GHz with its grid and
/// unified dictionary, as used by the accuracy experiment.
pub fn default_scene() -> (ExperimentConfig, Dictionary, MeasurementModel) {
    let config = ExperimentConfig::default();
    let geom = config.geometry().expect("default geometry is valid");
    let spec = config.grid_spec(&geom).expect("default grid is valid");
    let params = config.params().expect("default params are valid");
    let dict = build_dictionary_variant(&geom, &spec, &params, DictionaryVariant::Unified)
        .expect("default dictionary builds");
    let truth = SphericalLocation::new(
        spec.min_range + 0.4 * (spec.max_range - spec.min_range),
        1.3,
        0.9,
    )
    .expect("bench location is valid");
    let model = MeasurementModel::new(geom, &config.bs_position(), config.bs_gain, params, truth)
        .expect("bench model builds");
    (config, dict, model)
}

/// A noisy multi-cycle observation of the scene under random phases.
pub fn noisy_observation(
    model: &MeasurementModel,
    cycles: usize,
    noise_power: f64,
    seed: u64,
) -> Observation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.geometry().num_elements();
    let mut phases = Vec::with_capacity(cycles);
    let mut received = Vec::with_capacity(cycles);
    for _ in 0..cycles {
        let beta = PhaseShiftVector::random(n, &mut rng).expect("nonempty phase vector");
        let y = model
            .measure(&beta, risloc_core::complex_gaussian(noise_power, &mut rng))
            .expect("measurement succeeds");
        phases.push(beta);
        received.push(y);
    }
    Observation::new(phases, received, model.params().symbol()).expect("valid observation")
}

/// A bound-minimization objective with a short random phase history, as
/// the protocol solves once per cycle.
pub fn bound_objective(
    model: &MeasurementModel,
    history_cycles: usize,
    seed: u64,
) -> (CrbObjective, PhaseShiftVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geom = model.geometry();
    let n = geom.num_elements();
    let params = model.params();
    let derivs = risloc_core::nf_channel_derivatives(
        geom,
        model.true_location(),
        params,
        DerivativeMode::PhaseOnly,
    )
    .expect("derivatives exist");
    let cascaded = risloc_core::cascade_derivatives(model.bs_leg(), &derivs)
        .expect("cascade succeeds");
    let mut history = FisherMatrix::zeros(3);
    for _ in 0..history_cycles {
        let beta = PhaseShiftVector::random(n, &mut rng).expect("nonempty phase vector");
        let projections =
            risloc_core::project_derivatives(&cascaded, &beta, params.symbol())
                .expect("projection succeeds");
        history.accumulate(&projections, 1.0).expect("accumulation succeeds");
    }
    let weights = CrbWeights::default().for_dim(3).expect("weights map to 3 parameters");
    let objective = CrbObjective::new(
        cascaded,
        history,
        weights,
        params.symbol(),
        1.0,
        risloc_core::REGULARIZATION_SCALE,
    )
    .expect("objective builds");
    let start = PhaseShiftVector::random(n, &mut rng).expect("nonempty phase vector");
    (objective, start)
}

pub fn noise_for_snr_db(model: &MeasurementModel, snr_db: f64) -> f64 {
    let power = risloc_core::signal_power(model.cascade(), model.params().symbol());
    risloc_core::noise_power_from_snr(power, risloc_core::Snr::Db(snr_db))
        .expect("valid snr")
}
