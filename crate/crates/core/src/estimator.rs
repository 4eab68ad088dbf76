//! Grid search estimator: match received samples against dictionary atoms.
//!
//! After `k` sensing cycles the receiver holds samples `g_q = b_q^T (h_bs
//! * h_user) s + w_q`. For each candidate column the same forward model
//! predicts the noiseless samples; the estimate is the candidate with the
//! smallest residual. Near-field columns pin the full location, so their
//! residual is the plain Euclidean distance. Far-field columns leave range
//! unresolved up to a complex factor, so their residual is the
//! least-squares fit over that factor.
//!
//! Predicted signals reuse the exact accumulation loop of the measurement
//! model. A noiseless measurement taken on a grid point therefore matches
//! its column bit for bit and the argmin is exact, not approximate. Ties
//! resolve toward the lower column index, near-field block first.

use crate::channel::{cascade_slices, steered_sum_slices, ChannelError, ChannelVector, PhaseShiftVector, Region};
use crate::dictionary::{CandidateLocation, Dictionary};
use num_complex::Complex64;
use thiserror::Error;

/// Errors from observation assembly or dictionary matching.
#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("observation must contain at least one cycle")]
    EmptyObservation,
    #[error("observation has {received} received samples but {phases} phase vectors")]
    CycleCountMismatch { received: usize, phases: usize },
    #[error("cycle {cycle} uses {got} phase shifts, expected {expected}")]
    PhaseLengthMismatch {
        cycle: usize,
        expected: usize,
        got: usize,
    },
    #[error("received sample {index} is not finite")]
    NonFiniteSample { index: usize },
    #[error("dictionary has {dictionary} columns but predicted signals have {predicted}")]
    ColumnCountMismatch { dictionary: usize, predicted: usize },
    #[error("observation spans {observed} cycles but predicted signals span {predicted}")]
    PredictionCycleMismatch { observed: usize, predicted: usize },
    #[error("BS leg has {got} entries, expected {expected}")]
    BsLengthMismatch { expected: usize, got: usize },
    #[error("dictionary has no columns")]
    EmptyDictionary,
}

/// Received samples and the phase configurations that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    phases: Vec<PhaseShiftVector>,
    received: Vec<Complex64>,
    symbol: Complex64,
}

impl Observation {
    pub fn new(
        phases: Vec<PhaseShiftVector>,
        received: Vec<Complex64>,
        symbol: Complex64,
    ) -> Result<Self, EstimatorError> {
        if phases.is_empty() || received.is_empty() {
            return Err(EstimatorError::EmptyObservation);
        }
        if phases.len() != received.len() {
            return Err(EstimatorError::CycleCountMismatch {
                received: received.len(),
                phases: phases.len(),
            });
        }
        let expected = phases[0].len();
        for (cycle, p) in phases.iter().enumerate() {
            if p.len() != expected {
                return Err(EstimatorError::PhaseLengthMismatch {
                    cycle,
                    expected,
                    got: p.len(),
                });
            }
        }
        for (index, g) in received.iter().enumerate() {
            if !(g.re.is_finite() && g.im.is_finite()) {
                return Err(EstimatorError::NonFiniteSample { index });
            }
        }
        Ok(Self {
            phases,
            received,
            symbol,
        })
    }

    pub fn cycles(&self) -> usize {
        self.received.len()
    }

    pub fn phases(&self) -> &[PhaseShiftVector] {
        &self.phases
    }

    pub fn received(&self) -> &[Complex64] {
        &self.received
    }

    pub fn symbol(&self) -> Complex64 {
        self.symbol
    }
}

/// Noiseless model predictions, one sample vector per dictionary column.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedSignals {
    cycles: usize,
    cols: Vec<Vec<Complex64>>,
}

impl PredictedSignals {
    /// Wraps externally computed predictions; all columns must span the
    /// same number of cycles.
    pub fn from_columns(cols: Vec<Vec<Complex64>>) -> Result<Self, EstimatorError> {
        if cols.is_empty() {
            return Err(EstimatorError::EmptyDictionary);
        }
        let cycles = cols[0].len();
        for c in &cols {
            if c.len() != cycles {
                return Err(EstimatorError::PredictionCycleMismatch {
                    observed: cycles,
                    predicted: c.len(),
                });
            }
        }
        Ok(Self { cycles, cols })
    }

    pub fn columns(&self) -> usize {
        self.cols.len()
    }

    pub fn cycles(&self) -> usize {
        self.cycles
    }

    pub fn column(&self, i: usize) -> &[Complex64] {
        &self.cols[i]
    }
}

/// Predicted samples for every column over the given cycles, computed in
/// one pass (columns outer, cycles inner).
pub fn predicted_signals(
    dict: &Dictionary,
    bs_leg: &ChannelVector,
    phases: &[PhaseShiftVector],
    symbol: Complex64,
) -> Result<PredictedSignals, EstimatorError> {
    if dict.is_empty() {
        return Err(EstimatorError::EmptyDictionary);
    }
    check_bs(dict, bs_leg)?;
    for (cycle, p) in phases.iter().enumerate() {
        if p.len() != dict.n_elements() {
            return Err(EstimatorError::PhaseLengthMismatch {
                cycle,
                expected: dict.n_elements(),
                got: p.len(),
            });
        }
    }
    let mut cols = Vec::with_capacity(dict.len());
    for i in 0..dict.len() {
        let cascade = cascade_slices(bs_leg.values(), dict.column(i));
        let col = phases
            .iter()
            .map(|p| steered_sum_slices(p.values(), &cascade) * symbol)
            .collect();
        cols.push(col);
    }
    Ok(PredictedSignals {
        cycles: phases.len(),
        cols,
    })
}

fn check_bs(dict: &Dictionary, bs_leg: &ChannelVector) -> Result<(), EstimatorError> {
    if bs_leg.len() != dict.n_elements() {
        return Err(EstimatorError::BsLengthMismatch {
            expected: dict.n_elements(),
            got: bs_leg.len(),
        });
    }
    Ok(())
}

/// Grows predicted signals one cycle at a time, caching the cascaded
/// columns so each new cycle costs one steered sum per column.
///
/// Feeding it the same phase sequence as [`predicted_signals`] produces
/// bit-identical predictions; only the loop nesting differs.
#[derive(Debug, Clone)]
pub struct IncrementalPredictor {
    n_elements: usize,
    cascades: Vec<Vec<Complex64>>,
    symbol: Complex64,
    signals: PredictedSignals,
}

impl IncrementalPredictor {
    pub fn new(
        dict: &Dictionary,
        bs_leg: &ChannelVector,
        symbol: Complex64,
    ) -> Result<Self, EstimatorError> {
        if dict.is_empty() {
            return Err(EstimatorError::EmptyDictionary);
        }
        check_bs(dict, bs_leg)?;
        let cascades: Vec<Vec<Complex64>> = (0..dict.len())
            .map(|i| cascade_slices(bs_leg.values(), dict.column(i)))
            .collect();
        let cols = vec![Vec::new(); dict.len()];
        Ok(Self {
            n_elements: dict.n_elements(),
            cascades,
            symbol,
            signals: PredictedSignals { cycles: 0, cols },
        })
    }

    pub fn push(&mut self, phases: &PhaseShiftVector) -> Result<(), EstimatorError> {
        if phases.len() != self.n_elements {
            return Err(EstimatorError::PhaseLengthMismatch {
                cycle: self.signals.cycles,
                expected: self.n_elements,
                got: phases.len(),
            });
        }
        for (cascade, col) in self.cascades.iter().zip(&mut self.signals.cols) {
            col.push(steered_sum_slices(phases.values(), cascade) * self.symbol);
        }
        self.signals.cycles += 1;
        Ok(())
    }

    pub fn cycles(&self) -> usize {
        self.signals.cycles
    }

    pub fn signals(&self) -> &PredictedSignals {
        &self.signals
    }
}

/// Euclidean residual `|| g - a ||` for a fully pinned candidate.
pub fn nf_loss(observed: &[Complex64], predicted: &[Complex64]) -> f64 {
    debug_assert_eq!(observed.len(), predicted.len());
    observed
        .iter()
        .zip(predicted)
        .map(|(g, a)| (g - a).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Least-squares complex scale `(a^H g) / (a^H a)` for a direction-only
/// candidate; zero when the prediction vanishes.
pub fn ff_amplitude(observed: &[Complex64], predicted: &[Complex64]) -> Complex64 {
    debug_assert_eq!(observed.len(), predicted.len());
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = 0.0;
    for (g, a) in observed.iter().zip(predicted) {
        num += a.conj() * g;
        den += a.norm_sqr();
    }
    if den == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        num / den
    }
}

/// Residual `|| g - c a ||` after fitting the complex scale `c`.
pub fn ff_loss(observed: &[Complex64], predicted: &[Complex64]) -> f64 {
    let c = ff_amplitude(observed, predicted);
    observed
        .iter()
        .zip(predicted)
        .map(|(g, a)| (g - c * a).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Result of a dictionary match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    /// Winning column index (near-field block first).
    pub column: usize,
    /// Candidate the column represents.
    pub location: CandidateLocation,
    /// Region implied by the winning block.
    pub region: Region,
    /// Residual at the winner.
    pub loss: f64,
    /// Fitted complex scale for a far-field winner, `None` otherwise.
    pub ff_scale: Option<Complex64>,
}

/// Matches an observation against the dictionary, building the predicted
/// signals on the fly.
pub fn estimate_location(
    dict: &Dictionary,
    bs_leg: &ChannelVector,
    observation: &Observation,
) -> Result<Estimate, EstimatorError> {
    let signals = predicted_signals(dict, bs_leg, observation.phases(), observation.symbol())?;
    estimate_location_from(dict, observation, &signals)
}

/// Matches an observation against precomputed predicted signals.
pub fn estimate_location_from(
    dict: &Dictionary,
    observation: &Observation,
    signals: &PredictedSignals,
) -> Result<Estimate, EstimatorError> {
    if dict.is_empty() {
        return Err(EstimatorError::EmptyDictionary);
    }
    if signals.columns() != dict.len() {
        return Err(EstimatorError::ColumnCountMismatch {
            dictionary: dict.len(),
            predicted: signals.columns(),
        });
    }
    if signals.cycles() != observation.cycles() {
        return Err(EstimatorError::PredictionCycleMismatch {
            observed: observation.cycles(),
            predicted: signals.cycles(),
        });
    }
    let g = observation.received();
    let mut best_col = 0usize;
    let mut best_loss = f64::INFINITY;
    for i in 0..dict.len() {
        let a = signals.column(i);
        let loss = if dict.is_far_column(i) {
            ff_loss(g, a)
        } else {
            nf_loss(g, a)
        };
        // Strict inequality keeps the earliest column on exact ties.
        if loss < best_loss {
            best_loss = loss;
            best_col = i;
        }
    }
    let location = *dict.location(best_col);
    let (region, ff_scale) = if dict.is_far_column(best_col) {
        (
            Region::FarField,
            Some(ff_amplitude(g, signals.column(best_col))),
        )
    } else {
        (Region::NearField, None)
    };
    Ok(Estimate {
        column: best_col,
        location,
        region,
        loss: best_loss,
        ff_scale,
    })
}

// ---------------------------------------------------------------------------
