//! Phase-shift optimization on the product of unit circles.
//!
//! Between sensing cycles the RIS picks its next phase configuration by
//! minimizing the weighted sum of variance bounds at the current location
//! estimate, so the next measurement is maximally informative. Each phase
//! shift lives on the complex unit circle, so the feasible set is the
//! product manifold `|b_n| = 1`. The solver is projected (Riemannian)
//! gradient descent:
//!
//! 1. Euclidean gradient of the objective in `C^N`,
//! 2. projection onto the tangent space, `v - Re{v conj(b)} b` per entry,
//! 3. Armijo backtracking along the negative projected gradient,
//! 4. retraction back to the circle, `b / |b|` per entry.
//!
//! The objective treats the candidate cycle's information as an increment
//! on top of the already-banked history, with a small trace-proportional
//! ridge so rank-deficient early iterations remain invertible. The ridge
//! varies with the candidate trace, so the gradient carries a matching
//! trace term and is exact for the objective as evaluated.
//!
//! Line searches are scale-invariant: the first trial step is normalized
//! by the sup-norm of the projected gradient, so rescaling the objective
//! (for example through the noise power) leaves the iterates unchanged.

use crate::channel::{ChannelError, ChannelVector, PhaseShiftVector};
use crate::crb::{CrbError, FisherMatrix};
use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

/// Errors from objective assembly or descent.
#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error(transparent)]
    Crb(#[from] CrbError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("phase vector has {got} entries, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("entry {index} retracts from zero")]
    ZeroRetraction { index: usize },
}

/// Armijo backtracking parameters and stopping rules.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OptimizerConfig {
    /// Hard cap on accepted descent steps.
    pub max_iterations: usize,
    /// Stop once an accepted step improves the objective by less than
    /// this fraction of the starting value.
    pub relative_tolerance: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// Step shrink factor per backtrack.
    pub backtrack_factor: f64,
    /// Phase displacement, in radians, of the most active element at the
    /// first trial of each line search. The search direction is the raw
    /// negative projected gradient; the trial step is this value divided
    /// by the gradient's sup-norm, which makes the iterates invariant to
    /// a rescaling of the objective.
    pub initial_step: f64,
    /// Backtracks per line search before declaring a stall.
    pub max_backtracks: usize,
    /// Trace-proportional ridge applied inside the objective.
    pub regularization: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            relative_tolerance: 1e-8,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            initial_step: 1.0,
            max_backtracks: 50,
            regularization: crate::crb::REGULARIZATION_SCALE,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.max_iterations == 0 {
            return Err(OptimizerError::BadConfig(
                "max_iterations must be positive".into(),
            ));
        }
        if !(self.relative_tolerance.is_finite() && self.relative_tolerance >= 0.0) {
            return Err(OptimizerError::BadConfig(format!(
                "relative_tolerance must be non-negative, got {}",
                self.relative_tolerance
            )));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(OptimizerError::BadConfig(format!(
                "armijo_c must lie in (0, 1), got {}",
                self.armijo_c
            )));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(OptimizerError::BadConfig(format!(
                "backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            )));
        }
        if !(self.initial_step.is_finite() && self.initial_step > 0.0) {
            return Err(OptimizerError::BadConfig(format!(
                "initial_step must be positive, got {}",
                self.initial_step
            )));
        }
        if self.max_backtracks == 0 {
            return Err(OptimizerError::BadConfig(
                "max_backtracks must be positive".into(),
            ));
        }
        if !(self.regularization.is_finite() && self.regularization >= 0.0) {
            return Err(OptimizerError::BadConfig(format!(
                "regularization must be non-negative, got {}",
                self.regularization
            )));
        }
        Ok(())
    }
}

/// How a descent run ended.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Termination {
    /// Relative improvement dropped below tolerance (or the projected
    /// gradient vanished).
    Converged,
    /// Iteration cap reached with progress still being made.
    MaxIterations,
    /// No step satisfying the sufficient-decrease test was found.
    LineSearchStalled,
    /// A numerical failure interrupted the run after at least one
    /// accepted step; the result carries the best iterate seen.
    Aborted(String),
}

/// Outcome of one descent run.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOptimization {
    /// Best iterate encountered (not necessarily the last).
    pub phases: PhaseShiftVector,
    /// Objective at the best iterate.
    pub objective: f64,
    /// Objective at the starting point.
    pub initial_objective: f64,
    /// Accepted descent steps.
    pub iterations: usize,
    pub termination: Termination,
    /// Objective after each accepted step, starting value first.
    pub objective_trace: Vec<f64>,
}

/// Weighted variance-bound objective for one candidate cycle on top of
/// banked information.
#[derive(Debug, Clone)]
pub struct CrbObjective {
    cascaded_derivs: Vec<ChannelVector>,
    history: FisherMatrix,
    weights: Vec<f64>,
    symbol: Complex64,
    noise_power: f64,
    regularization: f64,
}

impl CrbObjective {
    pub fn new(
        cascaded_derivs: Vec<ChannelVector>,
        history: FisherMatrix,
        weights: Vec<f64>,
        symbol: Complex64,
        noise_power: f64,
        regularization: f64,
    ) -> Result<Self, OptimizerError> {
        if cascaded_derivs.is_empty() {
            return Err(CrbError::Empty.into());
        }
        let n = cascaded_derivs[0].len();
        for d in &cascaded_derivs {
            if d.len() != n {
                return Err(CrbError::LengthMismatch {
                    left: n,
                    right: d.len(),
                }
                .into());
            }
        }
        let dim = cascaded_derivs.len();
        if history.dim() != dim {
            return Err(CrbError::DimensionMismatch {
                expected: dim,
                got: history.dim(),
            }
            .into());
        }
        if weights.len() != dim {
            return Err(CrbError::DimensionMismatch {
                expected: dim,
                got: weights.len(),
            }
            .into());
        }
        for &w in &weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(CrbError::BadWeight(w).into());
            }
        }
        if !(noise_power.is_finite() && noise_power > 0.0) {
            return Err(CrbError::BadNoisePower(noise_power).into());
        }
        if !(regularization.is_finite() && regularization >= 0.0) {
            return Err(OptimizerError::BadConfig(format!(
                "regularization must be non-negative, got {regularization}"
            )));
        }
        Ok(Self {
            cascaded_derivs,
            history,
            weights,
            symbol,
            noise_power,
            regularization,
        })
    }

    pub fn dim(&self) -> usize {
        self.cascaded_derivs.len()
    }

    pub fn n_elements(&self) -> usize {
        self.cascaded_derivs[0].len()
    }

    fn check_len(&self, beta: &[Complex64]) -> Result<(), OptimizerError> {
        if beta.len() != self.n_elements() {
            return Err(OptimizerError::LengthMismatch {
                expected: self.n_elements(),
                got: beta.len(),
            });
        }
        Ok(())
    }

    /// Projections `a_i = (b^T w_i) s` for an arbitrary weight vector
    /// (the objective is defined on all of `C^N`, not just the manifold).
    fn projections(&self, beta: &[Complex64]) -> Vec<Complex64> {
        self.cascaded_derivs
            .iter()
            .map(|w| crate::channel::steered_sum_slices(beta, w.values()) * self.symbol)
            .collect()
    }

    fn regularized_information(
        &self,
        beta: &[Complex64],
    ) -> Result<(FisherMatrix, Vec<Complex64>), OptimizerError> {
        let a = self.projections(beta);
        let mut fim = self.history.clone();
        fim.accumulate(&a, self.noise_power)?;
        Ok((fim.regularized(self.regularization), a))
    }

    /// Weighted sum of variance bounds after adding the candidate cycle.
    pub fn evaluate(&self, beta: &[Complex64]) -> Result<f64, OptimizerError> {
        self.check_len(beta)?;
        let (fim, _) = self.regularized_information(beta)?;
        Ok(crate::crb::weighted_crb_objective(&fim, &self.weights)?)
    }

    /// Euclidean (Wirtinger) gradient: with `M = J^-1 W J^-1` and the
    /// ridge `eps = r tr(J)`,
    ///
    /// ```text
    /// grad_n = -(4 conj(s) / sigma^2) sum_i conj(w_i[n]) ((M + r tr(M) I) a)_i.
    /// ```
    ///
    /// The `r tr(M)` term is the ridge's own dependence on the candidate
    /// trace; with it the gradient is exact for [`Self::evaluate`].
    /// Perturbing along `db` changes the objective by
    /// `Re{ sum_n conj(grad_n) db_n }`.
    pub fn euclidean_gradient(&self, beta: &[Complex64]) -> Result<Vec<Complex64>, OptimizerError> {
        self.check_len(beta)?;
        let (fim, a) = self.regularized_information(beta)?;
        let inv = fim.try_inverse()?;
        let dim = self.dim();
        let mut w_mat = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            w_mat[(i, i)] = self.weights[i];
        }
        let m = &inv * w_mat * &inv;
        let ridge_gain = self.regularization * m.trace();

        // ((M + r tr(M) I) a)_i with real symmetric M acting on the
        // complex projections.
        let ma: Vec<Complex64> = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| m[(i, j)] * a[j])
                    .fold(ridge_gain * a[i], |acc, v| acc + v)
            })
            .collect();

        let scale = -4.0 * self.symbol.conj() / self.noise_power;
        let n = self.n_elements();
        let mut grad = Vec::with_capacity(n);
        for e in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..dim {
                acc += self.cascaded_derivs[i].values()[e].conj() * ma[i];
            }
            grad.push(scale * acc);
        }
        Ok(grad)
    }
}

/// Tangent-space projection at `beta`: removes the radial component
/// `Re{v conj(b)} b` from each entry.
pub fn riemannian_project(v: &[Complex64], beta: &[Complex64]) -> Vec<Complex64> {
    v.iter()
        .zip(beta)
        .map(|(vi, bi)| vi - (vi * bi.conj()).re * bi)
        .collect()
}

/// Straight-line update `beta + step * direction` in the embedding space.
pub fn tangent_update(beta: &[Complex64], direction: &[Complex64], step: f64) -> Vec<Complex64> {
    beta.iter()
        .zip(direction)
        .map(|(b, d)| b + step * d)
        .collect()
}

/// Entrywise retraction `v / |v|` back onto the unit circles.
pub fn retract(v: &[Complex64]) -> Result<PhaseShiftVector, OptimizerError> {
    let mut out = Vec::with_capacity(v.len());
    for (index, z) in v.iter().enumerate() {
        let norm = z.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(OptimizerError::ZeroRetraction { index });
        }
        out.push(z / norm);
    }
    Ok(PhaseShiftVector::new(out)?)
}

/// Projected gradient descent from `initial`, returning the best iterate.
pub fn optimize_phases(
    objective: &CrbObjective,
    initial: &PhaseShiftVector,
    config: &OptimizerConfig,
) -> Result<PhaseOptimization, OptimizerError> {
    config.validate()?;
    if initial.len() != objective.n_elements() {
        return Err(OptimizerError::LengthMismatch {
            expected: objective.n_elements(),
            got: initial.len(),
        });
    }

    let f0 = objective.evaluate(initial.values())?;
    let mut current = initial.clone();
    let mut f_current = f0;
    let mut best = current.clone();
    let mut f_best = f_current;
    let mut trace = vec![f0];

    let abort = |msg: String, best: PhaseShiftVector, f_best: f64, trace: Vec<f64>| {
        PhaseOptimization {
            phases: best,
            objective: f_best,
            initial_objective: f0,
            iterations: trace.len() - 1,
            termination: Termination::Aborted(msg),
            objective_trace: trace,
        }
    };

    let mut termination = Termination::MaxIterations;
    for _ in 0..config.max_iterations {
        let grad = match objective.euclidean_gradient(current.values()) {
            Ok(g) => g,
            Err(e) => return Ok(abort(e.to_string(), best, f_best, trace)),
        };
        let projected = riemannian_project(&grad, current.values());
        let grad_norm_sq: f64 = projected.iter().map(|g| g.norm_sqr()).sum();
        if grad_norm_sq == 0.0 {
            termination = Termination::Converged;
            break;
        }
        let direction: Vec<Complex64> = projected.iter().map(|g| -g).collect();
        let grad_sup = projected.iter().map(|g| g.norm()).fold(0.0, f64::max);

        let mut step = config.initial_step / grad_sup;
        let mut accepted = None;
        for _ in 0..config.max_backtracks {
            let raw = tangent_update(current.values(), &direction, step);
            let candidate = match retract(&raw) {
                Ok(c) => c,
                Err(_) => {
                    step *= config.backtrack_factor;
                    continue;
                }
            };
            let f_new = match objective.evaluate(candidate.values()) {
                Ok(f) => f,
                Err(e) => return Ok(abort(e.to_string(), best, f_best, trace)),
            };
            if f_new <= f_current - config.armijo_c * step * grad_norm_sq {
                accepted = Some((candidate, f_new));
                break;
            }
            step *= config.backtrack_factor;
        }

        let Some((candidate, f_new)) = accepted else {
            termination = Termination::LineSearchStalled;
            break;
        };
        let decrease = f_current - f_new;
        current = candidate;
        f_current = f_new;
        trace.push(f_current);
        if f_current < f_best {
            f_best = f_current;
            best = current.clone();
        }
        if decrease < config.relative_tolerance * f0.abs() {
            termination = Termination::Converged;
            break;
        }
    }

    Ok(PhaseOptimization {
        phases: best,
        objective: f_best,
        initial_objective: f0,
        iterations: trace.len() - 1,
        termination,
        objective_trace: trace,
    })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{bs_ris_channel, SignalModelParams};
    use crate::crb::{cascade_derivatives, nf_channel_derivatives, project_derivatives, DerivativeMode};
    use crate::geometry::{CartesianPoint, RisGeometry, SphericalLocation};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_geom() -> RisGeometry {
        RisGeometry::for_carrier(2, 2, 0.5, 28e9).unwrap()
    }

    fn params() -> SignalModelParams {
        SignalModelParams::unit(28e9)
            .unwrap()
            .with_noise_power(1e-12)
            .unwrap()
    }

    /// Real-physics objective: one banked cycle of history plus the
    /// candidate cycle, weights over all three parameters.
    fn objective_for(geom: &RisGeometry, history_cycles: usize, seed: u64) -> CrbObjective {
        let params = params();
        let loc = SphericalLocation::new(10.0 * geom.wavelength(), 1.2, 0.7).unwrap();
        let derivs =
            nf_channel_derivatives(geom, &loc, &params, DerivativeMode::PhaseOnly).unwrap();
        let bs = bs_ris_channel(geom, &CartesianPoint { x: 3.0, y: -1.0, z: 0.5 }, 1.0).unwrap();
        let cascaded = cascade_derivatives(&bs, &derivs).unwrap();

        let mut history = FisherMatrix::zeros(3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..history_cycles {
            let p = PhaseShiftVector::random(geom.num_elements(), &mut rng).unwrap();
            let a = project_derivatives(&cascaded, &p, params.symbol()).unwrap();
            history.accumulate(&a, params.noise_power()).unwrap();
        }
        CrbObjective::new(
            cascaded,
            history,
            vec![0.3, 1.0, 2.0],
            params.symbol(),
            params.noise_power(),
            crate::crb::REGULARIZATION_SCALE,
        )
        .unwrap()
    }

    fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> PhaseShiftVector {
        PhaseShiftVector::random(n, rng).unwrap()
    }

    #[test]
    fn euclidean_gradient_matches_wirtinger_finite_differences() {
        let geom = small_geom();
        let objective = objective_for(&geom, 3, 101);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let beta = random_unit(geom.num_elements(), &mut rng);

        let grad = objective.euclidean_gradient(beta.values()).unwrap();
        let h = 1e-6;
        let mut fd = Vec::new();
        for n in 0..beta.len() {
            let mut bump = |dz: Complex64| -> f64 {
                let mut b = beta.values().to_vec();
                b[n] += dz;
                objective.evaluate(&b).unwrap()
            };
            let dfx = (bump(Complex64::new(h, 0.0)) - bump(Complex64::new(-h, 0.0))) / (2.0 * h);
            let dfy = (bump(Complex64::new(0.0, h)) - bump(Complex64::new(0.0, -h))) / (2.0 * h);
            fd.push(Complex64::new(dfx, dfy));
        }

        let scale = fd.iter().map(|g| g.norm()).fold(0.0, f64::max);
        for (n, (g, f)) in grad.iter().zip(&fd).enumerate() {
            assert!(
                (g - f).norm() <= 1e-5 * scale,
                "gradient entry {n}: analytic {g}, finite difference {f}"
            );
        }
    }

    #[test]
    fn descent_trace_is_monotone_and_never_worse_than_start() {
        let geom = small_geom();
        let objective = objective_for(&geom, 1, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let start = random_unit(geom.num_elements(), &mut rng);

        let run = optimize_phases(&objective, &start, &OptimizerConfig::default()).unwrap();
        assert!(!matches!(run.termination, Termination::Aborted(_)));
        for pair in run.objective_trace.windows(2) {
            assert!(
                pair[1] <= pair[0],
                "objective rose from {} to {}",
                pair[0],
                pair[1]
            );
        }
        assert!(run.objective <= run.initial_objective);
        let trace_min = run
            .objective_trace
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert_eq!(run.objective, trace_min);
        assert_eq!(run.iterations + 1, run.objective_trace.len());
        // The best iterate must reproduce its recorded objective.
        assert_relative_eq!(
            objective.evaluate(run.phases.values()).unwrap(),
            run.objective,
            max_relative = 1e-12
        );
    }

    #[test]
    fn objective_is_invariant_under_a_global_phase() {
        let geom = small_geom();
        let objective = objective_for(&geom, 2, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let beta = random_unit(geom.num_elements(), &mut rng);
        let spun: Vec<Complex64> = beta
            .values()
            .iter()
            .map(|b| b * Complex64::from_polar(1.0, 1.234))
            .collect();
        let f = objective.evaluate(beta.values()).unwrap();
        let g = objective.evaluate(&spun).unwrap();
        assert_relative_eq!(f, g, max_relative = 1e-12);
    }

    #[test]
    fn optimized_phases_beat_a_large_random_search() {
        let geom = small_geom();
        let objective = objective_for(&geom, 1, 23);
        let mut rng = ChaCha8Rng::seed_from_u64(29);

        let start = random_unit(geom.num_elements(), &mut rng);
        let run = optimize_phases(&objective, &start, &OptimizerConfig::default()).unwrap();

        let mut best_random = f64::INFINITY;
        for _ in 0..1000 {
            let b = random_unit(geom.num_elements(), &mut rng);
            best_random = best_random.min(objective.evaluate(b.values()).unwrap());
        }
        assert!(
            run.objective <= best_random,
            "descent reached {} but random search found {}",
            run.objective,
            best_random
        );
    }

    #[test]
    fn zero_weights_converge_immediately() {
        let geom = small_geom();
        let params = params();
        let loc = SphericalLocation::new(10.0 * geom.wavelength(), 1.2, 0.7).unwrap();
        let derivs =
            nf_channel_derivatives(&geom, &loc, &params, DerivativeMode::PhaseOnly).unwrap();
        let bs = bs_ris_channel(&geom, &CartesianPoint { x: 3.0, y: -1.0, z: 0.5 }, 1.0).unwrap();
        let cascaded = cascade_derivatives(&bs, &derivs).unwrap();
        let mut history = FisherMatrix::zeros(3);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let p = PhaseShiftVector::random(geom.num_elements(), &mut rng).unwrap();
        let a = project_derivatives(&cascaded, &p, params.symbol()).unwrap();
        history.accumulate(&a, params.noise_power()).unwrap();

        let objective = CrbObjective::new(
            cascaded,
            history,
            vec![0.0, 0.0, 0.0],
            params.symbol(),
            params.noise_power(),
            crate::crb::REGULARIZATION_SCALE,
        )
        .unwrap();
        let start = random_unit(geom.num_elements(), &mut rng);
        let run = optimize_phases(&objective, &start, &OptimizerConfig::default()).unwrap();
        assert_eq!(run.termination, Termination::Converged);
        assert_eq!(run.iterations, 0);
        assert_eq!(run.objective, 0.0);
    }

    #[test]
    fn unregularized_rank_deficient_objective_fails_up_front() {
        let geom = small_geom();
        let params = params();
        let loc = SphericalLocation::new(10.0 * geom.wavelength(), 1.2, 0.7).unwrap();
        let derivs =
            nf_channel_derivatives(&geom, &loc, &params, DerivativeMode::PhaseOnly).unwrap();
        let bs = bs_ris_channel(&geom, &CartesianPoint { x: 3.0, y: -1.0, z: 0.5 }, 1.0).unwrap();
        let cascaded = cascade_derivatives(&bs, &derivs).unwrap();

        // Empty history, no ridge: one cycle of rank-two information in a
        // three-parameter problem cannot be inverted.
        let objective = CrbObjective::new(
            cascaded,
            FisherMatrix::zeros(3),
            vec![1.0, 1.0, 1.0],
            params.symbol(),
            params.noise_power(),
            0.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let start = random_unit(geom.num_elements(), &mut rng);
        assert!(optimize_phases(&objective, &start, &OptimizerConfig::default()).is_err());
    }

    #[test]
    fn config_validation_rejects_degenerate_settings() {
        let bad = [
            OptimizerConfig {
                max_iterations: 0,
                ..OptimizerConfig::default()
            },
            OptimizerConfig {
                armijo_c: 1.0,
                ..OptimizerConfig::default()
            },
            OptimizerConfig {
                backtrack_factor: 0.0,
                ..OptimizerConfig::default()
            },
            OptimizerConfig {
                initial_step: 0.0,
                ..OptimizerConfig::default()
            },
            OptimizerConfig {
                relative_tolerance: f64::NAN,
                ..OptimizerConfig::default()
            },
        ];
        for config in bad {
            assert!(matches!(
                config.validate(),
                Err(OptimizerError::BadConfig(_))
            ));
        }
        assert!(OptimizerConfig::default().validate().is_ok());
    }

    #[test]
    fn retraction_rejects_zero_entries() {
        let v = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        assert!(matches!(
            retract(&v),
            Err(OptimizerError::ZeroRetraction { index: 0 })
        ));
    }

    #[test]
    fn small_tangent_steps_barely_leave_the_circle() {
        // For a tangent direction d, |b + a d| = sqrt(1 + a^2 |d|^2), so
        // the retraction correction is bounded by a^2 |d|^2 / 2.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let beta = random_unit(16, &mut rng);
        let raw: Vec<Complex64> = (0..16)
            .map(|_| {
                Complex64::new(
                    rand::Rng::gen_range(&mut rng, -1.0..1.0),
                    rand::Rng::gen_range(&mut rng, -1.0..1.0),
                )
            })
            .collect();
        let d = riemannian_project(&raw, beta.values());
        let step = 1e-3;
        let moved = tangent_update(beta.values(), &d, step);
        let retracted = retract(&moved).unwrap();
        for ((m, r), di) in moved.iter().zip(retracted.values()).zip(&d) {
            let bound = 0.5 * step * step * di.norm_sqr() + 1e-15;
            assert!(
                (m - r).norm() <= bound,
                "retraction moved {} > bound {bound}",
                (m - r).norm()
            );
        }
    }

    proptest! {
        #[test]
        fn projection_is_tangent_and_idempotent(
            seed in 0u64..1_000,
            n in 1usize..12,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let beta = random_unit(n, &mut rng);
            let v: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(
                    rand::Rng::gen_range(&mut rng, -2.0..2.0),
                    rand::Rng::gen_range(&mut rng, -2.0..2.0),
                ))
                .collect();
            let p = riemannian_project(&v, beta.values());
            let vmax = v.iter().map(|z| z.norm()).fold(1e-30, f64::max);
            for (pi, bi) in p.iter().zip(beta.values()) {
                // Tangency: no radial component remains.
                prop_assert!((pi * bi.conj()).re.abs() <= 1e-12 * vmax);
            }
            let pp = riemannian_project(&p, beta.values());
            for (a, b) in p.iter().zip(&pp) {
                prop_assert!((a - b).norm() <= 1e-12 * vmax);
            }
        }
    }
}
