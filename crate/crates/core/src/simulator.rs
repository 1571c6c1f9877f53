//! Provider/consumer loop: a strategy emits bundles, utilities are drawn from
//! the true preferences plus Gaussian noise, and the learner updates
//! recursively. Noise comes from a ChaCha20 stream seeded per scenario and
//! mapped to standard normals with `rand_distr::StandardNormal` (ziggurat).

use std::cell::Cell;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{normalize, orthogonal_bundle, two_good_orthogonal, unit_shifted_orthogonal, Norm};
use crate::error::{LearnError, Result};
use crate::estimator::{
    check_dim, check_finite, estimation_error, init_ridge, recursive_update, NoiseModel,
    PrecisionState,
};
use crate::linalg::{dot, jacobi_eigen, max_abs_diff, unit};
use crate::scalar::Scalar;
use crate::spectral::decompose;

/// How the learner's state is seeded before the first recorded step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Init<T> {
    /// Ridge prior `Z = I/rho` centred on `beta0`.
    Ridge { rho: T, beta0: Vec<T> },
    /// Ridge prior followed by one unrecorded noisy observation of each unit
    /// singleton, in index order.
    Warmup { rho: T, beta0: Vec<T> },
}

impl<T: Scalar> Init<T> {
    pub fn beta0(&self) -> &[T] {
        match self {
            Init::Ridge { beta0, .. } | Init::Warmup { beta0, .. } => beta0,
        }
    }

    pub fn rho(&self) -> T {
        match self {
            Init::Ridge { rho, .. } | Init::Warmup { rho, .. } => *rho,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario<T> {
    pub beta_true: Vec<T>,
    pub alpha: T,
    /// Intercept the learner uses; equal to `alpha` unless misspecified.
    pub alpha_hat: T,
    pub noise: NoiseModel<T>,
    pub init: Init<T>,
    pub horizon: usize,
    pub norm: Norm,
}

impl<T: Scalar> Scenario<T> {
    pub fn dim(&self) -> usize {
        self.beta_true.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(LearnError::InvalidArgument("need at least one good".into()));
        }
        if self.horizon == 0 {
            return Err(LearnError::InvalidArgument("horizon must be at least 1".into()));
        }
        check_finite(&self.beta_true, "true preferences")?;
        check_finite(&[self.alpha, self.alpha_hat], "intercept")?;
        check_dim(n, self.init.beta0().len())?;
        NoiseModel::new(self.noise.sigma2, self.noise.seed)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StrategyKind<T> {
    SingleRoundRobin,
    PopularityBiased,
    CorrelationBreaking,
    OrthogonalToError,
    FixedBundle(Vec<T>),
    /// `e_i + ratio e_j`; without a ratio the no-learning ratio is computed
    /// from the current errors each step.
    TwoGoodTargeted { i: usize, j: usize, ratio: Option<T> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strategy<T> {
    pub kind: StrategyKind<T>,
    /// Recompute spectral directions every step instead of once.
    pub recompute: bool,
}

impl<T: Scalar> Strategy<T> {
    pub fn new(kind: StrategyKind<T>) -> Self {
        Self {
            kind,
            recompute: true,
        }
    }

    /// Complete-information strategies read the true preferences.
    pub fn requires_oracle(&self) -> bool {
        matches!(
            self.kind,
            StrategyKind::OrthogonalToError | StrategyKind::TwoGoodTargeted { .. }
        )
    }
}

/// Read-counting view of the ground truth handed to complete-information
/// strategies only.
pub struct TruthOracle<'a, T> {
    beta: &'a [T],
    alpha: T,
    reads: Cell<usize>,
}

impl<'a, T: Scalar> TruthOracle<'a, T> {
    pub fn new(beta: &'a [T], alpha: T) -> Self {
        Self {
            beta,
            alpha,
            reads: Cell::new(0),
        }
    }

    pub fn beta_true(&self) -> &'a [T] {
        self.reads.set(self.reads.get() + 1);
        self.beta
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn reads(&self) -> usize {
        self.reads.get()
    }
}

/// Seeded Gaussian noise; draws nothing when the variance is zero.
pub struct NoiseStream<T> {
    rng: ChaCha20Rng,
    sd: T,
    silent: bool,
}

impl<T: Scalar> NoiseStream<T> {
    pub fn new(model: &NoiseModel<T>) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(model.seed),
            sd: model.sigma2.sqrt(),
            silent: model.sigma2 == T::zero(),
        }
    }

    pub fn draw(&mut self) -> T {
        if self.silent {
            return T::zero();
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.sd * T::lit(z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord<T> {
    pub t: usize,
    pub bundle: Vec<T>,
    pub utility: T,
    pub surprise: T,
    pub estimate: Vec<T>,
    pub mse: T,
    pub kappa: T,
    pub lambda_min: T,
    /// Set when the strategy could not produce its intended bundle.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub steps: Vec<StepRecord<T>>,
    pub final_state: PrecisionState<T>,
    pub sigma2: T,
    pub initial_estimate: Vec<T>,
    /// Reads of the true preferences made by the strategy.
    pub oracle_reads: usize,
}

impl<T: Scalar> Trajectory<T> {
    pub fn dim(&self) -> usize {
        self.final_state.dim()
    }

    pub fn mse_series(&self) -> Vec<T> {
        self.steps.iter().map(|s| s.mse).collect()
    }
}

struct Choice<T> {
    bundle: Vec<T>,
    flagged: bool,
    /// Already at its final scale; skip normalization.
    prescaled: bool,
}

impl<T: Scalar> Choice<T> {
    fn plain(bundle: Vec<T>) -> Self {
        Self {
            bundle,
            flagged: false,
            prescaled: false,
        }
    }

    fn fallback(n: usize) -> Self {
        Self {
            bundle: unit(n, 0),
            flagged: true,
            prescaled: false,
        }
    }
}

struct Planner<T> {
    strategy: Strategy<T>,
    frozen: Option<Vec<T>>,
}

impl<T: Scalar> Planner<T> {
    fn choose(
        &mut self,
        t: usize,
        state: &PrecisionState<T>,
        previous: Option<&[T]>,
        oracle: Option<&TruthOracle<'_, T>>,
    ) -> Result<Choice<T>> {
        let n = state.dim();
        match &self.strategy.kind {
            StrategyKind::SingleRoundRobin => Ok(Choice::plain(unit(n, (t - 1) % n))),
            StrategyKind::FixedBundle(x) => Ok(Choice::plain(x.clone())),
            StrategyKind::PopularityBiased | StrategyKind::CorrelationBreaking => {
                if !self.strategy.recompute {
                    if let Some(v) = &self.frozen {
                        return Ok(Choice::plain(v.clone()));
                    }
                }
                let s = decompose(state.info())?;
                let v = if matches!(self.strategy.kind, StrategyKind::PopularityBiased) {
                    s.v_n
                } else {
                    s.v_c
                };
                if !self.strategy.recompute {
                    self.frozen = Some(v.clone());
                }
                Ok(Choice::plain(v))
            }
            StrategyKind::OrthogonalToError => {
                let oracle = oracle.ok_or_else(|| {
                    LearnError::StrategyInfeasible("orthogonal strategy needs the truth".into())
                })?;
                let (delta, _) = estimation_error(state, oracle.beta_true())?;
                let gap = state.baseline() - oracle.alpha();
                if dot(&delta, &delta) == T::zero() {
                    return Ok(Choice::fallback(n));
                }
                let z = match orthogonal_bundle(&delta, previous) {
                    Ok(z) => z,
                    Err(LearnError::AnchorParallel) => orthogonal_bundle(&delta, None)?,
                    Err(LearnError::NoOrthogonalDirection) => return Ok(Choice::fallback(n)),
                    Err(e) => return Err(e),
                };
                if gap == T::zero() {
                    return Ok(Choice::plain(z));
                }
                match unit_shifted_orthogonal(&delta, gap, &z) {
                    Some(x) => Ok(Choice {
                        bundle: x,
                        flagged: false,
                        prescaled: true,
                    }),
                    None => {
                        let c = gap / dot(&delta, &delta);
                        Ok(Choice {
                            bundle: delta.iter().map(|&d| -c * d).collect(),
                            flagged: true,
                            prescaled: true,
                        })
                    }
                }
            }
            StrategyKind::TwoGoodTargeted { i, j, ratio } => {
                let (i, j) = (*i, *j);
                if i >= n || j >= n || i == j {
                    return Err(LearnError::StrategyInfeasible(format!(
                        "targeted goods {i}, {j} invalid for {n} goods"
                    )));
                }
                let r = match ratio {
                    Some(r) => *r,
                    None => {
                        let oracle = oracle.ok_or_else(|| {
                            LearnError::StrategyInfeasible("targeted strategy needs the truth".into())
                        })?;
                        let (delta, _) = estimation_error(state, oracle.beta_true())?;
                        match two_good_orthogonal(delta[i], delta[j]) {
                            Ok(r) => r,
                            Err(_) => {
                                return Ok(Choice {
                                    bundle: unit(n, i),
                                    flagged: true,
                                    prescaled: false,
                                })
                            }
                        }
                    }
                };
                let mut x = unit(n, i);
                x[j] = r;
                Ok(Choice::plain(x))
            }
        }
    }
}

fn spectrum_extremes<T: Scalar>(state: &PrecisionState<T>) -> (T, T) {
    let (vals, _) = jacobi_eigen(state.info());
    let lmax = vals.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let lmin = vals.iter().fold(T::infinity(), |m, &v| m.min(v));
    let kappa = if lmin > T::zero() {
        lmax / lmin
    } else {
        T::infinity()
    };
    (kappa, lmin)
}

/// Initial learner state for a scenario, warmup included.
pub fn initial_state<T: Scalar>(
    scenario: &Scenario<T>,
    noise: &mut NoiseStream<T>,
) -> Result<PrecisionState<T>> {
    let n = scenario.dim();
    let init = &scenario.init;
    let mut state = init_ridge(n, init.rho(), init.beta0().to_vec())?
        .with_baseline(scenario.alpha_hat)
        .with_sigma2(scenario.noise.sigma2);
    if let Init::Warmup { .. } = init {
        for i in 0..n {
            let x = unit(n, i);
            let u = scenario.alpha + dot(&x, &scenario.beta_true) + noise.draw();
            state = recursive_update(&state, &x, u)?.new_state;
        }
    }
    Ok(state)
}

/// Runs a scenario under a strategy for the full horizon.
pub fn run<T: Scalar>(scenario: &Scenario<T>, strategy: &Strategy<T>) -> Result<Trajectory<T>> {
    scenario.validate()?;
    let n = scenario.dim();
    if let StrategyKind::FixedBundle(x) = &strategy.kind {
        check_dim(n, x.len())?;
    }
    let mut noise = NoiseStream::new(&scenario.noise);
    let mut state = initial_state(scenario, &mut noise)?;
    let initial_estimate = state.estimate().to_vec();
    let oracle = TruthOracle::new(&scenario.beta_true, scenario.alpha);
    let handed = strategy.requires_oracle().then_some(&oracle);
    let mut planner = Planner {
        strategy: strategy.clone(),
        frozen: None,
    };
    let mut steps: Vec<StepRecord<T>> = Vec::with_capacity(scenario.horizon);
    for t in 1..=scenario.horizon {
        let previous = steps.last().map(|s| s.bundle.as_slice());
        let choice = planner.choose(t, &state, previous, handed)?;
        let x = if choice.prescaled {
            choice.bundle
        } else {
            normalize(&choice.bundle, scenario.norm).map_err(|_| {
                LearnError::StrategyInfeasible(format!("strategy emitted a zero bundle at t = {t}"))
            })?
        };
        let u = scenario.alpha + dot(&x, &scenario.beta_true) + noise.draw();
        let upd = recursive_update(&state, &x, u)?;
        state = upd.new_state;
        let (_, mse) = estimation_error(&state, &scenario.beta_true)?;
        let (kappa, lambda_min) = spectrum_extremes(&state);
        steps.push(StepRecord {
            t,
            bundle: x,
            utility: u,
            surprise: upd.surprise,
            estimate: state.estimate().to_vec(),
            mse,
            kappa,
            lambda_min,
            flagged: choice.flagged,
        });
    }
    Ok(Trajectory {
        steps,
        final_state: state,
        sigma2: scenario.noise.sigma2,
        initial_estimate,
        oracle_reads: oracle.reads(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics<T> {
    pub lambda_min_divergent: bool,
    pub final_mse: T,
    /// `final_mse / (sigma2 n^2 / t)`; with `sigma2 = 0` it is
    /// `final_mse t / n^2` and `sigma2_zero` is set.
    pub bound_ratio: T,
    pub sigma2_zero: bool,
    /// First step from which every later per-step estimate change stays
    /// below `1e-12`.
    pub drift_stop: Option<usize>,
}

/// Slope threshold (information units per step) above which the smallest
/// eigenvalue is treated as growing without bound.
pub const DIVERGENCE_SLOPE: f64 = 1e-6;

pub fn convergence_diagnostics<T: Scalar>(traj: &Trajectory<T>) -> Result<Diagnostics<T>> {
    let last = traj
        .steps
        .last()
        .ok_or_else(|| LearnError::InvalidArgument("empty trajectory".into()))?;
    let n = T::of_usize(traj.dim());
    let t = T::of_usize(traj.final_state.count());

    let window = &traj.steps[traj.steps.len() / 2..];
    let divergent = if window.len() < 2 {
        false
    } else {
        let k = T::of_usize(window.len());
        let mean_t = window.iter().map(|s| T::of_usize(s.t)).sum::<T>() / k;
        let mean_l = window.iter().map(|s| s.lambda_min).sum::<T>() / k;
        let (mut sxy, mut sxx) = (T::zero(), T::zero());
        for s in window {
            let dx = T::of_usize(s.t) - mean_t;
            sxy = sxy + dx * (s.lambda_min - mean_l);
            sxx = sxx + dx * dx;
        }
        let monotone = window.windows(2).all(|w| w[1].lambda_min >= w[0].lambda_min);
        monotone && sxy / sxx > T::lit(DIVERGENCE_SLOPE)
    };

    let sigma2_zero = traj.sigma2 == T::zero();
    let scale = if sigma2_zero { T::one() } else { traj.sigma2 };
    let bound_ratio = last.mse * t / (scale * n * n);

    let tol = T::tol(1e-12);
    let mut drift_stop = None;
    let mut prev = traj.initial_estimate.clone();
    for s in &traj.steps {
        let moved = max_abs_diff(&s.estimate, &prev) >= tol;
        if moved {
            drift_stop = None;
        } else if drift_stop.is_none() {
            drift_stop = Some(s.t);
        }
        prev.clone_from(&s.estimate);
    }

    Ok(Diagnostics {
        lambda_min_divergent: divergent,
        final_mse: last.mse,
        bound_ratio,
        sigma2_zero,
        drift_stop,
    })
}

/// Noiseless one-step change of the estimate: `-Wx/(1+x'Wx) * x'delta`.
pub fn expected_update<T: Scalar>(
    state: &PrecisionState<T>,
    x: &[T],
    beta_true: &[T],
) -> Result<Vec<T>> {
    expected_update_with_intercept(state, x, beta_true, state.baseline())
}

/// As [`expected_update`], with a true intercept that may differ from the
/// learner's: the expected surprise becomes `-(alpha_hat - alpha) - x'delta`.
pub fn expected_update_with_intercept<T: Scalar>(
    state: &PrecisionState<T>,
    x: &[T],
    beta_true: &[T],
    alpha_true: T,
) -> Result<Vec<T>> {
    let cov = state.require_cov()?;
    check_dim(state.dim(), x.len())?;
    let (delta, _) = estimation_error(state, beta_true)?;
    let wx = cov.mul_vec(x);
    let denom = T::one() + dot(x, &wx);
    let surprise = -(state.baseline() - alpha_true) - dot(x, &delta);
    Ok(wx.iter().map(|&w| w / denom * surprise).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn biased_start(strategy: StrategyKind<f64>, horizon: usize) -> Trajectory<f64> {
        let sc = Scenario {
            beta_true: vec![1.0, 1.0],
            alpha: 0.0,
            alpha_hat: 0.0,
            noise: NoiseModel::noiseless(),
            init: Init::Ridge {
                rho: 1e8,
                beta0: vec![0.9, 1.2],
            },
            horizon,
            norm: Norm::L2,
        };
        run(&sc, &Strategy::new(strategy)).unwrap()
    }

    #[test]
    fn orthogonal_run_is_frozen() {
        let tr = biased_start(StrategyKind::OrthogonalToError, 20);
        for s in &tr.steps {
            assert_eq!(s.estimate, vec![0.9, 1.2]);
            assert_eq!(s.surprise, 0.0);
            assert!((s.mse - 0.05).abs() < 1e-15);
        }
        assert!(tr.oracle_reads > 0);
    }

    #[test]
    fn round_robin_identifies_both_goods() {
        let tr = biased_start(StrategyKind::SingleRoundRobin, 4);
        assert!(tr.steps[1].mse < 1e-12);
        assert_eq!(tr.oracle_reads, 0);
    }

    #[test]
    fn seeded_runs_repeat_exactly() {
        let sc = Scenario {
            beta_true: vec![1.0, -0.5, 2.0],
            alpha: 0.3,
            alpha_hat: 0.3,
            noise: NoiseModel::new(0.5, 7).unwrap(),
            init: Init::Warmup {
                rho: 1e8,
                beta0: vec![0.0; 3],
            },
            horizon: 30,
            norm: Norm::L2,
        };
        let st = Strategy::new(StrategyKind::CorrelationBreaking);
        assert_eq!(run(&sc, &st).unwrap(), run(&sc, &st).unwrap());
    }

    #[test]
    fn fixed_bundle_information_does_not_diverge() {
        let tr = biased_start(StrategyKind::FixedBundle(vec![1.0, 2.0]), 60);
        assert!(!convergence_diagnostics(&tr).unwrap().lambda_min_divergent);
        let rr = biased_start(StrategyKind::SingleRoundRobin, 60);
        assert!(convergence_diagnostics(&rr).unwrap().lambda_min_divergent);
    }

    #[test]
    fn popularity_kappa_increases() {
        let sc = Scenario {
            beta_true: vec![1.0, 1.0, 1.0],
            alpha: 0.0,
            alpha_hat: 0.0,
            noise: NoiseModel::noiseless(),
            init: Init::Warmup {
                rho: 1e8,
                beta0: vec![0.0; 3],
            },
            horizon: 25,
            norm: Norm::L2,
        };
        let tr = run(&sc, &Strategy::new(StrategyKind::PopularityBiased)).unwrap();
        for w in tr.steps.windows(2) {
            assert!(w[1].kappa > w[0].kappa);
        }
    }

    #[test]
    fn expected_update_matches_unit_surprise_gain() {
        let z = crate::linalg::Matrix::from_rows(&[
            [2.0, 1.0, 0.0, 0.0],
            [1.0, 3.0, 1.0, 0.0],
            [0.0, 1.0, 3.0, 1.0],
            [0.0, 0.0, 1.0, 2.0],
        ])
        .unwrap();
        let state = PrecisionState::from_info(z, vec![0.0; 4], 0.0).unwrap();
        let d = expected_update(&state, &[1.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let want = [13.0 / 34.0, -5.0 / 34.0, 2.0 / 34.0, -1.0 / 34.0];
        assert!(max_abs_diff(&d, &want) < 1e-12);
    }

    #[test]
    fn drift_stop_reported() {
        let tr = biased_start(StrategyKind::SingleRoundRobin, 200);
        let d = convergence_diagnostics(&tr).unwrap();
        assert!(d.sigma2_zero);
        let stop = d.drift_stop.unwrap();
        assert!(stop > 2 && stop < 200);
        let frozen = biased_start(StrategyKind::OrthogonalToError, 5);
        assert_eq!(convergence_diagnostics(&frozen).unwrap().drift_stop, Some(1));
    }
}
