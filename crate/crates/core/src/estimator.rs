//! Consumption history and least-squares preference estimates, in batch and
//! recursive (rank-one) form.

use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};
use crate::linalg::{self, cholesky, cholesky_solve, dot, jacobi_eigen, spd_inverse, Matrix};
use crate::scalar::Scalar;

/// Number of rank-one downdates after which the covariance is re-inverted
/// from the information matrix.
pub const REFRESH_INTERVAL: usize = 256;

/// Default ridge scale for simulation-mode initialization.
pub const DEFAULT_RIDGE: f64 = 1e8;

pub(crate) fn check_finite<T: Scalar>(v: &[T], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LearnError::NonFinite(what))
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(LearnError::DimensionMismatch { expected, found })
    }
}

/// Ordered bundles, their realized utilities and the known baseline utility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History<T> {
    dim: usize,
    rows: Vec<Vec<T>>,
    utilities: Vec<T>,
    baseline: T,
}

impl<T: Scalar> History<T> {
    pub fn new(dim: usize, baseline: T) -> Self {
        Self {
            dim,
            rows: Vec::new(),
            utilities: Vec::new(),
            baseline,
        }
    }

    /// Builds a history from parallel row and utility lists.
    pub fn from_parts(rows: Vec<Vec<T>>, utilities: Vec<T>, baseline: T) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut h = Self::new(dim, baseline);
        check_dim(rows.len(), utilities.len())?;
        for (x, u) in rows.into_iter().zip(utilities) {
            h.push(x, u)?;
        }
        Ok(h)
    }

    pub fn push(&mut self, x: Vec<T>, u: T) -> Result<()> {
        check_dim(self.dim, x.len())?;
        check_finite(&x, "bundle")?;
        check_finite(&[u], "utility")?;
        self.rows.push(x);
        self.utilities.push(u);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    pub fn utilities(&self) -> &[T] {
        &self.utilities
    }

    pub fn baseline(&self) -> T {
        self.baseline
    }

    pub fn design(&self) -> Matrix<T> {
        Matrix::from_rows(&self.rows).unwrap_or_else(|| Matrix::zeros(0, self.dim))
    }
}

/// The learner's memory: information matrix, covariance, estimate and count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionState<T> {
    info: Matrix<T>,
    cov: Option<Matrix<T>>,
    estimate: Vec<T>,
    count: usize,
    full_rank: bool,
    ridge: T,
    baseline: T,
    sigma2: T,
    since_refresh: usize,
}

impl<T: Scalar> PrecisionState<T> {
    pub fn dim(&self) -> usize {
        self.estimate.len()
    }

    /// `Z_t`, including the ridge term for ridge-initialized states.
    pub fn info(&self) -> &Matrix<T> {
        &self.info
    }

    /// `W_t`; `None` before full rank.
    pub fn cov(&self) -> Option<&Matrix<T>> {
        self.cov.as_ref()
    }

    pub fn require_cov(&self) -> Result<&Matrix<T>> {
        self.cov.as_ref().ok_or(LearnError::StateNotFullRank)
    }

    pub fn estimate(&self) -> &[T] {
        &self.estimate
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn full_rank(&self) -> bool {
        self.full_rank
    }

    /// Ridge scale `rho` of the initialization, zero for batch states.
    pub fn ridge(&self) -> T {
        self.ridge
    }

    /// Intercept the learner believes in.
    pub fn baseline(&self) -> T {
        self.baseline
    }

    /// Noise variance used for predictive variances (defaults to 1).
    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    pub fn with_sigma2(mut self, sigma2: T) -> Self {
        self.sigma2 = sigma2;
        self
    }

    pub fn with_baseline(mut self, baseline: T) -> Self {
        self.baseline = baseline;
        self
    }

    pub fn with_estimate(mut self, estimate: Vec<T>) -> Result<Self> {
        check_dim(self.dim(), estimate.len())?;
        check_finite(&estimate, "estimate")?;
        self.estimate = estimate;
        Ok(self)
    }

    /// Builds a full-rank state directly from an information matrix.
    pub fn from_info(info: Matrix<T>, estimate: Vec<T>, baseline: T) -> Result<Self> {
        check_dim(info.rows(), estimate.len())?;
        if !is_full_rank(&info) {
            return Err(LearnError::RankDeficient {
                rank: numerical_rank(&info),
                dim: info.rows(),
            });
        }
        let cov = spd_inverse(&info).ok_or(LearnError::RankDeficient {
            rank: numerical_rank(&info),
            dim: info.rows(),
        })?;
        Ok(Self {
            info,
            cov: Some(cov),
            estimate,
            count: 0,
            full_rank: true,
            ridge: T::zero(),
            baseline,
            sigma2: T::one(),
            since_refresh: 0,
        })
    }
}

/// Outcome of absorbing one observation.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateResult<T> {
    pub surprise: T,
    pub gain: Vec<T>,
    pub predicted_variance: T,
    pub new_state: PrecisionState<T>,
}

/// Gaussian utility noise. `sigma2 = 0` means deterministic utilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel<T> {
    pub sigma2: T,
    pub seed: u64,
}

impl<T: Scalar> NoiseModel<T> {
    pub fn new(sigma2: T, seed: u64) -> Result<Self> {
        if !sigma2.is_finite() || sigma2 < T::zero() {
            return Err(LearnError::InvalidArgument(format!(
                "noise variance must be finite and >= 0, got {sigma2}"
            )));
        }
        Ok(Self { sigma2, seed })
    }

    pub fn noiseless() -> Self {
        Self {
            sigma2: T::zero(),
            seed: 0,
        }
    }
}

/// Numerical rank of a symmetric PSD matrix: eigenvalues above the relative
/// rank tolerance times the largest eigenvalue.
pub fn numerical_rank<T: Scalar>(info: &Matrix<T>) -> usize {
    let (vals, _) = jacobi_eigen(info);
    let top = vals.iter().fold(T::zero(), |m, &v| m.max(v));
    if top <= T::zero() {
        return 0;
    }
    let cut = T::rank_tol() * top;
    vals.iter().filter(|&&v| v > cut).count()
}

pub fn is_full_rank<T: Scalar>(info: &Matrix<T>) -> bool {
    info.rows() > 0 && numerical_rank(info) == info.rows()
}

/// Batch least squares on a full-rank history.
pub fn batch_ols<T: Scalar>(history: &History<T>) -> Result<PrecisionState<T>> {
    if history.is_empty() {
        return Err(LearnError::EmptyHistory);
    }
    let n = history.dim();
    let x = history.design();
    let info = x.gram();
    let rank = numerical_rank(&info);
    if rank < n {
        return Err(LearnError::RankDeficient { rank, dim: n });
    }
    let l = cholesky(&info).ok_or(LearnError::RankDeficient { rank, dim: n })?;
    let centered: Vec<T> = history
        .utilities()
        .iter()
        .map(|&u| u - history.baseline())
        .collect();
    let xtu = x.transpose().mul_vec(&centered);
    let estimate = cholesky_solve(&l, &xtu);
    let cov = spd_inverse(&info).ok_or(LearnError::RankDeficient { rank, dim: n })?;
    Ok(PrecisionState {
        info,
        cov: Some(cov),
        estimate,
        count: history.len(),
        full_rank: true,
        ridge: T::zero(),
        baseline: history.baseline(),
        sigma2: T::one(),
        since_refresh: 0,
    })
}

/// Ridge initialization: `Z = I/rho`, `W = rho I`, estimate `beta0`.
pub fn init_ridge<T: Scalar>(n: usize, rho: T, beta0: Vec<T>) -> Result<PrecisionState<T>> {
    if n == 0 {
        return Err(LearnError::InvalidArgument("need at least one good".into()));
    }
    if !(rho > T::zero()) || !rho.is_finite() {
        return Err(LearnError::InvalidArgument(format!(
            "ridge scale must be positive and finite, got {rho}"
        )));
    }
    check_dim(n, beta0.len())?;
    check_finite(&beta0, "initial estimate")?;
    Ok(PrecisionState {
        info: Matrix::identity(n).scaled(T::one() / rho),
        cov: Some(Matrix::identity(n).scaled(rho)),
        estimate: beta0,
        count: 0,
        full_rank: true,
        ridge: rho,
        baseline: T::zero(),
        sigma2: T::one(),
        since_refresh: 0,
    })
}

/// `Wx / (1 + x'Wx)` together with `x'Wx`.
pub fn gain<T: Scalar>(cov: &Matrix<T>, x: &[T]) -> (Vec<T>, T) {
    let wx = cov.mul_vec(x);
    let q = dot(x, &wx);
    let denom = T::one() + q;
    (wx.iter().map(|&v| v / denom).collect(), q)
}

/// Absorbs one observation `(x, u)` by a rank-one update of the state.
pub fn recursive_update<T: Scalar>(
    state: &PrecisionState<T>,
    x: &[T],
    u: T,
) -> Result<UpdateResult<T>> {
    let cov = state.require_cov()?;
    check_dim(state.dim(), x.len())?;
    check_finite(x, "bundle")?;
    check_finite(&[u], "utility")?;

    let wx = cov.mul_vec(x);
    let q = dot(x, &wx);
    let denom = T::one() + q;
    let g: Vec<T> = wx.iter().map(|&v| v / denom).collect();
    let surprise = u - (state.baseline + dot(x, &state.estimate));

    let estimate: Vec<T> = state
        .estimate
        .iter()
        .zip(&g)
        .map(|(&b, &w)| b + w * surprise)
        .collect();
    let mut info = state.info.clone();
    info.add_outer(x, T::one());

    let mut since_refresh = state.since_refresh + 1;
    let mut new_cov = None;
    if since_refresh >= REFRESH_INTERVAL {
        if let Some(inv) = spd_inverse(&info) {
            new_cov = Some(inv);
            since_refresh = 0;
        }
    }
    let new_cov = new_cov.unwrap_or_else(|| {
        let mut c = cov.clone();
        c.add_outer(&wx, -T::one() / denom);
        c.symmetrized()
    });

    Ok(UpdateResult {
        surprise,
        gain: g,
        predicted_variance: state.sigma2 * q,
        new_state: PrecisionState {
            info,
            cov: Some(new_cov),
            estimate,
            count: state.count + 1,
            full_rank: true,
            ridge: state.ridge,
            baseline: state.baseline,
            sigma2: state.sigma2,
            since_refresh,
        },
    })
}

/// Predicted utility of `x`: mean `alpha + x'beta_hat`, variance `sigma2 x'Wx`.
pub fn predict_utility<T: Scalar>(state: &PrecisionState<T>, x: &[T]) -> Result<(T, T)> {
    let cov = state.require_cov()?;
    check_dim(state.dim(), x.len())?;
    check_finite(x, "bundle")?;
    let mean = state.baseline + dot(x, &state.estimate);
    let var = (state.sigma2 * cov.quad_form(x)).max(T::zero());
    Ok((mean, var))
}

/// `(beta_hat - beta, |beta_hat - beta|^2)`.
pub fn estimation_error<T: Scalar>(
    state: &PrecisionState<T>,
    beta_true: &[T],
) -> Result<(Vec<T>, T)> {
    check_dim(state.dim(), beta_true.len())?;
    let delta = linalg::sub(&state.estimate, beta_true);
    let mse = dot(&delta, &delta);
    Ok((delta, mse))
}

/// Smallest achievable expected squared error after `t` unit-norm observations
/// on `n` goods: `sigma2 n^2 / t`.
pub fn mse_lower_bound<T: Scalar>(t: usize, n: usize, sigma2: T) -> T {
    let n = T::of_usize(n);
    sigma2 * n * n / T::of_usize(t)
}

/// Least squares with an estimated intercept, computed on demeaned data.
#[derive(Clone, Debug, PartialEq)]
pub struct InterceptFit<T> {
    pub estimate: Vec<T>,
    pub alpha_hat: T,
    /// `X'MX` with `M` the demeaning projector.
    pub info: Matrix<T>,
    pub cov: Matrix<T>,
}

pub fn batch_ols_estimated_intercept<T: Scalar>(
    rows: &[Vec<T>],
    utilities: &[T],
) -> Result<InterceptFit<T>> {
    if rows.is_empty() {
        return Err(LearnError::EmptyHistory);
    }
    check_dim(rows.len(), utilities.len())?;
    let n = rows[0].len();
    let t = T::of_usize(rows.len());
    let mut xbar = vec![T::zero(); n];
    for r in rows {
        check_dim(n, r.len())?;
        check_finite(r, "bundle")?;
        for (m, &v) in xbar.iter_mut().zip(r) {
            *m = *m + v;
        }
    }
    let xbar: Vec<T> = xbar.into_iter().map(|v| v / t).collect();
    let ubar = utilities.iter().copied().sum::<T>() / t;
    let centered: Vec<Vec<T>> = rows.iter().map(|r| linalg::sub(r, &xbar)).collect();
    let xc = Matrix::from_rows(&centered).expect("rectangular rows");
    let info = xc.gram();
    let rank = numerical_rank(&info);
    if rank < n {
        return Err(LearnError::RankDeficient { rank, dim: n });
    }
    let l = cholesky(&info).ok_or(LearnError::RankDeficient { rank, dim: n })?;
    let uc: Vec<T> = utilities.iter().map(|&u| u - ubar).collect();
    let estimate = cholesky_solve(&l, &xc.transpose().mul_vec(&uc));
    let alpha_hat = ubar - dot(&xbar, &estimate);
    let cov = spd_inverse(&info).ok_or(LearnError::RankDeficient { rank, dim: n })?;
    Ok(InterceptFit {
        estimate,
        alpha_hat,
        info,
        cov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn line_history() -> History<f64> {
        let rows = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
        ];
        let u = rows.iter().map(|r| r.iter().sum()).collect();
        History::from_parts(rows, u, 0.0).unwrap()
    }

    #[test]
    fn orthonormal_design_recovers_utilities() {
        let h = History::from_parts(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![3.0, 5.0], 0.0)
            .unwrap();
        let s = batch_ols(&h).unwrap();
        assert_eq!(s.estimate(), &[3.0, 5.0]);
        assert_eq!(s.cov().unwrap(), &Matrix::identity(2));
    }

    #[test]
    fn line_history_matches_worked_example() {
        let s = batch_ols(&line_history()).unwrap();
        assert_eq!(s.info().diag(), vec![2.0, 3.0, 3.0, 2.0]);
        let w = [
            [13.0, -5.0, 2.0, -1.0],
            [-5.0, 10.0, -4.0, 2.0],
            [2.0, -4.0, 10.0, -5.0],
            [-1.0, 2.0, -5.0, 13.0],
        ];
        let cov = s.cov().unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert!((cov[(r, c)] - w[r][c] / 21.0).abs() < 1e-12);
            }
        }
        for b in s.estimate() {
            assert!((b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_columns_are_rank_deficient() {
        let h = History::from_parts(
            vec![vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 1.0, 1.0]],
            vec![1.0, 2.0, 3.0],
            0.0,
        )
        .unwrap();
        assert_eq!(
            batch_ols(&h).unwrap_err(),
            LearnError::RankDeficient { rank: 2, dim: 3 }
        );
    }

    #[test]
    fn unit_surprise_gain_on_line_state() {
        let s = batch_ols(&line_history()).unwrap();
        let u = 1.0 + 1.0;
        let r = recursive_update(&s, &[1.0, 0.0, 0.0, 0.0], u).unwrap();
        assert!((r.surprise - 1.0).abs() < 1e-12);
        let want = [13.0 / 34.0, -5.0 / 34.0, 2.0 / 34.0, -1.0 / 34.0];
        for (g, w) in r.gain.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
        assert_eq!(r.new_state.count(), 8);
    }

    #[test]
    fn zero_surprise_keeps_estimate() {
        let s = batch_ols(&line_history()).unwrap();
        let x = [0.3, -0.2, 0.5, 1.0];
        let u = dot(&x, s.estimate());
        let r = recursive_update(&s, &x, u).unwrap();
        assert_eq!(r.surprise, 0.0);
        assert_eq!(r.new_state.estimate(), s.estimate());
        let grown = r.new_state.info().sub(s.info());
        assert!((grown.trace() - dot(&x, &x)).abs() < 1e-14);
    }

    #[test]
    fn predictions() {
        let s = batch_ols(&line_history()).unwrap();
        assert_eq!(predict_utility(&s, &[0.0; 4]).unwrap(), (0.0, 0.0));
        let (m, v) = predict_utility(&s, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
        assert!((v - 13.0 / 21.0).abs() < 1e-12);
        let id = PrecisionState::from_info(Matrix::identity(2), vec![0.0, 0.0], 0.0).unwrap();
        assert_eq!(predict_utility(&id, &[1.0, 1.0]).unwrap().1, 2.0);
    }

    #[test]
    fn errors_and_bounds() {
        let s = init_ridge(2, 1e8f64, vec![0.9, 1.2]).unwrap();
        let (d, mse) = estimation_error(&s, &[1.0, 1.0]).unwrap();
        assert!((d[0] + 0.1).abs() < 1e-15 && (d[1] - 0.2).abs() < 1e-15);
        assert!((mse - 0.05).abs() < 1e-15);
        assert!(matches!(
            estimation_error(&s, &[1.0]),
            Err(LearnError::DimensionMismatch { .. })
        ));
        let s4 = init_ridge(4, 1e8f64, vec![1.3; 4]).unwrap();
        assert!((estimation_error(&s4, &[1.0; 4]).unwrap().1 - 0.36).abs() < 1e-12);
        assert_eq!(mse_lower_bound(4, 2, 1.0), 1.0);
        assert_eq!(mse_lower_bound(5, 1, 2.0), 0.4);
    }

    #[test]
    fn ridge_state_shape() {
        let s = init_ridge(2, 1e6, vec![0.0, 0.0]).unwrap();
        assert_eq!(s.cov().unwrap(), &Matrix::identity(2).scaled(1e6));
        assert!(s.full_rank());
        assert_eq!(s.count(), 0);
        assert!(init_ridge(2, 0.0, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn ridge_converges_to_ols() {
        let h = line_history();
        let ols = batch_ols(&h).unwrap();
        let mut s = init_ridge(4, 1e8, vec![5.0, -3.0, 2.0, 7.0]).unwrap();
        for (x, &u) in h.rows().iter().zip(h.utilities()) {
            s = recursive_update(&s, x, u).unwrap().new_state;
        }
        assert!(linalg::max_abs_diff(s.estimate(), ols.estimate()) < 1e-4);
    }

    #[test]
    fn estimated_intercept_matches_augmented_regression() {
        let rows = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![2.0, 1.0],
            vec![0.5, 3.0],
        ];
        let u = vec![2.1, 1.4, 3.2, 4.4, 3.9];
        let fit = batch_ols_estimated_intercept(&rows, &u).unwrap();
        let aug: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect())
            .collect();
        let full = batch_ols(&History::from_parts(aug, u, 0.0).unwrap()).unwrap();
        assert!((fit.alpha_hat - full.estimate()[0]).abs() < 1e-12);
        assert!(linalg::max_abs_diff(&fit.estimate, &full.estimate()[1..]) < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let rows = vec![vec![1.0f32, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let h = History::from_parts(rows, vec![1.0, 2.0, 3.0], 0.0).unwrap();
        let s = batch_ols(&h).unwrap();
        assert!((s.estimate()[0] - 1.0).abs() < 1e-5);
        assert!((s.estimate()[1] - 2.0).abs() < 1e-5);
    }
}
