//! Two-period monopolist facing a learning consumer: complete-information
//! planning over the signed ℓ1 sphere, the stationary incomplete-information
//! bundle, and the welfare cost of misperceived preferences.

use serde::{Deserialize, Serialize};

use crate::design::Norm;
use crate::error::{LearnError, Result};
use crate::estimator::{check_dim, check_finite, PrecisionState};
use crate::linalg::{dot, sub, unit, Matrix};
use crate::scalar::Scalar;
use crate::spectral::decompose;

/// Grid points per two-good edge in the period-1 bundle search.
pub const EDGE_GRID: usize = 1001;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig<T> {
    /// Marginal cost per unit of each good.
    pub gamma: Vec<T>,
    /// Weight of period-2 profit.
    pub delta_weight: T,
    pub norm: Norm,
    /// Whether the caller asserts the large-weight, low-noise regime.
    pub regime_premise: bool,
}

impl<T: Scalar> MarketConfig<T> {
    pub fn validate(&self, n: usize) -> Result<()> {
        check_dim(n, self.gamma.len())?;
        check_finite(&self.gamma, "costs")?;
        if !(self.delta_weight > T::zero()) || !self.delta_weight.is_finite() {
            return Err(LearnError::InvalidArgument(format!(
                "period-2 weight must be positive, got {}",
                self.delta_weight
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanMode {
    SellDirect,
    Manipulation,
    Discovery,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricingPlan<T> {
    pub bundles: (Vec<T>, Vec<T>),
    pub prices: (T, T),
    pub mode: PlanMode,
    /// 1: both argmaxes agree; 2: perceived best good dominates; 3: otherwise.
    pub case: u8,
    pub period2_good: usize,
    /// Noiseless expected estimate after the period-1 bundle.
    pub expected_estimate: Vec<T>,
    /// Per-period profits `p_t - x_t'gamma`.
    pub profits: (T, T),
    /// `profit_1 + delta * profit_2`.
    pub objective: T,
    /// Several grid bundles satisfied the manipulation requirement.
    pub non_unique: bool,
    /// The manipulation requirement could not be met on the grid.
    pub constraint_violated: bool,
    pub regime_premise: bool,
}

fn argmax_lowest<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for k in 1..v.len() {
        if v[k] > v[best] {
            best = k;
        }
    }
    best
}

/// Bundle on the signed ℓ1 sphere with support on at most two goods:
/// `sa * a * e_k + sb * (1 - a) * e_l`.
#[derive(Clone, Copy, Debug)]
struct EdgePoint<T> {
    k: usize,
    l: usize,
    ck: T,
    cl: T,
}

impl<T: Scalar> EdgePoint<T> {
    fn dense(&self, n: usize) -> Vec<T> {
        let mut x = vec![T::zero(); n];
        x[self.k] = x[self.k] + self.ck;
        x[self.l] = x[self.l] + self.cl;
        x
    }
}

struct Evaluator<'a, T> {
    cov: &'a Matrix<T>,
    delta: Vec<T>,
}

impl<T: Scalar> Evaluator<'_, T> {
    /// `(x'Delta, 1 + x'Wx)` for an edge point.
    fn parts(&self, p: &EdgePoint<T>) -> (T, T) {
        let w = self.cov;
        let xd = p.ck * self.delta[p.k] + p.cl * self.delta[p.l];
        let q = if p.k == p.l {
            let c = p.ck + p.cl;
            c * c * w[(p.k, p.k)]
        } else {
            p.ck * p.ck * w[(p.k, p.k)]
                + p.cl * p.cl * w[(p.l, p.l)]
                + T::lit(2.0) * p.ck * p.cl * w[(p.k, p.l)]
        };
        (xd, T::one() + q)
    }

    /// Expected change of estimate `g` after consuming the edge point.
    fn update_on(&self, p: &EdgePoint<T>, g: usize) -> T {
        let (xd, denom) = self.parts(p);
        let wxg = p.ck * self.cov[(g, p.k)] + p.cl * self.cov[(g, p.l)];
        -wxg * xd / denom
    }
}

fn candidates<T: Scalar>(n: usize, delta: &[T], crossings: bool) -> Vec<EdgePoint<T>> {
    let one = T::one();
    let mut out = Vec::new();
    for k in 0..n {
        for s in [one, -one] {
            out.push(EdgePoint { k, l: k, ck: s, cl: T::zero() });
        }
    }
    let steps = EDGE_GRID - 1;
    for k in 0..n {
        for l in (k + 1)..n {
            for sk in [one, -one] {
                for sl in [one, -one] {
                    for g in 1..steps {
                        let a = T::of_usize(g) / T::of_usize(steps);
                        out.push(EdgePoint { k, l, ck: sk * a, cl: sl * (one - a) });
                    }
                    if crossings {
                        // x'Delta = 0 on this edge
                        let dk = sk * delta[k];
                        let dl = sl * delta[l];
                        if dl != dk {
                            let a = dl / (dl - dk);
                            if a > T::zero() && a < one {
                                out.push(EdgePoint { k, l, ck: sk * a, cl: sl * (one - a) });
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Two-period plan when the provider knows the true preferences.
///
/// Period-1 bundles are searched over signed vertices and two-good edges of
/// the ℓ1 sphere (1001 grid points per edge, plus the exact points where an
/// edge crosses the no-learning hyperplane). Period 2 sells a single good at
/// its expected perceived value.
pub fn plan_complete_info<T: Scalar>(
    beta: &[T],
    beta_hat0: &[T],
    state0: &PrecisionState<T>,
    cfg: &MarketConfig<T>,
) -> Result<PricingPlan<T>> {
    let n = beta.len();
    check_dim(n, beta_hat0.len())?;
    check_dim(n, state0.dim())?;
    check_finite(beta, "true preferences")?;
    check_finite(beta_hat0, "perceived preferences")?;
    cfg.validate(n)?;
    let cov = state0.require_cov()?;

    let hat_margin = sub(beta_hat0, &cfg.gamma);
    let true_margin = sub(beta, &cfg.gamma);
    let i = argmax_lowest(&hat_margin);
    let j = argmax_lowest(&true_margin);
    let ev = Evaluator {
        cov,
        delta: sub(beta_hat0, beta),
    };
    let tol = T::tol(1e-12) * (T::one() + beta_hat0.iter().fold(T::zero(), |m, v| m.max(v.abs())));
    let margin1 = |p: &EdgePoint<T>| p.ck * hat_margin[p.k] + p.cl * hat_margin[p.l];

    let (case, mode, good, chosen, non_unique, violated) = if i == j && beta_hat0[i] <= beta[i] {
        let p = EdgePoint { k: i, l: i, ck: T::one(), cl: T::zero() };
        (1u8, PlanMode::SellDirect, i, p, false, false)
    } else if i == j || hat_margin[i] > true_margin[j] {
        let case = if i == j { 1 } else { 2 };
        let preserve = i == j;
        let cands = candidates(n, &ev.delta, true);
        let feasible = |p: &EdgePoint<T>| {
            let d = ev.update_on(p, i);
            if preserve {
                d.abs() <= tol
            } else {
                d >= -tol
            }
        };
        let score = |p: &EdgePoint<T>| {
            let d = ev.update_on(p, i);
            margin1(p) + cfg.delta_weight * (beta_hat0[i] + d - cfg.gamma[i])
        };
        let mut best: Option<(EdgePoint<T>, T)> = None;
        let mut count = 0usize;
        for p in cands.iter().filter(|p| feasible(p)) {
            count += 1;
            let s = score(p);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((*p, s));
            }
        }
        match best {
            Some((p, _)) => (case, PlanMode::Manipulation, i, p, count > 1, false),
            None => {
                let p = *cands
                    .iter()
                    .reduce(|a, b| if ev.update_on(b, i) > ev.update_on(a, i) { b } else { a })
                    .expect("at least one candidate");
                (case, PlanMode::Manipulation, i, p, false, true)
            }
        }
    } else {
        let cands = candidates(n, &ev.delta, false);
        let p = *cands
            .iter()
            .reduce(|a, b| if ev.update_on(b, j) > ev.update_on(a, j) { b } else { a })
            .expect("at least one candidate");
        (3u8, PlanMode::Discovery, j, p, false, false)
    };

    let x1 = chosen.dense(n);
    let wx = cov.mul_vec(&x1);
    let (xd, denom) = (dot(&x1, &ev.delta), T::one() + dot(&x1, &wx));
    let expected: Vec<T> = beta_hat0
        .iter()
        .zip(&wx)
        .map(|(&b, &w)| b - w * xd / denom)
        .collect();
    let x2 = unit(n, good);
    let p1 = dot(&x1, beta_hat0);
    let p2 = dot(&x2, &expected);
    let profit1 = p1 - dot(&x1, &cfg.gamma);
    let profit2 = p2 - dot(&x2, &cfg.gamma);
    Ok(PricingPlan {
        bundles: (x1, x2),
        prices: (p1, p2),
        mode,
        case,
        period2_good: good,
        expected_estimate: expected,
        profits: (profit1, profit2),
        objective: profit1 + cfg.delta_weight * profit2,
        non_unique,
        constraint_violated: violated,
        regime_premise: cfg.regime_premise,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stance {
    /// The consumer is expected to be disappointed (`xi < 0`).
    Pessimistic,
    /// The consumer is expected to be pleasantly surprised (`xi > 0`).
    Optimistic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorBelief<T> {
    pub stance: Stance,
    /// Expected first-period surprise.
    pub xi: T,
}

impl<T: Scalar> PriorBelief<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.stance {
            Stance::Pessimistic => self.xi < T::zero(),
            Stance::Optimistic => self.xi > T::zero(),
        };
        if ok {
            Ok(())
        } else {
            Err(LearnError::SignViolation(format!(
                "expected surprise {} does not match a {:?} stance",
                self.xi, self.stance
            )))
        }
    }
}

/// `delta * x'Wx / (1 + x'Wx) * xi`.
pub fn incomplete_info_objective<T: Scalar>(cov: &Matrix<T>, x: &[T], xi: T, delta_weight: T) -> T {
    let q = cov.quad_form(x);
    delta_weight * q / (T::one() + q) * xi
}

/// Stationary bundle when the true preferences are unknown: the popularity
/// direction under pessimism, the correlation direction under optimism.
pub fn plan_incomplete_info<T: Scalar>(
    state0: &PrecisionState<T>,
    prior: &PriorBelief<T>,
    cfg: &MarketConfig<T>,
) -> Result<Vec<T>> {
    prior.validate()?;
    cfg.validate(state0.dim())?;
    state0.require_cov()?;
    let s = decompose(state0.info())?;
    Ok(match prior.stance {
        Stance::Pessimistic => s.v_n,
        Stance::Optimistic => s.v_c,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelfareDecomposition<T> {
    pub d_cs: T,
    pub d_profit: T,
    pub d_welfare: T,
    pub price_effect: T,
    pub cs_bundle_effect: T,
    pub profit_bundle_effect: T,
}

/// Bundle map choosing, from a finite feasible set, the bundle with the
/// largest margin `x'(b - gamma)` (lowest index on ties).
pub fn revealed_preference_map<T: Scalar>(
    feasible: Vec<Vec<T>>,
    gamma: Vec<T>,
) -> impl Fn(&[T]) -> Vec<T> {
    move |b: &[T]| {
        let m = sub(b, &gamma);
        let mut best = 0;
        let mut best_v = dot(&feasible[0], &m);
        for (k, x) in feasible.iter().enumerate().skip(1) {
            let v = dot(x, &m);
            if v > best_v {
                best = k;
                best_v = v;
            }
        }
        feasible[best].clone()
    }
}

/// Welfare change from implementing the bundle chosen under perceived rather
/// than true preferences, at prices equal to perceived value.
///
/// The bundle terms are formed from the same margins a revealed-preference
/// map compares, so their signs survive rounding; the intercept cancels from
/// every difference and is not needed.
pub fn welfare<T: Scalar, F: Fn(&[T]) -> Vec<T>>(
    bundle_map: F,
    beta: &[T],
    beta_hat: &[T],
    gamma: &[T],
) -> Result<WelfareDecomposition<T>> {
    let n = beta.len();
    check_dim(n, beta_hat.len())?;
    check_dim(n, gamma.len())?;
    let x_true = bundle_map(beta);
    let x_hat = bundle_map(beta_hat);
    check_dim(n, x_true.len())?;
    check_dim(n, x_hat.len())?;
    let hat_margin = sub(beta_hat, gamma);
    let true_margin = sub(beta, gamma);
    let profit_bundle_effect = dot(&x_hat, &hat_margin) - dot(&x_true, &hat_margin);
    let welfare_direct = dot(&x_hat, &true_margin) - dot(&x_true, &true_margin);
    let cs_bundle_effect = profit_bundle_effect - welfare_direct;
    let price_effect = dot(&x_true, &sub(beta_hat, beta));
    let d_cs = -price_effect - cs_bundle_effect;
    let d_profit = price_effect + profit_bundle_effect;
    Ok(WelfareDecomposition {
        d_cs,
        d_profit,
        d_welfare: d_cs + d_profit,
        price_effect,
        cs_bundle_effect,
        profit_bundle_effect,
    })
}
