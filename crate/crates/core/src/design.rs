//! Bundle design: no-learning (orthogonal) bundles, two-good joint-increase
//! regions, companion-good choice and intercept-shifted orthogonal bundles.

use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};
use crate::estimator::check_finite;
use crate::linalg::{dot, norm1, norm2, norm_inf, Matrix};
use crate::scalar::Scalar;

/// Bundle normalization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    #[default]
    L2,
    #[serde(rename = "linf")]
    LInf,
}

impl Norm {
    pub fn of<T: Scalar>(self, x: &[T]) -> T {
        match self {
            Norm::L1 => norm1(x),
            Norm::L2 => norm2(x),
            Norm::LInf => norm_inf(x),
        }
    }
}

/// Rescales `x` to unit norm. Fails on the zero vector.
pub fn normalize<T: Scalar>(x: &[T], norm: Norm) -> Result<Vec<T>> {
    check_finite(x, "bundle")?;
    let s = norm.of(x);
    if s == T::zero() {
        return Err(LearnError::InvalidArgument("cannot normalize a zero bundle".into()));
    }
    Ok(x.iter().map(|&v| v / s).collect())
}

/// How `orthogonal_bundle_with` scales its output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scaling {
    #[default]
    UnitL2,
    /// Entries sum to one (fails when they sum to zero).
    SumToOne,
}

/// Unit-ℓ2 bundle orthogonal to `delta`. See [`orthogonal_bundle_with`].
pub fn orthogonal_bundle<T: Scalar>(delta: &[T], anchor: Option<&[T]>) -> Result<Vec<T>> {
    orthogonal_bundle_with(delta, anchor, Scaling::UnitL2)
}

/// Bundle on the hyperplane `x'delta = 0`.
///
/// With an anchor, the anchor's projection onto the hyperplane. Without one,
/// the two largest-magnitude entries `a, b` of `delta` are swapped with one
/// sign flipped (`x_a = delta_b`, `x_b = -delta_a`), the rest zeroed, and the
/// result sign-normalized so its largest-magnitude entry is positive.
pub fn orthogonal_bundle_with<T: Scalar>(
    delta: &[T],
    anchor: Option<&[T]>,
    scaling: Scaling,
) -> Result<Vec<T>> {
    check_finite(delta, "bias vector")?;
    let dd = dot(delta, delta);
    if dd == T::zero() {
        return Err(LearnError::ZeroBias);
    }
    let raw = match anchor {
        Some(a) => {
            if a.len() != delta.len() {
                return Err(LearnError::DimensionMismatch {
                    expected: delta.len(),
                    found: a.len(),
                });
            }
            check_finite(a, "anchor")?;
            let c = dot(a, delta) / dd;
            let p: Vec<T> = a.iter().zip(delta).map(|(&ai, &di)| ai - c * di).collect();
            if norm2(&p) <= T::tol(1e-12) * norm2(a) {
                return Err(LearnError::AnchorParallel);
            }
            p
        }
        None => canonical_orthogonal(delta)?,
    };
    let out = match scaling {
        Scaling::UnitL2 => normalize(&raw, Norm::L2)?,
        Scaling::SumToOne => {
            let s: T = raw.iter().copied().sum();
            if s.abs() <= T::epsilon() * norm1(&raw) {
                return Err(LearnError::InvalidArgument(
                    "orthogonal bundle entries sum to zero".into(),
                ));
            }
            raw.iter().map(|&v| v / s).collect()
        }
    };
    Ok(out)
}

fn canonical_orthogonal<T: Scalar>(delta: &[T]) -> Result<Vec<T>> {
    let n = delta.len();
    if n < 2 {
        return Err(LearnError::NoOrthogonalDirection);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&p, &q| {
        delta[q]
            .abs()
            .partial_cmp(&delta[p].abs())
            .expect("finite")
            .then(p.cmp(&q))
    });
    let (a, b) = (idx[0], idx[1]);
    let mut x = vec![T::zero(); n];
    x[a] = delta[b];
    x[b] = -delta[a];
    if x[a] == T::zero() {
        x[b] = T::one();
    }
    let lead = if x[a].abs() > x[b].abs() || (x[a].abs() == x[b].abs() && a < b) {
        a
    } else {
        b
    };
    if x[lead] < T::zero() {
        x[a] = -x[a];
        x[b] = -x[b];
    }
    Ok(x)
}

/// Ratio `x_j / x_i = -delta_i / delta_j` that leaves a two-good bundle on
/// the no-learning hyperplane. The errors must have opposite signs.
pub fn two_good_orthogonal<T: Scalar>(delta_i: T, delta_j: T) -> Result<T> {
    check_finite(&[delta_i, delta_j], "bias entries")?;
    if delta_i == T::zero() || delta_j == T::zero() || (delta_i > T::zero()) == (delta_j > T::zero())
    {
        return Err(LearnError::SignViolation(format!(
            "errors {delta_i} and {delta_j} must be nonzero with opposite signs"
        )));
    }
    Ok(-delta_i / delta_j)
}

/// Range of `x_j / x_i` for which a positive expected surprise raises both
/// estimates. `lower = 0, upper = +inf` when `w_ij >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointIncreaseRegion<T> {
    /// Below this ratio the estimate of good `j` falls.
    pub lower: T,
    /// Above this ratio the estimate of good `i` falls.
    pub upper: T,
    pub nonempty: bool,
}

impl<T: Scalar> JointIncreaseRegion<T> {
    pub fn contains(&self, ratio: T) -> bool {
        ratio > self.lower && ratio < self.upper
    }
}

pub fn joint_increase_region<T: Scalar>(
    cov: &Matrix<T>,
    i: usize,
    j: usize,
) -> Result<JointIncreaseRegion<T>> {
    let n = cov.rows();
    if i >= n || j >= n || i == j {
        return Err(LearnError::InvalidArgument(format!(
            "goods {i} and {j} must be distinct indices below {n}"
        )));
    }
    let (wii, wjj, wij) = (cov[(i, i)], cov[(j, j)], cov[(i, j)]);
    if !(wii > T::zero() && wjj > T::zero()) {
        return Err(LearnError::NotPositiveDefinite(
            wii.min(wjj).to_f64_lossy(),
        ));
    }
    if wij >= T::zero() {
        return Ok(JointIncreaseRegion {
            lower: T::zero(),
            upper: T::infinity(),
            nonempty: true,
        });
    }
    let lower = wij.abs() / wjj;
    let upper = wii / wij.abs();
    Ok(JointIncreaseRegion {
        lower,
        upper,
        nonempty: lower < upper,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    Raise,
    Lower,
}

/// Good whose consumption moves the target's estimate furthest in the
/// requested direction, scored by `w_{j,target} / (1 + w_jj) * delta_j`.
pub fn companion_good<T: Scalar>(
    cov: &Matrix<T>,
    delta: &[T],
    target: usize,
    objective: Objective,
) -> Result<usize> {
    let n = cov.rows();
    if delta.len() != n {
        return Err(LearnError::DimensionMismatch {
            expected: n,
            found: delta.len(),
        });
    }
    if target >= n {
        return Err(LearnError::InvalidArgument(format!("target {target} out of range")));
    }
    check_finite(delta, "bias vector")?;
    let score = |j: usize| cov[(j, target)] / (T::one() + cov[(j, j)]) * delta[j];
    let mut best = 0;
    let mut best_score = score(0);
    for j in 1..n {
        let s = score(j);
        let better = match objective {
            Objective::Raise => s < best_score,
            Objective::Lower => s > best_score,
        };
        if better {
            best = j;
            best_score = s;
        }
    }
    Ok(best)
}

/// `x = -(gap / |delta|^2) delta + z`, which has zero expected surprise when
/// the learner's intercept exceeds the true one by `gap`.
pub fn shifted_orthogonal<T: Scalar>(delta: &[T], intercept_gap: T, z: &[T]) -> Result<Vec<T>> {
    check_finite(delta, "bias vector")?;
    check_finite(z, "orthogonal bundle")?;
    check_finite(&[intercept_gap], "intercept gap")?;
    if z.len() != delta.len() {
        return Err(LearnError::DimensionMismatch {
            expected: delta.len(),
            found: z.len(),
        });
    }
    let dd = dot(delta, delta);
    if dd == T::zero() {
        return if intercept_gap == T::zero() {
            Ok(z.to_vec())
        } else {
            Err(LearnError::ZeroBias)
        };
    }
    if dot(z, delta).abs() > T::tol(1e-10) * norm2(z).max(T::one()) * dd.sqrt() {
        return Err(LearnError::InvalidArgument(
            "z must be orthogonal to the bias vector".into(),
        ));
    }
    let c = intercept_gap / dd;
    Ok(delta.iter().zip(z).map(|(&d, &zi)| zi - c * d).collect())
}

/// Unit-ℓ2 shifted orthogonal bundle built from a unit `z ⊥ delta`:
/// `x = -(gap/|delta|^2) delta + s z` with `s = sqrt(1 - gap^2/|delta|^2)`.
/// Returns `None` when `|gap| > |delta|`, where no unit bundle has zero
/// expected surprise.
pub fn unit_shifted_orthogonal<T: Scalar>(delta: &[T], intercept_gap: T, z: &[T]) -> Option<Vec<T>> {
    let dd = dot(delta, delta);
    if dd == T::zero() {
        return None;
    }
    let r = intercept_gap * intercept_gap / dd;
    if r > T::one() {
        return None;
    }
    let s = (T::one() - r).sqrt();
    let zs: Vec<T> = z.iter().map(|&v| v * s).collect();
    shifted_orthogonal(delta, intercept_gap, &zs).ok()
}
