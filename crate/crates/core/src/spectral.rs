//! Eigen-analysis of the information matrix: condition number, popularity
//! direction (leading eigenvector), correlation direction (trailing
//! eigenvector) and the eigen-shift predictions for absorbing either one.
//!
//! Conventions:
//! - eigenvalues are sorted descending;
//! - eigenvalues closer than `1e-9 * lambda_max` form a multiplicity cluster,
//!   whose basis is rebuilt from the projections of `e_1, e_2, ...` in index
//!   order;
//! - every eigenvector is flipped so that its largest-magnitude entry is
//!   positive, the lowest index deciding among entries of equal magnitude.

use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};
use crate::linalg::{dot, jacobi_eigen, norm2, Matrix};
use crate::scalar::Scalar;

/// Relative gap under which two eigenvalues are treated as equal.
pub const CLUSTER_TOL: f64 = 1e-9;
/// Entries of the correlation direction below this magnitude count as zero.
pub const ZERO_ENTRY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary<T> {
    pub eigenvalues: Vec<T>,
    /// Orthonormal columns paired with `eigenvalues`.
    pub eigenvectors: Matrix<T>,
    pub kappa: T,
    /// Leading eigenvector.
    pub v_n: Vec<T>,
    /// Trailing eigenvector (first canonical vector of the bottom cluster).
    pub v_c: Vec<T>,
    /// Column index of `v_c` inside `eigenvectors`.
    pub v_c_column: usize,
}

impl<T: Scalar> SpectralSummary<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda_max(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn lambda_min(&self) -> T {
        self.eigenvalues[self.dim() - 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    PopularityBiased,
    CorrelationBreaking,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaPrediction<T> {
    pub kappa_next: T,
    pub new_min: T,
    pub new_max: T,
}

/// Goods split by the sign of their correlation-direction entry (0-based).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationPartition {
    pub side_positive: Vec<usize>,
    pub side_negative: Vec<usize>,
    pub zero_entries: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralityEntry<T> {
    pub good: usize,
    pub popularity: T,
    pub correlation: T,
}

fn sign_normalize<T: Scalar>(v: &mut [T]) {
    let top = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if top == T::zero() {
        return;
    }
    let cut = top * (T::one() - T::tol(CLUSTER_TOL));
    if let Some(lead) = v.iter().position(|x| x.abs() >= cut) {
        if v[lead] < T::zero() {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
}

/// Canonical orthonormal basis of the span of `cols`: project `e_1, e_2, ...`
/// into the span and Gram-Schmidt the ones that add a new direction.
fn canonical_basis<T: Scalar>(cols: &[Vec<T>]) -> Vec<Vec<T>> {
    let n = cols[0].len();
    let k = cols.len();
    let accept = T::lit(1e-6);
    let mut out: Vec<Vec<T>> = Vec::with_capacity(k);
    for j in 0..n {
        if out.len() == k {
            break;
        }
        let mut p = vec![T::zero(); n];
        for c in cols {
            let w = c[j];
            for (pi, &ci) in p.iter_mut().zip(c) {
                *pi = *pi + w * ci;
            }
        }
        for _ in 0..2 {
            for q in &out {
                let h = dot(q, &p);
                for (pi, &qi) in p.iter_mut().zip(q) {
                    *pi = *pi - h * qi;
                }
            }
        }
        let np = norm2(&p);
        if np > accept {
            out.push(p.into_iter().map(|v| v / np).collect());
        }
    }
    out
}

/// Full spectral summary of a symmetric positive-definite matrix.
pub fn decompose<T: Scalar>(info: &Matrix<T>) -> Result<SpectralSummary<T>> {
    if !info.is_square() || info.rows() == 0 {
        return Err(LearnError::InvalidArgument(
            "information matrix must be square and nonempty".into(),
        ));
    }
    if !info.all_finite() {
        return Err(LearnError::NonFinite("information matrix"));
    }
    let asym = info.asymmetry();
    if asym > T::tol(1e-9) {
        return Err(LearnError::NotSymmetric(asym.to_f64_lossy()));
    }
    let n = info.rows();
    let (vals, vecs) = jacobi_eigen(info);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).expect("finite eigenvalues"));
    let eigenvalues: Vec<T> = order.iter().map(|&i| vals[i]).collect();
    let top = eigenvalues[0];
    let bottom = eigenvalues[n - 1];
    if !(top > T::zero()) || bottom <= T::of_usize(n) * T::epsilon() * top {
        return Err(LearnError::NotPositiveDefinite(bottom.to_f64_lossy()));
    }
    let mut columns: Vec<Vec<T>> = order.iter().map(|&i| vecs.column(i)).collect();

    let gap = T::tol(CLUSTER_TOL) * top;
    let mut clusters: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 1..=n {
        if i == n || eigenvalues[i - 1] - eigenvalues[i] >= gap {
            clusters.push((start, i));
            start = i;
        }
    }
    for &(a, b) in &clusters {
        if b - a > 1 {
            let basis = canonical_basis(&columns[a..b]);
            if basis.len() == b - a {
                for (slot, v) in columns[a..b].iter_mut().zip(basis) {
                    *slot = v;
                }
            }
        }
    }
    for c in &mut columns {
        sign_normalize(c);
    }
    let eigenvectors = Matrix::from_fn(n, n, |r, c| columns[c][r]);
    let v_c_column = clusters.last().map_or(n - 1, |&(a, _)| a);
    Ok(SpectralSummary {
        kappa: top / bottom,
        v_n: columns[0].clone(),
        v_c: columns[v_c_column].clone(),
        v_c_column,
        eigenvalues,
        eigenvectors,
    })
}

pub fn condition_number<T: Scalar>(info: &Matrix<T>) -> Result<T> {
    Ok(decompose(info)?.kappa)
}

/// Extreme eigenvalues after absorbing the unit popularity or correlation
/// direction once.
///
/// Absorbing `v_c` raises the smallest eigenvalue by one; the new extremes are
/// `min(lambda_min + 1, lambda_{n-1})` and `max(lambda_max, lambda_min + 1)`.
/// The second term matters for nearly isotropic matrices, where the raised
/// eigenvalue overtakes the old maximum and the condition number grows.
pub fn predict_kappa_after<T: Scalar>(
    summary: &SpectralSummary<T>,
    which: Direction,
) -> KappaPrediction<T> {
    let n = summary.dim();
    let lmax = summary.lambda_max();
    let lmin = summary.lambda_min();
    let one = T::one();
    let (new_min, new_max) = if n == 1 {
        (lmax + one, lmax + one)
    } else {
        match which {
            Direction::PopularityBiased => (lmin, lmax + one),
            Direction::CorrelationBreaking => {
                let next = summary.eigenvalues[n - 2];
                ((lmin + one).min(next), lmax.max(lmin + one))
            }
        }
    };
    KappaPrediction {
        kappa_next: new_max / new_min,
        new_min,
        new_max,
    }
}

pub fn partition_by_correlation<T: Scalar>(summary: &SpectralSummary<T>) -> CorrelationPartition {
    let tol = T::tol(ZERO_ENTRY_TOL);
    let mut p = CorrelationPartition::default();
    for (i, &v) in summary.v_c.iter().enumerate() {
        if v.abs() < tol {
            p.zero_entries.push(i);
        } else if v > T::zero() {
            p.side_positive.push(i);
        } else {
            p.side_negative.push(i);
        }
    }
    p
}

/// Goods ranked by popularity-direction entry, descending. Entries within
/// `1e-9` of each other (relative to the largest) are ordered by index.
pub fn centrality_ranking<T: Scalar>(summary: &SpectralSummary<T>) -> Vec<CentralityEntry<T>> {
    let v = &summary.v_n;
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).expect("finite entries"));
    let scale = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let tol = T::tol(CLUSTER_TOL) * scale;
    let mut ranked = Vec::with_capacity(idx.len());
    let mut group: Vec<usize> = Vec::new();
    for &i in &idx {
        if let Some(&last) = group.last() {
            if v[last] - v[i] > tol {
                group.sort_unstable();
                ranked.append(&mut group);
            }
        }
        group.push(i);
    }
    group.sort_unstable();
    ranked.append(&mut group);
    ranked
        .into_iter()
        .map(|g| CentralityEntry {
            good: g,
            popularity: summary.v_n[g],
            correlation: summary.v_c[g],
        })
        .collect()
}

pub fn centrality_report<T: Scalar>(info: &Matrix<T>) -> Result<Vec<CentralityEntry<T>>> {
    Ok(centrality_ranking(&decompose(info)?))
}

/// Expected one-step fall in squared estimation error from absorbing `x`:
/// `sigma2 x'W^2x / (1 + x'Wx)`.
pub fn expected_mse_reduction<T: Scalar>(cov: &Matrix<T>, x: &[T], sigma2: T) -> T {
    let wx = cov.mul_vec(x);
    sigma2 * dot(&wx, &wx) / (T::one() + dot(x, &wx))
}
