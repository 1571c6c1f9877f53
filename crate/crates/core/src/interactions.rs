//! Pairwise interaction regressors, the no-learning root of the interaction
//! quadratic, covariance sparsity for singleton-and-pair histories, and
//! reduction of collinear design columns.

use serde::{Deserialize, Serialize};

use crate::design::Norm;
use crate::error::{LearnError, Result};
use crate::estimator::check_finite;
use crate::linalg::{dot, independent_columns, norm2, spd_inverse, Matrix};
use crate::scalar::Scalar;

/// Column layout of the augmented design: the `m` primitive goods followed by
/// one column per pair `(i, j)`, `i < j`, in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedIndex {
    pub m: usize,
    pub pairs: Vec<(usize, usize)>,
    pub total: usize,
}

impl AugmentedIndex {
    pub fn new(m: usize) -> Self {
        let pairs: Vec<(usize, usize)> = (0..m)
            .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
            .collect();
        Self {
            m,
            total: m + pairs.len(),
            pairs,
        }
    }

    /// Column of pair `(i, j)` (either order).
    pub fn pair_column(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        if a == b || b >= self.m {
            return None;
        }
        // Pairs starting with a: offset = sum_{k<a} (m-1-k)
        let before = a * (2 * self.m - a - 1) / 2;
        Some(self.m + before + (b - a - 1))
    }
}

/// Primitive entries followed by all pairwise products `x_i x_j`, `i < j`.
pub fn augment_bundle<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    check_finite(x, "bundle")?;
    let idx = AugmentedIndex::new(x.len());
    let mut out = Vec::with_capacity(idx.total);
    out.extend_from_slice(x);
    out.extend(idx.pairs.iter().map(|&(i, j)| x[i] * x[j]));
    Ok(out)
}

fn h<T: Scalar>(di: T, dj: T, dij: T, x: T) -> T {
    di * x + dj * (T::one() - x) + dij * x * (T::one() - x)
}

/// Share `x_i` in `(0, 1)` with `x_j = 1 - x_i` such that
/// `delta_i x_i + delta_j x_j + delta_ij x_i x_j = 0`.
///
/// Requires `delta_i > 0 > delta_j`; then `h(0) < 0 < h(1)` and exactly one
/// root of the quadratic lies in the interval.
pub fn orthogonal_quadratic<T: Scalar>(delta_i: T, delta_j: T, delta_ij: T) -> Result<T> {
    check_finite(&[delta_i, delta_j, delta_ij], "bias entries")?;
    if !(delta_i > T::zero() && delta_j < T::zero()) {
        return Err(LearnError::SignViolation(format!(
            "need delta_i > 0 > delta_j, got {delta_i} and {delta_j}"
        )));
    }
    if delta_ij == T::zero() {
        return Err(LearnError::DegenerateInteraction);
    }
    let zero = T::zero();
    let one = T::one();
    let two = T::lit(2.0);
    // -dij x^2 + (di - dj + dij) x + dj = 0
    let a = -delta_ij;
    let b = delta_i - delta_j + delta_ij;
    let c = delta_j;
    let disc = (b * b - T::lit(4.0) * a * c).max(zero);
    let sb = if b < zero { -one } else { one };
    let q = -(b + sb * disc.sqrt()) / two;
    let mut candidates = Vec::with_capacity(2);
    if q != zero {
        candidates.push(c / q);
        candidates.push(q / a);
    }
    let inside = |x: &T| *x > zero && *x < one;
    let mut x = match candidates.into_iter().find(inside) {
        Some(x) => x,
        None => bisect(|x| h(delta_i, delta_j, delta_ij, x), zero, one),
    };
    for _ in 0..3 {
        let fx = h(delta_i, delta_j, delta_ij, x);
        let dfx = delta_i - delta_j + delta_ij * (one - two * x);
        if fx == zero || dfx == zero {
            break;
        }
        let next = x - fx / dfx;
        if !inside(&next) || h(delta_i, delta_j, delta_ij, next).abs() >= fx.abs() {
            break;
        }
        x = next;
    }
    Ok(x)
}

fn bisect<T: Scalar>(f: impl Fn(T) -> T, mut lo: T, mut hi: T) -> T {
    let half = T::lit(0.5);
    let f_lo_neg = f(lo) < T::zero();
    for _ in 0..200 {
        let mid = (lo + hi) * half;
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) < T::zero()) == f_lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) * half
}

/// Nonnegative two-good bundle `(x_i, x_j)` of unit norm with zero expected
/// surprise in the interaction model.
///
/// `L1` uses the quadratic root, `LInf` searches the two edges where one
/// share equals 1, `L2` bisects along the quarter circle. `delta_ij = 0` is
/// allowed here and reduces to the interaction-free hyperplane.
pub fn no_learning_pair<T: Scalar>(delta_i: T, delta_j: T, delta_ij: T, norm: Norm) -> Result<(T, T)> {
    check_finite(&[delta_i, delta_j, delta_ij], "bias entries")?;
    if !(delta_i > T::zero() && delta_j < T::zero()) {
        return Err(LearnError::SignViolation(format!(
            "need delta_i > 0 > delta_j, got {delta_i} and {delta_j}"
        )));
    }
    let one = T::one();
    let f = |xi: T, xj: T| delta_i * xi + delta_j * xj + delta_ij * xi * xj;
    match norm {
        Norm::L1 => {
            let xi = if delta_ij == T::zero() {
                -delta_j / (delta_i - delta_j)
            } else {
                orthogonal_quadratic(delta_i, delta_j, delta_ij)?
            };
            Ok((xi, one - xi))
        }
        Norm::LInf => {
            let corner = delta_i + delta_j + delta_ij;
            if corner > T::zero() {
                Ok((-delta_j / (delta_i + delta_ij), one))
            } else if corner < T::zero() {
                Ok((one, -delta_i / (delta_j + delta_ij)))
            } else {
                Ok((one, one))
            }
        }
        Norm::L2 => {
            let half_pi = T::lit(std::f64::consts::FRAC_PI_2);
            let theta = bisect(|t: T| -f(t.cos(), t.sin()), T::zero(), half_pi);
            Ok((theta.cos(), theta.sin()))
        }
    }
}

/// Singleton and pair observation counts over `m` primitive goods.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairHistorySpec {
    pub singles: Vec<u64>,
    /// Symmetric with zero diagonal.
    pub pair_counts: Vec<Vec<u64>>,
}

impl PairHistorySpec {
    pub fn m(&self) -> usize {
        self.singles.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if self.pair_counts.len() != m || self.pair_counts.iter().any(|r| r.len() != m) {
            return Err(LearnError::DimensionMismatch {
                expected: m,
                found: self.pair_counts.len(),
            });
        }
        for i in 0..m {
            if self.pair_counts[i][i] != 0 {
                return Err(LearnError::InvalidArgument(format!(
                    "pair count diagonal entry {i} must be zero"
                )));
            }
            for j in 0..m {
                if self.pair_counts[i][j] != self.pair_counts[j][i] {
                    return Err(LearnError::InvalidArgument(format!(
                        "pair counts not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Explicit primitive dummy rows: singletons first, then pairs in
    /// lexicographic order.
    pub fn primitive_rows<T: Scalar>(&self) -> Vec<Vec<T>> {
        let m = self.m();
        let mut rows = Vec::new();
        for i in 0..m {
            for _ in 0..self.singles[i] {
                rows.push(crate::linalg::unit(m, i));
            }
        }
        for (i, j) in AugmentedIndex::new(m).pairs {
            for _ in 0..self.pair_counts[i][j] {
                let mut r = vec![T::zero(); m];
                r[i] = T::one();
                r[j] = T::one();
                rows.push(r);
            }
        }
        rows
    }
}

/// Augmented information matrix with an invertibility flag.
#[derive(Clone, Debug, PartialEq)]
pub struct PairInfo<T> {
    pub z: Matrix<T>,
    pub invertible: bool,
}

/// Closed-form augmented `Z` of a singleton-and-pair history.
pub fn singleton_pair_info<T: Scalar>(spec: &PairHistorySpec) -> Result<PairInfo<T>> {
    spec.validate()?;
    let m = spec.m();
    let idx = AugmentedIndex::new(m);
    let mut z = Matrix::zeros(idx.total, idx.total);
    let cnt = |i: usize, j: usize| T::of_usize(spec.pair_counts[i][j] as usize);
    for i in 0..m {
        let mut d = T::of_usize(spec.singles[i] as usize);
        for j in 0..m {
            if j != i {
                d = d + cnt(i, j);
                z[(i, j)] = cnt(i, j);
            }
        }
        z[(i, i)] = d;
    }
    for (k, &(i, j)) in idx.pairs.iter().enumerate() {
        let col = m + k;
        let c = cnt(i, j);
        z[(col, col)] = c;
        z[(col, i)] = c;
        z[(i, col)] = c;
        z[(col, j)] = c;
        z[(j, col)] = c;
    }
    let invertible = crate::estimator::is_full_rank(&z);
    Ok(PairInfo { z, invertible })
}

/// Augmented `Z` built by summing outer products of augmented rows.
pub fn augmented_info<T: Scalar>(primitive_rows: &[Vec<T>]) -> Result<Matrix<T>> {
    let m = primitive_rows.first().map_or(0, Vec::len);
    let total = AugmentedIndex::new(m).total;
    let mut z = Matrix::zeros(total, total);
    for r in primitive_rows {
        if r.len() != m {
            return Err(LearnError::DimensionMismatch {
                expected: m,
                found: r.len(),
            });
        }
        z.add_outer(&augment_bundle(r)?, T::one());
    }
    Ok(z)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport<T> {
    pub holds: bool,
    /// Largest `|W_{(ij),h}|` over primitives `h` outside `{i, j}`.
    pub max_violation: T,
}

/// Checks that each interaction column of `W = Z^-1` is zero on primitive
/// rows other than its own two goods.
pub fn w_sparsity_report<T: Scalar>(z: &Matrix<T>, m: usize) -> Result<SparsityReport<T>> {
    let idx = AugmentedIndex::new(m);
    if z.rows() != idx.total || !z.is_square() {
        return Err(LearnError::DimensionMismatch {
            expected: idx.total,
            found: z.rows(),
        });
    }
    if !crate::estimator::is_full_rank(z) {
        return Err(LearnError::SingularAugmentedZ);
    }
    let w = spd_inverse(z).ok_or(LearnError::SingularAugmentedZ)?;
    let mut worst = T::zero();
    for (k, &(i, j)) in idx.pairs.iter().enumerate() {
        for hgood in 0..m {
            if hgood != i && hgood != j {
                worst = worst.max(w[(m + k, hgood)].abs());
            }
        }
    }
    Ok(SparsityReport {
        holds: worst < T::tol(1e-9),
        max_violation: worst,
    })
}

pub fn verify_w_sparsity<T: Scalar>(spec: &PairHistorySpec) -> Result<SparsityReport<T>> {
    let info = singleton_pair_info::<T>(spec)?;
    if !info.invertible {
        return Err(LearnError::SingularAugmentedZ);
    }
    w_sparsity_report(&info.z, spec.m())
}

/// Equal-weight average of a class of mutually collinear columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Composite<T> {
    pub members: Vec<usize>,
    pub weights: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollinearityReduction<T> {
    pub original_columns: usize,
    /// Original columns kept unchanged.
    pub kept: Vec<usize>,
    pub composites: Vec<Composite<T>>,
    /// Original columns removed because they are zero or lie in the span of
    /// earlier columns.
    pub dropped: Vec<usize>,
    /// For each reduced column, the `(original column, weight)` combination
    /// it represents.
    pub map: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> CollinearityReduction<T> {
    pub fn reduced_columns(&self) -> usize {
        self.map.len()
    }

    /// Applies the reduction to any matrix with the original column layout.
    pub fn apply(&self, x: &Matrix<T>) -> Matrix<T> {
        Matrix::from_fn(x.rows(), self.map.len(), |r, c| {
            self.map[c]
                .iter()
                .fold(T::zero(), |acc, &(o, w)| acc + w * x[(r, o)])
        })
    }

    pub fn apply_row(&self, row: &[T]) -> Vec<T> {
        self.map
            .iter()
            .map(|terms| terms.iter().fold(T::zero(), |acc, &(o, w)| acc + w * row[o]))
            .collect()
    }
}

fn positively_parallel<T: Scalar>(a: &[T], b: &[T], tol: T) -> bool {
    let ab = dot(a, b);
    if ab <= T::zero() {
        return false;
    }
    let bb = dot(b, b);
    let c = ab / bb;
    let resid: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - c * y).collect();
    norm2(&resid) <= tol * norm2(a)
}

/// Merges classes of positively collinear columns into equal-weight
/// composites, then drops any remaining column in the span of earlier ones.
pub fn reduce_collinearity<T: Scalar>(x: &Matrix<T>) -> (Matrix<T>, CollinearityReduction<T>) {
    let tol = T::rank_tol();
    let n = x.cols();
    let cols: Vec<Vec<T>> = (0..n).map(|c| x.column(c)).collect();
    let top = cols.iter().map(|c| norm2(c)).fold(T::zero(), |m, v| m.max(v));

    let mut dropped = Vec::new();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for (c, col) in cols.iter().enumerate() {
        if top == T::zero() || norm2(col) <= tol * top {
            dropped.push(c);
            continue;
        }
        match classes
            .iter_mut()
            .find(|cl| positively_parallel(col, &cols[cl[0]], tol))
        {
            Some(cl) => cl.push(c),
            None => classes.push(vec![c]),
        }
    }
    let reps = Matrix::from_fn(x.rows(), classes.len(), |r, k| {
        let cl = &classes[k];
        let w = T::one() / T::of_usize(cl.len());
        cl.iter().fold(T::zero(), |acc, &o| acc + w * x[(r, o)])
    });
    let keep = independent_columns(&reps, tol);

    let mut kept = Vec::new();
    let mut composites = Vec::new();
    let mut map = Vec::new();
    for (k, cl) in classes.iter().enumerate() {
        if !keep.contains(&k) {
            dropped.extend_from_slice(cl);
            continue;
        }
        let w = T::one() / T::of_usize(cl.len());
        if cl.len() == 1 {
            kept.push(cl[0]);
        } else {
            composites.push(Composite {
                members: cl.clone(),
                weights: vec![w; cl.len()],
            });
        }
        map.push(cl.iter().map(|&o| (o, w)).collect());
    }
    dropped.sort_unstable();
    let reduction = CollinearityReduction {
        original_columns: n,
        kept,
        composites,
        dropped,
        map,
    };
    (reduction.apply(x), reduction)
}

/// Numerical column rank of a design matrix.
pub fn design_rank<T: Scalar>(x: &Matrix<T>) -> usize {
    independent_columns(x, T::rank_tol()).len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_layout() {
        let idx = AugmentedIndex::new(4);
        assert_eq!(idx.total, 10);
        assert_eq!(idx.pairs[0], (0, 1));
        for (k, &(i, j)) in idx.pairs.iter().enumerate() {
            assert_eq!(idx.pair_column(i, j), Some(4 + k));
            assert_eq!(idx.pair_column(j, i), Some(4 + k));
        }
        assert_eq!(idx.pair_column(2, 2), None);
    }

    #[test]
    fn augment_examples() {
        assert_eq!(augment_bundle(&[1.0, 1.0]).unwrap(), vec![1.0, 1.0, 1.0]);
        assert_eq!(
            augment_bundle(&[1.0, 0.0, 1.0]).unwrap(),
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]
        );
        assert_eq!(augment_bundle(&[0.5, 2.0]).unwrap(), vec![0.5, 2.0, 1.0]);
    }

    #[test]
    fn quadratic_root_examples() {
        let x = orthogonal_quadratic(1.0, -1.0, 1.0).unwrap();
        assert!((x - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-15);
        let near = orthogonal_quadratic(1.0f64, -1.0, 1e-12).unwrap();
        assert!((near - 0.5).abs() < 1e-11);
        assert_eq!(
            orthogonal_quadratic(1.0, -1.0, 0.0),
            Err(LearnError::DegenerateInteraction)
        );
    }

    #[test]
    fn pair_under_other_norms() {
        for norm in [Norm::L1, Norm::L2, Norm::LInf] {
            let (a, b) = no_learning_pair(0.7f64, -0.4, 0.9, norm).unwrap();
            assert!((0.7 * a - 0.4 * b + 0.9 * a * b).abs() < 1e-12, "{norm:?}");
            assert!((norm.of(&[a, b]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn singleton_pair_small_case() {
        let spec = PairHistorySpec {
            singles: vec![1, 1],
            pair_counts: vec![vec![0, 1], vec![1, 0]],
        };
        let info = singleton_pair_info::<f64>(&spec).unwrap();
        let want = Matrix::from_rows(&[[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(info.z, want);
        assert!(info.invertible);
        let empty = PairHistorySpec {
            singles: vec![0, 0],
            pair_counts: vec![vec![0, 0], vec![0, 0]],
        };
        let z = singleton_pair_info::<f64>(&empty).unwrap();
        assert_eq!(z.z, Matrix::zeros(3, 3));
        assert!(!z.invertible);
    }

    #[test]
    fn closed_form_matches_assembly() {
        let spec = PairHistorySpec {
            singles: vec![1, 1, 1],
            pair_counts: vec![vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 0]],
        };
        let info = singleton_pair_info::<f64>(&spec).unwrap();
        let brute = augmented_info(&spec.primitive_rows::<f64>()).unwrap();
        assert_eq!(info.z, brute);
        assert!(verify_w_sparsity::<f64>(&spec).unwrap().holds);
    }

    #[test]
    fn reduction_cases() {
        let x = Matrix::from_rows(&[[1.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]]).unwrap();
        let (r, red) = reduce_collinearity(&x);
        assert_eq!(r.cols(), 2);
        assert_eq!(red.composites[0].members, vec![0, 1]);
        assert_eq!(red.composites[0].weights, vec![0.5, 0.5]);
        assert_eq!(red.kept, vec![2]);

        let full = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let (r, red) = reduce_collinearity(&full);
        assert_eq!(r, full);
        assert_eq!(red.kept, vec![0, 1]);

        let dep = Matrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 2.0, 3.0], [2.0, 1.0, 3.0]])
            .unwrap();
        let (r, red) = reduce_collinearity(&dep);
        assert_eq!(red.dropped, vec![2]);
        assert_eq!(design_rank(&r), 2);

        let (r, red) = reduce_collinearity(&Matrix::<f64>::zeros(3, 2));
        assert_eq!(r.cols(), 0);
        assert_eq!(red.dropped, vec![0, 1]);
    }
}
