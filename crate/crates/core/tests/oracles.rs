//! Cross-checks against nalgebra's dense decompositions.

use bundlelearn::estimator::{batch_ols, recursive_update, History};
use bundlelearn::interactions::reduce_collinearity;
use bundlelearn::linalg::{max_abs_diff, spd_inverse, Matrix};
use bundlelearn::spectral::decompose;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn to_na(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn random_design(rng: &mut ChaCha20Rng, t: usize, n: usize) -> Matrix<f64> {
    Matrix::from_fn(t, n, |_, _| rng.gen_range(-1.0..1.0))
}

#[test]
fn eigenvalues_match() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for _ in 0..50 {
        let n = rng.gen_range(2..=8);
        let z = random_design(&mut rng, n + 4, n).gram();
        let ours = decompose(&z).unwrap();
        let mut theirs: Vec<f64> = nalgebra::SymmetricEigen::new(to_na(&z)).eigenvalues.iter().copied().collect();
        theirs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (a, b) in ours.eigenvalues.iter().zip(&theirs) {
            assert!((a - b).abs() < 1e-10 * theirs[0], "{a} vs {b}");
        }
        // the popularity direction is a unit eigenvector for the top eigenvalue
        let zv = z.mul_vec(&ours.v_n);
        let lv: Vec<f64> = ours.v_n.iter().map(|v| v * ours.lambda_max()).collect();
        assert!(max_abs_diff(&zv, &lv) < 1e-9 * ours.lambda_max());
    }
}

#[test]
fn inverse_and_least_squares_match() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    for _ in 0..50 {
        let n = rng.gen_range(1..=8);
        let t = n + rng.gen_range(0..10);
        let x = random_design(&mut rng, t, n);
        let u: Vec<f64> = (0..t).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let z = x.gram();
        let ours = spd_inverse(&z).unwrap();
        let theirs = to_na(&z).try_inverse().unwrap();
        let scale = theirs.amax();
        assert!(max_abs_diff(ours.as_slice(), theirs.transpose().as_slice()) < 1e-9 * scale);

        let state = batch_ols(&History::from_parts(x.to_rows(), u.clone(), 0.0).unwrap()).unwrap();
        let sol = to_na(&x).svd(true, true).solve(&DVector::from_vec(u), 1e-12).unwrap();
        assert!(max_abs_diff(state.estimate(), sol.as_slice()) < 1e-8 * (1.0 + sol.amax()));
    }
}

#[test]
fn recursive_path_matches_dense_solves() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let n = 5;
    let x = random_design(&mut rng, 40, n);
    let u: Vec<f64> = (0..40).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let head = History::from_parts(x.to_rows()[..n].to_vec(), u[..n].to_vec(), 0.0).unwrap();
    let mut s = batch_ols(&head).unwrap();
    for t in n..40 {
        s = recursive_update(&s, x.row(t), u[t]).unwrap().new_state;
        let xs = to_na(&x).rows(0, t + 1).into_owned();
        let sol = xs.clone().svd(true, true).solve(&DVector::from_row_slice(&u[..=t]), 1e-12).unwrap();
        assert!(max_abs_diff(s.estimate(), sol.as_slice()) < 1e-9);
    }
}

/// Fitted values after reduction equal the orthogonal projection of the
/// utilities onto the column space of the unreduced design.
#[test]
fn reduction_preserves_fit() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    for _ in 0..40 {
        let t = rng.gen_range(6..20);
        let base = rng.gen_range(2..5);
        let x0 = Matrix::from_fn(t, base, |_, _| if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
        // append copies, sums and zero columns
        let extra = rng.gen_range(1..4);
        let mut cols: Vec<Vec<f64>> = (0..base).map(|c| x0.column(c)).collect();
        for _ in 0..extra {
            match rng.gen_range(0..3) {
                0 => cols.push(cols[rng.gen_range(0..base)].clone()),
                1 => {
                    let (a, b) = (rng.gen_range(0..base), rng.gen_range(0..base));
                    cols.push(cols[a].iter().zip(&cols[b]).map(|(p, q)| p + q).collect());
                }
                _ => cols.push(vec![0.0; t]),
            }
        }
        let x = Matrix::from_fn(t, cols.len(), |r, c| cols[c][r]);
        let u: Vec<f64> = (0..t).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let (xr, red) = reduce_collinearity(&x);
        assert_eq!(xr, red.apply(&x));
        let full_rank = to_na(&x).rank(1e-9);
        assert_eq!(xr.cols(), full_rank);
        if xr.cols() == 0 {
            continue;
        }
        let state = batch_ols(&History::from_parts(xr.to_rows(), u.clone(), 0.0).unwrap()).unwrap();
        let fitted = xr.mul_vec(state.estimate());
        let xn = to_na(&x);
        let pinv = xn.clone().pseudo_inverse(1e-9).unwrap();
        let proj = &xn * (&pinv * DVector::from_vec(u));
        assert!(max_abs_diff(&fitted, proj.as_slice()) < 1e-8);
    }
}

#[test]
fn single_precision_tracks_double() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let x = random_design(&mut rng, 12, 4);
    let u: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let d = batch_ols(&History::from_parts(x.to_rows(), u.clone(), 0.0).unwrap()).unwrap();
    let xf: Matrix<f32> = x.cast();
    let uf: Vec<f32> = u.iter().map(|&v| v as f32).collect();
    let f = batch_ols(&History::from_parts(xf.to_rows(), uf, 0.0).unwrap()).unwrap();
    for (a, b) in d.estimate().iter().zip(f.estimate()) {
        assert!((a - f64::from(*b)).abs() < 1e-3 * (1.0 + a.abs()));
    }
    let sd = decompose(d.info()).unwrap();
    let sf = decompose(f.info()).unwrap();
    assert!((sd.kappa - f64::from(sf.kappa)).abs() < 1e-3 * sd.kappa);
}
