//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Relative tolerance for numerical rank.
pub const RANK_TOL: f64 = 1e-10;

/// Thin SVD `m = u diag(s) v^T` with singular values in decreasing order.
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// One-sided Jacobi SVD. nalgebra's bidiagonal SVD returns wrong factors on some
/// rank-deficient inputs, which matter here for subspace bases and numerical rank.
pub fn svd(m: &DMatrix<f64>) -> Svd {
    if m.nrows() < m.ncols() {
        let t = svd(&m.transpose());
        return Svd { u: t.v, singular_values: t.singular_values, v: t.u };
    }
    let (rows, n) = m.shape();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for r in 0..mat.nrows() {
                        let (x, y) = (mat[(r, p)], mat[(r, q)]);
                        mat[(r, p)] = c * x - s * y;
                        mat[(r, q)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let mut u = DMatrix::zeros(rows, n);
    let mut vs = DMatrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        if norms[j] > 0.0 {
            u.set_column(k, &(a.column(j) / norms[j]));
        }
        vs.set_column(k, &v.column(j));
    }
    Svd { u, singular_values: DVector::from_iterator(n, order.iter().map(|&j| norms[j])), v: vs }
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(0);
    }
    svd(m).singular_values
}

/// Numerical rank with tolerance relative to the largest singular value.
pub fn rank(m: &DMatrix<f64>) -> usize {
    let s = singular_values(m);
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > RANK_TOL * smax).count()
}

/// Orthonormal basis (as columns) of the column space of `m`.
pub fn orth(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if m.ncols() == 0 || n == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = svd(m);
    let u = &svd.u;
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let mut idx: Vec<usize> = (0..s.len()).filter(|&i| smax > 0.0 && s[i] > RANK_TOL * smax).collect();
    idx.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(a.cmp(&b)));
    let mut q = DMatrix::zeros(n, idx.len());
    for (j, &i) in idx.iter().enumerate() {
        q.set_column(j, &u.column(i));
    }
    q
}

/// Orthonormal basis of the kernel of `m` (a subspace of the source space).
pub fn kernel(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.ncols();
    let row = orth(&m.transpose());
    let proj = DMatrix::identity(d, d) - &row * row.transpose();
    if row.ncols() == d {
        return DMatrix::zeros(d, 0);
    }
    let comp = orth(&proj);
    comp.columns(0, comp.ncols().min(d - row.ncols())).into_owned()
}

/// Orthonormal basis of the intersection of two subspaces given by orthonormal bases.
pub fn intersect(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    // x in both iff (I - P_a) x = 0 and (I - P_b) x = 0
    let pa = DMatrix::identity(d, d) - a * a.transpose();
    let pb = DMatrix::identity(d, d) - b * b.transpose();
    let mut stacked = DMatrix::zeros(2 * d, d);
    stacked.rows_mut(0, d).copy_from(&pa);
    stacked.rows_mut(d, d).copy_from(&pb);
    kernel(&stacked)
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Reciprocal 2-norm condition number of a symmetric matrix.
pub fn rcond_sym(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &e in eig.eigenvalues.iter() {
        lo = lo.min(e.abs());
        hi = hi.max(e.abs());
    }
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Haar-distributed orthogonal matrix (QR of a gaussian matrix with sign fix).
pub fn haar_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, n, n);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col *= -1.0;
        }
    }
    q
}

/// Orthonormal d x k frame spanning a Haar-random k-dimensional subspace.
pub fn haar_frame<R: Rng + ?Sized>(rng: &mut R, d: usize, k: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, d, k);
    let q = g.qr().q();
    q.columns(0, k).into_owned()
}

/// Orthonormal basis of the orthogonal complement of the span of `frame`.
pub fn complement(frame: &DMatrix<f64>) -> DMatrix<f64> {
    let d = frame.nrows();
    let proj = DMatrix::identity(d, d) - frame * frame.transpose();
    let c = orth(&proj);
    c.columns(0, d - frame.ncols()).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jacobi_svd_reconstructs_and_matches_gram_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let f = haar_frame(&mut rng, 3, 2);
        let proj = DMatrix::identity(3, 3) - &f * f.transpose();
        let low_rank = gaussian_matrix(&mut rng, 5, 2) * gaussian_matrix(&mut rng, 2, 4);
        for m in [proj, low_rank, gaussian_matrix(&mut rng, 4, 6), gaussian_matrix(&mut rng, 6, 3)] {
            let s = svd(&m);
            let back = &s.u * DMatrix::from_diagonal(&s.singular_values) * s.v.transpose();
            assert!((back - &m).amax() < 1e-12);
            let mut eig: Vec<f64> =
                (m.transpose() * &m).symmetric_eigen().eigenvalues.iter().map(|e| e.max(0.0).sqrt()).collect();
            eig.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in s.singular_values.iter().zip(&eig) {
                assert!((a - b).abs() < 1e-7, "{a} {b}");
            }
        }
        let g = complement(&f);
        assert!((f.transpose() * &g).amax() < 1e-14);
    }

    #[test]
    fn rank_of_projection() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(rank(&m), 2);
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(rank(&z), 1);
    }

    #[test]
    fn kernel_of_coordinate_projection() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let k = kernel(&m);
        assert_eq!(k.ncols(), 1);
        assert_relative_eq!(k[(2, 0)].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn intersection_of_planes() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let c = intersect(&a, &b);
        assert_eq!(c.ncols(), 1);
        assert_relative_eq!(c[(1, 0)].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn haar_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = haar_orthogonal(&mut rng, 4);
        let e = &q.transpose() * &q - DMatrix::identity(4, 4);
        assert!(frobenius(&e) < 1e-12);
        let f = haar_frame(&mut rng, 3, 2);
        let c = complement(&f);
        assert_eq!(c.ncols(), 1);
        assert!((f.transpose() * &c).amax() < 1e-12);
    }
}
