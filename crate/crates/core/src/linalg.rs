//! Small dense helpers used in hot loops and for deterministic reductions.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid_input, Result};

/// `out = L w` for a real square `L` (column-major) and complex `w`.
pub fn real_matvec(l: &DMatrix<f64>, w: &[Complex64], out: &mut [Complex64]) {
    let n = l.nrows();
    debug_assert_eq!(l.ncols(), w.len());
    debug_assert_eq!(out.len(), n);
    out.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
    let data = l.as_slice();
    for (j, wj) in w.iter().enumerate() {
        let col = &data[j * n..(j + 1) * n];
        for (o, &c) in out.iter_mut().zip(col) {
            o.re += c * wj.re;
            o.im += c * wj.im;
        }
    }
}

/// `out = A x` for complex column-major `A`.
pub fn complex_matvec(a: &DMatrix<Complex64>, x: &[Complex64], out: &mut [Complex64]) {
    let n = a.nrows();
    debug_assert_eq!(a.ncols(), x.len());
    debug_assert_eq!(out.len(), n);
    out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
    let data = a.as_slice();
    for (j, xj) in x.iter().enumerate() {
        let col = &data[j * n..(j + 1) * n];
        for (o, c) in out.iter_mut().zip(col) {
            *o += c * xj;
        }
    }
}

/// `sum_i conj(a_i) b_i`.
pub fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Lower-triangular `T` with `T T^H = C` for a Hermitian positive semidefinite `C`.
///
/// Pivots at or below `tol * max_diag` are treated as zero and their column is
/// dropped, so rank-deficient inputs factor without failing.
pub fn psd_cholesky(c: &DMatrix<Complex64>, tol: f64) -> Result<DMatrix<Complex64>> {
    let n = c.nrows();
    if c.ncols() != n {
        return invalid_input("psd_cholesky needs a square matrix");
    }
    let max_diag = (0..n).map(|i| c[(i, i)].re).fold(0.0, f64::max);
    let floor = tol * max_diag;
    let mut t = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        let mut d = c[(j, j)].re;
        for p in 0..j {
            d -= t[(j, p)].norm_sqr();
        }
        if d <= floor {
            continue;
        }
        let djj = d.sqrt();
        t[(j, j)] = Complex64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = c[(i, j)];
            for p in 0..j {
                s -= t[(i, p)] * t[(j, p)].conj();
            }
            t[(i, j)] = s / djj;
        }
    }
    Ok(t)
}

/// Order-independent pairwise sum.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if x.len() <= BLOCK {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

pub fn pairwise_sum_complex(x: &[Complex64]) -> Complex64 {
    const BLOCK: usize = 32;
    if x.len() <= BLOCK {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum_complex(&x[..mid]) + pairwise_sum_complex(&x[mid..])
}

pub fn to_dvector(x: &[Complex64]) -> DVector<Complex64> {
    DVector::from_column_slice(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{complex_normal, stream};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<Complex64> {
        let mut rng = stream(seed, 0);
        DMatrix::from_fn(rows, cols, |_, _| complex_normal(&mut rng))
    }

    #[test]
    fn matvecs_match_nalgebra() {
        let a = random_matrix(5, 7, 1);
        let x = random_matrix(7, 1, 2);
        let mut out = vec![Complex64::default(); 5];
        complex_matvec(&a, x.as_slice(), &mut out);
        let reference = &a * &x;
        for i in 0..5 {
            assert!((out[i] - reference[i]).norm() < 1e-12);
        }
        let l = DMatrix::from_fn(5, 7, |i, j| (i as f64) - 0.5 * (j as f64));
        real_matvec(&l, x.as_slice(), &mut out);
        let lc = l.map(|v| Complex64::new(v, 0.0));
        let reference = lc * &x;
        for i in 0..5 {
            assert!((out[i] - reference[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn cholesky_full_rank() {
        let b = random_matrix(6, 9, 3);
        let c = &b * b.adjoint();
        let t = psd_cholesky(&c, 1e-12).unwrap();
        let back = &t * t.adjoint();
        assert!((back - &c).camax() < 1e-10 * c.camax());
    }

    #[test]
    fn cholesky_rank_deficient() {
        let b = random_matrix(6, 2, 4);
        let c = &b * b.adjoint();
        let t = psd_cholesky(&c, 1e-10).unwrap();
        let back = &t * t.adjoint();
        assert!((back - &c).camax() < 1e-8 * c.camax());
    }

    #[test]
    fn pairwise_matches_naive() {
        let x: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = x.iter().sum();
        assert!((pairwise_sum(&x) - naive).abs() < 1e-10);
    }
}
