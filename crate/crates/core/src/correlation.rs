//! Sinc-kernel spatial correlation of the RIS elements and correlated sampling.

use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid_input, Result};
use crate::geometry::distance;
use crate::linalg::real_matvec;
use crate::random::complex_normal;

/// `sin(pi x) / (pi x)` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

#[derive(Clone, Debug)]
struct Factor {
    l: DMatrix<f64>,
    min_eigenvalue: f64,
    max_eigenvalue: f64,
}

/// `M x M` correlation matrix `R`, its clipped eigen-factor, and the EMI correlation `R_e`.
#[derive(Debug)]
pub struct CorrelationMatrix {
    entries: DMatrix<f64>,
    /// Eigenvalues below this value are set to zero before factoring.
    pub eigen_floor: f64,
    factor: OnceLock<Factor>,
    emi: Option<Box<CorrelationMatrix>>,
}

impl Clone for CorrelationMatrix {
    fn clone(&self) -> Self {
        CorrelationMatrix {
            entries: self.entries.clone(),
            eigen_floor: self.eigen_floor,
            factor: self.factor.clone(),
            emi: self.emi.clone(),
        }
    }
}

/// Builds `[R]_nm = sinc(2 |u_n - u_m| / lambda)`.
pub fn build_correlation(positions: &[[f64; 3]], lambda: f64) -> Result<CorrelationMatrix> {
    if positions.is_empty() {
        return invalid_input("correlation needs at least one element");
    }
    if !(lambda > 0.0) {
        return invalid_input(format!("wavelength must be positive, got {lambda}"));
    }
    if positions.iter().flatten().any(|c| c.is_nan()) {
        return invalid_input("element position contains NaN");
    }
    let m = positions.len();
    let entries = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            1.0
        } else {
            sinc(2.0 * distance(&positions[i], &positions[j]) / lambda)
        }
    });
    CorrelationMatrix::from_matrix(entries)
}

impl CorrelationMatrix {
    /// Wraps an arbitrary symmetric matrix.
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return invalid_input("correlation matrix must be square and nonempty");
        }
        let m = entries.nrows();
        for i in 0..m {
            for j in 0..i {
                if entries[(i, j)] != entries[(j, i)] {
                    return invalid_input(format!("matrix is not symmetric at ({i}, {j})"));
                }
            }
        }
        Ok(CorrelationMatrix {
            entries,
            eigen_floor: 0.0,
            factor: OnceLock::new(),
            emi: None,
        })
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Replaces `R_e` (defaults to `R`).
    pub fn with_emi_correlation(mut self, r_e: DMatrix<f64>) -> Result<Self> {
        if r_e.shape() != self.entries.shape() {
            return invalid_input("EMI correlation must match the RIS dimension");
        }
        self.emi = Some(Box::new(CorrelationMatrix::from_matrix(r_e)?));
        Ok(self)
    }

    pub fn emi_correlation(&self) -> &DMatrix<f64> {
        self.emi().entries()
    }

    /// Correlation used for EMI draws: `R_e` if overridden, otherwise `R` itself.
    pub fn emi(&self) -> &CorrelationMatrix {
        self.emi.as_deref().unwrap_or(self)
    }

    fn factor_data(&self) -> &Factor {
        self.factor.get_or_init(|| {
            let eig = SymmetricEigen::new(self.entries.clone());
            let min_eigenvalue = eig.eigenvalues.min();
            let max_eigenvalue = eig.eigenvalues.max();
            let roots = eig.eigenvalues.map(|v| if v > self.eigen_floor { v.sqrt() } else { 0.0 });
            let mut l = eig.eigenvectors;
            for (j, r) in roots.iter().enumerate() {
                l.column_mut(j).scale_mut(*r);
            }
            Factor {
                l,
                min_eigenvalue,
                max_eigenvalue,
            }
        })
    }

    /// `L` with `L L^T = R` after clipping negative eigenvalues.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor_data().l
    }

    /// Smallest and largest eigenvalue of `R` before clipping.
    pub fn eigen_range(&self) -> (f64, f64) {
        let f = self.factor_data();
        (f.min_eigenvalue, f.max_eigenvalue)
    }

    pub fn trace_emi(&self) -> f64 {
        self.emi_correlation().trace()
    }

    /// `tr(Phi^H R Phi R_e)` for the reflection vector `v`.
    pub fn trace_with_phases(&self, v: &[Complex64]) -> f64 {
        let r = &self.entries;
        let re = self.emi_correlation();
        let m = self.m();
        let mut acc = 0.0;
        for a in 0..m {
            for b in 0..m {
                // [Phi^H R Phi]_ab = conj(v_a) R_ab v_b, times [R_e]_ba
                acc += ((v[a].conj() * v[b]).re) * r[(a, b)] * re[(b, a)];
            }
        }
        acc
    }

    /// Mean of [`trace_with_phases`](Self::trace_with_phases) over i.i.d. uniform phases.
    pub fn trace_phase_average(&self) -> f64 {
        let re = self.emi_correlation();
        (0..self.m()).map(|i| self.entries[(i, i)] * re[(i, i)]).sum()
    }

    /// Writes `R` as CSV with a header row of column indices.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let m = self.m();
        let header: Vec<String> = (0..m).map(|j| format!("c{j}")).collect();
        writeln!(f, "row,{}", header.join(","))?;
        for i in 0..m {
            let row: Vec<String> = (0..m).map(|j| format!("{:?}", self.entries[(i, j)])).collect();
            writeln!(f, "{i},{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Draws `sqrt(scale) L w` with `w` i.i.d. unit complex normal: covariance `scale R`.
pub fn sample_correlated<R: Rng + ?Sized>(
    scale: f64,
    corr: &CorrelationMatrix,
    rng: &mut R,
) -> Result<DVector<Complex64>> {
    if !(scale >= 0.0) {
        return invalid_input(format!("scale must be nonnegative, got {scale}"));
    }
    let m = corr.m();
    let mut out = vec![Complex64::default(); m];
    let mut w = vec![Complex64::default(); m];
    sample_correlated_into(scale.sqrt(), corr.factor(), rng, &mut w, &mut out);
    Ok(DVector::from_vec(out))
}

/// Allocation-free form of [`sample_correlated`]; `w` is scratch space.
pub fn sample_correlated_into<R: Rng + ?Sized>(
    std_dev: f64,
    factor: &DMatrix<f64>,
    rng: &mut R,
    w: &mut [Complex64],
    out: &mut [Complex64],
) {
    for x in w.iter_mut() {
        *x = complex_normal(rng) * std_dev;
    }
    real_matvec(factor, w, out);
}
