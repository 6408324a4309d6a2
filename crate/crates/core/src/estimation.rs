//! Orthogonal pilots, uplink training with EMI at the surface, MMSE estimates
//! and the second-order statistics of the estimators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{AgingProfile, RisPanel};
use crate::config::{NlosVariance, SigmaE3Scaling};
use crate::correlation::CorrelationMatrix;
use crate::error::{invalid_config, invalid_input, Result};
use crate::linalg::psd_cholesky;
use crate::random::complex_normal;

/// `tau_p x K` pilot matrix with orthonormal columns.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotBook {
    pub tau_p: usize,
    pub psi: DMatrix<Complex64>,
}

impl PilotBook {
    pub fn k(&self) -> usize {
        self.psi.ncols()
    }

    pub fn pilot(&self, k: usize) -> DVector<Complex64> {
        self.psi.column(k).into_owned()
    }
}

/// First `k_ue` columns of the unitary `tau_p`-point DFT matrix.
pub fn build_pilots(tau_p: usize, k_ue: usize) -> Result<PilotBook> {
    if tau_p < k_ue || tau_p == 0 {
        return invalid_config(format!("tau_p = {tau_p} cannot carry {k_ue} orthogonal pilots"));
    }
    let scale = 1.0 / (tau_p as f64).sqrt();
    let psi = DMatrix::from_fn(tau_p, k_ue, |t, k| {
        let angle = -std::f64::consts::TAU * ((t * k) % tau_p) as f64 / tau_p as f64;
        Complex64::from_polar(scale, angle)
    });
    Ok(PilotBook { tau_p, psi })
}

/// NLoS-dependent weight `kappa/(kappa+1) + w/(kappa+1)` shared by the cascade
/// variance and the EMI power, with `w = A` or `w = 1`.
pub fn cascade_weight(kappa: f64, a_elem: f64, nlos: NlosVariance) -> f64 {
    let w = match nlos {
        NlosVariance::Area => a_elem,
        NlosVariance::Unit => 1.0,
    };
    if kappa.is_infinite() {
        1.0
    } else {
        kappa / (kappa + 1.0) + w / (kappa + 1.0)
    }
}

/// Per-entry variance of the NLoS part of `G_br`.
pub fn nlos_entry_variance(a_elem: f64, nlos: NlosVariance) -> f64 {
    match nlos {
        NlosVariance::Area => a_elem,
        NlosVariance::Unit => 1.0,
    }
}

/// Scalars that determine the estimator statistics of one UE.
#[derive(Clone, Copy, Debug)]
pub struct StatsInputs {
    pub a_elem: f64,
    pub beta_d: f64,
    pub beta_r: f64,
    pub beta_br: f64,
    pub kappa: f64,
    pub sigma_e_sq: f64,
    /// `tr(R_e)`; zero without a surface.
    pub trace_re: f64,
    pub p_tau_p: f64,
    pub sigma_d_sq: f64,
    pub sigma_c_sq: f64,
    pub nlos: NlosVariance,
    pub e3: SigmaE3Scaling,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimationStats {
    pub beta_d: f64,
    pub xi_ck: f64,
    pub q: f64,
    pub sigma_e1_sq: f64,
    pub sigma_e2_sq: f64,
    pub sigma_e3_sq: f64,
    pub var_ghat_d: f64,
    pub var_gtilde_d: f64,
    pub var_ghat_c: f64,
    pub var_gtilde_c: f64,
    /// `xi sigma_d^2 sigma_c^2 / den`, the part of `xi` in neither the estimate
    /// nor `var_gtilde_c`.
    pub var_residual_c: f64,
    /// Scalar MMSE coefficient of the direct estimator.
    pub direct_shrinkage: f64,
    /// Scalar MMSE coefficient of the cascade estimator.
    pub cascade_shrinkage: f64,
}

impl EstimationStats {
    pub fn compute(inp: &StatsInputs) -> Result<Self> {
        let p = inp.p_tau_p;
        if !(inp.beta_d > 0.0) || !(p > 0.0) {
            return invalid_config("direct path loss and pilot power must be positive");
        }
        let sd = inp.sigma_d_sq;
        let sc = inp.sigma_c_sq;
        let weight = cascade_weight(inp.kappa, inp.a_elem, inp.nlos);
        let xi = inp.a_elem * inp.beta_r * inp.beta_br * weight;
        let q = inp.a_elem * inp.sigma_e_sq * inp.trace_re * inp.beta_br * weight;

        let direct_den = sd + p * inp.beta_d;
        let var_ghat_d = p * inp.beta_d * inp.beta_d / direct_den;
        let var_gtilde_d = sd * inp.beta_d / direct_den;

        let e1 = p * xi * direct_den;
        let e2 = p * inp.beta_d * (sd + sc);
        let e3 = match inp.e3 {
            SigmaE3Scaling::Pilot => p * q * direct_den,
            SigmaE3Scaling::Literal => q * direct_den,
        };
        let den = e1 + e2 + e3 + sd * sc;
        let (var_ghat_c, var_gtilde_c, var_residual_c) = if xi == 0.0 || den == 0.0 {
            (xi, 0.0, 0.0)
        } else {
            (xi * e1 / den, xi * (e2 + e3) / den, xi * sd * sc / den)
        };
        let cascade_den = var_gtilde_d + xi + q + sc / p;
        let cascade_shrinkage = if xi == 0.0 { 0.0 } else { xi / cascade_den };
        Ok(EstimationStats {
            beta_d: inp.beta_d,
            xi_ck: xi,
            q,
            sigma_e1_sq: e1,
            sigma_e2_sq: e2,
            sigma_e3_sq: e3,
            var_ghat_d,
            var_gtilde_d,
            var_ghat_c,
            var_gtilde_c,
            var_residual_c,
            direct_shrinkage: direct_shrinkage(inp.beta_d, sd, p),
            cascade_shrinkage,
        })
    }
}

/// `(1 + sigma_d^2 / (P beta_d))^-1`.
pub fn direct_shrinkage(beta_d: f64, sigma_d_sq: f64, p_tau_p: f64) -> f64 {
    p_tau_p * beta_d / (p_tau_p * beta_d + sigma_d_sq)
}

/// `sqrt(P) G_d Psi^H + Z` with `Z` i.i.d. `CN(0, sigma_d^2)`.
pub fn receive_pilot_direct<R: Rng + ?Sized>(
    g_d: &DMatrix<Complex64>,
    pilots: &PilotBook,
    p_tau_p: f64,
    sigma_d_sq: f64,
    rng: &mut R,
) -> Result<DMatrix<Complex64>> {
    if g_d.ncols() != pilots.k() {
        return invalid_input(format!(
            "{} channels for {} pilots",
            g_d.ncols(),
            pilots.k()
        ));
    }
    let mut y = g_d * pilots.psi.adjoint() * Complex64::new(p_tau_p.sqrt(), 0.0);
    let s = sigma_d_sq.sqrt();
    for x in y.iter_mut() {
        *x += complex_normal(rng) * s;
    }
    Ok(y)
}

/// `y phi_k / sqrt(P)`.
pub fn despread(y: &DMatrix<Complex64>, pilot_k: &DVector<Complex64>, p_tau_p: f64) -> DVector<Complex64> {
    y * pilot_k / Complex64::new(p_tau_p.sqrt(), 0.0)
}

pub fn mmse_direct(
    y_tilde: &DVector<Complex64>,
    beta_d_k: f64,
    sigma_d_sq: f64,
    p_tau_p: f64,
) -> Result<DVector<Complex64>> {
    if !(beta_d_k > 0.0) || !(p_tau_p > 0.0) {
        return invalid_config("direct estimator needs positive path loss and pilot power");
    }
    Ok(y_tilde * Complex64::new(direct_shrinkage(beta_d_k, sigma_d_sq, p_tau_p), 0.0))
}

/// `G_br Phi N phi_k`: EMI collected over the pilot block, re-radiated by the surface.
pub fn emi_through_surface(
    g_br: &DMatrix<Complex64>,
    panel: &RisPanel,
    emi: &DMatrix<Complex64>,
    pilot_k: &DVector<Complex64>,
) -> Result<DVector<Complex64>> {
    if emi.nrows() != g_br.ncols() || panel.m() != g_br.ncols() || emi.ncols() != pilot_k.len() {
        return invalid_input("EMI block dimensions do not match the surface and pilots");
    }
    let mut projected = emi * pilot_k;
    for (x, v) in projected.iter_mut().zip(panel.reflection_vector()) {
        *x *= v;
    }
    Ok(g_br * projected)
}

/// Inputs of the cascade training phase.
#[derive(Clone, Copy, Debug)]
pub struct CascadeTraining<'a> {
    /// True direct channels, `N_t x K`.
    pub g_d: &'a DMatrix<Complex64>,
    /// Direct estimates from the first phase, `N_t x K`.
    pub ghat_d: &'a DMatrix<Complex64>,
    /// Cascade component to be estimated per UE, `N_t x K`.
    pub cascade: &'a DMatrix<Complex64>,
    pub g_br: &'a DMatrix<Complex64>,
    pub panel: &'a RisPanel,
    pub pilots: &'a PilotBook,
    pub p_tau_p: f64,
    pub sigma_c_sq: f64,
}

/// Despread cascade observations, one column per UE:
/// `g_d,k - ghat_d,k + g_ck + G_br Phi N phi_k + Z_c phi_k / sqrt(P)`.
///
/// `emi` is the `M x tau_p` EMI block `N`.
pub fn receive_pilot_cascade<R: Rng + ?Sized>(
    t: &CascadeTraining<'_>,
    emi: &DMatrix<Complex64>,
    rng: &mut R,
) -> Result<DMatrix<Complex64>> {
    let n_t = t.g_d.nrows();
    let k_ue = t.pilots.k();
    if t.g_d.shape() != (n_t, k_ue) || t.ghat_d.shape() != (n_t, k_ue) || t.cascade.shape() != (n_t, k_ue) {
        return invalid_input("cascade training matrices must all be N_t x K");
    }
    if emi.nrows() != t.g_br.ncols() || emi.ncols() != t.pilots.tau_p {
        return invalid_input("EMI block must be M x tau_p");
    }
    let sqrt_p = Complex64::new(t.p_tau_p.sqrt(), 0.0);
    let mut phi_n = emi.clone();
    for (i, mut row) in phi_n.row_iter_mut().enumerate() {
        row *= t.panel.reflection_vector()[i];
    }
    let mut y = ((t.g_d + t.cascade) * t.pilots.psi.adjoint() + t.g_br * phi_n) * sqrt_p;
    let s = t.sigma_c_sq.sqrt();
    for x in y.iter_mut() {
        *x += complex_normal(rng) * s;
    }
    let mut out = DMatrix::zeros(n_t, k_ue);
    for k in 0..k_ue {
        let yk = despread(&y, &t.pilots.pilot(k), t.p_tau_p) - t.ghat_d.column(k);
        out.set_column(k, &yk);
    }
    Ok(out)
}

pub fn mmse_cascade(y_tilde_c: &DVector<Complex64>, stats: &EstimationStats) -> DVector<Complex64> {
    y_tilde_c * Complex64::new(stats.cascade_shrinkage, 0.0)
}

/// Variances of the combined estimation-and-aging errors at symbol `n`.
pub fn aged_error_variances(stats: &EstimationStats, profile: &AgingProfile, n: usize) -> (f64, f64) {
    let r0 = profile.rho0(n);
    let r1 = profile.rho1(n);
    (
        stats.beta_d - r0 * r0 * stats.var_ghat_d,
        stats.xi_ck - r1 * r1 * stats.var_ghat_c,
    )
}

/// Exact sampler of the despread training EMI `G_br Phi N phi_k` for a given
/// `G_br` and `Phi`.
///
/// Conditionally on the channel the term is `CN(0, A sigma_e^2 G_br Phi R_e Phi^H G_br^H)`,
/// so one `N_t x N_t` factor replaces an `M`-dimensional draw per sample.
#[derive(Clone, Debug)]
pub struct EmiProjector {
    t: DMatrix<Complex64>,
}

impl EmiProjector {
    pub fn new(
        g_br: &DMatrix<Complex64>,
        panel: &RisPanel,
        corr: Option<&CorrelationMatrix>,
        a_elem: f64,
        sigma_e_sq: f64,
    ) -> Result<Self> {
        let n_t = g_br.nrows();
        let scale = a_elem * sigma_e_sq;
        let corr = match corr {
            Some(c) if scale > 0.0 && g_br.ncols() > 0 => c,
            _ => {
                return Ok(EmiProjector {
                    t: DMatrix::zeros(n_t, n_t),
                })
            }
        };
        if corr.m() != g_br.ncols() || panel.m() != g_br.ncols() {
            return invalid_input("EMI projector dimensions disagree");
        }
        let mut b = g_br.clone();
        for (j, mut col) in b.column_iter_mut().enumerate() {
            col *= panel.reflection_vector()[j];
        }
        let r_e = corr.emi_correlation().map(|x| Complex64::new(x, 0.0));
        let mut c = &b * r_e * b.adjoint() * Complex64::new(scale, 0.0);
        // symmetrize against rounding
        for i in 0..n_t {
            c[(i, i)].im = 0.0;
            for j in 0..i {
                let avg = (c[(i, j)] + c[(j, i)].conj()) * 0.5;
                c[(i, j)] = avg;
                c[(j, i)] = avg.conj();
            }
        }
        Ok(EmiProjector {
            t: psd_cholesky(&c, 1e-13)?,
        })
    }

    pub fn factor(&self) -> &DMatrix<Complex64> {
        &self.t
    }

    /// One draw written to `out`; `z` is scratch of length `N_t`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [Complex64], out: &mut [Complex64]) {
        let n = self.t.nrows();
        for x in z.iter_mut() {
            *x = complex_normal(rng);
        }
        let data = self.t.as_slice();
        out.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        for (j, zj) in z.iter().enumerate() {
            let col = &data[j * n..(j + 1) * n];
            for i in j..n {
                out[i] += col[i] * zj;
            }
        }
    }
}
