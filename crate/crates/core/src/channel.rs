//! Channel generation, the cascade through the surface, and Jakes aging.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::config::{Innovation, PhaseMode};
use crate::correlation::{sample_correlated, CorrelationMatrix};
use crate::error::{invalid_input, Result};
use crate::random::{complex_normal, uniform_phase};

/// Zeroth-order Bessel function of the first kind.
///
/// Uses the trapezoidal rule on `(1/pi) int_0^pi cos(x sin t) dt`, which converges
/// geometrically for this periodic integrand, and the Hankel expansion for large `x`.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x > 200.0 {
        return j0_asymptotic(x);
    }
    let n = (x.ceil() as usize + 40).max(48);
    let h = std::f64::consts::PI / n as f64;
    // endpoints both contribute cos(0) = 1 with weight 1/2
    let mut acc = 1.0;
    for i in 1..n {
        acc += (x * (i as f64 * h).sin()).cos();
    }
    acc / n as f64
}

fn j0_asymptotic(x: f64) -> f64 {
    let chi = x - std::f64::consts::FRAC_PI_4;
    let mut p = 0.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut k = 0usize;
    loop {
        // term = a_k / x^k with a_k = prod_{i=1..k} (2i-1)^2 / (k! 8^k)
        if k % 2 == 0 {
            p += if (k / 2) % 2 == 0 { term } else { -term };
        } else {
            q += if (k / 2) % 2 == 0 { -term } else { term };
        }
        k += 1;
        let next = term * ((2 * k - 1) as f64).powi(2) / (k as f64 * 8.0 * x);
        if next.abs() < 1e-17 || next.abs() > term.abs() || k > 60 {
            break;
        }
        term = next;
    }
    (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// `J0(2 pi n fd_ts)`.
pub fn jakes_rho(n: usize, fd_ts: f64) -> f64 {
    if n == 0 || fd_ts == 0.0 {
        return 1.0;
    }
    bessel_j0(std::f64::consts::TAU * n as f64 * fd_ts)
}

/// Temporal correlation of the UE-side links. Both links follow the same law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgingProfile {
    pub fd_ts: f64,
}

impl AgingProfile {
    pub fn new(fd_ts: f64) -> Self {
        AgingProfile { fd_ts }
    }

    /// Direct link.
    pub fn rho0(&self, n: usize) -> f64 {
        jakes_rho(n, self.fd_ts)
    }

    /// RIS-UE link.
    pub fn rho1(&self, n: usize) -> f64 {
        jakes_rho(n, self.fd_ts)
    }

    pub fn rho_bar(rho: f64) -> f64 {
        (1.0 - rho * rho).max(0.0).sqrt()
    }
}

/// Unit-amplitude reflection coefficients of the surface.
#[derive(Clone, Debug, PartialEq)]
pub struct RisPanel {
    pub phases: Vec<f64>,
    pub amplitude: f64,
    reflection: Vec<Complex64>,
}

impl RisPanel {
    pub fn from_phases(phases: Vec<f64>) -> Self {
        let reflection = phases.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        RisPanel {
            phases,
            amplitude: 1.0,
            reflection,
        }
    }

    pub fn zero(m: usize) -> Self {
        Self::from_phases(vec![0.0; m])
    }

    pub fn random<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Self {
        Self::from_phases((0..m).map(|_| uniform_phase(rng)).collect())
    }

    pub fn with_mode<R: Rng + ?Sized>(m: usize, mode: PhaseMode, rng: &mut R) -> Self {
        match mode {
            PhaseMode::Random => Self::random(m, rng),
            PhaseMode::Zero => Self::zero(m),
        }
    }

    pub fn m(&self) -> usize {
        self.phases.len()
    }

    pub fn reflection_vector(&self) -> &[Complex64] {
        &self.reflection
    }

    pub fn reflection_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.reflection))
    }
}

/// Fixed `N_t x M` LoS phase pattern of the BS-RIS channel.
pub fn los_phase_matrix<R: Rng + ?Sized>(
    n_t: usize,
    m: usize,
    mode: PhaseMode,
    rng: &mut R,
) -> DMatrix<f64> {
    match mode {
        PhaseMode::Zero => DMatrix::zeros(n_t, m),
        PhaseMode::Random => DMatrix::from_fn(n_t, m, |_, _| uniform_phase(rng)),
    }
}

/// `sqrt(beta_br) (sqrt(kappa/(kappa+1)) Gbar + sqrt(nlos_var/(kappa+1)) Gtilde)`
/// with `Gbar = exp(j los_phases)` and unit-variance `Gtilde`.
pub fn gen_bs_ris<R: Rng + ?Sized>(
    beta_br: f64,
    kappa: f64,
    nlos_var: f64,
    los_phases: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<Complex64>> {
    if !(kappa >= 0.0) {
        return invalid_input(format!("kappa must be nonnegative, got {kappa}"));
    }
    if !(beta_br >= 0.0) || !(nlos_var >= 0.0) {
        return invalid_input("path loss and NLoS variance must be nonnegative");
    }
    let (los_w, nlos_w) = if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (kappa + 1.0)).sqrt(), (nlos_var / (kappa + 1.0)).sqrt())
    };
    let amp = beta_br.sqrt();
    // column-major fill keeps the draw order fixed
    Ok(DMatrix::from_fn(los_phases.nrows(), los_phases.ncols(), |i, j| {
        let los = Complex64::from_polar(los_w, los_phases[(i, j)]);
        (los + complex_normal(rng) * nlos_w) * amp
    }))
}

/// Rayleigh BS-UE channel with variance `beta_d` per antenna.
pub fn gen_direct<R: Rng + ?Sized>(n_t: usize, beta_d: f64, rng: &mut R) -> DVector<Complex64> {
    let s = beta_d.sqrt();
    DVector::from_fn(n_t, |_, _| complex_normal(rng) * s)
}

/// RIS-UE channel with covariance `A beta_r R`.
pub fn gen_ris_ue<R: Rng + ?Sized>(
    a_elem: f64,
    beta_r_k: f64,
    corr: &CorrelationMatrix,
    rng: &mut R,
) -> Result<DVector<Complex64>> {
    sample_correlated(a_elem * beta_r_k, corr, rng)
}

/// Cascade matrix with columns `g_br,m * g_r,km`, and its effective vector `G_ck v`.
pub fn cascade(
    g_br: &DMatrix<Complex64>,
    panel: &RisPanel,
    g_r_k: &DVector<Complex64>,
) -> Result<(DMatrix<Complex64>, DVector<Complex64>)> {
    let m = g_br.ncols();
    if panel.m() != m || g_r_k.len() != m {
        return invalid_input(format!(
            "cascade dimensions disagree: G_br has {m} columns, panel {} elements, g_r {} entries",
            panel.m(),
            g_r_k.len()
        ));
    }
    let mut g_c = g_br.clone();
    for (j, mut col) in g_c.column_iter_mut().enumerate() {
        col *= g_r_k[j];
    }
    let v = DVector::from_column_slice(panel.reflection_vector());
    let eff = &g_c * v;
    Ok((g_c, eff))
}

/// `rho0[n] g0 + rho_bar0[n] e` with `e ~ CN(0, beta_d I)`.
pub fn evolve_direct<R: Rng + ?Sized>(
    g0: &DVector<Complex64>,
    n: usize,
    profile: &AgingProfile,
    beta_d_k: f64,
    rng: &mut R,
) -> DVector<Complex64> {
    let rho = profile.rho0(n);
    if rho == 1.0 {
        return g0.clone();
    }
    let bar = AgingProfile::rho_bar(rho);
    let e = gen_direct(g0.len(), beta_d_k, rng);
    g0 * Complex64::new(rho, 0.0) + e * Complex64::new(bar, 0.0)
}

/// `rho1[n] g0 + rho_bar1[n] e` with `e ~ CN(0, A beta_r R)`, or unit i.i.d. entries
/// under [`Innovation::Iid`].
#[allow(clippy::too_many_arguments)]
pub fn evolve_ris_ue<R: Rng + ?Sized>(
    g0: &DVector<Complex64>,
    n: usize,
    profile: &AgingProfile,
    a_elem: f64,
    beta_r_k: f64,
    corr: &CorrelationMatrix,
    innovation: Innovation,
    rng: &mut R,
) -> Result<DVector<Complex64>> {
    let rho = profile.rho1(n);
    if rho == 1.0 {
        return Ok(g0.clone());
    }
    let bar = AgingProfile::rho_bar(rho);
    let e = match innovation {
        Innovation::Correlated => gen_ris_ue(a_elem, beta_r_k, corr, rng)?,
        Innovation::Iid => gen_direct(g0.len(), 1.0, rng),
    };
    Ok(g0 * Complex64::new(rho, 0.0) + e * Complex64::new(bar, 0.0))
}

/// One coherence block's channels at symbol `symbol_index`.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    /// `N_t x K` direct channels.
    pub g_d: DMatrix<Complex64>,
    /// `N_t x M` BS-RIS channel.
    pub g_br: DMatrix<Complex64>,
    /// `M x K` RIS-UE channels.
    pub g_r: DMatrix<Complex64>,
    /// Per-UE `N_t x M` cascade matrices.
    pub g_c: Vec<DMatrix<Complex64>>,
    pub panel: RisPanel,
    pub symbol_index: usize,
}

impl ChannelRealization {
    /// Effective channel `g_d,k + G_ck v` seen by UE `k`.
    pub fn effective(&self, k: usize) -> DVector<Complex64> {
        let v = DVector::from_column_slice(self.panel.reflection_vector());
        self.g_d.column(k).into_owned() + &self.g_c[k] * v
    }

    pub fn cascade_effective(&self, k: usize) -> DVector<Complex64> {
        let v = DVector::from_column_slice(self.panel.reflection_vector());
        &self.g_c[k] * v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::build_correlation;
    use crate::geometry::ris_element_positions;
    use crate::random::stream;

    fn j0_series(x: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        let q = x * x / 4.0;
        for k in 1..200 {
            term *= -q / (k as f64 * k as f64);
            sum += term;
            if term.abs() < 1e-17 {
                break;
            }
        }
        sum
    }

    #[test]
    fn j0_matches_series() {
        for i in 0..=120 {
            let x = i as f64 * 0.1;
            assert!((bessel_j0(x) - j0_series(x)).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn j0_first_zero_and_large_argument() {
        let z = 2.404_825_557_695_773;
        assert!(bessel_j0(z).abs() < 1e-13);
        for x in [150.0, 199.0, 250.0] {
            let a = bessel_j0(x);
            let b = j0_asymptotic(x);
            if x <= 200.0 {
                assert!((a - b).abs() < 1e-12, "x = {x}: {a} vs {b}");
            }
            assert!(b.abs() < 0.07);
        }
    }

    #[test]
    fn jakes_values() {
        assert_eq!(jakes_rho(0, 0.3), 1.0);
        assert_eq!(jakes_rho(57, 0.0), 1.0);
        let x = std::f64::consts::TAU * 100.0 * 0.001;
        assert!((jakes_rho(100, 0.001) - j0_series(x)).abs() < 1e-12);
        assert!((jakes_rho(100, 0.001) - 0.9037).abs() < 1e-4);
    }

    #[test]
    fn panel_is_unit_modulus() {
        let mut rng = stream(2, 0);
        let p = RisPanel::random(9, &mut rng);
        assert!(p.reflection_vector().iter().all(|v| (v.norm() - 1.0).abs() < 1e-15));
        let d = p.reflection_matrix();
        for i in 0..9 {
            assert_eq!(d[(i, i)], p.reflection_vector()[i]);
        }
    }

    #[test]
    fn pure_los_limit() {
        let mut rng = stream(4, 0);
        let phases = los_phase_matrix(4, 3, PhaseMode::Random, &mut rng);
        let g = gen_bs_ris(2.0e-3, 1e12, 1.0, &phases, &mut rng).unwrap();
        for x in g.iter() {
            assert!((x.norm() - 2.0e-3f64.sqrt()).abs() < 1e-5);
        }
        assert!(gen_bs_ris(1.0, -1.0, 1.0, &phases, &mut rng).is_err());
    }

    #[test]
    fn cascade_matches_brute_force() {
        let mut rng = stream(5, 0);
        let g_br = DMatrix::from_fn(4, 8, |_, _| complex_normal(&mut rng));
        let g_r = DVector::from_fn(8, |_, _| complex_normal(&mut rng));
        let panel = RisPanel::random(8, &mut rng);
        let (g_c, eff) = cascade(&g_br, &panel, &g_r).unwrap();
        let brute = &g_br * panel.reflection_matrix() * &g_r;
        assert!((&eff - &brute).norm() <= 1e-10 * brute.norm());
        for j in 0..8 {
            for i in 0..4 {
                assert_eq!(g_c[(i, j)], g_br[(i, j)] * g_r[j]);
            }
        }
    }

    #[test]
    fn cascade_edge_cases() {
        let g_br = DMatrix::<Complex64>::zeros(3, 0);
        let (g_c, eff) = cascade(&g_br, &RisPanel::zero(0), &DVector::zeros(0)).unwrap();
        assert_eq!(g_c.ncols(), 0);
        assert!(eff.iter().all(|x| x.norm() == 0.0));

        let mut rng = stream(6, 0);
        let g_br = DMatrix::from_fn(3, 1, |_, _| complex_normal(&mut rng));
        let g_r = DVector::from_fn(1, |_, _| complex_normal(&mut rng));
        let (_, eff) = cascade(&g_br, &RisPanel::zero(1), &g_r).unwrap();
        for i in 0..3 {
            assert_eq!(eff[i], g_br[(i, 0)] * g_r[0]);
        }
        assert!(cascade(&g_br, &RisPanel::zero(2), &g_r).is_err());
    }

    #[test]
    fn evolve_identity_cases() {
        let mut rng = stream(7, 0);
        let g0 = gen_direct(4, 1.0, &mut rng);
        let aging = AgingProfile::new(0.002);
        assert_eq!(evolve_direct(&g0, 0, &aging, 1.0, &mut rng), g0);
        let still = AgingProfile::new(0.0);
        assert_eq!(evolve_direct(&g0, 33, &still, 1.0, &mut rng), g0);

        let p = ris_element_positions(2, 2, 0.05, 0.05).unwrap();
        let c = build_correlation(&p, 0.15).unwrap();
        let r0 = gen_ris_ue(0.01, 1.0, &c, &mut rng).unwrap();
        let same = evolve_ris_ue(&r0, 0, &aging, 0.01, 1.0, &c, Innovation::Correlated, &mut rng);
        assert_eq!(same.unwrap(), r0);
        let same = evolve_ris_ue(&r0, 9, &still, 0.01, 1.0, &c, Innovation::Correlated, &mut rng);
        assert_eq!(same.unwrap(), r0);
    }

    #[test]
    fn zero_area_gives_zero_ris_channel() {
        let p = ris_element_positions(2, 2, 0.05, 0.05).unwrap();
        let c = build_correlation(&p, 0.15).unwrap();
        let mut rng = stream(8, 0);
        let g = gen_ris_ue(0.0, 1.0, &c, &mut rng).unwrap();
        assert!(g.iter().all(|x| x.norm() == 0.0));
    }
}
