//! Statistical oracles shared by the integration tests. Reference values are
//! recomputed here from first principles rather than taken from the library.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use ris_sim::channel::{evolve_direct, evolve_ris_ue, gen_bs_ris, gen_direct, gen_ris_ue, los_phase_matrix, AgingProfile, RisPanel};
use ris_sim::config::{PhaseMode, SystemConfig};
use ris_sim::correlation::{sample_correlated, CorrelationMatrix};
use ris_sim::estimation::{build_pilots, despread, emi_through_surface, mmse_direct, nlos_entry_variance, receive_pilot_direct, EmiProjector};
use ris_sim::random::{complex_normal, stream};
use ris_sim::scenario::Scenario;

/// Power series of `J0`, accurate for the small arguments used here.
pub fn j0_reference(x: f64) -> f64 {
    let q = x * x / 4.0;
    let (mut term, mut sum, mut k) = (1.0f64, 1.0, 1.0);
    while term.abs() > 1e-17 {
        term *= -q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// `sin(pi x)/(pi x)` written out independently of the library.
pub fn sinc_reference(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    }
}

/// Row-major planar grid in the y-z plane, centred on the origin.
pub fn reference_correlation(m_h: usize, m_v: usize, d_h: f64, d_v: f64, lambda: f64) -> DMatrix<f64> {
    let pos: Vec<(f64, f64)> = (0..m_v)
        .flat_map(|r| (0..m_h).map(move |c| (c as f64 * d_h, r as f64 * d_v)))
        .collect();
    let m = pos.len();
    DMatrix::from_fn(m, m, |i, j| {
        let d = ((pos[i].0 - pos[j].0).powi(2) + (pos[i].1 - pos[j].1).powi(2)).sqrt();
        sinc_reference(2.0 * d / lambda)
    })
}

/// Largest entrywise gap between the sample covariance of `draw / sqrt(scale)` and `target`.
pub fn covariance_gap<F>(samples: usize, target: &DMatrix<f64>, scale: f64, mut draw: F) -> f64
where
    F: FnMut() -> Vec<Complex64>,
{
    let m = target.nrows();
    let mut acc = DMatrix::<Complex64>::zeros(m, m);
    for _ in 0..samples {
        let x = draw();
        for j in 0..m {
            let xj = x[j].conj();
            for i in 0..m {
                acc[(i, j)] += x[i] * xj;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let c = acc[(i, j)] / (samples as f64 * scale);
            worst = worst.max((c - Complex64::new(target[(i, j)], 0.0)).norm());
        }
    }
    worst
}

/// Normalized sample covariance gap of RIS-UE channels.
pub fn ris_ue_covariance_gap(cfg: &SystemConfig, samples: usize, seed: u64) -> f64 {
    let sc = Scenario::new(cfg.clone()).unwrap();
    let corr = sc.correlation.as_ref().unwrap();
    let target = reference_correlation(cfg.m_h, cfg.m_v, cfg.d_h, cfg.d_v, cfg.lambda);
    let scale = cfg.a_elem * sc.large_scale.beta_r[0];
    let mut rng = stream(seed, 0);
    covariance_gap(samples, &target, scale, || {
        gen_ris_ue(cfg.a_elem, sc.large_scale.beta_r[0], corr, &mut rng).unwrap().as_slice().to_vec()
    })
}

/// Normalized sample covariance gap of EMI vectors `u ~ CN(0, A sigma_e^2 R)`.
pub fn emi_covariance_gap(cfg: &SystemConfig, samples: usize, seed: u64) -> f64 {
    let sc = Scenario::new(cfg.clone()).unwrap();
    let corr = sc.correlation.as_ref().unwrap();
    let target = reference_correlation(cfg.m_h, cfg.m_v, cfg.d_h, cfg.d_v, cfg.lambda);
    let scale = cfg.a_elem * sc.sigma_e_sq;
    let mut rng = stream(seed, 0);
    covariance_gap(samples, &target, scale, || {
        sample_correlated(scale, corr, &mut rng).unwrap().as_slice().to_vec()
    })
}

/// Relative gap between the per-antenna power of the despread training EMI
/// `G_br Phi N phi_k` and `Q`.
pub fn q_consistency_gap(cfg: &SystemConfig, trials: usize, seed: u64) -> f64 {
    let sc = Scenario::new(cfg.clone()).unwrap();
    let corr = sc.correlation.as_ref().unwrap();
    let ls = &sc.large_scale;
    let pilots = build_pilots(cfg.tau_p, cfg.k_ue).unwrap();
    let nlos = nlos_entry_variance(cfg.a_elem, cfg.nlos_variance);
    let mut shared = stream(seed, u64::MAX);
    let los = los_phase_matrix(cfg.n_t, cfg.m(), PhaseMode::Random, &mut shared);
    let scale = cfg.a_elem * sc.sigma_e_sq;
    let mut power = 0.0;
    for t in 0..trials {
        let mut rng = stream(seed, t as u64);
        let panel = RisPanel::random(cfg.m(), &mut rng);
        let g_br = gen_bs_ris(ls.beta_br, ls.kappa, nlos, &los, &mut rng).unwrap();
        let n = DMatrix::from_fn(cfg.m(), cfg.tau_p, |_, _| Complex64::default());
        let mut n = n;
        for c in 0..cfg.tau_p {
            let col = sample_correlated(scale, corr, &mut rng).unwrap();
            n.set_column(c, &col);
        }
        let w = emi_through_surface(&g_br, &panel, &n, &pilots.pilot(t % cfg.k_ue)).unwrap();
        power += w.norm_squared() / cfg.n_t as f64;
    }
    let q = sc.stats[0].q;
    (power / trials as f64 - q) / q
}

/// Lag-`n` correlation coefficient and power ratio of the direct channel.
pub fn direct_lag_statistics(fd_ts: f64, n: usize, trials: usize, seed: u64) -> (f64, f64) {
    let profile = AgingProfile::new(fd_ts);
    let beta = 3.5e-9;
    let n_t = 16;
    let mut cross = Complex64::default();
    let mut p0 = 0.0;
    let mut pn = 0.0;
    for t in 0..trials {
        let mut rng = stream(seed, t as u64);
        let g0 = gen_direct(n_t, beta, &mut rng);
        let gn = evolve_direct(&g0, n, &profile, beta, &mut rng);
        cross += gn.dotc(&g0);
        p0 += g0.norm_squared();
        pn += gn.norm_squared();
    }
    (cross.re / p0, pn / p0)
}

/// Lag-`n` correlation coefficient and power ratio of a RIS-UE channel.
pub fn ris_lag_statistics(cfg: &SystemConfig, n: usize, trials: usize, seed: u64) -> (f64, f64) {
    let sc = Scenario::new(cfg.clone()).unwrap();
    let corr: &CorrelationMatrix = sc.correlation.as_ref().unwrap();
    let beta_r = sc.large_scale.beta_r[0];
    let mut cross = Complex64::default();
    let mut p0 = 0.0;
    let mut pn = 0.0;
    for t in 0..trials {
        let mut rng = stream(seed, t as u64);
        let g0 = gen_ris_ue(cfg.a_elem, beta_r, corr, &mut rng).unwrap();
        let gn = evolve_ris_ue(&g0, n, &sc.aging, cfg.a_elem, beta_r, corr, cfg.innovation, &mut rng).unwrap();
        cross += gn.dotc(&g0);
        p0 += g0.norm_squared();
        pn += gn.norm_squared();
    }
    (cross.re / p0, pn / p0)
}

/// Least-squares regression coefficient of `target` on `observation`.
#[derive(Default)]
pub struct Regression {
    cross: Complex64,
    power: f64,
}

impl Regression {
    pub fn push(&mut self, target: Complex64, observation: Complex64) {
        self.cross += target * observation.conj();
        self.power += observation.norm_sqr();
    }

    pub fn coefficient(&self) -> Complex64 {
        self.cross / self.power
    }
}

/// Regression coefficients of the true channels on simulated pilot
/// observations: `(direct, cascade)` for UE `k`.
pub fn regression_shrinkage(cfg: &SystemConfig, k: usize, trials: usize, seed: u64) -> (Complex64, Complex64) {
    let sc = Scenario::new(cfg.clone()).unwrap();
    let ls = &sc.large_scale;
    let corr = sc.correlation.as_ref().unwrap();
    let pilots = build_pilots(cfg.tau_p, cfg.k_ue).unwrap();
    let nlos = nlos_entry_variance(cfg.a_elem, cfg.nlos_variance);
    let mut shared = stream(seed, u64::MAX);
    let los = los_phase_matrix(cfg.n_t, cfg.m(), PhaseMode::Random, &mut shared);
    let p = cfg.p_tau_p;
    let noise = (cfg.sigma_c_sq / p).sqrt();
    let mut direct = Regression::default();
    let mut cascade = Regression::default();
    let mut z = vec![Complex64::default(); cfg.n_t];
    let mut w = vec![Complex64::default(); cfg.n_t];
    for t in 0..trials {
        let mut rng = stream(seed, t as u64);
        let g_d = DMatrix::from_fn(cfg.n_t, cfg.k_ue, |_, j| complex_normal(&mut rng) * ls.beta_d[j].sqrt());
        let y = receive_pilot_direct(&g_d, &pilots, p, cfg.sigma_d_sq, &mut rng).unwrap();
        let yk = despread(&y, &pilots.pilot(k), p);
        for i in 0..cfg.n_t {
            direct.push(g_d[(i, k)], yk[i]);
        }
        let ghat = mmse_direct(&yk, ls.beta_d[k], cfg.sigma_d_sq, p).unwrap();
        let panel = RisPanel::random(cfg.m(), &mut rng);
        let g_br = gen_bs_ris(ls.beta_br, ls.kappa, nlos, &los, &mut rng).unwrap();
        let g_r = gen_ris_ue(cfg.a_elem, ls.beta_r[k], corr, &mut rng).unwrap();
        let proj = EmiProjector::new(&g_br, &panel, Some(corr), cfg.a_elem, sc.sigma_e_sq).unwrap();
        for m in 0..cfg.m() {
            proj.sample_into(&mut rng, &mut z, &mut w);
            for i in 0..cfg.n_t {
                let x = g_br[(i, m)] * g_r[m];
                let obs = g_d[(i, k)] - ghat[i] + x + w[i] + complex_normal(&mut rng) * noise;
                cascade.push(x, obs);
            }
        }
    }
    (direct.coefficient(), cascade.coefficient())
}

/// Mean of `|g_r^H Phi^H u|^2` over random phases, channels and EMI.
pub fn emi_power_at_ue(cfg: &SystemConfig, samples: usize, seed: u64) -> f64 {
    let sc = Scenario::new(cfg.clone()).unwrap();
    let corr = sc.correlation.as_ref().unwrap();
    let beta_r = sc.large_scale.beta_r[0];
    let scale = cfg.a_elem * sc.sigma_e_sq;
    let mut rng = stream(seed, 0);
    let mut acc = 0.0;
    for _ in 0..samples {
        let panel = RisPanel::random(cfg.m(), &mut rng);
        let g = gen_ris_ue(cfg.a_elem, beta_r, corr, &mut rng).unwrap();
        let u = sample_correlated(scale, corr, &mut rng).unwrap();
        let v = panel.reflection_vector();
        let s: Complex64 = (0..cfg.m()).map(|i| (g[i] * v[i]).conj() * u[i]).sum();
        acc += s.norm_sqr();
    }
    acc / samples as f64
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

pub fn config(pairs: &[(&str, &str)]) -> SystemConfig {
    let mut cfg = SystemConfig::default();
    for (k, v) in pairs {
        cfg.set(k, v).unwrap();
    }
    cfg
}

pub fn random_unit<R: Rng>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}
