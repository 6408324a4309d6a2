//! Closed-form SINR terms for MRT precoding with aged MMSE estimates.

use std::io::Write;

use crate::channel::{AgingProfile, RisPanel};
use crate::config::{I2Pairing, PhaseMode};
use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::estimation::EstimationStats;
use crate::scenario::Scenario;

/// Per-UE, per-symbol decomposition of the SINR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinrBreakdown {
    pub k: usize,
    pub n: usize,
    /// Signal power.
    pub i0: f64,
    /// Beamforming uncertainty.
    pub i1: f64,
    /// Inter-user interference.
    pub i2: f64,
    /// EMI power at the UE.
    pub i3: f64,
    /// UE noise.
    pub i4: f64,
    pub zeta_sq: f64,
    pub gamma: f64,
}

/// Per-antenna power of the precoding vector of one UE before normalization.
pub fn estimate_power(s: &EstimationStats, rho0: f64, rho1: f64, m: usize) -> f64 {
    rho0 * rho0 * s.var_ghat_d + m as f64 * rho1 * rho1 * s.var_ghat_c
}

/// Per-antenna power of the aged estimation error of one UE.
pub fn error_power(s: &EstimationStats, rho0: f64, rho1: f64, m: usize) -> f64 {
    (s.beta_d - rho0 * rho0 * s.var_ghat_d) + m as f64 * (s.xi_ck - rho1 * rho1 * s.var_ghat_c)
}

/// `P_T / sum_k N_t (rho0^2 var_ghat_d + M rho1^2 var_ghat_c)`.
pub fn zeta_sq_deterministic(
    stats: &[EstimationStats],
    profile: &AgingProfile,
    n: usize,
    n_t: usize,
    m: usize,
    p_t: f64,
) -> Result<f64> {
    if stats.is_empty() {
        return Err(Error::InvalidInput("precoder normalization needs at least one UE".into()));
    }
    let (r0, r1) = (profile.rho0(n), profile.rho1(n));
    let den: f64 = stats
        .iter()
        .map(|s| n_t as f64 * estimate_power(s, r0, r1, m))
        .sum();
    if !(den > 0.0) {
        return Err(Error::Degenerate(format!(
            "precoder trace vanishes at symbol {n}; every estimate has aged out"
        )));
    }
    Ok(p_t / den)
}

pub fn term_i0(
    s: &EstimationStats,
    profile: &AgingProfile,
    n: usize,
    n_t: usize,
    m: usize,
    zeta_sq: f64,
) -> f64 {
    let h = n_t as f64 * estimate_power(s, profile.rho0(n), profile.rho1(n), m);
    zeta_sq * h * h
}

pub fn term_i1(
    s: &EstimationStats,
    profile: &AgingProfile,
    n: usize,
    n_t: usize,
    m: usize,
    zeta_sq: f64,
) -> f64 {
    let (r0, r1) = (profile.rho0(n), profile.rho1(n));
    zeta_sq * n_t as f64 * estimate_power(s, r0, r1, m) * error_power(s, r0, r1, m)
}

#[allow(clippy::too_many_arguments)]
pub fn term_i2(
    stats: &[EstimationStats],
    profile: &AgingProfile,
    n: usize,
    n_t: usize,
    m: usize,
    zeta_sq: f64,
    k: usize,
    pairing: I2Pairing,
) -> f64 {
    let (r0, r1) = (profile.rho0(n), profile.rho1(n));
    let victim = &stats[k];
    let err = error_power(victim, r0, r1, m);
    stats
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, sj)| {
            let hat = match pairing {
                I2Pairing::Symmetric => estimate_power(sj, r0, r1, m),
                I2Pairing::Printed => {
                    // xi_k sigma_e1,j^2 / den_j, with sigma_e1,j^2 / den_j = var_ghat_c,j / xi_j
                    let ratio = if sj.xi_ck > 0.0 { sj.var_ghat_c / sj.xi_ck } else { 0.0 };
                    r0 * r0 * sj.var_ghat_d + m as f64 * r1 * r1 * victim.xi_ck * ratio
                }
            };
            zeta_sq * n_t as f64 * hat * err
        })
        .sum()
}

/// `A^2 beta_r sigma_e^2 tr(Phi^H R Phi R_e)` for the given surface state.
pub fn term_i3(
    a_elem: f64,
    beta_r_k: f64,
    sigma_e_sq: f64,
    panel: &RisPanel,
    corr: &CorrelationMatrix,
) -> f64 {
    a_elem * a_elem * beta_r_k * sigma_e_sq * corr.trace_with_phases(panel.reflection_vector())
}

/// [`term_i3`] averaged over i.i.d. uniform reflection phases.
pub fn term_i3_phase_average(a_elem: f64, beta_r_k: f64, sigma_e_sq: f64, corr: &CorrelationMatrix) -> f64 {
    a_elem * a_elem * beta_r_k * sigma_e_sq * corr.trace_phase_average()
}

pub fn term_i4(sigma_k_sq: f64) -> f64 {
    sigma_k_sq
}

/// `(1/tau_c) sum_n log2(1 + gamma_n)` over the downlink symbols.
pub fn spectral_efficiency(gammas: &[f64], tau_c: usize) -> f64 {
    gammas.iter().map(|g| (1.0 + g).log2()).sum::<f64>() / tau_c as f64
}

fn scenario_i3(sc: &Scenario, k: usize) -> f64 {
    let cfg = &sc.config;
    match &sc.correlation {
        None => 0.0,
        Some(c) => match cfg.ris_phases {
            PhaseMode::Random => {
                term_i3_phase_average(cfg.a_elem, sc.large_scale.beta_r[k], sc.sigma_e_sq, c)
            }
            PhaseMode::Zero => term_i3(
                cfg.a_elem,
                sc.large_scale.beta_r[k],
                sc.sigma_e_sq,
                &RisPanel::zero(c.m()),
                c,
            ),
        },
    }
}

/// All terms of UE `k` at symbol `n`, with `I3` averaged over the surface phases
/// when they are redrawn per block.
pub fn breakdown(sc: &Scenario, k: usize, n: usize) -> Result<SinrBreakdown> {
    let cfg = &sc.config;
    let m = sc.m();
    let zeta_sq = zeta_sq_deterministic(&sc.stats, &sc.aging, n, cfg.n_t, m, cfg.p_t)?;
    let s = &sc.stats[k];
    let i0 = term_i0(s, &sc.aging, n, cfg.n_t, m, zeta_sq);
    let i1 = term_i1(s, &sc.aging, n, cfg.n_t, m, zeta_sq);
    let i2 = term_i2(&sc.stats, &sc.aging, n, cfg.n_t, m, zeta_sq, k, cfg.i2_pairing);
    let i3 = scenario_i3(sc, k);
    let i4 = term_i4(cfg.sigma_k_sq);
    Ok(SinrBreakdown {
        k,
        n,
        i0,
        i1,
        i2,
        i3,
        i4,
        zeta_sq,
        gamma: i0 / (i1 + i2 + i3 + i4),
    })
}

/// Rows for every downlink symbol `n = 1..=tau_d` and every UE, symbol-major.
pub fn breakdown_all(sc: &Scenario) -> Result<Vec<SinrBreakdown>> {
    let mut rows = Vec::with_capacity(sc.config.tau_d() * sc.config.k_ue);
    for n in 1..=sc.config.tau_d() {
        for k in 0..sc.config.k_ue {
            rows.push(breakdown(sc, k, n)?);
        }
    }
    Ok(rows)
}

/// Per-UE spectral efficiency in bit/s/Hz.
pub fn ue_spectral_efficiency(sc: &Scenario) -> Result<Vec<f64>> {
    let k_ue = sc.config.k_ue;
    let mut gammas = vec![Vec::with_capacity(sc.config.tau_d()); k_ue];
    for row in breakdown_all(sc)? {
        gammas[row.k].push(row.gamma);
    }
    Ok(gammas
        .iter()
        .map(|g| spectral_efficiency(g, sc.config.tau_c))
        .collect())
}

pub fn sum_spectral_efficiency(sc: &Scenario) -> Result<f64> {
    Ok(ue_spectral_efficiency(sc)?.iter().sum())
}

/// `log2(1 + gamma_k[n])` averaged over UEs.
pub fn average_symbol_se(sc: &Scenario, n: usize) -> Result<f64> {
    let k_ue = sc.config.k_ue;
    let mut acc = 0.0;
    for k in 0..k_ue {
        acc += (1.0 + breakdown(sc, k, n)?.gamma).log2();
    }
    Ok(acc / k_ue as f64)
}

/// CSV with one row per `(k, n)`.
pub fn write_breakdown_csv<W: Write>(rows: &[SinrBreakdown], tau_c: usize, hash: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "k",
        "n",
        "i0",
        "i1",
        "i2",
        "i3",
        "i4",
        "zeta_sq",
        "gamma",
        "se_contribution",
        "config_hash",
    ])?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.n.to_string(),
            format!("{:e}", r.i0),
            format!("{:e}", r.i1),
            format!("{:e}", r.i2),
            format!("{:e}", r.i3),
            format!("{:e}", r.i4),
            format!("{:e}", r.zeta_sq),
            format!("{:e}", r.gamma),
            format!("{:e}", (1.0 + r.gamma).log2() / tau_c as f64),
            hash.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{NlosVariance, SigmaE3Scaling, SystemConfig};
    use crate::correlation::build_correlation;
    use crate::estimation::StatsInputs;
    use crate::geometry::ris_element_positions;

    fn stats(beta_d: f64, beta_r: f64) -> EstimationStats {
        EstimationStats::compute(&StatsInputs {
            a_elem: 0.0056,
            beta_d,
            beta_r,
            beta_br: 3.67e-6,
            kappa: 13.9,
            sigma_e_sq: 4.6e-8,
            trace_re: 16.0,
            p_tau_p: 1.26,
            sigma_d_sq: 2.5e-13,
            sigma_c_sq: 2.5e-13,
            nlos: NlosVariance::Area,
            e3: SigmaE3Scaling::Pilot,
        })
        .unwrap()
    }

    #[test]
    fn zeta_single_ue_without_surface() {
        let s = stats(3.7e-14, 1.7e-6);
        let aging = AgingProfile::new(0.0);
        let z = zeta_sq_deterministic(&[s], &aging, 5, 16, 0, 1.0).unwrap();
        assert!((z - 1.0 / (16.0 * s.var_ghat_d)).abs() / z < 1e-14);
        assert!(zeta_sq_deterministic(&[], &aging, 5, 16, 0, 1.0).is_err());
    }

    #[test]
    fn zeta_degenerate_when_aged_out() {
        let s = stats(3.7e-14, 1.7e-6);
        let dead = AgingProfile::new(2.404_825_557_695_773 / std::f64::consts::TAU);
        match zeta_sq_deterministic(&[s], &dead, 1, 16, 4, 1.0) {
            Ok(z) => assert!(z > 1e20, "expected a blow-up, got {z}"),
            Err(e) => assert!(matches!(e, Error::Degenerate(_))),
        }
    }

    #[test]
    fn i0_reductions() {
        let s = stats(3.7e-14, 1.7e-6);
        let aging = AgingProfile::new(0.001);
        let z = 1.3e12;
        let r0 = aging.rho0(7);
        let expect = z * (16.0 * r0 * r0 * s.var_ghat_d).powi(2);
        assert!((term_i0(&s, &aging, 7, 16, 0, z) - expect).abs() / expect < 1e-13);
        let dead = AgingProfile::new(2.404_825_557_695_773 / std::f64::consts::TAU);
        assert!(term_i0(&s, &dead, 1, 16, 8, z) < 1e-20 * expect);
    }

    #[test]
    fn i1_vanishes_with_perfect_static_csi() {
        let s = EstimationStats::compute(&StatsInputs {
            a_elem: 0.0056,
            beta_d: 1e-10,
            beta_r: 1e-6,
            beta_br: 1e-6,
            kappa: 5.0,
            sigma_e_sq: 0.0,
            trace_re: 0.0,
            p_tau_p: 1.0,
            sigma_d_sq: 0.0,
            sigma_c_sq: 0.0,
            nlos: NlosVariance::Area,
            e3: SigmaE3Scaling::Pilot,
        })
        .unwrap();
        let still = AgingProfile::new(0.0);
        assert_eq!(term_i1(&s, &still, 10, 16, 0, 1.0), 0.0);
    }

    #[test]
    fn i1_with_cascade_fully_aged() {
        let s = stats(3.7e-14, 1.7e-6);
        let dead = AgingProfile::new(2.404_825_557_695_773 / std::f64::consts::TAU);
        let err = error_power(&s, dead.rho0(1), dead.rho1(1), 8);
        assert!((err - (s.beta_d + 8.0 * s.xi_ck)).abs() / err < 1e-9);
    }

    #[test]
    fn i2_single_user_and_symmetry() {
        let s = stats(3.7e-14, 1.7e-6);
        let aging = AgingProfile::new(0.001);
        assert_eq!(term_i2(&[s], &aging, 3, 16, 16, 1.0, 0, I2Pairing::Printed), 0.0);
        let all = [s; 4];
        let pair = term_i2(&all[..2], &aging, 3, 16, 16, 1.0, 0, I2Pairing::Printed);
        let full = term_i2(&all, &aging, 3, 16, 16, 1.0, 0, I2Pairing::Printed);
        assert!((full - 3.0 * pair).abs() / full < 1e-13);
        let sym = term_i2(&all, &aging, 3, 16, 16, 1.0, 0, I2Pairing::Symmetric);
        assert!((full - sym).abs() / full < 1e-13);
    }

    #[test]
    fn i2_pairings_differ_for_unequal_users() {
        let a = stats(3.7e-14, 1.7e-6);
        let b = stats(3.5e-14, 0.9e-6);
        let aging = AgingProfile::new(0.001);
        let printed = term_i2(&[a, b], &aging, 3, 16, 16, 1.0, 0, I2Pairing::Printed);
        let sym = term_i2(&[a, b], &aging, 3, 16, 16, 1.0, 0, I2Pairing::Symmetric);
        assert!((printed - sym).abs() / sym > 1e-3);
    }

    #[test]
    fn i3_special_cases() {
        let one = build_correlation(&[[0.0; 3]], 0.15).unwrap();
        let panel = RisPanel::from_phases(vec![1.2]);
        let v = term_i3(0.01, 2.0, 3.0, &panel, &one);
        assert!((v - 0.01 * 0.01 * 2.0 * 3.0).abs() < 1e-18);

        let lambda = 0.15;
        let line: Vec<[f64; 3]> = (0..5).map(|i| [0.0, i as f64 * lambda / 2.0, 0.0]).collect();
        let ident = build_correlation(&line, lambda).unwrap();
        let panel = RisPanel::from_phases(vec![0.3, 1.0, 2.0, 4.0, 5.0]);
        let v = term_i3(0.01, 2.0, 3.0, &panel, &ident);
        assert!((v - 0.01 * 0.01 * 2.0 * 3.0 * 5.0).abs() < 1e-15);
    }

    #[test]
    fn i4_is_noise() {
        let w = crate::config::dbm_to_watts(-96.0);
        assert!((term_i4(w) - 2.512e-13).abs() < 1e-16);
        assert_eq!(term_i4(0.0), 0.0);
        assert_eq!(term_i4(2.0 * w), 2.0 * term_i4(w));
    }

    #[test]
    fn spectral_efficiency_values() {
        assert!((spectral_efficiency(&[1.0; 96], 100) - 0.96).abs() < 1e-14);
        assert_eq!(spectral_efficiency(&[0.0; 96], 100), 0.0);
    }

    #[test]
    fn static_channel_gives_constant_gamma() {
        let mut cfg = SystemConfig::default();
        cfg.set("fd_ts", "0").unwrap();
        cfg.set("m_h", "4").unwrap();
        cfg.set("m_v", "4").unwrap();
        let sc = Scenario::new(cfg).unwrap();
        let rows = breakdown_all(&sc).unwrap();
        let g1 = rows[0].gamma;
        assert!(rows.iter().filter(|r| r.k == 0).all(|r| r.gamma == g1));
        let se = ue_spectral_efficiency(&sc).unwrap()[0];
        assert!((se - 0.96 * (1.0 + g1).log2()).abs() < 1e-12);
    }

    #[test]
    fn gamma_is_ratio_of_terms() {
        let sc = Scenario::new(SystemConfig::default()).unwrap();
        for r in breakdown_all(&sc).unwrap() {
            let g = r.i0 / (r.i1 + r.i2 + r.i3 + r.i4);
            assert!((r.gamma - g).abs() <= 1e-12 * g);
            assert!(r.i0 >= 0.0 && r.i1 >= 0.0 && r.i2 >= 0.0 && r.i3 >= 0.0);
        }
    }

    #[test]
    fn zero_phase_trace_dominates_phase_average() {
        let lambda = 0.15;
        let p = ris_element_positions(3, 3, lambda / 2.0, lambda / 2.0).unwrap();
        let c = build_correlation(&p, lambda).unwrap();
        let avg = term_i3_phase_average(0.01, 1.0, 1.0, &c);
        assert!(avg > 0.0);
        // off-diagonal terms are not all zero on a 2-D grid
        let zero = term_i3(0.01, 1.0, 1.0, &RisPanel::zero(9), &c);
        assert!(zero >= avg);
    }
}
