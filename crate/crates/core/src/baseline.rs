//! Direct-link-only MISO downlink, written without the channel, estimation or
//! analytics modules. It serves as the reference when the surface is removed.

use crate::config::SystemConfig;

fn j0_series(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term: f64 = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term.abs() > 1e-18 {
        term *= -q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// SINR per UE and downlink symbol, and the resulting SE.
#[derive(Clone, Debug, PartialEq)]
pub struct MisoBaseline {
    /// `gamma[k][n - 1]` for `n = 1..=tau_d`.
    pub gamma: Vec<Vec<f64>>,
    pub se: Vec<f64>,
}

/// Evaluates MRT with aged MMSE estimates of Rayleigh BS-UE channels.
///
/// The Bessel series is accurate to about 1e-13 for `2 pi n fd_ts` below 10.
pub fn miso_baseline(cfg: &SystemConfig) -> MisoBaseline {
    let p = cfg.tau_p as f64 * cfg.p_tau_u;
    let nt = cfg.n_t as f64;
    let loss_db = cfg.path_loss_ref_db - cfg.direct_blockage_db;
    let beta: Vec<f64> = cfg
        .ue_pos
        .iter()
        .map(|u| {
            let d2: f64 = (0..3).map(|i| (cfg.bs_pos[i] - u[i]).powi(2)).sum();
            10f64.powf(loss_db / 10.0) * d2.sqrt().powf(-cfg.path_loss_exponent_direct)
        })
        .collect();
    // variance of the MMSE estimate of each direct channel entry
    let est: Vec<f64> = beta
        .iter()
        .map(|b| p * b * b / (p * b + cfg.sigma_d_sq))
        .collect();
    let k_ue = beta.len();
    let tau_d = cfg.tau_c - cfg.tau_u;
    let fd = match (cfg.ue_speed, cfg.symbol_period) {
        (Some(v), Some(ts)) => cfg.f_c * v / crate::config::SPEED_OF_LIGHT * ts,
        _ => cfg.fd_ts,
    };
    let mut gamma = vec![Vec::with_capacity(tau_d); k_ue];
    for n in 1..=tau_d {
        let rho = j0_series(2.0 * std::f64::consts::PI * n as f64 * fd);
        let r2 = rho * rho;
        let power: f64 = est.iter().map(|e| nt * r2 * e).sum();
        let zeta = cfg.p_t / power;
        for k in 0..k_ue {
            let err = beta[k] - r2 * est[k];
            let signal = zeta * (nt * r2 * est[k]).powi(2);
            let own = zeta * nt * r2 * est[k] * err;
            let others: f64 = (0..k_ue)
                .filter(|&j| j != k)
                .map(|j| zeta * nt * r2 * est[j] * err)
                .sum();
            gamma[k].push(signal / (own + others + cfg.sigma_k_sq));
        }
    }
    let se = gamma
        .iter()
        .map(|g| g.iter().map(|x| (1.0 + x).log2()).sum::<f64>() / cfg.tau_c as f64)
        .collect();
    MisoBaseline { gamma, se }
}
