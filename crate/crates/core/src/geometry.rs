//! Node geometry and large-scale fading.

use crate::config::SystemConfig;
use crate::error::{invalid_config, Error, Result};

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Element positions on the RIS plane, row by row (`m_h` elements per row).
pub fn ris_element_positions(m_h: usize, m_v: usize, d_h: f64, d_v: f64) -> Result<Vec<[f64; 3]>> {
    if m_h == 0 || m_v == 0 {
        return invalid_config(format!("RIS grid {m_h}x{m_v} has a zero dimension"));
    }
    Ok((0..m_h * m_v)
        .map(|i| [0.0, (i % m_h) as f64 * d_h, (i / m_h) as f64 * d_v])
        .collect())
}

/// BS-RIS Rician factor as a function of their distance.
pub fn rician_factor(d_br: f64) -> Result<f64> {
    if !(d_br >= 0.0) {
        return invalid_config(format!("BS-RIS distance must be nonnegative, got {d_br}"));
    }
    Ok(10f64.powf(1.3 - 0.003 * d_br))
}

/// Log-distance path loss `10^(ref_db/10) * d^(-exponent)`.
pub fn path_loss(distance: f64, exponent: f64, ref_db: f64) -> Result<f64> {
    if distance == 0.0 {
        return Err(Error::Singularity("path loss at zero distance".into()));
    }
    if !(distance > 0.0) {
        return invalid_config(format!("distance must be positive, got {distance}"));
    }
    Ok(10f64.powf(ref_db / 10.0) * distance.powf(-exponent))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LargeScaleParams {
    pub beta_d: Vec<f64>,
    pub beta_r: Vec<f64>,
    pub beta_br: f64,
    pub kappa: f64,
    pub d_br: f64,
}

impl LargeScaleParams {
    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        let d_br = distance(&cfg.bs_pos, &cfg.ris_pos);
        let kappa = match cfg.kappa_override {
            Some(k) => k,
            None => rician_factor(d_br)?,
        };
        let direct_ref = cfg.path_loss_ref_db - cfg.direct_blockage_db;
        let beta_d = cfg
            .ue_pos
            .iter()
            .map(|u| path_loss(distance(&cfg.bs_pos, u), cfg.path_loss_exponent_direct, direct_ref))
            .collect::<Result<Vec<_>>>()?;
        let beta_r = cfg
            .ue_pos
            .iter()
            .map(|u| {
                path_loss(
                    distance(&cfg.ris_pos, u),
                    cfg.path_loss_exponent_ris,
                    cfg.path_loss_ref_db,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let beta_br = path_loss(d_br, cfg.path_loss_exponent_br, cfg.path_loss_ref_db)?;
        Ok(LargeScaleParams {
            beta_d,
            beta_r,
            beta_br,
            kappa,
            d_br,
        })
    }
}
