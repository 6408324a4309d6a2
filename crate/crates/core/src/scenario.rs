//! A validated configuration together with everything derived from it.

use crate::channel::AgingProfile;
use crate::config::SystemConfig;
use crate::correlation::{build_correlation, CorrelationMatrix};
use crate::error::Result;
use crate::estimation::{EstimationStats, StatsInputs};
use crate::geometry::{ris_element_positions, LargeScaleParams};

#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: SystemConfig,
    pub large_scale: LargeScaleParams,
    pub sigma_e_sq: f64,
    /// `None` when the surface has no elements.
    pub correlation: Option<CorrelationMatrix>,
    pub stats: Vec<EstimationStats>,
    pub aging: AgingProfile,
}

impl Scenario {
    pub fn new(config: SystemConfig) -> Result<Self> {
        config.validate()?;
        let large_scale = LargeScaleParams::from_config(&config)?;
        let sigma_e_sq = config.sigma_e_sq(large_scale.beta_br);
        let correlation = if config.m() == 0 {
            None
        } else {
            let pos = ris_element_positions(config.m_h, config.m_v, config.d_h, config.d_v)?;
            Some(build_correlation(&pos, config.lambda)?)
        };
        let trace_re = correlation.as_ref().map_or(0.0, |c| c.trace_emi());
        let stats = (0..config.k_ue)
            .map(|k| {
                EstimationStats::compute(&StatsInputs {
                    a_elem: config.a_elem,
                    beta_d: large_scale.beta_d[k],
                    beta_r: large_scale.beta_r[k],
                    beta_br: large_scale.beta_br,
                    kappa: large_scale.kappa,
                    sigma_e_sq,
                    trace_re,
                    p_tau_p: config.p_tau_p,
                    sigma_d_sq: config.sigma_d_sq,
                    sigma_c_sq: config.sigma_c_sq,
                    nlos: config.nlos_variance,
                    e3: config.sigma_e3_scaling,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let aging = AgingProfile::new(config.effective_fd_ts());
        Ok(Scenario {
            config,
            large_scale,
            sigma_e_sq,
            correlation,
            stats,
            aging,
        })
    }

    pub fn m(&self) -> usize {
        self.config.m()
    }

    /// Writes the per-UE estimator statistics as CSV.
    pub fn write_stats_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "k",
            "xi_ck",
            "q",
            "sigma_e1_sq",
            "sigma_e2_sq",
            "sigma_e3_sq",
            "var_ghat_d",
            "var_ghat_c",
            "config_hash",
        ])?;
        let hash = self.config.hash();
        for (k, s) in self.stats.iter().enumerate() {
            w.write_record([
                k.to_string(),
                format!("{:e}", s.xi_ck),
                format!("{:e}", s.q),
                format!("{:e}", s.sigma_e1_sq),
                format!("{:e}", s.sigma_e2_sq),
                format!("{:e}", s.sigma_e3_sq),
                format!("{:e}", s.var_ghat_d),
                format!("{:e}", s.var_ghat_c),
                hash.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
