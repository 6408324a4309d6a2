//! Scenario definition and the `key = value` text format.
//!
//! Every field of [`SystemConfig`] can be set by name from a config file or a
//! `--set key=value` override. Power keys also accept a `_dbm` suffix and the
//! dB ratio `rho_db` is accepted in place of `sigma_e_sq`.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{invalid_config, Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Per-entry variance of the NLoS part of the BS-RIS channel, and with it the
/// NLoS weight inside the cascade variance and the EMI power at the BS.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NlosVariance {
    /// NLoS entries have variance `A`; cascade weight `kappa/(kappa+1) + A/(kappa+1)`.
    Area,
    /// NLoS entries have unit variance; cascade weight `kappa/(kappa+1) + 1/(kappa+1)`.
    Unit,
}

/// Form of the third error term in the cascade estimator statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaE3Scaling {
    /// `P * Q * (sigma_d^2 + P beta_d)`, consistent with the cascade shrinkage.
    Pilot,
    /// `Q * (sigma_d^2 + P beta_d)`.
    Literal,
}

/// Which UE's cascade variance enters the cross term of the interference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum I2Pairing {
    /// The interferer's factor uses the victim's `xi`.
    Printed,
    /// The interferer's factor uses its own `xi`.
    Symmetric,
}

/// Covariance of the RIS-UE aging innovation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Innovation {
    /// `A beta_r R`, stationary with the initial state.
    Correlated,
    /// i.i.d. unit variance per element.
    Iid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseMode {
    Random,
    Zero,
}

/// EMI power, given either directly or through the ratio `P_tau_p beta_br / sigma_e^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EmiPower {
    RhoDb(f64),
    SigmaSq(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    /// BS antennas.
    pub n_t: usize,
    /// RIS columns and rows; `M = m_h * m_v`, zero means no RIS.
    pub m_h: usize,
    pub m_v: usize,
    pub k_ue: usize,
    /// Carrier frequency in Hz.
    pub f_c: f64,
    /// Wavelength in m, kept equal to `c / f_c`.
    pub lambda: f64,
    /// Element width and height in m.
    pub d_h: f64,
    pub d_v: f64,
    /// Element area `d_h * d_v`.
    pub a_elem: f64,
    pub bs_pos: [f64; 3],
    pub ris_pos: [f64; 3],
    pub ue_pos: Vec<[f64; 3]>,
    /// Uplink pilot-symbol power per UE in W.
    pub p_tau_u: f64,
    pub tau_p: usize,
    /// `tau_p * p_tau_u`.
    pub p_tau_p: f64,
    /// Total downlink power in W.
    pub p_t: f64,
    pub sigma_d_sq: f64,
    pub sigma_c_sq: f64,
    pub sigma_k_sq: f64,
    pub emi: EmiPower,
    pub tau_c: usize,
    pub tau_u: usize,
    /// Normalized Doppler; replaced by `f_c v T_s / c` when both `ue_speed` and
    /// `symbol_period` are set.
    pub fd_ts: f64,
    pub ue_speed: Option<f64>,
    pub symbol_period: Option<f64>,
    pub path_loss_exponent_direct: f64,
    pub path_loss_exponent_ris: f64,
    pub path_loss_exponent_br: f64,
    /// Path loss at 1 m in dB, all links.
    pub path_loss_ref_db: f64,
    /// Extra attenuation of the BS-UE links in dB.
    pub direct_blockage_db: f64,
    pub kappa_override: Option<f64>,
    pub nlos_variance: NlosVariance,
    pub sigma_e3_scaling: SigmaE3Scaling,
    pub i2_pairing: I2Pairing,
    pub innovation: Innovation,
    pub los_phases: PhaseMode,
    pub ris_phases: PhaseMode,
    /// Seed of the fixed LoS phase pattern.
    pub los_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let f_c = 2.0e9;
        let lambda = SPEED_OF_LIGHT / f_c;
        let noise = dbm_to_watts(-96.0);
        let p_tau_u = dbm_to_watts(25.0);
        let mut cfg = SystemConfig {
            n_t: 16,
            m_h: 8,
            m_v: 8,
            k_ue: 4,
            f_c,
            lambda,
            d_h: lambda / 2.0,
            d_v: lambda / 2.0,
            a_elem: 0.0,
            bs_pos: [-50.0, 0.0, 30.0],
            ris_pos: [0.0, 0.0, 15.0],
            ue_pos: vec![
                [50.0, 0.0, 1.7],
                [50.5, 0.0, 1.7],
                [51.0, 0.0, 1.7],
                [51.5, 0.0, 1.7],
            ],
            p_tau_u,
            tau_p: 4,
            p_tau_p: 0.0,
            p_t: 1.0,
            sigma_d_sq: noise,
            sigma_c_sq: noise,
            sigma_k_sq: noise,
            emi: EmiPower::RhoDb(20.0),
            tau_c: 100,
            tau_u: 4,
            fd_ts: 0.001,
            ue_speed: None,
            symbol_period: None,
            path_loss_exponent_direct: 2.2,
            path_loss_exponent_ris: 2.2,
            path_loss_exponent_br: 2.0,
            path_loss_ref_db: -20.0,
            direct_blockage_db: 70.0,
            kappa_override: None,
            nlos_variance: NlosVariance::Area,
            sigma_e3_scaling: SigmaE3Scaling::Pilot,
            i2_pairing: I2Pairing::Printed,
            innovation: Innovation::Correlated,
            los_phases: PhaseMode::Random,
            ris_phases: PhaseMode::Random,
            los_seed: 0x5eed_0f_1a5,
        };
        cfg.refresh();
        cfg
    }
}

/// Keys accepted by [`SystemConfig::set`].
pub const KEYS: &[&str] = &[
    "n_t",
    "m_h",
    "m_v",
    "k_ue",
    "f_c",
    "lambda",
    "d_h",
    "d_v",
    "bs_pos",
    "ris_pos",
    "ue_pos",
    "p_tau_u",
    "p_tau_u_dbm",
    "tau_p",
    "p_t",
    "p_t_dbm",
    "sigma_d_sq",
    "sigma_d_sq_dbm",
    "sigma_c_sq",
    "sigma_c_sq_dbm",
    "sigma_k_sq",
    "sigma_k_sq_dbm",
    "noise_dbm",
    "sigma_e_sq",
    "sigma_e_sq_dbm",
    "rho_db",
    "tau_c",
    "tau_u",
    "fd_ts",
    "ue_speed",
    "symbol_period",
    "path_loss_exponent_direct",
    "path_loss_exponent_ris",
    "path_loss_exponent_br",
    "path_loss_ref_db",
    "direct_blockage_db",
    "kappa_override",
    "nlos_variance",
    "sigma_e3_scaling",
    "i2_pairing",
    "innovation",
    "los_phases",
    "ris_phases",
    "los_seed",
];

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse '{value}' as a number")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse '{value}' as a count")))
}

fn parse_vec3(key: &str, value: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return invalid_config(format!("{key}: expected x,y,z but got '{value}'"));
    }
    Ok([
        parse_f64(key, parts[0])?,
        parse_f64(key, parts[1])?,
        parse_f64(key, parts[2])?,
    ])
}

fn parse_optional(key: &str, value: &str) -> Result<Option<f64>> {
    match value.trim() {
        "none" | "" => Ok(None),
        v => parse_f64(key, v).map(Some),
    }
}

fn fmt_vec3(v: &[f64; 3]) -> String {
    format!("{:?},{:?},{:?}", v[0], v[1], v[2])
}

fn fmt_optional(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x:?}"))
}

impl SystemConfig {
    pub fn m(&self) -> usize {
        self.m_h * self.m_v
    }

    pub fn tau_d(&self) -> usize {
        self.tau_c - self.tau_u
    }

    /// Normalized Doppler actually in use.
    pub fn effective_fd_ts(&self) -> f64 {
        match (self.ue_speed, self.symbol_period) {
            (Some(v), Some(ts)) => self.f_c * v / SPEED_OF_LIGHT * ts,
            _ => self.fd_ts,
        }
    }

    /// EMI power for a given BS-RIS path loss.
    pub fn sigma_e_sq(&self, beta_br: f64) -> f64 {
        match self.emi {
            EmiPower::SigmaSq(s) => s,
            EmiPower::RhoDb(r) => self.p_tau_p * beta_br / db_to_linear(r),
        }
    }

    /// `rho` in dB for a given BS-RIS path loss; infinite without EMI.
    pub fn rho_db(&self, beta_br: f64) -> f64 {
        match self.emi {
            EmiPower::RhoDb(r) => r,
            EmiPower::SigmaSq(s) => linear_to_db(self.p_tau_p * beta_br / s),
        }
    }

    fn refresh(&mut self) {
        self.lambda = SPEED_OF_LIGHT / self.f_c;
        self.a_elem = self.d_h * self.d_v;
        self.p_tau_p = self.tau_p as f64 * self.p_tau_u;
    }

    /// Sets one key from its text value and recomputes derived fields.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let value = value.trim();
        match key {
            "n_t" => self.n_t = parse_usize(key, value)?,
            "m_h" => self.m_h = parse_usize(key, value)?,
            "m_v" => self.m_v = parse_usize(key, value)?,
            "k_ue" => {
                let k = parse_usize(key, value)?;
                if k > self.ue_pos.len() {
                    return invalid_config(format!(
                        "k_ue = {k} but only {} UE positions are defined",
                        self.ue_pos.len()
                    ));
                }
                self.ue_pos.truncate(k);
                self.k_ue = k;
            }
            "f_c" => self.f_c = parse_f64(key, value)?,
            "lambda" => self.f_c = SPEED_OF_LIGHT / parse_f64(key, value)?,
            "d_h" => self.d_h = parse_f64(key, value)?,
            "d_v" => self.d_v = parse_f64(key, value)?,
            "bs_pos" => self.bs_pos = parse_vec3(key, value)?,
            "ris_pos" => self.ris_pos = parse_vec3(key, value)?,
            "ue_pos" => {
                let list = value
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_vec3(key, s))
                    .collect::<Result<Vec<_>>>()?;
                self.k_ue = list.len();
                self.ue_pos = list;
            }
            "p_tau_u" => self.p_tau_u = parse_f64(key, value)?,
            "p_tau_u_dbm" => self.p_tau_u = dbm_to_watts(parse_f64(key, value)?),
            "tau_p" => self.tau_p = parse_usize(key, value)?,
            "p_t" => self.p_t = parse_f64(key, value)?,
            "p_t_dbm" => self.p_t = dbm_to_watts(parse_f64(key, value)?),
            "sigma_d_sq" => self.sigma_d_sq = parse_f64(key, value)?,
            "sigma_d_sq_dbm" => self.sigma_d_sq = dbm_to_watts(parse_f64(key, value)?),
            "sigma_c_sq" => self.sigma_c_sq = parse_f64(key, value)?,
            "sigma_c_sq_dbm" => self.sigma_c_sq = dbm_to_watts(parse_f64(key, value)?),
            "sigma_k_sq" => self.sigma_k_sq = parse_f64(key, value)?,
            "sigma_k_sq_dbm" => self.sigma_k_sq = dbm_to_watts(parse_f64(key, value)?),
            "noise_dbm" => {
                let w = dbm_to_watts(parse_f64(key, value)?);
                self.sigma_d_sq = w;
                self.sigma_c_sq = w;
                self.sigma_k_sq = w;
            }
            "sigma_e_sq" => self.emi = EmiPower::SigmaSq(parse_f64(key, value)?),
            "sigma_e_sq_dbm" => {
                self.emi = EmiPower::SigmaSq(dbm_to_watts(parse_f64(key, value)?))
            }
            "rho_db" => self.emi = EmiPower::RhoDb(parse_f64(key, value)?),
            "tau_c" => self.tau_c = parse_usize(key, value)?,
            "tau_u" => self.tau_u = parse_usize(key, value)?,
            "fd_ts" => self.fd_ts = parse_f64(key, value)?,
            "ue_speed" => self.ue_speed = parse_optional(key, value)?,
            "symbol_period" => self.symbol_period = parse_optional(key, value)?,
            "path_loss_exponent_direct" => self.path_loss_exponent_direct = parse_f64(key, value)?,
            "path_loss_exponent_ris" => self.path_loss_exponent_ris = parse_f64(key, value)?,
            "path_loss_exponent_br" => self.path_loss_exponent_br = parse_f64(key, value)?,
            "path_loss_ref_db" => self.path_loss_ref_db = parse_f64(key, value)?,
            "direct_blockage_db" => self.direct_blockage_db = parse_f64(key, value)?,
            "kappa_override" => self.kappa_override = parse_optional(key, value)?,
            "nlos_variance" => {
                self.nlos_variance = match value {
                    "area" => NlosVariance::Area,
                    "unit" => NlosVariance::Unit,
                    _ => return invalid_config(format!("{key}: expected area|unit, got '{value}'")),
                }
            }
            "sigma_e3_scaling" => {
                self.sigma_e3_scaling = match value {
                    "pilot" => SigmaE3Scaling::Pilot,
                    "literal" => SigmaE3Scaling::Literal,
                    _ => {
                        return invalid_config(format!(
                            "{key}: expected pilot|literal, got '{value}'"
                        ))
                    }
                }
            }
            "i2_pairing" => {
                self.i2_pairing = match value {
                    "printed" => I2Pairing::Printed,
                    "symmetric" => I2Pairing::Symmetric,
                    _ => {
                        return invalid_config(format!(
                            "{key}: expected printed|symmetric, got '{value}'"
                        ))
                    }
                }
            }
            "innovation" => {
                self.innovation = match value {
                    "correlated" => Innovation::Correlated,
                    "iid" => Innovation::Iid,
                    _ => {
                        return invalid_config(format!(
                            "{key}: expected correlated|iid, got '{value}'"
                        ))
                    }
                }
            }
            "los_phases" | "ris_phases" => {
                let mode = match value {
                    "random" => PhaseMode::Random,
                    "zero" => PhaseMode::Zero,
                    _ => return invalid_config(format!("{key}: expected random|zero, got '{value}'")),
                };
                if key == "los_phases" {
                    self.los_phases = mode;
                } else {
                    self.ris_phases = mode;
                }
            }
            "los_seed" => {
                self.los_seed = value.parse::<u64>().map_err(|_| {
                    Error::InvalidConfig(format!("{key}: cannot parse '{value}' as a seed"))
                })?
            }
            "a_elem" | "p_tau_p" => {
                return invalid_config(format!("{key} is derived and cannot be set directly"))
            }
            _ => return invalid_config(format!("unknown key '{key}'")),
        }
        self.refresh();
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        match pair.split_once('=') {
            Some((k, v)) => self.set(k, v),
            None => invalid_config(format!("expected key=value, got '{pair}'")),
        }
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(k, v)
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    /// Defaults overlaid with the given text.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = SystemConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("f_c", self.f_c),
            ("p_tau_u", self.p_tau_u),
            ("p_t", self.p_t),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return invalid_config(format!("{name} must be positive and finite, got {v}"));
            }
        }
        let nonneg = [
            ("d_h", self.d_h),
            ("d_v", self.d_v),
            ("sigma_d_sq", self.sigma_d_sq),
            ("sigma_c_sq", self.sigma_c_sq),
            ("sigma_k_sq", self.sigma_k_sq),
            ("fd_ts", self.effective_fd_ts()),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid_config(format!("{name} must be nonnegative and finite, got {v}"));
            }
        }
        match self.emi {
            EmiPower::SigmaSq(s) if !(s >= 0.0 && s.is_finite()) => {
                return invalid_config(format!("sigma_e_sq must be nonnegative, got {s}"))
            }
            EmiPower::RhoDb(r) if r.is_nan() || r == f64::NEG_INFINITY => {
                return invalid_config(format!("rho_db must be a number or inf, got {r}"))
            }
            _ => {}
        }
        if self.n_t == 0 {
            return invalid_config("n_t must be at least 1");
        }
        if self.k_ue == 0 {
            return invalid_config("k_ue must be at least 1");
        }
        if self.ue_pos.len() != self.k_ue {
            return invalid_config(format!(
                "k_ue = {} but {} UE positions given",
                self.k_ue,
                self.ue_pos.len()
            ));
        }
        if self.tau_p < self.k_ue {
            return invalid_config(format!(
                "tau_p = {} is shorter than k_ue = {}; orthogonal pilots do not exist",
                self.tau_p, self.k_ue
            ));
        }
        if self.tau_u < self.tau_p {
            return invalid_config(format!(
                "tau_u = {} is shorter than tau_p = {}",
                self.tau_u, self.tau_p
            ));
        }
        if self.tau_c <= self.tau_u {
            return invalid_config(format!(
                "tau_c = {} must exceed tau_u = {}",
                self.tau_c, self.tau_u
            ));
        }
        if let Some(k) = self.kappa_override {
            if !(k >= 0.0) {
                return invalid_config(format!("kappa_override must be nonnegative, got {k}"));
            }
        }
        let all_pos = [self.bs_pos, self.ris_pos]
            .into_iter()
            .chain(self.ue_pos.iter().copied());
        for p in all_pos {
            if p.iter().any(|c| !c.is_finite()) {
                return invalid_config("node positions must be finite");
            }
        }
        Ok(())
    }

    /// Canonical text form: every key in a fixed order, floats in round-trip notation.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("n_t", self.n_t.to_string());
        kv("m_h", self.m_h.to_string());
        kv("m_v", self.m_v.to_string());
        kv("f_c", format!("{:?}", self.f_c));
        kv("d_h", format!("{:?}", self.d_h));
        kv("d_v", format!("{:?}", self.d_v));
        kv("bs_pos", fmt_vec3(&self.bs_pos));
        kv("ris_pos", fmt_vec3(&self.ris_pos));
        kv(
            "ue_pos",
            self.ue_pos.iter().map(fmt_vec3).collect::<Vec<_>>().join("; "),
        );
        kv("k_ue", self.k_ue.to_string());
        kv("p_tau_u", format!("{:?}", self.p_tau_u));
        kv("tau_p", self.tau_p.to_string());
        kv("p_t", format!("{:?}", self.p_t));
        kv("sigma_d_sq", format!("{:?}", self.sigma_d_sq));
        kv("sigma_c_sq", format!("{:?}", self.sigma_c_sq));
        kv("sigma_k_sq", format!("{:?}", self.sigma_k_sq));
        match self.emi {
            EmiPower::RhoDb(r) => kv("rho_db", format!("{r:?}")),
            EmiPower::SigmaSq(e) => kv("sigma_e_sq", format!("{e:?}")),
        }
        kv("tau_c", self.tau_c.to_string());
        kv("tau_u", self.tau_u.to_string());
        kv("fd_ts", format!("{:?}", self.fd_ts));
        kv("ue_speed", fmt_optional(self.ue_speed));
        kv("symbol_period", fmt_optional(self.symbol_period));
        kv(
            "path_loss_exponent_direct",
            format!("{:?}", self.path_loss_exponent_direct),
        );
        kv(
            "path_loss_exponent_ris",
            format!("{:?}", self.path_loss_exponent_ris),
        );
        kv(
            "path_loss_exponent_br",
            format!("{:?}", self.path_loss_exponent_br),
        );
        kv("path_loss_ref_db", format!("{:?}", self.path_loss_ref_db));
        kv("direct_blockage_db", format!("{:?}", self.direct_blockage_db));
        kv("kappa_override", fmt_optional(self.kappa_override));
        kv(
            "nlos_variance",
            match self.nlos_variance {
                NlosVariance::Area => "area",
                NlosVariance::Unit => "unit",
            }
            .into(),
        );
        kv(
            "sigma_e3_scaling",
            match self.sigma_e3_scaling {
                SigmaE3Scaling::Pilot => "pilot",
                SigmaE3Scaling::Literal => "literal",
            }
            .into(),
        );
        kv(
            "i2_pairing",
            match self.i2_pairing {
                I2Pairing::Printed => "printed",
                I2Pairing::Symmetric => "symmetric",
            }
            .into(),
        );
        kv(
            "innovation",
            match self.innovation {
                Innovation::Correlated => "correlated",
                Innovation::Iid => "iid",
            }
            .into(),
        );
        let mode = |m: PhaseMode| match m {
            PhaseMode::Random => "random".to_string(),
            PhaseMode::Zero => "zero".to_string(),
        };
        kv("los_phases", mode(self.los_phases));
        kv("ris_phases", mode(self.ris_phases));
        kv("los_seed", self.los_seed.to_string());
        s
    }

    /// Short hex digest of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
