//! Parameter sweeps and the figure-level trend checks.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::analytics;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::montecarlo::{self, McSettings};
use crate::scenario::Scenario;

/// Relative tolerance used when reporting measured gaps next to reference values.
pub const ANCHOR_TOLERANCE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    M,
    KappaOverride,
    FdTs,
    RhoDb,
    TauC,
    AElemScale,
    SymbolIndex,
}

impl Axis {
    pub const ALL: [Axis; 7] = [
        Axis::M,
        Axis::KappaOverride,
        Axis::FdTs,
        Axis::RhoDb,
        Axis::TauC,
        Axis::AElemScale,
        Axis::SymbolIndex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::M => "m",
            Axis::KappaOverride => "kappa_override",
            Axis::FdTs => "fd_ts",
            Axis::RhoDb => "rho_db",
            Axis::TauC => "tau_c",
            Axis::AElemScale => "a_elem_scale",
            Axis::SymbolIndex => "symbol_index",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::InvalidSpec(format!("unknown sweep axis `{s}`")))
    }

    /// Applies one axis value to a configuration. `SymbolIndex` leaves it unchanged.
    pub fn apply(self, cfg: &mut SystemConfig, value: f64) -> Result<()> {
        let integer = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidSpec(format!("{} needs a nonnegative integer, got {v}", self.name())))
            }
        };
        match self {
            Axis::M => {
                let m = integer(value)?;
                let side = (m as f64).sqrt().round() as usize;
                let (h, v) = if side * side == m { (side, side) } else { (m, 1) };
                cfg.set("m_h", &h.to_string())?;
                cfg.set("m_v", &v.to_string())?;
            }
            Axis::KappaOverride => cfg.set("kappa_override", &format!("{value:?}"))?,
            Axis::FdTs => cfg.set("fd_ts", &format!("{value:?}"))?,
            Axis::RhoDb => cfg.set("rho_db", &format!("{value:?}"))?,
            Axis::TauC => cfg.set("tau_c", &integer(value)?.to_string())?,
            Axis::AElemScale => {
                if !(value > 0.0) {
                    return Err(Error::InvalidSpec(format!("area scale must be positive, got {value}")));
                }
                let s = value.sqrt();
                let (dh, dv) = (cfg.d_h * s, cfg.d_v * s);
                cfg.set("d_h", &format!("{dh:?}"))?;
                cfg.set("d_v", &format!("{dv:?}"))?;
            }
            Axis::SymbolIndex => {
                integer(value)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Analytic,
    MonteCarlo,
    Both,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "analytic" => Ok(Mode::Analytic),
            "montecarlo" | "mc" => Ok(Mode::MonteCarlo),
            "both" => Ok(Mode::Both),
            other => Err(Error::InvalidSpec(format!("unknown mode `{other}`"))),
        }
    }

    fn analytic(self) -> bool {
        matches!(self, Mode::Analytic | Mode::Both)
    }

    fn montecarlo(self) -> bool {
        matches!(self, Mode::MonteCarlo | Mode::Both)
    }
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub scenario: SystemConfig,
    pub mode: Mode,
    pub output_path: Option<PathBuf>,
    /// Trials per point in Monte-Carlo mode.
    pub trials: usize,
    pub seed: u64,
    /// Label carried into every row.
    pub series: String,
}

impl SweepSpec {
    pub fn new(axis: Axis, values: Vec<f64>, scenario: SystemConfig) -> Self {
        SweepSpec {
            axis,
            values,
            scenario,
            mode: Mode::Analytic,
            output_path: None,
            trials: 200,
            seed: 1,
            series: "base".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidSpec("sweep needs at least one value".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(format!("sweep value {v} is not finite")));
        }
        if self.mode.montecarlo() && self.trials < 2 {
            return Err(Error::InvalidSpec("Monte-Carlo sweeps need at least two trials".into()));
        }
        Ok(())
    }

    /// Parses a `key = value` spec file. Reserved keys are `axis`, `values`,
    /// `mode`, `output`, `trials`, `seed`, `series` and `config` (a base config
    /// path); every other key overrides the scenario.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut fields = BTreeMap::new();
        let mut overrides = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidSpec(format!("line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            match k.as_str() {
                "axis" | "values" | "mode" | "output" | "trials" | "seed" | "series" | "config" => {
                    fields.insert(k, v);
                }
                _ => overrides.push((k, v)),
            }
        }
        let mut scenario = match fields.get("config") {
            Some(p) => {
                let path = match base_dir {
                    Some(d) => d.join(p),
                    None => PathBuf::from(p),
                };
                SystemConfig::from_file(&path)?
            }
            None => SystemConfig::default(),
        };
        for (k, v) in &overrides {
            scenario.set(k, v)?;
        }
        let axis = Axis::parse(
            fields
                .get("axis")
                .ok_or_else(|| Error::InvalidSpec("missing `axis`".into()))?,
        )?;
        let values = fields
            .get("values")
            .ok_or_else(|| Error::InvalidSpec("missing `values`".into()))?
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidSpec(format!("bad sweep value `{}`", s.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut spec = SweepSpec::new(axis, values, scenario);
        if let Some(m) = fields.get("mode") {
            spec.mode = Mode::parse(m)?;
        }
        if let Some(o) = fields.get("output") {
            spec.output_path = Some(PathBuf::from(o));
        }
        if let Some(t) = fields.get("trials") {
            spec.trials = t
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("bad trial count `{t}`")))?;
        }
        if let Some(s) = fields.get("seed") {
            spec.seed = s.parse().map_err(|_| Error::InvalidSpec(format!("bad seed `{s}`")))?;
        }
        if let Some(s) = fields.get("series") {
            spec.series = s.clone();
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// UE selector of a sweep row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UeRow {
    Ue(usize),
    /// Sum over UEs of `R_k`, or the UE average for the symbol axis.
    Aggregate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub series: String,
    pub axis: Axis,
    pub value: f64,
    pub mode: &'static str,
    pub ue: UeRow,
    pub metric: &'static str,
    pub se: f64,
    pub config_hash: String,
}

/// Per-UE SE of one point, or per-UE `log2(1 + gamma_k[n])` on the symbol axis.
fn analytic_point(sc: &Scenario, axis: Axis, value: f64) -> Result<Vec<f64>> {
    match axis {
        Axis::SymbolIndex => {
            let n = value as usize;
            (0..sc.config.k_ue)
                .map(|k| Ok((1.0 + analytics::breakdown(sc, k, n)?.gamma).log2()))
                .collect()
        }
        _ => analytics::ue_spectral_efficiency(sc),
    }
}

fn empirical_gammas(sc: &Scenario, symbols: Vec<usize>, trials: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let k_ue = sc.config.k_ue;
    let settings = McSettings {
        trials,
        seed,
        symbols: symbols.clone(),
        workers: None,
    };
    let terms = montecarlo::run_empirical(sc, &settings)?;
    let mut gammas = vec![Vec::with_capacity(symbols.len()); k_ue];
    for e in &terms {
        let t = &e.terms;
        let g = t[0].value / (t[1].value + t[2].value + t[3].value + sc.config.sigma_k_sq);
        gammas[e.k].push(g);
    }
    Ok(gammas)
}

fn montecarlo_point(sc: &Scenario, trials: usize, seed: u64) -> Result<Vec<f64>> {
    let tau_d = sc.config.tau_d();
    let g = empirical_gammas(sc, (1..=tau_d).collect(), trials, seed)?;
    Ok(g.iter().map(|x| analytics::spectral_efficiency(x, sc.config.tau_c)).collect())
}

/// Evaluates the sweep; rows come out in axis order, analytic before Monte-Carlo.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let symbol_axis = spec.axis == Axis::SymbolIndex;
    let (metric, agg_metric) = if symbol_axis {
        ("symbol_se", "average_symbol_se")
    } else {
        ("se", "sum_se")
    };
    let points = spec
        .values
        .iter()
        .map(|&v| {
            let mut cfg = spec.scenario.clone();
            spec.axis.apply(&mut cfg, v)?;
            Ok((v, cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut modes = Vec::new();
    if spec.mode.analytic() {
        modes.push("analytic");
    }
    if spec.mode.montecarlo() {
        modes.push("montecarlo");
    }
    let shared = if symbol_axis {
        Some(Scenario::new(spec.scenario.clone())?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for mode in modes {
        let per_point: Vec<Vec<f64>> = match (&shared, mode) {
            (Some(sc), "montecarlo") => {
                // one run covers every requested symbol
                let n: Vec<usize> = spec.values.iter().map(|&v| v as usize).collect();
                let g = empirical_gammas(sc, n, spec.trials, spec.seed)?;
                (0..spec.values.len())
                    .map(|i| g.iter().map(|x| (1.0 + x[i]).log2()).collect())
                    .collect()
            }
            _ => points
                .par_iter()
                .map(|(v, cfg)| -> Result<Vec<f64>> {
                    let owned;
                    let sc = match &shared {
                        Some(s) => s,
                        None => {
                            owned = Scenario::new(cfg.clone())?;
                            &owned
                        }
                    };
                    if mode == "analytic" {
                        analytic_point(sc, spec.axis, *v)
                    } else {
                        montecarlo_point(sc, spec.trials, spec.seed)
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        };
        for ((v, cfg), ses) in points.iter().zip(per_point) {
            let hash = cfg.hash();
            for (k, se) in ses.iter().enumerate() {
                rows.push(SweepRow {
                    series: spec.series.clone(),
                    axis: spec.axis,
                    value: *v,
                    mode,
                    ue: UeRow::Ue(k),
                    metric,
                    se: *se,
                    config_hash: hash.clone(),
                });
            }
            let total: f64 = ses.iter().sum();
            let agg = if symbol_axis { total / ses.len() as f64 } else { total };
            rows.push(SweepRow {
                series: spec.series.clone(),
                axis: spec.axis,
                value: *v,
                mode,
                ue: UeRow::Aggregate,
                metric: agg_metric,
                se: agg,
                config_hash: hash,
            });
        }
    }
    Ok(rows)
}

pub fn write_rows_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "axis", "value", "mode", "ue", "metric", "se", "config_hash"])?;
    for r in rows {
        let ue = match r.ue {
            UeRow::Ue(k) => k.to_string(),
            UeRow::Aggregate => "all".to_string(),
        };
        w.write_record([
            r.series.clone(),
            r.axis.name().to_string(),
            format!("{:?}", r.value),
            r.mode.to_string(),
            ue,
            r.metric.to_string(),
            format!("{:e}", r.se),
            r.config_hash.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrendCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// A measured quantity reported next to its published counterpart.
#[derive(Clone, Debug, PartialEq)]
pub struct Anchor {
    pub name: String,
    pub reference: f64,
    pub measured: f64,
    pub within_tolerance: bool,
}

impl Anchor {
    fn new(name: &str, reference: f64, measured: f64) -> Self {
        Anchor {
            name: name.into(),
            reference,
            measured,
            within_tolerance: ((measured - reference) / reference).abs() <= ANCHOR_TOLERANCE,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FigureReport {
    pub figure: &'static str,
    pub mode: &'static str,
    pub checks: Vec<TrendCheck>,
    pub anchors: Vec<Anchor>,
}

impl FigureReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn write_csv<W: Write>(&self, hash: &str, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["figure", "mode", "kind", "name", "pass", "reference", "measured", "detail", "config_hash"])?;
        for c in &self.checks {
            w.write_record([
                self.figure,
                self.mode,
                "trend",
                &c.name,
                &c.pass.to_string(),
                "",
                "",
                &c.detail,
                hash,
            ])?;
        }
        for a in &self.anchors {
            w.write_record([
                self.figure,
                self.mode,
                "anchor",
                &a.name,
                &a.within_tolerance.to_string(),
                &format!("{:e}", a.reference),
                &format!("{:e}", a.measured),
                &format!("tolerance {ANCHOR_TOLERANCE} relative, reported only"),
                hash,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Aggregate value of `(series, value)` in `mode`.
fn lookup(rows: &[SweepRow], series: &str, value: f64, mode: &str) -> Result<f64> {
    rows.iter()
        .find(|r| r.series == series && r.value == value && r.mode == mode && r.ue == UeRow::Aggregate)
        .map(|r| r.se)
        .ok_or_else(|| Error::InvalidInput(format!("missing sweep row {series} at {value} ({mode})")))
}

fn series_values(rows: &[SweepRow], series: &str, values: &[f64], mode: &str) -> Result<Vec<f64>> {
    values.iter().map(|&v| lookup(rows, series, v, mode)).collect()
}

fn check(name: &str, pass: bool, detail: String) -> TrendCheck {
    TrendCheck {
        name: name.into(),
        pass,
        detail,
    }
}

fn fmt_list(x: &[f64]) -> String {
    x.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" ")
}

fn strictly_increasing(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[1] > w[0])
}

fn strictly_decreasing(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[1] < w[0])
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Analytic => "analytic",
        _ => "montecarlo",
    }
}

fn run_series(base: &SystemConfig, axis: Axis, values: &[f64], series: &str, edits: &[(&str, &str)], mode: Mode, trials: usize, seed: u64) -> Result<Vec<SweepRow>> {
    let mut cfg = base.clone();
    for (k, v) in edits {
        cfg.set(k, v)?;
    }
    let mut spec = SweepSpec::new(axis, values.to_vec(), cfg);
    spec.mode = mode;
    spec.series = series.into();
    spec.trials = trials;
    spec.seed = seed;
    sweep(&spec)
}

/// Options shared by the figure builders.
#[derive(Clone, Debug)]
pub struct FigureOptions {
    pub base: SystemConfig,
    /// `Analytic` or `MonteCarlo`; `Both` is resolved by the caller.
    pub mode: Mode,
    pub trials: usize,
    pub seed: u64,
}

impl FigureOptions {
    pub fn analytic(base: SystemConfig) -> Self {
        FigureOptions {
            base,
            mode: Mode::Analytic,
            trials: 200,
            seed: 1,
        }
    }
}

pub const FIG1_M: [f64; 4] = [16.0, 64.0, 256.0, 1024.0];
pub const FIG1_KAPPA: [f64; 5] = [1.0, 3.0, 10.0, 30.0, 100.0];

/// Sum SE against `M` with and without EMI and aging, and against `kappa` at `M = 64`.
pub fn figure1_rows(opt: &FigureOptions) -> Result<Vec<SweepRow>> {
    let (b, m, t, s) = (&opt.base, opt.mode, opt.trials, opt.seed);
    let mut rows = Vec::new();
    rows.extend(run_series(b, Axis::M, &FIG1_M, "emi", &[], m, t, s)?);
    rows.extend(run_series(b, Axis::M, &FIG1_M, "no_emi", &[("sigma_e_sq", "0")], m, t, s)?);
    rows.extend(run_series(b, Axis::M, &FIG1_M, "emi_no_aging", &[("fd_ts", "0")], m, t, s)?);
    rows.extend(run_series(b, Axis::KappaOverride, &FIG1_KAPPA, "kappa_emi", &[("m_h", "8"), ("m_v", "8")], m, t, s)?);
    rows.extend(run_series(
        b,
        Axis::KappaOverride,
        &FIG1_KAPPA,
        "kappa_no_emi",
        &[("m_h", "8"), ("m_v", "8"), ("sigma_e_sq", "0")],
        m,
        t,
        s,
    )?);
    Ok(rows)
}

pub fn figure1_trend_check(rows: &[SweepRow], mode: &'static str) -> Result<FigureReport> {
    let emi = series_values(rows, "emi", &FIG1_M, mode)?;
    let no_emi = series_values(rows, "no_emi", &FIG1_M, mode)?;
    let no_aging = series_values(rows, "emi_no_aging", &FIG1_M, mode)?;
    let kappa_emi = series_values(rows, "kappa_emi", &FIG1_KAPPA, mode)?;
    let kappa_no_emi = series_values(rows, "kappa_no_emi", &FIG1_KAPPA, mode)?;

    let mut checks = Vec::new();
    checks.push(check(
        "se_increasing_in_kappa",
        strictly_increasing(&kappa_emi) && strictly_increasing(&kappa_no_emi),
        format!("with EMI [{}] without EMI [{}]", fmt_list(&kappa_emi), fmt_list(&kappa_no_emi)),
    ));
    let increments: Vec<f64> = no_emi.windows(2).map(|w| w[1] - w[0]).collect();
    checks.push(check(
        "no_emi_increments_shrink",
        strictly_decreasing(&increments),
        format!("SE(4M)-SE(M) without EMI [{}]", fmt_list(&increments)),
    ));
    let gaps: Vec<f64> = emi.iter().zip(&no_emi).map(|(e, n)| (n - e) / n).collect();
    let last = FIG1_M.len() - 1;
    checks.push(check(
        "emi_lowers_se_at_largest_m",
        emi[last] < no_emi[last],
        format!("M={} with EMI {:.4} without {:.4}", FIG1_M[last], emi[last], no_emi[last]),
    ));
    checks.push(check(
        "emi_gap_positive_and_growing",
        gaps[2] > 0.0 && strictly_increasing(&gaps),
        format!("relative EMI gap over M [{}]", fmt_list(&gaps)),
    ));
    let aging_gap = (no_aging[2] - emi[2]) / no_aging[2];
    let anchors = vec![
        Anchor::new("emi_gap_at_m256_percent", 8.0, 100.0 * gaps[2]),
        Anchor::new("aging_gap_at_m256_percent", 6.0, 100.0 * aging_gap),
    ];
    Ok(FigureReport {
        figure: "fig1",
        mode,
        checks,
        anchors,
    })
}

pub const FIG2_FD: [f64; 2] = [0.001, 0.002];
/// Symbol range scanned for the 1% decay point.
pub const FIG2_DECAY_SCAN: usize = 2000;

fn symbols(tau_d: usize) -> Vec<f64> {
    (1..=tau_d).map(|n| n as f64).collect()
}

/// Average per-symbol SE against `n` for two Doppler values and two EMI powers.
pub fn figure2_rows(opt: &FigureOptions) -> Result<Vec<SweepRow>> {
    let (b, m, t, s) = (&opt.base, opt.mode, opt.trials, opt.seed);
    let n = symbols(b.tau_d());
    let mut rows = Vec::new();
    rows.extend(run_series(b, Axis::SymbolIndex, &n, "fd_0.001", &[("fd_ts", "0.001")], m, t, s)?);
    rows.extend(run_series(b, Axis::SymbolIndex, &n, "fd_0.002", &[("fd_ts", "0.002")], m, t, s)?);
    // rho is signal-to-EMI, so 20 dB more EMI power is 20 dB less rho
    let loud = format!("{:?}", base_rho_db(b)? - 20.0);
    rows.extend(run_series(b, Axis::SymbolIndex, &n, "fd_0.001_emi_plus20", &[("fd_ts", "0.001"), ("rho_db", &loud)], m, t, s)?);
    rows.extend(run_series(b, Axis::SymbolIndex, &n, "fd_0", &[("fd_ts", "0")], m, t, s)?);
    Ok(rows)
}

fn base_rho_db(cfg: &SystemConfig) -> Result<f64> {
    let sc = Scenario::new(cfg.clone())?;
    Ok(cfg.rho_db(sc.large_scale.beta_br))
}

/// First `n` whose UE-averaged `log2(1 + gamma[n])` falls below 1% of its `n = 1` value.
pub fn decay_symbol(cfg: &SystemConfig, limit: usize) -> Result<Option<usize>> {
    let sc = Scenario::new(cfg.clone())?;
    let first = analytics::average_symbol_se(&sc, 1)?;
    for n in 2..=limit {
        if analytics::average_symbol_se(&sc, n)? < 0.01 * first {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

pub fn figure2_trend_check(rows: &[SweepRow], base: &SystemConfig, mode: &'static str) -> Result<FigureReport> {
    let n = symbols(base.tau_d());
    let slow = series_values(rows, "fd_0.001", &n, mode)?;
    let fast = series_values(rows, "fd_0.002", &n, mode)?;
    let loud = series_values(rows, "fd_0.001_emi_plus20", &n, mode)?;
    let flat = series_values(rows, "fd_0", &n, mode)?;
    // sampled curves are compared on a coarse grid where the trend exceeds the noise
    let (stride, flat_tol) = if mode == "analytic" { (1, 1e-12) } else { (16, 1e-2) };
    let coarse = |x: &[f64]| -> Vec<f64> {
        let mut v: Vec<f64> = x.iter().step_by(stride).copied().collect();
        if (x.len() - 1) % stride != 0 {
            v.push(x[x.len() - 1]);
        }
        v
    };
    let emi_drop = 100.0 * (1.0 - mean(&loud) / mean(&slow));
    let (slow, fast, loud, flat) = (coarse(&slow), coarse(&fast), coarse(&loud), coarse(&flat));
    let last = slow.len() - 1;
    let mut checks = Vec::new();
    checks.push(check(
        "se_decreasing_in_n",
        strictly_decreasing(&slow) && strictly_decreasing(&fast),
        format!(
            "fd 0.001 from {:.4} to {:.4}; fd 0.002 from {:.4} to {:.4}",
            slow[0], slow[last], fast[0], fast[last]
        ),
    ));
    let drop_slow = slow[0] - slow[last];
    let drop_fast = fast[0] - fast[last];
    checks.push(check(
        "faster_decay_for_larger_doppler",
        drop_fast > drop_slow && fast.iter().zip(&slow).skip(1).all(|(f, s)| f < s),
        format!("drop over the block {drop_slow:.4} vs {drop_fast:.4}"),
    ));
    checks.push(check(
        "louder_emi_lowers_se_everywhere",
        loud.iter().zip(&slow).all(|(l, s)| l < s),
        format!("mean {:.4} vs {:.4}", mean(&loud), mean(&slow)),
    ));
    let spread = flat.iter().fold(0.0f64, |a, x| a.max((x - flat[0]).abs()));
    checks.push(check(
        "static_channel_is_flat",
        spread <= flat_tol * flat[0].abs(),
        format!("max deviation {spread:e}"),
    ));
    let mut anchors = vec![Anchor::new(
        "emi_plus20db_se_drop_percent",
        22.0,
        emi_drop,
    )];
    let mut fast_cfg = base.clone();
    fast_cfg.set("fd_ts", "0.002")?;
    if let Some(d) = decay_symbol(&fast_cfg, FIG2_DECAY_SCAN)? {
        anchors.push(Anchor::new("fd0.002_one_percent_symbol", 200.0, d as f64));
    }
    Ok(FigureReport {
        figure: "fig2",
        mode,
        checks,
        anchors,
    })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub const FIG3_FD: [f64; 7] = [0.0, 0.0005, 0.001, 0.0015, 0.002, 0.0025, 0.003];

/// Sum SE against normalized Doppler at `M = 64` for two element areas and two block lengths.
pub fn figure3_rows(opt: &FigureOptions) -> Result<Vec<SweepRow>> {
    let (m, t, s) = (opt.mode, opt.trials, opt.seed);
    let mut base = opt.base.clone();
    base.set("m_h", "8")?;
    base.set("m_v", "8")?;
    let mut big = base.clone();
    Axis::AElemScale.apply(&mut big, 4.0)?;
    let mut rows = Vec::new();
    for (area, cfg) in [("a1", &base), ("a4", &big)] {
        for tau in ["100", "200"] {
            let name = format!("{area}_tau{tau}");
            rows.extend(run_series(cfg, Axis::FdTs, &FIG3_FD, &name, &[("tau_c", tau)], m, t, s)?);
        }
    }
    Ok(rows)
}

pub fn figure3_trend_check(rows: &[SweepRow], base: &SystemConfig, mode: &'static str) -> Result<FigureReport> {
    let a1 = series_values(rows, "a1_tau100", &FIG3_FD, mode)?;
    let a4 = series_values(rows, "a4_tau100", &FIG3_FD, mode)?;
    let a1_long = series_values(rows, "a1_tau200", &FIG3_FD, mode)?;
    let a4_long = series_values(rows, "a4_tau200", &FIG3_FD, mode)?;
    let mut checks = Vec::new();
    checks.push(check(
        "se_increasing_in_area",
        a4.iter().zip(&a1).all(|(x, y)| x > y) && a4_long.iter().zip(&a1_long).all(|(x, y)| x > y),
        format!("tau_c=100 area x1 [{}] x4 [{}]", fmt_list(&a1), fmt_list(&a4)),
    ));
    checks.push(check(
        "longer_block_wins_without_aging",
        a1_long[0] > a1[0] && a4_long[0] > a4[0],
        format!("fd=0 tau_c 100 {:.4} 200 {:.4}", a1[0], a1_long[0]),
    ));
    let tau_u = base.tau_u as f64;
    let prelog = ((200.0 - tau_u) / 200.0) / ((100.0 - tau_u) / 100.0);
    let ratio = a1_long[0] / a1[0];
    checks.push(check(
        "static_block_ratio_is_prelog",
        mode != "analytic" || (ratio - prelog).abs() <= 1e-12 * prelog,
        format!("ratio {ratio:.15} prelog {prelog:.15}"),
    ));
    let i = FIG3_FD.iter().position(|&f| f == 0.002).expect("0.002 on the grid");
    let anchors = vec![
        Anchor::new("area_x4_gain_percent_fd0.002", 116.0, 100.0 * (a4[i] / a1[i] - 1.0)),
        Anchor::new("tau_c_200_gain_percent_fd0.002_area_x4", 30.0, 100.0 * (a4_long[i] / a4[i] - 1.0)),
    ];
    Ok(FigureReport {
        figure: "fig3",
        mode,
        checks,
        anchors,
    })
}

/// Builds the rows of a figure and checks its trends in the requested mode.
pub fn run_figure(fig: u8, opt: &FigureOptions) -> Result<(Vec<SweepRow>, FigureReport)> {
    let mode = mode_name(opt.mode);
    match fig {
        1 => {
            let rows = figure1_rows(opt)?;
            let rep = figure1_trend_check(&rows, mode)?;
            Ok((rows, rep))
        }
        2 => {
            let rows = figure2_rows(opt)?;
            let rep = figure2_trend_check(&rows, &opt.base, mode)?;
            Ok((rows, rep))
        }
        3 => {
            let rows = figure3_rows(opt)?;
            let rep = figure3_trend_check(&rows, &opt.base, mode)?;
            Ok((rows, rep))
        }
        other => Err(Error::InvalidSpec(format!("no figure {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_names_round_trip() {
        for a in Axis::ALL {
            assert_eq!(Axis::parse(a.name()).unwrap(), a);
        }
        assert!(matches!(Axis::parse("bandwidth"), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn axis_application() {
        let mut cfg = SystemConfig::default();
        Axis::M.apply(&mut cfg, 256.0).unwrap();
        assert_eq!((cfg.m_h, cfg.m_v), (16, 16));
        Axis::M.apply(&mut cfg, 12.0).unwrap();
        assert_eq!((cfg.m_h, cfg.m_v), (12, 1));
        let a = cfg.a_elem;
        Axis::AElemScale.apply(&mut cfg, 4.0).unwrap();
        assert!((cfg.a_elem / a - 4.0).abs() < 1e-12);
        assert!(Axis::TauC.apply(&mut cfg, 100.5).is_err());
        assert!(Axis::AElemScale.apply(&mut cfg, 0.0).is_err());
    }

    #[test]
    fn spec_parsing() {
        let text = "# sweep\naxis = fd_ts\nvalues = 0, 0.001, 0.002\nmode = analytic\nm_h = 4\nm_v = 4\n";
        let spec = SweepSpec::parse(text, None).unwrap();
        assert_eq!(spec.axis, Axis::FdTs);
        assert_eq!(spec.values, vec![0.0, 0.001, 0.002]);
        assert_eq!(spec.scenario.m(), 16);
        assert!(SweepSpec::parse("axis = speed\nvalues = 1", None).is_err());
        assert!(SweepSpec::parse("axis = m\nvalues = ", None).is_err());
        assert!(SweepSpec::parse("axis = m\nvalues = 1, inf", None).is_err());
        assert!(SweepSpec::parse("axis = m\nvalues = 1\nmode = fast", None).is_err());
    }

    #[test]
    fn one_row_per_ue_plus_aggregate() {
        let mut cfg = SystemConfig::default();
        cfg.set("m_h", "4").unwrap();
        cfg.set("m_v", "4").unwrap();
        let spec = SweepSpec::new(Axis::FdTs, vec![0.0, 0.001, 0.002], cfg);
        let rows = sweep(&spec).unwrap();
        assert_eq!(rows.len(), 3 * 5);
        let sums: Vec<f64> = rows.iter().filter(|r| r.ue == UeRow::Aggregate).map(|r| r.se).collect();
        assert!(sums[0] >= sums[1] && sums[1] >= sums[2]);
        for chunk in rows.chunks(5) {
            let total: f64 = chunk[..4].iter().map(|r| r.se).sum();
            assert_eq!(total, chunk[4].se);
        }
    }

    #[test]
    fn missing_rows_are_reported() {
        assert!(matches!(figure1_trend_check(&[], "analytic"), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn anchor_tolerance() {
        assert!(Anchor::new("x", 8.0, 11.9).within_tolerance);
        assert!(!Anchor::new("x", 8.0, 12.1).within_tolerance);
    }
}
