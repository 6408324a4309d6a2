//! End-to-end Monte-Carlo simulation of training, aging and MRT downlink, and
//! sample estimates of every SINR term.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::analytics::{self, SinrBreakdown};
use crate::channel::{gen_bs_ris, los_phase_matrix, AgingProfile, RisPanel};
use crate::config::{I2Pairing, Innovation, SigmaE3Scaling};
use crate::error::{Error, Result};
use crate::estimation::{build_pilots, despread, nlos_entry_variance, EmiProjector, PilotBook};
use crate::linalg::{complex_matvec, dotc, norm_sqr, real_matvec};
use crate::random::{complex_normal, stream, SHARED_STREAM};
use crate::scenario::Scenario;

/// Trials folded sequentially before the pairwise reduction across chunks.
const CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct McSettings {
    pub trials: usize,
    pub seed: u64,
    /// Downlink symbol indices at which samples are recorded.
    pub symbols: Vec<usize>,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl McSettings {
    /// First, middle and last downlink symbol.
    pub fn new(sc: &Scenario, trials: usize, seed: u64) -> Self {
        let tau_d = sc.config.tau_d();
        let mut symbols = vec![1, tau_d.div_ceil(2), tau_d];
        symbols.dedup();
        McSettings {
            trials,
            seed,
            symbols,
            workers: None,
        }
    }
}

/// Samples at one downlink symbol of one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolOutcome {
    pub n: usize,
    /// Per-realization precoder normalization.
    pub zeta_sq: f64,
    /// `K x K`, entry `(k, j)` is `G_k[n] f_j[n]`.
    pub coefficients: DMatrix<Complex64>,
    /// Per UE, `g_r,k^H[n] Phi^H u[n]`.
    pub emi: Vec<Complex64>,
    /// Per UE, the part of `G_k f_k` carried by the aged estimation error.
    pub desired_error: Vec<Complex64>,
    /// Per UE, `sum_{j != k} |(error of UE k) f_j|^2`.
    pub interference_error: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub trial: u64,
    pub symbols: Vec<SymbolOutcome>,
}

/// Per-experiment state shared read-only by all trials.
#[derive(Clone, Debug)]
pub struct TrialContext<'a> {
    pub scenario: &'a Scenario,
    pub los_phases: DMatrix<f64>,
    pub pilots: PilotBook,
    pub symbols: Vec<usize>,
}

impl<'a> TrialContext<'a> {
    pub fn new(scenario: &'a Scenario, symbols: &[usize]) -> Result<Self> {
        let cfg = &scenario.config;
        let mut rng = stream(cfg.los_seed, SHARED_STREAM);
        let los_phases = los_phase_matrix(cfg.n_t, cfg.m(), cfg.los_phases, &mut rng);
        let pilots = build_pilots(cfg.tau_p, cfg.k_ue)?;
        if let Some(c) = &scenario.correlation {
            // factor once up front rather than inside the first worker
            let _ = c.factor();
            let _ = c.emi().factor();
        }
        Ok(TrialContext {
            scenario,
            los_phases,
            pilots,
            symbols: symbols.to_vec(),
        })
    }
}

/// Simulates one coherence block on stream `trial` of `master_seed`.
pub fn run_trial(ctx: &TrialContext<'_>, master_seed: u64, trial: u64) -> Result<TrialOutcome> {
    let sc = ctx.scenario;
    let cfg = &sc.config;
    let ls = &sc.large_scale;
    let (n_t, k_ue, m) = (cfg.n_t, cfg.k_ue, cfg.m());
    let p = cfg.p_tau_p;
    let a = cfg.a_elem;
    let mut rng = stream(master_seed, trial);

    let panel = RisPanel::with_mode(m, cfg.ris_phases, &mut rng);
    let v = panel.reflection_vector();
    let nlos_var = nlos_entry_variance(a, cfg.nlos_variance);
    let g_br = gen_bs_ris(ls.beta_br, ls.kappa, nlos_var, &ctx.los_phases, &mut rng)?;

    let g_d0 = DMatrix::from_fn(n_t, k_ue, |_, k| complex_normal(&mut rng) * ls.beta_d[k].sqrt());
    let factor = sc.correlation.as_ref().map(|c| c.factor());
    let mut scratch = vec![Complex64::default(); m];
    let mut g_r0 = vec![vec![Complex64::default(); m]; k_ue];
    if let Some(l) = factor {
        for (k, g) in g_r0.iter_mut().enumerate() {
            let s = (a * ls.beta_r[k]).sqrt();
            scratch.iter_mut().for_each(|x| *x = complex_normal(&mut rng) * s);
            real_matvec(l, &scratch, g);
        }
    }

    // direct training
    let y_d = crate::estimation::receive_pilot_direct(&g_d0, &ctx.pilots, p, cfg.sigma_d_sq, &mut rng)?;
    let mut ghat_d = DMatrix::<Complex64>::zeros(n_t, k_ue);
    for k in 0..k_ue {
        let yk = despread(&y_d, &ctx.pilots.pilot(k), p);
        let est = yk * Complex64::new(sc.stats[k].direct_shrinkage, 0.0);
        ghat_d.set_column(k, &est);
    }

    // cascade training, one observation per element column; only G_ck v is kept
    let projector = EmiProjector::new(&g_br, &panel, sc.correlation.as_ref(), a, sc.sigma_e_sq)?;
    let noise_sd = (cfg.sigma_c_sq / p).sqrt();
    let mut cascade_hat = vec![vec![Complex64::default(); n_t]; k_ue];
    let mut z = vec![Complex64::default(); n_t];
    let mut w = vec![Complex64::default(); n_t];
    let g_br_data = g_br.as_slice();
    for k in 0..k_ue {
        let resid: Vec<Complex64> = (0..n_t).map(|i| g_d0[(i, k)] - ghat_d[(i, k)]).collect();
        let c = sc.stats[k].cascade_shrinkage;
        let acc = &mut cascade_hat[k];
        for (mi, vm) in v.iter().enumerate() {
            projector.sample_into(&mut rng, &mut z, &mut w);
            let col = &g_br_data[mi * n_t..(mi + 1) * n_t];
            let grk = g_r0[k][mi];
            for i in 0..n_t {
                let y = resid[i] + col[i] * grk + w[i] + complex_normal(&mut rng) * noise_sd;
                acc[i] += vm * y * c;
            }
        }
    }

    let emi_sd = (a * sc.sigma_e_sq).sqrt();
    let emi_factor = sc.correlation.as_ref().map(|c| c.emi().factor());
    let mut symbols = Vec::with_capacity(ctx.symbols.len());
    let mut g_rn = vec![vec![Complex64::default(); m]; k_ue];
    let mut reflected = vec![Complex64::default(); m];
    let mut h = vec![vec![Complex64::default(); n_t]; k_ue];
    let mut hbar = vec![vec![Complex64::default(); n_t]; k_ue];
    let mut u = vec![Complex64::default(); m];
    let mut cascade_eff = vec![Complex64::default(); n_t];
    for &n in &ctx.symbols {
        let r0 = sc.aging.rho0(n);
        let r1 = sc.aging.rho1(n);
        let b0 = AgingProfile::rho_bar(r0);
        let b1 = AgingProfile::rho_bar(r1);
        for k in 0..k_ue {
            let sd = ls.beta_d[k].sqrt();
            for i in 0..n_t {
                h[k][i] = g_d0[(i, k)] * r0 + complex_normal(&mut rng) * (b0 * sd);
            }
            if let Some(l) = factor {
                match cfg.innovation {
                    Innovation::Correlated => {
                        let s = (a * ls.beta_r[k]).sqrt();
                        scratch.iter_mut().for_each(|x| *x = complex_normal(&mut rng) * s);
                        real_matvec(l, &scratch, &mut g_rn[k]);
                    }
                    Innovation::Iid => {
                        g_rn[k].iter_mut().for_each(|x| *x = complex_normal(&mut rng));
                    }
                }
                for (x, x0) in g_rn[k].iter_mut().zip(&g_r0[k]) {
                    *x = x0 * r1 + *x * b1;
                }
                for ((r, g), vm) in reflected.iter_mut().zip(&g_rn[k]).zip(v) {
                    *r = g * vm;
                }
                complex_matvec(&g_br, &reflected, &mut cascade_eff);
                for i in 0..n_t {
                    h[k][i] += cascade_eff[i];
                }
            }
            for i in 0..n_t {
                hbar[k][i] = ghat_d[(i, k)] * r0 + cascade_hat[k][i] * r1;
            }
        }
        let trace: f64 = hbar.iter().map(|x| norm_sqr(x)).sum();
        if !(trace > 0.0) {
            return Err(Error::Degenerate(format!("precoder vanishes at symbol {n}")));
        }
        let zeta_sq = cfg.p_t / trace;
        let zeta = zeta_sq.sqrt();
        let coefficients =
            DMatrix::from_fn(k_ue, k_ue, |k, j| dotc(&h[k], &hbar[j]) * zeta);
        let mut desired_error = vec![Complex64::default(); k_ue];
        let mut interference_error = vec![0.0; k_ue];
        for k in 0..k_ue {
            let err: Vec<Complex64> = h[k].iter().zip(&hbar[k]).map(|(x, y)| x - y).collect();
            for j in 0..k_ue {
                let c = dotc(&err, &hbar[j]) * zeta;
                if j == k {
                    desired_error[k] = c;
                } else {
                    interference_error[k] += c.norm_sqr();
                }
            }
        }
        let mut emi = vec![Complex64::default(); k_ue];
        if let Some(l) = emi_factor {
            scratch.iter_mut().for_each(|x| *x = complex_normal(&mut rng) * emi_sd);
            real_matvec(l, &scratch, &mut u);
            for k in 0..k_ue {
                // g^H Phi^H u = sum conj(g_m v_m) u_m
                emi[k] = g_rn[k]
                    .iter()
                    .zip(v)
                    .zip(&u)
                    .map(|((g, vm), um)| (g * vm).conj() * um)
                    .sum();
            }
        }
        symbols.push(SymbolOutcome {
            n,
            zeta_sq,
            coefficients,
            emi,
            desired_error,
            interference_error,
        });
    }
    Ok(TrialOutcome { trial, symbols })
}

/// Mean and standard error of a sample statistic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TermEstimate {
    pub value: f64,
    pub std_err: f64,
}

/// Sample estimates of the four random SINR terms for one `(k, n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalTerms {
    pub k: usize,
    pub n: usize,
    pub trials: usize,
    /// `I0..I3` with the per-realization precoder normalization.
    pub terms: [TermEstimate; 4],
    /// `I0..I3` with coefficients rescaled to the deterministic normalization.
    pub deterministic: Option<[TermEstimate; 4]>,
    /// Variance of the error part of `G_k f_k` and its interference, the
    /// quantities the closed-form `I1` and `I2` are built from.
    pub error_only: [TermEstimate; 2],
    /// Sample mean of `tr(Gbar Gbar^H) = P_T / zeta^2`.
    pub mean_trace: f64,
}

/// Shifted raw moments of a complex sample, enough for the mean, the variance
/// and the standard errors of `|mean|^2` and the variance.
#[derive(Clone, Copy, Debug, Default)]
struct ComplexMoments {
    shift: Complex64,
    n: f64,
    s1: Complex64,
    s2: f64,
    s2c: Complex64,
    s3: Complex64,
    s4: f64,
}

impl ComplexMoments {
    fn with_shift(shift: Complex64) -> Self {
        ComplexMoments {
            shift,
            ..Default::default()
        }
    }

    fn push(&mut self, x: Complex64) {
        let y = x - self.shift;
        let a = y.norm_sqr();
        self.n += 1.0;
        self.s1 += y;
        self.s2 += a;
        self.s2c += y * y;
        self.s3 += y * a;
        self.s4 += a * a;
    }

    fn merge(&mut self, o: &ComplexMoments) {
        debug_assert_eq!(self.shift, o.shift);
        self.n += o.n;
        self.s1 += o.s1;
        self.s2 += o.s2;
        self.s2c += o.s2c;
        self.s3 += o.s3;
        self.s4 += o.s4;
    }

    /// `(|mean|^2, variance)` with standard errors.
    fn estimates(&self) -> (TermEstimate, TermEstimate) {
        let n = self.n;
        let ybar = self.s1 / n;
        let yb2 = ybar.norm_sqr();
        let mean = self.shift + ybar;
        let var_pop = (self.s2 / n - yb2).max(0.0);
        let var = var_pop * n / (n - 1.0);
        let pseudo = self.s2c / n - ybar * ybar;
        let var0 = 2.0 * (mean.norm_sqr() * var_pop + (mean.conj() * mean.conj() * pseudo).re) / n;
        // E|y - ybar|^4 from raw moments
        let e_r2 = 0.5 * (yb2 * self.s2 / n + (ybar.conj() * ybar.conj() * self.s2c / n).re);
        let e_ar = (ybar.conj() * self.s3 / n).re;
        let mu4 = self.s4 / n + 4.0 * e_r2 + yb2 * yb2 - 4.0 * e_ar + 2.0 * yb2 * self.s2 / n
            - 4.0 * yb2 * yb2;
        let var1 = (mu4 - var_pop * var_pop).max(0.0) / n;
        (
            TermEstimate {
                value: mean.norm_sqr(),
                std_err: var0.max(0.0).sqrt(),
            },
            TermEstimate {
                value: var,
                std_err: var1.sqrt(),
            },
        )
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct RealMoments {
    n: f64,
    s1: f64,
    s2: f64,
}

impl RealMoments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.s1 += x;
        self.s2 += x * x;
    }

    fn merge(&mut self, o: &RealMoments) {
        self.n += o.n;
        self.s1 += o.s1;
        self.s2 += o.s2;
    }

    fn estimate(&self) -> TermEstimate {
        let mean = self.s1 / self.n;
        let var = ((self.s2 / self.n - mean * mean) * self.n / (self.n - 1.0)).max(0.0);
        TermEstimate {
            value: mean,
            std_err: (var / self.n).sqrt(),
        }
    }
}

#[derive(Clone, Debug)]
struct TermAccumulator {
    desired: ComplexMoments,
    interference: RealMoments,
    emi: RealMoments,
    desired_det: ComplexMoments,
    interference_det: RealMoments,
    desired_error: ComplexMoments,
    interference_error: RealMoments,
    trace: RealMoments,
}

impl TermAccumulator {
    fn new(desired_shift: Complex64, det_shift: Complex64) -> Self {
        TermAccumulator {
            desired: ComplexMoments::with_shift(desired_shift),
            interference: RealMoments::default(),
            emi: RealMoments::default(),
            desired_det: ComplexMoments::with_shift(det_shift),
            interference_det: RealMoments::default(),
            desired_error: ComplexMoments::with_shift(Complex64::default()),
            interference_error: RealMoments::default(),
            trace: RealMoments::default(),
        }
    }

    fn push(&mut self, s: &SymbolOutcome, k: usize, zeta_sq_det: Option<f64>, p_t: f64) {
        let x = s.coefficients[(k, k)];
        let interference: f64 = (0..s.coefficients.ncols())
            .filter(|&j| j != k)
            .map(|j| s.coefficients[(k, j)].norm_sqr())
            .sum();
        self.desired.push(x);
        self.interference.push(interference);
        self.emi.push(s.emi[k].norm_sqr());
        if let Some(zd) = zeta_sq_det {
            let ratio = zd / s.zeta_sq;
            self.desired_det.push(x * ratio.sqrt());
            self.interference_det.push(interference * ratio);
        }
        self.desired_error.push(s.desired_error[k]);
        self.interference_error.push(s.interference_error[k]);
        self.trace.push(p_t / s.zeta_sq);
    }

    fn merge(&mut self, o: &TermAccumulator) {
        self.desired.merge(&o.desired);
        self.interference.merge(&o.interference);
        self.emi.merge(&o.emi);
        self.desired_det.merge(&o.desired_det);
        self.interference_det.merge(&o.interference_det);
        self.desired_error.merge(&o.desired_error);
        self.interference_error.merge(&o.interference_error);
        self.trace.merge(&o.trace);
    }

    fn finish(&self, k: usize, n: usize, with_det: bool) -> EmpiricalTerms {
        let (i0, i1) = self.desired.estimates();
        let i3 = self.emi.estimate();
        let deterministic = with_det.then(|| {
            let (d0, d1) = self.desired_det.estimates();
            [d0, d1, self.interference_det.estimate(), i3]
        });
        let (_, e1) = self.desired_error.estimates();
        EmpiricalTerms {
            k,
            n,
            trials: self.desired.n as usize,
            terms: [i0, i1, self.interference.estimate(), i3],
            deterministic,
            error_only: [e1, self.interference_error.estimate()],
            mean_trace: self.trace.estimate().value,
        }
    }
}

/// Accumulators for every `(symbol, k)` pair, in symbol-major order.
#[derive(Clone, Debug)]
struct RunAccumulator {
    cells: Vec<TermAccumulator>,
}

fn merge_pairwise(mut parts: Vec<RunAccumulator>) -> Option<RunAccumulator> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.cells.iter_mut().zip(&b.cells) {
                    x.merge(y);
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop()
}

/// Sample estimates from already simulated trials (at least two).
pub fn empirical_terms(outcomes: &[TrialOutcome]) -> Result<Vec<EmpiricalTerms>> {
    if outcomes.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least two trials, got {}",
            outcomes.len()
        )));
    }
    let first = &outcomes[0];
    let mut cells = Vec::new();
    for s in &first.symbols {
        for k in 0..s.coefficients.nrows() {
            cells.push(TermAccumulator::new(s.coefficients[(k, k)], Complex64::default()));
        }
    }
    let mut acc = RunAccumulator { cells };
    for o in outcomes {
        fold_outcome(&mut acc, o, None, 1.0)?;
    }
    Ok(finish_run(&acc, first, false))
}

fn fold_outcome(acc: &mut RunAccumulator, o: &TrialOutcome, zeta_det: Option<&[f64]>, p_t: f64) -> Result<()> {
    let mut idx = 0;
    for (si, s) in o.symbols.iter().enumerate() {
        for k in 0..s.coefficients.nrows() {
            let cell = acc.cells.get_mut(idx).ok_or_else(|| {
                Error::InvalidInput("trial outcomes have different shapes".into())
            })?;
            cell.push(s, k, zeta_det.map(|z| z[si]), p_t);
            idx += 1;
        }
    }
    if idx != acc.cells.len() {
        return Err(Error::InvalidInput("trial outcomes have different shapes".into()));
    }
    Ok(())
}

fn finish_run(acc: &RunAccumulator, template: &TrialOutcome, with_det: bool) -> Vec<EmpiricalTerms> {
    let mut out = Vec::with_capacity(acc.cells.len());
    let mut idx = 0;
    for s in &template.symbols {
        for k in 0..s.coefficients.nrows() {
            out.push(acc.cells[idx].finish(k, s.n, with_det));
            idx += 1;
        }
    }
    out
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs `settings.trials` trials in parallel and reduces them deterministically.
///
/// Trials are folded in fixed-size chunks in trial order and the chunk results
/// merged pairwise, so the output does not depend on the number of workers.
pub fn run_empirical(sc: &Scenario, settings: &McSettings) -> Result<Vec<EmpiricalTerms>> {
    if settings.trials < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least two trials, got {}",
            settings.trials
        )));
    }
    let ctx = TrialContext::new(sc, &settings.symbols)?;
    let cfg = &sc.config;
    let zeta_det = settings
        .symbols
        .iter()
        .map(|&n| analytics::zeta_sq_deterministic(&sc.stats, &sc.aging, n, cfg.n_t, sc.m(), cfg.p_t))
        .collect::<Result<Vec<_>>>()?;
    // shifts come from the closed forms so the raw moments stay well conditioned
    let mut cells = Vec::new();
    for (si, &n) in settings.symbols.iter().enumerate() {
        for k in 0..cfg.k_ue {
            let i0 = analytics::term_i0(&sc.stats[k], &sc.aging, n, cfg.n_t, sc.m(), zeta_det[si]);
            let shift = Complex64::new(i0.sqrt(), 0.0);
            cells.push(TermAccumulator::new(shift, shift));
        }
    }
    let template = RunAccumulator { cells };
    let n_chunks = settings.trials.div_ceil(CHUNK);
    let parts = with_pool(settings.workers, || {
        (0..n_chunks)
            .into_par_iter()
            .map(|c| -> Result<RunAccumulator> {
                let mut acc = template.clone();
                let start = c * CHUNK;
                let end = ((c + 1) * CHUNK).min(settings.trials);
                for t in start..end {
                    let o = run_trial(&ctx, settings.seed, t as u64)?;
                    fold_outcome(&mut acc, &o, Some(&zeta_det), cfg.p_t)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let acc = merge_pairwise(parts).expect("at least one chunk");
    let shape = TrialOutcome {
        trial: 0,
        symbols: settings
            .symbols
            .iter()
            .map(|&n| SymbolOutcome {
                n,
                zeta_sq: 0.0,
                coefficients: DMatrix::zeros(cfg.k_ue, cfg.k_ue),
                emi: Vec::new(),
                desired_error: Vec::new(),
                interference_error: Vec::new(),
            })
            .collect(),
    };
    Ok(finish_run(&acc, &shape, true))
}

/// Basis of an empirical value in a comparison row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    /// Per-realization precoder normalization, as simulated.
    PerRealization,
    /// Coefficients rescaled to the deterministic normalization.
    DeterministicZeta,
    /// Only the error part of the coefficients.
    ErrorOnly,
}

impl Basis {
    pub fn name(self) -> &'static str {
        match self {
            Basis::PerRealization => "per_realization",
            Basis::DeterministicZeta => "deterministic_zeta",
            Basis::ErrorOnly => "error_only",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TermComparison {
    pub variant: String,
    pub term: &'static str,
    pub basis: Basis,
    pub k: usize,
    pub n: usize,
    pub analytic: f64,
    pub empirical: f64,
    pub std_err: f64,
    pub rel_gap: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<TermComparison>,
    pub trials: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub config_hash: String,
}

impl ComparisonReport {
    /// True when every per-realization row of the primary variant passes.
    pub fn passed(&self) -> bool {
        self.rows
            .iter()
            .filter(|r| r.variant == "primary" && r.basis == Basis::PerRealization)
            .all(|r| r.pass)
    }

    /// Largest relative gap of a term over the primary per-realization rows.
    pub fn worst_gap(&self, term: &str) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.variant == "primary" && r.basis == Basis::PerRealization && r.term == term)
            .map(|r| r.rel_gap.abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "variant",
            "term",
            "basis",
            "k",
            "n",
            "analytic",
            "empirical",
            "std_err",
            "rel_gap",
            "tolerance",
            "pass",
            "trials",
            "seed",
            "config_hash",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.variant.clone(),
                r.term.to_string(),
                r.basis.name().to_string(),
                r.k.to_string(),
                r.n.to_string(),
                format!("{:e}", r.analytic),
                format!("{:e}", r.empirical),
                format!("{:e}", r.std_err),
                format!("{:e}", r.rel_gap),
                format!("{:e}", self.tolerance),
                r.pass.to_string(),
                self.trials.to_string(),
                self.seed.to_string(),
                self.config_hash.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn row(variant: &str, term: &'static str, basis: Basis, k: usize, n: usize, analytic: f64, e: TermEstimate, tol: f64) -> TermComparison {
    let rel_gap = if analytic == 0.0 {
        if e.value == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (e.value - analytic) / analytic
    };
    TermComparison {
        variant: variant.to_string(),
        term,
        basis,
        k,
        n,
        analytic,
        empirical: e.value,
        std_err: e.std_err,
        rel_gap,
        pass: rel_gap.abs() <= tol,
    }
}

/// Compares closed-form terms with their sample estimates.
pub fn compare(analytic: &SinrBreakdown, empirical: &EmpiricalTerms, tolerance: f64) -> Result<Vec<TermComparison>> {
    compare_variant("primary", analytic, empirical, tolerance)
}

fn compare_variant(
    variant: &str,
    analytic: &SinrBreakdown,
    empirical: &EmpiricalTerms,
    tolerance: f64,
) -> Result<Vec<TermComparison>> {
    if analytic.k != empirical.k || analytic.n != empirical.n {
        return Err(Error::InvalidInput(format!(
            "analytic (k={}, n={}) does not match empirical (k={}, n={})",
            analytic.k, analytic.n, empirical.k, empirical.n
        )));
    }
    let (k, n) = (analytic.k, analytic.n);
    let values = [analytic.i0, analytic.i1, analytic.i2, analytic.i3];
    let names = ["I0", "I1", "I2", "I3"];
    let mut rows = Vec::new();
    for t in 0..4 {
        rows.push(row(variant, names[t], Basis::PerRealization, k, n, values[t], empirical.terms[t], tolerance));
    }
    if let Some(det) = &empirical.deterministic {
        for t in 0..4 {
            rows.push(row(variant, names[t], Basis::DeterministicZeta, k, n, values[t], det[t], tolerance));
        }
    }
    rows.push(row(variant, "I1", Basis::ErrorOnly, k, n, analytic.i1, empirical.error_only[0], tolerance));
    rows.push(row(variant, "I2", Basis::ErrorOnly, k, n, analytic.i2, empirical.error_only[1], tolerance));
    Ok(rows)
}

/// Runs the simulation and compares against the closed forms, including the
/// alternative cross-term pairing and third-error-term scaling.
pub fn validate(sc: &Scenario, settings: &McSettings, tolerance: f64) -> Result<ComparisonReport> {
    let empirical = run_empirical(sc, settings)?;
    let mut variants = vec![("primary".to_string(), sc.clone())];
    let mut alt = sc.config.clone();
    alt.i2_pairing = match sc.config.i2_pairing {
        I2Pairing::Printed => I2Pairing::Symmetric,
        I2Pairing::Symmetric => I2Pairing::Printed,
    };
    variants.push((
        format!("i2_{}", if alt.i2_pairing == I2Pairing::Printed { "printed" } else { "symmetric" }),
        Scenario::new(alt)?,
    ));
    let mut alt = sc.config.clone();
    alt.sigma_e3_scaling = match sc.config.sigma_e3_scaling {
        SigmaE3Scaling::Pilot => SigmaE3Scaling::Literal,
        SigmaE3Scaling::Literal => SigmaE3Scaling::Pilot,
    };
    variants.push((
        format!(
            "sigma_e3_{}",
            if alt.sigma_e3_scaling == SigmaE3Scaling::Pilot { "pilot" } else { "literal" }
        ),
        Scenario::new(alt)?,
    ));
    let mut rows = Vec::new();
    for (name, variant) in &variants {
        for e in &empirical {
            let a = analytics::breakdown(variant, e.k, e.n)?;
            rows.extend(compare_variant(name, &a, e, tolerance)?);
        }
    }
    Ok(ComparisonReport {
        rows,
        trials: settings.trials,
        seed: settings.seed,
        tolerance,
        config_hash: sc.config.hash(),
    })
}
