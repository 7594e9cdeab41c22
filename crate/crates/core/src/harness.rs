//! Seeded Monte Carlo experiments: empirical size and power of the identity
//! test, moments of the centered spectral statistics, and Q-Q data.
//!
//! Replication `r` draws its data from stream `(seed, r)` and streams it
//! through the Gram accumulator, so `p × n` is never stored and results are
//! bitwise identical for any worker count.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::correction::{self, CorrectionOptions, DEFAULT_SERIES_TERMS};
use crate::data_gen::{covariance_factor, CovarianceFactor, CovarianceSpec, DistributionSpec, RowStream};
use crate::error::{Error, Result};
use crate::identity_test;
use crate::semicircle::{self, DEFAULT_PSI_NODES};
use crate::spectra::{self, GramAccumulator};
use crate::test_function::TestFunction;

/// Refuse experiments above this many `n·p·reps` unless forced.
pub const COST_LIMIT: f64 = 2e11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    /// Identity-test statistic `L_n`.
    Ln,
    /// Contour-centered statistic with the plain correction.
    Gn,
    /// Contour-centered statistic with the calibrated correction.
    GnCalib,
    /// Explicitly centered statistic for bounded `n³/p`.
    Qn,
}

/// Where the fourth moment used inside each replication comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nu4Mode {
    /// The exact value of the entry law.
    Known,
    /// The plug-in `(1/np) Σ Y⁴` of each replicate.
    Estimated,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub dist: DistributionSpec,
    pub n: usize,
    pub p: usize,
    pub reps: usize,
    pub seed: u64,
    pub alpha: f64,
    pub cov: CovarianceSpec,
    pub statistic: StatisticKind,
    pub f: TestFunction,
    pub correction: CorrectionOptions,
    pub nu4_mode: Nu4Mode,
    /// Thread count; `None` lets the pool decide. Does not affect results.
    #[serde(skip)]
    pub workers: Option<usize>,
    /// Bypass [`COST_LIMIT`].
    #[serde(skip)]
    pub force: bool,
}

impl ExperimentConfig {
    /// `L_n` under the identity with 1000 replications at the 5% level.
    pub fn new(dist: DistributionSpec, n: usize, p: usize) -> Self {
        Self {
            dist,
            n,
            p,
            reps: 1000,
            seed: 0,
            alpha: 0.05,
            cov: CovarianceSpec::Identity,
            statistic: StatisticKind::Ln,
            f: TestFunction::builtin("xsq").expect("builtin"),
            correction: CorrectionOptions::default(),
            nu4_mode: Nu4Mode::Known,
            workers: None,
            force: false,
        }
    }

    /// Multiply-accumulate count used by the guardrail, `n · p · reps`.
    pub fn cost(&self) -> f64 {
        self.n as f64 * self.p as f64 * self.reps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidDimension { p: self.p, n: self.n });
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        identity_test::critical_values(self.alpha)?;
        self.correction.validate()?;
        if !self.force && self.cost() > COST_LIMIT {
            return Err(Error::Guardrail { cost: self.cost(), limit: COST_LIMIT });
        }
        Ok(())
    }

    fn effective_correction(&self) -> CorrectionOptions {
        let mut opts = self.correction;
        match self.statistic {
            StatisticKind::Gn => opts.calibrated = false,
            StatisticKind::GnCalib => opts.calibrated = true,
            _ => {}
        }
        opts
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub config: ExperimentConfig,
    /// Fraction of standardized values in the two-sided rejection region.
    pub empirical_rate: f64,
    /// Mean and sd of `(value - center) / scale`.
    pub sample_mean: f64,
    pub sample_sd: f64,
    /// Mean and sd of the statistic itself.
    pub raw_mean: f64,
    pub raw_sd: f64,
    /// Limiting mean and standard deviation used for standardization.
    pub center: f64,
    pub scale: f64,
    pub rep_values: Vec<f64>,
    /// Seconds; kept out of serialized output so reports are reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

impl McReport {
    pub fn standardized_values(&self) -> Vec<f64> {
        self.rep_values.iter().map(|v| (v - self.center) / self.scale).collect()
    }
}

/// Everything about an experiment that does not change between replications.
struct Plan {
    factor: CovarianceFactor,
    opts: CorrectionOptions,
    /// `n ∫ f dF`.
    centering: f64,
    /// Contour term when `ν₄` is fixed.
    fixed_correction: Option<f64>,
    qn_correction: f64,
}

impl Plan {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let factor = covariance_factor(&cfg.cov, cfg.p)?;
        let opts = cfg.effective_correction();
        let lss_stat = !matches!(cfg.statistic, StatisticKind::Ln);
        let centering = if lss_stat { cfg.n as f64 * semicircle::semicircle_integral(&cfg.f)? } else { 0.0 };
        let fixed_correction = match (cfg.statistic, cfg.nu4_mode) {
            (StatisticKind::Gn | StatisticKind::GnCalib, Nu4Mode::Known) => {
                Some(correction::mean_correction(&cfg.f, cfg.n, cfg.p, cfg.dist.nu4, &opts)?.value)
            }
            _ => None,
        };
        let qn_correction = if matches!(cfg.statistic, StatisticKind::Qn) {
            ((cfg.n as f64).powi(3) / cfg.p as f64).sqrt() * semicircle::psi_k(&cfg.f, 3, DEFAULT_PSI_NODES)?
        } else {
            0.0
        };
        Ok(Self { factor, opts, centering, fixed_correction, qn_correction })
    }

    /// Limiting center and scale of the statistic.
    fn standardization(&self, cfg: &ExperimentConfig) -> Result<(f64, f64)> {
        if matches!(cfg.statistic, StatisticKind::Ln) {
            return Ok((0.0, 1.0));
        }
        let var = correction::asymptotic_cov_series(&cfg.f, &cfg.f, cfg.dist.nu4, DEFAULT_SERIES_TERMS)?.value;
        if !(var > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "test function `{}` has zero limiting variance",
                cfg.f.label()
            )));
        }
        let center = match cfg.statistic {
            StatisticKind::Qn => correction::asymptotic_mean(&cfg.f, cfg.dist.nu4)?,
            _ => 0.0,
        };
        Ok((center, var.sqrt()))
    }

    fn replicate(&self, cfg: &ExperimentConfig, r: u64) -> Result<f64> {
        let mut stream = RowStream::new(&cfg.dist, self.factor.clone(), cfg.n, cfg.seed, r)?;
        let mut acc = GramAccumulator::new(cfg.n);
        acc.consume(&mut stream);
        let a = acc.normalized();
        let nu4 = match cfg.nu4_mode {
            Nu4Mode::Known => cfg.dist.nu4,
            Nu4Mode::Estimated => acc.mean_fourth_power(),
        };
        if matches!(cfg.statistic, StatisticKind::Ln) {
            return Ok(identity_test::l_n_from_matrix(&a, nu4));
        }
        let spectrum = spectra::eigenvalues(&a)?;
        let raw = spectra::lss(&spectrum, &cfg.f)? - self.centering;
        Ok(match cfg.statistic {
            StatisticKind::Qn => raw - self.qn_correction,
            _ => {
                let corr = match self.fixed_correction {
                    Some(c) => c,
                    None => correction::mean_correction(&cfg.f, cfg.n, cfg.p, nu4, &self.opts)?.value,
                };
                raw - corr
            }
        })
    }
}

/// Runs every replication of `cfg`. `progress`, if given, receives the
/// number of finished replications after each one.
pub fn run_experiment(cfg: &ExperimentConfig, progress: Option<&(dyn Fn(usize) + Sync)>) -> Result<McReport> {
    cfg.validate()?;
    let started = Clock::now();
    let plan = Plan::new(cfg)?;
    let (center, scale) = plan.standardization(cfg)?;
    let rep_values = run_indexed(cfg.reps, cfg.workers, progress, |r| plan.replicate(cfg, r as u64))?;

    let (lo, hi) = identity_test::critical_values(cfg.alpha)?;
    let standardized: Vec<f64> = rep_values.iter().map(|v| (v - center) / scale).collect();
    let rejections = standardized.iter().filter(|&&v| v <= lo || v > hi).count();
    let (sample_mean, sample_sd) = mean_sd(&standardized);
    let (raw_mean, raw_sd) = mean_sd(&rep_values);
    Ok(McReport {
        config: cfg.clone(),
        empirical_rate: rejections as f64 / cfg.reps as f64,
        sample_mean,
        sample_sd,
        raw_mean,
        raw_sd,
        center,
        scale,
        rep_values,
        wall_time: started.elapsed(),
    })
}

/// Empirical size: the identity design, rejection rate under the null.
pub fn run_size(cfg: &ExperimentConfig, progress: Option<&(dyn Fn(usize) + Sync)>) -> Result<McReport> {
    if !cfg.cov.is_identity() {
        return Err(Error::InvalidParameter("size experiments use the identity covariance".into()));
    }
    run_experiment(cfg, progress)
}

/// Empirical power: the same machinery with data drawn under an alternative.
pub fn run_power(cfg: &ExperimentConfig, progress: Option<&(dyn Fn(usize) + Sync)>) -> Result<McReport> {
    if cfg.cov.is_identity() {
        return Err(Error::InvalidParameter("power experiments need a non-identity covariance".into()));
    }
    run_experiment(cfg, progress)
}

/// Moments of the calibrated statistic divided by its limiting standard deviation.
pub fn run_calibrated_moments(cfg: &ExperimentConfig, progress: Option<&(dyn Fn(usize) + Sync)>) -> Result<McReport> {
    if cfg.statistic != StatisticKind::GnCalib {
        return Err(Error::InvalidParameter("calibrated moments need the gn-calib statistic".into()));
    }
    run_experiment(cfg, progress)
}

/// Sample mean and `n - 1` standard deviation (zero for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let len = values.len();
    if len == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / len as f64;
    if len == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (len - 1) as f64).sqrt())
}

#[cfg(feature = "parallel")]
fn run_indexed(
    reps: usize,
    workers: Option<usize>,
    progress: Option<&(dyn Fn(usize) + Sync)>,
    body: impl Fn(usize) -> Result<f64> + Sync,
) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    let done = AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..reps)
            .into_par_iter()
            .map(|r| {
                let v = body(r);
                if let Some(cb) = progress {
                    cb(done.fetch_add(1, Ordering::Relaxed) + 1);
                }
                v
            })
            .collect()
    })
}

#[cfg(not(feature = "parallel"))]
fn run_indexed(
    reps: usize,
    _workers: Option<usize>,
    progress: Option<&(dyn Fn(usize) + Sync)>,
    body: impl Fn(usize) -> Result<f64> + Sync,
) -> Result<Vec<f64>> {
    (0..reps)
        .map(|r| {
            let v = body(r);
            if let Some(cb) = progress {
                cb(r + 1);
            }
            v
        })
        .collect()
}

#[cfg(not(target_arch = "wasm32"))]
struct Clock(std::time::Instant);

#[cfg(not(target_arch = "wasm32"))]
impl Clock {
    fn now() -> Self {
        Self(std::time::Instant::now())
    }
    fn elapsed(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

// std::time::Instant is unavailable in the browser.
#[cfg(target_arch = "wasm32")]
struct Clock;

#[cfg(target_arch = "wasm32")]
impl Clock {
    fn now() -> Self {
        Self
    }
    fn elapsed(&self) -> f64 {
        0.0
    }
}

/// One point of a normal Q-Q plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPair {
    pub theoretical: f64,
    pub empirical: f64,
}

/// Q-Q pairs at levels `(k - ½)/grid`, `k = 1..grid`.
///
/// The `i`-th order statistic (1-based) sits at level `(i - ½)/N`; other
/// levels interpolate linearly between neighbours and clamp at the ends.
pub fn qq_pairs(values: &[f64], grid: usize) -> Result<Vec<QqPair>> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if grid == 0 {
        return Err(Error::InvalidParameter("grid must be at least 1".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let len = sorted.len();
    Ok((1..=grid)
        .map(|k| {
            let u = (k as f64 - 0.5) / grid as f64;
            let pos = (u * len as f64 - 0.5).clamp(0.0, (len - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            let frac = pos - lo as f64;
            let empirical = if frac == 0.0 { sorted[lo] } else { sorted[lo] + frac * (sorted[hi] - sorted[lo]) };
            QqPair { theoretical: identity_test::normal_quantile(u), empirical }
        })
        .collect())
}

/// Q-Q pairs of a report's standardized values.
pub fn qq_export(report: &McReport, grid: usize) -> Result<Vec<QqPair>> {
    qq_pairs(&report.standardized_values(), grid)
}

pub fn qq_csv(pairs: &[QqPair]) -> String {
    let mut out = String::from("theoretical,empirical\n");
    for q in pairs {
        let _ = writeln!(out, "{:?},{:?}", q.theoretical, q.empirical);
    }
    out
}

/// Empirical rates laid out with one row per `p` and one column per `n`.
pub fn table_csv(reports: &[McReport]) -> String {
    let mut ns: Vec<usize> = reports.iter().map(|r| r.config.n).collect();
    let mut ps: Vec<usize> = reports.iter().map(|r| r.config.p).collect();
    ns.sort_unstable();
    ns.dedup();
    ps.sort_unstable();
    ps.dedup();
    let mut out = String::from("p");
    for n in &ns {
        let _ = write!(out, ",n={n}");
    }
    out.push('\n');
    for p in &ps {
        let _ = write!(out, "{p}");
        for n in &ns {
            match reports.iter().find(|r| r.config.n == *n && r.config.p == *p) {
                Some(r) => {
                    let _ = write!(out, ",{:.3}", r.empirical_rate);
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}
