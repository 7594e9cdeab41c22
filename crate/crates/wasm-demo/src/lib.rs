//! Browser bindings for the static demo in `www/`.
//!
//! Each export takes plain numbers and strings and returns a JSON document,
//! so the page needs no generated type glue beyond `wasm-bindgen`'s.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use lss_clt::correction::{self, CorrectionOptions};
use lss_clt::data_gen::{self, CovarianceSpec, DistributionSpec};
use lss_clt::harness::{self, ExperimentConfig, QqPair};
use lss_clt::semicircle;
use lss_clt::spectra;
use lss_clt::TestFunction;

/// Largest `n·p·reps` the page will run; the tab stays responsive below it.
pub const DEMO_COST_LIMIT: f64 = 4e8;

#[derive(Debug, Serialize)]
pub struct EsdView {
    pub n: usize,
    pub p: usize,
    pub eigenvalues: Vec<f64>,
    /// Bin edges over `[-lim, lim]` and the fraction of eigenvalues per unit length.
    pub edges: Vec<f64>,
    pub heights: Vec<f64>,
    /// `(x, ρ(x))` on a fine grid.
    pub density: Vec<(f64, f64)>,
    pub kolmogorov: f64,
}

/// Eigenvalues of one normalized matrix, binned, next to the semicircle.
pub fn esd(dist: &str, n: usize, p: usize, seed: u64, bins: usize) -> Result<EsdView, String> {
    let dist: DistributionSpec = dist.parse().map_err(err)?;
    if bins == 0 {
        return Err("need at least one bin".into());
    }
    check_cost(n as f64 * p as f64)?;
    let x = data_gen::sample_matrix(&dist, p, n, seed).map_err(err)?;
    let s = spectra::eigenvalues(&spectra::normalized_gram(&x)).map_err(err)?;
    let lim = s.values().iter().fold(2.2f64, |m, v| m.max(v.abs()));
    let width = 2.0 * lim / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in s.values() {
        let k = (((v + lim) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let edges = (0..=bins).map(|k| -lim + k as f64 * width).collect();
    let heights = counts.iter().map(|&c| c as f64 / (n as f64 * width)).collect();
    let density = (0..=400)
        .map(|k| {
            let t = -lim + 2.0 * lim * k as f64 / 400.0;
            (t, semicircle::density(t))
        })
        .collect();
    Ok(EsdView { n, p, kolmogorov: s.kolmogorov_distance(), eigenvalues: s.values().to_vec(), edges, heights, density })
}

#[derive(Debug, Serialize)]
pub struct CorrectionRow {
    pub p: usize,
    pub plain: Option<f64>,
    pub calibrated: Option<f64>,
    pub explicit: f64,
}

#[derive(Debug, Serialize)]
pub struct CorrectionCurve {
    pub function: String,
    pub n: usize,
    pub nu4: f64,
    pub limit_mean: f64,
    pub rows: Vec<CorrectionRow>,
}

/// Mean corrections for `p = n^e` over `points` exponents in `[e_lo, e_hi]`.
/// Contour values that fail are reported as `null`.
pub fn correction_curve(
    f: &str,
    n: usize,
    nu4: f64,
    e_lo: f64,
    e_hi: f64,
    points: usize,
) -> Result<CorrectionCurve, String> {
    let f: TestFunction = f.parse().map_err(err)?;
    if n == 0 || points < 2 || !(e_lo > 1.0 && e_hi > e_lo && e_hi <= 6.0) || !nu4.is_finite() {
        return Err("need n ≥ 1, at least two points and 1 < e_lo < e_hi ≤ 6".into());
    }
    let psi3 = semicircle::psi_k(&f, 3, semicircle::DEFAULT_PSI_NODES).map_err(err)?;
    let contour = |p, calibrated| {
        let opts = CorrectionOptions { calibrated, ..Default::default() };
        correction::mean_correction(&f, n, p, nu4, &opts).ok().map(|c| c.value)
    };
    let mut rows: Vec<CorrectionRow> = Vec::with_capacity(points);
    for k in 0..points {
        let e = e_lo + (e_hi - e_lo) * k as f64 / (points - 1) as f64;
        let p = (n as f64).powf(e).round() as usize;
        if rows.last().is_some_and(|r| r.p == p) {
            continue;
        }
        let explicit = ((n as f64).powi(3) / p as f64).sqrt() * psi3;
        rows.push(CorrectionRow { p, plain: contour(p, false), calibrated: contour(p, true), explicit });
    }
    Ok(CorrectionCurve {
        function: f.label().to_owned(),
        n,
        nu4,
        limit_mean: correction::asymptotic_mean(&f, nu4).map_err(err)?,
        rows,
    })
}

#[derive(Debug, Serialize)]
pub struct SizePowerView {
    pub rate: f64,
    pub mean: f64,
    pub sd: f64,
    pub reps: usize,
    pub values: Vec<f64>,
    pub qq: Vec<QqPair>,
}

/// Rejection rate of `L_n` under `cov` with Q-Q pairs of the replicates.
pub fn size_power(
    dist: &str,
    cov: &str,
    n: usize,
    p: usize,
    reps: usize,
    seed: u64,
    alpha: f64,
) -> Result<SizePowerView, String> {
    let mut cfg = ExperimentConfig::new(dist.parse().map_err(err)?, n, p);
    cfg.cov = cov.parse::<CovarianceSpec>().map_err(err)?;
    cfg.reps = reps;
    cfg.seed = seed;
    cfg.alpha = alpha;
    cfg.validate().map_err(err)?;
    check_cost(cfg.cost())?;
    let r = harness::run_experiment(&cfg, None).map_err(err)?;
    let qq = harness::qq_export(&r, reps.clamp(1, 200)).map_err(err)?;
    Ok(SizePowerView { rate: r.empirical_rate, mean: r.sample_mean, sd: r.sample_sd, reps, qq, values: r.rep_values })
}

fn check_cost(cost: f64) -> Result<(), String> {
    if cost > DEMO_COST_LIMIT {
        return Err(format!("{cost:.2e} multiply-adds is too much for the page (limit {DEMO_COST_LIMIT:.0e})"));
    }
    Ok(())
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = esd)]
pub fn esd_js(dist: &str, n: usize, p: usize, seed: u32, bins: usize) -> Result<String, JsError> {
    to_js(esd(dist, n, p, seed.into(), bins))
}

#[wasm_bindgen(js_name = correctionCurve)]
pub fn correction_curve_js(f: &str, n: usize, nu4: f64, e_lo: f64, e_hi: f64, points: usize) -> Result<String, JsError> {
    to_js(correction_curve(f, n, nu4, e_lo, e_hi, points))
}

#[wasm_bindgen(js_name = sizePower)]
pub fn size_power_js(
    dist: &str,
    cov: &str,
    n: usize,
    p: usize,
    reps: usize,
    seed: u32,
    alpha: f64,
) -> Result<String, JsError> {
    to_js(size_power(dist, cov, n, p, reps, seed.into(), alpha))
}
