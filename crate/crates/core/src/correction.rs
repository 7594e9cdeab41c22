//! Centering of linear spectral statistics and their limiting law.
//!
//! For `f` analytic near `[-2, 2]` the centered statistic is
//!
//! ```text
//! G_n(f) = Σ_j f(λ_j) - n ∫ f dF  -  (n / 2πi) ∮_{|m|=ρ} f(-m - 1/m) X_n(m) (1 - m²)/m² dm
//! ```
//!
//! where `X_n(m)` is the small root of `A x² + B x + C = 0` with
//!
//! ```text
//! A = m - r (1 + m²)
//! B = m² - 1 - r m (1 + 2m²)
//! C = (m³/n) (m²/(1 - m²) + ν₄ - 2) - r m⁴                       (plain)
//! C = (m³/n) (ν₄ - 2 + m²/(1 - m²) - 2 (ν₄ - 1) m r) - r m⁴       (calibrated)
//! ```
//!
//! and `r = sqrt(n/p)`. The contour is traversed once, `θ ∈ [0, 2π)`; a
//! doubled range `[-2π, 2π]` would count the closed curve twice. The integral
//! does not depend on `ρ ∈ (0, 1)` because the integrand is analytic in the
//! punctured disk; the property tests check this directly.
//!
//! When `n³/p` stays bounded the contour term reduces to
//! `EX(f) + sqrt(n³/p) Ψ_3(f)`, which gives the explicit statistic `Q_n(f)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::semicircle::{self, DEFAULT_PSI_NODES};
use crate::spectra::{self, Spectrum};
use crate::test_function::TestFunction;

/// Truncation point of the covariance series used for standardization.
pub const DEFAULT_SERIES_TERMS: usize = 200;
/// Gauss–Legendre order for the double-integral covariance.
pub const DEFAULT_COV_NODES: usize = 400;

/// Which root of the quadratic plays `X_n(m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootRule {
    /// The root of smaller modulus.
    MinModulus,
    /// `(-B + sqrt(B² - 4AC)) / 2A` with the square root's imaginary part
    /// taking the sign of `Im B`.
    ImagSign,
}

impl FromStr for RootRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "min-modulus" | "min" => Ok(Self::MinModulus),
            "imag-sign" | "sign" => Ok(Self::ImagSign),
            other => Err(Error::InvalidParameter(format!(
                "unknown root rule `{other}` (expected min-modulus or imag-sign)"
            ))),
        }
    }
}

impl fmt::Display for RootRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MinModulus => "min-modulus",
            Self::ImagSign => "imag-sign",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionOptions {
    /// Contour radius in `(0, 1)`.
    pub rho: f64,
    /// Trapezoid nodes on the circle, at least 16.
    pub nodes: usize,
    pub calibrated: bool,
    pub root_rule: RootRule,
}

impl Default for CorrectionOptions {
    fn default() -> Self {
        Self { rho: 0.5, nodes: 512, calibrated: true, root_rule: RootRule::MinModulus }
    }
}

impl CorrectionOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidParameter(format!("contour radius must lie in (0,1), got {}", self.rho)));
        }
        if self.nodes < 16 {
            return Err(Error::InvalidParameter(format!("need at least 16 contour nodes, got {}", self.nodes)));
        }
        Ok(())
    }
}

/// Coefficients of `A x² + B x + C = 0` at one contour point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticCoeffs {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub n: usize,
    pub p: usize,
    pub nu4: f64,
}

pub fn quadratic_coeffs(m: Complex64, n: usize, p: usize, nu4: f64, calibrated: bool) -> Result<QuadraticCoeffs> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidDimension { p, n });
    }
    let m2 = m * m;
    let one_minus = 1.0 - m2;
    if one_minus.norm() < 1e-15 {
        return Err(Error::Singularity(format!("m = {m} is a pole of C")));
    }
    let r = (n as f64 / p as f64).sqrt();
    let m3 = m2 * m;
    let a = m - r * (1.0 + m2);
    let b = m2 - 1.0 - r * m * (1.0 + 2.0 * m2);
    let bracket = if calibrated {
        nu4 - 2.0 + m2 / one_minus - 2.0 * (nu4 - 1.0) * m * r
    } else {
        m2 / one_minus + (nu4 - 2.0)
    };
    let c = m3 / n as f64 * bracket - r * m2 * m2;
    Ok(QuadraticCoeffs { a, b, c, n, p, nu4 })
}

/// A selected root plus the flags raised while selecting it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootChoice {
    pub value: Complex64,
    /// Moduli of the two roots within 0.1% of each other.
    pub near_tie: bool,
    /// `Im B` was below `1e-14`, so the sign rule fell back to the principal root.
    pub real_b: bool,
    /// The root not selected (infinite when the equation is linear).
    pub other: Complex64,
}

pub fn correction_root(q: &QuadraticCoeffs, rule: RootRule) -> Result<RootChoice> {
    let QuadraticCoeffs { a, b, c, .. } = *q;
    if a == Complex64::new(0.0, 0.0) {
        if b == Complex64::new(0.0, 0.0) {
            return Err(Error::DegenerateQuadratic);
        }
        return Ok(RootChoice { value: -c / b, near_tie: false, real_b: false, other: Complex64::new(f64::INFINITY, 0.0) });
    }
    let disc = (b * b - 4.0 * a * c).sqrt();
    // Roots via the cancellation-free pair q/a and c/q.
    let s = if (b.conj() * disc).re < 0.0 { -disc } else { disc };
    let big_q = -(b + s) / 2.0;
    let r1 = big_q / a;
    let r2 = if big_q == Complex64::new(0.0, 0.0) { r1 } else { c / big_q };
    let (n1, n2) = (r1.norm(), r2.norm());
    let near_tie = n1.max(n2) > 0.0 && (n1.min(n2) / n1.max(n2) - 1.0).abs() < 1e-3;

    match rule {
        RootRule::MinModulus => {
            let (value, other) = if n2 <= n1 { (r2, r1) } else { (r1, r2) };
            Ok(RootChoice { value, near_tie, real_b: false, other })
        }
        RootRule::ImagSign => {
            let real_b = b.im.abs() <= 1e-14;
            let sq = if !real_b && disc.im.signum() != b.im.signum() { -disc } else { disc };
            // (-b + sq)/2a = -2c/(b + sq); use whichever denominator is larger
            let plus = b + sq;
            let minus = sq - b;
            let value = if plus.norm() >= minus.norm() {
                if plus == Complex64::new(0.0, 0.0) {
                    Complex64::new(0.0, 0.0)
                } else {
                    -2.0 * c / plus
                }
            } else {
                minus / (2.0 * a)
            };
            let other = if (value - r1).norm() <= (value - r2).norm() { r2 } else { r1 };
            Ok(RootChoice { value, near_tie, real_b, other })
        }
    }
}

/// Value of the contour term and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContourIntegral {
    pub value: f64,
    pub imag_residual: f64,
    pub warnings: Vec<Warning>,
}

/// `(n / 2πi) ∮_{|m|=ρ} f(-m - 1/m) X_n(m) (1 - m²)/m² dm`, the deterministic
/// part subtracted from the raw statistic.
///
/// With `m = ρe^{iθ}` the integral becomes `(n/2π) ∫ f(-m-1/m) X_n(m) (1-m²)/m dθ`,
/// evaluated by the trapezoid rule (spectrally accurate for periodic analytic
/// integrands). The imaginary part must vanish up to `1e-6 (1 + |value|)`.
pub fn mean_correction(
    f: &TestFunction,
    n: usize,
    p: usize,
    nu4: f64,
    opts: &CorrectionOptions,
) -> Result<ContourIntegral> {
    opts.validate()?;
    if n == 0 || p == 0 {
        return Err(Error::InvalidDimension { p, n });
    }
    let nodes = opts.nodes;
    let mut sum = NeumaierSum::default();
    let mut sum_im = NeumaierSum::default();
    // the even-indexed nodes alone form the rule with half as many points
    let mut half = NeumaierSum::default();
    let mut roots = Vec::with_capacity(nodes);
    let mut others = Vec::with_capacity(nodes);
    let (mut ties, mut real_bs) = (0usize, 0usize);
    for j in 0..nodes {
        let theta = 2.0 * PI * j as f64 / nodes as f64;
        let m = Complex64::from_polar(opts.rho, theta);
        let q = quadratic_coeffs(m, n, p, nu4, opts.calibrated)?;
        let root = correction_root(&q, opts.root_rule)?;
        ties += root.near_tie as usize;
        real_bs += root.real_b as usize;
        roots.push(root.value);
        others.push(root.other);
        let fw = f.try_eval_complex(-m - m.inv())?;
        let term = fw * root.value * (1.0 - m * m) / m;
        sum.add(term.re);
        sum_im.add(term.im);
        if j % 2 == 0 {
            half.add(term.re);
        }
    }
    let scale = n as f64 / nodes as f64;
    let value = sum.total() * scale;
    let imag_residual = (sum_im.total() * scale).abs();
    let tolerance = 1e-6 * (1.0 + value.abs());
    if !(imag_residual <= tolerance) {
        return Err(Error::ContourAccuracy { residual: imag_residual, tolerance });
    }

    let mut warnings = Vec::new();
    if let Some(w) = discontinuity(&roots) {
        warnings.push(w);
    }
    if let Some(w) = branch_switches(&roots, &others) {
        warnings.push(w);
    }
    // Spectral convergence makes the two rules agree to rounding for an
    // integrand analytic near the circle; a gap means a singularity (a pole or
    // a branch point of the discriminant) sits close to the contour.
    let half_value = 2.0 * half.total() * scale;
    if (value - half_value).abs() > 1e-9 * value.abs().max(1e-3) {
        warnings.push(Warning::ContourResolution { value, half_nodes: half_value });
    }
    if ties > 0 {
        warnings.push(Warning::RootNearTie { nodes: ties });
    }
    if real_bs > 0 {
        warnings.push(Warning::RealLinearCoefficient { nodes: real_bs });
    }
    Ok(ContourIntegral { value, imag_residual, warnings })
}

/// Follows both roots around the contour: the selection switched branches
/// between nodes `j - 1` and `j` if the root picked at `j` lies closer to the
/// root rejected at `j - 1` than to the one picked there. This catches the
/// moduli of the two roots crossing between nodes, which the jump test
/// cannot see when the roots are close.
fn branch_switches(roots: &[Complex64], others: &[Complex64]) -> Option<Warning> {
    let len = roots.len();
    let switched: Vec<usize> = (0..len)
        .filter(|&j| {
            let prev = (j + len - 1) % len;
            (roots[j] - others[prev]).norm() < (roots[j] - roots[prev]).norm()
        })
        .collect();
    let first = *switched.first()?;
    Some(Warning::BranchSwitch { nodes: switched.len(), first })
}

/// Flags a node whose jump to its neighbour exceeds ten times the median jump
/// and is not matched by the jump on either side. The second condition keeps
/// a root that moves quickly but smoothly, as near `m = -ρ` for larger `ρ`,
/// from being reported as a branch switch.
fn discontinuity(roots: &[Complex64]) -> Option<Warning> {
    let len = roots.len();
    let jumps: Vec<f64> = (0..len).map(|j| (roots[(j + 1) % len] - roots[j]).norm()).collect();
    let mut sorted = jumps.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[len / 2];
    let isolated = |j: usize| {
        let side = jumps[(j + len - 1) % len].min(jumps[(j + 1) % len]);
        jumps[j] > 3.0 * side
    };
    let (node, &jump) = jumps
        .iter()
        .enumerate()
        .filter(|&(j, _)| isolated(j))
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    (median > 0.0 && jump > 10.0 * median).then_some(Warning::RootDiscontinuity { node, jump, median_jump: median })
}

#[derive(Default)]
struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Contour correction with the plain `C`.
    Gn,
    /// Contour correction with the calibrated `C`.
    GnCalib,
    /// Explicit correction `sqrt(n³/p) Ψ_3(f)`.
    Qn,
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gn" => Ok(Self::Gn),
            "gn-calib" | "calib" => Ok(Self::GnCalib),
            "qn" => Ok(Self::Qn),
            other => Err(Error::InvalidParameter(format!("unknown variant `{other}` (expected gn, gn-calib, qn)"))),
        }
    }
}

/// A centered linear spectral statistic with its limiting moments.
#[derive(Debug, Clone, Serialize)]
pub struct LssResult {
    pub variant: Variant,
    pub function: TestFunction,
    pub n: usize,
    pub p: usize,
    pub nu4: f64,
    /// `Σ f(λ_j) - n ∫ f dF`.
    pub raw_lss: f64,
    pub correction: f64,
    /// `raw_lss - correction`.
    pub statistic: f64,
    pub asymptotic_mean: f64,
    pub asymptotic_var: f64,
    /// `(statistic - asymptotic_mean) / sqrt(asymptotic_var)`; absent when the
    /// variance vanishes.
    pub standardized: Option<f64>,
    /// Contour settings, for the contour variants.
    pub options: Option<CorrectionOptions>,
    pub imag_residual: Option<f64>,
    pub warnings: Vec<Warning>,
}

/// `n ∫ f d(F^A - F)`.
pub fn raw_lss(spectrum: &Spectrum, f: &TestFunction) -> Result<f64> {
    Ok(spectra::lss(spectrum, f)? - spectrum.n() as f64 * semicircle::semicircle_integral(f)?)
}

fn standardize(statistic: f64, mean: f64, var: f64) -> Option<f64> {
    (var > 0.0).then(|| (statistic - mean) / var.sqrt())
}

/// `G_n(f)` or its calibrated form, per `opts.calibrated`. The limit is
/// centered normal with variance [`asymptotic_cov_series`]`(f, f)`.
pub fn gn_statistic(spectrum: &Spectrum, f: &TestFunction, nu4: f64, opts: &CorrectionOptions) -> Result<LssResult> {
    let raw = raw_lss(spectrum, f)?;
    let contour = mean_correction(f, spectrum.n(), spectrum.p(), nu4, opts)?;
    let series = asymptotic_cov_series(f, f, nu4, DEFAULT_SERIES_TERMS)?;
    let mut warnings = contour.warnings;
    warnings.extend(series.warning);
    let statistic = raw - contour.value;
    Ok(LssResult {
        variant: if opts.calibrated { Variant::GnCalib } else { Variant::Gn },
        function: f.clone(),
        n: spectrum.n(),
        p: spectrum.p(),
        nu4,
        raw_lss: raw,
        correction: contour.value,
        statistic,
        asymptotic_mean: 0.0,
        asymptotic_var: series.value,
        standardized: standardize(statistic, 0.0, series.value),
        options: Some(*opts),
        imag_residual: Some(contour.imag_residual),
        warnings,
    })
}

/// `Q_n(f) = n ∫ f d(F^A - F) - sqrt(n³/p) Ψ_3(f)`, intended for `n³/p = O(1)`.
/// Its limit is normal with mean [`asymptotic_mean`] and the same variance as `G_n`.
pub fn qn_statistic(spectrum: &Spectrum, f: &TestFunction, nu4: f64) -> Result<LssResult> {
    let (n, p) = (spectrum.n() as f64, spectrum.p() as f64);
    let raw = raw_lss(spectrum, f)?;
    let ratio = n.powi(3) / p;
    let correction = ratio.sqrt() * semicircle::psi_k(f, 3, DEFAULT_PSI_NODES)?;
    let mean = asymptotic_mean(f, nu4)?;
    let series = asymptotic_cov_series(f, f, nu4, DEFAULT_SERIES_TERMS)?;
    let mut warnings: Vec<Warning> = series.warning.into_iter().collect();
    if ratio > 1.0 {
        warnings.push(Warning::Regime { message: format!("n³/p = {ratio:.3} exceeds 1; Q_n is intended for bounded n³/p") });
    }
    let statistic = raw - correction;
    Ok(LssResult {
        variant: Variant::Qn,
        function: f.clone(),
        n: spectrum.n(),
        p: spectrum.p(),
        nu4,
        raw_lss: raw,
        correction,
        statistic,
        asymptotic_mean: mean,
        asymptotic_var: series.value,
        standardized: standardize(statistic, mean, series.value),
        options: None,
        imag_residual: None,
        warnings,
    })
}

/// Limiting mean of `Q_n(f)`: `¼(f(2) + f(-2)) - ½Ψ_0(f) + (ν₄ - 3)Ψ_2(f)`.
/// The contour statistics have limiting mean zero.
pub fn asymptotic_mean(f: &TestFunction, nu4: f64) -> Result<f64> {
    let psi = semicircle::psi_coefficients(f, 2, DEFAULT_PSI_NODES)?;
    Ok(0.25 * (f.try_eval(2.0)? + f.try_eval(-2.0)?) - 0.5 * psi[0] + (nu4 - 3.0) * psi[2])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovSeries {
    pub value: f64,
    /// `2 Σ_{K<k≤2K} k |Ψ_k(f1) Ψ_k(f2)|`.
    pub tail: f64,
    pub terms: usize,
    pub warning: Option<Warning>,
}

/// `(ν₄ - 3) Ψ_1(f1) Ψ_1(f2) + 2 Σ_{k=1}^{K} k Ψ_k(f1) Ψ_k(f2)`.
pub fn asymptotic_cov_series(f1: &TestFunction, f2: &TestFunction, nu4: f64, terms: usize) -> Result<CovSeries> {
    if terms == 0 {
        return Err(Error::InvalidParameter("series needs at least one term".into()));
    }
    // Enough nodes that Ψ_k up to 2K is not aliased for moderate degrees.
    let nodes = DEFAULT_PSI_NODES.max(4 * terms + 64);
    let a = semicircle::psi_coefficients(f1, 2 * terms, nodes)?;
    let b = semicircle::psi_coefficients(f2, 2 * terms, nodes)?;
    let mut value = (nu4 - 3.0) * a[1] * b[1];
    for k in 1..=terms {
        value += 2.0 * k as f64 * a[k] * b[k];
    }
    let tail: f64 = (terms + 1..=2 * terms).map(|k| 2.0 * k as f64 * (a[k] * b[k]).abs()).sum();
    let warning = (tail > 1e-6 * value.abs() + 1e-12).then_some(Warning::SeriesTail { tail, value });
    Ok(CovSeries { value, tail, terms, warning })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovIntegral {
    pub value: f64,
    pub nodes: usize,
    pub warnings: Vec<Warning>,
}

/// `(1/4π²) ∬ f1'(x) f2'(y) H(x, y) dx dy` over `[-2, 2]²` with
///
/// ```text
/// H(x, y) = (ν₄ - 3) sqrt(4 - x²) sqrt(4 - y²)
///         + 2 log[(4 - xy + sqrt((4 - x²)(4 - y²))) / (4 - xy - sqrt((4 - x²)(4 - y²)))]
/// ```
pub fn asymptotic_cov_integral(f1: &TestFunction, f2: &TestFunction, nu4: f64) -> Result<CovIntegral> {
    asymptotic_cov_integral_with(f1, f2, nu4, DEFAULT_COV_NODES)
}

/// Tensor Gauss–Legendre with orders `nodes` in x and `nodes + 1` in y. The
/// two node sets interlace strictly, so the diagonal is never sampled.
///
/// The kernel is split as `H = R(x, y) - 4 ln|x - y|` with `R` bounded near
/// the diagonal. The log part is integrated in y by singularity subtraction,
/// `∫ g(y) ln|x-y| dy = ∫ (g(y) - g(x)) ln|x-y| dy + g(x) ∫ ln|x-y| dy`,
/// the last integral being closed form.
pub fn asymptotic_cov_integral_with(f1: &TestFunction, f2: &TestFunction, nu4: f64, nodes: usize) -> Result<CovIntegral> {
    if nodes < 2 {
        return Err(Error::InvalidParameter("need at least two quadrature nodes".into()));
    }
    let mut warnings = Vec::new();
    for f in [f1, f2] {
        if !f.has_exact_derivative() {
            warnings.push(Warning::ApproximateDerivative { label: f.label().to_string() });
        }
    }
    let deriv = |f: &TestFunction, x: f64| -> Result<f64> {
        let d = f.derivative(x);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::Quadrature(format!("derivative of `{}` not finite at {x}", f.label())))
        }
    };
    let grid = |order: usize| {
        let (ts, ws) = gauss_legendre(order);
        ts.iter().zip(ws).map(|(&t, w)| (2.0 * t, 2.0 * w)).collect::<Vec<_>>()
    };
    let xs = grid(nodes);
    let ys = grid(nodes + 1);
    let d2y: Vec<f64> = ys.iter().map(|&(y, _)| deriv(f2, y)).collect::<Result<_>>()?;
    let sy: Vec<f64> = ys.iter().map(|&(y, _)| (4.0 - y * y).sqrt()).collect();

    let mut total = NeumaierSum::default();
    for &(x, wx) in &xs {
        let d1 = deriv(f1, x)?;
        if d1 == 0.0 {
            continue;
        }
        let d2x = deriv(f2, x)?;
        let sx = (4.0 - x * x).sqrt();
        let mut row = NeumaierSum::default();
        for (j, &(y, wy)) in ys.iter().enumerate() {
            let s = sx * sy[j];
            // 4 - xy - s = (x - y)² · 4 / (4 - xy + s) keeps the log argument free of cancellation
            let smooth = (nu4 - 3.0) * s + 4.0 * ((4.0 - x * y + s) / 2.0).ln();
            let log_gap = (x - y).abs().ln();
            let h = wy * (smooth * d2y[j] - 4.0 * (d2y[j] - d2x) * log_gap);
            if !h.is_finite() {
                return Err(Error::Quadrature(format!("kernel not finite at ({x}, {y})")));
            }
            row.add(h);
        }
        let log_mass = (2.0 + x) * (2.0 + x).ln() + (2.0 - x) * (2.0 - x).ln() - 4.0;
        row.add(-4.0 * d2x * log_mass);
        total.add(wx * d1 * row.total());
    }
    Ok(CovIntegral { value: total.total() / (4.0 * PI * PI), nodes, warnings })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; order];
    let mut ws = vec![0.0; order];
    let nf = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if order == 1 { x } else { p1 };
            let pm = if order == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = -x;
        ws[i] = w;
        xs[order - 1 - i] = x;
        ws[order - 1 - i] = w;
    }
    if order % 2 == 1 {
        xs[order / 2] = 0.0;
    }
    (xs, ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn coeffs_at_zero() {
        let q = quadratic_coeffs(c(0.0, 0.0), 100, 10_000, 3.0, false).unwrap();
        assert!((q.a - c(-0.1, 0.0)).norm() < 1e-15);
        assert_eq!(q.b, c(-1.0, 0.0));
        assert_eq!(q.c, c(0.0, 0.0));
    }

    #[test]
    fn coeffs_large_p_limit() {
        let m = c(0.3, 0.2);
        let q = quadratic_coeffs(m, 10, 1 << 60, 3.0, true).unwrap();
        assert!((q.a - m).norm() < 1e-8);
        assert!((q.b - (m * m - 1.0)).norm() < 1e-8);
    }

    #[test]
    fn calibration_difference() {
        let (n, p, nu4) = (50, 4000, 6.0);
        let m = c(0.4, -0.25);
        let plain = quadratic_coeffs(m, n, p, nu4, false).unwrap();
        let cal = quadratic_coeffs(m, n, p, nu4, true).unwrap();
        let r = (n as f64 / p as f64).sqrt();
        let want = -(m * m * m / n as f64) * 2.0 * (nu4 - 1.0) * m * r;
        assert!((cal.c - plain.c - want).norm() < 1e-15);
        assert_eq!(cal.a, plain.a);
        assert_eq!(cal.b, plain.b);
    }

    #[test]
    fn coeffs_pole() {
        assert!(quadratic_coeffs(c(1.0, 0.0), 10, 100, 3.0, true).is_err());
        assert!(quadratic_coeffs(c(-1.0, 0.0), 10, 100, 3.0, true).is_err());
    }

    fn quad(a: Complex64, b: Complex64, cc: Complex64) -> QuadraticCoeffs {
        QuadraticCoeffs { a, b, c: cc, n: 1, p: 1, nu4: 3.0 }
    }

    #[test]
    fn min_modulus_roots() {
        let r = correction_root(&quad(c(1.0, 0.0), c(-3.0, 0.0), c(2.0, 0.0)), RootRule::MinModulus).unwrap();
        assert!((r.value - c(1.0, 0.0)).norm() < 1e-15);
        let r = correction_root(&quad(c(0.7, 0.1), c(-3.0, 2.0), c(0.0, 0.0)), RootRule::MinModulus).unwrap();
        assert_eq!(r.value, c(0.0, 0.0));
    }

    #[test]
    fn degenerate_quadratic() {
        let r = correction_root(&quad(c(0.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)), RootRule::MinModulus).unwrap();
        assert_eq!(r.value, c(-0.5, 0.0));
        assert!(matches!(
            correction_root(&quad(c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)), RootRule::ImagSign),
            Err(Error::DegenerateQuadratic)
        ));
    }

    #[test]
    fn roots_solve_quadratic() {
        let q = quad(c(0.3, -1.1), c(2.0, 0.5), c(-0.7, 0.2));
        for rule in [RootRule::MinModulus, RootRule::ImagSign] {
            let x = correction_root(&q, rule).unwrap().value;
            assert!((q.a * x * x + q.b * x + q.c).norm() < 1e-14, "{rule}");
        }
    }

    #[test]
    fn imag_sign_rule_follows_b() {
        // With small C the sign rule must pick the small root -C/B + ...
        let q = quad(c(1.0, 0.0), c(-1.0, 0.3), c(1e-3, 1e-3));
        let x = correction_root(&q, RootRule::ImagSign).unwrap();
        assert!(!x.real_b);
        assert!((x.value + q.c / q.b).norm() < 1e-5);
        let real = correction_root(&quad(c(1.0, 0.0), c(-1.0, 0.0), c(0.1, 0.0)), RootRule::ImagSign).unwrap();
        assert!(real.real_b);
    }

    #[test]
    fn rules_agree_on_contour() {
        let (n, p) = (100, 1_000_000);
        for j in 0..512 {
            let m = Complex64::from_polar(0.5, 2.0 * PI * j as f64 / 512.0);
            let q = quadratic_coeffs(m, n, p, 3.0, true).unwrap();
            let a = correction_root(&q, RootRule::MinModulus).unwrap().value;
            let sign = correction_root(&q, RootRule::ImagSign).unwrap();
            // on the real axis the sign rule has nothing to follow
            assert_eq!(sign.real_b, j % 256 == 0, "node {j}");
            if sign.real_b {
                continue;
            }
            let b = sign.value;
            assert!((a - b).norm() <= 1e-6 * a.norm().max(1e-300), "node {j}: {a} vs {b}");
        }
    }

    #[test]
    fn constant_has_no_correction() {
        let f = TestFunction::constant(2.5);
        for calibrated in [false, true] {
            let opts = CorrectionOptions { calibrated, ..Default::default() };
            let v = mean_correction(&f, 60, 5000, 6.0, &opts).unwrap();
            assert!(v.value.abs() < 1e-8, "{}", v.value);
        }
    }

    #[test]
    fn options_validated() {
        let f = TestFunction::builtin("xsq").unwrap();
        for opts in [
            CorrectionOptions { rho: 1.0, ..Default::default() },
            CorrectionOptions { rho: 0.0, ..Default::default() },
            CorrectionOptions { nodes: 8, ..Default::default() },
        ] {
            assert!(mean_correction(&f, 10, 1000, 3.0, &opts).is_err());
        }
    }

    #[test]
    fn psi_constants_of_square() {
        let xsq = TestFunction::builtin("xsq").unwrap();
        assert!((asymptotic_mean(&xsq, 3.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(asymptotic_mean(&TestFunction::builtin("x").unwrap(), 7.0).unwrap().abs() < 1e-12);
        assert!(asymptotic_mean(&TestFunction::constant(1.0), 3.0).unwrap().abs() < 1e-12);
        let cov = asymptotic_cov_series(&xsq, &xsq, 3.0, 200).unwrap();
        assert!((cov.value - 4.0).abs() < 1e-10 && cov.warning.is_none());
    }

    #[test]
    fn series_examples() {
        let x = TestFunction::builtin("x").unwrap();
        let xsq = TestFunction::builtin("xsq").unwrap();
        assert!((asymptotic_cov_series(&x, &x, 3.0, 200).unwrap().value - 2.0).abs() < 1e-12);
        for nu4 in [1.0, 3.0, 9.0] {
            assert!(asymptotic_cov_series(&x, &xsq, nu4, 200).unwrap().value.abs() < 1e-12);
        }
        assert!(asymptotic_cov_series(&x, &x, 3.0, 0).is_err());
    }

    #[test]
    fn series_flags_slow_decay() {
        // f = log(3 - x) has Ψ_k ~ ρ^k with ρ = 0.38; log(2.02 - x) decays much slower.
        let f = TestFunction::custom("log", |x| (2.02 - x).ln(), |w| (2.02 - w).ln(), None);
        let cov = asymptotic_cov_series(&f, &f, 3.0, 5).unwrap();
        assert!(cov.warning.is_some());
    }

    #[test]
    fn gauss_legendre_exactness() {
        for order in [1usize, 2, 5, 16, 401] {
            let (xs, ws) = gauss_legendre(order);
            assert!((ws.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            for deg in 0..(2 * order).min(30) {
                let q: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "order {order}, degree {deg}: {q}");
            }
            assert!(xs.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn integral_zero_for_constants() {
        let one = TestFunction::constant(1.0);
        let v = asymptotic_cov_integral(&one, &one, 3.0).unwrap();
        assert_eq!(v.value, 0.0);
    }
}
