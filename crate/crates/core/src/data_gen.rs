//! Random data under the entry laws used in the experiments, population
//! covariance designs, and row-block streaming for matrices too large to hold.
//!
//! Matrices are `p × n`: one row per variable, one column per sample, stored
//! row-major. Entries are drawn in row-major order from a single stream, so a
//! matrix generated whole and one generated block-by-block are identical.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Exp1, Gamma, StandardNormal, StudentT};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator used for every random draw in the crate.
pub type StreamRng = Xoshiro256PlusPlus;

/// Independent generator for stream `stream` under master seed `seed`.
///
/// The master seed is expanded with SplitMix64 and the stream index is mixed
/// in before the second expansion, so `(seed, r)` pairs map to unrelated
/// xoshiro states.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let key = SplitMix64::seed_from_u64(seed).next_u64();
    let mut mixer = SplitMix64::seed_from_u64(key ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    StreamRng::from_rng(&mut mixer)
}

/// Entry laws, each standardized to mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum DistKind {
    StandardNormal,
    /// `Exp(1) - 1`.
    CenteredExp1,
    /// Student t with 6 degrees of freedom divided by `sqrt(1.5)`.
    CenteredT6,
    /// `(G - shape*scale) / (sqrt(shape)*scale)` for `G ~ Gamma(shape, scale)`.
    StandardizedGamma { shape: f64, scale: f64 },
    /// Symmetric ±1.
    Rademacher,
}

/// An entry law together with its exact fourth moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub kind: DistKind,
    pub nu4: f64,
}

impl DistributionSpec {
    pub fn new(kind: DistKind) -> Result<Self> {
        let nu4 = match kind {
            DistKind::StandardNormal => 3.0,
            DistKind::CenteredExp1 => 9.0,
            DistKind::CenteredT6 => 6.0,
            DistKind::Rademacher => 1.0,
            DistKind::StandardizedGamma { shape, scale } => {
                if !(shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "gamma shape and scale must be positive, got ({shape}, {scale})"
                    )));
                }
                3.0 + 6.0 / shape
            }
        };
        Ok(Self { kind, nu4 })
    }

    pub fn normal() -> Self {
        Self { kind: DistKind::StandardNormal, nu4: 3.0 }
    }

    pub fn rademacher() -> Self {
        Self { kind: DistKind::Rademacher, nu4: 1.0 }
    }

    pub fn sampler(&self, rng: StreamRng) -> EntrySampler {
        EntrySampler { kind: self.kind, rng, bits: 0, nbits: 0 }
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    /// Accepts `normal`, `exp`, `t6`, `rademacher` and `gamma:SHAPE,SCALE`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let kind = match s.as_str() {
            "normal" | "gaussian" | "n01" => DistKind::StandardNormal,
            "exp" | "exp1" | "centered-exp" => DistKind::CenteredExp1,
            "t6" | "t" | "student-t6" => DistKind::CenteredT6,
            "rademacher" | "bernoulli" => DistKind::Rademacher,
            "gamma" => DistKind::StandardizedGamma { shape: 4.0, scale: 0.5 },
            other => {
                let Some(args) = other.strip_prefix("gamma:") else {
                    return Err(Error::InvalidParameter(format!(
                        "unknown distribution `{other}` (expected normal, exp, t6, rademacher, gamma[:shape,scale])"
                    )));
                };
                let parts: Vec<f64> = args
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::InvalidParameter(format!("gamma parameters: {e}")))?;
                match parts[..] {
                    [shape, scale] => DistKind::StandardizedGamma { shape, scale },
                    _ => {
                        return Err(Error::InvalidParameter(
                            "gamma takes two parameters: gamma:shape,scale".into(),
                        ))
                    }
                }
            }
        };
        Self::new(kind)
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DistKind::StandardNormal => f.write_str("normal"),
            DistKind::CenteredExp1 => f.write_str("exp"),
            DistKind::CenteredT6 => f.write_str("t6"),
            DistKind::Rademacher => f.write_str("rademacher"),
            DistKind::StandardizedGamma { shape, scale } => write!(f, "gamma:{shape},{scale}"),
        }
    }
}

/// Sequential sampler of standardized entries.
///
/// Rademacher signs are taken 64 at a time from one word; the unused bits
/// persist across calls so that chunked and whole fills agree.
pub struct EntrySampler {
    kind: DistKind,
    rng: StreamRng,
    bits: u64,
    nbits: u32,
}

impl EntrySampler {
    pub fn fill(&mut self, out: &mut [f64]) {
        let rng = &mut self.rng;
        match self.kind {
            DistKind::StandardNormal => {
                for v in out.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            DistKind::CenteredExp1 => {
                for v in out.iter_mut() {
                    let e: f64 = rng.sample(Exp1);
                    *v = e - 1.0;
                }
            }
            DistKind::CenteredT6 => {
                let t = StudentT::new(6.0).expect("valid degrees of freedom");
                let scale = 1.5f64.sqrt().recip();
                for v in out.iter_mut() {
                    *v = rng.sample(t) * scale;
                }
            }
            DistKind::StandardizedGamma { shape, scale } => {
                let g = Gamma::new(shape, scale).expect("validated gamma parameters");
                let mean = shape * scale;
                let inv_sd = (shape.sqrt() * scale).recip();
                for v in out.iter_mut() {
                    *v = (rng.sample(g) - mean) * inv_sd;
                }
            }
            DistKind::Rademacher => {
                for v in out.iter_mut() {
                    if self.nbits == 0 {
                        self.bits = rng.next_u64();
                        self.nbits = 64;
                    }
                    *v = if self.bits & 1 == 1 { 1.0 } else { -1.0 };
                    self.bits >>= 1;
                    self.nbits -= 1;
                }
            }
        }
    }
}

/// A `p × n` real matrix stored row-major (row = variable).
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    p: usize,
    n: usize,
    data: Vec<f64>,
    seed: Option<u64>,
}

/// Matrix of i.i.d. standardized entries before any covariance is applied.
pub type RawMatrix = DataMatrix;

impl DataMatrix {
    pub fn from_row_major(p: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if p == 0 || n == 0 {
            return Err(Error::InvalidDimension { p, n });
        }
        if data.len() != p * n {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries ({p}x{n})", p * n),
                found: format!("{} entries", data.len()),
            });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite entry at row {}, column {}",
                k / n,
                k % n
            )));
        }
        Ok(Self { p, n, data, seed: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: format!("{n} columns"),
                found: format!("{} columns in row {bad}", rows[bad].len()),
            });
        }
        Self::from_row_major(p, n, rows.concat())
    }

    pub fn zeros(p: usize, n: usize) -> Result<Self> {
        Self::from_row_major(p, n, vec![0.0; p * n])
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.n)
    }

    /// The `n × p` transpose, for inputs stored one sample per row.
    pub fn transpose(&self) -> Self {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.p {
            for j in 0..self.n {
                out[j * self.p + i] = self.data[i * self.n + j];
            }
        }
        Self { p: self.n, n: self.p, data: out, seed: self.seed }
    }

    /// Reorders the columns (samples) by `perm`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: format!("{} indices", self.n),
                found: format!("{}", perm.len()),
            });
        }
        let mut out = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            out.extend(perm.iter().map(|&j| row[j]));
        }
        Ok(Self { data: out, ..self.clone() })
    }
}

/// Draws a `p × n` matrix of i.i.d. entries from `dist` using stream 0 of `seed`.
pub fn sample_matrix(dist: &DistributionSpec, p: usize, n: usize, seed: u64) -> Result<RawMatrix> {
    sample_matrix_stream(dist, p, n, seed, 0)
}

/// As [`sample_matrix`] but on an explicit stream, as used by replication `stream`.
pub fn sample_matrix_stream(
    dist: &DistributionSpec,
    p: usize,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<RawMatrix> {
    if p == 0 || n == 0 {
        return Err(Error::InvalidDimension { p, n });
    }
    let mut data = vec![0.0; p * n];
    dist.sampler(stream_rng(seed, stream)).fill(&mut data);
    Ok(DataMatrix { p, n, data, seed: Some(seed) })
}

/// Population covariance designs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "snake_case")]
pub enum CovarianceSpec {
    Identity,
    /// First `floor(nu*p)` variances equal 2, the rest 1.
    DiagonalSpike { nu: f64 },
    /// Leading `floor(v2*p)` block tridiagonal with unit diagonal and
    /// off-diagonal `v1`; identity elsewhere.
    BandedTridiagonal { v1: f64, v2: f64 },
}

impl CovarianceSpec {
    pub fn is_identity(&self) -> bool {
        matches!(self, CovarianceSpec::Identity)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            CovarianceSpec::Identity => Ok(()),
            CovarianceSpec::DiagonalSpike { nu } if nu > 0.0 && nu < 1.0 => Ok(()),
            CovarianceSpec::DiagonalSpike { nu } => {
                Err(Error::InvalidParameter(format!("spike fraction must lie in (0,1), got {nu}")))
            }
            CovarianceSpec::BandedTridiagonal { v1, v2 } if v1.is_finite() && v2 > 0.0 && v2 <= 1.0 => {
                Ok(())
            }
            CovarianceSpec::BandedTridiagonal { v1, v2 } => Err(Error::InvalidParameter(format!(
                "banded design needs finite v1 and v2 in (0,1], got ({v1}, {v2})"
            ))),
        }
    }

    /// Number of variables affected by the design at dimension `p`.
    pub fn block_size(&self, p: usize) -> usize {
        let frac = |x: f64| ((x * p as f64) + 1e-9).floor() as usize;
        match *self {
            CovarianceSpec::Identity => 0,
            CovarianceSpec::DiagonalSpike { nu } => frac(nu).min(p),
            CovarianceSpec::BandedTridiagonal { v2, .. } => frac(v2).min(p),
        }
    }

    /// Dense `p × p` population covariance, row-major. Intended for small `p`.
    pub fn sigma_dense(&self, p: usize) -> Vec<f64> {
        let mut s = vec![0.0; p * p];
        for i in 0..p {
            s[i * p + i] = 1.0;
        }
        let m = self.block_size(p);
        match *self {
            CovarianceSpec::Identity => {}
            CovarianceSpec::DiagonalSpike { .. } => {
                for i in 0..m {
                    s[i * p + i] = 2.0;
                }
            }
            CovarianceSpec::BandedTridiagonal { v1, .. } => {
                for i in 1..m {
                    s[i * p + i - 1] = v1;
                    s[(i - 1) * p + i] = v1;
                }
            }
        }
        s
    }
}

impl FromStr for CovarianceSpec {
    type Err = Error;

    /// Accepts `identity`, `spike:NU` and `banded:V1,V2`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidParameter(format!("covariance parameter `{t}`: {e}")))
        };
        let spec = if s == "identity" || s == "id" {
            CovarianceSpec::Identity
        } else if let Some(nu) = s.strip_prefix("spike:") {
            CovarianceSpec::DiagonalSpike { nu: parse(nu)? }
        } else if let Some(args) = s.strip_prefix("banded:") {
            let (a, b) = args.split_once(',').ok_or_else(|| {
                Error::InvalidParameter("banded takes two parameters: banded:v1,v2".into())
            })?;
            CovarianceSpec::BandedTridiagonal { v1: parse(a)?, v2: parse(b)? }
        } else {
            return Err(Error::InvalidParameter(format!(
                "unknown covariance `{s}` (expected identity, spike:NU, banded:V1,V2)"
            )));
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for CovarianceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CovarianceSpec::Identity => f.write_str("identity"),
            CovarianceSpec::DiagonalSpike { nu } => write!(f, "spike:{nu}"),
            CovarianceSpec::BandedTridiagonal { v1, v2 } => write!(f, "banded:{v1},{v2}"),
        }
    }
}

/// Lower-triangular Cholesky factor `L` of a covariance design, `L Lᵀ = Σ`.
///
/// Every supported design has a factor that is at most lower bidiagonal, so
/// only the diagonal and first subdiagonal are stored.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceFactor {
    Identity { p: usize },
    Diagonal(Vec<f64>),
    /// `sub[i]` is `L[i][i-1]`; `sub[0]` is zero.
    LowerBidiagonal { diag: Vec<f64>, sub: Vec<f64> },
}

impl CovarianceFactor {
    pub fn p(&self) -> usize {
        match self {
            CovarianceFactor::Identity { p } => *p,
            CovarianceFactor::Diagonal(d) => d.len(),
            CovarianceFactor::LowerBidiagonal { diag, .. } => diag.len(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, CovarianceFactor::Identity { .. })
    }

    /// Dense `p × p` factor, row-major.
    pub fn to_dense(&self) -> Vec<f64> {
        let p = self.p();
        let mut l = vec![0.0; p * p];
        for i in 0..p {
            l[i * p + i] = self.diag(i);
            if i > 0 {
                l[i * p + i - 1] = self.sub(i);
            }
        }
        l
    }

    fn diag(&self, i: usize) -> f64 {
        match self {
            CovarianceFactor::Identity { .. } => 1.0,
            CovarianceFactor::Diagonal(d) => d[i],
            CovarianceFactor::LowerBidiagonal { diag, .. } => diag[i],
        }
    }

    fn sub(&self, i: usize) -> f64 {
        match self {
            CovarianceFactor::LowerBidiagonal { sub, .. } => sub[i],
            _ => 0.0,
        }
    }

    /// Row `i` of `L S` given rows `i` and `i-1` of `S`.
    #[inline]
    pub(crate) fn mix_row(&self, i: usize, raw: &[f64], prev_raw: &[f64], out: &mut [f64]) {
        match self {
            CovarianceFactor::Identity { .. } => out.copy_from_slice(raw),
            CovarianceFactor::Diagonal(d) => {
                let d = d[i];
                for (o, &s) in out.iter_mut().zip(raw) {
                    *o = d * s;
                }
            }
            CovarianceFactor::LowerBidiagonal { diag, sub } => {
                let (d, l) = (diag[i], sub[i]);
                if l == 0.0 {
                    for (o, &s) in out.iter_mut().zip(raw) {
                        *o = d * s;
                    }
                } else {
                    for ((o, &s), &t) in out.iter_mut().zip(raw).zip(prev_raw) {
                        *o = d * s + l * t;
                    }
                }
            }
        }
    }
}

/// Cholesky factor of `spec` at dimension `p`.
pub fn covariance_factor(spec: &CovarianceSpec, p: usize) -> Result<CovarianceFactor> {
    if p == 0 {
        return Err(Error::InvalidDimension { p, n: 1 });
    }
    spec.validate()?;
    let m = spec.block_size(p);
    Ok(match *spec {
        CovarianceSpec::Identity => CovarianceFactor::Identity { p },
        CovarianceSpec::DiagonalSpike { .. } => {
            let mut d = vec![1.0; p];
            d[..m].fill(2f64.sqrt());
            CovarianceFactor::Diagonal(d)
        }
        CovarianceSpec::BandedTridiagonal { v1, .. } => {
            let mut diag = vec![1.0; p];
            let mut sub = vec![0.0; p];
            for i in 1..m {
                let l = v1 / diag[i - 1];
                let pivot = 1.0 - l * l;
                if !(pivot > 0.0) {
                    return Err(Error::NotPositiveDefinite { index: i, pivot });
                }
                sub[i] = l;
                diag[i] = pivot.sqrt();
            }
            CovarianceFactor::LowerBidiagonal { diag, sub }
        }
    })
}

/// Columns of the result are `Γ s_j` with `Γ` the Cholesky factor of `spec`.
pub fn apply_covariance(raw: &RawMatrix, spec: &CovarianceSpec) -> Result<DataMatrix> {
    if spec.is_identity() {
        return Ok(raw.clone());
    }
    let factor = covariance_factor(spec, raw.p)?;
    apply_factor(raw, &factor)
}

pub fn apply_factor(raw: &RawMatrix, factor: &CovarianceFactor) -> Result<DataMatrix> {
    if factor.p() != raw.p {
        return Err(Error::DimensionMismatch {
            expected: format!("factor of order {}", raw.p),
            found: format!("order {}", factor.p()),
        });
    }
    if factor.is_identity() {
        return Ok(raw.clone());
    }
    let n = raw.n;
    let mut out = vec![0.0; raw.data.len()];
    let zeros = vec![0.0; n];
    for i in 0..raw.p {
        let prev = if i == 0 { &zeros[..] } else { raw.row(i - 1) };
        factor.mix_row(i, raw.row(i), prev, &mut out[i * n..(i + 1) * n]);
    }
    Ok(DataMatrix { data: out, ..raw.clone() })
}

/// Produces the rows of `Γ S` block by block without materializing `S`.
///
/// Yields exactly the rows of `apply_factor(sample_matrix_stream(..), factor)`.
pub struct RowStream {
    sampler: EntrySampler,
    factor: CovarianceFactor,
    n: usize,
    p: usize,
    next_row: usize,
    raw: Vec<f64>,
    prev_raw: Vec<f64>,
}

impl RowStream {
    pub fn new(
        dist: &DistributionSpec,
        factor: CovarianceFactor,
        n: usize,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        let p = factor.p();
        if p == 0 || n == 0 {
            return Err(Error::InvalidDimension { p, n });
        }
        Ok(Self {
            sampler: dist.sampler(stream_rng(seed, stream)),
            factor,
            n,
            p,
            next_row: 0,
            raw: Vec::new(),
            prev_raw: vec![0.0; n],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Fills up to `out.len() / n` rows; returns how many were written.
    pub fn next_block(&mut self, out: &mut [f64]) -> usize {
        let n = self.n;
        let rows = (out.len() / n).min(self.p - self.next_row);
        if rows == 0 {
            return 0;
        }
        let out = &mut out[..rows * n];
        if self.factor.is_identity() {
            self.sampler.fill(out);
        } else {
            self.raw.resize(rows * n, 0.0);
            self.sampler.fill(&mut self.raw);
            for k in 0..rows {
                let i = self.next_row + k;
                let raw_row = &self.raw[k * n..(k + 1) * n];
                let prev = if k == 0 { &self.prev_raw[..] } else { &self.raw[(k - 1) * n..k * n] };
                self.factor.mix_row(i, raw_row, prev, &mut out[k * n..(k + 1) * n]);
            }
            self.prev_raw.copy_from_slice(&self.raw[(rows - 1) * n..rows * n]);
        }
        self.next_row += rows;
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StandardizeMode {
    /// Each row to sample mean 0 and sample variance 1.
    PerVariable,
    /// All entries jointly to mean 0 and variance 1.
    Global,
    None,
}

impl FromStr for StandardizeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "per-variable" | "row" | "rows" => Ok(Self::PerVariable),
            "global" => Ok(Self::Global),
            "none" => Ok(Self::None),
            other => Err(Error::InvalidParameter(format!(
                "unknown standardize mode `{other}` (expected per-variable, global, none)"
            ))),
        }
    }
}

impl fmt::Display for StandardizeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PerVariable => "per-variable",
            Self::Global => "global",
            Self::None => "none",
        })
    }
}

/// Centers and scales the data. Variances use the `n - 1` (or `np - 1`) divisor.
pub fn standardize(data: &DataMatrix, mode: StandardizeMode) -> Result<DataMatrix> {
    match mode {
        StandardizeMode::None => Ok(data.clone()),
        StandardizeMode::PerVariable => {
            let n = data.n;
            if n < 2 {
                return Err(Error::InvalidParameter(
                    "per-variable standardization needs at least two samples".into(),
                ));
            }
            let mut out = Vec::with_capacity(data.data.len());
            for (i, row) in data.rows().enumerate() {
                let mean = row.iter().sum::<f64>() / n as f64;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                if !(var > 0.0) {
                    return Err(Error::DegenerateVariable { row: i });
                }
                let inv_sd = var.sqrt().recip();
                out.extend(row.iter().map(|v| (v - mean) * inv_sd));
            }
            Ok(DataMatrix { data: out, ..data.clone() })
        }
        StandardizeMode::Global => {
            let len = data.data.len();
            if len < 2 {
                return Err(Error::InvalidParameter("global standardization needs two entries".into()));
            }
            let mean = data.data.iter().sum::<f64>() / len as f64;
            let var = data.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (len - 1) as f64;
            if !(var > 0.0) {
                return Err(Error::DegenerateVariable { row: 0 });
            }
            let inv_sd = var.sqrt().recip();
            let out = data.data.iter().map(|v| (v - mean) * inv_sd).collect();
            Ok(DataMatrix { data: out, ..data.clone() })
        }
    }
}

/// Reads a header-free CSV matrix, one row per variable.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut data = Vec::new();
    let mut width = None;
    let mut p = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |pos| pos.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(p as u64 + 1, |pos| pos.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Csv {
                    line,
                    message: format!("expected {w} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Csv {
                line,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv { line, message: format!("non-finite value `{field}`") });
            }
            data.push(v);
        }
        p += 1;
    }
    let Some(n) = width else {
        return Err(Error::Csv { line: 0, message: "no data rows".into() });
    };
    DataMatrix::from_row_major(p, n, data)
}

/// Writes the matrix as header-free CSV, one row per variable.
pub fn write_matrix_csv<W: Write>(mut writer: W, data: &DataMatrix) -> Result<()> {
    let mut line = String::new();
    for row in data.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v:?}"));
        }
        line.push('\n');
        writer.write_all(line.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(dist: &DistributionSpec, count: usize, seed: u64) -> (f64, f64, f64) {
        let m = sample_matrix(dist, count / 1000, 1000, seed).unwrap();
        let len = m.as_slice().len() as f64;
        let mean = m.as_slice().iter().sum::<f64>() / len;
        let var = m.as_slice().iter().map(|v| v * v).sum::<f64>() / len;
        let m4 = m.as_slice().iter().map(|v| v.powi(4)).sum::<f64>() / len;
        (mean, var, m4)
    }

    #[test]
    fn nu4_table() {
        let nu4 = |s: &str| s.parse::<DistributionSpec>().unwrap().nu4;
        assert_eq!(nu4("normal"), 3.0);
        assert_eq!(nu4("exp"), 9.0);
        assert_eq!(nu4("t6"), 6.0);
        assert_eq!(nu4("rademacher"), 1.0);
        assert_eq!(nu4("gamma:4,0.5"), 4.5);
    }

    #[test]
    fn rademacher_support() {
        let m = sample_matrix(&DistributionSpec::rademacher(), 4, 2, 11).unwrap();
        assert!(m.as_slice().iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn zero_dimension_rejected() {
        let d = DistributionSpec::normal();
        assert!(matches!(sample_matrix(&d, 0, 3, 1), Err(Error::InvalidDimension { .. })));
        assert!(matches!(sample_matrix(&d, 3, 0, 1), Err(Error::InvalidDimension { .. })));
    }

    #[test]
    fn centered_exp_moments() {
        let exp: DistributionSpec = "exp".parse().unwrap();
        let (mean, _, m4) = moments(&exp, 1_000_000, 5);
        assert!(mean.abs() < 5e-3, "mean {mean}");
        assert!((m4 - 9.0).abs() < 0.3, "fourth moment {m4}");
    }

    #[test]
    fn deterministic_and_stream_dependent() {
        let d = DistributionSpec::normal();
        let a = sample_matrix_stream(&d, 7, 3, 42, 1).unwrap();
        let b = sample_matrix_stream(&d, 7, 3, 42, 1).unwrap();
        let c = sample_matrix_stream(&d, 7, 3, 42, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.as_slice(), c.as_slice());
    }

    #[test]
    fn identity_factor() {
        let f = covariance_factor(&CovarianceSpec::Identity, 5).unwrap();
        let dense = f.to_dense();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(dense[i * 5 + j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn spike_factor() {
        let f = covariance_factor(&CovarianceSpec::DiagonalSpike { nu: 0.5 }, 4).unwrap();
        let s = 2f64.sqrt();
        assert_eq!(f, CovarianceFactor::Diagonal(vec![s, s, 1.0, 1.0]));
    }

    #[test]
    fn banded_factor_3x3() {
        let f = covariance_factor(&CovarianceSpec::BandedTridiagonal { v1: 0.5, v2: 1.0 }, 3).unwrap();
        let l = f.to_dense();
        let mut llt = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                llt[i * 3 + j] = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
            }
        }
        let expect = [1.0, 0.5, 0.0, 0.5, 1.0, 0.5, 0.0, 0.5, 1.0];
        for (a, b) in llt.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14, "{llt:?}");
        }
    }

    #[test]
    fn banded_not_positive_definite() {
        // order-3 eigenvalues are 1 + 2 v1 cos(kπ/4); the smallest is negative once v1 > 1/√2
        let err = covariance_factor(&CovarianceSpec::BandedTridiagonal { v1: 0.75, v2: 1.0 }, 3);
        assert!(matches!(err, Err(Error::NotPositiveDefinite { .. })));
        let ok = covariance_factor(&CovarianceSpec::BandedTridiagonal { v1: 0.7, v2: 1.0 }, 3);
        assert!(ok.is_ok());
        let err = covariance_factor(&CovarianceSpec::BandedTridiagonal { v1: 0.7, v2: 1.0 }, 4);
        assert!(matches!(err, Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn identity_apply_is_noop_and_spike_scales() {
        let raw = DataMatrix::from_rows(&[vec![1.0, -2.0], vec![3.0, 0.5]]).unwrap();
        assert_eq!(apply_covariance(&raw, &CovarianceSpec::Identity).unwrap(), raw);
        let y = apply_covariance(&raw, &CovarianceSpec::DiagonalSpike { nu: 0.5 }).unwrap();
        let s = 2f64.sqrt();
        assert_eq!(y.row(0), &[s, -2.0 * s]);
        assert_eq!(y.row(1), raw.row(1));
    }

    #[test]
    fn apply_factor_dimension_mismatch() {
        let raw = DataMatrix::zeros(3, 2).unwrap();
        let f = covariance_factor(&CovarianceSpec::DiagonalSpike { nu: 0.5 }, 4).unwrap();
        assert!(matches!(apply_factor(&raw, &f), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn standardize_modes() {
        let d = DataMatrix::from_rows(&[vec![0.0, 2.0], vec![1.0, 3.0]]).unwrap();
        assert_eq!(standardize(&d, StandardizeMode::None).unwrap(), d);
        let s = standardize(&d, StandardizeMode::PerVariable).unwrap();
        for row in s.rows() {
            let mean = (row[0] + row[1]) / 2.0;
            let var = (row[0] - mean).powi(2) + (row[1] - mean).powi(2);
            assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-14);
        }
        let g = standardize(&d, StandardizeMode::Global).unwrap();
        let mean = g.as_slice().iter().sum::<f64>() / 4.0;
        let var = g.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-14);

        let constant = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![4.0, 4.0]]).unwrap();
        assert!(matches!(
            standardize(&constant, StandardizeMode::PerVariable),
            Err(Error::DegenerateVariable { row: 1 })
        ));
    }

    #[test]
    fn row_stream_matches_materialized() {
        let dist = DistributionSpec::rademacher();
        let spec = CovarianceSpec::BandedTridiagonal { v1: 0.5, v2: 0.6 };
        let (p, n) = (37, 5);
        let whole = apply_covariance(&sample_matrix_stream(&dist, p, n, 9, 3).unwrap(), &spec).unwrap();
        let mut stream = RowStream::new(&dist, covariance_factor(&spec, p).unwrap(), n, 9, 3).unwrap();
        let mut got = Vec::new();
        let mut buf = vec![0.0; 4 * n];
        loop {
            let rows = stream.next_block(&mut buf);
            if rows == 0 {
                break;
            }
            got.extend_from_slice(&buf[..rows * n]);
        }
        assert_eq!(got, whole.as_slice());
    }

    #[test]
    fn csv_roundtrip_and_errors() {
        let d = DataMatrix::from_rows(&[vec![0.1, -2.5e-7], vec![3.0, 1e300]]).unwrap();
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &d).unwrap();
        assert_eq!(read_matrix_csv(&buf[..]).unwrap(), d);

        assert!(matches!(read_matrix_csv(&b""[..]), Err(Error::Csv { .. })));
        match read_matrix_csv(&b"1,2\n3,x\n"[..]) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match read_matrix_csv(&b"1,2\n3,4\n5\n"[..]) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
