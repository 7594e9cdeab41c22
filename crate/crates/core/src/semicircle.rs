//! Semicircle law on `[-2, 2]`: density, distribution function, moments,
//! Stieltjes transform and the Chebyshev functionals
//! `Ψ_k(f) = (1/2π) ∫ f(2cos θ) cos(kθ) dθ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::test_function::TestFunction;

/// Default number of Chebyshev nodes for `Ψ_k`.
pub const DEFAULT_PSI_NODES: usize = 256;

pub fn density(x: f64) -> f64 {
    if x.abs() <= 2.0 {
        (4.0 - x * x).max(0.0).sqrt() / (2.0 * PI)
    } else {
        0.0
    }
}

pub fn cdf(x: f64) -> f64 {
    if x <= -2.0 {
        0.0
    } else if x >= 2.0 {
        1.0
    } else {
        (0.5 + x * (4.0 - x * x).sqrt() / (4.0 * PI) + (x / 2.0).asin() / PI).clamp(0.0, 1.0)
    }
}

/// `k`-th moment: zero for odd `k`, the Catalan number `C_{k/2}` for even `k`.
pub fn moment(k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let j = (k / 2) as u64;
    // C_j = prod_{i=2..j} (j + i) / i, exact in u128 for the sizes that fit f64 anyway
    let mut c: u128 = 1;
    for i in 0..j as u128 {
        c = c * 2 * (2 * i + 1) / (i + 2);
    }
    c as f64
}

fn chebyshev_samples(f: &TestFunction, nodes: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if nodes == 0 {
        return Err(Error::InvalidParameter("node count must be at least 1".into()));
    }
    let step = PI / nodes as f64;
    let mut thetas = Vec::with_capacity(nodes);
    let mut values = Vec::with_capacity(nodes);
    for j in 0..nodes {
        let theta = (j as f64 + 0.5) * step;
        let x = 2.0 * theta.cos();
        values.push(f.try_eval(x)?);
        thetas.push(theta);
    }
    Ok((thetas, values))
}

/// `Ψ_k(f)` by the midpoint rule in θ on `nodes` Chebyshev nodes.
///
/// Exact for polynomial `f` of degree below `2·nodes - k`. Coefficients that
/// vanish by the parity of a polynomial `f` are returned as exact zeros.
pub fn psi_k(f: &TestFunction, k: usize, nodes: usize) -> Result<f64> {
    let (thetas, values) = chebyshev_samples(f, nodes)?;
    Ok(if parity_zero(f, k) { 0.0 } else { project(&thetas, &values, k) })
}

/// `Ψ_0(f), …, Ψ_kmax(f)` from one set of samples.
pub fn psi_coefficients(f: &TestFunction, kmax: usize, nodes: usize) -> Result<Vec<f64>> {
    let (thetas, values) = chebyshev_samples(f, nodes)?;
    Ok((0..=kmax).map(|k| if parity_zero(f, k) { 0.0 } else { project(&thetas, &values, k) }).collect())
}

fn parity_zero(f: &TestFunction, k: usize) -> bool {
    if k % 2 == 1 {
        f.is_even()
    } else {
        f.is_odd()
    }
}

fn project(thetas: &[f64], values: &[f64], k: usize) -> f64 {
    let kf = k as f64;
    let sum: f64 = thetas.iter().zip(values).map(|(t, v)| v * (kf * t).cos()).sum();
    sum / thetas.len() as f64
}

/// `∫ f dF` over the semicircle law, as `Ψ_0(f) - Ψ_2(f)`.
pub fn semicircle_integral(f: &TestFunction) -> Result<f64> {
    semicircle_integral_with(f, DEFAULT_PSI_NODES)
}

pub fn semicircle_integral_with(f: &TestFunction, nodes: usize) -> Result<f64> {
    let (thetas, values) = chebyshev_samples(f, nodes)?;
    Ok(project(&thetas, &values, 0) - project(&thetas, &values, 2))
}

/// A point off the cut and its Stieltjes transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StieltjesPoint {
    pub z: Complex64,
    pub m: Complex64,
}

/// Stieltjes transform of the semicircle law: the root of `m² + zm + 1 = 0`
/// with `|m| ≤ 1`.
///
/// The larger root is formed first (no cancellation) and the returned one
/// comes from the product of roots being 1. Values below the real axis are
/// conjugates of values above it.
pub fn stieltjes_m(z: Complex64) -> Result<StieltjesPoint> {
    if !(z.re.is_finite() && z.im.is_finite()) || (z.im == 0.0 && z.re.abs() <= 2.0) {
        return Err(Error::BranchCut { z: format!("{z}") });
    }
    if z.im < 0.0 {
        let upper = stieltjes_m(z.conj())?;
        return Ok(StieltjesPoint { z, m: upper.m.conj() });
    }
    let mut s = (z * z - 4.0).sqrt();
    if (z.conj() * s).re < 0.0 {
        s = -s;
    }
    let big = -(z + s) / 2.0;
    Ok(StieltjesPoint { z, m: big.inv() })
}

/// `m'(z) = m² / (1 - m²)` expressed through `m` itself.
pub fn m_prime(m: Complex64) -> Result<Complex64> {
    let m2 = m * m;
    let denom = 1.0 - m2;
    if denom.norm() < 1e-15 {
        return Err(Error::Singularity(format!("m = {m} makes 1 - m² vanish")));
    }
    Ok(m2 / denom)
}
