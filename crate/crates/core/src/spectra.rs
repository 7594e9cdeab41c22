//! The normalized matrix `A = (XᵀX - p I) / sqrt(np)` and its spectrum.
//!
//! Only the `n × n` Gram product is ever formed. Rows of `X` are folded in
//! blocks of [`BLOCK_ROWS`], which lets the Monte Carlo harness stream data
//! it never stores while producing bit-identical Gram matrices.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::data_gen::{DataMatrix, RowStream};
use crate::error::{Error, Result};
use crate::semicircle;
use crate::test_function::TestFunction;

pub const BLOCK_ROWS: usize = 256;

/// Running `XᵀX` over row blocks of `X`.
#[derive(Debug, Clone)]
pub struct GramAccumulator {
    n: usize,
    rows: usize,
    gram: Vec<f64>,
    fourth: f64,
}

impl GramAccumulator {
    pub fn new(n: usize) -> Self {
        Self { n, rows: 0, gram: vec![0.0; n * n], fourth: 0.0 }
    }

    /// Adds a row-major block of `block.len() / n` rows.
    pub fn add_block(&mut self, block: &[f64]) {
        let n = self.n;
        let rows = block.len() / n;
        if rows == 0 {
            return;
        }
        let block = &block[..rows * n];
        // SAFETY: dimensions and strides describe `block` as a rows×n row-major
        // matrix (read as its n×rows transpose for the left operand) and `gram`
        // as n×n row-major; all indices stay within the slices.
        unsafe {
            matrixmultiply::dgemm(
                n,
                rows,
                n,
                1.0,
                block.as_ptr(),
                1,
                n as isize,
                block.as_ptr(),
                n as isize,
                1,
                1.0,
                self.gram.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        self.fourth += block.iter().map(|v| (v * v) * (v * v)).sum::<f64>();
        self.rows += rows;
    }

    /// Drains a row stream into the accumulator.
    pub fn consume(&mut self, stream: &mut RowStream) {
        let mut buf = vec![0.0; BLOCK_ROWS * self.n];
        loop {
            let rows = stream.next_block(&mut buf);
            if rows == 0 {
                break;
            }
            self.add_block(&buf[..rows * self.n]);
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Mean of fourth powers of every entry seen so far.
    pub fn mean_fourth_power(&self) -> f64 {
        self.fourth / (self.rows * self.n) as f64
    }

    /// `(XᵀX - p I) / sqrt(np)` with `p` the number of rows consumed.
    pub fn normalized(&self) -> NormalizedMatrix {
        let (n, p) = (self.n, self.rows);
        let scale = ((n as f64) * (p as f64)).sqrt().recip();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = (self.gram[i * n + i] - p as f64) * scale;
            for j in 0..i {
                let v = 0.5 * (self.gram[i * n + j] + self.gram[j * n + i]) * scale;
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        NormalizedMatrix { n, p, entries: a }
    }
}

/// Symmetric `n × n` matrix `(XᵀX - p I) / sqrt(np)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMatrix {
    n: usize,
    p: usize,
    entries: Vec<f64>,
}

impl NormalizedMatrix {
    /// Wraps an arbitrary symmetric matrix, e.g. for testing the eigensolver.
    pub fn from_symmetric(n: usize, p: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries", n * n),
                found: format!("{}", entries.len()),
            });
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (entries[i * n + j], entries[j * n + i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidParameter(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, p, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }
}

/// Builds `A` from a `p × n` data matrix.
pub fn normalized_gram(data: &DataMatrix) -> NormalizedMatrix {
    gram_of(data).normalized()
}

pub(crate) fn gram_of(data: &DataMatrix) -> GramAccumulator {
    let n = data.n();
    let mut acc = GramAccumulator::new(n);
    for block in data.as_slice().chunks(BLOCK_ROWS * n) {
        acc.add_block(block);
    }
    acc
}

/// Sorted eigenvalues of a normalized matrix together with `(n, p)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    values: Vec<f64>,
    n: usize,
    p: usize,
}

impl Spectrum {
    /// Sorts `values`; they must be finite.
    pub fn from_values(mut values: Vec<f64>, p: usize) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite eigenvalue".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { n: values.len(), values, p })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Kolmogorov distance between the empirical distribution of the
    /// eigenvalues and the semicircle law.
    pub fn kolmogorov_distance(&self) -> f64 {
        let n = self.n as f64;
        self.values
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = semicircle::cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    /// One eigenvalue per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for v in &self.values {
            writeln!(w, "{v:?}")?;
        }
        Ok(())
    }
}

pub fn eigenvalues(a: &NormalizedMatrix) -> Result<Spectrum> {
    let n = a.n;
    if n == 0 {
        return Spectrum::from_values(Vec::new(), a.p);
    }
    let m = DMatrix::from_row_slice(n, n, &a.entries);
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical(format!("symmetric eigensolver did not converge (n = {n})")))?;
    Spectrum::from_values(eig.eigenvalues.iter().copied().collect(), a.p)
}

/// `Σ_j f(λ_j)`.
pub fn lss(spectrum: &Spectrum, f: &TestFunction) -> Result<f64> {
    spectrum.values.iter().map(|&x| f.try_eval(x)).sum()
}

/// `tr(A Aᵀ) = Σ_ij A_ij²`, equal to the sum of squared eigenvalues.
pub fn frobenius_trace(a: &NormalizedMatrix) -> f64 {
    a.entries.iter().map(|v| v * v).sum()
}
