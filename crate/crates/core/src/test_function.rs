//! Test functions `f` for linear spectral statistics.
//!
//! Each function is evaluable on the real line (eigenvalues, quadrature
//! nodes) and on the complex plane (the contour image `-m - 1/m`).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type ComplexFn = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;

#[derive(Clone)]
enum Repr {
    /// Ascending coefficients `c0 + c1 x + c2 x² + ...`.
    Poly(Vec<f64>),
    Custom { real: RealFn, complex: ComplexFn, derivative: Option<RealFn> },
}

#[derive(Clone)]
pub struct TestFunction {
    label: String,
    repr: Repr,
}

/// Names accepted by [`TestFunction::builtin`].
pub const BUILTINS: [&str; 5] = ["one", "x", "xsq", "xcub", "halfx3"];

impl TestFunction {
    /// Polynomial with ascending coefficients.
    pub fn poly(coeffs: Vec<f64>) -> Self {
        let label = format!(
            "poly:{}",
            coeffs.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(",")
        );
        Self::poly_labeled(label, coeffs)
    }

    fn poly_labeled(label: impl Into<String>, mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { label: label.into(), repr: Repr::Poly(coeffs) }
    }

    pub fn constant(c: f64) -> Self {
        Self::poly_labeled(format!("const:{c}"), vec![c])
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let coeffs = match name {
            "one" => vec![1.0],
            "x" => vec![0.0, 1.0],
            "xsq" => vec![0.0, 0.0, 1.0],
            "xcub" => vec![0.0, 0.0, 0.0, 1.0],
            // ½x(x²−3) = 4cos³θ − 3cosθ = cos 3θ at x = 2cosθ
            "halfx3" => vec![0.0, -1.5, 0.0, 0.5],
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown test function `{other}`; builtins are {}, or poly:c0,c1,...",
                    BUILTINS.join(", ")
                )))
            }
        };
        Ok(Self::poly_labeled(name, coeffs))
    }

    /// Analytic function given by its real and complex evaluations, with an
    /// optional exact derivative.
    pub fn custom(
        label: impl Into<String>,
        real: impl Fn(f64) -> f64 + Send + Sync + 'static,
        complex: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static,
        derivative: Option<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
    ) -> Self {
        Self {
            label: label.into(),
            repr: Repr::Custom {
                real: Arc::new(real),
                complex: Arc::new(complex),
                derivative: derivative.map(Arc::from),
            },
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Poly(c) => Some(c),
            Repr::Custom { .. } => None,
        }
    }

    /// Degree, for polynomials.
    pub fn degree(&self) -> Option<usize> {
        self.coefficients().map(|c| c.len() - 1)
    }

    pub fn is_even(&self) -> bool {
        self.coefficients()
            .is_some_and(|c| c.iter().skip(1).step_by(2).all(|&v| v == 0.0))
    }

    /// True for polynomials with only odd powers (and not identically zero).
    pub fn is_odd(&self) -> bool {
        self.coefficients().is_some_and(|c| {
            c.iter().step_by(2).all(|&v| v == 0.0) && c.iter().skip(1).step_by(2).any(|&v| v != 0.0)
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Poly(c) => c.iter().rev().fold(0.0, |acc, &k| acc * x + k),
            Repr::Custom { real, .. } => real(x),
        }
    }

    pub fn eval_complex(&self, w: Complex64) -> Complex64 {
        match &self.repr {
            Repr::Poly(c) => c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &k| acc * w + k),
            Repr::Custom { complex, .. } => complex(w),
        }
    }

    /// Evaluation that fails on non-finite output.
    pub fn try_eval(&self, x: f64) -> Result<f64> {
        let v = self.eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation { label: self.label.clone(), at: format!("{x}") })
        }
    }

    pub fn try_eval_complex(&self, w: Complex64) -> Result<Complex64> {
        let v = self.eval_complex(w);
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation { label: self.label.clone(), at: format!("{w}") })
        }
    }

    pub fn has_exact_derivative(&self) -> bool {
        match &self.repr {
            Repr::Poly(_) => true,
            Repr::Custom { derivative, .. } => derivative.is_some(),
        }
    }

    /// `f'(x)`: exact when available, otherwise a central difference with
    /// step `1e-6 * max(1, |x|)` (approximate).
    pub fn derivative(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Poly(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, &v)| acc * x + k as f64 * v),
            Repr::Custom { derivative: Some(d), .. } => d(x),
            Repr::Custom { real, .. } => {
                let h = 1e-6 * x.abs().max(1.0);
                (real(x + h) - real(x - h)) / (2.0 * h)
            }
        }
    }
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("TestFunction");
        d.field("label", &self.label);
        if let Some(c) = self.coefficients() {
            d.field("coefficients", &c);
        }
        d.finish()
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    /// A builtin name or `poly:c0,c1,...` (ascending coefficients).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.strip_prefix("poly:") {
            Some(list) => {
                let coeffs = list
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::InvalidParameter(format!("polynomial coefficients `{list}`: {e}")))?;
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidParameter("polynomial coefficients must be finite".into()));
                }
                Ok(Self::poly(coeffs))
            }
            None => Self::builtin(s),
        }
    }
}

impl Serialize for TestFunction {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = serializer.serialize_struct("TestFunction", 2)?;
        st.serialize_field("label", &self.label)?;
        st.serialize_field("coefficients", &self.coefficients())?;
        st.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halfx3_is_chebyshev_t3() {
        let f = TestFunction::builtin("halfx3").unwrap();
        for k in 0..20 {
            let theta = 0.1 + k as f64 * 0.15;
            assert!((f.eval(2.0 * theta.cos()) - (3.0 * theta).cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn poly_alias_and_parse_errors() {
        let a: TestFunction = "poly:0,0,1".parse().unwrap();
        let b: TestFunction = "xsq".parse().unwrap();
        assert_eq!(a.coefficients(), b.coefficients());
        assert!(a.is_even());
        assert!("nope".parse::<TestFunction>().unwrap_err().to_string().contains("halfx3"));
        assert!("poly:1,a".parse::<TestFunction>().is_err());
    }

    #[test]
    fn real_and_complex_agree_on_reals() {
        let f = TestFunction::poly(vec![0.3, -1.0, 2.0, 0.25, -0.5]);
        for k in 0..50 {
            let x = -3.0 + 0.12 * k as f64;
            let z = f.eval_complex(Complex64::new(x, 0.0));
            assert!((z.re - f.eval(x)).abs() < 1e-12 && z.im == 0.0);
        }
    }

    #[test]
    fn derivative_exact_and_fallback() {
        let f = TestFunction::poly(vec![1.0, 2.0, 3.0]);
        assert_eq!(f.derivative(2.0), 14.0);
        let g = TestFunction::custom("exp", f64::exp, |w| w.exp(), None);
        assert!(!g.has_exact_derivative());
        assert!((g.derivative(0.5) - 0.5f64.exp()).abs() < 1e-8);
    }
}
