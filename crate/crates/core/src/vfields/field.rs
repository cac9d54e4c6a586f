use std::fmt;

use serde::{Deserialize, Serialize};

use super::expr::{Coef, Expr, Var};
use super::parser::parse_expr;
use crate::dilations::DegreeVector;
use crate::error::{contract, validation, Result};

/// `X = sum_i c_i(x) d/dx_i` on `R^n`; coefficients may also depend on `t`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VField {
    coeffs: Vec<Expr>,
}

impl VField {
    pub fn new(coeffs: Vec<Expr>) -> Self {
        Self { coeffs }
    }

    pub fn zero(n: usize) -> Self {
        Self { coeffs: vec![Expr::zero(); n] }
    }

    /// `d/dx_i`.
    pub fn coordinate(n: usize, i: usize) -> Self {
        let mut f = Self::zero(n);
        f.coeffs[i] = Expr::one();
        f
    }

    /// Parse one coefficient string per coordinate; `nt` parameters allowed.
    pub fn parse(coeffs: &[&str], nt: usize) -> Result<Self> {
        let n = coeffs.len();
        Ok(Self { coeffs: coeffs.iter().map(|s| parse_expr(s, n, nt)).collect::<Result<_>>()? })
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Expr] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Expr::is_zero)
    }

    /// `X f = sum_l c_l d_l f`.
    pub fn apply(&self, f: &Expr) -> Expr {
        let mut out = Expr::zero();
        for (l, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let d = f.diff(Var::X(l as u16));
            if !d.is_zero() {
                out = &out + &(c * &d);
            }
        }
        out
    }

    /// `[X, Y]^i = X(Y^i) - Y(X^i)`.
    pub fn bracket(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return contract(format!("bracket of fields on R^{} and R^{}", self.dim(), other.dim()));
        }
        Ok(Self {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(xi, yi)| &self.apply(yi) - &other.apply(xi)).collect(),
        })
    }

    pub fn scale(&self, c: Coef) -> Self {
        Self { coeffs: self.coeffs.iter().map(|e| e.scale(c)).collect() }
    }

    pub fn mul_expr(&self, f: &Expr) -> Self {
        Self { coeffs: self.coeffs.iter().map(|e| e * f).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect() }
    }

    pub fn eval(&self, x: &[f64], t: &[f64]) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.eval(x, t)).collect()
    }

    pub fn eval_into(&self, x: &[f64], t: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.coeffs) {
            *o = c.eval(x, t);
        }
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.coeffs.iter().map(ToString::to_string).collect()
    }
}

impl fmt::Display for VField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.to_strings().join(", "))
    }
}

/// A vector field with a nonzero formal degree.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreedField {
    pub field: VField,
    pub degree: DegreeVector,
}

impl DegreedField {
    pub fn new(field: VField, degree: DegreeVector) -> Result<Self> {
        if degree.is_zero() {
            return validation("formal degree must be nonzero");
        }
        Ok(Self { field, degree })
    }

    pub fn to_config(&self) -> FieldConfig {
        FieldConfig { coeffs: self.field.to_strings(), degree: self.degree.components().iter().map(|r| (*r).into()).collect() }
    }
}

/// Serializable field with degree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub coeffs: Vec<String>,
    pub degree: Vec<crate::util::RationalRepr>,
}

impl FieldConfig {
    pub fn build(&self) -> Result<DegreedField> {
        let refs: Vec<&str> = self.coeffs.iter().map(String::as_str).collect();
        let field = VField::parse(&refs, 0)?;
        let degree = self.degree.iter().map(|r| r.to_rational()).collect::<Result<Vec<_>>>()?;
        DegreedField::new(field, DegreeVector::new(degree)?)
    }
}
