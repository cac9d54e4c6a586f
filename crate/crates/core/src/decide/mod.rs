//! Newton-line boundedness criterion for translation-invariant polynomial
//! surfaces, counterexample multipliers, and the Heisenberg case study.

mod counterexample;
pub mod heisenberg;

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

pub use counterexample::{
    counterexample_multiplier, counterexample_pieces, select_witness, CounterexampleSetup, MultiplierPiece,
};

pub type Q = Ratio<i64>;

/// `p(s, t) = sum c_(e,f) s^e t^f` with exact rational coefficients and no
/// constant term. Zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PolySurface {
    terms: BTreeMap<(u32, u32), Q>,
}

impl PolySurface {
    pub fn new(terms: impl IntoIterator<Item = ((u32, u32), Q)>) -> Result<Self> {
        let mut map: BTreeMap<(u32, u32), Q> = BTreeMap::new();
        for (k, c) in terms {
            *map.entry(k).or_insert_with(Q::zero) += c;
        }
        map.retain(|_, c| !c.is_zero());
        if map.contains_key(&(0, 0)) {
            return validation("polynomial surface must not have a constant term");
        }
        if map.is_empty() {
            return validation("polynomial surface must be nonzero");
        }
        Ok(Self { terms: map })
    }

    /// From `(e, f, numerator, denominator)` quadruples.
    pub fn from_quadruples(q: &[(u32, u32, i64, i64)]) -> Result<Self> {
        let mut terms = Vec::with_capacity(q.len());
        for &(e, f, n, d) in q {
            if d == 0 {
                return validation(format!("zero denominator in coefficient of s^{e} t^{f}"));
            }
            terms.push(((e, f), Q::new(n, d)));
        }
        Self::new(terms)
    }

    /// Sum of monomials with unit coefficients.
    pub fn monomials(exps: &[(u32, u32)]) -> Result<Self> {
        Self::new(exps.iter().map(|&k| (k, Q::one())))
    }

    pub fn terms(&self) -> &BTreeMap<(u32, u32), Q> {
        &self.terms
    }

    pub fn coefficient(&self, e: u32, f: u32) -> Q {
        self.terms.get(&(e, f)).copied().unwrap_or_else(Q::zero)
    }

    /// `p(t, s)`.
    pub fn swapped(&self) -> Self {
        Self { terms: self.terms.iter().map(|(&(e, f), c)| ((f, e), *c)).collect() }
    }

    /// `p(lambda s, t)`.
    pub fn scaled_s(&self, lambda: Q) -> Result<Self> {
        if lambda.is_zero() {
            return validation("scaling by zero");
        }
        Self::new(self.terms.iter().map(|(&(e, f), c)| ((e, f), *c * pow_q(lambda, e))))
    }

    /// Minimal pure s-exponent, `None` for infinity.
    pub fn a(&self) -> Option<u32> {
        self.terms.keys().filter(|(_, f)| *f == 0).map(|(e, _)| *e).min()
    }

    /// Minimal pure t-exponent, `None` for infinity.
    pub fn b(&self) -> Option<u32> {
        self.terms.keys().filter(|(e, _)| *e == 0).map(|(_, f)| *f).min()
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        self.terms.iter().map(|(&(e, f), c)| crate::dilations::to_f64(c) * s.powi(e as i32) * t.powi(f as i32)).sum()
    }
}

fn pow_q(x: Q, n: u32) -> Q {
    (0..n).fold(Q::one(), |acc, _| acc * x)
}

impl fmt::Display for PolySurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (&(e, g), c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if !c.is_one() {
                write!(f, "({c})")?;
            }
            match (e, g) {
                (0, g) => write!(f, "t^{g}")?,
                (e, 0) => write!(f, "s^{e}")?,
                (e, g) => write!(f, "s^{e} t^{g}")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NewtonMode {
    Product,
    Flag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Bounded,
    Unbounded,
    UnboundedExtended,
    Undecided,
}

impl Classification {
    /// Process exit code reserved for this verdict.
    pub fn exit_code(self) -> i32 {
        match self {
            Classification::Bounded => 0,
            Classification::Unbounded => 3,
            Classification::UnboundedExtended => 4,
            Classification::Undecided => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Swap the roles of s and t in flag mode when `b > a`.
    #[serde(default)]
    pub swap_roles: bool,
    /// Apply the line test when `a` or `b` is infinite (with `1/inf = 0`).
    /// When false, such polynomials are `undecided`.
    #[serde(default = "yes")]
    pub allow_extension: bool,
}

fn yes() -> bool {
    true
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { swap_roles: false, allow_extension: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewtonVerdict {
    pub mode: NewtonMode,
    /// Minimal pure s-exponent, `None` when there is none.
    pub a: Option<u32>,
    /// Minimal pure t-exponent, `None` when there is none.
    pub b: Option<u32>,
    pub classification: Classification,
    /// Exponents strictly below the line, in increasing order.
    pub witnesses: Vec<(u32, u32)>,
    /// Whether the verdict relies on the infinite-exponent extension.
    pub extended: bool,
    /// Whether s and t were swapped to satisfy `b <= a` in flag mode.
    pub swapped: bool,
}

fn recip(x: Option<u32>) -> Q {
    match x {
        Some(v) => Q::new(1, i64::from(v)),
        None => Q::zero(),
    }
}

/// Exact line test. In product mode an exponent `(e, f)` is admissible iff
/// `e/a + f/b >= 1`; in flag mode iff `e + f >= b`, which needs `b <= a`.
pub fn newton_verdict(p: &PolySurface, mode: NewtonMode, opts: NewtonOptions) -> Result<NewtonVerdict> {
    let (mut a, mut b) = (p.a(), p.b());
    let mut poly = std::borrow::Cow::Borrowed(p);
    let mut swapped = false;
    if mode == NewtonMode::Flag && le_inf(a, b) && a != b {
        if !opts.swap_roles {
            return Err(Error::Validation(format!(
                "flag mode needs b <= a, got a = {}, b = {}; set swap_roles to exchange s and t",
                show(a),
                show(b)
            )));
        }
        poly = std::borrow::Cow::Owned(p.swapped());
        std::mem::swap(&mut a, &mut b);
        swapped = true;
    }
    let extended = a.is_none() || b.is_none();
    let below = |e: u32, f: u32| -> bool {
        match mode {
            NewtonMode::Product => recip(a) * Q::from(i64::from(e)) + recip(b) * Q::from(i64::from(f)) < Q::one(),
            NewtonMode::Flag => match b {
                Some(bv) => e + f < bv,
                None => true,
            },
        }
    };
    let witnesses: Vec<(u32, u32)> = poly.terms.keys().copied().filter(|&(e, f)| below(e, f)).collect();
    let classification = if extended && !opts.allow_extension {
        Classification::Undecided
    } else if witnesses.is_empty() {
        Classification::Bounded
    } else if extended {
        Classification::UnboundedExtended
    } else {
        Classification::Unbounded
    };
    Ok(NewtonVerdict { mode, a, b, classification, witnesses, extended, swapped })
}

/// `x < y` on exponents where `None` is infinity.
fn le_inf(x: Option<u32>, y: Option<u32>) -> bool {
    match (x, y) {
        (Some(x), Some(y)) => x < y,
        (Some(_), None) => true,
        _ => false,
    }
}

fn show(x: Option<u32>) -> String {
    x.map_or_else(|| "inf".to_string(), |v| v.to_string())
}

/// The hand-classified corpus used by the test suite and the gallery:
/// `(label, monomials, product verdict, flag verdict)`; `None` marks cases
/// where flag mode is not applicable without a role swap.
pub fn reference_corpus() -> Vec<(&'static str, Vec<(u32, u32)>, Classification, Option<Classification>)> {
    use Classification::*;
    vec![
        ("s+t", vec![(1, 0), (0, 1)], Bounded, Some(Bounded)),
        ("s^3+t^3+st", vec![(3, 0), (0, 3), (1, 1)], Unbounded, Some(Unbounded)),
        ("s^4+t^2+st", vec![(4, 0), (0, 2), (1, 1)], Unbounded, Some(Bounded)),
        ("st", vec![(1, 1)], UnboundedExtended, Some(UnboundedExtended)),
        ("s^2+t^2+st", vec![(2, 0), (0, 2), (1, 1)], Bounded, Some(Bounded)),
        ("s+t+st", vec![(1, 0), (0, 1), (1, 1)], Bounded, Some(Bounded)),
        ("s^2+t^3+st", vec![(2, 0), (0, 3), (1, 1)], Unbounded, None),
        ("s^2+t^3+st^2", vec![(2, 0), (0, 3), (1, 2)], Bounded, None),
        ("s^2+t^2+s", vec![(2, 0), (0, 2), (1, 0)], Bounded, None),
        ("s^3+t+st", vec![(3, 0), (0, 1), (1, 1)], Bounded, Some(Bounded)),
        ("s^6+t^6+s^2t^2+s^3t", vec![(6, 0), (0, 6), (2, 2), (3, 1)], Unbounded, Some(Unbounded)),
        ("s^4+t^4+s^2t^2", vec![(4, 0), (0, 4), (2, 2)], Bounded, Some(Bounded)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(m: &[(u32, u32)]) -> PolySurface {
        PolySurface::monomials(m).unwrap()
    }

    #[test]
    fn spec_examples() {
        let v = newton_verdict(&poly(&[(1, 0), (0, 1)]), NewtonMode::Product, Default::default()).unwrap();
        assert_eq!(v.classification, Classification::Bounded);
        assert!(v.witnesses.is_empty());

        let v = newton_verdict(&poly(&[(3, 0), (0, 3), (1, 1)]), NewtonMode::Product, Default::default()).unwrap();
        assert_eq!(v.classification, Classification::Unbounded);
        assert_eq!(v.witnesses, vec![(1, 1)]);

        let p = poly(&[(4, 0), (0, 2), (1, 1)]);
        assert_eq!(newton_verdict(&p, NewtonMode::Flag, Default::default()).unwrap().classification, Classification::Bounded);
        assert_eq!(newton_verdict(&p, NewtonMode::Product, Default::default()).unwrap().classification, Classification::Unbounded);

        let v = newton_verdict(&poly(&[(1, 1)]), NewtonMode::Product, Default::default()).unwrap();
        assert_eq!(v.classification, Classification::UnboundedExtended);
        assert_eq!(v.classification.exit_code(), 4);
    }

    #[test]
    fn flag_requires_ordered_exponents() {
        let p = poly(&[(2, 0), (0, 3), (1, 1)]);
        assert!(matches!(newton_verdict(&p, NewtonMode::Flag, Default::default()), Err(Error::Validation(_))));
        let v = newton_verdict(&p, NewtonMode::Flag, NewtonOptions { swap_roles: true, ..Default::default() }).unwrap();
        assert!(v.swapped);
        assert_eq!((v.a, v.b), (Some(3), Some(2)));
        assert_eq!(v.classification, Classification::Bounded);
    }

    #[test]
    fn extension_can_be_disabled() {
        let opts = NewtonOptions { allow_extension: false, ..Default::default() };
        let v = newton_verdict(&poly(&[(1, 1)]), NewtonMode::Product, opts).unwrap();
        assert_eq!(v.classification, Classification::Undecided);
        assert_eq!(v.classification.exit_code(), 5);
    }

    #[test]
    fn rejects_constant_and_zero() {
        assert!(PolySurface::from_quadruples(&[(0, 0, 1, 1)]).is_err());
        assert!(PolySurface::from_quadruples(&[(1, 0, 1, 1), (1, 0, -1, 1)]).is_err());
        assert!(PolySurface::from_quadruples(&[(1, 0, 1, 0)]).is_err());
    }

    #[test]
    fn display_is_readable() {
        let p = PolySurface::from_quadruples(&[(1, 1, 1, 2), (3, 0, 1, 1)]).unwrap();
        assert_eq!(p.to_string(), "(1/2)s^1 t^1 + s^3");
    }
}
