//! Exact symbolic expressions in a canonical sum-of-terms form.
//!
//! A term is a rational coefficient times a Laurent monomial in the variables
//! times a product of atoms: `exp(A)` (at most one per term), `flat(A) =
//! exp(-1/A^2)` and `1/A` for multi-term `A`. Differentiation is closed in
//! this set, which is what the flat-function fixtures need.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

pub type Coef = Ratio<i128>;

/// Space variable `x_{i+1}` or parameter `t_{j+1}` (stored zero-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    X(u16),
    T(u16),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::T(i) => write!(f, "t{}", i + 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Exp(Expr),
    /// `exp(-1/A^2)`, with `A` normalized to a positive leading coefficient.
    Flat(Expr),
    /// `1/A`, with `A` multi-term, leading coefficient 1 and no monomial factor.
    Recip(Expr),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key {
    mono: Vec<(Var, i32)>,
    atoms: Vec<(Atom, u32)>,
}

impl Key {
    fn is_unit(&self) -> bool {
        self.mono.is_empty() && self.atoms.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Expr {
    terms: BTreeMap<Key, Coef>,
}

fn merge_mono(a: &[(Var, i32)], b: &[(Var, i32)]) -> Vec<(Var, i32)> {
    let mut m: BTreeMap<Var, i32> = a.iter().copied().collect();
    for &(v, k) in b {
        *m.entry(v).or_insert(0) += k;
    }
    m.into_iter().filter(|(_, k)| *k != 0).collect()
}

fn mul_keys(a: &Key, b: &Key) -> Key {
    let mono = merge_mono(&a.mono, &b.mono);
    let mut exp_arg = Expr::zero();
    let mut rest: BTreeMap<Atom, u32> = BTreeMap::new();
    for (atom, m) in a.atoms.iter().chain(&b.atoms) {
        match atom {
            Atom::Exp(arg) => exp_arg = &exp_arg + arg,
            other => *rest.entry(other.clone()).or_insert(0) += m,
        }
    }
    let mut atoms: Vec<(Atom, u32)> = rest.into_iter().collect();
    if !exp_arg.is_zero() {
        atoms.push((Atom::Exp(exp_arg), 1));
        atoms.sort();
    }
    Key { mono, atoms }
}

pub(crate) fn coef_to_f64(c: &Coef) -> f64 {
    *c.numer() as f64 / *c.denom() as f64
}

impl Expr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::constant(Coef::one())
    }

    pub fn constant(c: Coef) -> Self {
        Self::term(Key::default(), c)
    }

    pub fn int(n: i128) -> Self {
        Self::constant(Coef::from_integer(n))
    }

    pub fn var(v: Var) -> Self {
        Self::term(Key { mono: vec![(v, 1)], atoms: vec![] }, Coef::one())
    }

    pub fn x(i: usize) -> Self {
        Self::var(Var::X(i as u16))
    }

    pub fn t(j: usize) -> Self {
        Self::var(Var::T(j as u16))
    }

    fn term(key: Key, c: Coef) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(key, c);
        }
        Self { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// The rational value if the expression is a constant.
    pub fn as_constant(&self) -> Option<Coef> {
        match self.terms.len() {
            0 => Some(Coef::zero()),
            1 => self.terms.get(&Key::default()).copied(),
            _ => None,
        }
    }

    /// True when every term is a monomial with non-negative exponents.
    pub fn is_polynomial(&self) -> bool {
        self.terms.keys().all(|k| k.atoms.is_empty() && k.mono.iter().all(|(_, e)| *e >= 0))
    }

    /// Variables occurring anywhere in the expression.
    pub fn variables(&self) -> Vec<Var> {
        let mut out = std::collections::BTreeSet::new();
        self.collect_vars(&mut out);
        out.into_iter().collect()
    }

    fn collect_vars(&self, out: &mut std::collections::BTreeSet<Var>) {
        for k in self.terms.keys() {
            out.extend(k.mono.iter().map(|(v, _)| *v));
            for (a, _) in &k.atoms {
                match a {
                    Atom::Exp(e) | Atom::Flat(e) | Atom::Recip(e) => e.collect_vars(out),
                }
            }
        }
    }

    pub fn scale(&self, c: Coef) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        Self { terms: self.terms.iter().map(|(k, v)| (k.clone(), *v * c)).collect() }
    }

    fn add_term(&mut self, key: Key, c: Coef) {
        if c.is_zero() {
            return;
        }
        let e = self.terms.entry(key).or_insert_with(Coef::zero);
        *e += c;
        if e.is_zero() {
            self.terms.retain(|_, v| !v.is_zero());
        }
    }

    pub fn pow(&self, n: i32) -> Result<Self> {
        if n < 0 {
            return self.inv()?.pow(-n);
        }
        let mut out = Self::one();
        for _ in 0..n {
            out = &out * self;
        }
        Ok(out)
    }

    /// Multiplicative inverse.
    pub fn inv(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::Contract("division by zero expression".into()));
        }
        if self.terms.len() == 1 {
            let (k, c) = self.terms.iter().next().expect("one term");
            let mut out = Self::term(Key { mono: k.mono.iter().map(|&(v, e)| (v, -e)).collect(), atoms: vec![] }, c.recip());
            for (atom, m) in &k.atoms {
                let factor = match atom {
                    Atom::Exp(a) => a.neg().exp(),
                    // 1/flat(A)^m = exp(m / A^2).
                    Atom::Flat(a) => a.pow(-2)?.scale(Coef::from_integer(i128::from(*m))).exp(),
                    Atom::Recip(a) => a.pow(*m as i32)?,
                };
                out = &out * &factor;
            }
            return Ok(out);
        }
        // Pull out the common monomial and the leading coefficient.
        let mut common: BTreeMap<Var, i32> = BTreeMap::new();
        let mut first = true;
        for k in self.terms.keys() {
            let here: BTreeMap<Var, i32> = k.mono.iter().copied().collect();
            if first {
                common = here;
                first = false;
            } else {
                let keys: Vec<Var> = common.keys().copied().chain(here.keys().copied()).collect();
                let mut next = BTreeMap::new();
                for v in keys {
                    let e = common.get(&v).copied().unwrap_or(0).min(here.get(&v).copied().unwrap_or(0));
                    if e != 0 {
                        next.insert(v, e);
                    }
                }
                common = next;
            }
        }
        let mono_inv = Key { mono: common.iter().map(|(v, e)| (*v, -e)).collect(), atoms: vec![] };
        let reduced = &Self::term(mono_inv.clone(), Coef::one()) * self;
        let lead = *reduced.terms.values().next().expect("nonempty");
        let normalized = reduced.scale(lead.recip());
        let recip = Self::term(Key { mono: mono_inv.mono, atoms: vec![(Atom::Recip(normalized), 1)] }, lead.recip());
        Ok(recip)
    }

    pub fn exp(&self) -> Self {
        if self.is_zero() {
            return Self::one();
        }
        Self::term(Key { mono: vec![], atoms: vec![(Atom::Exp(self.clone()), 1)] }, Coef::one())
    }

    /// `exp(-1/A^2)`, which is 0 where `A = 0`.
    pub fn flat(&self) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        let lead = *self.terms.values().next().expect("nonempty");
        let arg = if lead.is_negative() { self.neg() } else { self.clone() };
        Self::term(Key { mono: vec![], atoms: vec![(Atom::Flat(arg), 1)] }, Coef::one())
    }

    pub fn neg(&self) -> Self {
        self.scale(-Coef::one())
    }

    pub fn diff(&self, var: Var) -> Self {
        let mut out = Self::zero();
        for (key, c) in &self.terms {
            let mut logd = Self::zero();
            for &(v, k) in &key.mono {
                if v == var {
                    logd.add_term(Key { mono: vec![(v, -1)], atoms: vec![] }, Coef::from_integer(i128::from(k)));
                }
            }
            for (atom, m) in &key.atoms {
                let d = match atom {
                    Atom::Exp(a) => a.diff(var),
                    Atom::Flat(a) => {
                        let da = a.diff(var);
                        if da.is_zero() {
                            continue;
                        }
                        let cube = a.pow(-3).expect("flat argument is nonzero");
                        (&da * &cube).scale(Coef::from_integer(2))
                    }
                    Atom::Recip(a) => {
                        let da = a.diff(var);
                        if da.is_zero() {
                            continue;
                        }
                        (&da * &a.inv().expect("recip argument is nonzero")).neg()
                    }
                };
                logd = &logd + &d.scale(Coef::from_integer(i128::from(*m)));
            }
            if !logd.is_zero() {
                out = &out + &(&Self::term(key.clone(), *c) * &logd);
            }
        }
        out
    }

    /// Evaluate with `x` and `t` supplying the variable values. A term whose
    /// flat factor vanishes is 0 regardless of its other factors.
    pub fn eval(&self, x: &[f64], t: &[f64]) -> f64 {
        let mut sum = 0.0;
        'terms: for (key, c) in &self.terms {
            let mut v = coef_to_f64(c);
            for (atom, m) in &key.atoms {
                if let Atom::Flat(a) = atom {
                    let av = a.eval(x, t);
                    if av == 0.0 {
                        continue 'terms;
                    }
                    let f = (-1.0 / (av * av)).exp();
                    if f == 0.0 {
                        continue 'terms;
                    }
                    v *= f.powi(*m as i32);
                }
            }
            for &(var, k) in &key.mono {
                let base = match var {
                    Var::X(i) => x[i as usize],
                    Var::T(j) => t[j as usize],
                };
                v *= base.powi(k);
            }
            for (atom, m) in &key.atoms {
                match atom {
                    Atom::Exp(a) => v *= a.eval(x, t).exp(),
                    Atom::Recip(a) => v /= a.eval(x, t).powi(*m as i32),
                    Atom::Flat(_) => {}
                }
            }
            sum += v;
        }
        sum
    }

    /// Replace `t_j` by `t_j` scaled with `s[j]` (used for dilated surfaces).
    pub fn substitute_t_scaled(&self, s: &[Coef]) -> Self {
        let mut out = Self::zero();
        for (key, c) in &self.terms {
            let mut coef = *c;
            for &(v, k) in &key.mono {
                if let Var::T(j) = v {
                    let sj = s[j as usize];
                    coef *= if k >= 0 { num_traits::pow(sj, k as usize) } else { num_traits::pow(sj.recip(), (-k) as usize) };
                }
            }
            let mut term = Self::term(Key { mono: key.mono.clone(), atoms: vec![] }, coef);
            for (atom, m) in &key.atoms {
                let f = match atom {
                    Atom::Exp(a) => a.substitute_t_scaled(s).exp(),
                    Atom::Flat(a) => a.substitute_t_scaled(s).flat(),
                    Atom::Recip(a) => a.substitute_t_scaled(s).inv().expect("nonzero"),
                };
                term = &term * &f.pow(*m as i32).expect("nonnegative power");
            }
            out = &out + &term;
        }
        out
    }
}

impl std::ops::Add for &Expr {
    type Output = Expr;
    fn add(self, rhs: &Expr) -> Expr {
        let mut out = self.clone();
        for (k, c) in &rhs.terms {
            out.add_term(k.clone(), *c);
        }
        out
    }
}

impl std::ops::Sub for &Expr {
    type Output = Expr;
    fn sub(self, rhs: &Expr) -> Expr {
        let mut out = self.clone();
        for (k, c) in &rhs.terms {
            out.add_term(k.clone(), -*c);
        }
        out
    }
}

impl std::ops::Mul for &Expr {
    type Output = Expr;
    fn mul(self, rhs: &Expr) -> Expr {
        let mut out = Expr::zero();
        for (ka, ca) in &self.terms {
            for (kb, cb) in &rhs.terms {
                let key = if ka.is_unit() {
                    kb.clone()
                } else if kb.is_unit() {
                    ka.clone()
                } else {
                    mul_keys(ka, kb)
                };
                out.add_term(key, *ca * *cb);
            }
        }
        out
    }
}

fn fmt_coef(c: &Coef) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

fn fmt_key(key: &Key) -> Vec<String> {
    let mut parts = Vec::new();
    for &(v, k) in &key.mono {
        parts.push(if k == 1 { v.to_string() } else { format!("{v}^{k}") });
    }
    for (atom, m) in &key.atoms {
        let (s, e) = match atom {
            Atom::Exp(a) => (format!("exp({a})"), i64::from(*m)),
            Atom::Flat(a) => (format!("flat({a})"), i64::from(*m)),
            Atom::Recip(a) => (format!("({a})"), -i64::from(*m)),
        };
        parts.push(if e == 1 { s } else { format!("{s}^{e}") });
    }
    parts
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (key, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            if i == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            }
            let a = c.abs();
            let parts = fmt_key(key);
            if parts.is_empty() {
                write!(f, "{}", fmt_coef(&a))?;
            } else if a.is_one() {
                write!(f, "{}", parts.join("*"))?;
            } else {
                write!(f, "{}*{}", fmt_coef(&a), parts.join("*"))?;
            }
        }
        Ok(())
    }
}

/// Helper for tests and fixtures: integer coefficient.
pub fn q(n: i128, d: i128) -> Coef {
    Ratio::new(n, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::x(0)
    }

    #[test]
    fn polynomial_arithmetic_is_canonical() {
        let a = &(&x() + &Expr::one()) * &(&x() - &Expr::one());
        let b = &x().pow(2).unwrap() - &Expr::one();
        assert_eq!(a, b);
        assert!((&a - &b).is_zero());
    }

    #[test]
    fn flat_derivative() {
        // d/dx exp(-1/x^2) = 2 x^-3 exp(-1/x^2).
        let g = x().flat();
        let dg = g.diff(Var::X(0));
        let expect = &(&x().pow(-3).unwrap() * &g).scale(q(2, 1)) + &Expr::zero();
        assert_eq!(dg, expect);
        assert_eq!(g.eval(&[0.0], &[]), 0.0);
        assert_eq!(dg.eval(&[0.0], &[]), 0.0);
        let v = 0.7f64;
        assert!((dg.eval(&[v], &[]) - 2.0 / v.powi(3) * (-1.0 / (v * v)).exp()).abs() < 1e-14);
    }

    #[test]
    fn flat_is_sign_canonical() {
        assert_eq!(x().neg().flat(), x().flat());
    }

    #[test]
    fn exp_combines() {
        let a = &x().exp() * &x().neg().exp();
        assert_eq!(a, Expr::one());
        let b = &x().exp() * &x().exp();
        assert_eq!(b, x().scale(q(2, 1)).exp());
    }

    #[test]
    fn reciprocal_of_sum() {
        let s = &x() + &Expr::one();
        let r = s.inv().unwrap();
        let d = r.diff(Var::X(0));
        // d/dx 1/(x+1) = -1/(x+1)^2
        let expect = s.pow(-2).unwrap().neg();
        assert_eq!(d, expect);
        assert!((r.eval(&[1.0], &[]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn inverse_of_flat_is_exponential() {
        let g = x().flat();
        let p = &g * &g.inv().unwrap();
        // flat(x) * exp(x^-2) is not merged symbolically but evaluates to 1.
        assert!((p.eval(&[0.9], &[]) - 1.0).abs() < 1e-14);
    }
}
