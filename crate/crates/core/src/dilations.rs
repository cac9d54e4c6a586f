//! Multi-parameter dilations, formal degrees and the cancellation calculus
//! attached to a parameter lattice.
//!
//! A [`DilationScheme`] fixes exponents `e_1, ..., e_N` in `[0, inf)^nu` and acts
//! on `t` by `(delta t)_i = delta^{e_i} t_i` with `delta^{e} = prod_mu delta_mu^{e^mu}`.
//! A [`ParamLattice`] stores the dyadic shadow `-log2 A` of the admissible
//! parameter set, which must be closed under coordinatewise minimum.

use std::collections::BTreeSet;
use std::fmt;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{contract, validation, Error, Result};
use crate::util::RationalRepr;

/// Exact rational used for exponents and degrees.
pub type Rational = Ratio<i64>;

/// Exponent matrix of a multi-parameter dilation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DilationScheme {
    nu: usize,
    exponents: Vec<Vec<Rational>>,
}

impl DilationScheme {
    pub fn new(nu: usize, exponents: Vec<Vec<Rational>>) -> Result<Self> {
        if nu == 0 || exponents.is_empty() {
            return validation("dilation scheme needs nu >= 1 and N >= 1");
        }
        for (i, e) in exponents.iter().enumerate() {
            if e.len() != nu {
                return validation(format!("exponent e_{} has {} components, expected {nu}", i + 1, e.len()));
            }
            if e.iter().any(|c| *c < Rational::zero()) {
                return validation(format!("exponent e_{} has a negative component", i + 1));
            }
            if e.iter().all(|c| c.is_zero()) {
                return validation(format!("exponent e_{} is zero", i + 1));
            }
        }
        Ok(Self { nu, exponents })
    }

    /// Convenience constructor from integer exponents.
    pub fn from_ints(rows: &[&[i64]]) -> Result<Self> {
        let nu = rows.first().map_or(0, |r| r.len());
        Self::new(nu, rows.iter().map(|r| r.iter().map(|&v| Rational::from_integer(v)).collect()).collect())
    }

    /// One parameter per coordinate: `e_i` is the i-th unit vector.
    pub fn product(n: usize) -> Self {
        let exps = (0..n)
            .map(|i| (0..n).map(|m| Rational::from_integer(i64::from(i == m))).collect())
            .collect();
        Self { nu: n, exponents: exps }
    }

    /// Isotropic single-parameter scheme on `R^n`.
    pub fn isotropic(n: usize) -> Self {
        Self { nu: 1, exponents: vec![vec![Rational::from_integer(1)]; n] }
    }

    /// Zygmund dilations `(d1 x, d2 y, d1 d2 t)`.
    pub fn heisenberg() -> Self {
        Self::from_ints(&[&[1, 0], &[0, 1], &[1, 1]]).expect("static scheme")
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    /// The t-space dimension N.
    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[Vec<Rational>] {
        &self.exponents
    }

    pub fn exponent(&self, i: usize) -> &[Rational] {
        &self.exponents[i]
    }

    /// `delta^{e_i}` in floating point.
    pub fn power(&self, delta: &[f64], i: usize) -> f64 {
        delta_power(delta, &self.exponents[i])
    }

    pub fn scale_point(&self, delta: &[f64], t: &[f64]) -> Result<Vec<f64>> {
        if delta.len() != self.nu || t.len() != self.dim() {
            return contract(format!(
                "scale_point: delta has {} entries (nu = {}), t has {} (N = {})",
                delta.len(),
                self.nu,
                t.len(),
                self.dim()
            ));
        }
        Ok(t.iter().enumerate().map(|(i, &ti)| self.power(delta, i) * ti).collect())
    }

    /// `sum_i j . e_i` as a float: the log2 of the L1-normalizing factor of `2^j`.
    pub fn homogeneous_weight(&self, j: &[f64]) -> f64 {
        (0..self.dim()).map(|i| self.log2_scale(j, i)).sum()
    }

    /// `j . e_i`, the log2 of the scale applied to coordinate i by `2^j`.
    pub fn log2_scale(&self, j: &[f64], i: usize) -> f64 {
        self.exponents[i].iter().zip(j).map(|(e, jm)| to_f64(e) * jm).sum()
    }

    pub fn degree(&self, alpha: &[u32]) -> Result<DegreeVector> {
        if alpha.len() != self.dim() {
            return contract(format!("degree: multi-index has length {}, expected {}", alpha.len(), self.dim()));
        }
        let mut comps = vec![Rational::zero(); self.nu];
        for (a, e) in alpha.iter().zip(&self.exponents) {
            for (c, em) in comps.iter_mut().zip(e) {
                *c += *em * Rational::from_integer(i64::from(*a));
            }
        }
        Ok(DegreeVector { components: comps })
    }
}

pub(crate) fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// `prod_mu delta_mu^{e^mu}`, with `0^0 = 1`.
pub fn delta_power(delta: &[f64], e: &[Rational]) -> f64 {
    delta
        .iter()
        .zip(e)
        .filter(|(_, em)| !em.is_zero())
        .map(|(d, em)| {
            if em.is_integer() {
                d.powi(*em.numer() as i32)
            } else {
                d.powf(to_f64(em))
            }
        })
        .product()
}

/// Classification of a degree vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerClass {
    Zero,
    Pure(usize),
    NonPure,
}

/// Formal degree in `[0, inf)^nu`, exact.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Rational>", into = "Vec<Rational>")]
pub struct DegreeVector {
    components: Vec<Rational>,
}

impl TryFrom<Vec<Rational>> for DegreeVector {
    type Error = Error;

    fn try_from(v: Vec<Rational>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DegreeVector> for Vec<Rational> {
    fn from(d: DegreeVector) -> Self {
        d.components
    }
}

impl DegreeVector {
    pub fn new(components: Vec<Rational>) -> Result<Self> {
        if components.iter().any(|c| *c < Rational::zero()) {
            return validation("degree vector has a negative component");
        }
        Ok(Self { components })
    }

    pub fn from_ints(v: &[i64]) -> Self {
        Self { components: v.iter().map(|&x| Rational::from_integer(x.max(0))).collect() }
    }

    pub fn zero(nu: usize) -> Self {
        Self { components: vec![Rational::zero(); nu] }
    }

    pub fn components(&self) -> &[Rational] {
        &self.components
    }

    pub fn nu(&self) -> usize {
        self.components.len()
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.is_zero())
    }

    pub fn class(&self) -> PowerClass {
        let nz: Vec<usize> = (0..self.nu()).filter(|&m| !self.components[m].is_zero()).collect();
        match nz.len() {
            0 => PowerClass::Zero,
            1 => PowerClass::Pure(nz[0]),
            _ => PowerClass::NonPure,
        }
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.class(), PowerClass::Pure(_))
    }

    /// `delta^d` in floating point.
    pub fn delta_power(&self, delta: &[f64]) -> f64 {
        delta_power(delta, &self.components)
    }

    /// `|d|_1`, the single-parameter degree used for CC balls of scale `xi`.
    pub fn l1(&self) -> Rational {
        self.components.iter().copied().sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.components.iter().map(to_f64).collect()
    }
}

impl std::ops::Add for &DegreeVector {
    type Output = DegreeVector;
    fn add(self, rhs: &DegreeVector) -> DegreeVector {
        assert_eq!(self.nu(), rhs.nu(), "degree vectors of different nu");
        DegreeVector { components: self.components.iter().zip(&rhs.components).map(|(a, b)| a + b).collect() }
    }
}

impl fmt::Display for DegreeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeKind {
    Product,
    Flag,
    Custom,
}

/// How far a min-closure claim for a custom lattice is known to hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosureProof {
    /// Product and flag presets.
    Preset,
    /// Every inequality has at most one negative coefficient, which makes the
    /// set min-closed everywhere.
    Structural,
    /// Checked by brute force on the truncation box only.
    Truncation,
}

/// Dyadic shadow `-log2 A` of an admissible parameter set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLattice {
    kind: LatticeKind,
    nu: usize,
    inequalities: Vec<(Vec<i64>, i64)>,
    truncation: u32,
    closure: ClosureProof,
}

/// JSON shape `{"kind": ..., "nu": ..., "inequalities": [[a1..anu, b], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub kind: LatticeKind,
    pub nu: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inequalities: Vec<Vec<i64>>,
    #[serde(default = "default_truncation")]
    pub truncation: u32,
}

fn default_truncation() -> u32 {
    8
}

/// Upper limit on points enumerated when brute-force validating closure.
const CLOSURE_CHECK_MAX_POINTS: usize = 4096;

impl ParamLattice {
    pub fn product(nu: usize) -> Self {
        Self { kind: LatticeKind::Product, nu, inequalities: vec![], truncation: 8, closure: ClosureProof::Preset }
    }

    /// `{j_1 <= j_2 <= ... <= j_nu}`, i.e. `delta_1 >= delta_2 >= ...`.
    pub fn flag(nu: usize) -> Self {
        Self { kind: LatticeKind::Flag, nu, inequalities: vec![], truncation: 8, closure: ClosureProof::Preset }
    }

    /// Custom set `{j in N^nu : a . j <= b}` for each `(a, b)`.
    pub fn custom(nu: usize, inequalities: Vec<(Vec<i64>, i64)>, truncation: u32) -> Result<Self> {
        if nu == 0 {
            return validation("lattice needs nu >= 1");
        }
        if inequalities.iter().any(|(a, _)| a.len() != nu) {
            return validation(format!("every inequality needs {nu} coefficients plus a bound"));
        }
        let structural = inequalities.iter().all(|(a, _)| a.iter().filter(|&&c| c < 0).count() <= 1);
        let mut lat = Self {
            kind: LatticeKind::Custom,
            nu,
            inequalities,
            truncation,
            closure: if structural { ClosureProof::Structural } else { ClosureProof::Truncation },
        };
        if !structural {
            let pts = lat.enumerate(truncation);
            if pts.len() > CLOSURE_CHECK_MAX_POINTS {
                return validation(format!(
                    "custom lattice: {} points in the truncation box exceed the closure-check limit {CLOSURE_CHECK_MAX_POINTS}",
                    pts.len()
                ));
            }
            for p in &pts {
                for q in &pts {
                    let m: Vec<u32> = p.iter().zip(q).map(|(a, b)| *a.min(b)).collect();
                    if !lat.contains(&m) {
                        return validation(format!(
                            "custom lattice is not closed under coordinatewise minimum: min({p:?}, {q:?}) = {m:?} is missing"
                        ));
                    }
                }
            }
        }
        lat.truncation = truncation;
        Ok(lat)
    }

    pub fn from_config(cfg: &LatticeConfig) -> Result<Self> {
        let mut lat = match cfg.kind {
            LatticeKind::Product => Self::product(cfg.nu),
            LatticeKind::Flag => Self::flag(cfg.nu),
            LatticeKind::Custom => {
                let ineqs = cfg
                    .inequalities
                    .iter()
                    .map(|row| {
                        if row.len() != cfg.nu + 1 {
                            return validation(format!("inequality {row:?} needs {} entries", cfg.nu + 1));
                        }
                        Ok((row[..cfg.nu].to_vec(), row[cfg.nu]))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::custom(cfg.nu, ineqs, cfg.truncation)?
            }
        };
        if cfg.nu == 0 {
            return validation("lattice needs nu >= 1");
        }
        lat.truncation = cfg.truncation;
        Ok(lat)
    }

    pub fn to_config(&self) -> LatticeConfig {
        LatticeConfig {
            kind: self.kind,
            nu: self.nu,
            inequalities: self
                .inequalities
                .iter()
                .map(|(a, b)| a.iter().copied().chain(std::iter::once(*b)).collect())
                .collect(),
            truncation: self.truncation,
        }
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    pub fn closure(&self) -> ClosureProof {
        self.closure
    }

    pub fn with_truncation(mut self, truncation: u32) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn contains(&self, j: &[u32]) -> bool {
        if j.len() != self.nu {
            return false;
        }
        match self.kind {
            LatticeKind::Product => true,
            LatticeKind::Flag => j.windows(2).all(|w| w[0] <= w[1]),
            LatticeKind::Custom => self.inequalities.iter().all(|(a, b)| {
                let lhs: i64 = a.iter().zip(j).map(|(c, &x)| c * i64::from(x)).sum();
                lhs <= *b
            }),
        }
    }

    /// Membership of a continuous parameter `delta in (0,1]^nu`, via the real
    /// relaxation of the defining inequalities on `-log2 delta`.
    pub fn contains_delta(&self, delta: &[f64]) -> bool {
        if delta.len() != self.nu || delta.iter().any(|&d| !(d > 0.0 && d <= 1.0)) {
            return false;
        }
        let j: Vec<f64> = delta.iter().map(|d| -d.log2()).collect();
        const SLACK: f64 = 1e-12;
        match self.kind {
            LatticeKind::Product => true,
            LatticeKind::Flag => j.windows(2).all(|w| w[0] <= w[1] + SLACK),
            LatticeKind::Custom => self.inequalities.iter().all(|(a, b)| {
                let lhs: f64 = a.iter().zip(&j).map(|(c, x)| *c as f64 * x).sum();
                lhs <= *b as f64 + SLACK
            }),
        }
    }

    /// All lattice points with `|j|_inf <= bound`, lexicographic order.
    pub fn enumerate(&self, bound: u32) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; self.nu];
        loop {
            if self.contains(&cur) {
                out.push(cur.clone());
            }
            let mut i = self.nu;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                if cur[i] < bound {
                    cur[i] += 1;
                    for c in cur.iter_mut().skip(i + 1) {
                        *c = 0;
                    }
                    break;
                }
            }
        }
    }
}

/// How a cancellation structure was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certification {
    /// Closed form for a preset lattice.
    Exact,
    /// Brute force on a box that provably contains a witness whenever one exists.
    Certified,
    /// Brute force on a box; min-closure only known inside the truncation box.
    TruncationOnly,
    /// `search_bound < |j|_inf`: the brute force cannot see every witness.
    Uncertified,
}

/// A required vanishing integral: `int sigma_j dt^{[mu]} = 0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequiredCancellation {
    pub mu: usize,
    pub class: Vec<usize>,
    /// Coordinates `i` with `e_i^{mu'} != 0` for some `mu'` in the class.
    pub coords: Vec<usize>,
}

/// Minimal indices, equivalence classes and required cancellations at `j`.
/// Parameter indices `mu` are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CancellationStructure {
    pub j: Vec<u32>,
    pub c: f64,
    pub minimal: Vec<usize>,
    pub classes: Vec<Vec<usize>>,
    pub required: Vec<RequiredCancellation>,
    pub certification: Certification,
}

impl CancellationStructure {
    /// Distinct required coordinate sets, sorted.
    pub fn required_subsets(&self) -> Vec<Vec<usize>> {
        let set: BTreeSet<Vec<usize>> = self.required.iter().map(|r| r.coords.clone()).collect();
        set.into_iter().collect()
    }
}

struct Relation<'a> {
    lattice: &'a ParamLattice,
    j: &'a [u32],
    c: f64,
    search: Vec<Vec<u32>>,
}

impl Relation<'_> {
    fn is_minimal(&self, mu: usize) -> bool {
        match self.lattice.kind {
            // The origin belongs to both presets, so a smaller k_mu exists iff j_mu > 0.
            LatticeKind::Product | LatticeKind::Flag => self.j[mu] == 0,
            LatticeKind::Custom => !self.search.iter().any(|k| k[mu] < self.j[mu]),
        }
    }

    /// `mu1 <=_{j,C,A} mu2`.
    fn preceq(&self, m1: usize, m2: usize) -> bool {
        if m1 == m2 {
            return true;
        }
        let (j1, j2) = (f64::from(self.j[m1]), f64::from(self.j[m2]));
        match self.lattice.kind {
            // k_{mu2} is unconstrained, so any k with k_{mu1} < j_{mu1} can push
            // the right-hand side to -inf.
            LatticeKind::Product => self.j[m1] == 0,
            LatticeKind::Flag => {
                if self.j[m1] == 0 {
                    return true;
                }
                if m2 > m1 {
                    // k_{mu2} >= k_{mu1} is unbounded above.
                    return false;
                }
                // m2 < m1: the worst case is k_{mu2} = k_{mu1} = kk, linear in kk,
                // so the two endpoints of 0..j_{mu1} decide.
                let last = j1 - 1.0;
                [0.0, last].iter().all(|&kk| j1 - kk <= self.c * (j2 - kk))
            }
            LatticeKind::Custom => self
                .search
                .iter()
                .filter(|k| k[m1] < self.j[m1])
                .all(|k| j1 - f64::from(k[m1]) <= self.c * (j2 - f64::from(k[m2]))),
        }
    }
}

/// Computes the cancellation structure of Definition "sK" at lattice point `j`.
pub fn cancellation_structure(
    scheme: &DilationScheme,
    lattice: &ParamLattice,
    j: &[u32],
    c: f64,
    search_bound: u32,
) -> Result<CancellationStructure> {
    if scheme.nu() != lattice.nu() {
        return contract(format!("scheme has nu = {}, lattice has nu = {}", scheme.nu(), lattice.nu()));
    }
    if !lattice.contains(j) {
        return contract(format!("j = {j:?} is not a lattice point"));
    }
    if !(c >= 1.0) {
        return contract(format!("comparability constant C = {c} must be >= 1"));
    }
    let jmax = j.iter().copied().max().unwrap_or(0);
    let certification = match lattice.kind {
        LatticeKind::Product | LatticeKind::Flag => Certification::Exact,
        LatticeKind::Custom if search_bound < jmax => Certification::Uncertified,
        // Any witness k can be replaced by min(k, j), which lies in the box [0, |j|_inf].
        LatticeKind::Custom if lattice.closure == ClosureProof::Structural => Certification::Certified,
        LatticeKind::Custom => Certification::TruncationOnly,
    };
    let search = if lattice.kind == LatticeKind::Custom { lattice.enumerate(search_bound) } else { Vec::new() };
    let rel = Relation { lattice, j, c, search };
    let nu = lattice.nu();
    let minimal: Vec<usize> = (0..nu).filter(|&m| rel.is_minimal(m)).collect();
    let pre: Vec<Vec<bool>> = (0..nu).map(|a| (0..nu).map(|b| rel.preceq(a, b)).collect()).collect();
    let classes: Vec<Vec<usize>> = (0..nu).map(|a| (0..nu).filter(|&b| pre[a][b] && pre[b][a]).collect()).collect();
    let mut required = Vec::new();
    for mu in 0..nu {
        if minimal.contains(&mu) {
            continue;
        }
        let dominated = (0..nu).any(|m2| pre[mu][m2] && !pre[m2][mu]);
        if dominated {
            continue;
        }
        let class = classes[mu].clone();
        let coords: Vec<usize> = (0..scheme.dim())
            .filter(|&i| class.iter().any(|&m| !scheme.exponent(i)[m].is_zero()))
            .collect();
        required.push(RequiredCancellation { mu, class, coords });
    }
    Ok(CancellationStructure { j: j.to_vec(), c, minimal, classes, required, certification })
}

/// Serializable form of a dilation scheme: rows of rationals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub exponents: Vec<Vec<RationalRepr>>,
}

impl SchemeConfig {
    pub fn build(&self) -> Result<DilationScheme> {
        let rows = self
            .exponents
            .iter()
            .map(|r| r.iter().map(RationalRepr::to_rational).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let nu = rows.first().map_or(0, Vec::len);
        DilationScheme::new(nu, rows)
    }

    pub fn from_scheme(s: &DilationScheme) -> Self {
        Self {
            exponents: s
                .exponents()
                .iter()
                .map(|r| r.iter().map(|q| RationalRepr::Text(q.to_string())).collect())
                .collect(),
        }
    }
}

impl From<&DilationScheme> for SchemeConfig {
    fn from(s: &DilationScheme) -> Self {
        Self::from_scheme(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heisenberg_scaling() {
        let s = DilationScheme::heisenberg();
        let out = s.scale_point(&[0.5, 0.25], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(out, vec![0.5, 0.25, 0.125]);
        assert_eq!(s.scale_point(&[1.0, 1.0], &[3.0, -2.0, 5.0]).unwrap(), vec![3.0, -2.0, 5.0]);
        assert!(s.scale_point(&[1.0], &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn degrees_and_classes() {
        let s = DilationScheme::heisenberg();
        let d = s.degree(&[1, 0, 1]).unwrap();
        assert_eq!(d, DegreeVector::from_ints(&[2, 1]));
        assert_eq!(d.class(), PowerClass::NonPure);
        assert_eq!(s.degree(&[0, 0, 0]).unwrap().class(), PowerClass::Zero);
        let p = DilationScheme::product(2);
        let d = p.degree(&[3, 0]).unwrap();
        assert_eq!(d, DegreeVector::from_ints(&[3, 0]));
        assert_eq!(d.class(), PowerClass::Pure(0));
    }

    #[test]
    fn enumeration_examples() {
        assert_eq!(ParamLattice::product(2).enumerate(1), vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(ParamLattice::flag(2).enumerate(1), vec![vec![0, 0], vec![0, 1], vec![1, 1]]);
        assert_eq!(ParamLattice::flag(3).enumerate(2).len(), 10);
    }

    #[test]
    fn product_requires_only_nonzero_coordinates() {
        let s = DilationScheme::product(2);
        let cs = cancellation_structure(&s, &ParamLattice::product(2), &[3, 0], 1.0, 3).unwrap();
        assert_eq!(cs.minimal, vec![1]);
        assert_eq!(cs.required_subsets(), vec![vec![0]]);
        let cs = cancellation_structure(&s, &ParamLattice::product(2), &[0, 0], 1.0, 0).unwrap();
        assert!(cs.required.is_empty());
    }

    #[test]
    fn flag_example_two_five() {
        let s = DilationScheme::product(2);
        let cs = cancellation_structure(&s, &ParamLattice::flag(2), &[2, 5], 1.0, 5).unwrap();
        assert!(cs.minimal.is_empty());
        assert_eq!(cs.classes, vec![vec![0], vec![1]]);
        assert_eq!(cs.required_subsets(), vec![vec![0], vec![1]]);
        assert_eq!(cs.certification, Certification::Exact);
    }

    #[test]
    fn custom_lattice_rejects_non_closed_sets() {
        // j1 + j2 >= 1 written as -j1 - j2 <= -1 excludes the minimum of (1,0) and (0,1).
        assert!(ParamLattice::custom(2, vec![(vec![-1, -1], -1)], 4).is_err());
        let flag = ParamLattice::custom(2, vec![(vec![1, -1], 0)], 4).unwrap();
        assert_eq!(flag.closure(), ClosureProof::Structural);
    }

    #[test]
    fn uncertified_when_search_too_small() {
        let s = DilationScheme::product(2);
        let lat = ParamLattice::custom(2, vec![(vec![1, -1], 0)], 8).unwrap();
        let cs = cancellation_structure(&s, &lat, &[2, 5], 1.0, 3).unwrap();
        assert_eq!(cs.certification, Certification::Uncertified);
    }

    #[test]
    fn lattice_json_roundtrip() {
        let cfg: LatticeConfig =
            serde_json::from_str(r#"{"kind":"custom","nu":2,"inequalities":[[1,-1,0]]}"#).unwrap();
        let lat = ParamLattice::from_config(&cfg).unwrap();
        assert!(lat.contains(&[1, 2]) && !lat.contains(&[2, 1]));
        let back = serde_json::to_string(&lat.to_config()).unwrap();
        assert!(back.contains("\"inequalities\":[[1,-1,0]]"));
    }
}
