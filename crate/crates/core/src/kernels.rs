//! Dyadic bump families and kernel synthesis.
//!
//! Bumps are finite sums of separable products of catalog factors. A factor is
//! `u -> phi(u) N(u) / (1 - u^2)^m` evaluated at `u = x / r`, where
//! `phi(u) = exp(-1 / (1 - u^2))` is the standard mollifier on (-1, 1). The
//! family is closed under differentiation, so derivatives of bumps stay exact.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dilations::{cancellation_structure, Certification, DilationScheme, LatticeKind, ParamLattice};
use crate::error::{contract, validation, Error, Result};
use crate::quad::Rule;

/// Default support radius `a`.
pub const DEFAULT_RADIUS: f64 = 0.25;

/// Panels and points per panel used for one-dimensional factor integrals.
const FACTOR_PANELS: usize = 16;
const FACTOR_ORDER: usize = 16;

/// Catalog entry for a one-dimensional factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// `phi(u)`.
    Mollifier,
    /// `phi^{(k)}(u)`, the k-th derivative in u.
    Deriv(u32),
    /// `u^p phi(u)`.
    Poly(u32),
}

/// A factor `x -> c * shape(x / r)` in normalized form.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    shape: Shape,
    radius: f64,
    /// Numerator polynomial coefficients in u, lowest degree first.
    num: Vec<f64>,
    /// Power m of `(1 - u^2)` in the denominator.
    den: i32,
}

fn poly_eval(p: &[f64], u: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

fn poly_deriv(a: &[f64]) -> Vec<f64> {
    if a.len() <= 1 {
        return vec![0.0];
    }
    a.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect()
}

/// Mollifier `exp(-1/(1-u^2))` on (-1, 1), zero outside.
pub fn mollifier(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

impl Factor {
    pub fn new(shape: Shape, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return validation(format!("factor radius must be positive, got {radius}"));
        }
        let base = Self { shape, radius, num: vec![1.0], den: 0 };
        Ok(match shape {
            Shape::Mollifier => base,
            Shape::Poly(p) => {
                let mut num = vec![0.0; p as usize + 1];
                num[p as usize] = 1.0;
                Self { num, ..base }
            }
            Shape::Deriv(k) => {
                let mut f = base;
                for _ in 0..k {
                    f = f.d_du();
                }
                Self { shape, ..f }
            }
        })
    }

    /// Derivative with respect to u (not x), keeping the radius.
    fn d_du(&self) -> Self {
        // (phi N / q^m)' = phi / q^{m+2} * (-2u N + N' q^2 + 2 m u N q), q = 1 - u^2.
        let q = [1.0, 0.0, -1.0];
        let q2 = poly_mul(&q, &q);
        let t1 = poly_mul(&[0.0, -2.0], &self.num);
        let t2 = poly_mul(&poly_deriv(&self.num), &q2);
        let t3 = poly_mul(&poly_mul(&[0.0, 2.0 * self.den as f64], &self.num), &q);
        Self { shape: self.shape, radius: self.radius, num: poly_add(&poly_add(&t1, &t2), &t3), den: self.den + 2 }
    }

    /// Derivative with respect to x.
    pub fn derivative(&self) -> Self {
        let mut d = self.d_du();
        for c in &mut d.num {
            *c /= self.radius;
        }
        d
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Copy with the radius multiplied by `s`.
    pub fn rescaled(&self, s: f64) -> Self {
        Self { radius: self.radius * s, ..self.clone() }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let u = x / self.radius;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - u * u;
        let phi = (-1.0 / q).exp();
        if phi == 0.0 {
            return 0.0;
        }
        phi * poly_eval(&self.num, u) / q.powi(self.den)
    }

    pub fn integral(&self) -> f64 {
        let r = Rule::composite(-self.radius, self.radius, FACTOR_PANELS, FACTOR_ORDER);
        r.integrate(|x| self.eval(x))
    }

    /// `int_{cell} f`, for cell averaging of kernels on grids.
    pub fn integral_over(&self, lo: f64, hi: f64) -> f64 {
        let (a, b) = (lo.max(-self.radius), hi.min(self.radius));
        if a >= b {
            return 0.0;
        }
        let panels = (((b - a) / self.radius) * 4.0).ceil().max(1.0) as usize;
        Rule::composite(a, b, panels, 12).integrate(|x| self.eval(x))
    }
}

/// Serializable description of a factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorConfig {
    pub shape: Shape,
    pub radius: f64,
}

/// Coefficient times a product of one factor per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableTerm {
    pub coef: f64,
    pub factors: Vec<Factor>,
}

impl SeparableTerm {
    fn eval(&self, t: &[f64]) -> f64 {
        let mut v = self.coef;
        for (f, x) in self.factors.iter().zip(t) {
            if v == 0.0 {
                return 0.0;
            }
            v *= f.eval(*x);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermConfig {
    pub coef: f64,
    pub factors: Vec<FactorConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpConfig {
    pub dim: usize,
    #[serde(default = "default_radius")]
    pub support_radius: f64,
    pub terms: Vec<TermConfig>,
    /// Rescale the coefficients so that the bump integrates to this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize_to: Option<f64>,
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS
}

/// A smooth bump on `R^N` supported in the ball of radius `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpSpec {
    dim: usize,
    terms: Vec<SeparableTerm>,
    support_radius: f64,
}

impl BumpSpec {
    pub fn new(dim: usize, terms: Vec<SeparableTerm>, support_radius: f64) -> Result<Self> {
        if dim == 0 {
            return validation("bump dimension must be >= 1");
        }
        for (k, term) in terms.iter().enumerate() {
            if term.factors.len() != dim {
                return validation(format!("term {k} has {} factors, expected {dim}", term.factors.len()));
            }
            let reach = term.factors.iter().map(|f| f.radius * f.radius).sum::<f64>().sqrt();
            if reach > support_radius * (1.0 + 1e-12) {
                return validation(format!(
                    "term {k} has support reaching {reach}, outside the ball of radius {support_radius}"
                ));
            }
        }
        Ok(Self { dim, terms, support_radius })
    }

    /// A single separable product of the given shapes, each with radius `a / sqrt(N)`.
    pub fn product(shapes: &[Shape], support_radius: f64) -> Result<Self> {
        let r = support_radius / (shapes.len() as f64).sqrt();
        let factors = shapes.iter().map(|s| Factor::new(*s, r)).collect::<Result<Vec<_>>>()?;
        Self::new(shapes.len(), vec![SeparableTerm { coef: 1.0, factors }], support_radius)
    }

    /// The zero bump.
    pub fn zero(dim: usize, support_radius: f64) -> Self {
        Self { dim, terms: vec![], support_radius }
    }

    pub fn from_config(cfg: &BumpConfig) -> Result<Self> {
        let terms = cfg
            .terms
            .iter()
            .map(|t| {
                let factors = t.factors.iter().map(|f| Factor::new(f.shape, f.radius)).collect::<Result<Vec<_>>>()?;
                Ok(SeparableTerm { coef: t.coef, factors })
            })
            .collect::<Result<Vec<_>>>()?;
        let b = Self::new(cfg.dim, terms, cfg.support_radius)?;
        match cfg.normalize_to {
            Some(v) => b.normalized_to(v),
            None => Ok(b),
        }
    }

    pub fn to_config(&self) -> BumpConfig {
        BumpConfig {
            dim: self.dim,
            support_radius: self.support_radius,
            terms: self
                .terms
                .iter()
                .map(|t| TermConfig {
                    coef: t.coef,
                    factors: t.factors.iter().map(|f| FactorConfig { shape: f.shape, radius: f.radius }).collect(),
                })
                .collect(),
            normalize_to: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn terms(&self) -> &[SeparableTerm] {
        &self.terms
    }

    /// Per-coordinate half-width of a box containing the support.
    pub fn support_box(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.terms.iter().map(|t| t.factors[i].radius).fold(0.0, f64::max))
            .collect()
    }

    pub fn eval(&self, t: &[f64]) -> f64 {
        self.terms.iter().map(|term| term.eval(t)).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut b = self.clone();
        for t in &mut b.terms {
            t.coef *= c;
        }
        b
    }

    /// Sum of two bumps on the same space; the support radius is the larger one.
    pub fn plus(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return contract("adding bumps of different dimension");
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self::new(self.dim, terms, self.support_radius.max(other.support_radius))
    }

    pub fn integral(&self) -> f64 {
        self.terms.iter().map(|t| t.coef * t.factors.iter().map(Factor::integral).product::<f64>()).sum()
    }

    pub fn normalized_to(&self, value: f64) -> Result<Self> {
        let i = self.integral();
        if i.abs() < 1e-14 {
            return Err(Error::Construction("cannot normalize a bump with zero integral".into()));
        }
        Ok(self.scaled(value / i))
    }

    /// The function of the remaining coordinates obtained by integrating out
    /// `coords`. The returned closure takes the remaining coordinates in order.
    pub fn partial_integral(&self, coords: &[usize]) -> impl Fn(&[f64]) -> f64 + '_ {
        let reduced: Vec<(f64, Vec<&Factor>)> = self
            .terms
            .iter()
            .map(|t| {
                let c = t.coef * coords.iter().map(|&i| t.factors[i].integral()).product::<f64>();
                let rest = (0..self.dim).filter(|i| !coords.contains(i)).map(|i| &t.factors[i]).collect();
                (c, rest)
            })
            .collect();
        move |x: &[f64]| reduced.iter().map(|(c, fs)| c * fs.iter().zip(x).map(|(f, xi)| f.eval(*xi)).product::<f64>()).sum()
    }

    /// Partial derivative in coordinate i.
    pub fn derivative(&self, i: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut factors = t.factors.clone();
                factors[i] = factors[i].derivative();
                SeparableTerm { coef: t.coef, factors }
            })
            .collect();
        Self { dim: self.dim, terms, support_radius: self.support_radius }
    }

    /// `sup |d^beta f|` over `|beta| <= m`, sampled on a tensor grid of
    /// `per_axis` points across the support box.
    pub fn cm_norm(&self, m: usize, per_axis: usize) -> f64 {
        let mut frontier = vec![self.clone()];
        let mut best = 0.0f64;
        let grid = UniformGrid::cube(self.dim, -self.support_radius, self.support_radius, per_axis);
        for order in 0..=m {
            for b in &frontier {
                for p in grid.points() {
                    best = best.max(b.eval(&p).abs());
                }
            }
            if order < m {
                frontier = frontier.iter().flat_map(|b| (0..self.dim).map(move |i| b.derivative(i))).collect();
            }
        }
        best
    }

    /// Evaluator for `sigma^{(2^j)}(t) = 2^{sum_i j.e_i} sigma(2^j t)`.
    pub fn dilate(&self, scheme: &DilationScheme, j: &[u32]) -> Result<DilatedBump<'_>> {
        let jf: Vec<f64> = j.iter().map(|&v| f64::from(v)).collect();
        self.dilate_real(scheme, &jf)
    }

    /// Dilation with a real multi-exponent `j` (negative entries allowed).
    pub fn dilate_real(&self, scheme: &DilationScheme, j: &[f64]) -> Result<DilatedBump<'_>> {
        if scheme.dim() != self.dim || j.len() != scheme.nu() {
            return contract(format!(
                "dilate: bump has dim {}, scheme N = {}, nu = {}, j has {} entries",
                self.dim,
                scheme.dim(),
                scheme.nu(),
                j.len()
            ));
        }
        let log2: Vec<f64> = (0..self.dim).map(|i| scheme.log2_scale(j, i)).collect();
        let scale = log2.iter().map(|s| s.exp2()).collect();
        let weight = log2.iter().sum::<f64>().exp2();
        Ok(DilatedBump { bump: self, scale, weight })
    }
}

/// `t -> weight * sigma(scale . t)`.
#[derive(Debug, Clone)]
pub struct DilatedBump<'a> {
    bump: &'a BumpSpec,
    scale: Vec<f64>,
    weight: f64,
}

impl DilatedBump<'_> {
    pub fn eval(&self, t: &[f64]) -> f64 {
        let mut s = [0.0f64; 8];
        let buf: Vec<f64>;
        let u: &[f64] = if t.len() <= 8 {
            for (k, (x, c)) in t.iter().zip(&self.scale).enumerate() {
                s[k] = x * c;
            }
            &s[..t.len()]
        } else {
            buf = t.iter().zip(&self.scale).map(|(x, c)| x * c).collect();
            &buf
        };
        self.weight * self.bump.eval(u)
    }

    /// Half-widths of the dilated support box.
    pub fn support_box(&self) -> Vec<f64> {
        self.bump.support_box().iter().zip(&self.scale).map(|(r, s)| r / s).collect()
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn scales(&self) -> &[f64] {
        &self.scale
    }
}

/// Axis-aligned uniform grid; points include both endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub axes: Vec<Axis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn point(&self, i: usize) -> f64 {
        if self.n <= 1 {
            return 0.5 * (self.lo + self.hi);
        }
        self.lo + (self.hi - self.lo) * i as f64 / (self.n - 1) as f64
    }

    pub fn step(&self) -> f64 {
        if self.n <= 1 {
            0.0
        } else {
            (self.hi - self.lo) / (self.n - 1) as f64
        }
    }
}

impl UniformGrid {
    pub fn cube(dim: usize, lo: f64, hi: f64, n: usize) -> Self {
        Self { axes: vec![Axis { lo, hi, n }; dim] }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point with flat index `k` (last axis fastest).
    pub fn point(&self, mut k: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        for (d, ax) in self.axes.iter().enumerate().rev() {
            p[d] = ax.point(k % ax.n);
            k /= ax.n;
        }
        p
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|k| self.point(k))
    }

    pub fn contains_box(&self, half_widths: &[f64]) -> bool {
        self.axes.iter().zip(half_widths).all(|(a, h)| a.lo <= -h && a.hi >= *h)
    }

    /// CSV with header `t1,...,tN,value`.
    pub fn to_csv(&self, values: &[f64]) -> String {
        let mut s = String::new();
        for d in 0..self.dim() {
            s.push_str(&format!("t{},", d + 1));
        }
        s.push_str("value\n");
        for (k, v) in values.iter().enumerate() {
            for x in self.point(k) {
                s.push_str(&format!("{x:.17e},"));
            }
            s.push_str(&format!("{v:.17e}\n"));
        }
        s
    }
}

/// A dyadic family `{sigma_j}` on a parameter lattice.
#[derive(Debug, Clone)]
pub struct DyadicKernel {
    pub scheme: DilationScheme,
    pub lattice: ParamLattice,
    pub family: BTreeMap<Vec<u32>, BumpSpec>,
    pub c: f64,
}

/// One partial-integral check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CancellationEntry {
    pub j: Vec<u32>,
    pub coords: Vec<usize>,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CancellationReport {
    pub entries: Vec<CancellationEntry>,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Weakest certification among the cancellation structures used.
    pub certification: Certification,
}

/// Points per remaining axis at which partial integrals are sampled.
const RESIDUAL_SAMPLES: usize = 17;

impl DyadicKernel {
    pub fn new(scheme: DilationScheme, lattice: ParamLattice, family: BTreeMap<Vec<u32>, BumpSpec>, c: f64) -> Result<Self> {
        if scheme.nu() != lattice.nu() {
            return validation("scheme and lattice disagree on nu");
        }
        for (j, b) in &family {
            if !lattice.contains(j) {
                return validation(format!("family index {j:?} is not a lattice point"));
            }
            if b.dim() != scheme.dim() {
                return validation(format!("bump at {j:?} has dim {}, scheme N = {}", b.dim(), scheme.dim()));
            }
        }
        Ok(Self { scheme, lattice, family, c })
    }

    /// The same bump at every lattice point with `|j|_inf <= bound`.
    pub fn uniform(scheme: DilationScheme, lattice: ParamLattice, bump: BumpSpec, bound: u32) -> Result<Self> {
        let family = lattice.enumerate(bound).into_iter().map(|j| (j, bump.clone())).collect();
        Self::new(scheme, lattice, family, 1.0)
    }

    pub fn check_cancellation(&self, quad_tol: f64) -> Result<CancellationReport> {
        let mut entries = Vec::new();
        let mut cert = Certification::Exact;
        for (j, bump) in &self.family {
            let jmax = j.iter().copied().max().unwrap_or(0);
            let bound = jmax.max(self.lattice.truncation());
            let cs = cancellation_structure(&self.scheme, &self.lattice, j, self.c, bound)?;
            cert = weaker(cert, cs.certification);
            for coords in cs.required_subsets() {
                let residual = partial_residual(bump, &coords);
                entries.push(CancellationEntry { j: j.clone(), coords, residual, pass: residual <= quad_tol });
            }
        }
        let max_residual = entries.iter().map(|e| e.residual).fold(0.0, f64::max);
        Ok(CancellationReport {
            pass: entries.iter().all(|e| e.pass),
            entries,
            max_residual,
            tolerance: quad_tol,
            certification: cert,
        })
    }

    /// Sum of dilated bumps over `|j|_inf <= bound` on the grid, in
    /// lexicographic j order, then grid order.
    pub fn synthesize_partial(&self, bound: u32, grid: &UniformGrid) -> Result<Vec<f64>> {
        if grid.dim() != self.scheme.dim() {
            return contract("grid dimension differs from N");
        }
        let mut out = vec![0.0; grid.len()];
        for (j, bump) in self.family.iter().filter(|(j, _)| j.iter().all(|&v| v <= bound)) {
            let d = bump.dilate(&self.scheme, j)?;
            for (k, slot) in out.iter_mut().enumerate() {
                *slot += d.eval(&grid.point(k));
            }
        }
        Ok(out)
    }

    /// `<sigma_j^{(2^j)}, f>` for each j with `|j|_inf <= bound`, computed as
    /// `int sigma_j(s) f(2^{-j} s) ds` by tensor quadrature.
    pub fn pairings(&self, bound: u32, f: impl Fn(&[f64]) -> f64, order: usize) -> Result<Vec<(Vec<u32>, f64)>> {
        let mut out = Vec::new();
        for (j, bump) in self.family.iter().filter(|(j, _)| j.iter().all(|&v| v <= bound)) {
            let jf: Vec<f64> = j.iter().map(|&v| f64::from(v)).collect();
            let inv: Vec<f64> = (0..self.scheme.dim()).map(|i| (-self.scheme.log2_scale(&jf, i)).exp2()).collect();
            let rules: Vec<Rule> = bump.support_box().iter().map(|&h| Rule::composite(-h, h, 4, order)).collect();
            let v = tensor_integrate(&rules, |s| {
                let x: Vec<f64> = s.iter().zip(&inv).map(|(a, b)| a * b).collect();
                bump.eval(s) * f(&x)
            });
            out.push((j.clone(), v));
        }
        Ok(out)
    }

    /// Sup over grid points away from the coordinate hyperplanes of
    /// `|K(t)| prod_mu |t^mu|^{Q_mu}`, where `t^mu` collects the coordinates
    /// with `e_i^mu != 0` and `Q_mu = sum_i e_i^mu`. Requires a scheme in which
    /// each coordinate belongs to exactly one parameter.
    pub fn product_decay_constant(&self, bound: u32, grid: &UniformGrid, min_norm: f64) -> Result<f64> {
        let nu = self.scheme.nu();
        let mut owner = vec![usize::MAX; self.scheme.dim()];
        for (i, slot) in owner.iter_mut().enumerate() {
            let nz: Vec<usize> = (0..nu).filter(|&m| !num_traits::Zero::is_zero(&self.scheme.exponent(i)[m])).collect();
            if nz.len() != 1 {
                return Err(Error::Unsupported("product decay check needs each coordinate in one factor".into()));
            }
            *slot = nz[0];
        }
        let q: Vec<f64> = (0..nu)
            .map(|m| (0..self.scheme.dim()).map(|i| crate::dilations::to_f64(&self.scheme.exponent(i)[m])).sum())
            .collect();
        let vals = self.synthesize_partial(bound, grid)?;
        let mut best = 0.0f64;
        for (k, v) in vals.iter().enumerate() {
            let p = grid.point(k);
            let mut norms = vec![0.0f64; nu];
            for (i, x) in p.iter().enumerate() {
                norms[owner[i]] += x * x;
            }
            let norms: Vec<f64> = norms.iter().map(|s| s.sqrt()).collect();
            if norms.iter().any(|&r| r < min_norm) {
                continue;
            }
            let w: f64 = norms.iter().zip(&q).map(|(r, qm)| r.powf(*qm)).product();
            best = best.max(v.abs() * w);
        }
        Ok(best)
    }
}

fn weaker(a: Certification, b: Certification) -> Certification {
    let rank = |c: Certification| match c {
        Certification::Exact => 0,
        Certification::Certified => 1,
        Certification::TruncationOnly => 2,
        Certification::Uncertified => 3,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

/// Max over a tensor grid of the remaining coordinates of the partial integral.
fn partial_residual(bump: &BumpSpec, coords: &[usize]) -> f64 {
    let rest: Vec<usize> = (0..bump.dim()).filter(|i| !coords.contains(i)).collect();
    let f = bump.partial_integral(coords);
    if rest.is_empty() {
        return f(&[]).abs();
    }
    let half = bump.support_box();
    let grid = UniformGrid { axes: rest.iter().map(|&i| Axis { lo: -half[i], hi: half[i], n: RESIDUAL_SAMPLES }).collect() };
    grid.points().map(|p| f(&p).abs()).fold(0.0, f64::max)
}

/// `int f` over the tensor product of one-dimensional rules.
pub fn tensor_integrate(rules: &[Rule], f: impl Fn(&[f64]) -> f64) -> f64 {
    let dims = rules.len();
    if dims == 0 {
        return f(&[]);
    }
    let mut idx = vec![0usize; dims];
    let mut x = vec![0.0; dims];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for d in 0..dims {
            x[d] = rules[d].nodes[idx[d]];
            w *= rules[d].weights[idx[d]];
        }
        total += w * f(&x);
        let mut d = dims;
        loop {
            if d == 0 {
                return total;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < rules[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// The family of the delta_0 construction: `sigma_j^{(2^j)} = sum_p (-1)^{|p|} eta^{(2^{j-p})}`
/// over `p in {0,1}^nu` with `j - p >= 0`, for `|j|_inf <= bound`.
pub fn delta0_family(eta: &BumpSpec, scheme: &DilationScheme, lattice: &ParamLattice, bound: u32) -> Result<DyadicKernel> {
    if lattice.kind() != LatticeKind::Product {
        return Err(Error::Unsupported("the delta_0 family is defined for the product lattice only".into()));
    }
    let integral = eta.integral();
    if (integral - 1.0).abs() > 1e-12 {
        return contract(format!("delta0_family needs int eta = 1, got {integral}"));
    }
    let nu = scheme.nu();
    let mut family = BTreeMap::new();
    for j in lattice.enumerate(bound) {
        let mut terms = Vec::new();
        let mut radius = 0.0f64;
        for mask in 0u32..(1 << nu) {
            let p: Vec<u32> = (0..nu).map(|m| (mask >> m) & 1).collect();
            if p.iter().zip(&j).any(|(pm, jm)| pm > jm) {
                continue;
            }
            // eta^{(2^{-p})}(s) = 2^{-sum p.e_i} eta(2^{-p} s): radii grow by 2^{p.e_i}.
            let pf: Vec<f64> = p.iter().map(|&v| f64::from(v)).collect();
            let grow: Vec<f64> = (0..scheme.dim()).map(|i| scheme.log2_scale(&pf, i).exp2()).collect();
            let sign = if p.iter().sum::<u32>() % 2 == 0 { 1.0 } else { -1.0 };
            let weight = sign / grow.iter().product::<f64>();
            for t in eta.terms() {
                let factors: Vec<Factor> = t.factors.iter().zip(&grow).map(|(f, g)| f.rescaled(*g)).collect();
                let reach = factors.iter().map(|f| f.radius() * f.radius()).sum::<f64>().sqrt();
                radius = radius.max(reach);
                terms.push(SeparableTerm { coef: t.coef * weight, factors });
            }
        }
        family.insert(j, BumpSpec::new(eta.dim(), terms, radius.max(eta.support_radius()))?);
    }
    DyadicKernel::new(scheme.clone(), lattice.clone(), family, 1.0)
}

/// Coefficient of `eta^{(2^i)}` in `sum_{|j|_inf <= m} sigma_j^{(2^j)}` for the
/// delta_0 family, by direct expansion of the alternating sum.
pub fn delta0_coefficients(nu: usize, m: u32) -> BTreeMap<Vec<u32>, i64> {
    let mut coeffs: BTreeMap<Vec<u32>, i64> = BTreeMap::new();
    for j in ParamLattice::product(nu).enumerate(m) {
        for mask in 0u32..(1 << nu) {
            let p: Vec<u32> = (0..nu).map(|k| (mask >> k) & 1).collect();
            if p.iter().zip(&j).any(|(pm, jm)| pm > jm) {
                continue;
            }
            let i: Vec<u32> = j.iter().zip(&p).map(|(a, b)| a - b).collect();
            let sign = if p.iter().sum::<u32>() % 2 == 0 { 1 } else { -1 };
            *coeffs.entry(i).or_insert(0) += sign;
        }
    }
    coeffs.retain(|_, c| *c != 0);
    coeffs
}

/// Smooth plateau cutoff: 1 for `|x_i| <= inner`, 0 for `|x_i| >= outer`.
/// An infinite radius is written as `null` in configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    #[serde(with = "radius_or_null")]
    pub inner: f64,
    #[serde(with = "radius_or_null")]
    pub outer: f64,
}

mod radius_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Cutoff {
    pub fn new(inner: f64, outer: f64) -> Result<Self> {
        if !(inner >= 0.0 && outer > inner) {
            return validation(format!("cutoff needs 0 <= inner < outer, got {inner}, {outer}"));
        }
        Ok(Self { inner, outer })
    }

    /// The constant function 1, used for `kappa` and for `psi_2 = 1` runs.
    pub fn one() -> Self {
        Self { inner: f64::INFINITY, outer: f64::INFINITY }
    }

    fn step(u: f64) -> f64 {
        let f = |v: f64| if v <= 0.0 { 0.0 } else { (-1.0 / v).exp() };
        let a = f(u);
        let b = f(1.0 - u);
        a / (a + b)
    }

    pub fn eval1(&self, x: f64) -> f64 {
        let a = x.abs();
        if a <= self.inner {
            1.0
        } else if a >= self.outer {
            0.0
        } else {
            1.0 - Self::step((a - self.inner) / (self.outer - self.inner))
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| self.eval1(*v)).product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mollifier_integral_matches_reference() {
        // int_{-1}^{1} exp(-1/(1-u^2)) du = 0.4439938161680794...
        let f = Factor::new(Shape::Mollifier, 1.0).unwrap();
        assert!((f.integral() - 0.443_993_816_168_079_4).abs() < 1e-13);
    }

    #[test]
    fn derivative_factor_matches_finite_difference() {
        let f = Factor::new(Shape::Deriv(2), 0.5).unwrap();
        let g = Factor::new(Shape::Deriv(1), 0.5).unwrap();
        let h = 1e-5;
        for &x in &[-0.3, -0.1, 0.05, 0.2, 0.4] {
            // d/dx [phi'(x/r)] = phi''(x/r) / r.
            let fd = (g.eval(x + h) - g.eval(x - h)) / (2.0 * h);
            assert!((fd - f.eval(x) / 0.5).abs() < 1e-6 * (1.0 + fd.abs()), "x={x}");
        }
    }

    #[test]
    fn dilation_identity_and_support() {
        let s = DilationScheme::isotropic(1);
        let b = BumpSpec::product(&[Shape::Mollifier], 0.25).unwrap();
        let d0 = b.dilate(&s, &[0]).unwrap();
        for &x in &[-0.2, 0.0, 0.1] {
            assert_eq!(d0.eval(&[x]), b.eval(&[x]));
        }
        let d3 = b.dilate(&s, &[3]).unwrap();
        assert_eq!(d3.support_box(), vec![0.25 / 8.0]);
        assert_eq!(d3.eval(&[0.0]), 8.0 * b.eval(&[0.0]));
    }

    #[test]
    fn delta0_one_parameter_base_case() {
        let eta = BumpSpec::product(&[Shape::Mollifier], 0.25).unwrap().normalized_to(1.0).unwrap();
        let k = delta0_family(&eta, &DilationScheme::isotropic(1), &ParamLattice::product(1), 0).unwrap();
        assert_eq!(k.family[&vec![0]], eta);
    }

    #[test]
    fn delta0_rejects_flag_lattice() {
        let eta = BumpSpec::product(&[Shape::Mollifier, Shape::Mollifier], 0.25).unwrap().normalized_to(1.0).unwrap();
        let r = delta0_family(&eta, &DilationScheme::product(2), &ParamLattice::flag(2), 2);
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn cutoff_plateau() {
        let c = Cutoff::new(1.0, 2.0).unwrap();
        assert_eq!(c.eval1(0.5), 1.0);
        assert_eq!(c.eval1(-2.5), 0.0);
        assert!(c.eval1(1.5) > 0.0 && c.eval1(1.5) < 1.0);
        assert_eq!(Cutoff::one().eval(&[1e9, -3.0]), 1.0);
    }
}
