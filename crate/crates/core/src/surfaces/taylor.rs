//! Taylor-coefficient fields `X_alpha` of `W(t) ~ sum t^alpha X_alpha` and of
//! the `W_j`, either echoed from a stored W or fitted from a surface.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{SurfaceKind, SurfaceMap, WSpec};
use crate::dilations::{DegreeVector, DilationScheme};
use crate::error::{contract, Error, Result};
use crate::vfields::{Coef, VField};

/// Default largest Taylor order.
pub const MAX_ORDER: u32 = 4;

/// Multi-indices of `N` variables with `lo <= |alpha| <= hi`, graded then lexicographic.
pub fn multi_indices(big_n: usize, lo: u32, hi: u32) -> Vec<Vec<u32>> {
    fn rec(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for a in (0..=left).rev() {
            cur[pos] = a;
            rec(pos + 1, left - a, cur, out);
        }
    }
    let mut out = Vec::new();
    if big_n == 0 {
        return out;
    }
    for k in lo..=hi {
        let mut cur = vec![0; big_n];
        rec(0, k, &mut cur, &mut out);
    }
    out
}

/// Sparse real polynomial in `u = x - x0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NumPoly {
    terms: BTreeMap<Vec<u32>, f64>,
}

impl NumPoly {
    pub fn from_terms(terms: impl IntoIterator<Item = (Vec<u32>, f64)>) -> Self {
        let mut p = Self::default();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    fn add_term(&mut self, m: Vec<u32>, c: f64) {
        if c == 0.0 {
            return;
        }
        *self.terms.entry(m).or_insert(0.0) += c;
    }

    pub fn terms(&self) -> &BTreeMap<Vec<u32>, f64> {
        &self.terms
    }

    pub fn constant(&self) -> f64 {
        self.terms.iter().find(|(m, _)| m.iter().all(|&e| e == 0)).map_or(0.0, |(_, c)| *c)
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.iter().zip(u).map(|(&e, v)| v.powi(e as i32)).product::<f64>()).sum()
    }

    pub fn diff(&self, l: usize) -> Self {
        let mut out = Self::default();
        for (m, c) in &self.terms {
            if m[l] > 0 {
                let mut d = m.clone();
                d[l] -= 1;
                out.add_term(d, c * f64::from(m[l]));
            }
        }
        out
    }

    /// Product truncated to total degree `max_deg`.
    pub fn mul_truncated(&self, other: &Self, max_deg: u32) -> Self {
        let mut out = Self::default();
        for (a, ca) in &self.terms {
            let da: u32 = a.iter().sum();
            for (b, cb) in &other.terms {
                if da + b.iter().sum::<u32>() > max_deg {
                    continue;
                }
                out.add_term(a.iter().zip(b).map(|(x, y)| x + y).collect(), ca * cb);
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c);
        }
        out
    }
}

/// A vector field near `x0` with one polynomial per component.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyField {
    pub coeffs: Vec<NumPoly>,
    /// Largest degree kept in products.
    pub max_degree: u32,
}

impl PolyField {
    pub fn bracket(&self, other: &Self) -> Self {
        let n = self.coeffs.len();
        let deg = self.max_degree.min(other.max_degree);
        let coeffs = (0..n)
            .map(|i| {
                let mut acc = NumPoly::default();
                for l in 0..n {
                    let a = self.coeffs[l].mul_truncated(&other.coeffs[i].diff(l), deg);
                    let b = other.coeffs[l].mul_truncated(&self.coeffs[i].diff(l), deg);
                    acc = acc.add(&a).sub(&b);
                }
                acc
            })
            .collect();
        // Each bracket costs one derivative of accuracy.
        Self { coeffs, max_degree: deg.saturating_sub(1) }
    }

    pub fn at_base(&self) -> Vec<f64> {
        self.coeffs.iter().map(NumPoly::constant).collect()
    }
}

/// A Taylor field: exact when echoed from a stored W, fitted otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum TaylorField {
    Exact(VField),
    Fitted(PolyField),
}

impl TaylorField {
    pub fn bracket(&self, other: &Self) -> Result<Self> {
        match (self, other) {
            (Self::Exact(a), Self::Exact(b)) => Ok(Self::Exact(a.bracket(b)?)),
            (Self::Fitted(a), Self::Fitted(b)) => Ok(Self::Fitted(a.bracket(b))),
            _ => contract("cannot bracket an exact field with a fitted one"),
        }
    }

    /// Value at the base point `x0`.
    pub fn at(&self, x0: &[f64]) -> Vec<f64> {
        match self {
            Self::Exact(f) => f.eval(x0, &[]),
            Self::Fitted(p) => p.at_base(),
        }
    }
}

/// Sampling layout for fitted Taylor fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitGrid {
    /// Radius of the t-samples. Kept small so that flat-in-t surfaces fit to 0.
    pub t_radius: f64,
    pub x_radius: f64,
    /// Extra t-degrees beyond the requested order, absorbing the remainder.
    pub t_extra: u32,
    pub x_degree: u32,
}

impl Default for FitGrid {
    fn default() -> Self {
        Self { t_radius: 0.1, x_radius: 0.1, t_extra: 2, x_degree: 3 }
    }
}

/// Which function the Taylor fields expand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expansion {
    /// `W(t, x)`; multi-indices have `|alpha| >= 1`.
    W,
    /// `W_j(t, x)`; multi-indices have `|alpha| >= 0`.
    Wj(usize),
}

/// Taylor fields at a base point, keyed by multi-index.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorFields {
    pub base: Vec<f64>,
    pub expansion: Expansion,
    pub order: u32,
    pub fields: BTreeMap<Vec<u32>, TaylorField>,
    /// Max residual of the fit (0 for exact echoes).
    pub fit_residual: f64,
    pub warnings: Vec<String>,
}

impl TaylorFields {
    /// Values at the base point, zero fields dropped at `floor`.
    pub fn values(&self, floor: f64) -> Vec<(Vec<u32>, Vec<f64>)> {
        self.fields
            .iter()
            .map(|(a, f)| (a.clone(), f.at(&self.base)))
            .filter(|(_, v)| v.iter().any(|c| c.abs() > floor))
            .collect()
    }
}

/// Echo of the stored terms of `w` up to `order`.
pub fn exact_w_fields(w: &WSpec, order: u32) -> BTreeMap<Vec<u32>, VField> {
    w.terms().iter().filter(|(a, _)| a.iter().sum::<u32>() <= order).map(|(a, f)| (a.clone(), f.clone())).collect()
}

/// Taylor fields `Y_{beta,k}` of `W_k = sum_beta t^beta Y_{beta,k}`, computed
/// exactly from the recursion `(1 + |beta|) Y_{beta,k} = (beta_k + 1) X_{beta+e_k}
/// - sum_{alpha+gamma=beta} [X_alpha, Y_{gamma,k}]`, which follows from
/// `W = sum t_j W_j` and the integrability identity.
pub fn exact_wj_fields(w: &WSpec, k: usize, order: u32) -> Result<BTreeMap<Vec<u32>, VField>> {
    let nt = w.big_n();
    if k >= nt {
        return contract(format!("W_j with j = {k} but N = {nt}"));
    }
    let mut out: BTreeMap<Vec<u32>, VField> = BTreeMap::new();
    for beta in multi_indices(nt, 0, order) {
        let b: u32 = beta.iter().sum();
        let mut up = beta.clone();
        up[k] += 1;
        let mut acc = match w.terms().get(&up) {
            Some(x) => x.scale(Coef::from_integer(i128::from(beta[k] + 1))),
            None => VField::zero(w.n()),
        };
        for (alpha, x) in w.terms() {
            if alpha.iter().zip(&beta).any(|(a, bb)| a > bb) {
                continue;
            }
            let gamma: Vec<u32> = beta.iter().zip(alpha).map(|(bb, a)| bb - a).collect();
            if let Some(y) = out.get(&gamma) {
                acc = acc.sub(&x.bracket(y)?);
            }
        }
        let f = acc.scale(Coef::new(1, i128::from(1 + b)));
        if !f.is_zero() {
            out.insert(beta, f);
        }
    }
    Ok(out)
}

/// Chebyshev points on `[-r, r]`.
fn cheb(m: usize, r: f64) -> Vec<f64> {
    (0..m).map(|i| r * (std::f64::consts::PI * (i as f64 + 0.5) / m as f64).cos()).collect()
}

fn tensor(axes: usize, nodes: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..axes {
        out = out.into_iter().flat_map(|p| nodes.iter().map(move |v| [p.clone(), vec![*v]].concat())).collect();
    }
    out
}

fn mono(v: &[f64], m: &[u32]) -> f64 {
    v.iter().zip(m).map(|(x, &e)| x.powi(e as i32)).product()
}

/// Least-squares fit of `values[s][i]` with the basis `basis[s][b]`.
/// Returns coefficients (`b x i`), the max residual and the condition number.
fn lsq(basis: &DMatrix<f64>, values: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64, f64)> {
    let svd = basis.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let coef = svd.solve(values, 1e-13 * smax).map_err(|e| Error::Fit(e.to_string()))?;
    let res = (basis * &coef - values).amax();
    Ok((coef, res, smax / smin))
}

/// Taylor fields of `W` (or `W_j`) of `gamma` at `x0` up to `order`.
/// Stored W terms are echoed exactly; other surfaces are fitted from the
/// tangent-map evaluation of W on a tensor grid in `(t, x - x0)`.
pub fn taylor_fields(
    gamma: &SurfaceMap,
    expansion: Expansion,
    x0: &[f64],
    order: u32,
    grid: &FitGrid,
) -> Result<TaylorFields> {
    if order > MAX_ORDER {
        return contract(format!("Taylor order {order} exceeds the maximum {MAX_ORDER}"));
    }
    if x0.len() != gamma.n {
        return contract(format!("base point has dimension {}, expected {}", x0.len(), gamma.n));
    }
    if let SurfaceKind::OdeFromW { w } = &gamma.kind {
        let exact = match expansion {
            Expansion::W => exact_w_fields(w, order),
            Expansion::Wj(k) => exact_wj_fields(w, k, order.saturating_sub(1))?,
        };
        return Ok(TaylorFields {
            base: x0.to_vec(),
            expansion,
            order,
            fields: exact.into_iter().map(|(a, f)| (a, TaylorField::Exact(f))).collect(),
            fit_residual: 0.0,
            warnings: Vec::new(),
        });
    }
    fit_fields(gamma, expansion, x0, order, grid)
}

fn fit_fields(gamma: &SurfaceMap, expansion: Expansion, x0: &[f64], order: u32, grid: &FitGrid) -> Result<TaylorFields> {
    let (n, nt) = (gamma.n, gamma.big_n);
    let (lo, hi) = match expansion {
        Expansion::W => (1, order),
        Expansion::Wj(_) => (0, order.saturating_sub(1)),
    };
    let t_deg = hi + grid.t_extra;
    let t_basis = multi_indices(nt, lo, t_deg);
    let u_basis = multi_indices(n, 0, grid.x_degree);
    let t_pts = tensor(nt, &cheb(t_deg as usize + 2, grid.t_radius));
    let u_pts = tensor(n, &cheb(grid.x_degree as usize + 2, grid.x_radius));
    let mut warnings = Vec::new();

    // Stage 1: for each u-sample fit the t-expansion.
    let tb = DMatrix::from_fn(t_pts.len(), t_basis.len(), |s, b| mono(&t_pts[s], &t_basis[b]));
    let mut per_u: Vec<DMatrix<f64>> = Vec::with_capacity(u_pts.len());
    let mut residual = 0.0f64;
    let mut cond = 0.0f64;
    for u in &u_pts {
        let x: Vec<f64> = x0.iter().zip(u).map(|(a, b)| a + b).collect();
        let mut vals = DMatrix::zeros(t_pts.len(), n);
        for (s, t) in t_pts.iter().enumerate() {
            let v = match expansion {
                Expansion::W => gamma.w_tangent(t, &x)?,
                Expansion::Wj(j) => gamma.wj_tangent(j, t, &x)?,
            };
            for i in 0..n {
                vals[(s, i)] = v[i];
            }
        }
        let (c, r, k) = lsq(&tb, &vals)?;
        residual = residual.max(r);
        cond = cond.max(k);
        per_u.push(c);
    }
    // Stage 2: each t-coefficient as a polynomial in u.
    let ub = DMatrix::from_fn(u_pts.len(), u_basis.len(), |s, b| mono(&u_pts[s], &u_basis[b]));
    let mut fields = BTreeMap::new();
    for (bi, alpha) in t_basis.iter().enumerate() {
        if alpha.iter().sum::<u32>() > hi {
            continue;
        }
        let vals = DMatrix::from_fn(u_pts.len(), n, |s, i| per_u[s][(bi, i)]);
        let (c, r, k) = lsq(&ub, &vals)?;
        residual = residual.max(r);
        cond = cond.max(k);
        let coeffs = (0..n)
            .map(|i| NumPoly::from_terms(u_basis.iter().enumerate().map(|(m, mu)| (mu.clone(), c[(m, i)]))))
            .collect();
        fields.insert(alpha.clone(), TaylorField::Fitted(PolyField { coeffs, max_degree: grid.x_degree }));
    }
    if cond > 1e8 {
        warnings.push(format!("ill-conditioned fit (condition number {cond:.2e}); enlarge the fit radii"));
    }
    Ok(TaylorFields { base: x0.to_vec(), expansion, order, fields, fit_residual: residual, warnings })
}

/// Degree bookkeeping for Taylor fields: `deg(alpha)` (plus `e_j` for `W_j`)
/// and whether it is a pure power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeEntry {
    pub alpha: Vec<u32>,
    pub degree: DegreeVector,
    pub pure: bool,
}

pub fn degree_table(fields: &TaylorFields, scheme: &DilationScheme, floor: f64) -> Result<Vec<DegreeEntry>> {
    let shift = match fields.expansion {
        Expansion::W => None,
        Expansion::Wj(j) => {
            let mut e = vec![0; scheme.dim()];
            e[j] = 1;
            Some(scheme.degree(&e)?)
        }
    };
    fields
        .values(floor)
        .into_iter()
        .map(|(alpha, _)| {
            let mut degree = scheme.degree(&alpha)?;
            if let Some(s) = &shift {
                degree = &degree + s;
            }
            Ok(DegreeEntry { pure: degree.is_pure(), alpha, degree })
        })
        .collect()
}

/// Multi-indices whose fields are nonzero at the base point and pure powers.
pub fn pure_power_set(table: &[DegreeEntry]) -> BTreeSet<Vec<u32>> {
    table.iter().filter(|e| e.pure).map(|e| e.alpha.clone()).collect()
}
