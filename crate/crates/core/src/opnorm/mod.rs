//! Discretized dyadic pieces `T_j`, spectral norms, almost-orthogonality
//! fits and the Cotlar-Stein sum.

pub mod transport;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dilations::DilationScheme;
use crate::error::{contract, validation, Error, Result};
use crate::kernels::{BumpSpec, Cutoff, UniformGrid};
use crate::quad::Rule;
use crate::surfaces::SurfaceMap;
use crate::util::{fit_line, LineFit};

/// Default relative tolerance of the power iteration.
pub const POWER_TOL: f64 = 1e-8;
/// Default iteration cap of the power iteration.
pub const POWER_MAX_ITER: usize = 10_000;

/// A real linear map given by its action and the action of its transpose.
pub trait LinOp: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn apply_t(&self, x: &[f64], y: &mut [f64]);
}

impl LinOp for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn apply_t(&self, x: &[f64], y: &mut [f64]) {
        for (c, yc) in y.iter_mut().enumerate() {
            *yc = self.column(c).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// Row-compressed sparse matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseMatrix {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub ncols: usize,
}

impl SparseMatrix {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.ncols);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m[(r, c)] += v;
            }
        }
        m
    }

    pub fn frobenius(&self) -> f64 {
        self.to_dense().norm()
    }
}

impl LinOp for SparseMatrix {
    fn nrows(&self) -> usize {
        self.rows.len()
    }

    fn ncols(&self) -> usize {
        self.ncols
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (yr, row) in y.iter_mut().zip(&self.rows) {
            *yr = row.iter().map(|&(c, v)| v * x[c]).sum();
        }
    }

    fn apply_t(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (xr, row) in x.iter().zip(&self.rows) {
            for &(c, v) in row {
                y[c] += v * xr;
            }
        }
    }
}

/// `op` or its transpose.
#[derive(Clone, Copy)]
pub struct Transposed<'a>(pub &'a dyn LinOp);

impl LinOp for Transposed<'_> {
    fn nrows(&self) -> usize {
        self.0.ncols()
    }

    fn ncols(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.apply_t(x, y);
    }

    fn apply_t(&self, x: &[f64], y: &mut [f64]) {
        self.0.apply(x, y);
    }
}

/// `A B`, applied right to left.
#[derive(Clone, Copy)]
pub struct Product<'a>(pub &'a dyn LinOp, pub &'a dyn LinOp);

impl LinOp for Product<'_> {
    fn nrows(&self) -> usize {
        self.0.nrows()
    }

    fn ncols(&self) -> usize {
        self.1.ncols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut tmp = vec![0.0; self.1.nrows()];
        self.1.apply(x, &mut tmp);
        self.0.apply(&tmp, y);
    }

    fn apply_t(&self, x: &[f64], y: &mut [f64]) {
        let mut tmp = vec![0.0; self.0.ncols()];
        self.0.apply_t(x, &mut tmp);
        self.1.apply_t(&tmp, y);
    }
}

/// Largest singular value by power iteration on `A^T A` from a fixed start
/// vector; stops when the Rayleigh quotient changes by at most `tol` relative.
pub fn spectral_norm(op: &dyn LinOp, tol: f64, max_iter: usize) -> Result<f64> {
    let (m, n) = (op.nrows(), op.ncols());
    if n == 0 || m == 0 {
        return Ok(0.0);
    }
    // Irregular start so that no structured singular vector is missed.
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.754_877_666).sin()).collect();
    let mut ax = vec![0.0; m];
    let mut last = f64::NAN;
    for it in 0..max_iter {
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nx == 0.0 {
            return Ok(0.0);
        }
        x.iter_mut().for_each(|v| *v /= nx);
        op.apply(&x, &mut ax);
        let lambda = ax.iter().map(|v| v * v).sum::<f64>();
        if !lambda.is_finite() {
            return Err(Error::NoConvergence { iterations: it, last: lambda });
        }
        if lambda == 0.0 {
            return Ok(0.0);
        }
        if (lambda - last).abs() <= tol * lambda {
            return Ok(lambda.sqrt());
        }
        last = lambda;
        op.apply_t(&ax, &mut x);
    }
    Err(Error::NoConvergence { iterations: max_iter, last: last.sqrt() })
}

/// x-grid with the t-quadrature used for the pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x: UniformGrid,
    /// Gauss-Legendre panels and order per t-axis over the bump support;
    /// the panel count is raised until the scaled nodes resolve the x-step.
    pub t_panels: usize,
    pub t_order: usize,
}

/// Cutoffs `psi_1(x)`, `psi_2(gamma_t(x))` and `kappa(t, x) = kappa_t(t) kappa_x(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoffs {
    pub psi1: Cutoff,
    pub psi2: Cutoff,
    pub kappa: Cutoff,
}

impl Cutoffs {
    /// `psi_1 = psi_2` equal to 1 on the inner half of a symmetric grid of
    /// half-width `l`, vanishing at `3l/4`; `kappa = 1`.
    pub fn inner_half(l: f64) -> Self {
        let c = Cutoff { inner: 0.5 * l, outer: 0.75 * l };
        Self { psi1: c, psi2: c, kappa: Cutoff::one() }
    }
}

/// A discretized piece with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedOp {
    pub matrix: SparseMatrix,
    pub j: Vec<f64>,
    pub bump_id: String,
    pub surface_id: String,
}

impl LinOp for DiscretizedOp {
    fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.apply(x, y);
    }

    fn apply_t(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.apply_t(x, y);
    }
}

/// Multilinear interpolation weights of `y` on `grid`; `None` outside.
pub fn interp_weights(grid: &UniformGrid, y: &[f64]) -> Option<Vec<(usize, f64)>> {
    let d = grid.dim();
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    for (k, (ax, v)) in grid.axes.iter().zip(y).enumerate() {
        let h = ax.step();
        if ax.n < 2 || !(*v >= ax.lo - 1e-12 * h && *v <= ax.hi + 1e-12 * h) {
            return None;
        }
        let s = ((v - ax.lo) / h).clamp(0.0, (ax.n - 1) as f64);
        let i = (s.floor() as usize).min(ax.n - 2);
        base[k] = i;
        frac[k] = s - i as f64;
    }
    let mut out = Vec::with_capacity(1 << d);
    for corner in 0..(1usize << d) {
        let mut idx = 0;
        let mut w = 1.0;
        for k in 0..d {
            let bit = (corner >> k) & 1;
            idx = idx * grid.axes[k].n + base[k] + bit;
            w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
        }
        if w != 0.0 {
            out.push((idx, w));
        }
    }
    Some(out)
}

/// Tensor Gauss-Legendre nodes over the bump support box.
fn bump_nodes(bump: &BumpSpec, panels: usize, order: usize) -> Vec<(Vec<f64>, f64)> {
    let rules: Vec<Rule> = bump.support_box().iter().map(|r| Rule::composite(-r, *r, panels, order)).collect();
    let mut out = vec![(Vec::new(), 1.0)];
    for rule in &rules {
        out = out
            .into_iter()
            .flat_map(|(p, w)| {
                rule.nodes.iter().zip(&rule.weights).map(move |(x, wx)| ([p.clone(), vec![*x]].concat(), w * wx))
            })
            .collect();
    }
    out.retain(|(s, _)| bump.eval(s) != 0.0);
    out
}

/// Matrix of `T_j f(x) = psi_1(x) int f(gamma_t x) psi_2(gamma_t x) kappa sigma^{(2^j)}(t) dt`
/// after the substitution `t = 2^{-j} s`; `j` may be real.
pub fn discretize_piece(
    surface: &SurfaceMap,
    bump: &BumpSpec,
    scheme: &DilationScheme,
    j: &[f64],
    cutoffs: &Cutoffs,
    grid: &GridSpec,
) -> Result<DiscretizedOp> {
    if grid.x.dim() != surface.n || bump.dim() != surface.big_n || scheme.dim() != surface.big_n {
        return contract("grid, surface, bump and scheme dimensions disagree");
    }
    let delta: Vec<f64> = j.iter().map(|v| (-v).exp2()).collect();
    // Node spacing of the scaled rule stays below a quarter of the finest x-step.
    let h = grid.x.axes.iter().map(|a| a.step()).fold(f64::INFINITY, f64::min);
    let reach = bump
        .support_box()
        .iter()
        .enumerate()
        .map(|(i, r)| 2.0 * r * scheme.power(&delta, i))
        .fold(0.0, f64::max);
    let needed = (4.0 * reach / (h * grid.t_order.max(1) as f64)).ceil() as usize;
    let nodes: Vec<(Vec<f64>, f64)> = bump_nodes(bump, grid.t_panels.max(needed), grid.t_order)
        .into_iter()
        .map(|(s, w)| {
            let sig = bump.eval(&s);
            scheme.scale_point(&delta, &s).map(|t| (t, w * sig))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<(usize, f64)>> = (0..grid.x.len())
        .into_par_iter()
        .map(|r| {
            let x = grid.x.point(r);
            let p1 = cutoffs.psi1.eval(&x);
            let mut row: Vec<(usize, f64)> = Vec::new();
            if p1 == 0.0 {
                return Ok(row);
            }
            let kx = cutoffs.kappa.eval(&x);
            for (t, w) in &nodes {
                let y = surface.gamma(t, &x)?;
                let p2 = cutoffs.psi2.eval(&y);
                if p2 == 0.0 {
                    continue;
                }
                let Some(iw) = interp_weights(&grid.x, &y) else {
                    return validation(format!("gamma image {y:?} of (t, x) = ({t:?}, {x:?}) leaves the grid"));
                };
                let c = w * p1 * p2 * kx * cutoffs.kappa.eval(t);
                row.extend(iw.into_iter().map(|(i, v)| (i, c * v)));
            }
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (i, v) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == i => last.1 += v,
                    _ => merged.push((i, v)),
                }
            }
            Ok(merged)
        })
        .collect::<Result<_>>()?;
    let matrix = SparseMatrix { rows, ncols: grid.x.len() };
    if matrix.rows.iter().flatten().any(|(_, v)| !v.is_finite()) {
        return validation("non-finite matrix entry");
    }
    Ok(DiscretizedOp { matrix, j: j.to_vec(), bump_id: String::new(), surface_id: surface.name.clone() })
}

/// One entry of a pair-norm table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEntry {
    pub j: i64,
    pub k: i64,
    /// `||T_k^* T_j||`.
    pub star_left: f64,
    /// `||T_j T_k^*||`.
    pub star_right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub table: Vec<NormEntry>,
    pub fit: LineFit,
    /// `-slope`.
    pub epsilon: f64,
}

impl DecayFit {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("j,k,norm\n");
        for e in &self.table {
            s += &format!("{},{},{:.12e}\n", e.j, e.k, e.star_left);
        }
        s
    }

    pub fn fit_csv(&self) -> String {
        format!("slope,intercept,r2\n{:.12e},{:.12e},{:.12e}\n", self.fit.slope, self.fit.intercept, self.fit.r2)
    }

    pub fn max_norm(&self) -> f64 {
        self.table.iter().map(|e| e.star_left.max(e.star_right)).fold(0.0, f64::max)
    }
}

/// Norms `||T_k^* T_j||` and `||T_j T_k^*||` for all ordered pairs. The two
/// orders of a pair are computed once: `||T_j^* T_k|| = ||(T_k^* T_j)^*||`.
pub fn pair_norms(ops: &[(i64, &dyn LinOp)], tol: f64) -> Result<Vec<NormEntry>> {
    let pairs: Vec<(usize, usize)> = (0..ops.len()).flat_map(|a| (a..ops.len()).map(move |b| (a, b))).collect();
    let vals: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (ta, tb) = (ops[a].1, ops[b].1);
            let left = spectral_norm(&Product(&Transposed(tb), ta), tol, POWER_MAX_ITER)?;
            let right = spectral_norm(&Product(ta, &Transposed(tb)), tol, POWER_MAX_ITER)?;
            Ok((left, right))
        })
        .collect::<Result<_>>()?;
    let mut table = Vec::with_capacity(ops.len() * ops.len());
    for (&(a, b), &(l, r)) in pairs.iter().zip(&vals) {
        table.push(NormEntry { j: ops[a].0, k: ops[b].0, star_left: l, star_right: r });
        if a != b {
            table.push(NormEntry { j: ops[b].0, k: ops[a].0, star_left: l, star_right: r });
        }
    }
    table.sort_by_key(|e| (e.j, e.k));
    Ok(table)
}

/// Least-squares fit of `log2 ||T_k^* T_j||` against `|j - k|` over pairs with `j != k`.
pub fn fit_decay(table: Vec<NormEntry>) -> Result<DecayFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut distinct = std::collections::BTreeSet::new();
    for e in &table {
        let d = (e.j - e.k).abs();
        if d == 0 {
            continue;
        }
        if e.star_left <= 0.0 {
            return Err(Error::Fit(format!("zero norm at (j, k) = ({}, {})", e.j, e.k)));
        }
        distinct.insert(d);
        xs.push(d as f64);
        ys.push(e.star_left.log2());
    }
    if distinct.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 distinct |j-k| values, got {}", distinct.len())));
    }
    let fit = fit_line(&xs, &ys)?;
    Ok(DecayFit { table, fit, epsilon: -fit.slope })
}

pub fn ao_decay_fit(ops: &[(i64, &dyn LinOp)], tol: f64) -> Result<DecayFit> {
    fit_decay(pair_norms(ops, tol)?)
}

/// `sup_j sum_k max(||T_j^* T_k||^{1/2}, ||T_j T_k^*||^{1/2})`.
pub fn cotlar_bound(table: &[NormEntry]) -> f64 {
    let mut sums: std::collections::BTreeMap<i64, f64> = std::collections::BTreeMap::new();
    for e in table {
        *sums.entry(e.j).or_insert(0.0) += e.star_left.sqrt().max(e.star_right.sqrt());
    }
    sums.values().fold(0.0, |m, v| m.max(*v))
}

/// `|sigma-hat(xi)| = |int sigma(s) e^{-i s xi} ds|` for a one-dimensional bump.
pub fn fourier_abs(bump: &BumpSpec, xi: f64) -> f64 {
    let r = bump.support_radius();
    let panels = 8 + (xi.abs() * r) as usize;
    let rule = Rule::composite(-r, r, panels, 16);
    let (mut re, mut im) = (0.0, 0.0);
    for (s, w) in rule.nodes.iter().zip(&rule.weights) {
        let v = w * bump.eval(&[*s]);
        re += v * (s * xi).cos();
        im -= v * (s * xi).sin();
    }
    re.hypot(im)
}

/// Fourier-side norms `sup_{|xi| <= xi_max} |sigma-hat(2^{-j} xi) sigma-hat(2^{-k} xi)|`
/// of the convolution model, for the same pairs as `ops`.
pub fn convolution_oracle(bump: &BumpSpec, js: &[i64], xi_max: f64, samples: usize) -> Vec<NormEntry> {
    let xis: Vec<f64> = (0..=samples).map(|i| xi_max * i as f64 / samples as f64).collect();
    let hats: Vec<Vec<f64>> =
        js.par_iter().map(|&j| xis.iter().map(|&xi| fourier_abs(bump, xi * (-j as f64).exp2())).collect()).collect();
    let mut table = Vec::new();
    for (a, &j) in js.iter().enumerate() {
        for (b, &k) in js.iter().enumerate() {
            let v = hats[a].iter().zip(&hats[b]).map(|(p, q)| p * q).fold(0.0, f64::max);
            table.push(NormEntry { j, k, star_left: v, star_right: v });
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_rank_one() {
        let id = DMatrix::<f64>::identity(64, 64);
        assert!((spectral_norm(&id, 1e-12, 100).unwrap() - 1.0).abs() < 1e-12);
        let u = nalgebra::DVector::from_fn(5, |i, _| i as f64 + 1.0);
        let v = nalgebra::DVector::from_fn(7, |i, _| 1.0 - 0.2 * i as f64);
        let a = &u * v.transpose();
        let expect = u.norm() * v.norm();
        assert!((spectral_norm(&a, 1e-12, 100).unwrap() - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn interpolation_weights_sum_to_one() {
        let g = UniformGrid::cube(2, -1.0, 1.0, 11);
        let w = interp_weights(&g, &[0.13, -0.71]).unwrap();
        assert!((w.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(interp_weights(&g, &[1.2, 0.0]).is_none());
    }

    #[test]
    fn cotlar_geometric_table() {
        // ||T_j^* T_k|| = 4^{-|j-k|} over J scales gives max_j sum_k 2^{-|j-k|}.
        let jn = 5i64;
        let table: Vec<NormEntry> = (0..jn)
            .flat_map(|j| (0..jn).map(move |k| (j, k)))
            .map(|(j, k)| {
                let v = 4f64.powi(-((j - k).abs() as i32));
                NormEntry { j, k, star_left: v, star_right: v }
            })
            .collect();
        let expect = (0..jn).map(|j| 3.0 - (-j as f64).exp2() - (-(jn - 1 - j) as f64).exp2()).fold(0.0, f64::max);
        assert!((cotlar_bound(&table) - expect).abs() < 1e-14);
    }
}
