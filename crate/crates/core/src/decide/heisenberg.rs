//! Heisenberg group case study: group law, Zygmund dilations, and the
//! diagonal-scale kernel whose Euclidean multiplier diverges while the group
//! convolution pieces stay almost orthogonal.
//!
//! The group side lives on `H^1` modulo the central lattice `{(0, 0, P k)}`,
//! so `t` is periodic and group convolution splits into independent blocks,
//! one per `t`-frequency `tau`. Each block acts on the `(x, y)` grid as the
//! twisted convolution `f(x - a, y - b) e^{-2 i tau (y a - x b)}`.

use std::ops::Neg;

use num_traits::Num;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::kernels::{BumpSpec, Cutoff, UniformGrid};
use crate::opnorm::{fit_decay, interp_weights, pair_norms, DecayFit, LinOp, NormEntry};
use crate::quad::Rule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeisPoint<T> {
    pub x: T,
    pub y: T,
    pub t: T,
}

impl<T> HeisPoint<T>
where
    T: Copy + Num + Neg<Output = T>,
{
    pub fn new(x: T, y: T, t: T) -> Self {
        Self { x, y, t }
    }

    pub fn identity() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    /// `(x + x', y + y', t + t' + 2 (y x' - x y'))`.
    pub fn mul(&self, h: &Self) -> Self {
        Self::new(self.x + h.x, self.y + h.y, self.t + h.t + (T::one() + T::one()) * (self.y * h.x - self.x * h.y))
    }

    pub fn inverse(&self) -> Self {
        Self::new(-self.x, -self.y, -self.t)
    }

    /// `(d1 x, d2 y, d1 d2 t)`.
    pub fn dilate(&self, d1: T, d2: T) -> Self {
        Self::new(d1 * self.x, d2 * self.y, d1 * d2 * self.t)
    }
}

/// `g h`.
pub fn heis_op<T>(g: &HeisPoint<T>, h: &HeisPoint<T>) -> HeisPoint<T>
where
    T: Copy + Num + Neg<Output = T>,
{
    g.mul(h)
}

fn hat(bump: &BumpSpec, scale: f64, xi: f64) -> Complex64 {
    // int 2^j b(2^j s) e^{-i xi s} ds with 2^j = 1 / scale, after s = scale u.
    let r = bump.support_radius();
    let panels = 16 + (xi.abs() * scale * r) as usize;
    let rule = Rule::composite(-r, r, panels, 16);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(u, w)| Complex64::from_polar(w * bump.eval(&[*u]), -xi * scale * u))
        .sum()
}

/// Setup of the diagonal-scale demo: `sigma_(j, -j) = phi(x) phi(y) psi(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeisDemo {
    /// One-dimensional, `phi-hat(0) = 1`.
    pub phi: crate::kernels::BumpConfig,
    /// One-dimensional, `int psi = 0`, `psi-hat(1) > 0`.
    pub psi: crate::kernels::BumpConfig,
    pub m: u32,
    /// Points per axis of the periodic-in-`t` grid.
    pub n: usize,
    /// Grid covers `[-half_width, half_width)` per axis; the `t` period is `2 half_width`.
    pub half_width: f64,
    /// `psi_1 = psi_2` in `x` and `y`.
    pub cutoff: Cutoff,
    /// False replaces group convolution by Euclidean convolution.
    pub twist: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EuclideanSide {
    /// `sum_{|j| <= M} K_j-hat(0, 0, 1)`.
    pub partial_sum: [f64; 2],
    pub psi_hat_1: f64,
    pub expected: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeisReport {
    pub euclidean: EuclideanSide,
    /// Group-side pair norms over `j_1 = -M..=M`, keyed by `j_1`.
    pub fit: Option<DecayFit>,
    pub table: Vec<NormEntry>,
    /// `(M', max norm over |j_1|, |k_1| <= M')` for every `M' <= M`.
    pub max_by_m: Vec<(u32, f64)>,
}

impl HeisDemo {
    fn bumps(&self) -> Result<(BumpSpec, BumpSpec)> {
        let phi = BumpSpec::from_config(&self.phi)?;
        let psi = BumpSpec::from_config(&self.psi)?;
        if phi.dim() != 1 || psi.dim() != 1 {
            return validation("phi and psi must be one-dimensional");
        }
        if (phi.integral() - 1.0).abs() > 1e-8 {
            return validation(format!("phi-hat(0) = {} is not 1", phi.integral()));
        }
        if psi.integral().abs() > 1e-6 {
            return validation(format!("int psi = {:.3e} is not 0", psi.integral()));
        }
        if hat(&psi, 1.0, 1.0).re <= 0.0 {
            return validation("psi-hat(1) must be positive");
        }
        Ok((phi, psi))
    }

    fn grid_axis(&self) -> UniformGrid {
        let h = 2.0 * self.half_width / self.n as f64;
        UniformGrid::cube(1, -self.half_width, self.half_width - h, self.n)
    }

    /// Partial sum of `K-hat(0, 0, 1)` over the `2M + 1` diagonal scales,
    /// each piece integrated over its own dilated support.
    pub fn euclidean_side(&self) -> Result<EuclideanSide> {
        let (phi, psi) = self.bumps()?;
        let mut sum = Complex64::new(0.0, 0.0);
        for j in -(self.m as i32)..=(self.m as i32) {
            let sx = (-j as f64).exp2();
            // The t-scale is 2^{j - j} = 1.
            sum += hat(&phi, sx, 0.0) * hat(&phi, 1.0 / sx, 0.0) * hat(&psi, 1.0, 1.0);
        }
        let psi_hat_1 = hat(&psi, 1.0, 1.0).re;
        let expected = (2 * self.m + 1) as f64 * psi_hat_1;
        Ok(EuclideanSide {
            partial_sum: [sum.re, sum.im],
            psi_hat_1,
            expected,
            rel_err: (sum - expected).norm() / expected.abs(),
        })
    }

    /// Group convolution piece for `j = (j1, -j1)`.
    pub fn piece(&self, j1: i32) -> Result<HeisPiece> {
        let (phi, psi) = self.bumps()?;
        let axis = self.grid_axis();
        let n = self.n;
        let h = axis.axes[0].step();
        let period = 2.0 * self.half_width;
        let coords: Vec<f64> = (0..n).map(|i| axis.axes[0].point(i)).collect();
        let reach = phi.support_radius() * (j1.abs() as f64).exp2();
        if self.cutoff.outer + reach > self.half_width + 1e-12 {
            return validation(format!(
                "scale j1 = {j1} reaches {reach} beyond the cutoff {}; the grid half-width {} is too small",
                self.cutoff.outer, self.half_width
            ));
        }
        let taus: Vec<f64> =
            (0..n).map(|k| 2.0 * std::f64::consts::PI * (k as f64 - (n / 2) as f64) / period).collect();
        let sx = (-j1 as f64).exp2();
        let sy = 1.0 / sx;
        let psi_hats: Vec<Complex64> = taus.iter().map(|&tau| hat(&psi, 1.0, tau)).collect();
        let max_coord = self.cutoff.outer;
        // 1-D twisted weights: w[other][c][c'] = int phi_s(a) psi2(c - a) e^{i sgn 2 tau other a} Lambda_{c'}(c - a) da.
        let twisted = |scale: f64, tau: f64, sign: f64| -> Vec<Vec<Vec<(usize, Complex64)>>> {
            let r = phi.support_radius() * scale;
            let rate = 2.0 * tau.abs() * max_coord;
            let width = (h / 4.0).min(if rate > 0.0 { std::f64::consts::PI / rate } else { f64::INFINITY });
            let panels = ((2.0 * r / width).ceil() as usize).max(2);
            let rule = Rule::composite(-r, r, panels, 8);
            let nodes: Vec<(f64, f64)> = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(a, w)| (*a, w * phi.eval(&[a / scale]) / scale))
                .filter(|(_, w)| *w != 0.0)
                .collect();
            coords
                .iter()
                .map(|&other| {
                    coords
                        .iter()
                        .map(|&c| {
                            if self.cutoff.eval1(c) == 0.0 {
                                return Vec::new();
                            }
                            let mut row: Vec<(usize, Complex64)> = Vec::new();
                            for &(a, w) in &nodes {
                                let img = c - a;
                                let p2 = self.cutoff.eval1(img);
                                if p2 == 0.0 {
                                    continue;
                                }
                                let phase = if self.twist { sign * 2.0 * tau * other * a } else { 0.0 };
                                let v = Complex64::from_polar(w * p2, phase);
                                for (i, iw) in interp_weights(&axis, &[img]).unwrap_or_default() {
                                    row.push((i, v * iw));
                                }
                            }
                            merge(row)
                        })
                        .collect()
                })
                .collect()
        };
        let blocks: Vec<Vec<Vec<(u32, Complex64)>>> = taus
            .par_iter()
            .zip(&psi_hats)
            .map(|(&tau, &ph)| {
                // Phase e^{-2 i tau y a} for the x-integral, e^{+2 i tau x b} for the y-integral.
                let ax = twisted(sx, tau, -1.0);
                let by = twisted(sy, tau, 1.0);
                let mut rows = Vec::with_capacity(n * n);
                for ix in 0..n {
                    for iy in 0..n {
                        let p1 = self.cutoff.eval1(coords[ix]) * self.cutoff.eval1(coords[iy]);
                        let mut row = Vec::new();
                        if p1 != 0.0 {
                            for &(cx, vx) in &ax[iy][ix] {
                                for &(cy, vy) in &by[ix][iy] {
                                    row.push(((cx * n + cy) as u32, ph * p1 * vx * vy));
                                }
                            }
                        }
                        rows.push(row);
                    }
                }
                rows
            })
            .collect();
        Ok(HeisPiece { n, j1, blocks })
    }

    /// Euclidean partial sum, group-side norm table over `j1 = -M..=M`, and the
    /// table maximum restricted to every smaller `M'`.
    pub fn divergence_check(&self, tol: f64) -> Result<HeisReport> {
        let euclidean = self.euclidean_side()?;
        let m = self.m as i32;
        let pieces: Vec<HeisPiece> = (-m..=m).map(|j| self.piece(j)).collect::<Result<_>>()?;
        let ops: Vec<(i64, &dyn LinOp)> = pieces.iter().map(|p| (p.j1 as i64, p as &dyn LinOp)).collect();
        let table = pair_norms(&ops, tol)?;
        let max_by_m = (0..=self.m)
            .map(|mm| {
                let mx = table
                    .iter()
                    .filter(|e| e.j.unsigned_abs() <= mm as u64 && e.k.unsigned_abs() <= mm as u64)
                    .map(|e| e.star_left.max(e.star_right))
                    .fold(0.0, f64::max);
                (mm, mx)
            })
            .collect();
        let fit = fit_decay(table.clone()).ok();
        Ok(HeisReport { euclidean, fit, table, max_by_m })
    }
}

fn merge<T: Copy + std::ops::AddAssign>(mut row: Vec<(usize, T)>) -> Vec<(usize, T)> {
    row.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, T)> = Vec::with_capacity(row.len());
    for (i, v) in row {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += v,
            _ => out.push((i, v)),
        }
    }
    out
}

/// One group convolution piece in `t`-Fourier coordinates. As a real
/// operator the vector holds `(re, im)` pairs, block `k` first, then the
/// `(x, y)` grid with `y` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct HeisPiece {
    pub n: usize,
    pub j1: i32,
    blocks: Vec<Vec<Vec<(u32, Complex64)>>>,
}

impl HeisPiece {
    pub fn nnz(&self) -> usize {
        self.blocks.iter().flatten().map(Vec::len).sum()
    }
}

impl LinOp for HeisPiece {
    fn nrows(&self) -> usize {
        2 * self.n * self.n * self.n
    }

    fn ncols(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n2 = self.n * self.n;
        for (k, block) in self.blocks.iter().enumerate() {
            let off = 2 * k * n2;
            for (r, row) in block.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for &(c, v) in row {
                    let i = off + 2 * c as usize;
                    acc += v * Complex64::new(x[i], x[i + 1]);
                }
                y[off + 2 * r] = acc.re;
                y[off + 2 * r + 1] = acc.im;
            }
        }
    }

    fn apply_t(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let n2 = self.n * self.n;
        for (k, block) in self.blocks.iter().enumerate() {
            let off = 2 * k * n2;
            for (r, row) in block.iter().enumerate() {
                let xr = Complex64::new(x[off + 2 * r], x[off + 2 * r + 1]);
                for &(c, v) in row {
                    let u = v.conj() * xr;
                    let i = off + 2 * c as usize;
                    y[i] += u.re;
                    y[i + 1] += u.im;
                }
            }
        }
    }
}
