//! Densities of pushforward measures `Psi_*(psi dtau)` and the `L^1_delta`
//! translation seminorm.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::interp_weights;
use crate::error::{contract, Result};
use crate::kernels::UniformGrid;
use crate::quad::Rule;
use crate::surfaces::curvature::combinations;
use crate::util::{fit_line, LineFit};

/// Highest derivative order scanned by the hypothesis probe.
pub const PROBE_MAX_ORDER: u32 = 3;

/// Tensor quadrature over the parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub panels: usize,
    pub order: usize,
}

impl TauBox {
    pub fn cube(dim: usize, lo: f64, hi: f64, panels: usize, order: usize) -> Self {
        Self { lo: vec![lo; dim], hi: vec![hi; dim], panels, order }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn nodes(&self) -> Vec<(Vec<f64>, f64)> {
        let mut out = vec![(Vec::new(), 1.0)];
        for (a, b) in self.lo.iter().zip(&self.hi) {
            let rule = Rule::composite(*a, *b, self.panels, self.order);
            out = out
                .into_iter()
                .flat_map(|(p, w)| {
                    rule.nodes.iter().zip(&rule.weights).map(move |(x, wx)| ([p.clone(), vec![*x]].concat(), w * wx))
                })
                .collect();
        }
        out
    }
}

/// Outcome of the finite-difference scan of `(d/dtau)^alpha det(dPsi/dtau)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisProbe {
    pub pass: bool,
    /// Smallest `|alpha|` that makes every sample point nondegenerate.
    pub order_needed: Option<u32>,
    /// Over the samples, the smallest of the best `|d^alpha det|`.
    pub min_best: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportDensity {
    pub density: Vec<f64>,
    pub mass_in: f64,
    pub mass_out: f64,
    pub probe: HypothesisProbe,
    pub warnings: Vec<String>,
}

impl TransportDensity {
    pub fn l1_distance(&self, other: &[f64], grid: &UniformGrid) -> f64 {
        cell_volume(grid) * self.density.iter().zip(other).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

pub fn cell_volume(grid: &UniformGrid) -> f64 {
    grid.axes.iter().map(|a| a.step()).product()
}

fn jacobian(psi: &(dyn Fn(&[f64]) -> Vec<f64> + Sync), tau: &[f64], n: usize, h: f64) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(n, tau.len());
    let mut p = tau.to_vec();
    for k in 0..tau.len() {
        p[k] = tau[k] + h;
        let a = psi(&p);
        p[k] = tau[k] - h;
        let b = psi(&p);
        p[k] = tau[k];
        for i in 0..n {
            jac[(i, k)] = (a[i] - b[i]) / (2.0 * h);
        }
    }
    jac
}

/// All `alpha` with `|alpha| = order` in `dim` variables.
fn alphas(dim: usize, order: u32) -> Vec<Vec<u32>> {
    if dim == 0 {
        return if order == 0 { vec![vec![]] } else { vec![] };
    }
    (0..=order)
        .rev()
        .flat_map(|a0| alphas(dim - 1, order - a0).into_iter().map(move |rest| [vec![a0], rest].concat()))
        .collect()
}

/// Central-difference `d^alpha f(tau)` with step `h` per derivative.
fn mixed_derivative(f: &dyn Fn(&[f64]) -> f64, tau: &[f64], alpha: &[u32], h: f64) -> f64 {
    // Expand the tensor stencil of (f(+h/2) - f(-h/2)) / h per derivative.
    let mut terms: Vec<(Vec<f64>, f64)> = vec![(tau.to_vec(), 1.0)];
    for (k, &a) in alpha.iter().enumerate() {
        for _ in 0..a {
            terms = terms
                .into_iter()
                .flat_map(|(p, c)| {
                    let mut plus = p.clone();
                    plus[k] += 0.5 * h;
                    let mut minus = p;
                    minus[k] -= 0.5 * h;
                    [(plus, c / h), (minus, -c / h)]
                })
                .collect();
        }
    }
    terms.iter().map(|(p, c)| c * f(p)).sum()
}

/// Checks that at each of `per_axis^dim` points of the box some
/// `(d/dtau)^alpha` of some `n x n` minor of `dPsi/dtau` is nonzero, `|alpha| <= 3`.
pub fn hypothesis_probe(
    psi: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    n: usize,
    tbox: &TauBox,
    per_axis: usize,
    threshold: f64,
) -> HypothesisProbe {
    let dim = tbox.dim();
    let minors = combinations(dim, n);
    let width = tbox.lo.iter().zip(&tbox.hi).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
    let hd = 1e-2 * width;
    let dets = |tau: &[f64]| -> Vec<f64> {
        let jac = jacobian(psi, tau, n, 1e-5 * width);
        minors.iter().map(|cols| jac.select_columns(cols.iter()).determinant()).collect()
    };
    let per_axis = per_axis.max(2);
    let count = per_axis.pow(dim as u32);
    let mut best_per_order = vec![f64::INFINITY; PROBE_MAX_ORDER as usize + 1];
    let mut min_best = f64::INFINITY;
    for s in 0..count {
        let tau: Vec<f64> = (0..dim)
            .map(|k| {
                let i = (s / per_axis.pow((dim - 1 - k) as u32)) % per_axis;
                tbox.lo[k] + (tbox.hi[k] - tbox.lo[k]) * i as f64 / (per_axis - 1) as f64
            })
            .collect();
        // Cumulative best over orders 0..=k at this point.
        let mut best = 0.0f64;
        for order in 0..=PROBE_MAX_ORDER {
            for alpha in alphas(dim, order) {
                for m in 0..minors.len() {
                    let f = |p: &[f64]| dets(p)[m];
                    best = best.max(mixed_derivative(&f, &tau, &alpha, hd).abs());
                }
            }
            let slot = &mut best_per_order[order as usize];
            *slot = slot.min(best);
        }
        min_best = min_best.min(best);
    }
    let order_needed = best_per_order.iter().position(|v| *v > threshold).map(|o| o as u32);
    HypothesisProbe { pass: order_needed.is_some(), order_needed, min_best, samples: count }
}

/// Density of `Psi_*(psi dtau)` on `ygrid`, deposited linearly so that the
/// grid sum times the cell volume equals the pushed mass.
pub fn transport_density(
    psi_map: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    weight: &(dyn Fn(&[f64]) -> f64 + Sync),
    tbox: &TauBox,
    ygrid: &UniformGrid,
) -> Result<TransportDensity> {
    let n = ygrid.dim();
    if n == 0 || n > tbox.dim() {
        return contract(format!("need 1 <= n <= N, got n = {n}, N = {}", tbox.dim()));
    }
    let probe = hypothesis_probe(psi_map, n, tbox, 5, 1e-6);
    let mut warnings = Vec::new();
    if !probe.pass {
        warnings.push(format!(
            "no derivative of order <= {PROBE_MAX_ORDER} of det dPsi/dtau is bounded away from 0; density may not lie in L^1_delta"
        ));
    }
    let vol = cell_volume(ygrid);
    let mut density = vec![0.0; ygrid.len()];
    let (mut mass_in, mut mass_out) = (0.0, 0.0);
    for (tau, w) in tbox.nodes() {
        let m = w * weight(&tau);
        if m == 0.0 {
            continue;
        }
        mass_in += m;
        let y = psi_map(&tau);
        if y.len() != n {
            return contract(format!("Psi returned {} components, expected {n}", y.len()));
        }
        match interp_weights(ygrid, &y) {
            Some(iw) => {
                for (i, v) in iw {
                    density[i] += m * v / vol;
                }
                mass_out += m;
            }
            None => {}
        }
    }
    if (mass_in - mass_out).abs() > 1e-12 * mass_in.abs().max(1.0) {
        warnings.push(format!("mass {:.3e} of {:.3e} landed outside the y-grid", mass_in - mass_out, mass_in));
    }
    Ok(TransportDensity { density, mass_in, mass_out, probe, warnings })
}

/// `h(y - z)` by multilinear interpolation, zero off the grid.
fn shifted(h: &[f64], grid: &UniformGrid, z: &[f64]) -> Vec<f64> {
    (0..grid.len())
        .map(|k| {
            let y: Vec<f64> = grid.point(k).iter().zip(z).map(|(a, b)| a - b).collect();
            interp_weights(grid, &y).map_or(0.0, |iw| iw.iter().map(|(i, w)| w * h[*i]).sum())
        })
        .collect()
}

/// `int |h(y - z) - h(y)| dy` by the grid rule.
pub fn translation_difference(h: &[f64], grid: &UniformGrid, z: &[f64]) -> f64 {
    let s = shifted(h, grid, z);
    cell_volume(grid) * s.iter().zip(h).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `max_z int |h(y - z) - h(y)| dy / |z|^delta`.
pub fn l1delta_seminorm(h: &[f64], grid: &UniformGrid, delta: f64, zset: &[Vec<f64>]) -> f64 {
    zset.iter()
        .filter(|z| z.iter().any(|v| *v != 0.0))
        .map(|z| {
            let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            translation_difference(h, grid, z) / nz.powf(delta)
        })
        .fold(0.0, f64::max)
}

/// Fit of `log2 int |h(y - z) - h(y)| dy` against `log2 |z|` along the first
/// axis; the slope is the observed Hölder exponent `delta'`.
pub fn translation_modulus(h: &[f64], grid: &UniformGrid, zetas: &[f64]) -> Result<LineFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &zeta in zetas {
        let mut z = vec![0.0; grid.dim()];
        z[0] = zeta;
        let d = translation_difference(h, grid, &z);
        if d > 0.0 && zeta > 0.0 {
            xs.push(zeta.log2());
            ys.push(d.log2());
        }
    }
    fit_line(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_enumeration() {
        assert_eq!(alphas(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(alphas(1, 0), vec![vec![0]]);
    }

    #[test]
    fn square_needs_first_derivative() {
        let psi = |t: &[f64]| vec![t[0] * t[0]];
        let probe = hypothesis_probe(&psi, 1, &TauBox::cube(1, -1.0, 1.0, 1, 4), 5, 1e-6);
        assert_eq!(probe.order_needed, Some(1));
        let flat = |_: &[f64]| vec![0.5];
        assert!(!hypothesis_probe(&flat, 1, &TauBox::cube(1, -1.0, 1.0, 1, 4), 5, 1e-6).pass);
    }

    #[test]
    fn zero_density_has_zero_seminorm() {
        let g = UniformGrid::cube(1, -1.0, 1.0, 65);
        assert_eq!(l1delta_seminorm(&vec![0.0; 65], &g, 0.5, &[vec![0.1]]), 0.0);
    }
}
