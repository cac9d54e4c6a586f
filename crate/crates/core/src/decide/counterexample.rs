//! Multiplier of the divergent kernel built from a Newton-line witness.
//!
//! The kernel is `K = sum_{0<=j<=M} sig^{(A_j)}(s) sig^{(B_j)}(t)` with
//! `A_j = 2^j tau^{1/a}`, `B_j = 2^{-j e/f} tau^{1/b}`. After substituting
//! `u = A_j s`, `v = B_j t` each piece is an integral over the unit support of
//! the bump with phase `xi p(u/A_j, v/B_j)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{newton_verdict, Classification, NewtonMode, NewtonOptions, PolySurface};
use crate::dilations::to_f64;
use crate::error::{validation, Error, Result};
use crate::kernels::{BumpSpec, SeparableTerm};
use crate::quad::Rule;

const ORDER: usize = 16;
const MIN_PANELS: usize = 4;
/// Quadrature nodes per oscillation of the phase.
const NODES_PER_OSC: f64 = 20.0;
/// Below `min |phase'| * r` of this size a smooth compactly supported
/// amplitude contributes nothing measurable (non-stationary phase).
const NONSTATIONARY_CUTOFF: f64 = 4000.0;
const DEFAULT_MAX_NODES: usize = 1 << 16;

/// Paper-order witness: minimal `e/a + f/b`, then minimal `e`.
pub fn select_witness(p: &PolySurface) -> Result<(u32, u32)> {
    let v = newton_verdict(p, NewtonMode::Product, NewtonOptions::default())?;
    if v.classification != Classification::Unbounded {
        return Err(Error::Contract(format!(
            "counterexample needs a product-unbounded polynomial with finite a, b; got {:?}",
            v.classification
        )));
    }
    let (a, b) = (v.a.unwrap_or(1) as i64, v.b.unwrap_or(1) as i64);
    let key = |&(e, f): &(u32, u32)| (super::Q::new(e as i64, a) + super::Q::new(f as i64, b), e);
    Ok(*v.witnesses.iter().min_by_key(|w| key(w)).expect("unbounded verdict has witnesses"))
}

#[derive(Debug, Clone)]
pub struct CounterexampleSetup {
    pub poly: PolySurface,
    pub a: u32,
    pub b: u32,
    pub witness: (u32, u32),
    /// The bump after any rescaling needed for the nonvanishing condition.
    pub bump: BumpSpec,
    /// Factor r such that the bump used is `sig^{(r)}` of the given one.
    pub rescale: f64,
    /// `int exp(i c u^e v^f) sig(u) sig(v) du dv`, the limit of each piece.
    pub limit_piece: Complex64,
    pub tau: f64,
    pub max_nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierPiece {
    pub j: u32,
    pub re: f64,
    pub im: f64,
    /// False when the node cap prevented resolving the oscillation.
    pub resolved: bool,
    pub outer_nodes: usize,
    pub max_inner_nodes: usize,
}

impl MultiplierPiece {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

fn dilated(bump: &BumpSpec, r: f64) -> Result<BumpSpec> {
    let terms = bump
        .terms()
        .iter()
        .map(|t| SeparableTerm { coef: t.coef * r, factors: t.factors.iter().map(|f| f.rescaled(1.0 / r)).collect() })
        .collect();
    BumpSpec::new(1, terms, bump.support_radius() / r)
}

impl CounterexampleSetup {
    /// Validates the bump and rescales it until the single-piece limit is
    /// nonzero. `witness` overrides the paper's selection (used for controls).
    pub fn new(p: &PolySurface, bump: &BumpSpec, tau: f64, witness: Option<(u32, u32)>) -> Result<Self> {
        if bump.dim() != 1 {
            return validation("counterexample bump must be one-dimensional");
        }
        if !(tau > 1.0 && tau.is_finite()) {
            return validation(format!("tau must be > 1, got {tau}"));
        }
        let mass = l1_norm(bump);
        if bump.integral().abs() > 1e-12 * mass.max(1.0) {
            return validation(format!("bump must have zero integral, got {:e}", bump.integral()));
        }
        let (a, b) = match (p.a(), p.b()) {
            (Some(a), Some(b)) => (a, b),
            _ => return validation("counterexample needs finite a and b"),
        };
        let witness = match witness {
            Some(w) => w,
            None => select_witness(p)?,
        };
        if witness.1 == 0 {
            return validation("witness needs f > 0");
        }
        let c = to_f64(&p.coefficient(witness.0, witness.1));
        let c = if c == 0.0 { 1.0 } else { c };
        for r in [1.0, 2.0, 4.0, 8.0, 16.0] {
            let sig = dilated(bump, r)?;
            let radius = sig.support_box()[0];
            let rule = Rule::composite(-radius, radius, 8, ORDER);
            let vals: Vec<f64> = rule.nodes.iter().map(|&u| sig.eval(&[u])).collect();
            let (e, f) = (witness.0 as i32, witness.1 as i32);
            let mut acc = Complex64::new(0.0, 0.0);
            for (iu, &u) in rule.nodes.iter().enumerate() {
                for (iv, &v) in rule.nodes.iter().enumerate() {
                    let w = rule.weights[iu] * rule.weights[iv] * vals[iu] * vals[iv];
                    acc += Complex64::from_polar(w, c * u.powi(e) * v.powi(f));
                }
            }
            let scale = l1_norm(&sig).powi(2);
            if acc.norm() > 1e-8 * scale {
                return Ok(Self {
                    poly: p.clone(),
                    a,
                    b,
                    witness,
                    bump: sig,
                    rescale: r,
                    limit_piece: acc,
                    tau,
                    max_nodes: DEFAULT_MAX_NODES,
                });
            }
        }
        Err(Error::Construction("bump violates the nonvanishing condition at every tried rescaling".into()))
    }

    /// `m0 = e/a + f/b`.
    pub fn m0(&self) -> f64 {
        f64::from(self.witness.0) / f64::from(self.a) + f64::from(self.witness.1) / f64::from(self.b)
    }

    /// Default frequency `tau^{m0}`.
    pub fn frequency(&self) -> f64 {
        self.tau.powf(self.m0())
    }

    /// Piece j at frequency `xi`.
    pub fn piece(&self, j: u32, xi: f64) -> MultiplierPiece {
        let (e, f) = (f64::from(self.witness.0), f64::from(self.witness.1));
        let log_tau = self.tau.log2();
        let log_a = f64::from(j) + log_tau / f64::from(self.a);
        let log_b = -f64::from(j) * e / f + log_tau / f64::from(self.b);
        // Phase coefficients kappa_{g,h} = xi c A^{-g} B^{-h}.
        let kappa: Vec<(i32, i32, f64)> = self
            .poly
            .terms()
            .iter()
            .map(|(&(g, h), c)| {
                let lg = xi.abs().log2() - f64::from(g) * log_a - f64::from(h) * log_b;
                (g as i32, h as i32, xi.signum() * to_f64(c) * lg.exp2())
            })
            .collect();
        let r = self.bump.support_box()[0];
        let du: f64 = kappa
            .iter()
            .map(|&(g, h, k)| k.abs() * f64::from(g) * r.powi((g - 1).max(0)) * r.powi(h))
            .sum();
        let (outer, outer_ok) = rule_for(du, r, self.max_nodes);
        let mut resolved = outer_ok;
        let mut max_inner = 0;
        let mut acc = Complex64::new(0.0, 0.0);
        let max_h = kappa.iter().map(|k| k.1).max().unwrap_or(0) as usize;
        for (&u, &wu) in outer.nodes.iter().zip(&outer.weights) {
            let su = self.bump.eval(&[u]);
            if su == 0.0 {
                continue;
            }
            // Q_u(v) = sum_h beta_h v^h.
            let mut beta = vec![0.0; max_h + 1];
            for &(g, h, k) in &kappa {
                beta[h as usize] += k * u.powi(g);
            }
            let dv: f64 = beta.iter().enumerate().map(|(h, bh)| bh.abs() * h as f64 * r.powi(h as i32 - 1)).sum();
            let need = needed_nodes(dv, r);
            if need > self.max_nodes && nonstationary(&beta, r) {
                continue;
            }
            let (inner, ok) = rule_for(dv, r, self.max_nodes);
            resolved &= ok;
            max_inner = max_inner.max(inner.len());
            let mut part = Complex64::new(0.0, 0.0);
            for (&v, &wv) in inner.nodes.iter().zip(&inner.weights) {
                let sv = self.bump.eval(&[v]);
                if sv == 0.0 {
                    continue;
                }
                let phase = beta.iter().rev().fold(0.0, |acc, bh| acc * v + bh);
                part += Complex64::from_polar(wv * sv, phase);
            }
            acc += part * (wu * su);
        }
        MultiplierPiece { j, re: acc.re, im: acc.im, resolved, outer_nodes: outer.len(), max_inner_nodes: max_inner }
    }
}

fn needed_nodes(deriv_bound: f64, r: f64) -> usize {
    let osc = deriv_bound * 2.0 * r / std::f64::consts::TAU;
    let panels = ((osc * NODES_PER_OSC) / ORDER as f64).ceil().max(MIN_PANELS as f64);
    if panels > 1e12 {
        usize::MAX
    } else {
        panels as usize * ORDER
    }
}

fn rule_for(deriv_bound: f64, r: f64, cap: usize) -> (Rule, bool) {
    let need = needed_nodes(deriv_bound, r);
    let ok = need <= cap;
    let n = need.min(cap);
    (Rule::composite(-r, r, (n / ORDER).max(1), ORDER), ok)
}

/// `|Q'|` bounded away from zero with constant sign on `[-r, r]` (sampled),
/// strongly enough that the integral is negligible.
fn nonstationary(beta: &[f64], r: f64) -> bool {
    let n = 2048;
    let mut sign = 0.0;
    let mut min = f64::INFINITY;
    for i in 0..=n {
        let v = -r + 2.0 * r * i as f64 / n as f64;
        let d = beta.iter().enumerate().skip(1).rev().fold(0.0, |acc, (h, bh)| acc * v + h as f64 * bh);
        if sign == 0.0 {
            sign = d.signum();
        } else if d.signum() != sign {
            return false;
        }
        min = min.min(d.abs());
    }
    min * r >= NONSTATIONARY_CUTOFF
}

fn l1_norm(b: &BumpSpec) -> f64 {
    let r = b.support_box()[0];
    Rule::composite(-r, r, 8, ORDER).integrate(|x| b.eval(&[x]).abs())
}

/// Pieces `j = 0..=m` at the default frequency, in order.
pub fn counterexample_pieces(setup: &CounterexampleSetup, m: u32) -> Vec<MultiplierPiece> {
    let xi = setup.frequency();
    (0..=m).into_par_iter().map(|j| setup.piece(j, xi)).collect()
}

/// `m(tau^{m0})` for the kernel truncated at `M`.
pub fn counterexample_multiplier(p: &PolySurface, bump: &BumpSpec, tau: f64, m: u32) -> Result<Complex64> {
    let setup = CounterexampleSetup::new(p, bump, tau, None)?;
    Ok(counterexample_pieces(&setup, m).iter().map(MultiplierPiece::value).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Shape;

    fn sig() -> BumpSpec {
        BumpSpec::product(&[Shape::Deriv(1)], 0.25).unwrap()
    }

    #[test]
    fn witness_follows_minimal_line_value_then_e() {
        let p = PolySurface::monomials(&[(6, 0), (0, 6), (2, 2), (3, 1)]).unwrap();
        assert_eq!(select_witness(&p).unwrap(), (2, 2));
        let p = PolySurface::monomials(&[(3, 0), (0, 3), (1, 1)]).unwrap();
        assert_eq!(select_witness(&p).unwrap(), (1, 1));
    }

    #[test]
    fn rejects_bounded_polynomial_without_override() {
        let p = PolySurface::monomials(&[(1, 0), (0, 1)]).unwrap();
        assert!(CounterexampleSetup::new(&p, &sig(), 16.0, None).is_err());
    }

    #[test]
    fn rejects_bump_with_mass() {
        let p = PolySurface::monomials(&[(3, 0), (0, 3), (1, 1)]).unwrap();
        let b = BumpSpec::product(&[Shape::Mollifier], 0.25).unwrap();
        assert!(matches!(CounterexampleSetup::new(&p, &b, 16.0, None), Err(Error::Validation(_))));
    }

    #[test]
    fn reality_symmetry() {
        let p = PolySurface::monomials(&[(3, 0), (0, 3), (1, 1)]).unwrap();
        let s = CounterexampleSetup::new(&p, &sig(), 64.0, None).unwrap();
        let xi = s.frequency();
        for j in 0..3 {
            let a = s.piece(j, xi).value();
            let b = s.piece(j, -xi).value();
            assert!((a - b.conj()).norm() <= 1e-10, "j={j}");
        }
    }
}
