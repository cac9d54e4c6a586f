//! Curvature conditions: Hormander spanning of the Taylor fields of `W`
//! (CZ) or of the `W_j` (CY), and nonvanishing of a derivative of
//! `det dGamma/dtau` (CJ). Also the leaf-membership check.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::taylor::{taylor_fields, Expansion, FitGrid, TaylorField};
use super::SurfaceMap;
use crate::error::{contract, Result};
use crate::util::{norm2, seeded_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurvatureMode {
    CZ,
    CY,
    CJ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurvatureOptions {
    /// `holds` iff the margin exceeds this.
    pub threshold: f64,
    /// Margins in `[floor, threshold]` are indeterminate.
    pub floor: f64,
    pub fit: FitGrid,
    /// Radius of the tau-rays used by CJ.
    pub cj_radius: f64,
    pub cj_directions: usize,
    /// Cap on the number of distinct vectors entering the minor search.
    pub max_vectors: usize,
    pub seed: u64,
}

impl Default for CurvatureOptions {
    fn default() -> Self {
        Self {
            threshold: 1e-8,
            floor: 1e-12,
            fit: FitGrid::default(),
            cj_radius: 0.05,
            cj_directions: 6,
            max_vectors: 40,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub mode: CurvatureMode,
    pub holds: bool,
    pub verdict: Verdict,
    /// `(M, M')` for CZ/CY; `(|beta|, 0)` for CJ. The full requested orders when the check fails.
    pub order_used: (u32, u32),
    /// Labels of the spanning minor, or of the CJ minor and derivative.
    pub witness: Vec<String>,
    pub margin: f64,
    pub threshold: f64,
    pub warnings: Vec<String>,
}

/// k-subsets of `0..m` in lexicographic order.
pub fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            if m - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= m {
        rec(0, m, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// Largest `|det|` over n x n minors of the columns, first maximizer in
/// lexicographic order. Parallel duplicates and vectors below `floor` are
/// dropped first; at most `cap` vectors (largest norms) are searched.
pub fn max_minor(vectors: &[(String, Vec<f64>)], n: usize, floor: f64, cap: usize) -> (f64, Vec<String>) {
    let mut kept: Vec<(String, Vec<f64>, f64)> = Vec::new();
    for (label, v) in vectors {
        let nv = norm2(v);
        if nv <= floor {
            continue;
        }
        let dup = kept.iter().any(|(_, w, nw)| {
            let dot: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
            (dot.abs() / (nv * nw) - 1.0).abs() < 1e-12
        });
        if !dup {
            kept.push((label.clone(), v.clone(), nv));
        }
    }
    if kept.len() > cap {
        kept.sort_by(|a, b| b.2.total_cmp(&a.2));
        kept.truncate(cap);
    }
    let mut best = (0.0, Vec::new());
    for cols in combinations(kept.len(), n) {
        let m = DMatrix::from_fn(n, n, |i, c| kept[cols[c]].1[i]);
        let d = m.determinant().abs();
        if d > best.0 {
            best = (d, cols.iter().map(|&c| kept[c].0.clone()).collect());
        }
    }
    best
}

fn label(alpha: &[u32], j: Option<usize>) -> String {
    let a: Vec<String> = alpha.iter().map(u32::to_string).collect();
    match j {
        None => format!("X({})", a.join(",")),
        Some(j) => format!("X({}),{}", a.join(","), j + 1),
    }
}

/// Generators with their Taylor order, for CZ or CY.
fn generators(gamma: &SurfaceMap, mode: CurvatureMode, x0: &[f64], m: u32, opts: &CurvatureOptions) -> Result<(Vec<(u32, String, TaylorField)>, Vec<String>)> {
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    let expansions: Vec<(Expansion, Option<usize>)> = match mode {
        CurvatureMode::CZ => vec![(Expansion::W, None)],
        CurvatureMode::CY => (0..gamma.big_n).map(|j| (Expansion::Wj(j), Some(j))).collect(),
        CurvatureMode::CJ => return contract("CJ has no Taylor generators"),
    };
    for (e, j) in expansions {
        let tf = taylor_fields(gamma, e, x0, m, &opts.fit)?;
        warnings.extend(tf.warnings.iter().cloned());
        for (alpha, f) in tf.fields {
            // W_j's coefficient at beta enters W at order |beta| + 1.
            let ord = alpha.iter().sum::<u32>() + u32::from(j.is_some());
            out.push((ord, label(&alpha, j), f));
        }
    }
    Ok((out, warnings))
}

/// Right-nested brackets of `gens` up to length `mp`, with their labels and
/// the largest generator order involved.
fn bracket_words(gens: &[(u32, String, TaylorField)], mp: u32) -> Result<Vec<(u32, u32, String, TaylorField)>> {
    let mut all: Vec<(u32, u32, String, TaylorField)> =
        gens.iter().map(|(o, l, f)| (*o, 1, l.clone(), f.clone())).collect();
    let mut level = all.clone();
    for len in 2..=mp {
        let mut next = Vec::new();
        for (og, lg, g) in gens {
            for (ow, _, lw, w) in &level {
                let b = g.bracket(w)?;
                let zero = match &b {
                    TaylorField::Exact(f) => f.is_zero(),
                    TaylorField::Fitted(p) => p.coeffs.iter().all(|c| c.terms().is_empty()),
                };
                if !zero {
                    next.push(((*og).max(*ow), len, format!("[{lg},{lw}]"), b));
                }
            }
        }
        all.extend(next.iter().cloned());
        level = next;
    }
    Ok(all)
}

fn classify(margin: f64, opts: &CurvatureOptions) -> Verdict {
    if margin > opts.threshold {
        Verdict::Holds
    } else if margin >= opts.floor {
        Verdict::Indeterminate
    } else {
        Verdict::Fails
    }
}

/// Check CZ, CY or CJ for `gamma` at `x0`. For CZ/CY, `m` bounds the Taylor
/// order and `m_prime` the bracket length; for CJ, `m` bounds `|beta|`.
pub fn curvature_check(
    gamma: &SurfaceMap,
    x0: &[f64],
    mode: CurvatureMode,
    m: u32,
    m_prime: u32,
    opts: &CurvatureOptions,
) -> Result<CurvatureReport> {
    if mode == CurvatureMode::CJ {
        return cj_check(gamma, x0, m, opts);
    }
    if m == 0 || m_prime == 0 {
        return contract("curvature orders must be at least 1");
    }
    let (gens, warnings) = generators(gamma, mode, x0, m, opts)?;
    let words = bracket_words(&gens, m_prime)?;
    let values: Vec<(u32, u32, String, Vec<f64>)> =
        words.iter().map(|(o, l, s, f)| (*o, *l, s.clone(), f.at(x0))).collect();
    let mut best = (0.0, Vec::new());
    for mm in 1..=m {
        for mp in 1..=m_prime {
            let vecs: Vec<(String, Vec<f64>)> = values
                .iter()
                .filter(|(o, l, _, _)| *o <= mm && *l <= mp)
                .map(|(_, _, s, v)| (s.clone(), v.clone()))
                .collect();
            let (margin, witness) = max_minor(&vecs, gamma.n, opts.floor, opts.max_vectors);
            if margin > opts.threshold {
                return Ok(CurvatureReport {
                    mode,
                    holds: true,
                    verdict: Verdict::Holds,
                    order_used: (mm, mp),
                    witness,
                    margin,
                    threshold: opts.threshold,
                    warnings,
                });
            }
            if margin > best.0 {
                best = (margin, witness);
            }
        }
    }
    Ok(CurvatureReport {
        mode,
        holds: false,
        verdict: classify(best.0, opts),
        order_used: (m, m_prime),
        witness: best.1,
        margin: best.0,
        threshold: opts.threshold,
        warnings,
    })
}

/// `dGamma/dtau` at `tau`, `Gamma = gamma_{t^1} o ... o gamma_{t^n}(x0)`, as n x nN.
pub fn gamma_jacobian(gamma: &SurfaceMap, tau: &[f64], x0: &[f64]) -> Result<DMatrix<f64>> {
    let (n, nt) = (gamma.n, gamma.big_n);
    if tau.len() != n * nt {
        return contract(format!("tau has length {}, expected {}", tau.len(), n * nt));
    }
    let mut y = x0.to_vec();
    let mut tangents = vec![None; n];
    for i in (0..n).rev() {
        let tg = gamma.tangent(&tau[i * nt..(i + 1) * nt], &y)?;
        y = tg.value.clone();
        tangents[i] = Some(tg);
    }
    let mut jac = DMatrix::zeros(n, n * nt);
    let mut prefix = DMatrix::<f64>::identity(n, n);
    for (i, tg) in tangents.iter().enumerate() {
        let tg = tg.as_ref().expect("filled above");
        let dt = DMatrix::from_fn(n, nt, |a, b| tg.dt[a][b]);
        jac.columns_mut(i * nt, nt).copy_from(&(&prefix * dt));
        prefix *= DMatrix::from_fn(n, n, |a, b| tg.dx[a][b]);
    }
    Ok(jac)
}

fn cj_check(gamma: &SurfaceMap, x0: &[f64], m: u32, opts: &CurvatureOptions) -> Result<CurvatureReport> {
    let (n, nt) = (gamma.n, gamma.big_n);
    let dim = n * nt;
    let r = opts.cj_radius;
    let g = gamma.pinned(&vec![r; nt], x0)?;
    let deg = m as usize + 3;
    let nodes: Vec<f64> = (0..2 * deg + 1).map(|i| (std::f64::consts::PI * (i as f64 + 0.5) / (2 * deg + 1) as f64).cos()).collect();
    let vander = DMatrix::from_fn(nodes.len(), deg + 1, |s, k| nodes[s].powi(k as i32));
    let svd = vander.svd(true, true);
    let minors = combinations(dim, n);
    let mut rng = seeded_rng(opts.seed);
    let mut margins = vec![(0.0f64, Vec::<String>::new()); m as usize + 1];
    for d in 0..opts.cj_directions.max(1) {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let nv = norm2(&v);
        v.iter_mut().for_each(|c| *c /= nv);
        let mut vals = DMatrix::zeros(nodes.len(), minors.len());
        for (s, &z) in nodes.iter().enumerate() {
            let tau: Vec<f64> = v.iter().map(|c| c * z * r).collect();
            let jac = gamma_jacobian(&g, &tau, x0)?;
            for (mi, cols) in minors.iter().enumerate() {
                vals[(s, mi)] = jac.select_columns(cols.iter()).determinant();
            }
        }
        let coef = svd.solve(&vals, 1e-14).map_err(|e| crate::error::Error::Fit(e.to_string()))?;
        for k in 0..=m as usize {
            for (mi, cols) in minors.iter().enumerate() {
                let c = (coef[(k, mi)] / r.powi(k as i32)).abs();
                if c > margins[k].0 {
                    let mut w: Vec<String> = cols.iter().map(|&c| format!("tau[{},{}]", c / nt + 1, c % nt + 1)).collect();
                    w.push(format!("|beta| = {k}"));
                    w.push(format!("direction {d}"));
                    margins[k] = (c, w);
                }
            }
        }
    }
    for (k, (margin, witness)) in margins.iter().enumerate() {
        if *margin > opts.threshold {
            return Ok(CurvatureReport {
                mode: CurvatureMode::CJ,
                holds: true,
                verdict: Verdict::Holds,
                order_used: (k as u32, 0),
                witness: witness.clone(),
                margin: *margin,
                threshold: opts.threshold,
                warnings: Vec::new(),
            });
        }
    }
    let (margin, witness) = margins.into_iter().max_by(|a, b| a.0.total_cmp(&b.0)).unwrap_or_default();
    Ok(CurvatureReport {
        mode: CurvatureMode::CJ,
        holds: false,
        verdict: classify(margin, opts),
        order_used: (m, 0),
        witness,
        margin,
        threshold: opts.threshold,
        warnings: Vec::new(),
    })
}

/// Whether `W(t, x0)` lies in the span at `x0` of the Taylor fields of W and
/// their brackets, i.e. is tangent to the leaf through `x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafReport {
    pub pass: bool,
    pub span_rank: usize,
    pub max_distance: f64,
    pub witness_t: Vec<f64>,
    pub tol: f64,
    pub samples: usize,
}

pub fn leaf_membership(
    gamma: &SurfaceMap,
    x0: &[f64],
    order: u32,
    m_prime: u32,
    t_samples: &[Vec<f64>],
    tol: f64,
    opts: &CurvatureOptions,
) -> Result<LeafReport> {
    let (gens, _) = generators(gamma, CurvatureMode::CZ, x0, order, opts)?;
    let words = bracket_words(&gens, m_prime.max(1))?;
    let cols: Vec<Vec<f64>> = words.iter().map(|(_, _, _, f)| f.at(x0)).collect();
    let n = gamma.n;
    let basis: Vec<DVector<f64>> = if cols.is_empty() {
        Vec::new()
    } else {
        let a = DMatrix::from_fn(n, cols.len(), |i, c| cols[c][i]);
        let svd = a.svd(true, false);
        let u = svd.u.expect("requested");
        svd.singular_values
            .iter()
            .enumerate()
            .filter(|(_, s)| **s > opts.threshold)
            .map(|(k, _)| u.column(k).into_owned())
            .collect()
    };
    let mut worst = (0.0f64, Vec::new());
    for t in t_samples {
        let w = DVector::from_vec(gamma.w_tangent(t, x0)?);
        let mut r = w.clone();
        for b in &basis {
            r -= b * b.dot(&w);
        }
        let d = r.norm();
        if d > worst.0 || worst.1.is_empty() {
            worst = (d, t.clone());
        }
    }
    Ok(LeafReport {
        pass: worst.0 <= tol,
        span_rank: basis.len(),
        max_distance: worst.0,
        witness_t: worst.1,
        tol,
        samples: t_samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combinations(4, 2), vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert!(combinations(2, 3).is_empty());
    }

    #[test]
    fn minor_search_skips_parallel_vectors() {
        let v = vec![("a".to_string(), vec![1.0, 0.0]), ("b".to_string(), vec![-2.0, 0.0]), ("c".to_string(), vec![1.0, 3.0])];
        let (m, w) = max_minor(&v, 2, 1e-12, 10);
        assert_eq!(m, 3.0);
        assert_eq!(w, vec!["a", "c"]);
    }

    #[test]
    fn translation_holds_at_first_order() {
        let g = SurfaceMap::closed_form("shift", 1, 1, &["x1 + t1"]).unwrap();
        let o = CurvatureOptions::default();
        let z = curvature_check(&g, &[0.0], CurvatureMode::CZ, 2, 1, &o).unwrap();
        assert!(z.holds);
        assert_eq!(z.order_used, (1, 1));
        let j = curvature_check(&g, &[0.0], CurvatureMode::CJ, 2, 0, &o).unwrap();
        assert_eq!(j.order_used, (0, 0));
        assert!((j.margin - 1.0).abs() < 1e-8);
    }
}
