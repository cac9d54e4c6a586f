//! Finite-list generation by iterated brackets and constant-coefficient
//! relations between fields.

use nalgebra::{DMatrix, DVector};
use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::expr::{coef_to_f64, Coef};
use super::field::{DegreedField, VField};
use crate::error::{validation, Result};
use crate::util::{rationalize, seeded_rng};

/// Sample box for numeric relation search; kept away from 0 so that flat and
/// Laurent coefficients are finite and distinguishable.
const SAMPLE_LO: f64 = 0.3;
const SAMPLE_HI: f64 = 1.1;
const RELATION_SEED: u64 = 0x5eed_0001;

fn sample_points(n: usize, count: usize, salt: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded_rng(RELATION_SEED ^ salt);
    (0..count).map(|_| (0..n).map(|_| rng.random_range(SAMPLE_LO..SAMPLE_HI)).collect()).collect()
}

/// Exact constants `c` with `target = sum_k c_k members[k]`, if they exist.
/// Found numerically at random points, rationalized, and then confirmed
/// symbolically; dependent members receive coefficient 0.
pub fn constant_combination(target: &VField, members: &[&VField]) -> Option<Vec<Coef>> {
    let n = target.dim();
    let mut coeffs = vec![Coef::zero(); members.len()];
    if target.is_zero() {
        return Some(coeffs);
    }
    if members.is_empty() {
        return None;
    }
    let pts = sample_points(n, members.len() + 5, members.len() as u64);
    let rows = n * pts.len();
    let cols: Vec<DVector<f64>> = members
        .iter()
        .map(|m| DVector::from_iterator(rows, pts.iter().flat_map(|p| m.eval(p, &[]))))
        .collect();
    let b = DVector::from_iterator(rows, pts.iter().flat_map(|p| target.eval(p, &[])));
    if !b.iter().all(|v| v.is_finite()) || !cols.iter().all(|c| c.iter().all(|v| v.is_finite())) {
        return None;
    }
    // Greedy maximal independent subset.
    let mut chosen: Vec<usize> = Vec::new();
    for (k, col) in cols.iter().enumerate() {
        if col.norm() < 1e-300 {
            continue;
        }
        let mut trial = chosen.clone();
        trial.push(k);
        let a = DMatrix::from_columns(&trial.iter().map(|&i| cols[i].clone()).collect::<Vec<_>>());
        let sv = a.clone().svd(false, false).singular_values;
        let smax = sv.max();
        if sv.min() > 1e-9 * smax {
            chosen.push(k);
        }
    }
    if chosen.is_empty() {
        return None;
    }
    let a = DMatrix::from_columns(&chosen.iter().map(|&i| cols[i].clone()).collect::<Vec<_>>());
    let svd = a.clone().svd(true, true);
    let sol = svd.solve(&b, 1e-12).ok()?;
    let resid = (&a * &sol - &b).norm();
    if resid > 1e-7 * (1.0 + b.norm()) {
        return None;
    }
    for (slot, &k) in chosen.iter().enumerate() {
        coeffs[k] = rationalize(sol[slot], 100_000, 1e-7 * (1.0 + sol[slot].abs()))?;
    }
    let mut rest = target.clone();
    for (k, c) in coeffs.iter().enumerate() {
        if !c.is_zero() {
            rest = rest.sub(&members[k].scale(*c));
        }
    }
    rest.is_zero().then_some(coeffs)
}

/// A constant `lambda` with `a = lambda b`.
pub fn proportional(a: &VField, b: &VField) -> Option<Coef> {
    constant_combination(a, &[b]).map(|c| c[0])
}

/// One closure relation `[X_i, X_j] = sum_k c_k X_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketRelation {
    pub i: usize,
    pub j: usize,
    /// `(k, c_k)` with `c_k` as an exact rational string; zeros omitted.
    pub coeffs: Vec<(usize, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosureReport {
    pub closed: bool,
    pub max_order: usize,
    pub relations: Vec<BracketRelation>,
    /// Pairs whose bracket is not a constant combination of the list.
    pub failures: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct GeneratedList {
    pub fields: Vec<DegreedField>,
    /// Seed indices along the right-nested bracket word of each field.
    pub words: Vec<Vec<usize>>,
    pub closure: ClosureReport,
}

impl GeneratedList {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

fn is_duplicate(f: &DegreedField, list: &[DegreedField]) -> bool {
    f.field.is_zero() || list.iter().any(|m| m.degree == f.degree && proportional(&f.field, &m.field).is_some())
}

/// All right-nested brackets `[X_{s1}, [X_{s2}, ..., X_{sk}]]` with `k <= m`,
/// with degrees summed along the word, dropping zero fields and constant
/// multiples of members of the same degree. The closure report tests every
/// pairwise bracket of the result.
pub fn generate_list(seeds: &[DegreedField], m: usize) -> Result<GeneratedList> {
    if m == 0 {
        return validation("generate_list needs M >= 1");
    }
    let Some(first) = seeds.first() else {
        return validation("generate_list needs at least one seed");
    };
    let (n, nu) = (first.field.dim(), first.degree.nu());
    for s in seeds {
        if s.field.dim() != n || s.degree.nu() != nu {
            return validation("seeds disagree on dimension or nu");
        }
        if s.degree.is_zero() {
            return validation("seed degree must be nonzero");
        }
    }
    let mut fields: Vec<DegreedField> = Vec::new();
    let mut words: Vec<Vec<usize>> = Vec::new();
    let mut frontier: Vec<usize> = Vec::new();
    for (i, s) in seeds.iter().enumerate() {
        if !is_duplicate(s, &fields) {
            frontier.push(fields.len());
            fields.push(s.clone());
            words.push(vec![i]);
        }
    }
    for _order in 2..=m {
        let mut next = Vec::new();
        for (si, s) in seeds.iter().enumerate() {
            for &w in &frontier {
                let field = s.field.bracket(&fields[w].field)?;
                let cand = DegreedField { field, degree: &s.degree + &fields[w].degree };
                if !is_duplicate(&cand, &fields) {
                    let mut word = vec![si];
                    word.extend(&words[w]);
                    next.push(fields.len());
                    fields.push(cand);
                    words.push(word);
                }
            }
        }
        frontier = next;
    }
    let closure = closure_report(&fields, m)?;
    Ok(GeneratedList { fields, words, closure })
}

/// Test whether every bracket of two members is a constant combination of members.
pub fn closure_report(fields: &[DegreedField], max_order: usize) -> Result<ClosureReport> {
    let members: Vec<&VField> = fields.iter().map(|f| &f.field).collect();
    let mut relations = Vec::new();
    let mut failures = Vec::new();
    for i in 0..fields.len() {
        for j in (i + 1)..fields.len() {
            let br = fields[i].field.bracket(&fields[j].field)?;
            match constant_combination(&br, &members) {
                Some(c) => relations.push(BracketRelation {
                    i,
                    j,
                    coeffs: c.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(|(k, v)| (k, v.to_string())).collect(),
                }),
                None => failures.push((i, j)),
            }
        }
    }
    Ok(ClosureReport { closed: failures.is_empty(), max_order, relations, failures })
}

/// Coefficients as floats, for numeric consumers.
pub fn coeffs_to_f64(c: &[Coef]) -> Vec<f64> {
    c.iter().map(coef_to_f64).collect()
}
