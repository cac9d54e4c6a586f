//! Sampled control checks: expressing a (scaled) target field, or the field
//! `W(delta t, x)` of a surface, as a combination of a scaled list with
//! coefficients bounded uniformly over sampled scales.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::DegreedField;
use crate::dilations::{DegreeVector, DilationScheme, ParamLattice};
use crate::error::{validation, Result};
use crate::util::{rationalize, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub base_points: Vec<Vec<f64>>,
    /// Candidate values of each delta_mu; the product set is filtered by the lattice.
    pub delta_axes: Vec<Vec<f64>>,
    /// Cloud size is `cloud_factor * (list size)` points per base point.
    #[serde(default = "default_cloud_factor")]
    pub cloud_factor: usize,
    #[serde(default = "default_cloud_radius")]
    pub cloud_radius: f64,
    /// Highest order of (delta X)-derivatives of the coefficients sampled.
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    /// Fewer admitted delta samples than this makes the verdict uncertified.
    #[serde(default = "default_min_deltas")]
    pub min_delta_samples: usize,
    /// Parameter samples for surface targets.
    #[serde(default)]
    pub t_samples: Vec<Vec<f64>>,
    pub seed: u64,
}

fn default_cloud_factor() -> usize {
    4
}
fn default_cloud_radius() -> f64 {
    0.1
}
fn default_m_max() -> usize {
    1
}
fn default_fd_step() -> f64 {
    1e-4
}
fn default_min_deltas() -> usize {
    4
}

/// `per_axis` log-spaced values from 1 down to `delta_min`.
pub fn log_axis(per_axis: usize, delta_min: f64) -> Vec<f64> {
    if per_axis <= 1 {
        return vec![1.0];
    }
    (0..per_axis).map(|k| delta_min.powf(k as f64 / (per_axis - 1) as f64)).collect()
}

impl SamplingPlan {
    /// Base points with 8 log-spaced delta values per axis down to `1e-4`.
    pub fn standard(nu: usize, base_points: Vec<Vec<f64>>, seed: u64) -> Self {
        Self {
            base_points,
            delta_axes: vec![log_axis(8, 1e-4); nu],
            cloud_factor: default_cloud_factor(),
            cloud_radius: default_cloud_radius(),
            m_max: default_m_max(),
            fd_step: default_fd_step(),
            min_delta_samples: default_min_deltas(),
            t_samples: vec![],
            seed,
        }
    }

    /// The admitted delta samples in lexicographic axis order.
    pub fn deltas(&self, lattice: &ParamLattice) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = vec![vec![]];
        for axis in &self.delta_axes {
            out = out.into_iter().flat_map(|p| axis.iter().map(move |v| [p.clone(), vec![*v]].concat())).collect();
        }
        out.retain(|d| lattice.contains_delta(d));
        out
    }

    fn validate(&self, nu: usize, n: usize) -> Result<()> {
        if self.delta_axes.len() != nu {
            return validation(format!("sampling plan has {} delta axes, lattice has nu = {nu}", self.delta_axes.len()));
        }
        if self.base_points.is_empty() {
            return validation("sampling plan needs at least one base point");
        }
        if self.base_points.iter().any(|p| p.len() != n) {
            return validation(format!("base points must have {n} coordinates"));
        }
        if !(self.fd_step > 0.0 && self.cloud_radius >= 0.0 && self.cloud_factor >= 1) {
            return validation("sampling plan needs fd_step > 0, cloud_radius >= 0, cloud_factor >= 1");
        }
        Ok(())
    }

    fn cloud(&self, k: usize, size: usize) -> Vec<Vec<f64>> {
        let x0 = &self.base_points[k];
        let mut rng = substream(self.seed, k as u64);
        let mut pts = vec![x0.clone()];
        while pts.len() < size.max(1) {
            let v: Vec<f64> = x0.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            let r2: f64 = v.iter().map(|a| a * a).sum();
            if r2 <= 1.0 && r2 > 0.0 {
                pts.push(x0.iter().zip(&v).map(|(a, b)| a + self.cloud_radius * b).collect());
            }
        }
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlStatus {
    Pass,
    Fail,
    Uncertified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub delta: Vec<f64>,
    /// Sup of `|c_l|` over the sampled points at this delta.
    pub sup: f64,
    /// Sup including the sampled derivatives.
    pub sup_all_orders: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlWitness {
    pub delta: Vec<f64>,
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlCertificate {
    pub status: ControlStatus,
    pub tolerance: f64,
    pub coef_bound: f64,
    pub max_residual: f64,
    /// Sup of the sampled coefficients (index 0) and their derivatives of
    /// each order up to `m_max`.
    pub sup_norms: Vec<f64>,
    pub per_delta: Vec<DeltaRow>,
    /// Largest over smallest per-delta coefficient sup.
    pub blowup: f64,
    /// Exact coefficients when they are the same rational numbers at every sample.
    pub constant_coefficients: Option<Vec<String>>,
    pub witness: Option<ControlWitness>,
    /// Some local system was rank deficient; the minimum-norm solution was used.
    pub degenerate: bool,
    pub delta_samples: usize,
    pub point_samples: usize,
}

/// A pointwise linear system `A(x) c = b(x)` at a fixed scale.
trait LocalSystem: Sync {
    fn columns(&self, x: &[f64]) -> Vec<Vec<f64>>;
    fn rhs(&self, x: &[f64]) -> Vec<f64>;
}

struct Solved {
    c: Vec<f64>,
    residual: f64,
    degenerate: bool,
}

fn solve_local(sys: &dyn LocalSystem, x: &[f64]) -> Solved {
    let cols = sys.columns(x);
    let bv = DVector::from_vec(sys.rhs(x));
    let n = bv.len();
    let raw = DMatrix::from_fn(n, cols.len(), |i, k| cols[k][i]);
    // Columns carry products of deltas. With independent columns the solution
    // is unique, so solve the equilibrated system. Otherwise keep the
    // minimum-norm solution in the original coefficients.
    let scale: Vec<f64> = cols
        .iter()
        .map(|c| {
            let nrm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nrm > 0.0 { 1.0 / nrm } else { 1.0 }
        })
        .collect();
    let eq = DMatrix::from_fn(n, cols.len(), |i, k| cols[k][i] * scale[k]);
    let (rank, mut sol) = svd_solve(&eq, &bv);
    let (rank, sol) = if rank == cols.len() {
        sol.iter_mut().zip(&scale).for_each(|(v, s)| *v *= s);
        (rank, sol)
    } else {
        svd_solve(&raw, &bv)
    };
    let bn = bv.norm();
    let r = (&raw * &sol - &bv).norm();
    let residual = if bn > 0.0 { r / bn } else { r };
    Solved { c: sol.iter().copied().collect(), residual, degenerate: rank < cols.len().min(n) }
}

/// Rank and minimum-norm least squares solution with two refinement steps.
fn svd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> (usize, DVector<f64>) {
    let svd = a.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(1e-300);
    let rank = svd.singular_values.iter().filter(|s| **s > eps).count();
    let mut sol = svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(a.ncols()));
    for _ in 0..2 {
        let r = b - a * &sol;
        if let Ok(d) = svd.solve(&r, eps) {
            sol += d;
        }
    }
    (rank, sol)
}

/// Coefficients and their `(delta X_k)`-derivatives along `word`, by nested
/// central differences.
fn derivative(sys: &dyn LocalSystem, dirs: &dyn Fn(&[f64]) -> Vec<Vec<f64>>, word: &[usize], x: &[f64], h: f64) -> Vec<f64> {
    match word.split_first() {
        None => solve_local(sys, x).c,
        Some((&k, rest)) => {
            let v = &dirs(x)[k];
            let xp: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
            let xm: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - h * b).collect();
            let fp = derivative(sys, dirs, rest, &xp, h);
            let fm = derivative(sys, dirs, rest, &xm, h);
            fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        }
    }
}

fn words(len: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..order {
        out = out.into_iter().flat_map(|w| (0..len).map(move |k| [w.clone(), vec![k]].concat())).collect();
    }
    out
}

struct FieldSystem<'a> {
    list: &'a [DegreedField],
    target: &'a DegreedField,
    delta: Vec<f64>,
}

impl LocalSystem for FieldSystem<'_> {
    fn columns(&self, x: &[f64]) -> Vec<Vec<f64>> {
        scaled_columns(self.list, &self.delta, x)
    }
    fn rhs(&self, x: &[f64]) -> Vec<f64> {
        let s = self.target.degree.delta_power(&self.delta);
        self.target.field.eval(x, &[]).iter().map(|v| v * s).collect()
    }
}

fn scaled_columns(list: &[DegreedField], delta: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
    list.iter()
        .map(|f| {
            let s = f.degree.delta_power(delta);
            f.field.eval(x, &[]).iter().map(|v| v * s).collect()
        })
        .collect()
}

struct SurfaceSystem<'a> {
    list: &'a [DegreedField],
    w: &'a (dyn Fn(&[f64], &[f64]) -> Vec<f64> + Sync),
    delta: Vec<f64>,
    dt: Vec<f64>,
}

impl LocalSystem for SurfaceSystem<'_> {
    fn columns(&self, x: &[f64]) -> Vec<Vec<f64>> {
        scaled_columns(self.list, &self.delta, x)
    }
    fn rhs(&self, x: &[f64]) -> Vec<f64> {
        (self.w)(&self.dt, x)
    }
}

struct Sample {
    delta: Vec<f64>,
    x: Vec<f64>,
    t: Vec<f64>,
    c: Vec<f64>,
    residual: f64,
    degenerate: bool,
    sup_by_order: Vec<f64>,
}

fn validate_list(list: &[DegreedField], nu: usize) -> Result<usize> {
    let Some(first) = list.first() else {
        return validation("control check needs a nonempty list");
    };
    let n = first.field.dim();
    if list.iter().any(|f| f.field.dim() != n || f.degree.nu() != nu) {
        return validation("list fields disagree on dimension or nu");
    }
    Ok(n)
}

/// Field case: `delta^{d_0} X_0 = sum_l c_l delta^{d_l} X_l` at every sample.
pub fn check_control(
    list: &[DegreedField],
    target: &DegreedField,
    lattice: &ParamLattice,
    plan: &SamplingPlan,
    tol: f64,
    coef_bound: f64,
) -> Result<ControlCertificate> {
    let n = validate_list(list, lattice.nu())?;
    if target.field.dim() != n || target.degree.nu() != lattice.nu() {
        return validation("target field disagrees with the list on dimension or nu");
    }
    if target.degree.is_zero() {
        return validation("target degree must be nonzero");
    }
    plan.validate(lattice.nu(), n)?;
    let deltas = plan.deltas(lattice);
    let samples: Vec<Sample> = deltas
        .par_iter()
        .flat_map_iter(|delta| {
            let sys = FieldSystem { list, target, delta: delta.clone() };
            sample_delta(&sys, list, delta, &[], plan)
        })
        .collect();
    Ok(summarize(samples, deltas.len(), plan, tol, coef_bound))
}

/// Surface case: `W(delta t, x) = sum_l c_l(t, x) delta^{d_l} X_l(x)` for each
/// `t` in the plan's parameter samples.
pub fn check_control_surface(
    list: &[DegreedField],
    w: &(dyn Fn(&[f64], &[f64]) -> Vec<f64> + Sync),
    scheme: &DilationScheme,
    lattice: &ParamLattice,
    plan: &SamplingPlan,
    tol: f64,
    coef_bound: f64,
) -> Result<ControlCertificate> {
    let n = validate_list(list, lattice.nu())?;
    plan.validate(lattice.nu(), n)?;
    if plan.t_samples.is_empty() || plan.t_samples.iter().any(|t| t.len() != scheme.dim()) {
        return validation(format!("surface control needs t samples with {} coordinates", scheme.dim()));
    }
    let deltas = plan.deltas(lattice);
    let mut jobs = Vec::new();
    for d in &deltas {
        for t in &plan.t_samples {
            jobs.push((d.clone(), t.clone()));
        }
    }
    let samples: Vec<Sample> = jobs
        .par_iter()
        .map(|(delta, t)| -> Result<Vec<Sample>> {
            let dt = scheme.scale_point(delta, t)?;
            let sys = SurfaceSystem { list, w, delta: delta.clone(), dt };
            Ok(sample_delta(&sys, list, delta, t, plan))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(summarize(samples, deltas.len(), plan, tol, coef_bound))
}

fn sample_delta(sys: &dyn LocalSystem, list: &[DegreedField], delta: &[f64], t: &[f64], plan: &SamplingPlan) -> Vec<Sample> {
    let dirs = |x: &[f64]| scaled_columns(list, delta, x);
    let size = plan.cloud_factor * list.len();
    let mut out = Vec::new();
    for k in 0..plan.base_points.len() {
        for x in plan.cloud(k, size) {
            let s = solve_local(sys, &x);
            let mut sup_by_order = vec![s.c.iter().fold(0.0f64, |m, v| m.max(v.abs()))];
            for order in 1..=plan.m_max {
                let mut sup = 0.0f64;
                for w in words(list.len(), order) {
                    for v in derivative(sys, &dirs, &w, &x, plan.fd_step) {
                        sup = sup.max(v.abs());
                    }
                }
                sup_by_order.push(sup);
            }
            out.push(Sample {
                delta: delta.to_vec(),
                x,
                t: t.to_vec(),
                c: s.c,
                residual: s.residual,
                degenerate: s.degenerate,
                sup_by_order,
            });
        }
    }
    out
}

fn summarize(samples: Vec<Sample>, n_deltas: usize, plan: &SamplingPlan, tol: f64, coef_bound: f64) -> ControlCertificate {
    let orders = plan.m_max + 1;
    let mut sup_norms = vec![0.0f64; orders];
    let mut max_residual = 0.0f64;
    let mut degenerate = false;
    let mut per_delta: Vec<DeltaRow> = Vec::new();
    let mut worst: Option<(f64, &Sample)> = None;
    for s in &samples {
        for (o, v) in s.sup_by_order.iter().enumerate() {
            sup_norms[o] = sup_norms[o].max(*v);
        }
        max_residual = max_residual.max(s.residual);
        degenerate |= s.degenerate;
        let all = s.sup_by_order.iter().copied().fold(0.0, f64::max);
        if worst.is_none_or(|(v, _)| all > v) {
            worst = Some((all, s));
        }
        match per_delta.iter_mut().find(|r| r.delta == s.delta) {
            Some(row) => {
                row.sup = row.sup.max(s.sup_by_order[0]);
                row.sup_all_orders = row.sup_all_orders.max(all);
                row.residual = row.residual.max(s.residual);
            }
            None => per_delta.push(DeltaRow { delta: s.delta.clone(), sup: s.sup_by_order[0], sup_all_orders: all, residual: s.residual }),
        }
    }
    let max_sup = per_delta.iter().map(|r| r.sup).fold(0.0, f64::max);
    let min_sup = per_delta.iter().map(|r| r.sup).fold(f64::INFINITY, f64::min);
    let blowup = if max_sup == 0.0 {
        1.0
    } else if min_sup > 0.0 {
        max_sup / min_sup
    } else {
        f64::INFINITY
    };
    let constant_coefficients = constant_coeffs(&samples);
    let sup_all = sup_norms.iter().copied().fold(0.0, f64::max);
    let status = if n_deltas < plan.min_delta_samples {
        ControlStatus::Uncertified
    } else if max_residual <= tol && sup_all <= coef_bound {
        ControlStatus::Pass
    } else {
        ControlStatus::Fail
    };
    let witness = worst.map(|(v, s)| ControlWitness { delta: s.delta.clone(), x: s.x.clone(), t: s.t.clone(), value: v });
    ControlCertificate {
        status,
        tolerance: tol,
        coef_bound,
        max_residual,
        sup_norms,
        per_delta,
        blowup,
        constant_coefficients,
        witness,
        degenerate,
        delta_samples: n_deltas,
        point_samples: samples.len(),
    }
}

fn constant_coeffs(samples: &[Sample]) -> Option<Vec<String>> {
    let first = samples.first()?;
    for s in samples {
        for (a, b) in s.c.iter().zip(&first.c) {
            if (a - b).abs() > 1e-9 * (1.0 + b.abs()) {
                return None;
            }
        }
    }
    first
        .c
        .iter()
        .map(|v| rationalize(*v, 10_000, 1e-9 * (1.0 + v.abs())).map(|r| r.to_string()))
        .collect()
}

/// Per-pair results of the bracket-closure check at sampled scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DPair {
    pub i: usize,
    pub j: usize,
    pub certificate: ControlCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DReport {
    pub status: ControlStatus,
    pub pairs: Vec<DPair>,
    pub max_residual: f64,
    pub max_sup: f64,
}

/// `[delta^{d_i} X_i, delta^{d_j} X_j] = sum_k c_k delta^{d_k} X_k` for every pair.
pub fn check_d(list: &[DegreedField], lattice: &ParamLattice, plan: &SamplingPlan, tol: f64, coef_bound: f64) -> Result<DReport> {
    validate_list(list, lattice.nu())?;
    let mut pairs = Vec::new();
    for i in 0..list.len() {
        for j in (i + 1)..list.len() {
            let field = list[i].field.bracket(&list[j].field)?;
            let degree: DegreeVector = &list[i].degree + &list[j].degree;
            let target = DegreedField { field, degree };
            let certificate = check_control(list, &target, lattice, plan, tol, coef_bound)?;
            pairs.push(DPair { i, j, certificate });
        }
    }
    let status = if pairs.iter().any(|p| p.certificate.status == ControlStatus::Fail) {
        ControlStatus::Fail
    } else if pairs.iter().any(|p| p.certificate.status == ControlStatus::Uncertified) {
        ControlStatus::Uncertified
    } else {
        ControlStatus::Pass
    };
    let max_residual = pairs.iter().map(|p| p.certificate.max_residual).fold(0.0, f64::max);
    let max_sup = pairs.iter().flat_map(|p| p.certificate.sup_norms.clone()).fold(0.0, f64::max);
    Ok(DReport { status, pairs, max_residual, max_sup })
}

/// Two lists are equivalent when each member of either is controlled by the other.
pub fn lists_equivalent(
    a: &[DegreedField],
    b: &[DegreedField],
    lattice: &ParamLattice,
    plan: &SamplingPlan,
    tol: f64,
    coef_bound: f64,
) -> Result<bool> {
    for (from, to) in [(a, b), (b, a)] {
        for f in from {
            if check_control(to, f, lattice, plan, tol, coef_bound)?.status != ControlStatus::Pass {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vfields::VField;

    fn df(c: &[&str], d: &[i64]) -> DegreedField {
        DegreedField::new(VField::parse(c, 0).unwrap(), DegreeVector::from_ints(d)).unwrap()
    }

    fn heisenberg() -> Vec<DegreedField> {
        vec![
            df(&["1", "0", "2*x2"], &[1, 0]),
            df(&["0", "1", "-2*x1"], &[0, 1]),
            df(&["0", "0", "-4"], &[1, 1]),
        ]
    }

    #[test]
    fn heisenberg_target_has_exact_coefficients() {
        let plan = SamplingPlan::standard(2, vec![vec![0.1, -0.2, 0.3]], 7);
        let cert = check_control(&heisenberg(), &df(&["0", "0", "1"], &[1, 1]), &ParamLattice::product(2), &plan, 1e-8, 10.0).unwrap();
        assert_eq!(cert.status, ControlStatus::Pass);
        assert_eq!(cert.constant_coefficients, Some(vec!["0".into(), "0".into(), "-1/4".into()]));
    }

    #[test]
    fn member_controls_itself() {
        let list = heisenberg();
        let plan = SamplingPlan::standard(2, vec![vec![0.0, 0.0, 0.0]], 1);
        let cert = check_control(&list, &list[1], &ParamLattice::product(2), &plan, 1e-8, 10.0).unwrap();
        assert_eq!(cert.status, ControlStatus::Pass);
        assert_eq!(cert.constant_coefficients, Some(vec!["0".into(), "1".into(), "0".into()]));
    }

    #[test]
    fn commuting_fields_satisfy_d() {
        let list = [df(&["1", "0"], &[1, 0]), df(&["0", "1"], &[0, 1])];
        let plan = SamplingPlan::standard(2, vec![vec![0.3, 0.4]], 3);
        let r = check_d(&list, &ParamLattice::product(2), &plan, 1e-8, 1.0).unwrap();
        assert_eq!(r.status, ControlStatus::Pass);
        assert_eq!(r.max_sup, 0.0);
    }

    #[test]
    fn sparse_sampling_is_uncertified() {
        let mut plan = SamplingPlan::standard(2, vec![vec![0.1, 0.1, 0.1]], 1);
        plan.delta_axes = vec![vec![1.0], vec![1.0]];
        let cert = check_control(&heisenberg(), &heisenberg()[0], &ParamLattice::product(2), &plan, 1e-8, 10.0).unwrap();
        assert_eq!(cert.status, ControlStatus::Uncertified);
    }
}
