//! Carnot-Caratheodory geometry: subunit paths, ball sampling and the
//! scaling chart `Phi(u) = exp(u . Z_{J0}) x0`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::surfaces::{integrate, integrate_fixed};
use crate::util::{norm2, substream};
use crate::vfields::{DegreedField, VField};

/// Largest number of constant pieces in a sampled path.
pub const MAX_SEGMENTS: usize = 16;

/// Fields `Z_j = w_j X_j`, e.g. `delta^{d_j} X_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledFields {
    pub fields: Vec<VField>,
    pub weights: Vec<f64>,
}

impl ScaledFields {
    pub fn unscaled(fields: Vec<VField>) -> Self {
        let weights = vec![1.0; fields.len()];
        Self { fields, weights }
    }

    /// `delta^{d_j} X_j`.
    pub fn from_degreed(list: &[DegreedField], delta: &[f64]) -> Result<Self> {
        let mut weights = Vec::with_capacity(list.len());
        for f in list {
            if f.degree.nu() != delta.len() {
                return contract(format!("delta has {} components, degrees have {}", delta.len(), f.degree.nu()));
            }
            weights.push(f.degree.delta_power(delta));
        }
        Ok(Self { fields: list.iter().map(|f| f.field.clone()).collect(), weights })
    }

    /// `r^{|d_j|} X_j`: the single-parameter list `(X, sum d)` at radius r.
    pub fn at_radius(list: &[DegreedField], r: f64) -> Self {
        let weights = list.iter().map(|f| r.powf(f.degree.to_f64().iter().sum())).collect();
        Self { fields: list.iter().map(|f| f.field.clone()).collect(), weights }
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.fields.first().map_or(0, VField::dim)
    }

    /// Multiply every weight by `s`.
    pub fn rescaled(&self, s: f64) -> Self {
        Self { fields: self.fields.clone(), weights: self.weights.iter().map(|w| w * s).collect() }
    }

    /// `Z(x)` as an n x q matrix.
    pub fn matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, self.len());
        for (c, (f, w)) in self.fields.iter().zip(&self.weights).enumerate() {
            for (i, v) in f.eval(x, &[]).into_iter().enumerate() {
                m[(i, c)] = w * v;
            }
        }
        m
    }

    /// `sum_j a_j Z_j(x)`.
    pub fn combine(&self, a: &[f64], x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for ((f, w), aj) in self.fields.iter().zip(&self.weights).zip(a) {
            let s = w * aj;
            if s == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(f.coeffs()) {
                *o += s * c.eval(x, &[]);
            }
        }
    }
}

/// Piecewise-constant controls on equal subintervals of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubunitPath {
    pub segments: Vec<Vec<f64>>,
}

impl SubunitPath {
    pub fn new(segments: Vec<Vec<f64>>) -> Result<Self> {
        if segments.is_empty() || segments.len() > MAX_SEGMENTS {
            return contract(format!("a path needs 1..={MAX_SEGMENTS} segments"));
        }
        let q = segments[0].len();
        if segments.iter().any(|s| s.len() != q) {
            return contract("path segments have different lengths");
        }
        if let Some(s) = segments.iter().find(|s| norm2(s) >= 1.0) {
            return contract(format!("control {s:?} is not subunit"));
        }
        Ok(Self { segments })
    }

    pub fn constant(a: Vec<f64>) -> Result<Self> {
        Self::new(vec![a])
    }

    pub fn zero(q: usize) -> Self {
        Self { segments: vec![vec![0.0; q]] }
    }

    /// Uniformly random path: 1..=MAX_SEGMENTS pieces, each control drawn in
    /// the open unit ball.
    pub fn random<R: Rng>(rng: &mut R, q: usize) -> Self {
        let k = rng.random_range(1..=MAX_SEGMENTS);
        let segments = (0..k)
            .map(|_| {
                let v: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
                let nv = norm2(&v).max(1e-300);
                let r: f64 = rng.random_range(0.0..1.0f64).powf(1.0 / q as f64) * 0.999;
                v.iter().map(|c| c * r / nv).collect()
            })
            .collect();
        Self { segments }
    }

    pub fn sup_norm(&self) -> f64 {
        self.segments.iter().map(|s| norm2(s)).fold(0.0, f64::max)
    }

    pub fn q(&self) -> usize {
        self.segments[0].len()
    }
}

/// Endpoint at time 1 of `gamma' = sum a_j(t) Z_j(gamma)`, `gamma(0) = x0`.
pub fn flow_endpoint(fields: &ScaledFields, path: &SubunitPath, x0: &[f64], ode_tol: f64) -> Result<Vec<f64>> {
    if path.q() != fields.len() {
        return contract(format!("path has {} controls for {} fields", path.q(), fields.len()));
    }
    let h = 1.0 / path.segments.len() as f64;
    let mut y = x0.to_vec();
    for a in &path.segments {
        if a.iter().all(|v| *v == 0.0) {
            continue;
        }
        let f = |_: f64, x: &[f64], out: &mut [f64]| fields.combine(a, x, out);
        y = integrate(&f, &y, h, ode_tol)
            .map_err(|e| Error::DomainExit(format!("path leaves the domain: {e}")))?
            .end;
    }
    Ok(y)
}

/// `|det_{k x k} M|_inf`: the largest absolute k x k minor.
pub fn max_minor_abs(m: &DMatrix<f64>, k: usize) -> f64 {
    let rows = crate::surfaces::curvature::combinations(m.nrows(), k);
    let cols = crate::surfaces::curvature::combinations(m.ncols(), k);
    let mut best = 0.0f64;
    for r in &rows {
        let mr = m.select_rows(r.iter());
        for c in &cols {
            best = best.max(mr.select_columns(c.iter()).determinant().abs());
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChartOptions {
    pub eta1: f64,
    pub xi1: f64,
    pub ode_tol: f64,
    /// Relative singular-value cutoff defining `n0`.
    pub rank_tol: f64,
    pub fd_step: f64,
}

impl Default for ChartOptions {
    fn default() -> Self {
        Self { eta1: 0.25, xi1: 0.05, ode_tol: 1e-12, rank_tol: 1e-10, fd_step: 1e-5 }
    }
}

/// The chart `Phi(u) = exp(u . Z_{J0}) x0` on the `n0`-ball of radius `eta1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingChart {
    pub x0: Vec<f64>,
    pub fields: ScaledFields,
    pub list: Vec<DegreedField>,
    pub delta: Vec<f64>,
    pub n0: usize,
    pub j0: Vec<usize>,
    pub j0_minor: f64,
    pub opts: ChartOptions,
    steps: usize,
}

/// Build the chart. `J0` maximizes `|det_{n0 x n0} Z_J(x0)|_inf`, ties broken
/// lexicographically.
pub fn scaling_chart(list: &[DegreedField], x0: &[f64], delta: &[f64], opts: ChartOptions) -> Result<ScalingChart> {
    if list.is_empty() {
        return contract("empty field list");
    }
    let fields = ScaledFields::from_degreed(list, delta)?;
    if fields.dim() != x0.len() {
        return contract(format!("x0 has dimension {}, fields have {}", x0.len(), fields.dim()));
    }
    let z = fields.matrix(x0);
    let sv = z.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let n0 = sv.iter().filter(|s| **s > opts.rank_tol * smax.max(1.0)).count();
    if n0 == 0 {
        return Err(Error::Construction("degenerate chart: all minors of Z(x0) vanish (n0 = 0)".into()));
    }
    let mut j0 = Vec::new();
    let mut best = 0.0;
    for cols in crate::surfaces::curvature::combinations(fields.len(), n0) {
        let v = max_minor_abs(&z.select_columns(cols.iter()), n0);
        if v > best {
            best = v;
            j0 = cols;
        }
    }
    let mut chart = ScalingChart {
        x0: x0.to_vec(),
        fields,
        list: list.to_vec(),
        delta: delta.to_vec(),
        n0,
        j0,
        j0_minor: best,
        opts,
        steps: 0,
    };
    // Pin the step count at the edge of the chart so that Phi is one smooth map.
    let edge = vec![opts.eta1 / (n0 as f64).sqrt(); n0];
    let field = |_: f64, y: &[f64], out: &mut [f64]| chart.generator(&edge, y, out);
    let flow = integrate(&field, x0, 1.0, opts.ode_tol)?;
    chart.steps = flow.steps * 2;
    Ok(chart)
}

impl ScalingChart {
    fn generator(&self, u: &[f64], y: &[f64], out: &mut [f64]) {
        let mut a = vec![0.0; self.fields.len()];
        for (k, &j) in self.j0.iter().enumerate() {
            a[j] = u[k];
        }
        self.fields.combine(&a, y, out);
    }

    pub fn phi(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.n0 {
            return contract(format!("u has dimension {}, chart has {}", u.len(), self.n0));
        }
        if u.iter().all(|v| *v == 0.0) {
            return Ok(self.x0.clone());
        }
        let f = |_: f64, y: &[f64], out: &mut [f64]| self.generator(u, y, out);
        integrate_fixed(&f, &self.x0, 1.0, self.steps)
    }

    /// `dPhi(u)`, n x n0, by central differences.
    pub fn dphi(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        let h = self.opts.fd_step;
        let n = self.x0.len();
        let mut m = DMatrix::zeros(n, self.n0);
        for k in 0..self.n0 {
            let mut up = u.to_vec();
            let mut um = u.to_vec();
            up[k] += h;
            um[k] -= h;
            let (a, b) = (self.phi(&up)?, self.phi(&um)?);
            for i in 0..n {
                m[(i, k)] = (a[i] - b[i]) / (2.0 * h);
            }
        }
        Ok(m)
    }

    /// Pullbacks `Y_j(u)`: least-squares solutions of `dPhi(u) Y_j = Z_j(Phi(u))`, n0 x q.
    pub fn pullbacks(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dphi(u)?;
        let z = self.fields.matrix(&self.phi(u)?);
        d.svd(true, true).solve(&z, 1e-12).map_err(|e| Error::Fit(e.to_string()))
    }

    /// `|det_{n0 x n0} Y(u)|_inf`.
    pub fn det_y(&self, u: &[f64]) -> Result<f64> {
        Ok(max_minor_abs(&self.pullbacks(u)?, self.n0))
    }

    /// `Phi^{-1}(y)` by Gauss-Newton from `u = 0`; fails when the iteration
    /// leaves the chart ball or stalls.
    pub fn invert(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut u = vec![0.0; self.n0];
        let scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for _ in 0..50 {
            let p = self.phi(&u)?;
            let r = DVector::from_iterator(y.len(), y.iter().zip(&p).map(|(a, b)| a - b));
            if r.amax() <= 1e-12 * scale {
                return Ok(u);
            }
            let d = self.dphi(&u)?;
            let step = d.svd(true, true).solve(&r, 1e-12).map_err(|e| Error::Fit(e.to_string()))?;
            for (uk, s) in u.iter_mut().zip(step.iter()) {
                *uk += s;
            }
            if norm2(&u) > 2.0 * self.opts.eta1 {
                return Err(Error::Inversion(format!("iterate left the chart ball at u = {u:?}")));
            }
        }
        let r = norm2(&self.phi(&u)?.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>());
        if r <= 1e-9 * scale {
            return Ok(u);
        }
        Err(Error::Inversion(format!("Gauss-Newton stalled with residual {r:e}")))
    }
}

/// One sampled point of the chart report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSample {
    pub u: Vec<f64>,
    pub det_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartReport {
    pub pass: bool,
    pub phi0_exact: bool,
    pub injectivity_violations: usize,
    pub inclusion_paths: usize,
    pub inclusion_failures: usize,
    pub probe_radius: f64,
    pub det_min: f64,
    pub det_max: f64,
    pub det_ratio: f64,
    pub det_bound: f64,
    pub samples: Vec<ChartSample>,
}

impl ChartReport {
    pub fn to_csv(&self) -> String {
        let n0 = self.samples.first().map_or(0, |s| s.u.len());
        let mut out: Vec<String> = (1..=n0).map(|k| format!("u{k}")).collect();
        out.push("det_y".into());
        let mut s = out.join(",") + "\n";
        for row in &self.samples {
            let mut cells: Vec<String> = row.u.iter().map(|v| format!("{v:.12e}")).collect();
            cells.push(format!("{:.12e}", row.det_y));
            s += &(cells.join(",") + "\n");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub samples: usize,
    pub paths: usize,
    /// Probe radius for the ball inclusion, in the single-parameter list `(Z, sum d)`.
    pub probe_radius: f64,
    pub det_bound: f64,
    pub seed: u64,
}

/// Uniform point of the k-ball of radius r.
fn ball_point<R: Rng>(rng: &mut R, k: usize, r: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        if norm2(&v) < 1.0 {
            return v.iter().map(|c| c * r).collect();
        }
    }
}

/// Injectivity, ball inclusion and determinant checks on seeded samples.
pub fn chart_verify(chart: &ScalingChart, opts: &VerifyOptions) -> Result<ChartReport> {
    let phi0_exact = chart.phi(&vec![0.0; chart.n0])? == chart.x0;
    let mut rng = substream(opts.seed, 0);
    let mut us: Vec<Vec<f64>> = vec![vec![0.0; chart.n0]];
    us.extend((1..opts.samples.max(1)).map(|_| ball_point(&mut rng, chart.n0, chart.opts.eta1)));
    let rows: Vec<(Vec<f64>, f64)> = us
        .par_iter()
        .map(|u| Ok((chart.phi(u)?, chart.det_y(u)?)))
        .collect::<Result<_>>()?;
    let mut violations = 0;
    for a in 0..us.len() {
        for b in a + 1..us.len() {
            let du = norm2(&us[a].iter().zip(&us[b]).map(|(p, q)| p - q).collect::<Vec<_>>());
            let dx = norm2(&rows[a].0.iter().zip(&rows[b].0).map(|(p, q)| p - q).collect::<Vec<_>>());
            if dx <= 1e-9 && du > 1e-7 {
                violations += 1;
            }
        }
    }
    let (det_min, det_max) = rows.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), (_, d)| (lo.min(*d), hi.max(*d)));
    let ball = ScaledFields::at_radius(&chart.list, opts.probe_radius);
    let ball = ScaledFields {
        fields: ball.fields,
        weights: ball.weights.iter().zip(&chart.fields.weights).map(|(a, b)| a * b).collect(),
    };
    let failures: usize = (0..opts.paths)
        .into_par_iter()
        .map(|k| {
            let mut r = substream(opts.seed, 1 + k as u64);
            let path = SubunitPath::random(&mut r, ball.len());
            let ok = flow_endpoint(&ball, &path, &chart.x0, chart.opts.ode_tol)
                .and_then(|y| chart.invert(&y))
                .is_ok_and(|u| norm2(&u) < chart.opts.eta1);
            usize::from(!ok)
        })
        .sum();
    let det_ratio = if det_min > 0.0 { det_max / det_min } else { f64::INFINITY };
    let pass = phi0_exact && violations == 0 && failures == 0 && det_ratio <= opts.det_bound;
    Ok(ChartReport {
        pass,
        phi0_exact,
        injectivity_violations: violations,
        inclusion_paths: opts.paths,
        inclusion_failures: failures,
        probe_radius: opts.probe_radius,
        det_min,
        det_max,
        det_ratio,
        det_bound: opts.det_bound,
        samples: us.into_iter().zip(rows).map(|(u, (_, det_y))| ChartSample { u, det_y }).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilations::DegreeVector;

    fn grushin() -> Vec<DegreedField> {
        vec![
            DegreedField::new(VField::parse(&["1", "0"], 0).unwrap(), DegreeVector::from_ints(&[1])).unwrap(),
            DegreedField::new(VField::parse(&["0", "x1"], 0).unwrap(), DegreeVector::from_ints(&[1])).unwrap(),
        ]
    }

    #[test]
    fn constant_field_endpoint() {
        let f = ScaledFields { fields: vec![VField::parse(&["1"], 0).unwrap()], weights: vec![0.5] };
        let y = flow_endpoint(&f, &SubunitPath::constant(vec![0.999]).unwrap(), &[0.0], 1e-12).unwrap();
        assert!((y[0] - 0.4995).abs() < 1e-14);
        assert_eq!(flow_endpoint(&f, &SubunitPath::zero(1), &[0.3], 1e-12).unwrap(), vec![0.3]);
    }

    #[test]
    fn rejects_non_subunit_controls() {
        assert!(SubunitPath::constant(vec![0.8, 0.6]).is_err());
    }

    #[test]
    fn grushin_chart_closed_form() {
        // Phi(u) = (1 + u1, u2 (1 + u1/2)).
        let c = scaling_chart(&grushin(), &[1.0, 0.0], &[1.0], ChartOptions::default()).unwrap();
        assert_eq!((c.n0, c.j0.clone()), (2, vec![0, 1]));
        let p = c.phi(&[0.2, -0.1]).unwrap();
        assert!((p[0] - 1.2).abs() < 1e-12 && (p[1] + 0.11).abs() < 1e-12);
        // det Y = (1 + u1) / (1 + u1/2).
        assert!((c.det_y(&[0.2, 0.1]).unwrap() - 1.2 / 1.1).abs() < 1e-8);
        let u = c.invert(&p).unwrap();
        assert!((u[0] - 0.2).abs() < 1e-10 && (u[1] + 0.1).abs() < 1e-10);
    }

    #[test]
    fn degenerate_chart_is_an_error() {
        let l = vec![DegreedField::new(VField::parse(&["x1", "0"], 0).unwrap(), DegreeVector::from_ints(&[1])).unwrap()];
        assert!(matches!(scaling_chart(&l, &[0.0, 0.0], &[1.0], ChartOptions::default()), Err(Error::Construction(_))));
    }
}
