//! Parameter blocks and runners, one per experiment kind.

use mpradon::ccgeom::{chart_verify, scaling_chart, ChartOptions, VerifyOptions};
use mpradon::decide::heisenberg::HeisDemo;
use mpradon::decide::{counterexample_pieces, newton_verdict, Classification, CounterexampleSetup, NewtonMode, NewtonOptions, Q};
use mpradon::dilations::{LatticeConfig, SchemeConfig};
use mpradon::kernels::{delta0_family, Axis, BumpConfig, DyadicKernel};
use mpradon::opnorm::transport::{cell_volume, l1delta_seminorm, transport_density, translation_modulus, TauBox};
use mpradon::opnorm::{ao_decay_fit, convolution_oracle, discretize_piece, fit_decay, Cutoffs, DiscretizedOp, GridSpec, LinOp};
use mpradon::surfaces::catalog::{catalog_entry, wspec_catalog, CatalogEntry};
use mpradon::surfaces::curvature::{curvature_check, leaf_membership, CurvatureMode, CurvatureOptions};
use mpradon::surfaces::{gamma_from_w, omega, w_from_gamma, SurfaceConfig};
use mpradon::util::substream;
use mpradon::vfields::{check_control, generate_list, parse_expr, ControlStatus, FieldConfig, SamplingPlan};
use mpradon::{BumpSpec, DegreedField, ParamLattice, PolySurface, SurfaceMap, UniformGrid};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::report::{num, table, Assertion, Bundle};
use crate::Failure;

/// A catalog surface by name, or an inline surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SurfaceRef {
    Catalog { catalog: String },
    Inline(SurfaceConfig),
}

impl SurfaceRef {
    fn entry(&self) -> Option<CatalogEntry> {
        match self {
            Self::Catalog { catalog } => catalog_entry(catalog),
            Self::Inline(_) => None,
        }
    }

    fn build(&self) -> Result<SurfaceMap, Failure> {
        match self {
            Self::Catalog { catalog } => catalog_entry(catalog)
                .map(|e| e.closed_form.clone().unwrap_or_else(|| e.surface()))
                .ok_or_else(|| Failure::Invalid(format!("unknown catalog surface {catalog:?}"))),
            Self::Inline(cfg) => Ok(SurfaceMap::from_config(cfg)?),
        }
    }
}

fn fields(cfgs: &[FieldConfig]) -> Result<Vec<DegreedField>, Failure> {
    cfgs.iter().map(|c| c.build().map_err(Failure::from)).collect()
}

// ---------------------------------------------------------------- kernels

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// The same bump at every lattice point.
    Uniform,
    /// The telescoping family built from a normalized `eta`.
    Delta0,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthKernel {
    pub scheme: SchemeConfig,
    pub lattice: LatticeConfig,
    pub bump: BumpConfig,
    pub family: Family,
    pub bound: u32,
    pub grid: UniformGrid,
    /// Telescoping tolerance, checked for the delta_0 family on the grid
    /// spanning the support of `eta^{(2^bound)}`.
    pub tolerance: f64,
}

fn kernel(scheme: &SchemeConfig, lattice: &LatticeConfig, bump: &BumpConfig, family: Family, bound: u32) -> Result<(DyadicKernel, BumpSpec), Failure> {
    let scheme = scheme.build()?;
    let lattice = ParamLattice::from_config(lattice)?;
    let bump = BumpSpec::from_config(bump)?;
    let k = match family {
        Family::Uniform => DyadicKernel::uniform(scheme, lattice, bump.clone(), bound)?,
        Family::Delta0 => delta0_family(&bump, &scheme, &lattice, bound)?,
    };
    Ok((k, bump))
}

pub fn synth_kernel(c: &SynthKernel) -> Result<Bundle, Failure> {
    let (k, bump) = kernel(&c.scheme, &c.lattice, &c.bump, c.family, c.bound)?;
    let values = k.synthesize_partial(c.bound, &c.grid)?;
    let mut b = Bundle::new(json!({ "lattice_points": k.family.len(), "grid_points": c.grid.len() }));
    b.check(Assertion::eq("all values finite", values.iter().all(|v| v.is_finite()), true));
    b.csv("kernel.csv", c.grid.to_csv(&values));
    if c.family == Family::Delta0 {
        let target = bump.dilate(&k.scheme, &vec![c.bound; k.scheme.nu()])?;
        let axes = target.support_box().iter().zip(&c.grid.axes).map(|(h, a)| Axis { lo: -h, hi: *h, n: a.n }).collect();
        let grid = UniformGrid { axes };
        let partial = k.synthesize_partial(c.bound, &grid)?;
        let exact: Vec<f64> = grid.points().map(|p| target.eval(&p)).collect();
        let scale = exact.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let err = partial.iter().zip(&exact).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max) / scale;
        b.check(Assertion::le("telescoping relative error", err, c.tolerance));
    }
    Ok(b)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckCancellation {
    pub scheme: SchemeConfig,
    pub lattice: LatticeConfig,
    pub bump: BumpConfig,
    pub family: Family,
    pub bound: u32,
    pub quad_tol: f64,
}

pub fn check_cancellation(c: &CheckCancellation) -> Result<Bundle, Failure> {
    let (k, _) = kernel(&c.scheme, &c.lattice, &c.bump, c.family, c.bound)?;
    let r = k.check_cancellation(c.quad_tol)?;
    let mut b = Bundle::new(json!({ "certification": r.certification, "entries": r.entries.len() }));
    b.check(Assertion::le("max partial-integral residual", r.max_residual, r.tolerance));
    let rows = r.entries.iter().map(|e| {
        let j: Vec<String> = e.j.iter().map(u32::to_string).collect();
        let cs: Vec<String> = e.coords.iter().map(usize::to_string).collect();
        vec![j.join(" "), cs.join(" "), num(e.residual), e.pass.to_string()]
    });
    b.csv("cancellation.csv", table(&["j", "coords", "residual", "pass"], rows));
    Ok(b)
}

// ---------------------------------------------------------------- surfaces

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaRoundtrip {
    /// Catalog names; empty means the whole catalog.
    pub surfaces: Vec<String>,
    pub samples: usize,
    pub t_radius: f64,
    pub x_radius: f64,
    pub ode_tol: f64,
    pub fd_step: f64,
    pub tolerance: f64,
    pub semigroup_eps0: f64,
    pub semigroup_eps: f64,
    pub semigroup_tol: f64,
}

pub fn gamma_roundtrip(c: &GammaRoundtrip, seed: u64) -> Result<Bundle, Failure> {
    let entries: Vec<CatalogEntry> = if c.surfaces.is_empty() {
        wspec_catalog()
    } else {
        c.surfaces
            .iter()
            .map(|n| catalog_entry(n).ok_or_else(|| Failure::Invalid(format!("unknown catalog surface {n:?}"))))
            .collect::<Result<_, _>>()?
    };
    let mut rows = Vec::new();
    let (mut w_max, mut g_max, mut s_max) = (0.0f64, 0.0f64, 0.0f64);
    for (k, e) in entries.iter().enumerate() {
        let s = SurfaceMap::from_w(e.name, e.w.clone(), c.ode_tol);
        let mut rng = substream(seed, k as u64);
        for i in 0..c.samples {
            let t: Vec<f64> = (0..e.w.big_n()).map(|_| rng.random_range(-c.t_radius..c.t_radius)).collect();
            let x: Vec<f64> = e.x0.iter().map(|v| v + rng.random_range(-c.x_radius..c.x_radius)).collect();
            let w = w_from_gamma(&s, &t, &x, c.fd_step)?;
            let w_err = max_diff(&w, &e.w.eval(&t, &x));
            let g_err = match &e.closed_form {
                Some(cf) => max_diff(&gamma_from_w(&e.w, &t, &x, c.ode_tol)?, &cf.gamma(&t, &x)?),
                None => 0.0,
            };
            let lhs = omega(&e.w, c.semigroup_eps0 * c.semigroup_eps, &t, &x, c.ode_tol)?.end;
            let t0: Vec<f64> = t.iter().map(|v| c.semigroup_eps0 * v).collect();
            let s_err = max_diff(&lhs, &omega(&e.w, c.semigroup_eps, &t0, &x, c.ode_tol)?.end);
            w_max = w_max.max(w_err);
            g_max = g_max.max(g_err);
            s_max = s_max.max(s_err);
            rows.push(vec![e.name.to_string(), i.to_string(), num(w_err), num(g_err), num(s_err)]);
        }
    }
    let mut b = Bundle::new(json!({ "surfaces": entries.iter().map(|e| e.name).collect::<Vec<_>>(), "max_error": w_max.max(g_max) }));
    b.check(Assertion::le("W round-trip max error", w_max, c.tolerance));
    b.check(Assertion::le("gamma vs closed form max error", g_max, c.tolerance));
    b.check(Assertion::le("semigroup max error", s_max, c.semigroup_tol));
    b.csv("roundtrip.csv", table(&["surface", "sample", "w_error", "gamma_error", "semigroup_error"], rows));
    Ok(b)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Curvature {
    pub surface: SurfaceRef,
    /// Defaults to the catalog base point.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    pub modes: Vec<CurvatureMode>,
    /// `(M, M')` for CZ/CY; defaults to the catalog calibration.
    #[serde(default)]
    pub order: Option<(u32, u32)>,
    #[serde(default)]
    pub cj_order: Option<u32>,
    pub options: CurvatureOptions,
    /// Expected verdict; when absent only agreement of the modes is asserted.
    #[serde(default)]
    pub expect_curved: Option<bool>,
}

pub fn curvature(c: &Curvature, seed: u64) -> Result<Bundle, Failure> {
    let entry = c.surface.entry();
    let s = c.surface.build()?;
    let x0 = c.x0.clone().or_else(|| entry.as_ref().map(|e| e.x0.clone())).ok_or_else(|| Failure::Invalid("x0 is required for inline surfaces".into()))?;
    let order = c.order.or(entry.as_ref().map(|e| e.cz_order)).ok_or_else(|| Failure::Invalid("order is required for inline surfaces".into()))?;
    let cj_order = c.cj_order.or(entry.as_ref().map(|e| e.cj_order)).unwrap_or(3);
    let opts = CurvatureOptions { seed, ..c.options };
    let mut reports = Vec::new();
    for &mode in &c.modes {
        let r = match mode {
            CurvatureMode::CJ => curvature_check(&s, &x0, mode, cj_order, 0, &opts)?,
            _ => curvature_check(&s, &x0, mode, order.0, order.1, &opts)?,
        };
        reports.push(r);
    }
    let mut b = Bundle::new(json!({ "x0": x0, "reports": reports }));
    if let Some(first) = reports.first() {
        for r in &reports[1..] {
            b.check(Assertion::eq(&format!("{:?} verdict agrees with {:?}", r.mode, first.mode), r.verdict, first.verdict));
        }
        if let Some(want) = c.expect_curved {
            b.check(Assertion::eq("curvature holds", first.holds, want));
        }
    }
    let rows = reports.iter().map(|r| {
        vec![format!("{:?}", r.mode), r.holds.to_string(), format!("{:?}", r.verdict), num(r.margin), format!("{} {}", r.order_used.0, r.order_used.1)]
    });
    b.csv("curvature.csv", table(&["mode", "holds", "verdict", "margin", "order"], rows));
    Ok(b)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Leaf {
    pub surface: SurfaceRef,
    pub x0: Vec<f64>,
    pub order: u32,
    pub m_prime: u32,
    pub t_samples: Vec<Vec<f64>>,
    pub tol: f64,
    pub options: CurvatureOptions,
    pub expect_member: bool,
}

pub fn leaf(c: &Leaf, seed: u64) -> Result<Bundle, Failure> {
    let s = c.surface.build()?;
    let opts = CurvatureOptions { seed, ..c.options };
    let r = leaf_membership(&s, &c.x0, c.order, c.m_prime, &c.t_samples, c.tol, &opts)?;
    let mut b = Bundle::new(json!(r));
    b.check(Assertion::eq("W(t, x0) lies in the leaf", r.pass, c.expect_member));
    Ok(b)
}

// ---------------------------------------------------------------- vector fields and CC geometry

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcChart {
    pub fields: Vec<FieldConfig>,
    pub x0: Vec<f64>,
    pub delta: Vec<f64>,
    pub chart: ChartOptions,
    pub samples: usize,
    pub paths: usize,
    pub probe_radius: f64,
    pub det_bound: f64,
}

pub fn cc_chart(c: &CcChart, seed: u64) -> Result<Bundle, Failure> {
    let list = fields(&c.fields)?;
    let chart = scaling_chart(&list, &c.x0, &c.delta, c.chart)?;
    let opts = VerifyOptions { samples: c.samples, paths: c.paths, probe_radius: c.probe_radius, det_bound: c.det_bound, seed };
    let r = chart_verify(&chart, &opts)?;
    let mut b = Bundle::new(json!({
        "n0": chart.n0,
        "j0": chart.j0,
        "j0_minor": chart.j0_minor,
        "det_min": r.det_min,
        "det_max": r.det_max,
        "inclusion_paths": r.inclusion_paths,
    }));
    b.check(Assertion::eq("Phi(0) = x0 exactly", r.phi0_exact, true));
    b.check(Assertion::le("injectivity violations", r.injectivity_violations as f64, 0.0));
    b.check(Assertion::le("ball inclusion failures", r.inclusion_failures as f64, 0.0));
    b.check(Assertion::le("det Y ratio", r.det_ratio, c.det_bound));
    b.csv("chart.csv", r.to_csv());
    Ok(b)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlCheck {
    pub lattice: LatticeConfig,
    pub expect: ControlStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Control {
    pub list: Vec<FieldConfig>,
    pub target: FieldConfig,
    pub plan: SamplingPlan,
    pub tol: f64,
    pub coef_bound: f64,
    pub checks: Vec<ControlCheck>,
    /// Exact coefficients expected on a PASS, as rational strings.
    #[serde(default)]
    pub expect_coefficients: Option<Vec<String>>,
}

pub fn control(c: &Control, seed: u64) -> Result<Bundle, Failure> {
    let list = fields(&c.list)?;
    let target = c.target.build()?;
    let plan = SamplingPlan { seed, ..c.plan.clone() };
    let mut certs = Vec::new();
    let mut b = Bundle::default();
    let mut rows = Vec::new();
    for (k, chk) in c.checks.iter().enumerate() {
        let lattice = ParamLattice::from_config(&chk.lattice)?;
        let cert = check_control(&list, &target, &lattice, &plan, c.tol, c.coef_bound)?;
        b.check(Assertion::eq(&format!("check {k} status"), cert.status, chk.expect));
        if let (Some(want), ControlStatus::Pass) = (&c.expect_coefficients, chk.expect) {
            b.check(Assertion::eq(&format!("check {k} exact coefficients"), cert.constant_coefficients.clone(), Some(want.clone())));
        }
        for row in &cert.per_delta {
            let d: Vec<String> = row.delta.iter().map(|v| num(*v)).collect();
            rows.push(vec![k.to_string(), d.join(" "), num(row.sup), num(row.sup_all_orders), num(row.residual)]);
        }
        certs.push(json!({
            "status": cert.status,
            "blowup": cert.blowup,
            "sup_norms": cert.sup_norms,
            "max_residual": cert.max_residual,
            "constant_coefficients": cert.constant_coefficients,
            "witness": cert.witness,
            "degenerate": cert.degenerate,
            "delta_samples": cert.delta_samples,
            "point_samples": cert.point_samples,
        }));
    }
    b.results = json!({ "checks": certs });
    b.csv("control.csv", table(&["check", "delta", "sup", "sup_all_orders", "residual"], rows));
    Ok(b)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateList {
    pub seeds: Vec<FieldConfig>,
    pub m: usize,
    #[serde(default)]
    pub expect_closed: Option<bool>,
    #[serde(default)]
    pub expect_len: Option<usize>,
}

pub fn generate(c: &GenerateList) -> Result<Bundle, Failure> {
    let g = generate_list(&fields(&c.seeds)?, c.m)?;
    let mut b = Bundle::new(json!({
        "fields": g.fields.iter().map(DegreedField::to_config).collect::<Vec<_>>(),
        "words": g.words,
        "closure": g.closure,
    }));
    if let Some(want) = c.expect_closed {
        b.check(Assertion::eq("list closed under brackets", g.closure.closed, want));
    }
    if let Some(want) = c.expect_len {
        b.check(Assertion::eq("list length", g.len(), want));
    }
    let rows = g.fields.iter().zip(&g.words).map(|(f, w)| {
        let word: Vec<String> = w.iter().map(usize::to_string).collect();
        let deg: Vec<String> = f.degree.components().iter().map(ToString::to_string).collect();
        vec![word.join(" "), deg.join(" "), f.field.to_strings().join(" ; ")]
    });
    b.csv("list.csv", table(&["word", "degree", "coefficients"], rows));
    Ok(b)
}

// ---------------------------------------------------------------- operator norms

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Oracle {
    /// Frequency cap; defaults to the grid Nyquist frequency `pi / h`.
    #[serde(default)]
    pub xi_max: Option<f64>,
    pub samples: usize,
    pub slope_rel_tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AoDecay {
    pub surface: SurfaceRef,
    pub scheme: SchemeConfig,
    pub bump: BumpConfig,
    /// Diagonal scales `j = (s, ..., s)`.
    pub scales: Vec<i64>,
    pub grid: GridSpec,
    pub cutoffs: Cutoffs,
    pub power_tol: f64,
    #[serde(default)]
    pub slope_max: Option<f64>,
    #[serde(default)]
    pub slope_min: Option<f64>,
    #[serde(default)]
    pub r2_min: Option<f64>,
    /// Convolution models only.
    #[serde(default)]
    pub oracle: Option<Oracle>,
}

pub fn ao_decay(c: &AoDecay) -> Result<Bundle, Failure> {
    let surface = c.surface.build()?;
    let scheme = c.scheme.build()?;
    let bump = BumpSpec::from_config(&c.bump)?;
    let ops: Vec<DiscretizedOp> = c
        .scales
        .iter()
        .map(|&s| discretize_piece(&surface, &bump, &scheme, &vec![s as f64; scheme.nu()], &c.cutoffs, &c.grid))
        .collect::<Result<_, _>>()?;
    let refs: Vec<(i64, &dyn LinOp)> = c.scales.iter().zip(&ops).map(|(s, o)| (*s, o as &dyn LinOp)).collect();
    let fit = ao_decay_fit(&refs, c.power_tol)?;
    let mut b = Bundle::new(json!({
        "slope": fit.fit.slope,
        "intercept": fit.fit.intercept,
        "r2": fit.fit.r2,
        "epsilon": fit.epsilon,
        "max_norm": fit.max_norm(),
        "cotlar_bound": mpradon::opnorm::cotlar_bound(&fit.table),
        "nnz": ops.iter().map(|o| o.matrix.rows.iter().map(Vec::len).sum::<usize>()).collect::<Vec<_>>(),
    }));
    if let Some(v) = c.slope_max {
        b.check(Assertion::le("fitted slope", fit.fit.slope, v));
    }
    if let Some(v) = c.slope_min {
        b.check(Assertion::ge("fitted slope", fit.fit.slope, v));
    }
    if let Some(v) = c.r2_min {
        b.check(Assertion::ge("fit R^2", fit.fit.r2, v));
    }
    if let Some(o) = &c.oracle {
        let h = c.grid.x.axes[0].step();
        let xi = o.xi_max.unwrap_or(std::f64::consts::PI / h);
        let of = fit_decay(convolution_oracle(&bump, &c.scales, xi, o.samples))?;
        let gap = (fit.fit.slope / of.fit.slope - 1.0).abs();
        b.results["oracle_slope"] = json!(of.fit.slope);
        b.check(Assertion::le("relative slope gap to Fourier oracle", gap, o.slope_rel_tol));
        b.csv("oracle_norms.csv", of.to_csv());
    }
    b.csv("norms.csv", fit.to_csv());
    b.csv("fit.csv", fit.fit_csv());
    Ok(b)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transport {
    /// Components of `Psi` as expressions in `t1..tN`.
    pub map: Vec<String>,
    pub weight: BumpConfig,
    pub tau_box: TauBox,
    pub grid: UniformGrid,
    pub mass_tol: f64,
    pub deltas: Vec<f64>,
    pub shifts: Vec<Vec<f64>>,
    /// Shifts along the first axis for the Hölder-exponent fit.
    #[serde(default)]
    pub zetas: Vec<f64>,
    /// Compare with the weight itself (identity pushforwards).
    #[serde(default)]
    pub reference_is_weight: Option<f64>,
    #[serde(default)]
    pub expect_probe: Option<bool>,
}

pub fn transport(c: &Transport) -> Result<Bundle, Failure> {
    let nt = c.tau_box.dim();
    let exprs = c.map.iter().map(|s| parse_expr(s, 0, nt)).collect::<Result<Vec<_>, _>>()?;
    let weight = BumpSpec::from_config(&c.weight)?;
    if weight.dim() != nt {
        return Err(Failure::Invalid(format!("weight has dimension {}, the box {nt}", weight.dim())));
    }
    let psi = |t: &[f64]| exprs.iter().map(|e| e.eval(&[], t)).collect::<Vec<f64>>();
    let w = |t: &[f64]| weight.eval(t);
    let d = transport_density(&psi, &w, &c.tau_box, &c.grid)?;
    let seminorms: Vec<(f64, f64)> = c.deltas.iter().map(|&dl| (dl, l1delta_seminorm(&d.density, &c.grid, dl, &c.shifts))).collect();
    let mut b = Bundle::new(json!({
        "mass_in": d.mass_in,
        "mass_out": d.mass_out,
        "probe": d.probe,
        "warnings": d.warnings,
        "seminorms": seminorms,
    }));
    b.check(Assertion::le("mass lost off the grid (relative)", (d.mass_in - d.mass_out).abs() / d.mass_in.abs().max(1e-300), c.mass_tol));
    for (dl, v) in &seminorms {
        b.check(Assertion::eq(&format!("seminorm at delta {dl} finite"), v.is_finite(), true));
    }
    if let Some(want) = c.expect_probe {
        b.check(Assertion::eq("hypothesis probe", d.probe.pass, want));
    }
    if let Some(tol) = c.reference_is_weight {
        let exact: Vec<f64> = c.grid.points().map(|y| weight.eval(&y)).collect();
        let mass = exact.iter().sum::<f64>() * cell_volume(&c.grid);
        b.check(Assertion::le("relative L1 distance to the weight", d.l1_distance(&exact, &c.grid) / mass, tol));
    }
    if c.zetas.len() >= 2 {
        let m = translation_modulus(&d.density, &c.grid, &c.zetas)?;
        b.results["modulus_slope"] = json!(m.slope);
        b.results["modulus_r2"] = json!(m.r2);
    }
    b.csv("density.csv", c.grid.to_csv(&d.density));
    Ok(b)
}

// ---------------------------------------------------------------- decide

fn polynomial(terms: &[(u32, u32, i64, i64)]) -> Result<PolySurface, Failure> {
    if terms.iter().any(|t| t.3 == 0) {
        return Err(Failure::Invalid("zero denominator in polynomial".into()));
    }
    Ok(PolySurface::new(terms.iter().map(|&(e, f, n, d)| ((e, f), Q::new(n, d))))?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Newton {
    /// `(e, f, numerator, denominator)` per term.
    pub poly: Vec<(u32, u32, i64, i64)>,
    pub mode: NewtonMode,
    pub options: NewtonOptions,
    #[serde(default)]
    pub expect: Option<Classification>,
}

pub fn newton(c: &Newton) -> Result<Bundle, Failure> {
    let p = polynomial(&c.poly)?;
    let v = newton_verdict(&p, c.mode, c.options)?;
    let mut b = Bundle::new(json!(v));
    if let Some(want) = c.expect {
        b.check(Assertion::eq("classification", v.classification, want));
    }
    b.exit = Some(v.classification.exit_code());
    Ok(b)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counterexample {
    pub poly: Vec<(u32, u32, i64, i64)>,
    pub bump: BumpConfig,
    pub tau: f64,
    /// Truncations `M`, increasing.
    pub truncations: Vec<u32>,
    #[serde(default)]
    pub witness: Option<(u32, u32)>,
    /// Allowed range of `|m(M_{k+1})| / |m(M_k)|`.
    pub ratio_range: (f64, f64),
}

pub fn counterexample(c: &Counterexample) -> Result<Bundle, Failure> {
    let p = polynomial(&c.poly)?;
    let bump = BumpSpec::from_config(&c.bump)?;
    let setup = CounterexampleSetup::new(&p, &bump, c.tau, c.witness)?;
    let top = c.truncations.iter().copied().max().ok_or_else(|| Failure::Invalid("no truncations".into()))?;
    let pieces = counterexample_pieces(&setup, top);
    let sums: Vec<f64> = c
        .truncations
        .iter()
        .map(|&m| pieces.iter().filter(|p| p.j <= m).map(|p| p.value()).sum::<Complex64>().norm())
        .collect();
    let mut b = Bundle::new(json!({
        "witness": setup.witness,
        "m0": setup.m0(),
        "rescale": setup.rescale,
        "limit_piece": [setup.limit_piece.re, setup.limit_piece.im],
        "partial_sums": c.truncations.iter().zip(&sums).collect::<Vec<_>>(),
        "all_resolved": pieces.iter().all(|p| p.resolved),
    }));
    for (k, w) in sums.windows(2).enumerate() {
        let name = format!("|m({})| / |m({})|", c.truncations[k + 1], c.truncations[k]);
        b.check(Assertion::within(&name, w[1] / w[0], c.ratio_range.0, c.ratio_range.1));
    }
    let rows = pieces.iter().map(|p| vec![p.j.to_string(), num(p.re), num(p.im), p.resolved.to_string()]);
    b.csv("pieces.csv", table(&["j", "re", "im", "resolved"], rows));
    Ok(b)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Heisenberg {
    pub demo: HeisDemo,
    pub power_tol: f64,
    pub euclidean_tol: f64,
    /// Allowed factor between the table max at `M/2` and at `M`.
    pub stability_factor: f64,
    #[serde(default)]
    pub slope_max: Option<f64>,
}

pub fn heisenberg(c: &Heisenberg) -> Result<Bundle, Failure> {
    let r = c.demo.divergence_check(c.power_tol)?;
    let mut b = Bundle::new(json!({
        "euclidean": r.euclidean,
        "max_by_m": r.max_by_m,
        "slope": r.fit.as_ref().map(|f| f.fit.slope),
        "r2": r.fit.as_ref().map(|f| f.fit.r2),
    }));
    b.check(Assertion::le("Euclidean partial sum relative error", r.euclidean.rel_err, c.euclidean_tol));
    let at = |m: u32| r.max_by_m.iter().find(|e| e.0 == m).map(|e| e.1);
    if let (Some(lo), Some(hi)) = (at(c.demo.m / 2), at(c.demo.m)) {
        let f = c.stability_factor;
        b.check(Assertion::within("table max ratio, M versus M/2", hi / lo, 1.0 / f, f));
    }
    if let (Some(v), Some(fit)) = (c.slope_max, &r.fit) {
        b.check(Assertion::le("group-side fitted slope", fit.fit.slope, v));
    }
    let rows = r.table.iter().map(|e| vec![e.j.to_string(), e.k.to_string(), num(e.star_left), num(e.star_right)]);
    b.csv("norms.csv", table(&["j", "k", "star_left", "star_right"], rows));
    Ok(b)
}
