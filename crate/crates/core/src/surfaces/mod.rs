//! Surfaces `gamma_t(x)` and their generating fields `W(t, x)`.
//!
//! `W` determines `gamma` through `d omega / d eps = eps^{-1} W(eps t, omega)`,
//! `omega(0) = x`, `gamma_t(x) = omega(1)`. The right-hand side is evaluated in
//! the desingularized Taylor form `sum_alpha eps^{|alpha|-1} t^alpha X_alpha`.

pub mod catalog;
pub mod curvature;
pub mod taylor;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::vfields::{parse_expr, Expr, VField, Var};

/// Default ODE tolerance.
pub const DEFAULT_ODE_TOL: f64 = 1e-10;
/// Default finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-4;
const MIN_STEPS: usize = 8;
const MAX_STEPS: usize = 1 << 16;
const ESCAPE_RADIUS: f64 = 1e6;

/// `W(t) = sum_alpha t^alpha X_alpha` with `0 < |alpha|`.
#[derive(Debug, Clone, PartialEq)]
pub struct WSpec {
    n: usize,
    big_n: usize,
    terms: BTreeMap<Vec<u32>, VField>,
    jacobians: BTreeMap<Vec<u32>, Vec<Vec<Expr>>>,
}

fn monomial(t: &[f64], alpha: &[u32]) -> f64 {
    t.iter().zip(alpha).map(|(v, &a)| v.powi(a as i32)).product()
}

fn order(alpha: &[u32]) -> u32 {
    alpha.iter().sum()
}

impl WSpec {
    pub fn new(n: usize, big_n: usize, terms: BTreeMap<Vec<u32>, VField>) -> Result<Self> {
        if n == 0 || big_n == 0 {
            return validation("WSpec needs n >= 1 and N >= 1");
        }
        for (alpha, f) in &terms {
            if alpha.len() != big_n {
                return validation(format!("multi-index {alpha:?} has the wrong length (N = {big_n})"));
            }
            if order(alpha) == 0 {
                return validation("WSpec terms need |alpha| > 0");
            }
            if f.dim() != n {
                return validation(format!("field for {alpha:?} has dimension {}, expected {n}", f.dim()));
            }
            if f.coeffs().iter().any(|c| c.variables().iter().any(|v| matches!(v, Var::T(_)))) {
                return validation("WSpec fields must not depend on t");
            }
        }
        let jacobians = terms
            .iter()
            .map(|(a, f)| {
                let jac = f.coeffs().iter().map(|c| (0..n).map(|l| c.diff(Var::X(l as u16))).collect()).collect();
                (a.clone(), jac)
            })
            .collect();
        Ok(Self { n, big_n, terms, jacobians })
    }

    pub fn from_config(cfg: &WSpecConfig) -> Result<Self> {
        let mut terms = BTreeMap::new();
        for t in &cfg.terms {
            let refs: Vec<&str> = t.field.iter().map(String::as_str).collect();
            if refs.len() != cfg.n {
                return validation(format!("field for {:?} has {} components, expected {}", t.alpha, refs.len(), cfg.n));
            }
            let f = VField::parse(&refs, 0)?;
            if terms.insert(t.alpha.clone(), f).is_some() {
                return validation(format!("duplicate multi-index {:?}", t.alpha));
            }
        }
        Self::new(cfg.n, cfg.big_n, terms)
    }

    pub fn to_config(&self) -> WSpecConfig {
        WSpecConfig {
            n: self.n,
            big_n: self.big_n,
            terms: self.terms.iter().map(|(a, f)| WTermConfig { alpha: a.clone(), field: f.to_strings() }).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn big_n(&self) -> usize {
        self.big_n
    }

    pub fn terms(&self) -> &BTreeMap<Vec<u32>, VField> {
        &self.terms
    }

    pub fn max_order(&self) -> u32 {
        self.terms.keys().map(|a| order(a)).max().unwrap_or(0)
    }

    pub fn eval(&self, t: &[f64], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (alpha, f) in &self.terms {
            let m = monomial(t, alpha);
            if m == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(f.coeffs()) {
                *o += m * c.eval(x, &[]);
            }
        }
        out
    }

    /// `eps^{-1} W(eps t, x)` written without the division.
    fn desingularized(&self, eps: f64, t: &[f64], x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (alpha, f) in &self.terms {
            let m = monomial(t, alpha) * eps.powi(order(alpha) as i32 - 1);
            if m == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(f.coeffs()) {
                *o += m * c.eval(x, &[]);
            }
        }
    }

    /// The flow right-hand side with its variational equations. State layout:
    /// `y` (n), then `dy/dx` (n x n) and `dy/dt` (n x N), both row major.
    /// `eps = None` gives the eps-independent exponential flow.
    fn variational(&self, eps: Option<f64>, t: &[f64], s: &[f64], out: &mut [f64]) {
        let (n, nt) = (self.n, self.big_n);
        let y = &s[..n];
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut a = vec![0.0; n * n];
        let mut g = vec![0.0; n * nt];
        let mut xv = vec![0.0; n];
        for (alpha, f) in &self.terms {
            let scale = eps.map_or(1.0, |e| e.powi(order(alpha) as i32 - 1));
            for (v, c) in xv.iter_mut().zip(f.coeffs()) {
                *v = c.eval(y, &[]);
            }
            let m = monomial(t, alpha) * scale;
            if m != 0.0 {
                for i in 0..n {
                    out[i] += m * xv[i];
                }
                for (i, row) in self.jacobians[alpha].iter().enumerate() {
                    for (l, d) in row.iter().enumerate() {
                        if !d.is_zero() {
                            a[i * n + l] += m * d.eval(y, &[]);
                        }
                    }
                }
            }
            for j in 0..nt {
                if alpha[j] == 0 {
                    continue;
                }
                let mut b = alpha.clone();
                b[j] -= 1;
                let mj = scale * f64::from(alpha[j]) * monomial(t, &b);
                if mj != 0.0 {
                    for i in 0..n {
                        g[i * nt + j] += mj * xv[i];
                    }
                }
            }
        }
        let (yx, yt) = s[n..].split_at(n * n);
        let (ox, ot) = out[n..].split_at_mut(n * n);
        for i in 0..n {
            for c in 0..n {
                ox[i * n + c] = (0..n).map(|l| a[i * n + l] * yx[l * n + c]).sum();
            }
            for c in 0..nt {
                ot[i * nt + c] = g[i * nt + c] + (0..n).map(|l| a[i * n + l] * yt[l * nt + c]).sum::<f64>();
            }
        }
    }

    /// The field `W_j` is not stored; this is `sum_alpha alpha_j t^{alpha - e_j} X_alpha`,
    /// which is `dW/dt_j`, the first-order part of `W_j` used for checks.
    pub fn dw_dt(&self, j: usize, t: &[f64], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (alpha, f) in &self.terms {
            if alpha[j] == 0 {
                continue;
            }
            let mut a = alpha.clone();
            a[j] -= 1;
            let m = f64::from(alpha[j]) * monomial(t, &a);
            for (o, c) in out.iter_mut().zip(f.coeffs()) {
                *o += m * c.eval(x, &[]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WTermConfig {
    pub alpha: Vec<u32>,
    pub field: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WSpecConfig {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub terms: Vec<WTermConfig>,
}

/// RK4 on `[0, end]` with `steps` uniform steps.
fn rk4(
    f: &dyn Fn(f64, &[f64], &mut [f64]),
    x0: &[f64],
    end: f64,
    steps: usize,
    mut trace: Option<&mut Vec<Vec<f64>>>,
) -> std::result::Result<Vec<f64>, Vec<f64>> {
    let n = x0.len();
    let h = end / steps as f64;
    let mut y = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for s in 0..steps {
        let e = s as f64 * h;
        f(e, &y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        f(e + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        f(e + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        f(e + h, &tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(y.clone());
        }
        if y.iter().any(|v| !v.is_finite() || v.abs() > ESCAPE_RADIUS) {
            return Err(y);
        }
    }
    Ok(y)
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub end: Vec<f64>,
    pub steps: usize,
    pub error_estimate: f64,
}

/// Global step doubling until two successive RK4 solutions agree to `tol`.
pub fn integrate(f: &dyn Fn(f64, &[f64], &mut [f64]), x0: &[f64], end: f64, tol: f64) -> Result<Flow> {
    let fail = |msg: String, steps: usize| {
        let mut partial = vec![x0.to_vec()];
        let _ = rk4(f, x0, end, steps, Some(&mut partial));
        Error::Integration { msg, partial }
    };
    let mut steps = MIN_STEPS;
    let mut prev = rk4(f, x0, end, steps, None).map_err(|_| fail("trajectory left the domain".into(), MIN_STEPS))?;
    loop {
        let next_steps = steps * 2;
        if next_steps > MAX_STEPS {
            return Err(fail(format!("step size collapsed: no agreement to {tol:e} with {steps} steps"), steps));
        }
        let next = rk4(f, x0, end, next_steps, None).map_err(|_| fail("trajectory left the domain".into(), next_steps))?;
        let err = prev.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / 15.0;
        if err <= tol {
            return Ok(Flow { end: next, steps: next_steps, error_estimate: err });
        }
        prev = next;
        steps = next_steps;
    }
}

/// Fixed-step integration, used inside finite-difference stencils so that
/// all stencil points share one discretization.
pub fn integrate_fixed(f: &dyn Fn(f64, &[f64], &mut [f64]), x0: &[f64], end: f64, steps: usize) -> Result<Vec<f64>> {
    rk4(f, x0, end, steps, None).map_err(|y| Error::DomainExit(format!("trajectory left the domain at {y:?}")))
}

/// `omega(eps, t, x)` for the W-equation.
pub fn omega(w: &WSpec, eps: f64, t: &[f64], x: &[f64], tol: f64) -> Result<Flow> {
    let rhs = |e: f64, y: &[f64], out: &mut [f64]| w.desingularized(e, t, y, out);
    integrate(&rhs, x, eps, tol)
}

/// `gamma_t(x) = omega(1, t, x)`.
pub fn gamma_from_w(w: &WSpec, t: &[f64], x: &[f64], ode_tol: f64) -> Result<Vec<f64>> {
    check_dims(w.n, w.big_n, t, x)?;
    Ok(omega(w, 1.0, t, x, ode_tol)?.end)
}

fn check_dims(n: usize, big_n: usize, t: &[f64], x: &[f64]) -> Result<()> {
    if t.len() != big_n || x.len() != n {
        return Err(Error::Contract(format!("expected t in R^{big_n} and x in R^{n}, got {} and {}", t.len(), x.len())));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceKind {
    /// Components of `gamma_t(x)` as expressions in x1..xn, t1..tN, with
    /// their symbolic x- and t-Jacobians.
    ClosedForm { components: Vec<Expr>, dx: Vec<Vec<Expr>>, dt: Vec<Vec<Expr>> },
    /// Solution of the W-equation.
    OdeFromW { w: WSpec },
    /// Time-1 flow of `sum_alpha t^alpha X_alpha`.
    Exponential { fields: WSpec },
}

/// `gamma_t(x)` with its first derivatives in x and in t.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub value: Vec<f64>,
    /// `dx[i][l] = d gamma^i / d x_l`.
    pub dx: Vec<Vec<f64>>,
    /// `dt[i][j] = d gamma^i / d t_j`.
    pub dt: Vec<Vec<f64>>,
}

/// A surface with its evaluators, defined for `|t|_inf < rho`.
/// `steps` pins the ODE discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMap {
    pub name: String,
    pub n: usize,
    pub big_n: usize,
    pub kind: SurfaceKind,
    pub ode_tol: f64,
    pub rho: f64,
    steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceConfig {
    ClosedForm {
        name: String,
        n: usize,
        #[serde(rename = "N")]
        big_n: usize,
        components: Vec<String>,
        #[serde(default = "default_rho")]
        rho: f64,
    },
    Ode {
        name: String,
        w: WSpecConfig,
        #[serde(default = "default_tol")]
        ode_tol: f64,
        #[serde(default = "default_rho")]
        rho: f64,
    },
    Exponential {
        name: String,
        fields: WSpecConfig,
        #[serde(default = "default_tol")]
        ode_tol: f64,
        #[serde(default = "default_rho")]
        rho: f64,
    },
}

fn default_tol() -> f64 {
    DEFAULT_ODE_TOL
}

fn default_rho() -> f64 {
    DEFAULT_RHO
}

/// Default parameter radius.
pub const DEFAULT_RHO: f64 = 1.0;

impl SurfaceMap {
    pub fn closed_form(name: &str, n: usize, big_n: usize, components: &[&str]) -> Result<Self> {
        if components.len() != n {
            return validation(format!("closed-form surface needs {n} components"));
        }
        let comps = components.iter().map(|s| parse_expr(s, n, big_n)).collect::<Result<Vec<_>>>()?;
        let dx = comps.iter().map(|c| (0..n).map(|l| c.diff(Var::X(l as u16))).collect()).collect();
        let dt = comps.iter().map(|c| (0..big_n).map(|j| c.diff(Var::T(j as u16))).collect()).collect();
        Ok(Self {
            name: name.to_string(),
            n,
            big_n,
            kind: SurfaceKind::ClosedForm { components: comps, dx, dt },
            ode_tol: DEFAULT_ODE_TOL,
            rho: DEFAULT_RHO,
            steps: None,
        })
    }

    pub fn from_w(name: &str, w: WSpec, ode_tol: f64) -> Self {
        Self {
            name: name.to_string(),
            n: w.n,
            big_n: w.big_n,
            kind: SurfaceKind::OdeFromW { w },
            ode_tol,
            rho: DEFAULT_RHO,
            steps: None,
        }
    }

    pub fn exponential(name: &str, fields: WSpec, ode_tol: f64) -> Self {
        Self {
            name: name.to_string(),
            n: fields.n,
            big_n: fields.big_n,
            kind: SurfaceKind::Exponential { fields },
            ode_tol,
            rho: DEFAULT_RHO,
            steps: None,
        }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    /// Fix the number of RK4 steps (ODE kinds only).
    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = Some(steps.max(1));
        self
    }

    pub fn steps(&self) -> Option<usize> {
        self.steps
    }

    pub fn from_config(cfg: &SurfaceConfig) -> Result<Self> {
        let s = match cfg {
            SurfaceConfig::ClosedForm { name, n, big_n, components, rho } => {
                let refs: Vec<&str> = components.iter().map(String::as_str).collect();
                Self::closed_form(name, *n, *big_n, &refs)?.with_rho(*rho)
            }
            SurfaceConfig::Ode { name, w, ode_tol, rho } => {
                Self::from_w(name, WSpec::from_config(w)?, *ode_tol).with_rho(*rho)
            }
            SurfaceConfig::Exponential { name, fields, ode_tol, rho } => {
                Self::exponential(name, WSpec::from_config(fields)?, *ode_tol).with_rho(*rho)
            }
        };
        if !(s.rho > 0.0) || !(s.ode_tol > 0.0) {
            return validation(format!("{}: rho and ode_tol must be positive", s.name));
        }
        Ok(s)
    }

    pub fn to_config(&self) -> SurfaceConfig {
        let (name, rho) = (self.name.clone(), self.rho);
        match &self.kind {
            SurfaceKind::ClosedForm { components, .. } => SurfaceConfig::ClosedForm {
                name,
                n: self.n,
                big_n: self.big_n,
                components: components.iter().map(ToString::to_string).collect(),
                rho,
            },
            SurfaceKind::OdeFromW { w } => SurfaceConfig::Ode { name, w: w.to_config(), ode_tol: self.ode_tol, rho },
            SurfaceKind::Exponential { fields } => {
                SurfaceConfig::Exponential { name, fields: fields.to_config(), ode_tol: self.ode_tol, rho }
            }
        }
    }

    /// The stored W, when the surface is defined through one.
    pub fn wspec(&self) -> Option<&WSpec> {
        match &self.kind {
            SurfaceKind::OdeFromW { w } => Some(w),
            _ => None,
        }
    }

    fn check(&self, t: &[f64], x: &[f64]) -> Result<()> {
        check_dims(self.n, self.big_n, t, x)?;
        if t.iter().any(|v| v.abs() >= self.rho) {
            return Err(Error::DomainExit(format!("{}: t = {t:?} outside the parameter radius {}", self.name, self.rho)));
        }
        Ok(())
    }

    fn rhs<'a>(&'a self, t: &'a [f64]) -> Option<Box<dyn Fn(f64, &[f64], &mut [f64]) + 'a>> {
        match &self.kind {
            SurfaceKind::ClosedForm { .. } => None,
            SurfaceKind::OdeFromW { w } => Some(Box::new(move |e, y, out| w.desingularized(e, t, y, out))),
            SurfaceKind::Exponential { fields } => Some(Box::new(move |_, y, out| {
                let v = fields.eval(t, y);
                out.copy_from_slice(&v);
            })),
        }
    }

    fn flow<'a>(&self, f: &(dyn Fn(f64, &[f64], &mut [f64]) + 'a), x0: &[f64]) -> Result<Vec<f64>> {
        match self.steps {
            Some(s) => integrate_fixed(f, x0, 1.0, s),
            None => Ok(integrate(f, x0, 1.0, self.ode_tol)?.end),
        }
    }

    /// A copy whose ODE step count is fixed to what the tolerance requires
    /// at `(t, x)`; closed-form surfaces are returned unchanged.
    pub fn pinned(&self, t: &[f64], x: &[f64]) -> Result<Self> {
        let Some(f) = self.rhs(t) else {
            return Ok(self.clone());
        };
        let flow = integrate(&*f, x, 1.0, self.ode_tol)?;
        // One extra doubling keeps nearby stencil points within tolerance.
        Ok(self.clone().with_steps(flow.steps * 2))
    }

    pub fn gamma(&self, t: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check(t, x)?;
        match &self.kind {
            SurfaceKind::ClosedForm { components, .. } => {
                let y: Vec<f64> = components.iter().map(|c| c.eval(x, t)).collect();
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::DomainExit(format!("{}: non-finite value at t = {t:?}, x = {x:?}", self.name)));
                }
                Ok(y)
            }
            _ => {
                let f = self.rhs(t).expect("ODE surface");
                self.flow(&*f, x)
            }
        }
    }

    /// `gamma_t(x)` and its derivatives: symbolic for closed forms, through
    /// the variational equations otherwise.
    pub fn tangent(&self, t: &[f64], x: &[f64]) -> Result<Tangent> {
        self.check(t, x)?;
        let (n, nt) = (self.n, self.big_n);
        let ev = |m: &[Vec<Expr>]| -> Vec<Vec<f64>> { m.iter().map(|r| r.iter().map(|e| e.eval(x, t)).collect()).collect() };
        let (w, eps) = match &self.kind {
            SurfaceKind::ClosedForm { dx, dt, .. } => {
                return Ok(Tangent { value: self.gamma(t, x)?, dx: ev(dx), dt: ev(dt) });
            }
            SurfaceKind::OdeFromW { w } => (w, true),
            SurfaceKind::Exponential { fields } => (fields, false),
        };
        let mut s0 = vec![0.0; n + n * n + n * nt];
        s0[..n].copy_from_slice(x);
        for i in 0..n {
            s0[n + i * n + i] = 1.0;
        }
        let f = |e: f64, s: &[f64], out: &mut [f64]| w.variational(eps.then_some(e), t, s, out);
        let s = self.flow(&f, &s0)?;
        let value = s[..n].to_vec();
        let dx = (0..n).map(|i| s[n + i * n..n + (i + 1) * n].to_vec()).collect();
        let off = n + n * n;
        let dt = (0..n).map(|i| s[off + i * nt..off + (i + 1) * nt].to_vec()).collect();
        Ok(Tangent { value, dx, dt })
    }

    /// `gamma_t^{-1}(x)` by Newton iteration seeded at x, falling back to the
    /// reversed flow for ODE surfaces.
    pub fn gamma_inv(&self, t: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check(t, x)?;
        match self.newton(t, x, x.to_vec()) {
            Ok(y) => Ok(y),
            Err(e) => {
                let Some(seed) = self.reverse_flow(t, x) else {
                    return Err(e);
                };
                self.newton(t, x, seed?)
            }
        }
    }

    fn reverse_flow(&self, t: &[f64], x: &[f64]) -> Option<Result<Vec<f64>>> {
        let f = self.rhs(t)?;
        // Integrate from eps = 1 back to 0 via s = 1 - eps.
        let g = |s: f64, y: &[f64], out: &mut [f64]| {
            f(1.0 - s, y, out);
            out.iter_mut().for_each(|v| *v = -*v);
        };
        Some(integrate(&g, x, 1.0, self.ode_tol).map(|fl| fl.end))
    }

    fn newton(&self, t: &[f64], x: &[f64], mut y: Vec<f64>) -> Result<Vec<f64>> {
        let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut last = f64::INFINITY;
        for _ in 0..60 {
            let tg = self.tangent(t, &y)?;
            let r: Vec<f64> = tg.value.iter().zip(x).map(|(a, b)| a - b).collect();
            let rn = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if rn <= 1e-15 * scale || (rn > 0.5 * last && last < 1e-12 * scale) {
                return Ok(y);
            }
            last = rn;
            let a = nalgebra::DMatrix::from_fn(self.n, self.n, |i, l| tg.dx[i][l]);
            let b = nalgebra::DVector::from_vec(r);
            let Some(d) = a.lu().solve(&b) else {
                return Err(Error::Inversion(format!("{}: singular Jacobian at {y:?}", self.name)));
            };
            for (yi, di) in y.iter_mut().zip(d.iter()) {
                *yi -= di;
            }
        }
        if last < 1e-10 * scale {
            return Ok(y);
        }
        Err(Error::Inversion(format!("{}: Newton did not converge (residual {last:e})", self.name)))
    }

    /// `W(t, x) = sum_j t_j d gamma_t / d t_j` at `gamma_t^{-1}(x)`, from the tangent map.
    pub fn w_tangent(&self, t: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let y = self.gamma_inv(t, x)?;
        let tg = self.tangent(t, &y)?;
        Ok(tg.dt.iter().map(|row| row.iter().zip(t).map(|(a, b)| a * b).sum()).collect())
    }

    /// `W_j(t, x) = d gamma_t / d t_j` at `gamma_t^{-1}(x)`, from the tangent map.
    pub fn wj_tangent(&self, j: usize, t: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if j >= self.big_n {
            return Err(Error::Contract(format!("W_j with j = {j} but N = {}", self.big_n)));
        }
        let y = self.gamma_inv(t, x)?;
        let tg = self.tangent(t, &y)?;
        Ok(tg.dt.iter().map(|row| row[j]).collect())
    }
}


/// `Gamma(tau, x) = g_1 o g_2 o ... o g_k (x)`, evaluated right to left;
/// `inverse[i]` replaces factor i by its inverse.
pub fn compose_gamma(gammas: &[&SurfaceMap], taus: &[Vec<f64>], inverse: &[bool], x: &[f64]) -> Result<Vec<f64>> {
    if gammas.len() != taus.len() || gammas.len() != inverse.len() {
        return Err(Error::Contract("compose_gamma needs one parameter and one mask entry per factor".into()));
    }
    let mut y = x.to_vec();
    for i in (0..gammas.len()).rev() {
        let r = if inverse[i] { gammas[i].gamma_inv(&taus[i], &y) } else { gammas[i].gamma(&taus[i], &y) };
        y = r.map_err(|e| Error::DomainExit(format!("factor {i} ({}): {e}", gammas[i].name)))?;
    }
    Ok(y)
}

/// Once-Richardson-extrapolated central difference of `f` at 0.
fn richardson(f: &dyn Fn(f64) -> Result<Vec<f64>>, h: f64) -> Result<Vec<f64>> {
    let d = |h: f64| -> Result<Vec<f64>> {
        let (a, b) = (f(h)?, f(-h)?);
        Ok(a.iter().zip(&b).map(|(p, m)| (p - m) / (2.0 * h)).collect())
    };
    let (d1, d2) = (d(h)?, d(h / 2.0)?);
    Ok(d1.iter().zip(&d2).map(|(a, b)| (4.0 * b - a) / 3.0).collect())
}

/// `W(t, x) = d/d eps at eps = 1 of gamma_{eps t}(gamma_t^{-1}(x))`.
pub fn w_from_gamma(gamma: &SurfaceMap, t: &[f64], x: &[f64], fd_step: f64) -> Result<Vec<f64>> {
    let y = gamma.gamma_inv(t, x)?;
    let g = gamma.pinned(t, &y)?;
    let f = |h: f64| -> Result<Vec<f64>> {
        let tt: Vec<f64> = t.iter().map(|v| v * (1.0 + h)).collect();
        g.gamma(&tt, &y)
    };
    richardson(&f, fd_step)
}

/// `W_j(t, x) = d/ds_j at s = 0 of gamma_{t+s}(gamma_t^{-1}(x))`.
pub fn wj_from_gamma(gamma: &SurfaceMap, j: usize, t: &[f64], x: &[f64], fd_step: f64) -> Result<Vec<f64>> {
    if j >= gamma.big_n {
        return Err(Error::Contract(format!("W_j with j = {j} but N = {}", gamma.big_n)));
    }
    let y = gamma.gamma_inv(t, x)?;
    let g = gamma.pinned(t, &y)?;
    let f = |h: f64| -> Result<Vec<f64>> {
        let mut tt = t.to_vec();
        tt[j] += h;
        g.gamma(&tt, &y)
    };
    richardson(&f, fd_step)
}

/// Residuals of `W = sum_j t_j W_j` and of the integrability identity
/// `dW_j/dt_k - dW_k/dt_j = [W_j, W_k]` at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureResiduals {
    pub w_sum: f64,
    pub integrability: f64,
}

/// Outer step for derivatives of the finite-difference fields themselves.
const OUTER_STEP: f64 = 1e-3;

pub fn structure_residuals(gamma: &SurfaceMap, t: &[f64], x: &[f64], fd_step: f64) -> Result<StructureResiduals> {
    let big_n = gamma.big_n;
    let w = w_from_gamma(gamma, t, x, fd_step)?;
    let wj: Vec<Vec<f64>> = (0..big_n).map(|j| wj_from_gamma(gamma, j, t, x, fd_step)).collect::<Result<_>>()?;
    let mut sum = vec![0.0; gamma.n];
    for (j, v) in wj.iter().enumerate() {
        for (s, c) in sum.iter_mut().zip(v) {
            *s += t[j] * c;
        }
    }
    let w_sum = sum.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut integrability = 0.0f64;
    for j in 0..big_n {
        for k in (j + 1)..big_n {
            let dt = |a: usize, b: usize| -> Result<Vec<f64>> {
                let f = |h: f64| {
                    let mut tt = t.to_vec();
                    tt[b] += h;
                    wj_from_gamma(gamma, a, &tt, x, fd_step)
                };
                richardson(&f, OUTER_STEP)
            };
            let djk = dt(j, k)?;
            let dkj = dt(k, j)?;
            let jac = |a: usize| -> Result<Vec<Vec<f64>>> {
                (0..gamma.n)
                    .map(|l| {
                        let f = |h: f64| {
                            let mut xx = x.to_vec();
                            xx[l] += h;
                            wj_from_gamma(gamma, a, t, &xx, fd_step)
                        };
                        richardson(&f, OUTER_STEP)
                    })
                    .collect()
            };
            let (jj, jk) = (jac(j)?, jac(k)?);
            for i in 0..gamma.n {
                let mut br = 0.0;
                for l in 0..gamma.n {
                    br += wj[j][l] * jk[l][i] - wj[k][l] * jj[l][i];
                }
                integrability = integrability.max((djk[i] - dkj[i] - br).abs());
            }
        }
    }
    Ok(StructureResiduals { w_sum, integrability })
}
