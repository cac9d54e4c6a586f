//! Ready-to-run fixture configs for every worked example.

use std::fs;
use std::path::Path;

use mpradon::ccgeom::ChartOptions;
use mpradon::decide::heisenberg::HeisDemo;
use mpradon::decide::{Classification, NewtonMode, NewtonOptions};
use mpradon::dilations::SchemeConfig;
use mpradon::kernels::BumpConfig;
use mpradon::opnorm::transport::TauBox;
use mpradon::opnorm::{Cutoffs, GridSpec};
use mpradon::surfaces::curvature::{CurvatureMode, CurvatureOptions};
use mpradon::vfields::control::log_axis;
use mpradon::vfields::{ControlStatus, FieldConfig, SamplingPlan, VField};
use mpradon::{BumpSpec, Cutoff, DegreeVector, DegreedField, DilationScheme, ParamLattice, Shape, SurfaceMap, UniformGrid};
use serde_json::Value;

use crate::experiments::*;
use crate::{Experiment, Failure};

fn field(coeffs: &[&str], degree: &[i64]) -> FieldConfig {
    DegreedField::new(VField::parse(coeffs, 0).expect("gallery field"), DegreeVector::from_ints(degree))
        .expect("gallery degree")
        .to_config()
}

fn bump(shapes: &[Shape], r: f64) -> BumpSpec {
    BumpSpec::product(shapes, r).expect("gallery bump")
}

fn cfg(b: &BumpSpec) -> BumpConfig {
    b.to_config()
}

fn heisenberg_fields() -> Vec<FieldConfig> {
    vec![field(&["1", "0", "2*x2"], &[1, 0]), field(&["0", "1", "-2*x1"], &[0, 1]), field(&["0", "0", "-4"], &[1, 1])]
}

fn newton(poly: &[(u32, u32)], mode: NewtonMode, expect: Classification) -> Experiment {
    Experiment::Newton(Newton {
        poly: poly.iter().map(|&(e, f)| (e, f, 1, 1)).collect(),
        mode,
        options: NewtonOptions::default(),
        expect: Some(expect),
    })
}

fn chart(fields: Vec<FieldConfig>, x0: Vec<f64>, delta: Vec<f64>) -> Experiment {
    Experiment::CcChart(CcChart {
        fields,
        x0,
        delta,
        chart: ChartOptions::default(),
        samples: 200,
        paths: 500,
        probe_radius: 0.25 / 8.0,
        det_bound: 4.0,
    })
}

fn ao(bump: &BumpSpec, slope_max: Option<f64>, slope_min: Option<f64>, oracle: bool) -> Experiment {
    Experiment::AoDecay(AoDecay {
        surface: SurfaceRef::Inline(SurfaceMap::closed_form("convolution", 1, 1, &["x1 - t1"]).expect("surface").to_config()),
        scheme: SchemeConfig::from_scheme(&DilationScheme::product(1)),
        bump: cfg(bump),
        scales: (0..7).collect(),
        grid: GridSpec { x: UniformGrid::cube(1, -2.0, 2.0, 512), t_panels: 32, t_order: 8 },
        cutoffs: Cutoffs::inner_half(2.0),
        power_tol: 1e-8,
        slope_max,
        slope_min,
        r2_min: slope_max.map(|_| 0.9),
        oracle: oracle.then_some(Oracle { xi_max: None, samples: 4000, slope_rel_tol: 0.05 }),
    })
}

/// `(file stem, experiment, seed)` for every gallery entry.
pub fn entries() -> Vec<(&'static str, Experiment)> {
    let product2 = ParamLattice::product(2).to_config();
    let heis_scheme = SchemeConfig::from_scheme(&DilationScheme::heisenberg());
    let eta3 = bump(&[Shape::Mollifier; 3], 0.25).normalized_to(1.0).expect("normalizable");
    let flat_list = vec![field(&["1", "0"], &[1, 0]), field(&["0", "flat(x1)"], &[0, 1]), field(&["0", "1"], &[0, 2])];
    let flat_bracket = {
        let (a, b) = (flat_list[0].build().expect("field"), flat_list[1].build().expect("field"));
        DegreedField::new(a.field.bracket(&b.field).expect("bracket"), &a.degree + &b.degree).expect("degree").to_config()
    };
    let mut flat_plan = SamplingPlan::standard(2, vec![vec![0.25, 0.0]], 0);
    flat_plan.delta_axes = vec![vec![1.0], log_axis(8, 1e-4)];
    let mollifier = bump(&[Shape::Mollifier], 1.0);
    let counter_bump = bump(&[Shape::Deriv(1)], 0.25);
    let phi = bump(&[Shape::Mollifier], 1.0 / 16.0).normalized_to(1.0).expect("normalizable");
    let psi = bump(&[Shape::Deriv(2)], 1.0).scaled(-1.0);
    vec![
        (
            "synth-delta0-heisenberg",
            Experiment::SynthKernel(SynthKernel {
                scheme: heis_scheme.clone(),
                lattice: product2.clone(),
                bump: cfg(&eta3),
                family: Family::Delta0,
                bound: 3,
                grid: UniformGrid::cube(3, -0.25, 0.25, 32),
                tolerance: 1e-12,
            }),
        ),
        (
            "cancellation-product",
            Experiment::CheckCancellation(CheckCancellation {
                scheme: SchemeConfig::from_scheme(&DilationScheme::product(2)),
                lattice: product2.clone(),
                bump: cfg(&bump(&[Shape::Deriv(1), Shape::Deriv(1)], 0.25)),
                family: Family::Uniform,
                bound: 2,
                quad_tol: 1e-10,
            }),
        ),
        (
            "catalog-roundtrip",
            Experiment::GammaRoundtrip(GammaRoundtrip {
                surfaces: vec![],
                samples: 200,
                t_radius: 0.4,
                x_radius: 0.3,
                ode_tol: 1e-10,
                fd_step: 1e-4,
                tolerance: 1e-6,
                semigroup_eps0: 0.6,
                semigroup_eps: 0.7,
                semigroup_tol: 1e-8,
            }),
        ),
        (
            "curvature-moment-curve",
            Experiment::Curvature(Curvature {
                surface: SurfaceRef::Catalog { catalog: "moment_curve".into() },
                x0: None,
                modes: vec![CurvatureMode::CZ, CurvatureMode::CY, CurvatureMode::CJ],
                order: None,
                cj_order: None,
                options: CurvatureOptions::default(),
                expect_curved: Some(true),
            }),
        ),
        (
            "curvature-degenerate",
            Experiment::Curvature(Curvature {
                surface: SurfaceRef::Catalog { catalog: "degenerate".into() },
                x0: None,
                modes: vec![CurvatureMode::CZ, CurvatureMode::CJ],
                order: None,
                cj_order: None,
                options: CurvatureOptions::default(),
                expect_curved: Some(false),
            }),
        ),
        (
            "leaf-flat",
            Experiment::Leaf(Leaf {
                surface: SurfaceRef::Inline(SurfaceMap::closed_form("flat", 1, 1, &["x1 - flat(t1)"]).expect("surface").to_config()),
                x0: vec![0.0],
                order: 3,
                m_prime: 2,
                t_samples: (0..=6).map(|k| vec![0.3 + 0.05 * k as f64]).collect(),
                tol: 1e-8,
                options: CurvatureOptions::default(),
                expect_member: false,
            }),
        ),
        ("chart-constant", chart(vec![field(&["1", "0"], &[1]), field(&["0", "1"], &[1])], vec![0.3, 0.2], vec![1.0])),
        ("chart-grushin", chart(vec![field(&["1", "0"], &[1]), field(&["0", "x1"], &[1])], vec![1.0, 0.0], vec![1.0])),
        ("chart-heisenberg", chart(heisenberg_fields(), vec![0.0; 3], vec![0.5, 0.25])),
        (
            "control-heisenberg",
            Experiment::Control(Control {
                list: heisenberg_fields(),
                target: field(&["0", "0", "1"], &[1, 1]),
                plan: SamplingPlan::standard(2, vec![vec![0.2, -0.1, 0.3]], 0),
                tol: 1e-8,
                coef_bound: 10.0,
                checks: vec![ControlCheck { lattice: product2.clone(), expect: ControlStatus::Pass }],
                expect_coefficients: Some(vec!["0".into(), "0".into(), "-1/4".into()]),
            }),
        ),
        (
            "control-flat-bracket",
            Experiment::Control(Control {
                list: flat_list,
                target: flat_bracket,
                plan: flat_plan,
                tol: 1e-8,
                coef_bound: 10.0,
                checks: vec![ControlCheck { lattice: product2.clone(), expect: ControlStatus::Fail }],
                expect_coefficients: None,
            }),
        ),
        (
            "control-flag-vs-product",
            Experiment::Control(Control {
                list: vec![field(&["1", "0"], &[1, 0]), field(&["0", "1"], &[0, 1])],
                target: field(&["0", "flat(x1)"], &[2, 0]),
                plan: SamplingPlan::standard(2, vec![vec![0.5, 0.0]], 0),
                tol: 1e-8,
                coef_bound: 10.0,
                checks: vec![
                    ControlCheck {
                        lattice: ParamLattice::custom(2, vec![(vec![-1, 1], 0)], 8).expect("lattice").to_config(),
                        expect: ControlStatus::Pass,
                    },
                    ControlCheck { lattice: product2.clone(), expect: ControlStatus::Fail },
                ],
                expect_coefficients: None,
            }),
        ),
        (
            "generate-list-heisenberg",
            Experiment::GenerateList(GenerateList {
                seeds: heisenberg_fields()[..2].to_vec(),
                m: 3,
                expect_closed: Some(true),
                expect_len: Some(3),
            }),
        ),
        ("newton-s3-t3-st", newton(&[(3, 0), (0, 3), (1, 1)], NewtonMode::Product, Classification::Unbounded)),
        ("newton-s4-t2-st-flag", newton(&[(4, 0), (0, 2), (1, 1)], NewtonMode::Flag, Classification::Bounded)),
        ("newton-s4-t2-st-product", newton(&[(4, 0), (0, 2), (1, 1)], NewtonMode::Product, Classification::Unbounded)),
        ("newton-st-extended", newton(&[(1, 1)], NewtonMode::Product, Classification::UnboundedExtended)),
        (
            "counterexample-s3-t3-st",
            Experiment::Counterexample(Counterexample {
                poly: vec![(3, 0, 1, 1), (0, 3, 1, 1), (1, 1, 1, 1)],
                bump: cfg(&counter_bump),
                tau: 2f64.powi(20),
                truncations: vec![4, 8, 16],
                witness: None,
                ratio_range: (1.6, 2.4),
            }),
        ),
        (
            "counterexample-bounded-control",
            Experiment::Counterexample(Counterexample {
                poly: vec![(2, 0, 1, 1), (0, 2, 1, 1), (1, 1, 1, 1)],
                bump: cfg(&counter_bump),
                tau: 2f64.powi(20),
                truncations: vec![4, 8, 16],
                witness: Some((1, 1)),
                ratio_range: (0.8, 1.25),
            }),
        ),
        ("ao-decay-convolution", ao(&bump(&[Shape::Poly(1)], 0.5), Some(-0.9), None, true)),
        ("ao-decay-no-cancellation", ao(&bump(&[Shape::Mollifier], 0.5), None, Some(-0.1), false)),
        (
            "heisenberg-demo",
            Experiment::Heisenberg(Heisenberg {
                demo: HeisDemo {
                    phi: cfg(&phi),
                    psi: cfg(&psi),
                    m: 4,
                    n: 32,
                    half_width: 4.0,
                    cutoff: Cutoff::new(2.0, 3.0).expect("cutoff"),
                    twist: true,
                },
                power_tol: 1e-8,
                euclidean_tol: 0.01,
                stability_factor: 2.0,
                slope_max: None,
            }),
        ),
        (
            "transport-identity",
            Experiment::Transport(Transport {
                map: vec!["t1".into()],
                weight: cfg(&mollifier),
                tau_box: TauBox::cube(1, -1.0, 1.0, 200, 8),
                grid: UniformGrid::cube(1, -2.5, 2.5, 501),
                mass_tol: 1e-12,
                deltas: vec![0.5, 1.0],
                shifts: [0.01, 0.02, 0.05, 0.1].iter().map(|z| vec![*z]).collect(),
                zetas: vec![],
                reference_is_weight: Some(0.02),
                expect_probe: Some(true),
            }),
        ),
        (
            "transport-square",
            Experiment::Transport(Transport {
                map: vec!["t1^2".into()],
                weight: cfg(&mollifier),
                tau_box: TauBox::cube(1, -1.0, 1.0, 400, 8),
                grid: UniformGrid::cube(1, -0.5, 1.5, 801),
                mass_tol: 1e-12,
                deltas: vec![0.2, 0.4],
                shifts: (1..=8).map(|k| vec![0.005 * 1.6f64.powi(k)]).collect(),
                zetas: (0..8).map(|k| 0.005 * 1.6f64.powi(k)).collect(),
                reference_is_weight: None,
                expect_probe: Some(true),
            }),
        ),
    ]
}

/// Full config document for an entry.
pub fn document(kind: &str, exp: &Experiment, seed: u64) -> Value {
    let mut doc = serde_json::Map::new();
    doc.insert("experiment".into(), Value::from(kind));
    doc.insert("seed".into(), Value::from(seed));
    if let Value::Object(params) = exp.params() {
        doc.extend(params);
    }
    Value::Object(doc)
}

pub fn kind_of(exp: &Experiment) -> &'static str {
    use Experiment::*;
    match exp {
        SynthKernel(_) => "synth-kernel",
        CheckCancellation(_) => "check-cancellation",
        GammaRoundtrip(_) => "gamma-roundtrip",
        Curvature(_) => "curvature",
        CcChart(_) => "cc-chart",
        AoDecay(_) => "ao-decay",
        Newton(_) => "newton",
        Counterexample(_) => "counterexample",
        Heisenberg(_) => "heisenberg",
        Transport(_) => "transport",
        Control(_) => "control",
        Leaf(_) => "leaf",
        GenerateList(_) => "generate-list",
    }
}

/// Writes `<stem>.json` per entry, each validated by reparsing.
pub fn emit(out: &Path) -> Result<Vec<String>, Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::Invalid(format!("cannot create {}: {e}", out.display())))?;
    let mut names = Vec::new();
    for (stem, exp) in entries() {
        let kind = kind_of(&exp);
        let doc = document(kind, &exp, 1);
        crate::load(kind, doc.clone(), None)?;
        let path = out.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&doc).expect("config serializes") + "\n";
        fs::write(&path, text).map_err(|e| Failure::Invalid(format!("cannot write {}: {e}", path.display())))?;
        names.push(format!("{stem}.json"));
    }
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_has_a_valid_fixture() {
        let entries = entries();
        for kind in crate::KINDS {
            assert!(entries.iter().any(|(_, e)| kind_of(e) == *kind), "{kind}");
        }
        for (stem, exp) in entries {
            let kind = kind_of(&exp);
            let (back, seed) = crate::load(kind, document(kind, &exp, 7), None).unwrap_or_else(|_| panic!("{stem}"));
            assert_eq!(seed, 7);
            assert_eq!(back.params(), exp.params(), "{stem}");
        }
    }
}
