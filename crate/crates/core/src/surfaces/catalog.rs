//! The WSpec catalog: ten surfaces with closed forms where one exists, base
//! points, and the orders at which their curvature verdicts are calibrated.

use std::collections::BTreeMap;

use super::{SurfaceMap, WSpec, DEFAULT_ODE_TOL};
use crate::error::Result;
use crate::vfields::VField;

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub w: WSpec,
    /// Independently derived `gamma_t(x)`, when elementary.
    pub closed_form: Option<SurfaceMap>,
    pub x0: Vec<f64>,
    /// `(M, M')` for CZ.
    pub cz_order: (u32, u32),
    /// Bound on `|beta|` for CJ.
    pub cj_order: u32,
    /// Expected verdict of both checks.
    pub curved: bool,
}

impl CatalogEntry {
    pub fn surface(&self) -> SurfaceMap {
        SurfaceMap::from_w(self.name, self.w.clone(), DEFAULT_ODE_TOL)
    }
}

fn wspec(n: usize, big_n: usize, terms: &[(&[u32], &[&str])]) -> Result<WSpec> {
    let mut map = BTreeMap::new();
    for (a, f) in terms {
        map.insert(a.to_vec(), VField::parse(f, 0)?);
    }
    WSpec::new(n, big_n, map)
}

#[allow(clippy::type_complexity)]
const ENTRIES: &[(&str, usize, usize, &[(&[u32], &[&str])], Option<&[&str]>, &[f64], (u32, u32), u32, bool)] = &[
    ("translation", 1, 1, &[(&[1], &["1"])], Some(&["x1 + t1"]), &[0.0], (1, 1), 3, true),
    ("dilation", 1, 1, &[(&[1], &["x1"])], Some(&["x1*exp(t1)"]), &[0.5], (1, 1), 3, true),
    ("square", 1, 1, &[(&[2], &["1"])], Some(&["x1 + 1/2*t1^2"]), &[0.0], (2, 1), 3, true),
    (
        "plane",
        2,
        2,
        &[(&[1, 0], &["1", "0"]), (&[0, 1], &["0", "1"])],
        Some(&["x1 + t1", "x2 + t2"]),
        &[0.0, 0.0],
        (1, 1),
        3,
        true,
    ),
    (
        "heisenberg",
        3,
        2,
        &[(&[1, 0], &["1", "0", "2*x2"]), (&[0, 1], &["0", "1", "-2*x1"])],
        Some(&["x1 + t1", "x2 + t2", "x3 + 2*t1*x2 - 2*t2*x1"]),
        &[0.0, 0.0, 0.0],
        (1, 2),
        3,
        true,
    ),
    (
        "grushin",
        2,
        2,
        &[(&[1, 0], &["1", "0"]), (&[0, 1], &["0", "x1"])],
        Some(&["x1 + t1", "x2 + t2*x1 + 1/2*t1*t2"]),
        &[0.0, 0.0],
        (1, 2),
        3,
        true,
    ),
    (
        "moment_curve",
        2,
        1,
        &[(&[1], &["1", "0"]), (&[2], &["0", "x1"])],
        Some(&["x1 + t1", "x2 + 1/2*t1^2*x1 + 1/3*t1^3"]),
        &[0.0, 0.0],
        (2, 2),
        3,
        true,
    ),
    ("mixed", 1, 2, &[(&[1, 1], &["1"])], Some(&["x1 + 1/2*t1*t2"]), &[0.0], (2, 1), 3, true),
    ("degenerate", 2, 1, &[(&[1], &["1", "0"])], Some(&["x1 + t1", "x2"]), &[0.0, 0.0], (3, 3), 3, false),
    ("flat", 2, 1, &[(&[1], &["1", "0"]), (&[2], &["0", "flat(x1)"])], None, &[0.0, 0.0], (3, 3), 3, false),
];

/// The ten catalog surfaces, in a fixed order.
pub fn wspec_catalog() -> Vec<CatalogEntry> {
    ENTRIES
        .iter()
        .map(|&(name, n, big_n, terms, closed, x0, cz_order, cj_order, curved)| {
            let w = wspec(n, big_n, terms).expect("catalog WSpec is well formed");
            let closed_form = closed.map(|c| SurfaceMap::closed_form(name, n, big_n, c).expect("catalog closed form parses"));
            CatalogEntry { name, w, closed_form, x0: x0.to_vec(), cz_order, cj_order, curved }
        })
        .collect()
}

pub fn catalog_entry(name: &str) -> Option<CatalogEntry> {
    wspec_catalog().into_iter().find(|e| e.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_has_ten_distinct_entries() {
        let c = wspec_catalog();
        assert_eq!(c.len(), 10);
        let names: std::collections::BTreeSet<_> = c.iter().map(|e| e.name).collect();
        assert_eq!(names.len(), 10);
    }
}
