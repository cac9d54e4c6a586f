//! Small shared helpers: rational parsing, seeded RNGs, least-squares lines.

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dilations::Rational;
use crate::error::{Error, Result};

/// A rational as written in a config: an integer, a string like `"3/2"`, or a
/// decimal float that must be exactly representable with a small denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RationalRepr {
    Int(i64),
    Text(String),
    Float(f64),
}

impl RationalRepr {
    pub fn to_rational(&self) -> Result<Rational> {
        match self {
            Self::Int(v) => Ok(Rational::from_integer(*v)),
            Self::Text(s) => parse_rational(s),
            Self::Float(f) => float_to_rational(*f),
        }
    }
}

impl From<Rational> for RationalRepr {
    fn from(q: Rational) -> Self {
        if q.is_integer() {
            Self::Int(*q.numer())
        } else {
            Self::Text(q.to_string())
        }
    }
}

/// Parses `"p"`, `"p/q"` or a finite decimal such as `"0.125"`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Validation(format!("not a rational number: {s:?}"));
    if let Some((p, q)) = s.split_once('/') {
        let p: i64 = p.trim().parse().map_err(|_| bad())?;
        let q: i64 = q.trim().parse().map_err(|_| bad())?;
        if q == 0 {
            return Err(bad());
        }
        return Ok(Rational::new(p, q));
    }
    if let Some((ip, fp)) = s.split_once('.') {
        if fp.len() > 15 || !fp.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let neg = ip.starts_with('-');
        let ipv: i64 = if ip.is_empty() || ip == "-" { 0 } else { ip.parse().map_err(|_| bad())? };
        let den = 10i64.pow(fp.len() as u32);
        let fpv: i64 = if fp.is_empty() { 0 } else { fp.parse().map_err(|_| bad())? };
        let mag = ipv.abs() * den + fpv;
        return Ok(Rational::new(if neg { -mag } else { mag }, den));
    }
    s.parse::<i64>().map(Rational::from_integer).map_err(|_| bad())
}

fn float_to_rational(f: f64) -> Result<Rational> {
    if !f.is_finite() {
        return Err(Error::Validation(format!("non-finite rational {f}")));
    }
    parse_rational(&format!("{f}"))
}

/// Best rational approximation with denominator at most `max_den`, by
/// continued fractions. Returns `None` if the residual exceeds `tol`.
pub fn rationalize(x: f64, max_den: i128, tol: f64) -> Option<Ratio<i128>> {
    if !x.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut r = x;
    for _ in 0..40 {
        let a = r.floor();
        if a.abs() > 1e15 {
            break;
        }
        let ai = a as i128;
        let h2 = ai * h1 + h0;
        let k2 = ai * k1 + k0;
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if ((h1 as f64) / (k1 as f64) - x).abs() <= tol {
            return Some(Ratio::new(h1, k1));
        }
        let frac = r - a;
        if frac.abs() < 1e-300 {
            break;
        }
        r = 1.0 / frac;
    }
    if k1 != 0 && ((h1 as f64) / (k1 as f64) - x).abs() <= tol {
        Some(Ratio::new(h1, k1))
    } else {
        None
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for sub-task `k` of a seeded run.
pub fn substream(seed: u64, k: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17))
}

/// Least-squares line `y = slope x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Fit(format!("need at least two points, got {}", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Fit("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(LineFit { slope, intercept, r2 })
}

/// Max absolute entry of a slice, 0 for an empty slice.
pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rationals() {
        assert_eq!(parse_rational("3/2").unwrap(), Rational::new(3, 2));
        assert_eq!(parse_rational("-0.125").unwrap(), Rational::new(-1, 8));
        assert_eq!(parse_rational("7").unwrap(), Rational::from_integer(7));
        assert!(parse_rational("x").is_err());
        assert!(parse_rational("1/0").is_err());
    }

    #[test]
    fn rationalize_recovers_quarter() {
        assert_eq!(rationalize(-0.25, 1000, 1e-12), Some(Ratio::new(-1, 4)));
        assert_eq!(rationalize(1.0 / 3.0, 1000, 1e-12), Some(Ratio::new(1, 3)));
        assert_eq!(rationalize(std::f64::consts::PI, 100, 1e-12), None);
    }

    #[test]
    fn line_fit_exact() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = fit_line(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 2.0).abs() < 1e-14 && f.r2 > 0.999_999);
    }
}
