//! JSON and CSV forms for mixtures, samples and Hermite estimates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, GaussianMixture};
use crate::poly::{FloatPoly, Monomial};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentJson {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureJson {
    pub weights: Vec<f64>,
    pub components: Vec<ComponentJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_denominator_bound: Option<u64>,
}

impl MixtureJson {
    pub fn from_mixture(m: &GaussianMixture) -> Self {
        let components = m
            .components
            .iter()
            .map(|g| {
                let d = g.dim();
                ComponentJson {
                    mean: g.mean().iter().copied().collect(),
                    cov: (0..d).map(|i| (0..d).map(|j| g.cov()[(i, j)]).collect()).collect(),
                }
            })
            .collect();
        MixtureJson { weights: m.weights.clone(), components, weight_denominator_bound: m.weight_denominator_bound }
    }

    pub fn to_mixture(&self) -> Result<GaussianMixture> {
        let comps = self.components.iter().map(|c| Gaussian::from_vecs(&c.mean, &c.cov)).collect::<Result<Vec<_>>>()?;
        GaussianMixture::with_bounds(self.weights.clone(), comps, 0.0, self.weight_denominator_bound)
    }
}

pub fn read_mixture(path: &Path) -> Result<GaussianMixture> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str::<MixtureJson>(&text)?.to_mixture()
}

pub fn write_mixture(path: &Path, m: &GaussianMixture) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(&MixtureJson::from_mixture(m))?)?;
    Ok(())
}

/// Header `x1..xd`, one sample per row.
pub fn write_samples<W: std::io::Write>(w: W, samples: &[Vec<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let d = samples.first().map_or(0, |s| s.len());
    out.write_record((1..=d).map(|i| format!("x{i}")))?;
    for s in samples {
        out.write_record(s.iter().map(|v| format!("{v:e}")))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_samples<R: std::io::Read>(r: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = out.first() {
            let first: &Vec<f64> = first;
            if first.len() != row.len() {
                return Err(Error::DimensionMismatch { left: first.len(), right: row.len() });
            }
        }
        out.push(row);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("sample file has no rows"));
    }
    Ok(out)
}

/// Rows `m, exponents, coefficient` with exponents space-separated.
pub fn write_hermite<W: std::io::Write>(w: W, estimates: &[FloatPoly]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["m", "exponents", "coefficient"])?;
    for (i, p) in estimates.iter().enumerate() {
        for (mono, c) in p.terms() {
            let e: Vec<String> = mono.exponents().iter().map(|x| x.to_string()).collect();
            out.write_record([(i + 1).to_string(), e.join(" "), format!("{c:e}")])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Inverse of [`write_hermite`]; orders absent from the file come back as zero.
pub fn read_hermite<R: std::io::Read>(r: R, d: usize) -> Result<Vec<FloatPoly>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut terms: Vec<Vec<(Monomial, f64)>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Parse(format!("expected 3 fields, got {}", rec.len())));
        }
        let m: usize = rec[0].trim().parse().map_err(|e| Error::Parse(format!("order: {e}")))?;
        if m == 0 {
            return Err(Error::Parse("order must be at least 1".into()));
        }
        let e = rec[1]
            .split_whitespace()
            .map(|x| x.parse::<u32>().map_err(|e| Error::Parse(format!("exponent: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if e.len() != d {
            return Err(Error::DimensionMismatch { left: e.len(), right: d });
        }
        let c: f64 = rec[2].trim().parse().map_err(|e| Error::Parse(format!("coefficient: {e}")))?;
        if terms.len() < m {
            terms.resize(m, Vec::new());
        }
        terms[m - 1].push((Monomial::new(e), c));
    }
    terms.into_iter().map(|t| FloatPoly::from_terms(d, t)).collect()
}
