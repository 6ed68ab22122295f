//! Price ingestion, period returns, the empirical return PMF and seeded
//! return paths drawn from it.

use std::io::{Read, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered closing prices with their date labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    labels: Vec<String>,
    prices: Vec<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct PriceRow {
    date: String,
    close: f64,
}

impl PriceSeries {
    pub fn new(labels: Vec<String>, prices: Vec<f64>) -> Result<Self> {
        if labels.len() != prices.len() {
            return Err(Error::LabelMismatch { labels: labels.len(), prices: prices.len() });
        }
        if let Some((index, &value)) =
            prices.iter().enumerate().find(|(_, p)| !(**p > 0.0) || !p.is_finite())
        {
            return Err(Error::NonPositivePrice { index, value });
        }
        if prices.len() < 2 {
            return Err(Error::TooFewPrices(prices.len()));
        }
        Ok(Self { labels, prices })
    }

    /// Series labelled by position (`"0"`, `"1"`, ...).
    pub fn from_prices(prices: Vec<f64>) -> Result<Self> {
        let labels = (0..prices.len()).map(|i| i.to_string()).collect();
        Self::new(labels, prices)
    }

    /// Reads a `date,close` CSV, one row per trading day in ascending order.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("date") || headers.get(1) != Some("close") {
            return Err(Error::Csv(format!(
                "expected header `date,close`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut labels = Vec::new();
        let mut prices = Vec::new();
        for row in rdr.deserialize::<PriceRow>() {
            let row = row?;
            labels.push(row.date);
            prices.push(row.close);
        }
        Self::new(labels, prices)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_reader(file)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for (date, &close) in self.labels.iter().zip(&self.prices) {
            wtr.serialize(PriceRow { date: date.clone(), close })?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Closes `start..=end` as a new series.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "window {start}..={end} invalid for {} closes",
                self.len()
            )));
        }
        Self::new(self.labels[start..=end].to_vec(), self.prices[start..=end].to_vec())
    }

    pub fn first_label(&self) -> &str {
        &self.labels[0]
    }

    pub fn last_label(&self) -> &str {
        &self.labels[self.labels.len() - 1]
    }
}

/// Per-period fractional returns, each strictly greater than -1.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(returns: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) =
            returns.iter().enumerate().find(|(_, r)| !(**r > -1.0) || !r.is_finite())
        {
            return Err(Error::ReturnBelowMinusOne { index, value });
        }
        Ok(Self { returns })
    }

    /// Reads a single-column CSV with header `return`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("return") {
            return Err(Error::Csv("expected header `return`".into()));
        }
        let mut returns = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let field = record.get(0).unwrap_or_default();
            let value: f64 = field
                .parse()
                .map_err(|_| Error::Csv(format!("bad return value `{field}`")))?;
            returns.push(value);
        }
        Self::new(returns)
    }

    pub fn values(&self) -> &[f64] {
        &self.returns
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn min(&self) -> Option<f64> {
        self.returns.iter().copied().reduce(f64::min)
    }

    pub fn max(&self) -> Option<f64> {
        self.returns.iter().copied().reduce(f64::max)
    }
}

/// `returns[k] = (prices[k+1] - prices[k]) / prices[k]`.
pub fn returns_from_prices(prices: &PriceSeries) -> ReturnSeries {
    let returns = prices.prices.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect();
    // Positive prices always give returns > -1.
    ReturnSeries { returns }
}

/// Finite atomic distribution of single-period returns.
///
/// Atoms are strictly increasing in value with strictly positive weights
/// summing to one. The support satisfies `-1 < x_min < 0 < x_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPmf {
    atoms: Vec<(f64, f64)>,
    x_min: f64,
    x_max: f64,
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Serialize, Deserialize)]
struct PmfFile {
    atoms: Vec<[f64; 2]>,
}

impl ReturnPmf {
    /// Builds a PMF from `(value, weight)` pairs. Pairs are sorted by value and
    /// exact duplicates merged.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        Self::build(atoms, true)
    }

    fn build(atoms: impl IntoIterator<Item = (f64, f64)>, require_signs: bool) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().collect();
        if atoms.is_empty() {
            return Err(Error::InvalidPmf("no atoms".into()));
        }
        for &(value, weight) in &atoms {
            if !value.is_finite() || !(value > -1.0) {
                return Err(Error::InvalidPmf(format!("atom value {value} must be finite and > -1")));
            }
            if !(weight > 0.0) || !weight.is_finite() {
                return Err(Error::InvalidPmf(format!("atom weight {weight} must be positive")));
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (value, weight) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == value => last.1 += weight,
                _ => merged.push((value, weight)),
            }
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidPmf(format!("weights sum to {total}, expected 1")));
        }
        let x_min = merged[0].0;
        let x_max = merged[merged.len() - 1].0;
        if require_signs && !(x_min < 0.0 && x_max > 0.0) {
            return Err(Error::SupportSign { x_min, x_max });
        }
        Ok(Self { atoms: merged, x_min, x_max })
    }

    /// Like [`ReturnPmf::from_atoms`] but accepts a one-signed support. The
    /// drawdown bounds need both signs; a one-signed PMF is only usable in
    /// classical-limit objectives and for sampling.
    pub fn from_atoms_any_support(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        Self::build(atoms, false)
    }

    /// True when `-1 < x_min < 0 < x_max`.
    pub fn has_two_sided_support(&self) -> bool {
        self.x_min < 0.0 && self.x_max > 0.0
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.0)
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.1)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = PmfFile { atoms: self.atoms.iter().map(|&(v, w)| [v, w]).collect() };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: PmfFile = serde_json::from_str(s)?;
        Self::from_atoms(file.atoms.into_iter().map(|[v, w]| (v, w)))
    }

    pub(crate) fn sampler(&self) -> PathSampler {
        PathSampler {
            index: WeightedIndex::new(self.weights()).expect("weights validated at construction"),
        }
    }
}

/// Each distinct return becomes an atom weighted by its multiplicity over n.
pub fn estimate_pmf(returns: &ReturnSeries) -> Result<ReturnPmf> {
    if returns.is_empty() {
        return Err(Error::EmptyReturns);
    }
    let mut sorted = returns.values().to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut atoms: Vec<(f64, usize)> = Vec::new();
    for value in sorted {
        match atoms.last_mut() {
            Some(last) if last.0 == value => last.1 += 1,
            _ => atoms.push((value, 1)),
        }
    }
    ReturnPmf::from_atoms(atoms.into_iter().map(|(v, c)| (v, c as f64 / n)))
}

/// Returns drawn i.i.d. from a [`ReturnPmf`], tagged with the seed and path
/// index that determine them.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPath {
    pub values: Vec<f64>,
    pub seed: u64,
    pub path_index: u64,
}

pub(crate) struct PathSampler {
    index: WeightedIndex<f64>,
}

impl PathSampler {
    /// Fills `out` with atom indices for path `path_index`. Every path owns the
    /// ChaCha stream numbered by its index, so a path never depends on which
    /// other paths were drawn or in what order.
    pub(crate) fn fill_indices(&self, seed: u64, path_index: u64, out: &mut [u32]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        for slot in out.iter_mut() {
            *slot = self.index.sample(&mut rng) as u32;
        }
    }
}

pub fn sample_path(pmf: &ReturnPmf, horizon: usize, seed: u64, path_index: u64) -> Result<ReturnPath> {
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    let mut idx = vec![0u32; horizon];
    pmf.sampler().fill_indices(seed, path_index, &mut idx);
    let values = idx.iter().map(|&i| pmf.atoms[i as usize].0).collect();
    Ok(ReturnPath { values, seed, path_index })
}
