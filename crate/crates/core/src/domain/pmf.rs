use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of a PMF.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Discrete probability mass function over integer-labelled bins.
///
/// Labels are strictly increasing. The meaning of a label depends on the
/// family: minute of day for start times, minutes of duration for charge
/// lengths, event count for daily recharges. When the PMF comes from a fit
/// the raw bin counts are kept next to the probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PmfRepr", into = "PmfRepr")]
pub struct Pmf {
    labels: Vec<u32>,
    probabilities: Vec<f64>,
    counts: Option<Vec<u64>>,
    // cdf[i] = P(label <= labels[i]); forced to 1.0 from the last positive bin on.
    cdf: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PmfRepr {
    labels: Vec<u32>,
    probabilities: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    counts: Option<Vec<u64>>,
}

impl TryFrom<PmfRepr> for Pmf {
    type Error = Error;
    fn try_from(r: PmfRepr) -> Result<Self> {
        let pmf = Pmf::new(r.labels, r.probabilities)?;
        match r.counts {
            Some(c) => pmf.with_counts(c),
            None => Ok(pmf),
        }
    }
}

impl From<Pmf> for PmfRepr {
    fn from(p: Pmf) -> Self {
        PmfRepr { labels: p.labels, probabilities: p.probabilities, counts: p.counts }
    }
}

impl Pmf {
    pub fn new(labels: Vec<u32>, probabilities: Vec<f64>) -> Result<Self> {
        if labels.len() != probabilities.len() {
            return Err(Error::Structural(format!(
                "{} labels but {} probabilities",
                labels.len(),
                probabilities.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::InvalidPmf("no bins".into()));
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPmf("labels are not strictly increasing".into()));
        }
        if let Some(p) = probabilities.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidPmf(format!("mass {p} is negative or not finite")));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidPmf(format!("total mass {total} is not 1")));
        }
        let cdf = cumulative(&probabilities);
        Ok(Pmf { labels, probabilities, counts: None, cdf })
    }

    /// Normalizes raw counts; the counts are kept on the result.
    pub fn from_counts(counts: &[u64], labels: &[u32]) -> Result<Self> {
        if counts.len() != labels.len() {
            return Err(Error::Structural(format!(
                "{} counts but {} labels",
                counts.len(),
                labels.len()
            )));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyDistribution("all bin counts are zero".into()));
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Pmf::new(labels.to_vec(), probs)?.with_counts_unchecked(counts.to_vec()))
    }

    /// Single bin holding all the mass.
    pub fn degenerate(label: u32) -> Self {
        Pmf::new(vec![label], vec![1.0]).expect("single bin is a valid pmf")
    }

    pub fn uniform(labels: Vec<u32>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::EmptyDistribution("no labels".into()));
        }
        Pmf::new(labels, vec![1.0 / n as f64; n])
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(labels: Vec<u32>, weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidPmf("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::EmptyDistribution("all weights are zero".into()));
        }
        Pmf::new(labels, weights.iter().map(|w| w / total).collect())
    }

    fn with_counts(self, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != self.labels.len() {
            return Err(Error::Structural("counts length differs from labels".into()));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidPmf("stored counts are all zero".into()));
        }
        for (c, p) in counts.iter().zip(&self.probabilities) {
            if (*c as f64 / total as f64 - p).abs() > NORMALIZATION_TOL {
                return Err(Error::InvalidPmf("stored counts disagree with probabilities".into()));
            }
        }
        Ok(self.with_counts_unchecked(counts))
    }

    fn with_counts_unchecked(mut self, counts: Vec<u64>) -> Self {
        self.counts = Some(counts);
        self
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn counts(&self) -> Option<&[u64]> {
        self.counts.as_deref()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Mass at `label`, zero when the label is not a bin.
    pub fn mass(&self, label: u32) -> f64 {
        self.labels
            .binary_search(&label)
            .map(|i| self.probabilities[i])
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.labels.iter().copied().zip(self.probabilities.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(l, p)| l as f64 * p).sum()
    }

    /// Smallest label whose cumulative mass reaches `q`.
    pub fn quantile(&self, q: f64) -> u32 {
        let q = q.clamp(0.0, 1.0);
        let i = self.cdf.iter().position(|&c| c >= q - 1e-12).unwrap_or(self.len() - 1);
        self.labels[i]
    }

    /// Label with the largest mass; ties go to the lowest label.
    pub fn mode(&self) -> u32 {
        let mut best = 0;
        for i in 1..self.len() {
            if self.probabilities[i] > self.probabilities[best] {
                best = i;
            }
        }
        self.labels[best]
    }

    /// Inverse-transform draw. Consumes exactly one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.labels[self.index_for(unit_open_closed(rng))]
    }

    /// Bin index selected by `u` in `(0, 1]`: the first bin whose
    /// cumulative mass reaches `u`. A `u` that lands exactly on a boundary
    /// selects the lower bin, and zero-mass bins are never selected.
    pub fn index_for(&self, u: f64) -> usize {
        let i = self.cdf.partition_point(|&c| c < u);
        i.min(self.len() - 1)
    }

    /// Restricts to `labels`, which must be a superset of the support, and
    /// returns the masses in that order.
    pub fn aligned(&self, labels: &[u32]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; labels.len()];
        for (l, p) in self.iter() {
            match labels.binary_search(&l) {
                Ok(i) => out[i] = p,
                Err(_) if p == 0.0 => {}
                Err(_) => {
                    return Err(Error::Structural(format!("label {l} missing from target bins")))
                }
            }
        }
        Ok(out)
    }
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last_pos) = probs.iter().rposition(|&p| p > 0.0) {
        for c in &mut cdf[last_pos..] {
            *c = 1.0;
        }
    }
    cdf
}

/// Uniform variate in `(0, 1]` from a single 64-bit draw.
fn unit_open_closed<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Total variation distance `½·Σ|aᵢ − bᵢ|` between PMFs on identical labels.
pub fn total_variation(a: &Pmf, b: &Pmf) -> Result<f64> {
    if a.labels != b.labels {
        return Err(Error::Structural("total variation needs identical label sets".into()));
    }
    Ok(tv_unchecked(&a.probabilities, &b.probabilities))
}

/// Total variation over the union of both label sets, missing labels
/// counting as zero mass.
pub fn total_variation_union(a: &Pmf, b: &Pmf) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() || j < b.len() {
        let la = a.labels.get(i).copied().unwrap_or(u32::MAX);
        let lb = b.labels.get(j).copied().unwrap_or(u32::MAX);
        if la == lb {
            acc += (a.probabilities[i] - b.probabilities[j]).abs();
            i += 1;
            j += 1;
        } else if la < lb {
            acc += a.probabilities[i];
            i += 1;
        } else {
            acc += b.probabilities[j];
            j += 1;
        }
    }
    (0.5 * acc).min(1.0)
}

fn tv_unchecked(a: &[f64], b: &[f64]) -> f64 {
    (0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()).min(1.0)
}
