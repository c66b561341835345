//! Uncertainty-quality metrics: sparsification curves, AUSE, Pearson.

use crate::image::ScalarMap;
use crate::{Error, Result};

pub const SPARSIFICATION_BINS: usize = 100;

#[derive(Debug, Clone)]
pub struct SparsificationCurve {
    /// Removal fractions 0.00, 0.01, ..., 0.99.
    pub fractions: Vec<f64>,
    /// Mean remaining error at each fraction, normalized by the full mean.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct Pearson {
    pub value: f64,
    /// True when either input had zero variance.
    pub degenerate: bool,
}

/// Removal order: descending ranking; among ties the higher pixel index
/// is removed first, so the lower index is retained longer.
fn removal_order(ranking: &ScalarMap) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..ranking.data.len()).collect();
    idx.sort_by(|&a, &b| {
        ranking.data[b]
            .total_cmp(&ranking.data[a])
            .then(b.cmp(&a))
    });
    idx
}

pub fn sparsification_curve(error: &ScalarMap, ranking: &ScalarMap) -> Result<SparsificationCurve> {
    error.same_shape(ranking)?;
    let n = error.data.len();
    let total: f64 = error.data.iter().sum();
    if total <= 0.0 {
        return Err(Error::Invalid("error map mean is zero; normalization undefined".into()));
    }
    let full_mean = total / n as f64;
    let order = removal_order(ranking);
    // prefix[i] = sum of errors of the first i removed pixels
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &i in &order {
        acc += error.data[i];
        prefix.push(acc);
    }
    let mut fractions = Vec::with_capacity(SPARSIFICATION_BINS);
    let mut values = Vec::with_capacity(SPARSIFICATION_BINS);
    for b in 0..SPARSIFICATION_BINS {
        let removed = b * n / SPARSIFICATION_BINS;
        let retained = n - removed;
        let mean = (total - prefix[removed]) / retained as f64;
        fractions.push(b as f64 / SPARSIFICATION_BINS as f64);
        values.push(mean / full_mean);
    }
    Ok(SparsificationCurve { fractions, values })
}

/// Area between the uncertainty-ranked and oracle-ranked sparsification
/// curves, as the mean difference over bins.
pub fn ause(error: &ScalarMap, uncertainty: &ScalarMap) -> Result<f64> {
    let by_unc = sparsification_curve(error, uncertainty)?;
    let oracle = sparsification_curve(error, error)?;
    let sum: f64 = by_unc
        .values
        .iter()
        .zip(&oracle.values)
        .map(|(u, o)| u - o)
        .sum();
    Ok(sum / SPARSIFICATION_BINS as f64)
}

pub fn pearson(a: &ScalarMap, b: &ScalarMap) -> Result<Pearson> {
    a.same_shape(b)?;
    let n = a.data.len() as f64;
    let ma = a.mean();
    let mb = b.mean();
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (&x, &y) in a.data.iter().zip(&b.data) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let _ = n;
    if saa == 0.0 || sbb == 0.0 {
        return Ok(Pearson { value: 0.0, degenerate: true });
    }
    Ok(Pearson { value: sab / (saa.sqrt() * sbb.sqrt()), degenerate: false })
}

/// Pearson over values pooled from several maps.
pub fn pearson_pooled(pairs: &[(&ScalarMap, &ScalarMap)]) -> Result<Pearson> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (x, y) in pairs {
        x.same_shape(y)?;
        a.extend_from_slice(&x.data);
        b.extend_from_slice(&y.data);
    }
    let w = a.len();
    pearson(
        &ScalarMap { width: w, height: 1, data: a },
        &ScalarMap { width: w, height: 1, data: b },
    )
}
