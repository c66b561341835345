//! Uncertainty-guided attenuation of change/anomaly score maps and
//! binary-mask evaluation.

use crate::image::ScalarMap;
use crate::Result;

/// Elementwise raw * (1 - uncert); uncert is clamped to [0,1] first.
pub fn attenuate(raw: &ScalarMap, uncert: &ScalarMap) -> Result<ScalarMap> {
    raw.same_shape(uncert)?;
    let data = raw
        .data
        .iter()
        .zip(&uncert.data)
        .map(|(&r, &u)| r * (1.0 - u.clamp(0.0, 1.0)))
        .collect();
    Ok(ScalarMap { width: raw.width, height: raw.height, data })
}

/// 1 where value > threshold (strict), else 0.
pub fn binarize(map: &ScalarMap, threshold: f64) -> ScalarMap {
    map.map(|v| if v > threshold { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, Copy)]
pub struct MaskMetrics {
    pub iou: f64,
    pub f1: f64,
    /// Both masks empty: metrics defined as 1.0 and flagged here.
    pub both_empty: bool,
}

pub fn mask_metrics(pred: &ScalarMap, gt: &ScalarMap) -> Result<MaskMetrics> {
    pred.same_shape(gt)?;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        let (p, g) = (p > 0.5, g > 0.5);
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp + fp + fn_ == 0 {
        return Ok(MaskMetrics { iou: 1.0, f1: 1.0, both_empty: true });
    }
    Ok(MaskMetrics {
        iou: tp as f64 / (tp + fp + fn_) as f64,
        f1: 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64,
        both_empty: false,
    })
}

/// Threshold sweep 0.05, 0.10, ..., 0.95.
pub fn threshold_sweep() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Best F1 over the fixed threshold sweep; returns (threshold, f1).
pub fn best_f1(score: &ScalarMap, gt: &ScalarMap) -> Result<(f64, f64)> {
    let mut best = (threshold_sweep()[0], -1.0);
    for t in threshold_sweep() {
        let m = mask_metrics(&binarize(score, t), gt)?;
        if m.f1 > best.1 {
            best = (t, m.f1);
        }
    }
    Ok(best)
}
