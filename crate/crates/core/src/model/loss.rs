//! Mean foreground soft Dice loss.

use super::CLASS_LABELS;
use crate::dataset::LabelMap;

/// Smoothing term added to numerator and denominator of each soft Dice.
pub const DICE_SMOOTHING: f64 = 1.0;

/// Returns the loss and its gradient w.r.t. the class probabilities
/// (`n_classes x pixels`, class-major).
pub(crate) fn soft_dice_with_grad(probs: &[f64], labels: &LabelMap) -> (f64, Vec<f64>) {
    let px = labels.labels().len();
    let n_classes = probs.len() / px;
    let foreground = (n_classes - 1) as f64;
    let mut grad = vec![0.0; probs.len()];
    let mut loss = 0.0;
    for c in 1..n_classes {
        let target = CLASS_LABELS[c];
        let p = &probs[c * px..(c + 1) * px];
        let mut inter = 0.0;
        let mut psum = 0.0;
        let mut tsum = 0.0;
        for (&pi, &l) in p.iter().zip(labels.labels()) {
            let t = if l == target { 1.0 } else { 0.0 };
            inter += pi * t;
            psum += pi;
            tsum += t;
        }
        let num = 2.0 * inter + DICE_SMOOTHING;
        let den = psum + tsum + DICE_SMOOTHING;
        loss += 1.0 - num / den;
        let g = &mut grad[c * px..(c + 1) * px];
        for (gi, &l) in g.iter_mut().zip(labels.labels()) {
            let t = if l == target { 1.0 } else { 0.0 };
            *gi = -(2.0 * t * den - num) / (den * den) / foreground;
        }
    }
    (loss / foreground, grad)
}
