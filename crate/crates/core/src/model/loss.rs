//! Multi-scale content loss: sum over levels of the per-level mean error.

use crate::error::{Error, Result};
use crate::model::config::LossKind;
use crate::tensor::{Scalar, Tensor4};

fn check_pairs<T: Scalar>(preds: &[&Tensor4<T>], targets: &[&Tensor4<T>]) -> Result<()> {
    if preds.len() != targets.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    for (n, (p, t)) in preds.iter().zip(targets).enumerate() {
        if p.shape() != t.shape() {
            return Err(Error::Contract(format!(
                "level {}: prediction {:?} vs target {:?}",
                n + 1,
                p.shape(),
                t.shape()
            )));
        }
    }
    Ok(())
}

/// Sum over levels of mean |p - t| (L1) or mean (p - t)^2 (L2), accumulated in f64.
pub fn multiscale_loss<T: Scalar>(preds: &[&Tensor4<T>], targets: &[&Tensor4<T>], kind: LossKind) -> Result<f64> {
    check_pairs(preds, targets)?;
    let mut total = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        let sum: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(&a, &b)| {
                let d = a.as_f64() - b.as_f64();
                match kind {
                    LossKind::L1 => d.abs(),
                    LossKind::L2 => d * d,
                }
            })
            .sum();
        total += sum / p.len().max(1) as f64;
    }
    Ok(total)
}

/// Gradient of [`multiscale_loss`] w.r.t. each prediction. The L1 subgradient at zero is 0.
pub fn multiscale_loss_grad<T: Scalar>(
    preds: &[&Tensor4<T>],
    targets: &[&Tensor4<T>],
    kind: LossKind,
) -> Result<Vec<Tensor4<T>>> {
    check_pairs(preds, targets)?;
    Ok(preds
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            let inv = T::of(1.0 / p.len().max(1) as f64);
            let two_inv = inv + inv;
            let mut g = Tensor4::zeros(p.shape());
            for ((gv, &a), &b) in g.data_mut().iter_mut().zip(p.data()).zip(t.data()) {
                let d = a - b;
                *gv = match kind {
                    LossKind::L1 if d > T::zero() => inv,
                    LossKind::L1 if d < T::zero() => -inv,
                    LossKind::L1 => T::zero(),
                    LossKind::L2 => d * two_inv,
                };
            }
            g
        })
        .collect())
}
