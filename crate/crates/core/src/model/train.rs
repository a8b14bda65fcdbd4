use crate::error::{Error, Result};
use crate::model::loss::{multiscale_loss, multiscale_loss_grad};
use crate::model::nested::NestedModel;
use crate::model::pyramid::make_pyramid;
use crate::nn::{AdamHyper, AdamState};
use crate::pad::pad_to_multiple;
use crate::tensor::{Scalar, Tensor4};

/// A model paired with its optimizer state.
#[derive(Clone, Debug)]
pub struct Trainer<T> {
    pub model: NestedModel<T>,
    pub adam: AdamState<T>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: NestedModel<T>, hyper: AdamHyper) -> Self {
        let adam = AdamState::new(&model.store, hyper);
        Trainer { model, adam }
    }

    /// Loss and parameter gradients for a batch, without updating anything.
    /// Inputs are reflect-padded to the model's divisor first.
    pub fn loss_and_grad(&mut self, x: &Tensor4<T>, y: &Tensor4<T>) -> Result<f64> {
        if x.shape() != y.shape() {
            return Err(Error::Shape(format!(
                "input {:?} and target {:?} differ",
                x.shape(),
                y.shape()
            )));
        }
        let cfg = self.model.config;
        let (xp, _) = pad_to_multiple(x, cfg.divisor())?;
        let (yp, _) = pad_to_multiple(y, cfg.divisor())?;
        let inputs = make_pyramid(&xp, cfg.levels)?;
        let targets = make_pyramid(&yp, cfg.levels)?;
        let fwd = self.model.forward(&inputs)?;
        let preds = fwd.predictions();
        let target_refs: Vec<&Tensor4<T>> = targets.levels.iter().collect();
        let loss = multiscale_loss(&preds, &target_refs, cfg.loss_kind)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "loss is {loss}; largest parameter magnitude in {}",
                self.worst_param()
            )));
        }
        let grads = multiscale_loss_grad(&preds, &target_refs, cfg.loss_kind)?;
        self.model.backward(&fwd, &grads)?;
        Ok(loss)
    }

    /// Forward, multi-scale loss, backward and one Adam update. Returns the pre-update loss.
    pub fn train_step(&mut self, x: &Tensor4<T>, y: &Tensor4<T>) -> Result<f64> {
        self.model.store.zero_grad();
        let loss = self.loss_and_grad(x, y)?;
        self.adam.step(&mut self.model.store)?;
        Ok(loss)
    }

    /// Id of the parameter with a non-finite value, or else the largest absolute value.
    fn worst_param(&self) -> String {
        let mut worst = ("<none>".to_string(), -1.0f64);
        for p in self.model.store.iter() {
            let m = p
                .value
                .data()
                .iter()
                .map(|v| if v.is_finite() { v.abs().as_f64() } else { f64::INFINITY })
                .fold(0.0, f64::max);
            if m > worst.1 {
                worst = (p.id.clone(), m);
            }
        }
        worst.0
    }
}

/// Inference with padding to the model's divisor and cropping back. Returns `ŷ_1`.
pub fn predict<T: Scalar>(model: &NestedModel<T>, x: &Tensor4<T>) -> Result<Tensor4<T>> {
    let cfg = model.config;
    let (xp, (h, w)) = pad_to_multiple(x, cfg.divisor())?;
    let pyr = make_pyramid(&xp, cfg.levels)?;
    let fwd = model.forward(&pyr)?;
    fwd.traces[0].prediction.crop(0, 0, h, w)
}
