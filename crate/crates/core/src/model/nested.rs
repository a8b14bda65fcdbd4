use crate::error::{Error, Result};
use crate::model::config::NestedConfig;
use crate::model::pyramid::Pyramid;
use crate::model::subnet::{SubNet, SubnetTrace};
use crate::nn::ParamStore;
use crate::rng::derive_seed;
use crate::tensor::{Scalar, Tensor4};

/// How coarse decoder features reach the finer encoders during a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Transfer {
    #[default]
    Normal,
    /// Every transferred feature map replaced by zeros of the same shape.
    Zeroed,
    /// Fusion sites skipped entirely (residual mode only).
    Disabled,
}

/// N subnetworks sharing one parameter store; `subnets[0]` is level 1 (finest).
#[derive(Clone, Debug)]
pub struct NestedModel<T> {
    pub config: NestedConfig,
    pub store: ParamStore<T>,
    subnets: Vec<SubNet>,
}

/// Traces of one coarse-to-fine sweep, indexed by level - 1.
#[derive(Clone, Debug)]
pub struct NestedForward<T> {
    pub traces: Vec<SubnetTrace<T>>,
    transfer: Transfer,
}

impl<T: Scalar> NestedForward<T> {
    /// `ŷ_1..ŷ_N`.
    pub fn predictions(&self) -> Vec<&Tensor4<T>> {
        self.traces.iter().map(|t| &t.prediction).collect()
    }
}

pub fn build_nested<T: Scalar>(config: NestedConfig, seed: u64) -> Result<NestedModel<T>> {
    NestedModel::build(config, seed)
}

pub fn count_params<T: Scalar>(model: &NestedModel<T>) -> usize {
    model.store.count_trainable()
}

impl<T: Scalar> NestedModel<T> {
    pub fn build(config: NestedConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut subnets = Vec::with_capacity(config.levels);
        for level in 1..=config.levels {
            subnets.push(SubNet::build(&mut store, &config, level, derive_seed(seed, level as u64))?);
        }
        Ok(NestedModel {
            config,
            store,
            subnets,
        })
    }

    pub fn levels(&self) -> usize {
        self.subnets.len()
    }

    pub fn subnet(&self, level: usize) -> &SubNet {
        &self.subnets[level - 1]
    }

    pub fn fusion_sites(&self) -> usize {
        self.subnets.iter().map(SubNet::fusion_sites).sum()
    }

    /// Same architecture and values in another precision.
    pub fn cast<U: Scalar>(&self) -> NestedModel<U> {
        NestedModel {
            config: self.config,
            store: self.store.cast(),
            subnets: self.subnets.clone(),
        }
    }

    /// Runs subnetwork `n` alone. For `n < N` the coarser prediction and trace are required;
    /// for `n = N` both must be absent.
    pub fn subnet_forward(
        &self,
        n: usize,
        x_n: &Tensor4<T>,
        coarse_pred: Option<&Tensor4<T>>,
        coarse_trace: Option<&SubnetTrace<T>>,
    ) -> Result<SubnetTrace<T>> {
        if n == 0 || n > self.levels() {
            return Err(Error::Contract(format!("no level {n} in a {}-level model", self.levels())));
        }
        let coarsest = n == self.levels();
        if coarsest != coarse_pred.is_none() || coarsest != coarse_trace.is_none() {
            return Err(Error::Contract(format!(
                "level {n}: coarse prediction and trace must be {} for this level",
                if coarsest { "absent" } else { "present" }
            )));
        }
        let feats = coarse_trace.map(|t| &t.decoder_feats[..]);
        self.subnets[n - 1].forward(&self.store, x_n, coarse_pred, feats)
    }

    pub fn forward(&self, pyramid: &Pyramid<T>) -> Result<NestedForward<T>> {
        self.forward_with(pyramid, Transfer::Normal)
    }

    /// Coarse-to-fine sweep from level N down to level 1.
    pub fn forward_with(&self, pyramid: &Pyramid<T>, transfer: Transfer) -> Result<NestedForward<T>> {
        let levels = self.levels();
        if pyramid.len() != levels {
            return Err(Error::Contract(format!(
                "pyramid has {} levels, model has {levels}",
                pyramid.len()
            )));
        }
        let mut rev: Vec<SubnetTrace<T>> = Vec::with_capacity(levels);
        for n in (1..=levels).rev() {
            let coarse = rev.last();
            let zeros: Option<Vec<Tensor4<T>>> = match (transfer, coarse) {
                (Transfer::Zeroed, Some(c)) => {
                    Some(c.decoder_feats.iter().map(|d| Tensor4::zeros(d.shape())).collect())
                }
                _ => None,
            };
            let feats = match (transfer, coarse) {
                (_, None) | (Transfer::Disabled, _) => None,
                (Transfer::Zeroed, Some(_)) => zeros.as_deref(),
                (Transfer::Normal, Some(c)) => Some(&c.decoder_feats[..]),
            };
            let trace = self.subnets[n - 1].forward(
                &self.store,
                pyramid.level(n),
                coarse.map(|c| &c.prediction),
                feats,
            )?;
            rev.push(trace);
        }
        rev.reverse();
        Ok(NestedForward { traces: rev, transfer })
    }

    /// Back-propagates per-level prediction gradients, accumulating into parameter grads.
    pub fn backward(&mut self, fwd: &NestedForward<T>, d_preds: &[Tensor4<T>]) -> Result<()> {
        let levels = self.levels();
        if d_preds.len() != levels || fwd.traces.len() != levels {
            return Err(Error::Contract(format!(
                "backward needs {levels} prediction gradients and traces"
            )));
        }
        let depth = self.config.unet_depth;
        let mut pred_extra: Vec<Option<Tensor4<T>>> = vec![None; levels];
        let mut feat_extra: Vec<Vec<Option<Tensor4<T>>>> = vec![vec![None; depth]; levels];
        for n in 1..=levels {
            let mut d_pred = d_preds[n - 1].clone();
            if let Some(extra) = pred_extra[n - 1].take() {
                d_pred.add_assign(&extra)?;
            }
            let extra = std::mem::take(&mut feat_extra[n - 1]);
            let grads = self.subnets[n - 1].backward(&mut self.store, &fwd.traces[n - 1], &d_pred, &extra)?;
            if n < levels {
                pred_extra[n] = grads.coarse_pred;
                if fwd.transfer == Transfer::Normal {
                    feat_extra[n] = grads.coarse_feats;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::FusionMode;
    use crate::model::pyramid::make_pyramid;

    fn tiny(levels: usize, mode: FusionMode) -> NestedConfig {
        NestedConfig {
            levels,
            unet_depth: 2,
            base_channels: 4,
            in_channels: 2,
            out_channels: 2,
            fusion_mode: mode,
            ..NestedConfig::default()
        }
    }

    fn image(shape: [usize; 4], salt: f64) -> Tensor4<f64> {
        Tensor4::from_fn(shape, |[a, b, c, d]| 0.5 + 0.4 * ((a * 3 + b * 5 + c * 7 + d * 11) as f64 * 0.31 + salt).sin())
    }

    #[test]
    fn single_level_has_no_fusion_sites() {
        let m = NestedModel::<f32>::build(tiny(1, FusionMode::Residual), 1).unwrap();
        assert_eq!(m.fusion_sites(), 0);
        assert!(!m.store.iter().any(|p| p.id.contains("fuse")));
    }

    #[test]
    fn coarsest_level_has_no_sites() {
        let m = NestedModel::<f32>::build(tiny(3, FusionMode::Residual), 1).unwrap();
        assert_eq!(m.subnet(1).fusion_sites(), 2);
        assert_eq!(m.subnet(2).fusion_sites(), 2);
        assert_eq!(m.subnet(3).fusion_sites(), 0);
    }

    #[test]
    fn build_is_deterministic() {
        let a = NestedModel::<f32>::build(tiny(2, FusionMode::Concat), 9).unwrap();
        let b = NestedModel::<f32>::build(tiny(2, FusionMode::Concat), 9).unwrap();
        assert_eq!(a.store, b.store);
        let c = NestedModel::<f32>::build(tiny(2, FusionMode::Concat), 10).unwrap();
        assert_ne!(a.store, c.store);
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = NestedConfig { base_channels: 0, ..tiny(2, FusionMode::Residual) };
        assert!(matches!(NestedModel::<f32>::build(bad, 0), Err(Error::Config(_))));
    }

    #[test]
    fn prediction_shapes_follow_pyramid() {
        let cfg = NestedConfig { levels: 3, base_channels: 2, ..tiny(3, FusionMode::Residual) };
        let m = NestedModel::<f32>::build(cfg, 4).unwrap();
        let x = image([1, 2, 96, 96], 0.0).cast::<f32>();
        let p = make_pyramid(&x, 3).unwrap();
        let f = m.forward(&p).unwrap();
        let dims: Vec<_> = f.predictions().iter().map(|t| (t.height(), t.width())).collect();
        assert_eq!(dims, vec![(96, 96), (48, 48), (24, 24)]);
        let again = m.forward(&p).unwrap();
        for (a, b) in f.predictions().iter().zip(again.predictions()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn mirrored_indexing_aligns_fusion_sites() {
        let m = NestedModel::<f64>::build(tiny(2, FusionMode::Residual), 3).unwrap();
        let x = image([1, 2, 16, 16], 0.2);
        let p = make_pyramid(&x, 2).unwrap();
        let f = m.forward(&p).unwrap();
        let (fine, coarse) = (&f.traces[0], &f.traces[1]);
        for i in 1..=2 {
            assert_eq!(fine.encoder_feats[i].height(), 16 >> i);
            assert_eq!(coarse.decoder_feats[i - 1].height(), fine.encoder_feats[i].height());
            assert_eq!(coarse.decoder_feats[i - 1].width(), fine.encoder_feats[i].width());
        }
    }

    #[test]
    fn subnet_forward_checks_coarse_inputs() {
        let m = NestedModel::<f64>::build(tiny(2, FusionMode::Residual), 3).unwrap();
        let x = image([1, 2, 16, 16], 0.2);
        let p = make_pyramid(&x, 2).unwrap();
        let coarse = m.subnet_forward(2, p.level(2), None, None).unwrap();
        assert!(matches!(m.subnet_forward(1, p.level(1), None, None), Err(Error::Contract(_))));
        assert!(matches!(
            m.subnet_forward(2, p.level(2), Some(&coarse.prediction), Some(&coarse)),
            Err(Error::Contract(_))
        ));
        let fine = m.subnet_forward(1, p.level(1), Some(&coarse.prediction), Some(&coarse)).unwrap();
        let full = m.forward(&p).unwrap();
        assert_eq!(fine.prediction, full.traces[0].prediction);
    }

    #[test]
    fn coarsest_output_independent_of_fusion_mode() {
        let r = NestedModel::<f64>::build(tiny(2, FusionMode::Residual), 5).unwrap();
        let c = NestedModel::<f64>::build(tiny(2, FusionMode::Concat), 5).unwrap();
        let x = image([1, 2, 8, 8], 0.9);
        let p = make_pyramid(&x, 2).unwrap();
        let fr = r.forward(&p).unwrap();
        let fc = c.forward(&p).unwrap();
        assert_eq!(fr.traces[1].prediction, fc.traces[1].prediction);
        assert_ne!(fr.traces[0].prediction, fc.traces[0].prediction);
    }

    #[test]
    fn zeroed_residual_transfer_matches_disabled_fusion() {
        let m = NestedModel::<f32>::build(tiny(3, FusionMode::Residual), 8).unwrap();
        let x = image([2, 2, 32, 32], 0.4).cast::<f32>();
        let p = make_pyramid(&x, 3).unwrap();
        let zeroed = m.forward_with(&p, Transfer::Zeroed).unwrap();
        let disabled = m.forward_with(&p, Transfer::Disabled).unwrap();
        for (a, b) in zeroed.predictions().iter().zip(disabled.predictions()) {
            let bits = |t: &Tensor4<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        let normal = m.forward(&p).unwrap();
        assert_ne!(normal.traces[0].prediction, zeroed.traces[0].prediction);
    }

    #[test]
    fn disabled_transfer_rejected_in_concat_mode() {
        let m = NestedModel::<f32>::build(tiny(2, FusionMode::Concat), 8).unwrap();
        let x = Tensor4::<f32>::zeros([1, 2, 8, 8]);
        let p = make_pyramid(&x, 2).unwrap();
        assert!(matches!(m.forward_with(&p, Transfer::Disabled), Err(Error::Contract(_))));
    }

    #[test]
    fn level_count_mismatch_rejected() {
        let m = NestedModel::<f32>::build(tiny(2, FusionMode::Residual), 8).unwrap();
        let x = Tensor4::<f32>::zeros([1, 2, 8, 8]);
        let p = make_pyramid(&x, 1).unwrap();
        assert!(matches!(m.forward(&p), Err(Error::Contract(_))));
    }
}
