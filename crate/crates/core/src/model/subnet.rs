//! One pyramid level: a U-Net whose encoder stages can absorb a coarser level's decoder features.
//!
//! Stage `i` of encoder and decoder both run at `h / 2^i` (mirrored indexing), so decoder
//! feature `D_{i-1}` of level `n + 1` lines up with encoder feature `E_i` of level `n`.

use crate::error::{Error, Result};
use crate::model::config::{FusionMode, NestedConfig};
use crate::model::fusion::{fuse_features, fuse_features_backward};
use crate::nn::{
    he_init, pool_down2x, pool_down2x_backward, relu_backward, relu_in_place, upsample2x,
    upsample2x_backward, Conv2d, ParamId, ParamStore,
};
use crate::rng::derive_seed;
use crate::tensor::{Scalar, Tensor4};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FusionSite {
    pub mode: FusionMode,
    /// 1x1 bias-free projection (residual mode only).
    pub projection: Option<ParamId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubNet {
    pub level: usize,
    pub depth: usize,
    pub image_channels: usize,
    /// Channels of the upsampled coarse prediction appended to the input (0 at the coarsest level).
    pub coarse_channels: usize,
    widths: Vec<usize>,
    enc_widths: Vec<usize>,
    enc: Vec<[Conv2d; 2]>,
    sites: Vec<Option<FusionSite>>,
    dec_up: Vec<Conv2d>,
    dec_merge: Vec<Conv2d>,
    out: Conv2d,
}

/// Intermediate activations kept for the backward pass.
#[derive(Clone, Debug)]
struct Tape<T> {
    input: Tensor4<T>,
    stage_in: Vec<Tensor4<T>>,
    act0: Vec<Tensor4<T>>,
    raw: Vec<Tensor4<T>>,
    argmax: Vec<Vec<u32>>,
    coarse_used: Vec<Option<Tensor4<T>>>,
    up_in: Vec<Tensor4<T>>,
    up_act: Vec<Tensor4<T>>,
    merged: Vec<Tensor4<T>>,
}

/// Everything one subnetwork produced on a forward pass.
#[derive(Clone, Debug)]
pub struct SubnetTrace<T> {
    /// `E_0..E_I`, after fusion.
    pub encoder_feats: Vec<Tensor4<T>>,
    /// `D_0..D_I`; `D_I` is the bottleneck, identical to `E_I`.
    pub decoder_feats: Vec<Tensor4<T>>,
    pub prediction: Tensor4<T>,
    tape: Tape<T>,
}

#[derive(Clone, Debug)]
pub struct SubnetGrads<T> {
    /// Gradient w.r.t. the coarser level's prediction (before upsampling).
    pub coarse_pred: Option<Tensor4<T>>,
    /// Gradient w.r.t. the coarser level's `D_0..D_{I-1}`, per fusion site.
    pub coarse_feats: Vec<Option<Tensor4<T>>>,
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor4<T>>, g: Tensor4<T>) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn conv_relu<T: Scalar>(conv: &Conv2d, store: &ParamStore<T>, x: &Tensor4<T>) -> Result<Tensor4<T>> {
    let mut y = conv.forward(store, x)?;
    relu_in_place(&mut y);
    Ok(y)
}

impl SubNet {
    pub fn build<T: Scalar>(store: &mut ParamStore<T>, config: &NestedConfig, level: usize, seed: u64) -> Result<Self> {
        let depth = config.unet_depth;
        let has_coarse = level < config.levels;
        let coarse_channels = if has_coarse { config.out_channels } else { 0 };
        let widths: Vec<usize> = (0..=depth).map(|i| config.stage_width(i)).collect();
        let first = store.len();
        // seeds keyed by position within this subnetwork, so a level's weights don't depend on its neighbours
        let next_seed = |store: &ParamStore<T>| derive_seed(seed, (store.len() - first) as u64);
        let prefix = format!("sub{level}");

        let mut enc = Vec::with_capacity(depth + 1);
        let mut sites = Vec::with_capacity(depth + 1);
        let mut enc_widths = Vec::with_capacity(depth + 1);
        for i in 0..=depth {
            let c_in = if i == 0 {
                config.in_channels + coarse_channels
            } else {
                enc_widths[i - 1]
            };
            let c = widths[i];
            let s = next_seed(store);
            let conv0 = Conv2d::new(store, &format!("{prefix}.enc{i}.conv0"), c_in, c, 3, true, s)?;
            let s = next_seed(store);
            let conv1 = Conv2d::new(store, &format!("{prefix}.enc{i}.conv1"), c, c, 3, true, s)?;
            enc.push([conv0, conv1]);
            if has_coarse && i >= 1 {
                let coarse_width = widths[i - 1];
                let (projection, width) = match config.fusion_mode {
                    FusionMode::Residual => {
                        let s = next_seed(store);
                        let w = he_init([c, coarse_width, 1, 1], s)?;
                        (Some(store.add(format!("{prefix}.fuse{i}.proj.weight"), w)?), c)
                    }
                    FusionMode::Concat => (None, c + coarse_width),
                };
                sites.push(Some(FusionSite {
                    mode: config.fusion_mode,
                    projection,
                }));
                enc_widths.push(width);
            } else {
                sites.push(None);
                enc_widths.push(c);
            }
        }

        let mut dec_up = Vec::with_capacity(depth);
        let mut dec_merge = Vec::with_capacity(depth);
        for i in 0..depth {
            let from = if i + 1 == depth { enc_widths[depth] } else { widths[i + 1] };
            let s = next_seed(store);
            dec_up.push(Conv2d::new(store, &format!("{prefix}.dec{i}.up"), from, widths[i], 3, true, s)?);
            let s = next_seed(store);
            dec_merge.push(Conv2d::new(
                store,
                &format!("{prefix}.dec{i}.merge"),
                widths[i] + enc_widths[i],
                widths[i],
                3,
                true,
                s,
            )?);
        }
        let s = next_seed(store);
        let out = Conv2d::new(store, &format!("{prefix}.out"), widths[0], config.out_channels, 3, true, s)?;

        Ok(SubNet {
            level,
            depth,
            image_channels: config.in_channels,
            coarse_channels,
            widths,
            enc_widths,
            enc,
            sites,
            dec_up,
            dec_merge,
            out,
        })
    }

    pub fn has_coarse(&self) -> bool {
        self.coarse_channels > 0
    }

    /// Number of fusion sites (encoder stages that receive coarse features).
    pub fn fusion_sites(&self) -> usize {
        self.sites.iter().filter(|s| s.is_some()).count()
    }

    /// Runs the U-Net on `x`.
    ///
    /// `coarse_pred` must be present exactly when a coarser level exists. `coarse_feats`
    /// supplies `D_0..D_{I-1}` of that level; passing `None` while `coarse_pred` is present
    /// runs with fusion disabled (residual mode only).
    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor4<T>,
        coarse_pred: Option<&Tensor4<T>>,
        coarse_feats: Option<&[Tensor4<T>]>,
    ) -> Result<SubnetTrace<T>> {
        if x.channels() != self.image_channels {
            return Err(Error::Contract(format!(
                "level {} expects {} image channels, got {}",
                self.level,
                self.image_channels,
                x.channels()
            )));
        }
        let input = match (self.has_coarse(), coarse_pred) {
            (true, Some(p)) => Tensor4::concat_channels(x, &upsample2x(p)?)?,
            (false, None) => x.clone(),
            (true, None) => {
                return Err(Error::Contract(format!(
                    "level {} needs the coarser prediction",
                    self.level
                )))
            }
            (false, Some(_)) => {
                return Err(Error::Contract(format!(
                    "level {} is the coarsest and takes no coarser prediction",
                    self.level
                )))
            }
        };
        if !self.has_coarse() && coarse_feats.is_some() {
            return Err(Error::Contract(format!(
                "level {} is the coarsest and takes no coarse features",
                self.level
            )));
        }
        if let Some(feats) = coarse_feats {
            if feats.len() < self.depth {
                return Err(Error::Contract(format!(
                    "level {} needs {} coarse decoder features, got {}",
                    self.level,
                    self.depth,
                    feats.len()
                )));
            }
        } else if self.has_coarse() && self.sites.iter().flatten().any(|s| s.mode == FusionMode::Concat) {
            return Err(Error::Contract("fusion cannot be disabled in concat mode".into()));
        }

        let depth = self.depth;
        let mut tape = Tape {
            input,
            stage_in: Vec::with_capacity(depth + 1),
            act0: Vec::with_capacity(depth + 1),
            raw: Vec::with_capacity(depth + 1),
            argmax: Vec::with_capacity(depth),
            coarse_used: Vec::with_capacity(depth + 1),
            up_in: vec![],
            up_act: vec![],
            merged: vec![],
        };
        let mut encoder_feats: Vec<Tensor4<T>> = Vec::with_capacity(depth + 1);
        for i in 0..=depth {
            let stage_in = if i == 0 {
                tape.input.clone()
            } else {
                let pooled = pool_down2x(&encoder_feats[i - 1])?;
                tape.argmax.push(pooled.argmax);
                pooled.output
            };
            let a0 = conv_relu(&self.enc[i][0], store, &stage_in)?;
            let raw = conv_relu(&self.enc[i][1], store, &a0)?;
            let (fused, used) = match (&self.sites[i], coarse_feats) {
                (Some(site), Some(feats)) => {
                    let d = &feats[i - 1];
                    let proj = site.projection.map(|p| &store.get(p).value);
                    (fuse_features(&raw, d, site.mode, proj)?, Some(d.clone()))
                }
                _ => (raw.clone(), None),
            };
            tape.stage_in.push(stage_in);
            tape.act0.push(a0);
            tape.raw.push(raw);
            tape.coarse_used.push(used);
            encoder_feats.push(fused);
        }

        let mut decoder_feats: Vec<Option<Tensor4<T>>> = vec![None; depth + 1];
        decoder_feats[depth] = Some(encoder_feats[depth].clone());
        let mut up_in = vec![None; depth];
        let mut up_act = vec![None; depth];
        let mut merged = vec![None; depth];
        for i in (0..depth).rev() {
            let below = decoder_feats[i + 1].as_ref().expect("built bottom-up");
            let up = upsample2x(below)?;
            let u = conv_relu(&self.dec_up[i], store, &up)?;
            let m = Tensor4::concat_channels(&u, &encoder_feats[i])?;
            decoder_feats[i] = Some(conv_relu(&self.dec_merge[i], store, &m)?);
            up_in[i] = Some(up);
            up_act[i] = Some(u);
            merged[i] = Some(m);
        }
        let decoder_feats: Vec<Tensor4<T>> = decoder_feats.into_iter().map(|d| d.expect("filled")).collect();
        tape.up_in = up_in.into_iter().map(|t| t.expect("filled")).collect();
        tape.up_act = up_act.into_iter().map(|t| t.expect("filled")).collect();
        tape.merged = merged.into_iter().map(|t| t.expect("filled")).collect();

        let prediction = self.out.forward(store, &decoder_feats[0])?;
        Ok(SubnetTrace {
            encoder_feats,
            decoder_feats,
            prediction,
            tape,
        })
    }

    /// Accumulates parameter gradients into `store`.
    ///
    /// `d_decoder_extra[i]`, when present, is gradient arriving at `D_i` from the finer
    /// level's fusion site `i + 1`.
    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        trace: &SubnetTrace<T>,
        d_pred: &Tensor4<T>,
        d_decoder_extra: &[Option<Tensor4<T>>],
    ) -> Result<SubnetGrads<T>> {
        let depth = self.depth;
        let tape = &trace.tape;
        let mut d_dec: Vec<Option<Tensor4<T>>> = vec![None; depth + 1];
        for (slot, extra) in d_dec.iter_mut().zip(d_decoder_extra) {
            if let Some(g) = extra {
                *slot = Some(g.clone());
            }
        }
        let mut d_enc: Vec<Option<Tensor4<T>>> = vec![None; depth + 1];

        let g = self.out.backward(store, &trace.decoder_feats[0], d_pred)?;
        accumulate(&mut d_dec[0], g)?;
        for i in 0..depth {
            let dd = d_dec[i].take().expect("gradient reaches every decoder stage");
            let dpre = relu_backward(&trace.decoder_feats[i], &dd)?;
            let dm = self.dec_merge[i].backward(store, &tape.merged[i], &dpre)?;
            let (du, de) = dm.split_channels(self.widths[i])?;
            accumulate(&mut d_enc[i], de)?;
            let dpu = relu_backward(&tape.up_act[i], &du)?;
            let dup = self.dec_up[i].backward(store, &tape.up_in[i], &dpu)?;
            accumulate(&mut d_dec[i + 1], upsample2x_backward(&dup)?)?;
        }
        if let Some(g) = d_dec[depth].take() {
            accumulate(&mut d_enc[depth], g)?;
        }

        let mut coarse_feats: Vec<Option<Tensor4<T>>> = vec![None; depth];
        let mut d_input = None;
        for i in (0..=depth).rev() {
            let de = d_enc[i].take().expect("gradient reaches every encoder stage");
            let de_raw = match (&self.sites[i], &tape.coarse_used[i]) {
                (Some(site), Some(d)) => {
                    let proj = site.projection.map(|p| store.get(p).value.clone());
                    let fb = fuse_features_backward(self.widths[i], d, site.mode, proj.as_ref(), &de)?;
                    if let (Some(p), Some(pg)) = (site.projection, fb.projection) {
                        store.get_mut(p).grad.add_assign(&pg)?;
                    }
                    coarse_feats[i - 1] = Some(fb.coarse);
                    fb.encoder
                }
                _ => de,
            };
            let d1 = relu_backward(&tape.raw[i], &de_raw)?;
            let da0 = self.enc[i][1].backward(store, &tape.act0[i], &d1)?;
            let d0 = relu_backward(&tape.act0[i], &da0)?;
            let d_in = self.enc[i][0].backward(store, &tape.stage_in[i], &d0)?;
            if i > 0 {
                let g = pool_down2x_backward(trace.encoder_feats[i - 1].shape(), &tape.argmax[i - 1], &d_in)?;
                accumulate(&mut d_enc[i - 1], g)?;
            } else {
                d_input = Some(d_in);
            }
        }

        let d_input = d_input.expect("stage 0 visited");
        let coarse_pred = if self.has_coarse() {
            let (_, d_up) = d_input.split_channels(self.image_channels)?;
            Some(upsample2x_backward(&d_up)?)
        } else {
            None
        };
        Ok(SubnetGrads {
            coarse_pred,
            coarse_feats,
        })
    }
}
