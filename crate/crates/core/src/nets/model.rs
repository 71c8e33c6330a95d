//! Predictor models: a small trunk (convolutions, global average pool,
//! dense) with one dense head per target group. Continuous heads pass
//! through tanh, one-hot heads emit raw logits.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facegen::{Image, Region, SlotKind, TargetLayout};
use crate::nets::layers::{
    conv_out_shape, global_avg_pool, global_avg_pool_backward, pad1, relu_mask, ConvGrads,
    ConvLayer, DenseGrads, DenseLayer, Shape,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { out_ch: usize, stride: usize },
    GlobalAvgPool,
    Dense { units: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub group: String,
    pub width: usize,
    pub kind: SlotKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_size: usize,
    pub trunk: Vec<LayerSpec>,
    pub heads: Vec<HeadSpec>,
}

impl NetSpec {
    /// Walk the trunk and return the feature width heads consume.
    pub fn feature_width(&self) -> Result<usize> {
        let mut shape = Shape { ch: 1, h: self.input_size, w: self.input_size };
        let mut flat: Option<usize> = None;
        for layer in &self.trunk {
            match layer {
                LayerSpec::Conv { out_ch, stride } => {
                    if flat.is_some() {
                        return Err(Error::InvalidNetSpec(
                            "conv after flattening layer".into(),
                        ));
                    }
                    if *out_ch == 0 || *stride == 0 {
                        return Err(Error::InvalidNetSpec("conv dims must be positive".into()));
                    }
                    if shape.h < 1 || shape.w < 1 {
                        return Err(Error::InvalidNetSpec("conv input collapsed".into()));
                    }
                    shape = conv_out_shape(shape, *out_ch, *stride);
                }
                LayerSpec::GlobalAvgPool => {
                    if flat.is_some() {
                        return Err(Error::InvalidNetSpec("pool after flattening".into()));
                    }
                    flat = Some(shape.ch);
                }
                LayerSpec::Dense { units } => {
                    if *units == 0 {
                        return Err(Error::InvalidNetSpec("dense width must be positive".into()));
                    }
                    let input = flat.ok_or_else(|| {
                        Error::InvalidNetSpec("dense requires a pooling layer first".into())
                    })?;
                    let _ = input;
                    flat = Some(*units);
                }
            }
        }
        flat.ok_or_else(|| Error::InvalidNetSpec("trunk produces no flat features".into()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 {
            return Err(Error::InvalidNetSpec("input size must be positive".into()));
        }
        if self.heads.is_empty() {
            return Err(Error::InvalidNetSpec("at least one head required".into()));
        }
        for head in &self.heads {
            if head.width == 0 {
                return Err(Error::InvalidNetSpec(format!(
                    "head {} has zero width",
                    head.group
                )));
            }
        }
        self.feature_width()?;
        Ok(())
    }

    pub fn output_width(&self) -> usize {
        self.heads.iter().map(|h| h.width).sum()
    }
}

/// What a model predicts: the full target or one region's slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Aggregate,
    Local(Region),
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scope::Aggregate => f.write_str("aggregate"),
            Scope::Local(region) => write!(f, "local_{region}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    FrozenTrunk,
    FullTraining,
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainMode::FrozenTrunk => f.write_str("frozen_trunk"),
            TrainMode::FullTraining => f.write_str("full_training"),
        }
    }
}

/// One group of the model output and where it sits in the full layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceGroup {
    pub name: String,
    pub kind: SlotKind,
    pub local_start: usize,
    pub layout_start: usize,
    pub len: usize,
}

impl SliceGroup {
    pub fn local_range(&self) -> std::ops::Range<usize> {
        self.local_start..self.local_start + self.len
    }

    pub fn layout_range(&self) -> std::ops::Range<usize> {
        self.layout_start..self.layout_start + self.len
    }
}

/// Mapping between a model's packed output vector and the full target layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMap {
    pub groups: Vec<SliceGroup>,
}

impl SliceMap {
    pub fn aggregate(layout: &TargetLayout) -> SliceMap {
        let mut groups = Vec::new();
        let mut cursor = 0;
        for g in &layout.groups {
            groups.push(SliceGroup {
                name: g.name.clone(),
                kind: g.kind,
                local_start: cursor,
                layout_start: g.start,
                len: g.len,
            });
            cursor += g.len;
        }
        SliceMap { groups }
    }

    /// A region's continuous group (Global-tagged dims included) plus its
    /// one-hot slice.
    pub fn local(layout: &TargetLayout, region: Region) -> SliceMap {
        let mut groups = Vec::new();
        let mut cursor = 0;
        for g in &layout.groups {
            if g.region == Some(region) {
                groups.push(SliceGroup {
                    name: g.name.clone(),
                    kind: g.kind,
                    local_start: cursor,
                    layout_start: g.start,
                    len: g.len,
                });
                cursor += g.len;
            }
        }
        SliceMap { groups }
    }

    pub fn width(&self) -> usize {
        self.groups.iter().map(|g| g.len).sum()
    }

    /// Gather this model's slice of a full-layout vector.
    pub fn extract(&self, full: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        for g in &self.groups {
            out[g.local_range()].copy_from_slice(&full[g.layout_range()]);
        }
        out
    }

    pub fn heads(&self) -> Vec<HeadSpec> {
        self.groups
            .iter()
            .map(|g| HeadSpec {
                group: g.name.clone(),
                width: g.len,
                kind: g.kind,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Conv(ConvLayer),
    Pool,
    Dense(DenseLayer),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub spec: NetSpec,
    pub scope: Scope,
    pub mode: TrainMode,
    pub slice_map: SliceMap,
    pub schema_fingerprint: String,
    pub trunk: Vec<LayerParams>,
    pub heads: Vec<DenseLayer>,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    /// Post-activation output of each trunk layer; index 0 is the input.
    acts: Vec<Vec<f64>>,
    shapes: Vec<Shape>,
    /// Padded copies of conv inputs, index-aligned with `trunk`.
    padded: Vec<Option<Vec<f64>>>,
    pub features: Vec<f64>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum LayerGrads {
    Conv(ConvGrads),
    Pool,
    Dense(DenseGrads),
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub trunk: Vec<LayerGrads>,
    pub heads: Vec<DenseGrads>,
}

impl Gradients {
    pub fn zeros_like(model: &PredictorModel, include_trunk: bool) -> Gradients {
        let trunk = if include_trunk {
            model
                .trunk
                .iter()
                .map(|l| match l {
                    LayerParams::Conv(c) => LayerGrads::Conv(ConvGrads {
                        dw: vec![0.0; c.weights.len()],
                        db: vec![0.0; c.bias.len()],
                    }),
                    LayerParams::Pool => LayerGrads::Pool,
                    LayerParams::Dense(d) => LayerGrads::Dense(DenseGrads {
                        dw: vec![0.0; d.weights.len()],
                        db: vec![0.0; d.bias.len()],
                    }),
                })
                .collect()
        } else {
            Vec::new()
        };
        let heads = model
            .heads
            .iter()
            .map(|h| DenseGrads {
                dw: vec![0.0; h.weights.len()],
                db: vec![0.0; h.bias.len()],
            })
            .collect();
        Gradients { trunk, heads }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.trunk.iter_mut().zip(&other.trunk) {
            match (a, b) {
                (LayerGrads::Conv(x), LayerGrads::Conv(y)) => {
                    for (u, v) in x.dw.iter_mut().zip(&y.dw) {
                        *u += scale * v;
                    }
                    for (u, v) in x.db.iter_mut().zip(&y.db) {
                        *u += scale * v;
                    }
                }
                (LayerGrads::Dense(x), LayerGrads::Dense(y)) => {
                    for (u, v) in x.dw.iter_mut().zip(&y.dw) {
                        *u += scale * v;
                    }
                    for (u, v) in x.db.iter_mut().zip(&y.db) {
                        *u += scale * v;
                    }
                }
                (LayerGrads::Pool, LayerGrads::Pool) => {}
                _ => unreachable!("gradient structure mismatch"),
            }
        }
        for (a, b) in self.heads.iter_mut().zip(&other.heads) {
            for (u, v) in a.dw.iter_mut().zip(&b.dw) {
                *u += scale * v;
            }
            for (u, v) in a.db.iter_mut().zip(&b.db) {
                *u += scale * v;
            }
        }
    }

    /// Flat-indexed access matching [`PredictorModel`] parameter order.
    /// Trunk gradients read as 0 when they were not computed.
    pub fn get(&self, model: &PredictorModel, index: usize) -> f64 {
        match locate(model, index) {
            Location::TrunkW(l, i) => match self.trunk.get(l) {
                Some(LayerGrads::Conv(g)) => g.dw[i],
                Some(LayerGrads::Dense(g)) => g.dw[i],
                _ => 0.0,
            },
            Location::TrunkB(l, i) => match self.trunk.get(l) {
                Some(LayerGrads::Conv(g)) => g.db[i],
                Some(LayerGrads::Dense(g)) => g.db[i],
                _ => 0.0,
            },
            Location::HeadW(h, i) => self.heads[h].dw[i],
            Location::HeadB(h, i) => self.heads[h].db[i],
        }
    }
}

enum Location {
    TrunkW(usize, usize),
    TrunkB(usize, usize),
    HeadW(usize, usize),
    HeadB(usize, usize),
}

fn locate(model: &PredictorModel, mut index: usize) -> Location {
    for (l, layer) in model.trunk.iter().enumerate() {
        let (nw, nb) = match layer {
            LayerParams::Conv(c) => (c.weights.len(), c.bias.len()),
            LayerParams::Dense(d) => (d.weights.len(), d.bias.len()),
            LayerParams::Pool => (0, 0),
        };
        if index < nw {
            return Location::TrunkW(l, index);
        }
        index -= nw;
        if index < nb {
            return Location::TrunkB(l, index);
        }
        index -= nb;
    }
    for (h, head) in model.heads.iter().enumerate() {
        if index < head.weights.len() {
            return Location::HeadW(h, index);
        }
        index -= head.weights.len();
        if index < head.bias.len() {
            return Location::HeadB(h, index);
        }
        index -= head.bias.len();
    }
    panic!("parameter index out of range");
}

impl PredictorModel {
    /// Deterministic seeded initialization; weight scale follows the
    /// fan-in rule, biases start at zero.
    pub fn init(
        spec: NetSpec,
        scope: Scope,
        mode: TrainMode,
        slice_map: SliceMap,
        schema_fingerprint: &str,
        seed: u64,
    ) -> Result<PredictorModel> {
        spec.validate()?;
        if spec.output_width() != slice_map.width() {
            return Err(Error::InvalidNetSpec(format!(
                "head widths sum to {}, slice map covers {}",
                spec.output_width(),
                slice_map.width()
            )));
        }
        for (head, group) in spec.heads.iter().zip(&slice_map.groups) {
            if head.group != group.name || head.width != group.len || head.kind != group.kind {
                return Err(Error::InvalidNetSpec(format!(
                    "head {} does not match slice group {}",
                    head.group, group.name
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = Shape { ch: 1, h: spec.input_size, w: spec.input_size };
        let mut flat_width = 0usize;
        let mut trunk = Vec::new();
        for layer in &spec.trunk {
            match layer {
                LayerSpec::Conv { out_ch, stride } => {
                    let fan_in = shape.ch * 9;
                    let bound = (1.0 / fan_in as f64).sqrt();
                    let weights = (0..out_ch * shape.ch * 9)
                        .map(|_| rng.random_range(-bound..=bound))
                        .collect();
                    trunk.push(LayerParams::Conv(ConvLayer {
                        in_ch: shape.ch,
                        out_ch: *out_ch,
                        stride: *stride,
                        weights,
                        bias: vec![0.0; *out_ch],
                    }));
                    shape = conv_out_shape(shape, *out_ch, *stride);
                }
                LayerSpec::GlobalAvgPool => {
                    trunk.push(LayerParams::Pool);
                    flat_width = shape.ch;
                }
                LayerSpec::Dense { units } => {
                    let bound = (1.0 / flat_width as f64).sqrt();
                    let weights = (0..units * flat_width)
                        .map(|_| rng.random_range(-bound..=bound))
                        .collect();
                    trunk.push(LayerParams::Dense(DenseLayer {
                        in_dim: flat_width,
                        out_dim: *units,
                        relu: true,
                        weights,
                        bias: vec![0.0; *units],
                    }));
                    flat_width = *units;
                }
            }
        }
        let heads = spec
            .heads
            .iter()
            .map(|h| {
                let bound = (1.0 / flat_width as f64).sqrt();
                DenseLayer {
                    in_dim: flat_width,
                    out_dim: h.width,
                    relu: false,
                    weights: (0..h.width * flat_width)
                        .map(|_| rng.random_range(-bound..=bound))
                        .collect(),
                    bias: vec![0.0; h.width],
                }
            })
            .collect();
        Ok(PredictorModel {
            spec,
            scope,
            mode,
            slice_map,
            schema_fingerprint: schema_fingerprint.to_string(),
            trunk,
            heads,
        })
    }

    pub fn output_width(&self) -> usize {
        self.slice_map.width()
    }

    fn check_input(&self, len: usize, size: usize) -> Result<()> {
        if size != self.spec.input_size || len != size * size {
            return Err(Error::InputSizeMismatch {
                expected: self.spec.input_size,
                width: size,
                height: if size == 0 { 0 } else { len / size },
            });
        }
        Ok(())
    }

    /// Trunk + heads with all intermediates retained.
    pub fn forward_cached(&self, pixels: &[f64], size: usize) -> Result<ForwardCache> {
        self.check_input(pixels.len(), size)?;
        let mut acts: Vec<Vec<f64>> = vec![pixels.to_vec()];
        let mut shapes = vec![Shape { ch: 1, h: size, w: size }];
        let mut padded: Vec<Option<Vec<f64>>> = Vec::new();
        for layer in &self.trunk {
            let input = acts.last().expect("input present");
            let shape = *shapes.last().expect("shape present");
            match layer {
                LayerParams::Conv(conv) => {
                    let p = pad1(input, shape);
                    let (out, out_shape) = conv.forward(&p, shape);
                    padded.push(Some(p));
                    acts.push(out);
                    shapes.push(out_shape);
                }
                LayerParams::Pool => {
                    padded.push(None);
                    let out = global_avg_pool(input, shape);
                    let ch = out.len();
                    acts.push(out);
                    shapes.push(Shape { ch, h: 1, w: 1 });
                }
                LayerParams::Dense(dense) => {
                    padded.push(None);
                    let out = dense.forward(input);
                    let ch = out.len();
                    acts.push(out);
                    shapes.push(Shape { ch, h: 1, w: 1 });
                }
            }
        }
        let features = acts.last().expect("trunk output").clone();
        let output = self.forward_heads(&features);
        Ok(ForwardCache { acts, shapes, padded, features, output })
    }

    /// Trunk features only (used to cache frozen-trunk activations).
    pub fn trunk_features(&self, pixels: &[f64], size: usize) -> Result<Vec<f64>> {
        Ok(self.forward_cached(pixels, size)?.features)
    }

    /// Heads from trunk features; tanh on continuous groups, raw logits on
    /// one-hot groups.
    pub fn forward_heads(&self, features: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_width()];
        for (head, group) in self.heads.iter().zip(&self.slice_map.groups) {
            let y = head.forward(features);
            let dst = &mut out[group.local_range()];
            match group.kind {
                SlotKind::Continuous => {
                    for (d, v) in dst.iter_mut().zip(&y) {
                        *d = v.tanh();
                    }
                }
                SlotKind::OneHot => dst.copy_from_slice(&y),
            }
        }
        out
    }

    pub fn forward_pixels(&self, pixels: &[f64], size: usize) -> Result<Vec<f64>> {
        Ok(self.forward_cached(pixels, size)?.output)
    }

    pub fn forward_image(&self, image: &Image) -> Result<Vec<f64>> {
        if image.width() != image.height() {
            return Err(Error::InputSizeMismatch {
                expected: self.spec.input_size,
                width: image.width(),
                height: image.height(),
            });
        }
        self.forward_pixels(image.as_slice(), image.width())
    }

    /// Backprop `d_output` (gradient in tanh/logit output space) through
    /// heads and, when requested, the trunk.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_output: &[f64],
        compute_trunk: bool,
    ) -> Gradients {
        let (head_grads, d_features) = self.backward_heads(&cache.features, &cache.output, d_output);
        let mut trunk_grads = Vec::new();
        if compute_trunk {
            let mut d_act = d_features;
            let mut grads_rev: Vec<LayerGrads> = Vec::with_capacity(self.trunk.len());
            for (idx, layer) in self.trunk.iter().enumerate().rev() {
                let in_shape = cache.shapes[idx];
                let out_shape = cache.shapes[idx + 1];
                match layer {
                    LayerParams::Conv(conv) => {
                        relu_mask(&mut d_act, &cache.acts[idx + 1]);
                        let padded = cache.padded[idx].as_ref().expect("conv cached pad");
                        let (g, d_in) =
                            conv.backward(padded, in_shape, &d_act, out_shape, idx > 0);
                        grads_rev.push(LayerGrads::Conv(g));
                        d_act = d_in.unwrap_or_default();
                    }
                    LayerParams::Pool => {
                        grads_rev.push(LayerGrads::Pool);
                        d_act = global_avg_pool_backward(&d_act, in_shape);
                    }
                    LayerParams::Dense(dense) => {
                        if dense.relu {
                            relu_mask(&mut d_act, &cache.acts[idx + 1]);
                        }
                        let (g, d_in) = dense.backward(&cache.acts[idx], &d_act);
                        grads_rev.push(LayerGrads::Dense(g));
                        d_act = d_in;
                    }
                }
            }
            grads_rev.reverse();
            trunk_grads = grads_rev;
        }
        Gradients { trunk: trunk_grads, heads: head_grads }
    }

    /// Head-only backward, reusable by the frozen-trunk fast path. Returns
    /// head gradients and the gradient flowing into the trunk features.
    pub fn backward_heads(
        &self,
        features: &[f64],
        output: &[f64],
        d_output: &[f64],
    ) -> (Vec<DenseGrads>, Vec<f64>) {
        let mut d_features = vec![0.0; features.len()];
        let mut head_grads = Vec::with_capacity(self.heads.len());
        for (head, group) in self.heads.iter().zip(&self.slice_map.groups) {
            let mut d_pre: Vec<f64> = d_output[group.local_range()].to_vec();
            if group.kind == SlotKind::Continuous {
                for (g, y) in d_pre.iter_mut().zip(&output[group.local_range()]) {
                    *g *= 1.0 - y * y;
                }
            }
            let (grads, d_in) = head.backward(features, &d_pre);
            for (a, b) in d_features.iter_mut().zip(&d_in) {
                *a += b;
            }
            head_grads.push(grads);
        }
        (head_grads, d_features)
    }

    /// SGD step. Trunk parameters move only under `FullTraining`.
    pub fn apply_step(&mut self, grads: &Gradients, lr: f64) {
        if self.mode == TrainMode::FullTraining {
            for (layer, grad) in self.trunk.iter_mut().zip(&grads.trunk) {
                match (layer, grad) {
                    (LayerParams::Conv(c), LayerGrads::Conv(g)) => {
                        for (w, d) in c.weights.iter_mut().zip(&g.dw) {
                            *w -= lr * d;
                        }
                        for (b, d) in c.bias.iter_mut().zip(&g.db) {
                            *b -= lr * d;
                        }
                    }
                    (LayerParams::Dense(l), LayerGrads::Dense(g)) => {
                        for (w, d) in l.weights.iter_mut().zip(&g.dw) {
                            *w -= lr * d;
                        }
                        for (b, d) in l.bias.iter_mut().zip(&g.db) {
                            *b -= lr * d;
                        }
                    }
                    (LayerParams::Pool, LayerGrads::Pool) => {}
                    _ => unreachable!("gradient structure mismatch"),
                }
            }
        }
        for (head, grad) in self.heads.iter_mut().zip(&grads.heads) {
            for (w, d) in head.weights.iter_mut().zip(&grad.dw) {
                *w -= lr * d;
            }
            for (b, d) in head.bias.iter_mut().zip(&grad.db) {
                *b -= lr * d;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        let trunk: usize = self
            .trunk
            .iter()
            .map(|l| match l {
                LayerParams::Conv(c) => c.weights.len() + c.bias.len(),
                LayerParams::Dense(d) => d.weights.len() + d.bias.len(),
                LayerParams::Pool => 0,
            })
            .sum();
        let heads: usize = self
            .heads
            .iter()
            .map(|h| h.weights.len() + h.bias.len())
            .sum();
        trunk + heads
    }

    pub fn get_param(&self, index: usize) -> f64 {
        match locate(self, index) {
            Location::TrunkW(l, i) => match &self.trunk[l] {
                LayerParams::Conv(c) => c.weights[i],
                LayerParams::Dense(d) => d.weights[i],
                LayerParams::Pool => unreachable!(),
            },
            Location::TrunkB(l, i) => match &self.trunk[l] {
                LayerParams::Conv(c) => c.bias[i],
                LayerParams::Dense(d) => d.bias[i],
                LayerParams::Pool => unreachable!(),
            },
            Location::HeadW(h, i) => self.heads[h].weights[i],
            Location::HeadB(h, i) => self.heads[h].bias[i],
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        match locate(self, index) {
            Location::TrunkW(l, i) => match &mut self.trunk[l] {
                LayerParams::Conv(c) => c.weights[i] = value,
                LayerParams::Dense(d) => d.weights[i] = value,
                LayerParams::Pool => unreachable!(),
            },
            Location::TrunkB(l, i) => match &mut self.trunk[l] {
                LayerParams::Conv(c) => c.bias[i] = value,
                LayerParams::Dense(d) => d.bias[i] = value,
                LayerParams::Pool => unreachable!(),
            },
            Location::HeadW(h, i) => self.heads[h].weights[i] = value,
            Location::HeadB(h, i) => self.heads[h].bias[i] = value,
        }
    }

    /// Flattened parameters in checkpoint order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.trunk {
            match layer {
                LayerParams::Conv(c) => {
                    out.extend_from_slice(&c.weights);
                    out.extend_from_slice(&c.bias);
                }
                LayerParams::Dense(d) => {
                    out.extend_from_slice(&d.weights);
                    out.extend_from_slice(&d.bias);
                }
                LayerParams::Pool => {}
            }
        }
        for head in &self.heads {
            out.extend_from_slice(&head.weights);
            out.extend_from_slice(&head.bias);
        }
        out
    }

    fn load_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Checkpoint(format!(
                "parameter blob has {} values, model needs {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut cursor = 0usize;
        let mut take = |buf: &mut [f64]| {
            buf.copy_from_slice(&params[cursor..cursor + buf.len()]);
            cursor += buf.len();
        };
        for layer in &mut self.trunk {
            match layer {
                LayerParams::Conv(c) => {
                    take(&mut c.weights);
                    take(&mut c.bias);
                }
                LayerParams::Dense(d) => {
                    take(&mut d.weights);
                    take(&mut d.bias);
                }
                LayerParams::Pool => {}
            }
        }
        for head in &mut self.heads {
            take(&mut head.weights);
            take(&mut head.bias);
        }
        Ok(())
    }

    /// Clone of trunk parameters, flattened; used by the freeze-contract
    /// tests and the frozen-trunk fast path.
    pub fn trunk_param_snapshot(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.trunk {
            match layer {
                LayerParams::Conv(c) => {
                    out.extend_from_slice(&c.weights);
                    out.extend_from_slice(&c.bias);
                }
                LayerParams::Dense(d) => {
                    out.extend_from_slice(&d.weights);
                    out.extend_from_slice(&d.bias);
                }
                LayerParams::Pool => {}
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic, version, schema fingerprint, net meta as JSON,
// little-endian f32 parameter blob.
// ---------------------------------------------------------------------------

const CKPT_MAGIC: &[u8; 4] = b"F2PM";
const CKPT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    spec: NetSpec,
    scope: Scope,
    mode: TrainMode,
    slice_map: SliceMap,
}

pub fn save_checkpoint(model: &PredictorModel, path: &Path) -> Result<()> {
    let meta = CheckpointMeta {
        spec: model.spec.clone(),
        scope: model.scope,
        mode: model.mode,
        slice_map: model.slice_map.clone(),
    };
    let meta_json = serde_json::to_vec(&meta)?;
    let params = model.flat_params();
    let mut buf = Vec::with_capacity(64 + meta_json.len() + params.len() * 4);
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    let fp = model.schema_fingerprint.as_bytes();
    buf.extend_from_slice(&(fp.len() as u32).to_le_bytes());
    buf.extend_from_slice(fp);
    buf.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta_json);
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in &params {
        buf.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, expected_fingerprint: Option<&str>) -> Result<PredictorModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
        if *cursor + n > bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{}: truncated checkpoint",
                path.display()
            )));
        }
        let slice = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };
    if take(&mut cursor, 4)? != CKPT_MAGIC {
        return Err(Error::Checkpoint(format!("{}: bad magic", path.display())));
    }
    let version = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
    if version != CKPT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let fp_len = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    let fingerprint = String::from_utf8(take(&mut cursor, fp_len)?.to_vec())
        .map_err(|_| Error::Checkpoint(format!("{}: bad fingerprint", path.display())))?;
    if let Some(expected) = expected_fingerprint {
        if fingerprint != expected {
            return Err(Error::FingerprintMismatch {
                found: fingerprint,
                expected: expected.to_string(),
            });
        }
    }
    let meta_len = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    let meta: CheckpointMeta = serde_json::from_slice(take(&mut cursor, meta_len)?)?;
    let count = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()) as usize;
    let blob = take(&mut cursor, count * 4)?;
    let params: Vec<f64> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let mut model = PredictorModel::init(
        meta.spec,
        meta.scope,
        meta.mode,
        meta.slice_map,
        &fingerprint,
        0,
    )?;
    model.load_flat_params(&params)?;
    Ok(model)
}

/// Default trunk shared by every scope: two stride-2 convolutions, global
/// average pooling, and a 64-unit dense feature layer.
fn default_trunk() -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv { out_ch: 8, stride: 2 },
        LayerSpec::Conv { out_ch: 16, stride: 2 },
        LayerSpec::GlobalAvgPool,
        LayerSpec::Dense { units: 64 },
    ]
}

pub fn default_aggregate_spec(layout: &TargetLayout, input_size: usize) -> NetSpec {
    NetSpec {
        input_size,
        trunk: default_trunk(),
        heads: SliceMap::aggregate(layout).heads(),
    }
}

pub fn default_local_spec(layout: &TargetLayout, region: Region, input_size: usize) -> NetSpec {
    NetSpec {
        input_size,
        trunk: default_trunk(),
        heads: SliceMap::local(layout, region).heads(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facegen::{default_schema, FRAME_SIZE};

    fn test_model(seed: u64) -> PredictorModel {
        let schema = default_schema();
        let layout = TargetLayout::from_schema(&schema);
        let spec = default_aggregate_spec(&layout, FRAME_SIZE);
        PredictorModel::init(
            spec,
            Scope::Aggregate,
            TrainMode::FullTraining,
            SliceMap::aggregate(&layout),
            &schema.fingerprint(),
            seed,
        )
        .unwrap()
    }

    #[test]
    fn init_is_seeded_and_distinct_across_seeds() {
        let a = test_model(1);
        let b = test_model(1);
        let c = test_model(2);
        assert_eq!(a.flat_params(), b.flat_params());
        assert_ne!(a.flat_params(), c.flat_params());
    }

    #[test]
    fn forward_shapes_and_ranges() {
        let model = test_model(3);
        let pixels = vec![0.0; FRAME_SIZE * FRAME_SIZE];
        let out = model.forward_pixels(&pixels, FRAME_SIZE).unwrap();
        assert_eq!(out.len(), 24);
        assert!(out.iter().all(|v| v.is_finite()));
        let schema = default_schema();
        let layout = TargetLayout::from_schema(&schema);
        for d in layout.continuous_dims() {
            assert!(out[d].abs() <= 1.0, "continuous output escaped tanh range");
        }
        let again = model.forward_pixels(&pixels, FRAME_SIZE).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn forward_rejects_wrong_size() {
        let model = test_model(4);
        let pixels = vec![0.0; 32 * 32];
        assert!(matches!(
            model.forward_pixels(&pixels, 32),
            Err(Error::InputSizeMismatch { .. })
        ));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let model = test_model(5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path, Some(&model.schema_fingerprint)).unwrap();
        assert_eq!(loaded.spec, model.spec);
        assert_eq!(loaded.scope, model.scope);
        assert_eq!(loaded.slice_map, model.slice_map);
        // f32 quantization is the only drift allowed.
        for (a, b) in loaded.flat_params().iter().zip(model.flat_params()) {
            assert_eq!(*a, b as f32 as f64);
        }
        assert!(matches!(
            load_checkpoint(&path, Some("other")),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn slice_map_local_covers_region_dims() {
        let schema = default_schema();
        let layout = TargetLayout::from_schema(&schema);
        let map = SliceMap::local(&layout, Region::Nose);
        assert_eq!(map.width(), 7);
        let full: Vec<f64> = (0..24).map(|i| i as f64).collect();
        let local = map.extract(&full);
        let mut expected: Vec<f64> = layout
            .continuous_range(Region::Nose)
            .map(|i| i as f64)
            .collect();
        expected.extend(layout.onehot_range(Region::Nose).map(|i| i as f64));
        assert_eq!(local, expected);
    }
}
