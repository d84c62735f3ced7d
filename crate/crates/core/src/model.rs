//! The four network components: feature extractor `F`, quality head `Q`
//! (score plus positive standard deviation), consensus classifier `C`, and
//! domain discriminator `D`, with the gradient-reversal hookup between `F`
//! and `D`.
//!
//! Two backbones share the same head contract: a four-block strided
//! convolutional extractor for desk-scale CPU training, and an 18-layer
//! residual network (identity shortcuts, no batch normalization). Both end
//! in global average pooling, so inference accepts images of any size at or
//! above the backbone minimum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::image::RasterImage;

/// Negative slope of the quality head's LeakyReLU.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Smallest accepted input edge, pixels.
pub const MIN_INPUT: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    SmallConv,
    Resnet18Like,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    pub feature_dim: usize,
    /// Training crop size (inference is resolution-agnostic).
    pub input_size: (usize, usize),
}

impl BackboneConfig {
    /// Desk-scale default: trains on CPU in minutes.
    pub fn small_conv() -> Self {
        BackboneConfig {
            kind: BackboneKind::SmallConv,
            feature_dim: 64,
            input_size: (96, 96),
        }
    }

    /// Full-scale configuration matching the residual backbone.
    pub fn resnet18_like() -> Self {
        BackboneConfig {
            kind: BackboneKind::Resnet18Like,
            feature_dim: 512,
            input_size: (384, 384),
        }
    }
}

/// Gradient reversal configuration: forward identity, backward `-scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientReversal {
    pub scale: f64,
}

impl Default for GradientReversal {
    fn default() -> Self {
        GradientReversal { scale: 1.0 }
    }
}

/// Quality head output: predicted score and strictly positive std.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityOutput {
    pub score: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvParams {
    pub w: Tensor,
    pub b: Tensor,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResBlock {
    pub conv1: ConvParams,
    pub conv2: ConvParams,
    /// 1×1 projection when the block changes resolution or width.
    pub shortcut: Option<ConvParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Backbone {
    SmallConv { convs: Vec<ConvParams> },
    Resnet { stem: ConvParams, blocks: Vec<ResBlock> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadActivation {
    Relu,
    LeakyRelu,
}

/// A three-layer fully-connected head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub layers: Vec<LinearParams>,
    pub activation: HeadActivation,
}

impl HeadParams {
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// (in, out) of every layer, for construction-time introspection.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .map(|l| (l.w.shape[1], l.w.shape[0]))
            .collect()
    }
}

/// Which component a parameter tensor belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    Backbone,
    QualityHead,
    ConsensusHead,
    DomainHead,
}

/// The full network: backbone plus three heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub config: BackboneConfig,
    pub backbone: Backbone,
    pub quality: HeadParams,
    pub consensus: HeadParams,
    pub domain: HeadParams,
    /// Added to the softplus of the raw std output.
    pub std_floor: f64,
}

fn uniform_tensor<R: Rng>(rng: &mut R, shape: Vec<usize>, bound: f64) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.gen_range(-bound..bound)).collect())
}

fn init_conv<R: Rng>(
    rng: &mut R,
    c_out: usize,
    c_in: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> ConvParams {
    let bound = 1.0 / ((c_in * k * k) as f64).sqrt();
    ConvParams {
        w: uniform_tensor(rng, vec![c_out, c_in, k, k], bound),
        b: uniform_tensor(rng, vec![c_out], bound),
        stride,
        pad,
    }
}

fn init_linear<R: Rng>(rng: &mut R, out_dim: usize, in_dim: usize) -> LinearParams {
    let bound = 1.0 / (in_dim as f64).sqrt();
    LinearParams {
        w: uniform_tensor(rng, vec![out_dim, in_dim], bound),
        b: uniform_tensor(rng, vec![out_dim], bound),
    }
}

fn init_head<R: Rng>(
    rng: &mut R,
    in_dim: usize,
    feature_dim: usize,
    out_dim: usize,
    activation: HeadActivation,
) -> HeadParams {
    let h1 = (feature_dim / 2).max(1);
    let h2 = (feature_dim / 4).max(1);
    HeadParams {
        layers: vec![
            init_linear(rng, h1, in_dim),
            init_linear(rng, h2, h1),
            init_linear(rng, out_dim, h2),
        ],
        activation,
    }
}

impl ModelBundle {
    /// Builds a freshly initialized model (uniform He-style init, seeded).
    pub fn init(config: BackboneConfig, seed: u64) -> Result<Self> {
        if config.feature_dim == 0 {
            return Err(Error::validation("feature_dim must be positive"));
        }
        let fd = config.feature_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f_6465_6c);
        let backbone = match config.kind {
            BackboneKind::SmallConv => {
                let widths = [
                    (fd / 8).max(1),
                    (fd / 4).max(1),
                    (fd / 2).max(1),
                    fd,
                ];
                let mut convs = Vec::new();
                let mut c_in = 3;
                for &c_out in &widths {
                    convs.push(init_conv(&mut rng, c_out, c_in, 3, 2, 1));
                    c_in = c_out;
                }
                Backbone::SmallConv { convs }
            }
            BackboneKind::Resnet18Like => {
                let widths = [
                    (fd / 8).max(1),
                    (fd / 4).max(1),
                    (fd / 2).max(1),
                    fd,
                ];
                let stem = init_conv(&mut rng, widths[0], 3, 7, 2, 3);
                let mut blocks = Vec::new();
                let mut c_in = widths[0];
                for (stage, &c_out) in widths.iter().enumerate() {
                    let stage_stride = if stage == 0 { 1 } else { 2 };
                    for block in 0..2 {
                        let stride = if block == 0 { stage_stride } else { 1 };
                        let shortcut = (stride != 1 || c_in != c_out)
                            .then(|| init_conv(&mut rng, c_out, c_in, 1, stride, 0));
                        blocks.push(ResBlock {
                            conv1: init_conv(&mut rng, c_out, c_in, 3, stride, 1),
                            conv2: init_conv(&mut rng, c_out, c_out, 3, 1, 1),
                            shortcut,
                        });
                        c_in = c_out;
                    }
                }
                Backbone::Resnet { stem, blocks }
            }
        };
        Ok(ModelBundle {
            quality: init_head(&mut rng, fd, fd, 2, HeadActivation::LeakyRelu),
            consensus: init_head(&mut rng, 2 * fd, fd, 1, HeadActivation::Relu),
            domain: init_head(&mut rng, fd, fd, 1, HeadActivation::Relu),
            config,
            backbone,
            std_floor: 1e-4,
        })
    }

    /// Parameter tensors in canonical order (backbone, Q, C, D) with their
    /// group tags. [`BoundModel::param_vars`] yields the same order.
    pub fn param_tensors(&self) -> Vec<(&Tensor, ParamGroup)> {
        let mut out = Vec::new();
        match &self.backbone {
            Backbone::SmallConv { convs } => {
                for c in convs {
                    out.push((&c.w, ParamGroup::Backbone));
                    out.push((&c.b, ParamGroup::Backbone));
                }
            }
            Backbone::Resnet { stem, blocks } => {
                out.push((&stem.w, ParamGroup::Backbone));
                out.push((&stem.b, ParamGroup::Backbone));
                for blk in blocks {
                    out.push((&blk.conv1.w, ParamGroup::Backbone));
                    out.push((&blk.conv1.b, ParamGroup::Backbone));
                    out.push((&blk.conv2.w, ParamGroup::Backbone));
                    out.push((&blk.conv2.b, ParamGroup::Backbone));
                    if let Some(s) = &blk.shortcut {
                        out.push((&s.w, ParamGroup::Backbone));
                        out.push((&s.b, ParamGroup::Backbone));
                    }
                }
            }
        }
        for (head, group) in [
            (&self.quality, ParamGroup::QualityHead),
            (&self.consensus, ParamGroup::ConsensusHead),
            (&self.domain, ParamGroup::DomainHead),
        ] {
            for l in &head.layers {
                out.push((&l.w, group));
                out.push((&l.b, group));
            }
        }
        out
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        match &mut self.backbone {
            Backbone::SmallConv { convs } => {
                for c in convs {
                    out.push(&mut c.w);
                    out.push(&mut c.b);
                }
            }
            Backbone::Resnet { stem, blocks } => {
                out.push(&mut stem.w);
                out.push(&mut stem.b);
                for blk in blocks {
                    out.push(&mut blk.conv1.w);
                    out.push(&mut blk.conv1.b);
                    out.push(&mut blk.conv2.w);
                    out.push(&mut blk.conv2.b);
                    if let Some(s) = &mut blk.shortcut {
                        out.push(&mut s.w);
                        out.push(&mut s.b);
                    }
                }
            }
        }
        for head in [&mut self.quality, &mut self.consensus, &mut self.domain] {
            for l in &mut head.layers {
                out.push(&mut l.w);
                out.push(&mut l.b);
            }
        }
        out
    }

    /// Binds every parameter as a tape leaf, in canonical order.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let vars: Vec<Var> = self
            .param_tensors()
            .iter()
            .map(|(t, _)| tape.leaf((*t).clone()))
            .collect();
        BoundModel {
            vars,
            groups: self.param_tensors().iter().map(|(_, g)| *g).collect(),
            kind: self.config.kind,
            backbone_shape: self.backbone_shape(),
            std_floor: self.std_floor,
        }
    }

    fn backbone_shape(&self) -> BackboneShape {
        match &self.backbone {
            Backbone::SmallConv { convs } => BackboneShape::SmallConv { n: convs.len() },
            Backbone::Resnet { blocks, .. } => BackboneShape::Resnet {
                blocks: blocks
                    .iter()
                    .map(|b| (b.shortcut.is_some(), b.conv1.stride))
                    .collect(),
            },
        }
    }

    /// Validates that an image is large enough for the backbone.
    pub fn check_input(&self, img: &RasterImage) -> Result<()> {
        if img.width() < MIN_INPUT || img.height() < MIN_INPUT {
            return Err(Error::validation(format!(
                "image {}x{} below backbone minimum {}x{}",
                img.height(),
                img.width(),
                MIN_INPUT,
                MIN_INPUT
            )));
        }
        Ok(())
    }

    /// Inference: score and positive std for one image at its native size.
    pub fn forward_quality(&self, img: &RasterImage) -> Result<QualityOutput> {
        self.check_input(img)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let x = tape.leaf(image_to_tensor(img));
        let feat = bound.features(&mut tape, x);
        let (score, std) = bound.quality(&mut tape, feat);
        Ok(QualityOutput {
            score: tape.value(score).item(),
            std: tape.value(std).item(),
        })
    }

    /// Inference: pooled feature vector for one image.
    pub fn forward_features(&self, img: &RasterImage) -> Result<Vec<f64>> {
        self.check_input(img)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let x = tape.leaf(image_to_tensor(img));
        let feat = bound.features(&mut tape, x);
        Ok(tape.value(feat).data.clone())
    }

    /// Inference: consensus probability for a feature pair.
    pub fn forward_clc(&self, feat_x: &[f64], feat_y: &[f64]) -> Result<f64> {
        let fd = self.config.feature_dim;
        if feat_x.len() != fd || feat_y.len() != fd {
            return Err(Error::validation(format!(
                "clc features must have dim {fd}, got {} and {}",
                feat_x.len(),
                feat_y.len()
            )));
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let fx = tape.leaf(Tensor::vector(feat_x.to_vec()));
        let fy = tape.leaf(Tensor::vector(feat_y.to_vec()));
        let prob = bound.consensus(&mut tape, fx, fy);
        Ok(tape.value(prob).item())
    }

    /// Inference: source-domain probability for a feature vector. The GRL
    /// sits between the feature and the discriminator (identity forward).
    pub fn forward_domain(&self, feat: &[f64], grl: GradientReversal) -> Result<f64> {
        if feat.len() != self.config.feature_dim {
            return Err(Error::validation(format!(
                "domain feature must have dim {}, got {}",
                self.config.feature_dim,
                feat.len()
            )));
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let f = tape.leaf(Tensor::vector(feat.to_vec()));
        let prob = bound.domain(&mut tape, f, grl.scale);
        Ok(tape.value(prob).item())
    }
}

enum BackboneShape {
    SmallConv { n: usize },
    /// Per block: (has projection shortcut, first-conv stride).
    Resnet { blocks: Vec<(bool, usize)> },
}

/// A model's parameters bound to one tape as leaves.
pub struct BoundModel {
    vars: Vec<Var>,
    groups: Vec<ParamGroup>,
    kind: BackboneKind,
    backbone_shape: BackboneShape,
    std_floor: f64,
}

impl BoundModel {
    /// Parameter leaves in the canonical order of
    /// [`ModelBundle::param_tensors`].
    pub fn param_vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn param_groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    fn backbone_var_count(&self) -> usize {
        match &self.backbone_shape {
            BackboneShape::SmallConv { n } => 2 * n,
            BackboneShape::Resnet { blocks } => {
                2 + blocks
                    .iter()
                    .map(|&(s, _)| if s { 6 } else { 4 })
                    .sum::<usize>()
            }
        }
    }

    /// Runs the feature extractor on a `[3, H, W]` image tensor.
    pub fn features(&self, tape: &mut Tape, image: Var) -> Var {
        match &self.backbone_shape {
            BackboneShape::SmallConv { n } => {
                let mut x = image;
                for i in 0..*n {
                    let w = self.vars[2 * i];
                    let b = self.vars[2 * i + 1];
                    x = tape.conv2d(x, w, b, 2, 1);
                    x = tape.relu(x);
                }
                tape.global_avg_pool(x)
            }
            BackboneShape::Resnet { blocks } => {
                let mut idx = 0;
                let mut next = |k: usize| {
                    let v = idx;
                    idx += k;
                    v
                };
                let stem_at = next(2);
                let mut x = tape.conv2d(image, self.vars[stem_at], self.vars[stem_at + 1], 2, 3);
                x = tape.relu(x);
                x = tape.max_pool2d(x, 3, 2);
                for &(has_shortcut, stride1) in blocks {
                    let c1 = next(2);
                    let c2 = next(2);
                    let sc = has_shortcut.then(|| next(2));
                    let mut y = tape.conv2d(x, self.vars[c1], self.vars[c1 + 1], stride1, 1);
                    y = tape.relu(y);
                    y = tape.conv2d(y, self.vars[c2], self.vars[c2 + 1], 1, 1);
                    let short = match sc {
                        Some(s) => tape.conv2d(x, self.vars[s], self.vars[s + 1], stride1, 0),
                        None => x,
                    };
                    let summed = tape.add(y, short);
                    x = tape.relu(summed);
                }
                tape.global_avg_pool(x)
            }
        }
    }

    fn head_forward(
        &self,
        tape: &mut Tape,
        head_offset: usize,
        activation: HeadActivation,
        input: Var,
    ) -> Var {
        let mut x = input;
        for layer in 0..3 {
            let w = self.vars[head_offset + 2 * layer];
            let b = self.vars[head_offset + 2 * layer + 1];
            x = tape.linear(x, w, b);
            if layer < 2 {
                x = match activation {
                    HeadActivation::Relu => tape.relu(x),
                    HeadActivation::LeakyRelu => tape.leaky_relu(x, LEAKY_SLOPE),
                };
            }
        }
        x
    }

    fn quality_offset(&self) -> usize {
        self.backbone_var_count()
    }

    fn consensus_offset(&self) -> usize {
        self.quality_offset() + 6
    }

    fn domain_offset(&self) -> usize {
        self.consensus_offset() + 6
    }

    /// Quality head: returns (score, std) scalars; std is softplus-mapped
    /// with the configured floor.
    pub fn quality(&self, tape: &mut Tape, feat: Var) -> (Var, Var) {
        let out = self.head_forward(tape, self.quality_offset(), HeadActivation::LeakyRelu, feat);
        let score = tape.index(out, 0);
        let std_raw = tape.index(out, 1);
        let sp = tape.softplus(std_raw);
        let std = tape.add_const(sp, self.std_floor);
        (score, std)
    }

    /// Consensus classifier on the concatenation `feat_x (+) feat_y`.
    pub fn consensus(&self, tape: &mut Tape, feat_x: Var, feat_y: Var) -> Var {
        let cat = tape.concat(feat_x, feat_y);
        let out = self.head_forward(tape, self.consensus_offset(), HeadActivation::Relu, cat);
        let logit = tape.index(out, 0);
        tape.sigmoid(logit)
    }

    /// Domain discriminator behind the gradient reversal layer.
    pub fn domain(&self, tape: &mut Tape, feat: Var, grl_scale: f64) -> Var {
        let reversed = tape.grad_reverse(feat, grl_scale);
        let out = self.head_forward(tape, self.domain_offset(), HeadActivation::Relu, reversed);
        let logit = tape.index(out, 0);
        tape.sigmoid(logit)
    }

    fn _kind(&self) -> BackboneKind {
        self.kind
    }
}

/// Converts an image to a `[3, H, W]` f64 tensor.
pub fn image_to_tensor(img: &RasterImage) -> Tensor {
    let (w, h) = (img.width(), img.height());
    let mut data = vec![0.0f64; 3 * h * w];
    for (i, px) in img.data().chunks_exact(3).enumerate() {
        data[i] = px[0] as f64;
        data[h * w + i] = px[1] as f64;
        data[2 * h * w + i] = px[2] as f64;
    }
    Tensor::new(vec![3, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> BackboneConfig {
        BackboneConfig {
            kind: BackboneKind::SmallConv,
            feature_dim: 16,
            input_size: (32, 32),
        }
    }

    #[test]
    fn heads_have_three_layers_with_tapered_dims() {
        let model = ModelBundle::init(BackboneConfig::small_conv(), 1).unwrap();
        for head in [&model.quality, &model.consensus, &model.domain] {
            assert_eq!(head.layer_count(), 3);
        }
        assert_eq!(model.quality.layer_dims(), vec![(64, 32), (32, 16), (16, 2)]);
        assert_eq!(model.consensus.layer_dims(), vec![(128, 32), (32, 16), (16, 1)]);
        assert_eq!(model.domain.layer_dims(), vec![(64, 32), (32, 16), (16, 1)]);
    }

    #[test]
    fn quality_std_is_positive_even_for_extreme_preactivations() {
        let mut model = ModelBundle::init(tiny_config(), 3).unwrap();
        // Force a hugely negative raw std via the last layer bias.
        let last = model.quality.layers.last_mut().unwrap();
        last.b.data[1] = -1e6;
        for v in &mut last.w.data {
            *v = 0.0;
        }
        let img = RasterImage::constant(32, 32, [0.5; 3]);
        let out = model.forward_quality(&img).unwrap();
        assert!(out.std >= model.std_floor);
        assert!(out.std.is_finite());
    }

    #[test]
    fn inference_is_deterministic_and_resolution_agnostic() {
        let model = ModelBundle::init(tiny_config(), 5).unwrap();
        let img = crate::fixture::generate_pristine(1, 48, 9).pop().unwrap();
        let a = model.forward_quality(&img).unwrap();
        let b = model.forward_quality(&img).unwrap();
        assert_eq!(a, b);
        let bigger = crate::fixture::generate_pristine(1, 80, 9).pop().unwrap();
        let c = model.forward_quality(&bigger).unwrap();
        assert!(c.score.is_finite() && c.std > 0.0);
    }

    #[test]
    fn too_small_input_rejected() {
        let model = ModelBundle::init(tiny_config(), 5).unwrap();
        let img = RasterImage::constant(8, 8, [0.5; 3]);
        assert!(model.forward_quality(&img).is_err());
    }

    #[test]
    fn clc_bounds_and_asymmetry() {
        let model = ModelBundle::init(tiny_config(), 7).unwrap();
        let fd = model.config.feature_dim;
        let a: Vec<f64> = (0..fd).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..fd).map(|i| (i as f64 * 0.11).cos()).collect();
        let pab = model.forward_clc(&a, &b).unwrap();
        let pba = model.forward_clc(&b, &a).unwrap();
        assert!(pab > 0.0 && pab < 1.0);
        assert!(pba > 0.0 && pba < 1.0);
        assert_ne!(pab, pba, "concatenation order should matter");
        assert!(model.forward_clc(&a[..fd - 1], &b).is_err());
    }

    #[test]
    fn domain_forward_ignores_grl_scale() {
        let model = ModelBundle::init(tiny_config(), 11).unwrap();
        let fd = model.config.feature_dim;
        let feat: Vec<f64> = (0..fd).map(|i| (i as f64 * 0.21).sin()).collect();
        let p0 = model
            .forward_domain(&feat, GradientReversal { scale: 0.0 })
            .unwrap();
        let p1 = model
            .forward_domain(&feat, GradientReversal { scale: 1.0 })
            .unwrap();
        assert_eq!(p0, p1);
        assert!(p0 > 0.0 && p0 < 1.0);
    }

    #[test]
    fn resnet_backbone_forwards_and_binds_consistently() {
        let config = BackboneConfig {
            kind: BackboneKind::Resnet18Like,
            feature_dim: 32,
            input_size: (64, 64),
        };
        let mut model = ModelBundle::init(config, 13).unwrap();
        let img = crate::fixture::generate_pristine(1, 64, 2).pop().unwrap();
        let out = model.forward_quality(&img).unwrap();
        assert!(out.score.is_finite() && out.std > 0.0);
        // Canonical order agreement between tensors and bound vars.
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let tensors = model.param_tensors();
        assert_eq!(bound.param_vars().len(), tensors.len());
        for (var, (tensor, _)) in bound.param_vars().iter().zip(&tensors) {
            assert_eq!(&tape.value(*var).shape, &tensor.shape);
        }
        assert_eq!(
            model.param_tensors_mut().len(),
            bound.param_vars().len(),
            "mutable view must match"
        );
    }

    #[test]
    fn small_conv_bind_order_matches_param_tensors() {
        let model = ModelBundle::init(tiny_config(), 17).unwrap();
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        for (var, (tensor, _)) in bound.param_vars().iter().zip(model.param_tensors()) {
            assert_eq!(tape.value(*var), tensor);
        }
    }
}
