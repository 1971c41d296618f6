//! Declarative network architectures and the models built from them.
//!
//! An [`ArchSpec`] is plain data (loaded from TOML): an ordered backbone, a
//! class head producing `K` logits, a source head producing one raw score, and
//! a generator mapping `latent_dim + K` inputs to an image. The baseline CNN is
//! exactly `backbone + class_head`; the discriminator adds the source head.
//! Both are initialised from the same per-section seed streams, so for a given
//! seed their shared parameters are identical.

use std::path::Path;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::layers::{self, conv_out, deconv_out, IndexCache};
use crate::rng::SeedStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Standard deviation of the centred Gaussian used for weight init.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn numel(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.height, self.width, self.channels]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layer {
    Conv {
        filters: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Deconv {
        filters: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Dense {
        units: usize,
        /// Declared input width; checked against the inferred width when set.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        in_features: Option<usize>,
    },
    MaxPool {
        size: usize,
        stride: usize,
    },
    LayerNorm,
    BatchNorm,
    Relu,
    LeakyRelu {
        slope: f64,
    },
    Tanh,
    Flatten,
    /// Reshape a flat feature vector to `[h, w, c]`.
    Reshape {
        shape: Vec<usize>,
    },
}

fn one() -> usize {
    1
}

impl Layer {
    /// Parameter shapes given the per-sample input shape.
    fn param_shapes(&self, input: &[usize]) -> Vec<Vec<usize>> {
        match *self {
            Layer::Conv {
                filters, kernel, ..
            } => {
                vec![vec![kernel * kernel * input[2], filters], vec![filters]]
            }
            Layer::Deconv {
                filters, kernel, ..
            } => {
                vec![vec![input[2], kernel * kernel * filters], vec![filters]]
            }
            Layer::Dense { units, .. } => vec![vec![input[0], units], vec![units]],
            Layer::LayerNorm | Layer::BatchNorm => {
                let c = *input.last().unwrap();
                vec![vec![c], vec![c]]
            }
            _ => vec![],
        }
    }

    /// Per-sample output shape, or an error describing the mismatch.
    fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        let need3 = |what: &str| -> std::result::Result<(usize, usize, usize), String> {
            match *input {
                [h, w, c] => Ok((h, w, c)),
                _ => Err(format!("{what} needs an [h, w, c] input, got {input:?}")),
            }
        };
        match *self {
            Layer::Conv {
                filters,
                kernel,
                stride,
                padding,
            } => {
                let (h, w, _) = need3("conv")?;
                if stride == 0 || kernel == 0 || filters == 0 {
                    return Err("conv needs positive filters/kernel/stride".into());
                }
                let oh =
                    conv_out(h, kernel, stride, padding).ok_or("conv kernel larger than input")?;
                let ow =
                    conv_out(w, kernel, stride, padding).ok_or("conv kernel larger than input")?;
                Ok(vec![oh, ow, filters])
            }
            Layer::Deconv {
                filters,
                kernel,
                stride,
                padding,
            } => {
                let (h, w, _) = need3("deconv")?;
                if stride == 0 || kernel == 0 || filters == 0 {
                    return Err("deconv needs positive filters/kernel/stride".into());
                }
                let oh =
                    deconv_out(h, kernel, stride, padding).ok_or("deconv geometry underflow")?;
                let ow =
                    deconv_out(w, kernel, stride, padding).ok_or("deconv geometry underflow")?;
                Ok(vec![oh, ow, filters])
            }
            Layer::Dense { units, in_features } => {
                let [f] = *input else {
                    return Err(format!(
                        "dense needs a flat input (add `flatten`), got {input:?}"
                    ));
                };
                if let Some(decl) = in_features {
                    if decl != f {
                        return Err(format!(
                            "dense declares in_features={decl} but receives width {f}"
                        ));
                    }
                }
                if units == 0 {
                    return Err("dense needs units > 0".into());
                }
                Ok(vec![units])
            }
            Layer::MaxPool { size, stride } => {
                let (h, w, c) = need3("max_pool")?;
                if size == 0 || stride == 0 {
                    return Err("max_pool needs positive size/stride".into());
                }
                let oh = conv_out(h, size, stride, 0).ok_or("pool window larger than input")?;
                let ow = conv_out(w, size, stride, 0).ok_or("pool window larger than input")?;
                Ok(vec![oh, ow, c])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Reshape { ref shape } => {
                let n: usize = input.iter().product();
                if shape.iter().product::<usize>() != n || shape.len() != 3 {
                    return Err(format!(
                        "reshape {input:?} -> {shape:?} is not a valid [h, w, c]"
                    ));
                }
                Ok(shape.clone())
            }
            Layer::LayerNorm
            | Layer::BatchNorm
            | Layer::Relu
            | Layer::LeakyRelu { .. }
            | Layer::Tanh => Ok(input.to_vec()),
        }
    }
}

/// Network sections, in parameter-layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Backbone,
    ClassHead,
    SourceHead,
    Generator,
}

impl Section {
    fn stream_label(self) -> &'static str {
        match self {
            Section::Backbone => "init/backbone",
            Section::ClassHead => "init/class_head",
            Section::SourceHead => "init/source_head",
            Section::Generator => "init/generator",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetRole {
    Discriminator,
    BaselineCnn,
    Generator,
}

impl NetRole {
    fn sections(self) -> &'static [Section] {
        match self {
            NetRole::Discriminator => &[Section::Backbone, Section::ClassHead, Section::SourceHead],
            NetRole::BaselineCnn => &[Section::Backbone, Section::ClassHead],
            NetRole::Generator => &[Section::Generator],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub name: String,
    pub image: ImageShape,
    pub num_classes: usize,
    pub latent_dim: usize,
    pub backbone: Vec<Layer>,
    pub class_head: Vec<Layer>,
    pub source_head: Vec<Layer>,
    #[serde(default)]
    pub generator: Vec<Layer>,
}

impl ArchSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: ArchSpec = toml::from_str(s).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("arch spec serializes")
    }

    pub fn layers(&self, section: Section) -> &[Layer] {
        match section {
            Section::Backbone => &self.backbone,
            Section::ClassHead => &self.class_head,
            Section::SourceHead => &self.source_head,
            Section::Generator => &self.generator,
        }
    }

    pub fn generator_input_width(&self) -> usize {
        self.latent_dim + self.num_classes
    }

    fn section_input(&self, section: Section) -> Result<Vec<usize>> {
        match section {
            Section::Backbone => Ok(self.image.dims()),
            Section::ClassHead | Section::SourceHead => self.backbone_output(),
            Section::Generator => Ok(vec![self.generator_input_width()]),
        }
    }

    /// Per-sample output shape of the backbone.
    pub fn backbone_output(&self) -> Result<Vec<usize>> {
        infer(&self.backbone, self.image.dims(), "backbone")
    }

    /// Checks every structural invariant of the spec.
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Spec("num_classes must be at least 2".into()));
        }
        if self.image.numel() == 0 {
            return Err(Error::Spec("image shape must be non-empty".into()));
        }
        let feat = self.backbone_output()?;
        if feat.len() != 1 {
            return Err(Error::Spec(format!(
                "backbone must end flat (add `flatten`), ends with {feat:?}"
            )));
        }
        let class_out = infer(&self.class_head, feat.clone(), "class_head")?;
        if class_out != [self.num_classes] {
            return Err(Error::Spec(format!(
                "class_head must end in {} logits, ends with {class_out:?}",
                self.num_classes
            )));
        }
        let source_out = infer(&self.source_head, feat, "source_head")?;
        if source_out != [1] {
            return Err(Error::Spec(format!(
                "source_head must end in 1 score, ends with {source_out:?}"
            )));
        }
        if !self.generator.is_empty() {
            self.validate_generator()?;
        }
        Ok(())
    }

    fn validate_generator(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Spec("latent_dim must be positive".into()));
        }
        let out = infer(
            &self.generator,
            vec![self.generator_input_width()],
            "generator",
        )?;
        if out != self.image.dims() {
            return Err(Error::Spec(format!(
                "generator produces {out:?}, dataset images are {:?}",
                self.image.dims()
            )));
        }
        if self.generator.last() != Some(&Layer::Tanh) {
            return Err(Error::Spec(
                "generator must end with `tanh` to match the [-1, 1] pixel range".into(),
            ));
        }
        Ok(())
    }

    /// True when a critic-path layer couples samples in a batch.
    pub fn critic_uses_batch_norm(&self) -> bool {
        self.backbone
            .iter()
            .chain(&self.class_head)
            .chain(&self.source_head)
            .any(|l| *l == Layer::BatchNorm)
    }
}

fn infer(layers: &[Layer], mut shape: Vec<usize>, section: &str) -> Result<Vec<usize>> {
    for (i, l) in layers.iter().enumerate() {
        shape = l
            .output_shape(&shape)
            .map_err(|e| Error::Spec(format!("{section}[{i}] ({}): {e}", layer_name(l))))?;
    }
    Ok(shape)
}

fn layer_name(l: &Layer) -> &'static str {
    match l {
        Layer::Conv { .. } => "conv",
        Layer::Deconv { .. } => "deconv",
        Layer::Dense { .. } => "dense",
        Layer::MaxPool { .. } => "max_pool",
        Layer::LayerNorm => "layer_norm",
        Layer::BatchNorm => "batch_norm",
        Layer::Relu => "relu",
        Layer::LeakyRelu { .. } => "leaky_relu",
        Layer::Tanh => "tanh",
        Layer::Flatten => "flatten",
        Layer::Reshape { .. } => "reshape",
    }
}

#[derive(Debug, Clone)]
struct SectionLayout {
    section: Section,
    /// Per-sample input shape of each layer.
    inputs: Vec<Vec<usize>>,
    /// Offset of each layer's first parameter tensor.
    offsets: Vec<usize>,
    params: std::ops::Range<usize>,
}

/// An instantiated network: spec, role, and parameter tensors.
pub struct Network<T> {
    spec: Arc<ArchSpec>,
    role: NetRole,
    layout: Vec<SectionLayout>,
    params: Vec<Tensor<T>>,
    cache: IndexCache,
}

impl<T: Scalar> Clone for Network<T> {
    fn clone(&self) -> Self {
        Network {
            spec: self.spec.clone(),
            role: self.role,
            layout: self.layout.clone(),
            params: self.params.clone(),
            cache: IndexCache::default(),
        }
    }
}

impl<T: Scalar> std::fmt::Debug for Network<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("spec", &self.spec.name)
            .field("role", &self.role)
            .field("params", &self.param_count())
            .finish()
    }
}

/// Parameters of a [`Network`] placed on a graph.
#[derive(Debug, Clone)]
pub struct Bound {
    pub vars: Vec<Var>,
}

pub fn build_discriminator<T: Scalar>(
    spec: &ArchSpec,
    init_seed: SeedStream,
) -> Result<Network<T>> {
    Network::build(spec, NetRole::Discriminator, init_seed)
}

pub fn build_baseline_cnn<T: Scalar>(spec: &ArchSpec, init_seed: SeedStream) -> Result<Network<T>> {
    Network::build(spec, NetRole::BaselineCnn, init_seed)
}

pub fn build_generator<T: Scalar>(spec: &ArchSpec, init_seed: SeedStream) -> Result<Network<T>> {
    if spec.generator.is_empty() {
        return Err(Error::Spec("spec has no generator layers".into()));
    }
    Network::build(spec, NetRole::Generator, init_seed)
}

impl<T: Scalar> Network<T> {
    pub fn build(spec: &ArchSpec, role: NetRole, init_seed: SeedStream) -> Result<Self> {
        spec.validate()?;
        let mut layout = Vec::new();
        let mut params = Vec::new();
        for &section in role.sections() {
            let start = params.len();
            let mut shape = spec.section_input(section)?;
            let mut inputs = Vec::new();
            let mut offsets = Vec::new();
            let mut rng = init_seed.derive(section.stream_label()).rng();
            for layer in spec.layers(section) {
                inputs.push(shape.clone());
                offsets.push(params.len());
                for (k, ps) in layer.param_shapes(&shape).into_iter().enumerate() {
                    let t = match (layer, k) {
                        (Layer::LayerNorm | Layer::BatchNorm, 0) => Tensor::full(&ps, T::one()),
                        (_, 0) => Tensor::from_fn(&ps, |_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            T::lit(z * INIT_STD)
                        }),
                        _ => Tensor::zeros(&ps),
                    };
                    params.push(t);
                }
                shape = layer.output_shape(&shape).map_err(Error::Spec)?;
            }
            layout.push(SectionLayout {
                section,
                inputs,
                offsets,
                params: start..params.len(),
            });
        }
        Ok(Network {
            spec: Arc::new(spec.clone()),
            role,
            layout,
            params,
            cache: IndexCache::default(),
        })
    }

    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn role(&self) -> NetRole {
        self.role
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    /// Replaces all parameters; shapes must match exactly.
    pub fn set_params(&mut self, params: Vec<Tensor<T>>) -> Result<()> {
        if params.len() != self.params.len()
            || params
                .iter()
                .zip(&self.params)
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Shape(
                "parameter set does not match network layout".into(),
            ));
        }
        self.params = params;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn section_params(&self, section: Section) -> &[Tensor<T>] {
        self.layout
            .iter()
            .find(|l| l.section == section)
            .map_or(&[][..], |l| &self.params[l.params.clone()])
    }

    pub fn has_section(&self, section: Section) -> bool {
        self.layout.iter().any(|l| l.section == section)
    }

    /// Places parameters on `g` as trainable leaves (or constants).
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    g.param(p.clone())
                } else {
                    g.constant(p.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    fn layout_of(&self, section: Section) -> &SectionLayout {
        self.layout
            .iter()
            .find(|l| l.section == section)
            .unwrap_or_else(|| panic!("{:?} network has no {section:?} section", self.role))
    }

    /// Runs one section on a batch whose trailing dims match the section input.
    pub fn run_section(&self, g: &mut Graph<T>, bound: &Bound, section: Section, x: Var) -> Var {
        let lay = self.layout_of(section);
        let mut h = x;
        for (i, layer) in self.spec.layers(section).iter().enumerate() {
            let p = &bound.vars[lay.offsets[i]..];
            h = self.apply(g, layer, p, &lay.inputs[i], h);
        }
        h
    }

    fn apply(&self, g: &mut Graph<T>, layer: &Layer, p: &[Var], input: &[usize], x: Var) -> Var {
        let batch = g.shape(x)[0];
        match *layer {
            Layer::Conv {
                kernel,
                stride,
                padding,
                ..
            } => layers::conv2d(g, &self.cache, x, p[0], p[1], kernel, stride, padding),
            Layer::Deconv {
                kernel,
                stride,
                padding,
                ..
            } => layers::deconv2d(g, &self.cache, x, p[0], p[1], kernel, stride, padding),
            Layer::Dense { .. } => {
                let y = g.matmul(x, p[0]);
                let b = g.broadcast_rows(p[1], batch);
                g.add(y, b)
            }
            Layer::MaxPool { size, stride } => layers::max_pool(g, x, size, stride),
            Layer::LayerNorm => layers::layer_norm(g, x, p[0], p[1]),
            Layer::BatchNorm => layers::batch_norm(g, x, p[0], p[1]),
            Layer::Relu => g.relu(x),
            Layer::LeakyRelu { slope } => g.leaky_relu(x, T::lit(slope)),
            Layer::Tanh => g.tanh(x),
            Layer::Flatten => {
                let f: usize = input.iter().product();
                g.reshape(x, &[batch, f])
            }
            Layer::Reshape { ref shape } => {
                let mut s = vec![batch];
                s.extend_from_slice(shape);
                g.reshape(x, &s)
            }
        }
    }

    /// Backbone features `[B, F]` for an image batch `[B, H, W, C]`.
    pub fn features(&self, g: &mut Graph<T>, bound: &Bound, images: Var) -> Var {
        self.run_section(g, bound, Section::Backbone, images)
    }

    /// Class logits `[B, K]`.
    pub fn class_logits(&self, g: &mut Graph<T>, bound: &Bound, features: Var) -> Var {
        self.run_section(g, bound, Section::ClassHead, features)
    }

    /// Raw source scores `[B]`.
    pub fn source_scores(&self, g: &mut Graph<T>, bound: &Bound, features: Var) -> Var {
        let s = self.run_section(g, bound, Section::SourceHead, features);
        let b = g.shape(s)[0];
        g.reshape(s, &[b])
    }

    /// `(source scores [B], class logits [B, K])`.
    pub fn discriminate(&self, g: &mut Graph<T>, bound: &Bound, images: Var) -> (Var, Var) {
        let f = self.features(g, bound, images);
        let s = self.source_scores(g, bound, f);
        let c = self.class_logits(g, bound, f);
        (s, c)
    }

    /// Image batch `[B, H, W, C]` from conditioned latents `[B, latent_dim + K]`.
    pub fn generate(&self, g: &mut Graph<T>, bound: &Bound, conditioned: Var) -> Var {
        self.run_section(g, bound, Section::Generator, conditioned)
    }

    /// Class logits for a plain tensor batch, evaluated in chunks without gradients.
    pub fn predict_logits(&self, images: &Tensor<T>, chunk: usize) -> Tensor<T> {
        self.eval_chunked(images, chunk, |net, g, b, x| {
            let f = net.features(g, b, x);
            net.class_logits(g, b, f)
        })
    }

    /// Backbone features for a plain tensor batch, evaluated in chunks.
    pub fn predict_features(&self, images: &Tensor<T>, chunk: usize) -> Tensor<T> {
        self.eval_chunked(images, chunk, |net, g, b, x| net.features(g, b, x))
    }

    /// Generator output for a plain tensor batch of conditioned latents.
    pub fn predict_images(&self, conditioned: &Tensor<T>) -> Tensor<T> {
        let mut g = Graph::inference();
        let b = self.bind(&mut g, false);
        let x = g.constant(conditioned.clone());
        let y = self.generate(&mut g, &b, x);
        g.value(y).clone()
    }

    fn eval_chunked(
        &self,
        images: &Tensor<T>,
        chunk: usize,
        f: impl Fn(&Self, &mut Graph<T>, &Bound, Var) -> Var,
    ) -> Tensor<T> {
        let n = images.rows();
        let chunk = chunk.max(1);
        let mut parts = Vec::new();
        let mut start = 0;
        while start < n {
            let end = (start + chunk).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let mut g = Graph::inference();
            let b = self.bind(&mut g, false);
            let x = g.constant(images.select_rows(&idx));
            let y = f(self, &mut g, &b, x);
            parts.push(g.value(y).clone());
            start = end;
        }
        if parts.is_empty() {
            return Tensor::zeros(&[0]);
        }
        let refs: Vec<&Tensor<T>> = parts.iter().collect();
        Tensor::concat_rows(&refs).expect("chunks share trailing shape")
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const TINY: &str = r#"
name = "tiny"
num_classes = 3
latent_dim = 4
image = { height = 8, width = 8, channels = 1 }
backbone = [
  { kind = "conv", filters = 4, kernel = 3, stride = 2, padding = 1 },
  { kind = "layer_norm" },
  { kind = "leaky_relu", slope = 0.2 },
  { kind = "flatten" },
]
class_head = [{ kind = "dense", units = 3, in_features = 64 }]
source_head = [{ kind = "dense", units = 1, in_features = 64 }]
generator = [
  { kind = "dense", units = 32 },
  { kind = "batch_norm" },
  { kind = "relu" },
  { kind = "reshape", shape = [4, 4, 2] },
  { kind = "deconv", filters = 1, kernel = 4, stride = 2, padding = 1 },
  { kind = "tanh" },
]
"#;

    #[test]
    fn parses_and_validates() {
        let s = ArchSpec::from_toml_str(TINY).unwrap();
        assert_eq!(s.backbone_output().unwrap(), vec![64]);
        let round = ArchSpec::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(round, s);
    }

    #[test]
    fn head_width_mismatch_is_rejected() {
        let bad = TINY.replace("units = 3, in_features = 64", "units = 3, in_features = 63");
        assert!(matches!(ArchSpec::from_toml_str(&bad), Err(Error::Spec(_))));
    }

    #[test]
    fn generator_must_match_image_and_end_in_tanh() {
        let bad = TINY.replace("filters = 1, kernel = 4", "filters = 2, kernel = 4");
        assert!(ArchSpec::from_toml_str(&bad).is_err());
        let bad = TINY.replace("  { kind = \"tanh\" },\n]", "]");
        assert!(ArchSpec::from_toml_str(&bad).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = TINY.replace("latent_dim = 4", "latent_dim = 4\ncolour = 1");
        assert!(ArchSpec::from_toml_str(&bad).is_err());
    }

    #[test]
    fn baseline_shares_backbone_and_class_head_with_discriminator() {
        let s = ArchSpec::from_toml_str(TINY).unwrap();
        let d = build_discriminator::<f32>(&s, SeedStream::new(3)).unwrap();
        let c = build_baseline_cnn::<f32>(&s, SeedStream::new(3)).unwrap();
        let src: usize = d
            .section_params(Section::SourceHead)
            .iter()
            .map(Tensor::len)
            .sum();
        assert_eq!(c.param_count(), d.param_count() - src);
        for sec in [Section::Backbone, Section::ClassHead] {
            assert_eq!(c.section_params(sec), d.section_params(sec));
        }
    }
}
