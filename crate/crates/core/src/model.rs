//! The reconstruction network.
//!
//! A shared convolutional encoder `E` feeds three transposed-convolution
//! decoders, one per enrolled person. Two kinds of linear autoencoder
//! ("leaves") hang off the main path:
//!
//! * the common leaf reconstructs the flattened encoder output of every class;
//! * private leaf `k` reconstructs the (average pooled) activation that enters
//!   the final layer of decoder `k`.
//!
//! Training minimizes three main reconstruction errors, one common-leaf error
//! and three private-leaf errors. At test time `CL + PL_i` scores OOD-ness
//! and `MP_i + PL_i` picks the class.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{
    conv_out_len, conv_transpose_out_len, Gradients, Graph, ParamId, ParamStore, Scalar, Tensor,
    TensorError, Var,
};

pub const NUM_CLASSES: usize = 3;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("class index {0} out of range, expected 0..3")]
    Class(usize),
    #[error("expected input of shape [B, {channels}, {height}, {width}], got {got:?}")]
    Input {
        channels: usize,
        height: usize,
        width: usize,
        got: Vec<usize>,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

impl ModelError {
    /// True for NaN or infinity detected in the forward pass.
    pub fn is_numeric(&self) -> bool {
        matches!(self, ModelError::Tensor(TensorError::NonFinite { .. }))
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoodConfig {
    pub encoder_channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub cl_latent: usize,
    pub pl_latent: usize,
    pub pl_pool_factor: usize,
    pub leaky_slope: f64,
    /// Chirps per frame.
    pub input_height: usize,
    /// Samples per chirp.
    pub input_width: usize,
    pub seed: u64,
}

impl Default for FoodConfig {
    fn default() -> Self {
        Self {
            encoder_channels: vec![3, 16, 32, 64],
            kernel: 3,
            stride: 2,
            padding: 1,
            cl_latent: 128,
            pl_latent: 128,
            pl_pool_factor: 4,
            leaky_slope: 0.2,
            input_height: 64,
            input_width: 128,
            seed: 0,
        }
    }
}

/// Spatial sizes along the encoder, plus the decoder output padding that
/// undoes each encoder stage exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapePlan {
    /// `(channels, height, width)` entering each encoder layer, then the
    /// encoder output.
    pub stages: Vec<(usize, usize, usize)>,
    /// Output padding of decoder layer `l` (which inverts encoder layer
    /// `L - 1 - l`).
    pub output_padding: Vec<usize>,
}

impl ShapePlan {
    pub fn latent(&self) -> (usize, usize, usize) {
        *self.stages.last().expect("at least two stages")
    }

    /// Flattened encoder output, the common leaf width.
    pub fn cl_width(&self) -> usize {
        let (c, h, w) = self.latent();
        c * h * w
    }

    /// Shape of the activation entering each decoder's final layer.
    pub fn pre_final(&self) -> (usize, usize, usize) {
        self.stages[1]
    }
}

impl FoodConfig {
    pub fn validate(&self) -> Result<ShapePlan> {
        let bad = |m: String| Err(ModelError::Config(m));
        let ch = &self.encoder_channels;
        if ch.len() < 3 {
            return bad(format!(
                "need at least two encoder layers, got channel chain {ch:?}"
            ));
        }
        if ch[0] != 3 {
            return bad(format!(
                "first channel count must equal the 3 receivers, got {}",
                ch[0]
            ));
        }
        if ch.contains(&0) {
            return bad(format!("zero channel count in {ch:?}"));
        }
        if self.kernel == 0 || self.stride == 0 {
            return bad("kernel and stride must be positive".into());
        }
        if self.cl_latent == 0 || self.pl_latent == 0 || self.pl_pool_factor == 0 {
            return bad("latent sizes and pool factor must be positive".into());
        }
        if !(self.leaky_slope.is_finite() && (0.0..1.0).contains(&self.leaky_slope)) {
            return bad(format!("leaky slope {} outside [0, 1)", self.leaky_slope));
        }
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let mut stages = vec![(ch[0], self.input_height, self.input_width)];
        let mut pads = Vec::new();
        for &c_out in &ch[1..] {
            let (_, h, w) = *stages.last().unwrap();
            let (Some(oh), Some(ow)) = (conv_out_len(h, k, s, p), conv_out_len(w, k, s, p)) else {
                return bad(format!("encoder cannot shrink {h}x{w} further"));
            };
            let back_h = conv_transpose_out_len(oh, k, s, p, 0).unwrap_or(usize::MAX);
            let back_w = conv_transpose_out_len(ow, k, s, p, 0).unwrap_or(usize::MAX);
            let (Some(ph), Some(pw)) = (h.checked_sub(back_h), w.checked_sub(back_w)) else {
                return bad(format!("decoder cannot restore {h}x{w}"));
            };
            if ph != pw || ph >= s {
                return bad(format!(
                    "decoder cannot restore {h}x{w} from {oh}x{ow} with one output padding"
                ));
            }
            pads.push(ph);
            stages.push((c_out, oh, ow));
        }
        pads.reverse();
        let plan = ShapePlan {
            stages,
            output_padding: pads,
        };
        let (_, h1, w1) = plan.pre_final();
        if h1 % self.pl_pool_factor != 0 || w1 % self.pl_pool_factor != 0 {
            return bad(format!(
                "pool factor {} does not divide the {h1}x{w1} private-leaf input",
                self.pl_pool_factor
            ));
        }
        Ok(plan)
    }

    /// Width of each private leaf after pooling.
    pub fn pl_width(&self, plan: &ShapePlan) -> usize {
        let (c, h, w) = plan.pre_final();
        c * (h / self.pl_pool_factor) * (w / self.pl_pool_factor)
    }

    /// Closed-form number of trainable scalars.
    pub fn param_count(&self) -> Result<usize> {
        let plan = self.validate()?;
        let k2 = self.kernel * self.kernel;
        let convs: usize = self
            .encoder_channels
            .windows(2)
            .map(|w| w[0] * w[1] * k2 + w[1])
            .sum();
        // decoders mirror the encoder, biases sized by their outputs
        let deconvs: usize = self
            .encoder_channels
            .windows(2)
            .map(|w| w[0] * w[1] * k2 + w[0])
            .sum();
        let pair = |n: usize, m: usize| 2 * n * m + n + m;
        Ok(convs
            + NUM_CLASSES * deconvs
            + pair(plan.cl_width(), self.cl_latent)
            + NUM_CLASSES * pair(self.pl_width(&plan), self.pl_latent))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Layer {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LinearPair {
    enc: Layer,
    dec: Layer,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    encoder: Vec<Layer>,
    decoders: [Vec<Layer>; NUM_CLASSES],
    cl: LinearPair,
    pl: [LinearPair; NUM_CLASSES],
}

/// Outputs of one pass through `E` and `D_j`.
#[derive(Debug, Clone, Copy)]
pub struct ClassForward {
    pub recon: Var,
    /// Encoder output.
    pub latent: Var,
    /// Activation entering the final layer of `D_j`.
    pub pre_final: Var,
}

/// Node handles of the seven loss terms on a training graph.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub mp: [Var; NUM_CLASSES],
    pub cl: Var,
    pub pl: [Var; NUM_CLASSES],
    pub total: Var,
}

/// Values of the seven loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mp: [f64; NUM_CLASSES],
    pub cl: f64,
    pub pl: [f64; NUM_CLASSES],
    pub total: f64,
}

impl LossBreakdown {
    /// Sum of the seven components in the order mp1..mp3, cl, pl1..pl3.
    pub fn component_sum(mp: &[f64; 3], cl: f64, pl: &[f64; 3]) -> f64 {
        mp.iter()
            .chain(std::iter::once(&cl))
            .chain(pl)
            .fold(0.0, |a, &b| a + b)
    }

    fn from_parts(mp: [f64; 3], cl: f64, pl: [f64; 3]) -> Self {
        Self {
            mp,
            cl,
            pl,
            total: Self::component_sum(&mp, cl, &pl),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mp.iter().chain(&self.pl).all(|v| v.is_finite()) && self.cl.is_finite()
    }

    /// Elementwise mean of several breakdowns.
    pub fn mean(items: &[LossBreakdown]) -> Option<Self> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        let avg = |f: &dyn Fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        Some(Self::from_parts(
            [0, 1, 2].map(|i| avg(&|b| b.mp[i])),
            avg(&|b| b.cl),
            [0, 1, 2].map(|i| avg(&|b| b.pl[i])),
        ))
    }
}

/// Per-sample reconstruction errors from every branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconErrors {
    pub mp: [f64; NUM_CLASSES],
    pub cl: f64,
    pub pl: [f64; NUM_CLASSES],
}

/// Test-time scores of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    /// `CL + PL_i`, higher means more OOD-like for class `i`.
    pub ood_scores: [f64; NUM_CLASSES],
    /// `MP_i + PL_i`, lowest picks the class.
    pub cls_scores: [f64; NUM_CLASSES],
}

impl ReconErrors {
    pub fn scores(&self) -> ScoreTriple {
        ScoreTriple {
            ood_scores: self.pl.map(|p| self.cl + p),
            cls_scores: [0, 1, 2].map(|i| self.mp[i] + self.pl[i]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoodModel<T: Scalar = f32> {
    config: FoodConfig,
    plan: ShapePlan,
    params: ParamStore<T>,
    layout: Layout,
}

/// Kaiming-uniform bound `gain * sqrt(3 / fan_in)`.
fn kaiming_bound(fan_in: usize, gain: f64) -> f64 {
    gain * (3.0 / fan_in as f64).sqrt()
}

fn uniform<T: Scalar>(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    Tensor::from_fn(shape.to_vec(), |_| T::lit(rng.random_range(-bound..=bound)))
}

impl<T: Scalar> FoodModel<T> {
    /// Initializes all parameters from `config.seed`.
    pub fn build(config: FoodConfig) -> Result<Self> {
        let plan = config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let k = config.kernel;
        let relu_gain = (2.0 / (1.0 + config.leaky_slope * config.leaky_slope)).sqrt();
        let ch = &config.encoder_channels;
        let depth = ch.len() - 1;

        let add_layer = |params: &mut ParamStore<T>,
                         rng: &mut ChaCha8Rng,
                         name: String,
                         wshape: Vec<usize>,
                         bias_len: usize,
                         fan_in: usize,
                         gain: f64| {
            let bound = kaiming_bound(fan_in, gain);
            let weight = params.insert(format!("{name}.weight"), uniform(&wshape, bound, rng));
            let bias = params.insert(format!("{name}.bias"), Tensor::zeros([bias_len]));
            Layer { weight, bias }
        };

        let encoder = (0..depth)
            .map(|l| {
                add_layer(
                    &mut params,
                    &mut rng,
                    format!("encoder.{l}"),
                    vec![ch[l + 1], ch[l], k, k],
                    ch[l + 1],
                    ch[l] * k * k,
                    relu_gain,
                )
            })
            .collect();

        let decoders = [0, 1, 2].map(|j| {
            (0..depth)
                .map(|l| {
                    let (c_in, c_out) = (ch[depth - l], ch[depth - l - 1]);
                    let last = l + 1 == depth;
                    let fan_in = (c_in * k * k / (config.stride * config.stride)).max(1);
                    add_layer(
                        &mut params,
                        &mut rng,
                        format!("decoder{}.{l}", j + 1),
                        vec![c_in, c_out, k, k],
                        c_out,
                        fan_in,
                        if last { 1.0 } else { relu_gain },
                    )
                })
                .collect::<Vec<_>>()
        });

        let add_pair = |params: &mut ParamStore<T>,
                        rng: &mut ChaCha8Rng,
                        name: &str,
                        width: usize,
                        latent: usize| {
            LinearPair {
                enc: add_layer(
                    params,
                    rng,
                    format!("{name}.enc"),
                    vec![latent, width],
                    latent,
                    width,
                    1.0,
                ),
                dec: add_layer(
                    params,
                    rng,
                    format!("{name}.dec"),
                    vec![width, latent],
                    width,
                    latent,
                    1.0,
                ),
            }
        };
        let cl = add_pair(
            &mut params,
            &mut rng,
            "cl",
            plan.cl_width(),
            config.cl_latent,
        );
        let pl_width = config.pl_width(&plan);
        let pl = [0, 1, 2].map(|j| {
            add_pair(
                &mut params,
                &mut rng,
                &format!("pl{}", j + 1),
                pl_width,
                config.pl_latent,
            )
        });

        Ok(Self {
            config,
            plan,
            params,
            layout: Layout {
                encoder,
                decoders,
                cl,
                pl,
            },
        })
    }

    /// Replaces every parameter tensor, checking names and shapes.
    pub fn from_params(config: FoodConfig, params: ParamStore<T>) -> Result<Self> {
        let mut model = Self::build(config)?;
        if params.len() != model.params.len() {
            return Err(ModelError::Config(format!(
                "{} parameter tensors, architecture has {}",
                params.len(),
                model.params.len()
            )));
        }
        for (id, name, tensor) in model.params.iter() {
            let (other_name, other) = (params.name(id), params.get(id));
            if other_name != name || other.shape() != tensor.shape() {
                return Err(ModelError::Config(format!(
                    "parameter {id:?}: expected {name} {:?}, got {other_name} {:?}",
                    tensor.shape(),
                    other.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &FoodConfig {
        &self.config
    }

    pub fn plan(&self) -> &ShapePlan {
        &self.plan
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> FoodModel<U> {
        FoodModel {
            config: self.config.clone(),
            plan: self.plan.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    /// Parameters of decoder `class` and its private leaf.
    pub fn branch_params(&self, class: usize) -> Vec<ParamId> {
        self.layout.decoders[class]
            .iter()
            .flat_map(|l| [l.weight, l.bias])
            .chain([
                self.layout.pl[class].enc.weight,
                self.layout.pl[class].enc.bias,
                self.layout.pl[class].dec.weight,
                self.layout.pl[class].dec.bias,
            ])
            .collect()
    }

    /// Parameters of decoder `class` only (not its private leaf).
    pub fn decoder_only_params(&self, class: usize) -> Vec<ParamId> {
        self.layout.decoders[class]
            .iter()
            .flat_map(|l| [l.weight, l.bias])
            .collect()
    }

    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        let (c, h, w) = self.plan.stages[0];
        match *shape {
            [b, cc, hh, ww] if cc == c && hh == h && ww == w => {
                if b == 0 {
                    Err(ModelError::EmptyBatch)
                } else {
                    Ok(())
                }
            }
            _ => Err(ModelError::Input {
                channels: c,
                height: h,
                width: w,
                got: shape.to_vec(),
            }),
        }
    }

    fn layer_vars(g: &mut Graph<'_, T>, l: Layer) -> (Var, Var) {
        (g.param(l.weight), g.param(l.bias))
    }

    pub fn encode(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        self.check_input(g.shape(x))?;
        let mut h = x;
        for &layer in &self.layout.encoder {
            let (w, b) = Self::layer_vars(g, layer);
            h = g.conv2d(h, w, b, self.config.stride, self.config.padding)?;
            h = g.leaky_relu(h, self.config.leaky_slope);
        }
        Ok(h)
    }

    /// Runs decoder `class`, returning `(reconstruction, pre-final activation)`.
    pub fn decode(&self, g: &mut Graph<'_, T>, latent: Var, class: usize) -> Result<(Var, Var)> {
        let layers = self
            .layout
            .decoders
            .get(class)
            .ok_or(ModelError::Class(class))?;
        let mut h = latent;
        let mut pre_final = latent;
        for (l, &layer) in layers.iter().enumerate() {
            if l + 1 == layers.len() {
                pre_final = h;
            }
            let (w, b) = Self::layer_vars(g, layer);
            h = g.conv_transpose2d(
                h,
                w,
                b,
                self.config.stride,
                self.config.padding,
                self.plan.output_padding[l],
            )?;
            if l + 1 < layers.len() {
                h = g.leaky_relu(h, self.config.leaky_slope);
            }
        }
        Ok((h, pre_final))
    }

    pub fn forward_class(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        class: usize,
    ) -> Result<ClassForward> {
        if class >= NUM_CLASSES {
            return Err(ModelError::Class(class));
        }
        let latent = self.encode(g, x)?;
        let (recon, pre_final) = self.decode(g, latent, class)?;
        Ok(ClassForward {
            recon,
            latent,
            pre_final,
        })
    }

    fn leaf(&self, g: &mut Graph<'_, T>, input: Var, pair: LinearPair) -> Result<Var> {
        let (ew, eb) = Self::layer_vars(g, pair.enc);
        let code = g.linear(input, ew, eb)?;
        let (dw, db) = Self::layer_vars(g, pair.dec);
        Ok(g.linear(code, dw, db)?)
    }

    /// Flattened common-leaf input and its reconstruction.
    pub fn common_leaf(&self, g: &mut Graph<'_, T>, latent: Var) -> Result<(Var, Var)> {
        let flat = g.flatten(latent)?;
        let recon = self.leaf(g, flat, self.layout.cl)?;
        Ok((flat, recon))
    }

    /// Pooled, flattened private-leaf input and its reconstruction.
    pub fn private_leaf(
        &self,
        g: &mut Graph<'_, T>,
        pre_final: Var,
        class: usize,
    ) -> Result<(Var, Var)> {
        let pair = *self.layout.pl.get(class).ok_or(ModelError::Class(class))?;
        let pooled = if self.config.pl_pool_factor > 1 {
            g.avg_pool2d(pre_final, self.config.pl_pool_factor)?
        } else {
            pre_final
        };
        let flat = g.flatten(pooled)?;
        let recon = self.leaf(g, flat, pair)?;
        Ok((flat, recon))
    }

    /// `(CL loss, PL_class loss)`. The leaf targets are not detached.
    pub fn leaf_losses(
        &self,
        g: &mut Graph<'_, T>,
        latent: Var,
        pre_final: Var,
        class: usize,
    ) -> Result<(Var, Var)> {
        let (flat, recon) = self.common_leaf(g, latent)?;
        let cl = g.mse(recon, flat)?;
        let (pflat, precon) = self.private_leaf(g, pre_final, class)?;
        let pl = g.mse(precon, pflat)?;
        Ok((cl, pl))
    }

    /// Records the seven losses for one balanced batch per class.
    pub fn training_losses(
        &self,
        g: &mut Graph<'_, T>,
        batches: [&Tensor<T>; NUM_CLASSES],
    ) -> Result<LossVars> {
        let mut mp = Vec::with_capacity(NUM_CLASSES);
        let mut cl = Vec::with_capacity(NUM_CLASSES);
        let mut pl = Vec::with_capacity(NUM_CLASSES);
        for (class, batch) in batches.into_iter().enumerate() {
            self.check_input(batch.shape())?;
            let x = g.input(batch.clone(), false);
            let f = self.forward_class(g, x, class)?;
            mp.push(g.mse(f.recon, x)?);
            let (c, p) = self.leaf_losses(g, f.latent, f.pre_final, class)?;
            cl.push(c);
            pl.push(p);
        }
        let cl = g.sum(&cl)?;
        let mut terms = mp.clone();
        terms.push(cl);
        terms.extend_from_slice(&pl);
        let total = g.sum(&terms)?;
        Ok(LossVars {
            mp: [mp[0], mp[1], mp[2]],
            cl,
            pl: [pl[0], pl[1], pl[2]],
            total,
        })
    }

    /// Loss values and parameter gradients for one step.
    pub fn loss_and_grads(
        &self,
        batches: [&Tensor<T>; NUM_CLASSES],
    ) -> Result<(LossBreakdown, Gradients<T>)> {
        let mut g = Graph::new(&self.params);
        let vars = self.training_losses(&mut g, batches)?;
        let breakdown = breakdown_of(&g, &vars);
        let grads = g.backward(vars.total)?;
        Ok((breakdown, grads))
    }

    /// Loss values only.
    pub fn losses(&self, batches: [&Tensor<T>; NUM_CLASSES]) -> Result<LossBreakdown> {
        let mut g = Graph::inference(&self.params);
        let vars = self.training_losses(&mut g, batches)?;
        Ok(breakdown_of(&g, &vars))
    }

    /// Reconstruction errors of every sample of `x: [B, C, H, W]` through
    /// the whole network.
    pub fn recon_errors(&self, x: &Tensor<T>) -> Result<Vec<ReconErrors>> {
        self.check_input(x.shape())?;
        let batch = x.shape()[0];
        let mut g = Graph::inference(&self.params);
        let xv = g.input(x.clone(), false);
        let latent = self.encode(&mut g, xv)?;
        let (flat, cl_recon) = self.common_leaf(&mut g, latent)?;
        let cl = per_sample_mse(g.value(flat), g.value(cl_recon), batch);
        let mut mp = Vec::with_capacity(NUM_CLASSES);
        let mut pl = Vec::with_capacity(NUM_CLASSES);
        for class in 0..NUM_CLASSES {
            let (recon, pre_final) = self.decode(&mut g, latent, class)?;
            mp.push(per_sample_mse(g.value(xv), g.value(recon), batch));
            let (pflat, precon) = self.private_leaf(&mut g, pre_final, class)?;
            pl.push(per_sample_mse(g.value(pflat), g.value(precon), batch));
        }
        let out: Vec<ReconErrors> = (0..batch)
            .map(|i| ReconErrors {
                mp: [mp[0][i], mp[1][i], mp[2][i]],
                cl: cl[i],
                pl: [pl[0][i], pl[1][i], pl[2][i]],
            })
            .collect();
        if out
            .iter()
            .any(|e| !(e.cl.is_finite() && e.mp.iter().chain(&e.pl).all(|v| v.is_finite())))
        {
            return Err(TensorError::NonFinite { op: "score" }.into());
        }
        Ok(out)
    }

    /// Scores of a single `[1, C, H, W]` (or `[C, H, W]`) frame.
    pub fn score_sample(&self, x: &Tensor<T>) -> Result<ScoreTriple> {
        let x = if x.ndim() == 3 {
            let mut shape = vec![1];
            shape.extend_from_slice(x.shape());
            x.clone().reshape(shape)?
        } else {
            x.clone()
        };
        if x.shape().first() != Some(&1) {
            return Err(ModelError::Input {
                channels: self.plan.stages[0].0,
                height: self.plan.stages[0].1,
                width: self.plan.stages[0].2,
                got: x.shape().to_vec(),
            });
        }
        Ok(self.recon_errors(&x)?[0].scores())
    }
}

fn breakdown_of<T: Scalar>(g: &Graph<'_, T>, vars: &LossVars) -> LossBreakdown {
    let v = |var: Var| g.value(var).item().to_f64().unwrap_or(f64::NAN);
    LossBreakdown::from_parts(vars.mp.map(v), v(vars.cl), vars.pl.map(v))
}

/// Row-wise mean squared difference of two `[B, ...]` tensors.
fn per_sample_mse<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, batch: usize) -> Vec<f64> {
    let n = a.len() / batch;
    a.data()
        .chunks_exact(n)
        .zip(b.data().chunks_exact(n))
        .map(|(x, y)| crate::tensor::squared_error_sum(x, y) / n as f64)
        .collect()
}
