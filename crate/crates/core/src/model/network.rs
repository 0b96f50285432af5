use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{encoder_layer, project_image, project_text, ExpertVars, GateVars, LayerGate, LayerVars};
use super::{ExpertMode, GateMode, Label, ModelConfig};
use crate::numerics::{Graph, Scalar, Tensor, Var};
use crate::{Error, Result};

/// Inputs for one sample.
#[derive(Clone, Debug)]
pub struct ForwardInputs<F> {
    /// `m × image_dim` frozen image features.
    pub image: Tensor<F>,
    /// `n_T × clip_text_dim` frozen features of the internal text stream.
    pub text: Tensor<F>,
    /// Ids of the rationale-augmented stream, embedded by the model.
    pub tokens: Vec<usize>,
}

/// Per-layer, per-token expert weights of one forward pass.
///
/// Rows at or beyond `valid_rows` belong to padded internal-text positions and are
/// left out of the aggregates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateTrace {
    pub layers: Vec<Vec<[f64; 2]>>,
    pub valid_rows: usize,
    pub mean_er: f64,
    pub mean_ir: f64,
}

impl GateTrace {
    fn new(layers: Vec<Vec<[f64; 2]>>, valid_rows: usize) -> Self {
        let mut trace = Self {
            layers,
            valid_rows,
            mean_er: 0.0,
            mean_ir: 0.0,
        };
        let per_layer = trace.layer_means();
        let count = per_layer.len().max(1) as f64;
        trace.mean_er = per_layer.iter().map(|m| m[0]).sum::<f64>() / count;
        trace.mean_ir = 1.0 - trace.mean_er;
        trace
    }

    fn rows_used(&self, layer: &[[f64; 2]]) -> usize {
        if self.valid_rows == 0 {
            layer.len()
        } else {
            self.valid_rows.min(layer.len())
        }
    }

    /// Mean `(er, ir)` weight of each layer over unpadded tokens.
    pub fn layer_means(&self) -> Vec<[f64; 2]> {
        self.layers
            .iter()
            .map(|layer| {
                let used = self.rows_used(layer);
                let er = layer[..used].iter().map(|r| r[0]).sum::<f64>() / used as f64;
                [er, 1.0 - er]
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
struct ExpertLayout {
    query: usize,
    key: usize,
    value: usize,
    output: Option<usize>,
}

#[derive(Clone, Debug)]
enum GateLayout {
    Bottleneck { w1: usize, w2: usize },
    Linear { w: usize },
    None,
}

#[derive(Clone, Debug)]
struct LayerLayout {
    er: ExpertLayout,
    ir: ExpertLayout,
    gate: GateLayout,
}

#[derive(Clone, Debug)]
struct Layout {
    image_proj: usize,
    text_proj: usize,
    embedding: usize,
    layers: Vec<LayerLayout>,
    head_weight: usize,
    head_bias: usize,
}

/// Name and shape of every parameter, in storage order.
fn parameter_specs(config: &ModelConfig) -> (Vec<(String, Vec<usize>)>, Layout) {
    let d = config.model_dim;
    let k = config.attn_dim;
    let mut specs: Vec<(String, Vec<usize>)> = Vec::new();
    let mut add = |name: String, shape: Vec<usize>| {
        specs.push((name, shape));
        specs.len() - 1
    };
    let image_proj = add("image_proj".into(), vec![config.image_dim, d]);
    let text_proj = add("text_proj".into(), vec![config.clip_text_dim, d]);
    let embedding = add("embedding".into(), vec![config.vocab, d]);
    let mut layers = Vec::with_capacity(config.layers);
    for i in 0..config.layers {
        let mut expert = |tag: &str| ExpertLayout {
            query: add(format!("layer{i}.{tag}.query"), vec![d, k]),
            key: add(format!("layer{i}.{tag}.key"), vec![d, k]),
            value: add(format!("layer{i}.{tag}.value"), vec![d, k]),
            output: (k != d).then(|| add(format!("layer{i}.{tag}.output"), vec![k, d])),
        };
        let er = expert("er");
        let ir = expert("ir");
        let gate = match config.gate_mode {
            GateMode::Bottleneck => GateLayout::Bottleneck {
                w1: add(format!("layer{i}.gate.w1"), vec![2 * d, config.bottleneck_dim]),
                w2: add(format!("layer{i}.gate.w2"), vec![config.bottleneck_dim, 2]),
            },
            GateMode::Linear => GateLayout::Linear {
                w: add(format!("layer{i}.gate.linear"), vec![2 * d, 2]),
            },
            _ => GateLayout::None,
        };
        layers.push(LayerLayout { er, ir, gate });
    }
    let head_weight = add("head.weight".into(), vec![d, 2]);
    let head_bias = add("head.bias".into(), vec![1, 2]);
    (
        specs,
        Layout {
            image_proj,
            text_proj,
            embedding,
            layers,
            head_weight,
            head_bias,
        },
    )
}

/// The dual-expert network with its label head.
#[derive(Clone, Debug)]
pub struct MidreModel<F> {
    config: ModelConfig,
    names: Vec<String>,
    params: Vec<Tensor<F>>,
    layout: Layout,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: Deserialize<'de> + Scalar"))]
struct Checkpoint<F> {
    config: ModelConfig,
    params: Vec<NamedTensor<F>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: Deserialize<'de> + Scalar"))]
struct NamedTensor<F> {
    name: String,
    tensor: Tensor<F>,
}

impl<F: Scalar> MidreModel<F> {
    /// Initializes every matrix from `uniform(−1/√fan_in, 1/√fan_in)`; the embedding
    /// table uses `uniform(−1, 1)` and the head bias starts at zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (specs, layout) = parameter_specs(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::with_capacity(specs.len());
        let mut params = Vec::with_capacity(specs.len());
        for (i, (name, shape)) in specs.into_iter().enumerate() {
            let len = shape.iter().product::<usize>();
            let data: Vec<F> = if i == layout.head_bias {
                vec![F::ZERO; len]
            } else {
                let fan_in = if i == layout.embedding { 1 } else { shape[0] };
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..len)
                    .map(|_| F::from_f64(rng.random_range(-bound..bound)))
                    .collect()
            };
            names.push(name);
            params.push(Tensor::new(shape, data)?.with_requires_grad(true));
        }
        Ok(Self {
            config,
            names,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor<F>] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<F>> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    /// Overwrites one parameter's values (shape is kept).
    pub fn set_param(&mut self, name: &str, data: Vec<F>) -> Result<()> {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("no parameter named `{name}`")))?;
        self.params[i].assign(data)
    }

    pub fn named_params_mut(&mut self) -> Vec<(&str, &mut Tensor<F>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.params.iter_mut())
            .collect()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.zero_grad();
        }
    }

    /// Same weights under different expert/gate modes. Switching to a mode without
    /// gate weights drops them; switching to a learned gate the model was not built
    /// with is a configuration error.
    pub fn with_modes(&self, expert_mode: ExpertMode, gate_mode: GateMode) -> Result<Self> {
        let mut config = self.config.clone();
        config.expert_mode = expert_mode;
        config.gate_mode = gate_mode;
        let (specs, layout) = parameter_specs(&config);
        let mut names = Vec::with_capacity(specs.len());
        let mut params = Vec::with_capacity(specs.len());
        for (name, _) in specs {
            let tensor = self.param(&name).cloned().ok_or_else(|| {
                Error::Config(format!(
                    "gate mode {gate_mode:?} needs `{name}`, absent from a {:?} model",
                    self.config.gate_mode
                ))
            })?;
            names.push(name);
            params.push(tensor);
        }
        Ok(Self {
            config,
            names,
            params,
            layout,
        })
    }

    /// Converts storage precision.
    pub fn cast<G: Scalar>(&self) -> MidreModel<G> {
        MidreModel {
            config: self.config.clone(),
            names: self.names.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            layout: self.layout.clone(),
        }
    }

    /// Registers all parameters on `g` as trainable leaves, in storage order.
    pub fn bind(&self, g: &mut Graph<F>) -> Vec<Var> {
        self.params.iter().map(|p| g.param(p.clone())).collect()
    }

    /// Registers all parameters as constants.
    pub fn bind_frozen(&self, g: &mut Graph<F>) -> Vec<Var> {
        self.params.iter().map(|p| g.constant(p.clone())).collect()
    }

    /// Copies gradients from a graph (after `backward`) into the parameters.
    pub fn collect_grads(&mut self, g: &Graph<F>, vars: &[Var]) -> Result<()> {
        for (p, &v) in self.params.iter_mut().zip(vars) {
            match g.grad(v) {
                Some(grad) => p.set_grad(grad.to_vec())?,
                None => p.zero_grad(),
            }
        }
        Ok(())
    }

    fn validate_inputs(&self, inputs: &ForwardInputs<F>) -> Result<()> {
        let c = &self.config;
        if inputs.image.shape() != [c.image_tokens, c.image_dim] {
            return Err(Error::Shape(format!(
                "image features {:?}, expected [{}, {}]",
                inputs.image.shape(),
                c.image_tokens,
                c.image_dim
            )));
        }
        if inputs.text.shape().len() != 2 || inputs.text.cols() != c.clip_text_dim {
            return Err(Error::Shape(format!(
                "text features {:?}, expected [n, {}]",
                inputs.text.shape(),
                c.clip_text_dim
            )));
        }
        if inputs.tokens.is_empty() {
            return Err(Error::Input("empty token stream".into()));
        }
        if inputs.tokens.len() > c.max_tokens {
            return Err(Error::Input(format!(
                "{} tokens exceed max_tokens {}",
                inputs.tokens.len(),
                c.max_tokens
            )));
        }
        if let Some(&bad) = inputs.tokens.iter().find(|&&t| t >= c.vocab) {
            return Err(Error::Index(format!("token id {bad} outside vocab {}", c.vocab)));
        }
        Ok(())
    }

    fn layer_vars(&self, vars: &[Var], i: usize) -> LayerVars {
        let l = &self.layout.layers[i];
        let expert = |e: &ExpertLayout| ExpertVars {
            query: vars[e.query],
            key: vars[e.key],
            value: vars[e.value],
            output: e.output.map(|o| vars[o]),
        };
        LayerVars {
            er: expert(&l.er),
            ir: expert(&l.ir),
            gate: match l.gate {
                GateLayout::Bottleneck { w1, w2 } => GateVars::Bottleneck {
                    w1: vars[w1],
                    w2: vars[w2],
                },
                GateLayout::Linear { w } => GateVars::Linear { w: vars[w] },
                GateLayout::None => GateVars::None,
            },
        }
    }

    /// Records the forward pass on `g` using bound parameter `vars`.
    /// Returns the `1×2` logits `[yes, no]` and the per-layer gates.
    pub fn forward_graph(
        &self,
        g: &mut Graph<F>,
        vars: &[Var],
        inputs: &ForwardInputs<F>,
    ) -> Result<(Var, Vec<LayerGate>, usize)> {
        self.validate_inputs(inputs)?;
        let n = inputs.tokens.len();
        let valid_rows = inputs.text.rows().min(n);
        let l = &self.layout;

        let mut hidden = g.gather_rows(vars[l.embedding], &inputs.tokens)?;
        let image = g.constant(inputs.image.clone());
        let image = project_image(g, image, vars[l.image_proj])?;
        let text = g.constant(inputs.text.fit_rows(n)?);
        let text = project_text(g, text, vars[l.text_proj])?;

        let mut gates = Vec::with_capacity(self.config.layers);
        for i in 0..self.config.layers {
            let lv = self.layer_vars(vars, i);
            let (next, gate) = encoder_layer(
                g,
                hidden,
                text,
                image,
                &lv,
                self.config.expert_mode,
                self.config.gate_mode,
            )?;
            hidden = next;
            gates.push(gate);
        }
        let pooled = g.mean_rows(hidden)?;
        let logits = g.matmul(pooled, vars[l.head_weight])?;
        let logits = g.add_row(logits, vars[l.head_bias])?;
        Ok((logits, gates, valid_rows))
    }

    /// Reads gate values off a graph after [`forward_graph`](Self::forward_graph).
    pub fn trace(g: &Graph<F>, gates: &[LayerGate], rows: usize, valid_rows: usize) -> GateTrace {
        let layers = gates
            .iter()
            .map(|gate| match gate {
                LayerGate::Fixed(w) => vec![*w; rows],
                LayerGate::Learned(v) => g
                    .value(*v)
                    .data()
                    .chunks(2)
                    .map(|r| [r[0].to_f64(), r[1].to_f64()])
                    .collect(),
            })
            .collect();
        GateTrace::new(layers, valid_rows)
    }

    /// Inference without gradient bookkeeping.
    pub fn forward(&self, inputs: &ForwardInputs<F>) -> Result<([F; 2], GateTrace)> {
        let mut g = Graph::new();
        let vars = self.bind_frozen(&mut g);
        let (logits, gates, valid) = self.forward_graph(&mut g, &vars, inputs)?;
        let out = g.value(logits).data();
        let trace = Self::trace(&g, &gates, inputs.tokens.len(), valid);
        Ok(([out[0], out[1]], trace))
    }

    pub fn to_json(&self) -> Result<String>
    where
        F: Serialize,
    {
        let ckpt = Checkpoint {
            config: self.config.clone(),
            params: self
                .names
                .iter()
                .zip(&self.params)
                .map(|(name, t)| NamedTensor {
                    name: name.clone(),
                    tensor: t.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&ckpt)?)
    }

    pub fn from_json(s: &str) -> Result<Self>
    where
        F: for<'de> Deserialize<'de>,
    {
        let ckpt: Checkpoint<F> = serde_json::from_str(s)?;
        ckpt.config.validate()?;
        let (specs, layout) = parameter_specs(&ckpt.config);
        if specs.len() != ckpt.params.len() {
            return Err(Error::Decode(format!(
                "checkpoint has {} tensors, configuration needs {}",
                ckpt.params.len(),
                specs.len()
            )));
        }
        let mut names = Vec::new();
        let mut params = Vec::new();
        for ((name, shape), nt) in specs.into_iter().zip(ckpt.params) {
            if nt.name != name || nt.tensor.shape() != shape.as_slice() {
                return Err(Error::Decode(format!(
                    "checkpoint tensor `{}` {:?} does not match `{name}` {shape:?}",
                    nt.name,
                    nt.tensor.shape()
                )));
            }
            let tensor = Tensor::new(shape, nt.tensor.data().to_vec())?.with_requires_grad(true);
            names.push(name);
            params.push(tensor);
        }
        Ok(Self {
            config: ckpt.config,
            names,
            params,
            layout,
        })
    }
}

/// Argmax over `[yes, no]` logits; ties go to `no`.
pub fn classify<F: Scalar>(logits: &[F; 2]) -> Label {
    if logits[0] > logits[1] {
        Label::Yes
    } else {
        Label::No
    }
}
