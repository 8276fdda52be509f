use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{softplus, Activation, Layer};
use super::tensor::{axpy, dot, Tensor};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, label_hash, rng_from_seed};

/// Named batch tensors fed to a network's input ports.
pub type Inputs = BTreeMap<String, Tensor>;

/// Reference to a value inside a network: an input port or a node output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Port(usize),
    Node(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPort {
    pub name: String,
    /// Per-sample shape (no batch dimension).
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub layer: Layer,
    pub inputs: Vec<Source>,
    /// Per-sample output shape.
    pub out_shape: Vec<usize>,
    /// Indices into the parameter store.
    pub params: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub frozen: bool,
}

/// Gradients aligned with the network's parameter store.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub(crate) names: Vec<String>,
    pub(crate) grads: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.grads[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.grads.iter())
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.grads
    }
}

#[derive(Debug, Clone)]
struct Cache {
    batch: usize,
    ports: Vec<Option<Tensor>>,
    acts: Vec<Option<Tensor>>,
    overridden: Vec<bool>,
    dropout_masks: Vec<Option<Vec<f64>>>,
    argmax: Vec<Option<Vec<u32>>>,
    logits: Option<Vec<f64>>,
}

impl Cache {
    fn value(&self, src: Source) -> &Tensor {
        match src {
            Source::Port(p) => self.ports[p].as_ref().expect("port evaluated"),
            Source::Node(n) => self.acts[n].as_ref().expect("node evaluated"),
        }
    }
}

/// A directed acyclic graph of layers with named inputs and one output node.
///
/// Nodes are stored in insertion order, and a node may only consume ports and
/// earlier nodes, so storage order is a topological order.
#[derive(Debug, Clone)]
pub struct Network {
    pub(crate) ports: Vec<InputPort>,
    pub(crate) nodes: Vec<Node>,
    pub(crate) params: Vec<Parameter>,
    pub(crate) output: Option<usize>,
    pub(crate) init_seed: u64,
    mode: Mode,
    rng: ChaCha8Rng,
    cache: Option<Cache>,
}

impl Network {
    /// Empty network. `init_seed` drives parameter initialisation: each node
    /// draws from a stream keyed by its name, so adding nodes never perturbs
    /// the initial values of others.
    pub fn new(init_seed: u64) -> Self {
        Network {
            ports: Vec::new(),
            nodes: Vec::new(),
            params: Vec::new(),
            output: None,
            init_seed,
            mode: Mode::Infer,
            rng: rng_from_seed(init_seed),
            cache: None,
        }
    }

    fn name_taken(&self, name: &str) -> bool {
        self.ports.iter().any(|p| p.name == name) || self.nodes.iter().any(|n| n.name == name)
    }

    pub fn input(&mut self, name: &str, shape: &[usize]) -> Result<Source> {
        if name.is_empty() || self.name_taken(name) {
            return Err(Error::Network(format!("duplicate or empty name `{name}`")));
        }
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::shape(name, format!("invalid input shape {shape:?}")));
        }
        self.ports.push(InputPort {
            name: name.to_string(),
            shape: shape.to_vec(),
        });
        Ok(Source::Port(self.ports.len() - 1))
    }

    pub fn add(&mut self, name: &str, layer: Layer, inputs: &[Source]) -> Result<Source> {
        if name.is_empty() || self.name_taken(name) {
            return Err(Error::Network(format!("duplicate or empty name `{name}`")));
        }
        let mut in_shapes = Vec::with_capacity(inputs.len());
        for &src in inputs {
            in_shapes.push(self.source_shape(src)?.to_vec());
        }
        let out_shape = layer.output_shape(name, &in_shapes)?;
        let mut rng = rng_from_seed(derive_seed(self.init_seed, label_hash(name)));
        let mut params = Vec::new();
        for (suffix, shape) in layer.param_shapes() {
            let value = init_param(&layer, suffix, &shape, &mut rng);
            self.params.push(Parameter {
                name: format!("{name}.{suffix}"),
                value,
                frozen: false,
            });
            params.push(self.params.len() - 1);
        }
        self.nodes.push(Node {
            name: name.to_string(),
            layer,
            inputs: inputs.to_vec(),
            out_shape,
            params,
        });
        self.cache = None;
        Ok(Source::Node(self.nodes.len() - 1))
    }

    pub fn set_output(&mut self, src: Source) -> Result<()> {
        match src {
            Source::Node(n) if n < self.nodes.len() => {
                self.output = Some(n);
                self.cache = None;
                Ok(())
            }
            _ => Err(Error::Network("output must be a layer of this network".into())),
        }
    }

    fn source_shape(&self, src: Source) -> Result<&[usize]> {
        match src {
            Source::Port(p) => self.ports.get(p).map(|p| p.shape.as_slice()),
            Source::Node(n) => self.nodes.get(n).map(|n| n.out_shape.as_slice()),
        }
        .ok_or_else(|| Error::Network(format!("dangling reference {src:?}")))
    }

    /// Checks that an output is set and every layer feeds it.
    pub fn validate(&self) -> Result<()> {
        let out = self.output_index()?;
        let reach = self.ancestors(out, &[]);
        if let Some(n) = self.nodes.iter().zip(&reach.0).find(|(_, r)| !**r) {
            return Err(Error::Network(format!(
                "layer `{}` does not contribute to the output",
                n.0.name
            )));
        }
        Ok(())
    }

    fn output_index(&self) -> Result<usize> {
        self.output
            .ok_or_else(|| Error::Network("network has no output layer".into()))
    }

    /// Nodes and ports reachable backwards from `out`, stopping at `cut` nodes.
    fn ancestors(&self, out: usize, cut: &[bool]) -> (Vec<bool>, Vec<bool>) {
        let mut nodes = vec![false; self.nodes.len()];
        let mut ports = vec![false; self.ports.len()];
        let mut stack = vec![out];
        nodes[out] = true;
        while let Some(n) = stack.pop() {
            if cut.get(n).copied().unwrap_or(false) {
                continue;
            }
            for &src in &self.nodes[n].inputs {
                match src {
                    Source::Port(p) => ports[p] = true,
                    Source::Node(i) => {
                        if !nodes[i] {
                            nodes[i] = true;
                            stack.push(i);
                        }
                    }
                }
            }
        }
        (nodes, ports)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Reseeds the dropout stream.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = rng_from_seed(seed);
    }

    pub fn ports(&self) -> &[InputPort] {
        &self.ports
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn layer_names(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.name.as_str()).collect()
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn node_ref(&self, name: &str) -> Option<Source> {
        if let Some(i) = self.nodes.iter().position(|n| n.name == name) {
            return Some(Source::Node(i));
        }
        self.ports
            .iter()
            .position(|p| p.name == name)
            .map(Source::Port)
    }

    pub fn output_node(&self) -> Option<&Node> {
        self.output.map(|o| &self.nodes[o])
    }

    /// Per-sample output width of the output layer.
    pub fn output_width(&self) -> Option<usize> {
        self.output_node().map(|n| n.out_shape.iter().product())
    }

    pub fn is_classifier(&self) -> bool {
        matches!(
            self.output_node().map(|n| &n.layer),
            Some(Layer::Dense {
                output: 1,
                activation: Activation::Sigmoid,
                ..
            })
        )
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<()> {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Network(format!("unknown parameter `{name}`")))?;
        if p.value.shape() != value.shape() {
            return Err(Error::shape(
                name,
                format!("expected {:?}, got {:?}", p.value.shape(), value.shape()),
            ));
        }
        if !value.all_finite() {
            return Err(Error::Network(format!("non-finite values for `{name}`")));
        }
        p.value = value;
        self.cache = None;
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| !p.frozen)
            .map(|p| p.value.len())
            .sum()
    }

    fn node_index(&self, name: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| Error::Network(format!("unknown layer `{name}`")))
    }

    /// Excludes every parameter of the named layers from updates.
    pub fn freeze<S: AsRef<str>>(&mut self, layers: &[S]) -> Result<()> {
        self.set_frozen(layers, true)
    }

    pub fn unfreeze<S: AsRef<str>>(&mut self, layers: &[S]) -> Result<()> {
        self.set_frozen(layers, false)
    }

    fn set_frozen<S: AsRef<str>>(&mut self, layers: &[S], frozen: bool) -> Result<()> {
        let idx = layers
            .iter()
            .map(|l| self.node_index(l.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        for n in idx {
            for &p in &self.nodes[n].params {
                self.params[p].frozen = frozen;
            }
        }
        Ok(())
    }

    /// Layers that own parameters, all of which are frozen.
    pub fn frozen_layers(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| !n.params.is_empty() && n.params.iter().all(|&p| self.params[p].frozen))
            .map(|n| n.name.as_str())
            .collect()
    }

    /// Copies the sub-graph feeding `layer` into a new network whose output is
    /// that layer. Parameter values and frozen flags are copied.
    pub fn truncate_after(&self, layer: &str) -> Result<Network> {
        let target = self.node_index(layer)?;
        let rank = self.nodes[target].out_shape.len();
        if rank != 1 {
            return Err(Error::shape(
                layer,
                format!("truncation point must be flat per sample, output has rank {rank}"),
            ));
        }
        let (keep_nodes, keep_ports) = self.ancestors(target, &[]);
        let mut port_map = vec![usize::MAX; self.ports.len()];
        let mut net = Network::new(self.init_seed);
        for (i, p) in self.ports.iter().enumerate() {
            if keep_ports[i] {
                port_map[i] = net.ports.len();
                net.ports.push(p.clone());
            }
        }
        let mut node_map = vec![usize::MAX; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if !keep_nodes[i] {
                continue;
            }
            let inputs = n
                .inputs
                .iter()
                .map(|&s| match s {
                    Source::Port(p) => Source::Port(port_map[p]),
                    Source::Node(j) => Source::Node(node_map[j]),
                })
                .collect();
            let params = n
                .params
                .iter()
                .map(|&p| {
                    net.params.push(self.params[p].clone());
                    net.params.len() - 1
                })
                .collect();
            node_map[i] = net.nodes.len();
            net.nodes.push(Node {
                name: n.name.clone(),
                layer: n.layer.clone(),
                inputs,
                out_shape: n.out_shape.clone(),
                params,
            });
        }
        net.output = Some(node_map[target]);
        Ok(net)
    }

    /// Runs the network and returns the output activation `[B, ...]`.
    pub fn forward(&mut self, inputs: &Inputs) -> Result<Tensor> {
        self.run(inputs, Vec::new())?;
        let out = self.output_index()?;
        Ok(self.cache.as_ref().expect("cache").acts[out]
            .clone()
            .expect("output evaluated"))
    }

    /// Activation of a named layer from the most recent forward pass.
    pub fn activation(&self, layer: &str) -> Option<&Tensor> {
        let i = self.nodes.iter().position(|n| n.name == layer)?;
        self.cache.as_ref()?.acts[i].as_ref()
    }

    pub(crate) fn node_activation(&self, idx: usize) -> Option<&Tensor> {
        self.cache.as_ref()?.acts.get(idx)?.as_ref()
    }

    /// Forward pass in which the listed nodes take the supplied activations
    /// instead of being computed; their ancestors are skipped.
    pub(crate) fn forward_with(
        &mut self,
        inputs: &Inputs,
        overrides: Vec<(usize, Tensor)>,
    ) -> Result<()> {
        self.run(inputs, overrides)
    }

    /// Nodes whose values cannot change during training (no trainable
    /// parameters or dropout upstream) and that feed a node that can.
    pub(crate) fn constant_frontier(&self) -> Vec<usize> {
        let mut constant = vec![false; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            let own = n.params.iter().all(|&p| self.params[p].frozen)
                && !matches!(n.layer, Layer::Dropout { .. });
            constant[i] = own
                && n.inputs.iter().all(|s| match s {
                    Source::Port(_) => true,
                    Source::Node(j) => constant[*j],
                });
        }
        let Some(out) = self.output else {
            return Vec::new();
        };
        let (reach, _) = self.ancestors(out, &constant);
        let mut frontier: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| {
                constant[i]
                    && reach[i]
                    && (i == out
                        || self.nodes.iter().enumerate().any(|(j, m)| {
                            !constant[j] && reach[j] && m.inputs.contains(&Source::Node(i))
                        }))
            })
            .collect();
        frontier.dedup();
        frontier
    }

    fn run(&mut self, inputs: &Inputs, overrides: Vec<(usize, Tensor)>) -> Result<()> {
        let out = self.output_index()?;
        self.cache = None;
        let n_nodes = self.nodes.len();
        let mut overridden = vec![false; n_nodes];
        let mut acts: Vec<Option<Tensor>> = vec![None; n_nodes];
        let mut batch: Option<usize> = None;
        for (i, t) in overrides {
            let want = &self.nodes[i].out_shape;
            if &t.shape()[1..] != want.as_slice() {
                return Err(Error::shape(
                    &self.nodes[i].name,
                    format!("override shape {:?} vs {want:?}", t.shape()),
                ));
            }
            check_batch(&mut batch, t.batch(), &self.nodes[i].name)?;
            overridden[i] = true;
            acts[i] = Some(t);
        }
        let (needed, ports_needed) = self.ancestors(out, &overridden);

        let mut ports: Vec<Option<Tensor>> = vec![None; self.ports.len()];
        for (i, port) in self.ports.iter().enumerate() {
            if !ports_needed[i] {
                continue;
            }
            let t = inputs
                .get(&port.name)
                .ok_or_else(|| Error::Network(format!("missing input `{}`", port.name)))?;
            if t.shape().len() != port.shape.len() + 1 || t.shape()[1..] != port.shape[..] {
                return Err(Error::shape(
                    &port.name,
                    format!(
                        "input expects [batch, {}], got {:?}",
                        port.shape
                            .iter()
                            .map(usize::to_string)
                            .collect::<Vec<_>>()
                            .join(", "),
                        t.shape()
                    ),
                ));
            }
            check_batch(&mut batch, t.batch(), &port.name)?;
            ports[i] = Some(t.clone());
        }
        let batch = batch.ok_or_else(|| Error::Network("no inputs supplied".into()))?;

        let mut dropout_masks = vec![None; n_nodes];
        let mut argmax = vec![None; n_nodes];
        let mut logits = None;
        for i in 0..n_nodes {
            if !needed[i] || overridden[i] {
                continue;
            }
            let node = &self.nodes[i];
            let get = |s: Source| -> &Tensor {
                match s {
                    Source::Port(p) => ports[p].as_ref().expect("port"),
                    Source::Node(j) => acts[j].as_ref().expect("node"),
                }
            };
            let mut out_shape = vec![batch];
            out_shape.extend_from_slice(&node.out_shape);
            let result = match &node.layer {
                Layer::Embedding { vocab_size, dim } => {
                    let ids = get(node.inputs[0]);
                    let w = self.params[node.params[0]].value.data();
                    let mut data = Vec::with_capacity(ids.len() * dim);
                    for &id in ids.data() {
                        if id < 0.0 || id.fract() != 0.0 || id as usize >= *vocab_size {
                            return Err(Error::shape(
                                &node.name,
                                format!("id {id} outside vocabulary of size {vocab_size}"),
                            ));
                        }
                        let r = id as usize;
                        data.extend_from_slice(&w[r * dim..(r + 1) * dim]);
                    }
                    Tensor::new(out_shape, data)?
                }
                Layer::Conv1d {
                    in_channels,
                    filters,
                    kernel_width,
                } => {
                    let x = get(node.inputs[0]);
                    let w = self.params[node.params[0]].value.data();
                    let bias = self.params[node.params[1]].value.data();
                    let span = kernel_width * in_channels;
                    let t_out = node.out_shape[0];
                    let mut data = vec![0.0; batch * t_out * filters];
                    for b in 0..batch {
                        let xb = x.row(b);
                        for t in 0..t_out {
                            let window = &xb[t * in_channels..t * in_channels + span];
                            let o = &mut data[(b * t_out + t) * filters..][..*filters];
                            for f in 0..*filters {
                                let z = dot(&w[f * span..(f + 1) * span], window) + bias[f];
                                o[f] = z.max(0.0);
                            }
                        }
                    }
                    Tensor::new(out_shape, data)?
                }
                Layer::GlobalMaxPool1d => {
                    let x = get(node.inputs[0]);
                    let (t_in, f) = (x.shape()[1], node.out_shape[0]);
                    let mut data = Vec::with_capacity(batch * f);
                    let mut am = Vec::with_capacity(batch * f);
                    for b in 0..batch {
                        let xb = x.row(b);
                        for c in 0..f {
                            let mut best = xb[c];
                            let mut at = 0u32;
                            for t in 1..t_in {
                                let v = xb[t * f + c];
                                if v > best {
                                    best = v;
                                    at = t as u32;
                                }
                            }
                            data.push(best);
                            am.push(at);
                        }
                    }
                    argmax[i] = Some(am);
                    Tensor::new(out_shape, data)?
                }
                Layer::Flatten => get(node.inputs[0]).clone().reshape(out_shape)?,
                Layer::Dense {
                    input,
                    output,
                    activation,
                } => {
                    let x = get(node.inputs[0]);
                    let w = self.params[node.params[0]].value.data();
                    let bias = self.params[node.params[1]].value.data();
                    let mut data = Vec::with_capacity(batch * output);
                    let keep_logits = i == out;
                    let mut z_all = Vec::new();
                    for b in 0..batch {
                        let xb = x.row(b);
                        for o in 0..*output {
                            let z = dot(&w[o * input..(o + 1) * input], xb) + bias[o];
                            if keep_logits {
                                z_all.push(z);
                            }
                            data.push(activation.apply(z));
                        }
                    }
                    if keep_logits {
                        logits = Some(z_all);
                    }
                    Tensor::new(out_shape, data)?
                }
                Layer::Dropout { rate } => {
                    let x = get(node.inputs[0]);
                    if self.mode == Mode::Train && *rate > 0.0 {
                        let scale = 1.0 / (1.0 - rate);
                        let mask: Vec<f64> = (0..x.len())
                            .map(|_| {
                                if self.rng.gen::<f64>() >= *rate {
                                    scale
                                } else {
                                    0.0
                                }
                            })
                            .collect();
                        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
                        dropout_masks[i] = Some(mask);
                        Tensor::new(out_shape, data)?
                    } else {
                        x.clone()
                    }
                }
                Layer::Concatenate => {
                    let parts: Vec<&Tensor> = node.inputs.iter().map(|&s| get(s)).collect();
                    let width: usize = node.out_shape[0];
                    let mut data = Vec::with_capacity(batch * width);
                    for b in 0..batch {
                        for p in &parts {
                            data.extend_from_slice(p.row(b));
                        }
                    }
                    Tensor::new(out_shape, data)?
                }
            };
            if !result.all_finite() {
                return Err(Error::Network(format!(
                    "non-finite activation in layer `{}`",
                    node.name
                )));
            }
            acts[i] = Some(result);
        }
        self.cache = Some(Cache {
            batch,
            ports,
            acts,
            overridden,
            dropout_masks,
            argmax,
            logits,
        });
        Ok(())
    }

    fn classifier_logits(&self) -> Result<&Cache> {
        if !self.is_classifier() {
            return Err(Error::Network(
                "output layer is not a single sigmoid unit".into(),
            ));
        }
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Network("backward called without a forward pass".into()))?;
        if cache.logits.is_none() {
            return Err(Error::Network("no logits cached for the output layer".into()));
        }
        Ok(cache)
    }

    /// Mean binary cross-entropy of the cached forward pass.
    pub fn loss(&self, targets: &[f64]) -> Result<f64> {
        let cache = self.classifier_logits()?;
        let z = cache.logits.as_ref().expect("logits");
        if targets.len() != z.len() {
            return Err(Error::shape(
                "loss",
                format!("{} targets for batch of {}", targets.len(), z.len()),
            ));
        }
        let total: f64 = z.iter().zip(targets).map(|(&z, &y)| softplus(z) - y * z).sum();
        Ok(total / z.len() as f64)
    }

    /// Gradients of the mean binary cross-entropy of the cached forward pass.
    /// Frozen parameters get zero gradients.
    pub fn backward(&self, targets: &[f64]) -> Result<Gradients> {
        let cache = self.classifier_logits()?;
        let out = self.output_index()?;
        let batch = cache.batch;
        if targets.len() != batch {
            return Err(Error::shape(
                "backward",
                format!("{} targets for batch of {batch}", targets.len()),
            ));
        }
        let n_nodes = self.nodes.len();
        let mut requires = vec![false; n_nodes];
        for (i, n) in self.nodes.iter().enumerate() {
            if cache.overridden[i] || cache.acts[i].is_none() {
                continue;
            }
            requires[i] = n.params.iter().any(|&p| !self.params[p].frozen)
                || n.inputs.iter().any(|s| matches!(s, Source::Node(j) if requires[*j]));
        }

        let mut pgrads: Vec<Tensor> = self
            .params
            .iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect();
        let mut agrads: Vec<Option<Vec<f64>>> = vec![None; n_nodes];
        let inv_b = 1.0 / batch as f64;
        let logits = cache.logits.as_ref().expect("logits");
        agrads[out] = Some(Vec::new());

        for i in (0..n_nodes).rev() {
            if !requires[i] {
                continue;
            }
            let Some(g) = agrads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            let wants = |s: Source| matches!(s, Source::Node(j) if requires[j]);
            match &node.layer {
                Layer::Embedding { dim, .. } => {
                    let p = node.params[0];
                    if self.params[p].frozen {
                        continue;
                    }
                    let ids = cache.value(node.inputs[0]);
                    let dw = pgrads[p].data_mut();
                    for (k, &id) in ids.data().iter().enumerate() {
                        let r = id as usize;
                        axpy(1.0, &g[k * dim..(k + 1) * dim], &mut dw[r * dim..(r + 1) * dim]);
                    }
                }
                Layer::Conv1d {
                    in_channels,
                    filters,
                    kernel_width,
                } => {
                    let x = cache.value(node.inputs[0]);
                    let y = cache.acts[i].as_ref().expect("conv act");
                    let (pw, pb) = (node.params[0], node.params[1]);
                    let train_params = !self.params[pw].frozen;
                    let w = self.params[pw].value.data();
                    let span = kernel_width * in_channels;
                    let t_out = node.out_shape[0];
                    let prop = wants(node.inputs[0]);
                    let mut dx = if prop { vec![0.0; x.len()] } else { Vec::new() };
                    let row_in = x.row_len();
                    let (mut dw, mut db) = (vec![0.0; w.len()], vec![0.0; *filters]);
                    for b in 0..batch {
                        let xb = x.row(b);
                        for t in 0..t_out {
                            let base = (b * t_out + t) * filters;
                            let window = &xb[t * in_channels..t * in_channels + span];
                            for f in 0..*filters {
                                if y.data()[base + f] <= 0.0 {
                                    continue;
                                }
                                let gz = g[base + f];
                                if gz == 0.0 {
                                    continue;
                                }
                                if train_params {
                                    axpy(gz, window, &mut dw[f * span..(f + 1) * span]);
                                    db[f] += gz;
                                }
                                if prop {
                                    let start = b * row_in + t * in_channels;
                                    axpy(
                                        gz,
                                        &w[f * span..(f + 1) * span],
                                        &mut dx[start..start + span],
                                    );
                                }
                            }
                        }
                    }
                    if train_params {
                        pgrads[pw] = Tensor::new(self.params[pw].value.shape().to_vec(), dw)?;
                        pgrads[pb] = Tensor::new(vec![*filters], db)?;
                    }
                    if prop {
                        accumulate(&mut agrads, node.inputs[0], dx);
                    }
                }
                Layer::GlobalMaxPool1d => {
                    if wants(node.inputs[0]) {
                        let f = node.out_shape[0];
                        let x = cache.value(node.inputs[0]);
                        let row_in = x.row_len();
                        let am = cache.argmax[i].as_ref().expect("argmax");
                        let mut dx = vec![0.0; x.len()];
                        for b in 0..batch {
                            for c in 0..f {
                                let t = am[b * f + c] as usize;
                                dx[b * row_in + t * f + c] += g[b * f + c];
                            }
                        }
                        accumulate(&mut agrads, node.inputs[0], dx);
                    }
                }
                Layer::Flatten => {
                    if wants(node.inputs[0]) {
                        accumulate(&mut agrads, node.inputs[0], g);
                    }
                }
                Layer::Dense {
                    input,
                    output,
                    activation,
                } => {
                    let x = cache.value(node.inputs[0]);
                    let gz: Vec<f64> = if i == out {
                        logits
                            .iter()
                            .zip(targets)
                            .map(|(&z, &t)| (super::layer::sigmoid(z) - t) * inv_b)
                            .collect()
                    } else {
                        let y = cache.acts[i].as_ref().expect("dense act");
                        g.iter()
                            .zip(y.data())
                            .map(|(gv, &yv)| gv * activation.derivative_from_output(yv))
                            .collect()
                    };
                    let (pw, pb) = (node.params[0], node.params[1]);
                    if !self.params[pw].frozen {
                        let mut dw = vec![0.0; input * output];
                        let mut db = vec![0.0; *output];
                        for b in 0..batch {
                            let xb = x.row(b);
                            for o in 0..*output {
                                let gv = gz[b * output + o];
                                if gv != 0.0 {
                                    axpy(gv, xb, &mut dw[o * input..(o + 1) * input]);
                                    db[o] += gv;
                                }
                            }
                        }
                        pgrads[pw] = Tensor::new(vec![*output, *input], dw)?;
                        pgrads[pb] = Tensor::new(vec![*output], db)?;
                    }
                    if wants(node.inputs[0]) {
                        let w = self.params[pw].value.data();
                        let mut dx = vec![0.0; batch * input];
                        for b in 0..batch {
                            let dxb = &mut dx[b * input..(b + 1) * input];
                            for o in 0..*output {
                                let gv = gz[b * output + o];
                                if gv != 0.0 {
                                    axpy(gv, &w[o * input..(o + 1) * input], dxb);
                                }
                            }
                        }
                        accumulate(&mut agrads, node.inputs[0], dx);
                    }
                }
                Layer::Dropout { .. } => {
                    if wants(node.inputs[0]) {
                        let dx = match &cache.dropout_masks[i] {
                            Some(mask) => g.iter().zip(mask).map(|(a, m)| a * m).collect(),
                            None => g,
                        };
                        accumulate(&mut agrads, node.inputs[0], dx);
                    }
                }
                Layer::Concatenate => {
                    let width = node.out_shape[0];
                    let mut offset = 0;
                    for &src in &node.inputs {
                        let w = self.source_shape(src)?[0];
                        if wants(src) {
                            let mut dx = Vec::with_capacity(batch * w);
                            for b in 0..batch {
                                dx.extend_from_slice(&g[b * width + offset..b * width + offset + w]);
                            }
                            accumulate(&mut agrads, src, dx);
                        }
                        offset += w;
                    }
                }
            }
        }
        Ok(Gradients {
            names: self.params.iter().map(|p| p.name.clone()).collect(),
            grads: pgrads,
        })
    }

    /// Hash of every piecewise-linear branch taken in the last forward pass
    /// (ReLU on/off states and max-pool winners).
    pub(crate) fn activation_signature(&self) -> u64 {
        let Some(cache) = &self.cache else {
            return 0;
        };
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for (i, n) in self.nodes.iter().enumerate() {
            let relu = matches!(
                n.layer,
                Layer::Conv1d { .. }
                    | Layer::Dense {
                        activation: Activation::Relu,
                        ..
                    }
            );
            if relu && !cache.overridden[i] {
                if let Some(a) = &cache.acts[i] {
                    for &v in a.data() {
                        mix(u64::from(v > 0.0));
                    }
                }
            }
            if let Some(am) = &cache.argmax[i] {
                for &t in am {
                    mix(u64::from(t));
                }
            }
        }
        h
    }
}

fn check_batch(batch: &mut Option<usize>, b: usize, name: &str) -> Result<()> {
    if b == 0 {
        return Err(Error::shape(name, "empty batch"));
    }
    match *batch {
        Some(prev) if prev != b => Err(Error::shape(
            name,
            format!("batch size {b} differs from {prev}"),
        )),
        _ => {
            *batch = Some(b);
            Ok(())
        }
    }
}

fn accumulate(agrads: &mut [Option<Vec<f64>>], src: Source, dx: Vec<f64>) {
    if let Source::Node(j) = src {
        match &mut agrads[j] {
            Some(existing) => axpy(1.0, &dx, existing),
            slot @ None => *slot = Some(dx),
        }
    }
}

fn init_param(layer: &Layer, suffix: &str, shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    if suffix == "bias" {
        return Tensor::zeros(shape);
    }
    let limit = match *layer {
        Layer::Embedding { .. } => 0.05,
        Layer::Dense { input, output, .. } => (6.0 / (input + output) as f64).sqrt(),
        Layer::Conv1d {
            in_channels,
            filters,
            kernel_width,
        } => (6.0 / (kernel_width * (in_channels + filters)) as f64).sqrt(),
        _ => 0.0,
    };
    let data = (0..n).map(|_| rng.gen_range(-limit..=limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("param shape")
}
