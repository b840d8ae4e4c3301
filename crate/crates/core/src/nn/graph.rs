//! `ModelGraph`: an ordered layer stack with named parameters, exact
//! backpropagation for parameter and input gradients.

use rand::Rng;

use super::conv::{
    avgpool_backward, avgpool_forward, conv_backward, conv_forward, conv_forward_wide, dense_backward, dense_forward,
    maxpool_forward,
};
use super::layer::{Compiler, Init, LayerSpec, Node, Op, ParamDecl};
use super::loss::softmax_cross_entropy;
use crate::error::{LabError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Which gradients `loss_and_grads` should produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Want {
    Params,
    Input,
    Both,
}

impl Want {
    fn params(self) -> bool {
        matches!(self, Want::Params | Want::Both)
    }

    fn input(self) -> bool {
        matches!(self, Want::Input | Want::Both)
    }
}

#[derive(Clone, Debug)]
pub struct LossGrads {
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    pub per_example: Vec<f64>,
    pub logits: Tensor,
    /// Aligned with `ModelGraph::params`.
    pub params: Option<Vec<Tensor>>,
    /// Gradient of the mean loss with respect to the input batch.
    pub input: Option<Tensor>,
}

/// Activations kept by a taped forward pass.
#[derive(Debug)]
pub(crate) enum Saved {
    Input(Tensor),
    GroupConv { input: Tensor, weight: Vec<f32> },
    MaxPool(Vec<u32>),
    Residual {
        body: Vec<Saved>,
        shortcut: Option<Box<Saved>>,
    },
    Nothing,
}

/// Record of a forward pass over the first `depth` layers.
#[derive(Debug)]
pub struct Tape {
    saved: Vec<Saved>,
    batch: usize,
}

#[derive(Clone, Debug)]
pub struct ModelGraph {
    input_shape: Vec<usize>,
    class_count: usize,
    layers: Vec<LayerSpec>,
    params: Vec<Param>,
    nodes: Vec<Node>,
}

fn compile(input_shape: &[usize], layers: &[LayerSpec], class_count: usize) -> Result<(Vec<Node>, Vec<ParamDecl>)> {
    if class_count == 0 {
        return Err(LabError::invalid("class count must be positive"));
    }
    if layers.is_empty() {
        return Err(LabError::invalid("model needs at least one layer"));
    }
    let mut compiler = Compiler { params: Vec::new() };
    let (nodes, out) = compiler.compile_seq(layers, input_shape.to_vec(), "", None)?;
    if out != [class_count] {
        return Err(LabError::shape(
            layers.len() - 1,
            format!("final output {out:?} does not match class count {class_count}"),
        ));
    }
    Ok((nodes, compiler.params))
}

impl ModelGraph {
    /// Builds a model with Kaiming-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(
        input_shape: &[usize],
        layers: Vec<LayerSpec>,
        class_count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let (nodes, decls) = compile(input_shape, &layers, class_count)?;
        let params = decls
            .into_iter()
            .map(|d| {
                let n: usize = d.shape.iter().product();
                let data = match d.init {
                    Init::Zeros => vec![0.0; n],
                    Init::KaimingUniform { fan_in } => {
                        let bound = (6.0 / fan_in as f64).sqrt();
                        (0..n).map(|_| rng.gen_range(-bound..bound) as f32).collect()
                    }
                };
                Param {
                    name: d.name,
                    value: Tensor::from_vec(&d.shape, data).expect("declared shape"),
                }
            })
            .collect();
        Ok(ModelGraph {
            input_shape: input_shape.to_vec(),
            class_count,
            layers,
            params,
            nodes,
        })
    }

    /// Reassembles a model from stored parts; names and shapes must match
    /// what the layer table declares.
    pub fn from_parts(
        input_shape: &[usize],
        layers: Vec<LayerSpec>,
        class_count: usize,
        params: Vec<Param>,
    ) -> Result<Self> {
        let (nodes, decls) = compile(input_shape, &layers, class_count)?;
        if decls.len() != params.len() {
            return Err(LabError::invalid(format!(
                "layer table declares {} parameters, got {}",
                decls.len(),
                params.len()
            )));
        }
        for (d, p) in decls.iter().zip(&params) {
            if d.name != p.name || d.shape != p.value.shape() {
                return Err(LabError::invalid(format!(
                    "parameter {} {:?} does not match declared {} {:?}",
                    p.name,
                    p.value.shape(),
                    d.name,
                    d.shape
                )));
            }
        }
        Ok(ModelGraph {
            input_shape: input_shape.to_vec(),
            class_count,
            layers,
            params,
            nodes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Length of the representation fed to the final dense layer.
    pub fn feature_len(&self) -> Result<usize> {
        match self.layers.last() {
            Some(LayerSpec::Dense { inputs, .. }) => Ok(*inputs),
            _ => Err(LabError::invalid("model has no final dense layer")),
        }
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let shape = batch.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            return Err(LabError::shape(
                0,
                format!("batch shape {:?} does not match input {:?}", shape, self.input_shape),
            ));
        }
        Ok(shape[0])
    }

    /// Logits `[N, classes]`.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let n = self.check_batch(batch)?;
        let mut x = batch.clone();
        for node in &self.nodes {
            x = self.run(node, x, n, None);
        }
        Ok(x)
    }

    pub fn predict(&self, batch: &Tensor) -> Result<Vec<usize>> {
        Ok(self.forward(batch)?.argmax_rows())
    }

    /// Penultimate activations, the input of the final dense layer.
    pub fn features(&self, batch: &Tensor) -> Result<Tensor> {
        self.feature_len()?;
        let n = self.check_batch(batch)?;
        let mut x = batch.clone();
        for node in &self.nodes[..self.nodes.len() - 1] {
            x = self.run(node, x, n, None);
        }
        Ok(x)
    }

    /// Taped forward pass up to the penultimate activations.
    pub fn feature_tape(&self, batch: &Tensor) -> Result<(Tensor, Tape)> {
        self.feature_len()?;
        self.forward_tape(batch, self.nodes.len() - 1)
    }

    /// Taped forward pass through the first `depth` layers.
    pub fn forward_tape(&self, batch: &Tensor, depth: usize) -> Result<(Tensor, Tape)> {
        let n = self.check_batch(batch)?;
        if depth > self.nodes.len() {
            return Err(LabError::invalid(format!(
                "depth {depth} exceeds {} layers",
                self.nodes.len()
            )));
        }
        let mut saved = Vec::with_capacity(depth);
        let mut x = batch.clone();
        for node in &self.nodes[..depth] {
            let mut s = Saved::Nothing;
            x = self.run(node, x, n, Some(&mut s));
            saved.push(s);
        }
        Ok((x, Tape { saved, batch: n }))
    }

    /// Backpropagates `upstream` (gradient of some scalar with respect to the
    /// tape's output) to the parameters and/or the input.
    pub fn backward(&self, tape: &Tape, upstream: Tensor, want: Want) -> Result<(Option<Vec<Tensor>>, Option<Tensor>)> {
        let depth = tape.saved.len();
        let expected_out = match depth {
            0 => self.input_shape.clone(),
            d => self.nodes[d - 1].out_shape.clone(),
        };
        if upstream.shape()[0] != tape.batch || upstream.shape()[1..] != expected_out[..] {
            return Err(LabError::shape(
                depth.saturating_sub(1),
                format!("upstream gradient {:?} does not match output {:?}", upstream.shape(), expected_out),
            ));
        }
        let mut grads = want
            .params()
            .then(|| self.params.iter().map(|p| vec![0.0f32; p.value.len()]).collect::<Vec<_>>());
        let dx = self.backward_seq(&self.nodes[..depth], &tape.saved, upstream, tape.batch, &mut grads, want.input());
        let params = grads.map(|gs| {
            gs.into_iter()
                .zip(&self.params)
                .map(|(g, p)| Tensor::from_vec(p.value.shape(), g).expect("param shape"))
                .collect()
        });
        Ok((params, dx))
    }

    /// Mean softmax cross-entropy and the requested gradients.
    pub fn loss_and_grads(&self, batch: &Tensor, labels: &[usize], want: Want) -> Result<LossGrads> {
        if labels.len() != batch.batch_size() {
            return Err(LabError::invalid(format!(
                "{} labels for a batch of {}",
                labels.len(),
                batch.batch_size()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.class_count) {
            return Err(LabError::invalid(format!(
                "label {bad} outside [0, {})",
                self.class_count
            )));
        }
        let (logits, tape) = self.forward_tape(batch, self.nodes.len())?;
        let ce = softmax_cross_entropy(&logits, labels)?;
        let (params, input) = self.backward(&tape, ce.grad, want)?;
        Ok(LossGrads {
            loss: ce.mean,
            per_example: ce.per_example,
            logits,
            params,
            input,
        })
    }

    fn run(&self, node: &Node, x: Tensor, n: usize, save: Option<&mut Saved>) -> Tensor {
        let mut out_shape = vec![n];
        out_shape.extend_from_slice(&node.out_shape);
        let p = |i: usize| self.params[i].value.data();
        let (y, saved) = match &node.op {
            Op::Dense { w, b, inputs, outputs } => {
                let y = dense_forward(n, *inputs, *outputs, x.data(), p(*w), p(*b));
                (y, Saved::Input(x))
            }
            Op::Conv { w, b, geom } => {
                let y = conv_forward(geom, n, x.data(), p(*w), p(*b));
                (y, Saved::Input(x))
            }
            Op::GroupConv {
                w,
                b,
                geom,
                map,
                group_size,
            } => {
                let base = p(*w);
                let weight: Vec<f32> = map.iter().map(|&i| base[i as usize]).collect();
                let bias: Vec<f32> = p(*b)
                    .iter()
                    .flat_map(|&v| std::iter::repeat(v).take(*group_size))
                    .collect();
                let y = conv_forward_wide(geom, n, x.data(), &weight, &bias);
                (y, Saved::GroupConv { input: x, weight })
            }
            Op::Relu => {
                let y = x.data().iter().map(|&v| v.max(0.0)).collect();
                (y, Saved::Input(x))
            }
            Op::MaxPool(geom) => {
                let (y, idx) = maxpool_forward(geom, n, x.data());
                (y, Saved::MaxPool(idx))
            }
            Op::AvgPool(geom) => (avgpool_forward(geom, n, x.data()), Saved::Nothing),
            Op::GlobalAvgPool { hw, .. } => {
                let scale = 1.0 / *hw as f32;
                let y = x.data().chunks(*hw).map(|c| c.iter().sum::<f32>() * scale).collect();
                (y, Saved::Nothing)
            }
            Op::Flatten => (x.into_data(), Saved::Nothing),
            Op::GroupPool { c, g, hw } => {
                let scale = 1.0 / *g as f32;
                let mut y = vec![0.0; n * c * hw];
                for (plane, out) in y.chunks_mut(*hw).enumerate() {
                    let base = plane * g * hw;
                    for e in 0..*g {
                        for (o, v) in out.iter_mut().zip(&x.data()[base + e * hw..base + (e + 1) * hw]) {
                            *o += v;
                        }
                    }
                    out.iter_mut().for_each(|o| *o *= scale);
                }
                (y, Saved::Nothing)
            }
            Op::Residual { body, shortcut } => {
                let taped = save.is_some();
                let mut body_saved = Vec::new();
                let mut h = x.clone();
                for child in body {
                    let mut s = Saved::Nothing;
                    h = self.run(child, h, n, taped.then_some(&mut s));
                    body_saved.push(s);
                }
                let (skip, skip_saved) = match shortcut {
                    Some(sc) => {
                        let mut s = Saved::Nothing;
                        let out = self.run(sc, x, n, taped.then_some(&mut s));
                        (out, Some(Box::new(s)))
                    }
                    None => (x, None),
                };
                let mut y = h.into_data();
                for (a, b) in y.iter_mut().zip(skip.data()) {
                    *a += b;
                }
                (
                    y,
                    Saved::Residual {
                        body: body_saved,
                        shortcut: skip_saved,
                    },
                )
            }
        };
        if let Some(slot) = save {
            *slot = saved;
        }
        Tensor::from_vec(&out_shape, y).expect("compiled output shape")
    }

    fn backward_seq(
        &self,
        nodes: &[Node],
        saved: &[Saved],
        mut dy: Tensor,
        n: usize,
        grads: &mut Option<Vec<Vec<f32>>>,
        want_dx: bool,
    ) -> Option<Tensor> {
        for i in (0..nodes.len()).rev() {
            let need = i > 0 || want_dx;
            if !need && grads.is_none() {
                return None;
            }
            match self.backward_node(&nodes[i], &saved[i], dy, n, grads, need) {
                Some(d) => dy = d,
                None => return None,
            }
        }
        want_dx.then_some(dy)
    }

    fn backward_node(
        &self,
        node: &Node,
        saved: &Saved,
        dy: Tensor,
        n: usize,
        grads: &mut Option<Vec<Vec<f32>>>,
        want_dx: bool,
    ) -> Option<Tensor> {
        let mut in_shape = vec![n];
        in_shape.extend_from_slice(&node.in_shape);
        let dx: Option<Vec<f32>> = match (&node.op, saved) {
            (Op::Dense { w, b, inputs, outputs }, Saved::Input(x)) => {
                let wv = self.params[*w].value.data();
                match grads.as_mut() {
                    Some(gs) => {
                        let (dw, db) = two_mut(gs, *w, *b);
                        dense_backward(n, *inputs, *outputs, x.data(), wv, dy.data(), Some((dw, db)), want_dx)
                    }
                    None => dense_backward(n, *inputs, *outputs, x.data(), wv, dy.data(), None, want_dx),
                }
            }
            (Op::Conv { w, b, geom }, Saved::Input(x)) => {
                let wv = self.params[*w].value.data();
                match grads.as_mut() {
                    Some(gs) => {
                        let (dw, db) = two_mut(gs, *w, *b);
                        conv_backward(geom, n, x.data(), wv, dy.data(), Some((dw, db)), want_dx)
                    }
                    None => conv_backward(geom, n, x.data(), wv, dy.data(), None, want_dx),
                }
            }
            (
                Op::GroupConv {
                    w,
                    b,
                    geom,
                    map,
                    group_size,
                },
                Saved::GroupConv { input, weight },
            ) => match grads.as_mut() {
                Some(gs) => {
                    let mut dw_exp = vec![0.0; weight.len()];
                    let mut db_exp = vec![0.0; geom.out_c];
                    let dx = conv_backward(
                        geom,
                        n,
                        input.data(),
                        weight,
                        dy.data(),
                        Some((&mut dw_exp, &mut db_exp)),
                        want_dx,
                    );
                    let (dw, db) = two_mut(gs, *w, *b);
                    for (&src, &g) in map.iter().zip(&dw_exp) {
                        dw[src as usize] += g;
                    }
                    for (o, chunk) in db_exp.chunks(*group_size).enumerate() {
                        db[o] += chunk.iter().sum::<f32>();
                    }
                    dx
                }
                None => conv_backward(geom, n, input.data(), weight, dy.data(), None, want_dx),
            },
            (Op::Relu, Saved::Input(x)) => want_dx.then(|| {
                dy.data()
                    .iter()
                    .zip(x.data())
                    .map(|(&d, &v)| if v > 0.0 { d } else { 0.0 })
                    .collect()
            }),
            (Op::MaxPool(_), Saved::MaxPool(idx)) => want_dx.then(|| {
                let mut dx = vec![0.0; in_shape.iter().product()];
                for (&j, &d) in idx.iter().zip(dy.data()) {
                    dx[j as usize] += d;
                }
                dx
            }),
            (Op::AvgPool(geom), _) => want_dx.then(|| avgpool_backward(geom, n, dy.data())),
            (Op::GlobalAvgPool { hw, .. }, _) => want_dx.then(|| {
                let scale = 1.0 / *hw as f32;
                dy.data()
                    .iter()
                    .flat_map(|&d| std::iter::repeat(d * scale).take(*hw))
                    .collect()
            }),
            (Op::Flatten, _) => want_dx.then(|| dy.data().to_vec()),
            (Op::GroupPool { g, hw, .. }, _) => want_dx.then(|| {
                let scale = 1.0 / *g as f32;
                let mut dx = Vec::with_capacity(dy.len() * g);
                for plane in dy.data().chunks(*hw) {
                    for _ in 0..*g {
                        dx.extend(plane.iter().map(|&d| d * scale));
                    }
                }
                dx
            }),
            (Op::Residual { body, shortcut }, Saved::Residual { body: bs, shortcut: ss }) => {
                let d_body = self.backward_seq(body, bs, dy.clone(), n, grads, want_dx);
                let d_skip = match (shortcut, ss) {
                    (Some(sc), Some(s)) => self.backward_node(sc, s, dy, n, grads, want_dx),
                    _ => want_dx.then_some(dy),
                };
                match (d_body, d_skip) {
                    (Some(a), Some(b)) => {
                        let mut a = a.into_data();
                        for (x, y) in a.iter_mut().zip(b.data()) {
                            *x += y;
                        }
                        Some(a)
                    }
                    _ => None,
                }
            }
            _ => unreachable!("tape does not match layer"),
        };
        dx.map(|d| Tensor::from_vec(&in_shape, d).expect("compiled input shape"))
    }
}

fn two_mut(gs: &mut [Vec<f32>], a: usize, b: usize) -> (&mut [f32], &mut [f32]) {
    debug_assert!(a < b);
    let (lo, hi) = gs.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}
