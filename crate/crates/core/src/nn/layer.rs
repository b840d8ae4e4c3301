//! Declarative layer descriptions and their compiled, shape-checked form.

use super::conv::{ConvGeom, PoolGeom};
use super::group::{expansion_map, Group};
use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    /// Stride-1 convolution with "same" padding for odd kernels.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding: kernel / 2,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }
}

/// Group convolution. Channel counts are per group element: the layer emits
/// `out_channels × |G|` maps ordered `(channel, element)`. A lifting layer
/// reads plain `in_channels` maps; otherwise it reads `in_channels × |G|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupConvSpec {
    pub conv: ConvSpec,
    pub lifting: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize },
    Conv2d(ConvSpec),
    Relu,
    MaxPool { kernel: usize, stride: usize },
    AvgPool { kernel: usize, stride: usize },
    GlobalAvgPool,
    Flatten,
    /// `body(x) + shortcut(x)`; an absent shortcut is the identity.
    Residual {
        body: Vec<LayerSpec>,
        shortcut: Option<Box<LayerSpec>>,
    },
    P4Conv(GroupConvSpec),
    P4mConv(GroupConvSpec),
    /// Averages each channel over its group copies.
    GroupPool(Group),
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d(_) => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::AvgPool { .. } => "avgpool",
            LayerSpec::GlobalAvgPool => "global-avgpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Residual { .. } => "residual-block",
            LayerSpec::P4Conv(_) => "p4conv",
            LayerSpec::P4mConv(_) => "p4mconv",
            LayerSpec::GroupPool(_) => "group-pool",
        }
    }

    pub fn group(&self) -> Option<Group> {
        match self {
            LayerSpec::P4Conv(_) => Some(Group::P4),
            LayerSpec::P4mConv(_) => Some(Group::P4m),
            LayerSpec::GroupPool(g) => Some(*g),
            _ => None,
        }
    }
}

/// How a freshly built parameter is filled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Init {
    /// `U(-b, b)` with `b = sqrt(6 / fan_in)`.
    KaimingUniform { fan_in: usize },
    Zeros,
}

#[derive(Clone, Debug)]
pub(crate) struct ParamDecl {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Dense {
        w: usize,
        b: usize,
        inputs: usize,
        outputs: usize,
    },
    Conv {
        w: usize,
        b: usize,
        geom: ConvGeom,
    },
    GroupConv {
        w: usize,
        b: usize,
        geom: ConvGeom,
        map: Vec<u32>,
        group_size: usize,
    },
    Relu,
    MaxPool(PoolGeom),
    AvgPool(PoolGeom),
    GlobalAvgPool { hw: usize },
    Flatten,
    Residual {
        body: Vec<Node>,
        shortcut: Option<Box<Node>>,
    },
    GroupPool { c: usize, g: usize, hw: usize },
}

/// A layer with resolved parameter slots and per-example shapes.
#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub op: Op,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
}

fn check_conv(spec: &ConvSpec, layer: usize) -> Result<()> {
    if spec.kernel == 0 || spec.stride == 0 || spec.in_channels == 0 || spec.out_channels == 0 {
        return Err(LabError::shape(
            layer,
            format!("conv needs kernel, stride and channels >= 1, got {spec:?}"),
        ));
    }
    Ok(())
}

fn image_dims(shape: &[usize], layer: usize, kind: &str) -> Result<(usize, usize, usize)> {
    match shape {
        [c, h, w] => Ok((*c, *h, *w)),
        _ => Err(LabError::shape(
            layer,
            format!("{kind} needs a [C, H, W] input, got {shape:?}"),
        )),
    }
}

pub(crate) struct Compiler {
    pub params: Vec<ParamDecl>,
}

impl Compiler {
    fn param(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.params.push(ParamDecl { name, shape, init });
        self.params.len() - 1
    }

    pub fn compile_seq(
        &mut self,
        specs: &[LayerSpec],
        mut shape: Vec<usize>,
        prefix: &str,
        top: Option<usize>,
    ) -> Result<(Vec<Node>, Vec<usize>)> {
        let mut nodes = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let layer = top.unwrap_or(i);
            let node = self.compile(spec, shape, &format!("{prefix}{i}"), layer)?;
            shape = node.out_shape.clone();
            nodes.push(node);
        }
        Ok((nodes, shape))
    }

    fn compile(&mut self, spec: &LayerSpec, in_shape: Vec<usize>, name: &str, layer: usize) -> Result<Node> {
        let (op, out_shape) = match spec {
            LayerSpec::Dense { inputs, outputs } => {
                if in_shape != [*inputs] {
                    return Err(LabError::shape(
                        layer,
                        format!("dense expects [{inputs}], got {in_shape:?}"),
                    ));
                }
                if *outputs == 0 {
                    return Err(LabError::shape(layer, "dense needs >= 1 output"));
                }
                let w = self.param(
                    format!("{name}.weight"),
                    vec![*outputs, *inputs],
                    Init::KaimingUniform { fan_in: *inputs },
                );
                let b = self.param(format!("{name}.bias"), vec![*outputs], Init::Zeros);
                (
                    Op::Dense {
                        w,
                        b,
                        inputs: *inputs,
                        outputs: *outputs,
                    },
                    vec![*outputs],
                )
            }
            LayerSpec::Conv2d(cs) => {
                check_conv(cs, layer)?;
                let (c, h, w_) = image_dims(&in_shape, layer, "conv2d")?;
                if c != cs.in_channels {
                    return Err(LabError::shape(
                        layer,
                        format!("conv2d expects {} channels, got {c}", cs.in_channels),
                    ));
                }
                let geom = ConvGeom::new(c, h, w_, cs.out_channels, cs.kernel, cs.stride, cs.padding)
                    .ok_or_else(|| LabError::shape(layer, format!("kernel {} larger than input {h}x{w_}", cs.kernel)))?;
                let fan_in = c * cs.kernel * cs.kernel;
                let w = self.param(
                    format!("{name}.weight"),
                    vec![cs.out_channels, c, cs.kernel, cs.kernel],
                    Init::KaimingUniform { fan_in },
                );
                let b = self.param(format!("{name}.bias"), vec![cs.out_channels], Init::Zeros);
                let out = vec![geom.out_c, geom.out_h, geom.out_w];
                (Op::Conv { w, b, geom }, out)
            }
            LayerSpec::P4Conv(gs) | LayerSpec::P4mConv(gs) => {
                let group = spec.group().expect("group layer");
                let cs = &gs.conv;
                check_conv(cs, layer)?;
                let (c, h, w_) = image_dims(&in_shape, layer, spec.kind_name())?;
                if h != w_ {
                    return Err(LabError::shape(
                        layer,
                        format!("{} needs square input, got {h}x{w_}", spec.kind_name()),
                    ));
                }
                let gin = if gs.lifting { 1 } else { group.size() };
                if c != cs.in_channels * gin {
                    return Err(LabError::shape(
                        layer,
                        format!(
                            "{} expects {} input channels, got {c}",
                            spec.kind_name(),
                            cs.in_channels * gin
                        ),
                    ));
                }
                let out_c = cs.out_channels * group.size();
                let geom = ConvGeom::new(c, h, w_, out_c, cs.kernel, cs.stride, cs.padding)
                    .ok_or_else(|| LabError::shape(layer, format!("kernel {} larger than input {h}x{w_}", cs.kernel)))?;
                let mut wshape = vec![cs.out_channels, cs.in_channels];
                if !gs.lifting {
                    wshape.push(group.size());
                }
                wshape.extend([cs.kernel, cs.kernel]);
                let fan_in = c * cs.kernel * cs.kernel;
                let w = self.param(format!("{name}.weight"), wshape, Init::KaimingUniform { fan_in });
                let b = self.param(format!("{name}.bias"), vec![cs.out_channels], Init::Zeros);
                let map = expansion_map(group, gs.lifting, cs.out_channels, cs.in_channels, cs.kernel);
                let out = vec![geom.out_c, geom.out_h, geom.out_w];
                (
                    Op::GroupConv {
                        w,
                        b,
                        geom,
                        map,
                        group_size: group.size(),
                    },
                    out,
                )
            }
            LayerSpec::Relu => (Op::Relu, in_shape.clone()),
            LayerSpec::MaxPool { kernel, stride } | LayerSpec::AvgPool { kernel, stride } => {
                let (c, h, w) = image_dims(&in_shape, layer, spec.kind_name())?;
                let geom = PoolGeom::new(c, h, w, *kernel, *stride).ok_or_else(|| {
                    LabError::shape(layer, format!("pool {kernel}/{stride} does not fit {h}x{w}"))
                })?;
                let out = vec![c, geom.out_h, geom.out_w];
                let op = if matches!(spec, LayerSpec::MaxPool { .. }) {
                    Op::MaxPool(geom)
                } else {
                    Op::AvgPool(geom)
                };
                (op, out)
            }
            LayerSpec::GlobalAvgPool => {
                let (c, h, w) = image_dims(&in_shape, layer, "global-avgpool")?;
                (Op::GlobalAvgPool { hw: h * w }, vec![c])
            }
            LayerSpec::Flatten => (Op::Flatten, vec![in_shape.iter().product()]),
            LayerSpec::GroupPool(group) => {
                let (c, h, w) = image_dims(&in_shape, layer, "group-pool")?;
                let g = group.size();
                if c % g != 0 {
                    return Err(LabError::shape(
                        layer,
                        format!("group-pool over {} needs channels divisible by {g}, got {c}", group.name()),
                    ));
                }
                (
                    Op::GroupPool {
                        c: c / g,
                        g,
                        hw: h * w,
                    },
                    vec![c / g, h, w],
                )
            }
            LayerSpec::Residual { body, shortcut } => {
                let (body_nodes, body_out) =
                    self.compile_seq(body, in_shape.clone(), &format!("{name}.body."), Some(layer))?;
                let (shortcut_node, skip_out) = match shortcut {
                    Some(s) => {
                        let node = self.compile(s, in_shape.clone(), &format!("{name}.shortcut"), layer)?;
                        let out = node.out_shape.clone();
                        (Some(Box::new(node)), out)
                    }
                    None => (None, in_shape.clone()),
                };
                if body_out != skip_out {
                    return Err(LabError::shape(
                        layer,
                        format!("residual body yields {body_out:?} but shortcut yields {skip_out:?}"),
                    ));
                }
                (
                    Op::Residual {
                        body: body_nodes,
                        shortcut: shortcut_node,
                    },
                    body_out,
                )
            }
        };
        Ok(Node {
            op,
            in_shape,
            out_shape,
        })
    }
}
