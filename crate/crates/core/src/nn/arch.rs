//! MicroResNet: a stem convolution, residual stages and a dense head, in a
//! plain or a group-equivariant (p4/p4m) flavour.

use rand::Rng;

use super::group::Group;
use super::layer::{ConvSpec, GroupConvSpec, LayerSpec};
use super::ModelGraph;
use crate::error::{LabError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MicroResNet {
    /// `[C, H, W]`.
    pub input_shape: [usize; 3],
    /// Channel width per stage (per group element for equivariant models).
    pub widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub classes: usize,
    /// `Some` swaps every convolution for a group convolution and downsamples
    /// with 2×2 average pooling so the stack stays exactly equivariant.
    pub group: Option<Group>,
}

impl MicroResNet {
    /// Three stages of two blocks, widths 16/32/64.
    pub fn standard(input_shape: [usize; 3], classes: usize) -> Self {
        MicroResNet {
            input_shape,
            widths: vec![16, 32, 64],
            blocks_per_stage: 2,
            classes,
            group: None,
        }
    }

    /// Narrow single-block variant for quick CPU experiments.
    pub fn small(input_shape: [usize; 3], classes: usize) -> Self {
        MicroResNet {
            input_shape,
            widths: vec![8, 16, 32],
            blocks_per_stage: 1,
            classes,
            group: None,
        }
    }

    pub fn with_group(mut self, group: Group) -> Self {
        self.group = Some(group);
        self
    }

    /// Resolves a CLI architecture id.
    pub fn from_id(id: &str, input_shape: [usize; 3], classes: usize) -> Result<Self> {
        let (group, rest) = match id.split_once(':') {
            Some(("p4", rest)) => (Some(Group::P4), rest),
            Some(("p4m", rest)) => (Some(Group::P4m), rest),
            Some((other, _)) => return Err(LabError::invalid(format!("unknown group prefix '{other}'"))),
            None => (None, id),
        };
        let mut arch = match rest {
            "micro-resnet" => Self::standard(input_shape, classes),
            "micro-resnet-small" => Self::small(input_shape, classes),
            other => return Err(LabError::invalid(format!("unknown architecture '{other}'"))),
        };
        arch.group = group;
        Ok(arch)
    }

    fn conv(&self, cin: usize, cout: usize, kernel: usize, stride: usize, lifting: bool) -> LayerSpec {
        let conv = ConvSpec {
            in_channels: cin,
            out_channels: cout,
            kernel,
            stride,
            padding: kernel / 2,
        };
        match self.group {
            None => LayerSpec::Conv2d(conv),
            Some(Group::P4) => LayerSpec::P4Conv(GroupConvSpec { conv, lifting }),
            Some(Group::P4m) => LayerSpec::P4mConv(GroupConvSpec { conv, lifting }),
        }
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut layers = vec![self.conv(self.input_shape[0], self.widths[0], 3, 1, true), LayerSpec::Relu];
        let mut cin = self.widths[0];
        for (s, &w) in self.widths.iter().enumerate() {
            for b in 0..self.blocks_per_stage {
                let downsample = s > 0 && b == 0;
                let stride = if downsample && self.group.is_none() { 2 } else { 1 };
                if downsample && self.group.is_some() {
                    layers.push(LayerSpec::AvgPool { kernel: 2, stride: 2 });
                }
                let shortcut = (stride != 1 || cin != w).then(|| Box::new(self.conv(cin, w, 1, stride, false)));
                layers.push(LayerSpec::Residual {
                    body: vec![self.conv(cin, w, 3, stride, false), LayerSpec::Relu, self.conv(w, w, 3, 1, false)],
                    shortcut,
                });
                layers.push(LayerSpec::Relu);
                cin = w;
            }
        }
        if let Some(g) = self.group {
            layers.push(LayerSpec::GroupPool(g));
        }
        layers.push(LayerSpec::GlobalAvgPool);
        layers.push(LayerSpec::Dense {
            inputs: cin,
            outputs: self.classes,
        });
        layers
    }

    /// Builds the model with the last convolution of every residual branch
    /// zeroed, so each block starts as the identity.
    pub fn build<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ModelGraph> {
        let mut model = ModelGraph::new(&self.input_shape, self.layers(), self.classes, rng)?;
        for p in model.params_mut() {
            if p.name.contains(".body.2.") {
                p.value.data_mut().fill(0.0);
            }
        }
        Ok(model)
    }
}
