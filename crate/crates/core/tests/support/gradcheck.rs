//! Central finite differences on the `f64` reference against the engine's
//! analytic gradients.

#![allow(dead_code)]

use rand::Rng;
use robustlab::nn::{ConvSpec, Group, GroupConvSpec, LayerSpec, ModelGraph, Want};
use robustlab::Tensor;

use super::reference::{Act, Pattern, Reference};

pub const FD_STEP: f64 = 1e-4;
/// Retry step for elements whose `±FD_STEP` probes cross a kink.
pub const FD_FALLBACK_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Below this magnitude elements are compared absolutely.
pub const ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Default, Clone)]
pub struct GradReport {
    pub checked: usize,
    /// Elements whose `±h` probes straddled a relu or pool switch.
    pub kinked: usize,
    pub failures: Vec<String>,
    pub worst_rel: f64,
}

impl GradReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn compare(report: &mut GradReport, what: String, analytic: f64, fd: f64) {
    report.checked += 1;
    let diff = (analytic - fd).abs();
    if fd.abs() < ABS_FLOOR {
        if diff > ABS_FLOOR {
            report.failures.push(format!("{what}: analytic {analytic:e} fd {fd:e}"));
        }
        return;
    }
    let rel = diff / analytic.abs().max(fd.abs());
    report.worst_rel = report.worst_rel.max(rel);
    if rel > REL_TOL {
        report.failures.push(format!("{what}: analytic {analytic:e} fd {fd:e} rel {rel:e}"));
    }
}

fn acts(model: &ModelGraph, batch: &Tensor) -> Vec<Act> {
    (0..batch.batch_size())
        .map(|i| Act {
            shape: model.input_shape().to_vec(),
            v: batch.row(i).iter().map(|&v| v as f64).collect(),
        })
        .collect()
}

pub fn check_gradients(model: &ModelGraph, batch: &Tensor, labels: &[usize]) -> GradReport {
    let grads = model.loss_and_grads(batch, labels, Want::Both).expect("engine gradients");
    let mut reference = Reference::new(model);
    let xs = acts(model, batch);
    let mut report = GradReport::default();
    let mut base_pattern = Pattern::new();
    reference.loss(&xs, labels, &mut base_pattern);

    let params = grads.params.expect("param grads");
    for (pi, g) in params.iter().enumerate() {
        for j in 0..g.len() {
            let orig = reference.params[pi][j];
            let fd = [FD_STEP, FD_FALLBACK_STEP].into_iter().find_map(|h| {
                let (mut pp, mut pm) = (Pattern::new(), Pattern::new());
                reference.params[pi][j] = orig + h;
                let lp = reference.loss(&xs, labels, &mut pp);
                reference.params[pi][j] = orig - h;
                let lm = reference.loss(&xs, labels, &mut pm);
                reference.params[pi][j] = orig;
                (pp == base_pattern && pm == base_pattern).then(|| (lp - lm) / (2.0 * h))
            });
            let Some(fd) = fd else {
                report.kinked += 1;
                continue;
            };
            let name = &model.params()[pi].name;
            compare(&mut report, format!("{name}[{j}]"), g.data()[j] as f64, fd);
        }
    }

    let input = grads.input.expect("input grads");
    let mut xs_mut = xs.clone();
    for i in 0..xs.len() {
        for j in 0..xs[i].v.len() {
            let orig = xs[i].v[j];
            let fd = [FD_STEP, FD_FALLBACK_STEP].into_iter().find_map(|h| {
                let (mut pp, mut pm) = (Pattern::new(), Pattern::new());
                xs_mut[i].v[j] = orig + h;
                let lp = reference.loss(&xs_mut, labels, &mut pp);
                xs_mut[i].v[j] = orig - h;
                let lm = reference.loss(&xs_mut, labels, &mut pm);
                xs_mut[i].v[j] = orig;
                (pp == base_pattern && pm == base_pattern).then(|| (lp - lm) / (2.0 * h))
            });
            let Some(fd) = fd else {
                report.kinked += 1;
                continue;
            };
            compare(&mut report, format!("input[{i}][{j}]"), input.row(i)[j] as f64, fd);
        }
    }
    report
}

/// Small random architectures covering every layer kind; each stays under
/// 5k parameters.
pub fn random_micro_model<R: Rng>(rng: &mut R, variant: usize) -> (ModelGraph, [usize; 3]) {
    let classes = rng.gen_range(2..5);
    let c = rng.gen_range(1..3);
    let (layers, shape) = match variant % 5 {
        0 => {
            let h = rng.gen_range(4..7);
            let f = rng.gen_range(2..4);
            (
                vec![
                    LayerSpec::Conv2d(ConvSpec::same(c, f, 3)),
                    LayerSpec::Relu,
                    LayerSpec::Flatten,
                    LayerSpec::Dense {
                        inputs: f * h * h,
                        outputs: classes,
                    },
                ],
                [c, h, h],
            )
        }
        1 => (
            vec![
                LayerSpec::Conv2d(ConvSpec::same(c, 3, 3)),
                LayerSpec::Relu,
                LayerSpec::MaxPool { kernel: 2, stride: 2 },
                LayerSpec::Conv2d(ConvSpec::same(3, 4, 3).with_stride(2)),
                LayerSpec::Relu,
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense {
                    inputs: 4,
                    outputs: classes,
                },
            ],
            [c, 8, 8],
        ),
        2 => (
            vec![
                LayerSpec::Conv2d(ConvSpec::same(c, 3, 3)),
                LayerSpec::Relu,
                LayerSpec::Residual {
                    body: vec![
                        LayerSpec::Conv2d(ConvSpec::same(3, 4, 3).with_stride(2)),
                        LayerSpec::Relu,
                        LayerSpec::Conv2d(ConvSpec::same(4, 4, 3)),
                    ],
                    shortcut: Some(Box::new(LayerSpec::Conv2d(ConvSpec {
                        in_channels: 3,
                        out_channels: 4,
                        kernel: 1,
                        stride: 2,
                        padding: 0,
                    }))),
                },
                LayerSpec::Relu,
                LayerSpec::Residual {
                    body: vec![
                        LayerSpec::Conv2d(ConvSpec::same(4, 4, 3)),
                        LayerSpec::Relu,
                        LayerSpec::Conv2d(ConvSpec::same(4, 4, 3)),
                    ],
                    shortcut: None,
                },
                LayerSpec::AvgPool { kernel: 2, stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 4 * 2 * 2,
                    outputs: classes,
                },
            ],
            [c, 7, 7],
        ),
        3 | 4 => {
            let group = if variant % 5 == 3 { Group::P4 } else { Group::P4m };
            let wrap = |conv: ConvSpec, lifting: bool| {
                let g = GroupConvSpec { conv, lifting };
                if group == Group::P4 {
                    LayerSpec::P4Conv(g)
                } else {
                    LayerSpec::P4mConv(g)
                }
            };
            (
                vec![
                    wrap(ConvSpec::same(c, 2, 3), true),
                    LayerSpec::Relu,
                    wrap(ConvSpec::same(2, 2, 3), false),
                    LayerSpec::Relu,
                    LayerSpec::GroupPool(group),
                    LayerSpec::GlobalAvgPool,
                    LayerSpec::Dense {
                        inputs: 2,
                        outputs: classes,
                    },
                ],
                [c, 5, 5],
            )
        }
        _ => unreachable!(),
    };
    let model = ModelGraph::new(&shape, layers, classes, rng).expect("valid micro model");
    assert!(model.param_count() <= 5000);
    // Non-zero biases exercise the bias paths.
    let mut model = model;
    for p in model.params_mut() {
        if p.name.ends_with(".bias") {
            for v in p.value.data_mut() {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
    }
    (model, shape)
}

pub fn random_batch<R: Rng>(rng: &mut R, n: usize, shape: [usize; 3]) -> Tensor {
    let len = n * shape.iter().product::<usize>();
    let data = (0..len).map(|_| rng.gen::<f32>()).collect();
    Tensor::from_vec(&[n, shape[0], shape[1], shape[2]], data).unwrap()
}
