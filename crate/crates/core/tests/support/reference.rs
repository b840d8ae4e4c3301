//! Straight-line `f64` re-implementation of the layer stack, used as an
//! independent oracle for forward values and finite-difference gradients.
//! Shares nothing with the engine beyond the `LayerSpec` description.

#![allow(dead_code)]

use robustlab::nn::{Group, LayerSpec, ModelGraph};

/// One example's activations `[C, H, W]` or `[F]`.
#[derive(Clone, Debug)]
pub struct Act {
    pub shape: Vec<usize>,
    pub v: Vec<f64>,
}

/// Relu signs and pool winners seen during a pass; identical patterns at
/// `x ± h` mean the network is smooth between the two probes.
pub type Pattern = Vec<u32>;

fn rot90(n: usize, k: &[f64]) -> Vec<f64> {
    // counter-clockwise quarter turn: out[i][j] = in[j][n-1-i]
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = k[j * n + (n - 1 - i)];
        }
    }
    out
}

fn flip(n: usize, k: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = k[i * n + (n - 1 - j)];
        }
    }
    out
}

/// Transform of a square map by group element `(mirror, turns)`: mirror
/// first, then rotate.
fn transform(n: usize, mirror: bool, turns: usize, k: &[f64]) -> Vec<f64> {
    let mut out = if mirror { flip(n, k) } else { k.to_vec() };
    for _ in 0..turns {
        out = rot90(n, &out);
    }
    out
}

fn elem(idx: usize) -> (bool, usize) {
    (idx >= 4, idx % 4)
}

fn index(mirror: bool, turns: usize) -> usize {
    (mirror as usize) * 4 + turns % 4
}

/// `g⁻¹ h` for `g = r^kg m^mg`, `h = r^kh m^mh`, using `m r^j = r^-j m`.
fn inv_compose(g: usize, h: usize) -> usize {
    let (mg, kg) = elem(g);
    let (mh, kh) = elem(h);
    if mg {
        index(!mh, (kg + 4 - kh) % 4)
    } else {
        index(mh, (kh + 4 - kg) % 4)
    }
}

fn conv(
    x: &Act,
    w: &[f64],
    b: &[f64],
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Act {
    let (cin, h, wd) = (x.shape[0], x.shape[1], x.shape[2]);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; cout * oh * ow];
    for o in 0..cout {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = b[o];
                for c in 0..cin {
                    for a in 0..k {
                        for bb in 0..k {
                            let iy = (oy * stride + a) as isize - pad as isize;
                            let ix = (ox * stride + bb) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            s += x.v[(c * h + iy as usize) * wd + ix as usize] * w[((o * cin + c) * k + a) * k + bb];
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = s;
            }
        }
    }
    Act {
        shape: vec![cout, oh, ow],
        v: out,
    }
}

/// Expanded group filter bank built from explicit rotations and flips.
fn group_filters(group: Group, lifting: bool, cout: usize, cin: usize, k: usize, w: &[f64]) -> Vec<f64> {
    let gs = group.size();
    let gin = if lifting { 1 } else { gs };
    let kk = k * k;
    let mut out = Vec::with_capacity(cout * gs * cin * gin * kk);
    for o in 0..cout {
        for g in 0..gs {
            let (m, t) = elem(g);
            for i in 0..cin {
                for h in 0..gin {
                    let src = if lifting {
                        &w[(o * cin + i) * kk..][..kk]
                    } else {
                        let sh = inv_compose(g, h);
                        &w[((o * cin + i) * gs + sh) * kk..][..kk]
                    };
                    out.extend(transform(k, m, t, src));
                }
            }
        }
    }
    out
}

fn pool(x: &Act, k: usize, s: usize, max: bool, pattern: &mut Pattern) -> Act {
    let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
    let (oh, ow) = ((h - k) / s + 1, (w - k) / s + 1);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                let mut sum = 0.0;
                for a in 0..k {
                    for b in 0..k {
                        let v = x.v[(ch * h + oy * s + a) * w + ox * s + b];
                        sum += v;
                        if v > best {
                            best = v;
                            arg = a * k + b;
                        }
                    }
                }
                if max {
                    pattern.push(arg as u32);
                    out.push(best);
                } else {
                    out.push(sum / (k * k) as f64);
                }
            }
        }
    }
    Act {
        shape: vec![c, oh, ow],
        v: out,
    }
}

pub struct Reference<'a> {
    pub params: Vec<Vec<f64>>,
    layers: &'a [LayerSpec],
}

impl<'a> Reference<'a> {
    pub fn new(model: &'a ModelGraph) -> Self {
        Reference {
            params: model
                .params()
                .iter()
                .map(|p| p.value.data().iter().map(|&v| v as f64).collect())
                .collect(),
            layers: model.layers(),
        }
    }

    pub fn forward(&self, x: Act, pattern: &mut Pattern) -> Act {
        let mut cursor = 0;
        self.seq(self.layers, x, &mut cursor, pattern)
    }

    fn seq(&self, layers: &[LayerSpec], mut x: Act, cursor: &mut usize, pattern: &mut Pattern) -> Act {
        for l in layers {
            x = self.layer(l, x, cursor, pattern);
        }
        x
    }

    fn take2(&self, cursor: &mut usize) -> (&[f64], &[f64]) {
        let w = &self.params[*cursor];
        let b = &self.params[*cursor + 1];
        *cursor += 2;
        (w, b)
    }

    fn layer(&self, l: &LayerSpec, x: Act, cursor: &mut usize, pattern: &mut Pattern) -> Act {
        match l {
            LayerSpec::Dense { inputs, outputs } => {
                let (w, b) = self.take2(cursor);
                let v = (0..*outputs)
                    .map(|o| b[o] + (0..*inputs).map(|i| w[o * inputs + i] * x.v[i]).sum::<f64>())
                    .collect();
                Act {
                    shape: vec![*outputs],
                    v,
                }
            }
            LayerSpec::Conv2d(c) => {
                let (w, b) = self.take2(cursor);
                conv(&x, w, b, c.out_channels, c.kernel, c.stride, c.padding)
            }
            LayerSpec::P4Conv(gc) | LayerSpec::P4mConv(gc) => {
                let group = l.group().unwrap();
                let (w, b) = self.take2(cursor);
                let c = &gc.conv;
                let filters = group_filters(group, gc.lifting, c.out_channels, c.in_channels, c.kernel, w);
                let bias: Vec<f64> = b.iter().flat_map(|&v| std::iter::repeat(v).take(group.size())).collect();
                conv(&x, &filters, &bias, c.out_channels * group.size(), c.kernel, c.stride, c.padding)
            }
            LayerSpec::Relu => {
                pattern.extend(x.v.iter().map(|&v| (v > 0.0) as u32));
                Act {
                    shape: x.shape,
                    v: x.v.iter().map(|&v| v.max(0.0)).collect(),
                }
            }
            LayerSpec::MaxPool { kernel, stride } => pool(&x, *kernel, *stride, true, pattern),
            LayerSpec::AvgPool { kernel, stride } => pool(&x, *kernel, *stride, false, pattern),
            LayerSpec::GlobalAvgPool => {
                let hw = x.shape[1] * x.shape[2];
                Act {
                    shape: vec![x.shape[0]],
                    v: x.v.chunks(hw).map(|c| c.iter().sum::<f64>() / hw as f64).collect(),
                }
            }
            LayerSpec::Flatten => Act {
                shape: vec![x.v.len()],
                v: x.v,
            },
            LayerSpec::GroupPool(g) => {
                let gs = g.size();
                let (c, h, w) = (x.shape[0] / gs, x.shape[1], x.shape[2]);
                let hw = h * w;
                let mut v = vec![0.0; c * hw];
                for ch in 0..c {
                    for e in 0..gs {
                        for p in 0..hw {
                            v[ch * hw + p] += x.v[(ch * gs + e) * hw + p] / gs as f64;
                        }
                    }
                }
                Act {
                    shape: vec![c, h, w],
                    v,
                }
            }
            LayerSpec::Residual { body, shortcut } => {
                let h = self.seq(body, x.clone(), cursor, pattern);
                let s = match shortcut {
                    Some(sc) => self.layer(sc, x, cursor, pattern),
                    None => x,
                };
                Act {
                    shape: h.shape,
                    v: h.v.iter().zip(&s.v).map(|(a, b)| a + b).collect(),
                }
            }
        }
    }

    /// Mean softmax cross-entropy over a batch of examples.
    pub fn loss(&self, xs: &[Act], labels: &[usize], pattern: &mut Pattern) -> f64 {
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(labels) {
            let z = self.forward(x.clone(), pattern).v;
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += lse - z[y];
        }
        total / xs.len() as f64
    }
}
