//! im2col convolution, pooling and dense kernels over NCHW batches.

use matrixmultiply::{dgemm, sgemm};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// `None` when the kernel does not fit the padded input.
    pub fn new(
        in_c: usize,
        in_h: usize,
        in_w: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Option<Self> {
        if in_h + 2 * pad < k || in_w + 2 * pad < k {
            return None;
        }
        Some(ConvGeom {
            in_c,
            in_h,
            in_w,
            out_c,
            k,
            stride,
            pad,
            out_h: (in_h + 2 * pad - k) / stride + 1,
            out_w: (in_w + 2 * pad - k) / stride + 1,
        })
    }

    fn patch(&self) -> usize {
        self.in_c * self.k * self.k
    }

    fn pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_c * self.pixels()
    }

    #[cfg(test)]
    pub fn weight_len(&self) -> usize {
        self.out_c * self.patch()
    }
}

fn im2col(g: &ConvGeom, x: &[f32], cols: &mut [f32]) {
    let p = g.pixels();
    for c in 0..g.in_c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.in_h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &x[(c * g.in_h + iy as usize) * g.in_w..][..g.in_w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.in_w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(g: &ConvGeom, cols: &[f32], dx: &mut [f32]) {
    let p = g.pixels();
    for c in 0..g.in_c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst = &mut dx[(c * g.in_h + iy as usize) * g.in_w..][..g.in_w];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.in_w {
                            dst[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `c[m×n] = beta·c + a[m×k]·b[k×n]` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    debug_assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    debug_assert!(m * n <= c.len());
    // SAFETY: the debug assertions above bound every strided access; callers
    // pass slices sized from the same geometry in release builds.
    unsafe {
        sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn is_pointwise(g: &ConvGeom) -> bool {
    g.k == 1 && g.stride == 1 && g.pad == 0
}

pub(crate) fn conv_forward(g: &ConvGeom, n: usize, x: &[f32], w: &[f32], b: &[f32]) -> Vec<f32> {
    let (patch, p) = (g.patch(), g.pixels());
    let mut y = vec![0.0; n * g.out_len()];
    let mut cols = vec![0.0; if is_pointwise(g) { 0 } else { patch * p }];
    for i in 0..n {
        let xi = &x[i * g.in_len()..(i + 1) * g.in_len()];
        let src: &[f32] = if is_pointwise(g) {
            xi
        } else {
            im2col(g, xi, &mut cols);
            &cols
        };
        let yi = &mut y[i * g.out_len()..(i + 1) * g.out_len()];
        gemm(g.out_c, patch, p, w, (patch, 1), src, (p, 1), 0.0, yi);
        for (o, &bias) in b.iter().enumerate() {
            for v in &mut yi[o * p..(o + 1) * p] {
                *v += bias;
            }
        }
    }
    y
}

/// Forward pass accumulated in `f64` and rounded once. Products of two `f32`
/// are exact in `f64`, so the result barely depends on summation order; group
/// layers use this to stay equivariant when a transformed input permutes the
/// patch rows.
pub(crate) fn conv_forward_wide(g: &ConvGeom, n: usize, x: &[f32], w: &[f32], b: &[f32]) -> Vec<f32> {
    let (patch, p) = (g.patch(), g.pixels());
    let w64: Vec<f64> = w.iter().map(|&v| v as f64).collect();
    let mut cols = vec![0.0f32; patch * p];
    let mut cols64 = vec![0.0f64; patch * p];
    let mut acc = vec![0.0f64; g.out_len()];
    let mut y = Vec::with_capacity(n * g.out_len());
    for i in 0..n {
        let xi = &x[i * g.in_len()..(i + 1) * g.in_len()];
        if is_pointwise(g) {
            cols[..xi.len()].copy_from_slice(xi);
        } else {
            im2col(g, xi, &mut cols);
        }
        for (d, &s) in cols64.iter_mut().zip(&cols) {
            *d = s as f64;
        }
        if p > 0 {
            // SAFETY: w64 is out_c×patch, cols64 patch×p and acc out_c×p,
            // all row-major and sized from the same geometry.
            unsafe {
                dgemm(
                    g.out_c,
                    patch,
                    p,
                    1.0,
                    w64.as_ptr(),
                    patch as isize,
                    1,
                    cols64.as_ptr(),
                    p as isize,
                    1,
                    0.0,
                    acc.as_mut_ptr(),
                    p as isize,
                    1,
                );
            }
        }
        for (o, &bias) in b.iter().enumerate() {
            y.extend(acc[o * p..(o + 1) * p].iter().map(|&v| (v + bias as f64) as f32));
        }
    }
    y
}

/// Accumulates weight/bias gradients when given; returns the input gradient
/// when `want_dx`.
pub(crate) fn conv_backward(
    g: &ConvGeom,
    n: usize,
    x: &[f32],
    w: &[f32],
    dy: &[f32],
    mut dw: Option<(&mut [f32], &mut [f32])>,
    want_dx: bool,
) -> Option<Vec<f32>> {
    let (patch, p) = (g.patch(), g.pixels());
    let mut cols = vec![0.0; patch * p];
    let mut dcols = vec![0.0; if want_dx { patch * p } else { 0 }];
    let mut dx = if want_dx {
        Some(vec![0.0; n * g.in_len()])
    } else {
        None
    };
    for i in 0..n {
        let dyi = &dy[i * g.out_len()..(i + 1) * g.out_len()];
        if let Some((dw, db)) = dw.as_mut() {
            let xi = &x[i * g.in_len()..(i + 1) * g.in_len()];
            let src: &[f32] = if is_pointwise(g) {
                xi
            } else {
                im2col(g, xi, &mut cols);
                &cols
            };
            gemm(g.out_c, p, patch, dyi, (p, 1), src, (1, p), 1.0, dw);
            for (o, d) in db.iter_mut().enumerate() {
                *d += dyi[o * p..(o + 1) * p].iter().sum::<f32>();
            }
        }
        if let Some(dx) = dx.as_mut() {
            let dxi = &mut dx[i * g.in_len()..(i + 1) * g.in_len()];
            if is_pointwise(g) {
                gemm(patch, g.out_c, p, w, (1, patch), dyi, (p, 1), 0.0, dxi);
            } else {
                gemm(patch, g.out_c, p, w, (1, patch), dyi, (p, 1), 0.0, &mut dcols);
                col2im(g, &dcols, dxi);
            }
        }
    }
    dx
}

/// `y[n×out] = x[n×in]·wᵀ + b` with `w` stored `[out, in]`.
pub(crate) fn dense_forward(n: usize, inputs: usize, outputs: usize, x: &[f32], w: &[f32], b: &[f32]) -> Vec<f32> {
    let mut y = vec![0.0; n * outputs];
    gemm(n, inputs, outputs, x, (inputs, 1), w, (1, inputs), 0.0, &mut y);
    for row in y.chunks_mut(outputs) {
        for (v, &bias) in row.iter_mut().zip(b) {
            *v += bias;
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward(
    n: usize,
    inputs: usize,
    outputs: usize,
    x: &[f32],
    w: &[f32],
    dy: &[f32],
    dw: Option<(&mut [f32], &mut [f32])>,
    want_dx: bool,
) -> Option<Vec<f32>> {
    if let Some((dw, db)) = dw {
        gemm(outputs, n, inputs, dy, (1, outputs), x, (inputs, 1), 1.0, dw);
        for row in dy.chunks(outputs) {
            for (d, &v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
    }
    want_dx.then(|| {
        let mut dx = vec![0.0; n * inputs];
        gemm(n, outputs, inputs, dy, (outputs, 1), w, (inputs, 1), 0.0, &mut dx);
        dx
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct PoolGeom {
    pub c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub k: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl PoolGeom {
    pub fn new(c: usize, in_h: usize, in_w: usize, k: usize, stride: usize) -> Option<Self> {
        if k == 0 || stride == 0 || in_h < k || in_w < k {
            return None;
        }
        Some(PoolGeom {
            c,
            in_h,
            in_w,
            k,
            stride,
            out_h: (in_h - k) / stride + 1,
            out_w: (in_w - k) / stride + 1,
        })
    }

    fn planes(&self, n: usize) -> usize {
        n * self.c
    }
}

/// Returns pooled values and the flat input index each maximum came from.
pub(crate) fn maxpool_forward(g: &PoolGeom, n: usize, x: &[f32]) -> (Vec<f32>, Vec<u32>) {
    let (ip, op) = (g.in_h * g.in_w, g.out_h * g.out_w);
    let mut y = Vec::with_capacity(g.planes(n) * op);
    let mut idx = Vec::with_capacity(g.planes(n) * op);
    for plane in 0..g.planes(n) {
        let base = plane * ip;
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let mut best = base + oy * g.stride * g.in_w + ox * g.stride;
                for ky in 0..g.k {
                    for kx in 0..g.k {
                        let j = base + (oy * g.stride + ky) * g.in_w + ox * g.stride + kx;
                        if x[j] > x[best] {
                            best = j;
                        }
                    }
                }
                y.push(x[best]);
                idx.push(best as u32);
            }
        }
    }
    (y, idx)
}

pub(crate) fn avgpool_forward(g: &PoolGeom, n: usize, x: &[f32]) -> Vec<f32> {
    let ip = g.in_h * g.in_w;
    let scale = 1.0 / (g.k * g.k) as f32;
    let mut y = Vec::with_capacity(g.planes(n) * g.out_h * g.out_w);
    for plane in 0..g.planes(n) {
        let base = plane * ip;
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let mut s = 0.0;
                for ky in 0..g.k {
                    let row = base + (oy * g.stride + ky) * g.in_w + ox * g.stride;
                    s += x[row..row + g.k].iter().sum::<f32>();
                }
                y.push(s * scale);
            }
        }
    }
    y
}

pub(crate) fn avgpool_backward(g: &PoolGeom, n: usize, dy: &[f32]) -> Vec<f32> {
    let (ip, op) = (g.in_h * g.in_w, g.out_h * g.out_w);
    let scale = 1.0 / (g.k * g.k) as f32;
    let mut dx = vec![0.0; g.planes(n) * ip];
    for plane in 0..g.planes(n) {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let d = dy[plane * op + oy * g.out_w + ox] * scale;
                for ky in 0..g.k {
                    let row = plane * ip + (oy * g.stride + ky) * g.in_w + ox * g.stride;
                    for v in &mut dx[row..row + g.k] {
                        *v += d;
                    }
                }
            }
        }
    }
    dx
}
