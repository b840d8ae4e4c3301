//! The p4 (rotations by 90°) and p4m (rotations plus mirror) groups acting on
//! the integer pixel lattice, and the filter expansion used by group convolution.

/// 2×2 integer matrix acting on `(row, col)` offsets.
type Mat = [[i32; 2]; 2];

/// Counter-clockwise quarter turn as seen on screen: `(r, c) -> (-c, r)`.
const ROT: Mat = [[0, -1], [1, 0]];
/// Horizontal mirror: `(r, c) -> (r, -c)`.
const MIRROR: Mat = [[1, 0], [0, -1]];
const IDENTITY: Mat = [[1, 0], [0, 1]];

fn mul(a: Mat, b: Mat) -> Mat {
    let mut out = [[0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    P4,
    P4m,
}

impl Group {
    pub fn size(self) -> usize {
        match self {
            Group::P4 => 4,
            Group::P4m => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::P4 => "p4",
            Group::P4m => "p4m",
        }
    }

    /// Element `index = 4·m + k` is `ROT^k · MIRROR^m`.
    fn matrix(self, index: usize) -> Mat {
        debug_assert!(index < self.size());
        let mut m = if index >= 4 { MIRROR } else { IDENTITY };
        for _ in 0..index % 4 {
            m = mul(ROT, m);
        }
        m
    }

    fn index_of(self, m: Mat) -> usize {
        (0..self.size())
            .find(|&i| self.matrix(i) == m)
            .expect("matrix outside the group")
    }

    /// Index of `a · b`.
    pub fn compose(self, a: usize, b: usize) -> usize {
        self.index_of(mul(self.matrix(a), self.matrix(b)))
    }

    pub fn inverse(self, a: usize) -> usize {
        (0..self.size())
            .find(|&b| self.compose(a, b) == 0)
            .expect("every group element has an inverse")
    }

    /// Applies element `g` to an offset given in doubled coordinates so that
    /// even kernels (half-integer centres) stay on the lattice.
    fn act2(self, g: usize, r2: i32, c2: i32) -> (i32, i32) {
        let m = self.matrix(g);
        (m[0][0] * r2 + m[0][1] * c2, m[1][0] * r2 + m[1][1] * c2)
    }

    /// Source pixel for a `k×k` kernel position after transforming by `g`:
    /// the transformed kernel satisfies `K_g(u) = K(g⁻¹ u)`.
    pub(crate) fn kernel_source(self, g: usize, k: usize, a: usize, b: usize) -> (usize, usize) {
        let off = k as i32 - 1;
        let (r2, c2) = (2 * a as i32 - off, 2 * b as i32 - off);
        let (sr, sc) = self.act2(self.inverse(g), r2, c2);
        (((sr + off) / 2) as usize, ((sc + off) / 2) as usize)
    }

    /// Transforms a square `n×n` single-channel map by element `g`:
    /// `out(y) = in(g⁻¹ y)` about the map centre.
    pub fn transform_map(self, g: usize, n: usize, input: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                let (sa, sb) = self.kernel_source(g, n, a, b);
                out[a * n + b] = input[sa * n + sb];
            }
        }
        out
    }
}

/// Gather map from an expanded `[out·G, in·G_in, k, k]` filter bank to its base
/// parameter tensor. Lifting layers have base shape `[out, in, k, k]`
/// (`G_in = 1`); group-to-group layers have `[out, in, G, k, k]`.
pub(crate) fn expansion_map(
    group: Group,
    lifting: bool,
    out_ch: usize,
    in_ch: usize,
    k: usize,
) -> Vec<u32> {
    let gs = group.size();
    let gin = if lifting { 1 } else { gs };
    let mut map = Vec::with_capacity(out_ch * gs * in_ch * gin * k * k);
    for o in 0..out_ch {
        for g in 0..gs {
            let g_inv = group.inverse(g);
            for i in 0..in_ch {
                for h in 0..gin {
                    for a in 0..k {
                        for b in 0..k {
                            let (sa, sb) = group.kernel_source(g, k, a, b);
                            let idx = if lifting {
                                ((o * in_ch + i) * k + sa) * k + sb
                            } else {
                                let sh = group.compose(g_inv, h);
                                (((o * in_ch + i) * gs + sh) * k + sa) * k + sb
                            };
                            map.push(idx as u32);
                        }
                    }
                }
            }
        }
    }
    map
}
