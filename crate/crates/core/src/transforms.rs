//! Image geometry and augmentation: bilinear rotation/translation warps,
//! spatial pose grids and the `std` / `std*` augmentation policies.
//!
//! Images are channel-major `[C, H, W]` with values in `[0, 1]`.

use rand::Rng;

use crate::error::{LabError, Result};
use crate::tensor::Tensor;

/// Rotation in degrees (counter-clockwise on screen) followed by a
/// translation in pixels (`tx` rightward, `ty` downward).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Pose {
    pub rotation: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        rotation: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn new(rotation: f64, tx: f64, ty: f64) -> Self {
        Pose { rotation, tx, ty }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == 0.0 && self.tx == 0.0 && self.ty == 0.0
    }
}

/// Exact cosine/sine at multiples of 90°.
fn cos_sin_deg(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter == quarter.round() {
        match (quarter.round() as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let r = deg.to_radians();
        (r.cos(), r.sin())
    }
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Inverse-mapped bilinear warp of one `[C, H, W]` image into `dst`.
/// Samples falling outside the frame read as 0.
pub fn warp_into(shape: [usize; 3], src: &[f32], pose: Pose, dst: &mut [f32]) {
    let [c, h, w] = shape;
    debug_assert_eq!(src.len(), c * h * w);
    debug_assert_eq!(dst.len(), c * h * w);
    if pose.is_identity() {
        dst.copy_from_slice(src);
        return;
    }
    let (cos, sin) = cos_sin_deg(pose.rotation);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let plane = h * w;
    for oy in 0..h {
        for ox in 0..w {
            let ax = ox as f64 - cx - pose.tx;
            let ay = oy as f64 - cy - pose.ty;
            let sx = snap(ax * cos - ay * sin + cx);
            let sy = snap(ax * sin + ay * cos + cy);
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let taps = [
                (y0, x0, (1.0 - fy) * (1.0 - fx)),
                (y0, x0 + 1, (1.0 - fy) * fx),
                (y0 + 1, x0, fy * (1.0 - fx)),
                (y0 + 1, x0 + 1, fy * fx),
            ];
            for ch in 0..c {
                let mut acc = 0.0f64;
                for &(yy, xx, wt) in &taps {
                    if wt == 0.0 || yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                        continue;
                    }
                    acc += wt * src[ch * plane + yy as usize * w + xx as usize] as f64;
                }
                dst[ch * plane + oy * w + ox] = (acc as f32).clamp(0.0, 1.0);
            }
        }
    }
}

/// Warps a `[C, H, W]` image tensor.
pub fn warp(image: &Tensor, pose: Pose) -> Result<Tensor> {
    let shape = image_shape(image)?;
    let mut out = Tensor::zeros(image.shape());
    warp_into(shape, image.data(), pose, out.data_mut());
    Ok(out)
}

fn image_shape(image: &Tensor) -> Result<[usize; 3]> {
    match *image.shape() {
        [c, h, w] => Ok([c, h, w]),
        ref s => Err(LabError::invalid(format!("expected a [C, H, W] image, got {s:?}"))),
    }
}

/// Declarative pose mesh: evenly spaced, endpoint-inclusive, symmetric values
/// on each axis.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub name: String,
    pub translations_per_axis: usize,
    pub rotations: usize,
    pub max_translation: f64,
    pub max_rotation: f64,
}

impl GridSpec {
    pub fn new(name: &str, translations_per_axis: usize, rotations: usize, max_translation: f64, max_rotation: f64) -> Self {
        GridSpec {
            name: name.to_string(),
            translations_per_axis,
            rotations,
            max_translation,
            max_rotation,
        }
    }

    /// Built-in grids: `grid775`, `grid135`, `grid775-10`, `rot30`, `rot10`.
    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "grid775" => Self::new(name, 5, 31, 3.0, 30.0),
            "grid135" => Self::new(name, 3, 15, 3.0, 30.0),
            "grid775-10" => Self::new(name, 5, 31, 3.0, 10.0),
            "rot30" => Self::new(name, 1, 31, 0.0, 30.0),
            "rot10" => Self::new(name, 1, 31, 0.0, 10.0),
            _ => return None,
        })
    }

    pub fn pose_count(&self) -> usize {
        self.translations_per_axis * self.translations_per_axis * self.rotations
    }
}

/// `count` symmetric values in `[-max, max]`; a single value is 0.
fn symmetric_values(count: usize, max: f64) -> Vec<f64> {
    if count == 1 {
        return vec![0.0];
    }
    let d = (count - 1) as f64;
    (0..count)
        .map(|i| max * (2.0 * i as f64 - d) / d)
        .collect()
}

/// Cartesian product of the axis values, rotation-major then `tx` then `ty`.
pub fn make_grid(spec: &GridSpec) -> Result<Vec<Pose>> {
    for (axis, n) in [("translation", spec.translations_per_axis), ("rotation", spec.rotations)] {
        if n == 0 || n % 2 == 0 {
            return Err(LabError::invalid(format!(
                "grid '{}': {axis} value count must be odd and positive so 0 is on the grid, got {n}",
                spec.name
            )));
        }
    }
    for (axis, m) in [("translation", spec.max_translation), ("rotation", spec.max_rotation)] {
        if !m.is_finite() || m < 0.0 {
            return Err(LabError::invalid(format!("grid '{}': max {axis} must be finite and >= 0", spec.name)));
        }
    }
    let rots = symmetric_values(spec.rotations, spec.max_rotation);
    let trans = symmetric_values(spec.translations_per_axis, spec.max_translation);
    let mut poses = Vec::with_capacity(spec.pose_count());
    for &r in &rots {
        for &tx in &trans {
            for &ty in &trans {
                poses.push(Pose::new(r, tx, ty));
            }
        }
    }
    Ok(poses)
}

/// Multiplicative colour factors, each applied only when different from 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jitter {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
}

impl Jitter {
    pub const NONE: Jitter = Jitter {
        brightness: 1.0,
        contrast: 1.0,
        saturation: 1.0,
    };
}

fn gray(shape: [usize; 3], img: &[f32], p: usize) -> f32 {
    let [c, h, w] = shape;
    let plane = h * w;
    if c == 3 {
        0.299 * img[p] + 0.587 * img[plane + p] + 0.114 * img[2 * plane + p]
    } else {
        (0..c).map(|ch| img[ch * plane + p]).sum::<f32>() / c as f32
    }
}

/// Brightness scales pixels; contrast blends with the mean grey level;
/// saturation blends each pixel with its own grey value. Clamped after
/// every stage.
pub fn apply_jitter(shape: [usize; 3], img: &mut [f32], jitter: Jitter) {
    let [_, h, w] = shape;
    let plane = h * w;
    if jitter.brightness != 1.0 {
        let b = jitter.brightness as f32;
        img.iter_mut().for_each(|v| *v = (*v * b).clamp(0.0, 1.0));
    }
    if jitter.contrast != 1.0 {
        let mean = (0..plane).map(|p| gray(shape, img, p) as f64).sum::<f64>() / plane as f64;
        let (m, k) = (mean as f32, jitter.contrast as f32);
        img.iter_mut().for_each(|v| *v = (m + k * (*v - m)).clamp(0.0, 1.0));
    }
    if jitter.saturation != 1.0 && shape[0] > 1 {
        let k = jitter.saturation as f32;
        let grays: Vec<f32> = (0..plane).map(|p| gray(shape, img, p)).collect();
        for (i, v) in img.iter_mut().enumerate() {
            let g = grays[i % plane];
            *v = (g + k * (*v - g)).clamp(0.0, 1.0);
        }
    }
}

fn flip_horizontal(shape: [usize; 3], img: &mut [f32]) {
    let w = shape[2];
    for row in img.chunks_mut(w) {
        row.reverse();
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentPolicy {
    /// Integer shifts are drawn from `[-max, max]` on each axis.
    pub max_translation: f64,
    pub flip_probability: f64,
    /// Colour factors are drawn from `[1 - jitter, 1 + jitter]`.
    pub jitter: f64,
    pub max_rotation: f64,
}

impl AugmentPolicy {
    pub const NONE: AugmentPolicy = AugmentPolicy {
        max_translation: 0.0,
        flip_probability: 0.0,
        jitter: 0.0,
        max_rotation: 0.0,
    };

    /// `std`: ±4px, flip 0.5, 25% colour jitter, ±2°.
    pub fn standard() -> Self {
        AugmentPolicy {
            max_translation: 4.0,
            flip_probability: 0.5,
            jitter: 0.25,
            max_rotation: 2.0,
        }
    }

    /// `std*`: ±3px, ±30°, otherwise as `std`.
    pub fn standard_star() -> Self {
        AugmentPolicy {
            max_translation: 3.0,
            max_rotation: 30.0,
            ..Self::standard()
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "none" => Some(Self::NONE),
            "std" => Some(Self::standard()),
            "std*" | "std-star" => Some(Self::standard_star()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.flip_probability)
            && (0.0..1.0).contains(&self.jitter)
            && self.max_translation >= 0.0
            && self.max_rotation >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(LabError::invalid(format!("invalid augmentation policy {self:?}")))
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Random flip, then one combined rotation+translation warp, then colour
/// jitter. Every random draw happens in a fixed order, regardless of whether
/// the corresponding stage ends up being a no-op.
pub fn augment_into<R: Rng + ?Sized>(shape: [usize; 3], img: &[f32], policy: &AugmentPolicy, rng: &mut R, out: &mut [f32]) {
    let m = policy.max_translation.floor() as i64;
    let tx = rng.gen_range(-m..=m) as f64;
    let ty = rng.gen_range(-m..=m) as f64;
    let rotation = uniform(rng, -policy.max_rotation, policy.max_rotation);
    let flip = rng.gen::<f64>() < policy.flip_probability;
    let f = policy.jitter;
    let jitter = Jitter {
        brightness: uniform(rng, 1.0 - f, 1.0 + f),
        contrast: uniform(rng, 1.0 - f, 1.0 + f),
        saturation: uniform(rng, 1.0 - f, 1.0 + f),
    };

    let mut src = img.to_vec();
    if flip {
        flip_horizontal(shape, &mut src);
    }
    warp_into(shape, &src, Pose::new(rotation, tx, ty), out);
    apply_jitter(shape, out, jitter);
}

pub fn augment<R: Rng + ?Sized>(image: &Tensor, policy: &AugmentPolicy, rng: &mut R) -> Result<Tensor> {
    let shape = image_shape(image)?;
    let mut out = Tensor::zeros(image.shape());
    augment_into(shape, image.data(), policy, rng, out.data_mut());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noise(shape: [usize; 3], seed: u64) -> Tensor {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(&shape, (0..n).map(|_| r.gen()).collect()).unwrap()
    }

    #[test]
    fn identity_pose_is_bitwise_copy() {
        let img = noise([3, 7, 5], 1);
        assert_eq!(warp(&img, Pose::IDENTITY).unwrap(), img);
    }

    #[test]
    fn quarter_turn_is_index_permutation() {
        let n = 6;
        let img = noise([2, n, n], 2);
        let out = warp(&img, Pose::new(90.0, 0.0, 0.0)).unwrap();
        for c in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    // counter-clockwise: out[i][j] = in[j][n-1-i]
                    let want = img.data()[(c * n + j) * n + (n - 1 - i)];
                    assert_eq!(out.data()[(c * n + i) * n + j], want);
                }
            }
        }
    }

    #[test]
    fn integer_translation_moves_lit_pixel() {
        let mut img = Tensor::zeros(&[1, 5, 8]);
        img.data_mut()[2 * 8 + 1] = 1.0;
        let out = warp(&img, Pose::new(0.0, 3.0, 0.0)).unwrap();
        assert_eq!(out.data()[2 * 8 + 4], 1.0);
        assert_eq!(out.data().iter().sum::<f32>(), 1.0);
        // left edge is zero-filled
        for r in 0..5 {
            for c in 0..3 {
                assert_eq!(out.data()[r * 8 + c], 0.0);
            }
        }
    }

    #[test]
    fn downward_translation() {
        let mut img = Tensor::zeros(&[1, 5, 5]);
        img.data_mut()[0] = 1.0;
        let out = warp(&img, Pose::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(out.data()[2 * 5], 1.0);
    }

    #[test]
    fn preset_grid_cardinalities() {
        for (name, n) in [("grid775", 775), ("grid135", 135), ("grid775-10", 775), ("rot30", 31), ("rot10", 31)] {
            let g = make_grid(&GridSpec::preset(name).unwrap()).unwrap();
            assert_eq!(g.len(), n, "{name}");
            assert!(g.contains(&Pose::IDENTITY), "{name}");
        }
        let rot30 = make_grid(&GridSpec::preset("rot30").unwrap()).unwrap();
        assert!(rot30.iter().all(|p| p.tx == 0.0 && p.ty == 0.0));
    }

    #[test]
    fn grid_values_are_symmetric_and_inclusive() {
        let g = make_grid(&GridSpec::preset("grid775").unwrap()).unwrap();
        assert_eq!(g[0], Pose::new(-30.0, -3.0, -3.0));
        assert_eq!(g[g.len() - 1], Pose::new(30.0, 3.0, 3.0));
        // rotation-major, then tx, then ty
        assert_eq!(g[1], Pose::new(-30.0, -3.0, -1.5));
        assert_eq!(g[5], Pose::new(-30.0, -1.5, -3.0));
        assert_eq!(g[25].rotation, -28.0);
    }

    #[test]
    fn even_translation_count_rejected() {
        assert!(make_grid(&GridSpec::new("bad", 4, 31, 3.0, 30.0)).is_err());
        assert!(make_grid(&GridSpec::new("bad", 3, 0, 3.0, 30.0)).is_err());
    }

    #[test]
    fn zero_policy_is_identity() {
        let img = noise([3, 8, 8], 3);
        let mut r = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(augment(&img, &AugmentPolicy::NONE, &mut r).unwrap(), img);
    }

    #[test]
    fn augmentation_is_deterministic_per_seed() {
        let img = noise([3, 8, 8], 5);
        let a = augment(&img, &AugmentPolicy::standard_star(), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let b = augment(&img, &AugmentPolicy::standard_star(), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn brightness_factor_on_constant_image() {
        let mut img = vec![0.4f32; 12];
        apply_jitter([3, 2, 2], &mut img, Jitter { brightness: 1.25, ..Jitter::NONE });
        assert!(img.iter().all(|&v| (v - 0.5).abs() < 1e-7));
        let mut bright = vec![0.9f32; 4];
        apply_jitter([1, 2, 2], &mut bright, Jitter { brightness: 1.25, ..Jitter::NONE });
        assert!(bright.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn named_policies() {
        let s = AugmentPolicy::by_name("std").unwrap();
        assert_eq!((s.max_translation, s.flip_probability, s.jitter, s.max_rotation), (4.0, 0.5, 0.25, 2.0));
        let s = AugmentPolicy::by_name("std*").unwrap();
        assert_eq!((s.max_translation, s.max_rotation), (3.0, 30.0));
        assert!(AugmentPolicy { jitter: 1.0, ..s }.validate().is_err());
    }
}
