//! Procedural 10-class image set.
//!
//! Two kinds of evidence point at the label:
//!
//! * a glyph (disc, ring, bar, ...) drawn with random colour, position and
//!   scale. With probability `1 - glyph_reliability` the glyph of a different
//!   class is drawn instead, so glyphs are visible but imperfect cues.
//! * a faint colour tint. Glyph and background are grey, and each class adds
//!   a small offset in its own direction of the chroma plane (classes are 36°
//!   apart). A linear read-out of the mean colour recovers the class exactly
//!   and warps do not disturb it, but its norm is tiny and a small
//!   perturbation moves it to a neighbouring class. Single-channel images
//!   carry no tint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DatasetHandle, Role};
use crate::error::{LabError, Result};
use crate::rng::gaussian;

pub const GLYPH_COUNT: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub size: usize,
    pub channels: usize,
    pub classes: usize,
    pub count: usize,
    pub seed: u64,
    /// Std-dev of per-pixel Gaussian noise.
    pub noise: f64,
    /// Chroma magnitude of the class tint.
    pub tint: f64,
    /// Probability that the drawn glyph matches the label.
    pub glyph_reliability: f64,
}

impl SyntheticSpec {
    pub fn new(size: usize, channels: usize, count: usize, seed: u64) -> Self {
        SyntheticSpec {
            size,
            channels,
            classes: GLYPH_COUNT,
            count,
            seed,
            noise: 0.04,
            tint: 0.02,
            glyph_reliability: 1.0,
        }
    }

    pub fn generate(&self) -> Result<DatasetHandle> {
        if self.size < 8 || !(self.channels == 1 || self.channels == 3) {
            return Err(LabError::invalid(format!(
                "synthetic images need size >= 8 and 1 or 3 channels, got {}x{}",
                self.size, self.channels
            )));
        }
        if !(0.0..=1.0).contains(&self.glyph_reliability) || !(self.noise >= 0.0 && self.tint >= 0.0) {
            return Err(LabError::invalid("glyph reliability must be in [0, 1] and noise, tint >= 0"));
        }
        if self.classes == 0 || self.classes > GLYPH_COUNT || self.count == 0 {
            return Err(LabError::invalid(format!(
                "synthetic set needs 1..={GLYPH_COUNT} classes and a positive count"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let per = self.channels * self.size * self.size;
        let mut images = Vec::with_capacity(per * self.count);
        let mut labels = Vec::with_capacity(self.count);
        for i in 0..self.count {
            let y = i % self.classes;
            images.extend(self.render(y, &mut rng));
            labels.push(y);
        }
        let provenance = format!(
            "synthetic:size={},channels={},classes={},count={},seed={},noise={},tint={},glyphs={}",
            self.size,
            self.channels,
            self.classes,
            self.count,
            self.seed,
            self.noise,
            self.tint,
            self.glyph_reliability
        );
        DatasetHandle::new(
            [self.channels, self.size, self.size],
            self.classes,
            images,
            labels,
            Role::Natural,
            provenance,
        )
    }

    fn render(&self, class: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
        let s = self.size;
        let c = self.channels;
        let glyph = if self.classes > 1 && !rng.gen_bool(self.glyph_reliability) {
            let other = rng.gen_range(0..self.classes - 1);
            if other >= class {
                other + 1
            } else {
                other
            }
        } else {
            class
        };
        let cx = rng.gen_range(-0.12..0.12);
        let cy = rng.gen_range(-0.12..0.12);
        let scale = rng.gen_range(0.8..1.0);
        let theta: f64 = rng.gen_range(-8.0f64..8.0).to_radians();
        let (sin, cos) = theta.sin_cos();
        let bg = rng.gen_range(0.1..0.35);
        let fg = rng.gen_range(0.6..0.95);
        // pixel width in glyph coordinates
        let px = 2.0 / (s as f64 * scale);
        let tint = if c == 3 { class_tint(class, self.tint) } else { [0.0; 3] };

        let mut out = vec![0.0f32; c * s * s];
        for r in 0..s {
            for col in 0..s {
                let x = (2.0 * col as f64 + 1.0) / s as f64 - 1.0 - cx;
                let y = (2.0 * r as f64 + 1.0) / s as f64 - 1.0 - cy;
                let u = (cos * x + sin * y) / scale;
                let v = (-sin * x + cos * y) / scale;
                let cover = (0.5 - glyph_distance(glyph, u, v) / px).clamp(0.0, 1.0);
                for (ch, t) in tint.iter().enumerate().take(c) {
                    let noise = self.noise * gaussian(rng);
                    let val = bg + (fg - bg) * cover + t + noise;
                    out[(ch * s + r) * s + col] = val.clamp(0.0, 1.0) as f32;
                }
            }
        }
        out
    }
}

/// RGB offset of the class tint: direction `2πk/10` in the plane
/// orthogonal to grey.
fn class_tint(class: usize, magnitude: f64) -> [f64; 3] {
    let a = 2.0 * std::f64::consts::PI * class as f64 / GLYPH_COUNT as f64;
    let e1 = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0];
    let e2 = [1.0 / 6f64.sqrt(), 1.0 / 6f64.sqrt(), -2.0 / 6f64.sqrt()];
    std::array::from_fn(|i| magnitude * (a.cos() * e1[i] + a.sin() * e2[i]))
}

fn bar(u: f64, v: f64, half_len: f64, half_width: f64) -> f64 {
    (u.abs() - half_len).max(v.abs() - half_width)
}

/// Approximate signed distance in glyph units; negative inside.
fn glyph_distance(class: usize, u: f64, v: f64) -> f64 {
    let r = u.hypot(v);
    let cheb = u.abs().max(v.abs());
    match class {
        0 => r - 0.6,
        1 => (r - 0.55).abs() - 0.15,
        2 => cheb - 0.55,
        3 => (cheb - 0.55).abs() - 0.13,
        4 => bar(u, v, 0.8, 0.2),
        5 => bar(v, u, 0.8, 0.2),
        6 => bar(u, v, 0.75, 0.15).min(bar(v, u, 0.75, 0.15)),
        7 => {
            let a = (u + v) * std::f64::consts::FRAC_1_SQRT_2;
            let b = (u - v) * std::f64::consts::FRAC_1_SQRT_2;
            bar(a, b, 0.8, 0.15).min(bar(b, a, 0.8, 0.15))
        }
        8 => (v - 0.55).max((u.abs() - (v + 0.6) * 0.6) / 1.17),
        _ => ((u - 0.45).hypot(v)).min((u + 0.45).hypot(v)) - 0.28,
    }
}
