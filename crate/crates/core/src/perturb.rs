//! The nine logo perturbations, each a pure function of (spec, seed, image).

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::seed::derive_seed;

pub const MAX_BLUR_KERNEL: u32 = 7;
pub const MAX_HOLES: u32 = 3;
pub const MAX_HOLE_FRACTION: f64 = 0.30;
pub const SHARPEN_ALPHA: (f64, f64) = (0.2, 0.5);
pub const SHARPEN_LIGHTNESS: (f64, f64) = (0.5, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Blur,
    FlipH,
    FlipV,
    InvertColor,
    Occlusion,
    Rotate180,
    Rotate90,
    RotateRandom,
    Sharpen,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 9] = [
        PerturbationKind::Blur,
        PerturbationKind::FlipH,
        PerturbationKind::FlipV,
        PerturbationKind::InvertColor,
        PerturbationKind::Occlusion,
        PerturbationKind::Rotate180,
        PerturbationKind::Rotate90,
        PerturbationKind::RotateRandom,
        PerturbationKind::Sharpen,
    ];

    /// Stable machine name, also used as the output sub-directory.
    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::Blur => "blur",
            PerturbationKind::FlipH => "flip_h",
            PerturbationKind::FlipV => "flip_v",
            PerturbationKind::InvertColor => "invert_color",
            PerturbationKind::Occlusion => "occlusion",
            PerturbationKind::Rotate180 => "rotate180",
            PerturbationKind::Rotate90 => "rotate90",
            PerturbationKind::RotateRandom => "rotate_random",
            PerturbationKind::Sharpen => "sharpen",
        }
    }

    /// Column header used in reports.
    pub fn title(self) -> &'static str {
        match self {
            PerturbationKind::Blur => "Blur",
            PerturbationKind::FlipH => "Flip-H",
            PerturbationKind::FlipV => "Flip-V",
            PerturbationKind::InvertColor => "Invert-C",
            PerturbationKind::Occlusion => "Occlusion",
            PerturbationKind::Rotate180 => "Rot-180",
            PerturbationKind::Rotate90 => "Rot-90",
            PerturbationKind::RotateRandom => "Rot-Rand",
            PerturbationKind::Sharpen => "Sharpen",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PerturbationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// Angle range used by the random rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationProfile {
    /// Uniform in (0°, 360°).
    #[default]
    FullCircle,
    /// Uniform in [−45°, +45°].
    Narrow,
}

impl RotationProfile {
    pub fn range(self) -> (f64, f64) {
        match self {
            RotationProfile::FullCircle => (0.0, 360.0),
            RotationProfile::Narrow => (-45.0, 45.0),
        }
    }
}

/// A perturbation together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    Blur { kernel: u32, sigma: f64 },
    FlipH,
    FlipV,
    InvertColor,
    Occlusion { max_holes: u32, min_fraction: f64, max_fraction: f64 },
    Rotate180,
    Rotate90,
    RotateRandom { min_deg: f64, max_deg: f64 },
    Sharpen { alpha: (f64, f64), lightness: (f64, f64) },
}

impl Perturbation {
    pub fn kind(&self) -> PerturbationKind {
        match self {
            Perturbation::Blur { .. } => PerturbationKind::Blur,
            Perturbation::FlipH => PerturbationKind::FlipH,
            Perturbation::FlipV => PerturbationKind::FlipV,
            Perturbation::InvertColor => PerturbationKind::InvertColor,
            Perturbation::Occlusion { .. } => PerturbationKind::Occlusion,
            Perturbation::Rotate180 => PerturbationKind::Rotate180,
            Perturbation::Rotate90 => PerturbationKind::Rotate90,
            Perturbation::RotateRandom { .. } => PerturbationKind::RotateRandom,
            Perturbation::Sharpen { .. } => PerturbationKind::Sharpen,
        }
    }

    /// Default single-severity parameters for a kind.
    pub fn standard(kind: PerturbationKind, rotation: RotationProfile) -> Self {
        match kind {
            PerturbationKind::Blur => Perturbation::Blur {
                kernel: MAX_BLUR_KERNEL,
                sigma: 3.0,
            },
            PerturbationKind::FlipH => Perturbation::FlipH,
            PerturbationKind::FlipV => Perturbation::FlipV,
            PerturbationKind::InvertColor => Perturbation::InvertColor,
            PerturbationKind::Occlusion => Perturbation::Occlusion {
                max_holes: MAX_HOLES,
                min_fraction: 0.10,
                max_fraction: MAX_HOLE_FRACTION,
            },
            PerturbationKind::Rotate180 => Perturbation::Rotate180,
            PerturbationKind::Rotate90 => Perturbation::Rotate90,
            PerturbationKind::RotateRandom => {
                let (min_deg, max_deg) = rotation.range();
                Perturbation::RotateRandom { min_deg, max_deg }
            }
            PerturbationKind::Sharpen => Perturbation::Sharpen {
                alpha: SHARPEN_ALPHA,
                lightness: SHARPEN_LIGHTNESS,
            },
        }
    }

    /// The nine standard perturbations in report order.
    pub fn suite(rotation: RotationProfile) -> Vec<Perturbation> {
        PerturbationKind::ALL
            .iter()
            .map(|&k| Perturbation::standard(k, rotation))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        match *self {
            Perturbation::Blur { kernel, sigma } => {
                if kernel % 2 == 0 || kernel > MAX_BLUR_KERNEL {
                    return bad(format!("blur kernel must be odd and <= {MAX_BLUR_KERNEL}, got {kernel}"));
                }
                if !(sigma.is_finite() && sigma > 0.0) {
                    return bad(format!("blur sigma must be positive, got {sigma}"));
                }
            }
            Perturbation::Occlusion {
                max_holes,
                min_fraction,
                max_fraction,
            } => {
                if !(1..=MAX_HOLES).contains(&max_holes) {
                    return bad(format!("hole count must be in 1..={MAX_HOLES}, got {max_holes}"));
                }
                if !(min_fraction > 0.0 && min_fraction <= max_fraction && max_fraction <= MAX_HOLE_FRACTION) {
                    return bad(format!(
                        "hole fractions must satisfy 0 < {min_fraction} <= {max_fraction} <= {MAX_HOLE_FRACTION}"
                    ));
                }
            }
            Perturbation::Sharpen { alpha, lightness } => {
                let within = |r: (f64, f64), lim: (f64, f64)| lim.0 <= r.0 && r.0 <= r.1 && r.1 <= lim.1;
                if !within(alpha, SHARPEN_ALPHA) {
                    return bad(format!("sharpen alpha range {alpha:?} outside {SHARPEN_ALPHA:?}"));
                }
                if !within(lightness, SHARPEN_LIGHTNESS) {
                    return bad(format!("sharpen lightness range {lightness:?} outside {SHARPEN_LIGHTNESS:?}"));
                }
            }
            Perturbation::RotateRandom { min_deg, max_deg } => {
                if !(min_deg.is_finite() && max_deg.is_finite() && min_deg < max_deg && max_deg - min_deg <= 360.0) {
                    return bad(format!("rotation range [{min_deg}, {max_deg}] is invalid"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub perturbation: Perturbation,
    pub seed: u64,
}

/// Axis-aligned hole in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hole {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

/// Parameters actually used for one image, for the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResolvedParams {
    Fixed,
    Blur { kernel: u32, sigma: f64 },
    Occlusion { holes: Vec<Hole> },
    RotateRandom { angle_deg: f64 },
    Sharpen { alpha: f64, lightness: f64 },
}

/// Per-item seed for `(global seed, logo, kind)`.
pub fn derive_item_seed(global_seed: u64, logo_id: &str, kind: PerturbationKind) -> u64 {
    derive_seed(global_seed, &format!("perturb/{}", kind.as_str()), logo_id)
}

pub fn apply_perturbation(spec: &PerturbationSpec, img: &ImageBuffer) -> Result<ImageBuffer> {
    apply_perturbation_logged(spec, img).map(|(out, _)| out)
}

/// Apply a perturbation and report the parameters it resolved to.
pub fn apply_perturbation_logged(
    spec: &PerturbationSpec,
    img: &ImageBuffer,
) -> Result<(ImageBuffer, ResolvedParams)> {
    spec.perturbation.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(match spec.perturbation {
        Perturbation::Blur { kernel, sigma } => (
            gaussian_blur(img, kernel, sigma),
            ResolvedParams::Blur { kernel, sigma },
        ),
        Perturbation::FlipH => (flip_h(img), ResolvedParams::Fixed),
        Perturbation::FlipV => (flip_v(img), ResolvedParams::Fixed),
        Perturbation::InvertColor => (invert(img), ResolvedParams::Fixed),
        Perturbation::Occlusion {
            max_holes,
            min_fraction,
            max_fraction,
        } => {
            let holes = sample_holes(img, max_holes, min_fraction, max_fraction, &mut rng);
            (occlude(img, &holes), ResolvedParams::Occlusion { holes })
        }
        Perturbation::Rotate180 => (rotate180(img), ResolvedParams::Fixed),
        Perturbation::Rotate90 => (rotate90_cw(img), ResolvedParams::Fixed),
        Perturbation::RotateRandom { min_deg, max_deg } => {
            let angle = loop {
                let a = rng.gen_range(min_deg..max_deg);
                // The full-circle profile is open at 0°.
                if !(min_deg == 0.0 && a == 0.0) {
                    break a;
                }
            };
            (rotate_bilinear(img, angle), ResolvedParams::RotateRandom { angle_deg: angle })
        }
        Perturbation::Sharpen { alpha, lightness } => {
            let a = sample_range(&mut rng, alpha);
            let l = sample_range(&mut rng, lightness);
            (sharpen(img, a, l), ResolvedParams::Sharpen { alpha: a, lightness: l })
        }
    })
}

fn sample_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

fn remap(img: &ImageBuffer, out_w: u32, out_h: u32, src: impl Fn(u32, u32) -> (u32, u32)) -> ImageBuffer {
    let c = img.channels() as usize;
    let mut px = Vec::with_capacity(out_w as usize * out_h as usize * c);
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = src(x, y);
            let o = img.offset(sx, sy);
            px.extend_from_slice(&img.pixels()[o..o + c]);
        }
    }
    ImageBuffer::new(out_w, out_h, img.channels(), px).expect("remap preserves sample count")
}

pub fn flip_h(img: &ImageBuffer) -> ImageBuffer {
    let w = img.width();
    remap(img, w, img.height(), |x, y| (w - 1 - x, y))
}

pub fn flip_v(img: &ImageBuffer) -> ImageBuffer {
    let h = img.height();
    remap(img, img.width(), h, |x, y| (x, h - 1 - y))
}

pub fn rotate180(img: &ImageBuffer) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    remap(img, w, h, |x, y| (w - 1 - x, h - 1 - y))
}

/// Quarter turn clockwise; width and height swap.
pub fn rotate90_cw(img: &ImageBuffer) -> ImageBuffer {
    let h = img.height();
    remap(img, h, img.width(), |x, y| (y, h - 1 - x))
}

/// RGB complement; alpha is left untouched.
pub fn invert(img: &ImageBuffer) -> ImageBuffer {
    let mut out = img.clone();
    let c = img.channels() as usize;
    for (i, s) in out.pixels_mut().iter_mut().enumerate() {
        if i % c < 3 {
            *s = 255 - *s;
        }
    }
    out
}

fn sample_holes(img: &ImageBuffer, max_holes: u32, min_f: f64, max_f: f64, rng: &mut ChaCha8Rng) -> Vec<Hole> {
    let (w, h) = (img.width(), img.height());
    let count = rng.gen_range(1..=max_holes);
    (0..count)
        .map(|_| {
            let fh = sample_range(rng, (min_f, max_f));
            let fw = sample_range(rng, (min_f, max_f));
            let height = ((fh * h as f64).floor() as u32).clamp(1, h);
            let width = ((fw * w as f64).floor() as u32).clamp(1, w);
            let y = rng.gen_range(0..=h - height);
            let x = rng.gen_range(0..=w - width);
            Hole { x, y, width, height }
        })
        .collect()
}

/// Zero every sample inside the holes; holes are clipped to the image.
pub fn occlude(img: &ImageBuffer, holes: &[Hole]) -> ImageBuffer {
    let mut out = img.clone();
    let c = img.channels() as usize;
    for hole in holes {
        let y1 = (hole.y + hole.height).min(img.height());
        let x1 = (hole.x + hole.width).min(img.width());
        for y in hole.y..y1 {
            for x in hole.x..x1 {
                let o = img.offset(x, y);
                out.pixels_mut()[o..o + c].fill(0);
            }
        }
    }
    out
}

/// Reflect-101 border index.
fn reflect(i: i64, n: i64) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}

fn convolve_separable(img: &ImageBuffer, kernel: &[f64]) -> ImageBuffer {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let c = img.channels() as usize;
    let r = (kernel.len() / 2) as i64;
    let src = img.pixels();
    let mut tmp = vec![0.0f64; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let sx = reflect(x + k as i64 - r, w);
                    acc += kv * src[(y as usize * w as usize + sx) * c + ch] as f64;
                }
                tmp[(y as usize * w as usize + x as usize) * c + ch] = acc;
            }
        }
    }
    let mut out = vec![0u8; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let sy = reflect(y + k as i64 - r, h);
                    acc += kv * tmp[(sy * w as usize + x as usize) * c + ch];
                }
                out[(y as usize * w as usize + x as usize) * c + ch] = acc.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    ImageBuffer::new(img.width(), img.height(), img.channels(), out).expect("same shape")
}

pub fn gaussian_blur(img: &ImageBuffer, kernel: u32, sigma: f64) -> ImageBuffer {
    let r = (kernel / 2) as i64;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    convolve_separable(img, &k)
}

/// 3×3 sharpen: `(1−α)·identity + α·[[-1,-1,-1],[-1,8+L,-1],[-1,-1,-1]]`,
/// applied to color channels only.
pub fn sharpen(img: &ImageBuffer, alpha: f64, lightness: f64) -> ImageBuffer {
    let mut kernel = [[-alpha; 3]; 3];
    kernel[1][1] = (1.0 - alpha) + alpha * (8.0 + lightness);
    let (w, h) = (img.width() as i64, img.height() as i64);
    let c = img.channels() as usize;
    let src = img.pixels();
    let mut out = src.to_vec();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c.min(3) {
                let mut acc = 0.0;
                for (ky, row) in kernel.iter().enumerate() {
                    let sy = reflect(y + ky as i64 - 1, h);
                    for (kx, &kv) in row.iter().enumerate() {
                        let sx = reflect(x + kx as i64 - 1, w);
                        acc += kv * src[(sy * w as usize + sx) * c + ch] as f64;
                    }
                }
                out[(y as usize * w as usize + x as usize) * c + ch] = acc.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    ImageBuffer::new(img.width(), img.height(), img.channels(), out).expect("same shape")
}

/// Counter-clockwise rotation by `angle_deg` with bilinear sampling. The canvas
/// grows to hold the whole rotated image; uncovered area is opaque black.
pub fn rotate_bilinear(img: &ImageBuffer, angle_deg: f64) -> ImageBuffer {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let t = angle_deg.to_radians();
    let (sin, cos) = t.sin_cos();
    let fit = |v: f64| ((v - 1e-9).ceil() as u32).max(1);
    let out_w = fit(w * cos.abs() + h * sin.abs());
    let out_h = fit(w * sin.abs() + h * cos.abs());
    let c = img.channels() as usize;
    let (icx, icy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let (ocx, ocy) = ((out_w as f64 - 1.0) / 2.0, (out_h as f64 - 1.0) / 2.0);
    let fill = |ch: usize| if ch == 3 { 255.0 } else { 0.0 };
    let sample = |x: i64, y: i64, ch: usize| -> f64 {
        if x < 0 || y < 0 || x >= img.width() as i64 || y >= img.height() as i64 {
            fill(ch)
        } else {
            img.pixels()[img.offset(x as u32, y as u32) + ch] as f64
        }
    };
    let mut px = Vec::with_capacity(out_w as usize * out_h as usize * c);
    for oy in 0..out_h {
        for ox in 0..out_w {
            let dx = ox as f64 - ocx;
            let dy = oy as f64 - ocy;
            // Screen y points down, so a CCW turn on screen inverts as below.
            let sx = cos * dx - sin * dy + icx;
            let sy = sin * dx + cos * dy + icy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as i64, y0 as i64);
            for ch in 0..c {
                let v = sample(x0, y0, ch) * (1.0 - fx) * (1.0 - fy)
                    + sample(x0 + 1, y0, ch) * fx * (1.0 - fy)
                    + sample(x0, y0 + 1, ch) * (1.0 - fx) * fy
                    + sample(x0 + 1, y0 + 1, ch) * fx * fy;
                px.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageBuffer::new(out_w, out_h, img.channels(), px).expect("computed shape")
}
