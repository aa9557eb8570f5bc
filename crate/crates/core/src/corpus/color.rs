//! HSV conversion and dominant-color bucketing.

use super::kmeans::kmeans;
use super::ColorBucket;
use crate::image::ImageBuffer;

/// Number of clusters used for dominant-color extraction.
pub const COLOR_CLUSTERS: usize = 3;
/// Fixed seed so that bucketing is a pure function of the image bytes.
pub const COLOR_SEED: u64 = 0x10c0_c01e;

const BLACK_VALUE: f64 = 0.2;
const GRAY_SATURATION: f64 = 0.2;
const CHROMA_FLOOR: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsvPixel {
    /// Degrees in [0, 360).
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

/// Standard hexcone RGB to HSV. Hue of achromatic colors is 0.
pub fn rgb_to_hsv(rgb: [u8; 3]) -> HsvPixel {
    let r = rgb[0] as f64 / 255.0;
    let g = rgb[1] as f64 / 255.0;
    let b = rgb[2] as f64 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    HsvPixel {
        h: normalize_hue(h),
        s,
        v,
    }
}

fn normalize_hue(h: f64) -> f64 {
    let h = h.rem_euclid(360.0);
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Position in the HSV cone; Euclidean distance here respects hue wrap-around.
fn cone(p: HsvPixel) -> [f64; 3] {
    let r = p.s * p.v;
    let t = p.h.to_radians();
    [r * t.cos(), r * t.sin(), p.v]
}

fn from_cone(c: [f64; 3]) -> HsvPixel {
    let v = c[2].clamp(0.0, 1.0);
    let chroma = (c[0] * c[0] + c[1] * c[1]).sqrt();
    let s = if v > 0.0 { (chroma / v).clamp(0.0, 1.0) } else { 0.0 };
    let h = if chroma > 0.0 {
        normalize_hue(c[1].atan2(c[0]).to_degrees())
    } else {
        0.0
    };
    HsvPixel { h, s, v }
}

/// Outcome of [`bucket_for`] on a single cluster color.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HueDecision {
    Bucket(ColorBucket),
    /// Chromatic color whose hue falls in no bin, or a red/green below the chroma floor.
    Defer { hue_gap: bool },
}

/// Deterministic bin rules for a single mean color.
pub fn bucket_for(p: HsvPixel) -> HueDecision {
    if p.v < BLACK_VALUE {
        return HueDecision::Bucket(ColorBucket::BlackWhite);
    }
    if p.s < GRAY_SATURATION {
        return HueDecision::Bucket(ColorBucket::Silver);
    }
    let vivid = p.s > CHROMA_FLOOR && p.v > CHROMA_FLOOR;
    let h = p.h;
    if (15.0..75.0).contains(&h) {
        HueDecision::Bucket(ColorBucket::Yellow)
    } else if (75.0..165.0).contains(&h) {
        if vivid {
            HueDecision::Bucket(ColorBucket::Green)
        } else {
            HueDecision::Defer { hue_gap: false }
        }
    } else if (165.0..255.0).contains(&h) {
        HueDecision::Bucket(ColorBucket::Blue)
    } else if h >= 345.0 || h < 15.0 {
        if vivid {
            HueDecision::Bucket(ColorBucket::Red)
        } else {
            HueDecision::Defer { hue_gap: false }
        }
    } else {
        HueDecision::Defer { hue_gap: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorAssignment {
    pub bucket: ColorBucket,
    /// The majority cluster's hue fell in the [255°, 345°) gap.
    pub unassigned_hue: bool,
    /// Mean color of the cluster that decided the bucket (or of the majority
    /// cluster when every cluster deferred).
    pub mean: HsvPixel,
    /// Rank of the deciding cluster by size, 0 = largest.
    pub cluster_rank: usize,
}

/// Dominant color bucket of an image: k-means (K=3) over the HSV pixels,
/// clusters visited largest first, deferring past clusters whose mean hue
/// has no bin.
pub fn dominant_color(img: &ImageBuffer) -> ColorAssignment {
    let mut points = Vec::with_capacity(img.width() as usize * img.height() as usize);
    for y in 0..img.height() {
        for x in 0..img.width() {
            if img.is_visible(x, y) {
                points.push(cone(rgb_to_hsv(img.rgb(x, y))));
            }
        }
    }
    if points.is_empty() {
        for y in 0..img.height() {
            for x in 0..img.width() {
                points.push(cone(rgb_to_hsv(img.rgb(x, y))));
            }
        }
    }
    let k = COLOR_CLUSTERS.min(points.len());
    let km = kmeans(&points, k, COLOR_SEED).expect("k never exceeds the point count");

    let mut order: Vec<usize> = (0..km.clusters.len())
        .filter(|&i| !km.clusters[i].members.is_empty())
        .collect();
    // Stable sort keeps the lowest index first among equal sizes.
    order.sort_by(|&a, &b| km.clusters[b].members.len().cmp(&km.clusters[a].members.len()));

    let means: Vec<HsvPixel> = order.iter().map(|&i| from_cone(km.clusters[i].centroid)).collect();
    let majority_gap = matches!(bucket_for(means[0]), HueDecision::Defer { hue_gap: true });
    for (rank, &mean) in means.iter().enumerate() {
        if let HueDecision::Bucket(bucket) = bucket_for(mean) {
            return ColorAssignment {
                bucket,
                unassigned_hue: majority_gap,
                mean,
                cluster_rank: rank,
            };
        }
    }
    ColorAssignment {
        bucket: ColorBucket::BlackWhite,
        unassigned_hue: true,
        mean: means[0],
        cluster_rank: 0,
    }
}
