//! Global-silhouette bucketing: binarize, take the largest outer contour,
//! test for an ellipse, then count Douglas-Peucker vertices.

use super::contour::{largest, trace_contours, Contour};
use super::simplify::simplify_closed_indices;
use super::ShapeBucket;
use crate::error::Result;
use crate::image::ImageBuffer;

pub use super::contour::BinaryMask;

pub const ELLIPSE_FILL_MIN: f64 = 0.9;
pub const ELLIPSE_ASPECT_MAX: f64 = 1.5;
pub const DP_PERIMETER_FRACTION: f64 = 0.02;
pub const RIGHT_ANGLE_TOLERANCE_DEG: f64 = 15.0;
const MIN_FOREGROUND_FRACTION: f64 = 0.10;

/// Otsu threshold on an 8-bit histogram. Class 0 is `value <= threshold`.
pub fn otsu_threshold(gray: &[u8]) -> u8 {
    let mut hist = [0u64; 256];
    for &g in gray {
        hist[g as usize] += 1;
    }
    let total = gray.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    let mut best_t = 0u8;
    let mut best_var = -1.0;
    for t in 0..256usize {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 {
            continue;
        }
        if w1 == 0.0 {
            if best_var < 0.0 {
                best_t = t as u8;
            }
            break;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    best_t
}

/// Otsu binarization of the grayscale crop. Foreground is the darker class
/// unless it covers less than 10% of the image, in which case the classes swap.
pub fn binarize(img: &ImageBuffer) -> BinaryMask {
    let gray = img.to_gray();
    let t = otsu_threshold(&gray);
    let dark = gray.iter().filter(|&&g| g <= t).count();
    let flip = (dark as f64) < MIN_FOREGROUND_FRACTION * gray.len() as f64;
    BinaryMask {
        width: img.width() as usize,
        height: img.height() as usize,
        data: gray.iter().map(|&g| (g <= t) != flip).collect(),
    }
}

/// Moment ellipse of the region enclosed by a contour, scaled so the contour
/// fits inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseFit {
    pub contour_area: f64,
    pub ellipse_area: f64,
    pub aspect: f64,
}

impl EllipseFit {
    pub fn fill_ratio(&self) -> f64 {
        if self.ellipse_area > 0.0 {
            self.contour_area / self.ellipse_area
        } else {
            0.0
        }
    }
}

pub fn fit_ellipse(contour: &Contour) -> Option<EllipseFit> {
    let pts = contour.as_f64();
    let n = pts.len();
    if n < 3 {
        return None;
    }
    // Polygon moments via Green's theorem (signed; the sign cancels below).
    let (mut a2, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let [x0, y0] = pts[i];
        let [x1, y1] = pts[(i + 1) % n];
        let c = x0 * y1 - x1 * y0;
        a2 += c;
        sx += (x0 + x1) * c;
        sy += (y0 + y1) * c;
        sxx += (x0 * x0 + x0 * x1 + x1 * x1) * c;
        syy += (y0 * y0 + y0 * y1 + y1 * y1) * c;
        sxy += (x0 * y1 + 2.0 * x0 * y0 + 2.0 * x1 * y1 + x1 * y0) * c;
    }
    let area = a2 / 2.0;
    if area.abs() < 1e-9 {
        return None;
    }
    let cx = sx / (6.0 * area);
    let cy = sy / (6.0 * area);
    let cxx = sxx / (12.0 * area) - cx * cx;
    let cyy = syy / (12.0 * area) - cy * cy;
    let cxy = sxy / (24.0 * area) - cx * cy;

    let tr = cxx + cyy;
    let disc = ((cxx - cyy).powi(2) / 4.0 + cxy * cxy).sqrt();
    let l1 = tr / 2.0 + disc;
    let l2 = tr / 2.0 - disc;
    if l2 <= 0.0 {
        return None;
    }
    // Eigenvector of the major axis.
    let theta = 0.5 * (2.0 * cxy).atan2(cxx - cyy);
    let (ct, st) = (theta.cos(), theta.sin());
    // A uniform ellipse with semi-axes (a, b) has variances a²/4 and b²/4.
    let a = 2.0 * l1.sqrt();
    let b = 2.0 * l2.sqrt();
    let mut q_max: f64 = 0.0;
    for &[x, y] in &pts {
        let dx = x - cx;
        let dy = y - cy;
        let u = dx * ct + dy * st;
        let v = -dx * st + dy * ct;
        q_max = q_max.max((u / a).powi(2) + (v / b).powi(2));
    }
    Some(EllipseFit {
        contour_area: area.abs(),
        ellipse_area: std::f64::consts::PI * a * b * q_max,
        aspect: (l1 / l2).sqrt(),
    })
}

/// Interior angles, in degrees, of a simple polygon.
pub fn interior_angles(poly: &[[f64; 2]]) -> Vec<f64> {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let p = poly[(i + n - 1) % n];
            let q = poly[i];
            let r = poly[(i + 1) % n];
            let (ux, uy) = (p[0] - q[0], p[1] - q[1]);
            let (vx, vy) = (r[0] - q[0], r[1] - q[1]);
            let cos = (ux * vx + uy * vy) / ((ux * ux + uy * uy).sqrt() * (vx * vx + vy * vy).sqrt());
            cos.clamp(-1.0, 1.0).acos().to_degrees()
        })
        .collect()
}

/// Measurements behind a shape decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeEvidence {
    pub bucket: ShapeBucket,
    pub ellipse: Option<EllipseFit>,
    pub vertices: Vec<[f64; 2]>,
}

pub fn shape_evidence(mask: &BinaryMask) -> Result<ShapeEvidence> {
    let contours = trace_contours(mask)?;
    let contour = &contours[largest(&contours).expect("non-empty")];
    let ellipse = fit_ellipse(contour);
    if let Some(e) = ellipse {
        if e.fill_ratio() >= ELLIPSE_FILL_MIN && e.aspect < ELLIPSE_ASPECT_MAX {
            return Ok(ShapeEvidence {
                bucket: ShapeBucket::Circle,
                ellipse,
                vertices: vec![],
            });
        }
    }
    let ring = contour.as_f64();
    let eps = DP_PERIMETER_FRACTION * contour.perimeter();
    let vertices: Vec<[f64; 2]> = simplify_closed_indices(&ring, eps)
        .into_iter()
        .map(|i| ring[i])
        .collect();
    let bucket = match vertices.len() {
        3 => ShapeBucket::Triangle,
        4 if interior_angles(&vertices)
            .iter()
            .all(|a| (a - 90.0).abs() <= RIGHT_ANGLE_TOLERANCE_DEG) =>
        {
            ShapeBucket::Square
        }
        _ => ShapeBucket::Irregular,
    };
    Ok(ShapeEvidence {
        bucket,
        ellipse,
        vertices,
    })
}

/// Shape bucket of an already binarized mask.
pub fn classify_shape_mask(mask: &BinaryMask) -> Result<ShapeBucket> {
    shape_evidence(mask).map(|e| e.bucket)
}

/// Shape bucket of a logo image.
pub fn classify_shape(img: &ImageBuffer) -> Result<ShapeBucket> {
    classify_shape_mask(&binarize(img))
}
