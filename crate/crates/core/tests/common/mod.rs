#![allow(dead_code)]

use std::path::{Path, PathBuf};

use logoscope::corpus::{write_manifest, Category, ColorBucket, LogoRecord, ShapeBucket};
use logoscope::ImageBuffer;

pub const SIZE: u32 = 64;

/// Solid fills and the bucket each should land in.
pub const COLORS: [([u8; 3], ColorBucket); 8] = [
    ([220, 20, 30], ColorBucket::Red),
    ([255, 140, 0], ColorBucket::Yellow),
    ([240, 220, 20], ColorBucket::Yellow),
    ([20, 170, 40], ColorBucket::Green),
    ([0, 190, 210], ColorBucket::Blue),
    ([20, 40, 200], ColorBucket::Blue),
    ([10, 10, 10], ColorBucket::BlackWhite),
    ([128, 128, 128], ColorBucket::Silver),
];

fn inside(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut hit = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0] {
            hit = !hit;
        }
        j = i;
    }
    hit
}

fn ring(c: [f64; 2], radii: &[f64], rot_deg: f64) -> Vec<[f64; 2]> {
    let n = radii.len();
    (0..n)
        .map(|i| {
            let t = (rot_deg + 360.0 * i as f64 / n as f64).to_radians();
            [c[0] + radii[i] * t.cos(), c[1] + radii[i] * t.sin()]
        })
        .collect()
}

/// Silhouette of `shape`, variant `v` in 0..10, as an inside test.
fn silhouette(shape: ShapeBucket, v: usize) -> Box<dyn Fn(f64, f64) -> bool> {
    let vf = v as f64;
    let c = [32.0 + (v % 3) as f64 - 1.0, 32.0 + (v % 2) as f64];
    match shape {
        ShapeBucket::Circle => {
            let r = 16.0 + vf;
            Box::new(move |x, y| (x - c[0]).powi(2) + (y - c[1]).powi(2) <= r * r)
        }
        ShapeBucket::Square => {
            let h = 11.0 + 0.7 * vf;
            let w = h * (1.0 + 0.03 * vf);
            let t = (4.0 * vf).to_radians();
            let poly: Vec<[f64; 2]> = [[-w, -h], [w, -h], [w, h], [-w, h]]
                .iter()
                .map(|p| [c[0] + p[0] * t.cos() - p[1] * t.sin(), c[1] + p[0] * t.sin() + p[1] * t.cos()])
                .collect();
            Box::new(move |x, y| inside(&poly, x, y))
        }
        ShapeBucket::Triangle => {
            let r = 22.0 + vf;
            let rot = 90.0 + 12.0 * vf;
            let poly = ring(c, &[r, r, r], rot);
            Box::new(move |x, y| inside(&poly, x, y))
        }
        ShapeBucket::Irregular => {
            let points = 5 + v % 4;
            let radii: Vec<f64> = (0..2 * points).map(|i| if i % 2 == 0 { 27.0 } else { 12.0 }).collect();
            let poly = ring(c, &radii, 7.0 * vf);
            Box::new(move |x, y| inside(&poly, x, y))
        }
    }
}

/// RGBA render on a transparent background. `tag` is written into the RGB of
/// a transparent corner pixel so otherwise identical renders stay distinct.
pub fn render(shape: ShapeBucket, rgb: [u8; 3], v: usize, tag: u32) -> ImageBuffer {
    let f = silhouette(shape, v);
    let mut px = vec![0u8; (SIZE * SIZE * 4) as usize];
    for y in 0..SIZE {
        for x in 0..SIZE {
            if f(x as f64 + 0.5, y as f64 + 0.5) {
                let o = ((y * SIZE + x) * 4) as usize;
                px[o..o + 3].copy_from_slice(&rgb);
                px[o + 3] = 255;
            }
        }
    }
    px[..3].copy_from_slice(&tag.to_le_bytes()[..3]);
    ImageBuffer::new(SIZE, SIZE, 4, px).unwrap()
}

/// The 40 shape fixtures with their expected buckets.
pub fn shape_fixtures() -> Vec<(ImageBuffer, ShapeBucket, ColorBucket)> {
    let mut out = Vec::new();
    for (si, shape) in ShapeBucket::ALL.into_iter().enumerate() {
        for v in 0..10 {
            let (rgb, color) = COLORS[(si * 10 + v) % COLORS.len()];
            out.push((render(shape, rgb, v, 0), shape, color));
        }
    }
    out
}

pub struct CorpusSpec {
    pub symbols: usize,
    pub hybrids: usize,
    pub texts: usize,
    /// Write buckets into the manifest instead of leaving them to curation.
    pub prefill_buckets: bool,
}

/// Write PNGs and a manifest. Symbol logos cycle through shapes and colors.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec) -> PathBuf {
    let img_dir = dir.join("images");
    std::fs::create_dir_all(&img_dir).unwrap();
    let mut records = Vec::new();
    let total = spec.symbols + spec.hybrids + spec.texts;
    for i in 0..total {
        let shape = ShapeBucket::ALL[i % 4];
        let (rgb, color) = COLORS[(i / 4) % COLORS.len()];
        let (id, category, gt) = if i < spec.symbols {
            (format!("sym{i:05}"), Category::PureSymbol, None)
        } else if i < spec.symbols + spec.hybrids {
            (format!("hyb{i:05}"), Category::Hybrid, Some(format!("Brand{i}")))
        } else {
            (format!("txt{i:05}"), Category::PureText, Some(format!("Word{i}")))
        };
        let img = render(shape, rgb, i % 10, i as u32 + 1);
        let rel = PathBuf::from("images").join(format!("{id}.png"));
        img.save_png(dir.join(&rel)).unwrap();
        let prefill = spec.prefill_buckets && category == Category::PureSymbol;
        records.push(LogoRecord {
            id,
            image_path: rel,
            category,
            hard60: category == Category::Hybrid && i % 2 == 0,
            gt_text: gt,
            color_bucket: prefill.then_some(color),
            shape_bucket: prefill.then_some(shape),
            flags: vec![],
        });
    }
    let manifest = dir.join("manifest.jsonl");
    write_manifest(&manifest, &records).unwrap();
    manifest
}
