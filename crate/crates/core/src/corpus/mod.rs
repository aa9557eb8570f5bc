//! Logo corpus: manifest records, taxonomy, and deterministic color/shape buckets.

pub mod color;
pub mod contour;
pub mod kmeans;
pub mod shape;
pub mod simplify;
pub mod stratify;

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use color::{dominant_color, rgb_to_hsv, ColorAssignment, HsvPixel};
pub use contour::{trace_contours, Contour};
pub use kmeans::{kmeans, Cluster};
pub use shape::{binarize, classify_shape, classify_shape_mask, BinaryMask};
pub use simplify::douglas_peucker;
pub use stratify::{stratify, StratifyBy};

/// Flag attached when no cluster hue maps onto a color bin.
pub const FLAG_UNASSIGNED_HUE: &str = "unassigned_hue";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    #[serde(alias = "PureSymbol")]
    PureSymbol,
    #[serde(alias = "Hybrid")]
    Hybrid,
    #[serde(alias = "PureText")]
    PureText,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::PureSymbol, Category::Hybrid, Category::PureText];

    pub fn label(self) -> &'static str {
        match self {
            Category::PureSymbol => "Pure Symbol",
            Category::Hybrid => "Hybrid",
            Category::PureText => "Pure Text",
        }
    }

    pub fn has_text(self) -> bool {
        !matches!(self, Category::PureSymbol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorBucket {
    #[serde(alias = "BlackWhite")]
    BlackWhite,
    #[serde(alias = "Silver")]
    Silver,
    #[serde(alias = "Red")]
    Red,
    #[serde(alias = "Yellow")]
    Yellow,
    #[serde(alias = "Blue")]
    Blue,
    #[serde(alias = "Green")]
    Green,
}

impl ColorBucket {
    pub const ALL: [ColorBucket; 6] = [
        ColorBucket::BlackWhite,
        ColorBucket::Silver,
        ColorBucket::Red,
        ColorBucket::Yellow,
        ColorBucket::Blue,
        ColorBucket::Green,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ColorBucket::BlackWhite => "Black/White",
            ColorBucket::Silver => "Silver",
            ColorBucket::Red => "Red",
            ColorBucket::Yellow => "Yellow",
            ColorBucket::Blue => "Blue",
            ColorBucket::Green => "Green",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeBucket {
    #[serde(alias = "Circle")]
    Circle,
    #[serde(alias = "Square")]
    Square,
    #[serde(alias = "Triangle")]
    Triangle,
    #[serde(alias = "Irregular")]
    Irregular,
}

impl ShapeBucket {
    pub const ALL: [ShapeBucket; 4] = [
        ShapeBucket::Circle,
        ShapeBucket::Square,
        ShapeBucket::Triangle,
        ShapeBucket::Irregular,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ShapeBucket::Circle => "Circle",
            ShapeBucket::Square => "Square",
            ShapeBucket::Triangle => "Triangle",
            ShapeBucket::Irregular => "Irregular",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl fmt::Display for ColorBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl fmt::Display for ShapeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One logo in the evaluation corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogoRecord {
    pub id: String,
    pub image_path: PathBuf,
    pub category: Category,
    #[serde(default)]
    pub hard60: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color_bucket: Option<ColorBucket>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape_bucket: Option<ShapeBucket>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl LogoRecord {
    /// Check the taxonomy invariants.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: &str| {
            Err(Error::RecordInvariant {
                id: self.id.clone(),
                message: message.to_string(),
            })
        };
        if self.id.trim().is_empty() {
            return fail("id must be non-empty");
        }
        match (self.category, self.gt_text.as_deref()) {
            (Category::PureSymbol, Some(_)) => return fail("pure-symbol logo must not carry gt_text"),
            (Category::Hybrid | Category::PureText, None) => {
                return fail("text-bearing logo requires gt_text")
            }
            (Category::Hybrid | Category::PureText, Some(t)) if t.trim().is_empty() => {
                return fail("gt_text must be non-empty")
            }
            _ => {}
        }
        if self.hard60 && self.category == Category::PureSymbol {
            return fail("hard60 logos contain text and cannot be pure-symbol");
        }
        Ok(())
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }
}

/// Parse a line-delimited manifest. Relative image paths are resolved against
/// the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<LogoRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut records = parse_manifest(std::io::BufReader::new(file), path)?;
    for r in &mut records {
        if r.image_path.is_relative() {
            r.image_path = base.join(&r.image_path);
        }
    }
    Ok(records)
}

/// Parse manifest lines from any reader; `origin` is used in error messages.
pub fn parse_manifest(reader: impl BufRead, origin: &Path) -> Result<Vec<LogoRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let record: LogoRecord = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        record.validate()?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[LogoRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Fill color and shape buckets from the record's image.
///
/// Existing bucket labels are kept; only missing ones are computed.
pub fn assign_buckets(record: &mut LogoRecord, image: &crate::image::ImageBuffer) -> Result<()> {
    if record.color_bucket.is_none() {
        let assignment = dominant_color(image);
        record.color_bucket = Some(assignment.bucket);
        if assignment.unassigned_hue && !record.has_flag(FLAG_UNASSIGNED_HUE) {
            record.flags.push(FLAG_UNASSIGNED_HUE.to_string());
        }
    }
    if record.shape_bucket.is_none() {
        record.shape_bucket = Some(classify_shape(image)?);
    }
    Ok(())
}
