//! Scene data model and the JSON + RLE interchange format.
//!
//! One scene per file. Masks are run-length encoded in row-major order as
//! alternating zero/one runs, always starting with a (possibly empty)
//! zero-run, so every mask has exactly one canonical encoding.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// Only format version this crate reads and writes.
pub const FORMAT_VERSION: u32 = 1;

/// Numeric value of [`FocusLevel::InFocus`] in contrast arithmetic.
pub const IN_FOCUS_VALUE: f64 = 1.0;
/// Numeric value of [`FocusLevel::OutOfFocus`] in contrast arithmetic.
pub const OUT_OF_FOCUS_VALUE: f64 = 0.0;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("mask has no on-pixels")]
    EmptyMask,
    #[error("invalid mask dimensions {width}x{height}")]
    InvalidDimensions { width: u32, height: u32 },
    #[error("raster has {actual} pixels, expected {expected}")]
    RasterSize { expected: usize, actual: usize },
    #[error("runs sum to {actual}, expected width*height = {expected}")]
    RleLengthMismatch { expected: u64, actual: u64 },
    #[error("runs {index} and {} are both zero", index + 1)]
    ConsecutiveZeroRuns { index: usize },
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("version: unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("width/height: invalid scene dimensions {width}x{height}")]
    InvalidDimensions { width: u32, height: u32 },
    #[error("{field}: runs sum to {actual}, expected width*height = {expected}")]
    RleLengthMismatch {
        field: String,
        expected: u64,
        actual: u64,
    },
    #[error("{field}: {source}")]
    InvalidMask {
        field: String,
        #[source]
        source: MaskError,
    },
    #[error("{field}: stored bbox {stored:?} differs from mask bbox {actual:?}")]
    BboxMismatch {
        field: String,
        stored: [u32; 4],
        actual: [u32; 4],
    },
    #[error("{field}: mask is {mask_width}x{mask_height}, scene is {width}x{height}")]
    MaskDimensionMismatch {
        field: String,
        mask_width: u32,
        mask_height: u32,
        width: u32,
        height: u32,
    },
    #[error("instances: duplicate instance id {id}")]
    DuplicateId { id: u64 },
    #[error("{field}: score {value} outside [0, 1]")]
    ScoreOutOfRange { field: String, value: f64 },
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BBox {
    pub fn to_array(self) -> [u32; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min + 1
    }

    /// Grows the box by `margin` on every side, clipped to a `width` x `height` raster.
    pub fn expand(&self, margin: u32, width: u32, height: u32) -> BBox {
        BBox {
            x_min: self.x_min.saturating_sub(margin),
            y_min: self.y_min.saturating_sub(margin),
            x_max: self.x_max.saturating_add(margin).min(width - 1),
            y_max: self.y_max.saturating_add(margin).min(height - 1),
        }
    }

    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let b = BBox {
            x_min: self.x_min.max(other.x_min),
            y_min: self.y_min.max(other.y_min),
            x_max: self.x_max.min(other.x_max),
            y_max: self.y_max.min(other.y_max),
        };
        (b.x_min <= b.x_max && b.y_min <= b.y_max).then_some(b)
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// A non-empty binary raster. Pixels are stored densely in row-major order;
/// the bounding box and area are cached at construction.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
    bbox: BBox,
    area: usize,
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("bbox", &self.bbox)
            .field("area", &self.area)
            .finish()
    }
}

impl BinaryMask {
    /// Builds a mask from a row-major raster. Fails if the raster is empty.
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::InvalidDimensions { width, height });
        }
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(MaskError::RasterSize {
                expected,
                actual: bits.len(),
            });
        }
        let mut area = 0usize;
        let mut bbox = BBox {
            x_min: u32::MAX,
            y_min: u32::MAX,
            x_max: 0,
            y_max: 0,
        };
        for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            let x = (i % width as usize) as u32;
            let y = (i / width as usize) as u32;
            area += 1;
            bbox.x_min = bbox.x_min.min(x);
            bbox.y_min = bbox.y_min.min(y);
            bbox.x_max = bbox.x_max.max(x);
            bbox.y_max = bbox.y_max.max(y);
        }
        if area == 0 {
            return Err(MaskError::EmptyMask);
        }
        Ok(Self {
            width,
            height,
            bits,
            bbox,
            area,
        })
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> bool,
    ) -> Result<Self, MaskError> {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits)
    }

    /// Builds a mask from `(x, y)` pixel coordinates; out-of-range pixels are ignored.
    pub fn from_pixels(
        width: u32,
        height: u32,
        pixels: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self, MaskError> {
        let mut bits = vec![false; width as usize * height as usize];
        for (x, y) in pixels {
            if x < width && y < height {
                bits[y as usize * width as usize + x as usize] = true;
            }
        }
        Self::new(width, height, bits)
    }

    /// Decodes canonical row-major runs (zero-run first).
    pub fn from_runs(width: u32, height: u32, runs: &[u64]) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::InvalidDimensions { width, height });
        }
        let expected = width as u64 * height as u64;
        let mut total = 0u64;
        for &r in runs {
            total = total.saturating_add(r);
        }
        if total != expected {
            return Err(MaskError::RleLengthMismatch {
                expected,
                actual: total,
            });
        }
        if let Some(index) = runs
            .windows(2)
            .enumerate()
            .skip(1)
            .find(|(_, w)| w[0] == 0 && w[1] == 0)
            .map(|(i, _)| i)
        {
            return Err(MaskError::ConsecutiveZeroRuns { index });
        }
        let mut bits = Vec::with_capacity(expected as usize);
        let mut value = false;
        for &r in runs {
            bits.extend(std::iter::repeat_n(value, r as usize));
            value = !value;
        }
        Self::new(width, height, bits)
    }

    /// Canonical run-length encoding: alternating zero/one runs starting with zeros.
    pub fn runs(&self) -> Vec<u64> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut count = 0u64;
        for &b in &self.bits {
            if b != current {
                runs.push(count);
                count = 0;
                current = b;
            }
            count += 1;
        }
        runs.push(count);
        runs
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    /// Number of on-pixels.
    pub fn area(&self) -> usize {
        self.area
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    /// Like [`get`](Self::get) but treats out-of-range coordinates as off.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as u64) < self.width as u64
            && (y as u64) < self.height as u64
            && self.get(x as u32, y as u32)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.bits
    }

    /// On-pixels in row-major order, scanning only the bounding box.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let b = self.bbox;
        (b.y_min..=b.y_max)
            .flat_map(move |y| (b.x_min..=b.x_max).map(move |x| (x, y)))
            .filter(move |&(x, y)| self.get(x, y))
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.pixels().all(|(x, y)| other.get(x, y))
    }
}

/// Encodes a dense row-major raster. All-zero rasters are rejected.
pub fn encode_rle(width: u32, height: u32, raster: &[bool]) -> Result<BinaryMask, MaskError> {
    BinaryMask::new(width, height, raster.to_vec())
}

/// Binary focus level of a crystal instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FocusLevel {
    #[serde(rename = "in")]
    InFocus,
    #[serde(rename = "out")]
    OutOfFocus,
}

impl FocusLevel {
    pub fn value(self) -> f64 {
        match self {
            FocusLevel::InFocus => IN_FOCUS_VALUE,
            FocusLevel::OutOfFocus => OUT_OF_FOCUS_VALUE,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            FocusLevel::InFocus => FocusLevel::OutOfFocus,
            FocusLevel::OutOfFocus => FocusLevel::InFocus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AggloClass {
    #[serde(rename = "non")]
    NonAgglomerated,
    #[serde(rename = "agg")]
    Agglomerated,
}

impl AggloClass {
    pub const ALL: [AggloClass; 2] = [AggloClass::NonAgglomerated, AggloClass::Agglomerated];

    pub fn as_str(self) -> &'static str {
        match self {
            AggloClass::NonAgglomerated => "non",
            AggloClass::Agglomerated => "agg",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            AggloClass::NonAgglomerated => AggloClass::Agglomerated,
            AggloClass::Agglomerated => AggloClass::NonAgglomerated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "gt")]
    GroundTruth,
    #[serde(rename = "pred")]
    Prediction,
}

/// One crystal instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub id: u64,
    pub mask: BinaryMask,
    pub focus: Option<FocusLevel>,
    pub agglo: Option<AggloClass>,
    pub score: Option<f64>,
}

impl InstanceRecord {
    pub fn new(id: u64, mask: BinaryMask) -> Self {
        Self {
            id,
            mask,
            focus: None,
            agglo: None,
            score: None,
        }
    }

    pub fn with_focus(mut self, focus: FocusLevel) -> Self {
        self.focus = Some(focus);
        self
    }

    pub fn with_agglo(mut self, agglo: AggloClass) -> Self {
        self.agglo = Some(agglo);
        self
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    /// Tight bounding box of the mask.
    pub fn bbox(&self) -> BBox {
        self.mask.bbox()
    }
}

/// An image (or just its dimensions) and its crystal instances.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_path: Option<String>,
    pub role: Role,
    width: u32,
    height: u32,
    instances: Vec<InstanceRecord>,
}

impl Scene {
    pub fn new(
        width: u32,
        height: u32,
        role: Role,
        instances: Vec<InstanceRecord>,
    ) -> Result<Self, SceneError> {
        let scene = Self {
            image_path: None,
            role,
            width,
            height,
            instances,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn with_image_path(mut self, path: impl Into<String>) -> Self {
        self.image_path = Some(path.into());
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn instances(&self) -> &[InstanceRecord] {
        &self.instances
    }

    /// Label fields may be edited in place; [`Scene::validate`] re-checks the rest.
    pub fn instances_mut(&mut self) -> &mut [InstanceRecord] {
        &mut self.instances
    }

    pub fn into_instances(self) -> Vec<InstanceRecord> {
        self.instances
    }

    pub fn instance(&self, id: u64) -> Option<&InstanceRecord> {
        self.instances.iter().find(|i| i.id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    /// Replaces the instance list, keeping dimensions, role and image path.
    pub fn with_instances(&self, instances: Vec<InstanceRecord>) -> Result<Self, SceneError> {
        let scene = Self {
            image_path: self.image_path.clone(),
            role: self.role,
            width: self.width,
            height: self.height,
            instances,
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Checks every scene and instance invariant.
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.width == 0 || self.height == 0 {
            return Err(SceneError::InvalidDimensions {
                width: self.width,
                height: self.height,
            });
        }
        let mut seen = BTreeSet::new();
        for (i, inst) in self.instances.iter().enumerate() {
            if !seen.insert(inst.id) {
                return Err(SceneError::DuplicateId { id: inst.id });
            }
            if inst.mask.width() != self.width || inst.mask.height() != self.height {
                return Err(SceneError::MaskDimensionMismatch {
                    field: format!("instances[{i}].rle"),
                    mask_width: inst.mask.width(),
                    mask_height: inst.mask.height(),
                    width: self.width,
                    height: self.height,
                });
            }
            if let Some(score) = inst.score {
                if !(0.0..=1.0).contains(&score) {
                    return Err(SceneError::ScoreOutOfRange {
                        field: format!("instances[{i}].score"),
                        value: score,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    height: u32,
    #[serde(default)]
    image_path: Option<String>,
    instances: Vec<InstanceFile>,
    role: Role,
    version: u32,
    width: u32,
}

// Field order is alphabetical so serialized keys come out sorted.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    agglo: Option<AggloClass>,
    bbox: [u32; 4],
    focus: Option<FocusLevel>,
    id: u64,
    rle: Vec<u64>,
    #[serde(serialize_with = "serialize_score")]
    score: Option<f64>,
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn serialize_score<S: Serializer>(score: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match score {
        Some(v) => s.serialize_f64(round6(*v)),
        None => s.serialize_none(),
    }
}

/// Parses and validates a scene from JSON text.
pub fn parse_scene(text: &str) -> Result<Scene, SceneError> {
    let file: SceneFile = serde_json::from_str(text)?;
    if file.version != FORMAT_VERSION {
        return Err(SceneError::UnsupportedVersion(file.version));
    }
    if file.width == 0 || file.height == 0 {
        return Err(SceneError::InvalidDimensions {
            width: file.width,
            height: file.height,
        });
    }
    let mut instances = Vec::with_capacity(file.instances.len());
    for (i, inst) in file.instances.into_iter().enumerate() {
        let mask =
            BinaryMask::from_runs(file.width, file.height, &inst.rle).map_err(|e| match e {
                MaskError::RleLengthMismatch { expected, actual } => {
                    SceneError::RleLengthMismatch {
                        field: format!("instances[{i}].rle"),
                        expected,
                        actual,
                    }
                }
                other => SceneError::InvalidMask {
                    field: format!("instances[{i}].rle"),
                    source: other,
                },
            })?;
        let actual = mask.bbox().to_array();
        if actual != inst.bbox {
            return Err(SceneError::BboxMismatch {
                field: format!("instances[{i}].bbox"),
                stored: inst.bbox,
                actual,
            });
        }
        if let Some(score) = inst.score {
            if !score.is_finite() || !(0.0..=1.0).contains(&score) {
                return Err(SceneError::ScoreOutOfRange {
                    field: format!("instances[{i}].score"),
                    value: score,
                });
            }
        }
        instances.push(InstanceRecord {
            id: inst.id,
            mask,
            focus: inst.focus,
            agglo: inst.agglo,
            score: inst.score,
        });
    }
    let scene = Scene {
        image_path: file.image_path,
        role: file.role,
        width: file.width,
        height: file.height,
        instances,
    };
    scene.validate()?;
    Ok(scene)
}

/// Serializes a scene to its canonical single-line JSON form (with trailing newline).
pub fn scene_to_json(scene: &Scene) -> Result<String, SceneError> {
    scene.validate()?;
    let file = SceneFile {
        height: scene.height,
        image_path: scene.image_path.clone(),
        instances: scene
            .instances
            .iter()
            .map(|inst| InstanceFile {
                agglo: inst.agglo,
                bbox: inst.bbox().to_array(),
                focus: inst.focus,
                id: inst.id,
                rle: inst.mask.runs(),
                score: inst.score,
            })
            .collect(),
        role: scene.role,
        version: FORMAT_VERSION,
        width: scene.width,
    };
    let mut text = serde_json::to_string(&file)?;
    text.push('\n');
    Ok(text)
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scene(&text)
}

/// Writes a scene; invariant violations are rejected before anything is written.
pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<(), SceneError> {
    let path = path.as_ref();
    let text = scene_to_json(scene)?;
    fs::write(path, text).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })
}
