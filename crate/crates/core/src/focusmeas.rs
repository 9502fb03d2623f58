//! Classical focus measures over masked image regions.
//!
//! Laplacian variance and Brenner are evaluated on mask (or contour) pixels;
//! Reblur works on the bounding-box crop since it needs a rectangular domain.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::gray::{convolve_separable, GrayImage};
use crate::interchange::{BBox, BinaryMask, Scene};
use crate::raster;

/// Length of the Reblur averaging kernel.
pub const REBLUR_KERNEL: usize = 9;

#[derive(Debug, Error, PartialEq)]
pub enum FocusError {
    #[error("focus region is empty")]
    EmptyRegion,
    #[error("region pixel ({x}, {y}) outside {width}x{height} image")]
    OutOfBounds {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("reblur region {width}x{height} smaller than 3x3")]
    RegionTooSmall { width: u32, height: u32 },
    #[error("scores mix measures {first} and {other}")]
    MixedMeasures { first: Measure, other: Measure },
    #[error("no scores to normalize")]
    NoScores,
    #[error("mask is {mask_width}x{mask_height}, image is {width}x{height}")]
    DimensionMismatch {
        mask_width: u32,
        mask_height: u32,
        width: u32,
        height: u32,
    },
    #[error("unknown focus measure `{0}`")]
    UnknownMeasure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    LaplacianMask,
    LaplacianContour,
    Brenner,
    Reblur,
}

impl Measure {
    pub const ALL: [Measure; 4] = [
        Measure::LaplacianMask,
        Measure::LaplacianContour,
        Measure::Brenner,
        Measure::Reblur,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::LaplacianMask => "laplacian-mask",
            Measure::LaplacianContour => "laplacian-contour",
            Measure::Brenner => "brenner",
            Measure::Reblur => "reblur",
        }
    }

    pub fn orientation(self) -> Orientation {
        match self {
            Measure::Reblur => Orientation::BlurrierIsHigher,
            _ => Orientation::SharperIsHigher,
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = FocusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Measure::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| FocusError::UnknownMeasure(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    SharperIsHigher,
    BlurrierIsHigher,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocusScore {
    pub value: f64,
    pub measure: Measure,
    pub orientation: Orientation,
    /// Set when the region gave the measure nothing to work with
    /// (no Brenner pairs, constant Reblur crop).
    pub degenerate: bool,
}

impl FocusScore {
    fn new(value: f64, measure: Measure, degenerate: bool) -> Self {
        Self {
            value,
            measure,
            orientation: measure.orientation(),
            degenerate,
        }
    }
}

fn check_region(img: &GrayImage, region: &[(u32, u32)]) -> Result<(), FocusError> {
    if region.is_empty() {
        return Err(FocusError::EmptyRegion);
    }
    if let Some(&(x, y)) = region
        .iter()
        .find(|&&(x, y)| x >= img.width() || y >= img.height())
    {
        return Err(FocusError::OutOfBounds {
            x,
            y,
            width: img.width(),
            height: img.height(),
        });
    }
    Ok(())
}

/// 4-neighbour Laplacian at one pixel, zero outside the image.
fn laplacian_at(img: &GrayImage, x: u32, y: u32) -> f64 {
    let at = |dx: i64, dy: i64| {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if nx < 0 || ny < 0 || nx >= img.width() as i64 || ny >= img.height() as i64 {
            0.0
        } else {
            img.get(nx as u32, ny as u32)
        }
    };
    at(-1, 0) + at(1, 0) + at(0, -1) + at(0, 1) - 4.0 * at(0, 0)
}

/// Population variance of the Laplacian-filtered image over `region`.
pub fn laplacian_variance(
    img: &GrayImage,
    region: &[(u32, u32)],
) -> Result<FocusScore, FocusError> {
    check_region(img, region)?;
    let values: Vec<f64> = region
        .iter()
        .map(|&(x, y)| laplacian_at(img, x, y))
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(FocusScore::new(var, Measure::LaplacianMask, false))
}

/// Sum of squared differences `I(x+2, y) - I(x, y)` over pairs fully inside `region`.
pub fn brenner(img: &GrayImage, region: &[(u32, u32)]) -> Result<FocusScore, FocusError> {
    check_region(img, region)?;
    let members: HashSet<(u32, u32)> = region.iter().copied().collect();
    // summation order must not depend on hashing
    let mut ordered: Vec<(u32, u32)> = members.iter().map(|&(x, y)| (y, x)).collect();
    ordered.sort_unstable();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for (y, x) in ordered {
        if members.contains(&(x + 2, y)) {
            let d = img.get(x + 2, y) - img.get(x, y);
            sum += d * d;
            pairs += 1;
        }
    }
    Ok(FocusScore::new(sum, Measure::Brenner, pairs == 0))
}

/// Blur of one direction; `None` when the crop has no variation along it.
fn reblur_direction(
    orig: &[f64],
    blurred: &[f64],
    w: usize,
    h: usize,
    horizontal: bool,
) -> Option<f64> {
    let mut s_orig = 0.0;
    let mut s_var = 0.0;
    let (dx, dy) = if horizontal { (1, 0) } else { (0, 1) };
    for y in dy..h {
        for x in dx..w {
            let k = y * w + x;
            let prev = (y - dy) * w + (x - dx);
            let d_o = (orig[k] - orig[prev]).abs();
            let d_b = (blurred[k] - blurred[prev]).abs();
            s_orig += d_o;
            s_var += (d_o - d_b).max(0.0);
        }
    }
    (s_orig > 0.0).then(|| ((s_orig - s_var) / s_orig).clamp(0.0, 1.0))
}

/// No-reference blur estimate on the `bbox` crop: re-blur with 1x9 / 9x1 box
/// filters and measure how much adjacent-pixel variation survives. Higher is blurrier.
pub fn reblur(img: &GrayImage, bbox: BBox) -> Result<FocusScore, FocusError> {
    if bbox.width() < 3 || bbox.height() < 3 {
        return Err(FocusError::RegionTooSmall {
            width: bbox.width(),
            height: bbox.height(),
        });
    }
    if bbox.x_max >= img.width() || bbox.y_max >= img.height() {
        return Err(FocusError::OutOfBounds {
            x: bbox.x_max,
            y: bbox.y_max,
            width: img.width(),
            height: img.height(),
        });
    }
    let crop = img.crop(bbox.x_min, bbox.y_min, bbox.width(), bbox.height());
    let (w, h) = (crop.width() as usize, crop.height() as usize);
    let avg = [1.0 / REBLUR_KERNEL as f64; REBLUR_KERNEL];
    let blur_h = convolve_separable(crop.data(), w, h, &avg, &[1.0]);
    let blur_v = convolve_separable(crop.data(), w, h, &[1.0], &avg);
    let bh = reblur_direction(crop.data(), &blur_h, w, h, true);
    let bv = reblur_direction(crop.data(), &blur_v, w, h, false);
    Ok(match (bh, bv) {
        (None, None) => FocusScore::new(1.0, Measure::Reblur, true),
        (a, b) => FocusScore::new(
            a.unwrap_or(0.0).max(b.unwrap_or(0.0)),
            Measure::Reblur,
            false,
        ),
    })
}

/// Evaluates `measure` on one instance mask.
pub fn measure_instance(
    img: &GrayImage,
    mask: &BinaryMask,
    measure: Measure,
) -> Result<FocusScore, FocusError> {
    if mask.width() != img.width() || mask.height() != img.height() {
        return Err(FocusError::DimensionMismatch {
            mask_width: mask.width(),
            mask_height: mask.height(),
            width: img.width(),
            height: img.height(),
        });
    }
    match measure {
        Measure::LaplacianMask => {
            let region: Vec<_> = mask.pixels().collect();
            laplacian_variance(img, &region)
        }
        Measure::LaplacianContour => {
            let region = raster::contour(mask).pixels;
            laplacian_variance(img, &region).map(|s| FocusScore::new(s.value, measure, false))
        }
        Measure::Brenner => {
            let region: Vec<_> = mask.pixels().collect();
            brenner(img, &region)
        }
        Measure::Reblur => reblur(img, mask.bbox()),
    }
}

/// Scores every instance of `scene`, in instance order.
pub fn measure_scene(
    img: &GrayImage,
    scene: &Scene,
    measure: Measure,
) -> Result<Vec<(u64, FocusScore)>, FocusError> {
    scene
        .instances()
        .iter()
        .map(|inst| measure_instance(img, &inst.mask, measure).map(|s| (inst.id, s)))
        .collect()
}

/// Per-scene normalization to [0, 1], sharper-is-higher: blurrier-is-higher
/// measures are inverted as `1 - v` before dividing by the maximum.
pub fn normalize_scores(scores: &[FocusScore]) -> Result<Vec<f64>, FocusError> {
    let first = scores.first().ok_or(FocusError::NoScores)?;
    if let Some(other) = scores.iter().find(|s| s.measure != first.measure) {
        return Err(FocusError::MixedMeasures {
            first: first.measure,
            other: other.measure,
        });
    }
    let oriented: Vec<f64> = scores
        .iter()
        .map(|s| match s.orientation {
            Orientation::SharperIsHigher => s.value,
            Orientation::BlurrierIsHigher => 1.0 - s.value,
        })
        .collect();
    let max = oriented.iter().cloned().fold(0.0, f64::max);
    Ok(if max > 0.0 {
        oriented.iter().map(|v| (v / max).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; oriented.len()]
    })
}
