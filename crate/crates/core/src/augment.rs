//! Instance blurring: Gaussian-blur a random subset of crystal instances and
//! relabel them out-of-focus. No compositing augmentations (mosaic, mixup,
//! copy-paste) are provided, since those break per-image focus labels.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::gray::{gaussian_blur, GrayImage};
use crate::interchange::{FocusLevel, Scene};

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("fraction range ({low}, {high}) must satisfy 0 <= low <= high <= 1")]
    InvalidFraction { low: f64, high: f64 },
    #[error("kernel size {0} must be odd and at least 3")]
    InvalidKernel(u32),
    #[error("no kernel sizes given")]
    NoKernels,
    #[error("image is {image_width}x{image_height}, scene is {scene_width}x{scene_height}")]
    SizeMismatch {
        image_width: u32,
        image_height: u32,
        scene_width: u32,
        scene_height: u32,
    },
    #[error("copies must be at least 1")]
    NoCopies,
    #[error("cannot parse `{0}`")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    low: f64,
    high: f64,
    kernels: Vec<u32>,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            low: 0.25,
            high: 0.50,
            kernels: vec![11, 13, 15, 17],
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn new(low: f64, high: f64, kernels: Vec<u32>, seed: u64) -> Result<Self, AugmentError> {
        if !(0.0 <= low && low <= high && high <= 1.0) {
            return Err(AugmentError::InvalidFraction { low, high });
        }
        if kernels.is_empty() {
            return Err(AugmentError::NoKernels);
        }
        if let Some(&k) = kernels.iter().find(|&&k| k < 3 || k % 2 == 0) {
            return Err(AugmentError::InvalidKernel(k));
        }
        Ok(Self {
            low,
            high,
            kernels,
            seed,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn fraction_range(&self) -> (f64, f64) {
        (self.low, self.high)
    }

    pub fn kernels(&self) -> &[u32] {
        &self.kernels
    }
}

/// Parses `low:high`, e.g. `0.25:0.5`.
pub fn parse_fraction_range(s: &str) -> Result<(f64, f64), AugmentError> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| AugmentError::Parse(s.to_string()))?;
    let parse = |t: &str| {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| AugmentError::Parse(s.to_string()))
    };
    let (low, high) = (parse(a)?, parse(b)?);
    if !(0.0 <= low && low <= high && high <= 1.0) {
        return Err(AugmentError::InvalidFraction { low, high });
    }
    Ok((low, high))
}

/// Parses a comma-separated list of odd kernel sizes, e.g. `11,13,15,17`.
pub fn parse_kernels(s: &str) -> Result<Vec<u32>, AugmentError> {
    let kernels = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| AugmentError::Parse(s.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if kernels.is_empty() {
        return Err(AugmentError::NoKernels);
    }
    if let Some(&k) = kernels.iter().find(|&&k| k < 3 || k % 2 == 0) {
        return Err(AugmentError::InvalidKernel(k));
    }
    Ok(kernels)
}

/// How many of `n` instances to blur. Drawn uniformly from the integers
/// `ceil(low n) ..= floor(high n)`; when that range is empty, a fraction is
/// drawn from `[low, high]` and rounded.
pub fn selection_size<R: Rng>(n: usize, low: f64, high: f64, rng: &mut R) -> usize {
    const EPS: f64 = 1e-9;
    let lo = (low * n as f64 - EPS).ceil().max(0.0) as usize;
    let hi = ((high * n as f64 + EPS).floor() as usize).min(n);
    if lo <= hi {
        rng.gen_range(lo..=hi)
    } else {
        let u = if high > low {
            rng.gen_range(low..=high)
        } else {
            low
        };
        ((u * n as f64).round() as usize).min(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlurredInstance {
    pub id: u64,
    pub kernel: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub image: GrayImage,
    pub scene: Scene,
    /// Selected instances in the order they were blurred.
    pub blurred: Vec<BlurredInstance>,
}

/// Blurs the pixels of one instance. The blur runs on the bbox crop grown
/// by `kernel` pixels; only pixels under the mask change.
fn blur_under_mask(img: &mut GrayImage, mask: &crate::interchange::BinaryMask, kernel: u32) {
    let region = mask.bbox().expand(kernel, img.width(), img.height());
    let crop = img.crop(region.x_min, region.y_min, region.width(), region.height());
    let blurred = gaussian_blur(&crop, kernel);
    for (x, y) in mask.pixels() {
        img.set(x, y, blurred.get(x - region.x_min, y - region.y_min));
    }
}

pub fn blur_instances_with_rng<R: Rng>(
    img: &GrayImage,
    scene: &Scene,
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<Augmented, AugmentError> {
    if img.width() != scene.width() || img.height() != scene.height() {
        return Err(AugmentError::SizeMismatch {
            image_width: img.width(),
            image_height: img.height(),
            scene_width: scene.width(),
            scene_height: scene.height(),
        });
    }
    let n = scene.len();
    if n == 0 {
        return Ok(Augmented {
            image: img.clone(),
            scene: scene.clone(),
            blurred: Vec::new(),
        });
    }
    let k = selection_size(n, config.low, config.high, rng);
    let mut chosen = index::sample(rng, n, k).into_vec();
    chosen.sort_unstable();
    let mut image = img.clone();
    let mut out = scene.clone();
    let mut blurred = Vec::with_capacity(k);
    for idx in chosen {
        let kernel = config.kernels[rng.gen_range(0..config.kernels.len())];
        let inst = &mut out.instances_mut()[idx];
        blur_under_mask(&mut image, &inst.mask, kernel);
        inst.focus = Some(FocusLevel::OutOfFocus);
        blurred.push(BlurredInstance {
            id: inst.id,
            kernel,
        });
    }
    Ok(Augmented {
        image,
        scene: out,
        blurred,
    })
}

/// Seeded instance blurring; identical inputs and seed give identical output.
pub fn blur_instances(
    img: &GrayImage,
    scene: &Scene,
    config: &AugmentConfig,
) -> Result<Augmented, AugmentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    blur_instances_with_rng(img, scene, config, &mut rng)
}

/// RNG for augmented copy `copy` of original `scene_index`: seeded with
/// `seed ^ copy`, one stream per original.
pub fn derived_rng(seed: u64, scene_index: usize, copy: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ copy as u64);
    rng.set_stream(scene_index as u64);
    rng
}

/// One entry of an expanded dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub source_index: usize,
    /// 0 for the original, 1.. for augmented variants.
    pub copy: usize,
    pub image: GrayImage,
    pub scene: Scene,
    pub blurred: Vec<BlurredInstance>,
}

/// Originals plus `copies - 1` augmented variants of each, ordered by
/// original then copy index. Variants are generated in parallel; the result
/// does not depend on the thread count.
pub fn expand_dataset(
    items: &[(GrayImage, Scene)],
    copies: usize,
    config: &AugmentConfig,
) -> Result<Vec<DatasetItem>, AugmentError> {
    if copies == 0 {
        return Err(AugmentError::NoCopies);
    }
    let jobs: Vec<(usize, usize)> = (0..items.len())
        .flat_map(|s| (0..copies).map(move |c| (s, c)))
        .collect();
    jobs.par_iter()
        .map(|&(s, c)| {
            let (image, scene) = &items[s];
            if c == 0 {
                return Ok(DatasetItem {
                    source_index: s,
                    copy: 0,
                    image: image.clone(),
                    scene: scene.clone(),
                    blurred: Vec::new(),
                });
            }
            let mut rng = derived_rng(config.seed, s, c);
            let aug = blur_instances_with_rng(image, scene, config, &mut rng)?;
            Ok(DatasetItem {
                source_index: s,
                copy: c,
                image: aug.image,
                scene: aug.scene,
                blurred: aug.blurred,
            })
        })
        .collect()
}
