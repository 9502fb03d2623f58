//! Synthetic depth-layered crystal scenes with exact ground truth.
//!
//! Crystals are textured convex polygons assigned to discrete depth layers.
//! Each is rendered with a Gaussian blur that grows with its distance from
//! the focal layer, then composited. Ground truth follows the annotation rules:
//!
//! 1. touching crystals on different depth layers are not agglomerated;
//! 2. touching crystals on the same layer are agglomerated;
//! 3. small fragments lying on a larger crystal (optional) are breakages,
//!    not agglomeration;
//! 4. small dark disks are dust and are not instances at all.
//!
//! Placement rejects two crystals on different non-focal layers that touch,
//! because they would share a focus level while sitting on different layers,
//! which no focus-based rule can tell apart from agglomeration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{masks_touch, DEFAULT_TOUCH_RADIUS};
use crate::gray::{gaussian_blur, GrayImage, ImageError};
use crate::interchange::{
    save_scene, AggloClass, BBox, BinaryMask, FocusLevel, InstanceRecord, Role, Scene, SceneError,
};
use crate::raster::{self, PostprocessOrder};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(
        "could not place crystal {crystal} on layer {layer} after {attempts} attempts \
         ({placed} crystals placed so far)"
    )]
    PlacementFailed {
        layer: usize,
        crystal: usize,
        attempts: usize,
        placed: usize,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub width: u32,
    pub height: u32,
    pub n_layers: usize,
    pub focal_layer: usize,
    /// Inclusive range of crystals placed on each layer.
    pub crystals_per_layer: (usize, usize),
    /// Inclusive range of polygon circumradii in pixels.
    pub radius: (f64, f64),
    /// Kernel size added per layer of distance from the focal layer.
    pub blur_per_layer_step: u32,
    /// Range of per-crystal speckle amplitude, drawn log-uniformly.
    pub texture: (f64, f64),
    /// Probability that a crystal is placed against an existing one.
    pub cluster_probability: f64,
    pub dust_count: (usize, usize),
    /// Probability that a large crystal carries a breakage fragment.
    pub breakage_probability: f64,
    pub touch_radius: u32,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::sized(256, 256)
    }
}

impl SynthConfig {
    /// Defaults scaled to the given image size (radii grow with the shorter side).
    pub fn sized(width: u32, height: u32) -> Self {
        let scale = width.min(height) as f64 / 256.0;
        let area_scale = (width as f64 * height as f64) / (256.0 * 256.0);
        let per_layer = |n: f64| ((n * area_scale.sqrt()).round() as usize).max(1);
        Self {
            width,
            height,
            n_layers: 3,
            focal_layer: 1,
            crystals_per_layer: (per_layer(3.0), per_layer(5.0)),
            radius: (10.0 * scale, 20.0 * scale),
            blur_per_layer_step: 6,
            texture: (0.03, 0.45),
            cluster_probability: 0.7,
            dust_count: (0, 3),
            breakage_probability: 0.0,
            touch_radius: DEFAULT_TOUCH_RADIUS,
            max_attempts: 400,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("dimensions must be positive");
        }
        if self.n_layers == 0 || self.focal_layer >= self.n_layers {
            return bad("focal_layer must be < n_layers");
        }
        if self.crystals_per_layer.0 > self.crystals_per_layer.1 {
            return bad("crystals_per_layer range is reversed");
        }
        if self.dust_count.0 > self.dust_count.1 {
            return bad("dust_count range is reversed");
        }
        if !(self.radius.0 >= 2.0 && self.radius.0 <= self.radius.1) {
            return bad("radius range must satisfy 2 <= min <= max");
        }
        if !(self.texture.0 > 0.0 && self.texture.0 <= self.texture.1) {
            return bad("texture range must satisfy 0 < min <= max");
        }
        if !(0.0..=1.0).contains(&self.cluster_probability)
            || !(0.0..=1.0).contains(&self.breakage_probability)
        {
            return bad("probabilities must lie in [0, 1]");
        }
        Ok(())
    }

    /// Odd blur kernel for a crystal `distance` layers from focus (1 = no blur).
    pub fn kernel_for_distance(&self, distance: usize) -> u32 {
        let k = 1 + self.blur_per_layer_step * distance as u32;
        if k.is_multiple_of(2) {
            k + 1
        } else {
            k
        }
    }
}

/// Intensity of the bright-field background.
const BACKGROUND: f64 = 0.82;
const DUST_INTENSITY: f64 = 0.05;
/// Same-layer crystals may overlap by at most this share of the smaller mask.
const SAME_LAYER_OVERLAP: f64 = 0.05;
/// Cross-layer crystals may overlap by at most this share of the smaller mask.
const CROSS_LAYER_OVERLAP: f64 = 0.10;
const MIN_AREA: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCrystal {
    pub id: u64,
    pub layer: usize,
    /// Id of the host crystal when this is a breakage fragment.
    pub fragment_of: Option<u64>,
    pub kernel: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dust {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub image: GrayImage,
    pub scene: Scene,
    pub crystals: Vec<SynthCrystal>,
    pub dust: Vec<Dust>,
}

impl SynthScene {
    pub fn layer_of(&self, id: u64) -> Option<usize> {
        self.crystals.iter().find(|c| c.id == id).map(|c| c.layer)
    }
}

type Point = (f64, f64);

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
fn convex_hull(mut pts: Vec<Point>) -> Vec<Point> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Random convex polygon with 4 to 8 vertices around `center`.
fn random_polygon<R: Rng>(rng: &mut R, center: Point, radius: f64) -> Option<Vec<Point>> {
    let n = rng.gen_range(4..=8);
    let aspect = rng.gen_range(0.6..=1.0);
    let rot = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut angles: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pts = angles
        .iter()
        .map(|&t| {
            let r = radius * rng.gen_range(0.8..=1.0);
            let (x, y) = (r * t.cos(), r * aspect * t.sin());
            (
                center.0 + x * rot.cos() - y * rot.sin(),
                center.1 + x * rot.sin() + y * rot.cos(),
            )
        })
        .collect();
    let hull = convex_hull(pts);
    (hull.len() >= 4).then_some(hull)
}

/// Pixels whose centres fall inside the convex CCW polygon, cleaned to a
/// single hole-free component.
fn rasterize(poly: &[Point], width: u32, height: u32) -> Option<BinaryMask> {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &(x, y) in poly {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let xs = (x0.floor().max(0.0) as u32)..=(x1.ceil().min(width as f64 - 1.0).max(0.0) as u32);
    let ys = (y0.floor().max(0.0) as u32)..=(y1.ceil().min(height as f64 - 1.0).max(0.0) as u32);
    let mut pixels = Vec::new();
    for y in ys {
        for x in xs.clone() {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let inside =
                (0..poly.len()).all(|i| cross(poly[i], poly[(i + 1) % poly.len()], p) >= 0.0);
            if inside {
                pixels.push((x, y));
            }
        }
    }
    let mask = BinaryMask::from_pixels(width, height, pixels).ok()?;
    Some(raster::postprocess(
        &mask,
        PostprocessOrder::FillThenLargest,
    ))
}

fn overlap(a: &BinaryMask, b: &BinaryMask) -> usize {
    match a.bbox().intersect(&b.bbox()) {
        None => 0,
        Some(w) => (w.y_min..=w.y_max)
            .flat_map(|y| (w.x_min..=w.x_max).map(move |x| (x, y)))
            .filter(|&(x, y)| a.get(x, y) && b.get(x, y))
            .count(),
    }
}

struct Placed {
    mask: BinaryMask,
    layer: usize,
    center: Point,
    radius: f64,
    fragment_of: Option<usize>,
}

struct Sprite {
    bbox: BBox,
    /// Premultiplied intensity and coverage over `bbox`.
    color: Vec<f64>,
    alpha: Vec<f64>,
}

fn render_sprite<R: Rng>(
    rng: &mut R,
    mask: &BinaryMask,
    kernel: u32,
    base: f64,
    speckle: f64,
) -> Sprite {
    let bbox = mask.bbox().expand(kernel, mask.width(), mask.height());
    let (w, h) = (bbox.width(), bbox.height());
    let mut color = Vec::with_capacity((w * h) as usize);
    let mut alpha = Vec::with_capacity((w * h) as usize);
    for y in bbox.y_min..=bbox.y_max {
        for x in bbox.x_min..=bbox.x_max {
            // draw noise for every pixel so the stream does not depend on the shape
            let n: f64 = rng.gen_range(-1.0..=1.0);
            if mask.get(x, y) {
                color.push((base * (1.0 + speckle * n)).clamp(0.0, 1.0));
                alpha.push(1.0);
            } else {
                color.push(0.0);
                alpha.push(0.0);
            }
        }
    }
    if kernel > 1 {
        let c = GrayImage::new(w, h, color).expect("premultiplied colour in range");
        let a = GrayImage::new(w, h, alpha).expect("coverage in range");
        color = gaussian_blur(&c, kernel).data().to_vec();
        alpha = gaussian_blur(&a, kernel).data().to_vec();
    }
    Sprite { bbox, color, alpha }
}

fn composite(canvas: &mut [f64], width: u32, sprite: &Sprite) {
    let w = sprite.bbox.width() as usize;
    for (j, y) in (sprite.bbox.y_min..=sprite.bbox.y_max).enumerate() {
        for (i, x) in (sprite.bbox.x_min..=sprite.bbox.x_max).enumerate() {
            let k = j * w + i;
            let px = &mut canvas[y as usize * width as usize + x as usize];
            *px = sprite.color[k] + (1.0 - sprite.alpha[k]) * *px;
        }
    }
}

/// Checks a candidate crystal against everything placed so far.
fn admissible(candidate: &BinaryMask, layer: usize, placed: &[Placed], cfg: &SynthConfig) -> bool {
    let focal = cfg.focal_layer;
    placed.iter().all(|p| {
        let shared = overlap(candidate, &p.mask) as f64;
        let smaller = candidate.area().min(p.mask.area()) as f64;
        if p.layer == layer {
            return shared <= SAME_LAYER_OVERLAP * smaller;
        }
        if shared > CROSS_LAYER_OVERLAP * smaller {
            return false;
        }
        let both_blurred = layer != focal && p.layer != focal;
        !(both_blurred && masks_touch(candidate, &p.mask, cfg.touch_radius))
    })
}

/// Generates one scene with full ground truth from `config.seed`.
pub fn generate_scene(config: &SynthConfig) -> Result<SynthScene, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    generate_scene_with_rng(config, &mut rng)
}

pub fn generate_scene_with_rng<R: Rng>(
    config: &SynthConfig,
    rng: &mut R,
) -> Result<SynthScene, SynthError> {
    config.validate()?;
    let (w, h) = (config.width, config.height);
    let mut placed: Vec<Placed> = Vec::new();

    for layer in 0..config.n_layers {
        let count = rng.gen_range(config.crystals_per_layer.0..=config.crystals_per_layer.1);
        for crystal in 0..count {
            let mut attempts = 0;
            loop {
                if attempts == config.max_attempts {
                    return Err(SynthError::PlacementFailed {
                        layer,
                        crystal,
                        attempts,
                        placed: placed.len(),
                    });
                }
                attempts += 1;
                let radius = rng.gen_range(config.radius.0..=config.radius.1);
                let anchor = (!placed.is_empty() && rng.gen_bool(config.cluster_probability))
                    .then(|| rng.gen_range(0..placed.len()));
                let center = match anchor {
                    Some(a) => {
                        let p = &placed[a];
                        let t = rng.gen_range(0.0..std::f64::consts::TAU);
                        let d = (p.radius + radius) * rng.gen_range(0.75..=0.95);
                        (p.center.0 + d * t.cos(), p.center.1 + d * t.sin())
                    }
                    None => (
                        rng.gen_range(radius..=(w as f64 - radius).max(radius)),
                        rng.gen_range(radius..=(h as f64 - radius).max(radius)),
                    ),
                };
                let Some(poly) = random_polygon(rng, center, radius) else {
                    continue;
                };
                let Some(mask) = rasterize(&poly, w, h) else {
                    continue;
                };
                if mask.area() < MIN_AREA || !admissible(&mask, layer, &placed, config) {
                    continue;
                }
                placed.push(Placed {
                    mask,
                    layer,
                    center,
                    radius,
                    fragment_of: None,
                });
                break;
            }
        }
    }

    // breakage fragments: small polygons lying wholly on a host crystal
    let hosts = placed.len();
    for host in 0..hosts {
        if config.breakage_probability == 0.0 || !rng.gen_bool(config.breakage_probability) {
            continue;
        }
        let (hc, hr, layer) = (placed[host].center, placed[host].radius, placed[host].layer);
        for _ in 0..20 {
            let radius = hr * rng.gen_range(0.25..=0.4);
            let off = (hr - radius) * 0.5;
            let t = rng.gen_range(0.0..std::f64::consts::TAU);
            let center = (hc.0 + off * t.cos(), hc.1 + off * t.sin());
            let Some(mask) = random_polygon(rng, center, radius).and_then(|p| rasterize(&p, w, h))
            else {
                continue;
            };
            if mask.area() >= 8 && mask.is_subset_of(&placed[host].mask) {
                placed.push(Placed {
                    mask,
                    layer,
                    center,
                    radius,
                    fragment_of: Some(host),
                });
                break;
            }
        }
    }

    // ground truth: agglomerated iff touching a same-layer crystal, ignoring
    // host/fragment contact
    let n = placed.len();
    let mut agglomerated = vec![false; n];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&placed[i], &placed[j]);
            let breakage = a.fragment_of == Some(j) || b.fragment_of == Some(i);
            if a.layer == b.layer && !breakage && masks_touch(&a.mask, &b.mask, config.touch_radius)
            {
                agglomerated[i] = true;
                agglomerated[j] = true;
            }
        }
    }

    // rendering: blurred layers first, focal layer on top, fragments over hosts
    let mut canvas: Vec<f64> = (0..w as usize * h as usize)
        .map(|_| (BACKGROUND + rng.gen_range(-0.015..=0.015)).clamp(0.0, 1.0))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| {
        let p = &placed[i];
        (
            p.layer == config.focal_layer,
            p.fragment_of.is_some(),
            p.layer,
            i,
        )
    });
    let mut kernels = vec![1u32; n];
    for &i in &order {
        let p = &placed[i];
        let distance = p.layer.abs_diff(config.focal_layer);
        kernels[i] = config.kernel_for_distance(distance);
        let base = rng.gen_range(0.30..=0.50) + if p.fragment_of.is_some() { 0.1 } else { 0.0 };
        // texture strength varies widely between crystals, as in real samples
        let (lo, hi) = config.texture;
        let speckle = rng.gen_range(lo.ln()..=hi.ln()).exp();
        let sprite = render_sprite(rng, &p.mask, kernels[i], base, speckle);
        composite(&mut canvas, w, &sprite);
    }

    // dust: small solid dark disks clear of every crystal
    let dust_n = rng.gen_range(config.dust_count.0..=config.dust_count.1);
    let mut dust = Vec::new();
    for _ in 0..dust_n {
        for _ in 0..50 {
            let r = rng.gen_range(2.0..=4.0);
            let (cx, cy) = (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64));
            let margin = r + config.touch_radius as f64 + 2.0;
            let clear = placed.iter().all(|p| {
                let b = p.mask.bbox();
                cx + margin < b.x_min as f64
                    || cx - margin > b.x_max as f64 + 1.0
                    || cy + margin < b.y_min as f64
                    || cy - margin > b.y_max as f64 + 1.0
            });
            if !clear {
                continue;
            }
            for y in 0..h {
                for x in 0..w {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    if dx * dx + dy * dy <= r * r {
                        canvas[y as usize * w as usize + x as usize] = DUST_INTENSITY;
                    }
                }
            }
            dust.push(Dust {
                x: cx,
                y: cy,
                radius: r,
            });
            break;
        }
    }

    let image = GrayImage::new(w, h, canvas)?.quantized();
    let mut instances = Vec::with_capacity(n);
    let mut crystals = Vec::with_capacity(n);
    for (i, p) in placed.into_iter().enumerate() {
        let focus = if p.layer == config.focal_layer {
            FocusLevel::InFocus
        } else {
            FocusLevel::OutOfFocus
        };
        let agglo = if agglomerated[i] {
            AggloClass::Agglomerated
        } else {
            AggloClass::NonAgglomerated
        };
        instances.push(
            InstanceRecord::new(i as u64, p.mask)
                .with_focus(focus)
                .with_agglo(agglo),
        );
        crystals.push(SynthCrystal {
            id: i as u64,
            layer: p.layer,
            fragment_of: p.fragment_of.map(|h| h as u64),
            kernel: kernels[i],
        });
    }
    let scene = Scene::new(w, h, Role::GroundTruth, instances)?;
    Ok(SynthScene {
        image,
        scene,
        crystals,
        dust,
    })
}

/// Seed of scene `index` in a corpus seeded with `seed` (SplitMix64 mix).
pub fn derive_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub image: String,
    pub scene: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub height: u32,
    pub scenes: Vec<ManifestEntry>,
    pub seed: u64,
    pub width: u32,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// In-memory corpus: scene `i` is generated from `derive_seed(config.seed, i)`.
pub fn generate_scenes(
    config: &SynthConfig,
    n_scenes: usize,
) -> Result<Vec<SynthScene>, SynthError> {
    (0..n_scenes)
        .into_par_iter()
        .map(|i| {
            let cfg = SynthConfig {
                seed: derive_seed(config.seed, i),
                ..config.clone()
            };
            generate_scene(&cfg)
        })
        .collect()
}

/// Writes `scene_NNN.png`, `scene_NNN.json` and `manifest.json` into `dir`.
pub fn generate_corpus(
    config: &SynthConfig,
    n_scenes: usize,
    dir: impl AsRef<Path>,
) -> Result<Manifest, SynthError> {
    let dir = dir.as_ref();
    if n_scenes == 0 {
        return Err(SynthError::InvalidConfig(
            "n_scenes must be at least 1".into(),
        ));
    }
    fs::create_dir_all(dir).map_err(|source| SynthError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let entries = (0..n_scenes)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(config.seed, i);
            let synth = generate_scene(&SynthConfig {
                seed,
                ..config.clone()
            })?;
            let stem = format!("scene_{i:03}");
            let image = format!("{stem}.png");
            let scene_file = format!("{stem}.json");
            synth.image.save_png(dir.join(&image))?;
            let scene = synth.scene.with_image_path(image.clone());
            save_scene(&scene, dir.join(&scene_file))?;
            Ok(ManifestEntry {
                image,
                scene: scene_file,
                seed,
            })
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    let manifest = Manifest {
        height: config.height,
        scenes: entries,
        seed: config.seed,
        width: config.width,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|source| SynthError::Io { path, source })?;
    Ok(manifest)
}

/// Layer of every instance, keyed by id.
pub fn layers(s: &SynthScene) -> BTreeMap<u64, usize> {
    s.crystals.iter().map(|c| (c.id, c.layer)).collect()
}
