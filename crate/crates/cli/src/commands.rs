use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use agglofocus::augment::{self, AugmentConfig, AugmentError};
use agglofocus::contrast::{self, ClassificationConfig, ContrastError};
use agglofocus::focusmeas::{self, FocusError};
use agglofocus::gray::{GrayImage, ImageError};
use agglofocus::interchange::{load_scene, save_scene, Scene, SceneError};
use agglofocus::metrics::{self, EvalOptions, MetricsError};
use agglofocus::synth::{self, SynthConfig, SynthError, MANIFEST_FILE};

use crate::{Cli, Command};

/// Raised when `validate` finds invalid files; the details are already printed.
#[derive(Debug)]
pub struct ValidationFailed(pub usize);

impl std::fmt::Display for ValidationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} invalid file(s)", self.0)
    }
}

impl std::error::Error for ValidationFailed {}

/// Short machine-readable code for the first recognised error in the chain.
pub fn error_code(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if cause.is::<ValidationFailed>() || cause.is::<SceneError>() {
            return "invalid-scene";
        }
        if cause.is::<ImageError>() {
            return "image";
        }
        if cause.is::<MetricsError>() {
            return "metrics";
        }
        if cause.is::<ContrastError>() || cause.is::<FocusError>() {
            return "classify";
        }
        if cause.is::<AugmentError>() {
            return "augment";
        }
        if cause.is::<SynthError>() {
            return "synth";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "failed"
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth {
            width,
            height,
            layers,
            focal_layer,
            n,
            breakage,
            out_dir,
        } => {
            let mut config = SynthConfig::sized(*width, *height).with_seed(cli.seed);
            config.n_layers = *layers;
            config.focal_layer = focal_layer.unwrap_or(layers / 2);
            config.breakage_probability = *breakage;
            let manifest = synth::generate_corpus(&config, *n, out_dir)?;
            info!(
                "wrote {} scenes to {}",
                manifest.scenes.len(),
                out_dir.display()
            );
            Ok(())
        }
        Command::Augment {
            copies,
            fraction,
            kernels,
            in_dir,
            out_dir,
        } => {
            let (low, high) = augment::parse_fraction_range(fraction)?;
            let kernels = augment::parse_kernels(kernels)?;
            let config = AugmentConfig::new(low, high, kernels, cli.seed)?;
            run_augment(&config, *copies, in_dir, out_dir)
        }
        Command::FocusMeasure {
            measure,
            out,
            inputs,
        } => {
            let files = scene_paths(inputs)?;
            let measures = measure.measures();
            let rows = files
                .par_iter()
                .map(|path| {
                    let (scene, image) = load_with_image(path)?;
                    let id = scene_id(path);
                    let mut rows = Vec::new();
                    for &m in &measures {
                        let scored = focusmeas::measure_scene(&image, &scene, m)
                            .with_context(|| format!("{}", path.display()))?;
                        if scored.is_empty() {
                            continue;
                        }
                        let scores: Vec<_> = scored.iter().map(|(_, s)| *s).collect();
                        let normalized = focusmeas::normalize_scores(&scores)?;
                        for ((inst, s), v) in scored.iter().zip(normalized) {
                            rows.push((id.clone(), *inst, m.name(), s.value, v));
                        }
                    }
                    Ok(rows)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "scene_id",
                "instance_id",
                "measure",
                "raw_value",
                "normalized_value",
            ])?;
            for (scene, inst, m, raw, norm) in rows.into_iter().flatten() {
                w.write_record([
                    scene,
                    inst.to_string(),
                    m.to_string(),
                    format!("{raw:.9e}"),
                    format!("{norm:.6}"),
                ])?;
            }
            let bytes = w.into_inner().context("flushing CSV")?;
            write_output(out.as_deref(), &bytes)
        }
        Command::Classify {
            method,
            threshold,
            focus_source,
            touch_radius,
            order,
            dump_graph,
            input,
            output,
        } => {
            let config = ClassificationConfig::new((*method).into(), *threshold)?
                .with_focus_source((*focus_source).into())
                .with_touch_radius(*touch_radius)
                .with_postprocess((*order).into());
            run_classify(&config, input, output, dump_graph.as_deref())
        }
        Command::Evaluate {
            iou,
            average,
            acc_denominator,
            out,
            csv,
            gt_dir,
            pred_dir,
        } => {
            ensure!(
                *iou > 0.0 && *iou <= 1.0,
                "--iou must lie in (0, 1], got {iou}"
            );
            let opts = EvalOptions {
                iou_threshold: *iou,
                average: (*average).into(),
                acc_denominator: (*acc_denominator).into(),
            };
            let report = metrics::evaluate_corpus(gt_dir, pred_dir, &opts)?;
            if let Some(path) = csv {
                write_output(Some(path), report.per_scene_csv().as_bytes())?;
            }
            write_output(out.as_deref(), report.to_json().as_bytes())
        }
        Command::ContrastReport {
            touch_radius,
            out,
            inputs,
        } => {
            let files = scene_paths(inputs)?;
            let scenes = files
                .par_iter()
                .map(|p| load_with_image(p))
                .collect::<Result<Vec<_>>>()?;
            let report = contrast::separation_report(&scenes, *touch_radius)?;
            write_output(out.as_deref(), report.to_csv().as_bytes())
        }
        Command::Validate { inputs } => {
            let files = scene_paths(inputs)?;
            let results: Vec<_> = files.par_iter().map(|p| (p, load_scene(p))).collect();
            let mut bad = 0;
            for (path, r) in results {
                match r {
                    Ok(s) => info!("{}: ok ({} instances)", path.display(), s.len()),
                    Err(e) => {
                        bad += 1;
                        eprintln!("invalid: {}: {e}", path.display());
                    }
                }
            }
            if bad > 0 {
                return Err(ValidationFailed(bad).into());
            }
            Ok(())
        }
    }
}

/// Scene files named by `inputs`; directories expand to their `*.json`
/// files (manifest excluded) in name order.
fn scene_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let names = metrics::scene_files(input)?;
            out.extend(names.into_iter().map(|n| input.join(n)));
        } else {
            out.push(input.clone());
        }
    }
    Ok(out)
}

fn scene_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Image of a scene; a relative `image_path` is resolved against the scene file's directory.
fn image_for(scene_path: &Path, scene: &Scene) -> Result<GrayImage> {
    let Some(rel) = scene.image_path.as_deref() else {
        bail!("{}: scene has no image_path", scene_path.display());
    };
    let path = match scene_path.parent() {
        Some(dir) if Path::new(rel).is_relative() => dir.join(rel),
        _ => PathBuf::from(rel),
    };
    let image = GrayImage::open(&path).with_context(|| format!("{}", path.display()))?;
    ensure!(
        image.width() == scene.width() && image.height() == scene.height(),
        "{}: image is {}x{}, scene is {}x{}",
        path.display(),
        image.width(),
        image.height(),
        scene.width(),
        scene.height()
    );
    Ok(image)
}

fn load_with_image(path: &Path) -> Result<(Scene, GrayImage)> {
    let scene = load_scene(path)?;
    let image = image_for(path, &scene)?;
    Ok((scene, image))
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("{}", dir.display()))?;
            }
            fs::write(p, bytes).with_context(|| format!("{}", p.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

fn classify_one(
    config: &ClassificationConfig,
    input: &Path,
    output: &Path,
    graph_out: Option<&Path>,
) -> Result<()> {
    let scene = load_scene(input)?;
    let image = match config.focus_source {
        contrast::FocusSource::Label => None,
        contrast::FocusSource::Measure(_) => Some(image_for(input, &scene)?),
    };
    let result = contrast::classify_agglomeration(&scene, config, image.as_ref())
        .with_context(|| format!("{}", input.display()))?;
    save_scene(&result.scene, output)?;
    if let Some(g) = graph_out {
        let mut text = result.graph.to_json();
        text.push('\n');
        write_output(Some(g), text.as_bytes())?;
    }
    Ok(())
}

fn run_classify(
    config: &ClassificationConfig,
    input: &Path,
    output: &Path,
    dump_graph: Option<&Path>,
) -> Result<()> {
    ensure!(
        !same_file(input, output),
        "refusing to overwrite the input {}",
        input.display()
    );
    if !input.is_dir() {
        if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("{}", dir.display()))?;
        }
        return classify_one(config, input, output, dump_graph);
    }
    fs::create_dir_all(output).with_context(|| format!("{}", output.display()))?;
    if let Some(g) = dump_graph {
        fs::create_dir_all(g).with_context(|| format!("{}", g.display()))?;
    }
    let names = metrics::scene_files(input)?;
    names.par_iter().try_for_each(|name| {
        let graph = dump_graph.map(|g| g.join(format!("{}.graph.json", scene_id(Path::new(name)))));
        classify_one(
            config,
            &input.join(name),
            &output.join(name),
            graph.as_deref(),
        )
    })
}

#[derive(Serialize)]
struct AugmentEntry {
    blurred: Vec<[u64; 2]>,
    copy: usize,
    image: String,
    scene: String,
    source: String,
}

#[derive(Serialize)]
struct AugmentManifest {
    copies: usize,
    items: Vec<AugmentEntry>,
    kernels: Vec<u32>,
    seed: u64,
}

fn run_augment(config: &AugmentConfig, copies: usize, in_dir: &Path, out_dir: &Path) -> Result<()> {
    ensure!(
        !same_file(in_dir, out_dir),
        "output directory must differ from the input directory"
    );
    let names = metrics::scene_files(in_dir)?;
    ensure!(!names.is_empty(), "{}: no scene files", in_dir.display());
    let items = names
        .par_iter()
        .map(|n| load_with_image(&in_dir.join(n)).map(|(s, i)| (i, s)))
        .collect::<Result<Vec<_>>>()?;
    let expanded = augment::expand_dataset(&items, copies, config)?;
    fs::create_dir_all(out_dir).with_context(|| format!("{}", out_dir.display()))?;
    let entries = expanded
        .par_iter()
        .map(|item| {
            let stem = format!(
                "{}_c{:02}",
                scene_id(Path::new(&names[item.source_index])),
                item.copy
            );
            let image = format!("{stem}.png");
            let scene_file = format!("{stem}.json");
            item.image.save_png(out_dir.join(&image))?;
            let scene = item.scene.clone().with_image_path(image.clone());
            save_scene(&scene, out_dir.join(&scene_file))?;
            Ok(AugmentEntry {
                blurred: item
                    .blurred
                    .iter()
                    .map(|b| [b.id, b.kernel as u64])
                    .collect(),
                copy: item.copy,
                image,
                scene: scene_file,
                source: names[item.source_index].clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = AugmentManifest {
        copies,
        items: entries,
        kernels: config.kernels().to_vec(),
        seed: config.seed,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_output(Some(&out_dir.join(MANIFEST_FILE)), text.as_bytes())?;
    info!("wrote {} scenes to {}", expanded.len(), out_dir.display());
    Ok(())
}
