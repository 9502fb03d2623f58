//! Contrast focus and agglomeration classification.
//!
//! Contrast focus measures how far an instance's focus level deviates from
//! its touching neighbours. Low contrast between touching crystals means they
//! share a depth layer and are agglomerated; high contrast means they only
//! overlap in the projection.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::focusmeas::{self, FocusError, Measure};
use crate::graph::{self, AdjacencyGraph, GraphError, DEFAULT_TOUCH_RADIUS};
use crate::gray::GrayImage;
use crate::interchange::{AggloClass, FocusLevel, InstanceRecord, Role, Scene, SceneError};
use crate::raster::{self, PostprocessOrder};

/// Contrast threshold below which touching instances are agglomerated.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ContrastError {
    #[error("instance {0} has no focus value")]
    MissingFocus(u64),
    #[error("instance {0} has no agglomeration label")]
    MissingLabel(u64),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("focus source {0} needs the scene image")]
    ImageRequired(FocusSource),
    #[error(transparent)]
    Focus(#[from] FocusError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("no instances with neighbours for method {0}")]
    EmptyReport(String),
    #[error("{methods} result sets for {scenes} scenes")]
    ReportShape { methods: usize, scenes: usize },
    #[error("unknown contrast method `{0}` (expected c1 or c2)")]
    UnknownMethod(String),
    #[error("unknown focus source `{0}`")]
    UnknownSource(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContrastMethod {
    /// `|f - mean(neighbour f)|`
    Contrast1,
    /// 0 if any neighbour shares the focus level, 1 otherwise.
    Contrast2,
}

impl ContrastMethod {
    pub fn name(self) -> &'static str {
        match self {
            ContrastMethod::Contrast1 => "c1",
            ContrastMethod::Contrast2 => "c2",
        }
    }
}

impl fmt::Display for ContrastMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContrastMethod {
    type Err = ContrastError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "c1" => Ok(ContrastMethod::Contrast1),
            "c2" => Ok(ContrastMethod::Contrast2),
            other => Err(ContrastError::UnknownMethod(other.to_string())),
        }
    }
}

/// Where per-instance focus values come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FocusSource {
    /// Binary focus labels carried by the scene.
    #[default]
    Label,
    /// A classical measure, normalized per scene to [0, 1].
    Measure(Measure),
}

impl fmt::Display for FocusSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FocusSource::Label => f.write_str("label"),
            FocusSource::Measure(m) => f.write_str(m.name()),
        }
    }
}

impl FromStr for FocusSource {
    type Err = ContrastError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "label" {
            return Ok(FocusSource::Label);
        }
        s.parse::<Measure>()
            .map(FocusSource::Measure)
            .map_err(|_| ContrastError::UnknownSource(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastResult {
    pub instance_id: u64,
    pub contrast: f64,
    pub method: ContrastMethod,
    pub neighbor_count: usize,
    pub focus_source: FocusSource,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationConfig {
    pub method: ContrastMethod,
    threshold: f64,
    pub touch_radius: u32,
    pub focus_source: FocusSource,
    pub postprocess: PostprocessOrder,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        Self {
            method: ContrastMethod::Contrast2,
            threshold: DEFAULT_THRESHOLD,
            touch_radius: DEFAULT_TOUCH_RADIUS,
            focus_source: FocusSource::Label,
            postprocess: PostprocessOrder::FillThenLargest,
        }
    }
}

impl ClassificationConfig {
    pub fn new(method: ContrastMethod, threshold: f64) -> Result<Self, ContrastError> {
        Self::default()
            .with_method(method)
            .with_threshold(threshold)
    }

    pub fn with_method(mut self, method: ContrastMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self, ContrastError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(ContrastError::InvalidThreshold(threshold));
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn with_touch_radius(mut self, touch_radius: u32) -> Self {
        self.touch_radius = touch_radius;
        self
    }

    pub fn with_focus_source(mut self, source: FocusSource) -> Self {
        self.focus_source = source;
        self
    }

    pub fn with_postprocess(mut self, order: PostprocessOrder) -> Self {
        self.postprocess = order;
        self
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// Contrast 1: absolute difference between the instance's focus value and
/// the mean of its neighbours'. Isolated instances get 0.
pub fn contrast1(
    focus_of: &BTreeMap<u64, f64>,
    graph: &AdjacencyGraph,
    id: u64,
) -> Result<ContrastResult, ContrastError> {
    let neighbors = graph.neighbors(id)?;
    let own = *focus_of.get(&id).ok_or(ContrastError::MissingFocus(id))?;
    let mut sum = 0.0;
    for n in neighbors {
        sum += focus_of.get(n).ok_or(ContrastError::MissingFocus(*n))?;
    }
    let contrast = if neighbors.is_empty() {
        0.0
    } else {
        (own - sum / neighbors.len() as f64).abs()
    };
    Ok(ContrastResult {
        instance_id: id,
        contrast,
        method: ContrastMethod::Contrast1,
        neighbor_count: neighbors.len(),
        focus_source: FocusSource::Label,
    })
}

/// Contrast 2: 0 when any neighbour shares the instance's focus level,
/// 1 when neighbours exist and all differ, 0 for isolated instances.
pub fn contrast2(
    focus_of: &BTreeMap<u64, FocusLevel>,
    graph: &AdjacencyGraph,
    id: u64,
) -> Result<ContrastResult, ContrastError> {
    let neighbors = graph.neighbors(id)?;
    let own = *focus_of.get(&id).ok_or(ContrastError::MissingFocus(id))?;
    let mut any_same = false;
    for n in neighbors {
        any_same |= *focus_of.get(n).ok_or(ContrastError::MissingFocus(*n))? == own;
    }
    let contrast = if neighbors.is_empty() || any_same {
        0.0
    } else {
        1.0
    };
    Ok(ContrastResult {
        instance_id: id,
        contrast,
        method: ContrastMethod::Contrast2,
        neighbor_count: neighbors.len(),
        focus_source: FocusSource::Label,
    })
}

/// Continuous focus values in [0, 1] for every instance of `scene`.
///
/// Labels map through [`FocusLevel::value`]; measures are normalized per scene.
/// Instances without a label are simply absent from the map.
pub fn focus_values(
    scene: &Scene,
    image: Option<&GrayImage>,
    source: FocusSource,
) -> Result<BTreeMap<u64, f64>, ContrastError> {
    match source {
        FocusSource::Label => Ok(scene
            .instances()
            .iter()
            .filter_map(|i| i.focus.map(|f| (i.id, f.value())))
            .collect()),
        FocusSource::Measure(measure) => {
            if scene.is_empty() {
                return Ok(BTreeMap::new());
            }
            let image = image.ok_or(ContrastError::ImageRequired(source))?;
            let scored = focusmeas::measure_scene(image, scene, measure)?;
            let scores: Vec<_> = scored.iter().map(|(_, s)| *s).collect();
            let normalized = focusmeas::normalize_scores(&scores)?;
            Ok(scored.iter().map(|(id, _)| *id).zip(normalized).collect())
        }
    }
}

/// Binary focus levels for Contrast 2. Measure values are split at 0.5.
fn focus_levels(values: &BTreeMap<u64, f64>, source: FocusSource) -> BTreeMap<u64, FocusLevel> {
    values
        .iter()
        .map(|(&id, &v)| {
            let level = match source {
                FocusSource::Label if v == FocusLevel::InFocus.value() => FocusLevel::InFocus,
                FocusSource::Label => FocusLevel::OutOfFocus,
                FocusSource::Measure(_) if v >= 0.5 => FocusLevel::InFocus,
                FocusSource::Measure(_) => FocusLevel::OutOfFocus,
            };
            (id, level)
        })
        .collect()
}

/// Contrast for every node of `graph`, in ascending id order.
pub fn contrast_all(
    focus: &BTreeMap<u64, f64>,
    graph: &AdjacencyGraph,
    method: ContrastMethod,
    source: FocusSource,
) -> Result<Vec<ContrastResult>, ContrastError> {
    let levels = match method {
        ContrastMethod::Contrast2 => Some(focus_levels(focus, source)),
        ContrastMethod::Contrast1 => None,
    };
    graph
        .nodes()
        .iter()
        .map(|&id| {
            let r = match &levels {
                Some(levels) => contrast2(levels, graph, id),
                None => contrast1(focus, graph, id),
            }?;
            Ok(ContrastResult {
                focus_source: source,
                ..r
            })
        })
        .collect()
}

/// Post-processes every mask of a scene (hole filling and largest-component
/// preservation in the configured order).
pub fn postprocess_scene(scene: &Scene, order: PostprocessOrder) -> Result<Scene, SceneError> {
    let instances = scene
        .instances()
        .iter()
        .map(|inst| InstanceRecord {
            mask: raster::postprocess(&inst.mask, order),
            ..inst.clone()
        })
        .collect();
    scene.with_instances(instances)
}

/// Everything produced by one classification run.
#[derive(Debug, Clone)]
pub struct Classification {
    pub scene: Scene,
    pub graph: AdjacencyGraph,
    pub contrasts: Vec<ContrastResult>,
}

/// Post-processes masks, builds the adjacency graph, computes contrast focus
/// and labels each instance. An instance is agglomerated iff it has at least
/// one neighbour and its contrast is strictly below the threshold.
///
/// `image` is only needed when the focus source is a measure.
pub fn classify_agglomeration(
    scene: &Scene,
    config: &ClassificationConfig,
    image: Option<&GrayImage>,
) -> Result<Classification, ContrastError> {
    let mut processed = postprocess_scene(scene, config.postprocess)?;
    processed.role = Role::Prediction;
    let graph = graph::build_adjacency(&processed, config.touch_radius);
    if let FocusSource::Label = config.focus_source {
        if let Some(inst) = processed.instances().iter().find(|i| i.focus.is_none()) {
            return Err(ContrastError::MissingFocus(inst.id));
        }
    }
    let focus = focus_values(&processed, image, config.focus_source)?;
    let contrasts = contrast_all(&focus, &graph, config.method, config.focus_source)?;
    let by_id: BTreeMap<u64, &ContrastResult> =
        contrasts.iter().map(|c| (c.instance_id, c)).collect();
    for inst in processed.instances_mut() {
        let c = by_id[&inst.id];
        inst.agglo = Some(if c.neighbor_count >= 1 && c.contrast < config.threshold {
            AggloClass::Agglomerated
        } else {
            AggloClass::NonAgglomerated
        });
    }
    Ok(Classification {
        scene: processed,
        graph,
        contrasts,
    })
}

/// Normalized mean contrast of one ground-truth class under one method.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassContrast {
    pub class: AggloClass,
    pub normalized_mean: f64,
    pub n_instances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSeparation {
    pub method: String,
    pub non_agglomerated: ClassContrast,
    pub agglomerated: ClassContrast,
    /// Largest contrast over all included instances (the normalizer).
    pub max_contrast: f64,
}

impl MethodSeparation {
    /// Non-agglomerated minus agglomerated normalized mean.
    pub fn difference(&self) -> f64 {
        self.non_agglomerated.normalized_mean - self.agglomerated.normalized_mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastReport {
    pub methods: Vec<MethodSeparation>,
}

impl ContrastReport {
    pub fn method(&self, name: &str) -> Option<&MethodSeparation> {
        self.methods.iter().find(|m| m.method == name)
    }

    /// CSV with columns `method,class,normalized_mean_contrast,n_instances`.
    /// Each method contributes a `non` row, an `agg` row and a `difference`
    /// row (non minus agg, counted over both classes).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,class,normalized_mean_contrast,n_instances\n");
        for m in &self.methods {
            for c in [&m.non_agglomerated, &m.agglomerated] {
                out.push_str(&format!(
                    "{},{},{:.6},{}\n",
                    m.method,
                    c.class.as_str(),
                    c.normalized_mean,
                    c.n_instances
                ));
            }
            out.push_str(&format!(
                "{},difference,{:.6},{}\n",
                m.method,
                m.difference(),
                m.non_agglomerated.n_instances + m.agglomerated.n_instances
            ));
        }
        out
    }
}

/// Class-separation table: per method, the mean contrast of each
/// ground-truth class divided by the method's maximum contrast. Instances
/// without neighbours are left out.
///
/// `methods[k].1[s]` holds the contrast results of method `k` on `gt_scenes[s]`.
pub fn contrast_report(
    gt_scenes: &[Scene],
    methods: &[(String, Vec<Vec<ContrastResult>>)],
) -> Result<ContrastReport, ContrastError> {
    let mut out = Vec::with_capacity(methods.len());
    for (name, per_scene) in methods {
        if per_scene.len() != gt_scenes.len() {
            return Err(ContrastError::ReportShape {
                methods: per_scene.len(),
                scenes: gt_scenes.len(),
            });
        }
        let mut samples = Vec::new();
        for (scene, results) in gt_scenes.iter().zip(per_scene) {
            for r in results.iter().filter(|r| r.neighbor_count >= 1) {
                let class = scene
                    .instance(r.instance_id)
                    .and_then(|i| i.agglo)
                    .ok_or(ContrastError::MissingLabel(r.instance_id))?;
                samples.push((class, r.contrast));
            }
        }
        if samples.is_empty() {
            return Err(ContrastError::EmptyReport(name.clone()));
        }
        let max = samples.iter().map(|s| s.1).fold(0.0, f64::max);
        let class_stat = |class: AggloClass| {
            let values: Vec<f64> = samples
                .iter()
                .filter(|s| s.0 == class)
                .map(|s| s.1)
                .collect();
            let mean = if values.is_empty() {
                0.0
            } else {
                values.iter().sum::<f64>() / values.len() as f64
            };
            ClassContrast {
                class,
                normalized_mean: if max > 0.0 { mean / max } else { 0.0 },
                n_instances: values.len(),
            }
        };
        out.push(MethodSeparation {
            method: name.clone(),
            non_agglomerated: class_stat(AggloClass::NonAgglomerated),
            agglomerated: class_stat(AggloClass::Agglomerated),
            max_contrast: max,
        });
    }
    Ok(ContrastReport { methods: out })
}

/// Method names used by [`separation_report`], label methods first.
pub fn separation_methods() -> Vec<String> {
    let mut names = vec!["label-c2".to_string(), "label-c1".to_string()];
    names.extend(Measure::ALL.iter().map(|m| m.name().to_string()));
    names
}

/// Class-separation report over ground-truth scenes and their images.
///
/// The label methods run Contrast 2 and Contrast 1 on the focus labels; each
/// traditional measure is normalized per scene and fed to Contrast 1.
/// Graphs are built on the ground-truth masks as given.
pub fn separation_report(
    scenes: &[(Scene, GrayImage)],
    touch_radius: u32,
) -> Result<ContrastReport, ContrastError> {
    let per_scene = scenes
        .par_iter()
        .map(|(scene, image)| {
            if let Some(inst) = scene.instances().iter().find(|i| i.focus.is_none()) {
                return Err(ContrastError::MissingFocus(inst.id));
            }
            let graph = graph::build_adjacency(scene, touch_radius);
            let labels = focus_values(scene, None, FocusSource::Label)?;
            let mut rows = vec![
                contrast_all(
                    &labels,
                    &graph,
                    ContrastMethod::Contrast2,
                    FocusSource::Label,
                )?,
                contrast_all(
                    &labels,
                    &graph,
                    ContrastMethod::Contrast1,
                    FocusSource::Label,
                )?,
            ];
            for &m in Measure::ALL.iter() {
                let source = FocusSource::Measure(m);
                let values = focus_values(scene, Some(image), source)?;
                rows.push(contrast_all(
                    &values,
                    &graph,
                    ContrastMethod::Contrast1,
                    source,
                )?);
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>, ContrastError>>()?;
    let gt: Vec<Scene> = scenes.iter().map(|(s, _)| s.clone()).collect();
    let methods: Vec<(String, Vec<Vec<ContrastResult>>)> = separation_methods()
        .into_iter()
        .enumerate()
        .map(|(k, name)| (name, per_scene.iter().map(|rows| rows[k].clone()).collect()))
        .collect();
    contrast_report(&gt, &methods)
}
