//! Evaluation of predicted scenes against ground truth.
//!
//! ACC measures agglomeration labels on class-agnostic IoU matches. F1,
//! recall and AP are instance-level and class-aware at IoU >= threshold.
//! Pixel IoU compares per-class unions of masks. Corpus evaluation pools raw
//! counts across scenes before forming ratios.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::interchange::{load_scene, AggloClass, BinaryMask, Scene, SceneError};
use crate::synth::MANIFEST_FILE;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("{role} instance {id} has no agglomeration label")]
    MissingLabel { role: &'static str, id: u64 },
    #[error("missing counterpart files: {0:?}")]
    MissingCounterparts(Vec<String>),
    #[error("no scenes to evaluate")]
    NoScenes,
    #[error("{scene}: {source}")]
    Scene {
        scene: String,
        #[source]
        source: SceneError,
    },
    #[error("{scene}: {source}")]
    InScene {
        scene: String,
        #[source]
        source: Box<MetricsError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown option value `{0}`")]
    UnknownOption(String),
}

/// How per-class quantities are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Average {
    #[default]
    Macro,
    Micro,
}

impl FromStr for Average {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "macro" => Ok(Average::Macro),
            "micro" => Ok(Average::Micro),
            other => Err(MetricsError::UnknownOption(other.to_string())),
        }
    }
}

impl fmt::Display for Average {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Average::Macro => "macro",
            Average::Micro => "micro",
        })
    }
}

/// Denominator of ACC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AccDenominator {
    /// Class-agnostic matched pairs only.
    #[default]
    Matched,
    /// All ground-truth instances; unmatched ones count as wrong.
    Gt,
}

impl FromStr for AccDenominator {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "matched" => Ok(AccDenominator::Matched),
            "gt" => Ok(AccDenominator::Gt),
            other => Err(MetricsError::UnknownOption(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalOptions {
    pub iou_threshold: f64,
    pub average: Average,
    pub acc_denominator: AccDenominator,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            average: Average::Macro,
            acc_denominator: AccDenominator::Matched,
        }
    }
}

fn check_dims(a: (u32, u32), b: (u32, u32)) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::DimensionMismatch(a.0, a.1, b.0, b.1));
    }
    Ok(())
}

fn intersection(a: &BinaryMask, b: &BinaryMask) -> usize {
    match a.bbox().intersect(&b.bbox()) {
        None => 0,
        Some(w) => (w.y_min..=w.y_max)
            .map(|y| {
                (w.x_min..=w.x_max)
                    .filter(|&x| a.get(x, y) && b.get(x, y))
                    .count()
            })
            .sum(),
    }
}

/// `|a ∩ b| / |a ∪ b|`.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricsError> {
    check_dims((a.width(), a.height()), (b.width(), b.height()))?;
    let inter = intersection(a, b);
    Ok(inter as f64 / (a.area() + b.area() - inter) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchPair {
    pub gt_id: u64,
    pub pred_id: u64,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchSet {
    pub pairs: Vec<MatchPair>,
    pub unmatched_gt: Vec<u64>,
    pub unmatched_pred: Vec<u64>,
    pub iou_threshold: f64,
}

fn label(scene: &Scene, role: &'static str, id: u64) -> Result<AggloClass, MetricsError> {
    scene
        .instance(id)
        .and_then(|i| i.agglo)
        .ok_or(MetricsError::MissingLabel { role, id })
}

fn require_labels(scene: &Scene, role: &'static str) -> Result<(), MetricsError> {
    match scene.instances().iter().find(|i| i.agglo.is_none()) {
        Some(i) => Err(MetricsError::MissingLabel { role, id: i.id }),
        None => Ok(()),
    }
}

/// Every (gt, pred) pair with IoU at or above `threshold`, optionally
/// restricted to equal agglomeration classes.
pub fn candidate_pairs(
    gt: &Scene,
    pred: &Scene,
    threshold: f64,
    class_aware: bool,
) -> Result<Vec<MatchPair>, MetricsError> {
    check_dims((gt.width(), gt.height()), (pred.width(), pred.height()))?;
    if class_aware {
        require_labels(gt, "gt")?;
        require_labels(pred, "pred")?;
    }
    let mut out = Vec::new();
    for g in gt.instances() {
        for p in pred.instances() {
            if class_aware && g.agglo != p.agglo {
                continue;
            }
            let iou = mask_iou(&g.mask, &p.mask)?;
            if iou >= threshold && iou > 0.0 {
                out.push(MatchPair {
                    gt_id: g.id,
                    pred_id: p.id,
                    iou,
                });
            }
        }
    }
    Ok(out)
}

/// Greedy one-to-one matching: candidates sorted by IoU descending, ties by
/// `(gt_id, pred_id)` ascending; each id is used at most once.
pub fn match_instances(
    gt: &Scene,
    pred: &Scene,
    iou_threshold: f64,
    class_aware: bool,
) -> Result<MatchSet, MetricsError> {
    let mut cands = candidate_pairs(gt, pred, iou_threshold, class_aware)?;
    cands.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.gt_id.cmp(&b.gt_id))
            .then(a.pred_id.cmp(&b.pred_id))
    });
    let mut used_gt = BTreeSet::new();
    let mut used_pred = BTreeSet::new();
    let mut pairs = Vec::new();
    for c in cands {
        if used_gt.contains(&c.gt_id) || used_pred.contains(&c.pred_id) {
            continue;
        }
        used_gt.insert(c.gt_id);
        used_pred.insert(c.pred_id);
        pairs.push(c);
    }
    let mut unmatched_gt: Vec<u64> = gt
        .instances()
        .iter()
        .map(|i| i.id)
        .filter(|id| !used_gt.contains(id))
        .collect();
    let mut unmatched_pred: Vec<u64> = pred
        .instances()
        .iter()
        .map(|i| i.id)
        .filter(|id| !used_pred.contains(id))
        .collect();
    unmatched_gt.sort_unstable();
    unmatched_pred.sort_unstable();
    Ok(MatchSet {
        pairs,
        unmatched_gt,
        unmatched_pred,
        iou_threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Accuracy {
    pub acc: f64,
    pub matched: usize,
    pub agreeing: usize,
    pub gt_instances: usize,
    /// Set when no pair matched (ACC reported as 0).
    pub no_matches: bool,
}

fn accuracy_from_counts(
    agreeing: usize,
    matched: usize,
    gt_instances: usize,
    denominator: AccDenominator,
) -> Accuracy {
    let denom = match denominator {
        AccDenominator::Matched => matched,
        AccDenominator::Gt => gt_instances,
    };
    Accuracy {
        acc: if denom == 0 {
            0.0
        } else {
            agreeing as f64 / denom as f64
        },
        matched,
        agreeing,
        gt_instances,
        no_matches: matched == 0,
    }
}

fn accuracy_counts(
    gt: &Scene,
    pred: &Scene,
    threshold: f64,
) -> Result<(usize, usize), MetricsError> {
    let m = match_instances(gt, pred, threshold, false)?;
    let mut agree = 0;
    for p in &m.pairs {
        if label(gt, "gt", p.gt_id)? == label(pred, "pred", p.pred_id)? {
            agree += 1;
        }
    }
    Ok((agree, m.pairs.len()))
}

/// Share of class-agnostic IoU >= 0.5 matches whose agglomeration labels agree.
pub fn agglomeration_accuracy(gt: &Scene, pred: &Scene) -> Result<Accuracy, MetricsError> {
    let (agree, matched) = accuracy_counts(gt, pred, DEFAULT_IOU_THRESHOLD)?;
    Ok(accuracy_from_counts(
        agree,
        matched,
        gt.len(),
        AccDenominator::Matched,
    ))
}

/// Detection counts for one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    fn add(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    /// Zero denominators give 1 when the class is absent from both sides, else 0.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp, self.absent())
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_, self.absent())
    }

    pub fn f1(&self) -> f64 {
        harmonic(self.precision(), self.recall())
    }

    fn absent(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }
}

fn ratio(num: usize, den: usize, absent: bool) -> f64 {
    if den == 0 {
        if absent {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn class_index(c: AggloClass) -> usize {
    match c {
        AggloClass::NonAgglomerated => 0,
        AggloClass::Agglomerated => 1,
    }
}

fn detection_counts(gt: &Scene, pred: &Scene, threshold: f64) -> Result<[Counts; 2], MetricsError> {
    let m = match_instances(gt, pred, threshold, true)?;
    let mut counts = [Counts::default(); 2];
    for p in &m.pairs {
        counts[class_index(label(gt, "gt", p.gt_id)?)].tp += 1;
    }
    for &id in &m.unmatched_gt {
        counts[class_index(label(gt, "gt", id)?)].fn_ += 1;
    }
    for &id in &m.unmatched_pred {
        counts[class_index(label(pred, "pred", id)?)].fp += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn prf_from_counts(counts: &[Counts; 2], average: Average) -> Prf {
    match average {
        Average::Macro => {
            let p = counts.iter().map(Counts::precision).sum::<f64>() / 2.0;
            let r = counts.iter().map(Counts::recall).sum::<f64>() / 2.0;
            let f = counts.iter().map(Counts::f1).sum::<f64>() / 2.0;
            Prf {
                precision: p,
                recall: r,
                f1: f,
            }
        }
        Average::Micro => {
            let mut total = Counts::default();
            counts.iter().for_each(|c| total.add(*c));
            Prf {
                precision: total.precision(),
                recall: total.recall(),
                f1: total.f1(),
            }
        }
    }
}

/// Class-aware precision, recall and F1 at IoU >= 0.5, macro-averaged over
/// the two agglomeration classes (F1 is the mean of per-class F1).
pub fn detection_prf(gt: &Scene, pred: &Scene) -> Result<Prf, MetricsError> {
    let counts = detection_counts(gt, pred, DEFAULT_IOU_THRESHOLD)?;
    Ok(prf_from_counts(&counts, Average::Macro))
}

/// Per-class pixel intersection and union sizes.
fn pixel_counts(gt: &Scene, pred: &Scene) -> Result<[(usize, usize); 2], MetricsError> {
    check_dims((gt.width(), gt.height()), (pred.width(), pred.height()))?;
    require_labels(gt, "gt")?;
    require_labels(pred, "pred")?;
    let n = gt.width() as usize * gt.height() as usize;
    let mut out = [(0, 0); 2];
    for class in AggloClass::ALL {
        let union_of = |scene: &Scene| {
            let mut bits = vec![false; n];
            for inst in scene.instances().iter().filter(|i| i.agglo == Some(class)) {
                for (x, y) in inst.mask.pixels() {
                    bits[y as usize * gt.width() as usize + x as usize] = true;
                }
            }
            bits
        };
        let (g, p) = (union_of(gt), union_of(pred));
        let inter = g.iter().zip(&p).filter(|(a, b)| **a && **b).count();
        let uni = g.iter().zip(&p).filter(|(a, b)| **a || **b).count();
        out[class_index(class)] = (inter, uni);
    }
    Ok(out)
}

fn pixel_iou_from_counts(counts: &[(usize, usize); 2], average: Average) -> f64 {
    match average {
        Average::Macro => {
            let present: Vec<f64> = counts
                .iter()
                .filter(|(_, u)| *u > 0)
                .map(|&(i, u)| i as f64 / u as f64)
                .collect();
            if present.is_empty() {
                1.0
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            }
        }
        Average::Micro => {
            let (i, u) = counts
                .iter()
                .fold((0, 0), |acc, &(i, u)| (acc.0 + i, acc.1 + u));
            if u == 0 {
                1.0
            } else {
                i as f64 / u as f64
            }
        }
    }
}

/// Per class, IoU of the union of ground-truth masks with the union of
/// predicted masks; averaged over classes present on either side.
pub fn pixel_iou(gt: &Scene, pred: &Scene) -> Result<f64, MetricsError> {
    Ok(pixel_iou_from_counts(
        &pixel_counts(gt, pred)?,
        Average::Macro,
    ))
}

/// One prediction in the AP sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Ranked {
    score: f64,
    scene: usize,
    pred_id: u64,
    class: AggloClass,
    tp: bool,
}

/// Marks predictions of one scene as TP/FP in score order. Each prediction
/// takes the unused same-class ground truth with the highest IoU.
fn rank_scene(
    gt: &Scene,
    pred: &Scene,
    threshold: f64,
    scene: usize,
) -> Result<(Vec<Ranked>, [usize; 2], usize), MetricsError> {
    check_dims((gt.width(), gt.height()), (pred.width(), pred.height()))?;
    require_labels(gt, "gt")?;
    require_labels(pred, "pred")?;
    let mut unscored = 0;
    let mut order: Vec<(f64, u64)> = pred
        .instances()
        .iter()
        .map(|p| {
            let s = p.score.unwrap_or_else(|| {
                unscored += 1;
                1.0
            });
            (s, p.id)
        })
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut used = BTreeSet::new();
    let mut ranked = Vec::with_capacity(order.len());
    for (score, pid) in order {
        let p = pred.instance(pid).expect("id from scene");
        let class = p.agglo.expect("labels checked");
        let mut best: Option<(f64, u64)> = None;
        for g in gt.instances() {
            if g.agglo != Some(class) || used.contains(&g.id) {
                continue;
            }
            let iou = mask_iou(&g.mask, &p.mask)?;
            if iou >= threshold && iou > 0.0 {
                let better = match best {
                    None => true,
                    Some((bi, bid)) => iou > bi || (iou == bi && g.id < bid),
                };
                if better {
                    best = Some((iou, g.id));
                }
            }
        }
        if let Some((_, gid)) = best {
            used.insert(gid);
        }
        ranked.push(Ranked {
            score,
            scene,
            pred_id: pid,
            class,
            tp: best.is_some(),
        });
    }
    let mut n_gt = [0usize; 2];
    for g in gt.instances() {
        n_gt[class_index(g.agglo.expect("labels checked"))] += 1;
    }
    Ok((ranked, n_gt, unscored))
}

/// All-points interpolated AP of a ranked list (already sorted by score).
fn ap_of(ranked: &[&Ranked], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return if ranked.is_empty() { 1.0 } else { 0.0 };
    }
    let mut precision = Vec::with_capacity(ranked.len());
    let mut tp = 0usize;
    for (i, r) in ranked.iter().enumerate() {
        tp += r.tp as usize;
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    ranked
        .iter()
        .zip(&precision)
        .filter(|(r, _)| r.tp)
        .map(|(_, p)| p)
        .sum::<f64>()
        / n_gt as f64
}

fn sort_ranked(ranked: &mut [Ranked]) {
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.scene.cmp(&b.scene))
            .then(a.pred_id.cmp(&b.pred_id))
    });
}

fn ap_from_ranked(ranked: &[Ranked], n_gt: [usize; 2], average: Average) -> [f64; 3] {
    let per_class = |c: AggloClass| {
        let list: Vec<&Ranked> = ranked.iter().filter(|r| r.class == c).collect();
        ap_of(&list, n_gt[class_index(c)])
    };
    let non = per_class(AggloClass::NonAgglomerated);
    let agg = per_class(AggloClass::Agglomerated);
    let combined = match average {
        Average::Macro => (non + agg) / 2.0,
        Average::Micro => ap_of(&ranked.iter().collect::<Vec<_>>(), n_gt[0] + n_gt[1]),
    };
    [combined, non, agg]
}

/// Class-aware AP at IoU >= 0.5, macro-averaged. Predictions without a score
/// count as score 1.0.
pub fn average_precision(gt: &Scene, pred: &Scene) -> Result<f64, MetricsError> {
    let (mut ranked, n_gt, unscored) = rank_scene(gt, pred, DEFAULT_IOU_THRESHOLD, 0)?;
    if unscored > 0 {
        warn!("{unscored} predictions without a score; using 1.0");
    }
    sort_ranked(&mut ranked);
    Ok(ap_from_ranked(&ranked, n_gt, Average::Macro)[0])
}

/// Raw counts of one scene, poolable across a corpus.
#[derive(Debug, Clone)]
struct Partial {
    agree: usize,
    matched: usize,
    gt_instances: usize,
    counts: [Counts; 2],
    pixels: [(usize, usize); 2],
    ranked: Vec<Ranked>,
    n_gt: [usize; 2],
    unscored: usize,
}

fn partial(
    gt: &Scene,
    pred: &Scene,
    scene: usize,
    opts: &EvalOptions,
) -> Result<Partial, MetricsError> {
    let (agree, matched) = accuracy_counts(gt, pred, opts.iou_threshold)?;
    let counts = detection_counts(gt, pred, opts.iou_threshold)?;
    let pixels = pixel_counts(gt, pred)?;
    let (ranked, n_gt, unscored) = rank_scene(gt, pred, opts.iou_threshold, scene)?;
    Ok(Partial {
        agree,
        matched,
        gt_instances: gt.len(),
        counts,
        pixels,
        ranked,
        n_gt,
        unscored,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: &'static str,
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
    pub pixel_iou: f64,
    pub gt_instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneMetrics {
    pub name: String,
    pub acc: f64,
    pub f1: f64,
    pub pixel_iou: f64,
    pub ap: f64,
    pub recall: f64,
    pub matched: usize,
    pub gt_instances: usize,
    pub pred_instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub acc: f64,
    pub f1: f64,
    pub pixel_iou: f64,
    pub ap: f64,
    pub recall: f64,
    pub precision: f64,
    pub accuracy: Accuracy,
    pub per_class: Vec<ClassMetrics>,
    pub per_scene: Vec<SceneMetrics>,
    pub options: EvalOptions,
    pub unscored_predictions: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Per-scene CSV: `scene,acc,f1,pixel_iou,ap,recall,matched,gt_instances,pred_instances`.
    pub fn per_scene_csv(&self) -> String {
        let mut out =
            String::from("scene,acc,f1,pixel_iou,ap,recall,matched,gt_instances,pred_instances\n");
        for s in &self.per_scene {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{}\n",
                s.name,
                s.acc,
                s.f1,
                s.pixel_iou,
                s.ap,
                s.recall,
                s.matched,
                s.gt_instances,
                s.pred_instances
            ));
        }
        out
    }
}

/// Accuracy, P/R/F1, pixel IoU, AP (per class and overall), counts, pixel sums.
type Summary = (
    Accuracy,
    Prf,
    f64,
    [f64; 3],
    [Counts; 2],
    [(usize, usize); 2],
);

fn summarize(parts: &[&Partial], opts: &EvalOptions) -> Summary {
    let mut counts = [Counts::default(); 2];
    let mut pixels = [(0usize, 0usize); 2];
    let mut n_gt = [0usize; 2];
    let (mut agree, mut matched, mut gt_instances) = (0, 0, 0);
    let mut ranked = Vec::new();
    for p in parts {
        agree += p.agree;
        matched += p.matched;
        gt_instances += p.gt_instances;
        for c in 0..2 {
            counts[c].add(p.counts[c]);
            pixels[c].0 += p.pixels[c].0;
            pixels[c].1 += p.pixels[c].1;
            n_gt[c] += p.n_gt[c];
        }
        ranked.extend_from_slice(&p.ranked);
    }
    sort_ranked(&mut ranked);
    let acc = accuracy_from_counts(agree, matched, gt_instances, opts.acc_denominator);
    let prf = prf_from_counts(&counts, opts.average);
    let piou = pixel_iou_from_counts(&pixels, opts.average);
    let ap = ap_from_ranked(&ranked, n_gt, opts.average);
    (acc, prf, piou, ap, counts, pixels)
}

/// Evaluates named (ground truth, prediction) pairs, pooling counts over all
/// of them. Per-scene work runs in parallel; pooling is sequential in input order.
pub fn evaluate_scenes(
    pairs: &[(String, Scene, Scene)],
    opts: &EvalOptions,
) -> Result<EvalReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::NoScenes);
    }
    let partials = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (name, gt, pred))| {
            partial(gt, pred, i, opts).map_err(|e| MetricsError::InScene {
                scene: name.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let all: Vec<&Partial> = partials.iter().collect();
    let (accuracy, prf, piou, ap, counts, pixels) = summarize(&all, opts);
    let unscored: usize = partials.iter().map(|p| p.unscored).sum();
    if unscored > 0 {
        warn!("{unscored} predictions without a score; using 1.0");
    }
    let per_class = AggloClass::ALL
        .iter()
        .map(|&c| {
            let i = class_index(c);
            ClassMetrics {
                class: c.as_str(),
                counts: counts[i],
                precision: counts[i].precision(),
                recall: counts[i].recall(),
                f1: counts[i].f1(),
                ap: ap[1 + i],
                pixel_iou: if pixels[i].1 == 0 {
                    1.0
                } else {
                    pixels[i].0 as f64 / pixels[i].1 as f64
                },
                gt_instances: counts[i].tp + counts[i].fn_,
            }
        })
        .collect();
    let per_scene = pairs
        .iter()
        .zip(&partials)
        .map(|((name, gt, pred), p)| {
            let (a, prf, piou, ap, _, _) = summarize(&[p], opts);
            SceneMetrics {
                name: name.clone(),
                acc: a.acc,
                f1: prf.f1,
                pixel_iou: piou,
                ap: ap[0],
                recall: prf.recall,
                matched: a.matched,
                gt_instances: gt.len(),
                pred_instances: pred.len(),
            }
        })
        .collect();
    Ok(EvalReport {
        acc: accuracy.acc,
        f1: prf.f1,
        pixel_iou: piou,
        ap: ap[0],
        recall: prf.recall,
        precision: prf.precision,
        accuracy,
        per_class,
        per_scene,
        options: *opts,
        unscored_predictions: unscored,
    })
}

/// Scene files (`*.json`, manifest excluded) in `dir`, sorted by name.
pub fn scene_files(dir: &Path) -> Result<Vec<String>, MetricsError> {
    let entries = fs::read_dir(dir).map_err(|source| MetricsError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut names = Vec::new();
    for e in entries {
        let e = e.map_err(|source| MetricsError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let name = e.file_name().to_string_lossy().into_owned();
        if name.ends_with(".json") && name != MANIFEST_FILE && e.path().is_file() {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Evaluates every scene file of `gt_dir` against the same-named file in `pred_dir`.
pub fn evaluate_corpus(
    gt_dir: impl AsRef<Path>,
    pred_dir: impl AsRef<Path>,
    opts: &EvalOptions,
) -> Result<EvalReport, MetricsError> {
    let (gt_dir, pred_dir) = (gt_dir.as_ref(), pred_dir.as_ref());
    let gt_names = scene_files(gt_dir)?;
    let pred_names = scene_files(pred_dir)?;
    let gt_set: BTreeSet<&String> = gt_names.iter().collect();
    let pred_set: BTreeSet<&String> = pred_names.iter().collect();
    let mut missing: Vec<String> = gt_set
        .difference(&pred_set)
        .map(|n| pred_dir.join(n).display().to_string())
        .collect();
    missing.extend(
        pred_set
            .difference(&gt_set)
            .map(|n| gt_dir.join(n).display().to_string()),
    );
    if !missing.is_empty() {
        return Err(MetricsError::MissingCounterparts(missing));
    }
    let pairs = gt_names
        .par_iter()
        .map(|name| {
            let wrap = |source| MetricsError::Scene {
                scene: name.clone(),
                source,
            };
            let gt = load_scene(gt_dir.join(name)).map_err(wrap)?;
            let pred = load_scene(pred_dir.join(name)).map_err(wrap)?;
            Ok((name.clone(), gt, pred))
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    evaluate_scenes(&pairs, opts)
}
