//! Brute-force reference implementations used as test oracles.
//!
//! Everything here works on plain pixel sets and dense grids, walks every
//! pixel, and avoids the library's bounding-box shortcuts.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet, VecDeque};

use agglofocus::interchange::{AggloClass, BinaryMask, Scene};

pub type Pixels = HashSet<(u32, u32)>;

pub fn pixel_set(mask: &BinaryMask) -> Pixels {
    let mut out = HashSet::new();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                out.insert((x, y));
            }
        }
    }
    out
}

fn grid(mask: &BinaryMask) -> Vec<Vec<bool>> {
    (0..mask.height())
        .map(|y| (0..mask.width()).map(|x| mask.get(x, y)).collect())
        .collect()
}

fn to_mask(g: &[Vec<bool>]) -> Vec<bool> {
    g.iter().flatten().copied().collect()
}

/// Background not 4-connected to the image border becomes foreground.
pub fn fill_holes(mask: &BinaryMask) -> Vec<bool> {
    let g = grid(mask);
    let (h, w) = (g.len(), g[0].len());
    let mut outside = vec![vec![false; w]; h];
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            let border = x == 0 || y == 0 || x == w - 1 || y == h - 1;
            if border && !g[y][x] {
                outside[y][x] = true;
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        let mut next = Vec::new();
        if x > 0 {
            next.push((x - 1, y));
        }
        if y > 0 {
            next.push((x, y - 1));
        }
        if x + 1 < w {
            next.push((x + 1, y));
        }
        if y + 1 < h {
            next.push((x, y + 1));
        }
        for (nx, ny) in next {
            if !g[ny][nx] && !outside[ny][nx] {
                outside[ny][nx] = true;
                queue.push_back((nx, ny));
            }
        }
    }
    let filled: Vec<Vec<bool>> = (0..h)
        .map(|y| (0..w).map(|x| g[y][x] || !outside[y][x]).collect())
        .collect();
    to_mask(&filled)
}

/// Largest 8-connected component; ties go to the component holding the
/// row-major-first pixel. Components are found by repeated union of
/// neighbouring labels until nothing changes.
pub fn largest_component(mask: &BinaryMask) -> Vec<bool> {
    let g = grid(mask);
    let (h, w) = (g.len(), g[0].len());
    let mut label: Vec<Vec<usize>> = (0..h)
        .map(|y| (0..w).map(|x| y * w + x).collect())
        .collect();
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                if !g[y][x] {
                    continue;
                }
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if g[ny][nx] && label[ny][nx] < label[y][x] {
                            label[y][x] = label[ny][nx];
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    // the final label of a component is the row-major index of its first pixel
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for y in 0..h {
        for x in 0..w {
            if g[y][x] {
                *sizes.entry(label[y][x]).or_default() += 1;
            }
        }
    }
    let best = sizes
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(l, _)| *l);
    (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| g[y][x] && Some(label[y][x]) == best)
        .collect()
}

pub fn component_count(mask: &BinaryMask) -> usize {
    let mut remaining = pixel_set(mask);
    let mut n = 0;
    while let Some(&seed) = remaining.iter().next() {
        n += 1;
        let mut stack = vec![seed];
        remaining.remove(&seed);
        while let Some((x, y)) = stack.pop() {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 {
                        continue;
                    }
                    let p = (nx as u32, ny as u32);
                    if remaining.remove(&p) {
                        stack.push(p);
                    }
                }
            }
        }
    }
    n
}

/// Pixels within Chebyshev distance `r` of the mask, clipped to the image.
pub fn dilate(mask: &BinaryMask, r: u32) -> Vec<bool> {
    let set = pixel_set(mask);
    let (w, h) = (mask.width(), mask.height());
    (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            set.iter()
                .any(|&(px, py)| px.abs_diff(x) <= r && py.abs_diff(y) <= r)
        })
        .collect()
}

/// Mask pixels with a 4-neighbour outside the mask or off the image.
pub fn contour(mask: &BinaryMask) -> Pixels {
    let set = pixel_set(mask);
    let (w, h) = (mask.width(), mask.height());
    set.iter()
        .copied()
        .filter(|&(x, y)| {
            x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || !set.contains(&(x - 1, y))
                || !set.contains(&(x + 1, y))
                || !set.contains(&(x, y - 1))
                || !set.contains(&(x, y + 1))
        })
        .collect()
}

pub fn chebyshev_gap(a: &Pixels, b: &Pixels) -> u32 {
    let mut best = u32::MAX;
    for p in a {
        for q in b {
            best = best.min(p.0.abs_diff(q.0).max(p.1.abs_diff(q.1)));
        }
    }
    best
}

// ---------------------------------------------------------------- metrics

pub fn iou(a: &Pixels, b: &Pixels) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone)]
pub struct Inst {
    pub id: u64,
    pub pixels: Pixels,
    pub class: AggloClass,
    pub score: f64,
}

pub fn insts(scene: &Scene) -> Vec<Inst> {
    scene
        .instances()
        .iter()
        .map(|i| Inst {
            id: i.id,
            pixels: pixel_set(&i.mask),
            class: i.agglo.expect("labelled"),
            score: i.score.unwrap_or(1.0),
        })
        .collect()
}

/// Edge of the bipartite candidate graph.
#[derive(Debug, Clone, Copy)]
struct Edge {
    g: usize,
    p: usize,
    iou: f64,
    gid: u64,
    pid: u64,
}

/// Matching chosen among every valid one-to-one assignment by exhaustive
/// enumeration: with edges ranked by (IoU desc, gt id, pred id), the winner is
/// the matching whose membership vector over that ranking is
/// lexicographically largest.
pub fn exhaustive_matching(
    gt: &[Inst],
    pred: &[Inst],
    thr: f64,
    class_aware: bool,
) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for (g, gi) in gt.iter().enumerate() {
        for (p, pi) in pred.iter().enumerate() {
            if class_aware && gi.class != pi.class {
                continue;
            }
            let v = iou(&gi.pixels, &pi.pixels);
            if v >= thr && v > 0.0 {
                edges.push(Edge {
                    g,
                    p,
                    iou: v,
                    gid: gi.id,
                    pid: pi.id,
                });
            }
        }
    }
    edges.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.gid.cmp(&b.gid))
            .then(a.pid.cmp(&b.pid))
    });
    let mut best: Option<Vec<bool>> = None;
    let mut current = vec![false; edges.len()];
    enumerate(
        &edges,
        0,
        &mut current,
        &mut Vec::new(),
        &mut Vec::new(),
        &mut best,
    );
    let chosen = best.unwrap_or_default();
    edges
        .iter()
        .zip(chosen)
        .filter(|(_, c)| *c)
        .map(|(e, _)| (e.g, e.p))
        .collect()
}

fn enumerate(
    edges: &[Edge],
    i: usize,
    current: &mut Vec<bool>,
    used_g: &mut Vec<usize>,
    used_p: &mut Vec<usize>,
    best: &mut Option<Vec<bool>>,
) {
    if i == edges.len() {
        if best.as_ref().is_none_or(|b| *current > *b) {
            *best = Some(current.clone());
        }
        return;
    }
    let e = edges[i];
    if !used_g.contains(&e.g) && !used_p.contains(&e.p) {
        current[i] = true;
        used_g.push(e.g);
        used_p.push(e.p);
        enumerate(edges, i + 1, current, used_g, used_p, best);
        used_g.pop();
        used_p.pop();
        current[i] = false;
    }
    enumerate(edges, i + 1, current, used_g, used_p, best);
}

/// Reference corpus scores, pooled over all scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefScores {
    pub acc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub pixel_iou: f64,
    pub ap: f64,
}

fn safe_ratio(num: usize, den: usize, absent: bool) -> f64 {
    match (den, absent) {
        (0, true) => 1.0,
        (0, false) => 0.0,
        _ => num as f64 / den as f64,
    }
}

/// Macro-averaged reference metrics at IoU >= `thr` with ACC over matched pairs.
pub fn reference_scores(pairs: &[(Scene, Scene)], thr: f64) -> RefScores {
    let classes = AggloClass::ALL;
    let (mut agree, mut matched) = (0usize, 0usize);
    let mut tp = [0usize; 2];
    let mut fp = [0usize; 2];
    let mut fn_ = [0usize; 2];
    let mut inter = [0usize; 2];
    let mut union = [0usize; 2];
    // (score, scene, pred id, is tp) per class
    let mut sweep: [Vec<(f64, usize, u64, bool)>; 2] = [Vec::new(), Vec::new()];
    let mut n_gt = [0usize; 2];

    for (s, (gt_scene, pred_scene)) in pairs.iter().enumerate() {
        let gt = insts(gt_scene);
        let pred = insts(pred_scene);

        for (g, p) in exhaustive_matching(&gt, &pred, thr, false) {
            matched += 1;
            agree += (gt[g].class == pred[p].class) as usize;
        }

        let m = exhaustive_matching(&gt, &pred, thr, true);
        for (k, &c) in classes.iter().enumerate() {
            let t = m.iter().filter(|(g, _)| gt[*g].class == c).count();
            tp[k] += t;
            fn_[k] += gt.iter().filter(|i| i.class == c).count() - t;
            fp[k] += pred.iter().filter(|i| i.class == c).count() - t;

            let gu: Pixels = gt
                .iter()
                .filter(|i| i.class == c)
                .flat_map(|i| i.pixels.iter().copied())
                .collect();
            let pu: Pixels = pred
                .iter()
                .filter(|i| i.class == c)
                .flat_map(|i| i.pixels.iter().copied())
                .collect();
            inter[k] += gu.intersection(&pu).count();
            union[k] += gu.union(&pu).count();
            n_gt[k] += gt.iter().filter(|i| i.class == c).count();

            // AP: predictions in score order claim the best free ground truth
            let mut order: Vec<&Inst> = pred.iter().filter(|i| i.class == c).collect();
            order.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
            let mut taken: HashSet<u64> = HashSet::new();
            for p in order {
                let mut best: Option<(f64, u64)> = None;
                for g in gt.iter().filter(|g| g.class == c && !taken.contains(&g.id)) {
                    let v = iou(&g.pixels, &p.pixels);
                    if v >= thr && v > 0.0 {
                        let better = match best {
                            None => true,
                            Some((bv, bid)) => v > bv || (v == bv && g.id < bid),
                        };
                        if better {
                            best = Some((v, g.id));
                        }
                    }
                }
                if let Some((_, gid)) = best {
                    taken.insert(gid);
                }
                sweep[k].push((p.score, s, p.id, best.is_some()));
            }
        }
    }

    let mut p_k = [0.0; 2];
    let mut r_k = [0.0; 2];
    let mut f_k = [0.0; 2];
    let mut iou_present = Vec::new();
    let mut ap_k = [0.0; 2];
    for k in 0..2 {
        let absent = tp[k] + fp[k] + fn_[k] == 0;
        p_k[k] = safe_ratio(tp[k], tp[k] + fp[k], absent);
        r_k[k] = safe_ratio(tp[k], tp[k] + fn_[k], absent);
        f_k[k] = if p_k[k] + r_k[k] == 0.0 {
            0.0
        } else {
            2.0 * p_k[k] * r_k[k] / (p_k[k] + r_k[k])
        };
        if union[k] > 0 {
            iou_present.push(inter[k] as f64 / union[k] as f64);
        }
        ap_k[k] = ap_sum_of_steps(&mut sweep[k], n_gt[k]);
    }
    RefScores {
        acc: if matched == 0 {
            0.0
        } else {
            agree as f64 / matched as f64
        },
        f1: (f_k[0] + f_k[1]) / 2.0,
        precision: (p_k[0] + p_k[1]) / 2.0,
        recall: (r_k[0] + r_k[1]) / 2.0,
        pixel_iou: if iou_present.is_empty() {
            1.0
        } else {
            iou_present.iter().sum::<f64>() / iou_present.len() as f64
        },
        ap: (ap_k[0] + ap_k[1]) / 2.0,
    }
}

/// AP as the sum over recall steps of the best precision at that recall or beyond.
fn ap_sum_of_steps(list: &mut [(f64, usize, u64, bool)], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return if list.is_empty() { 1.0 } else { 0.0 };
    }
    list.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut points = Vec::new();
    let mut tp = 0;
    for (i, e) in list.iter().enumerate() {
        tp += e.3 as usize;
        points.push((tp as f64 / n_gt as f64, tp as f64 / (i + 1) as f64));
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (i, &(recall, _)) in points.iter().enumerate() {
        if recall > prev_recall {
            let best = points[i..].iter().map(|p| p.1).fold(0.0, f64::max);
            ap += (recall - prev_recall) * best;
            prev_recall = recall;
        }
    }
    ap
}

// ---------------------------------------------------------- random scenes

use agglofocus::interchange::{InstanceRecord, Role};
use rand::seq::SliceRandom;
use rand::Rng;

fn rect_mask<R: Rng>(rng: &mut R, w: u32, h: u32) -> BinaryMask {
    let x0 = rng.gen_range(0..w);
    let y0 = rng.gen_range(0..h);
    let x1 = rng.gen_range(x0..w.min(x0 + 7));
    let y1 = rng.gen_range(y0..h.min(y0 + 7));
    BinaryMask::from_fn(w, h, |x, y| x >= x0 && x <= x1 && y >= y0 && y <= y1).unwrap()
}

/// Copy of `m` shifted by up to one pixel with a few pixels toggled.
fn jitter<R: Rng>(rng: &mut R, m: &BinaryMask) -> BinaryMask {
    let (w, h) = (m.width(), m.height());
    let dx = rng.gen_range(-1i64..=1);
    let dy = rng.gen_range(-1i64..=1);
    let flips: Vec<(u32, u32)> = (0..rng.gen_range(0..4))
        .map(|_| (rng.gen_range(0..w), rng.gen_range(0..h)))
        .collect();
    let bits: Vec<bool> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| m.get_signed(x as i64 - dx, y as i64 - dy) ^ flips.contains(&(x, y)))
        .collect();
    BinaryMask::new(w, h, bits).unwrap_or_else(|_| m.clone())
}

fn random_class<R: Rng>(rng: &mut R) -> AggloClass {
    if rng.gen_bool(0.5) {
        AggloClass::Agglomerated
    } else {
        AggloClass::NonAgglomerated
    }
}

/// Ground truth and prediction with at most `max_n` instances each. Scores
/// come from a small set so ties occur; some predictions copy a ground-truth
/// mask exactly so IoU ties occur too.
pub fn random_pair<R: Rng>(rng: &mut R, max_n: usize) -> (Scene, Scene) {
    let w = rng.gen_range(8..=16);
    let h = rng.gen_range(8..=16);
    let mut ids: Vec<u64> = (0..40).collect();
    ids.shuffle(rng);
    let n_gt = rng.gen_range(0..=max_n);
    let gt: Vec<InstanceRecord> = (0..n_gt)
        .map(|i| InstanceRecord::new(ids[i], rect_mask(rng, w, h)).with_agglo(random_class(rng)))
        .collect();
    ids.shuffle(rng);
    let n_pred = rng.gen_range(0..=max_n);
    let pred: Vec<InstanceRecord> = (0..n_pred)
        .map(|i| {
            let mask = if !gt.is_empty() && rng.gen_bool(0.75) {
                let src = &gt[rng.gen_range(0..gt.len())].mask;
                if rng.gen_bool(0.3) {
                    src.clone()
                } else {
                    jitter(rng, src)
                }
            } else {
                rect_mask(rng, w, h)
            };
            let class = if rng.gen_bool(0.3) {
                random_class(rng)
            } else {
                AggloClass::Agglomerated
            };
            let mut r = InstanceRecord::new(ids[i], mask).with_agglo(class);
            r.score = [
                None,
                Some(0.25),
                Some(0.5),
                Some(0.5),
                Some(0.75),
                Some(1.0),
            ]
            .choose(rng)
            .copied()
            .flatten();
            r
        })
        .collect();
    (
        Scene::new(w, h, Role::GroundTruth, gt).unwrap(),
        Scene::new(w, h, Role::Prediction, pred).unwrap(),
    )
}
