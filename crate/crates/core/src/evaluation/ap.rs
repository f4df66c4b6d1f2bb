use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detector::{BoundingBox, Detection};

/// A labelled ground-truth box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub class: usize,
    pub bbox: BoundingBox,
}

/// Intersection over union; zero when the union is empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    /// AP per class that has at least one ground-truth box.
    pub per_class: BTreeMap<usize, f64>,
    /// Mean over `per_class`; zero when there is no ground truth at all.
    pub mean: f64,
}

/// Average precision with greedy matching at `iou_threshold`.
///
/// Per class, detections are ranked by score (ties: earlier frame, then
/// earlier position in the frame). Each takes the unmatched ground-truth box
/// of its class in the same frame with the highest IoU, if that IoU reaches
/// the threshold. AP is the area under the precision-recall curve with
/// precision made monotone from the right (all-point interpolation).
pub fn average_precision(
    detections: &[Vec<Detection>],
    truth: &[Vec<GroundTruthBox>],
    iou_threshold: f64,
) -> ApReport {
    assert_eq!(detections.len(), truth.len(), "one detection list per frame");
    let mut gt_count: BTreeMap<usize, usize> = BTreeMap::new();
    for g in truth.iter().flatten() {
        *gt_count.entry(g.class).or_default() += 1;
    }
    let mut per_class = BTreeMap::new();
    for (&class, &n_gt) in &gt_count {
        let mut ranked: Vec<(usize, usize, f64)> = detections
            .iter()
            .enumerate()
            .flat_map(|(f, ds)| {
                ds.iter()
                    .enumerate()
                    .filter(|(_, d)| d.class == class)
                    .map(move |(k, d)| (f, k, d.score))
            })
            .collect();
        ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));

        let mut matched: Vec<Vec<bool>> = truth.iter().map(|g| vec![false; g.len()]).collect();
        let mut hits = Vec::with_capacity(ranked.len());
        for &(f, k, _) in &ranked {
            let det = &detections[f][k];
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in truth[f].iter().enumerate() {
                if g.class != class || matched[f][gi] {
                    continue;
                }
                let o = iou(&det.bbox, &g.bbox);
                if best.is_none_or(|(_, b)| o > b) {
                    best = Some((gi, o));
                }
            }
            match best {
                Some((gi, o)) if o >= iou_threshold => {
                    matched[f][gi] = true;
                    hits.push(true);
                }
                _ => hits.push(false),
            }
        }
        per_class.insert(class, area_under_pr(&hits, n_gt));
    }
    let mean = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    ApReport { per_class, mean }
}

pub fn ap50(detections: &[Vec<Detection>], truth: &[Vec<GroundTruthBox>]) -> ApReport {
    average_precision(detections, truth, 0.5)
}

fn area_under_pr(hits: &[bool], n_gt: usize) -> f64 {
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    for (n, &h) in hits.iter().enumerate() {
        tp += h as usize;
        precision.push(tp as f64 / (n + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (r, p) in recall.into_iter().zip(precision) {
        ap += (r - prev) * p;
        prev = r;
    }
    ap
}
