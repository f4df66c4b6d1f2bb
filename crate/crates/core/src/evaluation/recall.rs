use serde::{Deserialize, Serialize};

use crate::detector::Detection;

use super::{iou, EvalError, GroundTruthBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecallTaskConfig {
    pub episode_len: usize,
    /// Detections must score strictly above this.
    pub score_threshold: f64,
    pub consecutive_frames: usize,
    /// Minimum IoU between a chain's detections in adjacent frames.
    pub association_iou: f64,
}

impl Default for RecallTaskConfig {
    fn default() -> Self {
        Self {
            episode_len: 100,
            score_threshold: 0.3,
            consecutive_frames: 5,
            association_iou: 0.6,
        }
    }
}

/// Per-episode outcome of the recall task.
///
/// A class is a true positive when it is present, encountered, and its
/// returned box overlaps a ground-truth box of that class (same frame) at
/// IoU ≥ 0.5. Every other encountered class is a false positive, every other
/// present class a false negative, and the remaining classes true negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTally {
    pub present: Vec<usize>,
    pub encountered: Vec<usize>,
    /// Present classes not recalled with a correct box.
    pub missing: Vec<usize>,
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub episodes: Vec<EpisodeTally>,
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
    /// `TP / (TP + FP)`; one when nothing was encountered.
    pub precision: f64,
    /// `TP / (TP + FN)`; one when nothing was present.
    pub recall: f64,
    /// `(TP + TN) / (classes × episodes)`.
    pub accuracy: f64,
}

/// Object-recall task over a stream split into episodes of
/// `config.episode_len` frames, deciding each of `class_count` classes per
/// episode.
///
/// A class is encountered when some chain of detections of that class spans
/// at least `consecutive_frames` consecutive frames, every detection scores
/// above the threshold, and each one overlaps the previous frame's link at
/// IoU ≥ `association_iou`. The returned box is the class's highest-scoring
/// detection in the episode (ties: earliest).
pub fn recall_task(
    stream: &[Vec<Detection>],
    truth: &[Vec<GroundTruthBox>],
    config: &RecallTaskConfig,
    class_count: usize,
) -> Result<RecallReport, EvalError> {
    if config.episode_len == 0 || config.consecutive_frames == 0 {
        return Err(EvalError::MalformedStream("episode_len and consecutive_frames must be positive".into()));
    }
    if stream.len() != truth.len() {
        return Err(EvalError::MalformedStream(format!(
            "{} detection frames but {} ground-truth frames",
            stream.len(),
            truth.len()
        )));
    }
    if !stream.len().is_multiple_of(config.episode_len) {
        return Err(EvalError::MalformedStream(format!(
            "{} frames is not a whole number of {}-frame episodes",
            stream.len(),
            config.episode_len
        )));
    }
    if let Some(d) = stream.iter().flatten().find(|d| d.class >= class_count) {
        return Err(EvalError::MalformedStream(format!("detection class {} out of range", d.class)));
    }

    let mut episodes = Vec::new();
    for (dets, gts) in stream.chunks(config.episode_len).zip(truth.chunks(config.episode_len)) {
        episodes.push(episode_tally(dets, gts, config, class_count));
    }
    let sum = |f: fn(&EpisodeTally) -> usize| episodes.iter().map(f).sum::<usize>();
    let (tp, fp, fnn, tn) = (
        sum(|e| e.true_positive),
        sum(|e| e.false_positive),
        sum(|e| e.false_negative),
        sum(|e| e.true_negative),
    );
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let decisions = class_count * episodes.len();
    Ok(RecallReport {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fnn),
        accuracy: ratio(tp + tn, decisions),
        true_positive: tp,
        false_positive: fp,
        false_negative: fnn,
        true_negative: tn,
        episodes,
    })
}

fn episode_tally(
    dets: &[Vec<Detection>],
    gts: &[Vec<GroundTruthBox>],
    config: &RecallTaskConfig,
    class_count: usize,
) -> EpisodeTally {
    let mut tally = EpisodeTally {
        present: Vec::new(),
        encountered: Vec::new(),
        missing: Vec::new(),
        true_positive: 0,
        false_positive: 0,
        false_negative: 0,
        true_negative: 0,
    };
    for class in 0..class_count {
        let present = gts.iter().flatten().any(|g| g.class == class);
        let encountered = has_chain(dets, class, config);
        let correct = encountered && {
            let (f, best) = best_detection(dets, class).expect("encountered class has detections");
            gts[f].iter().any(|g| g.class == class && iou(&best.bbox, &g.bbox) >= 0.5)
        };
        if present {
            tally.present.push(class);
        }
        if encountered {
            tally.encountered.push(class);
        }
        match (present, encountered) {
            (true, true) if correct => tally.true_positive += 1,
            (true, _) => {
                tally.missing.push(class);
                tally.false_negative += 1;
                if encountered {
                    tally.false_positive += 1;
                }
            }
            (false, true) => tally.false_positive += 1,
            (false, false) => tally.true_negative += 1,
        }
    }
    tally
}

fn has_chain(dets: &[Vec<Detection>], class: usize, config: &RecallTaskConfig) -> bool {
    let mut prev: Vec<(&Detection, usize)> = Vec::new();
    for frame in dets {
        let mut cur = Vec::new();
        for d in frame.iter().filter(|d| d.class == class && d.score > config.score_threshold) {
            let len = 1 + prev
                .iter()
                .filter(|(p, _)| iou(&p.bbox, &d.bbox) >= config.association_iou)
                .map(|&(_, n)| n)
                .max()
                .unwrap_or(0);
            if len >= config.consecutive_frames {
                return true;
            }
            cur.push((d, len));
        }
        prev = cur;
    }
    false
}

fn best_detection(dets: &[Vec<Detection>], class: usize) -> Option<(usize, &Detection)> {
    let mut best: Option<(usize, &Detection)> = None;
    for (f, frame) in dets.iter().enumerate() {
        for d in frame.iter().filter(|d| d.class == class) {
            if best.is_none_or(|(_, b)| d.score > b.score) {
                best = Some((f, d));
            }
        }
    }
    best
}
