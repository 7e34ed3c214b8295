//! CLEAR-MOT evaluation and overlap statistics of ground-truth tracks.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::assignment::hungarian;
use crate::types::{BBox, TrackSet};

pub const DEFAULT_IOU_MIN: f64 = 0.5;
pub const DEFAULT_OVERLAP_MIN: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("boxes must have positive size")]
    InvalidBox,
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("hypotheses reach frame {hyp}, beyond the last ground-truth frame {gt}")]
    FrameRange { gt: u32, hyp: u32 },
    #[error("iou threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub mota: f64,
    /// Mean IoU of matched pairs.
    pub motp: f64,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
    pub fg: usize,
    pub mt: usize,
    pub ml: usize,
    pub gt_total: usize,
    pub matches: usize,
}

pub fn iou(a: &BBox, b: &BBox) -> Result<f64, MetricsError> {
    if !a.is_valid() || !b.is_valid() {
        return Err(MetricsError::InvalidBox);
    }
    let w = (a.left + a.width).min(b.left + b.width) - a.left.max(b.left);
    let h = (a.top + a.height).min(b.top + b.height) - a.top.max(b.top);
    if w <= 0.0 || h <= 0.0 {
        return Ok(0.0);
    }
    let inter = w * h;
    Ok(inter / (a.area() + b.area() - inter))
}

/// Match ground-truth and hypothesis boxes of one frame.
///
/// Prior pairs whose boxes still overlap by at least `iou_min` are kept;
/// the rest is matched optimally on `1 - IoU`. Returns `(gt, hyp, iou)`
/// sorted by gt id.
pub fn match_frame(
    gt: &BTreeMap<u32, BBox>,
    hyp: &BTreeMap<u32, BBox>,
    prior: &BTreeMap<u32, u32>,
    iou_min: f64,
) -> Result<Vec<(u32, u32, f64)>, MetricsError> {
    let mut out = Vec::new();
    let mut used_gt = BTreeSet::new();
    let mut used_hyp = BTreeSet::new();
    for (&g, &h) in prior {
        if let (Some(gb), Some(hb)) = (gt.get(&g), hyp.get(&h)) {
            let v = iou(gb, hb)?;
            if v >= iou_min && !used_hyp.contains(&h) {
                out.push((g, h, v));
                used_gt.insert(g);
                used_hyp.insert(h);
            }
        }
    }
    let rows: Vec<(u32, &BBox)> = gt.iter().filter(|(g, _)| !used_gt.contains(*g)).map(|(g, b)| (*g, b)).collect();
    let cols: Vec<(u32, &BBox)> = hyp.iter().filter(|(h, _)| !used_hyp.contains(*h)).map(|(h, b)| (*h, b)).collect();
    if !rows.is_empty() && !cols.is_empty() {
        let n = rows.len();
        let mut cost = vec![vec![f64::INFINITY; cols.len() + n]; n];
        let mut ious = vec![vec![0.0; cols.len()]; n];
        for (i, (_, gb)) in rows.iter().enumerate() {
            for (j, (_, hb)) in cols.iter().enumerate() {
                let v = iou(gb, hb)?;
                ious[i][j] = v;
                if v >= iou_min {
                    cost[i][j] = 1.0 - v;
                }
            }
            cost[i][cols.len() + i] = 1.0;
        }
        let a = hungarian(&cost).expect("dummy columns keep every row feasible");
        for (i, &j) in a.cols.iter().enumerate() {
            if j < cols.len() {
                out.push((rows[i].0, cols[j].0, ious[i][j]));
            }
        }
    }
    out.sort_by_key(|&(g, _, _)| g);
    Ok(out)
}

/// CLEAR-MOT scores of `hyp` against `gt`.
pub fn clear_mot(gt: &TrackSet, hyp: &TrackSet, iou_min: f64) -> Result<EvalResult, MetricsError> {
    if !(iou_min > 0.0 && iou_min < 1.0) {
        return Err(MetricsError::InvalidThreshold(iou_min));
    }
    let gt_frames = gt.by_frame();
    let hyp_frames = hyp.by_frame();
    let gt_total = gt.box_count();
    if gt_total == 0 {
        return Err(MetricsError::EmptyGroundTruth);
    }
    if hyp.last_frame() > gt.last_frame() {
        return Err(MetricsError::FrameRange { gt: gt.last_frame(), hyp: hyp.last_frame() });
    }
    let empty = BTreeMap::new();
    let frames: BTreeSet<u32> = gt_frames.keys().chain(hyp_frames.keys()).copied().collect();
    let mut last_match: BTreeMap<u32, u32> = BTreeMap::new();
    // Per gt id: matched frames, fragment count, whether the last frame was tracked.
    let mut coverage: BTreeMap<u32, (usize, usize, Option<bool>)> = BTreeMap::new();
    let (mut fp, mut fn_, mut ids, mut matches, mut iou_sum) = (0, 0, 0, 0, 0.0);

    for f in frames {
        let g = gt_frames.get(&f).unwrap_or(&empty);
        let h = hyp_frames.get(&f).unwrap_or(&empty);
        let m = match_frame(g, h, &last_match, iou_min)?;
        let matched: BTreeSet<u32> = m.iter().map(|&(gid, _, _)| gid).collect();
        for &(gid, hid, v) in &m {
            if last_match.get(&gid).is_some_and(|&prev| prev != hid) {
                ids += 1;
            }
            last_match.insert(gid, hid);
            iou_sum += v;
        }
        matches += m.len();
        fp += h.len() - m.len();
        fn_ += g.len() - m.len();
        for &gid in g.keys() {
            let tracked = matched.contains(&gid);
            let entry = coverage.entry(gid).or_insert((0, 0, None));
            if tracked {
                entry.0 += 1;
                if entry.2 == Some(false) && entry.0 > 1 {
                    entry.1 += 1;
                }
            }
            if tracked || entry.0 > 0 {
                entry.2 = Some(tracked);
            }
        }
    }

    let mut mt = 0;
    let mut ml = 0;
    let mut fg = 0;
    for track in &gt.tracks {
        let (hit, frags, _) = coverage.get(&track.id).copied().unwrap_or((0, 0, None));
        let ratio = hit as f64 / track.entries.len() as f64;
        if ratio >= 0.8 {
            mt += 1;
        }
        if ratio <= 0.2 {
            ml += 1;
        }
        fg += frags;
    }
    let mota = 1.0 - (fp + fn_ + ids) as f64 / gt_total as f64;
    let motp = if matches == 0 { 0.0 } else { iou_sum / matches as f64 };
    Ok(EvalResult { mota, motp, fp, fn_, ids, fg, mt, ml, gt_total, matches })
}

/// Lengths of maximal runs of consecutive frames in which two ground-truth
/// tracks overlap by more than `overlap_min`, counted per run length.
pub fn occlusion_length_histogram(gt: &TrackSet, overlap_min: f64) -> Result<BTreeMap<u32, usize>, MetricsError> {
    let mut hist = BTreeMap::new();
    for (i, a) in gt.tracks.iter().enumerate() {
        for b in &gt.tracks[i + 1..] {
            let mut run = 0u32;
            let mut prev: Option<u32> = None;
            for e in &a.entries {
                let over = match b.bbox_at(e.frame) {
                    Some(bb) => iou(&e.bbox, &bb)? > overlap_min,
                    None => false,
                };
                let contiguous = prev.is_some_and(|p| p + 1 == e.frame);
                if over && contiguous && run > 0 {
                    run += 1;
                } else {
                    if run > 0 {
                        *hist.entry(run).or_insert(0) += 1;
                    }
                    run = u32::from(over);
                }
                prev = Some(e.frame);
            }
            if run > 0 {
                *hist.entry(run).or_insert(0) += 1;
            }
        }
    }
    Ok(hist)
}
