//! CLEAR-MOT evaluation of identified box sequences.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BoundingBox;
use crate::tracker::iou;

/// Identified boxes keyed by 0-based frame index.
pub type IdentifiedFrames = BTreeMap<u64, Vec<(u64, BoundingBox)>>;

pub const MOSTLY_TRACKED: f64 = 0.8;
pub const MOSTLY_LOST: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotMetrics {
    pub precision: f64,
    pub recall: f64,
    pub mota: f64,
    pub motp: f64,
    pub mostly_tracked: usize,
    pub partially_tracked: usize,
    pub mostly_lost: usize,
    pub num_objects: usize,
    pub num_matches: usize,
    pub num_misses: usize,
    pub num_false_positives: usize,
    pub num_switches: usize,
}

/// Accumulates CLEAR-MOT counts. Within a frame, ground truth keeps its
/// previous hypothesis when that pairing still clears `iou_match`; the rest
/// are matched greedily in descending IOU.
pub fn evaluate_mot(gt: &IdentifiedFrames, hyp: &IdentifiedFrames, iou_match: f64) -> Result<MotMetrics> {
    let num_objects: usize = gt.values().map(Vec::len).sum();
    if num_objects == 0 {
        return Err(Error::Undefined("MOTA is undefined without ground truth".into()));
    }
    let empty = Vec::new();
    let frames: std::collections::BTreeSet<u64> = gt.keys().chain(hyp.keys()).copied().collect();

    let mut last_match: HashMap<u64, u64> = HashMap::new();
    let mut present: HashMap<u64, usize> = HashMap::new();
    let mut covered: HashMap<u64, usize> = HashMap::new();
    let (mut matches, mut misses, mut fps, mut switches) = (0usize, 0usize, 0usize, 0usize);
    let mut iou_sum = 0.0;

    for f in frames {
        let g = gt.get(&f).unwrap_or(&empty);
        let h = hyp.get(&f).unwrap_or(&empty);
        let mut g_used = vec![false; g.len()];
        let mut h_used = vec![false; h.len()];
        let mut pairs: Vec<(usize, usize, f64)> = Vec::new();

        for (gi, (gid, gbox)) in g.iter().enumerate() {
            let Some(&prev) = last_match.get(gid) else { continue };
            if let Some(hi) = h.iter().position(|(hid, _)| *hid == prev) {
                let score = iou(gbox, &h[hi].1);
                if !h_used[hi] && score >= iou_match {
                    g_used[gi] = true;
                    h_used[hi] = true;
                    pairs.push((gi, hi, score));
                }
            }
        }
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (gi, (_, gbox)) in g.iter().enumerate() {
            if g_used[gi] {
                continue;
            }
            for (hi, (_, hbox)) in h.iter().enumerate() {
                if h_used[hi] {
                    continue;
                }
                let score = iou(gbox, hbox);
                if score >= iou_match {
                    candidates.push((score, gi, hi));
                }
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (score, gi, hi) in candidates {
            if g_used[gi] || h_used[hi] {
                continue;
            }
            g_used[gi] = true;
            h_used[hi] = true;
            pairs.push((gi, hi, score));
        }

        for (gi, hi, score) in pairs {
            let gid = g[gi].0;
            let hid = h[hi].0;
            if let Some(prev) = last_match.insert(gid, hid) {
                if prev != hid {
                    switches += 1;
                }
            }
            *covered.entry(gid).or_default() += 1;
            iou_sum += score;
            matches += 1;
        }
        for (gid, _) in g {
            *present.entry(*gid).or_default() += 1;
        }
        misses += g_used.iter().filter(|u| !**u).count();
        fps += h_used.iter().filter(|u| !**u).count();
    }

    let (mut mt, mut pt, mut ml) = (0, 0, 0);
    let ids: HashSet<&u64> = present.keys().collect();
    for id in ids {
        let ratio = *covered.get(id).unwrap_or(&0) as f64 / present[id] as f64;
        if ratio >= MOSTLY_TRACKED {
            mt += 1;
        } else if ratio < MOSTLY_LOST {
            ml += 1;
        } else {
            pt += 1;
        }
    }

    Ok(MotMetrics {
        precision: if matches + fps == 0 { 0.0 } else { matches as f64 / (matches + fps) as f64 },
        recall: matches as f64 / num_objects as f64,
        mota: 1.0 - (misses + fps + switches) as f64 / num_objects as f64,
        motp: if matches == 0 { 0.0 } else { iou_sum / matches as f64 },
        mostly_tracked: mt,
        partially_tracked: pt,
        mostly_lost: ml,
        num_objects,
        num_matches: matches,
        num_misses: misses,
        num_false_positives: fps,
        num_switches: switches,
    })
}

/// Reads `frame,id,left,top,width,height[,conf,...]` records (1-based frames).
/// With `skip_inactive`, rows whose seventh field is `0` are ignored, as
/// ground-truth files use it to flag entries not to evaluate.
pub fn read_mot_csv<R: BufRead>(reader: R, skip_inactive: bool) -> Result<IdentifiedFrames> {
    let mut out = IdentifiedFrames::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let err = |message: String| Error::Parse { line: lineno, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 6 {
            return Err(err(format!("expected at least 6 fields, found {}", fields.len())));
        }
        let num = |k: usize| -> Result<f64> {
            fields[k]
                .parse::<f64>()
                .map_err(|_| err(format!("field {} is not numeric: {:?}", k + 1, fields[k])))
        };
        let frame = num(0)?;
        let id = num(1)?;
        if frame < 1.0 || frame.fract() != 0.0 || id < 0.0 || id.fract() != 0.0 {
            return Err(err("frame must be >= 1 and id a non-negative integer".into()));
        }
        if skip_inactive && fields.len() > 6 && num(6)? == 0.0 {
            continue;
        }
        let b = BoundingBox::from_ltwh(num(2)?, num(3)?, num(4)?, num(5)?);
        out.entry(frame as u64 - 1).or_default().push((id as u64, b));
    }
    Ok(out)
}
