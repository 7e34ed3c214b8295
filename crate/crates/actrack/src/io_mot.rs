//! MOT-Challenge style text files: detections, ground truth, results,
//! `seqinfo.ini` metadata and per-detection appearance descriptors.
//!
//! Row grammar shared by det, gt and result files:
//! `frame,id,left,top,width,height,conf,x,y,z`. Numbers use a decimal point
//! regardless of locale.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use actrack_core::{BBox, DetectionSet, Observation, TrackSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MotError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("seqinfo is missing key {0:?}")]
    MissingKey(&'static str),
    #[error("seqinfo key {key:?}: {msg}")]
    BadValue { key: &'static str, msg: String },
}

fn parse_err(line: usize, msg: impl Into<String>) -> MotError {
    MotError::Parse { line, msg: msg.into() }
}

pub fn read_text(path: &Path) -> Result<String, MotError> {
    fs::read_to_string(path).map_err(|source| MotError::Read { path: path.to_path_buf(), source })
}

/// One parsed row of a det/gt/result file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRow {
    pub frame: u32,
    pub id: i64,
    pub bbox: BBox,
    pub conf: f64,
}

fn parse_row(line_no: usize, line: &str) -> Result<MotRow, MotError> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 10 {
        return Err(parse_err(line_no, format!("expected 10 comma-separated fields, found {}", fields.len())));
    }
    let num = |i: usize, name: &str| -> Result<f64, MotError> {
        let v: f64 = fields[i].parse().map_err(|_| parse_err(line_no, format!("{name} {:?} is not a number", fields[i])))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(parse_err(line_no, format!("{name} must be finite")))
        }
    };
    let frame = num(0, "frame")?;
    if frame < 1.0 || frame.fract() != 0.0 || frame > f64::from(u32::MAX) {
        return Err(parse_err(line_no, format!("frame {:?} must be a positive integer", fields[0])));
    }
    let id = num(1, "id")?;
    if id.fract() != 0.0 {
        return Err(parse_err(line_no, format!("id {:?} must be an integer", fields[1])));
    }
    for (i, name) in [(7, "x"), (8, "y"), (9, "z")] {
        num(i, name)?;
    }
    Ok(MotRow {
        frame: frame as u32,
        id: id as i64,
        bbox: BBox::new(num(2, "left")?, num(3, "top")?, num(4, "width")?, num(5, "height")?),
        conf: num(6, "conf")?,
    })
}

/// Non-blank lines with their 1-based line numbers.
fn rows(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetFile {
    pub detections: DetectionSet,
    /// Lines dropped for a non-positive width or height.
    pub rejected: usize,
}

pub fn parse_det(text: &str) -> Result<DetFile, MotError> {
    let mut out = DetFile::default();
    for (n, line) in rows(text) {
        let row = parse_row(n, line)?;
        if !(row.bbox.width > 0.0 && row.bbox.height > 0.0) {
            out.rejected += 1;
            continue;
        }
        out.detections.push(Observation::new(row.frame, row.bbox, row.conf));
    }
    if out.rejected > 0 {
        log::warn!("dropped {} detection(s) with non-positive size", out.rejected);
    }
    Ok(out)
}

pub fn parse_det_file(path: &Path) -> Result<DetFile, MotError> {
    parse_det(&read_text(path)?)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    /// Boxes that take part in evaluation.
    pub tracks: TrackSet,
    /// `(id, frame, box)` rows with confidence 0.
    pub ignored: Vec<(u32, u32, BBox)>,
    pub rejected: usize,
}

pub fn parse_gt(text: &str) -> Result<GroundTruth, MotError> {
    let mut seen = BTreeMap::new();
    let mut kept = Vec::new();
    let mut out = GroundTruth::default();
    for (n, line) in rows(text) {
        let row = parse_row(n, line)?;
        if row.id < 1 || row.id > i64::from(u32::MAX) {
            return Err(parse_err(n, format!("track id {} must be at least 1", row.id)));
        }
        let id = row.id as u32;
        if let Some(first) = seen.insert((row.frame, id), n) {
            return Err(parse_err(n, format!("track {id} already has a box in frame {} (line {first})", row.frame)));
        }
        if !(row.bbox.width > 0.0 && row.bbox.height > 0.0) {
            out.rejected += 1;
            continue;
        }
        if row.conf == 0.0 {
            out.ignored.push((id, row.frame, row.bbox));
        } else {
            kept.push((id, row.frame, row.bbox));
        }
    }
    if out.rejected > 0 {
        log::warn!("dropped {} ground-truth row(s) with non-positive size", out.rejected);
    }
    out.tracks = TrackSet::from_triples(kept).expect("duplicates were rejected above");
    Ok(out)
}

pub fn parse_gt_file(path: &Path) -> Result<GroundTruth, MotError> {
    parse_gt(&read_text(path)?)
}

/// Result rows sorted by (frame, id), boxes with two decimals.
pub fn format_results(tracks: &TrackSet) -> String {
    let mut rows = Vec::with_capacity(tracks.box_count());
    for t in &tracks.tracks {
        for e in &t.entries {
            rows.push((e.frame, t.id, e.bbox));
        }
    }
    rows.sort_by_key(|&(f, id, _)| (f, id));
    let mut s = String::new();
    for (f, id, b) in rows {
        writeln!(s, "{f},{id},{:.2},{:.2},{:.2},{:.2},1,-1,-1,-1", b.left, b.top, b.width, b.height).unwrap();
    }
    s
}

pub fn write_result_file(tracks: &TrackSet, path: &Path) -> Result<(), MotError> {
    crate::output::write_atomic(path, format_results(tracks).as_bytes())
}

/// Detection rows with lossless coordinates, in frame and input order.
pub fn format_detections(dets: &DetectionSet) -> String {
    let mut s = String::new();
    for obs in dets.frames.values().flatten() {
        let b = obs.bbox;
        writeln!(s, "{},-1,{},{},{},{},{},-1,-1,-1", obs.frame, b.left, b.top, b.width, b.height, obs.confidence).unwrap();
    }
    s
}

/// Ground truth rows with lossless coordinates, sorted by (frame, id).
pub fn format_gt(tracks: &TrackSet) -> String {
    let mut rows: Vec<_> = tracks.tracks.iter().flat_map(|t| t.entries.iter().map(move |e| (e.frame, t.id, e.bbox))).collect();
    rows.sort_by_key(|&(f, id, _)| (f, id));
    let mut s = String::new();
    for (f, id, b) in rows {
        writeln!(s, "{f},{id},{},{},{},{},1,-1,-1,-1", b.left, b.top, b.width, b.height).unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMeta {
    pub name: String,
    pub frame_rate: f64,
    pub seq_length: u32,
    pub im_width: u32,
    pub im_height: u32,
}

impl SequenceMeta {
    /// One second of video, at least one frame.
    pub fn default_window(&self) -> u32 {
        actrack_core::TrackerConfig::window_for(self.frame_rate, 1.0)
    }
}

pub fn parse_seqinfo(text: &str) -> Result<SequenceMeta, MotError> {
    let mut kv = BTreeMap::new();
    for (n, line) in rows(text) {
        if line.starts_with('[') || line.starts_with(';') || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| parse_err(n, "expected key=value"))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |key: &'static str| kv.get(key).ok_or(MotError::MissingKey(key));
    let int = |key: &'static str| -> Result<u32, MotError> {
        get(key)?.parse().map_err(|_| MotError::BadValue { key, msg: "expected a non-negative integer".into() })
    };
    let frame_rate: f64 = get("frameRate")?
        .parse()
        .map_err(|_| MotError::BadValue { key: "frameRate", msg: "expected a number".into() })?;
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        return Err(MotError::BadValue { key: "frameRate", msg: "must be positive".into() });
    }
    let seq_length = int("seqLength")?;
    if seq_length == 0 {
        return Err(MotError::BadValue { key: "seqLength", msg: "must be at least 1".into() });
    }
    Ok(SequenceMeta {
        name: get("name")?.clone(),
        frame_rate,
        seq_length,
        im_width: int("imWidth")?,
        im_height: int("imHeight")?,
    })
}

pub fn read_seqinfo(path: &Path) -> Result<SequenceMeta, MotError> {
    parse_seqinfo(&read_text(path)?)
}

/// Descriptors keyed by `(frame, index of the detection within its frame)`.
pub type AppearanceTable = BTreeMap<(u32, usize), Vec<f64>>;

/// Lines `frame,det_index,v1,...,vK`; `det_index` is 0-based among the
/// accepted detections of the frame. Rows are renormalized to unit mass.
pub fn parse_appearance(text: &str) -> Result<AppearanceTable, MotError> {
    let mut out = AppearanceTable::new();
    let mut bins = None;
    for (n, line) in rows(text) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(parse_err(n, "expected frame,det_index,v1,...,vK"));
        }
        let frame: u32 = fields[0].parse().map_err(|_| parse_err(n, "frame must be a positive integer"))?;
        let index: usize = fields[1].parse().map_err(|_| parse_err(n, "det_index must be a non-negative integer"))?;
        if frame == 0 {
            return Err(parse_err(n, "frame must be a positive integer"));
        }
        let k = fields.len() - 2;
        if *bins.get_or_insert(k) != k {
            return Err(parse_err(n, format!("expected {} values, found {k}", bins.unwrap())));
        }
        let mut v = Vec::with_capacity(k);
        for f in &fields[2..] {
            let x: f64 = f.parse().map_err(|_| parse_err(n, format!("{f:?} is not a number")))?;
            if !(x.is_finite() && x >= 0.0) {
                return Err(parse_err(n, "descriptor values must be finite and non-negative"));
            }
            v.push(x);
        }
        let mass: f64 = v.iter().sum();
        if mass <= 0.0 {
            return Err(parse_err(n, "descriptor has zero mass"));
        }
        v.iter_mut().for_each(|x| *x /= mass);
        if out.insert((frame, index), v).is_some() {
            return Err(parse_err(n, format!("duplicate descriptor for frame {frame} index {index}")));
        }
    }
    Ok(out)
}

pub fn read_appearance(path: &Path) -> Result<AppearanceTable, MotError> {
    parse_appearance(&read_text(path)?)
}

/// Attach descriptors to detections. Fails on a descriptor without detection.
pub fn attach_appearance(dets: &mut DetectionSet, table: AppearanceTable) -> Result<(), MotError> {
    let total = dets.len();
    let mut used = 0;
    for ((frame, index), h) in table {
        let obs = dets
            .frames
            .get_mut(&frame)
            .and_then(|v| v.get_mut(index))
            .ok_or_else(|| parse_err(0, format!("descriptor for frame {frame} index {index} has no detection")))?;
        obs.appearance = Some(h);
        used += 1;
    }
    if used < total {
        log::warn!("{} of {total} detections have no appearance descriptor", total - used);
    }
    Ok(())
}

/// Descriptor lines for every detection that carries one.
pub fn format_appearance(dets: &DetectionSet) -> String {
    let mut s = String::new();
    for (frame, obs) in &dets.frames {
        for (i, o) in obs.iter().enumerate() {
            if let Some(h) = &o.appearance {
                write!(s, "{frame},{i}").unwrap();
                for v in h {
                    write!(s, ",{v}").unwrap();
                }
                s.push('\n');
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_line_maps_fields() {
        let d = parse_det("1,-1,794.27,247.59,71.245,174.88,4.56,-1,-1,-1\n").unwrap();
        let o = &d.detections.frame(1)[0];
        assert_eq!(o.bbox, BBox::new(794.27, 247.59, 71.245, 174.88));
        assert_eq!(o.confidence, 4.56);
        assert_eq!(d.rejected, 0);
    }

    #[test]
    fn empty_det_file() {
        assert!(parse_det("").unwrap().detections.is_empty());
        assert!(parse_det("\n\n").unwrap().detections.is_empty());
    }

    #[test]
    fn wrong_field_count_names_line() {
        let err = parse_det("1,-1,1,1,5,5,1,-1,-1,-1\n1,-1,1,1,5,5,1,-1,-1\n").unwrap_err();
        assert!(matches!(err, MotError::Parse { line: 2, .. }), "{err}");
        assert!(err.to_string().starts_with("line 2"));
    }

    #[test]
    fn bad_numbers_and_frames() {
        assert!(matches!(parse_det("x,-1,1,1,5,5,1,-1,-1,-1"), Err(MotError::Parse { line: 1, .. })));
        assert!(parse_det("0,-1,1,1,5,5,1,-1,-1,-1").is_err());
        assert!(parse_det("1.5,-1,1,1,5,5,1,-1,-1,-1").is_err());
        // A decimal comma is not a decimal point.
        assert!(parse_det("1,-1,1,1,5,5,1,-1,-1,-1,5").is_err());
    }

    #[test]
    fn non_positive_sizes_are_counted() {
        let d = parse_det("1,-1,1,1,0,5,1,-1,-1,-1\n1,-1,1,1,5,-2,1,-1,-1,-1\n2,-1,1,1,5,5,1,-1,-1,-1\n").unwrap();
        assert_eq!(d.rejected, 2);
        assert_eq!(d.detections.len(), 1);
    }

    #[test]
    fn frames_keep_line_order() {
        let d = parse_det("2,-1,5,1,5,5,1,-1,-1,-1\n1,-1,1,1,5,5,1,-1,-1,-1\n2,-1,3,1,5,5,1,-1,-1,-1\n").unwrap();
        let lefts: Vec<f64> = d.detections.frame(2).iter().map(|o| o.bbox.left).collect();
        assert_eq!(lefts, vec![5.0, 3.0]);
    }

    #[test]
    fn gt_examples() {
        let g = parse_gt("1,1,10,10,5,5,1,-1,-1,-1\n").unwrap();
        assert_eq!(g.tracks.tracks[0].id, 1);
        assert_eq!(g.tracks.tracks[0].bbox_at(1), Some(BBox::new(10.0, 10.0, 5.0, 5.0)));

        let dup = parse_gt("1,1,10,10,5,5,1,-1,-1,-1\n1,1,12,10,5,5,1,-1,-1,-1\n").unwrap_err();
        assert!(matches!(dup, MotError::Parse { line: 2, .. }));

        let g = parse_gt("1,1,10,10,5,5,0,-1,-1,-1\n2,1,10,10,5,5,1,-1,-1,-1\n").unwrap();
        assert_eq!(g.ignored, vec![(1, 1, BBox::new(10.0, 10.0, 5.0, 5.0))]);
        assert_eq!(g.tracks.box_count(), 1);

        assert!(parse_gt("1,0,10,10,5,5,1,-1,-1,-1\n").is_err());
        assert!(parse_gt("1,-1,10,10,5,5,1,-1,-1,-1\n").is_err());
    }

    #[test]
    fn result_format_is_sorted_and_fixed() {
        let t = TrackSet::from_triples([
            (2, 1, BBox::new(1.0, 2.0, 3.0, 4.0)),
            (1, 2, BBox::new(1.005, 2.0, 3.0, 4.0)),
            (1, 1, BBox::new(0.333, 2.0, 3.0, 4.0)),
        ])
        .unwrap();
        let s = format_results(&t);
        assert_eq!(
            s,
            "1,1,0.33,2.00,3.00,4.00,1,-1,-1,-1\n1,2,1.00,2.00,3.00,4.00,1,-1,-1,-1\n2,1,1.00,2.00,3.00,4.00,1,-1,-1,-1\n"
        );
        assert_eq!(format_results(&TrackSet::new()), "");
    }

    #[test]
    fn seqinfo_examples() {
        let text = "[Sequence]\nname=TUD\nimDir=img1\nframeRate=25\nseqLength=201\nimWidth=640\nimHeight=480\nimExt=.jpg\n";
        let m = parse_seqinfo(text).unwrap();
        assert_eq!(m.default_window(), 25);
        assert_eq!((m.seq_length, m.im_width, m.im_height), (201, 640, 480));
        let m = parse_seqinfo(&text.replace("frameRate=25", "frameRate=7")).unwrap();
        assert_eq!(m.default_window(), 7);
        let err = parse_seqinfo(&text.replace("frameRate=25\n", "")).unwrap_err();
        assert!(matches!(err, MotError::MissingKey("frameRate")));
        assert!(err.to_string().contains("frameRate"));
        assert!(parse_seqinfo(&text.replace("frameRate=25", "frameRate=0")).is_err());
    }

    #[test]
    fn appearance_grammar() {
        let t = parse_appearance("1,0,1,3\n1,1,2,2\n").unwrap();
        assert_eq!(t[&(1, 0)], vec![0.25, 0.75]);
        assert!(parse_appearance("1,0,1,3\n1,1,2,2,1\n").is_err());
        assert!(parse_appearance("1,0,-1,3\n").is_err());
        assert!(parse_appearance("1,0,0,0\n").is_err());
        assert!(parse_appearance("1,0,1,1\n1,0,1,1\n").is_err());

        let mut d = parse_det("1,-1,1,1,5,5,1,-1,-1,-1\n").unwrap().detections;
        assert!(attach_appearance(&mut d, parse_appearance("1,1,1,1\n").unwrap()).is_err());
        attach_appearance(&mut d, parse_appearance("1,0,1,1\n").unwrap()).unwrap();
        assert_eq!(format_appearance(&d), "1,0,0.5,0.5\n");
    }
}
