use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use thiserror::Error;

/// Tolerance on the unit mass of an appearance histogram.
pub const HISTOGRAM_MASS_TOLERANCE: f64 = 1e-9;

/// Axis-aligned box in pixels: top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub const fn new(left: f64, top: f64, width: f64, height: f64) -> Self {
        Self { left, top, width, height }
    }

    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Self::new(cx - width / 2.0, cy - height / 2.0, width, height)
    }

    pub fn center(&self) -> [f64; 2] {
        [self.left + self.width / 2.0, self.top + self.height / 2.0]
    }

    pub fn size(&self) -> [f64; 2] {
        [self.width, self.height]
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn is_valid(&self) -> bool {
        self.left.is_finite()
            && self.top.is_finite()
            && self.width.is_finite()
            && self.height.is_finite()
            && self.width > 0.0
            && self.height > 0.0
    }

    /// Component-wise linear blend, `t = 0` gives `self`.
    pub fn lerp(&self, other: &BBox, t: f64) -> BBox {
        BBox::new(
            self.left + (other.left - self.left) * t,
            self.top + (other.top - self.top) * t,
            self.width + (other.width - self.width) * t,
            self.height + (other.height - self.height) * t,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObservationError {
    #[error("frame index must be at least 1")]
    ZeroFrame,
    #[error("bounding box must have finite coordinates and positive size")]
    InvalidBox,
    #[error("appearance histogram is empty")]
    EmptyAppearance,
    #[error("appearance histogram has a negative or non-finite bin")]
    NegativeBin,
    #[error("appearance histogram sums to {0}, expected 1")]
    Unnormalized(f64),
}

/// One detection: the evidence behind a single graph state.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub frame: u32,
    pub bbox: BBox,
    pub confidence: f64,
    /// Normalized appearance histogram, when one is available.
    pub appearance: Option<Vec<f64>>,
}

impl Observation {
    pub fn new(frame: u32, bbox: BBox, confidence: f64) -> Self {
        Self { frame, bbox, confidence, appearance: None }
    }

    pub fn with_appearance(mut self, histogram: Vec<f64>) -> Self {
        self.appearance = Some(histogram);
        self
    }

    pub fn validate(&self) -> Result<(), ObservationError> {
        if self.frame == 0 {
            return Err(ObservationError::ZeroFrame);
        }
        if !self.bbox.is_valid() {
            return Err(ObservationError::InvalidBox);
        }
        if let Some(h) = &self.appearance {
            check_histogram(h)?;
        }
        Ok(())
    }
}

pub(crate) fn check_histogram(h: &[f64]) -> Result<(), ObservationError> {
    if h.is_empty() {
        return Err(ObservationError::EmptyAppearance);
    }
    if h.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(ObservationError::NegativeBin);
    }
    let mass: f64 = h.iter().sum();
    if (mass - 1.0).abs() > HISTOGRAM_MASS_TOLERANCE {
        return Err(ObservationError::Unnormalized(mass));
    }
    Ok(())
}

/// Detections grouped by frame, each frame in input order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    pub frames: BTreeMap<u32, Vec<Observation>>,
}

impl DetectionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, obs: Observation) {
        self.frames.entry(obs.frame).or_default().push(obs);
    }

    pub fn last_frame(&self) -> u32 {
        self.frames.keys().next_back().copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame(&self, frame: u32) -> &[Observation] {
        self.frames.get(&frame).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackEntry {
    pub frame: u32,
    pub bbox: BBox,
    /// Gap-filled entry, not backed by a detection.
    pub interpolated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u32,
    /// Strictly increasing frames.
    pub entries: Vec<TrackEntry>,
}

impl Track {
    pub fn first_frame(&self) -> Option<u32> {
        self.entries.first().map(|e| e.frame)
    }

    pub fn bbox_at(&self, frame: u32) -> Option<BBox> {
        self.entries
            .binary_search_by_key(&frame, |e| e.frame)
            .ok()
            .map(|i| self.entries[i].bbox)
    }
}

/// A set of trajectories: tracker output or ground truth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackSet {
    pub tracks: Vec<Track>,
}

impl TrackSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn box_count(&self) -> usize {
        self.tracks.iter().map(|t| t.entries.len()).sum()
    }

    pub fn last_frame(&self) -> u32 {
        self.tracks
            .iter()
            .filter_map(|t| t.entries.last().map(|e| e.frame))
            .max()
            .unwrap_or(0)
    }

    /// Boxes present in each frame, keyed by track id.
    pub fn by_frame(&self) -> BTreeMap<u32, BTreeMap<u32, BBox>> {
        let mut out: BTreeMap<u32, BTreeMap<u32, BBox>> = BTreeMap::new();
        for track in &self.tracks {
            for e in &track.entries {
                out.entry(e.frame).or_default().insert(track.id, e.bbox);
            }
        }
        out
    }

    /// Build from `(track id, frame, box)` triples; entries are sorted by frame.
    /// Returns `None` when a track has two boxes in one frame.
    pub fn from_triples<I>(triples: I) -> Option<Self>
    where
        I: IntoIterator<Item = (u32, u32, BBox)>,
    {
        let mut map: BTreeMap<u32, BTreeMap<u32, BBox>> = BTreeMap::new();
        for (id, frame, bbox) in triples {
            if map.entry(id).or_default().insert(frame, bbox).is_some() {
                return None;
            }
        }
        let tracks = map
            .into_iter()
            .map(|(id, frames)| Track {
                id,
                entries: frames
                    .into_iter()
                    .map(|(frame, bbox)| TrackEntry { frame, bbox, interpolated: false })
                    .collect(),
            })
            .collect();
        Some(Self { tracks })
    }
}
