//! Sliding-window association over the graph.
//!
//! For every new frame `t`:
//! 1. each new state is scored against its active set; a unique parent at or
//!    above `c_thre` becomes a clear association, otherwise every candidate
//!    above `a_thre` becomes an ambiguous one;
//! 2. ambiguous states of frames `t-l ..= t` are rescored against their
//!    parents' current tracklets, weak parents are dropped and a unique
//!    strong parent is promoted;
//! 3. frame `t-l` is settled by an optimal assignment and frozen.
//!
//! At the end of the stream the remaining frames are settled one by one with
//! a shrinking window.

use alloc::collections::btree_map::Entry;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use thiserror::Error;

use crate::affinity::{AffinityConfig, AffinityError, TrackletFeatures};
use crate::assignment::{AssignmentError, CostMatrix};
use crate::graph::{ACGraph, ConnectAction, ConnectKind, GraphError, StateId};
use crate::types::{DetectionSet, Observation, Track, TrackEntry, TrackSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackerError {
    #[error("invalid tracker configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Affinity(#[from] AffinityError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error("expected detections for frame {expected}, got frame {frame}")]
    NonConsecutive { frame: u32, expected: u32 },
    #[error("{0} ambiguous states remain; tracks can only be extracted after the flush")]
    AmbiguousRemaining(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Window length `l` in frames.
    pub window_length: u32,
    pub affinity: AffinityConfig,
    /// Shortest tracklet reported as a track.
    pub min_track_length: usize,
    /// Reserved for stochastic tie resolution; the tracker is deterministic.
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { window_length: 25, affinity: AffinityConfig::default(), min_track_length: 2, seed: 0 }
    }
}

impl TrackerConfig {
    pub fn with_window(window_length: u32) -> Self {
        Self { window_length, ..Self::default() }
    }

    /// Window covering `seconds` of video at `frame_rate`, at least one frame.
    pub fn window_for(frame_rate: f64, seconds: f64) -> u32 {
        libm::round(frame_rate * seconds).max(1.0) as u32
    }

    pub fn validate(&self) -> Result<(), TrackerError> {
        if self.window_length == 0 {
            return Err(TrackerError::Config("window length must be at least 1"));
        }
        if self.min_track_length == 0 {
            return Err(TrackerError::Config("minimum track length must be at least 1"));
        }
        self.affinity.validate().map_err(|_| TrackerError::Config("invalid affinity parameters"))
    }
}

/// Energy bookkeeping for shrink passes, filled when checking is enabled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ShrinkAudit {
    pub passes: usize,
    /// Passes that touched no other state and kept at least one parent.
    pub checked: usize,
    /// Checked passes whose energy rose by more than 1e-9.
    pub increases: usize,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    graph: ACGraph,
    /// Features of frozen states; their lineage never changes again.
    frozen: BTreeMap<StateId, TrackletFeatures>,
    trace: Vec<(u32, f64)>,
    audit: Option<ShrinkAudit>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self, TrackerError> {
        cfg.validate()?;
        let graph = ACGraph::new(cfg.window_length, cfg.affinity.c_thre)?;
        Ok(Self { cfg, graph, frozen: BTreeMap::new(), trace: Vec::new(), audit: None })
    }

    /// Record the energy change of every shrink pass (slow; for tests).
    pub fn enable_shrink_audit(&mut self) {
        self.audit = Some(ShrinkAudit::default());
    }

    pub fn shrink_audit(&self) -> Option<ShrinkAudit> {
        self.audit
    }

    pub fn graph(&self) -> &ACGraph {
        &self.graph
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn energy_trace(&self) -> &[(u32, f64)] {
        &self.trace
    }

    /// Process the detections of the next frame (possibly none).
    pub fn step(&mut self, frame: u32, detections: &[Observation]) -> Result<(), TrackerError> {
        let expected = self.graph.latest_frame() + 1;
        if frame != expected {
            return Err(TrackerError::NonConsecutive { frame, expected });
        }
        if let Some(d) = detections.iter().find(|d| d.frame != frame) {
            return Err(TrackerError::NonConsecutive { frame: d.frame, expected });
        }
        self.graph.advance_to(frame)?;
        let mut new_ids = Vec::with_capacity(detections.len());
        for d in detections {
            new_ids.push(self.graph.add_state(d.clone())?);
        }
        self.associate(&new_ids)?;
        let l = self.cfg.window_length;
        let first = frame.saturating_sub(l).max(self.graph.finalized() + 1).max(1);
        self.shrink_frames(first, frame)?;
        if frame > l {
            self.finalize(frame - l)?;
        }
        self.trace.push((frame, energy(&self.graph)));
        Ok(())
    }

    /// Settle all remaining frames, oldest first, with a shrinking window.
    pub fn flush(&mut self) -> Result<(), TrackerError> {
        let last = self.graph.latest_frame();
        while self.graph.finalized() < last {
            let f = self.graph.finalized() + 1;
            self.shrink_frames(f, last)?;
            self.finalize(f)?;
        }
        if let Some(entry) = self.trace.last_mut() {
            if entry.0 == last {
                entry.1 = energy(&self.graph);
            }
        }
        Ok(())
    }

    pub fn extract_tracks(&self) -> Result<TrackSet, TrackerError> {
        extract_tracks(&self.graph, self.cfg.min_track_length)
    }

    fn associate(&mut self, new_ids: &[StateId]) -> Result<(), TrackerError> {
        let aff = self.cfg.affinity;
        let mut features: BTreeMap<StateId, TrackletFeatures> = BTreeMap::new();
        let mut actions = Vec::new();
        for &child in new_ids {
            let cands = self.graph.init_active_set(child)?;
            let obs = self.graph.node(child).expect("new state exists").obs.clone();
            let mut scored = Vec::with_capacity(cands.len());
            for p in cands {
                let f = match features.entry(p) {
                    Entry::Occupied(e) => e.into_mut(),
                    Entry::Vacant(e) => e.insert(self.features(p)?),
                };
                scored.push((p, f.score(&obs, &aff)?.total));
            }
            let strong: Vec<&(StateId, f64)> = scored.iter().filter(|(_, s)| *s >= aff.c_thre).collect();
            if let [&(p, s)] = strong[..] {
                actions.push(ConnectAction { child, parent: p, score: s, kind: ConnectKind::Clear });
            } else {
                actions.extend(scored.iter().filter(|(_, s)| *s > aff.a_thre).map(|&(p, s)| ConnectAction {
                    child,
                    parent: p,
                    score: s,
                    kind: ConnectKind::Ambiguous,
                }));
            }
        }
        self.graph.apply_batch(&actions)?;
        Ok(())
    }

    fn shrink_frames(&mut self, first: u32, last: u32) -> Result<(), TrackerError> {
        let aff = self.cfg.affinity;
        for f in first..=last {
            let ids: Vec<StateId> = self.graph.frame_states(f).to_vec();
            for id in ids {
                let node = self.graph.node(id).expect("frame ids exist");
                if node.is_merged() || node.is_clear() {
                    continue;
                }
                let obs = node.obs.clone();
                let parents: Vec<StateId> = node.parents.iter().map(|&(p, _)| p).collect();
                let mut scores = Vec::with_capacity(parents.len());
                for p in parents {
                    scores.push((p, self.features(p)?.score(&obs, &aff)?.total));
                }
                if self.audit.is_some() {
                    self.audited_shrink(id, &scores)?;
                } else {
                    self.graph.shrink(id, &scores, aff.a_thre)?;
                }
            }
        }
        Ok(())
    }

    fn audited_shrink(&mut self, id: StateId, scores: &[(StateId, f64)]) -> Result<(), TrackerError> {
        let a_thre = self.cfg.affinity.a_thre;
        let others = |g: &ACGraph| -> Vec<(StateId, Option<StateId>, f64)> {
            g.nodes()
                .filter(|n| n.id != id)
                .map(|n| (n.id, n.merged_into, if n.is_merged() { 0.0 } else { n.best_parent_score().unwrap_or(0.0) }))
                .collect()
        };
        // Energy with refreshed scores but before any drop or promotion.
        let mut refreshed = self.graph.node(id).expect("state exists").parents.clone();
        for e in refreshed.iter_mut() {
            if let Some(&(_, s)) = scores.iter().find(|(p, _)| *p == e.0) {
                e.1 = s;
            }
        }
        let own_before = refreshed.iter().map(|&(_, s)| s).fold(0.0, f64::max);
        let before = others(&self.graph);
        self.graph.shrink(id, scores, a_thre)?;
        let node = self.graph.node(id).expect("state exists");
        let own_after = if node.is_merged() { None } else { node.best_parent_score() };
        let isolated = others(&self.graph) == before;
        let audit = self.audit.as_mut().expect("audit enabled");
        audit.passes += 1;
        if let (true, Some(after)) = (isolated, own_after) {
            audit.checked += 1;
            if -after > -own_before + 1e-9 {
                audit.increases += 1;
            }
        }
        Ok(())
    }

    fn finalize(&mut self, frame: u32) -> Result<(), TrackerError> {
        let m = CostMatrix::build(&self.graph, frame, self.cfg.affinity.a_thre);
        let decisions = if m.is_empty() { Vec::new() } else { m.decisions(&m.solve()?) };
        self.graph.finalize(frame, &decisions)?;
        Ok(())
    }

    /// Features of the clear lineage ending at `id`, reusing frozen prefixes.
    fn features(&mut self, id: StateId) -> Result<TrackletFeatures, TrackerError> {
        let aff = self.cfg.affinity;
        let mut pending = Vec::new();
        let mut cur = Some(id);
        let mut base = None;
        while let Some(c) = cur {
            if let Some(f) = self.frozen.get(&c) {
                base = Some(f.clone());
                break;
            }
            pending.push(c);
            cur = self.graph.clear_parent(c).map(|(p, _)| p);
        }
        let mut feats = base;
        for &s in pending.iter().rev() {
            let obs = &self.graph.node(s).expect("lineage ids exist").obs;
            match feats.as_mut() {
                Some(f) => f.extend(obs, &aff)?,
                None => feats = Some(TrackletFeatures::new(obs, &aff)?),
            }
            if !self.graph.is_mutable(s) {
                self.frozen.insert(s, feats.clone().expect("just set"));
            }
        }
        Ok(feats.expect("lineage is never empty"))
    }
}

/// `-Σ` over unmerged states of their best stored parent score.
pub fn energy(graph: &ACGraph) -> f64 {
    -graph.live_nodes().map(|n| n.best_parent_score().unwrap_or(0.0)).sum::<f64>()
}

/// Clear chains with at least `min_len` members, gaps filled by linear interpolation.
pub fn extract_tracks(graph: &ACGraph, min_len: usize) -> Result<TrackSet, TrackerError> {
    let ambiguous = graph.live_nodes().filter(|n| !n.is_clear()).count();
    if ambiguous > 0 {
        return Err(TrackerError::AmbiguousRemaining(ambiguous));
    }
    let mut tracks = Vec::new();
    for t in graph.tracklets().into_iter().filter(|t| t.members.len() >= min_len) {
        let mut entries: Vec<TrackEntry> = Vec::new();
        for &m in &t.members {
            let obs = &graph.node(m).expect("member exists").obs;
            if let Some(prev) = entries.last().copied() {
                let gap = obs.frame - prev.frame;
                for k in 1..gap {
                    let w = f64::from(k) / f64::from(gap);
                    entries.push(TrackEntry {
                        frame: prev.frame + k,
                        bbox: prev.bbox.lerp(&obs.bbox, w),
                        interpolated: true,
                    });
                }
            }
            entries.push(TrackEntry { frame: obs.frame, bbox: obs.bbox, interpolated: false });
        }
        tracks.push(Track { id: tracks.len() as u32 + 1, entries });
    }
    Ok(TrackSet { tracks })
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub tracks: TrackSet,
    /// Energy after each frame; the last entry is measured after the flush.
    pub energy: Vec<(u32, f64)>,
    pub final_energy: f64,
    pub graph: ACGraph,
}

/// Track a whole detection set, frames `1..=last`.
pub fn run_sequence(detections: &DetectionSet, cfg: &TrackerConfig) -> Result<RunOutput, TrackerError> {
    let mut tracker = Tracker::new(*cfg)?;
    run_with(&mut tracker, detections)
}

/// Like [`run_sequence`] on a prepared tracker, e.g. one with auditing enabled.
pub fn run_with(tracker: &mut Tracker, detections: &DetectionSet) -> Result<RunOutput, TrackerError> {
    for f in 1..=detections.last_frame() {
        tracker.step(f, detections.frame(f))?;
    }
    tracker.flush()?;
    Ok(RunOutput {
        tracks: tracker.extract_tracks()?,
        energy: tracker.trace.clone(),
        final_energy: energy(&tracker.graph),
        graph: tracker.graph.clone(),
    })
}
