//! The ambiguity-clearness association graph.
//!
//! Every detection becomes a [`StateNode`]. Edges always point from an
//! earlier frame to a later one, so the graph is acyclic by construction.
//! A node is [`Clarity::Clear`] when it has no parent or exactly one
//! *determined* parent (score at least `c_thre`); otherwise it is
//! [`Clarity::Ambiguous`]. Chains of clear associations form tracklets.
//!
//! Frames up to [`ACGraph::finalized`] are frozen: their nodes are clear and
//! neither their parents nor the edges among frozen frames ever change again.
//! Later frames form the mutable window in which the structural actions in
//! [`actions`] operate.

mod actions;
mod validate;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use thiserror::Error;

use crate::types::{Observation, ObservationError};

pub use actions::{ConnectAction, ConnectKind};
pub use validate::Violation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub u32);

impl StateId {
    pub(crate) fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clarity {
    Clear,
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("unknown state {0}")]
    UnknownState(StateId),
    #[error("state {0} has been merged")]
    Merged(StateId),
    #[error("observation for frame {frame} arrived after frame {latest}")]
    OutOfOrder { frame: u32, latest: u32 },
    #[error("invalid observation: {0}")]
    InvalidObservation(#[from] ObservationError),
    #[error("parent {parent} is not in an earlier frame than child {child}")]
    FrameOrder { parent: StateId, child: StateId },
    #[error("states {0} and {1} are in different frames")]
    DifferentFrames(StateId, StateId),
    #[error("an action needs two distinct states, got {0} twice")]
    SameState(StateId),
    #[error("state {0} lies in a frozen frame")]
    Frozen(StateId),
    #[error("no association from {parent} to {child}")]
    MissingEdge { parent: StateId, child: StateId },
    #[error("association score {0} is out of range for this action")]
    InvalidScore(f64),
    #[error("states {0} and {1} both have determined parents; demote one before merging")]
    MergeConflict(StateId, StateId),
    #[error("window length must be at least 1")]
    InvalidWindow,
    #[error("clear threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("frame {frame} cannot be finalized: {reason}")]
    Finalize { frame: u32, reason: &'static str },
}

/// One hypothesized target state, backed by one detection.
#[derive(Debug, Clone, PartialEq)]
pub struct StateNode {
    pub id: StateId,
    pub frame: u32,
    pub obs: Observation,
    /// Active set with current association scores, sorted by parent id.
    pub parents: Vec<(StateId, f64)>,
    /// Sorted by child id.
    pub children: Vec<StateId>,
    pub clarity: Clarity,
    pub merged_into: Option<StateId>,
}

impl StateNode {
    pub fn is_merged(&self) -> bool {
        self.merged_into.is_some()
    }

    pub fn is_clear(&self) -> bool {
        self.clarity == Clarity::Clear
    }

    /// Largest score among current parents.
    pub fn best_parent_score(&self) -> Option<f64> {
        self.parents.iter().map(|&(_, s)| s).reduce(f64::max)
    }

    pub fn score_from(&self, parent: StateId) -> Option<f64> {
        self.parents.iter().find(|(p, _)| *p == parent).map(|&(_, s)| s)
    }
}

/// States joined by clear associations, oldest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tracklet {
    pub track_id: u32,
    pub members: Vec<StateId>,
}

/// Classification of a node from its parent list alone.
pub fn classify(node: &StateNode, c_thre: f64) -> Clarity {
    match node.parents.as_slice() {
        [] => Clarity::Clear,
        [(_, score)] if *score >= c_thre => Clarity::Clear,
        _ => Clarity::Ambiguous,
    }
}

#[derive(Debug, Clone)]
pub struct ACGraph {
    nodes: Vec<StateNode>,
    frames: BTreeMap<u32, Vec<StateId>>,
    latest_frame: u32,
    window_length: u32,
    finalized: u32,
    c_thre: f64,
    /// Nodes whose parent set changed since the last promotion sweep.
    pending: BTreeSet<StateId>,
    steps: usize,
    cur_steps: usize,
}

impl ACGraph {
    pub fn new(window_length: u32, c_thre: f64) -> Result<Self, GraphError> {
        if window_length == 0 {
            return Err(GraphError::InvalidWindow);
        }
        if !(c_thre > 0.0 && c_thre <= 1.0) {
            return Err(GraphError::InvalidThreshold(c_thre));
        }
        Ok(Self {
            nodes: Vec::new(),
            frames: BTreeMap::new(),
            latest_frame: 0,
            window_length,
            finalized: 0,
            c_thre,
            pending: BTreeSet::new(),
            steps: 0,
            cur_steps: 0,
        })
    }

    pub fn latest_frame(&self) -> u32 {
        self.latest_frame
    }

    pub fn window_length(&self) -> u32 {
        self.window_length
    }

    /// Last frozen frame (0 when nothing is frozen yet).
    pub fn finalized(&self) -> u32 {
        self.finalized
    }

    pub fn c_thre(&self) -> f64 {
        self.c_thre
    }

    /// Largest number of zipper steps taken by one structural change during
    /// the last public action.
    pub fn last_action_steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: StateId) -> Option<&StateNode> {
        self.nodes.get(id.index())
    }

    pub fn nodes(&self) -> impl Iterator<Item = &StateNode> {
        self.nodes.iter()
    }

    pub fn live_nodes(&self) -> impl Iterator<Item = &StateNode> {
        self.nodes.iter().filter(|n| !n.is_merged())
    }

    /// All states registered in `frame`, merged ones included.
    pub fn frame_states(&self, frame: u32) -> &[StateId] {
        self.frames.get(&frame).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn frames(&self) -> impl Iterator<Item = u32> + '_ {
        self.frames.keys().copied()
    }

    pub fn is_mutable(&self, id: StateId) -> bool {
        self.n(id).frame > self.finalized
    }

    /// Number of unmerged states in the mutable window.
    pub fn window_node_count(&self) -> usize {
        self.frames
            .range(self.finalized + 1..)
            .flat_map(|(_, ids)| ids.iter())
            .filter(|id| !self.n(**id).is_merged())
            .count()
    }

    pub fn classify(&self, id: StateId) -> Result<Clarity, GraphError> {
        let node = self.get(id)?;
        if node.is_merged() {
            return Err(GraphError::Merged(id));
        }
        Ok(classify(node, self.c_thre))
    }

    /// Advance the latest frame without adding states (frames with no detections).
    pub fn advance_to(&mut self, frame: u32) -> Result<(), GraphError> {
        if frame < self.latest_frame {
            return Err(GraphError::OutOfOrder { frame, latest: self.latest_frame });
        }
        self.latest_frame = frame;
        Ok(())
    }

    /// Register a detection as a new parentless (hence clear) state.
    pub fn add_state(&mut self, obs: Observation) -> Result<StateId, GraphError> {
        obs.validate()?;
        if obs.frame < self.latest_frame || obs.frame <= self.finalized {
            return Err(GraphError::OutOfOrder { frame: obs.frame, latest: self.latest_frame });
        }
        let id = StateId(self.nodes.len() as u32);
        self.latest_frame = obs.frame;
        self.frames.entry(obs.frame).or_default().push(id);
        self.nodes.push(StateNode {
            id,
            frame: obs.frame,
            obs,
            parents: Vec::new(),
            children: Vec::new(),
            clarity: Clarity::Clear,
            merged_into: None,
        });
        Ok(id)
    }

    /// Candidate parents for a state in the latest frame: unmerged states of
    /// the mutable window before it whose clear child, if any, comes later.
    pub fn init_active_set(&self, id: StateId) -> Result<Vec<StateId>, GraphError> {
        let node = self.get(id)?;
        let frame = node.frame;
        let lower = self
            .latest_frame
            .saturating_sub(self.window_length)
            .max(self.finalized + 1)
            .max(1);
        if frame <= lower {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for ids in self.frames.range(lower..frame).map(|(_, ids)| ids) {
            for &cand in ids {
                let c = self.n(cand);
                if c.is_merged() {
                    continue;
                }
                match self.clear_child(cand) {
                    Some(child) if self.n(child).frame <= frame => {}
                    _ => out.push(cand),
                }
            }
        }
        Ok(out)
    }

    /// The single clear parent of `id`, if it has one.
    pub fn clear_parent(&self, id: StateId) -> Option<(StateId, f64)> {
        let node = self.n(id);
        match (node.clarity, node.parents.as_slice()) {
            (Clarity::Clear, [edge]) => Some(*edge),
            _ => None,
        }
    }

    pub fn clear_child(&self, id: StateId) -> Option<StateId> {
        self.n(id).children.iter().copied().find(|&c| self.n(c).is_clear())
    }

    /// Last node on the clear-child chain from `id` whose frame is at most `frame`.
    pub fn latest_clear_descendant_before(&self, id: StateId, frame: u32) -> StateId {
        let mut cur = id;
        while let Some(next) = self.clear_child(cur) {
            if self.n(next).frame > frame {
                break;
            }
            cur = next;
        }
        cur
    }

    /// First member of the tracklet containing `id`.
    pub fn tracklet_head(&self, id: StateId) -> StateId {
        let mut cur = id;
        while let Some((p, _)) = self.clear_parent(cur) {
            cur = p;
        }
        cur
    }

    /// Clear ancestors of `id`, oldest first, ending with `id`.
    pub fn clear_lineage(&self, id: StateId) -> Vec<StateId> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur {
            out.push(c);
            cur = self.clear_parent(c).map(|(p, _)| p);
        }
        out.reverse();
        out
    }

    /// Maximal clear chains over unmerged states, ordered by (first frame, head id).
    pub fn tracklets(&self) -> Vec<Tracklet> {
        let mut heads: Vec<StateId> = self
            .live_nodes()
            .filter(|n| self.clear_parent(n.id).is_none())
            .map(|n| n.id)
            .collect();
        heads.sort_by_key(|&h| (self.n(h).frame, h));
        heads
            .into_iter()
            .enumerate()
            .map(|(i, head)| {
                let mut members = alloc::vec![head];
                let mut cur = head;
                while let Some(next) = self.clear_child(cur) {
                    members.push(next);
                    cur = next;
                }
                Tracklet { track_id: i as u32 + 1, members }
            })
            .collect()
    }

    /// Deterministic text dump, one line per node sorted by (frame, id).
    pub fn debug_dump(&self) -> String {
        let mut ids: Vec<StateId> = self.nodes.iter().map(|n| n.id).collect();
        ids.sort_by_key(|&id| (self.n(id).frame, id));
        let mut out = String::new();
        for id in ids {
            let n = self.n(id);
            let parents: Vec<String> = n.parents.iter().map(|(p, _)| format!("{p}")).collect();
            let children: Vec<String> = n.children.iter().map(|c| format!("{c}")).collect();
            let clarity = match n.clarity {
                Clarity::Clear => 'C',
                Clarity::Ambiguous => 'A',
            };
            let merged = n.merged_into.map_or_else(|| String::from("-"), |m| format!("{m}"));
            let _ = writeln!(
                out,
                "{} {} {} [{}] [{}] {}",
                id,
                n.frame,
                clarity,
                parents.join(","),
                children.join(","),
                merged
            );
        }
        out
    }

    pub(crate) fn n(&self, id: StateId) -> &StateNode {
        &self.nodes[id.index()]
    }

    pub(crate) fn n_mut(&mut self, id: StateId) -> &mut StateNode {
        &mut self.nodes[id.index()]
    }

    fn get(&self, id: StateId) -> Result<&StateNode, GraphError> {
        self.nodes.get(id.index()).ok_or(GraphError::UnknownState(id))
    }

    fn live(&self, id: StateId) -> Result<&StateNode, GraphError> {
        let node = self.get(id)?;
        if node.is_merged() {
            return Err(GraphError::Merged(id));
        }
        Ok(node)
    }
}

#[cfg(test)]
mod tests;
