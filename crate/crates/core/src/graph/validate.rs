use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::{classify, ACGraph, Clarity, StateId};

/// A broken structural invariant found by [`ACGraph::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Edge recorded on only one of its endpoints.
    OneSidedEdge { parent: StateId, child: StateId },
    DuplicateEdge { parent: StateId, child: StateId },
    /// Parent not in a strictly earlier frame.
    FrameOrder { parent: StateId, child: StateId },
    ClearWithSeveralParents(StateId),
    AmbiguousWithoutParent(StateId),
    /// Stored clarity disagrees with the parent list of a mutable state.
    Misclassified(StateId),
    SeveralClearChildren(StateId),
    AmbiguousChildAfterClearChild { parent: StateId, child: StateId },
    MergedWithEdges(StateId),
    EdgeToMerged { parent: StateId, child: StateId },
    Cycle,
    AmbiguousInFrozenFrame(StateId),
    /// The frozen boundary lags behind the window.
    StaleWindow { finalized: u32, latest: u32 },
    FrameIndex(StateId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl ACGraph {
    /// Check every structural invariant; an empty list means the graph is sound.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let known = |id: StateId| id.index() < self.nodes.len();

        for node in &self.nodes {
            let id = node.id;
            if node.is_merged() {
                if !node.parents.is_empty() || !node.children.is_empty() {
                    out.push(Violation::MergedWithEdges(id));
                }
                continue;
            }
            for (i, &(p, _)) in node.parents.iter().enumerate() {
                if node.parents[..i].iter().any(|&(q, _)| q == p) {
                    out.push(Violation::DuplicateEdge { parent: p, child: id });
                    continue;
                }
                if !known(p) || !self.n(p).children.contains(&id) {
                    out.push(Violation::OneSidedEdge { parent: p, child: id });
                    continue;
                }
                if self.n(p).is_merged() {
                    out.push(Violation::EdgeToMerged { parent: p, child: id });
                }
                if self.n(p).frame >= node.frame {
                    out.push(Violation::FrameOrder { parent: p, child: id });
                }
            }
            for &c in &node.children {
                if !known(c) || self.n(c).score_from(id).is_none() {
                    out.push(Violation::OneSidedEdge { parent: id, child: c });
                }
            }
            match node.clarity {
                Clarity::Clear if node.parents.len() > 1 => {
                    out.push(Violation::ClearWithSeveralParents(id));
                }
                Clarity::Ambiguous if node.parents.is_empty() => {
                    out.push(Violation::AmbiguousWithoutParent(id));
                }
                _ => {}
            }
            if node.frame > self.finalized {
                if node.parents.len() <= 1 && classify(node, self.c_thre) != node.clarity {
                    out.push(Violation::Misclassified(id));
                }
            } else if node.clarity != Clarity::Clear {
                out.push(Violation::AmbiguousInFrozenFrame(id));
            }

            let live_children = node.children.iter().copied().filter(|&c| known(c));
            let clear: Vec<StateId> = live_children
                .clone()
                .filter(|&c| self.n(c).is_clear() && self.n(c).score_from(id).is_some())
                .collect();
            if clear.len() > 1 {
                out.push(Violation::SeveralClearChildren(id));
            }
            if let Some(cf) = clear.iter().map(|&c| self.n(c).frame).min() {
                for c in live_children.filter(|&c| !self.n(c).is_clear()) {
                    if self.n(c).frame >= cf {
                        out.push(Violation::AmbiguousChildAfterClearChild { parent: id, child: c });
                    }
                }
            }
            if !self.frame_states(node.frame).contains(&id) {
                out.push(Violation::FrameIndex(id));
            }
        }

        if self.latest_frame > self.finalized + self.window_length + 1 {
            out.push(Violation::StaleWindow { finalized: self.finalized, latest: self.latest_frame });
        }
        if !self.is_acyclic() {
            out.push(Violation::Cycle);
        }
        out
    }

    fn is_acyclic(&self) -> bool {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        for node in &self.nodes {
            for &c in &node.children {
                if c.index() < n {
                    indegree[c.index()] += 1;
                }
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = queue.pop_front() {
            seen += 1;
            for &c in &self.nodes[i].children {
                if c.index() < n {
                    indegree[c.index()] -= 1;
                    if indegree[c.index()] == 0 {
                        queue.push_back(c.index());
                    }
                }
            }
        }
        seen == n
    }
}
