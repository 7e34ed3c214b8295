//! Structural actions on the graph.
//!
//! Every public action validates its arguments, applies the change and then
//! promotes any ambiguous state left with a single determined parent, so the
//! stored clarity of a mutable state always matches [`super::classify`].
//!
//! Attaching a state under a tracklet is realised as a zipper: the moving
//! head is placed after the latest clear descendant before its frame, and
//! whatever clear child was displaced continues the walk below it. States
//! meeting in the same frame are merged. Frames strictly increase along the
//! walk, so it always terminates.

use alloc::vec::Vec;

use super::{ACGraph, Clarity, GraphError, StateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectKind {
    Clear,
    Ambiguous,
}

/// One association produced by the first optimisation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectAction {
    pub child: StateId,
    pub parent: StateId,
    pub score: f64,
    pub kind: ConnectKind,
}

/// A head waiting to be attached below an anchor with a given score.
type Job = (StateId, StateId, f64);

/// Mutable top of a tracklet plus the frozen state it hangs from, if any.
#[derive(Debug, Clone, Copy)]
struct Segment {
    head: Option<StateId>,
    anchor: Option<StateId>,
    conf: f64,
}

impl ACGraph {
    /// Attach `child` under `parent` as a determined association.
    pub fn connect_clear(
        &mut self,
        child: StateId,
        parent: StateId,
        score: f64,
    ) -> Result<(), GraphError> {
        self.check_pair(child, parent)?;
        if !(score >= self.c_thre && score <= 1.0) {
            return Err(GraphError::InvalidScore(score));
        }
        self.begin();
        self.connect_clear_raw(child, parent, score);
        self.settle();
        Ok(())
    }

    /// Add `parent` (or its latest clear descendant before the child's frame)
    /// to the candidate parents of `child`.
    pub fn connect_ambiguous(
        &mut self,
        child: StateId,
        parent: StateId,
        score: f64,
    ) -> Result<(), GraphError> {
        self.check_pair(child, parent)?;
        if !(0.0..=1.0).contains(&score) {
            return Err(GraphError::InvalidScore(score));
        }
        self.begin();
        self.connect_ambiguous_raw(child, parent, score);
        self.settle();
        Ok(())
    }

    /// Apply a whole batch, promoting only once everything is in place.
    /// Actions run sorted by (child, parent, kind, score).
    pub fn apply_batch(&mut self, actions: &[ConnectAction]) -> Result<(), GraphError> {
        for a in actions {
            self.check_pair(a.child, a.parent)?;
            let ok = match a.kind {
                ConnectKind::Clear => a.score >= self.c_thre && a.score <= 1.0,
                ConnectKind::Ambiguous => (0.0..=1.0).contains(&a.score),
            };
            if !ok {
                return Err(GraphError::InvalidScore(a.score));
            }
        }
        // Canonical order makes the outcome independent of the input order.
        let mut order: Vec<&ConnectAction> = actions.iter().collect();
        order.sort_by(|x, y| {
            (x.child, x.parent, x.kind as u8)
                .cmp(&(y.child, y.parent, y.kind as u8))
                .then(x.score.total_cmp(&y.score))
        });
        self.begin();
        for a in order {
            let child = self.resolve(a.child);
            let parent = self.resolve(a.parent);
            if child == parent || self.n(parent).frame >= self.n(child).frame {
                continue;
            }
            self.restart_count();
            match a.kind {
                ConnectKind::Clear => self.connect_clear_raw(child, parent, a.score),
                ConnectKind::Ambiguous => self.connect_ambiguous_raw(child, parent, a.score),
            }
        }
        self.settle();
        Ok(())
    }

    /// Replace the score stored on an existing edge.
    pub fn set_score(
        &mut self,
        child: StateId,
        parent: StateId,
        score: f64,
    ) -> Result<(), GraphError> {
        self.live(child)?;
        if !self.is_mutable(child) {
            return Err(GraphError::Frozen(child));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(GraphError::InvalidScore(score));
        }
        let c_thre = self.c_thre;
        let node = self.n_mut(child);
        if node.clarity == Clarity::Clear && score < c_thre {
            // A determined association cannot fall below the clear threshold.
            return Err(GraphError::InvalidScore(score));
        }
        let edge = node
            .parents
            .iter_mut()
            .find(|(p, _)| *p == parent)
            .ok_or(GraphError::MissingEdge { parent, child })?;
        edge.1 = score;
        self.begin();
        self.pending.insert(child);
        self.settle();
        Ok(())
    }

    /// One shrink pass over an ambiguous state: store refreshed parent
    /// scores, drop parents scoring at most `a_thre`, and promote the parent
    /// that is alone at or above the clear threshold. Clear states are left as
    /// they are.
    pub fn shrink(
        &mut self,
        child: StateId,
        scores: &[(StateId, f64)],
        a_thre: f64,
    ) -> Result<(), GraphError> {
        self.live(child)?;
        if !self.is_mutable(child) {
            return Err(GraphError::Frozen(child));
        }
        if let Some(&(_, bad)) = scores.iter().find(|(_, s)| !(0.0..=1.0).contains(s)) {
            return Err(GraphError::InvalidScore(bad));
        }
        if self.n(child).is_clear() {
            return Ok(());
        }
        self.begin();
        let node = self.n_mut(child);
        for &(p, s) in scores {
            if let Some(edge) = node.parents.iter_mut().find(|(q, _)| *q == p) {
                edge.1 = s;
            }
        }
        let weak: Vec<StateId> =
            node.parents.iter().filter(|&&(_, s)| s <= a_thre).map(|&(p, _)| p).collect();
        for p in weak {
            self.unlink(p, child);
        }
        let strong: Vec<(StateId, f64)> =
            self.n(child).parents.iter().copied().filter(|&(_, s)| s >= self.c_thre).collect();
        if let [(p, s)] = strong[..] {
            if !self.n(child).is_clear() {
                self.zip(Some((child, p, s)));
            }
        }
        self.pending.insert(child);
        self.settle();
        Ok(())
    }

    pub fn disconnect(&mut self, child: StateId, parent: StateId) -> Result<(), GraphError> {
        self.live(child)?;
        self.live(parent)?;
        if !self.is_mutable(child) {
            return Err(GraphError::Frozen(child));
        }
        if self.n(child).score_from(parent).is_none() {
            return Err(GraphError::MissingEdge { parent, child });
        }
        self.begin();
        self.unlink(parent, child);
        self.settle();
        Ok(())
    }

    /// Absorb `absorbed` into `survivor`; both must sit in the same mutable frame.
    pub fn merge_states(
        &mut self,
        survivor: StateId,
        absorbed: StateId,
    ) -> Result<(), GraphError> {
        let s = self.live(survivor)?;
        let a = self.live(absorbed)?;
        if survivor == absorbed {
            return Err(GraphError::SameState(survivor));
        }
        if s.frame != a.frame {
            return Err(GraphError::DifferentFrames(survivor, absorbed));
        }
        if !self.is_mutable(survivor) {
            return Err(GraphError::Frozen(survivor));
        }
        if self.clear_parent(survivor).is_some() && self.clear_parent(absorbed).is_some() {
            return Err(GraphError::MergeConflict(survivor, absorbed));
        }
        self.begin();
        let job = self.merge_into(survivor, absorbed);
        self.zip(job);
        self.settle();
        Ok(())
    }

    /// Freeze `frame`, applying one decision per ambiguous state in it:
    /// attach to the chosen parent, or stand alone as a track birth.
    /// Forced attachments may carry scores below the clear threshold.
    pub fn finalize(
        &mut self,
        frame: u32,
        decisions: &[(StateId, Option<(StateId, f64)>)],
    ) -> Result<(), GraphError> {
        if frame != self.finalized + 1 {
            return Err(GraphError::Finalize { frame, reason: "frames must be frozen in order" });
        }
        for &(row, _) in decisions {
            let node = self.live(row)?;
            if node.frame != frame {
                return Err(GraphError::Finalize { frame, reason: "decision for a state in another frame" });
            }
        }
        let undecided = self.frame_states(frame).iter().any(|&id| {
            let n = self.n(id);
            !n.is_merged() && !n.is_clear() && !decisions.iter().any(|&(r, _)| r == id)
        });
        if undecided {
            return Err(GraphError::Finalize { frame, reason: "ambiguous state without a decision" });
        }
        self.begin();
        for &(row, choice) in decisions {
            self.restart_count();
            match choice {
                Some((parent, score)) if self.n(row).score_from(parent).is_some() => {
                    self.zip(Some((row, parent, score)));
                }
                _ => {
                    self.strip_parents(row);
                }
            }
        }
        debug_assert!(self
            .frame_states(frame)
            .iter()
            .all(|&id| self.n(id).is_merged() || self.n(id).is_clear()));
        self.finalized = frame;
        self.settle();
        Ok(())
    }

    fn check_pair(&self, child: StateId, parent: StateId) -> Result<(), GraphError> {
        let c = self.live(child)?;
        let p = self.live(parent)?;
        if child == parent {
            return Err(GraphError::SameState(child));
        }
        if p.frame >= c.frame {
            return Err(GraphError::FrameOrder { parent, child });
        }
        if !self.is_mutable(child) {
            return Err(GraphError::Frozen(child));
        }
        Ok(())
    }

    fn resolve(&self, mut id: StateId) -> StateId {
        while let Some(next) = self.n(id).merged_into {
            id = next;
        }
        id
    }

    fn begin(&mut self) {
        self.steps = 0;
        self.cur_steps = 0;
    }

    fn restart_count(&mut self) {
        self.cur_steps = 0;
    }

    fn bump(&mut self) {
        self.cur_steps += 1;
        self.steps = self.steps.max(self.cur_steps);
    }

    fn connect_clear_raw(&mut self, child: StateId, parent: StateId, score: f64) {
        if self.clear_parent(child).is_some() {
            self.unify(child, parent, score);
        } else {
            self.zip(Some((child, parent, score)));
        }
    }

    fn connect_ambiguous_raw(&mut self, child: StateId, parent: StateId, score: f64) {
        if self.clear_parent(child).is_some() {
            return;
        }
        let frame = self.n(child).frame;
        let xq = self.latest_clear_descendant_before(parent, frame);
        if self.n(xq).frame >= frame {
            return;
        }
        self.link(xq, child, score, Clarity::Ambiguous);
    }

    /// Promote every touched ambiguous state left with one determined parent.
    fn settle(&mut self) {
        while let Some(id) = self.pending.pop_first() {
            let n = self.n(id);
            if n.is_merged() || n.frame <= self.finalized || n.clarity != Clarity::Ambiguous {
                continue;
            }
            if let [(p, s)] = n.parents[..] {
                if s >= self.c_thre {
                    self.restart_count();
                    self.zip(Some((id, p, s)));
                }
            }
        }
    }

    fn zip(&mut self, mut job: Option<Job>) {
        while let Some((h, anchor, score)) = job.take() {
            self.bump();
            let frame = self.n(h).frame;
            let xp = self.latest_clear_descendant_before(anchor, frame);
            if self.n(xp).frame == frame {
                job = self.merge_into(h, xp);
                continue;
            }
            let moved: Vec<StateId> = self
                .n(xp)
                .children
                .iter()
                .copied()
                .filter(|&c| self.n(c).frame >= frame)
                .collect();
            let mut detached = Vec::with_capacity(moved.len());
            for c in moved {
                let was_clear = self.n(c).is_clear();
                if let Some(s) = self.unlink(xp, c) {
                    detached.push((c, s, was_clear));
                }
            }
            self.strip_parents(h);
            self.link(xp, h, score, Clarity::Clear);
            detached.sort_by_key(|&(c, _, _)| (self.n(c).frame, c));
            for (c, s, was_clear) in detached {
                if self.n(c).frame == frame {
                    continue;
                }
                if was_clear {
                    job = Some((c, h, s));
                } else {
                    self.connect_ambiguous_raw(c, h, s);
                }
            }
        }
    }

    /// Move every edge of `absorbed` onto `survivor` and tombstone it.
    /// Returns the displaced clear child, which still has to be zipped in.
    fn merge_into(&mut self, survivor: StateId, absorbed: StateId) -> Option<Job> {
        if let Some((q, s)) = self.clear_parent(absorbed) {
            self.unlink(q, absorbed);
            self.strip_parents(survivor);
            self.link(q, survivor, s, Clarity::Clear);
        } else {
            for (p, s) in self.strip_parents(absorbed) {
                self.connect_ambiguous_raw(survivor, p, s);
            }
        }
        let kids = self.n(absorbed).children.clone();
        let mut detached = Vec::with_capacity(kids.len());
        for c in kids {
            let was_clear = self.n(c).is_clear();
            if let Some(s) = self.unlink(absorbed, c) {
                detached.push((c, s, was_clear));
            }
        }
        detached.sort_by_key(|&(c, _, _)| (self.n(c).frame, c));
        let mut job = None;
        for (c, s, was_clear) in detached {
            if was_clear {
                job = Some((c, survivor, s));
            } else {
                self.connect_ambiguous_raw(c, survivor, s);
            }
        }
        let node = self.n_mut(absorbed);
        node.merged_into = Some(survivor);
        node.clarity = Clarity::Clear;
        self.pending.remove(&absorbed);
        job
    }

    /// Join the tracklets of a clear `child` and `parent`.
    fn unify(&mut self, child: StateId, parent: StateId, score: f64) {
        if self.tracklet_head(child) == self.tracklet_head(parent) {
            return;
        }
        let a = self.segment(child);
        let b = self.segment(parent);
        let Some(ah) = a.head else { return };
        let Some(bh) = b.head else {
            let Some(tail) = b.anchor else { return };
            match a.anchor {
                None => self.zip(Some((ah, tail, score))),
                Some(g) if score > a.conf => {
                    self.unlink(g, ah);
                    self.zip(Some((ah, tail, score)));
                }
                Some(_) => {}
            }
            return;
        };
        let (fa, fb) = (self.n(ah).frame, self.n(bh).frame);
        if fa == fb {
            let (s, l) = if self.survives(ah, &a, bh, &b) { (ah, bh) } else { (bh, ah) };
            if self.clear_parent(s).is_some() {
                if let Some((q, _)) = self.clear_parent(l) {
                    self.unlink(q, l);
                }
            }
            let job = self.merge_into(s, l);
            self.zip(job);
            return;
        }
        match (a.anchor, b.anchor) {
            (None, None) => {
                let (early, late) = if fa < fb { (ah, bh) } else { (bh, ah) };
                self.zip(Some((late, early, score)));
            }
            (Some(f), None) => self.zip(Some((bh, f, score))),
            (None, Some(f)) => self.zip(Some((ah, f, score))),
            (Some(f), Some(g)) => {
                let a_wins = a.conf > b.conf || (a.conf == b.conf && ah < bh);
                let (loser, loser_anchor, winner_anchor) =
                    if a_wins { (bh, g, f) } else { (ah, f, g) };
                self.unlink(loser_anchor, loser);
                self.zip(Some((loser, winner_anchor, score)));
            }
        }
    }

    /// Whether head `x` survives a same-frame merge against head `y`.
    fn survives(&self, x: StateId, sx: &Segment, y: StateId, sy: &Segment) -> bool {
        let (cx, cy) = (self.n(x).is_clear(), self.n(y).is_clear());
        match (cx, cy) {
            (true, false) => true,
            (false, true) => false,
            (false, false) => x < y,
            (true, true) => sx.conf > sy.conf || (sx.conf == sy.conf && x < y),
        }
    }

    fn segment(&self, x: StateId) -> Segment {
        if self.is_mutable(x) {
            let mut h = x;
            loop {
                match self.clear_parent(h) {
                    Some((q, _)) if self.is_mutable(q) => h = q,
                    Some((q, s)) => return Segment { head: Some(h), anchor: Some(q), conf: s },
                    None => return Segment { head: Some(h), anchor: None, conf: 0.0 },
                }
            }
        }
        let mut f = x;
        while let Some(d) = self.clear_child(f) {
            if self.is_mutable(d) {
                let conf = self.n(d).parents[0].1;
                return Segment { head: Some(d), anchor: Some(f), conf };
            }
            f = d;
        }
        Segment { head: None, anchor: Some(f), conf: 0.0 }
    }

    fn link(&mut self, parent: StateId, child: StateId, score: f64, clarity: Clarity) {
        let c = self.n_mut(child);
        match c.parents.binary_search_by_key(&parent, |e| e.0) {
            Ok(i) => {
                if clarity == Clarity::Clear || score > c.parents[i].1 {
                    c.parents[i].1 = score;
                }
            }
            Err(i) => c.parents.insert(i, (parent, score)),
        }
        c.clarity = clarity;
        let p = self.n_mut(parent);
        if let Err(i) = p.children.binary_search(&child) {
            p.children.insert(i, child);
        }
        self.pending.insert(child);
    }

    fn unlink(&mut self, parent: StateId, child: StateId) -> Option<f64> {
        let c = self.n_mut(child);
        let i = c.parents.binary_search_by_key(&parent, |e| e.0).ok()?;
        let (_, s) = c.parents.remove(i);
        if c.parents.is_empty() {
            c.clarity = Clarity::Clear;
        }
        let p = self.n_mut(parent);
        if let Ok(j) = p.children.binary_search(&child) {
            p.children.remove(j);
        }
        self.pending.insert(child);
        Some(s)
    }

    fn strip_parents(&mut self, child: StateId) -> Vec<(StateId, f64)> {
        let parents = self.n(child).parents.clone();
        for &(p, _) in &parents {
            self.unlink(p, child);
        }
        parents
    }
}
