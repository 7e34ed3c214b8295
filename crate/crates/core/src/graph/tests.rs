use super::*;
use crate::types::BBox;
use alloc::vec;
use proptest::prelude::*;

fn obs(frame: u32) -> Observation {
    Observation::new(frame, BBox::new(0.0, 0.0, 10.0, 20.0), 1.0)
}

/// Graph with one state per listed frame, ids in list order.
fn graph_with(window: u32, frames: &[u32]) -> (ACGraph, Vec<StateId>) {
    let mut g = ACGraph::new(window, 0.5).unwrap();
    let ids = frames.iter().map(|&f| g.add_state(obs(f)).unwrap()).collect();
    (g, ids)
}

fn assert_sound(g: &ACGraph) {
    let v = g.validate();
    assert!(v.is_empty(), "violations: {v:?}\n{}", g.debug_dump());
}

fn parent_ids(g: &ACGraph, id: StateId) -> Vec<StateId> {
    g.node(id).unwrap().parents.iter().map(|&(p, _)| p).collect()
}

#[test]
fn add_state_examples() {
    let mut g = ACGraph::new(5, 0.5).unwrap();
    let a = g.add_state(obs(1)).unwrap();
    assert!(g.node(a).unwrap().parents.is_empty());
    assert_eq!(g.node(a).unwrap().clarity, Clarity::Clear);

    g.add_state(obs(5)).unwrap();
    let b = g.add_state(obs(5)).unwrap();
    assert_eq!(g.frame_states(5).len(), 2);
    assert!(g.node(b).unwrap().parents.is_empty());
    assert_eq!(g.latest_frame(), 5);

    assert!(matches!(g.add_state(obs(3)), Err(GraphError::OutOfOrder { frame: 3, latest: 5 })));
}

#[test]
fn add_state_rejects_bad_boxes() {
    let mut g = ACGraph::new(5, 0.5).unwrap();
    let bad = Observation::new(1, BBox::new(0.0, 0.0, -1.0, 2.0), 1.0);
    assert!(matches!(g.add_state(bad), Err(GraphError::InvalidObservation(_))));
    assert!(g.is_empty());
}

#[test]
fn classify_examples() {
    let mut node = StateNode {
        id: StateId(9),
        frame: 4,
        obs: obs(4),
        parents: vec![],
        children: vec![],
        clarity: Clarity::Clear,
        merged_into: None,
    };
    assert_eq!(classify(&node, 0.5), Clarity::Clear);
    node.parents = vec![(StateId(1), 0.6)];
    assert_eq!(classify(&node, 0.5), Clarity::Clear);
    node.parents = vec![(StateId(1), 0.3), (StateId(2), 0.4)];
    assert_eq!(classify(&node, 0.5), Clarity::Ambiguous);
    node.parents = vec![(StateId(1), 0.3)];
    assert_eq!(classify(&node, 0.5), Clarity::Ambiguous);
}

#[test]
fn active_set_of_first_frame_is_empty() {
    let (g, ids) = graph_with(3, &[1, 1]);
    assert!(g.init_active_set(ids[1]).unwrap().is_empty());
}

#[test]
fn active_set_respects_window_and_clear_children() {
    // l = 3, t = 10: frame 6 lies outside the window.
    let (mut g, ids) = graph_with(3, &[6, 8, 9, 10]);
    let (f6, f8, f9, f10) = (ids[0], ids[1], ids[2], ids[3]);
    let set = g.init_active_set(f10).unwrap();
    assert!(!set.contains(&f6));
    assert!(set.contains(&f8));

    g.connect_clear(f9, f8, 0.9).unwrap();
    let set = g.init_active_set(f10).unwrap();
    assert!(!set.contains(&f8), "clear child in frame 9 blocks frame 10");
    assert!(set.contains(&f9));
}

#[test]
fn active_set_keeps_parent_whose_clear_child_comes_later() {
    let mut g = ACGraph::new(10, 0.5).unwrap();
    let a = g.add_state(obs(1)).unwrap();
    let b = g.add_state(obs(3)).unwrap();
    g.connect_clear(b, a, 0.9).unwrap();
    let c = g.add_state(obs(3)).unwrap();
    let set = g.init_active_set(c).unwrap();
    assert_eq!(set, vec![]);
    let d = g.add_state(obs(4)).unwrap();
    assert_eq!(g.init_active_set(d).unwrap(), vec![b, c]);
}

#[test]
fn clear_descendant_walk() {
    let (mut g, ids) = graph_with(10, &[14, 15, 17]);
    g.connect_clear(ids[1], ids[0], 0.9).unwrap();
    g.connect_clear(ids[2], ids[1], 0.9).unwrap();
    assert_eq!(g.latest_clear_descendant_before(ids[0], 16), ids[1]);
    assert_eq!(g.latest_clear_descendant_before(ids[2], 30), ids[2]);

    let (mut g, ids) = graph_with(10, &[14, 16]);
    g.connect_clear(ids[1], ids[0], 0.9).unwrap();
    assert_eq!(g.latest_clear_descendant_before(ids[0], 16), ids[1]);
}

#[test]
fn connect_ambiguous_examples() {
    // Child already clearly associated: unchanged.
    let (mut g, ids) = graph_with(10, &[1, 1, 2]);
    g.connect_clear(ids[2], ids[0], 0.9).unwrap();
    let before = g.debug_dump();
    g.connect_ambiguous(ids[2], ids[1], 0.3).unwrap();
    assert_eq!(g.debug_dump(), before);

    // Parent without descendants: one new edge, child ambiguous.
    let (mut g, ids) = graph_with(10, &[1, 1, 2]);
    g.connect_ambiguous(ids[2], ids[0], 0.3).unwrap();
    g.connect_ambiguous(ids[2], ids[1], 0.2).unwrap();
    let before = g.debug_dump();
    let (mut g2, ids2) = graph_with(10, &[1, 1, 2]);
    g2.connect_ambiguous(ids2[2], ids2[0], 0.3).unwrap();
    g2.connect_ambiguous(ids2[2], ids2[1], 0.2).unwrap();
    assert_eq!(before, g2.debug_dump());
    assert_eq!(parent_ids(&g, ids[2]), vec![ids[0], ids[1]]);
    assert_eq!(g.node(ids[2]).unwrap().clarity, Clarity::Ambiguous);
    assert_sound(&g);

    // Clear chain of the parent already reaches the child's frame: unchanged.
    let (mut g, ids) = graph_with(10, &[1, 2, 2]);
    g.connect_clear(ids[1], ids[0], 0.9).unwrap();
    let before = g.debug_dump();
    g.connect_ambiguous(ids[2], ids[0], 0.3).unwrap();
    assert_eq!(g.debug_dump(), before);
}

#[test]
fn connect_ambiguous_redirects_to_latest_descendant() {
    let (mut g, ids) = graph_with(10, &[1, 2, 3, 4]);
    g.connect_clear(ids[1], ids[0], 0.9).unwrap();
    g.connect_clear(ids[3], ids[1], 0.9).unwrap();
    // Child in frame 3 hooks onto the frame-2 state, not the frame-1 one.
    g.connect_ambiguous(ids[2], ids[0], 0.3).unwrap();
    assert_eq!(parent_ids(&g, ids[2]), vec![ids[1]]);
    assert_sound(&g);
}

#[test]
fn connect_ambiguous_rejects_same_frame() {
    let (mut g, ids) = graph_with(10, &[1, 1]);
    assert!(matches!(
        g.connect_ambiguous(ids[1], ids[0], 0.3),
        Err(GraphError::FrameOrder { .. })
    ));
    assert!(matches!(g.connect_ambiguous(ids[0], ids[0], 0.3), Err(GraphError::SameState(_))));
}

#[test]
fn connect_clear_merges_with_same_frame_descendant() {
    // Frame 14: states 2, 7, 9. Frame 16: states 2 and 7.
    let (mut g, ids) = graph_with(20, &[14, 14, 14, 16, 16]);
    let (x14_2, x14_7, x14_9, x16_2, x16_7) = (ids[0], ids[1], ids[2], ids[3], ids[4]);
    g.connect_clear(x16_2, x14_2, 0.8).unwrap();
    g.connect_ambiguous(x16_7, x14_9, 0.3).unwrap();
    g.connect_ambiguous(x16_7, x14_7, 0.2).unwrap();
    assert_eq!(g.node(x16_7).unwrap().clarity, Clarity::Ambiguous);

    g.connect_clear(x16_7, x14_2, 0.7).unwrap();
    assert_eq!(g.node(x16_2).unwrap().merged_into, Some(x16_7));
    assert_eq!(parent_ids(&g, x16_7), vec![x14_2]);
    assert_eq!(g.node(x16_7).unwrap().clarity, Clarity::Clear);
    assert!(g.node(x14_9).unwrap().children.is_empty());
    assert!(g.node(x14_7).unwrap().children.is_empty());
    assert_sound(&g);
}

#[test]
fn connect_clear_on_ambiguous_child_drops_other_parents() {
    let (mut g, ids) = graph_with(10, &[1, 1, 2]);
    g.connect_ambiguous(ids[2], ids[0], 0.3).unwrap();
    g.connect_ambiguous(ids[2], ids[1], 0.4).unwrap();
    g.connect_clear(ids[2], ids[1], 0.6).unwrap();
    let node = g.node(ids[2]).unwrap();
    assert_eq!(node.parents, vec![(ids[1], 0.6)]);
    assert_eq!(node.clarity, Clarity::Clear);
    assert_sound(&g);
}

#[test]
fn connect_clear_joins_single_tracklets() {
    let (mut g, ids) = graph_with(10, &[3, 5]);
    g.connect_clear(ids[1], ids[0], 0.9).unwrap();
    let tracklets = g.tracklets();
    assert_eq!(tracklets.len(), 1);
    assert_eq!(tracklets[0].members, ids);
}

#[test]
fn connect_clear_interleaves_two_tracklets() {
    let (mut g, ids) = graph_with(10, &[1, 2, 3, 4]);
    let (a1, b1, a2, b2) = (ids[0], ids[1], ids[2], ids[3]);
    g.connect_clear(a2, a1, 0.9).unwrap();
    g.connect_clear(b2, b1, 0.9).unwrap();
    g.connect_clear(b2, a2, 0.8).unwrap();
    let tracklets = g.tracklets();
    assert_eq!(tracklets.len(), 1);
    assert_eq!(tracklets[0].members, vec![a1, b1, a2, b2]);
    assert_sound(&g);
}

#[test]
fn connect_clear_between_same_tracklet_is_noop() {
    let (mut g, ids) = graph_with(10, &[1, 2, 3]);
    g.connect_clear(ids[1], ids[0], 0.9).unwrap();
    g.connect_clear(ids[2], ids[1], 0.9).unwrap();
    let before = g.debug_dump();
    g.connect_clear(ids[2], ids[0], 0.9).unwrap();
    assert_eq!(g.debug_dump(), before);
}

#[test]
fn connect_clear_rejects_low_score_and_reversed_order() {
    let (mut g, ids) = graph_with(10, &[1, 2]);
    assert!(matches!(g.connect_clear(ids[1], ids[0], 0.4), Err(GraphError::InvalidScore(_))));
    assert!(matches!(g.connect_clear(ids[0], ids[1], 0.9), Err(GraphError::FrameOrder { .. })));
}

#[test]
fn merge_isolated_state() {
    let (mut g, ids) = graph_with(10, &[1, 1]);
    g.merge_states(ids[0], ids[1]).unwrap();
    assert_eq!(g.node(ids[1]).unwrap().merged_into, Some(ids[0]));
    assert!(g.node(ids[0]).unwrap().parents.is_empty());
    assert_sound(&g);
}

#[test]
fn merge_moves_ambiguous_parents() {
    let (mut g, ids) = graph_with(10, &[1, 1, 2, 2]);
    let (p1, p2, s, a) = (ids[0], ids[1], ids[2], ids[3]);
    g.connect_ambiguous(a, p1, 0.3).unwrap();
    g.connect_ambiguous(a, p2, 0.2).unwrap();
    g.merge_states(s, a).unwrap();
    assert_eq!(parent_ids(&g, s), vec![p1, p2]);
    assert_eq!(g.node(s).unwrap().clarity, Clarity::Ambiguous);
    let merged = g.node(a).unwrap();
    assert!(merged.parents.is_empty() && merged.children.is_empty());
    assert_sound(&g);
}

#[test]
fn merge_moves_clear_parent_and_child() {
    let (mut g, ids) = graph_with(10, &[1, 2, 2, 3]);
    let (p, s, a, d) = (ids[0], ids[1], ids[2], ids[3]);
    g.connect_clear(a, p, 0.9).unwrap();
    g.connect_clear(d, a, 0.8).unwrap();
    g.merge_states(s, a).unwrap();
    let tracklets = g.tracklets();
    assert_eq!(tracklets.len(), 1);
    assert_eq!(tracklets[0].members, vec![p, s, d]);
    assert_sound(&g);
}

#[test]
fn merge_rejects_bad_pairs() {
    let (mut g, ids) = graph_with(10, &[1, 1, 2, 2]);
    assert!(matches!(g.merge_states(ids[0], ids[2]), Err(GraphError::DifferentFrames(..))));
    assert!(matches!(g.merge_states(ids[0], ids[0]), Err(GraphError::SameState(_))));
    g.connect_clear(ids[2], ids[0], 0.9).unwrap();
    g.connect_clear(ids[3], ids[1], 0.9).unwrap();
    assert!(matches!(g.merge_states(ids[2], ids[3]), Err(GraphError::MergeConflict(..))));
}

#[test]
fn disconnect_examples() {
    let (mut g, ids) = graph_with(10, &[1, 2]);
    g.connect_clear(ids[1], ids[0], 0.9).unwrap();
    g.disconnect(ids[1], ids[0]).unwrap();
    assert!(g.node(ids[1]).unwrap().parents.is_empty());
    assert_eq!(g.node(ids[1]).unwrap().clarity, Clarity::Clear);

    let (mut g, ids) = graph_with(10, &[1, 1, 2]);
    g.apply_batch(&[
        ConnectAction { child: ids[2], parent: ids[0], score: 0.6, kind: ConnectKind::Ambiguous },
        ConnectAction { child: ids[2], parent: ids[1], score: 0.3, kind: ConnectKind::Ambiguous },
    ])
    .unwrap();
    assert_eq!(g.node(ids[2]).unwrap().clarity, Clarity::Ambiguous);
    g.disconnect(ids[2], ids[1]).unwrap();
    assert_eq!(g.node(ids[2]).unwrap().clarity, Clarity::Clear);
    assert_eq!(g.clear_parent(ids[2]), Some((ids[0], 0.6)));
    assert_sound(&g);

    let (mut g, ids) = graph_with(10, &[1, 1, 2]);
    g.connect_ambiguous(ids[2], ids[0], 0.3).unwrap();
    g.connect_ambiguous(ids[2], ids[1], 0.4).unwrap();
    g.disconnect(ids[2], ids[1]).unwrap();
    assert_eq!(g.node(ids[2]).unwrap().clarity, Clarity::Ambiguous);

    assert!(matches!(g.disconnect(ids[2], ids[1]), Err(GraphError::MissingEdge { .. })));
}

#[test]
fn contested_batch_stays_ambiguous() {
    let (mut g, ids) = graph_with(10, &[1, 1, 2]);
    g.apply_batch(&[
        ConnectAction { child: ids[2], parent: ids[0], score: 0.7, kind: ConnectKind::Ambiguous },
        ConnectAction { child: ids[2], parent: ids[1], score: 0.6, kind: ConnectKind::Ambiguous },
    ])
    .unwrap();
    assert_eq!(g.node(ids[2]).unwrap().clarity, Clarity::Ambiguous);
    assert_sound(&g);
}

#[test]
fn validate_flags_two_clear_children() {
    let (mut g, ids) = graph_with(10, &[1, 2, 3]);
    g.connect_clear(ids[1], ids[0], 0.9).unwrap();
    assert_sound(&g);
    g.nodes[ids[2].index()].parents.push((ids[0], 0.9));
    g.nodes[ids[0].index()].children.push(ids[2]);
    assert_eq!(g.validate(), vec![Violation::SeveralClearChildren(ids[0])]);
}

#[test]
fn validate_flags_same_frame_edge() {
    let (mut g, ids) = graph_with(10, &[1, 1]);
    g.nodes[ids[1].index()].parents.push((ids[0], 0.9));
    g.nodes[ids[0].index()].children.push(ids[1]);
    assert_eq!(g.validate(), vec![Violation::FrameOrder { parent: ids[0], child: ids[1] }]);
}

#[test]
fn validate_flags_cycle_and_stale_window() {
    let (mut g, ids) = graph_with(2, &[1, 2]);
    g.nodes[ids[1].index()].parents.push((ids[0], 0.9));
    g.nodes[ids[0].index()].children.push(ids[1]);
    g.nodes[ids[0].index()].parents.push((ids[1], 0.9));
    g.nodes[ids[1].index()].children.push(ids[0]);
    assert!(g.validate().contains(&Violation::Cycle));

    let (mut g, _) = graph_with(2, &[1]);
    g.advance_to(4).unwrap();
    assert_eq!(g.validate(), vec![Violation::StaleWindow { finalized: 0, latest: 4 }]);
}

#[test]
fn finalize_applies_decisions() {
    let (mut g, ids) = graph_with(3, &[1, 1, 2, 2]);
    let (p1, p2, c1, c2) = (ids[0], ids[1], ids[2], ids[3]);
    g.connect_ambiguous(c1, p1, 0.45).unwrap();
    g.connect_ambiguous(c2, p1, 0.3).unwrap();
    g.connect_ambiguous(c2, p2, 0.2).unwrap();
    g.finalize(1, &[]).unwrap();
    assert!(g.finalize(2, &[(c1, Some((p1, 0.45)))]).is_err(), "c2 lacks a decision");
    g.finalize(2, &[(c1, Some((p1, 0.45))), (c2, Some((p2, 0.2)))]).unwrap();
    assert_eq!(g.clear_parent(c1), Some((p1, 0.45)));
    assert_eq!(g.clear_parent(c2), Some((p2, 0.2)));
    assert_eq!(g.finalized(), 2);
    assert_sound(&g);
    assert!(matches!(g.connect_ambiguous(c1, p2, 0.3), Err(GraphError::Frozen(_))));
}

#[test]
fn finalize_birth_strips_parents() {
    let (mut g, ids) = graph_with(3, &[1, 2]);
    g.connect_ambiguous(ids[1], ids[0], 0.05).unwrap();
    g.finalize(1, &[]).unwrap();
    g.finalize(2, &[(ids[1], None)]).unwrap();
    assert!(g.node(ids[1]).unwrap().parents.is_empty());
    assert_eq!(g.tracklets().len(), 2);
}

#[test]
fn pinned_heads_in_same_frame_keep_the_stronger_link() {
    // Frozen frame 1 holds two tracklet tails; frame 2 holds their mutable heads.
    let (mut g, ids) = graph_with(3, &[1, 1, 2, 2, 3]);
    let (f1, f2, h1, h2, x) = (ids[0], ids[1], ids[2], ids[3], ids[4]);
    g.connect_clear(h1, f1, 0.6).unwrap();
    g.connect_clear(h2, f2, 0.9).unwrap();
    g.connect_clear(x, h1, 0.8).unwrap();
    g.finalize(1, &[]).unwrap();
    // Unifying x (pinned through h1) with h2 merges h1 into h2.
    g.connect_clear(x, h2, 0.7).unwrap();
    assert_eq!(g.node(h1).unwrap().merged_into, Some(h2));
    assert_eq!(g.clear_parent(h2), Some((f2, 0.9)));
    assert_eq!(g.clear_parent(x).map(|(p, _)| p), Some(h2));
    assert!(g.node(f1).unwrap().children.is_empty());
    assert_sound(&g);
}

#[test]
fn tracklets_are_ordered_by_first_frame() {
    let (mut g, ids) = graph_with(10, &[1, 2, 2, 3]);
    g.connect_clear(ids[3], ids[2], 0.9).unwrap();
    let t = g.tracklets();
    assert_eq!(t[0].members, vec![ids[0]]);
    assert_eq!(t[0].track_id, 1);
    assert_eq!(t[1].members, vec![ids[1]]);
    assert_eq!(t[2].members, vec![ids[2], ids[3]]);
    assert_eq!(t[2].track_id, 3);
}

#[test]
fn debug_dump_format() {
    let (mut g, ids) = graph_with(10, &[1, 1, 2]);
    g.connect_ambiguous(ids[2], ids[0], 0.3).unwrap();
    g.connect_ambiguous(ids[2], ids[1], 0.2).unwrap();
    assert_eq!(g.debug_dump(), "0 1 C [] [2] -\n1 1 C [] [2] -\n2 2 A [0,1] [] -\n");
}

#[derive(Debug, Clone)]
enum Op {
    Add(u8),
    Clear(u16, u16, u8),
    Ambiguous(u16, u16, u8),
    Disconnect(u16, u8),
    Merge(u16, u16),
    Advance,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0u8..3).prop_map(Op::Add),
        3 => (any::<u16>(), any::<u16>(), any::<u8>()).prop_map(|(a, b, s)| Op::Clear(a, b, s)),
        3 => (any::<u16>(), any::<u16>(), any::<u8>()).prop_map(|(a, b, s)| Op::Ambiguous(a, b, s)),
        1 => (any::<u16>(), any::<u8>()).prop_map(|(a, i)| Op::Disconnect(a, i)),
        1 => (any::<u16>(), any::<u16>()).prop_map(|(a, b)| Op::Merge(a, b)),
        1 => Just(Op::Advance),
    ]
}

/// Move the frozen boundary up to `latest - l - 1`, deciding ambiguous
/// states by their best parent.
fn catch_up(g: &mut ACGraph) {
    while g.latest_frame() > g.finalized() + g.window_length() + 1 {
        let f = g.finalized() + 1;
        let decisions: Vec<_> = g
            .frame_states(f)
            .iter()
            .filter(|&&id| !g.node(id).unwrap().is_merged() && !g.node(id).unwrap().is_clear())
            .map(|&id| {
                let best = g.node(id).unwrap().parents.iter().copied().fold(None, |acc: Option<(StateId, f64)>, e| {
                    match acc {
                        Some(b) if b.1 >= e.1 => Some(b),
                        _ => Some(e),
                    }
                });
                (id, best)
            })
            .collect();
        g.finalize(f, &decisions).unwrap();
    }
}

proptest! {
    #[test]
    fn random_actions_keep_graph_sound(ops in proptest::collection::vec(op(), 1..120)) {
        let mut g = ACGraph::new(3, 0.5).unwrap();
        let mut frame = 1u32;
        for op in ops {
            let n = g.len() as u16;
            let bound = g.window_node_count();
            let ok = match op {
                Op::Add(k) => {
                    for _ in 0..=k {
                        g.add_state(obs(frame)).unwrap();
                    }
                    false
                }
                Op::Advance => {
                    frame += 1;
                    g.advance_to(frame).unwrap();
                    catch_up(&mut g);
                    false
                }
                _ if n < 2 => false,
                Op::Clear(a, b, s) => {
                    let score = 0.5 + f64::from(s) / 510.0;
                    g.connect_clear(StateId(u32::from(a % n)), StateId(u32::from(b % n)), score).is_ok()
                }
                Op::Ambiguous(a, b, s) => {
                    let score = f64::from(s) / 255.0;
                    g.connect_ambiguous(StateId(u32::from(a % n)), StateId(u32::from(b % n)), score).is_ok()
                }
                Op::Disconnect(a, i) => {
                    let c = StateId(u32::from(a % n));
                    let parents = &g.node(c).unwrap().parents;
                    if parents.is_empty() {
                        false
                    } else {
                        let p = parents[usize::from(i) % parents.len()].0;
                        g.disconnect(c, p).is_ok()
                    }
                }
                Op::Merge(a, b) => {
                    g.merge_states(StateId(u32::from(a % n)), StateId(u32::from(b % n))).is_ok()
                }
            };
            let v = g.validate();
            prop_assert!(v.is_empty(), "{:?}\n{}", v, g.debug_dump());
            if ok {
                prop_assert!(g.last_action_steps() <= bound);
            }
        }
    }
}
