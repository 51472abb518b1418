//! BFS tree construction from a designated source.
//!
//! Phase 1 runs in stages of two rounds. In the MYLEVEL round the nodes at
//! level t−1 announce it and unlevelled listeners adopt level t; in the
//! MAXLEVEL round every levelled node sends the largest level it has heard
//! of. The largest level reaches the source one hop per stage, so it grows
//! at the source every second stage until the frontier stops; two quiet
//! stages in a row mean the source knows its eccentricity D_s.
//!
//! The source then floods D_s in a separate field. A node at level t hears
//! it exactly t−1 rounds after the source sent it, which lets every node
//! compute the same start round for phase 2 without a global clock.
//!
//! Phase 2 takes three rounds: level ℓ transmits in round ℓ mod 3, when only
//! its children's level listens. A parent writes its ID into one of
//! 2·⌈log2 N⌉ BCC blocks, picked by a geometric draw, and a child takes an
//! ID from the highest block that decodes to a non-empty set. High blocks
//! are sparsely used, so that block is rarely overfull.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::common::{bic_union, Context, RunMeta};
use super::params::Params;
use super::sl::draw_level;
use crate::bcc::BccCode;
use crate::bic::{FieldKind, MessageLayout};
use crate::bits::BitVector;
use crate::error::{CodecError, SimError};
use crate::sim::{Action, Node, NodeRng};

const LEVEL: usize = 0;
const TERM: usize = 1;
const FIRST_SLOT: usize = 2;

#[derive(Debug, Clone)]
pub struct BfsLayout {
    layout: MessageLayout,
    slots: usize,
    id_space: u64,
}

impl BfsLayout {
    pub fn new(p: &Params) -> Result<Self, CodecError> {
        let bound = p.bound();
        let levels = p.n_bound + 1;
        let mut layout = MessageLayout::new()
            .with("level", FieldKind::Bic(p.bic(levels, bound)?))
            .with("term", FieldKind::Bic(p.bic(levels, bound)?));
        let slots = 2 * p.log_n();
        let slot_code = BccCode::new(p.id_space + 1, bound)?;
        for i in 0..slots {
            layout.push(format!("parent{i}"), FieldKind::Bcc(slot_code.clone()));
        }
        Ok(BfsLayout {
            layout,
            slots,
            id_space: p.id_space,
        })
    }

    pub fn width(&self) -> usize {
        self.layout.width()
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// The parent chosen from a phase-2 frame: the smallest ID of the
    /// highest slot that decodes to a non-empty set of valid IDs.
    fn pick_parent(&self, frames: &[BitVector]) -> Option<u64> {
        for slot in (0..self.slots).rev() {
            for f in frames {
                if self.layout.is_field_zero(f, FIRST_SLOT + slot) {
                    continue;
                }
                if let Ok(ids) = self.layout.decode_bcc(f, FIRST_SLOT + slot) {
                    if let Some(&id) = ids.first() {
                        if id >= 1 && ids.iter().all(|&x| x <= self.id_space) {
                            return Some(id);
                        }
                    }
                }
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BfsOutput {
    pub level: Option<u32>,
    /// ID of the chosen parent; None at the source.
    pub parent: Option<u64>,
    /// The source's eccentricity as announced by the termination flood.
    pub depth: Option<u32>,
    /// A decode went wrong somewhere: no level, no termination notice, or
    /// no usable parent slot.
    pub failed: bool,
}

pub struct BfsNode {
    layout: Rc<BfsLayout>,
    id: u64,
    is_source: bool,
    slot: usize,
    k: u64,
    level: Option<u32>,
    seen: u32,
    /// Source only: the last stage in which `seen` grew.
    last_growth: u32,
    depth: Option<u32>,
    send_term_at: Option<u64>,
    phase2: Option<u64>,
    parent: Option<u64>,
    failed: bool,
    done: bool,
}

impl BfsNode {
    pub fn new(layout: Rc<BfsLayout>, id: u64, is_source: bool, rng: &mut NodeRng) -> Self {
        let slot = draw_level(rng, layout.slots() as u32) as usize - 1;
        BfsNode {
            layout,
            id,
            is_source,
            slot,
            k: 0,
            level: is_source.then_some(0),
            seen: 0,
            last_growth: 0,
            depth: None,
            send_term_at: None,
            phase2: None,
            parent: None,
            failed: false,
            done: false,
        }
    }

    fn width(&self) -> usize {
        self.layout.width()
    }

    fn send_bic(&self, rng: &mut NodeRng, idx: usize, v: u64) -> Action {
        let mut f = self.layout.layout.empty_frame();
        self.layout
            .layout
            .put_bic(&mut f, idx, v, rng)
            .expect("level inside the code");
        Action::TransmitAndListen(f)
    }

    /// Fixes the phase-2 start once D_s is known; `heard` is the round in
    /// which the notice arrived (for the source, the round before it sends).
    fn schedule(&mut self, heard: u64, depth: u32) {
        let level = match self.level {
            Some(l) => l,
            None => {
                self.failed = true;
                depth
            }
        };
        self.depth = Some(depth);
        self.send_term_at = Some(heard + 1);
        self.phase2 = Some(heard + 2 + u64::from(depth.saturating_sub(level)));
        if level > depth {
            self.failed = true;
        }
    }

    fn phase2_step(&self) -> Option<u64> {
        self.phase2.and_then(|s| self.k.checked_sub(s))
    }
}

impl Node for BfsNode {
    type Output = BfsOutput;

    fn act(&mut self, _round: u64, rng: &mut NodeRng) -> Action {
        let listen = Action::Listen(self.width());
        if let Some(j) = self.phase2_step() {
            let Some(level) = self.level else {
                return Action::Idle;
            };
            if u64::from(level % 3) == j {
                let mut f = self.layout.layout.empty_frame();
                self.layout
                    .layout
                    .put_bcc(&mut f, FIRST_SLOT + self.slot, self.id)
                    .expect("id inside the code");
                return Action::Transmit(f);
            }
            if level >= 1 && u64::from((level - 1) % 3) == j {
                return listen;
            }
            return Action::Idle;
        }
        if self.send_term_at == Some(self.k) {
            let depth = self.depth.expect("depth known before relaying");
            return self.send_bic(rng, TERM, u64::from(depth));
        }
        if self.depth.is_some() {
            return listen;
        }
        let stage = (self.k / 2) as u32 + 1;
        match (self.k % 2, self.level) {
            (0, Some(l)) if l + 1 == stage => self.send_bic(rng, LEVEL, u64::from(l)),
            (1, Some(_)) => self.send_bic(rng, LEVEL, u64::from(self.seen)),
            _ => listen,
        }
    }

    fn receive(&mut self, _round: u64, frames: &[BitVector], _rng: &mut NodeRng) {
        let layout = Rc::clone(&self.layout);
        let layout = &layout.layout;
        if let Some(j) = self.phase2_step() {
            let listening = self.level.is_some_and(|l| l >= 1 && u64::from((l - 1) % 3) == j);
            if listening {
                self.parent = self.layout.pick_parent(frames);
                if self.parent.is_none() {
                    self.failed = true;
                }
            }
            if j == 2 {
                if self.level.is_none() {
                    self.failed = true;
                }
                self.done = true;
            }
            self.k += 1;
            return;
        }
        if self.depth.is_none() {
            if let Some(&d) = bic_union(layout, frames, TERM).values.last() {
                self.schedule(self.k, d as u32);
            }
        }
        if self.depth.is_none() {
            let stage = (self.k / 2) as u32 + 1;
            let heard = bic_union(layout, frames, LEVEL).values;
            if self.k % 2 == 0 {
                if self.level.is_none() && heard.contains(&u64::from(stage - 1)) {
                    self.level = Some(stage);
                    self.seen = self.seen.max(stage);
                }
            } else {
                let before = self.seen;
                if let Some(&m) = heard.last() {
                    self.seen = self.seen.max(m as u32);
                }
                if self.is_source {
                    if self.seen > before {
                        self.last_growth = stage;
                    }
                    if stage >= self.last_growth + 2 {
                        self.schedule(self.k, self.seen);
                    }
                }
            }
        }
        self.k += 1;
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn output(&self) -> BfsOutput {
        BfsOutput {
            level: self.level,
            parent: self.parent,
            depth: self.depth,
            failed: self.failed || !self.done,
        }
    }

    fn annotate(&self) -> Option<serde_json::Value> {
        Some(serde_json::json!({
            "level": self.level, "seen": self.seen, "depth": self.depth, "parent": self.parent,
        }))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BfsRun {
    pub meta: RunMeta,
    pub source: usize,
    pub outputs: Vec<BfsOutput>,
    /// Nodes that reported a failure.
    pub failures: usize,
}

/// Builds a BFS tree rooted at node index `source`.
pub fn run_bfs(ctx: &mut Context<'_>, source: usize) -> Result<BfsRun, SimError> {
    let topo = ctx.topo();
    if !topo.is_connected() {
        return Err(SimError::Precondition("BFS needs a connected graph".into()));
    }
    if source >= topo.n() {
        return Err(SimError::Precondition(format!("source {source} is not a node")));
    }
    let layout = Rc::new(BfsLayout::new(ctx.params())?);
    let nodes = ctx.stage("bfs", |info, rng| {
        BfsNode::new(layout.clone(), info.id, info.index == source, rng)
    })?;
    let outputs: Vec<BfsOutput> = nodes.iter().map(Node::output).collect();
    let failures = outputs.iter().filter(|o| o.failed).count();
    Ok(BfsRun {
        meta: ctx.meta(),
        source,
        outputs,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::common::RunConfig;
    use crate::sim::{Duplex, Topology};

    fn bfs(topo: &Topology, source: usize, seed: u64) -> BfsRun {
        let mut ctx = Context::new(topo, &RunConfig::new(seed));
        run_bfs(&mut ctx, source).unwrap()
    }

    fn distances(topo: &Topology, s: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; topo.n()];
        dist[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &u in topo.neighbors(v) {
                if dist[u] == u32::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    fn check(topo: &Topology, run: &BfsRun) {
        let dist = distances(topo, run.source);
        let ecc = *dist.iter().max().unwrap();
        assert_eq!(run.failures, 0);
        for (v, o) in run.outputs.iter().enumerate() {
            assert_eq!(o.level, Some(dist[v]), "node {v}");
            assert_eq!(o.depth, Some(ecc));
            match o.parent {
                None => assert_eq!(v, run.source),
                Some(pid) => {
                    let p = topo.index_of_id(pid).unwrap();
                    assert!(topo.neighbors(v).contains(&p));
                    assert_eq!(dist[p] + 1, dist[v]);
                }
            }
        }
    }

    #[test]
    fn path_from_an_end() {
        let topo = Topology::path(5);
        let run = bfs(&topo, 0, 3);
        check(&topo, &run);
        let parents: Vec<_> = run.outputs.iter().map(|o| o.parent).collect();
        assert_eq!(parents, vec![None, Some(1), Some(2), Some(3), Some(4)]);
    }

    #[test]
    fn star_from_centre_and_from_a_leaf() {
        let edges: Vec<_> = (1..8).map(|v| (0, v)).collect();
        let topo = Topology::new(8, &edges).unwrap();
        for seed in 0..5 {
            check(&topo, &bfs(&topo, 0, seed));
            check(&topo, &bfs(&topo, 5, seed));
        }
    }

    #[test]
    fn single_node_and_single_edge() {
        let topo = Topology::clique(1);
        let run = bfs(&topo, 0, 1);
        assert_eq!(run.outputs[0].level, Some(0));
        assert_eq!(run.outputs[0].depth, Some(0));
        check(&Topology::clique(2), &bfs(&Topology::clique(2), 1, 1));
    }

    #[test]
    fn longer_paths_and_cliques() {
        for seed in 0..5 {
            let topo = Topology::path(23);
            check(&topo, &bfs(&topo, 9, seed));
            let topo = Topology::clique(20);
            check(&topo, &bfs(&topo, 3, seed));
        }
    }

    #[test]
    fn round_count_is_linear_in_depth() {
        // 2·(2E+1) phase-1 rounds, E+1 flood rounds, 3 parent rounds.
        let topo = Topology::path(11);
        let run = bfs(&topo, 0, 1);
        assert_eq!(run.meta.rounds, 2 * 21 + 11 + 3);
    }

    #[test]
    fn half_duplex_matches() {
        let topo = Topology::path(6);
        for seed in 0..3 {
            let cfg = RunConfig::new(seed).with_duplex(Duplex::Half);
            let mut ctx = Context::new(&topo, &cfg);
            check(&topo, &run_bfs(&mut ctx, 2).unwrap());
        }
    }
}
