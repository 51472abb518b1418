//! Leader election.
//!
//! Every node draws an SL pair (r, z); the node with the lexicographically
//! largest pair wins. On a clique two rounds suffice. In general graphs the
//! staged protocol floods the best r, then the best z among holders of that
//! r, then hop distances from the current candidate and the largest such
//! distance. A node stops once its (r, z, maxd) view has been stable long
//! enough; see [`GeneralLeader`] for why "long enough" grows with maxd.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::common::{bic_union, Context, RunMeta};
use super::params::Params;
use super::sl::{sl_draw, SlDraw, SlLimits};
use crate::bic::{FieldKind, MessageLayout};
use crate::bits::BitVector;
use crate::error::{CodecError, SimError};
use crate::sim::{Action, Node, NodeRng, Topology};

const R: usize = 0;
const Z: usize = 1;
const D: usize = 2;

/// Frame layout shared by both variants: r, z and a distance field.
pub fn leader_layout(p: &Params) -> Result<MessageLayout, CodecError> {
    let bound = p.bound();
    Ok(MessageLayout::new()
        .with("r", FieldKind::Bic(p.bic(u64::from(p.r_cap()) + 1, bound)?))
        .with("z", FieldKind::Bic(p.bic((1u64 << p.z_bits) + 1, bound)?))
        .with("d", FieldKind::Bic(p.bic(p.n_bound + 1, bound)?)))
}

pub fn limits(p: &Params) -> SlLimits {
    SlLimits {
        r_cap: p.r_cap(),
        z_bits: p.z_bits,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderOutput {
    /// The node's own draw.
    pub draw: SlDraw,
    /// The pair of the node it believes is the leader.
    pub leader: Option<SlDraw>,
    pub is_leader: bool,
    /// Distance to the leader.
    pub d: Option<u32>,
    /// Largest distance from the leader seen; at the leader this is its
    /// eccentricity.
    pub maxd: Option<u32>,
    /// Stages completed (0 for the single-hop variant).
    pub stages: u32,
}

fn frame_with(layout: &MessageLayout, rng: &mut NodeRng, parts: &[(usize, u64)]) -> BitVector {
    let mut f = layout.empty_frame();
    for &(idx, v) in parts {
        layout.put_bic(&mut f, idx, v, rng).expect("value inside the code");
    }
    f
}

/// The two-round clique protocol.
pub struct SingleHopLeader {
    layout: Rc<MessageLayout>,
    draw: SlDraw,
    step: u8,
    top: u32,
    leader_z: Option<u64>,
}

impl SingleHopLeader {
    pub fn new(layout: Rc<MessageLayout>, draw: SlDraw) -> Self {
        SingleHopLeader {
            layout,
            draw,
            step: 0,
            top: draw.r,
            leader_z: None,
        }
    }
}

impl Node for SingleHopLeader {
    type Output = LeaderOutput;

    fn act(&mut self, _round: u64, rng: &mut NodeRng) -> Action {
        match self.step {
            0 => Action::TransmitAndListen(frame_with(&self.layout, rng, &[(R, u64::from(self.draw.r))])),
            _ if self.draw.r == self.top => {
                Action::TransmitAndListen(frame_with(&self.layout, rng, &[(Z, self.draw.z)]))
            }
            _ => Action::Listen(self.layout.width()),
        }
    }

    fn receive(&mut self, _round: u64, frames: &[BitVector], _rng: &mut NodeRng) {
        if self.step == 0 {
            let rs = bic_union(&self.layout, frames, R).values;
            self.top = rs.iter().map(|&r| r as u32).fold(self.draw.r, u32::max);
        } else {
            let zs = bic_union(&self.layout, frames, Z).values;
            let own = (self.draw.r == self.top).then_some(self.draw.z);
            self.leader_z = zs.into_iter().chain(own).max();
        }
        self.step += 1;
    }

    fn is_done(&self) -> bool {
        self.step >= 2
    }

    fn output(&self) -> LeaderOutput {
        let leader = self.leader_z.map(|z| SlDraw { r: self.top, z });
        let is_leader = leader == Some(self.draw);
        LeaderOutput {
            draw: self.draw,
            leader,
            is_leader,
            d: is_leader.then_some(0),
            maxd: None,
            stages: 0,
        }
    }
}

/// (r, z, maxd) as seen at the end of a stage.
type View = (u32, Option<u64>, Option<u32>);

/// The staged protocol for general graphs.
///
/// Stopping after a fixed number of quiet stages is unsafe: a small region
/// around a local candidate can sit still while the winner's level is still
/// on its way. A region stops growing only once a better candidate touches
/// it, at the latest around stage maxd, and from the touching point the
/// better candidate needs at most maxd + d more stages to reach this node.
/// The quiet window is therefore ⌈le_window_factor·(maxd + d)⌉ +
/// le_window_extra stages.
pub struct GeneralLeader {
    layout: Rc<MessageLayout>,
    draw: SlDraw,
    k: u64,
    seen_r: u32,
    r: u32,
    z: Option<u64>,
    d: Option<u32>,
    maxd: Option<u32>,
    /// Set when round (t,0) raised r; the node then skips (t,1).
    raised: bool,
    last: Option<View>,
    /// Consecutive stages that ended with the view `last`.
    run: u32,
    stages: u32,
    window_factor: f64,
    window_extra: u32,
    terminated: bool,
}

impl GeneralLeader {
    pub fn new(layout: Rc<MessageLayout>, draw: SlDraw, p: &Params) -> Self {
        GeneralLeader {
            layout,
            draw,
            k: 0,
            seen_r: draw.r,
            r: draw.r,
            z: Some(draw.z),
            d: Some(0),
            maxd: Some(0),
            raised: false,
            last: None,
            run: 0,
            stages: 0,
            window_factor: p.le_window_factor,
            window_extra: p.le_window_extra,
            terminated: false,
        }
    }

    /// Stage number and round within the stage; None during bootstrap.
    fn position(&self) -> Option<(u32, u64)> {
        (self.k >= 3).then(|| (((self.k - 3) / 4) as u32 + 1, (self.k - 3) % 4))
    }

    fn forget_candidate(&mut self) {
        self.z = None;
        self.d = None;
        self.maxd = None;
    }

    /// A view that stays put while its region could still be invaded by a
    /// better candidate is not final: the invasion front moves one hop per
    /// stage, so the wait grows with the region's radius.
    fn end_stage(&mut self) {
        self.stages += 1;
        let view = (self.r, self.z, self.maxd);
        if self.last == Some(view) {
            self.run += 1;
        } else {
            self.last = Some(view);
            self.run = 1;
        }
        if let (Some(m), Some(d)) = (self.maxd, self.d) {
            let window = (self.window_factor * f64::from(m + d)).ceil() as u32 + self.window_extra;
            if self.run >= window {
                self.terminated = true;
            }
        }
    }

    fn send(&self, rng: &mut NodeRng, parts: &[(usize, u64)]) -> Action {
        Action::TransmitAndListen(frame_with(&self.layout, rng, parts))
    }

    /// Whether the heard r- and z-sets name exactly our current candidate.
    fn matches(&self, rs: &[u64], zs: &[u64]) -> bool {
        rs == [u64::from(self.r)] && self.z.is_some_and(|z| zs == [z])
    }
}

impl Node for GeneralLeader {
    type Output = LeaderOutput;

    fn act(&mut self, _round: u64, rng: &mut NodeRng) -> Action {
        let listen = Action::Listen(self.layout.width());
        let r = u64::from(self.r);
        match self.position() {
            None if self.k < 2 => self.send(rng, &[(R, u64::from(self.seen_r))]),
            None => {
                if self.draw.r == self.seen_r {
                    self.send(rng, &[(R, r), (Z, self.draw.z)])
                } else {
                    listen
                }
            }
            Some((_, 0)) => self.send(rng, &[(R, r)]),
            Some((_, 1)) => match self.z {
                Some(z) if !self.raised => self.send(rng, &[(R, r), (Z, z)]),
                _ => listen,
            },
            Some((_, 2)) => match (self.z, self.d) {
                (Some(z), Some(d)) => self.send(rng, &[(R, r), (Z, z), (D, u64::from(d))]),
                _ => listen,
            },
            Some(_) => match (self.z, self.maxd) {
                (Some(z), Some(m)) => self.send(rng, &[(R, r), (Z, z), (D, u64::from(m))]),
                _ => listen,
            },
        }
    }

    fn receive(&mut self, _round: u64, frames: &[BitVector], _rng: &mut NodeRng) {
        let rs = bic_union(&self.layout, frames, R).values;
        match self.position() {
            None if self.k < 2 => {
                if let Some(&m) = rs.last() {
                    self.seen_r = self.seen_r.max(m as u32);
                }
            }
            None => {
                let zs = bic_union(&self.layout, frames, Z).values;
                let clean = rs == [u64::from(self.seen_r)];
                if self.draw.r == self.seen_r {
                    if clean && zs.last().is_some_and(|&z| z > self.draw.z) {
                        self.z = zs.last().copied();
                        self.d = None;
                        self.maxd = None;
                    }
                } else {
                    self.r = self.seen_r;
                    self.forget_candidate();
                    if clean {
                        self.z = zs.last().copied();
                    }
                }
            }
            Some((_, 0)) => {
                self.raised = false;
                if let Some(&m) = rs.last() {
                    if m as u32 > self.r {
                        self.r = m as u32;
                        self.forget_candidate();
                        self.raised = true;
                    }
                }
            }
            Some((_, 1)) => {
                let zs = bic_union(&self.layout, frames, Z).values;
                if rs == [u64::from(self.r)] {
                    if let Some(&zm) = zs.last() {
                        if self.z.is_none_or(|z| zm > z) {
                            self.z = Some(zm);
                            self.d = None;
                            self.maxd = None;
                        }
                    }
                }
            }
            Some((_, 2)) => {
                let zs = bic_union(&self.layout, frames, Z).values;
                if self.matches(&rs, &zs) {
                    let ds = bic_union(&self.layout, frames, D).values;
                    if let Some(&lo) = ds.first() {
                        let nd = lo as u32 + 1;
                        if self.d.is_none_or(|d| nd < d) {
                            self.d = Some(nd);
                            self.maxd = Some(self.maxd.map_or(nd, |m| m.max(nd)));
                        }
                    }
                }
            }
            Some(_) => {
                let zs = bic_union(&self.layout, frames, Z).values;
                if self.maxd.is_some() && self.matches(&rs, &zs) {
                    if let Some(&hi) = bic_union(&self.layout, frames, D).values.last() {
                        self.maxd = self.maxd.map(|m| m.max(hi as u32));
                    }
                }
                self.end_stage();
            }
        }
        self.k += 1;
    }

    fn is_done(&self) -> bool {
        self.terminated
    }

    fn output(&self) -> LeaderOutput {
        let leader = self.z.map(|z| SlDraw { r: self.r, z });
        LeaderOutput {
            draw: self.draw,
            leader,
            is_leader: leader == Some(self.draw) && self.d == Some(0),
            d: self.d,
            maxd: self.maxd,
            stages: self.stages,
        }
    }

    fn annotate(&self) -> Option<serde_json::Value> {
        Some(serde_json::json!({
            "r": self.r, "z": self.z, "d": self.d, "maxd": self.maxd,
        }))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeaderRun {
    pub meta: RunMeta,
    pub outputs: Vec<LeaderOutput>,
    /// Index of the node holding the largest draw, when that draw is unique.
    pub argmax: Option<usize>,
    /// The largest draw is shared by several nodes.
    pub ambiguous: bool,
    /// Every node names the same leader and it is the largest draw.
    pub agreed: bool,
    /// The elected node's maxd: its eccentricity, a 2-approximation of the
    /// diameter. General variant only.
    pub diameter_estimate: Option<u32>,
    /// Largest stage count over all nodes.
    pub stages: u32,
}

impl LeaderRun {
    /// The node every other node agreed on.
    pub fn leader(&self) -> Option<usize> {
        self.agreed.then_some(self.argmax).flatten()
    }

    fn summarize(meta: RunMeta, outputs: Vec<LeaderOutput>) -> Self {
        let best = outputs.iter().map(|o| o.draw).max();
        let holders: Vec<usize> = outputs
            .iter()
            .enumerate()
            .filter(|(_, o)| Some(o.draw) == best)
            .map(|(i, _)| i)
            .collect();
        let ambiguous = holders.len() > 1;
        let argmax = (!ambiguous).then(|| holders.first().copied()).flatten();
        let agreed = !ambiguous && best.is_some() && outputs.iter().all(|o| o.leader == best);
        let diameter_estimate = argmax.and_then(|i| outputs[i].maxd);
        let stages = outputs.iter().map(|o| o.stages).max().unwrap_or(0);
        LeaderRun {
            meta,
            outputs,
            argmax,
            ambiguous,
            agreed,
            diameter_estimate,
            stages,
        }
    }
}

fn draws_and_layout(ctx: &Context<'_>) -> Result<(Rc<MessageLayout>, SlLimits), SimError> {
    Ok((Rc::new(leader_layout(ctx.params())?), limits(ctx.params())))
}

/// Two-round election on a clique.
pub fn run_leader_single_hop(ctx: &mut Context<'_>) -> Result<LeaderRun, SimError> {
    let topo: &Topology = ctx.topo();
    if !topo.is_complete() {
        return Err(SimError::Precondition(
            "single-hop election needs a clique".into(),
        ));
    }
    let (layout, lim) = draws_and_layout(ctx)?;
    let nodes = ctx.stage("leader-single-hop", |_, rng| {
        SingleHopLeader::new(layout.clone(), sl_draw(rng, lim))
    })?;
    let outputs = nodes.iter().map(Node::output).collect();
    Ok(LeaderRun::summarize(ctx.meta(), outputs))
}

/// The staged election; also yields the leader's eccentricity.
pub fn run_leader(ctx: &mut Context<'_>) -> Result<LeaderRun, SimError> {
    if !ctx.topo().is_connected() {
        return Err(SimError::Precondition("leader election needs a connected graph".into()));
    }
    let (layout, lim) = draws_and_layout(ctx)?;
    let p = ctx.params().clone();
    let nodes = ctx.stage("leader", |_, rng| {
        GeneralLeader::new(layout.clone(), sl_draw(rng, lim), &p)
    })?;
    let outputs = nodes.iter().map(Node::output).collect();
    Ok(LeaderRun::summarize(ctx.meta(), outputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::common::RunConfig;
    use crate::sim::{Duplex, RunStatus};

    fn run(topo: &Topology, seed: u64) -> LeaderRun {
        let mut ctx = Context::new(topo, &RunConfig::new(seed));
        run_leader(&mut ctx).unwrap()
    }

    #[test]
    fn single_node_elects_itself() {
        let topo = Topology::clique(1);
        let mut ctx = Context::new(&topo, &RunConfig::new(1));
        let out = run_leader_single_hop(&mut ctx).unwrap();
        assert!(out.agreed);
        assert!(out.outputs[0].is_leader);
        let out = run(&topo, 1);
        assert!(out.agreed);
        assert_eq!(out.diameter_estimate, Some(0));
    }

    #[test]
    fn single_hop_agrees_on_argmax() {
        let topo = Topology::clique(32);
        let mut ok = 0;
        for seed in 0..30 {
            let mut ctx = Context::new(&topo, &RunConfig::new(seed));
            let out = run_leader_single_hop(&mut ctx).unwrap();
            assert_eq!(out.meta.rounds, 2);
            if out.agreed {
                ok += 1;
                assert!(out.outputs[out.argmax.unwrap()].is_leader);
            } else {
                assert!(out.ambiguous, "seed {seed}");
            }
        }
        assert!(ok >= 28);
    }

    #[test]
    fn single_hop_rejects_non_cliques() {
        let topo = Topology::path(3);
        let mut ctx = Context::new(&topo, &RunConfig::new(1));
        assert!(run_leader_single_hop(&mut ctx).is_err());
    }

    #[test]
    fn path_elects_argmax_and_its_eccentricity() {
        let topo = Topology::path(9);
        for seed in 0..10 {
            let out = run(&topo, seed);
            assert_eq!(out.meta.status, RunStatus::Completed);
            if out.ambiguous {
                continue;
            }
            assert!(out.agreed, "seed {seed}");
            let lead = out.argmax.unwrap();
            let ecc = lead.max(8 - lead) as u32;
            assert_eq!(out.diameter_estimate, Some(ecc));
            for (v, o) in out.outputs.iter().enumerate() {
                assert_eq!(o.d, Some(v.abs_diff(lead) as u32));
            }
        }
    }

    #[test]
    fn fixed_three_stage_window_can_stop_too_early() {
        // The end of this path sits in a small region that stays stable for
        // three stages before the winner's level reaches it.
        let topo = Topology::path(9);
        let p = Params {
            le_window_factor: 0.0,
            ..Params::default()
        };
        let mut ctx = Context::new(&topo, &RunConfig::new(1).with_params(p));
        let out = run_leader(&mut ctx).unwrap();
        assert!(!out.ambiguous);
        assert!(!out.agreed);
        assert_ne!(out.outputs[8].leader, out.outputs[out.argmax.unwrap()].leader);
    }

    #[test]
    fn clique_diameter_estimate_is_one() {
        let topo = Topology::clique(6);
        let out = run(&topo, 4);
        assert!(out.agreed);
        assert_eq!(out.diameter_estimate, Some(1));
    }

    #[test]
    fn works_on_half_duplex() {
        let topo = Topology::path(4);
        let cfg = RunConfig::new(2).with_duplex(Duplex::Half);
        let mut ctx = Context::new(&topo, &cfg);
        let out = run_leader(&mut ctx).unwrap();
        assert!(out.agreed || out.ambiguous);
        assert!(out.meta.engine_rounds > out.meta.rounds);
    }
}
