//! Maximal independent set for general graphs.
//!
//! Each phase is seven rounds among the still-active nodes V':
//!
//! | round | who transmits | purpose |
//! |-------|---------------|---------|
//! | 0, 1  | V'            | degree estimate δ(v, V') |
//! | 2, 3  | marked S      | marked degree δ(v, S) |
//! | 4     | S'            | BCC announcement of α = (δ(v, V'), ID) |
//! | 5     | m = 1         | presence check; a candidate that hears another one withdraws |
//! | 6     | winners       | presence; active listeners that hear it are covered |
//!
//! Nodes with δ(v, V') = 0 always mark themselves, others with probability
//! 1/(2c·δ(v, V')). S' keeps the marked nodes with δ(v, S) ≤ log2 N, so an
//! S' node has few S' neighbors and the announcement decodes; a node with
//! the largest α among its S' neighbors becomes a candidate. The "send 1"
//! steps of the textbook algorithm would cancel on the XOR channel, so they
//! are presence rounds with random nonzero words.

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::common::{Context, RunMeta};
use super::degree::{DegreeCodec, DegreeEstimate};
use super::params::Params;
use crate::bcc::BccCode;
use crate::bits::BitVector;
use crate::error::{CodecError, SimError};
use crate::sim::presence::{heard_presence, presence_word};
use crate::sim::{Action, Node, NodeRng};

pub const ROUNDS_PER_PHASE: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MisStatus {
    InMis,
    Covered,
    Undecided,
}

#[derive(Debug, Clone)]
pub struct MisCodec {
    degree: DegreeCodec,
    announce: BccCode,
    degree_cap: u64,
    id_space: u64,
    filter: f64,
    mark_c: f64,
    lambda: usize,
}

impl MisCodec {
    pub fn new(p: &Params) -> Result<Self, CodecError> {
        let bound = ((p.mis_announce_factor * p.log_n() as f64).ceil() as usize).max(1);
        let degree_cap = p.n_bound;
        let size = (degree_cap + 1) * (p.id_space + 1);
        Ok(MisCodec {
            degree: DegreeCodec::new(p)?,
            announce: BccCode::new(size, bound)?,
            degree_cap,
            id_space: p.id_space,
            filter: p.mis_filter_factor * p.log_n() as f64,
            mark_c: p.mis_c,
            lambda: p.presence_width(),
        })
    }

    /// Degree estimates are clamped to N so α fits the code; a flagged
    /// estimate means "very many", so it is clamped too.
    fn degree_value(&self, e: &DegreeEstimate) -> u64 {
        if e.flagged {
            self.degree_cap
        } else {
            e.estimate.min(self.degree_cap)
        }
    }

    fn alpha(&self, degree: u64, id: u64) -> u64 {
        degree * (self.id_space + 1) + id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MisOutput {
    pub status: MisStatus,
    /// Phase in which the node decided; phases run so far if undecided.
    pub phases: u32,
}

pub struct MisNode {
    codec: Rc<MisCodec>,
    id: u64,
    k: u64,
    status: MisStatus,
    exact: Option<u64>,
    degree: u64,
    marked: bool,
    survivor: bool,
    candidate: bool,
    phases: u32,
}

impl MisNode {
    pub fn new(codec: Rc<MisCodec>, id: u64) -> Self {
        MisNode {
            codec,
            id,
            k: 0,
            status: MisStatus::Undecided,
            exact: None,
            degree: 0,
            marked: false,
            survivor: false,
            candidate: false,
            phases: 0,
        }
    }

    fn sketch_estimate(&self, frames: &[BitVector]) -> DegreeEstimate {
        let d = &self.codec.degree;
        match self.exact {
            Some(c) => DegreeCodec::exact(c),
            None => match frames.first() {
                Some(f) => d.read_round2(f),
                None => d.read_round2(&BitVector::zeros(d.round2_width())),
            },
        }
    }

    fn presence(&self, rng: &mut NodeRng, listen: bool) -> Action {
        let w = presence_word(rng, self.codec.lambda);
        if listen {
            Action::TransmitAndListen(w)
        } else {
            Action::Transmit(w)
        }
    }
}

impl Node for MisNode {
    type Output = MisOutput;

    fn act(&mut self, _round: u64, rng: &mut NodeRng) -> Action {
        let c = &self.codec;
        let d = &c.degree;
        match self.k % ROUNDS_PER_PHASE {
            0 => Action::TransmitAndListen(d.round1_frame(self.id, rng)),
            1 => Action::TransmitAndListen(d.round2_frame(rng)),
            2 if self.marked => Action::TransmitAndListen(d.round1_frame(self.id, rng)),
            3 if self.marked => Action::TransmitAndListen(d.round2_frame(rng)),
            4 if self.survivor => {
                let mut f = BitVector::zeros(c.announce.codeword_bits());
                c.announce
                    .xor_encode_into(c.alpha(self.degree, self.id), &mut f, 0)
                    .expect("alpha inside the code");
                Action::TransmitAndListen(f)
            }
            5 if self.candidate => self.presence(rng, true),
            6 if self.candidate => self.presence(rng, false),
            6 => Action::Listen(c.lambda),
            _ => Action::Idle,
        }
    }

    fn receive(&mut self, _round: u64, frames: &[BitVector], rng: &mut NodeRng) {
        let c = Rc::clone(&self.codec);
        match self.k % ROUNDS_PER_PHASE {
            0 => self.exact = c.degree.read_round1(frames),
            1 => {
                let e = self.sketch_estimate(frames);
                self.degree = c.degree_value(&e);
                self.marked = if self.degree == 0 {
                    true
                } else {
                    let p = 1.0 / (2.0 * c.mark_c * self.degree as f64);
                    rng.random_bool(p.min(1.0))
                };
                self.survivor = false;
                self.candidate = false;
            }
            2 if self.marked => self.exact = c.degree.read_round1(frames),
            3 if self.marked => {
                let e = self.sketch_estimate(frames);
                self.survivor = !e.flagged && (e.estimate as f64) <= c.filter;
            }
            4 if self.survivor => {
                let own = c.alpha(self.degree, self.id);
                let heard = frames
                    .first()
                    .map(|f| c.announce.decode_at(f, 0))
                    .unwrap_or(Ok(Vec::new()));
                self.candidate = matches!(heard, Ok(vs) if vs.iter().all(|&a| a < own));
            }
            5 if self.candidate => {
                if heard_presence(frames, 0, c.lambda) {
                    self.candidate = false;
                }
            }
            6 => {
                self.phases += 1;
                if self.candidate {
                    self.status = MisStatus::InMis;
                } else if heard_presence(frames, 0, c.lambda) {
                    self.status = MisStatus::Covered;
                }
            }
            _ => {}
        }
        self.k += 1;
    }

    fn is_done(&self) -> bool {
        self.status != MisStatus::Undecided
    }

    fn output(&self) -> MisOutput {
        MisOutput {
            status: self.status,
            phases: self.phases,
        }
    }

    fn annotate(&self) -> Option<serde_json::Value> {
        Some(serde_json::json!({
            "degree": self.degree, "marked": self.marked,
            "survivor": self.survivor, "candidate": self.candidate,
        }))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MisRun {
    pub meta: RunMeta,
    pub outputs: Vec<MisOutput>,
    /// Phases until the last node decided.
    pub phases: u32,
}

impl MisRun {
    pub fn members(&self) -> Vec<usize> {
        self.outputs
            .iter()
            .enumerate()
            .filter(|(_, o)| o.status == MisStatus::InMis)
            .map(|(v, _)| v)
            .collect()
    }
}

pub fn run_mis(ctx: &mut Context<'_>) -> Result<MisRun, SimError> {
    ctx.require_full_duplex("MIS (degree sketches)")?;
    let codec = Rc::new(MisCodec::new(ctx.params())?);
    let nodes = ctx.stage("mis", |info, _| MisNode::new(codec.clone(), info.id))?;
    let outputs: Vec<MisOutput> = nodes.iter().map(Node::output).collect();
    let phases = outputs.iter().map(|o| o.phases).max().unwrap_or(0);
    Ok(MisRun {
        meta: ctx.meta(),
        outputs,
        phases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::common::RunConfig;
    use crate::sim::{RunStatus, Topology};

    fn mis(topo: &Topology, seed: u64) -> MisRun {
        let mut ctx = Context::new(topo, &RunConfig::new(seed));
        run_mis(&mut ctx).unwrap()
    }

    fn assert_valid(topo: &Topology, run: &MisRun) {
        assert_eq!(run.meta.status, RunStatus::Completed);
        let inside: Vec<bool> = run.outputs.iter().map(|o| o.status == MisStatus::InMis).collect();
        for v in 0..topo.n() {
            let covered = topo.neighbors(v).iter().any(|&u| inside[u]);
            if inside[v] {
                assert!(!covered, "{v} has a neighbor in the set");
            } else {
                assert!(covered, "{v} is not dominated");
            }
        }
    }

    #[test]
    fn edgeless_graph_finishes_in_one_phase() {
        let topo = Topology::new(6, &[]).unwrap();
        let run = mis(&topo, 1);
        assert!(run.outputs.iter().all(|o| o.status == MisStatus::InMis));
        assert_eq!(run.phases, 1);
        assert_eq!(run.meta.rounds, ROUNDS_PER_PHASE);
    }

    #[test]
    fn triangle_picks_exactly_one() {
        let topo = Topology::clique(3);
        for seed in 0..20 {
            let run = mis(&topo, seed);
            assert_valid(&topo, &run);
            assert_eq!(run.members().len(), 1);
        }
    }

    #[test]
    fn paths_and_cliques_are_valid() {
        for seed in 0..5 {
            let topo = Topology::path(30);
            assert_valid(&topo, &mis(&topo, seed));
            let topo = Topology::clique(40);
            let run = mis(&topo, seed);
            assert_valid(&topo, &run);
            assert_eq!(run.members().len(), 1);
        }
    }

    #[test]
    fn half_duplex_is_rejected() {
        let topo = Topology::path(3);
        let cfg = RunConfig::new(1).with_duplex(crate::sim::Duplex::Half);
        let mut ctx = Context::new(&topo, &cfg);
        assert!(run_mis(&mut ctx).is_err());
    }
}
