//! Synchronous round engine for the additive channel: a listener receives the
//! bitwise XOR of the frames its neighbors transmit in that round.

mod duplex;
pub mod presence;
mod rng;
mod topology;
mod transcript;

pub use duplex::{sub_rounds_for, HalfDuplex, DEFAULT_BETA};
pub use rng::{derive_seed, node_rng, NodeRng};
pub use topology::{Topology, TopologyFile};
pub use transcript::{TraceRecord, Transcript};

use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::error::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Duplex {
    #[default]
    Full,
    Half,
}

/// What a node does in one round. Listening nodes name the frame width they
/// expect so silence can be delivered as an all-zero frame of that width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Idle,
    Listen(usize),
    Transmit(BitVector),
    /// Full-duplex only.
    TransmitAndListen(BitVector),
}

impl Action {
    fn width(&self) -> Option<usize> {
        match self {
            Action::Idle => None,
            Action::Listen(w) => Some(*w),
            Action::Transmit(f) | Action::TransmitAndListen(f) => Some(f.len()),
        }
    }

    fn frame(&self) -> Option<&BitVector> {
        match self {
            Action::Transmit(f) | Action::TransmitAndListen(f) => Some(f),
            _ => None,
        }
    }

    fn listens(&self) -> bool {
        matches!(self, Action::Listen(_) | Action::TransmitAndListen(_))
    }

    fn tag(&self) -> (u8, &'static str) {
        match self {
            Action::Idle => (0, "idle"),
            Action::Listen(_) => (1, "listen"),
            Action::Transmit(_) => (2, "transmit"),
            Action::TransmitAndListen(_) => (3, "transmit_listen"),
        }
    }
}

/// Static facts a node starts with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeInfo {
    /// Simulator index; protocols must not use it for symmetry breaking.
    pub index: usize,
    pub id: u64,
}

/// A per-vertex protocol state machine.
///
/// Every round the engine calls `act` and then `receive` on each node that is
/// not done. `frames` holds what the node heard: one frame when it listened
/// on a full-duplex radio, possibly several (or none) under the half-duplex
/// wrapper, and none when it did not listen.
pub trait Node {
    type Output: Clone + Serialize;

    fn act(&mut self, round: u64, rng: &mut NodeRng) -> Action;
    fn receive(&mut self, round: u64, frames: &[BitVector], rng: &mut NodeRng);
    fn is_done(&self) -> bool;
    fn output(&self) -> Self::Output;

    /// Optional per-round detail (decoded sets and the like) for traces.
    fn annotate(&self) -> Option<serde_json::Value> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    BudgetExhausted,
}

/// Runs one protocol on one topology.
pub struct Engine<'t, N: Node> {
    topo: &'t Topology,
    nodes: Vec<N>,
    seed: u64,
    mode: Duplex,
    round_offset: u64,
    transcript: Transcript,
}

impl<'t, N: Node> Engine<'t, N> {
    /// Creates every node with its own initialization stream.
    pub fn new<F>(topo: &'t Topology, seed: u64, mode: Duplex, mut init: F) -> Self
    where
        F: FnMut(NodeInfo, &mut NodeRng) -> N,
    {
        let nodes = (0..topo.n())
            .map(|v| {
                let mut rng = node_rng(seed, v, None);
                init(NodeInfo { index: v, id: topo.id(v) }, &mut rng)
            })
            .collect();
        Engine {
            topo,
            nodes,
            seed,
            mode,
            round_offset: 0,
            transcript: Transcript::new(false),
        }
    }

    /// Builds an engine from already-initialized nodes.
    pub fn from_nodes(topo: &'t Topology, seed: u64, mode: Duplex, nodes: Vec<N>) -> Self {
        assert_eq!(nodes.len(), topo.n(), "one node per vertex");
        Engine {
            topo,
            nodes,
            seed,
            mode,
            round_offset: 0,
            transcript: Transcript::new(false),
        }
    }

    pub fn with_tracing(mut self, on: bool) -> Self {
        self.transcript = Transcript::new(on);
        self
    }

    /// Continues an earlier transcript: rounds are numbered after its last
    /// round and the digest keeps accumulating.
    pub fn with_transcript(mut self, transcript: Transcript) -> Self {
        self.round_offset = transcript.rounds;
        self.transcript = transcript;
        self
    }

    pub fn nodes(&self) -> &[N] {
        &self.nodes
    }

    pub fn into_parts(self) -> (Vec<N>, Transcript) {
        (self.nodes, self.transcript)
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn all_done(&self) -> bool {
        self.nodes.iter().all(Node::is_done)
    }

    /// Outputs of the nodes that finished.
    pub fn outputs(&self) -> Vec<Option<N::Output>> {
        self.nodes
            .iter()
            .map(|n| n.is_done().then(|| n.output()))
            .collect()
    }

    /// Runs until every node is done or `max_rounds` rounds have passed.
    pub fn run(&mut self, max_rounds: u64) -> Result<RunStatus, SimError> {
        for _ in 0..max_rounds {
            if self.all_done() {
                return Ok(RunStatus::Completed);
            }
            self.step()?;
        }
        Ok(if self.all_done() {
            RunStatus::Completed
        } else {
            RunStatus::BudgetExhausted
        })
    }

    /// Executes a single round.
    pub fn step(&mut self) -> Result<(), SimError> {
        let round = self.round_offset + self.transcript.rounds;
        let n = self.topo.n();
        let mut rngs: Vec<NodeRng> = (0..n).map(|v| node_rng(self.seed, v, Some(round))).collect();
        let actions: Vec<Action> = self
            .nodes
            .iter_mut()
            .zip(rngs.iter_mut())
            .map(|(node, rng)| {
                if node.is_done() {
                    Action::Idle
                } else {
                    node.act(round, rng)
                }
            })
            .collect();

        let mut width = None;
        for (v, a) in actions.iter().enumerate() {
            if self.mode == Duplex::Half && matches!(a, Action::TransmitAndListen(_)) {
                return Err(SimError::IllegalAction { round, node: v });
            }
            if let Some(w) = a.width() {
                match width {
                    None => width = Some(w),
                    Some(expected) if expected != w => {
                        return Err(SimError::WidthMismatch {
                            round,
                            node: v,
                            expected,
                            got: w,
                        })
                    }
                    _ => {}
                }
            }
        }

        let received = self.channel(&actions, width.unwrap_or(0));

        self.transcript.start_round(round);
        for (v, a) in actions.iter().enumerate() {
            let (tag, kind) = a.tag();
            self.transcript.absorb(tag, v, a.frame());
            if let Some(f) = a.frame() {
                self.transcript.transmissions += 1;
                self.transcript.max_frame_bits = self.transcript.max_frame_bits.max(f.len());
            }
            if let Some(r) = &received[v] {
                self.transcript.absorb(4, v, Some(r));
            }
            let was_active = !matches!(a, Action::Idle) || !self.nodes[v].is_done();
            if !self.nodes[v].is_done() {
                let frames: &[BitVector] = match &received[v] {
                    Some(r) => std::slice::from_ref(r),
                    None => &[],
                };
                self.nodes[v].receive(round, frames, &mut rngs[v]);
            }
            if self.transcript.is_tracing() && was_active {
                self.transcript.push(TraceRecord {
                    round,
                    node: v,
                    id: self.topo.id(v),
                    action: kind,
                    frame: a.frame().map(BitVector::to_hex),
                    received: received[v].as_ref().map(BitVector::to_hex),
                    note: self.nodes[v].annotate(),
                });
            }
        }
        Ok(())
    }

    /// Per-node received frame (None for nodes that did not listen).
    fn channel(&self, actions: &[Action], width: usize) -> Vec<Option<BitVector>> {
        let n = actions.len();
        let mut out: Vec<Option<BitVector>> = vec![None; n];
        if self.topo.is_complete() {
            // Everyone hears everyone else: one global XOR, minus one's own frame.
            let mut total = BitVector::zeros(width);
            for a in actions {
                if let Some(f) = a.frame() {
                    total ^= f;
                }
            }
            for (v, a) in actions.iter().enumerate() {
                if a.listens() {
                    let mut r = total.clone();
                    if let Some(f) = a.frame() {
                        r ^= f;
                    }
                    out[v] = Some(r);
                }
            }
            return out;
        }
        for (v, a) in actions.iter().enumerate() {
            if !a.listens() {
                continue;
            }
            let mut r = BitVector::zeros(width);
            for &u in self.topo.neighbors(v) {
                if let Some(f) = actions[u].frame() {
                    r ^= f;
                }
            }
            out[v] = Some(r);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Transmits a fixed frame (or listens) for one round and records what it
    /// heard.
    struct OneShot {
        send: Option<BitVector>,
        listen: bool,
        heard: Option<BitVector>,
        done: bool,
    }

    impl Node for OneShot {
        type Output = Option<String>;
        fn act(&mut self, _: u64, _: &mut NodeRng) -> Action {
            match (&self.send, self.listen) {
                (Some(f), true) => Action::TransmitAndListen(f.clone()),
                (Some(f), false) => Action::Transmit(f.clone()),
                (None, true) => Action::Listen(8),
                (None, false) => Action::Idle,
            }
        }
        fn receive(&mut self, _: u64, frames: &[BitVector], _: &mut NodeRng) {
            self.heard = frames.first().cloned();
            self.done = true;
        }
        fn is_done(&self) -> bool {
            self.done
        }
        fn output(&self) -> Option<String> {
            self.heard.as_ref().map(BitVector::to_hex)
        }
    }

    fn byte(b: u8) -> BitVector {
        let mut f = BitVector::zeros(8);
        f.write_uint(0, 8, u64::from(b));
        f
    }

    fn run_star(sends: &[Option<u8>], full: bool) -> Vec<Option<Option<String>>> {
        // vertex 0 is the hub
        let n = sends.len();
        let edges: Vec<_> = (1..n).map(|v| (0, v)).collect();
        let topo = Topology::new(n, &edges).unwrap();
        let mode = if full { Duplex::Full } else { Duplex::Half };
        let mut e = Engine::new(&topo, 1, mode, |info, _| OneShot {
            send: sends[info.index].map(byte),
            listen: full || sends[info.index].is_none(),
            heard: None,
            done: false,
        });
        assert_eq!(e.run(5).unwrap(), RunStatus::Completed);
        e.outputs()
    }

    #[test]
    fn silence_single_and_cancellation() {
        let out = run_star(&[None, None, None], true);
        assert_eq!(out[0], Some(Some("00".into())));
        let out = run_star(&[None, Some(0xA5), None], true);
        assert_eq!(out[0], Some(Some("a5".into())));
        let out = run_star(&[None, Some(0xA5), Some(0xA5)], true);
        assert_eq!(out[0], Some(Some("00".into())));
        let out = run_star(&[None, Some(0x0F), Some(0xF0)], true);
        assert_eq!(out[0], Some(Some("ff".into())));
    }

    #[test]
    fn own_frame_excluded_in_full_duplex() {
        let out = run_star(&[Some(0x11), Some(0x22), None], true);
        assert_eq!(out[0], Some(Some("22".into())));
        // leaf 1 hears only the hub
        assert_eq!(out[1], Some(Some("11".into())));
        // leaf 2 also hears only the hub
        assert_eq!(out[2], Some(Some("11".into())));
    }

    #[test]
    fn half_duplex_transmitter_hears_nothing() {
        let out = run_star(&[Some(0x11), None, None], false);
        assert_eq!(out[0], Some(None));
        assert_eq!(out[1], Some(Some("11".into())));
    }

    #[test]
    fn half_duplex_rejects_transmit_and_listen() {
        let topo = Topology::clique(2);
        let mut e = Engine::new(&topo, 1, Duplex::Half, |_, _| OneShot {
            send: Some(byte(1)),
            listen: true,
            heard: None,
            done: false,
        });
        assert!(matches!(e.step(), Err(SimError::IllegalAction { .. })));
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let topo = Topology::clique(2);
        let mut e = Engine::new(&topo, 1, Duplex::Full, |info, _| OneShot {
            send: Some(if info.index == 0 { byte(1) } else { BitVector::zeros(3) }),
            listen: false,
            heard: None,
            done: false,
        });
        assert!(matches!(e.step(), Err(SimError::WidthMismatch { .. })));
    }

    #[test]
    fn zero_budget_gives_empty_transcript() {
        let topo = Topology::path(3);
        let mut e = Engine::new(&topo, 1, Duplex::Full, |_, _| OneShot {
            send: None,
            listen: true,
            heard: None,
            done: false,
        })
        .with_tracing(true);
        assert_eq!(e.run(0).unwrap(), RunStatus::BudgetExhausted);
        assert_eq!(e.transcript().rounds, 0);
        assert!(e.transcript().records().is_empty());
        assert!(e.outputs().iter().all(Option::is_none));
    }

    #[test]
    fn clique_shortcut_matches_neighbor_sum() {
        // The same frames on K_4 and on K_4 minus nothing but presented as a
        // generic graph must give identical receptions.
        let frames = [0x13u8, 0x5C, 0x00, 0xE7];
        let mk = |topo: &Topology| {
            let mut e = Engine::new(topo, 9, Duplex::Full, |info, _| OneShot {
                send: Some(byte(frames[info.index])),
                listen: true,
                heard: None,
                done: false,
            });
            e.run(1).unwrap();
            e.outputs()
        };
        let k4 = Topology::clique(4);
        let expected: Vec<_> = (0..4)
            .map(|v| {
                let x = frames
                    .iter()
                    .enumerate()
                    .filter(|&(u, _)| u != v)
                    .fold(0u8, |acc, (_, &f)| acc ^ f);
                Some(Some(format!("{x:02x}")))
            })
            .collect();
        assert_eq!(mk(&k4), expected);
    }
}
