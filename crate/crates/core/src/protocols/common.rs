use serde::{Deserialize, Serialize};

use super::params::Params;
use crate::bic::{BicDecode, MessageLayout};
use crate::bits::BitVector;
use crate::error::SimError;
use crate::sim::{
    derive_seed, node_rng, sub_rounds_for, Duplex, Engine, HalfDuplex, Node, NodeInfo, NodeRng,
    RunStatus, Topology, Transcript,
};

/// How to run a protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub duplex: Duplex,
    /// Budget in logical (full-duplex) rounds over all stages.
    pub max_rounds: u64,
    pub tracing: bool,
    pub params: Params,
}

impl RunConfig {
    pub fn new(seed: u64) -> Self {
        RunConfig {
            seed,
            duplex: Duplex::Full,
            max_rounds: 100_000,
            tracing: false,
            params: Params::default(),
        }
    }

    pub fn with_params(mut self, params: Params) -> Self {
        self.params = params;
        self
    }

    pub fn with_duplex(mut self, duplex: Duplex) -> Self {
        self.duplex = duplex;
        self
    }

    pub fn with_max_rounds(mut self, max_rounds: u64) -> Self {
        self.max_rounds = max_rounds;
        self
    }

    pub fn with_tracing(mut self, tracing: bool) -> Self {
        self.tracing = tracing;
        self
    }
}

/// Run-level metadata shared by every protocol report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub status: RunStatus,
    /// Logical rounds over all stages.
    pub rounds: u64,
    /// Engine rounds; differs from `rounds` under the half-duplex wrapper.
    pub engine_rounds: u64,
    pub max_frame_bits: usize,
    pub transmissions: u64,
    pub digest: String,
}

/// Runs a protocol as a sequence of stages on one topology, threading a
/// single transcript and round budget through them. Each stage starts on a
/// barrier: the next stage begins once every node finished the previous one.
pub struct Context<'t> {
    topo: &'t Topology,
    params: Params,
    seed: u64,
    duplex: Duplex,
    max_rounds: u64,
    used: u64,
    stages: u64,
    status: RunStatus,
    transcript: Option<Transcript>,
}

impl<'t> Context<'t> {
    pub fn new(topo: &'t Topology, cfg: &RunConfig) -> Self {
        Context {
            topo,
            params: cfg.params.resolved(topo.n(), topo.max_id()),
            seed: cfg.seed,
            duplex: cfg.duplex,
            max_rounds: cfg.max_rounds,
            used: 0,
            stages: 0,
            status: RunStatus::Completed,
            transcript: Some(Transcript::new(cfg.tracing)),
        }
    }

    pub fn topo(&self) -> &'t Topology {
        self.topo
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn duplex(&self) -> Duplex {
        self.duplex
    }

    /// Logical rounds used so far.
    pub fn rounds(&self) -> u64 {
        self.used
    }

    pub fn status(&self) -> RunStatus {
        self.status
    }

    /// Rejects half-duplex runs for protocols whose frames do not survive
    /// being split across sub-rounds.
    pub fn require_full_duplex(&self, what: &str) -> Result<(), SimError> {
        if self.duplex == Duplex::Half {
            return Err(SimError::Precondition(format!(
                "{what} needs the whole neighborhood sum in one frame; run it full-duplex"
            )));
        }
        Ok(())
    }

    /// Runs one stage to completion (or until the budget runs out) and
    /// returns the final node states.
    pub fn stage<N, F>(&mut self, label: &str, mut init: F) -> Result<Vec<N>, SimError>
    where
        N: Node,
        F: FnMut(NodeInfo, &mut NodeRng) -> N,
    {
        let seed = derive_seed(self.seed, label, self.stages);
        self.stages += 1;
        let mut transcript = self.transcript.take().expect("transcript present");
        transcript.mark(label);
        let nodes: Vec<N> = (0..self.topo.n())
            .map(|v| {
                let mut rng = node_rng(seed, v, None);
                init(
                    NodeInfo {
                        index: v,
                        id: self.topo.id(v),
                    },
                    &mut rng,
                )
            })
            .collect();
        let remaining = self.max_rounds.saturating_sub(self.used);
        let before = transcript.rounds;
        let (nodes, transcript, status, logical) = match self.duplex {
            Duplex::Full => {
                let mut e = Engine::from_nodes(self.topo, seed, Duplex::Full, nodes)
                    .with_transcript(transcript);
                let status = e.run(remaining)?;
                let (nodes, t) = e.into_parts();
                let logical = t.rounds - before;
                (nodes, t, status, logical)
            }
            Duplex::Half => {
                let s = sub_rounds_for(self.params.n_bound as usize, self.params.beta);
                let wrapped: Vec<_> = nodes.into_iter().map(|n| HalfDuplex::new(n, s)).collect();
                let mut e = Engine::from_nodes(self.topo, seed, Duplex::Half, wrapped)
                    .with_transcript(transcript);
                let status = e.run(remaining.saturating_mul(s))?;
                let (nodes, t) = e.into_parts();
                let logical = (t.rounds - before).div_ceil(s);
                (
                    nodes.into_iter().map(HalfDuplex::into_inner).collect(),
                    t,
                    status,
                    logical,
                )
            }
        };
        self.used += logical;
        if status == RunStatus::BudgetExhausted {
            self.status = RunStatus::BudgetExhausted;
        }
        self.transcript = Some(transcript);
        Ok(nodes)
    }

    pub fn transcript(&self) -> &Transcript {
        self.transcript.as_ref().expect("transcript present")
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript.expect("transcript present")
    }

    pub fn meta(&self) -> RunMeta {
        let t = self.transcript();
        RunMeta {
            seed: self.seed,
            status: self.status,
            rounds: self.used,
            engine_rounds: t.rounds,
            max_frame_bits: t.max_frame_bits,
            transmissions: t.transmissions,
            digest: t.digest(),
        }
    }
}

/// Union of a BIC field's decodes over every frame heard this round.
pub(crate) fn bic_union(layout: &MessageLayout, frames: &[BitVector], idx: usize) -> BicDecode {
    let mut out = BicDecode::default();
    for f in frames {
        let d = layout.decode_bic(f, idx);
        out.values.extend(d.values);
        out.failed_blocks += d.failed_blocks;
    }
    out.values.sort_unstable();
    out.values.dedup();
    out
}
