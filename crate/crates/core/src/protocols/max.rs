//! Maximum of the node inputs, on a clique and on general graphs.
//!
//! Inputs are made distinct by appending ⌈log2(id_space+1)⌉ ID bits, so ties
//! go to the larger ID. Both variants run τ = ⌈c·log2 N / log2 log2 N⌉
//! phases. In each phase the active nodes estimate how many of them are
//! left, a random subset of expected size O(log N) sends its value, and
//! every active node below the largest value heard drops out. A final phase
//! lets all remaining active nodes send.
//!
//! Single-hop phases are three rounds: the two degree-approximation rounds
//! among active nodes (the clique's active count is the active degree plus
//! one), then the BCC transmission. Multi-hop phases use the BFS tree of
//! an elected leader: a size estimate restricted to active nodes, then a
//! convergecast in which every node forwards only the largest candidate it
//! has decoded, and a downcast of the phase maximum.

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bfs::run_bfs;
use super::common::{bic_union, Context, RunMeta};
use super::degree::DegreeCodec;
use super::leader::run_leader;
use super::params::{ceil_log2, Params};
use super::size::run_size_on_tree;
use crate::bcc::BccCode;
use crate::bic::{FieldKind, MessageLayout};
use crate::bits::BitVector;
use crate::error::{CodecError, SimError};
use crate::sim::{Action, Node, NodeRng};

/// Number of phases τ = ⌈c·log2 N / log2 log2 N⌉ (log log floored at 1).
pub fn phase_count(p: &Params) -> u32 {
    let l = (p.n_bound.max(2) as f64).log2();
    let ll = l.log2().max(1.0);
    ((p.max_c * l / ll).ceil() as u32).max(1)
}

/// Inputs must lie in [1, N²].
pub fn input_cap(p: &Params) -> u64 {
    p.n_bound.saturating_mul(p.n_bound)
}

/// Packs inputs with an ID suffix and back.
#[derive(Debug, Clone, Copy)]
pub struct KeyCodec {
    suffix: u32,
}

impl KeyCodec {
    pub fn new(p: &Params) -> Self {
        KeyCodec {
            suffix: ceil_log2(p.id_space + 1) as u32,
        }
    }

    pub fn key(&self, x: u64, id: u64) -> u64 {
        (x << self.suffix) | id
    }

    pub fn value(&self, key: u64) -> u64 {
        key >> self.suffix
    }

    /// Size of the key space for inputs up to `cap`.
    pub fn space(&self, cap: u64) -> u64 {
        (cap + 1) << self.suffix
    }
}

fn check_inputs(p: &Params, inputs: &[u64], n: usize) -> Result<(), SimError> {
    if inputs.len() != n {
        return Err(SimError::Precondition(format!(
            "{} inputs for {n} nodes",
            inputs.len()
        )));
    }
    let cap = input_cap(p);
    if let Some(x) = inputs.iter().find(|&&x| x == 0 || x > cap) {
        return Err(SimError::Precondition(format!("input {x} outside [1, {cap}]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxOutput {
    /// The largest input this node learned of.
    pub max: u64,
    /// The node was still active after the last regular phase.
    pub active_at_end: bool,
    /// The final transmission did not decode here.
    pub failed: bool,
}

#[derive(Debug, Clone)]
pub struct SingleHopCodec {
    degree: DegreeCodec,
    values: BccCode,
    keys: KeyCodec,
    phases: u32,
    tx_factor: f64,
    n_bound: u64,
}

impl SingleHopCodec {
    pub fn new(p: &Params) -> Result<Self, CodecError> {
        let keys = KeyCodec::new(p);
        let bound = ((p.max_bound_factor * p.log_n() as f64).ceil() as usize).max(1);
        Ok(SingleHopCodec {
            degree: DegreeCodec::new(p)?,
            values: BccCode::new(keys.space(input_cap(p)), bound)?,
            keys,
            phases: phase_count(p),
            tx_factor: p.max_tx_factor * p.log_n() as f64,
            n_bound: p.n_bound,
        })
    }
}

pub struct SingleHopMax {
    codec: Rc<SingleHopCodec>,
    id: u64,
    key: u64,
    best: u64,
    active: bool,
    exact: Option<u64>,
    n_t: u64,
    sending: bool,
    k: u64,
    failed: bool,
}

impl SingleHopMax {
    pub fn new(codec: Rc<SingleHopCodec>, id: u64, input: u64) -> Self {
        let key = codec.keys.key(input, id);
        SingleHopMax {
            codec,
            id,
            key,
            best: key,
            active: true,
            exact: None,
            n_t: 1,
            sending: false,
            k: 0,
            failed: false,
        }
    }

    fn last_round(&self) -> u64 {
        3 * u64::from(self.codec.phases)
    }

    fn bcc_frame(&self) -> BitVector {
        let mut f = BitVector::zeros(self.codec.values.codeword_bits());
        self.codec
            .values
            .xor_encode_into(self.key, &mut f, 0)
            .expect("key inside the code");
        f
    }
}

impl Node for SingleHopMax {
    type Output = MaxOutput;

    fn act(&mut self, _round: u64, rng: &mut NodeRng) -> Action {
        let c = Rc::clone(&self.codec);
        let width = c.values.codeword_bits();
        if self.k == self.last_round() {
            return if self.active {
                Action::TransmitAndListen(self.bcc_frame())
            } else {
                Action::Listen(width)
            };
        }
        match (self.k % 3, self.active) {
            (0, true) => Action::TransmitAndListen(c.degree.round1_frame(self.id, rng)),
            (1, true) => Action::TransmitAndListen(c.degree.round2_frame(rng)),
            (2, true) => {
                let p = (c.tx_factor / self.n_t as f64).min(1.0);
                self.sending = rng.random_bool(p);
                if self.sending {
                    Action::TransmitAndListen(self.bcc_frame())
                } else {
                    Action::Listen(width)
                }
            }
            (2, false) => Action::Listen(width),
            _ => Action::Idle,
        }
    }

    fn receive(&mut self, _round: u64, frames: &[BitVector], _rng: &mut NodeRng) {
        let c = Rc::clone(&self.codec);
        let last = self.k == self.last_round();
        match (self.k % 3, self.active) {
            _ if last || self.k % 3 == 2 => {
                let heard = frames.first().map(|f| c.values.decode_at(f, 0));
                match heard {
                    Some(Ok(vs)) => {
                        if let Some(&m) = vs.last() {
                            self.best = self.best.max(m);
                            if m > self.key {
                                self.active = false;
                            }
                        }
                    }
                    Some(Err(_)) if last => self.failed = true,
                    _ => {}
                }
            }
            (0, true) => self.exact = c.degree.read_round1(frames),
            (1, true) => {
                let degree = match self.exact {
                    Some(d) => d,
                    None => {
                        let zero = BitVector::zeros(c.degree.round2_width());
                        let e = c.degree.read_round2(frames.first().unwrap_or(&zero));
                        if e.flagged {
                            c.n_bound
                        } else {
                            e.estimate
                        }
                    }
                };
                self.n_t = degree + 1;
            }
            _ => {}
        }
        self.k += 1;
    }

    fn is_done(&self) -> bool {
        self.k > self.last_round()
    }

    fn output(&self) -> MaxOutput {
        MaxOutput {
            max: self.codec.keys.value(self.best),
            active_at_end: self.active,
            failed: self.failed,
        }
    }

    fn annotate(&self) -> Option<serde_json::Value> {
        Some(serde_json::json!({
            "active": self.active, "n_t": self.n_t, "sending": self.sending, "best": self.best,
        }))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxRun {
    pub meta: RunMeta,
    pub outputs: Vec<MaxOutput>,
    /// τ, the number of regular phases.
    pub phases: u32,
    /// Active node count after each regular phase (simulator-side
    /// bookkeeping; the nodes never see it). The single-hop variant runs as
    /// one stage and reports only the count after the final phase.
    pub active_counts: Vec<usize>,
    /// Rounds spent in the max phases proper, excluding leader election
    /// and BFS in the multi-hop variant.
    pub phase_rounds: u64,
    pub error: Option<String>,
}

impl MaxRun {
    /// True when every node output `expected`.
    pub fn all_equal(&self, expected: u64) -> bool {
        !self.outputs.is_empty() && self.outputs.iter().all(|o| o.max == expected && !o.failed)
    }
}

/// Max on a clique in τ + 1 phases.
pub fn run_max_single_hop(ctx: &mut Context<'_>, inputs: &[u64]) -> Result<MaxRun, SimError> {
    ctx.require_full_duplex("single-hop max (degree sketches)")?;
    let topo = ctx.topo();
    if !topo.is_complete() {
        return Err(SimError::Precondition("single-hop max needs a clique".into()));
    }
    check_inputs(ctx.params(), inputs, topo.n())?;
    let codec = Rc::new(SingleHopCodec::new(ctx.params())?);
    let before = ctx.rounds();
    let nodes = ctx.stage("max-single-hop", |info, _| {
        SingleHopMax::new(codec.clone(), info.id, inputs[info.index])
    })?;
    // Within one stage only the count after the last phase is observable.
    let active_end = nodes.iter().filter(|n| n.active).count();
    Ok(MaxRun {
        meta: ctx.meta(),
        outputs: nodes.iter().map(Node::output).collect(),
        phases: codec.phases,
        active_counts: vec![active_end],
        phase_rounds: ctx.rounds() - before,
        error: None,
    })
}

/// One convergecast of candidates and one downcast of their maximum.
pub struct TreeMaxNode {
    layout: Rc<MessageLayout>,
    level: Option<u32>,
    depth: u32,
    best: Option<u64>,
    k: u64,
    result: Option<u64>,
}

impl TreeMaxNode {
    pub fn new(layout: Rc<MessageLayout>, level: Option<u32>, depth: u32, candidate: Option<u64>) -> Self {
        let mut node = TreeMaxNode {
            layout,
            level,
            depth,
            best: candidate,
            k: 0,
            result: None,
        };
        if level == Some(0) && depth == 0 {
            node.result = node.best;
        }
        node
    }

    fn send(&self, v: u64, rng: &mut NodeRng) -> Action {
        let mut f = self.layout.empty_frame();
        self.layout.put_bic(&mut f, 0, v, rng).expect("key inside the code");
        Action::Transmit(f)
    }

    /// The phase maximum, once it has reached this node.
    pub fn result(&self) -> Option<u64> {
        self.result
    }
}

impl Node for TreeMaxNode {
    type Output = Option<u64>;

    fn act(&mut self, _round: u64, rng: &mut NodeRng) -> Action {
        let Some(level) = self.level.map(u64::from) else {
            return Action::Idle;
        };
        let d = u64::from(self.depth);
        let listen = Action::Listen(self.layout.width());
        if self.k < d {
            if level >= 1 && self.k + level == d {
                if let Some(b) = self.best {
                    return self.send(b, rng);
                }
            } else if self.k + level + 1 == d {
                return listen;
            }
            return Action::Idle;
        }
        let j = self.k - d;
        if j == level {
            if let Some(r) = self.result {
                return self.send(r, rng);
            }
        } else if j + 1 == level {
            return listen;
        }
        Action::Idle
    }

    fn receive(&mut self, _round: u64, frames: &[BitVector], _rng: &mut NodeRng) {
        if let Some(level) = self.level.map(u64::from) {
            let d = u64::from(self.depth);
            let heard = || bic_union(&self.layout, frames, 0).values.last().copied();
            if self.k < d {
                if self.k + level + 1 == d {
                    if let Some(m) = heard() {
                        self.best = Some(self.best.map_or(m, |b| b.max(m)));
                    }
                    if level == 0 {
                        self.result = self.best;
                    }
                }
            } else if self.k - d + 1 == level {
                self.result = heard();
            }
        }
        self.k += 1;
    }

    fn is_done(&self) -> bool {
        self.level.is_none() || self.k >= 2 * u64::from(self.depth)
    }

    fn output(&self) -> Option<u64> {
        self.result
    }
}

/// Leader election, BFS from the leader, τ phases and a final phase on the
/// tree.
pub fn run_max_multi_hop(ctx: &mut Context<'_>, inputs: &[u64]) -> Result<MaxRun, SimError> {
    let n = ctx.topo().n();
    check_inputs(ctx.params(), inputs, n)?;
    let p = ctx.params().clone();
    let keys = KeyCodec::new(&p);
    let phases = phase_count(&p);
    let layout = Rc::new(
        MessageLayout::new().with("key", FieldKind::Bic(p.bic(keys.space(input_cap(&p)), p.bound())?)),
    );

    let le = run_leader(ctx)?;
    let leaders: Vec<usize> = (0..n).filter(|&v| le.outputs[v].is_leader).collect();
    let &[root] = leaders.as_slice() else {
        return Ok(MaxRun {
            meta: ctx.meta(),
            outputs: Vec::new(),
            phases,
            active_counts: Vec::new(),
            phase_rounds: 0,
            error: Some(format!("{} nodes consider themselves leader", leaders.len())),
        });
    };
    let bfs = run_bfs(ctx, root)?;
    let tree: Vec<(Option<u32>, u32)> = bfs
        .outputs
        .iter()
        .map(|o| (o.level, o.depth.unwrap_or(0)))
        .collect();

    let ids: Vec<u64> = (0..n).map(|v| ctx.topo().id(v)).collect();
    let own: Vec<u64> = (0..n).map(|v| keys.key(inputs[v], ids[v])).collect();
    let mut best = own.clone();
    let mut active = vec![true; n];
    let mut active_counts = Vec::new();
    let tx = p.max_mh_tx_factor * p.log_n() as f64;
    let before = ctx.rounds();

    for t in 0..=phases {
        let last = t == phases;
        let n_t: Vec<u64> = if last {
            vec![1; n]
        } else {
            run_size_on_tree(ctx, &format!("max-size-{t}"), &tree, &active)?
                .iter()
                .map(|o| o.estimate.unwrap_or(1))
                .collect()
        };
        let nodes = ctx.stage(&format!("max-phase-{t}"), |info, rng| {
            let v = info.index;
            let p_t = (tx / n_t[v] as f64).min(1.0);
            let candidate = (active[v] && (last || rng.random_bool(p_t))).then_some(own[v]);
            TreeMaxNode::new(layout.clone(), tree[v].0, tree[v].1, candidate)
        })?;
        for (v, node) in nodes.iter().enumerate() {
            if let Some(m) = node.result() {
                best[v] = best[v].max(m);
                if m > own[v] {
                    active[v] = false;
                }
            }
        }
        if !last {
            active_counts.push(active.iter().filter(|&&a| a).count());
        }
    }

    let outputs = (0..n)
        .map(|v| MaxOutput {
            max: keys.value(best[v]),
            active_at_end: active[v],
            failed: tree[v].0.is_none(),
        })
        .collect();
    Ok(MaxRun {
        meta: ctx.meta(),
        outputs,
        phases,
        active_counts,
        phase_rounds: ctx.rounds() - before,
        error: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::common::RunConfig;
    use crate::sim::Topology;
    use rand::SeedableRng;

    fn single(topo: &Topology, inputs: &[u64], seed: u64) -> MaxRun {
        let mut ctx = Context::new(topo, &RunConfig::new(seed));
        run_max_single_hop(&mut ctx, inputs).unwrap()
    }

    #[test]
    fn phase_counts() {
        let p = Params::default().resolved(512, 512);
        // 2·9 / log2 9 = 5.68
        assert_eq!(phase_count(&p), 6);
        let p = Params::default().resolved(2, 2);
        assert_eq!(phase_count(&p), 2);
    }

    #[test]
    fn keys_break_ties_by_id() {
        let p = Params::default().resolved(8, 8);
        let k = KeyCodec::new(&p);
        assert!(k.key(5, 3) > k.key(5, 2));
        assert!(k.key(6, 1) > k.key(5, 8));
        assert_eq!(k.value(k.key(64, 8)), 64);
    }

    #[test]
    fn lone_node_keeps_its_value() {
        let run = single(&Topology::clique(1), &[1], 4);
        assert!(run.all_equal(1));
    }

    #[test]
    fn triangle_finds_nine() {
        for seed in 0..5 {
            let run = single(&Topology::clique(3), &[5, 9, 3], seed);
            assert!(run.all_equal(9));
            assert_eq!(run.meta.rounds, 3 * u64::from(run.phases) + 1);
        }
    }

    #[test]
    fn clique_of_64_finds_the_max() {
        let topo = Topology::clique(64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for seed in 0..5 {
            let inputs: Vec<u64> = (0..64).map(|_| rng.random_range(1..=64 * 64)).collect();
            let run = single(&topo, &inputs, seed);
            assert!(run.all_equal(*inputs.iter().max().unwrap()), "seed {seed}");
        }
    }

    #[test]
    fn inputs_are_validated() {
        let topo = Topology::clique(2);
        let mut ctx = Context::new(&topo, &RunConfig::new(1));
        assert!(run_max_single_hop(&mut ctx, &[0, 3]).is_err());
        let mut ctx = Context::new(&topo, &RunConfig::new(1));
        assert!(run_max_single_hop(&mut ctx, &[1]).is_err());
        let path = Topology::path(3);
        let mut ctx = Context::new(&path, &RunConfig::new(1));
        assert!(run_max_single_hop(&mut ctx, &[1, 2, 3]).is_err());
    }

    #[test]
    fn multi_hop_on_a_path() {
        let topo = Topology::path(10);
        let inputs = [7, 3, 99, 12, 5, 64, 1, 80, 2, 42];
        for seed in 0..3 {
            let mut ctx = Context::new(&topo, &RunConfig::new(seed));
            let run = run_max_multi_hop(&mut ctx, &inputs).unwrap();
            assert!(run.error.is_none());
            assert!(run.all_equal(99), "seed {seed}");
            // the active set only shrinks
            assert!(run.active_counts.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn equal_inputs_resolve_to_one_holder() {
        let topo = Topology::path(4);
        let mut ctx = Context::new(&topo, &RunConfig::new(2));
        let run = run_max_multi_hop(&mut ctx, &[6, 6, 6, 6]).unwrap();
        assert!(run.all_equal(6));
        assert_eq!(run.outputs.iter().filter(|o| o.active_at_end).count(), 1);
    }
}
