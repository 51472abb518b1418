//! Degree approximation in two rounds.
//!
//! Round 1 sends the node's ID in a BIC field with bound K together with a
//! second copy in a field provisioned for 2K, used for overflow detection. A
//! node that sees no overflow knows its degree exactly. Round 2 sends an
//! a×b sketch: row i holds a unary-coded geometric draw, so column j of the
//! XOR is odd with probability about (1 − e^{−2·deg/2^j})/2 and the first
//! column whose sum is small pins down deg up to a constant factor.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::common::{Context, RunMeta};
use super::params::Params;
use crate::bic::{FieldKind, MessageLayout};
use crate::bits::BitVector;
use crate::error::{CodecError, SimError};
use crate::sim::{Action, Node, NodeRng};

#[derive(Debug, Clone)]
pub struct DegreeCodec {
    round1: MessageLayout,
    k: usize,
    rows: usize,
    cols: usize,
    threshold: f64,
}

const IDS: usize = 0;
const CHECK: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeEstimate {
    /// δ(v): the exact degree or 2^{j*−1}.
    pub estimate: u64,
    pub exact: bool,
    /// No column met the threshold; `estimate` is the default 0.
    pub flagged: bool,
    /// 0 on the exact path or when flagged.
    pub j_star: usize,
    /// SUM(j) for j = 1..=b; empty on the exact path.
    pub sums: Vec<u32>,
}

impl DegreeCodec {
    pub fn new(p: &Params) -> Result<Self, CodecError> {
        let k = p.degree_exact_bound();
        let space = p.id_space + 1;
        let round1 = MessageLayout::new()
            .with("ids", FieldKind::Bic(p.bic(space, k)?))
            .with("check", FieldKind::Bic(p.bic(space, 2 * k)?));
        Ok(DegreeCodec {
            round1,
            k,
            rows: p.degree_rows_count(),
            cols: p.degree_cols_count(),
            threshold: p.degree_threshold,
        })
    }

    /// Degrees up to this bound are reported exactly.
    pub fn exact_bound(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn round1_width(&self) -> usize {
        self.round1.width()
    }

    pub fn round2_width(&self) -> usize {
        self.rows * self.cols
    }

    pub fn round1_frame<R: Rng + ?Sized>(&self, id: u64, rng: &mut R) -> BitVector {
        let mut f = self.round1.empty_frame();
        self.round1
            .put_bic(&mut f, IDS, id, rng)
            .expect("ids fit the code");
        self.round1
            .put_bic(&mut f, CHECK, id, rng)
            .expect("ids fit the code");
        f
    }

    /// The exact neighbor count, or None when an overflow was detected or
    /// the two fields disagree.
    pub fn read_round1(&self, frames: &[BitVector]) -> Option<u64> {
        let mut checked: Vec<u64> = Vec::new();
        let mut plain: Vec<u64> = Vec::new();
        for f in frames {
            let verdict = self.round1.overflow_bic(f, CHECK, self.k);
            if verdict.detected {
                return None;
            }
            checked.extend(verdict.values);
            plain.extend(self.round1.decode_bic(f, IDS).values);
        }
        checked.sort_unstable();
        checked.dedup();
        plain.sort_unstable();
        plain.dedup();
        (checked.len() <= self.k && checked == plain).then_some(checked.len() as u64)
    }

    /// Row draws: r = j with probability 2^-j for j < b, the rest at b; row
    /// i gets ones in columns 1..r−1.
    pub fn round2_frame<R: Rng + ?Sized>(&self, rng: &mut R) -> BitVector {
        let mut f = BitVector::zeros(self.round2_width());
        for i in 0..self.rows {
            let mut r = 1;
            while r < self.cols && rng.random_bool(0.5) {
                r += 1;
            }
            for j in 1..r {
                f.set(i * self.cols + (j - 1), true);
            }
        }
        f
    }

    /// Column sums and the threshold index of a received sketch.
    pub fn read_round2(&self, frame: &BitVector) -> DegreeEstimate {
        let sums: Vec<u32> = (0..self.cols)
            .map(|j| (0..self.rows).filter(|&i| frame.get(i * self.cols + j)).count() as u32)
            .collect();
        let limit = self.threshold * self.rows as f64;
        match sums.iter().position(|&s| f64::from(s) <= limit) {
            Some(pos) => DegreeEstimate {
                estimate: 1u64 << pos,
                exact: false,
                flagged: false,
                j_star: pos + 1,
                sums,
            },
            None => DegreeEstimate {
                estimate: 0,
                exact: false,
                flagged: true,
                j_star: 0,
                sums,
            },
        }
    }

    pub fn exact(count: u64) -> DegreeEstimate {
        DegreeEstimate {
            estimate: count,
            exact: true,
            flagged: false,
            j_star: 0,
            sums: Vec::new(),
        }
    }
}

/// Two-round degree approximation among the participating nodes.
///
/// Non-participants stay silent but can still listen, which is how a node
/// learns how many of its neighbors belong to some subset.
pub struct DegreeNode {
    codec: std::rc::Rc<DegreeCodec>,
    id: u64,
    transmit: bool,
    listen: bool,
    step: u8,
    exact: Option<u64>,
    result: Option<DegreeEstimate>,
}

impl DegreeNode {
    pub fn new(codec: std::rc::Rc<DegreeCodec>, id: u64, transmit: bool, listen: bool) -> Self {
        DegreeNode {
            codec,
            id,
            transmit,
            listen,
            step: 0,
            exact: None,
            result: None,
        }
    }

    pub fn result(&self) -> Option<&DegreeEstimate> {
        self.result.as_ref()
    }

    fn action(&self, frame: Option<BitVector>, width: usize) -> Action {
        match (frame, self.listen) {
            (Some(f), true) => Action::TransmitAndListen(f),
            (Some(f), false) => Action::Transmit(f),
            (None, true) => Action::Listen(width),
            (None, false) => Action::Idle,
        }
    }
}

impl Node for DegreeNode {
    type Output = Option<DegreeEstimate>;

    fn act(&mut self, _round: u64, rng: &mut NodeRng) -> Action {
        match self.step {
            0 => {
                let f = self.transmit.then(|| self.codec.round1_frame(self.id, rng));
                self.action(f, self.codec.round1_width())
            }
            _ => {
                let f = self.transmit.then(|| self.codec.round2_frame(rng));
                self.action(f, self.codec.round2_width())
            }
        }
    }

    fn receive(&mut self, _round: u64, frames: &[BitVector], _rng: &mut NodeRng) {
        if self.step == 0 {
            self.exact = if self.listen {
                self.codec.read_round1(frames)
            } else {
                None
            };
            self.step = 1;
        } else {
            self.result = if !self.listen {
                None
            } else if let Some(c) = self.exact {
                Some(DegreeCodec::exact(c))
            } else {
                let empty = BitVector::zeros(self.codec.round2_width());
                Some(self.codec.read_round2(frames.first().unwrap_or(&empty)))
            };
            self.step = 2;
        }
    }

    fn is_done(&self) -> bool {
        self.step == 2
    }

    fn output(&self) -> Option<DegreeEstimate> {
        self.result.clone()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegreeRun {
    pub meta: RunMeta,
    pub estimates: Vec<Option<DegreeEstimate>>,
}

/// Every node estimates its degree.
pub fn run_degree(ctx: &mut Context<'_>) -> Result<DegreeRun, SimError> {
    ctx.require_full_duplex("degree approximation")?;
    let codec = std::rc::Rc::new(DegreeCodec::new(ctx.params())?);
    let nodes = ctx.stage("degree", |info, _| {
        DegreeNode::new(codec.clone(), info.id, true, true)
    })?;
    Ok(DegreeRun {
        meta: ctx.meta(),
        estimates: nodes.iter().map(|n| n.result().cloned()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::common::RunConfig;
    use crate::sim::Topology;

    fn star(leaves: usize) -> Topology {
        let edges: Vec<_> = (1..=leaves).map(|v| (0, v)).collect();
        Topology::new(leaves + 1, &edges).unwrap()
    }

    fn center(leaves: usize, n_bound: u64, seed: u64) -> DegreeEstimate {
        let topo = star(leaves);
        let params = Params {
            n_bound,
            ..Params::default()
        };
        let cfg = RunConfig::new(seed).with_params(params);
        let mut ctx = Context::new(&topo, &cfg);
        run_degree(&mut ctx).unwrap().estimates[0].clone().unwrap()
    }

    #[test]
    fn isolated_node_has_degree_zero() {
        let topo = Topology::new(1, &[]).unwrap();
        let cfg = RunConfig::new(3);
        let mut ctx = Context::new(&topo, &cfg);
        let run = run_degree(&mut ctx).unwrap();
        assert_eq!(run.estimates[0], Some(DegreeCodec::exact(0)));
        assert_eq!(run.meta.rounds, 2);
    }

    #[test]
    fn low_degree_is_exact() {
        for seed in 0..20 {
            let e = center(5, 1024, seed);
            assert!(e.exact);
            assert_eq!(e.estimate, 5);
        }
    }

    #[test]
    fn high_degree_is_within_factor_five() {
        for seed in 0..5 {
            let e = center(300, 1024, seed);
            assert!(!e.exact);
            let limit = 0.2 * 400.0;
            // threshold ordering holds as computed
            assert!(f64::from(e.sums[e.j_star - 1]) <= limit);
            if e.j_star > 1 {
                assert!(f64::from(e.sums[e.j_star - 2]) > limit);
            }
            let ratio = e.estimate as f64 / 300.0;
            assert!((0.2..=5.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn silent_sketch_flags_nothing() {
        let p = Params::default().resolved(64, 64);
        let codec = DegreeCodec::new(&p).unwrap();
        let e = codec.read_round2(&BitVector::zeros(codec.round2_width()));
        assert_eq!(e.j_star, 1);
        assert_eq!(e.estimate, 1);
    }
}
