//! Network-size approximation over a BFS tree.
//!
//! Every participant draws a class r̂ ∈ {1, …, L}, L = ⌈log2 N⌉, with
//! probability proportional to i/2^i. The IDs of each class are gathered
//! at the root by a convergecast, one tree level per round, in L BIC
//! fields. A field that cannot be decoded, or holds more than K IDs, is
//! forwarded as the FAIL word from then on. Class i holds about n·i/2^i
//! IDs, so the last class that did not fail and still holds at least i/4
//! IDs sits near log2 n, and 2^{i*} is within a constant of n. The root
//! then downcasts i*.
//!
//! A listener at level ℓ−1 also hears level-ℓ nodes that picked another
//! parent. Because the fields carry sets, this only duplicates IDs; the
//! root still ends up with every participant's ID exactly once.

use std::collections::BTreeSet;
use std::rc::Rc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::bfs::run_bfs;
use super::common::{bic_union, Context, RunMeta};
use super::leader::run_leader;
use super::params::Params;
use crate::bic::{FieldKind, MessageLayout};
use crate::bits::BitVector;
use crate::error::{CodecError, SimError};
use crate::sim::{Action, Node, NodeRng};

#[derive(Debug, Clone)]
pub struct SizeCodec {
    layout: MessageLayout,
    classes: usize,
    k: usize,
    fail: u64,
    id_space: u64,
    threshold: f64,
    weights: WeightedIndex<f64>,
}

impl SizeCodec {
    pub fn new(p: &Params) -> Result<Self, CodecError> {
        let classes = p.log_n();
        let k = p.bound();
        // IDs are 1..=id_space; the top value of the code is the FAIL word.
        let fail = p.id_space + 1;
        let mut layout = MessageLayout::new();
        for i in 1..=classes {
            layout.push(format!("class{i}"), FieldKind::Bic(p.bic(fail + 1, 2 * k)?));
        }
        layout.push("index", FieldKind::Bic(p.bic(classes as u64 + 1, p.bound())?));
        // Normalized i/2^i; the raw weights sum to nearly 2.
        let weights = WeightedIndex::new((1..=classes).map(|i| i as f64 / 2f64.powi(i as i32)))
            .expect("positive weights");
        Ok(SizeCodec {
            layout,
            classes,
            k,
            fail,
            id_space: p.id_space,
            threshold: p.size_threshold,
            weights,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn width(&self) -> usize {
        self.layout.width()
    }

    fn index_field(&self) -> usize {
        self.classes
    }

    /// Draws r̂ ∈ 1..=L.
    pub fn draw_class<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.weights.sample(rng) + 1
    }

    /// i* for the sets gathered at the root; None when no class qualifies.
    pub fn pick_index(&self, sets: &[BTreeSet<u64>], failed: &[bool]) -> Option<u32> {
        (1..=self.classes)
            .rev()
            .find(|&i| !failed[i - 1] && sets[i - 1].len() as f64 >= self.threshold * i as f64)
            .map(|i| i as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeOutput {
    /// n_alg = 2^{i*}.
    pub estimate: Option<u64>,
    pub index: Option<u32>,
    /// The root found no qualifying class, or the notice never arrived.
    pub no_index: bool,
}

/// Convergecast-then-downcast on a precomputed BFS tree.
pub struct SizeNode {
    codec: Rc<SizeCodec>,
    id: u64,
    level: Option<u32>,
    depth: u32,
    class: Option<usize>,
    sets: Vec<BTreeSet<u64>>,
    failed: Vec<bool>,
    k: u64,
    /// Some(None) once the root's verdict is NO_INDEX.
    verdict: Option<Option<u32>>,
}

impl SizeNode {
    /// `level`/`depth` come from the BFS tree; only participants draw a
    /// class and contribute their ID.
    pub fn new(
        codec: Rc<SizeCodec>,
        id: u64,
        level: Option<u32>,
        depth: u32,
        participates: bool,
        rng: &mut NodeRng,
    ) -> Self {
        let class = participates.then(|| codec.draw_class(rng));
        let l = codec.classes();
        let mut sets = vec![BTreeSet::new(); l];
        if let Some(c) = class {
            sets[c - 1].insert(id);
        }
        let mut node = SizeNode {
            codec,
            id,
            level,
            depth,
            class,
            sets,
            failed: vec![false; l],
            k: 0,
            verdict: None,
        };
        if level == Some(0) && depth == 0 {
            node.decide();
        }
        node
    }

    fn decide(&mut self) {
        self.verdict = Some(self.codec.pick_index(&self.sets, &self.failed));
    }

    fn class_frame(&self, rng: &mut NodeRng) -> BitVector {
        let c = &self.codec;
        let mut f = c.layout.empty_frame();
        for i in 0..c.classes {
            let values: Vec<u64> = if self.failed[i] || self.sets[i].len() > c.k {
                vec![c.fail]
            } else {
                self.sets[i].iter().copied().collect()
            };
            for v in values {
                c.layout.put_bic(&mut f, i, v, rng).expect("value inside the code");
            }
        }
        f
    }

    fn absorb(&mut self, frames: &[BitVector]) {
        let c = Rc::clone(&self.codec);
        for f in frames {
            for i in 0..c.classes {
                if c.layout.is_field_zero(f, i) {
                    continue;
                }
                let v = c.layout.overflow_bic(f, i, c.k);
                if v.detected || v.values.iter().any(|&x| x == c.fail || x == 0 || x > c.id_space) {
                    self.failed[i] = true;
                } else {
                    self.sets[i].extend(v.values);
                }
            }
        }
    }
}

impl Node for SizeNode {
    type Output = SizeOutput;

    fn act(&mut self, _round: u64, rng: &mut NodeRng) -> Action {
        let Some(level) = self.level.map(u64::from) else {
            return Action::Idle;
        };
        let d = u64::from(self.depth);
        let listen = Action::Listen(self.codec.width());
        if self.k < d {
            if level >= 1 && self.k + level == d {
                return Action::Transmit(self.class_frame(rng));
            }
            if self.k + level + 1 == d {
                return listen;
            }
            return Action::Idle;
        }
        let j = self.k - d;
        if j == level {
            if let Some(verdict) = self.verdict {
                let mut f = self.codec.layout.empty_frame();
                let v = verdict.map_or(0, u64::from);
                self.codec
                    .layout
                    .put_bic(&mut f, self.codec.index_field(), v, rng)
                    .expect("index inside the code");
                return Action::Transmit(f);
            }
        } else if j + 1 == level {
            return listen;
        }
        Action::Idle
    }

    fn receive(&mut self, _round: u64, frames: &[BitVector], _rng: &mut NodeRng) {
        if let Some(level) = self.level.map(u64::from) {
            let d = u64::from(self.depth);
            if self.k < d {
                if self.k + level + 1 == d {
                    self.absorb(frames);
                    if level == 0 {
                        self.decide();
                    }
                }
            } else if self.k - d + 1 == level {
                let idx = self.codec.index_field();
                let heard = bic_union(&self.codec.layout, frames, idx).values;
                if let Some(&v) = heard.last() {
                    self.verdict = Some((v > 0).then_some(v as u32));
                }
            }
        }
        self.k += 1;
    }

    fn is_done(&self) -> bool {
        self.level.is_none() || self.k >= 2 * u64::from(self.depth)
    }

    fn output(&self) -> SizeOutput {
        let index = self.verdict.flatten();
        SizeOutput {
            estimate: index.map(|i| 1u64 << i),
            index,
            no_index: index.is_none(),
        }
    }

    fn annotate(&self) -> Option<serde_json::Value> {
        let sizes: Vec<usize> = self.sets.iter().map(BTreeSet::len).collect();
        Some(serde_json::json!({
            "id": self.id, "class": self.class, "sizes": sizes, "failed": self.failed,
        }))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeRun {
    pub meta: RunMeta,
    /// Root of the tree: the elected leader.
    pub root: Option<usize>,
    pub outputs: Vec<SizeOutput>,
    /// Every node ended with the same estimate.
    pub agreed: bool,
    /// The root's estimate.
    pub estimate: Option<u64>,
    /// Why the run could not produce an estimate, if it could not.
    pub error: Option<String>,
}

/// One convergecast/downcast on an existing tree. `tree` gives each node's
/// (level, depth); `participates` restricts the count to a subset.
pub fn run_size_on_tree(
    ctx: &mut Context<'_>,
    label: &str,
    tree: &[(Option<u32>, u32)],
    participates: &[bool],
) -> Result<Vec<SizeOutput>, SimError> {
    let codec = Rc::new(SizeCodec::new(ctx.params())?);
    let nodes = ctx.stage(label, |info, rng| {
        let (level, depth) = tree[info.index];
        SizeNode::new(codec.clone(), info.id, level, depth, participates[info.index], rng)
    })?;
    Ok(nodes.iter().map(Node::output).collect())
}

/// Leader election, a BFS tree from the leader, then the size estimate.
pub fn run_size(ctx: &mut Context<'_>) -> Result<SizeRun, SimError> {
    let n = ctx.topo().n();
    let le = run_leader(ctx)?;
    let leaders: Vec<usize> = (0..n).filter(|&v| le.outputs[v].is_leader).collect();
    let fail = |ctx: &Context<'_>, root, msg: String| SizeRun {
        meta: ctx.meta(),
        root,
        outputs: Vec::new(),
        agreed: false,
        estimate: None,
        error: Some(msg),
    };
    let &[root] = leaders.as_slice() else {
        return Ok(fail(ctx, None, format!("{} nodes consider themselves leader", leaders.len())));
    };
    let bfs = run_bfs(ctx, root)?;
    let tree: Vec<(Option<u32>, u32)> = bfs
        .outputs
        .iter()
        .map(|o| (o.level, o.depth.unwrap_or(0)))
        .collect();
    let outputs = run_size_on_tree(ctx, "size", &tree, &vec![true; n])?;
    let estimate = outputs[root].estimate;
    let agreed = outputs.iter().all(|o| o.estimate == estimate);
    let error = estimate.is_none().then(|| "no class qualified".to_string());
    Ok(SizeRun {
        meta: ctx.meta(),
        root: Some(root),
        outputs,
        agreed,
        estimate,
        error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::common::RunConfig;
    use crate::sim::Topology;
    use rand::SeedableRng;

    #[test]
    fn class_weights_are_normalized_i_over_2_to_the_i() {
        let p = Params::default().resolved(256, 256);
        let codec = SizeCodec::new(&p).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let trials = 200_000;
        let mut counts = vec![0usize; 9];
        for _ in 0..trials {
            counts[codec.draw_class(&mut rng)] += 1;
        }
        let z: f64 = (1..=8).map(|i| i as f64 / 2f64.powi(i)).sum();
        for i in 1..=8 {
            let expect = (i as f64 / 2f64.powi(i as i32)) / z;
            let got = counts[i] as f64 / trials as f64;
            assert!((got - expect).abs() < 0.005, "class {i}: {got} vs {expect}");
        }
    }

    #[test]
    fn index_rule_takes_last_qualifying_class() {
        let p = Params::default().resolved(64, 64);
        let codec = SizeCodec::new(&p).unwrap();
        let set = |k: u64| (1..=k).collect::<BTreeSet<u64>>();
        let sets = vec![set(0), set(9), set(8), set(1), set(2), set(0)];
        let failed = vec![true, true, false, false, false, false];
        // class 5 has 2 < 5/4? no: 2 ≥ 1.25, so it qualifies.
        assert_eq!(codec.pick_index(&sets, &failed), Some(5));
        let failed = vec![true; 6];
        assert_eq!(codec.pick_index(&sets, &failed), None);
    }

    #[test]
    fn two_nodes_get_a_power_of_two() {
        let topo = Topology::clique(2);
        for seed in 0..10 {
            let mut ctx = Context::new(&topo, &RunConfig::new(seed));
            let run = run_size(&mut ctx).unwrap();
            if let Some(e) = run.estimate {
                assert!(e.is_power_of_two() && e >= 2);
                assert!(run.agreed);
            }
        }
    }

    #[test]
    fn path_estimates_agree_and_are_in_range() {
        let topo = Topology::path(64);
        let mut good = 0;
        for seed in 0..10 {
            let mut ctx = Context::new(&topo, &RunConfig::new(seed));
            let run = run_size(&mut ctx).unwrap();
            if let Some(e) = run.estimate {
                assert!(run.agreed, "seed {seed}");
                if (8..=512).contains(&e) {
                    good += 1;
                }
            }
        }
        assert!(good >= 9, "{good}");
    }
}
