//! Constant approximation of the minimum or maximum value within r hops.
//!
//! A value x is replaced by its bucket j = ⌈log2 x⌉, so x ∈ (2^{j−1}, 2^j].
//! For r rounds every node sends the BIC codeword of the most extreme bucket
//! it knows and keeps the most extreme bucket it hears; after round i that
//! bucket covers the i-neighborhood. The output 2^j is within a factor of
//! two of the true extremum. Inputs are bounded by N³, so at most
//! 3·log2 N + 1 buckets exist and the code is provisioned for all of them.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::common::{bic_union, Context, RunMeta};
use super::params::{ceil_log2, Params};
use crate::bic::{FieldKind, MessageLayout};
use crate::bits::BitVector;
use crate::error::{CodecError, SimError};
use crate::sim::{Action, Node, NodeRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extreme {
    Min,
    Max,
}

impl Extreme {
    fn pick(self, a: u32, b: u32) -> u32 {
        match self {
            Extreme::Min => a.min(b),
            Extreme::Max => a.max(b),
        }
    }
}

/// j with x ∈ (2^{j−1}, 2^j]; bucket 0 holds x = 1.
pub fn bucket(x: u64) -> u32 {
    ceil_log2(x) as u32
}

pub fn value_cap(p: &Params) -> u64 {
    p.n_bound.saturating_pow(3)
}

pub fn extremum_layout(p: &Params) -> Result<MessageLayout, CodecError> {
    let buckets = bucket(value_cap(p)) as u64 + 1;
    Ok(MessageLayout::new().with("bucket", FieldKind::Bic(p.bic(buckets, buckets as usize)?)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtremumOutput {
    pub bucket: u32,
    /// 2^bucket.
    pub estimate: u64,
    /// Some received block failed to decode.
    pub failed: bool,
}

pub struct ExtremumNode {
    layout: Rc<MessageLayout>,
    mode: Extreme,
    radius: u32,
    bucket: u32,
    k: u32,
    failed: bool,
}

impl ExtremumNode {
    pub fn new(layout: Rc<MessageLayout>, mode: Extreme, radius: u32, value: u64) -> Self {
        ExtremumNode {
            layout,
            mode,
            radius,
            bucket: bucket(value),
            k: 0,
            failed: false,
        }
    }
}

impl Node for ExtremumNode {
    type Output = ExtremumOutput;

    fn act(&mut self, _round: u64, rng: &mut NodeRng) -> Action {
        let mut f = self.layout.empty_frame();
        self.layout
            .put_bic(&mut f, 0, u64::from(self.bucket), rng)
            .expect("bucket inside the code");
        Action::TransmitAndListen(f)
    }

    fn receive(&mut self, _round: u64, frames: &[BitVector], _rng: &mut NodeRng) {
        let heard = bic_union(&self.layout, frames, 0);
        self.failed |= heard.failed_blocks > 0;
        for b in heard.values {
            self.bucket = self.mode.pick(self.bucket, b as u32);
        }
        self.k += 1;
    }

    fn is_done(&self) -> bool {
        self.k >= self.radius
    }

    fn output(&self) -> ExtremumOutput {
        ExtremumOutput {
            bucket: self.bucket,
            estimate: 1u64 << self.bucket,
            failed: self.failed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtremumRun {
    pub meta: RunMeta,
    pub outputs: Vec<ExtremumOutput>,
}

pub fn run_extremum(
    ctx: &mut Context<'_>,
    values: &[u64],
    radius: u32,
    mode: Extreme,
) -> Result<ExtremumRun, SimError> {
    let n = ctx.topo().n();
    let cap = value_cap(ctx.params());
    if values.len() != n {
        return Err(SimError::Precondition(format!("{} values for {n} nodes", values.len())));
    }
    if let Some(x) = values.iter().find(|&&x| x == 0 || x > cap) {
        return Err(SimError::Precondition(format!("value {x} outside [1, {cap}]")));
    }
    let layout = Rc::new(extremum_layout(ctx.params())?);
    let nodes = ctx.stage("extremum", |info, _| {
        ExtremumNode::new(layout.clone(), mode, radius, values[info.index])
    })?;
    Ok(ExtremumRun {
        meta: ctx.meta(),
        outputs: nodes.iter().map(Node::output).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::common::RunConfig;
    use crate::sim::Topology;

    #[test]
    fn buckets() {
        assert_eq!(bucket(1), 0);
        assert_eq!(bucket(2), 1);
        assert_eq!(bucket(7), 3);
        assert_eq!(bucket(8), 3);
        assert_eq!(bucket(9), 4);
    }

    #[test]
    fn radius_zero_reports_own_bucket() {
        let topo = Topology::path(3);
        let mut ctx = Context::new(&topo, &RunConfig::new(1));
        let run = run_extremum(&mut ctx, &[7, 1, 20], 0, Extreme::Max).unwrap();
        let est: Vec<u64> = run.outputs.iter().map(|o| o.estimate).collect();
        assert_eq!(est, vec![8, 1, 32]);
        assert_eq!(run.meta.rounds, 0);
    }

    #[test]
    fn path_radius_two() {
        let topo = Topology::path(7);
        let values = [3, 40, 5, 2, 6, 9, 100];
        let mut ctx = Context::new(&topo, &RunConfig::new(2));
        let max = run_extremum(&mut ctx, &values, 2, Extreme::Max).unwrap();
        let est: Vec<u64> = max.outputs.iter().map(|o| o.estimate).collect();
        assert_eq!(est, vec![64, 64, 64, 64, 128, 128, 128]);
        let mut ctx = Context::new(&topo, &RunConfig::new(2));
        let min = run_extremum(&mut ctx, &values, 2, Extreme::Min).unwrap();
        let est: Vec<u64> = min.outputs.iter().map(|o| o.estimate).collect();
        assert_eq!(est, vec![4, 2, 2, 2, 2, 2, 8]);
    }
}
