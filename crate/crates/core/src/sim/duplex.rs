use rand::Rng;

use super::{Action, Node, NodeRng};
use crate::bits::BitVector;

/// Default sub-round constant β.
pub const DEFAULT_BETA: f64 = 8.0;

/// ⌈β·log2 n⌉ sub-rounds per simulated round, at least one.
pub fn sub_rounds_for(n: usize, beta: f64) -> u64 {
    let l = (n.max(2) as f64).log2();
    ((beta * l).ceil() as u64).max(1)
}

/// Runs a full-duplex protocol on half-duplex radios.
///
/// Each inner round is stretched over `sub_rounds` engine rounds. A node with
/// something to send flips a fair coin every sub-round to either transmit it
/// or listen; everything heard during the stretch is handed to the inner
/// node at the end. Inner protocols union what they decode across frames.
pub struct HalfDuplex<N> {
    inner: N,
    sub_rounds: u64,
    pending: Option<BitVector>,
    listen_width: Option<usize>,
    collected: Vec<BitVector>,
}

impl<N: Node> HalfDuplex<N> {
    pub fn new(inner: N, sub_rounds: u64) -> Self {
        assert!(sub_rounds > 0);
        HalfDuplex {
            inner,
            sub_rounds,
            pending: None,
            listen_width: None,
            collected: Vec::new(),
        }
    }

    pub fn inner(&self) -> &N {
        &self.inner
    }

    pub fn into_inner(self) -> N {
        self.inner
    }
}

impl<N: Node> Node for HalfDuplex<N> {
    type Output = N::Output;

    fn act(&mut self, round: u64, rng: &mut NodeRng) -> Action {
        let sub = round % self.sub_rounds;
        if sub == 0 {
            self.collected.clear();
            let (pending, listen) = match self.inner.act(round / self.sub_rounds, rng) {
                Action::Idle => (None, None),
                Action::Listen(w) => (None, Some(w)),
                Action::Transmit(f) => (Some(f), None),
                Action::TransmitAndListen(f) => {
                    let w = f.len();
                    (Some(f), Some(w))
                }
            };
            self.pending = pending;
            self.listen_width = listen;
        }
        match (&self.pending, self.listen_width) {
            (Some(f), listen) => {
                if rng.random_bool(0.5) {
                    Action::Transmit(f.clone())
                } else if let Some(w) = listen {
                    Action::Listen(w)
                } else {
                    Action::Idle
                }
            }
            (None, Some(w)) => Action::Listen(w),
            (None, None) => Action::Idle,
        }
    }

    fn receive(&mut self, round: u64, frames: &[BitVector], rng: &mut NodeRng) {
        for f in frames {
            if !f.is_zero() && !self.collected.contains(f) {
                self.collected.push(f.clone());
            }
        }
        if round % self.sub_rounds == self.sub_rounds - 1 {
            let heard = std::mem::take(&mut self.collected);
            self.inner.receive(round / self.sub_rounds, &heard, rng);
        }
    }

    fn is_done(&self) -> bool {
        self.inner.is_done()
    }

    fn output(&self) -> N::Output {
        self.inner.output()
    }

    fn annotate(&self) -> Option<serde_json::Value> {
        self.inner.annotate()
    }
}
