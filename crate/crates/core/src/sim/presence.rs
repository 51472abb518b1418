//! Presence detection on the XOR channel.
//!
//! A plain "send 1" cancels when an even number of neighbors send it, so each
//! participant instead sends a uniformly random nonzero λ-bit string. The sum
//! is zero only if the strings happen to cancel, which for t ≥ 2 participants
//! has probability below 2^-λ; a lone participant is always heard, and
//! silence is never mistaken for presence.

use rand::Rng;

use super::{Action, Node, NodeRng};
use crate::bits::BitVector;

/// Default presence field width for an upper bound `n_bound` on the network
/// size: 2·⌈log2 N⌉ bits, at least 2.
pub fn presence_width(n_bound: usize) -> usize {
    let l = (n_bound.max(2) as f64).log2().ceil() as usize;
    (2 * l).max(2)
}

/// A uniformly random nonzero string of `lambda` bits.
pub fn presence_word<R: Rng + ?Sized>(rng: &mut R, lambda: usize) -> BitVector {
    assert!(lambda > 0);
    loop {
        let mut w = BitVector::zeros(lambda);
        let mut done = 0;
        while done < lambda {
            let width = (lambda - done).min(64);
            w.xor_uint(done, width, rng.next_u64());
            done += width;
        }
        if !w.is_zero() {
            return w;
        }
    }
}

/// XORs a fresh presence word into `frame` at `offset`.
pub fn put_presence<R: Rng + ?Sized>(
    rng: &mut R,
    frame: &mut BitVector,
    offset: usize,
    lambda: usize,
) {
    frame.xor_at(offset, &presence_word(rng, lambda));
}

/// True when any of `frames` has a nonzero presence field.
pub fn heard_presence(frames: &[BitVector], offset: usize, lambda: usize) -> bool {
    frames.iter().any(|f| !f.range_is_zero(offset, lambda))
}

/// A single presence-detection round as a stand-alone protocol.
pub struct PresenceNode {
    participating: bool,
    lambda: usize,
    heard: Option<bool>,
}

impl PresenceNode {
    pub fn new(participating: bool, lambda: usize) -> Self {
        PresenceNode {
            participating,
            lambda,
            heard: None,
        }
    }
}

impl Node for PresenceNode {
    type Output = bool;

    fn act(&mut self, _round: u64, rng: &mut NodeRng) -> Action {
        if self.participating {
            Action::TransmitAndListen(presence_word(rng, self.lambda))
        } else {
            Action::Listen(self.lambda)
        }
    }

    fn receive(&mut self, _round: u64, frames: &[BitVector], _rng: &mut NodeRng) {
        self.heard = Some(heard_presence(frames, 0, self.lambda));
    }

    fn is_done(&self) -> bool {
        self.heard.is_some()
    }

    fn output(&self) -> bool {
        self.heard.unwrap_or(false)
    }
}
