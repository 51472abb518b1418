//! Bounded-contention codes: a deterministic code whose XOR of up to `a`
//! distinct codewords identifies the set of senders.
//!
//! Value `x` is mapped to a nonzero field element `X` and its codeword is the
//! concatenation of the odd powers `X, X^3, …, X^(2a−1)` — a column of the
//! parity-check matrix of a binary BCH code with designed distance 2a+1. The
//! XOR of a set of codewords is therefore the list of odd power-sum
//! syndromes of the set, which Berlekamp–Massey turns back into a locator
//! polynomial.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::bits::BitVector;
use crate::error::CodecError;
use crate::gf::{trim, Elem, GaloisField, TABLE_MAX_DEGREE};

/// Default upper limit on the codeword length.
pub const DEFAULT_MAX_CODEWORD_BITS: usize = 1 << 20;

/// Below this value-space size roots are found by evaluating the locator at
/// every valid position; above it, by trace splitting.
const EXHAUSTIVE_ROOT_SEARCH_MAX: u64 = 512;

/// Decodes beyond the single-codeword fast path are memoized per code; the
/// table is dropped wholesale when it reaches this many entries.
const MEMO_CAP: usize = 1 << 16;

/// How a value becomes a field element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ValueMap {
    /// x ↦ α^x, available when the field has log tables.
    Power,
    /// x ↦ x + 1 read as a polynomial-basis element. Any injective map onto
    /// nonzero elements yields a valid parity-check column; this one needs no
    /// discrete logarithm.
    Offset,
}

/// Why a received word could not be decoded within the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeFailure {
    /// The locator polynomial has degree above the decoding bound.
    LocatorTooLong,
    /// The locator does not split into distinct roots of the field.
    RootCountMismatch,
    /// A root does not correspond to any value in the value space.
    RootOutOfRange,
    /// The decoded set does not re-encode to the received word.
    Inconsistent,
}

impl fmt::Display for DecodeFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DecodeFailure::LocatorTooLong => "locator degree exceeds the bound",
            DecodeFailure::RootCountMismatch => "locator does not split into distinct roots",
            DecodeFailure::RootOutOfRange => "root outside the value space",
            DecodeFailure::Inconsistent => "decoded set does not re-encode to the input",
        };
        f.write_str(s)
    }
}

/// Result of decoding: the sorted set of values, or a failure marker.
pub type Decoded = Result<Vec<u64>, DecodeFailure>;

#[derive(Clone)]
pub struct BccCode {
    size: u64,
    bound: usize,
    field: Arc<GaloisField>,
    map: ValueMap,
    /// Shared by clones, so every node using one code benefits.
    memo: Arc<Mutex<HashMap<Box<[Elem]>, Decoded>>>,
}

impl fmt::Debug for BccCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BccCode")
            .field("size", &self.size)
            .field("bound", &self.bound)
            .field("k", &self.field.degree())
            .field("bits", &self.codeword_bits())
            .finish()
    }
}

impl BccCode {
    /// Builds the code for values `0..size` decodable up to `bound` distinct
    /// codewords, with the default codeword-size cap.
    pub fn new(size: u64, bound: usize) -> Result<Self, CodecError> {
        Self::with_cap(size, bound, DEFAULT_MAX_CODEWORD_BITS)
    }

    pub fn with_cap(size: u64, bound: usize, max_bits: usize) -> Result<Self, CodecError> {
        if size == 0 {
            return Err(CodecError::EmptyValueSpace);
        }
        if bound == 0 {
            return Err(CodecError::ZeroBound);
        }
        let k = 64 - size.leading_zeros();
        // k = ceil(log2(size + 1)) is the bit length of `size`.
        let bits = bound.saturating_mul(k as usize);
        if bits > max_bits {
            return Err(CodecError::CodewordTooLarge { bits, cap: max_bits });
        }
        let field = GaloisField::get(k)?;
        let map = if k <= TABLE_MAX_DEGREE {
            ValueMap::Power
        } else {
            ValueMap::Offset
        };
        Ok(BccCode {
            size,
            bound,
            field,
            map,
            memo: Arc::default(),
        })
    }

    /// Number of values, M.
    pub fn size(&self) -> u64 {
        self.size
    }

    /// Decoding bound, a.
    pub fn bound(&self) -> usize {
        self.bound
    }

    /// Field degree, k.
    pub fn limb_bits(&self) -> usize {
        self.field.degree() as usize
    }

    /// Codeword length m = a·k.
    pub fn codeword_bits(&self) -> usize {
        self.bound * self.limb_bits()
    }

    fn locator(&self, x: u64) -> Elem {
        match self.map {
            ValueMap::Power => self.field.alpha_pow(x),
            ValueMap::Offset => x + 1,
        }
    }

    fn value_of(&self, root: Elem) -> Option<u64> {
        let v = match self.map {
            ValueMap::Power => self.field.log(root)?,
            ValueMap::Offset => root.checked_sub(1)?,
        };
        (v < self.size).then_some(v)
    }

    fn check_value(&self, x: u64) -> Result<(), CodecError> {
        if x >= self.size {
            return Err(CodecError::ValueOutOfRange {
                value: x,
                size: self.size,
            });
        }
        Ok(())
    }

    pub fn encode(&self, x: u64) -> Result<BitVector, CodecError> {
        let mut out = BitVector::zeros(self.codeword_bits());
        self.xor_encode_into(x, &mut out, 0)?;
        Ok(out)
    }

    /// XORs the codeword of `x` into `frame` at `offset`.
    pub fn xor_encode_into(
        &self,
        x: u64,
        frame: &mut BitVector,
        offset: usize,
    ) -> Result<(), CodecError> {
        self.check_value(x)?;
        let k = self.limb_bits();
        let f = &self.field;
        let xe = self.locator(x);
        let x2 = f.square(xe);
        let mut cur = xe;
        for j in 0..self.bound {
            frame.xor_uint(offset + j * k, k, cur);
            cur = f.mul(cur, x2);
        }
        Ok(())
    }

    pub fn decode(&self, received: &BitVector) -> Result<Decoded, CodecError> {
        if received.len() != self.codeword_bits() {
            return Err(CodecError::WidthMismatch {
                expected: self.codeword_bits(),
                got: received.len(),
            });
        }
        Ok(self.decode_at(received, 0))
    }

    /// Decodes the codeword-sized window of `frame` starting at `offset`.
    pub fn decode_at(&self, frame: &BitVector, offset: usize) -> Decoded {
        let k = self.limb_bits();
        // Fast paths straight off the frame: silence, and a lone codeword,
        // which is rejected at the first limb that disagrees.
        let first = frame.read_uint(offset, k);
        if first == 0 && frame.range_is_zero(offset, self.codeword_bits()) {
            return Ok(Vec::new());
        }
        if let Some(x) = self.value_of(first) {
            let f = &self.field;
            let x2 = f.square(first);
            let mut cur = first;
            let lone = (1..self.bound).all(|j| {
                cur = f.mul(cur, x2);
                frame.read_uint(offset + j * k, k) == cur
            });
            if lone {
                return Ok(vec![x]);
            }
        }
        let odd: Vec<Elem> = (0..self.bound)
            .map(|j| frame.read_uint(offset + j * k, k))
            .collect();
        self.decode_syndromes(&odd)
    }

    fn decode_syndromes(&self, odd: &[Elem]) -> Decoded {
        if odd.iter().all(|&s| s == 0) {
            return Ok(Vec::new());
        }
        // A single codeword is by far the most common case; check it first.
        if let Some(x) = self.value_of(odd[0]) {
            if self.syndromes_of(&[x]) == odd {
                return Ok(vec![x]);
            }
        }
        if let Some(hit) = self.memo.lock().expect("memo lock").get(odd) {
            return hit.clone();
        }
        let out = self.decode_general(odd);
        let mut memo = self.memo.lock().expect("memo lock");
        if memo.len() >= MEMO_CAP {
            memo.clear();
        }
        memo.insert(odd.into(), out.clone());
        out
    }

    fn decode_general(&self, odd: &[Elem]) -> Decoded {
        let f = &self.field;
        let a = self.bound;

        // Full syndrome sequence S_1..S_2a, using S_2j = S_j^2.
        let mut s = vec![0; 2 * a];
        for i in 1..=2 * a {
            s[i - 1] = if i % 2 == 1 {
                odd[i / 2]
            } else {
                f.square(s[i / 2 - 1])
            };
        }

        let lambda = berlekamp_massey(f, &s);
        let l = lambda.len() - 1;
        if l > a {
            return Err(DecodeFailure::LocatorTooLong);
        }
        // The reversed locator has the locators themselves as roots.
        let rev: Vec<Elem> = lambda.iter().rev().copied().collect();
        let roots = if self.size <= EXHAUSTIVE_ROOT_SEARCH_MAX {
            self.roots_exhaustive(&rev, l)
        } else {
            roots_by_trace(f, &rev)
        }
        .ok_or(DecodeFailure::RootCountMismatch)?;
        if roots.len() != l {
            return Err(DecodeFailure::RootCountMismatch);
        }

        let mut values = Vec::with_capacity(l);
        for r in roots {
            values.push(self.value_of(r).ok_or(DecodeFailure::RootOutOfRange)?);
        }
        values.sort_unstable();
        values.dedup();
        if values.len() != l || self.syndromes_of(&values) != odd {
            return Err(DecodeFailure::Inconsistent);
        }
        Ok(values)
    }

    fn syndromes_of(&self, values: &[u64]) -> Vec<Elem> {
        let f = &self.field;
        let mut acc = vec![0; self.bound];
        for &x in values {
            let xe = self.locator(x);
            let x2 = f.square(xe);
            let mut cur = xe;
            for slot in acc.iter_mut() {
                *slot ^= cur;
                cur = f.mul(cur, x2);
            }
        }
        acc
    }

    fn roots_exhaustive(&self, rev: &[Elem], want: usize) -> Option<Vec<Elem>> {
        let f = &self.field;
        let mut roots = Vec::with_capacity(want);
        for x in 0..self.size {
            let e = self.locator(x);
            if f.poly_eval(rev, e) == 0 {
                roots.push(e);
                if roots.len() == want {
                    break;
                }
            }
        }
        Some(roots)
    }

    /// Reference decoder by exhaustive search: finds the subset of at most
    /// `bound` values whose codewords XOR to `received`.
    ///
    /// Uses a meet-in-the-middle table: every subset of size ≤ ⌈bound/2⌉ is
    /// indexed by its XOR, and every subset of size ≤ ⌊bound/2⌋ is looked up
    /// against it. `max_subsets` caps the total enumeration. Only codeword
    /// encoding is shared with the algebraic decoder.
    pub fn decode_bruteforce(
        &self,
        received: &BitVector,
        bound: usize,
        max_subsets: u128,
    ) -> Result<Decoded, CodecError> {
        if received.len() != self.codeword_bits() {
            return Err(CodecError::WidthMismatch {
                expected: self.codeword_bits(),
                got: received.len(),
            });
        }
        let big = bound.div_ceil(2);
        let small = bound / 2;
        let count = subsets_up_to(self.size, big) + subsets_up_to(self.size, small);
        if count > max_subsets {
            return Err(CodecError::SearchTooLarge {
                count,
                cap: max_subsets,
            });
        }
        let words: Vec<BitVector> = (0..self.size)
            .map(|x| self.encode(x))
            .collect::<Result<_, _>>()?;

        let mut table: HashMap<BitVector, Vec<u64>> = HashMap::new();
        for_each_subset(self.size, big, &words, self.codeword_bits(), |set, xor| {
            table.entry(xor.clone()).or_insert_with(|| set.to_vec());
            true
        });
        let mut found = None;
        for_each_subset(self.size, small, &words, self.codeword_bits(), |set, xor| {
            let target = received ^ xor;
            if let Some(other) = table.get(&target) {
                // Shared members cancel, so the symmetric difference is the
                // sending set.
                let mut sd: Vec<u64> = set
                    .iter()
                    .filter(|v| !other.contains(v))
                    .chain(other.iter().filter(|v| !set.contains(v)))
                    .copied()
                    .collect();
                sd.sort_unstable();
                if sd.len() <= bound {
                    found = Some(sd);
                    return false;
                }
            }
            true
        });
        Ok(found.ok_or(DecodeFailure::RootCountMismatch))
    }
}

fn subsets_up_to(n: u64, r: usize) -> u128 {
    let mut total: u128 = 0;
    let mut c: u128 = 1;
    for i in 0..=r as u128 {
        if i > 0 {
            if i > u128::from(n) {
                break;
            }
            c = c * (u128::from(n) - i + 1) / i;
        }
        total = total.saturating_add(c);
    }
    total
}

/// Visits every subset of `0..n` of size ≤ `r` with its codeword XOR; the
/// visitor returns false to stop early.
fn for_each_subset<F>(n: u64, r: usize, words: &[BitVector], bits: usize, mut visit: F)
where
    F: FnMut(&[u64], &BitVector) -> bool,
{
    fn rec<F: FnMut(&[u64], &BitVector) -> bool>(
        start: u64,
        n: u64,
        left: usize,
        words: &[BitVector],
        set: &mut Vec<u64>,
        xor: &mut BitVector,
        visit: &mut F,
    ) -> bool {
        if !visit(set, xor) {
            return false;
        }
        if left == 0 {
            return true;
        }
        for x in start..n {
            set.push(x);
            *xor ^= &words[x as usize];
            let go = rec(x + 1, n, left - 1, words, set, xor, visit);
            *xor ^= &words[x as usize];
            set.pop();
            if !go {
                return false;
            }
        }
        true
    }
    let mut set = Vec::with_capacity(r);
    let mut xor = BitVector::zeros(bits);
    rec(0, n, r, words, &mut set, &mut xor, &mut visit);
}

/// Berlekamp–Massey over GF(2^k): the shortest connection polynomial
/// (low degree first, constant term 1) generating `s`.
fn berlekamp_massey(f: &GaloisField, s: &[Elem]) -> Vec<Elem> {
    let mut c: Vec<Elem> = vec![1];
    let mut b: Vec<Elem> = vec![1];
    let mut l = 0usize;
    let mut shift = 1usize;
    let mut last_d: Elem = 1;
    for n in 0..s.len() {
        let mut d = s[n];
        for i in 1..=l.min(c.len() - 1) {
            d ^= f.mul(c[i], s[n - i]);
        }
        if d == 0 {
            shift += 1;
            continue;
        }
        let coef = f.mul(d, f.inv(last_d));
        let prev = c.clone();
        if c.len() < b.len() + shift {
            c.resize(b.len() + shift, 0);
        }
        for (i, &bi) in b.iter().enumerate() {
            c[i + shift] ^= f.mul(coef, bi);
        }
        if 2 * l <= n {
            l = n + 1 - l;
            b = prev;
            last_d = d;
            shift = 1;
        } else {
            shift += 1;
        }
    }
    c.resize(l + 1, 0);
    // A connection polynomial whose top coefficient vanished has fewer
    // nonzero roots than its length; the root count check rejects it.
    c
}

/// Finds all roots of `poly` when it splits into distinct linear factors over
/// the field; returns None otherwise.
fn roots_by_trace(f: &GaloisField, poly: &[Elem]) -> Option<Vec<Elem>> {
    let mut p = poly.to_vec();
    trim(&mut p);
    let deg = p.len().checked_sub(1)?;
    if deg == 0 {
        return Some(Vec::new());
    }
    if p[0] == 0 {
        // Zero is never a locator.
        return None;
    }
    let p = f.poly_monic(&p);
    // p splits into distinct linear factors iff it divides x^(2^k) − x.
    let mut frob = f.poly_rem(&[0, 1], &p);
    for _ in 0..f.degree() {
        frob = f.poly_square_mod(&frob, &p);
    }
    let mut x = f.poly_rem(&[0, 1], &p);
    trim(&mut x);
    trim(&mut frob);
    if frob != x {
        return None;
    }
    let mut roots = Vec::with_capacity(deg);
    split(f, p, 0, &mut roots).then_some(roots)
}

fn split(f: &GaloisField, p: Vec<Elem>, basis_from: u32, roots: &mut Vec<Elem>) -> bool {
    let deg = p.len() - 1;
    match deg {
        0 => return true,
        1 => {
            // monic x + c has root c
            roots.push(p[0]);
            return true;
        }
        _ => {}
    }
    for i in basis_from..f.degree() {
        let beta: Elem = 1 << i;
        // Tr(βx) = Σ_j (βx)^(2^j) mod p takes values in GF(2) on the roots,
        // so its gcd with p collects the roots with trace 1.
        let mut term = f.poly_rem(&[0, beta], &p);
        let mut acc = term.clone();
        for _ in 1..f.degree() {
            term = f.poly_square_mod(&term, &p);
            if acc.len() < term.len() {
                acc.resize(term.len(), 0);
            }
            for (a, t) in acc.iter_mut().zip(&term) {
                *a ^= t;
            }
        }
        trim(&mut acc);
        if acc.is_empty() {
            continue;
        }
        let g = f.poly_gcd(&p, &acc);
        let gd = g.len() - 1;
        if gd > 0 && gd < deg {
            let g = f.poly_monic(&g);
            let rest = f.poly_div(&p, &g);
            return split(f, g, i + 1, roots) && split(f, rest, i + 1, roots);
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::index::sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn xor_of(code: &BccCode, set: &[u64]) -> BitVector {
        let mut w = BitVector::zeros(code.codeword_bits());
        for &x in set {
            code.xor_encode_into(x, &mut w, 0).unwrap();
        }
        w
    }

    #[test]
    fn dimensions() {
        let c = BccCode::new(16, 2).unwrap();
        assert_eq!(c.limb_bits(), 5);
        assert_eq!(c.codeword_bits(), 10);
        let c = BccCode::new(1, 1).unwrap();
        assert_eq!(c.codeword_bits(), 1);
        assert_eq!(c.decode(&c.encode(0).unwrap()).unwrap(), Ok(vec![0]));
        assert_eq!(c.decode(&BitVector::zeros(1)).unwrap(), Ok(vec![]));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert_eq!(BccCode::new(0, 2).unwrap_err(), CodecError::EmptyValueSpace);
        assert_eq!(BccCode::new(4, 0).unwrap_err(), CodecError::ZeroBound);
        assert!(matches!(
            BccCode::with_cap(1 << 20, 10, 100),
            Err(CodecError::CodewordTooLarge { .. })
        ));
        let c = BccCode::new(16, 2).unwrap();
        assert!(c.encode(16).is_err());
        assert!(c.decode(&BitVector::zeros(9)).is_err());
    }

    #[test]
    fn first_limb_never_zero() {
        let c = BccCode::new(16, 2).unwrap();
        for x in 0..16 {
            assert_ne!(c.encode(x).unwrap().read_uint(0, 5), 0);
        }
    }

    #[test]
    fn pairs_round_trip_small_code() {
        let c = BccCode::new(16, 2).unwrap();
        for x in 0..16 {
            for y in x + 1..16 {
                assert_eq!(c.decode(&xor_of(&c, &[x, y])).unwrap(), Ok(vec![x, y]));
            }
        }
    }

    #[test]
    fn random_sets_round_trip_both_root_finders() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (size, bound) in [(100u64, 5usize), (1000, 6), (5000, 8), (1 << 16, 12)] {
            let c = BccCode::new(size, bound).unwrap();
            for _ in 0..200 {
                let n = rng.random_range(0..=bound);
                let mut set: Vec<u64> = sample(&mut rng, size as usize, n)
                    .into_iter()
                    .map(|v| v as u64)
                    .collect();
                set.sort_unstable();
                assert_eq!(c.decode(&xor_of(&c, &set)).unwrap(), Ok(set));
            }
        }
    }

    #[test]
    fn wide_field_uses_offset_map_and_decodes() {
        let c = BccCode::new(1 << 27, 6).unwrap();
        assert_eq!(c.limb_bits(), 28);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(1..=6);
            let mut set: Vec<u64> = (0..n).map(|_| rng.random_range(0..1u64 << 27)).collect();
            set.sort_unstable();
            set.dedup();
            assert_eq!(c.decode(&xor_of(&c, &set)).unwrap(), Ok(set));
        }
    }

    #[test]
    fn overfull_words_are_mostly_flagged() {
        // Beyond the bound the decoder may legitimately return some other set,
        // but it must never return the true set of size > a, and random
        // overfull words should usually fail outright.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = BccCode::new(4096, 4).unwrap();
        let mut failures = 0;
        for _ in 0..300 {
            let set: Vec<u64> = sample(&mut rng, 4096, 9)
                .into_iter()
                .map(|v| v as u64)
                .collect();
            match c.decode(&xor_of(&c, &set)).unwrap() {
                Err(_) => failures += 1,
                Ok(v) => assert!(v.len() <= 4),
            }
        }
        assert!(failures > 250, "only {failures} of 300 overfull words flagged");
    }

    #[test]
    fn bruteforce_agrees_on_small_code() {
        let c = BccCode::new(16, 2).unwrap();
        for x in 0..16 {
            for y in x..16 {
                let set: Vec<u64> = if x == y { vec![x] } else { vec![x, y] };
                let w = xor_of(&c, &set);
                assert_eq!(c.decode_bruteforce(&w, 2, 1 << 20).unwrap(), Ok(set));
            }
        }
        let zero = BitVector::zeros(10);
        assert_eq!(c.decode_bruteforce(&zero, 2, 1 << 20).unwrap(), Ok(vec![]));
        assert!(matches!(
            c.decode_bruteforce(&zero, 2, 5),
            Err(CodecError::SearchTooLarge { .. })
        ));
    }

    #[test]
    fn subset_counts() {
        assert_eq!(subsets_up_to(16, 2), 1 + 16 + 120);
        assert_eq!(subsets_up_to(3, 5), 8);
    }
}
