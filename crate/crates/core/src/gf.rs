//! Arithmetic in GF(2^k), polynomial basis, plus the handful of polynomial
//! routines the algebraic decoder needs.
//!
//! Fields up to degree [`TABLE_MAX_DEGREE`] use log/antilog tables and expose
//! discrete logarithms; larger fields (up to [`MAX_DEGREE`]) fall back to
//! carry-less multiplication and have no log table.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::CodecError;

/// Largest supported extension degree.
pub const MAX_DEGREE: u32 = 32;

/// Largest degree for which log/antilog tables are built.
pub const TABLE_MAX_DEGREE: u32 = 22;

/// Reduction polynomials, indexed by degree. Entries up to `TABLE_MAX_DEGREE`
/// are primitive (x generates the multiplicative group); the rest are
/// irreducible.
const POLYS: [u64; 33] = [
    0,
    0b11,
    0x7,
    0xB,
    0x13,
    0x25,
    0x43,
    0x83,
    0x11D,
    0x211,
    0x409,
    0x805,
    0x1053,
    0x201B,
    0x4443,
    0x8003,
    0x1100B,
    0x20009,
    0x40081,
    0x80027,
    0x100009,
    0x200005,
    0x400003,
    0x800021,
    0x1000087,
    0x2000009,
    0x4000047,
    0x8000027,
    0x10000009,
    0x20000005,
    0x40000053,
    0x80000009,
    0x1_0000_008D,
];

/// An element of GF(2^k) in polynomial basis, stored in the low `k` bits.
pub type Elem = u64;

struct Tables {
    /// exp[i] = α^i for i in 0..2·order, doubled to skip a modulo in `mul`.
    exp: Vec<u32>,
    /// log[a] = i with α^i = a; log[0] is unused.
    log: Vec<u32>,
}

pub struct GaloisField {
    k: u32,
    poly: u64,
    tables: Option<Tables>,
}

impl std::fmt::Debug for GaloisField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaloisField")
            .field("k", &self.k)
            .field("poly", &format_args!("{:#x}", self.poly))
            .field("tables", &self.tables.is_some())
            .finish()
    }
}

static FIELDS: OnceLock<Mutex<HashMap<u32, Arc<GaloisField>>>> = OnceLock::new();

impl GaloisField {
    /// Returns the shared field of degree `k`, building it on first use.
    pub fn get(k: u32) -> Result<Arc<GaloisField>, CodecError> {
        if k == 0 || k > MAX_DEGREE {
            return Err(CodecError::FieldDegree(k));
        }
        let cache = FIELDS.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("field cache poisoned");
        let field = guard
            .entry(k)
            .or_insert_with(|| Arc::new(GaloisField::build(k)))
            .clone();
        Ok(field)
    }

    fn build(k: u32) -> GaloisField {
        let poly = POLYS[k as usize];
        let tables = (k <= TABLE_MAX_DEGREE).then(|| {
            let order = (1usize << k) - 1;
            let mut exp = vec![0u32; 2 * order];
            let mut log = vec![0u32; order + 1];
            let mut cur: u64 = 1;
            for i in 0..order {
                assert!(
                    i == 0 || cur != 1,
                    "reduction polynomial for degree {k} is not primitive"
                );
                exp[i] = cur as u32;
                exp[i + order] = cur as u32;
                log[cur as usize] = i as u32;
                cur <<= 1;
                if cur >> k & 1 == 1 {
                    cur ^= poly;
                }
            }
            assert_eq!(cur, 1, "generator order mismatch for degree {k}");
            Tables { exp, log }
        });
        GaloisField { k, poly, tables }
    }

    pub fn degree(&self) -> u32 {
        self.k
    }

    pub fn modulus(&self) -> u64 {
        self.poly
    }

    /// Size of the multiplicative group, 2^k − 1.
    pub fn order(&self) -> u64 {
        (1u64 << self.k) - 1
    }

    pub fn has_log_table(&self) -> bool {
        self.tables.is_some()
    }

    #[inline]
    pub fn mul(&self, a: Elem, b: Elem) -> Elem {
        if a == 0 || b == 0 {
            return 0;
        }
        match &self.tables {
            Some(t) => {
                let i = t.log[a as usize] as usize + t.log[b as usize] as usize;
                Elem::from(t.exp[i])
            }
            None => self.reduce(clmul(a, b)),
        }
    }

    #[inline]
    pub fn square(&self, a: Elem) -> Elem {
        self.mul(a, a)
    }

    pub fn pow(&self, a: Elem, mut e: u64) -> Elem {
        if let (Some(t), true) = (&self.tables, a != 0) {
            let l = (t.log[a as usize] as u64 * (e % self.order())) % self.order();
            return Elem::from(t.exp[l as usize]);
        }
        let mut base = a;
        let mut acc: Elem = 1;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.square(base);
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; panics on zero.
    pub fn inv(&self, a: Elem) -> Elem {
        assert!(a != 0, "inverse of zero in GF(2^{})", self.k);
        match &self.tables {
            Some(t) => {
                let order = self.order() as usize;
                let l = t.log[a as usize] as usize;
                Elem::from(t.exp[(order - l) % order])
            }
            None => self.pow(a, self.order() - 1),
        }
    }

    /// The generator α (the class of x).
    pub fn alpha(&self) -> Elem {
        self.reduce(2)
    }

    /// α^e for the tabled fields.
    pub fn alpha_pow(&self, e: u64) -> Elem {
        match &self.tables {
            Some(t) => Elem::from(t.exp[(e % self.order()) as usize]),
            None => self.pow(self.alpha(), e),
        }
    }

    /// Discrete log base α, only available for tabled fields.
    pub fn log(&self, a: Elem) -> Option<u64> {
        if a == 0 {
            return None;
        }
        self.tables.as_ref().map(|t| u64::from(t.log[a as usize]))
    }

    fn reduce(&self, mut p: u128) -> Elem {
        let k = self.k;
        let poly = u128::from(self.poly);
        let mut top = 127 - p.leading_zeros().min(127);
        while p >> k != 0 {
            if p >> top & 1 == 1 {
                p ^= poly << (top - k);
            }
            top -= 1;
        }
        p as Elem
    }

    // ---- polynomials over the field, coefficient vectors low degree first ----

    /// Evaluates `poly` at `x` by Horner's rule.
    pub fn poly_eval(&self, poly: &[Elem], x: Elem) -> Elem {
        poly.iter().rev().fold(0, |acc, &c| self.mul(acc, x) ^ c)
    }

    /// Remainder of `a` modulo `m`; `m` must have a nonzero leading coefficient.
    pub fn poly_rem(&self, a: &[Elem], m: &[Elem]) -> Vec<Elem> {
        let dm = m.len() - 1;
        let lead_inv = self.inv(m[dm]);
        let mut r = a.to_vec();
        trim(&mut r);
        while r.len() > dm && !r.is_empty() {
            let shift = r.len() - 1 - dm;
            let q = self.mul(*r.last().unwrap(), lead_inv);
            for (i, &c) in m.iter().enumerate() {
                r[shift + i] ^= self.mul(q, c);
            }
            trim(&mut r);
        }
        r
    }

    /// Quotient of exact or inexact division (the remainder is dropped).
    pub fn poly_div(&self, a: &[Elem], m: &[Elem]) -> Vec<Elem> {
        let dm = m.len() - 1;
        let lead_inv = self.inv(m[dm]);
        let mut r = a.to_vec();
        trim(&mut r);
        if r.len() <= dm {
            return Vec::new();
        }
        let mut q = vec![0; r.len() - dm];
        while r.len() > dm {
            let shift = r.len() - 1 - dm;
            let c = self.mul(*r.last().unwrap(), lead_inv);
            q[shift] = c;
            for (i, &mc) in m.iter().enumerate() {
                r[shift + i] ^= self.mul(c, mc);
            }
            trim(&mut r);
        }
        q
    }

    pub fn poly_mul_mod(&self, a: &[Elem], b: &[Elem], m: &[Elem]) -> Vec<Elem> {
        if a.is_empty() || b.is_empty() {
            return Vec::new();
        }
        let mut prod = vec![0; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                prod[i + j] ^= self.mul(x, y);
            }
        }
        self.poly_rem(&prod, m)
    }

    /// Squares a polynomial modulo `m`. Squaring is additive in characteristic
    /// two, so the square just spreads squared coefficients to even degrees.
    pub fn poly_square_mod(&self, a: &[Elem], m: &[Elem]) -> Vec<Elem> {
        if a.is_empty() {
            return Vec::new();
        }
        let mut sq = vec![0; 2 * a.len() - 1];
        for (i, &c) in a.iter().enumerate() {
            sq[2 * i] = self.square(c);
        }
        self.poly_rem(&sq, m)
    }

    pub fn poly_gcd(&self, a: &[Elem], b: &[Elem]) -> Vec<Elem> {
        let mut x = a.to_vec();
        let mut y = b.to_vec();
        trim(&mut x);
        trim(&mut y);
        while !y.is_empty() {
            let r = self.poly_rem(&x, &y);
            x = y;
            y = r;
        }
        x
    }

    /// Scales a nonzero polynomial so its leading coefficient is one.
    pub fn poly_monic(&self, a: &[Elem]) -> Vec<Elem> {
        let lead = *a.last().expect("monic of zero polynomial");
        let inv = self.inv(lead);
        a.iter().map(|&c| self.mul(c, inv)).collect()
    }
}

/// Drops leading zero coefficients.
pub fn trim(p: &mut Vec<Elem>) {
    while p.last() == Some(&0) {
        p.pop();
    }
}

/// Carry-less product of two field elements (both below 2^32).
#[inline]
fn clmul(a: u64, b: u64) -> u128 {
    let mut table = [0u64; 16];
    for j in 1..16 {
        let mut v = 0u64;
        for bit in 0..4 {
            if j >> bit & 1 == 1 {
                v ^= a << bit;
            }
        }
        table[j] = v;
    }
    let mut acc: u128 = 0;
    let mut shift = 64 - b.leading_zeros();
    shift = shift.div_ceil(4) * 4;
    while shift > 0 {
        shift -= 4;
        acc = (acc << 4) ^ u128::from(table[(b >> shift & 0xF) as usize]);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference multiplication straight from the definition: shift-and-add
    /// with reduction after every step.
    fn slow_mul(k: u32, poly: u64, mut a: u64, mut b: u64) -> u64 {
        let mut acc = 0;
        while b != 0 {
            if b & 1 == 1 {
                acc ^= a;
            }
            b >>= 1;
            a <<= 1;
            if a >> k & 1 == 1 {
                a ^= poly;
            }
        }
        acc
    }

    #[test]
    fn field_axioms_exhaustive_small_degrees() {
        for k in 1..=6 {
            let f = GaloisField::get(k).unwrap();
            let q = 1u64 << k;
            for a in 0..q {
                for b in 0..q {
                    let ab = f.mul(a, b);
                    assert_eq!(ab, slow_mul(k, f.modulus(), a, b));
                    assert_eq!(ab, f.mul(b, a));
                    for c in 0..q {
                        assert_eq!(f.mul(ab, c), f.mul(a, f.mul(b, c)));
                        assert_eq!(f.mul(a, b ^ c), ab ^ f.mul(a, c));
                    }
                }
                if a != 0 {
                    assert_eq!(f.mul(a, f.inv(a)), 1);
                }
            }
        }
    }

    #[test]
    fn field_axioms_all_pairs_degree_eight() {
        let f = GaloisField::get(8).unwrap();
        for a in 0..256 {
            for b in 0..256 {
                assert_eq!(f.mul(a, b), slow_mul(8, f.modulus(), a, b));
            }
        }
    }

    #[test]
    fn generator_has_full_order() {
        for k in 1..=16 {
            let f = GaloisField::get(k).unwrap();
            let alpha = f.alpha();
            let mut cur = alpha;
            let mut order = 1u64;
            while cur != 1 {
                cur = f.mul(cur, alpha);
                order += 1;
            }
            assert_eq!(order, f.order(), "degree {k}");
        }
    }

    /// x^(2^d) mod p over GF(2), for the irreducibility check below.
    fn frobenius_power(p: u64, k: u32, d: u32) -> u64 {
        let reduce = |mut v: u128| {
            while v >> k != 0 {
                let top = 127 - v.leading_zeros();
                v ^= u128::from(p) << (top - k);
            }
            v as u64
        };
        let mut x: u64 = reduce(2);
        for _ in 0..d {
            let mut sq: u128 = 0;
            for i in 0..k {
                if x >> i & 1 == 1 {
                    sq ^= 1u128 << (2 * i);
                }
            }
            x = reduce(sq);
        }
        x
    }

    fn gf2_gcd(mut a: u64, mut b: u64) -> u64 {
        while b != 0 {
            let db = 63 - b.leading_zeros();
            while a != 0 && 63 - a.leading_zeros() >= db {
                a ^= b << (63 - a.leading_zeros() - db);
            }
            std::mem::swap(&mut a, &mut b);
        }
        a
    }

    #[test]
    fn untabled_moduli_are_irreducible() {
        // Rabin's test: x^(2^k) = x mod p and gcd(x^(2^(k/q)) - x, p) = 1 for
        // each prime q dividing k.
        for k in (TABLE_MAX_DEGREE + 1)..=MAX_DEGREE {
            let p = POLYS[k as usize];
            assert_eq!(frobenius_power(p, k, k), 2, "degree {k}");
            for q in [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31] {
                if k % q == 0 {
                    let h = frobenius_power(p, k, k / q) ^ 2;
                    assert_eq!(gf2_gcd(p, h), 1, "degree {k}, factor {q}");
                }
            }
        }
    }

    #[test]
    fn wide_field_matches_reference_multiplication() {
        let f = GaloisField::get(28).unwrap();
        assert!(!f.has_log_table());
        let mut x: u64 = 0x9E37_79B9;
        for _ in 0..2000 {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            let a = x & ((1 << 28) - 1);
            let b = (x >> 30) & ((1 << 28) - 1);
            assert_eq!(f.mul(a, b), slow_mul(28, f.modulus(), a, b));
            if a != 0 {
                assert_eq!(f.mul(a, f.inv(a)), 1);
            }
        }
    }

    #[test]
    fn rejects_unsupported_degrees() {
        assert!(GaloisField::get(0).is_err());
        assert!(GaloisField::get(MAX_DEGREE + 1).is_err());
    }

    #[test]
    fn polynomial_division_identity() {
        let f = GaloisField::get(8).unwrap();
        let a = vec![3, 7, 0, 9, 200, 1];
        let m = vec![5, 1, 17];
        let q = f.poly_div(&a, &m);
        let r = f.poly_rem(&a, &m);
        // a = q*m + r
        let mut back = vec![0; a.len()];
        for (i, &x) in q.iter().enumerate() {
            for (j, &y) in m.iter().enumerate() {
                back[i + j] ^= f.mul(x, y);
            }
        }
        for (i, &c) in r.iter().enumerate() {
            back[i] ^= c;
        }
        assert_eq!(back, a);
    }
}
