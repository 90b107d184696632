//! Shortened binary BCH syndromes over GF(2^11).
//!
//! A block of up to 2047 bits is treated as a word of the narrow-sense
//! primitive BCH code of length 2047. The reference party discloses the odd
//! power-sum syndromes `S_1, S_3, …, S_{2t-1}` (11 bits each); the other party
//! combines them with its own, runs Berlekamp–Massey, and locates up to `t`
//! differing positions with a Chien search.

use std::sync::OnceLock;

use crate::bits::BitString;
use crate::error::{Error, Result};

const M: usize = 11;
const ORDER: usize = (1 << M) - 1;
// x^11 + x^2 + 1
const PRIMITIVE_POLY: u32 = 0x805;

struct Gf {
    exp: Vec<u16>,
    log: Vec<u16>,
}

fn gf() -> &'static Gf {
    static TABLES: OnceLock<Gf> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut exp = vec![0u16; 2 * ORDER];
        let mut log = vec![0u16; ORDER + 1];
        let mut x: u32 = 1;
        for i in 0..ORDER {
            exp[i] = x as u16;
            log[x as usize] = i as u16;
            x <<= 1;
            if x & (1 << M) != 0 {
                x ^= PRIMITIVE_POLY;
            }
        }
        for i in ORDER..2 * ORDER {
            exp[i] = exp[i - ORDER];
        }
        Gf { exp, log }
    })
}

impl Gf {
    #[inline]
    fn mul(&self, a: u16, b: u16) -> u16 {
        if a == 0 || b == 0 {
            return 0;
        }
        self.exp[self.log[a as usize] as usize + self.log[b as usize] as usize]
    }

    #[inline]
    fn div(&self, a: u16, b: u16) -> u16 {
        assert!(b != 0);
        if a == 0 {
            return 0;
        }
        let e = self.log[a as usize] as usize + ORDER - self.log[b as usize] as usize;
        self.exp[e % ORDER]
    }

    #[inline]
    fn pow_alpha(&self, e: usize) -> u16 {
        self.exp[e % ORDER]
    }
}

/// Syndrome code with correction radius `t` for blocks of `block_len` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BchSyndromeCode {
    block_len: usize,
    t: usize,
}

impl BchSyndromeCode {
    pub const MAX_BLOCK: usize = ORDER;
    pub const BITS_PER_SYNDROME: usize = M;

    pub fn new(block_len: usize, t: usize) -> Result<Self> {
        if block_len == 0 || block_len > ORDER {
            return Err(Error::invalid(format!("BCH block length {block_len} outside 1..={ORDER}")));
        }
        if 2 * t >= ORDER {
            return Err(Error::invalid(format!("BCH radius {t} too large")));
        }
        Ok(Self { block_len, t })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    /// Number of bits disclosed per block.
    pub fn syndrome_len(&self) -> usize {
        M * self.t
    }

    /// Odd syndromes of `block`, packed 11 bits each.
    pub fn syndrome(&self, block: &BitString) -> Result<BitString> {
        self.check_len(block)?;
        let odd = self.odd_syndromes(block);
        let mut out = BitString::with_capacity(self.syndrome_len());
        for s in odd {
            for b in 0..M {
                out.push(s >> b & 1 == 1);
            }
        }
        Ok(out)
    }

    /// Corrects `local` toward the word whose syndrome is `remote`. Returns
    /// `None` when the difference is not decodable within radius `t`.
    pub fn correct(&self, local: &BitString, remote: &BitString) -> Result<Option<BitString>> {
        self.check_len(local)?;
        if remote.len() != self.syndrome_len() {
            return Err(Error::invalid(format!(
                "syndrome length {} does not match {}",
                remote.len(),
                self.syndrome_len()
            )));
        }
        if self.t == 0 {
            return Ok(Some(local.clone()));
        }
        let field = gf();
        let own = self.odd_syndromes(local);
        // syndromes of the difference pattern, S_1..S_2t
        let mut s = vec![0u16; 2 * self.t];
        for (j, own_j) in own.iter().enumerate() {
            let mut r = 0u16;
            for b in 0..M {
                if remote.get(j * M + b) {
                    r |= 1 << b;
                }
            }
            s[2 * j] = own_j ^ r;
        }
        for j in 1..=self.t {
            // S_{2j} = S_j²
            s[2 * j - 1] = field.mul(s[j - 1], s[j - 1]);
        }
        if s.iter().all(|&v| v == 0) {
            return Ok(Some(local.clone()));
        }
        let locator = berlekamp_massey(field, &s);
        let degree = locator.len() - 1;
        if degree > self.t {
            return Ok(None);
        }
        let mut corrected = local.clone();
        let mut found = 0;
        for i in 0..self.block_len {
            // evaluate Λ(α^{-i})
            let inv = (ORDER - i % ORDER) % ORDER;
            let mut acc = 0u16;
            for (k, &c) in locator.iter().enumerate() {
                if c != 0 {
                    acc ^= field.mul(c, field.pow_alpha(inv * k));
                }
            }
            if acc == 0 {
                corrected.flip(i);
                found += 1;
            }
        }
        Ok((found == degree).then_some(corrected))
    }

    fn odd_syndromes(&self, block: &BitString) -> Vec<u16> {
        let field = gf();
        let mut out = vec![0u16; self.t];
        for i in block.iter_ones() {
            for (j, s) in out.iter_mut().enumerate() {
                *s ^= field.pow_alpha(i * (2 * j + 1));
            }
        }
        out
    }

    fn check_len(&self, block: &BitString) -> Result<()> {
        if block.len() != self.block_len {
            return Err(Error::invalid(format!(
                "block length {} does not match {}",
                block.len(),
                self.block_len
            )));
        }
        Ok(())
    }
}

/// Error-locator polynomial (coefficients low to high, trailing zeros trimmed).
fn berlekamp_massey(field: &Gf, s: &[u16]) -> Vec<u16> {
    let mut c = vec![1u16];
    let mut b = vec![1u16];
    let mut l = 0usize;
    let mut shift = 1usize;
    let mut last_d = 1u16;
    for n in 0..s.len() {
        let mut d = s[n];
        for i in 1..=l.min(c.len() - 1) {
            d ^= field.mul(c[i], s[n - i]);
        }
        if d == 0 {
            shift += 1;
            continue;
        }
        let coef = field.div(d, last_d);
        let mut next = c.clone();
        if next.len() < b.len() + shift {
            next.resize(b.len() + shift, 0);
        }
        for (i, &bi) in b.iter().enumerate() {
            next[i + shift] ^= field.mul(coef, bi);
        }
        if 2 * l <= n {
            l = n + 1 - l;
            b = c;
            last_d = d;
            shift = 1;
        } else {
            shift += 1;
        }
        c = next;
    }
    while c.len() > 1 && *c.last().unwrap() == 0 {
        c.pop();
    }
    c
}
