//! Polar codes over the binary symmetric channel.
//!
//! Natural-order construction `x = u · F^{⊗m}` with `F = [[1,0],[1,1]]`,
//! frozen set chosen by Bhattacharyya-parameter evolution at a design
//! crossover probability, systematic encoding, and successive-cancellation
//! decoding in the LLR domain with the exact check-node update.
//!
//! The same code object serves two roles: forward error correction for the
//! simplified forwarding mode, and syndrome (frozen-bit) disclosure for block
//! reconciliation, where the frozen values are arbitrary rather than zero.

use crate::bits::BitString;
use crate::error::{Error, Result};

/// LLR magnitude used for positions whose value is known with certainty.
pub const KNOWN_LLR: f64 = 1.0e6;

#[derive(Debug, Clone, PartialEq)]
pub struct PolarCode {
    n: usize,
    log_n: usize,
    frozen: Vec<bool>,
    info_positions: Vec<usize>,
}

impl PolarCode {
    /// Builds an `(n, k)` code for a BSC with crossover `design_epsilon`.
    pub fn construct(n: usize, k: usize, design_epsilon: f64) -> Result<Self> {
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::invalid(format!("code length {n} is not a power of two ≥ 2")));
        }
        if k == 0 || k > n {
            return Err(Error::invalid(format!("info length {k} outside 1..={n}")));
        }
        if !(design_epsilon > 0.0 && design_epsilon < 0.5) {
            return Err(Error::invalid(format!(
                "design epsilon {design_epsilon} outside (0, 0.5)"
            )));
        }
        let ln_z = bhattacharyya_ln(n, design_epsilon);
        let mut order: Vec<usize> = (0..n).collect();
        // most reliable first; ties go to the higher index, which keeps the
        // information set closed under the polar partial order
        order.sort_by(|&a, &b| ln_z[a].total_cmp(&ln_z[b]).then(b.cmp(&a)));
        let mut frozen = vec![true; n];
        for &i in &order[..k] {
            frozen[i] = false;
        }
        let info_positions = (0..n).filter(|&i| !frozen[i]).collect();
        Ok(Self {
            n,
            log_n: n.trailing_zeros() as usize,
            frozen,
            info_positions,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.info_positions.len()
    }

    pub fn frozen_count(&self) -> usize {
        self.n - self.k()
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen[i]
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    /// Frozen positions in ascending order.
    pub fn frozen_positions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(|&i| self.frozen[i])
    }

    /// Systematic encoding: the returned codeword carries `info` verbatim at
    /// the information positions.
    pub fn encode_systematic(&self, info: &BitString) -> Result<BitString> {
        self.check_info(info)?;
        let mut v = vec![false; self.n];
        for (j, &pos) in self.info_positions.iter().enumerate() {
            v[pos] = info.get(j);
        }
        transform(&mut v);
        for (bit, &fz) in v.iter_mut().zip(&self.frozen) {
            if fz {
                *bit = false;
            }
        }
        transform(&mut v);
        Ok(BitString::from_bools(v))
    }

    /// Extracts the information bits from a systematic codeword.
    pub fn extract_info(&self, codeword: &BitString) -> BitString {
        self.info_positions.iter().map(|&p| codeword.get(p)).collect()
    }

    /// The frozen-position values of `u = x · F^{⊗m}`; for a codeword this is
    /// all zero, for an arbitrary word it is its syndrome under this code.
    pub fn syndrome(&self, word: &BitString) -> Result<BitString> {
        if word.len() != self.n {
            return Err(Error::invalid(format!(
                "word length {} does not match code length {}",
                word.len(),
                self.n
            )));
        }
        let mut u = word.to_bools();
        transform(&mut u);
        Ok(self.frozen_positions().map(|i| u[i]).collect())
    }

    /// Successive-cancellation decoding with all frozen bits zero. Returns the
    /// estimated codeword.
    pub fn decode(&self, llr: &[f64]) -> Result<BitString> {
        self.decode_with_frozen(llr, &BitString::zeros(self.frozen_count()))
    }

    /// Successive-cancellation decoding where the frozen positions hold the
    /// given values (in ascending position order). Returns the estimated word
    /// `x̂` whose syndrome equals `frozen_values`.
    pub fn decode_with_frozen(&self, llr: &[f64], frozen_values: &BitString) -> Result<BitString> {
        if llr.len() != self.n {
            return Err(Error::invalid(format!(
                "llr length {} does not match code length {}",
                llr.len(),
                self.n
            )));
        }
        if frozen_values.len() != self.frozen_count() {
            return Err(Error::invalid(format!(
                "{} frozen values supplied, code has {}",
                frozen_values.len(),
                self.frozen_count()
            )));
        }
        let mut fixed: Vec<Option<bool>> = vec![None; self.n];
        for (j, i) in self.frozen_positions().enumerate() {
            fixed[i] = Some(frozen_values.get(j));
        }
        let mut ctx = ScContext {
            fixed,
            llr: (0..self.log_n).map(|l| vec![0.0; 1 << l]).collect(),
            bits: (0..self.log_n).map(|l| vec![false; 1 << l]).collect(),
        };
        let mut x = vec![false; self.n];
        sc_node(self.log_n, llr, 0, &mut ctx, &mut x);
        Ok(BitString::from_bools(x))
    }

    fn check_info(&self, info: &BitString) -> Result<()> {
        if info.len() != self.k() {
            return Err(Error::invalid(format!(
                "info length {} does not match k = {}",
                info.len(),
                self.k()
            )));
        }
        Ok(())
    }
}

/// LLRs for a hard-decision BSC observation with crossover `epsilon`.
pub fn bsc_llr(received: &BitString, epsilon: f64) -> Vec<f64> {
    let eps = epsilon.clamp(1e-9, 0.5 - 1e-9);
    let mag = ((1.0 - eps) / eps).ln();
    received.iter().map(|b| if b { -mag } else { mag }).collect()
}

/// In-place `x = u · F^{⊗m}` over GF(2); the transform is an involution.
pub fn transform(bits: &mut [bool]) {
    let n = bits.len();
    let mut half = 1;
    while half < n {
        for start in (0..n).step_by(2 * half) {
            for j in start..start + half {
                bits[j] ^= bits[j + half];
            }
        }
        half *= 2;
    }
}

/// Natural logarithm of the Bhattacharyya parameter of each synthetic channel.
fn bhattacharyya_ln(n: usize, epsilon: f64) -> Vec<f64> {
    let z0 = 2.0 * (epsilon * (1.0 - epsilon)).sqrt();
    let mut ln_z = vec![z0.ln()];
    while ln_z.len() < n {
        let mut next = Vec::with_capacity(ln_z.len() * 2);
        for &lz in &ln_z {
            let z = lz.exp();
            // worse channel 2z - z², better channel z²
            next.push(lz + (2.0 - z).ln());
            next.push(2.0 * lz);
        }
        ln_z = next;
    }
    ln_z
}

struct ScContext {
    fixed: Vec<Option<bool>>,
    llr: Vec<Vec<f64>>,
    bits: Vec<Vec<bool>>,
}

#[inline]
fn check_node(a: f64, b: f64) -> f64 {
    let sign = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    let (aa, ab) = (a.abs(), b.abs());
    sign * aa.min(ab) + (-(aa + ab)).exp().ln_1p() - (-(aa - ab).abs()).exp().ln_1p()
}

fn sc_node(level: usize, llr: &[f64], u_off: usize, ctx: &mut ScContext, out: &mut [bool]) {
    if level == 0 {
        let bit = ctx.fixed[u_off].unwrap_or(llr[0] < 0.0);
        out[0] = bit;
        return;
    }
    let half = 1 << (level - 1);
    let mut child = std::mem::take(&mut ctx.llr[level - 1]);
    let mut left = std::mem::take(&mut ctx.bits[level - 1]);

    for i in 0..half {
        child[i] = check_node(llr[i], llr[i + half]);
    }
    sc_node(level - 1, &child, u_off, ctx, &mut left);

    for i in 0..half {
        let l = llr[i];
        child[i] = llr[i + half] + if left[i] { -l } else { l };
    }
    let (out_l, out_r) = out.split_at_mut(half);
    sc_node(level - 1, &child, u_off + half, ctx, out_r);
    for i in 0..half {
        out_l[i] = left[i] ^ out_r[i];
    }

    ctx.llr[level - 1] = child;
    ctx.bits[level - 1] = left;
}
