//! Seeded binary Toeplitz hashing.
//!
//! An `m × n` Toeplitz matrix over GF(2) is fixed by `n + m - 1` seed bits.
//! The family is 2-universal: for any fixed `x ≠ y` and a uniformly random
//! seed, `P[T·x = T·y] = 2^-m`. Privacy amplification and key verification
//! both build on it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bits::BitString;

/// Computes `T·input` where `T` is the `out_len × input.len()` Toeplitz matrix
/// with `T[i][j] = s[i - j + n - 1]` and `s` drawn from `seed`.
pub fn toeplitz_hash(input: &BitString, out_len: usize, seed: u64) -> BitString {
    let n = input.len();
    if out_len == 0 || n == 0 {
        return BitString::zeros(out_len);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diag = BitString::random(n + out_len - 1, &mut rng);
    // row i of T, read left to right, is the reversed diagonal sequence
    // starting at (out_len - 1 - i)
    let reversed: BitString = (0..diag.len()).rev().map(|i| diag.get(i)).collect();
    let words = input.words();
    let mut out = BitString::zeros(out_len);
    for i in 0..out_len {
        let start = out_len - 1 - i;
        let mut acc = 0u32;
        for (w, &xw) in words.iter().enumerate() {
            acc ^= (reversed.word_at(start + w * 64) & xw).count_ones();
        }
        if acc & 1 == 1 {
            out.set(i, true);
        }
    }
    out
}

/// 64-bit digest used for key verification.
pub fn digest64(input: &BitString, seed: u64) -> u64 {
    let h = toeplitz_hash(input, 64, seed);
    h.words().first().copied().unwrap_or(0)
}
