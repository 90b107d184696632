//! Frequency, block-frequency and runs tests from NIST SP 800-22.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::checked_gamma_ur;

use crate::bits::BitString;
use crate::error::{Error, Result};

pub const MIN_BITS: usize = 10_000;
pub const BLOCK_LEN: usize = 128;
pub const ALPHA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub name: String,
    pub p_value: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RandomnessVerdicts {
    pub bits: usize,
    pub tests: Vec<TestVerdict>,
}

impl RandomnessVerdicts {
    pub fn passed(&self) -> usize {
        self.tests.iter().filter(|t| t.passed).count()
    }

    pub fn all_passed(&self) -> bool {
        !self.tests.is_empty() && self.passed() == self.tests.len()
    }
}

pub fn monobit_p(bits: &BitString) -> f64 {
    let n = bits.len() as f64;
    let s = 2.0 * bits.count_ones() as f64 - n;
    erfc(s.abs() / n.sqrt() / std::f64::consts::SQRT_2)
}

/// Trailing bits that do not fill a block are ignored.
pub fn block_frequency_p(bits: &BitString, m: usize) -> f64 {
    let blocks = bits.len() / m;
    if blocks == 0 {
        return 0.0;
    }
    let chi2 = (0..blocks)
        .map(|i| {
            let pi = bits.slice(i * m..(i + 1) * m).count_ones() as f64 / m as f64;
            (pi - 0.5).powi(2)
        })
        .sum::<f64>()
        * 4.0
        * m as f64;
    let (a, x) = (blocks as f64 / 2.0, chi2 / 2.0);
    // the series fails to converge only far out in either tail
    checked_gamma_ur(a, x).unwrap_or(if x > a { 0.0 } else { 1.0 })
}

pub fn runs_p(bits: &BitString) -> f64 {
    let n = bits.len() as f64;
    if bits.is_empty() {
        return 0.0;
    }
    let pi = bits.count_ones() as f64 / n;
    // the frequency prerequisite
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return 0.0;
    }
    let len = bits.len();
    let transitions = bits.slice(0..len - 1).xor(&bits.slice(1..len)).count_ones();
    let v = 1.0 + transitions as f64;
    let q = pi * (1.0 - pi);
    erfc((v - 2.0 * n * q).abs() / (2.0 * (2.0 * n).sqrt() * q))
}

pub fn randomness_tests(bits: &BitString) -> Result<RandomnessVerdicts> {
    if bits.len() < MIN_BITS {
        return Err(Error::InsufficientMaterial {
            needed: MIN_BITS,
            got: bits.len(),
        });
    }
    let tests = [
        ("monobit", monobit_p(bits)),
        ("block_frequency", block_frequency_p(bits, BLOCK_LEN)),
        ("runs", runs_p(bits)),
    ]
    .into_iter()
    .map(|(name, p_value)| TestVerdict {
        name: name.to_string(),
        p_value,
        passed: p_value >= ALPHA,
    })
    .collect();
    Ok(RandomnessVerdicts {
        bits: bits.len(),
        tests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    // Worked examples from the test descriptions in SP 800-22.
    #[test]
    fn reference_examples() {
        assert!((monobit_p(&bs("1011010101")) - 0.527089).abs() < 1e-6);
        assert!((block_frequency_p(&bs("0110011010"), 3) - 0.801252).abs() < 1e-6);
        assert!((runs_p(&bs("1001101011")) - 0.147232).abs() < 1e-6);
    }

    #[test]
    fn pathological_inputs_fail() {
        let zeros = randomness_tests(&BitString::zeros(20_000)).unwrap();
        assert!(!zeros.tests[0].passed);
        let alternating: BitString = (0..20_000).map(|i| i % 2 == 1).collect();
        let v = randomness_tests(&alternating).unwrap();
        assert!(v.tests[0].passed);
        assert!(!v.tests[2].passed);
    }

    #[test]
    fn uniform_bits_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = randomness_tests(&BitString::random(100_000, &mut rng)).unwrap();
        assert!(v.all_passed(), "{v:?}");
    }

    #[test]
    fn short_input_is_rejected() {
        assert_eq!(
            randomness_tests(&BitString::zeros(9_999)),
            Err(Error::InsufficientMaterial { needed: 10_000, got: 9_999 })
        );
    }
}
