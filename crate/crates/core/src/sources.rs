//! Simulated sources with known min-entropy.
//!
//! Five families: binary memoryless, near-uniform, inverted near-uniform,
//! normal rounded to integers, and a symmetric first-order binary Markov
//! chain. All sampling goes through [`SourceRng`] so a seed pins the stream.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::analysis::{min_entropy, Distribution};
use crate::error::{invalid, Result};
use crate::ingest::{check_block_width, BlockSequence};

/// Generator behind every simulated source.
pub type SourceRng = ChaCha8Rng;

/// Name of [`SourceRng`], recorded in reports and sidecar files.
pub const RNG_NAME: &str = "chacha8";

/// A source family and its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SourceFamily {
    /// IID bits with `P(1) = p`.
    Bms { p: f64 },
    /// IID blocks, block 0 with probability `theta`, others uniform.
    NearUniform { theta: f64 },
    /// IID blocks, `floor(1/psi)` atoms of mass `psi` plus a remainder atom.
    InvertedNearUniform { psi: f64 },
    /// IID blocks: a normal with mean `(B-1)/2`, rounded and clamped.
    DiscretizedNormal { sigma: f64 },
    /// Bits from a chain with `p(1|0) = p(0|1) = p`, started stationary.
    Markov { p: f64 },
}

impl SourceFamily {
    pub fn name(&self) -> &'static str {
        match self {
            SourceFamily::Bms { .. } => "bms",
            SourceFamily::NearUniform { .. } => "near_uniform",
            SourceFamily::InvertedNearUniform { .. } => "inverted_near_uniform",
            SourceFamily::DiscretizedNormal { .. } => "discretized_normal",
            SourceFamily::Markov { .. } => "markov",
        }
    }

    pub fn param(&self) -> f64 {
        match *self {
            SourceFamily::Bms { p } | SourceFamily::Markov { p } => p,
            SourceFamily::NearUniform { theta } => theta,
            SourceFamily::InvertedNearUniform { psi } => psi,
            SourceFamily::DiscretizedNormal { sigma } => sigma,
        }
    }

    /// Builds a family from its name and single parameter.
    pub fn with_param(name: &str, value: f64) -> Result<Self> {
        Ok(match name {
            "bms" => SourceFamily::Bms { p: value },
            "near_uniform" | "near-uniform" | "nu" => SourceFamily::NearUniform { theta: value },
            "inverted_near_uniform" | "inverted-near-uniform" | "inu" => {
                SourceFamily::InvertedNearUniform { psi: value }
            }
            "discretized_normal" | "normal" => SourceFamily::DiscretizedNormal { sigma: value },
            "markov" => SourceFamily::Markov { p: value },
            other => return invalid(format!("unknown source family {other:?}")),
        })
    }

    pub fn validate(&self, bits_per_block: u32) -> Result<()> {
        check_block_width(bits_per_block)?;
        let lo = 1.0 / (1u64 << bits_per_block) as f64;
        match *self {
            SourceFamily::Bms { p } | SourceFamily::Markov { p } => {
                if !(p > 0.0 && p < 1.0) {
                    return invalid(format!("{} needs 0 < p < 1, got {p}", self.name()));
                }
            }
            SourceFamily::NearUniform { theta: v } | SourceFamily::InvertedNearUniform { psi: v } => {
                if !(v >= lo && v <= 1.0) {
                    return invalid(format!("{} needs a parameter in [1/B, 1], got {v}", self.name()));
                }
            }
            SourceFamily::DiscretizedNormal { sigma } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return invalid(format!("discretized_normal needs sigma > 0, got {sigma}"));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for SourceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let key = match self {
            SourceFamily::Bms { .. } | SourceFamily::Markov { .. } => "p",
            SourceFamily::NearUniform { .. } => "theta",
            SourceFamily::InvertedNearUniform { .. } => "psi",
            SourceFamily::DiscretizedNormal { .. } => "sigma",
        };
        write!(f, "{}:{key}={}", self.name(), self.param())
    }
}

/// Parses `family:key=value` (or `family:value`), e.g. `bms:p=0.3`.
impl FromStr for SourceFamily {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        let Some((name, rest)) = s.split_once(':') else {
            return invalid(format!("expected family:param=value, got {s:?}"));
        };
        let value = rest.rsplit_once('=').map_or(rest, |(_, v)| v);
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| crate::error::Error::InvalidArgument(format!("bad parameter in {s:?}")))?;
        Self::with_param(name.trim(), value)
    }
}

/// A fully specified simulated source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    #[serde(flatten)]
    pub family: SourceFamily,
    pub seed: u64,
    pub n_blocks: usize,
    pub bits_per_block: u32,
}

impl SourceSpec {
    pub fn new(family: SourceFamily, seed: u64, n_blocks: usize, bits_per_block: u32) -> Self {
        Self { family, seed, n_blocks, bits_per_block }
    }

    pub fn alphabet_size(&self) -> usize {
        1usize << self.bits_per_block
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate(self.bits_per_block)?;
        if self.n_blocks == 0 {
            return invalid("a source needs at least one block");
        }
        Ok(())
    }
}

/// How a ground-truth value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivation {
    ClosedForm,
    BruteForce,
}

/// Exact per-bit min-entropy of a source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub per_bit_min_entropy: f64,
    pub derivation: Derivation,
}

/// Draws `n_blocks` blocks from the source.
pub fn sample(spec: &SourceSpec) -> Result<BlockSequence> {
    spec.validate()?;
    let mut rng = SourceRng::seed_from_u64(spec.seed);
    let l = spec.bits_per_block;
    let n = spec.n_blocks;
    let blocks = match spec.family {
        SourceFamily::Bms { p } => (0..n)
            .map(|_| (0..l).fold(0u32, |acc, _| (acc << 1) | u32::from(rng.random::<f64>() < p)))
            .collect(),
        SourceFamily::Markov { p } => {
            let mut bit = rng.random::<bool>();
            let mut first = true;
            (0..n)
                .map(|_| {
                    (0..l).fold(0u32, |acc, _| {
                        if !first && rng.random::<f64>() < p {
                            bit = !bit;
                        }
                        first = false;
                        (acc << 1) | u32::from(bit)
                    })
                })
                .collect()
        }
        SourceFamily::DiscretizedNormal { sigma } => {
            sample_rounded_normal(&mut rng, sigma, spec.alphabet_size(), n)
        }
        SourceFamily::NearUniform { .. } | SourceFamily::InvertedNearUniform { .. } => {
            let law = block_distribution(spec)?;
            let index = WeightedIndex::new(law.probs())
                .map_err(|e| crate::error::Error::InvalidArgument(e.to_string()))?;
            (0..n).map(|_| index.sample(&mut rng) as u32).collect()
        }
    };
    Ok(BlockSequence::from_raw_parts(blocks, l))
}

fn sample_rounded_normal(rng: &mut SourceRng, sigma: f64, alphabet: usize, n: usize) -> Vec<u32> {
    let mean = (alphabet as f64 - 1.0) / 2.0;
    let normal = rand_distr::Normal::new(mean, sigma).expect("sigma validated");
    let top = (alphabet - 1) as f64;
    (0..n)
        .map(|_| {
            let x: f64 = normal.sample(rng);
            x.round().clamp(0.0, top) as u32
        })
        .collect()
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Exact marginal law of one block.
///
/// For the Markov chain this is the stationary law of `L` consecutive bits.
pub fn block_distribution(spec: &SourceSpec) -> Result<Distribution> {
    spec.family.validate(spec.bits_per_block)?;
    let alphabet = spec.alphabet_size();
    let l = spec.bits_per_block;
    match spec.family {
        SourceFamily::NearUniform { theta } => Distribution::near_uniform(theta, alphabet),
        SourceFamily::InvertedNearUniform { psi } => Distribution::inverted_near_uniform(psi, alphabet),
        SourceFamily::Bms { p } => {
            let probs = (0..alphabet as u32)
                .map(|b| {
                    let ones = b.count_ones() as i32;
                    p.powi(ones) * (1.0 - p).powi(l as i32 - ones)
                })
                .collect::<Vec<_>>();
            Distribution::from_weights(&probs)
        }
        SourceFamily::Markov { p } => {
            let probs = (0..alphabet as u32).map(|b| markov_path_probability(b, l, p)).collect::<Vec<_>>();
            Distribution::from_weights(&probs)
        }
        SourceFamily::DiscretizedNormal { sigma } => {
            let mean = (alphabet as f64 - 1.0) / 2.0;
            let edges: Vec<f64> = (0..=alphabet)
                .map(|j| match j {
                    0 => 0.0,
                    j if j == alphabet => 1.0,
                    j => normal_cdf((j as f64 - 0.5 - mean) / sigma),
                })
                .collect();
            let probs: Vec<f64> = edges.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
            Distribution::from_weights(&probs)
        }
    }
}

/// Probability of seeing the `L`-bit pattern `block` (MSB first) at a block
/// boundary of the stationary chain.
fn markov_path_probability(block: u32, bits_per_block: u32, p: f64) -> f64 {
    let mut prob = 0.5;
    for j in 1..bits_per_block {
        let prev = (block >> (bits_per_block - j)) & 1;
        let cur = (block >> (bits_per_block - j - 1)) & 1;
        prob *= if prev == cur { 1.0 - p } else { p };
    }
    prob
}

/// Exact per-bit min-entropy of a source.
pub fn true_min_entropy(spec: &SourceSpec) -> Result<GroundTruth> {
    spec.family.validate(spec.bits_per_block)?;
    let l = spec.bits_per_block as f64;
    let (h, derivation) = match spec.family {
        SourceFamily::Bms { p } => (-(p.max(1.0 - p)).log2(), Derivation::ClosedForm),
        SourceFamily::NearUniform { theta } => (-theta.log2() / l, Derivation::ClosedForm),
        SourceFamily::InvertedNearUniform { psi } => (-psi.log2() / l, Derivation::ClosedForm),
        SourceFamily::DiscretizedNormal { .. } | SourceFamily::Markov { .. } => {
            (min_entropy(&block_distribution(spec)?) / l, Derivation::BruteForce)
        }
    };
    Ok(GroundTruth { per_bit_min_entropy: h.clamp(0.0, 1.0), derivation })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: SourceFamily, n: usize) -> SourceSpec {
        SourceSpec::new(family, 7, n, 6)
    }

    #[test]
    fn rejects_degenerate_parameters() {
        assert!(sample(&spec(SourceFamily::Bms { p: 1.0 }, 10)).is_err());
        assert!(sample(&spec(SourceFamily::Markov { p: 0.0 }, 10)).is_err());
        assert!(sample(&spec(SourceFamily::NearUniform { theta: 0.001 }, 10)).is_err());
        assert!(sample(&spec(SourceFamily::DiscretizedNormal { sigma: -1.0 }, 10)).is_err());
        assert!(sample(&spec(SourceFamily::Bms { p: 0.5 }, 0)).is_err());
    }

    #[test]
    fn seeded_determinism() {
        let s = spec(SourceFamily::Markov { p: 0.3 }, 5000);
        assert_eq!(sample(&s).unwrap(), sample(&s).unwrap());
        let other = SourceSpec { seed: 8, ..s };
        assert_ne!(sample(&s).unwrap(), sample(&other).unwrap());
    }

    #[test]
    fn ground_truth_examples() {
        let h = true_min_entropy(&spec(SourceFamily::Bms { p: 0.3 }, 1)).unwrap();
        assert!((h.per_bit_min_entropy - 0.514_573).abs() < 1e-6);
        let h = true_min_entropy(&spec(SourceFamily::NearUniform { theta: 0.5 }, 1)).unwrap();
        assert!((h.per_bit_min_entropy - 1.0 / 6.0).abs() < 1e-15);
        // BMS closed form agrees with the block law.
        let s = spec(SourceFamily::Bms { p: 0.3 }, 1);
        let brute = min_entropy(&block_distribution(&s).unwrap()) / 6.0;
        assert!((brute - 0.514_573).abs() < 1e-6);
    }

    #[test]
    fn markov_ground_truth_by_enumeration() {
        let p: f64 = 0.2;
        let mut best: f64 = 0.0;
        for b in 0..64u32 {
            let bits: Vec<u32> = (0..6).rev().map(|s| (b >> s) & 1).collect();
            let mut prob = 0.5;
            for w in bits.windows(2) {
                prob *= if w[0] == w[1] { 1.0 - p } else { p };
            }
            best = best.max(prob);
        }
        let h = true_min_entropy(&spec(SourceFamily::Markov { p }, 1)).unwrap();
        assert!((h.per_bit_min_entropy - (-best.log2() / 6.0)).abs() < 1e-12);
        assert_eq!(h.derivation, Derivation::BruteForce);
    }

    #[test]
    fn markov_most_likely_block() {
        let argmax = |p: f64| {
            let law = block_distribution(&spec(SourceFamily::Markov { p }, 1)).unwrap();
            let probs = law.probs().to_vec();
            let top = law.theta();
            (0..64u32).filter(|&b| probs[b as usize] == top).collect::<Vec<_>>()
        };
        assert_eq!(argmax(0.2), vec![0, 63]);
        assert_eq!(argmax(0.8), vec![0b010101, 0b101010]);
    }

    #[test]
    fn parses_family_strings() {
        assert_eq!("bms:p=0.3".parse::<SourceFamily>().unwrap(), SourceFamily::Bms { p: 0.3 });
        assert_eq!(
            "near_uniform:0.5".parse::<SourceFamily>().unwrap(),
            SourceFamily::NearUniform { theta: 0.5 }
        );
        assert!("bogus:1".parse::<SourceFamily>().is_err());
        assert!("bms".parse::<SourceFamily>().is_err());
        let f = SourceFamily::InvertedNearUniform { psi: 0.25 };
        assert_eq!(f.to_string().parse::<SourceFamily>().unwrap(), f);
    }

    #[test]
    fn normal_law_is_symmetric() {
        let law = block_distribution(&spec(SourceFamily::DiscretizedNormal { sigma: 4.0 }, 1)).unwrap();
        let p = law.probs();
        for b in 0..32 {
            assert!((p[b] - p[63 - b]).abs() < 1e-12);
        }
    }
}
