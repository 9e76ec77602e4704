//! From a test statistic to a min-entropy estimate.
//!
//! Every estimator assumes the near-uniform distribution (one atom of mass
//! `theta`, the rest spread evenly) and solves for the `theta` that reproduces
//! the observed test value. Because the near-uniform law has the largest
//! `theta` among all laws with that test value, `-log2 theta` is a lower bound
//! on the min-entropy.
//!
//! | estimator   | statistic   | key equation                         | solver      |
//! |-------------|-------------|--------------------------------------|-------------|
//! | compression | Maurer      | `X' = G(theta) + (B-1) G(phi)`        | bisection   |
//! | coron       | Coron       | `X' = h(theta) + (1-theta) log2(B-1)` | bisection   |
//! | kim         | Kim(alpha)  | `X' = theta^a + (1-theta)^a/(B-1)^(a-1)` | bisection |
//! | collision   | Kim(2)      | same, order 2                        | closed form |

use std::fmt;

use crate::error::{invalid, Result};
use crate::ingest::{adjacent_collisions, distance_stream, BlockSequence};
use crate::stats::{
    collision_statistic, confidence_lower_bound, coron_test, corrective_factor, kim_test, maurer_test,
    CorrectiveFactor, TestKind, TestStatistic,
};

/// Which estimator produced a result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    Compression,
    Coron,
    Kim { alpha: f64 },
    Collision,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Compression => "compression",
            EstimatorKind::Coron => "coron",
            EstimatorKind::Kim { .. } => "kim",
            EstimatorKind::Collision => "collision",
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            EstimatorKind::Kim { alpha } => Some(alpha),
            EstimatorKind::Collision => Some(2.0),
            _ => None,
        }
    }

    /// The statistic the estimator consumes.
    pub fn test_kind(&self) -> TestKind {
        match *self {
            EstimatorKind::Compression => TestKind::Maurer,
            EstimatorKind::Coron => TestKind::Coron,
            EstimatorKind::Kim { alpha } => TestKind::Kim { alpha },
            EstimatorKind::Collision => TestKind::Kim { alpha: 2.0 },
        }
    }

    /// Default number of initialization blocks for `L`-bit blocks.
    ///
    /// The collision estimator only looks at adjacent blocks and needs a single
    /// initialization block; the others use `max(1000, 10 * 2^L)`.
    pub fn default_init_blocks(&self, bits_per_block: u32) -> usize {
        match self {
            EstimatorKind::Collision => 1,
            EstimatorKind::Kim { alpha } if *alpha == 2.0 => 1,
            _ => 1000usize.max(10usize << bits_per_block),
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorKind::Kim { alpha } => write!(f, "kim(alpha={alpha})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Result of an estimator run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinEntropyEstimate {
    /// Estimated largest block probability, in `[1/B, 1]`.
    pub theta: f64,
    /// Min-entropy per block, `-log2 theta`.
    pub per_block: f64,
    /// Min-entropy per bit, in `[0, 1]`.
    pub per_bit: f64,
    pub estimator: EstimatorKind,
    /// Whether the key equation had a root in `[1/B, 1]`.
    pub solved: bool,
    pub ci_applied: bool,
    /// The value the key equation was solved against.
    pub target: f64,
}

impl MinEntropyEstimate {
    fn from_theta(
        theta: f64,
        bits_per_block: u32,
        estimator: EstimatorKind,
        solved: bool,
        ci_applied: bool,
        target: f64,
    ) -> Self {
        let per_block = -theta.log2();
        let per_block = if per_block == 0.0 { 0.0 } else { per_block };
        Self {
            theta,
            per_block,
            per_bit: (per_block / bits_per_block as f64).clamp(0.0, 1.0),
            estimator,
            solved,
            ci_applied,
            target,
        }
    }

    /// The fallback when the target exceeds the key equation's range: full entropy.
    fn unsolved_full(bits_per_block: u32, estimator: EstimatorKind, ci_applied: bool, target: f64) -> Self {
        let alphabet = (1u64 << bits_per_block) as f64;
        Self {
            theta: 1.0 / alphabet,
            per_block: bits_per_block as f64,
            per_bit: 1.0,
            estimator,
            solved: false,
            ci_applied,
            target,
        }
    }
}

/// Bisection budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionConfig {
    pub max_iterations: u32,
    /// Stop once the bracket on `theta` is narrower than this.
    pub tolerance: f64,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        Self { max_iterations: 60, tolerance: 1e-10 }
    }
}

impl BisectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return invalid("bisection needs at least one iteration");
        }
        if !(self.tolerance > 0.0) {
            return invalid("bisection tolerance must be positive");
        }
        Ok(())
    }
}

/// Outcome of [`bisect`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bisection {
    Root(f64),
    /// Target is below both endpoint values.
    TargetBelow,
    /// Target is above both endpoint values.
    TargetAbove,
}

/// Solves `f(x) = target` on `[lo, hi]` for a monotone `f` (either direction).
pub fn bisect(f: impl Fn(f64) -> f64, target: f64, lo: f64, hi: f64, cfg: &BisectionConfig) -> Bisection {
    let f_lo = f(lo);
    let f_hi = f(hi);
    let (min, max) = if f_lo <= f_hi { (f_lo, f_hi) } else { (f_hi, f_lo) };
    if target < min {
        return Bisection::TargetBelow;
    }
    if target > max {
        return Bisection::TargetAbove;
    }
    if target == f_lo {
        return Bisection::Root(lo);
    }
    if target == f_hi {
        return Bisection::Root(hi);
    }
    let increasing = f_lo < f_hi;
    let (mut a, mut b) = (lo, hi);
    for _ in 0..cfg.max_iterations {
        if b - a < cfg.tolerance {
            break;
        }
        let mid = 0.5 * (a + b);
        let v = f(mid);
        if v == target {
            return Bisection::Root(mid);
        }
        if (v < target) == increasing {
            a = mid;
        } else {
            b = mid;
        }
    }
    Bisection::Root(0.5 * (a + b))
}

/// Options shared by all estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    /// Subtract the 99% confidence margin before solving.
    pub apply_ci: bool,
    /// Overrides the default corrective factor for the statistic.
    pub corrective: Option<CorrectiveFactor>,
    pub bisection: BisectionConfig,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { apply_ci: true, corrective: None, bisection: BisectionConfig::default() }
    }
}

impl EstimateOptions {
    pub fn without_ci() -> Self {
        Self { apply_ci: false, ..Self::default() }
    }

    fn target(&self, stat: &TestStatistic) -> Result<f64> {
        if !self.apply_ci {
            return Ok(stat.mean);
        }
        let factor = match self.corrective {
            Some(c) => c,
            None => corrective_factor(stat.kind)?,
        };
        confidence_lower_bound(stat, factor)
    }
}

fn check_kind(stat: &TestStatistic, expected: &str) -> Result<()> {
    if stat.kind.name() != expected {
        return invalid(format!("expected a {expected} statistic, got {}", stat.kind.name()));
    }
    Ok(())
}

/// Expected Maurer contribution `G(z)` of a symbol with probability `z`, for
/// `Q` initialization and `K` test blocks.
///
/// `G(z) = (1/K) sum_{n=Q+1}^{Q+K} sum_{i=1}^{n} F(z, n, i) log2 i` with
/// `F = z^2 (1-z)^(i-1)` for `i < n` and `z (1-z)^(n-1)` for `i = n`.
/// The inner sum is carried as a running prefix so the whole evaluation is
/// linear in `Q + K`.
pub fn compression_g(z: f64, init_blocks: usize, test_blocks: usize) -> Result<f64> {
    if !(z > 0.0 && z <= 1.0) {
        return invalid(format!("G(z) needs z in (0, 1], got {z}"));
    }
    if init_blocks == 0 || test_blocks == 0 {
        return invalid("Q and K must both be at least 1");
    }
    Ok(CompressionKey::new(init_blocks, test_blocks).g(z))
}

/// The compression estimator's key function `G(theta) + (B-1) G(phi)`, with a
/// cached `log2` table so repeated evaluations during bisection stay cheap.
#[derive(Debug, Clone)]
pub struct CompressionKey {
    init_blocks: usize,
    test_blocks: usize,
    log2: Vec<f64>,
}

impl CompressionKey {
    pub fn new(init_blocks: usize, test_blocks: usize) -> Self {
        let total = init_blocks + test_blocks;
        let log2 = (0..=total).map(|i| if i == 0 { 0.0 } else { (i as f64).log2() }).collect();
        Self { init_blocks, test_blocks, log2 }
    }

    /// Evaluates `G(z)`; `z` must be in `[0, 1]`.
    pub fn g(&self, z: f64) -> f64 {
        if z == 0.0 {
            return 0.0;
        }
        let q = 1.0 - z;
        let z2 = z * z;
        let total = self.init_blocks + self.test_blocks;
        // prefix = sum_{i=1}^{n-1} (1-z)^(i-1) log2 i, weight = (1-z)^(n-1)
        let mut prefix = 0.0;
        let mut weight = 1.0;
        let mut acc = 0.0;
        let mut n = 1;
        while n <= total {
            if n > self.init_blocks {
                acc += z2 * prefix + z * weight * self.log2[n];
            }
            prefix += weight * self.log2[n];
            weight *= q;
            n += 1;
            // Subnormal weights can get stuck at the smallest subnormal
            // instead of reaching zero, and their terms are negligible anyway.
            if weight < f64::MIN_POSITIVE {
                break;
            }
        }
        if n <= total {
            // (1-z)^(n-1) is below f64::MIN_POSITIVE: every remaining term is z^2 * prefix.
            let first = n.max(self.init_blocks + 1);
            if first <= total {
                acc += z2 * prefix * (total - first + 1) as f64;
            }
        }
        acc / self.test_blocks as f64
    }

    /// `G(theta) + (B-1) G((1-theta)/(B-1))`: the expected Maurer statistic of
    /// the near-uniform law.
    pub fn eval(&self, theta: f64, alphabet: usize) -> f64 {
        let others = (alphabet - 1) as f64;
        self.g(theta) + others * self.g((1.0 - theta) / others)
    }
}

fn check_theta(theta: f64, alphabet: usize) -> Result<()> {
    let lo = 1.0 / alphabet as f64;
    if alphabet < 2 || !(theta >= lo && theta <= 1.0) {
        return invalid(format!("theta must be in [1/B, 1] = [{lo}, 1], got {theta}"));
    }
    Ok(())
}

fn check_alphabet(alphabet: usize) -> Result<()> {
    if alphabet < 2 {
        return invalid("alphabet must have at least two symbols");
    }
    Ok(())
}

/// Binary entropy `h(x)` in bits, with `0 log 0 = 0`.
pub fn binary_entropy(x: f64) -> f64 {
    let term = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.log2() };
    term(x) + term(1.0 - x)
}

/// Fano bound `h(theta) + (1 - theta) log2(B - 1)`: the Shannon entropy of the
/// near-uniform law. Strictly decreasing from `log2 B` at `1/B` to 0 at 1.
pub fn coron_zeta(theta: f64, alphabet: usize) -> Result<f64> {
    check_theta(theta, alphabet)?;
    Ok(coron_zeta_unchecked(theta, alphabet))
}

fn coron_zeta_unchecked(theta: f64, alphabet: usize) -> f64 {
    binary_entropy(theta) + (1.0 - theta) * ((alphabet - 1) as f64).log2()
}

/// Power sum of order `alpha` of the near-uniform law,
/// `theta^alpha + (1-theta)^alpha / (B-1)^(alpha-1)`. Strictly increasing
/// from `B^(1-alpha)` at `1/B` to 1 at 1.
pub fn kim_zeta(theta: f64, alpha: f64, alphabet: usize) -> Result<f64> {
    check_theta(theta, alphabet)?;
    if !(alpha > 1.0) {
        return invalid(format!("alpha must be > 1, got {alpha}"));
    }
    Ok(kim_zeta_unchecked(theta, alpha, alphabet))
}

fn kim_zeta_unchecked(theta: f64, alpha: f64, alphabet: usize) -> f64 {
    let others = (alphabet - 1) as f64;
    theta.powf(alpha) + (1.0 - theta).powf(alpha) / others.powf(alpha - 1.0)
}

/// Closed-form inverse of [`kim_zeta`] at order 2.
///
/// Returns `1/B` for `f <= 1/B`, otherwise `(1 + sqrt((B-1)(B f - 1))) / B`.
pub fn collision_theta(f: f64, alphabet: usize) -> Result<f64> {
    check_alphabet(alphabet)?;
    if !(0.0..=1.0).contains(&f) {
        return invalid(format!("collision probability must be in [0, 1], got {f}"));
    }
    Ok(collision_theta_unchecked(f, alphabet))
}

pub(crate) fn collision_theta_unchecked(f: f64, alphabet: usize) -> f64 {
    let b = alphabet as f64;
    if f <= 1.0 / b {
        1.0 / b
    } else {
        ((1.0 + ((b - 1.0) * (b * f - 1.0)).sqrt()) / b).min(1.0)
    }
}

/// Solves a near-uniform key equation and applies the fallback rules:
/// a target above the range of the key function (higher entropy than the
/// uniform law allows) gives full entropy, one below it gives `theta = 1`.
fn solve(
    key: impl Fn(f64) -> f64,
    target: f64,
    bits_per_block: u32,
    estimator: EstimatorKind,
    opts: &EstimateOptions,
    high_entropy_is_large_target: bool,
) -> Result<MinEntropyEstimate> {
    opts.bisection.validate()?;
    let alphabet = 1usize << bits_per_block;
    let lo = 1.0 / alphabet as f64;
    let full = MinEntropyEstimate::unsolved_full(bits_per_block, estimator, opts.apply_ci, target);
    let none = MinEntropyEstimate::from_theta(1.0, bits_per_block, estimator, false, opts.apply_ci, target);
    Ok(match bisect(key, target, lo, 1.0, &opts.bisection) {
        Bisection::Root(theta) => {
            MinEntropyEstimate::from_theta(theta, bits_per_block, estimator, true, opts.apply_ci, target)
        }
        Bisection::TargetAbove if high_entropy_is_large_target => full,
        Bisection::TargetBelow if !high_entropy_is_large_target => full,
        _ => none,
    })
}

/// NIST SP 800-90B compression estimator on a Maurer statistic.
pub fn compression_estimate(
    stat: &TestStatistic,
    bits_per_block: u32,
    opts: &EstimateOptions,
) -> Result<MinEntropyEstimate> {
    check_kind(stat, "maurer")?;
    crate::ingest::check_block_width(bits_per_block)?;
    let target = opts.target(stat)?;
    let key = CompressionKey::new(stat.init_blocks, stat.test_blocks);
    let alphabet = 1usize << bits_per_block;
    solve(|t| key.eval(t, alphabet), target, bits_per_block, EstimatorKind::Compression, opts, true)
}

/// Estimator on Coron's statistic via the Fano bound.
pub fn coron_estimate(
    stat: &TestStatistic,
    bits_per_block: u32,
    opts: &EstimateOptions,
) -> Result<MinEntropyEstimate> {
    check_kind(stat, "coron")?;
    crate::ingest::check_block_width(bits_per_block)?;
    let target = opts.target(stat)?;
    let alphabet = 1usize << bits_per_block;
    solve(|t| coron_zeta_unchecked(t, alphabet), target, bits_per_block, EstimatorKind::Coron, opts, true)
}

/// Estimator on Kim's statistic of order `alpha` via the Renyi–Fano bound.
pub fn kim_estimate(
    stat: &TestStatistic,
    bits_per_block: u32,
    opts: &EstimateOptions,
) -> Result<MinEntropyEstimate> {
    let TestKind::Kim { alpha } = stat.kind else {
        return invalid(format!("expected a kim statistic, got {}", stat.kind.name()));
    };
    crate::ingest::check_block_width(bits_per_block)?;
    let target = opts.target(stat)?;
    let alphabet = 1usize << bits_per_block;
    solve(
        |t| kim_zeta_unchecked(t, alpha, alphabet),
        target,
        bits_per_block,
        EstimatorKind::Kim { alpha },
        opts,
        false,
    )
}

/// Closed-form estimator on the order-2 Kim statistic.
pub fn collision_estimate(
    stat: &TestStatistic,
    bits_per_block: u32,
    opts: &EstimateOptions,
) -> Result<MinEntropyEstimate> {
    if stat.kind != (TestKind::Kim { alpha: 2.0 }) {
        return invalid("the collision estimator needs a kim statistic of order 2");
    }
    crate::ingest::check_block_width(bits_per_block)?;
    let target = opts.target(stat)?;
    let alphabet = 1usize << bits_per_block;
    let theta = collision_theta_unchecked(target.clamp(0.0, 1.0), alphabet);
    let solved = target >= 1.0 / alphabet as f64;
    Ok(MinEntropyEstimate::from_theta(
        theta,
        bits_per_block,
        EstimatorKind::Collision,
        solved,
        opts.apply_ci,
        target,
    ))
}

/// An estimator with its block layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    /// Initialization blocks; `None` uses [`EstimatorKind::default_init_blocks`].
    pub init_blocks: Option<usize>,
    pub options: EstimateOptions,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind) -> Self {
        Self { kind, init_blocks: None, options: EstimateOptions::default() }
    }

    pub fn init_blocks_for(&self, bits_per_block: u32) -> usize {
        self.init_blocks.unwrap_or_else(|| self.kind.default_init_blocks(bits_per_block))
    }
}

/// Computes the statistic an estimator needs over every block after the
/// initialization segment.
pub fn statistic_for(spec: &EstimatorSpec, blocks: &BlockSequence) -> Result<TestStatistic> {
    let q = spec.init_blocks_for(blocks.bits_per_block());
    if blocks.len() <= q {
        return invalid(format!("{} needs more than {q} blocks, got {}", spec.kind, blocks.len()));
    }
    let k = blocks.len() - q;
    match spec.kind {
        EstimatorKind::Collision => {
            let c = adjacent_collisions(blocks, q, k)?;
            collision_statistic(c, k, q)
        }
        EstimatorKind::Compression => maurer_test(&distance_stream(blocks, q, k)?),
        EstimatorKind::Coron => coron_test(&distance_stream(blocks, q, k)?),
        EstimatorKind::Kim { alpha } => kim_test(&distance_stream(blocks, q, k)?, alpha),
    }
}

/// Runs a statistic through the matching estimator.
pub fn estimate_from_statistic(
    kind: EstimatorKind,
    stat: &TestStatistic,
    bits_per_block: u32,
    opts: &EstimateOptions,
) -> Result<MinEntropyEstimate> {
    match kind {
        EstimatorKind::Compression => compression_estimate(stat, bits_per_block, opts),
        EstimatorKind::Coron => coron_estimate(stat, bits_per_block, opts),
        EstimatorKind::Kim { .. } => kim_estimate(stat, bits_per_block, opts),
        EstimatorKind::Collision => collision_estimate(stat, bits_per_block, opts),
    }
}

/// End-to-end estimate from a block sequence.
pub fn estimate(spec: &EstimatorSpec, blocks: &BlockSequence) -> Result<MinEntropyEstimate> {
    let stat = statistic_for(spec, blocks)?;
    estimate_from_statistic(spec.kind, &stat, blocks.bits_per_block(), &spec.options)
}
