//! Maurer, Coron and Kim test statistics over a distance stream.
//!
//! All three tests average a per-term weight `g(D_n)` over the `K` test
//! positions. They differ only in the weight:
//!
//! * Maurer: `log2 D`, whose expectation tracks Shannon entropy up to a gap.
//! * Coron: scaled harmonic partial sums, whose expectation *is* the Shannon
//!   entropy of an IID source.
//! * Kim: signed generalized binomial weights, whose expectation is the power
//!   sum `sum_b p_b^alpha`.

use crate::error::{invalid, Error, Result};
use crate::ingest::DistanceStream;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Smallest distance at which [`coron_g`] switches to the asymptotic series.
pub const CORON_ASYMPTOTIC_FROM: usize = 23;

/// Two-sided 99% normal quantile used by every confidence step.
pub const Z_99: f64 = 2.576;

/// Which per-term weight a statistic was computed with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestKind {
    Maurer,
    Coron,
    Kim { alpha: f64 },
}

impl TestKind {
    pub fn name(&self) -> &'static str {
        match self {
            TestKind::Maurer => "maurer",
            TestKind::Coron => "coron",
            TestKind::Kim { .. } => "kim",
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            TestKind::Kim { alpha } => Some(alpha),
            _ => None,
        }
    }
}

/// The test value `X` together with the sample variance of its terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestStatistic {
    pub kind: TestKind,
    /// Mean of the per-term weights.
    pub mean: f64,
    /// Unbiased sample variance of the per-term weights (0 when `K = 1`).
    pub per_term_variance: f64,
    /// Number of test blocks `K`.
    pub test_blocks: usize,
    /// Number of initialization blocks `Q`.
    pub init_blocks: usize,
}

/// Welford accumulator for mean and sum of squared deviations.
///
/// Independent accumulators can be combined with [`RunningMoments::merge`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    count: usize,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &RunningMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased variance; 0 for fewer than two samples.
    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }
}

fn summarize(
    kind: TestKind,
    stream: &DistanceStream,
    weight: impl Fn(usize) -> f64,
) -> Result<TestStatistic> {
    if stream.test_blocks() == 0 {
        return invalid("distance stream is empty");
    }
    let mut moments = RunningMoments::new();
    for &d in stream.distances() {
        moments.push(weight(d));
    }
    Ok(TestStatistic {
        kind,
        mean: moments.mean(),
        per_term_variance: moments.sample_variance(),
        test_blocks: stream.test_blocks(),
        init_blocks: stream.init_blocks(),
    })
}

/// Maurer's universal test: mean of `log2 D_n`.
pub fn maurer_test(stream: &DistanceStream) -> Result<TestStatistic> {
    summarize(TestKind::Maurer, stream, |d| (d as f64).log2())
}

/// Coron's weight `g_C(i)`: zero at `i = 1`, otherwise `H_{i-1} / ln 2` where
/// `H_m` is the `m`-th harmonic number. From `i = 23` on, the harmonic number
/// is replaced by its four-term asymptotic expansion.
pub fn coron_g(i: usize) -> Result<f64> {
    if i == 0 {
        return invalid("coron_g is defined for i >= 1");
    }
    Ok(coron_weight(i))
}

const CORON_TABLE: [f64; CORON_ASYMPTOTIC_FROM] = {
    let mut table = [0.0; CORON_ASYMPTOTIC_FROM];
    let mut harmonic = 0.0;
    let mut i = 2;
    while i < CORON_ASYMPTOTIC_FROM {
        harmonic += 1.0 / (i - 1) as f64;
        table[i] = harmonic / std::f64::consts::LN_2;
        i += 1;
    }
    table
};

#[inline]
fn coron_weight(i: usize) -> f64 {
    if i < CORON_ASYMPTOTIC_FROM {
        CORON_TABLE[i]
    } else {
        coron_asymptotic(i)
    }
}

#[inline]
fn coron_asymptotic(i: usize) -> f64 {
    let m = (i - 1) as f64;
    (m.ln() + EULER_GAMMA + 0.5 / m - 1.0 / (12.0 * m * m)) / std::f64::consts::LN_2
}

/// Coron's test: mean of `g_C(D_n)`.
pub fn coron_test(stream: &DistanceStream) -> Result<TestStatistic> {
    summarize(TestKind::Coron, stream, coron_weight)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return invalid(format!("alpha must be a finite value > 1, got {alpha}"));
    }
    Ok(())
}

/// Kim's weight `g_K(i, alpha) = (-1)^(i-1) * binom(alpha - 2, i - 1)`.
///
/// With this weight `sum_i g_K(i) (1-p)^(i-1) = p^(alpha-2)`, so the expected
/// weight under the IID distance law is the power sum of order `alpha`. For
/// integer `alpha` the weights vanish from `i = alpha` on.
pub fn kim_g(i: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if i == 0 {
        return invalid("kim_g is defined for i >= 1");
    }
    Ok(KimWeights::new(alpha, i).weight(i))
}

/// Precomputed Kim weights `g_K(1..=len, alpha)`.
#[derive(Debug, Clone)]
pub struct KimWeights {
    alpha: f64,
    // table[j] = g_K(j + 1)
    table: Vec<f64>,
    // All weights past the table are zero.
    exhausted: bool,
}

impl KimWeights {
    /// Builds weights for distances up to `max_distance`.
    ///
    /// `alpha` must already be validated.
    pub fn new(alpha: f64, max_distance: usize) -> Self {
        let mut table = Vec::with_capacity(max_distance.min(1 << 20));
        let mut coeff = 1.0;
        let mut exhausted = false;
        table.push(coeff);
        for j in 1..max_distance {
            // c_j = c_{j-1} * (j + 1 - alpha) / j
            coeff *= (j as f64 + 1.0 - alpha) / j as f64;
            if coeff == 0.0 {
                exhausted = true;
                break;
            }
            table.push(coeff);
        }
        Self { alpha, table, exhausted }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `g_K(i)` for `1 <= i`. Distances past the built range are only valid when
    /// the sequence has terminated.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        match self.table.get(i - 1) {
            Some(&w) => w,
            None => {
                debug_assert!(self.exhausted, "distance {i} beyond the weight table");
                0.0
            }
        }
    }
}

/// Kim's test of order `alpha`: mean of `g_K(D_n, alpha)`.
///
/// For `alpha = 2` this is the fraction of test positions with `D_n = 1`.
pub fn kim_test(stream: &DistanceStream, alpha: f64) -> Result<TestStatistic> {
    check_alpha(alpha)?;
    let max = stream.distances().iter().copied().max().unwrap_or(1);
    let weights = KimWeights::new(alpha, max);
    summarize(TestKind::Kim { alpha }, stream, |d| weights.weight(d))
}

/// Number of positions with `D_n = 1`.
pub fn collision_count(stream: &DistanceStream) -> usize {
    stream.distances().iter().filter(|&&d| d == 1).count()
}

/// Builds the order-2 Kim statistic from an adjacent-collision count.
///
/// Gives the same statistic as [`kim_test`] with `alpha = 2`, from the count
/// of `D_n = 1` alone.
pub fn collision_statistic(
    collisions: usize,
    test_blocks: usize,
    init_blocks: usize,
) -> Result<TestStatistic> {
    if test_blocks == 0 {
        return invalid("at least one test block is required");
    }
    if collisions > test_blocks {
        return invalid("collision count exceeds the number of test blocks");
    }
    let k = test_blocks as f64;
    let c = collisions as f64;
    let mean = c / k;
    let per_term_variance = if test_blocks < 2 { 0.0 } else { (c * (1.0 - mean) / (k - 1.0)).max(0.0) };
    Ok(TestStatistic {
        kind: TestKind::Kim { alpha: 2.0 },
        mean,
        per_term_variance,
        test_blocks,
        init_blocks,
    })
}

/// Where a corrective factor came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorSource {
    Default,
    UserConfig,
}

/// Multiplier on the per-term standard deviation that accounts for the
/// dependence between successive distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectiveFactor {
    value: f64,
    source: FactorSource,
}

impl CorrectiveFactor {
    /// A user-supplied factor in `(0, 1.5]`.
    pub fn custom(value: f64) -> Result<Self> {
        if !(value > 0.0 && value <= 1.5) {
            return invalid(format!("corrective factor must be in (0, 1.5], got {value}"));
        }
        Ok(Self { value, source: FactorSource::UserConfig })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn source(&self) -> FactorSource {
        self.source
    }
}

/// Default corrective factors (tabulated for `L = 6`, `K >> 2^L`).
///
/// Kim's test has tabulated values only for `alpha` in `{2, 3, 4, 5}`; other
/// orders need [`CorrectiveFactor::custom`].
pub fn corrective_factor(kind: TestKind) -> Result<CorrectiveFactor> {
    let value = match kind {
        TestKind::Maurer => 0.5907,
        TestKind::Coron => 0.6131,
        TestKind::Kim { alpha: 2.0 } => 1.0,
        TestKind::Kim { alpha } if alpha == 3.0 || alpha == 4.0 || alpha == 5.0 => 1.008,
        TestKind::Kim { alpha } => {
            return Err(Error::UnsupportedParameter(format!(
                "no tabulated corrective factor for alpha = {alpha}; supply one explicitly"
            )))
        }
    };
    Ok(CorrectiveFactor { value, source: FactorSource::Default })
}

/// Lower end of the 99% confidence interval: `X - 2.576 c sigma / sqrt(K)`.
pub fn confidence_lower_bound(stat: &TestStatistic, factor: CorrectiveFactor) -> Result<f64> {
    if stat.test_blocks < 2 {
        return invalid("the confidence bound needs at least two test blocks");
    }
    let sigma = factor.value * stat.per_term_variance.sqrt();
    Ok(stat.mean - Z_99 * sigma / (stat.test_blocks as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(d: &[usize], q: usize) -> DistanceStream {
        DistanceStream::from_distances(d.to_vec(), q).unwrap()
    }

    fn binom_real(x: f64, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, j| acc * (x - j as f64) / (j + 1) as f64)
    }

    #[test]
    fn maurer_examples() {
        let s = maurer_test(&stream(&[1, 1, 1, 1], 4)).unwrap();
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.per_term_variance, 0.0);
        let s = maurer_test(&stream(&[2, 2, 1], 1)).unwrap();
        assert!((s.mean - 2.0 / 3.0).abs() < 1e-15);
        // terms 1, 1, 0: variance 1/3
        assert!((s.per_term_variance - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn coron_g_values() {
        assert_eq!(coron_g(1).unwrap(), 0.0);
        assert!((coron_g(2).unwrap() - std::f64::consts::LOG2_E).abs() < 1e-12);
        assert!(coron_g(0).is_err());
        let exact: f64 = (1..=22).map(|k| 1.0 / k as f64).sum::<f64>() / std::f64::consts::LN_2;
        assert!((exact - coron_g(23).unwrap()).abs() < 1e-6);
        let mut prev = 0.0;
        for i in 1..5000 {
            let g = coron_g(i).unwrap();
            assert!(g >= prev, "coron_g decreases at {i}");
            prev = g;
        }
    }

    #[test]
    fn coron_examples() {
        assert_eq!(coron_test(&stream(&[1, 1, 1], 1)).unwrap().mean, 0.0);
        let s = coron_test(&stream(&[2, 2, 1], 1)).unwrap();
        assert!((s.mean - 0.961_796_693_925_975_4).abs() < 1e-12);
    }

    #[test]
    fn kim_g_closed_forms() {
        assert_eq!(kim_g(1, 2.0).unwrap(), 1.0);
        assert_eq!(kim_g(2, 2.0).unwrap(), 0.0);
        assert_eq!(kim_g(2, 3.0).unwrap(), -1.0);
        // (1-q)^2 = 1 - 2q + q^2
        assert_eq!(kim_g(2, 4.0).unwrap(), -2.0);
        assert_eq!(kim_g(3, 4.0).unwrap(), 1.0);
        assert_eq!(kim_g(4, 4.0).unwrap(), 0.0);
        for i in 2..=100 {
            assert_eq!(kim_g(i, 2.0).unwrap(), 0.0);
            let expect3 = if i == 2 { -1.0 } else { 0.0 };
            assert_eq!(kim_g(i, 3.0).unwrap(), expect3);
        }
        assert!(kim_g(1, 1.0).is_err());
        assert!(kim_g(0, 2.0).is_err());
    }

    #[test]
    fn kim_g_matches_signed_binomial() {
        for &alpha in &[1.5, 2.5, 3.7, 5.0, 6.25] {
            for i in 1..60 {
                let expect = if (i - 1) % 2 == 0 { 1.0 } else { -1.0 } * binom_real(alpha - 2.0, i - 1);
                let got = kim_g(i, alpha).unwrap();
                assert!((got - expect).abs() <= 1e-12 * expect.abs().max(1.0), "alpha {alpha} i {i}");
            }
        }
    }

    #[test]
    fn kim_test_collision_fraction() {
        let s = kim_test(&stream(&[1, 1, 1], 1), 2.0).unwrap();
        assert_eq!(s.mean, 1.0);
        let s = kim_test(&stream(&[1, 3, 1, 2], 2), 2.0).unwrap();
        assert_eq!(s.mean, 0.5);
        let via_count = collision_statistic(collision_count(&stream(&[1, 3, 1, 2], 2)), 4, 2).unwrap();
        assert_eq!(via_count.mean, s.mean);
        assert!((via_count.per_term_variance - s.per_term_variance).abs() < 1e-15);
        assert!(kim_test(&stream(&[1], 1), 0.5).is_err());
    }

    #[test]
    fn running_moments_merge() {
        let xs: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut all = RunningMoments::new();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = RunningMoments::new();
        let mut b = RunningMoments::new();
        xs[..73].iter().for_each(|&x| a.push(x));
        xs[73..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert_eq!(a.count(), all.count());
        assert!((a.mean() - all.mean()).abs() < 1e-12);
        assert!((a.sample_variance() - all.sample_variance()).abs() < 1e-10);
    }

    #[test]
    fn corrective_factor_defaults() {
        assert_eq!(corrective_factor(TestKind::Maurer).unwrap().value(), 0.5907);
        assert_eq!(corrective_factor(TestKind::Coron).unwrap().value(), 0.6131);
        assert_eq!(corrective_factor(TestKind::Kim { alpha: 2.0 }).unwrap().value(), 1.0);
        assert_eq!(corrective_factor(TestKind::Kim { alpha: 4.0 }).unwrap().value(), 1.008);
        assert!(matches!(
            corrective_factor(TestKind::Kim { alpha: 2.5 }),
            Err(Error::UnsupportedParameter(_))
        ));
        assert!(CorrectiveFactor::custom(0.0).is_err());
        assert!(CorrectiveFactor::custom(1.6).is_err());
        assert_eq!(CorrectiveFactor::custom(0.7).unwrap().source(), FactorSource::UserConfig);
    }

    #[test]
    fn confidence_bound() {
        let one = CorrectiveFactor::custom(1.0).unwrap();
        let mut stat = TestStatistic {
            kind: TestKind::Kim { alpha: 2.0 },
            mean: 1.0,
            per_term_variance: 0.0,
            test_blocks: 10,
            init_blocks: 1,
        };
        assert_eq!(confidence_lower_bound(&stat, one).unwrap(), 1.0);
        stat.per_term_variance = 0.0154;
        stat.test_blocks = 1_000_000;
        let x = confidence_lower_bound(&stat, one).unwrap();
        assert!((x - (1.0 - 2.576 * 0.0154f64.sqrt() / 1000.0)).abs() < 1e-15);
        assert!((x - 0.99968).abs() < 1e-5);
        stat.test_blocks = 4_000_000;
        let closer = confidence_lower_bound(&stat, one).unwrap();
        assert!(closer > x && closer < 1.0);
        stat.test_blocks = 1;
        assert!(confidence_lower_bound(&stat, one).is_err());
    }
}
