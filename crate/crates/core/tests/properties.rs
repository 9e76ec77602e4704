use minent::analysis::{
    distance_law, kim_expectation, maurer_expectation_finite, min_entropy, renyi_entropy, shannon_entropy,
    slope_by_finite_difference, z_slope, Distribution,
};
use minent::estimators::{
    binary_entropy, collision_theta, compression_estimate, compression_g, coron_estimate, kim_estimate,
    kim_zeta, EstimateOptions,
};
use minent::ingest::{distance_stream, pack_blocks, BitSequence, BlockSequence};
use minent::online;
use minent::stats::{kim_g, TestKind, TestStatistic};
use proptest::prelude::*;

fn naive_distances(blocks: &[u32], q: usize, k: usize) -> Vec<usize> {
    (q + 1..=q + k)
        .map(|n| {
            let current = blocks[n - 1];
            (1..n).rev().find(|&j| blocks[j - 1] == current).map_or(n, |j| n - j)
        })
        .collect()
}

fn g_direct(z: f64, q: usize, k: usize) -> f64 {
    let mut total = 0.0;
    for n in q + 1..=q + k {
        for i in 1..=n {
            let w =
                if i < n { z * z * (1.0 - z).powi(i as i32 - 1) } else { z * (1.0 - z).powi(n as i32 - 1) };
            total += w * (i as f64).log2();
        }
    }
    total / k as f64
}

/// Random block law over `B = 2^bits` symbols with a skew exponent.
fn arb_distribution(bits: std::ops::RangeInclusive<u32>) -> impl Strategy<Value = Distribution> {
    bits.prop_flat_map(|l| {
        let b = 1usize << l;
        (prop::collection::vec(0.0f64..1.0, b), 0.5f64..6.0)
    })
    .prop_filter_map("degenerate weights", |(w, skew)| {
        let w: Vec<f64> = w.iter().map(|x| x.powf(skew)).collect();
        Distribution::from_weights(&w).ok()
    })
}

fn stat(kind: TestKind, mean: f64, q: usize, k: usize) -> TestStatistic {
    TestStatistic { kind, mean, per_term_variance: 0.0, test_blocks: k, init_blocks: q }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn distance_stream_matches_naive_scan(
        l in 1u32..=4,
        raw in prop::collection::vec(any::<u32>(), 2..200),
        q_frac in 0.0f64..1.0,
    ) {
        let blocks: Vec<u32> = raw.iter().map(|x| x % (1 << l)).collect();
        let q = 1 + ((blocks.len() - 2) as f64 * q_frac) as usize;
        let k = blocks.len() - q;
        let seq = BlockSequence::new(blocks.clone(), l).unwrap();
        let d = distance_stream(&seq, q, k).unwrap();
        let naive = naive_distances(&blocks, q, k);
        prop_assert_eq!(d.distances(), &naive[..]);
    }

    #[test]
    fn pack_unpack_identity(bytes in prop::collection::vec(any::<u8>(), 1..64), l in 1u32..=24) {
        let bits = BitSequence::from_bytes(&bytes);
        prop_assume!(bits.len() >= l as usize);
        let blocks = pack_blocks(&bits, l).unwrap();
        let kept = blocks.len() * l as usize;
        let unpacked = blocks.unpack();
        prop_assert_eq!(unpacked.bits(), &bits.bits()[..kept]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn compression_g_matches_double_sum(z in 0.0001f64..=1.0, q in 1usize..300, k in 1usize..300) {
        let fast = compression_g(z, q, k).unwrap();
        let slow = g_direct(z, q, k);
        prop_assert!((fast - slow).abs() <= 1e-9 * slow.abs().max(1e-300), "{} vs {}", fast, slow);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn kim_expectation_is_power_sum(p in arb_distribution(2..=6), alpha in 2usize..=5) {
        // Only distances below alpha carry weight for integer alpha.
        let law = distance_law(&p, alpha - 1);
        let series: f64 = (1..alpha).map(|i| kim_g(i, alpha as f64).unwrap() * law[i - 1]).sum();
        let target = p.power_sum(alpha as f64);
        prop_assert!((series - target).abs() < 1e-9, "series {} power sum {}", series, target);
        prop_assert!((kim_expectation(&p, alpha as f64).unwrap() - target).abs() < 1e-9);
    }

    #[test]
    fn renyi_is_nonincreasing_in_order(p in arb_distribution(1..=6)) {
        let orders = [1.5, 2.0, 3.0, 5.0, 10.0, 50.0];
        let h: Vec<f64> = orders.iter().map(|&a| renyi_entropy(&p, a).unwrap()).collect();
        for w in h.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
        prop_assert!(shannon_entropy(&p) >= h[0] - 1e-9);
        prop_assert!(min_entropy(&p) <= h[h.len() - 1] + 1e-9);
    }

    #[test]
    fn renyi_order_inequality(p in arb_distribution(1..=6), alpha in 2usize..=4) {
        let a = alpha as f64;
        let lhs = renyi_entropy(&p, a).unwrap();
        let rhs = a * a / (a * a - 1.0) * renyi_entropy(&p, a + 1.0).unwrap();
        prop_assert!(lhs <= rhs + 1e-9);
    }

    #[test]
    fn online_final_equals_batch(raw in prop::collection::vec(0u32..8, 2..3000)) {
        let e = online::run(&raw, 3).unwrap().unwrap();
        let c = raw.windows(2).filter(|w| w[0] == w[1]).count();
        let theta = collision_theta(c as f64 / raw.len() as f64, 8).unwrap();
        prop_assert_eq!(e.theta.to_bits(), theta.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Solving any key equation at the exact population statistic never
    /// overestimates the min-entropy.
    #[test]
    fn estimates_are_lower_bounds(p in arb_distribution(2..=6)) {
        let l = p.alphabet_size().trailing_zeros();
        let truth = min_entropy(&p) / l as f64;
        let opts = EstimateOptions::without_ci();
        let tol = 1e-7;

        let coron = coron_estimate(&stat(TestKind::Coron, shannon_entropy(&p), 1000, 10_000), l, &opts).unwrap();
        prop_assert!(coron.per_bit <= truth + tol, "coron {} > {}", coron.per_bit, truth);

        for alpha in [2.0, 3.0, 4.0, 5.0] {
            let s = stat(TestKind::Kim { alpha }, p.power_sum(alpha), 1000, 10_000);
            let kim = kim_estimate(&s, l, &opts).unwrap();
            prop_assert!(kim.per_bit <= truth + tol, "kim{} {} > {}", alpha, kim.per_bit, truth);
        }

        let (q, k) = (1000, 4000);
        let x = maurer_expectation_finite(&p, q, k);
        let comp = compression_estimate(&stat(TestKind::Maurer, x, q, k), l, &opts).unwrap();
        prop_assert!(comp.per_bit <= truth + tol, "compression {} > {}", comp.per_bit, truth);
    }
}

#[test]
fn near_uniform_bounds_are_tight() {
    let opts = EstimateOptions::without_ci();
    for j in 1..=20 {
        let theta = 1.0 / 64.0 + (1.0 - 1.0 / 64.0) * j as f64 / 21.0;
        let p = Distribution::near_uniform(theta, 64).unwrap();
        let coron =
            coron_estimate(&stat(TestKind::Coron, shannon_entropy(&p), 1000, 10_000), 6, &opts).unwrap();
        assert!((coron.theta - theta).abs() < 1e-8);
        for alpha in [2.0, 3.0, 5.0] {
            let s = stat(TestKind::Kim { alpha }, p.power_sum(alpha), 1000, 10_000);
            assert!((kim_estimate(&s, 6, &opts).unwrap().theta - theta).abs() < 1e-8);
        }
        let x = maurer_expectation_finite(&p, 1000, 4000);
        let comp = compression_estimate(&stat(TestKind::Maurer, x, 1000, 4000), 6, &opts).unwrap();
        assert!((comp.theta - theta).abs() < 1e-7, "{} vs {theta}", comp.theta);
    }
}

#[test]
fn fano_and_renyi_equalities_on_near_uniform() {
    for j in 0..=30 {
        let theta = 1.0 / 64.0 + (1.0 - 1.0 / 64.0) * j as f64 / 30.0;
        let p = Distribution::near_uniform(theta, 64).unwrap();
        let fano = binary_entropy(theta) + (1.0 - theta) * 63f64.log2();
        assert!((shannon_entropy(&p) - fano).abs() < 1e-9);
        for alpha in [2.0, 3.0, 10.0] {
            let key = kim_zeta(theta, alpha, 64).unwrap();
            let h = renyi_entropy(&p, alpha).unwrap();
            assert!((h - key.log2() / (1.0 - alpha)).abs() < 1e-9);
        }
    }
}

#[test]
fn slope_matches_finite_difference() {
    for alpha in [2.0, 3.0] {
        for j in 0..25 {
            let theta = 0.05 + 0.9 * j as f64 / 24.0;
            let exact = z_slope(theta, alpha, 64).unwrap();
            let numeric = slope_by_finite_difference(theta, alpha, 64, 1e-6).unwrap();
            assert!(((exact - numeric) / exact).abs() < 1e-4, "alpha {alpha} theta {theta}");
        }
    }
}
