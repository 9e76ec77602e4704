//! Exact computations on explicit distributions.
//!
//! Entropies, the near-uniform and inverted near-uniform extremal laws, the
//! IID distance law `P(D = i) = sum_b p_b^2 (1 - p_b)^(i-1)` and quantities
//! derived from it, joint-range curves, and the bias-variance diagnostics of
//! Kim-based estimation.

use crate::error::{invalid, Result};
use crate::estimators::{kim_zeta, CompressionKey};
use crate::stats::{coron_g, KimWeights};

/// Default truncation for series over the distance law.
pub const TAIL_TOLERANCE: f64 = 1e-12;

/// A probability mass function over `{0, .., B-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates non-negativity and a total mass of 1 within `1e-12`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return invalid("a distribution needs at least one atom");
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return invalid(format!("probability {p} is not a finite non-negative value"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("probabilities sum to {total}, not 1"));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
            return invalid("weights must be non-negative with a positive sum");
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(alphabet: usize) -> Result<Self> {
        if alphabet == 0 {
            return invalid("alphabet must be non-empty");
        }
        Ok(Self { probs: vec![1.0 / alphabet as f64; alphabet] })
    }

    /// One atom of mass `theta`, the remaining mass spread evenly.
    pub fn near_uniform(theta: f64, alphabet: usize) -> Result<Self> {
        check_param("theta", theta, alphabet)?;
        let rest = (1.0 - theta) / (alphabet - 1) as f64;
        let mut probs = vec![rest; alphabet];
        probs[0] = theta;
        Ok(Self { probs })
    }

    /// `floor(1/psi)` atoms of mass `psi`, then one remainder atom.
    pub fn inverted_near_uniform(psi: f64, alphabet: usize) -> Result<Self> {
        check_param("psi", psi, alphabet)?;
        let full = ((1.0 / psi).floor() as usize).min(alphabet);
        let mut probs = vec![0.0; alphabet];
        for p in probs.iter_mut().take(full) {
            *p = psi;
        }
        let remainder = (1.0 - full as f64 * psi).max(0.0);
        if full < alphabet {
            probs[full] = remainder;
        } else if remainder > 0.0 {
            // psi slightly below 1/B after rounding: fold the dust into the last atom.
            probs[alphabet - 1] += remainder;
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn alphabet_size(&self) -> usize {
        self.probs.len()
    }

    /// Largest probability.
    pub fn theta(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// `sum_b p_b^alpha`.
    pub fn power_sum(&self, alpha: f64) -> f64 {
        self.probs.iter().filter(|&&p| p > 0.0).map(|p| p.powf(alpha)).sum()
    }

    /// Collision probability `sum_b p_b^2`.
    pub fn collision_probability(&self) -> f64 {
        self.probs.iter().map(|p| p * p).sum()
    }
}

fn check_param(name: &str, value: f64, alphabet: usize) -> Result<()> {
    if alphabet < 2 {
        return invalid("alphabet must have at least two symbols");
    }
    let lo = 1.0 / alphabet as f64;
    if !(value >= lo && value <= 1.0) {
        return invalid(format!("{name} must be in [1/B, 1] = [{lo}, 1], got {value}"));
    }
    Ok(())
}

/// Shannon entropy in bits per block.
pub fn shannon_entropy(p: &Distribution) -> f64 {
    -p.probs.iter().filter(|&&x| x > 0.0).map(|x| x * x.log2()).sum::<f64>()
}

/// Renyi entropy of order `alpha` (`alpha > 0`, `alpha != 1`) in bits per block.
pub fn renyi_entropy(p: &Distribution, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) || alpha == 1.0 || !alpha.is_finite() {
        return invalid(format!("Renyi order must be positive and not 1, got {alpha}"));
    }
    let h = p.power_sum(alpha).log2() / (1.0 - alpha);
    Ok(if h == 0.0 { 0.0 } else { h })
}

/// Collision entropy `-log2 sum p^2`.
pub fn collision_entropy(p: &Distribution) -> f64 {
    let h = -p.collision_probability().log2();
    if h == 0.0 {
        0.0
    } else {
        h
    }
}

/// Min-entropy `-log2 max_b p_b` in bits per block.
pub fn min_entropy(p: &Distribution) -> f64 {
    let h = -p.theta().log2();
    if h == 0.0 {
        0.0
    } else {
        h
    }
}

/// `E[f(D)]` under the IID distance law with an infinite past.
///
/// Each atom contributes `p^2 sum_i f(i) (1-p)^(i-1)`; its series is cut once
/// the remaining distance mass `p (1-p)^i` drops below `tail`.
pub fn distance_law_expectation(p: &Distribution, tail: f64, f: impl Fn(usize) -> f64) -> f64 {
    let mut total = 0.0;
    for &pb in p.probs.iter().filter(|&&x| x > 0.0) {
        let q = 1.0 - pb;
        let mut weight = pb * pb; // p^2 (1-p)^(i-1)
        let mut mass_left = pb; // p (1-p)^(i-1)
        let mut sum = 0.0;
        let mut i = 1;
        while mass_left >= tail && weight > 0.0 {
            sum += weight * f(i);
            weight *= q;
            mass_left *= q;
            i += 1;
        }
        total += sum;
    }
    total
}

/// `P(D = i)` for `i = 1..=max_distance` under the IID distance law.
pub fn distance_law(p: &Distribution, max_distance: usize) -> Vec<f64> {
    let mut law = vec![0.0; max_distance];
    for &pb in p.probs.iter().filter(|&&x| x > 0.0) {
        let mut weight = pb * pb;
        for slot in law.iter_mut() {
            *slot += weight;
            weight *= 1.0 - pb;
        }
    }
    law
}

/// Expected Maurer statistic `E[log2 D]` with an infinite past.
pub fn maurer_expectation(p: &Distribution) -> f64 {
    distance_law_expectation(p, TAIL_TOLERANCE, |i| (i as f64).log2())
}

/// Expected Maurer statistic for `Q` initialization and `K` test blocks,
/// `sum_b G(p_b)`.
pub fn maurer_expectation_finite(p: &Distribution, init_blocks: usize, test_blocks: usize) -> f64 {
    let key = CompressionKey::new(init_blocks, test_blocks);
    p.probs.iter().filter(|&&x| x > 0.0).map(|&x| key.g(x)).sum()
}

/// Expected Coron statistic with an infinite past (equals the Shannon entropy).
pub fn coron_expectation(p: &Distribution) -> f64 {
    distance_law_expectation(p, TAIL_TOLERANCE, |i| coron_g(i).unwrap_or(0.0))
}

/// Expected Kim statistic of order `alpha` as a series over the distance law.
pub fn kim_expectation(p: &Distribution, alpha: f64) -> Result<f64> {
    let (mean, _) = kim_moments(p, alpha)?;
    Ok(mean)
}

fn kim_moments(p: &Distribution, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 1.0) {
        return invalid(format!("alpha must be > 1, got {alpha}"));
    }
    let integer = alpha.fract() == 0.0;
    if integer {
        // Finite support 1..alpha-1: exact sums.
        let support = (alpha as usize).saturating_sub(1).max(1);
        let weights = KimWeights::new(alpha, support);
        let law = distance_law(p, support);
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (j, &pd) in law.iter().enumerate() {
            let g = weights.weight(j + 1);
            m1 += g * pd;
            m2 += g * g * pd;
        }
        return Ok((m1, m2));
    }
    let theta_min = p.probs.iter().copied().filter(|&x| x > 0.0).fold(1.0, f64::min);
    // Distances needed before the smallest atom's tail is negligible.
    let horizon = ((TAIL_TOLERANCE / theta_min).ln() / (1.0 - theta_min).ln()).ceil() as usize + 2;
    let weights = KimWeights::new(alpha, horizon.max(2));
    let m1 = distance_law_expectation(p, TAIL_TOLERANCE, |i| weights.weight(i));
    let m2 = distance_law_expectation(p, TAIL_TOLERANCE, |i| weights.weight(i).powi(2));
    Ok((m1, m2))
}

/// Population variance of `g_K(D, alpha)` under the IID distance law.
///
/// Orders 2 and 3 use the closed forms `P1 - P1^2` and
/// `P1 + P2 - (P1 - P2)^2` with `Pi = P(D = i)`; other orders sum over the law.
pub fn variance_of_g(p: &Distribution, alpha: f64) -> Result<f64> {
    if alpha == 2.0 {
        let p1 = p.collision_probability();
        return Ok(p1 - p1 * p1);
    }
    if alpha == 3.0 {
        let law = distance_law(p, 2);
        let (p1, p2) = (law[0], law[1]);
        return Ok(p1 + p2 - (p1 - p2).powi(2));
    }
    let (m1, m2) = kim_moments(p, alpha)?;
    Ok((m2 - m1 * m1).max(0.0))
}

/// Statistic on the x-axis of a joint-range curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangeStatistic {
    /// Expected Maurer statistic (infinite past).
    MaurerExpectation,
    /// Shannon entropy, the expectation of Coron's statistic.
    Shannon,
    /// Renyi entropy of the given order.
    Renyi(f64),
}

impl RangeStatistic {
    pub fn evaluate(&self, p: &Distribution) -> Result<f64> {
        match *self {
            RangeStatistic::MaurerExpectation => Ok(maurer_expectation(p)),
            RangeStatistic::Shannon => Ok(shannon_entropy(p)),
            RangeStatistic::Renyi(alpha) => renyi_entropy(p, alpha),
        }
    }
}

/// One point of a joint-range curve, in bits per block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointRangePoint {
    pub x: f64,
    /// Min-entropy of the near-uniform law with statistic `x`.
    pub h_min_lower: f64,
    /// Min-entropy of the inverted near-uniform law with statistic `x`.
    pub h_min_upper: f64,
    pub gap: f64,
}

/// `count` evenly spaced parameter values covering `[1/B, 1]`.
pub fn parameter_grid(alphabet: usize, count: usize) -> Vec<f64> {
    let lo = 1.0 / alphabet as f64;
    if count <= 1 {
        return vec![lo];
    }
    (0..count)
        .map(|j| if j + 1 == count { 1.0 } else { lo + (1.0 - lo) * j as f64 / (count - 1) as f64 })
        .collect()
}

/// Sweeps both extremal families over `grid` and pairs them at equal `x`.
///
/// The returned points sit at the near-uniform `x` values; the upper bound is
/// linearly interpolated along the inverted near-uniform curve sorted by `x`.
pub fn joint_range_curve(
    statistic: RangeStatistic,
    alphabet: usize,
    grid: &[f64],
) -> Result<Vec<JointRangePoint>> {
    if grid.is_empty() {
        return invalid("parameter grid is empty");
    }
    let mut upper: Vec<(f64, f64)> = Vec::with_capacity(grid.len());
    let mut lower: Vec<(f64, f64)> = Vec::with_capacity(grid.len());
    for &t in grid {
        let nu = Distribution::near_uniform(t, alphabet)?;
        lower.push((statistic.evaluate(&nu)?, min_entropy(&nu)));
        let inu = Distribution::inverted_near_uniform(t, alphabet)?;
        upper.push((statistic.evaluate(&inu)?, min_entropy(&inu)));
    }
    upper.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(lower
        .into_iter()
        .map(|(x, h_lo)| {
            let h_up = interpolate(&upper, x);
            JointRangePoint { x, h_min_lower: h_lo, h_min_upper: h_up, gap: h_up - h_lo }
        })
        .collect())
}

fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let idx = points.partition_point(|p| p.0 < x);
    if idx == 0 {
        return points[0].1;
    }
    if idx == points.len() {
        return points[points.len() - 1].1;
    }
    let (x0, y0) = points[idx - 1];
    let (x1, y1) = points[idx];
    if x1 == x0 {
        return y0.max(y1);
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Slope `d theta / d f` of the order-`alpha` key equation,
/// `1 / (alpha (theta^(alpha-1) - ((1-theta)/(B-1))^(alpha-1)))`.
///
/// Diverges at `theta = 1/B`, which is reported as an error.
pub fn z_slope(theta: f64, alpha: f64, alphabet: usize) -> Result<f64> {
    check_param("theta", theta, alphabet)?;
    if !(alpha > 1.0) {
        return invalid(format!("alpha must be > 1, got {alpha}"));
    }
    let rest = (1.0 - theta) / (alphabet - 1) as f64;
    let denom = alpha * (theta.powf(alpha - 1.0) - rest.powf(alpha - 1.0));
    if !(denom > 0.0) {
        return invalid(format!("slope diverges at theta = {theta} (theta must exceed 1/B)"));
    }
    Ok(1.0 / denom)
}

/// Small-`delta` approximations near the uniform point `theta = 1/B + delta`:
/// `z ~ B^(alpha-3) (B-1) / (alpha (alpha-1) delta)` and the ratio
/// `xi = z(alpha+1)/z(alpha) ~ B (alpha-1)/(alpha+1)`.
pub fn z_ratio_approx(delta: f64, alpha: f64, alphabet: usize) -> Result<(f64, f64)> {
    if alphabet < 2 {
        return invalid("alphabet must have at least two symbols");
    }
    let b = alphabet as f64;
    if !(delta > 0.0 && delta < 1.0 / b) {
        return invalid(format!("delta must be in (0, 1/B), got {delta}"));
    }
    if !(alpha > 1.0) {
        return invalid(format!("alpha must be > 1, got {alpha}"));
    }
    let z = b.powf(alpha - 3.0) / (alpha * (alpha - 1.0)) * (b - 1.0) / delta;
    let xi = (alpha - 1.0) / (alpha + 1.0) * b;
    Ok((z, xi))
}

/// `theta` below which the order-2 estimate has smaller variance than the
/// order-3 one: `2/3 - 1/(3(B-2))`. Requires `B > 3`.
pub fn variance_crossover_threshold(alphabet: usize) -> Result<f64> {
    if alphabet <= 3 {
        return invalid(format!("threshold needs B > 3, got {alphabet}"));
    }
    Ok(2.0 / 3.0 - 1.0 / (3.0 * (alphabet as f64 - 2.0)))
}

/// Numerical `d theta / d f` of the inverse of the order-`alpha` key equation.
pub fn slope_by_finite_difference(theta: f64, alpha: f64, alphabet: usize, step: f64) -> Result<f64> {
    let f_hi = kim_zeta((theta + step).min(1.0), alpha, alphabet)?;
    let f_lo = kim_zeta((theta - step).max(1.0 / alphabet as f64), alpha, alphabet)?;
    let width = (theta + step).min(1.0) - (theta - step).max(1.0 / alphabet as f64);
    Ok(width / (f_hi - f_lo))
}
