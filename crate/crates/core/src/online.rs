//! Constant-memory streaming estimator based on adjacent collisions.
//!
//! After each block the collision probability is estimated as `c / k`
//! (collisions over blocks seen) and inverted through the closed-form
//! order-2 key equation. No confidence margin is applied.

use crate::error::{invalid, Result};
use crate::estimators::collision_theta_unchecked;
use crate::ingest::check_block_width;

/// Estimate emitted after a block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineEstimate {
    /// Blocks seen so far.
    pub k: u64,
    pub collision_probability: f64,
    pub theta: f64,
    pub per_bit: f64,
}

/// Running state. One state per stream; states cannot be merged because a
/// collision may straddle the seam between two streams.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineState {
    k: u64,
    collisions: u64,
    last: u32,
    bits_per_block: u32,
    indices: Option<Vec<u64>>,
}

impl OnlineState {
    /// Starts a stream with its first block.
    pub fn new(first_block: u32, bits_per_block: u32, track_indices: bool) -> Result<Self> {
        check_block_width(bits_per_block)?;
        check_block(first_block, bits_per_block)?;
        Ok(Self {
            k: 1,
            collisions: 0,
            last: first_block,
            bits_per_block,
            indices: track_indices.then(Vec::new),
        })
    }

    /// Feeds one block. On error the state is left untouched.
    pub fn update(&mut self, block: u32) -> Result<OnlineEstimate> {
        check_block(block, self.bits_per_block)?;
        self.k += 1;
        if block == self.last {
            self.collisions += 1;
            if let Some(indices) = self.indices.as_mut() {
                indices.push(self.k);
            }
        }
        self.last = block;
        Ok(self.current())
    }

    /// The estimate for the blocks seen so far.
    pub fn current(&self) -> OnlineEstimate {
        let pc = self.collisions as f64 / self.k as f64;
        let theta = collision_theta_unchecked(pc, self.alphabet_size());
        let per_block = -theta.log2();
        OnlineEstimate {
            k: self.k,
            collision_probability: pc,
            theta,
            per_bit: (per_block / self.bits_per_block as f64).clamp(0.0, 1.0),
        }
    }

    pub fn blocks_seen(&self) -> u64 {
        self.k
    }

    pub fn collisions(&self) -> u64 {
        self.collisions
    }

    pub fn last_block(&self) -> u32 {
        self.last
    }

    pub fn bits_per_block(&self) -> u32 {
        self.bits_per_block
    }

    pub fn alphabet_size(&self) -> usize {
        1usize << self.bits_per_block
    }

    /// 1-based positions `k` where `b_k = b_{k-1}`, when tracking is enabled.
    pub fn collision_indices(&self) -> Option<&[u64]> {
        self.indices.as_deref()
    }
}

fn check_block(block: u32, bits_per_block: u32) -> Result<()> {
    if u64::from(block) >= 1u64 << bits_per_block {
        return invalid(format!(
            "block {block} is outside the alphabet of {} symbols",
            1u64 << bits_per_block
        ));
    }
    Ok(())
}

/// Runs a whole block slice through a fresh state and returns the final estimate.
pub fn run(blocks: &[u32], bits_per_block: u32) -> Result<Option<OnlineEstimate>> {
    let Some((&first, rest)) = blocks.split_first() else {
        return Ok(None);
    };
    let mut state = OnlineState::new(first, bits_per_block, false)?;
    let mut last = None;
    for &b in rest {
        last = Some(state.update(b)?);
    }
    Ok(last)
}
