//! Bit sequences, block packing and the minimum-distance stream.
//!
//! Every test statistic in this crate consumes the same object: for each test
//! position `n`, the distance `D_n` back to the most recent earlier block with
//! the same value (or `n` itself when the value has not been seen before).
//! Positions are 1-based throughout, so the first `Q` blocks initialize the
//! last-occurrence table and positions `Q+1 ..= Q+K` are tested.

use std::io::Read;
use std::path::Path;

use crate::error::{invalid, Result};

/// Largest supported block width. The last-occurrence table has `2^L` slots.
pub const MAX_BITS_PER_BLOCK: u32 = 24;

/// An ordered sequence of binary symbols.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitSequence {
    bits: Vec<u8>,
}

impl BitSequence {
    /// Wraps a vector of `0`/`1` values.
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return invalid(format!("bit at position {pos} is {}, expected 0 or 1", bits[pos]));
        }
        Ok(Self { bits })
    }

    /// Expands bytes into bits, most-significant bit of each byte first.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        let mut bits = Vec::with_capacity(bytes.len() * 8);
        for &byte in bytes {
            for shift in (0..8).rev() {
                bits.push((byte >> shift) & 1);
            }
        }
        Self { bits }
    }

    /// Parses a text of `'0'`/`'1'` characters. ASCII whitespace is ignored.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(text.len());
        for (i, ch) in text.char_indices() {
            match ch {
                '0' => bits.push(0),
                '1' => bits.push(1),
                c if c.is_ascii_whitespace() => {}
                c => return invalid(format!("unexpected character {c:?} at byte {i}")),
            }
        }
        Ok(Self { bits })
    }

    /// Interprets raw file content, auto-detecting the text format.
    pub fn from_raw(content: &[u8]) -> Self {
        if looks_like_text(content) {
            let bits = content.iter().filter(|b| !b.is_ascii_whitespace()).map(|&b| b - b'0').collect();
            Self { bits }
        } else {
            Self::from_bytes(content)
        }
    }

    /// Reads a raw-bits file (binary, or `0`/`1` text).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let content = std::fs::read(path)?;
        Ok(Self::from_raw(&content))
    }

    /// Packs the bits into bytes MSB-first, zero-padding the final byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits
            .chunks(8)
            .map(|chunk| chunk.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (b << (7 - i))))
            .collect()
    }

    /// Renders the bits as a `0`/`1` string.
    pub fn to_text(&self) -> String {
        self.bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }
}

/// A non-empty buffer made only of `'0'`, `'1'` and ASCII whitespace, with at
/// least one digit, is treated as text.
fn looks_like_text(content: &[u8]) -> bool {
    let mut digits = false;
    for &b in content {
        match b {
            b'0' | b'1' => digits = true,
            b if b.is_ascii_whitespace() => {}
            _ => return false,
        }
    }
    digits
}

/// Blocks `b_n` over the alphabet `{0, .., B-1}` with `B = 2^L`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSequence {
    blocks: Vec<u32>,
    bits_per_block: u32,
}

impl BlockSequence {
    pub fn new(blocks: Vec<u32>, bits_per_block: u32) -> Result<Self> {
        check_block_width(bits_per_block)?;
        let alphabet = 1u64 << bits_per_block;
        if let Some(pos) = blocks.iter().position(|&b| u64::from(b) >= alphabet) {
            return invalid(format!(
                "block {pos} has value {} outside the alphabet of size {alphabet}",
                blocks[pos]
            ));
        }
        Ok(Self { blocks, bits_per_block })
    }

    pub(crate) fn from_raw_parts(blocks: Vec<u32>, bits_per_block: u32) -> Self {
        debug_assert!(blocks.iter().all(|&b| u64::from(b) < (1u64 << bits_per_block)));
        Self { blocks, bits_per_block }
    }

    pub fn blocks(&self) -> &[u32] {
        &self.blocks
    }

    pub fn bits_per_block(&self) -> u32 {
        self.bits_per_block
    }

    pub fn alphabet_size(&self) -> usize {
        1usize << self.bits_per_block
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Expands the blocks back into bits, MSB-first within each block.
    pub fn unpack(&self) -> BitSequence {
        let l = self.bits_per_block;
        let mut bits = Vec::with_capacity(self.blocks.len() * l as usize);
        for &block in &self.blocks {
            for shift in (0..l).rev() {
                bits.push(((block >> shift) & 1) as u8);
            }
        }
        BitSequence { bits }
    }
}

pub(crate) fn check_block_width(bits_per_block: u32) -> Result<()> {
    if bits_per_block == 0 || bits_per_block > MAX_BITS_PER_BLOCK {
        return invalid(format!("bits per block must be in 1..={MAX_BITS_PER_BLOCK}, got {bits_per_block}"));
    }
    Ok(())
}

/// Partitions `bits` into non-overlapping `L`-bit blocks, first bit most
/// significant. Trailing bits that do not fill a block are dropped.
pub fn pack_blocks(bits: &BitSequence, bits_per_block: u32) -> Result<BlockSequence> {
    check_block_width(bits_per_block)?;
    let l = bits_per_block as usize;
    if bits.len() < l {
        return invalid(format!("need at least {l} bits to form one block, got {}", bits.len()));
    }
    let blocks = bits
        .bits
        .chunks_exact(l)
        .map(|chunk| chunk.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b)))
        .collect();
    Ok(BlockSequence { blocks, bits_per_block })
}

/// Minimum distances `D_n` for test positions `n = Q+1 ..= Q+K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceStream {
    distances: Vec<usize>,
    init_blocks: usize,
}

impl DistanceStream {
    pub fn distances(&self) -> &[usize] {
        &self.distances
    }

    /// Number of initialization blocks `Q`.
    pub fn init_blocks(&self) -> usize {
        self.init_blocks
    }

    /// Number of test blocks `K`.
    pub fn test_blocks(&self) -> usize {
        self.distances.len()
    }

    /// Builds a stream from precomputed distances, checking `1 <= D_n <= n`.
    pub fn from_distances(distances: Vec<usize>, init_blocks: usize) -> Result<Self> {
        for (j, &d) in distances.iter().enumerate() {
            let n = init_blocks + j + 1;
            if d == 0 || d > n {
                return invalid(format!("distance {d} at position {n} violates 1 <= D_n <= n"));
            }
        }
        Ok(Self { distances, init_blocks })
    }
}

/// Computes the distance stream in a single pass with a last-occurrence table.
pub fn distance_stream(
    blocks: &BlockSequence,
    init_blocks: usize,
    test_blocks: usize,
) -> Result<DistanceStream> {
    if init_blocks == 0 {
        return invalid("at least one initialization block is required");
    }
    if test_blocks == 0 {
        return invalid("at least one test block is required");
    }
    let total = init_blocks.checked_add(test_blocks).filter(|&t| t <= blocks.len());
    let Some(total) = total else {
        return invalid(format!(
            "Q + K = {} + {} exceeds the {} available blocks",
            init_blocks,
            test_blocks,
            blocks.len()
        ));
    };
    // 0 marks "never seen"; otherwise the 1-based position of the last occurrence.
    let mut last = vec![0usize; blocks.alphabet_size()];
    let mut distances = Vec::with_capacity(test_blocks);
    for (idx, &b) in blocks.blocks[..total].iter().enumerate() {
        let n = idx + 1;
        let slot = &mut last[b as usize];
        if n > init_blocks {
            distances.push(if *slot == 0 { n } else { n - *slot });
        }
        *slot = n;
    }
    Ok(DistanceStream { distances, init_blocks })
}

/// Number of adjacent repeats `b_n = b_{n-1}` among positions `Q+1 ..= Q+K`.
///
/// Equals the count of `D_n = 1` in [`distance_stream`] without building the
/// last-occurrence table.
pub fn adjacent_collisions(blocks: &BlockSequence, init_blocks: usize, test_blocks: usize) -> Result<usize> {
    if init_blocks == 0 || test_blocks == 0 {
        return invalid("Q and K must both be at least 1");
    }
    let total = init_blocks + test_blocks;
    if total > blocks.len() {
        return invalid(format!("Q + K = {total} exceeds the {} available blocks", blocks.len()));
    }
    let window = &blocks.blocks[init_blocks - 1..total];
    Ok(window.windows(2).filter(|w| w[0] == w[1]).count())
}

/// Incremental block reader over a byte stream.
///
/// The text/binary decision is made on the first chunk read; later chunks are
/// decoded with the same format.
pub struct BlockReader<R> {
    inner: R,
    bits_per_block: u32,
    text: Option<bool>,
    buf: Vec<u8>,
    pos: usize,
    len: usize,
    bit: u32,
    acc: u32,
    filled: u32,
}

impl<R: Read> BlockReader<R> {
    pub fn new(inner: R, bits_per_block: u32) -> Result<Self> {
        check_block_width(bits_per_block)?;
        Ok(Self {
            inner,
            bits_per_block,
            text: None,
            buf: vec![0; 1 << 16],
            pos: 0,
            len: 0,
            bit: 0,
            acc: 0,
            filled: 0,
        })
    }

    pub fn bits_per_block(&self) -> u32 {
        self.bits_per_block
    }

    fn refill(&mut self) -> Result<bool> {
        loop {
            match self.inner.read(&mut self.buf) {
                Ok(0) => return Ok(false),
                Ok(n) => {
                    self.pos = 0;
                    self.len = n;
                    if self.text.is_none() {
                        self.text = Some(looks_like_text(&self.buf[..n]));
                    }
                    return Ok(true);
                }
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn push_bit(&mut self, bit: u32) -> Option<u32> {
        self.acc = (self.acc << 1) | bit;
        self.filled += 1;
        if self.filled == self.bits_per_block {
            let block = self.acc;
            self.acc = 0;
            self.filled = 0;
            Some(block)
        } else {
            None
        }
    }

    /// Returns the next complete block, or `None` at end of input.
    pub fn next_block(&mut self) -> Result<Option<u32>> {
        loop {
            while self.pos < self.len {
                let byte = self.buf[self.pos];
                if self.text == Some(true) {
                    self.pos += 1;
                    let bit = match byte {
                        b'0' => 0,
                        b'1' => 1,
                        b if b.is_ascii_whitespace() => continue,
                        b => return invalid(format!("unexpected byte 0x{b:02x} in text input")),
                    };
                    if let Some(block) = self.push_bit(bit) {
                        return Ok(Some(block));
                    }
                } else {
                    // `bit` is the cursor inside the current byte.
                    while self.bit < 8 {
                        let shift = 7 - self.bit;
                        self.bit += 1;
                        if let Some(block) = self.push_bit(u32::from((byte >> shift) & 1)) {
                            return Ok(Some(block));
                        }
                    }
                    self.bit = 0;
                    self.pos += 1;
                }
            }
            if !self.refill()? {
                return Ok(None);
            }
        }
    }
}
