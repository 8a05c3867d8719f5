//! Count-min sketch whose cells are seeded with Laplace noise.
//!
//! Inserting one password touches exactly one cell per row, so seeding each
//! of the `depth * width` cells with `Laplace(0, depth / epsilon)` makes the
//! whole table `epsilon`-differentially private. Frequency estimates take the
//! minimum over rows.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::corpus::EquivalenceClassList;
use crate::error::{domain, Error, Result};

/// Default threshold at or below which extracted column minima are dropped.
pub const DEFAULT_DROP_THRESHOLD: f64 = 0.5;

/// Sketch dimensions from an additive error `eps_err` (as a fraction of the
/// stream length) and a confidence `delta`: `width = ceil(2 / eps_err)`,
/// `depth = ceil(-ln(1 - delta) / ln 2)`.
pub fn dimensions_for(eps_err: f64, delta: f64) -> Result<(usize, usize)> {
    if !(eps_err > 0.0) || !(0.0..1.0).contains(&delta) {
        return Err(domain("need eps_err > 0 and 0 <= delta < 1"));
    }
    // round before ceil so that 2 / 2e-8 lands on 1e8 rather than 1e8 + 1
    let width = libm::ceil(round_to(2.0 / eps_err, 1e-9)) as usize;
    let depth = libm::ceil(-libm::log(1.0 - delta) / core::f64::consts::LN_2) as usize;
    Ok((width.max(1), depth.max(1)))
}

fn round_to(x: f64, rel: f64) -> f64 {
    let r = libm::round(x);
    if (x - r).abs() <= rel * x.abs() {
        r
    } else {
        x
    }
}

/// Draws one sample from `Laplace(0, scale)` by inverse-CDF sampling.
pub fn sample_laplace<R: RngCore + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        let tail = 1.0 - 2.0 * u.abs();
        if tail > 0.0 {
            return -scale * u.signum() * libm::log(tail);
        }
    }
}

/// Laplace CDF, used by tests and diagnostics.
pub fn laplace_cdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        0.5 * libm::exp(x / scale)
    } else {
        1.0 - 0.5 * libm::exp(-x / scale)
    }
}

// FNV-1a followed by the murmur3 finalizer.
fn digest(item: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in item {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Multiply-add-shift hash `x -> hi64(a*x + b mod 2^128)` reduced onto `[0, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RowHash {
    a: u128,
    b: u128,
}

impl RowHash {
    fn from_seed(seed: u64) -> Self {
        let mut s = seed;
        let a = ((splitmix64(&mut s) as u128) << 64 | splitmix64(&mut s) as u128) | 1;
        let b = (splitmix64(&mut s) as u128) << 64 | splitmix64(&mut s) as u128;
        Self { a, b }
    }

    fn bucket(&self, key: u64, width: usize) -> usize {
        let hi = (self.a.wrapping_mul(key as u128).wrapping_add(self.b) >> 64) as u64;
        ((hi as u128 * width as u128) >> 64) as usize
    }
}

/// A `depth x width` table of real-valued counters.
#[derive(Debug, Clone, PartialEq)]
pub struct DpCountSketch {
    width: usize,
    depth: usize,
    laplace_scale: f64,
    epsilon: Option<f64>,
    seeds: Vec<u64>,
    hashes: Vec<RowHash>,
    // row-major
    table: Vec<f64>,
}

impl DpCountSketch {
    /// Creates a sketch with independent row hashes. With `epsilon` set every
    /// cell starts at a `Laplace(0, depth / epsilon)` draw, otherwise at zero.
    pub fn new(width: usize, depth: usize, epsilon: Option<f64>, seed: u64) -> Result<Self> {
        Self::build(width, depth, epsilon, seed, false)
    }

    /// Like [`new`](Self::new) but every row shares one hash function, so an
    /// item occupies the same column in every row and column minima are
    /// per-item estimates. Used when a noisy corpus is to be extracted.
    pub fn new_column_aligned(
        width: usize,
        depth: usize,
        epsilon: Option<f64>,
        seed: u64,
    ) -> Result<Self> {
        Self::build(width, depth, epsilon, seed, true)
    }

    fn build(
        width: usize,
        depth: usize,
        epsilon: Option<f64>,
        seed: u64,
        aligned: bool,
    ) -> Result<Self> {
        if width == 0 || depth == 0 {
            return Err(domain("sketch width and depth must be at least 1"));
        }
        let laplace_scale = match epsilon {
            Some(e) if !(e > 0.0) || !e.is_finite() => {
                return Err(domain(format!("privacy epsilon must be positive, got {e}")))
            }
            Some(e) => depth as f64 / e,
            None => 0.0,
        };
        let cells = width
            .checked_mul(depth)
            .ok_or_else(|| domain("sketch dimensions overflow"))?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let seeds: Vec<u64> = if aligned {
            vec![rng.next_u64(); depth]
        } else {
            (0..depth).map(|_| rng.next_u64()).collect()
        };
        let table = if laplace_scale > 0.0 {
            (0..cells).map(|_| sample_laplace(&mut rng, laplace_scale)).collect()
        } else {
            vec![0.0; cells]
        };
        Ok(Self::assemble(width, depth, laplace_scale, epsilon, seeds, table))
    }

    fn assemble(
        width: usize,
        depth: usize,
        laplace_scale: f64,
        epsilon: Option<f64>,
        seeds: Vec<u64>,
        table: Vec<f64>,
    ) -> Self {
        let hashes = seeds.iter().map(|&s| RowHash::from_seed(s)).collect();
        Self { width, depth, laplace_scale, epsilon, seeds, hashes, table }
    }

    /// Reassembles a sketch from persisted parts.
    pub fn from_parts(
        width: usize,
        depth: usize,
        laplace_scale: f64,
        seeds: Vec<u64>,
        table: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 || depth == 0 {
            return Err(domain("sketch width and depth must be at least 1"));
        }
        if seeds.len() != depth || Some(table.len()) != width.checked_mul(depth) {
            return Err(domain("seed or table length does not match dimensions"));
        }
        if !(laplace_scale >= 0.0) {
            return Err(domain("Laplace scale must be non-negative"));
        }
        let epsilon = (laplace_scale > 0.0).then(|| depth as f64 / laplace_scale);
        Ok(Self::assemble(width, depth, laplace_scale, epsilon, seeds, table))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn laplace_scale(&self) -> f64 {
        self.laplace_scale
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    /// Row-major cell values.
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn cell(&self, row: usize, col: usize) -> f64 {
        self.table[row * self.width + col]
    }

    /// Column hit by `item` in `row`.
    pub fn bucket(&self, row: usize, item: &str) -> usize {
        self.hashes[row].bucket(digest(item.as_bytes()), self.width)
    }

    pub fn insert(&mut self, item: &str) {
        let key = digest(item.as_bytes());
        for (row, h) in self.hashes.iter().enumerate() {
            let col = h.bucket(key, self.width);
            self.table[row * self.width + col] += 1.0;
        }
    }

    /// Minimum over rows of the cells `item` hashes to. May be negative when
    /// the table carries noise.
    pub fn estimate(&self, item: &str) -> f64 {
        let key = digest(item.as_bytes());
        self.hashes
            .iter()
            .enumerate()
            .map(|(row, h)| self.table[row * self.width + h.bucket(key, self.width)])
            .fold(f64::INFINITY, f64::min)
    }

    /// Minimum of column `col` across all rows.
    pub fn column_min(&self, col: usize) -> f64 {
        (0..self.depth)
            .map(|row| self.table[row * self.width + col])
            .fold(f64::INFINITY, f64::min)
    }

    /// Treats every column as one pseudo-password whose frequency is the
    /// column minimum, drops columns at or below `drop_threshold`, and
    /// compacts the survivors.
    pub fn extract_noisy_corpus(&self, drop_threshold: f64) -> Result<EquivalenceClassList> {
        let survivors: Vec<(f64, u64)> = (0..self.width)
            .map(|col| self.column_min(col))
            .filter(|&f| f > drop_threshold && f > 0.0)
            .map(|f| (f, 1))
            .collect();
        if survivors.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        EquivalenceClassList::from_pairs(survivors)
    }
}
