//! Deterministic random streams, basic samplers and Monte Carlo plumbing.
//!
//! Every stream is a Philox4x32-10 counter generator keyed by the master
//! seed. The 128-bit counter holds the stream id in its upper half and the
//! block index in its lower half, so two streams with different ids never
//! share a counter value and cannot overlap.
//!
//! Monte Carlo work is cut into a fixed number of blocks, each with its own
//! stream. Blocks are merged in index order, so the result does not depend
//! on how many threads ran them.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamSeed {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl StreamSeed {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self { master_seed, stream_id }
    }

    pub fn stream(self) -> Stream {
        Stream::new(self)
    }
}

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// One Philox4x32 block with 10 rounds.
pub fn philox4x32_10(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = ctr;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let p0 = u64::from(PHILOX_M0) * u64::from(c[0]);
        let p1 = u64::from(PHILOX_M1) * u64::from(c[2]);
        c = [
            ((p1 >> 32) as u32) ^ c[1] ^ k[0],
            p1 as u32,
            ((p0 >> 32) as u32) ^ c[3] ^ k[1],
            p0 as u32,
        ];
    }
    c
}

/// A single random stream. Cloning duplicates the stream state.
#[derive(Debug, Clone)]
pub struct Stream {
    key: [u32; 2],
    id: [u32; 2],
    block: u64,
    buf: [u64; 2],
    pos: usize,
}

impl Stream {
    pub fn new(seed: StreamSeed) -> Self {
        Self {
            key: [seed.master_seed as u32, (seed.master_seed >> 32) as u32],
            id: [seed.stream_id as u32, (seed.stream_id >> 32) as u32],
            block: 0,
            buf: [0; 2],
            pos: 2,
        }
    }

    fn refill(&mut self) {
        let out = philox4x32_10(
            [self.block as u32, (self.block >> 32) as u32, self.id[0], self.id[1]],
            self.key,
        );
        self.block = self.block.wrapping_add(1);
        self.buf = [
            u64::from(out[0]) | (u64::from(out[1]) << 32),
            u64::from(out[2]) | (u64::from(out[3]) << 32),
        ];
        self.pos = 0;
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        if self.pos == 2 {
            self.refill();
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }

    /// Uniform on [0, 1) with 53 bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1] with 53 bits.
    #[inline]
    pub fn next_f64_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n), unbiased (Lemire).
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        let mut m = u128::from(self.next_u64()) * u128::from(n);
        if (m as u64) < n {
            let t = n.wrapping_neg() % n;
            while (m as u64) < t {
                m = u128::from(self.next_u64()) * u128::from(n);
            }
        }
        (m >> 64) as u64
    }

    /// Exp(1) variate.
    #[inline]
    pub fn exp1(&mut self) -> f64 {
        -self.next_f64_open0().ln()
    }

    /// Poisson(1) variate through the cached inversion table.
    #[inline]
    pub fn pois1(&mut self) -> u64 {
        pois1_from_bits(self.next_u64() >> 11)
    }
}

/// Continuous uniform on (a, b].
pub fn sample_uniform_interval(a: f64, b: f64, stream: &mut Stream) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return domain(format!("uniform interval needs finite a < b, got ({a}, {b}]"));
    }
    Ok(uniform_in(a, b, stream))
}

#[inline]
pub(crate) fn uniform_in(a: f64, b: f64, stream: &mut Stream) -> f64 {
    loop {
        let x = a + (b - a) * stream.next_f64_open0();
        if x > a {
            return x.min(b);
        }
    }
}

const POISSON_INVERSION_MAX: f64 = 30.0;

/// Poisson(lambda) variate. Inversion by cdf search up to lambda = 30,
/// transformed rejection (PTRS) above.
pub fn sample_poisson(lambda: f64, stream: &mut Stream) -> Result<u64> {
    if !lambda.is_finite() || lambda < 0.0 {
        return domain(format!("poisson rate must be finite and >= 0, got {lambda}"));
    }
    Ok(poisson(lambda, stream))
}

#[inline]
pub(crate) fn poisson(lambda: f64, stream: &mut Stream) -> u64 {
    if lambda == 0.0 {
        0
    } else if lambda == 1.0 {
        stream.pois1()
    } else if lambda <= POISSON_INVERSION_MAX {
        poisson_inversion(lambda, stream.next_f64())
    } else {
        poisson_ptrs(lambda, stream)
    }
}

/// Smallest j with u < F(j), searching the cdf upward from 0.
pub(crate) fn poisson_inversion(lambda: f64, u: f64) -> u64 {
    let mut p = (-lambda).exp();
    let mut f = p;
    let mut j = 0u64;
    while u >= f {
        j += 1;
        p *= lambda / j as f64;
        let nf = f + p;
        if nf == f {
            // cdf saturated below u; the remaining mass is below rounding
            break;
        }
        f = nf;
    }
    j
}

fn poisson_ptrs(lambda: f64, stream: &mut Stream) -> u64 {
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = stream.next_f64() - 0.5;
        let v = stream.next_f64_open0();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - libm::lgamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

const POIS1_CELL_BITS: u32 = 16;
const POIS1_AMBIGUOUS: u16 = 0x8000;

struct Pois1Table {
    /// cdf scaled by 2^53, built by the same recurrence as `poisson_inversion`
    cdf: Vec<f64>,
    cells: Vec<u16>,
}

fn pois1_table() -> &'static Pois1Table {
    static TABLE: OnceLock<Pois1Table> = OnceLock::new();
    TABLE.get_or_init(|| {
        let scale = (1u64 << 53) as f64;
        let mut p = (-1.0f64).exp();
        let mut f = p;
        let mut cdf = vec![f * scale];
        let mut j = 0u64;
        loop {
            j += 1;
            p *= 1.0 / j as f64;
            let nf = f + p;
            if nf == f {
                break;
            }
            f = nf;
            cdf.push(f * scale);
        }
        let search = |u: u64| cdf.iter().position(|&c| (u as f64) < c).unwrap_or(cdf.len()) as u16;
        let shift = 53 - POIS1_CELL_BITS;
        let cells = (0..1u64 << POIS1_CELL_BITS)
            .map(|t| {
                let lo = search(t << shift);
                let hi = search(((t + 1) << shift) - 1);
                if lo == hi {
                    lo
                } else {
                    lo | POIS1_AMBIGUOUS
                }
            })
            .collect();
        Pois1Table { cdf, cells }
    })
}

/// Poisson(1) by inversion of a 53-bit uniform integer. Matches
/// `poisson_inversion(1.0, u)` exactly for u = bits / 2^53.
#[inline]
pub(crate) fn pois1_from_bits(bits: u64) -> u64 {
    let t = pois1_table();
    let cell = t.cells[(bits >> (53 - POIS1_CELL_BITS)) as usize];
    if cell & POIS1_AMBIGUOUS == 0 {
        return u64::from(cell);
    }
    let u = bits as f64;
    let mut j = (cell & !POIS1_AMBIGUOUS) as usize;
    while j < t.cdf.len() && u >= t.cdf[j] {
        j += 1;
    }
    j as u64
}

/// Monte Carlo estimate of a mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    /// Sample standard deviation over the square root of the sample count.
    pub std_error: f64,
    pub n_samples: u64,
    /// Master seed and the first stream id of the block family.
    pub seed: StreamSeed,
}

impl MCEstimate {
    /// Number of standard errors separating the estimate from `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if self.std_error == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / self.std_error
        }
    }

    pub fn within_sigma(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }
}

/// Running mean and second central moment; merges with Chan's formula.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Accumulator {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self, seed: StreamSeed) -> MCEstimate {
        MCEstimate {
            mean: self.mean,
            std_error: (self.variance() / self.n.max(1) as f64).sqrt(),
            n_samples: self.n,
            seed,
        }
    }
}

/// Merge block accumulators in index order.
pub fn merge_in_order<'a, I: IntoIterator<Item = &'a Accumulator>>(accs: I) -> Accumulator {
    let mut out = Accumulator::default();
    for a in accs {
        out.merge(a);
    }
    out
}

pub const DEFAULT_BLOCKS: u32 = 256;

/// How a Monte Carlo run is cut into blocks and spread over threads.
///
/// Only `seed`, `n_samples` and `blocks` affect results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McPlan {
    pub seed: u64,
    pub n_samples: u64,
    pub blocks: u32,
    pub threads: usize,
}

impl McPlan {
    pub fn new(seed: u64, n_samples: u64) -> Self {
        Self { seed, n_samples, blocks: DEFAULT_BLOCKS, threads: default_threads() }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    pub fn with_blocks(mut self, blocks: u32) -> Self {
        self.blocks = blocks.max(1);
        self
    }

    pub fn with_samples(mut self, n_samples: u64) -> Self {
        self.n_samples = n_samples;
        self
    }

    /// Samples assigned to block `b`.
    pub fn block_len(&self, b: u32) -> u64 {
        let blocks = u64::from(self.blocks);
        let base = self.n_samples / blocks;
        base + u64::from(u64::from(b) < self.n_samples % blocks)
    }

    /// Seed of block `b` for an estimator family tagged `salt`.
    pub fn block_seed(&self, salt: u32, b: u32) -> StreamSeed {
        StreamSeed::new(self.seed, (u64::from(salt) << 32) | u64::from(b))
    }

    /// Run `f(block, stream, count)` for every block and return the results
    /// in block order.
    pub fn run_blocks<A, F>(&self, salt: u32, f: F) -> Vec<A>
    where
        A: Send,
        F: Fn(u32, &mut Stream, u64) -> A + Sync,
    {
        let blocks = self.blocks as usize;
        let threads = self.threads.clamp(1, blocks);
        let job = |b: usize| {
            let b = b as u32;
            let mut s = self.block_seed(salt, b).stream();
            f(b, &mut s, self.block_len(b))
        };
        if threads == 1 {
            return (0..blocks).map(job).collect();
        }
        let next = AtomicUsize::new(0);
        let mut done: Vec<(usize, A)> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|_| {
                    scope.spawn(|| {
                        let mut out = Vec::new();
                        loop {
                            let b = next.fetch_add(1, Ordering::Relaxed);
                            if b >= blocks {
                                break;
                            }
                            out.push((b, job(b)));
                        }
                        out
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
        });
        done.sort_by_key(|(b, _)| *b);
        done.into_iter().map(|(_, a)| a).collect()
    }

    /// Mean of `f` over all samples, one accumulator per block.
    pub fn estimate<F>(&self, salt: u32, f: F) -> MCEstimate
    where
        F: Fn(&mut Stream) -> f64 + Sync,
    {
        let accs = self.run_blocks(salt, |_, s, count| {
            let mut acc = Accumulator::default();
            for _ in 0..count {
                acc.push(f(s));
            }
            acc
        });
        merge_in_order(&accs).estimate(self.block_seed(salt, 0))
    }
}

/// Worker count from `PERMLAB_THREADS`, else the machine's parallelism.
pub fn default_threads() -> usize {
    std::env::var("PERMLAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32_10([0; 4], [0; 2]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32_10(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let mut a = StreamSeed::new(9, 4).stream();
        let mut b = StreamSeed::new(9, 4).stream();
        let mut c = StreamSeed::new(9, 5).stream();
        let xa: Vec<u64> = (0..100).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..100).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..100).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn poisson_zero_rate() {
        let mut s = StreamSeed::new(1, 0).stream();
        for _ in 0..1000 {
            assert_eq!(sample_poisson(0.0, &mut s).unwrap(), 0);
        }
    }

    #[test]
    fn poisson_rejects_bad_rates() {
        let mut s = StreamSeed::new(1, 0).stream();
        assert!(matches!(sample_poisson(-0.5, &mut s), Err(crate::Error::Domain(_))));
        assert!(sample_poisson(f64::NAN, &mut s).is_err());
        assert!(sample_poisson(f64::INFINITY, &mut s).is_err());
    }

    #[test]
    fn poisson_one_mean_and_pmf() {
        let n = 1_000_000;
        let mut s = StreamSeed::new(2, 0).stream();
        let mut sum = 0u64;
        let mut twos = 0u64;
        for _ in 0..n {
            let x = sample_poisson(1.0, &mut s).unwrap();
            sum += x;
            twos += u64::from(x == 2);
        }
        let mean = sum as f64 / n as f64;
        assert!((mean - 1.0).abs() < 4e-3, "mean {mean}");
        let p2 = (-1.0f64).exp() / 2.0;
        let se = (p2 * (1.0 - p2) / n as f64).sqrt();
        let ph = twos as f64 / n as f64;
        assert!((ph - p2).abs() <= 3.0 * se, "P(X=2) {ph} vs {p2}");
    }

    #[test]
    fn pois1_table_matches_generic_inversion() {
        let mut s = StreamSeed::new(3, 0).stream();
        for _ in 0..200_000 {
            let bits = s.next_u64() >> 11;
            let u = bits as f64 / (1u64 << 53) as f64;
            assert_eq!(pois1_from_bits(bits), poisson_inversion(1.0, u));
        }
        // cell edges, where the table defers to the cdf
        for j in 0..12u64 {
            let mut f = 0.0;
            let mut p = (-1.0f64).exp();
            for i in 0..=j {
                if i > 0 {
                    p *= 1.0 / i as f64;
                }
                f += p;
            }
            let edge = (f * (1u64 << 53) as f64) as u64;
            for bits in edge.saturating_sub(3)..edge + 3 {
                let bits = bits.min((1 << 53) - 1);
                let u = bits as f64 / (1u64 << 53) as f64;
                assert_eq!(pois1_from_bits(bits), poisson_inversion(1.0, u));
            }
        }
    }

    #[test]
    fn poisson_large_rate_moments() {
        let n = 200_000;
        for &lam in &[31.0, 100.0, 1234.5] {
            let mut s = StreamSeed::new(4, lam as u64).stream();
            let mut acc = Accumulator::default();
            for _ in 0..n {
                acc.push(sample_poisson(lam, &mut s).unwrap() as f64);
            }
            let se = (lam / n as f64).sqrt();
            assert!((acc.mean - lam).abs() < 4.0 * se, "lambda {lam}: mean {}", acc.mean);
            assert!((acc.variance() / lam - 1.0).abs() < 0.02, "lambda {lam}: var {}", acc.variance());
        }
    }

    #[test]
    fn poisson_moderate_rate_pmf() {
        let lam = 7.3;
        let n = 400_000;
        let mut s = StreamSeed::new(5, 0).stream();
        let mut counts = [0u64; 40];
        for _ in 0..n {
            let x = sample_poisson(lam, &mut s).unwrap() as usize;
            counts[x.min(39)] += 1;
        }
        let mut p = (-lam).exp();
        for (j, &c) in counts.iter().enumerate().take(20) {
            if j > 0 {
                p *= lam / j as f64;
            }
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((c as f64 / n as f64 - p).abs() < 4.5 * se + 1e-9, "j={j}");
        }
    }

    #[test]
    fn uniform_unit_interval_mean() {
        let n = 1_000_000;
        let mut s = StreamSeed::new(6, 0).stream();
        let mut acc = Accumulator::default();
        for _ in 0..n {
            acc.push(sample_uniform_interval(0.0, 1.0, &mut s).unwrap());
        }
        let se = (1.0 / 12.0 / n as f64).sqrt();
        assert!((acc.mean - 0.5).abs() <= 3.0 * se);
    }

    #[test]
    fn uniform_range_and_determinism() {
        let mut s = StreamSeed::new(7, 0).stream();
        for _ in 0..100_000 {
            let x = sample_uniform_interval(3.0, 4.0, &mut s).unwrap();
            assert!(x > 3.0 && x <= 4.0);
        }
        let run = || {
            let mut s = StreamSeed::new(8, 1).stream();
            (0..1000).map(|_| sample_uniform_interval(0.0, 1.0, &mut s).unwrap().to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
        assert!(sample_uniform_interval(1.0, 1.0, &mut s).is_err());
        assert!(sample_uniform_interval(2.0, 1.0, &mut s).is_err());
    }

    #[test]
    fn below_is_in_range_and_roughly_uniform() {
        let mut s = StreamSeed::new(9, 0).stream();
        let mut counts = [0u64; 7];
        for _ in 0..70_000 {
            counts[s.below(7) as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 500.0);
        }
    }

    #[test]
    fn plan_results_do_not_depend_on_threads() {
        let f = |s: &mut Stream| s.next_f64().powi(2);
        let one = McPlan::new(11, 10_001).with_threads(1).estimate(3, f);
        let four = McPlan::new(11, 10_001).with_threads(4).estimate(3, f);
        assert_eq!(one.mean.to_bits(), four.mean.to_bits());
        assert_eq!(one.std_error.to_bits(), four.std_error.to_bits());
        assert_eq!(one.n_samples, 10_001);
    }

    #[test]
    fn accumulator_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.5).collect();
        let mut whole = Accumulator::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut parts = [Accumulator::default(); 3];
        for (i, &x) in xs.iter().enumerate() {
            parts[i % 3].push(x);
        }
        let merged = merge_in_order(&parts);
        assert!((merged.mean - whole.mean).abs() < 1e-12);
        assert!((merged.variance() - whole.variance()).abs() < 1e-9);
    }
}
