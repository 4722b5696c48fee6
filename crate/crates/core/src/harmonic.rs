//! Harmonic numbers, the maps φ and φ̃, and sampling from P(i) ∝ 1/i.

use std::sync::OnceLock;

use crate::constants::{EULER_GAMMA, LN2};

/// Prefix harmonic sums are tabulated up to this index; larger arguments
/// use the asymptotic expansion, which is accurate to rounding there.
pub const HARMONIC_TABLE_MAX: u64 = 1 << 20;

fn table() -> &'static [f64] {
    static T: OnceLock<Vec<f64>> = OnceLock::new();
    T.get_or_init(|| {
        let mut out = Vec::with_capacity(HARMONIC_TABLE_MAX as usize + 1);
        out.push(0.0);
        let (mut s, mut comp) = (0.0f64, 0.0f64);
        for i in 1..=HARMONIC_TABLE_MAX {
            let y = 1.0 / i as f64 - comp;
            let t = s + y;
            comp = (t - s) - y;
            s = t;
            out.push(s);
        }
        out
    })
}

/// H_n = Σ_{i ≤ n} 1/i, with H_0 = 0.
pub fn harmonic(n: u64) -> f64 {
    if n <= HARMONIC_TABLE_MAX {
        return table()[n as usize];
    }
    let x = n as f64;
    let x2 = x * x;
    x.ln() + EULER_GAMMA + 1.0 / (2.0 * x) - 1.0 / (12.0 * x2) + 1.0 / (120.0 * x2 * x2)
        - 1.0 / (252.0 * x2 * x2 * x2)
}

/// Smallest j ≥ 1 with H_j ≥ y.
pub fn harmonic_ceiling_index(y: f64) -> u64 {
    if y <= 1.0 {
        return 1;
    }
    let mut hi = 2u64;
    while harmonic(hi) < y {
        hi = hi.checked_mul(2).expect("harmonic search overflow");
    }
    let mut lo = hi / 2;
    // invariant: H_lo < y <= H_hi
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if harmonic(mid) >= y {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// φ(x): the unique integer with x ∈ (H_{φ−1}/log 2, H_φ/log 2], φ(0) = 1.
pub fn phi(x: f64) -> u64 {
    harmonic_ceiling_index(x * LN2)
}

/// φ̃ for a fixed k: as φ with n/H_k in place of 1/log 2.
#[derive(Debug, Clone, Copy)]
pub struct PhiTilde {
    pub k: u64,
    pub n: u32,
    pub h_k: f64,
}

impl PhiTilde {
    pub fn new(k: u64) -> Self {
        let n = crate::constants::n_of(k);
        Self { k, n, h_k: harmonic(k) }
    }

    pub fn eval(&self, x: f64) -> u64 {
        harmonic_ceiling_index(x * self.h_k / f64::from(self.n)).min(self.k)
    }
}

/// Draws i ∈ [1, k] with probability (1/i)/H_k.
#[derive(Debug, Clone)]
pub struct HarmonicSampler {
    prefix: Vec<f64>,
}

impl HarmonicSampler {
    pub fn new(k: u64) -> Self {
        let mut prefix = Vec::with_capacity(k as usize + 1);
        prefix.push(0.0);
        let (mut s, mut comp) = (0.0f64, 0.0f64);
        for i in 1..=k {
            let y = 1.0 / i as f64 - comp;
            let t = s + y;
            comp = (t - s) - y;
            s = t;
            prefix.push(s);
        }
        Self { prefix }
    }

    pub fn total(&self) -> f64 {
        *self.prefix.last().unwrap()
    }

    pub fn k(&self) -> u64 {
        (self.prefix.len() - 1) as u64
    }

    /// Index i with prefix[i−1] ≤ u·H_k < prefix[i].
    #[inline]
    pub fn sample(&self, stream: &mut crate::rngkit::Stream) -> u64 {
        let y = stream.next_f64() * self.total();
        let i = self.prefix.partition_point(|&p| p <= y);
        (i as u64).clamp(1, self.k())
    }
}
