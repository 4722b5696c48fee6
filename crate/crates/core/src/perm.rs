//! Cycle types, the Poisson multiset models A₀ and A, and the probabilities
//! i(n, k) and p(k).

use std::collections::HashMap;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::constants::{delta, n_of, xi_of, EULER_GAMMA, LN2};
use crate::error::{capacity, domain, Result};
use crate::harmonic::HarmonicSampler;
use crate::rngkit::{merge_in_order, poisson, Accumulator, MCEstimate, McPlan, Stream};
use crate::sumstats::Bitset;

/// Multiplicities a_i of cycles of length i, 1 ≤ i ≤ n.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CycleType {
    pub n: u64,
    /// a[i − 1] = number of i-cycles
    pub a: Vec<u64>,
}

impl CycleType {
    pub fn count(&self, len: u64) -> u64 {
        self.a[len as usize - 1]
    }

    pub fn cycles(&self) -> u64 {
        self.a.iter().sum()
    }

    /// Cycle lengths with multiplicity.
    pub fn lengths(&self) -> Vec<u64> {
        self.a.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i as u64 + 1, c as usize)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Model {
    /// r(i) ~ Pois(1/i)
    A0,
    /// r(i) ~ Pois(n/(i H_k))
    A,
}

/// Multiplicities r(i), i ∈ [k], of a Poisson multiset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonMultiset {
    pub model: Model,
    pub k: u64,
    pub r: HashMap<u64, u64>,
}

impl PoissonMultiset {
    pub fn len(&self) -> u64 {
        self.r.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> Vec<u64> {
        let mut v: Vec<u64> =
            self.r.iter().flat_map(|(&i, &c)| std::iter::repeat_n(i, c as usize)).collect();
        v.sort_unstable();
        v
    }
}

/// Samples the multiset: a Pois(total) number of i.i.d. elements with
/// P(i) ∝ 1/i, which gives independent Pois(scale/i) multiplicities.
fn sample_multiset_values(sampler: &HarmonicSampler, scale: f64, s: &mut Stream, out: &mut Vec<u64>) {
    out.clear();
    let count = poisson(scale * sampler.total(), s);
    for _ in 0..count {
        out.push(sampler.sample(s));
    }
}

pub fn sample_poisson_multiset(model: Model, k: u64, stream: &mut Stream) -> Result<PoissonMultiset> {
    if k == 0 {
        return domain("k must be positive");
    }
    let sampler = HarmonicSampler::new(k);
    let scale = match model {
        Model::A0 => 1.0,
        Model::A => f64::from(n_of(k)) / sampler.total(),
    };
    let mut vals = Vec::new();
    sample_multiset_values(&sampler, scale, stream, &mut vals);
    let mut r = HashMap::new();
    for v in vals {
        *r.entry(v).or_insert(0) += 1;
    }
    Ok(PoissonMultiset { model, k, r })
}

/// Reachability test with a reusable bitmap; values above the target are
/// skipped.
pub fn subset_sum_hits_with(values: &[u64], target: u64, scratch: &mut Bitset) -> Result<bool> {
    if values.contains(&0) {
        return domain("subset_sum_hits values must be >= 1");
    }
    if target == 0 {
        return Ok(true);
    }
    scratch.reset(target + 1)?;
    for &v in values {
        if v <= target {
            scratch.or_shifted(v);
            if scratch.get(target) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Whether `target` is a sum of some sub-multiset of `values`. The empty sum
/// makes target 0 always reachable.
pub fn subset_sum_hits(values: &[u64], target: u64) -> Result<bool> {
    subset_sum_hits_with(values, target, &mut Bitset::default())
}

/// Uniform-permutation cycle type by the Feller coupling: the cycle through
/// the smallest remaining point has length uniform on 1..=m.
pub fn sample_cycle_type(n: u64, stream: &mut Stream) -> Result<CycleType> {
    if n == 0 {
        return domain("n must be >= 1");
    }
    let mut a = vec![0u64; n as usize];
    let mut m = n;
    while m > 0 {
        let l = 1 + stream.below(m);
        a[l as usize - 1] += 1;
        m -= l;
    }
    Ok(CycleType { n, a })
}

pub const PARTITION_MAX_N: u64 = 42;

/// Calls f(parts) for each partition of n, parts nonincreasing.
fn for_each_partition(n: u64, f: &mut impl FnMut(&[u64])) {
    fn rec(rem: u64, max: u64, parts: &mut Vec<u64>, f: &mut impl FnMut(&[u64])) {
        if rem == 0 {
            f(parts);
            return;
        }
        for p in (1..=max.min(rem)).rev() {
            parts.push(p);
            rec(rem - p, p, parts, f);
            parts.pop();
        }
    }
    rec(n, n, &mut Vec::new(), f);
}

fn check_nk(n: u64, k: u64) -> Result<()> {
    if n == 0 || k > n {
        return domain(format!("need 1 <= n and k <= n, got n = {n}, k = {k}"));
    }
    if n > PARTITION_MAX_N {
        return capacity(format!("exact i(n, k) enumerates partitions up to n = {PARTITION_MAX_N}; use i_nk_mc"));
    }
    Ok(())
}

/// Exact i(n, k) as a reduced fraction (numerator, denominator): the count
/// of permutations with an invariant k-set over n!.
pub fn i_nk_rational(n: u64, k: u64) -> Result<(BigUint, BigUint)> {
    check_nk(n, k)?;
    let mut fact = vec![BigUint::one()];
    for i in 1..=n {
        let next = &fact[i as usize - 1] * i;
        fact.push(next);
    }
    let mut hits = BigUint::zero();
    let mut scratch = Bitset::default();
    for_each_partition(n, &mut |parts| {
        if subset_sum_hits_with(parts, k, &mut scratch).expect("parts are positive") {
            // n!/z_λ with z_λ = Π i^{a_i} a_i!
            let mut z = BigUint::one();
            let mut i = 0;
            while i < parts.len() {
                let p = parts[i];
                let mut a = 0;
                while i < parts.len() && parts[i] == p {
                    a += 1;
                    i += 1;
                }
                z *= BigUint::from(p).pow(a) * &fact[a as usize];
            }
            hits += &fact[n as usize] / z;
        }
    });
    let denom = fact[n as usize].clone();
    let g = hits.gcd(&denom);
    Ok((hits / &g, denom / g))
}

/// Exact i(n, k) in double precision with compensated summation.
pub fn i_nk_exact(n: u64, k: u64) -> Result<f64> {
    check_nk(n, k)?;
    let mut lnfact = vec![0.0f64];
    for i in 1..=n {
        lnfact.push(lnfact[i as usize - 1] + (i as f64).ln());
    }
    let mut sum = Neumaier::default();
    let mut scratch = Bitset::default();
    for_each_partition(n, &mut |parts| {
        if subset_sum_hits_with(parts, k, &mut scratch).expect("parts are positive") {
            let mut lz = 0.0;
            let mut i = 0;
            while i < parts.len() {
                let p = parts[i];
                let mut a = 0usize;
                while i < parts.len() && parts[i] == p {
                    a += 1;
                    i += 1;
                }
                lz += a as f64 * (p as f64).ln() + lnfact[a];
            }
            sum.add((-lz).exp());
        }
    });
    Ok(sum.value())
}

/// Neumaier compensated sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

const SALT_INK: u32 = 0x5045_0001;
const SALT_PK: u32 = 0x5045_0002;
const SALT_CM_LHS: u32 = 0x5045_0003;
const SALT_CM_RHS: u32 = 0x5045_0004;

/// Fraction of sampled cycle types with an invariant set of size k.
pub fn i_nk_mc(n: u64, k: u64, plan: &McPlan) -> Result<MCEstimate> {
    if n == 0 || k > n {
        return domain(format!("need 1 <= n and k <= n, got n = {n}, k = {k}"));
    }
    let accs = plan.run_blocks(SALT_INK, |_, s, count| {
        let mut acc = Accumulator::default();
        let mut scratch = Bitset::default();
        let mut lens = Vec::new();
        for _ in 0..count {
            lens.clear();
            let mut m = n;
            while m > 0 {
                let l = 1 + s.below(m);
                if l <= k {
                    lens.push(l);
                }
                m -= l;
            }
            let hit = subset_sum_hits_with(&lens, k, &mut scratch).expect("lengths are positive");
            acc.push(f64::from(u8::from(hit)));
        }
        acc
    });
    Ok(merge_in_order(&accs).estimate(plan.block_seed(SALT_INK, 0)))
}

pub const PK_EXACT_MAX: u64 = 20;

/// Exact p(k) = P(k ∈ Σ(A₀)) for k ≤ 20.
///
/// Multiplicities r_i ∈ [0, ⌈k/i⌉] are enumerated with the Poisson tail
/// folded into the top value. Vectors are grouped by the set of sums they
/// reach in [0, k] (a bitmask), which is all the membership test depends
/// on, so the enumeration runs as a dynamic program over those sets.
pub fn pk_exact_small(k: u64) -> Result<f64> {
    if k == 0 {
        return domain("k must be positive");
    }
    if k > PK_EXACT_MAX {
        return capacity(format!("exact p(k) supports k <= {PK_EXACT_MAX}; use pk_mc"));
    }
    let full: u32 = if k + 1 >= 32 { u32::MAX } else { (1u32 << (k + 1)) - 1 };
    let target = 1u32 << k;
    let mut states: HashMap<u32, Neumaier> = HashMap::new();
    let mut n0 = Neumaier::default();
    n0.add(1.0);
    states.insert(1, n0);
    let mut hit = Neumaier::default();
    for i in 1..=k {
        let lam = 1.0 / i as f64;
        let cap = k.div_ceil(i);
        let mut pmf = Vec::with_capacity(cap as usize + 1);
        let mut p = (-lam).exp();
        let mut below = Neumaier::default();
        for r in 0..cap {
            if r > 0 {
                p *= lam / r as f64;
            }
            pmf.push(p);
            below.add(p);
        }
        // tail P(r ≥ cap) = 1 − P(r < cap), summed directly for accuracy
        let mut tail = Neumaier::default();
        let mut q = p * lam / cap as f64;
        let mut j = cap;
        while q > 1e-300 && j < cap + 200 {
            tail.add(q);
            j += 1;
            q *= lam / j as f64;
        }
        pmf.push(tail.value());
        let mut next: HashMap<u32, Neumaier> = HashMap::with_capacity(states.len() * 2);
        for (&mask, w) in &states {
            let w = w.value();
            let mut m = mask;
            for (r, &pr) in pmf.iter().enumerate() {
                if r > 0 {
                    m |= (m << i) & full;
                }
                let mass = w * pr;
                if m & target != 0 {
                    hit.add(mass);
                } else {
                    next.entry(m).or_default().add(mass);
                }
            }
        }
        states = next;
    }
    Ok(hit.value())
}

/// p(k) by simulation of A₀ ∩ [k].
pub fn pk_mc(k: u64, plan: &McPlan) -> Result<MCEstimate> {
    if k == 0 {
        return domain("k must be positive");
    }
    let sampler = HarmonicSampler::new(k);
    let accs = plan.run_blocks(SALT_PK ^ (k as u32), |_, s, count| {
        let mut acc = Accumulator::default();
        let mut scratch = Bitset::default();
        let mut vals = Vec::new();
        for _ in 0..count {
            sample_multiset_values(&sampler, 1.0, s, &mut vals);
            let hit = subset_sum_hits_with(&vals, k, &mut scratch).expect("values are positive");
            acc.push(f64::from(u8::from(hit)));
        }
        acc
    });
    Ok(merge_in_order(&accs).estimate(plan.block_seed(SALT_PK ^ (k as u32), 0)))
}

#[derive(Debug, Clone, Serialize)]
pub struct ChangeOfMeasureReport {
    pub k: u64,
    pub n: u32,
    pub xi: f64,
    pub lhs: MCEstimate,
    pub rhs: MCEstimate,
    pub ratio: f64,
    pub d_window: i64,
}

/// Compares p(k) with e^{γ(1/log 2 − 1)} k^{−δ} Σ_{|D| ≤ 20 log n} (log 2)^{D−ξ}
/// P(k ∈ Σ(A), |A| = n + D).
///
/// The sum over D is estimated in one pass: sample A without conditioning
/// on |A| and weight each hit by (log 2)^{|A| − n − ξ}.
pub fn change_of_measure_check(k: u64, plan: &McPlan) -> Result<ChangeOfMeasureReport> {
    if !((1 << 8)..=(1 << 20)).contains(&k) {
        return domain(format!("change_of_measure_check needs 2^8 <= k <= 2^20, got {k}"));
    }
    if plan.n_samples == 0 {
        return domain("change_of_measure_check needs at least one sample");
    }
    let n = n_of(k);
    let xi = xi_of(k);
    let d_window = (20.0 * f64::from(n).ln()).floor() as i64;
    let lhs = pk_mc(k, &plan.with_samples(plan.n_samples))?;
    let lhs = MCEstimate { seed: plan.block_seed(SALT_CM_LHS, 0), ..lhs };
    let sampler = HarmonicSampler::new(k);
    let scale = f64::from(n) / sampler.total();
    let ln_ln2 = LN2.ln();
    let prefactor = (EULER_GAMMA * (1.0 / LN2 - 1.0)).exp() * (k as f64).powf(-delta());
    let accs = plan.run_blocks(SALT_CM_RHS, |_, s, count| {
        let mut acc = Accumulator::default();
        let mut scratch = Bitset::default();
        let mut vals = Vec::new();
        for _ in 0..count {
            sample_multiset_values(&sampler, scale, s, &mut vals);
            let d = vals.len() as i64 - i64::from(n);
            let mut x = 0.0;
            if d.abs() <= d_window && subset_sum_hits_with(&vals, k, &mut scratch).expect("positive") {
                x = prefactor * ((d as f64 - xi) * ln_ln2).exp();
            }
            acc.push(x);
        }
        acc
    });
    let rhs = merge_in_order(&accs).estimate(plan.block_seed(SALT_CM_RHS, 0));
    Ok(ChangeOfMeasureReport { k, n, xi, ratio: lhs.mean / rhs.mean, lhs, rhs, d_window })
}

/// Exact rational to f64.
pub fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    let shift = den.bits().saturating_sub(60);
    let n = (num >> shift).to_f64().unwrap_or(f64::NAN);
    let d = (den >> shift).to_f64().unwrap_or(f64::NAN);
    n / d
}
