//! Subset-sum statistics ρ and τ with interchangeable counting engines.
//!
//! ρ counts the 0/1 combinations of 2^{−u_i} that land in [1 − 2^{−w}, 1].
//! Terms are rounded once to fixed point with 57 fractional bits, so every
//! engine adds the same integers and the engines agree exactly. The
//! interval is closed, widened by 1e−12 on both sides.
//!
//! τ counts distinct subset sums of positive integers.

use serde::Serialize;

use crate::error::{capacity, domain, Error, Result};
use crate::processes::{ConditionedLower, ConditionedUpper};

const FIX_BITS: i32 = 57;
const ONE: i64 = 1 << FIX_BITS;
/// 1e−12 in fixed point.
const SLOP: i64 = 144_115;

/// Engine capacity limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EngineLimits {
    pub rho_brute_max: usize,
    pub rho_mitm_max: usize,
    pub tau_brute_max: usize,
    /// largest bitmap, in bits, the τ engine will allocate
    pub tau_dense_max_bits: u64,
    /// most values the sparse part of a split τ computation may hold
    pub tau_split_max_upper: usize,
}

impl Default for EngineLimits {
    fn default() -> Self {
        Self { rho_brute_max: 26, rho_mitm_max: 52, tau_brute_max: 24, tau_dense_max_bits: 1 << 30, tau_split_max_upper: 22 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoEngine {
    Brute,
    Mitm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TauEngine {
    Brute,
    Bitset,
}

/// Which definition a ρ input was assembled for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoMode {
    Plain,
    Star,
    PartialCell,
}

/// Result = 2^z · #{ε : Σ ε_i 2^{−u_i} ∈ [1 − 2^{−w}, 1]}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoInput {
    pub exponents: Vec<f64>,
    pub window: f64,
    pub normalizer: f64,
    pub mode: RhoMode,
}

/// Result = 2^z · #{distinct Σ ε_i x_i}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauInput {
    pub values: Vec<u64>,
    pub normalizer: f64,
}

fn fixed_terms(exponents: &[f64]) -> Result<Vec<i64>> {
    exponents
        .iter()
        .map(|&u| {
            if !u.is_finite() || u <= 0.0 {
                return domain(format!("rho exponents must be finite and > 0, got {u}"));
            }
            Ok(((-u).exp2() * ONE as f64).round() as i64)
        })
        .collect()
}

fn fixed_window(w: f64) -> Result<(i64, i64)> {
    if w.is_nan() {
        return domain("rho window exponent is NaN");
    }
    let width = ((-w).exp2() * ONE as f64).round();
    let lo = if width >= ONE as f64 { i64::MIN / 4 } else { ONE - width as i64 - SLOP };
    Ok((lo, ONE + SLOP))
}

fn rho_brute(terms: &[i64], lo: i64, hi: i64) -> u64 {
    let m = terms.len();
    let mut sum = 0i64;
    let mut count = u64::from(lo <= 0 && 0 <= hi);
    // Gray code: flip one bit per step
    for g in 1u64..(1u64 << m) {
        let bit = g.trailing_zeros() as usize;
        if ((g ^ (g >> 1)) >> bit) & 1 == 1 {
            sum += terms[bit];
        } else {
            sum -= terms[bit];
        }
        count += u64::from(lo <= sum && sum <= hi);
    }
    count
}

/// Sorted list of all subset sums of `terms`.
fn sorted_subset_sums(terms: &[i64]) -> Vec<i64> {
    let mut sums = Vec::with_capacity(1 << terms.len());
    sums.push(0i64);
    let mut merged = Vec::with_capacity(1 << terms.len());
    for &t in terms {
        merged.clear();
        let (mut a, mut b) = (0, 0);
        let n = sums.len();
        while a < n || b < n {
            if b == n || (a < n && sums[a] <= sums[b] + t) {
                merged.push(sums[a]);
                a += 1;
            } else {
                merged.push(sums[b] + t);
                b += 1;
            }
        }
        std::mem::swap(&mut sums, &mut merged);
    }
    sums
}

fn rho_mitm(terms: &[i64], lo: i64, hi: i64) -> u64 {
    let h = terms.len() / 2;
    let left = sorted_subset_sums(&terms[..h]);
    let right = sorted_subset_sums(&terms[h..]);
    // walk right sums downward; the window [lo − r, hi − r] moves upward
    let (mut a, mut b) = (0usize, 0usize);
    let mut count = 0u64;
    for &r in right.iter().rev() {
        while a < left.len() && left[a] < lo - r {
            a += 1;
        }
        while b < left.len() && left[b] <= hi - r {
            b += 1;
        }
        count += (b.max(a) - a) as u64;
    }
    count
}

/// Number of ε with Σ ε_i 2^{−u_i} ∈ [1 − 2^{−w}, 1].
pub fn rho_raw_count(exponents: &[f64], window: f64, engine: RhoEngine, limits: &EngineLimits) -> Result<u64> {
    let m = exponents.len();
    match engine {
        RhoEngine::Brute if m > limits.rho_brute_max => {
            return capacity(format!("brute-force rho supports m <= {}, got {m}", limits.rho_brute_max))
        }
        RhoEngine::Mitm if m > limits.rho_mitm_max => {
            return capacity(format!("meet-in-the-middle rho supports m <= {}, got {m}", limits.rho_mitm_max))
        }
        _ => {}
    }
    let terms = fixed_terms(exponents)?;
    let (lo, hi) = fixed_window(window)?;
    Ok(match engine {
        RhoEngine::Brute => rho_brute(&terms, lo, hi),
        RhoEngine::Mitm => rho_mitm(&terms, lo, hi),
    })
}

pub fn rho_count(inp: &RhoInput, engine: RhoEngine) -> Result<f64> {
    rho_count_with(inp, engine, &EngineLimits::default())
}

pub fn rho_count_with(inp: &RhoInput, engine: RhoEngine, limits: &EngineLimits) -> Result<f64> {
    let c = rho_raw_count(&inp.exponents, inp.window, engine, limits)?;
    Ok(inp.normalizer.exp2() * c as f64)
}

/// Brute force for small inputs, meet-in-the-middle otherwise.
pub fn auto_rho_engine(m: usize) -> RhoEngine {
    if m <= 12 {
        RhoEngine::Brute
    } else {
        RhoEngine::Mitm
    }
}

/// Reusable reachability bitmap.
#[derive(Debug, Default, Clone)]
pub struct Bitset {
    words: Vec<u64>,
    nbits: u64,
    /// highest word index that may be nonzero
    top: usize,
}

impl Bitset {
    /// Clear and resize to hold bits 0..nbits, with only bit 0 set.
    pub fn reset(&mut self, nbits: u64) -> Result<()> {
        let nw = nbits.div_ceil(64) as usize;
        if self.words.len() < nw {
            self.words
                .try_reserve(nw - self.words.len())
                .map_err(|_| Error::Resource(format!("cannot allocate a {nbits}-bit bitmap")))?;
            self.words.resize(nw, 0);
        }
        let used = (self.top + 1).min(self.words.len());
        self.words[..used].fill(0);
        self.nbits = nbits;
        self.top = 0;
        self.words[0] = 1;
        Ok(())
    }

    fn nwords(&self) -> usize {
        self.nbits.div_ceil(64) as usize
    }

    /// self |= self << shift, clipped to nbits.
    pub fn or_shifted(&mut self, shift: u64) {
        let nw = self.nwords();
        let q = (shift / 64) as usize;
        let r = (shift % 64) as u32;
        if q >= nw {
            return;
        }
        let hi = (self.top + q + 1).min(nw - 1);
        let w = &mut self.words;
        for i in (q..=hi).rev() {
            let mut v = if i - q <= self.top { w[i - q] << r } else { 0 };
            if r != 0 && i > q && i - q - 1 <= self.top {
                v |= w[i - q - 1] >> (64 - r);
            }
            w[i] |= v;
        }
        self.top = hi;
        let rem = self.nbits % 64;
        if rem != 0 {
            w[nw - 1] &= (1u64 << rem) - 1;
        }
        while self.top > 0 && w[self.top] == 0 {
            self.top -= 1;
        }
    }

    pub fn get(&self, bit: u64) -> bool {
        let i = (bit / 64) as usize;
        i <= self.top && (self.words[i] >> (bit % 64)) & 1 == 1
    }

    /// Words 0..=top; bits past nbits are zero.
    pub fn active_words(&self) -> &[u64] {
        &self.words[..=self.top]
    }

    pub fn count_ones(&self) -> u64 {
        self.words[..=self.top].iter().map(|w| u64::from(w.count_ones())).sum()
    }
}

/// Number of distinct subset sums, brute force.
pub fn tau_distinct_brute(values: &[u64]) -> u64 {
    let mut sums = Vec::with_capacity(1 << values.len());
    sums.push(0u64);
    for &v in values {
        let n = sums.len();
        for i in 0..n {
            let s = sums[i] + v;
            sums.push(s);
        }
    }
    sums.sort_unstable();
    sums.dedup();
    sums.len() as u64
}

/// Number of distinct subset sums by bitmap reachability.
pub fn tau_distinct_bitset(values: &[u64], scratch: &mut Bitset) -> Result<u64> {
    let total: u64 = values.iter().sum();
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    scratch.reset(total + 1)?;
    for &v in &sorted {
        scratch.or_shifted(v);
    }
    Ok(scratch.count_ones())
}

/// dst |= src shifted by `off` bits (either sign), clipped to dst.
fn or_into(dst: &mut [u64], src: &[u64], off: i64) {
    let nd = dst.len() as i64;
    for (i, &w) in src.iter().enumerate() {
        let base = 64 * i as i64 + off;
        if base + 64 <= 0 {
            continue;
        }
        let q = base.div_euclid(64);
        if q >= nd {
            break;
        }
        let r = base.rem_euclid(64) as u32;
        if q >= 0 {
            dst[q as usize] |= w << r;
        }
        if r != 0 && q + 1 < nd {
            dst[(q + 1) as usize] |= w >> (64 - r);
        }
    }
}

/// Prefix length for the dense part, minimizing a rough word-operation
/// count: the prefix bitmap costs Σ S_i/64, each of the at most 2^{m−j}
/// suffix sums costs a sort-and-scan step, and a translate of the prefix
/// bitmap is only paid for when it overlaps a neighbour, guessed as the
/// fraction of the total span the translates cover.
fn split_point(sorted: &[u64], cap: u64, max_upper: usize) -> Option<usize> {
    let m = sorted.len();
    let mut best: Option<(f64, usize)> = None;
    let total: f64 = sorted.iter().map(|&v| v as f64).sum();
    let mut prefix = 0u64;
    let mut dense = 0.0;
    for j in 0..=m {
        if j > 0 {
            prefix = match prefix.checked_add(sorted[j - 1]) {
                Some(p) if p < cap => p,
                _ => break,
            };
            dense += prefix as f64 / 64.0 + 1.0;
        }
        if m - j > max_upper {
            continue;
        }
        let translates = ((m - j) as f64).exp2();
        let overlap = (translates * prefix as f64 / total).min(1.0);
        let cost = if j == m { dense } else { dense + translates * (overlap * prefix as f64 / 64.0 + 8.0) };
        if best.is_none_or(|b| cost < b.0) {
            best = Some((cost, j));
        }
    }
    best.map(|b| b.1)
}

/// Sorted distinct subset sums, by merging S with S + v for each v.
fn distinct_sorted_sums(values: &[u64]) -> Result<Vec<u64>> {
    let mut sums = vec![0u64];
    let mut merged = Vec::new();
    for &v in values {
        if sums.last().and_then(|x| x.checked_add(v)).is_none() {
            return capacity("tau value sum overflows u64");
        }
        merged.clear();
        merged.reserve(2 * sums.len());
        let n = sums.len();
        let (mut a, mut b) = (0, 0);
        while a < n || b < n {
            let x = if b == n || (a < n && sums[a] <= sums[b] + v) {
                a += 1;
                sums[a - 1]
            } else {
                b += 1;
                sums[b - 1] + v
            };
            if merged.last() != Some(&x) {
                merged.push(x);
            }
        }
        std::mem::swap(&mut sums, &mut merged);
    }
    Ok(sums)
}

/// Distinct subset sums with bounded memory.
///
/// Small totals go straight to the bitmap. Otherwise the sorted values are
/// split into a prefix whose sums fit a bitmap A and a short suffix whose
/// distinct sums form a sorted list B; the answer is |A + B|, counted over
/// clusters of overlapping translates A + b.
pub fn tau_distinct_split(values: &[u64], limits: &EngineLimits, scratch: &mut Bitset) -> Result<u64> {
    let cap = limits.tau_dense_max_bits.max(64);
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let Some(j) = split_point(&sorted, cap, limits.tau_split_max_upper) else {
        return capacity(format!(
            "tau needs more than {} values above a {cap}-bit bitmap",
            limits.tau_split_max_upper
        ));
    };
    if j == sorted.len() {
        return tau_distinct_bitset(&sorted, scratch);
    }
    let low_sum: u64 = sorted[..j].iter().sum();
    let upper = &sorted[j..];
    let b = distinct_sorted_sums(upper)?;
    scratch.reset(low_sum + 1)?;
    for &v in &sorted[..j] {
        scratch.or_shifted(v);
    }
    let a = scratch.active_words();
    let a_count = scratch.count_ones();
    let mut count = 0u64;
    let mut local: Vec<u64> = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let start = b[i];
        let mut end = start + low_sum;
        let mut k = i + 1;
        while k < b.len() && b[k] <= end {
            end = b[k] + low_sum;
            k += 1;
        }
        if k == i + 1 {
            count += a_count;
        } else {
            // window through the cluster so no bitmap exceeds the cap
            let mut w0 = start;
            let mut first = i;
            while w0 <= end {
                let w1 = end.min(w0 + (cap - 1));
                local.clear();
                local.resize((w1 - w0 + 1).div_ceil(64) as usize, 0);
                while first < k && b[first] + low_sum < w0 {
                    first += 1;
                }
                for &x in b[first..k].iter().take_while(|&&x| x <= w1) {
                    or_into(&mut local, a, x as i64 - w0 as i64);
                }
                let tail = (w1 - w0 + 1) % 64;
                if tail != 0 {
                    *local.last_mut().expect("nonempty window") &= (1u64 << tail) - 1;
                }
                count += local.iter().map(|w| u64::from(w.count_ones())).sum::<u64>();
                if w1 == end {
                    break;
                }
                w0 = w1 + 1;
            }
        }
        i = k;
    }
    Ok(count)
}

pub fn tau_count(inp: &TauInput, engine: TauEngine) -> Result<f64> {
    tau_count_with(inp, engine, &EngineLimits::default(), &mut Bitset::default())
}

pub fn tau_count_with(inp: &TauInput, engine: TauEngine, limits: &EngineLimits, scratch: &mut Bitset) -> Result<f64> {
    if inp.values.contains(&0) {
        return domain("tau values must be positive integers");
    }
    let m = inp.values.len();
    let count = match engine {
        TauEngine::Brute => {
            if m > limits.tau_brute_max {
                return capacity(format!("brute-force tau supports m <= {}, got {m}", limits.tau_brute_max));
            }
            tau_distinct_brute(&inp.values)
        }
        TauEngine::Bitset => tau_distinct_split(&inp.values, limits, scratch)?,
    };
    Ok(inp.normalizer.exp2() * count as f64)
}

/// ρ_u(ℓ) on a sorted arrival sequence: the first ℓ arrivals, window u_ℓ,
/// normalizer 2^{u_ℓ − ℓ}.
pub fn rho_plain(sorted_u: &[f64], ell: usize) -> Result<f64> {
    if ell == 0 {
        return Ok(1.0);
    }
    if sorted_u.len() < ell {
        return domain(format!("rho_u({ell}) needs {ell} arrivals, got {}", sorted_u.len()));
    }
    let u_l = sorted_u[ell - 1];
    let inp = RhoInput {
        exponents: sorted_u[..ell].to_vec(),
        window: u_l,
        normalizer: u_l - ell as f64,
        mode: RhoMode::Plain,
    };
    rho_count(&inp, auto_rho_engine(ell))
}

/// ρ*_{u|β}(ℓ): all arrivals in cells i ≤ ℓ, window 2^{−ℓ}, normalizer
/// 2^{−β(ℓ)}; ρ*(0) = 1.
pub fn rho_star(proc: &ConditionedUpper, ell: usize) -> Result<f64> {
    if ell == 0 {
        return Ok(1.0);
    }
    if ell > proc.len() {
        return domain(format!("rho_star({ell}) needs a process of length >= {ell}, got {}", proc.len()));
    }
    let inp = RhoInput {
        exponents: proc.arrivals_upto(ell),
        window: ell as f64,
        normalizer: -(proc.walk().beta(ell) as f64),
        mode: RhoMode::Star,
    };
    rho_count(&inp, auto_rho_engine(inp.exponents.len()))
}

/// ρ_{u|β}(ℓ) with the partial-cell bookkeeping made explicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoUnstar {
    pub value: f64,
    pub ell_prime: usize,
    pub r: usize,
    /// set if r exceeded the arrivals in cell ℓ′ and was clamped
    pub clamped: bool,
}

/// ρ_{u|β}(ℓ): ℓ′ is minimal with ℓ′ + β(ℓ′) ≥ ℓ and r = ℓ − (ℓ′ − 1 + β(ℓ′ − 1)).
/// Uses every arrival in cells before ℓ′ and the r smallest in cell ℓ′.
pub fn rho_unstar_detailed(proc: &ConditionedUpper, ell: usize) -> Result<RhoUnstar> {
    if ell == 0 {
        return Ok(RhoUnstar { value: 1.0, ell_prime: 0, r: 0, clamped: false });
    }
    let w = proc.walk();
    let reach = |j: usize| j as i64 + w.beta(j);
    let Some(lp) = (1..=proc.len()).find(|&j| reach(j) >= ell as i64) else {
        return domain(format!(
            "rho_unstar({ell}) needs a longer process: no l' <= {} has l' + beta(l') >= {ell}",
            proc.len()
        ));
    };
    let before = reach(lp - 1) as usize;
    let mut r = ell - before;
    let mut cell = proc.cell(lp).to_vec();
    cell.sort_by(f64::total_cmp);
    let clamped = r > cell.len();
    if clamped {
        r = cell.len();
    }
    let mut exps = proc.arrivals_upto(lp - 1);
    exps.extend_from_slice(&cell[..r]);
    let u_star = if r > 0 { cell[r - 1] } else { exps.iter().copied().fold(0.0, f64::max) };
    let inp = RhoInput {
        exponents: exps,
        window: u_star,
        normalizer: u_star - ell as f64,
        mode: RhoMode::PartialCell,
    };
    let value = rho_count(&inp, auto_rho_engine(inp.exponents.len()))?;
    Ok(RhoUnstar { value, ell_prime: lp, r, clamped })
}

pub fn rho_unstar(proc: &ConditionedUpper, ell: usize) -> Result<f64> {
    rho_unstar_detailed(proc, ell).map(|r| r.value)
}

/// τ*_{x|β′}(ℓ): values in cells i ≤ ℓ, normalizer 2^{β′(ℓ) − ℓ}; τ*(0) = 1.
pub fn tau_star(proc: &ConditionedLower, ell: usize) -> Result<f64> {
    if ell == 0 {
        return Ok(1.0);
    }
    if ell > proc.len() {
        return domain(format!("tau_star({ell}) needs a process of length >= {ell}, got {}", proc.len()));
    }
    let inp = TauInput {
        values: proc.values_upto(ell),
        normalizer: (proc.walk().beta(ell) - ell as i64) as f64,
    };
    tau_count(&inp, TauEngine::Bitset)
}

/// τ_{x|β′}(ℓ): the ℓ smallest values, normalizer 2^{−ℓ}; τ(0) = 1.
pub fn tau_unstar(proc: &ConditionedLower, ell: usize) -> Result<f64> {
    if ell == 0 {
        return Ok(1.0);
    }
    let mut all = proc.values_upto(proc.len());
    if all.len() < ell {
        return domain(format!(
            "tau_unstar({ell}) needs a longer process: only {} values in {} cells",
            all.len(),
            proc.len()
        ));
    }
    all.sort_unstable();
    all.truncate(ell);
    tau_count(&TauInput { values: all, normalizer: -(ell as f64) }, TauEngine::Bitset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::{sample_conditioned_lower, sample_conditioned_upper};
    use crate::rngkit::StreamSeed;
    use crate::walks::{sample_walk, WalkKind};

    fn naive_rho(u: &[f64], w: f64) -> u64 {
        let terms = fixed_terms(u).unwrap();
        let (lo, hi) = fixed_window(w).unwrap();
        (0u64..1 << u.len())
            .filter(|e| {
                let s: i64 = (0..u.len()).filter(|i| e >> i & 1 == 1).map(|i| terms[i]).sum();
                lo <= s && s <= hi
            })
            .count() as u64
    }

    #[test]
    fn integer_exponents_hit_once() {
        for l in 1..=10 {
            let u: Vec<f64> = (1..=l).map(f64::from).collect();
            let inp = RhoInput { exponents: u.clone(), window: l as f64, normalizer: 0.0, mode: RhoMode::Plain };
            assert_eq!(rho_count(&inp, RhoEngine::Brute).unwrap(), 1.0);
            assert_eq!(rho_count(&inp, RhoEngine::Mitm).unwrap(), 1.0);
            assert_eq!(rho_plain(&u, l as usize).unwrap(), 1.0);
            assert_eq!(naive_rho(&u, l as f64), 1);
        }
    }

    #[test]
    fn single_half_exponent() {
        let v = rho_plain(&[0.5], 1).unwrap();
        assert!((v - 2f64.powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn gray_code_matches_naive() {
        let mut s = StreamSeed::new(1, 0).stream();
        for _ in 0..300 {
            let m = 1 + s.below(12) as usize;
            let mut u: Vec<f64> = (0..m).map(|_| 0.05 + 4.0 * s.next_f64()).collect();
            u.sort_by(f64::total_cmp);
            let w = 0.1 + 3.0 * s.next_f64();
            let t = fixed_terms(&u).unwrap();
            let (lo, hi) = fixed_window(w).unwrap();
            assert_eq!(rho_brute(&t, lo, hi), naive_rho(&u, w));
            assert_eq!(rho_mitm(&t, lo, hi), naive_rho(&u, w));
        }
    }

    #[test]
    fn rho_capacity_and_domain() {
        let l = EngineLimits::default();
        assert!(matches!(rho_raw_count(&[1.0; 27], 1.0, RhoEngine::Brute, &l), Err(Error::Capacity(_))));
        assert!(matches!(rho_raw_count(&[1.0; 53], 1.0, RhoEngine::Mitm, &l), Err(Error::Capacity(_))));
        assert!(matches!(rho_raw_count(&[0.0], 1.0, RhoEngine::Brute, &l), Err(Error::Domain(_))));
    }

    #[test]
    fn tau_examples() {
        let t = tau_count(&TauInput { values: vec![2, 4, 8], normalizer: -3.0 }, TauEngine::Bitset).unwrap();
        assert_eq!(t, 1.0);
        let t = tau_count(&TauInput { values: vec![1, 1, 1], normalizer: -3.0 }, TauEngine::Brute).unwrap();
        assert_eq!(t, 0.5);
        let t = tau_count(&TauInput { values: vec![1, 1, 1], normalizer: -3.0 }, TauEngine::Bitset).unwrap();
        assert_eq!(t, 0.5);
        assert!(tau_count(&TauInput { values: vec![0, 1], normalizer: 0.0 }, TauEngine::Bitset).is_err());
        let big = TauInput { values: vec![1 << 40], normalizer: -1.0 };
        assert_eq!(tau_count(&big, TauEngine::Bitset).unwrap(), 1.0);
        let many = TauInput { values: (0..23).map(|i| (1u64 << 40) + i).collect(), normalizer: 0.0 };
        assert!(matches!(tau_count(&many, TauEngine::Bitset), Err(Error::Capacity(_))));
    }

    #[test]
    fn bitset_reuse_and_shifts() {
        let mut b = Bitset::default();
        for vals in [vec![3u64, 5, 7, 64, 130], vec![1, 2], vec![100, 200, 300, 1000]] {
            let got = tau_distinct_bitset(&vals, &mut b).unwrap();
            assert_eq!(got, tau_distinct_brute(&vals), "{vals:?}");
        }
    }

    fn upper_proc(seed: u64, len: usize) -> ConditionedUpper {
        let mut s = StreamSeed::new(seed, 0).stream();
        let w = sample_walk(WalkKind::Upper, len, &mut s);
        sample_conditioned_upper(&w, &mut s).unwrap()
    }

    fn lower_proc(seed: u64, len: usize) -> ConditionedLower {
        let mut s = StreamSeed::new(seed, 1).stream();
        let w = sample_walk(WalkKind::Lower, len, &mut s);
        sample_conditioned_lower(&w, &mut s).unwrap()
    }

    #[test]
    fn star_conventions() {
        let p = upper_proc(1, 10);
        let q = lower_proc(1, 10);
        assert_eq!(rho_star(&p, 0).unwrap(), 1.0);
        assert_eq!(tau_star(&q, 0).unwrap(), 1.0);
        assert_eq!(rho_unstar(&p, 0).unwrap(), 1.0);
        assert_eq!(tau_unstar(&q, 0).unwrap(), 1.0);
    }

    #[test]
    fn tau_star_monotone_and_shift_identity() {
        for seed in 0..2000 {
            let q = lower_proc(seed, 16);
            let mut prev = 1.0;
            for ell in 0..=16 {
                let ts = tau_star(&q, ell).unwrap();
                assert!(ts <= prev, "seed {seed}, ell {ell}");
                prev = ts;
                let shift = ell as i64 - q.walk().beta(ell);
                assert_eq!(ts, tau_unstar(&q, shift as usize).unwrap());
            }
        }
    }

    #[test]
    fn tau_unstar_monotone() {
        for seed in 0..500 {
            let q = lower_proc(seed, 24);
            let avail = q.values_upto(24).len();
            let mut prev = 1.0;
            for ell in 0..=avail.min(20) {
                let t = tau_unstar(&q, ell).unwrap();
                assert!(t <= prev);
                prev = t;
            }
        }
    }

    #[test]
    fn rho_unstar_equals_plain_on_sorted_arrivals() {
        for seed in 0..500 {
            let p = upper_proc(seed, 20);
            let sorted = p.sorted_arrivals();
            for ell in 1..=12.min(sorted.len()) {
                let d = rho_unstar_detailed(&p, ell).unwrap();
                assert!(!d.clamped);
                let plain = rho_plain(&sorted, ell).unwrap();
                assert!((d.value - plain).abs() <= 1e-12 * plain.max(1.0));
                assert!(d.value >= 0.0);
                assert!(d.value <= sorted[ell - 1].exp2() + 1e-9);
            }
        }
    }

    #[test]
    fn rho_unstar_needs_length() {
        let w = crate::walks::Walk::from_increments(WalkKind::Upper, &[-1, 0, 0]).unwrap();
        let p = sample_conditioned_upper(&w, &mut StreamSeed::new(1, 1).stream()).unwrap();
        assert!(matches!(rho_unstar(&p, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn split_tau_matches_brute() {
        let mut s = StreamSeed::new(44, 0).stream();
        let mut scratch = Bitset::default();
        for case in 0..3000 {
            let m = 1 + s.below(14) as usize;
            let vals: Vec<u64> = if case % 2 == 0 {
                (0..m).map(|i| 1 + s.below(3u64 << i)).collect()
            } else {
                (0..m).map(|_| 1 + s.below(200)).collect()
            };
            let limits = EngineLimits { tau_dense_max_bits: 64 << s.below(4), ..EngineLimits::default() };
            let got = tau_distinct_split(&vals, &limits, &mut scratch).unwrap();
            assert_eq!(got, tau_distinct_brute(&vals), "{vals:?}");
        }
    }

    #[test]
    fn split_tau_handles_huge_values() {
        let vals = [3u64, 5, 9, 1 << 40, (1 << 40) + 3, 1 << 50];
        let got = tau_distinct_split(&vals, &EngineLimits::default(), &mut Bitset::default()).unwrap();
        assert_eq!(got, tau_distinct_brute(&vals));
    }
}
