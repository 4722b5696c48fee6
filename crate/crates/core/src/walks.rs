//! Integer walks with Pois(1) − 1 (upper) and 1 − Pois(1) (lower) steps.
//!
//! Besides plain sampling this covers the index functions R (boundedness)
//! and T (positivity), the jump-step detector, conditioning on
//! min β ≥ −m, and the empirical checks on h(m), the local limit law,
//! ladder heights and the large-deviation envelope.

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::rngkit::{merge_in_order, Accumulator, MCEstimate, McPlan, Stream, StreamSeed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkKind {
    Upper,
    Lower,
}

impl WalkKind {
    #[inline]
    pub fn step(self, s: &mut Stream) -> i64 {
        let p = s.pois1() as i64;
        match self {
            WalkKind::Upper => p - 1,
            WalkKind::Lower => 1 - p,
        }
    }

    fn salt(self) -> u32 {
        match self {
            WalkKind::Upper => 0,
            WalkKind::Lower => 1,
        }
    }
}

impl std::str::FromStr for WalkKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" => Ok(WalkKind::Upper),
            "lower" => Ok(WalkKind::Lower),
            _ => domain(format!("walk kind must be upper or lower, got {s}")),
        }
    }
}

/// The exponents κ and η of the boundedness and positivity conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WalkParams {
    pub kappa: f64,
    pub eta: f64,
}

impl WalkParams {
    pub const DEFAULT: WalkParams = WalkParams { kappa: 0.01, eta: 0.01 };
}

impl Default for WalkParams {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// A lattice path β(0..=N) with β(0) = 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Walk {
    kind: WalkKind,
    values: Vec<i64>,
    min: i64,
    argmin: usize,
}

impl Walk {
    /// Build from β(0..=N). Fails if β(0) ≠ 0 or an increment is outside
    /// the support of the kind.
    pub fn from_values(kind: WalkKind, values: Vec<i64>) -> Result<Walk> {
        if values.first() != Some(&0) {
            return domain("a walk starts at beta(0) = 0");
        }
        for (i, pair) in values.windows(2).enumerate() {
            let xi = pair[1] - pair[0];
            let ok = match kind {
                WalkKind::Upper => xi >= -1,
                WalkKind::Lower => xi <= 1,
            };
            if !ok {
                return domain(format!("increment {xi} at step {} not allowed for a {kind:?} walk", i + 1));
            }
        }
        Ok(Self::new_unchecked(kind, values))
    }

    pub fn from_increments(kind: WalkKind, xi: &[i64]) -> Result<Walk> {
        let mut values = Vec::with_capacity(xi.len() + 1);
        values.push(0);
        let mut b = 0;
        for &x in xi {
            b += x;
            values.push(b);
        }
        Self::from_values(kind, values)
    }

    fn new_unchecked(kind: WalkKind, values: Vec<i64>) -> Walk {
        let (mut min, mut argmin) = (values[0], 0);
        for (i, &v) in values.iter().enumerate() {
            if v < min {
                min = v;
                argmin = i;
            }
        }
        Walk { kind, values, min, argmin }
    }

    pub fn kind(&self) -> WalkKind {
        self.kind
    }

    /// Number of steps N.
    pub fn len(&self) -> usize {
        self.values.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn beta(&self, i: usize) -> i64 {
        self.values[i]
    }

    /// ξ_i = β(i) − β(i−1), for 1 ≤ i ≤ N.
    pub fn xi(&self, i: usize) -> i64 {
        self.values[i] - self.values[i - 1]
    }

    pub fn increments(&self) -> impl Iterator<Item = i64> + '_ {
        self.values.windows(2).map(|p| p[1] - p[0])
    }

    /// min over 0 ≤ q ≤ N.
    pub fn min(&self) -> i64 {
        self.min
    }

    /// First q attaining the minimum.
    pub fn argmin(&self) -> usize {
        self.argmin
    }

    /// min over 1 ≤ i ≤ n (the conditioning event uses this range).
    pub fn min_after_start(&self, n: usize) -> i64 {
        self.values[1..=n].iter().copied().min().unwrap_or(0)
    }

    /// The first n steps.
    pub fn prefix(&self, n: usize) -> Walk {
        Walk::new_unchecked(self.kind, self.values[..=n].to_vec())
    }
}

/// Walk of N i.i.d. steps.
pub fn sample_walk(kind: WalkKind, n: usize, stream: &mut Stream) -> Walk {
    let mut values = Vec::with_capacity(n + 1);
    let mut b = 0;
    values.push(0);
    for _ in 0..n {
        b += kind.step(stream);
        values.push(b);
    }
    Walk::new_unchecked(kind, values)
}

fn check_len(w: &Walk, l: usize) -> Result<()> {
    if l > w.len() {
        return domain(format!("L = {l} exceeds walk length {}", w.len()));
    }
    Ok(())
}

/// Smallest integer R ≥ 1 with |ξ_i| ≤ R·i^κ for all i ≤ L.
pub fn r_bounded_index(w: &Walk, l: usize, params: WalkParams) -> Result<u64> {
    check_len(w, l)?;
    let mut r = 1u64;
    for i in 1..=l {
        let a = w.xi(i).unsigned_abs() as f64;
        let p = (i as f64).powf(params.kappa);
        let ok = |r: u64| a <= r as f64 * p;
        let mut ri = (a / p).ceil().max(0.0) as u64;
        while ri > 0 && ok(ri - 1) {
            ri -= 1;
        }
        while !ok(ri) {
            ri += 1;
        }
        r = r.max(ri);
    }
    Ok(r)
}

/// Smallest integer T ≥ 0 with −T + ℓ^{1/2−η} ≤ β(ℓ) ≤ T + ℓ^{1/2+η} for ℓ ≤ L.
pub fn t_positive_index(w: &Walk, l: usize, params: WalkParams) -> Result<u64> {
    check_len(w, l)?;
    let mut t = 0u64;
    for ell in 0..=l {
        let b = w.beta(ell) as f64;
        let lo = (ell as f64).powf(0.5 - params.eta);
        let hi = (ell as f64).powf(0.5 + params.eta);
        let ok = |t: u64| -(t as f64) + lo <= b && b <= t as f64 + hi;
        let mut tl = (lo - b).max(b - hi).ceil().max(0.0) as u64;
        while tl > 0 && ok(tl - 1) {
            tl -= 1;
        }
        while !ok(tl) {
            tl += 1;
        }
        t = t.max(tl);
    }
    Ok(t)
}

/// Smallest V-jump step t ∈ [t_min, t_max], if any.
///
/// t qualifies when 1 + ξ_t = V, β(t+ℓ) − β(t) ≥ ℓ^{1/2−2η} for
/// 0 ≤ ℓ ≤ N − t, and ξ_{t+ℓ} ≤ ℓ^{2κ} for 1 ≤ ℓ ≤ N − t.
pub fn find_jump_step(w: &Walk, v: i64, t_min: usize, t_max: usize, params: WalkParams) -> Result<Option<usize>> {
    let n = w.len();
    if t_min < 1 || t_min > t_max || t_max > n {
        return domain(format!("need 1 <= t_min <= t_max <= N, got {t_min}, {t_max}, N = {n}"));
    }
    'outer: for t in t_min..=t_max {
        if 1 + w.xi(t) != v {
            continue;
        }
        for ell in 1..=n - t {
            let l = ell as f64;
            if ((w.beta(t + ell) - w.beta(t)) as f64) < l.powf(0.5 - 2.0 * params.eta) {
                continue 'outer;
            }
            if (w.xi(t + ell) as f64) > l.powf(2.0 * params.kappa) {
                continue 'outer;
            }
        }
        return Ok(Some(t));
    }
    Ok(None)
}

/// Runs a fresh walk for up to `n` steps; returns β(n) if min_{1≤i≤n} β(i) ≥ −m.
#[inline]
fn survive_endpoint(kind: WalkKind, m: i64, n: usize, s: &mut Stream) -> Option<i64> {
    let mut b = 0i64;
    for _ in 0..n {
        b += kind.step(s);
        if b < -m {
            return None;
        }
    }
    Some(b)
}

const SALT_H: u32 = 0x5741_0001;
const SALT_LLT: u32 = 0x5741_0002;
const SALT_LADDER: u32 = 0x5741_0003;
const SALT_LADDER_LOWER: u32 = 0x5741_0004;
const SALT_ENVELOPE: u32 = 0x5741_0005;
const SALT_HT: u32 = 0x5741_0006;
const SALT_HT_REF: u32 = 0x5741_0007;
const SALT_REVERSAL: u32 = 0x5741_0008;

/// Monte Carlo estimate of N^{1/2} P(min_{1≤i≤N} β(i) ≥ −m).
pub fn h_estimate(kind: WalkKind, m: u64, n: usize, plan: &McPlan) -> MCEstimate {
    let scale = (n as f64).sqrt();
    let salt = SALT_H ^ (kind.salt() << 16) ^ (m as u32);
    plan.estimate(salt, |s| if survive_endpoint(kind, m as i64, n, s).is_some() { scale } else { 0.0 })
}

/// h(m) = (2/π)^{1/2}(m + 1) for the upper walk.
pub fn h_upper_closed_form(m: u64) -> f64 {
    crate::constants::sqrt_2_over_pi() * (m as f64 + 1.0)
}

/// h′(0) = e/√(2π) for the lower walk.
pub fn h_lower_at_zero() -> f64 {
    std::f64::consts::E / (2.0 * std::f64::consts::PI).sqrt()
}

/// One path of length N from the h-transformed upper chain, i.e. the upper
/// walk conditioned to stay ≥ −m forever.
///
/// From height c with y = m + 1 + c the kernel P(ξ = r)(y + r)/y splits as
/// a mixture: with probability (y − 1)/y take ξ = Pois(1) − 1, otherwise
/// the size-biased step ξ = Pois(1).
pub fn sample_htransform_upper(m: u64, n: usize, stream: &mut Stream) -> Walk {
    let mut values = Vec::with_capacity(n + 1);
    values.push(0);
    let mut c = 0i64;
    for _ in 0..n {
        let y = (m as i64 + 1 + c) as u64;
        let j = stream.pois1() as i64;
        let r = if stream.below(y) < y - 1 { j - 1 } else { j };
        c += r;
        values.push(c);
    }
    Walk::new_unchecked(WalkKind::Upper, values)
}

/// A walk of N steps conditioned on min_{1≤i≤horizon} β(i) ≥ −m by
/// rejection; returns the first N steps and the number of attempts.
pub fn sample_conditioned_walk_rejection(
    kind: WalkKind,
    m: u64,
    n: usize,
    horizon: usize,
    budget: u64,
    stream: &mut Stream,
) -> Result<(Walk, u64)> {
    if horizon < n {
        return domain(format!("horizon {horizon} shorter than path length {n}"));
    }
    let m = m as i64;
    let mut values = Vec::with_capacity(n + 1);
    for attempt in 1..=budget {
        values.clear();
        values.push(0);
        let mut b = 0i64;
        let mut ok = true;
        for i in 0..horizon {
            b += kind.step(stream);
            if b < -m {
                ok = false;
                break;
            }
            if i < n {
                values.push(b);
            }
        }
        if ok {
            return Ok((Walk::new_unchecked(kind, values), attempt));
        }
    }
    Err(Error::Resource(format!(
        "no accepted path in {budget} attempts (m = {m}, N = {n}, horizon = {horizon}; observed acceptance rate 0)"
    )))
}

/// Rough lower guess of the survival probability, used to size budgets.
fn acceptance_guess(m: u64, n: usize) -> f64 {
    (0.5 * (m as f64 + 1.0) / (n as f64).sqrt()).min(1.0)
}

/// A walk with min_{1≤i≤N} β(i) ≥ −m: the h-transform chain for the upper
/// kind, rejection against the unconditioned walk for the lower kind.
pub fn sample_conditioned_walk(kind: WalkKind, m: u64, n: usize, stream: &mut Stream) -> Result<Walk> {
    match kind {
        WalkKind::Upper => Ok(sample_htransform_upper(m, n, stream)),
        WalkKind::Lower => {
            let budget = (200.0 / acceptance_guess(m, n)).ceil() as u64;
            sample_conditioned_walk_rejection(kind, m, n, n, budget, stream).map(|(w, _)| w)
        }
    }
}

/// Rayleigh density W(x) = x e^{−x²/2}, zero for x < 0.
pub fn rayleigh_w(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * (-0.5 * x * x).exp()
    }
}

/// (∫₀^∞ W, ∫₀^∞ W²) by quadrature.
pub fn rayleigh_integrals() -> (f64, f64) {
    let i1 = crate::quad::integrate(rayleigh_w, 0.0, 40.0, 400, 12);
    let i2 = crate::quad::integrate(|x| rayleigh_w(x).powi(2), 0.0, 40.0, 400, 12);
    (i1, i2)
}

#[derive(Debug, Clone, Serialize)]
pub struct HistBin {
    pub x: i64,
    pub count: u64,
    pub empirical: f64,
    pub proxy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LltReport {
    pub kind: WalkKind,
    pub m: u64,
    pub n: usize,
    pub n_accepted: u64,
    pub attempts: u64,
    pub tv_distance: f64,
    pub histogram: Vec<HistBin>,
}

/// Compares the law of β(N) given min_{1≤i≤N} β(i) ≥ −m with the Rayleigh
/// proxy W(x/√N)/√N renormalized over the observed support. The plan's
/// sample count is the number of accepted paths.
pub fn llt_check(kind: WalkKind, m: u64, n: usize, plan: &McPlan) -> Result<LltReport> {
    if n < 100 {
        return domain(format!("llt_check needs N >= 100, got {n}"));
    }
    let salt = SALT_LLT ^ (kind.salt() << 16) ^ (m as u32);
    let budget_per = (200.0 / acceptance_guess(m, n)).ceil() as u64;
    let parts = plan.run_blocks(salt, |_, s, count| {
        let mut ends = Vec::with_capacity(count as usize);
        let mut attempts = 0u64;
        let mut since = 0u64;
        while (ends.len() as u64) < count {
            attempts += 1;
            since += 1;
            if let Some(b) = survive_endpoint(kind, m as i64, n, s) {
                ends.push(b);
                since = 0;
            } else if since > budget_per {
                return Err(Error::Resource(format!(
                    "llt_check: {budget_per} consecutive rejections (acceptance so far {}/{attempts})",
                    ends.len()
                )));
            }
        }
        Ok((ends, attempts))
    });
    let mut all = Vec::new();
    let mut attempts = 0;
    for p in parts {
        let (e, a) = p?;
        all.extend(e);
        attempts += a;
    }
    let (tv, histogram) = rayleigh_tv(&all, n);
    Ok(LltReport { kind, m, n, n_accepted: all.len() as u64, attempts, tv_distance: tv, histogram })
}

fn rayleigh_tv(ends: &[i64], n: usize) -> (f64, Vec<HistBin>) {
    if ends.is_empty() {
        return (0.0, Vec::new());
    }
    let lo = *ends.iter().min().unwrap();
    let hi = *ends.iter().max().unwrap();
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for &e in ends {
        counts[(e - lo) as usize] += 1;
    }
    let sn = (n as f64).sqrt();
    let raw: Vec<f64> = (lo..=hi).map(|x| rayleigh_w(x as f64 / sn) / sn).collect();
    let z: f64 = raw.iter().sum();
    let total = ends.len() as f64;
    let mut tv = 0.0;
    let bins = (lo..=hi)
        .zip(counts.iter().zip(&raw))
        .map(|(x, (&c, &r))| {
            let e = c as f64 / total;
            let q = if z > 0.0 { r / z } else { 0.0 };
            tv += (e - q).abs();
            HistBin { x, count: c, empirical: e, proxy: q }
        })
        .collect();
    (0.5 * tv, bins)
}

/// Total variation distance between two empirical integer laws.
pub fn tv_distance(a: &[i64], b: &[i64]) -> f64 {
    use std::collections::BTreeMap;
    let mut h: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    for &x in a {
        h.entry(x).or_default().0 += 1.0 / na;
    }
    for &x in b {
        h.entry(x).or_default().1 += 1.0 / nb;
    }
    0.5 * h.values().map(|(p, q)| (p - q).abs()).sum::<f64>()
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionedTvReport {
    pub m: u64,
    pub n: usize,
    pub reference_horizon: usize,
    pub n_samples: u64,
    pub tv_distance: f64,
    pub reference_attempts: u64,
}

/// TV distance between the β(N) laws of the h-transform chain and of
/// rejection sampling conditioned on survival up to `horizon` ≥ N steps.
///
/// The h-transform conditions on survival forever, so the horizon has to
/// be long compared with N for the two laws to agree.
pub fn htransform_vs_rejection(m: u64, n: usize, horizon: usize, plan: &McPlan) -> Result<ConditionedTvReport> {
    let ht: Vec<i64> = plan
        .run_blocks(SALT_HT, |_, s, count| {
            (0..count).map(|_| sample_htransform_upper(m, n, s).beta(n)).collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect();
    let budget = (200.0 / acceptance_guess(m, horizon)).ceil() as u64;
    let mut attempts = 0;
    let mut rej = Vec::with_capacity(ht.len());
    for part in plan.run_blocks(SALT_HT_REF, |_, s, count| {
        let mut out = Vec::with_capacity(count as usize);
        let mut att = 0;
        for _ in 0..count {
            let (w, a) = sample_conditioned_walk_rejection(WalkKind::Upper, m, n, horizon, budget, s)?;
            att += a;
            out.push(w.beta(n));
        }
        Ok::<_, Error>((out, att))
    }) {
        let (o, a) = part?;
        attempts += a;
        rej.extend(o);
    }
    Ok(ConditionedTvReport {
        m,
        n,
        reference_horizon: horizon,
        n_samples: plan.n_samples,
        tv_distance: tv_distance(&ht, &rej),
        reference_attempts: attempts,
    })
}

/// TV distance between the laws of β(n) and −β′(n).
pub fn reversal_symmetry_tv(n: usize, plan: &McPlan) -> f64 {
    let draw = |kind: WalkKind, sign: i64| -> Vec<i64> {
        plan.run_blocks(SALT_REVERSAL ^ kind.salt(), |_, s, count| {
            (0..count).map(|_| sign * survive_endpoint(kind, i64::MAX / 2, n, s).unwrap()).collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect()
    };
    tv_distance(&draw(WalkKind::Upper, 1), &draw(WalkKind::Lower, -1))
}

#[derive(Debug, Clone, Serialize)]
pub struct RenewalPoint {
    pub m: usize,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderReport {
    pub mean_z_plus: MCEstimate,
    pub target_mean: f64,
    /// Empirical pmf of Z₊, indexed by height.
    pub pmf: Vec<f64>,
    pub censored: u64,
    pub step_cap: u64,
    pub renewal: Vec<RenewalPoint>,
    pub target_renewal: f64,
    pub lower_samples: u64,
    pub lower_censored: u64,
    pub lower_all_one: bool,
}

/// Step cap for ladder epochs; the epoch has a heavy N^{−1/2} tail.
pub const LADDER_STEP_CAP: u64 = 1_000_000;

/// Renewal sums Σ_r P(X₁+…+X_r = m) for the pmf p (p[0] ignored).
pub fn renewal_sequence(p: &[f64], m_max: usize) -> Vec<f64> {
    let mut u = vec![0.0; m_max + 1];
    u[0] = 1.0;
    for m in 1..=m_max {
        let mut s = 0.0;
        for j in 1..=m.min(p.len().saturating_sub(1)) {
            s += p[j] * u[m - j];
        }
        u[m] = s;
    }
    u
}

const RENEWAL_BATCHES: usize = 16;

/// Ladder heights of the upper walk, renewal sums on m ∈ [20, 60] and the
/// lower-walk check Z′₊ = 1.
pub fn ladder_and_renewal_check(plan: &McPlan) -> LadderReport {
    let cap = LADDER_STEP_CAP;
    let parts = plan.run_blocks(SALT_LADDER, |_, s, count| {
        let mut acc = Accumulator::default();
        let mut hist: Vec<u64> = Vec::new();
        let mut censored = 0u64;
        for _ in 0..count {
            let mut b = 0i64;
            let mut steps = 0;
            while b <= 0 && steps < cap {
                b += s.pois1() as i64 - 1;
                steps += 1;
            }
            if b <= 0 {
                censored += 1;
                continue;
            }
            acc.push(b as f64);
            let z = b as usize;
            if hist.len() <= z {
                hist.resize(z + 1, 0);
            }
            hist[z] += 1;
        }
        (acc, hist, censored)
    });
    let accs: Vec<Accumulator> = parts.iter().map(|p| p.0).collect();
    let mean = merge_in_order(&accs).estimate(plan.block_seed(SALT_LADDER, 0));
    let censored = parts.iter().map(|p| p.2).sum();
    let merge_hist = |range: &[(Accumulator, Vec<u64>, u64)]| {
        let mut h: Vec<u64> = Vec::new();
        for (_, hist, _) in range {
            if h.len() < hist.len() {
                h.resize(hist.len(), 0);
            }
            for (a, b) in h.iter_mut().zip(hist) {
                *a += b;
            }
        }
        let total: u64 = h.iter().sum();
        h.iter().map(|&c| c as f64 / total.max(1) as f64).collect::<Vec<f64>>()
    };
    let pmf = merge_hist(&parts);
    let m_range = 20..=60usize;
    let full = renewal_sequence(&pmf, 60);
    let per = parts.len().div_ceil(RENEWAL_BATCHES).max(1);
    let batches: Vec<Vec<f64>> = parts.chunks(per).map(|c| renewal_sequence(&merge_hist(c), 60)).collect();
    let renewal = m_range
        .map(|m| {
            let mut a = Accumulator::default();
            for b in &batches {
                a.push(b[m]);
            }
            let se = (a.variance() / batches.len() as f64).sqrt();
            RenewalPoint { m, value: full[m], std_error: se }
        })
        .collect();

    let lower_n = (plan.n_samples / 10).max(1);
    let lower_plan = plan.with_samples(lower_n);
    let lower = lower_plan.run_blocks(SALT_LADDER_LOWER, |_, s, count| {
        let (mut ones, mut cens) = (0u64, 0u64);
        for _ in 0..count {
            let mut b = 0i64;
            let mut steps = 0;
            while b <= 0 && steps < cap {
                b += 1 - s.pois1() as i64;
                steps += 1;
            }
            if b <= 0 {
                cens += 1;
            } else if b == 1 {
                ones += 1;
            }
        }
        (ones, cens)
    });
    let lower_ones: u64 = lower.iter().map(|p| p.0).sum();
    let lower_censored: u64 = lower.iter().map(|p| p.1).sum();
    LadderReport {
        mean_z_plus: mean,
        target_mean: std::f64::consts::E / 2.0,
        pmf,
        censored,
        step_cap: cap,
        renewal,
        target_renewal: 2.0 / std::f64::consts::E,
        lower_samples: lower_n,
        lower_censored,
        lower_all_one: lower_ones + lower_censored == lower_n,
    }
}

/// Σ_{n=1}^{N} n^{n−1} e^{−n}/n!, terms in log space, summed smallest first.
pub fn borel_identity_check(n_terms: u64) -> Result<f64> {
    if n_terms == 0 {
        return domain("borel_identity_check needs at least one term");
    }
    let (mut s, mut comp) = (0.0f64, 0.0f64);
    for n in (1..=n_terms).rev() {
        let x = n as f64;
        let term = ((x - 1.0) * x.ln() - x - libm::lgamma(x + 1.0)).exp();
        let y = term - comp;
        let t = s + y;
        comp = (t - s) - y;
        s = t;
    }
    Ok(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopePoint {
    pub i: u64,
    pub tail: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub kind: WalkKind,
    pub n: u64,
    pub constant: f64,
    pub pass: bool,
    pub worst_ratio: f64,
    pub points: Vec<EnvelopePoint>,
}

/// Checks P̂(β(n) ≥ i) ≤ 3 e^{−i²/4n} for 0 ≤ i ≤ n.
pub fn large_deviation_envelope_check(kind: WalkKind, n: u64, plan: &McPlan) -> EnvelopeReport {
    const C: f64 = 3.0;
    let ends: Vec<i64> = plan
        .run_blocks(SALT_ENVELOPE ^ kind.salt() ^ (n as u32), |_, s, count| {
            (0..count).map(|_| survive_endpoint(kind, i64::MAX / 2, n as usize, s).unwrap()).collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect();
    let total = ends.len() as f64;
    let mut sorted = ends;
    sorted.sort_unstable();
    let mut points = Vec::with_capacity(n as usize + 1);
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for i in 0..=n {
        let at_least = sorted.len() - sorted.partition_point(|&b| b < i as i64);
        let tail = at_least as f64 / total;
        let bound = C * (-((i * i) as f64) / (4.0 * n as f64)).exp();
        pass &= tail <= bound;
        worst = worst.max(tail / bound);
        points.push(EnvelopePoint { i, tail, bound });
    }
    EnvelopeReport { kind, n, constant: C, pass, worst_ratio: worst, points }
}

/// Seeded convenience used by detectors' property tests.
pub fn sample_walk_seeded(kind: WalkKind, n: usize, seed: StreamSeed) -> Walk {
    sample_walk(kind, n, &mut seed.stream())
}
