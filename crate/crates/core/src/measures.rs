//! Monte Carlo Fourier coefficients of the measures μ and μ′, the assembled
//! prediction f = c₀ g ∗ μ ∗ μ′, the Poisson-paradigm check and the
//! end-to-end comparison with simulated p(k).

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

use crate::constants::{c0, c_exp, delta, n_of, sqrt_2_over_pi, xi_of, LN2};
use crate::error::{domain, Result};
use crate::gfun::{decay_bound, FourierTable};
use crate::harmonic::phi;
use crate::perm::{pk_mc, subset_sum_hits_with};
use crate::processes::{assemble_multiset, sample_conditioned_lower, sample_conditioned_upper};
use crate::rngkit::{merge_in_order, Accumulator, MCEstimate, McPlan, Stream, StreamSeed};
use crate::sumstats::{rho_plain, rho_star, tau_count_with, tau_star, Bitset, EngineLimits, TauEngine, TauInput};
use crate::walks::{r_bounded_index, sample_walk, t_positive_index, Walk, WalkKind, WalkParams};

pub const DEFAULT_ELL_RHO: usize = 24;
pub const DEFAULT_ELL_TAU: usize = 28;
pub const MAX_ELL_TAU: usize = 34;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Measure {
    /// μ, from ρ of the upper process
    Mu,
    /// μ′, from τ of the lower process
    MuPrime,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeasureEstimate {
    pub measure: Measure,
    pub r: i64,
    pub ell: usize,
    pub re: MCEstimate,
    pub im: MCEstimate,
    pub n_samples: u64,
    pub seed: StreamSeed,
}

impl MeasureEstimate {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.mean, self.im.mean)
    }

    /// Combined standard error of the complex mean.
    pub fn std_error(&self) -> f64 {
        self.re.std_error.hypot(self.im.std_error)
    }

    /// A noiseless coefficient, for assembling predictions from known
    /// measures.
    pub fn exact(measure: Measure, r: i64, value: Complex64) -> MeasureEstimate {
        let seed = StreamSeed::new(0, 0);
        let est = |mean| MCEstimate { mean, std_error: 0.0, n_samples: 0, seed };
        MeasureEstimate { measure, r, ell: 0, re: est(value.re), im: est(value.im), n_samples: 0, seed }
    }
}

/// One draw of (weight, statistic). The statistic is only computed when the
/// weight is positive; otherwise the contribution is zero anyway.
fn draw_mu(ell: usize, s: &mut Stream, buf: &mut Vec<f64>) -> Result<(f64, f64)> {
    buf.clear();
    let mut t = 0.0;
    for _ in 0..ell {
        t += s.exp1();
        buf.push(t);
    }
    let w = (ell as f64 - t).max(0.0);
    if w == 0.0 {
        return Ok((0.0, 0.0));
    }
    Ok((w, rho_plain(buf, ell)?))
}

fn draw_mu_prime(ell: usize, s: &mut Stream, scratch: &mut Bitset, buf: &mut Vec<u64>) -> Result<(f64, f64)> {
    buf.clear();
    let mut t = 0.0;
    for _ in 0..ell {
        t += s.exp1();
        buf.push(phi(t));
    }
    let w = ((buf[ell - 1] as f64).log2() - ell as f64).max(0.0);
    if w == 0.0 {
        return Ok((0.0, 0.0));
    }
    let inp = TauInput { values: buf.clone(), normalizer: -(ell as f64) };
    Ok((w, tau_count_with(&inp, TauEngine::Bitset, &EngineLimits::default(), scratch)?))
}

fn check_ell(measure: Measure, ell: usize) -> Result<()> {
    if ell == 0 {
        return domain("ell must be >= 1");
    }
    match measure {
        Measure::Mu if ell > EngineLimits::default().rho_mitm_max => crate::error::capacity(format!(
            "rho at ell = {ell} exceeds the meet-in-the-middle limit {}",
            EngineLimits::default().rho_mitm_max
        )),
        Measure::MuPrime if ell > MAX_ELL_TAU => {
            crate::error::capacity(format!("tau at ell = {ell} exceeds the bitset limit ell <= {MAX_ELL_TAU}"))
        }
        _ => Ok(()),
    }
}

fn salt(measure: Measure, ell: usize) -> u32 {
    let base = match measure {
        Measure::Mu => 0x4d55_0000,
        Measure::MuPrime => 0x4d50_0000,
    };
    base | ell as u32
}

/// √(2/π) E w·ψ(log₂ X)·X^c over the draws, for an arbitrary test
/// function ψ; X = ρ or τ, and zero-statistic draws contribute 0.
pub fn measure_pairing<F>(measure: Measure, ell: usize, plan: &McPlan, psi: F) -> Result<(MCEstimate, MCEstimate)>
where
    F: Fn(f64) -> Complex64 + Sync,
{
    check_ell(measure, ell)?;
    let c = c_exp();
    let accs = run_draws(measure, ell, plan, 1, |w, x, out| {
        let v = if w > 0.0 && x > 0.0 { psi(x.log2()) * x.powf(c) * (w * sqrt_2_over_pi()) } else { Complex64::default() };
        out[0] = v;
    })?;
    let seed = plan.block_seed(salt(measure, ell), 0);
    Ok((accs[0].0.estimate(seed), accs[0].1.estimate(seed)))
}

/// Runs the draws and feeds each (weight, statistic) to `contrib`, which
/// writes `modes` complex contributions.
fn run_draws<G>(measure: Measure, ell: usize, plan: &McPlan, modes: usize, contrib: G) -> Result<Vec<(Accumulator, Accumulator)>>
where
    G: Fn(f64, f64, &mut [Complex64]) + Sync,
{
    let blocks = plan.run_blocks(salt(measure, ell), |_, s, count| -> Result<Vec<(Accumulator, Accumulator)>> {
        let mut accs = vec![(Accumulator::default(), Accumulator::default()); modes];
        let mut out = vec![Complex64::default(); modes];
        let mut scratch = Bitset::default();
        let (mut fbuf, mut ubuf) = (Vec::new(), Vec::new());
        for _ in 0..count {
            let (w, x) = match measure {
                Measure::Mu => draw_mu(ell, s, &mut fbuf)?,
                Measure::MuPrime => draw_mu_prime(ell, s, &mut scratch, &mut ubuf)?,
            };
            contrib(w, x, &mut out);
            for (a, v) in accs.iter_mut().zip(&out) {
                a.0.push(v.re);
                a.1.push(v.im);
            }
        }
        Ok(accs)
    });
    let blocks: Vec<_> = blocks.into_iter().collect::<Result<_>>()?;
    Ok((0..modes)
        .map(|j| {
            let re = merge_in_order(blocks.iter().map(|b| &b[j].0));
            let im = merge_in_order(blocks.iter().map(|b| &b[j].1));
            (re, im)
        })
        .collect())
}

/// Fourier coefficients at every mode in `rs` from one set of draws:
/// √(2/π) E w·X^{c − 2πir/log 2}.
pub fn measure_modes(measure: Measure, rs: &[i64], ell: usize, plan: &McPlan) -> Result<Vec<MeasureEstimate>> {
    check_ell(measure, ell)?;
    let c = c_exp();
    let scale = sqrt_2_over_pi();
    let rs_owned = rs.to_vec();
    let accs = run_draws(measure, ell, plan, rs.len(), |w, x, out| {
        for (o, &r) in out.iter_mut().zip(&rs_owned) {
            *o = if w > 0.0 && x > 0.0 {
                let e = Complex64::new(c, -2.0 * PI * r as f64 / LN2) * x.ln();
                if r == 0 {
                    Complex64::new(w * scale * e.re.exp(), 0.0)
                } else {
                    e.exp() * (w * scale)
                }
            } else {
                Complex64::default()
            };
        }
    })?;
    let seed = plan.block_seed(salt(measure, ell), 0);
    Ok(rs
        .iter()
        .zip(accs)
        .map(|(&r, (re, im))| MeasureEstimate {
            measure,
            r,
            ell,
            re: re.estimate(seed),
            im: im.estimate(seed),
            n_samples: plan.n_samples,
            seed,
        })
        .collect())
}

/// μ̂(r) at truncation ℓ from plain ρ of the first ℓ upper arrivals.
pub fn mu_hat_mc(r: i64, ell: usize, plan: &McPlan) -> Result<MeasureEstimate> {
    Ok(measure_modes(Measure::Mu, &[r], ell, plan)?[0])
}

/// μ̂′(r) at truncation ℓ from τ of the first ℓ lower-process values.
pub fn mu_prime_hat_mc(r: i64, ell: usize, plan: &McPlan) -> Result<MeasureEstimate> {
    Ok(measure_modes(Measure::MuPrime, &[r], ell, plan)?[0])
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeRow {
    pub m: i64,
    pub g_hat: Complex64,
    pub mu_hat: Complex64,
    pub mu_prime_hat: Complex64,
    /// c₀ ĝ(m) μ̂(m) μ̂′(m)
    pub f_hat: Complex64,
    pub f_hat_std_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictedF {
    pub xi: Vec<f64>,
    pub f: Vec<f64>,
    /// largest imaginary part before symmetrization
    pub max_imag: f64,
    pub modes: Vec<ModeRow>,
    /// propagated standard error plus the truncated-mode tail
    pub error_budget: f64,
    pub truncation_tail: f64,
}

fn lookup(table: &[MeasureEstimate], m: i64) -> Option<Complex64> {
    if let Some(e) = table.iter().find(|e| e.r == m) {
        return Some(e.value());
    }
    table.iter().find(|e| e.r == -m).map(|e| e.value().conj())
}

fn lookup_se(table: &[MeasureEstimate], m: i64) -> f64 {
    table.iter().find(|e| e.r == m || e.r == -m).map_or(0.0, MeasureEstimate::std_error)
}

/// f(ξ) = Σ_{|m| ≤ M} c₀ ĝ(m) μ̂(m) μ̂′(m) e^{2πimξ} on `grid` points, with
/// M the largest mode present in all three tables. Negative modes are
/// taken as conjugates of positive ones, so f is real.
pub fn predict_f(
    mu_table: &[MeasureEstimate],
    mu_prime_table: &[MeasureEstimate],
    g_table: &FourierTable,
    grid: usize,
) -> Result<PredictedF> {
    let max_mode = (0..=g_table.max_mode)
        .take_while(|&m| lookup(mu_table, m).is_some() && lookup(mu_prime_table, m).is_some())
        .last();
    let Some(max_mode) = max_mode else {
        return domain("predict_f needs mode 0 in every table");
    };
    if grid == 0 {
        return domain("predict_f needs a nonempty grid");
    }
    let c0 = c0();
    let modes: Vec<ModeRow> = (-max_mode..=max_mode)
        .map(|m| {
            let g = g_table.get(m);
            let mu = lookup(mu_table, m).expect("mode present");
            let mup = lookup(mu_prime_table, m).expect("mode present");
            let se = c0 * g.norm() * (mup.norm() * lookup_se(mu_table, m) + mu.norm() * lookup_se(mu_prime_table, m));
            ModeRow { m, g_hat: g, mu_hat: mu, mu_prime_hat: mup, f_hat: g * mu * mup * c0, f_hat_std_error: se }
        })
        .collect();
    let mass = lookup(mu_table, 0).expect("mode 0").re.abs() * lookup(mu_prime_table, 0).expect("mode 0").re.abs();
    let ratio = (-PI * PI / LN2).exp();
    let truncation_tail = 2.0 * c0 * mass * decay_bound(max_mode + 1) / (1.0 - ratio);
    let error_budget = modes.iter().map(|r| r.f_hat_std_error).sum::<f64>() + truncation_tail;
    let mut max_imag = 0.0f64;
    let xi: Vec<f64> = (0..grid).map(|i| i as f64 / grid as f64).collect();
    let f = xi
        .iter()
        .map(|&x| {
            let v: Complex64 = modes.iter().map(|r| r.f_hat * Complex64::from_polar(1.0, 2.0 * PI * r.m as f64 * x)).sum();
            max_imag = max_imag.max(v.im.abs());
            v.re
        })
        .collect();
    Ok(PredictedF { xi, f, max_imag, modes, error_budget, truncation_tail })
}

const SALT_PARADIGM: u32 = 0x5041_0001;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ParadigmPair {
    pub d: i64,
    pub lhs: f64,
    pub rhs: f64,
    pub rejected: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParadigmReport {
    pub k: u64,
    pub n: u32,
    pub xi: f64,
    pub ell: usize,
    pub pairs: Vec<ParadigmPair>,
    pub n_inner: u64,
    pub lhs_mean: f64,
    pub rhs_mean: f64,
    /// mean of per-pair LHS − RHS and its standard error across pairs
    pub discrepancy: f64,
    pub discrepancy_std_error: f64,
    pub within_tolerance: bool,
}

pub const PARADIGM_TOLERANCE: f64 = 0.1;
const GATE_MIN: i64 = -2;
const GATE_R: u64 = 8;
const GATE_T: u64 = 8;

/// 1 − exp(−2^{D−ξ} ρ* τ*).
pub fn paradigm_rhs(d: i64, xi: f64, rho: f64, tau: f64) -> f64 {
    -(-(d as f64 - xi).exp2() * rho * tau).exp_m1()
}

/// Walk of length `len` with min ≥ −2, R ≤ 8 and T ≤ 8, by rejection.
fn gated_walk(kind: WalkKind, len: usize, s: &mut Stream) -> Result<(Walk, u64)> {
    let params = WalkParams::default();
    let mut rejected = 0;
    loop {
        let w = sample_walk(kind, len, s);
        if w.min() >= GATE_MIN && r_bounded_index(&w, len, params)? <= GATE_R && t_positive_index(&w, len, params)? <= GATE_T {
            return Ok((w, rejected));
        }
        rejected += 1;
    }
}

/// Compares P(k ∈ Σ(A | β, β′)) with 1 − E exp(−2^{D−ξ}ρ*(L)τ*(L)) over
/// `plan.n_samples` gated walk pairs, with `n_inner` process draws per
/// pair feeding both sides. L = min(ell, ⌊n/2⌋) since ρ* and τ* need L
/// cells of each process.
pub fn poisson_paradigm_check(k: u64, n_inner: u64, ell: usize, plan: &McPlan) -> Result<ParadigmReport> {
    if !((1 << 14)..=(1 << 24)).contains(&k) {
        return domain(format!("paradigm check needs 2^14 <= k <= 2^24, got {k}"));
    }
    if ell == 0 || n_inner == 0 || plan.n_samples < 2 {
        return domain("paradigm check needs ell >= 1, n_inner >= 1 and at least two walk pairs");
    }
    check_ell(Measure::Mu, ell)?;
    let n = n_of(k);
    let xi = xi_of(k);
    let (lo, hi) = ((n / 2) as usize, n.div_ceil(2) as usize);
    let l = ell.min(lo);
    let blocks = plan.run_blocks(SALT_PARADIGM, |_, s, count| -> Result<Vec<ParadigmPair>> {
        let mut scratch = Bitset::default();
        let mut out = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let (beta, r1) = gated_walk(WalkKind::Upper, hi, s)?;
            let (beta_p, r2) = gated_walk(WalkKind::Lower, lo, s)?;
            let d = beta.beta(hi) - beta_p.beta(lo);
            let (mut hits, mut rhs) = (0u64, 0.0);
            for _ in 0..n_inner {
                let up = sample_conditioned_upper(&beta, s)?;
                let low = sample_conditioned_lower(&beta_p, s)?;
                let ms = assemble_multiset(k, &up, &low);
                hits += u64::from(subset_sum_hits_with(&ms.values(), k, &mut scratch)?);
                rhs += paradigm_rhs(d, xi, rho_star(&up, l)?, tau_star(&low, l)?);
            }
            out.push(ParadigmPair { d, lhs: hits as f64 / n_inner as f64, rhs: rhs / n_inner as f64, rejected: r1 + r2 });
        }
        Ok(out)
    });
    let pairs: Vec<ParadigmPair> = blocks.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    let mut diff = Accumulator::default();
    let (mut lsum, mut rsum) = (0.0, 0.0);
    for p in &pairs {
        diff.push(p.lhs - p.rhs);
        lsum += p.lhs;
        rsum += p.rhs;
    }
    let np = pairs.len() as f64;
    let se = (diff.variance() / np).sqrt();
    Ok(ParadigmReport {
        k,
        n,
        xi,
        ell: l,
        n_inner,
        lhs_mean: lsum / np,
        rhs_mean: rsum / np,
        discrepancy: diff.mean,
        discrepancy_std_error: se,
        within_tolerance: diff.mean.abs() <= PARADIGM_TOLERANCE + 3.0 * se,
        pairs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EndToEndRow {
    pub k: u64,
    pub xi: f64,
    pub p_hat: MCEstimate,
    /// p̂(k) k^δ (log k)^{3/2}
    pub ratio: f64,
    pub ratio_std_error: f64,
}

pub fn end_to_end_ratio(k_list: &[u64], plan: &McPlan) -> Result<Vec<EndToEndRow>> {
    k_list
        .iter()
        .map(|&k| {
            if k < 2 {
                return domain("end_to_end_ratio needs k >= 2");
            }
            let p = pk_mc(k, plan)?;
            let kf = k as f64;
            let scale = kf.powf(delta()) * kf.ln().powf(1.5);
            Ok(EndToEndRow { k, xi: xi_of(k), ratio: p.mean * scale, ratio_std_error: p.std_error * scale, p_hat: p })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gfun::g_eval;

    fn plan(n: u64) -> McPlan {
        McPlan::new(11, n).with_threads(1)
    }

    #[test]
    fn mode_zero_is_real_and_matches_pairing() {
        let p = plan(4000);
        for (m, ell) in [(Measure::Mu, 12), (Measure::MuPrime, 12)] {
            let est = measure_modes(m, &[0, 1, -1, 2], ell, &p).unwrap();
            assert_eq!(est[0].im.mean, 0.0);
            assert_eq!(est[0].im.std_error, 0.0);
            assert_eq!(est[1].re.mean, est[2].re.mean);
            assert_eq!(est[1].im.mean, -est[2].im.mean);
            let (re, im) = measure_pairing(m, ell, &p, |_| Complex64::new(1.0, 0.0)).unwrap();
            assert!((re.mean - est[0].re.mean).abs() <= 1e-12 * est[0].re.mean);
            assert_eq!(im.mean, 0.0);
            let single = if m == Measure::Mu { mu_hat_mc(2, ell, &p) } else { mu_prime_hat_mc(2, ell, &p) }.unwrap();
            assert_eq!(single.re.mean, est[3].re.mean);
            assert!(est[0].re.mean > 0.0);
            assert!(est[1].value().norm() <= est[0].re.mean);
        }
    }

    #[test]
    fn contributions_are_nonnegative_and_tau_bounded() {
        let mut s = StreamSeed::new(3, 0).stream();
        let mut scratch = Bitset::default();
        let mut buf = Vec::new();
        let mut fbuf = Vec::new();
        for _ in 0..300 {
            let (w, tau) = draw_mu_prime(14, &mut s, &mut scratch, &mut buf).unwrap();
            assert!(w >= 0.0);
            if w > 0.0 {
                assert!(tau > 0.0 && tau <= 1.0);
                assert!(tau.powf(c_exp()) <= 1.0);
            }
            let (w, rho) = draw_mu(14, &mut s, &mut fbuf).unwrap();
            assert!(w >= 0.0 && rho >= 0.0);
        }
    }

    #[test]
    fn ell_limits() {
        assert!(matches!(mu_prime_hat_mc(0, 35, &plan(10)), Err(crate::Error::Capacity(_))));
        assert!(matches!(mu_hat_mc(0, 53, &plan(10)), Err(crate::Error::Capacity(_))));
        assert!(mu_hat_mc(0, 0, &plan(10)).is_err());
    }

    #[test]
    fn uniform_measures_give_constant_f() {
        let one = |m| vec![MeasureEstimate::exact(m, 0, Complex64::new(1.0, 0.0))];
        let mut mu = one(Measure::Mu);
        let mut mup = one(Measure::MuPrime);
        for r in 1..=3 {
            mu.push(MeasureEstimate::exact(Measure::Mu, r, Complex64::default()));
            mup.push(MeasureEstimate::exact(Measure::MuPrime, r, Complex64::default()));
        }
        let g = FourierTable::new(3).unwrap();
        let pf = predict_f(&mu, &mup, &g, 50).unwrap();
        let expect = c0() * g.get(0).re;
        assert!((expect - 4.788_57).abs() < 1e-4);
        for v in &pf.f {
            assert!((v - expect).abs() < 1e-12);
        }
        assert!(pf.max_imag < 1e-12);
        assert!(predict_f(&[], &mup, &g, 10).is_err());
    }

    #[test]
    fn predicted_f_flatness() {
        let p = plan(3000);
        let rs = [0, 1, 2, 3];
        let mu = measure_modes(Measure::Mu, &rs, 12, &p).unwrap();
        let mup = measure_modes(Measure::MuPrime, &rs, 12, &p).unwrap();
        let pf = predict_f(&mu, &mup, &FourierTable::new(3).unwrap(), 200).unwrap();
        assert!(pf.max_imag < 1e-12);
        let (lo, hi) = pf.f.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        let (glo, ghi) = (0..200).map(|i| g_eval(i as f64 / 200.0)).fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
        let budget = pf.error_budget / lo;
        assert!(lo > 0.0);
        assert!(hi / lo <= ghi / glo * (1.0 + budget));
    }

    #[test]
    fn paradigm_rhs_is_monotone_in_d() {
        for d in -5..5 {
            assert!(paradigm_rhs(d + 1, 0.3, 0.7, 0.4) >= paradigm_rhs(d, 0.3, 0.7, 0.4));
        }
        // walk pairs differing only in the last upper increment, same draws
        let base = [1i64, 0, -1, 2, 0, -1, 0, 1, 0];
        let lower = Walk::from_increments(WalkKind::Lower, &[1, 0, -1, 1, 0, 0, -1, 1, 0]).unwrap();
        let mut prev = -1.0;
        for last in [-1i64, 0, 1, 2] {
            let mut inc = base;
            inc[8] = last;
            let upper = Walk::from_increments(WalkKind::Upper, &inc).unwrap();
            let mut s = StreamSeed::new(5, 0).stream();
            let up = sample_conditioned_upper(&upper, &mut s).unwrap();
            let low = sample_conditioned_lower(&lower, &mut StreamSeed::new(6, 0).stream()).unwrap();
            let d = upper.beta(9) - lower.beta(9);
            let v = paradigm_rhs(d, 0.0, rho_star(&up, 8).unwrap(), tau_star(&low, 8).unwrap());
            assert!((0.0..=1.0).contains(&v));
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn paradigm_small_run() {
        let r = poisson_paradigm_check(1 << 18, 20, 20, &plan(8)).unwrap();
        assert_eq!(r.pairs.len(), 8);
        assert_eq!(r.ell, 9);
        for p in &r.pairs {
            assert!((0.0..=1.0).contains(&p.lhs) && (0.0..=1.0).contains(&p.rhs));
        }
        assert!(poisson_paradigm_check(1 << 13, 20, 20, &plan(8)).is_err());
    }

    #[test]
    fn end_to_end_sanity() {
        let rows = end_to_end_ratio(&[1 << 8, 1 << 12], &plan(20_000)).unwrap();
        assert!(rows[0].p_hat.mean > rows[1].p_hat.mean);
        assert!((1.0..=20.0).contains(&rows[1].ratio), "{}", rows[1].ratio);
    }
}
