//! The periodic function g, its Fourier coefficients, the rescaled family
//! g_λ and the thinning function g₀.
//!
//! Series windows. Writing q = log 2, the term of g at index D is
//! q^{D−x}(1 − e^{−2^{D−x}}). For D → +∞ it behaves like q^D, and
//! q^{120} < 1e-19. For D → −∞ it behaves like (2q)^{D}, and
//! (2q)^{−160} < 3e-23. Summing D over [−160, 120] therefore leaves a tail
//! far below one ulp of g ≈ 5.13. The g₀ series has geometric decay 2^D on
//! the left and doubly exponential decay on the right, so [−64, 8] suffices.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

use crate::constants::{ln_ln2, LN2};
use crate::error::{domain, Result};
use crate::quad::integrate_complex;
use crate::rngkit::{merge_in_order, Accumulator, MCEstimate, McPlan, Stream};

pub const G_WINDOW: (i32, i32) = (-160, 120);
pub const G_LAMBDA_WINDOW: (i32, i32) = (-170, 130);
pub const G0_WINDOW: (i32, i32) = (-64, 8);
pub const FOURIER_MAX_MODE: i64 = 64;

/// Σ_D q^{D−x}(1 − e^{−λ 2^{D−x}}), summed from the small terms up.
fn g_series(lambda: f64, x: f64, window: (i32, i32)) -> f64 {
    let mut terms: Vec<f64> = (window.0..=window.1)
        .map(|d| {
            let t = f64::from(d) - x;
            (t * ln_ln2()).exp() * -(-lambda * t.exp2()).exp_m1()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// g(x) = Σ_D (log 2)^{D−x}(1 − e^{−2^{D−x}}); 1-periodic.
pub fn g_eval(x: f64) -> f64 {
    g_series(1.0, x.rem_euclid(1.0), G_WINDOW)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(z + 1) for Re z > −1/2 by the Lanczos series.
fn ln_gamma_lanczos(z: Complex64) -> Complex64 {
    let mut a = Complex64::new(LANCZOS[0], 0.0);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
}

/// Γ(s) for Re s > −1, s ∉ {0}, via Γ(s) = Γ(s + 2)/(s(s + 1)).
pub fn gamma_complex(s: Complex64) -> Complex64 {
    ln_gamma_lanczos(s + 1.0).exp() / (s * (s + 1.0))
}

/// s_m = log log 2/log 2 + 2πim/log 2.
pub fn fourier_point(m: i64) -> Complex64 {
    Complex64::new(ln_ln2() / LN2, 2.0 * PI * m as f64 / LN2)
}

/// ĝ(m) = −Γ(s_m)/log 2.
pub fn g_hat(m: i64) -> Complex64 {
    -gamma_complex(fourier_point(m)) / LN2
}

/// (6/log 2) e^{−π²|m|/log 2}.
pub fn decay_bound(m: i64) -> f64 {
    6.0 / LN2 * (-PI * PI * m.unsigned_abs() as f64 / LN2).exp()
}

#[derive(Debug, Clone, Serialize)]
pub struct FourierTable {
    pub max_mode: i64,
    /// coefficients for m = −M..=M
    pub coeffs: Vec<Complex64>,
}

impl FourierTable {
    pub fn new(max_mode: i64) -> Result<FourierTable> {
        if !(0..=FOURIER_MAX_MODE).contains(&max_mode) {
            return domain(format!("Fourier modes must satisfy |m| <= {FOURIER_MAX_MODE}"));
        }
        let coeffs = (-max_mode..=max_mode).map(g_hat).collect();
        Ok(FourierTable { max_mode, coeffs })
    }

    pub fn get(&self, m: i64) -> Complex64 {
        self.coeffs[(m + self.max_mode) as usize]
    }

    pub fn decay_bound(&self, m: i64) -> f64 {
        decay_bound(m)
    }

    /// Σ_{|m| ≤ M} ĝ(m) e^{2πimx}, real part.
    pub fn reconstruct(&self, x: f64) -> f64 {
        (-self.max_mode..=self.max_mode)
            .map(|m| (self.get(m) * Complex64::from_polar(1.0, 2.0 * PI * m as f64 * x)).re)
            .sum()
    }
}

/// Trapezoid rule for a 1-periodic function; exact up to aliasing of
/// modes ≥ `points`.
pub fn periodic_mean(f: impl Fn(f64) -> f64, points: usize) -> f64 {
    (0..points).map(|i| f(i as f64 / points as f64)).sum::<f64>() / points as f64
}

/// −∫₀^∞ u^{s−1}(1 − e^{−u}) du for −1 < Re s < 0, an independent check on
/// Γ(s). The piece on [0, 1] is the alternating series, the piece on
/// [1, ∞) is −1/s minus ∫₁^{60} u^{s−1}e^{−u} du by composite Gauss–Legendre,
/// refined until two panel counts agree.
pub fn gamma_strip_oracle(s: Complex64) -> Result<Complex64> {
    if !(s.re > -1.0 && s.re < 0.0) {
        return domain(format!("gamma_strip_oracle needs -1 < Re s < 0, got {}", s.re));
    }
    let mut head = Complex64::new(0.0, 0.0);
    let mut fact = 1.0;
    for k in 1..40 {
        fact *= k as f64;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        head += sign / (fact * (s + k as f64));
    }
    let f = |u: f64| (s - 1.0).expf(u) * (-u).exp();
    let mut panels = 64;
    let mut prev = integrate_complex(f, 1.0, 60.0, panels, 20);
    loop {
        panels *= 2;
        let next = integrate_complex(f, 1.0, 60.0, panels, 20);
        let done = (next - prev).norm() <= 1e-15 * next.norm().max(1e-300) || panels >= 1 << 14;
        prev = next;
        if done {
            break;
        }
    }
    let integral = head - 1.0 / s - prev;
    Ok(-integral)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GLambda {
    pub lambda: f64,
    pub xi: f64,
    /// Σ_D (log 2)^{D−ξ}(1 − e^{−λ2^{D−ξ}})
    pub direct: f64,
    /// λ^{−log log 2/log 2} g(ξ − log₂ λ)
    pub transformed: f64,
}

pub fn g_lambda_eval(lambda: f64, xi: f64) -> Result<GLambda> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return domain(format!("lambda must be positive, got {lambda}"));
    }
    let direct = g_series(lambda, xi, G_LAMBDA_WINDOW);
    let transformed = lambda.powf(-ln_ln2() / LN2) * g_eval(xi - lambda.log2());
    Ok(GLambda { lambda, xi, direct, transformed })
}

/// g₀(t) = Σ_D 2^{D+t} e^{−2^{D+t}}.
pub fn g0_eval(t: f64) -> f64 {
    let t = t.rem_euclid(1.0);
    let mut terms: Vec<f64> = (G0_WINDOW.0..=G0_WINDOW.1)
        .map(|d| {
            let v = (f64::from(d) + t).exp2();
            v * (-v).exp()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Bin(x, 1/2) as the popcount of x fair bits.
fn halve(x: u64, s: &mut Stream) -> u64 {
    let mut left = x;
    let mut count = 0u64;
    while left >= 64 {
        count += u64::from(s.next_u64().count_ones());
        left -= 64;
    }
    if left > 0 {
        count += u64::from((s.next_u64() & ((1u64 << left) - 1)).count_ones());
    }
    count
}

/// One thinning run from population k: true if the population is ever
/// exactly 1.
pub fn thinning_trial(k: u64, s: &mut Stream) -> bool {
    let mut x = k;
    while x > 1 {
        x = halve(x, s);
    }
    x == 1
}

const SALT_THIN: u32 = 0x4746_0001;

pub fn thinning_mc(k: u64, plan: &McPlan) -> Result<MCEstimate> {
    if k == 0 {
        return domain("thinning needs k >= 1");
    }
    let accs = plan.run_blocks(SALT_THIN, |_, s, count| {
        let mut acc = Accumulator::default();
        for _ in 0..count {
            acc.push(f64::from(u8::from(thinning_trial(k, s))));
        }
        acc
    });
    Ok(merge_in_order(&accs).estimate(plan.block_seed(SALT_THIN, 0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_ratio(points: usize) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..points {
            let v = g_eval(i as f64 / points as f64);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi / lo
    }

    #[test]
    fn g_is_periodic_and_positive() {
        for i in 0..1000 {
            let x = i as f64 / 1000.0;
            let a = g_series(1.0, x, G_WINDOW);
            let b = g_series(1.0, x + 1.0, (G_WINDOW.0 + 1, G_WINDOW.1 + 1));
            assert!((a - b).abs() < 1e-14);
            assert!(g_eval(x) > 0.0);
        }
    }

    #[test]
    fn g_mean_and_flatness() {
        let mean = periodic_mean(g_eval, 64);
        assert!((mean - 5.127_821_818_6).abs() < 1e-8, "{mean}");
        assert!(grid_ratio(100_000) - 1.0 <= 2e-7);
    }

    #[test]
    fn window_is_converged() {
        for x in [0.0, 0.25, 0.9] {
            let wide = g_series(1.0, x, (-220, 180));
            assert!((g_eval(x) - wide).abs() < 1e-15);
        }
    }

    #[test]
    fn fourier_values() {
        let g0 = g_hat(0);
        assert!((g0.re - 5.127_821_818_6).abs() < 1e-8);
        assert_eq!(g0.im, 0.0);
        let g1 = g_hat(1).norm();
        assert!((g1 / 2.447_902_694_7e-7 - 1.0).abs() < 1e-6, "{g1:e}");
        for m in 1..=10 {
            assert!(g_hat(m).norm() < decay_bound(m), "m = {m}");
            assert!((g_hat(-m) - g_hat(m).conj()).norm() <= 1e-15 * g_hat(m).norm());
        }
    }

    #[test]
    fn gamma_real_values() {
        let half = gamma_complex(Complex64::new(0.5, 0.0));
        assert!((half.re - PI.sqrt()).abs() < 1e-14);
        let neg = gamma_complex(Complex64::new(-0.5, 0.0));
        assert!((neg.re + 2.0 * PI.sqrt()).abs() < 1e-13);
        let five = gamma_complex(Complex64::new(5.0, 0.0));
        assert!((five.re - 24.0).abs() < 1e-12);
    }

    #[test]
    fn strip_oracle_agrees() {
        for m in 0..=2 {
            let s = fourier_point(m);
            let o = gamma_strip_oracle(s).unwrap();
            let g = gamma_complex(s);
            assert!((o - g).norm() < 1e-8);
            // the oracle subtracts O(1) pieces, so its floor is absolute
            assert!((o - g).norm() <= 1e-15 * g.norm().max(1.0), "m = {m}: {o} vs {g}");
            let oc = gamma_strip_oracle(s.conj()).unwrap();
            assert!((oc - o.conj()).norm() <= 1e-18);
        }
        assert!(gamma_strip_oracle(Complex64::new(0.5, 1.0)).is_err());
        assert!(gamma_strip_oracle(Complex64::new(-1.0, 0.0)).is_err());
    }

    #[test]
    fn parseval_and_reconstruction() {
        let table = FourierTable::new(10).unwrap();
        let energy: f64 = (-10..=10).map(|m| table.get(m).norm_sqr()).sum();
        let l2 = periodic_mean(|x| g_eval(x).powi(2), 64);
        assert!((energy - l2).abs() < 1e-10, "{energy} vs {l2}");
        let small = FourierTable::new(3).unwrap();
        for i in 0..500 {
            let x = i as f64 / 500.0;
            assert!((small.reconstruct(x) - g_eval(x)).abs() < 1e-12);
        }
        assert!(FourierTable::new(65).is_err());
    }

    #[test]
    fn g_lambda_identity() {
        for xi in [0.0, 0.3, 0.77] {
            let r = g_lambda_eval(2.0, xi).unwrap();
            assert!((r.direct - r.transformed).abs() < 1e-12);
        }
        let r = g_lambda_eval(0.37, 0.5).unwrap();
        assert!((r.direct - r.transformed).abs() < 1e-12);
        let r = g_lambda_eval(1.0, 0.42).unwrap();
        assert!((r.direct - g_eval(0.42)).abs() < 1e-14);
        assert!(g_lambda_eval(0.0, 0.1).is_err());
    }

    #[test]
    fn g0_integral() {
        let mean = periodic_mean(g0_eval, 64);
        assert!((mean - 1.0 / LN2).abs() < 1e-10);
    }

    #[test]
    fn halving_is_binomial() {
        let mut s = crate::rngkit::StreamSeed::new(1, 0).stream();
        let mut acc = Accumulator::default();
        for _ in 0..20_000 {
            acc.push(halve(1000, &mut s) as f64);
        }
        assert!((acc.mean - 500.0).abs() < 4.0 * (250.0f64 / 2e4).sqrt());
        assert!((acc.variance() / 250.0 - 1.0).abs() < 0.05);
        assert!(thinning_trial(1, &mut s));
    }
}
