//! Global constants of the problem.

use serde::Serialize;

pub const LN2: f64 = std::f64::consts::LN_2;
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// log log 2 (natural logarithms).
pub fn ln_ln2() -> f64 {
    LN2.ln()
}

/// δ = 1 − (1 + log log 2)/log 2.
pub fn delta() -> f64 {
    1.0 - (1.0 + ln_ln2()) / LN2
}

/// c = −log log 2 / log 2.
pub fn c_exp() -> f64 {
    -ln_ln2() / LN2
}

/// c₀ = (π/2)^{1/2} (log 2)^{3/2} e^{γ(1/log 2 − 1)}.
pub fn c0() -> f64 {
    (std::f64::consts::PI / 2.0).sqrt() * LN2.powf(1.5) * (EULER_GAMMA * (1.0 / LN2 - 1.0)).exp()
}

/// (2/π)^{1/2}, the value of h(0) for the upper walk.
pub fn sqrt_2_over_pi() -> f64 {
    (2.0 / std::f64::consts::PI).sqrt()
}

/// n = ⌊log₂ k⌋ for k ≥ 1.
pub fn n_of(k: u64) -> u32 {
    63 - k.max(1).leading_zeros()
}

/// ξ = {log₂ k}.
pub fn xi_of(k: u64) -> f64 {
    let n = n_of(k);
    // exact for powers of two
    if k.is_power_of_two() {
        0.0
    } else {
        ((k as f64) / (1u64 << n) as f64).log2()
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GlobalConstants {
    pub delta: f64,
    pub c: f64,
    pub c0: f64,
    pub gamma_euler: f64,
}

impl GlobalConstants {
    pub fn get() -> Self {
        Self { delta: delta(), c: c_exp(), c0: c0(), gamma_euler: EULER_GAMMA }
    }
}
