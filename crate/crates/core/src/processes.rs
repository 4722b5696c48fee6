//! Upper, lower and auxiliary arrival processes attached to walks, and the
//! conditioned multiset (A | β, β′).

use serde::Serialize;

use crate::constants::{n_of, xi_of};
use crate::error::{domain, Result};
use crate::harmonic::{phi, PhiTilde};
use crate::rngkit::{uniform_in, MCEstimate, McPlan, Stream};
use crate::walks::{Walk, WalkKind};

/// Which of the two harmonic bucket maps.
#[derive(Debug, Clone, Copy)]
pub enum HarmonicMap {
    Phi,
    PhiTilde(PhiTilde),
}

impl HarmonicMap {
    pub fn eval(&self, x: f64) -> u64 {
        match self {
            HarmonicMap::Phi => phi(x),
            HarmonicMap::PhiTilde(p) => p.eval(x),
        }
    }
}

/// (u | β): 1 + ξ_i uniform arrivals in each cell (i − 1, i].
#[derive(Debug, Clone, Serialize)]
pub struct ConditionedUpper {
    walk: Walk,
    cells: Vec<Vec<f64>>,
}

impl ConditionedUpper {
    pub fn walk(&self) -> &Walk {
        &self.walk
    }

    pub fn len(&self) -> usize {
        self.walk.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walk.is_empty()
    }

    /// Arrivals in cell (i − 1, i], unordered; `i` is 1-based.
    pub fn cell(&self, i: usize) -> &[f64] {
        &self.cells[i - 1]
    }

    /// All arrivals in cells 1..=ell.
    pub fn arrivals_upto(&self, ell: usize) -> Vec<f64> {
        self.cells[..ell].iter().flatten().copied().collect()
    }

    pub fn sorted_arrivals(&self) -> Vec<f64> {
        let mut v = self.arrivals_upto(self.len());
        v.sort_by(f64::total_cmp);
        v
    }

    /// β(j) = #(u ∩ (0, j]) − j.
    pub fn recover_walk(&self) -> Walk {
        let mut vals = vec![0i64];
        let mut count = 0i64;
        for (j, c) in self.cells.iter().enumerate() {
            count += c.len() as i64;
            vals.push(count - (j as i64 + 1));
        }
        Walk::from_values(WalkKind::Upper, vals).expect("arrival counts are nonnegative")
    }
}

pub fn sample_conditioned_upper(beta: &Walk, stream: &mut Stream) -> Result<ConditionedUpper> {
    if beta.kind() != WalkKind::Upper {
        return domain("sample_conditioned_upper needs an upper walk");
    }
    let cells = (1..=beta.len())
        .map(|i| {
            let count = (1 + beta.xi(i)) as usize;
            (0..count).map(|_| uniform_in((i - 1) as f64, i as f64, stream)).collect()
        })
        .collect();
    Ok(ConditionedUpper { walk: beta.clone(), cells })
}

/// (x | β′): 1 − ξ′_i auxiliary arrivals s in each cell and x = φ(s).
#[derive(Debug, Clone, Serialize)]
pub struct ConditionedLower {
    walk: Walk,
    s_cells: Vec<Vec<f64>>,
    x_cells: Vec<Vec<u64>>,
}

impl ConditionedLower {
    pub fn walk(&self) -> &Walk {
        &self.walk
    }

    pub fn len(&self) -> usize {
        self.walk.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walk.is_empty()
    }

    pub fn s_cell(&self, i: usize) -> &[f64] {
        &self.s_cells[i - 1]
    }

    pub fn x_cell(&self, i: usize) -> &[u64] {
        &self.x_cells[i - 1]
    }

    /// All x values from cells 1..=ell.
    pub fn values_upto(&self, ell: usize) -> Vec<u64> {
        self.x_cells[..ell].iter().flatten().copied().collect()
    }

    /// β′(j) = j − #(s ∩ (0, j]).
    pub fn recover_walk(&self) -> Walk {
        let mut vals = vec![0i64];
        let mut count = 0i64;
        for (j, c) in self.s_cells.iter().enumerate() {
            count += c.len() as i64;
            vals.push(j as i64 + 1 - count);
        }
        Walk::from_values(WalkKind::Lower, vals).expect("arrival counts are nonnegative")
    }
}

pub fn sample_conditioned_lower(beta_prime: &Walk, stream: &mut Stream) -> Result<ConditionedLower> {
    if beta_prime.kind() != WalkKind::Lower {
        return domain("sample_conditioned_lower needs a lower walk");
    }
    let s_cells: Vec<Vec<f64>> = (1..=beta_prime.len())
        .map(|i| {
            let count = (1 - beta_prime.xi(i)) as usize;
            (0..count).map(|_| uniform_in((i - 1) as f64, i as f64, stream)).collect()
        })
        .collect();
    let x_cells = s_cells.iter().map(|c| c.iter().map(|&s| phi(s)).collect()).collect();
    Ok(ConditionedLower { walk: beta_prime.clone(), s_cells, x_cells })
}

/// (A | β, β′) for k = 2^{n+ξ}.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionedMultiset {
    pub k: u64,
    pub n: u32,
    pub xi: f64,
    /// b_1..b_n
    pub b: Vec<u64>,
    /// a_{i,j}, row i−1 holds the b_i elements of index i
    pub elements: Vec<Vec<u64>>,
    /// D = β(⌈n/2⌉) − β′(⌊n/2⌋)
    pub d: i64,
    /// Arrivals behind the rows: s for i ≤ ⌊n/2⌋, u_{n+1−i} above.
    pub sources: Vec<Vec<f64>>,
}

impl ConditionedMultiset {
    pub fn len(&self) -> usize {
        self.elements.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> Vec<u64> {
        self.elements.iter().flatten().copied().collect()
    }
}

/// Assembles (A | β, β′): a_{i,j} = φ̃(s_{i,j}) for i ≤ ⌊n/2⌋ and
/// φ̃(n − u_{n+1−i,j}) above.
pub fn sample_conditioned_multiset(
    k: u64,
    beta: &Walk,
    beta_prime: &Walk,
    stream: &mut Stream,
) -> Result<ConditionedMultiset> {
    if k < 2 {
        return domain("k must be at least 2");
    }
    let n = n_of(k);
    let (lo, hi) = ((n / 2) as usize, n.div_ceil(2) as usize);
    if beta.len() != hi || beta_prime.len() != lo {
        return domain(format!(
            "walk lengths must be ceil(n/2) = {hi} and floor(n/2) = {lo}, got {} and {}",
            beta.len(),
            beta_prime.len()
        ));
    }
    let upper = sample_conditioned_upper(beta, stream)?;
    let lower = sample_conditioned_lower(beta_prime, stream)?;
    Ok(assemble_multiset(k, &upper, &lower))
}

/// Builds the multiset from already sampled processes of lengths ⌈n/2⌉ and ⌊n/2⌋.
pub fn assemble_multiset(k: u64, upper: &ConditionedUpper, lower: &ConditionedLower) -> ConditionedMultiset {
    let n = n_of(k);
    let nn = n as usize;
    let lo = nn / 2;
    let pt = PhiTilde::new(k);
    let mut elements = Vec::with_capacity(nn);
    let mut sources = Vec::with_capacity(nn);
    for i in 1..=nn {
        let (src, vals): (Vec<f64>, Vec<u64>) = if i <= lo {
            let s = lower.s_cell(i).to_vec();
            let v = s.iter().map(|&x| pt.eval(x)).collect();
            (s, v)
        } else {
            let u = upper.cell(nn + 1 - i).to_vec();
            let v = u.iter().map(|&x| pt.eval((f64::from(n) - x).max(0.0))).collect();
            (u, v)
        };
        sources.push(src);
        elements.push(vals);
    }
    let b = elements.iter().map(|e| e.len() as u64).collect();
    let d = upper.walk().beta(upper.len()) - lower.walk().beta(lower.len());
    ConditionedMultiset { k, n, xi: xi_of(k), b, elements, d, sources }
}

const SALT_COUPLING: u32 = 0x5052_0001;

/// P(φ(s) ≠ φ̃(s)) for s uniform on the cell (i − 1, i], i.e. the chance
/// that an element of the lower process and of the multiset built from the
/// same auxiliary arrival differ.
pub fn coupling_defect_rate(k: u64, i: u32, plan: &McPlan) -> Result<MCEstimate> {
    if k < 2 || i == 0 || i > n_of(k) {
        return domain(format!("need k >= 2 and 1 <= i <= n(k), got k = {k}, i = {i}"));
    }
    let pt = PhiTilde::new(k);
    let (a, b) = (f64::from(i - 1), f64::from(i));
    Ok(plan.estimate(SALT_COUPLING ^ i, |s| {
        let x = uniform_in(a, b, s);
        f64::from(u8::from(phi(x) != pt.eval(x)))
    }))
}
