//! `permlab`: one subcommand per experiment. The payload goes to stdout as
//! JSON or CSV; the run record (parameters, build id, timing) goes to
//! `--out` or stderr.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use permlab::constants::xi_of;
use permlab::gfun::{self, FourierTable, FOURIER_MAX_MODE};
use permlab::harmonic::phi;
use permlab::measures::{self, Measure, MAX_ELL_TAU};
use permlab::perm;
use permlab::rngkit::{default_threads, McPlan, StreamSeed};
use permlab::sumstats::{rho_plain, tau_count, EngineLimits, TauEngine, TauInput};
use permlab::verify::{Status, Suite, CRITERIA};
use permlab::walks::{self, WalkKind};
use permlab::Error;

#[derive(Parser, Debug, Serialize)]
#[command(name = "permlab", version, about = "Invariant sets of random permutations: exact values, simulation and asymptotic constants")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Serialize)]
struct Common {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Number of Monte Carlo samples (each command has its own default).
    #[arg(long, global = true)]
    samples: Option<u64>,
    /// Worker threads; results do not depend on it. Falls back to PERMLAB_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Fixed block count that partitions the samples.
    #[arg(long, global = true, default_value_t = permlab::rngkit::DEFAULT_BLOCKS)]
    blocks: u32,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the full run record as JSON to this file instead of stderr.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum WalkMode {
    Upper,
    Lower,
}

impl From<WalkMode> for WalkKind {
    fn from(m: WalkMode) -> WalkKind {
        match m {
            WalkMode::Upper => WalkKind::Upper,
            WalkMode::Lower => WalkKind::Lower,
        }
    }
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Cmd {
    /// Exact p(k) for k <= 20.
    PkExact {
        #[arg(long)]
        k: u64,
    },
    /// p(k) by simulation.
    PkMc {
        #[arg(long)]
        k: u64,
    },
    /// Exact i(n, k) for n <= 42, as a fraction and a float.
    InkExact {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        k: u64,
    },
    /// i(n, k) by simulation of cycle types.
    InkMc {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        k: u64,
    },
    /// Direct p(k) against the model-A reweighting, 2^8 <= k <= 2^20.
    ChangeMeasure {
        #[arg(long, default_value_t = 1024)]
        k: u64,
    },
    /// N^{1/2} P(walk stays >= -m for N steps).
    WalkH {
        #[arg(long, value_enum, default_value_t = WalkMode::Upper)]
        m_mode: WalkMode,
        #[arg(long, default_value_t = 0)]
        m: u64,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
    },
    /// Endpoint law of the conditioned walk against the Rayleigh profile.
    WalkLlt {
        #[arg(long, value_enum, default_value_t = WalkMode::Upper)]
        m_mode: WalkMode,
        #[arg(long, default_value_t = 0)]
        m: u64,
        #[arg(long, default_value_t = 1600)]
        n: usize,
    },
    /// Ladder heights and renewal sums of the upper walk.
    WalkLadder,
    /// Partial sums of the Borel distribution.
    WalkBorel {
        #[arg(long, default_value_t = 1_000_000)]
        n: u64,
    },
    /// ρ of given or sampled arrival times.
    Rho {
        /// Comma-separated arrival times; sampled from a rate-1 process if absent.
        #[arg(long, value_delimiter = ',')]
        u: Option<Vec<f64>>,
        #[arg(long, default_value_t = 24)]
        ell: usize,
    },
    /// τ of given or sampled lower-process values.
    Tau {
        /// Comma-separated positive integers; sampled from the lower process if absent.
        #[arg(long, value_delimiter = ',')]
        x: Option<Vec<u64>>,
        #[arg(long, default_value_t = 24)]
        ell: usize,
    },
    /// g(x), and g_λ(x) both ways when --lambda is given.
    GfunEval {
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        x: f64,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Fourier coefficient ĝ(m) and its decay bound.
    GfunFourier {
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        m: i64,
    },
    /// max g / min g on a uniform grid.
    GfunRatio {
        #[arg(long, default_value_t = 100_000)]
        grid: usize,
    },
    /// Binomial thinning from population k against g0.
    Thinning {
        #[arg(long, default_value_t = 1 << 16)]
        k: u64,
    },
    /// Fourier coefficient of μ at mode m.
    MuFourier {
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        m: i64,
        #[arg(long, default_value_t = measures::DEFAULT_ELL_RHO)]
        ell: usize,
    },
    /// Fourier coefficient of μ′ at mode m.
    MuprimeFourier {
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        m: i64,
        #[arg(long, default_value_t = measures::DEFAULT_ELL_TAU)]
        ell: usize,
    },
    /// f = c₀ g ∗ μ ∗ μ′ from estimated coefficients up to mode m.
    PredictF {
        #[arg(long, default_value_t = 3)]
        m: i64,
        #[arg(long, default_value_t = 16)]
        ell: usize,
        #[arg(long, default_value_t = 64)]
        grid: usize,
    },
    /// Poisson-paradigm comparison over gated walk pairs (--samples pairs).
    ParadigmCheck {
        #[arg(long, default_value_t = 1 << 18)]
        k: u64,
        #[arg(long, default_value_t = 20)]
        ell: usize,
        /// Process draws per walk pair.
        #[arg(long, default_value_t = 200)]
        n: u64,
    },
    /// p̂(k) k^δ (log k)^{3/2} along a list of k.
    EndToEnd {
        #[arg(long, value_delimiter = ',', default_value = "1024,4096,16384")]
        k: Vec<u64>,
    },
    /// Run the acceptance criteria, scaling sample counts to the budget.
    VerifyAll {
        /// Seconds; 900 runs the full suite.
        #[arg(long, default_value_t = 900.0)]
        budget: f64,
        /// Comma-separated criterion ids to run (default all).
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u32>>,
    },
}

impl Cmd {
    fn name(&self) -> String {
        let v = serde_json::to_value(self).expect("command serializes");
        match v {
            Value::String(s) => s,
            Value::Object(m) => m.keys().next().cloned().unwrap_or_default(),
            _ => String::new(),
        }
    }
}

const FULL_SUITE_SECONDS: f64 = 900.0;

fn domain<T>(msg: impl Into<String>) -> Result<T, Error> {
    Err(Error::Domain(msg.into()))
}

fn check(ok: bool, msg: &str) -> Result<(), Error> {
    if ok {
        Ok(())
    } else {
        domain(msg)
    }
}

/// Range checks that run before any sampling.
fn validate(common: &Common, cmd: &Cmd) -> Result<(), Error> {
    check(common.blocks >= 1, "--blocks must be >= 1")?;
    check(common.threads.is_none_or(|t| t >= 1), "--threads must be >= 1")?;
    check(common.samples.is_none_or(|s| s >= 1), "--samples must be >= 1")?;
    match cmd {
        Cmd::PkExact { k } => check(*k >= 1, "--k must be >= 1"),
        Cmd::PkMc { k } | Cmd::Thinning { k } => check(*k >= 1, "--k must be >= 1"),
        Cmd::InkExact { n, k } | Cmd::InkMc { n, k } => check(*n >= 1 && k <= n, "need --n >= 1 and --k <= --n"),
        Cmd::ChangeMeasure { k } => check((1 << 8..=1 << 20).contains(k), "--k must be in [2^8, 2^20]"),
        Cmd::WalkH { n, .. } => check(*n >= 1, "--n must be >= 1"),
        Cmd::WalkLlt { n, .. } => check(*n >= 100, "--n must be >= 100"),
        Cmd::WalkLadder => Ok(()),
        Cmd::WalkBorel { n } => check(*n >= 1, "--n must be >= 1"),
        Cmd::Rho { u, ell } => {
            check(*ell <= EngineLimits::default().rho_mitm_max || u.is_some(), "--ell exceeds the rho engine limit")?;
            check(u.as_ref().is_none_or(|u| u.iter().all(|x| x.is_finite() && *x >= 0.0)), "--u values must be finite and >= 0")
        }
        Cmd::Tau { x, ell } => {
            check(*ell <= MAX_ELL_TAU || x.is_some(), "--ell must be <= 34")?;
            check(x.as_ref().is_none_or(|x| x.iter().all(|&v| v >= 1)), "--x values must be >= 1")
        }
        Cmd::GfunEval { x, lambda } => {
            check(x.is_finite(), "--x must be finite")?;
            check(lambda.is_none_or(|l| l > 0.0 && l.is_finite()), "--lambda must be positive")
        }
        Cmd::GfunFourier { m } => check(m.abs() <= FOURIER_MAX_MODE, "--m must satisfy |m| <= 64"),
        Cmd::GfunRatio { grid } => check(*grid >= 1, "--grid must be >= 1"),
        Cmd::MuFourier { ell, .. } => check(*ell >= 1, "--ell must be >= 1"),
        Cmd::MuprimeFourier { ell, .. } => check(*ell >= 1, "--ell must be >= 1"),
        Cmd::PredictF { m, ell, grid } => {
            check((0..=FOURIER_MAX_MODE).contains(m), "--m must be in [0, 64]")?;
            check(*ell >= 1 && *grid >= 1, "--ell and --grid must be >= 1")
        }
        Cmd::ParadigmCheck { k, ell, n } => {
            check((1 << 14..=1 << 24).contains(k), "--k must be in [2^14, 2^24]")?;
            check(*ell >= 1 && *n >= 1, "--ell and --n must be >= 1")?;
            check(common.samples.is_none_or(|s| s >= 2), "--samples (walk pairs) must be >= 2")
        }
        Cmd::EndToEnd { k } => check(!k.is_empty() && k.iter().all(|&k| k >= 2), "--k values must be >= 2"),
        Cmd::VerifyAll { budget, only } => {
            check(*budget >= 60.0 && budget.is_finite(), "--budget must be >= 60")?;
            check(only.as_ref().is_none_or(|o| o.iter().all(|&i| (1..=CRITERIA).contains(&i))), "--only ids must be in 1..=11")
        }
    }
}

struct Ctx<'a> {
    common: &'a Common,
}

impl Ctx<'_> {
    fn plan(&self, default_samples: u64) -> McPlan {
        McPlan::new(self.common.seed, self.common.samples.unwrap_or(default_samples))
            .with_blocks(self.common.blocks)
            .with_threads(self.common.threads.unwrap_or_else(default_threads))
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("payload serializes")
}

/// Returns the payload and whether a gating check failed.
fn run(cx: &Ctx, cmd: &Cmd) -> Result<(Value, bool), Error> {
    let seed = cx.common.seed;
    let v = match cmd {
        Cmd::PkExact { k } => json!({ "k": k, "p_k": perm::pk_exact_small(*k)? }),
        Cmd::PkMc { k } => {
            let e = perm::pk_mc(*k, &cx.plan(1_000_000))?;
            json!({ "k": k, "p_k": e.mean, "std_error": e.std_error, "n_samples": e.n_samples })
        }
        Cmd::InkExact { n, k } => {
            let (num, den) = perm::i_nk_rational(*n, *k)?;
            json!({ "n": n, "k": k, "i_nk": perm::ratio_to_f64(&num, &den), "numerator": num.to_string(), "denominator": den.to_string() })
        }
        Cmd::InkMc { n, k } => {
            let e = perm::i_nk_mc(*n, *k, &cx.plan(1_000_000))?;
            json!({ "n": n, "k": k, "i_nk": e.mean, "std_error": e.std_error, "n_samples": e.n_samples })
        }
        Cmd::ChangeMeasure { k } => to_value(&perm::change_of_measure_check(*k, &cx.plan(100_000))?),
        Cmd::WalkH { m_mode, m, n } => {
            let kind = WalkKind::from(*m_mode);
            let e = walks::h_estimate(kind, *m, *n, &cx.plan(100_000));
            let closed = match kind {
                WalkKind::Upper => Some(walks::h_upper_closed_form(*m)),
                WalkKind::Lower if *m == 0 => Some(walks::h_lower_at_zero()),
                WalkKind::Lower => None,
            };
            json!({ "walk": kind, "m": m, "n": n, "h": e.mean, "std_error": e.std_error, "closed_form": closed })
        }
        Cmd::WalkLlt { m_mode, m, n } => {
            let r = walks::llt_check((*m_mode).into(), *m, *n, &cx.plan(100_000))?;
            json!({
                "walk": r.kind, "m": r.m, "n": r.n, "tv_distance": r.tv_distance,
                "n_accepted": r.n_accepted, "attempts": r.attempts, "rows": to_value(&r.histogram),
            })
        }
        Cmd::WalkLadder => to_value(&walks::ladder_and_renewal_check(&cx.plan(200_000))),
        Cmd::WalkBorel { n } => json!({ "n_terms": n, "partial_sum": walks::borel_identity_check(*n)? }),
        Cmd::Rho { u, ell } => {
            let (mut u, sampled) = match u {
                Some(u) => (u.clone(), false),
                None => {
                    let mut s = StreamSeed::new(seed, 0).stream();
                    let mut t = 0.0;
                    ((0..*ell).map(|_| {
                        t += s.exp1();
                        t
                    }).collect(), true)
                }
            };
            u.sort_by(f64::total_cmp);
            let ell = if sampled { *ell } else { (*ell).min(u.len()) };
            json!({ "ell": ell, "u": u, "rho": rho_plain(&u, ell)? })
        }
        Cmd::Tau { x, ell } => {
            let mut x = match x {
                Some(x) => x.clone(),
                None => {
                    let mut s = StreamSeed::new(seed, 0).stream();
                    let mut t = 0.0;
                    (0..*ell)
                        .map(|_| {
                            t += s.exp1();
                            phi(t)
                        })
                        .collect()
                }
            };
            x.sort_unstable();
            let ell = (*ell).min(x.len());
            x.truncate(ell);
            let tau = tau_count(&TauInput { values: x.clone(), normalizer: -(ell as f64) }, TauEngine::Bitset)?;
            json!({ "ell": ell, "x": x, "tau": tau })
        }
        Cmd::GfunEval { x, lambda } => {
            let mut v = json!({ "x": x, "g": gfun::g_eval(*x), "g0": gfun::g0_eval(*x) });
            if let Some(l) = lambda {
                v["g_lambda"] = to_value(&gfun::g_lambda_eval(*l, *x)?);
            }
            v
        }
        Cmd::GfunFourier { m } => {
            let g = gfun::g_hat(*m);
            json!({ "m": m, "re": g.re, "im": g.im, "abs": g.norm(), "decay_bound": gfun::decay_bound(*m) })
        }
        Cmd::GfunRatio { grid } => {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for i in 0..*grid {
                let v = gfun::g_eval(i as f64 / *grid as f64);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            json!({ "grid": grid, "min": lo, "max": hi, "ratio_minus_one": hi / lo - 1.0 })
        }
        Cmd::Thinning { k } => {
            let e = gfun::thinning_mc(*k, &cx.plan(400_000))?;
            let g0 = gfun::g0_eval(xi_of(*k));
            json!({ "k": k, "xi": xi_of(*k), "estimate": e.mean, "std_error": e.std_error, "g0": g0, "g0_half": g0 / 2.0 })
        }
        Cmd::MuFourier { m, ell } => to_value(&measures::mu_hat_mc(*m, *ell, &cx.plan(100_000))?),
        Cmd::MuprimeFourier { m, ell } => to_value(&measures::mu_prime_hat_mc(*m, *ell, &cx.plan(100_000))?),
        Cmd::PredictF { m, ell, grid } => {
            let plan = cx.plan(20_000);
            let rs: Vec<i64> = (0..=*m).collect();
            let mu = measures::measure_modes(Measure::Mu, &rs, *ell, &plan)?;
            let mup = measures::measure_modes(Measure::MuPrime, &rs, *ell, &plan)?;
            let pf = measures::predict_f(&mu, &mup, &FourierTable::new(*m)?, *grid)?;
            let rows: Vec<Value> = pf.xi.iter().zip(&pf.f).map(|(x, f)| json!({ "xi": x, "f": f })).collect();
            json!({
                "rows": rows, "modes": to_value(&pf.modes), "max_imag": pf.max_imag,
                "error_budget": pf.error_budget, "truncation_tail": pf.truncation_tail, "ell": ell,
            })
        }
        Cmd::ParadigmCheck { k, ell, n } => {
            let r = measures::poisson_paradigm_check(*k, *n, *ell, &cx.plan(50))?;
            let mut v = to_value(&r);
            if let Value::Object(map) = &mut v {
                if let Some(pairs) = map.remove("pairs") {
                    map.insert("rows".into(), pairs);
                }
            }
            v
        }
        Cmd::EndToEnd { k } => json!({ "rows": to_value(&measures::end_to_end_ratio(k, &cx.plan(100_000))?) }),
        Cmd::VerifyAll { budget, only } => {
            let scale = (budget / FULL_SUITE_SECONDS).min(1.0);
            let suite = Suite { seed, scale, threads: cx.common.threads.unwrap_or_else(default_threads) };
            let ids: Vec<u32> = only.clone().unwrap_or_else(|| (1..=CRITERIA).collect());
            let lines: Vec<_> = ids
                .iter()
                .map(|&id| {
                    let line = suite.run(id).expect("validated id");
                    eprintln!("{line}");
                    line
                })
                .collect();
            let failed = lines.iter().any(|l| l.status == Status::Fail);
            let rows: Vec<Value> = lines
                .iter()
                .map(|l| json!({ "id": l.id, "status": l.status, "title": l.title, "measurements": to_value(&l.measurements), "notes": l.notes }))
                .collect();
            return Ok((json!({ "scale": scale, "passed": !failed, "rows": rows }), failed));
        }
    };
    Ok((v, false))
}

fn build_id() -> String {
    format!("{}+{}", env!("CARGO_PKG_VERSION"), env!("PERMLAB_BUILD_ID"))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain(_) => 2,
        Error::Capacity(_) => 3,
        Error::Resource(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 64,
            };
            let _ = e.print();
            return ExitCode::from(if code == 0 && e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 64 } else { code });
        }
    };
    if let Err(e) = validate(&cli.common, &cli.cmd) {
        eprintln!("permlab: {e}");
        return ExitCode::from(exit_code(&e));
    }
    let start = Instant::now();
    let cx = Ctx { common: &cli.common };
    let (payload, failed) = match run(&cx, &cli.cmd) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("permlab: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let body = match cli.common.format {
        Format::Json => output::to_json(&payload, false) + "\n",
        Format::Csv => match output::to_csv(&payload) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("permlab: csv: {e}");
                return ExitCode::from(1);
            }
        },
    };
    print!("{body}");
    let record = json!({
        "command": cli.cmd.name(),
        "params": to_value(&cli),
        "build_id": build_id(),
        "seed": cli.common.seed,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "payload": payload,
    });
    let text = output::to_json(&record, true) + "\n";
    match &cli.common.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("permlab: cannot write {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => eprint!("{text}"),
    }
    if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
