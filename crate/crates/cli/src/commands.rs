//! One function per subcommand. Each returns tables and console lines; the
//! caller does all file writing.

use rayon::prelude::*;

use qa_core::asymptotics::{ht_limit_rate, lv_limit_rate, solve_alpha, solve_alpha_with, verify_taylor_vanishing, ScalingSequence};
use qa_core::rate_functions::{eta_batch, RateCurve, RateKind};
use qa_core::rng::stream_seed;
use qa_core::simulator::{
    run_stationary, validate_stationary_equation, validate_terminal_condition, PhiProbe, ProbeReport, StationaryConfig,
};
use qa_core::stats::{exponential_cdf, ks_distance_discrete};
use qa_core::tilting::{is_tail_estimate_with, IsOptions};
use qa_core::{ArrivalSpec, ExtReal, QaError, QueueModel, Truncation};

use crate::config::{AlphaBlock, RatesBlock, SimulateBlock, StudyBlock, TailBlock, ValidateBlock};
use crate::error::CliError;
use crate::output::{num, Table};

#[derive(Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub summary: Vec<String>,
    pub replications: usize,
}

fn trunc_label(t: Truncation) -> String {
    match t {
        Truncation::At(v) => num(v),
        Truncation::Infinite => "inf".into(),
        Truncation::Limit => "limit".into(),
    }
}

fn ext(x: ExtReal) -> String {
    num(x.to_f64())
}

fn rate_row(theta: f64, trunc: Truncation, kind: &str, value: Result<f64, QaError>, residual: impl Fn(f64) -> Option<f64>) -> Vec<String> {
    let mut row = vec![num(theta)];
    match value {
        Ok(x) => {
            row.push(num(x));
            row.push(trunc_label(trunc));
            row.push(kind.into());
            row.push(residual(x).map(num).unwrap_or_default());
            row.push("ok".into());
        }
        Err(e) => {
            row.push(String::new());
            row.push(trunc_label(trunc));
            row.push(kind.into());
            row.push(String::new());
            row.push(match e {
                QaError::NoRoot { .. } => "no_root".into(),
                other => format!("error: {other}"),
            });
        }
    }
    row
}

const RATE_HEADER: [&str; 6] = ["theta", "value", "trunc", "kind", "residual", "status"];

/// η/ζ curves of every law on the θ grid, one table per law.
pub fn rates(model: &QueueModel, block: &RatesBlock) -> Result<Outcome, CliError> {
    let thetas = block.theta.points()?;
    let truncs: Vec<Truncation> = block.v.iter().map(|t| t.truncation()).collect::<Result<_, _>>()?;
    let mut jobs: Vec<(String, Box<dyn Fn(f64, Truncation) -> Vec<String> + Send + Sync>)> = Vec::new();
    match &model.arrival {
        ArrivalSpec::Batch { law, batch } => {
            let (law, batch) = (law.clone(), batch.clone());
            jobs.push((
                "rates_eta_0".into(),
                Box::new(move |theta, tr| {
                    let residual = |x: f64| {
                        let b = batch.mgf(None, theta).finite()?;
                        let m = match tr {
                            Truncation::At(v) => law.truncated_mgf(v, x),
                            Truncation::Infinite => law.mgf(x).to_f64(),
                            Truncation::Limit => return None,
                        };
                        Some((b * m - 1.0).abs())
                    };
                    rate_row(theta, tr, "eta_batch", eta_batch(&batch, &law, None, tr, theta), residual)
                }),
            ));
        }
        arrival => {
            for (i, law) in arrival.streams().into_iter().enumerate() {
                let law = law.clone();
                jobs.push((
                    format!("rates_eta_{i}"),
                    Box::new(move |theta, tr| {
                        let c = RateCurve::new(law.clone(), tr, RateKind::Arrival);
                        rate_row(theta, tr, "eta", c.eval(theta), |x| c.residual(theta, x))
                    }),
                ));
            }
        }
    }
    for (i, law) in model.services.iter().enumerate() {
        let law = law.clone();
        jobs.push((
            format!("rates_zeta_{i}"),
            Box::new(move |theta, tr| {
                let c = RateCurve::new(law.clone(), tr, RateKind::Service);
                rate_row(theta, tr, "zeta", c.eval(theta), |x| c.residual(theta, x))
            }),
        ));
    }
    let tables: Vec<Table> = jobs
        .par_iter()
        .map(|(name, f)| {
            let mut t = Table::new(name.clone(), &RATE_HEADER);
            for &tr in &truncs {
                for &theta in &thetas {
                    t.push(f(theta, tr));
                }
            }
            t
        })
        .collect();
    let summary = tables
        .iter()
        .map(|t| {
            let bad = t.rows.iter().filter(|r| r[5] != "ok").count();
            format!("{}: {} rows, {bad} without a root", t.name, t.rows.len())
        })
        .collect();
    Ok(Outcome {
        tables,
        summary,
        replications: 0,
    })
}

pub fn alpha(model: &QueueModel, block: &AlphaBlock) -> Result<Outcome, CliError> {
    model.ensure_stable()?;
    let d = solve_alpha_with(model, &block.subsets)?;
    let mut subsets = Table::new("alpha", &["subset", "rho", "alpha"]);
    let mut summary = vec![format!("alpha={:.6}", d.alpha), format!("regime={}", d.regime)];
    for (set, a) in &d.alpha_subset {
        let rho = d.rho_subset.get(set).copied().unwrap_or(f64::NAN);
        let label = set.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        subsets.push(vec![label.clone(), num(rho), num(*a)]);
        summary.push(format!("  A=[{label}] rho_A={rho:.6} alpha_A={a:.6}"));
    }
    let mut overall = Table::new("alpha_summary", &["alpha", "regime"]);
    overall.push(vec![num(d.alpha), d.regime.to_string()]);
    let mut servers = Table::new("servers", &["server", "theta_i"]);
    for (i, t) in d.server_thetas.iter().enumerate() {
        servers.push(vec![i.to_string(), ext(*t)]);
    }
    Ok(Outcome {
        tables: vec![overall, subsets, servers],
        summary,
        replications: 0,
    })
}

pub fn simulate(model: &QueueModel, block: &SimulateBlock, seed: u64) -> Result<Outcome, CliError> {
    let mut cfg = StationaryConfig::new(block.horizon)
        .with_probes(block.probes.clone())
        .with_replications(block.replications);
    cfg.warmup_events = block.warmup;
    let est = run_stationary(model, &cfg, seed)?;
    let mut pmf = Table::new("pmf", &["level", "prob", "se"]);
    let mut mean = 0.0;
    for (l, (p, se)) in est.pmf().into_iter().enumerate() {
        mean += l as f64 * p;
        pmf.push(vec![l.to_string(), num(p), num(se)]);
    }
    let mut header = vec!["v".to_string(), "theta".into(), "phi".into()];
    header.extend((1..=model.k).map(|i| format!("phi_{i}")));
    header.push("se".into());
    let mut phi = Table {
        name: "phi".into(),
        header,
        rows: Vec::new(),
    };
    for p in &block.probes {
        let e = est.phi(p.v, p.theta)?;
        let mut row = vec![num(p.v), num(p.theta), num(e.phi.0)];
        row.extend(e.server.iter().map(|s| num(s.0)));
        row.push(num(e.phi.1));
        phi.push(row);
    }
    let mut tables = vec![pmf];
    if !block.probes.is_empty() {
        tables.push(phi);
    }
    Ok(Outcome {
        tables,
        summary: vec![
            format!("events={} cycles={} time={:.6}", est.events, est.cycles, est.total_time),
            format!("mean_queue_length={mean:.6}"),
        ],
        replications: cfg.replications,
    })
}

/// Command-line overrides for the `tail` block.
#[derive(Debug, Clone, Default)]
pub struct TailOverrides {
    pub level: Option<usize>,
    pub theta: Option<f64>,
    pub trunc: Option<f64>,
    pub budget: Option<u64>,
}

pub const DEFAULT_TAIL_BUDGET: u64 = 1_000_000;

pub fn tail(model: &QueueModel, block: &TailBlock, over: &TailOverrides, seed: u64) -> Result<Outcome, CliError> {
    let levels = match over.level {
        Some(l) => vec![l],
        None => block.levels.clone(),
    };
    if levels.is_empty() {
        return Err(CliError::Config("tail needs at least one level (config tail.levels or --level)".into()));
    }
    if let Some(&l) = levels.iter().find(|&&l| l <= model.k) {
        return Err(CliError::Config(format!("tail level {l} must exceed k = {}", model.k)));
    }
    let opts = IsOptions {
        budget_events: over.budget.or(block.budget).unwrap_or(DEFAULT_TAIL_BUDGET),
        theta: over.theta.or(block.theta),
        trunc: over.trunc.or(block.trunc),
        naive_baseline: block.naive,
    };
    let results: Vec<_> = levels
        .par_iter()
        .map(|&l| is_tail_estimate_with(model, l, &opts, stream_seed(seed, l as u64)))
        .collect::<Result<_, _>>()?;
    let mut t = Table::new("tail", &["level", "estimate", "re", "method", "se"]);
    let mut summary = Vec::new();
    for r in &results {
        t.push(vec![r.level.to_string(), num(r.estimate), num(r.relative_error), "is".into(), num(r.se)]);
        let mut line = format!(
            "level={} theta={:.6} is={:.6e} re={:.4}",
            r.level, r.theta, r.estimate, r.relative_error
        );
        if let Some(n) = &r.naive {
            t.push(vec![r.level.to_string(), num(n.estimate), num(n.relative_error), "naive".into(), num(n.se)]);
            line += &format!(" naive={:.6e} naive_re={:.4}", n.estimate, n.relative_error);
        }
        summary.push(line);
    }
    Ok(Outcome {
        tables: vec![t],
        summary,
        replications: levels.len(),
    })
}

/// Scaling-study rows for each `n`: KS distance of `q_n L⁽ⁿ⁾` to the
/// exponential limit and the sup of the normalised Taylor remainders.
fn study(seq: &ScalingSequence, rate: f64, block: &StudyBlock, growth: f64, seed: u64, name: &str) -> Result<Outcome, CliError> {
    let ns = block.n.values();
    if ns.is_empty() || ns.contains(&0) {
        return Err(CliError::Config("study n values must be nonempty and positive".into()));
    }
    if !(growth > 0.0) {
        return Err(CliError::Config("study growth must be positive".into()));
    }
    let rows: Vec<(u32, f64, f64, f64, f64)> = ns
        .par_iter()
        .map(|&n| -> Result<_, CliError> {
            let sys = seq.system(n)?;
            let events = (block.events as f64 * growth.powi(n as i32)).round() as u64;
            let est = run_stationary(&sys.model, &StationaryConfig::new(events), stream_seed(seed, n as u64))?;
            let q = sys.q_n();
            let atoms: Vec<(f64, f64)> = est.pmf().iter().enumerate().map(|(l, p)| (q * l as f64, p.0)).collect();
            let ks = ks_distance_discrete(&atoms, exponential_cdf(rate));
            let taylor = verify_taylor_vanishing(seq, &[n], &block.taylor_theta)?;
            let sup = taylor.sup_by_n().first().map_or(f64::NAN, |r| r.1);
            Ok((n, sys.r_n, sys.s_n, ks, sup))
        })
        .collect::<Result<_, _>>()?;
    let mut t = Table::new(name, &["n", "r_n", "s_n", "rate", "ks_distance", "taylor_sup"]);
    let mut summary = Vec::new();
    for &(n, r, s, ks, sup) in &rows {
        t.push(vec![n.to_string(), num(r), num(s), num(rate), num(ks), num(sup)]);
        summary.push(format!("n={n} ks={ks:.5} taylor_sup={sup:.3e}"));
    }
    let decreasing = rows.windows(2).all(|w| w[1].3 < w[0].3);
    summary.push(format!("limit_rate={rate:.6} ks_decreasing={decreasing}"));
    Ok(Outcome {
        tables: vec![t],
        summary,
        replications: rows.len(),
    })
}

pub const HT_GROWTH: f64 = 4.0;

pub fn ht_study(model: &QueueModel, block: &StudyBlock, seed: u64) -> Result<Outcome, CliError> {
    let seq = ScalingSequence::heavy_traffic(model.clone())?;
    let rate = ht_limit_rate(&seq)?;
    study(&seq, rate, block, block.growth.unwrap_or(HT_GROWTH), seed, "ht_study")
}

pub fn lv_study(model: &QueueModel, block: &crate::config::LvStudyBlock, seed: u64) -> Result<Outcome, CliError> {
    let seq = ScalingSequence::large_variance(model.clone(), block.b2.clone(), block.r_exponent)?;
    let rate = lv_limit_rate(&seq)?;
    // Cost per member grows like 1 / (q_n r_n)² = 2^{n(1 + 2r)}.
    let growth = block.growth.unwrap_or(2f64.powf(1.0 + 2.0 * block.r_exponent));
    study(&seq, rate, &block.study(), growth, seed, "lv_study")
}

/// `v ∈ {0.5, 1, 2}` and `θ ∈ {−0.5, 0, α/4}`.
fn default_probes(model: &QueueModel) -> Result<Vec<PhiProbe>, CliError> {
    let alpha = solve_alpha(model)?.alpha;
    let mut thetas = vec![-0.5, 0.0];
    if alpha > 0.0 {
        thetas.push(0.25 * alpha);
    }
    Ok([0.5, 1.0, 2.0]
        .iter()
        .flat_map(|&v| thetas.iter().map(move |&theta| PhiProbe { v, theta }))
        .collect())
}

fn report_row(r: &ProbeReport) -> Vec<String> {
    vec![
        r.kind.to_string(),
        num(r.v),
        num(r.theta),
        num(r.residual),
        num(r.se),
        num(r.z),
        if r.pass { "PASS" } else { "FAIL" }.to_string(),
    ]
}

pub fn validate(model: &QueueModel, block: &ValidateBlock, seed: u64) -> Result<Outcome, CliError> {
    model.ensure_stable()?;
    let probes = if block.probes.is_empty() {
        default_probes(model)?
    } else {
        block.probes.clone()
    };
    let est = run_stationary(model, &StationaryConfig::new(block.horizon).with_probes(probes.clone()), seed)?;
    let stationary: Vec<ProbeReport> = probes
        .iter()
        .map(|p| validate_stationary_equation(model, p.v, p.theta, &est))
        .collect::<Result<_, _>>()?;
    let terminal: Vec<ProbeReport> = probes
        .par_iter()
        .enumerate()
        .map(|(j, p)| validate_terminal_condition(model, block.jumps, p.v, p.theta, stream_seed(seed, 1 + j as u64)))
        .collect::<Result<_, _>>()?;
    let mut report = Table::new("validate", &["kind", "v", "theta", "residual", "se", "z", "pass"]);
    let mut jumps = Table::new("jumps", &["v", "theta", "jumps", "mean_increment", "se", "z"]);
    let mut summary = Vec::new();
    for r in stationary.iter().chain(&terminal) {
        report.push(report_row(r));
        summary.push(format!(
            "{} {} v={} theta={} residual={:.3e} z={:.2}",
            if r.pass { "PASS" } else { "FAIL" },
            r.kind,
            r.v,
            r.theta,
            r.residual,
            r.z
        ));
    }
    for r in &terminal {
        jumps.push(vec![num(r.v), num(r.theta), block.jumps.to_string(), num(r.residual), num(r.se), num(r.z)]);
    }
    let failed = stationary.iter().chain(&terminal).filter(|r| !r.pass).count();
    summary.push(format!("{} probes, {failed} failed", 2 * probes.len()));
    Ok(Outcome {
        tables: vec![report, jumps],
        summary,
        replications: 1 + probes.len(),
    })
}
