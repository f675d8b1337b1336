use anyhow::{bail, Result};

use shortpkt::analysis::{mean_of, netcalc_bound, saddlepoint_at, threshold_in_units, violation_at};
use shortpkt::optimizer::{
    best_throughput, blocklength_sweep, throughput_vs_blocklength, Method, ThroughputPoint,
    JUMP_LOG_THRESHOLD,
};
use shortpkt::pgf::{Metric, Regime, SystemParams};
use shortpkt::simulator::{simulate, SimConfig, SimStats};
use shortpkt::{Error, Result as CoreResult};

use crate::config::{Command, MethodArg, RunConfig};
use crate::output::{Cell, Table};

pub fn run(command: Command, cfg: &RunConfig) -> Result<Table> {
    match command {
        Command::Pdv => pdv(cfg),
        Command::Age => age(cfg),
        Command::Sweep => sweep(cfg),
        Command::Throughput => throughput(cfg),
        Command::Simulate => simulate_cmd(cfg),
        Command::Compare => compare(cfg),
    }
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::FrameSync => "sync",
        Regime::FrameAsync => "async",
    }
}

fn params_meta(t: &mut Table, p: &SystemParams) {
    t.meta("regime", Cell::Text(regime_name(p.regime()).into()));
    t.meta("n", Cell::Int(p.n() as u64));
    t.meta("lambda", Cell::Float(p.lambda()));
    t.meta("epsilon", Cell::Float(p.epsilon()));
}

fn wants(cfg: &RunConfig, m: MethodArg) -> bool {
    cfg.method().map_or(true, |chosen| chosen == m)
}

/// Saddlepoint value; a refused threshold is an error only when the method
/// was asked for explicitly, otherwise the cell is NA.
fn saddlepoint_cell(cfg: &RunConfig, p: &SystemParams, metric: Metric, d: u64) -> Result<Cell> {
    if !wants(cfg, MethodArg::Saddlepoint) {
        return Ok(Cell::Na);
    }
    match saddlepoint_at(p, metric, d, cfg.precision()) {
        Ok(s) => Ok(Cell::Float(s.approx)),
        Err(e @ (Error::BelowMean { .. } | Error::Convergence(_))) if cfg.method().is_none() => {
            eprintln!("note: saddlepoint at d = {d}: {e}");
            Ok(Cell::Na)
        }
        Err(e) => Err(e.into()),
    }
}

fn netcalc_value(p: &SystemParams, d: u64) -> CoreResult<f64> {
    match netcalc_bound(p, d) {
        // an empty feasible set leaves only the trivial bound
        Err(Error::InfeasibleBound(_)) => Ok(1.0),
        other => other,
    }
}

fn netcalc_cell(cfg: &RunConfig, p: &SystemParams, d: u64) -> Result<Cell> {
    if !wants(cfg, MethodArg::Netcalc) {
        return Ok(Cell::Na);
    }
    if p.regime() == Regime::FrameAsync {
        if cfg.method() == Some(MethodArg::Netcalc) {
            bail!("the network-calculus bound is only defined for --regime sync");
        }
        return Ok(Cell::Na);
    }
    Ok(Cell::Float(netcalc_value(p, d)?))
}

fn pdv(cfg: &RunConfig) -> Result<Table> {
    let p = cfg.system()?;
    let mut t = Table::new("pdv", &["d0_cu", "d_frames", "pdv_exact", "pdv_saddlepoint", "pdv_netcalc"]);
    params_meta(&mut t, &p);
    t.meta("mean_delay_units", Cell::Float(mean_of(&p, Metric::Delay, cfg.precision())?));
    for d0 in cfg.d0()? {
        let d = threshold_in_units(d0, p.regime().unit(), p.n());
        let exact = if wants(cfg, MethodArg::Exact) {
            Cell::Float(violation_at(&p, Metric::Delay, d, cfg.precision())?)
        } else {
            Cell::Na
        };
        let sp = saddlepoint_cell(cfg, &p, Metric::Delay, d)?;
        let nc = netcalc_cell(cfg, &p, d)?;
        t.push(vec![Cell::Int(d0), Cell::Int(d), exact, sp, nc]);
    }
    Ok(t)
}

fn age(cfg: &RunConfig) -> Result<Table> {
    if cfg.method() == Some(MethodArg::Netcalc) {
        bail!("no network-calculus bound is available for the peak age");
    }
    let p = cfg.system()?;
    let mut t = Table::new("age", &["a0_cu", "a_units", "age_exact", "age_saddlepoint"]);
    params_meta(&mut t, &p);
    t.meta("mean_peak_age_units", Cell::Float(mean_of(&p, Metric::PeakAge, cfg.precision())?));
    for a0 in cfg.a0()? {
        let a = threshold_in_units(a0, p.regime().unit(), p.n());
        let exact = if wants(cfg, MethodArg::Exact) {
            Cell::Float(violation_at(&p, Metric::PeakAge, a, cfg.precision())?)
        } else {
            Cell::Na
        };
        let sp = saddlepoint_cell(cfg, &p, Metric::PeakAge, a)?;
        t.push(vec![Cell::Int(a0), Cell::Int(a), exact, sp]);
    }
    Ok(t)
}

fn sweep(cfg: &RunConfig) -> Result<Table> {
    if matches!(cfg.method(), Some(m) if m != MethodArg::Exact) {
        bail!("sweep supports --method exact only");
    }
    let d0 = cfg.single_d0()?;
    let lambda = cfg.lambda()?;
    let s = blocklength_sweep(cfg.family()?, cfg.n_range()?, lambda, d0, cfg.regime(), cfg.precision())?;
    let mut t = Table::new("sweep", &["n", "epsilon", "d", "pdv_exact"]);
    t.meta("regime", Cell::Text(regime_name(cfg.regime()).into()));
    t.meta("lambda", Cell::Float(lambda));
    t.meta("d0_cu", Cell::Int(d0));
    t.meta("argmin_n", Cell::Int(s.argmin as u64));
    let jumps: Vec<String> = s.jumps(JUMP_LOG_THRESHOLD).iter().map(u32::to_string).collect();
    t.meta("jumps_n", Cell::Text(jumps.join(" ")));
    for r in &s.rows {
        t.push(vec![Cell::Int(r.n as u64), Cell::Float(r.epsilon), Cell::Int(r.d), Cell::opt(r.pdv)]);
    }
    Ok(t)
}

fn throughput(cfg: &RunConfig) -> Result<Table> {
    let (exact, netcalc) = match cfg.method() {
        None => (true, cfg.regime() == Regime::FrameSync),
        Some(MethodArg::Exact) => (true, false),
        Some(MethodArg::Netcalc) if cfg.regime() == Regime::FrameAsync => {
            bail!("the network-calculus bound is only defined for --regime sync")
        }
        Some(MethodArg::Netcalc) => (false, true),
        Some(MethodArg::Saddlepoint) => bail!("throughput supports --method exact or netcalc"),
    };
    let (d0, target) = (cfg.single_d0()?, cfg.target()?);
    let family = cfg.family()?;
    let k = cfg.k()?;
    let ns = cfg.n_range()?;
    let curve = |on: bool, m: Method| -> Result<Option<Vec<ThroughputPoint>>> {
        if !on {
            return Ok(None);
        }
        Ok(Some(throughput_vs_blocklength(family, ns.clone(), d0, target, m, cfg.regime(), cfg.precision())?))
    };
    let e = curve(exact, Method::ExactInversion)?;
    let b = curve(netcalc, Method::NetcalcBound)?;

    // a target no blocklength can meet is an error, not a table of zeros
    let all = e.iter().chain(b.iter()).flatten();
    if !all.clone().any(|p| p.feasible) {
        let first = *ns.start();
        let eps = family.epsilon(first)?;
        let m = if exact { Method::ExactInversion } else { Method::NetcalcBound };
        let floor = shortpkt::optimizer::delay_violation(
            &SystemParams::new(1e-9 * (1.0 - eps) / first as f64, first, eps, cfg.regime())?,
            d0,
            m,
            cfg.precision(),
        )?;
        return Err(Error::InfeasibleTarget { target, floor }.into());
    }

    let mut t = Table::new(
        "throughput",
        &["n", "epsilon", "d", "lambda_star_exact", "throughput_exact", "lambda_star_netcalc", "throughput_netcalc"],
    );
    t.meta("regime", Cell::Text(regime_name(cfg.regime()).into()));
    t.meta("k", Cell::Int(k as u64));
    t.meta("d0_cu", Cell::Int(d0));
    t.meta("target", Cell::Float(target));
    for (key, curve) in [("best_n_exact", &e), ("best_n_netcalc", &b)] {
        if let Some(best) = curve.as_deref().and_then(best_throughput) {
            t.meta(key, Cell::Int(best.n as u64));
        }
    }
    let cells = |c: &Option<Vec<ThroughputPoint>>, i: usize| match c.as_ref().map(|v| v[i]) {
        Some(p) if p.feasible => [Cell::Float(p.lambda_star), Cell::Float(k as f64 * p.lambda_star)],
        _ => [Cell::Na, Cell::Na],
    };
    for (i, n) in ns.clone().enumerate() {
        let epsilon = family.epsilon(n)?;
        let d = threshold_in_units(d0, cfg.regime().unit(), n);
        let mut row = vec![Cell::Int(n as u64), Cell::Float(epsilon), Cell::Int(d)];
        row.extend(cells(&e, i));
        row.extend(cells(&b, i));
        t.push(row);
    }
    Ok(t)
}

fn run_simulation(cfg: &RunConfig) -> Result<(SystemParams, SimStats)> {
    let p = cfg.system_allow_unstable()?;
    if !p.is_stable() {
        eprintln!(
            "warning: lambda*n = {} >= 1 - epsilon = {}; simulating an overloaded queue",
            p.load(),
            1.0 - p.epsilon()
        );
    }
    let sim = SimConfig::new(p, cfg.horizon(), cfg.seed())
        .with_warmup(cfg.warmup())
        .with_replicas(cfg.replicas())
        .with_stride(cfg.stride());
    Ok((p, simulate(&sim)?))
}

fn sim_meta(t: &mut Table, cfg: &RunConfig, s: &SimStats) {
    t.meta("horizon", Cell::Int(cfg.horizon()));
    t.meta("warmup", Cell::Int(cfg.warmup()));
    t.meta("seed", Cell::Int(cfg.seed()));
    t.meta("replicas", Cell::Int(cfg.replicas() as u64));
    t.meta("stride", Cell::Int(cfg.stride() as u64));
    t.meta("bulks_observed", Cell::Int(s.bulks_observed));
    t.meta("peak_ages_observed", Cell::Int(s.peak_ages_observed));
    t.meta("mean_delay_units", Cell::Float(s.mean_delay));
    t.meta("mean_delay_stderr", Cell::Float(s.mean_delay_stderr));
    t.meta("mean_peak_age_units", Cell::Float(s.mean_peak_age));
    t.meta("mean_peak_age_stderr", Cell::Float(s.mean_peak_age_stderr));
    t.meta("stable", Cell::Text(s.stable.to_string()));
}

fn simulate_cmd(cfg: &RunConfig) -> Result<Table> {
    let (p, s) = run_simulation(cfg)?;
    let mut t = Table::new("simulate", &["d", "delay_ccdf", "delay_stderr", "peak_age_ccdf", "peak_age_stderr"]);
    params_meta(&mut t, &p);
    sim_meta(&mut t, cfg, &s);
    let d_max = s.delay_ccdf.d_max().max(s.peak_age_ccdf.d_max());
    for d in 1..=d_max {
        let get = |v: Option<f64>| Cell::Float(v.unwrap_or(0.0));
        t.push(vec![
            Cell::Int(d),
            get(s.delay_ccdf.at(d)),
            get(s.delay_ccdf.stderr_at(d)),
            get(s.peak_age_ccdf.at(d)),
            get(s.peak_age_ccdf.stderr_at(d)),
        ]);
    }
    Ok(t)
}

fn compare(cfg: &RunConfig) -> Result<Table> {
    // analytical columns need a steady state
    let p = cfg.system()?;
    let d0s = cfg.d0()?;
    let (_, s) = run_simulation(cfg)?;
    let mut t = Table::new(
        "compare",
        &["d0_cu", "d", "exact", "saddlepoint", "netcalc", "simulation", "simulation_stderr"],
    );
    params_meta(&mut t, &p);
    sim_meta(&mut t, cfg, &s);
    t.meta("mean_delay_exact", Cell::Float(mean_of(&p, Metric::Delay, cfg.precision())?));
    for d0 in d0s {
        let d = threshold_in_units(d0, p.regime().unit(), p.n());
        let exact = if wants(cfg, MethodArg::Exact) {
            Cell::Float(violation_at(&p, Metric::Delay, d, cfg.precision())?)
        } else {
            Cell::Na
        };
        t.push(vec![
            Cell::Int(d0),
            Cell::Int(d),
            exact,
            saddlepoint_cell(cfg, &p, Metric::Delay, d)?,
            netcalc_cell(cfg, &p, d)?,
            Cell::Float(s.delay_ccdf.at(d).unwrap_or(0.0)),
            Cell::Float(s.delay_ccdf.stderr_at(d).unwrap_or(0.0)),
        ]);
    }
    Ok(t)
}

/// Exit status for a failed run.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::InvalidParameter(_)) => 2,
        Some(Error::Unstable { .. }) => 3,
        Some(Error::BelowMean { .. }) => 4,
        Some(Error::InfeasibleTarget { .. }) => 5,
        Some(Error::AssumptionViolation(_)) => 6,
        Some(_) => 1,
        None => 2,
    }
}
