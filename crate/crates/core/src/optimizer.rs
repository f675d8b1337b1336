//! Arrival-rate and blocklength optimization on top of [`crate::analysis`].

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, threshold_in_units};
use crate::channel::{error_probability, ChannelParams};
use crate::error::{Error, Result};
use crate::pgf::{Metric, Regime, SystemParams};
use crate::precision::Precision;

/// Relative width at which the arrival-rate bisection stops.
pub const RATE_TOLERANCE: f64 = 1e-4;

/// Fraction of the stability limit used to probe the `lambda -> 0` floor.
const FLOOR_FRACTION: f64 = 1e-9;

/// How the violation probability is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    ExactInversion,
    NetcalcBound,
}

/// Violation probability for a budget of `d0` channel uses.
pub fn delay_violation(p: &SystemParams, d0: u64, method: Method, precision: Precision) -> Result<f64> {
    let d = threshold_in_units(d0, p.regime().unit(), p.n());
    match method {
        Method::ExactInversion => analysis::violation_at(p, Metric::Delay, d, precision),
        Method::NetcalcBound => match analysis::netcalc_bound(p, d) {
            Err(Error::InfeasibleBound(_)) => Ok(1.0),
            other => other,
        },
    }
}

/// Result of [`max_arrival_rate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateSearch {
    pub lambda_star: f64,
    /// Violation probability as `lambda -> 0`.
    pub floor: f64,
    /// Every `(lambda, P)` evaluated, in evaluation order.
    pub probes: Vec<(f64, f64)>,
}

/// Largest `lambda` with violation probability at most `target`.
///
/// Bisects over `(0, (1 - eps) / n)` assuming the violation probability
/// grows with `lambda`; the assumption is checked on every probe.
pub fn max_arrival_rate(
    channel: &ChannelParams,
    d0: u64,
    target: f64,
    method: Method,
    regime: Regime,
    precision: Precision,
) -> Result<RateSearch> {
    max_arrival_rate_at(channel.n, error_probability(channel)?, d0, target, method, regime, precision)
}

/// [`max_arrival_rate`] for a given error probability instead of a channel.
pub fn max_arrival_rate_at(
    n: u32,
    eps: f64,
    d0: u64,
    target: f64,
    method: Method,
    regime: Regime,
    precision: Precision,
) -> Result<RateSearch> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::InvalidParameter(format!("target must lie in (0, 1], got {target}")));
    }
    if d0 == 0 {
        return Err(Error::InvalidParameter("latency budget d0 must be at least 1 CU".into()));
    }
    let cap = (1.0 - eps) / n as f64;
    let pdv = |lambda: f64| {
        let p = SystemParams::new(lambda, n, eps, regime)?;
        delay_violation(&p, d0, method, precision)
    };

    let mut lo = FLOOR_FRACTION * cap;
    let floor = pdv(lo)?;
    if floor > target {
        return Err(Error::InfeasibleTarget { target, floor });
    }
    let mut probes = vec![(lo, floor)];
    let mut hi = cap;
    while hi - lo > RATE_TOLERANCE * lo {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = pdv(mid)?;
        probes.push((mid, v));
        if v <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    check_monotone(&probes)?;
    Ok(RateSearch { lambda_star: lo, floor, probes })
}

fn check_monotone(probes: &[(f64, f64)]) -> Result<()> {
    let mut sorted = probes.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sorted.windows(2) {
        let ((l0, p0), (l1, p1)) = (w[0], w[1]);
        if p1 < p0 - (1e-9 * p0 + 1e-15) {
            return Err(Error::AssumptionViolation(format!(
                "violation probability decreases from {p0:e} at lambda = {l0:e} \
                 to {p1:e} at lambda = {l1:e}"
            )));
        }
    }
    Ok(())
}

/// One blocklength of a throughput curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThroughputPoint {
    pub n: u32,
    pub epsilon: f64,
    /// Threshold in the regime's unit.
    pub d: u64,
    /// Zero when even `lambda -> 0` misses the target.
    pub lambda_star: f64,
    /// `k lambda_star` in bits per channel use.
    pub throughput: f64,
    pub feasible: bool,
    pub method: Method,
}

/// Family of channels sharing SNR and payload, indexed by blocklength.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChannelFamily {
    pub rho: f64,
    pub k: u32,
    /// Error probability used for every `n` instead of the channel's own.
    pub fixed_epsilon: Option<f64>,
}

impl ChannelFamily {
    pub fn new(rho: f64, k: u32) -> Self {
        ChannelFamily { rho, k, fixed_epsilon: None }
    }

    pub fn with_fixed_epsilon(self, eps: f64) -> Self {
        ChannelFamily { fixed_epsilon: Some(eps), ..self }
    }

    pub fn at(&self, n: u32) -> Result<ChannelParams> {
        ChannelParams::new(self.rho, self.k, n)
    }

    pub fn epsilon(&self, n: u32) -> Result<f64> {
        match self.fixed_epsilon {
            Some(eps) if eps > 0.0 && eps < 1.0 => Ok(eps),
            Some(eps) => Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {eps}"))),
            None => error_probability(&self.at(n)?),
        }
    }
}

/// Maximum throughput for every `n` in `ns`, in order.
pub fn throughput_vs_blocklength(
    family: ChannelFamily,
    ns: RangeInclusive<u32>,
    d0: u64,
    target: f64,
    method: Method,
    regime: Regime,
    precision: Precision,
) -> Result<Vec<ThroughputPoint>> {
    let ns: Vec<u32> = ns.collect();
    ns.par_iter()
        .map(|&n| {
            let epsilon = family.epsilon(n)?;
            let d = threshold_in_units(d0, regime.unit(), n);
            let lambda_star = match max_arrival_rate_at(n, epsilon, d0, target, method, regime, precision) {
                Ok(r) => Some(r.lambda_star),
                Err(Error::InfeasibleTarget { .. }) => None,
                Err(e) => return Err(e),
            };
            let l = lambda_star.unwrap_or(0.0);
            Ok(ThroughputPoint {
                n,
                epsilon,
                d,
                lambda_star: l,
                throughput: family.k as f64 * l,
                feasible: lambda_star.is_some(),
                method,
            })
        })
        .collect()
}

/// The point of largest throughput; ties go to the smaller `n`.
pub fn best_throughput(points: &[ThroughputPoint]) -> Option<&ThroughputPoint> {
    points
        .iter()
        .filter(|p| p.feasible)
        .fold(None, |best: Option<&ThroughputPoint>, p| match best {
            Some(b) if b.throughput >= p.throughput => Some(b),
            _ => Some(p),
        })
}

/// One row of a blocklength sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: u32,
    pub epsilon: f64,
    pub d: u64,
    /// `None` when the queue is unstable at this blocklength.
    pub pdv: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    /// Blocklength of the smallest violation probability.
    pub argmin: u32,
}

impl Sweep {
    /// Blocklengths `n` at which the threshold in the PGF's unit differs
    /// from the one at `n - 1`.
    pub fn threshold_changes(&self) -> Vec<u32> {
        self.rows.windows(2).filter(|w| w[0].d != w[1].d).map(|w| w[1].n).collect()
    }

    /// Blocklengths `n` where `ln P(n) - ln P(n - 1)` departs from the median
    /// of the four neighbouring log-increments by more than `log_threshold`.
    ///
    /// Only steps surrounded by stable rows with positive probabilities are
    /// examined. Uses no knowledge of `d`, so it can be checked against
    /// [`Sweep::threshold_changes`].
    pub fn jumps(&self, log_threshold: f64) -> Vec<u32> {
        let lp: Vec<Option<f64>> = self
            .rows
            .iter()
            .map(|r| r.pdv.filter(|&v| v > 0.0).map(f64::ln))
            .collect();
        let step = |i: usize| -> Option<f64> { Some(lp.get(i).copied()?? - lp.get(i.checked_sub(1)?).copied()??) };
        (2..self.rows.len().saturating_sub(2))
            .filter(|&i| {
                let Some(di) = step(i) else { return false };
                let mut nb: Vec<f64> = [i - 2, i - 1, i + 1, i + 2].iter().filter_map(|&k| step(k)).collect();
                if nb.len() < 4 {
                    return false;
                }
                nb.sort_by(f64::total_cmp);
                (di - 0.5 * (nb[1] + nb[2])).abs() > log_threshold
            })
            .map(|i| self.rows[i].n)
            .collect()
    }
}

/// Default threshold for [`Sweep::jumps`]: a factor of about 1.65 beyond the
/// local trend.
pub const JUMP_LOG_THRESHOLD: f64 = 0.5;

/// Exhaustive sweep of the delay violation probability over blocklengths.
///
/// No unimodal search: the curve jumps wherever `ceil(d0 / n)` changes.
pub fn blocklength_sweep(
    family: ChannelFamily,
    ns: RangeInclusive<u32>,
    lambda: f64,
    d0: u64,
    regime: Regime,
    precision: Precision,
) -> Result<Sweep> {
    let ns: Vec<u32> = ns.collect();
    if ns.is_empty() {
        return Err(Error::InvalidParameter("empty blocklength range".into()));
    }
    let rows: Vec<SweepRow> = ns
        .par_iter()
        .map(|&n| {
            let epsilon = family.epsilon(n)?;
            let d = threshold_in_units(d0, regime.unit(), n);
            let pdv = match SystemParams::new(lambda, n, epsilon, regime) {
                Ok(p) => Some(delay_violation(&p, d0, Method::ExactInversion, precision)?),
                Err(Error::Unstable { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(SweepRow { n, epsilon, d, pdv })
        })
        .collect::<Result<_>>()?;
    let argmin = rows
        .iter()
        .filter_map(|r| r.pdv.map(|v| (r.n, v)))
        .fold(None, |best: Option<(u32, f64)>, (n, v)| match best {
            Some((_, bv)) if bv <= v => best,
            _ => Some((n, v)),
        })
        .map(|(n, _)| n);
    match argmin {
        Some(argmin) => Ok(Sweep { rows, argmin }),
        None => {
            let n = ns[0];
            let epsilon = family.epsilon(n)?;
            Err(SystemParams::new(lambda, n, epsilon, regime)
                .err()
                .unwrap_or_else(|| Error::InvalidParameter("no stable blocklength".into())))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::db_to_linear;

    fn five_db() -> ChannelFamily {
        ChannelFamily::new(db_to_linear(5.0), 100)
    }

    #[test]
    fn unit_target_reaches_stability_limit() {
        let ch = five_db().at(150).unwrap();
        let eps = error_probability(&ch).unwrap();
        let cap = (1.0 - eps) / 150.0;
        let r = max_arrival_rate(&ch, 500, 1.0, Method::ExactInversion, Regime::FrameSync, Precision::Extended)
            .unwrap();
        assert!(r.lambda_star < cap);
        assert!(r.lambda_star > cap * (1.0 - 2.0 * RATE_TOLERANCE));
    }

    #[test]
    fn target_below_floor_is_infeasible() {
        let ch = five_db().at(100).unwrap();
        match max_arrival_rate(&ch, 500, 1e-6, Method::ExactInversion, Regime::FrameSync, Precision::Extended) {
            Err(Error::InfeasibleTarget { target, floor }) => {
                assert_eq!(target, 1e-6);
                assert!(floor > 1e-6);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bisection_within_one_grid_cell() {
        let ch = five_db().at(150).unwrap();
        let eps = error_probability(&ch).unwrap();
        let cap = (1.0 - eps) / 150.0;
        let r = max_arrival_rate(&ch, 500, 1e-3, Method::ExactInversion, Regime::FrameSync, Precision::Extended)
            .unwrap();
        // 200-point grid oracle
        let grid: Vec<f64> = (1..200).map(|i| cap * i as f64 / 200.0).collect();
        let last_ok = grid
            .iter()
            .copied()
            .filter(|&l| {
                let p = SystemParams::new(l, 150, eps, Regime::FrameSync).unwrap();
                delay_violation(&p, 500, Method::ExactInversion, Precision::Extended).unwrap() <= 1e-3
            })
            .last()
            .unwrap();
        assert!((r.lambda_star - last_ok).abs() <= cap / 200.0, "{} vs {last_ok}", r.lambda_star);
    }

    #[test]
    fn stricter_targets_give_smaller_rates() {
        let ch = five_db().at(150).unwrap();
        let run = |t| {
            max_arrival_rate(&ch, 500, t, Method::ExactInversion, Regime::FrameSync, Precision::Extended)
                .unwrap()
                .lambda_star
        };
        assert!(run(1e-4) <= run(1e-3));
        assert!(run(1e-3) <= run(1e-2));
    }

    #[test]
    fn monotonicity_violations_are_caught() {
        let probes = [(1e-4, 1e-3), (2e-4, 5e-4), (3e-4, 2e-3)];
        assert!(matches!(check_monotone(&probes), Err(Error::AssumptionViolation(_))));
        assert!(check_monotone(&[(1e-4, 1e-3), (2e-4, 1e-3)]).is_ok());
    }

    #[test]
    fn netcalc_is_conservative() {
        let fam = ChannelFamily::new(db_to_linear(10.0), 100);
        let exact = throughput_vs_blocklength(
            fam, 60..=70, 500, 1e-3, Method::ExactInversion, Regime::FrameSync, Precision::Extended,
        )
        .unwrap();
        let bound = throughput_vs_blocklength(
            fam, 60..=70, 500, 1e-3, Method::NetcalcBound, Regime::FrameSync, Precision::Extended,
        )
        .unwrap();
        for (e, b) in exact.iter().zip(&bound) {
            assert_eq!(e.n, b.n);
            assert!(b.throughput <= e.throughput, "n = {}", e.n);
            assert!((e.throughput - 100.0 * e.lambda_star).abs() < 1e-15);
        }
    }

    #[test]
    fn sweep_has_one_row_per_blocklength() {
        let s = blocklength_sweep(five_db(), 90..=110, 1e-3, 500, Regime::FrameSync, Precision::Extended)
            .unwrap();
        assert_eq!(s.rows.len(), 21);
        assert_eq!(s.threshold_changes(), vec![100]);
    }

    #[test]
    fn jumps_sit_on_threshold_changes() {
        let s = blocklength_sweep(five_db(), 115..=135, 1e-3, 500, Regime::FrameSync, Precision::Extended)
            .unwrap();
        assert_eq!(s.jumps(JUMP_LOG_THRESHOLD), vec![125]);
        assert_eq!(s.threshold_changes(), vec![125]);
    }

    #[test]
    fn budgets_shorter_than_a_frame_are_always_violated() {
        let s = blocklength_sweep(five_db(), 500..=510, 1e-4, 500, Regime::FrameSync, Precision::Extended)
            .unwrap();
        for r in s.rows.iter().filter(|r| r.n > 500) {
            assert_eq!(r.pdv, Some(1.0));
        }
    }

    #[test]
    fn all_unstable_is_an_error() {
        let r = blocklength_sweep(five_db(), 100..=110, 0.02, 500, Regime::FrameSync, Precision::Extended);
        assert!(matches!(r, Err(Error::Unstable { .. })));
    }

    #[test]
    fn best_point_prefers_feasible_maximum() {
        let mk = |n, t, f| ThroughputPoint {
            n,
            epsilon: 0.1,
            d: 1,
            lambda_star: t / 100.0,
            throughput: t,
            feasible: f,
            method: Method::ExactInversion,
        };
        let pts = [mk(1, 0.0, false), mk(2, 0.3, true), mk(3, 0.5, true), mk(4, 0.5, true)];
        assert_eq!(best_throughput(&pts).unwrap().n, 3);
        assert!(best_throughput(&[mk(1, 0.0, false)]).is_none());
    }
}
