//! Event-driven Monte-Carlo simulation of the FCFS ARQ queue.
//!
//! Time advances from arrival to arrival with geometric gaps, so the cost
//! is proportional to the number of packets rather than channel uses.
//! Channel uses are numbered from 0; frame `t` covers CUs
//! `t n .. (t + 1) n - 1`. In the frame-synchronous model a bulk that
//! arrives during frame `t` can be served from frame `t + 1` on, and its
//! delay is the index of its last service frame minus `t`. In the
//! asynchronous model a packet arriving in CU `c` can start in CU `c + 1`.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Distribution, Geometric};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::TailSeries;
use crate::error::{Error, Result};
use crate::pgf::{Regime, SystemParams, Unit};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub params: SystemParams,
    /// Simulated channel uses per replica.
    pub horizon: u64,
    /// Channel uses discarded before recording.
    pub warmup: u64,
    pub seed: u64,
    pub replicas: u32,
    /// Record only every `stride`-th bulk of the window. Values above one
    /// thin out the serial correlation of the queue so that binomial
    /// standard errors are honest.
    pub stride: u32,
}

impl SimConfig {
    /// One replica with the default warmup of a tenth of the horizon.
    pub fn new(params: SystemParams, horizon: u64, seed: u64) -> Self {
        SimConfig { params, horizon, warmup: horizon / 10, seed, replicas: 1, stride: 1 }
    }

    pub fn with_warmup(self, warmup: u64) -> Self {
        SimConfig { warmup, ..self }
    }

    pub fn with_replicas(self, replicas: u32) -> Self {
        SimConfig { replicas, ..self }
    }

    pub fn with_stride(self, stride: u32) -> Self {
        SimConfig { stride, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon <= self.warmup {
            return Err(Error::InvalidParameter(format!(
                "horizon {} must exceed warmup {}",
                self.horizon, self.warmup
            )));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidParameter("replicas must be at least 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidParameter("stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Expected bulks (sync) or packets (async) arriving per channel use.
pub fn arrival_rate_per_cu(p: &SystemParams) -> f64 {
    match p.regime() {
        Regime::FrameSync => -(p.n() as f64 * (-p.lambda()).ln_1p()).exp_m1() / p.n() as f64,
        Regime::FrameAsync => p.lambda(),
    }
}

/// Horizon, in CUs, expected to record `recorded` bulks per replica after the
/// default warmup when every `stride`-th bulk is kept.
pub fn horizon_for(p: &SystemParams, recorded: u64, stride: u32) -> u64 {
    let per_cu = arrival_rate_per_cu(p) * 0.9 / stride as f64;
    (recorded as f64 / per_cu).ceil() as u64
}

/// Seed of replica `index`: SplitMix64 applied to `seed ^ index * phi64`.
pub fn sub_seed(seed: u64, index: u32) -> u64 {
    const PHI64: u64 = 0x9E37_79B9_7F4A_7C15;
    SplitMix64::seed_from_u64(seed ^ (index as u64).wrapping_mul(PHI64)).next_u64()
}

/// One bulk (sync) or packet (async) on a sample path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BulkRecord {
    /// Arrival frame (sync) or CU (async).
    pub arrival: u64,
    /// Packets in the bulk; always 1 in the async model.
    pub size: u64,
    /// First service frame or CU.
    pub start: u64,
    /// Last service frame or CU.
    pub departure: u64,
    /// Service time `departure - start + 1`.
    pub service: u64,
    /// `departure - arrival`.
    pub delay: u64,
    /// `max(D_{m-1}, T_m - T_{m-1}) + S_m`; `None` for the first record.
    pub peak_age: Option<u64>,
}

/// Walks one sample path, calling `visit` for every bulk whose arrival CU
/// is below `horizon`, in arrival order.
fn walk<R: Rng>(p: &SystemParams, horizon: u64, rng: &mut R, mut visit: impl FnMut(&BulkRecord)) {
    let gap = Geometric::new(p.lambda()).expect("lambda in (0, 1)");
    let attempts = Geometric::new(1.0 - p.epsilon()).expect("epsilon in (0, 1)");
    let n = p.n() as u64;
    let mut c = gap.sample(rng);
    let mut prev: Option<BulkRecord> = None;
    while c < horizon {
        let (arrival, size) = match p.regime() {
            Regime::FrameSync => {
                let frame = c / n;
                let mut size = 0;
                while c < horizon && c / n == frame {
                    size += 1;
                    c += gap.sample(rng) + 1;
                }
                (frame, size)
            }
            Regime::FrameAsync => {
                let at = c;
                c += gap.sample(rng) + 1;
                (at, 1)
            }
        };
        let transmissions: u64 = (0..size).map(|_| attempts.sample(rng) + 1).sum();
        let service = match p.regime() {
            Regime::FrameSync => transmissions,
            Regime::FrameAsync => transmissions * n,
        };
        let start = prev.map_or(arrival + 1, |b| (arrival + 1).max(b.departure + 1));
        let departure = start + service - 1;
        let delay = departure - arrival;
        let peak_age = prev.map(|b| b.delay.max(arrival - b.arrival) + service);
        let record = BulkRecord { arrival, size, start, departure, service, delay, peak_age };
        visit(&record);
        prev = Some(record);
    }
}

/// Every bulk of one path, for invariant checks.
pub fn trace(p: &SystemParams, horizon: u64, seed: u64) -> Vec<BulkRecord> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut out = Vec::new();
    walk(p, horizon, &mut rng, |b| out.push(*b));
    out
}

/// Raw counts of one or more replicas. Integer sums keep merging exact.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Tally {
    pub delay_hist: BTreeMap<u64, u64>,
    pub peak_age_hist: BTreeMap<u64, u64>,
    pub delay_sum: u128,
    pub delay_sq_sum: u128,
    pub peak_age_sum: u128,
    pub peak_age_sq_sum: u128,
    /// Recorded bulks.
    pub bulks: u64,
    /// Every bulk arriving inside the window, recorded or not.
    pub window_bulks: u64,
    pub packets: u64,
    pub peak_ages: u64,
    /// Integral over the recording window of the number of bulks in system.
    pub occupancy: u128,
    /// Length of the recording window, summed over replicas.
    pub window: u64,
}

impl Tally {
    pub fn merge(mut self, other: &Tally) -> Tally {
        for (k, v) in &other.delay_hist {
            *self.delay_hist.entry(*k).or_default() += v;
        }
        for (k, v) in &other.peak_age_hist {
            *self.peak_age_hist.entry(*k).or_default() += v;
        }
        self.delay_sum += other.delay_sum;
        self.delay_sq_sum += other.delay_sq_sum;
        self.peak_age_sum += other.peak_age_sum;
        self.peak_age_sq_sum += other.peak_age_sq_sum;
        self.bulks += other.bulks;
        self.window_bulks += other.window_bulks;
        self.packets += other.packets;
        self.peak_ages += other.peak_ages;
        self.occupancy += other.occupancy;
        self.window += other.window;
        self
    }
}

/// Simulates one replica from an explicit seed, recording every bulk.
pub fn simulate_replica(p: &SystemParams, horizon: u64, warmup: u64, seed: u64) -> Tally {
    simulate_replica_thinned(p, horizon, warmup, seed, 1)
}

/// [`simulate_replica`] recording every `stride`-th bulk of the window.
/// A peak age is recorded with its bulk whenever the predecessor also
/// arrived inside the window.
pub fn simulate_replica_thinned(
    p: &SystemParams,
    horizon: u64,
    warmup: u64,
    seed: u64,
    stride: u32,
) -> Tally {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let n = p.n() as u64;
    // recording window in the PGF's unit
    let (lo, hi) = match p.regime() {
        Regime::FrameSync => (warmup.div_ceil(n), horizon / n),
        Regime::FrameAsync => (warmup, horizon),
    };
    let mut tally = Tally { window: hi.saturating_sub(lo), ..Tally::default() };
    let stride = stride.max(1) as u64;
    let mut in_window = 0u64;
    let mut prev_in_window = false;
    walk(p, horizon, &mut rng, |b| {
        // a bulk occupies the system over (arrival, departure]
        let overlap = (b.departure + 1).min(hi).saturating_sub((b.arrival + 1).max(lo));
        tally.occupancy += overlap as u128;
        let inside = b.arrival >= lo && b.arrival < hi;
        let recorded = inside && in_window % stride == 0;
        if inside {
            in_window += 1;
            tally.window_bulks += 1;
        }
        if recorded {
            tally.bulks += 1;
            tally.packets += b.size;
            *tally.delay_hist.entry(b.delay).or_default() += 1;
            tally.delay_sum += b.delay as u128;
            tally.delay_sq_sum += (b.delay as u128) * (b.delay as u128);
            if let (true, Some(age)) = (prev_in_window, b.peak_age) {
                tally.peak_ages += 1;
                *tally.peak_age_hist.entry(age).or_default() += 1;
                tally.peak_age_sum += age as u128;
                tally.peak_age_sq_sum += (age as u128) * (age as u128);
            }
        }
        prev_in_window = inside;
    });
    tally
}

/// Empirical statistics in the regime's unit (frames or CUs).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimStats {
    pub unit: Unit,
    pub delay_ccdf: TailSeries,
    pub peak_age_ccdf: TailSeries,
    pub mean_delay: f64,
    /// Standard error of the mean under independent samples.
    pub mean_delay_stderr: f64,
    pub mean_peak_age: f64,
    pub mean_peak_age_stderr: f64,
    pub bulks_observed: u64,
    pub packets_observed: u64,
    pub peak_ages_observed: u64,
    /// Time-average number of bulks in the system.
    pub mean_occupancy: f64,
    /// Bulks arriving per unit of time, recorded or not.
    pub bulk_rate: f64,
    pub stable: bool,
}

impl SimStats {
    pub fn from_tally(p: &SystemParams, t: &Tally) -> Result<SimStats> {
        if t.bulks == 0 {
            return Err(Error::InsufficientData(
                "no bulk arrived inside the recording window; increase the horizon".into(),
            ));
        }
        let unit = p.regime().unit();
        let (mean_delay, mean_delay_stderr) = moments(t.delay_sum, t.delay_sq_sum, t.bulks);
        let (mean_peak_age, mean_peak_age_stderr) =
            moments(t.peak_age_sum, t.peak_age_sq_sum, t.peak_ages);
        Ok(SimStats {
            unit,
            delay_ccdf: empirical_ccdf(&t.delay_hist, t.bulks, unit),
            peak_age_ccdf: empirical_ccdf(&t.peak_age_hist, t.peak_ages, unit),
            mean_delay,
            mean_delay_stderr,
            mean_peak_age,
            mean_peak_age_stderr,
            bulks_observed: t.bulks,
            packets_observed: t.packets,
            peak_ages_observed: t.peak_ages,
            mean_occupancy: t.occupancy as f64 / t.window as f64,
            bulk_rate: t.window_bulks as f64 / t.window as f64,
            stable: p.is_stable(),
        })
    }
}

fn moments(sum: u128, sq: u128, count: u64) -> (f64, f64) {
    if count == 0 {
        return (f64::NAN, f64::NAN);
    }
    let n = count as f64;
    let mean = sum as f64 / n;
    if count < 2 {
        return (mean, f64::NAN);
    }
    let var = ((sq as f64 - n * mean * mean) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

/// `P(X >= d)` for `d = 1..=max observed`, with binomial standard errors.
fn empirical_ccdf(hist: &BTreeMap<u64, u64>, total: u64, unit: Unit) -> TailSeries {
    let d_max = hist.keys().next_back().copied().unwrap_or(0);
    let mut values = Vec::with_capacity(d_max as usize);
    let mut stderr = Vec::with_capacity(d_max as usize);
    let mut below = 0u64;
    let n = total.max(1) as f64;
    for d in 1..=d_max {
        below += hist.get(&(d - 1)).copied().unwrap_or(0);
        let p = (total - below) as f64 / n;
        values.push(p);
        stderr.push((p * (1.0 - p) / n).sqrt());
    }
    TailSeries { values, unit, stderr: Some(stderr) }
}

/// Runs all replicas, in parallel, and merges them in replica order.
pub fn simulate(config: &SimConfig) -> Result<SimStats> {
    config.validate()?;
    let tallies: Vec<Tally> = (0..config.replicas)
        .into_par_iter()
        .map(|i| {
            simulate_replica_thinned(
                &config.params,
                config.horizon,
                config.warmup,
                sub_seed(config.seed, i),
                config.stride,
            )
        })
        .collect();
    let merged = tallies.iter().fold(Tally::default(), |acc, t| acc.merge(t));
    SimStats::from_tally(&config.params, &merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sync(lambda: f64, n: u32, eps: f64) -> SystemParams {
        SystemParams::new(lambda, n, eps, Regime::FrameSync).unwrap()
    }

    #[test]
    fn config_validation() {
        let p = sync(1e-3, 100, 0.1);
        assert!(SimConfig::new(p, 1000, 1).with_warmup(1000).validate().is_err());
        assert!(SimConfig::new(p, 1000, 1).with_replicas(0).validate().is_err());
        assert_eq!(SimConfig::new(p, 1000, 1).warmup, 100);
    }

    #[test]
    fn sub_seeds_are_distinct_and_stable() {
        let s: Vec<u64> = (0..8).map(|i| sub_seed(42, i)).collect();
        let mut u = s.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), 8);
        assert_eq!(s[3], sub_seed(42, 3));
    }

    #[test]
    fn isolated_packets_take_one_frame_without_errors() {
        // epsilon at the floor: every transmission succeeds
        let p = sync(1e-6, 10, 1e-300);
        let t = trace(&p, 100_000_000, 7);
        assert!(t.len() > 50);
        for b in t.iter().filter(|b| b.size == 1) {
            assert_eq!(b.service, 1);
        }
        assert!(t.iter().all(|b| b.delay >= 1));
    }

    #[test]
    fn pure_retransmission_is_geometric() {
        let p = sync(1e-6, 10, 0.5);
        let stats = simulate(&SimConfig::new(p, 2_000_000_000, 3).with_replicas(4)).unwrap();
        for d in 1..=6u64 {
            let exact = 0.5f64.powi(d as i32 - 1);
            let emp = stats.delay_ccdf.at(d).unwrap();
            let se = stats.delay_ccdf.stderr_at(d).unwrap().max(1e-12);
            assert!((emp - exact).abs() < 4.0 * se + 1e-3, "d={d}: {emp} vs {exact}");
        }
    }

    #[test]
    fn fcfs_and_pathwise_bounds() {
        for regime in [Regime::FrameSync, Regime::FrameAsync] {
            let p = SystemParams::new(1e-2, 10, 0.3, regime).unwrap();
            let t = trace(&p, 2_000_000, 11);
            for w in t.windows(2) {
                assert!(w[1].arrival > w[0].arrival || regime == Regime::FrameAsync);
                assert!(w[1].start > w[0].departure, "FCFS order");
                assert!(w[1].departure > w[0].departure);
                let age = w[1].peak_age.unwrap();
                assert!(age >= w[0].delay + 1);
                if regime == Regime::FrameAsync {
                    assert!(age >= p.n() as u64);
                    assert!(w[1].delay >= p.n() as u64);
                }
            }
            assert!(t[0].peak_age.is_none());
        }
    }

    #[test]
    fn deterministic_replay() {
        let c = SimConfig::new(sync(1e-2, 10, 0.2), 5_000_000, 99).with_replicas(3);
        assert_eq!(simulate(&c).unwrap(), simulate(&c).unwrap());
    }

    #[test]
    fn replicas_are_a_merge_of_sub_seeded_runs() {
        let p = sync(1e-2, 10, 0.2);
        let c = SimConfig::new(p, 2_000_000, 5).with_replicas(4);
        let manual = (0..4)
            .map(|i| simulate_replica(&p, c.horizon, c.warmup, sub_seed(5, i)))
            .fold(Tally::default(), |a, t| a.merge(&t));
        assert_eq!(simulate(&c).unwrap(), SimStats::from_tally(&p, &manual).unwrap());
    }

    #[test]
    fn different_seeds_agree_statistically() {
        let p = sync(5e-3, 20, 0.2);
        let a = simulate(&SimConfig::new(p, 50_000_000, 1)).unwrap();
        let b = simulate(&SimConfig::new(p, 50_000_000, 2)).unwrap();
        let se = a.mean_delay_stderr.hypot(b.mean_delay_stderr);
        assert!((a.mean_delay - b.mean_delay).abs() < 5.0 * se);
    }

    #[test]
    fn littles_law() {
        for regime in [Regime::FrameSync, Regime::FrameAsync] {
            let p = SystemParams::new(1e-2, 10, 0.3, regime).unwrap();
            let s = simulate(&SimConfig::new(p, 50_000_000, 8)).unwrap();
            let predicted = s.bulk_rate * s.mean_delay;
            let se = s.bulk_rate * s.mean_delay_stderr;
            assert!((s.mean_occupancy - predicted).abs() < 3.0 * se, "{regime:?}");
        }
    }

    #[test]
    fn empty_window_is_reported() {
        let p = sync(1e-9, 10, 0.1);
        let r = simulate(&SimConfig::new(p, 1000, 1));
        assert!(matches!(r, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn ccdf_shape() {
        let s = simulate(&SimConfig::new(sync(1e-2, 10, 0.3), 10_000_000, 4)).unwrap();
        let v = &s.delay_ccdf.values;
        assert_eq!(v[0], 1.0);
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
        let se = s.delay_ccdf.stderr.as_ref().unwrap();
        assert_eq!(se.len(), v.len());
    }

    #[test]
    fn overload_is_simulated_but_flagged() {
        let p = SystemParams::new_allow_unstable(0.2, 10, 0.1, Regime::FrameSync).unwrap();
        let s = simulate(&SimConfig::new(p, 200_000, 1)).unwrap();
        assert!(!s.stable);
    }
}
