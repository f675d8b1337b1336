//! Monte-Carlo oracle checks of the analytical pipeline.

use shortpkt::analysis::{mean_of, violation_tail, violation_tail_with_offset, TailSeries, TAIL_OFFSET};
use shortpkt::pgf::{Metric, Regime, SystemParams};
use shortpkt::precision::Precision;
use shortpkt::simulator::{horizon_for, simulate, SimConfig, SimStats};

const STRIDE: u32 = 8;
const REPLICAS: u32 = 8;

fn run(p: SystemParams, recorded: u64, seed: u64) -> SimStats {
    let horizon = horizon_for(&p, recorded / REPLICAS as u64, STRIDE);
    let cfg = SimConfig::new(p, horizon, seed).with_replicas(REPLICAS).with_stride(STRIDE);
    simulate(&cfg).unwrap()
}

/// Largest `|exact - empirical| / se` over thresholds with `P >= floor`.
fn worst_z(exact: &TailSeries, empirical: &TailSeries, floor: f64) -> f64 {
    (1..=empirical.d_max())
        .filter_map(|d| {
            let e = exact.at(d)?;
            let m = empirical.at(d)?;
            let se = empirical.stderr_at(d)?;
            (e >= floor && se > 0.0).then(|| (e - m).abs() / se)
        })
        .fold(0.0, f64::max)
}

#[test]
fn offset_one_matches_simulation_and_offset_two_does_not() {
    let tuples = [
        (1e-3, 0.05, 100),
        (1e-2, 0.1, 10),
        (3e-4, 0.3, 200),
        (2e-3, 0.2, 50),
        (5e-3, 0.01, 20),
    ];
    for (i, &(lam, eps, n)) in tuples.iter().enumerate() {
        let p = SystemParams::new(lam, n, eps, Regime::FrameSync).unwrap();
        let sim = run(p, 200_000, 1000 + i as u64);
        let d_max = sim.delay_ccdf.d_max().max(2);
        let one = violation_tail_with_offset(&p, Metric::Delay, d_max, 1, Precision::Extended).unwrap();
        let two = violation_tail_with_offset(&p, Metric::Delay, d_max, 2, Precision::Extended).unwrap();
        let z1 = worst_z(&one, &sim.delay_ccdf, 1e-3);
        let z2 = worst_z(&two, &sim.delay_ccdf, 1e-3);
        assert!(z1 < 4.0, "tuple {i}: offset 1 off by {z1} SE");
        assert!(z2 > 20.0, "tuple {i}: offset 2 only {z2} SE away");
    }
    assert_eq!(TAIL_OFFSET, 1);
}

#[test]
fn async_delay_and_both_peak_ages_match_simulation() {
    let cases = [
        (SystemParams::new(1e-2, 10, 0.1, Regime::FrameAsync).unwrap(), Metric::Delay),
        (SystemParams::new(1e-2, 10, 0.1, Regime::FrameAsync).unwrap(), Metric::PeakAge),
        (SystemParams::new(1e-2, 10, 0.1, Regime::FrameSync).unwrap(), Metric::PeakAge),
    ];
    for (i, (p, metric)) in cases.into_iter().enumerate() {
        let sim = run(p, 200_000, 2000 + i as u64);
        let empirical = match metric {
            Metric::Delay => &sim.delay_ccdf,
            Metric::PeakAge => &sim.peak_age_ccdf,
        };
        let exact = violation_tail(&p, metric, empirical.d_max(), Precision::Extended).unwrap();
        let z = worst_z(&exact, empirical, 1e-3);
        assert!(z < 4.0, "case {i}: {z} SE");
    }
}

#[test]
fn simulated_means_match_pgf_means() {
    for (i, regime) in [Regime::FrameSync, Regime::FrameAsync].into_iter().enumerate() {
        let p = SystemParams::new(5e-3, 40, 0.2, regime).unwrap();
        let sim = run(p, 200_000, 3000 + i as u64);
        let mean = mean_of(&p, Metric::Delay, Precision::Extended).unwrap();
        let z = (sim.mean_delay - mean).abs() / sim.mean_delay_stderr;
        assert!(z < 4.0, "{regime:?}: simulated {} vs {mean}", sim.mean_delay);
        let age = mean_of(&p, Metric::PeakAge, Precision::Extended).unwrap();
        let z = (sim.mean_peak_age - age).abs() / sim.mean_peak_age_stderr;
        assert!(z < 4.0, "{regime:?}: simulated age {} vs {age}", sim.mean_peak_age);
    }
}

#[test]
fn error_free_channel_delay_matches_pgf_coefficients() {
    let p = SystemParams::new(1e-2, 10, 1e-300, Regime::FrameSync).unwrap();
    let sim = run(p, 400_000, 4000);
    let exact = violation_tail(&p, Metric::Delay, sim.delay_ccdf.d_max(), Precision::Extended).unwrap();
    assert!(worst_z(&exact, &sim.delay_ccdf, 1e-4) < 4.0);
}
