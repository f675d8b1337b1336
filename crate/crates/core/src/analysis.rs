//! Violation probabilities from a PGF: exact series inversion, the
//! saddlepoint approximation and the network-calculus upper bound.

use serde::Serialize;
use libm::erfc;

use crate::error::{Error, Result};
use crate::pgf::{self, Metric, RationalPgf, Regime, SystemParams, Unit};
use crate::poly::{sum_terms, Polynomial};
use crate::precision::{self, close, Computation, Precision};
use crate::scalar::Scalar;

/// `P(X >= d) = t[d - TAIL_OFFSET]` where `t[j] = P(X > j)` is the series of
/// `(1 - G(s)) / (1 - s)`. Calibrated against the simulator; the
/// alternative offset 2 reads the delay one unit late.
pub const TAIL_OFFSET: usize = 1;

/// Tolerance on series values outside `[0, 1]` or increasing in `d`.
const SERIES_TOLERANCE: f64 = 1e-9;

/// Upper limit on `|t_j|` before the recursion is declared divergent.
const DIVERGENCE_LIMIT: f64 = 1.0 + 1e-6;

/// CCDF values `P(X >= d)` for `d = 1..=d_max`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailSeries {
    /// `values[i]` is `P(X >= i + 1)`.
    pub values: Vec<f64>,
    pub unit: Unit,
    /// Per-point standard errors, present for empirical series.
    pub stderr: Option<Vec<f64>>,
}

impl TailSeries {
    pub fn d_max(&self) -> u64 {
        self.values.len() as u64
    }

    /// `P(X >= d)`, or `None` beyond `d_max`.
    pub fn at(&self, d: u64) -> Option<f64> {
        match d {
            0 => Some(1.0),
            _ => self.values.get(d as usize - 1).copied(),
        }
    }

    pub fn stderr_at(&self, d: u64) -> Option<f64> {
        let se = self.stderr.as_ref()?;
        match d {
            0 => Some(0.0),
            _ => se.get(d as usize - 1).copied(),
        }
    }

    /// `sum_{d >= 1} P(X >= d)`, the mean when the series reaches the
    /// negligible part of the tail.
    pub fn partial_mean(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Audit trail of one saddlepoint evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SaddlepointDiagnostics {
    /// Tilt solving `kappa'(theta) = d`.
    pub theta: f64,
    /// `kappa(theta) = ln G(e^theta)`.
    pub kappa: f64,
    /// `sqrt(kappa''(theta))`.
    pub sigma: f64,
    /// `B0(theta sigma)`.
    pub b0: f64,
    /// The resulting tail approximation.
    pub approx: f64,
    /// Newton/bisection steps taken.
    pub iterations: u32,
}

/// Latency budget `d0` (channel uses) in the PGF's unit.
pub fn threshold_in_units(d0: u64, unit: Unit, n: u32) -> u64 {
    match unit {
        Unit::Frames => d0.div_ceil(n as u64),
        Unit::ChannelUses => d0,
    }
}

/// Exact CCDF by power-series inversion, with the frozen [`TAIL_OFFSET`].
pub fn tail_series<T: Scalar>(g: &RationalPgf<T>, d_max: u64) -> Result<TailSeries> {
    tail_series_with_offset(g, d_max, TAIL_OFFSET)
}

/// Exact CCDF with an explicit indexing offset (1 or 2).
///
/// Runs the recursion `t_j = (a_j - sum_i D_i t_{j-i}) / D_0` on
/// `(1 - G) / (1 - s) = -q / D` where `D - N = (s - 1) q`, so tail values
/// come out directly rather than as `1 - P(X <= j)`.
pub fn tail_series_with_offset<T: Scalar>(
    g: &RationalPgf<T>,
    d_max: u64,
    offset: usize,
) -> Result<TailSeries> {
    if d_max == 0 {
        return Err(Error::InvalidParameter("d_max must be at least 1".into()));
    }
    if !(1..=2).contains(&offset) {
        return Err(Error::InvalidParameter(format!("offset must be 1 or 2, got {offset}")));
    }
    let r = g.reduced();
    let den = r.denominator();
    let diff = den - r.numerator();
    let (q, rem) = diff.deflate(&T::one());
    let d1 = den.eval(&T::one()).as_f64();
    if !(rem.as_f64().abs() <= SERIES_TOLERANCE * d1.abs()) {
        return Err(Error::NumericInstability(format!(
            "G(1) - 1 = {:e} after reduction",
            -rem.as_f64() / d1
        )));
    }
    let a = q.scale(&-T::one());
    let dc = den.coeffs();
    let d0 = dc[0].clone();
    if d0.is_zero() {
        return Err(Error::Evaluation("reduced denominator vanishes at s = 0".into()));
    }

    let terms = (d_max as usize + 1).saturating_sub(offset);
    let mut t: Vec<T> = Vec::with_capacity(terms);
    let mut values = Vec::with_capacity(d_max as usize);
    if offset == 2 {
        values.push(1.0);
    }
    let mut prev = 1.0f64;
    for j in 0..terms {
        let lag = (1..dc.len().min(j + 1)).map(|i| dc[i].clone() * t[j - i].clone());
        let tj = (a.coeff(j) - sum_terms(lag)) / d0.clone();
        let v = tj.as_f64();
        if !v.is_finite() || v.abs() > DIVERGENCE_LIMIT {
            return Err(Error::NumericInstability(format!(
                "series diverges at index {j} (value {v:e})"
            )));
        }
        if v < -SERIES_TOLERANCE || v > prev + SERIES_TOLERANCE {
            return Err(Error::NumericInstability(format!(
                "tail series not a CCDF at index {j}: {v:e} after {prev:e}"
            )));
        }
        t.push(tj);
        let clamped = v.clamp(0.0, prev);
        values.push(clamped);
        prev = clamped;
    }
    values.truncate(d_max as usize);
    Ok(TailSeries { values, unit: g.unit(), stderr: None })
}

/// `B0(x) = x e^{x^2/2} Q(x)`.
pub fn b0(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 25.0 {
        let q = 0.5 * erfc(x / std::f64::consts::SQRT_2);
        return x * (0.5 * x * x).exp() * q;
    }
    // Mills-ratio asymptotics; the truncation error is below 1e-12 here
    let y = 1.0 / (x * x);
    let series = 1.0 - y * (1.0 - y * (3.0 - y * (15.0 - 105.0 * y)));
    series / (2.0 * std::f64::consts::PI).sqrt()
}

/// `G, G', G''` at a point, with the denominator's surviving precision.
struct Derivatives<T> {
    n: [Polynomial<T>; 3],
    d: [Polynomial<T>; 3],
}

struct Cumulants {
    kappa: f64,
    k1: f64,
    k2: f64,
}

impl<T: Scalar> Derivatives<T> {
    fn new(g: &RationalPgf<T>) -> Self {
        let n0 = g.numerator().clone();
        let d0 = g.denominator().clone();
        let n1 = n0.derivative();
        let d1 = d0.derivative();
        Derivatives { n: [n0, n1.clone(), n1.derivative()], d: [d0, d1.clone(), d1.derivative()] }
    }

    /// Sign of the denominator, or `None` if it has no significant bits.
    fn den_sign(&self, s: f64) -> Option<f64> {
        let (v, bits) = self.d[0].eval_checked(&T::of(s));
        (bits >= 8.0).then(|| if v.is_negative() { -1.0 } else { 1.0 })
    }

    fn cumulants(&self, x: f64) -> Result<Cumulants> {
        let s = x.exp();
        let st = T::of(s);
        let (dv, bits) = self.d[0].eval_checked(&st);
        let (nv, nbits) = self.n[0].eval_checked(&st);
        if bits < 8.0 || nbits < 8.0 {
            return Err(Error::NumericInstability(format!(
                "PGF loses all precision at s = {s}"
            )));
        }
        let d1 = self.d[1].eval(&st);
        let d2 = self.d[2].eval(&st);
        let u = nv / dv.clone();
        let u1 = (self.n[1].eval(&st) - u.clone() * d1.clone()) / dv.clone();
        let u2 = (self.n[2].eval(&st) - T::of(2.0) * u1.clone() * d1 - u.clone() * d2) / dv;
        let g = u.as_f64();
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::Evaluation(format!("G({s}) = {g} is not a positive number")));
        }
        let k1 = s * (u1 / u.clone()).as_f64();
        let k2 = k1 + s * s * (u2 / u).as_f64() - k1 * k1;
        if !(k1.is_finite() && k2.is_finite()) {
            return Err(Error::NumericInstability(format!("cumulants overflow at s = {s}")));
        }
        Ok(Cumulants { kappa: g.ln(), k1, k2 })
    }
}

/// Saddlepoint approximation of `P(X >= d)`.
///
/// Requires `d` above the mean. The tilt is bracketed in
/// `(0, ln R - 1e-9)` with `R` the first positive pole beyond one.
pub fn saddlepoint_tail<T: Scalar>(g: &RationalPgf<T>, d: u64) -> Result<SaddlepointDiagnostics> {
    let r = g.reduced();
    let mean = r.mean()?;
    let target = d as f64;
    if target <= mean {
        return Err(Error::BelowMean { threshold: d, mean });
    }
    let der = Derivatives::new(&r);
    let sign_at_one = der
        .den_sign(1.0)
        .ok_or_else(|| Error::NumericInstability("denominator vanishes at s = 1".into()))?;
    let f = |x: f64| der.cumulants(x).map(|c| c.k1 - target);

    // outward scan for either kappa' > d or the first pole
    let (mut lo, mut hi) = (0.0f64, None);
    let mut step = 1e-3;
    while lo < 50.0 {
        let x = lo + step;
        let sign = der.den_sign(x.exp()).ok_or_else(|| {
            Error::NumericInstability(format!("denominator sign unresolved at s = {}", x.exp()))
        })?;
        if sign != sign_at_one {
            let pole = bisect_pole(&der, lo, x, sign_at_one)?;
            let theta_max = pole - 1e-9;
            if theta_max <= lo || f(theta_max)? <= 0.0 {
                return Err(Error::Convergence(format!(
                    "kappa' stays below {d} up to the pole at ln s = {pole}"
                )));
            }
            hi = Some(theta_max);
            break;
        }
        if f(x)? > 0.0 {
            hi = Some(x);
            break;
        }
        lo = x;
        step = (step * 1.5).min(0.05);
    }
    let mut hi = hi.ok_or_else(|| {
        Error::Convergence(format!("no saddlepoint for d = {d} below ln s = 50"))
    })?;

    // safeguarded Newton
    let tol = 1e-9 * target;
    let mut x = 0.5 * (lo + hi);
    let mut iterations = 0;
    let c = loop {
        iterations += 1;
        let c = der.cumulants(x)?;
        let fx = c.k1 - target;
        if fx.abs() < tol {
            break c;
        }
        if iterations >= 200 {
            return Err(Error::Convergence(format!(
                "saddlepoint equation unresolved after 200 steps (residual {fx:e})"
            )));
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - fx / c.k2;
        x = if c.k2 > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * hi {
            break der.cumulants(x)?;
        }
    };
    if !(c.k2 > 0.0) {
        return Err(Error::NumericInstability(format!("kappa'' = {} at theta = {x}", c.k2)));
    }
    let theta = x;
    let sigma = c.k2.sqrt();
    let b = b0(theta * sigma);
    let log_approx = c.kappa - theta * target + (b / (sigma * -(-theta).exp_m1())).ln();
    let approx = log_approx.exp().min(1.0);
    Ok(SaddlepointDiagnostics { theta, kappa: c.kappa, sigma, b0: b, approx, iterations })
}

fn bisect_pole<T: Scalar>(der: &Derivatives<T>, mut a: f64, mut b: f64, sign_a: f64) -> Result<f64> {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        match der.den_sign(m.exp()) {
            Some(s) if s == sign_a => a = m,
            Some(_) => b = m,
            None => break,
        }
    }
    Ok(b)
}

/// Upper bound on `P(D >= d)` (frames) for the frame-synchronous queue,
/// from `G_A(s) = (1 - lambda + lambda s)^n` and `G_U(s) = eps + (1 - eps) s`.
///
/// Minimizes `G_U(1/s)^(d-1) / (1 - G_A(s) G_U(1/s))` over the feasible
/// `s > 1`. The logarithm of the objective is convex in `ln s`, so a
/// golden-section search is exact up to its tolerance.
pub fn netcalc_bound(p: &SystemParams, d: u64) -> Result<f64> {
    if p.regime() != Regime::FrameSync {
        return Err(Error::InvalidParameter(
            "the network-calculus bound assumes independent frame arrivals (sync regime)".into(),
        ));
    }
    if d == 0 {
        return Err(Error::InvalidParameter("threshold d must be at least 1".into()));
    }
    let (lam, eps, n) = (p.lambda(), p.epsilon(), p.n() as f64);
    let ln_gu_inv = |y: f64| (eps + (1.0 - eps) * (-y).exp()).ln();
    let exponent = |y: f64| n * (lam * y.exp_m1()).ln_1p() + ln_gu_inv(y);
    let ln_h = |y: f64| {
        let g = exponent(y);
        if g >= 0.0 {
            f64::INFINITY
        } else {
            (d - 1) as f64 * ln_gu_inv(y) - (-g.exp_m1()).ln()
        }
    };

    // feasible set (0, y_max): expand from y = 1e-6, then bisect the edge
    let mut y_in = 0.0;
    let mut y_out = 1e-6;
    while exponent(y_out) < 0.0 {
        y_in = y_out;
        y_out *= 2.0;
        if y_out > 1e3 {
            break;
        }
    }
    if y_in == 0.0 {
        // the first probe may sit beyond a very narrow feasible set
        let mut y = 1e-6;
        while y > 1e-300 && exponent(y) >= 0.0 {
            y *= 0.5;
        }
        if exponent(y) >= 0.0 {
            return Err(Error::InfeasibleBound(format!(
                "G_A(s) G_U(1/s) >= 1 for every s > 1 (lambda n = {}, 1 - epsilon = {})",
                p.load(),
                1.0 - eps
            )));
        }
        y_in = y;
        y_out = 2.0 * y;
    }
    for _ in 0..200 {
        let m = 0.5 * (y_in + y_out);
        if m <= y_in || m >= y_out {
            break;
        }
        if exponent(m) < 0.0 {
            y_in = m;
        } else {
            y_out = m;
        }
    }

    let (_, value) = golden_section(&ln_h, 0.0, y_out, 1e-10);
    Ok(value.exp().min(1.0))
}

/// Minimizer and minimum of a unimodal function on `(a, b)`.
fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut e = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fe = f(e);
    while (b - a) > rel_tol * c.abs().max(f64::MIN_POSITIVE) {
        if fc < fe {
            b = e;
            e = c;
            fe = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + inv_phi * (b - a);
            fe = f(e);
        }
    }
    if fc < fe { (c, fc) } else { (e, fe) }
}

struct TailJob {
    params: SystemParams,
    metric: Metric,
    d_max: u64,
    offset: usize,
}

impl Computation for TailJob {
    type Output = TailSeries;

    fn run<T: Scalar>(&self) -> Result<TailSeries> {
        let g = pgf::build::<T>(&self.params, self.metric)?;
        tail_series_with_offset(&g, self.d_max, self.offset)
    }

    fn conditioning_bits(&self) -> f64 {
        pgf::conditioning_bits(&self.params, self.metric, 1.0)
    }

    fn agree(&self, a: &TailSeries, b: &TailSeries) -> bool {
        a.values.len() == b.values.len()
            && a.values.iter().zip(&b.values).all(|(x, y)| close(*x, *y, 1e-9, 1e-300))
    }
}

struct SaddleJob {
    params: SystemParams,
    metric: Metric,
    d: u64,
}

impl Computation for SaddleJob {
    type Output = SaddlepointDiagnostics;

    fn run<T: Scalar>(&self) -> Result<SaddlepointDiagnostics> {
        let g = pgf::build::<T>(&self.params, self.metric)?;
        saddlepoint_tail(&g, self.d)
    }

    fn conditioning_bits(&self) -> f64 {
        let radius = pgf::radius_estimate(&self.params, self.metric);
        pgf::conditioning_bits(&self.params, self.metric, radius)
    }

    fn agree(&self, a: &SaddlepointDiagnostics, b: &SaddlepointDiagnostics) -> bool {
        close(a.approx, b.approx, 1e-8, 1e-300) && close(a.theta, b.theta, 1e-8, 0.0)
    }
}

struct MeanJob {
    params: SystemParams,
    metric: Metric,
}

impl Computation for MeanJob {
    type Output = f64;

    fn run<T: Scalar>(&self) -> Result<f64> {
        pgf::build::<T>(&self.params, self.metric)?.mean()
    }

    fn conditioning_bits(&self) -> f64 {
        pgf::conditioning_bits(&self.params, self.metric, 1.0)
    }

    fn agree(&self, a: &f64, b: &f64) -> bool {
        close(*a, *b, 1e-10, 0.0)
    }
}

/// Exact CCDF `P(X >= d)`, `d = 1..=d_max`, in the regime's unit.
pub fn violation_tail(
    p: &SystemParams,
    metric: Metric,
    d_max: u64,
    precision: Precision,
) -> Result<TailSeries> {
    violation_tail_with_offset(p, metric, d_max, TAIL_OFFSET, precision)
}

/// [`violation_tail`] with an explicit indexing offset, for calibration.
pub fn violation_tail_with_offset(
    p: &SystemParams,
    metric: Metric,
    d_max: u64,
    offset: usize,
    precision: Precision,
) -> Result<TailSeries> {
    let job = TailJob { params: *p, metric, d_max, offset };
    precision::evaluate(&job, precision)
}

/// Exact `P(X >= d)` at a single threshold in the regime's unit.
pub fn violation_at(p: &SystemParams, metric: Metric, d: u64, precision: Precision) -> Result<f64> {
    if d <= 1 {
        // every delay and peak age is at least one unit
        return Ok(1.0);
    }
    let tail = violation_tail(p, metric, d, precision)?;
    Ok(tail.at(d).expect("series reaches d"))
}

/// Exact violation probability for a budget of `d0` channel uses.
pub fn violation_probability(
    p: &SystemParams,
    metric: Metric,
    d0: u64,
    precision: Precision,
) -> Result<f64> {
    let d = threshold_in_units(d0, p.regime().unit(), p.n());
    violation_at(p, metric, d, precision)
}

/// Saddlepoint approximation at threshold `d` in the regime's unit.
pub fn saddlepoint_at(
    p: &SystemParams,
    metric: Metric,
    d: u64,
    precision: Precision,
) -> Result<SaddlepointDiagnostics> {
    // the mean test needs no extra precision and gives the documented error early
    let mean = mean_of(p, metric, precision)?;
    if d as f64 <= mean {
        return Err(Error::BelowMean { threshold: d, mean });
    }
    precision::evaluate(&SaddleJob { params: *p, metric, d }, precision)
}

/// Mean of the metric in the regime's unit.
pub fn mean_of(p: &SystemParams, metric: Metric, precision: Precision) -> Result<f64> {
    precision::evaluate(&MeanJob { params: *p, metric }, precision)
}
