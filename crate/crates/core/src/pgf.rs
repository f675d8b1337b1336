//! Probability generating functions as ratios of dense polynomials, and the
//! closed-form delay and peak-age PGFs of the ARQ queue in both regimes.
//!
//! Frame-synchronous PGFs are in frames, frame-asynchronous ones in channel
//! uses. Conversion of a latency budget into the PGF's unit happens in
//! [`crate::analysis::threshold_in_units`] only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::scalar::Scalar;

/// Whether transmission to an empty buffer waits for the next frame boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    FrameSync,
    FrameAsync,
}

impl Regime {
    /// Unit of the delay and peak-age PGFs in this regime.
    pub fn unit(self) -> Unit {
        match self {
            Regime::FrameSync => Unit::Frames,
            Regime::FrameAsync => Unit::ChannelUses,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    Frames,
    ChannelUses,
}

/// Which steady-state quantity a PGF describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    Delay,
    PeakAge,
}

/// Full parameterization of the queue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SystemParams {
    lambda: f64,
    n: u32,
    epsilon: f64,
    regime: Regime,
}

impl SystemParams {
    /// Validated parameters; rejects `lambda * n >= 1 - epsilon`.
    pub fn new(lambda: f64, n: u32, epsilon: f64, regime: Regime) -> Result<Self> {
        let params = Self::new_allow_unstable(lambda, n, epsilon, regime)?;
        if !params.is_stable() {
            return Err(params.instability());
        }
        Ok(params)
    }

    /// Range-checked parameters without the stability requirement; only the
    /// simulator accepts these.
    pub fn new_allow_unstable(lambda: f64, n: u32, epsilon: f64, regime: Regime) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "arrival probability lambda must lie in (0, 1), got {lambda}"
            )));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "error probability epsilon must lie in (0, 1), got {epsilon}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("blocklength n must be at least 1".into()));
        }
        Ok(SystemParams { lambda, n, epsilon, regime })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Offered load `lambda * n`.
    pub fn load(&self) -> f64 {
        self.lambda * self.n as f64
    }

    pub fn is_stable(&self) -> bool {
        self.load() < 1.0 - self.epsilon
    }

    /// Mean number of bulks arriving during one bulk service,
    /// `lambda n / (1 - epsilon)`.
    pub fn mean_arrivals_per_service(&self) -> f64 {
        self.load() / (1.0 - self.epsilon)
    }

    /// Probability that a frame carries no arrival, `(1 - lambda)^n`.
    pub fn empty_frame_probability(&self) -> f64 {
        (self.n as f64 * (-self.lambda).ln_1p()).exp()
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(lambda, self.n, self.epsilon, self.regime)
    }

    pub fn with_regime(&self, regime: Regime) -> Self {
        SystemParams { regime, ..*self }
    }

    fn instability(&self) -> Error {
        Error::Unstable {
            lambda: self.lambda,
            n: self.n,
            epsilon: self.epsilon,
            load: self.load(),
            capacity: 1.0 - self.epsilon,
        }
    }

    fn expect_regime(&self, regime: Regime) -> Result<()> {
        if self.regime != regime {
            return Err(Error::InvalidParameter(format!(
                "this PGF needs the {regime:?} regime, parameters are {:?}",
                self.regime
            )));
        }
        if !self.is_stable() {
            return Err(self.instability());
        }
        Ok(())
    }
}

/// `G(s) = numerator(s) / denominator(s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalPgf<T> {
    numerator: Polynomial<T>,
    denominator: Polynomial<T>,
    unit: Unit,
}

/// Tolerance on `G(1) = 1`.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// A value is treated as zero when fewer significant bits survive than
/// coefficient construction can plausibly have lost, which the evaluation
/// bound alone does not see.
fn zero_like<T: Scalar>(v: &T, bits: f64) -> bool {
    v.is_zero() || bits < (T::MANTISSA_BITS as f64 / 4.0).min(24.0)
}

impl<T: Scalar> RationalPgf<T> {
    /// Fails when the denominator vanishes at the origin.
    pub fn new(numerator: Polynomial<T>, denominator: Polynomial<T>, unit: Unit) -> Result<Self> {
        if denominator.coeff(0).is_zero() {
            return Err(Error::Evaluation("denominator constant term is zero".into()));
        }
        Ok(RationalPgf { numerator, denominator, unit })
    }

    pub fn from_polynomial(p: Polynomial<T>, unit: Unit) -> Self {
        RationalPgf { numerator: p, denominator: Polynomial::one(), unit }
    }

    /// PGF of a geometric variable on `{1, 2, ...}` with success
    /// probability `p`: `p s / (1 - (1-p) s)`.
    pub fn geometric(p: f64, unit: Unit) -> Self {
        let p = T::of(p);
        RationalPgf {
            numerator: Polynomial::monomial(p.clone(), 1),
            denominator: Polynomial::linear(T::one(), p - T::one()),
            unit,
        }
    }

    pub fn numerator(&self) -> &Polynomial<T> {
        &self.numerator
    }

    pub fn denominator(&self) -> &Polynomial<T> {
        &self.denominator
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    /// Value at `s`, resolving `0/0` by L'Hôpital on the polynomial
    /// derivatives up to third order.
    pub fn eval_at(&self, s: &T) -> Result<T> {
        let mut num = self.numerator.clone();
        let mut den = self.denominator.clone();
        for _order in 0..=3 {
            let (n_val, n_bits) = num.eval_checked(s);
            let (d_val, d_bits) = den.eval_checked(s);
            if !zero_like(&d_val, d_bits) {
                return Ok(n_val / d_val);
            }
            if !zero_like(&n_val, n_bits) {
                return Err(if d_val.is_zero() {
                    Error::Evaluation(format!("pole at s = {:e}", s.as_f64()))
                } else {
                    Error::NumericInstability(format!(
                        "denominator has no significant bits at s = {:e}",
                        s.as_f64()
                    ))
                });
            }
            num = num.derivative();
            den = den.derivative();
        }
        Err(Error::NumericInstability(format!(
            "0/0 at s = {:e} persists beyond third order",
            s.as_f64()
        )))
    }

    pub fn eval_f64(&self, s: f64) -> Result<f64> {
        self.eval_at(&T::of(s)).map(|v| v.as_f64())
    }

    /// `G(a s)`.
    pub fn scale_argument(&self, a: &T) -> Self {
        RationalPgf {
            numerator: self.numerator.scale_argument(a),
            denominator: self.denominator.scale_argument(a),
            unit: self.unit,
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        RationalPgf {
            numerator: &self.numerator * &other.numerator,
            denominator: &self.denominator * &other.denominator,
            unit: self.unit,
        }
    }

    pub fn mul_polynomial(&self, p: &Polynomial<T>) -> Self {
        RationalPgf {
            numerator: &self.numerator * p,
            denominator: self.denominator.clone(),
            unit: self.unit,
        }
    }

    pub fn div_polynomial(&self, p: &Polynomial<T>) -> Self {
        RationalPgf {
            numerator: self.numerator.clone(),
            denominator: &self.denominator * p,
            unit: self.unit,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, false)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, true)
    }

    fn combine(&self, other: &Self, subtract: bool) -> Self {
        let (numerator, denominator) = if self.denominator == other.denominator {
            let rhs = &other.numerator;
            let num = if subtract { &self.numerator - rhs } else { &self.numerator + rhs };
            (num, self.denominator.clone())
        } else {
            let lhs = &self.numerator * &other.denominator;
            let rhs = &other.numerator * &self.denominator;
            let num = if subtract { &lhs - &rhs } else { &lhs + &rhs };
            (num, &self.denominator * &other.denominator)
        };
        RationalPgf { numerator, denominator, unit: self.unit }
    }

    /// `outer(inner(s))`.
    ///
    /// With `outer = P/Q` of degree `m` and `inner = N/D`, returns
    /// `sum p_k N^k D^(m-k) / sum q_k N^k D^(m-k)`, each sum by Horner's rule.
    pub fn compose(outer: &Self, inner: &Self) -> Self {
        let m = outer
            .numerator
            .degree()
            .unwrap_or(0)
            .max(outer.denominator.degree().unwrap_or(0));
        let horner = |p: &Polynomial<T>| {
            let mut acc = Polynomial::constant(p.coeff(m));
            let mut d_pow = Polynomial::one();
            for k in (0..m).rev() {
                d_pow = &d_pow * &inner.denominator;
                acc = &(&acc * &inner.numerator) + &d_pow.scale(&p.coeff(k));
            }
            acc
        };
        RationalPgf {
            numerator: horner(&outer.numerator),
            denominator: horner(&outer.denominator),
            unit: inner.unit,
        }
    }

    /// Removes common factors `(s - 1)` from numerator and denominator.
    ///
    /// Every closed-form PGF here vanishes as `0/0` at `s = 1`; the reduced
    /// form has a denominator that is nonzero on the closed unit interval.
    pub fn reduced(&self) -> Self {
        let one = T::one();
        let mut num = self.numerator.clone();
        let mut den = self.denominator.clone();
        // an exact common root leaves only rounding residue at s = 1
        let vanishes = |p: &Polynomial<T>| {
            let (v, bits) = p.eval_checked(&one);
            zero_like(&v, bits)
        };
        while den.degree().is_some_and(|d| d > 0) && vanishes(&den) && vanishes(&num) {
            num = num.deflate(&one).0;
            den = den.deflate(&one).0;
        }
        RationalPgf { numerator: num, denominator: den, unit: self.unit }
    }

    /// Checks `G(1) = 1`.
    pub fn check_normalization(&self) -> Result<()> {
        let g1 = self.reduced().eval_at(&T::one())?.as_f64();
        if (g1 - 1.0).abs() > NORMALIZATION_TOLERANCE || !g1.is_finite() {
            return Err(Error::NumericInstability(format!("G(1) = {g1} differs from 1")));
        }
        Ok(())
    }

    /// `E[X] = G'(1)`, from the reduced form.
    pub fn mean(&self) -> Result<f64> {
        let r = self.reduced();
        let one = T::one();
        let (d1, d_bits) = r.denominator.eval_checked(&one);
        if d1.is_zero() || d_bits < 1.0 {
            return Err(Error::DivergentMean("denominator vanishes at s = 1".into()));
        }
        let (n1, _) = r.numerator.eval_checked(&one);
        let g1 = n1 / d1.clone();
        let dn = r.numerator.derivative().eval(&one);
        let dd = r.denominator.derivative().eval(&one);
        let mean = ((dn - g1 * dd) / d1).as_f64();
        if !mean.is_finite() {
            return Err(Error::DivergentMean(format!("G'(1) = {mean}")));
        }
        Ok(mean)
    }

    /// Converts the coefficients to another scalar type.
    pub fn cast<U: Scalar>(&self) -> RationalPgf<U> {
        RationalPgf {
            numerator: self.numerator.map(|c| U::of(c.as_f64())),
            denominator: self.denominator.map(|c| U::of(c.as_f64())),
            unit: self.unit,
        }
    }
}

/// `(1 - lambda + (lambda - epsilon) s)^n` and `(1 - epsilon s)^n`, the two
/// expansions every frame-synchronous PGF is built from.
struct SyncFactors<T> {
    mixed: Polynomial<T>,
    retx: Polynomial<T>,
    empty_frame: T,
}

impl<T: Scalar> SyncFactors<T> {
    fn new(p: &SystemParams) -> Self {
        let lambda = T::of(p.lambda);
        let eps = T::of(p.epsilon);
        let stay = T::one() - lambda.clone();
        SyncFactors {
            mixed: Polynomial::binomial_power(stay.clone(), lambda - eps.clone(), p.n),
            retx: Polynomial::binomial_power(T::one(), -eps, p.n),
            empty_frame: stay.powu(p.n as u64),
        }
    }
}

/// `1 - lambda n / (1 - epsilon)` evaluated in `T`.
fn idle_probability<T: Scalar>(p: &SystemParams) -> T {
    let load = T::of(p.lambda) * T::of_usize(p.n as usize);
    T::one() - load / (T::one() - T::of(p.epsilon))
}

/// Delay PGF of the frame-synchronous queue, in frames.
pub fn delay_pgf_sync<T: Scalar>(p: &SystemParams) -> Result<RationalPgf<T>> {
    p.expect_regime(Regime::FrameSync)?;
    let f = SyncFactors::<T>::new(p);
    let one_minus_s = Polynomial::linear(T::one(), -T::one());
    let bracket = &f.retx.scale(&f.empty_frame) - &f.mixed;
    let numerator = (&one_minus_s * &bracket).scale(&idle_probability::<T>(p));
    let denominator = (&f.retx.shift(1) - &f.mixed).scale(&(T::one() - f.empty_frame));
    RationalPgf::new(numerator, denominator, Unit::Frames)
}

/// Delay PGF of the frame-asynchronous queue, in channel uses.
pub fn delay_pgf_async<T: Scalar>(p: &SystemParams) -> Result<RationalPgf<T>> {
    p.expect_regime(Regime::FrameAsync)?;
    let n = p.n as usize;
    let lambda = T::of(p.lambda);
    let eps = T::of(p.epsilon);
    let slack = T::one() - eps.clone() - lambda.clone() * T::of_usize(n);
    // (s - 1) slack s^n
    let numerator = Polynomial::linear(-slack.clone(), slack).shift(n);
    // s - (1 - lambda) - (lambda - eps + eps s) s^n
    let head = Polynomial::linear(lambda.clone() - T::one(), T::one());
    let tail = Polynomial::linear(lambda - eps.clone(), eps).shift(n);
    RationalPgf::new(numerator, &head - &tail, Unit::ChannelUses)
}

/// `G_D(s) - (1 - s) G_D(c s) / (1 - c s)`, the common factor of both
/// peak-age PGFs.
fn age_kernel<T: Scalar>(delay: &RationalPgf<T>, c: &T) -> RationalPgf<T> {
    let one_minus_s = Polynomial::linear(T::one(), -T::one());
    let one_minus_cs = Polynomial::linear(T::one(), -c.clone());
    let shifted = delay
        .scale_argument(c)
        .mul_polynomial(&one_minus_s)
        .div_polynomial(&one_minus_cs);
    delay.sub(&shifted)
}

/// Peak-age PGF of the frame-synchronous queue, in frames.
pub fn peak_age_pgf_sync<T: Scalar>(p: &SystemParams) -> Result<RationalPgf<T>> {
    let delay = delay_pgf_sync::<T>(p)?.reduced();
    let f = SyncFactors::<T>::new(p);
    let prefactor = RationalPgf::new(
        &f.mixed - &f.retx.scale(&f.empty_frame),
        f.retx.scale(&(T::one() - f.empty_frame.clone())),
        Unit::Frames,
    )?;
    let kernel = age_kernel(&delay, &f.empty_frame);
    RationalPgf::new(
        &prefactor.numerator * &kernel.numerator,
        &prefactor.denominator * &kernel.denominator,
        Unit::Frames,
    )
}

/// Peak-age PGF of the frame-asynchronous queue, in channel uses.
pub fn peak_age_pgf_async<T: Scalar>(p: &SystemParams) -> Result<RationalPgf<T>> {
    let delay = delay_pgf_async::<T>(p)?.reduced();
    let n = p.n as usize;
    let eps = T::of(p.epsilon);
    let prefactor = RationalPgf::new(
        Polynomial::monomial(T::one() - eps.clone(), n),
        &Polynomial::one() - &Polynomial::monomial(eps, n),
        Unit::ChannelUses,
    )?;
    let kernel = age_kernel(&delay, &(T::one() - T::of(p.lambda)));
    RationalPgf::new(
        &prefactor.numerator * &kernel.numerator,
        &prefactor.denominator * &kernel.denominator,
        Unit::ChannelUses,
    )
}

/// PGF for the given metric in the parameters' regime.
pub fn build<T: Scalar>(p: &SystemParams, metric: Metric) -> Result<RationalPgf<T>> {
    match (p.regime, metric) {
        (Regime::FrameSync, Metric::Delay) => delay_pgf_sync(p),
        (Regime::FrameSync, Metric::PeakAge) => peak_age_pgf_sync(p),
        (Regime::FrameAsync, Metric::Delay) => delay_pgf_async(p),
        (Regime::FrameAsync, Metric::PeakAge) => peak_age_pgf_async(p),
    }
}

/// Intermediate PGFs of the embedded-chain derivation of the
/// frame-synchronous delay.
pub struct ChainPieces<T> {
    /// Indicator that a frame carries at least one arrival.
    pub nonempty_frame: RationalPgf<T>,
    /// Transmissions needed for one packet.
    pub packet_service: RationalPgf<T>,
    /// Packets in a bulk.
    pub bulk_size: RationalPgf<T>,
    /// Frames needed to serve a bulk.
    pub bulk_service: RationalPgf<T>,
    /// Bulks arriving during one bulk service.
    pub arrivals_during_service: RationalPgf<T>,
    /// Bulks left behind by a departing bulk.
    pub queue_at_departure: RationalPgf<T>,
    /// `E[M] = lambda n / (1 - epsilon)`.
    pub mean_arrivals: f64,
    /// The delay PGF obtained by composing the pieces.
    pub delay: RationalPgf<T>,
}

/// Builds the delay PGF from its embedded Markov chain pieces instead of
/// the closed form; both must agree as functions.
pub fn appendix_chain<T: Scalar>(p: &SystemParams) -> Result<ChainPieces<T>> {
    p.expect_regime(Regime::FrameSync)?;
    let unit = Unit::Frames;
    let lambda = T::of(p.lambda);
    let eps = T::of(p.epsilon);
    let a = (T::one() - lambda.clone()).powu(p.n as u64);
    let busy = T::one() - a.clone();

    let nonempty_frame =
        RationalPgf::from_polynomial(Polynomial::linear(a.clone(), busy.clone()), unit);
    let packet_service = RationalPgf::new(
        Polynomial::monomial(T::one() - eps.clone(), 1),
        Polynomial::linear(T::one(), -eps),
        unit,
    )?;
    let bulk_size = RationalPgf::from_polynomial(
        (&Polynomial::binomial_power(T::one() - lambda.clone(), lambda, p.n)
            - &Polynomial::constant(a.clone()))
            .scale(&(T::one() / busy.clone())),
        unit,
    );
    let bulk_service = RationalPgf::compose(&bulk_size, &packet_service);
    let arrivals_during_service = RationalPgf::compose(&bulk_service, &nonempty_frame);

    let mean_m = T::of(p.lambda) * T::of_usize(p.n as usize) / (T::one() - T::of(p.epsilon));
    // (1 - E[M]) (s - 1) P / (s Q - P) with G_M = P / Q
    let gm = &arrivals_during_service;
    let queue_at_departure = RationalPgf::new(
        (&Polynomial::linear(-T::one(), T::one()) * &gm.numerator)
            .scale(&(T::one() - mean_m.clone())),
        &gm.denominator.shift(1) - &gm.numerator,
        unit,
    )?;
    let inverse = RationalPgf::from_polynomial(
        Polynomial::linear(-a.clone() / busy.clone(), T::one() / busy),
        unit,
    );
    let delay = RationalPgf::compose(&queue_at_departure, &inverse);
    Ok(ChainPieces {
        nonempty_frame,
        packet_service,
        bulk_size,
        bulk_service,
        arrivals_during_service,
        queue_at_departure,
        mean_arrivals: mean_m.as_f64(),
        delay,
    })
}

/// The composed delay PGF from [`appendix_chain`].
pub fn appendix_chain_pgf<T: Scalar>(p: &SystemParams) -> Result<RationalPgf<T>> {
    Ok(appendix_chain(p)?.delay)
}

/// Bits of significance a PGF of this kind loses when its expanded
/// coefficients are evaluated out to `radius`.
///
/// Dominated by `(1 - epsilon s)^n` and `(1 - lambda + (lambda - epsilon) s)^n`,
/// whose coefficient mass exceeds their value by
/// `((1 + epsilon r) / |1 - epsilon r|)^n`.
pub fn conditioning_bits(p: &SystemParams, metric: Metric, radius: f64) -> f64 {
    let n = p.n as f64;
    match p.regime {
        Regime::FrameSync => {
            let r = radius.max(1.0);
            let (lam, eps) = (p.lambda, p.epsilon);
            let retx = ((1.0 + eps * r) / (1.0 - eps * r).abs().max(1e-300)).log2();
            let mixed_value = (1.0 - lam + (lam - eps) * r).abs().max(1e-300);
            let mixed = ((1.0 - lam + (lam - eps).abs() * r) / mixed_value).log2();
            let per_power = n * retx.max(mixed).max(0.0);
            // the idle factor (1 - E[M]) and 1 - (1-lambda)^n shrink the value further
            let scale = -(1.0 - p.mean_arrivals_per_service()).log2()
                - (1.0 - p.empty_frame_probability()).log2();
            match metric {
                Metric::Delay => per_power + scale,
                Metric::PeakAge => 2.0 * per_power + 2.0 * scale,
            }
        }
        Regime::FrameAsync => {
            let slack = (1.0 - p.epsilon - p.load()).max(1e-300);
            let r = radius.max(1.0);
            let growth = n * r.log2();
            let base = -slack.log2() + growth;
            match metric {
                Metric::Delay => base,
                Metric::PeakAge => 2.0 * base,
            }
        }
    }
}

/// Extra bits lost by the embedded-chain composition: the inverse of
/// `a + (1 - a) s` magnifies coefficients by `((1 + a) / (1 - a))^(n+1)`.
pub fn chain_conditioning_bits(p: &SystemParams) -> f64 {
    let a = p.empty_frame_probability();
    conditioning_bits(p, Metric::Delay, 1.0) + (p.n as f64 + 1.0) * ((1.0 + a) / (1.0 - a)).log2()
}

/// Upper estimate of the radius of convergence of the PGF, located from the
/// factored (not expanded) form so it is accurate in `f64`.
pub fn radius_estimate(p: &SystemParams, metric: Metric) -> f64 {
    let n = p.n as f64;
    let (lam, eps) = (p.lambda, p.epsilon);
    let delay_radius = match p.regime {
        Regime::FrameSync => {
            // s (1 - eps s)^n = (1 - lam + (lam - eps) s)^n on (1, 1/eps)
            let f = |s: f64| {
                let h = 1.0 - lam + (lam - eps) * s;
                if h <= 0.0 {
                    return f64::INFINITY;
                }
                s.ln() + n * (-eps * s).ln_1p() - n * h.ln()
            };
            bisect_sign_change(f, 1.0, 1.0 / eps)
        }
        Regime::FrameAsync => {
            // s = 1 - lam + (lam + eps (s - 1)) s^n beyond s = 1
            let f = |s: f64| {
                let rhs = 1.0 - lam + (lam + eps * (s - 1.0)) * s.powf(n);
                (s / rhs).ln()
            };
            bisect_sign_change(f, 1.0, 1e6)
        }
    };
    match metric {
        Metric::Delay => delay_radius,
        Metric::PeakAge => {
            let gap_pole = match p.regime {
                Regime::FrameSync => 1.0 / p.empty_frame_probability(),
                // 1 - eps s^n in the prefactor
                Regime::FrameAsync => (1.0 / (1.0 - lam)).min(eps.powf(-1.0 / n)),
            };
            delay_radius.min(gap_pole)
        }
    }
}

/// Largest `s` in `(lo, hi)` before `f` changes sign from positive, by
/// scanning outward from `lo` and bisecting.
fn bisect_sign_change(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let mut a = lo;
    let mut step = 1e-9 * lo.max(1.0);
    let mut b = None;
    while a + step < hi {
        let x = a + step;
        let v = f(x);
        if !(v > 0.0) {
            b = Some(x);
            break;
        }
        a = x;
        step *= 1.25;
    }
    let Some(mut b) = b else {
        return hi;
    };
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if f(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Mp;
    use num_traits::One;

    type M = Mp<512>;

    fn sync(lambda: f64, eps: f64, n: u32) -> SystemParams {
        SystemParams::new(lambda, n, eps, Regime::FrameSync).unwrap()
    }

    fn asyn(lambda: f64, eps: f64, n: u32) -> SystemParams {
        SystemParams::new(lambda, n, eps, Regime::FrameAsync).unwrap()
    }

    #[test]
    fn stability_is_enforced() {
        let err = SystemParams::new(0.05, 20, 0.1, Regime::FrameSync).unwrap_err();
        assert!(matches!(err, Error::Unstable { .. }));
        assert!(SystemParams::new(0.045, 20, 0.1, Regime::FrameSync).is_ok());
        assert!(SystemParams::new_allow_unstable(0.05, 20, 0.1, Regime::FrameSync).is_ok());
        assert!(SystemParams::new(0.0, 20, 0.1, Regime::FrameSync).is_err());
        assert!(SystemParams::new(0.01, 20, 1.0, Regime::FrameSync).is_err());
        assert!(SystemParams::new(0.01, 0, 0.1, Regime::FrameSync).is_err());
    }

    #[test]
    fn wrong_regime_is_rejected() {
        assert!(delay_pgf_sync::<f64>(&asyn(1e-3, 0.1, 10)).is_err());
        assert!(delay_pgf_async::<f64>(&sync(1e-3, 0.1, 10)).is_err());
    }

    #[test]
    fn geometric_value_by_hand() {
        let g = RationalPgf::<f64>::geometric(0.9, Unit::Frames);
        assert!((g.eval_f64(0.5).unwrap() - 0.45 / 0.95).abs() < 1e-15);
        assert_eq!(g.eval_f64(0.0).unwrap(), 0.0);
        assert!((g.mean().unwrap() - 1.0 / 0.9).abs() < 1e-12);
        let g = RationalPgf::<f64>::geometric(0.5, Unit::Frames);
        assert!((g.mean().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_of_every_constructor() {
        for p in [sync(1e-3, 0.1, 100), sync(1e-2, 0.3, 20)] {
            for metric in [Metric::Delay, Metric::PeakAge] {
                let g = build::<M>(&p, metric).unwrap();
                assert!((g.eval_at(&M::one()).unwrap().as_f64() - 1.0).abs() < 1e-12);
                g.check_normalization().unwrap();
                assert_eq!(g.eval_f64(0.0).unwrap(), 0.0);
            }
        }
        for p in [asyn(1e-3, 0.1, 100), asyn(1e-2, 0.1, 10)] {
            for metric in [Metric::Delay, Metric::PeakAge] {
                let g = build::<f64>(&p, metric).unwrap();
                assert!((g.eval_f64(1.0).unwrap() - 1.0).abs() < 1e-9);
                assert_eq!(g.eval_f64(0.0).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn small_lambda_limit_is_geometric() {
        let eps = 0.2;
        let g = delay_pgf_sync::<M>(&sync(1e-8, eps, 30)).unwrap();
        let geo = RationalPgf::<M>::geometric(1.0 - eps, Unit::Frames);
        for s in [0.1, 0.4, 0.7, 0.95] {
            let a = g.eval_f64(s).unwrap();
            let b = geo.eval_f64(s).unwrap();
            assert!((a - b).abs() < 1e-4, "s={s}: {a} vs {b}");
        }
    }

    #[test]
    fn async_minimum_support() {
        let n = 12;
        let g = delay_pgf_async::<f64>(&asyn(1e-2, 0.1, n)).unwrap();
        assert!(g.numerator().coeffs()[..n as usize].iter().all(|c| *c == 0.0));
        let age = peak_age_pgf_async::<f64>(&asyn(1e-2, 0.1, n)).unwrap();
        assert!(age.numerator().coeffs()[..n as usize].iter().all(|c| *c == 0.0));
    }

    #[test]
    fn async_n_equal_one_overlaps_terms() {
        // n = 1 is a Geo/Geo/1 queue; PGF must still normalize
        let g = delay_pgf_async::<f64>(&asyn(0.3, 0.2, 1)).unwrap();
        assert!((g.eval_f64(1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chain_mean_arrivals() {
        let pieces = appendix_chain::<M>(&sync(0.01, 0.5, 10)).unwrap();
        assert!((pieces.mean_arrivals - 0.2).abs() < 1e-15);
    }

    #[test]
    fn chain_pieces_are_pgfs() {
        let pieces = appendix_chain::<M>(&sync(2e-3, 0.2, 50)).unwrap();
        for g in [
            &pieces.nonempty_frame,
            &pieces.packet_service,
            &pieces.bulk_size,
            &pieces.bulk_service,
            &pieces.arrivals_during_service,
            &pieces.queue_at_departure,
        ] {
            let v = g.eval_at(&M::one()).unwrap().as_f64();
            assert!((v - 1.0).abs() < 1e-20, "{v}");
        }
    }

    #[test]
    fn chain_matches_closed_form() {
        let p = sync(1e-3, 0.2, 50);
        let closed = delay_pgf_sync::<Mp<1024>>(&p).unwrap();
        let chain = appendix_chain_pgf::<Mp<1024>>(&p).unwrap();
        for i in 1..=100 {
            let s = Mp::<1024>::of(0.99 * i as f64 / 100.0);
            let a = closed.eval_at(&s).unwrap().as_f64();
            let b = chain.eval_at(&s).unwrap().as_f64();
            assert!((a - b).abs() < 1e-10, "s={:?}", s);
        }
    }

    #[test]
    fn affine_inverse_round_trip() {
        let p = sync(1e-3, 0.2, 50);
        let a = p.empty_frame_probability();
        let fwd = |s: f64| a + (1.0 - a) * s;
        let inv = |s: f64| (s - a) / (1.0 - a);
        for i in 0..=20 {
            let s = i as f64 / 20.0;
            assert!((inv(fwd(s)) - s).abs() < 1e-12);
        }
    }

    #[test]
    fn ring_identities() {
        let g = RationalPgf::<f64>::geometric(0.7, Unit::Frames);
        let one = RationalPgf::from_polynomial(Polynomial::one(), Unit::Frames);
        let zero = RationalPgf::from_polynomial(Polynomial::zero(), Unit::Frames);
        let h = g.mul(&one).add(&zero);
        let gs = g.scale_argument(&1.0);
        for s in [0.0, 0.3, 0.8] {
            assert!((h.eval_f64(s).unwrap() - g.eval_f64(s).unwrap()).abs() < 1e-15);
            assert!((gs.eval_f64(s).unwrap() - g.eval_f64(s).unwrap()).abs() < 1e-15);
        }
        let scaled = g.scale_argument(&0.6);
        for s in [0.1, 0.5, 0.9] {
            assert!((scaled.eval_f64(s).unwrap() - g.eval_f64(0.6 * s).unwrap()).abs() < 1e-15);
        }
        let diff = g.sub(&g);
        assert_eq!(diff.eval_f64(0.4).unwrap(), 0.0);
    }

    #[test]
    fn lhopital_at_removable_singularity() {
        // (s - 1)^2 / ((s - 1)(s + 1)) -> 0 at s = 1; (s-1)/(s-1)^... pole otherwise
        let num = Polynomial::<f64>::from_f64s(&[1.0, -2.0, 1.0]);
        let den = Polynomial::<f64>::from_f64s(&[-1.0, 0.0, 1.0]);
        let g = RationalPgf::new(num, den, Unit::Frames).unwrap();
        assert_eq!(g.eval_f64(1.0).unwrap(), 0.0);
        let pole = RationalPgf::new(
            Polynomial::<f64>::from_f64s(&[1.0]),
            Polynomial::<f64>::from_f64s(&[-1.0, 1.0]),
            Unit::Frames,
        )
        .unwrap();
        assert!(matches!(pole.eval_f64(1.0), Err(Error::Evaluation(_))));
    }

    #[test]
    fn zero_constant_denominator_is_rejected() {
        let r = RationalPgf::new(
            Polynomial::<f64>::one(),
            Polynomial::<f64>::from_f64s(&[0.0, 1.0]),
            Unit::Frames,
        );
        assert!(r.is_err());
    }

    #[test]
    fn radius_estimates_are_beyond_one() {
        let p = sync(1e-3, 0.2659370016189253, 100);
        let r = radius_estimate(&p, Metric::Delay);
        // tail decays by ~3.07 per frame at these parameters
        assert!(r > 3.0 && r < 3.1, "{r}");
        assert!(radius_estimate(&p, Metric::PeakAge) < r);
        let q = asyn(1e-2, 0.1, 10);
        let r = radius_estimate(&q, Metric::Delay);
        assert!(r > 1.0 && r < 1.5, "{r}");
    }
}
