//! Dense real polynomials in ascending coefficient order.

use std::ops::{Add, Mul, Neg, Sub};

use num_traits::Zero;

use crate::scalar::Scalar;

/// `c[0] + c[1] s + ... + c[d] s^d`.
///
/// Trailing exact zeros are trimmed, so the zero polynomial has no
/// coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial<T> {
    coeffs: Vec<T>,
}

/// Sum with Neumaier compensation for short significands; plain
/// accumulation once the scalar already carries spare bits.
pub(crate) fn sum_terms<T: Scalar>(terms: impl Iterator<Item = T>) -> T {
    if T::MANTISSA_BITS > 64 {
        return terms.fold(T::zero(), |acc, t| acc + t);
    }
    let mut sum = T::zero();
    let mut comp = T::zero();
    for t in terms {
        let next = sum.clone() + t.clone();
        if sum.abs() >= t.abs() {
            comp = comp + ((sum - next.clone()) + t);
        } else {
            comp = comp + ((t - next.clone()) + sum);
        }
        sum = next;
    }
    sum + comp
}

impl<T: Scalar> Polynomial<T> {
    pub fn new(mut coeffs: Vec<T>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn from_f64s(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| T::of(c)).collect())
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    pub fn constant(c: T) -> Self {
        Self::new(vec![c])
    }

    pub fn one() -> Self {
        Self::constant(T::one())
    }

    /// `c s^k`.
    pub fn monomial(c: T, k: usize) -> Self {
        let mut coeffs = vec![T::zero(); k + 1];
        coeffs[k] = c;
        Self::new(coeffs)
    }

    /// `a + b s`.
    pub fn linear(a: T, b: T) -> Self {
        Self::new(vec![a, b])
    }

    /// `(a + b s)^n`, expanded with the ratio recurrence
    /// `c_k = c_{k-1} (b/a) (n-k+1)/k` starting from `a^n`, which never forms a
    /// raw binomial coefficient.
    pub fn binomial_power(a: T, b: T, n: u32) -> Self {
        if n == 0 {
            return Self::one();
        }
        if a.is_zero() {
            return Self::monomial(b.powu(n as u64), n as usize);
        }
        let ratio = b / a.clone();
        let mut coeffs = Vec::with_capacity(n as usize + 1);
        let mut c = a.powu(n as u64);
        coeffs.push(c.clone());
        for k in 1..=n as usize {
            c = c * ratio.clone() * T::of_usize(n as usize - k + 1) / T::of_usize(k);
            coeffs.push(c.clone());
        }
        Self::new(coeffs)
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Coefficient of `s^k`, zero beyond the degree.
    pub fn coeff(&self, k: usize) -> T {
        self.coeffs.get(k).cloned().unwrap_or_else(T::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    /// Horner evaluation.
    pub fn eval(&self, s: &T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, c| acc * s.clone() + c.clone())
    }

    /// `sum |c_k| |s|^k`, the scale against which Horner rounding is measured.
    pub fn abs_eval(&self, s: &T) -> T {
        let r = s.abs();
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, c| acc * r.clone() + c.abs())
    }

    /// Evaluates and reports how many significant bits the result retains.
    ///
    /// Horner's rounding error is bounded by `2 d u sum |c_k||s|^k`; the
    /// returned figure is `log2(|p(s)| / that bound)`, or `-inf` at an exact
    /// zero.
    pub fn eval_checked(&self, s: &T) -> (T, f64) {
        let value = self.eval(s);
        let scale = self.abs_eval(s);
        if scale.is_zero() {
            return (value, f64::INFINITY);
        }
        let d = self.coeffs.len().max(1) as f64;
        let rel = (value.abs() / scale).as_f64();
        let bits = rel.log2() - (2.0 * d * T::unit_roundoff()).log2();
        (value, bits)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c.clone() * T::of_usize(k))
                .collect(),
        )
    }

    pub fn scale(&self, c: &T) -> Self {
        Self::new(self.coeffs.iter().map(|x| x.clone() * c.clone()).collect())
    }

    /// `p(a s)`: coefficient `c_k` becomes `c_k a^k`.
    pub fn scale_argument(&self, a: &T) -> Self {
        let mut pow = T::one();
        let mut out = Vec::with_capacity(self.coeffs.len());
        for c in &self.coeffs {
            out.push(c.clone() * pow.clone());
            pow = pow * a.clone();
        }
        Self::new(out)
    }

    /// `s^k p(s)`.
    pub fn shift(&self, k: usize) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        let mut coeffs = vec![T::zero(); k];
        coeffs.extend(self.coeffs.iter().cloned());
        Self::new(coeffs)
    }

    /// Synthetic division by `(s - r)`: returns `(q, rem)` with
    /// `p(s) = (s - r) q(s) + rem`.
    pub fn deflate(&self, r: &T) -> (Self, T) {
        let Some(deg) = self.degree() else {
            return (Self::zero(), T::zero());
        };
        if deg == 0 {
            return (Self::zero(), self.coeffs[0].clone());
        }
        let mut q = vec![T::zero(); deg];
        let mut acc = T::zero();
        for k in (1..=deg).rev() {
            acc = acc * r.clone() + self.coeffs[k].clone();
            q[k - 1] = acc.clone();
        }
        let rem = acc * r.clone() + self.coeffs[0].clone();
        (Self::new(q), rem)
    }

    /// `sum |c_k|`.
    pub fn l1_norm(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |acc, c| acc + c.abs())
    }

    /// Indices of nonzero coefficients, for sparse recursions.
    pub fn support(&self) -> Vec<usize> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(k, _)| k)
            .collect()
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Polynomial<U> {
        Polynomial::new(self.coeffs.iter().map(f).collect())
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }
}

impl<T: Scalar> Add for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn add(self, rhs: &Polynomial<T>) -> Polynomial<T> {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..len).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl<T: Scalar> Sub for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn sub(self, rhs: &Polynomial<T>) -> Polynomial<T> {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..len).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl<T: Scalar> Mul for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn mul(self, rhs: &Polynomial<T>) -> Polynomial<T> {
        if self.is_zero() || rhs.is_zero() {
            return Polynomial::zero();
        }
        let (a, b) = (&self.coeffs, &rhs.coeffs);
        let len = a.len() + b.len() - 1;
        let a_nz: Vec<usize> = self.support();
        let out = (0..len)
            .map(|k| {
                let lo = k.saturating_sub(b.len() - 1);
                sum_terms(
                    a_nz.iter()
                        .copied()
                        .filter(|&i| i >= lo && i <= k)
                        .map(|i| a[i].clone() * b[k - i].clone()),
                )
            })
            .collect();
        Polynomial::new(out)
    }
}

impl<T: Scalar> Neg for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn neg(self) -> Polynomial<T> {
        Polynomial::new(self.coeffs.iter().map(|c| -c.clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Mp;

    fn p(c: &[f64]) -> Polynomial<f64> {
        Polynomial::from_f64s(c)
    }

    #[test]
    fn trims_trailing_zeros() {
        assert_eq!(p(&[1.0, 0.0, 0.0]).degree(), Some(0));
        assert!(p(&[0.0]).is_zero());
        assert_eq!(p(&[]).degree(), None);
    }

    #[test]
    fn binomial_power_small_cases() {
        assert_eq!(
            Polynomial::binomial_power(1.0, 1.0, 3).coeffs(),
            &[1.0, 3.0, 3.0, 1.0]
        );
        let q = Polynomial::binomial_power(2.0, -0.5, 4);
        let expect = [16.0, -16.0, 6.0, -1.0, 0.0625];
        for (a, b) in q.coeffs().iter().zip(expect) {
            assert!((a - b as f64).abs() < 1e-12);
        }
        assert_eq!(Polynomial::binomial_power(0.0, 2.0, 3).coeffs(), &[0.0, 0.0, 0.0, 8.0]);
        assert_eq!(Polynomial::binomial_power(5.0, 2.0, 0).coeffs(), &[1.0]);
    }

    #[test]
    fn binomial_power_beyond_overflow_of_raw_binomials() {
        // C(1030, 515) overflows a double; the folded recurrence does not
        let q = Polynomial::binomial_power(0.5, 0.5, 1030);
        assert!(q.coeffs().iter().all(|c: &f64| c.is_finite()));
        assert!((q.eval(&1.0) - 1.0).abs() < 1e-10);
        // 0.5^3000 underflows a double but not an Mp
        let m = Polynomial::binomial_power(Mp::<128>::of(0.5), Mp::<128>::of(0.5), 3000);
        assert!((m.eval(&Mp::<128>::of(1.0)).as_f64() - 1.0).abs() < 1e-20);
    }

    #[test]
    fn ring_operations() {
        let a = p(&[1.0, 2.0]);
        let b = p(&[-1.0, 0.0, 3.0]);
        assert_eq!((&a * &b).coeffs(), &[-1.0, -2.0, 3.0, 6.0]);
        assert_eq!((&a + &b).coeffs(), &[0.0, 2.0, 3.0]);
        assert_eq!((&a - &a).coeffs(), &[] as &[f64]);
        assert_eq!((&a * &Polynomial::one()), a);
        assert_eq!((&a + &Polynomial::zero()), a);
        assert_eq!(a.pow(2).coeffs(), &[1.0, 4.0, 4.0]);
    }

    #[test]
    fn derivative_and_shift() {
        let a = p(&[5.0, 1.0, 2.0, 3.0]);
        assert_eq!(a.derivative().coeffs(), &[1.0, 4.0, 9.0]);
        assert_eq!(a.shift(2).coeffs(), &[0.0, 0.0, 5.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn scale_argument_matches_evaluation() {
        let a = p(&[0.3, -1.0, 0.25, 2.0]);
        let scaled = a.scale_argument(&0.7);
        for s in [0.0, 0.2, 0.9, 1.0] {
            assert!((scaled.eval(&s) - a.eval(&(0.7 * s))).abs() < 1e-14);
        }
        assert_eq!(a.scale_argument(&1.0), a);
    }

    #[test]
    fn deflate_exact_root() {
        // (s - 1)(s + 2) = s^2 + s - 2
        let (q, rem) = p(&[-2.0, 1.0, 1.0]).deflate(&1.0);
        assert_eq!(q.coeffs(), &[2.0, 1.0]);
        assert_eq!(rem, 0.0);
        let (_, rem) = p(&[1.0, 1.0]).deflate(&1.0);
        assert_eq!(rem, 2.0);
    }

    #[test]
    fn checked_eval_flags_cancellation() {
        // (1 - 0.5 s)^200 at s = 1: coefficients of size 1.5^200, value 0.5^200
        let q: Polynomial<f64> = Polynomial::binomial_power(1.0, -0.5, 200);
        let (_, bits) = q.eval_checked(&1.0);
        assert!(bits < 0.0, "f64 cannot resolve it, got {bits} bits");

        let q: Polynomial<Mp<512>> = Polynomial::binomial_power(Mp::of(1.0), Mp::of(-0.5), 200);
        let (v, bits) = q.eval_checked(&Mp::of(1.0));
        assert!(bits > 100.0);
        assert!((v.as_f64() / 0.5f64.powi(200) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let terms = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(sum_terms(terms.into_iter()), 2.0);
    }
}
