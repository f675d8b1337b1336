//! Precision selection for the PGF pipeline.
//!
//! A [`Computation`] is written once, generically over [`Scalar`], and run
//! by [`evaluate`] on a ladder of scalar types. In extended mode the first
//! rung is chosen from the computation's own conditioning estimate and a
//! result is only accepted when the next rung reproduces it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Mp, Scalar};

/// Arithmetic used by the analytical pipeline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Precision {
    /// Plain `f64`; numeric trouble surfaces as [`Error::NumericInstability`].
    Double,
    /// Automatic multiprecision ladder, verified rung against rung.
    #[default]
    Extended,
}

/// Significand widths of the ladder, in bits.
pub const LADDER: [u32; 8] = [53, 128, 256, 512, 1024, 2048, 4096, 8192];

/// Safety margin added to a conditioning estimate when picking a rung.
const GUARD_BITS: f64 = 64.0;

/// Largest estimated loss for which `f64` is tried first.
const DOUBLE_BUDGET_BITS: f64 = 14.0;

/// A numeric task that can run at any precision.
pub trait Computation: Sync {
    type Output: Send;

    fn run<T: Scalar>(&self) -> Result<Self::Output>;

    /// Estimated bits of significance lost to cancellation.
    fn conditioning_bits(&self) -> f64;

    /// Whether two results from adjacent rungs agree well enough that the
    /// less precise one can be trusted.
    fn agree(&self, coarse: &Self::Output, fine: &Self::Output) -> bool;
}

/// Index of the first rung worth trying for a given estimated loss.
pub fn starting_rung(loss_bits: f64) -> usize {
    if !loss_bits.is_finite() {
        return LADDER.len() - 1;
    }
    if loss_bits <= DOUBLE_BUDGET_BITS {
        return 0;
    }
    LADDER
        .iter()
        .skip(1)
        .position(|&bits| bits as f64 >= loss_bits + GUARD_BITS)
        .map(|i| i + 1)
        .unwrap_or(LADDER.len() - 1)
}

fn run_rung<C: Computation>(c: &C, rung: usize) -> Result<C::Output> {
    match rung {
        0 => c.run::<f64>(),
        1 => c.run::<Mp<128>>(),
        2 => c.run::<Mp<256>>(),
        3 => c.run::<Mp<512>>(),
        4 => c.run::<Mp<1024>>(),
        5 => c.run::<Mp<2048>>(),
        6 => c.run::<Mp<4096>>(),
        _ => c.run::<Mp<8192>>(),
    }
}

fn retryable(e: &Error) -> bool {
    matches!(e, Error::NumericInstability(_) | Error::Evaluation(_) | Error::Convergence(_))
}

/// Runs `c` at the requested precision.
///
/// Errors that more bits can cure are retried one rung up; any other error
/// is returned as soon as it appears.
pub fn evaluate<C: Computation>(c: &C, precision: Precision) -> Result<C::Output> {
    match precision {
        Precision::Double => run_rung(c, 0),
        Precision::Extended => evaluate_from(c, starting_rung(c.conditioning_bits())),
    }
}

/// The extended ladder starting at a given rung; exposed for tests.
pub fn evaluate_from<C: Computation>(c: &C, start: usize) -> Result<C::Output> {
    let top = LADDER.len() - 1;
    let mut rung = start.min(top);
    let mut current = run_rung(c, rung);
    loop {
        if rung == top {
            return current.map_err(|e| {
                if retryable(&e) {
                    Error::NumericInstability(format!(
                        "{e} (still failing at {} bits)",
                        LADDER[top]
                    ))
                } else {
                    e
                }
            });
        }
        let next = run_rung(c, rung + 1);
        match (&current, &next) {
            (Ok(a), Ok(b)) if c.agree(a, b) => return next,
            (Err(e), _) if !retryable(e) => return current,
            (Ok(_), Err(e)) if !retryable(e) => return next,
            _ => {}
        }
        rung += 1;
        current = next;
    }
}

/// Relative agreement test shared by the computations in this crate.
pub(crate) fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Cancellation {
        gap: f64,
    }

    impl Computation for Cancellation {
        type Output = f64;

        // (1 + gap) - 1, divided by gap: exactly 1 once gap is representable
        fn run<T: Scalar>(&self) -> Result<f64> {
            let g = T::of(self.gap);
            let v = ((T::one() + g.clone()) - T::one()) / g;
            Ok(v.as_f64())
        }

        fn conditioning_bits(&self) -> f64 {
            -self.gap.log2()
        }

        fn agree(&self, a: &f64, b: &f64) -> bool {
            close(*a, *b, 1e-12, 0.0)
        }
    }

    struct AlwaysUnstable;

    impl Computation for AlwaysUnstable {
        type Output = ();
        fn run<T: Scalar>(&self) -> Result<()> {
            Err(Error::NumericInstability(format!("{} bits", T::MANTISSA_BITS)))
        }
        fn conditioning_bits(&self) -> f64 {
            0.0
        }
        fn agree(&self, _: &(), _: &()) -> bool {
            true
        }
    }

    #[test]
    fn rung_choice_follows_estimate() {
        assert_eq!(starting_rung(0.0), 0);
        assert_eq!(starting_rung(14.0), 0);
        assert_eq!(starting_rung(20.0), 1);
        assert_eq!(starting_rung(100.0), 2);
        assert_eq!(starting_rung(300.0), 3);
        assert_eq!(starting_rung(1e9), LADDER.len() - 1);
        assert_eq!(starting_rung(f64::NAN), LADDER.len() - 1);
    }

    #[test]
    fn double_loses_what_extended_keeps() {
        let c = Cancellation { gap: 2f64.powi(-60) };
        assert_eq!(evaluate(&c, Precision::Double).unwrap(), 0.0);
        assert_eq!(evaluate(&c, Precision::Extended).unwrap(), 1.0);
    }

    #[test]
    fn verification_escalates_from_a_bad_start() {
        // starting at f64 gives 0, which the 128-bit rung contradicts
        let c = Cancellation { gap: 2f64.powi(-60) };
        assert_eq!(evaluate_from(&c, 0).unwrap(), 1.0);
    }

    #[test]
    fn persistent_instability_is_reported() {
        match evaluate(&AlwaysUnstable, Precision::Extended) {
            Err(Error::NumericInstability(msg)) => assert!(msg.contains("8192")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn closeness() {
        assert!(close(1.0, 1.0 + 1e-13, 1e-12, 0.0));
        assert!(!close(1.0, 1.0 + 1e-11, 1e-12, 0.0));
        assert!(close(0.0, 1e-310, 0.0, 1e-300));
    }
}
