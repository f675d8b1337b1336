//! Packet error probability of a short codeword over the real AWGN channel,
//! from the normal approximation with the `log2(n)/2` third-order term.

use serde::Serialize;
use libm::erfc;

use crate::error::{Error, Result};

/// Smallest error probability ever reported; keeps `epsilon` strictly
/// inside `(0, 1)`.
pub const EPSILON_FLOOR: f64 = 1e-300;

/// `1 - EPSILON_FLOOR` is not representable; this is the largest double
/// below one.
pub const EPSILON_CEILING: f64 = 1.0 - f64::EPSILON / 2.0;

/// Physical-layer parameters of one codeword.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChannelParams {
    /// Linear SNR (unit noise variance, so also the codeword power).
    pub rho: f64,
    /// Information bits per packet.
    pub k: u32,
    /// Blocklength in channel uses.
    pub n: u32,
}

impl ChannelParams {
    pub fn new(rho: f64, k: u32, n: u32) -> Result<Self> {
        let params = ChannelParams { rho, k, n };
        params.validate()?;
        Ok(params)
    }

    pub fn from_db(snr_db: f64, k: u32, n: u32) -> Result<Self> {
        Self::new(db_to_linear(snr_db), k, n)
    }

    pub fn with_blocklength(self, n: u32) -> Result<Self> {
        Self::new(self.rho, self.k, n)
    }

    fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::InvalidParameter(format!("snr must be positive, got {}", self.rho)));
        }
        if self.k == 0 {
            return Err(Error::InvalidParameter("payload k must be at least 1 bit".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("blocklength n must be at least 1".into()));
        }
        Ok(())
    }

    /// Capacity in bits per channel use.
    pub fn capacity(&self) -> f64 {
        0.5 * (1.0 + self.rho).log2()
    }

    /// Channel dispersion in bits^2 per channel use.
    pub fn dispersion(&self) -> f64 {
        let r = self.rho;
        let log2e = std::f64::consts::LOG2_E;
        r * (r + 2.0) / (2.0 * (r + 1.0) * (r + 1.0)) * log2e * log2e
    }
}

pub fn db_to_linear(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

/// Gaussian tail `Q(x) = P(N(0,1) > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Packet error probability
/// `Q((n C - k + log2(n)/2) / sqrt(n V))`, clamped to
/// `[EPSILON_FLOOR, EPSILON_CEILING]`.
pub fn error_probability(params: &ChannelParams) -> Result<f64> {
    params.validate()?;
    let n = params.n as f64;
    let arg = (n * params.capacity() - params.k as f64 + 0.5 * n.log2())
        / (n * params.dispersion()).sqrt();
    Ok(q_function(arg).clamp(EPSILON_FLOOR, EPSILON_CEILING))
}
