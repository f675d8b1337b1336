//! Command-line flags, the optional `key = value` config file, and the
//! resolved run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use shortpkt::channel::{db_to_linear, error_probability, ChannelParams};
use shortpkt::optimizer::ChannelFamily;
use shortpkt::pgf::{Regime, SystemParams};
use shortpkt::precision::Precision;

#[derive(Parser, Debug)]
#[command(
    name = "shortpkt",
    version,
    about = "Delay and peak-age violation analysis for short-packet ARQ over AWGN",
    after_help = "Every flag can also be given in a --config file as `key = value`; flags win.\n\
                  SHORTPKT_THREADS caps the worker threads.\n\
                  Exit codes: 0 ok, 1 numeric failure, 2 invalid input, 3 unstable queue,\n\
                  4 saddlepoint below the mean, 5 infeasible target, 6 monotonicity violated."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Delay violation probability per budget.
    /// CSV: d0_cu,d_frames,pdv_exact,pdv_saddlepoint,pdv_netcalc (d_frames is in CUs for async).
    Pdv,
    /// Peak-age violation probability per budget.
    /// CSV: a0_cu,a_units,age_exact,age_saddlepoint.
    Age,
    /// Delay violation probability over a blocklength range.
    /// CSV: n,epsilon,d,pdv_exact (NA when unstable).
    Sweep,
    /// Maximum throughput k*lambda* over a blocklength range.
    /// CSV: n,epsilon,d,lambda_star_exact,throughput_exact,lambda_star_netcalc,throughput_netcalc.
    Throughput,
    /// Monte-Carlo simulation.
    /// CSV: d,delay_ccdf,delay_stderr,peak_age_ccdf,peak_age_stderr.
    Simulate,
    /// Exact, saddlepoint, bound and simulation side by side.
    /// CSV: d0_cu,d,exact,saddlepoint,netcalc,simulation,simulation_stderr.
    Compare,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeArg {
    Sync,
    Async,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodArg {
    Exact,
    Saddlepoint,
    Netcalc,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecisionArg {
    Double,
    Extended,
}

/// Every flag is optional here so that the config file can fill the gaps.
#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// SNR in dB.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
    /// Information bits per packet.
    #[arg(long, global = true)]
    pub k: Option<u32>,
    /// Blocklength in channel uses.
    #[arg(long, global = true)]
    pub n: Option<u32>,
    /// Smallest blocklength of a range.
    #[arg(long, global = true)]
    pub n_min: Option<u32>,
    /// Largest blocklength of a range, inclusive.
    #[arg(long, global = true)]
    pub n_max: Option<u32>,
    /// Arrival probability per channel use.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Packet error probability; overrides the channel-derived value.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Delay budgets in CUs, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub d0: Option<Vec<u64>>,
    /// Peak-age budgets in CUs, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub a0: Option<Vec<u64>>,
    /// Largest acceptable violation probability.
    #[arg(long, global = true)]
    pub target: Option<f64>,
    /// Frame-synchronous or asynchronous service start; sync by default.
    #[arg(long, global = true, value_enum)]
    pub regime: Option<RegimeArg>,
    /// Restrict the output to one method.
    #[arg(long, global = true, value_enum)]
    pub method: Option<MethodArg>,
    /// Simulated CUs per replica.
    #[arg(long, global = true)]
    pub horizon: Option<u64>,
    /// CUs discarded before recording; a tenth of the horizon by default.
    #[arg(long, global = true)]
    pub warmup: Option<u64>,
    /// Master seed; replicas use derived sub-seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Independent simulation runs, merged in order.
    #[arg(long, global = true)]
    pub replicas: Option<u32>,
    /// Record every stride-th bulk only.
    #[arg(long, global = true)]
    pub stride: Option<u32>,
    /// Output format; csv by default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
    /// Output path; stdout by default.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Arithmetic for the exact method; extended by default.
    #[arg(long, global = true, value_enum)]
    pub precision: Option<PrecisionArg>,
}

/// Parses a flat `key = value` file. `#` starts a comment; values may be
/// double-quoted; dashes and underscores in keys are interchangeable.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected `key = value`", i + 1))?;
        let key = key.trim().replace('-', "_");
        let value = value.trim().trim_matches('"').to_string();
        if map.insert(key.clone(), value).is_some() {
            bail!("config line {}: duplicate key `{key}`", i + 1);
        }
    }
    Ok(map)
}

fn take<T: FromStr>(map: &mut BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    map.remove(key)
        .map(|v| v.parse::<T>().map_err(|e| anyhow!("config key `{key}`: {e}")))
        .transpose()
}

fn take_enum<T: ValueEnum>(map: &mut BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.remove(key)
        .map(|v| T::from_str(&v, true).map_err(|e| anyhow!("config key `{key}`: {e}")))
        .transpose()
}

fn take_list(map: &mut BTreeMap<String, String>, key: &str) -> Result<Option<Vec<u64>>> {
    map.remove(key)
        .map(|v| {
            v.trim_matches(|c| c == '[' || c == ']')
                .split(',')
                .map(|x| x.trim().parse::<u64>().map_err(|e| anyhow!("config key `{key}`: {e}")))
                .collect()
        })
        .transpose()
}

impl Flags {
    /// Fills every unset flag from the config file, if one was given.
    pub fn merge_config(mut self) -> Result<Flags> {
        let Some(path) = self.config.clone() else { return Ok(self) };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut map = parse_config(&text)?;
        macro_rules! fill {
            ($($field:ident: $how:ident),* $(,)?) => {
                $(if self.$field.is_none() {
                    self.$field = $how(&mut map, stringify!($field))?;
                } else {
                    map.remove(stringify!($field));
                })*
            };
        }
        fill!(
            snr_db: take, k: take, n: take, n_min: take, n_max: take, lambda: take,
            epsilon: take, d0: take_list, a0: take_list, target: take, regime: take_enum,
            method: take_enum, horizon: take, warmup: take, seed: take, replicas: take,
            stride: take, format: take_enum, out: take, precision: take_enum,
        );
        if let Some(key) = map.keys().next() {
            bail!("unknown config key `{key}` in {}", path.display());
        }
        Ok(self)
    }
}

/// Flags after merging, with accessors that name what is missing.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub flags: Flags,
}

fn need<T: Copy>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| anyhow!("missing required --{flag}"))
}

impl RunConfig {
    pub fn regime(&self) -> Regime {
        match self.flags.regime.unwrap_or(RegimeArg::Sync) {
            RegimeArg::Sync => Regime::FrameSync,
            RegimeArg::Async => Regime::FrameAsync,
        }
    }

    pub fn precision(&self) -> Precision {
        match self.flags.precision.unwrap_or(PrecisionArg::Extended) {
            PrecisionArg::Double => Precision::Double,
            PrecisionArg::Extended => Precision::Extended,
        }
    }

    pub fn format(&self) -> FormatArg {
        self.flags.format.unwrap_or(FormatArg::Csv)
    }

    pub fn out(&self) -> Option<&Path> {
        self.flags.out.as_deref()
    }

    pub fn method(&self) -> Option<MethodArg> {
        self.flags.method
    }

    pub fn n(&self) -> Result<u32> {
        need(self.flags.n, "n")
    }

    pub fn lambda(&self) -> Result<f64> {
        need(self.flags.lambda, "lambda")
    }

    pub fn target(&self) -> Result<f64> {
        need(self.flags.target, "target")
    }

    pub fn k(&self) -> Result<u32> {
        need(self.flags.k, "k")
    }

    pub fn d0(&self) -> Result<Vec<u64>> {
        self.flags.d0.clone().filter(|v| !v.is_empty()).ok_or_else(|| anyhow!("missing required --d0"))
    }

    pub fn single_d0(&self) -> Result<u64> {
        match self.d0()?.as_slice() {
            [d0] => Ok(*d0),
            _ => bail!("this command takes a single --d0"),
        }
    }

    pub fn a0(&self) -> Result<Vec<u64>> {
        self.flags.a0.clone().filter(|v| !v.is_empty()).ok_or_else(|| anyhow!("missing required --a0"))
    }

    /// `--n-min..=--n-max`, or the single `--n` when no range is given.
    pub fn n_range(&self) -> Result<std::ops::RangeInclusive<u32>> {
        let (lo, hi) = match (self.flags.n_min, self.flags.n_max, self.flags.n) {
            (Some(lo), Some(hi), _) => (lo, hi),
            (None, None, Some(n)) => (n, n),
            _ => bail!("give both --n-min and --n-max (or a single --n)"),
        };
        if lo == 0 || lo > hi {
            bail!("invalid blocklength range {lo}..={hi}");
        }
        Ok(lo..=hi)
    }

    pub fn family(&self) -> Result<ChannelFamily> {
        let family = match self.flags.snr_db {
            Some(db) => ChannelFamily::new(db_to_linear(db), self.flags.k.unwrap_or(1)),
            None => ChannelFamily::new(1.0, self.flags.k.unwrap_or(1)),
        };
        match self.flags.epsilon {
            Some(eps) => Ok(family.with_fixed_epsilon(eps)),
            None if self.flags.snr_db.is_some() && self.flags.k.is_some() => Ok(family),
            None => bail!("give --snr-db and --k, or --epsilon"),
        }
    }

    pub fn epsilon_at(&self, n: u32) -> Result<f64> {
        match self.flags.epsilon {
            Some(eps) => Ok(eps),
            None => {
                let rho = db_to_linear(need(self.flags.snr_db, "snr-db (or --epsilon)")?);
                let channel = ChannelParams::new(rho, need(self.flags.k, "k (or --epsilon)")?, n)?;
                Ok(error_probability(&channel)?)
            }
        }
    }

    pub fn system(&self) -> Result<SystemParams> {
        let n = self.n()?;
        Ok(SystemParams::new(self.lambda()?, n, self.epsilon_at(n)?, self.regime())?)
    }

    /// Like [`RunConfig::system`] but lets an overloaded queue through.
    pub fn system_allow_unstable(&self) -> Result<SystemParams> {
        let n = self.n()?;
        Ok(SystemParams::new_allow_unstable(self.lambda()?, n, self.epsilon_at(n)?, self.regime())?)
    }

    pub fn horizon(&self) -> u64 {
        self.flags.horizon.unwrap_or(100_000_000)
    }

    pub fn warmup(&self) -> u64 {
        self.flags.warmup.unwrap_or(self.horizon() / 10)
    }

    pub fn seed(&self) -> u64 {
        self.flags.seed.unwrap_or(1)
    }

    pub fn replicas(&self) -> u32 {
        self.flags.replicas.unwrap_or(1)
    }

    pub fn stride(&self) -> u32 {
        self.flags.stride.unwrap_or(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines() {
        let m = parse_config("# run\nsnr-db = 5\nregime = \"async\"  # trailing\n\nd0 = 100,500\n").unwrap();
        assert_eq!(m["snr_db"], "5");
        assert_eq!(m["regime"], "async");
        assert_eq!(m["d0"], "100,500");
        assert!(parse_config("novalue").is_err());
        assert!(parse_config("k=1\nk=2").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = std::env::temp_dir().join(format!("shortpkt-cfg-{}", std::process::id()));
        std::fs::write(&dir, "k = 100\nn = 50\nd0 = [100, 200]\nformat = json\n").unwrap();
        let flags = Flags { config: Some(dir.clone()), n: Some(70), ..Flags::default() };
        let merged = flags.merge_config().unwrap();
        std::fs::remove_file(&dir).unwrap();
        assert_eq!(merged.k, Some(100));
        assert_eq!(merged.n, Some(70));
        assert_eq!(merged.d0, Some(vec![100, 200]));
        assert_eq!(merged.format, Some(FormatArg::Json));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = std::env::temp_dir().join(format!("shortpkt-cfg-bad-{}", std::process::id()));
        std::fs::write(&dir, "blocklength = 3\n").unwrap();
        let r = Flags { config: Some(dir.clone()), ..Flags::default() }.merge_config();
        std::fs::remove_file(&dir).unwrap();
        assert!(r.unwrap_err().to_string().contains("blocklength"));
    }
}
