//! Run configuration: a plain `key = value` file with command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kclg_core::rational::parse_ratio;
use kclg_core::ModelParams;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every option understood by the driver. Unused options are still echoed
/// into the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub m: usize,
    pub m_list: Vec<usize>,
    #[serde(with = "kclg_core::config::ratio_serde")]
    pub rho: Ratio<i64>,
    pub b: f64,
    pub gamma: f64,
    pub n: u32,
    /// Ring size; `None` means the default ring for `n`.
    pub ring: Option<usize>,
    /// Ring size as a multiple of `n` on grid runs.
    pub ring_factor: usize,
    pub t_max: f64,
    pub sampling_dt: f64,
    pub eps: f64,
    /// Block length for the bgp2 term; `None` means `⌊εn⌋`.
    pub ell: Option<usize>,
    pub n_traj: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub ns: Vec<u32>,
    pub times: Vec<f64>,
    /// Extra asymmetry exponents for which the rest term is tracked on the grid.
    pub rest_gammas: Vec<f64>,
    /// Width of the Gaussian test function.
    pub width: f64,
    pub translates: usize,
    /// Negative control: verify with corrupted rates.
    pub corrupted: bool,
    pub y: i64,
    pub z: i64,
    pub configuration: Option<String>,
    pub box_len: Option<usize>,
    pub samples: usize,
    pub path_trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            m: 2,
            m_list: vec![2, 3, 4],
            rho: Ratio::new(2, 3),
            b: 1.0,
            gamma: 1.0,
            n: 64,
            ring: None,
            ring_factor: 8,
            t_max: 1.0,
            sampling_dt: 0.1,
            eps: 0.25,
            ell: None,
            n_traj: 256,
            seed: 1,
            threads: None,
            out: PathBuf::from("kclg-out"),
            ns: vec![32, 64, 128, 256],
            times: vec![0.1, 0.5, 1.0],
            rest_gammas: vec![0.5],
            width: 1.0,
            translates: 4,
            corrupted: false,
            y: 0,
            z: 1,
            configuration: None,
            box_len: None,
            samples: 10_000,
            path_trials: 2_000,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, CliError> {
    match value.trim() {
        "" | "auto" | "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        v => Err(CliError::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

impl RunConfig {
    /// Sets one option; keys accept `-` or `_` as separator.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let k = key.trim().replace('-', "_");
        match k.as_str() {
            "m" => self.m = parse(key, value)?,
            "m_list" => self.m_list = parse_list(key, value)?,
            "rho" => self.rho = parse_ratio(value).map_err(|e| CliError::Config(format!("rho: {e}")))?,
            "b" => self.b = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "L" | "ring" => self.ring = parse_opt(key, value)?,
            "ring_factor" => self.ring_factor = parse(key, value)?,
            "t_max" => self.t_max = parse(key, value)?,
            "sampling_dt" => self.sampling_dt = parse(key, value)?,
            "eps" => self.eps = parse(key, value)?,
            "ell" => self.ell = parse_opt(key, value)?,
            "n_traj" => self.n_traj = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = parse_opt(key, value)?,
            "out" => self.out = PathBuf::from(value.trim()),
            "ns" => self.ns = parse_list(key, value)?,
            "times" => self.times = parse_list(key, value)?,
            "rest_gammas" => self.rest_gammas = parse_list(key, value)?,
            "width" => self.width = parse(key, value)?,
            "translates" => self.translates = parse(key, value)?,
            "corrupted" => self.corrupted = parse_bool(key, value)?,
            "y" => self.y = parse(key, value)?,
            "z" => self.z = parse(key, value)?,
            "configuration" => self.configuration = Some(value.trim().to_string()).filter(|s| !s.is_empty()),
            "box_len" => self.box_len = parse_opt(key, value)?,
            "samples" => self.samples = parse(key, value)?,
            "path_trials" => self.path_trials = parse(key, value)?,
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Model parameters on `ring`, or the default ring for `n` when unset.
    pub fn params(&self) -> Result<ModelParams, CliError> {
        let p = match self.ring {
            Some(l) => ModelParams::new(self.m, self.rho, self.b, self.gamma, self.n, l),
            None => ModelParams::with_default_ring(self.m, self.rho, self.b, self.gamma, self.n),
        };
        p.map_err(|e| CliError::Config(e.to_string()))
    }

    /// Model parameters of a grid point: ring `ring_factor · n`.
    pub fn grid_params(&self, n: u32, gamma: f64) -> Result<ModelParams, CliError> {
        ModelParams::new(self.m, self.rho, self.b, gamma, n, self.ring_factor * n as usize)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks options shared by all commands.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.ring_factor == 0 {
            return bad("ring_factor must be positive".into());
        }
        if !(self.t_max >= 0.0) {
            return bad(format!("t_max = {} must be non-negative", self.t_max));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return bad(format!("eps = {} must lie in (0, 1]", self.eps));
        }
        if self.times.iter().any(|t| !(*t >= 0.0)) {
            return bad("times must be non-negative".into());
        }
        if !(self.width > 0.0) {
            return bad("width must be positive".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut c = RunConfig::default();
        c.apply_text("# grid\nrho = 3/4\nns = 16, 32  # short\nn-traj=32\nL = 128\nthreads = auto\n").unwrap();
        assert_eq!(c.rho, Ratio::new(3, 4));
        assert_eq!(c.ns, vec![16, 32]);
        assert_eq!(c.n_traj, 32);
        assert_eq!(c.ring, Some(128));
        assert_eq!(c.threads, None);
        c.set("rho", "0.5").unwrap();
        assert_eq!(c.rho, Ratio::new(1, 2));
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = RunConfig::default();
        assert!(c.apply_text("nonsense").is_err());
        assert!(c.set("colour", "red").is_err());
        assert!(c.set("n", "-3").is_err());
        assert!(c.set("corrupted", "maybe").is_err());
        c.set("rho", "3/2").unwrap();
        assert!(c.params().is_err());
    }

    #[test]
    fn grid_rings_follow_the_factor() {
        let mut c = RunConfig::default();
        c.set("ring_factor", "4").unwrap();
        assert_eq!(c.grid_params(32, 1.0).unwrap().ring, 128);
        assert_eq!(c.grid_params(64, 1.0).unwrap().ring, 256);
        assert_eq!(c.params().unwrap().ring, 512);
        c.set("L", "256").unwrap();
        assert_eq!(c.params().unwrap().ring, 256);
    }

    #[test]
    fn round_trips_through_json() {
        let c = RunConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&s).unwrap(), c);
    }
}
