//! Ring configurations, model parameters and the good/bad box classification.

use std::fmt;

use num_rational::Ratio;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constraint::constraint_with;
use crate::error::{Error, Result};
use crate::rational::{from_ratio, pow, Q};
use crate::rng::stream_rng;

/// Static parameters of the weakly asymmetric constrained exclusion process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Constraint order (at least 2).
    pub m: usize,
    /// Equilibrium density, strictly inside (0, 1).
    #[serde(with = "ratio_serde")]
    pub rho: Ratio<i64>,
    /// Asymmetry amplitude.
    pub b: f64,
    /// Asymmetry exponent.
    pub gamma: f64,
    /// Scaling parameter.
    pub n: u32,
    /// Ring size `L`, a multiple of `n`.
    pub ring: usize,
}

impl ModelParams {
    pub fn new(m: usize, rho: Ratio<i64>, b: f64, gamma: f64, n: u32, ring: usize) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if m < 2 {
            return bad(format!("m = {m} must be at least 2"));
        }
        if *rho.numer() <= 0 || rho >= Ratio::one() {
            return bad(format!("rho = {rho} must lie in (0, 1)"));
        }
        if n == 0 {
            return bad("n must be at least 1".into());
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return bad(format!("gamma = {gamma} must be positive"));
        }
        if !b.is_finite() || b.abs() > (n as f64).powf(gamma) {
            return bad(format!("|b| = {} exceeds n^gamma", b.abs()));
        }
        if ring < 4 * (m + 1) {
            return bad(format!("ring size {ring} is below 4(m+1) = {}", 4 * (m + 1)));
        }
        if !ring.is_multiple_of(n as usize) {
            return bad(format!("ring size {ring} is not a multiple of n = {n}"));
        }
        Ok(Self { m, rho, b, gamma, n, ring })
    }

    /// Parameters on the default ring: the smallest multiple of `n` that is at
    /// least `max(8n, 4(m+1))`.
    pub fn with_default_ring(m: usize, rho: Ratio<i64>, b: f64, gamma: f64, n: u32) -> Result<Self> {
        let n_us = n.max(1) as usize;
        let min = (8 * n_us).max(4 * (m + 1));
        let ring = min.div_ceil(n_us) * n_us;
        Self::new(m, rho, b, gamma, n, ring)
    }

    pub fn rho_f64(&self) -> f64 {
        self.rho.to_f64().unwrap_or(f64::NAN)
    }

    pub fn rho_exact(&self) -> Q {
        from_ratio(self.rho)
    }

    /// `b / n^gamma`, the drift of a single jump.
    pub fn drift(&self) -> f64 {
        self.b / (self.n as f64).powf(self.gamma)
    }

    pub fn p_plus(&self) -> f64 {
        0.5 + 0.5 * self.drift()
    }

    pub fn p_minus(&self) -> f64 {
        0.5 - 0.5 * self.drift()
    }

    /// Static compressibility ρ(1−ρ).
    pub fn chi(&self) -> f64 {
        let r = self.rho_f64();
        r * (1.0 - r)
    }

    /// Diffusion coefficient mρ^{m−1}.
    pub fn diffusion(&self) -> f64 {
        self.m as f64 * self.rho_f64().powi(self.m as i32 - 1)
    }

    /// Frame velocity n^{2−γ} F′(ρ).
    pub fn frame_velocity(&self) -> f64 {
        let m = self.m as f64;
        let r = self.rho_f64();
        let f_prime = self.b * m * r.powi(self.m as i32 - 1) * (m - (m + 1.0) * r);
        (self.n as f64).powf(2.0 - self.gamma) * f_prime
    }
}

/// Serde adapter writing a ratio as `"p/q"`.
pub mod ratio_serde {
    use num_rational::Ratio;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Ratio<i64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio<i64>, D::Error> {
        let s = String::deserialize(d)?;
        crate::rational::parse_ratio(&s).map_err(serde::de::Error::custom)
    }
}

/// Occupation variables on a periodic ring.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    occ: Vec<u8>,
    count: usize,
}

impl Configuration {
    pub fn empty(len: usize) -> Self {
        Self { occ: vec![0; len], count: 0 }
    }

    pub fn full(len: usize) -> Self {
        Self { occ: vec![1; len], count: len }
    }

    pub fn from_occupation(occ: Vec<u8>) -> Self {
        assert!(occ.iter().all(|&v| v <= 1), "occupations must be 0 or 1");
        let count = occ.iter().map(|&v| v as usize).sum();
        Self { occ, count }
    }

    /// Configuration from the low `len` bits of `bits` (bit `i` is site `i`).
    pub fn from_bits(bits: u64, len: usize) -> Self {
        Self::from_occupation((0..len).map(|i| ((bits >> i) & 1) as u8).collect())
    }

    pub fn occupied_at(len: usize, sites: &[i64]) -> Self {
        let mut c = Self::empty(len);
        for &s in sites {
            c.set(s, 1);
        }
        c
    }

    pub fn len(&self) -> usize {
        self.occ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occ.is_empty()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn wrap(&self, x: i64) -> usize {
        x.rem_euclid(self.occ.len() as i64) as usize
    }

    #[inline]
    pub fn get(&self, x: i64) -> u8 {
        self.occ[self.wrap(x)]
    }

    #[inline]
    pub fn at(&self, x: usize) -> u8 {
        self.occ[x]
    }

    pub fn set(&mut self, x: i64, v: u8) {
        assert!(v <= 1);
        let i = self.wrap(x);
        self.count = self.count + v as usize - self.occ[i] as usize;
        self.occ[i] = v;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.occ
    }

    /// Swaps the values at `x` and `y` in place (count is unchanged).
    #[inline]
    pub fn exchange_in_place(&mut self, x: i64, y: i64) {
        let (i, j) = (self.wrap(x), self.wrap(y));
        self.occ.swap(i, j);
    }

    /// `η^{x,y}`.
    pub fn exchange(&self, x: i64, y: i64) -> Self {
        debug_assert_ne!(self.wrap(x), self.wrap(y), "exchange needs distinct sites");
        let mut out = self.clone();
        out.exchange_in_place(x, y);
        out
    }

    /// Centered variable η(x) − ρ.
    pub fn centered(&self, x: i64, rho: f64) -> f64 {
        self.get(x) as f64 - rho
    }

    /// `τ_x η`, i.e. `(τ_x η)(y) = η(x + y)`.
    pub fn translate(&self, x: i64) -> Self {
        let len = self.len() as i64;
        Self::from_occupation((0..len).map(|y| self.get(x + y)).collect())
    }

    /// Constraint `c^m_{x,x+1}` on this ring.
    #[inline]
    pub fn constraint(&self, x: i64, m: usize) -> u32 {
        constraint_with(m, x, |j| self.get(j))
    }

    /// Exchange activity of the bond `{x, x+1}`: positive iff a jump is possible.
    #[inline]
    pub fn bond_active(&self, x: i64, m: usize) -> bool {
        self.get(x) != self.get(x + 1) && self.constraint(x, m) > 0
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &v in &self.occ {
            f.write_str(if v == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Configuration({self})")
    }
}

impl std::str::FromStr for Configuration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let occ = s
            .trim()
            .bytes()
            .map(|c| match c {
                b'0' | b'.' => Ok(0),
                b'1' | b'#' => Ok(1),
                _ => Err(Error::InvalidInput(format!("bad site character {:?}", c as char))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Self::from_occupation(occ))
    }
}

/// The box `Λ_x^ℓ = {x+1, …, x+ℓ}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub anchor: i64,
    pub length: usize,
}

impl BoxSpec {
    pub fn new(anchor: i64, length: usize) -> Self {
        Self { anchor, length }
    }

    pub fn first(&self) -> i64 {
        self.anchor + 1
    }

    pub fn last(&self) -> i64 {
        self.anchor + self.length as i64
    }

    pub fn contains(&self, x: i64) -> bool {
        x >= self.first() && x <= self.last()
    }

    fn validate(&self, ring: usize, m: usize) -> Result<()> {
        if self.length < m || self.length == 0 || self.length >= ring {
            return Err(Error::InvalidBox { length: self.length, m, ring });
        }
        Ok(())
    }
}

/// Each site independently occupied with probability `rho`; deterministic in `seed`.
pub fn sample_equilibrium(params: &ModelParams, seed: u64) -> Configuration {
    let mut rng = stream_rng(seed, 0);
    sample_equilibrium_with(params.rho, params.ring, &mut rng)
}

pub fn sample_equilibrium_with<R: Rng + ?Sized>(rho: Ratio<i64>, len: usize, rng: &mut R) -> Configuration {
    let num = *rho.numer() as u64;
    let den = *rho.denom() as u64;
    let occ = (0..len).map(|_| u8::from(rng.random_range(0..den) < num)).collect();
    Configuration::from_occupation(occ)
}

/// True iff no bond of the ring can fire.
pub fn is_blocked(cfg: &Configuration, m: usize) -> bool {
    (0..cfg.len() as i64).all(|x| !cfg.bond_active(x, m))
}

/// Start and internal hole (if any) of a mobile cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MobileCluster {
    /// Leftmost particle of the group.
    pub start: i64,
    /// Site of the single hole inside the group, when the `m` particles are not contiguous.
    pub hole: Option<i64>,
}

/// Leftmost mobile cluster fully inside `bx`: `m` particles spanning at most
/// `m + 1` sites, starting with a particle. Positions are unwrapped (box coordinates).
pub fn locate_cluster(cfg: &Configuration, bx: BoxSpec, m: usize) -> Option<MobileCluster> {
    let last = bx.last();
    for s in bx.first()..=last {
        if cfg.get(s) == 0 {
            continue;
        }
        let run_end = s + m as i64 - 1;
        if run_end > last {
            return None;
        }
        if (s..=run_end).all(|j| cfg.get(j) == 1) {
            return Some(MobileCluster { start: s, hole: None });
        }
        let win_end = s + m as i64;
        if win_end <= last {
            let holes: Vec<i64> = (s..=win_end).filter(|&j| cfg.get(j) == 0).collect();
            if holes.len() == 1 {
                return Some(MobileCluster { start: s, hole: Some(holes[0]) });
            }
        }
    }
    None
}

/// Good-box event `𝒢_ℓ(x)`: the box holds a mobile cluster.
pub fn is_good_box(cfg: &Configuration, bx: BoxSpec, m: usize) -> Result<bool> {
    bx.validate(cfg.len(), m)?;
    Ok(locate_cluster(cfg, bx, m).is_some())
}

/// `(1 − ρ^m)^{⌊ℓ/m⌋}`.
pub fn bad_box_bound(rho: &Q, ell: usize, m: usize) -> Q {
    let base = Q::one() - pow(rho, m);
    pow(&base, ell / m)
}

/// Largest box handled by the transfer-matrix count.
pub const BAD_BOX_MAX_LEN: usize = 120;

/// Number of bad patterns on `ell` sites, indexed by particle count.
pub fn bad_pattern_counts(ell: usize, m: usize) -> Result<Vec<u128>> {
    if ell > BAD_BOX_MAX_LEN {
        return Err(Error::EnumerationLimit { what: "bad-box transfer matrix", needed: ell, cap: BAD_BOX_MAX_LEN });
    }
    if m > 16 {
        return Err(Error::InvalidInput(format!("constraint order {m} too large")));
    }
    let mask = (1usize << m) - 1;
    // state: last m sites (bit 0 newest); counts per particle number
    let mut dp: Vec<Vec<u128>> = vec![vec![0; ell + 1]; 1 << m];
    dp[0][0] = 1;
    for i in 0..ell {
        let mut next: Vec<Vec<u128>> = vec![vec![0; ell + 1]; 1 << m];
        for (hist, row) in dp.iter().enumerate() {
            if row.iter().all(|&c| c == 0) {
                continue;
            }
            for bit in 0..2usize {
                let seen_after = i + 1;
                let new_hist = ((hist << 1) | bit) & mask;
                let run = seen_after >= m && new_hist == mask;
                let window = i >= m && (hist.count_ones() as usize + bit) >= m;
                if run || window {
                    continue;
                }
                for (k, &c) in row.iter().enumerate() {
                    if c != 0 {
                        next[new_hist][k + bit] += c;
                    }
                }
            }
        }
        dp = next;
    }
    let mut out = vec![0u128; ell + 1];
    for row in dp {
        for (k, c) in row.into_iter().enumerate() {
            out[k] += c;
        }
    }
    Ok(out)
}

/// `ν_ρ(ℰ ∖ 𝒢_ℓ)` computed exactly.
pub fn exact_bad_box_probability(rho: &Q, ell: usize, m: usize) -> Result<Q> {
    if ell < m {
        return Err(Error::InvalidBox { length: ell, m, ring: 0 });
    }
    let counts = bad_pattern_counts(ell, m)?;
    let one_minus = Q::one() - rho;
    let mut total = Q::from_integer(0.into());
    for (k, c) in counts.into_iter().enumerate() {
        if c != 0 {
            total += Q::from_integer(c.into()) * pow(rho, k) * pow(&one_minus, ell - k);
        }
    }
    Ok(total)
}
