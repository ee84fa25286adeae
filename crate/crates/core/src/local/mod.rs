//! Exact local functions on finite windows and the algebra built on them.
//!
//! A [`LocalFunction`] stores one exact rational per occupation pattern of a
//! contiguous window. Bit `i` of a pattern index is the occupation of site
//! `offset + i`.

mod generator;
mod polynomial;
mod thermo;

pub use generator::{
    apply_generator, current, current_at, dirichlet_form_local, gradient_condition_residual, h_function,
    jump_activity, verify_gradient_condition, verify_stationarity, ExactRates, Part, GRADIENT_MAX_M,
    STATIONARITY_MAX_WIDTH,
};
pub use polynomial::{
    asym_polynomials, center_monomial, centered_expansion, degree_one_gradient_g, PolynomialDecomposition,
};
pub use thermo::{ThermoFunctions, UniPoly};

use std::ops::Range;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::rational::{pow, qi, Q};

/// Largest window handled by exhaustive tables.
pub const WIDTH_CAP: usize = 24;

/// Read-only view of one occupation pattern on a window.
#[derive(Debug, Clone, Copy)]
pub struct Pattern {
    bits: u64,
    offset: i64,
    width: usize,
}

impl Pattern {
    pub fn new(bits: u64, offset: i64, width: usize) -> Self {
        Self { bits, offset, width }
    }

    #[inline]
    pub fn get(&self, x: i64) -> u8 {
        let i = x - self.offset;
        assert!(i >= 0 && (i as usize) < self.width, "site {x} outside pattern window");
        ((self.bits >> i) & 1) as u8
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn ones(&self) -> u32 {
        self.bits.count_ones()
    }

    /// Pattern with sites `x` and `y` exchanged.
    pub fn exchanged(&self, x: i64, y: i64) -> Self {
        let (i, j) = (x - self.offset, y - self.offset);
        let (bi, bj) = ((self.bits >> i) & 1, (self.bits >> j) & 1);
        let mut bits = self.bits;
        if bi != bj {
            bits ^= (1 << i) | (1 << j);
        }
        Self { bits, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalFunction {
    offset: i64,
    width: usize,
    table: Vec<Q>,
}

pub(crate) fn check_width(width: usize, what: &'static str) -> Result<()> {
    if width > WIDTH_CAP {
        return Err(Error::EnumerationLimit { what, needed: width, cap: WIDTH_CAP });
    }
    Ok(())
}

impl LocalFunction {
    pub fn new(offset: i64, width: usize, table: Vec<Q>) -> Result<Self> {
        check_width(width, "local function table")?;
        if table.len() != 1 << width {
            return Err(Error::InvalidInput(format!(
                "table has {} entries, window of width {width} needs {}",
                table.len(),
                1u64 << width
            )));
        }
        Ok(Self { offset, width, table })
    }

    pub fn from_fn(offset: i64, width: usize, f: impl Fn(&Pattern) -> Q) -> Result<Self> {
        check_width(width, "local function table")?;
        let table = (0..1u64 << width).map(|bits| f(&Pattern::new(bits, offset, width))).collect();
        Ok(Self { offset, width, table })
    }

    pub fn constant(c: Q) -> Self {
        Self { offset: 0, width: 0, table: vec![c] }
    }

    pub fn zero() -> Self {
        Self::constant(Q::zero())
    }

    /// `η(x)`.
    pub fn occupation(x: i64) -> Self {
        Self { offset: x, width: 1, table: vec![Q::zero(), Q::one()] }
    }

    /// `η(x_1)⋯η(x_k)` on the hull of the sites.
    pub fn product(sites: &[i64]) -> Result<Self> {
        let Some(&lo) = sites.iter().min() else {
            return Ok(Self::constant(Q::one()));
        };
        let hi = *sites.iter().max().unwrap();
        Self::from_fn(lo, (hi - lo + 1) as usize, |p| {
            if sites.iter().all(|&s| p.get(s) == 1) {
                Q::one()
            } else {
                Q::zero()
            }
        })
    }

    /// Indicator of the pattern `bits` on `[offset, offset + width)`.
    pub fn indicator(offset: i64, width: usize, bits: u64) -> Result<Self> {
        Self::from_fn(offset, width, |p| if p.bits() == bits { Q::one() } else { Q::zero() })
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn sites(&self) -> Range<i64> {
        self.offset..self.offset + self.width as i64
    }

    pub fn table(&self) -> &[Q] {
        &self.table
    }

    pub fn value(&self, bits: u64) -> &Q {
        &self.table[bits as usize]
    }

    /// Value at a configuration given by an occupation accessor.
    pub fn evaluate(&self, occ: impl Fn(i64) -> u8) -> &Q {
        let mut bits = 0u64;
        for (i, x) in self.sites().enumerate() {
            bits |= (occ(x) as u64) << i;
        }
        &self.table[bits as usize]
    }

    /// Same function on the larger window `[lo, hi]`.
    pub fn extend_to(&self, lo: i64, hi: i64) -> Result<Self> {
        if self.width > 0 && (lo > self.offset || hi < self.offset + self.width as i64 - 1) {
            return Err(Error::InvalidInput("extension window must contain the support".into()));
        }
        let width = (hi - lo + 1).max(0) as usize;
        Self::from_fn(lo, width, |p| self.evaluate(|x| p.get(x)).clone())
    }

    /// `τ_k f`, i.e. `(τ_k f)(η) = f(τ_k η)`.
    pub fn translate(&self, k: i64) -> Self {
        Self { offset: self.offset + k, ..self.clone() }
    }

    fn hull(&self, other: &Self) -> (i64, i64) {
        match (self.width, other.width) {
            (0, 0) => (0, -1),
            (0, _) => (other.offset, other.offset + other.width as i64 - 1),
            (_, 0) => (self.offset, self.offset + self.width as i64 - 1),
            _ => (
                self.offset.min(other.offset),
                (self.offset + self.width as i64).max(other.offset + other.width as i64) - 1,
            ),
        }
    }

    pub fn zip_with(&self, other: &Self, op: impl Fn(&Q, &Q) -> Q) -> Result<Self> {
        let (lo, hi) = self.hull(other);
        let width = (hi - lo + 1).max(0) as usize;
        Self::from_fn(lo, width, |p| op(self.evaluate(|x| p.get(x)), other.evaluate(|x| p.get(x))))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: &Q) -> Self {
        Self { table: self.table.iter().map(|v| v * c).collect(), ..self.clone() }
    }

    pub fn map(&self, op: impl Fn(&Q) -> Q) -> Self {
        Self { table: self.table.iter().map(op).collect(), ..self.clone() }
    }

    pub fn is_zero(&self) -> bool {
        self.table.iter().all(Zero::is_zero)
    }

    /// Pointwise equality after aligning windows.
    pub fn same_function(&self, other: &Self) -> Result<bool> {
        Ok(self.sub(other)?.is_zero())
    }

    /// Sum of table entries grouped by the number of occupied sites.
    pub fn popcount_sums(&self) -> Vec<Q> {
        let mut sums = vec![Q::zero(); self.width + 1];
        for (bits, v) in self.table.iter().enumerate() {
            if !v.is_zero() {
                sums[bits.count_ones() as usize] += v;
            }
        }
        sums
    }

    /// Exact mean under the Bernoulli product measure of density `rho`.
    pub fn expectation(&self, rho: &Q) -> Q {
        bernoulli_mean(&self.popcount_sums(), rho)
    }
}

/// `Σ_k s_k ρ^k (1−ρ)^{w−k}` with `w = sums.len() − 1`.
pub(crate) fn bernoulli_mean(sums: &[Q], rho: &Q) -> Q {
    let w = sums.len() - 1;
    let hole = qi(1) - rho;
    let mut total = Q::zero();
    for (k, s) in sums.iter().enumerate() {
        if !s.is_zero() {
            total += s * pow(rho, k) * pow(&hole, w - k);
        }
    }
    total
}
