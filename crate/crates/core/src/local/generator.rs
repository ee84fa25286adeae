//! Exact generator, currents, `h^m`, the gradient condition and the Dirichlet form.

use num_bigint::BigInt;
use num_traits::Zero;

use super::{bernoulli_mean, check_width, LocalFunction, Pattern};
use crate::config::{Configuration, ModelParams};
use crate::constraint::constraint_with;
use crate::error::{Error, Result};
use crate::rational::{q, qi, Q};

/// Which part of the generator (or current) to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Full,
    Symmetric,
    Antisymmetric,
}

/// Exact jump weights: `p(±1) = 1/2 ± drift/2` with `drift = b / n^γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactRates {
    pub m: usize,
    pub drift: Q,
    /// Negative control: adds `η(x−1)η(x)` to the constraint of bond `{x, x+1}`,
    /// a facilitated drive whose stationary law is not a product measure.
    pub corrupted: bool,
}

impl ExactRates {
    pub fn new(m: usize, drift: Q) -> Self {
        Self { m, drift, corrupted: false }
    }

    pub fn symmetric(m: usize) -> Self {
        Self::new(m, Q::zero())
    }

    /// Drift `b / n^γ` taken as the exact value of its binary floating-point representation.
    pub fn from_params(p: &ModelParams) -> Self {
        let drift = Q::from_float(p.drift()).unwrap_or_else(Q::zero);
        Self::new(p.m, drift)
    }

    pub fn corrupted(mut self) -> Self {
        self.corrupted = true;
        self
    }

    /// Weights of a right jump and a left jump for the requested part.
    pub fn weights(&self, part: Part) -> (Q, Q) {
        let half = q(1, 2);
        let d = &self.drift * &half;
        match part {
            Part::Full => (&half + &d, &half - &d),
            Part::Symmetric => (half.clone(), half),
            Part::Antisymmetric => (d.clone(), -d),
        }
    }

    fn constraint(&self, x: i64, occ: impl Fn(i64) -> u8) -> u32 {
        let c = constraint_with(self.m, x, &occ);
        if self.corrupted {
            c + (occ(x - 1) * occ(x)) as u32
        } else {
            c
        }
    }
}

/// Rate of the exchange across `{x, x+1}` in the pattern: direction weight times constraint.
fn bond_rate(rates: &ExactRates, w: &(Q, Q), p: &Pattern, x: i64) -> Q {
    let (a, b) = (p.get(x), p.get(x + 1));
    if a == b {
        return Q::zero();
    }
    let c = rates.constraint(x, |j| p.get(j));
    if c == 0 {
        return Q::zero();
    }
    let dir = if a == 1 { &w.0 } else { &w.1 };
    dir * qi(c as i64)
}

/// `ℒ f`, `𝒮 f` or `𝒜 f` on the window enlarged by `m` on each side.
pub fn apply_generator(f: &LocalFunction, rates: &ExactRates, part: Part) -> Result<LocalFunction> {
    let m = rates.m as i64;
    if f.width() == 0 {
        return Ok(LocalFunction::zero());
    }
    let lo = f.offset() - m;
    let width = f.width() + 2 * rates.m;
    check_width(width, "generator window")?;
    let w = rates.weights(part);
    let first_bond = f.offset() - 1;
    let last_bond = f.offset() + f.width() as i64 - 1;
    LocalFunction::from_fn(lo, width, |p| {
        let base = f.evaluate(|x| p.get(x));
        let mut acc = Q::zero();
        for x in first_bond..=last_bond {
            let r = bond_rate(rates, &w, p, x);
            if r.is_zero() {
                continue;
            }
            let e = p.exchanged(x, x + 1);
            acc += r * (f.evaluate(|y| e.get(y)) - base);
        }
        acc
    })
}

/// Largest window for the stationarity check.
pub const STATIONARITY_MAX_WIDTH: usize = 12;

/// Checks `∫ ℒ 1_σ dν_ρ = 0` exactly for every pattern `σ` on a window of the
/// given width and every density in `rhos`.
///
/// Probability flows between window patterns are accumulated as integer
/// polynomials in ρ on the window enlarged by `m`, then evaluated exactly.
pub fn verify_stationarity(rates: &ExactRates, width: usize, rhos: &[Q]) -> Result<bool> {
    if width == 0 || width > STATIONARITY_MAX_WIDTH {
        return Err(Error::EnumerationLimit { what: "stationarity window", needed: width, cap: STATIONARITY_MAX_WIDTH });
    }
    let m = rates.m;
    let big = width + 2 * m;
    check_width(big, "stationarity window")?;
    let n_sigma = 1usize << width;
    let stride = big + 1;
    // flow[σ][dir][k]: net inflow into σ from right (0) / left (1) jumps,
    // weighted by the constraint, over enlarged patterns with k particles
    let mut flow = vec![0i64; n_sigma * 2 * stride];
    let lo = -(m as i64);
    let win_mask = (1u64 << width) - 1;
    for bits in 0..1u64 << big {
        let p = Pattern::new(bits, lo, big);
        let k = bits.count_ones() as usize;
        let sigma = ((bits >> m) & win_mask) as usize;
        for x in -1..width as i64 {
            let (a, b) = (p.get(x), p.get(x + 1));
            if a == b {
                continue;
            }
            let c = rates.constraint(x, |j| p.get(j)) as i64;
            if c == 0 {
                continue;
            }
            let e = p.exchanged(x, x + 1);
            let target = ((e.bits() >> m) & win_mask) as usize;
            if target == sigma {
                continue;
            }
            let dir = usize::from(a == 0);
            flow[(sigma * 2 + dir) * stride + k] -= c;
            flow[(target * 2 + dir) * stride + k] += c;
        }
    }
    for rho in rhos {
        let (wr, wl) = rates.weights(Part::Full);
        for sigma in 0..n_sigma {
            let mut sums = Vec::with_capacity(stride);
            for k in 0..stride {
                let r = flow[(sigma * 2) * stride + k];
                let l = flow[(sigma * 2 + 1) * stride + k];
                sums.push(&wr * Q::from_integer(BigInt::from(r)) + &wl * Q::from_integer(BigInt::from(l)));
            }
            if !bernoulli_mean(&sums, rho).is_zero() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `h^m(η) = Σ_{k=1}^m Π_{j=−(m−k)}^{k−1} η(j) − Σ_{k=1}^{m−1} Π_{j=−(m−k), j≠0}^{k} η(j)`.
pub fn h_function(m: usize) -> Result<LocalFunction> {
    if m < 2 {
        return Err(Error::InvalidInput(format!("h^m needs m ≥ 2, got {m}")));
    }
    let mi = m as i64;
    let lo = -(mi - 1);
    LocalFunction::from_fn(lo, 2 * m - 1, |p| {
        let prod = |a: i64, b: i64, skip: Option<i64>| (a..=b).filter(|&j| Some(j) != skip).all(|j| p.get(j) == 1);
        let mut v = 0i64;
        for k in 1..=mi {
            v += prod(-(mi - k), k - 1, None) as i64;
        }
        for k in 1..mi {
            v -= prod(-(mi - k), k, Some(0)) as i64;
        }
        qi(v)
    })
}

/// Instantaneous current across `{0, 1}` as a local function on `[−(m−1), m]`.
///
/// Full: `c (p₊ η(0)(1−η(1)) − p₋ η(1)(1−η(0)))`; symmetric part
/// `½ c (η(0) − η(1))`; antisymmetric part `(drift/2) c (η(0) + η(1) − 2η(0)η(1))`.
/// All three satisfy `ℒη(x) = j_{x−1,x} − j_{x,x+1}` for their part of the generator.
pub fn current(rates: &ExactRates, part: Part) -> Result<LocalFunction> {
    let m = rates.m as i64;
    let w = rates.weights(part);
    LocalFunction::from_fn(-(m - 1), 2 * rates.m, |p| {
        let (a, b) = (p.get(0), p.get(1));
        if a == b {
            return Q::zero();
        }
        let c = qi(rates.constraint(0, |j| p.get(j)) as i64);
        if a == 1 {
            &w.0 * c
        } else {
            -(&w.1 * c)
        }
    })
}

/// `j_{x,x+1}` evaluated on a ring configuration.
pub fn current_at(cfg: &Configuration, x: i64, rates: &ExactRates, part: Part) -> Result<Q> {
    let j = current(rates, part)?;
    Ok(j.evaluate(|y| cfg.get(x + y)).clone())
}

/// Rate of any jump across `{0,1}`: `c (p₊ η(0)(1−η(1)) + p₋ η(1)(1−η(0)))`.
/// Its mean is the density of the quadratic variation per unit squared increment.
pub fn jump_activity(rates: &ExactRates) -> Result<LocalFunction> {
    let m = rates.m as i64;
    let w = rates.weights(Part::Full);
    LocalFunction::from_fn(-(m - 1), 2 * rates.m, |p| {
        let (a, b) = (p.get(0), p.get(1));
        if a == b {
            return Q::zero();
        }
        let c = qi(rates.constraint(0, |j| p.get(j)) as i64);
        if a == 1 {
            &w.0 * c
        } else {
            &w.1 * c
        }
    })
}

/// Largest `m` for the exhaustive gradient check.
pub const GRADIENT_MAX_M: usize = 4;

/// `𝒮η(0) − scale·[(τ_{−1}h − h) − (h − τ_1 h)]` as a local function.
pub fn gradient_condition_residual(m: usize, h: &LocalFunction, scale: &Q) -> Result<LocalFunction> {
    let rates = ExactRates::symmetric(m);
    let s_eta = apply_generator(&LocalFunction::occupation(0), &rates, Part::Symmetric)?;
    let left = h.translate(-1).sub(h)?;
    let right = h.sub(&h.translate(1))?;
    let grad = left.sub(&right)?.scale(scale);
    s_eta.sub(&grad)
}

/// Checks that the symmetric dynamics is gradient with the function `h^m`:
/// `𝒮η(x) = ½[(τ_{x−1}h − τ_x h) − (τ_x h − τ_{x+1}h)]` for every pattern.
/// The ½ is the symmetric jump weight `p = 1/2`.
pub fn verify_gradient_condition(m: usize) -> Result<bool> {
    if m > GRADIENT_MAX_M {
        return Err(Error::EnumerationLimit { what: "gradient condition", needed: 4 * m, cap: 4 * GRADIENT_MAX_M });
    }
    let h = h_function(m)?;
    let rates = ExactRates::symmetric(m);
    let js = current(&rates, Part::Symmetric)?;
    let grad = h.sub(&h.translate(1))?.scale(&q(1, 2));
    Ok(js.same_function(&grad)? && gradient_condition_residual(m, &h, &q(1, 2))?.is_zero())
}

/// `𝒟_n(f) = (n²/4) Σ_x E_ρ[c_{x,x+1}(f(η^{x,x+1}) − f(η))²]` over bonds meeting the support.
pub fn dirichlet_form_local(f: &LocalFunction, m: usize, rho: &Q, n: u64) -> Result<Q> {
    if f.width() == 0 {
        return Ok(Q::zero());
    }
    let mi = m as i64;
    let lo = f.offset() - mi;
    let width = f.width() + 2 * m;
    check_width(width, "Dirichlet form window")?;
    let mut total = Q::zero();
    for x in f.offset() - 1..f.offset() + f.width() as i64 {
        let term = LocalFunction::from_fn(lo, width, |p| {
            let c = constraint_with(m, x, |j| p.get(j));
            if c == 0 {
                return Q::zero();
            }
            let e = p.exchanged(x, x + 1);
            let d = f.evaluate(|y| e.get(y)) - f.evaluate(|y| p.get(y));
            qi(c as i64) * &d * &d
        })?;
        total += term.expectation(rho);
    }
    let n2 = Q::from_integer(BigInt::from(n) * BigInt::from(n));
    Ok(total * n2 / qi(4))
}
