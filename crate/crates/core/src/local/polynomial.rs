//! Polynomials in the centered variables `η̄(x) = η(x) − ρ`.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::Zero;

use super::generator::{current, ExactRates, Part};
use super::LocalFunction;
use crate::error::{Error, Result};
use crate::rational::{pow, qi, Q};

/// Sum of monomials `coef · η̄(x_1)⋯η̄(x_k)` keyed by sorted distinct sites.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolynomialDecomposition {
    terms: BTreeMap<Vec<i64>, Q>,
}

impl PolynomialDecomposition {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Vec<i64>, Q)>) -> Self {
        let mut out = Self::new();
        for (sites, c) in terms {
            out.add_term(sites, c);
        }
        out
    }

    pub fn add_term(&mut self, mut sites: Vec<i64>, coef: Q) {
        sites.sort_unstable();
        let entry = self.terms.entry(sites).or_insert_with(Q::zero);
        *entry += coef;
        self.terms.retain(|_, c| !c.is_zero());
    }

    pub fn coefficient(&self, sites: &[i64]) -> Q {
        let mut key = sites.to_vec();
        key.sort_unstable();
        self.terms.get(&key).cloned().unwrap_or_else(Q::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<i64>, &Q)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_degree(&self) -> usize {
        self.terms.keys().map(Vec::len).max().unwrap_or(0)
    }

    /// Homogeneous part of degree `k`.
    pub fn degree_part(&self, k: usize) -> Self {
        Self { terms: self.terms.iter().filter(|(s, _)| s.len() == k).map(|(s, c)| (s.clone(), c.clone())).collect() }
    }

    pub fn without_constant(&self) -> Self {
        Self { terms: self.terms.iter().filter(|(s, _)| !s.is_empty()).map(|(s, c)| (s.clone(), c.clone())).collect() }
    }

    pub fn scale(&self, c: &Q) -> Self {
        Self::from_terms(self.terms.iter().map(|(s, v)| (s.clone(), v * c)))
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (s, c) in &other.terms {
            out.add_term(s.clone(), c.clone());
        }
        out
    }

    pub fn translate(&self, k: i64) -> Self {
        Self::from_terms(self.terms.iter().map(|(s, c)| (s.iter().map(|x| x + k).collect(), c.clone())))
    }

    /// Every term has exactly degree `k`.
    pub fn is_homogeneous(&self, k: usize) -> bool {
        self.terms.keys().all(|s| s.len() == k)
    }

    /// Value at an occupation pattern for a given density.
    pub fn evaluate(&self, occ: impl Fn(i64) -> u8, rho: &Q) -> Q {
        let mut total = Q::zero();
        for (sites, c) in &self.terms {
            let mut v = c.clone();
            for &x in sites {
                v *= qi(occ(x) as i64) - rho;
            }
            total += v;
        }
        total
    }

    fn hull(&self) -> Option<(i64, i64)> {
        let lo = self.terms.keys().flat_map(|s| s.first()).min()?;
        let hi = self.terms.keys().flat_map(|s| s.last()).max()?;
        Some((*lo, *hi))
    }

    /// Tabulates the polynomial at density `rho`.
    pub fn to_local(&self, rho: &Q) -> Result<LocalFunction> {
        match self.hull() {
            None => Ok(LocalFunction::constant(self.coefficient(&[]))),
            Some((lo, hi)) => LocalFunction::from_fn(lo, (hi - lo + 1) as usize, |p| self.evaluate(|x| p.get(x), rho)),
        }
    }
}

impl fmt::Display for PolynomialDecomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (sites, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "({c})")?;
            for x in sites {
                write!(f, "·η̄({x})")?;
            }
        }
        Ok(())
    }
}

/// Largest monomial expanded by [`center_monomial`].
pub const CENTER_MAX_K: usize = 8;

/// `η(x_1)⋯η(x_k) = Σ_{T ⊆ {x_i}} ρ^{k−|T|} Π_{x∈T} η̄(x)`.
pub fn center_monomial(sites: &[i64], rho: &Q) -> Result<PolynomialDecomposition> {
    let k = sites.len();
    if k > CENTER_MAX_K {
        return Err(Error::EnumerationLimit { what: "centered monomial", needed: k, cap: CENTER_MAX_K });
    }
    let mut sorted = sites.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput(format!("duplicate sites in {sites:?}")));
    }
    let mut out = PolynomialDecomposition::new();
    for mask in 0u32..1 << k {
        let subset: Vec<i64> = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| sorted[i]).collect();
        let coef = pow(rho, k - subset.len());
        out.add_term(subset, coef);
    }
    Ok(out)
}

/// Expansion of an arbitrary local function in the `η̄` monomials of its window.
///
/// The table is first turned into `η`-monomial coefficients by Möbius
/// inversion over subsets, then each monomial is recentered.
pub fn centered_expansion(f: &LocalFunction, rho: &Q) -> Result<PolynomialDecomposition> {
    let w = f.width();
    let mut a: Vec<Q> = f.table().to_vec();
    for i in 0..w {
        for s in 0..a.len() {
            if s >> i & 1 == 1 {
                let low = a[s ^ (1 << i)].clone();
                a[s] -= low;
            }
        }
    }
    // shift to centered variables: b_T = Σ_{S ⊇ T} a_S ρ^{|S|−|T|}
    for i in 0..w {
        for s in 0..a.len() {
            if s >> i & 1 == 0 {
                let high = &a[s | (1 << i)] * rho;
                a[s] += high;
            }
        }
    }
    let sites: Vec<i64> = f.sites().collect();
    Ok(PolynomialDecomposition::from_terms(a.into_iter().enumerate().filter(|(_, c)| !c.is_zero()).map(
        |(mask, c)| ((0..w).filter(|i| mask >> i & 1 == 1).map(|i| sites[i]).collect(), c),
    )))
}

/// `Σ_k P_k = n^γ (j^a_{0,1} − E_ρ[j^a_{0,1}])` with the drift `b / n^γ`; the
/// degree-`k` part of the result is `P_k`.
pub fn asym_polynomials(m: usize, rho: &Q, b: &Q) -> Result<PolynomialDecomposition> {
    let j = current(&ExactRates::new(m, b.clone()), Part::Antisymmetric)?;
    Ok(centered_expansion(&j, rho)?.without_constant())
}

/// The local function `g^m = Σ_j d_j η̄(j)` with `P_1 = g^m − τ_1 g^m`, valid only at `ρ = m/(m+1)`.
pub fn degree_one_gradient_g(m: usize, rho: &Q, b: &Q) -> Result<LocalFunction> {
    if *rho != Q::new((m as i64).into(), (m as i64 + 1).into()) {
        return Err(Error::WrongDensity { rho: rho.to_string(), m });
    }
    let p1 = asym_polynomials(m, rho, b)?.degree_part(1);
    let mi = m as i64;
    // a_j = d_j − d_{j−1}, so d_j is the running sum of the coefficients
    let mut d = Vec::new();
    let mut acc = Q::zero();
    for j in -(mi - 1)..=mi {
        acc += p1.coefficient(&[j]);
        d.push((j, acc.clone()));
    }
    if !acc.is_zero() {
        return Err(Error::InvalidInput("degree-one coefficients do not sum to zero".into()));
    }
    let g = PolynomialDecomposition::from_terms(d.into_iter().map(|(j, c)| (vec![j], c)));
    g.to_local(rho)?.extend_to(-(mi - 1), mi - 1)
}
