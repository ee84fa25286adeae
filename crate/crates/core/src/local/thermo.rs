//! Thermodynamic functions `D`, `χ`, `F = b D χ` and their derivatives.

use num_traits::Zero;

use crate::rational::{qi, to_f64, Q};

/// Univariate polynomial with exact coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq)]
pub struct UniPoly(pub Vec<Q>);

impl UniPoly {
    pub fn monomial(coef: Q, deg: usize) -> Self {
        let mut c = vec![Q::zero(); deg + 1];
        c[deg] = coef;
        Self(c).trimmed()
    }

    fn trimmed(mut self) -> Self {
        while self.0.last().is_some_and(Zero::is_zero) {
            self.0.pop();
        }
        self
    }

    pub fn eval(&self, x: &Q) -> Q {
        self.0.iter().rev().fold(Q::zero(), |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        Self(self.0.iter().enumerate().skip(1).map(|(k, c)| c * qi(k as i64)).collect()).trimmed()
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.0.is_empty() || other.0.is_empty() {
            return Self(Vec::new());
        }
        let mut out = vec![Q::zero(); self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self(out).trimmed()
    }

    pub fn scale(&self, c: &Q) -> Self {
        Self(self.0.iter().map(|v| v * c).collect()).trimmed()
    }
}

/// `D(ρ) = mρ^{m−1}`, `χ(ρ) = ρ(1−ρ)`, `F(ρ) = b m ρ^m (1−ρ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermoFunctions {
    pub m: usize,
    pub b: Q,
}

impl ThermoFunctions {
    pub fn new(m: usize, b: Q) -> Self {
        Self { m, b }
    }

    pub fn diffusion_poly(&self) -> UniPoly {
        UniPoly::monomial(qi(self.m as i64), self.m - 1)
    }

    pub fn chi_poly(&self) -> UniPoly {
        UniPoly(vec![qi(0), qi(1), qi(-1)])
    }

    pub fn flux_poly(&self) -> UniPoly {
        let m = self.m as i64;
        let mut c = vec![Q::zero(); self.m + 2];
        c[self.m] = &self.b * qi(m);
        c[self.m + 1] = -(&self.b * qi(m));
        UniPoly(c).trimmed()
    }

    pub fn diffusion(&self, rho: &Q) -> Q {
        self.diffusion_poly().eval(rho)
    }

    pub fn chi(&self, rho: &Q) -> Q {
        self.chi_poly().eval(rho)
    }

    pub fn flux(&self, rho: &Q) -> Q {
        self.flux_poly().eval(rho)
    }

    pub fn flux_prime(&self, rho: &Q) -> Q {
        self.flux_poly().derivative().eval(rho)
    }

    pub fn flux_second(&self, rho: &Q) -> Q {
        self.flux_poly().derivative().derivative().eval(rho)
    }

    /// `v_n = n^{2−γ} F′(ρ)`.
    pub fn velocity(&self, rho: &Q, n: u32, gamma: f64) -> f64 {
        (n as f64).powf(2.0 - gamma) * to_f64(&self.flux_prime(rho))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{pow, q};

    #[test]
    fn flux_is_b_d_chi() {
        for m in 2..=5 {
            let t = ThermoFunctions::new(m, q(3, 7));
            let prod = t.diffusion_poly().mul(&t.chi_poly()).scale(&t.b);
            assert_eq!(prod, t.flux_poly());
        }
    }

    #[test]
    fn second_derivative_closed_form() {
        for m in 2..=5usize {
            let b = q(-2, 3);
            let t = ThermoFunctions::new(m, b.clone());
            for rho in [q(1, 4), q(1, 2), q(5, 6)] {
                let mi = qi(m as i64);
                let expect = &b * &mi * &mi * pow(&rho, m - 2) * (&mi - qi(1) - (&mi + qi(1)) * &rho);
                assert_eq!(t.flux_second(&rho), expect);
            }
        }
    }

    #[test]
    fn velocity_vanishes_at_special_density() {
        for m in 2..=5usize {
            let t = ThermoFunctions::new(m, qi(1));
            let rho = q(m as i64, m as i64 + 1);
            assert!(t.flux_prime(&rho).is_zero());
            assert_eq!(t.velocity(&rho, 64, 1.0), 0.0);
        }
        let t = ThermoFunctions::new(2, q(5, 4));
        assert_eq!(t.flux_second(&q(2, 3)), q(-4, 1) * q(5, 4));
    }
}
