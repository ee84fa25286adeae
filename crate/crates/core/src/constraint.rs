//! The kinetic constraint `c^m_{x,x+1}`.
//!
//! An exchange across the bond `{x, x+1}` is allowed once for every window of
//! `m + 1` consecutive sites that contains the bond and whose other `m - 1`
//! sites are all occupied. The value is symmetric in the bond and never
//! depends on `η(x)` or `η(x+1)`.

/// Constraint value at bond `{x, x+1}` for an arbitrary occupation accessor.
#[inline]
pub fn constraint_with<F: Fn(i64) -> u8>(m: usize, x: i64, occ: F) -> u32 {
    let mut c = 0;
    for k in 1..=m as i64 {
        let lo = x - (m as i64 - k);
        let hi = x + k;
        if (lo..=hi)
            .filter(|&j| j != x && j != x + 1)
            .all(|j| occ(j) == 1)
        {
            c += 1;
        }
    }
    c
}

/// Sites (relative to `x`) the constraint at bond `{x, x+1}` depends on.
pub fn support(m: usize) -> (i64, i64) {
    (-(m as i64 - 1), m as i64)
}

/// Constraint on a bit pattern where bit `i` holds site `origin + i`.
#[inline]
pub fn constraint_on_bits(m: usize, bits: u64, origin: i64, x: i64) -> u32 {
    constraint_with(m, x, |j| ((bits >> (j - origin)) & 1) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from(s: &str) -> impl Fn(i64) -> u8 + '_ {
        move |j| s.as_bytes()[j as usize] - b'0'
    }

    #[test]
    fn m2_is_sum_of_outer_neighbours() {
        // sites 0..6, bond {2,3}: c = η(1) + η(4)
        for bits in 0u64..64 {
            let c = constraint_on_bits(2, bits, 0, 2);
            let expect = ((bits >> 1) & 1) + ((bits >> 4) & 1);
            assert_eq!(c as u64, expect);
        }
    }

    #[test]
    fn m3_expansion() {
        // c^3_{x,x+1} = η(x-2)η(x-1) + η(x-1)η(x+2) + η(x+2)η(x+3)
        for bits in 0u64..256 {
            let e = |j: i64| (bits >> j) & 1;
            let x = 3;
            let expect = e(x - 2) * e(x - 1) + e(x - 1) * e(x + 2) + e(x + 2) * e(x + 3);
            assert_eq!(constraint_on_bits(3, bits, 0, x) as u64, expect);
        }
    }

    #[test]
    fn empty_neighbourhood_gives_zero() {
        assert_eq!(constraint_with(2, 2, from("001100")), 0);
        assert_eq!(constraint_with(2, 2, from("011100")), 1);
        assert_eq!(constraint_with(2, 2, from("010010")), 2);
    }

    #[test]
    fn independent_of_bond_sites() {
        for m in 2..=4 {
            for bits in 0u64..(1 << 10) {
                let x = 4;
                let flipped = bits ^ (1 << x) ^ (1 << (x + 1));
                assert_eq!(
                    constraint_on_bits(m, bits, 0, x),
                    constraint_on_bits(m, flipped, 0, x)
                );
            }
        }
    }
}
