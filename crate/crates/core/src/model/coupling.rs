//! Pseudo-random memory couplings `F_i(k, l) = (√2 (k + Δk_i)³ + √7 (l + Δl_i)⁵) mod 1`.
//!
//! `√7 (l + Δl)⁵` reaches ~10⁷ for the largest systems, where an `f64` keeps
//! only about nine fractional digits. Both products are therefore formed in
//! double-double arithmetic and reduced modulo one before rounding.

use serde::{Deserialize, Serialize};

/// The three coupling families of the memory sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CouplingFamily {
    /// Hops between the unprimed and the primed sector (`f_1`).
    Cross,
    /// Hops inside the unprimed sector (`f_2`).
    Unprimed,
    /// Hops inside the primed sector (`f_3`).
    Primed,
}

impl CouplingFamily {
    pub const ALL: [CouplingFamily; 3] = [Self::Cross, Self::Unprimed, Self::Primed];

    /// 1-based family index `i`.
    pub fn index(self) -> u32 {
        match self {
            Self::Cross => 1,
            Self::Unprimed => 2,
            Self::Primed => 3,
        }
    }

    pub fn from_index(i: u32) -> Option<Self> {
        match i {
            1 => Some(Self::Cross),
            2 => Some(Self::Unprimed),
            3 => Some(Self::Primed),
            _ => None,
        }
    }

    /// `(Δk_i, Δl_i)` for `K` modes per sector.
    pub fn offsets(self, k_modes: u64) -> (u64, u64) {
        match self {
            Self::Cross => (1, k_modes + 1),
            Self::Unprimed => (1, 1),
            Self::Primed => (k_modes + 1, k_modes + 1),
        }
    }
}

/// `F_i(k, l)` in `[0, 1)`.
pub fn coupling_big_f(family: CouplingFamily, k: u64, l: u64, k_modes: u64) -> f64 {
    let (dk, dl) = family.offsets(k_modes);
    let a = (k + dk).pow(3);
    let b = (l + dl).pow(5);
    frac_of_sum(frac_times_sqrt(a, 2.0), frac_times_sqrt(b, 7.0))
}

/// `f_i(k, l)`: `F - 1` below one half, `F` otherwise.
pub fn coupling_f(family: CouplingFamily, k: u64, l: u64, k_modes: u64) -> f64 {
    fold_coupling(coupling_big_f(family, k, l, k_modes))
}

#[inline]
pub fn fold_coupling(big_f: f64) -> f64 {
    if big_f < 0.5 {
        big_f - 1.0
    } else {
        big_f
    }
}

/// Unevaluated double-double `hi + lo`.
#[derive(Debug, Clone, Copy)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> DoubleDouble {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    DoubleDouble { hi: s, lo: err }
}

/// `√s` as a double-double via one Newton correction of the rounded root.
fn sqrt_dd(s: f64) -> DoubleDouble {
    let hi = s.sqrt();
    let p = hi * hi;
    let p_err = hi.mul_add(hi, -p);
    let lo = ((s - p) - p_err) / (2.0 * hi);
    DoubleDouble { hi, lo }
}

/// Fractional part of `m·√s`, as a double-double in `[0, 1)` up to tiny overshoot.
fn frac_times_sqrt(m: u64, s: f64) -> DoubleDouble {
    debug_assert!(m < 1 << 53);
    let root = sqrt_dd(s);
    let mf = m as f64;
    let p = mf * root.hi;
    let p_err = mf.mul_add(root.hi, -p);
    let tail = mf * root.lo;
    // p - floor(p) is exact for any p >= 0
    let r = p - p.floor();
    let head = two_sum(r, p_err + tail);
    DoubleDouble {
        hi: head.hi,
        lo: head.lo,
    }
}

fn frac_of_sum(x: DoubleDouble, y: DoubleDouble) -> f64 {
    let s = two_sum(x.hi, y.hi);
    let lo = s.lo + x.lo + y.lo;
    let t = two_sum(s.hi, lo);
    let mut whole = t.hi.floor();
    // the low word may push the value across an integer boundary
    let below = t.hi == whole && t.lo < 0.0;
    if below {
        whole -= 1.0;
    }
    let frac = (t.hi - whole) + t.lo;
    if frac >= 1.0 && below {
        1.0 - f64::EPSILON / 2.0
    } else if frac >= 1.0 {
        frac - 1.0
    } else if frac < 0.0 {
        frac + 1.0
    } else {
        frac
    }
}

#[cfg(test)]
mod tests {
    use num_bigint::BigUint;

    use super::*;

    const DIGITS: u32 = 40;

    /// floor(frac(m·√s) · 10^DIGITS) via exact integer square roots.
    fn frac_digits(m: u64, s: u64) -> BigUint {
        let scale = BigUint::from(10u32).pow(DIGITS);
        let radicand = BigUint::from(s) * BigUint::from(m) * BigUint::from(m) * &scale * &scale;
        radicand.sqrt() % scale
    }

    fn oracle_big_f(family: CouplingFamily, k: u64, l: u64, k_modes: u64) -> f64 {
        let (dk, dl) = family.offsets(k_modes);
        let scale = BigUint::from(10u32).pow(DIGITS);
        let sum = (frac_digits((k + dk).pow(3), 2) + frac_digits((l + dl).pow(5), 7)) % &scale;
        // keep 30 digits, then to f64
        let head = sum / BigUint::from(10u32).pow(DIGITS - 30);
        head.to_string().parse::<f64>().unwrap() / 1e30
    }

    #[test]
    fn matches_exact_integer_oracle() {
        for k_modes in [2u64, 5, 8, 9] {
            for family in CouplingFamily::ALL {
                for k in 1..=2 * k_modes {
                    for l in 1..=2 * k_modes {
                        let got = coupling_big_f(family, k, l, k_modes);
                        let want = oracle_big_f(family, k, l, k_modes);
                        assert!(
                            (got - want).abs() <= 2e-16,
                            "family {family:?} k={k} l={l} K={k_modes}: {got} vs {want}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn reference_points() {
        // F_1(1,1), K = 2: (√2·2³ + √7·4⁵) mod 1
        let want = oracle_big_f(CouplingFamily::Cross, 1, 1, 2);
        assert_eq!(coupling_big_f(CouplingFamily::Cross, 1, 1, 2), want);
        // F_2(1,1): (√2·8 + √7·32) mod 1
        let f2 = coupling_big_f(CouplingFamily::Unprimed, 1, 1, 2);
        let naive = (8.0 * 2f64.sqrt() + 32.0 * 7f64.sqrt()).fract();
        assert!((f2 - naive).abs() < 1e-13);
        assert!((f2 - oracle_big_f(CouplingFamily::Unprimed, 1, 1, 2)).abs() <= 2e-16);
    }

    #[test]
    fn naive_double_evaluation_loses_digits() {
        // the largest argument at K = 9 leaves only ~1e-9 accuracy in f64
        let b = 28u64.pow(5) as f64;
        let naive = (b * 7f64.sqrt()).fract();
        let exact = oracle_big_f(CouplingFamily::Unprimed, 0, 27, 9) - {
            // remove the √2 contribution (k + Δk = 1)
            2f64.sqrt().fract()
        };
        let exact = exact.rem_euclid(1.0);
        assert!((naive - exact).abs() > 1e-12);
    }

    #[test]
    fn values_lie_in_unit_interval_and_fold() {
        for family in CouplingFamily::ALL {
            for k in 1..=16 {
                for l in 1..=16 {
                    let big = coupling_big_f(family, k, l, 8);
                    assert!((0.0..1.0).contains(&big));
                    let f = coupling_f(family, k, l, 8);
                    assert!((0.5..1.0).contains(&f.abs()), "{f}");
                }
            }
        }
    }

    #[test]
    fn folding_branches() {
        assert!((fold_coupling(0.3) + 0.7).abs() < 1e-15);
        assert_eq!(fold_coupling(0.5), 0.5);
        assert_eq!(fold_coupling(0.75), 0.75);
    }

    #[test]
    fn carries_across_integer_boundaries() {
        let x = DoubleDouble { hi: 0.75, lo: 0.0 };
        let y = DoubleDouble {
            hi: 0.25,
            lo: -1e-20,
        };
        let f = frac_of_sum(x, y);
        assert!((0.0..1.0).contains(&f));
        assert!(f > 0.99);
    }
}
