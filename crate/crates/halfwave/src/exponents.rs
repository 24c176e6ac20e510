//! Exponent bookkeeping: the fixed-time loss s(p), the decoupling exponent
//! s-bar(p), and the slow-decay regularity thresholds. Rational inputs are
//! handled with exact rational arithmetic.

use crate::error::{Error, Result};
use serde::Serialize;

/// Exact rational with i64 components, always normalized (den > 0, reduced).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Rational {
    pub num: i64,
    pub den: i64,
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Rational {
        assert!(den != 0, "zero denominator");
        let sign = if den < 0 { -1 } else { 1 };
        let g = gcd(num, den);
        Rational {
            num: sign * num / g,
            den: sign * den / g,
        }
    }

    pub const ZERO: Rational = Rational { num: 0, den: 1 };

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn abs(self) -> Rational {
        Rational::new(self.num.abs(), self.den)
    }

    pub fn is_negative(self) -> bool {
        self.num < 0
    }
}

impl std::ops::Add for Rational {
    type Output = Rational;
    fn add(self, rhs: Rational) -> Rational {
        Rational::new(self.num * rhs.den + rhs.num * self.den, self.den * rhs.den)
    }
}

impl std::ops::Sub for Rational {
    type Output = Rational;
    fn sub(self, rhs: Rational) -> Rational {
        Rational::new(self.num * rhs.den - rhs.num * self.den, self.den * rhs.den)
    }
}

impl std::ops::Mul for Rational {
    type Output = Rational;
    fn mul(self, rhs: Rational) -> Rational {
        Rational::new(self.num * rhs.num, self.den * rhs.den)
    }
}

impl std::fmt::Display for Rational {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Integrability exponent, rational or infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum PExponent {
    Finite(Rational),
    Infinity,
}

impl PExponent {
    pub fn from_ratio(num: i64, den: i64) -> Result<PExponent> {
        let r = Rational::new(num, den);
        if r.num < r.den {
            return Err(Error::Config(format!("exponent {r} is below 1")));
        }
        Ok(PExponent::Finite(r))
    }

    /// 1/p, with 1/inf = 0.
    fn reciprocal(self) -> Rational {
        match self {
            PExponent::Finite(r) => Rational::new(r.den, r.num),
            PExponent::Infinity => Rational::ZERO,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExponentReport {
    pub d: u32,
    /// Fixed-time loss s(p) = ((d-1)/2) |1/2 - 1/p|.
    pub s_p: Rational,
    /// Decoupling exponent: 0 up to p = 2(d+1)/(d-1), then s(p) - 1/p.
    pub s_bar: Rational,
    /// Propagator growth rate 2 s(p).
    pub growth: Rational,
}

/// Computes s(p), s-bar(p) and the growth rate 2 s(p) exactly.
pub fn exponents(d: u32, p: PExponent) -> Result<ExponentReport> {
    if d < 2 {
        return Err(Error::Config(format!("dimension must be >= 2, got {d}")));
    }
    let half = Rational::new(1, 2);
    let inv_p = p.reciprocal();
    let s_p = Rational::new(d as i64 - 1, 2) * (half - inv_p).abs();
    // Critical exponent 2(d+1)/(d-1); p <= p_c iff 1/p >= (d-1)/(2(d+1)).
    let inv_pc = Rational::new(d as i64 - 1, 2 * (d as i64 + 1));
    let below_critical = inv_p.num * inv_pc.den >= inv_pc.num * inv_p.den;
    let s_bar = if below_critical {
        Rational::ZERO
    } else {
        s_p - inv_p
    };
    Ok(ExponentReport {
        d,
        s_p,
        s_bar,
        growth: Rational::new(2, 1) * s_p,
    })
}

/// Floating-point s(p); p = +inf allowed.
pub fn s_of_p(d: u32, p: f64) -> f64 {
    let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
    (d as f64 - 1.0) / 2.0 * (0.5 - inv_p).abs()
}

/// Floating-point s-bar(p).
pub fn s_bar_of_p(d: u32, p: f64) -> f64 {
    let pc = 2.0 * (d as f64 + 1.0) / (d as f64 - 1.0);
    if p <= pc {
        0.0
    } else {
        let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
        s_of_p(d, p) - inv_p
    }
}

/// Regularity threshold for slow-decay data in Sobolev form:
/// alpha = (d-1)/2 (1 - 1/p) + (d+1)/(2p).
pub fn alpha_sobolev(d: u32, p: f64) -> f64 {
    let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
    (d as f64 - 1.0) / 2.0 * (1.0 - inv_p) + (d as f64 + 1.0) / 2.0 * inv_p
}

/// Regularity threshold in adapted form: alpha-tilde = (d-1)/4 + (d+1)/(2p).
pub fn alpha_adapted(d: u32, p: f64) -> f64 {
    let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
    (d as f64 - 1.0) / 4.0 + (d as f64 + 1.0) / 2.0 * inv_p
}
