//! Binary floating point with a configurable mantissa width and an unbounded
//! exponent. Field operations and square root are correctly rounded (round
//! half to even); `ln`, `exp` and `powf` carry guard bits and are accurate to
//! a few ulps.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// `(-1)^neg * mant * 2^exp`, with `mant` holding exactly `bits` bits unless zero.
#[derive(Clone)]
pub struct BigFloat {
    neg: bool,
    mant: BigUint,
    exp: i64,
    bits: u32,
}

impl BigFloat {
    pub fn zero(bits: u32) -> Self {
        assert!(bits >= 2, "mantissa needs at least two bits");
        Self {
            neg: false,
            mant: BigUint::zero(),
            exp: 0,
            bits,
        }
    }

    pub fn one(bits: u32) -> Self {
        Self::from_parts(false, BigUint::one(), 0, bits)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.neg && !self.is_zero()
    }

    fn from_parts(neg: bool, mant: BigUint, exp: i64, bits: u32) -> Self {
        if mant.is_zero() {
            return Self::zero(bits);
        }
        let len = mant.bits() as i64;
        let want = bits as i64;
        if len <= want {
            let shift = (want - len) as usize;
            return Self {
                neg,
                mant: mant << shift,
                exp: exp - shift as i64,
                bits,
            };
        }
        let drop = (len - want) as usize;
        let mut kept = &mant >> drop;
        let half = BigUint::one() << (drop - 1);
        let rem = &mant - (&kept << drop);
        let round_up = match rem.cmp(&half) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => kept.is_odd(),
        };
        let mut e = exp + drop as i64;
        if round_up {
            kept += 1u32;
            if kept.bits() as i64 > want {
                kept >>= 1;
                e += 1;
            }
        }
        Self {
            neg,
            mant: kept,
            exp: e,
            bits,
        }
    }

    pub fn from_f64(bits: u32, v: f64) -> Self {
        assert!(v.is_finite(), "cannot represent {v} as BigFloat");
        if v == 0.0 {
            return Self::zero(bits);
        }
        let raw = v.to_bits();
        let neg = raw >> 63 == 1;
        let biased = ((raw >> 52) & 0x7ff) as i64;
        let frac = raw & ((1u64 << 52) - 1);
        let (m, e) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), biased - 1075)
        };
        Self::from_parts(neg, BigUint::from(m), e, bits)
    }

    pub fn from_bigint(bits: u32, v: &BigInt) -> Self {
        let (sign, mag) = v.clone().into_parts();
        Self::from_parts(sign == Sign::Minus, mag, 0, bits)
    }

    /// Correctly rounded value of an exact rational.
    pub fn from_rational(bits: u32, r: &BigRational) -> Self {
        let n = Self::from_bigint(bits + 64, r.numer());
        let d = Self::from_bigint(bits + 64, r.denom());
        let (neg, mant, exp) = div_parts(&n, &d, bits);
        Self::from_parts(neg, mant, exp, bits)
    }

    pub fn with_bits(&self, bits: u32) -> Self {
        Self::from_parts(self.neg, self.mant.clone(), self.exp, bits)
    }

    /// Base-2 exponent of the leading bit, i.e. floor(log2 |x|). Zero maps to `i64::MIN`.
    pub fn ilog2(&self) -> i64 {
        if self.is_zero() {
            i64::MIN
        } else {
            self.exp + self.mant.bits() as i64 - 1
        }
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        // Keep 64 leading bits with a sticky bit so the u64 -> f64 rounding is exact-ish.
        let len = self.mant.bits() as i64;
        let (top, e) = if len > 64 {
            let drop = (len - 64) as usize;
            let mut t = (&self.mant >> drop).to_u64().unwrap();
            if !(&self.mant & ((BigUint::one() << drop) - 1u32)).is_zero() {
                t |= 1;
            }
            (t, self.exp + drop as i64)
        } else {
            (self.mant.to_u64().unwrap(), self.exp)
        };
        let mag = ldexp(top as f64, e);
        if self.neg {
            -mag
        } else {
            mag
        }
    }

    /// Natural logarithm, accurate to binary64 only. Works far outside the
    /// binary64 exponent range.
    pub fn ln_f64(&self) -> f64 {
        assert!(!self.neg && !self.is_zero(), "ln of non-positive BigFloat");
        let e = self.ilog2();
        let scaled = Self {
            neg: false,
            mant: self.mant.clone(),
            exp: self.exp - e,
            bits: self.bits,
        };
        scaled.to_f64().ln() + e as f64 * std::f64::consts::LN_2
    }

    pub fn abs(&self) -> Self {
        let mut out = self.clone();
        out.neg = false;
        out
    }

    pub fn sqrt(&self) -> Self {
        assert!(!self.is_negative(), "sqrt of negative BigFloat");
        if self.is_zero() {
            return self.clone();
        }
        let target = 2 * (self.bits as i64 + 2);
        let mut k = (target - self.mant.bits() as i64).max(0);
        if (self.exp - k) % 2 != 0 {
            k += 1;
        }
        let t = &self.mant << (k as usize);
        let mut root = t.sqrt();
        if &root * &root != t {
            root = (root << 1usize) | BigUint::one();
            return Self::from_parts(false, root, (self.exp - k) / 2 - 1, self.bits);
        }
        Self::from_parts(false, root, (self.exp - k) / 2, self.bits)
    }

    /// Integer power by repeated squaring (each step rounded).
    pub fn powi(&self, mut n: u64) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one(self.bits);
        while n > 0 {
            if n & 1 == 1 {
                acc = &acc * &base;
            }
            n >>= 1;
            if n > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    fn signed(&self) -> BigInt {
        BigInt::from_biguint(if self.neg { Sign::Minus } else { Sign::Plus }, self.mant.clone())
    }

    /// Exact multiplication by 2^k.
    pub fn scale2(&self, k: i64) -> Self {
        let mut out = self.clone();
        if !out.is_zero() {
            out.exp += k;
        }
        out
    }

    /// ln 2 to `bits` bits, from 2·atanh(1/3).
    pub fn ln2(bits: u32) -> Self {
        let w = bits + 32;
        let third = &BigFloat::one(w) / &BigFloat::from_f64(w, 3.0);
        atanh_series(&third).scale2(1).with_bits(bits)
    }

    pub fn ln(&self) -> Self {
        assert!(!self.neg && !self.is_zero(), "ln of non-positive BigFloat");
        let w = self.bits + 32;
        let mut e = self.ilog2();
        let mut m = self.with_bits(w).scale2(-e);
        if m.to_f64() > std::f64::consts::SQRT_2 {
            m = m.scale2(-1);
            e += 1;
        }
        let one = BigFloat::one(w);
        let t = &(&m - &one) / &(&m + &one);
        let mut out = atanh_series(&t).scale2(1);
        if e != 0 {
            out = &out + &(&BigFloat::ln2(w) * &BigFloat::from_bigint(w, &BigInt::from(e)));
        }
        out.with_bits(self.bits)
    }

    pub fn exp(&self) -> Self {
        let bits = self.bits;
        if self.is_zero() {
            return BigFloat::one(bits);
        }
        let w = bits + 48;
        let ln2 = BigFloat::ln2(w);
        let x = self.with_bits(w);
        let kf = (x.to_f64() / std::f64::consts::LN_2).round();
        assert!(kf.abs() < 9.0e15, "exp argument out of range");
        let k = kf as i64;
        let r = &x - &(&ln2 * &BigFloat::from_bigint(w, &BigInt::from(k)));
        let halvings = 24;
        let r = r.scale2(-halvings);
        let one = BigFloat::one(w);
        let mut sum = one.clone();
        let mut term = one;
        let mut n = 1u64;
        loop {
            term = &(&term * &r) / &BigFloat::from_f64(w, n as f64);
            if term.is_zero() || term.ilog2() < -(w as i64) - 2 {
                break;
            }
            sum = &sum + &term;
            n += 1;
        }
        for _ in 0..halvings {
            sum = &sum * &sum;
        }
        sum.scale2(k).with_bits(bits)
    }

    pub fn powf(&self, y: &Self) -> Self {
        (&y.with_bits(self.bits + 32) * &self.with_bits(self.bits + 32).ln())
            .exp()
            .with_bits(self.bits)
    }
}

/// atanh(t) = t + t³/3 + t⁵/5 + … for |t| ≤ 1/3, at the precision of `t`.
fn atanh_series(t: &BigFloat) -> BigFloat {
    let w = t.bits;
    let t2 = t * t;
    let mut pow = t.clone();
    let mut sum = t.clone();
    let mut k = 3u64;
    loop {
        pow = &pow * &t2;
        let term = &pow / &BigFloat::from_f64(w, k as f64);
        if term.is_zero() || term.ilog2() < sum.ilog2() - w as i64 - 2 {
            break;
        }
        sum = &sum + &term;
        k += 2;
    }
    sum
}

fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
        if x.is_infinite() {
            return x;
        }
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
        if x == 0.0 {
            return x;
        }
    }
    x * 2f64.powi(e as i32)
}

fn div_parts(a: &BigFloat, b: &BigFloat, bits: u32) -> (bool, BigUint, i64) {
    assert!(!b.is_zero(), "BigFloat division by zero");
    if a.is_zero() {
        return (false, BigUint::zero(), 0);
    }
    let shift = (bits as i64 + 3 + b.mant.bits() as i64 - a.mant.bits() as i64).max(0) as usize;
    let (mut q, r) = (&a.mant << shift).div_rem(&b.mant);
    q <<= 1usize;
    if !r.is_zero() {
        q |= BigUint::one();
    }
    (a.neg != b.neg, q, a.exp - b.exp - shift as i64 - 1)
}

fn add_signed(a: &BigFloat, b: &BigFloat, negate_b: bool) -> BigFloat {
    let bits = a.bits.max(b.bits);
    if b.is_zero() {
        return a.with_bits(bits);
    }
    if a.is_zero() {
        let mut out = b.with_bits(bits);
        out.neg = out.neg != negate_b;
        return out;
    }
    let (hi, lo, lo_neg, hi_is_a) = if a.ilog2() >= b.ilog2() {
        (a, b, b.neg != negate_b, true)
    } else {
        (b, a, a.neg, false)
    };
    let hi_neg = if hi_is_a { a.neg } else { b.neg != negate_b };
    let gap = hi.ilog2() - lo.ilog2();
    if gap > bits as i64 + 4 {
        // The smaller operand only affects the sticky bit.
        let sticky_exp = hi.exp - 2;
        let mut m = BigInt::from_biguint(
            if hi_neg { Sign::Minus } else { Sign::Plus },
            hi.mant.clone() << 2usize,
        );
        if lo_neg == hi_neg {
            m += if hi_neg { -1 } else { 1 };
        } else {
            m -= if hi_neg { -1 } else { 1 };
        }
        let (s, mag) = m.into_parts();
        return BigFloat::from_parts(s == Sign::Minus, mag, sticky_exp, bits);
    }
    let e = hi.exp.min(lo.exp);
    let align = |x: &BigFloat, neg: bool| {
        let m = x.mant.clone() << ((x.exp - e) as usize);
        BigInt::from_biguint(if neg { Sign::Minus } else { Sign::Plus }, m)
    };
    let sum = align(hi, hi_neg) + align(lo, lo_neg);
    let (s, mag) = sum.into_parts();
    BigFloat::from_parts(s == Sign::Minus, mag, e, bits)
}

impl<'a> Add<&'a BigFloat> for &'a BigFloat {
    type Output = BigFloat;
    fn add(self, rhs: &BigFloat) -> BigFloat {
        add_signed(self, rhs, false)
    }
}

impl<'a> Sub<&'a BigFloat> for &'a BigFloat {
    type Output = BigFloat;
    fn sub(self, rhs: &BigFloat) -> BigFloat {
        add_signed(self, rhs, true)
    }
}

impl<'a> Mul<&'a BigFloat> for &'a BigFloat {
    type Output = BigFloat;
    fn mul(self, rhs: &BigFloat) -> BigFloat {
        let bits = self.bits.max(rhs.bits);
        BigFloat::from_parts(
            self.neg != rhs.neg,
            &self.mant * &rhs.mant,
            self.exp + rhs.exp,
            bits,
        )
    }
}

impl<'a> Div<&'a BigFloat> for &'a BigFloat {
    type Output = BigFloat;
    fn div(self, rhs: &BigFloat) -> BigFloat {
        let bits = self.bits.max(rhs.bits);
        let (neg, mant, exp) = div_parts(self, rhs, bits);
        BigFloat::from_parts(neg, mant, exp, bits)
    }
}

macro_rules! owned_op {
    ($tr:ident, $f:ident) => {
        impl $tr for BigFloat {
            type Output = BigFloat;
            fn $f(self, rhs: BigFloat) -> BigFloat {
                (&self).$f(&rhs)
            }
        }
    };
}
owned_op!(Add, add);
owned_op!(Sub, sub);
owned_op!(Mul, mul);
owned_op!(Div, div);

impl Neg for BigFloat {
    type Output = BigFloat;
    fn neg(mut self) -> BigFloat {
        if !self.is_zero() {
            self.neg = !self.neg;
        }
        self
    }
}

impl PartialEq for BigFloat {
    fn eq(&self, other: &Self) -> bool {
        self.partial_cmp(other) == Some(Ordering::Equal)
    }
}

impl PartialOrd for BigFloat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let d = add_signed(self, other, true);
        Some(if d.is_zero() {
            Ordering::Equal
        } else if d.neg {
            Ordering::Less
        } else {
            Ordering::Greater
        })
    }
}

impl fmt::Debug for BigFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let l10 = self.abs().ln_f64().abs() / std::f64::consts::LN_10;
        if l10 < 300.0 {
            write!(f, "{:e}", self.to_f64())
        } else {
            let dec = self.abs().ln_f64() / std::f64::consts::LN_10;
            let e = dec.floor();
            let m = 10f64.powf(dec - e);
            write!(f, "{}{m}e{e}", if self.neg { "-" } else { "" })
        }
    }
}

impl fmt::Display for BigFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Exact value as a rational (every BigFloat is a dyadic rational).
impl From<&BigFloat> for BigRational {
    fn from(x: &BigFloat) -> BigRational {
        let m = x.signed();
        if x.exp >= 0 {
            BigRational::from_integer(m << (x.exp as usize))
        } else {
            BigRational::new(m, BigInt::one() << ((-x.exp) as usize))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use num_traits::Signed;

    fn bf(v: f64) -> BigFloat {
        BigFloat::from_f64(128, v)
    }

    #[test]
    fn roundtrip_f64() {
        for v in [1.0, -2.5, 1e-300, 3.7e300, 0.1, 5e-324, -0.0] {
            assert_eq!(bf(v).to_f64(), v);
        }
    }

    #[test]
    fn exponent_range_beyond_binary64() {
        let tiny = bf(1e-300).powi(10);
        assert_eq!(tiny.to_f64(), 0.0);
        assert!((tiny.ln_f64() - 10.0 * 1e-300f64.ln()).abs() < 1e-9);
        let back = tiny.sqrt().sqrt();
        let expect = 10.0 * 1e-300f64.ln() / 4.0;
        assert!((back.ln_f64() - expect).abs() < 1e-9);
    }

    #[test]
    fn one_third_is_correctly_rounded() {
        let third = &BigFloat::one(200) / &BigFloat::from_f64(200, 3.0);
        let exact = BigRational::new(1.into(), 3.into());
        let got: BigRational = (&third).into();
        let err = (got - &exact).abs() / exact;
        // half an ulp at 200 bits
        let ulp = BigRational::new(1.into(), BigInt::one() << 200usize);
        assert!(err <= ulp);
        assert_eq!(
            BigFloat::from_rational(200, &BigRational::new(1.into(), 3.into())),
            third
        );
    }

    #[test]
    fn sqrt_two_squares_back() {
        let two = BigFloat::from_f64(256, 2.0);
        let r = two.sqrt();
        let back = &r * &r;
        let err = (&back - &two).abs();
        assert!(err.ilog2() <= -250, "{err:?}");
        assert!((r.to_f64() - 2f64.sqrt()).abs() < 1e-16);
    }

    #[test]
    fn catastrophic_cancellation_is_exact() {
        let big = BigFloat::from_f64(128, 2f64.powi(100));
        let one = BigFloat::one(128);
        let s = &(&big + &one) - &big;
        assert_eq!(s.to_f64(), 1.0);
    }

    #[test]
    fn negligible_addend_rounds_to_nearest() {
        let one = BigFloat::one(64);
        let tiny = BigFloat::from_f64(64, 2f64.powi(-200));
        assert_eq!(&one + &tiny, one);
        assert_eq!(&one - &tiny, one);
    }

    #[test]
    fn ln_exp_constants() {
        let bits = 256;
        let ln2 = BigFloat::ln2(bits);
        assert!((ln2.to_f64() - std::f64::consts::LN_2).abs() < 1e-16);
        // e^{ln 2} = 2 to nearly full precision
        let two = ln2.exp();
        let err = (&two - &BigFloat::from_f64(bits, 2.0)).abs();
        assert!(err.ilog2() < -245, "{err:?}");
        let x = BigFloat::from_f64(bits, 123.456);
        let back = x.ln().exp();
        let rel = &(&back - &x).abs() / &x;
        assert!(rel.ilog2() < -240, "{rel:?}");
        let tiny = BigFloat::from_f64(bits, 1e-200).powi(7);
        assert!((tiny.ln().to_f64() - 7.0 * 1e-200f64.ln()).abs() < 1e-10);
        let half = BigFloat::from_f64(bits, 0.5);
        let p = BigFloat::from_f64(bits, 9.0).powf(&half);
        assert!(((&p - &BigFloat::from_f64(bits, 3.0)).abs()).ilog2() < -240);
    }

    proptest! {
        #[test]
        fn exp_ln_match_binary64(a in -50f64..50.0) {
            let e = bf(a).exp().to_f64();
            prop_assert!((e - a.exp()).abs() <= 4e-16 * a.exp());
            let b = a.abs() + 1e-3;
            prop_assert!((bf(b).ln().to_f64() - b.ln()).abs() <= 4e-16 * b.ln().abs().max(1.0));
        }

        #[test]
        fn field_ops_match_binary64(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            prop_assume!(b.abs() > 1e-3);
            let (x, y) = (bf(a), bf(b));
            prop_assert_eq!((&x + &y).to_f64(), a + b);
            prop_assert_eq!((&x - &y).to_f64(), a - b);
            prop_assert_eq!((&x * &y).to_f64(), a * b);
            prop_assert!(((&x / &y).to_f64() - a / b).abs() <= 1e-15 * (a / b).abs());
            prop_assert_eq!(x < y, a < b);
        }

        #[test]
        fn sqrt_matches_binary64(a in 0f64..1e12) {
            prop_assert!((bf(a).sqrt().to_f64() - a.sqrt()).abs() <= 1e-15 * a.sqrt());
        }
    }
}
