//! q-series special functions and the scalar constants of the q-pushTASEP
//! law of large numbers.
//!
//! Every routine has a generic core over [`Real`] (binary64 or `BigFloat`)
//! and a thin `f64` front end that picks the backend from a
//! [`PrecisionContext`]. Exact-rational variants exist wherever the quantity
//! is a finite rational expression.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::bigfloat::BigFloat;
use crate::error::{domain, Error, Result};
use crate::precision::{Arithmetic, Certified, PrecisionContext};
use crate::real::{CompensatedSum, Real};

/// Number of factors in a q-Pochhammer symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Length {
    Finite(usize),
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQParams")]
pub struct QParams {
    q: f64,
    u: f64,
}

#[derive(Deserialize)]
struct RawQParams {
    q: f64,
    u: f64,
}

impl TryFrom<RawQParams> for QParams {
    type Error = Error;
    fn try_from(raw: RawQParams) -> Result<Self> {
        QParams::new(raw.q, raw.u)
    }
}

impl QParams {
    pub fn new(q: f64, u: f64) -> Result<Self> {
        check_unit("q", q)?;
        check_unit("u", u)?;
        Ok(Self { q, u })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn u(&self) -> f64 {
        self.u
    }
}

pub(crate) fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        domain(format!("{name} = {v} must lie strictly inside (0, 1)"))
    }
}

/// Bound on |log ∏_{i≥0}(1 − y_i)| when |y_i| ≤ a q^i and a < 1.
fn product_tail_log_bound(a: f64, q: f64) -> f64 {
    a / ((1.0 - q) * (1.0 - a))
}

pub(crate) fn big(ctx: &PrecisionContext, v: f64) -> BigFloat {
    BigFloat::from_f64(ctx.precision_bits(), v)
}

pub(crate) fn to_rational(v: f64) -> Result<BigRational> {
    BigRational::from_float(v).ok_or_else(|| Error::Domain(format!("{v} is not finite")))
}

pub(crate) fn rational_to_f64(r: &BigRational) -> f64 {
    BigFloat::from_rational(53, r).to_f64()
}

// ---------------------------------------------------------------------------
// q-Pochhammer

/// (z;q)_n by direct multiplication. For `Length::Infinite` the product
/// stops once the omitted factors change it by a relative amount
/// `tail_bound ≤ eps`.
pub fn q_pochhammer_with<R: Real>(z: &R, q: &R, n: Length, eps: f64) -> Result<Certified<R>> {
    let one = q.lift(1.0);
    match n {
        Length::Finite(n) => {
            let mut acc = one.clone();
            let mut zq = z.clone();
            for _ in 0..n {
                acc = acc * (one.clone() - zq.clone());
                zq = zq * q.clone();
            }
            Ok(Certified::exact(acc, n))
        }
        Length::Infinite => {
            let qf = q.to_f64();
            check_unit("q", qf)?;
            let mut acc = one.clone();
            let mut zq = z.clone();
            let mut i = 0;
            loop {
                let a = zq.abs().to_f64();
                if a < eps {
                    let bound = product_tail_log_bound(a, qf).exp_m1();
                    if bound <= eps {
                        return Ok(Certified {
                            value: acc,
                            tail_bound: bound,
                            terms: i,
                        });
                    }
                }
                acc = acc * (one.clone() - zq.clone());
                zq = zq * q.clone();
                i += 1;
            }
        }
    }
}

/// Sign and log-magnitude of (z;q)_n in binary64. `None` for the log means
/// the product is exactly zero.
struct LogProduct {
    ln_abs: Option<f64>,
    negative: bool,
    tail_bound: f64,
    terms: usize,
}

fn ln_pochhammer_f64(z: f64, q: f64, n: Length, eps: f64) -> Result<LogProduct> {
    if let Length::Infinite = n {
        check_unit("q", q)?;
    }
    let mut sum = CompensatedSum::new(0.0);
    let mut negative = false;
    let mut zq = z;
    let mut i = 0;
    let mut tail_bound = 0.0;
    loop {
        match n {
            Length::Finite(n) if i == n => break,
            Length::Infinite if zq.abs() < eps => {
                let bound = product_tail_log_bound(zq.abs(), q).exp_m1();
                if bound <= eps {
                    tail_bound = bound;
                    break;
                }
            }
            _ => {}
        }
        let f = 1.0 - zq;
        if f == 0.0 {
            return Ok(LogProduct {
                ln_abs: None,
                negative: false,
                tail_bound: 0.0,
                terms: i + 1,
            });
        }
        if f < 0.0 {
            negative = !negative;
        }
        sum.add(if zq.abs() < 0.5 { (-zq).ln_1p() } else { f.abs().ln() });
        zq *= q;
        i += 1;
    }
    Ok(LogProduct {
        ln_abs: Some(sum.value()),
        negative,
        tail_bound,
        terms: i,
    })
}

fn exp_checked(ln: f64, what: &'static str) -> Result<f64> {
    let v = ln.exp();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Overflow(what))
    }
}

/// ∏_{i<n}(1 − z q^i) exactly.
pub fn q_pochhammer_exact(z: &BigRational, q: &BigRational, n: usize) -> BigRational {
    let mut acc = BigRational::one();
    let mut zq = z.clone();
    for _ in 0..n {
        acc *= BigRational::one() - &zq;
        zq *= q;
    }
    acc
}

/// (z;q)_n in the arithmetic selected by `ctx`. Exact-rational mode reads
/// `z` and `q` as the dyadic rationals they are; infinite products fall back
/// to extended precision there.
pub fn q_pochhammer(z: f64, q: f64, n: Length, ctx: &PrecisionContext) -> Result<Certified<f64>> {
    let eps = ctx.truncation_eps();
    match (ctx.mode(), n) {
        (Arithmetic::Double, _) => {
            let lp = ln_pochhammer_f64(z, q, n, eps)?;
            let mag = match lp.ln_abs {
                None => 0.0,
                Some(l) => exp_checked(l, "q_pochhammer")?,
            };
            Ok(Certified {
                value: if lp.negative { -mag } else { mag },
                tail_bound: lp.tail_bound,
                terms: lp.terms,
            })
        }
        (Arithmetic::ExactRational, Length::Finite(n)) => {
            let v = q_pochhammer_exact(&to_rational(z)?, &to_rational(q)?, n);
            Ok(Certified::exact(rational_to_f64(&v), n))
        }
        _ => {
            let c = q_pochhammer_with(&big(ctx, z), &big(ctx, q), n, eps)?;
            let v = c.value.to_f64();
            if !v.is_finite() {
                return Err(Error::Overflow("q_pochhammer"));
            }
            Ok(c.map(|_| v))
        }
    }
}

// ---------------------------------------------------------------------------
// q-binomial

fn check_nk(n: usize, k: usize) -> Result<()> {
    if k > n {
        domain(format!("q-binomial needs k <= n, got n = {n}, k = {k}"))
    } else {
        Ok(())
    }
}

/// binom(n, k)_q as ∏_{j=1}^{k} (1 − q^{n−k+j}) / (1 − q^j).
pub fn q_binomial_with<R: Real>(n: usize, k: usize, q: &R) -> Result<R> {
    check_nk(n, k)?;
    let k = k.min(n - k);
    let one = q.lift(1.0);
    let mut acc = one.clone();
    let mut top = q.powi((n - k + 1) as u64);
    let mut bot = q.clone();
    for _ in 0..k {
        acc = acc * (one.clone() - top.clone()) / (one.clone() - bot.clone());
        top = top * q.clone();
        bot = bot * q.clone();
    }
    Ok(acc)
}

pub fn q_binomial_exact(n: usize, k: usize, q: &BigRational) -> Result<BigRational> {
    check_nk(n, k)?;
    if q.abs().is_one() {
        return domain("exact q-binomial needs q != ±1");
    }
    let k = k.min(n - k);
    let mut acc = BigRational::one();
    let mut top = num_traits::pow(q.clone(), n - k + 1);
    let mut bot = q.clone();
    for _ in 0..k {
        acc *= BigRational::one() - &top;
        acc /= BigRational::one() - &bot;
        top *= q;
        bot *= q;
    }
    Ok(acc)
}

/// Coefficients (constant term first) of the Gaussian polynomial
/// binom(n, k)_q, obtained by power-series division of
/// ∏(1 − q^{n−k+j}) by ∏(1 − q^j).
pub fn q_binomial_poly(n: usize, k: usize) -> Result<Vec<BigInt>> {
    check_nk(n, k)?;
    let k = k.min(n - k);
    let deg = k * (n - k);
    let mut num = vec![BigInt::one()];
    let mut den = vec![BigInt::one()];
    for j in 1..=k {
        num = mul_one_minus_power(&num, n - k + j);
        den = mul_one_minus_power(&den, j);
    }
    let mut quot = vec![BigInt::zero(); deg + 1];
    let mut rem = num;
    for d in 0..=deg {
        let c = rem[d].clone();
        if c.is_zero() {
            continue;
        }
        for (e, b) in den.iter().enumerate() {
            if d + e < rem.len() {
                rem[d + e] -= &c * b;
            }
        }
        quot[d] = c;
    }
    debug_assert!(rem.iter().all(Zero::is_zero));
    Ok(quot)
}

fn mul_one_minus_power(p: &[BigInt], m: usize) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); p.len() + m];
    for (i, c) in p.iter().enumerate() {
        out[i] += c;
        out[i + m] -= c;
    }
    out
}

fn ln_q_binomial_f64(n: usize, k: usize, q: f64) -> f64 {
    let k = k.min(n - k);
    let mut sum = CompensatedSum::new(0.0);
    for j in 1..=k {
        sum.add((-q.powi((n - k + j) as i32)).ln_1p());
        sum.add(-(-q.powi(j as i32)).ln_1p());
    }
    sum.value()
}

/// binom(n, k)_q for q ∈ (0, 1).
pub fn q_binomial(n: usize, k: usize, q: f64, ctx: &PrecisionContext) -> Result<f64> {
    check_nk(n, k)?;
    check_unit("q", q)?;
    match ctx.mode() {
        Arithmetic::Double => Ok(ln_q_binomial_f64(n, k, q).exp()),
        Arithmetic::ExactRational => Ok(rational_to_f64(&q_binomial_exact(n, k, &to_rational(q)?)?)),
        Arithmetic::ExtendedFloat => Ok(q_binomial_with(n, k, &big(ctx, q))?.to_f64()),
    }
}

// ---------------------------------------------------------------------------
// q-gamma

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        domain(format!("{name} = {x} must be positive"))
    }
}

/// log Γ_q(x) = log (q;q)_∞ − log (q^x;q)_∞ + (1 − x) log(1 − q). The tail
/// bound is absolute on the logarithm.
pub fn ln_q_gamma_with<R: Real>(x: &R, q: &R, eps: f64) -> Result<Certified<R>> {
    check_positive("x", x.to_f64())?;
    let one = q.lift(1.0);
    let a = q_pochhammer_with(q, q, Length::Infinite, eps)?;
    let qx = (x.clone() * q.ln()).exp();
    let b = q_pochhammer_with(&qx, q, Length::Infinite, eps)?;
    let value = a.value.ln() - b.value.ln() + (one.clone() - x.clone()) * (one - q.clone()).ln();
    Ok(Certified {
        value,
        tail_bound: a.tail_bound.ln_1p() + b.tail_bound.ln_1p(),
        terms: a.terms.max(b.terms),
    })
}

pub fn ln_q_gamma(x: f64, q: f64, ctx: &PrecisionContext) -> Result<Certified<f64>> {
    check_positive("x", x)?;
    check_unit("q", q)?;
    let eps = ctx.truncation_eps();
    match ctx.mode() {
        Arithmetic::Double => {
            let a = ln_pochhammer_f64(q, q, Length::Infinite, eps)?;
            let b = ln_pochhammer_f64(q.powf(x), q, Length::Infinite, eps)?;
            let (la, lb) = (a.ln_abs.unwrap_or(f64::NEG_INFINITY), b.ln_abs.unwrap_or(f64::NEG_INFINITY));
            Ok(Certified {
                value: la - lb + (1.0 - x) * (-q).ln_1p(),
                tail_bound: a.tail_bound.ln_1p() + b.tail_bound.ln_1p(),
                terms: a.terms.max(b.terms),
            })
        }
        _ => Ok(ln_q_gamma_with(&big(ctx, x), &big(ctx, q), eps)?.map(|v| v.to_f64())),
    }
}

/// Γ_q(x); `Error::Overflow` when the value exceeds binary64 range.
pub fn q_gamma(x: f64, q: f64, ctx: &PrecisionContext) -> Result<Certified<f64>> {
    let l = ln_q_gamma(x, q, ctx)?;
    let v = exp_checked(l.value, "q_gamma")?;
    Ok(Certified {
        value: v,
        tail_bound: l.tail_bound.exp_m1(),
        terms: l.terms,
    })
}

// ---------------------------------------------------------------------------
// q-digamma and friends

/// Σ_{i≥0} r q^i / (1 − r q^i) for 0 < r < 1, stopped once the remaining
/// terms are certified below `eps`.
fn lambert_sum<R: Real>(r0: &R, q: &R, eps: f64) -> Certified<R> {
    let one = q.lift(1.0);
    let qf = q.to_f64();
    let mut sum = CompensatedSum::new(q.lift(0.0));
    let mut r = r0.clone();
    let mut i = 0;
    loop {
        let rf = r.to_f64();
        let tail = rf / ((1.0 - qf) * (1.0 - rf));
        if tail < eps {
            return Certified {
                value: sum.value(),
                tail_bound: tail,
                terms: i,
            };
        }
        sum.add(r.clone() / (one.clone() - r.clone()));
        r = r * q.clone();
        i += 1;
    }
}

/// ψ_q(x) = −log(1 − q) + log q · Σ_{i≥0} q^{i+x} / (1 − q^{i+x}).
pub fn q_digamma_with<R: Real>(x: &R, q: &R, eps: f64) -> Result<Certified<R>> {
    check_positive("x", x.to_f64())?;
    check_unit("q", q.to_f64())?;
    let one = q.lift(1.0);
    let lq = q.ln();
    let lqf = lq.to_f64().abs();
    let r0 = (x.clone() * lq.clone()).exp();
    let s = lambert_sum(&r0, q, eps / lqf);
    Ok(Certified {
        value: -(one - q.clone()).ln() + lq * s.value,
        tail_bound: s.tail_bound * lqf,
        terms: s.terms,
    })
}

/// ψ_q''(x) = (log q)³ Σ_{i≥0} r_i (1 + r_i) / (1 − r_i)³ with r_i = q^{i+x}.
pub fn q_digamma_second_with<R: Real>(x: &R, q: &R, eps: f64) -> Result<Certified<R>> {
    check_positive("x", x.to_f64())?;
    let qf = q.to_f64();
    check_unit("q", qf)?;
    let one = q.lift(1.0);
    let lq = q.ln();
    let l3 = lq.to_f64().abs().powi(3);
    let mut sum = CompensatedSum::new(q.lift(0.0));
    let mut r = (x.clone() * lq.clone()).exp();
    let mut i = 0;
    loop {
        let rf = r.to_f64();
        let tail = l3 * 2.0 * rf / ((1.0 - qf) * (1.0 - rf).powi(3));
        if tail < eps {
            return Ok(Certified {
                value: lq.clone() * lq.clone() * lq * sum.value(),
                tail_bound: tail,
                terms: i,
            });
        }
        let d = one.clone() - r.clone();
        sum.add(r.clone() * (one.clone() + r.clone()) / (d.clone() * d.clone() * d));
        r = r * q.clone();
        i += 1;
    }
}

/// f_q = 2(ψ_q(log_q u) + log(1 − q)) / log q + 1.
pub fn f_q_with<R: Real>(q: &R, u: &R, eps: f64) -> Result<Certified<R>> {
    check_unit("q", q.to_f64())?;
    check_unit("u", u.to_f64())?;
    let one = q.lift(1.0);
    let two = q.lift(2.0);
    let lq = q.ln();
    let lqf = lq.to_f64().abs();
    let x = u.ln() / lq.clone();
    let psi = q_digamma_with(&x, q, eps * lqf / 2.0)?;
    Ok(Certified {
        value: two * (psi.value + (one.clone() - q.clone()).ln()) / lq + one,
        tail_bound: 2.0 * psi.tail_bound / lqf,
        terms: psi.terms,
    })
}

/// f_q as 1 + Σ_{i≥0} 2 u q^i / (1 − u q^i).
pub fn f_q_direct_with<R: Real>(q: &R, u: &R, eps: f64) -> Result<Certified<R>> {
    check_unit("q", q.to_f64())?;
    check_unit("u", u.to_f64())?;
    let s = lambert_sum(u, q, eps / 2.0);
    Ok(Certified {
        value: q.lift(1.0) + q.lift(2.0) * s.value,
        tail_bound: 2.0 * s.tail_bound,
        terms: s.terms,
    })
}

/// |Σ_{i≥0} 2uq^i/(1 − uq^i) − (f_q − 1)| with f_q taken through ψ_q.
pub fn verify_lln_identity_with<R: Real>(q: &R, u: &R, eps: f64) -> Result<f64> {
    let one = q.lift(1.0);
    let series = f_q_direct_with(q, u, eps)?.value - one.clone();
    let via_psi = f_q_with(q, u, eps)?.value - one;
    Ok((series - via_psi).abs().to_f64())
}

macro_rules! dispatch {
    ($ctx:expr, $f:ident, $($arg:expr),+) => {{
        let ctx: &PrecisionContext = $ctx;
        let eps = ctx.truncation_eps();
        match ctx.mode() {
            Arithmetic::Double => $f($(&$arg),+, eps),
            _ => $f($(&big(ctx, $arg)),+, eps).map(|c| c.map(|v| v.to_f64())),
        }
    }};
}

pub fn q_digamma(x: f64, q: f64, ctx: &PrecisionContext) -> Result<Certified<f64>> {
    dispatch!(ctx, q_digamma_with, x, q)
}

pub fn q_digamma_second(x: f64, q: f64, ctx: &PrecisionContext) -> Result<Certified<f64>> {
    dispatch!(ctx, q_digamma_second_with, x, q)
}

pub fn f_q(q: f64, u: f64, ctx: &PrecisionContext) -> Result<Certified<f64>> {
    dispatch!(ctx, f_q_with, q, u)
}

pub fn f_q_direct(q: f64, u: f64, ctx: &PrecisionContext) -> Result<Certified<f64>> {
    dispatch!(ctx, f_q_direct_with, q, u)
}

pub fn verify_lln_identity(q: f64, u: f64, ctx: &PrecisionContext) -> Result<f64> {
    let eps = ctx.truncation_eps();
    match ctx.mode() {
        Arithmetic::Double => verify_lln_identity_with(&q, &u, eps),
        _ => verify_lln_identity_with(&big(ctx, q), &big(ctx, u), eps),
    }
}

/// (1 + √q)² / (1 − q).
pub fn mu_q(q: f64) -> Result<f64> {
    check_unit("q", q)?;
    Ok((1.0 + q.sqrt()).powi(2) / (1.0 - q))
}

/// Binary entropy in nats; NaN outside [0, 1].
pub fn entropy(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    let h = |t: f64| if t == 0.0 { 0.0 } else { -t * t.ln() };
    h(p) + h(1.0 - p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dbl() -> PrecisionContext {
        PrecisionContext::double()
    }

    fn ext() -> PrecisionContext {
        PrecisionContext::default()
    }

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn pochhammer_examples() {
        for ctx in [dbl(), ext(), PrecisionContext::exact()] {
            assert_eq!(q_pochhammer(0.7, 0.5, Length::Finite(0), &ctx).unwrap().value, 1.0);
            let v = q_pochhammer(0.5, 0.5, Length::Finite(2), &ctx).unwrap().value;
            assert!((v - 0.375).abs() < 1e-15, "{v}");
            let one = q_pochhammer(0.0, 0.5, Length::Infinite, &ctx).unwrap();
            assert_eq!(one.value, 1.0);
        }
        assert_eq!(q_pochhammer_exact(&rat(1, 2), &rat(1, 2), 2), rat(3, 8));
    }

    #[test]
    fn pochhammer_signs_and_zeros() {
        // (3;1/2)_3 = (1-3)(1-3/2)(1-3/4) = 0.25
        let v = q_pochhammer(3.0, 0.5, Length::Finite(3), &dbl()).unwrap().value;
        assert!((v - 0.25).abs() < 1e-15);
        let v = q_pochhammer(3.0, 0.5, Length::Finite(2), &dbl()).unwrap().value;
        assert!((v - 1.0).abs() < 1e-15);
        let v = q_pochhammer(3.0, 0.5, Length::Finite(1), &dbl()).unwrap().value;
        assert!((v + 2.0).abs() < 1e-15);
        let z = q_pochhammer(2.0, 0.5, Length::Infinite, &dbl()).unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn infinite_pochhammer_needs_q_in_unit_interval() {
        for q in [0.0, 1.0, 1.5, -0.5] {
            assert!(q_pochhammer(0.5, q, Length::Infinite, &dbl()).is_err());
        }
        assert!(q_pochhammer(0.5, 2.0, Length::Finite(3), &dbl()).is_ok());
    }

    #[test]
    fn euler_pentagonal_oracle() {
        // (q;q)_∞ = Σ_k (-1)^k q^{k(3k-1)/2} over all integers k
        for &q in &[0.1, 0.5, 0.8] {
            let mut s = 1.0f64;
            for k in 1..200i32 {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let e1 = (k * (3 * k - 1) / 2) as f64;
                let e2 = (k * (3 * k + 1) / 2) as f64;
                s += sign * (f64::powf(q, e1) + f64::powf(q, e2));
            }
            for ctx in [dbl(), ext()] {
                let p = q_pochhammer(q, q, Length::Infinite, &ctx).unwrap();
                assert!(rel(p.value, s) < 1e-13, "q={q}: {} vs {s}", p.value);
                assert!(p.tail_bound <= ctx.truncation_eps());
            }
        }
    }

    #[test]
    fn extended_certificate_meets_eps() {
        let ctx = ext();
        let p = q_pochhammer_with(&big(&ctx, 0.9), &big(&ctx, 0.95), Length::Infinite, 1e-30).unwrap();
        assert!(p.tail_bound <= 1e-30 && p.tail_bound > 0.0);
    }

    #[test]
    fn q_binomial_examples() {
        for ctx in [dbl(), ext(), PrecisionContext::exact()] {
            for n in 0..8 {
                assert!((q_binomial(n, 0, 0.3, &ctx).unwrap() - 1.0).abs() < 1e-15);
            }
            assert!((q_binomial(2, 1, 0.5, &ctx).unwrap() - 1.5).abs() < 1e-15);
        }
        assert!(q_binomial(2, 3, 0.5, &dbl()).is_err());
        assert_eq!(q_binomial_exact(2, 1, &rat(1, 2)).unwrap(), rat(3, 2));
    }

    #[test]
    fn q_binomial_symmetric() {
        for n in 0..=20 {
            for k in 0..=n {
                let a = q_binomial(n, k, 0.6, &dbl()).unwrap();
                let b = q_binomial(n, n - k, 0.6, &dbl()).unwrap();
                assert_eq!(a, b);
                assert_eq!(
                    q_binomial_exact(n, k, &rat(2, 7)).unwrap(),
                    q_binomial_exact(n, n - k, &rat(2, 7)).unwrap()
                );
            }
        }
    }

    #[test]
    fn gaussian_polynomial_counts_lattice_paths() {
        // at q = 1 the Gaussian polynomial is the ordinary binomial
        let c: BigInt = q_binomial_poly(10, 4).unwrap().iter().sum();
        assert_eq!(c, BigInt::from(210));
        assert_eq!(
            q_binomial_poly(4, 2).unwrap(),
            [1, 1, 2, 1, 1].map(BigInt::from).to_vec()
        );
    }

    fn eval_poly(c: &[BigInt], q: &BigRational) -> BigRational {
        c.iter()
            .rev()
            .fold(BigRational::zero(), |acc, a| acc * q + BigRational::from(a.clone()))
    }

    #[test]
    fn pascal_recurrence_exact() {
        let q = rat(1, 3);
        for n in 1..=30usize {
            for k in 1..n {
                let lhs = q_binomial_exact(n, k, &q).unwrap();
                let rhs = q_binomial_exact(n - 1, k - 1, &q).unwrap()
                    + num_traits::pow(q.clone(), k) * q_binomial_exact(n - 1, k, &q).unwrap();
                assert_eq!(lhs, rhs, "n={n} k={k}");
            }
        }
        for n in 1..=16usize {
            for k in 1..n {
                let p = q_binomial_poly(n, k).unwrap();
                let a = q_binomial_poly(n - 1, k - 1).unwrap();
                let b = q_binomial_poly(n - 1, k).unwrap();
                let mut rhs = vec![BigInt::zero(); p.len()];
                for (i, c) in a.iter().enumerate() {
                    rhs[i] += c;
                }
                for (i, c) in b.iter().enumerate() {
                    rhs[i + k] += c;
                }
                assert_eq!(p, rhs);
                assert_eq!(eval_poly(&p, &q), q_binomial_exact(n, k, &q).unwrap());
            }
        }
    }

    #[test]
    fn q_gamma_fixed_points() {
        for ctx in [dbl(), ext()] {
            for &q in &[0.1, 0.5, 0.9] {
                assert!((q_gamma(1.0, q, &ctx).unwrap().value - 1.0).abs() < 1e-13);
                assert!((q_gamma(2.0, q, &ctx).unwrap().value - 1.0).abs() < 1e-13);
            }
        }
        // Γ_q(x+1) = [x]_q Γ_q(x)
        let ctx = ext();
        let (q, x) = (0.4, 2.3);
        let lhs = q_gamma(x + 1.0, q, &ctx).unwrap().value;
        let rhs = (1.0 - f64::powf(q, x)) / (1.0 - q) * q_gamma(x, q, &ctx).unwrap().value;
        assert!(rel(lhs, rhs) < 1e-14);
    }

    #[test]
    fn q_gamma_overflow_is_reported() {
        assert_eq!(q_gamma(400.0, 0.9, &dbl()), Err(Error::Overflow("q_gamma")));
        assert!(ln_q_gamma(400.0, 0.9, &dbl()).unwrap().value > 709.0);
        assert!(q_gamma(0.0, 0.5, &dbl()).is_err());
    }

    #[test]
    fn digamma_is_log_derivative_of_q_gamma() {
        let ctx = ext();
        let bits = ctx.precision_bits();
        let (q, x, h) = (0.5, 1.7, 1e-6);
        let lg = |t: f64| ln_q_gamma_with(&BigFloat::from_f64(bits, t), &big(&ctx, q), 1e-30).unwrap().value;
        let fd = ((lg(x + h) - lg(x - h)) / BigFloat::from_f64(bits, 2.0 * h)).to_f64();
        for c in [dbl(), ext()] {
            let psi = q_digamma(x, q, &c).unwrap().value;
            assert!(rel(psi, fd) < 1e-8, "{psi} vs {fd}");
        }
    }

    #[test]
    fn digamma_certificates() {
        let c = q_digamma(1.3, 0.7, &ext()).unwrap();
        assert!(c.tail_bound < 1e-30);
        let c = q_digamma_second(1.3, 0.7, &ext()).unwrap();
        assert!(c.tail_bound < 1e-25);
    }

    #[test]
    fn second_derivative_matches_finite_difference() {
        let ctx = ext();
        let bits = ctx.precision_bits();
        // dyadic step so that x ± h is exact
        let h = 2f64.powi(-26);
        for &(q, x) in &[(0.5, 1.7), (0.2, 0.5), (0.9, 3.0)] {
            let psi = |t: f64| q_digamma_with(&BigFloat::from_f64(bits, t), &big(&ctx, q), 1e-40).unwrap().value;
            let num = psi(x + h) - BigFloat::from_f64(bits, 2.0) * psi(x) + psi(x - h);
            let fd = (num / BigFloat::from_f64(bits, h * h)).to_f64();
            let v = q_digamma_second(x, q, &ctx).unwrap().value;
            assert!(rel(v, fd) < 1e-6, "q={q} x={x}: {v} vs {fd}");
        }
    }

    #[test]
    fn second_derivative_negative_on_grid() {
        for i in 1..=9 {
            let q = i as f64 / 10.0;
            for j in 0..=9 {
                let x = 0.5 + 0.5 * j as f64;
                assert!(q_digamma_second(x, q, &dbl()).unwrap().value < 0.0);
            }
        }
    }

    #[test]
    fn mu_q_values() {
        assert!((mu_q(0.25).unwrap() - 3.0).abs() < 1e-15);
        assert!((mu_q(1e-12).unwrap() - 1.0).abs() < 1e-5);
        for i in 1..20 {
            let q = i as f64 / 20.0;
            let lhs = mu_q(q).unwrap() - 1.0;
            let rhs = 2.0 * q.sqrt() * (1.0 + q.sqrt()) / (1.0 - q);
            assert!(rel(lhs, rhs) < 1e-14);
        }
        assert!(mu_q(1.0).is_err());
    }

    #[test]
    fn f_q_two_routes_and_lambert_oracle() {
        for &(q, u) in &[(0.5, 0.4), (0.9, 0.9), (0.1, 0.7), (0.3, 0.05)] {
            // Σ_i u q^i/(1 - u q^i) = Σ_{n≥1} u^n / (1 - q^n)
            let mut lam = 0.0;
            for n in 1..2000 {
                lam += u.powi(n) / (1.0 - q.powi(n));
            }
            for ctx in [dbl(), ext()] {
                let a = f_q(q, u, &ctx).unwrap().value;
                let b = f_q_direct(q, u, &ctx).unwrap().value;
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                assert!(rel(b, 1.0 + 2.0 * lam) < 1e-12);
            }
        }
    }

    #[test]
    fn lln_identity_residuals() {
        for ctx in [dbl(), ext()] {
            for &(q, u) in &[(0.5, 0.4), (0.9, 0.9), (0.05, 0.95), (0.95, 0.05)] {
                let r = verify_lln_identity(q, u, &ctx).unwrap();
                assert!(r < 10.0 * ctx.truncation_eps(), "{q} {u}: {r:e}");
                assert!(r < 1e-12);
            }
        }
        let ctx = ext();
        let small = f_q(0.5, 1e-12, &ctx).unwrap().value - 1.0;
        assert!(small > 0.0 && small < 1e-11);
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy(0.0), 0.0);
        assert_eq!(entropy(1.0), 0.0);
        assert!((entropy(0.5) - 2f64.ln()).abs() < 1e-16);
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            assert!((entropy(p) - entropy(1.0 - p)).abs() < 1e-15);
        }
        assert!(entropy(1.5).is_nan());
    }

    #[test]
    fn qparams_reject_endpoints() {
        assert!(QParams::new(0.0, 0.5).is_err());
        assert!(QParams::new(0.5, 1.0).is_err());
        assert!(QParams::new(0.5, 0.5).is_ok());
    }

    proptest! {
        #[test]
        fn pochhammer_splits(z in -3.0f64..3.0, q in 0.01f64..0.99, m in 0usize..=20, n in 0usize..=20) {
            let ctx = dbl();
            let whole = q_pochhammer(z, q, Length::Finite(m + n), &ctx).unwrap().value;
            let a = q_pochhammer(z, q, Length::Finite(m), &ctx).unwrap().value;
            let b = q_pochhammer(z * q.powi(m as i32), q, Length::Finite(n), &ctx).unwrap().value;
            let scale = whole.abs().max(a.abs() * b.abs()).max(1e-300);
            prop_assert!((whole - a * b).abs() / scale < 1e-12);
        }

        #[test]
        fn pochhammer_splits_exact(zn in -20i64..20, qn in 1i64..9, m in 0usize..=12, n in 0usize..=12) {
            let z = rat(zn, 7);
            let q = rat(qn, 10);
            let whole = q_pochhammer_exact(&z, &q, m + n);
            let zq = &z * num_traits::pow(q.clone(), m);
            prop_assert_eq!(whole, q_pochhammer_exact(&z, &q, m) * q_pochhammer_exact(&zq, &q, n));
        }

        #[test]
        fn pascal_recurrence_float(q in 0.01f64..0.99, n in 1usize..=30, kf in 0.0f64..1.0) {
            let k = 1 + ((n - 1) as f64 * kf) as usize;
            prop_assume!(k < n);
            let ctx = dbl();
            let lhs = q_binomial(n, k, q, &ctx).unwrap();
            let rhs = q_binomial(n - 1, k - 1, q, &ctx).unwrap()
                + q.powi(k as i32) * q_binomial(n - 1, k, q, &ctx).unwrap();
            prop_assert!(rel(lhs, rhs) < 1e-12);
        }

        #[test]
        fn f_q_exceeds_one(q in 0.01f64..0.99, u in 0.01f64..0.99) {
            let f = f_q(q, u, &dbl()).unwrap();
            prop_assert!(f.value.is_finite() && f.value > 1.0);
            prop_assert!(f.tail_bound <= dbl().truncation_eps());
        }
    }
}
