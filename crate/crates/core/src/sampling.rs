//! Seeded random streams and exact samplers for Geo(z), q-Geo(ξ) and the
//! q-deformed beta binomial push law.

use std::cell::RefCell;
use std::collections::HashMap;

use num_rational::BigRational;
use num_traits::{One, Signed};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bigfloat::BigFloat;
use crate::error::{domain, Error, Result};
use crate::precision::{Arithmetic, PrecisionContext};
use crate::qspecial::{
    big, check_unit, q_binomial_exact, q_binomial_with, q_pochhammer, q_pochhammer_exact, q_pochhammer_with,
    rational_to_f64, to_rational, Length,
};
use crate::real::CompensatedSum;

/// ChaCha8 keyed by `seed`, on the independent stream `stream_id`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on (0, 1] with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

// ---------------------------------------------------------------------------
// Geo(z): P(X ≥ k) = z^k

fn check_geo(z: f64) -> Result<()> {
    if (0.0..1.0).contains(&z) {
        Ok(())
    } else {
        domain(format!("Geo parameter z = {z} must lie in [0, 1)"))
    }
}

pub fn geo_pmf(k: u64, z: f64) -> Result<f64> {
    check_geo(z)?;
    Ok((1.0 - z) * z.powf(k as f64))
}

pub fn geo_tail(k: u64, z: f64) -> Result<f64> {
    check_geo(z)?;
    Ok(z.powf(k as f64))
}

pub fn geo_pmf_exact(k: u64, z: &BigRational) -> BigRational {
    (BigRational::one() - z) * num_traits::pow(z.clone(), k as usize)
}

/// Geo(z) sampler with the logarithm precomputed.
#[derive(Debug, Clone, Copy)]
pub struct Geometric {
    z: f64,
    inv_ln_z: f64,
}

impl Geometric {
    pub fn new(z: f64) -> Result<Self> {
        check_geo(z)?;
        Ok(Self {
            z,
            inv_ln_z: if z > 0.0 { 1.0 / z.ln() } else { 0.0 },
        })
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> u64 {
        let u = rng.uniform();
        if u > self.z {
            return 0;
        }
        (u.ln() * self.inv_ln_z).floor() as u64
    }
}

pub fn geo_sample(z: f64, rng: &mut RngStream) -> Result<u64> {
    Ok(Geometric::new(z)?.sample(rng))
}

// ---------------------------------------------------------------------------
// q-Geo(ξ): P(s) = ξ^s (ξ;q)_∞ / (q;q)_s

fn check_qgeo(xi: f64, q: f64) -> Result<()> {
    check_unit("q", q)?;
    if (0.0..1.0).contains(&xi) {
        Ok(())
    } else {
        domain(format!("q-Geo parameter xi = {xi} must lie in [0, 1)"))
    }
}

pub fn qgeo_pmf(s: u64, xi: f64, q: f64, ctx: &PrecisionContext) -> Result<f64> {
    check_qgeo(xi, q)?;
    if xi == 0.0 {
        return Ok(if s == 0 { 1.0 } else { 0.0 });
    }
    match ctx.mode() {
        Arithmetic::Double => {
            let head = q_pochhammer(xi, q, Length::Infinite, ctx)?.value;
            let den = q_pochhammer(q, q, Length::Finite(s as usize), ctx)?.value;
            Ok(xi.powf(s as f64) * head / den)
        }
        _ => {
            let (x, qq) = (big(ctx, xi), big(ctx, q));
            let head = q_pochhammer_with(&x, &qq, Length::Infinite, ctx.truncation_eps())?.value;
            let den = q_pochhammer_with(&qq, &qq, Length::Finite(s as usize), 0.0)?.value;
            Ok((x.powi(s) * head / den).to_f64())
        }
    }
}

/// Cumulative table for q-Geo(ξ), extended until the omitted mass is below
/// `QGeoTable::TAIL`.
#[derive(Debug, Clone)]
pub struct QGeoTable {
    xi: f64,
    q: f64,
    cdf: Vec<f64>,
    tail_bound: f64,
}

impl QGeoTable {
    pub const TAIL: f64 = 1e-12;

    pub fn new(xi: f64, q: f64) -> Result<Self> {
        check_qgeo(xi, q)?;
        let ctx = PrecisionContext::double();
        let mut p = q_pochhammer(xi, q, Length::Infinite, &ctx)?.value;
        let mut acc = CompensatedSum::new(0.0);
        let mut cdf = Vec::new();
        let mut s = 0u64;
        loop {
            acc.add(p);
            cdf.push(acc.value());
            // p_{t+1}/p_t = ξ/(1 − q^{t+1}) is decreasing in t
            let r = xi / (1.0 - q.powf((s + 1) as f64));
            if r < 1.0 {
                let bound = p * r / (1.0 - r);
                if bound < Self::TAIL {
                    return Ok(Self {
                        xi,
                        q,
                        cdf,
                        tail_bound: bound,
                    });
                }
            }
            p *= r;
            s += 1;
        }
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn pmf(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cdf
            .iter()
            .map(|&c| {
                let p = c - prev;
                prev = c;
                p
            })
            .collect()
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Values past the table end (probability < `TAIL`) are reported as
    /// the table length.
    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> u64 {
        inverse_cdf(&self.cdf, rng.uniform())
    }
}

#[inline]
fn inverse_cdf(cdf: &[f64], u: f64) -> u64 {
    if u <= cdf[0] {
        return 0;
    }
    cdf.partition_point(|&c| c < u) as u64
}

thread_local! {
    static QGEO_CACHE: RefCell<HashMap<(u64, u64), std::rc::Rc<QGeoTable>>> = RefCell::new(HashMap::new());
}

pub fn qgeo_sample(xi: f64, q: f64, rng: &mut RngStream) -> Result<u64> {
    check_qgeo(xi, q)?;
    if xi == 0.0 {
        return Ok(0);
    }
    let key = (xi.to_bits(), q.to_bits());
    let table = QGEO_CACHE.with(|c| c.borrow().get(&key).cloned());
    let table = match table {
        Some(t) => t,
        None => {
            let t = std::rc::Rc::new(QGeoTable::new(xi, q)?);
            QGEO_CACHE.with(|c| c.borrow_mut().insert(key, t.clone()));
            t
        }
    };
    Ok(table.sample(rng))
}

// ---------------------------------------------------------------------------
// q-deformed beta binomial at base 1/q, η = 0

/// How the push law reads the distance between particle k and its left
/// neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GapConvention {
    /// Number of empty sites, x_k − x_{k−1} − 1.
    #[default]
    EmptySites,
    /// Raw difference x_k − x_{k−1}.
    Literal,
}

impl GapConvention {
    pub fn gap(self, left: i64, right: i64) -> u64 {
        let d = right - left;
        match self {
            GapConvention::EmptySites => (d - 1).max(0) as u64,
            GapConvention::Literal => d.max(0) as u64,
        }
    }
}

/// φ_{Q,ξ,0}(·|m) with Q = 1/q. For the push law ξ = q^gap, stored as the
/// integer exponent so that the support cutoff is exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QdbbParams {
    q: f64,
    xi: Xi,
    m: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Xi {
    Power(u64),
    Value(f64),
}

impl QdbbParams {
    /// The push law: ξ = q^gap.
    pub fn push(q: f64, gap: u64, m: u64) -> Result<Self> {
        check_unit("q", q)?;
        Ok(Self {
            q,
            xi: Xi::Power(gap),
            m,
        })
    }

    /// Arbitrary ξ ≥ 0 at base 1/q; may fail to be a probability law.
    pub fn general(q: f64, xi: f64, m: u64) -> Result<Self> {
        check_unit("q", q)?;
        if !(xi >= 0.0 && xi.is_finite()) {
            return domain(format!("xi = {xi} must be a nonnegative real"));
        }
        Ok(Self {
            q,
            xi: Xi::Value(xi),
            m,
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn base(&self) -> f64 {
        1.0 / self.q
    }

    pub fn xi(&self) -> f64 {
        match self.xi {
            Xi::Power(g) => self.q.powf(g as f64),
            Xi::Value(x) => x,
        }
    }

    pub fn eta(&self) -> f64 {
        0.0
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    fn context(&self) -> String {
        match self.xi {
            Xi::Power(g) => format!("q = {}, xi = q^{g}, m = {}", self.q, self.m),
            Xi::Value(x) => format!("q = {}, xi = {x}, m = {}", self.q, self.m),
        }
    }
}

/// ln|1 − ξ q^{−i}| and whether the factor is negative; `None` when zero.
fn ln_factor(p: &QdbbParams, i: u64) -> Option<(f64, bool)> {
    let (lq, q) = (p.q.ln(), p.q);
    let e = match p.xi {
        Xi::Power(g) => {
            if g == i {
                return None;
            }
            g as f64 - i as f64
        }
        Xi::Value(x) => {
            if x == 0.0 {
                return Some((0.0, false));
            }
            x.ln() / lq - i as f64
        }
    };
    // factor = 1 − q^e
    if e > 0.0 {
        Some(((-q.powf(e)).ln_1p(), false))
    } else {
        let t = -e * lq; // log of q^e > 1
        Some((t + (-(-t).exp()).ln_1p(), true))
    }
}

/// Signed log-magnitude evaluation of φ(s|m) in binary64.
fn qdbb_raw_f64(s: u64, p: &QdbbParams) -> f64 {
    let m = p.m;
    let lq = p.q.ln();
    let ln_xi = match p.xi {
        Xi::Power(g) => g as f64 * lq,
        Xi::Value(x) => x.ln(),
    };
    let mut ln = CompensatedSum::new(0.0);
    let mut negative = false;
    if s > 0 {
        if ln_xi == f64::NEG_INFINITY {
            return 0.0;
        }
        ln.add(s as f64 * ln_xi);
    }
    for i in 0..(m - s) {
        match ln_factor(p, i) {
            None => return 0.0,
            Some((l, neg)) => {
                ln.add(l);
                negative ^= neg;
            }
        }
    }
    // binom(m, s)_{1/q} = q^{−s(m−s)} binom(m, s)_q
    ln.add(-((s * (m - s)) as f64) * lq);
    let k = s.min(m - s);
    for j in 1..=k {
        ln.add((-p.q.powf((m - k + j) as f64)).ln_1p());
        ln.add(-(-p.q.powf(j as f64)).ln_1p());
    }
    let v = ln.value().exp();
    if negative {
        -v
    } else {
        v
    }
}

fn qdbb_raw_big(s: u64, p: &QdbbParams, ctx: &PrecisionContext) -> f64 {
    let q = big(ctx, p.q);
    let one = BigFloat::one(ctx.precision_bits());
    let base = &one / &q;
    let xi = match p.xi {
        Xi::Power(g) => q.powi(g),
        Xi::Value(x) => big(ctx, x),
    };
    let poch = match p.xi {
        Xi::Power(g) if g < p.m - s => BigFloat::zero(ctx.precision_bits()),
        _ => q_pochhammer_with(&xi, &base, Length::Finite((p.m - s) as usize), 0.0)
            .expect("finite product")
            .value,
    };
    let bin = q_binomial_with(p.m as usize, s as usize, &base).expect("s <= m");
    (xi.powi(s) * poch * bin).to_f64()
}

/// Exact φ(s|m) at rational q, ξ.
pub fn qdbb_pmf_exact(s: u64, q: &BigRational, xi: &BigRational, m: u64) -> Result<BigRational> {
    if s > m {
        return domain(format!("s = {s} exceeds m = {m}"));
    }
    if !(q.is_positive() && q < &BigRational::one()) {
        return domain("exact q-dbb needs 0 < q < 1");
    }
    let base = q.recip();
    let poch = q_pochhammer_exact(xi, &base, (m - s) as usize);
    let bin = q_binomial_exact(m as usize, s as usize, &base)?;
    Ok(num_traits::pow(xi.clone(), s as usize) * poch * bin)
}

const SUPPORT_TOL: f64 = 1e-9;
const SUM_TOL: f64 = 1e-10;
const RENORM_LIMIT: f64 = 1e-6;

/// The full PMF on {0, …, m}, validated: entries below −1e−9 are a support
/// violation, smaller negatives are rounding noise and clamped to 0, and a total within
/// (1e−10, 1e−6) of one is renormalised.
pub fn qdbb_pmf_table(params: &QdbbParams, ctx: &PrecisionContext) -> Result<Vec<f64>> {
    let m = params.m;
    let raw: Vec<f64> = match ctx.mode() {
        Arithmetic::Double => (0..=m).map(|s| qdbb_raw_f64(s, params)).collect(),
        Arithmetic::ExtendedFloat => (0..=m).map(|s| qdbb_raw_big(s, params, ctx)).collect(),
        Arithmetic::ExactRational => {
            let q = to_rational(params.q)?;
            let xi = match params.xi {
                Xi::Power(g) => num_traits::pow(q.clone(), g as usize),
                Xi::Value(x) => to_rational(x)?,
            };
            (0..=m)
                .map(|s| qdbb_pmf_exact(s, &q, &xi, m).map(|v| rational_to_f64(&v)))
                .collect::<Result<_>>()?
        }
    };
    let mut out = Vec::with_capacity(raw.len());
    for (s, &v) in raw.iter().enumerate() {
        if !v.is_finite() || v < -SUPPORT_TOL {
            return Err(Error::SupportViolation {
                s: s as usize,
                value: v,
                context: params.context(),
            });
        }
        out.push(v.max(0.0));
    }
    let total: f64 = out.iter().sum();
    let dev = (total - 1.0).abs();
    if dev > RENORM_LIMIT {
        return Err(Error::Normalization {
            deviation: total - 1.0,
            context: params.context(),
        });
    }
    if dev > SUM_TOL {
        out.iter_mut().for_each(|v| *v /= total);
    }
    Ok(out)
}

pub fn qdbb_pmf(s: u64, params: &QdbbParams, ctx: &PrecisionContext) -> Result<f64> {
    if s > params.m {
        return Ok(0.0);
    }
    Ok(qdbb_pmf_table(params, ctx)?[s as usize])
}

/// Inverse-CDF sampler for the push law with a per-(gap, m) table cache.
#[derive(Debug, Clone)]
pub struct PushSampler {
    q: f64,
    ctx: PrecisionContext,
    cache: HashMap<(u64, u64), Vec<f64>>,
}

impl PushSampler {
    pub fn new(q: f64) -> Result<Self> {
        check_unit("q", q)?;
        Ok(Self {
            q,
            ctx: PrecisionContext::double(),
            cache: HashMap::new(),
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    fn table(&mut self, gap: u64, m: u64) -> Result<&Vec<f64>> {
        if !self.cache.contains_key(&(gap, m)) {
            let pmf = qdbb_pmf_table(&QdbbParams::push(self.q, gap, m)?, &self.ctx)?;
            let mut acc = 0.0;
            let cdf: Vec<f64> = pmf
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect();
            self.cache.insert((gap, m), cdf);
        }
        Ok(&self.cache[&(gap, m)])
    }

    pub fn sample(&mut self, gap: u64, m: u64, rng: &mut RngStream) -> Result<u64> {
        if m == 0 {
            return Ok(0);
        }
        let cdf = self.table(gap, m)?;
        let s = inverse_cdf(cdf, rng.uniform());
        Ok(s.min(m))
    }
}

pub fn qdbb_sample(params: &QdbbParams, rng: &mut RngStream, ctx: &PrecisionContext) -> Result<u64> {
    if params.m == 0 {
        return Ok(0);
    }
    let pmf = qdbb_pmf_table(params, ctx)?;
    let mut acc = 0.0;
    let cdf: Vec<f64> = pmf
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    Ok(inverse_cdf(&cdf, rng.uniform()).min(params.m))
}

/// Exact ξ^s / (q;q)_s ratio used by tests of the q-Geo PMF.
pub fn qgeo_ratio_exact(s: u64, xi: &BigRational, q: &BigRational) -> BigRational {
    if s == 0 {
        return BigRational::one();
    }
    num_traits::pow(xi.clone(), s as usize) / q_pochhammer_exact(q, q, s as usize)
}
