//! q-Whittaker polynomials via the branching rule, and the q-Whittaker
//! measure with parameters a = (u,…,u) (N copies), b = (u,…,u) (T copies),
//! enumerated exactly on a capped set of partitions.

use std::collections::HashMap;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::bigfloat::BigFloat;
use crate::error::{domain, Error, Result};
use crate::precision::{Arithmetic, Certified, PrecisionContext};
use crate::qspecial::{check_unit, q_pochhammer_with, rational_to_f64, to_rational, Length};

/// Weakly decreasing parts, trailing zeros dropped.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PartitionShape {
    parts: Vec<u32>,
}

impl PartitionShape {
    pub fn new(mut parts: Vec<u32>) -> Result<Self> {
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return domain(format!("parts {parts:?} are not weakly decreasing"));
        }
        while parts.last() == Some(&0) {
            parts.pop();
        }
        Ok(Self { parts })
    }

    pub fn empty() -> Self {
        Self { parts: Vec::new() }
    }

    pub fn parts(&self) -> &[u32] {
        &self.parts
    }

    /// ℓ(μ), the number of nonzero parts.
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn size(&self) -> u32 {
        self.parts.iter().sum()
    }

    /// μ_i with 1-based i; zero past the end.
    pub fn part(&self, i: usize) -> u32 {
        if i == 0 {
            return u32::MAX;
        }
        self.parts.get(i - 1).copied().unwrap_or(0)
    }

    /// η ≺ self: μ_1 ≥ η_1 ≥ μ_2 ≥ η_2 ≥ ….
    pub fn interlaces_below(&self, eta: &PartitionShape) -> bool {
        if eta.len() > self.len() || self.len() > eta.len() + 1 {
            return false;
        }
        (1..=self.len()).all(|i| self.part(i) >= eta.part(i) && eta.part(i) >= self.part(i + 1))
    }

    pub fn contains(&self, nu: &PartitionShape) -> bool {
        nu.len() <= self.len() && (1..=nu.len()).all(|i| nu.part(i) <= self.part(i))
    }

    /// Every η with η ≺ self.
    pub fn interlacing_below(&self) -> Vec<PartitionShape> {
        let l = self.len();
        let mut out = Vec::new();
        let mut cur = vec![0u32; l];
        fn rec(mu: &PartitionShape, i: usize, cur: &mut Vec<u32>, out: &mut Vec<PartitionShape>) {
            if i == cur.len() {
                out.push(PartitionShape::new(cur.clone()).expect("interlacing parts decrease"));
                return;
            }
            for v in mu.part(i + 2)..=mu.part(i + 1) {
                cur[i] = v;
                rec(mu, i + 1, cur, out);
            }
        }
        rec(self, 0, &mut cur, &mut out);
        out
    }
}

/// Arithmetic the branching rule can run in.
pub trait QField:
    Clone
    + Debug
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    fn to_f64(&self) -> f64;
}

impl QField for f64 {
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl QField for BigRational {
    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }
}

fn qbin<W: QField>(n: u32, k: u32, q: &W) -> W {
    let k = k.min(n - k);
    let mut acc = W::one();
    for j in 1..=k {
        let top = W::one() - num_traits::pow(q.clone(), (n - k + j) as usize);
        let bot = W::one() - num_traits::pow(q.clone(), j as usize);
        acc = acc * top / bot;
    }
    acc
}

/// (q;q)_n.
fn qfact<W: QField>(n: u32, q: &W) -> W {
    let mut acc = W::one();
    for j in 1..=n {
        acc = acc * (W::one() - num_traits::pow(q.clone(), j as usize));
    }
    acc
}

/// ψ_{μ/η}(q) = ∏_i binom(μ_i − μ_{i+1}, μ_i − η_i)_q, the z-free part of
/// the single-variable polynomial.
fn branch_coeff<W: QField>(mu: &PartitionShape, eta: &PartitionShape, q: &W) -> W {
    let mut acc = W::one();
    for i in 1..=mu.len() {
        let (a, b) = (mu.part(i), mu.part(i + 1));
        acc = acc * qbin(a - b, a - eta.part(i), q);
    }
    acc
}

/// P_{μ/η}(z) = 1_{η≺μ} z^{|μ|−|η|} ψ_{μ/η}(q).
pub fn single_variable<W: QField>(mu: &PartitionShape, eta: &PartitionShape, z: &W, q: &W) -> W {
    if !mu.interlaces_below(eta) {
        return W::zero();
    }
    num_traits::pow(z.clone(), (mu.size() - eta.size()) as usize) * branch_coeff(mu, eta, q)
}

/// Skew polynomial P_{μ/ν}(x_1, …, x_n) by the branching rule, memoised
/// over (number of variables used, intermediate shape).
pub fn skew_poly<W: QField>(mu: &PartitionShape, nu: &PartitionShape, xs: &[W], q: &W) -> W {
    let mut memo: HashMap<(usize, PartitionShape), W> = HashMap::new();
    skew_rec(mu, nu, xs, q, &mut memo)
}

fn skew_rec<W: QField>(
    mu: &PartitionShape,
    nu: &PartitionShape,
    xs: &[W],
    q: &W,
    memo: &mut HashMap<(usize, PartitionShape), W>,
) -> W {
    let n = xs.len();
    if n == 0 {
        return if mu == nu { W::one() } else { W::zero() };
    }
    if !mu.contains(nu) || mu.len() > nu.len() + n {
        return W::zero();
    }
    if let Some(v) = memo.get(&(n, mu.clone())) {
        return v.clone();
    }
    let z = &xs[n - 1];
    let mut acc = W::zero();
    for eta in mu.interlacing_below() {
        if !eta.contains(nu) {
            continue;
        }
        let inner = skew_rec(&eta, nu, &xs[..n - 1], q, memo);
        if inner.is_zero() {
            continue;
        }
        acc = acc + inner * single_variable(mu, &eta, z, q);
    }
    memo.insert((n, mu.clone()), acc.clone());
    acc
}

pub fn poly<W: QField>(mu: &PartitionShape, xs: &[W], q: &W) -> W {
    skew_poly(mu, &PartitionShape::empty(), xs, q)
}

pub const MAX_FLOAT_SIZE: u32 = 60;
pub const MAX_FLOAT_VARS: usize = 8;

/// P_μ(x; q) in the arithmetic of `ctx`. Outside exact mode, shapes with
/// |μ| > 60 or more than 8 variables are refused.
pub fn qwhittaker_poly(mu: &PartitionShape, xs: &[f64], q: f64, ctx: &PrecisionContext) -> Result<f64> {
    check_unit("q", q)?;
    match ctx.mode() {
        Arithmetic::ExactRational => {
            let xr = xs.iter().map(|&x| to_rational(x)).collect::<Result<Vec<_>>>()?;
            Ok(poly(mu, &xr, &to_rational(q)?).to_f64())
        }
        _ => {
            if mu.size() > MAX_FLOAT_SIZE || xs.len() > MAX_FLOAT_VARS {
                return Err(Error::Refused(format!(
                    "|mu| = {} with {} variables exceeds the float-mode limits ({MAX_FLOAT_SIZE}, {MAX_FLOAT_VARS})",
                    mu.size(),
                    xs.len()
                )));
            }
            Ok(poly(mu, xs, &q))
        }
    }
}

pub fn qwhittaker_single_variable(
    mu: &PartitionShape,
    eta: &PartitionShape,
    z: f64,
    q: f64,
    ctx: &PrecisionContext,
) -> Result<f64> {
    check_unit("q", q)?;
    match ctx.mode() {
        Arithmetic::ExactRational => Ok(single_variable(mu, eta, &to_rational(z)?, &to_rational(q)?).to_f64()),
        _ => Ok(single_variable(mu, eta, &z, &q)),
    }
}

/// b_μ(q) = ∏_i 1/(q;q)_{μ_i − μ_{i+1}}.
pub fn b_mu<W: QField>(mu: &PartitionShape, q: &W) -> W {
    let mut acc = W::one();
    for i in 1..=mu.len() {
        acc = acc / qfact(mu.part(i) - mu.part(i + 1), q);
    }
    acc
}

/// Π(a; b) = ∏_{i,j} 1/(a_i b_j; q)_∞, with a relative error bound.
pub fn normalization_pi(a: &[f64], b: &[f64], q: f64, ctx: &PrecisionContext) -> Result<Certified<f64>> {
    check_unit("q", q)?;
    let ln = ln_normalization_pi(a, b, q, ctx)?;
    Ok(Certified {
        value: ln.value.to_f64().exp(),
        tail_bound: ln.tail_bound,
        terms: ln.terms,
    })
}

/// log Π(a; b) in `BigFloat`; `tail_bound` is the relative error of Π.
pub fn ln_normalization_pi(a: &[f64], b: &[f64], q: f64, ctx: &PrecisionContext) -> Result<Certified<BigFloat>> {
    check_unit("q", q)?;
    let bits = ctx.precision_bits().max(64);
    let eps = ctx.truncation_eps();
    let qb = BigFloat::from_f64(bits, q);
    let mut ln = BigFloat::zero(bits);
    let mut rel = 0.0f64;
    let mut terms = 0;
    for &ai in a {
        for &bj in b {
            let z = &BigFloat::from_f64(bits, ai) * &BigFloat::from_f64(bits, bj);
            if z.to_f64().abs() >= 1.0 {
                return domain(format!("a_i b_j = {} must lie in (-1, 1)", z.to_f64()));
            }
            let p = q_pochhammer_with(&z, &qb, Length::Infinite, eps)?;
            ln = &ln - &p.value.ln();
            rel += p.tail_bound;
            terms = terms.max(p.terms);
        }
    }
    Ok(Certified {
        value: ln,
        tail_bound: rel / (1.0 - rel),
        terms,
    })
}

/// Every partition with at most `rows` parts and μ_1 ≤ `cap`, ordered by
/// |μ| and then lexicographically.
pub fn partitions_in_box(rows: usize, cap: u32) -> Vec<PartitionShape> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(rows: usize, max: u32, cur: &mut Vec<u32>, out: &mut Vec<PartitionShape>) {
        out.push(PartitionShape::new(cur.clone()).expect("decreasing by construction"));
        if cur.len() == rows {
            return;
        }
        for v in 1..=max {
            cur.push(v);
            rec(rows, v, cur, out);
            cur.pop();
        }
    }
    rec(rows, cap, &mut cur, &mut out);
    out.sort_by(|x, y| x.size().cmp(&y.size()).then_with(|| x.parts.cmp(&y.parts)));
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncatedMeasure {
    pub support: Vec<PartitionShape>,
    pub probabilities: Vec<f64>,
    pub cap: u32,
    pub tail_mass_bound: f64,
}

pub const MAX_DESK_NT: usize = 4;
pub const MAX_DESK_CAP: u32 = 30;

/// Exact weights b_μ(q) P_μ(u^N) P_μ(u^T) for rational u, q; normalised by
/// Π evaluated in `BigFloat`.
pub fn truncated_measure_rational(
    n: usize,
    t: usize,
    u: &BigRational,
    q: &BigRational,
    cap: u32,
    tolerance: f64,
    bits: u32,
) -> Result<TruncatedMeasure> {
    if n > MAX_DESK_NT || t > MAX_DESK_NT || cap > MAX_DESK_CAP {
        return Err(Error::Refused(format!(
            "desk-scale guard: need N, T <= {MAX_DESK_NT} and cap <= {MAX_DESK_CAP}, got N = {n}, T = {t}, cap = {cap}"
        )));
    }
    let rows = n.min(t);
    let ones_n = vec![BigRational::one(); n];
    let ones_t = vec![BigRational::one(); t];
    let u2 = u * u;
    let mut weights = Vec::new();
    let shapes = partitions_in_box(rows, cap);
    // P_μ(u,…,u) = u^{|μ|} P_μ(1,…,1); one memo per variable count
    let mut memo_n = HashMap::new();
    let mut memo_t = HashMap::new();
    for mu in &shapes {
        let pn = skew_rec(mu, &PartitionShape::empty(), &ones_n, q, &mut memo_n);
        let pt = if n == t {
            pn.clone()
        } else {
            skew_rec(mu, &PartitionShape::empty(), &ones_t, q, &mut memo_t)
        };
        weights.push(b_mu(mu, q) * pn * pt * num_traits::pow(u2.clone(), mu.size() as usize));
    }
    let uf = BigFloat::from_rational(bits, u);
    let qf = BigFloat::from_rational(bits, q);
    let pi = ln_pi_big(&uf, &qf, n * t, bits)?;
    let inv_pi = (-pi).exp();
    let mut total = BigFloat::zero(bits);
    let mut probabilities = Vec::with_capacity(weights.len());
    for w in &weights {
        let p = &BigFloat::from_rational(bits, w) * &inv_pi;
        total = &total + &p;
        probabilities.push(p.to_f64());
    }
    let tail = (&BigFloat::one(bits) - &total).to_f64();
    if tail > tolerance {
        return Err(Error::CapTooSmall { tail, tolerance });
    }
    Ok(TruncatedMeasure {
        support: shapes,
        probabilities,
        cap,
        tail_mass_bound: tail.max(0.0),
    })
}

/// log Π for `copies` identical factors 1/(u²; q)_∞.
fn ln_pi_big(u: &BigFloat, q: &BigFloat, copies: usize, bits: u32) -> Result<BigFloat> {
    let eps = 2f64.powi(-(bits as i32)).max(1e-300);
    let p = q_pochhammer_with(&(u * u), q, Length::Infinite, eps)?;
    Ok(-(&p.value.ln() * &BigFloat::from_f64(bits, copies as f64)))
}

/// The measure for binary64 inputs. Exact-rational mode reads u and q as
/// the dyadic rationals they are.
pub fn truncated_measure(
    n: usize,
    t: usize,
    u: f64,
    q: f64,
    cap: u32,
    tolerance: f64,
    ctx: &PrecisionContext,
) -> Result<TruncatedMeasure> {
    check_unit("q", q)?;
    check_unit("u", u)?;
    let bits = ctx.precision_bits().max(64);
    match ctx.mode() {
        Arithmetic::ExactRational | Arithmetic::ExtendedFloat => {
            truncated_measure_rational(n, t, &to_rational(u)?, &to_rational(q)?, cap, tolerance, bits)
        }
        Arithmetic::Double => {
            if n > MAX_DESK_NT || t > MAX_DESK_NT || cap > MAX_DESK_CAP {
                return Err(Error::Refused("desk-scale guard".into()));
            }
            let rows = n.min(t);
            let shapes = partitions_in_box(rows, cap);
            let (ones_n, ones_t) = (vec![1.0; n], vec![1.0; t]);
            let (mut memo_n, mut memo_t) = (HashMap::new(), HashMap::new());
            let pi = normalization_pi(&vec![u; n], &vec![u; t], q, ctx)?.value;
            let mut probabilities = Vec::with_capacity(shapes.len());
            for mu in &shapes {
                let pn = skew_rec(mu, &PartitionShape::empty(), &ones_n, &q, &mut memo_n);
                let pt = skew_rec(mu, &PartitionShape::empty(), &ones_t, &q, &mut memo_t);
                probabilities.push(b_mu(mu, &q) * pn * pt * (u * u).powi(mu.size() as i32) / pi);
            }
            let tail = 1.0 - probabilities.iter().sum::<f64>();
            if tail > tolerance {
                return Err(Error::CapTooSmall { tail, tolerance });
            }
            Ok(TruncatedMeasure {
                support: shapes,
                probabilities,
                cap,
                tail_mass_bound: tail.max(0.0),
            })
        }
    }
}

/// Law of μ_1 under the truncated measure, indexed by value.
pub fn top_row_marginal(measure: &TruncatedMeasure) -> Vec<f64> {
    let mut law = vec![0.0; measure.cap as usize + 1];
    for (mu, p) in measure.support.iter().zip(&measure.probabilities) {
        law[mu.part(1) as usize] += p;
    }
    law
}

/// `value,probability` rows.
pub fn law_to_csv(law: &[f64]) -> String {
    let mut s = String::from("value,probability\n");
    for (v, p) in law.iter().enumerate() {
        s.push_str(&format!("{v},{p:.17e}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shape(p: &[u32]) -> PartitionShape {
        PartitionShape::new(p.to_vec()).unwrap()
    }

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn shapes_validate_and_interlace() {
        assert!(PartitionShape::new(vec![1, 2]).is_err());
        assert_eq!(shape(&[3, 1, 0, 0]).parts(), &[3, 1]);
        assert!(shape(&[3, 1]).interlaces_below(&shape(&[2])));
        assert!(shape(&[3, 1]).interlaces_below(&shape(&[3, 1])));
        assert!(!shape(&[3, 1]).interlaces_below(&shape(&[2, 2])));
        assert!(!shape(&[3, 1, 1]).interlaces_below(&shape(&[3])));
        let below = shape(&[3, 1]).interlacing_below();
        assert_eq!(below.len(), 3 * 2);
        assert!(below.iter().all(|e| shape(&[3, 1]).interlaces_below(e)));
    }

    #[test]
    fn single_variable_examples() {
        let q = rat(1, 3);
        let z = rat(2, 5);
        let e = PartitionShape::empty();
        assert_eq!(single_variable(&shape(&[4]), &e, &z, &q), num_traits::pow(z.clone(), 4));
        assert!(single_variable(&shape(&[2, 2]), &shape(&[1]), &z, &q).is_zero());
        let mu = shape(&[3, 2, 2]);
        assert!(single_variable(&mu, &mu, &z, &q).is_one());
        let ctx = PrecisionContext::double();
        assert_eq!(qwhittaker_single_variable(&shape(&[2]), &e, 0.5, 0.5, &ctx).unwrap(), 0.25);
    }

    #[test]
    fn poly_examples() {
        let q = rat(1, 2);
        let (a, b) = (rat(1, 3), rat(2, 7));
        assert!(poly(&PartitionShape::empty(), &[a.clone(), b.clone()], &q).is_one());
        assert_eq!(poly(&shape(&[1]), &[a.clone(), b.clone()], &q), &a + &b);
        // P_(1,1)(a, b) = ab
        assert_eq!(poly(&shape(&[1, 1]), &[a.clone(), b.clone()], &q), &a * &b);
        // P_(2)(a, b) = a² + b² + (1 + q) ab
        let want = &a * &a + &b * &b + (BigRational::one() + &q) * &a * &b;
        assert_eq!(poly(&shape(&[2]), &[a.clone(), b.clone()], &q), want);
        assert!(poly(&shape(&[1, 1, 1]), &[a, b], &q).is_zero());
    }

    #[test]
    fn float_guard() {
        let ctx = PrecisionContext::double();
        let xs = vec![0.5; 9];
        assert!(matches!(qwhittaker_poly(&shape(&[1]), &xs, 0.5, &ctx), Err(Error::Refused(_))));
        assert!(matches!(qwhittaker_poly(&shape(&[61]), &[0.5], 0.5, &ctx), Err(Error::Refused(_))));
        assert!(qwhittaker_poly(&shape(&[61]), &[0.5], 0.5, &PrecisionContext::exact()).is_ok());
    }

    #[test]
    fn b_mu_values() {
        let q = rat(1, 2);
        assert!(b_mu(&PartitionShape::empty(), &q).is_one());
        assert_eq!(b_mu(&shape(&[3]), &q), rat(1, 1) / crate::qspecial::q_pochhammer_exact(&q, &q, 3));
        // parts 5,5,2: factors (q;q)_0 (q;q)_3 (q;q)_2
        let want = rat(1, 1)
            / (crate::qspecial::q_pochhammer_exact(&q, &q, 3) * crate::qspecial::q_pochhammer_exact(&q, &q, 2));
        assert_eq!(b_mu(&shape(&[5, 5, 2]), &q), want);
    }

    #[test]
    fn normalization_examples() {
        let ctx = PrecisionContext::default();
        assert_eq!(normalization_pi(&[], &[], 0.5, &ctx).unwrap().value, 1.0);
        let v = normalization_pi(&[0.4], &[0.4], 0.5, &ctx).unwrap().value;
        let p = crate::qspecial::q_pochhammer(0.16, 0.5, Length::Infinite, &ctx).unwrap().value;
        assert!((v - 1.0 / p).abs() < 1e-14);
        for &q in &[0.1, 0.5, 0.9] {
            let l = ln_normalization_pi(&[0.9; 4], &[0.9; 4], q, &ctx).unwrap();
            assert!(l.value.to_f64().is_finite());
        }
    }

    #[test]
    fn cauchy_identity_on_n1() {
        // N = T = 1: μ = (m), weight u^{2m}/(q;q)_m, Π = 1/(u²;q)_∞ (q-binomial theorem)
        let m = truncated_measure(1, 1, 0.4, 0.5, 30, 1e-9, &PrecisionContext::default()).unwrap();
        let ctx = PrecisionContext::default();
        for (mu, p) in m.support.iter().zip(&m.probabilities).take(10) {
            let s = mu.part(1) as u64;
            let want = crate::sampling::qgeo_pmf(s, 0.16, 0.5, &ctx).unwrap();
            assert!((p - want).abs() < 1e-15);
        }
    }

    #[test]
    fn measure_normalises_with_cap() {
        let u = rat(2, 5);
        let q = rat(1, 2);
        let mut prev = 1.0;
        for cap in [5u32, 10, 15, 25] {
            let m = truncated_measure_rational(2, 2, &u, &q, cap, 1.0, 256).unwrap();
            assert!(m.probabilities.iter().all(|&p| p >= 0.0));
            assert!(m.tail_mass_bound <= prev);
            prev = m.tail_mass_bound;
            let s: f64 = m.probabilities.iter().sum();
            assert!((s + m.tail_mass_bound - 1.0).abs() < 1e-9);
        }
        assert!(prev < 1e-8);
        assert!(matches!(
            truncated_measure_rational(2, 2, &u, &q, 2, 1e-8, 256),
            Err(Error::CapTooSmall { .. })
        ));
        assert!(matches!(truncated_measure_rational(5, 2, &u, &q, 5, 1.0, 256), Err(Error::Refused(_))));
    }

    #[test]
    fn float_and_exact_measures_agree() {
        let a = truncated_measure(2, 3, 0.4, 0.5, 20, 1e-9, &PrecisionContext::double()).unwrap();
        let b = truncated_measure(2, 3, 0.4, 0.5, 20, 1e-9, &PrecisionContext::exact()).unwrap();
        for (x, y) in a.probabilities.iter().zip(&b.probabilities) {
            assert!((x - y).abs() < 1e-14);
        }
        let law = top_row_marginal(&b);
        assert!((law.iter().sum::<f64>() + b.tail_mass_bound - 1.0).abs() < 1e-12);
        assert!(law_to_csv(&law).starts_with("value,probability\n0,"));
    }

    #[test]
    fn enumeration_order() {
        let ps = partitions_in_box(2, 2);
        let got: Vec<Vec<u32>> = ps.iter().map(|p| p.parts().to_vec()).collect();
        assert_eq!(got, vec![vec![], vec![1], vec![1, 1], vec![2], vec![2, 1], vec![2, 2]]);
    }

    /// Schur polynomial by brute-force semistandard tableaux.
    fn schur(mu: &[u32], xs: &[f64]) -> f64 {
        let cells: Vec<(usize, usize)> = mu
            .iter()
            .enumerate()
            .flat_map(|(r, &len)| (0..len as usize).map(move |c| (r, c)))
            .collect();
        let mut fill = vec![vec![0usize; mu.first().copied().unwrap_or(0) as usize]; mu.len()];
        fn rec(i: usize, cells: &[(usize, usize)], fill: &mut Vec<Vec<usize>>, xs: &[f64]) -> f64 {
            if i == cells.len() {
                return fill.iter().flatten().filter(|&&v| v > 0).map(|&v| xs[v - 1]).product();
            }
            let (r, c) = cells[i];
            let mut total = 0.0;
            for v in 1..=xs.len() {
                if c > 0 && fill[r][c - 1] > v {
                    continue;
                }
                if r > 0 && fill[r - 1][c] >= v {
                    continue;
                }
                fill[r][c] = v;
                total += rec(i + 1, cells, fill, xs);
                fill[r][c] = 0;
            }
            total
        }
        rec(0, &cells, &mut fill, xs)
    }

    #[test]
    fn q_to_zero_gives_schur() {
        let xs = [0.3, 0.7, 1.1];
        for mu in [vec![1], vec![2], vec![2, 1], vec![3, 1], vec![2, 2, 1], vec![3, 2, 1]] {
            let p = poly(&shape(&mu), &xs, &1e-6);
            let s = schur(&mu, &xs);
            assert!(((p - s) / s).abs() < 1e-4, "{mu:?}: {p} vs {s}");
        }
    }

    fn arb_shape() -> impl Strategy<Value = PartitionShape> {
        proptest::collection::vec(0u32..4, 0..4).prop_map(|mut v| {
            v.sort_unstable_by(|a, b| b.cmp(a));
            PartitionShape::new(v).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn symmetric_in_variables(mu in arb_shape(), a in 1i64..9, b in 1i64..9, c in 1i64..9, qn in 1i64..9) {
            let q = rat(qn, 10);
            let (x, y, z) = (rat(a, 7), rat(b, 7), rat(c, 7));
            let base = poly(&mu, &[x.clone(), y.clone(), z.clone()], &q);
            prop_assert_eq!(&base, &poly(&mu, &[y.clone(), x.clone(), z.clone()], &q));
            prop_assert_eq!(&base, &poly(&mu, &[z.clone(), y.clone(), x.clone()], &q));
            prop_assert_eq!(&base, &poly(&mu, &[x, z, y], &q));
        }

        #[test]
        fn branching_split_consistent(mu in arb_shape(), split in 0usize..=4, seed in proptest::collection::vec(1i64..9, 4)) {
            let q = rat(1, 3);
            let xs: Vec<BigRational> = seed.iter().map(|&s| rat(s, 5)).collect();
            let whole = poly(&mu, &xs, &q);
            let mut acc = BigRational::zero();
            for nu in partitions_in_box(split, mu.part(1)) {
                if !mu.contains(&nu) {
                    continue;
                }
                acc += poly(&nu, &xs[..split], &q) * skew_poly(&mu, &nu, &xs[split..], &q);
            }
            prop_assert_eq!(whole, acc);
        }
    }
}
