//! Stretched-exponential tails: σ-sums, the exponential moment bound and
//! tail bounds for sums of independent variables with P(X_i ≥ t) ≤
//! C_1 e^{−ρ_i t^{3/2}}.

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::precision::{Certified, PrecisionContext};
use crate::real::CompensatedSum;
use crate::sampling::RngStream;
use crate::stats::{linear_fit, wilson_interval, Interval, LinearFit};

const MAX_TERMS: usize = 100_000_000;

/// Rates ρ_i, i = 1, 2, ...
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RateLaw {
    Finite(Vec<f64>),
    /// ρ_i = i^a.
    Power { exponent: f64 },
    /// ρ_i = e^{ln_scale} i^a e^{i·ln_ratio}, ln_ratio > 0.
    PowerGeometric { ln_scale: f64, exponent: f64, ln_ratio: f64 },
}

impl RateLaw {
    /// ρ_i = ε^{3/2} i^{3/2} q^{−i/2} with q = e^{−ε}.
    pub fn eps_family(eps: f64) -> Self {
        RateLaw::PowerGeometric {
            ln_scale: 1.5 * eps.ln(),
            exponent: 1.5,
            ln_ratio: eps / 2.0,
        }
    }

    /// ρ_i = i^{3/2} 2^{i/2}.
    pub fn geometric_family() -> Self {
        RateLaw::PowerGeometric {
            ln_scale: 0.0,
            exponent: 1.5,
            ln_ratio: 0.5 * std::f64::consts::LN_2,
        }
    }

    /// ρ_i for 1-based i.
    pub fn rate(&self, i: usize) -> f64 {
        self.ln_rate(i).exp()
    }

    fn ln_rate(&self, i: usize) -> f64 {
        match self {
            RateLaw::Finite(r) => r[i - 1].ln(),
            RateLaw::Power { exponent } => exponent * (i as f64).ln(),
            RateLaw::PowerGeometric { ln_scale, exponent, ln_ratio } => {
                ln_scale + exponent * (i as f64).ln() + i as f64 * ln_ratio
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            RateLaw::Finite(r) if r.is_empty() || r.iter().any(|&x| !(x > 0.0 && x.is_finite())) => {
                domain("rates must be positive and finite")
            }
            RateLaw::Power { exponent } if !(*exponent > 0.0) => domain("power exponent must be positive"),
            RateLaw::PowerGeometric { ln_scale, exponent, ln_ratio }
                if !(ln_scale.is_finite() && *exponent >= 0.0 && *ln_ratio > 0.0) =>
            {
                domain("need finite scale, exponent ≥ 0 and ratio > 1")
            }
            _ => Ok(()),
        }
    }
}

/// A certified sum together with a bound on the mass of all omitted terms.
#[derive(Debug, Clone, Copy)]
struct Truncated {
    sum: Certified<f64>,
    omitted: f64,
}

/// Σ_i ρ_i^{−p}; `None` when the series diverges.
fn power_sum(law: &RateLaw, p: f64, rel_tol: f64) -> Result<Option<Truncated>> {
    law.validate()?;
    match law {
        RateLaw::Finite(r) => {
            let mut acc = CompensatedSum::new(0.0);
            r.iter().for_each(|x| acc.add(x.powf(-p)));
            Ok(Some(Truncated {
                sum: Certified::exact(acc.value(), r.len()),
                omitted: 0.0,
            }))
        }
        RateLaw::Power { exponent } => {
            let s = p * exponent;
            if s <= 1.0 {
                return Ok(None);
            }
            // The leading term is 1, so an absolute target is also relative.
            let terms = (2.0 * rel_tol).powf(-1.0 / s).ceil() as usize;
            if terms > MAX_TERMS {
                return Err(Error::PrecisionInsufficient {
                    residual: 1.0 / (2.0 * (MAX_TERMS as f64).powf(s)),
                    limit: rel_tol,
                });
            }
            let mut acc = CompensatedSum::new(0.0);
            for i in (1..=terms).rev() {
                acc.add((i as f64).powf(-s));
            }
            // ∫_{I+1}^∞ x^{−s} ≤ Σ_{i>I} i^{−s} ≤ ∫_I^∞ x^{−s}
            let i = terms as f64;
            let hi = i.powf(1.0 - s) / (s - 1.0);
            let lo = (i + 1.0).powf(1.0 - s) / (s - 1.0);
            acc.add(0.5 * (hi + lo));
            Ok(Some(Truncated {
                sum: Certified {
                    value: acc.value(),
                    tail_bound: 0.5 * (hi - lo),
                    terms,
                },
                omitted: hi,
            }))
        }
        RateLaw::PowerGeometric { ln_ratio, .. } => {
            // term ratios are at most e^{−p·ln_ratio} since i^{−pa} decreases
            let geo = -(-p * ln_ratio).exp_m1();
            let mut acc = CompensatedSum::new(0.0);
            let mut i = 0;
            loop {
                i += 1;
                acc.add((-p * law.ln_rate(i)).exp());
                let tail = (-p * law.ln_rate(i + 1)).exp() / geo;
                if tail <= rel_tol * acc.value() {
                    return Ok(Some(Truncated {
                        sum: Certified {
                            value: acc.value(),
                            tail_bound: tail,
                            terms: i,
                        },
                        omitted: tail,
                    }));
                }
                if i >= MAX_TERMS {
                    return Err(Error::PrecisionInsufficient {
                        residual: tail / acc.value(),
                        limit: rel_tol,
                    });
                }
            }
        }
    }
}

fn rel_tol(ctx: &PrecisionContext) -> f64 {
    ctx.truncation_eps().clamp(1e-14, 1e-11)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaSums {
    /// Σ ρ_i^{−2}; `None` if divergent.
    pub sigma_2: Option<Certified<f64>>,
    /// Σ ρ_i^{−2/3}; `None` if divergent.
    pub sigma_23: Option<Certified<f64>>,
}

pub fn sigma_sums(law: &RateLaw, ctx: &PrecisionContext) -> Result<SigmaSums> {
    let tol = rel_tol(ctx);
    Ok(SigmaSums {
        sigma_2: power_sum(law, 2.0, tol)?.map(|t| t.sum),
        sigma_23: power_sum(law, 2.0 / 3.0, tol)?.map(|t| t.sum),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFamily {
    /// The simulated rates ρ_1..ρ_I.
    pub rates: Vec<f64>,
    pub c1: f64,
    pub sigma_2: Certified<f64>,
    pub sigma_23: Certified<f64>,
    /// Upper bound on Σ_{i>I} E X_i for the dropped variables.
    pub omitted_mean: f64,
}

impl TailFamily {
    pub fn new(law: &RateLaw, c1: f64, ctx: &PrecisionContext) -> Result<Self> {
        Self::with_mean_tolerance(law, c1, 0.0, ctx)
    }

    /// Simulates only the leading variables, dropping a tail whose total
    /// mean is at most `mean_tol`. The σ-sums stay certified in full.
    pub fn with_mean_tolerance(law: &RateLaw, c1: f64, mean_tol: f64, ctx: &PrecisionContext) -> Result<Self> {
        if !(c1 > 0.0 && c1.is_finite()) {
            return domain(format!("C_1 = {c1} must be positive"));
        }
        let tol = rel_tol(ctx);
        let (Some(s2), Some(s23)) = (power_sum(law, 2.0, tol)?, power_sum(law, 2.0 / 3.0, tol)?) else {
            return domain("σ_2 or σ_{2/3} diverges for this rate law");
        };
        let mut terms = s2.sum.terms.max(s23.sum.terms);
        let mut omitted_mean = mean_factor(c1) * s23.omitted;
        if mean_tol > omitted_mean {
            terms = (1..=terms)
                .find(|&i| mean_factor(c1) * omitted_mass(law, 2.0 / 3.0, i) <= mean_tol)
                .unwrap_or(terms);
            omitted_mean = mean_factor(c1) * omitted_mass(law, 2.0 / 3.0, terms);
        }
        let rates = (1..=terms).map(|i| law.rate(i)).collect();
        Ok(Self {
            rates,
            c1,
            sigma_2: s2.sum,
            sigma_23: s23.sum,
            omitted_mean,
        })
    }

    pub fn single(rho: f64, c1: f64) -> Result<Self> {
        Self::new(&RateLaw::Finite(vec![rho]), c1, &PrecisionContext::double())
    }
}

/// Upper bound on Σ_{i>I} ρ_i^{−p}.
fn omitted_mass(law: &RateLaw, p: f64, terms: usize) -> f64 {
    match law {
        RateLaw::Finite(r) => r.iter().skip(terms).map(|x| x.powf(-p)).sum(),
        RateLaw::Power { exponent } => {
            let s = p * exponent;
            (terms as f64).powf(1.0 - s) / (s - 1.0)
        }
        RateLaw::PowerGeometric { ln_ratio, .. } => {
            (-p * law.ln_rate(terms + 1)).exp() / -(-p * ln_ratio).exp_m1()
        }
    }
}

/// E X ≤ mean_factor(C_1) ρ^{−2/3}.
fn mean_factor(c1: f64) -> f64 {
    c1.ln().max(0.0).powf(2.0 / 3.0) + c1 * statrs::function::gamma::gamma(5.0 / 3.0)
}

// ---------------------------------------------------------------------------
// The law P(X ≥ t) = min(1, C_1 e^{−ρ t^{3/2}}), t > 0.

pub fn weibull_tail(t: f64, c1: f64, rho: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    (c1.ln() - rho * t.powf(1.5)).exp().min(1.0)
}

/// Inverse-CDF draw.
#[inline]
pub fn sample_weibull(c1: f64, rho: f64, rng: &mut RngStream) -> f64 {
    let e = c1.ln() - rng.uniform().ln();
    if e <= 0.0 {
        0.0
    } else {
        (e / rho).powf(2.0 / 3.0)
    }
}

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// log E[e^{λX}] = log(e^{λ t_0} + λ C_1 ∫_{t_0}^∞ e^{λx − ρx^{3/2}} dx),
/// where t_0 = (log⁺C_1/ρ)^{2/3}.
pub fn log_mgf(lambda: f64, c1: f64, rho: f64) -> Result<f64> {
    if !(lambda >= 0.0 && c1 > 0.0 && rho > 0.0) {
        return domain(format!("need λ ≥ 0, C_1 > 0, ρ > 0; got {lambda}, {c1}, {rho}"));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let t0 = (c1.ln().max(0.0) / rho).powf(2.0 / 3.0);
    let h = |x: f64| lambda * x - rho * x.powf(1.5);
    let peak = (2.0 * lambda / (3.0 * rho)).powi(2).max(t0);
    let hp = h(peak);
    let cut = 60.0;
    // width scale from the curvature at the peak
    let mut step = (1.0 / (0.75 * rho / peak.max(1e-300).sqrt())).sqrt().min(peak.max(1.0));
    let mut right = peak + step;
    while h(right) > hp - cut {
        step *= 2.0;
        right = peak + step;
    }
    let mut left = t0;
    if peak > t0 {
        let mut d = (peak - t0).min(1.0);
        while peak - d > t0 && h(peak - d) > hp - cut {
            d *= 2.0;
        }
        left = (peak - d).max(t0);
    }
    let (gx, gw) = gauss_legendre(16);
    let mut acc = CompensatedSum::new(0.0);
    // x = u² removes the x^{3/2} cusp at the origin
    let mut integrate = |a: f64, b: f64| {
        let (a, b) = (a.sqrt(), b.sqrt());
        let panels = 64;
        let width = (b - a) / panels as f64;
        for j in 0..panels {
            let (pa, pb) = (a + j as f64 * width, a + (j + 1) as f64 * width);
            let (mid, half) = (0.5 * (pa + pb), 0.5 * (pb - pa));
            for (x, w) in gx.iter().zip(&gw) {
                let u = mid + half * x;
                acc.add(w * half * 2.0 * u * (h(u * u) - hp).exp());
            }
        }
    };
    if peak > left {
        integrate(left, peak);
    }
    integrate(peak, right);
    let log_integral = acc.value().ln() + hp;
    Ok(log_add_exp(lambda * t0, lambda.ln() + c1.ln() + log_integral))
}

/// C_1(λρ^{−2/3} + λ³ρ^{−2}).
pub fn mgf_bound_unit(lambda: f64, c1: f64, rho: f64) -> f64 {
    c1 * (lambda * rho.powf(-2.0 / 3.0) + lambda.powi(3) / (rho * rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MgfRow {
    pub c1: f64,
    pub rho: f64,
    pub lambda: f64,
    pub log_mgf: f64,
    pub unit: f64,
    /// log_mgf / unit.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MgfReport {
    pub rows: Vec<MgfRow>,
    /// (C_1, ρ, Ĉ) with Ĉ the least constant valid on that λ grid.
    pub per_law: Vec<(f64, f64, f64)>,
    /// One constant for the whole grid.
    pub c_hat: f64,
    /// max/min of the per-law constants.
    pub spread: f64,
}

impl MgfReport {
    pub fn holds(&self) -> bool {
        self.c_hat.is_finite() && self.rows.iter().all(|r| r.log_mgf <= self.c_hat * r.unit * (1.0 + 1e-12))
    }
}

pub fn mgf_bound_check(c1_grid: &[f64], rho_grid: &[f64], lambda_grid: &[f64]) -> Result<MgfReport> {
    let mut rows = Vec::new();
    let mut per_law = Vec::new();
    for &c1 in c1_grid {
        for &rho in rho_grid {
            let mut c = 0.0f64;
            for &lambda in lambda_grid.iter().filter(|&&l| l > 0.0) {
                let log_mgf = log_mgf(lambda, c1, rho)?;
                let unit = mgf_bound_unit(lambda, c1, rho);
                let ratio = log_mgf / unit;
                c = c.max(ratio);
                rows.push(MgfRow {
                    c1,
                    rho,
                    lambda,
                    log_mgf,
                    unit,
                    ratio,
                });
            }
            per_law.push((c1, rho, c));
        }
    }
    let c_hat = per_law.iter().map(|p| p.2).fold(0.0, f64::max);
    let c_min = per_law.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    Ok(MgfReport {
        rows,
        per_law,
        c_hat,
        spread: c_hat / c_min,
    })
}

pub fn mgf_rows_to_csv(rows: &[MgfRow]) -> String {
    let mut s = String::from("c1,rho,lambda,log_mgf,bound_unit,ratio\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{},{}\n", r.c1, r.rho, r.lambda, r.log_mgf, r.unit, r.ratio));
    }
    s
}

// ---------------------------------------------------------------------------
// Tails of Σ X_i.

pub fn sample_sum(family: &TailFamily, rng: &mut RngStream) -> f64 {
    family.rates.iter().map(|&r| sample_weibull(family.c1, r, rng)).sum()
}

pub fn simulate_sums(family: &TailFamily, samples: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..samples).map(|_| sample_sum(family, rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SumTailRow {
    pub t: f64,
    pub count: u64,
    pub p_hat: f64,
    pub interval: Interval,
    /// P̂(S ≥ t + shift).
    pub shifted_p_hat: f64,
    pub shifted_interval: Interval,
    /// exp(−ĉ σ_2^{−1/2} t^{3/2}).
    pub bound: f64,
    /// min(1, C_1 e^{−ρ_1 t^{3/2}}).
    pub first_term: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftedFit {
    pub shift: f64,
    pub fit: LinearFit,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SumTailReport {
    pub samples: usize,
    pub terms: usize,
    pub sigma_2: f64,
    pub sigma_23: f64,
    pub rows: Vec<SumTailRow>,
    /// Regression of log(−log P̂(S ≥ t)) on log t over P̂ ∈ [1e−4, 1e−1].
    pub raw_fit: Option<LinearFit>,
    /// The same with S replaced by S − shift, shift fitted.
    pub shifted_fit: Option<ShiftedFit>,
    /// Largest c with P̂_hi(S ≥ t + shift) ≤ exp(−cσ_2^{−1/2}t^{3/2}) on the
    /// grid.
    pub c_hat: f64,
}

pub const WINDOW: (f64, f64) = (1e-4, 1e-1);

struct Survival {
    sorted: Vec<f64>,
}

impl Survival {
    fn new(mut v: Vec<f64>) -> Self {
        v.sort_by(|a, b| a.total_cmp(b));
        Self { sorted: v }
    }

    fn count_ge(&self, x: f64) -> u64 {
        (self.sorted.len() - self.sorted.partition_point(|&s| s < x)) as u64
    }

    fn n(&self) -> u64 {
        self.sorted.len() as u64
    }
}

/// Thresholds x_j with P̂(S ≥ x_j) at log-spaced levels across the window.
fn window_points(surv: &Survival, levels: usize) -> Vec<(f64, f64)> {
    let n = surv.n();
    let (lo, hi) = (WINDOW.0.ln(), WINDOW.1.ln());
    let mut out: Vec<(f64, f64)> = Vec::new();
    for j in 0..levels {
        let p = (hi + (lo - hi) * j as f64 / (levels - 1) as f64).exp();
        let want = (p * n as f64).ceil() as usize;
        if want < 10 {
            continue;
        }
        let x = surv.sorted[surv.sorted.len() - want];
        let ph = surv.count_ge(x) as f64 / n as f64;
        if ph <= WINDOW.1 && ph >= WINDOW.0 && out.last().is_none_or(|l| l.0 < x) {
            out.push((x, ph));
        }
    }
    out
}

/// Delta-method weight of log(−log P̂) from n samples.
fn weight(p: f64, n: u64) -> f64 {
    let lp = p.ln();
    n as f64 * p * lp * lp / (1.0 - p)
}

fn weighted_fit(points: &[(f64, f64)], shift: f64, n: u64) -> LinearFit {
    let pts: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(x, p)| ((x - shift).ln(), (-p.ln()).ln(), weight(p, n)))
        .collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y, w) in &pts {
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
        syy += w * (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared: if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 },
    }
}

fn rss(points: &[(f64, f64)], shift: f64, n: u64) -> f64 {
    let f = weighted_fit(points, shift, n);
    points
        .iter()
        .map(|&(x, p)| {
            let r = (-p.ln()).ln() - f.intercept - f.slope * (x - shift).ln();
            weight(p, n) * r * r
        })
        .sum()
}

/// Golden-section refinement of a coarse scan for the shift minimising the
/// regression residual.
fn fit_shift(points: &[(f64, f64)], n: u64) -> Option<ShiftedFit> {
    if points.len() < 4 {
        return None;
    }
    let upper = points[0].0 * (1.0 - 1e-9);
    if upper <= 0.0 {
        return None;
    }
    let grid = 200;
    let at = |j: usize| upper * j as f64 / grid as f64;
    let best = (0..grid)
        .min_by(|&a, &b| rss(points, at(a), n).total_cmp(&rss(points, at(b), n)))
        .expect("non-empty grid");
    let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(grid - 1)));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    for _ in 0..100 {
        if rss(points, c, n) < rss(points, d, n) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    let shift = 0.5 * (a + b);
    Some(ShiftedFit {
        shift,
        fit: weighted_fit(points, shift, n),
        points: points.len(),
    })
}

pub fn summarize_sum_tail(family: &TailFamily, sums: Vec<f64>, t_grid: &[f64], z: f64) -> Result<SumTailReport> {
    if sums.is_empty() {
        return domain("no samples");
    }
    let samples = sums.len();
    let surv = Survival::new(sums);
    let n = surv.n();
    let s2 = family.sigma_2.value;
    let raw_points: Vec<(f64, f64)> = t_grid
        .iter()
        .filter(|&&t| t > 0.0)
        .map(|&t| (t, surv.count_ge(t) as f64 / n as f64))
        .filter(|&(_, p)| p >= WINDOW.0 && p <= WINDOW.1)
        .collect();
    let raw_fit = (raw_points.len() >= 2).then(|| weighted_fit(&raw_points, 0.0, n));
    let shifted = fit_shift(&window_points(&surv, 16), n);
    let shift = shifted.map_or(0.0, |s| s.shift);

    let mut rows = Vec::with_capacity(t_grid.len());
    let mut c_hat = f64::INFINITY;
    for &t in t_grid {
        let count = surv.count_ge(t);
        let shifted_count = surv.count_ge(t + shift);
        let shifted_interval = wilson_interval(shifted_count, n, z);
        if t > 0.0 && shifted_count > 0 {
            c_hat = c_hat.min(-shifted_interval.hi.ln() * s2.sqrt() / t.powf(1.5));
        }
        rows.push(SumTailRow {
            t,
            count,
            p_hat: count as f64 / n as f64,
            interval: wilson_interval(count, n, z),
            shifted_p_hat: shifted_count as f64 / n as f64,
            shifted_interval,
            bound: 0.0,
            first_term: weibull_tail(t, family.c1, family.rates[0]),
        });
    }
    for r in &mut rows {
        r.bound = (-c_hat * r.t.max(0.0).powf(1.5) / s2.sqrt()).exp();
    }
    Ok(SumTailReport {
        samples,
        terms: family.rates.len(),
        sigma_2: s2,
        sigma_23: family.sigma_23.value,
        rows,
        raw_fit,
        shifted_fit: shifted,
        c_hat,
    })
}

pub fn sum_tail_check(
    family: &TailFamily,
    t_grid: &[f64],
    samples: usize,
    rng: &mut RngStream,
    z: f64,
) -> Result<SumTailReport> {
    summarize_sum_tail(family, simulate_sums(family, samples, rng), t_grid, z)
}

pub fn sum_tail_rows_to_csv(rows: &[SumTailRow]) -> String {
    let mut s = String::from("t,count,p_hat,p_lo,p_hi,shifted_p_hat,shifted_p_lo,shifted_p_hi,bound,first_term\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.t,
            r.count,
            r.p_hat,
            r.interval.lo,
            r.interval.hi,
            r.shifted_p_hat,
            r.shifted_interval.lo,
            r.shifted_interval.hi,
            r.bound,
            r.first_term
        ));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsSlope {
    /// (ε, σ_{2/3}, σ_{2/3}·ε / log ε^{−1}).
    pub rows: Vec<(f64, f64, f64)>,
    /// Slope of log of the normalised column against log ε.
    pub slope: f64,
}

/// σ_{2/3} of the ε-family against ε^{−1} log ε^{−1}.
pub fn eps_family_slope(eps_grid: &[f64], ctx: &PrecisionContext) -> Result<EpsSlope> {
    let mut rows = Vec::new();
    for &eps in eps_grid {
        if !(eps > 0.0 && eps < 1.0) {
            return domain(format!("ε = {eps} must lie in (0, 1)"));
        }
        let s = sigma_sums(&RateLaw::eps_family(eps), ctx)?
            .sigma_23
            .expect("geometric factor makes the series converge")
            .value;
        rows.push((eps, s, s * eps / -eps.ln()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (r.0.ln(), r.2.ln())).unzip();
    Ok(EpsSlope {
        slope: linear_fit(&xs, &ys).slope,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma;

    #[test]
    fn sigma_examples() {
        let ctx = PrecisionContext::double();
        let s = sigma_sums(&RateLaw::Finite(vec![1.0]), &ctx).unwrap();
        assert_eq!(s.sigma_2.unwrap().value, 1.0);
        assert_eq!(s.sigma_23.unwrap().value, 1.0);
        let s = sigma_sums(&RateLaw::Power { exponent: 1.5 }, &ctx).unwrap();
        let z3 = s.sigma_2.unwrap();
        assert!((z3.value - 1.2020569031595942).abs() < 1e-12, "{}", z3.value);
        assert!(z3.tail_bound < 1e-10 * z3.value);
        assert!(s.sigma_23.is_none());
        // ζ(2) through ρ_i = i
        let s = sigma_sums(&RateLaw::Power { exponent: 1.0 }, &ctx).unwrap();
        let z2 = s.sigma_2.unwrap().value;
        assert!((z2 - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-11);
        let g = sigma_sums(&RateLaw::geometric_family(), &ctx).unwrap();
        let g23 = g.sigma_23.unwrap();
        let direct: f64 = (1..200).map(|i| (i as f64).powf(-1.0) * 2f64.powf(-i as f64 / 3.0)).sum();
        assert!((g23.value - direct).abs() < 1e-12);
        assert!(g23.tail_bound < 1e-10 * g23.value);
        assert!(sigma_sums(&RateLaw::Finite(vec![1.0, -2.0]), &ctx).is_err());
        assert!(TailFamily::new(&RateLaw::Power { exponent: 1.5 }, 1.0, &ctx).is_err());
    }

    #[test]
    fn eps_family_order() {
        let ctx = PrecisionContext::double();
        let r = eps_family_slope(&[1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4], &ctx).unwrap();
        assert!(r.slope.abs() < 0.1, "{}", r.slope);
        for &(eps, _, norm) in &r.rows {
            // Σ i^{−1}e^{−εi/3} = −log(1 − e^{−ε/3})
            let exact = -(-(-eps / 3.0).exp_m1()).ln() / -eps.ln();
            assert!((norm - exact).abs() < 1e-9 * exact, "{eps}: {norm} vs {exact}");
            assert!(norm > 0.5 && norm < 2.0);
        }
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let (x, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for k in 0..32 {
            let q: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(k)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k + 1) as f64 };
            assert!((q - exact).abs() < 1e-13, "k = {k}");
        }
    }

    #[test]
    fn mgf_matches_moment_series() {
        for &(lambda, rho) in &[(0.01f64, 1.0f64), (0.5, 1.0), (2.0, 1.0), (1.0, 10.0), (0.3, 0.1)] {
            // E X^k = Γ(1 + 2k/3) ρ^{−2k/3} for C_1 = 1
            let mut s = 1.0;
            let mut term_log = 0.0f64;
            for k in 1..200 {
                term_log += (lambda * rho.powf(-2.0 / 3.0)).ln() - (k as f64).ln();
                s += (term_log + statrs::function::gamma::ln_gamma(1.0 + 2.0 * k as f64 / 3.0)).exp();
            }
            let m = log_mgf(lambda, 1.0, rho).unwrap();
            assert!((m - s.ln()).abs() < 1e-11 * s.ln().max(1e-3), "λ={lambda} ρ={rho}: {m} vs {}", s.ln());
        }
        assert_eq!(log_mgf(0.0, 2.0, 1.0).unwrap(), 0.0);
        let small = log_mgf(1e-9, 1.0, 1.0).unwrap();
        assert!((small / 1e-9 - gamma(5.0 / 3.0)).abs() < 1e-6);
        assert!(log_mgf(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn mgf_with_prefactor_against_monte_carlo() {
        let mut rng = RngStream::new(11, 0);
        for &c1 in &[0.5, 3.0] {
            let (lambda, rho) = (0.7, 1.3);
            let n = 400_000;
            let mean: f64 = (0..n).map(|_| (lambda * sample_weibull(c1, rho, &mut rng)).exp()).sum::<f64>() / n as f64;
            let m = log_mgf(lambda, c1, rho).unwrap().exp();
            assert!((mean / m - 1.0).abs() < 0.01, "C_1 = {c1}: {mean} vs {m}");
        }
    }

    #[test]
    fn mgf_scaling_invariance() {
        for &s in &[0.1, 3.0, 20.0] {
            for &(lambda, c1, rho) in &[(0.4, 1.0, 1.0), (5.0, 2.0, 0.1), (0.01, 0.5, 10.0)] {
                let a = log_mgf(lambda, c1, rho).unwrap();
                let b = log_mgf(s * lambda, c1, s.powf(1.5) * rho).unwrap();
                assert!((a - b).abs() < 1e-10 * a.abs().max(1e-12), "{a} vs {b}");
                let ua = mgf_bound_unit(lambda, c1, rho);
                let ub = mgf_bound_unit(s * lambda, c1, s.powf(1.5) * rho);
                assert!((ua - ub).abs() < 1e-12 * ua);
            }
        }
    }

    #[test]
    fn mgf_bound_uniform_constant() {
        let lambdas: Vec<f64> = (-30..=20).map(|j| 10f64.powf(j as f64 / 10.0)).collect();
        let r = mgf_bound_check(&[1.0], &[0.1, 1.0, 10.0], &lambdas).unwrap();
        assert!(r.holds());
        assert!(r.spread <= 2.0, "{:?}", r.per_law);
        // small λ: the ratio tends to E X ρ^{2/3}/C_1 = Γ(5/3)
        assert!(r.c_hat >= gamma(5.0 / 3.0) * 0.99);
    }

    #[test]
    fn weibull_sampler_tail() {
        let mut rng = RngStream::new(12, 0);
        let (c1, rho) = (2.0, 0.8);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_weibull(c1, rho, &mut rng)).collect();
        let t0 = (c1.ln() / rho).powf(2.0 / 3.0);
        assert!(xs.iter().all(|&x| x >= t0 - 1e-12));
        for &t in &[1.0, 1.5, 2.5] {
            let k = xs.iter().filter(|&&x| x >= t).count() as u64;
            let iv = wilson_interval(k, n, 4.0);
            assert!(iv.contains(weibull_tail(t, c1, rho)), "{t}");
        }
        assert_eq!(weibull_tail(0.0, 0.5, 1.0), 1.0);
        let mut rng = RngStream::new(12, 1);
        let zeros = (0..n).filter(|_| sample_weibull(0.25, 1.0, &mut rng) == 0.0).count() as u64;
        assert!(wilson_interval(zeros, n, 4.0).contains(0.75));
    }

    #[test]
    fn single_variable_slope() {
        let fam = TailFamily::single(1.0, 1.0).unwrap();
        let t_grid: Vec<f64> = (0..=40).map(|j| j as f64 * 0.1).collect();
        let mut rng = RngStream::new(13, 0);
        let r = sum_tail_check(&fam, &t_grid, 400_000, &mut rng, 3.0).unwrap();
        assert_eq!(r.rows[0].p_hat, 1.0);
        let raw = r.raw_fit.unwrap();
        assert!((raw.slope - 1.5).abs() < 0.1, "{raw:?}");
        assert!(r.c_hat > 0.0);
        for row in &r.rows {
            assert!(row.interval.lo <= row.interval.hi);
        }
    }

    #[test]
    fn geometric_family_against_first_term() {
        let ctx = PrecisionContext::double();
        let fam = TailFamily::with_mean_tolerance(&RateLaw::geometric_family(), 1.0, 1e-6, &ctx).unwrap();
        let t_grid: Vec<f64> = (0..=45).map(|j| j as f64 * 0.1).collect();
        let mut rng = RngStream::new(14, 0);
        let r = sum_tail_check(&fam, &t_grid, 1_000_000, &mut rng, 3.0).unwrap();
        let shift = r.shifted_fit.unwrap().shift;
        assert!(shift > 0.0);
        for row in r.rows.iter().filter(|r| r.t >= 1.5 && r.shifted_p_hat * 1e6 >= 100.0) {
            assert!(row.interval.hi >= row.first_term);
            assert!(row.shifted_interval.hi >= row.first_term / 3.0, "{row:?}");
            assert!(row.shifted_interval.lo <= row.first_term * 3.0, "{row:?}");
        }
    }

    #[test]
    fn truncated_family_has_small_remainder() {
        let ctx = PrecisionContext::double();
        let fam = TailFamily::new(&RateLaw::geometric_family(), 1.0, &ctx).unwrap();
        assert!(fam.omitted_mean < 1e-9);
        assert!((fam.rates[0] - 2f64.sqrt()).abs() < 1e-14);
        let fam = TailFamily::new(&RateLaw::eps_family(0.5), 1.0, &ctx).unwrap();
        assert!(fam.sigma_23.tail_bound < 1e-10 * fam.sigma_23.value);
        let short = TailFamily::with_mean_tolerance(&RateLaw::eps_family(0.5), 1.0, 1e-6, &ctx).unwrap();
        assert!(short.rates.len() < fam.rates.len());
        assert!(short.omitted_mean <= 1e-6);
        assert_eq!(short.sigma_23, fam.sigma_23);
        assert_eq!(short.rates[..], fam.rates[..short.rates.len()]);
    }
}
