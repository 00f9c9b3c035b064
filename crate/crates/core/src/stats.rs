//! Goodness-of-fit tests, binomial confidence intervals and small
//! regressions used by the verification experiments.
//!
//! KS p-values use the asymptotic Kolmogorov distribution with Stephens'
//! finite-sample correction. For integer-valued data that is conservative.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    /// n for one-sample tests, nm/(n+m) for two-sample tests.
    pub n_eff: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// P(K > λ) for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        s += if j % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sn = n_eff.sqrt();
    kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)
}

/// Sorted copy with run-length counts: (value, count) ascending.
pub fn value_counts(samples: &[u64]) -> Vec<(u64, u64)> {
    let mut v = samples.to_vec();
    v.sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::new();
    for x in v {
        match out.last_mut() {
            Some((y, c)) if *y == x => *c += 1,
            _ => out.push((x, 1)),
        }
    }
    out
}

/// One-sample KS distance of integer data against a CDF F(x) = P(X ≤ x).
/// The supremum over the reals is attained at integer points for both
/// step functions, and just below each jump of the empirical CDF.
pub fn ks_one_sample(samples: &[u64], cdf: impl Fn(u64) -> f64) -> KsResult {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return KsResult {
            statistic: 0.0,
            n_eff: 0.0,
            p_value: 1.0,
        };
    }
    let mut d: f64 = 0.0;
    let mut seen = 0u64;
    let mut prev: Option<u64> = None;
    for (x, c) in value_counts(samples) {
        // just below x: empirical = seen/n, model = F(x - 1)
        let below = if x == 0 { 0.0 } else { cdf(x - 1) };
        d = d.max((seen as f64 / n - below).abs());
        // gap between consecutive observed values: both are flat from prev
        if let Some(p) = prev {
            if x > p + 1 {
                d = d.max((seen as f64 / n - cdf(p)).abs());
            }
        }
        seen += c;
        d = d.max((seen as f64 / n - cdf(x)).abs());
        prev = Some(x);
    }
    KsResult {
        statistic: d,
        n_eff: n,
        p_value: ks_p_value(d, n),
    }
}

pub fn ks_two_sample(a: &[u64], b: &[u64]) -> KsResult {
    if a.is_empty() || b.is_empty() {
        return KsResult {
            statistic: 0.0,
            n_eff: 0.0,
            p_value: 1.0,
        };
    }
    let (ca, cb) = (value_counts(a), value_counts(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0u64, 0u64);
    let mut d: f64 = 0.0;
    while i < ca.len() || j < cb.len() {
        let x = match (ca.get(i), cb.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => unreachable!(),
        };
        if i < ca.len() && ca[i].0 == x {
            fa += ca[i].1;
            i += 1;
        }
        if j < cb.len() && cb[j].0 == x {
            fb += cb[j].1;
            j += 1;
        }
        d = d.max((fa as f64 / na - fb as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    KsResult {
        statistic: d,
        n_eff,
        p_value: ks_p_value(d, n_eff),
    }
}

/// Pearson goodness of fit of value counts against probabilities
/// `probs[0..]` for the values 0, 1, 2, …; all mass beyond the table and
/// every cell whose expected count is below `min_expected` is pooled into
/// its neighbour (scanning from the right).
pub fn chi_square_gof(samples: &[u64], probs: &[f64], min_expected: f64) -> ChiSquareResult {
    let n = samples.len() as f64;
    let mut obs = vec![0f64; probs.len() + 1];
    for &s in samples {
        let idx = (s as usize).min(probs.len());
        obs[idx] += 1.0;
    }
    let mut exp: Vec<f64> = probs.iter().map(|p| p * n).collect();
    let listed: f64 = probs.iter().sum();
    exp.push(((1.0 - listed) * n).max(0.0));
    pooled_chi_square(&obs, &exp, min_expected, 1)
}

fn pooled_chi_square(obs: &[f64], exp: &[f64], min_expected: f64, constraints: usize) -> ChiSquareResult {
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for i in (0..obs.len()).rev() {
        o_acc += obs[i];
        e_acc += exp[i];
        if e_acc >= min_expected {
            cells.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match cells.last_mut() {
            Some(c) => {
                c.0 += o_acc;
                c.1 += e_acc;
            }
            None => cells.push((o_acc, e_acc)),
        }
    }
    let stat: f64 = cells
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e).powi(2) / e } else if o > 0.0 { f64::INFINITY } else { 0.0 })
        .sum();
    let dof = cells.len().saturating_sub(constraints);
    ChiSquareResult {
        statistic: stat,
        dof,
        p_value: chi2_survival(stat, dof),
    }
}

fn chi2_survival(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    if !stat.is_finite() {
        return 0.0;
    }
    let d = ChiSquared::new(dof as f64).expect("positive dof");
    (1.0 - d.cdf(stat)).clamp(0.0, 1.0)
}

/// Pearson test of homogeneity for two integer samples; cells pooled from
/// the right until each has combined count ≥ `min_count`.
pub fn chi_square_two_sample(a: &[u64], b: &[u64], min_count: f64) -> ChiSquareResult {
    let top = a.iter().chain(b).copied().max().unwrap_or(0) as usize;
    let mut ca = vec![0f64; top + 1];
    let mut cb = vec![0f64; top + 1];
    for &x in a {
        ca[x as usize] += 1.0;
    }
    for &x in b {
        cb[x as usize] += 1.0;
    }
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut sa, mut sb) = (0.0, 0.0);
    for i in (0..=top).rev() {
        sa += ca[i];
        sb += cb[i];
        if sa + sb >= min_count {
            cells.push((sa, sb));
            sa = 0.0;
            sb = 0.0;
        }
    }
    if sa + sb > 0.0 {
        if let Some(c) = cells.last_mut() {
            c.0 += sa;
            c.1 += sb;
        } else {
            cells.push((sa, sb));
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let mut stat = 0.0;
    for &(x, y) in &cells {
        let tot = x + y;
        let ea = tot * na / n;
        let eb = tot * nb / n;
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let dof = cells.len().saturating_sub(1);
    ChiSquareResult {
        statistic: stat,
        dof,
        p_value: chi2_survival(stat, dof),
    }
}

/// Two-sided standard normal quantile for confidence level `conf`.
pub fn z_for_confidence(conf: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(0.5 + conf / 2.0)
}

/// Per-test confidence level after a Bonferroni split of `1 - conf` over
/// `m` simultaneous checks.
pub fn bonferroni(conf: f64, m: usize) -> f64 {
    1.0 - (1.0 - conf) / m.max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

pub fn wilson_interval(successes: u64, n: u64, z: f64) -> Interval {
    if n == 0 {
        return Interval { lo: 0.0, hi: 1.0 };
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Interval {
        lo: if successes == 0 { 0.0 } else { (centre - half).max(0.0) },
        hi: if successes == n { 1.0 } else { (centre + half).min(1.0) },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of y on x. NaN fields for fewer than two points.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.len() < 2 {
        return LinearFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            r_squared: f64::NAN,
        };
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared: if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 },
    }
}

/// Least squares slope of y = c·x through the origin.
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> f64 {
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kolmogorov_reference_values() {
        // classical critical values: P(K > 1.358) ≈ 0.05, P(K > 1.628) ≈ 0.01
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn ks_detects_point_mass_mismatch() {
        let xs = vec![0u64; 100];
        let r = ks_one_sample(&xs, |_| 1.0);
        assert_eq!(r.statistic, 0.0);
        let r = ks_one_sample(&xs, |x| if x == 0 { 0.5 } else { 1.0 });
        assert!((r.statistic - 0.5).abs() < 1e-15);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn ks_accepts_true_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<u64> = (0..20_000).map(|_| rng.random_range(0..10u64)).collect();
        let r = ks_one_sample(&xs, |x| ((x + 1).min(10)) as f64 / 10.0);
        assert!(r.p_value > 0.01, "{r:?}");
        let ys: Vec<u64> = (0..20_000).map(|_| rng.random_range(0..10u64)).collect();
        assert!(ks_two_sample(&xs, &ys).p_value > 0.01);
        let zs: Vec<u64> = (0..20_000).map(|_| rng.random_range(0..11u64)).collect();
        assert!(ks_two_sample(&xs, &zs).p_value < 1e-6);
    }

    #[test]
    fn ks_sees_gaps_between_observed_values() {
        // data at 0 and 10 only, model puts half the mass at 5
        let xs: Vec<u64> = [0u64; 50].iter().chain([10u64; 50].iter()).copied().collect();
        let cdf = |x: u64| if x < 5 { 0.25 } else if x < 10 { 0.75 } else { 1.0 };
        assert!((ks_one_sample(&xs, cdf).statistic - 0.25).abs() < 1e-15);
    }

    #[test]
    fn chi_square_pools_and_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<u64> = (0..50_000).map(|_| if rng.random::<f64>() < 0.7 { 0 } else { 1 }).collect();
        let r = chi_square_gof(&xs, &[0.7, 0.3], 5.0);
        assert_eq!(r.dof, 1);
        assert!(r.p_value > 0.001);
        let bad = chi_square_gof(&xs, &[0.6, 0.4], 5.0);
        assert!(bad.p_value < 1e-10);
        let ys: Vec<u64> = (0..50_000).map(|_| if rng.random::<f64>() < 0.7 { 0 } else { 1 }).collect();
        assert!(chi_square_two_sample(&xs, &ys, 10.0).p_value > 0.001);
    }

    #[test]
    fn chi_square_counts_unlisted_mass() {
        let xs = vec![5u64; 100];
        let r = chi_square_gof(&xs, &[0.5, 0.5], 5.0);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn wilson_interval_brackets() {
        let i = wilson_interval(50, 100, 1.96);
        assert!(i.contains(0.5) && i.lo > 0.39 && i.hi < 0.61);
        let z = wilson_interval(0, 1000, 2.576);
        assert_eq!(z.lo, 0.0);
        assert!(z.hi > 0.0 && z.hi < 0.01);
        assert!((z_for_confidence(0.95) - 1.959964).abs() < 1e-5);
        assert!((bonferroni(0.99, 10) - 0.999).abs() < 1e-15);
    }

    #[test]
    fn regression_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.5 * v - 2.0).collect();
        let f = linear_fit(&x, &y);
        assert!((f.slope - 1.5).abs() < 1e-12 && (f.intercept + 2.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!((fit_through_origin(&x, &x.iter().map(|v| 3.0 * v).collect::<Vec<_>>()) - 3.0).abs() < 1e-12);
    }
}
