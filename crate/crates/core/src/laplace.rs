//! Laplace-method quantities for the sum
//! S = Σ_{i=1}^{k−1} g(i/k) exp(k f(i/k)), with
//! f(x) = x log q^{−1} + 2H(x) + (k/N)(1 − x) and g(x) = (x(1−x))^{−1}.

use serde::Serialize;

use crate::error::{domain, Result};
use crate::precision::Certified;
use crate::qspecial::{check_unit, entropy};
use crate::real::CompensatedSum;
use crate::stats::linear_fit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceProfile {
    pub k: usize,
    pub n: usize,
    pub q: f64,
    /// √q e^{k/(2N)}.
    pub s: f64,
    pub x0: f64,
    pub f_prime_x0: f64,
    /// f''(x0) = −2(1+s)²/s.
    pub curvature: f64,
    /// −(1+s)²/s, the closed form without the factor 2 from 2H.
    pub curvature_as_stated: f64,
}

impl LaplaceProfile {
    pub fn f(&self, x: f64) -> f64 {
        x * -self.q.ln() + 2.0 * entropy(x) + self.k as f64 / self.n as f64 * (1.0 - x)
    }

    pub fn f_prime(&self, x: f64) -> f64 {
        -self.q.ln() + 2.0 * ((1.0 - x) / x).ln() - self.k as f64 / self.n as f64
    }

    pub fn f_second(&self, x: f64) -> f64 {
        -2.0 / (x * (1.0 - x))
    }

    pub fn g(&self, x: f64) -> f64 {
        1.0 / (x * (1.0 - x))
    }
}

fn check_args(k: usize, n: usize, q: f64) -> Result<()> {
    check_unit("q", q)?;
    if k < 2 || n == 0 {
        return domain(format!("need k ≥ 2 and N ≥ 1, got k = {k}, N = {n}"));
    }
    Ok(())
}

pub fn profile(k: usize, n: usize, q: f64) -> Result<LaplaceProfile> {
    check_args(k, n, q)?;
    let s = q.sqrt() * (k as f64 / (2.0 * n as f64)).exp();
    let x0 = 1.0 / (1.0 + s);
    let mut p = LaplaceProfile {
        k,
        n,
        q,
        s,
        x0,
        f_prime_x0: 0.0,
        curvature: -2.0 * (1.0 + s).powi(2) / s,
        curvature_as_stated: -(1.0 + s).powi(2) / s,
    };
    p.f_prime_x0 = p.f_prime(x0);
    Ok(p)
}

fn log_terms(k: usize, n: usize, q: f64) -> Result<Vec<f64>> {
    let p = profile(k, n, q)?;
    Ok((1..k)
        .map(|i| {
            let x = i as f64 / k as f64;
            p.g(x).ln() + k as f64 * p.f(x)
        })
        .collect())
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let top = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    let mut acc = CompensatedSum::new(0.0);
    for t in terms {
        acc.add((t - top).exp());
    }
    top + acc.value().ln()
}

/// log S, summed from the largest term outwards.
pub fn sum_s(k: usize, n: usize, q: f64) -> Result<f64> {
    let terms = log_terms(k, n, q)?;
    Ok(log_sum_exp(terms.iter().copied()))
}

/// log S with the terms visited in the given order (for reproducibility
/// checks).
pub fn sum_s_ordered(k: usize, n: usize, q: f64, order: &[usize]) -> Result<f64> {
    let terms = log_terms(k, n, q)?;
    if order.len() != terms.len() || order.iter().any(|&i| i >= terms.len()) {
        return domain("order must be a permutation of 0..k−1");
    }
    Ok(log_sum_exp(order.iter().map(|&i| terms[i])))
}

/// log of q^{−1/4} k^{1/2} ((1 + √q e^{k/(2N)})²/q)^k.
pub fn log_reference(k: usize, n: usize, q: f64) -> Result<f64> {
    let p = profile(k, n, q)?;
    let kf = k as f64;
    Ok(-0.25 * q.ln() + 0.5 * kf.ln() + kf * (2.0 * (1.0 + p.s).ln() - q.ln()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SRow {
    pub k: usize,
    pub n: usize,
    pub q: f64,
    pub log_s: f64,
    pub log_reference: f64,
    pub log_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SReport {
    pub rows: Vec<SRow>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Per q: slope of log-ratio against log k.
    pub slopes: Vec<(f64, f64)>,
}

/// Ratio of S to the Laplace reference over the grid, restricted to
/// q ≥ k^{−2} and k ≤ N.
pub fn bound_check_s(k_grid: &[usize], n_mult: &[usize], q_grid: &[f64]) -> Result<SReport> {
    let mut rows = Vec::new();
    for &q in q_grid {
        for &k in k_grid {
            if q < 1.0 / (k * k) as f64 {
                continue;
            }
            for &m in n_mult {
                let n = m * k;
                let log_s = sum_s(k, n, q)?;
                let log_ref = log_reference(k, n, q)?;
                rows.push(SRow {
                    k,
                    n,
                    q,
                    log_s,
                    log_reference: log_ref,
                    log_ratio: log_s - log_ref,
                });
            }
        }
    }
    let min_ratio = rows.iter().map(|r| r.log_ratio).fold(f64::INFINITY, f64::min).exp();
    let max_ratio = rows.iter().map(|r| r.log_ratio).fold(f64::NEG_INFINITY, f64::max).exp();
    let slopes = q_grid
        .iter()
        .filter_map(|&q| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.q == q)
                .map(|r| ((r.k as f64).ln(), r.log_ratio))
                .unzip();
            (xs.len() >= 2).then(|| (q, linear_fit(&xs, &ys).slope))
        })
        .collect();
    Ok(SReport {
        rows,
        min_ratio,
        max_ratio,
        slopes,
    })
}

pub fn s_rows_to_csv(rows: &[SRow]) -> String {
    let mut s = String::from("k,n,q,log_s,log_reference,log_ratio\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{},{}\n", r.k, r.n, r.q, r.log_s, r.log_reference, r.log_ratio));
    }
    s
}

/// Σ_{i∈Z} e^{−γ i²}; the certificate bounds both omitted tails.
pub fn theta_sum(gamma: f64, eps: f64) -> Result<Certified<f64>> {
    if !(gamma > 0.0) {
        return domain(format!("γ = {gamma} must be positive"));
    }
    let mut acc = CompensatedSum::new(0.0);
    acc.add(1.0);
    let mut i = 0u64;
    loop {
        i += 1;
        let fi = i as f64;
        acc.add(2.0 * (-gamma * fi * fi).exp());
        // Σ_{j>i} e^{−γj²} ≤ e^{−γ(i+1)²} / (1 − e^{−2γ(i+1)})
        let next = fi + 1.0;
        let tail = 2.0 * (-gamma * next * next).exp() / -(-2.0 * gamma * next).exp_m1();
        if tail <= eps {
            return Ok(Certified {
                value: acc.value(),
                tail_bound: tail,
                terms: 2 * i as usize + 1,
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaReport {
    /// (γ, Σ, Σ·γ^{1/2}).
    pub rows: Vec<(f64, f64, f64)>,
    /// Least C with C^{−1}γ^{−1/2} ≤ Σ ≤ Cγ^{−1/2} on the grid.
    pub fitted_c: f64,
}

pub fn theta_sum_check(gamma_grid: &[f64], m: f64) -> Result<ThetaReport> {
    let mut rows = Vec::new();
    let mut c = 1.0f64;
    for &g in gamma_grid.iter().filter(|&&g| g > 0.0 && g <= m) {
        let s = theta_sum(g, 1e-15)?.value;
        let r = s * g.sqrt();
        c = c.max(r).max(1.0 / r);
        rows.push((g, s, r));
    }
    Ok(ThetaReport { rows, fitted_c: c })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_stationary_and_concave() {
        for &q in &[0.05, 0.25, 0.5, 0.9] {
            for &(k, n) in &[(10, 10), (10, 50), (100, 150), (200, 1000)] {
                let p = profile(k, n, q).unwrap();
                assert!(p.x0 > 0.0 && p.x0 < 1.0);
                assert!(p.f_prime_x0.abs() < 1e-10, "{}", p.f_prime_x0);
                assert!(p.curvature < 0.0);
                assert!((p.f_second(p.x0) - p.curvature).abs() < 1e-10 * p.curvature.abs());
                assert!((p.curvature - 2.0 * p.curvature_as_stated).abs() < 1e-12 * p.curvature.abs());
                // finite differences of f
                let h = 1e-4;
                let fd = (p.f(p.x0 + h) - 2.0 * p.f(p.x0) + p.f(p.x0 - h)) / (h * h);
                assert!((fd - p.curvature).abs() < 1e-4 * p.curvature.abs(), "{fd} vs {}", p.curvature);
            }
        }
    }

    #[test]
    fn x0_limit_and_argmax() {
        let p = profile(2, 1_000_000_000, 0.25).unwrap();
        assert!((p.x0 - 2.0 / 3.0).abs() < 1e-9);
        for &q in &[0.1, 0.6] {
            let p = profile(40, 90, q).unwrap();
            let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
            for i in 1..1_000_000 {
                let x = i as f64 * 1e-6;
                let v = p.f(x);
                if v > best {
                    best = v;
                    arg = x;
                }
            }
            assert!((arg - p.x0).abs() < 1e-5);
        }
    }

    #[test]
    fn s_single_term() {
        let (q, n) = (0.3f64, 7usize);
        let expected = 4.0f64.ln() + 2.0 * (0.5 * -q.ln() + 2.0 * 2f64.ln() + 2.0 / (2.0 * n as f64));
        assert!((sum_s(2, n, q).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn s_order_independent() {
        let k = 150;
        let fwd: Vec<usize> = (0..k - 1).collect();
        let rev: Vec<usize> = (0..k - 1).rev().collect();
        let mut shuffled = fwd.clone();
        shuffled.sort_by_key(|&i| (i * 7919) % (k - 1));
        let a = sum_s(k, 300, 0.4).unwrap();
        for order in [&fwd, &rev, &shuffled] {
            assert!((sum_s_ordered(k, 300, 0.4, order).unwrap() - a).abs() < 1e-10);
        }
        assert!(sum_s_ordered(k, 300, 0.4, &fwd[1..]).is_err());
        assert!(a.is_finite());
    }

    #[test]
    fn s_envelope_small_grid() {
        let r = bound_check_s(&[10, 20, 40, 80], &[1, 3, 5], &[0.1, 0.6, 0.9]).unwrap();
        assert!(r.min_ratio > 1.0 / 50.0 && r.max_ratio < 50.0, "{} {}", r.min_ratio, r.max_ratio);
        // q = 0.05 < 10^{-2} excluded for k = 4 only
        let r = bound_check_s(&[4, 10], &[1], &[0.05]).unwrap();
        assert_eq!(r.rows.len(), 1);
    }

    #[test]
    fn theta_values() {
        let s = theta_sum(1.0, 1e-15).unwrap();
        assert!((s.value - 1.772637).abs() < 1e-5, "{}", s.value);
        // Jacobi theta: Σ e^{−π i²} = π^{1/4}/Γ(3/4)
        let pi = std::f64::consts::PI;
        let t = theta_sum(pi, 1e-16).unwrap().value;
        assert!((t - 1.086434811213308).abs() < 1e-14);
        let small = theta_sum(1e-6, 1e-12).unwrap().value;
        assert!((small * 1e-3 - pi.sqrt()).abs() < 1e-3);
        for &g in &[1e-4, 0.5, 3.0, 50.0] {
            assert!(theta_sum(g, 1e-15).unwrap().value >= 1.0);
        }
        assert!(theta_sum(0.0, 1e-15).is_err());
        let rep = theta_sum_check(&[1e-6, 1e-3, 0.1, 1.0, 10.0, 100.0], 10.0).unwrap();
        assert_eq!(rep.rows.len(), 5);
        assert!(rep.fitted_c.is_finite() && rep.fitted_c >= 1.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(profile(1, 5, 0.5).is_err());
        assert!(profile(5, 0, 0.5).is_err());
        assert!(sum_s(5, 5, 1.0).is_err());
    }
}
