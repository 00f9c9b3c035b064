//! Geometric last passage percolation: the N×N square, RSK shapes, and the
//! periodic strip (cylinder) whose k-th winding copy carries Geo(u²q^k)
//! weights.

use serde::Serialize;

use crate::error::{domain, Result};
use crate::qspecial::{check_unit, mu_q};
use crate::sampling::{Geometric, RngStream};
use crate::stats::{fit_through_origin, wilson_interval, Interval};

/// Maximal weight of a right/down path from the top-left to the
/// bottom-right corner of a row-major `rows × cols` grid.
pub fn lpp_grid(weights: &[u64], rows: usize, cols: usize) -> u64 {
    assert_eq!(weights.len(), rows * cols);
    if rows == 0 || cols == 0 {
        return 0;
    }
    let mut line = vec![0u64; cols];
    for r in 0..rows {
        let mut left = 0u64;
        for c in 0..cols {
            let v = weights[r * cols + c] + left.max(line[c]);
            line[c] = v;
            left = v;
        }
    }
    line[cols - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SquareEnvironment {
    pub n: usize,
    pub z: f64,
    /// Row-major N×N.
    pub weights: Vec<u64>,
}

impl SquareEnvironment {
    pub fn new(n: usize, z: f64, weights: Vec<u64>) -> Result<Self> {
        if weights.len() != n * n {
            return domain(format!("expected {} weights, got {}", n * n, weights.len()));
        }
        Ok(Self { n, z, weights })
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.weights[i * self.n + j]
    }
}

pub fn square_lpp(env: &SquareEnvironment) -> u64 {
    lpp_grid(&env.weights, env.n, env.n)
}

pub fn sample_square(n: usize, z: f64, rng: &mut RngStream) -> Result<SquareEnvironment> {
    let g = Geometric::new(z)?;
    let weights = (0..n * n).map(|_| g.sample(rng)).collect();
    SquareEnvironment::new(n, z, weights)
}

/// LPP of an i.i.d. Geo(z) square without storing the environment.
pub fn sample_square_lpp(n: usize, g: &Geometric, rng: &mut RngStream, line: &mut Vec<u64>) -> u64 {
    line.clear();
    line.resize(n, 0);
    for _ in 0..n {
        let mut left = 0u64;
        for cell in line.iter_mut() {
            let v = g.sample(rng) + left.max(*cell);
            *cell = v;
            left = v;
        }
    }
    line.last().copied().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct YoungShape {
    pub rows: Vec<u64>,
}

impl YoungShape {
    pub fn size(&self) -> u64 {
        self.rows.iter().sum()
    }

    pub fn first_row(&self) -> u64 {
        self.rows.first().copied().unwrap_or(0)
    }
}

/// Shape of the RSK image of a row-major `rows × cols` nonnegative integer
/// matrix: Schensted row insertion of the column letters of the two-line
/// array, read in lexicographic order.
pub fn rsk_shape(matrix: &[u64], rows: usize, cols: usize) -> YoungShape {
    assert_eq!(matrix.len(), rows * cols);
    let mut tableau: Vec<Vec<usize>> = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            for _ in 0..matrix[i * cols + j] {
                let mut x = j;
                let mut r = 0;
                loop {
                    if r == tableau.len() {
                        tableau.push(vec![x]);
                        break;
                    }
                    let row = &mut tableau[r];
                    let pos = row.partition_point(|&y| y <= x);
                    if pos == row.len() {
                        row.push(x);
                        break;
                    }
                    std::mem::swap(&mut row[pos], &mut x);
                    r += 1;
                }
            }
        }
    }
    YoungShape {
        rows: tableau.iter().map(|r| r.len() as u64).collect(),
    }
}

// ---------------------------------------------------------------------------
// cylinder

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderEnvironment {
    pub n: usize,
    pub t: usize,
    pub u: f64,
    pub q: f64,
    /// Truncation depth K: copies 0..=K are stored.
    pub depth: usize,
    /// `copies[k]` is the row-major N×T grid m_{(i,j);k}.
    pub copies: Vec<Vec<u64>>,
    /// Σ_{k>K} N T u² q^k, a bound on P(some omitted weight is nonzero).
    pub truncation_prob_bound: f64,
}

/// Least K with N T u² q^{K+1} / (1 − q) < eps.
pub fn truncation_depth(n: usize, t: usize, u: f64, q: f64, eps: f64) -> Result<usize> {
    check_unit("q", q)?;
    if !(0.0..1.0).contains(&u) {
        return domain(format!("u = {u} must lie in [0, 1)"));
    }
    if !(eps > 0.0) {
        return domain(format!("truncation eps must be positive, got {eps}"));
    }
    let c = (n * t) as f64 * u * u / (1.0 - q);
    let mut k = 0usize;
    while c * q.powi(k as i32 + 1) >= eps {
        k += 1;
    }
    Ok(k)
}

pub fn sample_cylinder(n: usize, t: usize, u: f64, q: f64, eps: f64, rng: &mut RngStream) -> Result<CylinderEnvironment> {
    let depth = truncation_depth(n, t, u, q, eps)?;
    let mut copies = Vec::with_capacity(depth + 1);
    for k in 0..=depth {
        let g = Geometric::new(u * u * q.powi(k as i32))?;
        copies.push((0..n * t).map(|_| g.sample(rng)).collect());
    }
    Ok(CylinderEnvironment {
        n,
        t,
        u,
        q,
        depth,
        copies,
        truncation_prob_bound: (n * t) as f64 * u * u * q.powi(depth as i32 + 1) / (1.0 - q),
    })
}

impl CylinderEnvironment {
    /// Lifted weight at 0-based lifted coordinates (x, y).
    pub fn lifted(&self, x: usize, y: usize) -> u64 {
        let k = x / self.n + y / self.t;
        if k > self.depth {
            return 0;
        }
        self.copies[k][(x % self.n) * self.t + y % self.t]
    }

    /// Highest copy index holding a nonzero weight.
    pub fn last_nonzero_copy(&self) -> Option<usize> {
        self.copies.iter().rposition(|c| c.iter().any(|&w| w > 0))
    }
}

/// L on the cylinder by DP over the lifted quadrant, from lifted cell (1,1)
/// of copy 0. Blocks past the last nonzero copy carry no weight and a
/// monotone path cannot return from them, so the DP stops there.
pub fn cylinder_lpp(env: &CylinderEnvironment) -> u64 {
    let kmax = match env.last_nonzero_copy() {
        None => return 0,
        Some(k) => k,
    };
    let (n, t) = (env.n, env.t);
    let cols = (kmax + 1) * t;
    let mut line = vec![0u64; cols];
    let mut best = 0u64;
    for x in 0..(kmax + 1) * n {
        let bx = x / n;
        // columns with copy index ≤ kmax in this row of blocks
        let width = (kmax - bx + 1) * t;
        let mut left = 0u64;
        for (y, cell) in line.iter_mut().enumerate().take(width) {
            let k = bx + y / t;
            let w = env.copies[k][(x % n) * t + y % t];
            let v = w + left.max(*cell);
            *cell = v;
            left = v;
        }
        best = best.max(left);
        best = best.max(line[..width].iter().copied().max().unwrap_or(0));
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    /// LPP of each diagonal block (copy 2i), i = 0, 1, ….
    pub terms: Vec<u64>,
    pub lower: u64,
    pub l: u64,
}

/// Σ_i of the LPP values of the diagonal blocks [iN+1,(i+1)N]×[iT+1,(i+1)T]
/// together with the cylinder value L; `lower ≤ L` always.
pub fn diagonal_decomposition_bound(env: &CylinderEnvironment) -> Decomposition {
    let terms: Vec<u64> = (0..=env.depth / 2)
        .map(|i| lpp_grid(&env.copies[2 * i], env.n, env.t))
        .collect();
    Decomposition {
        lower: terms.iter().sum(),
        l: cylinder_lpp(env),
        terms,
    }
}

// ---------------------------------------------------------------------------
// uniform lower tail of T_N

/// (μ_q − 1)N − x q^{1/6}/(1−q) N^{1/3}.
pub fn lower_tail_threshold(n: usize, q: f64, x: f64) -> Result<f64> {
    let nf = n as f64;
    Ok((mu_q(q)? - 1.0) * nf - x * q.powf(1.0 / 6.0) / (1.0 - q) * nf.cbrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailPoint {
    pub x: f64,
    pub threshold: f64,
    pub count: u64,
    pub p_hat: f64,
    pub interval: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerTailReport {
    pub n: usize,
    pub q: f64,
    pub samples: u64,
    pub points: Vec<TailPoint>,
    /// Least squares c in −log p̂ ≈ c x^{3/2}.
    pub c_hat_fit: f64,
    /// min over x of −log(upper interval end)/x^{3/2}.
    pub c_hat_certified: f64,
    /// Empirical tail nonincreasing in x.
    pub monotone: bool,
}

/// Tail estimates P(T_N ≤ threshold(x)) from sampled LPP values, with
/// intervals at normal quantile `z`.
pub fn summarize_lower_tail(values: &[u64], n: usize, q: f64, x_grid: &[f64], z: f64) -> Result<LowerTailReport> {
    let samples = values.len() as u64;
    let mut points = Vec::new();
    for &x in x_grid {
        let thr = lower_tail_threshold(n, q, x)?;
        let count = values.iter().filter(|&&v| (v as f64) <= thr).count() as u64;
        points.push(TailPoint {
            x,
            threshold: thr,
            count,
            p_hat: count as f64 / samples.max(1) as f64,
            interval: wilson_interval(count, samples, z),
        });
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut certified = f64::INFINITY;
    for p in &points {
        if p.x <= 0.0 {
            continue;
        }
        let s = p.x.powf(1.5);
        if p.count > 0 {
            xs.push(s);
            ys.push(-p.p_hat.ln());
        }
        certified = certified.min(-p.interval.hi.ln() / s);
    }
    let monotone = points.windows(2).all(|w| w[0].x > w[1].x || w[0].count >= w[1].count);
    Ok(LowerTailReport {
        n,
        q,
        samples,
        c_hat_fit: if xs.is_empty() { f64::NAN } else { fit_through_origin(&xs, &ys) },
        c_hat_certified: if certified.is_finite() { certified.max(0.0) } else { f64::NAN },
        points,
        monotone,
    })
}

/// Sequential Monte Carlo version; the harness shards the same sampler.
pub fn uniform_lower_tail_check(
    n: usize,
    q: f64,
    x_grid: &[f64],
    samples: usize,
    rng: &mut RngStream,
    z: f64,
) -> Result<LowerTailReport> {
    let g = Geometric::new(q)?;
    let mut line = Vec::new();
    let values: Vec<u64> = (0..samples).map(|_| sample_square_lpp(n, &g, rng, &mut line)).collect();
    summarize_lower_tail(&values, n, q, x_grid, z)
}
