//! Square LPP against the Meixner gap probability, RSK against the LPP
//! recursion, and the trace identity over a grid.

use qpush_core::lpp::{lpp_grid, rsk_shape, sample_square_lpp};
use qpush_core::meixner::{build_basis, gap_probability, gram_matrix_kt, spectrum, trace_identity_check, widom_bound};
use qpush_core::sampling::Geometric;
use qpush_core::stats::{ks_one_sample, wilson_interval};
use qpush_core::PrecisionContext;

use super::{alpha, band_z, fmt_p};
use crate::config::Config;
use crate::parallel::{sharded, streams};
use crate::report::{Outcome, Status};
use crate::HarnessError;

const NAME: &str = "meixner";

pub fn run(config: &Config) -> Result<Outcome, HarnessError> {
    let mut out = gap_identity(config)?;
    out.merge(rsk_consistency(config)?);
    out.merge(trace_grid(config)?);
    Ok(out)
}

fn lpp_samples(seed: u64, base: u64, n: usize, q: f64, samples: usize) -> Result<Vec<u64>, HarnessError> {
    let g = Geometric::new(q)?;
    Ok(sharded(seed, base, samples, |rng, k| {
        let mut line = Vec::new();
        (0..k).map(|_| sample_square_lpp(n, &g, rng, &mut line)).collect()
    }))
}

/// P(λ_1 ≤ v) for v = 0..=top.
fn lambda_cdf(q: f64, n: usize, top: u64, ctx: &PrecisionContext) -> Result<Vec<f64>, HarnessError> {
    let basis = build_basis(q, n, ctx)?;
    (0..=top).map(|v| Ok(gap_probability(&basis, n, v as usize + 1)?)).collect()
}

pub fn gap_identity(config: &Config) -> Result<Outcome, HarnessError> {
    let c = &config.meixner;
    let mut out = Outcome::default();
    let dctx = PrecisionContext::double();
    let tests = 3;

    // N = 1: λ_1 ~ Geo(q), P(λ_1 ≤ v) = 1 − q^{v+1}
    let one = lambda_cdf(c.q, 1, 60, &dctx)?;
    let err = one
        .iter()
        .enumerate()
        .map(|(v, p)| (p - (1.0 - c.q.powi(v as i32 + 1))).abs())
        .fold(0.0, f64::max);
    out.check(NAME, "gap_single_particle_closed_form", err < 1e-12, format!("max error {err:.3e}"));

    if c.samples == 0 {
        out.verdict(NAME, "gap_vs_lpp_ks", Status::Inconclusive, "no samples requested");
    } else {
        let t_n = lpp_samples(config.seed, streams::SQUARE, c.n, c.q, c.samples)?;
        let lambda: Vec<u64> = t_n.iter().map(|&t| t + c.n as u64 - 1).collect();
        let top = *lambda.iter().max().unwrap_or(&0) + 5;
        let cdf = lambda_cdf(c.q, c.n, top, &dctx)?;
        let ks = ks_one_sample(&lambda, |v| cdf[(v as usize).min(cdf.len() - 1)]);
        let a = alpha(config.confidence, tests);
        out.check(
            NAME,
            "gap_vs_lpp_ks",
            ks.p_value >= a,
            format!("D = {:.4e}, p = {} vs level {}", ks.statistic, fmt_p(ks.p_value), fmt_p(a)),
        );
        out.stat(NAME, "gap_vs_lpp_ks_p", ks.p_value);
        out.stat(NAME, "gap_vs_lpp_ks_d", ks.statistic);
        let mut csv = String::from("lambda1,exact_cdf,empirical_cdf\n");
        let mut counts = vec![0u64; top as usize + 1];
        lambda.iter().for_each(|&v| counts[v as usize] += 1);
        let mut acc = 0u64;
        for (v, &p) in cdf.iter().enumerate() {
            acc += counts[v];
            csv.push_str(&format!("{v},{p},{}\n", acc as f64 / lambda.len() as f64));
        }
        out.table("meixner_gap_cdf.csv", csv);
    }

    // q → 0: T_N = 0 with high probability, so λ_1 = N − 1
    if c.degenerate_samples > 0 {
        let cdf = lambda_cdf(c.degenerate_q, c.n, c.n as u64, &dctx)?;
        let below = if c.n >= 2 { cdf[c.n - 2] } else { 0.0 };
        let at = cdf[c.n - 1];
        let t_n = lpp_samples(config.seed, streams::DEGENERATE, c.n, c.degenerate_q, c.degenerate_samples)?;
        let zeros = t_n.iter().filter(|&&t| t == 0).count() as u64;
        let band = wilson_interval(zeros, t_n.len() as u64, band_z(config.confidence, tests));
        let ok = below.abs() < 1e-12 && band.contains(at);
        out.check(
            NAME,
            "gap_degenerate_step",
            ok,
            format!(
                "P(λ1 ≤ N−2) = {below:.3e}, P(λ1 ≤ N−1) = {at:.6}, empirical P(T_N = 0) in [{:.6}, {:.6}]",
                band.lo, band.hi
            ),
        );
    }
    Ok(out)
}

pub fn rsk_consistency(config: &Config) -> Result<Outcome, HarnessError> {
    let c = &config.meixner;
    let mut out = Outcome::default();
    let g = Geometric::new(c.rsk_q)?;
    let m = c.rsk_size;
    let results: Vec<(bool, bool)> = sharded(config.seed, streams::RSK, c.rsk_matrices, |rng, k| {
        (0..k)
            .map(|_| {
                let w: Vec<u64> = (0..m * m).map(|_| g.sample(rng)).collect();
                let shape = rsk_shape(&w, m, m);
                (shape.first_row() == lpp_grid(&w, m, m), shape.size() == w.iter().sum::<u64>())
            })
            .collect()
    });
    let row_bad = results.iter().filter(|r| !r.0).count();
    let size_bad = results.iter().filter(|r| !r.1).count();
    out.check(
        NAME,
        "rsk_first_row_equals_lpp",
        row_bad == 0 && size_bad == 0 && !results.is_empty(),
        format!("{row_bad} row mismatches, {size_bad} size mismatches over {} matrices", results.len()),
    );
    Ok(out)
}

pub fn trace_grid(config: &Config) -> Result<Outcome, HarnessError> {
    let c = &config.meixner;
    let mut out = Outcome::default();
    let ctx = PrecisionContext::extended(config.precision_bits)?;
    let (mut worst_res, mut worst_spec, mut widom_bad, mut points) = (0.0f64, 0.0f64, 0u64, 0u64);
    let mut csv = String::from("q,n,t,trace,nu_tail,residual,spec_min,spec_max,det,exp_neg_trace\n");
    for &q in &c.trace_q {
        let basis = build_basis(q, c.trace_n_max, &ctx)?;
        for n in 1..=c.trace_n_max {
            for t in 0..=c.trace_t_factor * n {
                let r = trace_identity_check(&basis, n, t, &ctx)?;
                let spec = spectrum(&gram_matrix_kt(&basis, n, t)?.value);
                let (lo, hi) = (spec[0], spec[spec.len() - 1]);
                let w = widom_bound(&basis, n, t)?;
                worst_res = worst_res.max(r.residual);
                worst_spec = worst_spec.max(-lo).max(hi - 1.0);
                widom_bad += (!w.holds()) as u64;
                points += 1;
                csv.push_str(&format!(
                    "{q},{n},{t},{},{},{},{lo},{hi},{},{}\n",
                    r.trace, r.nu_tail, r.residual, w.det, w.trace_bound
                ));
            }
        }
    }
    out.check(NAME, "trace_identity", worst_res < 1e-8, format!("max residual {worst_res:.3e} over {points} points"));
    out.check(
        NAME,
        "gram_spectrum_in_unit_interval",
        worst_spec <= 1e-10,
        format!("max excursion outside [0, 1]: {worst_spec:.3e}"),
    );
    out.check(NAME, "det_below_exp_neg_trace", widom_bad == 0, format!("{widom_bad} of {points} points violate"));
    out.stat(NAME, "trace_max_residual", worst_res);
    out.table("meixner_trace.csv", csv);
    Ok(out)
}
