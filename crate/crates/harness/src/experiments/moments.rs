//! Factorial and polynomial moments of ν_{q,N}: the closed formula against
//! the ν-definition, and the bound families over the moment grid.

use qpush_core::meixner::{
    bound_rows_to_csv, build_basis, factorial_moment, moment_bound_checks, nu_measure_for, MomentReport,
    CRUDE_UPPER_TAIL, FACTORIAL_ASYMPTOTICS, LEMMA_POLY_LOWER, LEMMA_POLY_UPPER, MEAN_LAW_LOWER, POLY_MOMENT_THEOREM,
};
use qpush_core::PrecisionContext;

use crate::config::Config;
use crate::report::Outcome;
use crate::HarnessError;

const NAME: &str = "moments";

/// Factorial band: every ratio within [1/10, 10].
pub const FACTORIAL_BAND: f64 = 10.0;
pub const MAX_DRIFT: f64 = 0.2;
pub const STABILITY: f64 = 2.0;

pub fn run(config: &Config) -> Result<Outcome, HarnessError> {
    let mut out = oracle(config)?;
    out.merge(bounds(config)?);
    Ok(out)
}

pub fn oracle(config: &Config) -> Result<Outcome, HarnessError> {
    let c = &config.moments;
    let mut out = Outcome::default();
    let dctx = PrecisionContext::double();
    let exact = PrecisionContext::exact();
    let (mut worst, mut points) = (0.0f64, 0u64);
    for &q in &c.oracle_q {
        let basis = build_basis(q, c.oracle_n_max, &dctx)?;
        for n in 1..=c.oracle_n_max {
            let nu = nu_measure_for(&basis, n, c.oracle_k_max as u32, &dctx)?;
            for k in 0..=c.oracle_k_max {
                let formula = factorial_moment(q, k, n, &exact)?;
                let from_nu = nu.factorial_moment(k as u32).value;
                worst = worst.max((from_nu - formula).abs() / formula);
                points += 1;
            }
        }
    }
    out.check(
        NAME,
        "factorial_formula_vs_nu",
        worst <= 1e-8,
        format!("max relative difference {worst:.3e} over {points} points"),
    );
    out.stat(NAME, "factorial_formula_vs_nu_max_rel", worst);
    Ok(out)
}

fn log_range<'a>(rows: impl Iterator<Item = &'a qpush_core::meixner::BoundRow>) -> Option<(f64, f64)> {
    rows.map(|r| r.log_ratio).fold(None, |acc, x| match acc {
        None => Some((x, x)),
        Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
    })
}

pub fn bounds(config: &Config) -> Result<Outcome, HarnessError> {
    let c = &config.moments;
    let mut out = Outcome::default();
    let report: MomentReport =
        moment_bound_checks(&c.q_grid, &c.n_grid, c.k_min, &c.eps_grid, &PrecisionContext::double())?;

    // factorial asymptotics: one band and per-q drift
    let (lo, hi) = log_range(report.rows_of(FACTORIAL_ASYMPTOTICS)).unwrap_or((f64::NAN, f64::NAN));
    let band = FACTORIAL_BAND.ln();
    out.check(
        NAME,
        "factorial_asymptotics_band",
        lo >= -band && hi <= band,
        format!("ratio range [{:.4}, {:.4}] within [1/10, 10]", lo.exp(), hi.exp()),
    );
    let mut worst_drift = 0.0f64;
    for &q in &c.q_grid {
        if let Some(e) = report.envelope(FACTORIAL_ASYMPTOTICS, q) {
            let d = e.max_log_ratio - e.min_log_ratio;
            worst_drift = worst_drift.max(d);
            out.stat(NAME, &format!("factorial_drift_q{q}"), d);
        }
    }
    out.check(
        NAME,
        "factorial_asymptotics_drift",
        worst_drift < MAX_DRIFT,
        format!("max per-q log-ratio drift {worst_drift:.4} (limit {MAX_DRIFT})"),
    );

    // polynomial moments: ĉ = min ratio, Ĉ = max ratio over the whole grid
    let (lo, hi) = log_range(report.rows_of(POLY_MOMENT_THEOREM)).unwrap_or((f64::NAN, f64::NAN));
    let (c_lo, c_hi) = (lo.exp(), hi.exp());
    out.check(
        NAME,
        "poly_moment_constants",
        c_lo > 0.0 && c_hi.is_finite() && c_hi / c_lo <= STABILITY,
        format!("c = {c_lo:.4}, C = {c_hi:.4}, C/c = {:.4} (limit {STABILITY})", c_hi / c_lo),
    );
    out.stat(NAME, "poly_c_lower", c_lo);
    out.stat(NAME, "poly_c_upper", c_hi);

    for check in [LEMMA_POLY_UPPER, LEMMA_POLY_LOWER, CRUDE_UPPER_TAIL] {
        let rows: Vec<_> = report.rows_of(check).collect();
        let bad = rows.iter().filter(|r| !r.holds).count();
        out.check(
            NAME,
            check,
            bad == 0 && !rows.is_empty(),
            format!("{bad} of {} points violate", rows.len()),
        );
    }
    if let Some((lo, _)) = log_range(report.rows_of(CRUDE_UPPER_TAIL)) {
        out.stat(NAME, "crude_tail_min_l_hat", lo);
    }

    let mean_rows = || report.rows_of(MEAN_LAW_LOWER).filter(|r| r.n == c.mean_law_n);
    let (lo, hi) = log_range(mean_rows()).unwrap_or((f64::NAN, f64::NAN));
    let positive = mean_rows().all(|r| r.holds);
    out.check(
        NAME,
        "mean_law_lower_constant",
        positive && lo.is_finite() && (hi - lo).exp() <= STABILITY,
        format!(
            "N = {}: c = {:.4}, ratio spread ×{:.4} (limit {STABILITY})",
            c.mean_law_n,
            lo.exp(),
            (hi - lo).exp()
        ),
    );
    out.stat(NAME, "mean_law_c_hat", lo.exp());
    out.table("moment_bounds.csv", bound_rows_to_csv(&report.rows));
    Ok(out)
}
