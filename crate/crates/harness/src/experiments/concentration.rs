use qpush_core::concentration::{
    eps_family_slope, mgf_bound_check, mgf_rows_to_csv, sigma_sums, summarize_sum_tail, sum_tail_rows_to_csv,
    RateLaw, TailFamily,
};
use qpush_core::concentration::sample_sum;
use qpush_core::PrecisionContext;

use super::band_z;
use crate::config::{Config, FamilySpec};
use crate::parallel::{sharded, streams};
use crate::report::{Outcome, Status};
use crate::HarnessError;

const NAME: &str = "concentration";

pub const ZETA3: f64 = 1.2020569031595942;
pub const SLOPE: f64 = 1.5;
pub const SLOPE_TOL: f64 = 0.15;
pub const SINGLE_SLOPE_TOL: f64 = 0.1;
pub const STABILITY: f64 = 2.0;

fn law(spec: &FamilySpec) -> RateLaw {
    match spec {
        FamilySpec::Single { rho } => RateLaw::Finite(vec![*rho]),
        FamilySpec::Geometric => RateLaw::geometric_family(),
        FamilySpec::Eps { eps } => RateLaw::eps_family(*eps),
    }
}

pub fn run(config: &Config) -> Result<Outcome, HarnessError> {
    let c = &config.concentration;
    let mut out = Outcome::default();
    let ctx = PrecisionContext::double();

    let z3 = sigma_sums(&RateLaw::Power { exponent: 1.5 }, &ctx)?;
    let s2 = z3.sigma_2.expect("convergent");
    out.check(
        NAME,
        "sigma_zeta3",
        (s2.value - ZETA3).abs() <= 1e-7 && s2.tail_bound <= 1e-10 * s2.value,
        format!("σ_2 = {:.12} ± {:.1e}", s2.value, s2.tail_bound),
    );
    let eps = eps_family_slope(&c.eps_grid, &ctx)?;
    out.check(
        NAME,
        "sigma_eps_family_order",
        eps.slope.abs() < 0.1,
        format!("slope of σ_(2/3)·ε/log(1/ε) vs ε in log scale: {:.4}", eps.slope),
    );

    let mgf = mgf_bound_check(&c.c1_grid, &c.rho_grid, &c.lambda_grid)?;
    out.check(
        NAME,
        "mgf_single_constant",
        mgf.holds() && mgf.spread <= STABILITY,
        format!("C = {:.6}, per-law spread ×{:.6} (limit {STABILITY})", mgf.c_hat, mgf.spread),
    );
    out.stat(NAME, "mgf_c_hat", mgf.c_hat);
    out.table("concentration_mgf.csv", mgf_rows_to_csv(&mgf.rows));

    let steps = (c.t_max / c.t_step).round() as usize;
    let t_grid: Vec<f64> = (0..=steps).map(|j| j as f64 * c.t_step).collect();
    let z = band_z(config.confidence, t_grid.len().max(1));
    for (i, spec) in c.families.iter().enumerate() {
        let label = spec.label();
        let fam = TailFamily::with_mean_tolerance(&law(spec), 1.0, c.mean_tolerance, &ctx)?;
        if c.samples == 0 {
            out.verdict(NAME, &format!("sum_tail_slope[{label}]"), Status::Inconclusive, "no samples requested");
            continue;
        }
        let base = streams::CONCENTRATION + ((i as u64) << 24);
        let sums = sharded(config.seed, base, c.samples, |rng, k| (0..k).map(|_| sample_sum(&fam, rng)).collect());
        let r = summarize_sum_tail(&fam, sums, &t_grid, z)?;
        let zero_ok = r.rows.first().is_some_and(|row| row.t == 0.0 && row.p_hat <= 1.0);
        match (spec, r.shifted_fit, r.raw_fit) {
            (FamilySpec::Single { .. }, _, Some(raw)) => out.check(
                NAME,
                &format!("sum_tail_slope[{label}]"),
                (raw.slope - SLOPE).abs() <= SINGLE_SLOPE_TOL && zero_ok,
                format!("raw slope {:.4} (target {SLOPE} ± {SINGLE_SLOPE_TOL})", raw.slope),
            ),
            (_, Some(fit), _) => out.check(
                NAME,
                &format!("sum_tail_slope[{label}]"),
                (fit.fit.slope - SLOPE).abs() <= SLOPE_TOL && zero_ok,
                format!(
                    "slope {:.4} after fitted shift {:.4} over {} window points (target {SLOPE} ± {SLOPE_TOL})",
                    fit.fit.slope, fit.shift, fit.points
                ),
            ),
            _ => out.verdict(
                NAME,
                &format!("sum_tail_slope[{label}]"),
                Status::Inconclusive,
                "too few points with P̂ in [1e-4, 1e-1]",
            ),
        }
        if let Some(raw) = r.raw_fit {
            out.stat(NAME, &format!("raw_slope[{label}]"), raw.slope);
        }
        if let Some(fit) = r.shifted_fit {
            out.stat(NAME, &format!("shifted_slope[{label}]"), fit.fit.slope);
            out.stat(NAME, &format!("shift[{label}]"), fit.shift);
        }
        out.stat(NAME, &format!("c_hat[{label}]"), r.c_hat);
        out.stat(NAME, &format!("omitted_mean[{label}]"), fam.omitted_mean);
        out.table(&format!("concentration_tail_{i}.csv"), sum_tail_rows_to_csv(&r.rows));
    }
    Ok(out)
}
