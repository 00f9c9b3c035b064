use qpush_core::laplace::{bound_check_s, profile, s_rows_to_csv, theta_sum, theta_sum_check};

use crate::config::Config;
use crate::report::Outcome;
use crate::HarnessError;

const NAME: &str = "laplace";

pub const S_ENVELOPE: f64 = 50.0;
pub const MAX_SLOPE: f64 = 0.1;
pub const THETA_AT_ONE: f64 = 1.772637;

pub fn run(config: &Config) -> Result<Outcome, HarnessError> {
    let c = &config.laplace;
    let mut out = Outcome::default();

    let s = bound_check_s(&c.k_grid, &c.n_multipliers, &c.q_grid)?;
    out.check(
        NAME,
        "s_ratio_envelope",
        s.min_ratio >= 1.0 / S_ENVELOPE && s.max_ratio <= S_ENVELOPE && !s.rows.is_empty(),
        format!(
            "ratio range [{:.4}, {:.4}] over {} points (limit ×{S_ENVELOPE})",
            s.min_ratio,
            s.max_ratio,
            s.rows.len()
        ),
    );
    let worst = s.slopes.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    out.check(
        NAME,
        "s_ratio_flat_in_k",
        worst <= MAX_SLOPE && s.slopes.len() == c.q_grid.len(),
        format!("max |slope| of log-ratio vs log k: {worst:.4} (limit {MAX_SLOPE})"),
    );
    for (q, slope) in &s.slopes {
        out.stat(NAME, &format!("s_slope_q{q}"), *slope);
    }
    out.stat(NAME, "s_ratio_min", s.min_ratio);
    out.stat(NAME, "s_ratio_max", s.max_ratio);
    out.table("laplace_s.csv", s_rows_to_csv(&s.rows));

    // the maximiser against a fine grid
    let mut worst_arg = 0.0f64;
    let mut worst_fprime = 0.0f64;
    for &(k, m, q) in &[(40usize, 1usize, 0.1f64), (100, 3, 0.6), (200, 5, 0.9)] {
        let p = profile(k, m * k, q)?;
        let arg = (1..1_000_000)
            .map(|i| i as f64 * 1e-6)
            .max_by(|a, b| p.f(*a).total_cmp(&p.f(*b)))
            .expect("non-empty grid");
        worst_arg = worst_arg.max((arg - p.x0).abs());
        worst_fprime = worst_fprime.max(p.f_prime_x0.abs());
    }
    out.check(
        NAME,
        "x0_closed_form",
        worst_arg < 1e-5 && worst_fprime < 1e-10,
        format!("grid argmax error {worst_arg:.3e}, |f'(x0)| ≤ {worst_fprime:.3e}"),
    );
    let p = profile(100, 200, 0.3)?;
    out.stat(NAME, "curvature_k100_n200_q0.3", p.curvature);
    out.stat(NAME, "curvature_as_stated_k100_n200_q0.3", p.curvature_as_stated);

    let one = theta_sum(1.0, 1e-15)?.value;
    out.check(
        NAME,
        "theta_sum_gamma_one",
        (one - THETA_AT_ONE).abs() <= 1e-5,
        format!("Σ e^(−i²) = {one:.9}"),
    );
    let small = theta_sum(1e-6, 1e-12)?.value * 1e-3;
    let root_pi = std::f64::consts::PI.sqrt();
    out.check(
        NAME,
        "theta_sum_small_gamma",
        (small - root_pi).abs() <= 1e-3,
        format!("γ^(1/2) Σ at γ = 1e-6: {small:.9} vs √π"),
    );
    let th = theta_sum_check(&c.gamma_grid, c.gamma_max)?;
    let at_least_one = th.rows.iter().all(|r| r.1 >= 1.0);
    out.check(
        NAME,
        "theta_sum_two_sided_bound",
        th.fitted_c.is_finite() && at_least_one,
        format!("fitted C = {:.4} for γ ≤ {}", th.fitted_c, c.gamma_max),
    );
    out.stat(NAME, "theta_fitted_c", th.fitted_c);
    let mut csv = String::from("gamma,sum,sqrt_gamma_times_sum\n");
    for (g, s, r) in &th.rows {
        csv.push_str(&format!("{g},{s},{r}\n"));
    }
    out.table("laplace_theta.csv", csv);
    Ok(out)
}
