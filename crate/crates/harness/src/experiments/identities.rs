//! Exactness suite and the three-way distributional identity between
//! q-pushTASEP, cylinder LPP and the q-Whittaker top row.

use num_rational::BigRational;
use num_traits::{One, Zero};
use qpush_core::lpp::{cylinder_lpp, sample_cylinder};
use qpush_core::meixner::{factorial_moment_double_sum, factorial_moment_exact};
use qpush_core::pushtasep::Simulator;
use qpush_core::qspecial::{q_binomial_exact, q_pochhammer_exact, QParams};
use qpush_core::qwhittaker::{law_to_csv, partitions_in_box, poly, skew_poly, top_row_marginal, truncated_measure_rational};
use qpush_core::sampling::GapConvention;
use qpush_core::stats::{chi_square_gof, chi_square_two_sample, ks_one_sample, ks_two_sample};

use super::{alpha, fmt_p};
use crate::config::{Config, ExactnessConfig};
use crate::parallel::{streams, try_sharded};
use crate::report::{Outcome, Status};
use crate::HarnessError;

const NAME: &str = "identities";

pub fn run(config: &Config) -> Result<Outcome, HarnessError> {
    let mut out = exactness(&config.identities.exactness)?;
    out.merge(distributional(config)?);
    Ok(out)
}

/// (checks, failures) for each exact identity family.
pub fn exactness(c: &ExactnessConfig) -> Result<Outcome, HarnessError> {
    let mut out = Outcome::default();

    let (mut checks, mut bad) = (0u64, 0u64);
    for q in &c.pascal_q {
        let q = q.to_big();
        for n in 1..=c.pascal_n {
            for k in 1..n {
                let lhs = q_binomial_exact(n, k, &q)?;
                let rhs = q_binomial_exact(n - 1, k - 1, &q)? + num_traits::pow(q.clone(), k) * q_binomial_exact(n - 1, k, &q)?;
                checks += 1;
                bad += (lhs != rhs) as u64;
            }
        }
    }
    out.check(NAME, "pascal_recurrence_exact", bad == 0, format!("{bad} of {checks} identities differ"));

    let (mut checks, mut bad) = (0u64, 0u64);
    for z in &c.pochhammer_z {
        for q in &c.pochhammer_q {
            let (z, q) = (z.to_big(), q.to_big());
            for m in 0..=c.pochhammer_max {
                let zq = &z * num_traits::pow(q.clone(), m);
                for n in 0..=c.pochhammer_max {
                    let lhs = q_pochhammer_exact(&z, &q, m + n);
                    let rhs = q_pochhammer_exact(&z, &q, m) * q_pochhammer_exact(&zq, &q, n);
                    checks += 1;
                    bad += (lhs != rhs) as u64;
                }
            }
        }
    }
    out.check(NAME, "pochhammer_splitting_exact", bad == 0, format!("{bad} of {checks} identities differ"));

    let (mut checks, mut bad) = (0u64, 0u64);
    let q = c.branching_q.to_big();
    let xs: Vec<BigRational> = c.branching_x.iter().map(|x| x.to_big()).collect();
    for mu in partitions_in_box(c.branching_rows, c.branching_max_size) {
        if mu.size() > c.branching_max_size {
            continue;
        }
        let whole = poly(&mu, &xs, &q);
        for split in 0..=xs.len() {
            let mut acc = BigRational::zero();
            for nu in partitions_in_box(split, mu.part(1)) {
                if mu.contains(&nu) {
                    acc += poly(&nu, &xs[..split], &q) * skew_poly(&mu, &nu, &xs[split..], &q);
                }
            }
            checks += 1;
            bad += (acc != whole) as u64;
        }
    }
    out.check(NAME, "branching_split_exact", bad == 0, format!("{bad} of {checks} splits differ"));

    let (mut checks, mut bad) = (0u64, 0u64);
    for q in &c.dual_q {
        let q = q.to_big();
        for k in 1..=c.dual_k {
            for n in 1..=c.dual_n {
                let a = factorial_moment_double_sum(&q, k, n)?;
                let b = factorial_moment_exact(&q, k, n)?;
                checks += 1;
                bad += (a != b) as u64;
            }
        }
    }
    out.check(NAME, "dual_factorial_moments_exact", bad == 0, format!("{bad} of {checks} pairs differ"));
    // sanity: k = 0 is the total mass
    let one = factorial_moment_exact(&BigRational::new(1.into(), 2.into()), 0, 3)?;
    out.check(NAME, "factorial_moment_k0_is_one", one.is_one(), format!("M(0, 3) = {one}"));
    Ok(out)
}

pub fn distributional(config: &Config) -> Result<Outcome, HarnessError> {
    let c = &config.identities;
    let mut out = Outcome::default();
    if c.samples == 0 {
        out.verdict(NAME, "three_way_identity", Status::Inconclusive, "no samples requested");
        return Ok(out);
    }
    let (qf, uf) = (c.q.to_f64(), c.u.to_f64());
    let measure = truncated_measure_rational(c.n, c.t, &c.u.to_big(), &c.q.to_big(), c.cap, 1e-8, config.precision_bits)?;
    let law = top_row_marginal(&measure);
    out.stat(NAME, "whittaker_tail_mass", measure.tail_mass_bound);

    let params = QParams::new(qf, uf)?;
    let (n, t) = (c.n, c.t);
    let push: Vec<u64> = try_sharded(config.seed, streams::PUSHTASEP, c.samples, |rng, k| {
        let mut sim = Simulator::new(params, GapConvention::EmptySites)?;
        (0..k)
            .map(|_| sim.run(n, t as u64, rng).map(|cfg| (cfg.last() - n as i64) as u64))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let cyl: Vec<u64> = try_sharded(config.seed, streams::CYLINDER, c.samples, |rng, k| {
        (0..k)
            .map(|_| sample_cylinder(n, t, uf, qf, c.cylinder_eps, rng).map(|env| cylinder_lpp(&env)))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let cdf = |x: u64| law.iter().take(x as usize + 1).sum::<f64>();
    let tests = [
        ("push_vs_whittaker_chi2", chi_square_gof(&push, &law, 5.0).p_value),
        ("cylinder_vs_whittaker_chi2", chi_square_gof(&cyl, &law, 5.0).p_value),
        ("push_vs_cylinder_chi2", chi_square_two_sample(&push, &cyl, 10.0).p_value),
        ("push_vs_whittaker_ks", ks_one_sample(&push, cdf).p_value),
        ("cylinder_vs_whittaker_ks", ks_one_sample(&cyl, cdf).p_value),
        ("push_vs_cylinder_ks", ks_two_sample(&push, &cyl).p_value),
    ];
    let a = alpha(config.confidence, tests.len());
    for (name, p) in tests {
        out.check(NAME, name, p >= a, format!("p = {} vs Bonferroni level {}", fmt_p(p), fmt_p(a)));
        out.stat(NAME, &format!("{name}_p"), p);
    }
    let mean = |v: &[u64]| v.iter().sum::<u64>() as f64 / v.len() as f64;
    let exact_mean: f64 = law.iter().enumerate().map(|(i, p)| i as f64 * p).sum();
    out.stat(NAME, "push_mean", mean(&push));
    out.stat(NAME, "cylinder_mean", mean(&cyl));
    out.stat(NAME, "whittaker_mean", exact_mean);

    let top = law.len().max(1 + *push.iter().chain(&cyl).max().unwrap_or(&0) as usize);
    let mut csv = String::from("value,whittaker,push_freq,cylinder_freq\n");
    let (mut cp, mut cc) = (vec![0u64; top], vec![0u64; top]);
    push.iter().for_each(|&v| cp[v as usize] += 1);
    cyl.iter().for_each(|&v| cc[v as usize] += 1);
    for v in 0..top {
        csv.push_str(&format!(
            "{v},{},{},{}\n",
            law.get(v).copied().unwrap_or(0.0),
            cp[v] as f64 / push.len() as f64,
            cc[v] as f64 / cyl.len() as f64
        ));
    }
    out.table("identities_laws.csv", csv);
    out.table("whittaker_top_row.csv", law_to_csv(&law));
    Ok(out)
}
