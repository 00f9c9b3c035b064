use proptest::prelude::*;
use qpush_core::lpp::{cylinder_lpp, diagonal_decomposition_bound, sample_cylinder};
use qpush_core::pushtasep::Simulator;
use qpush_core::qspecial::QParams;
use qpush_core::qwhittaker::{top_row_marginal, truncated_measure};
use qpush_core::sampling::{qgeo_pmf, GapConvention, RngStream};
use qpush_core::PrecisionContext;

fn whittaker_law(n: usize, u: f64, q: f64) -> Vec<f64> {
    let m = truncated_measure(n, n, u, q, 25, 1e-9, &PrecisionContext::double()).unwrap();
    top_row_marginal(&m)
}

fn mean_and_var(law: &[f64]) -> (f64, f64) {
    let m: f64 = law.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let m2: f64 = law.iter().enumerate().map(|(k, p)| (k * k) as f64 * p).sum();
    (m, m2 - m * m)
}

#[test]
fn one_by_one_measure_is_q_geometric() {
    let (u, q) = (0.4, 0.5);
    let law = whittaker_law(1, u, q);
    let ctx = PrecisionContext::double();
    for (s, p) in law.iter().enumerate().take(15) {
        let expect = qgeo_pmf(s as u64, u * u, q, &ctx).unwrap();
        assert!((p - expect).abs() < 1e-12, "s = {s}: {p} vs {expect}");
    }
}

#[test]
fn pushtasep_and_cylinder_means_match_whittaker() {
    let (n, u, q) = (2, 0.4, 0.5);
    let (mean, var) = mean_and_var(&whittaker_law(n, u, q));
    let samples = 40_000;
    let se = (var / samples as f64).sqrt();

    let mut sim = Simulator::new(QParams::new(q, u).unwrap(), GapConvention::EmptySites).unwrap();
    let mut rng = RngStream::new(11, 0);
    let push: f64 = (0..samples)
        .map(|_| (sim.run(n, n as u64, &mut rng).unwrap().last() - n as i64) as f64)
        .sum::<f64>()
        / samples as f64;
    assert!((push - mean).abs() < 5.0 * se, "pushTASEP mean {push} vs {mean} ± {se}");

    let mut rng = RngStream::new(11, 1);
    let cyl: f64 = (0..samples)
        .map(|_| cylinder_lpp(&sample_cylinder(n, n, u, q, 1e-12, &mut rng).unwrap()) as f64)
        .sum::<f64>()
        / samples as f64;
    assert!((cyl - mean).abs() < 5.0 * se, "cylinder mean {cyl} vs {mean} ± {se}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn particles_stay_ordered(seed in any::<u64>(), q in 0.05f64..0.95, u in 0.05f64..0.95, n in 1usize..12) {
        let mut sim = Simulator::new(QParams::new(q, u).unwrap(), GapConvention::EmptySites).unwrap();
        let mut rng = RngStream::new(seed, 0);
        let c = sim.run(n, 2 * n as u64, &mut rng).unwrap();
        prop_assert!(c.positions().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(c.positions().iter().enumerate().all(|(i, &x)| x >= i as i64 + 1));
    }

    #[test]
    fn diagonal_terms_never_exceed_cylinder(seed in any::<u64>(), q in 0.1f64..0.9, u in 0.1f64..0.9, n in 1usize..10) {
        let mut rng = RngStream::new(seed, 3);
        let env = sample_cylinder(n, n, u, q, 1e-10, &mut rng).unwrap();
        let d = diagonal_decomposition_bound(&env);
        prop_assert!(d.lower <= cylinder_lpp(&env));
        prop_assert_eq!(d.lower, d.terms.iter().sum::<u64>());
    }
}
