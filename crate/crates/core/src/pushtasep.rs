//! Discrete-time q-pushTASEP with step initial condition and a_i = b_j = u.
//!
//! Particles are updated left to right. Particle k jumps by J ~ q-Geo(u²)
//! and is pushed by P ~ φ_{1/q, q^gap, 0}(·|m), where m is how far particle
//! k−1 moved in the same step. Particle 1 is never pushed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::precision::PrecisionContext;
use crate::qspecial::{q_digamma_second, QParams};
use crate::sampling::{GapConvention, PushSampler, QGeoTable, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleConfig {
    positions: Vec<i64>,
    time: u64,
    params: QParams,
}

impl ParticleConfig {
    /// x_k(0) = k for k = 1..N.
    pub fn step_initial(n: usize, params: QParams) -> Self {
        Self {
            positions: (1..=n as i64).collect(),
            time: 0,
            params,
        }
    }

    pub fn from_positions(positions: Vec<i64>, time: u64, params: QParams) -> Result<Self> {
        if positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ModelConsistency(format!("positions not strictly increasing: {positions:?}")));
        }
        Ok(Self { positions, time, params })
    }

    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn params(&self) -> QParams {
        self.params
    }

    /// Position of the rightmost labelled particle x_N.
    pub fn last(&self) -> i64 {
        *self.positions.last().expect("at least one particle")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepRecord {
    pub jumps: Vec<u64>,
    pub pushes: Vec<u64>,
    /// Gap of particle k to k−1 before the step (0 for particle 1).
    pub gaps: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub steps: Vec<StepRecord>,
}

/// Holds the jump table and the push-law cache for one parameter pair.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: QParams,
    convention: GapConvention,
    jump: QGeoTable,
    push: PushSampler,
}

impl Simulator {
    pub fn new(params: QParams, convention: GapConvention) -> Result<Self> {
        let u = params.u();
        Ok(Self {
            params,
            convention,
            jump: QGeoTable::new(u * u, params.q())?,
            push: PushSampler::new(params.q())?,
        })
    }

    pub fn params(&self) -> QParams {
        self.params
    }

    pub fn step(
        &mut self,
        config: &mut ParticleConfig,
        rng: &mut RngStream,
        record: Option<&mut TrajectoryRecord>,
    ) -> Result<()> {
        let n = config.positions.len();
        let mut rec = record.as_ref().map(|_| StepRecord::default());
        let mut prev_old = i64::MIN;
        let mut prev_new = i64::MIN;
        for k in 0..n {
            let old = config.positions[k];
            let jump = self.jump.sample(rng);
            let (push, gap) = if k == 0 {
                (0, 0)
            } else {
                let m = (prev_new - prev_old) as u64;
                let gap = self.convention.gap(prev_old, old);
                (self.push.sample(gap, m, rng)?, gap)
            };
            let new = old + (jump + push) as i64;
            if k > 0 && new <= prev_new {
                return Err(Error::ModelConsistency(format!(
                    "particle {} landed on {new} but particle {} is at {prev_new} (time {}, gap {gap}, {:?})",
                    k + 1,
                    k,
                    config.time + 1,
                    self.convention
                )));
            }
            if let Some(r) = rec.as_mut() {
                r.jumps.push(jump);
                r.pushes.push(push);
                r.gaps.push(gap);
            }
            prev_old = old;
            prev_new = new;
            config.positions[k] = new;
        }
        config.time += 1;
        if let (Some(r), Some(rec)) = (record, rec) {
            r.steps.push(rec);
        }
        Ok(())
    }

    pub fn run(&mut self, n: usize, t: u64, rng: &mut RngStream) -> Result<ParticleConfig> {
        let mut c = ParticleConfig::step_initial(n, self.params);
        for _ in 0..t {
            self.step(&mut c, rng, None)?;
        }
        Ok(c)
    }

    pub fn run_recorded(&mut self, n: usize, t: u64, rng: &mut RngStream) -> Result<(ParticleConfig, TrajectoryRecord)> {
        let mut c = ParticleConfig::step_initial(n, self.params);
        let mut rec = TrajectoryRecord::default();
        for _ in 0..t {
            self.step(&mut c, rng, Some(&mut rec))?;
        }
        Ok((c, rec))
    }
}

/// One step with a throwaway simulator; prefer [`Simulator`] in loops.
pub fn step(config: &ParticleConfig, rng: &mut RngStream) -> Result<ParticleConfig> {
    let mut sim = Simulator::new(config.params, GapConvention::default())?;
    let mut c = config.clone();
    sim.step(&mut c, rng, None)?;
    Ok(c)
}

pub fn run(n: usize, t: u64, params: QParams, rng: &mut RngStream) -> Result<ParticleConfig> {
    Simulator::new(params, GapConvention::default())?.run(n, t, rng)
}

/// (−ψ_q''(log_q u))^{1/3} (log q^{−1})^{−1} N^{1/3}.
pub fn scaling_denominator(n: usize, params: QParams, ctx: &PrecisionContext) -> Result<f64> {
    let (q, u) = (params.q(), params.u());
    let x = u.ln() / q.ln();
    let d2 = q_digamma_second(x, q, ctx)?.value;
    let den = (-d2).cbrt() / (-q.ln()) * (n as f64).cbrt();
    if den > 0.0 && den.is_finite() {
        Ok(den)
    } else {
        Err(Error::ModelConsistency(format!("scaling denominator {den} is not positive")))
    }
}

/// X^sc = (x_N(N) − f_q N) / denominator.
pub fn scaled_observable(x_nn: i64, n: usize, params: QParams, ctx: &PrecisionContext) -> Result<f64> {
    let fq = crate::qspecial::f_q(params.q(), params.u(), ctx)?.value;
    Ok((x_nn as f64 - fq * n as f64) / scaling_denominator(n, params, ctx)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qspecial::f_q;

    fn params(q: f64, u: f64) -> QParams {
        QParams::new(q, u).unwrap()
    }

    #[test]
    fn zero_time_is_identity() {
        let mut rng = RngStream::new(0, 0);
        let c = run(5, 0, params(0.5, 0.5), &mut rng).unwrap();
        assert_eq!(c.positions(), &[1, 2, 3, 4, 5]);
        assert_eq!(c.time(), 0);
    }

    #[test]
    fn negligible_jump_rate_freezes_configuration() {
        let mut rng = RngStream::new(1, 0);
        let c = run(6, 50, params(0.5, 1e-10), &mut rng).unwrap();
        assert_eq!(c.positions(), &[1, 2, 3, 4, 5, 6]);
        assert_eq!(c.time(), 50);
    }

    #[test]
    fn record_satisfies_update_rule() {
        let mut sim = Simulator::new(params(0.6, 0.7), GapConvention::EmptySites).unwrap();
        let mut rng = RngStream::new(2, 0);
        let mut c = ParticleConfig::step_initial(8, sim.params());
        let mut rec = TrajectoryRecord::default();
        for _ in 0..200 {
            let before = c.positions().to_vec();
            sim.step(&mut c, &mut rng, Some(&mut rec)).unwrap();
            let s = rec.steps.last().unwrap();
            assert_eq!(s.pushes[0], 0);
            for k in 0..8 {
                assert_eq!(c.positions()[k] - before[k], (s.jumps[k] + s.pushes[k]) as i64);
                if k > 0 {
                    assert!(s.pushes[k] as i64 <= c.positions()[k - 1] - before[k - 1]);
                    assert_eq!(s.gaps[k] as i64, before[k] - before[k - 1] - 1);
                }
            }
        }
    }

    #[test]
    fn ordering_holds_across_grid() {
        let mut steps = 0;
        for &q in &[0.1, 0.5, 0.9] {
            for &u in &[0.3, 0.6, 0.9] {
                let mut sim = Simulator::new(params(q, u), GapConvention::EmptySites).unwrap();
                let mut rng = RngStream::new(3, 0);
                let mut c = ParticleConfig::step_initial(10, sim.params());
                for _ in 0..1200 {
                    sim.step(&mut c, &mut rng, None).unwrap();
                    assert!(c.positions().windows(2).all(|w| w[0] < w[1]));
                    steps += 1;
                }
            }
        }
        assert!(steps >= 10_000);
    }

    #[test]
    fn literal_gap_breaks_ordering() {
        let mut sim = Simulator::new(params(0.5, 0.8), GapConvention::Literal).unwrap();
        let mut rng = RngStream::new(4, 0);
        let mut c = ParticleConfig::step_initial(10, sim.params());
        let mut err = None;
        for _ in 0..10_000 {
            if let Err(e) = sim.step(&mut c, &mut rng, None) {
                err = Some(e);
                break;
            }
        }
        assert!(matches!(err, Some(Error::ModelConsistency(_))), "{err:?}");
    }

    #[test]
    fn paths_are_monotone_in_time() {
        let mut sim = Simulator::new(params(0.4, 0.6), GapConvention::EmptySites).unwrap();
        let mut rng = RngStream::new(5, 0);
        let mut c = ParticleConfig::step_initial(5, sim.params());
        for _ in 0..100 {
            let before = c.positions().to_vec();
            sim.step(&mut c, &mut rng, None).unwrap();
            assert!(before.iter().zip(c.positions()).all(|(a, b)| a <= b));
        }
    }

    #[test]
    fn scaled_observable_centres_and_is_linear() {
        let ctx = PrecisionContext::double();
        let p = params(0.5, 0.5);
        let fq = f_q(0.5, 0.5, &ctx).unwrap().value;
        let n = 64;
        let den = scaling_denominator(n, p, &ctx).unwrap();
        let x = (fq * n as f64).round() as i64;
        let a = scaled_observable(x, n, p, &ctx).unwrap();
        let b = scaled_observable(x + 7, n, p, &ctx).unwrap();
        assert!((b - a - 7.0 / den).abs() < 1e-12);
        assert!((a - (x as f64 - fq * n as f64) / den).abs() < 1e-15);
        for i in 1..10 {
            for j in 1..10 {
                let pp = params(i as f64 / 10.0, j as f64 / 10.0);
                assert!(scaling_denominator(16, pp, &ctx).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn from_positions_validates() {
        assert!(ParticleConfig::from_positions(vec![1, 1], 0, params(0.5, 0.5)).is_err());
        assert!(ParticleConfig::from_positions(vec![1, 3], 0, params(0.5, 0.5)).is_ok());
    }
}
