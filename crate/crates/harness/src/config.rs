use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::HarnessError;

/// A rational parameter written as "p/q" (or "p") in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: i64,
    pub den: i64,
}

impl Ratio {
    pub const fn new(num: i64, den: i64) -> Self {
        Self { num, den }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn to_big(self) -> BigRational {
        BigRational::new(BigInt::from(self.num), BigInt::from(self.den))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Ratio {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (n, d) = s.split_once('/').unwrap_or((s, "1"));
        let num = n.trim().parse::<i64>().map_err(|e| format!("bad numerator in {s:?}: {e}"))?;
        let den = d.trim().parse::<i64>().map_err(|e| format!("bad denominator in {s:?}: {e}"))?;
        if den <= 0 {
            return Err(format!("denominator must be positive in {s:?}"));
        }
        Ok(Self { num, den })
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Identities,
    Meixner,
    Moments,
    Laplace,
    Concentration,
    MainTheorem,
    All,
}

impl Experiment {
    pub const SUITE: [Experiment; 6] = [
        Experiment::Identities,
        Experiment::Meixner,
        Experiment::Moments,
        Experiment::Laplace,
        Experiment::Concentration,
        Experiment::MainTheorem,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Identities => "identities",
            Experiment::Meixner => "meixner",
            Experiment::Moments => "moments",
            Experiment::Laplace => "laplace",
            Experiment::Concentration => "concentration",
            Experiment::MainTheorem => "main-theorem",
            Experiment::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactnessConfig {
    pub pascal_n: usize,
    pub pascal_q: Vec<Ratio>,
    pub pochhammer_max: usize,
    pub pochhammer_z: Vec<Ratio>,
    pub pochhammer_q: Vec<Ratio>,
    pub branching_rows: usize,
    pub branching_max_size: u32,
    pub branching_x: Vec<Ratio>,
    pub branching_q: Ratio,
    pub dual_k: usize,
    pub dual_n: usize,
    pub dual_q: Vec<Ratio>,
}

impl Default for ExactnessConfig {
    fn default() -> Self {
        Self {
            pascal_n: 30,
            pascal_q: vec![Ratio::new(1, 3), Ratio::new(1, 2), Ratio::new(3, 4)],
            pochhammer_max: 20,
            pochhammer_z: vec![Ratio::new(-3, 2), Ratio::new(1, 3), Ratio::new(2, 1)],
            pochhammer_q: vec![Ratio::new(1, 2), Ratio::new(2, 3)],
            branching_rows: 4,
            branching_max_size: 5,
            branching_x: vec![Ratio::new(1, 5), Ratio::new(2, 7), Ratio::new(3, 4), Ratio::new(1, 2)],
            branching_q: Ratio::new(1, 3),
            dual_k: 10,
            dual_n: 15,
            dual_q: vec![Ratio::new(1, 4), Ratio::new(1, 2), Ratio::new(3, 4)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentitiesConfig {
    pub exactness: ExactnessConfig,
    pub n: usize,
    pub t: usize,
    pub q: Ratio,
    pub u: Ratio,
    pub samples: usize,
    /// Box size for the enumerated q-Whittaker measure.
    pub cap: u32,
    pub cylinder_eps: f64,
}

impl Default for IdentitiesConfig {
    fn default() -> Self {
        Self {
            exactness: ExactnessConfig::default(),
            n: 2,
            t: 2,
            q: Ratio::new(1, 2),
            u: Ratio::new(2, 5),
            samples: 200_000,
            cap: 25,
            cylinder_eps: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeixnerConfig {
    pub n: usize,
    pub q: f64,
    pub samples: usize,
    pub rsk_matrices: usize,
    pub rsk_size: usize,
    pub rsk_q: f64,
    pub degenerate_q: f64,
    pub degenerate_samples: usize,
    pub trace_n_max: usize,
    pub trace_t_factor: usize,
    pub trace_q: Vec<f64>,
}

impl Default for MeixnerConfig {
    fn default() -> Self {
        Self {
            n: 5,
            q: 0.3,
            samples: 100_000,
            rsk_matrices: 10_000,
            rsk_size: 6,
            rsk_q: 0.5,
            degenerate_q: 1e-4,
            degenerate_samples: 10_000,
            trace_n_max: 20,
            trace_t_factor: 6,
            trace_q: vec![0.25, 0.5, 0.75],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsConfig {
    pub oracle_k_max: usize,
    pub oracle_n_max: usize,
    pub oracle_q: Vec<f64>,
    pub q_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub k_min: usize,
    pub eps_grid: Vec<f64>,
    pub mean_law_n: usize,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self {
            oracle_k_max: 6,
            oracle_n_max: 12,
            oracle_q: vec![0.25, 0.5, 0.75],
            q_grid: vec![0.25, 0.5, 0.75],
            n_grid: vec![50, 100, 200],
            k_min: 5,
            eps_grid: vec![0.05, 0.1, 0.2, 0.3, 0.4],
            mean_law_n: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaplaceConfig {
    pub k_grid: Vec<usize>,
    pub n_multipliers: Vec<usize>,
    pub q_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub gamma_max: f64,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        Self {
            k_grid: (10..=200).step_by(10).collect(),
            n_multipliers: vec![1, 2, 3, 4, 5],
            q_grid: vec![0.1, 0.3, 0.6, 0.9],
            gamma_grid: vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0],
            gamma_max: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilySpec {
    /// One variable with rate ρ.
    Single { rho: f64 },
    /// ρ_i = i^{3/2} 2^{i/2}.
    Geometric,
    /// ρ_i = ε^{3/2} i^{3/2} e^{εi/2}.
    Eps { eps: f64 },
}

impl FamilySpec {
    pub fn label(&self) -> String {
        match self {
            FamilySpec::Single { rho } => format!("single(rho={rho})"),
            FamilySpec::Geometric => "geometric".into(),
            FamilySpec::Eps { eps } => format!("eps({eps})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcentrationConfig {
    pub rho_grid: Vec<f64>,
    pub c1_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    pub families: Vec<FamilySpec>,
    pub samples: usize,
    pub t_max: f64,
    pub t_step: f64,
    /// Simulate only leading variables whose omitted total mean is below this.
    pub mean_tolerance: f64,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        Self {
            rho_grid: vec![0.1, 1.0, 10.0],
            c1_grid: vec![1.0],
            lambda_grid: (-30..=20).map(|j| 10f64.powf(j as f64 / 10.0)).collect(),
            eps_grid: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4],
            families: vec![
                FamilySpec::Single { rho: 1.0 },
                FamilySpec::Geometric,
                FamilySpec::Eps { eps: 0.5 },
            ],
            samples: 2_000_000,
            t_max: 8.0,
            t_step: 0.1,
            mean_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MainTheoremConfig {
    pub tail_n: usize,
    pub tail_q: Vec<f64>,
    pub tail_samples: usize,
    pub tail_x: Vec<f64>,
    pub decomposition_n: usize,
    pub decomposition_samples: usize,
    pub q: f64,
    pub u: f64,
    pub cylinder_eps: f64,
    pub lln_n: usize,
    pub lln_q: f64,
    pub lln_u: f64,
    pub lln_samples: usize,
    pub lln_grid: Vec<f64>,
    pub theta_grid: Vec<f64>,
    /// Fluctuation samples below this probability count as out of reach.
    pub min_tail_count: u64,
}

impl Default for MainTheoremConfig {
    fn default() -> Self {
        Self {
            tail_n: 128,
            tail_q: vec![0.05, 0.2, 0.5, 0.8, 0.95],
            tail_samples: 100_000,
            tail_x: vec![0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0],
            decomposition_n: 32,
            decomposition_samples: 10_000,
            q: 0.6,
            u: 0.5,
            cylinder_eps: 1e-12,
            lln_n: 256,
            lln_q: 0.5,
            lln_u: 0.5,
            lln_samples: 2000,
            lln_grid: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            theta_grid: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0],
            min_tail_count: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub experiment: Experiment,
    pub seed: u64,
    pub precision_bits: u32,
    /// Family-wise confidence level; split by Bonferroni within an experiment.
    pub confidence: f64,
    pub identities: IdentitiesConfig,
    pub meixner: MeixnerConfig,
    pub moments: MomentsConfig,
    pub laplace: LaplaceConfig,
    pub concentration: ConcentrationConfig,
    pub main_theorem: MainTheoremConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            experiment: Experiment::All,
            seed: 20240601,
            precision_bits: 256,
            confidence: 0.99,
            identities: IdentitiesConfig::default(),
            meixner: MeixnerConfig::default(),
            moments: MomentsConfig::default(),
            laplace: LaplaceConfig::default(),
            concentration: ConcentrationConfig::default(),
            main_theorem: MainTheoremConfig::default(),
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let c: Config = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(HarnessError::Config(format!("confidence {} must lie in (0, 1)", self.confidence)));
        }
        if !(64..=4096).contains(&self.precision_bits) {
            return Err(HarnessError::Config(format!(
                "precision_bits {} must lie in 64..=4096",
                self.precision_bits
            )));
        }
        if self.concentration.t_step <= 0.0 {
            return Err(HarnessError::Config("concentration.t_step must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_lossless() {
        let mut c = Config::default();
        c.concentration.lambda_grid.push(0.1 + 0.2);
        c.main_theorem.q = 1.0 / 3.0;
        let back = Config::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = Config::from_json(r#"{"experiment": "laplace", "seed": 3}"#).unwrap();
        assert_eq!(c.experiment, Experiment::Laplace);
        assert_eq!(c.seed, 3);
        assert_eq!(c.meixner, MeixnerConfig::default());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Config::from_json("{").is_err());
        assert!(Config::from_json(r#"{"sed": 3}"#).is_err());
        assert!(Config::from_json(r#"{"identities": {"q": "1/0"}}"#).is_err());
        assert!(Config::from_json(r#"{"confidence": 1.5}"#).is_err());
        assert!(Config::from_json(r#"{"experiment": "nope"}"#).is_err());
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!("2/5".parse::<Ratio>().unwrap(), Ratio::new(2, 5));
        assert_eq!("3".parse::<Ratio>().unwrap(), Ratio::new(3, 1));
        assert!("x/2".parse::<Ratio>().is_err());
        assert_eq!(Ratio::new(2, 5).to_string(), "2/5");
    }

    #[test]
    fn hash_changes_with_seed() {
        let a = Config::default();
        let b = Config { seed: a.seed + 1, ..a.clone() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
