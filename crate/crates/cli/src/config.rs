//! Per-subcommand configuration records. Every record has built-in defaults
//! so `--config` may be omitted; unknown fields are rejected.

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sqrobust::covers::{DistributionPair, Norm};
use sqrobust::instance::InstanceSpec;
use sqrobust::quad1d::MAX_ORDER;
use sqrobust::sqsim::AnswerMode;

pub trait CommandConfig: Serialize + DeserializeOwned + Default {
    fn validate(&self) -> Result<(), String>;
    fn set_seed(&mut self, seed: u64);
}

fn check_instance(spec: &InstanceSpec) -> Result<(), String> {
    if spec.d == 0 || spec.k == 0 || spec.k > spec.d {
        return Err(format!("need 1 <= k <= d, got d={} k={}", spec.d, spec.k));
    }
    if spec.m == 0 || spec.m >= MAX_ORDER {
        return Err(format!("m must lie in 1..{MAX_ORDER}, got {}", spec.m));
    }
    if let Some(delta) = spec.delta {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(format!("delta must lie in (0, 1/2), got {delta}"));
        }
    }
    if spec.family_size == 0 {
        return Err("familySize must be positive".into());
    }
    if !(spec.eps_orth > 0.0 && spec.eps_orth <= 1.0) {
        return Err(format!("epsOrth must lie in (0, 1], got {}", spec.eps_orth));
    }
    if !(spec.rho >= 0.0 && spec.rho.is_finite()) {
        return Err(format!("rho must be finite and >= 0, got {}", spec.rho));
    }
    if let Some(p) = spec.planted {
        if p >= spec.family_size {
            return Err(format!("planted {p} outside a family of {}", spec.family_size));
        }
    }
    Ok(())
}

fn positive(name: &str, v: usize) -> Result<(), String> {
    if v == 0 {
        Err(format!("{name} must be positive"))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct QuadratureConfig {
    pub m_min: usize,
    pub m_max: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { m_min: 1, m_max: 8 }
    }
}

impl CommandConfig for QuadratureConfig {
    fn validate(&self) -> Result<(), String> {
        if self.m_min == 0 || self.m_min > self.m_max || self.m_max > MAX_ORDER {
            return Err(format!("need 1 <= mMin <= mMax <= {MAX_ORDER}, got {}..{}", self.m_min, self.m_max));
        }
        Ok(())
    }

    fn set_seed(&mut self, _seed: u64) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct InstanceConfig {
    pub instance: InstanceSpec,
    pub samples_per_class: usize,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self { instance: InstanceSpec::default(), samples_per_class: 10_000 }
    }
}

impl CommandConfig for InstanceConfig {
    fn validate(&self) -> Result<(), String> {
        check_instance(&self.instance)
    }

    fn set_seed(&mut self, seed: u64) {
        self.instance.seed = seed;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct RobustnessConfig {
    pub instance: InstanceSpec,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Test points per class for the nearest-neighbor attack search.
    pub nn_test_per_class: usize,
    /// Defaults to a grid built from `rho` and the set separation.
    pub epsilons: Option<Vec<f64>>,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            instance: InstanceSpec { rho: 0.1, ..InstanceSpec::default() },
            train_per_class: 200,
            test_per_class: 2_000,
            nn_test_per_class: 200,
            epsilons: None,
        }
    }
}

impl CommandConfig for RobustnessConfig {
    fn validate(&self) -> Result<(), String> {
        check_instance(&self.instance)?;
        positive("trainPerClass", self.train_per_class)?;
        positive("testPerClass", self.test_per_class)?;
        positive("nnTestPerClass", self.nn_test_per_class)?;
        if let Some(eps) = &self.epsilons {
            if eps.is_empty() || eps.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
                return Err("epsilons must be a non-empty list of finite values >= 0".into());
            }
        }
        Ok(())
    }

    fn set_seed(&mut self, seed: u64) {
        self.instance.seed = seed;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum QueryStrategy {
    /// Support-indicator queries along every member's frame vectors.
    Aligned,
    /// Random halfspace queries.
    RandomHalfspace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct SqConfig {
    pub instance: InstanceSpec,
    pub taus: Vec<f64>,
    pub modes: Vec<AnswerMode>,
    pub strategies: Vec<QueryStrategy>,
    pub budget: usize,
    pub trials: usize,
    /// Optional JSON-lines file receiving one oracle session ledger per cell.
    pub ledger: Option<String>,
}

impl Default for SqConfig {
    fn default() -> Self {
        Self {
            instance: InstanceSpec::default(),
            taus: vec![0.05],
            modes: vec![AnswerMode::Honest, AnswerMode::Camouflage],
            strategies: vec![QueryStrategy::Aligned, QueryStrategy::RandomHalfspace],
            budget: 64,
            trials: 20,
            ledger: None,
        }
    }
}

impl CommandConfig for SqConfig {
    fn validate(&self) -> Result<(), String> {
        check_instance(&self.instance)?;
        if self.instance.rho > 0.0 {
            return Err("the SQ game runs on unaugmented instances (rho = 0)".into());
        }
        if self.taus.is_empty() || self.taus.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err("taus must be a non-empty list of values in (0, 1)".into());
        }
        if self.modes.is_empty() || self.strategies.is_empty() {
            return Err("modes and strategies must be non-empty".into());
        }
        positive("trials", self.trials)
    }

    fn set_seed(&mut self, seed: u64) {
        self.instance.seed = seed;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct ChiConfig {
    pub instance: InstanceSpec,
    pub mc_samples: usize,
}

impl Default for ChiConfig {
    fn default() -> Self {
        Self {
            instance: InstanceSpec { d: 16, k: 2, m: 2, family_size: 2, eps_orth: 0.9, ..InstanceSpec::default() },
            mc_samples: 100_000,
        }
    }
}

impl CommandConfig for ChiConfig {
    fn validate(&self) -> Result<(), String> {
        check_instance(&self.instance)?;
        if self.instance.family_size < 2 {
            return Err("the cross term needs familySize >= 2".into());
        }
        if self.mc_samples < 10_000 {
            return Err("mcSamples must be at least 10000".into());
        }
        Ok(())
    }

    fn set_seed(&mut self, seed: u64) {
        self.instance.seed = seed;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct CoverConfig {
    /// Explicit family; a random one is drawn when absent.
    pub members: Option<Vec<DistributionPair>>,
    pub family_size: usize,
    pub points_per_member: usize,
    pub dim: usize,
    pub eps: f64,
    pub delta: f64,
    pub norm: Norm,
    pub seed: u64,
}

impl Default for CoverConfig {
    fn default() -> Self {
        Self {
            members: None,
            family_size: 10,
            points_per_member: 4,
            dim: 1,
            eps: 0.3,
            delta: 0.25,
            norm: Norm::L2,
            seed: 1,
        }
    }
}

impl CommandConfig for CoverConfig {
    fn validate(&self) -> Result<(), String> {
        if !(self.eps >= 0.0 && self.delta >= 0.0 && self.delta <= 1.0) {
            return Err(format!("need eps >= 0 and delta in [0, 1], got {} and {}", self.eps, self.delta));
        }
        match &self.members {
            Some(m) if m.is_empty() => Err("members must be non-empty".into()),
            Some(m) => {
                let n = m[0].first.len();
                if m.iter().any(|p| p.first.len() != n || p.second.len() != n || n == 0) {
                    return Err("every member needs the same positive number of points per side".into());
                }
                Ok(())
            }
            None => {
                positive("familySize", self.family_size)?;
                positive("pointsPerMember", self.points_per_member)?;
                positive("dim", self.dim)
            }
        }
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct ErmConfig {
    pub instance: InstanceSpec,
    /// Samples per class; defaults to `ceil(sampleConstant * ln |F|)`.
    pub samples_per_class: Option<usize>,
    pub sample_constant: f64,
    /// Robustness radius as a fraction of the set separation.
    pub epsilon_fraction: f64,
    pub held_out_per_class: usize,
    pub trials: usize,
}

impl Default for ErmConfig {
    fn default() -> Self {
        Self {
            instance: InstanceSpec { family_size: 16, ..InstanceSpec::default() },
            samples_per_class: None,
            sample_constant: 40.0,
            epsilon_fraction: 0.25,
            held_out_per_class: 2_000,
            trials: 5,
        }
    }
}

impl CommandConfig for ErmConfig {
    fn validate(&self) -> Result<(), String> {
        check_instance(&self.instance)?;
        if self.samples_per_class == Some(0) {
            return Err("samplesPerClass must be positive".into());
        }
        if !(self.sample_constant > 0.0) || !(self.epsilon_fraction >= 0.0) {
            return Err("sampleConstant must be positive and epsilonFraction non-negative".into());
        }
        positive("heldOutPerClass", self.held_out_per_class)?;
        positive("trials", self.trials)
    }

    fn set_seed(&mut self, seed: u64) {
        self.instance.seed = seed;
    }
}

/// Parses `text` as a configuration, or the defaults when `text` is `None`.
pub fn load<C: CommandConfig>(text: Option<&str>, seed: Option<u64>) -> Result<C, String> {
    let mut config: C = match text {
        Some(t) => serde_json::from_str(t).map_err(|e| format!("invalid config: {e}"))?,
        None => C::default(),
    };
    if let Some(s) = seed {
        config.set_seed(s);
    }
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        assert!(QuadratureConfig::default().validate().is_ok());
        assert!(InstanceConfig::default().validate().is_ok());
        assert!(RobustnessConfig::default().validate().is_ok());
        assert!(SqConfig::default().validate().is_ok());
        assert!(ChiConfig::default().validate().is_ok());
        assert!(CoverConfig::default().validate().is_ok());
        assert!(ErmConfig::default().validate().is_ok());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(load::<QuadratureConfig>(Some(r#"{"mMax": 3, "bogus": 1}"#), None).is_err());
        assert!(load::<InstanceConfig>(Some(r#"{"instance": {"d": 8, "extra": true}}"#), None).is_err());
    }

    #[test]
    fn zero_order_rejected() {
        assert!(load::<QuadratureConfig>(Some(r#"{"mMin": 0}"#), None).is_err());
    }

    #[test]
    fn seed_override_applies() {
        let c: ErmConfig = load(Some(r#"{"instance": {"seed": 3}}"#), Some(9)).unwrap();
        assert_eq!(c.instance.seed, 9);
    }
}
