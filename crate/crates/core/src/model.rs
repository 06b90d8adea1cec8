//! Heterogeneous multi-server queue description.

use serde::{Deserialize, Serialize};

use crate::distributions::{BatchLaw, DistributionSpec};
use crate::error::{QaError, Result};

/// The arrival process: one renewal stream, a superposition of independent
/// renewal streams, or a renewal stream of batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalSpec {
    Single { law: DistributionSpec },
    Superposed { laws: Vec<DistributionSpec> },
    Batch { law: DistributionSpec, batch: BatchLaw },
}

impl ArrivalSpec {
    /// Long-run customer arrival rate λ₀.
    pub fn rate(&self) -> f64 {
        match self {
            ArrivalSpec::Single { law } => law.rate(),
            ArrivalSpec::Superposed { laws } => laws.iter().map(|l| l.rate()).sum(),
            ArrivalSpec::Batch { law, batch } => batch.mean() * law.rate(),
        }
    }

    /// The inter-arrival laws, one per stream.
    pub fn streams(&self) -> Vec<&DistributionSpec> {
        match self {
            ArrivalSpec::Single { law } | ArrivalSpec::Batch { law, .. } => vec![law],
            ArrivalSpec::Superposed { laws } => laws.iter().collect(),
        }
    }

    pub fn batch(&self) -> Option<&BatchLaw> {
        match self {
            ArrivalSpec::Batch { batch, .. } => Some(batch),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let streams = self.streams();
        if streams.is_empty() {
            return Err(QaError::InvalidModel("at least one arrival stream is required".into()));
        }
        for law in &streams {
            law.validate()?;
        }
        match self {
            ArrivalSpec::Batch { batch, .. } => batch.validate(),
            _ => {
                if streams.iter().any(|l| l.atom_at_zero() > 0.0) {
                    Err(QaError::InvalidModel(
                        "inter-arrival times with an atom at zero are only allowed in batch mode".into(),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// How idle servers are chosen when fewer customers wait than servers are free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// A uniformly random subset of the free servers.
    #[default]
    UniformRandom,
    LowestIndex,
    /// Free servers in decreasing order of service rate.
    FastestFirst,
}

/// Model as written in a config, before validation. `QueueModel::try_from`
/// expands the shorthand and validates.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub k: Option<usize>,
    pub arrival: ArrivalSpec,
    pub services: Vec<DistributionSpec>,
    #[serde(default)]
    pub selection: SelectionRule,
}

/// A `k`-server FCFS queue with renewal-type arrivals and independent
/// per-server service laws.
///
/// In configs, a single service law together with `k > 1` describes `k`
/// identical servers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelConfig")]
pub struct QueueModel {
    pub k: usize,
    pub arrival: ArrivalSpec,
    pub services: Vec<DistributionSpec>,
    pub selection: SelectionRule,
}

impl TryFrom<ModelConfig> for QueueModel {
    type Error = QaError;

    fn try_from(raw: ModelConfig) -> Result<Self> {
        let services = match raw.k {
            Some(k) if raw.services.len() == 1 && k > 1 => vec![raw.services[0].clone(); k],
            Some(k) if k != raw.services.len() => {
                return Err(QaError::InvalidModel(format!(
                    "k = {k} but {} service laws were given",
                    raw.services.len()
                )))
            }
            _ => raw.services,
        };
        QueueModel::new(raw.arrival, services, raw.selection)
    }
}

impl QueueModel {
    pub fn new(arrival: ArrivalSpec, services: Vec<DistributionSpec>, selection: SelectionRule) -> Result<Self> {
        let model = QueueModel {
            k: services.len(),
            arrival,
            services,
            selection,
        };
        model.validate()?;
        Ok(model)
    }

    /// Single renewal arrivals with the default selection rule.
    pub fn single(arrival: DistributionSpec, services: Vec<DistributionSpec>) -> Result<Self> {
        Self::new(ArrivalSpec::Single { law: arrival }, services, SelectionRule::default())
    }

    pub fn with_selection(mut self, selection: SelectionRule) -> Self {
        self.selection = selection;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.services.len() != self.k {
            return Err(QaError::InvalidModel("need k >= 1 servers with one law each".into()));
        }
        self.arrival.validate()?;
        for s in &self.services {
            s.validate()?;
        }
        Ok(())
    }

    pub fn arrival_rate(&self) -> f64 {
        self.arrival.rate()
    }

    pub fn service_rates(&self) -> Vec<f64> {
        self.services.iter().map(|s| s.rate()).collect()
    }

    /// Traffic intensity λ₀ / Σλᵢ.
    pub fn rho(&self) -> f64 {
        self.arrival_rate() / self.service_rates().iter().sum::<f64>()
    }

    /// Traffic intensity against the servers in `subset` only.
    pub fn rho_subset(&self, subset: &[usize]) -> f64 {
        let cap: f64 = subset.iter().map(|&i| self.services[i].rate()).sum();
        if cap == 0.0 {
            f64::INFINITY
        } else {
            self.arrival_rate() / cap
        }
    }

    pub fn ensure_stable(&self) -> Result<()> {
        let rho = self.rho();
        if rho < 1.0 {
            Ok(())
        } else {
            Err(QaError::Unstable { rho })
        }
    }

    /// Servers with heavy-tailed service laws (K₀).
    pub fn heavy_servers(&self) -> Vec<usize> {
        (0..self.k).filter(|&i| self.services[i].tail_info().is_heavy()).collect()
    }

    /// Servers with light-tailed service laws (K \ K₀).
    pub fn light_servers(&self) -> Vec<usize> {
        (0..self.k).filter(|&i| !self.services[i].tail_info().is_heavy()).collect()
    }

    /// The model keeping only the servers in `subset`, in the given order.
    pub fn restricted(&self, subset: &[usize]) -> Result<QueueModel> {
        QueueModel::new(
            self.arrival.clone(),
            subset.iter().map(|&i| self.services[i].clone()).collect(),
            self.selection,
        )
    }

    /// The model with every time scaled by `c`.
    pub fn time_scaled(&self, c: f64) -> Result<QueueModel> {
        let arrival = match &self.arrival {
            ArrivalSpec::Single { law } => ArrivalSpec::Single { law: law.scaled(c)? },
            ArrivalSpec::Superposed { laws } => ArrivalSpec::Superposed {
                laws: laws.iter().map(|l| l.scaled(c)).collect::<Result<_>>()?,
            },
            ArrivalSpec::Batch { law, batch } => ArrivalSpec::Batch {
                law: law.scaled(c)?,
                batch: batch.clone(),
            },
        };
        QueueModel::new(
            arrival,
            self.services.iter().map(|s| s.scaled(c)).collect::<Result<_>>()?,
            self.selection,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_shorthand_replicates_service() {
        let json = r#"{
            "k": 2,
            "arrival": {"kind": "single", "law": {"family": "exponential", "params": {"rate": 0.7}}},
            "services": [{"family": "exponential", "params": {"rate": 0.5}}]
        }"#;
        let m: QueueModel = serde_json::from_str(json).unwrap();
        assert_eq!(m.k, 2);
        assert!((m.rho() - 0.7).abs() < 1e-15);
        assert_eq!(m.selection, SelectionRule::UniformRandom);
    }

    #[test]
    fn rejects_unknown_keys_and_zero_atoms_outside_batch() {
        let json = r#"{
            "arrival": {"kind": "single", "law": {"family": "exponential", "params": {"rate": 0.7}}},
            "services": [{"family": "exponential", "params": {"rate": 0.5}}],
            "discipline": "fcfs"
        }"#;
        assert!(serde_json::from_str::<QueueModel>(json).is_err());
        let atom = DistributionSpec::PointMassMix {
            p0: 0.2,
            rest: Box::new(DistributionSpec::Exponential { rate: 1.0 }),
        };
        assert!(QueueModel::single(atom.clone(), vec![DistributionSpec::Exponential { rate: 2.0 }]).is_err());
        let batch = ArrivalSpec::Batch {
            law: atom,
            batch: BatchLaw::Deterministic { size: 1 },
        };
        assert!(QueueModel::new(batch, vec![DistributionSpec::Exponential { rate: 2.0 }], SelectionRule::LowestIndex).is_ok());
    }
}
