use serde::{Deserialize, Serialize};

use crate::mechanisms::Mechanism;
use crate::model::UtilityVector;
use crate::solver::SolverStatus;

use super::{Certificate, CertificateStatus};

/// One mechanism's outcome on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismMetrics {
    pub mechanism: Mechanism,
    pub status: SolverStatus,
    pub social_welfare: f64,
    /// `sum_s B_s ln u_s`, `-inf` when some provider gets nothing.
    pub nsw_log: f64,
    /// `SW / SW_so`; absent when SO was not run or has zero welfare.
    pub efficiency: Option<f64>,
    /// Share of providers with (numerically) zero utility.
    pub zero_utility_fraction: f64,
    pub utilities: UtilityVector,
}

/// Everything recorded about one instance of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub instance_id: usize,
    pub seed: u64,
    pub mechanisms: Vec<MechanismMetrics>,
    /// Certificates evaluated on the equilibrium (empty unless ME ran with
    /// certificates enabled).
    pub certificates: Vec<Certificate>,
    pub kkt_max_abs: Option<f64>,
    /// Worst residual among the market-equilibrium sub-certificates.
    pub me_max_residual: Option<f64>,
    /// Failure message when the instance could not be processed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl InstanceMetrics {
    pub fn mechanism(&self, mechanism: Mechanism) -> Option<&MechanismMetrics> {
        self.mechanisms.iter().find(|m| m.mechanism == mechanism)
    }

    pub fn certificate(&self, name: &str) -> Option<&Certificate> {
        self.certificates.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSummary {
    pub mechanism: Mechanism,
    pub runs: usize,
    pub converged: usize,
    pub mean_social_welfare: f64,
    pub min_social_welfare: f64,
    /// Mean over instances where NSW is positive.
    pub mean_nsw_log: Option<f64>,
    pub zero_nsw_fraction: f64,
    pub mean_zero_utility_fraction: f64,
    pub mean_efficiency: Option<f64>,
    pub min_efficiency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub name: String,
    /// Instances where the certificate applied.
    pub evaluated: usize,
    pub passed: usize,
    pub worst_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub instances: usize,
    pub failed_instances: usize,
    pub mechanisms: Vec<MechanismSummary>,
    pub certificates: Vec<CertificateSummary>,
    /// `1 / min eta_me` over the batch. An empirical proxy only: the price of
    /// anarchy is a worst case over all instances, not over a sample.
    pub poa_proxy: Option<f64>,
}

impl BatchSummary {
    pub fn mechanism(&self, mechanism: Mechanism) -> Option<&MechanismSummary> {
        self.mechanisms.iter().find(|m| m.mechanism == mechanism)
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn min(values: &[f64]) -> Option<f64> {
    values.iter().copied().reduce(f64::min)
}

pub fn summarize(rows: &[InstanceMetrics]) -> BatchSummary {
    let mut mechanisms = Vec::new();
    for mechanism in Mechanism::ALL {
        let runs: Vec<&MechanismMetrics> =
            rows.iter().filter_map(|r| r.mechanism(mechanism)).collect();
        if runs.is_empty() {
            continue;
        }
        let sw: Vec<f64> = runs.iter().map(|m| m.social_welfare).collect();
        let nsw: Vec<f64> = runs
            .iter()
            .map(|m| m.nsw_log)
            .filter(|v| v.is_finite())
            .collect();
        let eta: Vec<f64> = runs.iter().filter_map(|m| m.efficiency).collect();
        let zeros: Vec<f64> = runs.iter().map(|m| m.zero_utility_fraction).collect();
        mechanisms.push(MechanismSummary {
            mechanism,
            runs: runs.len(),
            converged: runs.iter().filter(|m| m.status.is_converged()).count(),
            mean_social_welfare: mean(&sw).unwrap_or(f64::NAN),
            min_social_welfare: min(&sw).unwrap_or(f64::NAN),
            mean_nsw_log: mean(&nsw),
            zero_nsw_fraction: (runs.len() - nsw.len()) as f64 / runs.len() as f64,
            mean_zero_utility_fraction: mean(&zeros).unwrap_or(f64::NAN),
            mean_efficiency: mean(&eta),
            min_efficiency: min(&eta),
        });
    }

    let mut certificates: Vec<CertificateSummary> = Vec::new();
    let applicable = rows
        .iter()
        .flat_map(|r| &r.certificates)
        .filter(|c| c.status != CertificateStatus::NotApplicable);
    for cert in applicable {
        let entry = match certificates.iter_mut().position(|c| c.name == cert.name) {
            Some(i) => &mut certificates[i],
            None => {
                certificates.push(CertificateSummary {
                    name: cert.name.clone(),
                    evaluated: 0,
                    passed: 0,
                    worst_residual: f64::NEG_INFINITY,
                });
                certificates.last_mut().expect("just pushed")
            }
        };
        entry.evaluated += 1;
        entry.passed += usize::from(cert.passed());
        if !cert.residual.is_nan() {
            entry.worst_residual = entry.worst_residual.max(cert.residual);
        }
    }

    let poa_proxy = mechanisms
        .iter()
        .find(|m| m.mechanism == Mechanism::Me)
        .and_then(|m| m.min_efficiency)
        .filter(|&e| e > 0.0)
        .map(|e| 1.0 / e);
    BatchSummary {
        instances: rows.len(),
        failed_instances: rows.iter().filter(|r| r.error.is_some()).count(),
        mechanisms,
        certificates,
        poa_proxy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(mechanism: Mechanism, sw: f64, eta: Option<f64>, nsw_log: f64) -> MechanismMetrics {
        MechanismMetrics {
            mechanism,
            status: SolverStatus::Converged,
            social_welfare: sw,
            nsw_log,
            efficiency: eta,
            zero_utility_fraction: if nsw_log.is_finite() { 0.0 } else { 0.5 },
            utilities: UtilityVector(vec![]),
        }
    }

    #[test]
    fn summary_statistics() {
        let rows: Vec<InstanceMetrics> = [(7.5, 0.75), (9.0, 0.9)]
            .iter()
            .enumerate()
            .map(|(i, &(sw, eta))| InstanceMetrics {
                instance_id: i,
                seed: 0,
                mechanisms: vec![
                    metrics(Mechanism::Me, sw, Some(eta), 1.0),
                    metrics(Mechanism::So, 10.0, Some(1.0), f64::NEG_INFINITY),
                ],
                certificates: vec![
                    Certificate::from_residual("kkt", 1e-9 * (i + 1) as f64, 1e-6),
                    Certificate::with_status("envy-freeness", CertificateStatus::NotApplicable, ""),
                ],
                kkt_max_abs: None,
                me_max_residual: None,
                error: None,
            })
            .collect();
        let summary = summarize(&rows);
        let me = summary.mechanism(Mechanism::Me).unwrap();
        assert!((me.mean_social_welfare - 8.25).abs() < 1e-12);
        assert_eq!(me.min_efficiency, Some(0.75));
        assert!((summary.poa_proxy.unwrap() - 1.0 / 0.75).abs() < 1e-12);
        let so = summary.mechanism(Mechanism::So).unwrap();
        assert_eq!(so.zero_nsw_fraction, 1.0);
        assert_eq!(so.mean_nsw_log, None);
        assert_eq!(summary.certificates[0].passed, 2);
        assert_eq!(summary.certificates[0].worst_residual, 2e-9);
        assert_eq!(summary.certificates.len(), 1);
        assert!(summary.mechanism(Mechanism::Ps).is_none());
    }
}
