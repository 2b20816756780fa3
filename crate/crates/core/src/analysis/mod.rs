//! Executable checks for the efficiency and fairness properties of the
//! mechanisms, plus a brute-force oracle for small instances.

mod kkt;
mod metrics;
mod oracle;
mod welfare;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use kkt::{
    bang_per_buck, check_market_equilibrium, kkt_residuals, BangPerBuckReport, KktResiduals,
};
pub use metrics::{
    summarize, BatchSummary, CertificateSummary, InstanceMetrics, MechanismMetrics,
    MechanismSummary,
};
pub use oracle::{
    brute_force_nsw_oracle, check_pareto, max_utility_given, OracleSolution, ORACLE_MAX_CELLS,
    ORACLE_MAX_NODES, ORACLE_MAX_PROVIDERS, ORACLE_MAX_RESOURCES,
};
pub use welfare::{
    check_envy_freeness, check_proportional_fairness, check_sharing_incentive,
    concentrated_allocation, efficiency, nash_social_welfare, nash_social_welfare_log,
    pf_tolerance, random_feasible_allocation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateStatus {
    Pass,
    Fail,
    /// The property does not apply to this instance (envy-freeness with unequal budgets).
    NotApplicable,
    /// The check cannot be evaluated, e.g. a zero utility in a ratio.
    Undefined,
}

impl CertificateStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CertificateStatus::Pass => "pass",
            CertificateStatus::Fail => "fail",
            CertificateStatus::NotApplicable => "not-applicable",
            CertificateStatus::Undefined => "undefined",
        }
    }
}

impl fmt::Display for CertificateStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one property check: the worst residual found and the tolerance
/// it was held to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub name: String,
    pub status: CertificateStatus,
    pub residual: f64,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Certificate {
    /// Passes iff `residual <= tolerance`; NaN residuals fail.
    pub fn from_residual(name: &str, residual: f64, tolerance: f64) -> Self {
        let status = if residual <= tolerance {
            CertificateStatus::Pass
        } else {
            CertificateStatus::Fail
        };
        Self {
            name: name.to_string(),
            status,
            residual,
            tolerance,
            note: None,
        }
    }

    pub fn with_status(name: &str, status: CertificateStatus, note: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            status,
            residual: f64::NAN,
            tolerance: f64::NAN,
            note: Some(note.into()),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status == CertificateStatus::Pass
    }
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.name, self.status)?;
        if self.residual.is_finite() || self.residual.is_infinite() {
            write!(
                f,
                " (residual {:.3e}, tol {:.1e})",
                self.residual, self.tolerance
            )?;
        }
        if let Some(note) = &self.note {
            write!(f, " [{note}]")?;
        }
        Ok(())
    }
}
