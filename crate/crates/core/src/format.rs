//! TOML documents for instances, results and configuration.
//!
//! Instances are written at full precision so that a generated file replays
//! bit for bit. Results are rounded to 12 significant digits.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, Certificate};
use crate::error::{Error, Result};
use crate::mechanisms::{Mechanism, MechanismResult};
use crate::model::MarketInstance;
use crate::solver::{EquilibriumSolution, SolverStatus};

/// Significant digits kept in result documents and CSV tables.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// `value` rounded to [`SIGNIFICANT_DIGITS`]; non-finite values pass through.
pub fn round_sig(value: f64) -> f64 {
    if !value.is_finite() || value == 0.0 {
        return value;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, value)
        .parse()
        .unwrap_or(value)
}

/// Shortest text of the rounded value, in exponent form when very small or
/// very large; `inf`, `-inf` and `nan` for non-finite input.
pub fn format_number(value: f64) -> String {
    if value.is_nan() {
        "nan".to_string()
    } else if value.is_infinite() {
        if value > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        let v = round_sig(value);
        if v == 0.0 {
            // also covers -0
            "0".to_string()
        } else if v.abs() < 1e-4 || v.abs() >= 1e15 {
            format!("{v:e}")
        } else {
            v.to_string()
        }
    }
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn to_toml_string<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_toml_string(value)?)
}

/// Reads and validates an instance document.
pub fn read_instance(path: &Path) -> Result<MarketInstance> {
    let instance: MarketInstance = read_toml(path)?;
    instance.validated()?;
    Ok(instance)
}

pub fn write_instance(path: &Path, instance: &MarketInstance) -> Result<()> {
    write_toml(path, instance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationDocument {
    /// `mec[s][m][r]`.
    pub mec: Vec<Vec<Vec<f64>>>,
    /// `ran[s][c]`.
    pub ran: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricesDocument {
    /// `mec[m][r]` per resource unit.
    pub mec: Vec<Vec<f64>>,
    /// Per MHz.
    pub ran: Vec<f64>,
}

/// Interior-point diagnostics, present for the market equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
    pub objective_value: f64,
    /// `job_split[s][m]`.
    pub job_split: Vec<Vec<f64>>,
}

/// Everything `solve` writes for one mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub mechanism: Mechanism,
    pub status: SolverStatus,
    pub social_welfare: f64,
    /// `sum_s B_s ln u_s`.
    pub nsw_log: f64,
    pub utilities: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_value: Option<f64>,
    pub allocation: AllocationDocument,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prices: Option<PricesDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub certificates: Vec<Certificate>,
}

fn rounded(values: &[f64]) -> Vec<f64> {
    values.iter().copied().map(round_sig).collect()
}

impl ResultDocument {
    pub fn new(
        instance: &MarketInstance,
        result: &MechanismResult,
        solution: Option<&EquilibriumSolution>,
        certificates: Vec<Certificate>,
    ) -> Result<Self> {
        let shape = instance.shape();
        let alloc = &result.allocation;
        let mec = (0..shape.providers)
            .map(|s| {
                alloc
                    .mec_bundle(s)
                    .chunks(shape.resources)
                    .map(rounded)
                    .collect()
            })
            .collect();
        let ran = (0..shape.providers)
            .map(|s| rounded(alloc.ran_bundle(s)))
            .collect();
        let prices = result.prices.as_ref().map(|p| PricesDocument {
            mec: p.mec.chunks(shape.resources).map(rounded).collect(),
            ran: rounded(&p.ran),
        });
        let solver = solution.map(|sol| SolverReport {
            iterations: sol.iterations,
            primal_residual: round_sig(sol.primal_residual),
            dual_residual: round_sig(sol.dual_residual),
            duality_gap: round_sig(sol.duality_gap),
            objective_value: round_sig(sol.objective_value),
            job_split: sol.job_split.chunks(shape.nodes).map(rounded).collect(),
        });
        let nsw_log = analysis::nash_social_welfare_log(&result.utilities, &instance.budgets())?;
        Ok(Self {
            mechanism: result.mechanism,
            status: result.status,
            social_welfare: round_sig(result.social_welfare),
            nsw_log: round_sig(nsw_log),
            utilities: rounded(&result.utilities),
            objective_value: result.objective_value.map(round_sig),
            allocation: AllocationDocument { mec, ran },
            prices,
            solver,
            certificates: certificates
                .into_iter()
                .map(|mut c| {
                    c.residual = round_sig(c.residual);
                    c
                })
                .collect(),
        })
    }
}
