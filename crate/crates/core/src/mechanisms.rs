//! A common interface over the four allocation mechanisms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, Allocation, MarketInstance, UtilityVector};
use crate::solver::{self, EquilibriumSolution, Prices, SolverSettings, SolverStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mechanism {
    /// Market equilibrium.
    #[serde(rename = "ME")]
    Me,
    /// Social optimum, unweighted sum of utilities.
    #[serde(rename = "SO")]
    So,
    /// Budget-weighted social optimum.
    #[serde(rename = "WSO")]
    Wso,
    /// Proportional sharing.
    #[serde(rename = "PS")]
    Ps,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [Mechanism::Me, Mechanism::So, Mechanism::Wso, Mechanism::Ps];

    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Me => "ME",
            Mechanism::So => "SO",
            Mechanism::Wso => "WSO",
            Mechanism::Ps => "PS",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ME" => Ok(Mechanism::Me),
            "SO" => Ok(Mechanism::So),
            "WSO" => Ok(Mechanism::Wso),
            "PS" => Ok(Mechanism::Ps),
            other => Err(Error::InvalidArgument(format!(
                "unknown mechanism {other:?} (expected ME, SO, WSO or PS)"
            ))),
        }
    }
}

/// Outcome of one mechanism on one instance. Utilities are always recomputed
/// from the allocation with the bottleneck model.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismResult {
    pub mechanism: Mechanism,
    pub utilities: UtilityVector,
    pub allocation: Allocation,
    pub social_welfare: f64,
    /// Optimal program objective where one exists (log objective for ME,
    /// weighted welfare for SO/WSO).
    pub objective_value: Option<f64>,
    /// Equilibrium prices, ME only.
    pub prices: Option<Prices>,
    pub status: SolverStatus,
}

impl MechanismResult {
    /// Market-equilibrium result built from a solved program.
    pub fn from_equilibrium(
        instance: &MarketInstance,
        solution: &EquilibriumSolution,
    ) -> Result<Self> {
        let utilities = model::utilities(instance, &solution.allocation)?;
        Ok(MechanismResult {
            mechanism: Mechanism::Me,
            social_welfare: utilities.social_welfare(),
            utilities,
            allocation: solution.allocation.clone(),
            objective_value: Some(solution.objective_value),
            prices: Some(solution.prices.clone()),
            status: solution.solver_status,
        })
    }
}

/// Each provider gets the budget share `B_s / sum B` of every resource.
pub fn allocate_proportional_sharing(instance: &MarketInstance) -> Result<MechanismResult> {
    instance.validated()?;
    let shape = instance.shape();
    let total = instance.total_budget();
    let mut allocation = Allocation::zeros(shape);
    for s in 0..shape.providers {
        let share = instance.budget(s) / total;
        for m in 0..shape.nodes {
            for r in 0..shape.resources {
                allocation.set_x(s, m, r, share * instance.mec_capacity(m, r));
            }
        }
        for c in 0..shape.cells {
            allocation.set_y(s, c, share * instance.ran_capacity(c));
        }
    }
    let utilities = model::utilities(instance, &allocation)?;
    Ok(MechanismResult {
        mechanism: Mechanism::Ps,
        social_welfare: utilities.social_welfare(),
        utilities,
        allocation,
        objective_value: None,
        prices: None,
        status: SolverStatus::Converged,
    })
}

/// Runs `mechanism` and re-evaluates utilities from the returned allocation.
pub fn run_mechanism(
    instance: &MarketInstance,
    mechanism: Mechanism,
    settings: &SolverSettings,
) -> Result<MechanismResult> {
    let mut result = match mechanism {
        Mechanism::Me => {
            let sol = solver::solve_eg(instance, settings)?;
            MechanismResult::from_equilibrium(instance, &sol)?
        }
        Mechanism::So => {
            let weights = vec![1.0; instance.provider_count()];
            solver::solve_linear(instance, &weights, settings)?
        }
        Mechanism::Wso => solver::solve_linear(instance, &instance.budgets(), settings)?,
        Mechanism::Ps => allocate_proportional_sharing(instance)?,
    };
    result.mechanism = mechanism;
    Ok(result)
}
