//! Market-equilibrium and welfare-maximising solvers.
//!
//! The equilibrium comes from the budget-weighted log program solved by the
//! interior-point method in [`ipm`]. The social-optimum variants are linear
//! programs over the same constraint set and go through a simplex solver, so
//! that their allocations sit on vertices.

mod ipm;
mod linear;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Allocation, MarketInstance, UtilityVector};

pub use ipm::ProgramObjective;
pub use linear::solve_linear;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverStatus {
    Converged,
    MaxIterations,
    InfeasibleNumerics,
}

impl SolverStatus {
    pub fn is_converged(self) -> bool {
        self == SolverStatus::Converged
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolverStatus::Converged => "converged",
            SolverStatus::MaxIterations => "max-iterations",
            SolverStatus::InfeasibleNumerics => "infeasible-numerics",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Reported status is `converged` when the largest KKT residual is below this.
    pub kkt_tolerance: f64,
    /// Smallest admissible utility inside the log domain.
    pub utility_floor: f64,
    pub max_iterations: usize,
    /// Fraction of the distance to the boundary taken by each step.
    pub step_fraction: f64,
    /// Iterations continue until residuals fall below `kkt_tolerance * target_ratio`.
    pub target_ratio: f64,
    /// Fraction of every capacity handed out at the starting point.
    pub initial_share: f64,
    /// Scale of the starting complementarity products.
    pub initial_mu: f64,
    /// Randomises the split of the starting point between providers.
    pub initial_seed: Option<u64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            kkt_tolerance: 1e-6,
            utility_floor: 1e-9,
            max_iterations: 200,
            step_fraction: 0.995,
            target_ratio: 1e-3,
            initial_share: 0.5,
            initial_mu: 1.0,
            initial_seed: None,
        }
    }
}

impl SolverSettings {
    pub fn with_tolerance(kkt_tolerance: f64) -> Self {
        Self {
            kkt_tolerance,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.kkt_tolerance) {
            return Err(Error::InvalidArgument(format!(
                "kkt_tolerance must be positive, got {}",
                self.kkt_tolerance
            )));
        }
        if !positive(self.utility_floor) {
            return Err(Error::InvalidArgument(format!(
                "utility_floor must be positive, got {}",
                self.utility_floor
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err(Error::InvalidArgument(
                "step_fraction must lie in (0, 1)".into(),
            ));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(Error::InvalidArgument(
                "target_ratio must lie in (0, 1]".into(),
            ));
        }
        if !(self.initial_share > 0.0 && self.initial_share < 1.0) {
            return Err(Error::InvalidArgument(
                "initial_share must lie in (0, 1)".into(),
            ));
        }
        if !positive(self.initial_mu) {
            return Err(Error::InvalidArgument("initial_mu must be positive".into()));
        }
        Ok(())
    }
}

/// Resource prices: `mec[m * R + r]` per unit of resource `r` in node `m`,
/// `ran[c]` per MHz in cell `c`. Stored non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prices {
    pub resources: usize,
    pub mec: Vec<f64>,
    pub ran: Vec<f64>,
}

impl Prices {
    #[inline]
    pub fn mec(&self, node: usize, resource: usize) -> f64 {
        self.mec[node * self.resources + resource]
    }

    #[inline]
    pub fn ran(&self, cell: usize) -> f64 {
        self.ran[cell]
    }

    /// Money `provider` pays for its bundle in `allocation`.
    pub fn spend(&self, allocation: &Allocation, provider: usize) -> f64 {
        let mec: f64 = allocation
            .mec_bundle(provider)
            .iter()
            .zip(&self.mec)
            .map(|(x, p)| x * p)
            .sum();
        let ran: f64 = allocation
            .ran_bundle(provider)
            .iter()
            .zip(&self.ran)
            .map(|(y, p)| y * p)
            .sum();
        mec + ran
    }
}

/// Primal-dual solution of the allocation program.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub allocation: Allocation,
    /// The program's utility variables `u_s`.
    pub utilities: UtilityVector,
    /// Jobs executed per node, row-major `S*M`.
    pub job_split: Vec<f64>,
    pub prices: Prices,
    /// Program objective at the returned point (`sum B_s ln u_s` for the equilibrium).
    pub objective_value: f64,
    pub solver_status: SolverStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Sum of complementarity products, equal to the primal-dual objective gap
    /// when the iterate is feasible.
    pub duality_gap: f64,
}

impl EquilibriumSolution {
    #[inline]
    pub fn job(&self, provider: usize, node: usize) -> f64 {
        self.job_split[provider * self.allocation.shape().nodes + node]
    }

    pub fn max_residual(&self) -> f64 {
        self.primal_residual
            .max(self.dual_residual)
            .max(self.duality_gap)
    }
}

/// Solves the program for an arbitrary mix of log and linear utility weights.
pub fn solve_interior(
    instance: &MarketInstance,
    objective: &ProgramObjective,
    settings: &SolverSettings,
) -> Result<EquilibriumSolution> {
    instance.validated()?;
    settings.validate()?;
    let providers = instance.provider_count();
    if objective.log_weights.len() != providers || objective.linear_weights.len() != providers {
        return Err(Error::Dimension(format!(
            "objective weights must have length {providers}"
        )));
    }
    let weights_ok = objective
        .log_weights
        .iter()
        .chain(&objective.linear_weights)
        .all(|w| w.is_finite() && *w >= 0.0);
    if !weights_ok {
        return Err(Error::InvalidArgument(
            "objective weights must be finite and non-negative".into(),
        ));
    }
    if objective
        .log_weights
        .iter()
        .chain(&objective.linear_weights)
        .all(|&w| w == 0.0)
    {
        return Err(Error::InvalidArgument(
            "objective has no positive weight".into(),
        ));
    }

    let out = ipm::solve(instance, objective, settings);
    let shape = instance.shape();
    let mut status = out.status;
    let floor_violated = out
        .u
        .iter()
        .zip(&objective.log_weights)
        .any(|(&u, &w)| w > 0.0 && u < settings.utility_floor);
    if floor_violated {
        status = SolverStatus::InfeasibleNumerics;
    }
    let objective_value = objective.value(&out.u);
    Ok(EquilibriumSolution {
        allocation: Allocation::from_parts(shape, out.x, out.y)?,
        utilities: UtilityVector(out.u),
        job_split: out.j,
        prices: Prices {
            resources: shape.resources,
            mec: out.mec_prices,
            ran: out.ran_prices,
        },
        objective_value,
        solver_status: status,
        iterations: out.iterations,
        primal_residual: out.primal_residual,
        dual_residual: out.dual_residual,
        duality_gap: out.duality_gap,
    })
}

/// Market equilibrium: maximises `sum_s B_s ln u_s` and reads prices off the
/// capacity duals.
pub fn solve_eg(
    instance: &MarketInstance,
    settings: &SolverSettings,
) -> Result<EquilibriumSolution> {
    instance.validated()?;
    solve_interior(
        instance,
        &ProgramObjective::eisenberg_gale(instance),
        settings,
    )
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{Cell, Node, Provider};

    pub(crate) fn table_node_instance(budgets: &[f64]) -> MarketInstance {
        let providers = budgets
            .iter()
            .enumerate()
            .map(|(s, &b)| Provider {
                name: format!("s{s}"),
                template: None,
                budget: b,
                mec_demand: vec![4.0, 8.0],
                ran_demand: vec![3.0],
            })
            .collect();
        MarketInstance::new(
            vec!["cpu".into(), "ram".into()],
            vec![Node {
                name: "cpu-0".into(),
                capacity: vec![32.0, 128.0],
            }],
            vec![Cell {
                name: "large-0".into(),
                capacity: 40.0,
            }],
            providers,
        )
    }

    /// One scalar resource of capacity 10 shared by demands 1 and 2; RAM and
    /// bandwidth are abundant.
    pub(crate) fn scalar_instance(budgets: [f64; 2]) -> MarketInstance {
        let provider = |s: usize, d: f64| Provider {
            name: format!("s{s}"),
            template: None,
            budget: budgets[s],
            mec_demand: vec![d, 1.0],
            ran_demand: vec![1.0],
        };
        MarketInstance::new(
            vec!["cpu".into(), "ram".into()],
            vec![Node {
                name: "n0".into(),
                capacity: vec![10.0, 1000.0],
            }],
            vec![Cell {
                name: "c0".into(),
                capacity: 1000.0,
            }],
            vec![provider(0, 1.0), provider(1, 2.0)],
        )
    }

    #[test]
    fn single_buyer_saturates_cpu() {
        let instance = table_node_instance(&[1.0]);
        let sol = solve_eg(&instance, &SolverSettings::default()).unwrap();
        assert_eq!(sol.solver_status, SolverStatus::Converged);
        assert!((sol.utilities[0] - 8.0).abs() < 1e-6, "{:?}", sol.utilities);
        assert!((sol.prices.mec(0, 0) - 1.0 / 32.0).abs() < 1e-6);
        assert!(sol.prices.mec(0, 1).abs() < 1e-6);
        assert!(sol.prices.ran(0).abs() < 1e-6);
    }

    #[test]
    fn identical_providers_split_evenly() {
        let instance = table_node_instance(&[1.0, 1.0]);
        let sol = solve_eg(&instance, &SolverSettings::default()).unwrap();
        assert!(sol.solver_status.is_converged());
        assert!((sol.utilities[0] - 4.0).abs() < 1e-6);
        assert!((sol.utilities[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn scalar_resource_closed_form() {
        // max ln x1 + ln(x2 / 2) s.t. x1 + x2 = 10  =>  x1 = x2 = 5
        let instance = scalar_instance([1.0, 1.0]);
        let sol = solve_eg(&instance, &SolverSettings::default()).unwrap();
        assert!(sol.solver_status.is_converged());
        assert!((sol.utilities[0] - 5.0).abs() < 1e-6);
        assert!((sol.utilities[1] - 2.5).abs() < 1e-6);
        assert!((sol.allocation.x(0, 0, 0) - 5.0).abs() < 1e-5);
        assert!((sol.allocation.x(1, 0, 0) - 5.0).abs() < 1e-5);
    }

    #[test]
    fn settings_are_validated() {
        let instance = table_node_instance(&[1.0]);
        let bad = SolverSettings {
            kkt_tolerance: 0.0,
            ..SolverSettings::default()
        };
        assert!(matches!(
            solve_eg(&instance, &bad),
            Err(Error::InvalidArgument(_))
        ));
        let bad = SolverSettings {
            utility_floor: -1.0,
            ..SolverSettings::default()
        };
        assert!(matches!(
            solve_eg(&instance, &bad),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn malformed_instance_is_rejected() {
        let mut instance = table_node_instance(&[1.0]);
        instance.providers[0].budget = 0.0;
        assert!(matches!(
            solve_eg(&instance, &SolverSettings::default()),
            Err(Error::InvalidInstance(_))
        ));
    }

    #[test]
    fn iteration_cap_is_flagged_with_best_iterate() {
        let instance = table_node_instance(&[1.0, 2.0]);
        let settings = SolverSettings {
            max_iterations: 2,
            ..SolverSettings::default()
        };
        let sol = solve_eg(&instance, &settings).unwrap();
        assert_eq!(sol.solver_status, SolverStatus::MaxIterations);
        assert!(sol.utilities.iter().all(|u| u.is_finite() && *u > 0.0));
    }
}
