use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};

use crate::error::{Error, Result};
use crate::mechanisms::{Mechanism, MechanismResult};
use crate::model::{self, Allocation, MarketInstance};

use super::{SolverSettings, SolverStatus};

/// Maximises `sum_s weights[s] * u_s` over the allocation constraints.
///
/// Only the optimal welfare is unique; which optimal vertex comes back is up
/// to the simplex pivoting and may change across solver versions. The result
/// is tagged WSO when `weights` equal the budgets (and are not all one), SO
/// otherwise.
pub fn solve_linear(
    instance: &MarketInstance,
    weights: &[f64],
    settings: &SolverSettings,
) -> Result<MechanismResult> {
    instance.validated()?;
    settings.validate()?;
    let shape = instance.shape();
    if weights.len() != shape.providers {
        return Err(Error::Dimension(format!(
            "{} weights for {} providers",
            weights.len(),
            shape.providers
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument(
            "welfare weights must be finite and non-negative".into(),
        ));
    }

    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let mut x_vars: Vec<Variable> =
        Vec::with_capacity(shape.providers * shape.nodes * shape.resources);
    let mut y_vars: Vec<Variable> = Vec::with_capacity(shape.providers * shape.cells);
    let mut j_vars: Vec<Variable> = Vec::with_capacity(shape.providers * shape.nodes);
    let mut u_vars: Vec<Variable> = Vec::with_capacity(shape.providers);
    for s in 0..shape.providers {
        for m in 0..shape.nodes {
            for r in 0..shape.resources {
                x_vars.push(problem.add_var(0.0, (0.0, instance.mec_capacity(m, r))));
            }
        }
        for c in 0..shape.cells {
            y_vars.push(problem.add_var(0.0, (0.0, instance.ran_capacity(c))));
        }
        for _ in 0..shape.nodes {
            j_vars.push(problem.add_var(0.0, (0.0, f64::INFINITY)));
        }
        u_vars.push(problem.add_var(weights[s], (0.0, f64::INFINITY)));
    }
    let x_at = |s: usize, m: usize, r: usize| x_vars[(s * shape.nodes + m) * shape.resources + r];
    let y_at = |s: usize, c: usize| y_vars[s * shape.cells + c];
    let j_at = |s: usize, m: usize| j_vars[s * shape.nodes + m];

    for s in 0..shape.providers {
        for m in 0..shape.nodes {
            for r in 0..shape.resources {
                let d = instance.mec_demand(s, r);
                problem.add_constraint(
                    [(j_at(s, m), 1.0), (x_at(s, m, r), -1.0 / d)],
                    ComparisonOp::Le,
                    0.0,
                );
            }
        }
        let mut mec_row = vec![(u_vars[s], 1.0)];
        mec_row.extend((0..shape.nodes).map(|m| (j_at(s, m), -1.0)));
        problem.add_constraint(mec_row, ComparisonOp::Le, 0.0);
        let mut ran_row = vec![(u_vars[s], 1.0)];
        ran_row.extend((0..shape.cells).map(|c| (y_at(s, c), -1.0 / instance.ran_demand(s, c))));
        problem.add_constraint(ran_row, ComparisonOp::Le, 0.0);
    }
    for m in 0..shape.nodes {
        for r in 0..shape.resources {
            let row: Vec<_> = (0..shape.providers).map(|s| (x_at(s, m, r), 1.0)).collect();
            problem.add_constraint(row, ComparisonOp::Le, instance.mec_capacity(m, r));
        }
    }
    for c in 0..shape.cells {
        let row: Vec<_> = (0..shape.providers).map(|s| (y_at(s, c), 1.0)).collect();
        problem.add_constraint(row, ComparisonOp::Le, instance.ran_capacity(c));
    }

    let outcome = problem
        .solve()
        .map_err(|e| Error::Solver(format!("linear program: {e}")))?;
    let optimal = outcome.is_optimal();
    let solution = outcome
        .into_solution()
        .map_err(|_| Error::Solver("linear program interrupted".into()))?;

    // simplex values can carry round-off just below zero
    let value = |v: Variable| solution.var_value(v).max(0.0);
    let allocation = Allocation::from_parts(
        shape,
        x_vars.iter().map(|&v| value(v)).collect(),
        y_vars.iter().map(|&v| value(v)).collect(),
    )?;
    let utilities = model::utilities(instance, &allocation)?;
    let unit = weights.iter().all(|&w| w == 1.0);
    let budget_weighted = weights
        .iter()
        .zip(&instance.providers)
        .all(|(w, p)| *w == p.budget);
    let mechanism = if budget_weighted && !unit {
        Mechanism::Wso
    } else {
        Mechanism::So
    };
    Ok(MechanismResult {
        mechanism,
        social_welfare: utilities.social_welfare(),
        utilities,
        allocation,
        objective_value: Some(solution.objective()),
        prices: None,
        status: if optimal {
            SolverStatus::Converged
        } else {
            SolverStatus::MaxIterations
        },
    })
}
