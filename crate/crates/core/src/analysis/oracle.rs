//! Brute-force reference for small instances, independent of the solvers.
//!
//! The feasible utility set is down-closed, and the MEC and RAN domains
//! decouple once the utility levels are fixed: a level vector is feasible iff
//! each domain can route `u_s` jobs for every provider. The oracle grids the
//! utilities of all providers but the last and computes the largest feasible
//! utility of the last one exactly, by enumerating the vertices of a tiny LP
//! per domain. The best grid point is then refined on successively finer
//! local grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MarketInstance, UtilityVector};

use super::welfare::nash_social_welfare_log;
use super::Certificate;

pub const ORACLE_MAX_PROVIDERS: usize = 3;
pub const ORACLE_MAX_NODES: usize = 2;
pub const ORACLE_MAX_CELLS: usize = 2;
pub const ORACLE_MAX_RESOURCES: usize = 3;
const MAX_GRID_POINTS: f64 = 4.0e6;
const REFINE_LEVELS: u32 = 4;
const REFINE_SPAN: i64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub utilities: UtilityVector,
    pub nsw_log: f64,
    pub resolution: f64,
    /// Grid step of the coarse search, `resolution * standalone utility`,
    /// maximised over providers. The local refinement only tightens it.
    pub error_bound: f64,
    /// Grid points evaluated, coarse and refined.
    pub evaluated: usize,
}

/// One domain in job space: `sites` locations, each with `resources`
/// capacities, and per-provider per-site demands.
struct Domain {
    sites: usize,
    resources: usize,
    capacity: Vec<f64>,
    demand: Vec<f64>,
}

impl Domain {
    fn mec(instance: &MarketInstance) -> Self {
        let shape = instance.shape();
        let mut capacity = Vec::new();
        for m in 0..shape.nodes {
            for r in 0..shape.resources {
                capacity.push(instance.mec_capacity(m, r));
            }
        }
        let mut demand = Vec::new();
        for s in 0..shape.providers {
            for _ in 0..shape.nodes {
                for r in 0..shape.resources {
                    demand.push(instance.mec_demand(s, r));
                }
            }
        }
        Self {
            sites: shape.nodes,
            resources: shape.resources,
            capacity,
            demand,
        }
    }

    fn ran(instance: &MarketInstance) -> Self {
        let shape = instance.shape();
        let capacity = (0..shape.cells).map(|c| instance.ran_capacity(c)).collect();
        let mut demand = Vec::new();
        for s in 0..shape.providers {
            for c in 0..shape.cells {
                demand.push(instance.ran_demand(s, c));
            }
        }
        Self {
            sites: shape.cells,
            resources: 1,
            capacity,
            demand,
        }
    }

    fn demand(&self, provider: usize, site: usize, resource: usize) -> f64 {
        self.demand[(provider * self.sites + site) * self.resources + resource]
    }

    /// Most jobs `target` can route given that every other provider `s`
    /// routes exactly `levels[s]`; `None` if the others alone do not fit.
    fn max_jobs(&self, target: usize, levels: &[f64]) -> Option<f64> {
        let others: Vec<usize> = (0..levels.len()).filter(|&s| s != target).collect();
        let last = self.sites - 1;
        // variables: free split t[s][k] for k < last, then z[k] for target
        let free = last;
        let n = others.len() * free + self.sites;
        let t_var = |o: usize, k: usize| o * free + k;
        let z_var = |k: usize| others.len() * free + k;

        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for o in 0..others.len() {
            let mut total = vec![0.0; n];
            for k in 0..free {
                let mut a = vec![0.0; n];
                a[t_var(o, k)] = -1.0;
                rows.push((a, 0.0));
                total[t_var(o, k)] = 1.0;
            }
            if free > 0 {
                rows.push((total, levels[others[o]]));
            }
        }
        for k in 0..self.sites {
            let mut a = vec![0.0; n];
            a[z_var(k)] = -1.0;
            rows.push((a, 0.0));
        }
        for k in 0..self.sites {
            for r in 0..self.resources {
                let mut a = vec![0.0; n];
                let mut rhs = self.capacity[k * self.resources + r];
                for (o, &s) in others.iter().enumerate() {
                    let d = self.demand(s, k, r);
                    if k < last {
                        a[t_var(o, k)] += d;
                    } else {
                        rhs -= d * levels[s];
                        for kk in 0..free {
                            a[t_var(o, kk)] -= d;
                        }
                    }
                }
                a[z_var(k)] = self.demand(target, k, r);
                rows.push((a, rhs));
            }
        }
        let mut objective = vec![0.0; n];
        for k in 0..self.sites {
            objective[z_var(k)] = 1.0;
        }
        maximize_by_vertices(&objective, &rows)
    }
}

/// `max c.v` subject to `a.v <= b` for bounded feasible regions in a handful
/// of dimensions: evaluates every basic solution.
fn maximize_by_vertices(objective: &[f64], rows: &[(Vec<f64>, f64)]) -> Option<f64> {
    let n = objective.len();
    let scale = rows.iter().fold(1.0_f64, |acc, (_, b)| acc.max(b.abs()));
    let feas_tol = 1e-9 * scale;
    let mut best: Option<f64> = None;
    let mut chosen = Vec::with_capacity(n);
    let mut matrix = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    let mut point = vec![0.0; n];
    for_each_subset(rows.len(), n, &mut chosen, &mut |subset| {
        for (i, &row) in subset.iter().enumerate() {
            matrix[i * n..(i + 1) * n].copy_from_slice(&rows[row].0);
            rhs[i] = rows[row].1;
        }
        if !solve_dense(n, &mut matrix, &mut rhs, &mut point) {
            return;
        }
        let feasible = rows
            .iter()
            .all(|(a, b)| a.iter().zip(&point).map(|(x, y)| x * y).sum::<f64>() <= b + feas_tol);
        if feasible {
            let value: f64 = objective.iter().zip(&point).map(|(c, v)| c * v).sum();
            if best.is_none_or(|b| value > b) {
                best = Some(value);
            }
        }
    });
    best
}

fn for_each_subset(
    total: usize,
    size: usize,
    chosen: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if chosen.len() == size {
        visit(chosen);
        return;
    }
    let start = chosen.last().map_or(0, |&i| i + 1);
    let remaining = size - chosen.len();
    for i in start..=total.saturating_sub(remaining) {
        if total < remaining {
            break;
        }
        chosen.push(i);
        for_each_subset(total, size, chosen, visit);
        chosen.pop();
    }
}

/// Gaussian elimination with partial pivoting; `false` when singular.
fn solve_dense(n: usize, a: &mut [f64], b: &mut [f64], out: &mut [f64]) -> bool {
    for col in 0..n {
        let (pivot_row, pivot) =
            (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold(
                    (col, 0.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if pivot < 1e-12 {
            return false;
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        for r in col + 1..n {
            let factor = a[r * n + col] / a[col * n + col];
            if factor != 0.0 {
                for k in col..n {
                    a[r * n + k] -= factor * a[col * n + k];
                }
                b[r] -= factor * b[col];
            }
        }
    }
    for row in (0..n).rev() {
        let mut v = b[row];
        for k in row + 1..n {
            v -= a[row * n + k] * out[k];
        }
        out[row] = v / a[row * n + row];
    }
    true
}

fn check_size(instance: &MarketInstance) -> Result<()> {
    let shape = instance.shape();
    if shape.providers > ORACLE_MAX_PROVIDERS
        || shape.nodes > ORACLE_MAX_NODES
        || shape.cells > ORACLE_MAX_CELLS
        || shape.resources > ORACLE_MAX_RESOURCES
    {
        return Err(Error::OracleTooLarge(format!(
            "S={}, M={}, R={}, C={} exceeds the oracle limits S<={ORACLE_MAX_PROVIDERS}, \
             M<={ORACLE_MAX_NODES}, R<={ORACLE_MAX_RESOURCES}, C<={ORACLE_MAX_CELLS}",
            shape.providers, shape.nodes, shape.resources, shape.cells
        )));
    }
    Ok(())
}

/// Largest utility `provider` can reach while every other provider keeps
/// exactly `utilities[s]`. `None` when the others' levels are infeasible.
pub fn max_utility_given(
    instance: &MarketInstance,
    provider: usize,
    utilities: &[f64],
) -> Result<Option<f64>> {
    instance.validated()?;
    check_size(instance)?;
    if utilities.len() != instance.provider_count() || provider >= utilities.len() {
        return Err(Error::Dimension(
            "utility vector does not match the instance".into(),
        ));
    }
    Ok(frontier(
        &Domain::mec(instance),
        &Domain::ran(instance),
        provider,
        utilities,
    ))
}

fn frontier(mec: &Domain, ran: &Domain, target: usize, levels: &[f64]) -> Option<f64> {
    let a = mec.max_jobs(target, levels)?;
    let b = ran.max_jobs(target, levels)?;
    Some(a.min(b).max(0.0))
}

struct Search<'a> {
    mec: Domain,
    ran: Domain,
    budgets: Vec<f64>,
    target: usize,
    instance: &'a MarketInstance,
    evaluated: usize,
}

impl Search<'_> {
    /// Log-NSW of the frontier point above `levels` (the last entry is overwritten).
    fn evaluate(&mut self, levels: &mut [f64]) -> Option<f64> {
        self.evaluated += 1;
        if levels[..self.target].iter().any(|&u| u <= 0.0) {
            return None;
        }
        let last = frontier(&self.mec, &self.ran, self.target, levels)?;
        levels[self.target] = last;
        let value = nash_social_welfare_log(levels, &self.budgets).ok()?;
        value.is_finite().then_some(value)
    }

    /// Scans the grid `center + step * k`, `k` in `[lo, hi]` per gridded
    /// coordinate, keeping the first strict improvement in lexicographic order.
    fn scan(&mut self, center: &[f64], steps: &[f64], lo: i64, hi: i64) -> Option<(f64, Vec<f64>)> {
        let dims = self.target;
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut k = vec![lo; dims];
        let mut levels = vec![0.0; dims + 1];
        loop {
            for d in 0..dims {
                levels[d] = center[d] + steps[d] * k[d] as f64;
            }
            if let Some(value) = self.evaluate(&mut levels) {
                if best.as_ref().is_none_or(|(b, _)| value > *b) {
                    best = Some((value, levels.clone()));
                }
            }
            // odometer
            let mut d = dims;
            loop {
                if d == 0 {
                    return best;
                }
                d -= 1;
                if k[d] < hi {
                    k[d] += 1;
                    for kk in k.iter_mut().skip(d + 1) {
                        *kk = lo;
                    }
                    break;
                }
            }
        }
    }
}

/// Grid search for the maximiser of `prod_s u_s^B_s` over feasible allocations.
///
/// Provider `s < S-1` is gridded at steps of `grid_resolution` times its
/// standalone utility; the last provider's utility is maximised exactly.
pub fn brute_force_nsw_oracle(
    instance: &MarketInstance,
    grid_resolution: f64,
) -> Result<OracleSolution> {
    instance.validated()?;
    check_size(instance)?;
    if !(grid_resolution > 0.0 && grid_resolution <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "grid resolution must lie in (0, 1], got {grid_resolution}"
        )));
    }
    let providers = instance.provider_count();
    let per_axis = (1.0 / grid_resolution).floor();
    if per_axis.powi(providers as i32 - 1) > MAX_GRID_POINTS {
        return Err(Error::OracleTooLarge(format!(
            "{per_axis}^{} grid points at resolution {grid_resolution}",
            providers - 1
        )));
    }
    let target = providers - 1;
    let steps: Vec<f64> = (0..target)
        .map(|s| grid_resolution * instance.standalone_utility(s))
        .collect();
    let mut search = Search {
        mec: Domain::mec(instance),
        ran: Domain::ran(instance),
        budgets: instance.budgets(),
        target,
        instance,
        evaluated: 0,
    };

    let origin = vec![0.0; target];
    let (mut best_value, mut best) = search
        .scan(&origin, &steps, 1, per_axis as i64)
        .ok_or_else(|| Error::Solver("oracle found no point with positive utilities".into()))?;
    let mut fine = steps.clone();
    for _ in 0..REFINE_LEVELS {
        fine.iter_mut().for_each(|h| *h /= REFINE_SPAN as f64);
        let center = best[..target].to_vec();
        if let Some((value, levels)) = search.scan(&center, &fine, -REFINE_SPAN, REFINE_SPAN) {
            if value > best_value {
                best_value = value;
                best = levels;
            }
        }
    }
    let error_bound = steps.iter().fold(0.0_f64, |acc, h| acc.max(*h));
    log::debug!(
        "oracle on {} providers: {} points, nsw_log {best_value:.9}",
        search.instance.provider_count(),
        search.evaluated
    );
    Ok(OracleSolution {
        utilities: UtilityVector(best),
        nsw_log: best_value,
        resolution: grid_resolution,
        error_bound,
        evaluated: search.evaluated,
    })
}

/// Pareto check: for every provider, the largest utility it could reach with
/// all others held at their level must equal its own. The inner maximisation
/// is exact; `oracle_resolution` times the standalone utility is the allowed
/// gap per provider.
pub fn check_pareto(
    instance: &MarketInstance,
    utilities: &[f64],
    oracle_resolution: f64,
) -> Result<Certificate> {
    instance.validated()?;
    check_size(instance)?;
    if utilities.len() != instance.provider_count() {
        return Err(Error::Dimension(
            "utility vector does not match the instance".into(),
        ));
    }
    let mec = Domain::mec(instance);
    let ran = Domain::ran(instance);
    let mut worst = 0.0_f64;
    for s in 0..utilities.len() {
        let scale = instance.standalone_utility(s);
        match frontier(&mec, &ran, s, utilities) {
            Some(best) => worst = worst.max((best - utilities[s]).abs() / scale),
            None => {
                return Ok(
                    Certificate::from_residual("pareto", f64::INFINITY, oracle_resolution)
                        .with_note("utility vector is not feasible"),
                )
            }
        }
    }
    Ok(Certificate::from_residual(
        "pareto",
        worst,
        oracle_resolution,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::tests::{scalar_instance, table_node_instance};

    #[test]
    fn scalar_closed_form() {
        let inst = scalar_instance([1.0, 1.0]);
        let sol = brute_force_nsw_oracle(&inst, 0.01).unwrap();
        assert!((sol.utilities[0] - 5.0).abs() < 0.02, "{:?}", sol.utilities);
        assert!((sol.utilities[1] - 2.5).abs() < 0.02);
        assert!((sol.error_bound - 0.1).abs() < 1e-12);
    }

    #[test]
    fn single_provider_hits_dominant_bound() {
        let inst = table_node_instance(&[1.0]);
        let sol = brute_force_nsw_oracle(&inst, 0.01).unwrap();
        assert!((sol.utilities[0] - 8.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_providers_split_evenly() {
        let inst = table_node_instance(&[1.0, 1.0]);
        let sol = brute_force_nsw_oracle(&inst, 0.01).unwrap();
        assert!((sol.utilities[0] - sol.utilities[1]).abs() <= sol.error_bound);
    }

    #[test]
    fn frontier_of_two_cells_uses_both() {
        let inst = scalar_instance([1.0, 1.0]);
        // provider 1 keeps 2.5 jobs (5 units), provider 0 gets the other 5
        let best = max_utility_given(&inst, 0, &[0.0, 2.5]).unwrap().unwrap();
        assert!((best - 5.0).abs() < 1e-9);
        // more than the node holds
        assert_eq!(max_utility_given(&inst, 0, &[0.0, 6.0]).unwrap(), None);
    }

    #[test]
    fn pareto_examples() {
        let inst = scalar_instance([1.0, 1.0]);
        assert!(check_pareto(&inst, &[5.0, 2.5], 0.01).unwrap().passed());
        assert!(check_pareto(&inst, &[10.0, 0.0], 0.01).unwrap().passed());
        assert!(!check_pareto(&inst, &[2.5, 2.5], 0.01).unwrap().passed());
        assert!(!check_pareto(&inst, &[6.0, 2.5], 0.01).unwrap().passed());
    }

    #[test]
    fn size_cap_is_enforced() {
        let inst = table_node_instance(&[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            brute_force_nsw_oracle(&inst, 0.1),
            Err(Error::OracleTooLarge(_))
        ));
        let inst = table_node_instance(&[1.0, 1.0, 1.0]);
        assert!(matches!(
            brute_force_nsw_oracle(&inst, 1e-4),
            Err(Error::OracleTooLarge(_))
        ));
        assert!(brute_force_nsw_oracle(&inst, 0.0).is_err());
    }
}
