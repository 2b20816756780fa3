//! Optimality conditions of the equilibrium program, evaluated from a primal
//! point and its capacity prices.
//!
//! Multipliers are recovered from the prices rather than read from the
//! solver, so the report is an independent certificate:
//!
//! * `lambda_b[s,m,r] = p[m,r] * d[s,r]` (zero bound multiplier on `x`),
//! * `lambda_e[s] = min_c p[c] * d[s,c]`,
//! * `lambda_d[s] = B_s / u_s - lambda_e[s]`,
//! * `nu_g`, `nu_h` from the remaining stationarity equations, clipped at zero.
//!
//! Whatever the clipping removes shows up as a stationarity residual, and
//! negative multipliers show up as dual-feasibility violations.

use serde::{Deserialize, Serialize};

use crate::model::{self, MarketInstance};
use crate::solver::{EquilibriumSolution, Prices};

use super::Certificate;

/// Threshold above which a primal variable counts as purchased.
const POSITIVE: f64 = 1e-8;

/// Worst violation per condition family. Every entry is non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `B/u - lambda_d - lambda_e`.
    pub stationarity_utility: f64,
    /// `lambda_b / d - p + nu_f` on MEC allocations.
    pub stationarity_price: f64,
    /// `lambda_e / d - p + nu_g` on RAN allocations.
    pub stationarity_cell: f64,
    /// `lambda_d - sum_r lambda_b + nu_h` on job splits.
    pub stationarity_node: f64,
    /// `p * (capacity - load)`.
    pub complementarity_capacity: f64,
    /// Multiplier times slack for the job rows and the sign constraints.
    pub complementarity_sign: f64,
    /// Most negative multiplier, as a positive number.
    pub dual_feasibility: f64,
    /// Largest violation of any program constraint.
    pub primal_feasibility: f64,
    pub max_abs: f64,
}

impl KktResiduals {
    pub fn certificate(&self, tolerance: f64) -> Certificate {
        Certificate::from_residual("kkt", self.max_abs, tolerance)
    }
}

/// Job costs at the given prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BangPerBuckReport {
    pub nodes: usize,
    pub cells: usize,
    /// `q[s*M + m] = sum_r p[m,r] d[s,r]`, cost of one job's compute in node `m`.
    pub node_cost: Vec<f64>,
    /// `w[s*C + c] = p[c] d[s,c]`, cost of one job's bandwidth in cell `c`.
    pub cell_cost: Vec<f64>,
    /// Cheapest node plus cheapest cell per provider.
    pub q_min: Vec<f64>,
    /// `B_s / u_s`; infinite when `u_s = 0`.
    pub budget_per_utility: Vec<f64>,
}

impl BangPerBuckReport {
    #[inline]
    pub fn node_cost(&self, provider: usize, node: usize) -> f64 {
        self.node_cost[provider * self.nodes + node]
    }

    #[inline]
    pub fn cell_cost(&self, provider: usize, cell: usize) -> f64 {
        self.cell_cost[provider * self.cells + cell]
    }
}

pub fn bang_per_buck(
    instance: &MarketInstance,
    prices: &Prices,
    utilities: &[f64],
) -> BangPerBuckReport {
    let shape = instance.shape();
    let mut node_cost = Vec::with_capacity(shape.providers * shape.nodes);
    let mut cell_cost = Vec::with_capacity(shape.providers * shape.cells);
    let mut q_min = Vec::with_capacity(shape.providers);
    let mut budget_per_utility = Vec::with_capacity(shape.providers);
    for s in 0..shape.providers {
        let mut best_node = f64::INFINITY;
        for m in 0..shape.nodes {
            let q: f64 = (0..shape.resources)
                .map(|r| prices.mec(m, r) * instance.mec_demand(s, r))
                .sum();
            best_node = best_node.min(q);
            node_cost.push(q);
        }
        let mut best_cell = f64::INFINITY;
        for c in 0..shape.cells {
            let w = prices.ran(c) * instance.ran_demand(s, c);
            best_cell = best_cell.min(w);
            cell_cost.push(w);
        }
        q_min.push(best_node + best_cell);
        let u = utilities[s];
        budget_per_utility.push(if u > 0.0 {
            instance.budget(s) / u
        } else {
            f64::INFINITY
        });
    }
    BangPerBuckReport {
        nodes: shape.nodes,
        cells: shape.cells,
        node_cost,
        cell_cost,
        q_min,
        budget_per_utility,
    }
}

pub fn kkt_residuals(instance: &MarketInstance, solution: &EquilibriumSolution) -> KktResiduals {
    let shape = instance.shape();
    let alloc = &solution.allocation;
    let prices = &solution.prices;
    let u = &solution.utilities;

    let mut stat_u = 0.0_f64;
    let mut stat_x = 0.0_f64;
    let mut stat_y = 0.0_f64;
    let mut stat_j = 0.0_f64;
    let mut comp_cap = 0.0_f64;
    let mut comp_sign = 0.0_f64;
    let mut dual = 0.0_f64;
    let mut primal = 0.0_f64;

    for p in prices.mec.iter().chain(&prices.ran) {
        dual = dual.max(-p);
    }
    for m in 0..shape.nodes {
        for r in 0..shape.resources {
            let cap = instance.mec_capacity(m, r);
            let slack = cap - alloc.mec_load(m, r);
            primal = primal.max(-slack);
            comp_cap = comp_cap.max((prices.mec(m, r) * slack).abs());
        }
    }
    for c in 0..shape.cells {
        let slack = instance.ran_capacity(c) - alloc.ran_load(c);
        primal = primal.max(-slack);
        comp_cap = comp_cap.max((prices.ran(c) * slack).abs());
    }

    for s in 0..shape.providers {
        let budget = instance.budget(s);
        let us = u[s];
        primal = primal.max(-us);

        // RAN side
        let lambda_e = (0..shape.cells)
            .map(|c| prices.ran(c) * instance.ran_demand(s, c))
            .fold(f64::INFINITY, f64::min);
        dual = dual.max(-lambda_e);
        let mut ran_jobs = 0.0;
        for c in 0..shape.cells {
            let y = alloc.y(s, c);
            let d = instance.ran_demand(s, c);
            primal = primal.max(-y);
            ran_jobs += y / d;
            let nu_g = (prices.ran(c) - lambda_e / d).max(0.0);
            stat_y = stat_y.max((lambda_e / d - prices.ran(c) + nu_g).abs());
            comp_sign = comp_sign.max((y * nu_g).abs());
        }
        let e_slack = ran_jobs - us;
        primal = primal.max(-e_slack);
        comp_sign = comp_sign.max((lambda_e * e_slack).abs());

        // utility equation fixes lambda_d
        let lambda_d = if us > 0.0 {
            budget / us - lambda_e
        } else {
            f64::INFINITY
        };
        if us <= 0.0 {
            stat_u = f64::INFINITY;
        }
        dual = dual.max(-lambda_d);

        // MEC side
        let mut mec_jobs = 0.0;
        for m in 0..shape.nodes {
            let j = solution.job(s, m);
            primal = primal.max(-j);
            mec_jobs += j;
            let mut q = 0.0;
            for r in 0..shape.resources {
                let d = instance.mec_demand(s, r);
                let x = alloc.x(s, m, r);
                let lambda_b = prices.mec(m, r) * d;
                q += lambda_b;
                primal = primal.max(-x);
                let b_slack = x / d - j;
                primal = primal.max(-b_slack);
                comp_sign = comp_sign.max((lambda_b * b_slack).abs());
                // nu_f = 0 by construction
                stat_x = stat_x.max((lambda_b / d - prices.mec(m, r)).abs());
            }
            if lambda_d.is_finite() {
                let nu_h = (q - lambda_d).max(0.0);
                stat_j = stat_j.max((lambda_d - q + nu_h).abs());
                comp_sign = comp_sign.max((j * nu_h).abs());
            } else {
                stat_j = f64::INFINITY;
            }
        }
        let d_slack = mec_jobs - us;
        primal = primal.max(-d_slack);
        if lambda_d.is_finite() {
            comp_sign = comp_sign.max((lambda_d * d_slack).abs());
        }
    }

    let families = [
        stat_u,
        stat_x,
        stat_y,
        stat_j,
        comp_cap,
        comp_sign,
        dual,
        primal.max(0.0),
    ];
    let max_abs = families.iter().fold(0.0_f64, |acc, v| {
        if v.is_nan() {
            f64::INFINITY
        } else {
            acc.max(*v)
        }
    });
    KktResiduals {
        stationarity_utility: stat_u,
        stationarity_price: stat_x,
        stationarity_cell: stat_y,
        stationarity_node: stat_j,
        complementarity_capacity: comp_cap,
        complementarity_sign: comp_sign,
        dual_feasibility: dual.max(0.0),
        primal_feasibility: primal.max(0.0),
        max_abs,
    }
}

/// Checks the two equilibrium conditions at the given prices:
///
/// * optimal goods: `B_s/u_s <= q[s,m] + w[s,c]` for every node and cell, with
///   equality on the nodes and cells `s` actually uses;
/// * clearing: every priced resource is sold out and every budget is spent.
///
/// Utilities are re-evaluated from the allocation. Returns the three
/// sub-certificates in the order goods, clearing, budget.
pub fn check_market_equilibrium(
    instance: &MarketInstance,
    solution: &EquilibriumSolution,
    tolerance: f64,
) -> Vec<Certificate> {
    let shape = instance.shape();
    let alloc = &solution.allocation;
    let utilities = match model::utilities(instance, alloc) {
        Ok(u) => u,
        Err(e) => {
            return vec![Certificate::with_status(
                "me-goods",
                super::CertificateStatus::Undefined,
                e.to_string(),
            )]
        }
    };
    let report = bang_per_buck(instance, &solution.prices, &utilities);

    let mut goods = 0.0_f64;
    for s in 0..shape.providers {
        let bpu = report.budget_per_utility[s];
        let scale = bpu.max(1.0);
        for m in 0..shape.nodes {
            let used_node = solution.job(s, m) > POSITIVE;
            for c in 0..shape.cells {
                let cost = report.node_cost(s, m) + report.cell_cost(s, c);
                // never pay more per job than the cheapest route
                goods = goods.max((bpu - cost) / scale);
                if used_node && alloc.y(s, c) > POSITIVE {
                    goods = goods.max((bpu - cost).abs() / scale);
                }
            }
        }
    }

    let mut clearing = 0.0_f64;
    for m in 0..shape.nodes {
        for r in 0..shape.resources {
            let cap = instance.mec_capacity(m, r);
            let slack = (cap - alloc.mec_load(m, r)) / cap.max(1.0);
            clearing = clearing.max(solution.prices.mec(m, r).min(slack.abs()));
        }
    }
    for c in 0..shape.cells {
        let cap = instance.ran_capacity(c);
        let slack = (cap - alloc.ran_load(c)) / cap.max(1.0);
        clearing = clearing.max(solution.prices.ran(c).min(slack.abs()));
    }

    let mut budget = 0.0_f64;
    for s in 0..shape.providers {
        let spend = solution.prices.spend(alloc, s);
        budget = budget.max((spend - instance.budget(s)).abs() / instance.budget(s));
    }

    vec![
        Certificate::from_residual("me-goods", goods, tolerance),
        Certificate::from_residual("me-clearing", clearing, tolerance),
        Certificate::from_residual("me-budget", budget, tolerance),
    ]
}
