//! Problem datum and the bottleneck utility model.
//!
//! A provider's utility is the number of concurrent jobs it can run: the MEC
//! side sums, over edge nodes, the job count allowed by the node's dominant
//! resource, the RAN side sums the payloads each cell can carry, and the
//! utility is the smaller of the two domains.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unit declaration carried by every instance document. Capacities and
/// demands are never converted.
pub const UNITS: &str = "cpu=cores, ram=GB, ran=MHz, budget=money";

fn default_units() -> String {
    UNITS.to_string()
}

fn default_resource_types() -> Vec<String> {
    vec!["cpu".to_string(), "ram".to_string()]
}

/// An edge node offering `capacity[r]` units of each resource type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub capacity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub name: String,
    pub capacity: f64,
}

/// A budget-constrained service provider with its per-job demand profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provider {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    pub budget: f64,
    /// Per-job requirement of each MEC resource type.
    pub mec_demand: Vec<f64>,
    /// Per-job bandwidth required in each cell.
    pub ran_demand: Vec<f64>,
}

/// A full market instance: capacities, demand profiles and budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketInstance {
    #[serde(default = "default_units")]
    pub units: String,
    #[serde(default = "default_resource_types")]
    pub resource_types: Vec<String>,
    pub nodes: Vec<Node>,
    pub cells: Vec<Cell>,
    pub providers: Vec<Provider>,
}

/// Dimensions `(S, M, R, C)` shared by an instance and its allocations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub providers: usize,
    pub nodes: usize,
    pub resources: usize,
    pub cells: usize,
}

impl MarketInstance {
    pub fn new(
        resource_types: Vec<String>,
        nodes: Vec<Node>,
        cells: Vec<Cell>,
        providers: Vec<Provider>,
    ) -> Self {
        Self {
            units: default_units(),
            resource_types,
            nodes,
            cells,
            providers,
        }
    }

    pub fn shape(&self) -> Shape {
        Shape {
            providers: self.providers.len(),
            nodes: self.nodes.len(),
            resources: self.resource_types.len(),
            cells: self.cells.len(),
        }
    }

    pub fn provider_count(&self) -> usize {
        self.providers.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn resource_count(&self) -> usize {
        self.resource_types.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn mec_capacity(&self, node: usize, resource: usize) -> f64 {
        self.nodes[node].capacity[resource]
    }

    #[inline]
    pub fn ran_capacity(&self, cell: usize) -> f64 {
        self.cells[cell].capacity
    }

    #[inline]
    pub fn mec_demand(&self, provider: usize, resource: usize) -> f64 {
        self.providers[provider].mec_demand[resource]
    }

    #[inline]
    pub fn ran_demand(&self, provider: usize, cell: usize) -> f64 {
        self.providers[provider].ran_demand[cell]
    }

    #[inline]
    pub fn budget(&self, provider: usize) -> f64 {
        self.providers[provider].budget
    }

    pub fn budgets(&self) -> Vec<f64> {
        self.providers.iter().map(|p| p.budget).collect()
    }

    pub fn total_budget(&self) -> f64 {
        self.providers.iter().map(|p| p.budget).sum()
    }

    /// Jobs a provider could run if it owned every resource in the system.
    pub fn standalone_utility(&self, provider: usize) -> f64 {
        let mec: f64 = (0..self.node_count())
            .map(|m| {
                (0..self.resource_count())
                    .map(|r| self.mec_capacity(m, r) / self.mec_demand(provider, r))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        let ran: f64 = (0..self.cell_count())
            .map(|c| self.ran_capacity(c) / self.ran_demand(provider, c))
            .sum();
        mec.min(ran)
    }

    /// Returns `Err` with the full violation list if the instance is malformed.
    pub fn validated(&self) -> Result<&Self> {
        validate_instance(self).map_err(Error::InvalidInstance)?;
        Ok(self)
    }
}

/// One broken instance invariant, with the offending indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoProviders,
    NoNodes,
    NoResourceTypes,
    NoCells,
    NodeCapacityLength {
        node: usize,
        expected: usize,
        found: usize,
    },
    NonPositiveMecCapacity {
        node: usize,
        resource: usize,
        value: f64,
    },
    NonPositiveRanCapacity {
        cell: usize,
        value: f64,
    },
    MecDemandLength {
        provider: usize,
        expected: usize,
        found: usize,
    },
    RanDemandLength {
        provider: usize,
        expected: usize,
        found: usize,
    },
    NonPositiveMecDemand {
        provider: usize,
        resource: usize,
        value: f64,
    },
    NonPositiveRanDemand {
        provider: usize,
        cell: usize,
        value: f64,
    },
    NonPositiveBudget {
        provider: usize,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoProviders => write!(f, "no providers"),
            Violation::NoNodes => write!(f, "no edge nodes"),
            Violation::NoResourceTypes => write!(f, "no resource types"),
            Violation::NoCells => write!(f, "no cells"),
            Violation::NodeCapacityLength {
                node,
                expected,
                found,
            } => write!(
                f,
                "node {node} lists {found} capacities, expected {expected}"
            ),
            Violation::NonPositiveMecCapacity {
                node,
                resource,
                value,
            } => write!(
                f,
                "node {node} resource {resource} capacity {value} is not strictly positive"
            ),
            Violation::NonPositiveRanCapacity { cell, value } => {
                write!(f, "cell {cell} capacity {value} is not strictly positive")
            }
            Violation::MecDemandLength {
                provider,
                expected,
                found,
            } => write!(
                f,
                "provider {provider} lists {found} MEC demands, expected {expected}"
            ),
            Violation::RanDemandLength {
                provider,
                expected,
                found,
            } => write!(
                f,
                "provider {provider} lists {found} RAN demands, expected {expected}"
            ),
            Violation::NonPositiveMecDemand {
                provider,
                resource,
                value,
            } => write!(
                f,
                "provider {provider} resource {resource} demand {value} is not strictly positive"
            ),
            Violation::NonPositiveRanDemand {
                provider,
                cell,
                value,
            } => write!(
                f,
                "provider {provider} cell {cell} demand {value} is not strictly positive"
            ),
            Violation::NonPositiveBudget { provider, value } => {
                write!(
                    f,
                    "provider {provider} budget {value} is not strictly positive"
                )
            }
        }
    }
}

fn positive(value: f64) -> bool {
    value.is_finite() && value > 0.0
}

/// Lists every violated invariant. Never panics, whatever the input.
pub fn validate_instance(instance: &MarketInstance) -> std::result::Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    let shape = instance.shape();
    if shape.providers == 0 {
        violations.push(Violation::NoProviders);
    }
    if shape.nodes == 0 {
        violations.push(Violation::NoNodes);
    }
    if shape.resources == 0 {
        violations.push(Violation::NoResourceTypes);
    }
    if shape.cells == 0 {
        violations.push(Violation::NoCells);
    }

    for (m, node) in instance.nodes.iter().enumerate() {
        if node.capacity.len() != shape.resources {
            violations.push(Violation::NodeCapacityLength {
                node: m,
                expected: shape.resources,
                found: node.capacity.len(),
            });
        }
        for (r, &value) in node.capacity.iter().enumerate() {
            if !positive(value) {
                violations.push(Violation::NonPositiveMecCapacity {
                    node: m,
                    resource: r,
                    value,
                });
            }
        }
    }
    for (c, cell) in instance.cells.iter().enumerate() {
        if !positive(cell.capacity) {
            violations.push(Violation::NonPositiveRanCapacity {
                cell: c,
                value: cell.capacity,
            });
        }
    }
    for (s, provider) in instance.providers.iter().enumerate() {
        if provider.mec_demand.len() != shape.resources {
            violations.push(Violation::MecDemandLength {
                provider: s,
                expected: shape.resources,
                found: provider.mec_demand.len(),
            });
        }
        if provider.ran_demand.len() != shape.cells {
            violations.push(Violation::RanDemandLength {
                provider: s,
                expected: shape.cells,
                found: provider.ran_demand.len(),
            });
        }
        for (r, &value) in provider.mec_demand.iter().enumerate() {
            if !positive(value) {
                violations.push(Violation::NonPositiveMecDemand {
                    provider: s,
                    resource: r,
                    value,
                });
            }
        }
        for (c, &value) in provider.ran_demand.iter().enumerate() {
            if !positive(value) {
                violations.push(Violation::NonPositiveRanDemand {
                    provider: s,
                    cell: c,
                    value,
                });
            }
        }
        if !positive(provider.budget) {
            violations.push(Violation::NonPositiveBudget {
                provider: s,
                value: provider.budget,
            });
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Resource reservations for every provider: `x[s][m][r]` on edge nodes and
/// `y[s][c]` in cells, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    shape: Shape,
    mec: Vec<f64>,
    ran: Vec<f64>,
}

impl Allocation {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            mec: vec![0.0; shape.providers * shape.nodes * shape.resources],
            ran: vec![0.0; shape.providers * shape.cells],
        }
    }

    pub fn from_parts(shape: Shape, mec: Vec<f64>, ran: Vec<f64>) -> Result<Self> {
        if mec.len() != shape.providers * shape.nodes * shape.resources {
            return Err(Error::Dimension(format!(
                "MEC allocation has {} entries, expected {}",
                mec.len(),
                shape.providers * shape.nodes * shape.resources
            )));
        }
        if ran.len() != shape.providers * shape.cells {
            return Err(Error::Dimension(format!(
                "RAN allocation has {} entries, expected {}",
                ran.len(),
                shape.providers * shape.cells
            )));
        }
        Ok(Self { shape, mec, ran })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    fn mec_index(&self, provider: usize, node: usize, resource: usize) -> usize {
        (provider * self.shape.nodes + node) * self.shape.resources + resource
    }

    #[inline]
    pub fn x(&self, provider: usize, node: usize, resource: usize) -> f64 {
        self.mec[self.mec_index(provider, node, resource)]
    }

    #[inline]
    pub fn y(&self, provider: usize, cell: usize) -> f64 {
        self.ran[provider * self.shape.cells + cell]
    }

    pub fn set_x(&mut self, provider: usize, node: usize, resource: usize, value: f64) {
        let i = self.mec_index(provider, node, resource);
        self.mec[i] = value;
    }

    pub fn set_y(&mut self, provider: usize, cell: usize, value: f64) {
        self.ran[provider * self.shape.cells + cell] = value;
    }

    /// The provider's MEC bundle `X_s` as a flat `M*R` slice.
    pub fn mec_bundle(&self, provider: usize) -> &[f64] {
        let len = self.shape.nodes * self.shape.resources;
        &self.mec[provider * len..(provider + 1) * len]
    }

    /// The provider's RAN bundle `Y_s`.
    pub fn ran_bundle(&self, provider: usize) -> &[f64] {
        let len = self.shape.cells;
        &self.ran[provider * len..(provider + 1) * len]
    }

    pub fn mec_values(&self) -> &[f64] {
        &self.mec
    }

    pub fn ran_values(&self) -> &[f64] {
        &self.ran
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            shape: self.shape,
            mec: self.mec.iter().map(|v| v * factor).collect(),
            ran: self.ran.iter().map(|v| v * factor).collect(),
        }
    }

    /// Entry-wise midpoint of two allocations of the same shape.
    pub fn midpoint(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Dimension("allocations differ in shape".into()));
        }
        Ok(Self {
            shape: self.shape,
            mec: self
                .mec
                .iter()
                .zip(&other.mec)
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
            ran: self
                .ran
                .iter()
                .zip(&other.ran)
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        })
    }

    /// Total reservation of resource `r` in node `m`.
    pub fn mec_load(&self, node: usize, resource: usize) -> f64 {
        (0..self.shape.providers)
            .map(|s| self.x(s, node, resource))
            .sum()
    }

    pub fn ran_load(&self, cell: usize) -> f64 {
        (0..self.shape.providers).map(|s| self.y(s, cell)).sum()
    }

    /// Largest violation of non-negativity or capacity, zero when feasible.
    pub fn max_infeasibility(&self, instance: &MarketInstance) -> f64 {
        let mut worst = 0.0_f64;
        for &v in self.mec.iter().chain(&self.ran) {
            worst = worst.max(-v);
        }
        for m in 0..self.shape.nodes {
            for r in 0..self.shape.resources {
                worst = worst.max(self.mec_load(m, r) - instance.mec_capacity(m, r));
            }
        }
        for c in 0..self.shape.cells {
            worst = worst.max(self.ran_load(c) - instance.ran_capacity(c));
        }
        worst
    }
}

/// Concurrent-job counts, one per provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UtilityVector(pub Vec<f64>);

impl UtilityVector {
    pub fn social_welfare(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Deref for UtilityVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for UtilityVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

fn check_dims(instance: &MarketInstance, allocation: &Allocation, provider: usize) -> Result<()> {
    if allocation.shape() != instance.shape() {
        return Err(Error::Dimension(format!(
            "allocation shape {:?} does not match instance shape {:?}",
            allocation.shape(),
            instance.shape()
        )));
    }
    if provider >= instance.provider_count() {
        return Err(Error::Dimension(format!(
            "provider {provider} out of range 0..{}",
            instance.provider_count()
        )));
    }
    Ok(())
}

/// MEC job count of `provider` if it held the flat `M*R` bundle `bundle`.
pub(crate) fn mec_jobs_of_bundle(
    instance: &MarketInstance,
    provider: usize,
    bundle: &[f64],
) -> f64 {
    let resources = instance.resource_count();
    bundle
        .chunks_exact(resources)
        .map(|node| {
            node.iter()
                .enumerate()
                .map(|(r, &x)| x / instance.mec_demand(provider, r))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

pub(crate) fn ran_jobs_of_bundle(
    instance: &MarketInstance,
    provider: usize,
    bundle: &[f64],
) -> f64 {
    bundle
        .iter()
        .enumerate()
        .map(|(c, &y)| y / instance.ran_demand(provider, c))
        .sum()
}

/// Jobs `provider` can run concurrently in the MEC domain.
pub fn mec_jobs(
    instance: &MarketInstance,
    allocation: &Allocation,
    provider: usize,
) -> Result<f64> {
    check_dims(instance, allocation, provider)?;
    Ok(mec_jobs_of_bundle(
        instance,
        provider,
        allocation.mec_bundle(provider),
    ))
}

/// Job payloads `provider` can push through the RAN domain.
pub fn ran_jobs(
    instance: &MarketInstance,
    allocation: &Allocation,
    provider: usize,
) -> Result<f64> {
    check_dims(instance, allocation, provider)?;
    Ok(ran_jobs_of_bundle(
        instance,
        provider,
        allocation.ran_bundle(provider),
    ))
}

/// Bottleneck utility: the smaller of the MEC and RAN job counts.
pub fn utility(instance: &MarketInstance, allocation: &Allocation, provider: usize) -> Result<f64> {
    Ok(mec_jobs(instance, allocation, provider)?.min(ran_jobs(instance, allocation, provider)?))
}

/// Utility that `provider` would obtain from `owner`'s bundle.
pub fn utility_of_bundle(
    instance: &MarketInstance,
    allocation: &Allocation,
    provider: usize,
    owner: usize,
) -> Result<f64> {
    check_dims(instance, allocation, provider)?;
    check_dims(instance, allocation, owner)?;
    let mec = mec_jobs_of_bundle(instance, provider, allocation.mec_bundle(owner));
    let ran = ran_jobs_of_bundle(instance, provider, allocation.ran_bundle(owner));
    Ok(mec.min(ran))
}

pub fn utilities(instance: &MarketInstance, allocation: &Allocation) -> Result<UtilityVector> {
    (0..instance.provider_count())
        .map(|s| utility(instance, allocation, s))
        .collect::<Result<Vec<_>>>()
        .map(UtilityVector)
}

/// Per-node job counts `min_r x[s][m][r] / d[s][r]`, row-major `S*M`.
pub fn job_split(instance: &MarketInstance, allocation: &Allocation) -> Result<Vec<f64>> {
    check_dims(instance, allocation, 0)?;
    let shape = instance.shape();
    let mut split = Vec::with_capacity(shape.providers * shape.nodes);
    for s in 0..shape.providers {
        for m in 0..shape.nodes {
            let jobs = (0..shape.resources)
                .map(|r| allocation.x(s, m, r) / instance.mec_demand(s, r))
                .fold(f64::INFINITY, f64::min);
            split.push(jobs);
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_node_instance(providers: Vec<Provider>) -> MarketInstance {
        MarketInstance::new(
            default_resource_types(),
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

    fn cpu_intensive(name: &str, budget: f64) -> Provider {
        Provider {
            name: name.into(),
            template: None,
            budget,
            mec_demand: vec![4.0, 8.0],
            ran_demand: vec![3.0],
        }
    }

    fn single(x: [f64; 2], y: f64) -> (MarketInstance, Allocation) {
        let instance = one_node_instance(vec![cpu_intensive("s0", 1.0)]);
        let mut alloc = Allocation::zeros(instance.shape());
        alloc.set_x(0, 0, 0, x[0]);
        alloc.set_x(0, 0, 1, x[1]);
        alloc.set_y(0, 0, y);
        (instance, alloc)
    }

    #[test]
    fn mec_jobs_one_job_worth() {
        let (instance, alloc) = single([4.0, 8.0], 0.0);
        assert_eq!(mec_jobs(&instance, &alloc, 0).unwrap(), 1.0);
    }

    #[test]
    fn mec_jobs_whole_cpu_node_is_cpu_bound() {
        let (instance, alloc) = single([32.0, 128.0], 0.0);
        assert_eq!(mec_jobs(&instance, &alloc, 0).unwrap(), 8.0);
    }

    #[test]
    fn zero_allocation_gives_zero_jobs() {
        let (instance, alloc) = single([0.0, 0.0], 0.0);
        assert_eq!(mec_jobs(&instance, &alloc, 0).unwrap(), 0.0);
        assert_eq!(ran_jobs(&instance, &alloc, 0).unwrap(), 0.0);
        assert_eq!(utility(&instance, &alloc, 0).unwrap(), 0.0);
    }

    #[test]
    fn ran_jobs_large_cell() {
        let (instance, alloc) = single([0.0, 0.0], 40.0);
        let jobs = ran_jobs(&instance, &alloc, 0).unwrap();
        assert!((jobs - 40.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ran_jobs_sum_over_cells() {
        let mut instance = one_node_instance(vec![cpu_intensive("s0", 1.0)]);
        instance.cells.push(Cell {
            name: "large-1".into(),
            capacity: 40.0,
        });
        instance.providers[0].ran_demand = vec![3.0, 3.0];
        let mut alloc = Allocation::zeros(instance.shape());
        alloc.set_y(0, 0, 3.0);
        alloc.set_y(0, 1, 6.0);
        assert_eq!(ran_jobs(&instance, &alloc, 0).unwrap(), 3.0);
    }

    #[test]
    fn utility_is_domain_minimum() {
        let (instance, alloc) = single([32.0, 128.0], 40.0);
        assert_eq!(utility(&instance, &alloc, 0).unwrap(), 8.0);
        let (instance, alloc) = single([0.0, 0.0], 40.0);
        assert_eq!(utility(&instance, &alloc, 0).unwrap(), 0.0);
    }

    #[test]
    fn doubling_allocation_doubles_utility() {
        let (instance, alloc) = single([5.0, 7.0], 11.0);
        let base = utility(&instance, &alloc, 0).unwrap();
        let doubled = utility(&instance, &alloc.scaled(2.0), 0).unwrap();
        assert_eq!(doubled, 2.0 * base);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (instance, _) = single([0.0, 0.0], 0.0);
        let wrong = Allocation::zeros(Shape {
            providers: 2,
            nodes: 1,
            resources: 2,
            cells: 1,
        });
        assert!(matches!(
            mec_jobs(&instance, &wrong, 0),
            Err(Error::Dimension(_))
        ));
        let alloc = Allocation::zeros(instance.shape());
        assert!(matches!(
            utility(&instance, &alloc, 3),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn validation_names_zero_demand() {
        let mut instance =
            one_node_instance(vec![cpu_intensive("s0", 1.0), cpu_intensive("s1", 1.0)]);
        instance.providers[1].mec_demand[1] = 0.0;
        let violations = validate_instance(&instance).unwrap_err();
        assert_eq!(
            violations,
            vec![Violation::NonPositiveMecDemand {
                provider: 1,
                resource: 1,
                value: 0.0
            }]
        );
    }

    #[test]
    fn validation_flags_negative_budget_and_shape() {
        let mut instance = one_node_instance(vec![cpu_intensive("s0", -1.0)]);
        instance.providers[0].ran_demand.push(2.0);
        instance.nodes[0].capacity[0] = f64::NAN;
        let violations = validate_instance(&instance).unwrap_err();
        assert!(violations.contains(&Violation::NonPositiveBudget {
            provider: 0,
            value: -1.0
        }));
        assert!(violations.iter().any(|v| matches!(
            v,
            Violation::RanDemandLength {
                provider: 0,
                expected: 1,
                found: 2
            }
        )));
        assert!(violations.iter().any(|v| matches!(
            v,
            Violation::NonPositiveMecCapacity {
                node: 0,
                resource: 0,
                ..
            }
        )));
    }

    #[test]
    fn validation_of_empty_instance_lists_every_missing_dimension() {
        let instance = MarketInstance::new(vec![], vec![], vec![], vec![]);
        let violations = validate_instance(&instance).unwrap_err();
        assert_eq!(violations.len(), 4);
    }

    #[test]
    fn job_split_takes_dominant_resource() {
        let (instance, alloc) = single([8.0, 64.0], 0.0);
        assert_eq!(job_split(&instance, &alloc).unwrap(), vec![2.0]);
    }

    #[test]
    fn envy_bundle_utility_uses_viewer_demands() {
        let mut instance =
            one_node_instance(vec![cpu_intensive("s0", 1.0), cpu_intensive("s1", 1.0)]);
        instance.providers[1].mec_demand = vec![1.0, 32.0];
        let mut alloc = Allocation::zeros(instance.shape());
        alloc.set_x(0, 0, 0, 8.0);
        alloc.set_x(0, 0, 1, 64.0);
        alloc.set_y(0, 0, 30.0);
        // provider 1 looking at provider 0's bundle: min(8/1, 64/32) = 2
        assert_eq!(utility_of_bundle(&instance, &alloc, 1, 0).unwrap(), 2.0);
    }
}
