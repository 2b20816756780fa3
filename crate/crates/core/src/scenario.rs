//! Experiment instances: service templates, heterogeneous deployments with
//! noisy demands, and the parameter sweeps of the sensitivity studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Cell, MarketInstance, Node, Provider};

/// Noisy demands never drop below this fraction of the nominal value.
pub const NOISE_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceTemplate {
    pub name: String,
    /// Cores per job.
    pub d_cpu: f64,
    /// GB per job.
    pub d_ram: f64,
    /// MHz per job, the same in every cell.
    pub d_ran: f64,
    pub budget: f64,
}

impl ServiceTemplate {
    fn new(name: &str, d_cpu: f64, d_ram: f64, d_ran: f64, budget: f64) -> Self {
        Self {
            name: name.to_string(),
            d_cpu,
            d_ram,
            d_ran,
            budget,
        }
    }

    pub fn cpu_intensive() -> Self {
        Self::new("cpu-intensive", 4.0, 8.0, 3.0, 1.0)
    }

    pub fn ram_intensive() -> Self {
        Self::new("ram-intensive", 1.0, 32.0, 3.0, 1.0)
    }

    pub fn bw_intensive() -> Self {
        Self::new("bw-intensive", 1.0, 8.0, 10.0, 1.5)
    }

    pub fn balanced() -> Self {
        Self::new("balanced", 5.0, 40.0, 5.0, 2.0)
    }

    /// The four reference service templates.
    pub fn catalogue() -> Vec<Self> {
        vec![
            Self::cpu_intensive(),
            Self::ram_intensive(),
            Self::bw_intensive(),
            Self::balanced(),
        ]
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.d_cpu, self.d_ram, self.d_ran, self.budget]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "template {:?} must have strictly positive demands and budget",
                self.name
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellGroup {
    pub count: usize,
    /// MHz per cell.
    pub capacity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeGroup {
    pub count: usize,
    pub cores: f64,
    /// GB per node.
    pub ram: f64,
}

fn default_templates() -> Vec<ServiceTemplate> {
    ServiceTemplate::catalogue()
}

fn default_noise() -> f64 {
    0.25
}

/// Infrastructure and provider population of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentTemplate {
    pub large_cells: CellGroup,
    pub small_cells: CellGroup,
    pub cpu_nodes: NodeGroup,
    pub ram_nodes: NodeGroup,
    pub provider_count: usize,
    /// Relative standard deviation of the Gaussian demand noise.
    #[serde(default = "default_noise")]
    pub noise_relative: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_templates")]
    pub templates: Vec<ServiceTemplate>,
    /// Template name per provider; random draw when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<Vec<String>>,
}

impl Default for DeploymentTemplate {
    /// Two 40 MHz and five 20 MHz cells, five CPU nodes (32 cores, 128 GB),
    /// five RAM nodes (16 cores, 256 GB) and fifteen providers.
    fn default() -> Self {
        Self {
            large_cells: CellGroup {
                count: 2,
                capacity: 40.0,
            },
            small_cells: CellGroup {
                count: 5,
                capacity: 20.0,
            },
            cpu_nodes: NodeGroup {
                count: 5,
                cores: 32.0,
                ram: 128.0,
            },
            ram_nodes: NodeGroup {
                count: 5,
                cores: 16.0,
                ram: 256.0,
            },
            provider_count: 15,
            noise_relative: default_noise(),
            seed: 0,
            templates: default_templates(),
            assignment: None,
        }
    }
}

impl DeploymentTemplate {
    /// Three providers (two CPU-intensive, one balanced) without noise, used
    /// by the budget sweep.
    pub fn budget_study() -> Self {
        Self {
            provider_count: 3,
            noise_relative: 0.0,
            assignment: Some(vec![
                "cpu-intensive".into(),
                "cpu-intensive".into(),
                "balanced".into(),
            ]),
            ..Self::default()
        }
    }

    /// Five large and five small cells shared by a balanced and a
    /// bandwidth-intensive provider, used by the node and cell sweeps.
    pub fn bottleneck_study() -> Self {
        Self {
            large_cells: CellGroup {
                count: 5,
                capacity: 40.0,
            },
            provider_count: 2,
            noise_relative: 0.0,
            assignment: Some(vec!["balanced".into(), "bw-intensive".into()]),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.cpu_nodes.count + self.ram_nodes.count == 0 {
            return bad("deployment needs at least one edge node".into());
        }
        if self.large_cells.count + self.small_cells.count == 0 {
            return bad("deployment needs at least one cell".into());
        }
        for group in [self.large_cells, self.small_cells] {
            if group.count > 0 && !(group.capacity.is_finite() && group.capacity > 0.0) {
                return bad(format!("cell capacity {} must be positive", group.capacity));
            }
        }
        for group in [self.cpu_nodes, self.ram_nodes] {
            let ok = [group.cores, group.ram]
                .iter()
                .all(|v| v.is_finite() && *v > 0.0);
            if group.count > 0 && !ok {
                return bad("node capacities must be positive".into());
            }
        }
        if self.provider_count == 0 {
            return bad("deployment needs at least one provider".into());
        }
        if !(self.noise_relative.is_finite() && self.noise_relative >= 0.0) {
            return bad(format!(
                "noise_relative {} must be non-negative",
                self.noise_relative
            ));
        }
        if self.templates.is_empty() {
            return bad("no service templates".into());
        }
        for template in &self.templates {
            template.validate()?;
        }
        if let Some(names) = &self.assignment {
            if names.len() != self.provider_count {
                return bad(format!(
                    "assignment lists {} templates for {} providers",
                    names.len(),
                    self.provider_count
                ));
            }
            for name in names {
                self.template(name)?;
            }
        }
        Ok(())
    }

    fn template(&self, name: &str) -> Result<&ServiceTemplate> {
        self.templates
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown service template {name:?}")))
    }

    fn nodes(&self) -> Vec<Node> {
        let mut nodes = Vec::with_capacity(self.cpu_nodes.count + self.ram_nodes.count);
        for i in 0..self.cpu_nodes.count {
            nodes.push(Node {
                name: format!("cpu-{i}"),
                capacity: vec![self.cpu_nodes.cores, self.cpu_nodes.ram],
            });
        }
        for i in 0..self.ram_nodes.count {
            nodes.push(Node {
                name: format!("ram-{i}"),
                capacity: vec![self.ram_nodes.cores, self.ram_nodes.ram],
            });
        }
        nodes
    }

    fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::with_capacity(self.large_cells.count + self.small_cells.count);
        for i in 0..self.large_cells.count {
            cells.push(Cell {
                name: format!("large-{i}"),
                capacity: self.large_cells.capacity,
            });
        }
        for i in 0..self.small_cells.count {
            cells.push(Cell {
                name: format!("small-{i}"),
                capacity: self.small_cells.capacity,
            });
        }
        cells
    }
}

/// How providers are matched to service templates.
#[derive(Debug, Clone, PartialEq)]
pub enum TemplateAssignment {
    /// Uniform draw from the deployment's templates.
    Random,
    Explicit(Vec<String>),
}

impl TemplateAssignment {
    pub fn from_deployment(deployment: &DeploymentTemplate) -> Self {
        match &deployment.assignment {
            Some(names) => TemplateAssignment::Explicit(names.clone()),
            None => TemplateAssignment::Random,
        }
    }
}

fn noisy(rng: &mut ChaCha8Rng, nominal: f64, relative: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (nominal * (1.0 + relative * z)).max(NOISE_FLOOR * nominal)
}

/// Builds one instance. Per provider the generator draws, in order, the
/// template (random assignment only) and the CPU, RAM and bandwidth noise;
/// the bandwidth draw is replicated in every cell. Budgets stay exact.
pub fn generate_instance(
    deployment: &DeploymentTemplate,
    assignment: &TemplateAssignment,
    seed: u64,
) -> Result<MarketInstance> {
    deployment.validate()?;
    if let TemplateAssignment::Explicit(names) = assignment {
        if names.len() != deployment.provider_count {
            return Err(Error::InvalidArgument(format!(
                "assignment lists {} templates for {} providers",
                names.len(),
                deployment.provider_count
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = deployment.cells();
    let noise = deployment.noise_relative;
    let mut providers = Vec::with_capacity(deployment.provider_count);
    for s in 0..deployment.provider_count {
        let template = match assignment {
            TemplateAssignment::Random => {
                &deployment.templates[rng.random_range(0..deployment.templates.len())]
            }
            TemplateAssignment::Explicit(names) => deployment.template(&names[s])?,
        };
        let d_cpu = noisy(&mut rng, template.d_cpu, noise);
        let d_ram = noisy(&mut rng, template.d_ram, noise);
        let d_ran = noisy(&mut rng, template.d_ran, noise);
        providers.push(Provider {
            name: format!("s{}", s + 1),
            template: Some(template.name.clone()),
            budget: template.budget,
            mec_demand: vec![d_cpu, d_ram],
            ran_demand: vec![d_ran; cells.len()],
        });
    }
    let instance = MarketInstance::new(
        vec!["cpu".to_string(), "ram".to_string()],
        deployment.nodes(),
        cells,
        providers,
    );
    instance.validated()?;
    Ok(instance)
}

/// Seed of the `index`-th instance of a batch: SplitMix64 of
/// `base + index * 0x9E3779B97F4A7C15`.
pub fn instance_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Budgets 1.0, 1.5, ..., 5.0.
pub fn default_budget_values() -> Vec<f64> {
    (0..9).map(|k| 1.0 + 0.5 * k as f64).collect()
}

/// One instance per budget value, varying only `provider`'s budget.
pub fn sweep_budget(
    base: &MarketInstance,
    provider: usize,
    values: &[f64],
) -> Result<Vec<MarketInstance>> {
    base.validated()?;
    if provider >= base.provider_count() {
        return Err(Error::InvalidArgument(format!(
            "provider {provider} out of range 0..{}",
            base.provider_count()
        )));
    }
    values
        .iter()
        .map(|&value| {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "budget {value} must be positive"
                )));
            }
            let mut instance = base.clone();
            instance.providers[provider].budget = value;
            Ok(instance)
        })
        .collect()
}

/// Applies a cumulative removal schedule of edge nodes. Element 0 of the
/// result is `base`; element `k` has the nodes of steps `1..=k` removed.
pub fn sweep_nodes(base: &MarketInstance, schedule: &[Vec<String>]) -> Result<Vec<MarketInstance>> {
    base.validated()?;
    let mut out = vec![base.clone()];
    let mut current = base.clone();
    for step in schedule {
        for name in step {
            let m = current
                .nodes
                .iter()
                .position(|n| &n.name == name)
                .ok_or_else(|| Error::InvalidArgument(format!("no node named {name:?}")))?;
            if current.nodes.len() == 1 {
                return Err(Error::InvalidArgument(
                    "cannot remove the last edge node".into(),
                ));
            }
            current.nodes.remove(m);
        }
        out.push(current.clone());
    }
    Ok(out)
}

/// Cell counterpart of [`sweep_nodes`]; per-cell demands are dropped along
/// with their cells.
pub fn sweep_cells(base: &MarketInstance, schedule: &[Vec<String>]) -> Result<Vec<MarketInstance>> {
    base.validated()?;
    let mut out = vec![base.clone()];
    let mut current = base.clone();
    for step in schedule {
        for name in step {
            let c = current
                .cells
                .iter()
                .position(|cell| &cell.name == name)
                .ok_or_else(|| Error::InvalidArgument(format!("no cell named {name:?}")))?;
            if current.cells.len() == 1 {
                return Err(Error::InvalidArgument("cannot remove the last cell".into()));
            }
            current.cells.remove(c);
            for provider in &mut current.providers {
                provider.ran_demand.remove(c);
            }
        }
        out.push(current.clone());
    }
    Ok(out)
}

fn names_with_prefix<'a>(names: impl Iterator<Item = &'a str>, prefix: &str) -> Vec<String> {
    names
        .filter(|n| n.starts_with(prefix))
        .map(str::to_string)
        .collect()
}

/// Removes one CPU node and one RAM node per step, last first, until one of
/// each remains.
pub fn default_node_schedule(instance: &MarketInstance) -> Vec<Vec<String>> {
    let cpu = names_with_prefix(instance.nodes.iter().map(|n| n.name.as_str()), "cpu-");
    let ram = names_with_prefix(instance.nodes.iter().map(|n| n.name.as_str()), "ram-");
    let steps = cpu.len().min(ram.len()).saturating_sub(1);
    (0..steps)
        .map(|k| {
            vec![
                cpu[cpu.len() - 1 - k].clone(),
                ram[ram.len() - 1 - k].clone(),
            ]
        })
        .collect()
}

/// Removes one small cell per step, last first, until one remains.
pub fn default_cell_schedule(instance: &MarketInstance) -> Vec<Vec<String>> {
    let small = names_with_prefix(instance.cells.iter().map(|c| c.name.as_str()), "small-");
    let steps = small.len().saturating_sub(1);
    (0..steps)
        .map(|k| vec![small[small.len() - 1 - k].clone()])
        .collect()
}
