//! Batch experiments, sensitivity sweeps and the command implementations
//! behind the `slicemarket` binary.
//!
//! Every table is written with a fixed column order. A plan and a seed
//! determine the output bytes, whatever the worker count.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, check_envy_freeness, check_market_equilibrium, check_sharing_incentive, kkt_residuals,
    BatchSummary, Certificate, CertificateStatus, InstanceMetrics, MechanismMetrics,
};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::format::{self, format_number, ResultDocument};
use crate::mechanisms::{allocate_proportional_sharing, run_mechanism, Mechanism, MechanismResult};
use crate::model::MarketInstance;
use crate::scenario::{
    default_budget_values, default_cell_schedule, default_node_schedule, generate_instance,
    instance_seed, sweep_budget, sweep_cells, sweep_nodes, DeploymentTemplate, TemplateAssignment,
};
use crate::solver::{solve_eg, SolverSettings, SolverStatus};

/// Environment variable naming the directory searched for configuration files.
pub const CONFIG_DIR_ENV: &str = "SLICEMARKET_CONFIG_DIR";
/// File looked up in the configuration directory when `--config` is absent.
pub const DEFAULT_CONFIG_FILE: &str = "slicemarket.toml";
/// Tolerance of the market-equilibrium sub-certificates.
pub const ME_TOLERANCE: f64 = 1e-5;
/// Tolerance of the sharing-incentive and envy-freeness certificates.
pub const FAIRNESS_TOLERANCE: f64 = 1e-6;
/// Utilities at or below this count as zero.
pub const ZERO_UTILITY: f64 = 1e-9;

pub const INSTANCE_COLUMNS: [&str; 14] = [
    "instance_id",
    "seed",
    "mechanism",
    "status",
    "social_welfare",
    "nsw_log",
    "eta",
    "zero_utility_fraction",
    "kkt_pass",
    "me_pass",
    "sharing_incentive_pass",
    "kkt_max_abs",
    "me_max_residual",
    "utilities",
];
pub const UTILITY_COLUMNS: [&str; 4] = ["instance_id", "mechanism", "provider", "utility"];
pub const SUMMARY_COLUMNS: [&str; 10] = [
    "mechanism",
    "runs",
    "converged",
    "mean_social_welfare",
    "min_social_welfare",
    "mean_nsw_log",
    "zero_nsw_fraction",
    "mean_zero_utility_fraction",
    "mean_eta",
    "min_eta",
];
pub const CERTIFICATE_COLUMNS: [&str; 5] = [
    "certificate",
    "evaluated",
    "passed",
    "pass_rate",
    "worst_residual",
];
pub const SWEEP_COLUMNS: [&str; 12] = [
    "kind",
    "point",
    "value",
    "nodes",
    "cells",
    "mechanism",
    "status",
    "provider",
    "template",
    "budget",
    "utility",
    "social_welfare",
];

fn default_instances() -> usize {
    100
}

fn default_mechanisms() -> Vec<Mechanism> {
    Mechanism::ALL.to_vec()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_mechanisms")]
    pub mechanisms: Vec<Mechanism>,
    #[serde(default = "default_true")]
    pub certificates: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            instances: default_instances(),
            mechanisms: default_mechanisms(),
            certificates: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Budget,
    Nodes,
    Cells,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::Budget => "budget",
            SweepKind::Nodes => "nodes",
            SweepKind::Cells => "cells",
        }
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "budget" => Ok(SweepKind::Budget),
            "nodes" => Ok(SweepKind::Nodes),
            "cells" => Ok(SweepKind::Cells),
            other => Err(Error::InvalidArgument(format!(
                "unknown sweep kind {other:?} (expected budget, nodes or cells)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub kind: Option<SweepKind>,
    /// Provider whose budget varies in a budget sweep.
    pub provider: usize,
    /// Budget values; 1.0 to 5.0 in steps of 0.5 when absent.
    pub values: Option<Vec<f64>>,
    /// Names removed at each step of a node or cell sweep.
    pub schedule: Option<Vec<Vec<String>>>,
    /// All four mechanisms for a budget sweep, the equilibrium otherwise.
    pub mechanisms: Option<Vec<Mechanism>>,
}

/// Contents of a configuration file. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// The reference deployment of the experiment or sweep when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deployment: Option<DeploymentTemplate>,
    pub experiment: ExperimentSection,
    pub solver: SolverSettings,
    pub sweep: SweepSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let config: Self = format::read_toml(path)?;
        if let Some(d) = &config.deployment {
            d.validate()?;
        }
        config.solver.validate()?;
        Ok(config)
    }
}

/// Which configuration file to read: an explicit path wins (looked up in
/// `config_dir` when it does not exist as given), then
/// `config_dir/slicemarket.toml` if present, else none.
pub fn resolve_config_path(explicit: Option<&Path>, config_dir: Option<&Path>) -> Option<PathBuf> {
    match explicit {
        Some(path) => {
            if path.is_absolute() || path.exists() {
                return Some(path.to_path_buf());
            }
            match config_dir {
                Some(dir) if dir.join(path).exists() => Some(dir.join(path)),
                _ => Some(path.to_path_buf()),
            }
        }
        None => config_dir
            .map(|dir| dir.join(DEFAULT_CONFIG_FILE))
            .filter(|p| p.exists()),
    }
}

/// Loads the resolved configuration, or the built-in defaults.
pub fn load_config(explicit: Option<&Path>, config_dir: Option<&Path>) -> Result<ExperimentConfig> {
    match resolve_config_path(explicit, config_dir) {
        Some(path) => {
            log::info!("configuration {}", path.display());
            ExperimentConfig::load(&path)
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn canonical_mechanisms(mechanisms: &[Mechanism]) -> Vec<Mechanism> {
    let mut out = mechanisms.to_vec();
    out.sort();
    out.dedup();
    out
}

/// One batch experiment over freshly generated instances.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub deployment: DeploymentTemplate,
    pub instances: usize,
    /// Base seed; instance `i` uses `instance_seed(seed, i)`.
    pub seed: u64,
    pub mechanisms: Vec<Mechanism>,
    pub certificates: bool,
    pub settings: SolverSettings,
    pub mode: ExecMode,
}

impl ExperimentPlan {
    pub fn from_config(config: &ExperimentConfig) -> Self {
        let deployment = config.deployment.clone().unwrap_or_default();
        Self {
            seed: deployment.seed,
            deployment,
            instances: config.experiment.instances,
            mechanisms: canonical_mechanisms(&config.experiment.mechanisms),
            certificates: config.experiment.certificates,
            settings: config.solver.clone(),
            mode: ExecMode::best_available(None),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 {
            return Err(Error::InvalidArgument(
                "instance count must be at least 1".into(),
            ));
        }
        if self.mechanisms.is_empty() {
            return Err(Error::InvalidArgument("no mechanism selected".into()));
        }
        self.deployment.validate()?;
        self.settings.validate()
    }

    fn runs(&self, mechanism: Mechanism) -> bool {
        self.mechanisms.contains(&mechanism)
    }
}

fn zero_fraction(utilities: &[f64]) -> f64 {
    if utilities.is_empty() {
        return 0.0;
    }
    utilities.iter().filter(|&&u| u <= ZERO_UTILITY).count() as f64 / utilities.len() as f64
}

/// Runs the plan's mechanisms on one instance and evaluates its certificates.
/// Failures are recorded in the returned row rather than propagated.
pub fn evaluate_instance(
    instance: &MarketInstance,
    instance_id: usize,
    seed: u64,
    plan: &ExperimentPlan,
) -> InstanceMetrics {
    let mut row = InstanceMetrics {
        instance_id,
        seed,
        mechanisms: Vec::new(),
        certificates: Vec::new(),
        kkt_max_abs: None,
        me_max_residual: None,
        error: None,
    };
    match evaluate_into(instance, plan, &mut row) {
        Ok(()) => row,
        Err(e) => {
            log::warn!("instance {instance_id}: {e}");
            row.error = Some(e.to_string());
            row
        }
    }
}

fn evaluate_into(
    instance: &MarketInstance,
    plan: &ExperimentPlan,
    row: &mut InstanceMetrics,
) -> Result<()> {
    let budgets = instance.budgets();
    let mut results: Vec<MechanismResult> = Vec::with_capacity(plan.mechanisms.len());
    let mut equilibrium = None;
    for &mechanism in &plan.mechanisms {
        if mechanism == Mechanism::Me {
            let sol = solve_eg(instance, &plan.settings)?;
            results.push(MechanismResult::from_equilibrium(instance, &sol)?);
            equilibrium = Some(sol);
        } else {
            results.push(run_mechanism(instance, mechanism, &plan.settings)?);
        }
    }
    let so = results
        .iter()
        .find(|r| r.mechanism == Mechanism::So)
        .cloned();
    for result in &results {
        row.mechanisms.push(MechanismMetrics {
            mechanism: result.mechanism,
            status: result.status,
            social_welfare: result.social_welfare,
            nsw_log: analysis::nash_social_welfare_log(&result.utilities, &budgets)?,
            efficiency: so.as_ref().and_then(|so| analysis::efficiency(result, so)),
            zero_utility_fraction: zero_fraction(&result.utilities),
            utilities: result.utilities.clone(),
        });
    }

    if let (true, Some(sol)) = (plan.certificates, equilibrium.as_ref()) {
        let kkt = kkt_residuals(instance, sol);
        row.kkt_max_abs = Some(kkt.max_abs);
        row.certificates
            .push(kkt.certificate(plan.settings.kkt_tolerance));
        let me = check_market_equilibrium(instance, sol, ME_TOLERANCE);
        row.me_max_residual = Some(me.iter().map(|c| c.residual).fold(0.0, f64::max));
        row.certificates.extend(me);
        let me_result = results
            .iter()
            .find(|r| r.mechanism == Mechanism::Me)
            .expect("equilibrium result present");
        let ps = match results.iter().find(|r| r.mechanism == Mechanism::Ps) {
            Some(ps) => ps.clone(),
            None => allocate_proportional_sharing(instance)?,
        };
        row.certificates.push(check_sharing_incentive(
            &me_result.utilities,
            &ps.utilities,
            FAIRNESS_TOLERANCE,
        ));
        row.certificates.push(check_envy_freeness(
            instance,
            &me_result.allocation,
            FAIRNESS_TOLERANCE,
        ));
    }
    Ok(())
}

/// Rows in instance order plus their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<InstanceMetrics>,
    pub summary: BatchSummary,
}

pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    if !plan.runs(Mechanism::So) {
        log::warn!("SO is not part of the plan; the eta column stays empty");
    }
    let assignment = TemplateAssignment::from_deployment(&plan.deployment);
    let rows = map_indexed(plan.instances, plan.mode, |i| {
        let seed = instance_seed(plan.seed, i as u64);
        match generate_instance(&plan.deployment, &assignment, seed) {
            Ok(instance) => evaluate_instance(&instance, i, seed, plan),
            Err(e) => InstanceMetrics {
                instance_id: i,
                seed,
                mechanisms: Vec::new(),
                certificates: Vec::new(),
                kkt_max_abs: None,
                me_max_residual: None,
                error: Some(e.to_string()),
            },
        }
    });
    let summary = analysis::summarize(&rows);
    Ok(ExperimentReport { rows, summary })
}

fn flag(cert: Option<&Certificate>) -> String {
    match cert.map(|c| c.status) {
        Some(CertificateStatus::Pass) => "true".into(),
        Some(CertificateStatus::Fail) => "false".into(),
        Some(other) => other.as_str().into(),
        None => String::new(),
    }
}

fn me_flag(row: &InstanceMetrics) -> String {
    let parts: Vec<&Certificate> = row
        .certificates
        .iter()
        .filter(|c| c.name.starts_with("me-"))
        .collect();
    if parts.is_empty() {
        String::new()
    } else {
        parts.iter().all(|c| c.passed()).to_string()
    }
}

fn opt_number(value: Option<f64>) -> String {
    value.map(format_number).unwrap_or_default()
}

fn joined(values: &[f64]) -> String {
    values
        .iter()
        .map(|&v| format_number(v))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn write_instances_csv<W: Write>(rows: &[InstanceMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(INSTANCE_COLUMNS)?;
    for row in rows {
        let id = row.instance_id.to_string();
        let seed = row.seed.to_string();
        if let Some(err) = &row.error {
            log::debug!("instance {} has no rows: {err}", row.instance_id);
            w.write_record([
                id.as_str(),
                &seed,
                "",
                "error",
                "",
                "",
                "",
                "",
                "",
                "",
                "",
                "",
                "",
                "",
            ])?;
            continue;
        }
        for m in &row.mechanisms {
            let is_me = m.mechanism == Mechanism::Me;
            let cert = |name: &str| {
                if is_me {
                    flag(row.certificate(name))
                } else {
                    String::new()
                }
            };
            w.write_record([
                id.clone(),
                seed.clone(),
                m.mechanism.to_string(),
                m.status.as_str().to_string(),
                format_number(m.social_welfare),
                format_number(m.nsw_log),
                opt_number(m.efficiency),
                format_number(m.zero_utility_fraction),
                cert("kkt"),
                if is_me { me_flag(row) } else { String::new() },
                cert("sharing-incentive"),
                if is_me {
                    opt_number(row.kkt_max_abs)
                } else {
                    String::new()
                },
                if is_me {
                    opt_number(row.me_max_residual)
                } else {
                    String::new()
                },
                joined(&m.utilities),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn write_utilities_csv<W: Write>(rows: &[InstanceMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(UTILITY_COLUMNS)?;
    for row in rows {
        for m in &row.mechanisms {
            for (s, &u) in m.utilities.iter().enumerate() {
                w.write_record([
                    row.instance_id.to_string(),
                    m.mechanism.to_string(),
                    s.to_string(),
                    format_number(u),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(summary: &BatchSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for m in &summary.mechanisms {
        w.write_record([
            m.mechanism.to_string(),
            m.runs.to_string(),
            m.converged.to_string(),
            format_number(m.mean_social_welfare),
            format_number(m.min_social_welfare),
            opt_number(m.mean_nsw_log),
            format_number(m.zero_nsw_fraction),
            format_number(m.mean_zero_utility_fraction),
            opt_number(m.mean_efficiency),
            opt_number(m.min_efficiency),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn write_certificates_csv<W: Write>(summary: &BatchSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CERTIFICATE_COLUMNS)?;
    for c in &summary.certificates {
        let rate = if c.evaluated == 0 {
            f64::NAN
        } else {
            c.passed as f64 / c.evaluated as f64
        };
        w.write_record([
            c.name.clone(),
            c.evaluated.to_string(),
            c.passed.to_string(),
            format_number(rate),
            format_number(c.worst_residual),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Writes `instances.csv`, `utilities.csv`, `summary.csv`,
/// `certificates.csv` and `summary.toml` into `dir`.
pub fn write_experiment(dir: &Path, report: &ExperimentReport) -> Result<()> {
    create_dir(dir)?;
    write_instances_csv(&report.rows, create(&dir.join("instances.csv"))?)?;
    write_utilities_csv(&report.rows, create(&dir.join("utilities.csv"))?)?;
    write_summary_csv(&report.summary, create(&dir.join("summary.csv"))?)?;
    write_certificates_csv(&report.summary, create(&dir.join("certificates.csv"))?)?;
    format::write_toml(&dir.join("summary.toml"), &report.summary)
}

/// Writes one instance generated from the configuration.
pub fn cmd_generate(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<MarketInstance> {
    let deployment = config.deployment.clone().unwrap_or_default();
    let instance = generate_instance(
        &deployment,
        &TemplateAssignment::from_deployment(&deployment),
        seed,
    )?;
    format::write_instance(out, &instance)?;
    Ok(instance)
}

/// Result of [`cmd_solve`]: the document written and whether the solver converged.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub document: ResultDocument,
    pub converged: bool,
}

/// Solves an instance file with one mechanism. For the equilibrium, the KKT
/// and market-equilibrium certificates are attached when requested.
pub fn cmd_solve(
    instance_path: &Path,
    mechanism: Mechanism,
    settings: &SolverSettings,
    certificates: bool,
    out: Option<&Path>,
) -> Result<SolveOutcome> {
    let instance = format::read_instance(instance_path)?;
    let (result, solution) = if mechanism == Mechanism::Me {
        let sol = solve_eg(&instance, settings)?;
        (
            MechanismResult::from_equilibrium(&instance, &sol)?,
            Some(sol),
        )
    } else {
        (run_mechanism(&instance, mechanism, settings)?, None)
    };
    let mut certs = Vec::new();
    if let (true, Some(sol)) = (certificates, solution.as_ref()) {
        certs.push(kkt_residuals(&instance, sol).certificate(settings.kkt_tolerance));
        certs.extend(check_market_equilibrium(&instance, sol, ME_TOLERANCE));
        let ps = allocate_proportional_sharing(&instance)?;
        certs.push(check_sharing_incentive(
            &result.utilities,
            &ps.utilities,
            FAIRNESS_TOLERANCE,
        ));
        certs.push(check_envy_freeness(
            &instance,
            &result.allocation,
            FAIRNESS_TOLERANCE,
        ));
    }
    let document = ResultDocument::new(&instance, &result, solution.as_ref(), certs)?;
    if let Some(path) = out {
        format::write_toml(path, &document)?;
    }
    Ok(SolveOutcome {
        converged: result.status == SolverStatus::Converged,
        document,
    })
}

pub fn cmd_experiment(plan: &ExperimentPlan, out_dir: &Path) -> Result<ExperimentReport> {
    let report = run_experiment(plan)?;
    write_experiment(out_dir, &report)?;
    Ok(report)
}

/// One sensitivity study.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub kind: SweepKind,
    pub deployment: DeploymentTemplate,
    pub seed: u64,
    pub provider: usize,
    pub values: Vec<f64>,
    pub schedule: Option<Vec<Vec<String>>>,
    pub mechanisms: Vec<Mechanism>,
    pub settings: SolverSettings,
    pub mode: ExecMode,
}

impl SweepPlan {
    /// Without a deployment section the study's reference deployment is used.
    pub fn from_config(config: &ExperimentConfig, kind: SweepKind) -> Self {
        let deployment = config.deployment.clone().unwrap_or_else(|| match kind {
            SweepKind::Budget => DeploymentTemplate::budget_study(),
            SweepKind::Nodes | SweepKind::Cells => DeploymentTemplate::bottleneck_study(),
        });
        let mechanisms = config
            .sweep
            .mechanisms
            .clone()
            .unwrap_or_else(|| match kind {
                SweepKind::Budget => Mechanism::ALL.to_vec(),
                _ => vec![Mechanism::Me],
            });
        Self {
            kind,
            seed: deployment.seed,
            deployment,
            provider: config.sweep.provider,
            values: config
                .sweep
                .values
                .clone()
                .unwrap_or_else(default_budget_values),
            schedule: config.sweep.schedule.clone(),
            mechanisms: canonical_mechanisms(&mechanisms),
            settings: config.solver.clone(),
            mode: ExecMode::best_available(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: usize,
    /// Budget of the swept provider, or the node or cell count.
    pub value: f64,
    pub nodes: usize,
    pub cells: usize,
    pub mechanism: Mechanism,
    pub status: SolverStatus,
    pub provider: usize,
    pub template: String,
    pub budget: f64,
    pub utility: f64,
    pub social_welfare: f64,
}

pub fn sweep_instances(plan: &SweepPlan) -> Result<Vec<(f64, MarketInstance)>> {
    let base = generate_instance(
        &plan.deployment,
        &TemplateAssignment::from_deployment(&plan.deployment),
        plan.seed,
    )?;
    Ok(match plan.kind {
        SweepKind::Budget => {
            let values = if plan.values.is_empty() {
                vec![base.budget(plan.provider.min(base.provider_count() - 1))]
            } else {
                plan.values.clone()
            };
            values
                .iter()
                .copied()
                .zip(sweep_budget(&base, plan.provider, &values)?)
                .collect()
        }
        SweepKind::Nodes => {
            let schedule = plan
                .schedule
                .clone()
                .unwrap_or_else(|| default_node_schedule(&base));
            sweep_nodes(&base, &schedule)?
                .into_iter()
                .map(|i| (i.node_count() as f64, i))
                .collect()
        }
        SweepKind::Cells => {
            let schedule = plan
                .schedule
                .clone()
                .unwrap_or_else(|| default_cell_schedule(&base));
            sweep_cells(&base, &schedule)?
                .into_iter()
                .map(|i| (i.cell_count() as f64, i))
                .collect()
        }
    })
}

/// Solves every sweep point; one row per point, mechanism and provider.
/// Points whose solve fails are logged and skipped.
pub fn run_sweep(plan: &SweepPlan) -> Result<Vec<SweepRow>> {
    if plan.mechanisms.is_empty() {
        return Err(Error::InvalidArgument("no mechanism selected".into()));
    }
    plan.settings.validate()?;
    let points = sweep_instances(plan)?;
    let per_point = map_indexed(points.len(), plan.mode, |k| {
        let (value, instance) = &points[k];
        let mut rows = Vec::new();
        for &mechanism in &plan.mechanisms {
            let result = match run_mechanism(instance, mechanism, &plan.settings) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("sweep point {k} ({mechanism}): {e}");
                    continue;
                }
            };
            for (s, provider) in instance.providers.iter().enumerate() {
                rows.push(SweepRow {
                    point: k,
                    value: *value,
                    nodes: instance.node_count(),
                    cells: instance.cell_count(),
                    mechanism,
                    status: result.status,
                    provider: s,
                    template: provider.template.clone().unwrap_or_default(),
                    budget: provider.budget,
                    utility: result.utilities[s],
                    social_welfare: result.social_welfare,
                });
            }
        }
        rows
    });
    Ok(per_point.into_iter().flatten().collect())
}

pub fn write_sweep_csv<W: Write>(kind: SweepKind, rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        w.write_record([
            kind.as_str().to_string(),
            r.point.to_string(),
            format_number(r.value),
            r.nodes.to_string(),
            r.cells.to_string(),
            r.mechanism.to_string(),
            r.status.as_str().to_string(),
            r.provider.to_string(),
            r.template.clone(),
            format_number(r.budget),
            format_number(r.utility),
            format_number(r.social_welfare),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn cmd_sweep(plan: &SweepPlan, out: &Path) -> Result<Vec<SweepRow>> {
    let rows = run_sweep(plan)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_sweep_csv(plan.kind, &rows, create(out)?)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_plan(instances: usize) -> ExperimentPlan {
        let mut deployment = DeploymentTemplate::default();
        deployment.cpu_nodes.count = 1;
        deployment.ram_nodes.count = 1;
        deployment.large_cells.count = 1;
        deployment.small_cells.count = 1;
        deployment.provider_count = 3;
        ExperimentPlan {
            deployment,
            instances,
            seed: 5,
            mechanisms: Mechanism::ALL.to_vec(),
            certificates: true,
            settings: SolverSettings::default(),
            mode: ExecMode::Sequential,
        }
    }

    #[test]
    fn config_sections_default() {
        let config: ExperimentConfig = toml::from_str("[experiment]\ninstances = 3\n").unwrap();
        assert_eq!(config.experiment.instances, 3);
        assert_eq!(config.deployment, None);
        let plan = ExperimentPlan::from_config(&config);
        assert_eq!(plan.deployment, DeploymentTemplate::default());
        assert_eq!(config.experiment.mechanisms.len(), 4);
        assert!(toml::from_str::<ExperimentConfig>("[experiment]\ninstnces = 3\n").is_err());
    }

    #[test]
    fn plan_validation() {
        let mut plan = small_plan(0);
        assert!(plan.validate().is_err());
        plan.instances = 1;
        plan.mechanisms.clear();
        assert!(plan.validate().is_err());
    }

    #[test]
    fn one_instance_gives_four_rows() {
        let report = run_experiment(&small_plan(1)).unwrap();
        let mut buf = Vec::new();
        write_instances_csv(&report.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 4);
        assert!(text.lines().nth(1).unwrap().contains(",ME,converged,"));
        let me = report.rows[0].mechanism(Mechanism::Me).unwrap();
        assert!(me.efficiency.is_some());
        assert!(report.rows[0].certificate("kkt").unwrap().passed());
    }

    #[test]
    fn ps_only_plan_has_no_efficiency() {
        let mut plan = small_plan(1);
        plan.mechanisms = vec![Mechanism::Ps];
        let report = run_experiment(&plan).unwrap();
        assert_eq!(report.rows[0].mechanisms.len(), 1);
        assert_eq!(report.rows[0].mechanisms[0].efficiency, None);
        assert!(report.rows[0].certificates.is_empty());
    }

    #[test]
    fn sweep_kinds_parse() {
        assert_eq!("nodes".parse::<SweepKind>().unwrap(), SweepKind::Nodes);
        assert!("node".parse::<SweepKind>().is_err());
    }

    #[test]
    fn empty_schedule_is_a_single_point() {
        let config = ExperimentConfig {
            sweep: SweepSection {
                schedule: Some(vec![]),
                ..SweepSection::default()
            },
            ..ExperimentConfig::default()
        };
        let plan = SweepPlan::from_config(&config, SweepKind::Nodes);
        let rows = run_sweep(&plan).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.point == 0 && r.nodes == 10));
    }

    #[test]
    fn config_resolution() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(resolve_config_path(None, Some(dir.path())), None);
        std::fs::write(dir.path().join(DEFAULT_CONFIG_FILE), "").unwrap();
        assert_eq!(
            resolve_config_path(None, Some(dir.path())),
            Some(dir.path().join(DEFAULT_CONFIG_FILE))
        );
        std::fs::write(dir.path().join("other.toml"), "").unwrap();
        assert_eq!(
            resolve_config_path(Some(Path::new("other.toml")), Some(dir.path())),
            Some(dir.path().join("other.toml"))
        );
    }
}
