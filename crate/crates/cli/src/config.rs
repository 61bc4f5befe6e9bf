//! TOML experiment configuration: one file describes one reproducible
//! experiment.

use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use pathwise_core::lattice::{CovMatrix, CovarianceFamily, GridSpec, LocalVolModel, Surface2d};
use pathwise_core::partition::PartitionHierarchy;
use pathwise_core::path::Flavor;
use pathwise_core::payoff::PayoffSpec;
use pathwise_core::scheme::{FixingSchedule, SchemeConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub partition: PartitionConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub payoff: Option<PayoffConfig>,
    #[serde(default)]
    pub generator: Option<GeneratorConfig>,
    #[serde(default)]
    pub scheme: Option<SchemeSection>,
    #[serde(default)]
    pub solve: Option<SolveSection>,
    #[serde(default)]
    pub price: Option<PriceSection>,
    #[serde(default)]
    pub hedge: Option<HedgeSection>,
    #[serde(default)]
    pub robust: Option<RobustSection>,
    #[serde(default)]
    pub noarb: Option<NoArbSection>,
    #[serde(default)]
    pub ftvp: Option<FtvpSection>,
    #[serde(default)]
    pub qv: Option<QvSection>,
    #[serde(default)]
    pub integrate: Option<IntegrateSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dimension: usize,
    pub flavor: String,
    pub family: String,
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub sigma: Option<Vec<SurfaceConfig>>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub table: Option<SurfaceConfig>,
    pub bound: f64,
    pub eigen_floor: f64,
}

/// Either a constant level or a bilinear `(t, x)` table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    #[serde(default)]
    pub constant: Option<f64>,
    #[serde(default)]
    pub t: Option<Vec<f64>>,
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub horizon: f64,
    pub level: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub center: Vec<f64>,
    pub nodes: usize,
    pub steps: usize,
    #[serde(default = "default_span")]
    pub span_sigmas: f64,
}

fn default_span() -> f64 {
    6.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    pub expr: String,
    #[serde(default)]
    pub lipschitz_exponent: f64,
    #[serde(default = "default_lipschitz")]
    pub lipschitz_const: f64,
}

fn default_lipschitz() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub count: usize,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub level: Option<u32>,
}

fn default_kappa() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    #[serde(default = "default_fixing_nodes")]
    pub fixing_nodes: usize,
    #[serde(default = "default_budget")]
    pub budget_cap: u64,
}

fn default_fixing_nodes() -> usize {
    33
}

fn default_budget() -> u64 {
    100_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub t_start: f64,
    pub terminal: String,
    #[serde(default)]
    pub reference: Option<String>,
    #[serde(default)]
    pub max_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSection {
    #[serde(default)]
    pub reference_value: Option<f64>,
    #[serde(default = "default_rel_tol")]
    pub tolerance_rel: f64,
}

fn default_rel_tol() -> f64 {
    0.002
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HedgeSection {
    pub levels: Vec<u32>,
    #[serde(default = "default_hedge_tol")]
    pub median_tolerance_of_spot: f64,
    #[serde(default)]
    pub detail_paths: usize,
}

fn default_hedge_tol() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustSection {
    pub kappas: Vec<f64>,
    #[serde(default = "default_shortfall_tol")]
    pub shortfall_tolerance_of_spot: f64,
    pub payoffs: Vec<RobustPayoff>,
    pub level: u32,
}

fn default_shortfall_tol() -> f64 {
    0.001
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustPayoff {
    pub name: String,
    pub expr: String,
    /// Whether the hedge is expected to superhedge when the realized
    /// covariation stays below the model (convex single-fixing payoffs).
    #[serde(default)]
    pub expect_superhedge: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoArbSection {
    pub paths: usize,
    pub level: u32,
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FtvpSection {
    /// One of `asian-call`, `lookback-max`, `terminal`.
    pub functional: String,
    #[serde(default)]
    pub strike: Option<f64>,
    #[serde(default = "default_ftvp_steps")]
    pub steps: usize,
    #[serde(default = "default_zeta_nodes")]
    pub zeta_nodes: usize,
    pub levels: Vec<u32>,
    #[serde(default)]
    pub sample_times: Option<Vec<f64>>,
    #[serde(default = "default_hedge_tol")]
    pub discrepancy_tolerance: f64,
}

fn default_ftvp_steps() -> usize {
    320
}

fn default_zeta_nodes() -> usize {
    12001
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QvSection {
    pub levels: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateSection {
    pub levels: Vec<u32>,
    pub strikes: Vec<f64>,
    #[serde(default = "default_identity_tol")]
    pub tolerance: f64,
}

fn default_identity_tol() -> f64 {
    1e-10
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| anyhow!("config parse error: {e}"))?;
        Ok(config)
    }

    pub fn flavor(&self) -> Result<Flavor> {
        match self.model.flavor.as_str() {
            "whole" | "whole-space" => Ok(Flavor::WholeSpace),
            "positive" => Ok(Flavor::Positive),
            other => bail!("unknown flavor '{other}' (use 'whole' or 'positive')"),
        }
    }

    fn surface(cfg: &SurfaceConfig) -> Result<Surface2d> {
        if let Some(c) = cfg.constant {
            return Ok(Surface2d::constant(c));
        }
        let (t, x, values) = match (&cfg.t, &cfg.x, &cfg.values) {
            (Some(t), Some(x), Some(v)) => (t.clone(), x.clone(), v.clone()),
            _ => bail!("surface needs either 'constant' or all of 't', 'x', 'values'"),
        };
        Ok(Surface2d::new(t, x, values)?)
    }

    pub fn build_model(&self) -> Result<Arc<LocalVolModel>> {
        let flavor = self.flavor()?;
        let d = self.model.dimension;
        let family = match self.model.family.as_str() {
            "constant" => {
                let m = self
                    .model
                    .matrix
                    .as_ref()
                    .ok_or_else(|| anyhow!("constant family needs 'matrix'"))?;
                if m.len() != d || m.iter().any(|row| row.len() != d) {
                    bail!("matrix must be {d} x {d}");
                }
                let cov = if d == 1 {
                    CovMatrix::new_1d(m[0][0])
                } else {
                    CovMatrix::new_2d(m[0][0], m[0][1], m[1][1])
                };
                CovarianceFamily::Constant(cov)
            }
            "separable" => {
                let sigmas = self
                    .model
                    .sigma
                    .as_ref()
                    .ok_or_else(|| anyhow!("separable family needs 'sigma'"))?;
                let rho = self.model.rho.unwrap_or(0.0);
                let surfaces: Result<Vec<_>> = sigmas.iter().map(Self::surface).collect();
                CovarianceFamily::Separable { sigmas: surfaces?, rho }
            }
            "tabulated" => {
                let table = self
                    .model
                    .table
                    .as_ref()
                    .ok_or_else(|| anyhow!("tabulated family needs 'table'"))?;
                CovarianceFamily::Tabulated(Self::surface(table)?)
            }
            other => bail!("unknown covariance family '{other}'"),
        };
        let model =
            LocalVolModel::new(d, flavor, family, self.model.bound, self.model.eigen_floor)?;
        Ok(Arc::new(model))
    }

    pub fn hierarchy(&self) -> Result<PartitionHierarchy> {
        Ok(PartitionHierarchy::new(self.partition.horizon, self.partition.level)?)
    }

    pub fn build_grid(&self, model: &LocalVolModel) -> Result<GridSpec> {
        let grid = self.grid.as_ref().ok_or_else(|| anyhow!("command needs a [grid] section"))?;
        Ok(GridSpec::centered(
            model,
            &grid.center,
            self.partition.horizon,
            grid.span_sigmas,
            grid.nodes,
            grid.steps,
        )?)
    }

    pub fn build_schedule(&self) -> Result<Arc<FixingSchedule>> {
        let schedule = self
            .schedule
            .as_ref()
            .ok_or_else(|| anyhow!("command needs a [schedule] section"))?;
        Ok(Arc::new(FixingSchedule::new(self.hierarchy()?, &schedule.times)?))
    }

    pub fn build_payoff(&self) -> Result<Arc<PayoffSpec>> {
        let payoff =
            self.payoff.as_ref().ok_or_else(|| anyhow!("command needs a [payoff] section"))?;
        Ok(Arc::new(PayoffSpec::parse(
            &payoff.expr,
            payoff.lipschitz_exponent,
            payoff.lipschitz_const,
        )?))
    }

    pub fn build_scheme_config(&self, model: &LocalVolModel) -> Result<Arc<SchemeConfig>> {
        let mut config = SchemeConfig::new(self.build_grid(model)?);
        if let Some(section) = &self.scheme {
            config.fixing_nodes = section.fixing_nodes;
            config.budget_cap = section.budget_cap;
        }
        Ok(Arc::new(config))
    }

    /// Generator resolved against overrides; the spot is the grid center.
    pub fn build_generator(
        &self,
        model: Arc<LocalVolModel>,
        seed_override: Option<u64>,
        level_override: Option<u32>,
    ) -> Result<pathwise_core::hedge::PathGeneratorSpec> {
        let generator = self
            .generator
            .as_ref()
            .ok_or_else(|| anyhow!("command needs a [generator] section"))?;
        let grid =
            self.grid.as_ref().ok_or_else(|| anyhow!("command needs a [grid] section"))?;
        let level = level_override
            .or(generator.level)
            .unwrap_or(self.partition.level);
        if level > self.partition.level {
            bail!(
                "generator level {level} exceeds partition level {}",
                self.partition.level
            );
        }
        let spec = pathwise_core::hedge::PathGeneratorSpec::new(
            model,
            level,
            seed_override.unwrap_or(generator.seed),
            generator.count,
            grid.center.clone(),
            self.partition.horizon,
        )?
        .with_kappa(generator.kappa)?;
        Ok(spec)
    }
}
