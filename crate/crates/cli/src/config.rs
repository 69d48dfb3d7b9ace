//! TOML run configuration. Every key is optional; an empty file (or no file)
//! gives the desk preset.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::Deserialize;

use takedown_core::calibrate::IllegalProbSpec;
use takedown_core::experiments::{preset_tau_grid, SweepSpec};
use takedown_core::metrics::ConvergenceConfig;
use takedown_core::netgen::{BaseNetwork, NetSpec, RwgParams, ThinTarget};
use takedown_core::simcore::{ReshareWeighting, SimConfig};

/// The fully-default configuration, with every key spelled out.
pub const DEFAULT_CONFIG: &str = r#"# Follower network.
#   kind: desk | paper | paper-wide | desk-empirical-style | rwg | kcore | thin
#   rwg uses n_final, n_init, k_out, p_friend.
#   kcore uses edge_list, k, degree (total | in | out) and target_edges
#   (omitted: keep the base network's average degree).
#   thin uses edge_list and target_edges.
[network]
kind = "desk"
n_final = 1000
n_init = 21
k_out = 20
p_friend = 0.5
k = 94
degree = "total"

# Per-user illegal-posting probabilities.
#   distribution: two-group | normal | beta
[content]
distribution = "two-group"
mu = 0.01
sigma = 0.001
alpha = 10.0
beta = 990.0
s_h = 0.1
alpha_h = 3.0
beta_h = 30.0
alpha_l = 0.1
beta_l = 90.0

# Step dynamics. a_max defaults to the node count.
#   exposure: delivery | view
[engine]
gamma = 2.85
mu_post = 0.5
feed_capacity = 15
a_min = 0.1
recency_decay = 0.9
exposure = "delivery"

# Expected takedown delay in days for single runs; omitted means no removal.
[removal]

[convergence]
rho = 0.9
epsilon = 0.0001
warmup = 20
max_steps = 5000

# Sweeps and batteries. tau_grid defaults to 12 log-spaced delays from
# 2 hours to 739 days plus the platform markers 6, 31, 87, 136, 286.
# workers = 0 uses all available cores.
#   horizon: own-convergence | cell-minimum
#   seeds: per-cell | common
#   bootstrap: treatment | paired
[experiment]
runs = 20
workers = 0
seed = 1
horizon = "own-convergence"
seeds = "per-cell"
bootstrap = "treatment"
n_resamples = 10000
level = 0.95
"#;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub network: NetworkSection,
    pub content: ContentSection,
    pub engine: EngineSection,
    pub removal: RemovalSection,
    pub convergence: ConvergenceSection,
    pub experiment: ExperimentSection,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkKind {
    #[default]
    Desk,
    Paper,
    PaperWide,
    DeskEmpiricalStyle,
    Rwg,
    Kcore,
    Thin,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub kind: NetworkKind,
    pub edge_list: Option<PathBuf>,
    pub n_final: usize,
    pub n_init: usize,
    pub k_out: usize,
    pub p_friend: f64,
    pub k: u32,
    pub degree: String,
    pub target_edges: Option<usize>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            kind: NetworkKind::Desk,
            edge_list: None,
            n_final: 1_000,
            n_init: 21,
            k_out: 20,
            p_friend: 0.5,
            k: 94,
            degree: "total".into(),
            target_edges: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    #[default]
    TwoGroup,
    Normal,
    Beta,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContentSection {
    pub distribution: Distribution,
    pub mu: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub s_h: f64,
    pub alpha_h: f64,
    pub beta_h: f64,
    pub alpha_l: f64,
    pub beta_l: f64,
}

impl Default for ContentSection {
    fn default() -> Self {
        ContentSection {
            distribution: Distribution::TwoGroup,
            mu: 0.01,
            sigma: 0.001,
            alpha: 10.0,
            beta: 990.0,
            s_h: 0.1,
            alpha_h: 3.0,
            beta_h: 30.0,
            alpha_l: 0.1,
            beta_l: 90.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineSection {
    pub gamma: f64,
    pub mu_post: f64,
    pub feed_capacity: usize,
    pub a_min: f64,
    pub a_max: Option<f64>,
    pub recency_decay: f64,
    pub exposure: String,
}

impl Default for EngineSection {
    fn default() -> Self {
        let sim = SimConfig::default();
        EngineSection {
            gamma: sim.gamma,
            mu_post: sim.mu_post,
            feed_capacity: sim.feed_capacity,
            a_min: sim.a_min,
            a_max: sim.a_max,
            recency_decay: sim.reshare.recency_decay,
            exposure: sim.exposure.as_str().into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemovalSection {
    pub tau: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    pub rho: f64,
    pub epsilon: f64,
    pub warmup: u32,
    pub max_steps: u32,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        let c = ConvergenceConfig::default();
        ConvergenceSection {
            rho: c.rho,
            epsilon: c.epsilon,
            warmup: c.warmup,
            max_steps: c.max_steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub tau_grid: Option<Vec<f64>>,
    pub runs: usize,
    pub workers: usize,
    pub seed: u64,
    pub horizon: String,
    pub seeds: String,
    pub bootstrap: String,
    pub n_resamples: usize,
    pub level: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let d = SweepSpec::desk();
        ExperimentSection {
            tau_grid: None,
            runs: d.runs_per_cell,
            workers: d.workers,
            seed: d.seed,
            horizon: d.horizon.as_str().into(),
            seeds: d.seeds.as_str().into(),
            bootstrap: d.bootstrap.as_str().into(),
            n_resamples: d.n_resamples,
            level: d.level,
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow!("{e}"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn net_spec(&self) -> Result<NetSpec> {
        let n = &self.network;
        let edge_list = || {
            n.edge_list
                .clone()
                .ok_or_else(|| anyhow!("[network] kind {:?} needs edge_list", n.kind))
        };
        Ok(match n.kind {
            NetworkKind::Desk => NetSpec::desk(),
            NetworkKind::Paper => NetSpec::paper(),
            NetworkKind::PaperWide => NetSpec::paper_wide(),
            NetworkKind::DeskEmpiricalStyle => NetSpec::desk_empirical_style(),
            NetworkKind::Rwg => NetSpec::SyntheticRwg(RwgParams {
                n_final: n.n_final,
                n_init: n.n_init,
                k_out: n.k_out,
                p_friend: n.p_friend,
            }),
            NetworkKind::Kcore => NetSpec::EmpiricalKcore {
                base: BaseNetwork::File(edge_list()?),
                k: n.k,
                degree: n.degree.parse().context("[network] degree")?,
                thin: Some(
                    n.target_edges
                        .map_or(ThinTarget::MatchDensity, ThinTarget::Edges),
                ),
            },
            NetworkKind::Thin => NetSpec::EmpiricalThin {
                base: BaseNetwork::File(edge_list()?),
                target_edges: n
                    .target_edges
                    .ok_or_else(|| anyhow!("[network] kind thin needs target_edges"))?,
            },
        })
    }

    pub fn p_spec(&self) -> IllegalProbSpec {
        let c = &self.content;
        match c.distribution {
            Distribution::TwoGroup => IllegalProbSpec::TwoGroup {
                s_h: c.s_h,
                alpha_h: c.alpha_h,
                beta_h: c.beta_h,
                alpha_l: c.alpha_l,
                beta_l: c.beta_l,
            },
            Distribution::Normal => IllegalProbSpec::Normal {
                mu: c.mu,
                sigma: c.sigma,
            },
            Distribution::Beta => IllegalProbSpec::Beta {
                alpha: c.alpha,
                beta: c.beta,
            },
        }
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let e = &self.engine;
        let c = &self.convergence;
        let config = SimConfig {
            gamma: e.gamma,
            mu_post: e.mu_post,
            feed_capacity: e.feed_capacity,
            a_min: e.a_min,
            a_max: e.a_max,
            tau: self.removal.tau,
            reshare: ReshareWeighting {
                recency_decay: e.recency_decay,
                ..ReshareWeighting::default()
            },
            exposure: e.exposure.parse().context("[engine] exposure")?,
            convergence: ConvergenceConfig {
                rho: c.rho,
                epsilon: c.epsilon,
                warmup: c.warmup,
                max_steps: c.max_steps,
            },
            ..SimConfig::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let x = &self.experiment;
        let mut sim = self.sim_config()?;
        sim.tau = None;
        let spec = SweepSpec {
            tau_grid: x.tau_grid.clone().unwrap_or_else(preset_tau_grid),
            runs_per_cell: x.runs,
            network: self.net_spec()?,
            p_spec: self.p_spec(),
            seed: x.seed,
            sim,
            workers: x.workers,
            horizon: x.horizon.parse().context("[experiment] horizon")?,
            seeds: x.seeds.parse().context("[experiment] seeds")?,
            bootstrap: x.bootstrap.parse().context("[experiment] bootstrap")?,
            n_resamples: x.n_resamples,
            level: x.level,
        };
        spec.validate()?;
        Ok(spec)
    }
}
