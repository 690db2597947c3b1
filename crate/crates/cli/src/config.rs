//! TOML form of an experiment plan.
//!
//! ```toml
//! estimators = ["HashBase", "EHB", "Online"]
//! n_grid = [500, 1000, 2000]
//! trials = 50
//! master_seed = 1
//!
//! [divergence]
//! kind = "alpha"
//! alpha = 0.5
//!
//! [data]
//! box_lo = [-3.0, -3.0]
//! box_hi = [3.0, 3.0]
//! p = { mean = [0.0, 0.0], variance = [1.0, 1.0] }
//! q = { mean = [0.0, 1.0], variance = [1.0, 1.0] }
//! ```

use serde::Deserialize;

use hashdiv::bench::{EstimatorKind, ExperimentPlan};
use hashdiv::{EnsembleConfig, OracleMethod, SupportBox, TruncatedGaussianSpec};

use crate::commands::{divergence_spec, CliError};
use crate::args::DivergenceArg;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub estimators: Vec<String>,
    pub n_grid: Vec<usize>,
    pub trials: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
    pub gamma: Option<f64>,
    pub c_h: Option<f64>,
    pub unit_box: Option<bool>,
    pub parallel: Option<bool>,
    pub divergence: DivergenceConfig,
    pub data: DataConfig,
    pub ensemble: Option<EnsembleSection>,
    pub oracle: Option<OracleSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceConfig {
    pub kind: String,
    pub alpha: Option<f64>,
    pub clip_floor: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianConfig {
    pub mean: Vec<f64>,
    pub variance: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub p: GaussianConfig,
    pub q: GaussianConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub t_count: Option<usize>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// `grid`, `mc` or `auto`.
    pub method: String,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

impl PlanConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("bad benchmark config: {e}")))
    }

    pub fn into_plan(self) -> Result<ExperimentPlan, CliError> {
        let estimators = self
            .estimators
            .iter()
            .map(|s| s.parse::<EstimatorKind>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(usage)?;
        let kind = DivergenceArg::from_str_loose(&self.divergence.kind)?;
        let divergence = divergence_spec(kind, self.divergence.alpha, self.divergence.clip_floor)?;
        let support = SupportBox::new(self.data.box_lo, self.data.box_hi).map_err(usage)?;
        let gaussian = |g: GaussianConfig, seed| {
            let d = g.mean.len();
            TruncatedGaussianSpec::new(g.mean, g.variance.unwrap_or(vec![1.0; d]), support.clone(), seed).map_err(usage)
        };
        let data = (gaussian(self.data.p, 0)?, gaussian(self.data.q, 1)?);
        let dim = data.0.dim();
        let mut plan = ExperimentPlan::new(estimators, divergence, data, self.n_grid).map_err(usage)?;
        plan.master_seed = self.master_seed;
        if let Some(t) = self.trials {
            plan.trials = t;
        }
        if let Some(g) = self.gamma {
            plan.gamma = g;
        }
        if let Some(c) = self.c_h {
            plan.c_h = c;
        }
        if let Some(u) = self.unit_box {
            plan.unit_box = u;
        }
        if let Some(p) = self.parallel {
            plan.parallel = p;
        }
        let e = self.ensemble.unwrap_or(EnsembleSection { t_count: None, t_min: None, t_max: None });
        plan.ensemble = EnsembleConfig::uniform(
            e.t_count.unwrap_or(dim + 3),
            e.t_min.unwrap_or(EnsembleConfig::DEFAULT_T_MIN),
            e.t_max.unwrap_or(EnsembleConfig::DEFAULT_T_MAX),
            dim,
        )
        .map_err(usage)?
        .with_c_h(plan.c_h);
        if let Some(o) = self.oracle {
            let seed = o.seed.unwrap_or(0);
            plan.oracle = match o.method.as_str() {
                "grid" => OracleMethod::GridQuadrature,
                "mc" => OracleMethod::MonteCarlo { samples: o.samples.unwrap_or(OracleMethod::DEFAULT_MC_SAMPLES), seed },
                "auto" => OracleMethod::auto(dim, seed),
                other => return Err(CliError::Usage(format!("unknown oracle method '{other}'"))),
            };
        }
        plan.validate().map_err(usage)?;
        Ok(plan)
    }
}
