//! Experiment configuration read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fedcgm_core::problems::logistic::Sharding;
use fedcgm_core::QuadLogSumParams;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

/// A cost given as an integer or as a `"p/q"` string.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostValue", into = "CostValue")]
pub struct Cost(pub Rational64);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CostValue {
    Int(i64),
    Text(String),
}

impl TryFrom<CostValue> for Cost {
    type Error = String;

    fn try_from(v: CostValue) -> Result<Self, String> {
        match v {
            CostValue::Int(k) => Ok(Cost(Rational64::from_integer(k))),
            CostValue::Text(s) => {
                fedcgm_core::trace::parse_rational(&s).map(Cost).ok_or_else(|| format!("bad cost {s:?}"))
            }
        }
    }
}

impl From<Cost> for CostValue {
    fn from(c: Cost) -> Self {
        if c.0.is_integer() {
            CostValue::Int(*c.0.numer())
        } else {
            CostValue::Text(c.0.to_string())
        }
    }
}

impl Default for Cost {
    fn default() -> Self {
        Cost(Rational64::from_integer(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    Quadratic {
        #[serde(default)]
        params: QuadLogSumParams,
        #[serde(default)]
        instance_seed: u64,
    },
    Logistic {
        path: PathBuf,
        n: usize,
        #[serde(default = "default_logistic_alpha")]
        alpha: f64,
        #[serde(default)]
        sharding: Sharding,
        /// Seed of the random pairs used to estimate the constants.
        #[serde(default)]
        probe_seed: u64,
    },
}

fn default_logistic_alpha() -> f64 {
    0.1
}

impl ProblemSpec {
    pub fn n(&self) -> usize {
        match self {
            Self::Quadratic { params, .. } => params.n,
            Self::Logistic { n, .. } => *n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CostSpec {
    pub c_a: Cost,
    pub c_r: Cost,
    /// Clients per round; `round(sqrt(n))` when absent.
    pub m: Option<usize>,
}

/// How unset algorithm parameters are filled in from the instance constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamRule {
    /// `lambda = sqrt(n)/m delta + Delta_1`, `beta = m/n`, `p = delta/L`, `eta = 2L`.
    #[default]
    Experiment,
    /// `lambda = sqrt(n/m) delta`, `beta = m/n`, `p = lambda / (lambda + L)`.
    NAblation,
    /// The worst-case parameters of the convergence analysis.
    Theory,
}

/// One algorithm of the comparison. Unset fields come from [`ParamRule`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgoSpec {
    /// `icgm-rg-saga`, `icgm-rg-svrg`, `icgm-saga-direct`, `icgm-svrg-direct`,
    /// `gd`, `fedavg`, `scaffold`, `fedred-gd` or `saber-full`.
    pub name: String,
    pub t: Option<u64>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    /// Geometric local-step parameter (I-CGM); restart probability (FedRed-GD);
    /// full refresh probability (SABER-full).
    pub p: Option<f64>,
    pub p_b: Option<f64>,
    /// Local smoothness used for the local steps.
    pub eta: Option<f64>,
    pub step: Option<f64>,
    pub k: Option<u64>,
    /// Fixed local step count for I-CGM instead of the geometric rule.
    pub local_k: Option<u64>,
    /// Full synchronizations before the first RG-SAGA step (0, 1 or 2).
    pub t0: Option<u8>,
}

impl AlgoSpec {
    pub fn named(name: &str) -> Self {
        Self { name: name.to_string(), ..Self::default() }
    }

    pub fn with_t(mut self, t: u64) -> Self {
        self.t = Some(t);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// One of [`SWEEP_PARAMS`].
    pub param: String,
    pub values: Vec<f64>,
}

pub const SWEEP_PARAMS: [&str; 11] = ["c_a", "c_r", "m", "n", "lambda", "beta", "p", "p_b", "t0", "step", "k"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub cost: CostSpec,
    pub algorithms: Vec<AlgoSpec>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub diagnostics: bool,
    pub sweep: Option<SweepSpec>,
    /// Outer iterations for algorithms without their own `t`.
    pub t: u64,
    /// Every coordinate of the starting point.
    pub x0: f64,
    pub rule: ParamRule,
    /// Runs stop once `grad_norm_sq` falls to this value (I-CGM only).
    pub stop_at: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSpec::Quadratic { params: QuadLogSumParams::reference(), instance_seed: 0 },
            cost: CostSpec::default(),
            algorithms: Vec::new(),
            seeds: vec![0],
            out: PathBuf::from("out"),
            diagnostics: true,
            sweep: None,
            t: 700,
            x0: 0.0,
            rule: ParamRule::Experiment,
            stop_at: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.algorithms.is_empty() {
            bail!("config lists no algorithms");
        }
        if self.seeds.is_empty() {
            bail!("config lists no seeds");
        }
        for a in &self.algorithms {
            crate::runner::AlgoName::parse(&a.name)?;
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                bail!("sweep over {} has no values", s.param);
            }
            if !SWEEP_PARAMS.contains(&s.param.as_str()) {
                bail!("cannot sweep {:?}; expected one of {SWEEP_PARAMS:?}", s.param);
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Reads `path`; its keys override `base` when given.
    pub fn load(path: &Path, base: Option<&ExperimentConfig>) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let merged = match base {
            Some(b) => {
                let mut t = toml::Table::try_from(b)?;
                merge(&mut t, file);
                t
            }
            None => file,
        };
        let cfg: Self = merged.try_into().with_context(|| format!("interpreting {}", path.display()))?;
        Ok(cfg)
    }
}

/// Recursive table merge; arrays and scalars in `over` replace those in `base`.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl fmt::Display for SweepSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} in {:?}", self.param, self.values)
    }
}
