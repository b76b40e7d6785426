//! Built-in experiment configurations.

use std::path::PathBuf;

use fedcgm_core::QuadLogSumParams;

use crate::config::{AlgoSpec, CostSpec, ExperimentConfig, ParamRule, ProblemSpec, SweepSpec};

pub const PRESETS: [&str; 10] = [
    "fig2",
    "fig2-desk",
    "ablation-ca",
    "ablation-p",
    "ablation-lambda",
    "ablation-beta",
    "ablation-n",
    "init",
    "logistic-mushrooms",
    "logistic-duke",
];

/// The six-way comparison; GD gets 20 times the iterations to match local work.
fn comparison(t: u64) -> Vec<AlgoSpec> {
    let mut algos: Vec<AlgoSpec> =
        ["icgm-rg-saga", "icgm-rg-svrg", "scaffold", "fedavg", "saber-full"].into_iter().map(AlgoSpec::named).collect();
    algos.push(AlgoSpec::named("gd").with_t(20 * t));
    algos
}

fn quadratic(params: QuadLogSumParams) -> ProblemSpec {
    ProblemSpec::Quadratic { params, instance_seed: 0 }
}

fn sweep(param: &str, values: &[f64]) -> Option<SweepSpec> {
    Some(SweepSpec { param: param.into(), values: values.to_vec() })
}

fn rg_saga_sweep(param: &str, values: &[f64]) -> ExperimentConfig {
    ExperimentConfig {
        algorithms: vec![AlgoSpec::named("icgm-rg-saga")],
        sweep: sweep(param, values),
        out: PathBuf::from(format!("out/ablation-{param}")),
        ..ExperimentConfig::default()
    }
}

fn logistic(name: &str) -> ExperimentConfig {
    ExperimentConfig {
        problem: ProblemSpec::Logistic {
            path: PathBuf::from(format!("data/{name}")),
            n: 10,
            alpha: 0.1,
            sharding: Default::default(),
            probe_seed: 0,
        },
        cost: CostSpec { m: Some(1), ..CostSpec::default() },
        algorithms: comparison(700),
        out: PathBuf::from(format!("out/logistic-{name}")),
        ..ExperimentConfig::default()
    }
}

/// Case-insensitive lookup of one of [`PRESETS`].
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let cfg = match name.to_ascii_lowercase().as_str() {
        "fig2" => ExperimentConfig {
            problem: quadratic(QuadLogSumParams::reference()),
            algorithms: comparison(700),
            out: PathBuf::from("out/fig2"),
            ..ExperimentConfig::default()
        },
        "fig2-desk" => ExperimentConfig {
            problem: quadratic(QuadLogSumParams::desk(40, 200)),
            cost: CostSpec { m: Some(6), ..CostSpec::default() },
            algorithms: comparison(700),
            seeds: (0..10).collect(),
            out: PathBuf::from("out/fig2-desk"),
            ..ExperimentConfig::default()
        },
        "ablation-ca" => ExperimentConfig {
            algorithms: vec![AlgoSpec::named("icgm-rg-saga"), AlgoSpec::named("icgm-rg-svrg")],
            ..rg_saga_sweep("c_a", &[1.0, 5.0, 10.0, 20.0])
        },
        "ablation-p" => rg_saga_sweep("p", &[0.5, 0.05, 0.005]),
        "ablation-lambda" => rg_saga_sweep("lambda", &[1.0, 10.0, 100.0]),
        "ablation-beta" => rg_saga_sweep("beta", &[0.5, 0.1, 0.05, 0.01, 0.005, 0.001]),
        "ablation-n" => ExperimentConfig {
            cost: CostSpec { m: Some(1), ..CostSpec::default() },
            rule: ParamRule::NAblation,
            ..rg_saga_sweep("n", &[10.0, 100.0, 1000.0])
        },
        "init" => ExperimentConfig { out: PathBuf::from("out/init"), ..rg_saga_sweep("t0", &[0.0, 1.0, 2.0]) },
        "logistic-mushrooms" => logistic("mushrooms"),
        "logistic-duke" => logistic("duke"),
        _ => return None,
    };
    Some(cfg)
}
