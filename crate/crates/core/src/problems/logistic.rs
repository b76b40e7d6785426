//! Logistic regression with the nonconvex regularizer `alpha sum_k x_k^2 / (1 + x_k^2)`,
//! split over clients by rows.

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::libsvm::{SparseDataset, SparseRow};
use super::{ClientObjective, ProblemInstance};
use crate::error::{Result, SimError};
use crate::rng::seeded;

/// How rows are assigned to clients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sharding {
    /// Consecutive blocks in row order, sizes differing by at most one.
    #[default]
    Contiguous,
    /// Per-label proportions drawn from a symmetric Dirichlet.
    Dirichlet { concentration: f64, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct LogisticClient {
    rows: Vec<SparseRow>,
    labels: Vec<f64>,
    dim: usize,
    /// `n / M`
    weight: f64,
    alpha: f64,
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `1 / (1 + exp(-z))`
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl ClientObjective for LogisticClient {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let loss: f64 = self
            .rows
            .iter()
            .zip(&self.labels)
            .map(|(row, &y)| softplus(-y * row.dot(x)))
            .sum();
        let reg: f64 = x.iter().map(|v| v * v / (1.0 + v * v)).sum();
        self.weight * loss + self.alpha * reg
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            let s = 1.0 + v * v;
            *o = self.alpha * 2.0 * v / (s * s);
        }
        for (row, &y) in self.rows.iter().zip(&self.labels) {
            let coef = -y * sigmoid(-y * row.dot(x)) * self.weight;
            for (&k, a) in row.indices.iter().zip(&row.values) {
                out[k] += coef * a;
            }
        }
    }
}

fn contiguous_sizes(total: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| total / n + usize::from(i < total % n)).collect()
}

fn dirichlet_assignment(data: &SparseDataset, n: usize, concentration: f64, seed: u64) -> Result<Vec<Vec<usize>>> {
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| SimError::InvalidConfig(format!("Dirichlet concentration: {e}")))?;
    let mut rng = seeded(seed);
    let mut classes: Vec<f64> = Vec::new();
    for &y in &data.labels {
        if !classes.contains(&y) {
            classes.push(y);
        }
    }
    classes.sort_by(f64::total_cmp);
    let mut shards = vec![Vec::new(); n];
    for class in classes {
        let rows: Vec<usize> = (0..data.len()).filter(|&r| data.labels[r] == class).collect();
        let w: Vec<f64> = (0..n).map(|_| gamma.sample(&mut rng).max(f64::MIN_POSITIVE)).collect();
        let total: f64 = w.iter().sum();
        let mut cum = 0.0;
        let mut start = 0;
        for (i, wi) in w.iter().enumerate() {
            cum += wi / total;
            let end = if i + 1 == n { rows.len() } else { ((cum * rows.len() as f64).round() as usize).min(rows.len()) };
            shards[i].extend_from_slice(&rows[start..end.max(start)]);
            start = end.max(start);
        }
    }
    Ok(shards)
}

pub fn gen_logistic_nonconvex(data: &SparseDataset, n: usize, alpha: f64) -> Result<ProblemInstance> {
    gen_logistic_with(data, n, alpha, Sharding::Contiguous)
}

pub fn gen_logistic_with(
    data: &SparseDataset,
    n: usize,
    alpha: f64,
    sharding: Sharding,
) -> Result<ProblemInstance> {
    if n == 0 || n > data.len() {
        return Err(SimError::InvalidInput(format!(
            "cannot split {} rows over {n} clients",
            data.len()
        )));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(SimError::InvalidConfig(format!("alpha must be nonnegative, got {alpha}")));
    }
    for (r, &y) in data.labels.iter().enumerate() {
        if y != 1.0 && y != -1.0 {
            let line = data.lines.get(r).copied().unwrap_or(r + 1);
            return Err(SimError::Data { line, message: format!("label {y} not in {{-1, +1}}") });
        }
    }
    let shards: Vec<Vec<usize>> = match sharding {
        Sharding::Contiguous => {
            let mut start = 0;
            contiguous_sizes(data.len(), n)
                .into_iter()
                .map(|s| {
                    let v: Vec<usize> = (start..start + s).collect();
                    start += s;
                    v
                })
                .collect()
        }
        Sharding::Dirichlet { concentration, seed } => dirichlet_assignment(data, n, concentration, seed)?,
    };
    if let Some(empty) = shards.iter().position(Vec::is_empty) {
        return Err(SimError::InvalidInput(format!("client {empty} received no rows")));
    }
    let weight = n as f64 / data.len() as f64;
    let clients: Vec<LogisticClient> = shards
        .into_iter()
        .map(|rows| LogisticClient {
            labels: rows.iter().map(|&r| data.labels[r]).collect(),
            rows: rows.into_iter().map(|r| data.rows[r].clone()).collect(),
            dim: data.dim,
            weight,
            alpha,
        })
        .collect();
    ProblemInstance::from_clients("logistic-nonconvex", clients)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::libsvm::parse_libsvm;

    fn data(text: &str) -> SparseDataset {
        parse_libsvm(text.as_bytes()).unwrap()
    }

    #[test]
    fn single_row_hand_values() {
        let p = gen_logistic_nonconvex(&data("1 1:1\n"), 1, 0.0).unwrap();
        let (v, g) = p.oracle_query(0, &[0.0]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((g[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn regularizer_flat_at_origin() {
        let c = LogisticClient { rows: vec![], labels: vec![], dim: 3, weight: 1.0, alpha: 4.0 };
        let mut g = vec![1.0; 3];
        c.gradient_into(&[0.0; 3], &mut g);
        assert_eq!(c.value(&[0.0; 3]), 0.0);
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn mean_of_clients_is_global_mean_loss() {
        let d = data("1 1:1 2:-1\n-1 1:0.5\n1 2:2\n-1 1:-1 2:1\n1 1:3\n");
        let x = [0.3, -0.2];
        let p = gen_logistic_nonconvex(&d, 2, 0.7).unwrap();
        let direct: f64 = d
            .rows
            .iter()
            .zip(&d.labels)
            .map(|(r, &y)| softplus(-y * r.dot(&x)))
            .sum::<f64>()
            / 5.0
            + 0.7 * x.iter().map(|v| v * v / (1.0 + v * v)).sum::<f64>();
        assert!((p.full_objective(&x).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = data("1 1:1 2:-1 3:0.5\n-1 1:0.5\n1 2:2 3:-1\n");
        let p = gen_logistic_nonconvex(&d, 1, 0.3).unwrap();
        let x = [0.4, -1.1, 0.9];
        let g = p.full_gradient(&x).unwrap();
        for k in 0..3 {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (p.full_objective(&xp).unwrap() - p.full_objective(&xm).unwrap()) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7);
        }
    }

    #[test]
    fn input_errors() {
        assert!(matches!(gen_logistic_nonconvex(&data("2 1:1\n"), 1, 0.0), Err(SimError::Data { line: 1, .. })));
        assert!(matches!(gen_logistic_nonconvex(&data("1 1:1\n"), 2, 0.0), Err(SimError::InvalidInput(_))));
    }

    #[test]
    fn contiguous_sizes_differ_by_one() {
        assert_eq!(contiguous_sizes(10, 3), vec![4, 3, 3]);
    }

    #[test]
    fn dirichlet_split_covers_every_row() {
        let text: String = (0..60).map(|r| format!("{} 1:{r}\n", if r % 3 == 0 { 1 } else { -1 })).collect();
        let d = data(&text);
        let shards = dirichlet_assignment(&d, 4, 5.0, 7).unwrap();
        let mut all: Vec<usize> = shards.concat();
        all.sort_unstable();
        assert_eq!(all, (0..60).collect::<Vec<_>>());
    }
}
