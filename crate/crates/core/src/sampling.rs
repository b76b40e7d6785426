//! Client subsets and local-step counts.

use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Result, SimError};
use crate::rng::SimRng;

/// Uniform `m`-subset of `0..n` without replacement (partial Fisher-Yates),
/// returned in ascending order so reductions over it are order-stable.
pub fn sample_subset(n: usize, m: usize, rng: &mut SimRng) -> Vec<usize> {
    assert!(m <= n, "subset size {m} exceeds population {n}");
    let mut pool: Vec<usize> = (0..n).collect();
    for k in 0..m {
        let j = rng.random_range(k..n);
        pool.swap(k, j);
    }
    pool.truncate(m);
    pool.sort_unstable();
    pool
}

/// Draws `K ~ Geom(p)` with `P(K = k) = (1 - p)^k p`, `k = 0, 1, 2, ...`.
pub fn sample_geometric(p: f64, rng: &mut SimRng) -> Result<u64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(SimError::InvalidConfig(format!(
            "geometric parameter must lie in (0, 1], got {p}"
        )));
    }
    if p == 1.0 {
        return Ok(0);
    }
    let dist = Geometric::new(p).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    Ok(dist.sample(rng))
}

pub fn sample_bernoulli(p: f64, rng: &mut SimRng) -> bool {
    if p >= 1.0 {
        return true;
    }
    if p <= 0.0 {
        return false;
    }
    rng.random::<f64>() < p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn full_subset_is_everyone() {
        let mut rng = seeded(3);
        for _ in 0..10 {
            assert_eq!(sample_subset(5, 5, &mut rng), vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn subsets_are_distinct_and_sorted() {
        let mut rng = seeded(11);
        for _ in 0..1000 {
            let s = sample_subset(9, 4, &mut rng);
            assert_eq!(s.len(), 4);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|&i| i < 9));
        }
    }

    #[test]
    fn geometric_p_one_is_zero() {
        let mut rng = seeded(1);
        assert!((0..100).all(|_| sample_geometric(1.0, &mut rng).unwrap() == 0));
    }

    #[test]
    fn geometric_rejects_bad_p() {
        let mut rng = seeded(1);
        assert!(sample_geometric(0.0, &mut rng).is_err());
        assert!(sample_geometric(1.5, &mut rng).is_err());
    }
}
