//! Client-selection strategies and exact communication/local accounting.
//!
//! A round is opened by one of the `select_*` methods, which charges its
//! communication cost immediately. Query counts are recorded on the returned
//! [`RoundHandle`] and the round's local cost `K_r` (the largest per-client count)
//! is added when the handle is passed back to [`CostLedger::close_round`].

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::SimRng;
use crate::sampling::sample_subset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Arbitrary selection, cost `c_a`.
    Ass,
    /// Uniform random `m`-subset, cost `c_r`.
    Rss,
    /// The delegate set, cost 1.
    Dss,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Ass => "ASS",
            Strategy::Rss => "RSS",
            Strategy::Dss => "DSS",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub c_a: Rational64,
    pub c_r: Rational64,
    /// Maximum number of clients contacted in one round.
    pub m: usize,
    /// Delegate set; client `0` by default.
    pub delegate: Vec<usize>,
}

impl CostConfig {
    pub fn new(c_a: Rational64, c_r: Rational64, m: usize) -> Result<Self> {
        let cfg = Self { c_a, c_r, m, delegate: vec![0] };
        cfg.check_costs()?;
        Ok(cfg)
    }

    /// Integer costs, the common case.
    pub fn with_integer_costs(c_a: i64, c_r: i64, m: usize) -> Result<Self> {
        Self::new(Rational64::from_integer(c_a), Rational64::from_integer(c_r), m)
    }

    /// `c_a = c_r = 1`
    pub fn unit(m: usize) -> Self {
        Self::with_integer_costs(1, 1, m).expect("unit costs are valid")
    }

    fn check_costs(&self) -> Result<()> {
        let one = Rational64::from_integer(1);
        if !(one <= self.c_r && self.c_r <= self.c_a) {
            return Err(SimError::InvalidConfig(format!(
                "costs must satisfy 1 <= c_r <= c_a (got c_r = {}, c_a = {})",
                self.c_r, self.c_a
            )));
        }
        if self.m == 0 {
            return Err(SimError::InvalidConfig("m must be at least 1".into()));
        }
        Ok(())
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.check_costs()?;
        if self.m > n {
            return Err(SimError::InvalidConfig(format!("m = {} exceeds n = {n}", self.m)));
        }
        if self.delegate.is_empty() || self.delegate.iter().any(|&i| i >= n) {
            return Err(SimError::InvalidConfig(format!(
                "delegate set {:?} is empty or out of range for n = {n}",
                self.delegate
            )));
        }
        Ok(())
    }

    /// Rounds needed to reach every client: `ceil(n / m)`.
    pub fn sync_rounds(&self, n: usize) -> usize {
        n.div_ceil(self.m)
    }
}

/// An open round. Consumed by [`CostLedger::close_round`].
#[derive(Debug)]
#[must_use = "a round handle must be closed on its ledger"]
pub struct RoundHandle {
    strategy: Strategy,
    members: Vec<usize>,
    counts: BTreeMap<usize, u64>,
}

impl RoundHandle {
    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    /// Adds `k` oracle queries by client `i` in this round.
    pub fn record(&mut self, i: usize, k: u64) -> Result<()> {
        if !self.contains(i) {
            return Err(SimError::Accounting(format!(
                "client {i} is not part of this {} round {:?}",
                self.strategy, self.members
            )));
        }
        *self.counts.entry(i).or_insert(0) += k;
        Ok(())
    }

    /// One query by every member.
    pub fn record_all(&mut self, k: u64) {
        for &i in &self.members {
            *self.counts.entry(i).or_insert(0) += k;
        }
    }

    pub fn queries(&self, i: usize) -> u64 {
        self.counts.get(&i).copied().unwrap_or(0)
    }

    /// `K_r`: the largest per-client count so far.
    pub fn round_local_cost(&self) -> u64 {
        self.counts.values().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub strategy: Strategy,
    pub local: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTotals {
    pub communication: Rational64,
    pub local: u64,
}

#[derive(Debug, Clone)]
pub struct CostLedger {
    config: CostConfig,
    n: usize,
    n_a: u64,
    n_r: u64,
    n_d: u64,
    local_total: u64,
    open: usize,
    log: Option<Vec<RoundRecord>>,
}

impl CostLedger {
    pub fn new(config: CostConfig, n: usize) -> Result<Self> {
        config.validate(n)?;
        Ok(Self { config, n, n_a: 0, n_r: 0, n_d: 0, local_total: 0, open: 0, log: None })
    }

    /// Keeps a per-round `(strategy, K_r)` log.
    pub fn with_round_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn config(&self) -> &CostConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.config.m
    }

    pub fn select_arbitrary(&mut self, subset: &[usize]) -> Result<RoundHandle> {
        if subset.is_empty() || subset.len() > self.config.m {
            return Err(SimError::InvalidSelection(format!(
                "subset size {} not in [1, m = {}]",
                subset.len(),
                self.config.m
            )));
        }
        let mut members = subset.to_vec();
        members.sort_unstable();
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(SimError::InvalidSelection(format!("repeated client in {subset:?}")));
        }
        if let Some(&bad) = members.iter().find(|&&i| i >= self.n) {
            return Err(SimError::InvalidSelection(format!(
                "client {bad} out of range for n = {}",
                self.n
            )));
        }
        self.n_a += 1;
        Ok(self.open_round(Strategy::Ass, members))
    }

    pub fn select_random(&mut self, rng: &mut SimRng) -> (Vec<usize>, RoundHandle) {
        let subset = sample_subset(self.n, self.config.m, rng);
        self.n_r += 1;
        let handle = self.open_round(Strategy::Rss, subset.clone());
        (subset, handle)
    }

    /// Random round over a uniform subset of `size <= m` clients, cost `c_r`.
    pub fn select_random_sized(&mut self, size: usize, rng: &mut SimRng) -> Result<(Vec<usize>, RoundHandle)> {
        if size == 0 || size > self.config.m {
            return Err(SimError::InvalidSelection(format!(
                "subset size {size} not in [1, m = {}]",
                self.config.m
            )));
        }
        let subset = sample_subset(self.n, size, rng);
        self.n_r += 1;
        let handle = self.open_round(Strategy::Rss, subset.clone());
        Ok((subset, handle))
    }

    pub fn select_delegate(&mut self) -> RoundHandle {
        let mut members = self.config.delegate.clone();
        members.sort_unstable();
        members.dedup();
        self.n_d += 1;
        self.open_round(Strategy::Dss, members)
    }

    fn open_round(&mut self, strategy: Strategy, members: Vec<usize>) -> RoundHandle {
        self.open += 1;
        RoundHandle { strategy, members, counts: BTreeMap::new() }
    }

    pub fn close_round(&mut self, handle: RoundHandle) {
        let k = handle.round_local_cost();
        self.local_total += k;
        self.open -= 1;
        if let Some(log) = self.log.as_mut() {
            log.push(RoundRecord { strategy: handle.strategy, local: k });
        }
    }

    /// Charges a full synchronization: `ceil(n/m)` arbitrary rounds over disjoint
    /// blocks of consecutive clients, one query each.
    pub fn full_sync(&mut self) {
        let m = self.config.m;
        for start in (0..self.n).step_by(m) {
            let block: Vec<usize> = (start..(start + m).min(self.n)).collect();
            let mut h = self.select_arbitrary(&block).expect("sync blocks are valid");
            h.record_all(1);
            self.close_round(h);
        }
    }

    pub fn n_a(&self) -> u64 {
        self.n_a
    }

    pub fn n_r(&self) -> u64 {
        self.n_r
    }

    pub fn n_d(&self) -> u64 {
        self.n_d
    }

    pub fn open_rounds(&self) -> usize {
        self.open
    }

    /// `c_a N_A + c_r N_R + N_D`, including rounds still open.
    pub fn communication(&self) -> Rational64 {
        self.config.c_a * as_rational(self.n_a)
            + self.config.c_r * as_rational(self.n_r)
            + as_rational(self.n_d)
    }

    /// Local cost of closed rounds.
    pub fn local(&self) -> u64 {
        self.local_total
    }

    pub fn totals(&self) -> Result<CostTotals> {
        if self.open > 0 {
            return Err(SimError::Accounting(format!("{} round(s) still open", self.open)));
        }
        Ok(CostTotals { communication: self.communication(), local: self.local_total })
    }

    pub fn round_log(&self) -> Option<&[RoundRecord]> {
        self.log.as_deref()
    }
}

fn as_rational(k: u64) -> Rational64 {
    Rational64::from_integer(i64::try_from(k).expect("round count fits in i64"))
}
