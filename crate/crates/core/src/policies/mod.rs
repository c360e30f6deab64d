//! Selection policies: the tree-structured Thompson sampler and the
//! classical baselines it is benchmarked against.
//!
//! Every policy keeps whatever state it learns from `observe` calls and
//! produces one creative per `select`. Under batched (delayed) feedback the
//! harness calls `select` for a whole batch before feeding the collected
//! rewards to `observe` in impression order, so policies cache per-batch
//! work (posterior factors, greedy argmaxes) and invalidate it on update.

mod baseline;
mod clairvoyant;
mod full_ts;
mod ind_egreedy;
mod linucb;
mod mvt;
mod ts;

pub use baseline::{EgreedyPolicy, RandomPolicy, UcbPolicy};
pub use clairvoyant::ClairvoyantPolicy;
pub use full_ts::FullTsPolicy;
pub use ind_egreedy::IndEgreedyPolicy;
pub use linucb::LinUcbPolicy;
pub use mvt::{MvtIndexer, MvtPolicy};
pub use ts::{FeatureSubset, TegreedyPolicy, TreeTsPolicy};

use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Creative, ElementGraph};

/// One selection strategy over a fixed element graph.
pub trait Policy: Send {
    fn name(&self) -> &'static str;

    /// Pick the creative for the next impression.
    fn select(&mut self, rng: &mut dyn RngCore) -> Creative;

    /// Feed back one impression. Each call counts once; the harness replays
    /// a batch's impressions in order at the batch boundary.
    fn observe(&mut self, creative: &Creative, clicked: bool);

    /// Back to the initial (untrained) state.
    fn reset(&mut self);

    /// Cumulative instrumented selection work (search steps, not updates).
    fn select_ops(&self) -> u64 {
        0
    }

    /// True for policies whose search ignores visual constraints.
    fn may_violate_constraints(&self) -> bool {
        false
    }
}

/// Per-creative impression and click counts for the context-free policies.
#[derive(Debug, Clone)]
pub struct PerCreativeStats {
    impressions: Vec<u64>,
    clicks: Vec<u64>,
}

impl PerCreativeStats {
    pub fn new(n: usize) -> Self {
        Self {
            impressions: vec![0; n],
            clicks: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.impressions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.impressions.is_empty()
    }

    pub fn record(&mut self, idx: usize, clicked: bool) {
        self.impressions[idx] += 1;
        if clicked {
            self.clicks[idx] += 1;
        }
    }

    pub fn impressions(&self, idx: usize) -> u64 {
        self.impressions[idx]
    }

    pub fn clicks(&self, idx: usize) -> u64 {
        self.clicks[idx]
    }

    /// Empirical mean, or `optimistic` for unvisited creatives.
    pub fn mean_or(&self, idx: usize, optimistic: f64) -> f64 {
        let n = self.impressions[idx];
        if n == 0 {
            optimistic
        } else {
            self.clicks[idx] as f64 / n as f64
        }
    }

    pub fn reset(&mut self) {
        self.impressions.fill(0);
        self.clicks.fill(0);
    }
}

/// Hyperparameters for every policy, with the defaults used in the
/// benchmarks. Unknown keys in a config file are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyParams {
    /// Exploration rate for egreedy / ind_egreedy / tegreedy.
    pub epsilon: f64,
    /// Confidence-radius multiplier for ucb.
    pub lambda: f64,
    /// Exploration coefficient for linucb.
    pub alpha: f64,
    /// Prior / exploration scale of the Gaussian posterior (aes, edge_ts,
    /// vertex_ts, mvt).
    pub sigma: f64,
    /// Hill-climbing sweeps per restart (mvt).
    pub mvt_sweeps: usize,
    /// Hill-climbing restarts (mvt).
    pub mvt_restarts: usize,
    /// Resampling attempts before ind_egreedy falls back to the first
    /// feasible creative.
    pub max_retries: usize,
    /// Posterior inverse refactorization cadence.
    pub recompute_interval: u64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            lambda: 0.03,
            alpha: 0.3,
            // 0/1 rewards are 1/2-sub-Gaussian; a unit prior over-explores
            // once the simulator rescales scores into a narrow CTR band
            sigma: 0.5,
            mvt_sweeps: 4,
            mvt_restarts: 3,
            max_retries: 10,
            recompute_interval: 1000,
        }
    }
}

/// The policy names accepted in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Random,
    Egreedy,
    Ucb,
    Linucb,
    IndEgreedy,
    Tegreedy,
    Aes,
    Mvt,
    FullTs,
    EdgeTs,
    VertexTs,
}

impl PolicyName {
    pub const ALL: [PolicyName; 11] = [
        PolicyName::Random,
        PolicyName::Egreedy,
        PolicyName::Ucb,
        PolicyName::Linucb,
        PolicyName::IndEgreedy,
        PolicyName::Tegreedy,
        PolicyName::Aes,
        PolicyName::Mvt,
        PolicyName::FullTs,
        PolicyName::EdgeTs,
        PolicyName::VertexTs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::Random => "random",
            PolicyName::Egreedy => "egreedy",
            PolicyName::Ucb => "ucb",
            PolicyName::Linucb => "linucb",
            PolicyName::IndEgreedy => "ind_egreedy",
            PolicyName::Tegreedy => "tegreedy",
            PolicyName::Aes => "aes",
            PolicyName::Mvt => "mvt",
            PolicyName::FullTs => "full_ts",
            PolicyName::EdgeTs => "edge_ts",
            PolicyName::VertexTs => "vertex_ts",
        }
    }
}

impl std::str::FromStr for PolicyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::UnknownPolicy(s.to_string()))
    }
}

impl std::fmt::Display for PolicyName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Instantiate a fresh policy over `graph`.
pub fn build_policy(
    name: PolicyName,
    params: &PolicyParams,
    graph: &Arc<ElementGraph>,
) -> Result<Box<dyn Policy>> {
    Ok(match name {
        PolicyName::Random => Box::new(RandomPolicy::new(graph.clone())?),
        PolicyName::Egreedy => Box::new(EgreedyPolicy::new(graph.clone(), params.epsilon)?),
        PolicyName::Ucb => Box::new(UcbPolicy::new(graph.clone(), params.lambda)?),
        PolicyName::Linucb => Box::new(LinUcbPolicy::new(graph.clone(), params.alpha)?),
        PolicyName::IndEgreedy => Box::new(IndEgreedyPolicy::new(
            graph.clone(),
            params.epsilon,
            params.max_retries,
        )?),
        PolicyName::Tegreedy => Box::new(TegreedyPolicy::new(
            graph.clone(),
            params.epsilon,
            params.recompute_interval,
        )?),
        PolicyName::Aes => Box::new(TreeTsPolicy::new(
            graph.clone(),
            FeatureSubset::Full,
            params.sigma,
            params.recompute_interval,
        )?),
        PolicyName::EdgeTs => Box::new(TreeTsPolicy::new(
            graph.clone(),
            FeatureSubset::EdgeOnly,
            params.sigma,
            params.recompute_interval,
        )?),
        PolicyName::VertexTs => Box::new(TreeTsPolicy::new(
            graph.clone(),
            FeatureSubset::VertexOnly,
            params.sigma,
            params.recompute_interval,
        )?),
        PolicyName::Mvt => Box::new(MvtPolicy::new(
            graph.clone(),
            params.sigma,
            params.mvt_sweeps,
            params.mvt_restarts,
            params.recompute_interval,
        )?),
        PolicyName::FullTs => Box::new(FullTsPolicy::new(graph.clone())?),
    })
}
