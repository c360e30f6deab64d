//! Beta-Bernoulli Thompson sampling with one independent arm per creative.
//!
//! Captures every possible interaction (one free parameter per creative) at
//! the cost of enumerating the whole creative list on every selection.

use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Beta, Distribution};

use crate::error::Result;
use crate::graph::{Creative, CreativeIndex, ElementGraph};

use super::{PerCreativeStats, Policy};

pub struct FullTsPolicy {
    index: CreativeIndex,
    stats: PerCreativeStats,
    /// Beta(1 + s, 1 + n - s) per creative under the frozen stats.
    dists: Vec<Beta<f64>>,
    dirty: bool,
    ops: u64,
}

impl FullTsPolicy {
    pub fn new(graph: Arc<ElementGraph>) -> Result<Self> {
        let index = CreativeIndex::build(&graph)?;
        let n = index.len();
        let stats = PerCreativeStats::new(n);
        Ok(Self {
            index,
            stats,
            dists: Vec::with_capacity(n),
            dirty: true,
            ops: 0,
        })
    }

    fn rebuild(&mut self) {
        self.dists.clear();
        for i in 0..self.index.len() {
            let s = self.stats.clicks(i) as f64;
            let n = self.stats.impressions(i) as f64;
            self.dists
                .push(Beta::new(1.0 + s, 1.0 + n - s).expect("valid Beta parameters"));
        }
        self.dirty = false;
    }
}

impl Policy for FullTsPolicy {
    fn name(&self) -> &'static str {
        "full_ts"
    }

    fn select(&mut self, rng: &mut dyn RngCore) -> Creative {
        if self.dirty {
            self.rebuild();
        }
        let mut best = 0;
        let mut best_draw = f64::NEG_INFINITY;
        for (i, d) in self.dists.iter().enumerate() {
            self.ops += 1;
            let draw = d.sample(rng);
            if draw > best_draw {
                best_draw = draw;
                best = i;
            }
        }
        self.index.get(best).clone()
    }

    fn observe(&mut self, creative: &Creative, clicked: bool) {
        let idx = self
            .index
            .index_of(creative)
            .expect("observed creative must be feasible");
        self.stats.record(idx, clicked);
        self.dirty = true;
    }

    fn reset(&mut self) {
        self.stats.reset();
        self.dirty = true;
        self.ops = 0;
    }

    fn select_ops(&self) -> u64 {
        self.ops
    }
}
