//! LinUCB over the tree feature space.
//!
//! Same featurization as the Thompson policies, but selection enumerates the
//! feasible creatives and maximizes `x^T theta + alpha sqrt(x^T A^-1 x)`
//! where `A = I + sum x x^T` and `theta` is the ridge solution. The ridge
//! state is the same machinery as the Gaussian posterior.

use std::sync::Arc;

use rand::RngCore;

use crate::error::Result;
use crate::features::SparseFeatures;
use crate::graph::{Creative, CreativeIndex, ElementGraph};
use crate::model::PosteriorState;

use super::Policy;

pub struct LinUcbPolicy {
    index: CreativeIndex,
    features: Vec<SparseFeatures>,
    state: PosteriorState,
    alpha: f64,
    cached_argmax: Option<usize>,
    ops: u64,
}

impl LinUcbPolicy {
    pub fn new(graph: Arc<ElementGraph>, alpha: f64) -> Result<Self> {
        let index = CreativeIndex::build(&graph)?;
        let indexer = graph.indexer();
        let features = index
            .creatives()
            .iter()
            .map(|c| indexer.featurize(c))
            .collect::<Result<Vec<_>>>()?;
        let state = PosteriorState::new(indexer.dim(), 0.0);
        Ok(Self {
            index,
            features,
            state,
            alpha,
            cached_argmax: None,
            ops: 0,
        })
    }

    fn argmax(&mut self) -> usize {
        if let Some(i) = self.cached_argmax {
            return i;
        }
        let w = self.state.w_mean();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, x) in self.features.iter().enumerate() {
            self.ops += 1;
            let mean: f64 = x.coords().iter().map(|&c| w[c]).sum();
            let score = if self.alpha == 0.0 {
                mean
            } else {
                mean + self.alpha * self.state.quad_form(x.coords()).max(0.0).sqrt()
            };
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        self.cached_argmax = Some(best);
        best
    }

    /// Exploration bonus of one creative under the current state.
    pub fn bonus(&self, idx: usize) -> f64 {
        self.alpha * self.state.quad_form(self.features[idx].coords()).max(0.0).sqrt()
    }
}

impl Policy for LinUcbPolicy {
    fn name(&self) -> &'static str {
        "linucb"
    }

    fn select(&mut self, _rng: &mut dyn RngCore) -> Creative {
        let i = self.argmax();
        self.index.get(i).clone()
    }

    fn observe(&mut self, creative: &Creative, clicked: bool) {
        let idx = self
            .index
            .index_of(creative)
            .expect("observed creative must be feasible");
        self.state.update(&self.features[idx], clicked);
        self.cached_argmax = None;
    }

    fn reset(&mut self) {
        self.state = PosteriorState::new(self.state.dim(), 0.0);
        self.cached_argmax = None;
        self.ops = 0;
    }

    fn select_ops(&self) -> u64 {
        self.ops
    }
}
