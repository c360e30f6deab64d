//! Context-free baselines: uniform random, epsilon-greedy, and UCB1.
//!
//! All three enumerate the feasible creatives once and treat each as an
//! independent arm. Unvisited arms are optimistic (mean 1.0, infinite UCB
//! bonus) so every creative gets covered.

use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::error::Result;
use crate::graph::{Creative, CreativeIndex, ElementGraph};

use super::{PerCreativeStats, Policy};

pub struct RandomPolicy {
    index: CreativeIndex,
    ops: u64,
}

impl RandomPolicy {
    pub fn new(graph: Arc<ElementGraph>) -> Result<Self> {
        Ok(Self {
            index: CreativeIndex::build(&graph)?,
            ops: 0,
        })
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn select(&mut self, rng: &mut dyn RngCore) -> Creative {
        self.ops += 1;
        self.index.get(rng.random_range(0..self.index.len())).clone()
    }

    fn observe(&mut self, _creative: &Creative, _clicked: bool) {}

    fn reset(&mut self) {
        self.ops = 0;
    }

    fn select_ops(&self) -> u64 {
        self.ops
    }
}

pub struct EgreedyPolicy {
    index: CreativeIndex,
    stats: PerCreativeStats,
    epsilon: f64,
    /// Greedy argmax under the current (frozen) stats.
    cached_greedy: Option<usize>,
    ops: u64,
}

impl EgreedyPolicy {
    pub fn new(graph: Arc<ElementGraph>, epsilon: f64) -> Result<Self> {
        let index = CreativeIndex::build(&graph)?;
        let stats = PerCreativeStats::new(index.len());
        Ok(Self {
            index,
            stats,
            epsilon,
            cached_greedy: None,
            ops: 0,
        })
    }

    fn greedy(&mut self) -> usize {
        if let Some(g) = self.cached_greedy {
            return g;
        }
        let mut best = 0;
        let mut best_mean = f64::NEG_INFINITY;
        for i in 0..self.index.len() {
            self.ops += 1;
            let mean = self.stats.mean_or(i, 1.0);
            if mean > best_mean {
                best_mean = mean;
                best = i;
            }
        }
        self.cached_greedy = Some(best);
        best
    }
}

impl Policy for EgreedyPolicy {
    fn name(&self) -> &'static str {
        "egreedy"
    }

    fn select(&mut self, rng: &mut dyn RngCore) -> Creative {
        let idx = if rng.random::<f64>() < self.epsilon {
            self.ops += 1;
            rng.random_range(0..self.index.len())
        } else {
            self.greedy()
        };
        self.index.get(idx).clone()
    }

    fn observe(&mut self, creative: &Creative, clicked: bool) {
        let idx = self
            .index
            .index_of(creative)
            .expect("observed creative must be feasible");
        self.stats.record(idx, clicked);
        self.cached_greedy = None;
    }

    fn reset(&mut self) {
        self.stats.reset();
        self.cached_greedy = None;
        self.ops = 0;
    }

    fn select_ops(&self) -> u64 {
        self.ops
    }
}

pub struct UcbPolicy {
    index: CreativeIndex,
    stats: PerCreativeStats,
    lambda: f64,
    /// Selections made so far; the time step of the next select is `t + 1`.
    t: u64,
    ops: u64,
}

impl UcbPolicy {
    pub fn new(graph: Arc<ElementGraph>, lambda: f64) -> Result<Self> {
        let index = CreativeIndex::build(&graph)?;
        let stats = PerCreativeStats::new(index.len());
        Ok(Self {
            index,
            stats,
            lambda,
            t: 0,
            ops: 0,
        })
    }
}

impl Policy for UcbPolicy {
    fn name(&self) -> &'static str {
        "ucb"
    }

    fn select(&mut self, _rng: &mut dyn RngCore) -> Creative {
        self.t += 1;
        // unvisited first: infinite bonus, lowest index wins
        for i in 0..self.index.len() {
            self.ops += 1;
            if self.stats.impressions(i) == 0 {
                return self.index.get(i).clone();
            }
        }
        let log_t = (self.t as f64).ln();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..self.index.len() {
            self.ops += 1;
            let n = self.stats.impressions(i) as f64;
            let mean = self.stats.clicks(i) as f64 / n;
            let score = mean + self.lambda * (2.0 * log_t / n).sqrt();
            if score > best_score {
                best_score = score;
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
    }

    fn reset(&mut self) {
        self.stats.reset();
        self.t = 0;
        self.ops = 0;
    }

    fn select_ops(&self) -> u64 {
        self.ops
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::preset_graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph() -> Arc<ElementGraph> {
        Arc::new(preset_graph(200).unwrap())
    }

    #[test]
    fn egreedy_epsilon_one_is_uniform() {
        let mut p = EgreedyPolicy::new(graph(), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut counts = vec![0u32; 200];
        let index = CreativeIndex::build(&graph()).unwrap();
        for _ in 0..20_000 {
            let c = p.select(&mut rng);
            counts[index.index_of(&c).unwrap()] += 1;
        }
        // every creative hit, none wildly off uniform (expected 100)
        assert!(counts.iter().all(|&c| c > 0));
        assert!(counts.iter().all(|&c| c < 200));
    }

    #[test]
    fn egreedy_epsilon_zero_sticks_to_best() {
        let g = graph();
        let mut p = EgreedyPolicy::new(g.clone(), 0.0).unwrap();
        let index = CreativeIndex::build(&g).unwrap();
        // creative 7 gets a perfect record, every other creative a zero record
        for i in 0..index.len() {
            p.observe(index.get(i), i == 7);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            assert_eq!(p.select(&mut rng), *index.get(7));
        }
    }

    #[test]
    fn egreedy_random_fraction_matches_epsilon() {
        let g = graph();
        let mut p = EgreedyPolicy::new(g.clone(), 0.1).unwrap();
        let index = CreativeIndex::build(&g).unwrap();
        // train so the greedy pick is creative 0 and everything is visited
        for i in 0..index.len() {
            p.observe(index.get(i), i == 0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut non_greedy = 0u64;
        for _ in 0..n {
            if p.select(&mut rng) != *index.get(0) {
                non_greedy += 1;
            }
        }
        // non-greedy picks happen with rate epsilon * (199/200)
        let rate = non_greedy as f64 / n as f64;
        assert!((rate - 0.1 * 199.0 / 200.0).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn ucb_selects_unvisited_in_index_order() {
        let g = graph();
        let mut p = UcbPolicy::new(g.clone(), 0.03).unwrap();
        let index = CreativeIndex::build(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 0..5 {
            let c = p.select(&mut rng);
            assert_eq!(c, *index.get(i));
            p.observe(&c, false);
        }
    }

    #[test]
    fn ucb_lambda_zero_is_pure_greedy() {
        let g = graph();
        let mut p = UcbPolicy::new(g.clone(), 0.0).unwrap();
        let index = CreativeIndex::build(&g).unwrap();
        for i in 0..index.len() {
            p.observe(index.get(i), i == 3);
            p.observe(index.get(i), i == 3);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(p.select(&mut rng), *index.get(3));
    }

    #[test]
    fn ucb_bonus_prefers_less_visited_on_equal_means() {
        let g = Arc::new(crate::graph::preset_graph(32).unwrap());
        let mut p = UcbPolicy::new(g.clone(), 0.03).unwrap();
        let index = CreativeIndex::build(&g).unwrap();
        // all visited; creatives 0 and 1 both have mean 0.5 but 0 is visited more
        for i in 0..index.len() {
            let reps = if i == 0 { 8 } else { 2 };
            for r in 0..reps {
                p.observe(index.get(i), (r % 2 == 0) && i <= 1);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // at t = 1 the log bonus vanishes and the tie goes to the lower index
        assert_eq!(p.select(&mut rng), *index.get(0));
        // from t = 2 on, the bonus breaks the tie toward the less-visited arm
        assert_eq!(p.select(&mut rng), *index.get(1));
    }
}
