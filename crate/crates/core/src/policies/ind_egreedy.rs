//! Per-ingredient independent epsilon-greedy.
//!
//! Each ingredient runs its own epsilon-greedy over elements; an element is
//! credited with the full impression reward whenever it appears in the shown
//! creative. Interactions between ingredients are invisible to this policy.

use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::graph::{Creative, ElementGraph};

use super::Policy;

pub struct IndEgreedyPolicy {
    graph: Arc<ElementGraph>,
    epsilon: f64,
    max_retries: usize,
    impressions: Vec<Vec<u64>>,
    clicks: Vec<Vec<u64>>,
    /// Per-ingredient greedy element under the frozen stats.
    cached_greedy: Option<Vec<usize>>,
    first_feasible: Creative,
    ops: u64,
}

impl IndEgreedyPolicy {
    pub fn new(graph: Arc<ElementGraph>, epsilon: f64, max_retries: usize) -> Result<Self> {
        let first_feasible = graph
            .enumerate_creatives()
            .next()
            .ok_or(Error::NoFeasibleCreative)?;
        let impressions = graph
            .tree()
            .element_counts()
            .iter()
            .map(|&c| vec![0; c])
            .collect::<Vec<_>>();
        let clicks = impressions.clone();
        Ok(Self {
            graph,
            epsilon,
            max_retries,
            impressions,
            clicks,
            cached_greedy: None,
            first_feasible,
            ops: 0,
        })
    }

    fn greedy_elements(&mut self) -> Vec<usize> {
        if let Some(g) = &self.cached_greedy {
            return g.clone();
        }
        let g: Vec<usize> = self
            .impressions
            .iter()
            .zip(&self.clicks)
            .map(|(ns, ss)| {
                let mut best = 0;
                let mut best_mean = f64::NEG_INFINITY;
                for (e, (&n, &s)) in ns.iter().zip(ss).enumerate() {
                    let mean = if n == 0 { 1.0 } else { s as f64 / n as f64 };
                    if mean > best_mean {
                        best_mean = mean;
                        best = e;
                    }
                }
                best
            })
            .collect();
        self.cached_greedy = Some(g.clone());
        g
    }
}

impl Policy for IndEgreedyPolicy {
    fn name(&self) -> &'static str {
        "ind_egreedy"
    }

    fn select(&mut self, rng: &mut dyn RngCore) -> Creative {
        let greedy = self.greedy_elements();
        let tree = self.graph.tree();
        let n = tree.len();
        let mut choice = vec![0usize; n];
        let mut random_slots = Vec::new();
        for i in 0..n {
            if rng.random::<f64>() < self.epsilon {
                choice[i] = rng.random_range(0..tree.element_count(i));
                random_slots.push(i);
            } else {
                choice[i] = greedy[i];
            }
        }
        self.ops += n as u64;
        let mut c = Creative(choice);
        if self.graph.is_feasible(&c).expect("choice within range") {
            return c;
        }
        if !random_slots.is_empty() {
            for _ in 0..self.max_retries {
                for &i in &random_slots {
                    c.0[i] = rng.random_range(0..tree.element_count(i));
                }
                self.ops += random_slots.len() as u64;
                if self.graph.is_feasible(&c).expect("choice within range") {
                    return c;
                }
            }
        }
        self.first_feasible.clone()
    }

    fn observe(&mut self, creative: &Creative, clicked: bool) {
        for (i, &e) in creative.0.iter().enumerate() {
            self.impressions[i][e] += 1;
            if clicked {
                self.clicks[i][e] += 1;
            }
        }
        self.cached_greedy = None;
    }

    fn reset(&mut self) {
        for v in &mut self.impressions {
            v.fill(0);
        }
        for v in &mut self.clicks {
            v.fill(0);
        }
        self.cached_greedy = None;
        self.ops = 0;
    }

    fn select_ops(&self) -> u64 {
        self.ops
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{preset_graph, IngredientTree};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn epsilon_zero_composes_per_ingredient_argmaxes() {
        let g = Arc::new(preset_graph(200).unwrap());
        let mut p = IndEgreedyPolicy::new(g.clone(), 0.0, 10).unwrap();
        // sharply peaked element means: element 1 of each multi-element
        // ingredient always clicks, everything else never does
        let target = Creative(vec![1, 1, 1, 1, 0]);
        for c in g.enumerate_creatives() {
            p.observe(&c, c == target);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // element 1 has a positive mean in each ingredient, element 0 of the
        // single-element ingredient is forced
        assert_eq!(p.select(&mut rng), target);
    }

    #[test]
    fn single_element_ingredients_force_the_unique_creative() {
        let tree = IngredientTree::new(
            vec![("a".into(), 1), ("b".into(), 1)],
            vec![None, Some(0)],
        )
        .unwrap();
        let g = Arc::new(ElementGraph::structure_only(tree, &[]).unwrap());
        let mut p = IndEgreedyPolicy::new(g, 0.5, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(p.select(&mut rng), Creative(vec![0, 0]));
        }
    }

    #[test]
    fn infeasible_assembly_falls_back_to_feasible() {
        use crate::graph::ForbiddenPair;
        let tree = IngredientTree::new(
            vec![("a".into(), 2), ("b".into(), 2)],
            vec![None, Some(0)],
        )
        .unwrap();
        // only (0,1), (1,0), (1,1) feasible
        let g = Arc::new(
            ElementGraph::structure_only(
                tree,
                &[ForbiddenPair {
                    ingredient_a: 0,
                    element_a: 0,
                    ingredient_b: 1,
                    element_b: 0,
                }],
            )
            .unwrap(),
        );
        let mut p = IndEgreedyPolicy::new(g.clone(), 0.0, 10).unwrap();
        // drive both greedy argmaxes to the forbidden combination (0,0):
        // credit element 0 of each ingredient via feasible creatives
        p.observe(&Creative(vec![0, 1]), true);
        p.observe(&Creative(vec![1, 0]), true);
        p.observe(&Creative(vec![1, 1]), false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let c = p.select(&mut rng);
            assert!(g.is_feasible(&c).unwrap(), "fell back to a feasible creative");
        }
    }
}
