//! Exact maximization over all feasible creatives.
//!
//! One bottom-up pass over the element graph computes, for every element,
//! the best achievable score of the subtree rooted there; back-pointers
//! recorded along the way recover the maximizing creative in a top-down
//! walk. Total work is linear in vertices plus present edges, independent
//! of the (multiplicative) number of creatives. A brute-force enumerator
//! with the same tie rule serves as the oracle.

use crate::error::{Error, Result};
use crate::graph::{Creative, ElementGraph};
use crate::model::{expected_reward, WeightVector};

const EXCLUDED: f64 = f64::NEG_INFINITY;

/// Result of one maximization, with the instrumented operation count
/// (vertex initializations plus present-edge relaxations for the DP;
/// scoring terms for brute force).
#[derive(Debug, Clone)]
pub struct Argmax {
    pub creative: Creative,
    pub value: f64,
    pub ops: u64,
}

/// Reusable scratch space for repeated maximizations. Holding one solver
/// per run avoids reallocating the per-element tables on every call; the
/// result is a pure function of `(graph, weights)` regardless.
#[derive(Debug, Default)]
pub struct DpSolver {
    /// Subtree maxima per ingredient per element.
    score: Vec<Vec<f64>>,
    /// Maximizing child element per ingredient per (element, child slot).
    back: Vec<Vec<u32>>,
    choice: Vec<usize>,
    stack: Vec<usize>,
}

impl DpSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Best feasible creative and its score under `weights`.
    ///
    /// Ties are broken toward the lowest element index at every decision.
    /// The returned value is re-derived from the recovered creative via
    /// [`expected_reward`], so it matches the estimator bit for bit.
    pub fn argmax(&mut self, graph: &ElementGraph, weights: &WeightVector) -> Result<Argmax> {
        let tree = graph.tree();
        let indexer = graph.indexer();
        let n = tree.len();
        let w = weights.as_slice();
        if w.len() != indexer.dim() {
            return Err(Error::DimensionMismatch {
                expected: indexer.dim(),
                got: w.len(),
            });
        }

        self.score.resize(n, Vec::new());
        self.back.resize(n, Vec::new());
        let mut ops = 0u64;

        for &i in tree.postorder() {
            let count = tree.element_count(i);
            let children = tree.children(i);
            let score_i = &mut self.score[i];
            score_i.clear();
            for e in 0..count {
                score_i.push(w[indexer.vertex_coord(i, e)]);
            }
            ops += count as u64;
            self.back[i].clear();
            self.back[i].resize(count * children.len(), u32::MAX);

            for (slot, &m) in children.iter().enumerate() {
                for j in 0..count {
                    if self.score[i][j] == EXCLUDED {
                        continue;
                    }
                    let mut best = EXCLUDED;
                    let mut best_t = u32::MAX;
                    for &(t, coord) in graph.allowed_pairs(m, j) {
                        ops += 1;
                        let down = self.score[m][t as usize];
                        if down == EXCLUDED {
                            continue;
                        }
                        let v = w[coord as usize] + down;
                        if v > best {
                            best = v;
                            best_t = t;
                        }
                    }
                    if best_t == u32::MAX {
                        self.score[i][j] = EXCLUDED;
                    } else {
                        self.score[i][j] += best;
                        self.back[i][j * children.len() + slot] = best_t;
                    }
                }
            }
        }

        let root = tree.root();
        let mut best_root = usize::MAX;
        let mut best_val = EXCLUDED;
        for (j, &v) in self.score[root].iter().enumerate() {
            if v > best_val {
                best_val = v;
                best_root = j;
            }
        }
        if best_root == usize::MAX {
            return Err(Error::NoFeasibleCreative);
        }

        self.choice.clear();
        self.choice.resize(n, 0);
        self.stack.clear();
        self.stack.push(root);
        self.choice[root] = best_root;
        while let Some(i) = self.stack.pop() {
            let children = tree.children(i);
            let j = self.choice[i];
            for (slot, &m) in children.iter().enumerate() {
                let t = self.back[i][j * children.len() + slot];
                debug_assert_ne!(t, u32::MAX);
                self.choice[m] = t as usize;
                self.stack.push(m);
            }
        }
        let creative = Creative(self.choice.clone());
        let value = expected_reward(weights, indexer, &creative)?;
        Ok(Argmax {
            creative,
            value,
            ops,
        })
    }
}

/// Maximum of `bias + sum w_j + sum w_{i,j}` over all feasible creatives.
pub fn dp_max_value(graph: &ElementGraph, weights: &WeightVector) -> Result<f64> {
    Ok(DpSolver::new().argmax(graph, weights)?.value)
}

/// Maximizing feasible creative and its value.
pub fn dp_argmax(graph: &ElementGraph, weights: &WeightVector) -> Result<(Creative, f64)> {
    let out = DpSolver::new().argmax(graph, weights)?;
    Ok((out.creative, out.value))
}

/// Exhaustive maximization; lexicographically first creative among maxima.
/// Intended as an oracle for modest creative counts.
pub fn brute_force_argmax(
    graph: &ElementGraph,
    weights: &WeightVector,
) -> Result<(Creative, f64)> {
    let out = brute_force_argmax_counted(graph, weights)?;
    Ok((out.creative, out.value))
}

pub fn brute_force_argmax_counted(
    graph: &ElementGraph,
    weights: &WeightVector,
) -> Result<Argmax> {
    let indexer = graph.indexer();
    let terms = 2 * graph.tree().len() as u64;
    let mut best: Option<(Creative, f64)> = None;
    let mut ops = 0u64;
    for c in graph.enumerate_creatives() {
        let v = expected_reward(weights, indexer, &c)?;
        ops += terms;
        match &best {
            Some((_, bv)) if *bv >= v => {}
            _ => best = Some((c, v)),
        }
    }
    let (creative, value) = best.ok_or(Error::NoFeasibleCreative)?;
    Ok(Argmax {
        creative,
        value,
        ops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ElementGraph, ForbiddenPair, IngredientTree};

    fn chain_graph(counts: &[usize], constraints: &[ForbiddenPair]) -> ElementGraph {
        let ingredients = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (format!("g{i}"), c))
            .collect();
        let parent = (0..counts.len())
            .map(|i| if i == 0 { None } else { Some(i - 1) })
            .collect();
        let tree = IngredientTree::new(ingredients, parent).unwrap();
        ElementGraph::structure_only(tree, constraints).unwrap()
    }

    #[test]
    fn single_ingredient_picks_best_vertex() {
        let g = chain_graph(&[3], &[]);
        let mut w = WeightVector::zeros(g.indexer().dim());
        w.set(g.indexer().vertex_coord(0, 0), 0.1);
        w.set(g.indexer().vertex_coord(0, 1), 0.3);
        w.set(g.indexer().vertex_coord(0, 2), 0.2);
        let (c, v) = dp_argmax(&g, &w).unwrap();
        assert_eq!(c, Creative(vec![1]));
        assert_eq!(v, 0.3);
        assert_eq!(dp_max_value(&g, &w).unwrap(), 0.3);
    }

    #[test]
    fn two_ingredient_chain_sums_all_terms() {
        let g = chain_graph(&[1, 1], &[]);
        let ix = g.indexer();
        let mut w = WeightVector::zeros(ix.dim());
        w.set(0, 0.1);
        w.set(ix.vertex_coord(0, 0), 0.2);
        w.set(ix.vertex_coord(1, 0), 0.3);
        w.set(ix.edge_coord(1, 0, 0).unwrap(), 0.05);
        let (c, v) = dp_argmax(&g, &w).unwrap();
        assert_eq!(c, Creative(vec![0, 0]));
        assert!((v - 0.65).abs() < 1e-15);
    }

    #[test]
    fn ties_break_to_lowest_element_index() {
        let g = chain_graph(&[2], &[]);
        let w = WeightVector::zeros(g.indexer().dim());
        let (c, _) = dp_argmax(&g, &w).unwrap();
        assert_eq!(c, Creative(vec![0]));
    }

    #[test]
    fn excluded_elements_propagate_and_empty_graph_errors() {
        // chain a-b-c where a0-b0 and b1-c0 are the only present pairs:
        // b0 has no edge to c, b1 has no edge from a -> no feasible creative
        let g = chain_graph(
            &[1, 2, 1],
            &[
                ForbiddenPair {
                    ingredient_a: 0,
                    element_a: 0,
                    ingredient_b: 1,
                    element_b: 1,
                },
                ForbiddenPair {
                    ingredient_a: 1,
                    element_a: 0,
                    ingredient_b: 2,
                    element_b: 0,
                },
            ],
        );
        let w = WeightVector::zeros(g.indexer().dim());
        assert!(matches!(
            dp_argmax(&g, &w).unwrap_err(),
            Error::NoFeasibleCreative
        ));
        assert!(matches!(
            brute_force_argmax(&g, &w).unwrap_err(),
            Error::NoFeasibleCreative
        ));
    }

    #[test]
    fn one_creative_graph_returns_it() {
        let g = chain_graph(&[1, 1, 1], &[]);
        let w = WeightVector::zeros(g.indexer().dim());
        let (c, _) = brute_force_argmax(&g, &w).unwrap();
        assert_eq!(c, Creative(vec![0, 0, 0]));
        assert_eq!(dp_argmax(&g, &w).unwrap().0, c);
    }

    #[test]
    fn dp_never_uses_forbidden_edges() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let g = crate::graph::random_element_graph(
                &mut rng,
                crate::graph::RandomGraphParams {
                    max_ingredients: 5,
                    max_elements: 4,
                    forbid_prob: 0.25,
                },
            );
            let w = WeightVector::standard_normal(g.indexer().dim(), &mut rng);
            let (c, _) = dp_argmax(&g, &w).unwrap();
            assert!(g.is_feasible(&c).unwrap());
        }
    }

    #[test]
    fn dp_ops_scale_with_vertices_plus_edges() {
        let small = chain_graph(&[2, 2, 2], &[]);
        let big = chain_graph(&[4, 4, 4], &[]);
        let mut solver = DpSolver::new();
        let ops_small = solver
            .argmax(&small, &WeightVector::zeros(small.indexer().dim()))
            .unwrap()
            .ops;
        let ops_big = solver
            .argmax(&big, &WeightVector::zeros(big.indexer().dim()))
            .unwrap()
            .ops;
        assert_eq!(ops_small, (6 + 8) as u64);
        assert_eq!(ops_big, (12 + 32) as u64);
        // doubling element counts quadruples edge work but creative count grows 8x
        assert!(ops_big <= 4 * ops_small);
    }
}
