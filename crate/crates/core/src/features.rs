//! Mapping between creatives and sparse feature vectors.
//!
//! Coordinate 0 is an always-1 bias. Elements occupy `1..1+|V|` in
//! `(ingredient, element)` order; present edges occupy the remaining
//! coordinates grouped by child ingredient, parent-element-major. Forbidden
//! pairs get no coordinate, so the total dimension is
//! `K = 1 + |V| + |present edges|` and a feasible creative featurizes to
//! exactly `1 + N + (N - 1)` ones.

use crate::error::{Error, Result};
use crate::graph::{Creative, EdgeBlock, IngredientTree};
use crate::model::WeightVector;

const ABSENT: usize = usize::MAX;

/// Stable bijection between (bias, elements, present edges) and `0..K`.
/// Immutable once built; shared freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureIndexer {
    element_counts: Vec<usize>,
    parent: Vec<Option<usize>>,
    vertex_offset: Vec<usize>,
    n_vertices: usize,
    /// Per child ingredient: parent-major coordinate table, `ABSENT` where
    /// the pair is forbidden. Empty for the root.
    edge_coords: Vec<Vec<usize>>,
    dim: usize,
}

impl FeatureIndexer {
    pub(crate) fn build(tree: &IngredientTree, blocks: &[Option<EdgeBlock>]) -> Self {
        let n = tree.len();
        let element_counts = tree.element_counts();
        let parent: Vec<Option<usize>> = (0..n).map(|i| tree.parent(i)).collect();

        let mut vertex_offset = vec![0; n];
        let mut acc = 0;
        for i in 0..n {
            vertex_offset[i] = acc;
            acc += element_counts[i];
        }
        let n_vertices = acc;

        let mut next = 1 + n_vertices;
        let mut edge_coords = vec![Vec::new(); n];
        for (c, block) in blocks.iter().enumerate() {
            let Some(block) = block else { continue };
            let mut table = vec![ABSENT; block.present.len()];
            for (idx, &present) in block.present.iter().enumerate() {
                if present {
                    table[idx] = next;
                    next += 1;
                }
            }
            edge_coords[c] = table;
        }

        Self {
            element_counts,
            parent,
            vertex_offset,
            n_vertices,
            edge_coords,
            dim: next,
        }
    }

    /// Total feature dimension `K`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_ingredients(&self) -> usize {
        self.element_counts.len()
    }

    pub fn element_counts(&self) -> &[usize] {
        &self.element_counts
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.dim - 1 - self.n_vertices
    }

    /// Coordinate of element `e` of ingredient `i`.
    #[inline]
    pub fn vertex_coord(&self, ingredient: usize, element: usize) -> usize {
        1 + self.vertex_offset[ingredient] + element
    }

    /// Coordinate of the `(parent element, child element)` pair on the tree
    /// edge into `child`, or `None` if the pair is forbidden.
    #[inline]
    pub fn edge_coord(&self, child: usize, parent_element: usize, child_element: usize) -> Option<usize> {
        let coord =
            self.edge_coords[child][parent_element * self.element_counts[child] + child_element];
        (coord != ABSENT).then_some(coord)
    }

    /// Tree edges as `(parent, child)` pairs, ordered by child id.
    pub fn tree_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(c, p)| p.map(|p| (p, c)))
    }

    /// Coordinate range holding all element features.
    pub fn vertex_range(&self) -> std::ops::Range<usize> {
        1..1 + self.n_vertices
    }

    /// Coordinate range holding all present-edge features.
    pub fn edge_range(&self) -> std::ops::Range<usize> {
        1 + self.n_vertices..self.dim
    }

    /// Sparse feature vector of a feasible creative: the bias coordinate,
    /// one coordinate per chosen element, one per chosen tree-edge pair.
    pub fn featurize(&self, creative: &Creative) -> Result<SparseFeatures> {
        let n = self.element_counts.len();
        if creative.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: creative.len(),
            });
        }
        let mut coords = Vec::with_capacity(2 * n);
        coords.push(0);
        for i in 0..n {
            let e = creative.element(i);
            if e >= self.element_counts[i] {
                return Err(Error::ElementOutOfRange {
                    ingredient: i,
                    count: self.element_counts[i],
                    index: e,
                });
            }
            coords.push(self.vertex_coord(i, e));
        }
        for c in 0..n {
            if let Some(p) = self.parent[c] {
                match self.edge_coord(c, creative.element(p), creative.element(c)) {
                    Some(coord) => coords.push(coord),
                    None => {
                        return Err(Error::InfeasibleCreative(format!(
                            "creative {creative} uses forbidden pair ({p}:{}, {c}:{})",
                            creative.element(p),
                            creative.element(c)
                        )))
                    }
                }
            }
        }
        Ok(SparseFeatures { coords })
    }
}

/// Binary sparse feature vector: the set of coordinates equal to 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SparseFeatures {
    coords: Vec<usize>,
}

impl SparseFeatures {
    pub fn from_coords(coords: Vec<usize>) -> Self {
        Self { coords }
    }

    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    pub fn nnz(&self) -> usize {
        self.coords.len()
    }

    /// Dot product with a dense weight vector.
    pub fn dot(&self, weights: &WeightVector) -> f64 {
        let w = weights.as_slice();
        self.coords.iter().map(|&i| w[i]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{
        default_structure_tree, preset_graph, random_element_graph, Creative, ElementGraph,
        ForbiddenPair, IngredientTree, RandomGraphParams, DEFAULT_COUNTS,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dimension_counts_bias_vertices_and_present_edges() {
        let g = preset_graph(200).unwrap();
        let ix = g.indexer();
        assert_eq!(ix.n_vertices(), 17);
        assert_eq!(ix.n_edges(), 45);
        assert_eq!(ix.dim(), 1 + 17 + 45);
    }

    #[test]
    fn five_ingredient_creative_has_ten_nonzeros() {
        let g = ElementGraph::structure_only(default_structure_tree(DEFAULT_COUNTS), &[]).unwrap();
        let c = g.enumerate_creatives().next().unwrap();
        let x = g.indexer().featurize(&c).unwrap();
        assert_eq!(x.nnz(), 10); // 1 + 5 + 4
        assert_eq!(x.coords()[0], 0);
    }

    #[test]
    fn single_ingredient_creative_has_two_nonzeros() {
        let t = IngredientTree::new(vec![("only".into(), 3)], vec![None]).unwrap();
        let g = ElementGraph::structure_only(t, &[]).unwrap();
        let x = g.indexer().featurize(&Creative(vec![1])).unwrap();
        assert_eq!(x.nnz(), 2);
    }

    #[test]
    fn forbidden_pair_has_no_coordinate_and_featurize_errors() {
        let t = IngredientTree::new(
            vec![("a".into(), 2), ("b".into(), 2)],
            vec![None, Some(0)],
        )
        .unwrap();
        let g = ElementGraph::structure_only(
            t,
            &[ForbiddenPair {
                ingredient_a: 0,
                element_a: 0,
                ingredient_b: 1,
                element_b: 0,
            }],
        )
        .unwrap();
        let ix = g.indexer();
        assert_eq!(ix.edge_coord(1, 0, 0), None);
        assert_eq!(ix.n_edges(), 3);
        let err = ix.featurize(&Creative(vec![0, 0])).unwrap_err();
        assert!(matches!(err, crate::error::Error::InfeasibleCreative(_)));
    }

    #[test]
    fn coordinates_are_a_bijection() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let g = random_element_graph(&mut rng, RandomGraphParams::default());
            let ix = g.indexer();
            let mut seen = vec![false; ix.dim()];
            seen[0] = true;
            for i in 0..ix.n_ingredients() {
                for e in 0..ix.element_counts()[i] {
                    let c = ix.vertex_coord(i, e);
                    assert!(!seen[c]);
                    seen[c] = true;
                }
            }
            for (p, child) in g.tree().edges() {
                for pe in 0..g.tree().element_count(p) {
                    for ce in 0..g.tree().element_count(child) {
                        if let Some(c) = ix.edge_coord(child, pe, ce) {
                            assert!(!seen[c]);
                            seen[c] = true;
                        }
                    }
                }
            }
            assert!(seen.iter().all(|&s| s), "every coordinate assigned exactly once");
        }
    }

    #[test]
    fn featurize_is_injective_on_feasible_creatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let g = random_element_graph(&mut rng, RandomGraphParams::default());
            let ix = g.indexer();
            let mut supports = std::collections::HashSet::new();
            for c in g.enumerate_creatives() {
                let x = ix.featurize(&c).unwrap();
                assert!(supports.insert(x.coords().to_vec()));
            }
        }
    }
}
