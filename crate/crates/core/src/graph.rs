//! Ingredient trees, element graphs, and feasible creatives.
//!
//! An ad creative is composited by picking one element per ingredient
//! (template, text font, picture size, ...). Ingredients form a rooted tree;
//! pairwise interactions are modeled only between elements of tree-adjacent
//! ingredients. Visual constraints are absent edges in the element graph:
//! a creative is feasible iff every tree-edge-induced element pair is present.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::FeatureIndexer;
use crate::model::WeightVector;

/// One category of interchangeable creative components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ingredient {
    pub id: usize,
    pub name: String,
    pub element_count: usize,
}

/// Rooted tree over ingredients. Ids are contiguous `0..n` and double as
/// indices everywhere; the root has no parent.
#[derive(Debug, Clone, PartialEq)]
pub struct IngredientTree {
    ingredients: Vec<Ingredient>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
    /// Children before parents; iteration schedule for bottom-up passes.
    postorder: Vec<usize>,
}

impl IngredientTree {
    /// Build and validate a tree from `(name, element_count)` pairs and a
    /// parent map (`parent[i] == None` exactly for the root).
    pub fn new(ingredients: Vec<(String, usize)>, parent: Vec<Option<usize>>) -> Result<Self> {
        let n = ingredients.len();
        if n == 0 {
            return Err(Error::InvalidTree("tree has no ingredients".into()));
        }
        if parent.len() != n {
            return Err(Error::InvalidTree(format!(
                "parent map has {} entries for {} ingredients",
                parent.len(),
                n
            )));
        }
        let mut seen = std::collections::HashSet::new();
        let ingredients: Vec<Ingredient> = ingredients
            .into_iter()
            .enumerate()
            .map(|(id, (name, element_count))| {
                if element_count == 0 {
                    return Err(Error::InvalidTree(format!(
                        "ingredient `{name}` has zero elements"
                    )));
                }
                if !seen.insert(name.clone()) {
                    return Err(Error::InvalidTree(format!(
                        "duplicate ingredient name `{name}`"
                    )));
                }
                Ok(Ingredient {
                    id,
                    name,
                    element_count,
                })
            })
            .collect::<Result<_>>()?;

        let roots: Vec<usize> = (0..n).filter(|&i| parent[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::InvalidTree(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        let root = roots[0];
        let mut children = vec![Vec::new(); n];
        for i in 0..n {
            if let Some(p) = parent[i] {
                if p >= n {
                    return Err(Error::InvalidTree(format!(
                        "parent {p} of ingredient {i} out of range"
                    )));
                }
                if p == i {
                    return Err(Error::InvalidTree(format!("ingredient {i} is its own parent")));
                }
                children[p].push(i);
            }
        }
        // children processed in ingredient-id order
        for c in &mut children {
            c.sort_unstable();
        }

        // reachability from the root rules out cycles and disconnected parts;
        // the reversed preorder doubles as a postorder schedule
        let mut reached = vec![false; n];
        let mut preorder = Vec::with_capacity(n);
        let mut stack = vec![root];
        reached[root] = true;
        while let Some(i) = stack.pop() {
            preorder.push(i);
            for &c in &children[i] {
                if reached[c] {
                    return Err(Error::InvalidTree(format!("cycle through ingredient {c}")));
                }
                reached[c] = true;
                stack.push(c);
            }
        }
        if reached.iter().any(|r| !r) {
            return Err(Error::InvalidTree(
                "not all ingredients reachable from the root".into(),
            ));
        }
        preorder.reverse();

        Ok(Self {
            ingredients,
            parent,
            children,
            root,
            postorder: preorder,
        })
    }

    /// Ingredients ordered so every child precedes its parent.
    pub fn postorder(&self) -> &[usize] {
        &self.postorder
    }

    pub fn len(&self) -> usize {
        self.ingredients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ingredients.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn ingredient(&self, i: usize) -> &Ingredient {
        &self.ingredients[i]
    }

    pub fn ingredients(&self) -> &[Ingredient] {
        &self.ingredients
    }

    pub fn element_count(&self, i: usize) -> usize {
        self.ingredients[i].element_count
    }

    pub fn element_counts(&self) -> Vec<usize> {
        self.ingredients.iter().map(|g| g.element_count).collect()
    }

    /// Tree edges as `(parent, child)` pairs, ordered by child id.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).filter_map(|c| self.parent[c].map(|p| (p, c)))
    }

    pub fn ingredient_by_name(&self, name: &str) -> Option<usize> {
        self.ingredients.iter().position(|g| g.name == name)
    }
}

/// A composited ad creative: one element index per ingredient.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Creative(pub Vec<usize>);

impl Creative {
    pub fn element(&self, ingredient: usize) -> usize {
        self.0[ingredient]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Mixed-radix rank within the full (unconstrained) choice space,
    /// consistent with lexicographic enumeration order.
    pub fn rank(&self, counts: &[usize]) -> usize {
        let mut r = 0;
        for (i, &e) in self.0.iter().enumerate() {
            r = r * counts[i] + e;
        }
        r
    }
}

impl std::fmt::Display for Creative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// A forbidden element pair between two tree-adjacent ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForbiddenPair {
    pub ingredient_a: usize,
    pub element_a: usize,
    pub ingredient_b: usize,
    pub element_b: usize,
}

/// Interaction weights and presence mask between one parent/child ingredient
/// pair. Row-major over `(parent_element, child_element)`.
#[derive(Debug, Clone)]
pub(crate) struct EdgeBlock {
    pub parent: usize,
    pub child: usize,
    pub weights: Vec<f64>,
    pub present: Vec<bool>,
}

impl EdgeBlock {
    #[inline]
    pub fn idx(&self, pe: usize, ce: usize, child_count: usize) -> usize {
        pe * child_count + ce
    }
}

/// Weighted graph over all elements, with edges only between elements of
/// tree-adjacent ingredients (each such block is bipartite by construction).
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct ElementGraph {
    tree: IngredientTree,
    bias: f64,
    vertex_weights: Vec<Vec<f64>>,
    /// Indexed by child ingredient id; `None` for the root.
    edge_blocks: Vec<Option<EdgeBlock>>,
    indexer: FeatureIndexer,
    /// Per child ingredient, per parent element: the present child elements
    /// with their feature coordinates. Lets bottom-up passes touch each
    /// present edge exactly once.
    allowed: Vec<Vec<Vec<(u32, u32)>>>,
}

impl ElementGraph {
    /// Build an element graph from per-element vertex weights, per-tree-edge
    /// weight matrices (keyed by `(parent, child)`, row-major parent x child)
    /// and a list of forbidden element pairs.
    ///
    /// Rejects forbidden pairs across non-adjacent ingredients and any
    /// tree-adjacent pair left without a single present edge.
    pub fn new(
        tree: IngredientTree,
        bias: f64,
        vertex_weights: Vec<Vec<f64>>,
        edge_weights: Vec<((usize, usize), Vec<f64>)>,
        constraints: &[ForbiddenPair],
    ) -> Result<Self> {
        let n = tree.len();
        if vertex_weights.len() != n {
            return Err(Error::InvalidGraph(format!(
                "vertex weights given for {} ingredients, tree has {n}",
                vertex_weights.len()
            )));
        }
        for (i, w) in vertex_weights.iter().enumerate() {
            if w.len() != tree.element_count(i) {
                return Err(Error::InvalidGraph(format!(
                    "ingredient {i} has {} elements but {} vertex weights",
                    tree.element_count(i),
                    w.len()
                )));
            }
        }

        let mut edge_blocks: Vec<Option<EdgeBlock>> = vec![None; n];
        for ((a, b), weights) in edge_weights {
            let (p, c) = if tree.parent(b) == Some(a) {
                (a, b)
            } else if tree.parent(a) == Some(b) {
                (b, a)
            } else {
                return Err(Error::InvalidGraph(format!(
                    "edge weights given for non-adjacent ingredients {a} and {b}"
                )));
            };
            let expect = tree.element_count(p) * tree.element_count(c);
            if weights.len() != expect {
                return Err(Error::InvalidGraph(format!(
                    "edge block ({p},{c}) has {} weights, expected {expect}",
                    weights.len()
                )));
            }
            if edge_blocks[c].is_some() {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge block for ingredients ({p},{c})"
                )));
            }
            let present = vec![true; expect];
            edge_blocks[c] = Some(EdgeBlock {
                parent: p,
                child: c,
                weights,
                present,
            });
        }
        for (p, c) in tree.edges() {
            if edge_blocks[c].is_none() {
                return Err(Error::InvalidGraph(format!(
                    "missing edge weights for tree edge ({p},{c})"
                )));
            }
        }

        for fp in constraints {
            let (p, pe, c, ce) = if tree.parent(fp.ingredient_b) == Some(fp.ingredient_a) {
                (fp.ingredient_a, fp.element_a, fp.ingredient_b, fp.element_b)
            } else if tree.parent(fp.ingredient_a) == Some(fp.ingredient_b) {
                (fp.ingredient_b, fp.element_b, fp.ingredient_a, fp.element_a)
            } else {
                return Err(Error::InvalidGraph(format!(
                    "constraint between non-adjacent ingredients {} and {}",
                    fp.ingredient_a, fp.ingredient_b
                )));
            };
            if pe >= tree.element_count(p) {
                return Err(Error::ElementOutOfRange {
                    ingredient: p,
                    count: tree.element_count(p),
                    index: pe,
                });
            }
            if ce >= tree.element_count(c) {
                return Err(Error::ElementOutOfRange {
                    ingredient: c,
                    count: tree.element_count(c),
                    index: ce,
                });
            }
            let cc = tree.element_count(c);
            let block = edge_blocks[c].as_mut().expect("edge block present");
            let idx = block.idx(pe, ce, cc);
            block.present[idx] = false;
        }

        for (p, c) in tree.edges() {
            let block = edge_blocks[c].as_ref().expect("edge block present");
            if !block.present.iter().any(|&x| x) {
                return Err(Error::InvalidGraph(format!(
                    "no feasible creative: every element pair between ingredients {p} and {c} is forbidden"
                )));
            }
        }

        let indexer = FeatureIndexer::build(&tree, &edge_blocks);
        let mut allowed = vec![Vec::new(); n];
        for block in edge_blocks.iter().flatten() {
            let cc = tree.element_count(block.child);
            let pc = tree.element_count(block.parent);
            let mut per_parent = Vec::with_capacity(pc);
            for pe in 0..pc {
                let mut list = Vec::new();
                for ce in 0..cc {
                    if block.present[block.idx(pe, ce, cc)] {
                        let coord = indexer
                            .edge_coord(block.child, pe, ce)
                            .expect("present edge has a coordinate");
                        list.push((ce as u32, coord as u32));
                    }
                }
                per_parent.push(list);
            }
            allowed[block.child] = per_parent;
        }
        Ok(Self {
            tree,
            bias,
            vertex_weights,
            edge_blocks,
            indexer,
            allowed,
        })
    }

    /// Convenience constructor with all-zero weights (structure only).
    pub fn structure_only(tree: IngredientTree, constraints: &[ForbiddenPair]) -> Result<Self> {
        let vertex_weights = (0..tree.len())
            .map(|i| vec![0.0; tree.element_count(i)])
            .collect();
        let edge_weights = tree
            .edges()
            .map(|(p, c)| {
                (
                    (p, c),
                    vec![0.0; tree.element_count(p) * tree.element_count(c)],
                )
            })
            .collect();
        Self::new(tree, 0.0, vertex_weights, edge_weights, constraints)
    }

    pub fn tree(&self) -> &IngredientTree {
        &self.tree
    }

    pub fn indexer(&self) -> &FeatureIndexer {
        &self.indexer
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn vertex_weight(&self, ingredient: usize, element: usize) -> f64 {
        self.vertex_weights[ingredient][element]
    }

    /// Number of element-graph vertices (sum of element counts).
    pub fn n_vertices(&self) -> usize {
        self.tree.ingredients().iter().map(|g| g.element_count).sum()
    }

    /// Number of present element-graph edges.
    pub fn n_edges(&self) -> usize {
        self.edge_blocks
            .iter()
            .flatten()
            .map(|b| b.present.iter().filter(|&&x| x).count())
            .sum()
    }

    /// Present `(child element, coordinate)` pairs for one parent element on
    /// the tree edge into `child`.
    pub(crate) fn allowed_pairs(&self, child: usize, parent_element: usize) -> &[(u32, u32)] {
        &self.allowed[child][parent_element]
    }

    /// Whether the element pair between two tree-adjacent ingredients is present.
    pub fn edge_present(&self, a: usize, ea: usize, b: usize, eb: usize) -> bool {
        let (c, pe, ce) = if self.tree.parent(b) == Some(a) {
            (b, ea, eb)
        } else if self.tree.parent(a) == Some(b) {
            (a, eb, ea)
        } else {
            return false;
        };
        let block = self.edge_blocks[c].as_ref().expect("edge block present");
        block.present[block.idx(pe, ce, self.tree.element_count(c))]
    }

    pub fn edge_weight(&self, a: usize, ea: usize, b: usize, eb: usize) -> f64 {
        let (c, pe, ce) = if self.tree.parent(b) == Some(a) {
            (b, ea, eb)
        } else {
            (a, eb, ea)
        };
        let block = self.edge_blocks[c].as_ref().expect("edge block present");
        block.weights[block.idx(pe, ce, self.tree.element_count(c))]
    }

    /// True iff every tree-edge-induced element pair of `creative` is present.
    pub fn is_feasible(&self, creative: &Creative) -> Result<bool> {
        let n = self.tree.len();
        if creative.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: creative.len(),
            });
        }
        for i in 0..n {
            let count = self.tree.element_count(i);
            if creative.element(i) >= count {
                return Err(Error::ElementOutOfRange {
                    ingredient: i,
                    count,
                    index: creative.element(i),
                });
            }
        }
        for (p, c) in self.tree.edges() {
            let block = self.edge_blocks[c].as_ref().expect("edge block present");
            let idx = block.idx(
                creative.element(p),
                creative.element(c),
                self.tree.element_count(c),
            );
            if !block.present[idx] {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Iterate every feasible creative exactly once, in lexicographic order
    /// of the choice array.
    pub fn enumerate_creatives(&self) -> CreativeIter<'_> {
        CreativeIter::new(self)
    }

    /// Pack the graph's own weights (bias, vertex, present-edge) into a
    /// weight vector aligned with the feature indexer.
    pub fn packed_weights(&self) -> WeightVector {
        let mut w = vec![0.0; self.indexer.dim()];
        w[0] = self.bias;
        for i in 0..self.tree.len() {
            for e in 0..self.tree.element_count(i) {
                w[self.indexer.vertex_coord(i, e)] = self.vertex_weights[i][e];
            }
        }
        for block in self.edge_blocks.iter().flatten() {
            let cc = self.tree.element_count(block.child);
            for pe in 0..self.tree.element_count(block.parent) {
                for ce in 0..cc {
                    let idx = block.idx(pe, ce, cc);
                    if block.present[idx] {
                        let coord = self
                            .indexer
                            .edge_coord(block.child, pe, ce)
                            .expect("present edge has a coordinate");
                        w[coord] = block.weights[idx];
                    }
                }
            }
        }
        WeightVector::from_vec(w)
    }
}

/// Depth-first enumeration over ingredient ids `0..n`, pruning on every
/// constraint between the current ingredient and already-assigned adjacent
/// ingredients. Yields choice arrays in lexicographic order.
pub struct CreativeIter<'a> {
    graph: &'a ElementGraph,
    /// `(adjacent earlier ingredient, edge oriented as (child, is_current_child))`
    /// for each depth: pairs to check when assigning that ingredient.
    checks: Vec<Vec<usize>>,
    choice: Vec<usize>,
    depth: usize,
    done: bool,
    started: bool,
}

impl<'a> CreativeIter<'a> {
    fn new(graph: &'a ElementGraph) -> Self {
        let n = graph.tree.len();
        // adjacency restricted to already-assigned (lower-id) ingredients
        let mut checks = vec![Vec::new(); n];
        for (p, c) in graph.tree.edges() {
            let (lo, hi) = if p < c { (p, c) } else { (c, p) };
            checks[hi].push(lo);
        }
        Self {
            graph,
            checks,
            choice: vec![0; n],
            depth: 0,
            done: n == 0,
            started: false,
        }
    }

    fn compatible(&self, depth: usize, element: usize) -> bool {
        for &other in &self.checks[depth] {
            if !self
                .graph
                .edge_present(depth, element, other, self.choice[other])
            {
                return false;
            }
        }
        true
    }
}

impl Iterator for CreativeIter<'_> {
    type Item = Creative;

    fn next(&mut self) -> Option<Creative> {
        if self.done {
            return None;
        }
        let n = self.graph.tree.len();
        // resume: after a yield, advance the deepest position
        if self.started {
            self.depth = n - 1;
            self.choice[self.depth] += 1;
        } else {
            self.started = true;
        }
        loop {
            if self.choice[self.depth] >= self.graph.tree.element_count(self.depth) {
                // backtrack
                if self.depth == 0 {
                    self.done = true;
                    return None;
                }
                self.choice[self.depth] = 0;
                self.depth -= 1;
                self.choice[self.depth] += 1;
                continue;
            }
            if !self.compatible(self.depth, self.choice[self.depth]) {
                self.choice[self.depth] += 1;
                continue;
            }
            if self.depth == n - 1 {
                return Some(Creative(self.choice.clone()));
            }
            self.depth += 1;
        }
    }
}

/// Materialized list of all feasible creatives with O(1) lookup from a
/// creative back to its enumeration index. Backed by a dense mixed-radix
/// table, so it is meant for desk-scale graphs (the enumeration-based
/// policies and environments that need it are already creative-linear).
#[derive(Debug, Clone)]
pub struct CreativeIndex {
    creatives: Vec<Creative>,
    counts: Vec<usize>,
    rank_to_idx: Vec<u32>,
}

const MAX_DENSE_RANKS: usize = 1 << 26;

impl CreativeIndex {
    pub fn build(graph: &ElementGraph) -> Result<Self> {
        let counts = graph.tree().element_counts();
        let total = counts
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .filter(|&t| t <= MAX_DENSE_RANKS)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "choice space too large to enumerate (> {MAX_DENSE_RANKS})"
                ))
            })?;
        let mut rank_to_idx = vec![u32::MAX; total];
        let creatives: Vec<Creative> = graph.enumerate_creatives().collect();
        if creatives.is_empty() {
            return Err(Error::NoFeasibleCreative);
        }
        for (i, c) in creatives.iter().enumerate() {
            rank_to_idx[c.rank(&counts)] = i as u32;
        }
        Ok(Self {
            creatives,
            counts,
            rank_to_idx,
        })
    }

    pub fn len(&self) -> usize {
        self.creatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.creatives.is_empty()
    }

    pub fn get(&self, i: usize) -> &Creative {
        &self.creatives[i]
    }

    pub fn creatives(&self) -> &[Creative] {
        &self.creatives
    }

    /// Enumeration index of a feasible creative; `None` for infeasible or
    /// out-of-range choice arrays.
    pub fn index_of(&self, c: &Creative) -> Option<usize> {
        if c.len() != self.counts.len()
            || c.0.iter().zip(&self.counts).any(|(&e, &l)| e >= l)
        {
            return None;
        }
        let idx = self.rank_to_idx[c.rank(&self.counts)];
        (idx != u32::MAX).then_some(idx as usize)
    }
}

/// The five-ingredient tree used throughout: template at the root, one
/// picture branch (background -> size) and one text branch (font -> color).
pub fn default_structure_tree(counts: [usize; 5]) -> IngredientTree {
    let names = [
        "template",
        "picture_background",
        "picture_size",
        "text_font",
        "text_color",
    ];
    let ingredients = names
        .iter()
        .zip(counts)
        .map(|(n, c)| (n.to_string(), c))
        .collect();
    let parent = vec![None, Some(0), Some(1), Some(0), Some(3)];
    IngredientTree::new(ingredients, parent).expect("default structure is a valid tree")
}

/// Element counts for the default tree yielding 200 creatives.
pub const DEFAULT_COUNTS: [usize; 5] = [2, 5, 4, 5, 1];

/// Preset factorizations of the default tree for a given creative count.
/// Used to scale the search space while keeping the graph structure fixed.
pub fn preset_counts(n_creatives: usize) -> Option<[usize; 5]> {
    match n_creatives {
        32 => Some([2, 2, 2, 4, 1]),
        96 => Some([2, 3, 4, 4, 1]),
        200 => Some(DEFAULT_COUNTS),
        512 => Some([2, 8, 4, 8, 1]),
        1200 => Some([3, 8, 5, 10, 1]),
        5000 => Some([4, 10, 5, 25, 1]),
        20000 => Some([4, 20, 10, 25, 1]),
        _ => None,
    }
}

/// Unconstrained default-structure graph with zero weights, sized by a
/// preset creative count.
pub fn preset_graph(n_creatives: usize) -> Result<ElementGraph> {
    let counts = preset_counts(n_creatives).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "no preset graph for {n_creatives} creatives (have 32, 96, 200, 512, 1200, 5000, 20000)"
        ))
    })?;
    ElementGraph::structure_only(default_structure_tree(counts), &[])
}

/// Parameters for random graph generation (dp-check and property tests).
#[derive(Debug, Clone, Copy)]
pub struct RandomGraphParams {
    pub max_ingredients: usize,
    pub max_elements: usize,
    /// Probability that any element pair is forbidden.
    pub forbid_prob: f64,
}

impl Default for RandomGraphParams {
    fn default() -> Self {
        Self {
            max_ingredients: 6,
            max_elements: 4,
            forbid_prob: 0.1,
        }
    }
}

/// Random tree shape, random element counts, random N(0,1) weights, and a
/// random constraint mask. Guaranteed to contain at least one feasible
/// creative (regenerates the mask otherwise).
pub fn random_element_graph<R: Rng + ?Sized>(
    rng: &mut R,
    params: RandomGraphParams,
) -> ElementGraph {
    loop {
        let n = rng.random_range(1..=params.max_ingredients);
        let ingredients: Vec<(String, usize)> = (0..n)
            .map(|i| (format!("g{i}"), rng.random_range(1..=params.max_elements)))
            .collect();
        // random parent among earlier ids, then the labels are already random
        // enough for coverage; root is ingredient 0
        let parent: Vec<Option<usize>> = (0..n)
            .map(|i| {
                if i == 0 {
                    None
                } else {
                    Some(rng.random_range(0..i))
                }
            })
            .collect();
        let tree = IngredientTree::new(ingredients, parent).expect("generated tree is valid");

        let vertex_weights: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..tree.element_count(i))
                    .map(|_| StandardNormal.sample(rng))
                    .collect()
            })
            .collect();
        let edge_weights: Vec<((usize, usize), Vec<f64>)> = tree
            .edges()
            .map(|(p, c)| {
                let len = tree.element_count(p) * tree.element_count(c);
                (
                    (p, c),
                    (0..len).map(|_| StandardNormal.sample(rng)).collect(),
                )
            })
            .collect();
        let bias: f64 = StandardNormal.sample(rng);

        let mut constraints = Vec::new();
        for (p, c) in tree.edges() {
            for pe in 0..tree.element_count(p) {
                for ce in 0..tree.element_count(c) {
                    if rng.random_bool(params.forbid_prob) {
                        constraints.push(ForbiddenPair {
                            ingredient_a: p,
                            element_a: pe,
                            ingredient_b: c,
                            element_b: ce,
                        });
                    }
                }
            }
        }

        let Ok(graph) = ElementGraph::new(
            tree,
            bias,
            vertex_weights,
            edge_weights,
            &constraints,
        ) else {
            continue;
        };
        if graph.enumerate_creatives().next().is_some() {
            return graph;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain(counts: &[usize]) -> IngredientTree {
        let ingredients = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (format!("g{i}"), c))
            .collect();
        let parent = (0..counts.len())
            .map(|i| if i == 0 { None } else { Some(i - 1) })
            .collect();
        IngredientTree::new(ingredients, parent).unwrap()
    }

    fn chain_graph(counts: &[usize], constraints: &[ForbiddenPair]) -> ElementGraph {
        ElementGraph::structure_only(chain(counts), constraints).unwrap()
    }

    #[test]
    fn tree_rejects_two_roots() {
        let err = IngredientTree::new(
            vec![("a".into(), 1), ("b".into(), 1)],
            vec![None, None],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidTree(_)));
    }

    #[test]
    fn tree_rejects_cycle() {
        let err = IngredientTree::new(
            vec![("a".into(), 1), ("b".into(), 1), ("c".into(), 1)],
            vec![None, Some(2), Some(1)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidTree(_)));
    }

    #[test]
    fn tree_rejects_zero_elements() {
        let err =
            IngredientTree::new(vec![("a".into(), 0)], vec![None]).unwrap_err();
        assert!(matches!(err, Error::InvalidTree(_)));
    }

    #[test]
    fn tree_edge_count_is_n_minus_one() {
        let t = default_structure_tree(DEFAULT_COUNTS);
        assert_eq!(t.edges().count(), t.len() - 1);
        assert_eq!(t.root(), 0);
    }

    #[test]
    fn default_graph_vertex_count() {
        let g = preset_graph(200).unwrap();
        assert_eq!(g.n_vertices(), 17);
        assert_eq!(g.enumerate_creatives().count(), 200);
    }

    #[test]
    fn single_ingredient_graph_has_no_edges() {
        let g = chain_graph(&[3], &[]);
        assert_eq!(g.n_edges(), 0);
        assert_eq!(g.enumerate_creatives().count(), 3);
        assert!(g.is_feasible(&Creative(vec![2])).unwrap());
    }

    #[test]
    fn fully_forbidden_pair_is_rejected() {
        let mut constraints = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                constraints.push(ForbiddenPair {
                    ingredient_a: 0,
                    element_a: a,
                    ingredient_b: 1,
                    element_b: b,
                });
            }
        }
        let err = ElementGraph::structure_only(chain(&[2, 2]), &constraints).unwrap_err();
        assert!(matches!(err, Error::InvalidGraph(_)));
    }

    #[test]
    fn constraint_between_non_adjacent_rejected() {
        let err = ElementGraph::structure_only(
            chain(&[2, 2, 2]),
            &[ForbiddenPair {
                ingredient_a: 0,
                element_a: 0,
                ingredient_b: 2,
                element_b: 0,
            }],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidGraph(_)));
    }

    #[test]
    fn feasibility_respects_forbidden_pair() {
        let g = chain_graph(
            &[2, 2],
            &[ForbiddenPair {
                ingredient_a: 0,
                element_a: 0,
                ingredient_b: 1,
                element_b: 1,
            }],
        );
        assert!(g.is_feasible(&Creative(vec![0, 0])).unwrap());
        assert!(!g.is_feasible(&Creative(vec![0, 1])).unwrap());
        assert!(g.is_feasible(&Creative(vec![1, 1])).unwrap());
    }

    #[test]
    fn feasibility_rejects_out_of_range() {
        let g = chain_graph(&[2, 2], &[]);
        let err = g.is_feasible(&Creative(vec![0, 5])).unwrap_err();
        assert!(matches!(err, Error::ElementOutOfRange { .. }));
    }

    #[test]
    fn enumerate_2x3_chain() {
        let g = chain_graph(&[2, 3], &[]);
        let all: Vec<Creative> = g.enumerate_creatives().collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], Creative(vec![0, 0]));
        assert_eq!(all[5], Creative(vec![1, 2]));
        // lexicographic order
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(all, sorted);
    }

    #[test]
    fn enumerate_skips_forbidden() {
        let g = chain_graph(
            &[2, 2],
            &[ForbiddenPair {
                ingredient_a: 0,
                element_a: 1,
                ingredient_b: 1,
                element_b: 0,
            }],
        );
        let all: Vec<Creative> = g.enumerate_creatives().collect();
        assert_eq!(all.len(), 3);
        assert!(!all.contains(&Creative(vec![1, 0])));
    }

    #[test]
    fn enumerate_agrees_with_feasibility_exhaustively() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let g = random_element_graph(&mut rng, RandomGraphParams::default());
            let counts = g.tree().element_counts();
            let listed: std::collections::HashSet<Creative> =
                g.enumerate_creatives().collect();
            // walk the full choice space and cross-check
            let total: usize = counts.iter().product();
            let mut n_feasible = 0;
            for r in 0..total {
                let mut rem = r;
                let mut choice = vec![0; counts.len()];
                for i in (0..counts.len()).rev() {
                    choice[i] = rem % counts[i];
                    rem /= counts[i];
                }
                let c = Creative(choice);
                let feasible = g.is_feasible(&c).unwrap();
                assert_eq!(feasible, listed.contains(&c), "graph {g:?} creative {c}");
                if feasible {
                    n_feasible += 1;
                }
            }
            assert_eq!(n_feasible, listed.len());
        }
    }

    #[test]
    fn unconstrained_count_is_product_of_element_counts() {
        let g = chain_graph(&[3, 2, 4], &[]);
        assert_eq!(g.enumerate_creatives().count(), 24);
    }

    #[test]
    fn no_intra_ingredient_edges() {
        // edge blocks only exist for tree edges; same-ingredient queries are absent
        let g = preset_graph(200).unwrap();
        for i in 0..g.tree().len() {
            assert!(!g.edge_present(i, 0, i, 0));
        }
    }

    #[test]
    fn packed_weights_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_element_graph(&mut rng, RandomGraphParams::default());
        let w = g.packed_weights();
        assert_eq!(w.dim(), g.indexer().dim());
        assert_eq!(w.as_slice()[0], g.bias());
    }
}
