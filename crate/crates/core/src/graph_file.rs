//! On-disk graph description (UTF-8 JSON).
//!
//! Keys: `ingredients` (list of `{name, elements}`), `tree_edges` (list of
//! `[parent_name, child_name]`), `constraints` (list of `{a: [ingredient,
//! element], b: [ingredient, element]}`), `root` (string), and an optional
//! `weights` section (`bias`, per-ingredient `vertices`, per-tree-edge
//! `edges` matrices). Element names are cosmetic labels; identity is the
//! position in the `elements` list.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ElementGraph, ForbiddenPair, IngredientTree};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub root: String,
    pub ingredients: Vec<GraphFileIngredient>,
    pub tree_edges: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<GraphFileConstraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<GraphFileWeights>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFileIngredient {
    pub name: String,
    pub elements: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFileConstraint {
    /// `[ingredient name, element name]`
    pub a: (String, String),
    pub b: (String, String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFileWeights {
    pub bias: f64,
    /// Per ingredient (file order), per element.
    pub vertices: Vec<Vec<f64>>,
    /// One block per tree edge, rows indexed by the first ingredient of
    /// `pair`, columns by the second.
    pub edges: Vec<GraphFileEdgeBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFileEdgeBlock {
    pub pair: (String, String),
    pub matrix: Vec<Vec<f64>>,
}

impl GraphFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Validate and build the element graph.
    pub fn to_graph(&self) -> Result<ElementGraph> {
        let n = self.ingredients.len();
        let find = |name: &str| -> Result<usize> {
            self.ingredients
                .iter()
                .position(|g| g.name == name)
                .ok_or_else(|| Error::InvalidGraph(format!("unknown ingredient `{name}`")))
        };
        let mut parent: Vec<Option<usize>> = vec![None; n];
        for (p_name, c_name) in &self.tree_edges {
            let p = find(p_name)?;
            let c = find(c_name)?;
            if parent[c].is_some() {
                return Err(Error::InvalidTree(format!(
                    "ingredient `{c_name}` has two parents"
                )));
            }
            parent[c] = Some(p);
        }
        let tree = IngredientTree::new(
            self.ingredients
                .iter()
                .map(|g| (g.name.clone(), g.elements.len()))
                .collect(),
            parent,
        )?;
        let root = find(&self.root)?;
        if tree.root() != root {
            return Err(Error::InvalidTree(format!(
                "declared root `{}` does not match the tree edges",
                self.root
            )));
        }
        for g in &self.ingredients {
            let mut seen = std::collections::HashSet::new();
            for e in &g.elements {
                if !seen.insert(e) {
                    return Err(Error::InvalidGraph(format!(
                        "duplicate element `{e}` in ingredient `{}`",
                        g.name
                    )));
                }
            }
        }

        let find_element = |ing: &str, elem: &str| -> Result<(usize, usize)> {
            let i = find(ing)?;
            let e = self.ingredients[i]
                .elements
                .iter()
                .position(|x| x == elem)
                .ok_or_else(|| {
                    Error::InvalidGraph(format!("unknown element `{elem}` in ingredient `{ing}`"))
                })?;
            Ok((i, e))
        };
        let constraints: Vec<ForbiddenPair> = self
            .constraints
            .iter()
            .map(|c| {
                let (ia, ea) = find_element(&c.a.0, &c.a.1)?;
                let (ib, eb) = find_element(&c.b.0, &c.b.1)?;
                Ok(ForbiddenPair {
                    ingredient_a: ia,
                    element_a: ea,
                    ingredient_b: ib,
                    element_b: eb,
                })
            })
            .collect::<Result<_>>()?;

        let (bias, vertex_weights, edge_weights) = match &self.weights {
            None => {
                let vw: Vec<Vec<f64>> = self
                    .ingredients
                    .iter()
                    .map(|g| vec![0.0; g.elements.len()])
                    .collect();
                let ew = tree
                    .edges()
                    .map(|(p, c)| {
                        (
                            (p, c),
                            vec![0.0; tree.element_count(p) * tree.element_count(c)],
                        )
                    })
                    .collect();
                (0.0, vw, ew)
            }
            Some(w) => {
                if w.vertices.len() != n {
                    return Err(Error::InvalidGraph(format!(
                        "weights.vertices has {} entries for {n} ingredients",
                        w.vertices.len()
                    )));
                }
                let mut ew = Vec::new();
                for block in &w.edges {
                    let a = find(&block.pair.0)?;
                    let b = find(&block.pair.1)?;
                    let rows = self.ingredients[a].elements.len();
                    let cols = self.ingredients[b].elements.len();
                    if block.matrix.len() != rows
                        || block.matrix.iter().any(|r| r.len() != cols)
                    {
                        return Err(Error::InvalidGraph(format!(
                            "weights.edges matrix for ({}, {}) is not {rows}x{cols}",
                            block.pair.0, block.pair.1
                        )));
                    }
                    let flat: Vec<f64> = block.matrix.iter().flatten().copied().collect();
                    ew.push(((a, b), flat));
                }
                (w.bias, w.vertices.clone(), ew)
            }
        };

        ElementGraph::new(tree, bias, vertex_weights, edge_weights, &constraints)
    }

    /// Describe an existing graph, inventing `e0, e1, ...` element labels
    /// and emitting one constraint entry per absent pair.
    pub fn from_graph(graph: &ElementGraph) -> Self {
        let tree = graph.tree();
        let ingredients: Vec<GraphFileIngredient> = tree
            .ingredients()
            .iter()
            .map(|g| GraphFileIngredient {
                name: g.name.clone(),
                elements: (0..g.element_count).map(|e| format!("e{e}")).collect(),
            })
            .collect();
        let tree_edges: Vec<(String, String)> = tree
            .edges()
            .map(|(p, c)| {
                (
                    tree.ingredient(p).name.clone(),
                    tree.ingredient(c).name.clone(),
                )
            })
            .collect();
        let mut constraints = Vec::new();
        for (p, c) in tree.edges() {
            for pe in 0..tree.element_count(p) {
                for ce in 0..tree.element_count(c) {
                    if !graph.edge_present(p, pe, c, ce) {
                        constraints.push(GraphFileConstraint {
                            a: (tree.ingredient(p).name.clone(), format!("e{pe}")),
                            b: (tree.ingredient(c).name.clone(), format!("e{ce}")),
                        });
                    }
                }
            }
        }
        let weights = GraphFileWeights {
            bias: graph.bias(),
            vertices: (0..tree.len())
                .map(|i| {
                    (0..tree.element_count(i))
                        .map(|e| graph.vertex_weight(i, e))
                        .collect()
                })
                .collect(),
            edges: tree
                .edges()
                .map(|(p, c)| GraphFileEdgeBlock {
                    pair: (
                        tree.ingredient(p).name.clone(),
                        tree.ingredient(c).name.clone(),
                    ),
                    matrix: (0..tree.element_count(p))
                        .map(|pe| {
                            (0..tree.element_count(c))
                                .map(|ce| graph.edge_weight(p, pe, c, ce))
                                .collect()
                        })
                        .collect(),
                })
                .collect(),
        };
        Self {
            root: tree.ingredient(tree.root()).name.clone(),
            ingredients,
            tree_edges,
            constraints,
            weights: Some(weights),
        }
    }
}

/// Load an element graph from a JSON graph file.
pub fn load_graph(path: &Path) -> Result<ElementGraph> {
    GraphFile::load(path)?.to_graph()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{random_element_graph, RandomGraphParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SAMPLE: &str = r#"{
        "root": "template",
        "ingredients": [
            {"name": "template", "elements": ["plain", "fancy"]},
            {"name": "text_color", "elements": ["dark", "light"]}
        ],
        "tree_edges": [["template", "text_color"]],
        "constraints": [{"a": ["template", "fancy"], "b": ["text_color", "light"]}]
    }"#;

    #[test]
    fn parses_and_validates_sample() {
        let gf: GraphFile = serde_json::from_str(SAMPLE).unwrap();
        let g = gf.to_graph().unwrap();
        assert_eq!(g.tree().len(), 2);
        assert_eq!(g.n_edges(), 3);
        assert!(!g.edge_present(0, 1, 1, 1));
    }

    #[test]
    fn rejects_unknown_names() {
        let mut gf: GraphFile = serde_json::from_str(SAMPLE).unwrap();
        gf.constraints[0].a.0 = "nope".into();
        assert!(gf.to_graph().is_err());
    }

    #[test]
    fn rejects_root_mismatch() {
        let mut gf: GraphFile = serde_json::from_str(SAMPLE).unwrap();
        gf.root = "text_color".into();
        assert!(gf.to_graph().is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = r#"{"root": "a", "ingredients": [], "tree_edges": [], "spurious": 1}"#;
        assert!(serde_json::from_str::<GraphFile>(text).is_err());
    }

    #[test]
    fn graph_round_trips_through_the_file_format() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let g = random_element_graph(&mut rng, RandomGraphParams::default());
            let gf = GraphFile::from_graph(&g);
            let text = serde_json::to_string(&gf).unwrap();
            let back: GraphFile = serde_json::from_str(&text).unwrap();
            let g2 = back.to_graph().unwrap();
            assert_eq!(g.tree(), g2.tree());
            assert_eq!(g.n_edges(), g2.n_edges());
            assert_eq!(g.bias(), g2.bias());
            let w1 = g.packed_weights();
            let w2 = g2.packed_weights();
            assert_eq!(w1.as_slice(), w2.as_slice());
            let c1: Vec<_> = g.enumerate_creatives().collect();
            let c2: Vec<_> = g2.enumerate_creatives().collect();
            assert_eq!(c1, c2);
        }
    }
}
