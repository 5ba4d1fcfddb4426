use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::BnError;

/// Allowed deviation of a CPT row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// One node of a discrete network as it appears in a network document.
///
/// `cpt` has one row per combination of parent states and one column per own
/// state. Rows are ordered lexicographically over parent-state indices with
/// the first-listed parent most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    #[serde(default)]
    pub label: String,
    pub states: Vec<String>,
    #[serde(default)]
    pub parents: Vec<String>,
    pub cpt: Vec<Vec<f64>>,
}

impl NodeSpec {
    /// Root node with the given prior.
    pub fn root(id: &str, label: &str, states: &[&str], prior: &[f64]) -> Self {
        NodeSpec {
            id: id.to_string(),
            label: label.to_string(),
            states: states.iter().map(|s| s.to_string()).collect(),
            parents: Vec::new(),
            cpt: vec![prior.to_vec()],
        }
    }

    pub fn child(
        id: &str,
        label: &str,
        states: &[&str],
        parents: &[&str],
        cpt: Vec<Vec<f64>>,
    ) -> Self {
        NodeSpec {
            id: id.to_string(),
            label: label.to_string(),
            states: states.iter().map(|s| s.to_string()).collect(),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            cpt,
        }
    }

    /// Binary child whose CPT is given as P(first state | parent row).
    pub fn binary_child(
        id: &str,
        label: &str,
        states: [&str; 2],
        parents: &[&str],
        first: &[f64],
    ) -> Self {
        let cpt = first.iter().map(|&p| vec![p, 1.0 - p]).collect();
        Self::child(id, label, &states, parents, cpt)
    }

    pub fn state_index(&self, state: &str) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }
}

/// A network document: `{"nodes": [...]}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub nodes: Vec<NodeSpec>,
}

impl NetworkSpec {
    pub fn new(nodes: Vec<NodeSpec>) -> Self {
        NetworkSpec { nodes }
    }

    pub fn from_json(text: &str) -> Result<Self, BnError> {
        serde_json::from_str(text).map_err(|e| BnError::Parse(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("network spec serializes")
    }

    /// (parent, child) pairs in declaration order.
    pub fn edges(&self) -> Vec<(String, String)> {
        self.nodes
            .iter()
            .flat_map(|n| n.parents.iter().map(move |p| (p.clone(), n.id.clone())))
            .collect()
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: &str) -> Option<&mut NodeSpec> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub id: String,
    pub label: String,
    pub states: Vec<String>,
    /// Parent indices in CPT significance order.
    pub parents: Vec<usize>,
    /// Row-major, `states.len()` columns.
    pub cpt: Vec<f64>,
}

/// A validated network. Nodes are stored in canonical topological order
/// (ties broken by id), so declaration order never affects inference.
#[derive(Debug, Clone)]
pub struct Network {
    pub(crate) nodes: Vec<Node>,
    index: HashMap<String, usize>,
}

pub fn build_network(spec: &NetworkSpec) -> Result<Network, BnError> {
    Network::build(spec)
}

impl Network {
    pub fn build(spec: &NetworkSpec) -> Result<Self, BnError> {
        let mut by_id: BTreeMap<&str, &NodeSpec> = BTreeMap::new();
        for node in &spec.nodes {
            if node.id.is_empty() {
                return Err(BnError::Parse("node with empty id".into()));
            }
            if by_id.insert(node.id.as_str(), node).is_some() {
                return Err(BnError::DuplicateNode(node.id.clone()));
            }
        }
        for node in &spec.nodes {
            if node.states.len() < 2 {
                return Err(BnError::TooFewStates(node.id.clone()));
            }
            let mut seen = BTreeSet::new();
            for s in &node.states {
                if !seen.insert(s.as_str()) {
                    return Err(BnError::DuplicateState {
                        node: node.id.clone(),
                        state: s.clone(),
                    });
                }
            }
            let mut seen_parents = BTreeSet::new();
            for p in &node.parents {
                if !by_id.contains_key(p.as_str()) {
                    return Err(BnError::UnknownParent {
                        node: node.id.clone(),
                        parent: p.clone(),
                    });
                }
                if !seen_parents.insert(p.as_str()) {
                    return Err(BnError::DuplicateParent {
                        node: node.id.clone(),
                        parent: p.clone(),
                    });
                }
            }
        }

        let order = topological_order(spec)?;
        let index: HashMap<String, usize> = order
            .iter()
            .enumerate()
            .map(|(i, id)| (id.to_string(), i))
            .collect();

        let mut nodes = Vec::with_capacity(order.len());
        for id in &order {
            let spec_node = by_id[id.as_str()];
            let parents: Vec<usize> = spec_node.parents.iter().map(|p| index[p]).collect();
            let rows: usize = parents.iter().map(|&p| nodes_card(&nodes, p)).product();
            let cols = spec_node.states.len();
            check_cpt(spec_node, rows, cols)?;
            nodes.push(Node {
                id: spec_node.id.clone(),
                label: spec_node.label.clone(),
                states: spec_node.states.clone(),
                parents,
                cpt: spec_node.cpt.iter().flatten().copied().collect(),
            });
        }
        Ok(Network { nodes, index })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node ids in canonical topological order.
    pub fn topological_order(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.id.as_str()).collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub(crate) fn index_of(&self, id: &str) -> Result<usize, BnError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| BnError::UnknownNode(id.to_string()))
    }

    pub fn states(&self, id: &str) -> Result<&[String], BnError> {
        Ok(&self.nodes[self.index_of(id)?].states)
    }

    pub fn parents(&self, id: &str) -> Result<Vec<&str>, BnError> {
        let node = &self.nodes[self.index_of(id)?];
        Ok(node
            .parents
            .iter()
            .map(|&p| self.nodes[p].id.as_str())
            .collect())
    }

    pub fn label(&self, id: &str) -> Result<&str, BnError> {
        Ok(&self.nodes[self.index_of(id)?].label)
    }

    pub(crate) fn card(&self, idx: usize) -> usize {
        self.nodes[idx].states.len()
    }

    /// Size of the full joint state space, saturating.
    pub fn joint_size(&self) -> u128 {
        self.nodes
            .iter()
            .map(|n| n.states.len() as u128)
            .fold(1u128, |acc, c| acc.saturating_mul(c))
    }

    /// Spec with nodes in canonical order.
    pub fn to_spec(&self) -> NetworkSpec {
        let nodes = self
            .nodes
            .iter()
            .map(|n| NodeSpec {
                id: n.id.clone(),
                label: n.label.clone(),
                states: n.states.clone(),
                parents: n
                    .parents
                    .iter()
                    .map(|&p| self.nodes[p].id.clone())
                    .collect(),
                cpt: n.cpt.chunks(n.states.len()).map(|r| r.to_vec()).collect(),
            })
            .collect();
        NetworkSpec { nodes }
    }
}

fn nodes_card(nodes: &[Node], idx: usize) -> usize {
    nodes[idx].states.len()
}

fn check_cpt(node: &NodeSpec, rows: usize, cols: usize) -> Result<(), BnError> {
    let shape_ok = node.cpt.len() == rows && node.cpt.iter().all(|r| r.len() == cols);
    if !shape_ok {
        return Err(BnError::CptShapeMismatch {
            node: node.id.clone(),
            expected_rows: rows,
            expected_cols: cols,
            found_rows: node.cpt.len(),
        });
    }
    for (r, row) in node.cpt.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(BnError::CptEntryOutOfRange {
                    node: node.id.clone(),
                    row: r,
                    col: c,
                    value: v,
                });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(BnError::CptRowNotNormalized {
                node: node.id.clone(),
                row: r,
                sum,
            });
        }
    }
    Ok(())
}

/// Kahn's algorithm; among ready nodes the smallest id goes first.
fn topological_order(spec: &NetworkSpec) -> Result<Vec<String>, BnError> {
    let mut indegree: BTreeMap<&str, usize> = BTreeMap::new();
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for node in &spec.nodes {
        indegree.insert(node.id.as_str(), node.parents.len());
        for p in &node.parents {
            children
                .entry(p.as_str())
                .or_default()
                .push(node.id.as_str());
        }
    }
    let mut ready: BTreeSet<&str> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&id, _)| id)
        .collect();
    let mut order = Vec::with_capacity(spec.nodes.len());
    while let Some(id) = ready.pop_first() {
        order.push(id.to_string());
        for &child in children.get(id).map(Vec::as_slice).unwrap_or(&[]) {
            let d = indegree.get_mut(child).expect("child registered");
            *d -= 1;
            if *d == 0 {
                ready.insert(child);
            }
        }
    }
    if order.len() != spec.nodes.len() {
        let placed: BTreeSet<&str> = order.iter().map(String::as_str).collect();
        let nodes = indegree
            .keys()
            .filter(|id| !placed.contains(*id))
            .map(|s| s.to_string())
            .collect();
        return Err(BnError::CycleDetected { nodes });
    }
    Ok(order)
}
