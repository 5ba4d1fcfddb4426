//! Discrete Bayesian networks with exact inference.
//!
//! [`query`] runs variable elimination; [`enumerate_joint`] sums the full
//! joint and exists as an independent oracle for the former.

mod enumerate;
mod factor;
mod inference;
mod network;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use enumerate::{enumerate_joint, enumerate_marginals, MAX_JOINT_STATES};
pub use inference::query;
pub use network::{build_network, Network, NetworkSpec, NodeSpec, ROW_SUM_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BnError {
    #[error("malformed network document: {0}")]
    Parse(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{node}` lists unknown parent `{parent}`")]
    UnknownParent { node: String, parent: String },
    #[error("node `{node}` lists parent `{parent}` twice")]
    DuplicateParent { node: String, parent: String },
    #[error("node `{0}` needs at least two states")]
    TooFewStates(String),
    #[error("node `{node}` declares state `{state}` twice")]
    DuplicateState { node: String, state: String },
    #[error("unknown state `{state}` for node `{node}`")]
    UnknownState { node: String, state: String },
    #[error("cycle detected among nodes {nodes:?}")]
    CycleDetected { nodes: Vec<String> },
    #[error("CPT of `{node}` must be {expected_rows}x{expected_cols}, found {found_rows} rows or ragged columns")]
    CptShapeMismatch {
        node: String,
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
    },
    #[error("CPT of `{node}` row {row} sums to {sum}, not 1")]
    CptRowNotNormalized { node: String, row: usize, sum: f64 },
    #[error("CPT of `{node}` entry ({row}, {col}) = {value} is outside [0, 1]")]
    CptEntryOutOfRange {
        node: String,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("evidence has zero probability")]
    ImpossibleEvidence,
    #[error("joint state space of {size} exceeds the enumeration limit of {limit}")]
    StateSpaceTooLarge { size: u128, limit: u128 },
}

/// Hard findings: node id to observed state name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Evidence {
    findings: BTreeMap<String, String>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, node: &str, state: &str) -> Self {
        self.insert(node, state);
        self
    }

    pub fn insert(&mut self, node: &str, state: &str) {
        self.findings.insert(node.to_string(), state.to_string());
    }

    pub fn remove(&mut self, node: &str) -> Option<String> {
        self.findings.remove(node)
    }

    pub fn get(&self, node: &str) -> Option<&str> {
        self.findings.get(node).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.findings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.findings.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Observed state index per network node.
    pub(crate) fn resolve(&self, net: &Network) -> Result<Vec<Option<usize>>, BnError> {
        let mut observed = vec![None; net.len()];
        for (node, state) in self.iter() {
            let idx = net.index_of(node)?;
            let s = net.nodes[idx]
                .states
                .iter()
                .position(|x| x == state)
                .ok_or_else(|| BnError::UnknownState {
                    node: node.to_string(),
                    state: state.to_string(),
                })?;
            observed[idx] = Some(s);
        }
        Ok(observed)
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Evidence {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Evidence {
            findings: iter
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateProbability {
    pub state: String,
    pub probability: f64,
}

/// Distribution over one node's states, in the node's declared state order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub node: String,
    pub distribution: Vec<StateProbability>,
}

impl Posterior {
    pub(crate) fn from_weights(
        net: &Network,
        target: usize,
        weights: &[f64],
    ) -> Result<Self, BnError> {
        let z: f64 = weights.iter().sum();
        if !z.is_finite() || z <= 0.0 {
            return Err(BnError::ImpossibleEvidence);
        }
        let node = &net.nodes[target];
        Ok(Posterior {
            node: node.id.clone(),
            distribution: node
                .states
                .iter()
                .zip(weights)
                .map(|(s, w)| StateProbability {
                    state: s.clone(),
                    probability: w / z,
                })
                .collect(),
        })
    }

    pub fn probability(&self, state: &str) -> Option<f64> {
        self.distribution
            .iter()
            .find(|sp| sp.state == state)
            .map(|sp| sp.probability)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.distribution.iter().map(|sp| sp.probability).collect()
    }

    pub fn most_likely(&self) -> &str {
        let mut best = &self.distribution[0];
        for sp in &self.distribution[1..] {
            if sp.probability > best.probability {
                best = sp;
            }
        }
        &best.state
    }
}
