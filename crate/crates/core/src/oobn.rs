//! Object-oriented network composition.
//!
//! Sub-network classes are instantiated inside a master network and inlined
//! into a single [`NetworkSpec`]. Instance nodes are namespaced as
//! `instance.node`; master nodes keep bare ids. An instance output is shared
//! by reference with every master node bound to it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bn::{BnError, Network, NetworkSpec, NodeSpec};

pub const SEPARATOR: char = '.';

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OobnError {
    #[error("malformed composition document: {0}")]
    Parse(String),
    #[error("instance name `{0}` declared twice")]
    DuplicateInstanceName(String),
    #[error("`{0}` may not be empty or contain the reserved `.` separator")]
    InvalidName(String),
    #[error("binding `{0}` does not name a declared output of its instance")]
    BindingToNonOutput(String),
    #[error("binding `{output}` -> `{target}` but `{target}` does not list it as a parent")]
    BindingTargetMismatch { output: String, target: String },
    #[error("master node `{node}` uses `{parent}` without a binding")]
    UnboundParent { node: String, parent: String },
    #[error("class interface node `{0}` is not in the class network")]
    InterfaceNodeMissing(String),
    #[error("class input node `{0}` has parents")]
    InputHasParents(String),
    #[error("flattened network has a cycle among {0:?}")]
    CycleAfterFlatten(Vec<String>),
    #[error(transparent)]
    Network(#[from] BnError),
}

/// A reusable sub-network with a declared interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OobnClass {
    #[serde(flatten)]
    pub spec: NetworkSpec,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
}

impl OobnClass {
    pub fn new(spec: NetworkSpec, inputs: &[&str], outputs: &[&str]) -> Self {
        OobnClass {
            spec,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, OobnError> {
        serde_json::from_str(text).map_err(|e| OobnError::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), OobnError> {
        Network::build(&self.spec)?;
        for id in self.inputs.iter().chain(&self.outputs) {
            if self.spec.node(id).is_none() {
                return Err(OobnError::InterfaceNodeMissing(id.clone()));
            }
        }
        for id in &self.inputs {
            if !self
                .spec
                .node(id)
                .map(|n| n.parents.is_empty())
                .unwrap_or(false)
            {
                return Err(OobnError::InputHasParents(id.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub name: String,
    pub class: OobnClass,
}

/// `output` is a qualified `instance.node`; `target` a master node id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub output: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MasterSpec {
    #[serde(default)]
    pub instances: Vec<Instance>,
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub bindings: Vec<Binding>,
}

/// Instance reference in a master document: either a class file name or an
/// inline class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassRef {
    File { file: String },
    Inline(OobnClass),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub name: String,
    pub class: ClassRef,
}

/// On-disk master format: the network format plus `instances` and `bindings`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MasterDocument {
    #[serde(default)]
    pub instances: Vec<InstanceDoc>,
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub bindings: Vec<Binding>,
}

impl MasterDocument {
    pub fn from_json(text: &str) -> Result<Self, OobnError> {
        serde_json::from_str(text).map_err(|e| OobnError::Parse(e.to_string()))
    }

    /// Resolve class file references through `load`.
    pub fn resolve<F>(self, mut load: F) -> Result<MasterSpec, OobnError>
    where
        F: FnMut(&str) -> Result<OobnClass, OobnError>,
    {
        let instances = self
            .instances
            .into_iter()
            .map(|doc| {
                let class = match doc.class {
                    ClassRef::File { file } => load(&file)?,
                    ClassRef::Inline(c) => c,
                };
                Ok(Instance {
                    name: doc.name,
                    class,
                })
            })
            .collect::<Result<_, OobnError>>()?;
        Ok(MasterSpec {
            instances,
            nodes: self.nodes,
            bindings: self.bindings,
        })
    }
}

pub fn qualify(instance: &str, node: &str) -> String {
    format!("{instance}{SEPARATOR}{node}")
}

/// Inline every instance into one network.
pub fn flatten(master: &MasterSpec) -> Result<NetworkSpec, OobnError> {
    let mut names = BTreeSet::new();
    for inst in &master.instances {
        if inst.name.is_empty() || inst.name.contains(SEPARATOR) {
            return Err(OobnError::InvalidName(inst.name.clone()));
        }
        if !names.insert(inst.name.as_str()) {
            return Err(OobnError::DuplicateInstanceName(inst.name.clone()));
        }
        inst.class.validate()?;
    }
    for node in &master.nodes {
        if node.id.is_empty() || node.id.contains(SEPARATOR) {
            return Err(OobnError::InvalidName(node.id.clone()));
        }
    }

    let mut outputs = BTreeSet::new();
    for inst in &master.instances {
        for out in &inst.class.outputs {
            outputs.insert(qualify(&inst.name, out));
        }
    }
    let mut bound = BTreeSet::new();
    for b in &master.bindings {
        if !outputs.contains(&b.output) {
            return Err(OobnError::BindingToNonOutput(b.output.clone()));
        }
        let target = master.nodes.iter().find(|n| n.id == b.target);
        if !target.is_some_and(|n| n.parents.contains(&b.output)) {
            return Err(OobnError::BindingTargetMismatch {
                output: b.output.clone(),
                target: b.target.clone(),
            });
        }
        bound.insert((b.output.as_str(), b.target.as_str()));
    }
    for node in &master.nodes {
        for p in node.parents.iter().filter(|p| p.contains(SEPARATOR)) {
            if !bound.contains(&(p.as_str(), node.id.as_str())) {
                return Err(OobnError::UnboundParent {
                    node: node.id.clone(),
                    parent: p.clone(),
                });
            }
        }
    }

    let mut nodes = Vec::new();
    for inst in &master.instances {
        for n in &inst.class.spec.nodes {
            nodes.push(NodeSpec {
                id: qualify(&inst.name, &n.id),
                parents: n.parents.iter().map(|p| qualify(&inst.name, p)).collect(),
                ..n.clone()
            });
        }
    }
    nodes.extend(master.nodes.iter().cloned());
    let spec = NetworkSpec::new(nodes);

    match Network::build(&spec) {
        Ok(_) => Ok(spec),
        Err(BnError::CycleDetected { nodes }) => Err(OobnError::CycleAfterFlatten(nodes)),
        Err(e) => Err(e.into()),
    }
}
