use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::bn::{query, BnError, Evidence, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SupplierProfile,
    FinancialIncentive,
    Overall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub node: String,
    pub state: String,
    pub expected: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDef {
    pub name: String,
    pub model: ModelKind,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub evidence: Evidence,
    pub targets: Vec<TargetSpec>,
}

/// Contents of a `scenarios.json` document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioSet {
    scenarios: Vec<ScenarioDef>,
}

impl ScenarioSet {
    pub fn new(scenarios: Vec<ScenarioDef>) -> Result<Self, ModelError> {
        for s in &scenarios {
            for t in &s.targets {
                if !(0.0..=1.0).contains(&t.expected) || t.tolerance.is_nan() || t.tolerance < 0.0 {
                    return Err(ModelError::Parse(format!(
                        "scenario `{}`: target {}={} needs expected in [0,1] and tolerance >= 0",
                        s.name, t.node, t.state
                    )));
                }
            }
        }
        Ok(ScenarioSet { scenarios })
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let raw: ScenarioSet =
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        Self::new(raw.scenarios)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenarios serialize")
    }

    pub fn scenarios(&self) -> &[ScenarioDef] {
        &self.scenarios
    }

    pub fn get(&self, name: &str) -> Result<&ScenarioDef, ModelError> {
        self.scenarios
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| ModelError::UnknownScenario(name.to_string()))
    }

    pub fn for_model(&self, kind: ModelKind) -> impl Iterator<Item = &ScenarioDef> {
        self.scenarios.iter().filter(move |s| s.model == kind)
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub node: String,
    pub state: String,
    pub expected: f64,
    pub tolerance: f64,
    pub actual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub targets: Vec<TargetReport>,
    pub pass: bool,
}

impl ScenarioReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        for t in &self.targets {
            let _ = writeln!(
                out,
                "{:<34} {:<40} {:>8.4} {:>8.4} ±{:<8} {}",
                self.name,
                format!("{}={}", t.node, t.state),
                t.actual,
                t.expected,
                t.tolerance,
                if t.pass { "PASS" } else { "FAIL" }
            );
        }
        out
    }
}

/// Query every target of `scenario` and compare with its expectation.
pub fn run_scenario(net: &Network, scenario: &ScenarioDef) -> Result<ScenarioReport, BnError> {
    let mut targets = Vec::with_capacity(scenario.targets.len());
    for t in &scenario.targets {
        let posterior = query(net, &scenario.evidence, &t.node)?;
        let actual = posterior
            .probability(&t.state)
            .ok_or_else(|| BnError::UnknownState {
                node: t.node.clone(),
                state: t.state.clone(),
            })?;
        let pass = (actual - t.expected).abs() <= t.tolerance;
        targets.push(TargetReport {
            node: t.node.clone(),
            state: t.state.clone(),
            expected: t.expected,
            tolerance: t.tolerance,
            actual,
            pass,
        });
    }
    let pass = targets.iter().all(|t| t.pass);
    Ok(ScenarioReport {
        name: scenario.name.clone(),
        targets,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{published_scenarios, FinanceModel};

    #[test]
    fn fixture_has_fifteen_scenarios() {
        let set = published_scenarios();
        assert_eq!(set.len(), 15);
        assert_eq!(set.for_model(ModelKind::SupplierProfile).count(), 4);
        assert_eq!(set.for_model(ModelKind::FinancialIncentive).count(), 6);
        assert_eq!(set.for_model(ModelKind::Overall).count(), 5);
    }

    #[test]
    fn named_examples() {
        let model = FinanceModel::golden();
        let set = published_scenarios();
        for (name, node, state, expected, tol) in [
            ("sp-d-tier1-gwal", "SupplierProfile", "LowRisk", 0.99, 0.01),
            (
                "fi-d-failed-additional",
                "FinancialIncentive",
                "Compelling",
                0.20,
                0.01,
            ),
            ("sp-a-no-evidence", "SupplierProfile", "LowRisk", 0.50, 1e-6),
        ] {
            let s = set.get(name).unwrap();
            let report = run_scenario(model.network(s.model), s).unwrap();
            let t = report
                .targets
                .iter()
                .find(|t| t.node == node && t.state == state)
                .unwrap();
            assert!((t.actual - expected).abs() <= tol, "{name}: {}", t.actual);
            assert!(report.pass);
        }
        assert!(matches!(
            set.get("nope"),
            Err(ModelError::UnknownScenario(_))
        ));
    }

    #[test]
    fn rejects_out_of_range_expectations() {
        let text = r#"{"scenarios":[{"name":"x","model":"overall","targets":[{"node":"A","state":"a","expected":1.5,"tolerance":0.1}]}]}"#;
        assert!(matches!(
            ScenarioSet::from_json(text),
            Err(ModelError::Parse(_))
        ));
    }

    #[test]
    fn unknown_node_is_named() {
        let model = FinanceModel::golden();
        let s = ScenarioDef {
            name: "bad".into(),
            model: ModelKind::Overall,
            description: String::new(),
            evidence: Evidence::new(),
            targets: vec![TargetSpec {
                node: "Ghost".into(),
                state: "x".into(),
                expected: 0.5,
                tolerance: 0.1,
            }],
        };
        let err = run_scenario(model.overall(), &s).unwrap_err();
        assert!(err.to_string().contains("Ghost"));
    }
}
