//! Exact reconstruction of the sub-model CPTs.
//!
//! With two uniform binary roots, a scenario observing both parents pins one
//! CPT row, a scenario observing one parent pins the mean of two rows, and
//! the no-evidence scenario pins the mean of all four. Equations are applied
//! most-specific first; each one that mentions exactly one unsolved row
//! determines it, and every other equation becomes a consistency check.

use super::scenario::{ModelKind, ScenarioSet};
use super::{ids, ModelError};
use crate::oobn::OobnClass;

/// Largest tolerated residual for an equation that only checks solved rows.
pub const CONSISTENCY_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubmodelCpts {
    /// P(LowRisk | Tier1, GWaL), rows (Y,Y) (Y,N) (N,Y) (N,N).
    pub low_risk: [f64; 4],
    /// P(Compelling | CreditRating, FinancialRewards), rows (P,A) (P,S) (F,A) (F,S).
    pub compelling: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
struct RowEquation {
    scenario: String,
    rows: Vec<usize>,
    mean: f64,
}

pub fn derive_submodel_cpts(scenarios: &ScenarioSet) -> Result<SubmodelCpts, ModelError> {
    let low_risk = solve_binary_rows(
        &super::supplier_profile_class([0.5; 4]),
        ids::SUPPLIER_PROFILE,
        scenarios,
        ModelKind::SupplierProfile,
    )?;
    let compelling = solve_binary_rows(
        &super::financial_incentive_class([0.5; 4]),
        ids::FINANCIAL_INCENTIVE,
        scenarios,
        ModelKind::FinancialIncentive,
    )?;
    Ok(SubmodelCpts {
        low_risk,
        compelling,
    })
}

/// Solve P(first state of `child` | parents) for a child of two uniform
/// binary roots.
pub fn solve_binary_rows(
    class: &OobnClass,
    child: &str,
    scenarios: &ScenarioSet,
    kind: ModelKind,
) -> Result<[f64; 4], ModelError> {
    let spec = &class.spec;
    let node = spec
        .node(child)
        .ok_or_else(|| ModelError::Parse(format!("no node `{child}`")))?;
    let parents: Vec<_> = node
        .parents
        .iter()
        .map(|p| spec.node(p).expect("validated parent"))
        .collect();
    let shape_ok = node.states.len() == 2
        && parents.len() == 2
        && parents
            .iter()
            .all(|p| p.parents.is_empty() && p.cpt == vec![vec![0.5, 0.5]]);
    if !shape_ok {
        return Err(ModelError::Parse(format!(
            "`{child}` is not a binary child of two uniform binary roots"
        )));
    }

    let mut equations = Vec::new();
    for s in scenarios.for_model(kind) {
        if s.evidence
            .iter()
            .any(|(n, _)| !node.parents.iter().any(|p| p == n))
        {
            continue;
        }
        let mut allowed = [vec![0usize, 1], vec![0usize, 1]];
        for (k, parent) in parents.iter().enumerate() {
            if let Some(state) = s.evidence.get(&parent.id) {
                let idx = parent.state_index(state).ok_or_else(|| {
                    ModelError::Parse(format!(
                        "scenario `{}`: unknown state {state} of {}",
                        s.name, parent.id
                    ))
                })?;
                allowed[k] = vec![idx];
            }
        }
        let rows: Vec<usize> = allowed[0]
            .iter()
            .flat_map(|&a| allowed[1].iter().map(move |&b| a * 2 + b))
            .collect();
        for t in s.targets.iter().filter(|t| t.node == child) {
            let mean = if t.state == node.states[0] {
                t.expected
            } else if t.state == node.states[1] {
                1.0 - t.expected
            } else {
                return Err(ModelError::Parse(format!(
                    "scenario `{}`: unknown state {}",
                    s.name, t.state
                )));
            };
            equations.push(RowEquation {
                scenario: s.name.clone(),
                rows: rows.clone(),
                mean,
            });
        }
    }
    // most specific first; stable so fixture order breaks ties
    equations.sort_by_key(|e| e.rows.len());

    let mut solved: [Option<f64>; 4] = [None; 4];
    let mut pending = equations;
    loop {
        let before = pending.len();
        let mut deferred = Vec::new();
        for eq in pending {
            let unknown: Vec<usize> = eq
                .rows
                .iter()
                .copied()
                .filter(|&r| solved[r].is_none())
                .collect();
            let known: f64 = eq.rows.iter().filter_map(|&r| solved[r]).sum();
            match unknown.as_slice() {
                [] => {
                    let residual = known / eq.rows.len() as f64 - eq.mean;
                    if residual.abs() > CONSISTENCY_TOLERANCE {
                        return Err(ModelError::InconsistentTargets(format!(
                            "scenario `{}` on `{child}` is off by {residual:.4}",
                            eq.scenario
                        )));
                    }
                }
                [row] => {
                    let value = eq.mean * eq.rows.len() as f64 - known;
                    if !(-1e-12..=1.0 + 1e-12).contains(&value) {
                        return Err(ModelError::InconsistentTargets(format!(
                            "scenario `{}` forces `{child}` row {row} to {value:.4}",
                            eq.scenario
                        )));
                    }
                    solved[*row] = Some(value.clamp(0.0, 1.0));
                }
                _ => deferred.push(eq),
            }
        }
        pending = deferred;
        if pending.is_empty() || pending.len() == before {
            break;
        }
    }
    let mut out = [0.0; 4];
    for (r, v) in solved.iter().enumerate() {
        out[r] = v.ok_or_else(|| {
            ModelError::InconsistentTargets(format!(
                "`{child}` row {r} is not determined by the scenarios"
            ))
        })?;
    }
    Ok(out)
}
