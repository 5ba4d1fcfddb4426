//! Bounded least-squares fit of the overall network's CPTs.
//!
//! The overall model has more free CPT entries than published targets, so
//! the entries are chosen by Levenberg-Marquardt on residuals scaled by each
//! target's tolerance. Rows whose parents are all observed by some scenario
//! (with no evidence below the node) are pinned directly instead. Entries
//! stay in [0, 1] by projection with an active set at the bounds.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::derive::{derive_submodel_cpts, SubmodelCpts};
use super::scenario::{ModelKind, ScenarioSet};
use super::{
    financial_incentive_class, ids, overall_master, supplier_profile_class, FinanceModel,
    ModelError,
};
use crate::bn::{query, Network, NetworkSpec};
use crate::oobn::flatten;

/// P(first state | parent row) for each fitted master node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverallCpts {
    /// Rows over (SupplierProfile, FinancialIncentive).
    pub acceptable_risk: [f64; 4],
    /// Rows over PerceptionOfRisk.
    pub fund: [f64; 2],
    /// Rows over (FinancingDecision, LowerTierFunded).
    pub stable: [f64; 4],
}

impl OverallCpts {
    pub const fn uniform() -> Self {
        OverallCpts {
            acceptable_risk: [0.5; 4],
            fund: [0.5; 2],
            stable: [0.5; 4],
        }
    }

    fn slots() -> Vec<(&'static str, usize)> {
        let mut v = Vec::new();
        v.extend((0..4).map(|r| (ids::PERCEPTION_OF_RISK, r)));
        v.extend((0..2).map(|r| (ids::FINANCING_DECISION, r)));
        v.extend((0..4).map(|r| (ids::SUPPLY_CHAIN_STABILITY, r)));
        v
    }

    fn from_slice(v: &[f64]) -> Self {
        OverallCpts {
            acceptable_risk: [v[0], v[1], v[2], v[3]],
            fund: [v[4], v[5]],
            stable: [v[6], v[7], v[8], v[9]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Largest accepted absolute residual over all targets.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Initial value of every free entry.
    pub start: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tolerance: 0.01,
            max_iterations: 200,
            start: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResidual {
    pub scenario: String,
    pub node: String,
    pub state: String,
    pub expected: f64,
    pub tolerance: f64,
    pub actual: f64,
    pub pinned: bool,
}

impl FitResidual {
    pub fn residual(&self) -> f64 {
        self.actual - self.expected
    }

    pub fn within_tolerance(&self) -> bool {
        self.residual().abs() <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub max_abs_residual: f64,
    pub cpts: OverallCpts,
    pub residuals: Vec<FitResidual>,
}

impl FitReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        for r in &self.residuals {
            let _ = writeln!(
                out,
                "{:<34} {:<22} {:<16} expected {:.4} actual {:.6} residual {:+.2e}{}",
                r.scenario,
                r.node,
                r.state,
                r.expected,
                r.actual,
                r.residual(),
                if r.pinned { " (pinned)" } else { "" }
            );
        }
        out
    }
}

struct Target {
    scenario: String,
    evidence: crate::bn::Evidence,
    node: String,
    state: String,
    expected: f64,
    tolerance: f64,
    pinned: bool,
}

struct Problem {
    sub: SubmodelCpts,
    targets: Vec<Target>,
    /// Index into the full parameter vector for each free entry.
    free: Vec<usize>,
    fixed: Vec<f64>,
}

impl Problem {
    fn params(&self, free: &[f64]) -> Vec<f64> {
        let mut all = self.fixed.clone();
        for (&slot, &v) in self.free.iter().zip(free) {
            all[slot] = v;
        }
        all
    }

    fn network(&self, all: &[f64]) -> Result<Network, ModelError> {
        Ok(Network::build(&overall_spec(
            &self.sub,
            &OverallCpts::from_slice(all),
        )?)?)
    }

    fn evaluate(&self, all: &[f64]) -> Result<Vec<f64>, ModelError> {
        let net = self.network(all)?;
        self.targets
            .iter()
            .map(|t| {
                let p = query(&net, &t.evidence, &t.node)?;
                Ok(p.probability(&t.state).expect("validated state"))
            })
            .collect()
    }

    /// Tolerance-scaled residuals of the unpinned targets.
    fn residuals(&self, free: &[f64]) -> Result<DVector<f64>, ModelError> {
        let actual = self.evaluate(&self.params(free))?;
        let scaled: Vec<f64> = self
            .targets
            .iter()
            .zip(actual)
            .filter(|(t, _)| !t.pinned)
            .map(|(t, a)| (a - t.expected) / t.tolerance.max(1e-12))
            .collect();
        Ok(DVector::from_vec(scaled))
    }
}

fn overall_spec(sub: &SubmodelCpts, cpts: &OverallCpts) -> Result<NetworkSpec, ModelError> {
    let master = overall_master(
        supplier_profile_class(sub.low_risk),
        financial_incentive_class(sub.compelling),
        cpts,
    );
    Ok(flatten(&master)?)
}

pub fn fit_overall_cpts(
    sub: &SubmodelCpts,
    scenarios: &ScenarioSet,
    opts: &FitOptions,
) -> Result<FitReport, ModelError> {
    let template = Network::build(&overall_spec(sub, &OverallCpts::uniform())?)?;
    let slots = OverallCpts::slots();
    let mut fixed = vec![opts.start; slots.len()];
    let mut pinned_slots = vec![false; slots.len()];

    let mut targets = Vec::new();
    for s in scenarios.for_model(ModelKind::Overall) {
        for t in &s.targets {
            let states = template.states(&t.node)?;
            let state_idx = states.iter().position(|x| *x == t.state).ok_or_else(|| {
                crate::bn::BnError::UnknownState {
                    node: t.node.clone(),
                    state: t.state.clone(),
                }
            })?;
            let pin = pinned_row(&template, &s.evidence, &t.node)?;
            let pinned = match pin
                .and_then(|row| slots.iter().position(|&(n, r)| n == t.node && r == row))
            {
                Some(slot) => {
                    let first = if state_idx == 0 {
                        t.expected
                    } else {
                        1.0 - t.expected
                    };
                    fixed[slot] = first;
                    pinned_slots[slot] = true;
                    true
                }
                None => false,
            };
            targets.push(Target {
                scenario: s.name.clone(),
                evidence: s.evidence.clone(),
                node: t.node.clone(),
                state: t.state.clone(),
                expected: t.expected,
                tolerance: t.tolerance,
                pinned,
            });
        }
    }
    let free: Vec<usize> = (0..slots.len()).filter(|&i| !pinned_slots[i]).collect();
    let problem = Problem {
        sub: *sub,
        targets,
        free,
        fixed,
    };

    let start: Vec<f64> = problem.free.iter().map(|_| opts.start).collect();
    let (solution, iterations) = levenberg_marquardt(&problem, start, opts.max_iterations)?;

    let all = problem.params(&solution);
    let actual = problem.evaluate(&all)?;
    let residuals: Vec<FitResidual> = problem
        .targets
        .iter()
        .zip(actual)
        .map(|(t, a)| FitResidual {
            scenario: t.scenario.clone(),
            node: t.node.clone(),
            state: t.state.clone(),
            expected: t.expected,
            tolerance: t.tolerance,
            actual: a,
            pinned: t.pinned,
        })
        .collect();
    let max_abs_residual = residuals
        .iter()
        .map(|r| r.residual().abs())
        .fold(0.0, f64::max);
    let report = FitReport {
        iterations,
        max_abs_residual,
        cpts: OverallCpts::from_slice(&all),
        residuals,
    };
    if max_abs_residual > opts.tolerance
        || !report.residuals.iter().all(FitResidual::within_tolerance)
    {
        return Err(ModelError::FitFailed(Box::new(report)));
    }
    Ok(report)
}

/// Row of `node` fixed by evidence on all of its parents, provided no
/// evidence sits on the node or below it.
fn pinned_row(
    net: &Network,
    evidence: &crate::bn::Evidence,
    node: &str,
) -> Result<Option<usize>, ModelError> {
    let parents = net.parents(node)?;
    if parents.is_empty() || evidence.get(node).is_some() {
        return Ok(None);
    }
    let mut row = 0;
    for p in &parents {
        let Some(state) = evidence.get(p) else {
            return Ok(None);
        };
        let states = net.states(p)?;
        let idx = states.iter().position(|s| s == state).ok_or_else(|| {
            crate::bn::BnError::UnknownState {
                node: p.to_string(),
                state: state.to_string(),
            }
        })?;
        row = row * states.len() + idx;
    }
    let mut frontier = vec![node.to_string()];
    while let Some(n) = frontier.pop() {
        for id in net.topological_order() {
            if net.parents(id)?.contains(&n.as_str()) {
                if evidence.get(id).is_some() {
                    return Ok(None);
                }
                frontier.push(id.to_string());
            }
        }
    }
    Ok(Some(row))
}

fn jacobian(problem: &Problem, x: &[f64], r: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
    const H: f64 = 1e-7;
    let mut jac = DMatrix::zeros(r.len(), x.len());
    for j in 0..x.len() {
        let lo = (x[j] - H).max(0.0);
        let hi = (x[j] + H).min(1.0);
        let mut xl = x.to_vec();
        let mut xh = x.to_vec();
        xl[j] = lo;
        xh[j] = hi;
        let rl = problem.residuals(&xl)?;
        let rh = problem.residuals(&xh)?;
        jac.set_column(j, &((rh - rl) / (hi - lo)));
    }
    Ok(jac)
}

fn levenberg_marquardt(
    problem: &Problem,
    mut x: Vec<f64>,
    budget: usize,
) -> Result<(Vec<f64>, usize), ModelError> {
    if x.is_empty() {
        return Ok((x, 0));
    }
    let mut r = problem.residuals(&x)?;
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < budget {
        iterations += 1;
        let jac = jacobian(problem, &x, &r)?;
        let grad = jac.transpose() * &r;
        // entries pressed against a bound by the gradient stay put
        let active: Vec<usize> = (0..x.len())
            .filter(|&i| !((x[i] <= 0.0 && grad[i] > 0.0) || (x[i] >= 1.0 && grad[i] < 0.0)))
            .collect();
        if active.is_empty() || grad.norm() < 1e-14 {
            break;
        }
        let jac_a = jac.select_columns(&active);
        let normal = jac_a.transpose() * &jac_a;
        let grad_a = jac_a.transpose() * &r;

        let mut improved = false;
        while lambda < 1e16 {
            let mut damped = normal.clone();
            for i in 0..active.len() {
                damped[(i, i)] += lambda * (normal[(i, i)] + 1e-9);
            }
            let Some(step) = damped.lu().solve(&(-&grad_a)) else {
                lambda *= 4.0;
                continue;
            };
            let mut candidate = x.clone();
            for (k, &i) in active.iter().enumerate() {
                candidate[i] = (x[i] + step[k]).clamp(0.0, 1.0);
            }
            let r_new = problem.residuals(&candidate)?;
            let cost_new = r_new.norm_squared();
            if cost_new < cost {
                let gain = cost - cost_new;
                x = candidate;
                r = r_new;
                cost = cost_new;
                lambda = (lambda / 3.0).max(1e-12);
                improved = gain > 1e-24 * (1.0 + cost);
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    Ok((x, iterations))
}

/// Derive the sub-models, fit the overall model and assemble all three.
pub fn fit_model(
    scenarios: &ScenarioSet,
    opts: &FitOptions,
) -> Result<(FinanceModel, FitReport), ModelError> {
    let sub = derive_submodel_cpts(scenarios)?;
    let report = fit_overall_cpts(&sub, scenarios, opts)?;
    let master = overall_master(
        supplier_profile_class(sub.low_risk),
        financial_incentive_class(sub.compelling),
        &report.cpts,
    );
    Ok((FinanceModel::from_master(master)?, report))
}
