use super::factor::Factor;
use super::{BnError, Evidence, Network, Posterior};

/// Exact posterior of `target` given hard evidence, by variable elimination.
///
/// Nodes that are neither ancestors of the target nor of any evidence are
/// dropped first; their factors sum to one. The remaining non-query,
/// non-evidence nodes are eliminated in ascending topological rank. The
/// network's canonical node order makes this independent of the order in
/// which nodes were declared.
pub fn query(net: &Network, evidence: &Evidence, target: &str) -> Result<Posterior, BnError> {
    let target_idx = net.index_of(target)?;
    let observed = evidence.resolve(net)?;
    let relevant = ancestral_set(net, target_idx, &observed);

    let mut factors: Vec<Factor> = (0..net.len())
        .filter(|&i| relevant[i])
        .map(|i| cpt_factor(net, i, &observed))
        .collect();

    for var in 0..net.len() {
        if var == target_idx || observed[var].is_some() || !relevant[var] {
            continue;
        }
        let mut joined: Option<Factor> = None;
        let mut i = 0;
        while i < factors.len() {
            if factors[i].contains(var) {
                let f = factors.remove(i);
                joined = Some(match joined {
                    Some(acc) => acc.product(&f),
                    None => f,
                });
            } else {
                i += 1;
            }
        }
        if let Some(joined) = joined {
            factors.push(joined.sum_out(var));
        }
    }

    let joint = factors
        .into_iter()
        .reduce(|acc, f| acc.product(&f))
        .unwrap_or_else(|| Factor::scalar(1.0));
    match observed[target_idx] {
        Some(state) => {
            // joint is the scalar P(evidence)
            if joint.total().is_nan() || joint.total() <= 0.0 {
                return Err(BnError::ImpossibleEvidence);
            }
            let mut weights = vec![0.0; net.card(target_idx)];
            weights[state] = 1.0;
            Posterior::from_weights(net, target_idx, &weights)
        }
        None => {
            debug_assert_eq!(joint.vars, vec![target_idx]);
            Posterior::from_weights(net, target_idx, &joint.values)
        }
    }
}

/// The target, the evidence nodes and all their ancestors.
fn ancestral_set(net: &Network, target: usize, observed: &[Option<usize>]) -> Vec<bool> {
    let mut keep = vec![false; net.len()];
    let mut stack: Vec<usize> = std::iter::once(target)
        .chain((0..net.len()).filter(|&i| observed[i].is_some()))
        .collect();
    while let Some(v) = stack.pop() {
        if !keep[v] {
            keep[v] = true;
            stack.extend(net.nodes[v].parents.iter().copied());
        }
    }
    keep
}

/// The node's CPT as a factor over its unobserved members of {node, parents}.
fn cpt_factor(net: &Network, idx: usize, observed: &[Option<usize>]) -> Factor {
    let node = &net.nodes[idx];
    let mut scope: Vec<usize> = node
        .parents
        .iter()
        .copied()
        .chain(std::iter::once(idx))
        .collect();
    scope.sort_unstable();
    let free: Vec<usize> = scope
        .into_iter()
        .filter(|&v| observed[v].is_none())
        .collect();
    let cards: Vec<usize> = free.iter().map(|&v| net.card(v)).collect();
    let own_card = node.states.len();
    Factor::tabulate(free.clone(), cards, |assignment| {
        let state_of = |v: usize| match observed[v] {
            Some(s) => s,
            None => assignment[free.binary_search(&v).expect("in scope")],
        };
        let mut row = 0;
        for &p in &node.parents {
            row = row * net.card(p) + state_of(p);
        }
        node.cpt[row * own_card + state_of(idx)]
    })
}
