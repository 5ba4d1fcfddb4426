use super::factor::advance;
use super::{BnError, Evidence, Network, Posterior};

/// Largest joint state space the enumeration oracle accepts.
pub const MAX_JOINT_STATES: u128 = 1 << 20;

/// Posterior by brute-force summation of the full joint distribution.
///
/// Shares no code with variable elimination beyond the validated network
/// itself, so agreement between the two is meaningful.
pub fn enumerate_joint(
    net: &Network,
    evidence: &Evidence,
    target: &str,
) -> Result<Posterior, BnError> {
    let target_idx = net.index_of(target)?;
    let weights = joint_weights(net, evidence)?;
    Posterior::from_weights(net, target_idx, &weights[target_idx])
}

/// Posteriors of every node, in declaration order, from one pass over the
/// joint.
pub fn enumerate_marginals(net: &Network, evidence: &Evidence) -> Result<Vec<Posterior>, BnError> {
    let weights = joint_weights(net, evidence)?;
    weights
        .iter()
        .enumerate()
        .map(|(i, w)| Posterior::from_weights(net, i, w))
        .collect()
}

/// Unnormalized marginal weights of every node under `evidence`.
///
/// Observed nodes stay fixed; only the remaining nodes are enumerated.
fn joint_weights(net: &Network, evidence: &Evidence) -> Result<Vec<Vec<f64>>, BnError> {
    let size = net.joint_size();
    if size > MAX_JOINT_STATES {
        return Err(BnError::StateSpaceTooLarge {
            size,
            limit: MAX_JOINT_STATES,
        });
    }
    let observed = evidence.resolve(net)?;
    let cards: Vec<usize> = net.nodes.iter().map(|n| n.states.len()).collect();
    let free_cards: Vec<usize> = cards
        .iter()
        .zip(&observed)
        .map(|(&c, o)| if o.is_some() { 1 } else { c })
        .collect();
    let rows: usize = free_cards.iter().product();

    let mut weights: Vec<Vec<f64>> = cards.iter().map(|&c| vec![0.0; c]).collect();
    let mut counter = vec![0usize; net.len()];
    let mut assignment = vec![0usize; net.len()];
    for _ in 0..rows {
        for (i, a) in assignment.iter_mut().enumerate() {
            *a = observed[i].unwrap_or(counter[i]);
        }
        let mut p = 1.0;
        for (i, node) in net.nodes.iter().enumerate() {
            let row = node
                .parents
                .iter()
                .fold(0, |row, &q| row * cards[q] + assignment[q]);
            p *= node.cpt[row * cards[i] + assignment[i]];
        }
        for (w, &a) in weights.iter_mut().zip(&assignment) {
            w[a] += p;
        }
        advance(&mut counter, &free_cards);
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::{NetworkSpec, NodeSpec};

    #[test]
    fn evidence_on_target_gives_degenerate_posterior() {
        let net = Network::build(&NetworkSpec::new(vec![NodeSpec::root(
            "A",
            "",
            &["x", "y", "z"],
            &[0.2, 0.3, 0.5],
        )]))
        .unwrap();
        let p = enumerate_joint(&net, &Evidence::new().with("A", "z"), "A").unwrap();
        assert_eq!(p.probabilities(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn refuses_oversized_joint() {
        let nodes = (0..21)
            .map(|i| NodeSpec::root(&format!("N{i:02}"), "", &["a", "b"], &[0.5, 0.5]))
            .collect();
        let net = Network::build(&NetworkSpec::new(nodes)).unwrap();
        assert!(matches!(
            enumerate_joint(&net, &Evidence::new(), "N00"),
            Err(BnError::StateSpaceTooLarge { size, .. }) if size == 1 << 21
        ));
    }
}
