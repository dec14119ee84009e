//! Advantage actor-critic losses.

use super::graph::{Graph, NodeId};

/// `(actor_loss, critic_loss)` with advantage `target - value` held constant in the actor term.
pub fn a2c_losses(log_prob: f64, entropy: f64, value: f64, target: f64, beta: f64) -> (f64, f64) {
    let adv = target - value;
    (-log_prob * adv - beta * entropy, (value - target) * (value - target))
}

/// Bootstrapped one-step target `r + gamma * V(s')`, or `r` at terminal states.
pub fn td_target(reward: f64, gamma: f64, next_value: Option<f64>) -> f64 {
    reward + next_value.map_or(0.0, |v| gamma * v)
}

/// Graph form of [`a2c_losses`]. The advantage is read off the value node and
/// enters the actor loss as a constant.
pub fn a2c_loss_nodes(
    g: &mut Graph<'_>,
    log_prob: NodeId,
    entropy: NodeId,
    value: NodeId,
    target: f64,
    beta: f64,
) -> (NodeId, NodeId) {
    let adv = target - g.scalar(value);
    let pg = g.scale(log_prob, -adv);
    let ent = g.scale(entropy, -beta);
    let actor = g.add(pg, ent);
    let t = g.input(vec![target]);
    let diff = g.sub(value, t);
    let critic = g.square(diff);
    (actor, critic)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advantage_example() {
        let target = td_target(1.0, 0.98, Some(0.5));
        assert!((target - 1.0 - 0.49).abs() < 1e-12);
        let adv = target - 1.0;
        assert!((adv - 0.49).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cases() {
        let (_, critic) = a2c_losses(-0.3, 0.2, 1.7, 1.7, 0.01);
        assert_eq!(critic, 0.0);
        let (actor, _) = a2c_losses(-0.3, 0.0, 2.0, 2.0, 0.01);
        assert_eq!(actor, 0.0);
    }
}
