//! The n-step transition queue and the backward return recursion.

use std::collections::VecDeque;

use crate::env::Transition;

/// Bounded first-in-first-out queue of transitions, drained whole by each
/// backward sweep.
#[derive(Debug, Default)]
pub struct NStepBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl NStepBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "n-step buffer needs capacity >= 1");
        NStepBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, transition: Transition) {
        debug_assert!(self.items.len() < self.capacity, "sweep before overflow");
        self.items.push_back(transition);
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Empties the buffer, oldest transition first.
    pub fn drain(&mut self) -> Vec<Transition> {
        self.items.drain(..).collect()
    }
}

/// Backward-sweep targets for a reward window (oldest first): starting
/// from the bootstrap value, fold `R = r + gamma * R` newest to oldest and
/// record each intermediate. `targets[i]` is the return target of the
/// i-th (oldest-first) transition.
pub fn n_step_targets(rewards: &[f64], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut targets = vec![0.0; rewards.len()];
    let mut running = bootstrap;
    for (i, &r) in rewards.iter().enumerate().rev() {
        running = r + gamma * running;
        targets[i] = running;
    }
    targets
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_fold_matches_hand_arithmetic() {
        // Oldest target: -1 + 0.5(-2 + 0.5(-3)) = -2.75.
        let targets = n_step_targets(&[-1.0, -2.0, -3.0], 0.0, 0.5);
        assert_eq!(targets, vec![-2.75, -3.5, -3.0]);
    }

    #[test]
    fn zero_discount_collapses_to_rewards() {
        let targets = n_step_targets(&[-1.0, -2.0, -3.0], 99.0, 0.0);
        assert_eq!(targets, vec![-1.0, -2.0, -3.0]);
    }

    #[test]
    fn undiscounted_sum_over_full_window() {
        let rewards = vec![-1.0; 24];
        let targets = n_step_targets(&rewards, 0.0, 1.0);
        assert_eq!(targets[0], -24.0);
        assert_eq!(targets[23], -1.0);
    }

    #[test]
    fn bootstrap_discounted_through_every_target() {
        let targets = n_step_targets(&[0.0, 0.0], 8.0, 0.5);
        assert_eq!(targets, vec![2.0, 4.0]);
    }

    #[test]
    fn single_step_is_one_step_dqn_target() {
        let targets = n_step_targets(&[-5.0], 3.0, 0.9);
        assert_eq!(targets, vec![-5.0 + 0.9 * 3.0]);
    }
}
