//! Tiny domains used to sanity-check the search machinery.

use rand::Rng;

use crate::model::{
    ActionId, Domain, FactoredState, GlobalStep, LocalState, LocalStep, SimRng, SourceValue,
};

/// Single-step bandit with Bernoulli rewards and one uninformative
/// observation.
#[derive(Clone, Debug)]
pub struct NoisyBandit {
    means: Vec<f64>,
}

impl NoisyBandit {
    pub fn new(means: Vec<f64>) -> Self {
        assert!(!means.is_empty());
        assert!(means.iter().all(|p| (0.0..=1.0).contains(p)));
        NoisyBandit { means }
    }
}

const ONE: [usize; 1] = [1];

impl Domain for NoisyBandit {
    fn name(&self) -> &str {
        "bandit"
    }
    fn num_actions(&self) -> usize {
        self.means.len()
    }
    fn num_observations(&self) -> usize {
        1
    }
    fn horizon(&self) -> usize {
        1
    }
    fn state_cardinalities(&self) -> Vec<usize> {
        vec![2]
    }
    fn local_cardinalities(&self) -> &[usize] {
        &ONE
    }
    fn source_cardinalities(&self) -> &[usize] {
        &ONE
    }
    fn sample_initial(&self, _rng: &mut SimRng) -> FactoredState {
        FactoredState(vec![0])
    }
    fn project_local(&self, _s: &FactoredState) -> LocalState {
        LocalState::from_slice(&[0])
    }
    fn sample_source(&self, _s: &FactoredState, _a: ActionId, _rng: &mut SimRng) -> SourceValue {
        SourceValue::from_slice(&[0])
    }
    fn step_local(
        &self,
        _local: &LocalState,
        _source: &SourceValue,
        a: ActionId,
        rng: &mut SimRng,
    ) -> LocalStep {
        LocalStep {
            next: LocalState::from_slice(&[0]),
            observation: 0,
            reward: rng.random_bool(self.means[a]) as u8 as f64,
        }
    }
    fn step_global(&self, s: &FactoredState, a: ActionId, rng: &mut SimRng) -> GlobalStep {
        let reward = rng.random_bool(self.means[a]) as u8 as f64;
        GlobalStep {
            next: FactoredState(vec![(s.0[0] + 1).min(1)]),
            observation: 0,
            reward,
            source: SourceValue::from_slice(&[0]),
        }
    }
    fn source_entropy(&self, _s: &FactoredState, _a: ActionId) -> f64 {
        0.0
    }
}

/// Deterministic chain: the observation echoes the action and action 0 pays 1.
/// The local state is the last action taken (2 for "none yet").
#[derive(Clone, Debug)]
pub struct EchoChain {
    horizon: usize,
    local_cards: [usize; 1],
}

impl EchoChain {
    pub fn new(horizon: usize) -> Self {
        EchoChain {
            horizon,
            local_cards: [3],
        }
    }
}

impl Domain for EchoChain {
    fn name(&self) -> &str {
        "echo"
    }
    fn num_actions(&self) -> usize {
        2
    }
    fn num_observations(&self) -> usize {
        2
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn state_cardinalities(&self) -> Vec<usize> {
        vec![self.horizon + 1, 3]
    }
    fn local_cardinalities(&self) -> &[usize] {
        &self.local_cards
    }
    fn source_cardinalities(&self) -> &[usize] {
        &ONE
    }
    fn sample_initial(&self, _rng: &mut SimRng) -> FactoredState {
        FactoredState(vec![0, 2])
    }
    fn project_local(&self, s: &FactoredState) -> LocalState {
        LocalState::from_slice(&s.0[1..2])
    }
    fn sample_source(&self, _s: &FactoredState, _a: ActionId, _rng: &mut SimRng) -> SourceValue {
        SourceValue::from_slice(&[0])
    }
    fn step_local(
        &self,
        _local: &LocalState,
        _source: &SourceValue,
        a: ActionId,
        _rng: &mut SimRng,
    ) -> LocalStep {
        LocalStep {
            next: LocalState::from_slice(&[a as u16]),
            observation: a,
            reward: (a == 0) as u8 as f64,
        }
    }
    fn step_global(&self, s: &FactoredState, a: ActionId, _rng: &mut SimRng) -> GlobalStep {
        GlobalStep {
            next: FactoredState(vec![s.0[0] + 1, a as u16]),
            observation: a,
            reward: (a == 0) as u8 as f64,
            source: SourceValue::from_slice(&[0]),
        }
    }
    fn source_entropy(&self, _s: &FactoredState, _a: ActionId) -> f64 {
        0.0
    }
}
