//! Contracts shared by every factored POMDP in the crate.
//!
//! A domain exposes two ways of simulating one time step. The global
//! simulator samples the full factored state. The local simulator only
//! advances the variables that drive the agent's observation and reward, and
//! needs the influence-source value as an explicit input. Both paths must
//! induce the same distribution over `(local', observation, reward)` when the
//! source value is drawn from its exact conditional.
//!
//! Entropies are in nats throughout.

use std::fmt;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

pub type ActionId = usize;
pub type ObservationId = usize;
pub type Reward = f64;

/// The random stream type threaded through every stochastic operation.
pub type SimRng = ChaCha8Rng;

/// Full assignment of the domain's state variables. The layout is owned by
/// the domain.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FactoredState(pub Vec<u16>);

/// Projection of a [`FactoredState`] onto the local variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocalState(pub SmallVec<[u16; 8]>);

/// One value per influence-source variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceValue(pub SmallVec<[u16; 4]>);

impl LocalState {
    pub fn from_slice(values: &[u16]) -> Self {
        LocalState(SmallVec::from_slice(values))
    }

    pub fn values(&self) -> &[u16] {
        &self.0
    }
}

impl SourceValue {
    pub fn from_slice(values: &[u16]) -> Self {
        SourceValue(SmallVec::from_slice(values))
    }

    pub fn values(&self) -> &[u16] {
        &self.0
    }

    /// Mixed-radix index of this value, first variable most significant.
    pub fn joint_index(&self, cards: &[usize]) -> usize {
        self.0
            .iter()
            .zip(cards)
            .fold(0, |acc, (&v, &c)| acc * c + v as usize)
    }

    pub fn from_joint_index(mut index: usize, cards: &[usize]) -> Self {
        let mut values: SmallVec<[u16; 4]> = SmallVec::from_elem(0, cards.len());
        for (slot, &c) in values.iter_mut().zip(cards).rev() {
            *slot = (index % c) as u16;
            index /= c;
        }
        SourceValue(values)
    }
}

impl FactoredState {
    pub fn values(&self) -> &[u16] {
        &self.0
    }
}

/// Local history `d_k`: the initial local state followed by
/// `(action, next local state)` pairs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocalHistory {
    pub initial: LocalState,
    pub steps: Vec<(ActionId, LocalState)>,
}

impl LocalHistory {
    pub fn new(initial: LocalState) -> Self {
        LocalHistory {
            initial,
            steps: Vec::new(),
        }
    }

    /// Number of local states in the history (one more than the step count).
    pub fn len(&self) -> usize {
        1 + self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn last_local(&self) -> &LocalState {
        self.steps.last().map_or(&self.initial, |(_, l)| l)
    }

    /// Returns the extended history; `self` is left untouched.
    pub fn appended(&self, action: ActionId, next_local: LocalState) -> LocalHistory {
        let mut out = self.clone();
        out.push(action, next_local);
        out
    }

    pub fn push(&mut self, action: ActionId, next_local: LocalState) {
        self.steps.push((action, next_local));
    }

    /// Iterates over the predictor inputs: `(previous action, local state)`,
    /// with no action for the initial local state.
    pub fn inputs(&self) -> impl Iterator<Item = (Option<ActionId>, &LocalState)> {
        std::iter::once((None, &self.initial))
            .chain(self.steps.iter().map(|(a, l)| (Some(*a), l)))
    }
}

/// Belief particle: a global state together with the local history that
/// produced it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AugmentedParticle {
    pub global: FactoredState,
    pub history: LocalHistory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Global,
    Ials,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Global => f.write_str("GS"),
            Origin::Ials => f.write_str("IALS"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEntry {
    pub action: ActionId,
    /// Local state reached by this step.
    pub local: LocalState,
    pub observation: ObservationId,
    pub reward: Reward,
    /// Source value that drove this step; only recorded by the global simulator.
    pub source: Option<SourceValue>,
    /// Global state the step started from; only recorded by the global simulator.
    pub prev_global: Option<FactoredState>,
}

/// One simulated trajectory as produced by a single search simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub origin: Origin,
    pub start_step: usize,
    pub start_history: LocalHistory,
    pub entries: Vec<TrajectoryEntry>,
    /// Global state after the last entry (global origin only).
    pub final_global: Option<FactoredState>,
}

impl TrajectoryRecord {
    /// Global state reached after `k` entries, if recorded.
    pub fn global_at(&self, k: usize) -> Option<&FactoredState> {
        if k < self.entries.len() {
            self.entries[k].prev_global.as_ref()
        } else if k == self.entries.len() {
            self.final_global.as_ref()
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalStep {
    pub next: FactoredState,
    pub observation: ObservationId,
    pub reward: Reward,
    pub source: SourceValue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalStep {
    pub next: LocalState,
    pub observation: ObservationId,
    pub reward: Reward,
}

/// Capability contract of a factored POMDP.
pub trait Domain: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn num_actions(&self) -> usize;
    fn num_observations(&self) -> usize;
    fn horizon(&self) -> usize;

    /// Cardinality of every global state variable.
    fn state_cardinalities(&self) -> Vec<usize>;
    fn local_cardinalities(&self) -> &[usize];
    fn source_cardinalities(&self) -> &[usize];

    fn sample_initial(&self, rng: &mut SimRng) -> FactoredState;
    fn project_local(&self, s: &FactoredState) -> LocalState;

    /// Samples the source variables that drive the transition out of `s`
    /// under action `a`, from their exact conditional.
    fn sample_source(&self, s: &FactoredState, a: ActionId, rng: &mut SimRng) -> SourceValue;

    fn step_local(
        &self,
        local: &LocalState,
        source: &SourceValue,
        a: ActionId,
        rng: &mut SimRng,
    ) -> LocalStep;

    fn step_global(&self, s: &FactoredState, a: ActionId, rng: &mut SimRng) -> GlobalStep;

    /// Conditional entropy (nats) of the source variables given `(s, a)`.
    fn source_entropy(&self, s: &FactoredState, a: ActionId) -> f64;

    fn max_source_entropy(&self) -> f64 {
        self.source_cardinalities()
            .iter()
            .map(|&c| (c as f64).ln())
            .sum()
    }

    fn is_valid_state(&self, s: &FactoredState) -> bool {
        let cards = self.state_cardinalities();
        s.0.len() == cards.len() && s.0.iter().zip(&cards).all(|(&v, &c)| (v as usize) < c)
    }

    fn initial_particle(&self, rng: &mut SimRng) -> AugmentedParticle {
        let global = self.sample_initial(rng);
        let history = LocalHistory::new(self.project_local(&global));
        AugmentedParticle { global, history }
    }
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.ln();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).ln();
    }
    h
}

/// Entropy in nats of a discrete distribution.
pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn local(v: u16) -> LocalState {
        LocalState::from_slice(&[v])
    }

    #[test]
    fn append_leaves_input_unchanged() {
        let d = LocalHistory::new(local(0));
        let e = d.appended(1, local(1));
        assert_eq!(d.num_steps(), 0);
        assert_eq!(e.num_steps(), 1);
        assert_eq!(e.len(), 2);
        assert_eq!(e.initial, d.initial);
        assert_eq!(e.last_local(), &local(1));
    }

    #[test]
    fn inputs_start_with_null_action() {
        let d = LocalHistory::new(local(0)).appended(1, local(1));
        let inputs: Vec<_> = d.inputs().collect();
        assert_eq!(inputs, vec![(None, &local(0)), (Some(1), &local(1))]);
    }

    #[test]
    fn binary_entropy_values() {
        assert!((binary_entropy(0.5) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        let h = binary_entropy(0.2) + binary_entropy(0.5);
        assert!((h - 1.193_5).abs() < 1e-4);
    }

    #[test]
    fn joint_index_round_trip() {
        let cards = [2, 3, 2];
        for i in 0..12 {
            let v = SourceValue::from_joint_index(i, &cards);
            assert_eq!(v.joint_index(&cards), i);
        }
        assert_eq!(SourceValue::from_slice(&[1, 0]).joint_index(&[2, 2]), 2);
    }
}
