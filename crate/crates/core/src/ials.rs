//! Influence-augmented local simulator: local dynamics driven by source values
//! sampled from an influence predictor.

use crate::model::{ActionId, Domain, LocalHistory, LocalState, LocalStep, SimRng, SourceValue};
use crate::predictor::{InfluencePredictor, SourceDistribution};

#[derive(Clone, Debug, PartialEq)]
pub struct IalsState {
    pub local: LocalState,
    pub history: LocalHistory,
    /// Predictor hidden state after consuming `history`.
    pub hidden: Vec<f64>,
}

impl IalsState {
    /// Replays `history` through the predictor.
    pub fn reset(predictor: &dyn InfluencePredictor, history: LocalHistory) -> Self {
        let hidden = predictor.replay(&history);
        Self::with_hidden(history, hidden)
    }

    /// Builds a state from an already computed hidden vector.
    pub fn with_hidden(history: LocalHistory, hidden: Vec<f64>) -> Self {
        IalsState {
            local: history.last_local().clone(),
            history,
            hidden,
        }
    }

    /// Samples a source value from the predictor, applies the local model and
    /// advances the hidden state. `dist` is scratch space.
    pub fn step(
        &mut self,
        a: ActionId,
        domain: &dyn Domain,
        predictor: &dyn InfluencePredictor,
        dist: &mut SourceDistribution,
        rng: &mut SimRng,
    ) -> (LocalStep, SourceValue) {
        predictor.source_distribution(&self.hidden, &self.history, dist);
        let src = dist.sample(rng);
        let step = domain.step_local(&self.local, &src, a, rng);
        predictor.advance(&mut self.hidden, Some(a), &step.next);
        self.history.push(a, step.next.clone());
        self.local = step.next.clone();
        (step, src)
    }
}
