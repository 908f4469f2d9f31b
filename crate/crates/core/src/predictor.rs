//! Influence predictors: models of the source distribution given a local
//! history.

use rand::Rng;
use smallvec::SmallVec;

use crate::model::{ActionId, LocalHistory, LocalState, SimRng, SourceValue};

/// Predicted distribution over source values, either factorised per source
/// variable or as a joint table in mixed-radix order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SourceDistribution {
    cards: SmallVec<[usize; 4]>,
    factored: bool,
    probs: Vec<f64>,
}

impl SourceDistribution {
    pub fn uniform(cards: &[usize]) -> Self {
        let mut d = SourceDistribution::default();
        for (slot, c) in d.reset_factored(cards).iter_mut().zip(expand(cards)) {
            *slot = 1.0 / c as f64;
        }
        d
    }

    pub fn from_joint(cards: &[usize], probs: Vec<f64>) -> Self {
        assert_eq!(probs.len(), cards.iter().product::<usize>());
        SourceDistribution {
            cards: SmallVec::from_slice(cards),
            factored: false,
            probs,
        }
    }

    /// Prepares a factorised layout and returns the per-variable probability
    /// slots, concatenated in variable order.
    pub fn reset_factored(&mut self, cards: &[usize]) -> &mut [f64] {
        self.cards.clear();
        self.cards.extend_from_slice(cards);
        self.factored = true;
        self.probs.clear();
        self.probs.resize(cards.iter().sum(), 0.0);
        &mut self.probs
    }

    pub fn reset_joint(&mut self, cards: &[usize]) -> &mut [f64] {
        self.cards.clear();
        self.cards.extend_from_slice(cards);
        self.factored = false;
        self.probs.clear();
        self.probs.resize(cards.iter().product(), 0.0);
        &mut self.probs
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn is_factored(&self) -> bool {
        self.factored
    }

    pub fn prob(&self, v: &SourceValue) -> f64 {
        if self.factored {
            let mut p = 1.0;
            let mut offset = 0;
            for (&x, &c) in v.values().iter().zip(&self.cards) {
                p *= self.probs[offset + x as usize];
                offset += c;
            }
            p
        } else {
            self.probs[v.joint_index(&self.cards)]
        }
    }

    pub fn log_prob(&self, v: &SourceValue) -> f64 {
        if self.factored {
            let mut lp = 0.0;
            let mut offset = 0;
            for (&x, &c) in v.values().iter().zip(&self.cards) {
                lp += self.probs[offset + x as usize].ln();
                offset += c;
            }
            lp
        } else {
            self.probs[v.joint_index(&self.cards)].ln()
        }
    }

    pub fn sample(&self, rng: &mut SimRng) -> SourceValue {
        if self.factored {
            let mut values = SmallVec::with_capacity(self.cards.len());
            let mut offset = 0;
            for &c in &self.cards {
                values.push(sample_index(&self.probs[offset..offset + c], rng) as u16);
                offset += c;
            }
            SourceValue(values)
        } else {
            SourceValue::from_joint_index(sample_index(&self.probs, rng), &self.cards)
        }
    }

    /// Joint probability table in mixed-radix order.
    pub fn joint_probs(&self) -> Vec<f64> {
        if !self.factored {
            return self.probs.clone();
        }
        let n: usize = self.cards.iter().product();
        (0..n)
            .map(|i| self.prob(&SourceValue::from_joint_index(i, &self.cards)))
            .collect()
    }
}

fn expand(cards: &[usize]) -> impl Iterator<Item = usize> + '_ {
    cards.iter().flat_map(|&c| std::iter::repeat_n(c, c))
}

/// Inverse-CDF draw; rounding slack falls to the last category.
pub fn sample_index(probs: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// A model of `I(s_src | d_k)`.
///
/// Predictors carry a hidden vector that summarises the history consumed so
/// far; history-based predictors may keep it empty and read `history` instead.
pub trait InfluencePredictor: Send + Sync {
    fn hidden_size(&self) -> usize;

    fn initial_hidden(&self) -> Vec<f64> {
        vec![0.0; self.hidden_size()]
    }

    /// Consumes one history element: the previous action (none for the
    /// initial local state) and the local state it led to.
    fn advance(&self, hidden: &mut [f64], prev_action: Option<ActionId>, local: &LocalState);

    /// Distribution of the source value driving the next transition, given
    /// the hidden state after consuming `history`.
    fn source_distribution(&self, hidden: &[f64], history: &LocalHistory, out: &mut SourceDistribution);

    /// Hidden state after consuming the whole history.
    fn replay(&self, history: &LocalHistory) -> Vec<f64> {
        let mut hidden = self.initial_hidden();
        for (a, l) in history.inputs() {
            self.advance(&mut hidden, a, l);
        }
        hidden
    }
}

/// Uniform distribution regardless of history.
#[derive(Clone, Debug)]
pub struct UniformPredictor {
    cards: Vec<usize>,
}

impl UniformPredictor {
    pub fn new(source_cards: &[usize]) -> Self {
        UniformPredictor {
            cards: source_cards.to_vec(),
        }
    }
}

impl InfluencePredictor for UniformPredictor {
    fn hidden_size(&self) -> usize {
        0
    }

    fn advance(&self, _hidden: &mut [f64], _prev_action: Option<ActionId>, _local: &LocalState) {}

    fn source_distribution(&self, _hidden: &[f64], _history: &LocalHistory, out: &mut SourceDistribution) {
        for (slot, c) in out.reset_factored(&self.cards).iter_mut().zip(expand(&self.cards)) {
            *slot = 1.0 / c as f64;
        }
    }
}
