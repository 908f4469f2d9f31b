//! Exact influence `I(s_src | d_k)` for small Grab-A-Chair instances, by
//! forward filtering over every joint fixed-agent action.

use std::collections::{BTreeMap, HashMap};

use crate::domains::gac::{GacConfig, GrabAChair, LEFT, RIGHT};
use crate::error::{Error, Result};
use crate::model::{ActionId, Domain, FactoredState, LocalHistory, LocalState, SimRng};
use crate::predictor::{InfluencePredictor, SourceDistribution};

pub const MAX_AGENTS: usize = 6;
pub const MAX_HORIZON: usize = 6;

type Belief = BTreeMap<FactoredState, f64>;

#[derive(Debug, Clone)]
pub struct ExactInfluence {
    tables: HashMap<LocalHistory, [f64; 4]>,
    source_cards: [usize; 2],
}

impl ExactInfluence {
    pub fn new(cfg: &GacConfig) -> Result<Self> {
        if cfg.n_fixed_agents > MAX_AGENTS || cfg.horizon > MAX_HORIZON {
            return Err(Error::EnumerationLimit {
                what: "exact influence",
                detail: format!(
                    "{} fixed agents, horizon {} (limits {MAX_AGENTS}, {MAX_HORIZON})",
                    cfg.n_fixed_agents, cfg.horizon
                ),
            });
        }
        let domain = GrabAChair::new(cfg.clone())?;
        let mut rng = <SimRng as rand::SeedableRng>::seed_from_u64(0);
        let s0 = domain.sample_initial(&mut rng);
        let d0 = LocalHistory::new(domain.project_local(&s0));
        let mut belief = Belief::new();
        belief.insert(s0, 1.0);

        let mut oracle = ExactInfluence {
            tables: HashMap::new(),
            source_cards: [2, 2],
        };
        oracle.expand(&domain, d0, &belief);
        Ok(oracle)
    }

    fn expand(&mut self, domain: &GrabAChair, d: LocalHistory, belief: &Belief) {
        let mut table = [0.0; 4];
        for (s, &w) in belief {
            let (p_l, p_r) = domain.source_probs(s);
            table[0] += w * (1.0 - p_l) * (1.0 - p_r);
            table[1] += w * (1.0 - p_l) * p_r;
            table[2] += w * p_l * (1.0 - p_r);
            table[3] += w * p_l * p_r;
        }
        let steps = d.num_steps();
        self.tables.insert(d.clone(), table);
        if steps + 1 >= domain.horizon() {
            return;
        }
        for a in [LEFT, RIGHT] {
            let [b0, b1] = successor_beliefs(domain, belief, a);
            for (outcome, b) in [(0u16, b0), (1u16, b1)] {
                if !b.is_empty() {
                    self.expand(domain, d.appended(a, LocalState::from_slice(&[outcome])), &b);
                }
            }
        }
    }

    /// Exact source table in `[src0 * 2 + src1]` order, or `None` for a
    /// history of probability zero.
    pub fn table(&self, d: &LocalHistory) -> Option<&[f64; 4]> {
        self.tables.get(d)
    }

    pub fn num_histories(&self) -> usize {
        self.tables.len()
    }
}

/// Posterior over global states after the planner takes `a`, split by the
/// planner's resulting outcome. Each returned belief is normalised.
fn successor_beliefs(domain: &GrabAChair, belief: &Belief, a: ActionId) -> [Belief; 2] {
    let n = domain.config().n_fixed_agents;
    let mut out = [Belief::new(), Belief::new()];
    let mut fixed = vec![LEFT; n];
    for (s, &w) in belief {
        let probs: Vec<f64> = (0..n).map(|j| domain.left_prob(s, j)).collect();
        for joint in 0..(1usize << n) {
            let mut p = w;
            for j in 0..n {
                let left = (joint >> j) & 1 == 0;
                fixed[j] = if left { LEFT } else { RIGHT };
                p *= if left { probs[j] } else { 1.0 - probs[j] };
            }
            if p == 0.0 {
                continue;
            }
            let (next, _) = domain.apply_joint(s, a, &fixed);
            let outcome = next.0[1] as usize;
            *out[outcome].entry(next).or_insert(0.0) += p;
        }
    }
    for b in out.iter_mut() {
        let total: f64 = b.values().sum();
        if total > 0.0 {
            b.values_mut().for_each(|v| *v /= total);
        }
    }
    out
}

impl InfluencePredictor for ExactInfluence {
    fn hidden_size(&self) -> usize {
        0
    }

    fn advance(&self, _hidden: &mut [f64], _prev_action: Option<ActionId>, _local: &LocalState) {}

    fn source_distribution(&self, _hidden: &[f64], history: &LocalHistory, out: &mut SourceDistribution) {
        let slots = out.reset_joint(&self.source_cards);
        match self.table(history) {
            Some(t) => slots.copy_from_slice(t),
            // unreachable history: nothing to condition on
            None => slots.fill(0.25),
        }
    }
}
