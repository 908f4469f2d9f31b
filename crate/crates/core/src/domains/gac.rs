//! Grab-A-Chair: one planning agent and `n_fixed_agents` fixed-policy agents
//! sit on a ring with one chair between every pair of neighbours. Each step
//! every agent targets its left or right chair; a chair is obtained iff the
//! other adjacent agent does not target it too.
//!
//! Ring position 0 is the planner and ring position `q >= 1` is fixed agent
//! `q - 1`. Position `q` sits between chair `q` (left) and chair `q + 1`
//! (right, modulo the ring size).
//!
//! State layout: `[step, planner_outcome, (succ_l, succ_r, att_l, att_r) per fixed agent]`.
//! The local state is the planner's outcome bit. The influence source is
//! `(left neighbour targets the shared chair, right neighbour targets the shared chair)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    binary_entropy, ActionId, Domain, FactoredState, GlobalStep, LocalState, LocalStep,
    SimRng, SourceValue,
};

pub const LEFT: ActionId = 0;
pub const RIGHT: ActionId = 1;

const STEP: usize = 0;
const OUTCOME: usize = 1;
const AGENTS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedPolicy {
    /// Target the left chair with probability `f_left / (f_left + f_right)`.
    Matching,
    /// Target the side with the higher smoothed success frequency; ties are
    /// broken uniformly at random.
    Argmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GacConfig {
    pub n_fixed_agents: usize,
    pub horizon: usize,
    pub obs_noise: f64,
    pub fixed_policy: FixedPolicy,
}

impl Default for GacConfig {
    fn default() -> Self {
        GacConfig {
            n_fixed_agents: 64,
            horizon: 10,
            obs_noise: 0.2,
            fixed_policy: FixedPolicy::Argmax,
        }
    }
}

impl GacConfig {
    /// Four fixed agents and five steps: small enough for exact enumeration.
    pub fn tiny() -> Self {
        GacConfig {
            n_fixed_agents: 4,
            horizon: 5,
            ..GacConfig::default()
        }
    }

    pub fn small() -> Self {
        GacConfig {
            n_fixed_agents: 16,
            ..GacConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fixed_agents < 2 {
            return Err(Error::Config(
                "gac: n_fixed_agents must be at least 2".into(),
            ));
        }
        if self.horizon == 0 || self.horizon > u16::MAX as usize - 1 {
            return Err(Error::Config("gac: horizon out of range".into()));
        }
        if !(0.0..=0.5).contains(&self.obs_noise) {
            return Err(Error::Config("gac: obs_noise must lie in [0, 0.5]".into()));
        }
        Ok(())
    }
}

/// Success/attempt counters of one fixed agent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct AgentCounters {
    pub succ_left: u16,
    pub succ_right: u16,
    pub att_left: u16,
    pub att_right: u16,
}

impl AgentCounters {
    pub fn from_slice(v: &[u16]) -> Self {
        AgentCounters {
            succ_left: v[0],
            succ_right: v[1],
            att_left: v[2],
            att_right: v[3],
        }
    }

    pub fn record(&mut self, action: ActionId, success: bool) {
        if action == LEFT {
            self.att_left += 1;
            self.succ_left += success as u16;
        } else {
            self.att_right += 1;
            self.succ_right += success as u16;
        }
    }
}

/// Probability that a fixed agent with these counters targets its left chair,
/// using Laplace-smoothed success frequencies.
pub fn fixed_policy_prob(c: AgentCounters, policy: FixedPolicy) -> f64 {
    match policy {
        FixedPolicy::Matching => {
            let f_left = (c.succ_left as f64 + 1.0) / (c.att_left as f64 + 2.0);
            let f_right = (c.succ_right as f64 + 1.0) / (c.att_right as f64 + 2.0);
            f_left / (f_left + f_right)
        }
        FixedPolicy::Argmax => {
            // Cross-multiplied to compare the smoothed frequencies exactly.
            let lhs = (c.succ_left as u64 + 1) * (c.att_right as u64 + 2);
            let rhs = (c.succ_right as u64 + 1) * (c.att_left as u64 + 2);
            match lhs.cmp(&rhs) {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Less => 0.0,
                std::cmp::Ordering::Equal => 0.5,
            }
        }
    }
}

/// Resolves all chairs on the ring. `actions[q]` is the choice of ring
/// position `q`; the result holds each position's success.
pub fn resolve_ring(actions: &[ActionId], outcomes: &mut Vec<bool>) {
    let n = actions.len();
    outcomes.clear();
    outcomes.extend((0..n).map(|q| {
        if actions[q] == LEFT {
            actions[(q + n - 1) % n] != RIGHT
        } else {
            actions[(q + 1) % n] != LEFT
        }
    }));
}

/// Planner outcome implied by its action and the source value.
pub fn planner_outcome(action: ActionId, source: &SourceValue) -> bool {
    if action == LEFT {
        source.0[0] == 0
    } else {
        source.0[1] == 0
    }
}

#[derive(Clone, Debug)]
pub struct GrabAChair {
    cfg: GacConfig,
    local_cards: [usize; 1],
    source_cards: [usize; 2],
    name: String,
}

impl GrabAChair {
    pub fn new(cfg: GacConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(GrabAChair {
            name: format!("gac-{}", cfg.n_fixed_agents),
            cfg,
            local_cards: [2],
            source_cards: [2, 2],
        })
    }

    pub fn config(&self) -> &GacConfig {
        &self.cfg
    }

    pub fn counters(&self, s: &FactoredState, agent: usize) -> AgentCounters {
        AgentCounters::from_slice(&s.0[AGENTS + 4 * agent..AGENTS + 4 * agent + 4])
    }

    pub fn left_prob(&self, s: &FactoredState, agent: usize) -> f64 {
        fixed_policy_prob(self.counters(s, agent), self.cfg.fixed_policy)
    }

    /// Probabilities that the left and right neighbours target the chairs
    /// they share with the planner.
    pub fn source_probs(&self, s: &FactoredState) -> (f64, f64) {
        let left_neighbour = self.cfg.n_fixed_agents - 1;
        let p_left_contests = 1.0 - self.left_prob(s, left_neighbour);
        let p_right_contests = self.left_prob(s, 0);
        (p_left_contests, p_right_contests)
    }

    /// Deterministic transition given every agent's choice.
    /// `fixed_actions[j]` is the choice of fixed agent `j`.
    pub fn apply_joint(
        &self,
        s: &FactoredState,
        planner_action: ActionId,
        fixed_actions: &[ActionId],
    ) -> (FactoredState, SourceValue) {
        let n = self.cfg.n_fixed_agents;
        debug_assert_eq!(fixed_actions.len(), n);
        let mut ring = Vec::with_capacity(n + 1);
        ring.push(planner_action);
        ring.extend_from_slice(fixed_actions);
        let mut outcomes = Vec::with_capacity(n + 1);
        resolve_ring(&ring, &mut outcomes);

        let mut next = s.clone();
        next.0[STEP] += 1;
        next.0[OUTCOME] = outcomes[0] as u16;
        for (j, (&a, &ok)) in fixed_actions.iter().zip(&outcomes[1..]).enumerate() {
            let base = AGENTS + 4 * j;
            let mut c = AgentCounters::from_slice(&next.0[base..base + 4]);
            c.record(a, ok);
            next.0[base..base + 4].copy_from_slice(&[c.succ_left, c.succ_right, c.att_left, c.att_right]);
        }
        let source = SourceValue::from_slice(&[
            (fixed_actions[n - 1] == RIGHT) as u16,
            (fixed_actions[0] == LEFT) as u16,
        ]);
        (next, source)
    }

    fn observe(&self, outcome: bool, rng: &mut SimRng) -> usize {
        let flip = self.cfg.obs_noise > 0.0 && rng.random_bool(self.cfg.obs_noise);
        (outcome ^ flip) as usize
    }
}

impl Domain for GrabAChair {
    fn name(&self) -> &str {
        &self.name
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn num_observations(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn state_cardinalities(&self) -> Vec<usize> {
        let h = self.cfg.horizon + 1;
        let mut cards = vec![h, 2];
        cards.extend(std::iter::repeat_n(h, 4 * self.cfg.n_fixed_agents));
        cards
    }

    fn local_cardinalities(&self) -> &[usize] {
        &self.local_cards
    }

    fn source_cardinalities(&self) -> &[usize] {
        &self.source_cards
    }

    fn sample_initial(&self, _rng: &mut SimRng) -> FactoredState {
        FactoredState(vec![0; AGENTS + 4 * self.cfg.n_fixed_agents])
    }

    fn project_local(&self, s: &FactoredState) -> LocalState {
        LocalState::from_slice(&s.0[OUTCOME..OUTCOME + 1])
    }

    fn sample_source(&self, s: &FactoredState, _a: ActionId, rng: &mut SimRng) -> SourceValue {
        let (p_left, p_right) = self.source_probs(s);
        SourceValue::from_slice(&[rng.random_bool(p_left) as u16, rng.random_bool(p_right) as u16])
    }

    fn step_local(
        &self,
        _local: &LocalState,
        source: &SourceValue,
        a: ActionId,
        rng: &mut SimRng,
    ) -> LocalStep {
        let outcome = planner_outcome(a, source);
        LocalStep {
            next: LocalState::from_slice(&[outcome as u16]),
            observation: self.observe(outcome, rng),
            reward: outcome as u8 as f64,
        }
    }

    fn step_global(&self, s: &FactoredState, a: ActionId, rng: &mut SimRng) -> GlobalStep {
        let n = self.cfg.n_fixed_agents;
        let mut fixed = Vec::with_capacity(n);
        for j in 0..n {
            let p = self.left_prob(s, j);
            fixed.push(if rng.random_bool(p) { LEFT } else { RIGHT });
        }
        let (next, source) = self.apply_joint(s, a, &fixed);
        let outcome = next.0[OUTCOME] == 1;
        GlobalStep {
            observation: self.observe(outcome, rng),
            reward: outcome as u8 as f64,
            next,
            source,
        }
    }

    fn source_entropy(&self, s: &FactoredState, _a: ActionId) -> f64 {
        let (p_left, p_right) = self.source_probs(s);
        binary_entropy(p_left) + binary_entropy(p_right)
    }
}
