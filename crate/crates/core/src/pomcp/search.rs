use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ials::IalsState;
use crate::model::{
    AugmentedParticle, Domain, Origin, Reward, SimRng, TrajectoryEntry, TrajectoryRecord,
};
use crate::pomcp::tree::{ucb1_action, NodeId, SearchTree, ROOT};
use crate::predictor::{InfluencePredictor, SourceDistribution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub ucb_c: f64,
    pub gamma: f64,
    pub particles: usize,
    /// Maximum simulation depth; unlimited when absent.
    #[serde(default)]
    pub effective_horizon: Option<usize>,
}

impl SearchConfig {
    pub fn gac() -> Self {
        SearchConfig {
            ucb_c: 100.0,
            gamma: 1.0,
            particles: 1000,
            effective_horizon: None,
        }
    }

    pub fn gtc() -> Self {
        SearchConfig {
            ucb_c: 10.0,
            gamma: 0.95,
            particles: 1000,
            effective_horizon: Some(36),
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::Config(format!("search: {m}")));
        if !(self.ucb_c >= 0.0) {
            return bad("ucb_c must be non-negative");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.particles == 0 {
            return bad("particles must be at least 1");
        }
        if self.effective_horizon == Some(0) {
            return bad("effective_horizon must be at least 1");
        }
        Ok(())
    }

    /// Simulation depth at real step `t` of an episode with horizon `h`.
    pub fn depth(&self, t: usize, h: usize) -> usize {
        let left = h.saturating_sub(t);
        self.effective_horizon.map_or(left, |e| left.min(e))
    }
}

/// Where a simulation starts.
pub enum SimStart<'a> {
    Global(&'a AugmentedParticle),
    Ials(IalsState),
}

/// Runs one simulation from the root: UCB1 inside the tree, uniform random
/// actions from the first history not in the tree onward. The tree is not
/// modified.
#[allow(clippy::too_many_arguments)]
pub fn simulate_once(
    tree: &SearchTree,
    domain: &dyn Domain,
    predictor: &dyn InfluencePredictor,
    start: SimStart<'_>,
    start_step: usize,
    depth: usize,
    ucb_c: f64,
    dist: &mut SourceDistribution,
    rng: &mut SimRng,
) -> TrajectoryRecord {
    let num_actions = domain.num_actions();
    let mut node: Option<NodeId> = Some(ROOT);
    let mut entries = Vec::with_capacity(depth);
    let choose = |node: Option<NodeId>, rng: &mut SimRng| match node {
        Some(n) => ucb1_action(tree.node(n), ucb_c),
        None => rng.random_range(0..num_actions),
    };
    match start {
        SimStart::Global(p) => {
            let mut s = p.global.clone();
            for _ in 0..depth {
                let a = choose(node, rng);
                let step = domain.step_global(&s, a, rng);
                let local = domain.project_local(&step.next);
                node = node.and_then(|n| tree.child(n, a, step.observation));
                entries.push(TrajectoryEntry {
                    action: a,
                    local,
                    observation: step.observation,
                    reward: step.reward,
                    source: Some(step.source),
                    prev_global: Some(std::mem::replace(&mut s, step.next)),
                });
            }
            TrajectoryRecord {
                origin: Origin::Global,
                start_step,
                start_history: p.history.clone(),
                entries,
                final_global: Some(s),
            }
        }
        SimStart::Ials(mut st) => {
            let start_history = st.history.clone();
            for _ in 0..depth {
                let a = choose(node, rng);
                let (step, _) = st.step(a, domain, predictor, dist, rng);
                node = node.and_then(|n| tree.child(n, a, step.observation));
                entries.push(TrajectoryEntry {
                    action: a,
                    local: step.next,
                    observation: step.observation,
                    reward: step.reward,
                    source: None,
                    prev_global: None,
                });
            }
            TrajectoryRecord {
                origin: Origin::Ials,
                start_step,
                start_history,
                entries,
                final_global: None,
            }
        }
    }
}

/// `G_k = r_k + gamma * G_{k+1}` for every entry.
pub fn discounted_returns(rewards: impl DoubleEndedIterator<Item = Reward>, gamma: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut g = 0.0;
    for r in rewards.rev() {
        g = r + gamma * g;
        out.push(g);
    }
    out.reverse();
    out
}

/// Updates statistics along the trajectory's path, adds the first history
/// that is not yet in the tree, and (for global trajectories) deposits
/// particles into the visited nodes below the root, up to `particle_cap`
/// per node.
pub fn backup(tree: &mut SearchTree, traj: &TrajectoryRecord, gamma: f64, particle_cap: usize) {
    let returns = discounted_returns(traj.entries.iter().map(|e| e.reward), gamma);
    let global = traj.origin == Origin::Global;
    match traj.origin {
        Origin::Global => tree.backups_global += 1,
        Origin::Ials => tree.backups_ials += 1,
    }
    let mut history = if global { Some(traj.start_history.clone()) } else { None };
    let mut node = ROOT;
    for (k, e) in traj.entries.iter().enumerate() {
        let n = tree.node_mut(node);
        n.visits += 1;
        let st = &mut n.actions[e.action];
        st.visits += 1;
        st.value += (returns[k] - st.value) / st.visits as f64;

        let (child, expanded) = match tree.child(node, e.action, e.observation) {
            Some(c) => (c, false),
            None => (tree.add_child(node, e.action, e.observation), true),
        };
        if let Some(h) = history.as_mut() {
            h.push(e.action, e.local.clone());
            let c = tree.node_mut(child);
            if c.particles.len() < particle_cap {
                let g = traj.global_at(k + 1).expect("global trajectory records states");
                c.particles.push(AugmentedParticle {
                    global: g.clone(),
                    history: h.clone(),
                });
            }
        }
        if expanded {
            break;
        }
        node = child;
    }
}
