//! Arena-allocated search tree over action-observation histories.

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::model::{ActionId, AugmentedParticle, ObservationId};

pub type NodeId = u32;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActionStats {
    pub visits: u32,
    /// Running mean of the returns backed up through this action.
    pub value: f64,
    pub children: SmallVec<[(ObservationId, NodeId); 2]>,
}

impl ActionStats {
    pub fn child(&self, o: ObservationId) -> Option<NodeId> {
        self.children.iter().find(|(obs, _)| *obs == o).map(|&(_, id)| id)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub visits: u32,
    pub actions: Vec<ActionStats>,
    /// Particles deposited by global-simulator trajectories.
    pub particles: Vec<AugmentedParticle>,
}

impl Node {
    fn new(num_actions: usize) -> Self {
        Node {
            visits: 0,
            actions: vec![ActionStats::default(); num_actions],
            particles: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchTree {
    nodes: Vec<Node>,
    num_actions: usize,
    /// Backups performed since the tree was created, by origin.
    pub backups_global: u64,
    pub backups_ials: u64,
}

pub const ROOT: NodeId = 0;

impl SearchTree {
    pub fn new(num_actions: usize) -> Self {
        SearchTree {
            nodes: vec![Node::new(num_actions)],
            num_actions,
            backups_global: 0,
            backups_ials: 0,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn root(&self) -> &Node {
        &self.nodes[ROOT as usize]
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id as usize]
    }

    pub fn child(&self, id: NodeId, a: ActionId, o: ObservationId) -> Option<NodeId> {
        self.nodes[id as usize].actions[a].child(o)
    }

    /// Adds an empty child for `(a, o)` under `parent`.
    pub fn add_child(&mut self, parent: NodeId, a: ActionId, o: ObservationId) -> NodeId {
        debug_assert!(self.child(parent, a, o).is_none());
        let id = self.nodes.len() as NodeId;
        self.nodes.push(Node::new(self.num_actions));
        self.nodes[parent as usize].actions[a].children.push((o, id));
        id
    }

    /// Highest mean return at the root among visited actions; ties go to the
    /// lowest action id.
    pub fn best_action(&self) -> Result<ActionId> {
        let mut best: Option<(ActionId, f64)> = None;
        for (a, st) in self.root().actions.iter().enumerate() {
            if st.visits == 0 {
                continue;
            }
            if best.is_none_or(|(_, v)| st.value > v) {
                best = Some((a, st.value));
            }
        }
        best.map(|(a, _)| a).ok_or(Error::NoVisitedAction)
    }

    /// Makes the `(a, o)` child the new root, keeping only its subtree.
    pub fn prune(&mut self, a: ActionId, o: ObservationId) {
        let Some(keep) = self.child(ROOT, a, o) else {
            *self = SearchTree {
                backups_global: self.backups_global,
                backups_ials: self.backups_ials,
                ..SearchTree::new(self.num_actions)
            };
            return;
        };
        let mut old = std::mem::take(&mut self.nodes);
        let mut remap = vec![u32::MAX; old.len()];
        let mut order = vec![keep];
        remap[keep as usize] = 0;
        let mut i = 0;
        while i < order.len() {
            let id = order[i] as usize;
            for st in &old[id].actions {
                for &(_, c) in &st.children {
                    remap[c as usize] = order.len() as u32;
                    order.push(c);
                }
            }
            i += 1;
        }
        let mut nodes = Vec::with_capacity(order.len());
        for &id in &order {
            let mut n = std::mem::replace(&mut old[id as usize], Node::new(0));
            for st in n.actions.iter_mut() {
                for (_, c) in st.children.iter_mut() {
                    *c = remap[*c as usize];
                }
            }
            nodes.push(n);
        }
        self.nodes = nodes;
    }

    /// Checks that every node's visit count equals the sum of its action counts.
    pub fn is_consistent(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| n.visits == n.actions.iter().map(|a| a.visits).sum::<u32>())
    }
}

/// UCB1 over the node's actions. Untried actions come first; ties go to the
/// lowest action id.
pub fn ucb1_action(node: &Node, c: f64) -> ActionId {
    if let Some(a) = node.actions.iter().position(|st| st.visits == 0) {
        return a;
    }
    let ln_n = (node.visits as f64).ln();
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (a, st) in node.actions.iter().enumerate() {
        let v = st.value + c * (ln_n / st.visits as f64).sqrt();
        if v > best_v {
            best = a;
            best_v = v;
        }
    }
    best
}
