use std::collections::HashMap;
use std::fmt;

use super::{ActionId, DecisionRule, Mdp, StateId};
use crate::error::{Error, Result};
use crate::rational::{self, Rational};

pub type NodeId = usize;

/// Default cap on the number of unrolled tree nodes.
pub const DEFAULT_NODE_CAP: usize = 1_000_000;

/// Alternating state/action sequence `(S0, A0, S1, …, St)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct History(Vec<usize>);

impl History {
    pub fn root(s0: StateId) -> Self {
        History(vec![s0])
    }

    pub fn extend(&self, a: ActionId, next: StateId) -> Self {
        let mut v = self.0.clone();
        v.push(a);
        v.push(next);
        History(v)
    }

    /// Number of transitions `t`.
    pub fn len(&self) -> usize {
        self.0.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last_state(&self) -> StateId {
        *self.0.last().expect("history is never empty")
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> + '_ {
        self.0.iter().step_by(2).copied()
    }

    pub fn actions(&self) -> impl Iterator<Item = ActionId> + '_ {
        self.0.iter().skip(1).step_by(2).copied()
    }

    pub fn raw(&self) -> &[usize] {
        &self.0
    }

    /// The `k`-step prefix `H_{0:k}`.
    pub fn prefix(&self, k: usize) -> History {
        History(self.0[..2 * k + 1].to_vec())
    }

    /// Comma-separated state/action names, e.g. `s0,a1,s1,a2,s5`.
    pub fn id(&self, mdp: &Mdp) -> String {
        self.0
            .iter()
            .enumerate()
            .map(|(i, &x)| if i % 2 == 0 { mdp.state_name(x) } else { mdp.action_name(x) })
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse(mdp: &Mdp, id: &str) -> Result<History> {
        let parts: Vec<&str> = id.split(',').map(str::trim).collect();
        if parts.len() % 2 == 0 {
            return Err(Error::Parse(format!("history id {id:?} must end in a state")));
        }
        let mut raw = Vec::with_capacity(parts.len());
        for (i, p) in parts.iter().enumerate() {
            raw.push(if i % 2 == 0 { mdp.state_id_or_err(p)? } else { mdp.action_id_or_err(p)? });
        }
        Ok(History(raw))
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub action: ActionId,
    pub children: Vec<NodeId>,
}

#[derive(Clone, Debug)]
pub struct Node {
    pub history: History,
    pub state: StateId,
    pub depth: usize,
    pub parent: Option<NodeId>,
    /// Probability of the incoming transition given the parent and action.
    pub cond_prob: Rational,
    /// Product of conditional probabilities from the root.
    pub prob: Rational,
    pub reward_in: Rational,
    /// Cumulative discounted return of the prefix.
    pub ret: Rational,
    pub branches: Vec<Branch>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.branches.is_empty()
    }
}

/// The history tree of an MDP to depth `horizon`, either complete or pruned
/// to the actions chosen by a policy.
#[derive(Clone, Debug)]
pub struct HistoryTree {
    nodes: Vec<Node>,
    index: HashMap<History, NodeId>,
    horizon: usize,
}

impl HistoryTree {
    /// Unrolls `mdp` to its horizon. With a rule, only the chosen action is
    /// expanded at each decision node; without one, every available action is.
    pub fn unroll(mdp: &Mdp, rule: Option<&dyn DecisionRule>, node_cap: usize) -> Result<Self> {
        let root = Node {
            history: History::root(mdp.initial_state),
            state: mdp.initial_state,
            depth: 0,
            parent: None,
            cond_prob: rational::one(),
            prob: rational::one(),
            reward_in: rational::zero(),
            ret: rational::zero(),
            branches: Vec::new(),
        };
        let mut tree = HistoryTree { nodes: vec![root], index: HashMap::new(), horizon: mdp.horizon };
        tree.index.insert(tree.nodes[0].history.clone(), 0);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let (state, depth) = (tree.nodes[id].state, tree.nodes[id].depth);
            if depth == mdp.horizon {
                continue;
            }
            let actions = match rule {
                Some(rule) => vec![rule.action_for(mdp, &tree.nodes[id].history)?],
                None => mdp.available_actions(state),
            };
            if actions.is_empty() {
                return Err(Error::InvalidMdp(vec![format!(
                    "state {} reached at depth {depth} has no action",
                    mdp.state_name(state)
                )]));
            }
            let discount = mdp.discount_pow(depth);
            let mut branches = Vec::with_capacity(actions.len());
            for a in actions {
                let mut children = Vec::new();
                for t in mdp.outcomes(state, a) {
                    if tree.nodes.len() >= node_cap {
                        return Err(Error::EnumerationTooLarge {
                            what: "history tree nodes".into(),
                            cap: node_cap,
                        });
                    }
                    let parent = &tree.nodes[id];
                    let child = Node {
                        history: parent.history.extend(a, t.next),
                        state: t.next,
                        depth: depth + 1,
                        parent: Some(id),
                        cond_prob: t.prob.clone(),
                        prob: &parent.prob * &t.prob,
                        reward_in: t.reward.clone(),
                        ret: &parent.ret + &discount * &t.reward,
                        branches: Vec::new(),
                    };
                    let cid = tree.nodes.len();
                    tree.index.insert(child.history.clone(), cid);
                    tree.nodes.push(child);
                    children.push(cid);
                }
                branches.push(Branch { action: a, children });
            }
            // children pushed in reverse so the stack visits them in order
            for b in branches.iter().rev() {
                stack.extend(b.children.iter().rev());
            }
            tree.nodes[id].branches = branches;
        }
        Ok(tree)
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn find(&self, history: &History) -> Option<NodeId> {
        self.index.get(history).copied()
    }

    /// Leaves (depth = horizon) in ascending history order.
    pub fn leaves(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> =
            (0..self.nodes.len()).filter(|&i| self.nodes[i].depth == self.horizon).collect();
        out.sort_by(|&a, &b| self.nodes[a].history.cmp(&self.nodes[b].history));
        out
    }

    /// Non-leaf nodes in ascending history order.
    pub fn decision_nodes(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> =
            (0..self.nodes.len()).filter(|&i| self.nodes[i].depth < self.horizon).collect();
        out.sort_by(|&a, &b| self.nodes[a].history.cmp(&self.nodes[b].history));
        out
    }

    /// For a policy-pruned tree: the single chosen action and its children.
    pub fn chosen(&self, id: NodeId) -> Option<&Branch> {
        self.nodes[id].branches.first()
    }

    /// Leaves in the subtree under `id`.
    pub fn leaves_under(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.depth == self.horizon {
                out.push(n);
            }
            for b in &node.branches {
                stack.extend(&b.children);
            }
        }
        out.sort_by(|&a, &b| self.nodes[a].history.cmp(&self.nodes[b].history));
        out
    }

    pub fn return_of(&self, id: NodeId) -> &Rational {
        &self.nodes[id].ret
    }
}

/// Cumulative discounted return of a node's history prefix.
pub fn return_of(tree: &HistoryTree, id: NodeId) -> Rational {
    tree.node(id).ret.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{hau, HistoryPolicy, MarkovPolicy, Transition};
    use crate::rational::{int, rat};
    use std::collections::BTreeMap;

    #[test]
    fn full_unroll_of_fixture() {
        let mdp = hau();
        let tree = HistoryTree::unroll(&mdp, None, DEFAULT_NODE_CAP).unwrap();
        let s1 = tree.find(&History::root(0).extend(0, 1)).unwrap();
        assert_eq!(tree.node(s1).branches.len(), 3);
        let mut leaf_states: Vec<_> = tree.leaves().iter().map(|&l| tree.node(l).state).collect();
        leaf_states.sort();
        assert_eq!(leaf_states, vec![3, 4, 5, 6, 7, 8]);
    }

    #[test]
    fn markov_policy_prunes_and_probabilities_sum_to_one() {
        let mdp = hau();
        let policy = MarkovPolicy::new(BTreeMap::from([(0, 0), (1, 1), (2, 0)]));
        let tree = HistoryTree::unroll(&mdp, Some(&policy), DEFAULT_NODE_CAP).unwrap();
        let leaves = tree.leaves();
        assert_eq!(leaves.len(), 2);
        assert_eq!(tree.node(leaves[0]).state, 5);
        assert_eq!(tree.node(leaves[0]).prob, rat(1, 2));
        assert_eq!(tree.node(leaves[1]).state, 8);
        assert_eq!(tree.node(leaves[1]).prob, rat(1, 2));
    }

    #[test]
    fn returns_accumulate_rewards() {
        let mdp = hau();
        let tree = HistoryTree::unroll(&mdp, None, DEFAULT_NODE_CAP).unwrap();
        let h3 = History::root(0).extend(0, 1).extend(0, 3);
        let h8 = History::root(0).extend(0, 2).extend(0, 8);
        assert_eq!(return_of(&tree, tree.find(&h3).unwrap()), int(600));
        assert_eq!(return_of(&tree, tree.find(&h8).unwrap()), int(200));
    }

    #[test]
    fn discounting_scales_later_rewards() {
        let mut mdp = hau();
        mdp.discount = rat(1, 2);
        mdp.transitions.insert((2, 0), vec![Transition { next: 8, prob: int(1), reward: int(400) }]);
        let tree = HistoryTree::unroll(&mdp, None, DEFAULT_NODE_CAP).unwrap();
        let h8 = History::root(0).extend(0, 2).extend(0, 8);
        assert_eq!(return_of(&tree, tree.find(&h8).unwrap()), int(200));
    }

    #[test]
    fn horizon_one_leaves_carry_single_rewards() {
        let mut mdp = hau();
        mdp.horizon = 1;
        mdp.transitions.insert(
            (0, 0),
            vec![
                Transition { next: 1, prob: rat(1, 2), reward: int(3) },
                Transition { next: 2, prob: rat(1, 2), reward: int(-5) },
            ],
        );
        let tree = HistoryTree::unroll(&mdp, None, DEFAULT_NODE_CAP).unwrap();
        let rets: Vec<_> = tree.leaves().iter().map(|&l| tree.node(l).ret.clone()).collect();
        assert_eq!(rets, vec![int(3), int(-5)]);
        assert!(tree.leaves().iter().all(|&l| tree.node(l).depth == 1));
    }

    #[test]
    fn node_cap_is_enforced() {
        let err = HistoryTree::unroll(&hau(), None, 4).unwrap_err();
        assert!(err.is_cap_exceeded());
    }

    #[test]
    fn missing_history_action_is_an_error() {
        let policy = HistoryPolicy::default();
        assert!(HistoryTree::unroll(&hau(), Some(&policy), DEFAULT_NODE_CAP).is_err());
    }

    #[test]
    fn history_ids_round_trip() {
        let mdp = hau();
        let h = History::root(0).extend(0, 1).extend(1, 5);
        assert_eq!(h.id(&mdp), "s0,a1,s1,a2,s5");
        assert_eq!(History::parse(&mdp, "s0,a1,s1,a2,s5").unwrap(), h);
        assert_eq!(h.prefix(1), History::root(0).extend(0, 1));
    }
}
