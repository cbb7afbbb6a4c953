//! Unrolling a model over a horizon into an explicit factor graph.
//!
//! The graph names every hidden variable and every factor of the joint
//! density. It is the structural reference the enumeration oracle scores
//! against, and what structural tests inspect (variable counts, factor
//! scopes, acyclicity).
//!
//! Note on shape: with at least one agent and a horizon of three or more the
//! graph contains cycles (each agent's chain couples to the global chain in
//! every slice), so it is a tree only for agentless models or very short
//! horizons. `is_tree` reports the truth; the inference engines pick their
//! strategy independently of this graph.

use crate::model::{AaseModel, AgentId};
use crate::num::Real;
use crate::trace::ObservationTrace;

/// What a hidden variable stands for. Timesteps are 0-based internally.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    /// Global state at a timestep.
    Global(usize),
    /// An agent's local state at a timestep.
    Local(AgentId, usize),
    /// An agent's action *taken at* a timestep (absent at the first step).
    Action(AgentId, usize),
}

impl std::fmt::Display for VarKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VarKind::Global(t) => write!(f, "global state at step {}", t + 1),
            VarKind::Local(id, t) => write!(f, "{id} local state at step {}", t + 1),
            VarKind::Action(id, t) => write!(f, "{id} action at step {}", t + 1),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Variable {
    pub kind: VarKind,
    pub card: usize,
}

/// Role of a factor in the joint density.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorRole {
    GlobalPrior,
    GlobalTransition,
    LocalPrior,
    Policy,
    LocalTransition,
    Evidence,
}

/// A dense nonnegative function over the joint assignment of its variables,
/// row-major in the listed variable order.
#[derive(Clone, Debug)]
pub struct Factor<R: Real = f64> {
    pub role: FactorRole,
    /// Indices into [`FactorGraph::vars`].
    pub vars: Vec<usize>,
    pub table: Vec<R>,
}

impl<R: Real> Factor<R> {
    /// Value at a full assignment of all graph variables.
    pub fn value_at(&self, assignment: &[usize], cards: &[usize]) -> R {
        let mut flat = 0usize;
        for &v in &self.vars {
            flat = flat * cards[v] + assignment[v];
        }
        self.table[flat]
    }
}

/// The unrolled graph: hidden variables plus the factors tying them together.
#[derive(Clone, Debug)]
pub struct FactorGraph<R: Real = f64> {
    pub horizon: usize,
    pub vars: Vec<Variable>,
    pub factors: Vec<Factor<R>>,
}

impl<R: Real> FactorGraph<R> {
    pub fn var_index(&self, kind: VarKind) -> Option<usize> {
        self.vars.iter().position(|v| v.kind == kind)
    }

    pub fn cards(&self) -> Vec<usize> {
        self.vars.iter().map(|v| v.card).collect()
    }

    /// Total variable-factor incidences; every incidence carries one message
    /// per direction in tree message passing.
    pub fn edge_count(&self) -> usize {
        self.factors.iter().map(|f| f.vars.len()).sum()
    }

    pub fn factors_with_role(&self, role: FactorRole) -> impl Iterator<Item = &Factor<R>> {
        self.factors.iter().filter(move |f| f.role == role)
    }

    /// True when the bipartite variable-factor graph is acyclic. Holds for
    /// agentless models at any horizon and for any model with horizon 1;
    /// agent-global coupling introduces cycles otherwise.
    pub fn is_tree(&self) -> bool {
        // Union-find over variables then factors; a cycle shows up as an
        // edge joining two nodes already in one component.
        let n = self.vars.len() + self.factors.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (fi, f) in self.factors.iter().enumerate() {
            let fnode = self.vars.len() + fi;
            for &v in &f.vars {
                let a = find(&mut parent, v);
                let b = find(&mut parent, fnode);
                if a == b {
                    return false;
                }
                parent[a] = b;
            }
        }
        true
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        let n = self.vars.len() + self.factors.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (fi, f) in self.factors.iter().enumerate() {
            let fnode = self.vars.len() + fi;
            for &v in &f.vars {
                let a = find(&mut parent, v);
                let b = find(&mut parent, fnode);
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let mut roots: Vec<usize> = (0..n).map(|x| find(&mut parent, x)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }
}

/// Unrolls `model` over `horizon` timesteps.
///
/// Per timestep the graph gains the global state variable (with a prior
/// factor at the first step, a transition factor from the previous step
/// otherwise), and per agent a local state variable plus, from the second
/// step on, an action variable whose policy factor reads the previous global
/// and local state and whose local transition factor produces the new local
/// state. Evidence is attached separately by [`attach_evidence`].
pub fn unroll<R: Real>(model: &AaseModel<R>, horizon: usize) -> FactorGraph<R> {
    assert!(horizon >= 1, "horizon must be at least 1");
    let k0 = model.global.space.len();
    let mut vars = Vec::new();
    for t in 0..horizon {
        vars.push(Variable {
            kind: VarKind::Global(t),
            card: k0,
        });
    }
    for a in &model.agents {
        for t in 0..horizon {
            vars.push(Variable {
                kind: VarKind::Local(a.id, t),
                card: a.local_space.len(),
            });
        }
        for t in 1..horizon {
            vars.push(Variable {
                kind: VarKind::Action(a.id, t),
                card: a.action_space.len(),
            });
        }
    }

    let find = |kind: VarKind| vars.iter().position(|v| v.kind == kind).unwrap();
    let gvar = |t: usize| find(VarKind::Global(t));

    let mut factors = Vec::new();
    factors.push(Factor {
        role: FactorRole::GlobalPrior,
        vars: vec![gvar(0)],
        table: model.global.prior.as_slice().to_vec(),
    });
    for t in 1..horizon {
        factors.push(Factor {
            role: FactorRole::GlobalTransition,
            vars: vec![gvar(t - 1), gvar(t)],
            table: model.global.transition.data().to_vec(),
        });
    }
    for a in &model.agents {
        let lvar = |t: usize| find(VarKind::Local(a.id, t));
        let avar = |t: usize| find(VarKind::Action(a.id, t));
        factors.push(Factor {
            role: FactorRole::LocalPrior,
            vars: vec![lvar(0)],
            table: a.local_prior.as_slice().to_vec(),
        });
        for t in 1..horizon {
            factors.push(Factor {
                role: FactorRole::Policy,
                vars: vec![gvar(t - 1), lvar(t - 1), avar(t)],
                table: a.policy.data().to_vec(),
            });
            factors.push(Factor {
                role: FactorRole::LocalTransition,
                vars: vec![lvar(t - 1), avar(t), lvar(t)],
                table: a.local_transition.data().to_vec(),
            });
        }
    }
    FactorGraph {
        horizon,
        vars,
        factors,
    }
}

/// Adds one unary evidence factor per present observation: the likelihood
/// column of the channel's observation function at the observed symbol.
/// Missing observations contribute nothing, which is the same as attaching a
/// uniform factor.
pub fn attach_evidence<R: Real>(
    graph: &FactorGraph<R>,
    model: &AaseModel<R>,
    trace: &ObservationTrace,
) -> FactorGraph<R> {
    assert_eq!(graph.horizon, trace.horizon, "graph and trace horizons differ");
    let mut out = graph.clone();
    for (t, obs) in trace.global_obs.iter().enumerate() {
        if let Some(o) = obs {
            let k0 = model.global.space.len();
            let table: Vec<R> = (0..k0)
                .map(|s| model.global.obs_fn.value(&[s], *o))
                .collect();
            out.factors.push(Factor {
                role: FactorRole::Evidence,
                vars: vec![out.var_index(VarKind::Global(t)).unwrap()],
                table,
            });
        }
    }
    for c in &trace.agent_obs {
        let a = model.agent(c.agent).expect("trace checked against model");
        for (t, obs) in c.obs.iter().enumerate() {
            if let Some(o) = obs {
                let ki = a.local_space.len();
                let table: Vec<R> = (0..ki).map(|s| a.obs_fn.value(&[s], *o)).collect();
                out.factors.push(Factor {
                    role: FactorRole::Evidence,
                    vars: vec![out.var_index(VarKind::Local(c.agent, t)).unwrap()],
                    table,
                });
            }
        }
    }
    out
}
