//! The fused estimation model: one global hidden chain plus any number of
//! agent chains whose action choices depend on the previous global state.
//!
//! Structure per timestep:
//! - the global state evolves by its own transition table, independent of
//!   every agent;
//! - each agent picks an action from a policy conditioned on the previous
//!   global state and its own previous local state, then its local state
//!   evolves from (previous local state, action);
//! - the global state emits one noisy observation, and each agent's local
//!   state emits one noisy observation, each through its own channel.
//!
//! Models are immutable after construction: every operation that changes a
//! model (for example [`prune_agents`]) returns a new value.

use serde::{Deserialize, Serialize};

use crate::dist::{CondTable, Pmf, RowDefect};
use crate::num::Real;
use crate::space::StateSpace;

/// Identity of an agent chain. Ids are 1-based and contiguous in a valid
/// model, so id `k` lives at index `k - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(pub u32);

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "agent {}", self.0)
    }
}

/// The global hidden chain and its observation channel.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalChain<R: Real = f64> {
    pub space: StateSpace,
    pub obs_space: StateSpace,
    /// Distribution of the state at the first timestep.
    pub prior: Pmf<R>,
    /// `transition.row(&[s])` is the next-state distribution given state `s`.
    pub transition: CondTable<R>,
    /// `obs_fn.row(&[s])` is the observation distribution given state `s`.
    pub obs_fn: CondTable<R>,
}

/// One agent chain: policy, local dynamics, and observation channel.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentChain<R: Real = f64> {
    pub id: AgentId,
    pub local_space: StateSpace,
    pub action_space: StateSpace,
    pub obs_space: StateSpace,
    /// Distribution of the local state at the first timestep.
    pub local_prior: Pmf<R>,
    /// `policy.row(&[s0, si])` is the action distribution given the previous
    /// global state `s0` and previous local state `si`.
    pub policy: CondTable<R>,
    /// `local_transition.row(&[si, a])` is the next local state distribution.
    pub local_transition: CondTable<R>,
    /// `obs_fn.row(&[si])` is the observation distribution given local state.
    pub obs_fn: CondTable<R>,
}

/// The complete model. Zero agents is valid and degenerates to a plain
/// hidden Markov model on the global chain.
#[derive(Clone, Debug, PartialEq)]
pub struct AaseModel<R: Real = f64> {
    pub global: GlobalChain<R>,
    pub agents: Vec<AgentChain<R>>,
}

impl<R: Real> AaseModel<R> {
    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentChain<R>> {
        self.agents.iter().find(|a| a.id == id)
    }

    /// Product of the global and all local state space sizes: the number of
    /// joint states one timestep of the fully coupled chain carries.
    pub fn joint_slice_states(&self) -> usize {
        self.agents
            .iter()
            .fold(self.global.space.len(), |acc, a| {
                acc.saturating_mul(a.local_space.len())
            })
    }
}

/// One concrete reason a model is unusable.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    SpaceDefect { place: String, detail: String },
    WrongShape { table: String, expected: String, got: String },
    BadRow { table: String, row: String, detail: String },
    AgentIds { detail: String },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::SpaceDefect { place, detail } => write!(f, "{place}: {detail}"),
            Violation::WrongShape { table, expected, got } => {
                write!(f, "{table}: expected shape {expected}, got {got}")
            }
            Violation::BadRow { table, row, detail } => {
                write!(f, "{table}, row ({row}): {detail}")
            }
            Violation::AgentIds { detail } => write!(f, "agent ids: {detail}"),
        }
    }
}

/// Everything wrong with a model, as data. An empty report means the model
/// satisfies all structural and stochasticity requirements.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_ok() {
            write!(f, "model OK")
        } else {
            writeln!(f, "{} violation(s):", self.violations.len())?;
            for v in &self.violations {
                writeln!(f, "  - {v}")?;
            }
            Ok(())
        }
    }
}

fn defect_text(d: &RowDefect) -> String {
    match d {
        RowDefect::Negative { index, value } => {
            format!("negative entry {value} at outcome {index}")
        }
        RowDefect::NotNormalized { sum } => format!("row sums to {sum}, not 1"),
        RowDefect::NotFinite { index } => format!("non-finite entry at outcome {index}"),
    }
}

fn check_spaces(report: &mut ValidationReport, place: &str, space: &StateSpace) {
    for detail in space.defects() {
        report.violations.push(Violation::SpaceDefect {
            place: place.to_string(),
            detail,
        });
    }
}

fn check_pmf<R: Real>(report: &mut ValidationReport, table: &str, pmf: &Pmf<R>, want_len: usize) {
    if pmf.len() != want_len {
        report.violations.push(Violation::WrongShape {
            table: table.to_string(),
            expected: format!("[{want_len}]"),
            got: format!("[{}]", pmf.len()),
        });
        return;
    }
    if let Some(d) = pmf.defect() {
        report.violations.push(Violation::BadRow {
            table: table.to_string(),
            row: String::new(),
            detail: defect_text(&d),
        });
    }
}

fn check_table<R: Real>(
    report: &mut ValidationReport,
    table: &str,
    t: &CondTable<R>,
    cond: &[usize],
    out: usize,
) {
    if t.cond_dims() != cond || t.out_dim() != out {
        report.violations.push(Violation::WrongShape {
            table: table.to_string(),
            expected: format!("{cond:?} -> {out}"),
            got: format!("{:?} -> {}", t.cond_dims(), t.out_dim()),
        });
        return;
    }
    if let Some((row, d)) = t.first_defect() {
        let row = row
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        report.violations.push(Violation::BadRow {
            table: table.to_string(),
            row,
            detail: defect_text(&d),
        });
    }
}

/// Checks every structural requirement: nonempty distinct label sets, table
/// shapes that match their spaces, row-stochastic rows, nonnegative entries,
/// and 1-based contiguous agent ids.
pub fn validate_model<R: Real>(model: &AaseModel<R>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let g = &model.global;
    let k0 = g.space.len();

    check_spaces(&mut report, "global.space", &g.space);
    check_spaces(&mut report, "global.obs_space", &g.obs_space);
    check_pmf(&mut report, "global.prior", &g.prior, k0);
    check_table(&mut report, "global.transition", &g.transition, &[k0], k0);
    check_table(&mut report, "global.obs_fn", &g.obs_fn, &[k0], g.obs_space.len());

    for (pos, a) in model.agents.iter().enumerate() {
        let who = format!("agents[{pos}]");
        let ki = a.local_space.len();
        let na = a.action_space.len();
        check_spaces(&mut report, &format!("{who}.local_space"), &a.local_space);
        check_spaces(&mut report, &format!("{who}.action_space"), &a.action_space);
        check_spaces(&mut report, &format!("{who}.obs_space"), &a.obs_space);
        check_pmf(&mut report, &format!("{who}.local_prior"), &a.local_prior, ki);
        check_table(&mut report, &format!("{who}.policy"), &a.policy, &[k0, ki], na);
        check_table(
            &mut report,
            &format!("{who}.local_transition"),
            &a.local_transition,
            &[ki, na],
            ki,
        );
        check_table(
            &mut report,
            &format!("{who}.obs_fn"),
            &a.obs_fn,
            &[ki],
            a.obs_space.len(),
        );
        if a.id.0 as usize != pos + 1 {
            report.violations.push(Violation::AgentIds {
                detail: format!(
                    "expected id {} at position {pos}, found id {}",
                    pos + 1,
                    a.id.0
                ),
            });
        }
    }
    report
}

/// Keeps only the listed agents, renumbering the survivors contiguously from
/// id 1 in their original order. The global chain is reused unchanged. The
/// returned map pairs each kept agent's old id with its new one.
pub fn prune_agents<R: Real>(
    model: &AaseModel<R>,
    keep: &[AgentId],
) -> (AaseModel<R>, Vec<(AgentId, AgentId)>) {
    let mut agents = Vec::new();
    let mut id_map = Vec::new();
    for a in &model.agents {
        if keep.contains(&a.id) {
            let new_id = AgentId(agents.len() as u32 + 1);
            id_map.push((a.id, new_id));
            let mut kept = a.clone();
            kept.id = new_id;
            agents.push(kept);
        }
    }
    (
        AaseModel {
            global: model.global.clone(),
            agents,
        },
        id_map,
    )
}
