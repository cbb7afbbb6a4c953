//! Posterior inference over the global chain.
//!
//! Three routes produce the same kind of answer, a per-timestep posterior
//! over global states given a whole trace:
//!
//! - [`hmm_smooth`]: classic scaled forward-backward over the global chain
//!   alone, ignoring agent channels. Also what agentless models dispatch to.
//! - The **exact joint** engine: forward-backward over the joint slice state
//!   (global state times every agent's local state), actions marginalized
//!   into per-agent slice kernels. Exact for every model, with cost and
//!   memory growing with the product of local space sizes, so it is guarded
//!   by a state budget.
//! - The **factored pair** engine: forward-backward where each agent keeps a
//!   pairwise belief over (global state, its local state) and channels are
//!   fused through their global-state collapse. Cost grows linearly in the
//!   number of agents. Exact for zero or one agent; for two or more it is a
//!   principled projection (the joint posterior does not factor, so some
//!   cross-agent correlation is discarded each step).
//!
//! [`smooth_with`] picks the route from [`InferenceOptions`]; the default
//! [`EngineChoice::Auto`] uses the exact engine whenever the joint slice fits
//! the budget and the factored engine otherwise.
//!
//! Every engine renormalizes after each summarization and accumulates the
//! log-normalizers, so the returned `loglik` is the log-probability of the
//! present observations (exact where the engine is exact). A step where the
//! evidence has zero posterior support is a hard error naming the earliest
//! offending timestep and variable.

mod brute;
mod exact;
mod factored;
mod hmm;

pub use brute::{brute_force_posterior, BRUTE_FORCE_DEFAULT_CAP};
pub use hmm::hmm_smooth;

use crate::dist::argmax;
use crate::model::AaseModel;
use crate::num::Real;
use crate::space::StateSpace;
use crate::trace::{ObservationTrace, TraceError};

/// Default ceiling on the joint slice state count for the exact engine.
pub const DEFAULT_EXACT_STATE_BUDGET: usize = 2048;

/// Which engine to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineChoice {
    /// Exact joint if it fits [`InferenceOptions::exact_state_budget`],
    /// otherwise factored pairs. Agentless models always use the global
    /// chain alone.
    Auto,
    Exact,
    Factored,
}

/// Forward-backward (posteriors given the whole trace) or forward only
/// (posteriors given the trace so far).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sweep {
    Smoothing,
    Filtering,
}

/// Knobs for [`smooth_with`].
#[derive(Clone, Debug)]
pub struct InferenceOptions {
    pub engine: EngineChoice,
    pub sweep: Sweep,
    /// Largest joint slice state count the exact engine may allocate.
    pub exact_state_budget: usize,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            engine: EngineChoice::Auto,
            sweep: Sweep::Smoothing,
            exact_state_budget: DEFAULT_EXACT_STATE_BUDGET,
        }
    }
}

/// Which route actually ran.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineUsed {
    GlobalChainOnly,
    ExactJoint,
    FactoredPairs,
}

/// Work accounting for one query. `messages` is exactly twice `chain_edges`:
/// the sweep passes one message per chain edge per direction, with no
/// iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InferenceStats {
    pub engine: EngineUsed,
    /// Edges of the chain the engine sweeps: `horizon - 1` slice links for
    /// the global-only and exact engines, `(horizon - 1) * (agents + 1)`
    /// cluster links for the factored engine.
    pub chain_edges: usize,
    pub messages: usize,
    /// Largest belief vector the engine carries.
    pub max_belief_states: usize,
}

/// Per-timestep posterior over the global state space.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSequence<R: Real = f64> {
    pub space: StateSpace,
    /// `marginals[t][s]` is the posterior mass of global state `s` at step
    /// `t` (0-based). Each row sums to one.
    pub marginals: Vec<Vec<R>>,
    /// Per-step argmax of `marginals`; ties resolve to the lowest index.
    pub map_ix: Vec<usize>,
    /// Log-probability of all present observations under the model.
    pub loglik: R,
}

impl<R: Real> PosteriorSequence<R> {
    pub fn horizon(&self) -> usize {
        self.marginals.len()
    }

    pub(crate) fn from_marginals(space: StateSpace, marginals: Vec<Vec<R>>, loglik: R) -> Self {
        let map_ix = marginals.iter().map(|row| argmax(row)).collect();
        Self {
            space,
            marginals,
            map_ix,
            loglik,
        }
    }
}

/// The per-step most probable labels, ties resolved to the lowest index.
pub fn map_sequence<R: Real>(post: &PosteriorSequence<R>) -> Vec<String> {
    post.map_ix
        .iter()
        .map(|&ix| post.space.label(ix).to_string())
        .collect()
}

/// Why inference refused or failed.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum InferenceError {
    #[error("zero posterior support at step {step} ({variable}): the trace contradicts the model")]
    ZeroSupport { step: usize, variable: String },
    #[error("exact engine needs {needed} joint states, over the budget of {budget}")]
    ExactBudget { needed: usize, budget: usize },
    #[error("joint assignment space of {assignments} exceeds the enumeration cap of {cap}")]
    EnumerationCap { assignments: usize, cap: usize },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Smoothed posterior with default options.
pub fn smooth<R: Real>(
    model: &AaseModel<R>,
    trace: &ObservationTrace,
) -> Result<PosteriorSequence<R>, InferenceError> {
    smooth_with(model, trace, &InferenceOptions::default()).map(|(p, _)| p)
}

/// Posterior under explicit options, plus work accounting.
///
/// The model must already satisfy [`crate::model::validate_model`]; the trace
/// is checked here.
pub fn smooth_with<R: Real>(
    model: &AaseModel<R>,
    trace: &ObservationTrace,
    opts: &InferenceOptions,
) -> Result<(PosteriorSequence<R>, InferenceStats), InferenceError> {
    trace.check_against(model)?;
    if model.agents.is_empty() {
        let post = hmm::hmm_smooth_sweep(&model.global, &trace.global_obs, opts.sweep)?;
        let stats = InferenceStats {
            engine: EngineUsed::GlobalChainOnly,
            chain_edges: trace.horizon - 1,
            messages: 2 * (trace.horizon - 1),
            max_belief_states: model.global.space.len(),
        };
        return Ok((post, stats));
    }
    let joint = model.joint_slice_states();
    let use_exact = match opts.engine {
        EngineChoice::Exact => {
            if joint > opts.exact_state_budget {
                return Err(InferenceError::ExactBudget {
                    needed: joint,
                    budget: opts.exact_state_budget,
                });
            }
            true
        }
        EngineChoice::Factored => false,
        EngineChoice::Auto => joint <= opts.exact_state_budget,
    };
    if use_exact {
        let post = exact::smooth_exact(model, trace, opts.sweep)?;
        let stats = InferenceStats {
            engine: EngineUsed::ExactJoint,
            chain_edges: trace.horizon - 1,
            messages: 2 * (trace.horizon - 1),
            max_belief_states: joint,
        };
        Ok((post, stats))
    } else {
        let post = factored::smooth_factored(model, trace, opts.sweep)?;
        let max_pair = model
            .agents
            .iter()
            .map(|a| model.global.space.len() * a.local_space.len())
            .max()
            .unwrap_or(model.global.space.len());
        let edges = (trace.horizon - 1) * (model.agents.len() + 1);
        let stats = InferenceStats {
            engine: EngineUsed::FactoredPairs,
            chain_edges: edges,
            messages: 2 * edges,
            max_belief_states: max_pair,
        };
        Ok((post, stats))
    }
}

/// Action-marginalized one-step kernel for an agent: the probability of each
/// next local state given the previous global and local state, with the
/// policy summed out. Layout `[k0][ki][ki]`, row-major.
pub(crate) fn agent_slice_kernel<R: Real>(
    agent: &crate::model::AgentChain<R>,
    k0: usize,
) -> Vec<R> {
    let ki = agent.local_space.len();
    let na = agent.action_space.len();
    let mut kernel = vec![R::zero(); k0 * ki * ki];
    for s0 in 0..k0 {
        for si in 0..ki {
            let pol = agent.policy.row(&[s0, si]);
            let base = (s0 * ki + si) * ki;
            for a in 0..na {
                let pa = pol[a];
                if pa == R::zero() {
                    continue;
                }
                let tr = agent.local_transition.row(&[si, a]);
                for next in 0..ki {
                    kernel[base + next] = kernel[base + next] + pa * tr[next];
                }
            }
        }
    }
    kernel
}
