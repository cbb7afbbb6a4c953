//! Observation traces and simulator ground truth.

use crate::model::{AaseModel, AgentId};
use crate::num::Real;

/// A missing-data-aware observation record over a fixed horizon.
///
/// Observations are stored as indices into the corresponding observation
/// space; `None` marks a timestep where the channel produced nothing (an
/// occluded or dropped reading). A missing observation contributes a uniform
/// likelihood, so inference simply skips its evidence factor.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationTrace {
    pub horizon: usize,
    /// Global channel, one slot per timestep.
    pub global_obs: Vec<Option<usize>>,
    /// One channel per agent, in model agent order.
    pub agent_obs: Vec<AgentChannel>,
}

/// One agent's observation channel.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentChannel {
    pub agent: AgentId,
    pub obs: Vec<Option<usize>>,
}

/// Ways a trace can fail to line up with a model.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TraceError {
    #[error("horizon is {horizon} but {channel} has {got} slots")]
    ChannelLength {
        horizon: usize,
        channel: String,
        got: usize,
    },
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("{channel} at step {step}: observation index {got} out of range {range}")]
    ObsOutOfRange {
        channel: String,
        step: usize,
        got: usize,
        range: usize,
    },
    #[error("trace has channels for {got:?} but the model has agents {want:?}")]
    AgentMismatch { want: Vec<u32>, got: Vec<u32> },
}

impl ObservationTrace {
    /// A trace of the right shape for `model` with every slot missing.
    pub fn all_missing<R: Real>(model: &AaseModel<R>, horizon: usize) -> Self {
        Self {
            horizon,
            global_obs: vec![None; horizon],
            agent_obs: model
                .agents
                .iter()
                .map(|a| AgentChannel {
                    agent: a.id,
                    obs: vec![None; horizon],
                })
                .collect(),
        }
    }

    pub fn channel(&self, agent: AgentId) -> Option<&[Option<usize>]> {
        self.agent_obs
            .iter()
            .find(|c| c.agent == agent)
            .map(|c| c.obs.as_slice())
    }

    /// Checks the trace lines up with `model`: one channel per agent, every
    /// channel as long as the horizon, every present index inside its space.
    pub fn check_against<R: Real>(&self, model: &AaseModel<R>) -> Result<(), TraceError> {
        if self.horizon == 0 {
            return Err(TraceError::EmptyHorizon);
        }
        if self.global_obs.len() != self.horizon {
            return Err(TraceError::ChannelLength {
                horizon: self.horizon,
                channel: "global channel".into(),
                got: self.global_obs.len(),
            });
        }
        let mut want: Vec<u32> = model.agents.iter().map(|a| a.id.0).collect();
        let mut got: Vec<u32> = self.agent_obs.iter().map(|c| c.agent.0).collect();
        want.sort_unstable();
        got.sort_unstable();
        if want != got {
            return Err(TraceError::AgentMismatch { want, got });
        }
        let k = model.global.obs_space.len();
        for (step, o) in self.global_obs.iter().enumerate() {
            if let Some(v) = o {
                if *v >= k {
                    return Err(TraceError::ObsOutOfRange {
                        channel: "global channel".into(),
                        step: step + 1,
                        got: *v,
                        range: k,
                    });
                }
            }
        }
        for c in &self.agent_obs {
            let a = model.agent(c.agent).expect("checked membership above");
            if c.obs.len() != self.horizon {
                return Err(TraceError::ChannelLength {
                    horizon: self.horizon,
                    channel: a.id.to_string(),
                    got: c.obs.len(),
                });
            }
            let k = a.obs_space.len();
            for (step, o) in c.obs.iter().enumerate() {
                if let Some(v) = o {
                    if *v >= k {
                        return Err(TraceError::ObsOutOfRange {
                            channel: a.id.to_string(),
                            step: step + 1,
                            got: *v,
                            range: k,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of present observations on the global channel.
    pub fn global_present(&self) -> usize {
        self.global_obs.iter().filter(|o| o.is_some()).count()
    }
}

/// The hidden trajectory a simulated trace was emitted from.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// Global state index per timestep.
    pub global_states: Vec<usize>,
    /// Local state indices per agent, in model agent order.
    pub local_states: Vec<(AgentId, Vec<usize>)>,
    /// Action indices per agent; one entry per timestep after the first.
    pub actions: Vec<(AgentId, Vec<usize>)>,
}
