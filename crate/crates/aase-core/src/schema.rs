//! On-disk formats: models, traces, and posteriors as JSON documents, plus
//! the posterior CSV. Everything is labeled text so files stay readable and
//! diffable; indices never leak into a file.
//!
//! Unknown JSON fields are rejected rather than ignored, so a typo in a
//! hand-written model file fails loudly instead of silently dropping a
//! table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{CondTable, Pmf};
use crate::inference::{EngineUsed, PosteriorSequence};
use crate::model::{AaseModel, AgentChain, AgentId, GlobalChain};
use crate::num::Real;
use crate::space::StateSpace;
use crate::trace::{AgentChannel, GroundTruth, ObservationTrace};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{channel} step {step}: label {label:?} is not in the space")]
    UnknownLabel {
        channel: String,
        step: usize,
        label: String,
    },
    #[error("agent key {key:?} is not an agent id of the model")]
    UnknownAgent { key: String },
    #[error("no observation channel for agent {id}")]
    MissingAgentChannel { id: u32 },
    #[error("{field} has {got} entries, expected {expected}")]
    LengthMismatch {
        field: String,
        expected: usize,
        got: usize,
    },
    #[error("model document: {0}")]
    Shape(String),
}

// ---------------------------------------------------------------------------
// model documents

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    global: GlobalDoc,
    #[serde(default)]
    agents: Vec<AgentDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GlobalDoc {
    states: Vec<String>,
    observations: Vec<String>,
    prior: Vec<f64>,
    /// `transition[s][s2]`
    transition: Vec<Vec<f64>>,
    /// `observation_fn[s][o]`
    observation_fn: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentDoc {
    id: u32,
    states: Vec<String>,
    actions: Vec<String>,
    observations: Vec<String>,
    prior: Vec<f64>,
    /// `policy[s0][si][a]`
    policy: Vec<Vec<Vec<f64>>>,
    /// `transition[si][a][si2]`
    transition: Vec<Vec<Vec<f64>>>,
    /// `observation_fn[si][o]`
    observation_fn: Vec<Vec<f64>>,
}

fn rows2<R: Real>(table: &CondTable<R>) -> Vec<Vec<f64>> {
    let out = table.out_dim();
    table
        .data()
        .chunks(out)
        .map(|row| row.iter().map(|v| v.as_f64()).collect())
        .collect()
}

fn rows3<R: Real>(table: &CondTable<R>) -> Vec<Vec<Vec<f64>>> {
    let inner = table.cond_dims()[1];
    rows2(table)
        .chunks(inner)
        .map(|block| block.to_vec())
        .collect()
}

fn table2<R: Real>(
    name: &str,
    rows: &[Vec<f64>],
    cond: usize,
    out: usize,
) -> Result<CondTable<R>, SchemaError> {
    if rows.len() != cond {
        return Err(SchemaError::Shape(format!(
            "{name} has {} rows, expected {cond}",
            rows.len()
        )));
    }
    let mut data = Vec::with_capacity(cond * out);
    for row in rows {
        if row.len() != out {
            return Err(SchemaError::Shape(format!(
                "{name} row has {} entries, expected {out}",
                row.len()
            )));
        }
        data.extend(row.iter().map(|&v| R::of(v)));
    }
    Ok(CondTable::new(vec![cond], out, data))
}

fn table3<R: Real>(
    name: &str,
    rows: &[Vec<Vec<f64>>],
    cond: [usize; 2],
    out: usize,
) -> Result<CondTable<R>, SchemaError> {
    if rows.len() != cond[0] {
        return Err(SchemaError::Shape(format!(
            "{name} has {} outer rows, expected {}",
            rows.len(),
            cond[0]
        )));
    }
    let mut data = Vec::with_capacity(cond[0] * cond[1] * out);
    for block in rows {
        if block.len() != cond[1] {
            return Err(SchemaError::Shape(format!(
                "{name} block has {} rows, expected {}",
                block.len(),
                cond[1]
            )));
        }
        for row in block {
            if row.len() != out {
                return Err(SchemaError::Shape(format!(
                    "{name} row has {} entries, expected {out}",
                    row.len()
                )));
            }
            data.extend(row.iter().map(|&v| R::of(v)));
        }
    }
    Ok(CondTable::new(cond.to_vec(), out, data))
}

pub fn model_to_json<R: Real>(model: &AaseModel<R>) -> String {
    let doc = ModelDoc {
        global: GlobalDoc {
            states: model.global.space.labels().to_vec(),
            observations: model.global.obs_space.labels().to_vec(),
            prior: model.global.prior.as_slice().iter().map(|v| v.as_f64()).collect(),
            transition: rows2(&model.global.transition),
            observation_fn: rows2(&model.global.obs_fn),
        },
        agents: model
            .agents
            .iter()
            .map(|a| AgentDoc {
                id: a.id.0,
                states: a.local_space.labels().to_vec(),
                actions: a.action_space.labels().to_vec(),
                observations: a.obs_space.labels().to_vec(),
                prior: a.local_prior.as_slice().iter().map(|v| v.as_f64()).collect(),
                policy: rows3(&a.policy),
                transition: rows3(&a.local_transition),
                observation_fn: rows2(&a.obs_fn),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("model documents always serialize")
}

pub fn model_from_json<R: Real>(text: &str) -> Result<AaseModel<R>, SchemaError> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    let k0 = doc.global.states.len();
    let o0 = doc.global.observations.len();
    if doc.global.prior.len() != k0 {
        return Err(SchemaError::Shape(format!(
            "global prior has {} entries, expected {k0}",
            doc.global.prior.len()
        )));
    }
    let global = GlobalChain {
        space: StateSpace::new(doc.global.states.clone()),
        obs_space: StateSpace::new(doc.global.observations.clone()),
        prior: Pmf::new(doc.global.prior.iter().map(|&v| R::of(v)).collect()),
        transition: table2("global transition", &doc.global.transition, k0, k0)?,
        obs_fn: table2("global observation_fn", &doc.global.observation_fn, k0, o0)?,
    };
    let mut agents = Vec::new();
    for a in &doc.agents {
        let ki = a.states.len();
        let na = a.actions.len();
        let oi = a.observations.len();
        if a.prior.len() != ki {
            return Err(SchemaError::Shape(format!(
                "agent {} prior has {} entries, expected {ki}",
                a.id,
                a.prior.len()
            )));
        }
        let name = format!("agent {}", a.id);
        agents.push(AgentChain {
            id: AgentId(a.id),
            local_space: StateSpace::new(a.states.clone()),
            action_space: StateSpace::new(a.actions.clone()),
            obs_space: StateSpace::new(a.observations.clone()),
            local_prior: Pmf::new(a.prior.iter().map(|&v| R::of(v)).collect()),
            policy: table3(&format!("{name} policy"), &a.policy, [k0, ki], na)?,
            local_transition: table3(&format!("{name} transition"), &a.transition, [ki, na], ki)?,
            obs_fn: table2(&format!("{name} observation_fn"), &a.observation_fn, ki, oi)?,
        });
    }
    Ok(AaseModel { global, agents })
}

// ---------------------------------------------------------------------------
// trace documents

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceDoc {
    horizon: usize,
    /// One label or null per step.
    global_obs: Vec<Option<String>>,
    /// Agent id (decimal string, JSON keys are strings) to channel.
    #[serde(default)]
    agent_obs: BTreeMap<String, Vec<Option<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<TruthDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthDoc {
    global: Vec<String>,
    #[serde(default)]
    locals: BTreeMap<String, Vec<String>>,
    /// One label per step after the first.
    #[serde(default)]
    actions: BTreeMap<String, Vec<String>>,
}

fn labels_of<'a>(
    seq: impl IntoIterator<Item = &'a Option<usize>>,
    space: &StateSpace,
) -> Vec<Option<String>> {
    seq.into_iter()
        .map(|slot| slot.map(|ix| space.label(ix).to_string()))
        .collect()
}

fn indices_of(
    seq: &[Option<String>],
    space: &StateSpace,
    channel: &str,
) -> Result<Vec<Option<usize>>, SchemaError> {
    seq.iter()
        .enumerate()
        .map(|(t, slot)| match slot {
            None => Ok(None),
            Some(label) => space.index_of(label).map(Some).ok_or_else(|| {
                SchemaError::UnknownLabel {
                    channel: channel.to_string(),
                    step: t + 1,
                    label: label.clone(),
                }
            }),
        })
        .collect()
}

/// Renders a trace, and optionally the trajectory that generated it, as a
/// labeled JSON document.
pub fn trace_to_json<R: Real>(
    model: &AaseModel<R>,
    trace: &ObservationTrace,
    truth: Option<&GroundTruth>,
) -> String {
    let agent_obs = trace
        .agent_obs
        .iter()
        .map(|ch| {
            let agent = model.agent(ch.agent).expect("trace channel has a model agent");
            (ch.agent.0.to_string(), labels_of(&ch.obs, &agent.obs_space))
        })
        .collect();
    let truth = truth.map(|gt| TruthDoc {
        global: gt
            .global_states
            .iter()
            .map(|&s| model.global.space.label(s).to_string())
            .collect(),
        locals: gt
            .local_states
            .iter()
            .map(|(id, seq)| {
                let agent = model.agent(*id).expect("truth channel has a model agent");
                (
                    id.0.to_string(),
                    seq.iter().map(|&s| agent.local_space.label(s).to_string()).collect(),
                )
            })
            .collect(),
        actions: gt
            .actions
            .iter()
            .map(|(id, seq)| {
                let agent = model.agent(*id).expect("truth channel has a model agent");
                (
                    id.0.to_string(),
                    seq.iter().map(|&a| agent.action_space.label(a).to_string()).collect(),
                )
            })
            .collect(),
    });
    let doc = TraceDoc {
        horizon: trace.horizon,
        global_obs: labels_of(&trace.global_obs, &model.global.obs_space),
        agent_obs,
        truth,
    };
    serde_json::to_string_pretty(&doc).expect("trace documents always serialize")
}

/// Parses a trace document against a model, resolving labels to indices.
/// Every model agent must have a channel, and no channel may name an agent
/// the model lacks.
pub fn trace_from_json<R: Real>(
    model: &AaseModel<R>,
    text: &str,
) -> Result<(ObservationTrace, Option<GroundTruth>), SchemaError> {
    let doc: TraceDoc = serde_json::from_str(text)?;
    if doc.global_obs.len() != doc.horizon {
        return Err(SchemaError::LengthMismatch {
            field: "global_obs".to_string(),
            expected: doc.horizon,
            got: doc.global_obs.len(),
        });
    }
    let global_obs = indices_of(&doc.global_obs, &model.global.obs_space, "global_obs")?;
    for key in doc.agent_obs.keys() {
        let known = key
            .parse::<u32>()
            .ok()
            .and_then(|id| model.agent(AgentId(id)))
            .is_some();
        if !known {
            return Err(SchemaError::UnknownAgent { key: key.clone() });
        }
    }
    let mut agent_obs = Vec::new();
    for agent in &model.agents {
        let key = agent.id.0.to_string();
        let seq = doc
            .agent_obs
            .get(&key)
            .ok_or(SchemaError::MissingAgentChannel { id: agent.id.0 })?;
        if seq.len() != doc.horizon {
            return Err(SchemaError::LengthMismatch {
                field: format!("agent_obs[{key}]"),
                expected: doc.horizon,
                got: seq.len(),
            });
        }
        agent_obs.push(AgentChannel {
            agent: agent.id,
            obs: indices_of(seq, &agent.obs_space, &format!("agent_obs[{key}]"))?,
        });
    }
    let truth = match doc.truth {
        None => None,
        Some(td) => {
            let resolve = |seq: &[String], space: &StateSpace, channel: &str| {
                seq.iter()
                    .enumerate()
                    .map(|(t, label)| {
                        space.index_of(label).ok_or_else(|| SchemaError::UnknownLabel {
                            channel: channel.to_string(),
                            step: t + 1,
                            label: label.clone(),
                        })
                    })
                    .collect::<Result<Vec<usize>, SchemaError>>()
            };
            let global_states = resolve(&td.global, &model.global.space, "truth.global")?;
            let mut local_states = Vec::new();
            let mut actions = Vec::new();
            for agent in &model.agents {
                let key = agent.id.0.to_string();
                if let Some(seq) = td.locals.get(&key) {
                    local_states.push((
                        agent.id,
                        resolve(seq, &agent.local_space, &format!("truth.locals[{key}]"))?,
                    ));
                }
                if let Some(seq) = td.actions.get(&key) {
                    actions.push((
                        agent.id,
                        resolve(seq, &agent.action_space, &format!("truth.actions[{key}]"))?,
                    ));
                }
            }
            Some(GroundTruth {
                global_states,
                local_states,
                actions,
            })
        }
    };
    Ok((
        ObservationTrace {
            horizon: doc.horizon,
            global_obs,
            agent_obs,
        },
        truth,
    ))
}

// ---------------------------------------------------------------------------
// posterior documents

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorDoc {
    pub labels: Vec<String>,
    pub engine: String,
    pub loglik: f64,
    /// Most probable label per step.
    pub map: Vec<String>,
    /// `marginals[t][s]` aligned with `labels`.
    pub marginals: Vec<Vec<f64>>,
}

pub fn engine_name(engine: EngineUsed) -> &'static str {
    match engine {
        EngineUsed::GlobalChainOnly => "global-chain-only",
        EngineUsed::ExactJoint => "exact-joint",
        EngineUsed::FactoredPairs => "factored-pairs",
    }
}

pub fn posterior_to_doc<R: Real>(post: &PosteriorSequence<R>, engine: EngineUsed) -> PosteriorDoc {
    PosteriorDoc {
        labels: post.space.labels().to_vec(),
        engine: engine_name(engine).to_string(),
        loglik: post.loglik.as_f64(),
        map: post
            .map_ix
            .iter()
            .map(|&ix| post.space.label(ix).to_string())
            .collect(),
        marginals: post
            .marginals
            .iter()
            .map(|row| row.iter().map(|v| v.as_f64()).collect())
            .collect(),
    }
}

pub fn posterior_to_json<R: Real>(post: &PosteriorSequence<R>, engine: EngineUsed) -> String {
    serde_json::to_string_pretty(&posterior_to_doc(post, engine))
        .expect("posterior documents always serialize")
}

pub fn posterior_from_json(text: &str) -> Result<PosteriorDoc, SchemaError> {
    Ok(serde_json::from_str(text)?)
}

/// One row per step: the 1-based step, the most probable label, then the
/// posterior mass of every global state.
pub fn posterior_to_csv<R: Real>(post: &PosteriorSequence<R>) -> String {
    let mut out = String::from("step,map_label");
    for label in post.space.labels() {
        out.push(',');
        out.push_str(&csv_field(label));
    }
    out.push('\n');
    for (t, row) in post.marginals.iter().enumerate() {
        out.push_str(&format!(
            "{},{}",
            t + 1,
            csv_field(post.space.label(post.map_ix[t]))
        ));
        for v in row {
            out.push_str(&format!(",{:.12}", v.as_f64()));
        }
        out.push('\n');
    }
    out
}

/// Quotes a CSV field only when it needs it.
pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
