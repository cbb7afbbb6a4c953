//! Random model and trace generation shared by the integration suites.
//!
//! Shapes are resampled until the unrolled assignment space fits a budget,
//! so brute-force enumeration stays cheap no matter the draw. Every table
//! row is strictly positive, which keeps random traces consistent with the
//! model (no zero-support rejections to special-case).

// Each suite compiles its own copy of this module and none uses every helper.
#![allow(dead_code)]

use aase_core::dist::{CondTable, Pmf};
use aase_core::{
    AaseModel, AgentChain, AgentChannel, AgentId, GlobalChain, ObservationTrace, StateSpace,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct ShapeLimits {
    pub max_states: usize,
    pub max_agents: usize,
    pub max_horizon: usize,
    /// Largest unrolled assignment count a draw may have.
    pub assignment_budget: u128,
}

impl Default for ShapeLimits {
    fn default() -> Self {
        ShapeLimits {
            max_states: 4,
            max_agents: 2,
            max_horizon: 3,
            assignment_budget: 2_000_000,
        }
    }
}

fn labeled(prefix: &str, k: usize) -> StateSpace {
    StateSpace::new((0..k).map(|i| format!("{prefix}{i}")))
}

fn random_row<G: Rng>(rng: &mut G, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 0.05).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

fn random_table<G: Rng>(rng: &mut G, cond_dims: Vec<usize>, out: usize) -> CondTable {
    let rows: usize = cond_dims.iter().product();
    let mut data = Vec::with_capacity(rows * out);
    for _ in 0..rows {
        data.extend(random_row(rng, out));
    }
    CondTable::new(cond_dims, out, data)
}

/// A random valid model plus a horizon that together respect `limits`.
pub fn random_model(seed: u64, limits: &ShapeLimits) -> (AaseModel, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(0..=limits.max_agents);
    random_model_shaped(&mut rng, limits, n)
}

/// Like [`random_model`] with the agent count pinned.
pub fn random_model_with_agents(
    seed: u64,
    limits: &ShapeLimits,
    agents: usize,
) -> (AaseModel, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_model_shaped(&mut rng, limits, agents)
}

fn random_model_shaped(
    rng: &mut ChaCha8Rng,
    limits: &ShapeLimits,
    n: usize,
) -> (AaseModel, usize) {
    loop {
        let dim = |rng: &mut ChaCha8Rng| rng.gen_range(2..=limits.max_states);
        let horizon = rng.gen_range(1..=limits.max_horizon);
        let k0 = dim(rng);
        let o0 = dim(rng);
        let shapes: Vec<(usize, usize, usize)> =
            (0..n).map(|_| (dim(rng), dim(rng), dim(rng))).collect();

        // reject oversized draws before building any table
        let mut total = (k0 as u128).pow(horizon as u32);
        for &(ki, ai, _) in &shapes {
            total = total.saturating_mul((ki as u128).pow(horizon as u32));
            total =
                total.saturating_mul((ai as u128).pow(horizon.saturating_sub(1) as u32));
        }
        if total > limits.assignment_budget {
            continue;
        }

        let global = GlobalChain {
            space: labeled("G", k0),
            obs_space: labeled("y", o0),
            prior: Pmf::new(random_row(rng, k0)),
            transition: random_table(rng, vec![k0], k0),
            obs_fn: random_table(rng, vec![k0], o0),
        };
        let agents = shapes
            .iter()
            .enumerate()
            .map(|(i, &(ki, ai, oi))| AgentChain {
                id: AgentId(i as u32 + 1),
                local_space: labeled(&format!("s{}_", i + 1), ki),
                action_space: labeled(&format!("u{}_", i + 1), ai),
                obs_space: labeled(&format!("z{}_", i + 1), oi),
                local_prior: Pmf::new(random_row(rng, ki)),
                policy: random_table(rng, vec![k0, ki], ai),
                local_transition: random_table(rng, vec![ki, ai], ki),
                obs_fn: random_table(rng, vec![ki], oi),
            })
            .collect();
        return (AaseModel { global, agents }, horizon);
    }
}

/// A uniformly random trace with roughly `missing` of all slots blank.
pub fn random_trace(
    model: &AaseModel,
    horizon: usize,
    missing: f64,
    seed: u64,
) -> ObservationTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slot = |space: usize| {
        if rng.gen::<f64>() < missing {
            None
        } else {
            Some(rng.gen_range(0..space))
        }
    };
    let global_obs = (0..horizon)
        .map(|_| slot(model.global.obs_space.len()))
        .collect();
    let agent_obs = model
        .agents
        .iter()
        .map(|a| AgentChannel {
            agent: a.id,
            obs: (0..horizon).map(|_| slot(a.obs_space.len())).collect(),
        })
        .collect();
    ObservationTrace {
        horizon,
        global_obs,
        agent_obs,
    }
}
