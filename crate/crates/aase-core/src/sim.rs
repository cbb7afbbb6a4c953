//! Ancestral sampling, occlusion injection, and scoring.
//!
//! The simulator draws a ground-truth trajectory plus a fully observed
//! trace; occlusion patterns then knock observations out of the global
//! channel the way a blocked camera would, and the scoring helpers compare
//! a decoded label sequence against the truth.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::dist::sample_index;
use crate::model::AaseModel;
use crate::num::Real;
use crate::space::StateSpace;
use crate::trace::{AgentChannel, GroundTruth, ObservationTrace};

/// Samples one trajectory and its observations.
///
/// Draw order is fixed and documented so seeds stay meaningful across
/// versions: at the first step the global state, then each agent's local
/// state in model order; at every later step the global state, then per
/// agent its action followed by its local state; after the states of a
/// step, the global observation and then each agent's observation. The
/// action drawn at step τ conditions on the states of step τ-1.
pub fn simulate<R: Real>(
    model: &AaseModel<R>,
    horizon: usize,
    seed: u64,
) -> (GroundTruth, ObservationTrace) {
    assert!(horizon >= 1, "horizon must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.agents.len();

    let mut global_states = Vec::with_capacity(horizon);
    let mut local_states: Vec<Vec<usize>> = vec![Vec::with_capacity(horizon); n];
    let mut actions: Vec<Vec<usize>> = vec![Vec::with_capacity(horizon - 1); n];
    let mut global_obs = Vec::with_capacity(horizon);
    let mut agent_obs: Vec<Vec<Option<usize>>> = vec![Vec::with_capacity(horizon); n];

    for t in 0..horizon {
        if t == 0 {
            global_states.push(model.global.prior.sample(&mut rng));
            for (i, agent) in model.agents.iter().enumerate() {
                local_states[i].push(agent.local_prior.sample(&mut rng));
            }
        } else {
            let prev_global = global_states[t - 1];
            global_states.push(sample_index(
                model.global.transition.row(&[prev_global]),
                &mut rng,
            ));
            for (i, agent) in model.agents.iter().enumerate() {
                let prev_local = local_states[i][t - 1];
                let a = sample_index(agent.policy.row(&[prev_global, prev_local]), &mut rng);
                actions[i].push(a);
                local_states[i].push(sample_index(
                    agent.local_transition.row(&[prev_local, a]),
                    &mut rng,
                ));
            }
        }
        global_obs.push(Some(sample_index(
            model.global.obs_fn.row(&[global_states[t]]),
            &mut rng,
        )));
        for (i, agent) in model.agents.iter().enumerate() {
            agent_obs[i].push(Some(sample_index(
                agent.obs_fn.row(&[local_states[i][t]]),
                &mut rng,
            )));
        }
    }

    let truth = GroundTruth {
        global_states,
        local_states: model
            .agents
            .iter()
            .zip(local_states)
            .map(|(a, s)| (a.id, s))
            .collect(),
        actions: model
            .agents
            .iter()
            .zip(actions)
            .map(|(a, s)| (a.id, s))
            .collect(),
    };
    let trace = ObservationTrace {
        horizon,
        global_obs,
        agent_obs: model
            .agents
            .iter()
            .zip(agent_obs)
            .map(|(a, obs)| AgentChannel { agent: a.id, obs })
            .collect(),
    };
    (truth, trace)
}

/// How the global observation channel gets degraded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OcclusionKind {
    /// The first ceil(x*t) observations are dropped.
    ContStart,
    /// The last ceil(x*t) observations are dropped.
    ContEnd,
    /// A contiguous ceil(x*t) window at a seeded uniform start is dropped.
    ContRandom,
    /// Each observation is independently dropped with probability x.
    DiscontRandom,
}

impl OcclusionKind {
    pub const ALL: [OcclusionKind; 4] = [
        OcclusionKind::ContStart,
        OcclusionKind::ContEnd,
        OcclusionKind::ContRandom,
        OcclusionKind::DiscontRandom,
    ];

    /// True when different seeds can produce different drop sets.
    pub fn is_random(self) -> bool {
        matches!(self, OcclusionKind::ContRandom | OcclusionKind::DiscontRandom)
    }
}

impl std::fmt::Display for OcclusionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            OcclusionKind::ContStart => "ContStart",
            OcclusionKind::ContEnd => "ContEnd",
            OcclusionKind::ContRandom => "ContRandom",
            OcclusionKind::DiscontRandom => "DiscontRandom",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcclusionPattern {
    pub kind: OcclusionKind,
    /// Fraction of the horizon to occlude, in [0, 1].
    pub fraction: f64,
    /// Seed for the random kinds; ignored by ContStart and ContEnd.
    pub seed: u64,
}

impl OcclusionPattern {
    pub fn new(kind: OcclusionKind, fraction: f64, seed: u64) -> Self {
        assert!(
            (0.0..=1.0).contains(&fraction),
            "occlusion fraction must lie in [0, 1]"
        );
        OcclusionPattern {
            kind,
            fraction,
            seed,
        }
    }
}

/// ceil(fraction * horizon) with a guard against representation error:
/// 0.2 * 300 lands a few ulps above 60.0 and must still round to 60, not
/// 61. Fractions are human-entered decimals, so anything within 1e-9 of an
/// integer is treated as that integer.
pub(crate) fn window_len(fraction: f64, horizon: usize) -> usize {
    let v = fraction * horizon as f64;
    ((v - 1e-9).ceil().max(0.0) as usize).min(horizon)
}

/// Drops global-channel observations per the pattern. Agent channels and
/// surviving entries are returned untouched.
pub fn apply_occlusion(trace: &ObservationTrace, pattern: &OcclusionPattern) -> ObservationTrace {
    apply_occlusion_channels(trace, pattern, false)
}

/// Like [`apply_occlusion`], optionally extending the same drop set to
/// every agent channel (an ablation mode; the standard protocol blinds
/// only the light).
pub fn apply_occlusion_channels(
    trace: &ObservationTrace,
    pattern: &OcclusionPattern,
    include_agents: bool,
) -> ObservationTrace {
    assert!(
        (0.0..=1.0).contains(&pattern.fraction),
        "occlusion fraction must lie in [0, 1]"
    );
    let t = trace.horizon;
    let mut dropped = vec![false; t];
    match pattern.kind {
        OcclusionKind::ContStart => {
            let w = window_len(pattern.fraction, t);
            dropped[..w].fill(true);
        }
        OcclusionKind::ContEnd => {
            let w = window_len(pattern.fraction, t);
            dropped[t - w..].fill(true);
        }
        OcclusionKind::ContRandom => {
            let w = window_len(pattern.fraction, t);
            let mut rng = ChaCha8Rng::seed_from_u64(pattern.seed);
            let start = if w >= t { 0 } else { rng.gen_range(0..=t - w) };
            dropped[start..start + w].fill(true);
        }
        OcclusionKind::DiscontRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(pattern.seed);
            for d in dropped.iter_mut() {
                *d = rng.gen::<f64>() < pattern.fraction;
            }
        }
    }

    let mut out = trace.clone();
    for (slot, d) in out.global_obs.iter_mut().zip(dropped.iter()) {
        if *d {
            *slot = None;
        }
    }
    if include_agents {
        for ch in out.agent_obs.iter_mut() {
            for (slot, d) in ch.obs.iter_mut().zip(dropped.iter()) {
                if *d {
                    *slot = None;
                }
            }
        }
    }
    out
}

/// Mean 0-1 agreement between two label sequences.
pub fn accuracy(predicted: &[String], truth: &[String]) -> f64 {
    assert_eq!(
        predicted.len(),
        truth.len(),
        "accuracy needs sequences of equal length"
    );
    assert!(!truth.is_empty(), "accuracy of empty sequences is undefined");
    let hits = predicted
        .iter()
        .zip(truth.iter())
        .filter(|(p, t)| p == t)
        .count();
    hits as f64 / truth.len() as f64
}

/// The most frequent label across a corpus of truth sequences, ties going
/// to the label with the lowest index in `space`. The constant predictor
/// using this label is the floor any informed method must beat.
pub fn majority_baseline<'a, I>(space: &StateSpace, corpus: I) -> String
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut counts = vec![0usize; space.len()];
    let mut total = 0usize;
    for seq in corpus {
        for label in seq {
            let ix = space
                .index_of(label)
                .unwrap_or_else(|| panic!("label {label:?} is not in the state space"));
            counts[ix] += 1;
            total += 1;
        }
    }
    assert!(total > 0, "majority baseline needs a non-empty corpus");
    let best = (0..counts.len()).max_by_key(|&i| counts[i]).unwrap();
    let best = (0..counts.len()).find(|&i| counts[i] == counts[best]).unwrap();
    space.label(best).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{CondTable, Pmf};
    use crate::model::{AgentChain, AgentId, GlobalChain};
    use crate::space::StateSpace;

    fn tiny_model() -> AaseModel {
        AaseModel {
            global: GlobalChain {
                space: StateSpace::new(["A", "B"]),
                obs_space: StateSpace::new(["a", "b"]),
                prior: Pmf::new(vec![0.5, 0.5]),
                transition: CondTable::new(vec![2], 2, vec![0.9, 0.1, 0.2, 0.8]),
                obs_fn: CondTable::new(vec![2], 2, vec![0.8, 0.2, 0.2, 0.8]),
            },
            agents: vec![AgentChain {
                id: AgentId(1),
                local_space: StateSpace::new(["x", "y"]),
                action_space: StateSpace::new(["s", "g"]),
                obs_space: StateSpace::new(["ox", "oy"]),
                local_prior: Pmf::new(vec![0.7, 0.3]),
                policy: CondTable::new(vec![2, 2], 2, vec![0.9, 0.1, 0.5, 0.5, 0.2, 0.8, 0.4, 0.6]),
                local_transition: CondTable::new(
                    vec![2, 2],
                    2,
                    vec![1.0, 0.0, 0.0, 1.0, 0.3, 0.7, 0.1, 0.9],
                ),
                obs_fn: CondTable::new(vec![2], 2, vec![0.9, 0.1, 0.2, 0.8]),
            }],
        }
    }

    #[test]
    fn same_seed_same_everything() {
        let model = tiny_model();
        let (t1, o1) = simulate(&model, 20, 42);
        let (t2, o2) = simulate(&model, 20, 42);
        assert_eq!(t1.global_states, t2.global_states);
        assert_eq!(t1.local_states, t2.local_states);
        assert_eq!(t1.actions, t2.actions);
        assert_eq!(o1, o2);
        let (_, o3) = simulate(&model, 20, 43);
        assert_ne!(o1, o3);
    }

    #[test]
    fn deterministic_model_has_one_trajectory() {
        let mut model = tiny_model();
        model.global.prior = Pmf::new(vec![1.0, 0.0]);
        model.global.transition = CondTable::new(vec![2], 2, vec![0.0, 1.0, 1.0, 0.0]);
        model.global.obs_fn = CondTable::new(vec![2], 2, vec![1.0, 0.0, 0.0, 1.0]);
        model.agents.clear();
        for seed in [0, 1, 99] {
            let (truth, trace) = simulate(&model, 4, seed);
            assert_eq!(truth.global_states, vec![0, 1, 0, 1]);
            assert_eq!(
                trace.global_obs,
                vec![Some(0), Some(1), Some(0), Some(1)]
            );
        }
    }

    #[test]
    fn shapes_line_up() {
        let model = tiny_model();
        let (truth, trace) = simulate(&model, 7, 5);
        assert_eq!(truth.global_states.len(), 7);
        assert_eq!(truth.local_states[0].1.len(), 7);
        assert_eq!(truth.actions[0].1.len(), 6);
        assert!(trace.check_against(&model).is_ok());
        assert!(trace.global_obs.iter().all(|o| o.is_some()));
    }

    #[test]
    fn empirical_transition_frequency_tracks_the_table() {
        // ~10k transitions from state A; the 0.9 self-loop should show up
        // in the sample frequency within 3 standard errors.
        let mut model = tiny_model();
        model.agents.clear();
        model.global.transition = CondTable::new(vec![2], 2, vec![0.9, 0.1, 0.1, 0.9]);
        let (truth, _) = simulate(&model, 10_001, 7);
        let mut from_a = 0usize;
        let mut a_stays = 0usize;
        for w in truth.global_states.windows(2) {
            if w[0] == 0 {
                from_a += 1;
                if w[1] == 0 {
                    a_stays += 1;
                }
            }
        }
        let freq = a_stays as f64 / from_a as f64;
        let se = (0.9 * 0.1 / from_a as f64).sqrt();
        assert!(
            (freq - 0.9).abs() < 3.0 * se,
            "freq {freq} from {from_a} transitions"
        );
    }

    fn full_trace(t: usize) -> ObservationTrace {
        ObservationTrace {
            horizon: t,
            global_obs: (0..t).map(|i| Some(i % 2)).collect(),
            agent_obs: vec![AgentChannel {
                agent: AgentId(1),
                obs: (0..t).map(|i| Some(i % 2)).collect(),
            }],
        }
    }

    #[test]
    fn continuous_windows_have_exact_ceil_length() {
        for t in [10, 300] {
            for fraction in [0.0, 0.2, 0.33, 0.5, 0.8, 1.0] {
                let expected = (fraction * t as f64 - 1e-9).ceil().max(0.0) as usize;
                for kind in [
                    OcclusionKind::ContStart,
                    OcclusionKind::ContEnd,
                    OcclusionKind::ContRandom,
                ] {
                    let out = apply_occlusion(
                        &full_trace(t),
                        &OcclusionPattern::new(kind, fraction, 11),
                    );
                    let missing = out.global_obs.iter().filter(|o| o.is_none()).count();
                    assert_eq!(missing, expected, "{kind} {fraction} {t}");
                }
            }
        }
    }

    #[test]
    fn fraction_point_two_of_300_is_exactly_60() {
        // 0.2 * 300 is a hair above 60.0 in binary; the guard keeps the
        // ceiling from inflating the window to 61.
        assert_eq!(window_len(0.2, 300), 60);
        assert_eq!(window_len(0.33, 10), 4);
        assert_eq!(window_len(1.0, 300), 300);
        assert_eq!(window_len(0.0, 300), 0);
    }

    #[test]
    fn start_and_end_windows_sit_where_promised() {
        let out = apply_occlusion(
            &full_trace(10),
            &OcclusionPattern::new(OcclusionKind::ContStart, 0.4, 0),
        );
        assert!(out.global_obs[..4].iter().all(|o| o.is_none()));
        assert!(out.global_obs[4..].iter().all(|o| o.is_some()));
        let out = apply_occlusion(
            &full_trace(10),
            &OcclusionPattern::new(OcclusionKind::ContEnd, 0.4, 0),
        );
        assert!(out.global_obs[..6].iter().all(|o| o.is_some()));
        assert!(out.global_obs[6..].iter().all(|o| o.is_none()));
    }

    #[test]
    fn random_window_is_contiguous_and_seeded() {
        let trace = full_trace(50);
        let p = OcclusionPattern::new(OcclusionKind::ContRandom, 0.3, 9);
        let a = apply_occlusion(&trace, &p);
        let b = apply_occlusion(&trace, &p);
        assert_eq!(a, b);
        let missing: Vec<usize> = a
            .global_obs
            .iter()
            .enumerate()
            .filter_map(|(i, o)| o.is_none().then_some(i))
            .collect();
        assert_eq!(missing.len(), 15);
        assert_eq!(missing.last().unwrap() - missing[0], 14);
    }

    #[test]
    fn independent_drops_hit_roughly_the_requested_fraction() {
        let trace = full_trace(400);
        let mut total = 0usize;
        let runs = 50;
        for seed in 0..runs {
            let out = apply_occlusion(
                &trace,
                &OcclusionPattern::new(OcclusionKind::DiscontRandom, 0.3, seed),
            );
            total += out.global_obs.iter().filter(|o| o.is_none()).count();
        }
        let mean = total as f64 / runs as f64;
        let se = (0.3 * 0.7 * 400.0 / runs as f64).sqrt();
        assert!((mean - 120.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn agent_channels_survive_unless_extension_is_asked_for() {
        let trace = full_trace(10);
        let p = OcclusionPattern::new(OcclusionKind::ContStart, 1.0, 0);
        let out = apply_occlusion(&trace, &p);
        assert!(out.global_obs.iter().all(|o| o.is_none()));
        assert_eq!(out.agent_obs, trace.agent_obs);
        let out = apply_occlusion_channels(&trace, &p, true);
        assert!(out.agent_obs[0].obs.iter().all(|o| o.is_none()));
    }

    #[test]
    fn zero_fraction_is_identity() {
        let trace = full_trace(10);
        for kind in OcclusionKind::ALL {
            let out = apply_occlusion(&trace, &OcclusionPattern::new(kind, 0.0, 3));
            assert_eq!(out, trace);
        }
    }

    #[test]
    fn accuracy_counts_matches() {
        let a: Vec<String> = ["x", "y", "x", "x"].iter().map(|s| s.to_string()).collect();
        let b: Vec<String> = ["x", "x", "x", "y"].iter().map(|s| s.to_string()).collect();
        assert_eq!(accuracy(&a, &a), 1.0);
        assert_eq!(accuracy(&a, &b), 0.5);
    }

    #[test]
    fn majority_label_wins_with_lowest_index_tie_break() {
        let space = StateSpace::new(["g", "r", "c", "b"].map(String::from).to_vec());
        let s1: Vec<String> = ["r", "r", "g"].iter().map(|s| s.to_string()).collect();
        let s2: Vec<String> = ["g", "r"].iter().map(|s| s.to_string()).collect();
        assert_eq!(majority_baseline(&space, [s1.as_slice(), s2.as_slice()]), "r");
        // the corpus meets "c" first, but "g" sits earlier in the space
        let tie: Vec<String> = ["c", "g", "g", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(majority_baseline(&space, [tie.as_slice()]), "g");
    }
}
