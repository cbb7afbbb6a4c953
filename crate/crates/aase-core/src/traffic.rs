//! The four-way intersection instance: a two-direction light as the global
//! state, discretized vehicles as agents.
//!
//! The light state is a pair (parallel color, perpendicular color); all 9
//! pairs exist as labels so observation and transition tables stay
//! rectangular, but prior and transition mass is confined to a configured
//! legal cycle and every other pair is absorbing with zero inbound mass.
//! The external observer and the "parallel" vehicle group read the parallel
//! color; the "perpendicular" group reads the other one. A vehicle's local
//! state is position x velocity, its action steering x accelerator, and its
//! policy factorizes into steering (position only) times accelerator (own
//! light color, position, velocity), which makes the policy provably blind
//! to the cross-direction color.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{CondTable, Pmf};
use crate::model::{AaseModel, AgentChain, AgentId, GlobalChain};
use crate::num::Real;
use crate::space::StateSpace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Color {
    Red,
    Yellow,
    Green,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::Red, Color::Yellow, Color::Green];

    fn ix(self) -> usize {
        match self {
            Color::Red => 0,
            Color::Yellow => 1,
            Color::Green => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Color::Red => "Red",
            Color::Yellow => "Yellow",
            Color::Green => "Green",
        }
    }
}

impl std::fmt::Display for Color {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A light phase as (parallel color, perpendicular color).
pub type Phase = [Color; 2];

/// The default legal light sequence: green and yellow for the parallel
/// direction, then green and yellow for the perpendicular one, cycling.
pub fn legal_cycle_default() -> Vec<Phase> {
    vec![
        [Color::Green, Color::Red],
        [Color::Yellow, Color::Red],
        [Color::Red, Color::Green],
        [Color::Red, Color::Yellow],
    ]
}

pub const POSITIONS: [&str; 4] = [
    "AtIntersection",
    "TurningLeft",
    "DrivingStraight",
    "TurningRight",
];
pub const VELOCITIES: [&str; 3] = ["None", "Low", "High"];
pub const STEERINGS: [&str; 3] = ["Left", "Straight", "Right"];
pub const ACCELS: [&str; 3] = ["Minus", "Zero", "Plus"];

/// Everything tunable about the built intersection model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// Vehicles traveling the observer's direction.
    pub n_parallel: usize,
    /// Vehicles on the crossing road.
    pub n_perpendicular: usize,
    /// Light self-transition probability per step.
    pub self_stay: f64,
    /// Probability of advancing to the next phase of the cycle.
    pub advance: f64,
    /// Residual probability spread over the remaining legal phases.
    pub out_of_sequence: f64,
    /// Probability the light observation reports the true parallel color.
    pub z0_correct: f64,
    /// Probability a vehicle observation reports the true local state.
    pub zi_correct: f64,
    /// Weight on the lawful action in the driver policy.
    pub compliance: f64,
    /// Probability the accelerator's intended velocity change slips.
    pub velocity_noise: f64,
    /// Ordered legal phases; transitions advance along this cycle.
    pub legal_cycle: Vec<Phase>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            n_parallel: 1,
            n_perpendicular: 2,
            self_stay: 0.97,
            advance: 0.029,
            out_of_sequence: 0.001,
            z0_correct: 0.92,
            zi_correct: 0.95,
            compliance: 0.9,
            velocity_noise: 0.05,
            legal_cycle: legal_cycle_default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum TrafficError {
    #[error("{name} must lie in [0, 1], got {value}")]
    BadProbability { name: &'static str, value: f64 },
    #[error("self_stay + advance + out_of_sequence must sum to 1, got {sum}")]
    BadSplit { sum: f64 },
    #[error("legal cycle needs at least 2 phases, got {len}")]
    ShortCycle { len: usize },
    #[error("legal cycle repeats the phase {phase}")]
    RepeatedPhase { phase: String },
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let probs = [
            ("self_stay", self.self_stay),
            ("advance", self.advance),
            ("out_of_sequence", self.out_of_sequence),
            ("z0_correct", self.z0_correct),
            ("zi_correct", self.zi_correct),
            ("compliance", self.compliance),
            ("velocity_noise", self.velocity_noise),
        ];
        for (name, value) in probs {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(TrafficError::BadProbability { name, value });
            }
        }
        let sum = self.self_stay + self.advance + self.out_of_sequence;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(TrafficError::BadSplit { sum });
        }
        if self.legal_cycle.len() < 2 {
            return Err(TrafficError::ShortCycle {
                len: self.legal_cycle.len(),
            });
        }
        for (i, phase) in self.legal_cycle.iter().enumerate() {
            if self.legal_cycle[..i].contains(phase) {
                return Err(TrafficError::RepeatedPhase {
                    phase: phase_label(*phase),
                });
            }
        }
        Ok(())
    }
}

fn phase_index(phase: Phase) -> usize {
    phase[0].ix() * 3 + phase[1].ix()
}

fn phase_label(phase: Phase) -> String {
    format!("{}/{}", phase[0], phase[1])
}

/// Color of the light as seen from one of the two directions, for any of
/// the 9 phase indices (parallel-major layout).
fn color_component(state: usize, perpendicular: bool) -> usize {
    if perpendicular {
        state % 3
    } else {
        state / 3
    }
}

/// Velocity after one step under an accelerator input. The intended
/// one-level shift happens with probability 1 - noise; the slip mass is
/// split between not shifting and shifting the other way, with saturated
/// outcomes merged. Holding has no opposite, so Zero keeps the velocity
/// exactly.
fn velocity_kernel(vel: usize, accel: usize, noise: f64) -> [f64; 3] {
    let clamp = |v: isize| v.clamp(0, 2) as usize;
    let v = vel as isize;
    let mut out = [0.0; 3];
    let (intended, slip_a, slip_b) = match accel {
        0 => (clamp(v - 1), vel, clamp(v + 1)),
        1 => {
            out[vel] = 1.0;
            return out;
        }
        2 => (clamp(v + 1), vel, clamp(v - 1)),
        _ => unreachable!("accelerator index out of range"),
    };
    out[intended] += 1.0 - noise;
    out[slip_a] += noise / 2.0;
    out[slip_b] += noise / 2.0;
    out
}

/// Position after one step: a vehicle at the intersection that is actually
/// moving commits to the direction it steers; a stopped one stays put; a
/// committed position never changes.
fn next_position(pos: usize, steer: usize, vel: usize) -> usize {
    if pos == 0 && vel > 0 {
        steer + 1
    } else {
        pos
    }
}

/// Steering choice given position: undecided at the intersection, wheel
/// held straight (up to compliance) once committed.
fn steering_pmf(pos: usize, compliance: f64) -> [f64; 3] {
    if pos == 0 {
        [1.0 / 3.0; 3]
    } else {
        let rest = (1.0 - compliance) / 2.0;
        [rest, compliance, rest]
    }
}

/// Accelerator choice. At the intersection the driver reads their light:
/// green means go, red or yellow means brake to a stop and hold it. Poor
/// compliance leaks mostly into the adjacent milder action. Past the
/// intersection the light no longer applies: stopped vehicles get moving,
/// moving ones cruise.
fn accelerator_pmf(color: usize, pos: usize, vel: usize, compliance: f64) -> [f64; 3] {
    let c = compliance;
    if pos == 0 {
        let leak = 1.0 - c;
        if color == Color::Green.ix() {
            // favored Plus, leak mostly to Zero
            [leak * 0.1, leak * 0.9, c]
        } else if vel == 0 {
            // favored Zero: stay stopped; pulling away from a standstill
            // against the light is rare
            [leak * 0.99, c, leak * 0.01]
        } else {
            // favored Minus: brake
            [c, leak * 0.9, leak * 0.1]
        }
    } else {
        let rest = (1.0 - c) / 2.0;
        if vel == 0 {
            [rest, rest, c]
        } else {
            [rest, c, rest]
        }
    }
}

/// Builds the intersection model. Agents are numbered from 1 with the
/// parallel group first, then the perpendicular group.
pub fn build_traffic_model<R: Real>(config: &TrafficConfig) -> Result<AaseModel<R>, TrafficError> {
    config.validate()?;

    let light_labels: Vec<String> = (0..9)
        .map(|ix| phase_label([Color::ALL[ix / 3], Color::ALL[ix % 3]]))
        .collect();
    let light_space = StateSpace::new(light_labels);
    let color_space = StateSpace::new(Color::ALL.map(|c| c.name().to_string()));

    let legal: Vec<usize> = config.legal_cycle.iter().map(|p| phase_index(*p)).collect();

    // prior: uniform over the legal cycle, zero elsewhere
    let mut prior = vec![0.0; 9];
    for &s in &legal {
        prior[s] = 1.0 / legal.len() as f64;
    }

    // transition: stay / advance along the cycle / tiny out-of-sequence
    // residual over the other legal phases; illegal phases are absorbing
    let mut transition = vec![0.0; 9 * 9];
    for s in 0..9 {
        let row = &mut transition[s * 9..(s + 1) * 9];
        match legal.iter().position(|&l| l == s) {
            Some(p) => {
                let next = legal[(p + 1) % legal.len()];
                let others: Vec<usize> = legal
                    .iter()
                    .copied()
                    .filter(|&l| l != s && l != next)
                    .collect();
                row[s] += config.self_stay;
                if others.is_empty() {
                    row[next] += config.advance + config.out_of_sequence;
                } else {
                    row[next] += config.advance;
                    for &o in &others {
                        row[o] += config.out_of_sequence / others.len() as f64;
                    }
                }
            }
            None => row[s] = 1.0,
        }
    }

    // light observation: the parallel color, misread symmetrically
    let mut z0 = vec![0.0; 9 * 3];
    for s in 0..9 {
        let truth = color_component(s, false);
        for o in 0..3 {
            z0[s * 3 + o] = if o == truth {
                config.z0_correct
            } else {
                (1.0 - config.z0_correct) / 2.0
            };
        }
    }

    let global = GlobalChain {
        space: light_space,
        obs_space: color_space,
        prior: Pmf::new(prior.into_iter().map(R::of).collect()),
        transition: CondTable::new(vec![9], 9, transition.into_iter().map(R::of).collect()),
        obs_fn: CondTable::new(vec![9], 3, z0.into_iter().map(R::of).collect()),
    };

    let local_labels: Vec<String> = (0..12)
        .map(|ix| format!("{}/{}", POSITIONS[ix / 3], VELOCITIES[ix % 3]))
        .collect();
    let action_labels: Vec<String> = (0..9)
        .map(|ix| format!("{}/{}", STEERINGS[ix / 3], ACCELS[ix % 3]))
        .collect();

    // local prior: vehicles observed holding at the line dominate, since a
    // moving vehicle clears the intersection within a step
    let pos_prior = [0.85, 0.05, 0.05, 0.05];
    let vel_prior = [0.8, 0.15, 0.05];
    let local_prior: Vec<f64> = (0..12)
        .map(|ix| pos_prior[ix / 3] * vel_prior[ix % 3])
        .collect();

    // kinematics: deterministic position update times the velocity kernel
    let mut local_transition = vec![0.0; 12 * 9 * 12];
    for si in 0..12 {
        let (pos, vel) = (si / 3, si % 3);
        for a in 0..9 {
            let (steer, accel) = (a / 3, a % 3);
            let vk = velocity_kernel(vel, accel, config.velocity_noise);
            let npos = next_position(pos, steer, vel);
            let row = &mut local_transition[(si * 9 + a) * 12..(si * 9 + a + 1) * 12];
            for (nvel, p) in vk.iter().enumerate() {
                row[npos * 3 + nvel] += p;
            }
        }
    }

    // vehicle observation: mostly right, residual spread over the other
    // eleven local states
    let mut zi = vec![0.0; 12 * 12];
    for s in 0..12 {
        for o in 0..12 {
            zi[s * 12 + o] = if o == s {
                config.zi_correct
            } else {
                (1.0 - config.zi_correct) / 11.0
            };
        }
    }

    let policy_for = |perpendicular: bool| -> Vec<f64> {
        let mut table = vec![0.0; 9 * 12 * 9];
        for s0 in 0..9 {
            let color = color_component(s0, perpendicular);
            for si in 0..12 {
                let (pos, vel) = (si / 3, si % 3);
                let steer = steering_pmf(pos, config.compliance);
                let accel = accelerator_pmf(color, pos, vel, config.compliance);
                let row = &mut table[(s0 * 12 + si) * 9..(s0 * 12 + si + 1) * 9];
                for st in 0..3 {
                    for ac in 0..3 {
                        row[st * 3 + ac] = steer[st] * accel[ac];
                    }
                }
            }
        }
        table
    };

    let mut agents = Vec::new();
    for i in 0..config.n_parallel + config.n_perpendicular {
        let perpendicular = i >= config.n_parallel;
        agents.push(AgentChain {
            id: AgentId(i as u32 + 1),
            local_space: StateSpace::new(local_labels.clone()),
            action_space: StateSpace::new(action_labels.clone()),
            obs_space: StateSpace::new(local_labels.clone()),
            local_prior: Pmf::new(local_prior.iter().map(|&p| R::of(p)).collect()),
            policy: CondTable::new(
                vec![9, 12],
                9,
                policy_for(perpendicular).into_iter().map(R::of).collect(),
            ),
            local_transition: CondTable::new(
                vec![12, 9],
                12,
                local_transition.iter().map(|&p| R::of(p)).collect(),
            ),
            obs_fn: CondTable::new(vec![12], 12, zi.iter().map(|&p| R::of(p)).collect()),
        });
    }

    Ok(AaseModel { global, agents })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::agent_slice_kernel;
    use crate::model::validate_model;

    fn default_model() -> AaseModel {
        build_traffic_model(&TrafficConfig::default()).unwrap()
    }

    #[test]
    fn default_build_is_valid_and_sized_right() {
        let model = default_model();
        assert!(validate_model(&model).is_ok());
        assert_eq!(model.global.space.len(), 9);
        assert_eq!(model.global.obs_space.len(), 3);
        assert_eq!(model.agents.len(), 3);
        for a in &model.agents {
            assert_eq!(a.local_space.len(), 12);
            assert_eq!(a.action_space.len(), 9);
            assert_eq!(a.obs_space.len(), 12);
        }
        assert_eq!(model.global.space.label(6), "Green/Red");
        assert_eq!(model.global.space.label(0), "Red/Red");
    }

    #[test]
    fn mass_stays_on_the_legal_cycle() {
        let model = default_model();
        let legal: Vec<usize> = legal_cycle_default().iter().map(|p| phase_index(*p)).collect();
        for s in 0..9 {
            if legal.contains(&s) {
                assert!(model.global.prior.get(s) > 0.0);
            } else {
                assert_eq!(model.global.prior.get(s), 0.0);
                // no legal state may leak into an illegal one
                for &from in &legal {
                    assert_eq!(model.global.transition.value(&[from], s), 0.0);
                }
            }
        }
    }

    #[test]
    fn transition_split_matches_the_configuration() {
        let model = default_model();
        // from Green/Red: stay 0.97, advance to Yellow/Red 0.029, the two
        // remaining legal phases get 0.0005 each
        let from = phase_index([Color::Green, Color::Red]);
        let next = phase_index([Color::Yellow, Color::Red]);
        let t = &model.global.transition;
        assert!((t.value(&[from], from) - 0.97).abs() < 1e-15);
        assert!((t.value(&[from], next) - 0.029).abs() < 1e-15);
        for phase in [[Color::Red, Color::Green], [Color::Red, Color::Yellow]] {
            assert!((t.value(&[from], phase_index(phase)) - 0.0005).abs() < 1e-15);
        }
    }

    #[test]
    fn light_observation_reads_only_the_parallel_color() {
        let model = default_model();
        for s in 0..9 {
            let truth = s / 3;
            for o in 0..3 {
                let expected = if o == truth { 0.92 } else { 0.04 };
                assert!((model.global.obs_fn.value(&[s], o) - expected).abs() < 1e-15);
            }
            // states sharing a parallel color share the whole row
            let twin = (s / 3) * 3 + (s + 1) % 3;
            assert_eq!(
                model.global.obs_fn.row(&[s]),
                model.global.obs_fn.row(&[twin])
            );
        }
    }

    #[test]
    fn perfect_light_sensor_is_one_hot() {
        let config = TrafficConfig {
            z0_correct: 1.0,
            ..TrafficConfig::default()
        };
        let model: AaseModel = build_traffic_model(&config).unwrap();
        for s in 0..9 {
            let row = model.global.obs_fn.row(&[s]);
            assert_eq!(row[s / 3], 1.0);
            assert_eq!(row.iter().copied().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn vehicle_observation_diagonal_mass() {
        let model = default_model();
        let z = &model.agents[0].obs_fn;
        for s in 0..12 {
            assert!((z.value(&[s], s) - 0.95).abs() < 1e-15);
            assert!((z.value(&[s], (s + 1) % 12) - 0.05 / 11.0).abs() < 1e-15);
        }
    }

    #[test]
    fn policy_ignores_the_cross_direction_color() {
        let model = default_model();
        for (i, agent) in model.agents.iter().enumerate() {
            let perpendicular = i >= 1;
            for s0 in 0..9 {
                // vary the other direction's color, keep mine
                let mine = color_component(s0, perpendicular);
                for other in 0..3 {
                    let twin = if perpendicular {
                        other * 3 + mine
                    } else {
                        mine * 3 + other
                    };
                    for si in 0..12 {
                        assert_eq!(
                            agent.policy.row(&[s0, si]),
                            agent.policy.row(&[twin, si]),
                            "agent {i} s0 {s0} twin {twin}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn policy_does_depend_on_the_own_direction_color() {
        let model = default_model();
        let agent = &model.agents[0];
        let red = phase_index([Color::Red, Color::Green]);
        let green = phase_index([Color::Green, Color::Red]);
        // moving vehicle at the intersection
        let si = 1;
        assert_ne!(agent.policy.row(&[red, si]), agent.policy.row(&[green, si]));
    }

    #[test]
    fn stopped_car_at_red_stays_put_under_full_compliance() {
        let config = TrafficConfig {
            compliance: 1.0,
            velocity_noise: 0.0,
            ..TrafficConfig::default()
        };
        let model: AaseModel = build_traffic_model(&config).unwrap();
        let agent = &model.agents[0]; // parallel group
        let kernel = agent_slice_kernel(agent, 9);
        let red_for_parallel = phase_index([Color::Red, Color::Green]);
        let stopped = 0; // AtIntersection/None
        let row = &kernel[(red_for_parallel * 12 + stopped) * 12..][..12];
        assert_eq!(row[stopped], 1.0);
        assert_eq!(row.iter().copied().sum::<f64>(), 1.0);
    }

    #[test]
    fn saturated_velocity_merges_slip_mass() {
        let vk = velocity_kernel(2, 2, 0.05); // High, Plus
        assert!((vk[2] - 0.975).abs() < 1e-15);
        assert!((vk[1] - 0.025).abs() < 1e-15);
        assert_eq!(vk[0], 0.0);
        let vk = velocity_kernel(0, 1, 0.05); // None, Zero
        assert_eq!(vk[0], 1.0);
        assert_eq!(vk[1], 0.0);
    }

    #[test]
    fn config_validation_catches_bad_splits_and_ranges() {
        let bad = TrafficConfig {
            advance: 0.5,
            ..TrafficConfig::default()
        };
        assert!(matches!(bad.validate(), Err(TrafficError::BadSplit { .. })));
        let bad = TrafficConfig {
            z0_correct: 1.2,
            ..TrafficConfig::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(TrafficError::BadProbability { name: "z0_correct", .. })
        ));
        let bad = TrafficConfig {
            legal_cycle: vec![[Color::Green, Color::Red]],
            ..TrafficConfig::default()
        };
        assert!(matches!(bad.validate(), Err(TrafficError::ShortCycle { .. })));
        let bad = TrafficConfig {
            legal_cycle: vec![
                [Color::Green, Color::Red],
                [Color::Green, Color::Red],
            ],
            ..TrafficConfig::default()
        };
        assert!(matches!(bad.validate(), Err(TrafficError::RepeatedPhase { .. })));
    }

    #[test]
    fn velocity_kernel_rows_are_stochastic() {
        for vel in 0..3 {
            for accel in 0..3 {
                let vk = velocity_kernel(vel, accel, 0.05);
                assert!((vk.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
