//! Posterior by exhaustive enumeration of the unrolled graph.
//!
//! Every joint assignment of every variable (global states, local states,
//! actions) is scored as the product of all factor values. This is the
//! independent check the message-passing engines are tested against; it is
//! exponential in everything and guarded by an assignment cap.

use crate::graph::{attach_evidence, unroll, VarKind};
use crate::model::AaseModel;
use crate::num::Real;
use crate::trace::ObservationTrace;

use super::{InferenceError, PosteriorSequence};

/// Default ceiling on the number of joint assignments to enumerate.
pub const BRUTE_FORCE_DEFAULT_CAP: usize = 10_000_000;

/// Smoothed global-state marginals and evidence log-probability, computed
/// by brute force. Fails with an enumeration-cap error instead of running
/// for hours when the assignment count exceeds `cap`.
pub fn brute_force_posterior<R: Real>(
    model: &AaseModel<R>,
    trace: &ObservationTrace,
    cap: usize,
) -> Result<PosteriorSequence<R>, InferenceError> {
    trace.check_against(model)?;
    let horizon = trace.horizon;
    let graph = attach_evidence(&unroll(model, horizon), model, trace);
    let cards = graph.cards();

    let mut total: usize = 1;
    for &c in &cards {
        total = total.checked_mul(c).unwrap_or(usize::MAX);
    }
    if total > cap {
        return Err(InferenceError::EnumerationCap {
            assignments: total,
            cap,
        });
    }

    let global_vars: Vec<usize> = (0..horizon)
        .map(|t| {
            graph
                .var_index(VarKind::Global(t))
                .expect("unrolled graph has a global variable per step")
        })
        .collect();
    let k0 = model.global.space.len();

    let mut marginals = vec![vec![R::zero(); k0]; horizon];
    let mut z = R::zero();
    let mut assignment = vec![0usize; cards.len()];
    loop {
        let mut w = R::one();
        for f in &graph.factors {
            w = w * f.value_at(&assignment, &cards);
            if w == R::zero() {
                break;
            }
        }
        if w > R::zero() {
            z = z + w;
            for (t, &v) in global_vars.iter().enumerate() {
                marginals[t][assignment[v]] = marginals[t][assignment[v]] + w;
            }
        }
        // odometer increment, least-significant variable last
        let mut pos = cards.len();
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            assignment[pos] += 1;
            if assignment[pos] < cards[pos] {
                break;
            }
            assignment[pos] = 0;
        }
        if pos == 0 && assignment[0] == 0 {
            break;
        }
    }

    if z <= R::zero() {
        return Err(InferenceError::ZeroSupport {
            step: 1,
            variable: "the joint trajectory".into(),
        });
    }
    for row in marginals.iter_mut() {
        for v in row.iter_mut() {
            *v = *v / z;
        }
    }
    Ok(PosteriorSequence::from_marginals(
        model.global.space.clone(),
        marginals,
        z.ln(),
    ))
}
