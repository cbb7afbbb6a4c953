//! Scaled forward-backward over the global chain alone.
//!
//! This is the baseline estimator: agent channels are ignored entirely. It
//! is also the exact answer for agentless models, and the code path those
//! dispatch to.

use crate::model::GlobalChain;
use crate::num::Real;

use super::{InferenceError, PosteriorSequence, Sweep};

/// Smoothed per-step posteriors over the global state given the global
/// observation channel. `None` entries contribute a uniform likelihood,
/// which is the same as skipping the evidence factor.
pub fn hmm_smooth<R: Real>(
    global: &GlobalChain<R>,
    obs: &[Option<usize>],
) -> Result<PosteriorSequence<R>, InferenceError> {
    hmm_smooth_sweep(global, obs, Sweep::Smoothing)
}

pub(crate) fn hmm_smooth_sweep<R: Real>(
    global: &GlobalChain<R>,
    obs: &[Option<usize>],
    sweep: Sweep,
) -> Result<PosteriorSequence<R>, InferenceError> {
    let horizon = obs.len();
    assert!(horizon >= 1, "horizon must be at least 1");
    let k = global.space.len();

    let likelihood = |o: Option<usize>| -> Option<Vec<R>> {
        o.map(|sym| (0..k).map(|s| global.obs_fn.value(&[s], sym)).collect())
    };

    // Forward: filtered beliefs, renormalized each step; the normalizers are
    // the stepwise evidence probabilities.
    let mut filtered: Vec<Vec<R>> = Vec::with_capacity(horizon);
    let mut scales: Vec<R> = Vec::with_capacity(horizon);
    let mut loglik = R::zero();
    for t in 0..horizon {
        let mut belief: Vec<R> = if t == 0 {
            global.prior.as_slice().to_vec()
        } else {
            let prev = &filtered[t - 1];
            let mut pred = vec![R::zero(); k];
            for (s, &w) in prev.iter().enumerate() {
                if w == R::zero() {
                    continue;
                }
                let row = global.transition.row(&[s]);
                for (next, p) in row.iter().enumerate() {
                    pred[next] = pred[next] + w * *p;
                }
            }
            pred
        };
        if let Some(lik) = likelihood(obs[t]) {
            for (b, l) in belief.iter_mut().zip(lik.iter()) {
                *b = *b * *l;
            }
        }
        let c: R = belief.iter().copied().sum();
        if c <= R::zero() {
            return Err(InferenceError::ZeroSupport {
                step: t + 1,
                variable: format!("global state at step {}", t + 1),
            });
        }
        for b in belief.iter_mut() {
            *b = *b / c;
        }
        loglik = loglik + c.ln();
        scales.push(c);
        filtered.push(belief);
    }

    if sweep == Sweep::Filtering {
        return Ok(PosteriorSequence::from_marginals(
            global.space.clone(),
            filtered,
            loglik,
        ));
    }

    // Backward: scaled likelihood of the future, combined multiplicatively
    // with the filtered beliefs.
    let mut marginals = vec![Vec::new(); horizon];
    let mut beta = vec![R::one(); k];
    marginals[horizon - 1] = filtered[horizon - 1].clone();
    for t in (0..horizon - 1).rev() {
        let lik = likelihood(obs[t + 1]);
        let mut carried = vec![R::zero(); k];
        for s in 0..k {
            let row = global.transition.row(&[s]);
            let mut acc = R::zero();
            for next in 0..k {
                let l = lik.as_ref().map_or(R::one(), |lv| lv[next]);
                acc = acc + row[next] * l * beta[next];
            }
            carried[s] = acc / scales[t + 1];
        }
        beta = carried;
        let mut m: Vec<R> = filtered[t]
            .iter()
            .zip(beta.iter())
            .map(|(a, b)| *a * *b)
            .collect();
        let z: R = m.iter().copied().sum();
        debug_assert!(z > R::zero());
        for v in m.iter_mut() {
            *v = *v / z;
        }
        marginals[t] = m;
    }

    Ok(PosteriorSequence::from_marginals(
        global.space.clone(),
        marginals,
        loglik,
    ))
}
