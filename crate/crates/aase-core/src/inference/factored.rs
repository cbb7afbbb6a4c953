//! Factored smoothing: one (global state, local state) pair belief per
//! agent, kept consistent on the shared global axis.
//!
//! Each agent's channel is summarized for everyone else as a likelihood
//! ratio over the global state (its "collapse"). A pair absorbs its own
//! evidence in full and every other channel only through that collapse.
//! All pairs then agree on the global margin and on the step normalizer,
//! which is what keeps the recursion stable.
//!
//! Cost is linear in the number of agents and the per-step belief never
//! grows past one pair. With at most one agent the pair is the whole
//! slice, so the result is exact; the same holds whenever the global state
//! cannot change, because the agents really are independent given it. With
//! several agents and a mixing global chain the collapse discards the
//! correlation between agents that the global transition induces, and the
//! result is a close approximation rather than the exact posterior.

use crate::model::AaseModel;
use crate::num::Real;
use crate::trace::ObservationTrace;

use super::{agent_slice_kernel, hmm, InferenceError, PosteriorSequence, Sweep};

pub(crate) fn smooth_factored<R: Real>(
    model: &AaseModel<R>,
    trace: &ObservationTrace,
    sweep: Sweep,
) -> Result<PosteriorSequence<R>, InferenceError> {
    if model.agents.is_empty() {
        return hmm::hmm_smooth_sweep(&model.global, &trace.global_obs, sweep);
    }

    let horizon = trace.horizon;
    let k0 = model.global.space.len();
    let n = model.agents.len();
    let dims: Vec<usize> = model.agents.iter().map(|a| a.local_space.len()).collect();
    let kernels: Vec<Vec<R>> = model
        .agents
        .iter()
        .map(|a| agent_slice_kernel(a, k0))
        .collect();
    let channels: Vec<&[Option<usize>]> = model
        .agents
        .iter()
        .map(|a| {
            trace
                .channel(a.id)
                .expect("trace was checked against the model")
        })
        .collect();

    let global_lik = |t: usize| -> Option<Vec<R>> {
        trace.global_obs[t]
            .map(|sym| (0..k0).map(|s| model.global.obs_fn.value(&[s], sym)).collect())
    };

    // Forward sweep. Per step we keep, for every agent, the filtered pair
    // belief and the collapse its evidence applied to the global margin.
    let mut pairs: Vec<Vec<Vec<R>>> = Vec::with_capacity(horizon);
    let mut lambdas: Vec<Vec<Vec<R>>> = Vec::with_capacity(horizon);
    let mut globals: Vec<Vec<R>> = Vec::with_capacity(horizon);
    let mut scales: Vec<R> = Vec::with_capacity(horizon);
    let mut loglik = R::zero();

    for t in 0..horizon {
        // Predictive pair beliefs and their common global margin.
        let mut pred: Vec<Vec<R>> = Vec::with_capacity(n);
        let mut margin = vec![R::zero(); k0];
        if t == 0 {
            for (s0, m) in margin.iter_mut().enumerate() {
                *m = model.global.prior.get(s0);
            }
            for (i, agent) in model.agents.iter().enumerate() {
                let ki = dims[i];
                let mut p = vec![R::zero(); k0 * ki];
                for s0 in 0..k0 {
                    for si in 0..ki {
                        p[s0 * ki + si] = margin[s0] * agent.local_prior.get(si);
                    }
                }
                pred.push(p);
            }
        } else {
            let prev_global = &globals[t - 1];
            for (s0, w) in prev_global.iter().enumerate() {
                if *w == R::zero() {
                    continue;
                }
                let row = model.global.transition.row(&[s0]);
                for (to, &p) in row.iter().enumerate() {
                    margin[to] = margin[to] + *w * p;
                }
            }
            for i in 0..n {
                let ki = dims[i];
                let prev = &pairs[t - 1][i];
                let kernel = &kernels[i];
                // local kernel first (it reads the old global state), the
                // global transition second
                let mut mid = vec![R::zero(); k0 * ki];
                for s0 in 0..k0 {
                    for si in 0..ki {
                        let w = prev[s0 * ki + si];
                        if w == R::zero() {
                            continue;
                        }
                        let row = &kernel[(s0 * ki + si) * ki..(s0 * ki + si + 1) * ki];
                        for (to, &p) in row.iter().enumerate() {
                            mid[s0 * ki + to] = mid[s0 * ki + to] + w * p;
                        }
                    }
                }
                let mut p = vec![R::zero(); k0 * ki];
                for s0 in 0..k0 {
                    let row = model.global.transition.row(&[s0]);
                    for (to, &tp) in row.iter().enumerate() {
                        if tp == R::zero() {
                            continue;
                        }
                        for si in 0..ki {
                            p[to * ki + si] = p[to * ki + si] + tp * mid[s0 * ki + si];
                        }
                    }
                }
                pred.push(p);
            }
        }

        // Own-channel evidence per pair, then each channel's collapse onto
        // the global axis.
        let mut lam: Vec<Vec<R>> = Vec::with_capacity(n);
        for (i, agent) in model.agents.iter().enumerate() {
            let ki = dims[i];
            if let Some(sym) = channels[i][t] {
                let p = &mut pred[i];
                for s0 in 0..k0 {
                    for si in 0..ki {
                        p[s0 * ki + si] =
                            p[s0 * ki + si] * agent.obs_fn.value(&[si], sym);
                    }
                }
                let mut l = vec![R::one(); k0];
                for (s0, lv) in l.iter_mut().enumerate() {
                    let mu: R = pred[i][s0 * ki..(s0 + 1) * ki].iter().copied().sum();
                    if margin[s0] > R::zero() {
                        *lv = mu / margin[s0];
                    }
                }
                lam.push(l);
            } else {
                lam.push(vec![R::one(); k0]);
            }
        }

        // Channel-by-channel support check on the global margin, in the
        // same order the exact engine uses.
        let z0 = global_lik(t);
        let mut cum: Vec<R> = margin.clone();
        if let Some(z) = &z0 {
            for (c, l) in cum.iter_mut().zip(z.iter()) {
                *c = *c * *l;
            }
            if cum.iter().copied().sum::<R>() <= R::zero() {
                return Err(InferenceError::ZeroSupport {
                    step: t + 1,
                    variable: format!("global state at step {}", t + 1),
                });
            }
        }
        for (i, agent) in model.agents.iter().enumerate() {
            for (c, l) in cum.iter_mut().zip(lam[i].iter()) {
                *c = *c * *l;
            }
            if channels[i][t].is_some() && cum.iter().copied().sum::<R>() <= R::zero() {
                return Err(InferenceError::ZeroSupport {
                    step: t + 1,
                    variable: format!("{} local state at step {}", agent.id, t + 1),
                });
            }
        }
        let c: R = cum.iter().copied().sum();
        loglik = loglik + c.ln();
        let g: Vec<R> = cum.iter().map(|v| *v / c).collect();

        // Fold the global channel and every other agent's collapse into
        // each pair. Prefix/suffix products give the leave-one-out terms.
        let ones = vec![R::one(); k0];
        let mut prefix: Vec<Vec<R>> = Vec::with_capacity(n + 1);
        prefix.push(ones.clone());
        for l in lam.iter() {
            let last = prefix.last().unwrap();
            prefix.push(last.iter().zip(l.iter()).map(|(a, b)| *a * *b).collect());
        }
        let mut suffix: Vec<Vec<R>> = vec![ones.clone(); n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1]
                .iter()
                .zip(lam[i].iter())
                .map(|(a, b)| *a * *b)
                .collect();
        }
        let mut step_pairs: Vec<Vec<R>> = Vec::with_capacity(n);
        for (i, mut p) in pred.into_iter().enumerate() {
            let ki = dims[i];
            for s0 in 0..k0 {
                let mut f = prefix[i][s0] * suffix[i + 1][s0] / c;
                if let Some(z) = &z0 {
                    f = f * z[s0];
                }
                for si in 0..ki {
                    p[s0 * ki + si] = p[s0 * ki + si] * f;
                }
            }
            step_pairs.push(p);
        }

        pairs.push(step_pairs);
        lambdas.push(lam);
        globals.push(g);
        scales.push(c);
    }

    if sweep == Sweep::Filtering {
        return Ok(PosteriorSequence::from_marginals(
            model.global.space.clone(),
            globals,
            loglik,
        ));
    }

    // Backward sweep: a pair-shaped beta per agent, future channels of
    // other agents entering through their stored collapses.
    //
    // The smoothed global marginal at step t is read off the pairs whose
    // own channel still reports somewhere after t; a pair with no evidence
    // left ahead of it sees the future only through collapses and would
    // water down the answer. When no pair qualifies the future holds
    // global observations at most, and a plain backward pass over the
    // global axis is exact.
    let mut marginals = vec![Vec::new(); horizon];
    let mut betas: Vec<Vec<R>> = dims.iter().map(|&ki| vec![R::one(); k0 * ki]).collect();
    let mut beta_global = vec![R::one(); k0];
    // reports_after[i][t]: channel i has a present observation past step t
    let reports_after: Vec<Vec<bool>> = channels
        .iter()
        .map(|ch| {
            let mut v = vec![false; horizon];
            for t in (0..horizon - 1).rev() {
                v[t] = v[t + 1] || ch[t + 1].is_some();
            }
            v
        })
        .collect();
    let smoothed_global = |t: usize,
                           step_pairs: &[Vec<R>],
                           betas: &[Vec<R>],
                           beta_global: &[R],
                           g: &[R]|
     -> Vec<R> {
        let mut acc = vec![R::zero(); k0];
        let mut contributors = 0usize;
        for (i, pair) in step_pairs.iter().enumerate() {
            if !reports_after[i][t] {
                continue;
            }
            let ki = dims[i];
            let mut gi = vec![R::zero(); k0];
            for s0 in 0..k0 {
                let mut s = R::zero();
                for si in 0..ki {
                    s = s + pair[s0 * ki + si] * betas[i][s0 * ki + si];
                }
                gi[s0] = s;
            }
            // a pair whose support misses the future entirely has nothing
            // to say about the global state
            let z: R = gi.iter().copied().sum();
            if z <= R::zero() {
                continue;
            }
            contributors += 1;
            for (a, v) in acc.iter_mut().zip(gi.iter()) {
                *a = *a + *v / z;
            }
        }
        if contributors == 0 {
            for (a, (gv, bv)) in acc.iter_mut().zip(g.iter().zip(beta_global.iter())) {
                *a = *gv * *bv;
            }
        }
        let z: R = acc.iter().copied().sum();
        acc.iter().map(|v| *v / z).collect()
    };
    marginals[horizon - 1] = smoothed_global(
        horizon - 1,
        &pairs[horizon - 1],
        &betas,
        &beta_global,
        &globals[horizon - 1],
    );

    for t in (0..horizon - 1).rev() {
        let z0 = global_lik(t + 1);
        let lam = &lambdas[t + 1];
        let ones = vec![R::one(); k0];
        let mut prefix: Vec<Vec<R>> = Vec::with_capacity(n + 1);
        prefix.push(ones.clone());
        for l in lam.iter() {
            let last = prefix.last().unwrap();
            prefix.push(last.iter().zip(l.iter()).map(|(a, b)| *a * *b).collect());
        }
        let mut suffix: Vec<Vec<R>> = vec![ones.clone(); n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1]
                .iter()
                .zip(lam[i].iter())
                .map(|(a, b)| *a * *b)
                .collect();
        }

        for (i, agent) in model.agents.iter().enumerate() {
            let ki = dims[i];
            let kernel = &kernels[i];
            // future value of each next-slice pair state
            let mut v = betas[i].clone();
            for s0 in 0..k0 {
                let mut f = prefix[i][s0] * suffix[i + 1][s0];
                if let Some(z) = &z0 {
                    f = f * z[s0];
                }
                for si in 0..ki {
                    v[s0 * ki + si] = v[s0 * ki + si] * f;
                }
            }
            if let Some(sym) = channels[i][t + 1] {
                for s0 in 0..k0 {
                    for si in 0..ki {
                        v[s0 * ki + si] =
                            v[s0 * ki + si] * agent.obs_fn.value(&[si], sym);
                    }
                }
            }
            // pull back through the global transition, then the kernel
            let mut mid = vec![R::zero(); k0 * ki];
            for s0 in 0..k0 {
                let row = model.global.transition.row(&[s0]);
                for si in 0..ki {
                    let mut acc = R::zero();
                    for (to, &tp) in row.iter().enumerate() {
                        acc = acc + tp * v[to * ki + si];
                    }
                    mid[s0 * ki + si] = acc;
                }
            }
            let c = scales[t + 1];
            let mut b = vec![R::zero(); k0 * ki];
            for s0 in 0..k0 {
                for si in 0..ki {
                    let row = &kernel[(s0 * ki + si) * ki..(s0 * ki + si + 1) * ki];
                    let mut acc = R::zero();
                    for (to, &w) in row.iter().enumerate() {
                        acc = acc + w * mid[s0 * ki + to];
                    }
                    b[s0 * ki + si] = acc / c;
                }
            }
            // Each beta is only defined up to a per-channel scale (it is
            // normalized wherever it is read), and the raw recursion lets
            // magnitudes drift off the f64 range on long horizons.
            let norm: R = b.iter().copied().sum();
            if norm > R::zero() {
                for w in b.iter_mut() {
                    *w = *w / norm;
                }
            }
            betas[i] = b;
        }
        // all-collapse backward over the global axis, for steps where no
        // pair qualifies (prefix[n] is the product over every channel)
        {
            let mut v: Vec<R> = prefix[n].clone();
            if let Some(z) = &z0 {
                for (a, b) in v.iter_mut().zip(z.iter()) {
                    *a = *a * *b;
                }
            }
            for (a, b) in v.iter_mut().zip(beta_global.iter()) {
                *a = *a * *b;
            }
            let c = scales[t + 1];
            let mut next = vec![R::zero(); k0];
            for (s0, nv) in next.iter_mut().enumerate() {
                let row = model.global.transition.row(&[s0]);
                let mut acc = R::zero();
                for (to, &tp) in row.iter().enumerate() {
                    acc = acc + tp * v[to];
                }
                *nv = acc / c;
            }
            let norm: R = next.iter().copied().sum();
            if norm > R::zero() {
                for w in next.iter_mut() {
                    *w = *w / norm;
                }
            }
            beta_global = next;
        }
        marginals[t] = smoothed_global(t, &pairs[t], &betas, &beta_global, &globals[t]);
    }

    Ok(PosteriorSequence::from_marginals(
        model.global.space.clone(),
        marginals,
        loglik,
    ))
}
