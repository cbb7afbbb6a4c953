//! Exact smoothing over the joint slice (global state plus every agent's
//! local state).
//!
//! Actions never appear explicitly: for each agent the policy and the local
//! transition are pre-multiplied into a kernel over (previous global state,
//! previous local state) -> next local state. Conditioned on the previous
//! slice the per-variable kernels are independent, so one step of the joint
//! chain is a sequence of single-axis contractions rather than a dense
//! joint-by-joint matrix. Cost per step is O(joint * (k0 + sum_i k_i)),
//! and the joint size is what the caller's state budget bounds.

use crate::model::AaseModel;
use crate::num::Real;
use crate::trace::ObservationTrace;

use super::{agent_slice_kernel, InferenceError, PosteriorSequence, Sweep};

struct Layout {
    k0: usize,
    joint: usize,
    /// Product of all agent state-space sizes; the global axis stride.
    agents_total: usize,
    dims: Vec<usize>,
    strides: Vec<usize>,
}

impl Layout {
    fn new<R: Real>(model: &AaseModel<R>) -> Self {
        let k0 = model.global.space.len();
        let dims: Vec<usize> = model.agents.iter().map(|a| a.local_space.len()).collect();
        let agents_total: usize = dims.iter().product();
        let mut strides = vec![1; dims.len()];
        for i in (0..dims.len()).rev() {
            strides[i] = dims[i + 1..].iter().product();
        }
        Layout {
            k0,
            joint: k0 * agents_total,
            agents_total,
            dims,
            strides,
        }
    }

    #[inline]
    fn global_of(&self, idx: usize) -> usize {
        idx / self.agents_total
    }

    #[inline]
    fn local_of(&self, idx: usize, agent_ix: usize) -> usize {
        (idx / self.strides[agent_ix]) % self.dims[agent_ix]
    }
}

pub(crate) fn smooth_exact<R: Real>(
    model: &AaseModel<R>,
    trace: &ObservationTrace,
    sweep: Sweep,
) -> Result<PosteriorSequence<R>, InferenceError> {
    let horizon = trace.horizon;
    let lay = Layout::new(model);
    let kernels: Vec<Vec<R>> = model
        .agents
        .iter()
        .map(|a| agent_slice_kernel(a, lay.k0))
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

    // Multiplies the step-t evidence into `belief` one channel at a time so
    // that a vanished posterior can name the variable that killed it.
    let absorb = |belief: &mut [R], t: usize| -> Result<(), InferenceError> {
        if let Some(sym) = trace.global_obs[t] {
            for (idx, b) in belief.iter_mut().enumerate() {
                *b = *b * model.global.obs_fn.value(&[lay.global_of(idx)], sym);
            }
            if belief.iter().copied().sum::<R>() <= R::zero() {
                return Err(InferenceError::ZeroSupport {
                    step: t + 1,
                    variable: format!("global state at step {}", t + 1),
                });
            }
        }
        for (i, agent) in model.agents.iter().enumerate() {
            if let Some(sym) = channels[i][t] {
                for (idx, b) in belief.iter_mut().enumerate() {
                    *b = *b * agent.obs_fn.value(&[lay.local_of(idx, i)], sym);
                }
                if belief.iter().copied().sum::<R>() <= R::zero() {
                    return Err(InferenceError::ZeroSupport {
                        step: t + 1,
                        variable: format!("{} local state at step {}", agent.id, t + 1),
                    });
                }
            }
        }
        Ok(())
    };

    // One time step of the joint chain. Agent axes first (their kernels
    // condition on the old global state, still present), global axis last.
    let advance = |belief: &[R]| -> Vec<R> {
        let mut cur = belief.to_vec();
        for (i, kernel) in kernels.iter().enumerate() {
            let ki = lay.dims[i];
            let st = lay.strides[i];
            let mut next = vec![R::zero(); lay.joint];
            for (idx, &w) in cur.iter().enumerate() {
                if w == R::zero() {
                    continue;
                }
                let s0 = lay.global_of(idx);
                let si = lay.local_of(idx, i);
                let base = idx - si * st;
                let row = &kernel[(s0 * ki + si) * ki..(s0 * ki + si + 1) * ki];
                for (to, &p) in row.iter().enumerate() {
                    next[base + to * st] = next[base + to * st] + w * p;
                }
            }
            cur = next;
        }
        let mut next = vec![R::zero(); lay.joint];
        for (idx, &w) in cur.iter().enumerate() {
            if w == R::zero() {
                continue;
            }
            let rem = idx % lay.agents_total;
            let row = model.global.transition.row(&[lay.global_of(idx)]);
            for (to, &p) in row.iter().enumerate() {
                next[to * lay.agents_total + rem] = next[to * lay.agents_total + rem] + w * p;
            }
        }
        next
    };

    // The transpose of `advance`: pulls a function of the next slice back
    // onto the previous one. Global axis first so the agent kernels can
    // again read the (previous) global state off axis zero.
    let retreat = |future: &[R]| -> Vec<R> {
        let mut cur = vec![R::zero(); lay.joint];
        for from in 0..lay.k0 {
            let row = model.global.transition.row(&[from]);
            for rem in 0..lay.agents_total {
                let mut acc = R::zero();
                for (to, &p) in row.iter().enumerate() {
                    acc = acc + p * future[to * lay.agents_total + rem];
                }
                cur[from * lay.agents_total + rem] = acc;
            }
        }
        for (i, kernel) in kernels.iter().enumerate() {
            let ki = lay.dims[i];
            let st = lay.strides[i];
            let mut prev = vec![R::zero(); lay.joint];
            for (idx, p) in prev.iter_mut().enumerate() {
                let s0 = lay.global_of(idx);
                let si = lay.local_of(idx, i);
                let base = idx - si * st;
                let row = &kernel[(s0 * ki + si) * ki..(s0 * ki + si + 1) * ki];
                let mut acc = R::zero();
                for (to, &w) in row.iter().enumerate() {
                    acc = acc + w * cur[base + to * st];
                }
                *p = acc;
            }
            cur = prev;
        }
        cur
    };

    let marginal_global = |belief: &[R]| -> Vec<R> {
        let mut out = vec![R::zero(); lay.k0];
        for (idx, &w) in belief.iter().enumerate() {
            out[lay.global_of(idx)] = out[lay.global_of(idx)] + w;
        }
        out
    };

    // Forward sweep: filtered joint beliefs, renormalized every step.
    let mut filtered: Vec<Vec<R>> = Vec::with_capacity(horizon);
    let mut scales: Vec<R> = Vec::with_capacity(horizon);
    let mut loglik = R::zero();
    for t in 0..horizon {
        let mut belief = if t == 0 {
            let mut b = vec![R::one(); lay.joint];
            for (idx, v) in b.iter_mut().enumerate() {
                let mut w = model.global.prior.get(lay.global_of(idx));
                for (i, agent) in model.agents.iter().enumerate() {
                    w = w * agent.local_prior.get(lay.local_of(idx, i));
                }
                *v = w;
            }
            b
        } else {
            advance(&filtered[t - 1])
        };
        absorb(&mut belief, t)?;
        let c: R = belief.iter().copied().sum();
        for b in belief.iter_mut() {
            *b = *b / c;
        }
        loglik = loglik + c.ln();
        scales.push(c);
        filtered.push(belief);
    }

    if sweep == Sweep::Filtering {
        let marginals = filtered.iter().map(|b| marginal_global(b)).collect();
        return Ok(PosteriorSequence::from_marginals(
            model.global.space.clone(),
            marginals,
            loglik,
        ));
    }

    // Backward sweep over the same joint space.
    let mut marginals = vec![Vec::new(); horizon];
    marginals[horizon - 1] = marginal_global(&filtered[horizon - 1]);
    let mut beta = vec![R::one(); lay.joint];
    for t in (0..horizon - 1).rev() {
        let mut v = beta.clone();
        if let Some(sym) = trace.global_obs[t + 1] {
            for (idx, b) in v.iter_mut().enumerate() {
                *b = *b * model.global.obs_fn.value(&[lay.global_of(idx)], sym);
            }
        }
        for (i, agent) in model.agents.iter().enumerate() {
            if let Some(sym) = channels[i][t + 1] {
                for (idx, b) in v.iter_mut().enumerate() {
                    *b = *b * agent.obs_fn.value(&[lay.local_of(idx, i)], sym);
                }
            }
        }
        beta = retreat(&v);
        let c = scales[t + 1];
        for b in beta.iter_mut() {
            *b = *b / c;
        }
        let joint: Vec<R> = filtered[t]
            .iter()
            .zip(beta.iter())
            .map(|(a, b)| *a * *b)
            .collect();
        let mut m = marginal_global(&joint);
        let z: R = m.iter().copied().sum();
        debug_assert!(z > R::zero());
        for v in m.iter_mut() {
            *v = *v / z;
        }
        marginals[t] = m;
    }

    Ok(PosteriorSequence::from_marginals(
        model.global.space.clone(),
        marginals,
        loglik,
    ))
}
