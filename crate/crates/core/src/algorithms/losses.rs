//! Graph-level loss terms. Every function here builds nodes on a caller-owned
//! [`Graph`], so the same code serves training and finite-difference checks.

use super::{AlgoError, Batch};
use crate::autodiff::{AutodiffError, Axis, Graph, Tensor, Var};
use crate::nn::{
    concat_cols, q_forward, stack, GaussianPolicy, MlpVars, PolicyVars, QEnsemble, Which,
};

/// Added under the square root of the gradient norm in the cosine.
pub const ES_NORM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EsOptions {
    /// Cosine similarity when true, raw inner product otherwise.
    pub normalize: bool,
    pub stop_normalizer: bool,
}

impl Default for EsOptions {
    fn default() -> Self {
        EsOptions {
            normalize: true,
            stop_normalizer: false,
        }
    }
}

/// How the policy objective combines the critics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CriticReduce {
    Min,
    Mean,
}

/// `y = r + γ·(1 − done)·(next_value − β·next_log_prob)`, all `[B, 1]`.
pub fn target_values(
    rewards: &Tensor,
    dones: &Tensor,
    next_value: &Tensor,
    next_log_prob: &Tensor,
    beta: f64,
    gamma: f64,
) -> Tensor {
    let data = (0..rewards.len())
        .map(|i| {
            let soft = next_value.data()[i] - beta * next_log_prob.data()[i];
            rewards.data()[i] + gamma * (1.0 - dones.data()[i]) * soft
        })
        .collect();
    Tensor::new(rewards.shape(), data).expect("shape")
}

/// Row-wise minimum of a `[B, N]` tensor (lowest index on ties).
pub fn row_min(q: &Tensor) -> Tensor {
    Tensor::column(
        (0..q.rows())
            .map(|i| {
                q.row_slice(i)
                    .iter()
                    .copied()
                    .reduce(|m, v| if v < m { v } else { m })
                    .expect("nonempty row")
            })
            .collect(),
    )
}

/// Clipped soft Bellman target with one next-action sample per row, using
/// the target critics. The result is a plain tensor, so no gradient reaches it.
pub fn bellman_target(
    batch: &Batch,
    ensemble: &QEnsemble,
    policy: &GaussianPolicy,
    beta: f64,
    gamma: f64,
    noise: &Tensor,
) -> Result<Tensor, AlgoError> {
    let (next_a, next_lp) = policy.sample(&batch.next_states, noise)?;
    let q = ensemble.q_values(Which::Targets, &batch.next_states, &next_a)?;
    Ok(target_values(
        &batch.rewards,
        &batch.dones,
        &row_min(&q),
        &next_lp,
        beta,
        gamma,
    ))
}

/// REM target: the same ξ-weighted combination of target critics replaces the min.
pub fn rem_target(
    batch: &Batch,
    ensemble: &QEnsemble,
    policy: &GaussianPolicy,
    xi: &[f64],
    beta: f64,
    gamma: f64,
    noise: &Tensor,
) -> Result<Tensor, AlgoError> {
    let (next_a, next_lp) = policy.sample(&batch.next_states, noise)?;
    let q = ensemble.q_values(Which::Targets, &batch.next_states, &next_a)?;
    let combined = Tensor::column(
        (0..q.rows())
            .map(|i| q.row_slice(i).iter().zip(xi).map(|(v, w)| v * w).sum())
            .collect(),
    );
    Ok(target_values(
        &batch.rewards,
        &batch.dones,
        &combined,
        &next_lp,
        beta,
        gamma,
    ))
}

/// Per-member `mean_b (Q_i − y)²`.
pub fn mse_losses(g: &mut Graph, qs: &[Var], y: Var) -> Result<Vec<Var>, AutodiffError> {
    qs.iter()
        .map(|&q| {
            let d = g.sub(q, y)?;
            let sq = g.square(d)?;
            g.mean(sq)
        })
        .collect()
}

/// `Σ_i losses_i`, accumulated left to right.
pub fn sum_all(g: &mut Graph, losses: &[Var]) -> Result<Var, AutodiffError> {
    let mut total = losses[0];
    for &l in &losses[1..] {
        total = g.add(total, l)?;
    }
    Ok(total)
}

/// `∇_a Q_i(s, a)` for each member, each `[B, A]`. The gradients are graph
/// nodes, so they stay differentiable with respect to the critic parameters.
pub fn action_gradients(
    g: &mut Graph,
    qs: &[Var],
    actions: Var,
) -> Result<Vec<Var>, AutodiffError> {
    qs.iter()
        .map(|&q| {
            let total = g.sum(q)?;
            Ok(g.gradient(total, &[actions])?[actions])
        })
        .collect()
}

fn normalized(g: &mut Graph, grad: Var, opts: EsOptions) -> Result<Var, AutodiffError> {
    let sq = g.square(grad)?;
    let ss = g.sum_axis(sq, Axis::Cols)?;
    let ss = g.offset(ss, ES_NORM_EPS)?;
    let mut norm = g.sqrt(ss)?;
    if opts.stop_normalizer {
        norm = g.detach(norm);
    }
    let shape = g.shape(grad);
    let nb = g.broadcast(norm, shape)?;
    g.div(grad, nb)
}

/// Per-row similarity of two input gradients, `[B, 1]`.
pub fn es_pair(g: &mut Graph, gi: Var, gj: Var, opts: EsOptions) -> Result<Var, AutodiffError> {
    if opts.normalize {
        let ni = normalized(g, gi, opts)?;
        let nj = normalized(g, gj, opts)?;
        g.row_dot(ni, nj)
    } else {
        g.row_dot(gi, gj)
    }
}

/// `Σ_{i≠j} mean_b ES(i, j)` over ordered pairs, computed as twice the sum
/// over `i < j` (the pair similarity is symmetric).
pub fn es_total(g: &mut Graph, grads: &[Var], opts: EsOptions) -> Result<Var, AutodiffError> {
    let units: Vec<Var> = if opts.normalize {
        grads
            .iter()
            .map(|&gr| normalized(g, gr, opts))
            .collect::<Result<_, _>>()?
    } else {
        grads.to_vec()
    };
    let mut pair_means = Vec::new();
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            let c = g.row_dot(units[i], units[j])?;
            pair_means.push(g.mean(c)?);
        }
    }
    let half = sum_all(g, &pair_means)?;
    g.scale(half, 2.0)
}

/// Rows where a member's input gradient has (numerically) zero norm, so its
/// cosine similarities collapse to 0.
pub fn zero_gradient_rows(g: &Graph, grads: &[Var]) -> usize {
    let t = g.value(grads[0]);
    (0..t.rows())
        .filter(|&i| {
            grads.iter().any(|&gr| {
                let n2: f64 = g.value(gr).row_slice(i).iter().map(|v| v * v).sum();
                n2 <= ES_NORM_EPS * ES_NORM_EPS
            })
        })
        .count()
}

/// `mean_b(β·log π(ã|s) − reduce_j Q_j(s, ã))` with a reparametrized `ã`;
/// minimizing it ascends the soft policy objective. Returns `(loss, log_prob)`.
pub fn policy_loss(
    g: &mut Graph,
    policy: &PolicyVars,
    critics: &[MlpVars],
    states: Var,
    noise: &Tensor,
    beta: f64,
    reduce: CriticReduce,
) -> Result<(Var, Var), AlgoError> {
    let (action, log_prob) = policy.sample(g, states, noise)?;
    let qs = q_forward(g, critics, states, action)?;
    let all = stack(g, &qs)?;
    let value = match reduce {
        CriticReduce::Min => g.min_axis(all, Axis::Cols)?,
        CriticReduce::Mean => {
            let s = g.sum_axis(all, Axis::Cols)?;
            g.scale(s, 1.0 / qs.len() as f64)?
        }
    };
    let ent = g.scale(log_prob, beta)?;
    let obj = g.sub(ent, value)?;
    Ok((g.mean(obj)?, log_prob))
}

/// `mean_b (Σ_j ξ_j Q_j − y)²`.
pub fn rem_loss(g: &mut Graph, qs: &[Var], xi: &[f64], y: Var) -> Result<Var, AutodiffError> {
    let mut combo = g.scale(qs[0], xi[0])?;
    for (&q, &w) in qs.iter().zip(xi).skip(1) {
        let term = g.scale(q, w)?;
        combo = g.add(combo, term)?;
    }
    let d = g.sub(combo, y)?;
    let sq = g.square(d)?;
    g.mean(sq)
}

/// Per-member `α·(mean Q_i(s, a_sampled) − mean Q_i(s, a_data))`.
/// `sampled_states` / `sampled_actions` hold the `m` proposals per batch row.
pub fn cql_penalties(
    g: &mut Graph,
    critics: &[MlpVars],
    qs_data: &[Var],
    sampled_states: Var,
    sampled_actions: Var,
    alpha: f64,
) -> Result<Vec<Var>, AlgoError> {
    let qs_samp = q_forward(g, critics, sampled_states, sampled_actions)?;
    let mut out = Vec::with_capacity(critics.len());
    for (&qs, &qd) in qs_samp.iter().zip(qs_data) {
        let ms = g.mean(qs)?;
        let md = g.mean(qd)?;
        let d = g.sub(ms, md)?;
        out.push(g.scale(d, alpha)?);
    }
    Ok(out)
}

/// `−c · mean_b Var_j(Q_j)`, population variance (divisor N).
pub fn variance_regularizer(g: &mut Graph, qs: &[Var], c: f64) -> Result<Var, AutodiffError> {
    let n = qs.len() as f64;
    let all = g.concat(qs, Axis::Cols)?;
    let shape = g.shape(all);
    let s = g.sum_axis(all, Axis::Cols)?;
    let mean = g.scale(s, 1.0 / n)?;
    let mb = g.broadcast(mean, shape)?;
    let d = g.sub(all, mb)?;
    let sq = g.square(d)?;
    let ss = g.sum_axis(sq, Axis::Cols)?;
    let var = g.scale(ss, 1.0 / n)?;
    let mv = g.mean(var)?;
    g.scale(mv, -c)
}

/// Plain (graph-free) `[B, N]` critic values on `(states, actions)`.
pub fn critic_values(critics: &[crate::nn::Mlp], states: &Tensor, actions: &Tensor) -> Tensor {
    let x = concat_cols(states, actions);
    let outs: Vec<Tensor> = critics.iter().map(|m| m.forward_plain(&x)).collect();
    let (b, n) = (states.rows(), outs.len());
    let mut data = Vec::with_capacity(b * n);
    for i in 0..b {
        data.extend(outs.iter().map(|o| o.data()[i]));
    }
    Tensor::new([b, n], data).expect("shape")
}
