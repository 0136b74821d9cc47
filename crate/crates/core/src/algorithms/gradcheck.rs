//! Central finite-difference checks of every training loss on small networks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batch::{normal_tensor, uniform_tensor};
use super::losses::{
    action_gradients, cql_penalties, es_total, mse_losses, policy_loss, rem_loss, sum_all,
    variance_regularizer, CriticReduce, EsOptions,
};
use super::{simplex_weights, AlgoError};
use crate::autodiff::{
    finite_difference_compare, finite_difference_compare_with, AutodiffError, Axis, Graph, Tensor,
    Var,
};
use crate::nn::{concat_cols, q_forward, GaussianPolicy, Mlp, MlpVars, NnError, QEnsemble, Which};

pub const FIRST_ORDER_TOL: f64 = 1e-5;
pub const SECOND_ORDER_TOL: f64 = 1e-3;
pub const FD_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: &'static str,
    /// Largest normwise relative error `‖g − ĝ‖∞ / (‖g‖∞ + ‖ĝ‖∞)` over the
    /// checked gradient tensors.
    pub rel_err: f64,
    pub tol: f64,
    pub tensors: usize,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.rel_err <= self.tol
    }
}

/// Small random problem: width-8 critics and policy, a 6-row batch.
pub struct Fixture {
    pub ensemble: QEnsemble,
    pub policy: GaussianPolicy,
    pub states: Tensor,
    pub actions: Tensor,
    pub y: Tensor,
    pub noise: Tensor,
    pub xi: Vec<f64>,
    pub cql_states: Tensor,
    pub cql_actions: Tensor,
    pub beta: f64,
}

/// Pre-activations closer than this to a relu kink make central differences
/// with [`FD_STEP`] meaningless; such draws are rejected.
pub const KINK_MARGIN: f64 = 1e-4;

impl Fixture {
    /// First draw from `seed`, `seed + 2^32`, ... whose relu pre-activations
    /// all clear [`KINK_MARGIN`].
    pub fn new(seed: u64) -> Result<Self, AlgoError> {
        let mut attempt = 0u64;
        loop {
            let fx = Self::draw(seed.wrapping_add(attempt << 32))?;
            if fx.kink_margin() >= KINK_MARGIN || attempt >= 64 {
                return Ok(fx);
            }
            attempt += 1;
        }
    }

    /// Smallest `|z|` over every relu input reached by the checked losses.
    pub fn kink_margin(&self) -> f64 {
        let (sampled, _) = self
            .policy
            .sample(&self.states, &self.noise)
            .expect("fixture shapes agree");
        let mut margin = relu_margin(self.policy.trunk(), &self.states);
        for m in self.ensemble.members() {
            for (s, a) in [
                (&self.states, &self.actions),
                (&self.cql_states, &self.cql_actions),
                (&self.states, &sampled),
            ] {
                margin = margin.min(relu_margin(m, &concat_cols(s, a)));
            }
        }
        // the policy objective also has a kink where two critics tie
        let q = self
            .ensemble
            .q_values(Which::Members, &self.states, &sampled)
            .expect("fixture shapes agree");
        for i in 0..q.rows() {
            let mut row = q.row_slice(i).to_vec();
            row.sort_by(f64::total_cmp);
            margin = margin.min(row[1] - row[0]);
        }
        margin
    }

    fn draw(seed: u64) -> Result<Self, AlgoError> {
        let (sd, ad, n, b) = (3, 2, 3, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ensemble =
            QEnsemble::new(n, sd, ad, &[8, 8], seed.wrapping_mul(31).wrapping_add(1))?;
        let mut policy =
            GaussianPolicy::new(sd, ad, &[8, 8], seed.wrapping_mul(31).wrapping_add(100))?;
        // Zero biases put whole rows of pre-activations exactly on the relu
        // kink whenever an upstream layer is fully inactive.
        for m in ensemble
            .members_mut()
            .iter_mut()
            .chain([policy.trunk_mut()])
        {
            for l in m.tensors_mut().into_iter().skip(1).step_by(2) {
                *l = uniform_tensor(&mut rng, l.shape()).map(|v| 0.1 * v);
            }
        }
        let states = uniform_tensor(&mut rng, [b, sd]);
        let actions = uniform_tensor(&mut rng, [b, ad]).map(|v| 0.9 * v);
        let y = normal_tensor(&mut rng, [b, 1]);
        let noise = normal_tensor(&mut rng, [b, ad]);
        let xi = simplex_weights(&mut rng, n);
        let cql_states = super::repeat_rows(&states, 2);
        let cql_actions = uniform_tensor(&mut rng, [2 * b, ad]);
        Ok(Fixture {
            ensemble,
            policy,
            states,
            actions,
            y,
            noise,
            xi,
            cql_states,
            cql_actions,
            beta: 0.3,
        })
    }
}

fn ad(e: AlgoError) -> AutodiffError {
    match e {
        AlgoError::Autodiff(a) | AlgoError::Nn(NnError::Autodiff(a)) => a,
        other => panic!("unexpected error in gradient check: {other}"),
    }
}

fn nn(e: NnError) -> AutodiffError {
    ad(AlgoError::Nn(e))
}

/// Builds a scalar loss from critics whose `k`-th tensor of member `j` is `v`.
type CriticLoss<'a> = dyn Fn(&mut Graph, &[MlpVars], Var, Var) -> Result<Var, AutodiffError> + 'a;

fn check_critic_params(
    fx: &Fixture,
    members: &[usize],
    loss: &CriticLoss,
) -> Result<(f64, usize), AlgoError> {
    check_critic_params_with(fx, members, loss, loss)
}

fn check_critic_params_with(
    fx: &Fixture,
    members: &[usize],
    analytic: &CriticLoss,
    numeric: &CriticLoss,
) -> Result<(f64, usize), AlgoError> {
    let mut worst = 0.0f64;
    let mut count = 0;
    for &j in members {
        let tensors = fx.ensemble.members()[j].tensors();
        for (k, x) in tensors.iter().enumerate() {
            let build = |loss: &CriticLoss, g: &mut Graph, v: Var| {
                let mut critics = fx.ensemble.bind(g, Which::Members, false);
                critics[j].replace(k, v);
                let s = g.constant(fx.states.clone());
                let a = g.constant(fx.actions.clone());
                loss(g, &critics, s, a)
            };
            let c = finite_difference_compare_with(
                |g: &mut Graph, v: Var| build(analytic, g, v),
                |g: &mut Graph, v: Var| build(numeric, g, v),
                x,
                FD_STEP,
            )?;
            let err = c.normwise_rel_err();
            if std::env::var_os("EDAC_GRADCHECK_DEBUG").is_some() {
                eprintln!(
                    "member {j} tensor {k}: normwise {err:e}, worst element {:e}",
                    c.max_rel_err
                );
            }
            worst = worst.max(err);
            count += 1;
        }
    }
    Ok((worst, count))
}

fn mse_total(
    fx: &Fixture,
    g: &mut Graph,
    critics: &[MlpVars],
    s: Var,
    a: Var,
) -> Result<(Vec<Var>, Var), AutodiffError> {
    let qs = q_forward(g, critics, s, a).map_err(nn)?;
    let y = g.constant(fx.y.clone());
    let mse = mse_losses(g, &qs, y)?;
    let total = sum_all(g, &mse)?;
    Ok((qs, total))
}

fn es_loss(
    g: &mut Graph,
    critics: &[MlpVars],
    s: Var,
    a: Var,
    opts: EsOptions,
) -> Result<Var, AutodiffError> {
    let qs = q_forward(g, critics, s, a).map_err(nn)?;
    let grads = action_gradients(g, &qs, a)?;
    es_total(g, &grads, opts)
}

/// Runs every check on the fixture built from `seed`.
pub fn run_suite(seed: u64) -> Result<Vec<GradCheck>, AlgoError> {
    let fx = Fixture::new(seed)?;
    let all: Vec<usize> = (0..fx.ensemble.len()).collect();
    let mut out = Vec::new();
    let mut push = |name, (rel_err, tensors): (f64, usize), tol| {
        out.push(GradCheck {
            name,
            rel_err,
            tol,
            tensors,
        })
    };

    push(
        "bellman-mse",
        check_critic_params(&fx, &[0], &|g, c, s, a| {
            let q = q_forward(g, &c[..1], s, a).map_err(nn)?;
            let y = g.constant(fx.y.clone());
            Ok(mse_losses(g, &q, y)?[0])
        })?,
        FIRST_ORDER_TOL,
    );
    push(
        "sac-n",
        check_critic_params(&fx, &all, &|g, c, s, a| Ok(mse_total(&fx, g, c, s, a)?.1))?,
        FIRST_ORDER_TOL,
    );

    // action input of the critics
    let f = |g: &mut Graph, av: Var| {
        let critics = fx.ensemble.bind(g, Which::Members, false);
        let s = g.constant(fx.states.clone());
        let qs = q_forward(g, &critics, s, av).map_err(nn)?;
        let y = g.constant(fx.y.clone());
        let mse = mse_losses(g, &qs, y)?;
        sum_all(g, &mse)
    };
    let c = finite_difference_compare(f, &fx.actions, FD_STEP)?;
    push("q-action-input", (c.normwise_rel_err(), 1), FIRST_ORDER_TOL);

    let cosine = EsOptions::default();
    let raw = EsOptions {
        normalize: false,
        stop_normalizer: false,
    };
    for (name, opts) in [("es-cosine", cosine), ("es-raw-inner-product", raw)] {
        push(
            name,
            check_critic_params(&fx, &all, &|g, c, s, a| es_loss(g, c, s, a, opts))?,
            SECOND_ORDER_TOL,
        );
    }
    // Stopped normalizer: the reference holds the gradient norms at their
    // base-point values while differencing.
    let norms = base_gradient_norms(&fx)?;
    let stop = EsOptions {
        normalize: true,
        stop_normalizer: true,
    };
    push(
        "es-stop-normalizer",
        check_critic_params_with(
            &fx,
            &all,
            &|g, c, s, a| es_loss(g, c, s, a, stop),
            &|g, c, s, a| {
                let qs = q_forward(g, c, s, a).map_err(nn)?;
                let grads = action_gradients(g, &qs, a)?;
                let units = grads
                    .iter()
                    .zip(&norms)
                    .map(|(&gr, n)| {
                        let nv = g.constant(n.clone());
                        let shape = g.shape(gr);
                        let nb = g.broadcast(nv, shape)?;
                        g.div(gr, nb)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                es_total(g, &units, raw)
            },
        )?,
        SECOND_ORDER_TOL,
    );
    let n = fx.ensemble.len();
    push(
        "edac-total",
        check_critic_params(&fx, &all, &|g, c, s, a| {
            let (qs, mse) = mse_total(&fx, g, c, s, a)?;
            let grads = action_gradients(g, &qs, a)?;
            let es = es_total(g, &grads, cosine)?;
            let w = g.scale(es, 1.0 / (n - 1) as f64)?;
            g.add(mse, w)
        })?,
        SECOND_ORDER_TOL,
    );
    push(
        "rem",
        check_critic_params(&fx, &all, &|g, c, s, a| {
            let qs = q_forward(g, c, s, a).map_err(nn)?;
            let y = g.constant(fx.y.clone());
            rem_loss(g, &qs, &fx.xi, y)
        })?,
        FIRST_ORDER_TOL,
    );
    push(
        "cql-lite",
        check_critic_params(&fx, &all, &|g, c, s, a| {
            let (qs, mse) = mse_total(&fx, g, c, s, a)?;
            let ss = g.constant(fx.cql_states.clone());
            let sa = g.constant(fx.cql_actions.clone());
            let pens = cql_penalties(g, c, &qs, ss, sa, 2.0).map_err(ad)?;
            let p = sum_all(g, &pens)?;
            g.add(mse, p)
        })?,
        FIRST_ORDER_TOL,
    );
    push(
        "var-reg",
        check_critic_params(&fx, &all, &|g, c, s, a| {
            let (qs, mse) = mse_total(&fx, g, c, s, a)?;
            let r = variance_regularizer(g, &qs, 0.7)?;
            g.add(mse, r)
        })?,
        FIRST_ORDER_TOL,
    );

    for (name, reduce) in [
        ("policy-min", CriticReduce::Min),
        ("policy-mean", CriticReduce::Mean),
    ] {
        let mut worst = 0.0f64;
        let tensors = fx.policy.trunk().tensors();
        for (k, x) in tensors.iter().enumerate() {
            let f = |g: &mut Graph, v: Var| {
                let mut pv = fx.policy.bind(g, false);
                pv.replace(k, v);
                let critics = fx.ensemble.bind(g, Which::Members, false);
                let s = g.constant(fx.states.clone());
                let (loss, _) =
                    policy_loss(g, &pv, &critics, s, &fx.noise, fx.beta, reduce).map_err(ad)?;
                Ok(loss)
            };
            worst = worst.max(finite_difference_compare(f, x, FD_STEP)?.normwise_rel_err());
        }
        push(name, (worst, tensors.len()), FIRST_ORDER_TOL);
    }
    Ok(out)
}

/// `sqrt(Σ_cols (∇_a Q_i)² + eps)` per row for each member at the fixture's parameters.
fn base_gradient_norms(fx: &Fixture) -> Result<Vec<Tensor>, AlgoError> {
    let mut g = Graph::new();
    let critics = fx.ensemble.bind(&mut g, Which::Members, false);
    let s = g.constant(fx.states.clone());
    let a = g.constant(fx.actions.clone());
    let qs = q_forward(&mut g, &critics, s, a)?;
    let grads = action_gradients(&mut g, &qs, a)?;
    grads
        .iter()
        .map(|&gr| {
            let sq = g.square(gr)?;
            let ss = g.sum_axis(sq, Axis::Cols)?;
            let ss = g.offset(ss, super::losses::ES_NORM_EPS)?;
            let n = g.sqrt(ss)?;
            Ok(g.evaluate(n))
        })
        .collect()
}

fn relu_margin(m: &Mlp, x: &Tensor) -> f64 {
    let mut h = x.clone();
    let mut margin = f64::INFINITY;
    let last = m.layers().len() - 1;
    for l in &m.layers()[..last] {
        let mut z = h.matmul(&l.weight);
        let c = z.cols();
        for (k, v) in z.data_mut().iter_mut().enumerate() {
            *v += l.bias.data()[k % c];
            margin = margin.min(v.abs());
        }
        h = z.map(|v| v.max(0.0));
    }
    margin
}
