use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::batch::{normal_tensor, repeat_rows, sample_indices, simplex_weights, uniform_tensor};
use super::losses::{
    action_gradients, bellman_target, cql_penalties, es_total, mse_losses, policy_loss, rem_loss,
    rem_target, sum_all, target_values, variance_regularizer, zero_gradient_rows, CriticReduce,
    EsOptions,
};
use super::{AlgoError, Algorithm, Batch, BetaSetting, TrainConfig};
use crate::autodiff::{AutodiffError, Graph, Tensor, Var};
use crate::datagen::Transitions;
use crate::nn::{
    concat_cols, q_forward, Adam, Checkpoint, GaussianPolicy, Mlp, QEnsemble, Temperature,
    TemperatureMode, Which,
};

/// One JSON line of `metrics.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepMetrics {
    pub step: u64,
    /// Quantity the critic optimizer minimized (ES and regularizers included).
    pub q_loss: f64,
    /// Per-member loss; under EDAC each includes the shared ES term.
    pub member_losses: Vec<f64>,
    pub policy_loss: f64,
    pub beta: f64,
    pub beta_loss_grad: f64,
    /// `−mean log π` of the policy-update sample.
    pub entropy: f64,
    pub q_mean: f64,
    pub q_min: f64,
    /// Mean pairwise input-gradient similarity (EDAC only).
    pub es_mean: Option<f64>,
    /// Batch rows where some member's input gradient vanished (EDAC only).
    pub es_zero_grad_rows: Option<usize>,
    /// CQL-lite penalty (member mean), variance regularizer, or none.
    pub regularizer: Option<f64>,
}

/// Full learner state. Equality is bitwise on every parameter, moment and
/// the PRNG position.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainerState {
    pub config: TrainConfig,
    pub ensemble: QEnsemble,
    pub policy: GaussianPolicy,
    pub temperature: Temperature,
    q_opts: Vec<Adam>,
    policy_opt: Adam,
    step: u64,
    rng: ChaCha8Rng,
}

fn adam_for(m: &Mlp, lr: f64) -> Adam {
    Adam::for_params(lr, &m.tensors())
}

impl TrainerState {
    /// Seeds: critics `seed·1000 + 1 + j`, policy `seed·1000`, PRNG `seed`.
    pub fn new(
        config: TrainConfig,
        state_dim: usize,
        action_dim: usize,
    ) -> Result<Self, AlgoError> {
        config.validate()?;
        let base = config.seed.wrapping_mul(1000);
        let ensemble = QEnsemble::new(
            config.n,
            state_dim,
            action_dim,
            &config.hidden,
            base.wrapping_add(1),
        )?;
        let policy = GaussianPolicy::new(state_dim, action_dim, &config.hidden, base)?;
        let temperature = match config.beta {
            BetaSetting::Fixed(b) => Temperature::fixed(b)?,
            BetaSetting::Auto => {
                Temperature::auto(config.initial_beta, action_dim, config.lr_beta)?
            }
        };
        Ok(Self::from_parts(config, ensemble, policy, temperature))
    }

    pub fn from_parts(
        config: TrainConfig,
        ensemble: QEnsemble,
        policy: GaussianPolicy,
        temperature: Temperature,
    ) -> Self {
        let q_opts = ensemble
            .members()
            .iter()
            .map(|m| adam_for(m, config.lr_q))
            .collect();
        let policy_opt = adam_for(policy.trunk(), config.lr_policy);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        TrainerState {
            config,
            ensemble,
            policy,
            temperature,
            q_opts,
            policy_opt,
            step: 0,
            rng,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn state_dim(&self) -> usize {
        self.policy.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.policy.action_dim()
    }

    /// Executes one update: sample → target → critic step → policy step →
    /// temperature step → target soft update.
    pub fn train_step(&mut self, data: &Transitions) -> Result<StepMetrics, AlgoError> {
        if data.is_empty() {
            return Err(AlgoError::EmptyDataset);
        }
        if data.state_dim() != self.state_dim() || data.action_dim() != self.action_dim() {
            return Err(AlgoError::DimensionMismatch {
                expected: [self.state_dim(), self.action_dim()],
                found: [data.state_dim(), data.action_dim()],
            });
        }
        let step = self.step + 1;
        let cfg = self.config.clone();
        let (b, ad) = (cfg.batch_size, self.action_dim());
        let idx = sample_indices(&mut self.rng, data.len(), b);
        let batch = Batch::gather(data, &idx);
        let beta = self.temperature.beta();
        let target_noise = normal_tensor(&mut self.rng, [b, ad]);

        let q = if cfg.algorithm == Algorithm::Sac {
            self.sac_critic_update(&batch, &target_noise, beta)
        } else {
            self.ensemble_critic_update(&batch, &target_noise, beta)
        }
        .map_err(|e| e.at_step(step, "critic update"))?;

        let reduce = if cfg.algorithm == Algorithm::Rem {
            CriticReduce::Mean
        } else {
            CriticReduce::Min
        };
        let policy_noise = normal_tensor(&mut self.rng, [b, ad]);
        let (policy_loss, log_probs) = if cfg.algorithm == Algorithm::Sac {
            self.sac_policy_update(&batch, &policy_noise, beta)
        } else {
            self.policy_update(&batch, &policy_noise, beta, reduce)
        }
        .map_err(|e| e.at_step(step, "policy update"))?;

        let beta_grad = self.temperature.update(log_probs.data());
        self.ensemble.soft_update(cfg.rho)?;
        self.step = step;

        let entropy = -log_probs.data().iter().sum::<f64>() / log_probs.len() as f64;
        let metrics = StepMetrics {
            step,
            q_loss: q.total,
            member_losses: q.members,
            policy_loss,
            beta,
            beta_loss_grad: beta_grad,
            entropy,
            q_mean: q.q_mean,
            q_min: q.q_min,
            es_mean: q.es_mean,
            es_zero_grad_rows: q.es_zero_rows,
            regularizer: q.regularizer,
        };
        if !(metrics.q_loss.is_finite()
            && metrics.policy_loss.is_finite()
            && self.temperature.beta().is_finite())
        {
            return Err(AlgoError::NonFinite {
                step,
                stage: "losses",
                breakdown: serde_json::to_string(&metrics).expect("metrics serialize"),
            });
        }
        Ok(metrics)
    }

    fn ensemble_critic_update(
        &mut self,
        batch: &Batch,
        target_noise: &Tensor,
        beta: f64,
    ) -> Result<CriticOutcome, AlgoError> {
        let cfg = &self.config;
        let n = cfg.n;
        let xi = if cfg.algorithm == Algorithm::Rem {
            Some(simplex_weights(&mut self.rng, n))
        } else {
            None
        };
        let y = match &xi {
            Some(xi) => rem_target(
                batch,
                &self.ensemble,
                &self.policy,
                xi,
                beta,
                cfg.gamma,
                target_noise,
            )?,
            None => bellman_target(
                batch,
                &self.ensemble,
                &self.policy,
                beta,
                cfg.gamma,
                target_noise,
            )?,
        };

        // CQL proposals: per row, m/2 uniform then m − m/2 from the current policy.
        let cql = if cfg.algorithm == Algorithm::CqlLite {
            let m = cfg.cql_samples;
            let (b, ad) = (batch.len(), self.action_dim());
            let uni = uniform_tensor(&mut self.rng, [b * (m / 2), ad]);
            let noise = normal_tensor(&mut self.rng, [b * (m - m / 2), ad]);
            let (pol, _) = self
                .policy
                .sample(&repeat_rows(&batch.states, m - m / 2), &noise)?;
            let states = concat_rows(
                &repeat_rows(&batch.states, m / 2),
                &repeat_rows(&batch.states, m - m / 2),
            );
            Some((states, concat_rows(&uni, &pol)))
        } else {
            None
        };

        let mut g = Graph::new();
        let critics = self.ensemble.bind(&mut g, Which::Members, true);
        let s = g.constant(batch.states.clone());
        let a = g.constant(batch.actions.clone());
        let qs = q_forward(&mut g, &critics, s, a)?;
        let yv = g.constant(y);

        let mut es_mean = None;
        let mut es_zero_rows = None;
        let mut regularizer = None;
        let (member_vals, total): (Vec<f64>, Var) = match cfg.algorithm {
            Algorithm::Rem => {
                let l = rem_loss(&mut g, &qs, xi.as_deref().expect("drawn above"), yv)?;
                (vec![g.value(l).item(); n], l)
            }
            _ => {
                let mse = mse_losses(&mut g, &qs, yv)?;
                let mse_total = sum_all(&mut g, &mse)?;
                let mse_vals: Vec<f64> = mse.iter().map(|&l| g.value(l).item()).collect();
                match cfg.algorithm {
                    Algorithm::Edac => {
                        let grads = action_gradients(&mut g, &qs, a)?;
                        let opts = EsOptions {
                            normalize: cfg.es_normalize,
                            stop_normalizer: cfg.es_stop_normalizer,
                        };
                        let es = es_total(&mut g, &grads, opts)?;
                        let es_val = g.value(es).item();
                        es_mean = Some(es_val / (n * (n - 1)) as f64);
                        es_zero_rows = Some(zero_gradient_rows(&g, &grads));
                        let weighted = g.scale(es, cfg.eta / (n - 1) as f64)?;
                        let w = g.value(weighted).item();
                        let total = g.add(mse_total, weighted)?;
                        (mse_vals.iter().map(|l| l + w).collect(), total)
                    }
                    Algorithm::CqlLite => {
                        let (ss, sa) = cql.expect("built above");
                        let ssv = g.constant(ss);
                        let sav = g.constant(sa);
                        let pens = cql_penalties(&mut g, &critics, &qs, ssv, sav, cfg.cql_alpha)?;
                        let pen_vals: Vec<f64> = pens.iter().map(|&p| g.value(p).item()).collect();
                        regularizer = Some(pen_vals.iter().sum::<f64>() / n as f64);
                        let pen_total = sum_all(&mut g, &pens)?;
                        let total = g.add(mse_total, pen_total)?;
                        (
                            mse_vals.iter().zip(&pen_vals).map(|(l, p)| l + p).collect(),
                            total,
                        )
                    }
                    Algorithm::VarReg => {
                        let reg = variance_regularizer(&mut g, &qs, cfg.var_reg_c)?;
                        let r = g.value(reg).item();
                        regularizer = Some(r);
                        let total = g.add(mse_total, reg)?;
                        (mse_vals.iter().map(|l| l + r).collect(), total)
                    }
                    _ => (mse_vals, mse_total),
                }
            }
        };
        let total_val = g.value(total).item();
        let (q_mean, q_min) = q_stats(&g, &qs);

        let params: Vec<Var> = critics.iter().flat_map(|c| c.vars()).collect();
        let grads = g.gradient(total, &params)?;
        for (j, (member, opt)) in self
            .ensemble
            .members_mut()
            .iter_mut()
            .zip(&mut self.q_opts)
            .enumerate()
        {
            let gs: Vec<&Tensor> = critics[j]
                .vars()
                .iter()
                .map(|&v| g.value(grads[v]))
                .collect();
            opt.update(member.tensors_mut(), &gs);
        }
        Ok(CriticOutcome {
            total: total_val,
            members: member_vals,
            q_mean,
            q_min,
            es_mean,
            es_zero_rows,
            regularizer,
        })
    }

    fn policy_update(
        &mut self,
        batch: &Batch,
        noise: &Tensor,
        beta: f64,
        reduce: CriticReduce,
    ) -> Result<(f64, Tensor), AlgoError> {
        let mut g = Graph::new();
        let pv = self.policy.bind(&mut g, true);
        let critics = self.ensemble.bind(&mut g, Which::Members, false);
        let s = g.constant(batch.states.clone());
        let (loss, lp) = policy_loss(&mut g, &pv, &critics, s, noise, beta, reduce)?;
        self.apply_policy_gradient(&mut g, &pv.vars(), loss)?;
        Ok((g.value(loss).item(), g.evaluate(lp)))
    }

    fn apply_policy_gradient(
        &mut self,
        g: &mut Graph,
        vars: &[Var],
        loss: Var,
    ) -> Result<(), AlgoError> {
        let grads = g.gradient(loss, vars)?;
        let gs: Vec<&Tensor> = vars.iter().map(|&v| g.value(grads[v])).collect();
        self.policy_opt
            .update(self.policy.trunk_mut().tensors_mut(), &gs);
        Ok(())
    }

    // Clipped double-Q SAC, written against exactly two critics.

    fn sac_critic_update(
        &mut self,
        batch: &Batch,
        target_noise: &Tensor,
        beta: f64,
    ) -> Result<CriticOutcome, AlgoError> {
        let gamma = self.config.gamma;
        let (next_a, next_lp) = self.policy.sample(&batch.next_states, target_noise)?;
        let x_next = concat_cols(&batch.next_states, &next_a);
        let t1 = self.ensemble.targets()[0].forward_plain(&x_next);
        let t2 = self.ensemble.targets()[1].forward_plain(&x_next);
        let clipped = Tensor::column(
            t1.data()
                .iter()
                .zip(t2.data())
                .map(|(&a, &b)| if b < a { b } else { a })
                .collect(),
        );
        let y = target_values(
            &batch.rewards,
            &batch.dones,
            &clipped,
            &next_lp,
            beta,
            gamma,
        );

        let mut g = Graph::new();
        let c1 = self.ensemble.members()[0].bind(&mut g, true);
        let c2 = self.ensemble.members()[1].bind(&mut g, true);
        let s = g.constant(batch.states.clone());
        let a = g.constant(batch.actions.clone());
        let x = g.concat(&[s, a], crate::autodiff::Axis::Cols)?;
        let q1 = c1.forward(&mut g, x)?;
        let q2 = c2.forward(&mut g, x)?;
        let yv = g.constant(y);
        let d1 = g.sub(q1, yv)?;
        let s1 = g.square(d1)?;
        let l1 = g.mean(s1)?;
        let d2 = g.sub(q2, yv)?;
        let s2 = g.square(d2)?;
        let l2 = g.mean(s2)?;
        let total = g.add(l1, l2)?;

        let mut params = c1.vars();
        params.extend(c2.vars());
        let grads = g.gradient(total, &params)?;
        for (j, c) in [&c1, &c2].into_iter().enumerate() {
            let gs: Vec<&Tensor> = c.vars().iter().map(|&v| g.value(grads[v])).collect();
            let member = &mut self.ensemble.members_mut()[j];
            self.q_opts[j].update(member.tensors_mut(), &gs);
        }
        let (q_mean, q_min) = q_stats(&g, &[q1, q2]);
        Ok(CriticOutcome {
            total: g.value(total).item(),
            members: vec![g.value(l1).item(), g.value(l2).item()],
            q_mean,
            q_min,
            es_mean: None,
            es_zero_rows: None,
            regularizer: None,
        })
    }

    fn sac_policy_update(
        &mut self,
        batch: &Batch,
        noise: &Tensor,
        beta: f64,
    ) -> Result<(f64, Tensor), AlgoError> {
        let mut g = Graph::new();
        let pv = self.policy.bind(&mut g, true);
        let c1 = self.ensemble.members()[0].bind(&mut g, false);
        let c2 = self.ensemble.members()[1].bind(&mut g, false);
        let s = g.constant(batch.states.clone());
        let (action, lp) = pv.sample(&mut g, s, noise)?;
        let x = g.concat(&[s, action], crate::autodiff::Axis::Cols)?;
        let q1 = c1.forward(&mut g, x)?;
        let q2 = c2.forward(&mut g, x)?;
        let qmin = g.minimum(q1, q2)?;
        let ent = g.scale(lp, beta)?;
        let obj = g.sub(ent, qmin)?;
        let loss = g.mean(obj)?;
        self.apply_policy_gradient(&mut g, &pv.vars(), loss)?;
        Ok((g.value(loss).item(), g.evaluate(lp)))
    }

    /// Networks under the names `policy`, `critic.j`, `target.j`, `temperature`.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        let owned = |m: &Mlp| m.tensors().into_iter().cloned().collect::<Vec<_>>();
        c.push("policy", owned(self.policy.trunk()));
        for (j, m) in self.ensemble.members().iter().enumerate() {
            c.push(format!("critic.{j}"), owned(m));
        }
        for (j, m) in self.ensemble.targets().iter().enumerate() {
            c.push(format!("target.{j}"), owned(m));
        }
        c.push("temperature", vec![self.temperature.log_beta().clone()]);
        c
    }
}

struct CriticOutcome {
    total: f64,
    members: Vec<f64>,
    q_mean: f64,
    q_min: f64,
    es_mean: Option<f64>,
    es_zero_rows: Option<usize>,
    regularizer: Option<f64>,
}

fn q_stats(g: &Graph, qs: &[Var]) -> (f64, f64) {
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut min = f64::INFINITY;
    for &q in qs {
        for &v in g.value(q).data() {
            sum += v;
            count += 1;
            min = min.min(v);
        }
    }
    (sum / count as f64, min)
}

fn concat_rows(a: &Tensor, b: &Tensor) -> Tensor {
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Tensor::new([a.rows() + b.rows(), a.cols()], data).expect("shape")
}

/// Policy stored under `policy` in a trainer checkpoint.
pub fn policy_from_checkpoint(c: &Checkpoint) -> Result<GaussianPolicy, AlgoError> {
    let trunk = Mlp::from_tensors(c.get("policy")?.to_vec())?;
    Ok(GaussianPolicy::from_trunk(trunk)?)
}

/// Critics `critic.0..` and targets `target.0..` of a trainer checkpoint.
pub fn ensemble_from_checkpoint(c: &Checkpoint) -> Result<QEnsemble, AlgoError> {
    let collect = |prefix: &str| -> Result<Vec<Mlp>, AlgoError> {
        let mut out = Vec::new();
        while let Ok(t) = c.get(&format!("{prefix}.{}", out.len())) {
            out.push(Mlp::from_tensors(t.to_vec())?);
        }
        Ok(out)
    };
    Ok(QEnsemble::from_parts(
        collect("critic")?,
        collect("target")?,
    )?)
}

/// Temperature stored in a trainer checkpoint, as a fixed β.
pub fn temperature_from_checkpoint(c: &Checkpoint) -> Result<Temperature, AlgoError> {
    let lb = c.get("temperature")?;
    let v = lb.first().map(|t| t.item()).unwrap_or(0.0);
    let mut t = Temperature::build(TemperatureMode::Fixed, 1.0, 0.0, 0.0)?;
    t.set_log_beta(v);
    Ok(t)
}

impl AlgoError {
    fn at_step(self, step: u64, stage: &'static str) -> AlgoError {
        match self {
            AlgoError::Nn(crate::nn::NnError::Autodiff(e)) | AlgoError::Autodiff(e) => match e {
                AutodiffError::NonFinite { .. } => AlgoError::NonFinite {
                    step,
                    stage,
                    breakdown: e.to_string(),
                },
                other => AlgoError::Autodiff(other),
            },
            other => other,
        }
    }
}
