use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::AnalysisError;
use crate::algorithms::{losses::action_gradients, sample_indices, Batch};
use crate::autodiff::{Graph, Tensor};
use crate::datagen::Transitions;
use crate::nn::{q_forward, GaussianPolicy, QEnsemble, Which};

/// States drawn per diagnostic evaluation.
pub const REPORT_SAMPLES: usize = 1024;

/// Per row: `(mean_j (Q_j − min Q), population variance)`. Summing offsets
/// from the minimum keeps identical members at exactly zero.
fn row_stats(q: &Tensor) -> impl Iterator<Item = (f64, f64)> + '_ {
    (0..q.rows()).map(move |i| {
        let row = q.row_slice(i);
        let n = row.len() as f64;
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        let penalty = row.iter().map(|x| x - min).sum::<f64>() / n;
        let mean = min + penalty;
        let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (penalty, var)
    })
}

/// Batch mean of `mean_j Q_j − min_j Q_j`; never negative.
pub fn clip_penalty(
    ensemble: &QEnsemble,
    states: &Tensor,
    actions: &Tensor,
) -> Result<f64, AnalysisError> {
    let q = ensemble.q_values(Which::Members, states, actions)?;
    let rows = q.rows().max(1) as f64;
    Ok(row_stats(&q).map(|(penalty, _)| penalty).sum::<f64>() / rows)
}

/// Batch mean of the member standard deviation (divisor `N`).
pub fn q_std(
    ensemble: &QEnsemble,
    states: &Tensor,
    actions: &Tensor,
) -> Result<f64, AnalysisError> {
    let q = ensemble.q_values(Which::Members, states, actions)?;
    let rows = q.rows().max(1) as f64;
    Ok(row_stats(&q).map(|(_, var)| var.sqrt()).sum::<f64>() / rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PenaltyReport {
    pub mean_penalty_behavior: f64,
    pub mean_penalty_random: f64,
    /// `mean_penalty_random − mean_penalty_behavior`
    pub gap: f64,
    pub q_std_behavior: f64,
    pub q_std_random: f64,
}

/// Clip penalty and member spread on dataset states paired with behavior
/// actions versus uniform actions. With several behavior policies, row `i`
/// uses policy `i mod k`.
pub fn penalty_report(
    ensemble: &QEnsemble,
    data: &Transitions,
    behavior: &[GaussianPolicy],
    samples: usize,
    seed: u64,
) -> Result<PenaltyReport, AnalysisError> {
    if data.is_empty() {
        return Err(AnalysisError::Empty("dataset"));
    }
    if behavior.is_empty() {
        return Err(AnalysisError::Empty("behavior policies"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = sample_indices(&mut rng, data.len(), samples);
    let states = Batch::gather(data, &idx).states;
    let ad = data.action_dim();
    let mut behavior_actions = Vec::with_capacity(samples * ad);
    for i in 0..samples {
        let z: Vec<f64> = (0..ad).map(|_| rng.sample(StandardNormal)).collect();
        behavior_actions.extend(behavior[i % behavior.len()].act(states.row_slice(i), &z));
    }
    let behavior_actions = Tensor::new([samples, ad], behavior_actions).expect("shape");
    let random_actions = Tensor::new(
        [samples, ad],
        (0..samples * ad)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect(),
    )
    .expect("shape");
    let pb = clip_penalty(ensemble, &states, &behavior_actions)?;
    let pr = clip_penalty(ensemble, &states, &random_actions)?;
    Ok(PenaltyReport {
        mean_penalty_behavior: pb,
        mean_penalty_random: pr,
        gap: pr - pb,
        q_std_behavior: q_std(ensemble, &states, &behavior_actions)?,
        q_std_random: q_std(ensemble, &states, &random_actions)?,
    })
}

/// `∇_a Q_j(s, a)` for every member, each `[B, |A|]`.
pub fn input_gradients(
    ensemble: &QEnsemble,
    states: &Tensor,
    actions: &Tensor,
) -> Result<Vec<Tensor>, AnalysisError> {
    let mut g = Graph::new();
    let critics = ensemble.bind(&mut g, Which::Members, false);
    let s = g.constant(states.clone());
    let a = g.constant(actions.clone());
    let qs = q_forward(&mut g, &critics, s, a)?;
    let grads = action_gradients(&mut g, &qs, a)?;
    Ok(grads.into_iter().map(|v| g.evaluate(v)).collect())
}

/// Cosine of two vectors; 0 when either is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    let c = u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>() / (nu * nv);
    c.clamp(-1.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CosSim {
    /// Batch mean of the per-row minimum over member pairs.
    pub min: f64,
    /// Batch mean of the per-row mean over member pairs.
    pub mean: f64,
}

pub fn pairwise_cos_sim(
    ensemble: &QEnsemble,
    states: &Tensor,
    actions: &Tensor,
) -> Result<CosSim, AnalysisError> {
    let grads = input_gradients(ensemble, states, actions)?;
    let (n, b) = (grads.len(), states.rows());
    if b == 0 {
        return Err(AnalysisError::Empty("batch"));
    }
    let (mut min_sum, mut mean_sum) = (0.0, 0.0);
    for r in 0..b {
        let (mut lo, mut tot, mut pairs) = (f64::INFINITY, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let c = cosine(grads[i].row_slice(r), grads[j].row_slice(r));
                lo = lo.min(c);
                tot += c;
                pairs += 1.0;
            }
        }
        min_sum += lo;
        mean_sum += tot / pairs;
    }
    Ok(CosSim {
        min: min_sum / b as f64,
        mean: mean_sum / b as f64,
    })
}

pub fn min_pairwise_cos_sim(
    ensemble: &QEnsemble,
    states: &Tensor,
    actions: &Tensor,
) -> Result<f64, AnalysisError> {
    Ok(pairwise_cos_sim(ensemble, states, actions)?.min)
}

/// Cosine statistics on `samples` dataset `(s, a)` pairs.
pub fn dataset_cos_sim(
    ensemble: &QEnsemble,
    data: &Transitions,
    samples: usize,
    seed: u64,
) -> Result<CosSim, AnalysisError> {
    if data.is_empty() {
        return Err(AnalysisError::Empty("dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = Batch::gather(data, &sample_indices(&mut rng, data.len(), samples));
    pairwise_cos_sim(ensemble, &batch.states, &batch.actions)
}

/// Mean of `Q_j(s, a)` over members and sampled dataset states, `a ~ π(·|s)`.
pub fn policy_q_mean(
    ensemble: &QEnsemble,
    policy: &GaussianPolicy,
    data: &Transitions,
    samples: usize,
    seed: u64,
) -> Result<f64, AnalysisError> {
    if data.is_empty() {
        return Err(AnalysisError::Empty("dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = Batch::gather(data, &sample_indices(&mut rng, data.len(), samples)).states;
    let noise = crate::algorithms::normal_tensor(&mut rng, [samples, data.action_dim()]);
    let (actions, _) = policy.sample(&states, &noise)?;
    let q = ensemble.q_values(Which::Members, &states, &actions)?;
    Ok(q.data().iter().sum::<f64>() / q.data().len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub mean: f64,
}

/// Histogram over `[0, 4·|A|]` of `‖â_i − a_i‖²`, where `pick(i, s_i)` chooses
/// `â_i` for dataset row `i`.
pub fn action_distance_hist(
    data: &Transitions,
    bins: usize,
    mut pick: impl FnMut(usize, &[f64]) -> Vec<f64>,
) -> Result<Histogram, AnalysisError> {
    if data.is_empty() {
        return Err(AnalysisError::Empty("dataset"));
    }
    if bins == 0 {
        return Err(AnalysisError::Empty("histogram bins"));
    }
    let hi = 4.0 * data.action_dim() as f64;
    let width = hi / bins as f64;
    let edges = (0..=bins).map(|k| k as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    let mut total = 0.0;
    for (i, t) in data.iter().enumerate() {
        let a_hat = pick(i, t.s);
        if a_hat.len() != t.a.len() {
            return Err(AnalysisError::DimensionMismatch {
                what: "chosen action",
                expected: t.a.len(),
                found: a_hat.len(),
            });
        }
        let d: f64 = a_hat.iter().zip(t.a).map(|(x, y)| (x - y).powi(2)).sum();
        total += d;
        counts[((d / width) as usize).min(bins - 1)] += 1;
    }
    Ok(Histogram {
        edges,
        counts,
        mean: total / data.len() as f64,
    })
}

/// One seeded policy sample per dataset row.
pub fn policy_action_distances(
    policy: &GaussianPolicy,
    data: &Transitions,
    bins: usize,
    seed: u64,
) -> Result<Histogram, AnalysisError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ad = data.action_dim();
    action_distance_hist(data, bins, |_, s| {
        let z: Vec<f64> = (0..ad).map(|_| rng.sample(StandardNormal)).collect();
        policy.act(s, &z)
    })
}

#[derive(Serialize)]
struct PenaltyRow {
    step: u64,
    behavior_penalty: f64,
    random_penalty: f64,
    gap: f64,
    behavior_q_std: f64,
    random_q_std: f64,
}

#[derive(Serialize)]
struct CosSimRow {
    step: u64,
    min_pairwise_cos_sim: f64,
    mean_pairwise_cos_sim: f64,
}

#[derive(Serialize)]
struct HistRow {
    bin_lo: f64,
    bin_hi: f64,
    count: u64,
}

fn write_rows<T: Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AnalysisError::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| AnalysisError::csv(path, e))?;
    }
    w.flush().map_err(|e| AnalysisError::csv(path, e.into()))?;
    Ok(())
}

/// `step,behavior_penalty,random_penalty,gap,behavior_q_std,random_q_std`
pub fn write_penalty_csv(path: &Path, rows: &[(u64, PenaltyReport)]) -> Result<(), AnalysisError> {
    write_rows(
        path,
        rows.iter().map(|(step, r)| PenaltyRow {
            step: *step,
            behavior_penalty: r.mean_penalty_behavior,
            random_penalty: r.mean_penalty_random,
            gap: r.gap,
            behavior_q_std: r.q_std_behavior,
            random_q_std: r.q_std_random,
        }),
    )
}

/// `step,min_pairwise_cos_sim,mean_pairwise_cos_sim`
pub fn write_cossim_csv(path: &Path, rows: &[(u64, CosSim)]) -> Result<(), AnalysisError> {
    write_rows(
        path,
        rows.iter().map(|(step, c)| CosSimRow {
            step: *step,
            min_pairwise_cos_sim: c.min,
            mean_pairwise_cos_sim: c.mean,
        }),
    )
}

/// `bin_lo,bin_hi,count`
pub fn write_hist_csv(path: &Path, h: &Histogram) -> Result<(), AnalysisError> {
    write_rows(
        path,
        h.counts.iter().enumerate().map(|(k, &count)| HistRow {
            bin_lo: h.edges[k],
            bin_hi: h.edges[k + 1],
            count,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Linear, Mlp};

    fn constant(v: f64) -> Mlp {
        Mlp::from_layers(vec![Linear {
            weight: Tensor::zeros([3, 1]),
            bias: Tensor::scalar(v),
        }])
        .unwrap()
    }

    fn linear(w: [f64; 3]) -> Mlp {
        Mlp::from_layers(vec![Linear {
            weight: Tensor::column(w.to_vec()),
            bias: Tensor::scalar(0.0),
        }])
        .unwrap()
    }

    fn batch(b: usize) -> (Tensor, Tensor) {
        let s = Tensor::new([b, 2], (0..2 * b).map(|i| (i as f64 * 0.9).sin()).collect()).unwrap();
        let a = Tensor::new([b, 1], (0..b).map(|i| (i as f64 * 1.7).cos()).collect()).unwrap();
        (s, a)
    }

    fn data(n: usize) -> Transitions {
        let mut t = Transitions::new(2, 1);
        for i in 0..n {
            let x = i as f64 / n as f64;
            t.push(&[x, -x], &[2.0 * x - 1.0], -x * x, &[x, 0.0], false)
                .unwrap();
        }
        t
    }

    #[test]
    fn clip_penalty_examples() {
        let (s, a) = batch(1);
        let e = QEnsemble::from_members(vec![constant(1.0), constant(2.0), constant(3.0)]).unwrap();
        assert_eq!(clip_penalty(&e, &s, &a).unwrap(), 1.0);
        let m = Mlp::init(&[3, 8, 1], 3).unwrap();
        let same = QEnsemble::from_members(vec![m.clone(), m.clone(), m]).unwrap();
        let (s, a) = batch(20);
        assert_eq!(clip_penalty(&same, &s, &a).unwrap(), 0.0);
        assert_eq!(q_std(&same, &s, &a).unwrap(), 0.0);
    }

    #[test]
    fn clip_penalty_matches_naive_oracle() {
        let e = QEnsemble::new(5, 2, 1, &[16], 9).unwrap();
        let (s, a) = batch(64);
        let x: Vec<Vec<f64>> = (0..64)
            .map(|i| [s.row_slice(i), a.row_slice(i)].concat())
            .collect();
        let mut total = 0.0;
        for xi in &x {
            let vals: Vec<f64> = e
                .members()
                .iter()
                .map(|m| m.forward_plain(&Tensor::row(xi.clone())).item())
                .collect();
            let mean = vals.iter().sum::<f64>() / 5.0;
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            total += mean - min;
        }
        let got = clip_penalty(&e, &s, &a).unwrap();
        assert!((got - total / 64.0).abs() < 1e-12);
        assert!(got > 0.0);
    }

    #[test]
    fn duplicated_member_report_is_zero() {
        let m = Mlp::init(&[3, 8, 1], 0).unwrap();
        let e = QEnsemble::from_members(vec![m.clone(), m]).unwrap();
        let p = GaussianPolicy::new(2, 1, &[8], 1).unwrap();
        let r = penalty_report(&e, &data(50), &[p], 256, 3).unwrap();
        assert_eq!(
            r,
            PenaltyReport {
                mean_penalty_behavior: 0.0,
                mean_penalty_random: 0.0,
                gap: 0.0,
                q_std_behavior: 0.0,
                q_std_random: 0.0
            }
        );
    }

    #[test]
    fn report_gap_is_the_difference() {
        let e = QEnsemble::new(4, 2, 1, &[8], 2).unwrap();
        let p = GaussianPolicy::new(2, 1, &[8], 1).unwrap();
        let r = penalty_report(&e, &data(50), &[p.clone(), p], REPORT_SAMPLES, 4).unwrap();
        assert_eq!(r.gap, r.mean_penalty_random - r.mean_penalty_behavior);
        assert!(r.mean_penalty_behavior >= 0.0 && r.mean_penalty_random >= 0.0);
    }

    #[test]
    fn policy_q_mean_examples() {
        let p = GaussianPolicy::new(2, 1, &[8], 1).unwrap();
        let e =
            QEnsemble::from_members(vec![constant(-1.0), constant(-2.0), constant(0.5)]).unwrap();
        assert_eq!(
            policy_q_mean(&e, &p, &data(40), 64, 0).unwrap(),
            (-1.0 - 2.0 + 0.5) / 3.0
        );
        // Linear in the action only: the mean is the weight times the mean sampled action.
        let e = QEnsemble::from_members(vec![linear([0.0, 0.0, 2.0]), linear([0.0, 0.0, 2.0])])
            .unwrap();
        let got = policy_q_mean(&e, &p, &data(40), 512, 5).unwrap();
        assert!(got.abs() <= 2.0);
        assert_eq!(got, policy_q_mean(&e, &p, &data(40), 512, 5).unwrap());
    }

    #[test]
    fn cosine_similarity_examples() {
        let (s, a) = batch(10);
        let m = Mlp::init(&[3, 8, 1], 5).unwrap();
        let same = QEnsemble::from_members(vec![m.clone(), m]).unwrap();
        let c = pairwise_cos_sim(&same, &s, &a).unwrap();
        assert!((c.min - 1.0).abs() < 1e-15 && (c.mean - 1.0).abs() < 1e-15);

        let anti = QEnsemble::from_members(vec![linear([0.1, 0.2, 1.5]), linear([0.3, 0.0, -0.2])])
            .unwrap();
        assert_eq!(min_pairwise_cos_sim(&anti, &s, &a).unwrap(), -1.0);

        let e = QEnsemble::new(6, 2, 1, &[8], 7).unwrap();
        let c = pairwise_cos_sim(&e, &s, &a).unwrap();
        assert!((-1.0..=1.0).contains(&c.min) && c.min <= c.mean && c.mean <= 1.0);
    }

    #[test]
    fn input_gradients_of_linear_critics_are_their_weights() {
        let e = QEnsemble::from_members(vec![linear([0.1, 0.2, 1.5]), linear([0.3, 0.0, -0.2])])
            .unwrap();
        let (s, a) = batch(3);
        let g = input_gradients(&e, &s, &a).unwrap();
        assert!(g[0].data().iter().all(|&x| x == 1.5));
        assert!(g[1].data().iter().all(|&x| x == -0.2));
    }

    #[test]
    fn replayed_actions_have_zero_distance() {
        let d = data(100);
        let h = action_distance_hist(&d, 10, |i, _| d.get(i).a.to_vec()).unwrap();
        assert_eq!(h.counts[0], 100);
        assert_eq!(h.mean, 0.0);
        assert_eq!(h.edges.len(), 11);
        assert_eq!(h.edges[10], 4.0);
    }

    #[test]
    fn uniform_versus_uniform_mean_is_one_third() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut d = Transitions::new(1, 1);
        for _ in 0..200_000 {
            d.push(&[0.0], &[rng.random_range(-1.0..=1.0)], 0.0, &[0.0], false)
                .unwrap();
        }
        let h = action_distance_hist(&d, 20, |_, _| vec![rng.random_range(-1.0..=1.0)]).unwrap();
        // E(U − V)² = 2/3 for U, V ~ U(−1, 1); sd of (U−V)² is ≈ 0.71
        assert!(
            (h.mean - 2.0 / 3.0).abs() < 5.0 * 0.72 / (200_000f64).sqrt(),
            "{}",
            h.mean
        );
        assert_eq!(h.counts.iter().sum::<u64>(), 200_000);
    }

    #[test]
    fn csv_headers_are_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("penalty_report.csv");
        let r = PenaltyReport {
            mean_penalty_behavior: 0.5,
            mean_penalty_random: 2.0,
            gap: 1.5,
            q_std_behavior: 0.1,
            q_std_random: 0.4,
        };
        write_penalty_csv(&p, &[(5000, r)]).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "step,behavior_penalty,random_penalty,gap,behavior_q_std,random_q_std\n5000,0.5,2.0,1.5,0.1,0.4\n"
        );
        let p = dir.path().join("cossim.csv");
        write_cossim_csv(
            &p,
            &[(
                0,
                CosSim {
                    min: -0.25,
                    mean: 0.5,
                },
            )],
        )
        .unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "step,min_pairwise_cos_sim,mean_pairwise_cos_sim\n0,-0.25,0.5\n"
        );
        let p = dir.path().join("action_dist.csv");
        let h = Histogram {
            edges: vec![0.0, 2.0, 4.0],
            counts: vec![3, 1],
            mean: 1.0,
        };
        write_hist_csv(&p, &h).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "bin_lo,bin_hi,count\n0.0,2.0,3\n2.0,4.0,1\n"
        );
    }
}
