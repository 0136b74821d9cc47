use proptest::prelude::*;

use super::*;
use crate::autodiff::{finite_difference_check, Graph, Tensor};

fn norm_diff(a: &[&Tensor], b: &[&Tensor]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.data().iter().zip(y.data()).map(|(p, q)| (p - q).powi(2)))
        .sum::<f64>()
        .sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn soft_update_contracts_by_rho(rho in 0.0f64..=1.0, s1 in 0u64..1000, s2 in 0u64..1000) {
        let members = vec![Mlp::init(&[3, 6, 1], s1).unwrap(), Mlp::init(&[3, 6, 1], s1 + 1).unwrap()];
        let targets = vec![Mlp::init(&[3, 6, 1], s2 + 5000).unwrap(), Mlp::init(&[3, 6, 1], s2 + 6000).unwrap()];
        let mut e = QEnsemble::from_parts(members, targets).unwrap();
        let before: Vec<f64> = (0..2)
            .map(|j| norm_diff(&e.targets()[j].tensors(), &e.members()[j].tensors()))
            .collect();
        e.soft_update(rho).unwrap();
        for (j, b) in before.iter().enumerate() {
            let after = norm_diff(&e.targets()[j].tensors(), &e.members()[j].tensors());
            prop_assert!((after - rho * b).abs() <= 1e-12 * (1.0 + b));
        }
    }

    #[test]
    fn policy_actions_strictly_inside_box(seed in 0u64..500, scale in 0.0f64..50.0) {
        let p = GaussianPolicy::new(2, 3, &[8], seed).unwrap();
        let s = Tensor::new([4, 2], (0..8).map(|i| scale * ((i as f64 + seed as f64) * 0.7).sin()).collect()).unwrap();
        let noise = Tensor::new([4, 3], (0..12).map(|i| 3.0 * ((i as f64) * 1.3).cos()).collect()).unwrap();
        let (a, lp) = p.sample(&s, &noise).unwrap();
        prop_assert!(a.data().iter().all(|v| v.abs() < 1.0));
        prop_assert!(lp.all_finite());
    }
}

fn critic_batch(seed: u64) -> (QEnsemble, Tensor, Tensor) {
    let e = QEnsemble::new(3, 2, 2, &[8, 8], seed).unwrap();
    let f = |i: usize, k: f64| ((i as f64 + 1.0) * k + seed as f64).sin();
    let s = Tensor::new([5, 2], (0..10).map(|i| f(i, 0.91)).collect()).unwrap();
    let a = Tensor::new([5, 2], (0..10).map(|i| 0.9 * f(i, 1.37)).collect()).unwrap();
    (e, s, a)
}

#[test]
fn q_forward_action_gradient_matches_finite_difference() {
    for seed in 0..20 {
        let (e, s, a) = critic_batch(seed);
        let f = |g: &mut Graph, av: crate::autodiff::Var| {
            let critics = e.bind(g, Which::Members, false);
            let sv = g.constant(s.clone());
            let qs = q_forward(g, &critics, sv, av).map_err(unwrap_ad)?;
            let all = stack(g, &qs).map_err(unwrap_ad)?;
            let w = g.constant(
                Tensor::new([5, 3], (0..15).map(|i| 0.3 + i as f64 * 0.1).collect()).unwrap(),
            );
            let weighted = g.mul(all, w)?;
            g.sum(weighted)
        };
        let err = finite_difference_check(f, &a, 1e-6).unwrap();
        assert!(err <= 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn q_forward_parameter_gradient_matches_finite_difference() {
    for seed in 0..20 {
        let (e, s, a) = critic_batch(seed);
        for layer in 0..3 {
            let w0 = e.members()[1].layers()[layer].weight.clone();
            let f = |g: &mut Graph, wv: crate::autodiff::Var| {
                let mut critics = e.bind(g, Which::Members, false);
                critics[1].layers[layer].0 = wv;
                let sv = g.constant(s.clone());
                let av = g.constant(a.clone());
                let qs = q_forward(g, &critics, sv, av).map_err(unwrap_ad)?;
                let sq = g.square(qs[1])?;
                g.sum(sq)
            };
            let err = finite_difference_check(f, &w0, 1e-6).unwrap();
            assert!(err <= 1e-6, "seed {seed} layer {layer}: {err}");
        }
    }
}

fn unwrap_ad(e: NnError) -> crate::autodiff::AutodiffError {
    match e {
        NnError::Autodiff(a) => a,
        other => panic!("{other}"),
    }
}

#[test]
fn checkpoint_round_trips_networks() {
    let p = GaussianPolicy::new(3, 1, &[4], 2).unwrap();
    let mut c = Checkpoint::new();
    c.push("policy", p.trunk().tensors().into_iter().cloned().collect());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    c.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    let trunk = Mlp::from_tensors(back.get("policy").unwrap().to_vec()).unwrap();
    assert_eq!(&trunk, p.trunk());
}
