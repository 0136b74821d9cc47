use super::{Mlp, MlpVars, NnError};
use crate::autodiff::{Axis, Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Members,
    Targets,
}

/// `N` critics `Q(s, a)` over `concat(s, a)` plus their soft-updated targets.
#[derive(Clone, Debug, PartialEq)]
pub struct QEnsemble {
    members: Vec<Mlp>,
    targets: Vec<Mlp>,
}

impl QEnsemble {
    /// Member `j` is initialised from seed `seed + j`; targets start as copies.
    pub fn new(
        n: usize,
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self, NnError> {
        let mut widths = vec![state_dim + action_dim];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let members = (0..n)
            .map(|j| Mlp::init(&widths, seed.wrapping_add(j as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_members(members)
    }

    pub fn from_members(members: Vec<Mlp>) -> Result<Self, NnError> {
        let targets = members.clone();
        Self::from_parts(members, targets)
    }

    pub fn from_parts(members: Vec<Mlp>, targets: Vec<Mlp>) -> Result<Self, NnError> {
        if members.len() < 2 {
            return Err(NnError::EnsembleTooSmall(members.len()));
        }
        if members.len() != targets.len() {
            return Err(NnError::InvalidArchitecture(format!(
                "{} members but {} targets",
                members.len(),
                targets.len()
            )));
        }
        let widths = members[0].widths();
        if widths.last() != Some(&1) {
            return Err(NnError::InvalidArchitecture(
                "critics must output one value".into(),
            ));
        }
        for m in members.iter().chain(&targets) {
            if m.widths() != widths {
                return Err(NnError::InvalidArchitecture(
                    "ensemble networks must share one architecture".into(),
                ));
            }
        }
        Ok(QEnsemble { members, targets })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    pub fn members(&self) -> &[Mlp] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [Mlp] {
        &mut self.members
    }

    pub fn targets(&self) -> &[Mlp] {
        &self.targets
    }

    pub fn networks(&self, which: Which) -> &[Mlp] {
        match which {
            Which::Members => &self.members,
            Which::Targets => &self.targets,
        }
    }

    pub fn bind(&self, g: &mut Graph, which: Which, trainable: bool) -> Vec<MlpVars> {
        self.networks(which)
            .iter()
            .map(|m| m.bind(g, trainable))
            .collect()
    }

    /// `p' ← ρ·p' + (1-ρ)·p` for every target parameter.
    pub fn soft_update(&mut self, rho: f64) -> Result<(), NnError> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(NnError::InvalidRho(rho));
        }
        for (t, m) in self.targets.iter_mut().zip(&self.members) {
            for (tp, mp) in t.tensors_mut().into_iter().zip(m.tensors()) {
                for (x, &y) in tp.data_mut().iter_mut().zip(mp.data()) {
                    *x = rho * *x + (1.0 - rho) * y;
                }
            }
        }
        Ok(())
    }

    /// All `N` critic outputs as plain values, `[B, N]`.
    pub fn q_values(
        &self,
        which: Which,
        states: &Tensor,
        actions: &Tensor,
    ) -> Result<Tensor, NnError> {
        check_batch(states, actions, self.input_dim())?;
        let x = concat_cols(states, actions);
        let outs: Vec<Tensor> = self
            .networks(which)
            .iter()
            .map(|m| m.forward_plain(&x))
            .collect();
        let (b, n) = (states.rows(), outs.len());
        let mut data = Vec::with_capacity(b * n);
        for i in 0..b {
            data.extend(outs.iter().map(|o| o.data()[i]));
        }
        Ok(Tensor::new([b, n], data).expect("shape"))
    }
}

fn check_batch(states: &Tensor, actions: &Tensor, input_dim: usize) -> Result<(), NnError> {
    if states.rows() != actions.rows() || states.cols() + actions.cols() != input_dim {
        return Err(NnError::DimensionMismatch {
            what: "critic input (states, actions)",
            expected: [states.rows(), input_dim],
            found: [actions.rows(), states.cols() + actions.cols()],
        });
    }
    Ok(())
}

pub(crate) fn concat_cols(a: &Tensor, b: &Tensor) -> Tensor {
    let cols = a.cols() + b.cols();
    let mut data = Vec::with_capacity(a.rows() * cols);
    for i in 0..a.rows() {
        data.extend_from_slice(a.row_slice(i));
        data.extend_from_slice(b.row_slice(i));
    }
    Tensor::new([a.rows(), cols], data).expect("shape")
}

/// Evaluates every bound critic on `(s, a)`; returns one `[B, 1]` node per
/// critic, in member order.
pub fn q_forward(
    g: &mut Graph,
    critics: &[MlpVars],
    states: Var,
    actions: Var,
) -> Result<Vec<Var>, NnError> {
    let (ss, sa) = (g.shape(states), g.shape(actions));
    if ss[0] != sa[0] {
        return Err(NnError::DimensionMismatch {
            what: "critic batch",
            expected: ss,
            found: sa,
        });
    }
    let x = g.concat(&[states, actions], Axis::Cols)?;
    critics.iter().map(|c| c.forward(g, x)).collect()
}

/// Stacks per-critic `[B, 1]` outputs into `[B, N]`.
pub fn stack(g: &mut Graph, qs: &[Var]) -> Result<Var, NnError> {
    Ok(g.concat(qs, Axis::Cols)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;

    fn constant_critic(input: usize, bias: f64) -> Mlp {
        Mlp::from_layers(vec![
            Linear {
                weight: Tensor::zeros([input, 4]),
                bias: Tensor::zeros([1, 4]),
            },
            Linear {
                weight: Tensor::zeros([4, 1]),
                bias: Tensor::scalar(bias),
            },
        ])
        .unwrap()
    }

    fn batch() -> (Tensor, Tensor) {
        let s = Tensor::new([3, 2], vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]).unwrap();
        let a = Tensor::column(vec![0.9, -0.2, 0.0]);
        (s, a)
    }

    #[test]
    fn zero_weights_output_bias() {
        let e = QEnsemble::from_members(vec![constant_critic(3, 1.5), constant_critic(3, -2.0)])
            .unwrap();
        let (s, a) = batch();
        let q = e.q_values(Which::Members, &s, &a).unwrap();
        for i in 0..3 {
            assert_eq!(q.row_slice(i), &[1.5, -2.0]);
        }
    }

    #[test]
    fn identical_members_agree_and_match_single_forward() {
        let m = Mlp::init(&[3, 8, 8, 1], 4).unwrap();
        let e = QEnsemble::from_members(vec![m.clone(), m.clone()]).unwrap();
        let (s, a) = batch();
        let q = e.q_values(Which::Members, &s, &a).unwrap();
        for i in 0..3 {
            assert_eq!(q.get(i, 0), q.get(i, 1));
        }

        let e = QEnsemble::new(4, 2, 1, &[8, 8], 10).unwrap();
        let mut g = Graph::new();
        let critics = e.bind(&mut g, Which::Members, true);
        let sv = g.constant(s.clone());
        let av = g.constant(a.clone());
        let qs = q_forward(&mut g, &critics, sv, av).unwrap();
        // loop-of-singles oracle
        let x = concat_cols(&s, &a);
        for (j, q) in qs.iter().enumerate() {
            assert_eq!(g.value(*q), &e.members()[j].forward_plain(&x));
        }
    }

    #[test]
    fn needs_two_members() {
        let m = Mlp::init(&[3, 4, 1], 0).unwrap();
        assert!(matches!(
            QEnsemble::from_members(vec![m]),
            Err(NnError::EnsembleTooSmall(1))
        ));
    }

    #[test]
    fn soft_update_examples() {
        let mk = |w: f64| {
            Mlp::from_layers(vec![Linear {
                weight: Tensor::full([2, 1], w),
                bias: Tensor::scalar(w),
            }])
            .unwrap()
        };
        let base = QEnsemble::from_parts(vec![mk(4.0), mk(4.0)], vec![mk(2.0), mk(2.0)]).unwrap();

        let mut e = base.clone();
        e.soft_update(1.0).unwrap();
        assert_eq!(e.targets(), base.targets());

        let mut e = base.clone();
        e.soft_update(0.0).unwrap();
        assert_eq!(e.targets(), e.members());

        let mut e = base.clone();
        e.soft_update(0.5).unwrap();
        assert!(e.targets()[0]
            .tensors()
            .iter()
            .all(|t| t.data().iter().all(|&v| v == 3.0)));

        assert!(matches!(
            base.clone().soft_update(1.5),
            Err(NnError::InvalidRho(_))
        ));
        assert!(base.clone().soft_update(-0.1).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let e = QEnsemble::new(2, 2, 1, &[4], 0).unwrap();
        let s = Tensor::zeros([3, 2]);
        let a = Tensor::zeros([2, 1]);
        assert!(matches!(
            e.q_values(Which::Members, &s, &a),
            Err(NnError::DimensionMismatch { .. })
        ));
    }
}
