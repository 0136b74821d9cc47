use super::{AutodiffError, Graph, Tensor, Var};

/// Central-difference estimate of the gradient of a scalar function.
pub fn finite_difference_gradient(
    f: impl Fn(&mut Graph, Var) -> Result<Var, AutodiffError>,
    x: &Tensor,
    step: f64,
) -> Result<Tensor, AutodiffError> {
    let eval = |t: Tensor| -> Result<f64, AutodiffError> {
        let mut g = Graph::new();
        let v = g.parameter(t);
        let out = f(&mut g, v)?;
        Ok(g.value(out).item())
    };
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += step;
        let mut minus = x.clone();
        minus.data_mut()[i] -= step;
        grad.data_mut()[i] = (eval(plus)? - eval(minus)?) / (2.0 * step);
    }
    Ok(grad)
}

/// Largest relative disagreement between the autodiff gradient of `f` at `x`
/// and its central-difference estimate,
/// `max_i |analytic - numeric| / (|analytic| + |numeric| + 1e-12)`.
///
/// `f` builds its output from the input node it is handed; any gradients it
/// takes internally make the analytic side a higher-order derivative.
pub fn finite_difference_check(
    f: impl Fn(&mut Graph, Var) -> Result<Var, AutodiffError>,
    x: &Tensor,
    step: f64,
) -> Result<f64, AutodiffError> {
    Ok(finite_difference_compare(f, x, step)?.max_rel_err)
}

/// Analytic and numeric gradients side by side.
#[derive(Clone, Debug, PartialEq)]
pub struct FdComparison {
    pub analytic: Tensor,
    pub numeric: Tensor,
    pub max_rel_err: f64,
    /// Flat index of the worst entry.
    pub worst: usize,
}

impl FdComparison {
    /// `‖analytic − numeric‖∞ / (‖analytic‖∞ + ‖numeric‖∞ + 1e-12)`.
    pub fn normwise_rel_err(&self) -> f64 {
        let inf = |t: &Tensor| t.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.analytic.max_abs_diff(&self.numeric)
            / (inf(&self.analytic) + inf(&self.numeric) + 1e-12)
    }
}

pub fn finite_difference_compare(
    f: impl Fn(&mut Graph, Var) -> Result<Var, AutodiffError>,
    x: &Tensor,
    step: f64,
) -> Result<FdComparison, AutodiffError> {
    finite_difference_compare_with(&f, &f, x, step)
}

/// Autodiff gradient of `analytic` against central differences of `numeric`.
/// The two differ when the analytic graph deliberately blocks a gradient path
/// and `numeric` holds the blocked quantity fixed instead.
pub fn finite_difference_compare_with(
    analytic: impl Fn(&mut Graph, Var) -> Result<Var, AutodiffError>,
    numeric: impl Fn(&mut Graph, Var) -> Result<Var, AutodiffError>,
    x: &Tensor,
    step: f64,
) -> Result<FdComparison, AutodiffError> {
    let mut g = Graph::new();
    let v = g.parameter(x.clone());
    let out = analytic(&mut g, v)?;
    let grads = g.gradient(out, &[v])?;
    let analytic = g.value(grads[v]).clone();
    let numeric = finite_difference_gradient(&numeric, x, step)?;
    let (worst, max_rel_err) = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs() + 1e-12))
        .enumerate()
        .fold(
            (0, 0.0),
            |best, (i, e)| if e > best.1 { (i, e) } else { best },
        );
    Ok(FdComparison {
        analytic,
        numeric,
        max_rel_err,
        worst,
    })
}

#[cfg(test)]
pub(crate) fn max_relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs() + 1e-12))
        .fold(0.0, f64::max)
}
