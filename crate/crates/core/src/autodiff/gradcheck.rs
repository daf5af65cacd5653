use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest per-input relative error
    /// `|a - n| / max(|a|, |n|, 1e-8)` with L2 norms over each input tensor.
    pub max_relative_error: f64,
    /// Input index with the largest relative error.
    pub worst_input: Option<usize>,
    /// Largest relative error of a single element. Elements whose gradient
    /// is near the finite-difference noise floor dominate this figure.
    pub max_elementwise_error: f64,
    /// (input index, element index) of the worst element.
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

fn relative(diff: f64, a: f64, n: f64) -> f64 {
    diff / a.max(n).max(1e-8)
}

/// Compares backward gradients against central differences.
///
/// `build` receives one differentiable var per input and must return a
/// scalar. Each input tensor is scored by
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)` over its
/// gradient vector (L2 norms); the report carries the maximum over inputs
/// and, separately, the worst single element.
pub fn grad_check<F>(inputs: &mut [Tensor], eps: f64, build: F) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&mut Graph<'g>, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Usage(format!("grad_check eps {eps} outside [1e-7, 1e-3]")));
    }
    let analytic: Vec<Tensor> = {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t)).collect();
        let loss = build(&mut g, &vars)?;
        check_finite(g.value(loss).item())?;
        g.backward(loss)?;
        vars.iter()
            .zip(inputs.iter())
            .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_input: None,
        max_elementwise_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for ti in 0..inputs.len() {
        let (mut diff_sq, mut a_sq, mut n_sq) = (0.0, 0.0, 0.0);
        for ei in 0..inputs[ti].len() {
            let orig = inputs[ti].data()[ei];
            inputs[ti].data_mut()[ei] = orig + eps;
            let plus = evaluate(inputs, &build);
            inputs[ti].data_mut()[ei] = orig - eps;
            let minus = evaluate(inputs, &build);
            inputs[ti].data_mut()[ei] = orig;
            let numeric = (plus? - minus?) / (2.0 * eps);
            check_finite(numeric)?;
            let a = analytic[ti].data()[ei];
            diff_sq += (a - numeric) * (a - numeric);
            a_sq += a * a;
            n_sq += numeric * numeric;
            let rel = relative((a - numeric).abs(), a.abs(), numeric.abs());
            report.checked += 1;
            if rel > report.max_elementwise_error || report.worst.is_none() {
                report.max_elementwise_error = rel;
                report.worst = Some((ti, ei));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
        let rel = relative(diff_sq.sqrt(), a_sq.sqrt(), n_sq.sqrt());
        if rel > report.max_relative_error || report.worst_input.is_none() {
            report.max_relative_error = rel;
            report.worst_input = Some(ti);
        }
    }
    Ok(report)
}

fn evaluate<F>(inputs: &[Tensor], build: &F) -> Result<f64>
where
    F: for<'g> Fn(&mut Graph<'g>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t)).collect();
    let loss = build(&mut g, &vars)?;
    let v = g.value(loss);
    if !v.is_scalar() {
        return Err(Error::Usage("grad_check objective must be scalar".into()));
    }
    let v = v.item();
    check_finite(v)?;
    Ok(v)
}

fn check_finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite value {v} during gradient check")))
    }
}
