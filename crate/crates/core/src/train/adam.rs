use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Adam moments and hyperparameters for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    /// Zero moments shaped like `params`, with the usual defaults
    /// (β1 0.9, β2 0.999, ε 1e-8).
    pub fn new(params: &[Tensor], learning_rate: f64) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }
}

/// One bias-corrected Adam update. `grads[i] == None` leaves parameter `i`
/// (a frozen tensor) untouched. Nothing is modified if any gradient is
/// non-finite.
pub fn adam_step(params: &mut [Tensor], grads: &[Option<Tensor>], names: &[String], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::dim("adam_step", &[params.len()], &[grads.len(), state.first_moment.len()]));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if let Some(g) = g {
            if g.shape() != p.shape() {
                return Err(Error::dim("adam_step", p.shape(), g.shape()));
            }
            if !g.all_finite() {
                let name = names.get(i).map(String::as_str).unwrap_or("?");
                return Err(Error::Divergence(format!("non-finite gradient for parameter {name}")));
            }
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, g) in grads.iter().enumerate() {
        let Some(g) = g else { continue };
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        let p = params[i].data_mut();
        for j in 0..p.len() {
            let gj = g.data()[j];
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

/// Rescales gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Option<Tensor>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(Tensor::squared_norm).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let factor = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            g.scale_in_place(factor);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![Tensor::vector(vec![1.0, -2.0])];
        let mut s = AdamState::new(&p, 0.1);
        adam_step(&mut p, &[Some(Tensor::zeros(&[2]))], &names(1), &mut s).unwrap();
        assert_eq!(p[0].data(), &[1.0, -2.0]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn single_step_closed_form() {
        let mut p = vec![Tensor::scalar(1.0)];
        let mut s = AdamState::new(&p, 0.1);
        adam_step(&mut p, &[Some(Tensor::scalar(1.0))], &names(1), &mut s).unwrap();
        let expected = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p[0].item() - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut p = vec![Tensor::scalar(0.0)];
        let mut s = AdamState::new(&p, 0.01);
        let g = [Some(Tensor::scalar(2.0))];
        adam_step(&mut p, &g, &names(1), &mut s).unwrap();
        let first = p[0].item();
        adam_step(&mut p, &g, &names(1), &mut s).unwrap();
        assert!(first < 0.0 && p[0].item() < first);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = vec![Tensor::scalar(0.0), Tensor::scalar(1.0)];
        let mut s = AdamState::new(&p, 0.01);
        let err = adam_step(&mut p, &[Some(Tensor::scalar(1.0)), Some(Tensor::scalar(f64::NAN))], &names(2), &mut s)
            .unwrap_err();
        assert!(err.to_string().contains("p1"));
        assert_eq!(p[0].item(), 0.0);
        assert_eq!(s.step_count, 0);
    }

    #[test]
    fn frozen_parameters_untouched() {
        let mut p = vec![Tensor::scalar(3.0)];
        let mut s = AdamState::new(&p, 0.5);
        adam_step(&mut p, &[None], &names(1), &mut s).unwrap();
        assert_eq!(p[0].item(), 3.0);
    }

    #[test]
    fn clipping() {
        let mut g = vec![Some(Tensor::vector(vec![3.0, 4.0])), None];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        let clipped = g[0].as_ref().unwrap();
        assert!((clipped.squared_norm() - 1.0).abs() < 1e-12);
    }
}
