use super::{Graph, Result, Tensor, TensorError, Var};

fn evaluate<F>(f: &F, at: &Tensor) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.param(at.clone());
    let out = f(&mut g, x)?;
    let value = g.value(out);
    if !value.is_scalar() {
        return Err(TensorError::NonScalarLoss(value.shape().to_vec()));
    }
    let v = value.item();
    if !v.is_finite() {
        return Err(TensorError::NonFinite { op: "grad_check" });
    }
    Ok(v)
}

/// Central finite-difference gradient `(f(x+h) - f(x-h)) / 2h` per coordinate.
pub fn numerical_gradient<F>(f: F, at: &Tensor, step: f64) -> Result<Vec<f64>>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut probe = at.clone();
    let mut grad = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let orig = at.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = evaluate(&f, &probe)?;
        probe.data_mut()[i] = orig - step;
        let minus = evaluate(&f, &probe)?;
        probe.data_mut()[i] = orig;
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// Compares the backward-pass gradient of scalar `f` at `at` against central
/// finite differences and returns the largest relative error, using
/// `max(|a|, |b|, 1e-8)` as the denominator.
pub fn grad_check<F>(f: F, at: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.param(at.clone());
    let out = f(&mut g, x)?;
    if !g.value(out).item().is_finite() {
        return Err(TensorError::NonFinite { op: "grad_check" });
    }
    g.backward(out)?;
    let analytic = g.grad(x).expect("parameter gradient");
    let numeric = numerical_gradient(&f, at, step)?;
    Ok(analytic
        .data()
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-8))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let at = Tensor::from_vec(vec![0.3, -1.2, 2.0]);
        let coeffs = Tensor::from_vec(vec![1.5, -0.5, 2.0]);
        let err = grad_check(
            |g, x| {
                let c = g.constant(coeffs.clone());
                let y = g.mul(x, c)?;
                g.sum(y)
            },
            &at,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn non_finite_function_is_rejected() {
        let at = Tensor::scalar(1e200);
        let res = grad_check(|g, x| g.mul(x, x), &at, 1e-5);
        assert!(matches!(res, Err(TensorError::NonFinite { .. })));
    }
}
