//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::tensor::{no_grad, Tensor};

#[derive(Clone, Debug)]
pub struct FdOptions {
    /// Central-difference step, in `[1e-7, 1e-3]`.
    pub eps: f64,
    /// Check at most this many coordinates per input (sampled with `seed`).
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions {
            eps: 1e-5,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    /// `max |analytic − numeric| / max(1, |numeric|)` over checked coordinates.
    pub max_rel_err: f64,
    pub coords_checked: usize,
    /// `(input index, coordinate, analytic, numeric)` at the maximum.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Checks `f` at `x`: returns the maximum relative error between the analytic
/// gradient and central differences over every coordinate of `x`.
pub fn finite_diff_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&Tensor<f64>) -> Result<Tensor<f64>>,
{
    let leaf = Tensor::param(x.to_vec(), x.shape())?;
    let opts = FdOptions {
        eps,
        ..FdOptions::default()
    };
    let report = finite_diff_check_inputs(|| f(&leaf), std::slice::from_ref(&leaf), &opts)?;
    Ok(report.max_rel_err)
}

/// Checks the gradient of the scalar produced by `f` with respect to each of
/// the trainable leaves in `inputs`, perturbing them in place.
pub fn finite_diff_check_inputs<F>(f: F, inputs: &[Tensor<f64>], opts: &FdOptions) -> Result<FdReport>
where
    F: Fn() -> Result<Tensor<f64>>,
{
    if !(1e-7..=1e-3).contains(&opts.eps) {
        return Err(TensorError::Parameter {
            op: "finite_diff_check",
            msg: format!("step {} outside [1e-7, 1e-3]", opts.eps),
        });
    }
    for t in inputs {
        if !t.requires_grad() || !t.is_leaf() {
            return Err(TensorError::Contract(
                "finite_diff_check inputs must be trainable leaves".into(),
            ));
        }
        t.zero_grad();
    }
    let loss = f()?;
    if loss.numel() != 1 {
        return Err(TensorError::Contract(format!(
            "finite_diff_check needs a scalar function, got shape {:?}",
            loss.shape()
        )));
    }
    let base = loss.item();
    loss.backward()?;
    drop(loss);
    let again = no_grad(&f)?.item();
    if again.to_bits() != base.to_bits() {
        return Err(TensorError::Contract(format!(
            "function is not deterministic: {base} then {again}"
        )));
    }

    let eval = || -> Result<f64> { Ok(no_grad(&f)?.item()) };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = FdReport {
        max_rel_err: 0.0,
        coords_checked: 0,
        worst: None,
    };
    for (ti, t) in inputs.iter().enumerate() {
        let analytic = t.grad().unwrap_or_else(|| vec![0.0; t.numel()]);
        let n = t.numel();
        let coords: Vec<usize> = match opts.max_coords {
            Some(m) if m < n => {
                let mut v = sample(&mut rng, n, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        for i in coords {
            let orig = t.data()[i];
            t.data_mut()[i] = orig + opts.eps;
            let plus = eval();
            t.data_mut()[i] = orig - opts.eps;
            let minus = eval();
            t.data_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * opts.eps);
            let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
            report.coords_checked += 1;
            if report.worst.is_none() || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((ti, i, analytic[i], numeric));
            }
        }
    }
    for t in inputs {
        t.zero_grad();
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_has_no_error() {
        let x = Tensor::<f64>::from_vec(vec![0.3, -1.2, 4.0], &[3]).unwrap();
        let err = finite_diff_check(|t| Ok(t.sum()), &x, 1e-5).unwrap();
        assert!(err < 1e-9);
    }

    #[test]
    fn square_sum_at_unit_vector() {
        let x = Tensor::<f64>::from_vec(vec![1.0], &[1]).unwrap();
        let err = finite_diff_check(|t| Ok(t.square().sum()), &x, 1e-4).unwrap();
        assert!(err < 1e-8);
    }

    #[test]
    fn step_outside_range_is_rejected() {
        let x = Tensor::<f64>::zeros(&[1]);
        assert!(finite_diff_check(|t| Ok(t.sum()), &x, 1e-2).is_err());
        assert!(finite_diff_check(|t| Ok(t.sum()), &x, 1e-9).is_err());
    }

    #[test]
    fn nondeterminism_is_detected() {
        use std::cell::Cell;
        let calls = Cell::new(0.0);
        let x = Tensor::<f64>::zeros(&[2]);
        let res = finite_diff_check(
            |t| {
                calls.set(calls.get() + 1.0);
                Ok(t.sum().add_scalar(calls.get()))
            },
            &x,
            1e-5,
        );
        assert!(matches!(res, Err(TensorError::Contract(_))));
    }
}
