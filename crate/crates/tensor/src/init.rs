//! Parameter initialization.

use rand::Rng;
use rand_distr_free::standard_normal;

use crate::real::Real;
use crate::tensor::Tensor;

mod rand_distr_free {
    use rand::Rng;

    /// Box–Muller standard normal sample.
    pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
        loop {
            let u1: f64 = rng.gen();
            if u1 > f64::MIN_POSITIVE {
                let u2: f64 = rng.gen();
                return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            }
        }
    }
}

/// Normal samples with standard deviation `std`, redrawn outside `±2·std`.
pub fn trunc_normal<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize, std: f64) -> Vec<T> {
    (0..n)
        .map(|_| loop {
            let z = standard_normal(rng);
            if z.abs() <= 2.0 {
                break T::lit(z * std);
            }
        })
        .collect()
}

/// Uniform samples in `[-bound, bound]`.
pub fn uniform<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize, bound: f64) -> Vec<T> {
    (0..n).map(|_| T::lit(rng.gen_range(-bound..=bound))).collect()
}

/// Constant tensor of standard-normal samples (test inputs, noise).
pub fn randn<T: Real, R: Rng + ?Sized>(rng: &mut R, shape: &[usize]) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(standard_normal(rng))).collect();
    Tensor::from_vec(data, shape).expect("shape matches sample count")
}
