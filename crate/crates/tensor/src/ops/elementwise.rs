//! Element-wise unary and binary operations.
//!
//! Binary operations broadcast over leading axes only: the smaller operand's
//! shape must be a suffix of the larger one's.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::{BackwardOp, GradSink, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary<T> {
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    /// Natural log; inputs must be positive.
    Log,
    /// `ln(1 + e^x)`, evaluated stably.
    Softplus,
    Square,
    Sqrt,
    Neg,
    Abs,
    /// Huber with unit threshold: `0.5x²` for `|x| < 1`, `|x| − 0.5` otherwise.
    SmoothL1,
    Scale(T),
    AddScalar(T),
    /// `x^p` for non-negative `x`.
    Powf(T),
    /// Clamp into `[lo, hi]`; gradient is zero where clamped.
    Clamp(T, T),
}

impl<T: Real> Unary<T> {
    fn name(self) -> &'static str {
        match self {
            Unary::Relu => "relu",
            Unary::Sigmoid => "sigmoid",
            Unary::Tanh => "tanh",
            Unary::Exp => "exp",
            Unary::Log => "log",
            Unary::Softplus => "softplus",
            Unary::Square => "square",
            Unary::Sqrt => "sqrt",
            Unary::Neg => "neg",
            Unary::Abs => "abs",
            Unary::SmoothL1 => "smooth_l1",
            Unary::Scale(_) => "scale",
            Unary::AddScalar(_) => "add_scalar",
            Unary::Powf(_) => "powf",
            Unary::Clamp(..) => "clamp",
        }
    }

    #[inline]
    pub fn apply(self, x: T) -> T {
        let one = T::one();
        let half = T::lit(0.5);
        match self {
            Unary::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Unary::Sigmoid => {
                if x >= T::zero() {
                    one / (one + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (one + e)
                }
            }
            Unary::Tanh => x.tanh(),
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Softplus => x.max(T::zero()) + (-x.abs()).exp().ln_1p(),
            Unary::Square => x * x,
            Unary::Sqrt => x.sqrt(),
            Unary::Neg => -x,
            Unary::Abs => x.abs(),
            Unary::SmoothL1 => {
                let a = x.abs();
                if a < one {
                    half * x * x
                } else {
                    a - half
                }
            }
            Unary::Scale(s) => x * s,
            Unary::AddScalar(s) => x + s,
            Unary::Powf(p) => x.powf(p),
            Unary::Clamp(lo, hi) => x.max(lo).min(hi),
        }
    }

    /// Derivative given input `x` and output `y`.
    #[inline]
    fn derivative(self, x: T, y: T) -> T {
        let one = T::one();
        match self {
            Unary::Relu => {
                if x > T::zero() {
                    one
                } else {
                    T::zero()
                }
            }
            Unary::Sigmoid => y * (one - y),
            Unary::Tanh => one - y * y,
            Unary::Exp => y,
            Unary::Log => one / x,
            Unary::Softplus => Unary::Sigmoid.apply(x),
            Unary::Square => x + x,
            Unary::Sqrt => T::lit(0.5) / y,
            Unary::Neg => -one,
            Unary::Abs => {
                if x > T::zero() {
                    one
                } else if x < T::zero() {
                    -one
                } else {
                    T::zero()
                }
            }
            Unary::SmoothL1 => {
                if x.abs() < one {
                    x
                } else if x > T::zero() {
                    one
                } else {
                    -one
                }
            }
            Unary::Scale(s) => s,
            Unary::AddScalar(_) => one,
            Unary::Powf(p) => {
                if x == T::zero() {
                    if p == one {
                        one
                    } else {
                        T::zero()
                    }
                } else {
                    p * x.powf(p - one)
                }
            }
            Unary::Clamp(lo, hi) => {
                if x >= lo && x <= hi {
                    one
                } else {
                    T::zero()
                }
            }
        }
    }
}

struct UnaryOp<T: Real> {
    kind: Unary<T>,
    input: Tensor<T>,
}

impl<T: Real> BackwardOp<T> for UnaryOp<T> {
    fn name(&self) -> &'static str {
        self.kind.name()
    }

    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.input]
    }

    fn backward(&self, out: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
        let x = self.input.data();
        let y = out.data();
        if let Some(gx) = sink.slot(&self.input) {
            for i in 0..grad.len() {
                gx[i] += grad[i] * self.kind.derivative(x[i], y[i]);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

impl Binary {
    fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
            Binary::Div => "div",
        }
    }

    #[inline]
    fn apply<T: Real>(self, a: T, b: T) -> T {
        match self {
            Binary::Add => a + b,
            Binary::Sub => a - b,
            Binary::Mul => a * b,
            Binary::Div => a / b,
        }
    }
}

struct BinaryOp<T: Real> {
    kind: Binary,
    lhs: Tensor<T>,
    rhs: Tensor<T>,
}

impl<T: Real> BackwardOp<T> for BinaryOp<T> {
    fn name(&self) -> &'static str {
        self.kind.name()
    }

    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.lhs, &self.rhs]
    }

    fn backward(&self, _out: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
        let a = self.lhs.data();
        let b = self.rhs.data();
        let (na, nb) = (a.len(), b.len());
        if self.lhs.requires_grad() {
            let ga = sink.slot(&self.lhs).expect("lhs requires grad");
            for (i, &g) in grad.iter().enumerate() {
                let y = b[i % nb];
                ga[i % na] += match self.kind {
                    Binary::Add | Binary::Sub => g,
                    Binary::Mul => g * y,
                    Binary::Div => g / y,
                };
            }
        }
        if self.rhs.requires_grad() {
            let gb = sink.slot(&self.rhs).expect("rhs requires grad");
            for (i, &g) in grad.iter().enumerate() {
                let (x, y) = (a[i % na], b[i % nb]);
                gb[i % nb] += match self.kind {
                    Binary::Add => g,
                    Binary::Sub => -g,
                    Binary::Mul => g * x,
                    Binary::Div => -g * x / (y * y),
                };
            }
        }
    }
}

/// Output shape for suffix broadcasting, if compatible.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let long_numel: usize = long.iter().product();
    let short_numel: usize = short.iter().product();
    if long[long.len() - short.len()..] == *short && long_numel >= short_numel {
        Some(long.to_vec())
    } else {
        None
    }
}

impl<T: Real> Tensor<T> {
    pub fn unary(&self, kind: Unary<T>) -> Tensor<T> {
        let data: Vec<T> = self.data().iter().map(|&x| kind.apply(x)).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            UnaryOp {
                kind,
                input: self.clone(),
            },
        )
    }

    pub fn binary(&self, other: &Tensor<T>, kind: Binary) -> Result<Tensor<T>> {
        let shape = broadcast_shape(self.shape(), other.shape())
            .ok_or_else(|| TensorError::dim(kind.name(), self.shape(), other.shape()))?;
        let numel: usize = shape.iter().product();
        let data = {
            let a = self.data();
            let b = other.data();
            let (na, nb) = (a.len(), b.len());
            if na == numel && nb == numel {
                a.iter().zip(b.iter()).map(|(&x, &y)| kind.apply(x, y)).collect()
            } else {
                (0..numel).map(|i| kind.apply(a[i % na], b[i % nb])).collect()
            }
        };
        Ok(Tensor::from_op(
            shape,
            data,
            BinaryOp {
                kind,
                lhs: self.clone(),
                rhs: other.clone(),
            },
        ))
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, Binary::Add)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, Binary::Sub)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, Binary::Mul)
    }

    pub fn div(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, Binary::Div)
    }

    pub fn relu(&self) -> Tensor<T> {
        self.unary(Unary::Relu)
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        self.unary(Unary::Sigmoid)
    }

    pub fn tanh(&self) -> Tensor<T> {
        self.unary(Unary::Tanh)
    }

    pub fn exp(&self) -> Tensor<T> {
        self.unary(Unary::Exp)
    }

    pub fn ln(&self) -> Tensor<T> {
        self.unary(Unary::Log)
    }

    pub fn softplus(&self) -> Tensor<T> {
        self.unary(Unary::Softplus)
    }

    pub fn square(&self) -> Tensor<T> {
        self.unary(Unary::Square)
    }

    pub fn sqrt(&self) -> Tensor<T> {
        self.unary(Unary::Sqrt)
    }

    pub fn neg(&self) -> Tensor<T> {
        self.unary(Unary::Neg)
    }

    pub fn abs(&self) -> Tensor<T> {
        self.unary(Unary::Abs)
    }

    pub fn smooth_l1(&self) -> Tensor<T> {
        self.unary(Unary::SmoothL1)
    }

    pub fn scale(&self, s: T) -> Tensor<T> {
        self.unary(Unary::Scale(s))
    }

    pub fn add_scalar(&self, s: T) -> Tensor<T> {
        self.unary(Unary::AddScalar(s))
    }

    pub fn powf(&self, p: T) -> Tensor<T> {
        self.unary(Unary::Powf(p))
    }

    pub fn clamp(&self, lo: T, hi: T) -> Tensor<T> {
        self.unary(Unary::Clamp(lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_and_sigmoid_definitions() {
        let x = Tensor::<f64>::from_vec(vec![-1.0, 2.0, 0.0], &[3]).unwrap();
        assert_eq!(x.relu().to_vec(), vec![0.0, 2.0, 0.0]);
        assert_eq!(x.sigmoid().to_vec()[2], 0.5);
    }

    #[test]
    fn softplus_is_stable_for_large_magnitudes() {
        let x = Tensor::<f32>::from_vec(vec![-200.0, 200.0, 0.0], &[3]).unwrap();
        let y = x.softplus().to_vec();
        assert_eq!(y[0], 0.0);
        assert_eq!(y[1], 200.0);
        assert!((y[2] - 2f32.ln()).abs() < 1e-7);
    }

    #[test]
    fn smooth_l1_closed_forms() {
        let x = Tensor::<f64>::from_vec(vec![0.5, 2.0, -2.0], &[3]).unwrap();
        assert_eq!(x.smooth_l1().to_vec(), vec![0.125, 1.5, 1.5]);
    }

    #[test]
    fn leading_axis_broadcast() {
        let a = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let b = Tensor::<f64>::from_vec(vec![10.0, 20.0], &[2]).unwrap();
        assert_eq!(a.add(&b).unwrap().to_vec(), vec![11.0, 22.0, 13.0, 24.0]);
        assert_eq!(b.mul(&a).unwrap().to_vec(), vec![10.0, 40.0, 30.0, 80.0]);
        let c = Tensor::<f64>::zeros(&[3]);
        assert!(matches!(
            a.add(&c),
            Err(TensorError::Dimension { op: "add", .. })
        ));
    }
}
