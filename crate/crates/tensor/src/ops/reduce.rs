use crate::real::Real;
use crate::tensor::{BackwardOp, GradSink, Tensor};

struct SumAll<T: Real> {
    input: Tensor<T>,
    scale: T,
}

impl<T: Real> BackwardOp<T> for SumAll<T> {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.input]
    }

    fn backward(&self, _out: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
        let g = grad[0] * self.scale;
        if let Some(gx) = sink.slot(&self.input) {
            gx.iter_mut().for_each(|v| *v += g);
        }
    }
}

struct SumLast<T: Real> {
    input: Tensor<T>,
    width: usize,
    scale: T,
}

impl<T: Real> BackwardOp<T> for SumLast<T> {
    fn name(&self) -> &'static str {
        "sum_last"
    }

    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.input]
    }

    fn backward(&self, _out: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
        let w = self.width;
        if let Some(gx) = sink.slot(&self.input) {
            for (row, &g) in gx.chunks_mut(w).zip(grad) {
                let g = g * self.scale;
                row.iter_mut().for_each(|v| *v += g);
            }
        }
    }
}

impl<T: Real> Tensor<T> {
    /// Sum of all elements as a shape-`[]` tensor.
    pub fn sum(&self) -> Tensor<T> {
        let s = self.data().iter().copied().sum();
        Tensor::from_op(
            vec![],
            vec![s],
            SumAll {
                input: self.clone(),
                scale: T::one(),
            },
        )
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = T::lit(self.numel().max(1) as f64);
        let s: T = self.data().iter().copied().sum();
        Tensor::from_op(
            vec![],
            vec![s / n],
            SumAll {
                input: self.clone(),
                scale: T::one() / n,
            },
        )
    }

    fn reduce_last(&self, mean: bool) -> Tensor<T> {
        let shape = self.shape();
        let w = *shape.last().unwrap_or(&1);
        let out_shape = shape[..shape.len().saturating_sub(1)].to_vec();
        let scale = if mean {
            T::one() / T::lit(w.max(1) as f64)
        } else {
            T::one()
        };
        let data: Vec<T> = if w == 0 {
            vec![T::zero(); out_shape.iter().product()]
        } else {
            self.data()
                .chunks(w)
                .map(|r| r.iter().copied().sum::<T>() * scale)
                .collect()
        };
        Tensor::from_op(
            out_shape,
            data,
            SumLast {
                input: self.clone(),
                width: w,
                scale,
            },
        )
    }

    /// Sum over the last axis.
    pub fn sum_last(&self) -> Tensor<T> {
        self.reduce_last(false)
    }

    /// Mean over the last axis.
    pub fn mean_last(&self) -> Tensor<T> {
        self.reduce_last(true)
    }
}
