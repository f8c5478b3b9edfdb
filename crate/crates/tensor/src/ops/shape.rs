//! Reshaping, permutation, gathering, slicing and concatenation.

use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::{BackwardOp, GradSink, Tensor};

/// Marks an output position that reads no input (value zero).
pub const NO_SOURCE: usize = usize::MAX;

struct Reshape<T: Real> {
    input: Tensor<T>,
}

impl<T: Real> BackwardOp<T> for Reshape<T> {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.input]
    }

    fn backward(&self, _out: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
        sink.add(&self.input, grad);
    }
}

struct Gather<T: Real> {
    input: Tensor<T>,
    index: Rc<Vec<usize>>,
}

impl<T: Real> BackwardOp<T> for Gather<T> {
    fn name(&self) -> &'static str {
        "gather"
    }

    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.input]
    }

    fn backward(&self, _out: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
        if let Some(gx) = sink.slot(&self.input) {
            for (&src, &g) in self.index.iter().zip(grad) {
                if src != NO_SOURCE {
                    gx[src] += g;
                }
            }
        }
    }
}

struct Narrow<T: Real> {
    input: Tensor<T>,
    outer: usize,
    in_block: usize,
    offset: usize,
    out_block: usize,
}

impl<T: Real> BackwardOp<T> for Narrow<T> {
    fn name(&self) -> &'static str {
        "narrow"
    }

    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.input]
    }

    fn backward(&self, _out: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
        if let Some(gx) = sink.slot(&self.input) {
            for o in 0..self.outer {
                let dst = &mut gx[o * self.in_block + self.offset..][..self.out_block];
                let src = &grad[o * self.out_block..][..self.out_block];
                dst.iter_mut().zip(src).for_each(|(a, b)| *a += *b);
            }
        }
    }
}

struct Concat<T: Real> {
    inputs: Vec<Tensor<T>>,
    outer: usize,
    blocks: Vec<usize>,
}

impl<T: Real> BackwardOp<T> for Concat<T> {
    fn name(&self) -> &'static str {
        "concat"
    }

    fn inputs(&self) -> Vec<&Tensor<T>> {
        self.inputs.iter().collect()
    }

    fn backward(&self, _out: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
        let total: usize = self.blocks.iter().sum();
        let mut offset = 0;
        for (t, &blk) in self.inputs.iter().zip(&self.blocks) {
            if let Some(gx) = sink.slot(t) {
                for o in 0..self.outer {
                    let src = &grad[o * total + offset..][..blk];
                    gx[o * blk..][..blk]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(a, b)| *a += *b);
                }
            }
            offset += blk;
        }
    }
}

fn normalize_axis(axis: isize, ndim: usize) -> Option<usize> {
    let a = if axis < 0 { ndim as isize + axis } else { axis };
    (a >= 0 && (a as usize) < ndim).then_some(a as usize)
}

/// Row-major strides of a shape.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

impl<T: Real> Tensor<T> {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(TensorError::dim("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            Reshape {
                input: self.clone(),
            },
        ))
    }

    /// `out[i] = self[index[i]]` (zero where `index[i] == NO_SOURCE`).
    pub fn gather(&self, index: Rc<Vec<usize>>, shape: &[usize]) -> Result<Tensor<T>> {
        let numel: usize = shape.iter().product();
        if numel != index.len() {
            return Err(TensorError::dim("gather", shape, &[index.len()]));
        }
        let n = self.numel();
        if let Some(&bad) = index.iter().find(|&&i| i != NO_SOURCE && i >= n) {
            return Err(TensorError::param(
                "gather",
                format!("index {bad} out of range for {n} elements"),
            ));
        }
        let data = {
            let src = self.data();
            index
                .iter()
                .map(|&i| if i == NO_SOURCE { T::zero() } else { src[i] })
                .collect()
        };
        Ok(Tensor::from_op(
            shape.to_vec(),
            data,
            Gather {
                input: self.clone(),
                index,
            },
        ))
    }

    /// Axis permutation: output axis `j` is input axis `axes[j]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor<T>> {
        let shape = self.shape();
        let nd = shape.len();
        let mut seen = vec![false; nd];
        if axes.len() != nd || axes.iter().any(|&a| a >= nd || std::mem::replace(&mut seen[a], true)) {
            return Err(TensorError::param(
                "permute",
                format!("{axes:?} is not a permutation of {nd} axes"),
            ));
        }
        let in_strides = strides(shape);
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let numel = self.numel();
        let mut index = Vec::with_capacity(numel);
        let mut counter = vec![0usize; nd];
        for _ in 0..numel {
            let src: usize = counter
                .iter()
                .zip(axes)
                .map(|(&c, &a)| c * in_strides[a])
                .sum();
            index.push(src);
            for d in (0..nd).rev() {
                counter[d] += 1;
                if counter[d] < out_shape[d] {
                    break;
                }
                counter[d] = 0;
            }
        }
        self.gather(Rc::new(index), &out_shape)
    }

    /// Swaps the last two axes.
    pub fn transpose_last(&self) -> Result<Tensor<T>> {
        let nd = self.ndim();
        if nd < 2 {
            return Err(TensorError::param("transpose_last", "needs at least 2 axes"));
        }
        let mut axes: Vec<usize> = (0..nd).collect();
        axes.swap(nd - 1, nd - 2);
        self.permute(&axes)
    }

    /// Contiguous slice `[start, start + len)` along `axis`.
    pub fn narrow(&self, axis: isize, start: usize, len: usize) -> Result<Tensor<T>> {
        let shape = self.shape();
        let ax = normalize_axis(axis, shape.len())
            .ok_or_else(|| TensorError::param("narrow", format!("axis {axis} out of range")))?;
        if start + len > shape[ax] {
            return Err(TensorError::param(
                "narrow",
                format!("range {start}..{} exceeds axis size {}", start + len, shape[ax]),
            ));
        }
        let inner: usize = shape[ax + 1..].iter().product();
        let outer: usize = shape[..ax].iter().product();
        let in_block = shape[ax] * inner;
        let out_block = len * inner;
        let offset = start * inner;
        let data = {
            let src = self.data();
            let mut d = Vec::with_capacity(outer * out_block);
            for o in 0..outer {
                d.extend_from_slice(&src[o * in_block + offset..][..out_block]);
            }
            d
        };
        let mut out_shape = shape.to_vec();
        out_shape[ax] = len;
        Ok(Tensor::from_op(
            out_shape,
            data,
            Narrow {
                input: self.clone(),
                outer,
                in_block,
                offset,
                out_block,
            },
        ))
    }

    /// Concatenation along `axis`; all other dimensions must agree.
    pub fn concat(tensors: &[Tensor<T>], axis: isize) -> Result<Tensor<T>> {
        let first = tensors
            .first()
            .ok_or_else(|| TensorError::param("concat", "no inputs"))?;
        let shape0 = first.shape();
        let ax = normalize_axis(axis, shape0.len())
            .ok_or_else(|| TensorError::param("concat", format!("axis {axis} out of range")))?;
        for t in &tensors[1..] {
            let s = t.shape();
            if s.len() != shape0.len()
                || s[..ax] != shape0[..ax]
                || s[ax + 1..] != shape0[ax + 1..]
            {
                return Err(TensorError::dim("concat", shape0, s));
            }
        }
        let outer: usize = shape0[..ax].iter().product();
        let inner: usize = shape0[ax + 1..].iter().product();
        let blocks: Vec<usize> = tensors.iter().map(|t| t.shape()[ax] * inner).collect();
        let total: usize = blocks.iter().sum();
        let mut data = Vec::with_capacity(outer * total);
        {
            let guards: Vec<_> = tensors.iter().map(|t| t.data()).collect();
            for o in 0..outer {
                for (g, &blk) in guards.iter().zip(&blocks) {
                    data.extend_from_slice(&g[o * blk..][..blk]);
                }
            }
        }
        let mut out_shape = shape0.to_vec();
        out_shape[ax] = tensors.iter().map(|t| t.shape()[ax]).sum();
        Ok(Tensor::from_op(
            out_shape,
            data,
            Concat {
                inputs: tensors.to_vec(),
                outer,
                blocks,
            },
        ))
    }

    /// Rows of a `[V, C]` table selected by `ids`, shaped `[ids.len(), C]`.
    pub fn embedding(&self, ids: &[usize]) -> Result<Tensor<T>> {
        if self.ndim() != 2 {
            return Err(TensorError::param("embedding", "table must be 2-D"));
        }
        let (v, c) = (self.shape()[0], self.shape()[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(TensorError::param(
                "embedding",
                format!("id {bad} >= table size {v}"),
            ));
        }
        let index: Vec<usize> = ids
            .iter()
            .flat_map(|&id| (0..c).map(move |j| id * c + j))
            .collect();
        self.gather(Rc::new(index), &[ids.len(), c])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permute_matches_manual_transpose() {
        let x = Tensor::<f64>::from_vec((0..6).map(f64::from).collect(), &[2, 3]).unwrap();
        let t = x.transpose_last().unwrap();
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.to_vec(), vec![0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
    }

    #[test]
    fn narrow_and_concat_invert_each_other() {
        let x = Tensor::<f64>::from_vec((0..24).map(f64::from).collect(), &[2, 3, 4]).unwrap();
        let a = x.narrow(1, 0, 1).unwrap();
        let b = x.narrow(1, 1, 2).unwrap();
        let y = Tensor::concat(&[a, b], 1).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn embedding_rejects_out_of_range_ids() {
        let table = Tensor::<f32>::zeros(&[4, 2]);
        assert!(table.embedding(&[0, 3]).is_ok());
        assert!(table.embedding(&[4]).is_err());
    }
}
