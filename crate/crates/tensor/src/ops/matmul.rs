use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::{BackwardOp, GradSink, Tensor};

#[derive(Clone, Copy)]
struct Dims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    /// `b` is a single matrix shared across the batch.
    shared: bool,
    /// `b` is stored as `[n, k]`.
    trans_b: bool,
}

impl Dims {
    /// (row stride, col stride) of `b` viewed as `k×n`.
    fn b_strides(&self) -> (usize, usize) {
        if self.trans_b {
            (1, self.k)
        } else {
            (self.n, 1)
        }
    }
}

struct MatMul<T: Real> {
    a: Tensor<T>,
    b: Tensor<T>,
    d: Dims,
}

impl<T: Real> BackwardOp<T> for MatMul<T> {
    fn name(&self) -> &'static str {
        "matmul"
    }

    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.a, &self.b]
    }

    fn backward(&self, _out: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
        let d = self.d;
        let (m, k, n) = (d.m, d.k, d.n);
        let a = self.a.data();
        let b = self.b.data();
        let (rsb, csb) = d.b_strides();
        if self.a.requires_grad() {
            let ga = sink.slot(&self.a).expect("a requires grad");
            // dA = dC · Bᵀ; Bᵀ is n×k with strides (csb, rsb).
            if d.shared {
                T::gemm(d.batch * m, n, k, grad, n, 1, &b, csb, rsb, ga, k, 1, true);
            } else {
                for i in 0..d.batch {
                    T::gemm(
                        m,
                        n,
                        k,
                        &grad[i * m * n..],
                        n,
                        1,
                        &b[i * k * n..],
                        csb,
                        rsb,
                        &mut ga[i * m * k..],
                        k,
                        1,
                        true,
                    );
                }
            }
        }
        if self.b.requires_grad() {
            let gb = sink.slot(&self.b).expect("b requires grad");
            let rows = if d.shared { d.batch * m } else { m };
            let reps = if d.shared { 1 } else { d.batch };
            for i in 0..reps {
                let (ao, go, bo) = (i * m * k, i * m * n, i * k * n);
                if d.trans_b {
                    // dB (n×k) = dCᵀ · A
                    T::gemm(n, rows, k, &grad[go..], 1, n, &a[ao..], k, 1, &mut gb[bo..], k, 1, true);
                } else {
                    // dB (k×n) = Aᵀ · dC
                    T::gemm(k, rows, n, &a[ao..], 1, k, &grad[go..], n, 1, &mut gb[bo..], n, 1, true);
                }
            }
        }
    }
}

fn matmul_impl<T: Real>(a: &Tensor<T>, b: &Tensor<T>, trans_b: bool) -> Result<Tensor<T>> {
    let op = if trans_b { "matmul_t" } else { "matmul" };
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() < 2 || sb.len() < 2 {
        return Err(TensorError::dim(op, sa, sb));
    }
    let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
    let (kb, n) = if trans_b {
        (sb[sb.len() - 1], sb[sb.len() - 2])
    } else {
        (sb[sb.len() - 2], sb[sb.len() - 1])
    };
    let lead = &sa[..sa.len() - 2];
    let shared = sb.len() == 2;
    if kb != k || (!shared && sb[..sb.len() - 2] != *lead) {
        return Err(TensorError::dim(op, sa, sb));
    }
    let batch: usize = lead.iter().product();
    let d = Dims {
        batch,
        m,
        k,
        n,
        shared,
        trans_b,
    };
    let (rsb, csb) = d.b_strides();
    let mut out = vec![T::zero(); batch * m * n];
    {
        let av = a.data();
        let bv = b.data();
        if shared {
            T::gemm(batch * m, k, n, &av, k, 1, &bv, rsb, csb, &mut out, n, 1, false);
        } else {
            for i in 0..batch {
                T::gemm(
                    m,
                    k,
                    n,
                    &av[i * m * k..],
                    k,
                    1,
                    &bv[i * k * n..],
                    rsb,
                    csb,
                    &mut out[i * m * n..],
                    n,
                    1,
                    false,
                );
            }
        }
    }
    let mut shape = lead.to_vec();
    shape.extend([m, n]);
    Ok(Tensor::from_op(
        shape,
        out,
        MatMul {
            a: a.clone(),
            b: b.clone(),
            d,
        },
    ))
}

impl<T: Real> Tensor<T> {
    /// Matrix product over the last two axes. `other` is either a single `k×n`
    /// matrix shared by every leading index, or has the same leading axes.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        matmul_impl(self, other, false)
    }

    /// `self · otherᵀ` over the last two axes (`other` stored as `…×n×k`).
    pub fn matmul_t(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        matmul_impl(self, other, true)
    }
}
