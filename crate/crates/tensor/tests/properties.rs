use ogrg_tensor::{KeyMask, Tensor};
use proptest::prelude::*;

fn vec_and_len() -> impl Strategy<Value = (Vec<f32>, usize)> {
    (1usize..6, 1usize..8).prop_flat_map(|(rows, cols)| {
        (prop::collection::vec(-30.0f32..30.0, rows * cols), Just(cols))
    })
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one((data, cols) in vec_and_len(), drop_first in any::<bool>()) {
        let rows = data.len() / cols;
        let x = Tensor::from_vec(data, &[rows, cols]).unwrap();
        let keep: Vec<bool> = (0..cols).map(|j| !(drop_first && j == 0 && cols > 1)).collect();
        let mask = KeyMask::new(1, cols, keep.clone()).unwrap();
        let x3 = x.reshape(&[1, rows, cols]).unwrap();
        let y = x3.softmax_lastdim(Some(&mask)).unwrap().to_vec();
        for row in y.chunks(cols) {
            let s: f32 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-5);
            for (v, k) in row.iter().zip(&keep) {
                prop_assert!(*v >= 0.0);
                if !k { prop_assert_eq!(*v, 0.0); }
            }
        }
    }

    #[test]
    fn backward_twice_doubles_gradient(data in prop::collection::vec(-3.0f64..3.0, 1..12)) {
        let n = data.len();
        let x = Tensor::param(data, &[n]).unwrap();
        let loss = x.tanh().mul(&x).unwrap().sum();
        loss.backward().unwrap();
        let once = x.grad().unwrap();
        loss.backward().unwrap();
        let twice = x.grad().unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn repeated_forward_backward_is_bit_identical(data in prop::collection::vec(-3.0f32..3.0, 4..16)) {
        let n = data.len();
        let run = || {
            let x = Tensor::param(data.clone(), &[n]).unwrap();
            let w = Tensor::from_vec((0..n).map(|i| i as f32 * 0.1).collect(), &[n]).unwrap();
            let loss = x.sigmoid().mul(&w).unwrap().softplus().sum();
            loss.backward().unwrap();
            (loss.item().to_bits(), x.grad().unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn sum_gradient_is_ones() {
    let x = Tensor::<f64>::param(vec![1.0, -2.0, 3.5], &[3]).unwrap();
    x.sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0; 3]);
}

#[test]
fn zero_times_anything_has_zero_gradient() {
    let x = Tensor::<f64>::param(vec![0.4, -1.0], &[2]).unwrap();
    x.exp().scale(0.0).sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![0.0; 2]);
}

#[test]
fn quadratic_form_gradient() {
    // d/dx sum((A x)^2) = 2 Aᵀ A x
    let a = Tensor::<f64>::from_vec(vec![1.0, 2.0, 0.0, -1.0, 3.0, 1.0], &[3, 2]).unwrap();
    let x = Tensor::<f64>::param(vec![0.5, -1.5], &[2, 1]).unwrap();
    a.matmul(&x).unwrap().square().sum().backward().unwrap();
    let ax = [1.0 * 0.5 + 2.0 * -1.5, 0.0 * 0.5 + -1.0 * -1.5, 3.0 * 0.5 + 1.0 * -1.5];
    let want = [
        2.0 * (1.0 * ax[0] + 0.0 * ax[1] + 3.0 * ax[2]),
        2.0 * (2.0 * ax[0] + -ax[1] + 1.0 * ax[2]),
    ];
    let got = x.grad().unwrap();
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn backward_on_non_scalar_is_a_contract_error() {
    let x = Tensor::<f32>::param(vec![1.0, 2.0], &[2]).unwrap();
    assert!(x.relu().backward().is_err());
}
