//! Reverse-mode sweep, optimizer traces, and the finite-difference harness.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use raddet_tensor::ops::{
    batched_matmul, conv2d, conv_transpose2d, layernorm_channels, prelu, softmax_lastdim,
};
use raddet_tensor::{backward, grad_check, Adam, Tensor};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_leaf(rng: &mut ChaCha8Rng, shape: &[usize], requires_grad: bool) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::leaf(shape, data, requires_grad).unwrap()
}

#[test]
fn backward_sum_gives_ones() {
    let x = Tensor::leaf(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0], true).unwrap();
    let loss = x.sum();
    backward(&loss).unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
}

#[test]
fn backward_sum_of_squares_gives_2x() {
    let vals = vec![1.0, -2.0, 3.0, 0.5];
    let x = Tensor::leaf(&[4], vals.clone(), true).unwrap();
    let loss = x.mul(&x).unwrap().sum();
    backward(&loss).unwrap();
    let g = x.grad().unwrap();
    for (gi, v) in g.iter().zip(&vals) {
        assert_eq!(*gi, 2.0 * v);
    }
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let x = Tensor::leaf(&[3], vec![1.0, 2.0, 3.0], true).unwrap();
    let y = x.scale(2.0);
    assert!(backward(&y).is_err());
}

#[test]
fn backward_shared_input_accumulates() {
    // loss = sum(x) + sum(x * x) -> grad = 1 + 2x
    let x = Tensor::leaf(&[3], vec![1.0, 2.0, -1.0], true).unwrap();
    let loss = x.sum().add(&x.mul(&x).unwrap().sum()).unwrap();
    backward(&loss).unwrap();
    let g = x.grad().unwrap();
    assert_eq!(g, vec![3.0, 5.0, -1.0]);
}

#[test]
fn prelu_cases() {
    let x = Tensor::new(&[1, 1, 1, 2], vec![-1.0, 2.0]).unwrap();
    let relu = prelu(&x, &Tensor::new(&[1], vec![0.0]).unwrap()).unwrap();
    assert_eq!(relu.data(), &[0.0, 2.0]);
    let ident = prelu(&x, &Tensor::new(&[1], vec![1.0]).unwrap()).unwrap();
    assert_eq!(ident.data(), x.data());
    let x = Tensor::new(&[1, 1, 1, 1], vec![-4.0]).unwrap();
    let y = prelu(&x, &Tensor::new(&[1], vec![0.25]).unwrap()).unwrap();
    assert_eq!(y.data(), &[-1.0]);
}

#[test]
fn adam_first_step_is_signed_lr() {
    let lr = 1e-3;
    let mut opt = Adam::new(lr);
    let mut params = vec![Tensor::leaf(&[3], vec![1.0, -0.5, 2.0], true).unwrap()];
    params[0].accumulate_grad(&[0.37, -1.4, 2.2]);
    let before = params[0].data().to_vec();
    opt.step(&mut params).unwrap();
    for ((after, before), g) in params[0].data().iter().zip(&before).zip([0.37f64, -1.4, 2.2]) {
        let expect = before - lr * g.signum();
        assert!((after - expect).abs() < 1e-9, "{after} vs {expect}");
    }
    assert_eq!(opt.steps_taken(), 1);
}

#[test]
fn adam_zero_gradient_keeps_params() {
    let mut opt = Adam::new(0.1);
    let mut params = vec![Tensor::leaf(&[2], vec![1.0, 2.0], true).unwrap()];
    params[0].accumulate_grad(&[0.0, 0.0]);
    opt.step(&mut params).unwrap();
    assert_eq!(params[0].data(), &[1.0, 2.0]);
}

#[test]
fn adam_two_step_scalar_trace() {
    // Hand-computed trace for g = 1.0 twice, lr = 0.1.
    let (lr, b1, b2, eps): (f64, f64, f64, f64) = (0.1, 0.9, 0.999, 1e-8);
    let mut p = 0.5f64;
    let (mut m, mut v) = (0.0, 0.0);
    let mut expect = Vec::new();
    for t in 1..=2 {
        m = b1 * m + (1.0 - b1) * 1.0;
        v = b2 * v + (1.0 - b2) * 1.0;
        let mhat = m / (1.0 - b1.powi(t));
        let vhat = v / (1.0 - b2.powi(t));
        p -= lr * mhat / (vhat.sqrt() + eps);
        expect.push(p);
    }

    let mut opt = Adam::new(lr);
    let mut params = vec![Tensor::leaf(&[1], vec![0.5], true).unwrap()];
    for &e in &expect {
        params[0].accumulate_grad(&[1.0]);
        opt.step(&mut params).unwrap();
        assert!((params[0].data()[0] - e).abs() < 1e-15);
    }
}

#[test]
fn grad_check_sum_of_squares_is_tight() {
    let mut r = rng(11);
    let x = random_leaf(&mut r, &[8], false);
    let err = grad_check(|p| Ok(p.mul(p)?.sum()), &x, 1e-5).unwrap();
    assert!(err < 1e-9, "{err}");
}

#[test]
fn grad_check_single_conv_layer() {
    let mut r = rng(12);
    let x = random_leaf(&mut r, &[1, 2, 6, 6], false);
    let w = random_leaf(&mut r, &[3, 2, 3, 3], false);
    let b = random_leaf(&mut r, &[3], false);

    let err = grad_check(
        |p| {
            let y = conv2d(p, &w, Some(&b), (2, 2), (1, 1))?;
            Ok(y.mul(&y)?.sum())
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-5, "conv input grad err {err}");

    let err = grad_check(
        |p| {
            let y = conv2d(&x, p, Some(&b), (2, 2), (1, 1))?;
            Ok(y.mul(&y)?.sum())
        },
        &w,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-5, "conv weight grad err {err}");
}

#[test]
fn grad_check_conv_transpose_layer() {
    let mut r = rng(14);
    let x = random_leaf(&mut r, &[1, 3, 3, 3], false);
    let w = random_leaf(&mut r, &[3, 2, 4, 4], false);
    let b = random_leaf(&mut r, &[2], false);
    let t = random_leaf(&mut r, &[1, 2, 6, 6], false);

    let err = grad_check(
        |p| {
            let y = conv_transpose2d(p, &w, Some(&b), (2, 2), (1, 1))?;
            Ok(y.mul(&t)?.sum())
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-7, "conv_transpose input grad err {err}");

    let err = grad_check(
        |p| {
            let y = conv_transpose2d(&x, p, Some(&b), (2, 2), (1, 1))?;
            Ok(y.mul(&y)?.sum())
        },
        &w,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "conv_transpose weight grad err {err}");
}

#[test]
fn grad_check_layernorm_and_prelu() {
    let mut r = rng(15);
    let x = random_leaf(&mut r, &[2, 4, 2, 2], false);
    let gamma = random_leaf(&mut r, &[4], false);
    let beta = random_leaf(&mut r, &[4], false);
    let alpha = random_leaf(&mut r, &[4], false);
    let t = random_leaf(&mut r, &[2, 4, 2, 2], false);

    let err = grad_check(
        |p| {
            let y = layernorm_channels(p, &gamma, &beta, 1e-5)?;
            let y = prelu(&y, &alpha)?;
            Ok(y.mul(&t)?.sum())
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "layernorm+prelu input grad err {err}");

    let err = grad_check(
        |p| {
            let y = layernorm_channels(&x, p, &beta, 1e-5)?;
            Ok(y.mul(&t)?.sum())
        },
        &gamma,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-7, "layernorm gamma grad err {err}");
}

#[test]
fn grad_check_batched_matmul_and_transpose() {
    let mut r = rng(16);
    let a = random_leaf(&mut r, &[2, 3, 4], false);
    let b = random_leaf(&mut r, &[2, 4, 3], false);

    let err = grad_check(
        |p| {
            let y = batched_matmul(p, &b)?;
            Ok(y.mul(&y)?.sum())
        },
        &a,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-7, "matmul lhs grad err {err}");

    let err = grad_check(
        |p| {
            let bt = p.transpose_last2()?;
            let y = batched_matmul(&a, &bt)?;
            Ok(y.mul(&y)?.sum())
        },
        &b.transpose_last2().unwrap().detach(),
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-7, "matmul rhs-through-transpose grad err {err}");
}

#[test]
fn grad_check_softmax_and_elementwise_chain() {
    let mut r = rng(13);
    let x = random_leaf(&mut r, &[3, 4], false);
    let t = random_leaf(&mut r, &[3, 4], false);
    let err = grad_check(
        |p| {
            let s = softmax_lastdim(p)?;
            let d = s.mul(&t)?.sigmoid();
            Ok(d.mean())
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-7, "{err}");
}

mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(values in proptest::collection::vec(-30.0f64..30.0, 12)) {
            let x = Tensor::new(&[3, 4], values).unwrap();
            let y = softmax_lastdim(&x).unwrap();
            for row in y.data().chunks(4) {
                let s: f64 = row.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn scale_then_sum_is_linear(values in proptest::collection::vec(-10.0f64..10.0, 6), k in -4.0f64..4.0) {
            let x = Tensor::new(&[6], values).unwrap();
            let lhs = x.scale(k).sum().item().unwrap();
            let rhs = k * x.sum().item().unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
