use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn t(data: &[f64], shape: &[usize]) -> Tensor {
    Tensor::new(data.to_vec(), shape).unwrap()
}

fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    t(&(0..n).map(|_| rng.gen_range(lo..hi)).collect::<Vec<_>>(), shape)
}

/// Random projection so every output coordinate carries an O(1) gradient.
fn project(y: &Tensor, seed: u64) -> crate::Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rand_t(&mut rng, y.shape(), 0.5, 1.5);
    Ok(y.mul(&w)?.sum())
}

#[test]
fn matmul_identity() {
    let a = t(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
    let eye = t(&[1.0, 0.0, 0.0, 1.0], &[2, 2]);
    assert_eq!(a.matmul(&eye).unwrap().to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn sigmoid_at_zero() {
    assert_eq!(Tensor::scalar(0.0).sigmoid().item(), 0.5);
}

#[test]
fn conv_all_ones() {
    let x = Tensor::full(&[1, 1, 3, 3], 1.0);
    let w = Tensor::full(&[1, 1, 2, 2], 1.0);
    let y = x.conv2d(&w, &Tensor::zeros(&[1]), 1, 0).unwrap();
    assert_eq!(y.shape(), &[1, 1, 2, 2]);
    assert_eq!(y.to_vec(), vec![4.0; 4]);
}

#[test]
fn shape_errors_name_the_op() {
    let a = Tensor::zeros(&[2, 3]);
    let err = a.matmul(&Tensor::zeros(&[2, 3])).unwrap_err().to_string();
    assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
    let err = Tensor::zeros(&[1, 3, 4, 4])
        .conv2d(&Tensor::zeros(&[2, 2, 3, 3]), &Tensor::zeros(&[2]), 1, 0)
        .unwrap_err()
        .to_string();
    assert!(err.contains("conv2d"), "{err}");
    assert!(a.add(&Tensor::zeros(&[4])).is_err());
    assert!(Tensor::new(vec![1.0; 5], &[2, 3]).is_err());
}

#[test]
fn backward_linear_and_quadratic() {
    let w = Tensor::param(vec![1.0, 2.0, 3.0], &[3]).unwrap();
    w.sum().backward().unwrap();
    assert_eq!(w.grad().unwrap(), vec![1.0, 1.0, 1.0]);

    let w = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
    w.mul(&w).unwrap().sum().backward().unwrap();
    assert_eq!(w.grad().unwrap(), vec![2.0, 4.0]);

    let x = Tensor::param(vec![0.0], &[]).unwrap();
    x.sigmoid().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![0.25]);
}

#[test]
fn backward_rejects_non_scalar() {
    let w = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
    assert!(matches!(w.scale(2.0).backward(), Err(crate::Error::Contract(_))));
}

#[test]
fn backward_accumulates_and_clears() {
    let w = Tensor::param(vec![1.0, -2.0], &[2]).unwrap();
    let loss = w.square().sum();
    loss.backward().unwrap();
    loss.backward().unwrap();
    assert_eq!(w.grad().unwrap(), vec![4.0, -8.0]);
    w.zero_grad();
    loss.backward().unwrap();
    let first = w.grad().unwrap();
    w.zero_grad();
    loss.backward().unwrap();
    assert_eq!(w.grad().unwrap(), first);
}

#[test]
fn constants_never_accumulate() {
    let c = t(&[1.0, 2.0], &[2]);
    let w = Tensor::param(vec![3.0, 4.0], &[2]).unwrap();
    c.mul(&w).unwrap().sum().backward().unwrap();
    assert!(c.grad().is_none());
    assert!(!c.requires_grad());
}

#[test]
fn no_grad_records_nothing() {
    let w = Tensor::param(vec![1.0], &[1]).unwrap();
    let y = no_grad(|| w.scale(2.0));
    assert!(!y.requires_grad());
    assert!(is_grad_enabled());
}

#[test]
fn diamond_graph_visits_shared_node_once() {
    let x = Tensor::param(vec![2.0], &[1]).unwrap();
    let h = x.exp();
    let y = h.add(&h).unwrap().mul(&h).unwrap().sum();
    y.backward().unwrap();
    // y = 2 e^{2x}; dy/dx = 4 e^{2x}
    let expect = 4.0 * (4.0f64).exp();
    assert!((x.grad().unwrap()[0] - expect).abs() < 1e-9 * expect);
}

#[test]
fn straight_through_forward_and_backward() {
    let x = Tensor::param(vec![0.73, 0.5, 0.2, 1.7, -0.3], &[5]).unwrap();
    let y = x.straight_through(0.5);
    assert_eq!(y.to_vec(), vec![1.0, 0.0, 0.0, 1.0, 0.0]);
    y.sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0; 5]);
}

#[test]
fn broadcasting_add_reduces_gradient() {
    let a = Tensor::param(vec![1.0; 6], &[2, 3]).unwrap();
    let b = Tensor::param(vec![1.0, 2.0, 3.0], &[3]).unwrap();
    let y = a.add(&b).unwrap();
    assert_eq!(y.to_vec(), vec![2.0, 3.0, 4.0, 2.0, 3.0, 4.0]);
    y.sum().backward().unwrap();
    assert_eq!(b.grad().unwrap(), vec![2.0, 2.0, 2.0]);
    let c = Tensor::zeros(&[2, 1]);
    assert_eq!(a.add(&c).unwrap().shape(), &[2, 3]);
}

#[test]
fn grad_check_sum_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_t(&mut rng, &[4, 3], -2.0, 2.0);
    let err = grad_check(|v| Ok(v[0].sum()), &[x], 1e-5).unwrap();
    assert!(err < 1e-10, "{err}");
}

#[test]
fn grad_check_rejects_non_finite() {
    let x = t(&[-1.0], &[1]);
    let err = grad_check(|v| Ok(v[0].log().sum()), &[x], 1e-5);
    assert!(matches!(err, Err(crate::Error::Numeric(_))));
}

fn check(name: &str, f: impl Fn(&[Tensor]) -> crate::Result<Tensor>, inputs: &[Tensor]) {
    let err = grad_check(f, inputs, 1e-5).unwrap();
    assert!(err < 1e-5, "{name}: relative error {err}");
}

#[test]
fn grad_check_catalog() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = rand_t(&mut rng, &[3, 4], -1.0, 1.0);
    let b = rand_t(&mut rng, &[3, 4], -1.0, 1.0);
    let pos = rand_t(&mut rng, &[3, 4], 0.5, 2.0);
    let row = rand_t(&mut rng, &[4], 0.5, 2.0);
    check("add", |v| project(&v[0].add(&v[1])?, 1), &[a.clone(), row.clone()]);
    check("sub", |v| project(&v[0].sub(&v[1])?, 2), &[a.clone(), b.clone()]);
    check("mul", |v| project(&v[0].mul(&v[1])?, 3), &[a.clone(), b.clone()]);
    check("div", |v| project(&v[0].div(&v[1])?, 4), &[a.clone(), pos.clone()]);
    check("div_bcast", |v| project(&v[0].div(&v[1])?, 4), &[a.clone(), row.clone()]);
    check("scale", |v| project(&v[0].scale(-1.7), 5), std::slice::from_ref(&a));
    check("add_scalar", |v| project(&v[0].add_scalar(0.3), 5), std::slice::from_ref(&a));
    check("sigmoid", |v| project(&v[0].sigmoid(), 6), std::slice::from_ref(&a));
    check("exp", |v| project(&v[0].exp(), 7), std::slice::from_ref(&a));
    check("log", |v| project(&v[0].log(), 8), std::slice::from_ref(&pos));
    check("sqrt", |v| project(&v[0].sqrt(), 9), std::slice::from_ref(&pos));
    check("sum", |v| Ok(v[0].sum()), std::slice::from_ref(&a));
    check("mean", |v| Ok(v[0].mean()), std::slice::from_ref(&a));
    check("sum_axis0", |v| project(&v[0].sum_axis(0)?, 10), std::slice::from_ref(&a));
    check("sum_axis1", |v| project(&v[0].sum_axis(1)?, 11), std::slice::from_ref(&a));
    check("transpose", |v| project(&v[0].transpose()?, 12), std::slice::from_ref(&a));
    check("reshape", |v| project(&v[0].reshape(&[2, 6])?, 13), std::slice::from_ref(&a));
    check("softmax", |v| project(&v[0].softmax()?, 14), std::slice::from_ref(&a));
    check("log_softmax", |v| project(&v[0].log_softmax()?, 15), std::slice::from_ref(&a));
    check("concat", |v| project(&Tensor::concat(&[v[0].clone(), v[1].clone()], 1)?, 16), &[a.clone(), b.clone()]);
    check("slice", |v| project(&v[0].slice(1, 1, 3)?, 17), std::slice::from_ref(&a));
    check("gather", |v| project(&v[0].gather_rows(&[2, 0, 2])?, 18), std::slice::from_ref(&a));
    // clamp and relu: keep inputs away from the kinks
    let away = t(&[-0.9, -0.4, 0.3, 0.8, 1.6, -1.2], &[6]);
    check("relu", |v| project(&v[0].relu(), 19), std::slice::from_ref(&away));
    check("clamp", |v| project(&v[0].clamp(-0.5, 1.0), 20), &[away]);
}

#[test]
fn grad_check_matmul_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = rand_t(&mut rng, &[3, 4], -1.0, 1.0);
    let b = rand_t(&mut rng, &[4, 2], -1.0, 1.0);
    check("matmul2", |v| project(&v[0].matmul(&v[1])?, 1), &[a, b.clone()]);
    let a3 = rand_t(&mut rng, &[2, 3, 4], -1.0, 1.0);
    let b3 = rand_t(&mut rng, &[2, 4, 5], -1.0, 1.0);
    check("matmul3", |v| project(&v[0].matmul(&v[1])?, 2), &[a3.clone(), b3]);
    check("matmul32", |v| project(&v[0].matmul(&v[1])?, 3), &[a3, b]);
}

#[test]
fn grad_check_conv_and_pool() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = rand_t(&mut rng, &[2, 2, 6, 6], -1.0, 1.0);
    let w = rand_t(&mut rng, &[3, 2, 3, 3], -0.5, 0.5);
    let bias = rand_t(&mut rng, &[3], -0.5, 0.5);
    check("conv2d", |v| project(&v[0].conv2d(&v[1], &v[2], 1, 1)?, 1), &[x.clone(), w.clone(), bias.clone()]);
    check("conv2d_s2", |v| project(&v[0].conv2d(&v[1], &v[2], 2, 1)?, 2), &[x.clone(), w, bias]);
    check("avg_pool", |v| project(&v[0].avg_pool2d(2)?, 3), &[x]);
    // distinct values so the arg-max is stable under perturbation
    let vals: Vec<f64> = (0..32).map(|i| ((i * 37) % 32) as f64 * 0.1).collect();
    let xp = t(&vals, &[1, 2, 4, 4]);
    check("max_pool", |v| project(&v[0].max_pool2d(2)?, 4), &[xp]);
}

#[test]
fn grad_check_entmax() {
    // scores with a stable support (no coordinate sits at the threshold)
    let s = t(&[0.3, -0.2, 1.1, -2.5, 0.9, 0.0, 0.4, -0.1], &[2, 4]);
    check("entmax15", |v| project(&v[0].entmax15()?, 1), &[s]);
}

#[test]
fn entmax_reference_points() {
    let y = t(&[0.0, 0.0], &[2]).entmax15().unwrap().to_vec();
    assert!((y[0] - 0.5).abs() < 1e-15 && (y[1] - 0.5).abs() < 1e-15);
    assert_eq!(t(&[4.0, 0.0], &[2]).entmax15().unwrap().to_vec(), vec![1.0, 0.0]);
    let y = t(&[1.0, 0.0], &[2]).entmax15().unwrap().to_vec();
    assert!((y[0] - 0.8307).abs() < 1e-3 && (y[1] - 0.1693).abs() < 1e-3, "{y:?}");
}

#[test]
fn repeated_backward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_t(&mut rng, &[2, 1, 8, 8], 0.0, 1.0);
    let w = Tensor::param(rand_t(&mut rng, &[4, 1, 3, 3], -0.5, 0.5).to_vec(), &[4, 1, 3, 3]).unwrap();
    let b = Tensor::param(vec![0.1; 4], &[4]).unwrap();
    let loss = x.conv2d(&w, &b, 1, 1).unwrap().relu().max_pool2d(2).unwrap().sigmoid().sum();
    loss.backward().unwrap();
    let g1 = w.grad().unwrap();
    w.zero_grad();
    b.zero_grad();
    loss.backward().unwrap();
    assert_eq!(w.grad().unwrap(), g1);
}
