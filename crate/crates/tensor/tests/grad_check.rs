//! Finite-difference oracle over every differentiable op, on randomized
//! small shapes. Reproducible from the seed printed in failure messages.

use d2it_tensor::gradcheck::{check, GradCheckReport};
use d2it_tensor::{Result, RngStream, Tensor};

const SEED: u64 = 20260810;
const H: f32 = 1e-3;
const TOL: f32 = 1e-3;

fn rand_input(rng: &mut RngStream, shape: &[usize]) -> (Vec<usize>, Vec<f32>) {
    let n: usize = shape.iter().product();
    (shape.to_vec(), rng.normal_vec(n))
}

fn assert_pass(name: &str, report: GradCheckReport) {
    assert!(
        report.max_rel_err < TOL,
        "{name}: seed {SEED}, max rel err {} at {:?} over {} elements",
        report.max_rel_err,
        report.worst,
        report.checked
    );
}

#[test]
fn elementwise_and_broadcast_ops() {
    let mut rng = RngStream::new(SEED, 1);
    for _ in 0..8 {
        let rows = 2 + rng.below(3);
        let cols = 2 + rng.below(4);
        let a = rand_input(&mut rng, &[rows, cols]);
        let b = rand_input(&mut rng, &[rows, cols]);
        let bias = rand_input(&mut rng, &[cols]);
        assert_pass(
            "add",
            check(|xs| xs[0].add(&xs[1]), &[a.clone(), b.clone()], H).unwrap(),
        );
        assert_pass(
            "sub",
            check(|xs| xs[0].sub(&xs[1]), &[a.clone(), b.clone()], H).unwrap(),
        );
        assert_pass(
            "mul",
            check(|xs| xs[0].mul(&xs[1]), &[a.clone(), b.clone()], H).unwrap(),
        );
        assert_pass(
            "add_broadcast",
            check(|xs| xs[0].add(&xs[1]), &[a.clone(), bias.clone()], H).unwrap(),
        );
        assert_pass(
            "mul_broadcast",
            check(|xs| xs[0].mul(&xs[1]), &[a, bias], H).unwrap(),
        );
    }
}

#[test]
fn unary_ops() {
    let mut rng = RngStream::new(SEED, 2);
    for _ in 0..6 {
        let n = 3 + rng.below(6);
        let x = rand_input(&mut rng, &[n]);
        for (name, f) in [
            ("neg", (|t: &Tensor| Ok(t.neg())) as fn(&Tensor) -> Result<Tensor>),
            ("scale", |t| Ok(t.scale(1.7))),
            ("exp", |t| Ok(t.exp())),
            ("square", |t| Ok(t.square())),
            ("silu", |t| Ok(t.silu())),
            ("gelu", |t| Ok(t.gelu())),
        ] {
            assert_pass(name, check(|xs| f(&xs[0]), &[x.clone()], H).unwrap());
        }
    }
}

#[test]
fn matmul_shapes() {
    let mut rng = RngStream::new(SEED, 3);
    for _ in 0..6 {
        let (m, k, n) = (1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(4));
        let a = rand_input(&mut rng, &[m, k]);
        let b = rand_input(&mut rng, &[k, n]);
        assert_pass(
            "matmul2d",
            check(|xs| xs[0].matmul(&xs[1]), &[a.clone(), b.clone()], H).unwrap(),
        );
        let batch = 1 + rng.below(3);
        let a3 = rand_input(&mut rng, &[batch, m, k]);
        let b3 = rand_input(&mut rng, &[batch, k, n]);
        assert_pass(
            "matmul_batched",
            check(|xs| xs[0].matmul(&xs[1]), &[a3.clone(), b3], H).unwrap(),
        );
        assert_pass(
            "matmul_weight_broadcast",
            check(|xs| xs[0].matmul(&xs[1]), &[a3, b], H).unwrap(),
        );
    }
}

#[test]
fn softmax_and_layer_norm() {
    let mut rng = RngStream::new(SEED, 4);
    for _ in 0..6 {
        let rows = 1 + rng.below(3);
        let cols = 3 + rng.below(5);
        let x = rand_input(&mut rng, &[rows, cols]);
        assert_pass(
            "softmax_axis1",
            check(|xs| xs[0].softmax(1), &[x.clone()], H).unwrap(),
        );
        assert_pass(
            "softmax_axis0",
            check(|xs| xs[0].softmax(0), &[x.clone()], H).unwrap(),
        );
        assert_pass(
            "layer_norm",
            check(|xs| xs[0].layer_norm(1e-6), &[x], H).unwrap(),
        );
    }
}

/// Softmax Jacobian against central differences, element by element.
#[test]
fn softmax_jacobian_matches_central_differences() {
    let mut rng = RngStream::new(SEED, 5);
    let x: Vec<f32> = rng.normal_vec(5);
    for out_idx in 0..5 {
        let ad = {
            let p = Tensor::param(&[5], x.clone()).unwrap();
            let y = p.softmax(0).unwrap();
            let pick: Vec<f32> = (0..5).map(|j| (j == out_idx) as u32 as f32).collect();
            let sel = y.mul(&Tensor::from_vec(&[5], pick).unwrap()).unwrap().sum();
            sel.backward().unwrap();
            p.grad().unwrap()
        };
        for (j, &g) in ad.iter().enumerate() {
            let mut plus = x.clone();
            plus[j] += H;
            let mut minus = x.clone();
            minus[j] -= H;
            let yp = Tensor::from_vec(&[5], plus).unwrap().softmax(0).unwrap();
            let ym = Tensor::from_vec(&[5], minus).unwrap().softmax(0).unwrap();
            let fd = (yp.data()[out_idx] - ym.data()[out_idx]) / (2.0 * H);
            assert!(
                d2it_tensor::gradcheck::rel_err(g, fd) < TOL,
                "jacobian[{out_idx},{j}]: ad {g} fd {fd}"
            );
        }
    }
}

#[test]
fn shape_movement_ops() {
    let mut rng = RngStream::new(SEED, 6);
    for _ in 0..5 {
        let x = rand_input(&mut rng, &[2, 3, 4]);
        assert_pass(
            "reshape",
            check(|xs| xs[0].reshape(&[6, 4]), &[x.clone()], H).unwrap(),
        );
        assert_pass(
            "permute",
            check(|xs| xs[0].permute(&[2, 0, 1]), &[x.clone()], H).unwrap(),
        );
        assert_pass(
            "slice",
            check(|xs| xs[0].slice(1, 1, 2), &[x.clone()], H).unwrap(),
        );
        let y = rand_input(&mut rng, &[2, 2, 4]);
        assert_pass(
            "concat",
            check(
                |xs| Tensor::concat(&[xs[0].clone(), xs[1].clone()], 1),
                &[x.clone(), y],
                H,
            )
            .unwrap(),
        );
        assert_pass(
            "gather_scatter",
            check(
                |xs| {
                    xs[0]
                        .reshape(&[6, 4])?
                        .gather_rows(&[5, 0, 3])?
                        .scatter_rows(&[2, 4, 0], 6)
                },
                &[x],
                H,
            )
            .unwrap(),
        );
    }
}

#[test]
fn reductions_and_masks() {
    let mut rng = RngStream::new(SEED, 7);
    for _ in 0..5 {
        let x = rand_input(&mut rng, &[3, 4]);
        assert_pass("sum", check(|xs| Ok(xs[0].sum()), &[x.clone()], H).unwrap());
        assert_pass("mean", check(|xs| Ok(xs[0].mean()), &[x.clone()], H).unwrap());
        assert_pass(
            "sum_axis",
            check(|xs| xs[0].sum_axis(0), &[x.clone()], H).unwrap(),
        );
        assert_pass(
            "mean_axis",
            check(|xs| xs[0].mean_axis(1), &[x.clone()], H).unwrap(),
        );
        let y = rand_input(&mut rng, &[3, 4]);
        let mask: Vec<f32> = (0..12).map(|i| (i % 3 == 0) as u32 as f32).collect();
        assert_pass(
            "where_mask",
            check(
                |xs| {
                    let m = Tensor::from_vec(&[3, 4], mask.clone())?;
                    Tensor::where_mask(&m, &xs[0], &xs[1])
                },
                &[x, y],
                H,
            )
            .unwrap(),
        );
    }
}

#[test]
fn structured_ops() {
    let mut rng = RngStream::new(SEED, 8);
    for _ in 0..4 {
        let x = rand_input(&mut rng, &[1, 2, 4, 4]);
        assert_pass(
            "upsample_nearest",
            check(|xs| xs[0].upsample_nearest(2), &[x.clone()], H).unwrap(),
        );
        assert_pass(
            "im2col",
            check(|xs| xs[0].im2col(3, 3, 1, 1), &[x.clone()], H).unwrap(),
        );
        assert_pass(
            "im2col_stride2",
            check(|xs| xs[0].im2col(3, 3, 2, 1), &[x], H).unwrap(),
        );
        let logits = rand_input(&mut rng, &[3, 5]);
        assert_pass(
            "cross_entropy",
            check(|xs| xs[0].cross_entropy_rows(&[4, 0, 2]), &[logits], H).unwrap(),
        );
    }
}
