use crate::error::TensorError;
use crate::rng::RngStream;
use crate::tensor::Tensor;

fn t(shape: &[usize], data: &[f32]) -> Tensor {
    Tensor::from_vec(shape, data.to_vec()).unwrap()
}

fn p(shape: &[usize], data: &[f32]) -> Tensor {
    Tensor::param(shape, data.to_vec()).unwrap()
}

#[test]
fn add_componentwise() {
    let y = t(&[2], &[1.0, 2.0]).add(&t(&[2], &[3.0, 4.0])).unwrap();
    assert_eq!(y.data(), &[4.0, 6.0]);
}

#[test]
fn mul_by_ones_is_identity() {
    let x = t(&[2, 3], &[0.5, -1.0, 2.0, 3.0, -0.25, 0.0]);
    let y = x.mul(&Tensor::ones(&[2, 3])).unwrap();
    assert_eq!(y.data(), x.data());
}

#[test]
fn add_shape_mismatch_names_both_shapes() {
    let err = t(&[2, 3], &[0.0; 6]).add(&t(&[4], &[0.0; 4])).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[4]"), "{msg}");
}

#[test]
fn bias_broadcast_add_and_grad() {
    let x = p(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let b = p(&[3], &[10.0, 20.0, 30.0]);
    let y = x.add(&b).unwrap();
    assert_eq!(y.data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
    y.sum().backward().unwrap();
    assert_eq!(b.grad().unwrap(), vec![2.0, 2.0, 2.0]);
    assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
}

#[test]
fn matmul_identity() {
    let m = t(&[2, 2], &[3.0, -1.0, 7.5, 2.0]);
    let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
    let y = eye.matmul(&m).unwrap();
    assert_eq!(y.data(), m.data());
}

#[test]
fn matmul_hand_value() {
    let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
    let b = t(&[2, 1], &[5.0, 6.0]);
    let y = a.matmul(&b).unwrap();
    assert_eq!(y.shape(), &[2, 1]);
    assert_eq!(y.data(), &[17.0, 39.0]);
}

#[test]
fn matmul_grad_of_sum_is_ones_bt() {
    let a = p(&[2, 3], &[0.1; 6]);
    let b = t(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    a.matmul(&b).unwrap().sum().backward().unwrap();
    // d sum(AB)/dA = ones(2,2) . B^T; B^T rows sum -> each row of grad = [3, 7, 11]
    assert_eq!(a.grad().unwrap(), vec![3.0, 7.0, 11.0, 3.0, 7.0, 11.0]);
}

#[test]
fn matmul_inner_dim_error() {
    let a = t(&[2, 3], &[0.0; 6]);
    let b = t(&[4, 2], &[0.0; 8]);
    assert!(matches!(
        a.matmul(&b).unwrap_err(),
        TensorError::InnerDim { .. }
    ));
}

#[test]
fn matmul_batched_matches_per_slice() {
    let mut rng = RngStream::new(3, 0);
    let a = Tensor::randn(&[4, 3, 5], &mut rng);
    let b = Tensor::randn(&[4, 5, 2], &mut rng);
    let y = a.matmul(&b).unwrap();
    assert_eq!(y.shape(), &[4, 3, 2]);
    for i in 0..4 {
        let ai = a.slice(0, i, 1).unwrap().reshape(&[3, 5]).unwrap();
        let bi = b.slice(0, i, 1).unwrap().reshape(&[5, 2]).unwrap();
        let yi = ai.matmul(&bi).unwrap();
        assert_eq!(&y.data()[i * 6..(i + 1) * 6], yi.data());
    }
}

#[test]
fn softmax_uniform_on_equal_logits() {
    let y = t(&[3], &[0.0, 0.0, 0.0]).softmax(0).unwrap();
    for &v in y.data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-7);
    }
}

#[test]
fn softmax_is_stable_for_huge_logits() {
    let y = t(&[2], &[1000.0, 0.0]).softmax(0).unwrap();
    assert!(y.is_finite());
    assert!((y.data()[0] - 1.0).abs() < 1e-6);
    assert!(y.data()[1].abs() < 1e-6);
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut rng = RngStream::new(5, 0);
    let x = Tensor::randn(&[4, 7], &mut rng);
    let y = x.softmax(1).unwrap();
    for r in 0..4 {
        let s: f32 = y.data()[r * 7..(r + 1) * 7].iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert!(y.data()[r * 7..(r + 1) * 7].iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn softmax_rejects_non_finite() {
    let x = t(&[2], &[f32::NAN, 0.0]);
    assert!(matches!(
        x.softmax(0).unwrap_err(),
        TensorError::NonFinite { .. }
    ));
}

#[test]
fn backward_sum_of_squares() {
    let x = p(&[2], &[1.0, 2.0]);
    x.square().sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![2.0, 4.0]);
}

#[test]
fn backward_sum_is_ones() {
    let mut rng = RngStream::new(9, 0);
    let x = Tensor::randn(&[3, 4], &mut rng);
    let xp = Tensor::param(&[3, 4], x.to_vec()).unwrap();
    xp.sum().backward().unwrap();
    assert_eq!(xp.grad().unwrap(), vec![1.0; 12]);
}

#[test]
fn gather_then_scatter_restores_permutation() {
    let x = t(&[4, 2], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    let perm = [2usize, 0, 3, 1];
    let gathered = x.gather_rows(&perm).unwrap();
    let restored = gathered.scatter_rows(&perm, 4).unwrap();
    assert_eq!(restored.data(), x.data());
}

#[test]
fn slice_concat_roundtrip() {
    let mut rng = RngStream::new(12, 0);
    let x = Tensor::randn(&[3, 5], &mut rng);
    let a = x.slice(1, 0, 2).unwrap();
    let b = x.slice(1, 2, 3).unwrap();
    let y = Tensor::concat(&[a, b], 1).unwrap();
    assert_eq!(y.data(), x.data());
}

#[test]
fn permute_roundtrip_exact() {
    let mut rng = RngStream::new(13, 0);
    let x = Tensor::randn(&[2, 3, 4], &mut rng);
    let y = x
        .permute(&[2, 0, 1])
        .unwrap()
        .permute(&[1, 2, 0])
        .unwrap();
    assert_eq!(y.shape(), x.shape());
    assert_eq!(y.data(), x.data());
}

#[test]
fn layer_norm_zero_mean_unit_var() {
    let mut rng = RngStream::new(14, 0);
    let x = Tensor::randn(&[3, 16], &mut rng).scale(4.0).add_scalar(2.0);
    let y = x.layer_norm(1e-6).unwrap();
    for r in 0..3 {
        let row = &y.data()[r * 16..(r + 1) * 16];
        let mu: f32 = row.iter().sum::<f32>() / 16.0;
        let var: f32 = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f32>() / 16.0;
        assert!(mu.abs() < 1e-5, "mean {mu}");
        assert!((var - 1.0).abs() < 1e-3, "var {var}");
    }
}

#[test]
fn where_mask_selects_exactly() {
    let m = t(&[4], &[1.0, 0.0, 1.0, 0.0]);
    let a = t(&[4], &[10.0, 11.0, 12.0, 13.0]);
    let b = t(&[4], &[20.0, 21.0, 22.0, 23.0]);
    let y = Tensor::where_mask(&m, &a, &b).unwrap();
    assert_eq!(y.data(), &[10.0, 21.0, 12.0, 23.0]);
}

#[test]
fn upsample_nearest_replicates_blocks() {
    let x = t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
    let y = x.upsample_nearest(2).unwrap();
    assert_eq!(y.shape(), &[1, 1, 4, 4]);
    assert_eq!(
        y.data(),
        &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
    );
}

#[test]
fn im2col_matches_naive_conv() {
    // 1x1x3x3 input, 2x2 kernel, stride 1, no padding
    let x = t(&[1, 1, 3, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
    let cols = x.im2col(2, 2, 1, 0).unwrap();
    assert_eq!(cols.shape(), &[4, 4]);
    assert_eq!(
        cols.data(),
        &[1.0, 2.0, 4.0, 5.0, 2.0, 3.0, 5.0, 6.0, 4.0, 5.0, 7.0, 8.0, 5.0, 6.0, 8.0, 9.0]
    );
}

#[test]
fn cross_entropy_uniform_logits_is_ln_k() {
    let logits = t(&[2, 4], &[0.0; 8]);
    let l = logits.cross_entropy_rows(&[1, 3]).unwrap();
    assert!((l.item() - (4f32).ln()).abs() < 1e-6);
}

#[test]
fn detach_blocks_gradient() {
    let x = p(&[2], &[1.0, 2.0]);
    let y = x.scale(3.0).detach().sum();
    assert!(!y.requires_grad());
}
