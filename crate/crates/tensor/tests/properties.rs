use proptest::prelude::*;

use d2it_tensor::serial::{read_gft1, write_gft1};
use d2it_tensor::Tensor;

proptest! {
    /// scatter(gather(x, idx), idx) = x whenever idx is a permutation.
    #[test]
    fn scatter_gather_permutation_roundtrip(
        rows in 1usize..12,
        cols in 1usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = d2it_tensor::RngStream::new(seed, 0);
        let data = rng.normal_vec(rows * cols);
        let x = Tensor::from_vec(&[rows, cols], data.clone()).unwrap();
        // Fisher-Yates permutation from the same stream.
        let mut idx: Vec<usize> = (0..rows).collect();
        for i in (1..rows).rev() {
            idx.swap(i, rng.below(i + 1));
        }
        let y = x.gather_rows(&idx).unwrap().scatter_rows(&idx, rows).unwrap();
        prop_assert_eq!(y.data(), x.data());
    }

    /// GFT1 round-trips arbitrary payloads bit-exactly.
    #[test]
    fn gft1_roundtrip(data in proptest::collection::vec(-1e6f32..1e6, 0..64)) {
        let shape = vec![data.len()];
        let mut buf = Vec::new();
        write_gft1(&mut buf, &shape, &data).unwrap();
        let (s, d) = read_gft1(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(s, shape);
        prop_assert_eq!(d, data);
    }
}
