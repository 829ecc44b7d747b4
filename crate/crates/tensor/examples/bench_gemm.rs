use d2it_tensor::{gemm, rng::RngStream};
use std::time::Instant;

fn main() {
    let mut rng = RngStream::new(1, 0);
    for &(m, k, n) in &[(8192usize, 128usize, 512usize), (8192, 512, 128), (2048, 768, 768), (4096, 144, 64), (131072, 27, 16)] {
        let a = rng.normal_vec(m * k);
        let b = rng.normal_vec(k * n);
        let mut c = vec![0f32; m * n];
        // warmup
        gemm::sgemm(m, k, n, &a, &b, &mut c);
        let reps = (2e10 / (m as f64 * k as f64 * n as f64)).max(3.0) as usize;
        let t0 = Instant::now();
        for _ in 0..reps {
            gemm::sgemm(m, k, n, &a, &b, &mut c);
        }
        let dt = t0.elapsed().as_secs_f64();
        let gmacs = (m as f64 * k as f64 * n as f64 * reps as f64) / dt / 1e9;
        println!("{}x{}x{}: {:.1} GMAC/s ({} reps, {:.2}s)", m, k, n, gmacs, reps, dt);
    }
}
