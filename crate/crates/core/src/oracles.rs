//! Reference implementations used by the verification suites.
//!
//! These are deliberately naive transcriptions, independent of the production
//! code paths they check.

use d2it_tensor::Tensor;

/// Per-tile KDE + entropy, written as plain double loops over the defining
/// formulas. Pixel range [0,1], bins are the S^2 uniform centers on [0,1]
/// inclusive, natural log.
pub fn naive_entropy_map(gray: &Tensor, region_size: usize, sigma: f64) -> Vec<f64> {
    let (h, w) = (gray.shape()[0], gray.shape()[1]);
    let s = region_size;
    let p = s * s;
    let src = gray.data();
    let mut out = Vec::new();
    for region_row in 0..h / s {
        for region_col in 0..w / s {
            // p_hat(b_j) = (1/S^2) * sum_i exp(-0.5 * ((x_i - b_j)/sigma)^2)
            let mut entropy = 0.0f64;
            for j in 0..p {
                let b_j = j as f64 / (p - 1) as f64;
                let mut p_hat = 0.0f64;
                for y in 0..s {
                    for x in 0..s {
                        let pixel =
                            src[(region_row * s + y) * w + (region_col * s + x)] as f64;
                        p_hat += (-0.5 * ((pixel - b_j) / sigma) * ((pixel - b_j) / sigma)).exp();
                    }
                }
                p_hat /= p as f64;
                // E = -sum_j p_hat ln p_hat, 0 ln 0 = 0
                if p_hat > 0.0 {
                    entropy -= p_hat * p_hat.ln();
                }
            }
            out.push(entropy);
        }
    }
    out
}

/// MAC count of one window-attention score pass (Q K^T), by definition:
/// for every window, every query attends to every key over all channels.
pub fn naive_wmsa_score_macs(h: usize, w: usize, c: usize, m_w: usize) -> u128 {
    let windows = (h / m_w) * (w / m_w);
    let tokens_per_window = m_w * m_w;
    (windows * tokens_per_window * tokens_per_window * c) as u128
}
