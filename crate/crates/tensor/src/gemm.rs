//! Row-major f32 GEMM used by every matrix product in the crate.
//!
//! Work is split over fixed-size row blocks (independent of thread count) and
//! each block is computed by a single `matrixmultiply` call, so results are
//! bit-identical no matter how many threads rayon runs.

use rayon::prelude::*;

use crate::macs;

/// Rows per parallel block. Fixed so the decomposition (and therefore the
/// floating-point result) does not depend on the machine.
const ROW_BLOCK: usize = 128;
/// Below this many MACs the rayon dispatch costs more than it saves.
const PAR_THRESHOLD: u128 = 1 << 20;

/// c[m,n] += a[m,k] * b[k,n] with arbitrary strides on a and b.
///
/// `c` must be contiguous row-major. When `accumulate` is false, c is
/// overwritten.
#[allow(clippy::too_many_arguments)]
pub fn sgemm_strided(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: isize,
    csa: isize,
    b: &[f32],
    rsb: isize,
    csb: isize,
    c: &mut [f32],
    accumulate: bool,
) {
    debug_assert!(c.len() >= m * n);
    macs::record(m as u128 * k as u128 * n as u128);
    let beta = if accumulate { 1.0 } else { 0.0 };
    let macs_total = m as u128 * k as u128 * n as u128;
    if macs_total < PAR_THRESHOLD || m <= ROW_BLOCK {
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        return;
    }
    let a_ptr = PtrWrap(a.as_ptr());
    let b_ptr = PtrWrap(b.as_ptr());
    c.par_chunks_mut(ROW_BLOCK * n)
        .enumerate()
        .for_each(move |(blk, c_chunk)| {
            let a_raw = a_ptr.get();
            let b_raw = b_ptr.get();
            let row0 = blk * ROW_BLOCK;
            let rows = c_chunk.len() / n;
            unsafe {
                matrixmultiply::sgemm(
                    rows,
                    k,
                    n,
                    1.0,
                    a_raw.offset(row0 as isize * rsa),
                    rsa,
                    csa,
                    b_raw,
                    rsb,
                    csb,
                    beta,
                    c_chunk.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        });
}

/// Contiguous row-major c = a * b.
pub fn sgemm(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    sgemm_strided(m, k, n, a, k as isize, 1, b, n as isize, 1, c, false);
}

#[derive(Clone, Copy)]
struct PtrWrap(*const f32);
unsafe impl Send for PtrWrap {}
unsafe impl Sync for PtrWrap {}

impl PtrWrap {
    fn get(self) -> *const f32 {
        self.0
    }
}
