//! Tensor operations and their adjoints.

use crate::error::{Result, TensorError};
use crate::gemm;
use crate::shape::{broadcast_index, broadcast_shapes, numel, reduce_broadcast, strides};
use crate::tensor::Tensor;

/// (outer, len, inner) decomposition used by axis-wise ops.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(TensorError::InvalidAxis {
            op,
            axis,
            rank: shape.len(),
        });
    }
    Ok(())
}

impl Tensor {
    // ---- broadcasting elementwise binary ops ---------------------------

    fn binary(
        &self,
        rhs: &Tensor,
        op: &'static str,
        f: impl Fn(f32, f32) -> f32,
        // (grad, a_val, b_val) -> (da, db)
        df: impl Fn(f32, f32, f32) -> (f32, f32) + 'static,
    ) -> Result<Tensor> {
        let out_shape = broadcast_shapes(op, self.shape(), rhs.shape())?;
        let n = numel(&out_shape);
        let a = self.data();
        let b = rhs.data();
        let same = self.shape() == rhs.shape();
        let mut data = Vec::with_capacity(n);
        if same {
            data.extend(a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)));
        } else {
            for i in 0..n {
                let ai = broadcast_index(i, &out_shape, self.shape());
                let bi = broadcast_index(i, &out_shape, rhs.shape());
                data.push(f(a[ai], b[bi]));
            }
        }
        let a_t = self.clone();
        let b_t = rhs.clone();
        let a_shape = self.shape().to_vec();
        let b_shape = rhs.shape().to_vec();
        let out_shape_c = out_shape.clone();
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| {
                let av = a_t.data();
                let bv = b_t.data();
                let mut da = vec![0f32; numel(&out_shape_c)];
                let mut db = vec![0f32; numel(&out_shape_c)];
                if a_shape == b_shape {
                    for i in 0..g.len() {
                        let (x, y) = df(g[i], av[i], bv[i]);
                        da[i] = x;
                        db[i] = y;
                    }
                } else {
                    for i in 0..g.len() {
                        let ai = broadcast_index(i, &out_shape_c, &a_shape);
                        let bi = broadcast_index(i, &out_shape_c, &b_shape);
                        let (x, y) = df(g[i], av[ai], bv[bi]);
                        da[i] = x;
                        db[i] = y;
                    }
                }
                vec![
                    Some(reduce_broadcast(&da, &out_shape_c, &a_shape)),
                    Some(reduce_broadcast(&db, &out_shape_c, &b_shape)),
                ]
            }),
        ))
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, "add", |a, b| a + b, |g, _, _| (g, g))
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, "sub", |a, b| a - b, |g, _, _| (g, -g))
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, "mul", |a, b| a * b, |g, a, b| (g * b, g * a))
    }

    // ---- elementwise unary ops -----------------------------------------

    fn unary(
        &self,
        f: impl Fn(f32) -> f32,
        // (grad, x, y) -> dx
        df: impl Fn(f32, f32, f32) -> f32 + 'static,
    ) -> Tensor {
        let data: Vec<f32> = self.data().iter().map(|&x| f(x)).collect();
        let x_t = self.clone();
        let y_data = data.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let xs = x_t.data();
                let dx = g
                    .iter()
                    .zip(xs.iter().zip(y_data.iter()))
                    .map(|(&g, (&x, &y))| df(g, x, y))
                    .collect();
                vec![Some(dx)]
            }),
        )
    }

    pub fn neg(&self) -> Tensor {
        self.unary(|x| -x, |g, _, _| -g)
    }

    pub fn scale(&self, c: f32) -> Tensor {
        self.unary(move |x| x * c, move |g, _, _| g * c)
    }

    pub fn add_scalar(&self, c: f32) -> Tensor {
        self.unary(move |x| x + c, |g, _, _| g)
    }

    pub fn exp(&self) -> Tensor {
        self.unary(|x| x.exp(), |g, _, y| g * y)
    }

    pub fn square(&self) -> Tensor {
        self.unary(|x| x * x, |g, x, _| 2.0 * g * x)
    }

    pub fn silu(&self) -> Tensor {
        self.unary(
            |x| x * sigmoid(x),
            |g, x, _| {
                let s = sigmoid(x);
                g * (s + x * s * (1.0 - s))
            },
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Tensor {
        const C: f32 = 0.797_884_56; // sqrt(2/pi)
        const A: f32 = 0.044_715;
        self.unary(
            |x| 0.5 * x * (1.0 + (C * (x + A * x * x * x)).tanh()),
            |g, x, _| {
                let u = C * (x + A * x * x * x);
                let t = u.tanh();
                let du = C * (1.0 + 3.0 * A * x * x);
                g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
            },
        )
    }

    // ---- matmul ---------------------------------------------------------

    /// Matrix product with optional leading batch dimensions.
    ///
    /// Supported: (m,p)x(p,n); equal leading batch dims on both sides; and a
    /// batched lhs against an unbatched rhs (weight broadcast).
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let a_shape = self.shape();
        let b_shape = rhs.shape();
        if a_shape.len() < 2 || b_shape.len() < 2 {
            return Err(TensorError::InnerDim {
                lhs: a_shape.to_vec(),
                rhs: b_shape.to_vec(),
            });
        }
        let (m, p) = (a_shape[a_shape.len() - 2], a_shape[a_shape.len() - 1]);
        let (p2, n) = (b_shape[b_shape.len() - 2], b_shape[b_shape.len() - 1]);
        let a_batch: usize = a_shape[..a_shape.len() - 2].iter().product();
        let b_batch: usize = b_shape[..b_shape.len() - 2].iter().product();
        let b_broadcast = b_shape.len() == 2 && a_shape.len() > 2;
        if p != p2 || (!b_broadcast && a_batch != b_batch) {
            return Err(TensorError::InnerDim {
                lhs: a_shape.to_vec(),
                rhs: b_shape.to_vec(),
            });
        }

        let batch = a_batch;
        let mut data = vec![0f32; batch * m * n];
        {
            let a = self.data();
            let b = rhs.data();
            for i in 0..batch {
                let b_off = if b_broadcast { 0 } else { i * p * n };
                gemm::sgemm(
                    m,
                    p,
                    n,
                    &a[i * m * p..(i + 1) * m * p],
                    &b[b_off..b_off + p * n],
                    &mut data[i * m * n..(i + 1) * m * n],
                );
            }
        }
        let mut out_shape = a_shape[..a_shape.len() - 2].to_vec();
        out_shape.push(m);
        out_shape.push(n);

        let a_t = self.clone();
        let b_t = rhs.clone();
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| {
                let a = a_t.data();
                let b = b_t.data();
                // dA[i] = g[i] . B[i]^T
                let mut da = vec![0f32; batch * m * p];
                for i in 0..batch {
                    let b_off = if b_broadcast { 0 } else { i * p * n };
                    gemm::sgemm_strided(
                        m,
                        n,
                        p,
                        &g[i * m * n..(i + 1) * m * n],
                        n as isize,
                        1,
                        &b[b_off..b_off + p * n],
                        1,
                        n as isize, // B^T via strides
                        &mut da[i * m * p..(i + 1) * m * p],
                        false,
                    );
                }
                // dB[i] = A[i]^T . g[i]; accumulate over batch if broadcast
                let db_len = if b_broadcast { p * n } else { batch * p * n };
                let mut db = vec![0f32; db_len];
                for i in 0..batch {
                    let db_off = if b_broadcast { 0 } else { i * p * n };
                    gemm::sgemm_strided(
                        p,
                        m,
                        n,
                        &a[i * m * p..(i + 1) * m * p],
                        1,
                        p as isize, // A^T via strides
                        &g[i * m * n..(i + 1) * m * n],
                        n as isize,
                        1,
                        &mut db[db_off..db_off + p * n],
                        b_broadcast, // accumulate when broadcasting
                    );
                }
                vec![Some(da), Some(db)]
            }),
        ))
    }

    // ---- shape ops --------------------------------------------------------

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(TensorError::ElementCount {
                op: "reshape",
                expected: self.numel(),
                got: numel(shape),
            });
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.to_vec())]),
        ))
    }

    /// Reorder axes; materializes the permuted layout.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor> {
        let rank = self.shape().len();
        if axes.len() != rank || {
            let mut seen = vec![false; rank];
            axes.iter().any(|&a| {
                if a >= rank || seen[a] {
                    true
                } else {
                    seen[a] = true;
                    false
                }
            })
        } {
            return Err(TensorError::Invalid {
                op: "permute",
                msg: format!("axes {:?} invalid for rank {}", axes, rank),
            });
        }
        let in_shape = self.shape().to_vec();
        let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
        let in_strides = strides(&in_shape);
        let out_strides = strides(&out_shape);
        let n = self.numel();
        let src = self.data();
        let mut data = vec![0f32; n];
        for (out_flat, slot) in data.iter_mut().enumerate() {
            let mut in_flat = 0;
            for (k, &ax) in axes.iter().enumerate() {
                let coord = (out_flat / out_strides[k]) % out_shape[k];
                in_flat += coord * in_strides[ax];
            }
            *slot = src[in_flat];
        }
        let axes_v = axes.to_vec();
        let out_shape_c = out_shape.clone();
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |g| {
                // Scatter grad back through the inverse permutation.
                let mut dg = vec![0f32; g.len()];
                let out_strides = strides(&out_shape_c);
                let in_strides = strides(&in_shape);
                for (out_flat, &gv) in g.iter().enumerate() {
                    let mut in_flat = 0;
                    for (k, &ax) in axes_v.iter().enumerate() {
                        let coord = (out_flat / out_strides[k]) % out_shape_c[k];
                        in_flat += coord * in_strides[ax];
                    }
                    dg[in_flat] = gv;
                }
                vec![Some(dg)]
            }),
        ))
    }

    /// Swap two axes.
    pub fn transpose(&self, a: usize, b: usize) -> Result<Tensor> {
        let mut axes: Vec<usize> = (0..self.shape().len()).collect();
        check_axis("transpose", self.shape(), a)?;
        check_axis("transpose", self.shape(), b)?;
        axes.swap(a, b);
        self.permute(&axes)
    }

    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        check_axis("slice", self.shape(), axis)?;
        let shape = self.shape().to_vec();
        if start + len > shape[axis] {
            return Err(TensorError::Invalid {
                op: "slice",
                msg: format!("range {}..{} exceeds dim {}", start, start + len, shape[axis]),
            });
        }
        let (outer, dim, inner) = axis_split(&shape, axis);
        let src = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let in_numel = self.numel();
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut dg = vec![0f32; in_numel];
                for o in 0..outer {
                    let src = o * len * inner;
                    let dst = o * dim * inner + start * inner;
                    dg[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
                }
                vec![Some(dg)]
            }),
        ))
    }

    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(TensorError::Invalid {
                op: "concat",
                msg: "no inputs".into(),
            });
        }
        let first = parts[0].shape().to_vec();
        check_axis("concat", &first, axis)?;
        for p in parts.iter().skip(1) {
            if p.shape().len() != first.len()
                || p.shape()
                    .iter()
                    .zip(first.iter())
                    .enumerate()
                    .any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: first.clone(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        let sizes: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = sizes.iter().sum();
        let (outer, _, inner) = axis_split(&first, axis);
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let mut data = vec![0f32; outer * total * inner];
        let mut offset = 0;
        for (p, &sz) in parts.iter().zip(sizes.iter()) {
            let src = p.data();
            for o in 0..outer {
                let dst = o * total * inner + offset * inner;
                data[dst..dst + sz * inner]
                    .copy_from_slice(&src[o * sz * inner..(o + 1) * sz * inner]);
            }
            offset += sz;
        }
        let sizes_c = sizes.clone();
        Ok(Tensor::from_op(
            out_shape,
            data,
            parts.to_vec(),
            Box::new(move |g| {
                let mut out: Vec<Option<Vec<f32>>> = Vec::with_capacity(sizes_c.len());
                let mut offset = 0;
                for &sz in &sizes_c {
                    let mut dg = vec![0f32; outer * sz * inner];
                    for o in 0..outer {
                        let src = o * total * inner + offset * inner;
                        dg[o * sz * inner..(o + 1) * sz * inner]
                            .copy_from_slice(&g[src..src + sz * inner]);
                    }
                    out.push(Some(dg));
                    offset += sz;
                }
                out
            }),
        ))
    }

    // ---- gather / scatter -------------------------------------------------

    /// Select rows of a 2-D tensor: out[i] = self[indices[i]].
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        if self.shape().len() != 2 {
            return Err(TensorError::Invalid {
                op: "gather_rows",
                msg: format!("expected rank 2, got {:?}", self.shape()),
            });
        }
        let (rows, d) = (self.shape()[0], self.shape()[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(TensorError::Invalid {
                op: "gather_rows",
                msg: format!("index {bad} out of range for {rows} rows"),
            });
        }
        let src = self.data();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let idx = indices.to_vec();
        Ok(Tensor::from_op(
            vec![indices.len(), d],
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut dg = vec![0f32; rows * d];
                for (pos, &i) in idx.iter().enumerate() {
                    for j in 0..d {
                        dg[i * d + j] += g[pos * d + j];
                    }
                }
                vec![Some(dg)]
            }),
        ))
    }

    /// Scatter-add rows of a 2-D tensor into a zeroed (out_rows, d) tensor:
    /// out[indices[i]] += self[i]. Inverse of `gather_rows` when `indices`
    /// is a permutation.
    pub fn scatter_rows(&self, indices: &[usize], out_rows: usize) -> Result<Tensor> {
        if self.shape().len() != 2 || self.shape()[0] != indices.len() {
            return Err(TensorError::Invalid {
                op: "scatter_rows",
                msg: format!(
                    "expected ({}, d) input, got {:?}",
                    indices.len(),
                    self.shape()
                ),
            });
        }
        let d = self.shape()[1];
        if let Some(&bad) = indices.iter().find(|&&i| i >= out_rows) {
            return Err(TensorError::Invalid {
                op: "scatter_rows",
                msg: format!("index {bad} out of range for {out_rows} rows"),
            });
        }
        let src = self.data();
        let mut data = vec![0f32; out_rows * d];
        for (pos, &i) in indices.iter().enumerate() {
            for j in 0..d {
                data[i * d + j] += src[pos * d + j];
            }
        }
        let idx = indices.to_vec();
        Ok(Tensor::from_op(
            vec![out_rows, d],
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut dg = vec![0f32; idx.len() * d];
                for (pos, &i) in idx.iter().enumerate() {
                    dg[pos * d..(pos + 1) * d].copy_from_slice(&g[i * d..(i + 1) * d]);
                }
                vec![Some(dg)]
            }),
        ))
    }

    // ---- reductions ---------------------------------------------------------

    pub fn sum(&self) -> Tensor {
        let total: f32 = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op(
            vec![],
            vec![total],
            vec![self.clone()],
            Box::new(move |g| vec![Some(vec![g[0]; n])]),
        )
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel();
        let total: f32 = self.data().iter().sum();
        Tensor::from_op(
            vec![],
            vec![total / n as f32],
            vec![self.clone()],
            Box::new(move |g| vec![Some(vec![g[0] / n as f32; n])]),
        )
    }

    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        check_axis("sum_axis", self.shape(), axis)?;
        let shape = self.shape().to_vec();
        let (outer, len, inner) = axis_split(&shape, axis);
        let src = self.data();
        let mut data = vec![0f32; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                for i in 0..inner {
                    data[o * inner + i] += src[o * len * inner + j * inner + i];
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut dg = vec![0f32; outer * len * inner];
                for o in 0..outer {
                    for j in 0..len {
                        for i in 0..inner {
                            dg[o * len * inner + j * inner + i] = g[o * inner + i];
                        }
                    }
                }
                vec![Some(dg)]
            }),
        ))
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        let len = *self.shape().get(axis).ok_or(TensorError::InvalidAxis {
            op: "mean_axis",
            axis,
            rank: self.shape().len(),
        })?;
        Ok(self.sum_axis(axis)?.scale(1.0 / len as f32))
    }

    // ---- nn primitives --------------------------------------------------------

    /// Numerically stable softmax along `axis`. Rejects non-finite inputs.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        check_axis("softmax", self.shape(), axis)?;
        if let Some(index) = self.data().iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite {
                op: "softmax",
                index,
            });
        }
        let shape = self.shape().to_vec();
        let (outer, len, inner) = axis_split(&shape, axis);
        let src = self.data();
        let mut data = vec![0f32; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let mut m = f32::NEG_INFINITY;
                for j in 0..len {
                    m = m.max(src[at(j)]);
                }
                let mut z = 0f32;
                for j in 0..len {
                    let e = (src[at(j)] - m).exp();
                    data[at(j)] = e;
                    z += e;
                }
                for j in 0..len {
                    data[at(j)] /= z;
                }
            }
        }
        let y = data.clone();
        Ok(Tensor::from_op(
            shape,
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut dg = vec![0f32; g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| o * len * inner + j * inner + i;
                        let mut dot = 0f32;
                        for j in 0..len {
                            dot += g[at(j)] * y[at(j)];
                        }
                        for j in 0..len {
                            dg[at(j)] = y[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
                vec![Some(dg)]
            }),
        ))
    }

    /// Layer norm over the last axis, no affine parameters.
    pub fn layer_norm(&self, eps: f32) -> Result<Tensor> {
        let rank = self.shape().len();
        if rank == 0 {
            return Err(TensorError::InvalidAxis {
                op: "layer_norm",
                axis: 0,
                rank,
            });
        }
        let d = self.shape()[rank - 1];
        let rows = self.numel() / d;
        let src = self.data();
        let mut data = vec![0f32; src.len()];
        let mut inv_stds = vec![0f32; rows];
        for r in 0..rows {
            let row = &src[r * d..(r + 1) * d];
            let mu = row.iter().sum::<f32>() / d as f32;
            let var = row.iter().map(|&x| (x - mu) * (x - mu)).sum::<f32>() / d as f32;
            let inv_std = 1.0 / (var + eps).sqrt();
            inv_stds[r] = inv_std;
            for j in 0..d {
                data[r * d + j] = (row[j] - mu) * inv_std;
            }
        }
        let y = data.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut dg = vec![0f32; g.len()];
                for r in 0..rows {
                    let gr = &g[r * d..(r + 1) * d];
                    let yr = &y[r * d..(r + 1) * d];
                    let mean_g = gr.iter().sum::<f32>() / d as f32;
                    let mean_gy = gr.iter().zip(yr.iter()).map(|(&a, &b)| a * b).sum::<f32>()
                        / d as f32;
                    for j in 0..d {
                        dg[r * d + j] = inv_stds[r] * (gr[j] - mean_g - yr[j] * mean_gy);
                    }
                }
                vec![Some(dg)]
            }),
        ))
    }

    /// Elementwise select: out = mask != 0 ? a : b. The mask gets no gradient.
    pub fn where_mask(mask: &Tensor, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if mask.shape() != a.shape() || a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "where_mask",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let m = mask.data();
        let data: Vec<f32> = a
            .data()
            .iter()
            .zip(b.data().iter())
            .enumerate()
            .map(|(i, (&x, &y))| if m[i] != 0.0 { x } else { y })
            .collect();
        let mask_c = mask.to_vec();
        Ok(Tensor::from_op(
            a.shape().to_vec(),
            data,
            vec![a.clone(), b.clone()],
            Box::new(move |g| {
                let mut da = vec![0f32; g.len()];
                let mut db = vec![0f32; g.len()];
                for i in 0..g.len() {
                    if mask_c[i] != 0.0 {
                        da[i] = g[i];
                    } else {
                        db[i] = g[i];
                    }
                }
                vec![Some(da), Some(db)]
            }),
        ))
    }

    /// Nearest-neighbor upsampling of a (B, C, H, W) tensor by factor `r`.
    pub fn upsample_nearest(&self, r: usize) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 4 || r == 0 {
            return Err(TensorError::Invalid {
                op: "upsample_nearest",
                msg: format!("expected rank-4 input and r > 0, got {:?} r={}", s, r),
            });
        }
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (oh, ow) = (h * r, w * r);
        let src = self.data();
        let mut data = vec![0f32; b * c * oh * ow];
        for bc in 0..b * c {
            let sp = &src[bc * h * w..(bc + 1) * h * w];
            let dp = &mut data[bc * oh * ow..(bc + 1) * oh * ow];
            for y in 0..oh {
                for x in 0..ow {
                    dp[y * ow + x] = sp[(y / r) * w + (x / r)];
                }
            }
        }
        Ok(Tensor::from_op(
            vec![b, c, oh, ow],
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut dg = vec![0f32; b * c * h * w];
                for bc in 0..b * c {
                    let gp = &g[bc * oh * ow..(bc + 1) * oh * ow];
                    let dp = &mut dg[bc * h * w..(bc + 1) * h * w];
                    for y in 0..oh {
                        for x in 0..ow {
                            dp[(y / r) * w + (x / r)] += gp[y * ow + x];
                        }
                    }
                }
                vec![Some(dg)]
            }),
        ))
    }

    /// Unfold (B, C, H, W) into (B*Ho*Wo, C*kh*kw) patches for GEMM-based
    /// convolution. Zero padding.
    pub fn im2col(&self, kh: usize, kw: usize, stride: usize, pad: usize) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 4 {
            return Err(TensorError::Invalid {
                op: "im2col",
                msg: format!("expected rank-4 input, got {:?}", s),
            });
        }
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(TensorError::Invalid {
                op: "im2col",
                msg: "kernel larger than padded input".into(),
            });
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        let src = self.data();
        let cols = c * kh * kw;
        let mut data = vec![0f32; b * ho * wo * cols];
        for bi in 0..b {
            for oy in 0..ho {
                for ox in 0..wo {
                    let row = ((bi * ho + oy) * wo + ox) * cols;
                    for ci in 0..c {
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                data[row + (ci * kh + ky) * kw + kx] = src
                                    [((bi * c + ci) * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        Ok(Tensor::from_op(
            vec![b * ho * wo, cols],
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut dg = vec![0f32; b * c * h * w];
                for bi in 0..b {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let row = ((bi * ho + oy) * wo + ox) * cols;
                            for ci in 0..c {
                                for ky in 0..kh {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for kx in 0..kw {
                                        let ix = (ox * stride + kx) as isize - pad as isize;
                                        if ix < 0 || ix >= w as isize {
                                            continue;
                                        }
                                        dg[((bi * c + ci) * h + iy as usize) * w + ix as usize] +=
                                            g[row + (ci * kh + ky) * kw + kx];
                                    }
                                }
                            }
                        }
                    }
                }
                vec![Some(dg)]
            }),
        ))
    }

    /// Mean negative log-softmax of the target class per row. Fused for
    /// numerical stability.
    pub fn cross_entropy_rows(&self, targets: &[usize]) -> Result<Tensor> {
        if self.shape().len() != 2 || self.shape()[0] != targets.len() {
            return Err(TensorError::Invalid {
                op: "cross_entropy_rows",
                msg: format!(
                    "expected ({}, k) logits, got {:?}",
                    targets.len(),
                    self.shape()
                ),
            });
        }
        let (n, k) = (self.shape()[0], self.shape()[1]);
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(TensorError::Invalid {
                op: "cross_entropy_rows",
                msg: format!("target {bad} out of range for {k} classes"),
            });
        }
        let src = self.data();
        let mut loss = 0f64;
        let mut probs = vec![0f32; n * k];
        for r in 0..n {
            let row = &src[r * k..(r + 1) * k];
            let m = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let mut z = 0f32;
            for j in 0..k {
                let e = (row[j] - m).exp();
                probs[r * k + j] = e;
                z += e;
            }
            for j in 0..k {
                probs[r * k + j] /= z;
            }
            loss -= (probs[r * k + targets[r]] as f64).max(1e-45).ln();
        }
        let mean_loss = (loss / n as f64) as f32;
        let tgt = targets.to_vec();
        Ok(Tensor::from_op(
            vec![],
            vec![mean_loss],
            vec![self.clone()],
            Box::new(move |g| {
                let scale = g[0] / n as f32;
                let mut dg = probs.clone();
                for (r, &t) in tgt.iter().enumerate() {
                    dg[r * k + t] -= 1.0;
                }
                for v in dg.iter_mut() {
                    *v *= scale;
                }
                vec![Some(dg)]
            }),
        ))
    }
}

pub(crate) fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
