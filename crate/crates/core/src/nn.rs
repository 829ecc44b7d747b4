//! Layers and parameter plumbing shared by the DVAE and the transformers.
//!
//! Parameters live in a [`ParamStore`] as plain named buffers; each training
//! step binds them into leaf tensors, runs forward/backward on a fresh tape,
//! and harvests gradients back by name.

use std::collections::BTreeMap;

use d2it_tensor::{macs, RngStream, Tensor};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    Normal(f32),
    XavierUniform,
}

#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: Init) -> ParamSpec {
        ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub grad: Option<Vec<f32>>,
}

/// Named parameter buffers, deterministically ordered.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
}

impl ParamStore {
    pub fn init(specs: &[ParamSpec], rng: &mut RngStream) -> ParamStore {
        let mut entries = BTreeMap::new();
        for spec in specs {
            let n = spec.numel();
            let value = match spec.init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::Normal(std) => rng.normal_vec(n).iter().map(|v| v * std).collect(),
                Init::XavierUniform => {
                    // fan_in/fan_out from the trailing two dims (vectors count
                    // as fan_in only).
                    let (fan_in, fan_out) = match spec.shape.len() {
                        0 | 1 => (n, n),
                        _ => {
                            let fo = spec.shape[spec.shape.len() - 1];
                            (n / fo, fo)
                        }
                    };
                    let a = (6.0 / (fan_in + fan_out) as f32).sqrt();
                    rng.uniform_vec(n).iter().map(|u| (2.0 * u - 1.0) * a).collect()
                }
            };
            entries.insert(
                spec.name.clone(),
                ParamEntry {
                    shape: spec.shape.clone(),
                    value,
                    grad: None,
                },
            );
        }
        ParamStore { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn param_count(&self) -> u64 {
        self.entries.values().map(|e| e.value.len() as u64).sum()
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.get(name)
    }

    pub fn set_value(&mut self, name: &str, value: Vec<f32>) -> Result<()> {
        let e = self.entries.get_mut(name).ok_or_else(|| CoreError::Invalid {
            op: "param_store",
            msg: format!("unknown parameter {name}"),
        })?;
        if e.value.len() != value.len() {
            return Err(CoreError::Invalid {
                op: "param_store",
                msg: format!("size mismatch for {name}"),
            });
        }
        e.value = value;
        Ok(())
    }

    pub fn insert(&mut self, name: String, shape: Vec<usize>, value: Vec<f32>) {
        self.entries.insert(
            name,
            ParamEntry {
                shape,
                value,
                grad: None,
            },
        );
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: Vec<f32>) -> Result<()> {
        let e = self.entries.get_mut(name).ok_or_else(|| CoreError::Invalid {
            op: "param_store",
            msg: format!("unknown parameter {name}"),
        })?;
        match e.grad.as_mut() {
            Some(g) => {
                for (a, b) in g.iter_mut().zip(grad.iter()) {
                    *a += b;
                }
            }
            None => e.grad = Some(grad),
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.values_mut() {
            e.grad = None;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamEntry)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut ParamEntry)> {
        self.entries.iter_mut()
    }
}

/// Binds store buffers into leaf tensors for one step and remembers them for
/// gradient harvest.
pub struct Binder<'a> {
    store: &'a ParamStore,
    bound: Vec<(String, Tensor)>,
    trainable: bool,
}

impl<'a> Binder<'a> {
    pub fn new(store: &'a ParamStore, trainable: bool) -> Binder<'a> {
        Binder {
            store,
            bound: Vec::new(),
            trainable,
        }
    }

    pub fn get(&mut self, name: &str) -> Result<Tensor> {
        let e = self.store.get(name).ok_or_else(|| CoreError::Invalid {
            op: "bind",
            msg: format!("unknown parameter {name}"),
        })?;
        let t = if self.trainable {
            Tensor::param(&e.shape, e.value.clone())?
        } else {
            Tensor::from_vec(&e.shape, e.value.clone())?
        };
        self.bound.push((name.to_string(), t.clone()));
        Ok(t)
    }

    /// Leaves bound so far (name, tensor).
    pub fn into_bound(self) -> Vec<(String, Tensor)> {
        self.bound
    }
}

/// Copy harvested gradients back into the store.
pub fn harvest_grads(store: &mut ParamStore, bound: &[(String, Tensor)]) -> Result<()> {
    for (name, tensor) in bound {
        if let Some(grad) = tensor.take_grad() {
            store.accumulate_grad(name, grad)?;
        }
    }
    Ok(())
}

// ---- layers ---------------------------------------------------------------

#[derive(Clone)]
pub struct Linear {
    pub w: Tensor, // (in, out)
    pub b: Option<Tensor>,
}

impl Linear {
    pub fn bind(binder: &mut Binder, prefix: &str, bias: bool) -> Result<Linear> {
        Ok(Linear {
            w: binder.get(&format!("{prefix}.w"))?,
            b: if bias {
                Some(binder.get(&format!("{prefix}.b"))?)
            } else {
                None
            },
        })
    }

    pub fn specs(prefix: &str, d_in: usize, d_out: usize, init: Init, bias: bool) -> Vec<ParamSpec> {
        let mut v = vec![ParamSpec::new(format!("{prefix}.w"), &[d_in, d_out], init)];
        if bias {
            v.push(ParamSpec::new(format!("{prefix}.b"), &[d_out], Init::Zeros));
        }
        v
    }

    /// x: (..., in) -> (..., out)
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let d_in = self.w.shape()[0];
        let d_out = self.w.shape()[1];
        let lead: Vec<usize> = x.shape()[..x.shape().len() - 1].to_vec();
        let rows: usize = lead.iter().product();
        let y = x.reshape(&[rows, d_in])?.matmul(&self.w)?;
        let y = match &self.b {
            Some(b) => y.add(b)?,
            None => y,
        };
        let mut out_shape = lead;
        out_shape.push(d_out);
        y.reshape(&out_shape).map_err(Into::into)
    }
}

/// Embedding table looked up by integer id.
#[derive(Clone)]
pub struct Embedding {
    pub table: Tensor, // (rows, d)
}

impl Embedding {
    pub fn bind(binder: &mut Binder, name: &str) -> Result<Embedding> {
        Ok(Embedding {
            table: binder.get(name)?,
        })
    }

    pub fn spec(name: &str, rows: usize, d: usize) -> ParamSpec {
        ParamSpec::new(name, &[rows, d], Init::Normal(0.02))
    }

    pub fn forward(&self, ids: &[usize]) -> Result<Tensor> {
        self.table.gather_rows(ids).map_err(Into::into)
    }
}

/// Two-layer GELU MLP with hidden = ratio * d.
#[derive(Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn specs(prefix: &str, d: usize, hidden: usize) -> Vec<ParamSpec> {
        let mut v = Linear::specs(&format!("{prefix}.fc1"), d, hidden, Init::XavierUniform, true);
        v.extend(Linear::specs(
            &format!("{prefix}.fc2"),
            hidden,
            d,
            Init::XavierUniform,
            true,
        ));
        v
    }

    pub fn bind(binder: &mut Binder, prefix: &str) -> Result<Mlp> {
        Ok(Mlp {
            fc1: Linear::bind(binder, &format!("{prefix}.fc1"), true)?,
            fc2: Linear::bind(binder, &format!("{prefix}.fc2"), true)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&self.fc1.forward(x)?.gelu())
    }
}

/// Multi-head self-attention over (B, N, d) tokens with an optional additive
/// (N, N) score bias, shared across batch and heads.
#[derive(Clone)]
pub struct Attention {
    pub qkv: Linear,
    pub proj: Linear,
    pub heads: usize,
}

impl Attention {
    pub fn specs(prefix: &str, d: usize) -> Vec<ParamSpec> {
        let mut v = Linear::specs(&format!("{prefix}.qkv"), d, 3 * d, Init::XavierUniform, true);
        v.extend(Linear::specs(
            &format!("{prefix}.proj"),
            d,
            d,
            Init::XavierUniform,
            true,
        ));
        v
    }

    pub fn bind(binder: &mut Binder, prefix: &str, heads: usize) -> Result<Attention> {
        Ok(Attention {
            qkv: Linear::bind(binder, &format!("{prefix}.qkv"), true)?,
            proj: Linear::bind(binder, &format!("{prefix}.proj"), true)?,
            heads,
        })
    }

    pub fn forward(&self, x: &Tensor, score_bias: Option<&Tensor>) -> Result<Tensor> {
        let (b, n, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let h = self.heads;
        if d % h != 0 {
            return Err(CoreError::Invalid {
                op: "attention",
                msg: format!("dim {d} not divisible by {h} heads"),
            });
        }
        let dh = d / h;
        let qkv = macs::with_tag("attn_proj", || self.qkv.forward(x))?;
        // (B, N, 3, H, dh) -> (3, B, H, N, dh)
        let qkv = qkv
            .reshape(&[b, n, 3, h, dh])?
            .permute(&[2, 0, 3, 1, 4])?;
        let part = |i: usize| -> Result<Tensor> {
            Ok(qkv.slice(0, i, 1)?.reshape(&[b * h, n, dh])?)
        };
        let q = part(0)?;
        let k = part(1)?;
        let v = part(2)?;
        let k_t = k.transpose(1, 2)?;
        let scale = 1.0 / (dh as f32).sqrt();
        let scores = macs::with_tag("attn_scores", || q.matmul(&k_t))?.scale(scale);
        let scores = match score_bias {
            Some(bias) => {
                if bias.shape() != [n, n] {
                    return Err(CoreError::Invalid {
                        op: "attention",
                        msg: format!("score bias {:?}, expected [{n}, {n}]", bias.shape()),
                    });
                }
                scores.add(bias)?
            }
            None => scores,
        };
        let attn = scores.softmax(2)?;
        let out = macs::with_tag("attn_values", || attn.matmul(&v))?;
        let out = out
            .reshape(&[b, h, n, dh])?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[b, n, d])?;
        macs::with_tag("attn_proj", || self.proj.forward(&out))
    }
}

/// 3x3 / 1x1 convolution via im2col + GEMM. Weight stored (C_in*kh*kw, C_out).
#[derive(Clone)]
pub struct Conv2d {
    pub w: Tensor,
    pub b: Tensor,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn specs(prefix: &str, c_in: usize, c_out: usize, kernel: usize) -> Vec<ParamSpec> {
        vec![
            ParamSpec::new(
                format!("{prefix}.w"),
                &[c_in * kernel * kernel, c_out],
                Init::XavierUniform,
            ),
            ParamSpec::new(format!("{prefix}.b"), &[c_out], Init::Zeros),
        ]
    }

    pub fn bind(
        binder: &mut Binder,
        prefix: &str,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Conv2d> {
        Ok(Conv2d {
            w: binder.get(&format!("{prefix}.w"))?,
            b: binder.get(&format!("{prefix}.b"))?,
            kernel,
            stride,
            pad,
        })
    }

    /// (B, C, H, W) -> (B, C_out, Ho, Wo)
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, _c, h, w) = (
            x.shape()[0],
            x.shape()[1],
            x.shape()[2],
            x.shape()[3],
        );
        let ho = (h + 2 * self.pad - self.kernel) / self.stride + 1;
        let wo = (w + 2 * self.pad - self.kernel) / self.stride + 1;
        let c_out = self.w.shape()[1];
        let cols = x.im2col(self.kernel, self.kernel, self.stride, self.pad)?;
        let y = cols.matmul(&self.w)?.add(&self.b)?;
        y.reshape(&[b, ho, wo, c_out])?
            .permute(&[0, 3, 1, 2])
            .map_err(Into::into)
    }
}

// ---- fixed (non-learnable) embeddings --------------------------------------

/// DiT-style 2-D sine/cosine position table for a grid_h x grid_w token grid.
/// d must be divisible by 4.
pub fn sincos_2d(grid_h: usize, grid_w: usize, d: usize) -> Result<Tensor> {
    if d % 4 != 0 {
        return Err(CoreError::Invalid {
            op: "sincos_2d",
            msg: format!("dim {d} not divisible by 4"),
        });
    }
    let quarter = d / 4;
    let omega: Vec<f64> = (0..quarter)
        .map(|i| 1.0 / 10000f64.powf(i as f64 / quarter as f64))
        .collect();
    let mut data = Vec::with_capacity(grid_h * grid_w * d);
    for y in 0..grid_h {
        for x in 0..grid_w {
            // y block then x block, each [sin | cos]
            for &pos in &[y as f64, x as f64] {
                for &o in &omega {
                    data.push((pos * o).sin() as f32);
                }
                for &o in &omega {
                    data.push((pos * o).cos() as f32);
                }
            }
        }
    }
    Ok(Tensor::from_vec(&[grid_h * grid_w, d], data)?)
}

/// Sinusoidal timestep embedding, cos block then sin block.
pub fn timestep_embedding(ts: &[f32], dim: usize) -> Result<Tensor> {
    if dim % 2 != 0 {
        return Err(CoreError::Invalid {
            op: "timestep_embedding",
            msg: format!("dim {dim} must be even"),
        });
    }
    let half = dim / 2;
    let freqs: Vec<f64> = (0..half)
        .map(|i| (-(10000f64.ln()) * i as f64 / half as f64).exp())
        .collect();
    let mut data = Vec::with_capacity(ts.len() * dim);
    for &t in ts {
        for &f in &freqs {
            data.push((t as f64 * f).cos() as f32);
        }
        for &f in &freqs {
            data.push((t as f64 * f).sin() as f32);
        }
    }
    Ok(Tensor::from_vec(&[ts.len(), dim], data)?)
}
