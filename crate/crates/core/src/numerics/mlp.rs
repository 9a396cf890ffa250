//! Fixed-architecture multilayer perceptron with exact reverse-mode gradients.
//!
//! Parameters live in one flat vector. Per layer the order is weight
//! (`out×in`, row-major), bias (`out`), then, for normalised hidden layers,
//! layer-norm scale (`out`) and shift (`out`). Hidden layers compute
//! `mish(norm(W·x + b))`; the output layer is linear.
//!
//! Batched inputs are row-major `rows × input_dim` slices. Batches are
//! processed in fixed chunks (see [`par`](super::par)) so results do not depend
//! on the execution mode.

use std::sync::atomic::{AtomicU64, Ordering};

use super::activation::{mish, mish_grad};
use super::linalg::{matmul_gtx_acc, matmul_gw, matmul_xwt};
use super::par::{map_indexed, row_chunks, ExecMode};
use super::rng::Rng;
use crate::error::{Error, Result};

/// Variance guard for layer normalisation.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Hidden width used throughout unless a config overrides it.
pub const DEFAULT_HIDDEN: usize = 256;

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    fan_in: usize,
    fan_out: usize,
    weight: usize,
    bias: usize,
    /// Scale and shift offsets for normalised hidden layers.
    norm: Option<(usize, usize)>,
}

#[derive(Debug)]
pub struct Mlp {
    dims: Vec<usize>,
    layer_norm: bool,
    layers: Vec<LayerOffsets>,
    params: Vec<f64>,
    exec: ExecMode,
    forward_rows: AtomicU64,
}

impl Clone for Mlp {
    fn clone(&self) -> Self {
        Self {
            dims: self.dims.clone(),
            layer_norm: self.layer_norm,
            layers: self.layers.clone(),
            params: self.params.clone(),
            exec: self.exec,
            forward_rows: AtomicU64::new(self.forward_rows.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.layer_norm == other.layer_norm && self.params == other.params
    }
}

/// Activations cached by a batched forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    rows: usize,
    dims: Vec<usize>,
    chunks: Vec<ChunkTape>,
}

impl Tape {
    pub fn rows(&self) -> usize {
        self.rows
    }
}

#[derive(Debug, Clone)]
struct ChunkTape {
    rows: usize,
    layers: Vec<LayerTape>,
}

#[derive(Debug, Clone)]
struct LayerTape {
    input: Vec<f64>,
    /// Argument of the activation (after normalisation), hidden layers only.
    pre_act: Vec<f64>,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

/// Gradients of a scalar loss with respect to parameters and inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

fn layout(dims: &[usize], layer_norm: bool) -> (Vec<LayerOffsets>, usize) {
    let mut layers = Vec::with_capacity(dims.len() - 1);
    let mut off = 0;
    let last = dims.len() - 2;
    for (l, w) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weight = off;
        off += fan_in * fan_out;
        let bias = off;
        off += fan_out;
        let norm = if layer_norm && l < last {
            let s = off;
            off += 2 * fan_out;
            Some((s, s + fan_out))
        } else {
            None
        };
        layers.push(LayerOffsets {
            fan_in,
            fan_out,
            weight,
            bias,
            norm,
        });
    }
    (layers, off)
}

impl Mlp {
    /// Builds a network with all parameters zero except layer-norm scales (one).
    pub fn zeros(dims: &[usize], layer_norm: bool) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::usage(format!("invalid layer widths {dims:?}")));
        }
        let (layers, count) = layout(dims, layer_norm);
        let mut params = vec![0.0; count];
        for l in &layers {
            if let Some((scale, _)) = l.norm {
                params[scale..scale + l.fan_out].fill(1.0);
            }
        }
        Ok(Self {
            dims: dims.to_vec(),
            layer_norm,
            layers,
            params,
            exec: ExecMode::default(),
            forward_rows: AtomicU64::new(0),
        })
    }

    /// Fan-in uniform initialisation: weights in `±1/√fan_in`, biases zero.
    pub fn new(dims: &[usize], layer_norm: bool, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(dims, layer_norm)?;
        for l in net.layers.clone() {
            let bound = 1.0 / (l.fan_in as f64).sqrt();
            for w in &mut net.params[l.weight..l.weight + l.fan_in * l.fan_out] {
                *w = rng.uniform(-bound, bound);
            }
        }
        Ok(net)
    }

    /// `input → hidden → hidden → output`, the shape used for every network here.
    pub fn three_layer(
        input_dim: usize,
        hidden: usize,
        output_dim: usize,
        layer_norm: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        Self::new(&[input_dim, hidden, hidden, output_dim], layer_norm, rng)
    }

    /// Closed-form parameter count for the given widths.
    pub fn param_count_for(dims: &[usize], layer_norm: bool) -> usize {
        let n = dims.len();
        dims.windows(2)
            .enumerate()
            .map(|(l, w)| {
                let norm = if layer_norm && l + 2 < n { 2 * w[1] } else { 0 };
                w[0] * w[1] + w[1] + norm
            })
            .sum()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn layer_norm(&self) -> bool {
        self.layer_norm
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.params.len() {
            return Err(Error::usage(format!(
                "parameter length {} does not match network size {}",
                flat.len(),
                self.params.len()
            )));
        }
        self.params.copy_from_slice(flat);
        Ok(())
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.dims == other.dims && self.layer_norm == other.layer_norm
    }

    pub fn exec(&self) -> ExecMode {
        self.exec
    }

    pub fn set_exec(&mut self, mode: ExecMode) {
        self.exec = mode;
    }

    /// Total number of input rows pushed through this network.
    pub fn forward_rows(&self) -> u64 {
        self.forward_rows.load(Ordering::Relaxed)
    }

    pub fn reset_forward_rows(&self) {
        self.forward_rows.store(0, Ordering::Relaxed);
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.predict(input, 1)
    }

    /// Batched forward pass without caching activations.
    pub fn predict(&self, input: &[f64], rows: usize) -> Result<Vec<f64>> {
        self.check_input(input, rows)?;
        self.forward_rows.fetch_add(rows as u64, Ordering::Relaxed);
        let parts = map_indexed(self.exec, row_chunks(rows).len(), |c| {
            let (s, e) = row_chunks(rows)[c];
            self.forward_chunk(&input[s * self.input_dim()..e * self.input_dim()], e - s, None)
        });
        Ok(parts.concat())
    }

    /// Batched forward pass that records the activations needed for [`Mlp::backward`].
    pub fn forward_batch(&self, input: &[f64], rows: usize) -> Result<(Vec<f64>, Tape)> {
        self.check_input(input, rows)?;
        self.forward_rows.fetch_add(rows as u64, Ordering::Relaxed);
        let chunks = row_chunks(rows);
        let parts = map_indexed(self.exec, chunks.len(), |c| {
            let (s, e) = chunks[c];
            let mut layers = Vec::with_capacity(self.layers.len());
            let out = self.forward_chunk(
                &input[s * self.input_dim()..e * self.input_dim()],
                e - s,
                Some(&mut layers),
            );
            (out, ChunkTape { rows: e - s, layers })
        });
        let mut out = Vec::with_capacity(rows * self.output_dim());
        let mut tapes = Vec::with_capacity(parts.len());
        for (o, t) in parts {
            out.extend_from_slice(&o);
            tapes.push(t);
        }
        Ok((
            out,
            Tape {
                rows,
                dims: self.dims.clone(),
                chunks: tapes,
            },
        ))
    }

    fn check_input(&self, input: &[f64], rows: usize) -> Result<()> {
        if input.len() != rows * self.input_dim() {
            return Err(Error::usage(format!(
                "input length {} != {rows} rows × {} features",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn forward_chunk(&self, input: &[f64], rows: usize, mut tape: Option<&mut Vec<LayerTape>>) -> Vec<f64> {
        let p = &self.params;
        let last = self.layers.len() - 1;
        let mut x = input.to_vec();
        for (l, lay) in self.layers.iter().enumerate() {
            let n = lay.fan_out;
            let mut z = vec![0.0; rows * n];
            matmul_xwt(
                &x,
                &p[lay.weight..lay.weight + n * lay.fan_in],
                rows,
                lay.fan_in,
                n,
                &mut z,
            );
            let bias = &p[lay.bias..lay.bias + n];
            for row in z.chunks_exact_mut(n) {
                for (v, b) in row.iter_mut().zip(bias) {
                    *v += b;
                }
            }
            if l == last {
                if let Some(t) = tape.as_deref_mut() {
                    t.push(LayerTape {
                        input: x,
                        pre_act: Vec::new(),
                        xhat: Vec::new(),
                        inv_std: Vec::new(),
                    });
                }
                return z;
            }
            let mut xhat = Vec::new();
            let mut inv_std = Vec::new();
            if let Some((scale, shift)) = lay.norm {
                xhat = vec![0.0; rows * n];
                inv_std = vec![0.0; rows];
                let (g, b) = (&p[scale..scale + n], &p[shift..shift + n]);
                for (r, row) in z.chunks_exact_mut(n).enumerate() {
                    let mean = row.iter().sum::<f64>() / n as f64;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                    let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                    inv_std[r] = is;
                    for j in 0..n {
                        let h = (row[j] - mean) * is;
                        xhat[r * n + j] = h;
                        row[j] = g[j] * h + b[j];
                    }
                }
            }
            let h: Vec<f64> = z.iter().map(|&v| mish(v)).collect();
            if let Some(t) = tape.as_deref_mut() {
                t.push(LayerTape {
                    input: x,
                    pre_act: z,
                    xhat,
                    inv_std,
                });
            }
            x = h;
        }
        unreachable!("network has at least one layer")
    }

    /// Reverse pass: given dL/d(output) for every row of the taped batch,
    /// returns dL/d(params) summed over rows and dL/d(input) per row.
    pub fn backward(&self, tape: &Tape, output_grad: &[f64]) -> Result<Gradients> {
        if tape.dims != self.dims || tape.chunks.iter().any(|c| c.layers.len() != self.layers.len()) {
            return Err(Error::usage("tape was not recorded by a network of this shape"));
        }
        if output_grad.len() != tape.rows * self.output_dim() {
            return Err(Error::usage(format!(
                "output gradient length {} != {} rows × {}",
                output_grad.len(),
                tape.rows,
                self.output_dim()
            )));
        }
        let out_dim = self.output_dim();
        let mut offsets = Vec::with_capacity(tape.chunks.len());
        let mut start = 0;
        for c in &tape.chunks {
            offsets.push(start);
            start += c.rows;
        }
        let parts = map_indexed(self.exec, tape.chunks.len(), |c| {
            let chunk = &tape.chunks[c];
            let s = offsets[c];
            self.backward_chunk(chunk, &output_grad[s * out_dim..(s + chunk.rows) * out_dim])
        });
        let mut params = vec![0.0; self.params.len()];
        let mut input = Vec::with_capacity(tape.rows * self.input_dim());
        for (pg, ig) in parts {
            for (a, b) in params.iter_mut().zip(&pg) {
                *a += b;
            }
            input.extend_from_slice(&ig);
        }
        Ok(Gradients { params, input })
    }

    fn backward_chunk(&self, chunk: &ChunkTape, output_grad: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = &self.params;
        let rows = chunk.rows;
        let mut grads = vec![0.0; p.len()];
        let mut g = output_grad.to_vec();
        let last = self.layers.len() - 1;
        for l in (0..self.layers.len()).rev() {
            let lay = self.layers[l];
            let t = &chunk.layers[l];
            let n = lay.fan_out;
            if l != last {
                for (gv, &z) in g.iter_mut().zip(&t.pre_act) {
                    *gv *= mish_grad(z);
                }
                if let Some((scale, shift)) = lay.norm {
                    let gamma = &p[scale..scale + n];
                    for r in 0..rows {
                        let gy = &mut g[r * n..(r + 1) * n];
                        let xh = &t.xhat[r * n..(r + 1) * n];
                        let mut mean_g = 0.0;
                        let mut mean_gx = 0.0;
                        for j in 0..n {
                            grads[scale + j] += gy[j] * xh[j];
                            grads[shift + j] += gy[j];
                            let gx = gy[j] * gamma[j];
                            mean_g += gx;
                            mean_gx += gx * xh[j];
                            gy[j] = gx;
                        }
                        mean_g /= n as f64;
                        mean_gx /= n as f64;
                        let is = t.inv_std[r];
                        for j in 0..n {
                            gy[j] = is * (gy[j] - mean_g - xh[j] * mean_gx);
                        }
                    }
                }
            }
            matmul_gtx_acc(
                &g,
                &t.input,
                rows,
                n,
                lay.fan_in,
                &mut grads[lay.weight..lay.weight + n * lay.fan_in],
            );
            for row in g.chunks_exact(n) {
                for (acc, v) in grads[lay.bias..lay.bias + n].iter_mut().zip(row) {
                    *acc += v;
                }
            }
            let mut gin = vec![0.0; rows * lay.fan_in];
            matmul_gw(
                &g,
                &p[lay.weight..lay.weight + n * lay.fan_in],
                rows,
                n,
                lay.fan_in,
                &mut gin,
            );
            g = gin;
        }
        (grads, g)
    }
}
