//! Small stacked LSTM regressor for one-step-ahead arrival-rate forecasting,
//! with hand-written backpropagation through time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};

const MAGIC: [u8; 4] = *b"LSTM";

/// Anything that can extend a normalized series `h` steps ahead.
pub trait Forecast {
    /// Samples the model looks back over.
    fn window(&self) -> usize;
    /// Fit on one or more normalized series. Returns the final training loss.
    fn train(&mut self, series: &[&[f64]]) -> Result<f64>;
    /// Iterated one-step prediction; `recent` holds at least `window()`
    /// samples, only the trailing window is used.
    fn forecast(&self, recent: &[f64], h: usize) -> Vec<f64>;
}

/// Repeats the last observed value.
#[derive(Debug, Clone, Default)]
pub struct LastValue {
    window: usize,
}

impl LastValue {
    pub fn new(window: usize) -> Self {
        LastValue { window: window.max(1) }
    }
}

impl Forecast for LastValue {
    fn window(&self) -> usize {
        self.window
    }

    fn train(&mut self, _series: &[&[f64]]) -> Result<f64> {
        Ok(0.0)
    }

    fn forecast(&self, recent: &[f64], h: usize) -> Vec<f64> {
        vec![recent.last().copied().unwrap_or(0.0); h]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub epochs: usize,
    pub lr: f64,
    pub clip_norm: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams { epochs: 200, lr: 0.01, clip_norm: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerShape {
    input: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    hidden: usize,
    window: usize,
    shapes: Vec<LayerShape>,
    wy: usize,
    by: usize,
    params: Vec<f64>,
    pub train_params: TrainParams,
    /// One loss value per completed epoch of the last `train` call.
    pub loss_history: Vec<f64>,
}

struct LayerCache {
    // Per time step: concatenated [x; h_prev], gate activations i f g o,
    // previous cell, cell.
    xh: Vec<Vec<f64>>,
    gates: Vec<Vec<f64>>,
    c_prev: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Lstm {
    pub fn new(layers: usize, hidden: usize, window: usize, seed: u64) -> Self {
        let layers = layers.max(1);
        let mut shapes = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            let input = if l == 0 { 1 } else { hidden };
            let w = off;
            off += 4 * hidden * (input + hidden);
            let b = off;
            off += 4 * hidden;
            shapes.push(LayerShape { input, w, b });
        }
        let wy = off;
        off += hidden;
        let by = off;
        off += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..off).map(|_| rng.gen_range(-0.1..=0.1)).collect();
        Lstm {
            hidden,
            window: window.max(1),
            shapes,
            wy,
            by,
            params,
            train_params: TrainParams::default(),
            loss_history: Vec::new(),
        }
    }

    /// Two layers of twenty units over a ten-sample window.
    pub fn standard(seed: u64) -> Self {
        Lstm::new(2, 20, 10, seed)
    }

    pub fn layers(&self) -> usize {
        self.shapes.len()
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn run(&self, xs: &[f64]) -> (f64, Vec<LayerCache>) {
        let hsz = self.hidden;
        let mut caches: Vec<LayerCache> = Vec::with_capacity(self.shapes.len());
        let mut inputs: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        for shape in &self.shapes {
            let cols = shape.input + hsz;
            let w = &self.params[shape.w..shape.w + 4 * hsz * cols];
            let b = &self.params[shape.b..shape.b + 4 * hsz];
            let mut cache = LayerCache {
                xh: Vec::with_capacity(xs.len()),
                gates: Vec::with_capacity(xs.len()),
                c_prev: Vec::with_capacity(xs.len()),
                c: Vec::with_capacity(xs.len()),
                h: Vec::with_capacity(xs.len()),
            };
            let mut h = vec![0.0; hsz];
            let mut c = vec![0.0; hsz];
            for x in &inputs {
                let mut xh = x.clone();
                xh.extend_from_slice(&h);
                let mut gates = b.to_vec();
                for (r, g) in gates.iter_mut().enumerate() {
                    let row = &w[r * cols..(r + 1) * cols];
                    *g += row.iter().zip(&xh).map(|(a, b)| a * b).sum::<f64>();
                }
                for k in 0..hsz {
                    gates[k] = sigmoid(gates[k]);
                    gates[hsz + k] = sigmoid(gates[hsz + k]);
                    gates[2 * hsz + k] = gates[2 * hsz + k].tanh();
                    gates[3 * hsz + k] = sigmoid(gates[3 * hsz + k]);
                }
                let c_prev = c.clone();
                for k in 0..hsz {
                    c[k] = gates[hsz + k] * c_prev[k] + gates[k] * gates[2 * hsz + k];
                    h[k] = gates[3 * hsz + k] * c[k].tanh();
                }
                cache.xh.push(xh);
                cache.gates.push(gates);
                cache.c_prev.push(c_prev);
                cache.c.push(c.clone());
                cache.h.push(h.clone());
            }
            inputs = cache.h.clone();
            caches.push(cache);
        }
        let top = caches.last().and_then(|c| c.h.last()).cloned().unwrap_or_else(|| vec![0.0; hsz]);
        let wy = &self.params[self.wy..self.wy + hsz];
        let y = self.params[self.by] + wy.iter().zip(&top).map(|(a, b)| a * b).sum::<f64>();
        (y, caches)
    }

    /// One-step prediction from a window of inputs.
    pub fn predict(&self, xs: &[f64]) -> f64 {
        self.run(xs).0
    }

    /// Accumulate into `grad` the gradient of `scale * (y - target)^2`.
    fn backprop(&self, xs: &[f64], target: f64, scale: f64, grad: &mut [f64]) -> f64 {
        let hsz = self.hidden;
        let (y, caches) = self.run(xs);
        let err = y - target;
        let dy = 2.0 * scale * err;
        let steps = xs.len();
        let top = &caches[caches.len() - 1];
        grad[self.by] += dy;
        for k in 0..hsz {
            grad[self.wy + k] += dy * top.h[steps - 1][k];
        }
        // Gradient flowing into each layer's outputs, per time step.
        let mut dh_ext: Vec<Vec<f64>> = vec![vec![0.0; hsz]; steps];
        for k in 0..hsz {
            dh_ext[steps - 1][k] = dy * self.params[self.wy + k];
        }
        for (l, shape) in self.shapes.iter().enumerate().rev() {
            let cache = &caches[l];
            let cols = shape.input + hsz;
            let mut dx_out: Vec<Vec<f64>> = vec![vec![0.0; shape.input]; steps];
            let mut dh_next = vec![0.0; hsz];
            let mut dc_next = vec![0.0; hsz];
            let mut dz = vec![0.0; 4 * hsz];
            for t in (0..steps).rev() {
                let g = &cache.gates[t];
                for k in 0..hsz {
                    let dh = dh_ext[t][k] + dh_next[k];
                    let tc = cache.c[t][k].tanh();
                    let (i, f, gg, o) = (g[k], g[hsz + k], g[2 * hsz + k], g[3 * hsz + k]);
                    let d_o = dh * tc;
                    let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
                    let di = dc * gg;
                    let dg = dc * i;
                    let df = dc * cache.c_prev[t][k];
                    dc_next[k] = dc * f;
                    dz[k] = di * i * (1.0 - i);
                    dz[hsz + k] = df * f * (1.0 - f);
                    dz[2 * hsz + k] = dg * (1.0 - gg * gg);
                    dz[3 * hsz + k] = d_o * o * (1.0 - o);
                }
                let xh = &cache.xh[t];
                let mut dxh = vec![0.0; cols];
                for (r, &d) in dz.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    grad[shape.b + r] += d;
                    let base = shape.w + r * cols;
                    for j in 0..cols {
                        grad[base + j] += d * xh[j];
                        dxh[j] += d * self.params[base + j];
                    }
                }
                dx_out[t].copy_from_slice(&dxh[..shape.input]);
                dh_next.copy_from_slice(&dxh[shape.input..]);
            }
            dh_ext = dx_out;
        }
        err * err
    }

    /// Mean squared one-step error over every sliding window of `series`.
    pub fn loss(&self, series: &[&[f64]]) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for s in series {
            for end in self.window..s.len() {
                let e = self.predict(&s[end - self.window..end]) - s[end];
                total += e * e;
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }

    /// Analytic gradient of [`Lstm::loss`] with respect to every parameter.
    pub fn loss_gradient(&self, series: &[&[f64]]) -> Vec<f64> {
        let windows: usize = series.iter().map(|s| s.len().saturating_sub(self.window)).sum();
        let mut grad = vec![0.0; self.params.len()];
        if windows == 0 {
            return grad;
        }
        let scale = 1.0 / windows as f64;
        for s in series {
            for end in self.window..s.len() {
                self.backprop(&s[end - self.window..end], s[end], scale, &mut grad);
            }
        }
        grad
    }

    fn apply(&mut self, grad: &mut [f64], lr: f64, clip: f64) {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let factor = if clip > 0.0 && norm > clip { clip / norm } else { 1.0 };
        for (p, g) in self.params.iter_mut().zip(grad.iter()) {
            *p -= lr * factor * g;
        }
    }

    /// Header (magic, layers, hidden, window as little-endian u32) followed
    /// by every parameter as a little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.params.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&(self.shapes.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.hidden as u32).to_le_bytes());
        out.extend_from_slice(&(self.window as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || bytes[..4] != MAGIC {
            return Err(CoreError::Invalid("not a serialized forecaster".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
        let mut model = Lstm::new(word(4), word(8), word(12), 0);
        let body = &bytes[16..];
        if body.len() != 8 * model.params.len() {
            return Err(CoreError::LengthMismatch(body.len() / 8, model.params.len()));
        }
        for (p, chunk) in model.params.iter_mut().zip(body.chunks_exact(8)) {
            *p = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        Ok(model)
    }
}

impl Forecast for Lstm {
    fn window(&self) -> usize {
        self.window
    }

    /// Stochastic gradient descent, one update per sliding window, windows
    /// visited in order.
    fn train(&mut self, series: &[&[f64]]) -> Result<f64> {
        let longest = series.iter().map(|s| s.len()).max().unwrap_or(0);
        if longest <= self.window + 1 {
            return Err(CoreError::HistoryTooShort { needed: self.window + 2, have: longest });
        }
        let TrainParams { epochs, lr, clip_norm } = self.train_params;
        self.loss_history.clear();
        let mut grad = vec![0.0; self.params.len()];
        for _ in 0..epochs {
            for s in series {
                for end in self.window..s.len() {
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    self.backprop(&s[end - self.window..end], s[end], 1.0, &mut grad);
                    self.apply(&mut grad, lr, clip_norm);
                }
            }
            self.loss_history.push(self.loss(series));
        }
        Ok(self.loss(series))
    }

    fn forecast(&self, recent: &[f64], h: usize) -> Vec<f64> {
        let start = recent.len().saturating_sub(self.window);
        let mut buf: Vec<f64> = recent[start..].to_vec();
        let mut out = Vec::with_capacity(h);
        for _ in 0..h {
            let y = self.predict(&buf);
            out.push(y);
            buf.push(y);
            if buf.len() > self.window {
                buf.remove(0);
            }
        }
        out
    }
}
