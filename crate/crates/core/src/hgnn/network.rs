use std::ops::AddAssign;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hypergraph::{EdgeKind, HypergraphIncidence};
use crate::error::{Error, Result};

/// Slope of the leaky rectifier on negative inputs.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    LeakyRelu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu => if z > 0.0 { z } else { LEAKY_SLOPE * z },
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu => if z > 0.0 { 1.0 } else { LEAKY_SLOPE },
            Activation::Tanh => 1.0 - z.tanh().powi(2),
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Trainable parameters: one linear map per convolution layer plus the two edge-type logits.
#[derive(Debug, Clone, PartialEq)]
pub struct HgnnParams {
    /// `thetas[l]` maps width `widths[l]` to `widths[l + 1]` (rows = output width).
    pub thetas: Vec<DMatrix<f64>>,
    pub w1: f64,
    pub w2: f64,
    pub activation: Activation,
}

impl HgnnParams {
    /// Symmetric uniform init with bound `1 / sqrt(fan_in)`; both edge logits start at 0.
    pub fn init(widths: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid("need at least an input and an output width, all positive"));
        }
        if *widths.last().unwrap() != 2 {
            return Err(Error::invalid("output width must be 2"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let thetas = widths
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..=bound))
            })
            .collect();
        Ok(HgnnParams { thetas, w1: 0.0, w2: 0.0, activation })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.thetas[0].ncols()];
        w.extend(self.thetas.iter().map(|t| t.nrows()));
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.thetas.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        for pair in self.thetas.windows(2) {
            if pair[0].nrows() != pair[1].ncols() {
                return Err(Error::dims("consecutive layer widths do not chain"));
            }
        }
        if self.thetas.last().unwrap().nrows() != 2 {
            return Err(Error::dims("output width must be 2"));
        }
        Ok(())
    }

    fn edge_weight(&self, kind: EdgeKind) -> f64 {
        match kind {
            EdgeKind::Beam => sigmoid(self.w1),
            EdgeKind::Time => sigmoid(self.w2),
        }
    }

    /// Flat copy of every parameter, layer by layer (column-major), then `w1`, `w2`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.thetas.iter().flat_map(|t| t.iter().copied()).collect();
        v.extend([self.w1, self.w2]);
        v
    }

    /// Inverse of [`flatten`](Self::flatten) for parameters shaped like `self`.
    pub fn unflatten_like(&self, values: &[f64]) -> Result<Self> {
        let shapes: Vec<(usize, usize)> = self.thetas.iter().map(|t| t.shape()).collect();
        from_flat(&shapes, values, self.activation)
    }

    /// Flat little-endian f64 tensors plus a JSON description of their shapes.
    pub fn to_checkpoint(&self) -> Result<(Vec<u8>, String)> {
        let bytes = self.flatten().iter().flat_map(|v| v.to_le_bytes()).collect();
        let shapes: Vec<(usize, usize)> = self.thetas.iter().map(|t| t.shape()).collect();
        let meta = CheckpointMeta { shapes, activation: self.activation, scalars: vec!["w1".into(), "w2".into()] };
        Ok((bytes, serde_json::to_string_pretty(&meta)?))
    }

    pub fn from_checkpoint(bytes: &[u8], meta_json: &str) -> Result<Self> {
        let meta: CheckpointMeta = serde_json::from_str(meta_json)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::invalid("checkpoint size is not a multiple of 8 bytes"));
        }
        let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let p = from_flat(&meta.shapes, &values, meta.activation)?;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    /// (rows, cols) of each layer map, stored column-major.
    shapes: Vec<(usize, usize)>,
    activation: Activation,
    scalars: Vec<String>,
}

fn from_flat(shapes: &[(usize, usize)], values: &[f64], activation: Activation) -> Result<HgnnParams> {
    let total: usize = shapes.iter().map(|(r, c)| r * c).sum::<usize>() + 2;
    if values.len() != total {
        return Err(Error::dims(format!("expected {total} parameters, got {}", values.len())));
    }
    let mut offset = 0;
    let thetas = shapes
        .iter()
        .map(|&(r, c)| {
            let t = DMatrix::from_column_slice(r, c, &values[offset..offset + r * c]);
            offset += r * c;
            t
        })
        .collect();
    Ok(HgnnParams { thetas, w1: values[offset], w2: values[offset + 1], activation })
}

/// Gradient of the loss with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub thetas: Vec<DMatrix<f64>>,
    pub w1: f64,
    pub w2: f64,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.thetas.iter().flat_map(|t| t.iter().copied()).collect();
        v.extend([self.w1, self.w2]);
        v
    }
}

/// Unweighted aggregation over one edge family:
/// `out_v = sum_{e ∋ v, e of kind} mean_{u ∈ e} f_u / deg(v)`.
fn aggregate(h: &HypergraphIncidence, f: &DMatrix<f64>, kind: EdgeKind) -> DMatrix<f64> {
    let d = f.nrows();
    let src = f.as_slice();
    let mut out = DMatrix::zeros(d, h.n_vertices());
    let dst = out.as_mut_slice();
    let mut mean = vec![0.0; d];
    for e in family(h, kind) {
        mean.iter_mut().for_each(|v| *v = 0.0);
        for &u in e {
            for (acc, x) in mean.iter_mut().zip(&src[u * d..(u + 1) * d]) {
                *acc += x;
            }
        }
        let inv_len = 1.0 / e.len() as f64;
        for &v in e {
            let s = inv_len / h.degree(v) as f64;
            for (o, x) in dst[v * d..(v + 1) * d].iter_mut().zip(&mean) {
                *o += s * x;
            }
        }
    }
    out
}

/// Adjoint of [`aggregate`].
fn aggregate_adjoint(h: &HypergraphIncidence, g: &DMatrix<f64>, kind: EdgeKind) -> DMatrix<f64> {
    let d = g.nrows();
    let src = g.as_slice();
    let mut out = DMatrix::zeros(d, h.n_vertices());
    let dst = out.as_mut_slice();
    let mut acc = vec![0.0; d];
    for e in family(h, kind) {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for &v in e {
            let inv = 1.0 / h.degree(v) as f64;
            for (a, x) in acc.iter_mut().zip(&src[v * d..(v + 1) * d]) {
                *a += inv * x;
            }
        }
        let inv_len = 1.0 / e.len() as f64;
        for &u in e {
            for (o, a) in dst[u * d..(u + 1) * d].iter_mut().zip(&acc) {
                *o += inv_len * a;
            }
        }
    }
    out
}

fn family(h: &HypergraphIncidence, kind: EdgeKind) -> &[Vec<usize>] {
    match kind {
        EdgeKind::Beam => h.edges_beam(),
        EdgeKind::Time => h.edges_time(),
    }
}

/// `s1 * P1(f) + s2 * P2(f)` together with the two family aggregates.
fn propagate(h: &HypergraphIncidence, f: &DMatrix<f64>, s: (f64, f64)) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let a1 = aggregate(h, f, EdgeKind::Beam);
    let a2 = aggregate(h, f, EdgeKind::Time);
    let m = a1.zip_map(&a2, |x, y| s.0 * x + s.1 * y);
    (m, a1, a2)
}

fn propagate_adjoint(h: &HypergraphIncidence, g: &DMatrix<f64>, s: (f64, f64)) -> DMatrix<f64> {
    let b1 = aggregate_adjoint(h, g, EdgeKind::Beam);
    let b2 = aggregate_adjoint(h, g, EdgeKind::Time);
    b1.zip_map(&b2, |x, y| s.0 * x + s.1 * y)
}

fn frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// Intermediate values of one layer. Propagation is linear, so each layer applies it on
/// the narrower side of `Theta`: `Theta * P(f)` equals `P(Theta * f)`.
struct LayerTrace {
    input: DMatrix<f64>,
    /// Either `P(f)` (aggregate first) or `Theta * f` (transform first).
    inner: DMatrix<f64>,
    a1: DMatrix<f64>,
    a2: DMatrix<f64>,
    aggregate_first: bool,
    pre: DMatrix<f64>,
}

fn check_widths(h: &HypergraphIncidence, features: &DMatrix<f64>, params: &HgnnParams) -> Result<()> {
    params.validate()?;
    if features.ncols() != h.n_vertices() {
        return Err(Error::dims(format!("{} feature columns for {} vertices", features.ncols(), h.n_vertices())));
    }
    if features.nrows() != params.thetas[0].ncols() {
        return Err(Error::dims(format!(
            "feature width {} does not match input width {}",
            features.nrows(),
            params.thetas[0].ncols()
        )));
    }
    Ok(())
}

fn edge_weights(params: &HgnnParams) -> (f64, f64) {
    (params.edge_weight(EdgeKind::Beam), params.edge_weight(EdgeKind::Time))
}

fn forward_trace(h: &HypergraphIncidence, features: &DMatrix<f64>, params: &HgnnParams) -> (Vec<LayerTrace>, DMatrix<f64>) {
    let n_layers = params.thetas.len();
    let s = edge_weights(params);
    let mut trace = Vec::with_capacity(n_layers);
    let mut f = features.clone();
    for (l, theta) in params.thetas.iter().enumerate() {
        let aggregate_first = theta.ncols() <= theta.nrows();
        let (inner, a1, a2, z) = if aggregate_first {
            let (m, a1, a2) = propagate(h, &f, s);
            let z = theta * &m;
            (m, a1, a2, z)
        } else {
            let u = theta * &f;
            let (z, a1, a2) = propagate(h, &u, s);
            (u, a1, a2, z)
        };
        let act = if l + 1 == n_layers { Activation::Identity } else { params.activation };
        let next = z.map(|v| act.apply(v));
        trace.push(LayerTrace { input: f, inner, a1, a2, aggregate_first, pre: z });
        f = next;
    }
    (trace, f)
}

/// Predicted output features, one column per vertex (feature-major `2 x n`).
pub fn hgnn_forward(h: &HypergraphIncidence, features: &DMatrix<f64>, params: &HgnnParams) -> Result<DMatrix<f64>> {
    check_widths(h, features, params)?;
    Ok(forward_trace(h, features, params).1)
}

/// `(1/|P|) * sum_{i in P} ||pred_i - label_i||^2` over columns.
pub fn hgnn_loss(pred: &DMatrix<f64>, labels: &DMatrix<f64>, labeled: &[usize]) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::invalid("labeled set must be non-empty"));
    }
    if pred.shape() != labels.shape() {
        return Err(Error::dims("prediction and label shapes differ"));
    }
    let mut sum = 0.0;
    for &i in labeled {
        if i >= pred.ncols() {
            return Err(Error::invalid(format!("labeled index {i} out of range")));
        }
        sum += (pred.column(i) - labels.column(i)).norm_squared();
    }
    Ok(sum / labeled.len() as f64)
}

/// Loss and its exact gradient by reverse-mode differentiation of the forward pass.
pub fn loss_and_gradients(
    h: &HypergraphIncidence,
    features: &DMatrix<f64>,
    labels: &DMatrix<f64>,
    labeled: &[usize],
    params: &HgnnParams,
) -> Result<(f64, Gradients)> {
    check_widths(h, features, params)?;
    let (trace, pred) = forward_trace(h, features, params);
    let loss = hgnn_loss(&pred, labels, labeled)?;

    let n_layers = params.thetas.len();
    let s = edge_weights(params);
    let mut g_f = DMatrix::zeros(pred.nrows(), pred.ncols());
    let scale = 2.0 / labeled.len() as f64;
    for &i in labeled {
        let g = (pred.column(i) - labels.column(i)) * scale;
        g_f.column_mut(i).add_assign(&g);
    }

    let mut g_thetas = vec![DMatrix::zeros(0, 0); n_layers];
    let (mut g_s1, mut g_s2) = (0.0, 0.0);
    for l in (0..n_layers).rev() {
        let t = &trace[l];
        let theta = &params.thetas[l];
        let act = if l + 1 == n_layers { Activation::Identity } else { params.activation };
        let g_z = g_f.zip_map(&t.pre, |g, z| g * act.derivative(z));
        if t.aggregate_first {
            g_thetas[l] = &g_z * t.inner.transpose();
            let g_m = theta.transpose() * &g_z;
            g_s1 += frobenius(&g_m, &t.a1);
            g_s2 += frobenius(&g_m, &t.a2);
            if l > 0 {
                g_f = propagate_adjoint(h, &g_m, s);
            }
        } else {
            g_s1 += frobenius(&g_z, &t.a1);
            g_s2 += frobenius(&g_z, &t.a2);
            let g_u = propagate_adjoint(h, &g_z, s);
            g_thetas[l] = &g_u * t.input.transpose();
            if l > 0 {
                g_f = theta.transpose() * &g_u;
            }
        }
    }
    let (s1, s2) = s;
    Ok((loss, Gradients { thetas: g_thetas, w1: g_s1 * s1 * (1.0 - s1), w2: g_s2 * s2 * (1.0 - s2) }))
}

/// Optimizer and schedule for [`train`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { learning_rate: 1e-3, momentum: 0.9, epochs: 2000 }
    }
}

/// Trained parameters and the loss before every update.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: HgnnParams,
    pub loss_trace: Vec<f64>,
}

/// Full-batch gradient descent with heavy-ball momentum, starting from `init`.
pub fn train(
    h: &HypergraphIncidence,
    features: &DMatrix<f64>,
    labels: &DMatrix<f64>,
    labeled: &[usize],
    init: HgnnParams,
    opt: &OptimizerConfig,
) -> Result<TrainOutput> {
    if labeled.is_empty() {
        return Err(Error::invalid("at least one labeled vertex is required"));
    }
    if !(opt.learning_rate >= 0.0) || !(0.0..1.0).contains(&opt.momentum) {
        return Err(Error::invalid("learning rate must be >= 0 and momentum in [0, 1)"));
    }
    let mut params = init;
    let mut vel_t: Vec<DMatrix<f64>> = params.thetas.iter().map(|t| DMatrix::zeros(t.nrows(), t.ncols())).collect();
    let (mut vel_w1, mut vel_w2) = (0.0, 0.0);
    let mut loss_trace = Vec::with_capacity(opt.epochs);
    for epoch in 0..opt.epochs {
        let (loss, grad) = loss_and_gradients(h, features, labels, labeled, &params)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        loss_trace.push(loss);
        for ((theta, vel), g) in params.thetas.iter_mut().zip(&mut vel_t).zip(&grad.thetas) {
            vel.zip_apply(g, |v, gi| *v = opt.momentum * *v - opt.learning_rate * gi);
            *theta += &*vel;
        }
        vel_w1 = opt.momentum * vel_w1 - opt.learning_rate * grad.w1;
        vel_w2 = opt.momentum * vel_w2 - opt.learning_rate * grad.w2;
        params.w1 += vel_w1;
        params.w2 += vel_w2;
    }
    Ok(TrainOutput { params, loss_trace })
}

/// Forward pass of trained parameters.
pub fn predict(h: &HypergraphIncidence, features: &DMatrix<f64>, params: &HgnnParams) -> Result<DMatrix<f64>> {
    let out = hgnn_forward(h, features, params)?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite prediction".into()));
    }
    Ok(out)
}
