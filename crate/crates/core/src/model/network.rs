//! Point-set classifier: optional EdgeConv layers, a shared per-point MLP,
//! a symmetric max-pool and a small MLP head ending in a sigmoid.
//!
//! All layers use ReLU. Gradients flow through max operations to the
//! arg-max element only, with ties resolved to the lowest point index.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::features::{select_features, FeatureSet};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    /// Output widths of the EdgeConv layers; empty disables them.
    pub edge_widths: Vec<usize>,
    /// Shared per-point MLP widths; the last one is the pooled width.
    pub point_widths: Vec<usize>,
    /// Hidden widths of the head; a final 1-unit layer is always added.
    pub head_widths: Vec<usize>,
    pub k_neighbors: usize,
    /// Coordinates are divided by this before the first layer.
    pub coord_scale_mm: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            edge_widths: Vec::new(),
            point_widths: vec![64, 128, 256],
            head_widths: vec![64],
            k_neighbors: 10,
            coord_scale_mm: 16.0,
        }
    }
}

impl ArchConfig {
    /// Default widths with two EdgeConv layers in front.
    pub fn dgcnn() -> Self {
        Self {
            edge_widths: vec![64, 64],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.point_widths.is_empty() {
            return bad("point_widths must not be empty");
        }
        let widths = self
            .edge_widths
            .iter()
            .chain(&self.point_widths)
            .chain(&self.head_widths);
        if widths.clone().any(|&w| w == 0) {
            return bad("layer widths must be positive");
        }
        if !self.edge_widths.is_empty() && self.k_neighbors == 0 {
            return bad("k_neighbors must be positive");
        }
        if !(self.coord_scale_mm > 0.0 && self.coord_scale_mm.is_finite()) {
            return bad("coord_scale_mm must be positive");
        }
        Ok(())
    }
}

/// Fully connected layer, `y = x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }

    fn he<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, gain: f64, rng: &mut R) -> Self {
        let std = gain * (2.0 / fan_in as f64).sqrt();
        let n = Normal::new(0.0, std).expect("finite std");
        Self {
            w: Array2::from_shape_fn((fan_in, fan_out), |_| n.sample(rng)),
            b: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub feature_set: FeatureSet,
    pub arch: ArchConfig,
    pub edge: Vec<Dense>,
    pub point: Vec<Dense>,
    pub head: Vec<Dense>,
}

impl ModelWeights {
    pub fn zeros(feature_set: FeatureSet, arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        let mut d = feature_set.input_dim();
        let mut edge = Vec::new();
        for &w in &arch.edge_widths {
            edge.push(Dense::zeros(2 * d, w));
            d = w;
        }
        let mut point = Vec::new();
        for &w in &arch.point_widths {
            point.push(Dense::zeros(d, w));
            d = w;
        }
        let mut head = Vec::new();
        for &w in arch.head_widths.iter().chain(std::iter::once(&1)) {
            head.push(Dense::zeros(d, w));
            d = w;
        }
        Ok(Self {
            feature_set,
            arch: arch.clone(),
            edge,
            point,
            head,
        })
    }

    /// He-normal weights, zero biases; the output layer is scaled down.
    pub fn init<R: Rng + ?Sized>(feature_set: FeatureSet, arch: &ArchConfig, rng: &mut R) -> Result<Self> {
        let mut w = Self::zeros(feature_set, arch)?;
        let n_head = w.head.len();
        for layer in w.edge.iter_mut().chain(w.point.iter_mut()) {
            *layer = Dense::he(layer.fan_in(), layer.fan_out(), 1.0, rng);
        }
        for (i, layer) in w.head.iter_mut().enumerate() {
            let gain = if i + 1 == n_head { 0.1 } else { 1.0 };
            *layer = Dense::he(layer.fan_in(), layer.fan_out(), gain, rng);
        }
        Ok(w)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.feature_set, &self.arch).expect("validated on construction")
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.edge.iter().chain(&self.point).chain(&self.head)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.edge
            .iter_mut()
            .chain(self.point.iter_mut())
            .chain(self.head.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// All parameters in a fixed order: per layer, `W` row-major then `b`.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut it = values.iter();
        for l in self.layers_mut() {
            l.w.iter_mut().chain(l.b.iter_mut()).for_each(|p| *p = *it.next().unwrap());
        }
        Ok(())
    }

    /// Arrays in serialization order.
    pub(crate) fn arrays(&self) -> Vec<(&[usize], &[f64])> {
        let mut out: Vec<(&[usize], &[f64])> = Vec::new();
        for l in self.layers() {
            out.push((l.w.shape(), l.w.as_slice().expect("standard layout")));
            out.push((l.b.shape(), l.b.as_slice().expect("standard layout")));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a clamped probability.
pub fn loss(prob: f64, label: u8) -> f64 {
    let p = prob.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if label != 0 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Exact k nearest neighbours (excluding the point itself) of every row,
/// by squared Euclidean distance with ties to the lower index. Returns a
/// flat `m x k` index table, each row sorted nearest first.
pub fn knn_indices(x: ArrayView2<f64>, k: usize) -> Result<Vec<usize>> {
    let (m, d) = x.dim();
    if m < k + 1 {
        return Err(Error::TooFewPoints { needed: k + 1, got: m });
    }
    let x = x.as_standard_layout();
    let data = x.as_slice().expect("standard layout");
    let mut out = Vec::with_capacity(m * k);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(m - 1);
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    for i in 0..m {
        let xi = &data[i * d..(i + 1) * d];
        cand.clear();
        for j in (0..m).filter(|&j| j != i) {
            let xj = &data[j * d..(j + 1) * d];
            let mut d2 = 0.0;
            for c in 0..d {
                let t = xi[c] - xj[c];
                d2 += t * t;
            }
            cand.push((d2, j));
        }
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, cmp);
        }
        let head = &mut cand[..k];
        head.sort_unstable_by(cmp);
        out.extend(head.iter().map(|&(_, j)| j));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct EdgeTrace {
    input: Array2<f64>,
    /// Chosen neighbour per (point, channel).
    argmax: Array2<usize>,
    output: Array2<f64>,
    neighbors: Vec<usize>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    edge: Vec<EdgeTrace>,
    /// Inputs to each point layer followed by the final point features.
    point_acts: Vec<Array2<f64>>,
    pool_arg: Vec<usize>,
    /// Inputs to each head layer.
    head_acts: Vec<Array1<f64>>,
    pub logit: f64,
    pub prob: f64,
}

impl Trace {
    /// Neighbour table of EdgeConv layer `layer` (flat, `m x k`).
    pub fn neighbors(&self, layer: usize) -> &[usize] {
        &self.edge[layer].neighbors
    }

    /// Output of EdgeConv layer `layer`.
    pub fn edge_output(&self, layer: usize) -> &Array2<f64> {
        &self.edge[layer].output
    }

    /// Max-pooled global feature.
    pub fn pooled(&self) -> &Array1<f64> {
        &self.head_acts[0]
    }
}

fn scale_input(features: &Array2<f64>, w: &ModelWeights) -> Result<Array2<f64>> {
    let d = w.feature_set.input_dim();
    if features.ncols() != d {
        return Err(Error::ShapeMismatch(format!(
            "{} input columns for feature set {} (needs {d})",
            features.ncols(),
            w.feature_set
        )));
    }
    if features.nrows() == 0 {
        return Err(Error::EmptyCloud);
    }
    let mut x = features.to_owned();
    if w.feature_set.has_xyz() {
        x.slice_mut(s![.., 0..3]).mapv_inplace(|v| v / w.arch.coord_scale_mm);
    }
    Ok(x)
}

/// EdgeConv: `h_i = max_{j in kNN(i)} relu(W [f_i, f_j - f_i] + b)`.
///
/// Splitting `W = [Wa; Wb]` gives `A_i + B_j` with `A = F (Wa - Wb) + b` and
/// `B = F Wb`, so the max over neighbours only needs `max_j B_j` per channel.
fn edge_forward(x: Array2<f64>, layer: &Dense, k: usize) -> Result<EdgeTrace> {
    let (m, d) = x.dim();
    let wa = layer.w.slice(s![..d, ..]);
    let wb = layer.w.slice(s![d.., ..]);
    let neighbors = knn_indices(x.view(), k)?;
    let a = x.dot(&(&wa - &wb)) + &layer.b;
    let b = x.dot(&wb);
    let out_w = layer.fan_out();
    let mut argmax = Array2::zeros((m, out_w));
    let mut output = Array2::zeros((m, out_w));
    for i in 0..m {
        let nb = &neighbors[i * k..(i + 1) * k];
        for c in 0..out_w {
            let mut best_j = nb[0];
            let mut best = b[[best_j, c]];
            for &j in &nb[1..] {
                let v = b[[j, c]];
                if v > best || (v == best && j < best_j) {
                    best = v;
                    best_j = j;
                }
            }
            argmax[[i, c]] = best_j;
            output[[i, c]] = (a[[i, c]] + best).max(0.0);
        }
    }
    Ok(EdgeTrace {
        input: x,
        argmax,
        output,
        neighbors,
    })
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

/// Forward pass keeping every intermediate needed by [`backward`].
pub fn forward_trace(features: &Array2<f64>, w: &ModelWeights) -> Result<Trace> {
    let mut h = scale_input(features, w)?;
    let mut edge = Vec::with_capacity(w.edge.len());
    for layer in &w.edge {
        let t = edge_forward(h, layer, w.arch.k_neighbors)?;
        h = t.output.clone();
        edge.push(t);
    }
    let mut point_acts = Vec::with_capacity(w.point.len() + 1);
    for layer in &w.point {
        let mut next = h.dot(&layer.w) + &layer.b;
        relu_inplace(&mut next);
        point_acts.push(std::mem::replace(&mut h, next));
    }
    let width = h.ncols();
    let mut pool_arg = vec![0usize; width];
    let mut pooled = Array1::zeros(width);
    for c in 0..width {
        let col = h.column(c);
        let mut best = col[0];
        let mut arg = 0;
        for (i, &v) in col.iter().enumerate().skip(1) {
            if v > best {
                best = v;
                arg = i;
            }
        }
        pool_arg[c] = arg;
        pooled[c] = best;
    }
    point_acts.push(h);
    let mut head_acts = Vec::with_capacity(w.head.len());
    let mut g = pooled;
    let last = w.head.len() - 1;
    for (i, layer) in w.head.iter().enumerate() {
        let mut next = g.dot(&layer.w) + &layer.b;
        if i < last {
            next.mapv_inplace(|v| v.max(0.0));
        }
        head_acts.push(std::mem::replace(&mut g, next));
    }
    let logit = g[0];
    let prob = sigmoid(logit).clamp(PROB_EPS, 1.0 - PROB_EPS);
    Ok(Trace {
        edge,
        point_acts,
        pool_arg,
        head_acts,
        logit,
        prob,
    })
}

/// Classifier probability, always inside `(0, 1)`.
pub fn forward(features: &Array2<f64>, w: &ModelWeights) -> Result<f64> {
    Ok(forward_trace(features, w)?.prob)
}

pub fn predict(pc: &PointCloud, w: &ModelWeights) -> Result<f64> {
    forward(&select_features(pc, w.feature_set), w)
}

/// Standalone EdgeConv layer on raw features (no input scaling).
pub fn edgeconv_layer(features: &Array2<f64>, layer: &Dense, k: usize) -> Result<Array2<f64>> {
    if layer.fan_in() != 2 * features.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "edge layer expects {} inputs, features have {} columns",
            layer.fan_in() / 2,
            features.ncols()
        )));
    }
    Ok(edge_forward(features.to_owned(), layer, k)?.output)
}

/// Loss and exact gradients for one sample.
pub fn backward(features: &Array2<f64>, label: u8, w: &ModelWeights) -> Result<(f64, ModelWeights)> {
    let mut grads = w.zeros_like();
    let l = accumulate_gradients(features, label, w, &mut grads)?;
    Ok((l, grads))
}

/// Adds this sample's gradients into `grads`; returns the loss.
pub fn accumulate_gradients(
    features: &Array2<f64>,
    label: u8,
    w: &ModelWeights,
    grads: &mut ModelWeights,
) -> Result<f64> {
    let t = forward_trace(features, w)?;
    let y = if label != 0 { 1.0 } else { 0.0 };
    let loss_val = loss(t.prob, label);
    // The clamp flattens the loss, so saturated outputs carry no gradient.
    let raw = sigmoid(t.logit);
    let dz = if raw <= PROB_EPS || raw >= 1.0 - PROB_EPS {
        0.0
    } else {
        raw - y
    };

    // Head.
    let mut dh = Array1::from_elem(1, dz);
    for (i, layer) in w.head.iter().enumerate().rev() {
        let input = &t.head_acts[i];
        let gl = &mut grads.head[i];
        for r in 0..input.len() {
            let xr = input[r];
            if xr != 0.0 {
                gl.w.row_mut(r).scaled_add(xr, &dh);
            }
        }
        gl.b += &dh;
        let mut dx = layer.w.dot(&dh);
        if i > 0 {
            // Input of head layer i is relu output of layer i - 1.
            dx.zip_mut_with(input, |g, &a| {
                if a <= 0.0 {
                    *g = 0.0
                }
            });
        }
        dh = dx;
    }

    // Max-pool routes to the arg-max point per channel.
    let n_point = w.point.len();
    let final_feats = &t.point_acts[n_point];
    let mut d_h = Array2::zeros(final_feats.dim());
    for (c, &arg) in t.pool_arg.iter().enumerate() {
        d_h[[arg, c]] = dh[c];
    }

    // Shared point MLP (ReLU after every layer).
    for i in (0..n_point).rev() {
        let out = &t.point_acts[i + 1];
        d_h.zip_mut_with(out, |g, &a| {
            if a <= 0.0 {
                *g = 0.0
            }
        });
        let input = &t.point_acts[i];
        let gl = &mut grads.point[i];
        gl.w += &input.t().dot(&d_h);
        gl.b += &d_h.sum_axis(Axis(0));
        if i > 0 || !w.edge.is_empty() {
            d_h = d_h.dot(&w.point[i].w.t());
        }
    }

    // EdgeConv layers.
    for i in (0..w.edge.len()).rev() {
        let et = &t.edge[i];
        let layer = &w.edge[i];
        let d = et.input.ncols();
        let mut da = d_h;
        da.zip_mut_with(&et.output, |g, &a| {
            if a <= 0.0 {
                *g = 0.0
            }
        });
        let mut db = Array2::zeros(da.dim());
        for ((pi, c), &j) in et.argmax.indexed_iter() {
            db[[j, c]] += da[[pi, c]];
        }
        let xt = et.input.t();
        let gwa = xt.dot(&da);
        let gwb = xt.dot(&db) - &gwa;
        let gl = &mut grads.edge[i];
        {
            let mut top = gl.w.slice_mut(s![..d, ..]);
            top += &gwa;
        }
        {
            let mut bottom = gl.w.slice_mut(s![d.., ..]);
            bottom += &gwb;
        }
        gl.b += &da.sum_axis(Axis(0));
        if i > 0 {
            let wa = layer.w.slice(s![..d, ..]);
            let wb = layer.w.slice(s![d.., ..]);
            d_h = da.dot(&(&wa - &wb).t()) + db.dot(&wb.t());
        } else {
            d_h = Array2::zeros((0, 0));
        }
    }
    Ok(loss_val)
}
