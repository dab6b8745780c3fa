//! Networks as layered tuples of sparse affine maps, their ReLU realization,
//! combination (compose / stack / sum), complexity counting and weight
//! quantization.
//!
//! A weight matrix is stored as sorted `(row, col, value)` triplets with an
//! explicit nonzero discipline: a zero is never stored, so the nonzero-weight
//! count `W` read off the storage is exact.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{ApproxError, Result};
use crate::exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet(pub u32, pub u32, pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<Triplet>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(rows: usize, cols: usize) -> Self {
        Layer {
            rows,
            cols,
            weights: Vec::new(),
            bias: vec![0.0; rows],
        }
    }

    /// Stores `value` at `(row, col)`, skipping exact zeros.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        if value != 0.0 {
            self.weights.push(Triplet(row as u32, col as u32, value));
        }
    }

    pub fn nonzero_bias(&self) -> usize {
        self.bias.iter().filter(|b| **b != 0.0).count()
    }

    pub fn weight_count(&self) -> usize {
        self.weights.len() + self.nonzero_bias()
    }

    fn sort_weights(&mut self) {
        self.weights.sort_unstable_by_key(|t| (t.0, t.1));
    }

    fn validate(&self) -> Result<()> {
        if self.bias.len() != self.rows {
            return Err(ApproxError::DimensionMismatch {
                expected: self.rows,
                got: self.bias.len(),
            });
        }
        for t in &self.weights {
            if t.2 == 0.0 {
                return Err(ApproxError::InvalidSpec("stored zero weight".into()));
            }
            if t.0 as usize >= self.rows || t.1 as usize >= self.cols {
                return Err(ApproxError::InvalidSpec(format!(
                    "triplet ({}, {}) outside shape {}x{}",
                    t.0, t.1, self.rows, self.cols
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input_dim: usize,
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub depth: usize,
    pub neurons: usize,
    pub weights: usize,
    pub max_abs_weight: f64,
    pub quantized_for: Option<(u32, f64)>,
}

impl Network {
    /// Single affine layer `x -> A x + b`.
    pub fn affine(input_dim: usize, layer: Layer) -> Self {
        debug_assert_eq!(layer.cols, input_dim);
        let mut layer = layer;
        layer.sort_weights();
        Network {
            input_dim,
            layers: vec![layer],
        }
    }

    /// 1-layer identity.
    pub fn identity(dim: usize) -> Self {
        let mut l = Layer::new(dim, dim);
        for i in 0..dim {
            l.push(i, i, 1.0);
        }
        Network::affine(dim, l)
    }

    /// Exact identity of the requested depth on `[-shift, inf)^dim`, carried
    /// through the hidden layers as the nonnegative channel `relu(x + shift)`.
    pub fn shifted_identity(dim: usize, depth: usize, shift: f64) -> Self {
        assert!(depth >= 1);
        if depth == 1 {
            return Network::identity(dim);
        }
        let mut layers = Vec::with_capacity(depth);
        let mut first = Layer::new(dim, dim);
        for i in 0..dim {
            first.push(i, i, 1.0);
            first.bias[i] = shift;
        }
        layers.push(first);
        for _ in 0..depth.saturating_sub(2) {
            let mut mid = Layer::new(dim, dim);
            for i in 0..dim {
                mid.push(i, i, 1.0);
            }
            layers.push(mid);
        }
        let mut last = Layer::new(dim, dim);
        for i in 0..dim {
            last.push(i, i, 1.0);
            last.bias[i] = -shift;
        }
        layers.push(last);
        Network {
            input_dim: dim,
            layers,
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.rows).unwrap_or(self.input_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(ApproxError::EmptyList);
        }
        let mut prev = self.input_dim;
        for layer in &self.layers {
            layer.validate()?;
            if layer.cols != prev {
                return Err(ApproxError::DimensionMismatch {
                    expected: prev,
                    got: layer.cols,
                });
            }
            prev = layer.rows;
        }
        Ok(())
    }

    /// The ReLU realization: affine maps with componentwise `max(0, .)`
    /// between them and no activation on the final layer.
    pub fn realize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(ApproxError::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(ApproxError::NonFiniteInput(i));
        }
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut out = layer.bias.clone();
            for &Triplet(r, c, v) in &layer.weights {
                out[r as usize] += v * cur[c as usize];
            }
            if idx < last {
                for o in out.iter_mut() {
                    if *o < 0.0 {
                        *o = 0.0;
                    }
                }
            }
            cur = out;
        }
        Ok(cur)
    }

    /// Batch evaluation, data-parallel over the input points.
    pub fn realize_batch(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let outs = exec::map_indexed(points.len(), |i| self.realize(&points[i]));
        outs.into_iter().collect()
    }

    pub fn complexity(&self) -> ComplexityReport {
        let mut weights = 0usize;
        let mut max_abs = 0.0f64;
        let mut neurons = self.input_dim;
        for layer in &self.layers {
            neurons += layer.rows;
            weights += layer.weight_count();
            for t in &layer.weights {
                max_abs = max_abs.max(t.2.abs());
            }
            for b in &layer.bias {
                if *b != 0.0 {
                    max_abs = max_abs.max(b.abs());
                }
            }
        }
        ComplexityReport {
            depth: self.layers.len(),
            neurons,
            weights,
            max_abs_weight: max_abs,
            quantized_for: None,
        }
    }
}

/// Row-indexed view of a layer's matrix for sparse products.
struct RowIndex {
    starts: Vec<usize>,
    entries: Vec<(u32, f64)>,
}

impl RowIndex {
    fn build(layer: &Layer) -> Self {
        let mut sorted: Vec<&Triplet> = layer.weights.iter().collect();
        sorted.sort_unstable_by_key(|t| (t.0, t.1));
        let mut starts = vec![0usize; layer.rows + 1];
        let mut entries = Vec::with_capacity(sorted.len());
        for t in &sorted {
            starts[t.0 as usize + 1] += 1;
            entries.push((t.1, t.2));
        }
        for i in 0..layer.rows {
            starts[i + 1] += starts[i];
        }
        RowIndex { starts, entries }
    }

    fn row(&self, r: usize) -> &[(u32, f64)] {
        &self.entries[self.starts[r]..self.starts[r + 1]]
    }
}

/// Merges two adjacent affine maps into their product: `(A2, b2) . (A1, b1)`
/// becomes `(A2 A1, A2 b1 + b2)`.
fn merge_affine(second: &Layer, first: &Layer) -> Layer {
    debug_assert_eq!(second.cols, first.rows);
    let idx = RowIndex::build(first);
    let mut out = Layer::new(second.rows, first.cols);
    out.bias = second.bias.clone();
    // Accumulate per output row to drop exact cancellations.
    let mut by_row: Vec<Vec<(u32, f64)>> = vec![Vec::new(); second.rows];
    for &Triplet(r, c, v) in &second.weights {
        by_row[r as usize].push((c, v));
        out.bias[r as usize] += v * first.bias[c as usize];
    }
    for (r, row) in by_row.into_iter().enumerate() {
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for (c, v) in row {
            for &(c2, v2) in idx.row(c as usize) {
                *acc.entry(c2).or_insert(0.0) += v * v2;
            }
        }
        let mut cols: Vec<(u32, f64)> = acc.into_iter().filter(|(_, v)| *v != 0.0).collect();
        cols.sort_unstable_by_key(|(c, _)| *c);
        for (c, v) in cols {
            out.weights.push(Triplet(r as u32, c, v));
        }
    }
    out
}

/// Composition `outer . inner` with the gluing convention that merges
/// inner's output affine map into outer's first affine map, so that
/// `L = L(inner) + L(outer) - 1`.
pub fn compose(outer: &Network, inner: &Network) -> Result<Network> {
    if inner.output_dim() != outer.input_dim {
        return Err(ApproxError::DimensionMismatch {
            expected: outer.input_dim,
            got: inner.output_dim(),
        });
    }
    let merged = merge_affine(&outer.layers[0], inner.layers.last().unwrap());
    let mut layers = Vec::with_capacity(inner.layers.len() + outer.layers.len() - 1);
    layers.extend_from_slice(&inner.layers[..inner.layers.len() - 1]);
    layers.push(merged);
    layers.extend_from_slice(&outer.layers[1..]);
    Ok(Network {
        input_dim: inner.input_dim,
        layers,
    })
}

/// Extends `net` to exactly `depth` layers without changing its realization.
///
/// With `output_lower_bound = Some(m)` the caller asserts every output is
/// at least -m on the inputs of interest; the outputs are then carried through
/// the extra layers as single nonnegative channels `relu(y + m)`. Otherwise
/// each output channel is doubled into `(relu(y), relu(-y))` and recombined,
/// which is exact for all inputs.
pub fn extend_to_depth(net: &Network, depth: usize, output_lower_bound: Option<f64>) -> Network {
    let cur = net.depth();
    assert!(depth >= cur);
    if depth == cur {
        return net.clone();
    }
    let k = net.output_dim();
    let mut layers: Vec<Layer> = net.layers[..cur - 1].to_vec();
    let old_last = net.layers.last().unwrap();
    match output_lower_bound {
        Some(shift) => {
            let mut lifted = old_last.clone();
            for b in lifted.bias.iter_mut() {
                *b += shift;
            }
            layers.push(lifted);
            for _ in 0..depth - cur - 1 {
                let mut mid = Layer::new(k, k);
                for i in 0..k {
                    mid.push(i, i, 1.0);
                }
                layers.push(mid);
            }
            let mut last = Layer::new(k, k);
            for i in 0..k {
                last.push(i, i, 1.0);
                last.bias[i] = -shift;
            }
            layers.push(last);
        }
        None => {
            // x = relu(x) - relu(-x)
            let mut doubled = Layer::new(2 * k, old_last.cols);
            for &Triplet(r, c, v) in &old_last.weights {
                doubled.push(r as usize, c as usize, v);
                doubled.push(r as usize + k, c as usize, -v);
            }
            for i in 0..k {
                doubled.bias[i] = old_last.bias[i];
                doubled.bias[i + k] = -old_last.bias[i];
            }
            layers.push(doubled);
            for _ in 0..depth - cur - 1 {
                let mut mid = Layer::new(2 * k, 2 * k);
                for i in 0..2 * k {
                    mid.push(i, i, 1.0);
                }
                layers.push(mid);
            }
            let mut last = Layer::new(k, 2 * k);
            for i in 0..k {
                last.push(i, i, 1.0);
                last.push(i, i + k, -1.0);
            }
            layers.push(last);
        }
    }
    Network {
        input_dim: net.input_dim,
        layers,
    }
}

/// Stacks equal-depth networks side by side. `maps[i][j]` names the global
/// input column feeding local input `j` of net `i`; outputs are concatenated.
pub fn stack_with_maps(
    nets: Vec<Network>,
    total_input: usize,
    maps: &[Vec<usize>],
) -> Result<Network> {
    if nets.is_empty() {
        return Err(ApproxError::EmptyList);
    }
    let depth = nets[0].depth();
    for (n, m) in nets.iter().zip(maps) {
        if n.depth() != depth {
            return Err(ApproxError::DimensionMismatch {
                expected: depth,
                got: n.depth(),
            });
        }
        if m.len() != n.input_dim {
            return Err(ApproxError::DimensionMismatch {
                expected: n.input_dim,
                got: m.len(),
            });
        }
    }
    let mut layers: Vec<Layer> = Vec::with_capacity(depth);
    for l in 0..depth {
        let rows: usize = nets.iter().map(|n| n.layers[l].rows).sum();
        let cols = if l == 0 {
            total_input
        } else {
            nets.iter().map(|n| n.layers[l - 1].rows).sum()
        };
        let nnz: usize = nets.iter().map(|n| n.layers[l].weights.len()).sum();
        let mut layer = Layer::new(rows, cols);
        layer.weights.reserve_exact(nnz);
        layers.push(layer);
    }
    let mut row_off = vec![0usize; depth];
    let mut col_off = vec![0usize; depth]; // for l >= 1
    for (i, net) in nets.into_iter().enumerate() {
        for (l, src) in net.layers.into_iter().enumerate() {
            let dst = &mut layers[l];
            for Triplet(r, c, v) in src.weights {
                let gc = if l == 0 {
                    maps[i][c as usize]
                } else {
                    col_off[l] + c as usize
                };
                dst.weights
                    .push(Triplet((row_off[l] + r as usize) as u32, gc as u32, v));
            }
            for (r, b) in src.bias.into_iter().enumerate() {
                dst.bias[row_off[l] + r] = b;
            }
            row_off[l] += src.rows;
            if l >= 1 {
                col_off[l] += src.cols;
            }
        }
    }
    for l in layers.iter_mut() {
        l.sort_weights();
    }
    Ok(Network {
        input_dim: total_input,
        layers,
    })
}

/// Block-diagonal stacking with depth padding; with `shared_input` all nets
/// read the same input columns, otherwise inputs are concatenated.
pub fn parallelize(nets: Vec<Network>, shared_input: bool) -> Result<Network> {
    if nets.is_empty() {
        return Err(ApproxError::EmptyList);
    }
    if shared_input {
        let d = nets[0].input_dim;
        for n in &nets {
            if n.input_dim != d {
                return Err(ApproxError::DimensionMismatch {
                    expected: d,
                    got: n.input_dim,
                });
            }
        }
    }
    let depth = nets.iter().map(|n| n.depth()).max().unwrap();
    let padded: Vec<Network> = nets
        .iter()
        .map(|n| extend_to_depth(n, depth, None))
        .collect();
    let mut maps = Vec::with_capacity(padded.len());
    let mut off = 0usize;
    for n in &padded {
        if shared_input {
            maps.push((0..n.input_dim).collect());
        } else {
            maps.push((off..off + n.input_dim).collect());
            off += n.input_dim;
        }
    }
    let total = if shared_input {
        padded[0].input_dim
    } else {
        off
    };
    stack_with_maps(padded, total, &maps)
}

/// Replaces the final layer by the affine combination `c . (A_L x + b_L)`,
/// leaving the depth unchanged and making the output 1-dimensional.
pub fn sum_outputs(net: &Network, coefficients: &[f64]) -> Result<Network> {
    let k = net.output_dim();
    if coefficients.len() != k {
        return Err(ApproxError::DimensionMismatch {
            expected: k,
            got: coefficients.len(),
        });
    }
    let old = net.layers.last().unwrap();
    let mut acc: HashMap<u32, f64> = HashMap::new();
    let mut bias = 0.0;
    for &Triplet(r, c, v) in &old.weights {
        *acc.entry(c).or_insert(0.0) += coefficients[r as usize] * v;
    }
    for (r, b) in old.bias.iter().enumerate() {
        bias += coefficients[r] * b;
    }
    let mut layer = Layer::new(1, old.cols);
    layer.bias[0] = bias;
    let mut cols: Vec<(u32, f64)> = acc.into_iter().filter(|(_, v)| *v != 0.0).collect();
    cols.sort_unstable_by_key(|(c, _)| *c);
    for (c, v) in cols {
        layer.weights.push(Triplet(0, c, v));
    }
    let mut layers = net.layers[..net.layers.len() - 1].to_vec();
    layers.push(layer);
    Ok(Network {
        input_dim: net.input_dim,
        layers,
    })
}

/// Grid exponent of the (s, eps)-quantization lattice `2^{-s ceil(log2(1/eps))} Z`.
fn grid_exponent(s: u32, eps: f64) -> i32 {
    let t = (1.0 / eps).log2();
    s as i32 * (t - 1e-9).ceil() as i32
}

/// Rounds every weight to the nearest lattice point of the
/// `(s, eps)`-quantization grid, clamped to `[-eps^{-s}, eps^{-s}]`.
pub fn quantize(net: &Network, s: u32, eps: f64) -> Result<Network> {
    assert!(s >= 1 && eps > 0.0 && eps < 0.5);
    let limit = eps.powi(-(s as i32));
    let e = grid_exponent(s, eps);
    let scale = 2f64.powi(e);
    let grid_limit = (limit * scale).floor() / scale;
    let round = |w: f64| -> f64 {
        let q = (w * scale).round() / scale;
        q.clamp(-grid_limit, grid_limit)
    };
    let mut layers = Vec::with_capacity(net.layers.len());
    for (li, layer) in net.layers.iter().enumerate() {
        let mut out = Layer::new(layer.rows, layer.cols);
        for &Triplet(r, c, v) in &layer.weights {
            if v.abs() > limit * (1.0 + 1e-12) {
                return Err(ApproxError::QuantizeRange {
                    layer: li,
                    value: v,
                    limit,
                });
            }
            out.push(r as usize, c as usize, round(v));
        }
        for (r, b) in layer.bias.iter().enumerate() {
            if b.abs() > limit * (1.0 + 1e-12) {
                return Err(ApproxError::QuantizeRange {
                    layer: li,
                    value: *b,
                    limit,
                });
            }
            out.bias[r] = round(*b);
        }
        out.sort_weights();
        layers.push(out);
    }
    Ok(Network {
        input_dim: net.input_dim,
        layers,
    })
}

/// Exact-grid membership test for (s, eps)-quantization, with 1e-9 absolute
/// slack after scaling by the power-of-two grid spacing.
pub fn is_quantized(net: &Network, s: u32, eps: f64) -> bool {
    let limit = eps.powi(-(s as i32));
    let e = grid_exponent(s, eps);
    let scale = 2f64.powi(e);
    let on_grid = |w: f64| -> bool {
        if w.abs() > limit * (1.0 + 1e-12) {
            return false;
        }
        let t = w * scale;
        (t - t.round()).abs() <= 1e-9
    };
    net.layers.iter().all(|layer| {
        layer.weights.iter().all(|t| on_grid(t.2)) && layer.bias.iter().all(|b| on_grid(*b))
    })
}

pub fn to_json_string(net: &Network) -> Result<String> {
    Ok(serde_json::to_string(net)?)
}

/// Loads and validates a network from its JSON form.
pub fn from_json_str(s: &str) -> Result<Network> {
    let net: Network = serde_json::from_str(s)?;
    net.validate()?;
    Ok(net)
}
