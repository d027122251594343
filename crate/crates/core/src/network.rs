//! Fully connected MLP architectures and their forward map.
//!
//! Network parameters live in one flat slice, layer by layer: the weight
//! matrix of a layer (row-major, one row per receiving node) followed by its
//! bias vector. Hidden layers apply the activation; the output layer is
//! linear.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

/// Offsets of one weighted layer inside the flat network parameter block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerShape {
    /// Index of weight `w[node][input]` in the flat block.
    #[inline]
    pub fn weight_index(&self, node: usize, input: usize) -> usize {
        self.weight_offset + node * self.inputs + input
    }

    pub fn end(&self) -> usize {
        self.bias_offset + self.outputs
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    input_size: usize,
    hidden: Vec<usize>,
    activation: Activation,
}

impl Architecture {
    pub const OUTPUT_SIZE: usize = 1;

    pub fn new(input_size: usize, hidden: Vec<usize>, activation: Activation) -> Result<Self> {
        if input_size == 0 || hidden.contains(&0) {
            return Err(Error::Invalid(format!(
                "layer sizes must be positive (input {input_size}, hidden {hidden:?})"
            )));
        }
        Ok(Self {
            input_size,
            hidden,
            activation,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// `[l_0, l_1, ..., l_L]`, input through output.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(self.input_size);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(Self::OUTPUT_SIZE);
        sizes
    }

    /// Number of weighted layers, hidden plus output.
    pub fn n_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let sizes = self.layer_sizes();
        let mut offset = 0;
        sizes
            .windows(2)
            .map(|w| {
                let shape = LayerShape {
                    inputs: w[0],
                    outputs: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset = shape.end();
                shape
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        param_count(self)
    }

    fn widest(&self) -> usize {
        self.hidden.iter().copied().max().unwrap_or(0).max(Self::OUTPUT_SIZE)
    }

    /// Scalar prediction for one input row.
    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<f64> {
        Evaluator::new(self).forward(params, x)
    }

    /// Predictions for a row-major batch of inputs.
    pub fn forward_batch(&self, params: &[f64], xs: &[f64]) -> Result<Vec<f64>> {
        if !xs.len().is_multiple_of(self.input_size) {
            return Err(Error::Dimension {
                expected: self.input_size,
                got: xs.len() % self.input_size,
            });
        }
        let mut eval = Evaluator::new(self);
        xs.chunks_exact(self.input_size)
            .map(|row| eval.forward(params, row))
            .collect()
    }
}

/// `sum over layers of l_{j-1} * l_j + l_j`, output layer included.
pub fn param_count(arch: &Architecture) -> usize {
    arch.layer_sizes().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Reusable scratch space for repeated forward passes.
pub struct Evaluator<'a> {
    arch: &'a Architecture,
    layers: Vec<LayerShape>,
    current: Vec<f64>,
    next: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(arch: &'a Architecture) -> Self {
        let width = arch.widest();
        Self {
            arch,
            layers: arch.layers(),
            current: vec![0.0; width],
            next: vec![0.0; width],
        }
    }

    pub fn forward(&mut self, params: &[f64], x: &[f64]) -> Result<f64> {
        self.check_shapes(params, x)?;
        let out = self.eval_unchecked(params, x);
        if out.is_finite() {
            return Ok(out);
        }
        Err(Error::NonFinite {
            layer: self.first_non_finite_layer(params, x),
        })
    }

    fn check_shapes(&self, params: &[f64], x: &[f64]) -> Result<()> {
        let n_params = self.layers.last().map_or(0, LayerShape::end);
        if params.len() != n_params {
            return Err(Error::Dimension {
                expected: n_params,
                got: params.len(),
            });
        }
        if x.len() != self.arch.input_size {
            return Err(Error::Dimension {
                expected: self.arch.input_size,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Forward pass without shape or finiteness checks. Callers must pass a
    /// parameter block of length `param_count` and an input row of length
    /// `input_size`.
    #[inline]
    pub fn eval_unchecked(&mut self, params: &[f64], x: &[f64]) -> f64 {
        let activation = self.arch.activation;
        let last = self.layers.len() - 1;
        for (l, shape) in self.layers.iter().enumerate() {
            let input: &[f64] = if l == 0 { x } else { &self.current[..shape.inputs] };
            for node in 0..shape.outputs {
                let row = &params[shape.weight_index(node, 0)..shape.weight_index(node, 0) + shape.inputs];
                let mut acc = params[shape.bias_offset + node];
                for (w, z) in row.iter().zip(input) {
                    acc += w * z;
                }
                self.next[node] = if l == last { acc } else { activation.apply(acc) };
            }
            std::mem::swap(&mut self.current, &mut self.next);
        }
        self.current[0]
    }

    fn first_non_finite_layer(&mut self, params: &[f64], x: &[f64]) -> usize {
        let activation = self.arch.activation;
        let last = self.layers.len() - 1;
        let mut values = x.to_vec();
        for (l, shape) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; shape.outputs];
            for (node, o) in out.iter_mut().enumerate() {
                let mut acc = params[shape.bias_offset + node];
                for (k, z) in values.iter().enumerate() {
                    acc += params[shape.weight_index(node, k)] * z;
                }
                *o = if l == last { acc } else { activation.apply(acc) };
            }
            if out.iter().any(|v| !v.is_finite()) {
                return l + 1;
            }
            values = out;
        }
        self.layers.len()
    }
}

/// Inputs stored feature-major, so that a layer can be applied to every row
/// at once.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchInputs {
    n_rows: usize,
    n_features: usize,
    columns: Vec<f64>,
}

impl BatchInputs {
    /// From row-major `xs` with `n_features` values per row.
    pub fn from_rows(xs: &[f64], n_features: usize) -> Result<Self> {
        if n_features == 0 || !xs.len().is_multiple_of(n_features) {
            return Err(Error::Dimension {
                expected: n_features,
                got: xs.len(),
            });
        }
        let n_rows = xs.len() / n_features;
        let mut columns = vec![0.0; xs.len()];
        for (i, row) in xs.chunks_exact(n_features).enumerate() {
            for (j, v) in row.iter().enumerate() {
                columns[j * n_rows + i] = *v;
            }
        }
        Ok(Self {
            n_rows,
            n_features,
            columns,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    fn column(&self, j: usize) -> &[f64] {
        &self.columns[j * self.n_rows..(j + 1) * self.n_rows]
    }
}

impl Architecture {
    /// Predictions for every row of `inputs`, written to `out`. Each row sees
    /// the same sequence of floating-point operations as
    /// [`Evaluator::eval_unchecked`], so results agree bit for bit.
    pub fn forward_columns(&self, params: &[f64], inputs: &BatchInputs, out: &mut Vec<f64>) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        if inputs.n_features != self.input_size {
            return Err(Error::Dimension {
                expected: self.input_size,
                got: inputs.n_features,
            });
        }
        let n = inputs.n_rows;
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut current = vec![0.0; self.widest() * n];
        let mut next = vec![0.0; self.widest() * n];
        for (l, shape) in layers.iter().enumerate() {
            for node in 0..shape.outputs {
                let acc = &mut next[node * n..(node + 1) * n];
                acc.fill(params[shape.bias_offset + node]);
                for k in 0..shape.inputs {
                    let w = params[shape.weight_index(node, k)];
                    let z = if l == 0 {
                        inputs.column(k)
                    } else {
                        &current[k * n..(k + 1) * n]
                    };
                    for (a, zi) in acc.iter_mut().zip(z) {
                        *a += w * zi;
                    }
                }
                if l != last {
                    for a in acc.iter_mut() {
                        *a = self.activation.apply(*a);
                    }
                }
            }
            std::mem::swap(&mut current, &mut next);
        }
        out.clear();
        out.extend_from_slice(&current[..n]);
        Ok(())
    }
}

/// Owned network parameters in the flat layout, with per-layer accessors.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layers: Vec<LayerShape>,
    values: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(arch: &Architecture) -> Self {
        Self {
            layers: arch.layers(),
            values: vec![0.0; arch.param_count()],
        }
    }

    pub fn from_flat(arch: &Architecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.param_count() {
            return Err(Error::Dimension {
                expected: arch.param_count(),
                got: values.len(),
            });
        }
        Ok(Self {
            layers: arch.layers(),
            values,
        })
    }

    /// `layer` is 1-based: layer 1 receives the inputs.
    pub fn weight_mut(&mut self, layer: usize, node: usize, input: usize) -> &mut f64 {
        let idx = self.layers[layer - 1].weight_index(node, input);
        &mut self.values[idx]
    }

    pub fn bias_mut(&mut self, layer: usize, node: usize) -> &mut f64 {
        let idx = self.layers[layer - 1].bias_offset + node;
        &mut self.values[idx]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arch(hidden: &[usize], act: Activation) -> Architecture {
        Architecture::new(13, hidden.to_vec(), act).unwrap()
    }

    #[test]
    fn param_counts_match_known_dimensions() {
        assert_eq!(param_count(&arch(&[2], Activation::Tanh)), 31);
        assert_eq!(param_count(&arch(&[4, 4], Activation::Tanh)), 81);
        assert_eq!(param_count(&arch(&[], Activation::Tanh)), 14);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let a = arch(&[4, 2], Activation::Tanh);
        let p = NetworkParams::zeros(&a);
        let x: Vec<f64> = (0..13).map(|i| i as f64 - 6.0).collect();
        assert_eq!(a.forward(p.as_slice(), &x).unwrap(), 0.0);
    }

    #[test]
    fn linear_projection() {
        let a = arch(&[], Activation::Tanh);
        let mut p = NetworkParams::zeros(&a);
        *p.weight_mut(1, 0, 0) = 1.0;
        let x: Vec<f64> = (0..13).map(|i| 0.5 + i as f64).collect();
        assert_eq!(a.forward(p.as_slice(), &x).unwrap(), 0.5);
    }

    #[test]
    fn relu_blocks_negative_preactivation() {
        let a = arch(&[1], Activation::Relu);
        let mut p = NetworkParams::zeros(&a);
        *p.bias_mut(1, 0) = -3.0;
        *p.weight_mut(2, 0, 0) = 5.0;
        let x = vec![0.0; 13];
        assert_eq!(a.forward(p.as_slice(), &x).unwrap(), 0.0);
    }

    #[test]
    fn tanh_single_hidden_node() {
        let a = arch(&[1], Activation::Tanh);
        let mut p = NetworkParams::zeros(&a);
        *p.weight_mut(1, 0, 3) = 0.25;
        *p.weight_mut(2, 0, 0) = 2.0;
        let mut x = vec![0.0; 13];
        x[3] = 4.0;
        let out = a.forward(p.as_slice(), &x).unwrap();
        assert!((out - 2.0 * 1f64.tanh()).abs() < 1e-15);
        assert!((out - 1.5232).abs() < 1e-4);
    }

    #[test]
    fn non_finite_reports_layer() {
        let a = arch(&[2], Activation::Relu);
        let mut p = NetworkParams::zeros(&a);
        *p.weight_mut(1, 0, 0) = f64::MAX;
        *p.weight_mut(1, 0, 1) = f64::MAX;
        let mut x = vec![0.0; 13];
        x[0] = 2.0;
        x[1] = 2.0;
        match a.forward(p.as_slice(), &x) {
            Err(Error::NonFinite { layer }) => assert_eq!(layer, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn batch_matches_rows() {
        let a = arch(&[3], Activation::Tanh);
        let values: Vec<f64> = (0..a.param_count()).map(|i| ((i * 7) % 5) as f64 * 0.1 - 0.2).collect();
        let p = NetworkParams::from_flat(&a, values).unwrap();
        let xs: Vec<f64> = (0..39).map(|i| (i as f64).sin()).collect();
        let batch = a.forward_batch(p.as_slice(), &xs).unwrap();
        assert_eq!(batch.len(), 3);
        for (i, row) in xs.chunks(13).enumerate() {
            assert_eq!(batch[i], a.forward(p.as_slice(), row).unwrap());
        }
        assert!(a.forward_batch(p.as_slice(), &[]).unwrap().is_empty());
        let same: Vec<f64> = xs[..13].repeat(4);
        let out = a.forward_batch(p.as_slice(), &same).unwrap();
        assert!(out.iter().all(|v| *v == out[0]));
    }

    fn permute_first_hidden(a: &Architecture, params: &[f64], perm: &[usize]) -> Vec<f64> {
        let layers = a.layers();
        let (l1, l2) = (layers[0], layers[1]);
        let mut out = params.to_vec();
        for (new, &old) in perm.iter().enumerate() {
            for k in 0..l1.inputs {
                out[l1.weight_index(new, k)] = params[l1.weight_index(old, k)];
            }
            out[l1.bias_offset + new] = params[l1.bias_offset + old];
            for j in 0..l2.outputs {
                out[l2.weight_index(j, new)] = params[l2.weight_index(j, old)];
            }
        }
        out
    }

    proptest! {
        #[test]
        fn column_batch_matches_row_passes(
            seed in any::<u64>(),
            hidden in prop::collection::vec(1usize..5, 0..4),
            relu in any::<bool>(),
            rows in 1usize..12,
        ) {
            use rand::{Rng, SeedableRng};
            let act = if relu { Activation::Relu } else { Activation::Tanh };
            let a = Architecture::new(3, hidden, act).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let params: Vec<f64> = (0..a.param_count()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let xs: Vec<f64> = (0..rows * 3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let batch = BatchInputs::from_rows(&xs, 3).unwrap();
            let mut out = Vec::new();
            a.forward_columns(&params, &batch, &mut out).unwrap();
            let mut eval = Evaluator::new(&a);
            for (i, row) in xs.chunks_exact(3).enumerate() {
                prop_assert_eq!(out[i].to_bits(), eval.eval_unchecked(&params, row).to_bits());
            }
        }

        #[test]
        fn hidden_node_permutation_leaves_output_unchanged(
            values in prop::collection::vec(-2.0f64..2.0, 13 * 4 + 4 + 4 * 3 + 3 + 3 + 1),
            x in prop::collection::vec(-3.0f64..3.0, 13),
            relu in any::<bool>(),
            perm in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle(),
        ) {
            let act = if relu { Activation::Relu } else { Activation::Tanh };
            let a = arch(&[4, 3], act);
            let before = a.forward(&values, &x).unwrap();
            let permuted = permute_first_hidden(&a, &values, &perm);
            let after = a.forward(&permuted, &x).unwrap();
            prop_assert!((before - after).abs() <= 1e-12 * (1.0 + before.abs()));
        }

        #[test]
        fn hidden_outputs_are_bounded(
            values in prop::collection::vec(-3.0f64..3.0, 13 * 3 + 3),
            x in prop::collection::vec(-3.0f64..3.0, 13),
        ) {
            for act in [Activation::Tanh, Activation::Relu] {
                let a = arch(&[3], act);
                let layer = a.layers()[0];
                for node in 0..3 {
                    let mut acc = values[layer.bias_offset + node];
                    for k in 0..13 {
                        acc += values[layer.weight_index(node, k)] * x[k];
                    }
                    let z = act.apply(acc);
                    match act {
                        Activation::Tanh => prop_assert!(z > -1.0 && z < 1.0 || acc.abs() > 18.0),
                        Activation::Relu => prop_assert!(z >= 0.0),
                    }
                }
            }
        }

        #[test]
        fn small_parameter_changes_give_small_output_changes(
            values in prop::collection::vec(-1.0f64..1.0, 13 * 2 + 2 + 2 + 1),
            x in prop::collection::vec(-2.0f64..2.0, 13),
            which in 0usize..31,
        ) {
            let a = arch(&[2], Activation::Tanh);
            let h = 1e-6;
            let base = a.forward(&values, &x).unwrap();
            let mut bumped = values.clone();
            bumped[which] += h;
            let up = a.forward(&bumped, &x).unwrap();
            // |df/dtheta| is bounded by 2 * (max|w|) * (max|x|) for these ranges.
            prop_assert!((up - base).abs() <= h * 10.0);
        }
    }
}
