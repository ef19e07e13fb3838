use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::normalize::Normalizer;
use super::NeuralError;

/// Layer widths of a fully connected ReLU network with a linear output layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl MlpSpec {
    /// Spec with the two frequency outputs (RoCoF, nadir).
    pub fn new(input_dim: usize, hidden: Vec<usize>) -> Self {
        Self {
            input_dim,
            hidden,
            output_dim: 2,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.input_dim == 0 || self.hidden.contains(&0) {
            return Err(NeuralError::InvalidSpec(
                "every width must be at least 1".into(),
            ));
        }
        if self.output_dim != 2 {
            return Err(NeuralError::InvalidSpec(format!(
                "output width must be 2, got {}",
                self.output_dim
            )));
        }
        Ok(())
    }

    /// `[input, hidden..., output]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(self.output_dim);
        w
    }
}

/// Affine map `x -> x W + b` with `W` stored row-major as `inputs x outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    #[inline]
    pub fn weight(&self, i: usize, o: usize) -> T {
        self.weights[i * self.outputs + o]
    }

    #[inline]
    pub fn weight_mut(&mut self, i: usize, o: usize) -> &mut T {
        &mut self.weights[i * self.outputs + o]
    }

    pub fn apply(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (o, &w) in out.iter_mut().zip(row) {
                *o = *o + xi * w;
            }
        }
    }

    /// Row `i` of the weight matrix (the fan-out of input `i`).
    pub fn row(&self, i: usize) -> &[T] {
        &self.weights[i * self.outputs..(i + 1) * self.outputs]
    }

    /// Weights into output `o`.
    pub fn column(&self, o: usize) -> Vec<T> {
        (0..self.inputs).map(|i| self.weight(i, o)).collect()
    }

    fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> MlpParams<T> {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let w = spec.widths();
        Self {
            layers: w.windows(2).map(|p| Layer::zeros(p[0], p[1])).collect(),
        }
    }

    /// He-normal weights, zero biases.
    pub fn init_he<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Self {
        let mut p = Self::zeros(spec);
        for layer in &mut p.layers {
            let std = (2.0 / layer.inputs as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive standard deviation");
            for w in &mut layer.weights {
                *w = T::lit(normal.sample(rng));
            }
        }
        p
    }

    pub fn spec(&self) -> MlpSpec {
        MlpSpec {
            input_dim: self.input_dim(),
            hidden: self.layers[..self.layers.len() - 1]
                .iter()
                .map(|l| l.outputs)
                .collect(),
            output_dim: self.output_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn hidden_neurons(&self) -> usize {
        self.layers[..self.layers.len().saturating_sub(1)]
            .iter()
            .map(|l| l.outputs)
            .sum()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.layers.is_empty() {
            return Err(NeuralError::InvalidSpec("network has no layers".into()));
        }
        for (k, pair) in self.layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(NeuralError::InvalidSpec(format!(
                    "layer {k} emits {} values but layer {} takes {}",
                    pair[0].outputs,
                    k + 1,
                    pair[1].inputs
                )));
            }
        }
        for l in &self.layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(NeuralError::InvalidSpec(
                    "layer storage size mismatch".into(),
                ));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(NeuralError::NonFinite);
            }
        }
        Ok(())
    }

    /// Parameters in layer order, weights before biases.
    pub fn to_flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
    }

    pub fn cast<U: Scalar>(&self) -> MlpParams<U> {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weights: l.weights.iter().map(|w| U::lit(w.as_f64())).collect(),
                    bias: l.bias.iter().map(|b| U::lit(b.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

/// Hidden pre-activations and the network output for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub pre_activations: Vec<Vec<T>>,
    pub output: Vec<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    /// `true` where a hidden unit is strictly active.
    pub fn pattern(&self) -> Vec<Vec<bool>> {
        self.pre_activations
            .iter()
            .map(|z| z.iter().map(|&v| v > T::zero()).collect())
            .collect()
    }
}

fn check_len(expected: usize, found: usize) -> Result<(), NeuralError> {
    if expected != found {
        return Err(NeuralError::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub fn forward_trace<T: Scalar>(
    params: &MlpParams<T>,
    x: &[T],
) -> Result<ForwardTrace<T>, NeuralError> {
    check_len(params.input_dim(), x.len())?;
    let mut pre = Vec::with_capacity(params.layers.len() - 1);
    let mut act = x.to_vec();
    let mut z = Vec::new();
    let last = params.layers.len() - 1;
    for (k, layer) in params.layers.iter().enumerate() {
        layer.apply(&act, &mut z);
        if k == last {
            break;
        }
        act.clear();
        act.extend(z.iter().map(|&v| v.max(T::zero())));
        pre.push(z.clone());
    }
    Ok(ForwardTrace {
        pre_activations: pre,
        output: z,
    })
}

/// Network output: `[rocof, fn]` for the frequency predictor.
pub fn forward<T: Scalar>(params: &MlpParams<T>, x: &[T]) -> Result<Vec<T>, NeuralError> {
    forward_trace(params, x).map(|t| t.output)
}

fn check_slice<T: Scalar>(
    params: &MlpParams<T>,
    xs: &[Vec<T>],
    ys: &[Vec<T>],
) -> Result<(), NeuralError> {
    if xs.is_empty() {
        return Err(NeuralError::EmptySlice);
    }
    check_len(xs.len(), ys.len())?;
    for (x, y) in xs.iter().zip(ys) {
        check_len(params.input_dim(), x.len())?;
        check_len(params.output_dim(), y.len())?;
    }
    Ok(())
}

/// Mean over rows of the squared error summed over outputs.
pub fn loss<T: Scalar>(
    params: &MlpParams<T>,
    xs: &[Vec<T>],
    ys: &[Vec<T>],
) -> Result<T, NeuralError> {
    check_slice(params, xs, ys)?;
    let mut total = T::zero();
    for (x, y) in xs.iter().zip(ys) {
        let out = forward(params, x)?;
        total = total
            + out
                .iter()
                .zip(y)
                .map(|(&p, &t)| (p - t) * (p - t))
                .sum::<T>();
    }
    Ok(total / T::lit(xs.len() as f64))
}

/// Adds `weight * d(sum sq err)/d(theta)` for one row into `g` (flat
/// layout) and returns that row's squared error.
pub(crate) fn accumulate_row<T: Scalar>(
    params: &MlpParams<T>,
    x: &[T],
    y: &[T],
    weight: T,
    g: &mut [T],
) -> T {
    let nl = params.layers.len();
    // forward, keeping every layer input
    let mut inputs: Vec<Vec<T>> = Vec::with_capacity(nl);
    let mut pres: Vec<Vec<T>> = Vec::with_capacity(nl);
    let mut act = x.to_vec();
    for layer in &params.layers {
        let mut z = Vec::new();
        layer.apply(&act, &mut z);
        inputs.push(std::mem::take(&mut act));
        act = z.iter().map(|&v| v.max(T::zero())).collect();
        pres.push(z);
    }
    let out = &pres[nl - 1];
    let mut delta: Vec<T> = out.iter().zip(y).map(|(&p, &t)| p - t).collect();
    let err: T = delta.iter().map(|&d| d * d).sum();
    for d in &mut delta {
        *d = *d * T::lit(2.0) * weight;
    }

    let mut offsets = Vec::with_capacity(nl);
    let mut at = 0;
    for l in &params.layers {
        offsets.push(at);
        at += l.weights.len() + l.bias.len();
    }
    for k in (0..nl).rev() {
        let layer = &params.layers[k];
        let base = offsets[k];
        let input = &inputs[k];
        for (i, &xi) in input.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            let gw = &mut g[base + i * layer.outputs..base + (i + 1) * layer.outputs];
            for (gv, &d) in gw.iter_mut().zip(&delta) {
                *gv = *gv + xi * d;
            }
        }
        let gb = &mut g[base + layer.weights.len()..base + layer.weights.len() + layer.outputs];
        for (gv, &d) in gb.iter_mut().zip(&delta) {
            *gv = *gv + d;
        }
        if k == 0 {
            break;
        }
        let below = &pres[k - 1];
        let mut next = vec![T::zero(); layer.inputs];
        for (i, nv) in next.iter_mut().enumerate() {
            if below[i] > T::zero() {
                *nv = layer.row(i).iter().zip(&delta).map(|(&w, &d)| w * d).sum();
            }
        }
        delta = next;
    }
    err
}

/// Loss and its exact gradient (same shape as `params`).
pub fn grad<T: Scalar>(
    params: &MlpParams<T>,
    xs: &[Vec<T>],
    ys: &[Vec<T>],
) -> Result<(T, MlpParams<T>), NeuralError> {
    check_slice(params, xs, ys)?;
    let n = T::lit(xs.len() as f64);
    let mut flat = vec![T::zero(); params.num_params()];
    let mut total = T::zero();
    for (x, y) in xs.iter().zip(ys) {
        total = total + accumulate_row(params, x, y, T::one() / n, &mut flat);
    }
    let mut g = params.clone();
    g.set_flat(&flat);
    Ok((total / n, g))
}

/// Returns parameters acting on raw features and emitting raw outputs.
pub fn fold_normalization<T: Scalar>(
    params: &MlpParams<T>,
    norm: &Normalizer<T>,
) -> Result<MlpParams<T>, NeuralError> {
    norm.validate()?;
    check_len(params.input_dim(), norm.input_shift.len())?;
    check_len(params.output_dim(), norm.output_shift.len())?;
    let mut out = params.clone();
    {
        let first = &mut out.layers[0];
        for i in 0..first.inputs {
            let (s, c) = (norm.input_shift[i], norm.input_scale[i]);
            for o in 0..first.outputs {
                let w = first.weight(i, o) / c;
                *first.weight_mut(i, o) = w;
                first.bias[o] = first.bias[o] - s * w;
            }
        }
    }
    let last = out.layers.last_mut().expect("non-empty network");
    for o in 0..last.outputs {
        let (s, c) = (norm.output_shift[o], norm.output_scale[o]);
        for i in 0..last.inputs {
            *last.weight_mut(i, o) = last.weight(i, o) * c;
        }
        last.bias[o] = last.bias[o] * c + s;
    }
    Ok(out)
}
