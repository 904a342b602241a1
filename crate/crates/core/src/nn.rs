//! Multilayer perceptrons: the unconstrained baseline and the equivariant
//! variant whose weights live in intertwiner bases.
//!
//! Both networks keep their parameters in one flat vector so that an
//! optimizer can treat them uniformly. Forward passes always go through a
//! [`Tape`]; the same code path serves rollouts and gradient computation.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{LinearCombination, Tape, Var};
use crate::equivariant::{equivariant_basis, EquivariantLayerSpec};
use crate::error::NetworkError;
use crate::group::{Representation, SymmetrySpec};

/// Pointwise nonlinearity between hidden layers. Only odd functions are
/// offered so sign-flipping hidden actions stay equivariant too.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

impl Activation {
    fn apply_tape(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutMode {
    Equivariant,
    Invariant,
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn check_input(expected: usize, x: &DMatrix<f64>) -> Result<(), NetworkError> {
    if x.ncols() != expected {
        return Err(NetworkError::DimensionMismatch {
            expected,
            got: x.ncols(),
        });
    }
    Ok(())
}

/// Fully connected network with `tanh` hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    dims: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

impl MlpNetwork {
    /// Weights `N(0, init_scale² / fan_in)`, zero biases.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        activation: Activation,
        init_scale: f64,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output dims");
        let mut params = Vec::new();
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = init_scale / (fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| normal(rng) * std));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            dims: dims.to_vec(),
            activation,
            params,
        }
    }

    pub fn from_params(
        dims: &[usize],
        activation: Activation,
        params: Vec<f64>,
    ) -> Result<Self, NetworkError> {
        let expected = Self::count(dims);
        if params.len() != expected {
            return Err(NetworkError::ParameterCount {
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            dims: dims.to_vec(),
            activation,
            params,
        })
    }

    fn count(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Offsets of `(weight, bias)` for each layer.
    fn layout(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.dims
            .windows(2)
            .map(|w| {
                let wo = off;
                let bo = off + w[0] * w[1];
                off = bo + w[1];
                (wo, bo)
            })
            .collect()
    }

    fn forward_tape(&self, tape: &mut Tape, params: Var, x: Var) -> Var {
        let layers = self.layout();
        let last = layers.len() - 1;
        let mut h = x;
        for (l, (&(wo, bo), w)) in layers.iter().zip(self.dims.windows(2)).enumerate() {
            let weight = tape.block(params, wo, w[0], w[1]);
            let bias = tape.block(params, bo, 1, w[1]);
            let z = tape.matmul(h, weight);
            h = tape.add_row(z, bias);
            if l != last {
                h = self.activation.apply_tape(tape, h);
            }
        }
        h
    }

    /// Multiplies the output layer's weights and biases by `factor`.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let (wo, _) = *self.layout().last().expect("at least one layer");
        for p in &mut self.params[wo..] {
            *p *= factor;
        }
    }
}

/// `√(dim_in·dim_out / K)` for a `K`-element orthonormal weight basis.
///
/// With this factor, i.i.d. coefficients give realized weight entries with
/// the same mean square as an unconstrained layer at the same init scale,
/// and an optimizer step moves them by the same amount.
fn weight_gain(spec: &EquivariantLayerSpec) -> f64 {
    let k = spec.weight_basis.len();
    if k == 0 {
        return 1.0;
    }
    ((spec.dim_in() * spec.dim_out()) as f64 / k as f64).sqrt()
}

/// One equivariant layer: its basis plus the sparse maps that realize
/// `Wᵀ` and `b` from coefficients. Weights are `gain · Σ c_k B_k`.
#[derive(Debug, Clone)]
pub struct EmlpLayer {
    pub spec: EquivariantLayerSpec,
    gain: f64,
    weight_plan: Arc<LinearCombination>,
    bias_plan: Arc<LinearCombination>,
}

impl EmlpLayer {
    pub fn new(spec: EquivariantLayerSpec) -> Self {
        let (din, dout) = (spec.dim_in(), spec.dim_out());
        let mut terms = Vec::new();
        let gain = weight_gain(&spec);
        for (k, b) in spec.weight_basis.iter().enumerate() {
            // Stored transposed: inputs are rows of the batch.
            terms.extend(b.entries.iter().map(|&(i, j, v)| (k, j, i, v * gain)));
        }
        let weight_plan = Arc::new(LinearCombination {
            rows: din,
            cols: dout,
            num_coefficients: spec.weight_basis.len(),
            terms,
        });
        let mut terms = Vec::new();
        for (k, b) in spec.bias_basis.iter().enumerate() {
            terms.extend(
                b.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, &v)| (k, 0, j, v)),
            );
        }
        let bias_plan = Arc::new(LinearCombination {
            rows: 1,
            cols: dout,
            num_coefficients: spec.bias_basis.len(),
            terms,
        });
        Self {
            spec,
            gain,
            weight_plan,
            bias_plan,
        }
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn num_weight_coefficients(&self) -> usize {
        self.weight_plan.num_coefficients
    }

    pub fn num_bias_coefficients(&self) -> usize {
        self.bias_plan.num_coefficients
    }

    fn num_params(&self) -> usize {
        self.num_weight_coefficients() + self.num_bias_coefficients()
    }

    fn forward_tape(&self, tape: &mut Tape, params: Var, offset: usize, x: Var) -> Var {
        let n = tape.value(x).nrows();
        let kw = self.num_weight_coefficients();
        let kb = self.num_bias_coefficients();
        let mut y = if kw > 0 {
            let c = tape.block(params, offset, 1, kw);
            let wt = tape.combine(c, self.weight_plan.clone());
            tape.matmul(x, wt)
        } else {
            tape.constant(DMatrix::zeros(n, self.spec.dim_out()))
        };
        if kb > 0 {
            let c = tape.block(params, offset + kw, 1, kb);
            let b = tape.combine(c, self.bias_plan.clone());
            y = tape.add_row(y, b);
        }
        y
    }
}

/// Equivariant MLP: every affine map is an intertwiner, hidden features
/// carry copies of the regular representation.
#[derive(Debug, Clone)]
pub struct EmlpNetwork {
    layers: Vec<EmlpLayer>,
    hidden_multiplicities: Vec<usize>,
    activation: Activation,
    readout_mode: ReadoutMode,
    params: Vec<f64>,
}

impl EmlpNetwork {
    /// Hidden layer `ℓ` carries `hidden_multiplicities[ℓ]` copies of the
    /// regular representation; the output carries `rep_action`
    /// (equivariant readout) or the trivial representation (invariant).
    pub fn build<R: Rng + ?Sized>(
        spec: &SymmetrySpec,
        hidden_multiplicities: &[usize],
        readout_mode: ReadoutMode,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self, NetworkError> {
        let regular = Representation::regular(&spec.group);
        let hidden: Vec<Representation> = hidden_multiplicities
            .iter()
            .map(|&m| regular.copies(m))
            .collect();
        Self::build_with_hidden(spec, hidden, hidden_multiplicities, readout_mode, init_scale, rng)
    }

    /// Like [`EmlpNetwork::build`] with explicit hidden representations,
    /// each of which must act by permutations.
    pub fn build_with_hidden<R: Rng + ?Sized>(
        spec: &SymmetrySpec,
        hidden: Vec<Representation>,
        hidden_multiplicities: &[usize],
        readout_mode: ReadoutMode,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self, NetworkError> {
        let layers = Self::layers_for(spec, hidden, readout_mode)?;
        let mut params = Vec::new();
        for layer in &layers {
            let std = init_scale / (layer.spec.dim_in().max(1) as f64).sqrt();
            params.extend((0..layer.num_params()).map(|_| normal(rng) * std));
        }
        Ok(Self {
            layers,
            hidden_multiplicities: hidden_multiplicities.to_vec(),
            activation: Activation::Tanh,
            readout_mode,
            params,
        })
    }

    /// Rebuilds a network with known coefficients (e.g. from a checkpoint).
    pub fn from_params(
        spec: &SymmetrySpec,
        hidden_multiplicities: &[usize],
        readout_mode: ReadoutMode,
        params: Vec<f64>,
    ) -> Result<Self, NetworkError> {
        let regular = Representation::regular(&spec.group);
        let hidden = hidden_multiplicities
            .iter()
            .map(|&m| regular.copies(m))
            .collect();
        let layers = Self::layers_for(spec, hidden, readout_mode)?;
        let expected: usize = layers.iter().map(EmlpLayer::num_params).sum();
        if params.len() != expected {
            return Err(NetworkError::ParameterCount {
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            layers,
            hidden_multiplicities: hidden_multiplicities.to_vec(),
            activation: Activation::Tanh,
            readout_mode,
            params,
        })
    }

    fn layers_for(
        spec: &SymmetrySpec,
        hidden: Vec<Representation>,
        readout_mode: ReadoutMode,
    ) -> Result<Vec<EmlpLayer>, NetworkError> {
        for (layer, rep) in hidden.iter().enumerate() {
            if rep.order() != spec.group.order() {
                return Err(crate::error::GroupError::GroupOrderMismatch.into());
            }
            if !rep.is_permutation() {
                return Err(NetworkError::NonPermutationHiddenAction { layer });
            }
        }
        let output = match readout_mode {
            ReadoutMode::Equivariant => spec.rep_action.clone(),
            ReadoutMode::Invariant => Representation::trivial(&spec.group),
        };
        let mut reps = Vec::with_capacity(hidden.len() + 2);
        reps.push(spec.rep_state.clone());
        reps.extend(hidden);
        reps.push(output);
        Ok(reps
            .windows(2)
            .map(|w| EmlpLayer::new(equivariant_basis(&w[0], &w[1])))
            .collect())
    }

    pub fn layers(&self) -> &[EmlpLayer] {
        &self.layers
    }

    pub fn hidden_multiplicities(&self) -> &[usize] {
        &self.hidden_multiplicities
    }

    pub fn readout_mode(&self) -> ReadoutMode {
        self.readout_mode
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn forward_tape(&self, tape: &mut Tape, params: Var, x: Var) -> Var {
        let last = self.layers.len() - 1;
        let mut off = 0;
        let mut h = x;
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.forward_tape(tape, params, off, h);
            off += layer.num_params();
            if l != last {
                h = self.activation.apply_tape(tape, h);
            }
        }
        h
    }

    /// Realized `(W, b)` per layer for the current coefficients.
    pub fn realized_layers(&self) -> Vec<(DMatrix<f64>, Vec<f64>)> {
        let mut off = 0;
        self.layers
            .iter()
            .map(|layer| {
                let kw = layer.num_weight_coefficients();
                let kb = layer.num_bias_coefficients();
                let w = layer.spec.realize_weight(&self.params[off..off + kw]) * layer.gain;
                let b = layer.spec.realize_bias(&self.params[off + kw..off + kw + kb]);
                off += kw + kb;
                (w, b)
            })
            .collect()
    }
}

/// Either network class, behind one parameter-vector interface.
#[derive(Debug, Clone)]
pub enum Network {
    Mlp(MlpNetwork),
    Emlp(EmlpNetwork),
}

impl Network {
    pub fn input_dim(&self) -> usize {
        match self {
            Network::Mlp(n) => n.dims[0],
            Network::Emlp(n) => n.layers[0].spec.dim_in(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Network::Mlp(n) => *n.dims.last().expect("dims"),
            Network::Emlp(n) => n.layers.last().expect("layers").spec.dim_out(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().len()
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Network::Mlp(n) => &n.params,
            Network::Emlp(n) => &n.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Network::Mlp(n) => &mut n.params,
            Network::Emlp(n) => &mut n.params,
        }
    }

    pub fn is_equivariant(&self) -> bool {
        matches!(self, Network::Emlp(_))
    }

    /// Records the forward pass of a batch `x` (one row per sample) using
    /// the parameter row `params`.
    pub fn forward_tape(&self, tape: &mut Tape, params: Var, x: Var) -> Var {
        match self {
            Network::Mlp(n) => n.forward_tape(tape, params, x),
            Network::Emlp(n) => n.forward_tape(tape, params, x),
        }
    }

    /// Forward pass for a batch, one row per sample.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, NetworkError> {
        check_input(self.input_dim(), x)?;
        let mut tape = Tape::new();
        let p = tape.constant(DMatrix::from_row_slice(1, self.num_params(), self.params()));
        let xi = tape.constant(x.clone());
        let out = self.forward_tape(&mut tape, p, xi);
        Ok(tape.value(out).clone())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        let out = self.forward_batch(&DMatrix::from_row_slice(1, x.len(), x))?;
        Ok(out.iter().copied().collect())
    }
}
