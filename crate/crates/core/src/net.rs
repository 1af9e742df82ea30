//! Layered feed-forward networks with analytic reverse-mode gradients.
//!
//! A [`LayeredNet`] is a plain chain `h_{k+1} = σ_k(W_k h_k + b_k)` with an
//! identity activation on the output layer. The same structure doubles as the
//! directed graph used by condensation. All passes sum in ascending index
//! order so results are bit-reproducible.
//!
//! Besides the usual parameter and input gradients, the net supports the
//! parameter gradient of a directional input derivative
//! (`∂/∂θ [v · ∇ₓ NN(x; θ)]`), which is what a loss on a potential-derived
//! stress needs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Softplus,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Softplus => softplus(z),
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Softplus => logistic(z),
        }
    }

    #[inline]
    pub fn second_derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 0.0,
            Activation::Softplus => {
                let s = logistic(z);
                s * (1.0 - s)
            }
        }
    }
}

/// `ln(1 + e^z)` without overflow for large `z`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(shape("ragged matrix rows"));
        }
        Self::from_row_major(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += self.get(i, k) * other.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    #[inline]
    fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *o = acc;
        }
    }

    /// `out = selfᵀ · y`, summing over rows in ascending order.
    #[inline]
    fn mul_t_vec_into(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, yr) in y.iter().enumerate() {
            if *yr == 0.0 {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * yr;
            }
        }
    }
}

/// Static description of a network: widths, activations, constraints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Node counts `n_0 … n_L`; index 0 is the input layer.
    pub layer_widths: Vec<usize>,
    /// Activation applied after matrix `k` (so the last entry belongs to the
    /// output layer and must be identity).
    pub activations: Vec<Activation>,
    /// Per weight matrix: entries constrained to be `>= 0`.
    pub nonneg_mask: Vec<bool>,
    pub biases: bool,
}

impl Architecture {
    /// Softplus hidden layers, identity output, optional per-matrix
    /// nonnegativity.
    pub fn softplus_chain(widths: &[usize], nonneg_mask: Vec<bool>, biases: bool) -> Result<Self> {
        if widths.len() < 2 {
            return Err(shape("a network needs at least an input and an output layer"));
        }
        let n = widths.len() - 1;
        let mut activations = vec![Activation::Softplus; n];
        activations[n - 1] = Activation::Identity;
        let arch = Self {
            layer_widths: widths.to_vec(),
            activations,
            nonneg_mask,
            biases,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Input-convex layout used for hyperelastic potentials: the first
    /// matrix is free, every later matrix is nonnegative, no biases.
    pub fn icnn(widths: &[usize]) -> Result<Self> {
        let n = widths.len().saturating_sub(1);
        let mask = (0..n).map(|k| k > 0).collect();
        Self::softplus_chain(widths, mask, false)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_matrices();
        if self.layer_widths.len() < 2 {
            return Err(shape("a network needs at least an input and an output layer"));
        }
        if self.activations.len() != n || self.nonneg_mask.len() != n {
            return Err(shape(format!(
                "{n} weight matrices but {} activations and {} nonneg flags",
                self.activations.len(),
                self.nonneg_mask.len()
            )));
        }
        if self.activations[n - 1] != Activation::Identity {
            return Err(shape("output activation must be identity"));
        }
        Ok(())
    }

    pub fn num_matrices(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().expect("validated")
    }

    pub fn blocks(&self) -> Vec<Block> {
        let mut out = Vec::with_capacity(2 * self.num_matrices());
        let mut offset = 0;
        for k in 0..self.num_matrices() {
            let (rows, cols) = (self.layer_widths[k + 1], self.layer_widths[k]);
            out.push(Block {
                kind: BlockKind::Weight(k),
                rows,
                cols,
                offset,
            });
            offset += rows * cols;
            if self.biases {
                out.push(Block {
                    kind: BlockKind::Bias(k),
                    rows,
                    cols: 1,
                    offset,
                });
                offset += rows;
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(Block::len).sum()
    }

    /// Offset of weight matrix `k` inside the flat parameter vector.
    pub fn weight_offset(&self, k: usize) -> usize {
        self.blocks()
            .into_iter()
            .find(|b| b.kind == BlockKind::Weight(k))
            .map(|b| b.offset)
            .expect("matrix index in range")
    }

    /// Flat mask of coordinates that must stay nonnegative.
    pub fn nonneg_coordinates(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.num_params());
        for b in self.blocks() {
            let flag = match b.kind {
                BlockKind::Weight(k) => self.nonneg_mask[k],
                BlockKind::Bias(_) => false,
            };
            out.extend(std::iter::repeat(flag).take(b.len()));
        }
        out
    }

    /// Flat mask of coordinates that are weights (not biases).
    pub fn weight_coordinates(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.num_params());
        for b in self.blocks() {
            let flag = matches!(b.kind, BlockKind::Weight(_));
            out.extend(std::iter::repeat(flag).take(b.len()));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Weight(usize),
    Bias(usize),
}

/// One matrix (or bias vector) inside the flat parameter layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat view of every trainable parameter of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Vec<Block>,
}

impl ParamVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayeredNet {
    arch: Architecture,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

impl LayeredNet {
    pub fn new(arch: Architecture, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        arch.validate()?;
        let n = arch.num_matrices();
        if weights.len() != n {
            return Err(shape(format!("expected {n} weight matrices, got {}", weights.len())));
        }
        for (k, w) in weights.iter().enumerate() {
            let (r, c) = (arch.layer_widths[k + 1], arch.layer_widths[k]);
            if w.rows() != r || w.cols() != c {
                return Err(shape(format!(
                    "W_{k} is {}x{}, expected {r}x{c}",
                    w.rows(),
                    w.cols()
                )));
            }
            if arch.nonneg_mask[k] && w.as_slice().iter().any(|&v| v < 0.0) {
                return Err(domain(format!("W_{k} is flagged nonnegative but has a negative entry")));
            }
        }
        if arch.biases {
            if biases.len() != n {
                return Err(shape(format!("expected {n} bias vectors, got {}", biases.len())));
            }
            for (k, b) in biases.iter().enumerate() {
                if b.len() != arch.layer_widths[k + 1] {
                    return Err(shape(format!("b_{k} has wrong length {}", b.len())));
                }
            }
        } else if !biases.is_empty() {
            return Err(shape("architecture has no biases but bias vectors were given"));
        }
        Ok(Self {
            arch,
            weights,
            biases,
        })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let weights = (0..arch.num_matrices())
            .map(|k| Matrix::zeros(arch.layer_widths[k + 1], arch.layer_widths[k]))
            .collect();
        let biases = if arch.biases {
            (0..arch.num_matrices())
                .map(|k| vec![0.0; arch.layer_widths[k + 1]])
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            arch,
            weights,
            biases,
        })
    }

    /// Rebuilds a network from a flat parameter slice laid out per
    /// [`Architecture::blocks`].
    pub fn from_params(arch: &Architecture, values: &[f64]) -> Result<Self> {
        let mut net = Self::zeros(arch.clone())?;
        net.set_params(values)?;
        Ok(net)
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        let blocks = self.arch.blocks();
        let total: usize = blocks.iter().map(Block::len).sum();
        if values.len() != total {
            return Err(shape(format!(
                "parameter vector has {} entries, layout needs {total}",
                values.len()
            )));
        }
        for b in blocks {
            let src = &values[b.range()];
            match b.kind {
                BlockKind::Weight(k) => self.weights[k].as_mut_slice().copy_from_slice(src),
                BlockKind::Bias(k) => self.biases[k].copy_from_slice(src),
            }
        }
        Ok(())
    }

    pub fn flatten(&self) -> ParamVector {
        let layout = self.arch.blocks();
        let mut values = Vec::with_capacity(self.arch.num_params());
        for b in &layout {
            match b.kind {
                BlockKind::Weight(k) => values.extend_from_slice(self.weights[k].as_slice()),
                BlockKind::Bias(k) => values.extend_from_slice(&self.biases[k]),
            }
        }
        ParamVector { values, layout }
    }

    pub fn unflatten(arch: &Architecture, params: &ParamVector) -> Result<Self> {
        if params.layout != arch.blocks() {
            return Err(shape("parameter layout does not match architecture"));
        }
        Self::from_params(arch, &params.values)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub(crate) fn into_parts(self) -> (Architecture, Vec<Matrix>, Vec<Vec<f64>>) {
        (self.arch, self.weights, self.biases)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_dim() {
            return Err(shape(format!(
                "input has {} components, network expects {}",
                x.len(),
                self.arch.input_dim()
            )));
        }
        Ok(())
    }

    fn check_output(&self, y: &[f64], what: &str) -> Result<()> {
        if y.len() != self.arch.output_dim() {
            return Err(shape(format!(
                "{what} has {} components, network output has {}",
                y.len(),
                self.arch.output_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let tape = self.record(x);
        Ok(tape.h.last().expect("at least one layer").clone())
    }

    /// Forward pass keeping pre-activations `z_k` and activations `h_k`.
    fn record(&self, x: &[f64]) -> Tape {
        let n = self.arch.num_matrices();
        let mut h = Vec::with_capacity(n + 1);
        let mut z = Vec::with_capacity(n);
        h.push(x.to_vec());
        for k in 0..n {
            let w = &self.weights[k];
            let mut zk = vec![0.0; w.rows()];
            w.mul_vec_into(&h[k], &mut zk);
            if self.arch.biases {
                for (zi, bi) in zk.iter_mut().zip(&self.biases[k]) {
                    *zi += bi;
                }
            }
            let act = self.arch.activations[k];
            let hk: Vec<f64> = zk.iter().map(|&v| act.apply(v)).collect();
            z.push(zk);
            h.push(hk);
        }
        Tape { h, z }
    }

    /// Gradient of `upstream · forward(x)` with respect to every parameter,
    /// in flat layout order.
    pub fn grad_params(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.check_output(upstream, "upstream")?;
        let mut grad = vec![0.0; self.arch.num_params()];
        self.accumulate_grad_params(x, upstream, 1.0, &mut grad);
        Ok(grad)
    }

    /// `grad += scale · ∂(upstream · forward(x))/∂θ`. Shapes must already be
    /// validated.
    pub(crate) fn accumulate_grad_params(&self, x: &[f64], upstream: &[f64], scale: f64, grad: &mut [f64]) {
        let tape = self.record(x);
        let blocks = self.arch.blocks();
        let n = self.arch.num_matrices();
        let mut adj: Vec<f64> = upstream.iter().map(|u| u * scale).collect();
        for k in (0..n).rev() {
            let act = self.arch.activations[k];
            let zbar: Vec<f64> = adj
                .iter()
                .zip(&tape.z[k])
                .map(|(a, &z)| a * act.derivative(z))
                .collect();
            let wb = blocks_for(&blocks, k, self.arch.biases);
            outer_accumulate(&mut grad[wb.0.range()], &zbar, &tape.h[k]);
            if let Some(bb) = wb.1 {
                for (g, zb) in grad[bb.range()].iter_mut().zip(&zbar) {
                    *g += zb;
                }
            }
            if k > 0 {
                let mut next = vec![0.0; self.weights[k].cols()];
                self.weights[k].mul_t_vec_into(&zbar, &mut next);
                adj = next;
            }
        }
    }

    /// Jacobian `∂forward/∂x`, shaped output × input.
    pub fn grad_input(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let tape = self.record(x);
        let out_dim = self.arch.output_dim();
        let mut jac = Vec::with_capacity(out_dim);
        for o in 0..out_dim {
            let mut seed = vec![0.0; out_dim];
            seed[o] = 1.0;
            jac.push(self.input_adjoint(&tape, &seed));
        }
        Ok(jac)
    }

    /// `upstreamᵀ · ∂forward/∂x`.
    fn input_adjoint(&self, tape: &Tape, upstream: &[f64]) -> Vec<f64> {
        let mut adj = upstream.to_vec();
        for k in (0..self.arch.num_matrices()).rev() {
            let act = self.arch.activations[k];
            let zbar: Vec<f64> = adj
                .iter()
                .zip(&tape.z[k])
                .map(|(a, &z)| a * act.derivative(z))
                .collect();
            let mut next = vec![0.0; self.weights[k].cols()];
            self.weights[k].mul_t_vec_into(&zbar, &mut next);
            adj = next;
        }
        adj
    }

    /// Gradient of a scalar-output network with respect to its input.
    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if self.arch.output_dim() != 1 {
            return Err(shape("input_gradient needs a scalar-output network"));
        }
        let tape = self.record(x);
        Ok(self.input_adjoint(&tape, &[1.0]))
    }

    /// Forward-mode pass: returns `(forward(x), J(x)·v)`.
    pub fn jvp(&self, x: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        self.check_input(v)?;
        let tape = self.record_tangent(x, v);
        let n = self.arch.num_matrices();
        Ok((tape.h[n].clone(), tape.hdot[n].clone()))
    }

    fn record_tangent(&self, x: &[f64], v: &[f64]) -> TangentTape {
        let n = self.arch.num_matrices();
        let base = self.record(x);
        let mut hdot = Vec::with_capacity(n + 1);
        let mut zdot = Vec::with_capacity(n);
        hdot.push(v.to_vec());
        for k in 0..n {
            let w = &self.weights[k];
            let mut zd = vec![0.0; w.rows()];
            w.mul_vec_into(&hdot[k], &mut zd);
            let act = self.arch.activations[k];
            let hd: Vec<f64> = zd
                .iter()
                .zip(&base.z[k])
                .map(|(d, &z)| act.derivative(z) * d)
                .collect();
            zdot.push(zd);
            hdot.push(hd);
        }
        TangentTape {
            h: base.h,
            z: base.z,
            hdot,
            zdot,
        }
    }

    /// `grad += ∂/∂θ [ primal_adj · y + tangent_adj · ẏ ]` where
    /// `(y, ẏ) = jvp(x, v)`.
    ///
    /// With `primal_adj = 0` and a scalar network this is the parameter
    /// gradient of the directional derivative `v · ∇ₓ NN(x)`.
    pub fn tangent_grad_params(
        &self,
        x: &[f64],
        v: &[f64],
        primal_adj: &[f64],
        tangent_adj: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        self.check_input(x)?;
        self.check_input(v)?;
        self.check_output(primal_adj, "primal adjoint")?;
        self.check_output(tangent_adj, "tangent adjoint")?;
        if grad.len() != self.arch.num_params() {
            return Err(shape("gradient buffer has wrong length"));
        }
        self.accumulate_tangent_grad(x, v, primal_adj, tangent_adj, grad);
        Ok(())
    }

    pub(crate) fn accumulate_tangent_grad(
        &self,
        x: &[f64],
        v: &[f64],
        primal_adj: &[f64],
        tangent_adj: &[f64],
        grad: &mut [f64],
    ) {
        let tape = self.record_tangent(x, v);
        let blocks = self.arch.blocks();
        let n = self.arch.num_matrices();
        let mut hbar = primal_adj.to_vec();
        let mut hdbar = tangent_adj.to_vec();
        for k in (0..n).rev() {
            let act = self.arch.activations[k];
            let z = &tape.z[k];
            let zd = &tape.zdot[k];
            let mut zbar = vec![0.0; z.len()];
            let mut zdbar = vec![0.0; z.len()];
            for i in 0..z.len() {
                let d1 = act.derivative(z[i]);
                let d2 = act.second_derivative(z[i]);
                zbar[i] = hbar[i] * d1 + hdbar[i] * d2 * zd[i];
                zdbar[i] = hdbar[i] * d1;
            }
            let wb = blocks_for(&blocks, k, self.arch.biases);
            let gw = &mut grad[wb.0.range()];
            outer_accumulate(gw, &zbar, &tape.h[k]);
            outer_accumulate(gw, &zdbar, &tape.hdot[k]);
            if let Some(bb) = wb.1 {
                for (g, zb) in grad[bb.range()].iter_mut().zip(&zbar) {
                    *g += zb;
                }
            }
            if k > 0 {
                let w = &self.weights[k];
                let mut nh = vec![0.0; w.cols()];
                let mut nhd = vec![0.0; w.cols()];
                w.mul_t_vec_into(&zbar, &mut nh);
                w.mul_t_vec_into(&zdbar, &mut nhd);
                hbar = nh;
                hdbar = nhd;
            }
        }
    }

    /// Number of weights (biases excluded) with `|w| > threshold`.
    pub fn param_count(&self, threshold: f64) -> usize {
        self.weights
            .iter()
            .flat_map(|w| w.as_slice())
            .filter(|w| w.abs() > threshold)
            .count()
    }

    pub fn to_text(&self) -> Result<String> {
        let file = NetFile {
            format: NET_FORMAT.to_string(),
            layer_widths: self.arch.layer_widths.clone(),
            activations: self.arch.activations.clone(),
            nonneg_mask: self.arch.nonneg_mask.clone(),
            weights: self.weights.iter().map(Matrix::to_rows).collect(),
            biases: self.arch.biases.then(|| self.biases.clone()),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let file: NetFile = serde_json::from_str(text)?;
        if file.format != NET_FORMAT {
            return Err(Error::Shape(format!("unknown network format tag {:?}", file.format)));
        }
        let arch = Architecture {
            layer_widths: file.layer_widths,
            activations: file.activations,
            nonneg_mask: file.nonneg_mask,
            biases: file.biases.is_some(),
        };
        let weights = file
            .weights
            .iter()
            .zip(arch.layer_widths.windows(2))
            .map(|(rows, w)| {
                if rows.is_empty() {
                    Ok(Matrix::zeros(w[1], w[0]))
                } else {
                    Matrix::from_rows(rows)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(arch, weights, file.biases.unwrap_or_default())
    }
}

impl fmt::Display for LayeredNet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let widths: Vec<String> = self.arch.layer_widths.iter().map(usize::to_string).collect();
        write!(f, "LayeredNet[{}]", widths.join("-"))
    }
}

const NET_FORMAT: &str = "csvgd-net/1";

#[derive(Serialize, Deserialize)]
struct NetFile {
    format: String,
    layer_widths: Vec<usize>,
    activations: Vec<Activation>,
    nonneg_mask: Vec<bool>,
    weights: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    biases: Option<Vec<Vec<f64>>>,
}

struct Tape {
    h: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
}

struct TangentTape {
    h: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    hdot: Vec<Vec<f64>>,
    zdot: Vec<Vec<f64>>,
}

fn blocks_for(blocks: &[Block], k: usize, biases: bool) -> (Block, Option<Block>) {
    if biases {
        (blocks[2 * k], Some(blocks[2 * k + 1]))
    } else {
        (blocks[k], None)
    }
}

/// `g[r, c] += a[r] · b[c]` on a row-major block.
#[inline]
fn outer_accumulate(g: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (r, ar) in a.iter().enumerate() {
        if *ar == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (gi, bi) in row.iter_mut().zip(b) {
            *gi += ar * bi;
        }
    }
}
