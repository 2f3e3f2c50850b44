//! Layer types used by the agents: dense layers, small MLPs, a GRU cell and
//! the three-stage convolutional observation encoder.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{Bound, ParamId, ParamStore};
use super::NumericsError;

/// Channels of the three 3x3 valid convolutions; a 7x7 input shrinks to 1x1,
/// so the last stage's channel count is the flattened feature size.
pub const ENCODER_CHANNELS: [usize; 3] = [8, 16, 144];
pub const GRID_SIDE: usize = 7;
pub const GRID_CHANNELS: usize = 3;
pub const TASK_DIM: usize = 7;
/// Length of the observation embedding (144 conv features + task vector).
pub const EMBED_DIM: usize = 151;

/// `y = x W + b`.
pub fn forward_linear(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var, NumericsError> {
    g.linear(x, w, Some(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub n_in: usize,
    pub n_out: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let w = store.add_uniform(format!("{name}.w"), &[n_in, n_out], n_in, rng);
        let b = store.add_uniform(format!("{name}.b"), &[n_out], n_in, rng);
        Self { w, b, n_in, n_out }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var, NumericsError> {
        g.linear(x, p.var(self.w), Some(p.var(self.b)))
    }
}

/// Dense layers with ReLU between them and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, sizes: &[usize], rng: &mut R) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var, NumericsError> {
        self.forward_with_dropout(g, p, x, None)
    }

    /// Same as `forward`, multiplying each hidden activation by a supplied
    /// (already rescaled) dropout mask.
    pub fn forward_with_dropout(
        &self,
        g: &mut Graph,
        p: &Bound,
        x: Var,
        mut masks: Option<&mut dyn FnMut(usize) -> Vec<f64>>,
    ) -> Result<Var, NumericsError> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, p, h)?;
            if i < last {
                h = g.relu(h);
                if let Some(mask_fn) = masks.as_mut() {
                    let m = g.constant_vec(mask_fn(layer.n_out));
                    h = g.mul(h, m)?;
                }
            }
        }
        Ok(h)
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out)
    }
}

/// Gated recurrent unit: `h' = (1 - z) * h + z * n` with
/// `n = tanh(W_n x + b_n + r * (U_n h + c_n))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    pub wx: ParamId,
    pub bx: ParamId,
    pub wh: ParamId,
    pub bh: ParamId,
    pub n_in: usize,
    pub hidden: usize,
}

impl Gru {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, n_in: usize, hidden: usize, rng: &mut R) -> Self {
        let wx = store.add_uniform(format!("{name}.wx"), &[n_in, 3 * hidden], hidden, rng);
        let bx = store.add_uniform(format!("{name}.bx"), &[3 * hidden], hidden, rng);
        let wh = store.add_uniform(format!("{name}.wh"), &[hidden, 3 * hidden], hidden, rng);
        let bh = store.add_uniform(format!("{name}.bh"), &[3 * hidden], hidden, rng);
        Self {
            wx,
            bx,
            wh,
            bh,
            n_in,
            hidden,
        }
    }

    pub fn step(&self, g: &mut Graph, p: &Bound, x: Var, h_prev: Var) -> Result<Var, NumericsError> {
        forward_gru(g, x, h_prev, self, p)
    }
}

/// One GRU update. Gate blocks in the fused weight matrices are ordered
/// reset, update, candidate.
pub fn forward_gru(g: &mut Graph, x: Var, h_prev: Var, cell: &Gru, p: &Bound) -> Result<Var, NumericsError> {
    let hs = cell.hidden;
    if g.shape(h_prev) != [hs] {
        return Err(NumericsError::ShapeMismatch {
            op: "gru state",
            left: g.shape(h_prev).to_vec(),
            right: vec![hs],
        });
    }
    let gx = g.linear(x, p.var(cell.wx), Some(p.var(cell.bx)))?;
    let gh = g.linear(h_prev, p.var(cell.wh), Some(p.var(cell.bh)))?;
    let xr = g.slice(gx, 0, hs)?;
    let xz = g.slice(gx, hs, hs)?;
    let xn = g.slice(gx, 2 * hs, hs)?;
    let hr = g.slice(gh, 0, hs)?;
    let hz = g.slice(gh, hs, hs)?;
    let hn = g.slice(gh, 2 * hs, hs)?;
    let r_pre = g.add(xr, hr)?;
    let r = g.sigmoid(r_pre);
    let z_pre = g.add(xz, hz)?;
    let z = g.sigmoid(z_pre);
    let gated = g.mul(r, hn)?;
    let n_pre = g.add(xn, gated)?;
    let n = g.tanh(n_pre);
    let diff = g.sub(n, h_prev)?;
    let step = g.mul(z, diff)?;
    let h = g.add(h_prev, step)?;
    if g.value(h).iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite("gru output".into()));
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
}

/// Three 3x3 valid convolutions with ReLU, flattened and joined with the
/// task vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvEncoder {
    pub convs: Vec<Conv>,
}

impl ConvEncoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, rng: &mut R) -> Self {
        let mut c_in = GRID_CHANNELS;
        let mut convs = Vec::new();
        for (i, &c_out) in ENCODER_CHANNELS.iter().enumerate() {
            let fan_in = c_in * 9;
            let w = store.add_uniform(format!("{name}.conv{i}.w"), &[c_out, c_in, 3, 3], fan_in, rng);
            let b = store.add_uniform(format!("{name}.conv{i}.b"), &[c_out], fan_in, rng);
            convs.push(Conv { w, b });
            c_in = c_out;
        }
        Self { convs }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, grid: Var, task: Var) -> Result<Var, NumericsError> {
        forward_conv_encoder(g, grid, task, self, p)
    }
}

/// Encodes an embedded `[3, 7, 7]` grid plus a `TASK_DIM` task vector into
/// an `EMBED_DIM` vector.
pub fn forward_conv_encoder(
    g: &mut Graph,
    grid: Var,
    task: Var,
    enc: &ConvEncoder,
    p: &Bound,
) -> Result<Var, NumericsError> {
    if g.shape(grid) != [GRID_CHANNELS, GRID_SIDE, GRID_SIDE] {
        return Err(NumericsError::ShapeMismatch {
            op: "conv encoder grid",
            left: g.shape(grid).to_vec(),
            right: vec![GRID_CHANNELS, GRID_SIDE, GRID_SIDE],
        });
    }
    if g.shape(task) != [TASK_DIM] {
        return Err(NumericsError::ShapeMismatch {
            op: "conv encoder task vector",
            left: g.shape(task).to_vec(),
            right: vec![TASK_DIM],
        });
    }
    let mut h = grid;
    for conv in &enc.convs {
        let c = g.conv2d(h, p.var(conv.w), p.var(conv.b))?;
        h = g.relu(c);
    }
    let n = g.value(h).len();
    let flat = g.reshape(h, vec![n])?;
    let out = g.concat(&[flat, task])?;
    debug_assert_eq!(g.value(out).len(), EMBED_DIM);
    Ok(out)
}
