//! Finite-difference gradient checking for the layer types.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::graph::{Graph, Var};
use super::layers::{ConvEncoder, Gru, Linear, Mlp, GRID_CHANNELS, GRID_SIDE, TASK_DIM};
use super::params::{Bound, ParamStore};
use super::NumericsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LayerKind {
    Linear,
    Mlp,
    Gru,
    ConvEncoder,
}

impl LayerKind {
    pub const ALL: [LayerKind; 4] = [LayerKind::Linear, LayerKind::Mlp, LayerKind::Gru, LayerKind::ConvEncoder];
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub kind: LayerKind,
    pub cases: usize,
    pub coords_checked: usize,
    pub max_rel_err: f64,
}

enum Layer {
    Linear(Linear),
    Mlp(Mlp),
    Gru(Gru),
    Conv(ConvEncoder),
}

struct Case {
    store: ParamStore,
    layer: Layer,
    inputs: Vec<Vec<f64>>,
    input_shapes: Vec<Vec<usize>>,
    proj: Vec<f64>,
}

impl Case {
    fn build(kind: LayerKind, rng: &mut ChaCha8Rng) -> Self {
        let mut store = ParamStore::new();
        let vec_of = |n: usize, rng: &mut ChaCha8Rng| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (layer, inputs, input_shapes, n_out) = match kind {
            LayerKind::Linear => {
                let (n, m) = (rng.random_range(1..9), rng.random_range(1..9));
                let l = Linear::new(&mut store, "lin", n, m, rng);
                (Layer::Linear(l), vec![vec_of(n, rng)], vec![vec![n]], m)
            }
            LayerKind::Mlp => {
                let sizes = [rng.random_range(2..8), rng.random_range(2..8), rng.random_range(2..8)];
                let mlp = Mlp::new(&mut store, "mlp", &sizes, rng);
                (Layer::Mlp(mlp), vec![vec_of(sizes[0], rng)], vec![vec![sizes[0]]], sizes[2])
            }
            LayerKind::Gru => {
                let (n, h) = (rng.random_range(1..7), rng.random_range(1..7));
                let gru = Gru::new(&mut store, "gru", n, h, rng);
                (Layer::Gru(gru), vec![vec_of(n, rng), vec_of(h, rng)], vec![vec![n], vec![h]], h)
            }
            LayerKind::ConvEncoder => {
                let enc = ConvEncoder::new(&mut store, "enc", rng);
                let grid: Vec<f64> = (0..GRID_CHANNELS * GRID_SIDE * GRID_SIDE)
                    .map(|_| rng.random_range(0.0..1.0))
                    .collect();
                let n_out = super::layers::EMBED_DIM;
                (
                    Layer::Conv(enc),
                    vec![grid, vec_of(TASK_DIM, rng)],
                    vec![vec![GRID_CHANNELS, GRID_SIDE, GRID_SIDE], vec![TASK_DIM]],
                    n_out,
                )
            }
        };
        let proj = vec_of(n_out, rng);
        Self {
            store,
            layer,
            inputs,
            input_shapes,
            proj,
        }
    }

    /// Scalar objective `proj · layer(inputs)`; returns the graph, the
    /// objective node, bound params and input handles.
    fn objective(&self, store: &ParamStore, inputs: &[Vec<f64>]) -> Result<(Graph, Var, Bound, Vec<Var>), NumericsError> {
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let xs: Vec<Var> = inputs
            .iter()
            .zip(&self.input_shapes)
            .map(|(d, s)| {
                let t = super::Tensor::new(s.clone(), d.clone()).expect("input shape");
                g.param(&t)
            })
            .collect();
        let y = match &self.layer {
            Layer::Linear(l) => l.forward(&mut g, &p, xs[0])?,
            Layer::Mlp(m) => m.forward(&mut g, &p, xs[0])?,
            Layer::Gru(c) => c.step(&mut g, &p, xs[0], xs[1])?,
            Layer::Conv(e) => e.forward(&mut g, &p, xs[0], xs[1])?,
        };
        let c = g.constant_vec(self.proj.clone());
        let prod = g.mul(y, c)?;
        let out = g.sum(prod);
        Ok((g, out, p, xs))
    }

    fn value(&self, store: &ParamStore, inputs: &[Vec<f64>]) -> Result<f64, NumericsError> {
        let (g, out, _, _) = self.objective(store, inputs)?;
        Ok(g.scalar(out))
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares analytic gradients with central differences (step `h`) on
/// `cases` random instances of `kind`, checking up to `coords_per_case`
/// randomly chosen parameter and input coordinates per instance.
pub fn gradcheck(
    kind: LayerKind,
    cases: usize,
    coords_per_case: usize,
    h: f64,
    seed: u64,
) -> Result<GradcheckReport, NumericsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel_err: f64 = 0.0;
    let mut coords_checked = 0;
    for _ in 0..cases {
        let case = Case::build(kind, &mut rng);
        let (mut g, out, bound, xs) = case.objective(&case.store, &case.inputs)?;
        g.backward(out)?;
        let param_grads = case.store.collect_grads(&g, &bound);
        let input_grads: Vec<Vec<f64>> = xs.iter().map(|&x| g.grad_or_zero(x)).collect();

        // (is_input, tensor index, element index)
        let mut coords = Vec::new();
        for (i, e) in case.store.entries().iter().enumerate() {
            for k in 0..e.tensor.len() {
                coords.push((false, i, k));
            }
        }
        for (i, x) in case.inputs.iter().enumerate() {
            for k in 0..x.len() {
                coords.push((true, i, k));
            }
        }
        let take = coords_per_case.min(coords.len());
        for _ in 0..take {
            let (is_input, i, k) = coords[rng.random_range(0..coords.len())];
            let numeric = if is_input {
                let mut plus = case.inputs.clone();
                plus[i][k] += h;
                let mut minus = case.inputs.clone();
                minus[i][k] -= h;
                (case.value(&case.store, &plus)? - case.value(&case.store, &minus)?) / (2.0 * h)
            } else {
                let mut plus = case.store.clone();
                plus.entry_mut(i).tensor.data_mut()[k] += h;
                let mut minus = case.store.clone();
                minus.entry_mut(i).tensor.data_mut()[k] -= h;
                (case.value(&plus, &case.inputs)? - case.value(&minus, &case.inputs)?) / (2.0 * h)
            };
            let analytic = if is_input { input_grads[i][k] } else { param_grads[i][k] };
            max_rel_err = max_rel_err.max(rel_err(analytic, numeric));
            coords_checked += 1;
        }
    }
    Ok(GradcheckReport {
        kind,
        cases,
        coords_checked,
        max_rel_err,
    })
}
