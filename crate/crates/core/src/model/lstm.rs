use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_targets, Forecaster, ModelError, ModelKind, ParamGroup, Result};
use crate::series::WindowSpec;
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmConfig {
    pub hidden: usize,
    /// Consecutive frames fed per forecast, most recent last.
    pub window: usize,
}

impl LstmConfig {
    /// Window as long as the total frame count of `spec`.
    pub fn for_spec(spec: &WindowSpec) -> Self {
        LstmConfig {
            hidden: 16,
            window: spec.total_frames(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.window == 0 {
            return Err(ModelError::Config("hidden size and window must be at least 1".into()));
        }
        Ok(())
    }
}

/// Input, recurrent and bias weights of one gate.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub input: Tensor,
    pub recurrent: Tensor,
    pub bias: Tensor,
}

impl Gate {
    fn zeros(inputs: usize, hidden: usize) -> Self {
        Gate {
            input: Tensor::zeros(&[inputs, hidden]),
            recurrent: Tensor::zeros(&[hidden, hidden]),
            bias: Tensor::zeros(&[hidden]),
        }
    }
}

/// Gates in the order input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    pub gates: [Gate; 4],
}

#[derive(Clone, Copy, Debug)]
pub struct BoundGate {
    pub input: Var,
    pub recurrent: Var,
    pub bias: Var,
}

impl LstmCell {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        LstmCell {
            gates: std::array::from_fn(|_| Gate::zeros(inputs, hidden)),
        }
    }

    pub fn hidden(&self) -> usize {
        self.gates[0].bias.len()
    }

    pub fn bind(&self, g: &mut Graph) -> [BoundGate; 4] {
        std::array::from_fn(|i| BoundGate {
            input: g.param(self.gates[i].input.clone()),
            recurrent: g.param(self.gates[i].recurrent.clone()),
            bias: g.param(self.gates[i].bias.clone()),
        })
    }
}

fn gate_pre(g: &mut Graph, gate: &BoundGate, x: Var, h: Var) -> Result<Var> {
    let a = g.matmul(x, gate.input)?;
    let b = g.matmul(h, gate.recurrent)?;
    let s = g.add(a, b)?;
    Ok(g.add_bias(s, gate.bias)?)
}

/// One recurrence step over a batch of rows: `x` is `[N, inputs]`, `h` and
/// `c` are `[N, hidden]`. Returns the new `(h, c)`.
pub fn lstm_step(g: &mut Graph, gates: &[BoundGate; 4], x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let i = gate_pre(g, &gates[0], x, h)?;
    let i = g.sigmoid(i)?;
    let f = gate_pre(g, &gates[1], x, h)?;
    let f = g.sigmoid(f)?;
    let cand = gate_pre(g, &gates[2], x, h)?;
    let cand = g.tanh(cand)?;
    let o = gate_pre(g, &gates[3], x, h)?;
    let o = g.sigmoid(o)?;
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c)?;
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// Recurrent baseline: one LSTM shared by every cell, reading that cell's
/// own recent flows, with a linear readout of the last hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    config: LstmConfig,
    spec: WindowSpec,
    rows: usize,
    cols: usize,
    pub cell: LstmCell,
    pub readout_weight: Tensor,
    pub readout_bias: Tensor,
}

impl Lstm {
    pub fn zeros(config: LstmConfig, spec: WindowSpec, rows: usize, cols: usize) -> Result<Self> {
        config.validate()?;
        if rows == 0 || cols == 0 {
            return Err(ModelError::Config("grid must have at least one cell".into()));
        }
        Ok(Lstm {
            config,
            spec,
            rows,
            cols,
            cell: LstmCell::zeros(1, config.hidden),
            readout_weight: Tensor::zeros(&[config.hidden, 1]),
            readout_bias: Tensor::zeros(&[1]),
        })
    }

    pub fn new(config: LstmConfig, spec: WindowSpec, rows: usize, cols: usize, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(config, spec, rows, cols)?;
        m.init_params(seed);
        Ok(m)
    }

    pub fn config(&self) -> &LstmConfig {
        &self.config
    }
}

impl Forecaster for Lstm {
    fn kind(&self) -> ModelKind {
        ModelKind::Lstm
    }

    fn grid(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn window_spec(&self) -> &WindowSpec {
        &self.spec
    }

    /// Uniform weights in `±1/sqrt(hidden)`, zero biases except a forget
    /// bias of 1.
    fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (self.config.hidden as f64).sqrt();
        for (k, gate) in self.cell.gates.iter_mut().enumerate() {
            for w in gate.input.data_mut().iter_mut().chain(gate.recurrent.data_mut()) {
                *w = rng.gen_range(-bound..bound);
            }
            gate.bias.data_mut().fill(if k == 1 { 1.0 } else { 0.0 });
        }
        for w in self.readout_weight.data_mut() {
            *w = rng.gen_range(-bound..bound);
        }
        self.readout_bias.data_mut()[0] = 0.0;
    }

    fn parameters(&self) -> Vec<&Tensor> {
        let mut v = Vec::new();
        for gate in &self.cell.gates {
            v.extend([&gate.input, &gate.recurrent, &gate.bias]);
        }
        v.extend([&self.readout_weight, &self.readout_bias]);
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = Vec::new();
        for gate in &mut self.cell.gates {
            v.extend([&mut gate.input, &mut gate.recurrent, &mut gate.bias]);
        }
        v.extend([&mut self.readout_weight, &mut self.readout_bias]);
        v
    }

    fn parameter_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for gate in ["input", "forget", "candidate", "output"] {
            for part in ["input", "recurrent", "bias"] {
                v.push(format!("lstm.{gate}.{part}"));
            }
        }
        v.extend(["readout.weight".to_string(), "readout.bias".to_string()]);
        v
    }

    fn parameter_groups(&self) -> Vec<ParamGroup> {
        let mut v = vec![ParamGroup::Recurrent; 12];
        v.extend([ParamGroup::Readout; 2]);
        v
    }

    fn min_target(&self) -> usize {
        self.config.window
    }

    fn forward(&self, g: &mut Graph, params: &[Var], frames: &[Vec<f64>], ts: &[usize]) -> Result<Var> {
        check_targets(ts, self.min_target(), frames.len())?;
        let gates: [BoundGate; 4] = std::array::from_fn(|i| BoundGate {
            input: params[3 * i],
            recurrent: params[3 * i + 1],
            bias: params[3 * i + 2],
        });
        let (w_out, b_out) = (params[12], params[13]);
        let cells = self.rows * self.cols;
        let n = ts.len() * cells;
        let hidden = self.config.hidden;
        let mut h = g.constant(Tensor::zeros(&[n, hidden]));
        let mut c = g.constant(Tensor::zeros(&[n, hidden]));
        for step in 0..self.config.window {
            let back = self.config.window - step;
            let mut x = Vec::with_capacity(n);
            for &t in ts {
                x.extend_from_slice(&frames[t - back]);
            }
            let x = g.constant(Tensor::new(vec![n, 1], x)?);
            (h, c) = lstm_step(g, &gates, x, h, c)?;
        }
        let out = g.matmul(h, w_out)?;
        let out = g.add_bias(out, b_out)?;
        Ok(g.reshape(out, &[ts.len(), self.rows, self.cols])?)
    }
}
