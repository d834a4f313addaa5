use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{check_targets, stack_frames, Forecaster, ModelError, ModelKind, ParamGroup, Result};
use crate::series::WindowSpec;
use crate::tensor::{Graph, Tensor, Var};

/// Architecture hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Feature maps per convolution (`F`).
    pub features: usize,
    /// Residual units per branch (`U`).
    pub residual_units: usize,
    /// Odd square kernel size.
    pub kernel_size: usize,
    /// Order of the autoregressive head (`n`).
    pub ar_lags: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            features: 8,
            residual_units: 2,
            kernel_size: 3,
            ar_lags: 3,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.features == 0 {
            return Err(ModelError::Config("features must be at least 1".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(ModelError::Config(format!("kernel_size {} must be odd", self.kernel_size)));
        }
        if self.ar_lags == 0 {
            return Err(ModelError::Config("ar_lags must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub kernel: Tensor,
    pub bias: Tensor,
}

impl ConvLayer {
    fn zeros(out_ch: usize, in_ch: usize, k: usize) -> Self {
        ConvLayer {
            kernel: Tensor::zeros(&[out_ch, in_ch, k, k]),
            bias: Tensor::zeros(&[out_ch]),
        }
    }

    fn fan_in(&self) -> usize {
        self.kernel.shape()[1..].iter().product()
    }

    fn randomize(&mut self, rng: &mut ChaCha8Rng) {
        let bound = (3.0 / self.fan_in() as f64).sqrt();
        for w in self.kernel.data_mut() {
            *w = rng.gen_range(-bound..bound);
        }
        self.bias.data_mut().fill(0.0);
    }

    fn signature(&self, abstract_input: bool) -> String {
        let s = self.kernel.shape();
        let input = if abstract_input { "in".to_string() } else { s[1].to_string() };
        format!("conv{}x{}:{}->{}", s[2], s[3], input, s[0])
    }
}

/// `x + conv2(relu(conv1(relu(x))))`; the identity when `conv2` is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualUnit {
    pub first: ConvLayer,
    pub second: ConvLayer,
}

/// Input convolution with rectifier, residual units, output convolution to
/// a single map.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub input: ConvLayer,
    pub units: Vec<ResidualUnit>,
    pub output: ConvLayer,
}

impl Branch {
    fn zeros(frames: usize, config: &ModelConfig) -> Self {
        let (f, k) = (config.features, config.kernel_size);
        Branch {
            input: ConvLayer::zeros(f, frames, k),
            units: (0..config.residual_units)
                .map(|_| ResidualUnit {
                    first: ConvLayer::zeros(f, f, k),
                    second: ConvLayer::zeros(f, f, k),
                })
                .collect(),
            output: ConvLayer::zeros(1, f, k),
        }
    }

    pub fn input_frames(&self) -> usize {
        self.input.kernel.shape()[1]
    }

    /// Layer signature with the input frame count abstracted away.
    pub fn structure(&self) -> String {
        let mut parts = vec![self.input.signature(true), "relu".to_string()];
        for u in &self.units {
            parts.push(format!("res[relu|{}|relu|{}]", u.first.signature(false), u.second.signature(false)));
        }
        parts.push(self.output.signature(false));
        parts.join("|")
    }

    pub fn structure_digest(&self) -> String {
        hex::encode(Sha256::digest(self.structure().as_bytes()))
    }

    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.input.kernel, &self.input.bias];
        for u in &self.units {
            v.extend([&u.first.kernel, &u.first.bias, &u.second.kernel, &u.second.bias]);
        }
        v.extend([&self.output.kernel, &self.output.bias]);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.input.kernel, &mut self.input.bias];
        for u in &mut self.units {
            v.extend([
                &mut u.first.kernel,
                &mut u.first.bias,
                &mut u.second.kernel,
                &mut u.second.bias,
            ]);
        }
        v.extend([&mut self.output.kernel, &mut self.output.bias]);
        v
    }

    fn names(&self, prefix: &str) -> Vec<String> {
        let mut v = vec![format!("{prefix}.input.kernel"), format!("{prefix}.input.bias")];
        for i in 0..self.units.len() {
            for layer in ["first", "second"] {
                v.push(format!("{prefix}.unit{i}.{layer}.kernel"));
                v.push(format!("{prefix}.unit{i}.{layer}.bias"));
            }
        }
        v.push(format!("{prefix}.output.kernel"));
        v.push(format!("{prefix}.output.bias"));
        v
    }

    /// Registers this branch's parameters on `g`.
    pub fn bind(&self, g: &mut Graph) -> BoundBranch {
        let vars: Vec<Var> = self.tensors().into_iter().map(|t| g.param(t.clone())).collect();
        BoundBranch::from_vars(&vars, self.units.len(), self.input_frames())
    }
}

#[derive(Clone, Copy, Debug)]
struct BoundConv {
    kernel: Var,
    bias: Var,
}

/// A [`Branch`] whose parameters live on a graph.
#[derive(Clone, Debug)]
pub struct BoundBranch {
    name: &'static str,
    frames: usize,
    input: BoundConv,
    units: Vec<(BoundConv, BoundConv)>,
    output: BoundConv,
}

impl BoundBranch {
    fn from_vars(vars: &[Var], units: usize, frames: usize) -> Self {
        let conv = |i: usize| BoundConv {
            kernel: vars[i],
            bias: vars[i + 1],
        };
        BoundBranch {
            name: "branch",
            frames,
            input: conv(0),
            units: (0..units).map(|u| (conv(2 + 4 * u), conv(4 + 4 * u))).collect(),
            output: conv(2 + 4 * units),
        }
    }

    fn len(units: usize) -> usize {
        4 + 4 * units
    }

    /// Branch output for a `frames×rows×cols` window, as a `rows×cols` grid.
    pub fn forward(&self, g: &mut Graph, window: Var) -> Result<Var> {
        let shape = g.value(window).shape().to_vec();
        if shape.len() != 3 || shape[0] != self.frames {
            return Err(ModelError::ChannelMismatch {
                branch: self.name,
                expected: self.frames,
                found: shape.first().copied().unwrap_or(0),
            });
        }
        let pre = g.conv2d(window, self.input.kernel, self.input.bias)?;
        let mut h = g.relu(pre)?;
        for (first, second) in &self.units {
            let a = g.relu(h)?;
            let a = g.conv2d(a, first.kernel, first.bias)?;
            let a = g.relu(a)?;
            let a = g.conv2d(a, second.kernel, second.bias)?;
            h = g.add(h, a)?;
        }
        let out = g.conv2d(h, self.output.kernel, self.output.bias)?;
        Ok(g.reshape(out, &shape[1..])?)
    }
}

/// Per-cell weights combining the three branch outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionWeights {
    pub closeness: Tensor,
    pub period: Tensor,
    pub trend: Tensor,
}

/// `W_c⊙out_c + W_p⊙out_p + W_q⊙out_q`.
pub fn fuse(g: &mut Graph, outputs: [Var; 3], weights: [Var; 3]) -> Result<Var> {
    let mut acc = g.mul(weights[0], outputs[0])?;
    for (w, o) in weights.into_iter().zip(outputs).skip(1) {
        if g.value(w).shape() != g.value(o).shape() || g.value(acc).shape() != g.value(o).shape() {
            return Err(ModelError::Tensor(crate::tensor::TensorError::ShapeMismatch {
                op: "fuse",
                dim: "grid".into(),
                expected: g.value(acc).len(),
                found: g.value(o).len(),
            }));
        }
        let term = g.mul(w, o)?;
        acc = g.add(acc, term)?;
    }
    Ok(acc)
}

/// Lag coefficients `θ_1..θ_n` and intercept `c`. The noise term has zero
/// mean and is omitted.
#[derive(Clone, Debug, PartialEq)]
pub struct ArHead {
    pub theta: Tensor,
    pub intercept: Tensor,
}

/// `c + Σ θ_i · history[i-1]`, where `history[0]` is the most recent fused
/// output and `history[i]` lags it by `i` intervals.
pub fn ar_predict(g: &mut Graph, theta: Var, intercept: Var, history: &[Var]) -> Result<Var> {
    let order = g.value(theta).len();
    if history.len() != order {
        return Err(ModelError::ShortHistory {
            expected: order,
            found: history.len(),
        });
    }
    let mut acc: Option<Var> = None;
    for (i, &h) in history.iter().enumerate() {
        let coef = g.index(theta, i)?;
        let term = g.mul(coef, h)?;
        acc = Some(match acc {
            Some(a) => g.add(a, term)?,
            None => term,
        });
    }
    Ok(g.add(acc.expect("order >= 1"), intercept)?)
}

/// Three residual convolutional branches (closeness, period, trend), fused
/// per cell and fed through an order-`n` autoregressive head.
///
/// The head consumes the fused outputs for the target interval and the
/// `n - 1` intervals before it, each computed from its own input windows.
#[derive(Clone, Debug, PartialEq)]
pub struct DeepTfp {
    config: ModelConfig,
    spec: WindowSpec,
    rows: usize,
    cols: usize,
    pub closeness: Branch,
    pub period: Branch,
    pub trend: Branch,
    pub fusion: FusionWeights,
    pub head: ArHead,
}

struct Bound {
    branches: [BoundBranch; 3],
    fusion: [Var; 3],
    theta: Var,
    intercept: Var,
}

impl DeepTfp {
    /// All parameters zero.
    pub fn zeros(config: ModelConfig, spec: WindowSpec, rows: usize, cols: usize) -> Result<Self> {
        config.validate()?;
        spec.validate().map_err(|e| ModelError::Config(e.to_string()))?;
        if rows == 0 || cols == 0 {
            return Err(ModelError::Config("grid must have at least one cell".into()));
        }
        Ok(DeepTfp {
            config,
            spec,
            rows,
            cols,
            closeness: Branch::zeros(spec.closeness, &config),
            period: Branch::zeros(spec.period_len, &config),
            trend: Branch::zeros(spec.trend_len, &config),
            fusion: FusionWeights {
                closeness: Tensor::zeros(&[rows, cols]),
                period: Tensor::zeros(&[rows, cols]),
                trend: Tensor::zeros(&[rows, cols]),
            },
            head: ArHead {
                theta: Tensor::zeros(&[config.ar_lags]),
                intercept: Tensor::scalar(0.0),
            },
        })
    }

    /// Freshly initialized model; see [`DeepTfp::init_params`].
    pub fn new(config: ModelConfig, spec: WindowSpec, rows: usize, cols: usize, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(config, spec, rows, cols)?;
        m.init_params(seed);
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn branches(&self) -> [&Branch; 3] {
        [&self.closeness, &self.period, &self.trend]
    }

    /// Deterministic initialization: fan-in scaled uniform kernels, zero
    /// biases, zero second convolution in every residual unit, equal fusion
    /// weights, and an autoregressive head that starts as persistence of the
    /// fused output (`θ_1 = 1`).
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for branch in [&mut self.closeness, &mut self.period, &mut self.trend] {
            branch.input.randomize(&mut rng);
            for unit in &mut branch.units {
                unit.first.randomize(&mut rng);
                unit.second = ConvLayer::zeros(self.config.features, self.config.features, self.config.kernel_size);
            }
            branch.output.randomize(&mut rng);
        }
        for w in [&mut self.fusion.closeness, &mut self.fusion.period, &mut self.fusion.trend] {
            w.data_mut().fill(1.0 / 3.0);
        }
        let theta = self.head.theta.data_mut();
        theta.fill(0.0);
        theta[0] = 1.0;
        self.head.intercept.data_mut()[0] = 0.0;
    }

    /// Makes the fused output equal the most recent closeness frame: the
    /// closeness branch copies it through (valid for inputs ≥ -1), the other
    /// branches are zero and fusion selects closeness.
    pub fn passthrough_closeness(&mut self) {
        let (f, k) = (self.config.features, self.config.kernel_size);
        let l = self.spec.closeness;
        let center = k / 2;
        let mut input = ConvLayer::zeros(f, l, k);
        input.kernel.data_mut()[((l - 1) * k + center) * k + center] = 1.0;
        input.bias.data_mut()[0] = 1.0;
        let mut output = ConvLayer::zeros(1, f, k);
        output.kernel.data_mut()[center * k + center] = 1.0;
        output.bias.data_mut()[0] = -1.0;
        self.closeness = Branch::zeros(l, &self.config);
        self.closeness.input = input;
        self.closeness.output = output;
        self.period = Branch::zeros(self.spec.period_len, &self.config);
        self.trend = Branch::zeros(self.spec.trend_len, &self.config);
        self.fusion.closeness.data_mut().fill(1.0);
        self.fusion.period.data_mut().fill(0.0);
        self.fusion.trend.data_mut().fill(0.0);
    }

    fn bound(&self, params: &[Var]) -> Bound {
        let u = self.config.residual_units;
        let per = BoundBranch::len(u);
        let frames = [self.spec.closeness, self.spec.period_len, self.spec.trend_len];
        let names = ["closeness", "period", "trend"];
        let branches = std::array::from_fn(|b| {
            let mut bb = BoundBranch::from_vars(&params[b * per..(b + 1) * per], u, frames[b]);
            bb.name = names[b];
            bb
        });
        let rest = &params[3 * per..];
        Bound {
            branches,
            fusion: [rest[0], rest[1], rest[2]],
            theta: rest[3],
            intercept: rest[4],
        }
    }

    /// Fused output `X̂'` for interval `s`, built from windows ending at `s - 1`.
    fn fused(&self, g: &mut Graph, bound: &Bound, frames: &[Vec<f64>], s: usize) -> Result<Var> {
        let windows = [
            self.spec.closeness_indices(s),
            self.spec.period_indices(s),
            self.spec.trend_indices(s),
        ];
        let mut outs = Vec::with_capacity(3);
        for (branch, idx) in bound.branches.iter().zip(&windows) {
            let w = g.constant(stack_frames(frames, idx, self.rows, self.cols));
            outs.push(branch.forward(g, w)?);
        }
        fuse(g, [outs[0], outs[1], outs[2]], bound.fusion)
    }
}

impl Forecaster for DeepTfp {
    fn kind(&self) -> ModelKind {
        ModelKind::DeepTfp
    }

    fn grid(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn window_spec(&self) -> &WindowSpec {
        &self.spec
    }

    fn init_params(&mut self, seed: u64) {
        DeepTfp::init_params(self, seed)
    }

    fn parameters(&self) -> Vec<&Tensor> {
        let mut v = Vec::new();
        for b in [&self.closeness, &self.period, &self.trend] {
            v.extend(b.tensors());
        }
        v.extend([&self.fusion.closeness, &self.fusion.period, &self.fusion.trend]);
        v.extend([&self.head.theta, &self.head.intercept]);
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = Vec::new();
        for b in [&mut self.closeness, &mut self.period, &mut self.trend] {
            v.extend(b.tensors_mut());
        }
        v.extend([&mut self.fusion.closeness, &mut self.fusion.period, &mut self.fusion.trend]);
        v.extend([&mut self.head.theta, &mut self.head.intercept]);
        v
    }

    fn parameter_names(&self) -> Vec<String> {
        let mut v = self.closeness.names("closeness");
        v.extend(self.period.names("period"));
        v.extend(self.trend.names("trend"));
        v.extend(["fusion.closeness", "fusion.period", "fusion.trend", "ar.theta", "ar.intercept"].map(String::from));
        v
    }

    fn parameter_groups(&self) -> Vec<ParamGroup> {
        let per = BoundBranch::len(self.config.residual_units);
        let mut v = Vec::with_capacity(3 * per + 5);
        for group in [ParamGroup::Closeness, ParamGroup::Period, ParamGroup::Trend] {
            v.extend(std::iter::repeat(group).take(per));
        }
        v.extend([ParamGroup::Fusion; 3]);
        v.extend([ParamGroup::ArHead; 2]);
        v
    }

    fn min_target(&self) -> usize {
        self.spec.history() + self.config.ar_lags - 1
    }

    fn forward(&self, g: &mut Graph, params: &[Var], frames: &[Vec<f64>], ts: &[usize]) -> Result<Var> {
        check_targets(ts, self.min_target(), frames.len())?;
        let bound = self.bound(params);
        // Targets in one batch may share lagged fused outputs.
        let mut cache: HashMap<usize, Var> = HashMap::new();
        let mut preds = Vec::with_capacity(ts.len());
        for &t in ts {
            let mut history = Vec::with_capacity(self.config.ar_lags);
            for lag in 0..self.config.ar_lags {
                let s = t - lag;
                let v = match cache.get(&s) {
                    Some(&v) => v,
                    None => {
                        let v = self.fused(g, &bound, frames, s)?;
                        cache.insert(s, v);
                        v
                    }
                };
                history.push(v);
            }
            preds.push(ar_predict(g, bound.theta, bound.intercept, &history)?);
        }
        Ok(g.stack(&preds)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> WindowSpec {
        WindowSpec {
            closeness: 2,
            period_len: 1,
            trend_len: 1,
            period: 3,
            trend: 5,
        }
    }

    fn frames(n: usize, cells: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|t| (0..cells).map(|c| ((t * 7 + c * 3) % 11) as f64 / 5.5 - 1.0).collect())
            .collect()
    }

    #[test]
    fn zero_model_outputs_zero_then_intercept() {
        let mut m = DeepTfp::zeros(ModelConfig::default(), small_spec(), 4, 4).unwrap();
        let fr = frames(20, 16);
        let out = m.predict(&fr, &[10]).unwrap();
        assert!(out[0].iter().all(|&v| v == 0.0));
        m.head.intercept.data_mut()[0] = 0.3;
        let out = m.predict(&fr, &[10, 11]).unwrap();
        assert!(out.iter().flatten().all(|&v| v == 0.3));
    }

    #[test]
    fn zero_window_and_params_give_zero_branch_output() {
        let m = DeepTfp::zeros(ModelConfig::default(), small_spec(), 4, 4).unwrap();
        let mut g = Graph::new();
        let b = m.closeness.bind(&mut g);
        let w = g.constant(Tensor::zeros(&[2, 4, 4]));
        let out = b.forward(&mut g, w).unwrap();
        assert_eq!(g.value(out).shape(), &[4, 4]);
        assert!(g.value(out).data().iter().all(|&v| v == 0.0));
        let wrong = g.constant(Tensor::zeros(&[3, 4, 4]));
        assert!(matches!(b.forward(&mut g, wrong), Err(ModelError::ChannelMismatch { expected: 2, found: 3, .. })));
    }

    #[test]
    fn zeroed_units_preserve_input_conv_result() {
        let mut m = DeepTfp::zeros(ModelConfig::default(), small_spec(), 4, 4).unwrap();
        m.passthrough_closeness();
        let window: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut g = Graph::new();
        let b = m.closeness.bind(&mut g);
        let w = g.constant(Tensor::new(vec![2, 4, 4], window.clone()).unwrap());
        let out = b.forward(&mut g, w).unwrap();
        for (o, x) in g.value(out).data().iter().zip(&window[16..]) {
            assert!((o - x).abs() < 1e-15);
        }
    }

    #[test]
    fn fuse_examples() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::from_vec(vec![1.0, 2.0]));
        let p = g.constant(Tensor::from_vec(vec![5.0, -1.0]));
        let q = g.constant(Tensor::from_vec(vec![3.0, 3.0]));
        let one = g.constant(Tensor::full(&[2], 1.0));
        let two = g.constant(Tensor::full(&[2], 2.0));
        let zero = g.constant(Tensor::zeros(&[2]));
        let sel = fuse(&mut g, [c, p, q], [one, zero, zero]).unwrap();
        assert_eq!(g.value(sel).data(), &[1.0, 2.0]);
        let doubled = fuse(&mut g, [c, p, q], [two, zero, zero]).unwrap();
        assert_eq!(g.value(doubled).data(), &[2.0, 4.0]);
        let third = g.constant(Tensor::full(&[2], 1.0 / 3.0));
        let v = g.constant(Tensor::from_vec(vec![0.6, 1.5]));
        let avg = fuse(&mut g, [v, v, v], [third, third, third]).unwrap();
        for (a, b) in g.value(avg).data().iter().zip([0.6, 1.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        let short = g.constant(Tensor::zeros(&[3]));
        assert!(fuse(&mut g, [c, p, short], [one, one, one]).is_err());
    }

    #[test]
    fn ar_predict_examples() {
        let mut g = Graph::new();
        let h1 = g.constant(Tensor::from_vec(vec![4.0, -2.0]));
        let h2 = g.constant(Tensor::from_vec(vec![2.0, 6.0]));

        let theta = g.constant(Tensor::from_vec(vec![1.0]));
        let c0 = g.constant(Tensor::scalar(0.0));
        let p = ar_predict(&mut g, theta, c0, &[h1]).unwrap();
        assert_eq!(g.value(p).data(), g.value(h1).data());

        let theta2 = g.constant(Tensor::from_vec(vec![0.5, 0.5]));
        let c1 = g.constant(Tensor::scalar(1.0));
        let p = ar_predict(&mut g, theta2, c1, &[h1, h2]).unwrap();
        assert_eq!(g.value(p).data(), &[4.0, 3.0]);

        let zeros = g.constant(Tensor::zeros(&[2]));
        let c = g.constant(Tensor::scalar(0.25));
        let p = ar_predict(&mut g, zeros, c, &[h1, h2]).unwrap();
        assert_eq!(g.value(p).data(), &[0.25, 0.25]);

        assert!(matches!(
            ar_predict(&mut g, theta2, c1, &[h1]),
            Err(ModelError::ShortHistory { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn branches_share_structure() {
        let m = DeepTfp::new(ModelConfig::default(), WindowSpec::default(), 4, 4, 1).unwrap();
        let digests: Vec<String> = m.branches().iter().map(|b| b.structure_digest()).collect();
        assert_eq!(digests[0], digests[1]);
        assert_eq!(digests[1], digests[2]);
        assert_eq!(m.closeness.input_frames(), 3);
        assert_eq!(m.period.input_frames(), 2);
    }

    #[test]
    fn parameter_listing_is_consistent() {
        let m = DeepTfp::new(ModelConfig::default(), WindowSpec::default(), 4, 4, 1).unwrap();
        let n = m.parameters().len();
        assert_eq!(m.parameter_names().len(), n);
        assert_eq!(m.parameter_groups().len(), n);
        let names = m.parameter_names();
        assert_eq!(names[0], "closeness.input.kernel");
        assert_eq!(names[n - 1], "ar.intercept");
    }

    #[test]
    fn init_is_seeded_and_starts_as_persistence() {
        let a = DeepTfp::new(ModelConfig::default(), small_spec(), 4, 4, 9).unwrap();
        let b = DeepTfp::new(ModelConfig::default(), small_spec(), 4, 4, 9).unwrap();
        let c = DeepTfp::new(ModelConfig::default(), small_spec(), 4, 4, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.closeness.input.kernel, c.closeness.input.kernel);
        assert_eq!(a.head.theta.data(), &[1.0, 0.0, 0.0]);
        assert!(a.closeness.units.iter().all(|u| u.second.kernel.data().iter().all(|&w| w == 0.0)));

        // With θ = (1, 0, 0) and c = 0 the prediction is the fused output.
        let fr = frames(30, 16);
        let mut g = Graph::new();
        let params: Vec<Var> = a.parameters().into_iter().map(|p| g.constant(p.clone())).collect();
        let bound = a.bound(&params);
        let fused = a.fused(&mut g, &bound, &fr, 12).unwrap();
        let pred = a.predict(&fr, &[12]).unwrap();
        assert_eq!(g.value(fused).data(), &pred[0][..]);
    }

    #[test]
    fn deeper_zeroed_units_do_not_change_output() {
        let spec = small_spec();
        let fr = frames(30, 16);
        let shallow_cfg = ModelConfig {
            residual_units: 1,
            ..ModelConfig::default()
        };
        let deep_cfg = ModelConfig {
            residual_units: 4,
            ..ModelConfig::default()
        };
        let mut shallow = DeepTfp::new(shallow_cfg, spec, 4, 4, 3).unwrap();
        for u in [&mut shallow.closeness, &mut shallow.period, &mut shallow.trend] {
            for unit in &mut u.units {
                unit.first.kernel.data_mut().fill(0.0);
            }
        }
        let mut deep = DeepTfp::zeros(deep_cfg, spec, 4, 4).unwrap();
        for (d, s) in [&mut deep.closeness, &mut deep.period, &mut deep.trend]
            .into_iter()
            .zip([&shallow.closeness, &shallow.period, &shallow.trend])
        {
            d.input = s.input.clone();
            d.output = s.output.clone();
        }
        deep.fusion = shallow.fusion.clone();
        deep.head = shallow.head.clone();
        let ts = [20, 25];
        assert_eq!(shallow.predict(&fr, &ts).unwrap(), deep.predict(&fr, &ts).unwrap());
    }

    #[test]
    fn history_is_enforced() {
        let m = DeepTfp::new(ModelConfig::default(), small_spec(), 4, 4, 1).unwrap();
        assert_eq!(m.min_target(), 5 + 2);
        let fr = frames(30, 16);
        assert!(matches!(m.predict(&fr, &[6]), Err(ModelError::InsufficientHistory { t: 6, needed: 7 })));
        assert!(m.predict(&fr, &[30]).is_ok());
        assert!(m.predict(&fr, &[31]).is_err());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let cfg = ModelConfig {
            features: 2,
            residual_units: 1,
            kernel_size: 3,
            ar_lags: 2,
        };
        let mut m = DeepTfp::new(cfg, small_spec(), 3, 3, 11).unwrap();
        // Nonzero residual and fusion parameters so every path carries gradient.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for p in m.parameters_mut() {
            for v in p.data_mut() {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
        let fr = frames(20, 9);
        let ts = [8, 9, 12];
        let mut g = Graph::new();
        let params = m.bind(&mut g, &[]);
        let loss = m.batch_loss(&mut g, &params, &fr, &ts).unwrap();
        g.backward(loss).unwrap();
        assert!(g.relu_margin() > 1e-4, "rectifier too close to its kink for a stable check");
        let analytic: Vec<Tensor> = params.iter().map(|&p| g.grad(p).unwrap()).collect();

        let step = 1e-6;
        let base = m.clone();
        for (pi, grad) in analytic.iter().enumerate() {
            for j in 0..grad.len() {
                let eval = |delta: f64| {
                    let mut probe = base.clone();
                    probe.parameters_mut()[pi].data_mut()[j] += delta;
                    let mut g = Graph::new();
                    let params = probe.bind(&mut g, &[]);
                    let l = probe.batch_loss(&mut g, &params, &fr, &ts).unwrap();
                    g.value(l).item()
                };
                let numeric = (eval(step) - eval(-step)) / (2.0 * step);
                let a = grad.data()[j];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                assert!(rel < 1e-4 || (a - numeric).abs() < 1e-9, "param {pi}[{j}]: {a} vs {numeric}");
            }
        }
    }

    #[test]
    fn forward_is_bit_reproducible() {
        let m = DeepTfp::new(ModelConfig::default(), small_spec(), 4, 4, 5).unwrap();
        let fr = frames(30, 16);
        assert_eq!(m.predict(&fr, &[15, 16]).unwrap(), m.predict(&fr, &[15, 16]).unwrap());
    }
}
