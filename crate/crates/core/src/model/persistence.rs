use super::{check_targets, stack_frames, Forecaster, ModelKind, ParamGroup, Result};
use crate::series::WindowSpec;
use crate::tensor::{Graph, Tensor, Var};

/// Predicts the previous interval's flow. Has no parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Persistence {
    spec: WindowSpec,
    rows: usize,
    cols: usize,
}

impl Persistence {
    pub fn new(spec: WindowSpec, rows: usize, cols: usize) -> Self {
        Persistence { spec, rows, cols }
    }
}

impl Forecaster for Persistence {
    fn kind(&self) -> ModelKind {
        ModelKind::Persistence
    }

    fn grid(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn window_spec(&self) -> &WindowSpec {
        &self.spec
    }

    fn init_params(&mut self, _seed: u64) {}

    fn parameters(&self) -> Vec<&Tensor> {
        Vec::new()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        Vec::new()
    }

    fn parameter_names(&self) -> Vec<String> {
        Vec::new()
    }

    fn parameter_groups(&self) -> Vec<ParamGroup> {
        Vec::new()
    }

    fn min_target(&self) -> usize {
        1
    }

    fn forward(&self, g: &mut Graph, _params: &[Var], frames: &[Vec<f64>], ts: &[usize]) -> Result<Var> {
        check_targets(ts, self.min_target(), frames.len())?;
        let prev: Vec<usize> = ts.iter().map(|&t| t - 1).collect();
        Ok(g.constant(stack_frames(frames, &prev, self.rows, self.cols)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeats_previous_frame() {
        let m = Persistence::new(WindowSpec::default(), 1, 2);
        let frames = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        assert_eq!(m.predict(&frames, &[1, 3]).unwrap(), vec![vec![1.0, 2.0], vec![5.0, 6.0]]);
        assert!(m.predict(&frames, &[0]).is_err());
        assert_eq!(m.parameter_count(), 0);
    }
}
