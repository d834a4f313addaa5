use super::{DataError, Result};

/// Min-max scaling of flows onto `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalizer {
    min: f64,
    max: f64,
}

impl Normalizer {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(DataError::DegenerateRange { min, max });
        }
        Ok(Normalizer { min, max })
    }

    pub fn fit<'a>(values: impl IntoIterator<Item = &'a f64>) -> Result<Self> {
        let (min, max) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Self::new(min, max)
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// Vehicle counts per normalized unit.
    pub fn scale(&self) -> f64 {
        (self.max - self.min) / 2.0
    }

    pub fn transform(&self, x: f64) -> f64 {
        (x - self.min) / self.scale() - 1.0
    }

    pub fn inverse(&self, y: f64) -> f64 {
        (y + 1.0) * self.scale() + self.min
    }

    pub fn transform_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.transform(x)).collect()
    }

    pub fn inverse_all(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.inverse(y)).collect()
    }
}
