//! `key = value` run configuration shared by every subcommand.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use deeptfp_core::datagen::CityConfig;
use deeptfp_core::model::ModelConfig;
use deeptfp_core::series::WindowSpec;
use deeptfp_core::trainer::TrainConfig;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config key {key}: {message}")]
    Key { key: String, message: String },
    #[error("config line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
}

/// Every key with a one-line description, in help order.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "seed for data generation, initialization and batch order"),
    ("rows", "grid rows of a generated city"),
    ("cols", "grid columns of a generated city"),
    ("start", "first generated month, YYYY-MM"),
    ("months", "generated months (at least 2)"),
    ("warmup_days", "days generated before the first month"),
    ("interval_minutes", "minutes per interval"),
    ("base_flow", "mean flow level of an average road"),
    ("daily_amplitude", "rush-hour peak height relative to the base"),
    ("weekend_damping", "fractional drop of weekend flows"),
    ("diffusion", "neighbor smoothing weight in [0, 0.25]"),
    ("incident_rate", "incident probability per road and interval"),
    ("incident_magnitude", "fractional flow drop during incidents"),
    ("incident_duration", "mean incident length in intervals"),
    ("noise", "noise standard deviation relative to flow"),
    ("closeness", "recent frames per input"),
    ("period_len", "daily-lagged frames per input"),
    ("trend_len", "weekly-lagged frames per input"),
    ("period", "period span in intervals"),
    ("trend", "trend span in intervals"),
    ("features", "feature maps per convolution"),
    ("residual_units", "residual units per branch"),
    ("kernel_size", "odd convolution kernel size"),
    ("ar_lags", "order of the autoregressive head"),
    ("lstm_hidden", "hidden size of the recurrent baseline"),
    ("batch_size", "instances per minibatch"),
    ("max_epochs", "epoch limit"),
    ("learning_rate", "optimizer step size"),
    ("patience", "epochs without validation gain before stopping; 0 disables"),
    ("optimizer", "sgd or adam"),
    ("clip_norm", "global gradient norm cap; 0 disables"),
    ("validation_fraction", "trailing share of training instances held out"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub city: CityConfig,
    pub spec: WindowSpec,
    pub model: ModelConfig,
    pub lstm_hidden: usize,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            city: CityConfig::default(),
            spec: WindowSpec::default(),
            model: ModelConfig::default(),
            lstm_hidden: 16,
            train: TrainConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Key {
        key: key.to_string(),
        message: format!("cannot parse {value:?}: {e}"),
    })
}

impl RunConfig {
    pub fn get(&self, key: &str) -> Option<String> {
        let c = &self.city;
        let t = &self.train;
        Some(match key {
            "seed" => c.seed.to_string(),
            "rows" => c.rows.to_string(),
            "cols" => c.cols.to_string(),
            "start" => c.start.to_string(),
            "months" => c.months.to_string(),
            "warmup_days" => c.warmup_days.to_string(),
            "interval_minutes" => c.interval_minutes.to_string(),
            "base_flow" => c.base_flow.to_string(),
            "daily_amplitude" => c.daily_amplitude.to_string(),
            "weekend_damping" => c.weekend_damping.to_string(),
            "diffusion" => c.diffusion.to_string(),
            "incident_rate" => c.incident_rate.to_string(),
            "incident_magnitude" => c.incident_magnitude.to_string(),
            "incident_duration" => c.incident_duration.to_string(),
            "noise" => c.noise.to_string(),
            "closeness" => self.spec.closeness.to_string(),
            "period_len" => self.spec.period_len.to_string(),
            "trend_len" => self.spec.trend_len.to_string(),
            "period" => self.spec.period.to_string(),
            "trend" => self.spec.trend.to_string(),
            "features" => self.model.features.to_string(),
            "residual_units" => self.model.residual_units.to_string(),
            "kernel_size" => self.model.kernel_size.to_string(),
            "ar_lags" => self.model.ar_lags.to_string(),
            "lstm_hidden" => self.lstm_hidden.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "max_epochs" => t.max_epochs.to_string(),
            "learning_rate" => t.learning_rate.to_string(),
            "patience" => t.patience.to_string(),
            "optimizer" => t.optimizer.to_string(),
            "clip_norm" => t.clip_norm.unwrap_or(0.0).to_string(),
            "validation_fraction" => t.validation_fraction.to_string(),
            _ => return None,
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let c = &mut self.city;
        let t = &mut self.train;
        match key {
            "seed" => {
                c.seed = parse(key, value)?;
                t.seed = c.seed;
            }
            "rows" => c.rows = parse(key, value)?,
            "cols" => c.cols = parse(key, value)?,
            "start" => c.start = parse(key, value)?,
            "months" => c.months = parse(key, value)?,
            "warmup_days" => c.warmup_days = parse(key, value)?,
            "interval_minutes" => c.interval_minutes = parse(key, value)?,
            "base_flow" => c.base_flow = parse(key, value)?,
            "daily_amplitude" => c.daily_amplitude = parse(key, value)?,
            "weekend_damping" => c.weekend_damping = parse(key, value)?,
            "diffusion" => c.diffusion = parse(key, value)?,
            "incident_rate" => c.incident_rate = parse(key, value)?,
            "incident_magnitude" => c.incident_magnitude = parse(key, value)?,
            "incident_duration" => c.incident_duration = parse(key, value)?,
            "noise" => c.noise = parse(key, value)?,
            "closeness" => self.spec.closeness = parse(key, value)?,
            "period_len" => self.spec.period_len = parse(key, value)?,
            "trend_len" => self.spec.trend_len = parse(key, value)?,
            "period" => self.spec.period = parse(key, value)?,
            "trend" => self.spec.trend = parse(key, value)?,
            "features" => self.model.features = parse(key, value)?,
            "residual_units" => self.model.residual_units = parse(key, value)?,
            "kernel_size" => self.model.kernel_size = parse(key, value)?,
            "ar_lags" => self.model.ar_lags = parse(key, value)?,
            "lstm_hidden" => self.lstm_hidden = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "max_epochs" => t.max_epochs = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "patience" => t.patience = parse(key, value)?,
            "optimizer" => t.optimizer = parse(key, value)?,
            "clip_norm" => {
                let v: f64 = parse(key, value)?;
                t.clip_norm = (v != 0.0).then_some(v);
            }
            "validation_fraction" => t.validation_fraction = parse(key, value)?,
            _ => {
                return Err(ConfigError::Key {
                    key: key.to_string(),
                    message: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        self.apply_text(&text)
    }

    /// Checks each part, naming the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let key_err = |key: &str, message: String| ConfigError::Key {
            key: key.to_string(),
            message,
        };
        self.city.validate().map_err(|e| match e {
            deeptfp_core::datagen::GenError::Config { key, message } => key_err(key, message),
            other => key_err("city", other.to_string()),
        })?;
        self.spec
            .validate()
            .map_err(|e| key_err("closeness/period_len/trend_len/period/trend", e.to_string()))?;
        self.model
            .validate()
            .map_err(|e| key_err("features/residual_units/kernel_size/ar_lags", e.to_string()))?;
        if self.lstm_hidden == 0 {
            return Err(key_err("lstm_hidden", "must be at least 1".into()));
        }
        self.train
            .validate()
            .map_err(|e| key_err("batch_size/learning_rate/patience/clip_norm/validation_fraction", e.to_string()))?;
        Ok(())
    }

    /// Help text listing every key with its default.
    pub fn keys_help() -> String {
        let defaults = RunConfig::default();
        let mut out = String::from("Config keys (file lines `key = value`, or `--set key=value`):\n");
        for (key, doc) in KEYS {
            let default = defaults.get(key).expect("documented key");
            out += &format!("  {key:<20} {doc} [default: {default}]\n");
        }
        out
    }
}
